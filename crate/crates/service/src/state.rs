use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex as StdMutex, RwLock};

use moodtune_core::catalog::{load_fixture_catalog, LiveCatalog, LiveEndpoints, Secret, UserSession};
use moodtune_core::pipeline::BlindLabel;
use moodtune_core::{
    CatalogProvider, ExperimentStore, PipelineConfig, RecommendationPair, SessionMode, Track,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::sync::Mutex;
use uuid::Uuid;

use crate::config::{ConfigError, ServiceConfig, ENV_FIXTURE_PATH};
use crate::StartupError;

pub struct ActivePair {
    pub pair: RecommendationPair,
    pub rated: HashSet<BlindLabel>,
}

pub struct SessionState {
    pub user: UserSession,
    pub cached_top: Option<Vec<Track>>,
    pub active: Option<ActivePair>,
    pub rng: ChaCha8Rng,
}

pub struct AppState {
    pub(crate) store: Arc<ExperimentStore>,
    pub(crate) catalog: Arc<dyn CatalogProvider>,
    pub(crate) live: Option<Arc<LiveCatalog>>,
    pub(crate) mode: SessionMode,
    pub(crate) pipeline: PipelineConfig,
    pub(crate) admin_token: Option<Secret>,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<SessionState>>>>,
    master_rng: StdMutex<ChaCha8Rng>,
}

impl AppState {
    pub fn new(
        mode: SessionMode,
        catalog: Arc<dyn CatalogProvider>,
        store: Arc<ExperimentStore>,
        pipeline: PipelineConfig,
        seed: Option<u64>,
    ) -> Self {
        let master = match seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_os_rng(),
        };
        Self {
            store,
            catalog,
            live: None,
            mode,
            pipeline,
            admin_token: None,
            sessions: RwLock::new(HashMap::new()),
            master_rng: StdMutex::new(master),
        }
    }

    /// Live mode: `live` answers both catalog calls and the login flow.
    pub fn with_live(mut self, live: Arc<LiveCatalog>) -> Self {
        self.catalog = live.clone();
        self.live = Some(live);
        self.mode = SessionMode::Live;
        self
    }

    pub fn with_admin_token(mut self, token: Option<Secret>) -> Self {
        self.admin_token = token;
        self
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, StartupError> {
        let store = Arc::new(match &config.store_path {
            Some(path) => ExperimentStore::open(path)?,
            None => ExperimentStore::in_memory(),
        });
        let state = match config.mode {
            SessionMode::Offline => {
                let path = config
                    .fixture_path
                    .as_ref()
                    .ok_or(ConfigError::Missing(ENV_FIXTURE_PATH))?;
                let catalog = load_fixture_catalog(path)?;
                Self::new(
                    SessionMode::Offline,
                    Arc::new(catalog),
                    store,
                    config.pipeline.clone(),
                    config.seed,
                )
            }
            SessionMode::Live => {
                let credentials = config
                    .credentials
                    .clone()
                    .ok_or(ConfigError::Missing("MOODTUNE_TASTE_CLIENT_ID"))?;
                let live = Arc::new(LiveCatalog::new(
                    credentials,
                    LiveEndpoints::default(),
                    config.callback_uri(),
                ));
                Self::new(
                    SessionMode::Live,
                    live.clone(),
                    store,
                    config.pipeline.clone(),
                    config.seed,
                )
                .with_live(live)
            }
        };
        Ok(state.with_admin_token(config.admin_token.clone()))
    }

    pub fn store(&self) -> &ExperimentStore {
        &self.store
    }

    /// Seeded from the master stream and the session id, so a session
    /// restored after a restart does not replay another session's draws.
    fn fresh_rng(&self, id: Uuid) -> ChaCha8Rng {
        let draw: u64 = self.master_rng.lock().expect("rng lock poisoned").random();
        let (hi, lo) = id.as_u64_pair();
        ChaCha8Rng::seed_from_u64(draw ^ hi ^ lo.rotate_left(32))
    }

    fn fresh_session(&self, id: Uuid) -> Arc<Mutex<SessionState>> {
        Arc::new(Mutex::new(SessionState {
            user: UserSession::anonymous(),
            cached_top: None,
            active: None,
            rng: self.fresh_rng(id),
        }))
    }

    pub(crate) fn register(&self, id: Uuid) -> Arc<Mutex<SessionState>> {
        let entry = self.fresh_session(id);
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, entry.clone());
        entry
    }

    /// Known sessions, including ones persisted by an earlier run.
    pub(crate) fn session(&self, id: Uuid) -> Option<Arc<Mutex<SessionState>>> {
        if let Some(s) = self.sessions.read().expect("session map poisoned").get(&id) {
            return Some(s.clone());
        }
        self.store.session(id)?;
        let mut map = self.sessions.write().expect("session map poisoned");
        if let Some(s) = map.get(&id) {
            return Some(s.clone());
        }
        let entry = self.fresh_session(id);
        map.insert(id, entry.clone());
        Some(entry)
    }
}
