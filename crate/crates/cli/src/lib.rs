//! Operator commands for the moodtune experiment.
//!
//! `serve`, `ingest`, `simulate` and `analyze` run locally. `session`,
//! `pair`, `rate` and `export` talk to a running service.

pub mod analyze;
pub mod error;
pub mod ingest;
pub mod simulate;

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use moodtune_client::{ExportQuery, MoodtuneClient};
use moodtune_core::store::read_export;
use moodtune_core::{MoodCategory, RatingSample, SessionMode};
use moodtune_service::{env as service_env, ServiceConfig};
use serde::Serialize;
use uuid::Uuid;

pub use analyze::AnalysisReport;
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    /// Pretty-printed JSON.
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Offline,
    Live,
}

impl From<ModeArg> for SessionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Offline => SessionMode::Offline,
            ModeArg::Live => SessionMode::Live,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "moodtune", version, about = "Mood-assisted music recommendation experiments")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service. Unset flags fall back to MOODTUNE_* variables.
    Serve {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a fixture catalog and report its contents.
    Ingest {
        #[arg(long)]
        fixture: PathBuf,
    },
    /// Generate pairs offline and compare the two arms.
    Simulate {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        mood: MoodCategory,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Analyze exported ratings, or rating counts given directly.
    Analyze {
        #[arg(long, required_unless_present_all = ["control_counts", "treatment_counts"])]
        export: Option<PathBuf>,
        /// Counts of ratings 1 to 5, comma separated.
        #[arg(long, conflicts_with = "export", requires = "treatment_counts")]
        control_counts: Option<String>,
        #[arg(long, conflicts_with = "export", requires = "control_counts")]
        treatment_counts: Option<String>,
    },
    /// Start a session on a running service.
    Session {
        #[command(flatten)]
        server: ServerArgs,
        #[arg(long)]
        pseudonym: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Request a blinded pair for a mood.
    Pair {
        #[command(flatten)]
        server: ServerArgs,
        #[arg(long)]
        session: Uuid,
        #[arg(long)]
        mood: String,
    },
    /// Rate one song of the current pair.
    Rate {
        #[command(flatten)]
        server: ServerArgs,
        #[arg(long)]
        session: Uuid,
        #[arg(long)]
        pair: Uuid,
        #[arg(long)]
        label: String,
        #[arg(long)]
        rating: i64,
        #[arg(long)]
        comment: Option<String>,
    },
    /// Download the ratings export as CSV.
    Export {
        #[command(flatten)]
        server: ServerArgs,
        #[arg(long, env = "MOODTUNE_ADMIN_TOKEN", hide_env_values = true)]
        admin_token: String,
        #[arg(long)]
        session: Option<Uuid>,
        #[arg(long)]
        mood: Option<String>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        until: Option<String>,
        #[arg(long)]
        complete_only: bool,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServerArgs {
    #[arg(long, env = "MOODTUNE_SERVER", default_value = "http://127.0.0.1:8080")]
    pub server: String,
}

impl ServerArgs {
    fn client(&self) -> Result<MoodtuneClient, CliError> {
        Ok(MoodtuneClient::new(&self.server)?)
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, format: Format, value: &T, text: impl FnOnce(&T) -> String) -> Result<(), CliError> {
    match format {
        Format::Text => out.write_all(text(value).as_bytes())?,
        Format::Machine => {
            serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Service configuration from the environment with flags taking precedence.
pub fn serve_config(
    mode: Option<ModeArg>,
    fixture: Option<PathBuf>,
    bind: Option<String>,
    seed: Option<u64>,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<ServiceConfig, CliError> {
    let mut overrides = HashMap::new();
    if let Some(m) = mode {
        let value = match m {
            ModeArg::Offline => "offline",
            ModeArg::Live => "live",
        };
        overrides.insert(service_env::ENV_MODE, value.to_string());
    }
    if let Some(f) = fixture {
        overrides.insert(service_env::ENV_FIXTURE_PATH, f.display().to_string());
    }
    if let Some(b) = bind {
        overrides.insert(service_env::ENV_BIND_ADDR, b);
    }
    if let Some(s) = seed {
        overrides.insert(service_env::ENV_SEED, s.to_string());
    }
    ServiceConfig::from_lookup(|name| overrides.get(name).cloned().or_else(|| lookup(name)))
        .map_err(|e| CliError::Validation(e.to_string()))
}

async fn shutdown_signal() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
    tracing::info!("shutting down");
}

pub async fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let format = cli.format;
    match cli.command {
        Command::Serve { mode, fixture, bind, seed } => {
            let config = serve_config(mode, fixture, bind, seed, |name| std::env::var(name).ok())?;
            moodtune_service::serve(config, shutdown_signal()).await?;
        }
        Command::Ingest { fixture } => {
            let report = ingest::ingest(&fixture)?;
            emit(out, format, &report, ingest::to_text)?;
            if let Some(first) = report.violations.first() {
                return Err(CliError::Validation(format!(
                    "{} schema violation(s), first at {} {}",
                    report.violations.len(),
                    first.location,
                    first.field
                )));
            }
        }
        Command::Simulate { fixture, mood, trials, seed } => {
            let report = simulate::simulate(&fixture, mood, trials, seed).await?;
            emit(out, format, &report, simulate::to_text)?;
        }
        Command::Analyze { export, control_counts, treatment_counts } => {
            let report = match (export, control_counts, treatment_counts) {
                (Some(path), _, _) => {
                    let file = std::fs::File::open(&path)
                        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
                    AnalysisReport::from_rows(&read_export(std::io::BufReader::new(file))?)?
                }
                (None, Some(c), Some(t)) => AnalysisReport::from_sample(&RatingSample::from_histograms(
                    analyze::parse_counts(&c)?,
                    analyze::parse_counts(&t)?,
                ))?,
                _ => return Err(CliError::Validation("give --export or both count flags".into())),
            };
            emit(out, format, &report, AnalysisReport::to_text)?;
        }
        Command::Session { server, pseudonym, mode } => {
            let created = server.client()?.create_session(&pseudonym, mode.map(Into::into)).await?;
            emit(out, format, &created, |c| match &c.auth_redirect {
                Some(url) => format!("{}\nlog in at {url}\n", c.session_id),
                None => format!("{}\n", c.session_id),
            })?;
        }
        Command::Pair { server, session, mood } => {
            let pair = server.client()?.request_pair(session, &mood).await?;
            emit(out, format, &pair, |p| {
                let mut s = format!("pair {}\n", p.pair_id);
                for item in &p.items {
                    s.push_str(&format!("  {}  {} / {}\n", item.label, item.title, item.artist));
                }
                s
            })?;
        }
        Command::Rate { server, session, pair, label, rating, comment } => {
            let reply = server.client()?.submit_rating(session, pair, &label, rating, comment).await?;
            emit(out, format, &reply, |r| {
                format!("{}{}\n", r.status, if r.pair_closed { ", pair closed" } else { "" })
            })?;
        }
        Command::Export { server, admin_token, session, mood, from, until, complete_only, out: path } => {
            let query = ExportQuery {
                session_id: session,
                mood,
                from,
                until,
                complete_only,
            };
            let csv = server.client()?.with_admin_token(admin_token).export(&query).await?;
            match path {
                Some(p) => std::fs::write(&p, csv)
                    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?,
                None => out.write_all(csv.as_bytes())?,
            }
        }
    }
    Ok(())
}
