//! The valence–energy plane and its nine named mood regions.
//!
//! The unit square is split into a 3×3 grid with boundaries at 1/3 and 2/3
//! on each axis. Valence runs along the horizontal axis, energy along the
//! vertical one. Cells are half-open `[lo, hi)` except for the top row and
//! right column, which also include 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoodError {
    #[error("{axis} must lie in [0, 1], got {value}")]
    OutOfRange { axis: &'static str, value: f64 },
    #[error("unknown mood label {0:?}")]
    UnknownLabel(String),
}

pub(crate) fn check_unit(axis: &'static str, value: f64) -> Result<f64, MoodError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(MoodError::OutOfRange { axis, value })
    }
}

/// A point on the valence–energy plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoodPoint {
    valence: f64,
    energy: f64,
}

impl MoodPoint {
    pub fn new(valence: f64, energy: f64) -> Result<Self, MoodError> {
        Ok(Self {
            valence: check_unit("valence", valence)?,
            energy: check_unit("energy", energy)?,
        })
    }

    pub fn valence(&self) -> f64 {
        self.valence
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn category(&self) -> MoodCategory {
        category_of(*self)
    }
}

impl<'de> Deserialize<'de> for MoodPoint {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            valence: f64,
            energy: f64,
        }
        let raw = Raw::deserialize(de)?;
        MoodPoint::new(raw.valence, raw.energy).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoodCategory {
    Sad,
    Distressed,
    Angry,
    Tired,
    Neutral,
    Stimulated,
    Relaxed,
    Happy,
    Excited,
}

impl MoodCategory {
    pub const ALL: [MoodCategory; 9] = [
        MoodCategory::Sad,
        MoodCategory::Distressed,
        MoodCategory::Angry,
        MoodCategory::Tired,
        MoodCategory::Neutral,
        MoodCategory::Stimulated,
        MoodCategory::Relaxed,
        MoodCategory::Happy,
        MoodCategory::Excited,
    ];

    /// Grid cell as (valence column, energy row), each in 0..3.
    pub fn cell(self) -> (usize, usize) {
        match self {
            MoodCategory::Sad => (0, 0),
            MoodCategory::Distressed => (0, 1),
            MoodCategory::Angry => (0, 2),
            MoodCategory::Tired => (1, 0),
            MoodCategory::Neutral => (1, 1),
            MoodCategory::Stimulated => (1, 2),
            MoodCategory::Relaxed => (2, 0),
            MoodCategory::Happy => (2, 1),
            MoodCategory::Excited => (2, 2),
        }
    }

    fn from_cell(column: usize, row: usize) -> MoodCategory {
        // ALL is listed column-major, three rows per column.
        MoodCategory::ALL[column * 3 + row]
    }

    pub fn label(self) -> &'static str {
        match self {
            MoodCategory::Sad => "sad",
            MoodCategory::Distressed => "distressed",
            MoodCategory::Angry => "angry",
            MoodCategory::Tired => "tired",
            MoodCategory::Neutral => "neutral",
            MoodCategory::Stimulated => "stimulated",
            MoodCategory::Relaxed => "relaxed",
            MoodCategory::Happy => "happy",
            MoodCategory::Excited => "excited",
        }
    }

    pub fn region(self) -> MoodRegion {
        let (column, row) = self.cell();
        MoodRegion {
            category: self,
            valence_interval: (BOUNDS[column], BOUNDS[column + 1]),
            energy_interval: (BOUNDS[row], BOUNDS[row + 1]),
        }
    }

    pub fn target_point(self) -> MoodPoint {
        target_point(self)
    }
}

impl fmt::Display for MoodCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MoodCategory {
    type Err = MoodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_mood(s)
    }
}

const BOUNDS: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

/// One cell of the 3×3 partition. Intervals are `[lo, hi)`; a `hi` of 1 is inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoodRegion {
    pub category: MoodCategory,
    pub valence_interval: (f64, f64),
    pub energy_interval: (f64, f64),
}

impl MoodRegion {
    pub fn contains(&self, point: MoodPoint) -> bool {
        in_interval(point.valence, self.valence_interval)
            && in_interval(point.energy, self.energy_interval)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.valence_interval.0 + self.valence_interval.1) / 2.0,
            (self.energy_interval.0 + self.energy_interval.1) / 2.0,
        )
    }
}

fn in_interval(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && (x < hi || (hi == 1.0 && x <= 1.0))
}

fn band(x: f64) -> usize {
    if x >= BOUNDS[2] {
        2
    } else if x >= BOUNDS[1] {
        1
    } else {
        0
    }
}

pub fn category_of(point: MoodPoint) -> MoodCategory {
    MoodCategory::from_cell(band(point.valence), band(point.energy))
}

/// The center of the category's cell.
pub fn target_point(category: MoodCategory) -> MoodPoint {
    let (v, e) = category.region().center();
    MoodPoint { valence: v, energy: e }
}

pub fn parse_mood(label: &str) -> Result<MoodCategory, MoodError> {
    let wanted = label.trim();
    MoodCategory::ALL
        .into_iter()
        .find(|c| c.label().eq_ignore_ascii_case(wanted))
        .ok_or_else(|| MoodError::UnknownLabel(label.to_string()))
}
