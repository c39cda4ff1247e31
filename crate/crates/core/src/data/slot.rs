use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SLOT_SECONDS: i64 = 900;
pub const SLOTS_PER_DAY: usize = 96;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// A 15-minute interval counted from the study start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeSlot {
    pub index: usize,
    pub slot_of_day: usize,
    pub day_index: usize,
}

impl TimeSlot {
    pub fn from_index(index: usize) -> Self {
        TimeSlot {
            index,
            slot_of_day: index % SLOTS_PER_DAY,
            day_index: index / SLOTS_PER_DAY,
        }
    }

    pub fn hour_of_day(&self) -> usize {
        self.slot_of_day / 4
    }

    pub fn next(&self) -> Self {
        Self::from_index(self.index + 1)
    }
}

pub fn slot_of(timestamp: i64, study_start: i64) -> Result<TimeSlot> {
    if timestamp < study_start {
        return Err(Error::Rejected {
            what: "timestamp",
            detail: format!("{timestamp} precedes study start {study_start}"),
        });
    }
    Ok(TimeSlot::from_index(
        ((timestamp - study_start) / SLOT_SECONDS) as usize,
    ))
}

/// Half-open study period `[start, start + n_days days)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyWindow {
    /// UTC seconds; 2017-09-01T00:00:00Z by default.
    pub start: i64,
    pub n_days: usize,
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow {
            start: 1_504_224_000,
            n_days: 110,
        }
    }
}

impl StudyWindow {
    pub fn end(&self) -> i64 {
        self.start + self.n_days as i64 * SECONDS_PER_DAY
    }

    pub fn contains(&self, timestamp: i64) -> bool {
        (self.start..self.end()).contains(&timestamp)
    }

    pub fn n_slots(&self) -> usize {
        self.n_days * SLOTS_PER_DAY
    }
}
