use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};
use crate::plan::{StudyPlan, TrialRecord};

pub const RATINGS_FILE: &str = "ratings.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub trial_id: usize,
    pub rater_id: String,
    pub stars: u8,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

/// Ratings for one plan, persisted as an append-only JSON-lines log.
///
/// Writes go through a single mutex-guarded file handle and are synced
/// before they become visible; reads take a snapshot of the in-memory map.
pub struct RatingStore {
    plan: StudyPlan,
    path: PathBuf,
    log: Mutex<File>,
    ratings: RwLock<HashMap<(String, usize), RatingRecord>>,
}

impl RatingStore {
    /// Opens (or creates) `dir/ratings.jsonl`, replaying stored ratings.
    pub fn open(dir: &Path, plan: StudyPlan) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| StudyError::io(dir, e))?;
        let path = dir.join(RATINGS_FILE);
        let ratings = if path.exists() {
            read_ratings(&path)?
        } else {
            Vec::new()
        };
        let mut map = HashMap::new();
        for r in ratings {
            if plan.trial(&r.rater_id, r.trial_id).is_none() {
                return Err(StudyError::Plan(format!(
                    "{} holds a rating for unknown trial {} of rater {:?}",
                    path.display(),
                    r.trial_id,
                    r.rater_id
                )));
            }
            map.entry((r.rater_id.clone(), r.trial_id)).or_insert(r);
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StudyError::io(&path, e))?;
        let bytes = std::fs::read(&path).map_err(|e| StudyError::io(&path, e))?;
        if bytes.last().is_some_and(|&b| b != b'\n') {
            // drop the unacknowledged torn tail so later appends start on a fresh line
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            log.set_len(keep as u64).map_err(|e| StudyError::io(&path, e))?;
            log.sync_data().map_err(|e| StudyError::io(&path, e))?;
        }
        Ok(RatingStore {
            plan,
            path,
            log: Mutex::new(log),
            ratings: RwLock::new(map),
        })
    }

    pub fn plan(&self) -> &StudyPlan {
        &self.plan
    }

    /// First trial in presentation order the rater has not rated yet.
    pub fn next_trial(&self, rater: &str) -> Result<Option<&TrialRecord>> {
        let trials = self
            .plan
            .trials(rater)
            .ok_or_else(|| StudyError::UnknownRater(rater.to_string()))?;
        let ratings = self.ratings.read();
        Ok(trials.iter().find(|t| !ratings.contains_key(&(rater.to_string(), t.trial_id))))
    }

    pub fn get(&self, rater: &str, trial: usize) -> Option<RatingRecord> {
        self.ratings.read().get(&(rater.to_string(), trial)).cloned()
    }

    /// Validates, appends and syncs a rating; a second rating for the same
    /// trial is rejected and leaves the stored one unchanged.
    pub fn submit(&self, rater: &str, trial: usize, stars: i64) -> Result<RatingRecord> {
        if self.plan.trials(rater).is_none() {
            return Err(StudyError::UnknownRater(rater.to_string()));
        }
        if self.plan.trial(rater, trial).is_none() {
            return Err(StudyError::UnknownTrial {
                rater: rater.to_string(),
                trial,
            });
        }
        if !(1..=6).contains(&stars) {
            return Err(StudyError::InvalidStars(stars));
        }
        let mut log = self.log.lock();
        let key = (rater.to_string(), trial);
        if self.ratings.read().contains_key(&key) {
            return Err(StudyError::Duplicate {
                rater: rater.to_string(),
                trial,
            });
        }
        let record = RatingRecord {
            trial_id: trial,
            rater_id: rater.to_string(),
            stars: stars as u8,
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        log.write_all(&line).map_err(|e| StudyError::io(&self.path, e))?;
        log.sync_data().map_err(|e| StudyError::io(&self.path, e))?;
        self.ratings.write().insert(key, record.clone());
        Ok(record)
    }

    /// Every stored rating, ordered by rater then trial.
    pub fn snapshot(&self) -> Vec<RatingRecord> {
        let mut all: Vec<RatingRecord> = self.ratings.read().values().cloned().collect();
        all.sort_by(|a, b| (&a.rater_id, a.trial_id).cmp(&(&b.rater_id, b.trial_id)));
        all
    }
}

/// Reads a ratings log. A torn final line (a write interrupted before it
/// was acknowledged) is skipped with a warning.
pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    let file = File::open(path).map_err(|e| StudyError::io(path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| StudyError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("{}: ignoring incomplete last line: {e}", path.display());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}
