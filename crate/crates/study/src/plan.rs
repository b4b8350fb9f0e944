use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};
use msynth_core::{name_id, read_json, stream_rng, write_json_pretty};

/// Label used for trials whose right image is the real target.
pub const REAL_CONDITION: &str = "real";
pub const DEFAULT_PER_CONDITION: usize = 35;
pub const DEFAULT_REAL: usize = 70;

/// A left (real source) / right (candidate) image pair, as paths relative
/// to the image root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePair {
    pub left: String,
    pub right: String,
}

/// Candidate pairs per synthetic condition plus the real-target pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImagePools {
    pub synthetic: BTreeMap<String, Vec<ImagePair>>,
    pub real: Vec<ImagePair>,
}

impl ImagePools {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(read_json(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub rater_id: String,
    pub left: String,
    pub right: String,
    pub right_is_real: bool,
    pub condition: String,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub seed: u64,
    pub n_per_condition: usize,
    pub n_real: usize,
    /// Trials per rater, in presentation order.
    pub raters: BTreeMap<String, Vec<TrialRecord>>,
    /// Planned trials per condition for each rater.
    pub counts: BTreeMap<String, usize>,
}

impl StudyPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let plan: StudyPlan = read_json(path)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(write_json_pretty(path, self)?)
    }

    pub fn trials(&self, rater: &str) -> Option<&[TrialRecord]> {
        self.raters.get(rater).map(Vec::as_slice)
    }

    pub fn trial(&self, rater: &str, trial: usize) -> Option<&TrialRecord> {
        self.trials(rater)?.iter().find(|t| t.trial_id == trial)
    }

    pub fn total_per_rater(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (rater, trials) in &self.raters {
            validate_rater_id(rater)?;
            for (i, t) in trials.iter().enumerate() {
                if t.order != i || t.trial_id != i || &t.rater_id != rater {
                    return Err(StudyError::Plan(format!("trial {i} of rater {rater:?} is out of sequence")));
                }
                if t.right_is_real != (t.condition == REAL_CONDITION) {
                    return Err(StudyError::Plan(format!("trial {i} of rater {rater:?} mislabels its right image")));
                }
            }
        }
        Ok(())
    }
}

/// Rater ids appear in URLs, so they are restricted to `[A-Za-z0-9_-]{1,64}`.
pub fn validate_rater_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
    if !ok {
        return Err(StudyError::Plan(format!("invalid rater id {id:?}")));
    }
    Ok(())
}

/// Draws `n_per_condition` pairs from every synthetic pool and `n_real`
/// from the real pool, without replacement, and shuffles them into one
/// presentation sequence per rater. Trial ids are assigned after the
/// shuffle, so they carry no information about the right image.
pub fn plan_study(pools: &ImagePools, n_per_condition: usize, n_real: usize, seed: u64, raters: &[String]) -> Result<StudyPlan> {
    if raters.is_empty() {
        return Err(StudyError::Plan("at least one rater is required".into()));
    }
    if pools.synthetic.contains_key(REAL_CONDITION) {
        return Err(StudyError::Plan(format!("{REAL_CONDITION:?} is reserved for real images")));
    }
    let mut counts = BTreeMap::new();
    for (label, pool) in &pools.synthetic {
        check_pool(label, pool.len(), n_per_condition)?;
        counts.insert(label.clone(), n_per_condition);
    }
    check_pool(REAL_CONDITION, pools.real.len(), n_real)?;
    counts.insert(REAL_CONDITION.to_string(), n_real);

    let mut plan = BTreeMap::new();
    for rater in raters {
        validate_rater_id(rater)?;
        if plan.contains_key(rater) {
            return Err(StudyError::Plan(format!("rater {rater:?} listed twice")));
        }
        let mut rng = stream_rng(seed, &[name_id(rater)]);
        let mut drawn: Vec<(&str, &ImagePair)> = Vec::new();
        for (label, pool) in &pools.synthetic {
            for i in index::sample(&mut rng, pool.len(), n_per_condition) {
                drawn.push((label.as_str(), &pool[i]));
            }
        }
        for i in index::sample(&mut rng, pools.real.len(), n_real) {
            drawn.push((REAL_CONDITION, &pools.real[i]));
        }
        drawn.shuffle(&mut rng);
        let trials = drawn
            .into_iter()
            .enumerate()
            .map(|(i, (label, pair))| TrialRecord {
                trial_id: i,
                rater_id: rater.clone(),
                left: pair.left.clone(),
                right: pair.right.clone(),
                right_is_real: label == REAL_CONDITION,
                condition: label.to_string(),
                order: i,
            })
            .collect();
        plan.insert(rater.clone(), trials);
    }
    Ok(StudyPlan {
        seed,
        n_per_condition,
        n_real,
        raters: plan,
        counts,
    })
}

fn check_pool(label: &str, have: usize, want: usize) -> Result<()> {
    if have < want {
        return Err(StudyError::Capacity(format!(
            "pool {label:?} holds {have} images, {want} requested"
        )));
    }
    Ok(())
}
