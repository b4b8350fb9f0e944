use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};
use crate::plan::{StudyPlan, REAL_CONDITION};
use crate::store::RatingRecord;
use msynth_core::evalmetrics::{wilcoxon_rank_sum, RankSumResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub n_ratings: usize,
    /// Mean of the per-rater means, so every rater weighs equally.
    pub mean_stars: f64,
    pub per_rater_means: BTreeMap<String, f64>,
    /// Quartiles over the per-rater means.
    pub quartiles: BoxStats,
    /// Rank-sum comparison of per-rater means against the real images;
    /// absent for the real condition or when a side has fewer than 3 raters.
    pub vs_real: Option<RankSumResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub conditions: Vec<ConditionSummary>,
    pub warnings: Vec<String>,
}

/// Linear-interpolation quantile of sorted data (the common "type 7").
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn box_stats(values: &[f64]) -> BoxStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    BoxStats {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
    }
}

pub fn aggregate_ratings(ratings: &[RatingRecord], plan: &StudyPlan) -> Result<StudyReport> {
    // condition → rater → stars
    let mut grouped: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for label in plan.counts.keys() {
        grouped.insert(label, BTreeMap::new());
    }
    let mut seen = std::collections::HashSet::new();
    for r in ratings {
        let trial = plan.trial(&r.rater_id, r.trial_id).ok_or_else(|| StudyError::UnknownTrial {
            rater: r.rater_id.clone(),
            trial: r.trial_id,
        })?;
        if !seen.insert((&r.rater_id, r.trial_id)) {
            return Err(StudyError::Duplicate {
                rater: r.rater_id.clone(),
                trial: r.trial_id,
            });
        }
        if !(1..=6).contains(&r.stars) {
            return Err(StudyError::InvalidStars(r.stars as i64));
        }
        grouped
            .entry(trial.condition.as_str())
            .or_default()
            .entry(r.rater_id.as_str())
            .or_default()
            .push(r.stars as f64);
    }

    let mut warnings = Vec::new();
    let mut summaries = Vec::new();
    for (label, by_rater) in &grouped {
        if by_rater.is_empty() {
            let w = format!("condition {label:?} has no ratings and is excluded");
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        let per_rater_means: BTreeMap<String, f64> = by_rater
            .iter()
            .map(|(r, v)| (r.to_string(), v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        let means: Vec<f64> = per_rater_means.values().copied().collect();
        summaries.push(ConditionSummary {
            condition: label.to_string(),
            n_ratings: by_rater.values().map(Vec::len).sum(),
            mean_stars: means.iter().sum::<f64>() / means.len() as f64,
            quartiles: box_stats(&means),
            per_rater_means,
            vs_real: None,
        });
    }

    let real: Option<Vec<f64>> = summaries
        .iter()
        .find(|s| s.condition == REAL_CONDITION)
        .map(|s| s.per_rater_means.values().copied().collect());
    for s in summaries.iter_mut().filter(|s| s.condition != REAL_CONDITION) {
        let Some(real) = &real else { continue };
        let means: Vec<f64> = s.per_rater_means.values().copied().collect();
        match wilcoxon_rank_sum(&means, real) {
            Ok(r) => s.vs_real = Some(r),
            Err(e) => warnings.push(format!("no rank-sum test for {:?}: {e}", s.condition)),
        }
    }
    Ok(StudyReport {
        conditions: summaries,
        warnings,
    })
}
