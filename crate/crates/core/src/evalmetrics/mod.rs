//! PSNR and MAE on the [0, 1] intensity scale, per-condition evaluation
//! tables, and exact/approximate Wilcoxon tests.

mod wilcoxon;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::enumerate_subsets;
use crate::dataio::{CorpusManifest, TargetSlice};
use crate::error::{Error, Result};
use crate::synthesis::Synthesizer;

pub use wilcoxon::{wilcoxon_rank_sum, wilcoxon_signed_rank, RankSumResult, SignedRankResult, EXACT_RANK_SUM_MAX, EXACT_SIGNED_RANK_MAX};

fn check_lengths(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("images of {} and {} pixels", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Shape("empty images".into()));
    }
    Ok(())
}

/// Mean squared error after mapping both images from [-1, 1] to [0, 1].
pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    check_lengths(a, b)?;
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x as f64 - y as f64) * 0.5;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// 10·log10(1 / MSE) with peak 1; `f64::INFINITY` when the images agree.
pub fn psnr(a: &[f32], b: &[f32]) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Mean absolute error on the [0, 1] scale.
pub fn mae(a: &[f32], b: &[f32]) -> Result<f64> {
    check_lengths(a, b)?;
    let sum: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs() * 0.5).sum();
    Ok(sum / a.len() as f64)
}

pub fn psnr_slices(a: &TargetSlice, b: &TargetSlice) -> Result<f64> {
    same_shape(a, b)?;
    psnr(&a.data, &b.data)
}

pub fn mae_slices(a: &TargetSlice, b: &TargetSlice) -> Result<f64> {
    same_shape(a, b)?;
    mae(&a.data, &b.data)
}

fn same_shape(a: &TargetSlice, b: &TargetSlice) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!("{}x{} vs {}x{}", a.height, a.width, b.height, b.width)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub condition: String,
    pub bits: Vec<u8>,
    /// Mean PSNR in dB; `None` when every slice was reproduced exactly.
    pub psnr: Option<f64>,
    pub psnr_infinite: bool,
    pub mae: f64,
    pub n_slices: usize,
    /// Per-slice values in test-manifest order, for paired tests.
    pub per_slice_psnr: Vec<Option<f64>>,
    pub per_slice_mae: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: String,
    pub modalities: Vec<String>,
    pub rows: Vec<MetricRow>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Synthesizes every test slice under each of the 2ⁿ−1 conditions and
/// averages PSNR/MAE per condition, in canonical subset order.
pub fn evaluate_conditions(synth: &Synthesizer, test: &CorpusManifest, target: &str) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    if synth.target() != target {
        return Err(Error::Argument(format!(
            "checkpoint synthesizes {:?}, not {target:?}",
            synth.target()
        )));
    }
    let modalities = synth.modalities().to_vec();
    let mut stacks = Vec::with_capacity(test.len());
    let mut reals = Vec::with_capacity(test.len());
    for entry in &test.entries {
        let (x, t) = test.load_pair(entry, &modalities, target, synth.canonical_size())?;
        stacks.push(x);
        reals.push(t);
    }
    let mut rows = Vec::new();
    for c in enumerate_subsets(modalities.len())? {
        let fakes = synth.synthesize_stacks(&stacks, &c)?;
        let mut psnrs = Vec::with_capacity(fakes.len());
        let mut maes = Vec::with_capacity(fakes.len());
        for (f, r) in fakes.iter().zip(&reals) {
            psnrs.push(psnr_slices(f, r)?);
            maes.push(mae_slices(f, r)?);
        }
        let n = fakes.len() as f64;
        let mean_psnr = psnrs.iter().sum::<f64>() / n;
        rows.push(MetricRow {
            condition: c.label(&modalities),
            bits: c.to_u8(),
            psnr: finite(mean_psnr),
            psnr_infinite: mean_psnr.is_infinite(),
            mae: maes.iter().sum::<f64>() / n,
            n_slices: fakes.len(),
            per_slice_psnr: psnrs.into_iter().map(finite).collect(),
            per_slice_mae: maes,
        });
    }
    Ok(EvalReport {
        target: target.to_string(),
        modalities,
        rows,
    })
}

pub fn evaluate_checkpoint(ckpt: &Path, test: &CorpusManifest, target: &str) -> Result<EvalReport> {
    evaluate_conditions(&Synthesizer::load(ckpt)?, test, target)
}

impl EvalReport {
    pub fn row(&self, condition: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    /// Aligned plain-text table: condition, PSNR, MAE, slices.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.condition.len()).max().unwrap_or(0).max("condition".len());
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>7}  {:>6}", "condition", "psnr_db", "mae", "slices");
        for r in &self.rows {
            let p = match r.psnr {
                Some(v) => format!("{v:.2}"),
                None => "inf".to_string(),
            };
            let _ = writeln!(s, "{:<width$}  {:>9}  {:>7.4}  {:>6}", r.condition, p, r.mae, r.n_slices);
        }
        s
    }
}
