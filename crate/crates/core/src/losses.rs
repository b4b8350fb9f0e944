//! Cycle-consistency reconstruction, least-squares adversarial terms and
//! their composition into the generator and discriminator objectives.
//!
//! L1 terms are means over pixels (not sums), so `lambda_rec` does not
//! depend on image size.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditionVector, MISSING_FILL};
use crate::error::{Error, Result};

/// Mean absolute difference over all elements.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape(a, b)?;
    Ok((a - b)?.abs()?.mean_all()?)
}

/// Mean absolute difference over the channels marked available in `c`.
/// `x` and `rec` are (B, n, H, W); absent channels contribute nothing,
/// neither to the value nor to its gradient.
pub fn masked_l1(x: &Tensor, rec: &Tensor, c: &ConditionVector) -> Result<Tensor> {
    check_same_shape(x, rec)?;
    let (b, n, h, w) = x.dims4()?;
    if n != c.len() {
        return Err(Error::Shape(format!("condition of length {} for {n} channels", c.len())));
    }
    let available = c.count();
    if available == 0 {
        return Err(Error::Condition("reconstruction loss needs an available channel".into()));
    }
    let mask = channel_mask(c, x.dtype(), x.device())?;
    let total = (x - rec)?.abs()?.broadcast_mul(&mask)?.sum_all()?;
    Ok((total / (b * available * h * w) as f64)?)
}

/// LSGAN discriminator loss: mean((real − 1)²) + mean(fake²).
pub fn lsgan_d_loss(real_scores: &Tensor, fake_scores: &Tensor) -> Result<Tensor> {
    let real = (real_scores - 1.0)?.sqr()?.mean_all()?;
    let fake = fake_scores.sqr()?.mean_all()?;
    Ok((real + fake)?)
}

/// LSGAN generator loss: mean((fake − 1)²).
pub fn lsgan_g_loss(fake_scores: &Tensor) -> Result<Tensor> {
    Ok((fake_scores - 1.0)?.sqr()?.mean_all()?)
}

/// (1, n, 1, 1) tensor of 0/1 availability weights.
pub fn channel_mask(c: &ConditionVector, dtype: DType, device: &candle_core::Device) -> Result<Tensor> {
    let bits: Vec<f32> = c.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Ok(Tensor::from_vec(bits, (1, c.len(), 1, 1), device)?.to_dtype(dtype)?)
}

/// Differentiable counterpart of `mask_stack`: keeps available channels of a
/// (B, n, H, W) tensor and sets the others to the missing-modality fill.
pub fn apply_mask(x: &Tensor, c: &ConditionVector) -> Result<Tensor> {
    let (_, n, _, _) = x.dims4()?;
    if n != c.len() {
        return Err(Error::Shape(format!("condition of length {} for {n} channels", c.len())));
    }
    if c.count() == n {
        return Ok(x.clone());
    }
    let keep = channel_mask(c, x.dtype(), x.device())?;
    let fill = ((1.0 - &keep)? * MISSING_FILL as f64)?;
    Ok(x.broadcast_mul(&keep)?.broadcast_add(&fill)?)
}

/// Intermediate images of one pass around both cycles.
pub struct CyclePass {
    /// G1(X, c): synthetic target.
    pub fake_target: Tensor,
    /// G2(T, c): synthetic input stack.
    pub fake_inputs: Tensor,
    /// G2(G1(X, c), c).
    pub rec_inputs: Tensor,
    /// G1(G2(T, c), c).
    pub rec_target: Tensor,
}

/// Runs X → G1 → G2 and T → G2 → G1 under condition `c`.
pub fn cycle_pass<F1, F2>(x: &Tensor, t: &Tensor, c: &ConditionVector, g1: F1, g2: F2) -> Result<CyclePass>
where
    F1: Fn(&Tensor, &ConditionVector) -> Result<Tensor>,
    F2: Fn(&Tensor, &ConditionVector) -> Result<Tensor>,
{
    let fake_target = g1(x, c)?;
    let rec_inputs = g2(&fake_target, c)?;
    let fake_inputs = g2(t, c)?;
    let rec_target = g1(&fake_inputs, c)?;
    Ok(CyclePass {
        fake_target,
        fake_inputs,
        rec_inputs,
        rec_target,
    })
}

/// (rec_forward, rec_backward) for a completed cycle pass.
pub fn cycle_losses(pass: &CyclePass, x: &Tensor, t: &Tensor, c: &ConditionVector) -> Result<(Tensor, Tensor)> {
    Ok((masked_l1(x, &pass.rec_inputs, c)?, l1_mean(t, &pass.rec_target)?))
}

/// Multi-modal cycle-consistency loss: masked ‖X − G2(G1(X,c),c)‖₁ and
/// ‖T − G1(G2(T,c),c)‖₁, both as pixel means.
pub fn multimodal_cycle_loss<F1, F2>(x: &Tensor, t: &Tensor, c: &ConditionVector, g1: F1, g2: F2) -> Result<(Tensor, Tensor)>
where
    F1: Fn(&Tensor, &ConditionVector) -> Result<Tensor>,
    F2: Fn(&Tensor, &ConditionVector) -> Result<Tensor>,
{
    let pass = cycle_pass(x, t, c, g1, g2)?;
    cycle_losses(&pass, x, t, c)
}

/// Scalar loss terms of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub rec_forward: f64,
    pub rec_backward: f64,
    /// Generator-side least-squares terms, summed over both directions.
    pub adv_g: f64,
    /// Discriminator least-squares losses, summed over both discriminators.
    pub adv_d: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec_forward: f64,
    pub rec_backward: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total_g: f64,
    pub total_d: f64,
    pub lambda_rec: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.rec_forward,
            self.rec_backward,
            self.adv_g,
            self.adv_d,
            self.total_g,
            self.total_d,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Element-wise mean of several reports (all sharing `lambda_rec`).
    pub fn mean(reports: &[LossReport]) -> Option<LossReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(LossReport {
            rec_forward: avg(|r| r.rec_forward),
            rec_backward: avg(|r| r.rec_backward),
            adv_g: avg(|r| r.adv_g),
            adv_d: avg(|r| r.adv_d),
            total_g: avg(|r| r.total_g),
            total_d: avg(|r| r.total_d),
            lambda_rec: first.lambda_rec,
        })
    }
}

/// total_g = adv_g + λ·(rec_forward + rec_backward); total_d = adv_d.
pub fn total_objectives(parts: LossParts, lambda_rec: f64) -> Result<LossReport> {
    if !(lambda_rec >= 0.0) {
        return Err(Error::Argument(format!("lambda_rec must be ≥ 0, got {lambda_rec}")));
    }
    Ok(LossReport {
        rec_forward: parts.rec_forward,
        rec_backward: parts.rec_backward,
        adv_g: parts.adv_g,
        adv_d: parts.adv_d,
        total_g: parts.adv_g + lambda_rec * (parts.rec_forward + parts.rec_backward),
        total_d: parts.adv_d,
        lambda_rec,
    })
}

/// Tensor form of the generator objective, for backpropagation.
pub fn generator_objective(adv_g: &Tensor, rec_forward: &Tensor, rec_backward: &Tensor, lambda_rec: f64) -> Result<Tensor> {
    Ok((adv_g + ((rec_forward + rec_backward)? * lambda_rec)?)?)
}

fn check_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("shapes {:?} and {:?} differ", a.dims(), b.dims())));
    }
    Ok(())
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
