//! Availability conditions: which input modalities are present for a pass.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataio::SliceStack;
use crate::error::{Error, Result};

/// Intensity written into channels whose modality is absent.
pub const MISSING_FILL: f32 = -1.0;

pub const MAX_MODALITIES: usize = 16;

/// Binary availability vector; serializes as a JSON array of 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct ConditionVector(Vec<bool>);

impl ConditionVector {
    pub fn new(bits: Vec<bool>) -> Self {
        ConditionVector(bits)
    }

    pub fn all(n: usize) -> Self {
        ConditionVector(vec![true; n])
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Argument(format!("condition bit {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ConditionVector)
    }

    /// Marks the modalities named in `present` as available, in `ordering`.
    pub fn from_names<S: AsRef<str>>(ordering: &[String], present: &[S]) -> Result<Self> {
        let mut bits = vec![false; ordering.len()];
        for name in present {
            let name = name.as_ref();
            let idx = ordering.iter().position(|m| m == name).ok_or_else(|| {
                Error::Argument(format!("unknown modality {name:?}; expected one of {ordering:?}"))
            })?;
            bits[idx] = true;
        }
        Ok(ConditionVector(bits))
    }

    /// Parses a comma-separated modality list such as `t1,flair`.
    pub fn parse_names(ordering: &[String], list: &str) -> Result<Self> {
        let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let c = Self::from_names(ordering, &names)?;
        c.require_nonempty()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.0.iter().map(|&b| b as u8).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::Condition("at least one input modality must be available".into()));
        }
        Ok(())
    }

    /// `t1+t2+flair`-style label built from the available modality names.
    pub fn label(&self, names: &[String]) -> String {
        names
            .iter()
            .zip(&self.0)
            .filter(|(_, &b)| b)
            .map(|(n, _)| n.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl TryFrom<Vec<u8>> for ConditionVector {
    type Error = Error;
    fn try_from(bits: Vec<u8>) -> Result<Self> {
        Self::from_bits(&bits)
    }
}

impl From<ConditionVector> for Vec<u8> {
    fn from(c: ConditionVector) -> Self {
        c.to_u8()
    }
}

impl fmt::Display for ConditionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: Vec<String> = self.0.iter().map(|&b| (b as u8).to_string()).collect();
        write!(f, "[{}]", bits.join(","))
    }
}

/// All 2ⁿ−1 non-empty conditions in binary counting order, first modality
/// as the most significant bit: `[0,0,1]`, `[0,1,0]`, ..., `[1,1,1]`.
pub fn enumerate_subsets(n: usize) -> Result<Vec<ConditionVector>> {
    if !(1..=MAX_MODALITIES).contains(&n) {
        return Err(Error::Argument(format!(
            "modality count {n} outside 1..={MAX_MODALITIES}"
        )));
    }
    Ok((1u32..(1 << n))
        .map(|k| ConditionVector((0..n).map(|i| (k >> (n - 1 - i)) & 1 == 1).collect()))
        .collect())
}

/// One spatially constant plane per condition bit, n×H×W.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionPlanes {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ConditionPlanes {
    pub fn plane(&self, i: usize) -> &[f32] {
        let len = self.height * self.width;
        &self.data[i * len..(i + 1) * len]
    }

    /// Reads the bit back from any pixel of plane `i`.
    pub fn bit_at(&self, i: usize, row: usize, col: usize) -> bool {
        self.plane(i)[row * self.width + col] != 0.0
    }
}

pub fn replicate(c: &ConditionVector, height: usize, width: usize) -> Result<ConditionPlanes> {
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!("condition planes of size {height}x{width}")));
    }
    let len = height * width;
    let mut data = Vec::with_capacity(c.len() * len);
    for &b in c.bits() {
        data.extend(std::iter::repeat_n(if b { 1.0 } else { 0.0 }, len));
    }
    Ok(ConditionPlanes {
        n: c.len(),
        height,
        width,
        data,
    })
}

/// Replaces channels marked absent by [`MISSING_FILL`]; others pass through.
pub fn mask_stack(stack: &SliceStack, c: &ConditionVector) -> Result<SliceStack> {
    if stack.channels() != c.len() {
        return Err(Error::Shape(format!(
            "condition of length {} for a {}-channel stack",
            c.len(),
            stack.channels()
        )));
    }
    let mut out = stack.clone();
    for (i, &present) in c.bits().iter().enumerate() {
        if !present {
            out.channel_mut(i).fill(MISSING_FILL);
        }
    }
    Ok(out)
}
