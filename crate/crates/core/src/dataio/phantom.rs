//! Synthetic multi-contrast brain phantoms.
//!
//! Each slice is a tissue label map (scalp, CSF, gray and white matter,
//! lesions) rendered through one contrast table per modality. The tables are
//! chosen so that every single input modality confuses one pair of tissues
//! that the DIR-like target separates, while any two inputs together resolve
//! all tissues.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_slice_file, CorpusManifest, ManifestEntry, SliceStack, Split};
use crate::error::{Error, Result};
use crate::seeding::stream_rng;

pub const PHANTOM_MODALITIES: [&str; 4] = ["t1", "t2", "flair", "dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tissue {
    Background,
    Scalp,
    Csf,
    Gray,
    White,
    Lesion,
}

impl Tissue {
    /// Noise-free intensity per modality, in `PHANTOM_MODALITIES` order.
    fn contrast(self) -> [f32; 4] {
        match self {
            Tissue::Background => [0.0, 0.0, 0.0, 0.0],
            Tissue::Scalp => [0.80, 0.50, 0.60, 0.20],
            Tissue::Csf => [0.15, 0.90, 0.10, 0.05],
            Tissue::Gray => [0.45, 0.55, 0.45, 0.55],
            Tissue::White => [0.75, 0.35, 0.45, 0.10],
            // t1 matches gray matter, t2 matches CSF; only DIR and FLAIR light up.
            Tissue::Lesion => [0.45, 0.90, 0.95, 0.95],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub n_subjects: usize,
    pub n_slices: usize,
    pub size: usize,
    pub seed: u64,
    /// Translate each modality independently by a few pixels.
    pub misalign: bool,
    pub test_fraction: f64,
    pub noise_std: f32,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            n_subjects: 10,
            n_slices: 8,
            size: 240,
            seed: 7,
            misalign: false,
            test_fraction: 0.3,
            noise_std: 0.02,
        }
    }
}

impl PhantomConfig {
    fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.n_slices == 0 {
            return Err(Error::Argument("subject and slice counts must be positive".into()));
        }
        if self.size < 8 {
            return Err(Error::Argument(format!("phantom size {} is below 8 pixels", self.size)));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Argument(format!(
                "test fraction {} outside [0, 1)",
                self.test_fraction
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Argument("noise std must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_test_subjects(&self) -> usize {
        if self.test_fraction == 0.0 || self.n_subjects < 2 {
            return 0;
        }
        ((self.n_subjects as f64 * self.test_fraction).round() as usize).clamp(1, self.n_subjects - 1)
    }
}

/// A rendered slice with its ground-truth label and lesion masks.
#[derive(Debug, Clone)]
pub struct PhantomSlice {
    pub labels: Vec<Tissue>,
    pub lesion_mask: Vec<bool>,
    /// Raw intensities in [0, 1], channels in `PHANTOM_MODALITIES` order.
    pub stack: SliceStack,
}

/// Per-subject anatomy parameters shared by all of its slices.
struct Anatomy {
    center: (f64, f64),
    head_axes: (f64, f64),
    ventricle_offset: f64,
    ventricle_axes: (f64, f64),
    sulcus_phase: f64,
    sulcus_freq: f64,
}

impl Anatomy {
    fn draw(cfg: &PhantomConfig, subject: usize) -> Self {
        let mut rng = stream_rng(cfg.seed, &[1, subject as u64]);
        Anatomy {
            center: (rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04)),
            head_axes: (rng.random_range(0.78..0.86), rng.random_range(0.86..0.94)),
            ventricle_offset: rng.random_range(0.10..0.16),
            ventricle_axes: (rng.random_range(0.06..0.09), rng.random_range(0.16..0.24)),
            sulcus_phase: rng.random_range(0.0..2.0 * PI),
            sulcus_freq: rng.random_range(5.0..9.0f64).round(),
        }
    }
}

/// Renders one slice of one subject. Deterministic in (config, subject, slice).
pub fn render_phantom_slice(cfg: &PhantomConfig, subject: usize, slice: usize) -> Result<PhantomSlice> {
    cfg.validate()?;
    let anatomy = Anatomy::draw(cfg, subject);
    let mut rng = stream_rng(cfg.seed, &[2, subject as u64, slice as u64]);
    let n = cfg.size;
    let half = n as f64 / 2.0;

    // Axial extent shrinks towards the ends of the slab.
    let z = (slice as f64 + 0.5) / cfg.n_slices as f64 - 0.5;
    let shrink = (1.0 - 1.2 * z * z).sqrt();
    let (ha, hb) = (anatomy.head_axes.0 * shrink, anatomy.head_axes.1 * shrink);
    let (ba, bb) = (ha * 0.88, hb * 0.88);
    let vent_scale = 0.6 + 0.4 * shrink;

    let mut labels = vec![Tissue::Background; n * n];
    for r in 0..n {
        for c in 0..n {
            let u = (c as f64 + 0.5) / half - 1.0 - anatomy.center.0;
            let v = (r as f64 + 0.5) / half - 1.0 - anatomy.center.1;
            let head_r = ((u / ha).powi(2) + (v / hb).powi(2)).sqrt();
            if head_r >= 1.0 {
                continue;
            }
            let brain_r = ((u / ba).powi(2) + (v / bb).powi(2)).sqrt();
            let theta = v.atan2(u);
            let ribbon = 0.76 + 0.05 * (anatomy.sulcus_freq * theta + anatomy.sulcus_phase).sin();
            let in_ventricle = [-1.0, 1.0].iter().any(|side| {
                let du = (u - side * anatomy.ventricle_offset * vent_scale) / (anatomy.ventricle_axes.0 * vent_scale);
                let dv = (v + 0.05) / (anatomy.ventricle_axes.1 * vent_scale);
                du * du + dv * dv < 1.0
            });
            labels[r * n + c] = if brain_r >= 1.0 {
                Tissue::Scalp
            } else if brain_r >= 0.95 || in_ventricle {
                Tissue::Csf
            } else if brain_r >= ribbon {
                Tissue::Gray
            } else {
                Tissue::White
            };
        }
    }

    // Lesions: small discs centered on white-matter pixels; at least one per slice.
    let mut lesion_mask = vec![false; n * n];
    let white: Vec<usize> = (0..n * n).filter(|&i| labels[i] == Tissue::White).collect();
    if !white.is_empty() {
        let count = rng.random_range(2..=4);
        for _ in 0..count {
            let center = white[rng.random_range(0..white.len())];
            let (cr, cc) = ((center / n) as f64, (center % n) as f64);
            let radius = (rng.random_range(0.07..0.12) * half).max(1.0);
            let reach = radius.ceil() as isize;
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let (rr, cc2) = (cr as isize + dr, cc as isize + dc);
                    if rr < 0 || cc2 < 0 || rr >= n as isize || cc2 >= n as isize {
                        continue;
                    }
                    let idx = rr as usize * n + cc2 as usize;
                    let d = ((dr * dr + dc * dc) as f64).sqrt();
                    if d <= radius && matches!(labels[idx], Tissue::White | Tissue::Gray | Tissue::Lesion) {
                        labels[idx] = Tissue::Lesion;
                        lesion_mask[idx] = true;
                    }
                }
            }
        }
    }

    let noise = Normal::new(0.0f32, cfg.noise_std.max(f32::MIN_POSITIVE))
        .map_err(|e| Error::Argument(format!("noise: {e}")))?;
    let max_shift = (n / 32).max(1) as isize;
    let mut planes: Vec<Vec<f32>> = Vec::with_capacity(PHANTOM_MODALITIES.len());
    for m in 0..PHANTOM_MODALITIES.len() {
        let mut plane = vec![0.0f32; n * n];
        for (i, t) in labels.iter().enumerate() {
            if *t == Tissue::Background {
                continue;
            }
            let jitter = if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            plane[i] = (t.contrast()[m] + jitter).clamp(0.01, 1.0);
        }
        if cfg.misalign {
            let mut shift_rng = stream_rng(cfg.seed, &[3, subject as u64, slice as u64, m as u64]);
            let dy = shift_rng.random_range(-(max_shift as i64)..=max_shift as i64) as isize;
            let dx = shift_rng.random_range(-(max_shift as i64)..=max_shift as i64) as isize;
            plane = translate(&plane, n, dy, dx);
        }
        planes.push(plane);
    }
    let refs: Vec<&[f32]> = planes.iter().map(Vec::as_slice).collect();
    let names = PHANTOM_MODALITIES.iter().map(|s| s.to_string()).collect();
    let stack = SliceStack::from_planes(names, n, n, &refs)?;
    Ok(PhantomSlice {
        labels,
        lesion_mask,
        stack,
    })
}

fn translate(plane: &[f32], n: usize, dy: isize, dx: isize) -> Vec<f32> {
    let mut out = vec![0.0; n * n];
    for r in 0..n as isize {
        for c in 0..n as isize {
            let (sr, sc) = (r - dy, c - dx);
            if sr >= 0 && sc >= 0 && sr < n as isize && sc < n as isize {
                out[(r * n as isize + c) as usize] = plane[(sr * n as isize + sc) as usize];
            }
        }
    }
    out
}

/// Paths of a generated corpus.
#[derive(Debug, Clone)]
pub struct PhantomCorpus {
    pub train: CorpusManifest,
    pub test: CorpusManifest,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
}

/// Renders the whole corpus under `out_dir`: one MSL file per modality per
/// slice plus `train.json` / `test.json` manifests. Subjects are split by
/// index; the last `n_test_subjects()` go to the test split.
pub fn generate_phantom_corpus(out_dir: &Path, cfg: &PhantomConfig) -> Result<PhantomCorpus> {
    cfg.validate()?;
    let n_test = cfg.n_test_subjects();
    let n_train = cfg.n_subjects - n_test;
    let modalities: Vec<String> = PHANTOM_MODALITIES.iter().map(|s| s.to_string()).collect();
    let mut train = empty_manifest(Split::Train, &modalities, out_dir);
    let mut test = empty_manifest(Split::Test, &modalities, out_dir);

    for subject in 0..cfg.n_subjects {
        let subject_id = format!("sub-{subject:03}");
        let manifest = if subject < n_train { &mut train } else { &mut test };
        manifest.subjects.push(subject_id.clone());
        for slice in 0..cfg.n_slices {
            let rendered = render_phantom_slice(cfg, subject, slice)?;
            let mut files = BTreeMap::new();
            for (m, name) in modalities.iter().enumerate() {
                let rel = PathBuf::from("slices")
                    .join(&subject_id)
                    .join(format!("z{slice:03}_{name}.msl"));
                let plane = rendered.stack.extract(m).into_stack();
                write_slice_file(&out_dir.join(&rel), &plane)?;
                files.insert(name.clone(), rel);
            }
            manifest.entries.push(ManifestEntry {
                subject: subject_id.clone(),
                slice,
                files,
            });
        }
    }

    let train_path = out_dir.join("train.json");
    let test_path = out_dir.join("test.json");
    train.save(&train_path)?;
    test.save(&test_path)?;
    Ok(PhantomCorpus {
        train,
        test,
        train_path,
        test_path,
    })
}

fn empty_manifest(split: Split, modalities: &[String], root: &Path) -> CorpusManifest {
    CorpusManifest {
        subjects: Vec::new(),
        modalities: modalities.to_vec(),
        entries: Vec::new(),
        split,
        root: root.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> PhantomConfig {
        PhantomConfig {
            n_subjects: 3,
            n_slices: 4,
            size: 48,
            seed,
            ..PhantomConfig::default()
        }
    }

    #[test]
    fn channels_share_support_without_misalignment() {
        let cfg = small(11);
        for subject in 0..3 {
            for slice in 0..4 {
                let s = render_phantom_slice(&cfg, subject, slice).unwrap();
                let support: Vec<bool> = s.stack.channel(0).iter().map(|&v| v != 0.0).collect();
                for c in 1..s.stack.channels() {
                    let other: Vec<bool> = s.stack.channel(c).iter().map(|&v| v != 0.0).collect();
                    assert_eq!(support, other, "subject {subject} slice {slice} channel {c}");
                }
                assert!(support.iter().any(|&b| b));
            }
        }
    }

    #[test]
    fn misalignment_breaks_shared_support() {
        let cfg = PhantomConfig { misalign: true, ..small(11) };
        let differs = (0..4).any(|slice| {
            let s = render_phantom_slice(&cfg, 0, slice).unwrap();
            let sup = |c: usize| s.stack.channel(c).iter().map(|&v| v != 0.0).collect::<Vec<_>>();
            (1..4).any(|c| sup(c) != sup(0))
        });
        assert!(differs);
    }

    #[test]
    fn dir_channel_is_brighter_inside_lesions() {
        let cfg = small(5);
        let dir = PHANTOM_MODALITIES.iter().position(|m| *m == "dir").unwrap();
        for slice in 0..4 {
            let s = render_phantom_slice(&cfg, 1, slice).unwrap();
            let plane = s.stack.channel(dir);
            let (mut inside, mut n_in, mut outside, mut n_out) = (0.0f64, 0usize, 0.0f64, 0usize);
            for (i, &v) in plane.iter().enumerate() {
                if s.lesion_mask[i] {
                    inside += v as f64;
                    n_in += 1;
                } else {
                    outside += v as f64;
                    n_out += 1;
                }
            }
            assert!(n_in > 0, "slice {slice} has no lesion pixels");
            assert!(inside / n_in as f64 > outside / n_out as f64);
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small(7);
        generate_phantom_corpus(a.path(), &cfg).unwrap();
        generate_phantom_corpus(b.path(), &cfg).unwrap();
        for name in ["train.json", "test.json"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap()
            );
        }
        let m = CorpusManifest::load(&a.path().join("train.json")).unwrap();
        m.validate_files().unwrap();
        for e in &m.entries {
            for f in e.files.values() {
                assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
            }
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = render_phantom_slice(&small(1), 0, 0).unwrap();
        let b = render_phantom_slice(&small(2), 0, 0).unwrap();
        assert_ne!(a.stack, b.stack);
    }

    #[test]
    fn split_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PhantomConfig { n_subjects: 10, n_slices: 2, size: 16, ..PhantomConfig::default() };
        let corpus = generate_phantom_corpus(dir.path(), &cfg).unwrap();
        assert_eq!(corpus.train.subjects.len(), 7);
        assert_eq!(corpus.test.subjects.len(), 3);
        assert_eq!(corpus.test.entries.len(), 6);
    }

    #[test]
    fn zero_counts_rejected() {
        let cfg = PhantomConfig { n_subjects: 0, ..PhantomConfig::default() };
        assert!(render_phantom_slice(&cfg, 0, 0).is_err());
    }
}
