//! Gaussian-cluster stand-in for real embedding dumps.
//!
//! Every example starts as isotropic noise `N(0, spread^2 I)` around the
//! origin; membership in slice `j` adds that slice's center offset. Members
//! of each slice are an exact `round(prevalence * n)` subset chosen by
//! shuffling, so realized prevalence matches the request to within `1/(2n)`
//! before label noise. Noise then flips each stored membership bit
//! independently with probability `noise`; the features keep their cluster
//! origin.
//!
//! Draw order (all from one stream seeded with `seed`): one shuffle of
//! `0..n` per slice; then per example the task-label uniform followed by `d`
//! Gaussians; then per example and slice one noise uniform.

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, ExampleRecord, FeatureMatrix};
use crate::rng::{rng_from_seed, shuffle, unit_f64, Gaussian};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub prevalence: f64,
    /// Distance of the slice cluster from the background cluster, in units
    /// of `spread`. Ignored when `center` is given.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Explicit offset of the slice cluster (length `d`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

fn default_separation() -> f64 {
    10.0
}

fn default_spread() -> f64 {
    1.0
}

fn default_task_rate() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub slices: Vec<SliceSpec>,
    /// Per-coordinate standard deviation of every cluster.
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Probability of flipping each stored slice-membership bit.
    #[serde(default)]
    pub noise: f64,
    /// Probability that an example's task label is 1.
    #[serde(default = "default_task_rate")]
    pub task_positive_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    /// `k` slices sharing one prevalence and separation.
    pub fn uniform(n: usize, d: usize, k: usize, prevalence: f64, separation: f64, seed: u64) -> Self {
        SynthConfig {
            n,
            d,
            slices: (0..k)
                .map(|_| SliceSpec {
                    name: None,
                    prevalence,
                    separation,
                    center: None,
                })
                .collect(),
            spread: 1.0,
            noise: 0.0,
            task_positive_rate: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| Err(CorpusError::InvalidConfig(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.slices.is_empty() {
            return bad("at least one slice is required".into());
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return bad(format!("spread must be positive, got {}", self.spread));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 0.5), got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.task_positive_rate) {
            return bad(format!(
                "task_positive_rate must lie in [0, 1], got {}",
                self.task_positive_rate
            ));
        }
        for (j, s) in self.slices.iter().enumerate() {
            if !(s.prevalence > 0.0 && s.prevalence < 1.0) {
                return bad(format!("slice {j}: prevalence must lie in (0, 1), got {}", s.prevalence));
            }
            if !s.separation.is_finite() {
                return bad(format!("slice {j}: separation must be finite"));
            }
            if let Some(c) = &s.center {
                if c.len() != self.d {
                    return bad(format!("slice {j}: center has {} coordinates, d={}", c.len(), self.d));
                }
                if c.iter().any(|x| !x.is_finite()) {
                    return bad(format!("slice {j}: center must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Offset of slice `j`'s cluster: the explicit center, or `separation *
    /// spread` along coordinate axis `j mod d`.
    pub fn slice_center(&self, j: usize) -> Vec<f64> {
        let spec = &self.slices[j];
        match &spec.center {
            Some(c) => c.clone(),
            None => {
                let mut c = vec![0.0; self.d];
                c[j % self.d] = spec.separation * self.spread;
                c
            }
        }
    }

    fn slice_name(&self, j: usize) -> String {
        self.slices[j]
            .name
            .clone()
            .unwrap_or_else(|| format!("slice_{j}"))
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset, CorpusError> {
    cfg.validate()?;
    let (n, d, k) = (cfg.n, cfg.d, cfg.slices.len());
    let mut rng = rng_from_seed(cfg.seed);

    let mut membership = vec![vec![0u8; k]; n];
    for (j, spec) in cfg.slices.iter().enumerate() {
        let count = (spec.prevalence * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut rng, &mut order);
        for &i in &order[..count] {
            membership[i][j] = 1;
        }
    }

    let centers: Vec<Vec<f64>> = (0..k).map(|j| cfg.slice_center(j)).collect();
    let mut gauss = Gaussian::new();
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for member in &membership {
        labels.push((unit_f64(&mut rng) < cfg.task_positive_rate) as i64);
        for c in 0..d {
            let mut x = gauss.sample(&mut rng) * cfg.spread;
            for (j, center) in centers.iter().enumerate() {
                if member[j] == 1 {
                    x += center[c];
                }
            }
            values.push(x as f32);
        }
    }

    for member in membership.iter_mut() {
        for bit in member.iter_mut() {
            if unit_f64(&mut rng) < cfg.noise {
                *bit ^= 1;
            }
        }
    }

    let width = n.to_string().len();
    let records = membership
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (s, y))| ExampleRecord {
            id: format!("syn-{i:0width$}"),
            y,
            s: Some(s),
            text: None,
            correct: None,
        })
        .collect();
    let features = FeatureMatrix::dense(n, d, values)?;
    let provenance = format!(
        "synthetic: gaussian clusters, spread={}, noise={}, seed={}",
        cfg.spread, cfg.noise, cfg.seed
    );
    let names = (0..k).map(|j| cfg.slice_name(j)).collect();
    Dataset::new(features, records, names, provenance)
}
