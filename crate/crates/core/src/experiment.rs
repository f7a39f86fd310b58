//! Experiment files: where the data comes from, how it is split and
//! normalized, and which discovery runs to perform.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_synthetic, load_dataset, normalize, split, CorpusError, Dataset, Normalization,
    SynthConfig, MANIFEST_FILE,
};
use crate::discovery::DiscoveryConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// An SLFX bundle: its directory or its manifest file. Relative paths
    /// resolve against the experiment file's directory.
    Slfx(PathBuf),
    Synthetic(SynthConfig),
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub normalize: Normalization,
    /// Append the task label (and correctness bit, when present) to the
    /// features.
    #[serde(default)]
    pub task_columns: bool,
    /// The single run for `run` and `serve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discovery: Option<DiscoveryConfig>,
    /// The configurations compared by `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<DiscoveryConfig>,
    /// Discovery seeds. Empty means the seed inside each configuration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CorpusError::InvalidConfig(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        Ok(())
    }

    /// Loads or generates the data, then appends task columns, normalizes
    /// and splits. Normalization statistics come from the whole dataset
    /// (features only), before the split.
    pub fn prepare(&self, base_dir: &Path) -> Result<(Dataset, Dataset), CorpusError> {
        self.validate()?;
        let mut ds = match &self.dataset {
            DatasetSource::Slfx(p) => {
                let p = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                let manifest = if p.is_dir() { p.join(MANIFEST_FILE) } else { p };
                load_dataset(manifest)?
            }
            DatasetSource::Synthetic(s) => generate_synthetic(s)?,
        };
        if self.task_columns {
            ds = ds.with_task_columns()?;
        }
        ds = normalize(&ds, self.normalize);
        let sp = split(&ds, self.test_fraction, self.split_seed)?;
        Ok((sp.train, sp.test))
    }

    /// `(config, seed)` pairs for a single run: the `discovery` block under
    /// each listed seed.
    pub fn runs(&self) -> Vec<DiscoveryConfig> {
        let Some(base) = &self.discovery else { return Vec::new() };
        if self.seeds.is_empty() {
            return vec![base.clone()];
        }
        self.seeds
            .iter()
            .map(|&s| DiscoveryConfig { seed: s, ..base.clone() })
            .collect()
    }

    /// Seeds for a comparison grid.
    pub fn grid_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.grid.first().or(self.discovery.as_ref()).map_or(0, |c| c.seed)]
        } else {
            self.seeds.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"synthetic": {"n": 300, "d": 4, "slices": [{"prevalence": 0.2}], "seed": 1}},
        "discovery": {"strategy": {"kind": "random"}, "seed_size": 10, "batch_size": 5, "budget": 20}
    }"#;

    #[test]
    fn parses_with_defaults_and_prepares() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.test_fraction, 0.2);
        assert_eq!(cfg.out, PathBuf::from("out"));
        let (train, test) = cfg.prepare(Path::new(".")).unwrap();
        assert_eq!(train.len() + test.len(), 300);
        assert_eq!(test.len(), 60);
        assert_eq!(cfg.runs().len(), 1);
    }

    #[test]
    fn two_sources_or_unknown_fields_rejected() {
        let both = r#"{"dataset": {"slfx": "a", "synthetic": {"n": 1, "d": 1, "slices": [], "seed": 0}}}"#;
        assert!(ExperimentConfig::from_json(both).is_err());
        let typo = r#"{"dataset": {"slfx": "a"}, "test_fractoin": 0.3}"#;
        assert!(ExperimentConfig::from_json(typo).is_err());
    }

    #[test]
    fn slfx_source_resolves_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic(&SynthConfig::uniform(50, 3, 1, 0.3, 5.0, 2)).unwrap();
        crate::corpus::save_dataset(&ds, dir.path().join("bundle")).unwrap();
        let cfg = ExperimentConfig::from_json(r#"{"dataset": {"slfx": "bundle"}, "task_columns": true}"#).unwrap();
        let (train, test) = cfg.prepare(dir.path()).unwrap();
        assert_eq!(train.dim(), 4);
        assert_eq!(train.len() + test.len(), 50);
    }

    #[test]
    fn seeds_expand_runs() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.seeds = vec![3, 4];
        let runs = cfg.runs();
        assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![3, 4]);
        assert_eq!(cfg.grid_seeds(), vec![3, 4]);
    }

    #[test]
    fn bad_fraction_rejected() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.test_fraction = 1.0;
        assert!(matches!(cfg.prepare(Path::new(".")), Err(CorpusError::InvalidConfig(_))));
    }
}
