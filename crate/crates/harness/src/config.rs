//! Experiment configuration: a single TOML document, unknown keys rejected.
//!
//! ```toml
//! experiment = "return-prob"
//! group = "GL(16,2)"
//! words = ["x1 x2"]
//! seeds = [1, 2, 3]
//! trials = 1000000
//! r = 1
//! ```

use crate::HarnessError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    ReturnProb,
    Lambda,
    XwzSearch,
    CdDensity,
    SuppTail,
    SnPipeline,
    DiameterBfs,
    WittCountCheck,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::ReturnProb,
        ExperimentId::Lambda,
        ExperimentId::XwzSearch,
        ExperimentId::CdDensity,
        ExperimentId::SuppTail,
        ExperimentId::SnPipeline,
        ExperimentId::DiameterBfs,
        ExperimentId::WittCountCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::ReturnProb => "return-prob",
            ExperimentId::Lambda => "lambda",
            ExperimentId::XwzSearch => "xwz-search",
            ExperimentId::CdDensity => "cd-density",
            ExperimentId::SuppTail => "supp-tail",
            ExperimentId::SnPipeline => "sn-pipeline",
            ExperimentId::DiameterBfs => "diameter-bfs",
            ExperimentId::WittCountCheck => "witt-count-check",
        }
    }

    /// Keys besides `experiment`, `seeds` and `output` that the experiment reads.
    fn keys(self) -> &'static [&'static str] {
        match self {
            ExperimentId::ReturnProb => &["group", "words", "trials", "r", "rao_blackwell", "tolerance"],
            ExperimentId::Lambda => &["group", "k", "r", "base", "tolerance", "max_iters"],
            ExperimentId::XwzSearch => &["group", "k", "d", "max_len"],
            ExperimentId::CdDensity => &["group", "d", "trials"],
            ExperimentId::SuppTail => &["group", "words", "deltas", "trials"],
            ExperimentId::SnPipeline => &["n", "max_len"],
            ExperimentId::DiameterBfs => &["group", "k"],
            ExperimentId::WittCountCheck => &["group", "max_codim"],
        }
    }

    /// Keys that must be present.
    fn required(self) -> &'static [&'static str] {
        match self {
            ExperimentId::ReturnProb | ExperimentId::SuppTail => &["group", "words", "trials"],
            ExperimentId::CdDensity => &["group", "trials"],
            ExperimentId::SnPipeline => &[],
            _ => &["group"],
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Starting point of a Schreier graph for the `lambda` experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    /// The standard r-tuple of basis vectors.
    Vectors,
    /// The conjugacy class of the elementary transvection (linear kinds).
    Transvections,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_codim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rao_blackwell: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Output directory name under the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn id(&self) -> Result<ExperimentId, HarnessError> {
        self.experiment.ok_or_else(|| HarnessError::Config("missing key 'experiment'".into()))
    }

    pub fn seeds_or_default(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![0]
        } else {
            self.seeds.clone()
        }
    }

    fn present(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut mark = |name: &'static str, set: bool| {
            if set {
                keys.push(name);
            }
        };
        mark("group", self.group.is_some());
        mark("words", !self.words.is_empty());
        mark("trials", self.trials.is_some());
        mark("r", self.r.is_some());
        mark("d", self.d.is_some());
        mark("k", self.k.is_some());
        mark("n", self.n.is_some());
        mark("max_len", self.max_len.is_some());
        mark("max_codim", self.max_codim.is_some());
        mark("max_iters", self.max_iters.is_some());
        mark("base", self.base.is_some());
        mark("rao_blackwell", self.rao_blackwell.is_some());
        mark("deltas", !self.deltas.is_empty());
        mark("tolerance", self.tolerance.is_some());
        keys
    }

    /// Reject keys the experiment ignores and report missing ones.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let id = self.id()?;
        let allowed = id.keys();
        for key in self.present() {
            if !allowed.contains(&key) {
                return Err(HarnessError::Config(format!(
                    "key '{key}' is not used by experiment '{id}' (accepted: {})",
                    allowed.join(", ")
                )));
            }
        }
        let present = self.present();
        for key in id.required() {
            if !present.contains(key) {
                return Err(HarnessError::Config(format!("experiment '{id}' requires key '{key}'")));
            }
        }
        if self.trials == Some(0) {
            return Err(HarnessError::Config("'trials' must be positive".into()));
        }
        if let Some(out) = &self.output {
            if out.is_empty() || out.contains("..") || Path::new(out).is_absolute() {
                return Err(HarnessError::Config(format!("'output' must be a relative name, got '{out}'")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_and_unused_keys_are_rejected() {
        let e = ExperimentConfig::from_toml("experiment = \"lambda\"\ngroup = \"GL(3,2)\"\ncolour = 3\n").unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = ExperimentConfig::from_toml("experiment = \"lambda\"\ngroup = \"GL(3,2)\"\ntrials = 3\n").unwrap_err();
        assert!(e.to_string().contains("'trials' is not used"), "{e}");
        let e = ExperimentConfig::from_toml("experiment = \"return-prob\"\ngroup = \"GL(3,2)\"\ntrials = 3\n").unwrap_err();
        assert!(e.to_string().contains("requires key 'words'"), "{e}");
        let e = ExperimentConfig::from_toml("experiment = \"wat\"\n").unwrap_err();
        assert!(e.to_string().contains("wat"), "{e}");
    }

    #[test]
    fn every_id_round_trips() {
        for id in ExperimentId::ALL {
            let cfg = ExperimentConfig { experiment: Some(id), ..Default::default() };
            let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
            assert_eq!(back.experiment, Some(id));
            assert_eq!(id.to_string(), cfg.to_toml().trim().trim_start_matches("experiment = ").trim_matches('"'));
        }
    }
}
