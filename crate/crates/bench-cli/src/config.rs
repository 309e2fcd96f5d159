//! Experiment configuration: flat key-value text with sections (TOML), one
//! file per experiment. Every value is echoed into the run summary for
//! provenance, and serializing a parsed config reproduces an equivalent one.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub run: RunSection,
    #[serde(rename = "optimizer", default)]
    pub optimizers: Vec<OptimizerSpec>,
    #[serde(default)]
    pub variance_check: Option<VarianceCheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// "kpca" | "lrmc" | "quadratic"
    pub kind: String,
    /// LibSVM file to load (k-PCA only); synthetic parameters otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// k-PCA synthetic covariance spectrum decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    /// LRMC observation density and noise level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    /// Quadratic synthetic spectrum and offset spread.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    /// Seed for the synthetic data generator.
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
    /// Max-norm scaling of k-PCA samples.
    #[serde(default = "default_true")]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ifo_budget: Option<u64>,
    pub out_dir: String,
    #[serde(default)]
    pub record_true_grad: bool,
}

/// One optimizer cell; `name` selects the algorithm, the remaining fields are
/// its hyperparameters (unused ones must stay unset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<f64>,
    /// Smoothness overrides; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<u64>,
    #[serde(default)]
    pub plus: bool,
    /// Treat the finite sum as a sampling pool (online simulation).
    #[serde(default)]
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceCheckSpec {
    #[serde(default = "default_vc_p")]
    pub p: usize,
    #[serde(default = "default_vc_s1")]
    pub s1: usize,
    #[serde(default = "default_vc_s2")]
    pub s2: usize,
    #[serde(default = "default_vc_trials")]
    pub trials: usize,
    /// Step size used to lay down the frozen trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for VarianceCheckSpec {
    fn default() -> Self {
        VarianceCheckSpec {
            p: default_vc_p(),
            s1: default_vc_s1(),
            s2: default_vc_s2(),
            trials: default_vc_trials(),
            epsilon: None,
        }
    }
}

fn default_data_seed() -> u64 {
    1
}
fn default_true() -> bool {
    true
}
fn default_vc_p() -> usize {
    4
}
fn default_vc_s1() -> usize {
    16
}
fn default_vc_s2() -> usize {
    4
}
fn default_vc_trials() -> usize {
    1000
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            bail!("run.seeds must contain at least one seed");
        }
        if let Some(b) = self.run.ifo_budget {
            if b == 0 {
                bail!("run.ifo_budget must be positive");
            }
        }
        match self.problem.kind.as_str() {
            "kpca" | "lrmc" | "quadratic" => {}
            other => bail!("unknown problem kind `{other}` (kpca | lrmc | quadratic)"),
        }
        let known = [
            "rspider",
            "rspider_a",
            "rgd_spider",
            "rsgd",
            "rsvrg",
            "rsrg",
        ];
        for opt in &self.optimizers {
            if !known.contains(&opt.name.as_str()) {
                bail!(
                    "unknown optimizer `{}` (expected one of {known:?})",
                    opt.name
                );
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[problem]
kind = "kpca"
n = 100
d = 10
k = 2
decay = 0.5

[run]
seeds = [1, 2, 3]
ifo_budget = 5000
out_dir = "out"

[[optimizer]]
name = "rspider"
epsilon = 1e-3

[[optimizer]]
name = "rsgd"
rate = 0.05
lambda = 0.001
batch = 8
"#;

    #[test]
    fn parse_and_roundtrip() {
        let cfg = RunConfig::from_str(SAMPLE).unwrap();
        assert_eq!(cfg.run.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.optimizers.len(), 2);
        assert!(cfg.problem.normalize);
        let serialized = cfg.to_toml().unwrap();
        let reparsed = RunConfig::from_str(&serialized).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_str("").is_err());
        let no_seeds = SAMPLE.replace("seeds = [1, 2, 3]", "seeds = []");
        assert!(RunConfig::from_str(&no_seeds).is_err());
        let bad_kind = SAMPLE.replace("kind = \"kpca\"", "kind = \"tsne\"");
        assert!(RunConfig::from_str(&bad_kind).is_err());
        let bad_opt = SAMPLE.replace("name = \"rsgd\"", "name = \"adamw\"");
        assert!(RunConfig::from_str(&bad_opt).is_err());
        let unknown_key = SAMPLE.replace("decay = 0.5", "decay = 0.5\nwhatever = 1");
        assert!(RunConfig::from_str(&unknown_key).is_err());
    }
}
