use std::path::{Path, PathBuf};

use clap::Args;
use diffpid::diffusion::LogSnrSampler;
use diffpid::estimate::{EstimatorConfig, EstimatorForm};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Where noise predictions come from. Exactly one source must be set for
/// commands that need a denoiser.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserSource {
    pub gmm: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub bridge: Option<String>,
}

/// Settings shared by every subcommand. A run manifest stores the resolved
/// value, and passing the manifest back with `--config` restores it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub denoiser: DenoiserSource,
    pub prior_table: Option<PathBuf>,
    pub estimator: EstimatorConfig,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON config file or a previous run manifest.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; a manifest.json is written there.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Gaussian mixture model file (exact denoiser).
    #[arg(long, global = true, value_name = "FILE")]
    pub gmm: Option<PathBuf>,
    /// Trained toy MLP checkpoint.
    #[arg(long, global = true, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Base URL of a bridge server.
    #[arg(long, global = true, value_name = "URL")]
    pub bridge: Option<String>,
    /// Phrase prior table.
    #[arg(long, global = true, value_name = "FILE")]
    pub prior_table: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Noise levels per estimate.
    #[arg(long, global = true)]
    pub n_alpha: Option<usize>,
    /// Noise draws per noise level.
    #[arg(long, global = true)]
    pub n_eps: Option<usize>,
    /// `orthogonal` or `standard`.
    #[arg(long, global = true)]
    pub form: Option<EstimatorForm>,
    #[arg(long, global = true)]
    pub loc: Option<f64>,
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha_max: Option<f64>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("tool") && map.contains_key("config") => {
            map.remove("config").unwrap_or_default()
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl GlobalArgs {
    /// Built-in defaults, overridden by the config file, overridden by flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => read_config(path)?,
            None => RunConfig::default(),
        };
        let sources = [self.gmm.is_some(), self.checkpoint.is_some(), self.bridge.is_some()];
        if sources.iter().any(|&s| s) {
            c.denoiser = DenoiserSource {
                gmm: self.gmm.clone(),
                checkpoint: self.checkpoint.clone(),
                bridge: self.bridge.clone(),
            };
        }
        set(&mut c.prior_table, self.prior_table.clone());
        set(&mut c.out, self.out.clone());
        set(&mut c.threads, self.threads);
        let e = &mut c.estimator;
        if let Some(v) = self.seed {
            e.seed = v;
        }
        if let Some(v) = self.n_alpha {
            e.n_alpha = v;
        }
        if let Some(v) = self.n_eps {
            e.n_eps = v;
        }
        if let Some(v) = self.form {
            e.form = v;
        }
        let s: &mut LogSnrSampler = &mut e.sampler;
        if let Some(v) = self.loc {
            s.location = v;
        }
        if let Some(v) = self.scale {
            s.scale = v;
        }
        if let Some(v) = self.alpha_min {
            s.lower = v;
        }
        if let Some(v) = self.alpha_max {
            s.upper = v;
        }
        c.estimator.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"estimator":{"n_alpha":7,"seed":3},"denoiser":{"gmm":"a.json"}}"#).unwrap();
        let args = GlobalArgs {
            config: Some(path.clone()),
            seed: Some(9),
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.estimator.n_alpha, 7);
        assert_eq!(c.estimator.seed, 9);
        assert_eq!(c.estimator.n_eps, 1);
        assert_eq!(c.denoiser.gmm, Some(PathBuf::from("a.json")));

        let manifest = dir.path().join("m.json");
        std::fs::write(&manifest, format!(r#"{{"tool":"diffpid","config":{}}}"#, serde_json::to_string(&c).unwrap()))
            .unwrap();
        let again = GlobalArgs {
            config: Some(manifest),
            ..Default::default()
        };
        assert_eq!(again.resolve().unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"n_alfa":7}"#).unwrap();
        let args = GlobalArgs {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(args.resolve(), Err(CliError::Config(_))));
    }
}
