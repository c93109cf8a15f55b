use std::path::{Path, PathBuf};

use diffpid::bridge::BridgeClient;
use diffpid::denoise::{Denoiser, DenoiserCondition, GmmModel, MlpDenoiser};
use diffpid::diffusion::{stream, StreamDomain};
use diffpid::priors::{BridgePrior, GmmPrior, PriorProvider, TablePrior};
use diffpid::{LatentField, Shape};

use crate::config::RunConfig;
use crate::error::CliError;

pub enum Loaded {
    Gmm(GmmModel),
    Mlp(MlpDenoiser),
    Bridge(BridgeClient),
}

impl Loaded {
    pub fn denoiser(&self) -> &dyn Denoiser {
        match self {
            Loaded::Gmm(m) => m,
            Loaded::Mlp(m) => m,
            Loaded::Bridge(c) => c,
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Loaded::Gmm(m) => m.shape(),
            Loaded::Mlp(m) => m.shape(),
            Loaded::Bridge(c) => c.latent_shape(),
        }
    }

    pub fn gmm(&self) -> Option<&GmmModel> {
        match self {
            Loaded::Gmm(m) => Some(m),
            _ => None,
        }
    }
}

pub fn load_denoiser(config: &RunConfig) -> Result<Loaded, CliError> {
    let d = &config.denoiser;
    match (&d.gmm, &d.checkpoint, &d.bridge) {
        (Some(p), None, None) => Ok(Loaded::Gmm(GmmModel::load(p)?)),
        (None, Some(p), None) => Ok(Loaded::Mlp(MlpDenoiser::load(p)?)),
        (None, None, Some(url)) => Ok(Loaded::Bridge(BridgeClient::connect(url)?)),
        (None, None, None) => Err(CliError::Usage("a denoiser is required: --gmm, --checkpoint or --bridge".into())),
        _ => Err(CliError::Usage("choose only one of --gmm, --checkpoint and --bridge".into())),
    }
}

/// Prior table if given, else the mixture's own masses, else the bridge's masked model.
pub fn load_prior(config: &RunConfig, loaded: &Loaded) -> Result<Box<dyn PriorProvider>, CliError> {
    if let Some(p) = &config.prior_table {
        return Ok(Box::new(TablePrior::load(p)?));
    }
    match loaded {
        Loaded::Gmm(m) => Ok(Box::new(GmmPrior::new(m.clone()))),
        Loaded::Bridge(_) => {
            let url = config.denoiser.bridge.as_deref().expect("bridge source");
            Ok(Box::new(BridgePrior::new(BridgeClient::connect(url)?)))
        }
        Loaded::Mlp(_) => Err(CliError::Usage("a checkpoint denoiser needs --prior-table".into())),
    }
}

/// `""` is unconditional, `components:0,2` selects mixture components, anything
/// else is prompt text.
pub fn parse_condition(text: &str) -> Result<DenoiserCondition, CliError> {
    if let Some(list) = text.strip_prefix("components:") {
        let indices = parse_list::<usize>(list, "components")?;
        return Ok(DenoiserCondition::components(indices)?);
    }
    Ok(DenoiserCondition::prompt(text.trim()))
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{what}: cannot parse {s:?}")))
        })
        .collect()
}

/// The field to analyze: explicit values, a JSON field file, or a seeded draw
/// from the mixture under `condition`.
pub fn resolve_field(
    x: Option<&str>,
    x_file: Option<&PathBuf>,
    sample_index: u64,
    loaded: &Loaded,
    condition: &DenoiserCondition,
    seed: u64,
) -> Result<LatentField, CliError> {
    let field = match (x, x_file) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --x or --x-file".into())),
        (Some(text), None) => {
            let values = parse_list::<f64>(text, "--x")?;
            LatentField::new(loaded.shape(), values)?
        }
        (None, Some(path)) => read_json::<LatentField>(path)?,
        (None, None) => match loaded.gmm() {
            Some(m) => m.sample(condition, &mut stream(seed, StreamDomain::Sample, sample_index))?,
            None => return Err(CliError::Usage("--x or --x-file is required without a mixture model".into())),
        },
    };
    field.expect_shape(loaded.shape(), "x")?;
    Ok(field)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
