//! Noise-prediction denoisers.
//!
//! Every implementation answers the same question: given a noisy field
//! `x_alpha` at noise level `alpha` and a conditioning key, what is the
//! predicted noise `eps_hat`? The closed-form [`GmmModel`] gives the exact
//! minimum-mean-squared-error answer, [`MlpDenoiser`] learns one from samples,
//! and the bridge client forwards the question to a remote model.

mod condition;
mod gmm;
mod mlp;

pub use condition::DenoiserCondition;
pub use gmm::{GaussianComponent, GmmModel, Variance};
pub use mlp::{
    train_toy_denoiser, BatchItem, LabeledSample, MlpCheckpoint, MlpDenoiser, TrainConfig, TrainingBatch,
    TrainingReport,
};

use crate::diffusion::LogSnrPoint;
use crate::error::Result;
use crate::field::LatentField;

pub trait Denoiser: Send + Sync {
    /// Short identifier used in manifests and error messages.
    fn name(&self) -> String;

    fn predict_eps(
        &self,
        x_alpha: &LatentField,
        point: &LogSnrPoint,
        condition: &DenoiserCondition,
    ) -> Result<LatentField>;

    /// Predictions for several conditions on one shared noisy input. Results
    /// are returned in the order of `conditions`.
    fn predict_eps_batch(
        &self,
        x_alpha: &LatentField,
        point: &LogSnrPoint,
        conditions: &[&DenoiserCondition],
    ) -> Result<Vec<LatentField>> {
        conditions
            .iter()
            .map(|c| self.predict_eps(x_alpha, point, c))
            .collect()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn name(&self) -> String {
        (**self).name()
    }

    fn predict_eps(&self, x: &LatentField, p: &LogSnrPoint, c: &DenoiserCondition) -> Result<LatentField> {
        (**self).predict_eps(x, p, c)
    }

    fn predict_eps_batch(
        &self,
        x: &LatentField,
        p: &LogSnrPoint,
        cs: &[&DenoiserCondition],
    ) -> Result<Vec<LatentField>> {
        (**self).predict_eps_batch(x, p, cs)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn predict_eps(&self, x: &LatentField, p: &LogSnrPoint, c: &DenoiserCondition) -> Result<LatentField> {
        (**self).predict_eps(x, p, c)
    }

    fn predict_eps_batch(
        &self,
        x: &LatentField,
        p: &LogSnrPoint,
        cs: &[&DenoiserCondition],
    ) -> Result<Vec<LatentField>> {
        (**self).predict_eps_batch(x, p, cs)
    }
}

/// Adds a constant to every conditional prediction of the wrapped denoiser,
/// leaving unconditional predictions untouched. Used as a negative control:
/// the shifted conditional estimator is no longer the MMSE estimator.
pub struct ShiftedDenoiser<D> {
    pub inner: D,
    pub offset: f64,
}

impl<D: Denoiser> Denoiser for ShiftedDenoiser<D> {
    fn name(&self) -> String {
        format!("{}+shift({})", self.inner.name(), self.offset)
    }

    fn predict_eps(&self, x: &LatentField, p: &LogSnrPoint, c: &DenoiserCondition) -> Result<LatentField> {
        let eps = self.inner.predict_eps(x, p, c)?;
        if c.is_unconditional() {
            Ok(eps)
        } else {
            Ok(eps.map(|v| v + self.offset))
        }
    }
}
