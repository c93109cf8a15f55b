use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserCondition};
use crate::diffusion::{forward_perturb, standard_normal_field, stream, LogSnrPoint, StreamDomain};
use crate::error::{Error, Result};
use crate::field::LatentField;

/// Log-SNR at which the reverse trajectory ends.
pub const CLEAN_ALPHA: f64 = 12.0;

/// `steps` log-SNR levels evenly spaced from `noise_alpha` toward [`CLEAN_ALPHA`],
/// starting at `noise_alpha` and excluding the end point.
pub fn intervention_grid(noise_alpha: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| noise_alpha + (CLEAN_ALPHA - noise_alpha) * i as f64 / steps as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    pub original: DenoiserCondition,
    pub edited: DenoiserCondition,
    pub noise_alpha: f64,
    pub steps: usize,
    pub output: LatentField,
    /// Mean squared difference between the output and the input field.
    pub mse: f64,
    pub correlation: f64,
}

/// Pearson correlation of the flattened values; zero when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Noises `x` to `noise_alpha` and runs a deterministic reverse trajectory
/// under the edited condition, reporting how far the result moved from `x`.
///
/// Each step predicts the clean field `(x_t - b eps) / a` and re-noises it to the
/// next level with the same predicted noise. The last prediction is the output.
pub fn prompt_intervention(
    x: &LatentField,
    original: &DenoiserCondition,
    edited: &DenoiserCondition,
    noise_alpha: f64,
    steps: usize,
    denoiser: &dyn Denoiser,
    seed: u64,
) -> Result<InterventionReport> {
    if steps == 0 {
        return Err(Error::invalid("intervention needs at least one step"));
    }
    if !(noise_alpha.is_finite() && noise_alpha < CLEAN_ALPHA) {
        return Err(Error::domain(format!("noise level {noise_alpha} must be finite and below {CLEAN_ALPHA}")));
    }
    let points = intervention_grid(noise_alpha, steps)
        .into_iter()
        .map(LogSnrPoint::new)
        .collect::<Result<Vec<_>>>()?;
    let eps = standard_normal_field(x.shape(), &mut stream(seed, StreamDomain::Intervention, 0));
    let mut x_t = forward_perturb(x, &points[0], &eps)?;
    let mut x_hat = x.clone();
    for (step, point) in points.iter().enumerate() {
        let eps_hat = denoiser.predict_eps(&x_t, point, edited)?;
        let (a, b) = (point.signal_scale(), point.noise_scale());
        x_hat = x_t.zip_with(&eps_hat, "eps", |xt, e| (xt - b * e) / a)?;
        if !x_hat.is_finite() {
            return Err(Error::NonFiniteTrajectory { step });
        }
        if let Some(next) = points.get(step + 1) {
            let (a2, b2) = (next.signal_scale(), next.noise_scale());
            x_t = x_hat.zip_with(&eps_hat, "eps", |xh, e| a2 * xh + b2 * e)?;
        }
    }
    let mse = x
        .values()
        .iter()
        .zip(x_hat.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.values().len() as f64;
    let correlation = pearson(x.values(), x_hat.values());
    Ok(InterventionReport {
        original: original.clone(),
        edited: edited.clone(),
        noise_alpha,
        steps,
        output: x_hat,
        mse,
        correlation,
    })
}
