//! Forward noising in log-SNR parameterization and the importance sampler
//! used to integrate over noise levels.
//!
//! A clean field `x` is perturbed as `x_alpha = a * x + b * eps` with
//! `a = sqrt(sigmoid(alpha))` and `b = sqrt(sigmoid(-alpha))`, so `a^2 + b^2 = 1`
//! for every finite `alpha`. Integrals over `alpha` are estimated by drawing
//! from a truncated logistic proposal and weighting each draw by the inverse
//! proposal density.

mod rng;
mod sampler;
mod schedule;

pub use rng::{standard_normal_field, stream, StreamDomain};
pub use sampler::{logistic_quantile, sample_log_snr, LogSnrSampler, WeightedPoint};
pub use schedule::{forward_perturb, sigmoid, LogSnrPoint};
