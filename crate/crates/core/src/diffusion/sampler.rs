use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, StreamDomain};
use super::schedule::{sigmoid, LogSnrPoint};
use crate::error::{Error, Result};

/// Truncated logistic proposal over log-SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSnrSampler {
    pub location: f64,
    pub scale: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for LogSnrSampler {
    fn default() -> Self {
        LogSnrSampler {
            location: 0.0,
            scale: 2.0,
            lower: -12.0,
            upper: 12.0,
        }
    }
}

/// One proposal draw and its importance weight `1 / (count * q(alpha))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub point: LogSnrPoint,
    pub weight: f64,
}

impl LogSnrSampler {
    pub fn new(location: f64, scale: f64, lower: f64, upper: f64) -> Result<Self> {
        let s = LogSnrSampler {
            location,
            scale,
            lower,
            upper,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.location, self.scale, self.lower, self.upper]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("sampler parameters must be finite"));
        }
        if self.scale <= 0.0 {
            return Err(Error::invalid(format!(
                "logistic scale must be positive, got {}",
                self.scale
            )));
        }
        if self.lower >= self.upper {
            return Err(Error::invalid(format!(
                "degenerate truncation [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    fn z(&self, alpha: f64) -> f64 {
        (alpha - self.location) / self.scale
    }

    /// Probability mass of the untruncated logistic inside the bounds.
    fn mass(&self) -> f64 {
        sigmoid(self.z(self.upper)) - sigmoid(self.z(self.lower))
    }

    /// CDF of the truncated proposal.
    pub fn cdf(&self, alpha: f64) -> f64 {
        if alpha <= self.lower {
            return 0.0;
        }
        if alpha >= self.upper {
            return 1.0;
        }
        (sigmoid(self.z(alpha)) - sigmoid(self.z(self.lower))) / self.mass()
    }

    /// Density of the truncated proposal; zero outside the bounds.
    pub fn density(&self, alpha: f64) -> f64 {
        if alpha < self.lower || alpha > self.upper {
            return 0.0;
        }
        let z = self.z(alpha);
        sigmoid(z) * sigmoid(-z) / (self.scale * self.mass())
    }

    /// Inverse of [`LogSnrSampler::cdf`] for `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        let lo = sigmoid(self.z(self.lower));
        let hi = sigmoid(self.z(self.upper));
        // p and 1 - p are formed separately so neither tail loses precision.
        let p = lo + u * (hi - lo);
        let q = sigmoid(-self.z(self.upper)) + (1.0 - u) * (hi - lo);
        let alpha = self.location + self.scale * (p / q).ln();
        Ok(alpha.clamp(self.lower, self.upper))
    }
}

/// Free-function form of [`LogSnrSampler::quantile`].
pub fn logistic_quantile(u: f64, location: f64, scale: f64, bounds: (f64, f64)) -> Result<f64> {
    LogSnrSampler::new(location, scale, bounds.0, bounds.1)?.quantile(u)
}

/// Draws `count` i.i.d. noise levels by inverse CDF. Summing
/// `weight * g(alpha)` over the draws is an unbiased estimate of the integral
/// of `g` over the truncated support.
pub fn sample_log_snr(sampler: &LogSnrSampler, seed: u64, count: usize) -> Result<Vec<WeightedPoint>> {
    sampler.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut rng = stream(seed, StreamDomain::LogSnr, 0);
    (0..count)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            let alpha = sampler.quantile(u)?;
            Ok(WeightedPoint {
                point: LogSnrPoint::new(alpha)?,
                weight: 1.0 / (count as f64 * sampler.density(alpha)),
            })
        })
        .collect()
}
