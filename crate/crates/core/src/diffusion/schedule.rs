use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LatentField;

/// Logistic sigmoid, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A noise level together with its signal and noise scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LogSnrPoint {
    alpha: f64,
    signal_scale: f64,
    noise_scale: f64,
}

impl LogSnrPoint {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::domain(format!("log-SNR must be finite, got {alpha}")));
        }
        Ok(LogSnrPoint {
            alpha,
            signal_scale: sigmoid(alpha).sqrt(),
            noise_scale: sigmoid(-alpha).sqrt(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `a = sqrt(sigmoid(alpha))`.
    pub fn signal_scale(&self) -> f64 {
        self.signal_scale
    }

    /// `b = sqrt(sigmoid(-alpha))`.
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }
}

impl TryFrom<f64> for LogSnrPoint {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        LogSnrPoint::new(alpha)
    }
}

impl From<LogSnrPoint> for f64 {
    fn from(p: LogSnrPoint) -> f64 {
        p.alpha
    }
}

/// `a * x + b * eps`, element-wise.
pub fn forward_perturb(x: &LatentField, point: &LogSnrPoint, eps: &LatentField) -> Result<LatentField> {
    let (a, b) = (point.signal_scale(), point.noise_scale());
    x.zip_with(eps, "eps", |xv, ev| a * xv + b * ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Shape;
    use proptest::prelude::*;

    fn field(values: &[f64]) -> LatentField {
        LatentField::new(Shape::new(1, 1, values.len()).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn zero_alpha_averages_signal_and_noise() {
        let p = LogSnrPoint::new(0.0).unwrap();
        let out = forward_perturb(&field(&[1.0, -2.0]), &p, &field(&[3.0, 0.5])).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.values()[0] - 4.0 * r).abs() < 1e-15);
        assert!((out.values()[1] + 1.5 * r).abs() < 1e-15);
    }

    #[test]
    fn high_snr_recovers_signal() {
        let p = LogSnrPoint::new(60.0).unwrap();
        let out = forward_perturb(&field(&[0.3]), &p, &field(&[5.0])).unwrap();
        assert!((out.values()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_leaves_scaled_noise() {
        let p = LogSnrPoint::new(-1.3).unwrap();
        let eps = field(&[0.7, -0.2]);
        let out = forward_perturb(&field(&[0.0, 0.0]), &p, &eps).unwrap();
        for (o, e) in out.values().iter().zip(eps.values()) {
            assert_eq!(*o, p.noise_scale() * e);
        }
    }

    #[test]
    fn rejects_infinite_alpha_and_shape_mismatch() {
        assert!(LogSnrPoint::new(f64::INFINITY).is_err());
        let p = LogSnrPoint::new(0.0).unwrap();
        assert!(forward_perturb(&field(&[1.0]), &p, &field(&[1.0, 2.0])).is_err());
    }

    proptest! {
        #[test]
        fn scales_are_a_unit_pair(alpha in -40.0f64..40.0) {
            let p = LogSnrPoint::new(alpha).unwrap();
            let (a, b) = (p.signal_scale(), p.noise_scale());
            prop_assert!((a * a + b * b - 1.0).abs() <= 1e-12);
            prop_assert!(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0);
        }
    }
}
