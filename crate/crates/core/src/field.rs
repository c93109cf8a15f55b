//! Shaped value grids for latents, noise, denoiser outputs and maps.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "shape dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        Ok(Shape {
            channels,
            height,
            width,
        })
    }

    /// Shape of a single scalar value.
    pub const fn scalar() -> Self {
        Shape {
            channels: 1,
            height: 1,
            width: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial_len(&self) -> usize {
        self.height * self.width
    }

    /// The single-channel shape over the same spatial grid.
    pub fn spatial(&self) -> Shape {
        Shape {
            channels: 1,
            height: self.height,
            width: self.width,
        }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl TryFrom<[usize; 3]> for Shape {
    type Error = Error;

    fn try_from(dims: [usize; 3]) -> Result<Self> {
        Shape::new(dims[0], dims[1], dims[2])
    }
}

/// A channels x height x width grid of finite reals, stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct LatentField {
    shape: Shape,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawField {
    shape: [usize; 3],
    values: Vec<f64>,
}

impl TryFrom<RawField> for LatentField {
    type Error = Error;

    fn try_from(raw: RawField) -> Result<Self> {
        LatentField::new(Shape::try_from(raw.shape)?, raw.values)
    }
}

impl From<LatentField> for RawField {
    fn from(field: LatentField) -> Self {
        RawField {
            shape: field.shape.as_array(),
            values: field.values,
        }
    }
}

impl LatentField {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::invalid(format!(
                "field of shape {shape} needs {} values, got {}",
                shape.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(LatentField { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        LatentField {
            shape,
            values: vec![value; shape.len()],
        }
    }

    /// Single-element field.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(Shape::scalar(), vec![value])
    }

    /// Builds a field without the finiteness scan. Callers guarantee finiteness
    /// or check it afterwards with [`LatentField::is_finite`].
    pub(crate) fn from_raw(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        LatentField { shape, values }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        let s = self.shape;
        self.values[(channel * s.height + row) * s.width + col]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Errors with [`Error::ShapeMismatch`] naming `field` when shapes differ.
    pub fn expect_shape(&self, expected: Shape, field: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                field: field.to_string(),
                expected,
                found: self.shape,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> LatentField {
        LatentField::from_raw(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Element-wise combination of two fields of equal shape.
    pub fn zip_with(
        &self,
        other: &LatentField,
        field: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<LatentField> {
        other.expect_shape(self.shape, field)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(LatentField::from_raw(self.shape, values))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sums each spatial position over the channel axis, yielding a 1-channel field.
    pub fn channel_sum(&self) -> LatentField {
        let s = self.shape;
        let plane = s.spatial_len();
        let mut out = vec![0.0; plane];
        for chunk in self.values.chunks_exact(plane) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        LatentField::from_raw(s.spatial(), out)
    }

    /// Mean and population variance over all values.
    pub fn mean_and_variance(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let mean = self.mean();
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }
}
