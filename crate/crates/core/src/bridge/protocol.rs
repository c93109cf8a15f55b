//! JSON bodies exchanged with a denoising bridge server.
//!
//! Tensors travel as base64 (standard alphabet, padded) strings of
//! little-endian 32-bit floats in channel-major order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{LatentField, Shape};

pub const INFO_PATH: &str = "/v1/info";
pub const DENOISE_PATH: &str = "/v1/denoise";
pub const LOGPROB_PATH: &str = "/v1/logprob";

/// Mask placeholder used in log-probability templates.
pub const MASK_TOKEN: &str = "[MASK]";

/// Machine-readable error codes carried in [`ErrorBody::error`].
pub mod codes {
    pub const BAD_REQUEST: &str = "bad_request";
    pub const SHAPE_MISMATCH: &str = "shape_mismatch";
    pub const ALPHA_OUT_OF_RANGE: &str = "alpha_out_of_range";
    pub const UNSUPPORTED_CONDITION: &str = "unsupported_condition";
    pub const UNKNOWN_TOKEN: &str = "unknown_token";
    pub const NOT_LOADED: &str = "model_not_loaded";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub latent_shape: [usize; 3],
    pub alpha_range: [f64; 2],
    pub model_id: String,
    /// Native output of the served model before conversion to noise form.
    pub parameterization: String,
}

impl InfoResponse {
    pub fn shape(&self) -> Result<Shape> {
        Shape::try_from(self.latent_shape)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        let [lo, hi] = self.alpha_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Transport(format!("server reported invalid alpha range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseItem {
    pub latent: String,
    pub shape: [usize; 3],
    pub alpha: f64,
    /// `None` requests the unconditional prediction.
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseRequest {
    pub items: Vec<DenoiseItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseOutput {
    pub eps: String,
    pub shape: [usize; 3],
    /// Discrete model timestep the requested alpha was mapped to.
    pub timestep: Option<i64>,
    pub parameterization: String,
    /// Test servers may return the request latent verbatim here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseResponse {
    pub items: Vec<DenoiseOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogProbRequest {
    /// Text containing one [`MASK_TOKEN`] per target.
    pub template: String,
    pub targets: Vec<String>,
}

impl LogProbRequest {
    pub fn validate(&self) -> Result<()> {
        let masks = self.template.matches(MASK_TOKEN).count();
        if masks == 0 || masks != self.targets.len() {
            return Err(Error::invalid(format!(
                "template has {masks} mask positions for {} targets",
                self.targets.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbResponse {
    /// Natural-log probability of each target at its mask position.
    pub token_log_probs: Vec<f64>,
    pub sum: f64,
}

impl LogProbResponse {
    pub fn from_tokens(token_log_probs: Vec<f64>) -> Self {
        let sum = token_log_probs.iter().sum();
        LogProbResponse { token_log_probs, sum }
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub fn encode_f32(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32(text: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Transport(format!("invalid base64 tensor: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Transport(format!("tensor payload of {} bytes is not a whole number of f32", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Encodes a field at 32-bit precision.
pub fn encode_field(field: &LatentField) -> String {
    let values: Vec<f32> = field.values().iter().map(|&v| v as f32).collect();
    encode_f32(&values)
}

/// Decodes a tensor and checks it against `shape`.
pub fn decode_field(text: &str, shape: [usize; 3]) -> Result<LatentField> {
    let shape = Shape::try_from(shape)?;
    let values = decode_f32(text)?;
    if values.len() != shape.len() {
        return Err(Error::Transport(format!(
            "tensor has {} values but shape {shape} needs {}",
            values.len(),
            shape.len()
        )));
    }
    LatentField::new(shape, values.into_iter().map(f64::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_encoding() {
        assert_eq!(encode_f32(&[1.0]), "AACAPw==");
        assert_eq!(decode_f32("AACAPw==").unwrap(), vec![1.0]);
        assert!(decode_f32("AACA").is_err());
        assert!(decode_f32("***").is_err());
    }

    #[test]
    fn field_decoding_checks_count() {
        let text = encode_f32(&[0.0; 3]);
        assert!(decode_field(&text, [1, 1, 4]).is_err());
        assert_eq!(decode_field(&text, [1, 1, 3]).unwrap().len(), 3);
    }

    #[test]
    fn logprob_template_must_match_targets() {
        let ok = LogProbRequest { template: "a photo of a [MASK]".into(), targets: vec!["doctor".into()] };
        assert!(ok.validate().is_ok());
        let bad = LogProbRequest { template: "[MASK] [MASK]".into(), targets: vec!["a".into()] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn optional_echo_is_omitted() {
        let out = DenoiseOutput {
            eps: String::new(),
            shape: [1, 1, 1],
            timestep: Some(3),
            parameterization: "epsilon".into(),
            echo: None,
        };
        assert!(!serde_json::to_string(&out).unwrap().contains("echo"));
    }

    proptest! {
        #[test]
        fn f32_payload_round_trips_bit_exactly(bits in prop::collection::vec(any::<u32>(), 0..300)) {
            let values: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            let back = decode_f32(&encode_f32(&values)).unwrap();
            let back_bits: Vec<u32> = back.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(back_bits, bits);
        }
    }
}
