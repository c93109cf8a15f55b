use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    codes, decode_field, encode_field, DenoiseItem, DenoiseRequest, DenoiseResponse, ErrorBody, InfoResponse,
    LogProbRequest, LogProbResponse, DENOISE_PATH, INFO_PATH, LOGPROB_PATH,
};
use crate::denoise::{Denoiser, DenoiserCondition};
use crate::diffusion::LogSnrPoint;
use crate::error::{Error, Result};
use crate::field::{LatentField, Shape};

/// HTTP client for a remote denoiser and masked-language-model prior.
///
/// The server geometry is fetched once on connect; every request is checked
/// against it before anything is sent.
#[derive(Debug, Clone)]
pub struct BridgeClient {
    base: String,
    agent: ureq::Agent,
    info: InfoResponse,
}

impl BridgeClient {
    pub fn connect(url: &str) -> Result<Self> {
        Self::connect_with_timeout(url, Duration::from_secs(120))
    }

    pub fn connect_with_timeout(url: &str, timeout: Duration) -> Result<Self> {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        let mut client = BridgeClient {
            base: url.trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
            info: InfoResponse {
                latent_shape: [1, 1, 1],
                alpha_range: [0.0, 0.0],
                model_id: String::new(),
                parameterization: String::new(),
            },
        };
        let response = client.agent.get(format!("{}{INFO_PATH}", client.base)).call();
        client.info = client.read(response)?;
        client.info.validate()?;
        log::info!("connected to bridge {} serving {}", client.base, client.info.model_id);
        Ok(client)
    }

    pub fn url(&self) -> &str {
        &self.base
    }

    pub fn info(&self) -> &InfoResponse {
        &self.info
    }

    pub fn latent_shape(&self) -> Shape {
        self.info.shape().expect("validated on connect")
    }

    pub fn denoise(&self, request: &DenoiseRequest) -> Result<DenoiseResponse> {
        let response: DenoiseResponse = self.post(DENOISE_PATH, request)?;
        if response.items.len() != request.items.len() {
            return Err(Error::Transport(format!(
                "sent {} items, received {}",
                request.items.len(),
                response.items.len()
            )));
        }
        Ok(response)
    }

    pub fn logprob(&self, request: &LogProbRequest) -> Result<LogProbResponse> {
        request.validate()?;
        let response: LogProbResponse = self.post(LOGPROB_PATH, request)?;
        if response.token_log_probs.len() != request.targets.len() {
            return Err(Error::Transport(format!(
                "asked for {} token log-probabilities, received {}",
                request.targets.len(),
                response.token_log_probs.len()
            )));
        }
        if response.token_log_probs.iter().any(|l| !l.is_finite() || *l > 0.0) {
            return Err(Error::Transport(format!(
                "server returned invalid log-probabilities {:?}",
                response.token_log_probs
            )));
        }
        Ok(response)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let response = self.agent.post(format!("{}{path}", self.base)).send_json(body);
        self.read(response)
    }

    fn read<R: DeserializeOwned>(
        &self,
        response: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<R> {
        let mut response = response.map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if status >= 400 {
            return Err(match serde_json::from_str::<ErrorBody>(&text) {
                Ok(body) if body.error == codes::UNSUPPORTED_CONDITION => Error::UnsupportedCondition {
                    denoiser: self.info.model_id.clone(),
                    condition: body.message,
                },
                Ok(body) => Error::BridgeRejected {
                    status,
                    message: format!("{}: {}", body.error, body.message),
                },
                Err(_) => Error::BridgeRejected { status, message: text },
            });
        }
        serde_json::from_str(&text).map_err(|e| Error::Transport(format!("malformed response body: {e}")))
    }

    fn prompt_for(&self, condition: &DenoiserCondition) -> Result<Option<String>> {
        if let DenoiserCondition::Components { .. } = condition {
            return Err(Error::UnsupportedCondition {
                denoiser: self.name(),
                condition: condition.to_string(),
            });
        }
        Ok(condition.text())
    }
}

impl Denoiser for BridgeClient {
    fn name(&self) -> String {
        format!("bridge[{}]", self.info.model_id)
    }

    fn predict_eps(&self, x_alpha: &LatentField, point: &LogSnrPoint, condition: &DenoiserCondition) -> Result<LatentField> {
        Ok(self.predict_eps_batch(x_alpha, point, &[condition])?.remove(0))
    }

    fn predict_eps_batch(
        &self,
        x_alpha: &LatentField,
        point: &LogSnrPoint,
        conditions: &[&DenoiserCondition],
    ) -> Result<Vec<LatentField>> {
        let expected = self.latent_shape();
        if x_alpha.shape() != expected {
            return Err(Error::BridgeShape {
                expected,
                found: x_alpha.shape(),
            });
        }
        let latent = encode_field(x_alpha);
        let items = conditions
            .iter()
            .map(|c| {
                Ok(DenoiseItem {
                    latent: latent.clone(),
                    shape: expected.as_array(),
                    alpha: point.alpha(),
                    prompt: self.prompt_for(c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let response = self.denoise(&DenoiseRequest { items })?;
        response
            .items
            .into_iter()
            .map(|out| {
                let found = Shape::try_from(out.shape)?;
                if found != expected {
                    return Err(Error::BridgeShape { expected, found });
                }
                decode_field(&out.eps, out.shape)
            })
            .collect()
    }
}
