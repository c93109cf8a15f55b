//! In-process stand-in for a bridge server, for tests and offline runs.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use tiny_http::{Header, Method, Request, Response, Server};

use super::protocol::{
    codes, decode_field, encode_f32, encode_field, DenoiseOutput, DenoiseRequest, DenoiseResponse, ErrorBody,
    InfoResponse, LogProbRequest, LogProbResponse, DENOISE_PATH, INFO_PATH, LOGPROB_PATH,
};
use crate::denoise::{Denoiser, DenoiserCondition, GmmModel};
use crate::diffusion::LogSnrPoint;
use crate::error::{Error, Result};

/// Number of discrete noise levels the fixture pretends to serve.
const TIMESTEPS: usize = 1000;

/// How the fixture answers denoise requests.
#[derive(Debug, Clone)]
pub enum FixtureModel {
    /// Zero noise prediction; the request latent is returned in `echo`.
    EchoZero,
    /// Exact mixture predictions, with prompts read as phrase lists.
    Gmm(GmmModel),
}

/// One recorded exchange. `body` is returned verbatim whenever a request to
/// `path` parses to the same JSON value as `request`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub path: String,
    pub request: serde_json::Value,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn find(&self, path: &str, request: &serde_json::Value) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.path == path && &e.request == request)
            .map(|e| e.body.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub info: InfoResponse,
    pub model: FixtureModel,
    /// Vocabulary size of the uniform masked-token model.
    pub vocab_size: usize,
    /// When set, targets outside this list are rejected as unknown tokens.
    pub vocabulary: Option<Vec<String>>,
    pub cassette: Cassette,
}

impl FixtureConfig {
    /// Echo model over 4x8x8 latents.
    pub fn echo() -> Self {
        FixtureConfig {
            info: InfoResponse {
                latent_shape: [4, 8, 8],
                alpha_range: [-12.0, 12.0],
                model_id: "fixture-echo".into(),
                parameterization: "epsilon".into(),
            },
            model: FixtureModel::EchoZero,
            vocab_size: 30522,
            vocabulary: None,
            cassette: Cassette::default(),
        }
    }

    /// Serves the exact denoiser of `model`.
    pub fn gmm(model: GmmModel) -> Self {
        let mut config = FixtureConfig::echo();
        config.info.latent_shape = model.shape().as_array();
        config.info.model_id = "fixture-gmm".into();
        config.model = FixtureModel::Gmm(model);
        config
    }

    pub fn with_cassette(mut self, cassette: Cassette) -> Self {
        self.cassette = cassette;
        self
    }
}

/// A fixture server listening on an ephemeral localhost port until dropped.
pub struct FixtureServer {
    server: Arc<Server>,
    thread: Option<JoinHandle<()>>,
    url: String,
    requests: Arc<AtomicUsize>,
}

impl FixtureServer {
    pub fn start(config: FixtureConfig) -> Result<Self> {
        let server = Server::http("127.0.0.1:0").map_err(|e| Error::Transport(e.to_string()))?;
        let port = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Transport("fixture server has no IP address".into()))?
            .port();
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let thread = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::SeqCst);
                    handle(&config, request);
                }
            })
        };
        Ok(FixtureServer {
            server,
            thread: Some(thread),
            url: format!("http://127.0.0.1:{port}"),
            requests,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests served so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

type Reply = std::result::Result<String, (u16, ErrorBody)>;

fn fail(status: u16, error: &str, message: impl Into<String>) -> (u16, ErrorBody) {
    (
        status,
        ErrorBody {
            error: error.into(),
            message: message.into(),
        },
    )
}

fn handle(config: &FixtureConfig, mut request: Request) {
    let path = request.url().to_string();
    let mut body = String::new();
    let reply: Reply = match request.as_reader().read_to_string(&mut body) {
        Err(e) => Err(fail(400, codes::BAD_REQUEST, e.to_string())),
        Ok(_) => route(config, request.method(), &path, &body),
    };
    let (status, text) = match reply {
        Ok(text) => (200, text),
        Err((status, err)) => (status, serde_json::to_string(&err).expect("error body serializes")),
    };
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let _ = request.respond(Response::from_string(text).with_status_code(status).with_header(header));
}

fn route(config: &FixtureConfig, method: &Method, path: &str, body: &str) -> Reply {
    if *method == Method::Post {
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| fail(400, codes::BAD_REQUEST, e.to_string()))?;
        if let Some(recorded) = config.cassette.find(path, &value) {
            return Ok(recorded.to_string());
        }
        return match path {
            DENOISE_PATH => denoise(config, value),
            LOGPROB_PATH => logprob(config, value),
            _ => Err(fail(404, codes::BAD_REQUEST, format!("no route {path}"))),
        };
    }
    match path {
        INFO_PATH => Ok(serde_json::to_string(&config.info).expect("info serializes")),
        _ => Err(fail(404, codes::BAD_REQUEST, format!("no route {path}"))),
    }
}

fn denoise(config: &FixtureConfig, value: serde_json::Value) -> Reply {
    let request: DenoiseRequest =
        serde_json::from_value(value).map_err(|e| fail(400, codes::BAD_REQUEST, e.to_string()))?;
    let [lo, hi] = config.info.alpha_range;
    let mut items = Vec::with_capacity(request.items.len());
    for (i, item) in request.items.into_iter().enumerate() {
        if item.shape != config.info.latent_shape {
            return Err(fail(
                400,
                codes::SHAPE_MISMATCH,
                format!("item {i}: shape {:?}, served {:?}", item.shape, config.info.latent_shape),
            ));
        }
        let latent = decode_field(&item.latent, item.shape).map_err(|e| fail(400, codes::BAD_REQUEST, e.to_string()))?;
        if !(lo..=hi).contains(&item.alpha) {
            return Err(fail(422, codes::ALPHA_OUT_OF_RANGE, format!("alpha {} outside [{lo}, {hi}]", item.alpha)));
        }
        let timestep = ((hi - item.alpha) / (hi - lo) * (TIMESTEPS - 1) as f64).round() as i64;
        let (eps, echo) = match &config.model {
            FixtureModel::EchoZero => (encode_f32(&vec![0.0; latent.len()]), Some(item.latent)),
            FixtureModel::Gmm(model) => {
                let condition = item.prompt.map(DenoiserCondition::prompt).unwrap_or(DenoiserCondition::Unconditional);
                let point = LogSnrPoint::new(item.alpha).map_err(|e| fail(422, codes::ALPHA_OUT_OF_RANGE, e.to_string()))?;
                let eps = model.predict_eps(&latent, &point, &condition).map_err(|e| match e {
                    Error::UnsupportedCondition { .. } => fail(422, codes::UNSUPPORTED_CONDITION, e.to_string()),
                    other => fail(400, codes::BAD_REQUEST, other.to_string()),
                })?;
                (encode_field(&eps), None)
            }
        };
        items.push(DenoiseOutput {
            eps,
            shape: item.shape,
            timestep: Some(timestep),
            parameterization: config.info.parameterization.clone(),
            echo,
        });
    }
    Ok(serde_json::to_string(&DenoiseResponse { items }).expect("response serializes"))
}

fn logprob(config: &FixtureConfig, value: serde_json::Value) -> Reply {
    let request: LogProbRequest =
        serde_json::from_value(value).map_err(|e| fail(400, codes::BAD_REQUEST, e.to_string()))?;
    request.validate().map_err(|e| fail(400, codes::BAD_REQUEST, e.to_string()))?;
    if let Some(vocab) = &config.vocabulary {
        if let Some(t) = request.targets.iter().find(|t| !vocab.contains(t)) {
            return Err(fail(422, codes::UNKNOWN_TOKEN, format!("token {t:?} not in vocabulary")));
        }
    }
    let lp = -(config.vocab_size as f64).ln();
    let response = LogProbResponse::from_tokens(vec![lp; request.targets.len()]);
    Ok(serde_json::to_string(&response).expect("response serializes"))
}
