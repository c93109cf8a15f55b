use std::io::{Read, Write};
use std::net::TcpStream;

use diffpid::bridge::fixture::{Cassette, CassetteEntry, FixtureConfig, FixtureServer};
use diffpid::bridge::protocol::{
    decode_field, encode_field, DenoiseItem, DenoiseRequest, LogProbRequest, DENOISE_PATH, LOGPROB_PATH,
};
use diffpid::bridge::BridgeClient;
use diffpid::denoise::{Denoiser, DenoiserCondition};
use diffpid::diffusion::{standard_normal_field, stream, LogSnrPoint, StreamDomain};
use diffpid::experiments::toys;
use diffpid::priors::{BridgePrior, PriorProvider};
use diffpid::{Error, LatentField, Shape};

fn cassette_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cassette.json")
}

fn random_latent(shape: Shape, index: u64) -> LatentField {
    standard_normal_field(shape, &mut stream(11, StreamDomain::Noise, index))
}

fn raw_post(url: &str, path: &str, body: &str) -> Vec<u8> {
    let addr = url.trim_start_matches("http://");
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "POST {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = Vec::new();
    s.read_to_end(&mut out).unwrap();
    let split = out.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    out.split_off(split + 4)
}

#[test]
fn fixture_reports_its_geometry() {
    let server = FixtureServer::start(FixtureConfig::echo()).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    assert_eq!(client.latent_shape(), Shape::new(4, 8, 8).unwrap());
    assert_eq!(client.info().parameterization, "epsilon");
}

#[test]
fn echo_model_predicts_zero_noise() {
    let server = FixtureServer::start(FixtureConfig::echo()).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let x = random_latent(client.latent_shape(), 0);
    let point = LogSnrPoint::new(0.3).unwrap();
    let eps = client.predict_eps(&x, &point, &DenoiserCondition::prompt("a cat")).unwrap();
    assert_eq!(eps.shape(), x.shape());
    assert!(eps.values().iter().all(|&v| v == 0.0));
}

#[test]
fn echo_channel_returns_request_bytes() {
    let server = FixtureServer::start(FixtureConfig::echo()).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let x = random_latent(client.latent_shape(), 1);
    let latent = encode_field(&x);
    let request = DenoiseRequest {
        items: vec![DenoiseItem {
            latent: latent.clone(),
            shape: [4, 8, 8],
            alpha: -1.5,
            prompt: None,
        }],
    };
    let response = client.denoise(&request).unwrap();
    let echo = response.items[0].echo.as_deref().unwrap();
    assert_eq!(echo.as_bytes(), latent.as_bytes());
    assert_eq!(decode_field(echo, [4, 8, 8]).unwrap(), decode_field(&latent, [4, 8, 8]).unwrap());
}

#[test]
fn repeated_requests_give_identical_bytes() {
    let server = FixtureServer::start(FixtureConfig::gmm(toys::synonym_scene())).unwrap();
    let x = random_latent(Shape::new(1, 4, 4).unwrap(), 2);
    let body = serde_json::to_string(&DenoiseRequest {
        items: vec![DenoiseItem {
            latent: encode_field(&x),
            shape: [1, 4, 4],
            alpha: 0.75,
            prompt: Some("car".into()),
        }],
    })
    .unwrap();
    let first = raw_post(server.url(), DENOISE_PATH, &body);
    let second = raw_post(server.url(), DENOISE_PATH, &body);
    assert!(!first.is_empty());
    assert_eq!(first, second);
}

#[test]
fn mixture_mode_matches_in_process_predictions() {
    let model = toys::synonym_scene();
    let server = FixtureServer::start(FixtureConfig::gmm(model.clone())).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let conditions = [
        DenoiserCondition::Unconditional,
        DenoiserCondition::prompt("car"),
        DenoiserCondition::prompt("car automobile"),
    ];
    let refs: Vec<&DenoiserCondition> = conditions.iter().collect();
    for (i, alpha) in [-6.0, 0.0, 5.0].into_iter().enumerate() {
        // The wire carries f32, so compare against the prediction on the rounded latent.
        let x = random_latent(model.shape(), 10 + i as u64).map(|v| v as f32 as f64);
        let point = LogSnrPoint::new(alpha).unwrap();
        let remote = client.predict_eps_batch(&x, &point, &refs).unwrap();
        for (cond, got) in conditions.iter().zip(&remote) {
            let want = model.predict_eps(&x, &point, cond).unwrap();
            for (a, b) in got.values().iter().zip(want.values()) {
                assert_eq!(*a, *b as f32 as f64, "{cond} at alpha {alpha}");
            }
        }
    }
}

#[test]
fn transport_failure_is_its_own_error() {
    let url = {
        let server = FixtureServer::start(FixtureConfig::echo()).unwrap();
        server.url().to_string()
    };
    match BridgeClient::connect_with_timeout(&url, std::time::Duration::from_secs(2)) {
        Err(Error::Transport(_)) => {}
        other => panic!("expected a transport error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn local_shape_mismatch_is_rejected_before_sending() {
    let server = FixtureServer::start(FixtureConfig::echo()).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let before = server.request_count();
    let x = LatentField::zeros(Shape::new(4, 8, 7).unwrap());
    let err = client
        .predict_eps(&x, &LogSnrPoint::new(0.0).unwrap(), &DenoiserCondition::Unconditional)
        .unwrap_err();
    assert!(matches!(err, Error::BridgeShape { .. }), "{err}");
    assert_eq!(server.request_count(), before);
}

#[test]
fn served_shape_mismatch_is_detected() {
    let x = LatentField::zeros(Shape::new(4, 8, 8).unwrap());
    let request = DenoiseRequest {
        items: vec![DenoiseItem {
            latent: encode_field(&x),
            shape: [4, 8, 8],
            alpha: 0.0,
            prompt: None,
        }],
    };
    let wrong = LatentField::zeros(Shape::new(4, 4, 4).unwrap());
    let body = format!(
        r#"{{"items":[{{"eps":"{}","shape":[4,4,4],"timestep":500,"parameterization":"epsilon"}}]}}"#,
        encode_field(&wrong)
    );
    let cassette = Cassette {
        entries: vec![CassetteEntry {
            path: DENOISE_PATH.into(),
            request: serde_json::to_value(&request).unwrap(),
            body,
        }],
    };
    let server = FixtureServer::start(FixtureConfig::echo().with_cassette(cassette)).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let err = client
        .predict_eps(&x, &LogSnrPoint::new(0.0).unwrap(), &DenoiserCondition::Unconditional)
        .unwrap_err();
    assert!(matches!(err, Error::BridgeShape { .. }), "{err}");
}

#[test]
fn unknown_phrase_is_unsupported_condition() {
    let server = FixtureServer::start(FixtureConfig::gmm(toys::synonym_scene())).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let x = LatentField::zeros(client.latent_shape());
    let err = client
        .predict_eps(&x, &LogSnrPoint::new(0.0).unwrap(), &DenoiserCondition::prompt("spaceship"))
        .unwrap_err();
    assert!(matches!(err, Error::UnsupportedCondition { .. }), "{err}");
    let err = client
        .predict_eps(&x, &LogSnrPoint::new(0.0).unwrap(), &DenoiserCondition::components([0]).unwrap())
        .unwrap_err();
    assert!(matches!(err, Error::UnsupportedCondition { .. }), "{err}");
}

#[test]
fn out_of_range_alpha_is_rejected_by_the_server() {
    let server = FixtureServer::start(FixtureConfig::echo()).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let x = LatentField::zeros(client.latent_shape());
    let err = client
        .predict_eps(&x, &LogSnrPoint::new(20.0).unwrap(), &DenoiserCondition::Unconditional)
        .unwrap_err();
    match err {
        Error::BridgeRejected { status, message } => {
            assert_eq!(status, 422);
            assert!(message.starts_with("alpha_out_of_range"), "{message}");
        }
        other => panic!("expected a rejection, got {other}"),
    }
}

#[test]
fn uniform_masked_model_log_probability() {
    let server = FixtureServer::start(FixtureConfig::echo()).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let response = client
        .logprob(&LogProbRequest {
            template: "a [MASK] on a [MASK]".into(),
            targets: vec!["cat".into(), "mat".into()],
        })
        .unwrap();
    let lp = -(30522f64).ln();
    assert_eq!(response.token_log_probs, vec![lp, lp]);
    assert!((response.sum - 2.0 * lp).abs() < 1e-12);
}

#[test]
fn unknown_token_is_rejected() {
    let mut config = FixtureConfig::echo();
    config.vocabulary = Some(vec!["cat".into()]);
    let server = FixtureServer::start(config).unwrap();
    let client = BridgeClient::connect(server.url()).unwrap();
    let err = client
        .logprob(&LogProbRequest {
            template: "[MASK]".into(),
            targets: vec!["dog".into()],
        })
        .unwrap_err();
    assert!(matches!(err, Error::BridgeRejected { status: 422, .. }), "{err}");
}

#[test]
fn recorded_prior_replays_byte_for_byte() {
    let cassette = Cassette::load(cassette_path()).unwrap();
    let recorded = cassette.entries[0].body.clone();
    let server = FixtureServer::start(FixtureConfig::echo().with_cassette(cassette)).unwrap();
    let request = r#"{"template":"a photo of a [MASK]","targets":["doctor"]}"#;
    assert_eq!(raw_post(server.url(), LOGPROB_PATH, request), recorded.as_bytes());

    let prior = BridgePrior::new(BridgeClient::connect(server.url()).unwrap());
    let lp = prior
        .lookup(
            &DenoiserCondition::prompt("doctor"),
            Some(&DenoiserCondition::prompt("a photo of a")),
        )
        .unwrap();
    assert_eq!(lp.neg_log_prob().to_bits(), 6.481170654296875f64.to_bits());
}

#[test]
fn bridge_prior_caches_and_counts_clamps() {
    let cassette = Cassette::load(cassette_path()).unwrap();
    let server = FixtureServer::start(FixtureConfig::echo().with_cassette(cassette)).unwrap();
    let prior = BridgePrior::new(BridgeClient::connect(server.url()).unwrap());
    let phrase = DenoiserCondition::prompt("nurse");
    let ctx = DenoiserCondition::prompt("a photo of a");
    let first = prior.lookup(&phrase, Some(&ctx)).unwrap();
    let count = server.request_count();
    let second = prior.lookup(&phrase, Some(&ctx)).unwrap();
    assert_eq!(first, second);
    assert_eq!(server.request_count(), count);
    assert_eq!(prior.clamp_events(), 0);

    let rare = prior.lookup(&DenoiserCondition::prompt("zyzzyva"), None).unwrap();
    assert_eq!(prior.clamp_events(), 1);
    assert!((rare.log_prob - 1e-12f64.ln()).abs() < 1e-12);
}
