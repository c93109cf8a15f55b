//! Client side of the HTTP protocol for remote denoisers and phrase priors.
//!
//! A bridge server exposes three endpoints: `GET /v1/info` reports the latent
//! geometry and model identity, `POST /v1/denoise` returns noise predictions
//! for batches of noisy latents, and `POST /v1/logprob` scores masked tokens.
//! Non-2xx responses carry an [`protocol::ErrorBody`].

mod client;
pub mod protocol;

#[cfg(feature = "fixture-server")]
pub mod fixture;

pub use client::BridgeClient;
