//! Phrase probabilities `p(y)` and `p(y | context)`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bridge::protocol::{LogProbRequest, MASK_TOKEN};
use crate::bridge::BridgeClient;
use crate::denoise::{DenoiserCondition, GmmModel};
use crate::error::{Error, Result};

/// Smallest token probability the bridge path accepts before taking logs.
pub const BRIDGE_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseLogProb {
    pub phrase: String,
    pub context: Option<String>,
    /// Natural log, never positive.
    pub log_prob: f64,
}

impl PhraseLogProb {
    pub fn new(phrase: impl Into<String>, context: Option<String>, log_prob: f64) -> Result<Self> {
        let phrase = phrase.into();
        if log_prob == f64::NEG_INFINITY {
            return Err(Error::ZeroProbability(phrase));
        }
        if !log_prob.is_finite() || log_prob > 0.0 {
            return Err(Error::domain(format!("log-probability {log_prob} of {phrase:?} is not in (-inf, 0]")));
        }
        Ok(PhraseLogProb {
            phrase,
            context,
            log_prob,
        })
    }

    /// Surprisal `-log p` in nats.
    pub fn neg_log_prob(&self) -> f64 {
        -self.log_prob
    }
}

pub trait PriorProvider: Send + Sync {
    /// Identifier recorded in run manifests.
    fn name(&self) -> String;

    /// `log p(phrase)` when `context` is absent or empty, else `log p(phrase | context)`.
    fn lookup(&self, phrase: &DenoiserCondition, context: Option<&DenoiserCondition>) -> Result<PhraseLogProb>;
}

fn label(c: &DenoiserCondition) -> String {
    c.text().unwrap_or_else(|| c.to_string())
}

fn effective_context(context: Option<&DenoiserCondition>) -> Option<&DenoiserCondition> {
    context.filter(|c| !c.is_unconditional())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub phrase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub prob: f64,
}

/// Fixed lookup table, loaded from `{"entries":[{"phrase":..,"context":..,"prob":..}]}`.
#[derive(Debug, Clone, Default)]
pub struct TablePrior {
    entries: HashMap<(String, Option<String>), f64>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    entries: Vec<TableEntry>,
}

impl TablePrior {
    pub fn new(entries: impl IntoIterator<Item = TableEntry>) -> Result<Self> {
        let mut table = HashMap::new();
        for e in entries {
            if !(e.prob > 0.0 && e.prob <= 1.0) {
                return Err(if e.prob == 0.0 {
                    Error::ZeroProbability(e.phrase)
                } else {
                    Error::domain(format!("probability {} of {:?} outside (0, 1]", e.prob, e.phrase))
                });
            }
            let context = e.context.filter(|c| !c.trim().is_empty());
            table.insert((e.phrase, context), e.prob);
        }
        Ok(TablePrior { entries: table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: TableFile = serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(file.entries)
    }
}

impl PriorProvider for TablePrior {
    fn name(&self) -> String {
        format!("table[{}]", self.entries.len())
    }

    fn lookup(&self, phrase: &DenoiserCondition, context: Option<&DenoiserCondition>) -> Result<PhraseLogProb> {
        let p = label(phrase);
        let c = effective_context(context).map(label);
        let prob = self.entries.get(&(p.clone(), c.clone())).ok_or_else(|| Error::MissingPrior {
            phrase: p.clone(),
            context: c.clone(),
        })?;
        PhraseLogProb::new(p, c, prob.ln())
    }
}

/// Phrase probabilities implied by a mixture's phrase likelihoods.
#[derive(Debug, Clone)]
pub struct GmmPrior {
    model: GmmModel,
}

impl GmmPrior {
    pub fn new(model: GmmModel) -> Self {
        GmmPrior { model }
    }
}

impl PriorProvider for GmmPrior {
    fn name(&self) -> String {
        "gmm".into()
    }

    fn lookup(&self, phrase: &DenoiserCondition, context: Option<&DenoiserCondition>) -> Result<PhraseLogProb> {
        let ctx = effective_context(context);
        let prob = match ctx {
            None => self.model.condition_mass(phrase)?,
            Some(c) => self.model.conditional_mass(phrase, c)?,
        };
        if prob <= 0.0 {
            return Err(Error::ZeroProbability(label(phrase)));
        }
        PhraseLogProb::new(label(phrase), ctx.map(label), prob.min(1.0).ln())
    }
}

/// Masked-language-model prior served over the bridge.
///
/// Each word of the phrase is masked on its own, with every other word of the
/// template left in place, and the word log-probabilities are summed. Without
/// a context the template is the phrase alone; with a context it is the
/// context followed by the phrase, or, for phrase selections of one prompt,
/// the selected words in prompt order. Token probabilities below
/// [`BRIDGE_PROB_FLOOR`] are raised to it and counted.
pub struct BridgePrior {
    client: BridgeClient,
    cache: Mutex<HashMap<LogProbRequest, f64>>,
    clamped: AtomicUsize,
}

impl BridgePrior {
    pub fn new(client: BridgeClient) -> Self {
        BridgePrior {
            client,
            cache: Mutex::new(HashMap::new()),
            clamped: AtomicUsize::new(0),
        }
    }

    /// Number of token probabilities raised to the floor so far.
    pub fn clamp_events(&self) -> usize {
        self.clamped.load(Ordering::SeqCst)
    }

    /// One request per phrase word.
    pub fn requests(phrase: &DenoiserCondition, context: Option<&DenoiserCondition>) -> Result<Vec<LogProbRequest>> {
        let (words, targets): (Vec<String>, Vec<usize>) = match (phrase, effective_context(context)) {
            (DenoiserCondition::Components { .. }, _) | (_, Some(DenoiserCondition::Components { .. })) => {
                return Err(Error::UnsupportedCondition {
                    denoiser: "bridge prior".into(),
                    condition: phrase.to_string(),
                })
            }
            (
                DenoiserCondition::PhraseSet { tokens, keep },
                Some(DenoiserCondition::PhraseSet {
                    tokens: ctx_tokens,
                    keep: ctx_keep,
                }),
            ) if tokens == ctx_tokens => {
                let mut all: Vec<usize> = keep.iter().chain(ctx_keep).copied().collect();
                all.sort_unstable();
                all.dedup();
                let targets = all.iter().enumerate().filter(|(_, p)| keep.contains(p)).map(|(i, _)| i).collect();
                (all.iter().map(|&i| tokens[i].clone()).collect(), targets)
            }
            (_, ctx) => {
                let ctx_words = ctx.map(|c| c.words()).unwrap_or_default();
                let phrase_words = phrase.words();
                let targets = (ctx_words.len()..ctx_words.len() + phrase_words.len()).collect();
                (ctx_words.into_iter().chain(phrase_words).collect(), targets)
            }
        };
        if targets.is_empty() {
            return Err(Error::invalid(format!("phrase {phrase} has no words to score")));
        }
        Ok(targets
            .into_iter()
            .map(|t| {
                let mut template = words.clone();
                template[t] = MASK_TOKEN.to_string();
                LogProbRequest {
                    template: template.join(" "),
                    targets: vec![words[t].clone()],
                }
            })
            .collect())
    }

    fn token_log_prob(&self, request: LogProbRequest) -> Result<f64> {
        if let Some(&v) = self.cache.lock().expect("prior cache poisoned").get(&request) {
            return Ok(v);
        }
        let raw = self.client.logprob(&request)?.sum;
        let floor = BRIDGE_PROB_FLOOR.ln();
        let v = if raw < floor {
            self.clamped.fetch_add(1, Ordering::SeqCst);
            log::warn!("token probability for {:?} in {:?} raised to {BRIDGE_PROB_FLOOR}", request.targets, request.template);
            floor
        } else {
            raw
        };
        Ok(*self.cache.lock().expect("prior cache poisoned").entry(request).or_insert(v))
    }
}

impl PriorProvider for BridgePrior {
    fn name(&self) -> String {
        format!("bridge[{}]", self.client.info().model_id)
    }

    fn lookup(&self, phrase: &DenoiserCondition, context: Option<&DenoiserCondition>) -> Result<PhraseLogProb> {
        let total = Self::requests(phrase, context)?
            .into_iter()
            .map(|r| self.token_log_prob(r))
            .sum::<Result<f64>>()?;
        PhraseLogProb::new(label(phrase), effective_context(context).map(label), total)
    }
}
