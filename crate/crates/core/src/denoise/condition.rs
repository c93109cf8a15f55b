use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a denoiser is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserCondition {
    Unconditional,
    /// Free prompt text.
    Prompt { text: String },
    /// The words of `tokens` at positions `keep`, in prompt order.
    PhraseSet { tokens: Vec<String>, keep: Vec<usize> },
    /// A subset of mixture components (toy models only).
    Components { indices: Vec<usize> },
}

impl DenoiserCondition {
    pub fn prompt(text: impl Into<String>) -> Self {
        DenoiserCondition::Prompt { text: text.into() }
    }

    pub fn phrase_set(tokens: Vec<String>, keep: Vec<usize>) -> Result<Self> {
        let mut keep = keep;
        keep.sort_unstable();
        keep.dedup();
        let c = DenoiserCondition::PhraseSet { tokens, keep };
        c.validate()?;
        Ok(c)
    }

    pub fn components(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        let c = DenoiserCondition::Components { indices };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DenoiserCondition::PhraseSet { tokens, keep } => {
                if let Some(bad) = keep.iter().find(|&&i| i >= tokens.len()) {
                    return Err(Error::invalid(format!(
                        "phrase index {bad} out of range for a {}-token prompt",
                        tokens.len()
                    )));
                }
                Ok(())
            }
            DenoiserCondition::Components { indices } if indices.is_empty() => {
                Err(Error::invalid("component subset must select at least one component"))
            }
            _ => Ok(()),
        }
    }

    /// True for conditions that carry no information: the unconditional key,
    /// an empty prompt, or an empty phrase selection.
    pub fn is_unconditional(&self) -> bool {
        match self {
            DenoiserCondition::Unconditional => true,
            DenoiserCondition::Prompt { text } => text.trim().is_empty(),
            DenoiserCondition::PhraseSet { keep, .. } => keep.is_empty(),
            DenoiserCondition::Components { .. } => false,
        }
    }

    /// Prompt text for text-conditioned models; `None` when unconditional.
    pub fn text(&self) -> Option<String> {
        match self {
            _ if self.is_unconditional() => None,
            DenoiserCondition::Prompt { text } => Some(text.trim().to_string()),
            DenoiserCondition::PhraseSet { tokens, keep } => Some(
                keep.iter()
                    .map(|&i| tokens[i].as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
            _ => None,
        }
    }

    /// Words of the condition, in order; empty when unconditional.
    pub fn words(&self) -> Vec<String> {
        self.text()
            .map(|t| t.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    }

    /// Conditions on both `self` and `context`. Phrase selections over the same
    /// prompt are united, component subsets intersected, and free text joined
    /// with the context first.
    pub fn with_context(&self, context: &DenoiserCondition) -> Result<DenoiserCondition> {
        use DenoiserCondition::*;
        if context.is_unconditional() {
            return Ok(self.clone());
        }
        if self.is_unconditional() {
            return Ok(context.clone());
        }
        match (self, context) {
            (Components { indices: a }, Components { indices: b }) => {
                let both: Vec<usize> = a.iter().copied().filter(|i| b.contains(i)).collect();
                if both.is_empty() {
                    return Err(Error::invalid(format!(
                        "component subsets {a:?} and {b:?} do not intersect"
                    )));
                }
                DenoiserCondition::components(both)
            }
            (PhraseSet { tokens: ta, keep: ka }, PhraseSet { tokens: tb, keep: kb }) if ta == tb => {
                DenoiserCondition::phrase_set(ta.clone(), ka.iter().chain(kb).copied().collect())
            }
            (Components { .. }, _) | (_, Components { .. }) => Err(Error::invalid(format!(
                "cannot combine component subset with text condition ({self} | {context})"
            ))),
            _ => Ok(DenoiserCondition::prompt(format!(
                "{} {}",
                context.text().unwrap_or_default(),
                self.text().unwrap_or_default()
            ))),
        }
    }
}

impl fmt::Display for DenoiserCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiserCondition::Components { indices } => write!(f, "components{indices:?}"),
            _ => match self.text() {
                Some(t) => write!(f, "{t:?}"),
                None => write!(f, "<unconditional>"),
            },
        }
    }
}
