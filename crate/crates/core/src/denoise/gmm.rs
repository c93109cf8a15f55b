use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserCondition};
use crate::diffusion::LogSnrPoint;
use crate::error::{Error, Result};
use crate::field::{LatentField, Shape};

/// Per-component covariance: a single variance shared by every dimension, or
/// one variance per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

impl Variance {
    fn at(&self, i: usize) -> f64 {
        match self {
            Variance::Isotropic(v) => *v,
            Variance::Diagonal(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Variance,
}

/// A Gaussian mixture over fields of a fixed shape, with named phrases that
/// reweight its components.
///
/// Each phrase carries a likelihood vector `L[k] = p(phrase | component k)` with
/// entries in `[0, 1]`. Conditioning on a set of phrases multiplies the mixture
/// weights by the product of their likelihood vectors and renormalizes, so a
/// phrase whose vector is an indicator simply names a subset of components.
/// Because every conditional distribution is itself a Gaussian mixture, the
/// minimum-mean-squared-error noise predictor and all densities are available
/// in closed form.
///
/// The JSON form is
/// `{"shape":[c,h,w],"components":[{"weight":..,"mean":[..],"variance":v or [..]}],"phrases":{"name":[..]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGmm", into = "RawGmm")]
pub struct GmmModel {
    shape: Shape,
    components: Vec<GaussianComponent>,
    phrases: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawGmm {
    shape: [usize; 3],
    components: Vec<GaussianComponent>,
    #[serde(default)]
    phrases: BTreeMap<String, Vec<f64>>,
}

impl TryFrom<RawGmm> for GmmModel {
    type Error = Error;

    fn try_from(raw: RawGmm) -> Result<Self> {
        let mut model = GmmModel::new(Shape::try_from(raw.shape)?, raw.components)?;
        for (name, lik) in raw.phrases {
            model = model.with_phrase(name, lik)?;
        }
        Ok(model)
    }
}

impl From<GmmModel> for RawGmm {
    fn from(m: GmmModel) -> Self {
        RawGmm {
            shape: m.shape.as_array(),
            components: m.components,
            phrases: m.phrases,
        }
    }
}

/// Per-component quantities at one noisy input.
struct ComponentTerms {
    /// `log N(x_alpha; a mu_k, a^2 s_k^2 + b^2)`.
    log_lik: Vec<f64>,
    /// `b (x_alpha - a mu_k) / (a^2 s_k^2 + b^2)`, the noise prediction given component k.
    eps: Vec<Vec<f64>>,
}

impl GmmModel {
    /// Builds a mixture. Weights are renormalized to sum to one.
    pub fn new(shape: Shape, components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        for (k, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::domain(format!("component {k} weight must be positive, got {}", c.weight)));
            }
            if c.mean.len() != shape.len() {
                return Err(Error::invalid(format!(
                    "component {k} mean has {} values, shape {shape} needs {}",
                    c.mean.len(),
                    shape.len()
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::domain(format!("component {k} mean is not finite")));
            }
            let ok = match &c.variance {
                Variance::Isotropic(v) => v.is_finite() && *v > 0.0,
                Variance::Diagonal(v) => v.len() == shape.len() && v.iter().all(|x| x.is_finite() && *x > 0.0),
            };
            if !ok {
                return Err(Error::domain(format!(
                    "component {k} variance must be positive and match shape {shape}"
                )));
            }
        }
        let components = components
            .into_iter()
            .map(|c| GaussianComponent {
                weight: c.weight / total,
                ..c
            })
            .collect();
        Ok(GmmModel {
            shape,
            components,
            phrases: BTreeMap::new(),
        })
    }

    /// A one-dimensional mixture of isotropic components given as
    /// `(weight, mean, standard deviation)`.
    pub fn scalar(components: &[(f64, f64, f64)]) -> Result<Self> {
        GmmModel::new(
            Shape::scalar(),
            components
                .iter()
                .map(|&(weight, mean, sd)| GaussianComponent {
                    weight,
                    mean: vec![mean],
                    variance: Variance::Isotropic(sd * sd),
                })
                .collect(),
        )
    }

    /// Registers a phrase with likelihood vector `p(phrase | k)`.
    pub fn with_phrase(mut self, name: impl Into<String>, likelihood: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("phrase name {name:?} must be a single non-empty word")));
        }
        if likelihood.len() != self.components.len() {
            return Err(Error::invalid(format!(
                "phrase {name:?} has {} likelihoods for {} components",
                likelihood.len(),
                self.components.len()
            )));
        }
        if likelihood.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::domain(format!("phrase {name:?} likelihoods must lie in [0, 1]")));
        }
        if likelihood.iter().all(|&l| l == 0.0) {
            return Err(Error::ZeroProbability(name));
        }
        self.phrases.insert(name, likelihood);
        Ok(self)
    }

    /// Registers a phrase that names exactly the given components.
    pub fn with_phrase_components(self, name: impl Into<String>, indices: &[usize]) -> Result<Self> {
        let mut lik = vec![0.0; self.components.len()];
        for &i in indices {
            *lik.get_mut(i)
                .ok_or_else(|| Error::invalid(format!("component index {i} out of range")))? = 1.0;
        }
        self.with_phrase(name, lik)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn phrases(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.phrases
    }

    /// Unnormalized `w_k * p(condition | k)` for every component.
    fn joint_weights(&self, condition: &DenoiserCondition) -> Result<Vec<f64>> {
        condition.validate()?;
        let mut w: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        match condition {
            DenoiserCondition::Components { indices } => {
                if let Some(&bad) = indices.iter().find(|&&i| i >= w.len()) {
                    return Err(self.unsupported(condition, format!("component {bad} out of range")));
                }
                for (k, wk) in w.iter_mut().enumerate() {
                    if !indices.contains(&k) {
                        *wk = 0.0;
                    }
                }
            }
            _ => {
                for word in condition.words() {
                    let lik = self
                        .phrases
                        .get(&word)
                        .ok_or_else(|| self.unsupported(condition, format!("unknown phrase {word:?}")))?;
                    for (wk, l) in w.iter_mut().zip(lik) {
                        *wk *= l;
                    }
                }
            }
        }
        Ok(w)
    }

    fn unsupported(&self, condition: &DenoiserCondition, why: String) -> Error {
        Error::UnsupportedCondition {
            denoiser: self.name(),
            condition: format!("{condition} ({why})"),
        }
    }

    /// Probability of the condition under the mixture, `sum_k w_k p(condition | k)`.
    pub fn condition_mass(&self, condition: &DenoiserCondition) -> Result<f64> {
        Ok(self.joint_weights(condition)?.iter().sum())
    }

    /// Probability of `phrase` given `context`, treating both as independent
    /// evidence about the component.
    pub fn conditional_mass(&self, phrase: &DenoiserCondition, context: &DenoiserCondition) -> Result<f64> {
        let wp = self.joint_weights(phrase)?;
        let wc = self.joint_weights(context)?;
        let ctx: f64 = wc.iter().sum();
        if ctx == 0.0 {
            return Err(Error::ZeroProbability(context.to_string()));
        }
        // Each joint weight already carries one factor of w_k.
        let both: f64 = wp.iter().zip(&wc).zip(&self.components).map(|((p, c), k)| p * c / k.weight).sum();
        Ok(both / ctx)
    }

    /// Mixture weights after conditioning.
    pub fn condition_weights(&self, condition: &DenoiserCondition) -> Result<Vec<f64>> {
        let w = self.joint_weights(condition)?;
        let mass: f64 = w.iter().sum();
        if mass <= 0.0 {
            return Err(Error::ZeroProbability(condition.to_string()));
        }
        Ok(w.into_iter().map(|x| x / mass).collect())
    }

    /// Exact `log p(x | condition)`.
    pub fn log_density(&self, x: &LatentField, condition: &DenoiserCondition) -> Result<f64> {
        x.expect_shape(self.shape, "x")?;
        let w = self.condition_weights(condition)?;
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&w)
            .filter(|(_, &wk)| wk > 0.0)
            .map(|(c, wk)| wk.ln() + gaussian_log_pdf(x.values(), &c.mean, 1.0, |i| c.variance.at(i)))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Exact pointwise information `log p(x | condition) - log p(x | base)`.
    pub fn pointwise_mi(&self, x: &LatentField, condition: &DenoiserCondition, base: &DenoiserCondition) -> Result<f64> {
        Ok(self.log_density(x, condition)? - self.log_density(x, base)?)
    }

    /// Draws one field from the conditioned mixture.
    pub fn sample<R: Rng + ?Sized>(&self, condition: &DenoiserCondition, rng: &mut R) -> Result<LatentField> {
        let w = self.condition_weights(condition)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = w.iter().rposition(|&x| x > 0.0).unwrap_or(0);
        for (i, wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc && *wi > 0.0 {
                k = i;
                break;
            }
        }
        Ok(self.sample_component(k, rng))
    }

    /// Draws one field from component `k`.
    pub fn sample_component<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> LatentField {
        let c = &self.components[k];
        let values = c
            .mean
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let z: f64 = StandardNormal.sample(rng);
                m + c.variance.at(i).sqrt() * z
            })
            .collect();
        LatentField::from_raw(self.shape, values)
    }

    fn component_terms(&self, x_alpha: &LatentField, point: &LogSnrPoint) -> ComponentTerms {
        let a = point.signal_scale();
        let b = point.noise_scale();
        let xs = x_alpha.values();
        let mut log_lik = Vec::with_capacity(self.components.len());
        let mut eps = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let v = |i: usize| a * a * c.variance.at(i) + b * b;
            log_lik.push(gaussian_log_pdf(xs, &c.mean, a, v));
            eps.push(
                xs.iter()
                    .zip(&c.mean)
                    .enumerate()
                    .map(|(i, (x, m))| b * (x - a * m) / v(i))
                    .collect(),
            );
        }
        ComponentTerms { log_lik, eps }
    }

    fn combine(&self, terms: &ComponentTerms, condition: &DenoiserCondition) -> Result<LatentField> {
        let w = self.condition_weights(condition)?;
        let logits: Vec<f64> = w
            .iter()
            .zip(&terms.log_lik)
            .map(|(wk, ll)| if *wk > 0.0 { wk.ln() + ll } else { f64::NEG_INFINITY })
            .collect();
        let lse = log_sum_exp(&logits);
        let mut out = vec![0.0; self.shape.len()];
        for (logit, eps_k) in logits.iter().zip(&terms.eps) {
            let r = (logit - lse).exp();
            if r == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(eps_k) {
                *o += r * e;
            }
        }
        Ok(LatentField::from_raw(self.shape, out))
    }
}

impl Denoiser for GmmModel {
    fn name(&self) -> String {
        format!("gmm[{}x{}]", self.components.len(), self.shape)
    }

    fn predict_eps(&self, x_alpha: &LatentField, point: &LogSnrPoint, condition: &DenoiserCondition) -> Result<LatentField> {
        x_alpha.expect_shape(self.shape, "x_alpha")?;
        self.combine(&self.component_terms(x_alpha, point), condition)
    }

    fn predict_eps_batch(
        &self,
        x_alpha: &LatentField,
        point: &LogSnrPoint,
        conditions: &[&DenoiserCondition],
    ) -> Result<Vec<LatentField>> {
        x_alpha.expect_shape(self.shape, "x_alpha")?;
        let terms = self.component_terms(x_alpha, point);
        conditions.iter().map(|c| self.combine(&terms, c)).collect()
    }
}

/// `log N(x; scale * mean, diag(var))`.
fn gaussian_log_pdf(x: &[f64], mean: &[f64], scale: f64, var: impl Fn(usize) -> f64) -> f64 {
    x.iter()
        .zip(mean)
        .enumerate()
        .map(|(i, (xi, m))| {
            let v = var(i);
            let d = xi - scale * m;
            -0.5 * ((2.0 * PI * v).ln() + d * d / v)
        })
        .sum()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
