//! Mutual information and its decomposition from denoiser outputs.
//!
//! For one clean field `x`, the pointwise information a condition carries
//! beyond a base condition is an integral over log-SNR of a squared
//! difference of noise predictions. Every estimate here draws
//! `(alpha, eps)` pairs once, forms `x_alpha` once per pair, and evaluates
//! every condition involved on that same `x_alpha`, so differences between
//! conditions are free of independent sampling noise.
//!
//! Two integrands are available. The standard one is the drop in squared
//! error `|eps - eps_base|^2 - |eps - eps_cond|^2`; the orthogonal one is
//! `|eps_base - eps_cond|^2`. Both are halved and summed over channels at each
//! spatial position. They agree in expectation over `x` drawn from the
//! conditional distribution; the orthogonal one has lower variance.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserCondition, GmmModel};
use crate::diffusion::{forward_perturb, sample_log_snr, standard_normal_field, stream, LogSnrPoint, LogSnrSampler, StreamDomain};
use crate::error::{Error, Result};
use crate::field::{LatentField, Shape};
use crate::pid::{decompose_field, decompose_pointwise, PidAtoms, PointwiseInputs};
use crate::priors::{PhraseLogProb, PriorProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorForm {
    Standard,
    #[default]
    Orthogonal,
}

impl std::str::FromStr for EstimatorForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(EstimatorForm::Standard),
            "orthogonal" => Ok(EstimatorForm::Orthogonal),
            other => Err(Error::invalid(format!("unknown estimator form {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub sampler: LogSnrSampler,
    pub n_alpha: usize,
    /// Noise draws per noise level.
    pub n_eps: usize,
    pub form: EstimatorForm,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            sampler: LogSnrSampler::default(),
            n_alpha: 50,
            n_eps: 1,
            form: EstimatorForm::Orthogonal,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_alpha == 0 || self.n_eps == 0 {
            return Err(Error::invalid("n_alpha and n_eps must be at least 1"));
        }
        self.sampler.validate()
    }
}

/// An information estimate for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Per-pixel information in nats, one channel.
    pub pointwise_map: LatentField,
    /// Mean of `pointwise_map` over spatial positions.
    pub image_level: f64,
    /// Monte-Carlo standard error of `image_level`. Zero when only one noise
    /// level was drawn.
    pub std_error: f64,
    /// Monte-Carlo standard error of every pixel of `pointwise_map`.
    pub pixel_std_error: LatentField,
    pub n_alpha: usize,
    pub n_eps: usize,
    pub form: EstimatorForm,
}

/// Standard and orthogonal estimates computed from one shared set of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormPair {
    pub standard: MiEstimate,
    pub orthogonal: MiEstimate,
}

impl FormPair {
    pub fn get(&self, form: EstimatorForm) -> &MiEstimate {
        match form {
            EstimatorForm::Standard => &self.standard,
            EstimatorForm::Orthogonal => &self.orthogonal,
        }
    }

    fn into_form(self, form: EstimatorForm) -> MiEstimate {
        match form {
            EstimatorForm::Standard => self.standard,
            EstimatorForm::Orthogonal => self.orthogonal,
        }
    }
}

/// Sample mean and its standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-noise-level contributions `g(alpha_j) / q(alpha_j)` of one condition
/// pair, for both integrands, indexed `[j][pixel]`.
struct PairContributions {
    standard: Vec<Vec<f64>>,
    orthogonal: Vec<Vec<f64>>,
}

fn unique_conditions<'a>(pairs: &[(&'a DenoiserCondition, &'a DenoiserCondition)]) -> (Vec<&'a DenoiserCondition>, Vec<(usize, usize)>) {
    let mut unique: Vec<&DenoiserCondition> = Vec::new();
    let mut index = |c: &'a DenoiserCondition| match unique.iter().position(|u| *u == c) {
        Some(i) => i,
        None => {
            unique.push(c);
            unique.len() - 1
        }
    };
    let idx = pairs.iter().map(|(c, b)| (index(c), index(b))).collect();
    (unique, idx)
}

/// Adds `0.5 * f(channel values)` of every spatial position into `out`.
fn accumulate_channel_sum(out: &mut [f64], shape: Shape, scale: f64, f: impl Fn(usize) -> f64) {
    let plane = shape.spatial_len();
    for ch in 0..shape.channels {
        for (p, o) in out.iter_mut().enumerate() {
            *o += scale * f(ch * plane + p);
        }
    }
}

fn contributions(
    x: &LatentField,
    pairs: &[(&DenoiserCondition, &DenoiserCondition)],
    denoiser: &dyn Denoiser,
    config: &EstimatorConfig,
) -> Result<Vec<PairContributions>> {
    config.validate()?;
    let (unique, idx) = unique_conditions(pairs);
    for c in &unique {
        c.validate()?;
    }
    let shape = x.shape();
    let plane = shape.spatial_len();
    let points = sample_log_snr(&config.sampler, config.seed, config.n_alpha)?;
    let n_eps = config.n_eps;

    let per_alpha: Vec<Vec<(Vec<f64>, Vec<f64>)>> = points
        .par_iter()
        .enumerate()
        .map(|(j, wp)| {
            // `weight * n_alpha` is the inverse proposal density at alpha_j.
            let inv_q = wp.weight * config.n_alpha as f64;
            let scale = 0.5 * inv_q / n_eps as f64;
            let mut acc = vec![(vec![0.0; plane], vec![0.0; plane]); pairs.len()];
            for k in 0..n_eps {
                let mut rng = stream(config.seed, StreamDomain::Noise, (j * n_eps + k) as u64);
                let eps = standard_normal_field(shape, &mut rng);
                let xa = forward_perturb(x, &wp.point, &eps)?;
                let preds = denoiser.predict_eps_batch(&xa, &wp.point, &unique)?;
                for (i, p) in preds.iter().enumerate() {
                    p.expect_shape(shape, &format!("eps_hat[{}]", unique[i]))?;
                }
                for ((ci, bi), (std_acc, orth_acc)) in idx.iter().zip(acc.iter_mut()) {
                    let (c, b, e) = (preds[*ci].values(), preds[*bi].values(), eps.values());
                    accumulate_channel_sum(std_acc, shape, scale, |i| (e[i] - b[i]).powi(2) - (e[i] - c[i]).powi(2));
                    accumulate_channel_sum(orth_acc, shape, scale, |i| (b[i] - c[i]).powi(2));
                }
            }
            if acc.iter().any(|(s, o)| s.iter().chain(o).any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteIntegrand {
                    alpha: wp.point.alpha(),
                });
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut out: Vec<PairContributions> = (0..pairs.len())
        .map(|_| PairContributions {
            standard: Vec::with_capacity(config.n_alpha),
            orthogonal: Vec::with_capacity(config.n_alpha),
        })
        .collect();
    for row in per_alpha {
        for (pc, (s, o)) in out.iter_mut().zip(row) {
            pc.standard.push(s);
            pc.orthogonal.push(o);
        }
    }
    Ok(out)
}

fn summarize(contrib: &[Vec<f64>], shape: Shape, config: &EstimatorConfig, form: EstimatorForm) -> MiEstimate {
    let plane = shape.spatial_len();
    let n = contrib.len();
    let mut map = vec![0.0; plane];
    let mut pixel_se = vec![0.0; plane];
    let mut column = vec![0.0; n];
    for p in 0..plane {
        for (c, row) in column.iter_mut().zip(contrib) {
            *c = row[p];
        }
        let (m, se) = mean_and_se(&column);
        map[p] = m;
        pixel_se[p] = se;
    }
    let image: Vec<f64> = contrib.iter().map(|row| row.iter().sum::<f64>() / plane as f64).collect();
    let (_, std_error) = mean_and_se(&image);
    let pointwise_map = LatentField::from_raw(shape.spatial(), map);
    MiEstimate {
        image_level: pointwise_map.mean(),
        pointwise_map,
        std_error,
        pixel_std_error: LatentField::from_raw(shape.spatial(), pixel_se),
        n_alpha: config.n_alpha,
        n_eps: config.n_eps,
        form,
    }
}

/// Estimates several `(condition, base)` pairs on one shared set of draws.
pub fn estimate_pairs(
    x: &LatentField,
    pairs: &[(&DenoiserCondition, &DenoiserCondition)],
    denoiser: &dyn Denoiser,
    config: &EstimatorConfig,
) -> Result<Vec<FormPair>> {
    let shape = x.shape();
    Ok(contributions(x, pairs, denoiser, config)?
        .into_iter()
        .map(|pc| FormPair {
            standard: summarize(&pc.standard, shape, config, EstimatorForm::Standard),
            orthogonal: summarize(&pc.orthogonal, shape, config, EstimatorForm::Orthogonal),
        })
        .collect())
}

/// Information `condition` carries about `x` beyond `base`. With an
/// unconditional base this is the pointwise mutual information; with a
/// context base it is the conditional mutual information.
pub fn estimate_mi(
    x: &LatentField,
    condition: &DenoiserCondition,
    base: &DenoiserCondition,
    denoiser: &dyn Denoiser,
    config: &EstimatorConfig,
) -> Result<MiEstimate> {
    Ok(estimate_pairs(x, &[(condition, base)], denoiser, config)?
        .remove(0)
        .into_form(config.form))
}

/// Both estimator forms of [`estimate_mi`] on shared draws.
pub fn estimate_mi_forms(
    x: &LatentField,
    condition: &DenoiserCondition,
    base: &DenoiserCondition,
    denoiser: &dyn Denoiser,
    config: &EstimatorConfig,
) -> Result<FormPair> {
    Ok(estimate_pairs(x, &[(condition, base)], denoiser, config)?.remove(0))
}

/// The phrases of one decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidQuery {
    pub y1: DenoiserCondition,
    pub y2: DenoiserCondition,
    /// Condition with both phrases present.
    pub joint: DenoiserCondition,
    /// When present, every term is conditioned on it.
    pub context: Option<DenoiserCondition>,
}

impl PidQuery {
    /// A query whose joint condition is the combination of both phrases.
    pub fn new(y1: DenoiserCondition, y2: DenoiserCondition, context: Option<DenoiserCondition>) -> Result<Self> {
        let joint = y1.with_context(&y2)?;
        Ok(PidQuery { y1, y2, joint, context })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidPriors {
    pub y1: PhraseLogProb,
    pub y2: PhraseLogProb,
}

impl PidPriors {
    /// Looks both phrases up, conditioned on the query context if any.
    pub fn lookup(provider: &dyn PriorProvider, query: &PidQuery) -> Result<Self> {
        let ctx = query.context.as_ref();
        Ok(PidPriors {
            y1: provider.lookup(&query.y1, ctx)?,
            y2: provider.lookup(&query.y2, ctx)?,
        })
    }
}

/// Redundancy, uniqueness and synergy maps of one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidMaps {
    pub r_map: LatentField,
    pub u1_map: LatentField,
    pub u2_map: LatentField,
    pub s_map: LatentField,
    /// Atoms of the image-level information values.
    pub image: PidAtoms,
    pub mi_y1: MiEstimate,
    pub mi_y2: MiEstimate,
    pub mi_joint: MiEstimate,
    pub priors: PidPriors,
}

/// Decomposes the information two phrases carry about `x`. With a context the
/// conditions are combined with it and measured against it as base.
pub fn estimate_pid(
    x: &LatentField,
    query: &PidQuery,
    priors: &PidPriors,
    denoiser: &dyn Denoiser,
    config: &EstimatorConfig,
) -> Result<PidMaps> {
    let base = query.context.clone().unwrap_or(DenoiserCondition::Unconditional);
    let c1 = query.y1.with_context(&base)?;
    let c2 = query.y2.with_context(&base)?;
    let cj = query.joint.with_context(&base)?;
    let mut est = estimate_pairs(x, &[(&c1, &base), (&c2, &base), (&cj, &base)], denoiser, config)?.into_iter();
    let mut next = || est.next().expect("three estimates").into_form(config.form);
    let (mi_y1, mi_y2, mi_joint) = (next(), next(), next());
    let nlp1 = priors.y1.neg_log_prob();
    let nlp2 = priors.y2.neg_log_prob();
    let fields = decompose_field(nlp1, nlp2, &mi_y1.pointwise_map, &mi_y2.pointwise_map, &mi_joint.pointwise_map)?;
    let image = decompose_pointwise(&PointwiseInputs::new(
        nlp1,
        nlp2,
        mi_y1.image_level,
        mi_y2.image_level,
        mi_joint.image_level,
    )?)?;
    Ok(PidMaps {
        r_map: fields.redundancy,
        u1_map: fields.unique1,
        u2_map: fields.unique2,
        s_map: fields.synergy,
        image,
        mi_y1,
        mi_y2,
        mi_joint,
        priors: priors.clone(),
    })
}

/// Chain-rule consistency `i(y1,y2;x) - i(y2;x) - i(y1;x|y2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRule {
    pub mi_joint: MiEstimate,
    pub mi_y2: MiEstimate,
    pub cmi_y1_given_y2: MiEstimate,
    pub discrepancy: f64,
    /// Root sum of squares of the three standard errors.
    pub pooled_se: f64,
}

pub fn chain_rule_check(
    x: &LatentField,
    y1: &DenoiserCondition,
    y2: &DenoiserCondition,
    denoiser: &dyn Denoiser,
    config: &EstimatorConfig,
) -> Result<ChainRule> {
    let u = DenoiserCondition::Unconditional;
    let joint = y1.with_context(y2)?;
    let mut est = estimate_pairs(x, &[(&joint, &u), (y2, &u), (&joint, y2)], denoiser, config)?.into_iter();
    let mut next = || est.next().expect("three estimates").into_form(config.form);
    let (mi_joint, mi_y2, cmi) = (next(), next(), next());
    let discrepancy = mi_joint.image_level - mi_y2.image_level - cmi.image_level;
    let pooled_se = (mi_joint.std_error.powi(2) + mi_y2.std_error.powi(2) + cmi.std_error.powi(2)).sqrt();
    Ok(ChainRule {
        mi_joint,
        mi_y2,
        cmi_y1_given_y2: cmi,
        discrepancy,
        pooled_se,
    })
}

/// A deterministic, indexable supply of clean fields.
pub trait FieldSource: Sync {
    fn shape(&self) -> Shape;
    fn field(&self, index: u64) -> Result<LatentField>;
}

/// The same field for every index.
impl FieldSource for LatentField {
    fn shape(&self) -> Shape {
        LatentField::shape(self)
    }

    fn field(&self, _index: u64) -> Result<LatentField> {
        Ok(self.clone())
    }
}

/// Independent draws from a conditioned mixture.
pub struct MixtureSource<'a> {
    pub model: &'a GmmModel,
    pub condition: DenoiserCondition,
    pub seed: u64,
}

impl FieldSource for MixtureSource<'_> {
    fn shape(&self) -> Shape {
        self.model.shape()
    }

    fn field(&self, index: u64) -> Result<LatentField> {
        self.model.sample(&self.condition, &mut stream(self.seed, StreamDomain::Sample, index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl From<(f64, f64)> for MeanSe {
    fn from((mean, se): (f64, f64)) -> Self {
        MeanSe { mean, se }
    }
}

fn check_grid(alphas: &[f64]) -> Result<Vec<LogSnrPoint>> {
    if alphas.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("alpha grid must be strictly increasing"));
    }
    alphas.iter().map(|&a| LogSnrPoint::new(a)).collect()
}

/// One noise level of [`mmse_curves`]. All values are totals over the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmseRow {
    pub alpha: f64,
    pub mmse_base: MeanSe,
    pub mmse_cond: MeanSe,
    pub standard: MeanSe,
    pub orthogonal: MeanSe,
}

pub const MMSE_CSV_HEADER: &str =
    "alpha,mmse_base,mmse_base_se,mmse_cond,mmse_cond_se,standard,standard_se,orthogonal,orthogonal_se";

pub fn write_mmse_csv<W: Write>(rows: &[MmseRow], mut w: W) -> Result<()> {
    writeln!(w, "{MMSE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.mmse_base.mean,
            r.mmse_base.se,
            r.mmse_cond.mean,
            r.mmse_cond.se,
            r.standard.mean,
            r.standard.se,
            r.orthogonal.mean,
            r.orthogonal.se
        )?;
    }
    Ok(())
}

/// Evaluates `f` on `n` paired draws at every grid point and returns the
/// per-draw values, in draw order.
fn grid_draws<T: Send>(
    source: &dyn FieldSource,
    alphas: &[f64],
    seed: u64,
    n: usize,
    f: impl Fn(&LogSnrPoint, &LatentField, &LatentField) -> Result<T> + Sync,
) -> Result<Vec<(f64, Vec<T>)>> {
    if n == 0 {
        return Err(Error::invalid("draw count must be at least 1"));
    }
    let points = check_grid(alphas)?;
    let shape = source.shape();
    points
        .iter()
        .enumerate()
        .map(|(a, point)| {
            let values = (0..n)
                .into_par_iter()
                .map(|i| {
                    let x = source.field(i as u64)?;
                    let eps = standard_normal_field(shape, &mut stream(seed, StreamDomain::Noise, ((a as u64) << 32) | i as u64));
                    let xa = forward_perturb(&x, point, &eps)?;
                    f(point, &xa, &eps)
                })
                .collect::<Result<Vec<T>>>()?;
            Ok((point.alpha(), values))
        })
        .collect()
}

/// Empirical denoising errors and both information integrands at fixed noise
/// levels, with `n_eps` draws per level.
pub fn mmse_curves(
    source: &dyn FieldSource,
    condition: &DenoiserCondition,
    base: &DenoiserCondition,
    denoiser: &dyn Denoiser,
    alphas: &[f64],
    seed: u64,
    n_eps: usize,
) -> Result<Vec<MmseRow>> {
    let draws = grid_draws(source, alphas, seed, n_eps, |point, xa, eps| {
        let p = denoiser.predict_eps_batch(xa, point, &[base, condition])?;
        let (b, c, e) = (p[0].values(), p[1].values(), eps.values());
        let sq = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let (eb, ec) = (sq(e, b), sq(e, c));
        let v = [eb, ec, 0.5 * (eb - ec), 0.5 * sq(b, c)];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteIntegrand { alpha: point.alpha() });
        }
        Ok(v)
    })?;
    Ok(draws
        .into_iter()
        .map(|(alpha, values)| {
            let col = |i: usize| MeanSe::from(mean_and_se(&values.iter().map(|v| v[i]).collect::<Vec<_>>()));
            MmseRow {
                alpha,
                mmse_base: col(0),
                mmse_cond: col(1),
                standard: col(2),
                orthogonal: col(3),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub alpha: f64,
    pub mean: f64,
    pub std_error: f64,
}

/// Mean of `(eps_uncond - eps_cond) . (eps_cond - eps)` at each noise level,
/// over `n` draws of `x` from `source`. For the exact conditional denoiser and
/// `x` drawn from the conditional distribution, this is zero.
pub fn orthogonality_residual(
    source: &dyn FieldSource,
    condition: &DenoiserCondition,
    denoiser: &dyn Denoiser,
    alphas: &[f64],
    seed: u64,
    n: usize,
) -> Result<Vec<ResidualRow>> {
    let u = DenoiserCondition::Unconditional;
    let draws = grid_draws(source, alphas, seed, n, |point, xa, eps| {
        let p = denoiser.predict_eps_batch(xa, point, &[&u, condition])?;
        let (eu, ec, e) = (p[0].values(), p[1].values(), eps.values());
        let v: f64 = (0..e.len()).map(|i| (eu[i] - ec[i]) * (ec[i] - e[i])).sum();
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { alpha: point.alpha() });
        }
        Ok(v)
    })?;
    Ok(draws
        .into_iter()
        .map(|(alpha, values)| {
            let (mean, std_error) = mean_and_se(&values);
            ResidualRow { alpha, mean, std_error }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::ShiftedDenoiser;
    use crate::priors::GmmPrior;
    use approx::assert_relative_eq;

    fn two_comp() -> GmmModel {
        GmmModel::scalar(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)])
            .unwrap()
            .with_phrase_components("c0", &[0])
            .unwrap()
            .with_phrase_components("c1", &[1])
            .unwrap()
    }

    fn cfg(n_alpha: usize, seed: u64) -> EstimatorConfig {
        EstimatorConfig { n_alpha, seed, ..EstimatorConfig::default() }
    }

    #[test]
    fn identical_conditions_give_exact_zero() {
        let g = two_comp();
        let x = LatentField::scalar(0.4).unwrap();
        let c = DenoiserCondition::prompt("c0");
        let e = estimate_mi(&x, &c, &c, &g, &cfg(50, 1)).unwrap();
        assert_eq!(e.image_level, 0.0);
        assert_eq!(e.std_error, 0.0);
        assert!(e.pointwise_map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn image_level_is_map_mean_and_seed_determinism() {
        let shape = Shape::new(2, 3, 4).unwrap();
        let mean = |v: f64| vec![v; shape.len()];
        let g = GmmModel::new(
            shape,
            vec![
                crate::denoise::GaussianComponent { weight: 1.0, mean: mean(-1.0), variance: crate::denoise::Variance::Isotropic(0.3) },
                crate::denoise::GaussianComponent { weight: 1.0, mean: mean(1.0), variance: crate::denoise::Variance::Isotropic(0.3) },
            ],
        )
        .unwrap()
        .with_phrase_components("a", &[0])
        .unwrap();
        let x = g.sample_component(0, &mut stream(1, StreamDomain::Sample, 0));
        let c = DenoiserCondition::prompt("a");
        let e1 = estimate_mi(&x, &c, &DenoiserCondition::Unconditional, &g, &cfg(40, 3)).unwrap();
        let e2 = estimate_mi(&x, &c, &DenoiserCondition::Unconditional, &g, &cfg(40, 3)).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.pointwise_map.shape(), shape.spatial());
        assert_relative_eq!(e1.image_level, e1.pointwise_map.mean(), max_relative = 1e-10);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let e3 = single.install(|| estimate_mi(&x, &c, &DenoiserCondition::Unconditional, &g, &cfg(40, 3)).unwrap());
        assert_eq!(e1, e3);
    }

    #[test]
    fn empty_context_pid_equals_plain_pid() {
        let g = GmmModel::scalar(&[(0.25, -1.5, 0.5), (0.25, -0.5, 0.5), (0.25, 0.5, 0.5), (0.25, 1.5, 0.5)])
            .unwrap()
            .with_phrase_components("a", &[0, 1])
            .unwrap()
            .with_phrase_components("b", &[1, 3])
            .unwrap();
        let prior = GmmPrior::new(g.clone());
        let x = LatentField::scalar(-0.6).unwrap();
        let plain = PidQuery::new(DenoiserCondition::prompt("a"), DenoiserCondition::prompt("b"), None).unwrap();
        let ctx = PidQuery { context: Some(DenoiserCondition::prompt("")), ..plain.clone() };
        let p1 = estimate_pid(&x, &plain, &PidPriors::lookup(&prior, &plain).unwrap(), &g, &cfg(30, 5)).unwrap();
        let p2 = estimate_pid(&x, &ctx, &PidPriors::lookup(&prior, &ctx).unwrap(), &g, &cfg(30, 5)).unwrap();
        assert_eq!(p1.r_map, p2.r_map);
        assert_eq!(p1.s_map, p2.s_map);
        assert_eq!(p1.image, p2.image);
        let total = p1.image.redundancy + p1.image.unique1 + p1.image.unique2 + p1.image.synergy;
        assert_relative_eq!(total, p1.mi_joint.image_level, max_relative = 1e-10);
    }

    #[test]
    fn synonyms_have_no_unique_information() {
        let g = two_comp().with_phrase_components("zero", &[0]).unwrap();
        let prior = GmmPrior::new(g.clone());
        let q = PidQuery::new(DenoiserCondition::prompt("c0"), DenoiserCondition::prompt("zero"), None).unwrap();
        let x = LatentField::scalar(-0.9).unwrap();
        let p = estimate_pid(&x, &q, &PidPriors::lookup(&prior, &q).unwrap(), &g, &cfg(50, 2)).unwrap();
        assert!(p.u1_map.values().iter().all(|&v| v == 0.0));
        assert!(p.u2_map.values().iter().all(|&v| v == 0.0));
        assert_eq!(p.r_map, p.mi_y1.pointwise_map);
    }

    #[test]
    fn empty_first_phrase_has_zero_conditional_information() {
        let g = two_comp();
        let x = LatentField::scalar(0.2).unwrap();
        for form in [EstimatorForm::Standard, EstimatorForm::Orthogonal] {
            let config = EstimatorConfig { form, ..cfg(20, 1) };
            let c = chain_rule_check(&x, &DenoiserCondition::prompt(""), &DenoiserCondition::prompt("c1"), &g, &config).unwrap();
            assert_eq!(c.cmi_y1_given_y2.image_level, 0.0);
            assert_eq!(c.discrepancy, c.mi_joint.image_level - c.mi_y2.image_level);
            assert_eq!(c.discrepancy, 0.0);
        }
    }

    #[test]
    fn unconditional_residual_is_exactly_zero() {
        let g = two_comp();
        let rows = orthogonality_residual(&LatentField::scalar(0.1).unwrap(), &DenoiserCondition::Unconditional, &g, &[-1.0, 0.0, 1.0], 1, 50).unwrap();
        assert!(rows.iter().all(|r| r.mean == 0.0));
    }

    #[test]
    fn shifted_denoiser_breaks_orthogonality() {
        let g = two_comp();
        let shifted = ShiftedDenoiser { inner: &g, offset: 0.5 };
        let c0 = DenoiserCondition::prompt("c0");
        let src = MixtureSource { model: &g, condition: c0.clone(), seed: 4 };
        let rows = orthogonality_residual(&src, &c0, &shifted, &[0.0], 9, 5000).unwrap();
        assert!(rows[0].mean.abs() > 4.0 * rows[0].std_error);
    }

    #[test]
    fn grid_and_counts_are_validated() {
        let g = two_comp();
        let x = LatentField::scalar(0.0).unwrap();
        let u = DenoiserCondition::Unconditional;
        assert!(mmse_curves(&x, &u, &u, &g, &[], 0, 10).is_err());
        assert!(mmse_curves(&x, &u, &u, &g, &[1.0, 0.0], 0, 10).is_err());
        assert!(estimate_mi(&x, &u, &u, &g, &cfg(0, 0)).is_err());
    }

    #[test]
    fn mmse_csv_layout() {
        let g = two_comp();
        let x = LatentField::scalar(0.0).unwrap();
        let rows = mmse_curves(&x, &DenoiserCondition::prompt("c0"), &DenoiserCondition::Unconditional, &g, &[-2.0, 2.0], 0, 10).unwrap();
        let mut buf = Vec::new();
        write_mmse_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(MMSE_CSV_HEADER));
    }
}
