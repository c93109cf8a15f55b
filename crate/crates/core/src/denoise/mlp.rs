use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserCondition};
use crate::diffusion::{stream, LogSnrPoint, LogSnrSampler, StreamDomain};
use crate::error::{Error, Result};
use crate::field::{LatentField, Shape};

const CHECKPOINT_FORMAT: &str = "diffpid-mlp/1";

/// One training example: a clean field and, optionally, the index of the
/// condition it was drawn under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: LatentField,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Probability of replacing a label by the unconditional id during training,
    /// so a single network learns both the conditional and unconditional predictor.
    pub label_dropout: f64,
    /// Size of the fixed held-out batch on which initial and final loss are measured.
    pub eval_size: usize,
    pub sampler: LogSnrSampler,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![32, 32],
            steps: 5000,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            label_dropout: 0.5,
            eval_size: 2048,
            sampler: LogSnrSampler::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_size == 0 {
            return Err(Error::invalid("batch_size and eval_size must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("moment decays must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.label_dropout) {
            return Err(Error::invalid("label_dropout must lie in [0, 1]"));
        }
        self.sampler.validate()
    }
}

/// One noisy regression example: network input pieces and the noise target.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub x_alpha: Vec<f64>,
    pub point: LogSnrPoint,
    /// 0 for unconditional, `label + 1` otherwise.
    pub condition: usize,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingBatch {
    pub items: Vec<BatchItem>,
}

impl TrainingBatch {
    /// Draws `size` examples from `dataset` using the generator `rng`.
    pub fn draw<R: Rng + ?Sized>(
        dataset: &[LabeledSample],
        size: usize,
        sampler: &LogSnrSampler,
        label_dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut items = Vec::with_capacity(size);
        for _ in 0..size {
            let sample = &dataset[rng.random_range(0..dataset.len())];
            let u: f64 = Open01.sample(rng);
            let point = LogSnrPoint::new(sampler.quantile(u)?)?;
            let (a, b) = (point.signal_scale(), point.noise_scale());
            let eps: Vec<f64> = (0..sample.x.len()).map(|_| StandardNormal.sample(rng)).collect();
            let x_alpha = sample.x.values().iter().zip(&eps).map(|(x, e)| a * x + b * e).collect();
            let dropped: bool = rng.random_bool(label_dropout);
            let condition = match sample.label {
                Some(l) if !dropped => l + 1,
                _ => 0,
            };
            items.push(BatchItem {
                x_alpha,
                point,
                condition,
                eps,
            });
        }
        Ok(TrainingBatch { items })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub steps: usize,
    /// Loss on the fixed evaluation batch before the first update.
    pub initial_loss: f64,
    /// Loss on the same evaluation batch after the last update.
    pub final_loss: f64,
    /// Mini-batch loss at every step.
    pub loss_trace: Vec<f64>,
}

/// A fully connected tanh network predicting noise from
/// `[x_alpha, a, b, one_hot(condition)]`.
///
/// Condition id 0 is the unconditional slot; id `k + 1` is
/// `condition_names[k]`. A condition is recognized by its prompt text, or, for
/// a single-component subset `{k}`, by position.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    shape: Shape,
    layer_sizes: Vec<usize>,
    condition_names: Vec<String>,
    params: Vec<f64>,
}

/// On-disk form of a trained [`MlpDenoiser`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format: String,
    pub shape: [usize; 3],
    /// Widths of every layer, input and output included.
    pub layer_sizes: Vec<usize>,
    pub condition_names: Vec<String>,
    /// Per layer, the row-major weight matrix (outputs x inputs) followed by the bias.
    pub weights: Vec<f64>,
    pub seed: u64,
    pub config: TrainConfig,
}

impl MlpDenoiser {
    /// Randomly initialized network with `N(0, 1/fan_in)` weights and zero biases.
    pub fn init(shape: Shape, condition_names: Vec<String>, hidden: &[usize], seed: u64) -> Self {
        let d = shape.len();
        let mut layer_sizes = vec![d + 2 + condition_names.len() + 1];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(d);
        let mut rng = stream(seed, StreamDomain::Init, 0);
        let mut params = Vec::new();
        for w in layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let sd = (1.0 / n_in as f64).sqrt();
            params.extend((0..n_in * n_out).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z }));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        MlpDenoiser {
            shape,
            layer_sizes,
            condition_names,
            params,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn condition_names(&self) -> &[String] {
        &self.condition_names
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn condition_id(&self, condition: &DenoiserCondition) -> Result<usize> {
        if condition.is_unconditional() {
            return Ok(0);
        }
        let found = match condition {
            DenoiserCondition::Components { indices } if indices.len() == 1 => {
                Some(indices[0] + 1).filter(|&id| id <= self.condition_names.len())
            }
            _ => condition
                .text()
                .and_then(|t| self.condition_names.iter().position(|n| *n == t))
                .map(|i| i + 1),
        };
        found.ok_or_else(|| Error::UnsupportedCondition {
            denoiser: self.name(),
            condition: condition.to_string(),
        })
    }

    fn input(&self, x_alpha: &[f64], point: &LogSnrPoint, condition: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layer_sizes[0]);
        v.extend_from_slice(x_alpha);
        v.push(point.signal_scale());
        v.push(point.noise_scale());
        let start = v.len();
        v.resize(self.layer_sizes[0], 0.0);
        v[start + condition] = 1.0;
        v
    }

    /// Activations of every layer, input first.
    fn forward(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = vec![input];
        let mut offset = 0;
        let last = self.layer_sizes.len() - 2;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let prev = acts.last().expect("input layer present");
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let z = bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(w, a)| w * a).sum::<f64>();
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    /// Mean over the batch of `||eps - eps_hat||^2` and its gradient with respect
    /// to every parameter.
    pub fn loss_and_grad(&self, batch: &TrainingBatch) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.items.len() as f64;
        let n_layers = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut o = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(o);
            o += w[0] * w[1] + w[1];
        }
        for item in &batch.items {
            let acts = self.forward(self.input(&item.x_alpha, &item.point, item.condition));
            let out = &acts[n_layers];
            let mut delta: Vec<f64> = out
                .iter()
                .zip(&item.eps)
                .map(|(p, e)| {
                    loss += (p - e).powi(2) * scale;
                    2.0 * (p - e) * scale
                })
                .collect();
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let off = offsets[l];
                let prev = &acts[l];
                for j in 0..n_out {
                    let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(prev) {
                        *g += delta[j] * a;
                    }
                    grad[off + n_in * n_out + j] += delta[j];
                }
                if l > 0 {
                    let weights = &self.params[off..off + n_in * n_out];
                    delta = (0..n_in)
                        .map(|i| {
                            let back: f64 = (0..n_out).map(|j| weights[j * n_in + i] * delta[j]).sum();
                            back * (1.0 - prev[i] * prev[i])
                        })
                        .collect();
                }
            }
        }
        (loss, grad)
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> MlpCheckpoint {
        MlpCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            shape: self.shape.as_array(),
            layer_sizes: self.layer_sizes.clone(),
            condition_names: self.condition_names.clone(),
            weights: self.params.clone(),
            seed: config.seed,
            config: config.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: MlpCheckpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unknown checkpoint format {:?}", ckpt.format)));
        }
        let shape = Shape::try_from(ckpt.shape)?;
        let ls = &ckpt.layer_sizes;
        if ls.len() < 2
            || ls[0] != shape.len() + 3 + ckpt.condition_names.len()
            || ls[ls.len() - 1] != shape.len()
        {
            return Err(Error::invalid(format!("layer sizes {ls:?} do not fit shape {shape}")));
        }
        let expected: usize = ls.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if ckpt.weights.len() != expected {
            return Err(Error::invalid(format!(
                "checkpoint has {} weights, layer sizes need {expected}",
                ckpt.weights.len()
            )));
        }
        if ckpt.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::domain("checkpoint contains non-finite weights"));
        }
        Ok(MlpDenoiser {
            shape,
            layer_sizes: ckpt.layer_sizes,
            condition_names: ckpt.condition_names,
            params: ckpt.weights,
        })
    }

    pub fn save(&self, config: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_checkpoint(config))?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ckpt: MlpCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_checkpoint(ckpt)
    }
}

impl Denoiser for MlpDenoiser {
    fn name(&self) -> String {
        format!("mlp{:?}", self.layer_sizes)
    }

    fn predict_eps(&self, x_alpha: &LatentField, point: &LogSnrPoint, condition: &DenoiserCondition) -> Result<LatentField> {
        x_alpha.expect_shape(self.shape, "x_alpha")?;
        let id = self.condition_id(condition)?;
        let mut acts = self.forward(self.input(x_alpha.values(), point, id));
        let out = acts.pop().expect("output layer present");
        LatentField::new(self.shape, out)
    }
}

/// Fits an [`MlpDenoiser`] to `dataset` by Adam on the denoising objective, with
/// noise level and noise freshly drawn at every step.
pub fn train_toy_denoiser(
    dataset: &[LabeledSample],
    condition_names: Vec<String>,
    config: &TrainConfig,
) -> Result<(MlpDenoiser, TrainingReport)> {
    config.validate()?;
    let first = dataset.first().ok_or_else(|| Error::invalid("training set is empty"))?;
    let shape = first.x.shape();
    for (i, s) in dataset.iter().enumerate() {
        s.x.expect_shape(shape, &format!("dataset[{i}].x"))?;
        if let Some(l) = s.label.filter(|&l| l >= condition_names.len()) {
            return Err(Error::invalid(format!("dataset[{i}] label {l} has no condition name")));
        }
    }
    let mut model = MlpDenoiser::init(shape, condition_names, &config.hidden, config.seed);

    // Evaluation uses a stream index past any training step.
    let eval = TrainingBatch::draw(
        dataset,
        config.eval_size,
        &config.sampler,
        config.label_dropout,
        &mut stream(config.seed, StreamDomain::Training, 1 << 40),
    )?;
    let initial_loss = model.loss_and_grad(&eval).0;

    let n = model.params.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut loss_trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut rng = stream(config.seed, StreamDomain::Training, step as u64);
        let batch = TrainingBatch::draw(dataset, config.batch_size, &config.sampler, config.label_dropout, &mut rng)?;
        let (loss, grad) = model.loss_and_grad(&batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, loss });
        }
        loss_trace.push(loss);
        let t = (step + 1) as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for i in 0..n {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
            model.params[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step, loss: f64::NAN });
        }
    }
    let final_loss = model.loss_and_grad(&eval).0;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            step: config.steps,
            loss: final_loss,
        });
    }
    log::debug!("trained {} for {} steps: eval loss {initial_loss:.4} -> {final_loss:.4}", model.name(), config.steps);
    Ok((
        model,
        TrainingReport {
            steps: config.steps,
            initial_loss,
            final_loss,
            loss_trace,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::GmmModel;

    fn toy_dataset(n: usize, seed: u64) -> Vec<LabeledSample> {
        let g = GmmModel::scalar(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)]).unwrap();
        let mut rng = stream(seed, StreamDomain::Sample, 0);
        (0..n)
            .map(|i| LabeledSample {
                x: g.sample_component(i % 2, &mut rng),
                label: Some(i % 2),
            })
            .collect()
    }

    fn names() -> Vec<String> {
        vec!["c0".into(), "c1".into()]
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let data = toy_dataset(64, 1);
        let mut model = MlpDenoiser::init(Shape::scalar(), names(), &[8, 8], 5);
        let batch = TrainingBatch::draw(&data, 16, &LogSnrSampler::default(), 0.5, &mut stream(2, StreamDomain::Training, 0)).unwrap();
        let (_, grad) = model.loss_and_grad(&batch);
        let mut rng = stream(9, StreamDomain::Sample, 0);
        for _ in 0..10 {
            let i = rng.random_range(0..model.params.len());
            let h = 1e-5;
            let orig = model.params[i];
            model.params[i] = orig + h;
            let up = model.loss_and_grad(&batch).0;
            model.params[i] = orig - h;
            let down = model.loss_and_grad(&batch).0;
            model.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel <= 1e-4, "param {i}: analytic {} vs numeric {fd}", grad[i]);
        }
    }

    #[test]
    fn zero_steps_keeps_initialization() {
        let data = toy_dataset(32, 1);
        let config = TrainConfig {
            steps: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let (model, report) = train_toy_denoiser(&data, names(), &config).unwrap();
        let init = MlpDenoiser::init(Shape::scalar(), names(), &config.hidden, 4);
        assert_eq!(model.params(), init.params());
        assert!(report.loss_trace.is_empty());
        assert_eq!(report.initial_loss, report.final_loss);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = toy_dataset(512, 3);
        let config = TrainConfig {
            steps: 400,
            seed: 8,
            ..TrainConfig::default()
        };
        let (a, ra) = train_toy_denoiser(&data, names(), &config).unwrap();
        let (b, rb) = train_toy_denoiser(&data, names(), &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.final_loss < ra.initial_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let data = toy_dataset(32, 1);
        let config = TrainConfig {
            steps: 50,
            learning_rate: 1e300,
            ..TrainConfig::default()
        };
        assert!(matches!(train_toy_denoiser(&data, names(), &config), Err(Error::Diverged { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = MlpDenoiser::init(Shape::scalar(), names(), &[4], 1);
        let config = TrainConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&config, &path).unwrap();
        let back = MlpDenoiser::load(&path).unwrap();
        assert_eq!(back, model);
        let mut bad = model.to_checkpoint(&config);
        bad.weights.pop();
        assert!(MlpDenoiser::from_checkpoint(bad).is_err());
    }

    #[test]
    fn condition_lookup() {
        let model = MlpDenoiser::init(Shape::scalar(), names(), &[4], 1);
        assert_eq!(model.condition_id(&DenoiserCondition::Unconditional).unwrap(), 0);
        assert_eq!(model.condition_id(&DenoiserCondition::prompt("c1")).unwrap(), 2);
        assert_eq!(model.condition_id(&DenoiserCondition::components([0]).unwrap()).unwrap(), 1);
        assert!(model.condition_id(&DenoiserCondition::prompt("c2")).is_err());
        let p = LogSnrPoint::new(0.0).unwrap();
        let out = model.predict_eps(&LatentField::scalar(0.3).unwrap(), &p, &DenoiserCondition::prompt("c0")).unwrap();
        assert_eq!(out.shape(), Shape::scalar());
    }
}
