use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use diffpid::denoise::{
    train_toy_denoiser, DenoiserCondition, LabeledSample, ShiftedDenoiser, TrainConfig,
};
use diffpid::diffusion::{stream, StreamDomain};
use diffpid::estimate::{
    estimate_mi as run_mi, mmse_curves as run_mmse, orthogonality_residual, write_mmse_csv, FieldSource,
    MixtureSource,
};
use diffpid::experiments::{
    load_cases, prompt_intervention, run_bias_audit, run_pid_case, sample_for_case, AuditItem, ExperimentTag,
    PromptCase, Span,
};
use diffpid::maps::{bilinear_upsample, export_heatmap, read_pfm, threshold_mask, write_pgm, Heatmap, HeatmapMeta, RenderMode};
use diffpid::pid::{discrete_pid_oracle, DiscreteJoint};
use diffpid::LatentField;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::inputs::{load_denoiser, load_prior, parse_condition, parse_list, read_json, resolve_field};

pub struct Context {
    pub config: RunConfig,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl Context {
    pub fn new(config: RunConfig, started: Instant) -> Self {
        Context {
            config,
            started,
            outputs: Vec::new(),
        }
    }

    fn out_dir(&self) -> Option<&Path> {
        self.config.out.as_deref()
    }

    fn require_out(&self, command: &str) -> Result<PathBuf, CliError> {
        self.out_dir()
            .map(Path::to_path_buf)
            .ok_or_else(|| CliError::Usage(format!("{command} needs --out")))
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        if let Some(dir) = self.out_dir() {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            self.outputs.push(path);
        }
        Ok(())
    }

    /// Prints the result and, with an output directory, writes it and the manifest.
    fn finish<A: Serialize>(&mut self, command: &str, args: &A, result: Value) -> Result<(), CliError> {
        let report = json!({ "command": command, "config": self.config, "arguments": args, "result": result });
        let text = serde_json::to_string_pretty(&report)?;
        self.write("result.json", &text)?;
        if let Some(dir) = self.out_dir() {
            let manifest = json!({
                "tool": "diffpid",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "config": self.config,
                "arguments": args,
                "outputs": self.outputs,
                "wall_time_seconds": self.started.elapsed().as_secs_f64(),
            });
            fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        }
        // A closed pipe (e.g. `| head`) is not a failure of the run.
        match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FieldArgs {
    /// Comma-separated field values in channel, row, column order.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// JSON field `{"shape":[c,h,w],"values":[..]}`.
    #[arg(long, value_name = "FILE")]
    pub x_file: Option<PathBuf>,
    /// Which seeded mixture draw to use when no field is given.
    #[arg(long, default_value_t = 0)]
    pub sample_index: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateMiArgs {
    /// Condition: prompt text, or `components:0,1` for mixture components.
    #[arg(long)]
    pub cond: String,
    /// Reference condition; unconditional when omitted.
    #[arg(long, default_value = "")]
    pub base: String,
    #[command(flatten)]
    pub field: FieldArgs,
}

pub fn estimate_mi(ctx: &mut Context, a: &EstimateMiArgs) -> Result<(), CliError> {
    let loaded = load_denoiser(&ctx.config)?;
    let cond = parse_condition(&a.cond)?;
    let base = parse_condition(&a.base)?;
    let seed = ctx.config.estimator.seed;
    let x = resolve_field(a.field.x.as_deref(), a.field.x_file.as_ref(), a.field.sample_index, &loaded, &cond, seed)?;
    let estimate = run_mi(&x, &cond, &base, loaded.denoiser(), &ctx.config.estimator)?;
    let exact = match loaded.gmm() {
        Some(m) => Some(m.pointwise_mi(&x, &cond, &base)?),
        None => None,
    };
    ctx.finish(
        "estimate-mi",
        a,
        json!({ "x": x, "estimate": estimate, "exact_log_density_ratio": exact }),
    )
}

fn parse_span(text: &str) -> Result<Span, CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("span {text:?} must look like start:end")))?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("bad span {text:?}")));
    Ok(Span {
        start: parse(a)?,
        end: parse(b)?,
    })
}

#[derive(Debug, Args, Serialize)]
pub struct EstimatePidArgs {
    /// JSON case file; the case is picked with --case-index.
    #[arg(long, value_name = "FILE", conflicts_with = "prompt")]
    pub cases: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub case_index: usize,
    /// Prompt text, with phrases given as token spans.
    #[arg(long, requires_all = ["phrase1", "phrase2"])]
    pub prompt: Option<String>,
    /// Token span `start:end` of the first phrase.
    #[arg(long)]
    pub phrase1: Option<String>,
    #[arg(long)]
    pub phrase2: Option<String>,
    /// Context spans; repeat for several.
    #[arg(long)]
    pub context: Vec<String>,
    /// `signed` or `clamped` heatmap rendering.
    #[arg(long, default_value = "signed")]
    pub mode: RenderMode,
    #[command(flatten)]
    pub field: FieldArgs,
}

fn pid_case(a: &EstimatePidArgs) -> Result<PromptCase, CliError> {
    if let Some(path) = &a.cases {
        let cases = load_cases(path)?;
        return cases
            .get(a.case_index)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("case index {} out of range ({} cases)", a.case_index, cases.len())));
    }
    let prompt = a.prompt.clone().ok_or_else(|| CliError::Usage("give --cases or --prompt".into()))?;
    let case = PromptCase {
        prompt,
        phrase1: parse_span(a.phrase1.as_deref().unwrap_or_default())?,
        phrase2: parse_span(a.phrase2.as_deref().unwrap_or_default())?,
        context: a.context.iter().map(|s| parse_span(s)).collect::<Result<_, _>>()?,
        tag: ExperimentTag::Complex,
    };
    case.validate()?;
    Ok(case)
}

pub fn estimate_pid(ctx: &mut Context, a: &EstimatePidArgs) -> Result<(), CliError> {
    let case = pid_case(a)?;
    let loaded = load_denoiser(&ctx.config)?;
    let prior = load_prior(&ctx.config, &loaded)?;
    let seed = ctx.config.estimator.seed;
    let x = resolve_field(
        a.field.x.as_deref(),
        a.field.x_file.as_ref(),
        a.field.sample_index,
        &loaded,
        &case.full_condition(),
        seed,
    )?;
    let report = run_pid_case(&case, &x, loaded.denoiser(), prior.as_ref(), &ctx.config.estimator, ctx.out_dir(), a.mode)?;
    ctx.outputs.extend(report.files.iter().cloned());
    let m = &report.maps;
    ctx.finish(
        "estimate-pid",
        a,
        json!({
            "case": case,
            "image": m.image,
            "mi_y1": {"value": m.mi_y1.image_level, "std_error": m.mi_y1.std_error},
            "mi_y2": {"value": m.mi_y2.image_level, "std_error": m.mi_y2.std_error},
            "mi_joint": {"value": m.mi_joint.image_level, "std_error": m.mi_joint.std_error},
            "priors": m.priors,
        }),
    )
}

#[derive(Debug, Args, Serialize)]
pub struct BiasAuditArgs {
    /// JSON case file; phrase1 is the occupation, phrase2 the attribute.
    #[arg(long, value_name = "FILE")]
    pub cases: PathBuf,
    /// Mixture draws per case when no latents are given.
    #[arg(long, default_value_t = 8)]
    pub samples_per_case: u64,
    /// JSON array with one list of fields per case.
    #[arg(long, value_name = "FILE")]
    pub latents: Option<PathBuf>,
}

pub fn bias_audit(ctx: &mut Context, a: &BiasAuditArgs) -> Result<(), CliError> {
    let cases = load_cases(&a.cases)?;
    let loaded = load_denoiser(&ctx.config)?;
    let prior = load_prior(&ctx.config, &loaded)?;
    let seed = ctx.config.estimator.seed;
    let samples: Vec<Vec<LatentField>> = match (&a.latents, loaded.gmm()) {
        (Some(path), _) => {
            let s: Vec<Vec<LatentField>> = read_json(path)?;
            if s.len() != cases.len() {
                return Err(CliError::Usage(format!("{} latent lists for {} cases", s.len(), cases.len())));
            }
            s
        }
        (None, Some(model)) => cases
            .iter()
            .map(|c| (0..a.samples_per_case).map(|i| sample_for_case(model, c, seed, i)).collect())
            .collect::<Result<_, _>>()?,
        (None, None) => return Err(CliError::Usage("--latents is required without a mixture model".into())),
    };
    let items: Vec<AuditItem> = cases
        .into_iter()
        .zip(samples)
        .map(|(case, samples)| AuditItem { case, samples })
        .collect();
    let table = run_bias_audit(&items, loaded.denoiser(), prior.as_ref(), &ctx.config.estimator);
    let mut long = Vec::new();
    table.write_long_csv(&mut long)?;
    let mut wide = Vec::new();
    table.write_wide_csv(&mut wide)?;
    ctx.write("bias_rows.csv", &long)?;
    ctx.write("bias_table.csv", &wide)?;
    ctx.finish("bias-audit", a, serde_json::to_value(&table)?)
}

#[derive(Debug, Args, Serialize)]
pub struct InterveneArgs {
    /// Prompt the field was generated under.
    #[arg(long)]
    pub original: String,
    /// Prompt to regenerate under.
    #[arg(long)]
    pub edited: String,
    /// Log-SNR the field is noised to before regeneration.
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub noise_alpha: f64,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[command(flatten)]
    pub field: FieldArgs,
}

pub fn intervene(ctx: &mut Context, a: &InterveneArgs) -> Result<(), CliError> {
    let loaded = load_denoiser(&ctx.config)?;
    let original = parse_condition(&a.original)?;
    let edited = parse_condition(&a.edited)?;
    let seed = ctx.config.estimator.seed;
    let x = resolve_field(a.field.x.as_deref(), a.field.x_file.as_ref(), a.field.sample_index, &loaded, &original, seed)?;
    let report = prompt_intervention(&x, &original, &edited, a.noise_alpha, a.steps, loaded.denoiser(), seed)?;
    if let Some(dir) = ctx.out_dir().map(Path::to_path_buf) {
        for (stem, field) in [("input", &x), ("output", &report.output)] {
            let meta = HeatmapMeta {
                term: stem.into(),
                prompt: a.edited.clone(),
                mode: RenderMode::Signed,
            };
            let out = export_heatmap(&Heatmap::from_field(field, meta), &dir, stem)?;
            ctx.outputs.extend([out.pfm, out.pgm, out.json]);
        }
    }
    ctx.finish("intervene", a, json!({ "input": x, "report": report }))
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    /// Comma-separated log-SNR values.
    #[arg(long, default_value = "-8,-6,-4,-2,0,2,4,6,8", allow_hyphen_values = true)]
    pub alphas: String,
    /// Fields drawn from the conditioned mixture, or noise draws for a fixed field.
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[command(flatten)]
    pub field: FieldArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MmseCurvesArgs {
    #[arg(long)]
    pub cond: String,
    #[arg(long, default_value = "")]
    pub base: String,
    #[command(flatten)]
    pub curve: CurveArgs,
}

/// A fixed field when one is given, else independent draws from the mixture.
fn field_source<'a>(
    curve: &CurveArgs,
    loaded: &'a crate::inputs::Loaded,
    cond: &DenoiserCondition,
    seed: u64,
) -> Result<Box<dyn FieldSource + 'a>, CliError> {
    match (loaded.gmm(), curve.field.x.is_some() || curve.field.x_file.is_some()) {
        (Some(model), false) => Ok(Box::new(MixtureSource {
            model,
            condition: cond.clone(),
            seed,
        })),
        _ => Ok(Box::new(resolve_field(
            curve.field.x.as_deref(),
            curve.field.x_file.as_ref(),
            curve.field.sample_index,
            loaded,
            cond,
            seed,
        )?)),
    }
}

pub fn mmse_curves(ctx: &mut Context, a: &MmseCurvesArgs) -> Result<(), CliError> {
    let loaded = load_denoiser(&ctx.config)?;
    let cond = parse_condition(&a.cond)?;
    let base = parse_condition(&a.base)?;
    let alphas = parse_list::<f64>(&a.curve.alphas, "--alphas")?;
    let seed = ctx.config.estimator.seed;
    let source = field_source(&a.curve, &loaded, &cond, seed)?;
    let rows = run_mmse(source.as_ref(), &cond, &base, loaded.denoiser(), &alphas, seed, a.curve.samples)?;
    let mut csv = Vec::new();
    write_mmse_csv(&rows, &mut csv)?;
    ctx.write("mmse.csv", &csv)?;
    ctx.finish("mmse-curves", a, serde_json::to_value(&rows)?)
}

#[derive(Debug, Args, Serialize)]
pub struct OrthogonalityArgs {
    #[arg(long)]
    pub cond: String,
    /// Constant added to conditional predictions, as a negative control.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub offset: f64,
    #[command(flatten)]
    pub curve: CurveArgs,
}

pub fn orthogonality(ctx: &mut Context, a: &OrthogonalityArgs) -> Result<(), CliError> {
    let loaded = load_denoiser(&ctx.config)?;
    let cond = parse_condition(&a.cond)?;
    let alphas = parse_list::<f64>(&a.curve.alphas, "--alphas")?;
    let seed = ctx.config.estimator.seed;
    let source = field_source(&a.curve, &loaded, &cond, seed)?;
    let shifted = ShiftedDenoiser {
        inner: loaded.denoiser(),
        offset: a.offset,
    };
    let rows = orthogonality_residual(source.as_ref(), &cond, &shifted, &alphas, seed, a.curve.samples)?;
    let result: Vec<Value> = rows
        .iter()
        .map(|r| {
            let z = if r.std_error > 0.0 { r.mean.abs() / r.std_error } else { f64::INFINITY };
            json!({ "alpha": r.alpha, "mean": r.mean, "std_error": r.std_error, "z": z, "within_4_se": z <= 4.0 })
        })
        .collect();
    ctx.finish("orthogonality", a, Value::Array(result))
}

#[derive(Debug, Args, Serialize)]
pub struct TrainToyArgs {
    /// Training fields drawn per mixture component.
    #[arg(long, default_value_t = 1024)]
    pub samples_per_component: usize,
    /// JSON training config; flags below override it.
    #[arg(long, value_name = "FILE")]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden layer widths, comma-separated.
    #[arg(long)]
    pub hidden: Option<String>,
}

pub fn train_toy(ctx: &mut Context, a: &TrainToyArgs) -> Result<(), CliError> {
    let out = ctx.require_out("train-toy")?;
    let loaded = load_denoiser(&ctx.config)?;
    let model = loaded
        .gmm()
        .ok_or_else(|| CliError::Usage("train-toy draws its data from a mixture: pass --gmm".into()))?;
    let mut train: TrainConfig = match &a.train_config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    train.seed = ctx.config.estimator.seed;
    train.sampler = ctx.config.estimator.sampler;
    if let Some(v) = a.steps {
        train.steps = v;
    }
    if let Some(v) = a.learning_rate {
        train.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        train.batch_size = v;
    }
    if let Some(h) = &a.hidden {
        train.hidden = parse_list(h, "--hidden")?;
    }
    // Each component is named by the phrase that selects it alone, if any.
    let names: Vec<String> = (0..model.components().len())
        .map(|k| {
            model
                .phrases()
                .iter()
                .find(|(_, lik)| lik.iter().enumerate().all(|(j, &l)| (l > 0.0) == (j == k)))
                .map(|(name, _)| name.clone())
                .unwrap_or_else(|| format!("component{k}"))
        })
        .collect();
    let mut rng = stream(train.seed, StreamDomain::Sample, 0);
    let mut dataset = Vec::new();
    for _ in 0..a.samples_per_component {
        for k in 0..names.len() {
            dataset.push(LabeledSample {
                x: model.sample_component(k, &mut rng),
                label: Some(k),
            });
        }
    }
    let (mlp, report) = train_toy_denoiser(&dataset, names.clone(), &train)?;
    fs::create_dir_all(&out)?;
    let ckpt = out.join("checkpoint.json");
    mlp.save(&train, &ckpt)?;
    ctx.outputs.push(ckpt.clone());
    let trace: String = std::iter::once("step,loss\n".to_string())
        .chain(report.loss_trace.iter().enumerate().map(|(i, l)| format!("{i},{l}\n")))
        .collect();
    ctx.write("loss.csv", trace)?;
    let reduction = 1.0 - report.final_loss / report.initial_loss;
    ctx.finish(
        "train-toy",
        a,
        json!({
            "train_config": train,
            "condition_names": names,
            "checkpoint": ckpt,
            "initial_loss": report.initial_loss,
            "final_loss": report.final_loss,
            "loss_reduction": reduction,
        }),
    )
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Xor,
    Rdn,
    Unq,
}

#[derive(Debug, Args, Serialize)]
pub struct OraclePidArgs {
    #[arg(long, value_enum)]
    pub gate: Gate,
    /// Also write the per-event decomposition as CSV.
    #[arg(long, value_name = "FILE")]
    pub events: Option<PathBuf>,
}

pub fn oracle_pid(ctx: &mut Context, a: &OraclePidArgs) -> Result<(), CliError> {
    let joint = match a.gate {
        Gate::Xor => DiscreteJoint::xor_gate(),
        Gate::Rdn => DiscreteJoint::rdn_gate(),
        Gate::Unq => DiscreteJoint::unq_gate(),
    };
    let result = discrete_pid_oracle(&joint)?;
    if let Some(path) = &a.events {
        let mut f = fs::File::create(path)?;
        result.write_csv(&mut f)?;
        ctx.outputs.push(path.clone());
    }
    let e = &result.expected;
    ctx.finish(
        "oracle-pid",
        a,
        json!({
            "gate": a.gate,
            "redundancy": e.redundancy,
            "unique1": e.unique1,
            "unique2": e.unique2,
            "synergy": e.synergy,
        }),
    )
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    /// PFM map to render.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, default_value = "signed")]
    pub mode: RenderMode,
    /// Upsample to `HxW` first.
    #[arg(long)]
    pub size: Option<String>,
    /// Also write a mask of values above mean + k standard deviations.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
}

pub fn render(ctx: &mut Context, a: &RenderArgs) -> Result<(), CliError> {
    let out = ctx.require_out("render")?;
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("map")
        .to_string();
    let meta = HeatmapMeta {
        term: stem.clone(),
        prompt: String::new(),
        mode: a.mode,
    };
    let mut map = read_pfm(&fs::read(&a.input)?, meta)?;
    if let Some(size) = &a.size {
        let (h, w) = size
            .split_once('x')
            .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
            .ok_or_else(|| CliError::Usage(format!("--size {size:?} must look like HxW")))?;
        map = bilinear_upsample(&map, h, w)?;
    }
    let exported = export_heatmap(&map, &out, &stem)?;
    ctx.outputs.extend([exported.pfm, exported.pgm, exported.json]);
    let mut selected = None;
    if let Some(k) = a.threshold {
        let mask = threshold_mask(&map, k);
        let pixels: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
        let mut pgm = Vec::new();
        write_pgm(map.width(), map.height(), &pixels, &mut pgm)?;
        ctx.write(&format!("{stem}_mask.pgm"), &pgm)?;
        selected = Some(mask.iter().filter(|&&m| m).count());
    }
    ctx.finish(
        "render",
        a,
        json!({ "height": map.height(), "width": map.width(), "mode": a.mode, "mask_pixels": selected }),
    )
}
