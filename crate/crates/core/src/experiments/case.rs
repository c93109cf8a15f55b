use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserCondition, GmmModel};
use crate::diffusion::{stream, StreamDomain};
use crate::error::{Error, Result};
use crate::estimate::{estimate_pid, EstimatorConfig, PidMaps, PidPriors, PidQuery};
use crate::field::LatentField;
use crate::maps::{export_heatmap, slug, Heatmap, HeatmapMeta, RenderMode};
use crate::priors::PriorProvider;

/// Half-open token range `[start, end)`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl Span {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentTag {
    Bias,
    Homonym,
    Synonym,
    Cohyponym,
    Representative,
    Complex,
    Intervention,
}

/// A prompt with the two phrases to decompose and an optional context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCase {
    pub prompt: String,
    pub phrase1: Span,
    pub phrase2: Span,
    /// Token ranges conditioned on; empty for a plain decomposition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<Span>,
    pub tag: ExperimentTag,
}

impl PromptCase {
    pub fn tokens(&self) -> Vec<String> {
        self.prompt.split_whitespace().map(str::to_string).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens().len();
        let mut used = vec![false; n];
        let spans = [("phrase1", self.phrase1), ("phrase2", self.phrase2)]
            .into_iter()
            .chain(self.context.iter().map(|s| ("context", *s)));
        for (name, span) in spans {
            if span.start >= span.end {
                return Err(Error::invalid(format!("{name} span {:?} is empty", <[usize; 2]>::from(span))));
            }
            if span.end > n {
                return Err(Error::invalid(format!("{name} span ends at {} in a {n}-token prompt", span.end)));
            }
            for i in span.indices() {
                if std::mem::replace(&mut used[i], true) {
                    return Err(Error::invalid(format!("token {i} belongs to more than one selection")));
                }
            }
        }
        Ok(())
    }

    fn selection(&self, spans: &[Span]) -> Result<DenoiserCondition> {
        DenoiserCondition::phrase_set(self.tokens(), spans.iter().flat_map(|s| s.indices()).collect())
    }

    pub fn phrase_text(&self, span: Span) -> String {
        self.tokens()[span.indices()].join(" ")
    }

    pub fn y1(&self) -> Result<DenoiserCondition> {
        self.selection(&[self.phrase1])
    }

    pub fn y2(&self) -> Result<DenoiserCondition> {
        self.selection(&[self.phrase2])
    }

    pub fn context_condition(&self) -> Result<Option<DenoiserCondition>> {
        if self.context.is_empty() {
            Ok(None)
        } else {
            self.selection(&self.context).map(Some)
        }
    }

    /// Every token of the prompt.
    pub fn full_condition(&self) -> DenoiserCondition {
        DenoiserCondition::prompt(self.prompt.clone())
    }

    pub fn query(&self) -> Result<PidQuery> {
        self.validate()?;
        PidQuery::new(self.y1()?, self.y2()?, self.context_condition()?)
    }

    /// `<p1>_<p2>` with each phrase slugged.
    pub fn stem(&self) -> String {
        format!("{}_{}", slug(&self.phrase_text(self.phrase1)), slug(&self.phrase_text(self.phrase2)))
    }
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<PromptCase>> {
    let path = path.as_ref();
    let cases: Vec<PromptCase> = serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    for (i, c) in cases.iter().enumerate() {
        c.validate().map_err(|e| Error::invalid(format!("case {i}: {e}")))?;
    }
    Ok(cases)
}

/// Draws a clean field for `case` from the mixture conditioned on the whole prompt.
pub fn sample_for_case(model: &GmmModel, case: &PromptCase, seed: u64, index: u64) -> Result<LatentField> {
    model.sample(&case.full_condition(), &mut stream(seed, StreamDomain::Sample, index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidCaseReport {
    pub case: PromptCase,
    pub maps: PidMaps,
    /// Files written, when an output directory was given.
    pub files: Vec<PathBuf>,
}

/// Full decomposition of one case, with the four maps and a scalar summary
/// written to `out_dir` when given.
pub fn run_pid_case(
    case: &PromptCase,
    x: &LatentField,
    denoiser: &dyn Denoiser,
    priors: &dyn PriorProvider,
    config: &EstimatorConfig,
    out_dir: Option<&Path>,
    mode: RenderMode,
) -> Result<PidCaseReport> {
    let query = case.query()?;
    let pid_priors = PidPriors::lookup(priors, &query)?;
    let maps = estimate_pid(x, &query, &pid_priors, denoiser, config)?;
    log::info!(
        "{:?}: r={:.4} u1={:.4} u2={:.4} s={:.4}",
        case.prompt,
        maps.image.redundancy,
        maps.image.unique1,
        maps.image.unique2,
        maps.image.synergy
    );
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        let stem = case.stem();
        for (term, field) in [("r", &maps.r_map), ("u1", &maps.u1_map), ("u2", &maps.u2_map), ("s", &maps.s_map)] {
            let meta = HeatmapMeta {
                term: term.into(),
                prompt: case.prompt.clone(),
                mode,
            };
            let out = export_heatmap(&Heatmap::from_field(field, meta), dir, &format!("{term}_{stem}"))?;
            files.extend([out.pfm, out.pgm, out.json]);
        }
        let scalars = dir.join(format!("scalars_{stem}.json"));
        let summary = serde_json::json!({
            "case": case,
            "image": maps.image,
            "mi_y1": {"value": maps.mi_y1.image_level, "std_error": maps.mi_y1.std_error},
            "mi_y2": {"value": maps.mi_y2.image_level, "std_error": maps.mi_y2.std_error},
            "mi_joint": {"value": maps.mi_joint.image_level, "std_error": maps.mi_joint.std_error},
            "priors": maps.priors,
        });
        std::fs::write(&scalars, serde_json::to_string_pretty(&summary)?)?;
        files.push(scalars);
    }
    Ok(PidCaseReport {
        case: case.clone(),
        maps,
        files,
    })
}
