use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::case::PromptCase;
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::estimate::{estimate_pid, EstimatorConfig, PidPriors};
use crate::field::LatentField;
use crate::priors::PriorProvider;

/// One audit prompt with the clean fields it is evaluated on. The first phrase
/// is the occupation and the second the attribute.
#[derive(Debug, Clone)]
pub struct AuditItem {
    pub case: PromptCase,
    pub samples: Vec<LatentField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub occupation: String,
    pub attribute: String,
    /// Image-level redundancy averaged over the samples.
    pub raw: Option<f64>,
    pub normalized: Option<f64>,
    /// Why the row has no value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Redundancy between occupations and attributes, min-max normalized over the
/// whole audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub rows: Vec<BiasRow>,
    /// Attributes in first-seen order.
    pub attributes: Vec<String>,
    /// Mean normalized redundancy per attribute, in `attributes` order.
    pub averages: Vec<Option<f64>>,
}

impl BiasTable {
    /// Normalizes the raw values to `[0, 1]` and computes attribute averages.
    /// When every raw value is equal they all normalize to zero.
    pub fn from_raw(mut rows: Vec<BiasRow>) -> Self {
        let raw: Vec<f64> = rows.iter().filter_map(|r| r.raw).collect();
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for row in &mut rows {
            row.normalized = row.raw.map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 });
        }
        Self::from_normalized(rows)
    }

    /// Keeps the normalized values as given.
    pub fn from_normalized(rows: Vec<BiasRow>) -> Self {
        let mut attributes: Vec<String> = Vec::new();
        for row in &rows {
            if !attributes.contains(&row.attribute) {
                attributes.push(row.attribute.clone());
            }
        }
        let averages = attributes
            .iter()
            .map(|a| {
                let vals: Vec<f64> = rows.iter().filter(|r| &r.attribute == a).filter_map(|r| r.normalized).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        BiasTable {
            rows,
            attributes,
            averages,
        }
    }

    pub fn occupations(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &self.rows {
            if !out.contains(&row.occupation) {
                out.push(row.occupation.clone());
            }
        }
        out
    }

    pub fn get(&self, occupation: &str, attribute: &str) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.occupation == occupation && r.attribute == attribute)
    }

    /// One line per row: `occupation,attribute,raw_redundancy,normalized_redundancy,error`.
    /// Missing values are empty cells.
    pub fn write_long_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "occupation,attribute,raw_redundancy,normalized_redundancy,error")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                csv_cell(&r.occupation),
                csv_cell(&r.attribute),
                r.raw.map(|v| v.to_string()).unwrap_or_default(),
                r.normalized.map(|v| v.to_string()).unwrap_or_default(),
                csv_cell(r.error.as_deref().unwrap_or(""))
            )?;
        }
        Ok(())
    }

    /// Occupations down the side, attributes across, three decimals, and a
    /// final `Average` row.
    pub fn write_wide_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
        let header: Vec<String> = self.attributes.iter().map(|a| csv_cell(&title_case(a))).collect();
        writeln!(w, "Occupation,{}", header.join(","))?;
        for occ in self.occupations() {
            let cells: Vec<String> = self
                .attributes
                .iter()
                .map(|a| fmt(self.get(&occ, a).and_then(|r| r.normalized)))
                .collect();
            writeln!(w, "{},{}", csv_cell(&title_case(&occ)), cells.join(","))?;
        }
        let avg: Vec<String> = self.averages.iter().map(|v| fmt(*v)).collect();
        writeln!(w, "Average,{}", avg.join(","))?;
        Ok(())
    }
}

fn title_case(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn audit_one(
    item: &AuditItem,
    denoiser: &dyn Denoiser,
    priors: &dyn PriorProvider,
    config: &EstimatorConfig,
) -> Result<f64> {
    if item.samples.is_empty() {
        return Err(Error::invalid("no samples to audit"));
    }
    let query = item.case.query()?;
    let pid_priors = PidPriors::lookup(priors, &query)?;
    let mut total = 0.0;
    for x in &item.samples {
        total += estimate_pid(x, &query, &pid_priors, denoiser, config)?.image.redundancy;
    }
    Ok(total / item.samples.len() as f64)
}

/// Runs every item and tabulates occupation/attribute redundancy. An item that
/// fails becomes a row without values instead of aborting the audit.
pub fn run_bias_audit(
    items: &[AuditItem],
    denoiser: &dyn Denoiser,
    priors: &dyn PriorProvider,
    config: &EstimatorConfig,
) -> BiasTable {
    let results: Vec<Result<f64>> = items.par_iter().map(|it| audit_one(it, denoiser, priors, config)).collect();
    let rows = items
        .iter()
        .zip(results)
        .map(|(item, res)| {
            let (raw, error) = match res {
                Ok(v) => (Some(v), None),
                Err(e) => {
                    log::warn!("audit case {:?} failed: {e}", item.case.prompt);
                    (None, Some(e.to_string()))
                }
            };
            BiasRow {
                occupation: item.case.phrase_text(item.case.phrase1),
                attribute: item.case.phrase_text(item.case.phrase2),
                raw,
                normalized: None,
                error,
            }
        })
        .collect();
    BiasTable::from_raw(rows)
}
