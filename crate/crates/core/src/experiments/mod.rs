//! Runners for whole studies: bias audits, single-case decompositions and
//! prompt interventions, plus small mixtures that stand in for a text-to-image
//! model when ground truth is needed.

mod audit;
mod case;
mod intervention;
pub mod toys;

pub use audit::{run_bias_audit, AuditItem, BiasRow, BiasTable};
pub use case::{load_cases, run_pid_case, sample_for_case, ExperimentTag, PidCaseReport, PromptCase, Span};
pub use intervention::{intervention_grid, pearson, prompt_intervention, InterventionReport, CLEAN_ALPHA};
