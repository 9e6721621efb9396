//! JSON imputation report.
//!
//! Field order is fixed by the struct definitions, so identical runs give
//! byte-identical documents. Bump [`SCHEMA_VERSION`] on any change to the
//! shape; `docs/report-schema.md` describes every field.

use serde::Serialize;

use crate::control::{CoeffMode, ControlSolution, Multiplier, PaperDiagnostics};
use crate::fit::{ArModel, FitDiagnostics, RegModel, VarModel};
use crate::linalg::Vector;
use crate::oracle::Verdict;

pub const SCHEMA_VERSION: u32 = 1;

pub const SEED_POLICY: &str =
    "gaps are filled left to right; a seed window that overlaps an earlier gap uses that gap's imputed values";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ar,
    Var,
    Regression,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Ar => "ar",
            ModelKind::Var => "var",
            ModelKind::Regression => "regression",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelReport {
    Ar { coeffs: Vec<f64>, intercept: f64 },
    Var { transition: Vec<Vec<f64>>, intercept: Vec<f64> },
    Regression { coeffs: Vec<Vec<f64>>, intercept: Vec<f64> },
}

impl From<&ArModel> for ModelReport {
    fn from(m: &ArModel) -> Self {
        ModelReport::Ar { coeffs: m.coeffs.clone(), intercept: m.intercept }
    }
}

impl From<&VarModel> for ModelReport {
    fn from(m: &VarModel) -> Self {
        ModelReport::Var { transition: m.transition.to_rows(), intercept: m.intercept.to_vec() }
    }
}

impl From<&RegModel> for ModelReport {
    fn from(m: &RegModel) -> Self {
        ModelReport::Regression { coeffs: m.coeffs.to_rows(), intercept: m.intercept.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModelReport {
    /// First and last index of the observations the fit could draw on.
    pub window: [usize; 2],
    pub model: ModelReport,
    pub diagnostics: FitDiagnostics,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GapStatus {
    Constrained,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleAgreement {
    pub objective_error: f64,
    pub constraint_residual: f64,
    pub pass: bool,
}

impl From<&Verdict> for OracleAgreement {
    fn from(v: &Verdict) -> Self {
        OracleAgreement { objective_error: v.objective_error, constraint_residual: v.constraint_residual, pass: v.pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub gap_start: usize,
    pub gap_end: usize,
    pub anchor_index: Option<usize>,
    pub anchor_value: Option<Vec<f64>>,
    pub status: GapStatus,
    pub mode: CoeffMode,
    pub seed_indices: Vec<usize>,
    pub seed_values: Vec<Vec<f64>>,
    pub seeds_from_imputed: bool,
    /// Present when the model was refitted for this gap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<FittedModelReport>,
    pub multiplier: Multiplier,
    /// One control per step from `gap_start` through the anchor index.
    pub controls: Vec<Vec<f64>>,
    pub terminal_control: Vec<f64>,
    pub uncorrected: Vec<Vec<f64>>,
    pub imputed: Vec<Vec<f64>>,
    pub objective: f64,
    pub terminal_residual: f64,
    pub rank_deficient: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper: Option<PaperDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleAgreement>,
}

fn rows(v: &[Vector]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.to_vec()).collect()
}

impl GapReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gap: &crate::series::GapSegment,
        seed_values: &[Vector],
        sol: &ControlSolution,
        model: Option<FittedModelReport>,
        oracle: Option<&Verdict>,
    ) -> Self {
        let status = if gap.anchor.is_some() { GapStatus::Constrained } else { GapStatus::Unconstrained };
        GapReport {
            gap_start: gap.gap_start,
            gap_end: gap.gap_end,
            anchor_index: gap.anchor_index(),
            anchor_value: gap.anchor.as_ref().map(|a| a.value.to_vec()),
            status,
            mode: sol.mode,
            seed_indices: gap.seed_indices.clone(),
            seed_values: rows(seed_values),
            seeds_from_imputed: gap.imputed_seeds,
            model,
            multiplier: sol.multiplier.clone(),
            controls: rows(&sol.controls),
            terminal_control: match status {
                GapStatus::Constrained => sol.terminal_control().to_vec(),
                GapStatus::Unconstrained => Vec::new(),
            },
            uncorrected: rows(&sol.uncorrected),
            imputed: rows(&sol.imputed),
            objective: sol.objective,
            terminal_residual: sol.terminal_residual,
            rank_deficient: sol.rank_deficient,
            paper: sol.paper.clone(),
            oracle: oracle.map(OracleAgreement::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationReport {
    pub schema_version: u32,
    pub model_kind: ModelKind,
    pub order: usize,
    pub mode: CoeffMode,
    pub intercept: bool,
    pub refit_per_gap: bool,
    pub allow_open_gap: bool,
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub covariates: Vec<String>,
    pub series_length: usize,
    pub prefix_length: usize,
    pub gap_count: usize,
    pub seed_policy: &'static str,
    /// Fit on the leading observed prefix (absent with refit-per-gap or when there are no gaps).
    pub model: Option<FittedModelReport>,
    pub gaps: Vec<GapReport>,
    pub notes: Vec<String>,
}

impl ImputationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
