//! Fill gaps in time series whose value after the gap is known.
//!
//! A model (scalar AR(p), VAR(1), or a regression on covariates) is fitted by
//! least squares on the observed data. Each gap is then bridged by rolling the
//! fitted recursion forward with additive controls chosen to have the smallest
//! total squared size among all control sequences that land exactly on the
//! observed anchor value.
//!
//! ```
//! use ctrlfill_core::{fit::ArModel, control::{impute_gap_ar, CoeffMode}};
//!
//! // x_n = 0.5 x_{n-1}, x_1 = 16, x_2 and x_3 missing, x_4 = 0
//! let model = ArModel::new(vec![0.5], 0.0).unwrap();
//! let sol = impute_gap_ar(&model, &[16.0], 2, 0.0, CoeffMode::Exact).unwrap();
//! assert!((sol.imputed[0][0] - 160.0 / 21.0).abs() < 1e-12);
//! assert!((sol.imputed[1][0] - 64.0 / 21.0).abs() < 1e-12);
//! ```

pub mod control;
pub mod error;
pub mod fit;
pub mod impute;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod series;

pub use control::{CoeffMode, ControlSolution};
pub use error::{Error, ErrorClass, Result};
pub use fit::{ArModel, FitOptions, RegModel, VarModel};
pub use impute::{fit_model, impute, ImputeConfig, ImputeOutcome};
pub use linalg::{Matrix, Vector};
pub use report::{ImputationReport, ModelKind};
pub use series::{GapSegment, Series};
