//! Second-order torus quantization: quantized actions, angle averages of
//! the ħ² diagrams, eigenvalue tables and the consistency checks around
//! them.

mod average;
mod checks;
mod correction;
mod gamma;
mod table;

use thiserror::Error;

use crate::diagram::DiagramError;
use crate::field::FieldError;
use crate::oracle::OracleError;

pub use average::{torus_average, torus_average_vec, Averaged, AveragingGrid};
pub use checks::{angle_origin_invariance_test, reduce_1d, InvarianceReport, ReductionRow};
pub use correction::{
    correction_frame, correction_integrand, diagram_averages, hard_diagram,
    second_order_correction, second_order_corrections, ConnectionRoute, CorrectionBreakdown,
    CorrectionOptions, DiagramAverages, DirectRoute, HardTermRegistry, HardTermRoute,
};
pub use gamma::{connection_coefficients, hard_diagram_via_gamma, ConnectionCoefficients};
pub use table::{ebk_eigenvalues, EigenvalueRow, EigenvalueTable, QuantizationRequest};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuantizerError {
    #[error("{what} did not converge (last change {change:e})")]
    NotConverged { what: String, change: f64 },
    #[error("bad request: {0}")]
    Grid(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}
