use std::sync::Arc;

use serde::Serialize;

use super::average::{torus_average, AveragingGrid};
use super::correction::{
    correction_integrand, diagram_averages, second_order_corrections, CorrectionOptions,
    DiagramAverages,
};
use super::QuantizerError;
use crate::chart::{ActionAngleChart, ActionPolynomial, ChartRef, OneDimChart, OneDimPotential, ShiftedChart};
use crate::diagram::{eval_diagram, Diagram, Node};
use crate::field::{fd_jets, FieldError, PhasePoint, Richardson};
use crate::oracle::OscillatorBasis;

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub base: Vec<f64>,
    pub shifted: Vec<f64>,
    /// `max_j |shifted_j − base_j| / max_j |base_j|`
    pub residual: f64,
    /// Same comparison for the unaveraged integrand of the first observable
    /// at one phase-space point.
    pub pointwise: f64,
}

/// Compares the averaged correction before and after moving the angle
/// origins by `φ' = φ + ∂F/∂A`.
pub fn angle_origin_invariance_test(
    chart: ChartRef,
    actions: &[f64],
    shift: ActionPolynomial,
    options: &CorrectionOptions,
) -> Result<InvarianceReport, QuantizerError> {
    let shifted: ChartRef = Arc::new(ShiftedChart::new(chart.clone(), shift));
    let base = second_order_corrections(chart.as_ref(), actions, options)?;
    let moved = second_order_corrections(shifted.as_ref(), actions, options)?;
    let base: Vec<f64> = base.iter().map(|c| c.total).collect();
    let moved: Vec<f64> = moved.iter().map(|c| c.total).collect();
    let scale = base.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let residual = base
        .iter()
        .zip(&moved)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;

    let n = chart.dim_n();
    let phi: Vec<f64> = (0..n).map(|j| 0.7 + 0.6 * j as f64).collect();
    let z = chart.inverse(&phi, actions)?;
    let freq = chart.frequency_data(actions)?;
    let at = |c: &dyn ActionAngleChart| -> Result<f64, QuantizerError> {
        let v = correction_integrand(c, &z, options.route.as_ref(), None)?;
        Ok(DiagramAverages::from_flat(n, 0, &v, Vec::new()).combine(&freq, 0).total)
    };
    let (p0, p1) = (at(chart.as_ref())?, at(shifted.as_ref())?);
    let pointwise = (p0 - p1).abs() / p0.abs().max(1e-300);
    Ok(InvarianceReport {
        base,
        shifted: moved,
        residual,
        pointwise,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionRow {
    pub n: usize,
    pub action: f64,
    pub e0: f64,
    /// ħ² term from the general formula at N = 1.
    pub pipeline: f64,
    /// ħ² term from `⟨H₂⟩ + (1/48) d/dA[(1/ω)⟨H ⇉ H⟩]`.
    pub closed_form: f64,
    pub oracle: f64,
}

impl ReductionRow {
    /// Relative disagreement between the two ħ² terms.
    pub fn disagreement(&self) -> f64 {
        (self.pipeline - self.closed_form).abs() / self.closed_form.abs().max(1e-300)
    }
}

/// `(1/ω)⟨H ⇉ H⟩` on the torus `a`.
fn closed_form_integrand(chart: &OneDimChart, a: f64, grid: &AveragingGrid) -> Result<f64, QuantizerError> {
    let h = chart.observables().remove(0);
    let omega = chart.energy_jets(&[a], 1)?[0].get(&[0]);
    let d = Diagram::bracket(Node::field(h.clone()), Node::field(h), 2);
    let f = |z: &PhasePoint| -> Result<f64, FieldError> {
        eval_diagram(&d, z).map(|e| e.value).map_err(|e| FieldError::Numerical(e.to_string()))
    };
    Ok(torus_average(chart, &[a], grid, &f)? / omega)
}

/// The one-degree-of-freedom correction computed by the general formula
/// and by the collapsed one-dimensional rule, with a reference spectrum.
pub fn reduce_1d(
    potential: &OneDimPotential,
    hbar: f64,
    levels: &[usize],
    options: &CorrectionOptions,
) -> Result<Vec<ReductionRow>, QuantizerError> {
    let chart = OneDimChart::new(potential.clone());
    let top = levels.iter().copied().max().unwrap_or(0);
    let oracle = OscillatorBasis::default().solve_1d(potential, hbar, top + 1)?;
    let grid = AveragingGrid::new(vec![64]);
    levels
        .iter()
        .map(|&n| {
            let a = (n as f64 + 0.5) * hbar;
            let e0 = chart.energies(&[a])?[0];
            let (avg, freq) = diagram_averages(&chart, &[a], options)?;
            let pipeline = hbar * hbar * avg.combine(&freq, 0).total;
            let g = |x: &[f64]| -> Result<Vec<f64>, FieldError> {
                closed_form_integrand(&chart, x[0], &grid)
                    .map(|v| vec![v])
                    .map_err(|e| FieldError::Numerical(e.to_string()))
            };
            let dg = fd_jets(&g, &[a], 1, &Richardson::default(), 0.5 * a.min(1.0))?[0].get(&[0]);
            Ok(ReductionRow {
                n,
                action: a,
                e0,
                pipeline,
                closed_form: hbar * hbar * dg / 48.0,
                oracle: oracle[n],
            })
        })
        .collect()
}
