use rayon::prelude::*;
use serde::Serialize;

use super::correction::{second_order_corrections, CorrectionBreakdown, CorrectionOptions};
use super::QuantizerError;
use crate::chart::ChartRef;
use crate::oracle::OracleSpectrum;

#[derive(Clone)]
pub struct QuantizationRequest {
    /// Charts tried in order; each state goes to the first that accepts its
    /// quantized actions (e.g. one chart per sign of L).
    pub charts: Vec<ChartRef>,
    pub hbar: f64,
    /// `(n_r, m)` in the charts' contour basis.
    pub quantum_numbers: Vec<Vec<i64>>,
    pub include_h2: bool,
    pub options: CorrectionOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueRow {
    pub quantum_numbers: Vec<i64>,
    pub actions: Vec<f64>,
    /// `f^j₀(A)`, one per observable.
    pub e0: Vec<f64>,
    /// `ħ² C_j`, zero when corrections are off.
    pub correction: Vec<f64>,
    pub total: Vec<f64>,
    pub breakdown: Vec<CorrectionBreakdown>,
    pub oracle: Option<f64>,
    /// Why the row is incomplete, if it is.
    pub flag: Option<String>,
}

impl EigenvalueRow {
    pub fn error0(&self) -> Option<f64> {
        Some(self.e0.first()? - self.oracle?)
    }

    pub fn error2(&self) -> Option<f64> {
        Some(self.total.first()? - self.oracle?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueTable {
    pub hbar: f64,
    pub observables: Vec<String>,
    pub rows: Vec<EigenvalueRow>,
}

impl EigenvalueTable {
    /// Attaches reference energies of the first observable, keyed by
    /// `(n_r, m)`.
    pub fn attach_oracle(&mut self, spectrum: &OracleSpectrum) {
        for row in &mut self.rows {
            if let [n_r, m] = row.quantum_numbers[..] {
                row.oracle = usize::try_from(n_r).ok().and_then(|n| spectrum.energy(n, m));
            }
        }
    }

    pub fn row(&self, quantum_numbers: &[i64]) -> Option<&EigenvalueRow> {
        self.rows.iter().find(|r| r.quantum_numbers == quantum_numbers)
    }
}

fn quantize_state(req: &QuantizationRequest, n: &[i64]) -> EigenvalueRow {
    let mut row = EigenvalueRow {
        quantum_numbers: n.to_vec(),
        actions: Vec::new(),
        e0: Vec::new(),
        correction: Vec::new(),
        total: Vec::new(),
        breakdown: Vec::new(),
        oracle: None,
        flag: None,
    };
    let mut last_err = String::from("no chart");
    for chart in &req.charts {
        let actions = chart.contour().quantized_actions(n, req.hbar);
        if let Err(e) = chart.check_actions(&actions) {
            last_err = e.to_string();
            continue;
        }
        row.actions = actions.clone();
        match chart.energies(&actions) {
            Ok(e0) => row.e0 = e0,
            Err(e) => {
                row.flag = Some(e.to_string());
                return row;
            }
        }
        row.correction = vec![0.0; row.e0.len()];
        if req.include_h2 {
            match second_order_corrections(chart.as_ref(), &actions, &req.options) {
                Ok(b) => {
                    let h2 = req.hbar * req.hbar;
                    row.correction = b.iter().map(|c| h2 * c.total).collect();
                    row.breakdown = b;
                }
                Err(e) => row.flag = Some(e.to_string()),
            }
        }
        row.total = row.e0.iter().zip(&row.correction).map(|(a, b)| a + b).collect();
        return row;
    }
    row.flag = Some(format!("outside every chart: {last_err}"));
    row
}

/// Torus-quantized eigenvalues of every observable for each requested state.
/// States that cannot be quantized are kept with a flag.
pub fn ebk_eigenvalues(req: &QuantizationRequest) -> Result<EigenvalueTable, QuantizerError> {
    let first = req
        .charts
        .first()
        .ok_or_else(|| QuantizerError::Grid("no chart supplied".into()))?;
    if req.hbar <= 0.0 {
        return Err(QuantizerError::Grid(format!("hbar must be positive, got {}", req.hbar)));
    }
    let observables = first.observables().iter().map(|f| f.label()).collect();
    let rows = req
        .quantum_numbers
        .par_iter()
        .map(|n| quantize_state(req, n))
        .collect();
    Ok(EigenvalueTable {
        hbar: req.hbar,
        observables,
        rows,
    })
}
