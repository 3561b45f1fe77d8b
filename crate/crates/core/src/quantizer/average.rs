use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::QuantizerError;
use crate::chart::ActionAngleChart;
use crate::field::{FieldError, PhasePoint};

/// Uniform angle grid, offset by half a cell so no sample sits at the
/// turning-point phases `φ = 0, π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingGrid {
    pub counts: Vec<usize>,
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub max_doublings: usize,
}

impl AveragingGrid {
    pub fn new(counts: Vec<usize>) -> Self {
        Self {
            counts,
            rel_tol: 1e-6,
            abs_floor: 1e-10,
            max_doublings: 4,
        }
    }

    /// 16 points per angle.
    pub fn default_for(dim_n: usize) -> Self {
        Self::new(vec![16; dim_n])
    }

    pub fn points(&self) -> usize {
        self.counts.iter().product()
    }

    fn doubled(&self) -> Self {
        Self {
            counts: self.counts.iter().map(|c| 2 * c).collect(),
            ..self.clone()
        }
    }

    /// All grid angles, last index fastest.
    pub fn angles(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.counts.len())];
        for &c in &self.counts {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..c).map(move |i| {
                        let mut p = prefix.clone();
                        p.push(TAU * (i as f64 + 0.5) / c as f64);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// Result of a converged torus average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Averaged {
    pub values: Vec<f64>,
    /// Grid that produced `values`.
    pub counts: Vec<usize>,
    /// Largest change of a monitored quantity at the last doubling.
    pub change: f64,
}

type PointFn<'a> = dyn Fn(&PhasePoint) -> Result<Vec<f64>, FieldError> + Sync + 'a;
type Monitor<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

fn mean_on(
    chart: &dyn ActionAngleChart,
    actions: &[f64],
    grid: &AveragingGrid,
    f: &PointFn<'_>,
) -> Result<Vec<f64>, FieldError> {
    let rows: Vec<Vec<f64>> = grid
        .angles()
        .par_iter()
        .map(|phi| f(&chart.inverse(phi, actions)?))
        .collect::<Result<_, _>>()?;
    let k = rows.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; k];
    for r in &rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Torus averages of every component of `f`, doubling the grid until the
/// quantities picked by `monitor` (all components if `None`) change by less
/// than `rel_tol` relative to the largest of them, plus `abs_floor`.
pub fn torus_average_vec(
    chart: &dyn ActionAngleChart,
    actions: &[f64],
    grid: &AveragingGrid,
    f: &PointFn<'_>,
    monitor: Option<&Monitor<'_>>,
) -> Result<Averaged, QuantizerError> {
    if grid.counts.len() != chart.dim_n() {
        return Err(QuantizerError::Grid(format!(
            "grid has {} angles, chart has {}",
            grid.counts.len(),
            chart.dim_n()
        )));
    }
    chart.check_actions(actions)?;
    let watch = |v: &[f64]| monitor.map_or_else(|| v.to_vec(), |m| m(v));
    let mut g = grid.clone();
    let mut prev = mean_on(chart, actions, &g, f)?;
    let mut change = f64::INFINITY;
    for _ in 0..grid.max_doublings {
        let next = g.doubled();
        let cur = mean_on(chart, actions, &next, f)?;
        let (a, b) = (watch(&prev), watch(&cur));
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        change = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        g = next;
        prev = cur;
        if change <= grid.rel_tol * scale + grid.abs_floor {
            return Ok(Averaged {
                values: prev,
                counts: g.counts,
                change,
            });
        }
    }
    Err(QuantizerError::NotConverged {
        what: "torus average".into(),
        change,
    })
}

/// Torus average of a scalar function of the phase-space point.
pub fn torus_average(
    chart: &dyn ActionAngleChart,
    actions: &[f64],
    grid: &AveragingGrid,
    f: &(dyn Fn(&PhasePoint) -> Result<f64, FieldError> + Sync),
) -> Result<f64, QuantizerError> {
    let g = |z: &PhasePoint| f(z).map(|v| vec![v]);
    Ok(torus_average_vec(chart, actions, grid, &g, None)?.values[0])
}
