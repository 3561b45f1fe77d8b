//! Action-angle charts `z ↔ (φ, A)` for integrable model families.
//!
//! A chart supplies the forward and inverse maps, jets of the collective
//! coordinates `D^μ = (φ¹..φᴺ, A¹..Aᴺ)` as functions of `z`, the energy map
//! `f₀(A)` with its action derivatives (the frequency data), and the contour
//! bookkeeping `(ν, γ)` that fixes the quantized actions.

mod central;
mod libration;
mod oned;
mod potential;
pub mod quadrature;
mod shifted;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::field::{
    check_multi_index, invert_jet_map, FieldError, FieldRef, Jet, PhasePoint, ScalarField,
};

pub use central::{CentralForceChart, Sector, TorusGeometry};
pub use libration::Libration;
pub use oned::{OneDimChart, OneDimPotential};
pub use potential::{
    balance_units, CentralForcePotential, ModelParams, ModelRegistry, PhysicalPotential,
    PotentialError, PotentialModel,
};
pub use shifted::{ActionPolynomial, ShiftedChart};

/// Angles and actions of one phase-space point.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleAction {
    pub angles: Vec<f64>,
    pub actions: Vec<f64>,
}

/// The integer contour matrix `ν` and Maslov vector `γ` of a chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourData {
    pub nu: Vec<Vec<i64>>,
    pub gamma: Vec<i64>,
}

impl ContourData {
    pub fn nu_matrix(&self) -> DMatrix<f64> {
        let n = self.nu.len();
        DMatrix::from_fn(n, n, |i, j| self.nu[i][j] as f64)
    }

    pub fn determinant(&self) -> f64 {
        self.nu_matrix().determinant()
    }

    /// `ν ∈ GL(N, ℤ)`: integer entries and determinant ±1.
    pub fn is_unimodular(&self) -> bool {
        (self.determinant().abs() - 1.0).abs() < 1e-12
    }

    /// Quantized actions `A = (n + γ/4) ħ`.
    pub fn quantized_actions(&self, n: &[i64], hbar: f64) -> Vec<f64> {
        n.iter()
            .zip(&self.gamma)
            .map(|(&nj, &gj)| (nj as f64 + gj as f64 / 4.0) * hbar)
            .collect()
    }
}

/// `ω_jk`, `ω_jkl`, `ω_jklm`: derivatives of the energy map `f₀(A)`.
#[derive(Debug, Clone)]
pub struct FrequencyData {
    /// `energy[j]` is the jet of `f^j₀` over the actions.
    pub energy: Vec<Jet>,
}

impl FrequencyData {
    pub fn n(&self) -> usize {
        self.energy.len()
    }

    pub fn value(&self, j: usize) -> f64 {
        self.energy[j].value()
    }

    pub fn omega(&self, j: usize, k: usize) -> f64 {
        self.energy[j].get(&[k])
    }

    pub fn omega2(&self, j: usize, k: usize, l: usize) -> f64 {
        self.energy[j].get(&[k, l])
    }

    pub fn omega3(&self, j: usize, k: usize, l: usize, m: usize) -> f64 {
        self.energy[j].get(&[k, l, m])
    }

    pub fn omega_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |j, k| self.omega(j, k))
    }
}

/// Energy-map jets from the jets of the action map `(invariants) -> A`.
/// `invariant_values` are the values of the commuting invariants `I` at the
/// torus, `observable_jets[j]` is `f^j` as a function of those invariants.
pub(crate) fn energy_jets_by_inversion(
    action_of_invariants: &[Jet],
    invariant_values: &[f64],
    observable_of_invariants: &[Jet],
) -> Result<Vec<Jet>, FieldError> {
    let inv = invert_jet_map(action_of_invariants, invariant_values)?;
    Ok(observable_of_invariants
        .iter()
        .map(|o| crate::field::compose_jets(o, &inv))
        .collect())
}

/// A bidirectional action-angle map for one torus family.
pub trait ActionAngleChart: Send + Sync {
    fn dim_n(&self) -> usize;

    fn label(&self) -> String;

    /// Principal symbols `H^j₀` as phase-space fields.
    fn observables(&self) -> Vec<FieldRef>;

    fn contour(&self) -> ContourData;

    /// Errors if the actions lie outside the chart's region of validity.
    fn check_actions(&self, actions: &[f64]) -> Result<(), FieldError>;

    fn forward(&self, z: &PhasePoint) -> Result<AngleAction, FieldError>;

    fn inverse(&self, angles: &[f64], actions: &[f64]) -> Result<PhasePoint, FieldError>;

    /// Jets of the actions `A^j(z)`.
    fn action_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError>;

    /// Jets of the angles `φ^j(z)`.
    fn angle_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError>;

    /// Jets of `D^μ = (φ, A)`.
    fn frame_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError> {
        let mut out = self.angle_jets(z, order)?;
        out.extend(self.action_jets(z, order)?);
        Ok(out)
    }

    /// Jets of `f^j₀` over the actions, to `order`.
    fn energy_jets(&self, actions: &[f64], order: usize) -> Result<Vec<Jet>, FieldError>;

    fn energies(&self, actions: &[f64]) -> Result<Vec<f64>, FieldError> {
        Ok(self
            .energy_jets(actions, 0)?
            .iter()
            .map(Jet::value)
            .collect())
    }

    fn frequency_data(&self, actions: &[f64]) -> Result<FrequencyData, FieldError> {
        Ok(FrequencyData {
            energy: self.energy_jets(actions, 3)?,
        })
    }

    /// Random interior actions, for sampling test points.
    fn sample_actions(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

pub type ChartRef = Arc<dyn ActionAngleChart>;

/// Random interior phase-space point of the chart.
pub fn sample_point(chart: &dyn ActionAngleChart, rng: &mut dyn RngCore) -> Result<PhasePoint, FieldError> {
    use rand::Rng;
    let a = chart.sample_actions(rng);
    let n = chart.dim_n();
    let phi: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    chart.inverse(&phi, &a)
}

/// One component of `D^μ` as a field over phase space.
pub struct ChartComponent {
    chart: ChartRef,
    index: usize,
    max_order: usize,
}

impl ChartComponent {
    pub fn new(chart: ChartRef, index: usize) -> Self {
        Self {
            chart,
            index,
            max_order: 3,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

impl ScalarField for ChartComponent {
    fn dim_n(&self) -> usize {
        self.chart.dim_n()
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn evaluate(&self, z: &PhasePoint) -> Result<f64, FieldError> {
        self.check(z, 0)?;
        let aa = self.chart.forward(z)?;
        let n = self.chart.dim_n();
        Ok(if self.index < n {
            aa.angles[self.index]
        } else {
            aa.actions[self.index - n]
        })
    }

    fn partial(&self, z: &PhasePoint, multi_index: &[usize]) -> Result<f64, FieldError> {
        check_multi_index(self, z, multi_index)?;
        Ok(self.jet(z, multi_index.len())?.get(multi_index))
    }

    fn jet(&self, z: &PhasePoint, order: usize) -> Result<Jet, FieldError> {
        self.check(z, order)?;
        let n = self.chart.dim_n();
        if self.index < n {
            Ok(self.chart.angle_jets(z, order)?.swap_remove(self.index))
        } else {
            Ok(self.chart.action_jets(z, order)?.swap_remove(self.index - n))
        }
    }

    fn label(&self) -> String {
        let n = self.chart.dim_n();
        if self.index < n {
            format!("phi{}", self.index + 1)
        } else {
            format!("A{}", self.index - n + 1)
        }
    }
}

/// All components `D^μ` as fields, angles first.
pub fn chart_fields(chart: &ChartRef) -> Vec<FieldRef> {
    (0..2 * chart.dim_n())
        .map(|i| Arc::new(ChartComponent::new(chart.clone(), i)) as FieldRef)
        .collect()
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(std::f64::consts::TAU);
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

/// Brings `a` to within π of `reference` by adding a multiple of 2π.
pub fn unwrap_near(a: f64, reference: f64) -> f64 {
    a - std::f64::consts::TAU * ((a - reference) / std::f64::consts::TAU).round()
}
