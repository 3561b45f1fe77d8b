use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Registry;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PotentialError {
    #[error("mass must be positive, got {0}")]
    Mass(f64),
    #[error("V''(0) must be positive for a stable minimum, got {0}")]
    NotStable(f64),
    #[error("potential needs at least the quadratic coefficient")]
    Empty,
    #[error("model parameter '{0}' is missing")]
    Missing(&'static str),
}

/// `V(r) = Σ_k v_k r^{2k}`, `k = 1, 2, ...`, in the original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPotential {
    pub mass: f64,
    pub coefficients: Vec<f64>,
}

impl PhysicalPotential {
    /// `½ m ω₀² r² + Σ higher[i] r^{2(i+2)}`
    pub fn from_frequency(mass: f64, omega0: f64, higher: &[f64]) -> Self {
        let mut coefficients = vec![0.5 * mass * omega0 * omega0];
        coefficients.extend_from_slice(higher);
        Self { mass, coefficients }
    }

    pub fn value(&self, r: f64) -> f64 {
        let s = r * r;
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| (acc + c) * s)
    }
}

/// `U(s) = Σ_k c_k s^k` with `s = r²` in balanced units, where the
/// Hamiltonian reads `H = ω₀ (p²/2 + U)`. `c_1 = 1/2`, i.e. `U''(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralForcePotential {
    pub coefficients: Vec<f64>,
    pub omega0: f64,
    pub mass: f64,
}

impl CentralForcePotential {
    /// Directly in balanced units; `higher[i]` multiplies `s^{i+2} = r^{2i+4}`.
    pub fn balanced(higher: &[f64]) -> Self {
        let mut coefficients = vec![0.5];
        coefficients.extend_from_slice(higher);
        Self {
            coefficients,
            omega0: 1.0,
            mass: 1.0,
        }
    }

    pub fn isotropic() -> Self {
        Self::balanced(&[])
    }

    pub fn quartic(lambda: f64) -> Self {
        Self::balanced(&[lambda])
    }

    pub fn is_isotropic(&self) -> bool {
        self.coefficients[1..].iter().all(|&c| c == 0.0)
    }

    /// `U(s)`
    pub fn u(&self, s: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| (acc + c) * s)
    }

    /// `dU/ds`
    pub fn du(&self, s: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + (k + 1) as f64 * c)
    }

    /// `d²U/ds²`
    pub fn d2u(&self, s: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + ((k + 1) * k) as f64 * c)
    }

    /// Lowest positive critical point of `U(s)` and the critical energy
    /// `U(s_c)` (in units of ω₀), if any: the first separatrix of the family.
    pub fn first_critical_energy(&self) -> Option<f64> {
        // scan for a sign change of U' and bisect
        let mut s_prev = 0.0;
        let mut d_prev = self.du(0.0);
        let mut s = 1e-3;
        while s < 1e6 {
            let d = self.du(s);
            if d <= 0.0 && d_prev > 0.0 {
                let (mut lo, mut hi) = (s_prev, s);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.du(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(self.u(0.5 * (lo + hi)));
            }
            s_prev = s;
            d_prev = d;
            s *= 1.05;
        }
        None
    }
}

/// Rescales `V` to balanced units: `U(r) = V(r/√(mω₀)) / ω₀` with
/// `ω₀ = √(V''(0)/m)`.
pub fn balance_units(v: &PhysicalPotential) -> Result<CentralForcePotential, PotentialError> {
    if v.mass <= 0.0 {
        return Err(PotentialError::Mass(v.mass));
    }
    let v1 = *v.coefficients.first().ok_or(PotentialError::Empty)?;
    let vpp = 2.0 * v1;
    if vpp <= 0.0 {
        return Err(PotentialError::NotStable(vpp));
    }
    let omega0 = (vpp / v.mass).sqrt();
    let length2 = v.mass * omega0;
    let coefficients = v
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, c)| c / (omega0 * length2.powi(i as i32 + 1)))
        .collect();
    Ok(CentralForcePotential {
        coefficients,
        omega0,
        mass: v.mass,
    })
}

/// Physical model parameters as they appear in a run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelParams {
    pub mass: f64,
    pub omega0: f64,
    /// Coefficient of r⁴.
    pub quartic: Option<f64>,
    /// Coefficient of r⁶.
    pub sextic: Option<f64>,
    /// Coefficients of r⁴, r⁶, ... for the generic polynomial model.
    pub higher: Vec<f64>,
}

/// A named family of central-force potentials.
pub trait PotentialModel: Send + Sync {
    fn name(&self) -> &str;
    fn build(&self, p: &ModelParams) -> Result<PhysicalPotential, PotentialError>;
}

struct Isotropic;
struct Quartic;
struct Polynomial;

impl PotentialModel for Isotropic {
    fn name(&self) -> &str {
        "isotropic"
    }
    fn build(&self, p: &ModelParams) -> Result<PhysicalPotential, PotentialError> {
        Ok(PhysicalPotential::from_frequency(p.mass, p.omega0, &[]))
    }
}

impl PotentialModel for Quartic {
    fn name(&self) -> &str {
        "quartic"
    }
    fn build(&self, p: &ModelParams) -> Result<PhysicalPotential, PotentialError> {
        let q = p.quartic.ok_or(PotentialError::Missing("quartic"))?;
        Ok(PhysicalPotential::from_frequency(p.mass, p.omega0, &[q]))
    }
}

impl PotentialModel for Polynomial {
    fn name(&self) -> &str {
        "polynomial"
    }
    fn build(&self, p: &ModelParams) -> Result<PhysicalPotential, PotentialError> {
        let mut higher = p.higher.clone();
        if higher.is_empty() {
            higher.push(p.quartic.unwrap_or(0.0));
            if let Some(s) = p.sextic {
                higher.push(s);
            }
        }
        Ok(PhysicalPotential::from_frequency(p.mass, p.omega0, &higher))
    }
}

pub type ModelRegistry = Registry<dyn PotentialModel>;

impl ModelRegistry {
    pub fn with_defaults() -> Self {
        let mut r: ModelRegistry = Registry::new();
        r.register("isotropic", Arc::new(Isotropic));
        r.register("quartic", Arc::new(Quartic));
        r.register("polynomial", Arc::new(Polynomial));
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_balances_to_half_r2() {
        let v = PhysicalPotential::from_frequency(2.0, 3.0, &[]);
        let u = balance_units(&v).unwrap();
        assert!((u.omega0 - 3.0).abs() < 1e-15);
        assert!((u.coefficients[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quartic_coefficient_rescaled() {
        let (m, w, l4) = (2.0, 3.0, 0.7);
        let u = balance_units(&PhysicalPotential::from_frequency(m, w, &[l4])).unwrap();
        let expect = l4 / (w * m * m * w * w);
        assert!((u.coefficients[1] - expect).abs() < 1e-15);
        // U(r) = V(r/√(mω₀))/ω₀ pointwise
        let r: f64 = 0.8;
        let phys = PhysicalPotential::from_frequency(m, w, &[l4]);
        let direct = phys.value(r / (m * w).sqrt()) / w;
        assert!((u.u(r * r) - direct).abs() < 1e-14);
    }

    #[test]
    fn rejects_flat_minimum() {
        let v = PhysicalPotential {
            mass: 1.0,
            coefficients: vec![0.0, 1.0],
        };
        assert!(matches!(balance_units(&v), Err(PotentialError::NotStable(_))));
    }

    #[test]
    fn critical_energy_of_softening_quartic() {
        // U = s/2 - 0.01 s^2: U' = 0 at s = 25, U = 6.25
        let u = CentralForcePotential::quartic(-0.01);
        assert!((u.first_critical_energy().unwrap() - 6.25).abs() < 1e-9);
        assert!(CentralForcePotential::quartic(0.01).first_critical_energy().is_none());
    }
}
