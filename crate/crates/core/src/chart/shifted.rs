use std::collections::BTreeMap;

use rand::RngCore;

use super::{wrap_angle, ActionAngleChart, AngleAction, ChartRef, ContourData};
use crate::field::{compose_jets, sorted_multi_indices, FieldError, FieldRef, Jet, PhasePoint};

/// A polynomial `F(A)` in the actions, keyed by exponent vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionPolynomial {
    pub n: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl ActionPolynomial {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn with_term(mut self, coef: f64, exponents: Vec<u32>) -> Self {
        assert_eq!(exponents.len(), self.n);
        *self.terms.entry(exponents).or_insert(0.0) += coef;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|&c| c == 0.0)
    }

    /// Partial derivative along `idx` (action indices) at `a`.
    pub fn partial(&self, a: &[f64], idx: &[usize]) -> f64 {
        let mut counts = vec![0u32; self.n];
        for &i in idx {
            counts[i] += 1;
        }
        self.terms
            .iter()
            .map(|(e, &c)| {
                let mut v = c;
                for k in 0..self.n {
                    if counts[k] > e[k] {
                        return 0.0;
                    }
                    for t in 0..counts[k] {
                        v *= (e[k] - t) as f64;
                    }
                    v *= a[k].powi((e[k] - counts[k]) as i32);
                }
                v
            })
            .sum()
    }

    /// Jet over the actions of `∂F/∂A^j`.
    pub fn gradient_jet(&self, j: usize, a: &[f64], order: usize) -> Jet {
        let mut jet = Jet::zeros(self.n, order);
        jet.set_value(self.partial(a, &[j]));
        for q in 1..=order {
            for idx in sorted_multi_indices(self.n, q) {
                let mut full = vec![j];
                full.extend(&idx);
                jet.set_symmetric(&idx, self.partial(a, &full));
            }
        }
        jet
    }
}

/// The same torus family with angle origins moved by a generating function:
/// `φ'^j = φ^j + ∂F/∂A^j`.
pub struct ShiftedChart {
    base: ChartRef,
    shift: ActionPolynomial,
}

impl ShiftedChart {
    pub fn new(base: ChartRef, shift: ActionPolynomial) -> Self {
        assert_eq!(base.dim_n(), shift.n);
        Self { base, shift }
    }
}

impl ActionAngleChart for ShiftedChart {
    fn dim_n(&self) -> usize {
        self.base.dim_n()
    }

    fn label(&self) -> String {
        format!("{} (shifted angles)", self.base.label())
    }

    fn observables(&self) -> Vec<FieldRef> {
        self.base.observables()
    }

    fn contour(&self) -> ContourData {
        self.base.contour()
    }

    fn check_actions(&self, actions: &[f64]) -> Result<(), FieldError> {
        self.base.check_actions(actions)
    }

    fn forward(&self, z: &PhasePoint) -> Result<AngleAction, FieldError> {
        let mut aa = self.base.forward(z)?;
        for (j, phi) in aa.angles.iter_mut().enumerate() {
            *phi = wrap_angle(*phi + self.shift.partial(&aa.actions, &[j]));
        }
        Ok(aa)
    }

    fn inverse(&self, angles: &[f64], actions: &[f64]) -> Result<PhasePoint, FieldError> {
        let base: Vec<f64> = angles
            .iter()
            .enumerate()
            .map(|(j, &p)| p - self.shift.partial(actions, &[j]))
            .collect();
        self.base.inverse(&base, actions)
    }

    fn action_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError> {
        self.base.action_jets(z, order)
    }

    fn angle_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError> {
        let mut angles = self.base.angle_jets(z, order)?;
        let actions = self.base.action_jets(z, order)?;
        let a: Vec<f64> = actions.iter().map(Jet::value).collect();
        for (j, phi) in angles.iter_mut().enumerate() {
            let g = compose_jets(&self.shift.gradient_jet(j, &a, order), &actions);
            let mut sum = Jet::zeros(phi.n(), order);
            sum.set_value(phi.value() + g.value());
            for q in 1..=order {
                for idx in sorted_multi_indices(phi.n(), q) {
                    sum.set_symmetric(&idx, phi.get(&idx) + g.get(&idx));
                }
            }
            *phi = sum;
        }
        Ok(angles)
    }

    fn energy_jets(&self, actions: &[f64], order: usize) -> Result<Vec<Jet>, FieldError> {
        self.base.energy_jets(actions, order)
    }

    fn sample_actions(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.sample_actions(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_partials() {
        // F = 0.3 a² + 0.2 a b
        let f = ActionPolynomial::new(2)
            .with_term(0.3, vec![2, 0])
            .with_term(0.2, vec![1, 1]);
        let a = [1.5, -0.5];
        assert!((f.partial(&a, &[0]) - (0.6 * 1.5 + 0.2 * -0.5)).abs() < 1e-15);
        assert!((f.partial(&a, &[1]) - 0.3).abs() < 1e-15);
        assert!((f.partial(&a, &[0, 0]) - 0.6).abs() < 1e-15);
        assert!((f.partial(&a, &[0, 1]) - 0.2).abs() < 1e-15);
        assert_eq!(f.partial(&a, &[1, 1]), 0.0);
        let g = f.gradient_jet(0, &a, 2);
        assert!((g.get(&[0]) - 0.6).abs() < 1e-15);
        assert!((g.get(&[1]) - 0.2).abs() < 1e-15);
        assert_eq!(g.get(&[0, 0]), 0.0);
    }
}
