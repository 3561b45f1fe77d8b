use std::collections::BTreeMap;

use super::{check_multi_index, FieldError, Jet, PhasePoint, ScalarField};

/// A polynomial in the phase-space coordinates with exact derivatives.
///
/// Model observables (Hamiltonians, angular momentum, oscillator actions) are
/// all polynomials, so their partials never go through finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialField {
    dim_n: usize,
    // exponent vector -> coefficient
    terms: BTreeMap<Vec<u32>, f64>,
    label: String,
}

impl PolynomialField {
    pub fn zero(dim_n: usize) -> Self {
        Self {
            dim_n,
            terms: BTreeMap::new(),
            label: "poly".into(),
        }
    }

    pub fn constant(dim_n: usize, c: f64) -> Self {
        let mut p = Self::zero(dim_n);
        p.add_term(c, vec![0; 2 * dim_n]);
        p
    }

    /// The coordinate function `z^mu`.
    pub fn coordinate(dim_n: usize, mu: usize) -> Self {
        let mut e = vec![0; 2 * dim_n];
        e[mu] = 1;
        let mut p = Self::zero(dim_n);
        p.add_term(1.0, e);
        p.label = format!("z{mu}");
        p
    }

    /// Harmonic oscillator action `I^j = (x_j^2 + p_j^2) / 2`.
    pub fn harmonic_action(dim_n: usize, j: usize) -> Self {
        let mut p = Self::zero(dim_n);
        let mut ex = vec![0; 2 * dim_n];
        ex[j] = 2;
        let mut ep = vec![0; 2 * dim_n];
        ep[dim_n + j] = 2;
        p.add_term(0.5, ex);
        p.add_term(0.5, ep);
        p.label = format!("I{}", j + 1);
        p
    }

    /// `z^T Q z / 2` for a symmetric matrix `Q` given row-major.
    pub fn quadratic_form(dim_n: usize, q: &[f64]) -> Self {
        let m = 2 * dim_n;
        let mut p = Self::zero(dim_n);
        for i in 0..m {
            for j in 0..m {
                let mut e = vec![0; m];
                e[i] += 1;
                e[j] += 1;
                p.add_term(0.5 * q[i * m + j], e);
            }
        }
        p
    }

    pub fn add_term(&mut self, coef: f64, exponents: Vec<u32>) {
        assert_eq!(exponents.len(), 2 * self.dim_n);
        if coef == 0.0 {
            return;
        }
        let slot = self.terms.entry(exponents).or_insert(0.0);
        *slot += coef;
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(c, e.clone());
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dim_n);
        out.label = self.label.clone();
        for (e, &c) in &self.terms {
            out.add_term(c * s, e.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim_n);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(ca * cb, e);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.dim_n, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    fn eval_coords(&self, z: &[f64], multi_index: &[usize]) -> f64 {
        let m = z.len();
        let mut counts = vec![0u32; m];
        for &i in multi_index {
            counts[i] += 1;
        }
        let mut total = 0.0;
        'terms: for (e, &c) in &self.terms {
            let mut t = c;
            for v in 0..m {
                let d = counts[v];
                let k = e[v];
                if d > k {
                    continue 'terms;
                }
                // falling factorial k (k-1) ... (k-d+1)
                for r in 0..d {
                    t *= (k - r) as f64;
                }
                t *= z[v].powi((k - d) as i32);
            }
            total += t;
        }
        total
    }
}

impl ScalarField for PolynomialField {
    fn dim_n(&self) -> usize {
        self.dim_n
    }

    fn max_order(&self) -> usize {
        super::MAX_ORDER
    }

    fn evaluate(&self, z: &PhasePoint) -> Result<f64, FieldError> {
        self.check(z, 0)?;
        Ok(self.eval_coords(z.coords(), &[]))
    }

    fn partial(&self, z: &PhasePoint, multi_index: &[usize]) -> Result<f64, FieldError> {
        check_multi_index(self, z, multi_index)?;
        Ok(self.eval_coords(z.coords(), multi_index))
    }

    fn jet(&self, z: &PhasePoint, order: usize) -> Result<Jet, FieldError> {
        self.check(z, order)?;
        let n = z.coords().len();
        let mut jet = Jet::zeros(n, order);
        jet.set_value(self.eval_coords(z.coords(), &[]));
        for k in 1..=order {
            for idx in super::sorted_multi_indices(n, k) {
                jet.set_symmetric(&idx, self.eval_coords(z.coords(), &idx));
            }
        }
        Ok(jet)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_action_values() {
        let i1 = PolynomialField::harmonic_action(1, 0);
        let z = PhasePoint::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(i1.evaluate(&z).unwrap(), 1.0);
        assert_eq!(i1.evaluate(&PhasePoint::origin(1)).unwrap(), 0.0);
        assert_eq!(i1.partial(&z, &[0, 0]).unwrap(), 1.0);
        assert_eq!(i1.partial(&z, &[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(i1.partial(&z, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn product_rule_matches_expansion() {
        // (x + 2p)^3 at N = 1
        let x = PolynomialField::coordinate(1, 0);
        let p = PolynomialField::coordinate(1, 1);
        let f = x.add(&p.scale(2.0)).pow(3);
        let z = PhasePoint::new(vec![0.3, -0.7]).unwrap();
        let s: f64 = 0.3 - 1.4;
        assert!((f.evaluate(&z).unwrap() - s.powi(3)).abs() < 1e-14);
        assert!((f.partial(&z, &[1, 0]).unwrap() - 6.0 * 2.0 * s).abs() < 1e-13);
        assert!((f.partial(&z, &[1, 1, 1]).unwrap() - 48.0).abs() < 1e-13);
        assert_eq!(f.partial(&z, &[1, 1, 1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = PolynomialField::harmonic_action(2, 0);
        let z1 = PhasePoint::origin(1);
        assert!(matches!(
            f.evaluate(&z1),
            Err(FieldError::DimensionMismatch { .. })
        ));
        let z2 = PhasePoint::origin(2);
        assert!(matches!(
            f.partial(&z2, &[0, 0, 0, 0, 0]),
            Err(FieldError::OrderExceeded { .. })
        ));
        assert!(matches!(
            f.partial(&z2, &[7]),
            Err(FieldError::IndexOutOfRange { .. })
        ));
    }
}
