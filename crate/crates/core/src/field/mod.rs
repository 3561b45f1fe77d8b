//! Phase-space geometry primitives.
//!
//! Coordinates are ordered `z = (x_1..x_N, p_1..p_N)`. Fields expose mixed
//! partial derivatives up to fourth order, either in closed form
//! ([`PolynomialField`]), by finite differences ([`FdField`]) or through the
//! multivariate chain rule ([`CompositeField`]).

mod compose;
mod fd;
mod jet;
mod poly;

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

pub use compose::{compose_jets, invert_jet_map, CompositeField, OuterFunction};
pub use fd::{
    fd_jets, CentralDifference, DerivativeScheme, FdField, FdSteps, Richardson, SchemeRegistry,
};
pub use jet::{sorted_multi_indices, Jet};
pub use poly::PolynomialField;

/// Highest derivative order any field in this crate is asked for.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FieldError {
    #[error("dimension mismatch: field has N = {expected}, point has N = {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("derivative order {requested} exceeds the field's maximum {max}")]
    OrderExceeded { requested: usize, max: usize },
    #[error("finite-difference step {step:e} underflows at |x| = {magnitude:e}")]
    StepUnderflow { step: f64, magnitude: f64 },
    #[error("coordinate index {index} out of range for 2N = {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("point outside the field's region of validity: {0}")]
    OutsideRegion(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A point of the 2N-dimensional phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    coords: Vec<f64>,
}

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, FieldError> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(FieldError::Numerical(format!(
                "phase point needs an even, nonzero number of coordinates, got {}",
                coords.len()
            )));
        }
        Ok(Self { coords })
    }

    pub fn from_xp(x: &[f64], p: &[f64]) -> Result<Self, FieldError> {
        if x.len() != p.len() {
            return Err(FieldError::DimensionMismatch {
                expected: x.len(),
                found: p.len(),
            });
        }
        let mut coords = x.to_vec();
        coords.extend_from_slice(p);
        Self::new(coords)
    }

    pub fn origin(dim_n: usize) -> Self {
        Self {
            coords: vec![0.0; 2 * dim_n],
        }
    }

    pub fn dim_n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn x(&self) -> &[f64] {
        &self.coords[..self.dim_n()]
    }

    pub fn p(&self) -> &[f64] {
        &self.coords[self.dim_n()..]
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// The Poisson tensor `J^{μν} = [[0, I], [-I, 0]]` and its inverse
/// `J_{μν} = [[0, -I], [I, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoissonTensor {
    dim_n: usize,
}

impl PoissonTensor {
    pub fn new(dim_n: usize) -> Self {
        Self { dim_n }
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    /// `J^{μν}`.
    #[inline]
    pub fn upper(&self, mu: usize, nu: usize) -> f64 {
        let n = self.dim_n;
        if mu < n && nu == mu + n {
            1.0
        } else if mu >= n && nu + n == mu {
            -1.0
        } else {
            0.0
        }
    }

    /// `J_{μν}`, the symplectic form.
    #[inline]
    pub fn lower(&self, mu: usize, nu: usize) -> f64 {
        -self.upper(mu, nu)
    }

    /// The single `ν` with `J^{μν} ≠ 0`, and its value.
    #[inline]
    pub fn partner(&self, mu: usize) -> (usize, f64) {
        let n = self.dim_n;
        if mu < n {
            (mu + n, 1.0)
        } else {
            (mu - n, -1.0)
        }
    }

    pub fn upper_matrix(&self) -> DMatrix<f64> {
        let m = 2 * self.dim_n;
        DMatrix::from_fn(m, m, |i, j| self.upper(i, j))
    }

    pub fn lower_matrix(&self) -> DMatrix<f64> {
        let m = 2 * self.dim_n;
        DMatrix::from_fn(m, m, |i, j| self.lower(i, j))
    }
}

/// A differentiable function on phase space.
///
/// Implementations must be pure: the same point always gives the same value,
/// so fields can be shared across threads.
pub trait ScalarField: Send + Sync {
    fn dim_n(&self) -> usize;

    fn max_order(&self) -> usize;

    fn evaluate(&self, z: &PhasePoint) -> Result<f64, FieldError>;

    /// Mixed partial along `multi_index` (coordinate indices, any order).
    fn partial(&self, z: &PhasePoint, multi_index: &[usize]) -> Result<f64, FieldError>;

    /// All partials up to `order`. The default fills each distinct sorted
    /// multi-index once and mirrors it across permutations.
    fn jet(&self, z: &PhasePoint, order: usize) -> Result<Jet, FieldError> {
        self.check(z, order)?;
        let n = 2 * self.dim_n();
        let mut jet = Jet::zeros(n, order);
        jet.set_value(self.evaluate(z)?);
        for k in 1..=order {
            for idx in sorted_multi_indices(n, k) {
                let v = self.partial(z, &idx)?;
                jet.set_symmetric(&idx, v);
            }
        }
        Ok(jet)
    }

    fn label(&self) -> String {
        "field".to_string()
    }

    fn check(&self, z: &PhasePoint, order: usize) -> Result<(), FieldError> {
        if z.dim_n() != self.dim_n() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim_n(),
                found: z.dim_n(),
            });
        }
        if order > self.max_order() {
            return Err(FieldError::OrderExceeded {
                requested: order,
                max: self.max_order(),
            });
        }
        Ok(())
    }
}

pub type FieldRef = Arc<dyn ScalarField>;

/// Checks a multi-index against the field before a partial is taken.
pub(crate) fn check_multi_index(
    field: &(impl ScalarField + ?Sized),
    z: &PhasePoint,
    multi_index: &[usize],
) -> Result<(), FieldError> {
    field.check(z, multi_index.len())?;
    let len = 2 * field.dim_n();
    if let Some(&bad) = multi_index.iter().find(|&&i| i >= len) {
        return Err(FieldError::IndexOutOfRange { index: bad, len });
    }
    Ok(())
}

/// A field backed by a precomputed jet at every point, e.g. a component of
/// a vector-valued map whose derivatives come out together.
pub struct JetField<F>
where
    F: Fn(&PhasePoint, usize) -> Result<Jet, FieldError> + Send + Sync,
{
    dim_n: usize,
    max_order: usize,
    label: String,
    source: F,
}

impl<F> JetField<F>
where
    F: Fn(&PhasePoint, usize) -> Result<Jet, FieldError> + Send + Sync,
{
    pub fn new(dim_n: usize, max_order: usize, label: impl Into<String>, source: F) -> Self {
        Self {
            dim_n,
            max_order,
            label: label.into(),
            source,
        }
    }
}

impl<F> ScalarField for JetField<F>
where
    F: Fn(&PhasePoint, usize) -> Result<Jet, FieldError> + Send + Sync,
{
    fn dim_n(&self) -> usize {
        self.dim_n
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn evaluate(&self, z: &PhasePoint) -> Result<f64, FieldError> {
        self.check(z, 0)?;
        Ok((self.source)(z, 0)?.value())
    }

    fn partial(&self, z: &PhasePoint, multi_index: &[usize]) -> Result<f64, FieldError> {
        check_multi_index(self, z, multi_index)?;
        Ok((self.source)(z, multi_index.len())?.get(multi_index))
    }

    fn jet(&self, z: &PhasePoint, order: usize) -> Result<Jet, FieldError> {
        self.check(z, order)?;
        (self.source)(z, order)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_tensor_identities() {
        for n in 1..=3 {
            let j = PoissonTensor::new(n);
            let up = j.upper_matrix();
            let low = j.lower_matrix();
            let id = DMatrix::<f64>::identity(2 * n, 2 * n);
            assert_eq!(&up * &low, id);
            assert_eq!(&up * &up, -&id);
            assert_eq!(up.transpose(), -&up);
            for mu in 0..2 * n {
                let (nu, s) = j.partner(mu);
                assert_eq!(j.upper(mu, nu), s);
            }
        }
    }

    #[test]
    fn phase_point_rejects_odd_length() {
        assert!(PhasePoint::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(PhasePoint::new(vec![]).is_err());
        let z = PhasePoint::from_xp(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(z.dim_n(), 2);
        assert_eq!(z.p(), &[3.0, 4.0]);
    }
}
