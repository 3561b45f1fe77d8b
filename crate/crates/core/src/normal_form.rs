//! Normal form of commuting quadratic Hamiltonians at a stable fixed point.
//!
//! Given Hessians `Q¹..Qᴺ` with `Q¹` definite and `[JQʲ, JQᵏ] = 0`, finds a
//! symplectic `S` with `SᵀQʲS = Σ_k a_jk Δᵏ`, where `Δᵏ` has ones at
//! `(k, k)` and `(N+k, N+k)`, i.e. `½zᵀΔᵏz` is the k-th oscillator action.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldError, FieldRef, PhasePoint, PoissonTensor};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NormalFormError {
    #[error("input violates the preconditions: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("frequencies {0:e} and {1:e} are too close to tell apart")]
    AmbiguousClusters(f64, f64),
    #[error("joint diagonalization left an off-diagonal residual {0:e}")]
    NotDiagonalized(f64),
    #[error("eigenvalues of JQ¹ are not purely imaginary")]
    NotElliptic,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A failed precondition and by how much.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    Shape { index: usize },
    Asymmetric { index: usize, residual: f64 },
    NotDefinite { min_eigenvalue: f64 },
    NotCommuting { j: usize, k: usize, residual: f64 },
    /// `QʲJQᵏ` should be antisymmetric.
    NotAntisymmetric { j: usize, k: usize, residual: f64 },
    LinearlyDependent { rank: usize },
}

/// Hessians of the principal symbols at the fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticHamiltonianSet {
    pub q: Vec<DMatrix<f64>>,
}

impl QuadraticHamiltonianSet {
    pub fn new(q: Vec<DMatrix<f64>>) -> Self {
        Self { q }
    }

    /// Hessians of the given fields at `z`.
    pub fn from_fields(fields: &[FieldRef], z: &PhasePoint) -> Result<Self, FieldError> {
        let m = 2 * z.dim_n();
        let q = fields
            .iter()
            .map(|f| {
                let jet = f.jet(z, 2)?;
                Ok(DMatrix::from_fn(m, m, |a, b| jet.get(&[a, b])))
            })
            .collect::<Result<_, FieldError>>()?;
        Ok(Self { q })
    }

    pub fn dim_n(&self) -> usize {
        self.q.first().map_or(0, |m| m.nrows() / 2)
    }
}

pub fn delta(n: usize, k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    d[(k, k)] = 1.0;
    d[(n + k, n + k)] = 1.0;
    d
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Checks symmetry, definiteness of `Q¹`, pairwise commutation (in both
/// equivalent forms) and linear independence.
pub fn validate(set: &QuadraticHamiltonianSet, tol: f64) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let n = set.dim_n();
    if n == 0 || set.q.len() != n {
        return Err(vec![Violation::Shape { index: 0 }]);
    }
    for (i, q) in set.q.iter().enumerate() {
        if q.nrows() != 2 * n || q.ncols() != 2 * n {
            v.push(Violation::Shape { index: i });
        }
    }
    if !v.is_empty() {
        return Err(v);
    }
    let scale = set.q.iter().map(max_abs).fold(1.0, f64::max);
    for (i, q) in set.q.iter().enumerate() {
        let r = max_abs(&(q - q.transpose()));
        if r > tol * scale {
            v.push(Violation::Asymmetric { index: i, residual: r });
        }
    }
    let q1 = &set.q[0];
    let eig = SymmetricEigen::new(0.5 * (q1 + q1.transpose())).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0 || hi < 0.0) {
        v.push(Violation::NotDefinite { min_eigenvalue: lo });
    }
    let j = PoissonTensor::new(n).upper_matrix();
    for a in 0..n {
        for b in a + 1..n {
            let ja = &j * &set.q[a];
            let jb = &j * &set.q[b];
            let r = max_abs(&(&ja * &jb - &jb * &ja));
            if r > tol * scale * scale {
                v.push(Violation::NotCommuting { j: a, k: b, residual: r });
            }
            let m = &set.q[a] * &j * &set.q[b];
            let r = max_abs(&(&m + m.transpose()));
            if r > tol * scale * scale {
                v.push(Violation::NotAntisymmetric { j: a, k: b, residual: r });
            }
        }
    }
    let stacked = DMatrix::from_fn(4 * n * n, n, |r, c| set.q[c].as_slice()[r]);
    let rank = stacked.svd(false, false).rank(tol * scale);
    if rank < n {
        v.push(Violation::LinearlyDependent { rank });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadraticNormalForm {
    #[serde(serialize_with = "ser_matrix")]
    pub s: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub a: DMatrix<f64>,
    /// Distinct frequencies of `Q¹` with their multiplicities.
    pub lambda: Vec<(f64, usize)>,
    /// `Q¹` was negative definite and has been replaced by `-Q¹`.
    pub negated: bool,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

impl QuadraticNormalForm {
    /// `max |SᵀωS - ω|`
    pub fn symplectic_residual(&self) -> f64 {
        let n = self.s.nrows() / 2;
        let w = PoissonTensor::new(n).lower_matrix();
        max_abs(&(self.s.transpose() * &w * &self.s - w))
    }

    /// `max_j |SᵀQʲS - Σ_k a_jk Δᵏ|` against the (possibly negated) input.
    pub fn form_residual(&self, set: &QuadraticHamiltonianSet) -> f64 {
        let n = set.dim_n();
        set.q
            .iter()
            .enumerate()
            .map(|(j, q)| {
                let q = if j == 0 && self.negated { -q } else { q.clone() };
                let mut target = DMatrix::zeros(2 * n, 2 * n);
                for k in 0..n {
                    target += self.a[(j, k)] * delta(n, k);
                }
                max_abs(&(self.s.transpose() * q * &self.s - target))
            })
            .fold(0.0, f64::max)
    }
}

// Maps a complex n×n matrix U to the real 2n×2n [[Re U, -Im U], [Im U, Re U]].
fn realify(u: &DMatrix<Complex<f64>>) -> DMatrix<f64> {
    let n = u.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = u[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Computes `S`, `a` and the frequency clusters. `tol` is the relative
/// clustering tolerance for frequencies and the acceptance threshold for
/// the within-cluster diagonalization.
pub fn compute_normal_form(
    set: &QuadraticHamiltonianSet,
    tol: f64,
) -> Result<QuadraticNormalForm, NormalFormError> {
    validate(set, tol.max(1e-9)).map_err(NormalFormError::Invalid)?;
    let n = set.dim_n();
    let m = 2 * n;
    let mut q = set.q.clone();
    let negated = SymmetricEigen::new(q[0].clone()).eigenvalues.max() < 0.0;
    if negated {
        q[0] = -&q[0];
    }
    let q1 = 0.5 * (&q[0] + q[0].transpose());
    let j = PoissonTensor::new(n).upper_matrix();

    // K = Q^{-1/2} J Q^{-1/2} is antisymmetric with eigenvalues ±i/λ.
    let eig = SymmetricEigen::new(q1.clone());
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let k = &inv_sqrt * &j * &inv_sqrt;
    let k = 0.5 * (&k - k.transpose());
    let k2 = -(&k * &k);
    let e2 = SymmetricEigen::new(0.5 * (&k2 + k2.transpose()));
    if e2.eigenvalues.min() <= 0.0 {
        return Err(NormalFormError::NotElliptic);
    }
    // eigenvalues of -K² are 1/λ², each at least twice; sort by λ descending
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| e2.eigenvalues[a].partial_cmp(&e2.eigenvalues[b]).unwrap());
    let lam_of = |i: usize| 1.0 / e2.eigenvalues[i].sqrt();
    let lam_max = lam_of(order[0]);
    let ctol = tol * lam_max;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(c) if (lam_of(c[0]) - lam_of(i)).abs() <= ctol => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    for w in clusters.windows(2) {
        let (a, b) = (lam_of(w[0][0]), lam_of(w[1][0]));
        if (a - b).abs() < 10.0 * ctol {
            return Err(NormalFormError::AmbiguousClusters(a, b));
        }
    }
    if clusters.iter().any(|c| c.len() % 2 != 0) {
        return Err(NormalFormError::NotElliptic);
    }

    // Build e_i, f_i = -K e_i / d_i pairwise orthonormal within each cluster.
    let mut e_cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut f_cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut lambda = Vec::new();
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    for c in &clusters {
        let d = c
            .iter()
            .map(|&i| e2.eigenvalues[i].sqrt())
            .sum::<f64>()
            / c.len() as f64;
        let start = e_cols.len();
        let mut taken: Vec<nalgebra::DVector<f64>> = Vec::new();
        for &i in c {
            let mut v = e2.eigenvectors.column(i).into_owned();
            for t in &taken {
                v -= t * t.dot(&v);
            }
            let norm = v.norm();
            if norm < 1e-6 {
                continue;
            }
            v /= norm;
            let f = -(&k * &v) / d;
            taken.push(v.clone());
            let mut fo = f.clone();
            for t in &taken {
                fo -= t * t.dot(&fo);
            }
            let fo = fo.normalize();
            taken.push(fo);
            e_cols.push(v);
            f_cols.push(f);
            if e_cols.len() - start == c.len() / 2 {
                break;
            }
        }
        if e_cols.len() - start != c.len() / 2 {
            return Err(NormalFormError::NotElliptic);
        }
        lambda.push((1.0 / d, c.len() / 2));
        blocks.push((start, c.len() / 2));
    }
    let mut o = DMatrix::zeros(m, m);
    let mut dinv_sqrt = DMatrix::zeros(m, m);
    for (col, (e, f)) in e_cols.iter().zip(&f_cols).enumerate() {
        o.set_column(col, e);
        o.set_column(n + col, f);
    }
    for (block, &(start, len)) in blocks.iter().enumerate() {
        let lam = lambda[block].0;
        for i in start..start + len {
            dinv_sqrt[(i, i)] = lam.sqrt();
            dinv_sqrt[(n + i, n + i)] = lam.sqrt();
        }
    }
    let mut s = &inv_sqrt * &o * &dinv_sqrt;

    // Within each frequency cluster rotate by a unitary to diagonalize the
    // other Hessians jointly.
    let transformed: Vec<DMatrix<f64>> = q.iter().map(|qj| s.transpose() * qj * &s).collect();
    for &(start, len) in &blocks {
        if len == 1 || n == 1 {
            continue;
        }
        let herm = |qj: &DMatrix<f64>| {
            DMatrix::from_fn(len, len, |r, c| {
                let p = qj[(start + r, start + c)];
                let rr = qj[(start + r, n + start + c)];
                Complex::new(p, -rr)
            })
        };
        // generic combination separates every joint eigenspace
        let mut comb = DMatrix::<Complex<f64>>::zeros(len, len);
        for (jj, qj) in transformed.iter().enumerate().skip(1) {
            let w = 1.0 + 0.6180339887 * jj as f64 + 0.1 * (jj * jj) as f64;
            comb += herm(qj) * Complex::new(w, 0.0);
        }
        let comb = (&comb + comb.adjoint()) * Complex::new(0.5, 0.0);
        let he = SymmetricEigen::new(comb);
        // descending eigenvalues of the second observable within the block
        let mut idx: Vec<usize> = (0..len).collect();
        let second = herm(&transformed[1.min(transformed.len() - 1)]);
        let diag2: Vec<f64> = (0..len)
            .map(|i| {
                let v = he.eigenvectors.column(i);
                (v.adjoint() * &second * v)[(0, 0)].re
            })
            .collect();
        idx.sort_by(|&a, &b| diag2[b].partial_cmp(&diag2[a]).unwrap());
        let u = DMatrix::from_fn(len, len, |r, c| he.eigenvectors[(r, idx[c])]);
        let w = realify(&u);
        let mut full = DMatrix::<f64>::identity(m, m);
        for r in 0..2 * len {
            for c in 0..2 * len {
                let rr = if r < len { start + r } else { n + start + r - len };
                let cc = if c < len { start + c } else { n + start + c - len };
                full[(rr, cc)] = w[(r, c)];
            }
        }
        s = &s * full;
    }

    let mut a = DMatrix::zeros(n, n);
    let mut off = 0.0f64;
    for (jj, qj) in q.iter().enumerate() {
        let t = s.transpose() * qj * &s;
        for kk in 0..n {
            a[(jj, kk)] = 0.5 * (t[(kk, kk)] + t[(n + kk, n + kk)]);
        }
        let mut target = DMatrix::zeros(m, m);
        for kk in 0..n {
            target += a[(jj, kk)] * delta(n, kk);
        }
        off = off.max(max_abs(&(t - target)) / max_abs(qj).max(1e-300));
    }
    if off > tol.max(1e-8) {
        return Err(NormalFormError::NotDiagonalized(off));
    }
    Ok(QuadraticNormalForm {
        s,
        a,
        lambda,
        negated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_force_pair(w0: f64) -> QuadraticHamiltonianSet {
        let q1 = DMatrix::identity(4, 4) * w0;
        // L = x p_y - y p_x
        let mut q2 = DMatrix::zeros(4, 4);
        q2[(0, 3)] = 1.0;
        q2[(3, 0)] = 1.0;
        q2[(1, 2)] = -1.0;
        q2[(2, 1)] = -1.0;
        QuadraticHamiltonianSet::new(vec![q1, q2])
    }

    #[test]
    fn central_force_recovers_signature() {
        let set = central_force_pair(1.0);
        let nf = compute_normal_form(&set, 1e-10).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        assert!((nf.a.clone() - expect).abs().max() < 1e-10, "{}", nf.a);
        assert!(nf.symplectic_residual() < 1e-12);
        assert!(nf.form_residual(&set) < 1e-10);
        assert_eq!(nf.lambda.len(), 1);
        assert_eq!(nf.lambda[0].1, 2);
        assert!((nf.lambda[0].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let mut set = central_force_pair(1.0);
        set.q[0] = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0]));
        let err = validate(&set, 1e-10).unwrap_err();
        assert!(err.iter().any(|v| matches!(v, Violation::NotDefinite { .. })));
    }

    #[test]
    fn negative_definite_is_negated() {
        let mut set = central_force_pair(1.0);
        set.q[0] = -&set.q[0];
        let nf = compute_normal_form(&set, 1e-10).unwrap();
        assert!(nf.negated);
        assert!(nf.form_residual(&set) < 1e-10);
    }

    fn random_symplectic(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sym = |rng: &mut rand_chacha::ChaCha8Rng| {
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
            0.5 * (&m + m.transpose())
        };
        let a = sym(&mut rng);
        let b = sym(&mut rng);
        let g = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
        let gi = g.clone().try_inverse().unwrap().transpose();
        let mut upper = DMatrix::identity(2 * n, 2 * n);
        upper.view_mut((0, n), (n, n)).copy_from(&a);
        let mut lower = DMatrix::identity(2 * n, 2 * n);
        lower.view_mut((n, 0), (n, n)).copy_from(&b);
        let mut diag = DMatrix::zeros(2 * n, 2 * n);
        diag.view_mut((0, 0), (n, n)).copy_from(&g);
        diag.view_mut((n, n), (n, n)).copy_from(&gi);
        upper * lower * diag
    }

    #[test]
    fn recovers_planted_coefficients_under_symplectic_change() {
        let n = 3;
        let t = random_symplectic(n, 7);
        let w = PoissonTensor::new(n).lower_matrix();
        assert!((t.transpose() * &w * &t - &w).abs().max() < 1e-12);
        let c = DMatrix::from_row_slice(3, 3, &[3.0, 2.0, 1.0, 1.0, -1.0, 0.5, 0.0, 1.0, 2.0]);
        let ti = t.clone().try_inverse().unwrap();
        let q = (0..n)
            .map(|j| {
                let mut d = DMatrix::zeros(2 * n, 2 * n);
                for k in 0..n {
                    d += c[(j, k)] * delta(n, k);
                }
                ti.transpose() * d * &ti
            })
            .collect();
        let set = QuadraticHamiltonianSet::new(q);
        let nf = compute_normal_form(&set, 1e-10).unwrap();
        assert!(nf.symplectic_residual() < 1e-10);
        assert!(nf.form_residual(&set) < 1e-9);
        assert!((nf.a.clone() - c).abs().max() < 1e-9, "{}", nf.a);
    }

    #[test]
    fn rejects_non_commuting() {
        let mut set = central_force_pair(1.0);
        set.q[1] = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0]));
        let err = validate(&set, 1e-10).unwrap_err();
        assert!(err.iter().any(|v| matches!(v, Violation::NotCommuting { .. })));
    }
}
