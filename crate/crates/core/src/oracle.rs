//! Reference spectra of the quantized central-force and 1D Hamiltonians.
//!
//! Everything is in balanced units: `H = ω₀ (p²/2 + U(r²))` with `[x, p] = iħ`,
//! so the values compare directly with the torus-quantization output.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::chart::{CentralForcePotential, OneDimPotential};
use crate::registry::Registry;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("eigenvalue {index} in sector m = {m} did not converge: change {change:e}")]
    NotConverged { m: i64, index: usize, change: f64 },
    #[error("radial box too small for m = {m}: tail mass {tail:e}")]
    BoxTooSmall { m: i64, tail: f64 },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// Uniform radial grid on `(0, r_max)`. `r_max = None` places the wall at
/// `margin` times the outer turning point of the highest requested state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    pub r_max: Option<f64>,
    pub n_points: usize,
    pub margin: f64,
}

impl Default for RadialGrid {
    fn default() -> Self {
        Self {
            r_max: None,
            n_points: 2000,
            margin: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProblem {
    pub potential: CentralForcePotential,
    pub hbar: f64,
    pub m: i64,
    pub grid: RadialGrid,
}

impl RadialProblem {
    /// Wall position for the lowest `count` states.
    pub fn r_max(&self, count: usize) -> f64 {
        if let Some(r) = self.grid.r_max {
            return r;
        }
        // harmonic estimate of the top energy, then the outer turning point at L = 0
        let e = self.hbar * (2.0 * count as f64 + self.m.unsigned_abs() as f64 + 1.0);
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.potential.u(hi) < e && hi < 1e8 {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.potential.u(mid) < e {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.grid.margin * hi.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorSpectrum {
    pub m: i64,
    pub energies: Vec<f64>,
    /// Difference between the two best resolutions, per eigenvalue.
    pub convergence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSpectrum {
    pub solver: String,
    pub hbar: f64,
    pub sectors: BTreeMap<i64, SectorSpectrum>,
}

impl OracleSpectrum {
    pub fn energy(&self, n_r: usize, m: i64) -> Option<f64> {
        self.sectors.get(&m)?.energies.get(n_r).copied()
    }
}

/// A method for the lowest eigenvalues of one angular-momentum sector.
pub trait RadialSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &RadialProblem, count: usize) -> Result<SectorSpectrum, OracleError>;
}

pub type SolverRegistry = Registry<dyn RadialSolver>;

impl SolverRegistry {
    pub fn with_defaults() -> Self {
        let mut r: SolverRegistry = Registry::new();
        r.register("oscillator-basis", Arc::new(OscillatorBasis::default()));
        r.register("fd-conservative", Arc::new(FiniteDifference::conservative()));
        r.register("fd-plain", Arc::new(FiniteDifference::plain()));
        r
    }
}

pub const DEFAULT_SOLVER: &str = "fd-conservative";

/// Lowest `n_max + 1` eigenvalues for every `m` in `m_list`.
pub fn exact_spectrum(
    potential: &CentralForcePotential,
    hbar: f64,
    m_list: &[i64],
    n_max: usize,
    grid: &RadialGrid,
    solver: &dyn RadialSolver,
) -> Result<OracleSpectrum, OracleError> {
    use rayon::prelude::*;
    if hbar <= 0.0 {
        return Err(OracleError::Invalid(format!("hbar must be positive, got {hbar}")));
    }
    let sectors = m_list
        .par_iter()
        .map(|&m| {
            let problem = RadialProblem {
                potential: potential.clone(),
                hbar,
                m,
                grid: grid.clone(),
            };
            solver.solve(&problem, n_max + 1).map(|s| (m, s))
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    Ok(OracleSpectrum {
        solver: solver.name().to_string(),
        hbar,
        sectors,
    })
}

fn eigenvalues_sorted(h: DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// `Σ_k c_k X^{k+1}` (the potential has no constant term).
fn matrix_polynomial_no_constant(coefficients: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(x.nrows(), x.ncols());
    for c in coefficients.iter().rev() {
        acc = (&acc + DMatrix::identity(x.nrows(), x.ncols()) * *c) * x;
    }
    acc
}

/// Diagonalization in the eigenbasis of the harmonic part. With `s = r²`
/// tridiagonal in that basis and `U` a polynomial, every matrix element is
/// exact; truncation is the only error and shrinks faster than any power.
#[derive(Debug, Clone, Serialize)]
pub struct OscillatorBasis {
    pub initial_size: usize,
    pub growth: usize,
    pub max_size: usize,
    pub rel_tol: f64,
}

impl Default for OscillatorBasis {
    fn default() -> Self {
        Self {
            initial_size: 40,
            growth: 20,
            max_size: 600,
            rel_tol: 1e-12,
        }
    }
}

impl OscillatorBasis {
    fn radial(&self, p: &RadialProblem, size: usize) -> Vec<f64> {
        let deg = p.potential.coefficients.len();
        let big = size + deg + 1;
        let am = p.m.unsigned_abs() as f64;
        let h = p.hbar;
        // r² in the 2D oscillator radial basis |n, m⟩ (Laguerre recurrence)
        let s = DMatrix::from_fn(big, big, |i, j| {
            let (i, j) = (i as f64, j as f64);
            if i == j {
                h * (2.0 * i + am + 1.0)
            } else if (i - j).abs() == 1.0 {
                let n = i.min(j);
                -h * ((n + 1.0) * (n + am + 1.0)).sqrt()
            } else {
                0.0
            }
        });
        let u = matrix_polynomial_no_constant(&p.potential.coefficients, &s);
        // p²/2 = H_osc − s/2
        let hm = DMatrix::from_fn(size, size, |i, j| {
            let h0 = if i == j { h * (2.0 * i as f64 + am + 1.0) } else { 0.0 };
            h0 - 0.5 * s[(i, j)] + u[(i, j)]
        });
        eigenvalues_sorted(hm)
            .into_iter()
            .map(|e| e * p.potential.omega0)
            .collect()
    }

    fn converge(
        &self,
        count: usize,
        m: i64,
        solve: impl Fn(usize) -> Vec<f64>,
    ) -> Result<SectorSpectrum, OracleError> {
        let mut size = self.initial_size.max(4 * count);
        let mut prev = solve(size);
        loop {
            let next_size = size + self.growth;
            let cur = solve(next_size);
            let change: Vec<f64> = (0..count).map(|i| (cur[i] - prev[i]).abs()).collect();
            let ok = (0..count).all(|i| change[i] <= self.rel_tol * cur[i].abs().max(1e-300));
            if ok {
                return Ok(SectorSpectrum {
                    m,
                    energies: cur[..count].to_vec(),
                    convergence: change,
                });
            }
            if next_size >= self.max_size {
                let (index, change) = change
                    .iter()
                    .copied()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap();
                return Err(OracleError::NotConverged { m, index, change });
            }
            size = next_size;
            prev = cur;
        }
    }

    /// Lowest `count` levels of the 1D Hamiltonian `ω₀ (p²/2 + V(x))`.
    pub fn solve_1d(
        &self,
        potential: &OneDimPotential,
        hbar: f64,
        count: usize,
    ) -> Result<Vec<f64>, OracleError> {
        let coeffs = &potential.coefficients;
        if coeffs.len() < 3 || coeffs[0] != 0.0 {
            return Err(OracleError::Invalid("1D potential must start at x²".into()));
        }
        let solve = |size: usize| {
            let big = size + coeffs.len();
            // x in the oscillator basis: ⟨n+1|x|n⟩ = √(ħ(n+1)/2)
            let x = DMatrix::from_fn(big, big, |i, j| {
                if i.abs_diff(j) == 1 {
                    (hbar * (i.max(j) as f64) / 2.0).sqrt()
                } else {
                    0.0
                }
            });
            let v = matrix_polynomial_no_constant(&coeffs[1..], &x);
            let x2 = &x * &x;
            let hm = DMatrix::from_fn(size, size, |i, j| {
                let h0 = if i == j { hbar * (i as f64 + 0.5) } else { 0.0 };
                h0 - 0.5 * x2[(i, j)] + v[(i, j)]
            });
            eigenvalues_sorted(hm)
                .into_iter()
                .map(|e| e * potential.omega0)
                .collect()
        };
        Ok(self.converge(count, 0, solve)?.energies)
    }
}

impl RadialSolver for OscillatorBasis {
    fn name(&self) -> &str {
        "oscillator-basis"
    }

    fn solve(&self, problem: &RadialProblem, count: usize) -> Result<SectorSpectrum, OracleError> {
        self.converge(count, problem.m, |size| self.radial(problem, size))
    }
}

/// Three-point schemes for `u = √r R` on a uniform grid with Dirichlet
/// walls, solved on `n`, `2n`, `4n` points and Richardson-extrapolated in h².
///
/// The plain form discretizes `-u''` with the `(m² − ¼)/r²` term. For |m| = 1
/// the solution behaves like r^{3/2} at the origin and its error keeps an
/// h² log h piece the extrapolation cannot remove. The conservative form
/// discretizes `-(1/r)(r R')'` by fluxes at half-integer nodes and then
/// symmetrizes with √r; the ¼ shift ends up in the off-diagonal weights
/// `(i + ½)/√(i(i+1))` and the error expansion is clean in h².
#[derive(Debug, Clone, Serialize)]
pub struct FiniteDifference {
    pub conservative: bool,
    pub rel_tol: f64,
    pub tail_fraction: f64,
    pub max_tail: f64,
}

impl FiniteDifference {
    pub fn conservative() -> Self {
        Self {
            conservative: true,
            rel_tol: 1e-8,
            tail_fraction: 0.1,
            max_tail: 1e-8,
        }
    }

    pub fn plain() -> Self {
        Self {
            conservative: false,
            rel_tol: 1e-7,
            ..Self::conservative()
        }
    }
}

/// Symmetric tridiagonal matrix: `diag` and `off[i]` between `i` and `i+1`.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiagonal {
    /// Number of eigenvalues below `x` (Sturm sequence via LDLᵀ pivots).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.diag.len() {
            let b2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            d = self.diag[i] - x - b2 / d;
            if d == 0.0 {
                d = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue by bisection.
    fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for a known eigenvalue by two sweeps of inverse iteration.
    fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.diag.len();
        let shift = lambda + 1e-10 * lambda.abs().max(1e-12);
        let mut v = vec![1.0; n];
        for _ in 0..3 {
            // Thomas algorithm for (T - shift) w = v
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            let mut denom = self.diag[0] - shift;
            c[0] = if n > 1 { self.off[0] / denom } else { 0.0 };
            d[0] = v[0] / denom;
            for i in 1..n {
                denom = self.diag[i] - shift - self.off[i - 1] * c[i - 1];
                if denom == 0.0 {
                    denom = 1e-300;
                }
                c[i] = if i + 1 < n { self.off[i] / denom } else { 0.0 };
                d[i] = (v[i] - self.off[i - 1] * d[i - 1]) / denom;
            }
            let mut w = vec![0.0; n];
            w[n - 1] = d[n - 1];
            for i in (0..n - 1).rev() {
                w[i] = d[i] - c[i] * w[i + 1];
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
        }
        v
    }
}

impl FiniteDifference {
    fn operator(&self, p: &RadialProblem, r_max: f64, n: usize) -> Tridiagonal {
        let h = r_max / (n + 1) as f64;
        let hb = p.hbar;
        let m2 = (p.m * p.m) as f64;
        let kin = hb * hb / (2.0 * h * h);
        // the ¼ comes from u = √r R: the 2D radial Laplacian loses its
        // first-derivative term at the price of -1/(4r²)
        let shift = if self.conservative { 0.0 } else { 0.25 };
        let diag = (1..=n)
            .map(|i| {
                let r = i as f64 * h;
                2.0 * kin + hb * hb * (m2 - shift) / (2.0 * r * r) + p.potential.u(r * r)
            })
            .collect();
        let off = (1..n)
            .map(|i| {
                if self.conservative {
                    let i = i as f64;
                    -kin * (i + 0.5) / (i * (i + 1.0)).sqrt()
                } else {
                    -kin
                }
            })
            .collect();
        Tridiagonal { diag, off }
    }

    fn levels(&self, p: &RadialProblem, r_max: f64, n: usize, count: usize) -> Vec<f64> {
        let t = self.operator(p, r_max, n);
        (0..count).map(|k| t.eigenvalue(k)).collect()
    }

    /// Fraction of `|u|²` in the outer `tail_fraction` of the box.
    fn tail_mass(&self, p: &RadialProblem, r_max: f64, n: usize, k: usize) -> f64 {
        let t = self.operator(p, r_max, n);
        let v = t.eigenvector(t.eigenvalue(k));
        let start = ((1.0 - self.tail_fraction) * n as f64) as usize;
        v[start..].iter().map(|x| x * x).sum::<f64>()
    }
}

impl RadialSolver for FiniteDifference {
    fn name(&self) -> &str {
        if self.conservative {
            "fd-conservative"
        } else {
            "fd-plain"
        }
    }

    fn solve(&self, p: &RadialProblem, count: usize) -> Result<SectorSpectrum, OracleError> {
        if p.m == 0 {
            // the -1/(4r²) term makes the u-equation singular at the wall r = 0
            return Err(OracleError::Invalid("m = 0 is not supported by the radial grid".into()));
        }
        let r_max = p.r_max(count);
        let n = p.grid.n_points.max(100);
        let tail = self.tail_mass(p, r_max, n, count - 1);
        if tail > self.max_tail {
            return Err(OracleError::BoxTooSmall { m: p.m, tail });
        }
        let e: Vec<Vec<f64>> = [n, 2 * n + 1, 4 * n + 3]
            .iter()
            .map(|&k| self.levels(p, r_max, k, count))
            .collect();
        // (n+1) h is fixed, so n, 2n+1, 4n+3 halve the step exactly
        let rich = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(c, f)| f + (f - c) / 3.0).collect()
        };
        let r1 = rich(&e[0], &e[1]);
        let r2 = rich(&e[1], &e[2]);
        let convergence: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| (a - b).abs()).collect();
        for (index, (&c, &v)) in convergence.iter().zip(&r2).enumerate() {
            if c > self.rel_tol * v.abs() {
                return Err(OracleError::NotConverged { m: p.m, index, change: c });
            }
        }
        Ok(SectorSpectrum {
            m: p.m,
            energies: r2.iter().map(|e| e * p.potential.omega0).collect(),
            convergence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_basis_is_exact() {
        let pot = CentralForcePotential::isotropic();
        let s = exact_spectrum(&pot, 0.1, &[1, -2, 3], 4, &RadialGrid::default(), &OscillatorBasis::default())
            .unwrap();
        for (&m, sec) in &s.sectors {
            for (n, e) in sec.energies.iter().enumerate() {
                let exact = 0.1 * (2.0 * n as f64 + m.unsigned_abs() as f64 + 1.0);
                assert!((e - exact).abs() < 1e-12, "{m} {n} {e}");
            }
        }
    }

    #[test]
    fn sturm_count_matches_dense() {
        let t = Tridiagonal {
            diag: vec![2.0, 3.0, -1.0, 0.5, 4.0],
            off: vec![1.0, -0.5, 0.25, 2.0],
        };
        let dense = DMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                t.diag[i]
            } else if j == i + 1 {
                t.off[i]
            } else if i == j + 1 {
                t.off[j]
            } else {
                0.0
            }
        });
        let e = eigenvalues_sorted(dense);
        for (k, ek) in e.iter().enumerate() {
            assert!((t.eigenvalue(k) - ek).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dim_harmonic_levels() {
        let e = OscillatorBasis::default()
            .solve_1d(&OneDimPotential::quartic(0.0), 0.2, 5)
            .unwrap();
        for (n, v) in e.iter().enumerate() {
            assert!((v - 0.2 * (n as f64 + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_and_basis_agree_for_quartic() {
        let pot = CentralForcePotential::quartic(0.01);
        let g = RadialGrid::default();
        let a = exact_spectrum(&pot, 0.1, &[1, -3], 2, &g, &FiniteDifference::conservative()).unwrap();
        let b = exact_spectrum(&pot, 0.1, &[1, -3], 2, &g, &OscillatorBasis::default()).unwrap();
        for (m, sec) in &a.sectors {
            for (x, y) in sec.energies.iter().zip(&b.sectors[m].energies) {
                assert!((x - y).abs() < 1e-9 * y, "{m}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn small_box_is_detected() {
        let p = RadialProblem {
            potential: CentralForcePotential::isotropic(),
            hbar: 0.1,
            m: 1,
            grid: RadialGrid {
                r_max: Some(0.6),
                ..RadialGrid::default()
            },
        };
        let err = FiniteDifference::conservative().solve(&p, 3).unwrap_err();
        assert!(matches!(err, OracleError::BoxTooSmall { .. }), "{err:?}");
    }
}
