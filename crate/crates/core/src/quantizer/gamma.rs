use serde::Serialize;

use super::QuantizerError;
use crate::chart::ActionAngleChart;
use crate::field::{fd_jets, FieldError, Jet, PhasePoint, PoissonTensor, Richardson};

/// `Γ_{μαβ} = (∂z_ν/∂D^μ)(∂²z^ν/∂D^α∂D^β)` of the action-angle frame and,
/// optionally, its derivatives `∂Γ_{μαβ}/∂D^ρ`.
#[derive(Debug, Clone, Serialize)]
pub struct ConnectionCoefficients {
    pub m: usize,
    /// Lower indices, `[(μ m + α) m + β]`.
    pub lower: Vec<f64>,
    /// `∂Γ/∂D^ρ` at `[((ρ m + μ) m + α) m + β]`, when requested.
    pub derivative: Option<Vec<f64>>,
}

impl ConnectionCoefficients {
    pub fn get(&self, mu: usize, a: usize, b: usize) -> f64 {
        self.lower[(mu * self.m + a) * self.m + b]
    }

    /// `Γ^{μαβ} = J^{μμ'} J^{αα'} J^{ββ'} Γ_{μ'α'β'}`
    pub fn raised(&self, mu: usize, a: usize, b: usize) -> f64 {
        let j = PoissonTensor::new(self.m / 2);
        let (p0, s0) = j.partner(mu);
        let (p1, s1) = j.partner(a);
        let (p2, s2) = j.partner(b);
        s0 * s1 * s2 * self.get(p0, p1, p2)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let g = self.get(a, b, c);
                    worst = worst.max((g - self.get(b, a, c)).abs());
                    worst = worst.max((g - self.get(a, c, b)).abs());
                }
            }
        }
        worst
    }

    /// `Γ^{μνσ} Γ_{μνσ}`
    pub fn full_contraction(&self) -> f64 {
        let m = self.m;
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    s += self.raised(a, b, c) * self.get(a, b, c);
                }
            }
        }
        s
    }
}

/// Step scale for differencing the inverse chart: small enough to stay on
/// nearby interior tori.
fn inverse_scale(actions: &[f64]) -> f64 {
    // roundoff dominates the third derivatives, so steps are a sizable
    // fraction of the smallest action (the Richardson stencils are 3e-2 wide)
    actions.iter().fold(1.0f64, |s, a| s.min(a.abs())) * 4.0
}

fn inverse_jets(
    chart: &dyn ActionAngleChart,
    z: &PhasePoint,
    order: usize,
) -> Result<Vec<Jet>, FieldError> {
    let aa = chart.forward(z)?;
    let n = chart.dim_n();
    let mut d0 = aa.angles.clone();
    d0.extend(&aa.actions);
    let f = |d: &[f64]| chart.inverse(&d[..n], &d[n..]).map(PhasePoint::into_coords);
    fd_jets(&f, &d0, order, &Richardson::default(), inverse_scale(&aa.actions))
}

pub fn connection_coefficients(
    chart: &dyn ActionAngleChart,
    z: &PhasePoint,
    with_derivative: bool,
) -> Result<ConnectionCoefficients, QuantizerError> {
    let n = chart.dim_n();
    let m = 2 * n;
    let zj = inverse_jets(chart, z, if with_derivative { 3 } else { 2 })?;
    let j = PoissonTensor::new(n);
    // derivatives of z_ν = z^λ J_{λν} (contracted on J's first index, the
    // convention under which D^α → D^β → D^γ = Γ^{αβγ})
    let lowered = |nu: usize, idx: &[usize]| {
        let (lam, s) = j.partner(nu);
        s * zj[lam].get(idx)
    };
    let mut lower = vec![0.0; m * m * m];
    for mu in 0..m {
        for a in 0..m {
            for b in 0..m {
                lower[(mu * m + a) * m + b] =
                    (0..m).map(|nu| lowered(nu, &[mu]) * zj[nu].get(&[a, b])).sum();
            }
        }
    }
    let derivative = with_derivative.then(|| {
        let mut d = vec![0.0; m * m * m * m];
        for rho in 0..m {
            for mu in 0..m {
                for a in 0..m {
                    for b in 0..m {
                        d[((rho * m + mu) * m + a) * m + b] = (0..m)
                            .map(|nu| {
                                lowered(nu, &[rho, mu]) * zj[nu].get(&[a, b])
                                    + lowered(nu, &[mu]) * zj[nu].get(&[rho, a, b])
                            })
                            .sum();
                    }
                }
            }
        }
        d
    });
    Ok(ConnectionCoefficients {
        m,
        lower,
        derivative,
    })
}

/// `Γ^{μνσ} ∂Γ_{μνσ}/∂φ^k`, an independent value of `D^μ → A^k ⇉ D_μ`.
pub fn hard_diagram_via_gamma(
    chart: &dyn ActionAngleChart,
    z: &PhasePoint,
    k: usize,
) -> Result<f64, QuantizerError> {
    let g = connection_coefficients(chart, z, true)?;
    let m = g.m;
    let d = g.derivative.as_ref().unwrap();
    let mut s = 0.0;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                s += g.raised(a, b, c) * d[((k * m + a) * m + b) * m + c];
            }
        }
    }
    Ok(s)
}
