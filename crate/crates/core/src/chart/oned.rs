use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::libration::{bracketed_root, derivative, horner, Libration};
use super::quadrature::{integrate, integrate_adaptive};
use super::{
    energy_jets_by_inversion, unwrap_near, wrap_angle, ActionAngleChart, AngleAction,
    ContourData,
};
use crate::field::{
    compose_jets, fd_jets, DerivativeScheme, FieldError, FieldRef, Jet, PhasePoint,
    PolynomialField, Richardson, ScalarField,
};

/// `V(x) = Σ_k v_k x^k` in balanced units (`v_0 = v_1 = 0`, `v_2 = 1/2`),
/// with `H = ω₀ (p²/2 + V)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OneDimPotential {
    pub coefficients: Vec<f64>,
    pub omega0: f64,
}

impl OneDimPotential {
    /// `x²/2 + Σ higher[i] x^{i+3}`
    pub fn balanced(higher: &[f64]) -> Self {
        let mut coefficients = vec![0.0, 0.0, 0.5];
        coefficients.extend_from_slice(higher);
        Self {
            coefficients,
            omega0: 1.0,
        }
    }

    /// `x²/2 + λx⁴`
    pub fn quartic(lambda: f64) -> Self {
        Self::balanced(&[0.0, lambda])
    }

    pub fn v(&self, x: f64) -> f64 {
        horner(&self.coefficients, x)
    }

    pub fn dv(&self, x: f64) -> f64 {
        horner(&derivative(&self.coefficients), x)
    }

    /// Lowest critical value of `V` on either side of the minimum.
    pub fn first_critical_energy(&self) -> Option<f64> {
        let d = derivative(&self.coefficients);
        let mut best: Option<f64> = None;
        for dir in [1.0, -1.0] {
            let mut prev = 1e-3;
            let mut x = 1e-3 * 1.05;
            while x < 1e6 {
                if dir * horner(&d, dir * x) <= 0.0 {
                    let c = bracketed_root(
                        |t| (horner(&d, dir * t), 0.0),
                        prev,
                        x,
                    )
                    .ok()?;
                    let e = self.v(dir * c);
                    best = Some(best.map_or(e, |b: f64| b.min(e)));
                    break;
                }
                prev = x;
                x *= 1.05;
            }
        }
        best
    }
}

const QUAD_TOL: f64 = 1e-14;

/// One libration `x0 < x < x1` at energy `ε` (units of ω₀):
/// `K0 = ∫ w²cos²u √g`, `K1 = ∫ 1/√g` over a half period.
#[derive(Debug, Clone)]
pub struct Oscillation {
    pub eps: f64,
    pub lib: Libration,
    pub nodes: usize,
    pub k0: f64,
    pub k1: f64,
}

impl Oscillation {
    pub fn action(&self) -> f64 {
        self.k0 / PI
    }

    pub fn partial_time(&self, u: f64) -> f64 {
        if u > FRAC_PI_2 {
            return 2.0 * self.k1 - self.partial_time(PI - u);
        }
        let [j] = integrate(self.nodes, -FRAC_PI_2, u, |v| {
            [1.0 / self.lib.g_at(self.lib.x(v)).sqrt()]
        });
        j
    }
}

/// Action-angle chart `(x, p) -> (φ, A)` for a one-dimensional oscillator.
#[derive(Clone)]
pub struct OneDimChart {
    potential: OneDimPotential,
    eps_cap: Option<f64>,
    scheme: Arc<dyn DerivativeScheme>,
    eps_field: Arc<PolynomialField>,
}

impl OneDimChart {
    pub fn new(potential: OneDimPotential) -> Self {
        let x = PolynomialField::coordinate(1, 0);
        let mut v = PolynomialField::zero(1);
        for (k, c) in potential.coefficients.iter().enumerate() {
            if *c != 0.0 {
                v = v.add(&x.pow(k as u32).scale(*c));
            }
        }
        let eps = PolynomialField::coordinate(1, 1)
            .pow(2)
            .scale(0.5)
            .add(&v)
            .with_label("eps");
        let eps_cap = potential.first_critical_energy().map(|e| 0.5 * e);
        Self {
            potential,
            eps_cap,
            scheme: Arc::new(Richardson::default()),
            eps_field: Arc::new(eps),
        }
    }

    pub fn with_scheme(mut self, scheme: Arc<dyn DerivativeScheme>) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn potential(&self) -> &OneDimPotential {
        &self.potential
    }

    pub fn omega0(&self) -> f64 {
        self.potential.omega0
    }

    pub fn eps_field(&self) -> FieldRef {
        self.eps_field.clone()
    }

    fn polynomial(&self, eps: f64) -> Vec<f64> {
        let mut p: Vec<f64> = self.potential.coefficients.iter().map(|c| -2.0 * c).collect();
        p[0] += 2.0 * eps;
        p
    }

    pub fn oscillation(&self, eps: f64, nodes: Option<usize>) -> Result<Oscillation, FieldError> {
        if !(eps > 0.0) {
            return Err(FieldError::OutsideRegion(format!("energy {eps:e} is not positive")));
        }
        let p = self.polynomial(eps);
        let dp = derivative(&p);
        let f = |x: f64| (horner(&p, x), horner(&dp, x));
        let mut ends = [0.0; 2];
        for (slot, dir) in [(0, -1.0), (1, 1.0)] {
            let mut x = (2.0 * eps).sqrt().max(1e-8);
            let mut guard = 0;
            while horner(&p, dir * x) > 0.0 {
                if dir * self.potential.dv(dir * x) <= 0.0 {
                    return Err(FieldError::OutsideRegion(format!(
                        "energy {eps:e} is above a separatrix"
                    )));
                }
                x *= 2.0;
                guard += 1;
                if guard > 200 {
                    return Err(FieldError::OutsideRegion("unbounded motion".into()));
                }
            }
            let (a, b) = if dir < 0.0 { (-x, 0.0) } else { (0.0, x) };
            ends[slot] = bracketed_root(f, a, b)?;
        }
        let lib = Libration::new(&p, ends[0], ends[1])?;
        let w2 = lib.half * lib.half;
        let integrand = |u: f64| {
            let sg = lib.g_at(lib.x(u)).sqrt();
            let c = u.cos();
            [w2 * c * c * sg, 1.0 / sg]
        };
        let (k, n) = match nodes {
            Some(n) => (integrate(n, -FRAC_PI_2, FRAC_PI_2, integrand), n),
            None => integrate_adaptive(-FRAC_PI_2, FRAC_PI_2, QUAD_TOL, integrand)
                .ok_or_else(|| FieldError::Numerical("quadrature did not converge".into()))?,
        };
        Ok(Oscillation {
            eps,
            lib,
            nodes: n,
            k0: k[0],
            k1: k[1],
        })
    }

    fn eps_from_action(&self, a: f64) -> Result<(f64, Oscillation), FieldError> {
        if !(a > 0.0) {
            return Err(FieldError::OutsideRegion(format!("action {a:e} is not positive")));
        }
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut eps = a;
        for _ in 0..100 {
            let o = match self.oscillation(eps, None) {
                Ok(o) => o,
                Err(_) if eps > lo => {
                    hi = eps;
                    eps = 0.5 * (lo + hi);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let resid = o.action() - a;
            if resid > 0.0 {
                hi = hi.min(eps);
            } else {
                lo = lo.max(eps);
            }
            let step = resid / (o.k1 / PI);
            if step.abs() <= 2.0 * f64::EPSILON * eps || resid == 0.0 {
                if let Some(cap) = self.eps_cap {
                    if eps > cap {
                        return Err(FieldError::OutsideRegion(format!(
                            "action {a:e} is above the energy cap"
                        )));
                    }
                }
                return Ok((eps, o));
            }
            let mut next = eps - step;
            if !(next > lo && next < hi) {
                next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * eps };
            }
            eps = next;
        }
        Err(FieldError::Numerical(format!("energy inversion failed at A = {a:e}")))
    }

    fn forward_with(&self, z: &PhasePoint, nodes: Option<usize>) -> Result<(AngleAction, usize), FieldError> {
        if z.dim_n() != 1 {
            return Err(FieldError::DimensionMismatch {
                expected: 1,
                found: z.dim_n(),
            });
        }
        let c = z.coords();
        let eps = 0.5 * c[1] * c[1] + self.potential.v(c[0]);
        let o = self.oscillation(eps, nodes)?;
        let u = o.lib.phase(c[0].clamp(o.lib.lo, o.lib.hi), c[1]);
        let phi = PI * o.partial_time(u) / o.k1;
        Ok((
            AngleAction {
                angles: vec![wrap_angle(phi)],
                actions: vec![o.action()],
            },
            o.nodes,
        ))
    }

    fn outer_jet(&self, o: &Oscillation, order: usize) -> Result<Jet, FieldError> {
        let mut jet = Jet::zeros(1, order);
        jet.set_value(o.action());
        if order == 0 {
            return Ok(jet);
        }
        jet.set_symmetric(&[0], o.k1 / PI);
        if order == 1 {
            return Ok(jet);
        }
        let nodes = o.nodes;
        let grad = |x: &[f64]| -> Result<Vec<f64>, FieldError> {
            Ok(vec![self.oscillation(x[0], Some(nodes))?.k1 / PI])
        };
        let scale = 5.0 * o.eps.min(1.0);
        let gj = fd_jets(&grad, &[o.eps], order - 1, self.scheme.as_ref(), scale)?;
        for q in 2..=order {
            jet.set_symmetric(&vec![0; q], gj[0].get(&vec![0; q - 1]));
        }
        Ok(jet)
    }
}

impl ActionAngleChart for OneDimChart {
    fn dim_n(&self) -> usize {
        1
    }

    fn label(&self) -> String {
        "one-dimensional".into()
    }

    fn observables(&self) -> Vec<FieldRef> {
        vec![Arc::new(self.eps_field.scale(self.omega0()).with_label("H"))]
    }

    fn contour(&self) -> ContourData {
        ContourData {
            nu: vec![vec![1]],
            gamma: vec![2],
        }
    }

    fn check_actions(&self, actions: &[f64]) -> Result<(), FieldError> {
        self.eps_from_action(actions[0]).map(|_| ())
    }

    fn forward(&self, z: &PhasePoint) -> Result<AngleAction, FieldError> {
        Ok(self.forward_with(z, None)?.0)
    }

    fn inverse(&self, angles: &[f64], actions: &[f64]) -> Result<PhasePoint, FieldError> {
        let (_, o) = self.eps_from_action(actions[0])?;
        let target = wrap_angle(angles[0]) * o.k1 / PI;
        let solve = |t: f64| {
            bracketed_root(
                |u| (o.partial_time(u) - t, 1.0 / o.lib.g_at(o.lib.x(u)).sqrt()),
                -FRAC_PI_2,
                FRAC_PI_2,
            )
        };
        let u = if target <= o.k1 {
            solve(target)?
        } else {
            PI - solve(2.0 * o.k1 - target)?
        };
        let x = o.lib.x(u);
        let p = o.lib.half * u.cos() * o.lib.g_at(x).sqrt();
        PhasePoint::new(vec![x, p])
    }

    fn action_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError> {
        let ej = self.eps_field.jet(z, order)?;
        let o = self.oscillation(ej.value(), None)?;
        let outer = self.outer_jet(&o, order)?;
        Ok(vec![compose_jets(&outer, &[ej])])
    }

    fn angle_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError> {
        let (center, nodes) = self.forward_with(z, None)?;
        let scale = 1f64.min((2.0 * center.actions[0]).sqrt());
        let reference = center.angles[0];
        let f = |x: &[f64]| -> Result<Vec<f64>, FieldError> {
            let p = PhasePoint::new(x.to_vec())?;
            let (aa, _) = self.forward_with(&p, Some(nodes))?;
            Ok(vec![unwrap_near(aa.angles[0], reference)])
        };
        fd_jets(&f, z.coords(), order, self.scheme.as_ref(), scale)
    }

    fn energy_jets(&self, actions: &[f64], order: usize) -> Result<Vec<Jet>, FieldError> {
        let (eps, o) = self.eps_from_action(actions[0])?;
        let outer = self.outer_jet(&o, order)?;
        let mut id = Jet::zeros(1, order);
        id.set_value(eps);
        if order > 0 {
            id.set_symmetric(&[0], 1.0);
        }
        let out = energy_jets_by_inversion(&[outer], &[eps], &[id])?;
        Ok(vec![out[0].scaled(self.omega0())])
    }

    fn sample_actions(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let top = self.eps_cap.map_or(1.0, |c| c.min(1.0));
        vec![rng.gen_range(0.1 * top..0.8 * top)]
    }
}
