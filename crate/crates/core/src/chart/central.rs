use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::libration::{bracketed_root, derivative, horner, Libration};
use super::potential::CentralForcePotential;
use super::quadrature::{integrate, integrate_adaptive};
use super::{
    energy_jets_by_inversion, unwrap_near, wrap_angle, ActionAngleChart, AngleAction,
    ContourData,
};
use crate::field::{
    compose_jets, fd_jets, DerivativeScheme, FieldError, FieldRef, Jet, PhasePoint,
    PolynomialField, Richardson, ScalarField,
};

/// Sign sector of the angular momentum; `L = 0` belongs to neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Sector {
    Positive,
    Negative,
}

impl Sector {
    pub fn of(l: f64) -> Option<Sector> {
        if l > 0.0 {
            Some(Sector::Positive)
        } else if l < 0.0 {
            Some(Sector::Negative)
        } else {
            None
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Sector::Positive => 1.0,
            Sector::Negative => -1.0,
        }
    }

    pub fn contains(self, l: f64) -> bool {
        Sector::of(l) == Some(self)
    }
}

const QUAD_TOL: f64 = 1e-14;

/// Radial libration of one torus in the variable `s = r²`, with the
/// complete integrals over a half period:
/// `K0 = ∫ w²cos²u √g / (2s)`, `K1 = ∫ 1/(2√g)`, `K2 = ∫ 1/(2s√g)`.
#[derive(Debug, Clone)]
pub struct TorusGeometry {
    pub eps: f64,
    pub l: f64,
    pub lib: Libration,
    pub nodes: usize,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
}

impl TorusGeometry {
    pub fn radial_action(&self) -> f64 {
        self.k0 / PI
    }

    /// `(∂A_r/∂ε, ∂A_r/∂L)`
    pub fn action_gradient(&self) -> [f64; 2] {
        [self.k1 / PI, -self.l * self.k2 / PI]
    }

    /// Partial integrals `(J1, J2)` from the inner turning point to phase `u`.
    pub fn partial_integrals(&self, u: f64) -> (f64, f64) {
        if u > FRAC_PI_2 {
            let (a, b) = self.partial_integrals(PI - u);
            return (2.0 * self.k1 - a, 2.0 * self.k2 - b);
        }
        let [a, b] = integrate(self.nodes, -FRAC_PI_2, u, |v| {
            let s = self.lib.x(v);
            let sg = self.lib.g_at(s).sqrt();
            [0.5 / sg, 0.5 / (s * sg)]
        });
        (a, b)
    }

    /// Angle increments at phase `u`: `φ_r` and `θ - φ_θ`.
    pub fn phases(&self, u: f64) -> (f64, f64) {
        let (j1, j2) = self.partial_integrals(u);
        let phi_r = PI * j1 / self.k1;
        let dtheta = self.l * (j2 - self.k2 * j1 / self.k1);
        (phi_r, dtheta)
    }
}

/// Action-angle chart `(x, y, p_x, p_y) -> (φ_r, φ_θ, A_r, L)` for
/// `H = ω₀ (p²/2 + U(r²))` in one angular-momentum sector.
#[derive(Clone)]
pub struct CentralForceChart {
    potential: CentralForcePotential,
    sector: Sector,
    /// Energy cap in units of ω₀, if the family has a separatrix.
    eps_cap: Option<f64>,
    scheme: Arc<dyn DerivativeScheme>,
    step_factor: f64,
    eps_field: Arc<PolynomialField>,
    l_field: Arc<PolynomialField>,
}

impl std::fmt::Debug for CentralForceChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CentralForceChart")
            .field("potential", &self.potential)
            .field("sector", &self.sector)
            .field("eps_cap", &self.eps_cap)
            .field("scheme", &self.scheme.name())
            .finish()
    }
}

impl CentralForceChart {
    pub fn new(potential: CentralForcePotential, sector: Sector) -> Self {
        let dim = 2;
        let mut s = PolynomialField::zero(dim);
        for mu in 0..2 {
            s = s.add(&PolynomialField::coordinate(dim, mu).pow(2));
        }
        let mut u = PolynomialField::zero(dim);
        for (k, c) in potential.coefficients.iter().enumerate() {
            u = u.add(&s.pow(k as u32 + 1).scale(*c));
        }
        let p2 = PolynomialField::coordinate(dim, 2)
            .pow(2)
            .add(&PolynomialField::coordinate(dim, 3).pow(2));
        let eps = p2.scale(0.5).add(&u).with_label("eps");
        let l = PolynomialField::coordinate(dim, 0)
            .mul(&PolynomialField::coordinate(dim, 3))
            .add(
                &PolynomialField::coordinate(dim, 1)
                    .mul(&PolynomialField::coordinate(dim, 2))
                    .scale(-1.0),
            )
            .with_label("L");
        let eps_cap = potential.first_critical_energy().map(|e| 0.5 * e);
        Self {
            potential,
            sector,
            eps_cap,
            scheme: Arc::new(Richardson::default()),
            step_factor: 4.0,
            eps_field: Arc::new(eps),
            l_field: Arc::new(l),
        }
    }

    /// Caps the energy at `fraction` of the first critical value of `U`.
    pub fn with_cap_fraction(mut self, fraction: f64) -> Self {
        self.eps_cap = self.potential.first_critical_energy().map(|e| fraction * e);
        self
    }

    /// Finite-difference scheme used for angle derivatives and higher action
    /// derivatives.
    pub fn with_scheme(mut self, scheme: Arc<dyn DerivativeScheme>) -> Self {
        self.scheme = scheme;
        self
    }

    /// Multiplies the finite-difference steps taken in phase space. Angle
    /// values carry a few ulps of noise, so third derivatives want steps of
    /// roughly a tenth of the distance to the nearest chart singularity.
    pub fn with_step_factor(mut self, f: f64) -> Self {
        self.step_factor = f;
        self
    }

    pub fn potential(&self) -> &CentralForcePotential {
        &self.potential
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn omega0(&self) -> f64 {
        self.potential.omega0
    }

    pub fn energy_cap(&self) -> Option<f64> {
        self.eps_cap.map(|e| e * self.omega0())
    }

    /// `ε = H/ω₀` as a phase-space field.
    pub fn eps_field(&self) -> FieldRef {
        self.eps_field.clone()
    }

    pub fn l_field(&self) -> FieldRef {
        self.l_field.clone()
    }

    /// `P(s) = -L² + 2εs - 2sU(s)`, ascending.
    fn radial_polynomial(&self, eps: f64, l: f64) -> Vec<f64> {
        let mut p = vec![-l * l, 2.0 * eps];
        p.extend(self.potential.coefficients.iter().map(|c| -2.0 * c));
        p
    }

    /// Minimum of `V_eff(s) = L²/s + 2U(s)` over `s > 0`: `(s*, ε_min)`.
    pub fn circular_orbit(&self, l: f64) -> Result<(f64, f64), FieldError> {
        let l2 = l * l;
        if l2 == 0.0 {
            return Ok((0.0, 0.0));
        }
        let dv = |s: f64| -l2 / (s * s) + 2.0 * self.potential.du(s);
        let d2v = |s: f64| 2.0 * l2 / (s * s * s) + 2.0 * self.potential.d2u(s);
        let mut hi = l.abs();
        let mut guard = 0;
        while dv(hi) <= 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(FieldError::OutsideRegion(format!(
                    "no circular orbit for L = {l:e}"
                )));
            }
        }
        let mut lo = hi;
        while dv(lo) >= 0.0 {
            lo *= 0.5;
        }
        let s = bracketed_root(|s| (dv(s), d2v(s)), lo, hi)?;
        Ok((s, 0.5 * (l2 / s + 2.0 * self.potential.u(s))))
    }

    /// Roots `s0 < s1` of `P(s)` in the `s = r²` variable.
    fn roots_s(&self, eps: f64, l: f64) -> Result<(f64, f64), FieldError> {
        if l == 0.0 {
            return Err(FieldError::OutsideRegion(
                "L = 0 lies on the chart boundary".into(),
            ));
        }
        let (s_star, eps_min) = self.circular_orbit(l)?;
        if eps <= eps_min {
            return Err(FieldError::OutsideRegion(format!(
                "energy {eps:e} is not above the circular-orbit value {eps_min:e} for L = {l:e}"
            )));
        }
        let p = self.radial_polynomial(eps, l);
        let dp = derivative(&p);
        let f = |s: f64| (horner(&p, s), horner(&dp, s));
        let s0 = bracketed_root(f, 0.0, s_star)?;
        // outward: P must turn negative before V_eff turns down again
        let mut hi = 2.0 * s_star.max(eps);
        let mut guard = 0;
        while horner(&p, hi) > 0.0 {
            if self.potential.du(hi) * hi * hi < 0.5 * l * l {
                return Err(FieldError::OutsideRegion(format!(
                    "energy {eps:e} is above a separatrix"
                )));
            }
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(FieldError::OutsideRegion("unbounded radial motion".into()));
            }
        }
        let s1 = bracketed_root(f, s_star, hi)?;
        Ok((s0, s1))
    }

    /// Radial turning points `r₀ < r₁` for energy `E` (balanced units, i.e.
    /// `E = ω₀ ε`) and angular momentum `L`.
    pub fn turning_points(&self, energy: f64, l: f64) -> Result<(f64, f64), FieldError> {
        let (s0, s1) = self.roots_s(energy / self.omega0(), l)?;
        if s1 - s0 <= 1e-12 * s1 {
            return Err(FieldError::OutsideRegion(
                "turning points coincide (circular orbit)".into(),
            ));
        }
        Ok((s0.sqrt(), s1.sqrt()))
    }

    fn check_eps(&self, eps: f64) -> Result<(), FieldError> {
        if let Some(cap) = self.eps_cap {
            if eps > cap {
                return Err(FieldError::OutsideRegion(format!(
                    "energy {:e} above the cap {:e}",
                    eps * self.omega0(),
                    cap * self.omega0()
                )));
            }
        }
        Ok(())
    }

    /// Torus at `(ε, L)`. With `nodes = None` the rule is refined until the
    /// complete integrals settle; a fixed rule keeps nearby evaluations on
    /// the same discretization, which finite differences need.
    pub fn torus(&self, eps: f64, l: f64, nodes: Option<usize>) -> Result<TorusGeometry, FieldError> {
        let (s0, s1) = self.roots_s(eps, l)?;
        let lib = Libration::new(&self.radial_polynomial(eps, l), s0, s1)?;
        let w2 = lib.half * lib.half;
        let integrand = |u: f64| {
            let s = lib.x(u);
            let sg = lib.g_at(s).sqrt();
            let c = u.cos();
            [w2 * c * c * sg / (2.0 * s), 0.5 / sg, 0.5 / (s * sg)]
        };
        let (k, n) = match nodes {
            Some(n) => (integrate(n, -FRAC_PI_2, FRAC_PI_2, integrand), n),
            None => integrate_adaptive(-FRAC_PI_2, FRAC_PI_2, QUAD_TOL, integrand).ok_or_else(
                || FieldError::Numerical(format!("radial quadrature did not converge at ({eps:e}, {l:e})")),
            )?,
        };
        Ok(TorusGeometry {
            eps,
            l,
            lib,
            nodes: n,
            k0: k[0],
            k1: k[1],
            k2: k[2],
        })
    }

    /// `A_r` for energy `E` and angular momentum `L`.
    pub fn radial_action(&self, energy: f64, l: f64) -> Result<f64, FieldError> {
        Ok(self.torus(energy / self.omega0(), l, None)?.radial_action())
    }

    /// Inverts `A_r(ε, L)` at fixed `L` by safeguarded Newton; returns `E`.
    pub fn energy_from_actions(&self, a_r: f64, l: f64) -> Result<f64, FieldError> {
        Ok(self.eps_from_actions(a_r, l)?.0 * self.omega0())
    }

    fn eps_from_actions(&self, a_r: f64, l: f64) -> Result<(f64, TorusGeometry), FieldError> {
        if !(a_r > 0.0) || !self.sector.contains(l) {
            return Err(FieldError::OutsideRegion(format!(
                "actions ({a_r:e}, {l:e}) outside the chart"
            )));
        }
        let (_, eps_min) = self.circular_orbit(l)?;
        let mut lo = eps_min;
        let mut hi = f64::INFINITY;
        let mut eps = eps_min + 2.0 * a_r;
        for _ in 0..100 {
            if let Some(cap) = self.eps_cap {
                if eps > 1.5 * cap && hi.is_infinite() {
                    eps = 1.5 * cap;
                }
            }
            let t = match self.torus(eps, l, None) {
                Ok(t) => t,
                Err(_) if hi.is_infinite() && eps > lo => {
                    // beyond a separatrix: pull back
                    hi = eps;
                    eps = 0.5 * (lo + hi);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let resid = t.radial_action() - a_r;
            if resid > 0.0 {
                hi = hi.min(eps);
            } else {
                lo = lo.max(eps);
            }
            let step = resid / (t.k1 / PI);
            let mut next = eps - step;
            if !(next > lo && next < hi) {
                next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * eps - lo };
            }
            // Newton can dither at the last few ulps, so accept a closed bracket too
            let tiny = 8.0 * f64::EPSILON * eps.abs();
            if step.abs() <= tiny || resid == 0.0 || hi - lo <= tiny {
                self.check_eps(eps)?;
                return Ok((eps, t));
            }
            eps = next;
        }
        Err(FieldError::Numerical(format!(
            "energy inversion did not converge for A = ({a_r:e}, {l:e})"
        )))
    }

    /// Inverse of the chart at the given torus.
    pub fn torus_point(&self, angles: &[f64], actions: &[f64]) -> Result<PhasePoint, FieldError> {
        let (_, t) = self.eps_from_actions(actions[0], actions[1])?;
        self.point_on(&t, angles[0], angles[1])
    }

    fn point_on(&self, t: &TorusGeometry, phi_r: f64, phi_t: f64) -> Result<PhasePoint, FieldError> {
        let target = wrap_angle(phi_r) * t.k1 / PI;
        let u = if target <= t.k1 {
            self.solve_phase(t, target)?
        } else {
            PI - self.solve_phase(t, 2.0 * t.k1 - target)?
        };
        let s = t.lib.x(u);
        let r = s.sqrt();
        let v = t.lib.half * u.cos() * t.lib.g_at(s).sqrt();
        let p_r = v / r;
        let (_, dtheta) = t.phases(u);
        let theta = phi_t + dtheta;
        let (sn, cs) = theta.sin_cos();
        let pt = t.l / r;
        PhasePoint::new(vec![
            r * cs,
            r * sn,
            p_r * cs - pt * sn,
            p_r * sn + pt * cs,
        ])
    }

    // u in [-π/2, π/2] with J1(u) = target
    fn solve_phase(&self, t: &TorusGeometry, target: f64) -> Result<f64, FieldError> {
        let f = |u: f64| {
            let (j1, _) = t.partial_integrals(u);
            let s = t.lib.x(u);
            (j1 - target, 0.5 / t.lib.g_at(s).sqrt())
        };
        bracketed_root(f, -FRAC_PI_2, FRAC_PI_2)
    }

    fn invariants(z: &PhasePoint, pot: &CentralForcePotential) -> (f64, f64) {
        let c = z.coords();
        let (x, y, px, py) = (c[0], c[1], c[2], c[3]);
        let s = x * x + y * y;
        (0.5 * (px * px + py * py) + pot.u(s), x * py - y * px)
    }

    /// Forward map on a given rule size; angles are wrapped into `[0, 2π)`.
    fn forward_with(&self, z: &PhasePoint, nodes: Option<usize>) -> Result<(AngleAction, usize), FieldError> {
        if z.dim_n() != 2 {
            return Err(FieldError::DimensionMismatch {
                expected: 2,
                found: z.dim_n(),
            });
        }
        let (eps, l) = Self::invariants(z, &self.potential);
        if !self.sector.contains(l) {
            return Err(FieldError::OutsideRegion(format!(
                "L = {l:e} is outside the {:?} sector",
                self.sector
            )));
        }
        let t = self.torus(eps, l, nodes)?;
        let c = z.coords();
        let s = c[0] * c[0] + c[1] * c[1];
        let v = c[0] * c[2] + c[1] * c[3];
        let u = t.lib.phase(s.clamp(t.lib.lo, t.lib.hi), v);
        let (phi_r, dtheta) = t.phases(u);
        let theta = c[1].atan2(c[0]);
        Ok((
            AngleAction {
                angles: vec![wrap_angle(phi_r), wrap_angle(theta - dtheta)],
                actions: vec![t.radial_action(), l],
            },
            t.nodes,
        ))
    }

    /// Step scale for derivatives in `z`: the distance to the nearest chart
    /// singularity (origin, `L = 0`, circular orbit), capped at one.
    fn z_scale(&self, z: &PhasePoint, a_r: f64, l: f64) -> f64 {
        let c = z.coords();
        let r = c[0].hypot(c[1]);
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        1f64.min(r)
            .min(l.abs() / norm.max(1e-300))
            .min((2.0 * a_r).sqrt())
            * self.step_factor
    }

    /// Jet of `A_r(ε, L)` over `(ε, L)` at a torus: first derivatives in
    /// closed form, higher ones by differencing them on a fixed rule.
    fn action_outer_jet(&self, t: &TorusGeometry, order: usize) -> Result<Jet, FieldError> {
        let mut jet = Jet::zeros(2, order);
        jet.set_value(t.radial_action());
        if order == 0 {
            return Ok(jet);
        }
        let g = t.action_gradient();
        jet.set_symmetric(&[0], g[0]);
        jet.set_symmetric(&[1], g[1]);
        if order == 1 {
            return Ok(jet);
        }
        let (_, eps_min) = self.circular_orbit(t.l)?;
        let scale = 5.0 * (t.eps - eps_min).min(t.l.abs());
        let nodes = t.nodes;
        let grad = |x: &[f64]| -> Result<Vec<f64>, FieldError> {
            Ok(self.torus(x[0], x[1], Some(nodes))?.action_gradient().to_vec())
        };
        let gj = fd_jets(&grad, &[t.eps, t.l], order - 1, self.scheme.as_ref(), scale)?;
        for q in 2..=order {
            for idx in crate::field::sorted_multi_indices(2, q) {
                // symmetrize over which index is the analytic one
                let mut acc = 0.0;
                for (pos, &first) in idx.iter().enumerate() {
                    let mut rest = idx.clone();
                    rest.remove(pos);
                    acc += gj[first].get(&rest);
                }
                jet.set_symmetric(&idx, acc / q as f64);
            }
        }
        Ok(jet)
    }

    fn eps_l_jets(&self, z: &PhasePoint, order: usize) -> Result<[Jet; 2], FieldError> {
        Ok([self.eps_field.jet(z, order)?, self.l_field.jet(z, order)?])
    }
}

impl ActionAngleChart for CentralForceChart {
    fn dim_n(&self) -> usize {
        2
    }

    fn label(&self) -> String {
        let sign = match self.sector {
            Sector::Positive => "+",
            Sector::Negative => "-",
        };
        format!("central-force (L{sign})")
    }

    fn observables(&self) -> Vec<FieldRef> {
        let h: FieldRef = Arc::new(
            self.eps_field
                .scale(self.omega0())
                .with_label("H"),
        );
        vec![h, self.l_field.clone()]
    }

    fn contour(&self) -> ContourData {
        let nu = match self.sector {
            Sector::Positive => vec![vec![0, 1], vec![1, -1]],
            Sector::Negative => vec![vec![1, 0], vec![1, -1]],
        };
        let gamma = nu.iter().map(|row| 2 * row.iter().sum::<i64>()).collect();
        ContourData { nu, gamma }
    }

    fn check_actions(&self, actions: &[f64]) -> Result<(), FieldError> {
        self.eps_from_actions(actions[0], actions[1]).map(|_| ())
    }

    fn forward(&self, z: &PhasePoint) -> Result<AngleAction, FieldError> {
        let (aa, _) = self.forward_with(z, None)?;
        if let Some(cap) = self.eps_cap {
            let (eps, _) = Self::invariants(z, &self.potential);
            if eps > cap {
                return Err(FieldError::OutsideRegion(format!(
                    "energy {:e} above the cap {:e}",
                    eps * self.omega0(),
                    cap * self.omega0()
                )));
            }
        }
        Ok(aa)
    }

    fn inverse(&self, angles: &[f64], actions: &[f64]) -> Result<PhasePoint, FieldError> {
        self.torus_point(angles, actions)
    }

    fn action_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError> {
        let [ej, lj] = self.eps_l_jets(z, order)?;
        let t = self.torus(ej.value(), lj.value(), None)?;
        let outer = self.action_outer_jet(&t, order)?;
        let ar = compose_jets(&outer, &[ej, lj.clone()]);
        Ok(vec![ar, lj])
    }

    fn angle_jets(&self, z: &PhasePoint, order: usize) -> Result<Vec<Jet>, FieldError> {
        let (center, nodes) = self.forward_with(z, None)?;
        let scale = self.z_scale(z, center.actions[0], center.actions[1]);
        let reference = center.angles.clone();
        let f = |x: &[f64]| -> Result<Vec<f64>, FieldError> {
            let p = PhasePoint::new(x.to_vec())?;
            let (aa, _) = self.forward_with(&p, Some(nodes))?;
            Ok(aa
                .angles
                .iter()
                .zip(&reference)
                .map(|(&a, &r)| unwrap_near(a, r))
                .collect())
        };
        fd_jets(&f, z.coords(), order, self.scheme.as_ref(), scale)
    }

    fn energy_jets(&self, actions: &[f64], order: usize) -> Result<Vec<Jet>, FieldError> {
        let (eps, t) = self.eps_from_actions(actions[0], actions[1])?;
        let l = actions[1];
        let outer = self.action_outer_jet(&t, order)?;
        let mut l_jet = Jet::zeros(2, order);
        l_jet.set_value(l);
        if order > 0 {
            l_jet.set_symmetric(&[1], 1.0);
        }
        let mut eps_jet = Jet::zeros(2, order);
        eps_jet.set_value(eps);
        if order > 0 {
            eps_jet.set_symmetric(&[0], 1.0);
        }
        let mut out =
            energy_jets_by_inversion(&[outer, l_jet.clone()], &[eps, l], &[eps_jet, l_jet])?;
        out[0] = out[0].scaled(self.omega0());
        Ok(out)
    }

    fn sample_actions(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        // a moderate-energy, well-separated annulus
        let eps_top = self.eps_cap.map_or(2.0, |c| c.min(2.0));
        loop {
            let total: f64 = rng.gen_range(0.3 * eps_top..0.9 * eps_top);
            let frac: f64 = rng.gen_range(0.25..0.75);
            let l = self.sector.sign() * frac * total;
            if let Ok((_, eps_min)) = self.circular_orbit(l) {
                if total > eps_min * 1.05 {
                    if let Ok(t) = self.torus(total, l, None) {
                        return vec![t.radial_action(), l];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::f64::consts::TAU;
    use rand_chacha::ChaCha8Rng;

    fn angle_residual(chart: &CentralForceChart, z: &PhasePoint, phi: &[f64]) -> Result<f64, FieldError> {
        let aa = chart.forward(z)?;
        Ok(aa
            .angles
            .iter()
            .zip(phi)
            .map(|(&a, &p)| (unwrap_near(a, p) - p).abs())
            .fold(0.0, f64::max))
    }

    fn iso() -> CentralForceChart {
        CentralForceChart::new(CentralForcePotential::isotropic(), Sector::Positive)
    }

    fn quartic(sector: Sector) -> CentralForceChart {
        CentralForceChart::new(CentralForcePotential::quartic(0.01), sector)
    }

    #[test]
    fn isotropic_turning_points_closed_form() {
        let (r0, r1) = iso().turning_points(1.0, 0.5).unwrap();
        let d = (1.0f64 - 0.25).sqrt();
        assert!((r0 - (1.0 - d).sqrt()).abs() < 1e-13);
        assert!((r1 - (1.0 + d).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn circular_orbit_is_flagged() {
        assert!(iso().turning_points(0.5, 0.5).is_err());
        assert!(iso().turning_points(0.4, 0.5).is_err());
    }

    #[test]
    fn isotropic_radial_action_closed_form() {
        let c = iso();
        for &(e, l) in &[(1.0, 0.5), (2.0, 0.1), (0.7, 0.69), (3.0, 1.5)] {
            let a = c.radial_action(e, l).unwrap();
            assert!((a - 0.5 * (e - l)).abs() < 1e-12, "{e} {l}: {a}");
        }
    }

    #[test]
    fn quartic_action_against_trapezoid_oracle() {
        // brute-force trapezoid in r with the endpoint behaviour removed by
        // r = r0 + (r1 - r0)(1 - cos t)/2
        let c = quartic(Sector::Positive);
        let (e, l) = (1.0, 0.5);
        let (r0, r1) = c.turning_points(e, l).unwrap();
        let n = 1_000_000;
        let mut acc = 0.0;
        for i in 0..=n {
            let t = PI * i as f64 / n as f64;
            let r = r0 + 0.5 * (r1 - r0) * (1.0 - t.cos());
            let dr = 0.5 * (r1 - r0) * t.sin();
            let pr2 = 2.0 * e - l * l / (r * r) - 2.0 * (0.5 * r * r + 0.01 * r.powi(4));
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * pr2.max(0.0).sqrt() * dr;
        }
        let oracle = acc * (PI / n as f64) / PI;
        let a = c.radial_action(e, l).unwrap();
        assert!((a - oracle).abs() < 1e-8, "{a} vs {oracle}");
    }

    #[test]
    fn energy_round_trip() {
        let c = quartic(Sector::Negative);
        for &(e, l) in &[(1.0, -0.5), (0.3, -0.05), (2.5, -2.0)] {
            let a = c.radial_action(e, l).unwrap();
            let back = c.energy_from_actions(a, l).unwrap();
            assert!(((back - e) / e).abs() < 1e-12, "{e} -> {back}");
        }
        let ci = iso();
        let e = ci.energy_from_actions(0.3, 0.2).unwrap();
        assert!((e - 0.8).abs() < 1e-13);
    }

    #[test]
    fn contour_bookkeeping() {
        let p = iso().contour();
        assert_eq!(p.nu, vec![vec![0, 1], vec![1, -1]]);
        assert_eq!(p.gamma, vec![2, 0]);
        let n = CentralForceChart::new(CentralForcePotential::isotropic(), Sector::Negative).contour();
        assert_eq!(n.nu, vec![vec![1, 0], vec![1, -1]]);
        assert_eq!(n.gamma, vec![2, 0]);
        assert!((p.determinant() + 1.0).abs() < 1e-15);
        assert!((n.determinant() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip_through_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sector in [Sector::Positive, Sector::Negative] {
            let c = quartic(sector);
            for _ in 0..10 {
                let a = c.sample_actions(&mut rng);
                let phi = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
                let z = c.torus_point(&phi, &a).unwrap();
                let back = c.forward(&z).unwrap();
                assert!(angle_residual(&c, &z, &phi).unwrap() < 1e-10);
                assert!((back.actions[0] - a[0]).abs() < 1e-11);
                assert!((back.actions[1] - a[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outer_turning_point_has_half_period_phase() {
        let c = quartic(Sector::Positive);
        let z = c.torus_point(&[PI, 0.3], &[0.2, 0.6]).unwrap();
        let (e, l) = (c.eps_field.evaluate(&z).unwrap(), 0.6);
        let (_, r1) = c.turning_points(e, l).unwrap();
        let co = z.coords();
        assert!((co[0].hypot(co[1]) - r1).abs() < 1e-10);
        assert!((co[0] * co[2] + co[1] * co[3]).abs() < 1e-10);
    }

    #[test]
    fn isotropic_frequencies() {
        let c = iso();
        let f = c.frequency_data(&[0.3, 0.4]).unwrap();
        assert!((f.omega(0, 0) - 2.0).abs() < 1e-9);
        assert!((f.omega(0, 1) - 1.0).abs() < 1e-9);
        assert_eq!(f.omega(1, 1), 1.0);
        assert!(f.omega2(0, 0, 0).abs() < 1e-7);
        assert!(f.omega3(0, 1, 1, 1).abs() < 1e-5);
    }

    #[test]
    fn isotropic_action_jets_match_closed_form() {
        // A_r = (ε - L)/2 on the positive sector, exactly quadratic in z
        let c = iso();
        let z = c.torus_point(&[1.0, 2.0], &[0.3, 0.4]).unwrap();
        let jets = c.action_jets(&z, 3).unwrap();
        let e = c.eps_field.jet(&z, 3).unwrap();
        let l = c.l_field.jet(&z, 3).unwrap();
        for idx in crate::field::sorted_multi_indices(4, 2)
            .into_iter()
            .chain(crate::field::sorted_multi_indices(4, 3))
        {
            let expect = 0.5 * (e.get(&idx) - l.get(&idx));
            assert!((jets[0].get(&idx) - expect).abs() < 1e-6, "{idx:?}");
        }
    }
}
