use crate::field::FieldError;

/// Evaluates a polynomial with ascending coefficients.
pub fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

pub fn derivative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

/// Divides `p` (ascending) by `(x - r)`, returning the quotient and remainder.
pub fn deflate(p: &[f64], r: f64) -> (Vec<f64>, f64) {
    let d = p.len() - 1;
    let mut q = vec![0.0; d];
    let mut carry = 0.0;
    for k in (0..=d).rev() {
        let v = p[k] + carry * r;
        if k == 0 {
            return (q, v);
        }
        q[k - 1] = v;
        carry = v;
    }
    unreachable!()
}

/// Root of `f` in `[lo, hi]` given opposite signs at the ends: Newton steps
/// kept inside a shrinking bisection bracket.
pub fn bracketed_root(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
) -> Result<f64, FieldError> {
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(FieldError::Numerical(format!(
            "root not bracketed in [{lo:e}, {hi:e}]"
        )));
    }
    let rising = fhi > 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == rising {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        x = next;
        if hi - lo <= 2.0 * f64::EPSILON * x.abs() {
            return Ok(x);
        }
    }
    Ok(x)
}

/// The region `lo <= x <= hi` where `P(x) > 0`, with the factorization
/// `P(x) = (x - lo)(hi - x) g(x)` and the parametrization
/// `x = mid + half · sin u`, which removes the square-root endpoint behaviour
/// of `√P`.
#[derive(Debug, Clone, PartialEq)]
pub struct Libration {
    pub lo: f64,
    pub hi: f64,
    pub mid: f64,
    pub half: f64,
    /// Cofactor `g` (ascending coefficients), positive on `[lo, hi]`.
    pub g: Vec<f64>,
}

impl Libration {
    pub fn new(p: &[f64], lo: f64, hi: f64) -> Result<Self, FieldError> {
        if !(lo < hi) {
            return Err(FieldError::OutsideRegion(format!(
                "turning points coincide or are misordered: {lo:e} >= {hi:e}"
            )));
        }
        let (q1, _) = deflate(p, lo);
        let (q2, _) = deflate(&q1, hi);
        // (x - lo)(x - hi) q2 = P, so g = -q2
        let g: Vec<f64> = q2.iter().map(|c| -c).collect();
        let lib = Self {
            lo,
            hi,
            mid: 0.5 * (lo + hi),
            half: 0.5 * (hi - lo),
            g,
        };
        for x in [lo, lib.mid, hi] {
            if lib.g_at(x) <= 0.0 {
                return Err(FieldError::OutsideRegion(format!(
                    "turning point is not simple (cofactor {:e} at {x:e})",
                    lib.g_at(x)
                )));
            }
        }
        Ok(lib)
    }

    #[inline]
    pub fn x(&self, u: f64) -> f64 {
        self.mid + self.half * u.sin()
    }

    #[inline]
    pub fn g_at(&self, x: f64) -> f64 {
        horner(&self.g, x)
    }

    /// Phase `u ∈ [-π/2, 3π/2)` of the point at `x` whose momentum-like
    /// coordinate is `v`, with `half · cos u · √g(x) = v`.
    pub fn phase(&self, x: f64, v: f64) -> f64 {
        let sin_part = x - self.mid;
        let cos_part = v / self.g_at(x).max(f64::MIN_POSITIVE).sqrt();
        let mut u = sin_part.atan2(cos_part);
        if u < -std::f64::consts::FRAC_PI_2 {
            u += std::f64::consts::TAU;
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deflation_recovers_factor() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let p = [6.0, -7.0, 0.0, 1.0];
        let (q, rem) = deflate(&p, 2.0);
        assert!(rem.abs() < 1e-14);
        assert_eq!(q, vec![-3.0, 2.0, 1.0]);
    }

    #[test]
    fn newton_bisection_root() {
        let r = bracketed_root(|x| (x * x - 2.0, 2.0 * x), 0.0, 5.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn libration_of_downward_parabola() {
        // P = -(x - 1)(x - 3) -> g = 1
        let p = [-3.0, 4.0, -1.0];
        let lib = Libration::new(&p, 1.0, 3.0).unwrap();
        assert_eq!(lib.g, vec![1.0]);
        assert!((lib.x(std::f64::consts::FRAC_PI_2) - 3.0).abs() < 1e-15);
        // moving outward through the middle
        assert!(lib.phase(2.0, 1.0).abs() < 1e-15);
        // returning: u = π
        assert!((lib.phase(2.0, -1.0) - std::f64::consts::PI).abs() < 1e-15);
    }
}
