use std::collections::HashMap;
use std::sync::Arc;

use super::{check_multi_index, sorted_multi_indices, FieldError, Jet, PhasePoint, ScalarField};
use crate::registry::Registry;

/// Base step per derivative order (index 0 = first derivatives), multiplied
/// by a per-field length scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub per_order: [f64; 4],
}

impl FdSteps {
    pub const CENTRAL: FdSteps = FdSteps {
        per_order: [1e-5, 1e-4, 1e-3, 2e-3],
    };
    // Richardson removes the h^2 and h^4 terms, so much larger steps pay off.
    pub const RICHARDSON: FdSteps = FdSteps {
        per_order: [4e-3, 1e-2, 2e-2, 3e-2],
    };

    pub fn step(&self, order: usize, scale: f64) -> f64 {
        self.per_order[order.clamp(1, 4) - 1] * scale
    }
}

type VecFn<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>, FieldError> + 'a;

/// Memoizes evaluations of a vector-valued function on stencil points.
pub struct StencilCache<'a> {
    f: &'a VecFn<'a>,
    seen: HashMap<Vec<u64>, Vec<f64>>,
}

impl<'a> StencilCache<'a> {
    pub fn new(f: &'a VecFn<'a>) -> Self {
        Self {
            f,
            seen: HashMap::new(),
        }
    }

    fn eval(&mut self, x: &[f64]) -> Result<&[f64], FieldError> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if !self.seen.contains_key(&key) {
            let v = (self.f)(x)?;
            self.seen.insert(key.clone(), v);
        }
        Ok(&self.seen[&key])
    }

    pub fn evaluations(&self) -> usize {
        self.seen.len()
    }
}

// 1D second-order central stencils: (offset, weight) with the step factored out.
fn stencil_1d(order: usize) -> &'static [(i32, f64)] {
    match order {
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => unreachable!("stencil order {order}"),
    }
}

/// Tensor-product central difference for one multi-index at step `h`.
/// Error is O(h^2) with an even expansion in h.
fn central_estimate(
    cache: &mut StencilCache<'_>,
    z: &[f64],
    idx: &[usize],
    h: f64,
) -> Result<Vec<f64>, FieldError> {
    for &i in idx {
        let mag = z[i].abs().max(1.0);
        if h < 1e-13 * mag {
            return Err(FieldError::StepUnderflow {
                step: h,
                magnitude: mag,
            });
        }
    }
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for &i in idx {
        match coords.iter_mut().find(|(c, _)| *c == i) {
            Some(slot) => slot.1 += 1,
            None => coords.push((i, 1)),
        }
    }
    let stencils: Vec<&[(i32, f64)]> = coords.iter().map(|&(_, k)| stencil_1d(k)).collect();
    let mut out: Option<Vec<f64>> = None;
    let mut pos = vec![0usize; coords.len()];
    let mut x = z.to_vec();
    'outer: loop {
        let mut w = 1.0;
        x.copy_from_slice(z);
        for (slot, &(c, _)) in coords.iter().enumerate() {
            let (off, wt) = stencils[slot][pos[slot]];
            w *= wt;
            x[c] = z[c] + off as f64 * h;
        }
        let v = cache.eval(&x)?;
        let acc = out.get_or_insert_with(|| vec![0.0; v.len()]);
        for (a, b) in acc.iter_mut().zip(v) {
            *a += w * b;
        }
        for slot in 0..coords.len() {
            pos[slot] += 1;
            if pos[slot] < stencils[slot].len() {
                continue 'outer;
            }
            pos[slot] = 0;
        }
        break;
    }
    let hk = h.powi(idx.len() as i32);
    Ok(out.unwrap().into_iter().map(|v| v / hk).collect())
}

/// A rule for estimating mixed partials of a black-box function.
pub trait DerivativeScheme: Send + Sync {
    fn name(&self) -> &str;

    /// Estimate of the partial along `idx` (non-empty) for every output
    /// component of the cached function.
    fn estimate(
        &self,
        cache: &mut StencilCache<'_>,
        z: &[f64],
        idx: &[usize],
        scale: f64,
    ) -> Result<Vec<f64>, FieldError>;
}

/// Plain second-order central differences.
#[derive(Debug, Clone)]
pub struct CentralDifference {
    pub steps: FdSteps,
}

impl Default for CentralDifference {
    fn default() -> Self {
        Self {
            steps: FdSteps::CENTRAL,
        }
    }
}

impl DerivativeScheme for CentralDifference {
    fn name(&self) -> &str {
        "central"
    }

    fn estimate(
        &self,
        cache: &mut StencilCache<'_>,
        z: &[f64],
        idx: &[usize],
        scale: f64,
    ) -> Result<Vec<f64>, FieldError> {
        central_estimate(cache, z, idx, self.steps.step(idx.len(), scale))
    }
}

/// Central differences at h, h/2, ..., h/2^levels combined by Richardson
/// extrapolation; each level removes one more even power of h.
#[derive(Debug, Clone)]
pub struct Richardson {
    pub steps: FdSteps,
    pub levels: usize,
}

impl Default for Richardson {
    fn default() -> Self {
        Self {
            steps: FdSteps::RICHARDSON,
            levels: 2,
        }
    }
}

impl DerivativeScheme for Richardson {
    fn name(&self) -> &str {
        "richardson"
    }

    fn estimate(
        &self,
        cache: &mut StencilCache<'_>,
        z: &[f64],
        idx: &[usize],
        scale: f64,
    ) -> Result<Vec<f64>, FieldError> {
        let h0 = self.steps.step(idx.len(), scale);
        let mut cur: Vec<Vec<f64>> = (0..=self.levels)
            .map(|l| central_estimate(cache, z, idx, h0 / f64::powi(2.0, l as i32)))
            .collect::<Result<_, _>>()?;
        for k in 1..=self.levels {
            let factor = f64::powi(4.0, k as i32) - 1.0;
            cur = (1..cur.len())
                .map(|i| {
                    cur[i]
                        .iter()
                        .zip(&cur[i - 1])
                        .map(|(fine, coarse)| fine + (fine - coarse) / factor)
                        .collect()
                })
                .collect();
        }
        Ok(cur.pop().unwrap())
    }
}

pub type SchemeRegistry = Registry<dyn DerivativeScheme>;

impl SchemeRegistry {
    pub fn with_defaults() -> Self {
        let mut r: SchemeRegistry = Registry::new();
        r.register("central", Arc::new(CentralDifference::default()));
        r.register("richardson", Arc::new(Richardson::default()));
        r
    }
}

/// Jets of every component of `f` at `z`, all partials up to `order`.
pub fn fd_jets(
    f: &VecFn<'_>,
    z: &[f64],
    order: usize,
    scheme: &dyn DerivativeScheme,
    scale: f64,
) -> Result<Vec<Jet>, FieldError> {
    let mut cache = StencilCache::new(f);
    let center = cache.eval(z)?.to_vec();
    let n = z.len();
    let mut jets: Vec<Jet> = center
        .iter()
        .map(|&v| Jet::constant(n, order, v))
        .collect();
    for k in 1..=order {
        for idx in sorted_multi_indices(n, k) {
            let est = scheme.estimate(&mut cache, z, &idx, scale)?;
            for (jet, v) in jets.iter_mut().zip(est) {
                jet.set_symmetric(&idx, v);
            }
        }
    }
    Ok(jets)
}

type ScalarFn = dyn Fn(&PhasePoint) -> Result<f64, FieldError> + Send + Sync;

/// A field known only through its values; derivatives by finite differences.
#[derive(Clone)]
pub struct FdField {
    f: Arc<ScalarFn>,
    dim_n: usize,
    max_order: usize,
    scheme: Arc<dyn DerivativeScheme>,
    scale: f64,
    label: String,
}

impl FdField {
    pub fn new(
        dim_n: usize,
        f: impl Fn(&PhasePoint) -> Result<f64, FieldError> + Send + Sync + 'static,
        scheme: Arc<dyn DerivativeScheme>,
    ) -> Self {
        Self {
            f: Arc::new(f),
            dim_n,
            max_order: super::MAX_ORDER,
            scheme,
            scale: 1.0,
            label: "fd".into(),
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order.min(super::MAX_ORDER);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn as_vec_fn(&self) -> impl Fn(&[f64]) -> Result<Vec<f64>, FieldError> + '_ {
        move |x: &[f64]| Ok(vec![(self.f)(&PhasePoint::new(x.to_vec())?)?])
    }
}

impl ScalarField for FdField {
    fn dim_n(&self) -> usize {
        self.dim_n
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn evaluate(&self, z: &PhasePoint) -> Result<f64, FieldError> {
        self.check(z, 0)?;
        (self.f)(z)
    }

    fn partial(&self, z: &PhasePoint, multi_index: &[usize]) -> Result<f64, FieldError> {
        check_multi_index(self, z, multi_index)?;
        if multi_index.is_empty() {
            return (self.f)(z);
        }
        let f = self.as_vec_fn();
        let mut cache = StencilCache::new(&f);
        Ok(self
            .scheme
            .estimate(&mut cache, z.coords(), multi_index, self.scale)?[0])
    }

    fn jet(&self, z: &PhasePoint, order: usize) -> Result<Jet, FieldError> {
        self.check(z, order)?;
        let f = self.as_vec_fn();
        Ok(fd_jets(&f, z.coords(), order, self.scheme.as_ref(), self.scale)?.remove(0))
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(x: &[f64]) -> Result<Vec<f64>, FieldError> {
        Ok(vec![(x[0] * x[1]).sin() + (0.5 * x[0]).exp() * x[1].cos()])
    }

    // d^2/dx0 dx1 of the test function, written out by hand
    fn exact_mixed(x0: f64, x1: f64) -> f64 {
        let s = x0 * x1;
        s.cos() - s * s.sin() - 0.5 * (0.5 * x0).exp() * x1.sin()
    }

    #[test]
    fn central_is_second_order() {
        let z = [0.3, -0.4];
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&h| {
                let mut c = StencilCache::new(&smooth);
                (central_estimate(&mut c, &z, &[0, 1], h).unwrap()[0] - exact_mixed(z[0], z[1]))
                    .abs()
            })
            .collect();
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!((3.5..4.5).contains(&r1), "{errs:?}");
        assert!((3.5..4.5).contains(&r2), "{errs:?}");
    }

    #[test]
    fn richardson_beats_central() {
        let z = [0.3, -0.4];
        let exact = exact_mixed(z[0], z[1]);
        let rich = Richardson::default();
        let mut c = StencilCache::new(&smooth);
        let e = (rich.estimate(&mut c, &z, &[0, 1], 1.0).unwrap()[0] - exact).abs();
        assert!(e < 1e-10, "richardson error {e}");
    }
}
