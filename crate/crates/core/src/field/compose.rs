use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{
    check_multi_index, sorted_multi_indices, FieldError, FieldRef, Jet, PhasePoint, ScalarField,
};

/// All set partitions of `0..k`, each as a list of blocks.
fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![Vec::new()];
    for item in 0..k {
        let mut next = Vec::new();
        for part in &out {
            for b in 0..part.len() {
                let mut p: Vec<Vec<usize>> = part.clone();
                p[b].push(item);
                next.push(p);
            }
            let mut p = part.clone();
            p.push(vec![item]);
            next.push(p);
        }
        out = next;
    }
    out
}

/// Jet of `F ∘ G` from the jet of `F` at `G(p)` and the jets of the
/// components of `G` at `p` (multivariate Faà di Bruno).
pub fn compose_jets(outer: &Jet, inner: &[Jet]) -> Jet {
    let m = outer.n();
    assert_eq!(m, inner.len(), "outer arity must match inner count");
    let n = inner[0].n();
    let order = inner
        .iter()
        .map(Jet::order)
        .min()
        .unwrap()
        .min(outer.order());
    let mut out = Jet::constant(n, order, outer.value());
    let partitions: Vec<Vec<Vec<Vec<usize>>>> = (0..=order).map(set_partitions).collect();
    for k in 1..=order {
        for idx in sorted_multi_indices(n, k) {
            let mut total = 0.0;
            for part in &partitions[k] {
                let r = part.len();
                let block_idx: Vec<Vec<usize>> = part
                    .iter()
                    .map(|b| b.iter().map(|&p| idx[p]).collect())
                    .collect();
                // sum over outer indices a_1..a_r
                let mut a = vec![0usize; r];
                'sum: loop {
                    let mut term = outer.get(&a);
                    if term != 0.0 {
                        for (blk, &ai) in block_idx.iter().zip(&a) {
                            term *= inner[ai].get(blk);
                            if term == 0.0 {
                                break;
                            }
                        }
                        total += term;
                    }
                    for slot in 0..r {
                        a[slot] += 1;
                        if a[slot] < m {
                            continue 'sum;
                        }
                        a[slot] = 0;
                    }
                    break;
                }
            }
            out.set_symmetric(&idx, total);
        }
    }
    out
}

/// Given the jets of an invertible map `F: R^m -> R^m` at `p`, returns the
/// jets of `F^{-1}` at `F(p)`, solved order by order.
pub fn invert_jet_map(forward: &[Jet], base: &[f64]) -> Result<Vec<Jet>, FieldError> {
    let m = forward.len();
    let order = forward.iter().map(Jet::order).min().unwrap_or(0);
    if order == 0 {
        return Ok((0..m).map(|i| Jet::constant(m, 0, base[i])).collect());
    }
    let jac = DMatrix::from_fn(m, m, |i, j| forward[i].get(&[j]));
    let inv = jac
        .clone()
        .try_inverse()
        .ok_or_else(|| FieldError::Numerical("jacobian is singular".into()))?;
    let mut g: Vec<Jet> = (0..m).map(|i| Jet::constant(m, order, base[i])).collect();
    for (i, gi) in g.iter_mut().enumerate() {
        for j in 0..m {
            gi.set_symmetric(&[j], inv[(i, j)]);
        }
    }
    for q in 2..=order {
        let comp: Vec<Jet> = forward
            .iter()
            .map(|f| compose_jets(&f.truncated(q), &g.iter().map(|x| x.truncated(q)).collect::<Vec<_>>()))
            .collect();
        for idx in sorted_multi_indices(m, q) {
            let c = DVector::from_fn(m, |i, _| comp[i].get(&idx));
            let sol = -(&inv * c);
            for (i, gi) in g.iter_mut().enumerate() {
                gi.set_symmetric(&idx, sol[i]);
            }
        }
    }
    Ok(g)
}

/// A smooth function of a few scalar arguments, known with its derivatives.
pub trait OuterFunction: Send + Sync {
    fn arity(&self) -> usize;

    fn jet(&self, args: &[f64], order: usize) -> Result<Jet, FieldError>;

    fn label(&self) -> String {
        "outer".into()
    }
}

/// `outer(inner_1(z), ..., inner_m(z))` with derivatives through the chain rule.
#[derive(Clone)]
pub struct CompositeField {
    outer: Arc<dyn OuterFunction>,
    inner: Vec<FieldRef>,
    max_order: usize,
}

impl CompositeField {
    pub fn new(outer: Arc<dyn OuterFunction>, inner: Vec<FieldRef>) -> Result<Self, FieldError> {
        if inner.len() != outer.arity() {
            return Err(FieldError::DimensionMismatch {
                expected: outer.arity(),
                found: inner.len(),
            });
        }
        let dim_n = inner[0].dim_n();
        if let Some(bad) = inner.iter().find(|f| f.dim_n() != dim_n) {
            return Err(FieldError::DimensionMismatch {
                expected: dim_n,
                found: bad.dim_n(),
            });
        }
        let max_order = inner.iter().map(|f| f.max_order()).min().unwrap_or(0);
        Ok(Self {
            outer,
            inner,
            max_order,
        })
    }
}

impl ScalarField for CompositeField {
    fn dim_n(&self) -> usize {
        self.inner[0].dim_n()
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn evaluate(&self, z: &PhasePoint) -> Result<f64, FieldError> {
        Ok(self.jet(z, 0)?.value())
    }

    fn partial(&self, z: &PhasePoint, multi_index: &[usize]) -> Result<f64, FieldError> {
        check_multi_index(self, z, multi_index)?;
        Ok(self.jet(z, multi_index.len())?.get(multi_index))
    }

    fn jet(&self, z: &PhasePoint, order: usize) -> Result<Jet, FieldError> {
        self.check(z, order)?;
        let inner: Vec<Jet> = self
            .inner
            .iter()
            .map(|f| f.jet(z, order))
            .collect::<Result<_, _>>()?;
        let args: Vec<f64> = inner.iter().map(Jet::value).collect();
        let outer = self.outer.jet(&args, order)?;
        Ok(compose_jets(&outer, &inner))
    }

    fn label(&self) -> String {
        format!(
            "{}({})",
            self.outer.label(),
            self.inner
                .iter()
                .map(|f| f.label())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}
