//! Arrow diagrams: networks of phase-space functions joined by
//! Poisson-tensor contractions.
//!
//! An arrow from `X` to `Y` stands for `∂_μX J^{μν} ∂_νY`; a node carries as
//! many derivative indices as it has incident arrows. Nodes are either plain
//! fields or components of the action-angle tuple `D^μ = (φ, A)` and its
//! lowered partner `D_μ = J_{μν} D^ν = (-A, φ)`, whose index may be fixed or
//! summed over.

mod identities;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::field::{FieldError, FieldRef, Jet, PhasePoint, PoissonTensor, MAX_ORDER};

pub use identities::{
    identity_suite, resolution_of_identity_check, IdentityReport, IdentityResidual, RoiCase,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiagramError {
    #[error("node {node} needs derivative order {order}, above the limit {MAX_ORDER}")]
    OrderOverflow { node: usize, order: usize },
    #[error("diagram uses action-angle nodes but no frame was supplied")]
    MissingFrame,
    #[error("frame provides order {have} but node {node} needs {need}")]
    FrameOrder { node: usize, have: usize, need: usize },
    #[error("edge refers to node {0}, which does not exist")]
    BadEdge(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Index of an action-angle node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Index {
    Fixed(usize),
    /// Summed over `0..2N`; equal labels are the same summation index.
    Summed(u8),
}

#[derive(Clone)]
pub enum Node {
    Field(FieldRef),
    /// `D^μ`
    Upper(Index),
    /// `D_μ`
    Lower(Index),
}

impl Node {
    pub fn field(f: FieldRef) -> Self {
        Node::Field(f)
    }
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Field(x) => write!(f, "{}", x.label()),
            Node::Upper(i) => write!(f, "D^{i:?}"),
            Node::Lower(i) => write!(f, "D_{i:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub multiplicity: usize,
}

/// One diagram with a numerical coefficient.
#[derive(Debug, Clone)]
pub struct Diagram {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub coefficient: f64,
}

impl Diagram {
    pub fn new(nodes: Vec<Node>) -> Self {
        Self {
            nodes,
            edges: Vec::new(),
            coefficient: 1.0,
        }
    }

    pub fn single(f: FieldRef) -> Self {
        Self::new(vec![Node::Field(f)])
    }

    /// `A → B → C → ...`, one arrow between consecutive nodes.
    pub fn chain(nodes: Vec<Node>) -> Self {
        let k = nodes.len();
        let mut d = Self::new(nodes);
        for i in 1..k {
            d = d.arrow(i - 1, i, 1);
        }
        d
    }

    /// `A ⇉ B` with `n` parallel arrows.
    pub fn bracket(a: Node, b: Node, n: usize) -> Self {
        Self::new(vec![a, b]).arrow(0, 1, n)
    }

    pub fn arrow(mut self, tail: usize, head: usize, multiplicity: usize) -> Self {
        self.edges.push(Edge {
            tail,
            head,
            multiplicity,
        });
        self
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.coefficient *= c;
        self
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.tail] += e.multiplicity;
            deg[e.head] += e.multiplicity;
        }
        deg
    }

    pub fn arrow_count(&self) -> usize {
        self.edges.iter().map(|e| e.multiplicity).sum()
    }

    /// Reverses every arrow; the value changes by `(-1)^{#arrows}`.
    pub fn reversed(&self) -> Self {
        let mut d = self.clone();
        for e in &mut d.edges {
            std::mem::swap(&mut e.tail, &mut e.head);
        }
        d
    }

    /// Appends the nodes and edges of `other` (a product of diagrams).
    pub fn times(&self, other: &Diagram) -> Self {
        let off = self.nodes.len();
        let mut d = self.clone();
        d.nodes.extend(other.nodes.iter().cloned());
        d.edges.extend(other.edges.iter().map(|e| Edge {
            tail: e.tail + off,
            head: e.head + off,
            multiplicity: e.multiplicity,
        }));
        d.coefficient *= other.coefficient;
        d
    }

    fn validate(&self) -> Result<(), DiagramError> {
        for e in &self.edges {
            for v in [e.tail, e.head] {
                if v >= self.nodes.len() {
                    return Err(DiagramError::BadEdge(v));
                }
            }
        }
        for (node, &order) in self.degrees().iter().enumerate() {
            if order > MAX_ORDER {
                return Err(DiagramError::OrderOverflow { node, order });
            }
        }
        Ok(())
    }
}

/// A linear combination of diagrams, e.g. a Leibniz expansion.
#[derive(Debug, Clone, Default)]
pub struct DiagramSum {
    pub terms: Vec<Diagram>,
}

impl DiagramSum {
    pub fn new(terms: Vec<Diagram>) -> Self {
        Self { terms }
    }

    pub fn plus(mut self, d: Diagram) -> Self {
        self.terms.push(d);
        self
    }

    pub fn extend(mut self, other: DiagramSum) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            terms: self.terms.into_iter().map(|d| d.scaled(c)).collect(),
        }
    }
}

impl From<Diagram> for DiagramSum {
    fn from(d: Diagram) -> Self {
        Self { terms: vec![d] }
    }
}

/// An arrow from any node in `tails` into any node in `heads`, expanded by
/// the product rule: the sum of `base` plus one arrow for every pair.
/// `X → (Y → Z)` is `leibniz(base, [x], [y, z])`.
pub fn leibniz(base: &Diagram, tails: &[usize], heads: &[usize]) -> DiagramSum {
    let mut out = DiagramSum::default();
    for &t in tails {
        for &h in heads {
            out.terms.push(base.clone().arrow(t, h, 1));
        }
    }
    out
}

/// Value of a contraction together with the largest single term, which
/// serves as the scale for relative residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub magnitude: f64,
}

impl Evaluation {
    pub const ZERO: Evaluation = Evaluation {
        value: 0.0,
        magnitude: 0.0,
    };

    pub fn combine(self, other: Evaluation) -> Evaluation {
        Evaluation {
            value: self.value + other.value,
            magnitude: self.magnitude.max(other.magnitude),
        }
    }

    pub fn minus(self, other: Evaluation) -> Evaluation {
        self.combine(Evaluation {
            value: -other.value,
            magnitude: other.magnitude,
        })
    }
}

/// Jets at one phase-space point, shared by every diagram evaluated there.
pub struct EvalContext {
    z: PhasePoint,
    poisson: PoissonTensor,
    frame: Option<Vec<Jet>>,
    cache: HashMap<usize, Jet>,
}

impl EvalContext {
    pub fn new(z: PhasePoint) -> Self {
        let poisson = PoissonTensor::new(z.dim_n());
        Self {
            z,
            poisson,
            frame: None,
            cache: HashMap::new(),
        }
    }

    /// Supplies the jets of `D^μ = (φ¹..φᴺ, A¹..Aᴺ)` at the point.
    pub fn with_frame(mut self, frame: Vec<Jet>) -> Self {
        assert_eq!(frame.len(), 2 * self.z.dim_n());
        self.frame = Some(frame);
        self
    }

    pub fn point(&self) -> &PhasePoint {
        &self.z
    }

    pub fn frame(&self) -> Option<&[Jet]> {
        self.frame.as_deref()
    }

    /// Registers a precomputed jet for `f`, e.g. one obtained together with
    /// other fields.
    pub fn insert_jet(&mut self, f: &FieldRef, jet: Jet) {
        self.cache.insert(field_key(f), jet);
    }

    fn ensure_field(&mut self, f: &FieldRef, order: usize) -> Result<(), DiagramError> {
        let key = field_key(f);
        let stale = self.cache.get(&key).is_none_or(|j| j.order() < order);
        if stale {
            let jet = f.jet(&self.z, order)?;
            self.cache.insert(key, jet);
        }
        Ok(())
    }

    pub fn eval(&mut self, d: &Diagram) -> Result<Evaluation, DiagramError> {
        d.validate()?;
        let degrees = d.degrees();
        for (i, node) in d.nodes.iter().enumerate() {
            match node {
                Node::Field(f) => self.ensure_field(f, degrees[i])?,
                Node::Upper(ix) | Node::Lower(ix) => {
                    let frame = self.frame.as_ref().ok_or(DiagramError::MissingFrame)?;
                    // a fixed component only needs its own jet to be deep enough
                    let have = match (node, ix) {
                        (Node::Upper(_), Index::Fixed(mu)) => frame[*mu].order(),
                        (_, Index::Fixed(mu)) => frame[self.poisson.partner(*mu).0].order(),
                        _ => frame.iter().map(Jet::order).min().unwrap_or(0),
                    };
                    if have < degrees[i] {
                        return Err(DiagramError::FrameOrder {
                            node: i,
                            have,
                            need: degrees[i],
                        });
                    }
                }
            }
        }
        Ok(self.contract(d, &degrees))
    }

    pub fn eval_sum(&mut self, s: &DiagramSum) -> Result<Evaluation, DiagramError> {
        let mut acc = Evaluation::ZERO;
        for d in &s.terms {
            acc = acc.combine(self.eval(d)?);
        }
        Ok(acc)
    }

    fn contract(&self, d: &Diagram, degrees: &[usize]) -> Evaluation {
        let m2 = 2 * self.z.dim_n();
        // summation labels in order of first appearance
        let mut labels: Vec<u8> = Vec::new();
        for node in &d.nodes {
            if let Node::Upper(Index::Summed(l)) | Node::Lower(Index::Summed(l)) = node {
                if !labels.contains(l) {
                    labels.push(*l);
                }
            }
        }
        // single arrows: (tail, head)
        let arrows: Vec<(usize, usize)> = d
            .edges
            .iter()
            .flat_map(|e| std::iter::repeat_n((e.tail, e.head), e.multiplicity))
            .collect();
        // where each arrow end lands in its node's index list
        let mut slot_of = vec![(0usize, 0usize); arrows.len()];
        let mut fill = vec![0usize; d.nodes.len()];
        for (a, &(t, h)) in arrows.iter().enumerate() {
            let ts = fill[t];
            fill[t] += 1;
            slot_of[a] = (ts, fill[h]);
            fill[h] += 1;
        }
        let mut node_idx: Vec<Vec<usize>> = degrees.iter().map(|&k| vec![0; k]).collect();
        let mut label_val = vec![0usize; labels.len()];
        let mut acc = Evaluation::ZERO;
        loop {
            // resolve node jets for this label assignment
            let mut resolved: Vec<(&Jet, f64)> = Vec::with_capacity(d.nodes.len());
            for node in &d.nodes {
                resolved.push(self.resolve(node, &labels, &label_val));
            }
            let node_sign: f64 = resolved.iter().map(|r| r.1).product();
            if node_sign != 0.0 {
                let mut mu = vec![0usize; arrows.len()];
                'arrows: loop {
                    let mut sign = node_sign;
                    for (a, &(t, h)) in arrows.iter().enumerate() {
                        let (nu, s) = self.poisson.partner(mu[a]);
                        sign *= s;
                        node_idx[t][slot_of[a].0] = mu[a];
                        node_idx[h][slot_of[a].1] = nu;
                    }
                    let mut term = sign * d.coefficient;
                    for (k, (jet, _)) in resolved.iter().enumerate() {
                        term *= jet.get(&node_idx[k]);
                        if term == 0.0 {
                            break;
                        }
                    }
                    acc.value += term;
                    acc.magnitude = acc.magnitude.max(term.abs());
                    for slot in mu.iter_mut() {
                        *slot += 1;
                        if *slot < m2 {
                            continue 'arrows;
                        }
                        *slot = 0;
                    }
                    break;
                }
            }
            // next label assignment
            let mut advanced = false;
            for v in label_val.iter_mut() {
                *v += 1;
                if *v < m2 {
                    advanced = true;
                    break;
                }
                *v = 0;
            }
            if !advanced {
                break;
            }
        }
        acc
    }

    fn resolve<'a>(&'a self, node: &Node, labels: &[u8], vals: &[usize]) -> (&'a Jet, f64) {
        let index = |i: &Index| match i {
            Index::Fixed(k) => *k,
            Index::Summed(l) => vals[labels.iter().position(|x| x == l).unwrap()],
        };
        match node {
            Node::Field(f) => (&self.cache[&field_key(f)], 1.0),
            Node::Upper(i) => (&self.frame.as_ref().unwrap()[index(i)], 1.0),
            Node::Lower(i) => {
                let mu = index(i);
                let (nu, s) = self.poisson.partner(mu);
                // D_μ = J_{μν} D^ν and J_{μν} = -J^{μν}
                (&self.frame.as_ref().unwrap()[nu], -s)
            }
        }
    }
}

fn field_key(f: &FieldRef) -> usize {
    Arc::as_ptr(f) as *const () as usize
}

/// Evaluates one diagram at `z` (no action-angle nodes allowed).
pub fn eval_diagram(d: &Diagram, z: &PhasePoint) -> Result<Evaluation, DiagramError> {
    EvalContext::new(z.clone()).eval(d)
}

/// `{A, B}_n`: `n` parallel contractions with no prefactor; `n = 1` is the
/// Poisson bracket.
pub fn moyal_bracket(
    a: &FieldRef,
    b: &FieldRef,
    n: usize,
    z: &PhasePoint,
) -> Result<f64, DiagramError> {
    let d = Diagram::bracket(Node::Field(a.clone()), Node::Field(b.clone()), n);
    Ok(eval_diagram(&d, z)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PolynomialField, ScalarField};

    fn poly(p: PolynomialField) -> FieldRef {
        Arc::new(p)
    }

    fn x(n: usize, i: usize) -> PolynomialField {
        PolynomialField::coordinate(n, i)
    }

    #[test]
    fn canonical_bracket_and_self_loop() {
        let z = PhasePoint::new(vec![0.3, -0.2]).unwrap();
        let xf = poly(x(1, 0));
        let pf = poly(x(1, 1));
        assert_eq!(moyal_bracket(&xf, &pf, 1, &z).unwrap(), 1.0);
        assert_eq!(moyal_bracket(&pf, &xf, 1, &z).unwrap(), -1.0);
        let h = poly(x(1, 0).pow(3).add(&x(1, 1).pow(2).mul(&x(1, 0))));
        let loop_d = Diagram::single(h.clone()).arrow(0, 0, 1);
        let v = eval_diagram(&loop_d, &z).unwrap();
        assert!(v.value.abs() < 1e-15, "{v:?}");
        let loop2 = Diagram::single(h).arrow(0, 0, 2);
        assert!(eval_diagram(&loop2, &z).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn oscillator_actions_commute() {
        let z = PhasePoint::new(vec![0.3, -0.2, 0.7, 0.1]).unwrap();
        let i1 = poly(PolynomialField::harmonic_action(2, 0));
        let i2 = poly(PolynomialField::harmonic_action(2, 1));
        assert_eq!(moyal_bracket(&i1, &i2, 1, &z).unwrap(), 0.0);
        // {I, I}_2 = 2 per degree of freedom the action involves
        assert_eq!(moyal_bracket(&i1, &i1, 2, &z).unwrap(), 2.0);
    }

    // Hand expansion of {A, B}_2 for N = 1:
    // A_xx B_pp - 2 A_xp B_xp + A_pp B_xx
    #[test]
    fn second_bracket_matches_hand_expansion() {
        let a = x(1, 0).pow(3).add(&x(1, 0).mul(&x(1, 1)).scale(2.0));
        let b = x(1, 1).pow(2).mul(&x(1, 0)).add(&x(1, 0).pow(2).scale(-0.5));
        let z = PhasePoint::new(vec![0.4, 1.1]).unwrap();
        let d = |f: &PolynomialField, i: &[usize]| f.partial(&z, i).unwrap();
        let hand = d(&a, &[0, 0]) * d(&b, &[1, 1]) - 2.0 * d(&a, &[0, 1]) * d(&b, &[0, 1])
            + d(&a, &[1, 1]) * d(&b, &[0, 0]);
        let got = moyal_bracket(&poly(a), &poly(b), 2, &z).unwrap();
        assert!((got - hand).abs() < 1e-13, "{got} vs {hand}");
    }

    #[test]
    fn leibniz_matches_bracket_of_product() {
        // {C, A B} = {C, A} B + A {C, B}
        let a = x(1, 0).add(&x(1, 1).pow(2));
        let b = x(1, 0).pow(2);
        let c = x(1, 1).pow(3).add(&x(1, 0));
        let ab = poly(a.mul(&b));
        let (a, b, c) = (poly(a), poly(b), poly(c));
        let z = PhasePoint::new(vec![0.2, 0.9]).unwrap();
        let direct = moyal_bracket(&c, &ab, 1, &z).unwrap();
        let base = Diagram::new(vec![Node::Field(c), Node::Field(a), Node::Field(b)]);
        let sum = leibniz(&base, &[0], &[1, 2]);
        let v = EvalContext::new(z).eval_sum(&sum).unwrap().value;
        assert!((v - direct).abs() < 1e-13);
    }
}
