//! Numerical checks of the algebraic identities satisfied by diagrams built
//! on action-angle variables. Each identity is evaluated at sample points as
//! `lhs - rhs` and judged relative to the largest single term that entered
//! either side, since the identities work by cancellation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::{leibniz, Diagram, DiagramError, DiagramSum, EvalContext, Evaluation, Index, Node};
use crate::chart::ActionAngleChart;
use crate::field::{fd_jets, FieldError, FieldRef, PhasePoint, PoissonTensor, PolynomialField, Richardson};

/// Below this, differences count as exact zeros.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// One identity evaluated at one point.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Largest single contraction term on either side.
    pub scale: f64,
}

impl IdentityResidual {
    pub fn new(name: impl Into<String>, lhs: Evaluation, rhs: Evaluation) -> Self {
        Self {
            name: name.into(),
            lhs: lhs.value,
            rhs: rhs.value,
            scale: lhs.magnitude.max(rhs.magnitude),
        }
    }

    pub fn difference(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn residual(&self) -> f64 {
        let d = self.difference();
        if d <= ABSOLUTE_FLOOR {
            0.0
        } else if self.scale > ABSOLUTE_FLOOR {
            d / self.scale
        } else {
            d
        }
    }
}

/// Worst case of one identity over all sample points.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityStats {
    pub name: String,
    pub max_residual: f64,
    pub max_difference: f64,
    pub evaluations: usize,
    pub worst_point: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub tol: f64,
    pub points: usize,
    pub identities: Vec<IdentityStats>,
}

impl IdentityReport {
    fn from_residuals(tol: f64, points: usize, all: &[(usize, IdentityResidual)]) -> Self {
        let mut map: BTreeMap<&str, IdentityStats> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for (p, r) in all {
            let e = map.entry(&r.name).or_insert_with(|| {
                order.push(&r.name);
                IdentityStats {
                    name: r.name.clone(),
                    max_residual: 0.0,
                    max_difference: 0.0,
                    evaluations: 0,
                    worst_point: *p,
                }
            });
            e.evaluations += 1;
            e.max_difference = e.max_difference.max(r.difference());
            if r.residual() > e.max_residual {
                e.max_residual = r.residual();
                e.worst_point = *p;
            }
        }
        Self {
            tol,
            points,
            identities: order.iter().map(|n| map.remove(n).unwrap()).collect(),
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.identities
            .iter()
            .map(|s| s.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&IdentityStats> {
        self.identities
            .iter()
            .filter(|s| !(s.max_residual < self.tol))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

fn up(mu: usize) -> Node {
    Node::Upper(Index::Fixed(mu))
}

const S: Index = Index::Summed(0);

/// Adds `m` arrows from `tail` into the group `heads`, expanded by the
/// product rule.
fn into(sum: DiagramSum, tail: usize, heads: &[usize], m: usize) -> DiagramSum {
    let mut cur = sum;
    for _ in 0..m {
        let mut next = DiagramSum::default();
        for d in &cur.terms {
            next = next.extend(leibniz(d, &[tail], heads));
        }
        cur = next;
    }
    cur
}

fn permutations3() -> [([usize; 3], f64); 6] {
    [
        ([0, 1, 2], 1.0),
        ([1, 2, 0], 1.0),
        ([2, 0, 1], 1.0),
        ([1, 0, 2], -1.0),
        ([0, 2, 1], -1.0),
        ([2, 1, 0], -1.0),
    ]
}

fn triangle(a: Node, b: Node, c: Node) -> Diagram {
    // c -> a, a -> b, b -> c
    Diagram::new(vec![a, b, c])
        .arrow(2, 0, 1)
        .arrow(0, 1, 1)
        .arrow(1, 2, 1)
}

fn zero() -> Evaluation {
    Evaluation::ZERO
}

/// Polynomial test functions with nonvanishing derivatives through order 3.
pub fn sample_fields(dim_n: usize) -> [FieldRef; 3] {
    let m = 2 * dim_n;
    let c = |mu: usize| PolynomialField::coordinate(dim_n, mu % m);
    let a = c(0)
        .mul(&c(m - 1))
        .add(&c(0).pow(3).scale(0.2))
        .add(&c(1).pow(2).scale(0.5))
        .with_label("A");
    let b = c(1)
        .add(&c(0).pow(2).mul(&c(m - 1)).scale(0.3))
        .add(&c(2).pow(2).scale(-0.4))
        .with_label("B");
    let cc = c(m - 1)
        .pow(2)
        .add(&c(0).mul(&c(1)).scale(0.7))
        .add(&c(3).pow(3).scale(0.1))
        .with_label("C");
    [Arc::new(a), Arc::new(b), Arc::new(cc)]
}

/// Which form of the resolution of the identity to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiCase {
    /// `D_μ → A → D^μ` is the closed loop on `A`, which vanishes.
    SingleField,
    /// `D_μ → A → B → D^μ = -(A ⇉ B)`.
    Chain,
    /// `(D_μ → A)(B ⇉ C → D^μ) = B ⇉ C → A`.
    SplitProduct,
}

/// Checks one resolution-of-identity form with the given test functions
/// (`fields[0..]` play `A`, `B`, `C`). The context must carry a frame.
pub fn resolution_of_identity_check(
    case: RoiCase,
    fields: &[FieldRef],
    ctx: &mut EvalContext,
) -> Result<IdentityResidual, DiagramError> {
    let f = |i: usize| Node::Field(fields[i].clone());
    let (name, lhs, rhs) = match case {
        RoiCase::SingleField => {
            let lhs = Diagram::chain(vec![Node::Lower(S), f(0), Node::Upper(S)]);
            let loop_ = Diagram::new(vec![f(0)]).arrow(0, 0, 1);
            ("identity loop on one function", lhs, loop_)
        }
        RoiCase::Chain => {
            let lhs = Diagram::chain(vec![Node::Lower(S), f(0), f(1), Node::Upper(S)]);
            let rhs = Diagram::bracket(f(0), f(1), 2).scaled(-1.0);
            ("identity loop on a chain", lhs, rhs)
        }
        RoiCase::SplitProduct => {
            let lhs = Diagram::new(vec![Node::Lower(S), f(0), f(1), f(2), Node::Upper(S)])
                .arrow(0, 1, 1)
                .arrow(2, 3, 2)
                .arrow(3, 4, 1);
            let rhs = Diagram::new(vec![f(1), f(2), f(0)])
                .arrow(0, 1, 2)
                .arrow(1, 2, 1);
            ("identity loop on a split product", lhs, rhs)
        }
    };
    Ok(IdentityResidual::new(name, ctx.eval(&lhs)?, ctx.eval(&rhs)?))
}

/// `∂D^μ/∂z^α J_{μν} ∂D^ν/∂z^β = J_{αβ}` from the frame gradients.
pub fn lagrange_bracket_residual(ctx: &EvalContext) -> Result<IdentityResidual, DiagramError> {
    let frame = ctx.frame().ok_or(DiagramError::MissingFrame)?;
    let m = frame.len();
    let j = PoissonTensor::new(m / 2);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            let mut acc = 0.0;
            for mu in 0..m {
                for nu in 0..m {
                    let t = frame[mu].get(&[a]) * j.lower(mu, nu) * frame[nu].get(&[b]);
                    scale = scale.max(t.abs());
                    acc += t;
                }
            }
            worst = worst.max((acc - j.lower(a, b)).abs());
        }
    }
    Ok(IdentityResidual {
        name: "symplectic form preserved".into(),
        lhs: worst,
        rhs: 0.0,
        scale: scale.max(1.0),
    })
}

/// Every identity at one point; `chart` is used only for the
/// angle-derivative check, which needs the inverse map.
pub fn identities_at(
    chart: &dyn ActionAngleChart,
    z: &PhasePoint,
) -> Result<Vec<IdentityResidual>, DiagramError> {
    let n = chart.dim_n();
    let m = 2 * n;
    let frame = chart.frame_jets(z, 3)?;
    let mut ctx = EvalContext::new(z.clone()).with_frame(frame);
    let mut out = Vec::new();
    let act = |j: usize| up(n + j);
    let ang = |j: usize| up(j);

    // chain of three frame components: symmetric
    let mut chain3 = vec![0.0; m * m * m];
    let mut chain3_mag = vec![0.0; m * m * m];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let e = ctx.eval(&Diagram::chain(vec![up(a), up(b), up(c)]))?;
                chain3[(a * m + b) * m + c] = e.value;
                chain3_mag[(a * m + b) * m + c] = e.magnitude;
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let base = (a * m + b) * m + c;
                for (p, _) in permutations3() {
                    let idx = [a, b, c];
                    let q = (idx[p[0]] * m + idx[p[1]]) * m + idx[p[2]];
                    let e = |k: usize| Evaluation {
                        value: chain3[k],
                        magnitude: chain3_mag[k],
                    };
                    out.push(IdentityResidual::new("three-chain symmetry", e(base), e(q)));
                }
            }
        }
    }

    // triangle: sign of the permutation
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let t = ctx.eval(&triangle(up(a), up(b), up(c)))?;
                for (p, sign) in permutations3() {
                    let idx = [a, b, c];
                    let tp = ctx.eval(&triangle(up(idx[p[0]]), up(idx[p[1]]), up(idx[p[2]])))?;
                    out.push(IdentityResidual::new(
                        "triangle permutation sign",
                        tp,
                        Evaluation {
                            value: sign * t.value,
                            magnitude: t.magnitude,
                        },
                    ));
                }
                if a == b {
                    out.push(IdentityResidual::new("triangle with repeated node", t, zero()));
                }
            }
        }
    }

    // four-chain symmetries and the wheel
    let chain4 = |ctx: &mut EvalContext, a, b, c, d| {
        ctx.eval(&Diagram::chain(vec![up(a), up(b), up(c), up(d)]))
    };
    for mu in 0..m {
        for nu in 0..m {
            for a in 0..m {
                for b in 0..m {
                    let base = chain4(&mut ctx, mu, nu, a, b)?;
                    let s1 = chain4(&mut ctx, nu, mu, a, b)?;
                    let s2 = chain4(&mut ctx, mu, nu, b, a)?;
                    let s3 = chain4(&mut ctx, a, b, mu, nu)?;
                    out.push(IdentityResidual::new("four-chain swap of first pair", base, s1));
                    out.push(IdentityResidual::new("four-chain swap of last pair", base, s2));
                    out.push(IdentityResidual::new(
                        "four-chain exchange of pairs",
                        base,
                        Evaluation {
                            value: -s3.value,
                            magnitude: s3.magnitude,
                        },
                    ));
                    // wheel: D^μ → (D^ν → D^α → D^β) equals the star
                    let lhs = into(
                        Diagram::new(vec![up(nu), up(a), up(b), up(mu)])
                            .arrow(0, 1, 1)
                            .arrow(1, 2, 1)
                            .into(),
                        3,
                        &[0, 1, 2],
                        1,
                    );
                    let star = Diagram::new(vec![up(mu), up(nu), up(a), up(b)])
                        .arrow(0, 1, 1)
                        .arrow(0, 2, 1)
                        .arrow(0, 3, 1);
                    out.push(IdentityResidual::new(
                        "wheel",
                        ctx.eval_sum(&lhs)?,
                        ctx.eval(&star)?,
                    ));
                }
            }
        }
    }

    let [fa, fb, fc] = sample_fields(n);
    let field = |f: &FieldRef| Node::Field(f.clone());

    for j in 0..n {
        let t1 = Diagram::new(vec![Node::Upper(S), act(j), Node::Lower(S)])
            .arrow(0, 1, 1)
            .arrow(1, 2, 2);
        let t2 = Diagram::new(vec![act(j), Node::Upper(S), Node::Lower(S)])
            .arrow(0, 1, 1)
            .arrow(1, 2, 2);
        let t3 = Diagram::new(vec![act(j), Node::Upper(S), Node::Lower(S)])
            .arrow(0, 1, 2)
            .arrow(1, 2, 1);
        let t4 = Diagram::new(vec![Node::Upper(S), act(j), Node::Lower(S)])
            .arrow(0, 1, 1)
            .arrow(0, 2, 1)
            .arrow(2, 1, 1);
        let (t1v, t2v, t3v, t4v) = (ctx.eval(&t1)?, ctx.eval(&t2)?, ctx.eval(&t3)?, ctx.eval(&t4)?);

        // A ⇉ (D^μ → D_μ) vanishes because {D^μ, D_μ} is constant
        let expand_a = into(
            Diagram::new(vec![act(j), Node::Upper(S), Node::Lower(S)])
                .arrow(1, 2, 1)
                .into(),
            0,
            &[1, 2],
            2,
        );
        out.push(IdentityResidual::new(
            "constant bracket expansion (action into pair)",
            ctx.eval_sum(&expand_a)?,
            zero(),
        ));
        out.push(IdentityResidual::new(
            "candidate relation T3 + T4 = 0",
            t3v.combine(t4v).scale(2.0),
            zero(),
        ));
        let expand_b = into(
            Diagram::new(vec![Node::Lower(S), act(j), Node::Upper(S)])
                .arrow(1, 2, 1)
                .into(),
            0,
            &[1, 2],
            2,
        );
        out.push(IdentityResidual::new(
            "constant bracket expansion (lowered pair into chain)",
            ctx.eval_sum(&expand_b)?,
            zero(),
        ));
        out.push(IdentityResidual::new(
            "candidate relation -T1 + 2T4 + T2 = 0",
            t1v.scale(-1.0).combine(t4v.scale(2.0)).combine(t2v),
            zero(),
        ));

        // hard diagram: split off the product-rule term
        let split = into(
            Diagram::new(vec![Node::Upper(S), act(j), Node::Lower(S)])
                .arrow(1, 2, 2)
                .into(),
            0,
            &[1, 2],
            1,
        )
        .plus(
            Diagram::new(vec![act(j), Node::Upper(S), Node::Lower(S)])
                .arrow(0, 1, 1)
                .arrow(0, 2, 1)
                .arrow(1, 2, 1),
        );
        out.push(IdentityResidual::new(
            "hard diagram product-rule split",
            t1v,
            ctx.eval_sum(&split)?,
        ));
        // ... and rewritten through action and angle derivatives
        let mut rhs = DiagramSum::default();
        for l in 0..n {
            // -∂/∂A^l (A^j ⇉ A^l) = -(φ^l → (A^j ⇉ A^l))
            rhs = rhs.extend(
                into(
                    Diagram::new(vec![act(j), act(l), ang(l)]).arrow(0, 1, 2).into(),
                    2,
                    &[0, 1],
                    1,
                )
                .scaled(-1.0),
            );
            // -∂/∂φ^l (A^j ⇉ φ^l) = A^l → (A^j ⇉ φ^l)
            rhs = rhs.extend(into(
                Diagram::new(vec![act(j), ang(l), act(l)]).arrow(0, 1, 2).into(),
                2,
                &[0, 1],
                1,
            ));
            rhs = rhs.plus(
                Diagram::new(vec![act(j), ang(l), act(l)])
                    .arrow(0, 1, 1)
                    .arrow(0, 2, 1)
                    .arrow(1, 2, 1)
                    .scaled(-2.0),
            );
        }
        out.push(IdentityResidual::new(
            "hard diagram in action-angle derivatives",
            t1v,
            ctx.eval_sum(&rhs)?,
        ));

        // an action arrow is minus an angle derivative
        let aa = chart.forward(z)?;
        let probes: [(&str, DiagramSum, Diagram); 2] = [
            (
                "action arrow on a function",
                Diagram::new(vec![act(j), field(&fb)]).arrow(0, 1, 1).into(),
                Diagram::new(vec![field(&fb)]),
            ),
            (
                "action arrow on a bracket",
                into(
                    Diagram::new(vec![field(&fb), field(&fc), act(j)])
                        .arrow(0, 1, 2)
                        .into(),
                    2,
                    &[0, 1],
                    1,
                ),
                Diagram::bracket(field(&fb), field(&fc), 2),
            ),
        ];
        for (name, lhs, x) in probes {
            let f = |t: &[f64]| -> Result<Vec<f64>, FieldError> {
                let mut phi = aa.angles.clone();
                phi[j] += t[0];
                let p = chart.inverse(&phi, &aa.actions)?;
                super::eval_diagram(&x, &p)
                    .map(|e| vec![e.value])
                    .map_err(|e| match e {
                        DiagramError::Field(f) => f,
                        other => FieldError::Numerical(other.to_string()),
                    })
            };
            let d = fd_jets(&f, &[0.0], 1, &Richardson::default(), 10.0)?;
            let lhs = ctx.eval_sum(&lhs)?;
            let oracle = -d[0].get(&[0]);
            out.push(IdentityResidual::new(
                name,
                lhs,
                Evaluation {
                    value: oracle,
                    magnitude: oracle.abs(),
                },
            ));
        }

        // ∂/∂A^l (A^j → A^k → A^l) = -(A^j ⇉ A^k) - ∂/∂φ^l (A^j → A^k → φ^l)
        for k in 0..n {
            let mut lhs = DiagramSum::default();
            let mut rhs: DiagramSum = Diagram::bracket(act(j), act(k), 2).scaled(-1.0).into();
            for l in 0..n {
                lhs = lhs.extend(into(
                    Diagram::chain(vec![act(j), act(k), act(l), ang(l)])
                        .edges_only(2),
                    3,
                    &[0, 1, 2],
                    1,
                ));
                rhs = rhs.extend(into(
                    Diagram::chain(vec![act(j), act(k), ang(l), act(l)])
                        .edges_only(2),
                    3,
                    &[0, 1, 2],
                    1,
                ));
            }
            out.push(IdentityResidual::new(
                "action derivative of an action chain",
                ctx.eval_sum(&lhs)?,
                ctx.eval_sum(&rhs)?,
            ));
        }
    }

    let fields = [fa, fb, fc];
    for case in [RoiCase::SingleField, RoiCase::Chain, RoiCase::SplitProduct] {
        out.push(resolution_of_identity_check(case, &fields, &mut ctx)?);
    }
    out.push(lagrange_bracket_residual(&ctx)?);
    Ok(out)
}

/// Runs every identity at every point. Points are processed in parallel.
pub fn identity_suite(
    chart: &dyn ActionAngleChart,
    points: &[PhasePoint],
    tol: f64,
) -> Result<IdentityReport, DiagramError> {
    use rayon::prelude::*;
    let per_point: Vec<Vec<IdentityResidual>> = points
        .par_iter()
        .map(|z| identities_at(chart, z))
        .collect::<Result<_, _>>()?;
    let all: Vec<(usize, IdentityResidual)> = per_point
        .into_iter()
        .enumerate()
        .flat_map(|(p, rs)| rs.into_iter().map(move |r| (p, r)))
        .collect();
    Ok(IdentityReport::from_residuals(tol, points.len(), &all))
}

impl Evaluation {
    pub fn scale(self, c: f64) -> Evaluation {
        Evaluation {
            value: c * self.value,
            magnitude: c.abs() * self.magnitude,
        }
    }
}

impl Diagram {
    /// Keeps only the first `k` edges (used to drop the trailing link of a
    /// chain whose last node receives a product-rule arrow instead).
    fn edges_only(mut self, k: usize) -> DiagramSum {
        self.edges.truncate(k);
        self.into()
    }
}
