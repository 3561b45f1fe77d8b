use std::sync::Arc;

use serde::Serialize;

use super::average::{torus_average_vec, AveragingGrid};
use super::gamma::hard_diagram_via_gamma;
use super::QuantizerError;
use crate::chart::{ActionAngleChart, FrequencyData};
use crate::diagram::{Diagram, DiagramError, EvalContext, Index, Node};
use crate::field::{FieldError, FieldRef, Jet, PhasePoint};
use crate::registry::Registry;

const S: Index = Index::Summed(0);

fn action(n: usize, k: usize) -> Node {
    Node::Upper(Index::Fixed(n + k))
}

/// `D^μ → A^k ⇉ D_μ`, the angle-dependent diagram.
pub fn hard_diagram(n: usize, k: usize) -> Diagram {
    Diagram::new(vec![Node::Upper(S), action(n, k), Node::Lower(S)])
        .arrow(0, 1, 1)
        .arrow(1, 2, 2)
}

/// Frame jets deep enough for every diagram of the correction: angles
/// enter with at most two derivatives, actions with three.
pub fn correction_frame(chart: &dyn ActionAngleChart, z: &PhasePoint) -> Result<Vec<Jet>, FieldError> {
    let mut frame = chart.angle_jets(z, 2)?;
    frame.extend(chart.action_jets(z, 3)?);
    Ok(frame)
}

/// A way of evaluating the hard diagram for every action index at a point.
pub trait HardTermRoute: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(
        &self,
        chart: &dyn ActionAngleChart,
        ctx: &mut EvalContext,
    ) -> Result<Vec<f64>, QuantizerError>;
}

/// Direct contraction with the chart's frame jets.
pub struct DirectRoute;

impl HardTermRoute for DirectRoute {
    fn name(&self) -> &str {
        "direct"
    }

    fn evaluate(
        &self,
        chart: &dyn ActionAngleChart,
        ctx: &mut EvalContext,
    ) -> Result<Vec<f64>, QuantizerError> {
        let n = chart.dim_n();
        (0..n)
            .map(|k| Ok(ctx.eval(&hard_diagram(n, k))?.value))
            .collect()
    }
}

/// Through the connection coefficients of the action-angle frame.
pub struct ConnectionRoute;

impl HardTermRoute for ConnectionRoute {
    fn name(&self) -> &str {
        "connection"
    }

    fn evaluate(
        &self,
        chart: &dyn ActionAngleChart,
        ctx: &mut EvalContext,
    ) -> Result<Vec<f64>, QuantizerError> {
        (0..chart.dim_n())
            .map(|k| hard_diagram_via_gamma(chart, ctx.point(), k))
            .collect()
    }
}

pub type HardTermRegistry = Registry<dyn HardTermRoute>;

impl HardTermRegistry {
    pub fn with_defaults() -> Self {
        let mut r: HardTermRegistry = Registry::new();
        r.register("direct", Arc::new(DirectRoute));
        r.register("connection", Arc::new(ConnectionRoute));
        r
    }
}

#[derive(Clone)]
pub struct CorrectionOptions {
    pub grid: AveragingGrid,
    pub route: Arc<dyn HardTermRoute>,
    /// `H^j₂`, the ħ² parts of the symbols; absent means zero.
    pub h2: Option<Vec<FieldRef>>,
}

impl CorrectionOptions {
    pub fn new(dim_n: usize) -> Self {
        Self {
            grid: AveragingGrid::default_for(dim_n),
            route: Arc::new(DirectRoute),
            h2: None,
        }
    }
}

/// Torus averages of the diagrams that enter the ħ² term.
#[derive(Debug, Clone, Serialize)]
pub struct DiagramAverages {
    pub n: usize,
    /// `⟨D^μ → A^k ⇉ D_μ⟩`
    pub hard: Vec<f64>,
    /// `⟨A^k ⇉ A^l⟩`, row-major
    pub bracket: Vec<f64>,
    /// `⟨A^k → A^l → A^m⟩`, row-major
    pub chain: Vec<f64>,
    /// `⟨H^j₂⟩`
    pub h2: Vec<f64>,
    pub counts: Vec<usize>,
}

/// The ħ² coefficient for one observable, split by term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionBreakdown {
    pub h2: f64,
    pub hard: f64,
    pub bracket: f64,
    pub chain: f64,
    pub total: f64,
}

impl DiagramAverages {
    fn layout(n: usize, n_obs: usize) -> [std::ops::Range<usize>; 4] {
        let a = n;
        let b = a + n * n;
        let c = b + n * n * n;
        [0..a, a..b, b..c, c..c + n_obs]
    }

    pub(crate) fn from_flat(n: usize, n_obs: usize, v: &[f64], counts: Vec<usize>) -> Self {
        let [a, b, c, d] = Self::layout(n, n_obs);
        Self {
            n,
            hard: v[a].to_vec(),
            bracket: v[b].to_vec(),
            chain: v[c].to_vec(),
            h2: v[d].to_vec(),
            counts,
        }
    }

    /// `⟨H₂⟩ − (1/48)ω_jk⟨T^k⟩ + (1/16)ω_jkl⟨A^k⇉A^l⟩ − (1/24)ω_jklm⟨A^k→A^l→A^m⟩`
    pub fn combine(&self, freq: &FrequencyData, j: usize) -> CorrectionBreakdown {
        let n = self.n;
        let mut hard = 0.0;
        let mut bracket = 0.0;
        let mut chain = 0.0;
        for k in 0..n {
            hard -= freq.omega(j, k) * self.hard[k] / 48.0;
            for l in 0..n {
                bracket += freq.omega2(j, k, l) * self.bracket[k * n + l] / 16.0;
                for m in 0..n {
                    chain -= freq.omega3(j, k, l, m) * self.chain[(k * n + l) * n + m] / 24.0;
                }
            }
        }
        let h2 = self.h2.get(j).copied().unwrap_or(0.0);
        CorrectionBreakdown {
            h2,
            hard,
            bracket,
            chain,
            total: h2 + hard + bracket + chain,
        }
    }
}

/// Every diagram of the correction at one point, flattened as in
/// [`DiagramAverages`].
pub fn correction_integrand(
    chart: &dyn ActionAngleChart,
    z: &PhasePoint,
    route: &dyn HardTermRoute,
    h2: Option<&[FieldRef]>,
) -> Result<Vec<f64>, QuantizerError> {
    let n = chart.dim_n();
    let mut ctx = EvalContext::new(z.clone()).with_frame(correction_frame(chart, z)?);
    let mut out = route.evaluate(chart, &mut ctx)?;
    for k in 0..n {
        for l in 0..n {
            out.push(ctx.eval(&Diagram::bracket(action(n, k), action(n, l), 2))?.value);
        }
    }
    for k in 0..n {
        for l in 0..n {
            for m in 0..n {
                let d = Diagram::chain(vec![action(n, k), action(n, l), action(n, m)]);
                out.push(ctx.eval(&d)?.value);
            }
        }
    }
    if let Some(fields) = h2 {
        for f in fields {
            out.push(f.evaluate(z)?);
        }
    }
    Ok(out)
}

fn to_field_error(e: QuantizerError) -> FieldError {
    match e {
        QuantizerError::Field(f) => f,
        QuantizerError::Diagram(DiagramError::Field(f)) => f,
        other => FieldError::Numerical(other.to_string()),
    }
}

/// Averages of all correction diagrams on the torus `actions`. The grid is
/// refined until every observable's total correction has converged.
pub fn diagram_averages(
    chart: &dyn ActionAngleChart,
    actions: &[f64],
    options: &CorrectionOptions,
) -> Result<(DiagramAverages, FrequencyData), QuantizerError> {
    let n = chart.dim_n();
    let freq = chart.frequency_data(actions)?;
    let n_obs = freq.n();
    let h2 = options.h2.as_deref();
    let f = |z: &PhasePoint| {
        correction_integrand(chart, z, options.route.as_ref(), h2).map_err(to_field_error)
    };
    let monitor = |v: &[f64]| -> Vec<f64> {
        let counts = Vec::new();
        let avg = DiagramAverages::from_flat(n, h2.map_or(0, <[_]>::len), v, counts);
        (0..n_obs).map(|j| avg.combine(&freq, j).total).collect()
    };
    let res = torus_average_vec(chart, actions, &options.grid, &f, Some(&monitor))?;
    let avg = DiagramAverages::from_flat(n, h2.map_or(0, <[_]>::len), &res.values, res.counts);
    Ok((avg, freq))
}

/// The ħ² coefficient of every observable at the torus `actions`.
pub fn second_order_corrections(
    chart: &dyn ActionAngleChart,
    actions: &[f64],
    options: &CorrectionOptions,
) -> Result<Vec<CorrectionBreakdown>, QuantizerError> {
    let (avg, freq) = diagram_averages(chart, actions, options)?;
    Ok((0..freq.n()).map(|j| avg.combine(&freq, j)).collect())
}

/// The ħ² coefficient of observable `j`.
pub fn second_order_correction(
    chart: &dyn ActionAngleChart,
    actions: &[f64],
    j: usize,
    options: &CorrectionOptions,
) -> Result<f64, QuantizerError> {
    let all = second_order_corrections(chart, actions, options)?;
    all.get(j)
        .map(|c| c.total)
        .ok_or_else(|| QuantizerError::Grid(format!("no observable {j}")))
}
