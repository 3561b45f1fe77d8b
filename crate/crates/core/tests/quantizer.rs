use std::sync::Arc;

use ebk_core::chart::*;
use ebk_core::diagram::{Diagram, EvalContext, Index, Node};
use ebk_core::field::{fd_jets, FieldError, PhasePoint, PolynomialField, Richardson};
use ebk_core::oracle::{exact_spectrum, OscillatorBasis, RadialGrid};
use ebk_core::quantizer::*;

fn quartic_charts(lambda: f64) -> Vec<ChartRef> {
    let pot = CentralForcePotential::quartic(lambda);
    vec![
        Arc::new(CentralForceChart::new(pot.clone(), Sector::Positive)),
        Arc::new(CentralForceChart::new(pot, Sector::Negative)),
    ]
}

fn chart(lambda: f64) -> CentralForceChart {
    CentralForceChart::new(CentralForcePotential::quartic(lambda), Sector::Positive)
}

#[test]
fn average_of_one_is_one() {
    let c = chart(0.01);
    let grid = AveragingGrid::default_for(2);
    let v = torus_average(&c, &[0.3, 0.4], &grid, &|_| Ok(1.0)).unwrap();
    assert!((v - 1.0).abs() < 1e-15);
}

#[test]
fn average_of_an_angle_derivative_vanishes() {
    // differentiate through the inverse chart rather than with a diagram
    let c = chart(0.01);
    let actions = [0.3, 0.4];
    let g = |z: &PhasePoint| {
        let x = z.x();
        let p = z.p();
        x[0] * x[0] * p[1] + x[1] * p[0] * p[0] * p[0]
    };
    let dg = |z: &PhasePoint| -> Result<f64, FieldError> {
        let aa = c.forward(z)?;
        let f = |t: &[f64]| {
            let mut phi = aa.angles.clone();
            phi[0] += t[0];
            Ok(vec![g(&c.inverse(&phi, &aa.actions)?)])
        };
        Ok(fd_jets(&f, &[0.0], 1, &Richardson::default(), 1.0)?[0].get(&[0]))
    };
    let grid = AveragingGrid::default_for(2);
    let scale = torus_average(&c, &actions, &grid, &|z| Ok(g(z) * g(z))).unwrap().sqrt();
    let v = torus_average(&c, &actions, &grid, &dg).unwrap();
    assert!(v.abs() < 1e-9 * scale.max(1.0), "{v}");
}

#[test]
fn angle_arrow_commutes_with_the_average() {
    // ⟨φ^k → X⟩ = ∂⟨X⟩/∂A^k
    let c = chart(0.01);
    let actions = [0.3, 0.4];
    let mut x = PolynomialField::zero(2);
    x.add_term(1.0, vec![2, 0, 0, 1]);
    x.add_term(0.5, vec![0, 1, 2, 0]);
    x.add_term(-0.3, vec![1, 1, 1, 1]);
    let x: ebk_core::field::FieldRef = Arc::new(x);
    let grid = AveragingGrid::default_for(2);
    for k in 0..2 {
        let d = Diagram::new(vec![Node::Upper(Index::Fixed(k)), Node::field(x.clone())]).arrow(0, 1, 1);
        let lhs = torus_average(&c, &actions, &grid, &|z| {
            let mut ctx = EvalContext::new(z.clone()).with_frame(c.frame_jets(z, 1)?);
            ctx.eval(&d).map(|e| e.value).map_err(|e| FieldError::Numerical(e.to_string()))
        })
        .unwrap();
        let avg = |a: &[f64]| -> Result<Vec<f64>, FieldError> {
            torus_average(&c, a, &grid, &|z| x.evaluate(z))
                .map(|v| vec![v])
                .map_err(|e| FieldError::Numerical(e.to_string()))
        };
        let rhs = fd_jets(&avg, &actions, 1, &Richardson::default(), 0.5).unwrap()[0].get(&[k]);
        assert!((lhs - rhs).abs() < 1e-6 * rhs.abs().max(1e-3), "k={k}: {lhs} vs {rhs}");
    }
}

#[test]
fn isotropic_correction_vanishes() {
    let c = CentralForceChart::new(CentralForcePotential::isotropic(), Sector::Positive);
    let b = second_order_corrections(&c, &[0.25, 0.2], &CorrectionOptions::new(2)).unwrap();
    for term in &b {
        assert!(term.total.abs() < 1e-6, "{term:?}");
        assert!(term.hard.abs() < 1e-6 && term.bracket.abs() < 1e-6 && term.chain.abs() < 1e-6);
    }
}

#[test]
fn angular_momentum_correction_vanishes() {
    let c = chart(0.01);
    let b = second_order_corrections(&c, &[0.15, 0.1], &CorrectionOptions::new(2)).unwrap();
    assert!(b[1].total.abs() < 1e-8, "{:?}", b[1]);
    assert!(b[0].total.abs() > 1e-4);
}

#[test]
fn quartic_state_improves_on_leading_order() {
    let req = QuantizationRequest {
        charts: quartic_charts(0.01),
        hbar: 0.1,
        quantum_numbers: vec![vec![1, 2], vec![0, -1]],
        include_h2: true,
        options: CorrectionOptions::new(2),
    };
    let mut t = ebk_eigenvalues(&req).unwrap();
    let oracle = exact_spectrum(
        &CentralForcePotential::quartic(0.01),
        0.1,
        &[2, -1],
        1,
        &RadialGrid::default(),
        &OscillatorBasis::default(),
    )
    .unwrap();
    t.attach_oracle(&oracle);
    for row in &t.rows {
        assert!(row.flag.is_none());
        let (e0, e2) = (row.error0().unwrap().abs(), row.error2().unwrap().abs());
        assert!(e2 < 0.01 * e0, "{row:?}");
        assert_eq!(row.e0[1], row.actions[1]);
    }
}

#[test]
fn mirrored_states_agree() {
    let req = QuantizationRequest {
        charts: quartic_charts(0.01),
        hbar: 0.1,
        quantum_numbers: vec![vec![1, 2], vec![1, -2]],
        include_h2: true,
        options: CorrectionOptions::new(2),
    };
    let t = ebk_eigenvalues(&req).unwrap();
    let (a, b) = (&t.rows[0], &t.rows[1]);
    assert!((a.e0[0] - b.e0[0]).abs() < 1e-12);
    assert!((a.correction[0] - b.correction[0]).abs() < 1e-10);
    assert!((a.e0[1] + b.e0[1]).abs() < 1e-15);
}

#[test]
fn state_outside_every_chart_is_flagged() {
    let req = QuantizationRequest {
        charts: quartic_charts(0.01),
        hbar: 0.1,
        quantum_numbers: vec![vec![0, 0]],
        include_h2: false,
        options: CorrectionOptions::new(2),
    };
    let t = ebk_eigenvalues(&req).unwrap();
    assert!(t.rows[0].flag.as_deref().unwrap().contains("outside"));
}

#[test]
fn trivial_origin_shift_changes_nothing() {
    let c: ChartRef = Arc::new(chart(0.01));
    let r = angle_origin_invariance_test(c, &[0.25, 0.2], ActionPolynomial::new(2), &CorrectionOptions::new(2))
        .unwrap();
    assert!(r.residual < 1e-14, "{r:?}");
    assert!(r.pointwise < 1e-14);
}

#[test]
fn origin_shift_moves_the_angles_but_not_the_average() {
    let c: ChartRef = Arc::new(chart(0.01));
    let f = ActionPolynomial::new(2).with_term(1.0, vec![2, 0]).with_term(0.5, vec![1, 1]);
    let shifted = ShiftedChart::new(c.clone(), f.clone());
    let z = c.inverse(&[0.7, 1.3], &[0.25, 0.2]).unwrap();
    let (a, b) = (c.angle_jets(&z, 2).unwrap(), shifted.angle_jets(&z, 2).unwrap());
    assert!((a[0].get(&[0, 1]) - b[0].get(&[0, 1])).abs() > 1e-3);
    let r = angle_origin_invariance_test(c, &[0.25, 0.2], f, &CorrectionOptions::new(2)).unwrap();
    assert!(r.residual < 1e-5, "{r:?}");
}

#[test]
fn connection_coefficients_are_symmetric_and_null() {
    let c = chart(0.01);
    let z = c.inverse(&[0.9, 2.0], &[0.3, 0.4]).unwrap();
    let g = connection_coefficients(&c, &z, false).unwrap();
    let scale = g.lower.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(g.symmetry_defect() < 1e-5 * scale);
    assert!(g.full_contraction().abs() < 1e-10);
    // D^α → D^β → D^γ = Γ^{αβγ}
    let mut ctx = EvalContext::new(z.clone()).with_frame(c.frame_jets(&z, 2).unwrap());
    for (a, b, cc) in [(0, 0, 0), (0, 1, 2), (1, 3, 3), (3, 3, 3), (0, 2, 3)] {
        let up = |i| Node::Upper(Index::Fixed(i));
        let chain = ctx.eval(&Diagram::chain(vec![up(a), up(b), up(cc)])).unwrap().value;
        assert!((chain - g.raised(a, b, cc)).abs() < 1e-5 * scale, "{a}{b}{cc}");
    }
}

#[test]
fn isotropic_connection_is_consistent() {
    // both routes must see the vanishing hard term of the harmonic chart
    let c = CentralForceChart::new(CentralForcePotential::isotropic(), Sector::Positive);
    let z = c.inverse(&[0.4, 1.1], &[0.3, 0.5]).unwrap();
    for k in 0..2 {
        let direct = {
            let mut ctx = EvalContext::new(z.clone()).with_frame(correction_frame(&c, &z).unwrap());
            ctx.eval(&hard_diagram(2, k)).unwrap().value
        };
        let via = hard_diagram_via_gamma(&c, &z, k).unwrap();
        assert!(direct.abs() < 1e-6 && via.abs() < 1e-6, "{direct} {via}");
    }
}

#[test]
fn hard_term_routes_agree_on_the_quartic_chart() {
    let c = chart(0.01);
    let registry = HardTermRegistry::with_defaults();
    let direct = registry.resolve("route", "direct").unwrap();
    let gamma = registry.resolve("route", "connection").unwrap();
    for (phi, a) in [([0.3, 1.0], [0.3, 0.4]), ([2.5, 4.0], [0.2, 0.7])] {
        let z = c.inverse(&phi, &a).unwrap();
        let mut ctx = EvalContext::new(z.clone()).with_frame(correction_frame(&c, &z).unwrap());
        let x = direct.evaluate(&c, &mut ctx).unwrap();
        let y = gamma.evaluate(&c, &mut ctx).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-4, "{x:?} vs {y:?}");
        }
    }
}

#[test]
fn one_dimensional_harmonic_has_no_correction() {
    let rows = reduce_1d(&OneDimPotential::quartic(0.0), 0.2, &[0, 2], &CorrectionOptions::new(1)).unwrap();
    for r in rows {
        assert!(r.pipeline.abs() < 1e-10 && r.closed_form.abs() < 1e-10, "{r:?}");
        assert!((r.e0 - 0.2 * (r.n as f64 + 0.5)).abs() < 1e-12);
        assert!((r.oracle - r.e0).abs() < 1e-12);
    }
}

#[test]
fn one_dimensional_triangle_with_repeated_action_vanishes() {
    let c = OneDimChart::new(OneDimPotential::quartic(0.01));
    let z = c.inverse(&[1.0], &[0.3]).unwrap();
    let a = || Node::Upper(Index::Fixed(1));
    let tri = Diagram::new(vec![a(), a(), Node::Upper(Index::Fixed(0))])
        .arrow(2, 0, 1)
        .arrow(0, 1, 1)
        .arrow(1, 2, 1);
    let mut ctx = EvalContext::new(z.clone()).with_frame(c.frame_jets(&z, 2).unwrap());
    assert!(ctx.eval(&tri).unwrap().value.abs() < 1e-12);
}
