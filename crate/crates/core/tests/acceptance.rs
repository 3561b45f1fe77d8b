//! End-to-end acceptance runs. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ebk_core::chart::*;
use ebk_core::diagram::identity_suite;
use ebk_core::field::PhasePoint;
use ebk_core::normal_form::{compute_normal_form, delta, QuadraticHamiltonianSet};
use ebk_core::oracle::{exact_spectrum, FiniteDifference, OracleSpectrum, OscillatorBasis, RadialGrid};
use ebk_core::quantizer::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn central_force_pair() -> QuadraticHamiltonianSet {
    let q1 = DMatrix::identity(4, 4);
    let mut q2 = DMatrix::zeros(4, 4);
    q2[(0, 3)] = 1.0;
    q2[(3, 0)] = 1.0;
    q2[(1, 2)] = -1.0;
    q2[(2, 1)] = -1.0;
    QuadraticHamiltonianSet::new(vec![q1, q2])
}

fn ac1() -> Outcome {
    let set = central_force_pair();
    let nf = compute_normal_form(&set, 1e-10).map_err(|e| e.to_string())?;
    let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
    let da = (nf.a.clone() - expect).abs().max();
    let (fr, sr) = (nf.form_residual(&set), nf.symplectic_residual());
    check(
        da < 1e-10 && fr < 1e-10 && sr < 1e-12,
        format!("a = {:?}, |a − a*| = {da:.1e}, form {fr:.1e}, symplectic {sr:.1e}", nf.a.as_slice()),
    )
}

/// Product of elementary symplectic shears and a block `diag(G, G⁻ᵀ)`.
fn random_symplectic(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut sym = || {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
        0.5 * (&m + m.transpose())
    };
    let (a, b) = (sym(), sym());
    let g = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
    let gi = g.clone().try_inverse().unwrap().transpose();
    let mut upper = DMatrix::identity(2 * n, 2 * n);
    upper.view_mut((0, n), (n, n)).copy_from(&a);
    let mut lower = DMatrix::identity(2 * n, 2 * n);
    lower.view_mut((n, 0), (n, n)).copy_from(&b);
    let mut diag = DMatrix::zeros(2 * n, 2 * n);
    diag.view_mut((0, 0), (n, n)).copy_from(&g);
    diag.view_mut((n, n), (n, n)).copy_from(&gi);
    upper * lower * diag
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn ac2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_form: f64 = 0.0;
    for n in [2, 3] {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * n as u64 + seed);
            let t = random_symplectic(n, &mut rng);
            let c = DMatrix::from_fn(n, n, |j, _| {
                if j == 0 {
                    rng.gen_range(0.5..3.0)
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            });
            let ti = t.clone().try_inverse().unwrap();
            let q = (0..n)
                .map(|j| {
                    let mut d = DMatrix::zeros(2 * n, 2 * n);
                    for k in 0..n {
                        d += c[(j, k)] * delta(n, k);
                    }
                    ti.transpose() * d * &ti
                })
                .collect();
            let set = QuadraticHamiltonianSet::new(q);
            let nf = compute_normal_form(&set, 1e-10).map_err(|e| format!("N={n} seed {seed}: {e}"))?;
            let best = permutations(n)
                .iter()
                .map(|p| (0..n).flat_map(|j| (0..n).map(move |k| (j, k))).fold(0.0f64, |m, (j, k)| {
                    m.max((nf.a[(j, k)] - c[(j, p[k])]).abs())
                }))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
            worst_form = worst_form.max(nf.form_residual(&set)).max(nf.symplectic_residual());
        }
    }
    check(
        worst < 1e-8 && worst_form < 1e-8,
        format!("100 sets, worst |a − a*| {worst:.1e}, worst form/symplectic residual {worst_form:.1e}"),
    )
}

/// `(1/2π)∮ p·ẋ dt` over one period of the exact harmonic flow, by RK4.
fn loop_action_by_flow(energy: f64, l: f64) -> f64 {
    let e = energy;
    let r0 = (e + (e * e - l * l).sqrt()).sqrt();
    let mut y = [r0, 0.0, 0.0, l / r0];
    let steps = 4000;
    let h = 2.0 * PI / steps as f64;
    let rhs = |y: &[f64; 4]| [y[2], y[3], -y[0], -y[1]];
    let pdot = |y: &[f64; 4]| y[2] * y[2] + y[3] * y[3];
    let mut integral = 0.0;
    for _ in 0..steps {
        let k1 = rhs(&y);
        let y2: [f64; 4] = std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]);
        let k2 = rhs(&y2);
        let y3: [f64; 4] = std::array::from_fn(|i| y[i] + 0.5 * h * k2[i]);
        let k3 = rhs(&y3);
        let y4: [f64; 4] = std::array::from_fn(|i| y[i] + h * k3[i]);
        let k4 = rhs(&y4);
        integral += h / 6.0 * (pdot(&y) + 2.0 * pdot(&y2) + 2.0 * pdot(&y3) + pdot(&y4));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    integral / (2.0 * PI)
}

fn ac3() -> Outcome {
    let chart = CentralForceChart::new(CentralForcePotential::isotropic(), Sector::Positive);
    let (mut worst_r, mut worst_h): (f64, f64) = (0.0, 0.0);
    for i in 0..10 {
        let e = 0.2 + 0.5 * i as f64;
        for j in 0..10 {
            let l = e * (-0.9 + 0.2 * j as f64);
            let ar = chart.radial_action(e, l).map_err(|x| x.to_string())?;
            let exact = 0.5 * (e - l.abs());
            worst_r = worst_r.max((ar - exact).abs() / exact);
            let ah = loop_action_by_flow(e, l);
            worst_h = worst_h.max((ah - (2.0 * ar + l.abs())).abs() / ah);
        }
    }
    check(
        worst_r < 1e-8 && worst_h < 1e-8,
        format!("100 tori: A_r rel {worst_r:.1e}, A_H vs 2A_r+|L| rel {worst_h:.1e}"),
    )
}

fn charts(pot: &CentralForcePotential) -> Vec<ChartRef> {
    vec![
        Arc::new(CentralForceChart::new(pot.clone(), Sector::Positive)),
        Arc::new(CentralForceChart::new(pot.clone(), Sector::Negative)),
    ]
}

fn states(nr_max: i64, m_max: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for nr in 0..=nr_max {
        for m in 1..=m_max {
            out.push(vec![nr, m]);
            out.push(vec![nr, -m]);
        }
    }
    out
}

fn table(pot: &CentralForcePotential, hbar: f64, qn: Vec<Vec<i64>>) -> Result<EigenvalueTable, String> {
    let req = QuantizationRequest {
        charts: charts(pot),
        hbar,
        quantum_numbers: qn,
        include_h2: true,
        options: CorrectionOptions::new(2),
    };
    let t = ebk_eigenvalues(&req).map_err(|e| e.to_string())?;
    if let Some(r) = t.rows.iter().find(|r| r.flag.is_some()) {
        return Err(format!("state {:?} flagged: {}", r.quantum_numbers, r.flag.as_ref().unwrap()));
    }
    Ok(t)
}

fn oracle(
    pot: &CentralForcePotential,
    hbar: f64,
    m_max: i64,
    nr_max: usize,
    solver: &dyn ebk_core::oracle::RadialSolver,
) -> Result<OracleSpectrum, String> {
    let ms: Vec<i64> = (1..=m_max).flat_map(|m| [m, -m]).collect();
    exact_spectrum(pot, hbar, &ms, nr_max + 1, &RadialGrid::default(), solver).map_err(|e| e.to_string())
}

fn ac4(tables: &mut Vec<EigenvalueTable>) -> Outcome {
    let pot = CentralForcePotential::isotropic();
    let hbar = 0.1;
    let mut t = table(&pot, hbar, states(4, 4))?;
    let fd = oracle(&pot, hbar, 4, 4, &FiniteDifference::conservative())?;
    t.attach_oracle(&fd);
    let (mut exact_err, mut oracle_err, mut corr): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for r in &t.rows {
        let (nr, m) = (r.quantum_numbers[0], r.quantum_numbers[1]);
        let exact = hbar * (2 * nr + m.abs() + 1) as f64;
        exact_err = exact_err.max((r.e0[0] - exact).abs());
        oracle_err = oracle_err.max((r.e0[0] - r.oracle.ok_or("missing oracle row")?).abs());
        corr = corr.max(r.correction[0].abs());
    }
    tables.push(t);
    check(
        exact_err < 1e-8 && oracle_err < 1e-8 && corr < 1e-6 * hbar,
        format!(
            "40 states: |E0 − ħ(2n_r+|m|+1)| {exact_err:.1e}, |E0 − oracle| {oracle_err:.1e}, |ħ²C| {corr:.1e}"
        ),
    )
}

fn ac5() -> Outcome {
    let chart = CentralForceChart::new(CentralForcePotential::quartic(0.01), Sector::Positive);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: Vec<PhasePoint> = (0..20)
        .map(|_| sample_point(&chart, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let report = identity_suite(&chart, &points, 1e-5).map_err(|e| e.to_string())?;
    let fails: Vec<String> = report
        .failures()
        .iter()
        .map(|s| format!("{} ({:.1e})", s.name, s.max_residual))
        .collect();
    check(
        report.passed(),
        format!(
            "{} identities × {} points, max residual {:.1e}{}",
            report.identities.len(),
            report.points,
            report.max_residual(),
            if fails.is_empty() { String::new() } else { format!("; failing: {}", fails.join(", ")) }
        ),
    )
}

fn ac6(tables: &mut Vec<EigenvalueTable>) -> Outcome {
    let pot = CentralForcePotential::quartic(0.01);
    let hbar = 0.1;
    let basis = OscillatorBasis::default();
    let mut t = table(&pot, hbar, states(3, 3))?;
    t.attach_oracle(&oracle(&pot, hbar, 3, 3, &basis)?);
    let mut improved = 0;
    let mut detail = Vec::new();
    for r in &t.rows {
        let (e0, e2) = (r.error0().ok_or("missing oracle")?, r.error2().ok_or("missing oracle")?);
        if e2.abs() < e0.abs() {
            improved += 1;
        } else {
            detail.push(format!("{:?} not improved ({e0:.2e} → {e2:.2e})", r.quantum_numbers));
        }
    }

    // the same tori at ħ/2 sit midway between (2n_r, 2m) and (2n_r+1, 2m)
    let half = hbar / 2.0;
    let mut qn = Vec::new();
    for nr in 0..=3 {
        for m in 1..=3 {
            qn.push(vec![2 * nr, 2 * m]);
            qn.push(vec![2 * nr + 1, 2 * m]);
        }
    }
    let mut th = table(&pot, half, qn)?;
    th.attach_oracle(&oracle(&pot, half, 6, 7, &basis)?);
    let (mut r0_range, mut r2_range) = ((f64::INFINITY, 0.0f64), (f64::INFINITY, 0.0f64));
    let mut scaling_ok = true;
    for nr in 0..=3i64 {
        for m in 1..=3i64 {
            let coarse = t.row(&[nr, m]).unwrap();
            let (a, b) = (th.row(&[2 * nr, 2 * m]).unwrap(), th.row(&[2 * nr + 1, 2 * m]).unwrap());
            let f0 = 0.5 * (a.error0().unwrap() + b.error0().unwrap());
            let f2 = 0.5 * (a.error2().unwrap() + b.error2().unwrap());
            let r0 = coarse.error0().unwrap() / f0;
            let r2 = coarse.error2().unwrap() / f2;
            r0_range = (r0_range.0.min(r0), r0_range.1.max(r0));
            r2_range = (r2_range.0.min(r2), r2_range.1.max(r2));
            if !(2.0..=8.0).contains(&r0) || !(8.0..=32.0).contains(&r2) {
                scaling_ok = false;
                detail.push(format!("({nr},{m}) ratios {r0:.2} / {r2:.2}"));
            }
        }
    }
    let n = t.rows.len();
    tables.push(t);
    tables.push(th);
    check(
        improved == n && scaling_ok,
        format!(
            "{improved}/{n} improved; ħ-halving ratio EBK0 {:.2}–{:.2}, EBK2 {:.2}–{:.2}{}",
            r0_range.0,
            r0_range.1,
            r2_range.0,
            r2_range.1,
            if detail.is_empty() { String::new() } else { format!("; {}", detail.join("; ")) }
        ),
    )
}

fn ac7(tables: &[EigenvalueTable]) -> Outcome {
    let (mut worst_e, mut worst_c, mut count): (f64, f64, usize) = (0.0, 0.0, 0);
    for t in tables {
        for r in &t.rows {
            let m = r.quantum_numbers[1] as f64;
            worst_e = worst_e.max((r.e0[1] - m * t.hbar).abs());
            worst_c = worst_c.max(r.correction[1].abs());
            count += 1;
        }
    }
    check(
        count > 0 && worst_e <= 4.0 * f64::EPSILON && worst_c < 1e-8,
        format!("{count} states: |E² − mħ| {worst_e:.1e}, |ħ²C²| {worst_c:.1e}"),
    )
}

fn ac8() -> Outcome {
    let base: ChartRef = Arc::new(CentralForceChart::new(CentralForcePotential::quartic(0.01), Sector::Positive));
    let f = ActionPolynomial::new(2).with_term(0.3, vec![2, 0]).with_term(0.2, vec![1, 1]);
    let mut worst: f64 = 0.0;
    for a in [[0.15, 0.1], [0.25, 0.2], [0.35, 0.3]] {
        let r = angle_origin_invariance_test(base.clone(), &a, f.clone(), &CorrectionOptions::new(2))
            .map_err(|e| e.to_string())?;
        worst = worst.max(r.residual);
    }
    check(worst < 1e-5, format!("3 tori, worst relative shift {worst:.1e}"))
}

fn ac9() -> Outcome {
    let pot = OneDimPotential::quartic(0.01);
    let rows = reduce_1d(&pot, 0.1, &[0, 1, 2, 3, 5], &CorrectionOptions::new(1)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut improved = true;
    for r in &rows {
        worst = worst.max(r.disagreement());
        let e0 = (r.e0 - r.oracle).abs();
        improved &= (r.e0 + r.pipeline - r.oracle).abs() < e0 && (r.e0 + r.closed_form - r.oracle).abs() < e0;
    }
    check(
        worst < 1e-5 && improved,
        format!(
            "{} levels: pipeline vs closed form rel {worst:.1e}; both improve on EBK0: {improved}",
            rows.len()
        ),
    )
}

/// Polynomial extrapolation of samples `(t, y)` to `t = 0` (Neville).
fn extrapolate(samples: &[(f64, f64)]) -> f64 {
    let mut p: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let t: Vec<f64> = samples.iter().map(|s| s.0).collect();
    for k in 1..p.len() {
        for i in 0..p.len() - k {
            p[i] = (t[i + k] * p[i] - t[i] * p[i + 1]) / (t[i + k] - t[i]);
        }
    }
    p[0]
}

fn ac10() -> Outcome {
    let pot = CentralForcePotential::quartic(0.01);
    let mut worst: f64 = 0.0;
    for sector in [Sector::Positive, Sector::Negative] {
        let chart = CentralForceChart::new(pot.clone(), sector);
        let set = QuadraticHamiltonianSet::from_fields(&chart.observables(), &PhasePoint::origin(2))
            .map_err(|e| e.to_string())?;
        let nf = compute_normal_form(&set, 1e-10).map_err(|e| e.to_string())?;
        let nu_inv = chart.contour().nu_matrix().try_inverse().ok_or("singular ν")?;
        let expect = &nf.a * nu_inv;
        let dir = [1.0, 0.5 * sector.sign()];
        let omegas: Vec<(f64, DMatrix<f64>)> = [0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&t| {
                let a = [t * dir[0], t * dir[1]];
                chart.frequency_data(&a).map(|f| (t, f.omega_matrix()))
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for j in 0..2 {
            for k in 0..2 {
                let s: Vec<(f64, f64)> = omegas.iter().map(|(t, w)| (*t, w[(j, k)])).collect();
                worst = worst.max((extrapolate(&s) - expect[(j, k)]).abs());
            }
        }
    }
    check(worst < 1e-4, format!("both sectors, worst entry |ω(0) − aν⁻¹| {worst:.1e}"))
}

fn main() {
    let mut tables = Vec::new();
    let mut failed = 0;
    let mut run = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("{name} PASS ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("{name} FAIL ({secs:.1} s): {d}");
            }
        }
    };
    run("AC-1", &mut ac1);
    run("AC-2", &mut ac2);
    run("AC-3", &mut ac3);
    run("AC-4", &mut || ac4(&mut tables));
    run("AC-5", &mut ac5);
    run("AC-6", &mut || ac6(&mut tables));
    run("AC-7", &mut || ac7(&tables));
    run("AC-8", &mut ac8);
    run("AC-9", &mut ac9);
    run("AC-10", &mut ac10);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
