use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ebk_core::chart::{
    balance_units, sample_point, ActionAngleChart, CentralForceChart, CentralForcePotential, ChartRef,
    ModelRegistry, Sector,
};
use ebk_core::diagram::identity_suite;
use ebk_core::field::PhasePoint;
use ebk_core::normal_form::{compute_normal_form, QuadraticHamiltonianSet};
use ebk_core::oracle::{exact_spectrum, RadialGrid, SolverRegistry};
use ebk_core::quantizer::{ebk_eigenvalues, AveragingGrid, CorrectionOptions, HardTermRegistry, QuantizationRequest};

use crate::config::RunConfig;
use crate::output::{parse_f64, read_csv, sci, write_csv, Manifest, UnitConversion};

/// Command-line overrides layered on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub generate: bool,
}

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub tol: Option<f64>,
    pub generate: bool,
    pub potential: CentralForcePotential,
    pub units: UnitConversion,
}

impl Run {
    pub fn new(mut cfg: RunConfig, ov: Overrides) -> Result<Self> {
        if let Some(s) = ov.seed {
            cfg.seed = s;
        }
        if let Some(o) = &ov.out {
            cfg.output.dir = o.clone();
        }
        let out = cfg.output.dir.clone();
        std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;

        let model = ModelRegistry::with_defaults().resolve("model", &cfg.model.name)?;
        let physical = model.build(&cfg.model.params())?;
        let potential = balance_units(&physical)?;
        let units = UnitConversion {
            mass: potential.mass,
            omega0: potential.omega0,
            length_scale: (potential.mass * potential.omega0).sqrt(),
            physical_coefficients: physical.coefficients.clone(),
            balanced_coefficients: potential.coefficients.clone(),
        };
        log::info!(
            "balanced units: omega0 = {}, r_balanced = {} * r, U coefficients (s = r^2 powers 1..) {:?}",
            units.omega0,
            units.length_scale,
            units.balanced_coefficients
        );
        Ok(Self {
            cfg,
            out,
            tol: ov.tol,
            generate: ov.generate,
            potential,
            units,
        })
    }

    fn charts(&self) -> Vec<ChartRef> {
        vec![
            Arc::new(CentralForceChart::new(self.potential.clone(), Sector::Positive)),
            Arc::new(CentralForceChart::new(self.potential.clone(), Sector::Negative)),
        ]
    }

    fn manifest(&self, command: &str, passed: bool, outputs: Vec<PathBuf>, summary: serde_json::Value) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            passed,
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            units: self.units.clone(),
            outputs,
            summary,
        }
    }

    fn finish(&self, m: Manifest) -> Result<bool> {
        let path = m.write(&self.out)?;
        log::info!("wrote {}", path.display());
        Ok(m.passed)
    }

    pub fn identities(&self) -> Result<bool> {
        let tol = self.tol.unwrap_or(self.cfg.tolerances.identities);
        let chart = CentralForceChart::new(self.potential.clone(), Sector::Positive);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let points: Vec<PhasePoint> = (0..self.cfg.grids.identity_points)
            .map(|_| sample_point(&chart, &mut rng))
            .collect::<Result<_, _>>()?;
        let report = identity_suite(&chart, &points, tol)?;
        let rows: Vec<Vec<String>> = report
            .identities
            .iter()
            .map(|s| {
                vec![
                    s.name.clone(),
                    sci(s.max_residual),
                    sci(s.max_difference),
                    s.evaluations.to_string(),
                    s.worst_point.to_string(),
                    (s.max_residual < tol).to_string(),
                ]
            })
            .collect();
        let csv = self.out.join("identities.csv");
        write_csv(
            &csv,
            &["identity", "max_residual", "max_difference", "evaluations", "worst_point", "pass"],
            &rows,
        )?;
        for f in report.failures() {
            println!("FAIL {}: residual {} > tol {}", f.name, sci(f.max_residual), sci(tol));
        }
        println!(
            "{} identities at {} points: max residual {}, {} failing",
            report.identities.len(),
            report.points,
            sci(report.max_residual()),
            report.failures().len()
        );
        let summary = json!({
            "tol": tol,
            "points": report.points,
            "max_residual": report.max_residual(),
            "failures": report.failures().iter().map(|f| json!({"identity": f.name, "residual": f.max_residual})).collect::<Vec<_>>(),
        });
        self.finish(self.manifest("identities", report.passed(), vec![csv], summary))
    }

    pub fn normal_form(&self) -> Result<bool> {
        let tol = self.tol.unwrap_or(self.cfg.tolerances.normal_form);
        let positive = CentralForceChart::new(self.potential.clone(), Sector::Positive);
        let set = QuadraticHamiltonianSet::from_fields(&positive.observables(), &PhasePoint::origin(2))?;
        let nf = compute_normal_form(&set, tol)?;
        let mut rows = Vec::new();
        let mut push = |name: &str, m: &nalgebra::DMatrix<f64>| {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    rows.push(vec![name.to_string(), i.to_string(), j.to_string(), sci(m[(i, j)])]);
                }
            }
        };
        push("a", &nf.a);
        push("S", &nf.s);
        let mut omegas = BTreeMap::new();
        for (label, sector) in [("omega_positive", Sector::Positive), ("omega_negative", Sector::Negative)] {
            let nu = CentralForceChart::new(self.potential.clone(), sector).contour().nu_matrix();
            let inv = nu.try_inverse().ok_or_else(|| anyhow!("contour matrix is singular"))?;
            let w = &nf.a * inv;
            push(label, &w);
            omegas.insert(label, w.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>());
        }
        let csv = self.out.join("normal_form.csv");
        write_csv(&csv, &["quantity", "row", "col", "value"], &rows)?;
        let (form, symp) = (nf.form_residual(&set), nf.symplectic_residual());
        println!("observables (H/omega0, L): a = {:?}", nf.a.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>());
        println!("form residual {}, symplectic residual {}", sci(form), sci(symp));
        let summary = json!({
            "observables": ["H/omega0", "L"],
            "normal_form": nf,
            "form_residual": form,
            "symplectic_residual": symp,
            "fixed_point_frequencies": omegas,
        });
        self.finish(self.manifest("normal-form", true, vec![csv], summary))
    }

    fn quantize_to(&self, path: &Path) -> Result<usize> {
        let mut options = CorrectionOptions::new(2);
        options.grid = AveragingGrid::new(vec![self.cfg.grids.averaging; 2]);
        options.grid.rel_tol = self.cfg.grids.averaging_rel_tol;
        options.route = HardTermRegistry::with_defaults().resolve("route", &self.cfg.grids.route)?;
        let req = QuantizationRequest {
            charts: self.charts(),
            hbar: self.cfg.hbar,
            quantum_numbers: self.cfg.states.quantum_numbers(),
            include_h2: true,
            options,
        };
        let table = ebk_eigenvalues(&req)?;
        let opt = |v: Option<&f64>| v.map(|x| sci(*x)).unwrap_or_default();
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.quantum_numbers[0].to_string(),
                    r.quantum_numbers[1].to_string(),
                    opt(r.actions.first()),
                    opt(r.actions.get(1)),
                    opt(r.e0.first()),
                    opt(r.correction.first()),
                    opt(r.total.first()),
                    opt(r.e0.get(1)),
                    opt(r.correction.get(1)),
                    r.flag.clone().unwrap_or_default(),
                ]
            })
            .collect();
        write_csv(
            path,
            &["n_r", "m", "A_r", "L", "E_ebk0", "E_correction", "E_ebk2", "L_ebk0", "L_correction", "flag"],
            &rows,
        )?;
        let flagged = table.rows.iter().filter(|r| r.flag.is_some()).count();
        for r in table.rows.iter().filter(|r| r.flag.is_some()) {
            log::warn!("state {:?}: {}", r.quantum_numbers, r.flag.as_deref().unwrap_or(""));
        }
        Ok(flagged)
    }

    fn oracle_to(&self, path: &Path) -> Result<()> {
        let solver = SolverRegistry::with_defaults().resolve("solver", &self.cfg.grids.oracle_solver)?;
        let grid = RadialGrid {
            n_points: self.cfg.grids.oracle_points,
            ..RadialGrid::default()
        };
        let spectrum = exact_spectrum(
            &self.potential,
            self.cfg.hbar,
            &self.cfg.states.m_values(),
            self.cfg.states.n_r_max as usize,
            &grid,
            solver.as_ref(),
        )?;
        let mut rows = Vec::new();
        for (m, s) in &spectrum.sectors {
            for (n, e) in s.energies.iter().enumerate().take(self.cfg.states.n_r_max as usize + 1) {
                let conv = s.convergence.get(n).copied().unwrap_or(0.0);
                rows.push(vec![n.to_string(), m.to_string(), sci(*e), sci(conv)]);
            }
        }
        write_csv(path, &["n_r", "m", "E", "convergence"], &rows)?;
        Ok(())
    }

    pub fn quantize(&self) -> Result<bool> {
        let csv = self.out.join("quantize.csv");
        let flagged = self.quantize_to(&csv)?;
        println!("wrote {} ({} flagged states)", csv.display(), flagged);
        self.finish(self.manifest("quantize", true, vec![csv], json!({ "flagged": flagged })))
    }

    pub fn oracle(&self) -> Result<bool> {
        let csv = self.out.join("oracle.csv");
        self.oracle_to(&csv)?;
        println!("wrote {} (solver {})", csv.display(), self.cfg.grids.oracle_solver);
        self.finish(self.manifest("oracle", true, vec![csv], json!({ "solver": self.cfg.grids.oracle_solver })))
    }

    pub fn compare(&self) -> Result<bool> {
        let qpath = self.cfg.output.quantize_csv.clone().unwrap_or_else(|| self.out.join("quantize.csv"));
        let opath = self.cfg.output.oracle_csv.clone().unwrap_or_else(|| self.out.join("oracle.csv"));
        if self.generate {
            self.quantize_to(&qpath)?;
            self.oracle_to(&opath)?;
        } else {
            for (what, p) in [("quantization", &qpath), ("oracle", &opath)] {
                if !p.exists() {
                    bail!(
                        "{what} table {} not found; run the corresponding subcommand first or pass --generate",
                        p.display()
                    );
                }
            }
        }
        // always join the tables as written, so results do not depend on
        // whether they were generated in this run
        let mut exact: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for row in read_csv(&opath)? {
            let key = (key(&row, "n_r", &opath)?, key(&row, "m", &opath)?);
            let e = parse_f64(&row, "E", &opath)?.ok_or_else(|| anyhow!("{}: empty energy", opath.display()))?;
            exact.insert(key, e);
        }
        let mut rows = Vec::new();
        let (mut err0, mut err2, mut ratios) = (Vec::new(), Vec::new(), Vec::new());
        let mut skipped = 0;
        for row in read_csv(&qpath)? {
            let k = (key(&row, "n_r", &qpath)?, key(&row, "m", &qpath)?);
            let (Some(e0), Some(e2)) = (parse_f64(&row, "E_ebk0", &qpath)?, parse_f64(&row, "E_ebk2", &qpath)?) else {
                skipped += 1;
                continue;
            };
            let Some(&ex) = exact.get(&k) else {
                bail!(
                    "key mismatch: state (n_r = {}, m = {}) of {} has no entry in {}",
                    k.0,
                    k.1,
                    qpath.display(),
                    opath.display()
                );
            };
            let (d0, d2) = (e0 - ex, e2 - ex);
            // both errors at roundoff level: nothing to improve on
            let floor = 1e-10 * ex.abs().max(1e-300);
            let ratio = if d0.abs() <= floor && d2.abs() <= floor {
                "exact/exact".to_string()
            } else {
                let r = d0.abs() / d2.abs();
                ratios.push(r);
                sci(r)
            };
            err0.push(d0.abs());
            err2.push(d2.abs());
            rows.push(vec![k.0.to_string(), k.1.to_string(), sci(ex), sci(e0), sci(e2), sci(d0), sci(d2), ratio]);
        }
        if rows.is_empty() {
            bail!("no states could be joined between {} and {}", qpath.display(), opath.display());
        }
        let csv = self.out.join("compare.csv");
        write_csv(&csv, &["n_r", "m", "E_exact", "E_ebk0", "E_ebk2", "err_ebk0", "err_ebk2", "improvement"], &rows)?;

        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let improved = err0.iter().zip(&err2).filter(|(a, b)| b < a).count();
        let mut sorted = ratios.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ratio_summary = if sorted.is_empty() {
            json!("exact/exact")
        } else {
            json!({"min": sorted[0], "median": sorted[sorted.len() / 2], "max": sorted[sorted.len() - 1]})
        };
        println!("joined {} states ({} skipped)", rows.len(), skipped);
        println!("|E_ebk0 - E_exact|: max {} mean {}", sci(max(&err0)), sci(mean(&err0)));
        println!("|E_ebk2 - E_exact|: max {} mean {}", sci(max(&err2)), sci(mean(&err2)));
        match sorted.first() {
            Some(lo) => println!(
                "improvement ratio: min {} median {} ({} of {} improved)",
                sci(*lo),
                sci(sorted[sorted.len() / 2]),
                improved,
                rows.len()
            ),
            None => println!("improvement ratio: exact/exact"),
        }
        let summary = json!({
            "joined": rows.len(),
            "skipped": skipped,
            "max_err_ebk0": max(&err0),
            "mean_err_ebk0": mean(&err0),
            "max_err_ebk2": max(&err2),
            "mean_err_ebk2": mean(&err2),
            "improved": improved,
            "improvement_ratio": ratio_summary,
        });
        self.finish(self.manifest("compare", true, vec![qpath, opath, csv], summary))
    }
}

fn key(row: &BTreeMap<String, String>, col: &str, path: &Path) -> Result<i64> {
    let v = crate::output::field(row, col, path)?;
    v.parse().with_context(|| format!("{}: bad integer '{v}' in column '{col}'", path.display()))
}
