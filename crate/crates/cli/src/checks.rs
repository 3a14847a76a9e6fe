//! One function per check; each returns its tables and a pass flag.

use anyhow::{anyhow, Result};
use fslice::audit::{audit_assumptions, AuditBox};
use fslice::grid::GridState;
use fslice::hessian::{hessian_min_eig, HessianFamily};
use fslice::multiparticle::{commutation_defect, symmetry_preservation_check, ManyBodyState, Parity};
use fslice::phimap::{det_bound_scan, ScanBox};
use fslice::reference::{local_consistency, CnOptions};
use fslice::slicing::{compose, convergence_study, gauge_covariance_check, ConvergenceTable, Partition, Reference, SliceOptions};
use fslice::sobol::Sobol;
use fslice::spin::{transport_between, TransportOptions};
use serde_json::{json, Map, Value};

use crate::config::{AuditSpec, CheckKind, Experiment};
use crate::report::{Cell, Table};

pub struct Outcome {
    pub passed: bool,
    pub detail: String,
    pub metrics: Map<String, Value>,
    pub tables: Vec<Table>,
    pub snapshots: Vec<(String, GridState)>,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail, metrics: Map::new(), tables: Vec::new(), snapshots: Vec::new() }
    }

    fn metric(mut self, key: &str, value: Value) -> Self {
        self.metrics.insert(key.to_owned(), value);
        self
    }

    fn table(mut self, t: Table) -> Self {
        self.tables.push(t);
        self
    }
}

pub struct Runner<'a> {
    pub exp: &'a Experiment,
    pub slice: SliceOptions,
    pub cn: CnOptions,
}

impl<'a> Runner<'a> {
    pub fn new(exp: &'a Experiment, rho_star: Option<f64>, force_sampling: bool) -> Self {
        let mut slice = SliceOptions::default();
        if let Some(r) = rho_star.or(exp.config.rho_star) {
            slice.rho_star = r;
        }
        slice.kernel.force = force_sampling || exp.config.force_sampling;
        Self { exp, slice, cn: exp.config.cn.unwrap_or_default() }
    }

    pub fn run(&self, kind: CheckKind) -> Result<Outcome> {
        self.exp.requirements(kind)?;
        match kind {
            CheckKind::Propagate => self.propagate(),
            CheckKind::Converge => self.converge(),
            CheckKind::Gauge => self.gauge(),
            CheckKind::Spin => self.spin(),
            CheckKind::Exchange => self.exchange(),
            CheckKind::Phimap => self.phimap(),
            CheckKind::Hessian => self.hessian(),
            CheckKind::Audit => self.audit(),
            CheckKind::Consistency => self.consistency(),
        }
    }

    fn thresholds(&self) -> &crate::config::Thresholds {
        &self.exp.config.thresholds
    }

    /// Sobol points after skipping `seed` of them.
    fn samples(&self, lo: &[f64], hi: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        let mut seq = Sobol::new(lo.len())?;
        for _ in 0..self.exp.config.seed {
            seq.next_point();
        }
        Ok((0..n)
            .map(|_| seq.next_point().iter().zip(lo.iter().zip(hi)).map(|(u, (a, b))| a + u * (b - a)).collect())
            .collect())
    }

    fn propagate(&self) -> Result<Outcome> {
        let s = self.exp.schedule()?;
        let f = self.exp.initial_state()?;
        let nu = s.nu[0];
        let part = Partition::uniform(f.time, f.time + s.t_final, nu)?;
        let opts = SliceOptions { keep_intermediate: true, ..self.slice };
        let states = compose(&self.exp.fields, self.exp.spin.as_ref(), &part, &f, &opts)?;
        let mut table = Table::new("propagate", &["slice", "time", "norm_ratio"]);
        let norm0 = f.norm();
        let mut worst = 0.0f64;
        for (j, u) in states.iter().enumerate() {
            let ratio = u.norm() / norm0;
            worst = worst.max((ratio - 1.0).abs());
            table.push(vec![(j + 1).into(), u.time.into(), ratio.into()]);
        }
        let passed = worst <= self.thresholds().norm_deviation;
        let last = states.last().cloned().ok_or_else(|| anyhow!("empty composition"))?;
        let mut out = Outcome::new(passed, format!("nu = {nu}, largest |norm ratio - 1| = {worst:.3e}"))
            .metric("nu", json!(nu))
            .metric("max_norm_deviation", json!(worst))
            .table(table);
        out.snapshots.push(("propagate".into(), last));
        Ok(out)
    }

    fn study(&self, name: &str) -> Result<(ConvergenceTable, Table)> {
        let s = self.exp.schedule()?;
        let f = self.exp.initial_state()?;
        let h1 = self.exp.spin.as_ref();
        let dt = s.reference_dt.unwrap_or(s.t_final / 4000.0);
        let t = f.time + s.t_final;
        let reference = Reference::crank_nicolson(&self.exp.fields, h1, &f, &[t], dt, &self.cn)?;
        let study = convergence_study(&self.exp.fields, h1, &f, t, &s.nu, &reference, &self.slice)?;
        let mut table = Table::new(name, &["nu", "mesh", "l2_error", "norm_ratio"]);
        for r in &study.rows {
            table.push(vec![r.nu.into(), r.mesh.into(), r.l2_error.into(), r.norm_ratio.into()]);
        }
        Ok((study, table))
    }

    fn study_metrics(out: Outcome, study: &ConvergenceTable) -> Outcome {
        out.metric("slope", json!(study.fit.slope))
            .metric("intercept", json!(study.fit.intercept))
            .metric("stability_constant", json!(study.stability_constant()))
            .metric("monotone", json!(study.is_monotone()))
            .metric("reference_accuracy", json!(study.reference_accuracy))
    }

    fn converge(&self) -> Result<Outcome> {
        let (study, table) = self.study("convergence")?;
        let th = self.thresholds();
        let last = study.rows.last().ok_or_else(|| anyhow!("empty study"))?;
        let deviation = (last.norm_ratio - 1.0).abs();
        let passed = study.is_monotone() && study.slope() >= th.slope && deviation <= th.norm_deviation;
        let detail = format!(
            "slope {:.4}, monotone {}, K = {:.3e}, |ratio - 1| at nu = {} is {deviation:.3e}",
            study.slope(),
            study.is_monotone(),
            study.stability_constant(),
            last.nu
        );
        let grid = self.exp.config.grid.as_ref().map(|g| json!({ "half_width": g.half_width, "points": g.points }));
        Ok(Self::study_metrics(Outcome::new(passed, detail), &study)
            .metric("grid", json!(grid))
            .table(table))
    }

    fn spin(&self) -> Result<Outcome> {
        let h1 = self.exp.spin.as_ref().ok_or_else(|| anyhow!("config needs \"spin\""))?;
        let n = h1.config_dim();
        let half = self.exp.config.grid.as_ref().map_or(5.0, |g| g.half_width);
        let mut lo = vec![0.0, 1e-3];
        let mut hi = vec![self.exp.schedule()?.t_final, self.slice.rho_star];
        lo.extend(std::iter::repeat_n(-half, 2 * n));
        hi.extend(std::iter::repeat_n(half, 2 * n));
        let opts = TransportOptions::from(self.slice.kernel.transport);
        let mut unitarity = 0.0f64;
        for p in self.samples(&lo, &hi, 256)? {
            let f = transport_between(h1, p[0], p[0] + p[1], &p[2..2 + n], &p[2 + n..], &opts)?;
            unitarity = unitarity.max(f.unitarity_defect());
        }
        let (study, table) = self.study("spin")?;
        let th = self.thresholds();
        let passed = unitarity <= th.unitarity && study.slope() >= th.slope;
        let detail = format!("transport unitarity {unitarity:.3e}, slope {:.4}", study.slope());
        Ok(Self::study_metrics(Outcome::new(passed, detail), &study)
            .metric("transport_unitarity", json!(unitarity))
            .table(table))
    }

    fn gauge(&self) -> Result<Outcome> {
        let s = self.exp.schedule()?;
        let f = self.exp.initial_state()?;
        let g = self.exp.gauge()?;
        let mut table = Table::new("gauge", &["nu", "defect"]);
        let mut worst = 0.0f64;
        for &nu in &s.nu {
            let part = Partition::uniform(f.time, f.time + s.t_final, nu)?;
            let d = gauge_covariance_check(&self.exp.fields, self.exp.spin.as_ref(), &g, &part, &f, &self.slice)?;
            worst = worst.max(d);
            table.push(vec![nu.into(), d.into()]);
        }
        let passed = worst <= self.thresholds().gauge_defect;
        Ok(Outcome::new(passed, format!("largest defect {worst:.3e}")).metric("max_defect", json!(worst)).table(table))
    }

    fn exchange(&self) -> Result<Outcome> {
        let s = self.exp.schedule()?;
        let st = ManyBodyState::product(&self.exp.particle_states()?)?;
        let h1 = self.exp.spin.as_ref();
        let mut table = Table::new("exchange", &["case", "nu", "defect"]);
        let mut worst = 0.0f64;
        for (label, parity, input) in [
            ("boson", Parity::Boson, st.symmetrize()?),
            ("fermion", Parity::Fermion, st.antisymmetrize()?),
        ] {
            for &nu in &s.nu {
                let part = Partition::uniform(0.0, s.t_final, nu)?;
                let d = symmetry_preservation_check(&self.exp.fields, h1, &part, &input, parity, &self.slice)?;
                worst = worst.max(d);
                table.push(vec![label.into(), nu.into(), d.into()]);
            }
        }
        let step = s.t_final / s.nu[0] as f64;
        let c = commutation_defect(&self.exp.fields, h1, 0.0, step, &st, &self.slice)?;
        worst = worst.max(c);
        table.push(vec!["commutation".into(), 1usize.into(), c.into()]);
        let passed = worst <= self.thresholds().symmetry_defect;
        Ok(Outcome::new(passed, format!("largest defect {worst:.3e}")).metric("max_defect", json!(worst)).table(table))
    }

    fn audit_box(spec: &AuditSpec) -> AuditBox {
        AuditBox { t_max: spec.t_max, radius: spec.radius }
    }

    fn phimap(&self) -> Result<Outcome> {
        let spec = self.exp.config.phimap.as_ref().ok_or_else(|| anyhow!("config needs \"phimap\""))?;
        let audit_a = if spec.a.is_none() {
            let a = self.exp.config.audit.clone().unwrap_or_default();
            audit_assumptions(&self.exp.fields, &Self::audit_box(&a), a.samples).ok().map(|r| r.c1_convexity)
        } else {
            None
        };
        let cfg = self.exp.phi_config(audit_a)?;
        let scan = det_bound_scan(&self.exp.fields, &cfg, &spec.scan.unwrap_or_else(ScanBox::default), &spec.rho_grid)?;
        let mut table = Table::new("phimap", &["rho", "min_ratio", "max_inv_norm"]);
        for r in &scan.rows {
            table.push(vec![r.rho.into(), r.min_ratio.into(), r.max_inv_norm.into()]);
        }
        let certified = scan
            .rho_star_hat
            .map(|star| scan.rows.iter().filter(|r| r.rho <= star).map(|r| r.min_ratio).fold(f64::INFINITY, f64::min));
        let passed = certified.is_some_and(|d| d > 0.0);
        let detail = format!("rho_star_hat {:?}, certified delta {certified:?}, overall delta {:.3e}", scan.rho_star_hat, scan.delta_hat);
        Ok(Outcome::new(passed, detail)
            .metric("a", json!(cfg.a))
            .metric("delta_hat", json!(scan.delta_hat))
            .metric("rho_star_hat", json!(scan.rho_star_hat))
            .metric("certified_delta", json!(certified))
            .metric(
                "negative_determinants",
                json!(scan.rows.iter().map(|r| r.negative_determinants).collect::<Vec<_>>()),
            )
            .table(table))
    }

    fn hessian(&self) -> Result<Outcome> {
        let spec = self.exp.config.hessian.as_ref().ok_or_else(|| anyhow!("config needs \"hessian\""))?;
        let family = HessianFamily::from(&spec.family);
        let d = self.exp.fields.dim();
        let pts = self.samples(&vec![-spec.radius; d], &vec![spec.radius; d], spec.samples)?;
        let mut table = Table::new("hessian", &["index", "min_eigenvalue", "bound", "margin"]);
        let mut worst: Option<f64> = None;
        for (i, x) in pts.iter().enumerate() {
            let r = hessian_min_eig(&self.exp.fields, &family, 0.0, x)?;
            let margin = r.chain_margin();
            worst = match (worst, margin) {
                (Some(w), Some(m)) => Some(w.min(m)),
                (None, m) if i == 0 => m,
                (w, _) => w,
            };
            table.push(vec![i.into(), r.min_eigenvalue.into(), r.bound.unwrap_or(f64::NAN).into(), margin.unwrap_or(f64::NAN).into()]);
        }
        let passed = worst.is_some_and(|w| w >= self.thresholds().hessian_margin);
        let detail = match worst {
            Some(w) => format!("smallest margin {w:.3e} over {} points", pts.len()),
            None => "no lower bound is available for this family".into(),
        };
        Ok(Outcome::new(passed, detail).metric("min_margin", json!(worst)).table(table))
    }

    fn audit(&self) -> Result<Outcome> {
        let spec = self.exp.config.audit.clone().unwrap_or_default();
        let report = audit_assumptions(&self.exp.fields, &Self::audit_box(&spec), spec.samples)?;
        let mut table = Table::new("audit", &["id", "passed", "constant", "witness_t", "witness_x", "value", "bound"]);
        for c in report.checks.iter().chain(&report.alternatives) {
            let w = c.witness.as_ref();
            let x = w.map(|w| w.x.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(";")).unwrap_or_default();
            table.push(vec![
                c.id.as_str().into(),
                c.passed.into(),
                c.constant.into(),
                w.map_or(f64::NAN, |w| w.t).into(),
                Cell::Text(x),
                w.map_or(f64::NAN, |w| w.value).into(),
                w.map_or(f64::NAN, |w| w.bound).into(),
            ]);
        }
        let failed = report.failed_ids();
        let detail = if failed.is_empty() { "all inequalities hold".into() } else { format!("violated: {}", failed.join(", ")) };
        Ok(Outcome::new(report.passed(), detail).metric("report", serde_json::to_value(&report)?).table(table))
    }

    fn consistency(&self) -> Result<Outcome> {
        let spec = self.exp.config.consistency.as_ref().ok_or_else(|| anyhow!("config needs \"consistency\""))?;
        let f = self.exp.initial_state()?;
        let lc = local_consistency(&self.exp.fields, self.exp.spin.as_ref(), &f, &spec.rhos, &self.slice.kernel, &self.cn)?;
        let mut table = Table::new("consistency", &["rho", "error", "reference_error", "kept"]);
        for r in &lc.rows {
            table.push(vec![r.rho.into(), r.error.into(), r.reference_error.into(), r.kept.into()]);
        }
        let slope = lc.fit.map(|f| f.slope);
        let passed = slope.is_some_and(|s| s >= self.thresholds().consistency_slope);
        Ok(Outcome::new(passed, format!("slope {slope:?}")).metric("slope", json!(slope)).table(table))
    }
}
