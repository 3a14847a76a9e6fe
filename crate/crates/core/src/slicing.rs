//! Time-sliced composition of short-time propagators and the studies built
//! on it: convergence against a reference, stability and gauge covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{gauge_transform, FieldSet, GaugeFunction};
use crate::fit::{fit_loglog, LineFit};
use crate::grid::GridState;
use crate::kernel::{apply_step, KernelOptions};
use crate::reference::{cn_trajectory, CnOptions, INTERIOR_FRACTION};
use crate::spin::SpinHamiltonian;

pub const DEFAULT_RHO_STAR: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Input("a partition needs at least two times".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!("partition times must be finite and strictly increasing: {times:?}")));
        }
        Ok(Self { times })
    }

    /// `nu` equal slices of `[start, end]`.
    pub fn uniform(start: f64, end: f64, nu: usize) -> Result<Self> {
        if nu == 0 {
            return Err(Error::Input("a partition needs nu >= 1".into()));
        }
        let step = (end - start) / nu as f64;
        let mut times: Vec<f64> = (0..nu).map(|j| start + j as f64 * step).collect();
        times.push(end);
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn nu(&self) -> usize {
        self.times.len() - 1
    }

    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn check_mesh(&self, rho_star: f64) -> Result<()> {
        if self.mesh() > rho_star {
            return Err(Error::Input(format!(
                "partition mesh {:.4e} exceeds rho* = {rho_star:.4e}",
                self.mesh()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceOptions {
    pub kernel: KernelOptions,
    pub rho_star: f64,
    /// Return the state at every partition time, not only the last.
    pub keep_intermediate: bool,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self { kernel: KernelOptions::default(), rho_star: DEFAULT_RHO_STAR, keep_intermediate: false }
    }
}

/// Applies the slices of `part` in order. The last element is `K_Δ f`.
pub fn compose(
    fs: &FieldSet,
    h1: Option<&SpinHamiltonian>,
    part: &Partition,
    f: &GridState,
    opts: &SliceOptions,
) -> Result<Vec<GridState>> {
    part.check_mesh(opts.rho_star)?;
    let mut out = Vec::with_capacity(if opts.keep_intermediate { part.nu() + 1 } else { 1 });
    let mut u = f.clone();
    u.time = part.start();
    if opts.keep_intermediate {
        out.push(u.clone());
    }
    for w in part.times().windows(2) {
        u = apply_step(fs, h1, w[0], w[1], &u, &opts.kernel)?;
        if opts.keep_intermediate {
            out.push(u.clone());
        }
    }
    if !opts.keep_intermediate {
        out.push(u);
    }
    Ok(out)
}

/// Reference solution with checkpoints and an estimate of its own error.
#[derive(Clone, Debug)]
pub struct Reference {
    /// States at `times`, the last one being the final time.
    pub states: Vec<GridState>,
    pub times: Vec<f64>,
    /// Interior-L² error estimate of the final state.
    pub accuracy: f64,
}

impl Reference {
    /// A reference known in closed form.
    pub fn exact(states: Vec<GridState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Input("reference needs at least one state".into()));
        }
        let times = states.iter().map(|s| s.time).collect();
        Ok(Self { states, times, accuracy: 0.0 })
    }

    /// Crank–Nicolson at `dt` and `dt/2`; the finer run is kept and the
    /// error estimated as a third of their difference.
    pub fn crank_nicolson(
        fs: &FieldSet,
        h1: Option<&SpinHamiltonian>,
        f: &GridState,
        times: &[f64],
        dt: f64,
        opts: &CnOptions,
    ) -> Result<Self> {
        let (coarse, _) = cn_trajectory(fs, h1, f, times, dt, opts)?;
        let (fine, _) = cn_trajectory(fs, h1, f, times, dt / 2.0, opts)?;
        let accuracy = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| a.interior_distance(b, INTERIOR_FRACTION))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max)
            / 3.0;
        Ok(Self { states: fine, times: times.to_vec(), accuracy })
    }

    pub fn final_state(&self) -> &GridState {
        self.states.last().expect("reference has a final state")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub nu: usize,
    pub mesh: f64,
    pub l2_error: f64,
    pub norm_ratio: f64,
    /// Largest error over the reference checkpoints that are partition times.
    pub uniform_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub fit: LineFit,
    pub reference_accuracy: f64,
    pub t_final: f64,
}

impl ConvergenceTable {
    pub fn slope(&self) -> f64 {
        self.fit.slope
    }

    /// Halving the mesh lowers the error for every consecutive pair of rows.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].l2_error < w[0].l2_error)
    }

    pub fn uniform_is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].uniform_error < w[0].uniform_error)
    }

    /// Smallest `K ≥ 0` with `‖K_Δ f‖/‖f‖ ≤ e^{K t}` for every row.
    pub fn stability_constant(&self) -> f64 {
        self.rows.iter().map(|r| r.norm_ratio.ln() / self.t_final).fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("nu,mesh,l2_error,norm_ratio\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", r.nu, r.mesh, r.l2_error, r.norm_ratio));
        }
        s
    }
}

/// Errors of `K_Δ f` against `reference` for uniform partitions of
/// `[f.time, t_final]` with the given slice counts.
pub fn convergence_study(
    fs: &FieldSet,
    h1: Option<&SpinHamiltonian>,
    f: &GridState,
    t_final: f64,
    nus: &[usize],
    reference: &Reference,
    opts: &SliceOptions,
) -> Result<ConvergenceTable> {
    if nus.len() < 2 || nus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input(format!("slice counts must be ascending with at least two entries: {nus:?}")));
    }
    let last = *reference.times.last().ok_or_else(|| Error::Input("empty reference".into()))?;
    if (last - t_final).abs() > 1e-12 * t_final.abs().max(1.0) {
        return Err(Error::Input(format!("reference ends at {last}, study at {t_final}")));
    }
    let n0 = f.norm();
    let mut rows = Vec::with_capacity(nus.len());
    for &nu in nus {
        let part = Partition::uniform(f.time, t_final, nu)?;
        let states = compose(fs, h1, &part, f, &SliceOptions { keep_intermediate: true, ..*opts })?;
        let u = states.last().expect("composition yields a state");
        let l2_error = u.interior_distance(reference.final_state(), INTERIOR_FRACTION)?;
        let mut uniform_error: f64 = 0.0;
        for (tr, sr) in reference.times.iter().zip(&reference.states) {
            if let Some(j) = part.times().iter().position(|tp| (tp - tr).abs() <= 1e-12 * tr.abs().max(1.0)) {
                uniform_error = uniform_error.max(states[j].interior_distance(sr, INTERIOR_FRACTION)?);
            }
        }
        rows.push(ConvergenceRow { nu, mesh: part.mesh(), l2_error, norm_ratio: u.norm() / n0, uniform_error });
    }
    let finest = rows.iter().map(|r| r.l2_error).fold(f64::INFINITY, f64::min);
    if reference.accuracy > 0.1 * finest {
        return Err(Error::Reference(format!(
            "reference error {:.3e} is not below a tenth of the finest slicing error {finest:.3e}",
            reference.accuracy
        )));
    }
    let (mesh, err): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.mesh, r.l2_error.max(f64::MIN_POSITIVE))).unzip();
    let fit = fit_loglog(&mesh, &err)?;
    Ok(ConvergenceTable { rows, fit, reference_accuracy: reference.accuracy, t_final: t_final - f.time })
}

/// `‖K'_Δ f − e^{iψ(t)} K_Δ(e^{−iψ(0)} f)‖ / ‖f‖` with `K'_Δ` built from the
/// gauge-transformed fields.
pub fn gauge_covariance_check(
    fs: &FieldSet,
    h1: Option<&SpinHamiltonian>,
    g: &GaugeFunction,
    part: &Partition,
    f: &GridState,
    opts: &SliceOptions,
) -> Result<f64> {
    let transformed = gauge_transform(fs, g)?;
    let opts = SliceOptions { keep_intermediate: false, ..*opts };
    let (t0, t1) = (part.start(), part.end());
    let lhs = compose(&transformed, h1, part, f, &opts)?.pop().expect("composition yields a state");
    let shifted = f.phase_multiplied(|x| -g.config_phase(t0, x));
    let rhs = compose(fs, h1, part, &shifted, &opts)?
        .pop()
        .expect("composition yields a state")
        .phase_multiplied(|x| g.config_phase(t1, x));
    Ok(lhs.distance(&rhs)? / f.norm())
}
