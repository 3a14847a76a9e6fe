//! Dense application of the short-time propagator on a grid.
//!
//! For `s < t` and `ρ = t − s` the output at node `x_i` is
//!
//! ```text
//! (m/(2πρ))^{D/2} e^{−iπD/4} h^D Σ_j w(|x_i − y_j|) e^{i S(x_i, y_j)} f(y_j)
//! ```
//!
//! with `S` the straight-segment action. Kernel entries are generated on the
//! fly; every output node sums its terms in a fixed pairwise order, so the
//! result does not depend on the number of worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{ActionEvaluator, StraightSegment, DEFAULT_QUAD_ORDER, MAX_CONFIG_DIM};
use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::grid::{Grid, GridState};
use crate::linalg::CMat;
use crate::spin::{spin_transport_with, transport_between, SpinHamiltonian, TransportOptions};
use crate::sum::pairwise_sum_c;

pub const DEFAULT_P_MAX: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperShape {
    /// `C^∞` step built from `e^{−1/u}`.
    Smooth,
    RaisedCosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub enabled: bool,
    /// Overrides the recommended radius from [`check_sampling`].
    pub radius: Option<f64>,
    /// Fraction of the radius over which the taper falls from 1 to 0.
    pub taper_fraction: f64,
    pub shape: TaperShape,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            enabled: true,
            radius: None,
            taper_fraction: 0.6,
            shape: TaperShape::Smooth,
        }
    }
}

impl Window {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    #[inline]
    pub fn weight(&self, r: f64, radius: f64) -> f64 {
        if !self.enabled {
            return 1.0;
        }
        if r >= radius {
            return 0.0;
        }
        let q = self.taper_fraction;
        let u = ((r - (1.0 - q) * radius) / (q * radius)).clamp(0.0, 1.0);
        if u == 0.0 {
            return 1.0;
        }
        if u == 1.0 {
            return 0.0;
        }
        match self.shape {
            TaperShape::RaisedCosine => 0.5 * (1.0 + (PI * u).cos()),
            TaperShape::Smooth => {
                let a = (-1.0 / (1.0 - u)).exp();
                let b = (-1.0 / u).exp();
                a / (a + b)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub quad_order: usize,
    pub window: Window,
    /// Momentum bound used by the sampling rule.
    pub p_max: f64,
    /// Apply even when the sampling rule fails.
    pub force: bool,
    pub transport: TransportSettings,
}

/// Serializable mirror of [`TransportOptions`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportSettings {
    pub substeps: usize,
    pub unitarity_tol: f64,
    pub accuracy_tol: f64,
    pub max_substeps: usize,
}

impl Default for TransportSettings {
    fn default() -> Self {
        let t = TransportOptions::default();
        Self {
            substeps: t.substeps,
            unitarity_tol: t.unitarity_tol,
            accuracy_tol: t.accuracy_tol,
            max_substeps: t.max_substeps,
        }
    }
}

impl From<TransportSettings> for TransportOptions {
    fn from(t: TransportSettings) -> Self {
        Self {
            substeps: t.substeps,
            unitarity_tol: t.unitarity_tol,
            accuracy_tol: t.accuracy_tol,
            max_substeps: t.max_substeps,
        }
    }
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            quad_order: DEFAULT_QUAD_ORDER,
            window: Window::default(),
            p_max: DEFAULT_P_MAX,
            force: false,
            transport: TransportSettings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDiagnostics {
    pub ok: bool,
    pub fresnel_ok: bool,
    pub momentum_ok: bool,
    /// `√(2πρ/m)`.
    pub fresnel_width: f64,
    /// Largest admissible spacing under both rules.
    pub required_h: f64,
    pub h: f64,
    /// Recommended kernel radius: the distance at which the free chirp
    /// reaches the grid Nyquist frequency, `πρ/(m h)`.
    pub window_radius: f64,
    /// Radius of the region feeding stationary-phase contributions for
    /// momenta up to `p_max`: `4 p_max ρ/m + 6√(ρ/m)`.
    pub stationary_radius: f64,
}

pub fn check_sampling(grid: &Grid, rho: f64, m: f64, p_max: f64) -> Result<SamplingDiagnostics> {
    if !(rho > 0.0) {
        return Err(Error::Input(format!(
            "sampling check needs rho > 0, got {rho}"
        )));
    }
    let h = grid.max_spacing();
    let fresnel_width = (2.0 * PI * rho / m).sqrt();
    let fresnel_h = fresnel_width / 4.0;
    let momentum_h = if p_max > 0.0 {
        PI / (4.0 * p_max)
    } else {
        f64::INFINITY
    };
    let fresnel_ok = h <= fresnel_h;
    let momentum_ok = h <= momentum_h;
    Ok(SamplingDiagnostics {
        ok: fresnel_ok && momentum_ok,
        fresnel_ok,
        momentum_ok,
        fresnel_width,
        required_h: fresnel_h.min(momentum_h),
        h,
        window_radius: PI * rho / (m * h),
        stationary_radius: 4.0 * p_max * rho / m + 6.0 * (rho / m).sqrt(),
    })
}

/// How the source nodes are traversed for one output node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Traversal {
    RowMajor,
    /// Two isotropic axes: traversal chosen so that swapping the axes of
    /// input and output permutes identical terms in identical order.
    ExchangeSymmetric,
}

struct Plan<'a> {
    grid: &'a Grid,
    action: ActionEvaluator<'a>,
    s: f64,
    t: f64,
    radius: f64,
    window: Window,
    reach: Vec<usize>,
    coords: Vec<Vec<f64>>,
    prefactor: Complex64,
    traversal: Traversal,
}

impl<'a> Plan<'a> {
    fn new(fs: &'a FieldSet, s: f64, t: f64, grid: &'a Grid, opts: &KernelOptions) -> Result<Self> {
        let dim = grid.dim();
        if dim != fs.config_dim() {
            return Err(Error::Dimension {
                expected: fs.config_dim(),
                got: dim,
            });
        }
        if dim > MAX_CONFIG_DIM {
            return Err(Error::Input(format!(
                "grid dimension {dim} exceeds {MAX_CONFIG_DIM}"
            )));
        }
        let rho = t - s;
        let m = fs.mass();
        let diag = check_sampling(grid, rho, m, opts.p_max)?;
        if !diag.ok && !opts.force {
            return Err(Error::Sampling(format!(
                "h = {:.4e} exceeds the admissible spacing {:.4e} for rho = {rho:.4e} (Fresnel ok: {}, momentum ok: {})",
                diag.h, diag.required_h, diag.fresnel_ok, diag.momentum_ok
            )));
        }
        let radius = opts.window.radius.unwrap_or(diag.window_radius);
        let reach = (0..dim)
            .map(|k| {
                if opts.window.enabled {
                    ((radius / grid.spacing(k)).ceil() as usize).min(grid.points()[k])
                } else {
                    grid.points()[k]
                }
            })
            .collect();
        let d = dim as f64;
        let prefactor = Complex64::from_polar((m / (2.0 * PI * rho)).powf(d / 2.0), -PI * d / 4.0)
            * grid.cell_volume();
        let traversal = if dim == 2 && fs.particles() == 2 && grid.is_isotropic() {
            Traversal::ExchangeSymmetric
        } else {
            Traversal::RowMajor
        };
        Ok(Self {
            grid,
            action: ActionEvaluator::new(fs, opts.quad_order)?,
            s,
            t,
            radius,
            window: opts.window,
            reach,
            coords: (0..dim).map(|k| grid.axis_coords(k)).collect(),
            prefactor,
            traversal,
        })
    }

    fn range(&self, axis: usize, i: usize) -> std::ops::Range<usize> {
        let n = self.grid.points()[axis];
        let r = self.reach[axis];
        i.saturating_sub(r)..(i + r + 1).min(n)
    }

    /// Visits the sources of `out` in the canonical order. Two consecutive
    /// terms that must be added before entering the sum are followed by
    /// [`Source::Pair`].
    fn for_each_source(&self, out: &[usize], x: &[f64], mut visit: impl FnMut(Source<'_>)) {
        let dim = self.grid.dim();
        let mut y = [0.0; MAX_CONFIG_DIM];
        let mut term = |src: &[usize], visit: &mut dyn FnMut(Source<'_>)| {
            let mut r2 = 0.0;
            for k in 0..dim {
                y[k] = self.coords[k][src[k]];
                let dx = x[k] - y[k];
                r2 += dx * dx;
            }
            let w = self.window.weight(r2.sqrt(), self.radius);
            if w == 0.0 {
                return false;
            }
            let phase = self.action.eval(self.s, self.t, &y[..dim], x);
            visit(Source::Term {
                node: self.grid.flatten(src),
                kernel: Complex64::from_polar(w, phase),
                y: &y[..dim],
            });
            true
        };
        match self.traversal {
            Traversal::RowMajor => {
                let ranges: Vec<_> = (0..dim).map(|k| self.range(k, out[k])).collect();
                let mut src: Vec<usize> = ranges.iter().map(|r| r.start).collect();
                if ranges.iter().any(|r| r.is_empty()) {
                    return;
                }
                loop {
                    term(&src, &mut visit);
                    let mut k = dim;
                    loop {
                        if k == 0 {
                            return;
                        }
                        k -= 1;
                        src[k] += 1;
                        if src[k] < ranges[k].end {
                            break;
                        }
                        src[k] = ranges[k].start;
                    }
                }
            }
            Traversal::ExchangeSymmetric => {
                let (i1, i2) = (out[0], out[1]);
                let (r1, r2) = (self.range(0, i1), self.range(1, i2));
                match i1.cmp(&i2) {
                    std::cmp::Ordering::Less => {
                        for j1 in r1.clone() {
                            for j2 in r2.clone() {
                                term(&[j1, j2], &mut visit);
                            }
                        }
                    }
                    std::cmp::Ordering::Greater => {
                        for j2 in r2.clone() {
                            for j1 in r1.clone() {
                                term(&[j1, j2], &mut visit);
                            }
                        }
                    }
                    std::cmp::Ordering::Equal => {
                        for j1 in r1.clone() {
                            for j2 in j1..r2.end {
                                if j2 < r2.start {
                                    continue;
                                }
                                if j1 == j2 {
                                    term(&[j1, j2], &mut visit);
                                } else {
                                    let a = term(&[j1, j2], &mut visit);
                                    let b = term(&[j2, j1], &mut visit);
                                    if a && b {
                                        visit(Source::Pair);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

enum Source<'a> {
    Term {
        node: usize,
        kernel: Complex64,
        y: &'a [f64],
    },
    Pair,
}

fn check_finite(values: &[Complex64], spin_dim: usize) -> Result<()> {
    match values
        .iter()
        .position(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        Some(i) => Err(Error::Numeric {
            node: i / spin_dim,
            detail: "kernel produced a non-finite value".into(),
        }),
        None => Ok(()),
    }
}

/// Folds the last two buffered terms into one when the traversal pairs them.
fn fold_pair(buf: &mut Vec<Complex64>) {
    let b = buf.pop().expect("pair has two terms");
    let a = buf.pop().expect("pair has two terms");
    buf.push(a + b);
}

/// Applies `C(t, s)` to a scalar state.
pub fn apply_short_time(
    fs: &FieldSet,
    s: f64,
    t: f64,
    f: &GridState,
    opts: &KernelOptions,
) -> Result<GridState> {
    if f.spin_dim() != 1 {
        return Err(Error::Input(format!(
            "scalar propagator needs spin_dim 1, got {}; use the spin variant",
            f.spin_dim()
        )));
    }
    if t < s {
        return Err(Error::Input(format!(
            "propagator needs s <= t, got s={s}, t={t}"
        )));
    }
    if s == t {
        return Ok(f.clone());
    }
    let grid = f.grid();
    let plan = Plan::new(fs, s, t, grid, opts)?;
    let input = f.values();
    let dim = grid.dim();
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || (Vec::<Complex64>::new(), vec![0usize; dim]),
            |(buf, out), idx| {
                buf.clear();
                grid.unflatten(idx, out);
                let x: Vec<f64> = (0..dim).map(|k| plan.coords[k][out[k]]).collect();
                plan.for_each_source(out, &x, |src| match src {
                    Source::Term { node, kernel, .. } => buf.push(kernel * input[node]),
                    Source::Pair => fold_pair(buf),
                });
                plan.prefactor * pairwise_sum_c(buf)
            },
        )
        .collect();
    check_finite(&values, 1)?;
    let mut out = f.with_values(values)?;
    out.time = t;
    Ok(out)
}

/// Applies the spin propagator: each kernel entry carries the transport
/// matrix of the segment from `y_j` to `x_i`.
pub fn apply_short_time_spin(
    fs: &FieldSet,
    h1: &SpinHamiltonian,
    s: f64,
    t: f64,
    f: &GridState,
    opts: &KernelOptions,
) -> Result<GridState> {
    let l = f.spin_dim();
    if h1.degree() != l {
        return Err(Error::Dimension {
            expected: h1.degree(),
            got: l,
        });
    }
    if t < s {
        return Err(Error::Input(format!(
            "propagator needs s <= t, got s={s}, t={t}"
        )));
    }
    if s == t {
        return Ok(f.clone());
    }
    let grid = f.grid();
    let plan = Plan::new(fs, s, t, grid, opts)?;
    let input = f.values();
    let dim = grid.dim();
    let topts: TransportOptions = opts.transport.into();
    let constant = if h1.is_constant() {
        Some(spin_transport_with(
            h1,
            &StraightSegment::new(s, t, vec![0.0; dim], vec![0.0; dim])?,
            &topts,
        )?)
    } else {
        None
    };
    let nodes: Vec<Result<Vec<Complex64>>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let mut out = vec![0usize; dim];
            grid.unflatten(idx, &mut out);
            let x: Vec<f64> = (0..dim).map(|k| plan.coords[k][out[k]]).collect();
            let mut comps: Vec<Vec<Complex64>> = vec![Vec::new(); l];
            let mut err = None;
            let mut fy = vec![Complex64::new(0.0, 0.0); l];
            plan.for_each_source(&out, &x, |source| {
                let (src, k, y) = match source {
                    Source::Pair => {
                        for c in comps.iter_mut() {
                            fold_pair(c);
                        }
                        return;
                    }
                    Source::Term { node, kernel, y } => (node, kernel, y),
                };
                if err.is_some() {
                    return;
                }
                let transport = match &constant {
                    Some(c) => Ok(c.clone()),
                    None => transport_between(h1, s, t, y, &x, &topts),
                };
                match transport {
                    Ok(fm) => {
                        fm.apply(&input[src * l..(src + 1) * l], &mut fy);
                        for (c, v) in comps.iter_mut().zip(&fy) {
                            c.push(k * v);
                        }
                    }
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok(comps
                .iter()
                .map(|c| plan.prefactor * pairwise_sum_c(c))
                .collect())
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len() * l);
    for node in nodes {
        values.extend(node?);
    }
    check_finite(&values, l)?;
    let mut out = f.with_values(values)?;
    out.time = t;
    Ok(out)
}

/// `apply_short_time` or its spin variant depending on `h1`.
pub fn apply_step(
    fs: &FieldSet,
    h1: Option<&SpinHamiltonian>,
    s: f64,
    t: f64,
    f: &GridState,
    opts: &KernelOptions,
) -> Result<GridState> {
    match h1 {
        Some(h) => apply_short_time_spin(fs, h, s, t, f, opts),
        None if f.spin_dim() == 1 => apply_short_time(fs, s, t, f, opts),
        None => {
            let zero = SpinHamiltonian::zero(f.spin_dim(), f.grid().dim());
            apply_short_time_spin(fs, &zero, s, t, f, opts)
        }
    }
}

/// `exp(−iHρ)` applied to every node of a spin state.
pub fn apply_spin_matrix(m: &CMat, f: &GridState) -> Result<GridState> {
    let l = f.spin_dim();
    if m.n() != l {
        return Err(Error::Dimension {
            expected: l,
            got: m.n(),
        });
    }
    let mut values = vec![Complex64::new(0.0, 0.0); f.values().len()];
    for (src, dst) in f.values().chunks_exact(l).zip(values.chunks_exact_mut(l)) {
        m.apply(src, dst);
    }
    f.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GaussianPacket;
    use crate::poly::PolySpaceTime as Poly;
    use crate::spin::pauli;

    #[test]
    fn sampling_examples() {
        let g = Grid::uniform(1, 12.0, 512).unwrap();
        let d = check_sampling(&g, 1.0 / 64.0, 1.0, 6.0).unwrap();
        assert!(d.ok);
        assert!((d.fresnel_width / 4.0 - (2.0 * PI / 64.0).sqrt() / 4.0).abs() < 1e-15);
        let d = check_sampling(&g, 1.0 / 4096.0, 1.0, 6.0).unwrap();
        assert!(!d.ok && !d.fresnel_ok);
        assert!(
            check_sampling(&Grid::uniform(1, 12.0, 8).unwrap(), 1e6, 1.0, 0.0)
                .unwrap()
                .ok
        );
        assert!(check_sampling(&g, 0.0, 1.0, 6.0).is_err());
    }

    #[test]
    fn window_shapes() {
        let w = Window::default();
        assert_eq!(w.weight(0.0, 1.0), 1.0);
        assert_eq!(w.weight(0.4, 1.0), 1.0);
        assert_eq!(w.weight(1.0, 1.0), 0.0);
        assert!((w.weight(0.7, 1.0) - 0.5).abs() < 1e-15);
        let c = Window {
            shape: TaperShape::RaisedCosine,
            taper_fraction: 0.2,
            ..Window::default()
        };
        assert!((c.weight(0.9, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(Window::disabled().weight(5.0, 1.0), 1.0);
    }

    #[test]
    fn coincident_times_return_input() {
        let g = Grid::uniform(1, 4.0, 16).unwrap();
        let f = GridState::gaussian(g, &GaussianPacket::standard(1));
        let fs = FieldSet::scalar(1.0, 1, 1.0, Poly::coordinate(1, 0).pow(4)).unwrap();
        let out = apply_short_time(&fs, 0.3, 0.3, &f, &KernelOptions::default()).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn refuses_coarse_grid_unless_forced() {
        let g = Grid::uniform(1, 12.0, 64).unwrap();
        let f = GridState::gaussian(g, &GaussianPacket::standard(1));
        let fs = FieldSet::free(1.0, 1);
        let opts = KernelOptions::default();
        assert!(matches!(
            apply_short_time(&fs, 0.0, 0.01, &f, &opts),
            Err(Error::Sampling(_))
        ));
        let forced = KernelOptions {
            force: true,
            ..opts
        };
        assert!(apply_short_time(&fs, 0.0, 0.01, &f, &forced).is_ok());
    }

    #[test]
    fn free_gaussian_single_slice() {
        let g = Grid::uniform(1, 12.0, 512).unwrap();
        let p = GaussianPacket::standard(1);
        let f = GridState::gaussian(g.clone(), &p);
        let fs = FieldSet::free(1.0, 1);
        let u = apply_short_time(&fs, 0.0, 0.5, &f, &KernelOptions::default()).unwrap();
        let exact = GridState::from_fn(g, |x| p.evolve_free(0.5, 1.0, x));
        assert!(u.distance(&exact).unwrap() < 1e-3);
    }

    #[test]
    fn linear_in_the_input() {
        let g = Grid::uniform(1, 6.0, 128).unwrap();
        let fs = FieldSet::scalar(1.0, 1, 1.0, Poly::coordinate(1, 0).pow(4)).unwrap();
        let a = GridState::gaussian(g.clone(), &GaussianPacket::standard(1));
        let b = GridState::gaussian(
            g,
            &GaussianPacket {
                center: vec![1.0],
                width: 0.7,
                momentum: vec![0.5],
            },
        );
        let alpha = Complex64::new(0.3, -1.2);
        let opts = KernelOptions::default();
        let lhs = apply_short_time(
            &fs,
            0.0,
            0.1,
            &a.with_values(
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| x + alpha * y)
                    .collect(),
            )
            .unwrap(),
            &opts,
        )
        .unwrap();
        let ua = apply_short_time(&fs, 0.0, 0.1, &a, &opts).unwrap();
        let ub = apply_short_time(&fs, 0.0, 0.1, &b, &opts).unwrap();
        let rhs = ua
            .with_values(
                ua.values()
                    .iter()
                    .zip(ub.values())
                    .map(|(x, y)| x + alpha * y)
                    .collect(),
            )
            .unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-13);
    }

    #[test]
    fn constant_spin_coupling_factors_out() {
        let g = Grid::uniform(1, 6.0, 128).unwrap();
        let fs = FieldSet::scalar(1.0, 1, 1.0, Poly::coordinate(1, 0).pow(4)).unwrap();
        let [sx, _, sz] = pauli();
        let hm = sx.scale(0.4.into()).add(&sz.scale((-0.9).into()));
        let h1 = SpinHamiltonian::constant(hm.clone(), 1).unwrap();
        let spinor = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let f =
            GridState::from_fn_spinor(g.clone(), &spinor, |x| GaussianPacket::standard(1).eval(x));
        let opts = KernelOptions::default();
        let u = apply_short_time_spin(&fs, &h1, 0.0, 0.1, &f, &opts).unwrap();

        let scalar = apply_short_time(
            &fs,
            0.0,
            0.1,
            &GridState::gaussian(g, &GaussianPacket::standard(1)),
            &opts,
        )
        .unwrap();
        let expect = apply_spin_matrix(
            &hm.expm_hermitian(0.1),
            &GridState::from_fn_spinor(scalar.grid().clone(), &spinor, |x| {
                let i = ((x[0] + 6.0) / scalar.grid().spacing(0)).floor() as usize;
                scalar.values()[i]
            }),
        )
        .unwrap();
        assert!(u.distance(&expect).unwrap() < 1e-10);

        let zero = SpinHamiltonian::zero(2, 1);
        let u0 = apply_short_time_spin(&fs, &zero, 0.0, 0.1, &f, &opts).unwrap();
        for (node, v) in scalar.values().iter().enumerate() {
            for s in 0..2 {
                assert!((u0.values()[node * 2 + s] - v * spinor[s]).norm() < 1e-14);
            }
        }
    }
}
