//! The phase-space map `Φ(t, s; x, y, z)` that turns the composed kernel
//! into a Fourier integral, its Jacobian split into field contributions, its
//! inverse in `z`, and an empirical scan of the determinant lower bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::AuditReport;
use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::linalg::{det, inverse, solve};
use crate::poly::PolySpaceTime as Poly;
use crate::quad::GaussLegendre;
use crate::sobol::Sobol;

pub const MIN_QUAD_ORDER: usize = 4;
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
/// Largest accepted gap between the Jacobian and its finite-difference check.
pub const FD_TOL: f64 = 1e-6;

/// How the magnetic contribution enters `Φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiVariant {
    /// `B` sampled along the sliced path.
    TimeSliced,
    /// Only `∂B/∂t` enters, weighted by an extra factor `ρ`.
    TimeDerivative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiConfig {
    pub variant: PhiVariant,
    /// Gauss–Legendre points per axis; raised when the fields need more.
    pub quad_order: usize,
    /// Convexity shift subtracted from the symmetric electric derivative.
    pub a: f64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self { variant: PhiVariant::TimeDerivative, quad_order: 8, a: 0.0 }
    }
}

impl PhiConfig {
    pub fn new(variant: PhiVariant, quad_order: usize, a: f64) -> Result<Self> {
        if quad_order < MIN_QUAD_ORDER {
            return Err(Error::Input(format!("quad_order must be >= {MIN_QUAD_ORDER}, got {quad_order}")));
        }
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::Input(format!("a must be finite and >= 0, got {a}")));
        }
        Ok(Self { variant, quad_order, a })
    }

    /// Takes `a` from the convexity constant fitted by the audit.
    pub fn from_audit(report: &AuditReport, variant: PhiVariant) -> Result<Self> {
        Self::new(variant, 8, report.c1_convexity.max(0.0))
    }
}

/// `∂Φ/∂z` and its parts, each `d × d` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianDecomposition {
    pub identity: Vec<f64>,
    /// `ρ² E′₀`
    pub electric_symmetric: Vec<f64>,
    /// `−ρ² a / 6 · I`
    pub shift: Vec<f64>,
    /// `ρ² E′₁`
    pub electric_antisymmetric: Vec<f64>,
    /// `B′`
    pub magnetic: Vec<f64>,
    pub total: Vec<f64>,
}

impl JacobianDecomposition {
    /// Largest entry of `total − Σ parts`.
    pub fn sum_defect(&self) -> f64 {
        (0..self.total.len())
            .map(|i| {
                let parts = self.identity[i]
                    + self.electric_symmetric[i]
                    + self.shift[i]
                    + self.electric_antisymmetric[i]
                    + self.magnetic[i];
                (self.total[i] - parts).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Field polynomials and quadrature rules prepared for repeated evaluation.
pub struct PhiMap<'a> {
    fs: &'a FieldSet,
    cfg: PhiConfig,
    d: usize,
    /// `∂_l E_j` at `j·d + l`
    de: Vec<Poly>,
    /// `B_jk` at `j·d + k`, antisymmetric
    b: Vec<Poly>,
    /// `∂_l B_jk` at `(j·d + k)·d + l`
    db: Vec<Poly>,
    bt: Vec<Poly>,
    dbt: Vec<Poly>,
    sigma: GaussLegendre,
    theta: GaussLegendre,
    line: GaussLegendre,
}

fn degree(p: &Poly) -> u32 {
    p.degree_x() + p.degree_t()
}

impl<'a> PhiMap<'a> {
    pub fn new(fs: &'a FieldSet, cfg: PhiConfig) -> Result<Self> {
        if fs.particles() != 1 {
            return Err(Error::Input("the phase map is defined for a single particle".into()));
        }
        PhiConfig::new(cfg.variant, cfg.quad_order, cfg.a)?;
        let d = fs.dim();
        let e = fs.electric();
        let de: Vec<Poly> = (0..d * d).map(|i| e[i / d].deriv_x(i % d)).collect();
        let b: Vec<Poly> = (0..d * d)
            .map(|i| {
                let (j, k) = (i / d, i % d);
                match j.cmp(&k) {
                    std::cmp::Ordering::Less => fs.magnetic(j, k).cloned().expect("j < k"),
                    std::cmp::Ordering::Greater => -fs.magnetic(k, j).expect("k < j"),
                    std::cmp::Ordering::Equal => Poly::zero(d),
                }
            })
            .collect();
        let db: Vec<Poly> = (0..d * d * d).map(|i| b[i / d].deriv_x(i % d)).collect();
        let bt: Vec<Poly> = b.iter().map(Poly::deriv_t).collect();
        let dbt: Vec<Poly> = (0..d * d * d).map(|i| bt[i / d].deriv_x(i % d)).collect();
        let field_degree = e.iter().chain(&b).chain(&bt).map(degree).max().unwrap_or(0);
        let need = |deg: u32| ((deg as usize + 2) / 2).max(cfg.quad_order);
        let line_degree = fs.vector_potential().iter().map(|a| a.degree_x()).max().unwrap_or(0);
        Ok(Self {
            fs,
            cfg,
            d,
            de,
            b,
            db,
            bt,
            dbt,
            sigma: GaussLegendre::new(need(field_degree + 3)),
            theta: GaussLegendre::new(need(field_degree)),
            line: GaussLegendre::new(need(line_degree)),
        })
    }

    pub fn config(&self) -> &PhiConfig {
        &self.cfg
    }

    fn check(&self, s: f64, t: f64, pts: [&[f64]; 3]) -> Result<()> {
        if !(t > s) {
            return Err(Error::Input(format!("the phase map needs s < t, got s={s}, t={t}")));
        }
        for p in pts {
            if p.len() != self.d {
                return Err(Error::Dimension { expected: self.d, got: p.len() });
            }
        }
        Ok(())
    }

    /// Calls `f(σ₁, weight, τ, ζ)` over the tensor rule on the unit square.
    fn for_each_node(&self, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64], mut f: impl FnMut(f64, f64, f64, &[f64])) {
        let rho = t - s;
        let mut zeta = vec![0.0; self.d];
        for (s1, w1) in self.sigma.iter() {
            let tau = t - s1 * rho;
            for (s2, w2) in self.sigma.iter() {
                for k in 0..self.d {
                    zeta[k] = z[k] + s1 * (x[k] - z[k]) + s1 * s2 * (y[k] - x[k]);
                }
                f(s1, w1 * w2, tau, &zeta);
            }
        }
    }

    pub fn eval(&self, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check(s, t, [x, y, z])?;
        Ok(self.eval_unchecked(s, t, x, y, z))
    }

    fn eval_unchecked(&self, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let d = self.d;
        let rho = t - s;
        let m = self.fs.mass();
        let mut phi: Vec<f64> = (0..d).map(|j| z[j] - 0.5 * (x[j] + y[j])).collect();
        if self.fs.has_vector_potential() {
            let mut q = vec![0.0; d];
            for (th, w) in self.line.iter() {
                for k in 0..d {
                    q[k] = x[k] + th * (y[k] - x[k]);
                }
                for (j, a) in self.fs.vector_potential().iter().enumerate() {
                    phi[j] += rho / m * w * a.eval(s, &q);
                }
            }
        }
        let e = self.fs.electric();
        let mut e_int = vec![0.0; d];
        let mut b_int = vec![0.0; d * d];
        let sliced = self.cfg.variant == PhiVariant::TimeSliced && d > 1;
        self.for_each_node(s, t, x, y, z, |s1, w, tau, zeta| {
            for j in 0..d {
                e_int[j] += w * s1 * e[j].eval(tau, zeta);
            }
            if sliced {
                for i in 0..d * d {
                    if !self.b[i].is_zero() {
                        b_int[i] += w * s1 * self.b[i].eval(tau, zeta);
                    }
                }
            }
        });
        if self.cfg.variant == PhiVariant::TimeDerivative && d > 1 && self.bt.iter().any(|p| !p.is_zero()) {
            let mut zeta = vec![0.0; d];
            for (s1, w1) in self.sigma.iter() {
                for (s2, w2) in self.sigma.iter() {
                    for k in 0..d {
                        zeta[k] = z[k] + s1 * (x[k] - z[k]) + s1 * s2 * (y[k] - x[k]);
                    }
                    for (th, w3) in self.theta.iter() {
                        let tau = s + th * (1.0 - s1) * rho;
                        let w = w1 * w2 * w3 * s1 * (1.0 - s1) * rho;
                        for i in 0..d * d {
                            if !self.bt[i].is_zero() {
                                b_int[i] += w * self.bt[i].eval(tau, &zeta);
                            }
                        }
                    }
                }
            }
        }
        for j in 0..d {
            phi[j] -= rho * rho / m * e_int[j];
            let flux: f64 = (0..d).map(|k| (z[k] - x[k]) * b_int[j * d + k]).sum();
            phi[j] -= rho / m * flux;
        }
        phi
    }

    pub fn jacobian(&self, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<JacobianDecomposition> {
        self.check(s, t, [x, y, z])?;
        Ok(self.jacobian_unchecked(s, t, x, y, z))
    }

    fn jacobian_unchecked(&self, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> JacobianDecomposition {
        let d = self.d;
        let rho = t - s;
        let m = self.fs.mass();
        let mut de_int = vec![0.0; d * d];
        let mut b_int = vec![0.0; d * d];
        let mut db_int = vec![0.0; d * d * d];
        let magnetic = d > 1;
        let sliced = self.cfg.variant == PhiVariant::TimeSliced;
        self.for_each_node(s, t, x, y, z, |s1, w, tau, zeta| {
            let w2 = w * s1 * (1.0 - s1);
            for i in 0..d * d {
                de_int[i] += w2 * self.de[i].eval(tau, zeta);
            }
            if magnetic && sliced {
                for i in 0..d * d {
                    if !self.b[i].is_zero() {
                        b_int[i] += w * s1 * self.b[i].eval(tau, zeta);
                    }
                }
                for i in 0..d * d * d {
                    if !self.db[i].is_zero() {
                        db_int[i] += w2 * self.db[i].eval(tau, zeta);
                    }
                }
            }
        });
        if magnetic && !sliced && self.bt.iter().any(|p| !p.is_zero()) {
            let mut zeta = vec![0.0; d];
            for (s1, w1) in self.sigma.iter() {
                for (s2, w2) in self.sigma.iter() {
                    for k in 0..d {
                        zeta[k] = z[k] + s1 * (x[k] - z[k]) + s1 * s2 * (y[k] - x[k]);
                    }
                    for (th, w3) in self.theta.iter() {
                        let tau = s + th * (1.0 - s1) * rho;
                        let w = w1 * w2 * w3 * s1 * (1.0 - s1);
                        for i in 0..d * d {
                            if !self.bt[i].is_zero() {
                                b_int[i] += w * self.bt[i].eval(tau, &zeta);
                            }
                        }
                        for i in 0..d * d * d {
                            if !self.dbt[i].is_zero() {
                                db_int[i] += w * (1.0 - s1) * self.dbt[i].eval(tau, &zeta);
                            }
                        }
                    }
                }
            }
        }
        let r2 = rho * rho;
        let mut out = JacobianDecomposition {
            identity: vec![0.0; d * d],
            electric_symmetric: vec![0.0; d * d],
            shift: vec![0.0; d * d],
            electric_antisymmetric: vec![0.0; d * d],
            magnetic: vec![0.0; d * d],
            total: vec![0.0; d * d],
        };
        // the time-derivative variant carries one more factor of ρ
        let b_scale = if sliced { rho / m } else { r2 / m };
        for j in 0..d {
            for l in 0..d {
                let i = j * d + l;
                let delta = if j == l { 1.0 } else { 0.0 };
                out.identity[i] = delta;
                let sym = 0.5 * (de_int[i] + de_int[l * d + j]);
                let anti = 0.5 * (de_int[i] - de_int[l * d + j]);
                out.electric_symmetric[i] = r2 * (-sym / m + self.cfg.a * delta / 6.0);
                out.shift[i] = -r2 * self.cfg.a * delta / 6.0;
                out.electric_antisymmetric[i] = -r2 * anti / m;
                if magnetic {
                    let flux: f64 = (0..d).map(|k| (z[k] - x[k]) * db_int[(j * d + k) * d + l]).sum();
                    out.magnetic[i] = -b_scale * (b_int[i] + flux);
                }
                out.total[i] = out.identity[i]
                    + out.electric_symmetric[i]
                    + out.shift[i]
                    + out.electric_antisymmetric[i]
                    + out.magnetic[i];
            }
        }
        out
    }

    /// Jacobian with a central finite-difference cross-check of `total`.
    pub fn jacobian_checked(&self, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<JacobianDecomposition> {
        let jac = self.jacobian(s, t, x, y, z)?;
        let fd = self.finite_difference_jacobian(s, t, x, y, z);
        let scale = jac.total.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let gap = jac.total.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > FD_TOL * scale {
            return Err(Error::Internal(format!(
                "Jacobian differs from finite differences by {gap:.3e} at x={x:?}, y={y:?}, z={z:?}"
            )));
        }
        Ok(jac)
    }

    pub fn finite_difference_jacobian(&self, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        let mut zp = z.to_vec();
        for l in 0..d {
            let h = 1e-5 * z[l].abs().max(1.0);
            zp[l] = z[l] + h;
            let plus = self.eval_unchecked(s, t, x, y, &zp);
            zp[l] = z[l] - h;
            let minus = self.eval_unchecked(s, t, x, y, &zp);
            zp[l] = z[l];
            for j in 0..d {
                out[j * d + l] = (plus[j] - minus[j]) / (2.0 * h);
            }
        }
        out
    }

    /// Solves `Φ(t, s; x, y, z) = ξ` for `z` by Newton's method.
    pub fn invert(&self, s: f64, t: f64, x: &[f64], xi: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(s, t, [x, xi, y])?;
        let d = self.d;
        let mut z: Vec<f64> = (0..d).map(|k| xi[k] + 0.5 * (x[k] + y[k])).collect();
        for _ in 0..=NEWTON_MAX_ITER {
            let phi = self.eval_unchecked(s, t, x, y, &z);
            let r: Vec<f64> = phi.iter().zip(xi).map(|(p, q)| p - q).collect();
            if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= NEWTON_TOL {
                return Ok(z);
            }
            let jac = self.jacobian_unchecked(s, t, x, y, &z);
            let step = solve(&jac.total, d, &r)?;
            for k in 0..d {
                z[k] -= step[k];
            }
        }
        Err(Error::Convergence(format!(
            "Newton inversion did not reach {NEWTON_TOL:.0e} in {NEWTON_MAX_ITER} iterations (rho = {})",
            t - s
        )))
    }
}

pub fn phi_eval(fs: &FieldSet, cfg: &PhiConfig, s: f64, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    PhiMap::new(fs, *cfg)?.eval(s, t, x, y, z)
}

pub fn phi_jacobian(
    fs: &FieldSet,
    cfg: &PhiConfig,
    s: f64,
    t: f64,
    x: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<JacobianDecomposition> {
    PhiMap::new(fs, *cfg)?.jacobian_checked(s, t, x, y, z)
}

pub fn phi_invert(fs: &FieldSet, cfg: &PhiConfig, s: f64, t: f64, x: &[f64], xi: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    PhiMap::new(fs, *cfg)?.invert(s, t, x, xi, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanBox {
    /// Bound on every coordinate of `x`, `y`, `z`.
    pub radius: f64,
    /// Start times are drawn from `[0, t_max]`.
    pub t_max: f64,
    pub samples: usize,
}

impl Default for ScanBox {
    fn default() -> Self {
        Self { radius: 10.0, t_max: 1.0, samples: 2048 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub rho: f64,
    /// `min det(∂Φ/∂z) / (1 + ρ²|X|^{2M*})^d`
    pub min_ratio: f64,
    /// `max ‖(∂Φ/∂z)⁻¹‖_HS (1 + ρ²|X|^{2M*})` over samples with positive determinant.
    pub max_inv_norm: f64,
    pub negative_determinants: usize,
    /// `(s, x, y, z)` attaining `min_ratio`.
    pub witness: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetScan {
    pub rows: Vec<ScanRow>,
    pub delta_hat: f64,
    /// Largest `ρ` such that every grid value up to it keeps `min_ratio ≥ 0.5`.
    pub rho_star_hat: Option<f64>,
    pub samples: usize,
}

impl DetScan {
    pub fn csv(&self) -> String {
        let mut s = String::from("rho,min_ratio,max_inv_norm\n");
        for r in &self.rows {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r.rho, r.min_ratio, r.max_inv_norm));
        }
        s
    }
}

pub const RHO_STAR_THRESHOLD: f64 = 0.5;

pub fn det_bound_scan(fs: &FieldSet, cfg: &PhiConfig, bx: &ScanBox, rho_grid: &[f64]) -> Result<DetScan> {
    if rho_grid.is_empty() || rho_grid.iter().any(|r| !(*r > 0.0 && *r <= 0.5)) {
        return Err(Error::Input(format!("rho grid must be non-empty and inside (0, 0.5]: {rho_grid:?}")));
    }
    if rho_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("rho grid must be increasing".into()));
    }
    if bx.samples == 0 || !(bx.radius > 0.0) || !(bx.t_max >= 0.0) {
        return Err(Error::Input(format!("invalid scan box {bx:?}")));
    }
    let map = PhiMap::new(fs, *cfg)?;
    let d = fs.dim();
    let mut lo = vec![-bx.radius; 3 * d + 1];
    let mut hi = vec![bx.radius; 3 * d + 1];
    lo[0] = 0.0;
    hi[0] = bx.t_max;
    let points = Sobol::sample_box(3 * d + 1, bx.samples, &lo, &hi)?;
    let two_m = 2.0 * fs.m_star();
    let mut rows = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let per_sample: Vec<(f64, f64, bool)> = points
            .par_iter()
            .map(|p| {
                let s = p[0];
                let (x, rest) = p[1..].split_at(d);
                let (y, z) = rest.split_at(d);
                let jac = map.jacobian_unchecked(s, s + rho, x, y, z);
                let det_j = det(&jac.total, d);
                let big_x2: f64 = p[1..].iter().map(|v| v * v).sum();
                let weight = 1.0 + rho * rho * big_x2.powf(0.5 * two_m);
                let ratio = det_j / weight.powi(d as i32);
                let inv = if det_j > 0.0 {
                    inverse(&jac.total, d)
                        .map(|m| m.iter().map(|v| v * v).sum::<f64>().sqrt() * weight)
                        .unwrap_or(f64::INFINITY)
                } else {
                    f64::NAN
                };
                (ratio, inv, det_j <= 0.0)
            })
            .collect();
        let mut row = ScanRow {
            rho,
            min_ratio: f64::INFINITY,
            max_inv_norm: 0.0,
            negative_determinants: 0,
            witness: Vec::new(),
        };
        for (p, (ratio, inv, negative)) in points.iter().zip(per_sample) {
            if ratio < row.min_ratio {
                row.min_ratio = ratio;
                row.witness = p.clone();
            }
            if negative {
                row.negative_determinants += 1;
            } else if inv > row.max_inv_norm {
                row.max_inv_norm = inv;
            }
        }
        rows.push(row);
    }
    let delta_hat = rows.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min);
    let rho_star_hat = rows
        .iter()
        .take_while(|r| r.min_ratio >= RHO_STAR_THRESHOLD && r.negative_determinants == 0)
        .last()
        .map(|r| r.rho);
    Ok(DetScan { rows, delta_hat, rho_star_hat, samples: bx.samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1() -> Poly {
        Poly::coordinate(1, 0)
    }

    fn harmonic() -> FieldSet {
        FieldSet::scalar(1.0, 1, 0.0, x1().pow(2).scale(0.5)).unwrap()
    }

    #[test]
    fn free_map_is_a_shift() {
        let fs = FieldSet::free(1.0, 2);
        let cfg = PhiConfig::default();
        let phi = phi_eval(&fs, &cfg, 0.0, 0.3, &[1.0, 2.0], &[-1.0, 0.5], &[0.2, 0.7]).unwrap();
        assert_eq!(phi, vec![0.2, 0.7 - 1.25]);
        let jac = phi_jacobian(&fs, &cfg, 0.0, 0.3, &[1.0, 2.0], &[-1.0, 0.5], &[0.2, 0.7]).unwrap();
        assert_eq!(jac.total, vec![1.0, 0.0, 0.0, 1.0]);
        let z = phi_invert(&fs, &cfg, 0.0, 0.3, &[1.0, 2.0], &[0.4, -0.1], &[-1.0, 0.5]).unwrap();
        assert_eq!(z, vec![0.4, 1.15]);
    }

    #[test]
    fn harmonic_closed_forms() {
        let fs = harmonic();
        for variant in [PhiVariant::TimeSliced, PhiVariant::TimeDerivative] {
            let cfg = PhiConfig { variant, ..Default::default() };
            let phi = phi_eval(&fs, &cfg, 0.0, 0.5, &[1.0], &[0.0], &[2.0]).unwrap();
            assert!((phi[0] - 1.625).abs() < 1e-14);
            let jac = phi_jacobian(&fs, &cfg, 0.0, 0.5, &[1.0], &[0.0], &[2.0]).unwrap();
            assert!((jac.total[0] - (1.0 + 0.25 / 6.0)).abs() < 1e-14);
            assert!((jac.electric_symmetric[0] - 0.25 / 6.0).abs() < 1e-14);
            assert_eq!(jac.magnetic[0], 0.0);
            assert_eq!(jac.electric_antisymmetric[0], 0.0);
            let z = phi_invert(&fs, &cfg, 0.0, 0.5, &[1.0], &[1.625], &[0.0]).unwrap();
            assert!((z[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_cancels_in_total() {
        let fs = harmonic();
        let cfg = PhiConfig { a: 3.0, ..Default::default() };
        let jac = phi_jacobian(&fs, &cfg, 0.0, 0.5, &[1.0], &[0.0], &[2.0]).unwrap();
        assert!((jac.shift[0] + 0.125).abs() < 1e-15);
        assert!((jac.total[0] - (1.0 + 0.25 / 6.0)).abs() < 1e-14);
        assert!(jac.sum_defect() < 1e-15);
    }

    #[test]
    fn static_magnetic_field_drops_out_of_time_derivative_variant() {
        let y = |k| Poly::coordinate(2, k);
        // A = (−x₂, x₁)/2 gives B₁₂ = 1
        let fs = FieldSet::new(1.0, 2, 0.0, Poly::zero(2), vec![y(1).scale(-0.5), y(0).scale(0.5)]).unwrap();
        let derivative = PhiConfig { variant: PhiVariant::TimeDerivative, ..Default::default() };
        let sliced = PhiConfig { variant: PhiVariant::TimeSliced, ..Default::default() };
        let (x, yy, z) = ([1.0, -0.5], [0.3, 0.2], [0.7, 1.1]);
        let jd = phi_jacobian(&fs, &derivative, 0.0, 0.2, &x, &yy, &z).unwrap();
        assert!(jd.magnetic.iter().all(|v| *v == 0.0));
        let js = phi_jacobian(&fs, &sliced, 0.0, 0.2, &x, &yy, &z).unwrap();
        assert!(js.magnetic.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn quad_order_floor() {
        assert!(PhiConfig::new(PhiVariant::TimeSliced, 3, 0.0).is_err());
        assert!(PhiConfig::new(PhiVariant::TimeSliced, 4, -1.0).is_err());
    }

    #[test]
    fn free_scan_matches_closed_form() {
        let fs = FieldSet::free(1.0, 2);
        let rhos = [0.05, 0.1, 0.2, 0.4];
        let scan = det_bound_scan(&fs, &PhiConfig::default(), &ScanBox { samples: 64, ..Default::default() }, &rhos).unwrap();
        let expect = (1.0 + 0.4f64 * 0.4).powi(-2);
        assert!((scan.delta_hat - expect).abs() < 1e-12);
        assert_eq!(scan.rho_star_hat, Some(0.4));
        assert!(scan.csv().starts_with("rho,min_ratio,max_inv_norm\n5.0000000000000003e-2,"));
    }

    #[test]
    fn scan_rejects_bad_grid() {
        let fs = FieldSet::free(1.0, 1);
        let bx = ScanBox::default();
        assert!(det_bound_scan(&fs, &PhiConfig::default(), &bx, &[0.6]).is_err());
        assert!(det_bound_scan(&fs, &PhiConfig::default(), &bx, &[0.2, 0.1]).is_err());
        assert!(det_bound_scan(&fs, &PhiConfig::default(), &bx, &[]).is_err());
    }
}
