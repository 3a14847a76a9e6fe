//! Sampling audit of the growth and convexity hypotheses on the potentials.
//!
//! Constants are fitted on a Sobol sample of `[0, T] × [−R, R]^d` with a
//! safety factor and then verified on probe points at radii `2R`, `4R` and
//! `8R`. Polynomials that outgrow the fitted envelope show up on the probes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::linalg::min_eigenvalue;
use crate::poly::{multi_indices, PolySpaceTime as Poly};
use crate::sobol::Sobol;

pub const MIN_SAMPLES: usize = 100;
pub const MAX_DERIVATIVE_ORDER: u32 = 3;
/// Decay margin used for the `δ > 0` exponents.
pub const DELTA: f64 = 0.5;

const SAFETY: f64 = 2.0;
const PROBE_SCALES: [f64; 3] = [2.0, 4.0, 8.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuditBox {
    pub t_max: f64,
    pub radius: f64,
}

impl Default for AuditBox {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            radius: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    /// Value that should have been bounded.
    pub value: f64,
    /// The bound it was compared against.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    /// Fitted constant of the inequality.
    pub constant: f64,
    pub witness: Option<Witness>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MagneticBranch {
    /// Decaying spatial derivatives of `B`, growing time derivative.
    SpatialDecay,
    /// Controlled spatial derivatives of `∂B/∂t`.
    TimeDerivative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub checks: Vec<CheckResult>,
    /// The individual inequalities behind `magnetic-alternatives`.
    pub alternatives: Vec<CheckResult>,
    pub c0: f64,
    /// Offset of the two-sided potential bound.
    pub c1_potential: f64,
    pub c2: f64,
    pub c_star: f64,
    /// Offset of the convexity bound on the electric field.
    pub c1_convexity: f64,
    pub magnetic_branch: Option<MagneticBranch>,
    pub worst: Option<(String, Witness)>,
    pub samples: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failed_ids(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.id.as_str())
            .collect()
    }
}

struct Point {
    t: f64,
    x: Vec<f64>,
    jbr: f64,
}

impl Point {
    fn new(t: f64, x: Vec<f64>) -> Self {
        let jbr = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
        Self { t, x, jbr }
    }

    fn norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-12 * rhs.abs().max(1.0)
}

fn probes(d: usize, bx: &AuditBox) -> Result<Vec<Point>> {
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[j] = s;
            dirs.push(v);
        }
    }
    for mask in 0..(1usize << d) {
        let v: Vec<f64> = (0..d)
            .map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        dirs.push(v);
    }
    let mut seq = Sobol::new(d)?;
    seq.next_point();
    for _ in 0..32 {
        dirs.push(seq.next_point().iter().map(|u| 2.0 * u - 1.0).collect());
    }
    let mut out = Vec::new();
    for dir in dirs {
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-3 {
            continue;
        }
        for scale in PROBE_SCALES {
            for t in [0.0, 0.5 * bx.t_max, bx.t_max] {
                let r = scale * bx.radius / n;
                out.push(Point::new(t, dir.iter().map(|v| v * r).collect()));
            }
        }
    }
    Ok(out)
}

/// `|P| ≤ C⟨x⟩^r` for every polynomial of a group.
fn growth_check(
    id: &str,
    polys: &[Poly],
    exponent: f64,
    samples: &[Point],
    probes: &[Point],
) -> CheckResult {
    let ratio = |p: &Point| {
        polys
            .iter()
            .map(|q| q.eval(p.t, &p.x).abs())
            .fold(0.0, f64::max)
            / p.jbr.powf(exponent)
    };
    let c = SAFETY * samples.iter().map(ratio).fold(0.0, f64::max);
    let mut worst: Option<(f64, Witness)> = None;
    for p in probes {
        let bound = c * p.jbr.powf(exponent);
        for q in polys {
            let v = q.eval(p.t, &p.x).abs();
            if !le(v, bound) {
                let excess = v / bound.max(f64::MIN_POSITIVE);
                if worst.as_ref().is_none_or(|(e, _)| excess > *e) {
                    worst = Some((
                        excess,
                        Witness {
                            t: p.t,
                            x: p.x.clone(),
                            value: v,
                            bound,
                        },
                    ));
                }
            }
        }
    }
    CheckResult {
        id: id.into(),
        passed: worst.is_none(),
        constant: c,
        witness: worst.map(|w| w.1),
    }
}

fn derivatives(p: &Poly, orders: &[Vec<u32>]) -> Vec<Poly> {
    orders.iter().map(|a| p.deriv(a)).collect()
}

/// Checks a field set against the growth hypotheses on `[0, T] × [−R, R]^d`.
///
/// Fails with [`Error::Structural`] before sampling when a potential grows
/// faster than the declared exponent allows.
pub fn audit_assumptions(fs: &FieldSet, bx: &AuditBox, n_samples: usize) -> Result<AuditReport> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::Input(format!(
            "audit needs at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if !(bx.t_max >= 0.0 && bx.radius > 0.0) {
        return Err(Error::Input("audit box needs T >= 0 and R > 0".into()));
    }
    let d = fs.dim();
    let ms = fs.m_star();
    let p_exp = 2.0 * (ms + 1.0);
    let v = fs.potential();
    let a = fs.vector_potential();

    if v.degree_x() as f64 > p_exp {
        return Err(Error::Structural(format!(
            "potential has degree {} but the declared M_star = {ms} allows at most {p_exp}",
            v.degree_x()
        )));
    }
    if let Some(deg) = a
        .iter()
        .map(Poly::degree_x)
        .filter(|&g| g as f64 >= ms + 1.0)
        .max()
    {
        return Err(Error::Structural(format!(
            "vector potential has degree {deg} but the declared M_star = {ms} needs degree < {}",
            ms + 1.0
        )));
    }

    let mut lo = vec![-bx.radius; d + 1];
    let mut hi = vec![bx.radius; d + 1];
    lo[0] = 0.0;
    hi[0] = bx.t_max;
    let samples: Vec<Point> = Sobol::sample_box(d + 1, n_samples, &lo, &hi)?
        .into_iter()
        .map(|s| Point::new(s[0], s[1..].to_vec()))
        .collect();
    let probes = probes(d, bx)?;
    let outer: Vec<&Point> = samples
        .iter()
        .filter(|p| p.norm() >= 0.5 * bx.radius)
        .collect();
    if outer.is_empty() {
        return Err(Error::Input(
            "no samples in the outer half of the box".into(),
        ));
    }

    let mut checks = Vec::new();

    // two-sided potential bound
    let (min_ratio, argmin) = outer
        .iter()
        .map(|p| (v.eval(p.t, &p.x) / p.jbr.powf(p_exp), *p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("outer samples are non-empty");
    let c0 = 0.5 * min_ratio;
    let (c1_potential, lower) = if c0 <= 0.0 {
        let val = v.eval(argmin.t, &argmin.x);
        let w = Witness {
            t: argmin.t,
            x: argmin.x.clone(),
            value: val,
            bound: 0.0,
        };
        (
            0.0,
            CheckResult {
                id: "potential-lower-bound".into(),
                passed: false,
                constant: c0,
                witness: Some(w),
            },
        )
    } else {
        let c1 = samples
            .iter()
            .map(|p| c0 * p.jbr.powf(p_exp) - v.eval(p.t, &p.x))
            .fold(0.0, f64::max);
        let witness = probes
            .iter()
            .map(|p| (p, v.eval(p.t, &p.x), c0 * p.jbr.powf(p_exp) - c1))
            .filter(|(_, val, bound)| !le(*bound, *val))
            .max_by(|a, b| (a.2 - a.1).total_cmp(&(b.2 - b.1)))
            .map(|(p, val, bound)| Witness {
                t: p.t,
                x: p.x.clone(),
                value: val,
                bound,
            });
        (
            c1,
            CheckResult {
                id: "potential-lower-bound".into(),
                passed: witness.is_none(),
                constant: c0,
                witness,
            },
        )
    };
    checks.push(lower);

    let c2 = SAFETY
        * samples
            .iter()
            .map(|p| v.eval(p.t, &p.x) / p.jbr.powf(p_exp))
            .fold(0.0, f64::max);
    let upper_witness = probes
        .iter()
        .map(|p| (p, v.eval(p.t, &p.x), c2 * p.jbr.powf(p_exp)))
        .filter(|(_, val, bound)| !le(*val, *bound))
        .max_by(|a, b| (a.1 - a.2).total_cmp(&(b.1 - b.2)))
        .map(|(p, val, bound)| Witness {
            t: p.t,
            x: p.x.clone(),
            value: val,
            bound,
        });
    checks.push(CheckResult {
        id: "potential-upper-bound".into(),
        passed: upper_witness.is_none(),
        constant: c2,
        witness: upper_witness,
    });

    let higher = multi_indices(d, MAX_DERIVATIVE_ORDER);
    let mut all = vec![vec![0; d]];
    all.extend(higher.iter().cloned());

    let vt = v.deriv_t();
    let at: Vec<Poly> = a.iter().map(Poly::deriv_t).collect();
    let groups: Vec<(&str, Vec<Poly>, f64)> = vec![
        (
            "potential-derivative-growth",
            derivatives(v, &higher),
            p_exp,
        ),
        (
            "potential-time-derivative-growth",
            derivatives(&vt, &all),
            p_exp,
        ),
        ("vector-potential-growth", a.to_vec(), ms + 1.0 - DELTA),
        (
            "vector-potential-time-derivative-growth",
            at.iter().flat_map(|p| derivatives(p, &all)).collect(),
            ms + 1.0,
        ),
        (
            "electric-derivative-growth",
            fs.electric()
                .iter()
                .flat_map(|e| derivatives(e, &higher))
                .collect(),
            2.0 * ms,
        ),
        (
            "vector-potential-derivative-growth",
            a.iter().flat_map(|p| derivatives(p, &higher)).collect(),
            ms,
        ),
    ];
    for (id, polys, r) in &groups {
        checks.push(growth_check(id, polys, *r, &samples, &probes));
    }

    // convexity of −(1/2m)(∂E + ᵗ∂E)
    let grad_e: Vec<Vec<Poly>> = fs
        .electric()
        .iter()
        .map(|e| (0..d).map(|j| e.deriv_x(j)).collect())
        .collect();
    let scale = -1.0 / (2.0 * fs.mass());
    let lam = |p: &Point| {
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] =
                    scale * (grad_e[i][j].eval(p.t, &p.x) + grad_e[j][i].eval(p.t, &p.x));
            }
        }
        min_eigenvalue(&m, d)
    };
    let weight = |p: &Point| p.norm().powf(2.0 * ms);
    let (star_ratio, star_arg) = outer
        .iter()
        .map(|p| (lam(p) / weight(p), *p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("outer samples are non-empty");
    let c_star = 0.5 * star_ratio;
    let (c1_convexity, convexity) = if c_star <= 0.0 {
        let w = Witness {
            t: star_arg.t,
            x: star_arg.x.clone(),
            value: lam(star_arg),
            bound: 0.0,
        };
        (
            0.0,
            CheckResult {
                id: "electric-convexity".into(),
                passed: false,
                constant: c_star,
                witness: Some(w),
            },
        )
    } else {
        let c1 = samples
            .iter()
            .map(|p| c_star * weight(p) - lam(p))
            .fold(0.0, f64::max);
        let witness = probes
            .iter()
            .map(|p| (p, lam(p), c_star * weight(p) - c1))
            .filter(|(_, l, bound)| !le(*bound, *l))
            .max_by(|a, b| (a.2 - a.1).total_cmp(&(b.2 - b.1)))
            .map(|(p, l, bound)| Witness {
                t: p.t,
                x: p.x.clone(),
                value: l,
                bound,
            });
        (
            c1,
            CheckResult {
                id: "electric-convexity".into(),
                passed: witness.is_none(),
                constant: c_star,
                witness,
            },
        )
    };
    checks.push(convexity);

    // magnetic field: one of two alternatives must hold
    let b: Vec<Poly> = (0..d)
        .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
        .filter_map(|(j, k)| fs.magnetic(j, k).cloned())
        .collect();
    let bt: Vec<Poly> = b.iter().map(Poly::deriv_t).collect();
    let decay = -(1.0 + DELTA);
    let branch1 = [
        growth_check(
            "magnetic-derivative-decay",
            &b.iter()
                .flat_map(|p| derivatives(p, &higher))
                .collect::<Vec<_>>(),
            decay,
            &samples,
            &probes,
        ),
        growth_check(
            "magnetic-time-derivative-growth",
            &bt.iter()
                .flat_map(|p| derivatives(p, &all))
                .collect::<Vec<_>>(),
            ms,
            &samples,
            &probes,
        ),
    ];
    let bt_grad: Vec<Poly> = bt.iter().flat_map(|p| derivatives(p, &higher)).collect();
    let branch2 = if ms < 1.0 {
        growth_check(
            "magnetic-time-derivative-decay",
            &bt_grad,
            decay,
            &samples,
            &probes,
        )
    } else {
        growth_check(
            "magnetic-time-derivative-gradient-growth",
            &bt_grad,
            ms - 1.0,
            &samples,
            &probes,
        )
    };
    let magnetic_branch = if branch1.iter().all(|c| c.passed) {
        Some(MagneticBranch::SpatialDecay)
    } else if branch2.passed {
        Some(MagneticBranch::TimeDerivative)
    } else {
        None
    };
    let mut b_summary = CheckResult {
        id: "magnetic-alternatives".into(),
        passed: magnetic_branch.is_some(),
        constant: 0.0,
        witness: None,
    };
    let alternatives: Vec<CheckResult> = branch1
        .into_iter()
        .chain(std::iter::once(branch2))
        .collect();
    if !b_summary.passed {
        b_summary.witness = alternatives.iter().find_map(|c| c.witness.clone());
    }
    checks.push(b_summary);

    let worst = checks
        .iter()
        .filter_map(|c| c.witness.as_ref().map(|w| (c.id.clone(), w.clone())))
        .max_by(|a, b| {
            let rel = |w: &Witness| (w.value - w.bound).abs() / w.bound.abs().max(1.0);
            rel(&a.1).total_cmp(&rel(&b.1))
        });

    Ok(AuditReport {
        checks,
        alternatives,
        c0,
        c1_potential,
        c2,
        c_star,
        c1_convexity,
        magnetic_branch,
        worst,
        samples: n_samples,
    })
}
