//! Classical action along straight segments and piecewise-linear paths.

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::quad::GaussLegendre;

pub const DEFAULT_QUAD_ORDER: usize = 8;

/// Largest configuration dimension the allocation-free evaluator supports.
pub const MAX_CONFIG_DIM: usize = 16;

/// Straight path from `y` at time `s` to `x` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StraightSegment {
    pub s: f64,
    pub t: f64,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl StraightSegment {
    pub fn new(s: f64, t: f64, y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if !(s < t) {
            return Err(Error::Input(format!(
                "segment needs s < t, got s={s}, t={t}"
            )));
        }
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: y.len(),
                got: x.len(),
            });
        }
        Ok(Self { s, t, y, x })
    }

    pub fn duration(&self) -> f64 {
        self.t - self.s
    }

    /// Position at time `theta ∈ [s, t]`.
    pub fn point(&self, theta: f64) -> Vec<f64> {
        let r = (theta - self.s) / (self.t - self.s);
        self.y
            .iter()
            .zip(&self.x)
            .map(|(y, x)| y + r * (x - y))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePath {
    times: Vec<f64>,
    vertices: Vec<Vec<f64>>,
}

impl PiecewisePath {
    pub fn new(times: Vec<f64>, vertices: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || vertices.len() != times.len() {
            return Err(Error::Input(format!(
                "path needs at least two times and one vertex per time, got {} times and {} vertices",
                times.len(),
                vertices.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input(
                "path times must be strictly increasing".into(),
            ));
        }
        let d = vertices[0].len();
        if let Some(v) = vertices.iter().find(|v| v.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: v.len(),
            });
        }
        Ok(Self { times, vertices })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn segments(&self) -> impl Iterator<Item = StraightSegment> + '_ {
        (0..self.times.len() - 1).map(move |j| StraightSegment {
            s: self.times[j],
            t: self.times[j + 1],
            y: self.vertices[j].clone(),
            x: self.vertices[j + 1].clone(),
        })
    }
}

/// Smallest Gauss–Legendre order that integrates every potential of `fs`
/// exactly along a straight segment.
pub fn required_order(fs: &FieldSet) -> usize {
    (fs.max_total_degree() as usize + 2) / 2
}

/// Reusable straight-segment action evaluator.
#[derive(Clone, Debug)]
pub struct ActionEvaluator<'a> {
    fs: &'a FieldSet,
    rule: GaussLegendre,
    with_vector: bool,
}

impl<'a> ActionEvaluator<'a> {
    /// Raises `quad_order` when the field degrees need more nodes.
    pub fn new(fs: &'a FieldSet, quad_order: usize) -> Result<Self> {
        if fs.config_dim() > MAX_CONFIG_DIM {
            return Err(Error::Input(format!(
                "configuration dimension {} exceeds {MAX_CONFIG_DIM}",
                fs.config_dim()
            )));
        }
        let order = quad_order.max(required_order(fs)).max(1);
        Ok(Self {
            fs,
            rule: GaussLegendre::new(order),
            with_vector: fs.has_vector_potential(),
        })
    }

    pub fn order(&self) -> usize {
        self.rule.len()
    }

    pub fn fields(&self) -> &FieldSet {
        self.fs
    }

    /// Action from `(s, y)` to `(t, x)`; requires `s < t`.
    #[inline]
    pub fn eval(&self, s: f64, t: f64, y: &[f64], x: &[f64]) -> f64 {
        let n = x.len();
        let rho = t - s;
        let m = self.fs.mass();
        let mut dx = [0.0; MAX_CONFIG_DIM];
        let mut q = [0.0; MAX_CONFIG_DIM];
        let mut a = [0.0; MAX_CONFIG_DIM];
        let mut dist2 = 0.0;
        for k in 0..n {
            dx[k] = x[k] - y[k];
            dist2 += dx[k] * dx[k];
        }
        let mut v_int = 0.0;
        let mut a_int = 0.0;
        for (theta, w) in self.rule.iter() {
            for k in 0..n {
                q[k] = x[k] - theta * dx[k];
            }
            let tau = t - theta * rho;
            if self.with_vector {
                let v = self.fs.sample_config(tau, &q[..n], &mut a[..n]);
                v_int += w * v;
                a_int += w * (0..n).map(|k| dx[k] * a[k]).sum::<f64>();
            } else {
                v_int += w * self.fs.config_potential(tau, &q[..n]);
            }
        }
        m * dist2 / (2.0 * rho) + a_int - rho * v_int
    }
}

pub fn action_segment(fs: &FieldSet, seg: &StraightSegment, quad_order: usize) -> Result<f64> {
    if seg.x.len() != fs.config_dim() {
        return Err(Error::Dimension {
            expected: fs.config_dim(),
            got: seg.x.len(),
        });
    }
    if !(seg.s < seg.t) {
        return Err(Error::Input(format!(
            "segment needs s < t, got s={}, t={}",
            seg.s, seg.t
        )));
    }
    Ok(ActionEvaluator::new(fs, quad_order)?.eval(seg.s, seg.t, &seg.y, &seg.x))
}

pub fn action_piecewise(fs: &FieldSet, path: &PiecewisePath, quad_order: usize) -> Result<f64> {
    path.segments()
        .map(|seg| action_segment(fs, &seg, quad_order))
        .sum()
}
