//! Bounded spin couplings and their transport along straight segments.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::action::StraightSegment;
use crate::error::{Error, Result};
use crate::linalg::CMat;

pub const DEFAULT_SUBSTEPS: usize = 8;
pub const UNITARITY_TOL: f64 = 1e-10;
pub const MAX_SUBSTEPS: usize = 1 << 14;

/// Bounded scalar envelope `g(t, x)` on configuration space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Constant {
        value: f64,
    },
    /// `a · sin(ω t + k·x + φ)`
    Sin {
        amplitude: f64,
        omega: f64,
        k: Vec<f64>,
        phase: f64,
    },
    /// `a · cos(ω t + k·x + φ)`
    Cos {
        amplitude: f64,
        omega: f64,
        k: Vec<f64>,
        phase: f64,
    },
    /// `a · exp(−Σ_j w_j (x_j − c_j)²)`; a zero weight ignores that axis.
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl Envelope {
    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Sin {
                amplitude,
                omega,
                k,
                phase,
            } => amplitude * (omega * t + dot(k, x) + phase).sin(),
            Self::Cos {
                amplitude,
                omega,
                k,
                phase,
            } => amplitude * (omega * t + dot(k, x) + phase).cos(),
            Self::Gaussian {
                amplitude,
                center,
                weights,
            } => {
                let e: f64 = x
                    .iter()
                    .zip(center)
                    .zip(weights)
                    .map(|((x, c), w)| w * (x - c) * (x - c))
                    .sum();
                amplitude * (-e).exp()
            }
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Self::Constant { value } => value.is_finite(),
            Self::Sin {
                amplitude,
                omega,
                k,
                phase,
            }
            | Self::Cos {
                amplitude,
                omega,
                k,
                phase,
            } => {
                k.len() == dim
                    && [*amplitude, *omega, *phase]
                        .iter()
                        .chain(k)
                        .all(|v| v.is_finite())
            }
            Self::Gaussian {
                amplitude,
                center,
                weights,
            } => {
                center.len() == dim
                    && weights.len() == dim
                    && weights.iter().all(|&w| w >= 0.0)
                    && amplitude.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "invalid envelope for configuration dimension {dim}: {self:?}"
            )))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinTerm {
    pub matrix: CMat,
    pub envelope: Envelope,
}

/// `H₁(t, x) = Σ matrix · g(t, x)` with Hermitian matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinHamiltonian {
    degree: usize,
    config_dim: usize,
    terms: Vec<SpinTerm>,
}

impl SpinHamiltonian {
    pub fn new(degree: usize, config_dim: usize, terms: Vec<SpinTerm>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Input("spin degree must be >= 1".into()));
        }
        for term in &terms {
            if term.matrix.n() != degree {
                return Err(Error::Dimension {
                    expected: degree,
                    got: term.matrix.n(),
                });
            }
            let scale = term.matrix.norm().max(1.0);
            if term.matrix.hermiticity_defect() > 1e-14 * scale {
                return Err(Error::Input(
                    "spin coupling matrices must be Hermitian".into(),
                ));
            }
            term.envelope.check(config_dim)?;
        }
        Ok(Self {
            degree,
            config_dim,
            terms,
        })
    }

    pub fn zero(degree: usize, config_dim: usize) -> Self {
        Self {
            degree,
            config_dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(matrix: CMat, config_dim: usize) -> Result<Self> {
        Self::new(
            matrix.n(),
            config_dim,
            vec![SpinTerm {
                matrix,
                envelope: Envelope::Constant { value: 1.0 },
            }],
        )
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn config_dim(&self) -> usize {
        self.config_dim
    }

    pub fn terms(&self) -> &[SpinTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| matches!(t.envelope, Envelope::Constant { .. }))
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| match &t.envelope {
            Envelope::Sin { omega, .. } | Envelope::Cos { omega, .. } => *omega == 0.0,
            _ => true,
        })
    }

    /// `H₁(t, x)` written into `out`.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut CMat) {
        *out = CMat::zeros(self.degree);
        for term in &self.terms {
            let g = term.envelope.eval(t, x);
            if g == 0.0 {
                continue;
            }
            for i in 0..self.degree {
                for j in 0..self.degree {
                    let v = out.get(i, j) + term.matrix.get(i, j) * g;
                    out.set(i, j, v);
                }
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.degree);
        self.eval_into(t, x, &mut out);
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|t| {
                let rows: Vec<Vec<[f64; 2]>> = (0..self.degree)
                    .map(|i| {
                        (0..self.degree)
                            .map(|j| [t.matrix.get(i, j).re, t.matrix.get(i, j).im])
                            .collect()
                    })
                    .collect();
                serde_json::json!({ "matrix": rows, "envelope": t.envelope })
            })
            .collect();
        serde_json::json!({ "degree": self.degree, "terms": terms })
    }

    pub fn from_json(v: &serde_json::Value, config_dim: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct TermSpec {
            matrix: Vec<Vec<[f64; 2]>>,
            envelope: Envelope,
        }
        #[derive(Deserialize)]
        struct Spec {
            degree: usize,
            #[serde(default)]
            terms: Vec<TermSpec>,
        }
        let spec: Spec = serde_json::from_value(v.clone())?;
        let terms = spec
            .terms
            .into_iter()
            .map(|t| {
                let rows = t
                    .matrix
                    .into_iter()
                    .map(|r| {
                        r.into_iter()
                            .map(|[re, im]| Complex64::new(re, im))
                            .collect()
                    })
                    .collect();
                Ok(SpinTerm {
                    matrix: CMat::from_rows(rows)?,
                    envelope: t.envelope,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec.degree, config_dim, terms)
    }
}

/// Pauli matrices `σ_x, σ_y, σ_z`.
pub fn pauli() -> [CMat; 3] {
    let c = Complex64::new;
    [
        CMat::from_rows(vec![
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        ])
        .expect("square"),
        CMat::from_rows(vec![
            vec![c(0.0, 0.0), c(0.0, -1.0)],
            vec![c(0.0, 1.0), c(0.0, 0.0)],
        ])
        .expect("square"),
        CMat::diag(&[c(1.0, 0.0), c(-1.0, 0.0)]),
    ]
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.n(), b.n());
    let mut out = CMat::zeros(n * m);
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out.set(i * m + k, j * m + l, a.get(i, j) * b.get(k, l));
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportOptions {
    pub substeps: usize,
    pub unitarity_tol: f64,
    /// Largest accepted change between `n` and `2n` substeps.
    pub accuracy_tol: f64,
    pub max_substeps: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            unitarity_tol: UNITARITY_TOL,
            accuracy_tol: 1e-11,
            max_substeps: MAX_SUBSTEPS,
        }
    }
}

struct Workspace {
    d: usize,
    h: Vec<Complex64>,
    a: Vec<Complex64>,
    tmp: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    q: Vec<f64>,
}

impl Workspace {
    fn new(d: usize, config_dim: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); d * d];
        Self {
            d,
            h: z.clone(),
            a: z.clone(),
            tmp: z.clone(),
            k: [z.clone(), z.clone(), z.clone(), z],
            q: vec![0.0; config_dim],
        }
    }
}

/// `out = −i H₁(θ, q(θ)) m`.
#[allow(clippy::too_many_arguments)]
fn rhs(
    h1: &SpinHamiltonian,
    theta: f64,
    r: f64,
    y: &[f64],
    x: &[f64],
    m: &[Complex64],
    h: &mut [Complex64],
    q: &mut [f64],
    out: &mut [Complex64],
) {
    let d = h1.degree;
    for k in 0..x.len() {
        q[k] = y[k] + r * (x[k] - y[k]);
    }
    h.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    for term in &h1.terms {
        let g = term.envelope.eval(theta, q);
        if g == 0.0 {
            continue;
        }
        for (hv, mv) in h.iter_mut().zip(term.matrix.data()) {
            *hv += mv * g;
        }
    }
    for i in 0..d {
        for j in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..d {
                acc += h[i * d + k] * m[k * d + j];
            }
            out[i * d + j] = Complex64::new(acc.im, -acc.re);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4(h1: &SpinHamiltonian, s: f64, t: f64, y: &[f64], x: &[f64], n: usize, ws: &mut Workspace) -> CMat {
    let d = ws.d;
    let rho = t - s;
    let dth = rho / n as f64;
    let Workspace { h, a, tmp, k, q, .. } = ws;
    a.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    for i in 0..d {
        a[i * d + i] = Complex64::new(1.0, 0.0);
    }
    for step in 0..n {
        let th = s + step as f64 * dth;
        let r0 = step as f64 / n as f64;
        let rh = (step as f64 + 0.5) / n as f64;
        let r1 = (step + 1) as f64 / n as f64;
        let [k1, k2, k3, k4] = k;
        rhs(h1, th, r0, y, x, a, h, q, k1);
        for i in 0..d * d {
            tmp[i] = a[i] + k1[i] * (0.5 * dth);
        }
        rhs(h1, th + 0.5 * dth, rh, y, x, tmp, h, q, k2);
        for i in 0..d * d {
            tmp[i] = a[i] + k2[i] * (0.5 * dth);
        }
        rhs(h1, th + 0.5 * dth, rh, y, x, tmp, h, q, k3);
        for i in 0..d * d {
            tmp[i] = a[i] + k3[i] * dth;
        }
        rhs(h1, th + dth, r1, y, x, tmp, h, q, k4);
        for i in 0..d * d {
            a[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dth / 6.0);
        }
    }
    CMat::from_data(d, a.clone())
}

/// Solves `dF/dθ = −i H₁(θ, q(θ)) F`, `F(s) = I` along the segment.
pub fn spin_transport_with(
    h1: &SpinHamiltonian,
    seg: &StraightSegment,
    opts: &TransportOptions,
) -> Result<CMat> {
    transport_between(h1, seg.s, seg.t, &seg.y, &seg.x, opts)
}

/// [`spin_transport_with`] on the segment from `(s, y)` to `(t, x)`.
pub fn transport_between(
    h1: &SpinHamiltonian,
    s: f64,
    t: f64,
    y: &[f64],
    x: &[f64],
    opts: &TransportOptions,
) -> Result<CMat> {
    if opts.substeps == 0 {
        return Err(Error::Input("substeps must be >= 1".into()));
    }
    if x.len() != h1.config_dim || y.len() != h1.config_dim {
        return Err(Error::Dimension {
            expected: h1.config_dim,
            got: x.len(),
        });
    }
    if h1.is_zero() {
        return Ok(CMat::identity(h1.degree));
    }
    let mut ws = Workspace::new(h1.degree, h1.config_dim);
    let mut n = opts.substeps;
    let mut prev = rk4(h1, s, t, y, x, n, &mut ws);
    loop {
        let next_n = 2 * n;
        if next_n > opts.max_substeps {
            return Err(Error::Accuracy(format!(
                "spin transport needs more than {} substeps (unitarity defect {:.3e})",
                opts.max_substeps,
                prev.unitarity_defect()
            )));
        }
        let next = rk4(h1, s, t, y, x, next_n, &mut ws);
        if next.unitarity_defect() <= opts.unitarity_tol
            && next.max_abs_diff(&prev) <= opts.accuracy_tol
        {
            return Ok(next);
        }
        prev = next;
        n = next_n;
    }
}

pub fn spin_transport(
    h1: &SpinHamiltonian,
    seg: &StraightSegment,
    substeps: usize,
) -> Result<CMat> {
    spin_transport_with(
        h1,
        seg,
        &TransportOptions {
            substeps,
            ..Default::default()
        },
    )
}
