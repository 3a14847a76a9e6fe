//! Electromagnetic configurations with polynomial potentials.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::poly::PolySpaceTime as Poly;

pub const MAX_DIM: usize = 4;
pub const MAX_TIME_DEGREE: u32 = 3;
pub const MAX_PAIR_DEGREE: u32 = 2;

/// Interaction `W(t, x_i − x_j)` between two particles.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPotential {
    pub first: usize,
    pub second: usize,
    pub w: Poly,
}

/// Scalar and vector potentials together with the derived electric and
/// magnetic fields. Units with ħ = e = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSet {
    mass: f64,
    dim: usize,
    m_star: f64,
    particles: usize,
    potential: Poly,
    vector: Vec<Poly>,
    electric: Vec<Poly>,
    // B_jk for j < k, in lexicographic order
    magnetic: Vec<Poly>,
    pairs: Vec<PairPotential>,
}

fn check_poly(p: &Poly, dim: usize, what: &str) -> Result<()> {
    if p.dim() != dim {
        return Err(Error::Input(format!(
            "{what} has dim {}, expected {dim}",
            p.dim()
        )));
    }
    if p.degree_t() > MAX_TIME_DEGREE {
        return Err(Error::Input(format!(
            "{what} has time degree {}, at most {MAX_TIME_DEGREE} supported",
            p.degree_t()
        )));
    }
    Ok(())
}

impl FieldSet {
    pub fn new(
        mass: f64,
        dim: usize,
        m_star: f64,
        potential: Poly,
        vector: Vec<Poly>,
    ) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Input(format!("mass must be positive, got {mass}")));
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Input(format!(
                "dim must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if !(m_star.is_finite() && m_star >= 0.0) {
            return Err(Error::Input(format!("M_star must be >= 0, got {m_star}")));
        }
        if vector.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: vector.len(),
            });
        }
        check_poly(&potential, dim, "V")?;
        for (j, a) in vector.iter().enumerate() {
            check_poly(a, dim, &format!("A[{j}]"))?;
        }
        let mut fs = Self {
            mass,
            dim,
            m_star,
            particles: 1,
            potential,
            vector,
            electric: Vec::new(),
            magnetic: Vec::new(),
            pairs: Vec::new(),
        };
        fs.derive();
        Ok(fs)
    }

    /// Zero vector potential.
    pub fn scalar(mass: f64, dim: usize, m_star: f64, potential: Poly) -> Result<Self> {
        Self::new(mass, dim, m_star, potential, vec![Poly::zero(dim); dim])
    }

    pub fn free(mass: f64, dim: usize) -> Self {
        Self::scalar(mass, dim, 0.0, Poly::zero(dim)).expect("free field is valid")
    }

    /// Identical copies of the single-particle fields for `n` particles.
    pub fn with_particles(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("particle count must be positive".into()));
        }
        if self.pairs.iter().any(|p| p.second >= n) {
            return Err(Error::Input(
                "pair potential refers to a missing particle".into(),
            ));
        }
        self.particles = n;
        Ok(self)
    }

    pub fn with_pair_potential(mut self, first: usize, second: usize, w: Poly) -> Result<Self> {
        let (first, second) = (first.min(second), first.max(second));
        if first == second || second >= self.particles {
            return Err(Error::Input(format!(
                "invalid particle pair ({first}, {second}) for {} particles",
                self.particles
            )));
        }
        check_poly(&w, self.dim, "W")?;
        if w.degree_x() > MAX_PAIR_DEGREE {
            return Err(Error::Input(format!(
                "pair potential degree {} exceeds {MAX_PAIR_DEGREE}",
                w.degree_x()
            )));
        }
        self.pairs.push(PairPotential { first, second, w });
        Ok(self)
    }

    fn derive(&mut self) {
        let d = self.dim;
        self.electric = (0..d)
            .map(|j| -&(&self.vector[j].deriv_t() + &self.potential.deriv_x(j)))
            .collect();
        self.magnetic = (0..d)
            .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
            .map(|(j, k)| &self.vector[k].deriv_x(j) - &self.vector[j].deriv_x(k))
            .collect();
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Spatial dimension per particle.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m_star(&self) -> f64 {
        self.m_star
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn config_dim(&self) -> usize {
        self.dim * self.particles
    }

    pub fn potential(&self) -> &Poly {
        &self.potential
    }

    pub fn vector_potential(&self) -> &[Poly] {
        &self.vector
    }

    pub fn electric(&self) -> &[Poly] {
        &self.electric
    }

    pub fn pair_potentials(&self) -> &[PairPotential] {
        &self.pairs
    }

    fn magnetic_index(&self, j: usize, k: usize) -> usize {
        debug_assert!(j < k && k < self.dim);
        j * (2 * self.dim - j - 1) / 2 + (k - j - 1)
    }

    /// `B_jk` for `j < k`.
    pub fn magnetic(&self, j: usize, k: usize) -> Option<&Poly> {
        (j < k && k < self.dim).then(|| &self.magnetic[self.magnetic_index(j, k)])
    }

    /// `B_jk(t, x)` for any `j, k`, using antisymmetry.
    pub fn magnetic_value(&self, j: usize, k: usize, t: f64, x: &[f64]) -> f64 {
        match j.cmp(&k) {
            std::cmp::Ordering::Less => self.magnetic[self.magnetic_index(j, k)].eval(t, x),
            std::cmp::Ordering::Greater => -self.magnetic[self.magnetic_index(k, j)].eval(t, x),
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// `(V(t, x), A(t, x))` for a single particle.
    pub fn eval_potential(&self, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok((
            self.potential.eval(t, x),
            self.vector.iter().map(|a| a.eval(t, x)).collect(),
        ))
    }

    /// Configuration-space potential at `x` (all particles), with the vector
    /// potential written into `a_out`. Each pair contributes
    /// `W(x_i − x_j) + W(x_j − x_i)`.
    #[inline]
    pub fn sample_config(&self, t: f64, x: &[f64], a_out: &mut [f64]) -> f64 {
        let d = self.dim;
        debug_assert_eq!(x.len(), self.config_dim());
        let mut v = 0.0;
        for (xl, al) in x.chunks_exact(d).zip(a_out.chunks_exact_mut(d)) {
            v += self.potential.eval(t, xl);
            for (a, poly) in al.iter_mut().zip(&self.vector) {
                *a = poly.eval(t, xl);
            }
        }
        v + self.pair_energy(t, x)
    }

    #[inline]
    pub fn config_potential(&self, t: f64, x: &[f64]) -> f64 {
        let d = self.dim;
        let v: f64 = x.chunks_exact(d).map(|xl| self.potential.eval(t, xl)).sum();
        v + self.pair_energy(t, x)
    }

    #[inline]
    fn pair_energy(&self, t: f64, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut diff = [0.0; MAX_DIM];
        let mut e = 0.0;
        for p in &self.pairs {
            let (xi, xj) = (&x[p.first * d..][..d], &x[p.second * d..][..d]);
            for k in 0..d {
                diff[k] = xi[k] - xj[k];
            }
            e += p.w.eval(t, &diff[..d]);
            for v in &mut diff[..d] {
                *v = -*v;
            }
            e += p.w.eval(t, &diff[..d]);
        }
        e
    }

    /// Largest total degree in `(x, t)` among all potentials.
    pub fn max_total_degree(&self) -> u32 {
        std::iter::once(&self.potential)
            .chain(&self.vector)
            .chain(self.pairs.iter().map(|p| &p.w))
            .map(Poly::total_degree)
            .max()
            .unwrap_or(0)
    }

    pub fn is_time_independent(&self) -> bool {
        std::iter::once(&self.potential)
            .chain(&self.vector)
            .chain(self.pairs.iter().map(|p| &p.w))
            .all(|p| p.degree_t() == 0)
    }

    pub fn has_vector_potential(&self) -> bool {
        self.vector.iter().any(|a| !a.is_zero())
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("m".into(), json!(self.mass));
        obj.insert("dim".into(), json!(self.dim));
        obj.insert("M_star".into(), json!(self.m_star));
        obj.insert("V".into(), self.potential.to_rows());
        obj.insert(
            "A".into(),
            Value::Array(self.vector.iter().map(Poly::to_rows).collect()),
        );
        if self.particles > 1 {
            obj.insert("particles".into(), json!(self.particles));
        }
        if !self.pairs.is_empty() {
            let pairs = self
                .pairs
                .iter()
                .map(|p| json!({ "pair": [p.first, p.second], "W": p.w.to_rows() }))
                .collect();
            obj.insert("pair_potentials".into(), Value::Array(pairs));
        }
        Value::Object(obj)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("field JSON serializes")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let num = |key: &str| {
            v.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Input(format!("field set needs numeric \"{key}\"")))
        };
        let mass = num("m")?;
        let dim = v
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Input("field set needs integer \"dim\"".into()))?
            as usize;
        let m_star = num("M_star")?;
        let potential = match v.get("V") {
            Some(rows) => Poly::from_rows(dim, rows)?,
            None => Poly::zero(dim),
        };
        let vector = match v.get("A") {
            Some(Value::Array(comps)) => comps
                .iter()
                .map(|c| Poly::from_rows(dim, c))
                .collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(Error::Input("\"A\" must be an array of polynomials".into())),
            None => vec![Poly::zero(dim); dim],
        };
        let mut fs = Self::new(mass, dim, m_star, potential, vector)?;
        if let Some(n) = v.get("particles") {
            let n = n
                .as_u64()
                .ok_or_else(|| Error::Input("\"particles\" must be a positive integer".into()))?;
            fs = fs.with_particles(n as usize)?;
        }
        if let Some(pairs) = v.get("pair_potentials") {
            let pairs = pairs
                .as_array()
                .ok_or_else(|| Error::Input("\"pair_potentials\" must be an array".into()))?;
            for p in pairs {
                let idx = p
                    .get("pair")
                    .and_then(Value::as_array)
                    .filter(|a| a.len() == 2)
                    .and_then(|a| Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize)))
                    .ok_or_else(|| Error::Input("pair potential needs \"pair\": [i, j]".into()))?;
                let w = Poly::from_rows(
                    dim,
                    p.get("W")
                        .ok_or_else(|| Error::Input("pair potential needs \"W\"".into()))?,
                )?;
                fs = fs.with_pair_potential(idx.0, idx.1, w)?;
            }
        }
        Ok(fs)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(s)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_string().as_bytes()))
    }
}

/// Recomputes `E` and `B` from `V` and `A`.
pub fn derive_em(fs: &FieldSet) -> FieldSet {
    let mut out = fs.clone();
    out.derive();
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaugeFunction {
    psi: Poly,
}

impl GaugeFunction {
    pub fn new(psi: Poly) -> Result<Self> {
        if psi.degree_t() > MAX_TIME_DEGREE {
            return Err(Error::Input(format!(
                "gauge function time degree {} exceeds {MAX_TIME_DEGREE}",
                psi.degree_t()
            )));
        }
        Ok(Self { psi })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            psi: Poly::zero(dim),
        }
    }

    pub fn psi(&self) -> &Poly {
        &self.psi
    }

    /// `Σ_l ψ(t, x_l)` over the particles of a configuration point.
    pub fn config_phase(&self, t: f64, x: &[f64]) -> f64 {
        x.chunks_exact(self.psi.dim())
            .map(|xl| self.psi.eval(t, xl))
            .sum()
    }
}

/// `V' = V − ∂ψ/∂t`, `A'_j = A_j + ∂ψ/∂x_j`, applied to every particle.
pub fn gauge_transform(fs: &FieldSet, g: &GaugeFunction) -> Result<FieldSet> {
    if g.psi.dim() != fs.dim {
        return Err(Error::Dimension {
            expected: fs.dim,
            got: g.psi.dim(),
        });
    }
    let potential = &fs.potential - &g.psi.deriv_t();
    let vector = fs
        .vector
        .iter()
        .enumerate()
        .map(|(j, a)| a + &g.psi.deriv_x(j))
        .collect();
    let mut out = FieldSet::new(fs.mass, fs.dim, fs.m_star, potential, vector)?;
    out.particles = fs.particles;
    out.pairs = fs.pairs.clone();
    Ok(out)
}
