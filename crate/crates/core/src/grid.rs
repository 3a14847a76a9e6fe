//! Uniform cell-centred grids and complex wavefunction samples on them.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::pairwise_sum;

const MAGIC: &[u8; 4] = b"FSLC";
const VERSION: u32 = 2;

/// Tensor grid on `[−L_k, L_k]` with `N_k` cell-centred nodes per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: Vec<f64>,
    points: Vec<usize>,
}

impl Grid {
    pub fn new(half_width: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if half_width.is_empty() || half_width.len() != points.len() {
            return Err(Error::Input(
                "grid needs one half-width and one point count per axis".into(),
            ));
        }
        if let Some(&n) = points.iter().find(|&&n| n < 8 || n % 2 != 0) {
            return Err(Error::Input(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        if let Some(&l) = half_width.iter().find(|&&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::Input(format!(
                "half-width must be positive, got {l}"
            )));
        }
        Ok(Self { half_width, points })
    }

    /// Same `L` and `N` on every axis.
    pub fn uniform(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::new(vec![half_width; dim], vec![points; dim])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn half_width(&self) -> &[f64] {
        &self.half_width
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_width[axis] / self.points[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).fold(0.0, f64::max)
    }

    /// `Π h_k`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        -self.half_width[axis] + (i as f64 + 0.5) * self.spacing(axis)
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis])
            .map(|i| self.coord(axis, i))
            .collect()
    }

    /// Row-major multi-index of a flat node index; axis 0 varies slowest.
    pub fn unflatten(&self, mut idx: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.points[k];
            idx /= self.points[k];
        }
    }

    pub fn flatten(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.points)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut m = vec![0; self.dim()];
        self.unflatten(idx, &mut m);
        m.iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    /// All axes carry the same discretization.
    pub fn is_isotropic(&self) -> bool {
        self.points.windows(2).all(|w| w[0] == w[1])
            && self.half_width.windows(2).all(|w| w[0] == w[1])
    }

    /// Nodes whose every coordinate satisfies `|x_k| ≤ fraction · L_k`.
    pub fn interior_mask(&self, fraction: f64) -> Vec<bool> {
        (0..self.len())
            .map(|idx| {
                self.node(idx)
                    .iter()
                    .zip(&self.half_width)
                    .all(|(x, l)| x.abs() <= fraction * l)
            })
            .collect()
    }

    /// Nodes in the outermost layer of cells.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut m = vec![0; self.dim()];
        (0..self.len())
            .map(|idx| {
                self.unflatten(idx, &mut m);
                m.iter()
                    .zip(&self.points)
                    .any(|(&i, &n)| i == 0 || i + 1 == n)
            })
            .collect()
    }
}

/// Gaussian wave packet `(πσ²)^{−d/4} exp(−|x−c|²/(2σ²) + i p·x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub center: Vec<f64>,
    pub width: f64,
    pub momentum: Vec<f64>,
}

impl GaussianPacket {
    pub fn standard(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            width: 1.0,
            momentum: vec![0.0; dim],
        }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.evolve_free(0.0, 1.0, x)
    }

    /// Exact free evolution to time `t` for mass `m`.
    pub fn evolve_free(&self, t: f64, m: f64, x: &[f64]) -> Complex64 {
        let s2 = self.width * self.width;
        let spread = Complex64::new(1.0, t / (m * s2));
        let mut out = Complex64::new(1.0, 0.0);
        for k in 0..x.len() {
            let p = self.momentum[k];
            let shifted = x[k] - self.center[k] - p * t / m;
            let norm = (std::f64::consts::PI * s2).powf(-0.25) / spread.sqrt();
            let phase = Complex64::new(0.0, p * (x[k] - 0.5 * p * t / m));
            out *= norm * (-shifted * shifted / (2.0 * s2 * spread) + phase).exp();
        }
        out
    }
}

/// Wavefunction samples: `values[node * spin_dim + s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    grid: Grid,
    spin_dim: usize,
    values: Vec<Complex64>,
    pub time: f64,
}

impl GridState {
    pub fn new(grid: Grid, spin_dim: usize, values: Vec<Complex64>) -> Result<Self> {
        if spin_dim == 0 {
            return Err(Error::Input("spin dimension must be >= 1".into()));
        }
        if values.len() != grid.len() * spin_dim {
            return Err(Error::Dimension {
                expected: grid.len() * spin_dim,
                got: values.len(),
            });
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::Numeric {
                node: i / spin_dim,
                detail: "non-finite initial value".into(),
            });
        }
        Ok(Self {
            grid,
            spin_dim,
            values,
            time: 0.0,
        })
    }

    pub fn zeros(grid: Grid, spin_dim: usize) -> Self {
        let n = grid.len() * spin_dim;
        Self {
            grid,
            spin_dim,
            values: vec![Complex64::new(0.0, 0.0); n],
            time: 0.0,
        }
    }

    /// Scalar state from a function of the node coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
        Self {
            grid,
            spin_dim: 1,
            values,
            time: 0.0,
        }
    }

    /// `f(x) ⊗ spinor` at every node.
    pub fn from_fn_spinor(
        grid: Grid,
        spinor: &[Complex64],
        f: impl Fn(&[f64]) -> Complex64,
    ) -> Self {
        let spin_dim = spinor.len();
        let mut values = Vec::with_capacity(grid.len() * spin_dim);
        for i in 0..grid.len() {
            let v = f(&grid.node(i));
            values.extend(spinor.iter().map(|s| v * s));
        }
        Self {
            grid,
            spin_dim,
            values,
            time: 0.0,
        }
    }

    pub fn gaussian(grid: Grid, packet: &GaussianPacket) -> Self {
        Self::from_fn(grid, |x| packet.eval(x))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        let mut out = Self::new(self.grid.clone(), self.spin_dim, values)?;
        out.time = self.time;
        Ok(out)
    }

    pub fn node_values(&self, node: usize) -> &[Complex64] {
        &self.values[node * self.spin_dim..(node + 1) * self.spin_dim]
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.spin_dim != other.spin_dim {
            return Err(Error::Input("states live on different grids".into()));
        }
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(Complex64::norm_sqr).collect();
        self.grid.cell_volume() * pairwise_sum(&sq)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `h^D Σ conj(self)·other`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same(other)?;
        let (re, im): (Vec<f64>, Vec<f64>) = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let p = a.conj() * b;
                (p.re, p.im)
            })
            .unzip();
        Ok(Complex64::new(pairwise_sum(&re), pairwise_sum(&im)) * self.grid.cell_volume())
    }

    /// Norm restricted to nodes where `mask` is true.
    pub fn masked_norm(&self, mask: &[bool]) -> f64 {
        let sq: Vec<f64> = self
            .values
            .chunks_exact(self.spin_dim)
            .zip(mask)
            .filter(|(_, &m)| m)
            .flat_map(|(v, _)| v.iter().map(Complex64::norm_sqr))
            .collect();
        (self.grid.cell_volume() * pairwise_sum(&sq)).sqrt()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.difference(other)?.norm())
    }

    /// `‖self − other‖` over the nodes with `|x_k| ≤ fraction · L_k`.
    pub fn interior_distance(&self, other: &Self, fraction: f64) -> Result<f64> {
        Ok(self
            .difference(other)?
            .masked_norm(&self.grid.interior_mask(fraction)))
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            spin_dim: self.spin_dim,
            values,
            time: self.time,
        })
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            spin_dim: self.spin_dim,
            values: self.values.iter().map(|v| v * c).collect(),
            time: self.time,
        }
    }

    /// Multiplies node values by `e^{i φ(x)}`.
    pub fn phase_multiplied(&self, phase: impl Fn(&[f64]) -> f64) -> Self {
        let mut out = self.clone();
        for node in 0..self.grid.len() {
            let p = Complex64::from_polar(1.0, phase(&self.grid.node(node)));
            for v in &mut out.values[node * self.spin_dim..(node + 1) * self.spin_dim] {
                *v *= p;
            }
        }
        out
    }

    /// Fraction of the squared norm carried by the outermost cell layer.
    pub fn boundary_mass_fraction(&self) -> f64 {
        let total = self.norm_sq();
        if total == 0.0 {
            return 0.0;
        }
        self.masked_norm(&self.grid.boundary_mask()).powi(2) / total
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.spin_dim as u32).to_le_bytes())?;
        for &n in &self.grid.points {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for &l in &self.grid.half_width {
            w.write_all(&l.to_le_bytes())?;
        }
        w.write_all(&self.time.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 16);
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Input("not a state snapshot (bad magic)".into()));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32_buf)?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Input(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let dim = read_u32(&mut r)? as usize;
        let spin_dim = read_u32(&mut r)? as usize;
        let points = (0..dim)
            .map(|_| read_u32(&mut r).map(|n| n as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut f64_buf = [0u8; 8];
        let mut half_width = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut f64_buf)?;
            half_width.push(f64::from_le_bytes(f64_buf));
        }
        r.read_exact(&mut f64_buf)?;
        let time = f64::from_le_bytes(f64_buf);
        let grid = Grid::new(half_width, points)?;
        let mut raw = vec![0u8; grid.len() * spin_dim * 16];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        let mut state = Self::new(grid, spin_dim, values)?;
        state.time = time;
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_snapshot(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_cell_centred() {
        let g = Grid::uniform(1, 12.0, 512).unwrap();
        assert!((g.spacing(0) - 0.046875).abs() < 1e-16);
        assert_eq!(g.coord(0, 0), -12.0 + 0.5 * 0.046875);
        assert_eq!(g.coord(0, 511), 12.0 - 0.5 * 0.046875);
        assert!(Grid::uniform(1, 1.0, 6).is_err());
        assert!(Grid::uniform(1, 1.0, 9).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let g = Grid::new(vec![1.0, 2.0, 3.0], vec![8, 10, 12]).unwrap();
        let mut m = vec![0; 3];
        for idx in [0, 1, 17, 959] {
            g.unflatten(idx, &mut m);
            assert_eq!(g.flatten(&m), idx);
        }
        g.unflatten(12, &mut m);
        assert_eq!(m, vec![0, 1, 0]);
    }

    #[test]
    fn gaussian_is_normalized() {
        let g = Grid::uniform(2, 8.0, 64).unwrap();
        let p = GaussianPacket {
            center: vec![0.5, -0.3],
            width: 0.9,
            momentum: vec![1.0, 0.0],
        };
        let st = GridState::gaussian(g, &p);
        assert!((st.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_packet_solves_the_free_equation() {
        // i ∂_t ψ = −(1/2m) ψ'' checked by finite differences
        let p = GaussianPacket {
            center: vec![0.3],
            width: 0.8,
            momentum: vec![1.5],
        };
        let m = 1.7;
        let (t, h, dt) = (0.4, 1e-3, 1e-4);
        for x in [-1.0, 0.0, 0.7, 2.0] {
            let f = |t: f64, x: f64| p.evolve_free(t, m, &[x]);
            let dtf = (f(t + dt, x) - f(t - dt, x)) / (2.0 * dt);
            let lap = (f(t, x + h) - 2.0 * f(t, x) + f(t, x - h)) / (h * h);
            let resid = Complex64::new(0.0, 1.0) * dtf + lap / (2.0 * m);
            assert!(resid.norm() < 1e-5, "residual {resid} at x={x}");
        }
        assert!((p.evolve_free(0.0, m, &[0.1]) - p.eval(&[0.1])).norm() < 1e-15);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = Grid::new(vec![3.0, 1.5], vec![8, 10]).unwrap();
        let vals: Vec<Complex64> = (0..160)
            .map(|i| Complex64::new((i as f64).sin() / 3.0, -(i as f64).sqrt()))
            .collect();
        let mut st = GridState::new(g, 2, vals).unwrap();
        st.time = 0.375;
        let mut buf = Vec::new();
        st.write_snapshot(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FSLC");
        assert_eq!(buf.len(), 4 + 4 * 3 + 4 * 2 + 8 * 2 + 8 + 160 * 16);
        let back = GridState::read_snapshot(&buf[..]).unwrap();
        assert_eq!(back, st);
        assert!(GridState::read_snapshot(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn inner_product_and_masks() {
        let g = Grid::uniform(1, 1.0, 10).unwrap();
        let a = GridState::from_fn(g.clone(), |_| Complex64::new(1.0, 0.0));
        let b = GridState::from_fn(g.clone(), |_| Complex64::new(0.0, 2.0));
        assert!((a.inner(&b).unwrap() - Complex64::new(0.0, 4.0)).norm() < 1e-14);
        assert_eq!(g.interior_mask(0.8).iter().filter(|&&m| m).count(), 8);
        assert_eq!(g.boundary_mask().iter().filter(|&&m| m).count(), 2);
        assert!((a.boundary_mass_fraction() - 0.2).abs() < 1e-14);
    }
}
