//! Identical particles on a tensor-product grid: exchange, (anti)symmetric
//! projections and the symmetry-preservation checks for sliced propagators.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::grid::{Grid, GridState};
use crate::kernel::apply_step;
use crate::slicing::{compose, Partition, SliceOptions};
use crate::sobol::Sobol;
use crate::spin::SpinHamiltonian;

/// Largest accepted defect of an input claimed to be (anti)symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Particle `p` owns grid axes `p·dim .. (p+1)·dim` and spin factor `p`;
/// spin indices are row-major over the factors, particle 0 slowest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisMap {
    pub particles: usize,
    pub dim: usize,
    pub spin_factors: Vec<usize>,
}

impl AxisMap {
    pub fn new(particles: usize, dim: usize, spin_per_particle: usize) -> Result<Self> {
        if particles == 0 || dim == 0 || spin_per_particle == 0 {
            return Err(Error::Input("particles, dimension and spin degree must be >= 1".into()));
        }
        Ok(Self { particles, dim, spin_factors: vec![spin_per_particle; particles] })
    }

    pub fn axes(&self, particle: usize) -> std::ops::Range<usize> {
        particle * self.dim..(particle + 1) * self.dim
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_factors.iter().product()
    }

    fn check_particles(&self, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.particles || j >= self.particles {
            return Err(Error::Input(format!(
                "cannot exchange particles {i} and {j} of {}",
                self.particles
            )));
        }
        Ok(())
    }

    fn spin_unflatten(&self, mut s: usize, out: &mut [usize]) {
        for p in (0..self.particles).rev() {
            out[p] = s % self.spin_factors[p];
            s /= self.spin_factors[p];
        }
    }

    fn spin_flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.spin_factors).fold(0, |acc, (i, n)| acc * n + i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManyBodyState {
    state: GridState,
    map: AxisMap,
}

impl ManyBodyState {
    pub fn new(state: GridState, map: AxisMap) -> Result<Self> {
        let expected = map.particles * map.dim;
        if state.grid().dim() != expected {
            return Err(Error::Dimension { expected, got: state.grid().dim() });
        }
        if state.spin_dim() != map.spin_dim() {
            return Err(Error::Dimension { expected: map.spin_dim(), got: state.spin_dim() });
        }
        Ok(Self { state, map })
    }

    /// Tensor product of single-particle states sharing one grid.
    pub fn product(factors: &[GridState]) -> Result<Self> {
        let first = factors.first().ok_or_else(|| Error::Input("no factors".into()))?;
        let (g1, l1) = (first.grid(), first.spin_dim());
        if factors.iter().any(|f| f.grid() != g1 || f.spin_dim() != l1) {
            return Err(Error::Input("factors must share grid and spin degree".into()));
        }
        let np = factors.len();
        let map = AxisMap::new(np, g1.dim(), l1)?;
        let mut half = Vec::with_capacity(np * g1.dim());
        let mut points = Vec::with_capacity(np * g1.dim());
        for _ in 0..np {
            half.extend_from_slice(g1.half_width());
            points.extend_from_slice(g1.points());
        }
        let grid = Grid::new(half, points)?;
        let ls = map.spin_dim();
        let n1 = g1.len();
        let mut values = Vec::with_capacity(grid.len() * ls);
        let mut nodes = vec![0usize; np];
        let mut spins = vec![0usize; np];
        for node in 0..grid.len() {
            let mut rest = node;
            for p in (0..np).rev() {
                nodes[p] = rest % n1;
                rest /= n1;
            }
            for s in 0..ls {
                map.spin_unflatten(s, &mut spins);
                let v = (0..np).fold(Complex64::new(1.0, 0.0), |acc, p| {
                    acc * factors[p].values()[nodes[p] * l1 + spins[p]]
                });
                values.push(v);
            }
        }
        Self::new(GridState::new(grid, ls, values)?, map)
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn into_state(self) -> GridState {
        self.state
    }

    pub fn map(&self) -> &AxisMap {
        &self.map
    }

    pub fn with_state(&self, state: GridState) -> Result<Self> {
        Self::new(state, self.map.clone())
    }

    /// Swaps the positions and spin factors of particles `i` and `j`.
    pub fn exchange(&self, i: usize, j: usize) -> Result<Self> {
        self.map.check_particles(i, j)?;
        let grid = self.state.grid();
        let (ai, aj) = (self.map.axes(i), self.map.axes(j));
        for (a, b) in ai.clone().zip(aj.clone()) {
            if grid.points()[a] != grid.points()[b] || grid.half_width()[a] != grid.half_width()[b] {
                return Err(Error::Input(format!(
                    "particles {i} and {j} are discretized differently"
                )));
            }
        }
        let l = self.state.spin_dim();
        let src = self.state.values();
        let mut values = vec![Complex64::new(0.0, 0.0); src.len()];
        let mut idx = vec![0usize; grid.dim()];
        let mut spins = vec![0usize; self.map.particles];
        let spin_perm: Vec<usize> = (0..l)
            .map(|s| {
                self.map.spin_unflatten(s, &mut spins);
                spins.swap(i, j);
                self.map.spin_flatten(&spins)
            })
            .collect();
        for node in 0..grid.len() {
            grid.unflatten(node, &mut idx);
            for (a, b) in ai.clone().zip(aj.clone()) {
                idx.swap(a, b);
            }
            let from = grid.flatten(&idx);
            for s in 0..l {
                values[node * l + s] = src[from * l + spin_perm[s]];
            }
        }
        self.with_state(self.state.with_values(values)?)
    }

    fn two_particle_projection(&self, sign: f64) -> Result<Self> {
        if self.map.particles != 2 {
            return Err(Error::Input("projections are defined for two particles".into()));
        }
        let swapped = self.exchange(0, 1)?;
        let values = self
            .state
            .values()
            .iter()
            .zip(swapped.state.values())
            .map(|(a, b)| (a + b * sign) * 0.5)
            .collect();
        self.with_state(self.state.with_values(values)?)
    }

    pub fn symmetrize(&self) -> Result<Self> {
        self.two_particle_projection(1.0)
    }

    pub fn antisymmetrize(&self) -> Result<Self> {
        self.two_particle_projection(-1.0)
    }

    /// `‖P₁₂ f − parity·f‖ / ‖f‖`.
    pub fn symmetry_defect(&self, parity: Parity) -> Result<f64> {
        let swapped = self.exchange(0, 1)?;
        let target = self.state.scaled(Complex64::new(parity.sign(), 0.0));
        Ok(swapped.state.distance(&target)? / self.state.norm())
    }

    /// Snapshot plus a JSON sidecar holding the axis map.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.state.save(path)?;
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&self.map)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let map: AxisMap = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        Self::new(GridState::load(path)?, map)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Boson,
    Fermion,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Self::Boson => 1.0,
            Self::Fermion => -1.0,
        }
    }
}

/// Checks `P H₁(t, x) P = H₁(t, P x)` at quasi-random points.
pub fn check_spin_exchange(h1: &SpinHamiltonian, map: &AxisMap, tol: f64) -> Result<()> {
    if map.particles != 2 {
        return Err(Error::Input("spin exchange check is defined for two particles".into()));
    }
    let l = map.spin_dim();
    if h1.degree() != l || h1.config_dim() != 2 * map.dim {
        return Err(Error::Dimension { expected: l, got: h1.degree() });
    }
    let mut spins = vec![0usize; 2];
    let perm: Vec<usize> = (0..l)
        .map(|s| {
            map.spin_unflatten(s, &mut spins);
            spins.swap(0, 1);
            map.spin_flatten(&spins)
        })
        .collect();
    let n = h1.config_dim();
    let mut lo = vec![-5.0; n + 1];
    lo[0] = 0.0;
    let hi = vec![5.0; n + 1];
    for p in Sobol::sample_box(n + 1, 64, &lo, &hi)? {
        let (t, x) = (p[0], &p[1..]);
        let mut px = x.to_vec();
        for a in 0..map.dim {
            px.swap(a, map.dim + a);
        }
        let (h, hp) = (h1.eval(t, x), h1.eval(t, &px));
        for r in 0..l {
            for c in 0..l {
                if (h.get(perm[r], perm[c]) - hp.get(r, c)).norm() > tol {
                    return Err(Error::Symmetry(format!(
                        "spin coupling is not exchange symmetric at t = {t}, x = {x:?}"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn check_fields(fs: &FieldSet, h1: Option<&SpinHamiltonian>, st: &ManyBodyState) -> Result<()> {
    if fs.particles() != st.map.particles || fs.dim() != st.map.dim {
        return Err(Error::Input(format!(
            "field set describes {} particles in {} dimensions, state {} in {}",
            fs.particles(),
            fs.dim(),
            st.map.particles,
            st.map.dim
        )));
    }
    if let Some(h) = h1 {
        check_spin_exchange(h, &st.map, 1e-14)?;
    }
    Ok(())
}

/// `‖P₁₂ K_Δ f − parity·K_Δ f‖ / ‖f‖` for an input in the given class.
pub fn symmetry_preservation_check(
    fs: &FieldSet,
    h1: Option<&SpinHamiltonian>,
    part: &Partition,
    st: &ManyBodyState,
    parity: Parity,
    opts: &SliceOptions,
) -> Result<f64> {
    check_fields(fs, h1, st)?;
    let pre = st.symmetry_defect(parity)?;
    if pre > SYMMETRY_TOL {
        return Err(Error::Symmetry(format!(
            "input is not {parity:?}-symmetric: defect {pre:.3e}"
        )));
    }
    let out = compose(fs, h1, part, &st.state, &SliceOptions { keep_intermediate: false, ..*opts })?
        .pop()
        .expect("composition yields a state");
    let out = st.with_state(out)?;
    let swapped = out.exchange(0, 1)?;
    let target = out.state.scaled(Complex64::new(parity.sign(), 0.0));
    Ok(swapped.state.distance(&target)? / st.state.norm())
}

/// `‖P₁₂ C(t, s) f − C(t, s) P₁₂ f‖ / ‖f‖` for one short-time step.
pub fn commutation_defect(
    fs: &FieldSet,
    h1: Option<&SpinHamiltonian>,
    s: f64,
    t: f64,
    st: &ManyBodyState,
    opts: &SliceOptions,
) -> Result<f64> {
    check_fields(fs, h1, st)?;
    let cf = st.with_state(apply_step(fs, h1, s, t, &st.state, &opts.kernel)?)?;
    let pcf = cf.exchange(0, 1)?;
    let pf = st.exchange(0, 1)?;
    let cpf = apply_step(fs, h1, s, t, &pf.state, &opts.kernel)?;
    Ok(pcf.state.distance(&cpf)? / st.state.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GaussianPacket;

    fn single(center: f64, momentum: f64) -> GridState {
        let g = Grid::uniform(1, 4.0, 16).unwrap();
        GridState::gaussian(g, &GaussianPacket { center: vec![center], width: 0.8, momentum: vec![momentum] })
    }

    #[test]
    fn product_exchange_swaps_factors() {
        let (f1, f2) = (single(-1.0, 0.3), single(0.5, -0.2));
        let p12 = ManyBodyState::product(&[f1.clone(), f2.clone()]).unwrap();
        let p21 = ManyBodyState::product(&[f2, f1]).unwrap();
        assert_eq!(p12.exchange(0, 1).unwrap(), p21);
        assert_eq!(p12.exchange(0, 1).unwrap().exchange(1, 0).unwrap(), p12);
        assert!(p12.exchange(0, 0).is_err());
        assert!(p12.exchange(0, 2).is_err());
    }

    #[test]
    fn projections() {
        let (f1, f2) = (single(-1.0, 0.3), single(0.5, -0.2));
        let st = ManyBodyState::product(&[f1.clone(), f2]).unwrap();
        let sym = st.symmetrize().unwrap();
        let anti = st.antisymmetrize().unwrap();
        assert_eq!(sym.exchange(0, 1).unwrap(), sym);
        assert_eq!(sym.symmetry_defect(Parity::Boson).unwrap(), 0.0);
        assert_eq!(anti.symmetry_defect(Parity::Fermion).unwrap(), 0.0);
        assert!(sym.symmetrize().unwrap().state().distance(sym.state()).unwrap() < 1e-15);
        assert!(sym.state().inner(anti.state()).unwrap().norm() < 1e-14);
        let ff = ManyBodyState::product(&[f1.clone(), f1]).unwrap();
        assert!(ff.antisymmetrize().unwrap().state().norm() == 0.0);
    }

    #[test]
    fn spin_factors_are_exchanged() {
        let g = Grid::uniform(1, 4.0, 8).unwrap();
        let up = GridState::from_fn_spinor(g.clone(), &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let down = GridState::from_fn_spinor(g, &[Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], |x| Complex64::new(x[0], 0.0));
        let a = ManyBodyState::product(&[up.clone(), down.clone()]).unwrap();
        let b = ManyBodyState::product(&[down, up]).unwrap();
        assert_eq!(a.map().spin_dim(), 4);
        assert_eq!(a.exchange(0, 1).unwrap(), b);
    }

    #[test]
    fn rejects_wrong_class() {
        let st = ManyBodyState::product(&[single(-1.0, 0.0), single(1.0, 0.0)]).unwrap();
        let fs = FieldSet::free(1.0, 1).with_particles(2).unwrap();
        let err = symmetry_preservation_check(&fs, None, &Partition::uniform(0.0, 0.1, 1).unwrap(), &st, Parity::Boson, &SliceOptions::default());
        assert!(matches!(err, Err(Error::Symmetry(_))));
    }

    #[test]
    fn sidecar_round_trip() {
        let st = ManyBodyState::product(&[single(-1.0, 0.0), single(1.0, 0.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.fslc");
        st.save(&path).unwrap();
        assert_eq!(ManyBodyState::load(&path).unwrap(), st);
    }
}
