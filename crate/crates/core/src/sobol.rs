//! Sobol low-discrepancy sequence with Joe–Kuo direction numbers.

use crate::error::{Error, Result};

// (s, a, m_1..m_s) for dimensions 2..=16
const TABLE: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

const BITS: usize = 32;

pub const MAX_DIM: usize = TABLE.len() + 1;

#[derive(Clone, Debug)]
pub struct Sobol {
    dirs: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Input(format!(
                "Sobol dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        let mut dirs = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        dirs.push(first);
        for &(s, a, m) in &TABLE[..dim - 1] {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for l in 1..s {
                        if (a >> (s - 1 - l)) & 1 == 1 {
                            x ^= v[k - l];
                        }
                    }
                    x
                };
            }
            dirs.push(v);
        }
        Ok(Self {
            dirs,
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Next point in `[0, 1)^dim`; the first point is the origin.
    pub fn next_point(&mut self) -> Vec<f64> {
        let out = self
            .state
            .iter()
            .map(|&s| s as f64 / 4_294_967_296.0)
            .collect();
        let c = self.index.trailing_ones() as usize;
        for (s, d) in self.state.iter_mut().zip(&self.dirs) {
            *s ^= d[c.min(BITS - 1)];
        }
        self.index += 1;
        out
    }

    /// First `n` points scaled into the box `lo..hi` per axis.
    pub fn sample_box(dim: usize, n: usize, lo: &[f64], hi: &[f64]) -> Result<Vec<Vec<f64>>> {
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: lo.len().min(hi.len()),
            });
        }
        let mut seq = Self::new(dim)?;
        Ok((0..n)
            .map(|_| {
                seq.next_point()
                    .into_iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(u, (&a, &b))| a + (b - a) * u)
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_dimension_is_van_der_corput_in_gray_order() {
        let mut s = Sobol::new(1).unwrap();
        let xs: Vec<f64> = (0..4).map(|_| s.next_point()[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 0.75, 0.25]);
    }

    #[test]
    fn every_axis_is_stratified_over_dyadic_blocks() {
        let mut s = Sobol::new(MAX_DIM).unwrap();
        let n = 1 << 10;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| s.next_point()).collect();
        for axis in 0..MAX_DIM {
            let mut seen = vec![false; n];
            for p in &pts {
                let cell = (p[axis] * n as f64) as usize;
                assert!(!seen[cell], "axis {axis} has two points in cell {cell}");
                seen[cell] = true;
            }
        }
    }

    #[test]
    fn pairs_of_axes_form_nets() {
        // any 2-D projection of the first 2^k points puts equal mass in
        // each of the 4 quadrant-like dyadic boxes of area 1/4
        let mut s = Sobol::new(6).unwrap();
        let pts: Vec<Vec<f64>> = (0..256).map(|_| s.next_point()).collect();
        for a in 0..6 {
            for b in a + 1..6 {
                let mut counts = [0; 4];
                for p in &pts {
                    let i = (p[a] >= 0.5) as usize * 2 + (p[b] >= 0.5) as usize;
                    counts[i] += 1;
                }
                assert_eq!(counts, [64; 4], "axes {a},{b}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_dimension() {
        assert!(Sobol::new(0).is_err());
        assert!(Sobol::new(MAX_DIM + 1).is_err());
    }
}
