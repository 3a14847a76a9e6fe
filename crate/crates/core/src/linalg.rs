//! Dense linear algebra for the tiny matrices that show up here (d ≤ 4,
//! spin degree ≤ 4). Row-major storage throughout.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as the
/// columns of a row-major `n × n` matrix.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(1.0);
    for _sweep in 0..100 {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let vals = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + col] = v[r * n + src];
        }
    }
    (vals, vecs)
}

pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    jacobi_eigen(a, n).0[0]
}

/// LU factorization with partial pivoting; returns `None` for a singular matrix.
fn lu(a: &[f64], n: usize) -> Option<(Vec<f64>, Vec<usize>, f64)> {
    let mut m = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs()))?;
        if m[p * n + k] == 0.0 {
            return None;
        }
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            let f = m[i * n + k] / m[k * n + k];
            m[i * n + k] = f;
            for c in k + 1..n {
                m[i * n + c] -= f * m[k * n + c];
            }
        }
    }
    Some((m, perm, sign))
}

pub fn det(a: &[f64], n: usize) -> f64 {
    match lu(a, n) {
        Some((m, _, sign)) => (0..n).map(|i| m[i * n + i]).product::<f64>() * sign,
        None => 0.0,
    }
}

pub fn solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let (m, perm, _) = lu(a, n).ok_or_else(|| Error::Convergence("singular matrix".into()))?;
    let mut x: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for k in 0..i {
            x[i] -= m[i * n + k] * x[k];
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= m[i * n + k] * x[k];
        }
        x[i] /= m[i * n + i];
    }
    Ok(x)
}

pub fn inverse(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = solve(a, n, &e)?;
        for r in 0..n {
            inv[r * n + c] = col[r];
        }
    }
    Ok(inv)
}

/// Largest singular value.
pub fn spectral_norm(a: &[f64], n: usize) -> f64 {
    let mut ata = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            ata[i * n + j] = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
        }
    }
    let (vals, _) = jacobi_eigen(&ata, n);
    vals[n - 1].max(0.0).sqrt()
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("matrix must be square".into()));
        }
        Ok(Self {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn diag(d: &[Complex64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    pub fn from_data(n: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data has the wrong length");
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let n = self.n;
        assert_eq!(n, rhs.n);
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    /// `y = self · x`.
    #[inline]
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.n;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.data[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Frobenius norm; an upper bound for the operator norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖F*F − I‖` in the Frobenius norm.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .sub(&Self::identity(self.n))
            .norm()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).norm()
    }

    /// `exp(−i·H·τ)` for Hermitian `H`, via the real symmetric embedding
    /// `[[Re H, −Im H], [Im H, Re H]]`.
    pub fn expm_hermitian(&self, tau: f64) -> Self {
        let n = self.n;
        let m = 2 * n;
        let mut emb = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let h = self.get(i, j);
                emb[i * m + j] = h.re;
                emb[(i + n) * m + (j + n)] = h.re;
                emb[i * m + (j + n)] = -h.im;
                emb[(i + n) * m + j] = h.im;
            }
        }
        let (vals, vecs) = jacobi_eigen(&emb, m);
        // every eigenvalue of H appears twice in the embedding, hence the 1/2
        let mut out = Self::zeros(n);
        for (k, &lam) in vals.iter().enumerate() {
            let w: Vec<Complex64> = (0..n)
                .map(|r| Complex64::new(vecs[r * m + k], vecs[(r + n) * m + k]))
                .collect();
            let phase = Complex64::from_polar(0.5, -lam * tau);
            for i in 0..n {
                for j in 0..n {
                    out.data[i * n + j] += phase * w[i] * w[j].conj();
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = [4.0, 1.0, -2.0, 1.0, 3.0, 0.5, -2.0, 0.5, 1.0];
        let (vals, vecs) = jacobi_eigen(&a, 3);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3)
                    .map(|k| vecs[i * 3 + k] * vals[k] * vecs[j * 3 + k])
                    .sum();
                assert!((r - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        // trace and determinant are invariant
        assert!((vals.iter().sum::<f64>() - 8.0).abs() < 1e-12);
        assert!((vals.iter().product::<f64>() - det(&a, 3)).abs() < 1e-10);
    }

    #[test]
    fn jacobi_diagonal_and_2x2() {
        assert_eq!(jacobi_eigen(&[3.0, 0.0, 0.0, -1.0], 2).0, vec![-1.0, 3.0]);
        let (v, _) = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn solve_and_inverse() {
        let a = [0.0, 2.0, 1.0, 1.0];
        let x = solve(&a, 2, &[4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert_eq!(det(&a, 2), -2.0);
        let inv = inverse(&a, 2).unwrap();
        assert!((inv[0] + 0.5).abs() < 1e-15 && (inv[1] - 1.0).abs() < 1e-15);
        assert!(solve(&[1.0, 2.0, 2.0, 4.0], 2, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn spectral_norm_of_rotation_and_scaling() {
        let a = [0.0, -3.0, 3.0, 0.0];
        assert!((spectral_norm(&a, 2) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn expm_of_pauli_matrices() {
        // exp(−i σ_y τ) = cos τ I − i sin τ σ_y
        let sy = CMat::from_rows(vec![
            vec![c(0.0, 0.0), c(0.0, -1.0)],
            vec![c(0.0, 1.0), c(0.0, 0.0)],
        ])
        .unwrap();
        let tau = 0.7;
        let f = sy.expm_hermitian(tau);
        let expect = CMat::identity(2)
            .scale(c(tau.cos(), 0.0))
            .add(&sy.scale(c(0.0, -tau.sin())));
        assert!(f.max_abs_diff(&expect) < 1e-13);
        assert!(f.unitarity_defect() < 1e-13);

        let sz = CMat::diag(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        let f = sz.expm_hermitian(tau);
        assert!((f.get(0, 0) - Complex64::from_polar(1.0, -tau)).norm() < 1e-14);
        assert!((f.get(1, 1) - Complex64::from_polar(1.0, tau)).norm() < 1e-14);
    }

    #[test]
    fn expm_matches_series_for_general_hermitian() {
        let h = CMat::from_rows(vec![
            vec![c(0.3, 0.0), c(0.2, -0.5), c(-0.1, 0.4)],
            vec![c(0.2, 0.5), c(-1.0, 0.0), c(0.6, 0.1)],
            vec![c(-0.1, -0.4), c(0.6, -0.1), c(0.8, 0.0)],
        ])
        .unwrap();
        assert!(h.hermiticity_defect() < 1e-15);
        let tau = 0.4;
        let step = h.scale(c(0.0, -tau));
        let mut term = CMat::identity(3);
        let mut series = CMat::identity(3);
        for k in 1..40 {
            term = term.matmul(&step).scale(c(1.0 / k as f64, 0.0));
            series = series.add(&term);
        }
        assert!(h.expm_hermitian(tau).max_abs_diff(&series) < 1e-13);
    }
}
