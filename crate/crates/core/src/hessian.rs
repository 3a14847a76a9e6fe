//! Smallest Hessian eigenvalue of the scalar potential against the lower
//! bounds available for the standard convex families.

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::linalg::{jacobi_eigen, min_eigenvalue};
use crate::poly::PolySpaceTime as Poly;

/// Potential families with a known Hessian lower bound. `matrix` is a
/// regular `d × d` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub enum HessianFamily {
    /// `|x|^{2(M+1)}`
    PowerOfNorm {
        m: u32,
    },
    /// `|Ax|^{2(M+1)}`
    LinearImage {
        m: u32,
        matrix: Vec<f64>,
    },
    /// `(1 + |Ax|²)^{M+1}`; only integer `M` gives a polynomial.
    ShiftedLinearImage {
        m: f64,
        matrix: Vec<f64>,
    },
    Unspecified,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HessianReport {
    pub min_eigenvalue: f64,
    /// Weakest bound of the chain, `None` when unavailable for the family.
    pub bound: Option<f64>,
    /// Every bound in the chain, tightest first.
    pub chain: Vec<f64>,
}

impl HessianReport {
    pub fn margin(&self) -> Option<f64> {
        self.bound.map(|b| self.min_eigenvalue - b)
    }

    pub fn chain_margin(&self) -> Option<f64> {
        self.chain
            .iter()
            .map(|b| self.min_eigenvalue - b)
            .reduce(f64::min)
    }
}

fn norm_sq_of_image(matrix: &[f64], d: usize, x: &[f64]) -> f64 {
    (0..d)
        .map(|i| {
            let r: f64 = (0..d).map(|j| matrix[i * d + j] * x[j]).sum();
            r * r
        })
        .sum()
}

/// Smallest eigenvalue of `AᵗA`.
pub fn beta(matrix: &[f64], d: usize) -> f64 {
    let mut ata = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            ata[i * d + j] = (0..d).map(|k| matrix[k * d + i] * matrix[k * d + j]).sum();
        }
    }
    jacobi_eigen(&ata, d).0[0]
}

impl HessianFamily {
    fn check_matrix(matrix: &[f64], d: usize) -> Result<()> {
        if matrix.len() != d * d {
            return Err(Error::Dimension {
                expected: d * d,
                got: matrix.len(),
            });
        }
        Ok(())
    }

    /// The family member itself as a polynomial, when it is one.
    pub fn potential(&self, d: usize) -> Result<Poly> {
        let r2 = |matrix: Option<&[f64]>| -> Poly {
            (0..d)
                .map(|i| match matrix {
                    Some(a) => (0..d)
                        .map(|j| Poly::coordinate(d, j).scale(a[i * d + j]))
                        .fold(Poly::zero(d), |acc, p| &acc + &p),
                    None => Poly::coordinate(d, i),
                })
                .map(|row| row.pow(2))
                .fold(Poly::zero(d), |acc, p| &acc + &p)
        };
        match self {
            Self::PowerOfNorm { m } => Ok(r2(None).pow(m + 1)),
            Self::LinearImage { m, matrix } => {
                Self::check_matrix(matrix, d)?;
                Ok(r2(Some(matrix)).pow(m + 1))
            }
            Self::ShiftedLinearImage { m, matrix } => {
                Self::check_matrix(matrix, d)?;
                if m.fract() != 0.0 || *m < 0.0 {
                    return Err(Error::Input(format!(
                        "exponent M = {m} does not give a polynomial"
                    )));
                }
                Ok((&Poly::constant(d, 1.0) + &r2(Some(matrix))).pow(*m as u32 + 1))
            }
            Self::Unspecified => Err(Error::Input(
                "no potential for an unspecified family".into(),
            )),
        }
    }

    fn bounds(&self, d: usize, x: &[f64]) -> Result<Vec<f64>> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Ok(match self {
            Self::PowerOfNorm { m } => {
                let m = *m as f64;
                vec![2.0 * (m + 1.0) * r2.powf(m)]
            }
            Self::LinearImage { m, matrix } => {
                Self::check_matrix(matrix, d)?;
                let b = beta(matrix, d);
                let m = *m as f64;
                let ax2 = norm_sq_of_image(matrix, d, x);
                vec![
                    2.0 * (m + 1.0) * b * ax2.powf(m),
                    2.0 * (m + 1.0) * b.powf(m + 1.0) * r2.powf(m),
                ]
            }
            Self::ShiftedLinearImage { m, matrix } => {
                Self::check_matrix(matrix, d)?;
                if m.fract() != 0.0 {
                    return Ok(Vec::new());
                }
                let b = beta(matrix, d);
                let ax2 = norm_sq_of_image(matrix, d, x);
                let c = 2.0 * (m + 1.0) * b;
                vec![
                    c * (1.0 + ax2).powf(*m),
                    c * (1.0 + b * r2).powf(*m),
                    2.0 * (m + 1.0) * b.powf(m + 1.0) * r2.powf(*m),
                ]
            }
            Self::Unspecified => Vec::new(),
        })
    }
}

/// Second-derivative matrix of the single-particle potential at `(t, x)`.
pub fn hessian(fs: &FieldSet, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let d = fs.dim();
    if x.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: x.len(),
        });
    }
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        let di = fs.potential().deriv_x(i);
        for j in i..d {
            let v = di.deriv_x(j).eval(t, x);
            h[i * d + j] = v;
            h[j * d + i] = v;
        }
    }
    Ok(h)
}

pub fn hessian_min_eig(
    fs: &FieldSet,
    family: &HessianFamily,
    t: f64,
    x: &[f64],
) -> Result<HessianReport> {
    let d = fs.dim();
    let h = hessian(fs, t, x)?;
    let chain = family.bounds(d, x)?;
    Ok(HessianReport {
        min_eigenvalue: min_eigenvalue(&h, d),
        bound: chain.last().copied(),
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs_for(family: &HessianFamily, d: usize) -> FieldSet {
        FieldSet::scalar(1.0, d, 1.0, family.potential(d).unwrap()).unwrap()
    }

    #[test]
    fn quartic_norm_at_unit_axis() {
        let fam = HessianFamily::PowerOfNorm { m: 1 };
        let r = hessian_min_eig(&fs_for(&fam, 2), &fam, 0.0, &[1.0, 0.0]).unwrap();
        // Hessian of (x1² + x2²)² at (1, 0) is diag(12, 4)
        assert!((r.min_eigenvalue - 4.0).abs() < 1e-12);
        assert_eq!(r.bound, Some(4.0));
        assert!(r.margin().unwrap().abs() < 1e-12);
    }

    #[test]
    fn harmonic_hessian_is_twice_identity() {
        let fs = FieldSet::scalar(
            1.0,
            3,
            0.0,
            HessianFamily::PowerOfNorm { m: 0 }.potential(3).unwrap(),
        )
        .unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 5.0]] {
            let r = hessian_min_eig(&fs, &HessianFamily::Unspecified, 0.0, &x).unwrap();
            assert!((r.min_eigenvalue - 2.0).abs() < 1e-13);
            assert_eq!(r.bound, None);
        }
    }

    #[test]
    fn shifted_quadratic_squared() {
        let fam = HessianFamily::ShiftedLinearImage {
            m: 1.0,
            matrix: vec![1.0, 0.0, 0.0, 1.0],
        };
        let r = hessian_min_eig(&fs_for(&fam, 2), &fam, 0.0, &[1.0, 0.0]).unwrap();
        // 4(1 + r²)δ + 8 x xᵗ at (1, 0): eigenvalues 16 and 8
        assert!((r.min_eigenvalue - 8.0).abs() < 1e-12);
        assert_eq!(r.bound, Some(4.0));
        assert_eq!(r.chain, vec![8.0, 8.0, 4.0]);
    }

    #[test]
    fn non_integer_exponent_has_no_bound() {
        let fam = HessianFamily::ShiftedLinearImage {
            m: 0.5,
            matrix: vec![1.0],
        };
        assert!(fam.potential(1).is_err());
        let fs = FieldSet::scalar(1.0, 1, 0.0, Poly::coordinate(1, 0).pow(2)).unwrap();
        let r = hessian_min_eig(&fs, &fam, 0.0, &[1.0]).unwrap();
        assert_eq!(r.bound, None);
        assert!((r.min_eigenvalue - 2.0).abs() < 1e-14);
    }

    #[test]
    fn beta_of_diagonal_matrix() {
        assert!((beta(&[2.0, 0.0, 0.0, 0.5], 2) - 0.25).abs() < 1e-14);
    }
}
