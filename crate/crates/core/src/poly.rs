//! Exact polynomials in space and time.
//!
//! A [`PolySpaceTime`] is a finite sum `Σ c · x^α · t^k` over multi-indices `α`
//! of length `dim`. Terms are kept in a canonical order with no zero
//! coefficients, so structural equality is polynomial equality.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde_json::Value;

use crate::error::{Error, Result};

/// One monomial `c · x^α · t^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term<'a> {
    pub alpha: &'a [u32],
    pub k: u32,
    pub coeff: f64,
}

#[derive(Clone, PartialEq, Default)]
pub struct PolySpaceTime {
    dim: usize,
    // `dim + 1` exponents per term, the time exponent last
    exps: Vec<u32>,
    coeffs: Vec<f64>,
}

type Key = (Vec<u32>, u32);

impl PolySpaceTime {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            exps: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(dim, &vec![0; dim], 0, c)
    }

    /// The coordinate function `x_j`.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut alpha = vec![0; dim];
        alpha[j] = 1;
        Self::monomial(dim, &alpha, 0, 1.0)
    }

    pub fn time(dim: usize) -> Self {
        Self::monomial(dim, &vec![0; dim], 1, 1.0)
    }

    pub fn monomial(dim: usize, alpha: &[u32], k: u32, c: f64) -> Self {
        assert_eq!(alpha.len(), dim, "multi-index length must equal dim");
        Self::from_map(dim, std::iter::once(((alpha.to_vec(), k), c)).collect())
    }

    /// Builds a polynomial from `(α, k, c)` triples; repeated keys are summed.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, u32, f64)>,
    {
        let mut map: BTreeMap<Key, f64> = BTreeMap::new();
        for (alpha, k, c) in terms {
            if alpha.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: alpha.len(),
                });
            }
            if !c.is_finite() {
                return Err(Error::Input(format!("non-finite coefficient {c}")));
            }
            *map.entry((alpha, k)).or_insert(0.0) += c;
        }
        Ok(Self::from_map(dim, map))
    }

    fn from_map(dim: usize, map: BTreeMap<Key, f64>) -> Self {
        let mut exps = Vec::with_capacity(map.len() * (dim + 1));
        let mut coeffs = Vec::with_capacity(map.len());
        for ((alpha, k), c) in map {
            if c == 0.0 {
                continue;
            }
            exps.extend_from_slice(&alpha);
            exps.push(k);
            coeffs.push(c);
        }
        Self { dim, exps, coeffs }
    }

    fn to_map(&self) -> BTreeMap<Key, f64> {
        self.terms()
            .map(|t| ((t.alpha.to_vec(), t.k), t.coeff))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = Term<'_>> + '_ {
        let stride = self.dim + 1;
        self.coeffs.iter().enumerate().map(move |(i, &coeff)| {
            let e = &self.exps[i * stride..(i + 1) * stride];
            Term {
                alpha: &e[..self.dim],
                k: e[self.dim],
                coeff,
            }
        })
    }

    /// Largest total spatial degree `|α|`; zero for the zero polynomial.
    pub fn degree_x(&self) -> u32 {
        self.terms()
            .map(|t| t.alpha.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn degree_t(&self) -> u32 {
        self.terms().map(|t| t.k).max().unwrap_or(0)
    }

    /// Largest `|α| + k` over all terms.
    pub fn total_degree(&self) -> u32 {
        self.terms()
            .map(|t| t.alpha.iter().sum::<u32>() + t.k)
            .max()
            .unwrap_or(0)
    }

    /// Evaluates at `(t, x)`; `x.len()` must equal `dim` (checked in debug builds).
    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let stride = self.dim + 1;
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let e = &self.exps[i * stride..(i + 1) * stride];
            let mut m = c;
            for (xj, &aj) in x.iter().zip(e) {
                if aj != 0 {
                    m *= xj.powi(aj as i32);
                }
            }
            let k = e[self.dim];
            if k != 0 {
                m *= t.powi(k as i32);
            }
            acc += m;
        }
        acc
    }

    pub fn try_eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.eval(t, x))
    }

    /// Exact partial derivative in `x_j`.
    pub fn deriv_x(&self, j: usize) -> Self {
        assert!(j < self.dim, "axis {j} out of range for dim {}", self.dim);
        let map = self
            .terms()
            .filter(|t| t.alpha[j] > 0)
            .map(|t| {
                let mut alpha = t.alpha.to_vec();
                let p = alpha[j];
                alpha[j] -= 1;
                ((alpha, t.k), t.coeff * p as f64)
            })
            .collect();
        Self::from_map(self.dim, map)
    }

    /// Exact partial derivative in `t`.
    pub fn deriv_t(&self) -> Self {
        let map = self
            .terms()
            .filter(|t| t.k > 0)
            .map(|t| ((t.alpha.to_vec(), t.k - 1), t.coeff * t.k as f64))
            .collect();
        Self::from_map(self.dim, map)
    }

    /// `∂_x^α`.
    pub fn deriv(&self, alpha: &[u32]) -> Self {
        let mut p = self.clone();
        for (j, &n) in alpha.iter().enumerate() {
            for _ in 0..n {
                p = p.deriv_x(j);
            }
        }
        p
    }

    pub fn scale(&self, s: f64) -> Self {
        let map = self
            .terms()
            .map(|t| ((t.alpha.to_vec(), t.k), t.coeff * s))
            .collect();
        Self::from_map(self.dim, map)
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::constant(self.dim, 1.0);
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    /// Re-expresses a polynomial in `dim` variables as one in `new_dim`
    /// variables, mapping variable `j` to `offset + j`.
    pub fn embed(&self, new_dim: usize, offset: usize) -> Self {
        assert!(offset + self.dim <= new_dim);
        let map = self
            .terms()
            .map(|t| {
                let mut alpha = vec![0; new_dim];
                alpha[offset..offset + self.dim].copy_from_slice(t.alpha);
                ((alpha, t.k), t.coeff)
            })
            .collect();
        Self::from_map(new_dim, map)
    }

    /// Rows `[α_1, …, α_d, k, c]` with integer exponents.
    pub fn to_rows(&self) -> Value {
        Value::Array(
            self.terms()
                .map(|t| {
                    let mut row: Vec<Value> = t.alpha.iter().map(|&a| Value::from(a)).collect();
                    row.push(Value::from(t.k));
                    row.push(Value::from(t.coeff));
                    Value::Array(row)
                })
                .collect(),
        )
    }

    pub fn from_rows(dim: usize, rows: &Value) -> Result<Self> {
        let rows = rows
            .as_array()
            .ok_or_else(|| Error::Input("polynomial must be an array of rows".into()))?;
        let mut terms = Vec::with_capacity(rows.len());
        for row in rows {
            let row = row
                .as_array()
                .ok_or_else(|| Error::Input("polynomial row must be an array".into()))?;
            if row.len() != dim + 2 {
                return Err(Error::Input(format!(
                    "polynomial row has {} entries, expected dim + 2 = {}",
                    row.len(),
                    dim + 2
                )));
            }
            let exps = row[..=dim]
                .iter()
                .map(exponent)
                .collect::<Result<Vec<u32>>>()?;
            let c = row[dim + 1]
                .as_f64()
                .ok_or_else(|| Error::Input("coefficient must be a number".into()))?;
            terms.push((exps[..dim].to_vec(), exps[dim], c));
        }
        Self::from_terms(dim, terms)
    }
}

fn exponent(v: &Value) -> Result<u32> {
    if let Some(u) = v.as_u64() {
        return u32::try_from(u).map_err(|_| Error::Input(format!("exponent {u} too large")));
    }
    match v.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f <= u32::MAX as f64 => Ok(f as u32),
        _ => Err(Error::Input(format!(
            "exponent must be a non-negative integer, got {v}"
        ))),
    }
}

impl fmt::Debug for PolySpaceTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly[d={}](", self.dim)?;
        for (i, t) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}·x^{:?}·t^{}", t.coeff, t.alpha, t.k)?;
        }
        write!(f, ")")
    }
}

impl Add for &PolySpaceTime {
    type Output = PolySpaceTime;
    fn add(self, rhs: &PolySpaceTime) -> PolySpaceTime {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial sum");
        let mut map = self.to_map();
        for t in rhs.terms() {
            *map.entry((t.alpha.to_vec(), t.k)).or_insert(0.0) += t.coeff;
        }
        PolySpaceTime::from_map(self.dim, map)
    }
}

impl Sub for &PolySpaceTime {
    type Output = PolySpaceTime;
    fn sub(self, rhs: &PolySpaceTime) -> PolySpaceTime {
        self + &(-rhs)
    }
}

impl Neg for &PolySpaceTime {
    type Output = PolySpaceTime;
    fn neg(self) -> PolySpaceTime {
        self.scale(-1.0)
    }
}

impl Mul for &PolySpaceTime {
    type Output = PolySpaceTime;
    fn mul(self, rhs: &PolySpaceTime) -> PolySpaceTime {
        assert_eq!(
            self.dim, rhs.dim,
            "dimension mismatch in polynomial product"
        );
        let mut map: BTreeMap<Key, f64> = BTreeMap::new();
        for a in self.terms() {
            for b in rhs.terms() {
                let alpha: Vec<u32> = a.alpha.iter().zip(b.alpha).map(|(p, q)| p + q).collect();
                *map.entry((alpha, a.k + b.k)).or_insert(0.0) += a.coeff * b.coeff;
            }
        }
        PolySpaceTime::from_map(self.dim, map)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for PolySpaceTime {
            type Output = PolySpaceTime;
            fn $method(self, rhs: PolySpaceTime) -> PolySpaceTime {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for PolySpaceTime {
    type Output = PolySpaceTime;
    fn neg(self) -> PolySpaceTime {
        -&self
    }
}

/// All multi-indices of length `dim` with `1 <= |α| <= max_order`, graded.
pub fn multi_indices(dim: usize, max_order: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for order in 1..=max_order {
        let mut cur = vec![0u32; dim];
        fill(&mut out, &mut cur, 0, order);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, axis: usize, remaining: u32) {
    if axis + 1 == cur.len() {
        cur[axis] = remaining;
        out.push(cur.clone());
        return;
    }
    for a in (0..=remaining).rev() {
        cur[axis] = a;
        fill(out, cur, axis + 1, remaining - a);
    }
    cur[axis] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(d: usize, j: usize) -> PolySpaceTime {
        PolySpaceTime::coordinate(d, j)
    }

    #[test]
    fn zero_coefficients_are_dropped() {
        let p = &x(1, 0) - &x(1, 0);
        assert!(p.is_zero());
        assert_eq!(p, PolySpaceTime::zero(1));
    }

    #[test]
    fn duplicate_keys_sum() {
        let p = PolySpaceTime::from_terms(1, vec![(vec![2], 0, 1.0), (vec![2], 0, 2.0)]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.eval(0.0, &[2.0]), 12.0);
    }

    #[test]
    fn eval_examples() {
        // x^4 + t·x at t=2, x=1
        let p = &x(1, 0).pow(4) + &(&PolySpaceTime::time(1) * &x(1, 0));
        assert_eq!(p.eval(2.0, &[1.0]), 3.0);
        let r2 = &x(2, 0).pow(2) + &x(2, 1).pow(2);
        assert_eq!(r2.pow(2).eval(0.0, &[1.0, 1.0]), 4.0);
    }

    #[test]
    fn derivatives_drop_degree() {
        let p = &(&x(2, 0).pow(3) * &x(2, 1)) + &(&PolySpaceTime::time(2).pow(2) * &x(2, 0));
        let dx = p.deriv_x(0);
        // 3x0^2 x1 + t^2
        assert_eq!(dx.eval(1.5, &[2.0, 3.0]), 3.0 * 4.0 * 3.0 + 2.25);
        let dt = p.deriv_t();
        assert_eq!(dt.eval(1.5, &[2.0, 3.0]), 2.0 * 1.5 * 2.0);
        assert_eq!(p.deriv(&[3, 1]), PolySpaceTime::constant(2, 6.0));
        assert!(p.deriv(&[4, 0]).is_zero());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = x(2, 0);
        assert!(matches!(
            p.try_eval(0.0, &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(PolySpaceTime::from_terms(2, vec![(vec![1], 0, 1.0)]).is_err());
    }

    #[test]
    fn rows_round_trip() {
        let p = PolySpaceTime::from_terms(
            2,
            vec![
                (vec![4, 0], 0, 1.0),
                (vec![1, 2], 1, -0.1),
                (vec![0, 0], 3, 1e-300),
            ],
        )
        .unwrap();
        let text = serde_json::to_string(&p.to_rows()).unwrap();
        let back = PolySpaceTime::from_rows(2, &serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn rows_reject_fractional_exponents() {
        let v: Value = serde_json::from_str("[[1.5, 0, 1.0]]").unwrap();
        assert!(PolySpaceTime::from_rows(1, &v).is_err());
        let v: Value = serde_json::from_str("[[2, 0]]").unwrap();
        assert!(PolySpaceTime::from_rows(1, &v).is_err());
    }

    #[test]
    fn multi_index_counts() {
        // number of α with 1 <= |α| <= 3 in 2 variables: 2 + 3 + 4
        assert_eq!(multi_indices(2, 3).len(), 9);
        assert_eq!(multi_indices(1, 3), vec![vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn embed_shifts_variables() {
        let p = &x(1, 0).pow(2) + &PolySpaceTime::time(1);
        let q = p.embed(2, 1);
        assert_eq!(q.eval(0.5, &[7.0, 3.0]), 9.5);
    }
}
