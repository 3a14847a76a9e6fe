#![allow(dead_code)]

use fslice::PolySpaceTime as Poly;
use proptest::prelude::*;

/// Polynomials with up to `terms` monomials, spatial degree `≤ deg_x`,
/// time degree `≤ deg_t` and coefficients in `[−1, 1]`.
pub fn poly(dim: usize, deg_x: u32, deg_t: u32, terms: usize) -> impl Strategy<Value = Poly> {
    let term = (
        proptest::collection::vec(0..=deg_x, dim),
        0..=deg_t,
        -1.0f64..1.0,
    );
    proptest::collection::vec(term, 1..=terms).prop_map(move |ts| {
        let ts = ts.into_iter().map(|(mut alpha, k, c)| {
            while alpha.iter().sum::<u32>() > deg_x {
                let i = alpha.iter().position(|a| *a > 0).expect("positive degree");
                alpha[i] -= 1;
            }
            (alpha, k, c)
        });
        Poly::from_terms(dim, ts).expect("valid terms")
    })
}

pub fn point(dim: usize, radius: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-radius..radius, dim)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
