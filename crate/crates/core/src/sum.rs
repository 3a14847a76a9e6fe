//! Fixed-order pairwise reductions.
//!
//! The split points depend only on the slice length, so a sum over the same
//! terms in the same order gives the same bits no matter which thread runs it.

use num_complex::Complex64;

const BLOCK: usize = 8;

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= BLOCK {
        return v.iter().fold(0.0, |a, &b| a + b);
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn pairwise_sum_c(v: &[Complex64]) -> Complex64 {
    if v.len() <= BLOCK {
        return v.iter().fold(Complex64::new(0.0, 0.0), |a, &b| a + b);
    }
    let mid = v.len() / 2;
    pairwise_sum_c(&v[..mid]) + pairwise_sum_c(&v[mid..])
}
