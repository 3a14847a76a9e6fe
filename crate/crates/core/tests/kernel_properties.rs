mod common;

use common::point;
use fslice::grid::{GaussianPacket, Grid, GridState};
use fslice::kernel::{apply_short_time, apply_short_time_spin, KernelOptions};
use fslice::spin::{pauli, transport_between, Envelope, SpinHamiltonian, SpinTerm, TransportOptions};
use fslice::FieldSet;
use num_complex::Complex64;
use proptest::prelude::*;

fn coupling(width: f64, omega: f64) -> SpinHamiltonian {
    let [sx, sy, sz] = pauli();
    SpinHamiltonian::new(
        2,
        1,
        vec![
            SpinTerm { matrix: sx, envelope: Envelope::Gaussian { amplitude: 1.0, center: vec![0.3], weights: vec![width] } },
            SpinTerm { matrix: sy, envelope: Envelope::Sin { amplitude: 0.4, omega: 0.0, k: vec![0.8], phase: 0.1 } },
            SpinTerm { matrix: sz, envelope: Envelope::Cos { amplitude: 0.5, omega, k: vec![0.0], phase: 0.0 } },
        ],
    )
    .unwrap()
}

#[test]
fn free_kernel_integrates_to_one() {
    let g = Grid::uniform(1, 12.0, 512).unwrap();
    let one = GridState::from_fn(g.clone(), |_| Complex64::new(1.0, 0.0));
    let out = apply_short_time(&FieldSet::free(1.0, 1), 0.0, 0.1, &one, &KernelOptions::default()).unwrap();
    for i in 240..272 {
        assert!((out.values()[i] - 1.0).norm() < 1e-2, "node {i}: {}", out.values()[i]);
    }
}

#[test]
fn spin_propagator_preserves_norm() {
    let g = Grid::uniform(1, 12.0, 512).unwrap();
    let f = GridState::from_fn_spinor(g, &[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)], |x| {
        GaussianPacket::standard(1).eval(x)
    });
    let u = apply_short_time_spin(&FieldSet::free(1.0, 1), &coupling(0.25, 2.0), 0.0, 0.05, &f, &KernelOptions::default()).unwrap();
    let ratio = u.norm() / f.norm();
    assert!((ratio - 1.0).abs() <= 1e-3, "{ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transport_is_unitary(y in point(1, 5.0), x in point(1, 5.0), s in 0.0f64..1.0, rho in 0.001f64..0.25) {
        let f = transport_between(&coupling(0.5, 2.0), s, s + rho, &y, &x, &TransportOptions::default()).unwrap();
        prop_assert!(f.unitarity_defect() <= 1e-10);
    }

    #[test]
    fn transport_composes_along_the_segment(
        y in point(1, 5.0),
        x in point(1, 5.0),
        s in 0.0f64..1.0,
        rho in 0.01f64..0.25,
        frac in 0.1f64..0.9,
    ) {
        let h1 = coupling(0.5, 2.0);
        let opts = TransportOptions::default();
        let t = s + rho;
        let u = s + frac * rho;
        let mid = [y[0] + frac * (x[0] - y[0])];
        let whole = transport_between(&h1, s, t, &y, &x, &opts).unwrap();
        let first = transport_between(&h1, s, u, &y, &mid, &opts).unwrap();
        let second = transport_between(&h1, u, t, &mid, &x, &opts).unwrap();
        prop_assert!(whole.max_abs_diff(&second.matmul(&first)) <= 1e-9);
    }
}
