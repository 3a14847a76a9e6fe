mod common;

use common::poly;
use fslice::grid::{GaussianPacket, Grid, GridState};
use fslice::slicing::{compose, gauge_covariance_check, Partition, SliceOptions};
use fslice::{FieldSet, GaugeFunction, PolySpaceTime as Poly};
use proptest::prelude::*;

fn quartic() -> FieldSet {
    let x = Poly::coordinate(1, 0);
    FieldSet::new(1.0, 1, 1.0, &x.pow(4) + &x.pow(2), vec![x.scale(0.3)]).unwrap()
}

fn packet() -> GridState {
    GridState::gaussian(Grid::uniform(1, 6.0, 128).unwrap(), &GaussianPacket::standard(1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gauge_covariance_for_random_cubic_gauges(psi in poly(1, 3, 3, 6)) {
        let defect = gauge_covariance_check(
            &quartic(),
            None,
            &GaugeFunction::new(psi).unwrap(),
            &Partition::uniform(0.0, 0.4, 4).unwrap(),
            &packet(),
            &SliceOptions::default(),
        )
        .unwrap();
        prop_assert!(defect <= 1e-8, "{defect}");
    }
}

#[test]
fn norm_drift_shrinks_with_the_mesh() {
    let f = GridState::gaussian(Grid::uniform(1, 6.0, 512).unwrap(), &GaussianPacket::standard(1));
    let drift: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&nu| {
            let out = compose(&quartic(), None, &Partition::uniform(0.0, 0.4, nu).unwrap(), &f, &SliceOptions::default()).unwrap();
            (out.last().unwrap().norm() / f.norm() - 1.0).abs()
        })
        .collect();
    assert!(drift.windows(2).all(|w| w[1] < w[0]), "{drift:?}");
}

#[test]
fn partition_mesh_is_bounded() {
    let f = packet();
    let err = compose(&quartic(), None, &Partition::uniform(0.0, 1.0, 2).unwrap(), &f, &SliceOptions::default());
    assert!(err.is_err());
}
