mod common;

use common::{point, poly};
use fslice::action::{action_piecewise, ActionEvaluator, PiecewisePath};
use fslice::{derive_em, gauge_transform, FieldSet, GaugeFunction, PolySpaceTime as Poly};
use proptest::prelude::*;

fn fields(dim: usize) -> impl Strategy<Value = FieldSet> {
    (poly(dim, 4, 2, 5), proptest::collection::vec(poly(dim, 3, 2, 4), dim))
        .prop_map(move |(v, a)| FieldSet::new(1.0, dim, 1.0, v, a).expect("valid fields"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivatives_match_central_differences(
        p in poly(2, 5, 2, 8),
        pts in proptest::collection::vec(point(2, 2.0), 10),
        t in 0.0f64..1.0,
    ) {
        for x in &pts {
            for j in 0..2 {
                let exact = p.deriv_x(j).eval(t, x);
                let h = 1e-5;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let fd = (p.eval(t, &xp) - p.eval(t, &xm)) / (2.0 * h);
                prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fd} vs {exact}");
            }
            let exact = p.deriv_t().eval(t, x);
            let fd = (p.eval(t + 1e-5, x) - p.eval(t - 1e-5, x)) / 2e-5;
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn gauge_leaves_electric_and_magnetic_fields_unchanged(
        fs in fields(2),
        psi in poly(2, 3, 2, 6),
        x in point(2, 3.0),
        t in 0.0f64..1.0,
    ) {
        let moved = derive_em(&gauge_transform(&fs, &GaugeFunction::new(psi).unwrap()).unwrap());
        for j in 0..2 {
            let (a, b) = (fs.electric()[j].eval(t, &x), moved.electric()[j].eval(t, &x));
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
        let (a, b) = (fs.magnetic_value(0, 1, t, &x), moved.magnetic_value(0, 1, t, &x));
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn faraday_law(fs in fields(3), x in point(3, 2.0), t in 0.0f64..1.0) {
        for j in 0..3 {
            for k in 0..3 {
                let bt = fs.magnetic(j.min(k), j.max(k)).map_or(0.0, |b| {
                    let sign = if j < k { 1.0 } else { -1.0 };
                    sign * b.deriv_t().eval(t, &x)
                });
                let curl = fs.electric()[k].deriv_x(j).eval(t, &x) - fs.electric()[j].deriv_x(k).eval(t, &x);
                prop_assert!((bt + curl).abs() <= 1e-10 * bt.abs().max(1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn action_shifts_by_gauge_boundary_terms(
        (fs, psi, steps, vertices) in (1usize..=2).prop_flat_map(|d| (
            fields(d),
            poly(d, 3, 3, 6),
            proptest::collection::vec(0.05f64..0.3, 4),
            proptest::collection::vec(point(d, 2.0), 4),
        )),
    ) {
        let times: Vec<f64> = steps.iter().scan(-0.05, |t, dt| { *t += dt; Some(*t) }).collect();
        let path = PiecewisePath::new(times.clone(), vertices.clone()).unwrap();
        let moved = gauge_transform(&fs, &GaugeFunction::new(psi.clone()).unwrap()).unwrap();
        let s = action_piecewise(&fs, &path, 8).unwrap();
        let s_moved = action_piecewise(&moved, &path, 8).unwrap();
        let shift = psi.eval(times[3], &vertices[3]) - psi.eval(times[0], &vertices[0]);
        let scale = s.abs().max(s_moved.abs()).max(1.0);
        prop_assert!((s_moved - s - shift).abs() <= 1e-10 * scale, "{} vs {}", s_moved - s, shift);
    }

    #[test]
    fn two_particle_action_is_exchange_symmetric(
        fs in fields(1),
        w in poly(1, 2, 1, 3),
        x in point(2, 2.0),
        y in point(2, 2.0),
        rho in 0.01f64..0.25,
    ) {
        let fs = fs.with_particles(2).unwrap().with_pair_potential(0, 1, w).unwrap();
        let ev = ActionEvaluator::new(&fs, 8).unwrap();
        let a = ev.eval(0.0, rho, &y, &x);
        let b = ev.eval(0.0, rho, &[y[1], y[0]], &[x[1], x[0]]);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn gauge_of_zero_function_is_identity() {
    let x = Poly::coordinate(1, 0);
    let fs = FieldSet::scalar(1.0, 1, 1.0, x.pow(4)).unwrap();
    assert_eq!(gauge_transform(&fs, &GaugeFunction::zero(1)).unwrap(), fs);
}
