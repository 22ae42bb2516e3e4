//! Property-based invariants: metric axioms and mass preservation.

use nalgebra::DMatrix;
use proptest::prelude::*;

use wassbary::measures::{
    push_forward, wasserstein2, Compactum, GaussianMeasure, GridDensity, Measure, Measure1D,
};
use wassbary::transport::optimal_map;

fn quantile_grid(len: usize) -> impl Strategy<Value = Measure1D> {
    prop::collection::vec(-50.0..50.0f64, len).prop_map(|mut v| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Measure1D::from_quantiles(v).unwrap()
    })
}

fn spd2() -> impl Strategy<Value = GaussianMeasure> {
    (0.1..4.0f64, 0.1..4.0f64, -0.9..0.9f64).prop_map(|(a, d, r)| {
        let c = r * (a * d).sqrt();
        GaussianMeasure::new(DMatrix::from_row_slice(2, 2, &[a, c, c, d])).unwrap()
    })
}

proptest! {
    #[test]
    fn metric_axioms_1d(a in quantile_grid(32), b in quantile_grid(32), c in quantile_grid(32)) {
        let (ma, mb, mc) = (
            Measure::One(a.clone()),
            Measure::One(b.clone()),
            Measure::One(c.clone()),
        );
        let dab = wasserstein2(&ma, &mb).unwrap();
        let dba = wasserstein2(&mb, &ma).unwrap();
        let daa = wasserstein2(&ma, &ma).unwrap();
        prop_assert!(daa.abs() <= 1e-12);
        prop_assert!((dab - dba).abs() <= 1e-12);
        prop_assert!(dab >= 0.0);
        let dac = wasserstein2(&ma, &mc).unwrap();
        let dcb = wasserstein2(&mc, &mb).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-9, "triangle: {dab} > {dac} + {dcb}");
    }

    #[test]
    fn metric_axioms_gaussian(a in spd2(), b in spd2(), c in spd2()) {
        let (ma, mb, mc) = (
            Measure::Gaussian(a),
            Measure::Gaussian(b),
            Measure::Gaussian(c),
        );
        let dab = wasserstein2(&ma, &mb).unwrap();
        let dba = wasserstein2(&mb, &ma).unwrap();
        prop_assert!((dab - dba).abs() <= 1e-7);
        prop_assert!(wasserstein2(&ma, &ma).unwrap() <= 1e-6);
        let dac = wasserstein2(&ma, &mc).unwrap();
        let dcb = wasserstein2(&mc, &mb).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-7);
    }

    #[test]
    fn push_forward_preserves_mass_and_distance(a in quantile_grid(64), b in quantile_grid(64)) {
        let (ma, mb) = (Measure::One(a), Measure::One(b));
        let t = optimal_map(&ma, &mb).unwrap();
        let image = push_forward(&t, &ma).unwrap();
        // the push-forward lands on b, so d(image, b) = 0 and the transport
        // cost equals the distance
        prop_assert!(wasserstein2(&image, &mb).unwrap() <= 1e-9);
    }

    #[test]
    fn grid_construction_normalizes_mass(c in 0.1..0.9f64, w in 0.02..0.3f64) {
        let window = Compactum::new(vec![0.0], vec![1.0]).unwrap();
        let g = GridDensity::from_fn(window, vec![128], |x| {
            0.05 + (-(x[0] - c) * (x[0] - c) / (2.0 * w * w)).exp()
        })
        .unwrap();
        prop_assert!((g.total_mass() - 1.0).abs() <= 1e-9);
        let q = g.to_measure1d(512).unwrap();
        let back = GridDensity::from_measure1d(&q, g.window(), 128).unwrap();
        prop_assert!((back.total_mass() - 1.0).abs() <= 1e-9);
    }
}
