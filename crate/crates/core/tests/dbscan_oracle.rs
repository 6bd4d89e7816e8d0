mod support;

use proptest::prelude::*;
use refex_core::layout::{dbscan, dbscan_points, DistanceMatrix};
use support::oracle;

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, f64, usize)> {
    (1usize..=2, 0usize..=50, 1u32..=10, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(dim, n, eps10, min_pts)| {
        proptest::collection::vec(proptest::collection::vec(0.0f64..0.3, dim), n)
            .prop_map(move |pts| (pts, eps10 as f64 / 100.0, min_pts))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_brute_force((points, eps, min_pts) in instance()) {
        let got = dbscan_points(&points, eps, min_pts).unwrap();
        prop_assert_eq!(got, oracle::dbscan(&points, eps, min_pts));
    }

    #[test]
    fn precomputed_matrix_agrees((points, eps, min_pts) in instance()) {
        let n = points.len();
        let mut data = Vec::with_capacity(n * n);
        for a in &points {
            for b in &points {
                data.push(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            }
        }
        let m = DistanceMatrix::new(n, data).unwrap();
        prop_assert_eq!(dbscan(&m, eps, min_pts).unwrap(), dbscan_points(&points, eps, min_pts).unwrap());
    }

    #[test]
    fn min_pts_one_has_no_noise((points, eps, _m) in instance()) {
        prop_assert!(dbscan_points(&points, eps, 1).unwrap().iter().all(Option::is_some));
    }
}

#[test]
fn rejects_bad_parameters() {
    let pts = vec![vec![0.0]];
    assert!(dbscan_points(&pts, 0.0, 1).is_err());
    assert!(dbscan_points(&pts, f64::NAN, 1).is_err());
    assert!(dbscan_points(&pts, 0.1, 0).is_err());
}
