use proptest::prelude::*;
use sbd_core::bench::{
    aggregate, average_precision, correspond, default_thresholds, evaluate_image, f_measure, PRPoint,
};
use sbd_core::{BoundaryMap, SoftBoundaryMap};

/// Kuhn's augmenting-path matching over an explicit distance test; slow but
/// obviously maximal.
fn reference_matching(pred: &BoundaryMap, gt: &BoundaryMap, d_max: f64) -> usize {
    let p = pred.points();
    let g = gt.points();
    let adj: Vec<Vec<usize>> = p
        .iter()
        .map(|&(px, py)| {
            (0..g.len())
                .filter(|&j| {
                    let (dx, dy) = (px as f64 - g[j].0 as f64, py as f64 - g[j].1 as f64);
                    dx * dx + dy * dy <= d_max * d_max
                })
                .collect()
        })
        .collect();
    fn try_kuhn(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                if owner[v].is_none_or(|o| try_kuhn(o, adj, seen, owner)) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; g.len()];
    (0..p.len())
        .filter(|&u| try_kuhn(u, &adj, &mut vec![false; g.len()], &mut owner))
        .count()
}

fn pair(max: usize) -> impl Strategy<Value = (BoundaryMap, BoundaryMap)> {
    (1..max, 1..max, 0.05f64..0.5).prop_flat_map(|(w, h, density)| {
        (
            proptest::collection::vec(proptest::bool::weighted(density), w * h),
            proptest::collection::vec(proptest::bool::weighted(density), w * h),
        )
            .prop_map(move |(a, b)| (BoundaryMap::new(w, h, a).unwrap(), BoundaryMap::new(w, h, b).unwrap()))
    })
}

proptest! {
    #[test]
    fn matching_is_maximum_and_valid((pred, gt) in pair(13), d in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0])) {
        let m = correspond(&pred, &gt, d).unwrap();
        prop_assert_eq!(m.matched(), reference_matching(&pred, &gt, d));
        prop_assert_eq!(m.n_pred, pred.count());
        prop_assert_eq!(m.n_gt, gt.count());
        let mut used_p = std::collections::BTreeSet::new();
        let mut used_g = std::collections::BTreeSet::new();
        for &((px, py), (gx, gy)) in &m.matched_pairs {
            prop_assert!(pred.get(px, py) && gt.get(gx, gy));
            let (dx, dy) = (px as f64 - gx as f64, py as f64 - gy as f64);
            prop_assert!((dx * dx + dy * dy).sqrt() <= d);
            prop_assert!(used_p.insert((px, py)) && used_g.insert((gx, gy)));
        }
    }

    #[test]
    fn matching_is_symmetric((pred, gt) in pair(10)) {
        let a = correspond(&pred, &gt, 2.0).unwrap().matched();
        let b = correspond(&gt, &pred, 2.0).unwrap().matched();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn larger_radius_never_matches_fewer((pred, gt) in pair(10)) {
        let small = correspond(&pred, &gt, 1.0).unwrap().matched();
        let large = correspond(&pred, &gt, 2.5).unwrap().matched();
        prop_assert!(small <= large);
    }

    #[test]
    fn curve_values_stay_in_unit_range(
        (w, h, conf, gt) in (2usize..10, 2usize..10).prop_flat_map(|(w, h)| (
            Just(w), Just(h),
            proptest::collection::vec(0.0f64..=1.0, w * h),
            proptest::collection::vec(proptest::bool::weighted(0.3), w * h),
        ))
    ) {
        let soft = SoftBoundaryMap::new(w, h, conf).unwrap();
        let gt = BoundaryMap::new(w, h, gt).unwrap();
        let pts = evaluate_image(&soft, &gt, &default_thresholds(), 1.5).unwrap();
        for p in &pts {
            prop_assert!((0.0..=1.0).contains(&p.precision));
            prop_assert!((0.0..=1.0).contains(&p.recall));
            prop_assert!((p.f - f_measure(p.precision, p.recall)).abs() < 1e-15);
        }
        let s = aggregate(&[pts]).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.ap));
    }
}

#[test]
fn perfect_and_empty_predictors() {
    let mask: Vec<bool> = (0..64).map(|i| i % 9 == 0 || i / 8 == 3).collect();
    let gt = sbd_core::boundary::thin(&BoundaryMap::new(8, 8, mask).unwrap());
    let perfect = SoftBoundaryMap::from_mask(&gt);
    let s = aggregate(&[evaluate_image(&perfect, &gt, &default_thresholds(), 1.0).unwrap()]).unwrap();
    assert_eq!((s.ods_f, s.ois_f), (1.0, 1.0));
    assert!((s.ap - 1.0).abs() <= 1e-9);

    let empty = SoftBoundaryMap::new(8, 8, vec![0.0; 64]).unwrap();
    let pts = evaluate_image(&empty, &gt, &default_thresholds(), 1.0).unwrap();
    assert!(pts.iter().all(|p| p.recall == 0.0 && p.f == 0.0));
}

#[test]
fn interpolated_ap_of_a_staircase() {
    // Precision 1 up to recall 0.5 (51 of the 101 levels), then 0.5 for the
    // remaining 50 levels.
    let curve = [
        PRPoint::from_counts(0.1, sbd_core::bench::Counts { tp_pred: 10, n_pred: 20, tp_gt: 10, n_gt: 10 }),
        PRPoint::from_counts(0.9, sbd_core::bench::Counts { tp_pred: 5, n_pred: 5, tp_gt: 5, n_gt: 10 }),
    ];
    let ap = average_precision(&curve);
    assert!((ap - 76.0 / 101.0).abs() < 1e-12, "{ap}");
}
