use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbd_core::eval::{
    match_planar, precision_recall_f1, stability_clusters, threshold_sweep, Summary,
};
use sbd_core::geo::{GeoPoint, GridSpec, Planar};

/// Maximum cardinality of a one-to-one matching within `tau`, by exhaustive search.
fn max_matching(pred: &[Planar], truth: &[Planar], tau: f64) -> usize {
    fn go(k: usize, used: u32, pred: &[Planar], truth: &[Planar], tau: f64) -> usize {
        if k == pred.len() {
            return 0;
        }
        let mut best = go(k + 1, used, pred, truth, tau);
        for (t, tp) in truth.iter().enumerate() {
            if used & (1 << t) == 0 && pred[k].distance(tp) <= tau {
                best = best.max(1 + go(k + 1, used | (1 << t), pred, truth, tau));
            }
        }
        best
    }
    go(0, 0, pred, truth, tau)
}

fn points(rng: &mut ChaCha8Rng, n: usize, side: f64) -> Vec<Planar> {
    (0..n)
        .map(|_| Planar::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
        .collect()
}

proptest! {
    #[test]
    fn greedy_matching_is_near_optimal(seed in 0u64..100_000, np in 0usize..=8, nt in 0usize..=8, tau in 0.5f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = points(&mut rng, np, 10.0);
        let truth = points(&mut rng, nt, 10.0);
        let m = match_planar(&pred, &truth, tau).unwrap();
        let opt = max_matching(&pred, &truth, tau);
        prop_assert!(m.matched() <= opt);
        // Greedy on a bipartite graph is a maximal matching: at least half the optimum.
        prop_assert!(2 * m.matched() >= opt);

        let mut ps: Vec<usize> = m.pairs.iter().map(|p| p.prediction).collect();
        let mut ts: Vec<usize> = m.pairs.iter().map(|p| p.truth).collect();
        ps.sort_unstable();
        ts.sort_unstable();
        ps.dedup();
        ts.dedup();
        prop_assert_eq!(ps.len(), m.matched());
        prop_assert_eq!(ts.len(), m.matched());
        prop_assert_eq!(m.matched() + m.unmatched_predictions.len(), np);
        prop_assert_eq!(m.matched() + m.unmatched_truth.len(), nt);
        prop_assert!(m.pairs.iter().all(|p| p.distance_m <= tau));
    }

    #[test]
    fn recall_never_falls_as_the_threshold_grows(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let origin = GeoPoint::new(53.34, -6.26).unwrap();
        let frame = GridSpec::new(origin, 1000, 1000, 0.25).unwrap();
        let truth: Vec<GeoPoint> = points(&mut rng, 15, 60.0).iter().map(|p| frame.to_geo(*p)).collect();
        let pred: Vec<GeoPoint> = points(&mut rng, 18, 60.0).iter().map(|p| frame.to_geo(*p)).collect();
        let rows = threshold_sweep(&pred, &truth, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        for w in rows.windows(2) {
            prop_assert!(w[1].matched >= w[0].matched);
            prop_assert!(w[1].scores.recall >= w[0].scores.recall);
        }
    }
}

#[test]
fn pooled_pair_count_is_the_sum_of_cluster_pairs() {
    let origin = GeoPoint::new(53.34, -6.26).unwrap();
    let frame = GridSpec::new(origin, 1000, 1000, 0.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let truth_p: Vec<Planar> = (0..12).map(|k| Planar::new(30.0 * f64::from(k), 0.0)).collect();
    let truth: Vec<GeoPoint> = truth_p.iter().map(|p| frame.to_geo(*p)).collect();
    let mut runs: Vec<Vec<GeoPoint>> = Vec::new();
    for _ in 0..6 {
        let mut run = Vec::new();
        for t in &truth_p {
            if rng.gen_bool(0.8) {
                let (dx, dy) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                run.push(frame.to_geo(Planar::new(t.x + dx, t.y + dy)));
            }
        }
        run.push(frame.to_geo(Planar::new(15.0, 50.0)));
        runs.push(run);
    }
    let c = stability_clusters(&runs, &truth, 5.0).unwrap();
    let expected: usize = c.cluster_sizes.iter().map(|n| n * n.saturating_sub(1) / 2).sum();
    assert_eq!(c.distances.len(), expected);
    // The far-away point joins no cluster.
    let clustered: usize = c.cluster_sizes.iter().sum();
    let total: usize = runs.iter().map(Vec::len).sum();
    assert_eq!(clustered, total - runs.len());
    assert!(c.distances.iter().all(|&d| d <= 2.0 * 3.0 * std::f64::consts::SQRT_2 + 1e-6));
}

#[test]
fn single_pair_cluster_reports_its_distance() {
    let origin = GeoPoint::new(53.34, -6.26).unwrap();
    let frame = GridSpec::new(origin, 1000, 1000, 0.25).unwrap();
    let truth = vec![frame.to_geo(Planar::new(10.0, 10.0))];
    let runs = vec![
        vec![frame.to_geo(Planar::new(10.0, 10.0))],
        vec![frame.to_geo(Planar::new(11.3, 10.0))],
    ];
    let c = stability_clusters(&runs, &truth, 5.0).unwrap();
    let s = c.within_cluster.unwrap();
    assert_eq!(s.n, 1);
    assert!((s.median - 1.3).abs() < 1e-3);
    assert_eq!(s.sd, 0.0);
    assert!(stability_clusters(&runs[..1], &truth, 5.0).is_err());
}

#[test]
fn summary_statistics_on_a_fixture() {
    let v = [4.0, 1.0, 7.0, 3.0, 9.0, 2.0, 8.0, 5.0, 6.0, 10.0];
    let s = Summary::of(&v).unwrap();
    assert_eq!(s.median, 5.5);
    assert_eq!(s.n, 10);
    // Sample variance of 1..=10 is 55/6.
    assert!((s.sd - (55.0f64 / 6.0).sqrt()).abs() < 1e-12);
    assert_eq!(Summary::of(&[2.5]).unwrap().sd, 0.0);
    assert!(Summary::of(&[]).is_none());
}

#[test]
fn scores_handle_empty_sides() {
    let s = precision_recall_f1(0, 0, 0);
    assert_eq!((s.precision, s.recall), (1.0, 1.0));
    let s = precision_recall_f1(0, 5, 4);
    assert_eq!(s.f1, 0.0);
    let s = precision_recall_f1(3, 4, 6);
    assert!((s.f1 - 2.0 * 0.75 * 0.5 / 1.25).abs() < 1e-12);
}
