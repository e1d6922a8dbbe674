//! Scoring recovered object positions against ground truth.
//!
//! Matching is greedy and one-to-one: every prediction/truth pair within the
//! threshold is ranked by distance and accepted when both ends are still free.
//! Empty denominators follow fixed conventions: precision is 1 when nothing
//! was predicted, recall is 1 when there is no ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, Planar, EARTH_RADIUS_M};

/// Threshold used for distance-to-ground-truth statistics.
pub const GT_MATCH_RADIUS_M: f64 = 5.0;
/// Default radius for assigning predictions to ground-truth clusters.
pub const DEFAULT_CLUSTER_RADIUS_M: f64 = 5.0;
/// Evaluation sweep, metres.
pub const EVAL_THRESHOLDS_M: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("match threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("stability needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
}

/// Local metric frame for a set of geographic points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        Self {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    /// Frame centred on the first point, or on (0, 0) when empty.
    pub fn around(points: &[GeoPoint]) -> Self {
        Self::new(points.first().copied().unwrap_or(GeoPoint { lat: 0.0, lon: 0.0 }))
    }

    pub fn to_planar(&self, p: &GeoPoint) -> Planar {
        Planar::new(
            EARTH_RADIUS_M * self.cos_lat * (p.lon - self.origin.lon).to_radians(),
            EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub prediction: usize,
    pub truth: usize,
    pub distance_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
    pub threshold_m: f64,
}

impl MatchResult {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_predictions(&self) -> usize {
        self.pairs.len() + self.unmatched_predictions.len()
    }

    pub fn n_truth(&self) -> usize {
        self.pairs.len() + self.unmatched_truth.len()
    }

    pub fn scores(&self) -> Scores {
        precision_recall_f1(self.matched(), self.n_predictions(), self.n_truth())
    }
}

/// Greedy one-to-one matching of planar points within `threshold` metres.
pub fn match_planar(
    predictions: &[Planar],
    truth: &[Planar],
    threshold: f64,
) -> Result<MatchResult, EvalError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(EvalError::InvalidThreshold(threshold));
    }
    let mut candidates = Vec::new();
    for (p, pp) in predictions.iter().enumerate() {
        for (t, tp) in truth.iter().enumerate() {
            let d = pp.distance(tp);
            if d <= threshold {
                candidates.push(MatchPair {
                    prediction: p,
                    truth: t,
                    distance_m: d,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.distance_m
            .total_cmp(&b.distance_m)
            .then(a.prediction.cmp(&b.prediction))
            .then(a.truth.cmp(&b.truth))
    });
    let mut pred_used = vec![false; predictions.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !pred_used[c.prediction] && !truth_used[c.truth] {
            pred_used[c.prediction] = true;
            truth_used[c.truth] = true;
            pairs.push(c);
        }
    }
    let free = |used: &[bool]| used.iter().enumerate().filter(|(_, &u)| !u).map(|(k, _)| k).collect();
    Ok(MatchResult {
        unmatched_predictions: free(&pred_used),
        unmatched_truth: free(&truth_used),
        pairs,
        threshold_m: threshold,
    })
}

/// Greedy matching of geographic points, measured in a local metric frame.
pub fn match_points(
    predictions: &[GeoPoint],
    truth: &[GeoPoint],
    threshold: f64,
) -> Result<MatchResult, EvalError> {
    let frame = LocalFrame::around(truth);
    let pp: Vec<Planar> = predictions.iter().map(|p| frame.to_planar(p)).collect();
    let tp: Vec<Planar> = truth.iter().map(|p| frame.to_planar(p)).collect();
    match_planar(&pp, &tp, threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn precision_recall_f1(matched: usize, n_pred: usize, n_truth: usize) -> Scores {
    let precision = if n_pred == 0 { 1.0 } else { matched as f64 / n_pred as f64 };
    let recall = if n_truth == 0 { 1.0 } else { matched as f64 / n_truth as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores {
        precision,
        recall,
        f1,
    }
}

/// Median and sample standard deviation of a set of values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    /// Sample SD (`n - 1` denominator); 0 for a single value.
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { median, sd, n })
    }
}

/// Matched prediction-to-truth distances at [`GT_MATCH_RADIUS_M`]; `None`
/// when nothing matches.
pub fn distance_to_gt(predictions: &[GeoPoint], truth: &[GeoPoint]) -> Option<Summary> {
    let m = match_points(predictions, truth, GT_MATCH_RADIUS_M).ok()?;
    let d: Vec<f64> = m.pairs.iter().map(|p| p.distance_m).collect();
    Summary::of(&d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStability {
    /// Pooled within-cluster pairwise distances.
    pub distances: Vec<f64>,
    /// Members per ground-truth object, indexed like `truth`.
    pub cluster_sizes: Vec<usize>,
    pub within_cluster: Option<Summary>,
    pub object_count: Summary,
}

/// Positional and count stability across repeated runs.
///
/// Every predicted point (from any run) joins the cluster of its nearest
/// ground-truth object when that object is within `cluster_radius` metres.
pub fn stability_clusters(
    runs: &[Vec<GeoPoint>],
    truth: &[GeoPoint],
    cluster_radius: f64,
) -> Result<ClusterStability, EvalError> {
    if runs.len() < 2 {
        return Err(EvalError::TooFewRuns(runs.len()));
    }
    if !(cluster_radius.is_finite() && cluster_radius > 0.0) {
        return Err(EvalError::InvalidThreshold(cluster_radius));
    }
    let frame = LocalFrame::around(truth);
    let tp: Vec<Planar> = truth.iter().map(|p| frame.to_planar(p)).collect();
    let mut members: Vec<Vec<Planar>> = vec![Vec::new(); truth.len()];
    for run in runs {
        for p in run {
            let q = frame.to_planar(p);
            let nearest = tp
                .iter()
                .enumerate()
                .map(|(k, t)| (q.distance(t), k))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((d, k)) = nearest {
                if d <= cluster_radius {
                    members[k].push(q);
                }
            }
        }
    }
    let mut distances = Vec::new();
    for cluster in &members {
        for (a, p) in cluster.iter().enumerate() {
            for q in &cluster[a + 1..] {
                distances.push(p.distance(q));
            }
        }
    }
    let counts: Vec<f64> = runs.iter().map(|r| r.len() as f64).collect();
    Ok(ClusterStability {
        within_cluster: Summary::of(&distances),
        cluster_sizes: members.iter().map(Vec::len).collect(),
        distances,
        object_count: Summary::of(&counts).expect("at least two runs"),
    })
}

/// One row of the stability table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub noise_level: u8,
    pub cluster_median_m: Option<f64>,
    pub cluster_sd_m: Option<f64>,
    pub count_median: f64,
    pub count_sd: f64,
    pub gt_median_m: Option<f64>,
    pub gt_sd_m: Option<f64>,
}

/// Builds the stability row for one noise level; distance-to-GT statistics
/// pool the matched distances of every run.
pub fn stability_report(
    noise_level: u8,
    runs: &[Vec<GeoPoint>],
    truth: &[GeoPoint],
    cluster_radius: f64,
) -> Result<StabilityReport, EvalError> {
    let clusters = stability_clusters(runs, truth, cluster_radius)?;
    let mut gt = Vec::new();
    for run in runs {
        let m = match_points(run, truth, GT_MATCH_RADIUS_M)?;
        gt.extend(m.pairs.iter().map(|p| p.distance_m));
    }
    let gt = Summary::of(&gt);
    Ok(StabilityReport {
        noise_level,
        cluster_median_m: clusters.within_cluster.map(|s| s.median),
        cluster_sd_m: clusters.within_cluster.map(|s| s.sd),
        count_median: clusters.object_count.median,
        count_sd: clusters.object_count.sd,
        gt_median_m: gt.map(|s| s.median),
        gt_sd_m: gt.map(|s| s.sd),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_m: f64,
    pub matched: usize,
    pub scores: Scores,
}

/// Precision, recall and F1 at each threshold.
pub fn threshold_sweep(
    predictions: &[GeoPoint],
    truth: &[GeoPoint],
    thresholds: &[f64],
) -> Result<Vec<SweepRow>, EvalError> {
    thresholds
        .iter()
        .map(|&tau| {
            let m = match_points(predictions, truth, tau)?;
            Ok(SweepRow {
                tau_m: tau,
                matched: m.matched(),
                scores: m.scores(),
            })
        })
        .collect()
}
