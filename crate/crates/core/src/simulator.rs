//! Synthetic street scenes and noisy, contaminated camera detections.
//!
//! Ground truth lives on a rectilinear street network: street lights stand on
//! alternating sides of each street and cameras sit on the centrelines. Each
//! camera considers its 15 nearest objects and detects each one with a
//! distance-banded probability; distances and bearings are then perturbed by
//! the selected noise profile. A fraction of phantom objects is injected to
//! mimic detector false positives.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{Camera, GeoPoint, GridSpec, Planar, Ray};

/// Candidates considered per camera.
pub const NEAREST_CANDIDATES: usize = 15;
/// Beyond this true distance nothing is detected.
pub const DETECTION_RANGE_M: f64 = 20.0;
/// Default rate of the exponential behind `confidence = 1 - x`.
pub const DEFAULT_CONFIDENCE_RATE: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid noise profile: {0}")]
    InvalidProfile(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error("cannot draw {needed} contamination seeds without replacement from {available} cameras")]
    TooManyContaminants { needed: usize, available: usize },
    #[error("unknown camera `{0}`")]
    UnknownCamera(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: String,
    pub position: GeoPoint,
}

/// Distance noise, bearing noise and contamination fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    pub level: u8,
    /// Distance noise SD, metres.
    pub sigma_distance: f64,
    /// Bearing noise SD, degrees.
    pub sigma_bearing: f64,
    pub contamination: f64,
}

impl NoiseProfile {
    /// Levels 0 (optimistic) to 3 (pessimistic); level 1 is the realistic baseline.
    pub fn level(level: u8) -> Result<Self, SimError> {
        let (sd, sb, p) = match level {
            0 => (1.0, 2.0, 0.03),
            1 => (2.0, 3.0, 0.05),
            2 => (3.0, 4.5, 0.075),
            3 => (4.0, 6.0, 0.1),
            other => {
                return Err(SimError::InvalidProfile(format!(
                    "noise level {other} not in 0..=3"
                )))
            }
        };
        Ok(Self {
            level,
            sigma_distance: sd,
            sigma_bearing: sb,
            contamination: p,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            level: 0,
            sigma_distance: 0.0,
            sigma_bearing: 0.0,
            contamination: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma_distance.is_finite() && self.sigma_distance >= 0.0) {
            return Err(SimError::InvalidProfile("sigma_distance must be >= 0".into()));
        }
        if !(self.sigma_bearing.is_finite() && self.sigma_bearing >= 0.0) {
            return Err(SimError::InvalidProfile("sigma_bearing must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.contamination) {
            return Err(SimError::InvalidProfile("contamination must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub camera_id: String,
    pub bearing_deg: f64,
    pub distance_m: f64,
    pub confidence: f64,
    /// Evaluation-only provenance flag; never used by the optimizer.
    pub is_contaminant: bool,
}

impl Detection {
    pub fn to_ray(&self, origin: Planar) -> Result<Ray, crate::geo::GeoError> {
        Ray::new(
            self.camera_id.clone(),
            origin,
            self.bearing_deg,
            self.confidence,
            self.distance_m,
        )
    }
}

/// Probability that an object `d` metres away is detected.
pub fn detection_probability(d: f64) -> f64 {
    if (2.0..=10.0).contains(&d) {
        0.9
    } else if (0.0..2.0).contains(&d) || (d > 10.0 && d <= DETECTION_RANGE_M) {
        0.7
    } else {
        0.0
    }
}

/// `1 - x` with `x ~ Exp(rate)`, redrawn until the result lies in `(0.5, 1)`.
pub fn assign_confidence<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let exp = Exp::new(rate).expect("confidence rate validated positive");
    loop {
        let x: f64 = exp.sample(rng);
        let c = 1.0 - x;
        if c > 0.5 && c < 1.0 {
            return c;
        }
    }
}

fn check_rate(rate: f64) -> Result<(), SimError> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(SimError::InvalidParameter(format!(
            "confidence rate must be > 0, got {rate}"
        )))
    }
}

/// Positive draw from `N(d, sigma)`; falls back to a small positive distance
/// if the law keeps producing non-positive values (objects at the camera).
fn noisy_distance<R: Rng + ?Sized>(rng: &mut R, d: f64, sigma: f64) -> f64 {
    let normal = Normal::new(d, sigma).expect("sigma validated non-negative");
    for _ in 0..1000 {
        let v = normal.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
    0.01
}

/// Simulates detections of `objects` (planar positions) from every camera.
pub fn detect_planar<R: Rng + ?Sized>(
    cameras: &[(String, Planar)],
    objects: &[Planar],
    profile: &NoiseProfile,
    confidence_rate: f64,
    rng: &mut R,
) -> Result<Vec<Detection>, SimError> {
    profile.validate()?;
    check_rate(confidence_rate)?;
    let bearing_noise = Normal::new(0.0, profile.sigma_bearing).expect("validated");
    let mut out = Vec::new();
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(objects.len());
    for (cam_id, cam) in cameras {
        candidates.clear();
        candidates.extend(objects.iter().enumerate().map(|(k, o)| (cam.distance(o), k)));
        let keep = NEAREST_CANDIDATES.min(candidates.len());
        if keep < candidates.len() {
            candidates.select_nth_unstable_by(keep, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            candidates.truncate(keep);
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, k) in &candidates {
            let p = detection_probability(d);
            if p == 0.0 || rng.gen::<f64>() >= p {
                continue;
            }
            let bearing = cam.bearing_to(&objects[k]);
            let distance_m = noisy_distance(rng, d, profile.sigma_distance);
            let bearing_deg =
                crate::geo::normalize_bearing(bearing + bearing_noise.sample(rng));
            let confidence = assign_confidence(rng, confidence_rate);
            out.push(Detection {
                camera_id: cam_id.clone(),
                bearing_deg,
                distance_m,
                confidence,
                is_contaminant: false,
            });
        }
    }
    Ok(out)
}

/// Detections of ground-truth objects, projected through `grid`'s frame.
pub fn detect_objects<R: Rng + ?Sized>(
    cameras: &[Camera],
    objects: &[GroundTruthObject],
    profile: &NoiseProfile,
    grid: &GridSpec,
    confidence_rate: f64,
    rng: &mut R,
) -> Result<Vec<Detection>, SimError> {
    let cams = planar_cameras(cameras, grid);
    let objs: Vec<Planar> = objects.iter().map(|o| grid.to_planar(o.position)).collect();
    detect_planar(&cams, &objs, profile, confidence_rate, rng)
}

fn planar_cameras(cameras: &[Camera], grid: &GridSpec) -> Vec<(String, Planar)> {
    cameras
        .iter()
        .map(|c| (c.id.clone(), grid.to_planar(c.position)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contamination {
    pub detections: Vec<Detection>,
    /// Phantom object locations that seeded the false positives.
    pub phantoms: Vec<Planar>,
}

/// Injects `floor(p N)` phantom objects near distinct cameras and appends
/// their simulated detections, flagged as contaminants.
pub fn contaminate<R: Rng + ?Sized>(
    detections: Vec<Detection>,
    cameras: &[Camera],
    profile: &NoiseProfile,
    grid: &GridSpec,
    confidence_rate: f64,
    rng: &mut R,
) -> Result<Contamination, SimError> {
    profile.validate()?;
    let n = (profile.contamination * detections.len() as f64).floor() as usize;
    if n == 0 {
        return Ok(Contamination {
            detections,
            phantoms: Vec::new(),
        });
    }
    if n > cameras.len() {
        return Err(SimError::TooManyContaminants {
            needed: n,
            available: cameras.len(),
        });
    }
    let cams = planar_cameras(cameras, grid);
    let mut phantoms = Vec::with_capacity(n);
    for idx in sample_indices(rng, cameras.len(), n).into_vec() {
        let d = rng.gen_range(1.0..15.0);
        let b = rng.gen_range(0.0..360.0);
        phantoms.push(cams[idx].1.offset(b, d));
    }
    let mut secondary = detect_planar(&cams, &phantoms, profile, confidence_rate, rng)?;
    for det in &mut secondary {
        det.is_contaminant = true;
    }
    let mut all = detections;
    all.extend(secondary);
    Ok(Contamination {
        detections: all,
        phantoms,
    })
}

/// Street-network geometry used by [`synth_layout`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutParams {
    /// Distance between parallel street centrelines.
    pub street_spacing_m: f64,
    /// Offset of the first street from the area's south/west edge.
    pub first_street_m: f64,
    pub street_half_width_m: f64,
    /// Lateral offset of lights from the centreline.
    pub object_offset_m: f64,
    /// Spacing between lights on the same side of a street.
    pub object_spacing_m: f64,
    pub camera_spacing_m: f64,
    pub camera_jitter_m: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            street_spacing_m: 50.0,
            first_street_m: 25.0,
            street_half_width_m: 8.0,
            object_offset_m: 6.0,
            object_spacing_m: 20.0,
            camera_spacing_m: 10.0,
            camera_jitter_m: 2.0,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("street_spacing_m", self.street_spacing_m),
            ("street_half_width_m", self.street_half_width_m),
            ("object_spacing_m", self.object_spacing_m),
            ("camera_spacing_m", self.camera_spacing_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Layout(format!("{name} must be > 0")));
            }
        }
        if !(self.object_offset_m >= 0.0 && self.object_offset_m < self.street_half_width_m) {
            return Err(SimError::Layout(
                "object_offset_m must lie within the street half width".into(),
            ));
        }
        if !(self.camera_jitter_m >= 0.0) || !(self.first_street_m >= 0.0) {
            return Err(SimError::Layout("jitter and first street offset must be >= 0".into()));
        }
        if 2.0 * self.street_half_width_m >= self.street_spacing_m {
            return Err(SimError::Layout("streets wider than their spacing".into()));
        }
        Ok(())
    }

    fn streets(&self, extent: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut s = self.first_street_m;
        while s <= extent - self.street_half_width_m {
            out.push(s);
            s += self.street_spacing_m;
        }
        out
    }
}

/// Candidate positions on the street network of `area`.
#[derive(Clone, Debug, PartialEq)]
pub struct StreetNetwork {
    /// East coordinates of north-south streets.
    pub columns: Vec<f64>,
    /// North coordinates of east-west streets.
    pub rows: Vec<f64>,
    pub object_slots: Vec<Planar>,
    pub camera_slots: Vec<Planar>,
    pub extent: (f64, f64),
}

impl StreetNetwork {
    pub fn new(area: &GridSpec, params: &LayoutParams) -> Result<Self, SimError> {
        params.validate()?;
        let (ex, ny) = area.extent();
        let columns = params.streets(ex);
        let rows = params.streets(ny);
        if columns.is_empty() || rows.is_empty() {
            return Err(SimError::Layout(format!(
                "area {ex:.1} m x {ny:.1} m holds no street"
            )));
        }
        let margin = 1.0;
        let junction_clear = params.street_half_width_m + 1.0;
        let step = params.object_spacing_m / 2.0;

        let mut object_slots = Vec::new();
        let mut camera_slots = Vec::new();
        // East-west streets, then north-south ones; `along` runs on the street axis.
        for (horizontal, streets, cross, length) in
            [(true, &rows, &columns, ex), (false, &columns, &rows, ny)]
        {
            for &s in streets {
                let to_planar = |along: f64, lateral: f64| {
                    if horizontal {
                        Planar::new(along, s + lateral)
                    } else {
                        Planar::new(s + lateral, along)
                    }
                };
                let mut k = 0usize;
                loop {
                    let along = margin + k as f64 * step;
                    if along > length - margin {
                        break;
                    }
                    let near_junction = cross.iter().any(|&c| (along - c).abs() <= junction_clear);
                    if !near_junction {
                        let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                        object_slots.push(to_planar(along, side * params.object_offset_m));
                    }
                    k += 1;
                }
                let mut k = 0usize;
                loop {
                    let along = margin + k as f64 * params.camera_spacing_m;
                    if along > length - margin {
                        break;
                    }
                    // Junction centres are already covered by the east-west pass.
                    let on_cross = !horizontal && cross.iter().any(|&c| (along - c).abs() < 1e-9);
                    if !on_cross {
                        camera_slots.push(to_planar(along, 0.0));
                    }
                    k += 1;
                }
            }
        }
        // Fill outward from the south-west junction so objects and cameras cover
        // the same neighbourhood whatever counts are requested.
        let anchor = Planar::new(columns[0], rows[0]);
        let by_distance = |a: &Planar, b: &Planar| {
            anchor
                .distance(a)
                .total_cmp(&anchor.distance(b))
                .then(a.x.total_cmp(&b.x))
                .then(a.y.total_cmp(&b.y))
        };
        object_slots.sort_by(by_distance);
        camera_slots.sort_by(by_distance);
        Ok(Self {
            columns,
            rows,
            object_slots,
            camera_slots,
            extent: (ex, ny),
        })
    }

    /// Building footprints: the blocks between streets, kerb-inset.
    pub fn blocks(&self, params: &LayoutParams) -> Vec<[Planar; 4]> {
        let hw = params.street_half_width_m;
        let spans = |streets: &[f64], extent: f64| {
            let mut edges = vec![(0.0, false)];
            edges.extend(streets.iter().map(|&s| (s, true)));
            edges.push((extent, false));
            edges
                .windows(2)
                .filter_map(|w| {
                    let lo = if w[0].1 { w[0].0 + hw } else { w[0].0 };
                    let hi = if w[1].1 { w[1].0 - hw } else { w[1].0 };
                    (hi - lo > 1.0).then_some((lo, hi))
                })
                .collect::<Vec<_>>()
        };
        let xs = spans(&self.columns, self.extent.0);
        let ys = spans(&self.rows, self.extent.1);
        let mut out = Vec::new();
        for &(y0, y1) in &ys {
            for &(x0, x1) in &xs {
                out.push([
                    Planar::new(x0, y0),
                    Planar::new(x1, y0),
                    Planar::new(x1, y1),
                    Planar::new(x0, y1),
                ]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub objects: Vec<GroundTruthObject>,
    pub cameras: Vec<Camera>,
}

/// Street-like layout with the default network geometry.
pub fn synth_layout<R: Rng + ?Sized>(
    area: &GridSpec,
    n_objects: usize,
    n_cameras: usize,
    rng: &mut R,
) -> Result<Layout, SimError> {
    synth_layout_with(area, n_objects, n_cameras, &LayoutParams::default(), rng)
}

pub fn synth_layout_with<R: Rng + ?Sized>(
    area: &GridSpec,
    n_objects: usize,
    n_cameras: usize,
    params: &LayoutParams,
    rng: &mut R,
) -> Result<Layout, SimError> {
    if n_objects == 0 || n_cameras == 0 {
        return Err(SimError::Layout("need at least one object and one camera".into()));
    }
    let net = StreetNetwork::new(area, params)?;
    if n_objects > net.object_slots.len() || n_cameras > net.camera_slots.len() {
        return Err(SimError::Layout(format!(
            "area fits {} objects and {} cameras, requested {n_objects} and {n_cameras}",
            net.object_slots.len(),
            net.camera_slots.len()
        )));
    }
    let objects = net.object_slots[..n_objects]
        .iter()
        .enumerate()
        .map(|(k, p)| GroundTruthObject {
            id: format!("obj{k:05}"),
            position: area.to_geo(*p),
        })
        .collect();
    let (ex, ny) = net.extent;
    let cameras = net.camera_slots[..n_cameras]
        .iter()
        .enumerate()
        .map(|(k, p)| {
            // Uniform in a disc of radius camera_jitter_m, kept inside the area.
            let radius = params.camera_jitter_m * rng.gen::<f64>().sqrt();
            let angle = rng.gen_range(0.0..360.0);
            let q = p.offset(angle, radius);
            let q = Planar::new(q.x.clamp(0.0, ex - 1e-6), q.y.clamp(0.0, ny - 1e-6));
            Camera {
                id: format!("cam{k:05}"),
                position: area.to_geo(q),
            }
        })
        .collect();
    Ok(Layout { objects, cameras })
}
