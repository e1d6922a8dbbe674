//! Planar geometry on the georeferenced pixel lattice.
//!
//! Pixels are 1-based `(i, j)` pairs: `i` counts rows northward from the grid
//! origin and `j` counts columns eastward. A point at `x_east`, `y_north`
//! metres from the origin lies in pixel
//! `(1 + floor(y_north / res), 1 + floor(x_east / res))`.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the local equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Default camera-to-intersection cutoff along each ray.
pub const DEFAULT_MAX_RANGE_M: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{axis} offset {value:.3} m lies outside the grid footprint [0, {limit:.3}) m")]
    OutOfFootprint {
        axis: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("pixel ({i}, {j}) lies outside the {height}x{width} grid")]
    PixelOutOfRange {
        i: i64,
        j: i64,
        height: u32,
        width: u32,
    },
    #[error("rays from the same camera `{0}` cannot be paired")]
    SameCamera(String),
    #[error("invalid ray: {0}")]
    InvalidRay(String),
    #[error("disc radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

/// WGS84 latitude/longitude in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(lat.is_finite() && lon.is_finite())
            || !(-90.0..=90.0).contains(&lat)
            || !(-180.0..=180.0).contains(&lon)
        {
            return Err(GeoError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

/// Local planar coordinates in metres, east and north of the grid origin.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Planar {
    pub x: f64,
    pub y: f64,
}

impl Planar {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Planar) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Compass bearing (degrees clockwise from north) from `self` towards `other`.
    pub fn bearing_to(&self, other: &Planar) -> f64 {
        normalize_bearing((other.x - self.x).atan2(other.y - self.y).to_degrees())
    }

    /// Point `distance` metres away along compass `bearing`.
    pub fn offset(&self, bearing_deg: f64, distance: f64) -> Planar {
        let (s, c) = bearing_deg.to_radians().sin_cos();
        Planar::new(self.x + distance * s, self.y + distance * c)
    }
}

/// 1-based pixel coordinate: `i` is the row (northward), `j` the column (eastward).
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Pixel {
    pub i: u32,
    pub j: u32,
}

impl Pixel {
    pub const fn new(i: u32, j: u32) -> Self {
        Self { i, j }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        let di = f64::from(self.i) - f64::from(other.i);
        let dj = f64::from(self.j) - f64::from(other.j);
        di.hypot(dj)
    }

    pub fn distance_sq(&self, other: &Pixel) -> i64 {
        let di = i64::from(self.i) - i64::from(other.i);
        let dj = i64::from(self.j) - i64::from(other.j);
        di * di + dj * dj
    }
}

/// Georeferenced `height x width` pixel lattice anchored at `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: GeoPoint,
    pub height: u32,
    pub width: u32,
    /// Metres per pixel.
    pub resolution: f64,
}

impl GridSpec {
    pub const DEFAULT_RESOLUTION: f64 = 0.25;

    pub fn new(origin: GeoPoint, height: u32, width: u32, resolution: f64) -> Result<Self, GeoError> {
        let grid = Self {
            origin,
            height,
            width,
            resolution,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        GeoPoint::new(self.origin.lat, self.origin.lon)?;
        if self.height == 0 || self.width == 0 {
            return Err(GeoError::InvalidGrid(format!(
                "dimensions must be positive, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(GeoError::InvalidGrid(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Footprint extent in metres as `(east, north)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            f64::from(self.width) * self.resolution,
            f64::from(self.height) * self.resolution,
        )
    }

    pub fn contains(&self, p: Pixel) -> bool {
        (1..=self.height).contains(&p.i) && (1..=self.width).contains(&p.j)
    }

    pub fn contains_signed(&self, i: i64, j: i64) -> bool {
        i >= 1 && j >= 1 && i <= i64::from(self.height) && j <= i64::from(self.width)
    }

    /// Row-major raster index; row `i = 1` comes first.
    pub fn index(&self, p: Pixel) -> usize {
        (p.i as usize - 1) * self.width as usize + (p.j as usize - 1)
    }

    pub fn pixel_at(&self, index: usize) -> Pixel {
        let w = self.width as usize;
        Pixel::new((index / w) as u32 + 1, (index % w) as u32 + 1)
    }

    pub fn check_pixel(&self, p: Pixel) -> Result<(), GeoError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(GeoError::PixelOutOfRange {
                i: i64::from(p.i),
                j: i64::from(p.j),
                height: self.height,
                width: self.width,
            })
        }
    }

    /// Local equirectangular projection about the grid origin.
    pub fn to_planar(&self, p: GeoPoint) -> Planar {
        let lat0 = self.origin.lat.to_radians();
        let x = EARTH_RADIUS_M * lat0.cos() * (p.lon - self.origin.lon).to_radians();
        let y = EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians();
        Planar::new(x, y)
    }

    pub fn to_geo(&self, p: Planar) -> GeoPoint {
        let lat0 = self.origin.lat.to_radians();
        GeoPoint {
            lat: self.origin.lat + (p.y / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (p.x / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        }
    }

    pub fn planar_to_pixel(&self, p: Planar) -> Result<Pixel, GeoError> {
        let (ex, ny) = self.extent();
        if !(p.x >= 0.0 && p.x < ex) {
            return Err(GeoError::OutOfFootprint {
                axis: "east",
                value: p.x,
                limit: ex,
            });
        }
        if !(p.y >= 0.0 && p.y < ny) {
            return Err(GeoError::OutOfFootprint {
                axis: "north",
                value: p.y,
                limit: ny,
            });
        }
        // floor() can still land on the far edge through rounding.
        let i = ((p.y / self.resolution).floor() as u32 + 1).min(self.height);
        let j = ((p.x / self.resolution).floor() as u32 + 1).min(self.width);
        Ok(Pixel::new(i, j))
    }

    pub fn project(&self, p: GeoPoint) -> Result<Pixel, GeoError> {
        self.planar_to_pixel(self.to_planar(p))
    }

    pub fn pixel_center(&self, p: Pixel) -> Planar {
        Planar::new(
            (f64::from(p.j) - 0.5) * self.resolution,
            (f64::from(p.i) - 0.5) * self.resolution,
        )
    }

    /// Geographic position of the pixel centre.
    pub fn unproject(&self, p: Pixel) -> GeoPoint {
        self.to_geo(self.pixel_center(p))
    }
}

/// Normalizes a bearing into `[0, 360)`.
pub fn normalize_bearing(deg: f64) -> f64 {
    let b = deg.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: String,
    pub position: GeoPoint,
}

/// Camera-to-object half-line in the grid's planar frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Ray {
    pub camera_id: String,
    pub origin: Planar,
    /// Degrees clockwise from north, in `[0, 360)`.
    pub bearing: f64,
    pub confidence: f64,
    /// Estimated camera-to-object distance in metres.
    pub depth: f64,
}

impl Ray {
    pub fn new(
        camera_id: impl Into<String>,
        origin: Planar,
        bearing: f64,
        confidence: f64,
        depth: f64,
    ) -> Result<Self, GeoError> {
        if !bearing.is_finite() || !origin.x.is_finite() || !origin.y.is_finite() {
            return Err(GeoError::InvalidRay("non-finite origin or bearing".into()));
        }
        if !(confidence > 0.5 && confidence < 1.0) {
            return Err(GeoError::InvalidRay(format!(
                "confidence {confidence} outside (0.5, 1)"
            )));
        }
        if !(depth.is_finite() && depth > 0.0) {
            return Err(GeoError::InvalidRay(format!("depth {depth} must be positive")));
        }
        Ok(Self {
            camera_id: camera_id.into(),
            origin,
            bearing: normalize_bearing(bearing),
            confidence,
            depth,
        })
    }

    pub fn direction(&self) -> Planar {
        let (s, c) = self.bearing.to_radians().sin_cos();
        Planar::new(s, c)
    }
}

/// Forward crossing of two rays, before it is snapped to a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayCrossing {
    pub point: Planar,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    /// Along-ray distances from each camera to the crossing.
    pub delta1: f64,
    pub delta2: f64,
}

impl RayCrossing {
    pub fn to_intersection(&self, grid: &GridSpec) -> Option<Intersection> {
        let pixel = grid.planar_to_pixel(self.point).ok()?;
        Some(Intersection {
            pixel,
            c1: self.c1,
            c2: self.c2,
            d1: self.d1,
            d2: self.d2,
            delta1: self.delta1,
            delta2: self.delta2,
        })
    }
}

/// Evidence unit: a pairwise ray crossing located on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub pixel: Pixel,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

fn cross(a: Planar, b: Planar) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Intersects two half-lines, keeping the crossing only when it lies within
/// `max_range` metres of both cameras.
pub fn ray_pair_intersection(
    a: &Ray,
    b: &Ray,
    max_range: f64,
) -> Result<Option<RayCrossing>, GeoError> {
    if a.camera_id == b.camera_id {
        return Err(GeoError::SameCamera(a.camera_id.clone()));
    }
    let u = a.direction();
    let v = b.direction();
    let denom = cross(u, v);
    if denom.abs() < 1e-12 {
        return Ok(None);
    }
    let w = Planar::new(b.origin.x - a.origin.x, b.origin.y - a.origin.y);
    let t = cross(w, v) / denom;
    let s = cross(w, u) / denom;
    if !(0.0..=max_range).contains(&t) || !(0.0..=max_range).contains(&s) {
        return Ok(None);
    }
    Ok(Some(RayCrossing {
        point: Planar::new(a.origin.x + t * u.x, a.origin.y + t * u.y),
        c1: a.confidence,
        c2: b.confidence,
        d1: a.depth,
        d2: b.depth,
        delta1: t,
        delta2: s,
    }))
}

/// All pairwise crossings between rays of distinct cameras that land inside
/// the grid, sorted by pixel and then by `(first, second)` input index.
pub fn all_intersections(rays: &[Ray], grid: &GridSpec, max_range: f64) -> Vec<Intersection> {
    // Rays whose origins are more than 2 * max_range apart cannot meet in range.
    let cell = (2.0 * max_range).max(1.0);
    let key = |p: Planar| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (idx, ray) in rays.iter().enumerate() {
        buckets.entry(key(ray.origin)).or_default().push(idx);
    }

    let mut found: Vec<(Pixel, usize, usize, Intersection)> = Vec::new();
    for (a_idx, a) in rays.iter().enumerate() {
        let (cx, cy) = key(a.origin);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = buckets.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &b_idx in bucket {
                    if b_idx <= a_idx || rays[b_idx].camera_id == a.camera_id {
                        continue;
                    }
                    if let Ok(Some(c)) = ray_pair_intersection(a, &rays[b_idx], max_range) {
                        if let Some(it) = c.to_intersection(grid) {
                            found.push((it.pixel, a_idx, b_idx, it));
                        }
                    }
                }
            }
        }
    }
    found.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
    found.into_iter().map(|(_, _, _, it)| it).collect()
}

/// Largest `k >= 0` with `k^2 <= n`.
pub(crate) fn isqrt(n: i64) -> i64 {
    if n < 0 {
        return -1;
    }
    let mut k = (n as f64).sqrt() as i64;
    while k * k > n {
        k -= 1;
    }
    while (k + 1) * (k + 1) <= n {
        k += 1;
    }
    k
}

/// Half-widths of the integer disc of radius `r`, indexed by row offset `-r..=r`.
pub fn disc_half_widths(r: u32) -> Vec<i64> {
    let r = i64::from(r);
    (-r..=r).map(|di| isqrt(r * r - di * di)).collect()
}

/// Grid pixels within Euclidean distance `r` of `center`, in lexicographic order.
pub fn disc_pixels(center: Pixel, r: u32, grid: &GridSpec) -> Vec<Pixel> {
    let ri = i64::from(r);
    let (ci, cj) = (i64::from(center.i), i64::from(center.j));
    let mut out = Vec::new();
    for (row, half) in (-ri..=ri).zip(disc_half_widths(r)) {
        for dj in -half..=half {
            let (i, j) = (ci + row, cj + dj);
            if grid.contains_signed(i, j) {
                out.push(Pixel::new(i as u32, j as u32));
            }
        }
    }
    out
}

/// Area of the lens formed by two discs whose centres are `dist` apart.
pub fn lens_area(dist: f64, r1: f64, r2: f64) -> f64 {
    if dist >= r1 + r2 {
        return 0.0;
    }
    if dist <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((dist * dist + r1 * r1 - r2 * r2) / (2.0 * dist * r1)).clamp(-1.0, 1.0);
    let a2 = ((dist * dist + r2 * r2 - r1 * r1) / (2.0 * dist * r2)).clamp(-1.0, 1.0);
    let k = (-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2);
    r1 * r1 * a1.acos() + r2 * r2 * a2.acos() - 0.5 * k.max(0.0).sqrt()
}

/// Overlap area (pixel^2) of two discs centred on pixels.
pub fn disc_overlap_area(x1: Pixel, r1: f64, x2: Pixel, r2: f64) -> Result<f64, GeoError> {
    for r in [r1, r2] {
        if !(r > 0.0) {
            return Err(GeoError::NonPositiveRadius(r));
        }
    }
    Ok(lens_area(x1.distance(&x2), r1, r2))
}
