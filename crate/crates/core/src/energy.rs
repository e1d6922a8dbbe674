//! Static unary energy raster built from ray-intersection evidence and GIS
//! occupancy, plus disc sums over it.
//!
//! Each intersection deposits `(w1 * s1 + w2 * s2)` units of energy spread by a
//! truncated, unit-mass Gaussian whose width grows as the detections get
//! closer to their cameras. Occupied GIS pixels add a flat `w3` on top.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{disc_half_widths, GridSpec, Intersection, Pixel};

/// Smallest kernel width, in pixels.
pub const MIN_SIGMA_PX: f64 = 0.5;
/// Kernel support never extends beyond the detection range around the
/// intersection; this caps `sigma` at `MAX_KERNEL_RADIUS_M / (3 * resolution)`.
pub const MAX_KERNEL_RADIUS_M: f64 = crate::geo::DEFAULT_MAX_RANGE_M;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid energy weights: {0}")]
    InvalidWeights(String),
    #[error("depth estimates must be positive, got d1={d1}, d2={d2}")]
    NonPositiveDepth { d1: f64, d2: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("pixel ({}, {}) is outside the grid", .0.i, .0.j)]
    OutOfGrid(Pixel),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyWeights {
    /// Confidence-score weight; negative values make confident evidence favourable.
    pub w1: f64,
    /// Depth-consistency weight.
    pub w2: f64,
    /// GIS occupancy penalty.
    pub w3: f64,
    /// Pairwise overlap weight.
    pub alpha: f64,
    /// Kernel scale, metres * pixels: `sigma = c_sigma * (1/d1 + 1/d2)`.
    pub c_sigma: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            w1: -3.0,
            w2: 0.1,
            w3: 0.4,
            alpha: 10.0,
            c_sigma: 4.0,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<(), EnergyError> {
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3)] {
            if !v.is_finite() {
                return Err(EnergyError::InvalidWeights(format!("{name} must be finite")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(EnergyError::InvalidWeights(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.c_sigma.is_finite() && self.c_sigma > 0.0) {
            return Err(EnergyError::InvalidWeights(format!(
                "c_sigma must be > 0, got {}",
                self.c_sigma
            )));
        }
        Ok(())
    }
}

/// Binary occupancy layer (1 = infrastructure such as buildings or water).
#[derive(Clone, Debug, PartialEq)]
pub struct GisRaster {
    grid: GridSpec,
    occupancy: Vec<u8>,
}

impl GisRaster {
    pub fn new(grid: GridSpec, occupancy: Vec<u8>) -> Result<Self, EnergyError> {
        if occupancy.len() != grid.len() {
            return Err(EnergyError::InvalidRaster(format!(
                "expected {} cells, got {}",
                grid.len(),
                occupancy.len()
            )));
        }
        if let Some(pos) = occupancy.iter().position(|&v| v > 1) {
            return Err(EnergyError::InvalidRaster(format!(
                "occupancy value {} at cell {pos} is not 0 or 1",
                occupancy[pos]
            )));
        }
        Ok(Self { grid, occupancy })
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            occupancy: vec![0; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn is_occupied(&self, p: Pixel) -> bool {
        self.occupancy[self.grid.index(p)] == 1
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v == 1).count()
    }
}

/// The raster `D`; low values mark favourable object locations.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMap {
    grid: GridSpec,
    values: Vec<f64>,
}

impl EnergyMap {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self, EnergyError> {
        if values.len() != grid.len() {
            return Err(EnergyError::InvalidRaster(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EnergyError::InvalidRaster(format!(
                "non-finite value at cell {pos}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, p: Pixel) -> f64 {
        self.values[self.grid.index(p)]
    }

    pub fn set(&mut self, p: Pixel, v: f64) {
        let idx = self.grid.index(p);
        self.values[idx] = v;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Pixel holding the smallest value (first in raster order on ties).
    pub fn argmin(&self) -> Pixel {
        let mut best = 0;
        for (idx, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = idx;
            }
        }
        self.grid.pixel_at(best)
    }

    pub fn argmax(&self) -> Pixel {
        let mut best = 0;
        for (idx, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = idx;
            }
        }
        self.grid.pixel_at(best)
    }
}

/// Confidence score `c1 * c2` and depth-consistency score `|d1 - D1| + |d2 - D2|`.
pub fn intersection_scores(it: &Intersection) -> (f64, f64) {
    let s1 = it.c1 * it.c2;
    let s2 = (it.d1 - it.delta1).abs() + (it.d2 - it.delta2).abs();
    (s1, s2)
}

/// Kernel width in pixels; close-range detections spread wider.
pub fn kernel_sigma(d1: f64, d2: f64, c_sigma: f64) -> Result<f64, EnergyError> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(EnergyError::NonPositiveDepth { d1, d2 });
    }
    Ok((c_sigma * (1.0 / d1 + 1.0 / d2)).max(MIN_SIGMA_PX))
}

/// Discrete isotropic Gaussian on a disc of radius `ceil(3 sigma)`, normalized
/// to unit mass over that support.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    radius: i64,
    /// `(2 radius + 1)^2` weights, row-major, zero outside the disc.
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Self {
        let radius = (3.0 * sigma).ceil() as i64;
        let side = (2 * radius + 1) as usize;
        let r2 = radius * radius;
        let denom = 2.0 * sigma * sigma;
        let mut weights = vec![0.0; side * side];
        let mut total = 0.0;
        for di in -radius..=radius {
            for dj in -radius..=radius {
                let d2 = di * di + dj * dj;
                if d2 <= r2 {
                    let w = (-(d2 as f64) / denom).exp();
                    weights[((di + radius) as usize) * side + (dj + radius) as usize] = w;
                    total += w;
                }
            }
        }
        for w in &mut weights {
            *w /= total;
        }
        Self { radius, weights }
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn weight(&self, di: i64, dj: i64) -> f64 {
        let side = 2 * self.radius + 1;
        if di.abs() > self.radius || dj.abs() > self.radius {
            return 0.0;
        }
        self.weights[((di + self.radius) * side + dj + self.radius) as usize]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Adds one intersection's kernel-weighted evidence to `map`; mass falling
/// outside the grid is dropped.
pub fn splat(
    map: &mut EnergyMap,
    it: &Intersection,
    weights: &EnergyWeights,
) -> Result<(), EnergyError> {
    let grid = map.grid;
    if !grid.contains(it.pixel) {
        return Err(EnergyError::OutOfGrid(it.pixel));
    }
    let (s1, s2) = intersection_scores(it);
    let amplitude = weights.w1 * s1 + weights.w2 * s2;
    let max_sigma = (MAX_KERNEL_RADIUS_M / (3.0 * grid.resolution)).max(MIN_SIGMA_PX);
    let sigma = kernel_sigma(it.d1, it.d2, weights.c_sigma)?.min(max_sigma);
    let kernel = GaussianKernel::new(sigma);
    let rad = kernel.radius;
    let (ci, cj) = (i64::from(it.pixel.i), i64::from(it.pixel.j));
    for di in -rad..=rad {
        let i = ci + di;
        if i < 1 || i > i64::from(grid.height) {
            continue;
        }
        for dj in -rad..=rad {
            let j = cj + dj;
            if j < 1 || j > i64::from(grid.width) {
                continue;
            }
            let w = kernel.weight(di, dj);
            if w != 0.0 {
                let idx = (i as usize - 1) * grid.width as usize + (j as usize - 1);
                map.values[idx] += amplitude * w;
            }
        }
    }
    Ok(())
}

/// `D = sum_k (w1 s1 + w2 s2) G_k * M_k + w3 R`, accumulated in input order.
pub fn build_energy_map(
    intersections: &[Intersection],
    gis: &GisRaster,
    weights: &EnergyWeights,
) -> Result<EnergyMap, EnergyError> {
    weights.validate()?;
    let grid = gis.grid;
    let mut map = EnergyMap::zeros(grid);
    for it in intersections {
        if !grid.contains(it.pixel) {
            return Err(EnergyError::GridMismatch(format!(
                "intersection pixel ({}, {}) is outside the {}x{} GIS grid",
                it.pixel.i, it.pixel.j, grid.height, grid.width
            )));
        }
        splat(&mut map, it, weights)?;
    }
    for (v, &occ) in map.values.iter_mut().zip(&gis.occupancy) {
        *v += weights.w3 * f64::from(occ);
    }
    Ok(map)
}

/// `U(x, r)`: sum of `D` over the grid pixels within distance `r` of `x`.
pub fn unary_energy(map: &EnergyMap, x: Pixel, r: u32) -> Result<f64, EnergyError> {
    if !map.grid.contains(x) {
        return Err(EnergyError::OutOfGrid(x));
    }
    Ok(disc_sum(map, x, &disc_half_widths(r)))
}

pub(crate) fn disc_sum(map: &EnergyMap, x: Pixel, half_widths: &[i64]) -> f64 {
    let grid = &map.grid;
    let r = (half_widths.len() as i64 - 1) / 2;
    let (h, w) = (i64::from(grid.height), i64::from(grid.width));
    let (ci, cj) = (i64::from(x.i), i64::from(x.j));
    let mut total = 0.0;
    for (k, &half) in half_widths.iter().enumerate() {
        let i = ci + k as i64 - r;
        if i < 1 || i > h {
            continue;
        }
        let lo = (cj - half).max(1);
        let hi = (cj + half).min(w);
        if lo > hi {
            continue;
        }
        let row = (i as usize - 1) * w as usize;
        total += map.values[row + lo as usize - 1..row + hi as usize]
            .iter()
            .sum::<f64>();
    }
    total
}

/// `U(., r)` for every pixel at once, row-major.
pub fn unary_field(map: &EnergyMap, r: u32) -> Vec<f64> {
    let grid = &map.grid;
    let (h, w) = (grid.height as usize, grid.width as usize);
    // Per-row prefix sums: prefix[i * (w + 1) + j] = sum of row i, columns < j.
    let mut prefix = vec![0.0; h * (w + 1)];
    for i in 0..h {
        let base = i * (w + 1);
        for j in 0..w {
            prefix[base + j + 1] = prefix[base + j] + map.values[i * w + j];
        }
    }
    let halves = disc_half_widths(r);
    let rr = r as i64;
    let mut out = vec![0.0; h * w];
    for i in 0..h as i64 {
        for j in 0..w as i64 {
            let mut total = 0.0;
            for (k, &half) in halves.iter().enumerate() {
                let row = i + k as i64 - rr;
                if row < 0 || row >= h as i64 {
                    continue;
                }
                let lo = (j - half).max(0) as usize;
                let hi = ((j + half).min(w as i64 - 1) + 1) as usize;
                let base = row as usize * (w + 1);
                total += prefix[base + hi] - prefix[base + lo];
            }
            out[i as usize * w + j as usize] = total;
        }
    }
    out
}
