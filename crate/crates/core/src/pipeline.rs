//! End-to-end steps shared by the command line, tests and benches.

use std::collections::HashMap;

use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::energy::{build_energy_map, EnergyError, EnergyMap, EnergyWeights, GisRaster};
use crate::geo::{all_intersections, Camera, GeoError, GeoPoint, GridSpec, Planar, Ray, DEFAULT_MAX_RANGE_M};
use crate::io::{rasterize_polygons, FormatError};
use crate::sbd::{run_with_sampler, BirthSampler, Configuration, RunOutcome, SbdError};
use crate::seed::role_rng;
use crate::simulator::{
    contaminate, detect_objects, synth_layout_with, Detection, Layout, NoiseProfile, SimError,
    StreetNetwork,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sbd(#[from] SbdError),
    #[error("{0}")]
    Data(String),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub grid: GridSpec,
    pub noise: NoiseProfile,
    pub layout: Layout,
    pub detections: Vec<Detection>,
    /// Planar locations of the contamination phantoms.
    pub phantoms: Vec<Planar>,
    /// Building footprints (single-ring planar polygons).
    pub buildings: Vec<Vec<Planar>>,
}

impl Scenario {
    pub fn contaminant_count(&self) -> usize {
        self.detections.iter().filter(|d| d.is_contaminant).count()
    }

    pub fn truth(&self) -> Vec<GeoPoint> {
        self.layout.objects.iter().map(|o| o.position).collect()
    }
}

/// Simulates a street scene, its detections and contamination from the config.
pub fn simulate_scenario(cfg: &PipelineConfig) -> Result<Scenario, PipelineError> {
    let grid = cfg.grid_spec()?;
    let sim = &cfg.simulation;
    let noise = cfg.noise_profile();
    let mut rng = role_rng(cfg.seed, "simulate");
    let layout = synth_layout_with(&grid, sim.n_objects, sim.n_cameras, &sim.layout, &mut rng)?;
    let clean = detect_objects(
        &layout.cameras,
        &layout.objects,
        &noise,
        &grid,
        sim.confidence_rate,
        &mut rng,
    )?;
    let contaminated = contaminate(clean, &layout.cameras, &noise, &grid, sim.confidence_rate, &mut rng)?;
    let buildings = StreetNetwork::new(&grid, &sim.layout)?
        .blocks(&sim.layout)
        .into_iter()
        .map(|b| b.to_vec())
        .collect();
    Ok(Scenario {
        grid,
        noise,
        layout,
        detections: contaminated.detections,
        phantoms: contaminated.phantoms,
        buildings,
    })
}

/// Occupancy raster of planar footprints.
pub fn footprint_raster(buildings: &[Vec<Planar>], grid: &GridSpec) -> GisRaster {
    let polygons: Vec<Vec<Vec<Planar>>> = buildings.iter().map(|b| vec![b.clone()]).collect();
    rasterize_polygons(&polygons, grid)
}

/// Rays of `detections`, with camera origins looked up by id.
pub fn rays_from_detections(
    detections: &[Detection],
    cameras: &[Camera],
    grid: &GridSpec,
) -> Result<Vec<Ray>, PipelineError> {
    let origins: HashMap<&str, Planar> = cameras
        .iter()
        .map(|c| (c.id.as_str(), grid.to_planar(c.position)))
        .collect();
    detections
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let origin = origins.get(d.camera_id.as_str()).ok_or_else(|| {
                PipelineError::Data(format!(
                    "detection {}: unknown camera `{}`",
                    k + 1,
                    d.camera_id
                ))
            })?;
            Ok(d.to_ray(*origin)?)
        })
        .collect()
}

/// Energy map of the detections and the number of ray intersections behind it.
pub fn energy_from_detections(
    detections: &[Detection],
    cameras: &[Camera],
    gis: &GisRaster,
    weights: &EnergyWeights,
) -> Result<(EnergyMap, usize), PipelineError> {
    let grid = gis.grid();
    let rays = rays_from_detections(detections, cameras, grid)?;
    let intersections = all_intersections(&rays, grid, DEFAULT_MAX_RANGE_M);
    let map = build_energy_map(&intersections, gis, weights)?;
    Ok((map, intersections.len()))
}

/// Disc centres of a configuration, back-projected to geographic coordinates.
pub fn configuration_centres(best: &Configuration, grid: &GridSpec) -> Vec<GeoPoint> {
    best.iter().map(|p| grid.unproject(p.pixel)).collect()
}

/// Runs `runs` independently seeded optimisations on one map, in parallel.
///
/// Run `k` uses the seed derived for index `k`; results are in index order.
pub fn run_campaign(
    map: &EnergyMap,
    cfg: &PipelineConfig,
    runs: u64,
) -> Result<Vec<RunOutcome>, PipelineError> {
    let sampler = BirthSampler::new(map, cfg.sbd.birth_law);
    let alpha = cfg.weights.alpha;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(runs.max(1) as usize);
    let mut slots: Vec<Option<Result<RunOutcome, SbdError>>> = (0..runs).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (t, chunk) in slots.chunks_mut(runs.div_ceil(threads as u64).max(1) as usize).enumerate() {
            let sampler = &sampler;
            let base = t * runs.div_ceil(threads as u64).max(1) as usize;
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let params = cfg.sbd_params((base + k) as u64);
                    *slot = Some(run_with_sampler(map, alpha, &params, sampler));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every run slot filled").map_err(PipelineError::from))
        .collect()
}
