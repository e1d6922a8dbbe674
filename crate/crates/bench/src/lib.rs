//! Shared fixtures for the benchmarks.

use sbd_core::pipeline::{footprint_raster, rays_from_detections, simulate_scenario, Scenario};
use sbd_core::{EnergyMap, GisRaster, PipelineConfig, Ray};

/// A simulated scene with its rays, occupancy raster and energy map.
pub struct Fixture {
    pub cfg: PipelineConfig,
    pub scenario: Scenario,
    pub rays: Vec<Ray>,
    pub gis: GisRaster,
    pub map: EnergyMap,
}

impl Fixture {
    /// Square scene `side_px` pixels wide with objects and cameras scaled to
    /// the default density (600 and 800 per 2000 x 2000 pixels).
    pub fn new(side_px: u32, noise_level: u8) -> Self {
        let mut cfg = PipelineConfig::default();
        let scale = (f64::from(side_px) / 2000.0).powi(2);
        cfg.grid.height = side_px;
        cfg.grid.width = side_px;
        cfg.simulation.noise_level = noise_level;
        cfg.simulation.n_objects = ((600.0 * scale) as usize).max(1);
        cfg.simulation.n_cameras = ((800.0 * scale) as usize).max(1);
        let scenario = simulate_scenario(&cfg).expect("bench scenario");
        let rays = rays_from_detections(&scenario.detections, &scenario.layout.cameras, &scenario.grid)
            .expect("bench rays");
        let gis = footprint_raster(&scenario.buildings, &scenario.grid);
        let (map, _) = sbd_core::pipeline::energy_from_detections(
            &scenario.detections,
            &scenario.layout.cameras,
            &gis,
            &cfg.weights,
        )
        .expect("bench energy map");
        Self {
            cfg,
            scenario,
            rays,
            gis,
            map,
        }
    }
}
