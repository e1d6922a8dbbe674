//! Object localisation from street-level detections: ray triangulation,
//! energy maps and stochastic birth-and-death optimisation.

pub mod config;
pub mod energy;
pub mod eval;
pub mod geo;
pub mod io;
pub mod pipeline;
pub mod sbd;
pub mod seed;
pub mod simulator;

pub use config::PipelineConfig;
pub use energy::{build_energy_map, unary_energy, EnergyMap, EnergyWeights, GisRaster};
pub use geo::{all_intersections, Camera, GeoPoint, GridSpec, Intersection, Pixel, Planar, Ray};
pub use sbd::{run, ConfigPoint, Configuration, RunOutcome, SbdParams, Schedule};
pub use simulator::{Detection, GroundTruthObject, NoiseProfile};
