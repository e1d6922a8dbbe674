//! Stochastic birth-and-death optimisation of disc configurations.
//!
//! Each iteration `m` adds a Poisson-sized wave of equal-radius discs drawn
//! from the energy map, then sweeps the configuration from the worst point to
//! the best, removing each with probability `s a / (1 + s a)` where
//! `a = exp(beta^m * (H(g) - H(g \ p)))` and `s` is `epsilon^m` (text schedule)
//! or `epsilon` (box schedule). The lowest-energy configuration seen is kept
//! and the run stops once it has not improved for `t_wait` iterations.
//!
//! Random draws come from a single ChaCha8 stream in a fixed order per
//! iteration: `N_m`, the radius mark, the birth locations, then one coin per
//! visited point in the death sweep.

mod birth;
mod config;
mod death;
mod energy;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use birth::{
    birth_step, birth_temperature, birth_weights, radius_pmf, sample_radius, BirthLaw,
    BirthReport, BirthSampler, DUPLICATE_REDRAWS, MIN_BIRTH_TEMPERATURE,
};
pub use config::{ConfigPoint, Configuration, RADIUS_MAX, RADIUS_MIN};
pub use death::{death_probability, death_step, schedule_factors, DeathOutcome, EXP_CLAMP};
pub use energy::{config_energy, pair_coupling, removal_delta};

use crate::energy::EnergyMap;
use crate::geo::Pixel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SbdError {
    #[error("invalid SBD parameter: {0}")]
    InvalidParams(String),
    #[error("invalid configuration point: {0}")]
    InvalidPoint(String),
    #[error("point ({}, {}) r={} is not in the configuration", .0.pixel.i, .0.pixel.j, .0.radius)]
    NotInConfiguration(ConfigPoint),
    #[error("pixel ({}, {}) is outside the grid", .0.i, .0.j)]
    OutOfGrid(Pixel),
}

/// Which discretization factor the death probability uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// `epsilon^m`.
    #[default]
    Text,
    /// Constant `epsilon`.
    Box,
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "box" => Ok(Self::Box),
            other => Err(format!("unknown schedule `{other}` (expected text or box)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbdParams {
    /// Mean birth count per wave.
    pub n0: f64,
    pub epsilon: f64,
    pub beta: f64,
    /// Patience: iterations without strict improvement before stopping.
    pub t_wait: u64,
    pub schedule: Schedule,
    pub seed: u64,
    pub max_iterations: u64,
    pub birth_law: BirthLaw,
    /// Pins every radius mark instead of sampling it.
    pub fixed_radius: Option<u32>,
}

impl Default for SbdParams {
    fn default() -> Self {
        Self {
            n0: 100.0,
            epsilon: 0.999,
            beta: 0.999,
            t_wait: 500,
            schedule: Schedule::Text,
            seed: 42,
            max_iterations: 20_000,
            birth_law: BirthLaw::Boltzmann,
            fixed_radius: None,
        }
    }
}

impl SbdParams {
    pub fn validate(&self) -> Result<(), SbdError> {
        let bad = |msg: String| Err(SbdError::InvalidParams(msg));
        if !(self.n0.is_finite() && self.n0 > 0.0) {
            return bad(format!("n0 must be > 0, got {}", self.n0));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0, 1), got {}", self.epsilon));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if self.t_wait == 0 {
            return bad("t_wait must be >= 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1".into());
        }
        if let Some(r) = self.fixed_radius {
            if !(RADIUS_MIN..=RADIUS_MAX).contains(&r) {
                return bad(format!(
                    "fixed_radius {r} outside {RADIUS_MIN}..={RADIUS_MAX}"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub config_size: usize,
    pub energy: f64,
    pub best_energy: f64,
    pub births: usize,
    pub deaths: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Patience exhausted.
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    /// Set when no configuration ever beat the empty one.
    pub no_improvement: bool,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn best_energy_is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].best_energy <= w[0].best_energy)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub best: Configuration,
    pub best_energy: f64,
    pub trace: RunTrace,
}

/// Runs the optimizer on `map` with pairwise weight `alpha`.
pub fn run(map: &EnergyMap, alpha: f64, params: &SbdParams) -> Result<RunOutcome, SbdError> {
    let sampler = BirthSampler::new(map, params.birth_law);
    run_with_sampler(map, alpha, params, &sampler)
}

/// As [`run`], reusing a prebuilt birth sampler for the same map.
pub fn run_with_sampler(
    map: &EnergyMap,
    alpha: f64,
    params: &SbdParams,
    sampler: &BirthSampler<'_>,
) -> Result<RunOutcome, SbdError> {
    params.validate()?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(SbdError::InvalidParams(format!("alpha must be >= 0, got {alpha}")));
    }
    if sampler.law() != params.birth_law || sampler.grid() != map.grid() {
        return Err(SbdError::InvalidParams(
            "birth sampler does not match the map or birth law".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let table = energy::DiscTable::new();
    let mut current = Configuration::new();
    let mut best = Configuration::new();
    let mut best_energy = 0.0;
    let mut improved = false;
    let mut patience = 0u64;
    let mut m = 0u64;
    let mut records = Vec::new();

    let termination = loop {
        if patience >= params.t_wait {
            break Termination::Converged;
        }
        if m >= params.max_iterations {
            break Termination::MaxIterations;
        }
        let births = birth_step(&mut current, sampler, params, &mut rng);
        let outcome = death::sweep(&current, map, alpha, params, m, &mut rng, &table);
        current = outcome.survivors;

        if outcome.energy < best_energy {
            best_energy = outcome.energy;
            best = current.clone();
            improved = true;
            patience = 0;
        } else {
            patience += 1;
        }
        records.push(TraceRecord {
            iteration: m,
            config_size: current.len(),
            energy: outcome.energy,
            best_energy,
            births: births.added,
            deaths: outcome.deaths,
        });
        if m % 500 == 0 {
            log::debug!(
                "iteration {m}: |g| = {}, H = {:.4}, H_min = {:.4}",
                current.len(),
                outcome.energy,
                best_energy
            );
        }
        m += 1;
    };

    if !improved {
        log::warn!("no configuration improved on the empty one after {m} iterations");
    }
    Ok(RunOutcome {
        best,
        best_energy,
        trace: RunTrace {
            seed: params.seed,
            records,
            termination,
            no_improvement: !improved,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, GridSpec};

    fn grid(h: u32, w: u32) -> GridSpec {
        GridSpec::new(GeoPoint::new(40.0, -3.7).unwrap(), h, w, 0.25).unwrap()
    }

    fn pt(i: u32, j: u32, r: u32) -> ConfigPoint {
        ConfigPoint::new(Pixel::new(i, j), r).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(SbdParams::default().validate().is_ok());
        for bad in [
            SbdParams { n0: 0.0, ..Default::default() },
            SbdParams { epsilon: 1.0, ..Default::default() },
            SbdParams { epsilon: 0.0, ..Default::default() },
            SbdParams { beta: 0.0, ..Default::default() },
            SbdParams { t_wait: 0, ..Default::default() },
            SbdParams { fixed_radius: Some(11), ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn config_energy_small_cases() {
        let g = grid(20, 20);
        let mut map = EnergyMap::zeros(g);
        assert_eq!(config_energy(&map, &Configuration::new(), 10.0), 0.0);
        map.set(Pixel::new(5, 5), -2.5);
        map.set(Pixel::new(5, 6), 1.0);
        let single = Configuration::from_points([pt(5, 5, 2)]).unwrap();
        assert_eq!(config_energy(&map, &single, 10.0), -1.5);
    }

    #[test]
    fn coincident_discs_pay_full_overlap() {
        // Two r=2 discs on the same centre; exact duplicates differ in radius only
        // in sets, so compare H against the hand-evaluated double sum directly.
        let g = grid(20, 20);
        let map = EnergyMap::zeros(g);
        let a = pt(8, 8, 2);
        let b = pt(8, 8, 3);
        let cfg = Configuration::from_points([a, b]).unwrap();
        // A = 4 pi; terms: 4pi / (9 pi) + 4pi / (4 pi).
        let expected = 10.0 * (4.0 / 9.0 + 1.0);
        assert!((config_energy(&map, &cfg, 10.0) - expected).abs() < 1e-12);
        assert!((pair_coupling(&a, &b) - (4.0 / 9.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_discs_double_count_overlap() {
        let g = grid(20, 20);
        let map = EnergyMap::zeros(g);
        let p = pt(8, 8, 2);
        let h = energy::energy_of_points(&map, &[p, p], 10.0);
        assert!((h - 20.0).abs() < 1e-12);
    }

    #[test]
    fn removal_delta_basics() {
        let g = grid(30, 30);
        let mut map = EnergyMap::zeros(g);
        map.set(Pixel::new(10, 10), -3.0);
        let p = pt(10, 10, 3);
        let single = Configuration::from_points([p]).unwrap();
        assert_eq!(removal_delta(&map, &single, &p, 10.0).unwrap(), -3.0);

        let zero = EnergyMap::zeros(g);
        let q = pt(25, 25, 3);
        let two = Configuration::from_points([p, q]).unwrap();
        assert_eq!(removal_delta(&zero, &two, &p, 10.0).unwrap(), 0.0);
        assert_eq!(removal_delta(&zero, &two, &q, 10.0).unwrap(), 0.0);

        let missing = pt(1, 1, 2);
        assert!(matches!(
            removal_delta(&zero, &two, &missing, 10.0),
            Err(SbdError::NotInConfiguration(_))
        ));
    }

    #[test]
    fn null_map_has_zero_energy() {
        let g = grid(16, 16);
        let map = EnergyMap::zeros(g);
        let cfg: Configuration = (1..=16).map(|k| pt(k, 17 - k, 2 + k % 9)).collect();
        assert_eq!(config_energy(&map, &cfg, 0.0), 0.0);
    }

    #[test]
    fn unfavourable_map_returns_empty() {
        let g = grid(16, 16);
        let map = EnergyMap::from_values(g, vec![1.0; g.len()]).unwrap();
        let params = SbdParams {
            n0: 5.0,
            t_wait: 50,
            ..Default::default()
        };
        let out = run(&map, 10.0, &params).unwrap();
        assert!(out.best.is_empty());
        assert_eq!(out.best_energy, 0.0);
        assert!(out.trace.no_improvement);
        assert_eq!(out.trace.termination, Termination::Converged);
        assert_eq!(out.trace.iterations(), 50);
    }

    #[test]
    fn max_iterations_caps_the_run() {
        let g = grid(16, 16);
        let map = EnergyMap::from_values(g, vec![-0.1; g.len()]).unwrap();
        let params = SbdParams {
            n0: 3.0,
            t_wait: 10_000,
            max_iterations: 25,
            ..Default::default()
        };
        let out = run(&map, 10.0, &params).unwrap();
        assert_eq!(out.trace.termination, Termination::MaxIterations);
        assert_eq!(out.trace.iterations(), 25);
        assert!(out.trace.best_energy_is_monotone());
    }

    #[test]
    fn schedule_parses() {
        assert_eq!("text".parse::<Schedule>().unwrap(), Schedule::Text);
        assert_eq!("box".parse::<Schedule>().unwrap(), Schedule::Box);
        assert!("other".parse::<Schedule>().is_err());
    }
}
