use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbd_core::energy::EnergyMap;
use sbd_core::geo::{GeoPoint, GridSpec, Pixel};
use sbd_core::sbd::{
    birth_step, config_energy, death_step, removal_delta, run, BirthLaw, BirthSampler,
    ConfigPoint, Configuration, SbdParams, Schedule, Termination,
};

fn grid(h: u32, w: u32) -> GridSpec {
    GridSpec::new(GeoPoint::new(53.3438, -6.2546).unwrap(), h, w, 0.25).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng, g: GridSpec) -> EnergyMap {
    let values = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    EnergyMap::from_values(g, values).unwrap()
}

/// Flat background of +1 with Gaussian wells of the given depth and width.
fn well_map(g: GridSpec, wells: &[(Pixel, f64, f64)]) -> EnergyMap {
    let mut values = vec![1.0; g.len()];
    for (k, v) in values.iter_mut().enumerate() {
        let p = g.pixel_at(k);
        for &(c, depth, sigma) in wells {
            let d2 = p.distance_sq(&c) as f64;
            *v -= depth * (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    EnergyMap::from_values(g, values).unwrap()
}

proptest! {
    #[test]
    fn removal_delta_matches_recomputation(seed in 0u64..10_000, n in 1usize..20, alpha in 0.0f64..20.0) {
        let g = grid(40, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng, g);
        let mut cfg = Configuration::new();
        while cfg.len() < n {
            let p = ConfigPoint::new(
                Pixel::new(rng.gen_range(5..=20), rng.gen_range(5..=20)),
                rng.gen_range(2..=10),
            )
            .unwrap();
            cfg.insert(p);
        }
        let full = config_energy(&map, &cfg, alpha);
        for p in cfg.iter() {
            let fast = removal_delta(&map, &cfg, p, alpha).unwrap();
            let slow = full - config_energy(&map, &cfg.without(p), alpha);
            prop_assert!((fast - slow).abs() < 1e-9, "{} vs {}", fast, slow);
        }
    }
}

#[test]
fn birth_wave_sizes_follow_the_poisson_mean() {
    let g = grid(200, 200);
    let map = EnergyMap::zeros(g);
    let sampler = BirthSampler::new(&map, BirthLaw::Boltzmann);
    let params = SbdParams {
        n0: 37.0,
        ..SbdParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let waves = 4000;
    let mut total = 0usize;
    let mut sq = 0usize;
    for _ in 0..waves {
        let mut g = Configuration::new();
        let rep = birth_step(&mut g, &sampler, &params, &mut rng);
        assert_eq!(g.len(), rep.added);
        assert!(g.iter().all(|p| p.radius == rep.radius));
        total += rep.drawn;
        sq += rep.drawn * rep.drawn;
    }
    let mean = total as f64 / waves as f64;
    let var = sq as f64 / waves as f64 - mean * mean;
    // Standard error of the mean is sqrt(37 / 4000) ~ 0.096.
    assert!((mean - 37.0).abs() < 4.0 * (37.0f64 / waves as f64).sqrt(), "mean {mean}");
    assert!((var / 37.0 - 1.0).abs() < 0.1, "variance {var}");
}

#[test]
fn single_well_is_found_by_every_seed() {
    let g = grid(60, 60);
    let centre = Pixel::new(31, 27);
    let map = well_map(g, &[(centre, 6.0, 3.0)]);
    for seed in 0..10 {
        let params = SbdParams {
            seed,
            t_wait: 100,
            max_iterations: 2000,
            n0: 20.0,
            ..SbdParams::default()
        };
        let out = run(&map, 10.0, &params).unwrap();
        assert!(out.best_energy < 0.0);
        assert!(out.trace.best_energy_is_monotone());
        assert!(
            out.best.iter().any(|p| p.pixel.distance(&centre) <= 2.0),
            "seed {seed}: {:?}",
            out.best.points()
        );
        assert!((config_energy(&map, &out.best, 10.0) - out.best_energy).abs() < 1e-6);
        assert_eq!(out.trace.termination, Termination::Converged);
    }
}

#[test]
fn deaths_vanish_late_in_long_runs() {
    let g = grid(40, 40);
    let map = well_map(g, &[(Pixel::new(12, 12), 4.0, 3.0), (Pixel::new(28, 25), 4.0, 3.0)]);
    let params = SbdParams {
        seed: 3,
        n0: 10.0,
        epsilon: 0.97,
        beta: 0.97,
        t_wait: 100_000,
        max_iterations: 400,
        ..SbdParams::default()
    };
    let out = run(&map, 10.0, &params).unwrap();
    assert_eq!(out.trace.termination, Termination::MaxIterations);
    let rate = |recs: &[sbd_core::sbd::TraceRecord]| {
        let deaths: usize = recs.iter().map(|r| r.deaths).sum();
        deaths as f64 / recs.len() as f64
    };
    let early = rate(&out.trace.records[..50]);
    let late = rate(&out.trace.records[out.trace.records.len() - 100..]);
    assert!(early > 3.0, "early death rate {early}");
    assert!(late < 0.05 * early, "late {late} vs early {early}");
}

#[test]
fn death_sweep_is_reproducible_and_reports_energy() {
    let g = grid(40, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let map = random_map(&mut rng, g);
    let mut cfg = Configuration::new();
    while cfg.len() < 30 {
        cfg.insert(
            ConfigPoint::new(Pixel::new(rng.gen_range(1..=40), rng.gen_range(1..=40)), rng.gen_range(2..=10))
                .unwrap(),
        );
    }
    let params = SbdParams::default();
    let a = death_step(&cfg, &map, 10.0, &params, 5, &mut ChaCha8Rng::seed_from_u64(1));
    let b = death_step(&cfg, &map, 10.0, &params, 5, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a.survivors, b.survivors);
    assert_eq!(a.deaths + a.survivors.len(), cfg.len());
    assert!((a.energy - config_energy(&map, &a.survivors, 10.0)).abs() < 1e-9);
    // Visiting order is by non-increasing removal delta.
    assert!(a.visit_deltas.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn schedules_diverge_but_each_is_deterministic() {
    let g = grid(40, 40);
    let map = well_map(g, &[(Pixel::new(20, 20), 5.0, 2.5)]);
    let text = SbdParams {
        seed: 9,
        max_iterations: 300,
        n0: 15.0,
        ..SbdParams::default()
    };
    let boxed = SbdParams {
        schedule: Schedule::Box,
        ..text.clone()
    };
    let a = run(&map, 10.0, &text).unwrap();
    let a2 = run(&map, 10.0, &text).unwrap();
    let b = run(&map, 10.0, &boxed).unwrap();
    assert_eq!(a.trace, a2.trace);
    assert_eq!(a.best, a2.best);
    assert_ne!(a.trace, b.trace);
}
