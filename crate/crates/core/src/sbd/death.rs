//! Energy-sorted death sweep with annealed removal probabilities.

use rand::Rng;

use super::config::{ConfigPoint, Configuration};
use super::energy::{DiscTable, Interactions};
use super::{SbdParams, Schedule};
use crate::energy::EnergyMap;

/// Bound on the exponent `b_m * delta` before exponentiation.
pub const EXP_CLAMP: f64 = 700.0;

/// `(b_m, s_m)`: energy scale `beta^m` and discretization factor.
pub fn schedule_factors(params: &SbdParams, m: u64) -> (f64, f64) {
    let exp = m.min(i32::MAX as u64) as i32;
    let b = params.beta.powi(exp);
    let s = match params.schedule {
        Schedule::Text => params.epsilon.powi(exp),
        Schedule::Box => params.epsilon,
    };
    (b, s)
}

/// `d = s a / (1 + s a)` with `a = exp(b * delta)`.
pub fn death_probability(delta: f64, b: f64, s: f64) -> f64 {
    let z = (b * delta).clamp(-EXP_CLAMP, EXP_CLAMP);
    let sa = s * z.exp();
    sa / (1.0 + sa)
}

#[derive(Clone, Debug)]
pub struct DeathOutcome {
    pub survivors: Configuration,
    pub deaths: usize,
    /// `H` of the survivors.
    pub energy: f64,
    /// Removal deltas at sweep start, in visiting order.
    pub visit_deltas: Vec<f64>,
}

/// One death sweep over `proposed` at iteration `m`.
///
/// Points are visited from the highest removal delta down (ties by pixel, then
/// radius); each removal immediately updates the deltas of its overlapping
/// neighbours. One uniform draw is consumed per visited point.
pub fn death_step<R: Rng + ?Sized>(
    proposed: &Configuration,
    map: &EnergyMap,
    alpha: f64,
    params: &SbdParams,
    m: u64,
    rng: &mut R,
) -> DeathOutcome {
    let table = DiscTable::new();
    sweep(proposed, map, alpha, params, m, rng, &table)
}

pub(crate) fn sweep<R: Rng + ?Sized>(
    proposed: &Configuration,
    map: &EnergyMap,
    alpha: f64,
    params: &SbdParams,
    m: u64,
    rng: &mut R,
    table: &DiscTable,
) -> DeathOutcome {
    let points = proposed.points();
    let n = points.len();
    let inter = Interactions::build(map, points, table);
    let mut alive = vec![true; n];
    let mut deltas: Vec<f64> = (0..n).map(|k| inter.delta(k, alpha, &alive)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        deltas[b]
            .total_cmp(&deltas[a])
            .then_with(|| points[a].cmp(&points[b]))
    });
    let visit_deltas = order.iter().map(|&k| deltas[k]).collect();

    let (b, s) = schedule_factors(params, m);
    let mut deaths = 0;
    for &k in &order {
        let d = death_probability(deltas[k], b, s);
        if rng.gen::<f64>() < d {
            alive[k] = false;
            deaths += 1;
            for &(other, c) in &inter.neighbours[k] {
                deltas[other] -= alpha * c;
            }
        }
    }

    let energy = inter.energy(alpha, &alive);
    let survivors: Configuration = points
        .iter()
        .zip(&alive)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| *p)
        .collect::<Vec<ConfigPoint>>()
        .into_iter()
        .collect();
    DeathOutcome {
        survivors,
        deaths,
        energy,
        visit_deltas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_point_at_start() {
        let params = SbdParams {
            schedule: Schedule::Box,
            ..SbdParams::default()
        };
        let (b, s) = schedule_factors(&params, 0);
        assert_eq!((b, s), (1.0, 0.999));
        let text = SbdParams::default();
        assert_eq!(schedule_factors(&text, 0), (1.0, 1.0));
        assert_eq!(schedule_factors(&text, 1), (0.999, 0.999));
        let d = death_probability(0.0, b, s);
        assert!((d - 0.999 / 1.999).abs() < 1e-15);
        assert!((d - 0.49975).abs() < 1e-6);
    }

    #[test]
    fn probabilities_saturate() {
        assert_eq!(death_probability(1e300, 1.0, 0.999), 1.0);
        assert_eq!(death_probability(f64::MAX, 1.0, 0.5), 1.0);
        assert!(death_probability(-1e300, 1.0, 0.999) < 1e-300);
        assert!(death_probability(-1e300, 1.0, 0.999) >= 0.0);
        // b underflows to zero long into a cooling run: all points look neutral.
        assert_eq!(death_probability(1e12, 0.0, 0.4), 0.4 / 1.4);
    }

    #[test]
    fn schedule_modes_differ_only_in_s() {
        let text = SbdParams::default();
        let boxed = SbdParams {
            schedule: Schedule::Box,
            ..SbdParams::default()
        };
        let (bt, st) = schedule_factors(&text, 1000);
        let (bb, sb) = schedule_factors(&boxed, 1000);
        assert_eq!(bt, bb);
        assert!((st - 0.999f64.powi(1000)).abs() < 1e-15);
        assert_eq!(sb, 0.999);
    }

    #[test]
    fn death_probability_monotone_in_delta() {
        let deltas: Vec<f64> = (-50..=50).map(|k| f64::from(k) * 0.7).collect();
        for w in deltas.windows(2) {
            assert!(death_probability(w[0], 0.9, 0.3) <= death_probability(w[1], 0.9, 0.3));
        }
    }
}
