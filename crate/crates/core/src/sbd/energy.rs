//! Configuration energy `H` and the per-point removal delta.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::config::{ConfigPoint, Configuration, RADIUS_MAX};
use super::SbdError;
use crate::energy::{disc_sum, EnergyMap};
use crate::geo::{disc_half_widths, lens_area};

/// Overlap of `p` and `q` normalized by each disc's area, summed:
/// `A / (pi r_q^2) + A / (pi r_p^2)`.
pub fn pair_coupling(p: &ConfigPoint, q: &ConfigPoint) -> f64 {
    let (rp, rq) = (p.radius_f64(), q.radius_f64());
    let area = lens_area(p.pixel.distance(&q.pixel), rp, rq);
    if area == 0.0 {
        return 0.0;
    }
    area / (PI * rq * rq) + area / (PI * rp * rp)
}

/// Caches disc row half-widths for every admissible radius.
#[derive(Clone, Debug)]
pub(crate) struct DiscTable {
    halves: Vec<Vec<i64>>,
}

impl DiscTable {
    pub(crate) fn new() -> Self {
        Self {
            halves: (0..=RADIUS_MAX).map(disc_half_widths).collect(),
        }
    }

    pub(crate) fn unary(&self, map: &EnergyMap, p: &ConfigPoint) -> f64 {
        disc_sum(map, p.pixel, &self.halves[p.radius as usize])
    }
}

/// `H(g)`, evaluated literally as the per-point double sum.
pub fn config_energy(map: &EnergyMap, g: &Configuration, alpha: f64) -> f64 {
    energy_of_points(map, g.points(), alpha)
}

/// Double sum over an arbitrary point list, repeats allowed.
pub(crate) fn energy_of_points(map: &EnergyMap, pts: &[ConfigPoint], alpha: f64) -> f64 {
    let table = DiscTable::new();
    let mut total = 0.0;
    for (a, p) in pts.iter().enumerate() {
        let mut interaction = 0.0;
        for (b, q) in pts.iter().enumerate() {
            if a != b {
                let area = lens_area(p.pixel.distance(&q.pixel), p.radius_f64(), q.radius_f64());
                interaction += area / (PI * q.radius_f64() * q.radius_f64());
            }
        }
        total += table.unary(map, p) + alpha * interaction;
    }
    total
}

/// `H(g) - H(g \ {p})` without recomputing the whole configuration.
pub fn removal_delta(
    map: &EnergyMap,
    g: &Configuration,
    p: &ConfigPoint,
    alpha: f64,
) -> Result<f64, SbdError> {
    if !g.contains(p) {
        return Err(SbdError::NotInConfiguration(*p));
    }
    let table = DiscTable::new();
    let coupling: f64 = g
        .iter()
        .filter(|q| *q != p)
        .map(|q| pair_coupling(p, q))
        .sum();
    Ok(table.unary(map, p) + alpha * coupling)
}

/// Unary energies and sparse pair couplings of a point list.
#[derive(Clone, Debug)]
pub(crate) struct Interactions {
    pub unary: Vec<f64>,
    /// `(other index, pair_coupling)` for every overlapping partner.
    pub neighbours: Vec<Vec<(usize, f64)>>,
}

impl Interactions {
    pub(crate) fn build(map: &EnergyMap, points: &[ConfigPoint], table: &DiscTable) -> Self {
        let unary = points.iter().map(|p| table.unary(map, p)).collect();

        // Discs can only overlap when their centres are < 2 * RADIUS_MAX apart.
        let cell = 2 * RADIUS_MAX;
        let key = |p: &ConfigPoint| (p.pixel.i / cell, p.pixel.j / cell);
        let mut buckets: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (idx, p) in points.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(idx);
        }

        let mut neighbours = vec![Vec::new(); points.len()];
        for (a, p) in points.iter().enumerate() {
            let (ci, cj) = key(p);
            for ki in ci.saturating_sub(1)..=ci + 1 {
                for kj in cj.saturating_sub(1)..=cj + 1 {
                    let Some(bucket) = buckets.get(&(ki, kj)) else {
                        continue;
                    };
                    for &b in bucket {
                        if b == a {
                            continue;
                        }
                        let c = pair_coupling(p, &points[b]);
                        if c > 0.0 {
                            neighbours[a].push((b, c));
                        }
                    }
                }
            }
            neighbours[a].sort_by_key(|&(b, _)| b);
        }
        Self { unary, neighbours }
    }

    pub(crate) fn delta(&self, idx: usize, alpha: f64, alive: &[bool]) -> f64 {
        let coupling: f64 = self.neighbours[idx]
            .iter()
            .filter(|(b, _)| alive[*b])
            .map(|(_, c)| c)
            .sum();
        self.unary[idx] + alpha * coupling
    }

    /// `H` of the alive subset.
    pub(crate) fn energy(&self, alpha: f64, alive: &[bool]) -> f64 {
        let mut unary = 0.0;
        let mut pairs = 0.0;
        for (a, nb) in self.neighbours.iter().enumerate() {
            if !alive[a] {
                continue;
            }
            unary += self.unary[a];
            for &(b, c) in nb {
                if b > a && alive[b] {
                    pairs += c;
                }
            }
        }
        unary + alpha * pairs
    }
}
