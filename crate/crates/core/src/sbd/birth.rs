//! Birth proposals: radius marks, location law over the grid, and the
//! Poisson-sized birth wave.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::config::{ConfigPoint, Configuration, RADIUS_MAX, RADIUS_MIN};
use super::SbdParams;
use crate::energy::{unary_field, EnergyMap};
use crate::geo::{GridSpec, Pixel};

/// Redraws allowed when a sampled location duplicates an existing point.
pub const DUPLICATE_REDRAWS: usize = 10;

/// Floor on the Boltzmann birth temperature.
pub const MIN_BIRTH_TEMPERATURE: f64 = 1e-6;

/// How birth locations are weighted from the unary field `U(., r)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BirthLaw {
    /// `P(x) ~ exp(-U(x, r) / tau)`: low energy is favoured.
    #[default]
    Boltzmann,
    /// `P(x) ~ U(x, r)` as written, shifted by `min U` when `U` goes negative.
    /// Favours high energy; kept for ablation only.
    Literal,
}

/// Unnormalized `exp(-k / 10)` for `k` in `RADIUS_MIN..=RADIUS_MAX`.
fn radius_weights() -> impl Iterator<Item = (u32, f64)> {
    (RADIUS_MIN..=RADIUS_MAX).map(|k| (k, (-f64::from(k) / 10.0).exp()))
}

/// Closed-form pmf of the radius mark, indexed from `RADIUS_MIN`.
pub fn radius_pmf() -> Vec<(u32, f64)> {
    let total: f64 = radius_weights().map(|(_, w)| w).sum();
    radius_weights().map(|(k, w)| (k, w / total)).collect()
}

pub fn sample_radius<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    let total: f64 = radius_weights().map(|(_, w)| w).sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, w) in radius_weights() {
        if u < w {
            return k;
        }
        u -= w;
    }
    RADIUS_MAX
}

/// Median absolute deviation from the median.
pub(crate) fn median_abs_deviation(values: &[f64]) -> f64 {
    fn median(v: &mut [f64]) -> f64 {
        let n = v.len();
        let mid = n / 2;
        let (_, &mut hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        if n % 2 == 1 {
            hi
        } else {
            let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lo + hi)
        }
    }
    if values.is_empty() {
        return 0.0;
    }
    let mut buf = values.to_vec();
    let med = median(&mut buf);
    for (b, &v) in buf.iter_mut().zip(values) {
        *b = (v - med).abs();
    }
    median(&mut buf)
}

/// Mean absolute deviation from the median.
fn mean_abs_deviation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut buf = values.to_vec();
    let mid = buf.len() / 2;
    let (_, &mut med, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    values.iter().map(|v| (v - med).abs()).sum::<f64>() / values.len() as f64
}

/// Temperature of the Boltzmann birth law for a unary field.
///
/// Uses the median absolute deviation; when more than half of the field sits
/// on a single value (typical of sparse evidence) the MAD collapses to zero
/// and the mean absolute deviation is used instead.
pub fn birth_temperature(unary: &[f64]) -> f64 {
    let mad = median_abs_deviation(unary);
    let tau = if mad > MIN_BIRTH_TEMPERATURE {
        mad
    } else {
        mean_abs_deviation(unary)
    };
    tau.max(MIN_BIRTH_TEMPERATURE)
}

fn weights_from_field(unary: &[f64], law: BirthLaw) -> Vec<f64> {
    let n = unary.len();
    let min = unary.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = match law {
        BirthLaw::Boltzmann => {
            let tau = birth_temperature(unary);
            // Shift by the minimum so the largest weight is exactly 1.
            unary.iter().map(|u| (-(u - min) / tau).exp()).collect()
        }
        BirthLaw::Literal => {
            let shift = if min < 0.0 { min } else { 0.0 };
            unary.iter().map(|u| u - shift).collect()
        }
    };
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return vec![1.0 / n as f64; n];
    }
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Birth probability of every grid pixel (row-major) for radius `r`.
pub fn birth_weights(map: &EnergyMap, r: u32, law: BirthLaw) -> Vec<f64> {
    weights_from_field(&unary_field(map, r), law)
}

/// Inverse-CDF sampler over the grid, one lazily built table per radius.
///
/// Tables only depend on the map, so one sampler can serve many runs.
pub struct BirthSampler<'a> {
    map: &'a EnergyMap,
    law: BirthLaw,
    tables: Vec<OnceLock<Vec<f64>>>,
}

impl<'a> BirthSampler<'a> {
    pub fn new(map: &'a EnergyMap, law: BirthLaw) -> Self {
        Self {
            map,
            law,
            tables: (0..=RADIUS_MAX).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn law(&self) -> BirthLaw {
        self.law
    }

    pub fn grid(&self) -> &GridSpec {
        self.map.grid()
    }

    fn cumulative(&self, r: u32) -> &[f64] {
        self.tables[r as usize].get_or_init(|| {
            let mut acc = 0.0;
            birth_weights(self.map, r, self.law)
                .into_iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, r: u32, rng: &mut R) -> Pixel {
        let cdf = self.cumulative(r);
        let total = *cdf.last().expect("grid is non-empty");
        let u = rng.gen::<f64>() * total;
        let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        self.grid().pixel_at(idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BirthReport {
    /// `N_m` as drawn from the Poisson law.
    pub drawn: usize,
    pub radius: u32,
    /// Points actually added after duplicate handling.
    pub added: usize,
}

/// Appends one birth wave to `g`: `N_m ~ Poisson(N0)` points sharing one radius.
pub fn birth_step<R: Rng + ?Sized>(
    g: &mut Configuration,
    sampler: &BirthSampler<'_>,
    params: &SbdParams,
    rng: &mut R,
) -> BirthReport {
    let drawn = Poisson::new(params.n0)
        .expect("n0 validated positive")
        .sample(rng) as usize;
    let radius = match params.fixed_radius {
        Some(r) => r,
        None => sample_radius(rng),
    };
    let mut added = 0;
    for _ in 0..drawn {
        for _ in 0..=DUPLICATE_REDRAWS {
            let p = ConfigPoint {
                pixel: sampler.sample(radius, rng),
                radius,
            };
            if g.insert(p) {
                added += 1;
                break;
            }
        }
    }
    BirthReport {
        drawn,
        radius,
        added,
    }
}
