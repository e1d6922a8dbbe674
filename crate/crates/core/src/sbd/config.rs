use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::SbdError;
use crate::geo::{GridSpec, Pixel};

pub const RADIUS_MIN: u32 = 2;
pub const RADIUS_MAX: u32 = 10;

/// A disc hypothesis: centre pixel plus radius mark in pixels.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct ConfigPoint {
    pub pixel: Pixel,
    pub radius: u32,
}

impl ConfigPoint {
    pub fn new(pixel: Pixel, radius: u32) -> Result<Self, SbdError> {
        if !(RADIUS_MIN..=RADIUS_MAX).contains(&radius) {
            return Err(SbdError::InvalidPoint(format!(
                "radius {radius} outside {RADIUS_MIN}..={RADIUS_MAX}"
            )));
        }
        Ok(Self { pixel, radius })
    }

    pub fn radius_f64(&self) -> f64 {
        f64::from(self.radius)
    }
}

/// Finite set of marked points, kept in insertion order.
#[derive(Clone, Debug, Default)]
pub struct Configuration {
    points: Vec<ConfigPoint>,
    members: HashSet<ConfigPoint>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a configuration, rejecting exact duplicates.
    pub fn from_points(points: impl IntoIterator<Item = ConfigPoint>) -> Result<Self, SbdError> {
        let mut g = Self::new();
        for p in points {
            if !g.insert(p) {
                return Err(SbdError::InvalidPoint(format!(
                    "duplicate point ({}, {}) r={}",
                    p.pixel.i, p.pixel.j, p.radius
                )));
            }
        }
        Ok(g)
    }

    /// Returns false (and leaves `self` unchanged) if `p` is already present.
    pub fn insert(&mut self, p: ConfigPoint) -> bool {
        if self.members.insert(p) {
            self.points.push(p);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, p: &ConfigPoint) -> bool {
        self.members.contains(p)
    }

    pub fn remove(&mut self, p: &ConfigPoint) -> bool {
        if self.members.remove(p) {
            self.points.retain(|q| q != p);
            true
        } else {
            false
        }
    }

    pub fn without(&self, p: &ConfigPoint) -> Self {
        let mut g = self.clone();
        g.remove(p);
        g
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ConfigPoint] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConfigPoint> {
        self.points.iter()
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<(), SbdError> {
        match self.points.iter().find(|p| !grid.contains(p.pixel)) {
            Some(p) => Err(SbdError::OutOfGrid(p.pixel)),
            None => Ok(()),
        }
    }
}

impl FromIterator<ConfigPoint> for Configuration {
    /// Collects points, silently dropping exact duplicates.
    fn from_iter<T: IntoIterator<Item = ConfigPoint>>(iter: T) -> Self {
        let mut g = Self::new();
        for p in iter {
            g.insert(p);
        }
        g
    }
}
