//! Input domain, point sets and the simulation-model interface.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};

/// Axis-aligned box `[lows[k], highs[k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDomain {
    lows: Vec<f64>,
    highs: Vec<f64>,
}

impl InputDomain {
    pub fn new(lows: Vec<f64>, highs: Vec<f64>) -> Result<Self> {
        if lows.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lows.len() != highs.len() {
            return Err(Error::DimensionMismatch {
                expected: lows.len(),
                found: highs.len(),
            });
        }
        for (k, (lo, hi)) in lows.iter().zip(&highs).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "coordinate {k}: need finite low < high, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(InputDomain { lows, highs })
    }

    /// `[low, high]^dim`.
    pub fn cube(dim: usize, low: f64, high: f64) -> Result<Self> {
        Self::new(vec![low; dim], vec![high; dim])
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::cube(dim, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.lows.len()
    }

    pub fn lows(&self) -> &[f64] {
        &self.lows
    }

    pub fn highs(&self) -> &[f64] {
        &self.highs
    }

    pub fn width(&self, k: usize) -> f64 {
        self.highs[k] - self.lows[k]
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lows.iter().zip(&self.highs))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Affine map of `unit` in [0, 1]^d into the box.
    pub fn from_unit(&self, unit: &[f64], out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.lows[k] + unit[k] * self.width(k);
        }
    }

    /// Inverse of [`InputDomain::from_unit`].
    pub fn to_unit(&self, theta: &[f64], out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = (theta[k] - self.lows[k]) / self.width(k);
        }
    }

    /// Squared Euclidean distance after rescaling every coordinate to [0, 1].
    #[inline]
    pub fn unit_sq_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..a.len() {
            let d = (a[k] - b[k]) / (self.highs[k] - self.lows[k]);
            acc += d * d;
        }
        acc
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }
}

/// Clips every coordinate of `theta` into the domain box.
pub fn clamp_to_domain(theta: &[f64], domain: &InputDomain) -> Result<Vec<f64>> {
    domain.check_dim(theta)?;
    Ok(theta
        .iter()
        .zip(domain.lows.iter().zip(&domain.highs))
        .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
        .collect())
}

/// An owned list of points stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len(),
            });
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_rows(dim: usize, rows: &[&[f64]]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(dim, coords)
    }

    pub fn view(&self) -> Points<'_> {
        Points {
            dim: self.dim,
            coords: &self.coords,
        }
    }

    pub fn prefix(&self, n: usize) -> Points<'_> {
        Points {
            dim: self.dim,
            coords: &self.coords[..n * self.dim],
        }
    }

    pub fn len(&self) -> usize {
        self.view().len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// A borrowed view of consecutive points, e.g. the prefix `T_{l-1}` of `T_l`.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    dim: usize,
    coords: &'a [f64],
}

impl<'a> Points<'a> {
    pub(crate) fn from_raw(dim: usize, coords: &'a [f64]) -> Self {
        debug_assert!(dim > 0 && coords.len().is_multiple_of(dim));
        Points { dim, coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn prefix(&self, n: usize) -> Points<'a> {
        Points {
            dim: self.dim,
            coords: &self.coords[..n * self.dim],
        }
    }

    pub fn to_owned(&self) -> PointSet {
        PointSet {
            dim: self.dim,
            coords: self.coords.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelError(pub String);

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A stochastic simulation model `Y(theta, omega)`.
///
/// `omega` is a fixed-length vector of independent uniforms in (0, 1); the
/// model transforms it internally. `evaluate` must be a pure function of its
/// arguments: the estimators rely on one random element being shared by every
/// design point of a replication (common random numbers).
pub trait SimulationModel {
    fn dimension(&self) -> usize;

    fn uniforms_per_replication(&self) -> usize;

    fn evaluate(&self, theta: &[f64], uniforms: &[f64]) -> core::result::Result<f64, ModelError>;
}

impl<M: SimulationModel + ?Sized> SimulationModel for &M {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn uniforms_per_replication(&self) -> usize {
        (**self).uniforms_per_replication()
    }

    fn evaluate(&self, theta: &[f64], uniforms: &[f64]) -> core::result::Result<f64, ModelError> {
        (**self).evaluate(theta, uniforms)
    }
}
