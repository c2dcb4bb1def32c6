//! Linear-smoother weights `w_i(theta)` and weighted predictions.
//!
//! Distances are Euclidean after rescaling every coordinate of the domain to
//! [0, 1], so bandwidths are expressed in unit-cube units.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{InputDomain, Points};

/// Row-stochastic `|P| x N` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    bandwidth: Option<f64>,
    level: usize,
    fallback_rows: Vec<usize>,
}

impl WeightMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    /// Rows whose kernel values all underflowed and fell back to the nearest
    /// design point.
    pub fn fallback_rows(&self) -> &[usize] {
        &self.fallback_rows
    }

    /// `out[r] = sum_i w[r,i] * responses[i]`. `responses` may be longer than
    /// the number of columns only if the caller slices it first.
    #[inline]
    pub fn predict_into(&self, responses: &[f64], out: &mut [f64]) {
        debug_assert_eq!(responses.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = row.iter().zip(responses).map(|(w, y)| w * y).sum();
        }
    }
}

/// Weighted prediction at every prediction point.
pub fn predict(weights: &WeightMatrix, responses: &[f64]) -> Result<Vec<f64>> {
    if responses.len() != weights.cols {
        return Err(Error::DimensionMismatch {
            expected: weights.cols,
            found: responses.len(),
        });
    }
    let mut out = vec![0.0; weights.rows];
    weights.predict_into(responses, &mut out);
    Ok(out)
}

fn check_inputs(prediction: Points<'_>, design: Points<'_>, domain: &InputDomain) -> Result<()> {
    if design.is_empty() {
        return Err(Error::invalid("design", "design set is empty"));
    }
    for pts in [prediction, design] {
        if pts.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: pts.dim(),
            });
        }
    }
    Ok(())
}

#[inline]
fn gaussian(sq_dist: f64, bandwidth: f64) -> f64 {
    libm::exp(-0.5 * sq_dist / (bandwidth * bandwidth))
}

/// Index of the minimum, lowest index on ties.
fn argmin(xs: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in xs.enumerate() {
        if best.is_none_or(|(_, b)| x < b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

/// Nadaraya-Watson weights with the Gaussian kernel `K(u) = exp(-u^2/2)`.
///
/// A prediction point whose kernel values all underflow gets weight 1 on its
/// nearest design point; such rows are listed in
/// [`WeightMatrix::fallback_rows`].
pub fn gaussian_kernel_weights(
    prediction: Points<'_>,
    design: Points<'_>,
    bandwidth: f64,
    domain: &InputDomain,
) -> Result<WeightMatrix> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("bandwidth", "must be positive and finite"));
    }
    check_inputs(prediction, design, domain)?;
    let (rows, cols) = (prediction.len(), design.len());
    let mut data = vec![0.0; rows * cols];
    let mut fallback_rows = Vec::new();
    let mut dists = vec![0.0; cols];
    for (r, theta) in prediction.iter().enumerate() {
        let row = &mut data[r * cols..(r + 1) * cols];
        for (d, x) in dists.iter_mut().zip(design.iter()) {
            *d = domain.unit_sq_distance(theta, x);
        }
        let mut total = 0.0;
        for (w, d) in row.iter_mut().zip(&dists) {
            *w = gaussian(*d, bandwidth);
            total += *w;
        }
        if total > 0.0 {
            row.iter_mut().for_each(|w| *w /= total);
        } else {
            let nearest = argmin(dists.iter().copied()).expect("design is nonempty");
            row.fill(0.0);
            row[nearest] = 1.0;
            fallback_rows.push(r);
        }
    }
    Ok(WeightMatrix {
        rows,
        cols,
        data,
        bandwidth: Some(bandwidth),
        level: 0,
        fallback_rows,
    })
}

/// Weight `1/k` on the `k` nearest design points (ties by lower index).
pub fn knn_weights(
    prediction: Points<'_>,
    design: Points<'_>,
    k: usize,
    domain: &InputDomain,
) -> Result<WeightMatrix> {
    check_inputs(prediction, design, domain)?;
    let (rows, cols) = (prediction.len(), design.len());
    if k == 0 || k > cols {
        return Err(Error::invalid(
            "k",
            "need 1 <= k <= number of design points",
        ));
    }
    let mut data = vec![0.0; rows * cols];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(cols);
    for (r, theta) in prediction.iter().enumerate() {
        order.clear();
        order.extend(
            design
                .iter()
                .enumerate()
                .map(|(i, x)| (domain.unit_sq_distance(theta, x), i)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let row = &mut data[r * cols..(r + 1) * cols];
        for &(_, i) in &order[..k] {
            row[i] = 1.0 / k as f64;
        }
    }
    Ok(WeightMatrix {
        rows,
        cols,
        data,
        bandwidth: None,
        level: 0,
        fallback_rows: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSelection {
    pub grid: Vec<f64>,
    pub chosen: f64,
    pub scores: Vec<f64>,
    /// Fewer than three design points: no cross-validation was possible and
    /// the largest grid value was returned.
    pub degenerate: bool,
}

/// Geometric grid of 20 bandwidths in unit-cube units, from
/// `min(0.05, 0.5 * n^{-1/d})` to `1.0` times the unit-cube diameter `sqrt(d)`.
/// The lower end tracks the design spacing so fine levels can resolve detail
/// below `0.05`.
pub fn default_bandwidth_grid(dim: usize, n_design: usize) -> Vec<f64> {
    const COUNT: usize = 20;
    let diameter = libm::sqrt(dim as f64);
    let spacing = libm::pow(n_design.max(1) as f64, -1.0 / dim as f64);
    let lo = (0.5 * spacing).min(0.05) * diameter;
    let hi = diameter;
    let ratio = libm::pow(hi / lo, 1.0 / (COUNT - 1) as f64);
    (0..COUNT)
        .map(|i| lo * libm::pow(ratio, i as f64))
        .collect()
}

/// Leave-one-out cross-validation of the Gaussian-kernel bandwidth.
///
/// `score(h) = sum_i (r_i - pred_{-i}(theta_i; h))^2`; the smallest
/// bandwidth wins ties. Responses are centered first, which leaves scores
/// unchanged but makes constant responses score exactly zero.
pub fn loocv_bandwidth(
    design: Points<'_>,
    responses: &[f64],
    grid: &[f64],
    domain: &InputDomain,
) -> Result<BandwidthSelection> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "bandwidth grid is empty"));
    }
    if grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("grid", "bandwidths must be positive"));
    }
    let n = design.len();
    if responses.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: responses.len(),
        });
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if n < 3 {
        let chosen = *sorted.last().expect("grid is nonempty");
        return Ok(BandwidthSelection {
            grid: sorted,
            chosen,
            scores: Vec::new(),
            degenerate: true,
        });
    }

    let center = responses.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = responses.iter().map(|r| r - center).collect();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let d = domain.unit_sq_distance(design.point(i), design.point(j));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut kernel = vec![0.0; n * n];
    let mut scores = Vec::with_capacity(sorted.len());
    for &h in &sorted {
        for i in 0..n {
            for j in 0..i {
                let k = gaussian(dist[i * n + j], h);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        let mut score = 0.0;
        for i in 0..n {
            let row = &kernel[i * n..(i + 1) * n];
            let (mut num, mut den) = (0.0, 0.0);
            for j in (0..n).filter(|&j| j != i) {
                num += row[j] * centered[j];
                den += row[j];
            }
            let pred = if den > 0.0 {
                num / den
            } else {
                let others = (0..n).filter(|&j| j != i);
                let nearest = others
                    .clone()
                    .zip(argmin_iter(others.map(|j| dist[i * n + j])))
                    .find(|(_, is_min)| *is_min)
                    .map(|(j, _)| j)
                    .expect("at least two other points");
                centered[nearest]
            };
            let resid = centered[i] - pred;
            score += resid * resid;
        }
        scores.push(score);
    }
    let best = argmin(scores.iter().copied()).expect("grid is nonempty");
    Ok(BandwidthSelection {
        chosen: sorted[best],
        grid: sorted,
        scores,
        degenerate: false,
    })
}

/// Marks the first minimum of `xs`.
fn argmin_iter(xs: impl Iterator<Item = f64> + Clone) -> impl Iterator<Item = bool> {
    let best = argmin(xs.clone());
    (0..).map(move |i| Some(i) == best)
}
