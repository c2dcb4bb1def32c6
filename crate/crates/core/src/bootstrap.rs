//! Bootstrap variance of the refinement estimator `Delta V_l` and the
//! integrated quantity `V_l` that drives replication allocation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{LevelEstimate, OutputTable};
use crate::metamodel::WeightMatrix;
use crate::rng::{Namespace, StreamKey};
use crate::stats::{sample_variance, RunningMoments};

pub const DEFAULT_REPLICATES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates `B`.
    pub replicates: usize,
    pub seed: u64,
    /// Draw one index vector per replicate and apply it to every design point
    /// instead of resampling each point independently.
    pub shared_indices: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapConfig {
            replicates,
            seed,
            shared_indices: false,
        }
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self::new(DEFAULT_REPLICATES, 0)
    }
}

/// Source of resampling indices in `0..m`.
pub trait IndexSampler {
    fn fill(&mut self, m: usize, out: &mut [usize]);
}

impl IndexSampler for ChaCha8Rng {
    fn fill(&mut self, m: usize, out: &mut [usize]) {
        for i in out.iter_mut() {
            *i = self.gen_range(0..m);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementVariance {
    /// Bootstrap variance of `Delta V_l(theta)` at each prediction point.
    pub per_point: Vec<f64>,
    /// `(M_l - 1) * mean(per_point)`.
    pub integrated: f64,
}

/// Bootstrap with the default ChaCha resampler. The stream is keyed by
/// `(cfg.seed, level, M_l)` in the bootstrap namespace, so refreshing after a
/// top-up draws fresh indices and never touches simulation streams.
pub fn bootstrap_refinement_variance(
    table: &OutputTable,
    weights: &WeightMatrix,
    weights_aux: Option<&WeightMatrix>,
    cfg: &BootstrapConfig,
) -> Result<RefinementVariance> {
    let mut rng =
        StreamKey::new(cfg.seed, table.level(), table.replications()).rng_in(Namespace::Bootstrap);
    bootstrap_with_sampler(table, weights, weights_aux, cfg, &mut rng)
}

pub fn bootstrap_with_sampler<S: IndexSampler + ?Sized>(
    table: &OutputTable,
    weights: &WeightMatrix,
    weights_aux: Option<&WeightMatrix>,
    cfg: &BootstrapConfig,
    sampler: &mut S,
) -> Result<RefinementVariance> {
    let m = table.replications();
    if m < 2 {
        return Err(Error::TooFewReplications(m));
    }
    if !table.is_complete() {
        return Err(Error::invalid(
            "table",
            "raw outputs were not retained for every replication",
        ));
    }
    if cfg.replicates < 2 {
        return Err(Error::invalid("B", "need at least 2 bootstrap replicates"));
    }
    let n = table.len();
    if weights.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.cols(),
        });
    }
    if let Some(aux) = weights_aux {
        if aux.cols() > n {
            return Err(Error::PrefixViolation {
                aux: aux.cols(),
                level: n,
            });
        }
    }
    let p = weights.rows();
    let mut indices = vec![0usize; m];
    let mut resampled = vec![0.0; m];
    let mut variances = vec![0.0; n];
    let mut values = vec![0.0; p];
    let mut aux_values = vec![0.0; p];
    let mut moments = vec![RunningMoments::new(); p];

    for _ in 0..cfg.replicates {
        if cfg.shared_indices {
            sampler.fill(m, &mut indices);
        }
        for (i, v) in variances.iter_mut().enumerate() {
            if !cfg.shared_indices {
                sampler.fill(m, &mut indices);
            }
            let row = table.row(i);
            for (r, &k) in resampled.iter_mut().zip(&indices) {
                *r = row[k];
            }
            *v = sample_variance(&resampled)?;
        }
        weights.predict_into(&variances, &mut values);
        if let Some(aux) = weights_aux {
            aux.predict_into(&variances[..aux.cols()], &mut aux_values);
        }
        for (k, acc) in moments.iter_mut().enumerate() {
            let aux = if weights_aux.is_some() {
                aux_values[k]
            } else {
                0.0
            };
            acc.push(values[k] - aux);
        }
    }

    let per_point: Vec<f64> = moments
        .iter()
        .map(RunningMoments::variance)
        .collect::<Result<_>>()?;
    let integrated = (m - 1) as f64 * per_point.iter().sum::<f64>() / p as f64;
    Ok(RefinementVariance {
        per_point,
        integrated,
    })
}

/// `d_l^2`: mean over the prediction points of the squared refinement.
pub fn refinement_squared_norm(estimate: &LevelEstimate) -> f64 {
    let r = &estimate.refinement;
    r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64
}
