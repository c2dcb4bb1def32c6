//! Output tables, level and refinement estimators, and the telescoping MLMC
//! surface.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::design::PredictionSet;
use crate::error::{Error, Result};
use crate::metamodel::{
    default_bandwidth_grid, gaussian_kernel_weights, loocv_bandwidth, WeightMatrix,
};
use crate::model::{InputDomain, PointSet, Points, SimulationModel};
use crate::rng::{fill_uniforms, Namespace, StreamKey};
use crate::stats::RunningMoments;

/// Total number of model evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostCounter(u64);

impl CostCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, evaluations: u64) {
        self.0 += evaluations;
    }

    pub fn total(&self) -> u64 {
        self.0
    }
}

/// Outputs `Y(theta_i, omega_m)` of one level: row `i` is design point `i`,
/// column `m` uses the random element keyed by `(seed, level, m)` at every
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTable {
    level: usize,
    seed: u64,
    namespace: Namespace,
    points: PointSet,
    rows: Vec<Vec<f64>>,
    moments: Vec<RunningMoments>,
    replications: usize,
    retain: Option<usize>,
}

impl OutputTable {
    pub fn new(points: Points<'_>, level: usize, seed: u64) -> Self {
        OutputTable {
            level,
            seed,
            namespace: Namespace::Simulation,
            points: points.to_owned(),
            rows: vec![Vec::new(); points.len()],
            moments: vec![RunningMoments::new(); points.len()],
            replications: 0,
            retain: None,
        }
    }

    /// Draws the random elements from `namespace` instead of the simulation
    /// streams (used for pilot runs).
    pub fn in_namespace(mut self, namespace: Namespace) -> Self {
        assert_eq!(
            self.replications, 0,
            "namespace must be set before simulating"
        );
        self.namespace = namespace;
        self
    }

    /// Keeps raw outputs only for the first `limit` replications; moments
    /// still cover every replication. Bounds memory on long runs.
    pub fn with_retention(mut self, limit: usize) -> Self {
        self.retain = Some(limit);
        self
    }

    /// Simulates columns `M..M+extra` and appends them. Existing columns are
    /// untouched. Returns the number of model evaluations.
    pub fn extend<M: SimulationModel + ?Sized>(&mut self, model: &M, extra: usize) -> Result<u64> {
        if model.dimension() != self.points.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.points.dim(),
                found: model.dimension(),
            });
        }
        let mut omega = vec![0.0; model.uniforms_per_replication()];
        let keep_until = self.retain.unwrap_or(usize::MAX);
        let stored_extra = keep_until.saturating_sub(self.replications).min(extra);
        for row in &mut self.rows {
            row.reserve(stored_extra);
        }
        for m in self.replications..self.replications + extra {
            fill_uniforms(
                &mut StreamKey::new(self.seed, self.level, m).rng_in(self.namespace),
                &mut omega,
            );
            for (i, theta) in self.points.iter().enumerate() {
                let y = model
                    .evaluate(theta, &omega)
                    .map_err(|e| Error::ModelFailure {
                        level: self.level,
                        point: i,
                        replication: m,
                        message: e.0,
                    })?;
                if !y.is_finite() {
                    return Err(Error::ModelFailure {
                        level: self.level,
                        point: i,
                        replication: m,
                        message: format!("non-finite output {y}"),
                    });
                }
                if m < keep_until {
                    self.rows[i].push(y);
                }
                self.moments[i].push(y);
            }
        }
        self.replications += extra;
        Ok((extra * self.points.len()) as u64)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn points(&self) -> Points<'_> {
        self.points.view()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn replications(&self) -> usize {
        self.replications
    }

    /// Whether every replication's raw output is still held.
    pub fn is_complete(&self) -> bool {
        self.rows
            .first()
            .is_none_or(|r| r.len() == self.replications)
    }

    /// Raw outputs at design point `i` (a prefix if retention is capped).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Sample variance `V(theta_i, M)` at every design point.
    pub fn sample_variances(&self) -> Result<Vec<f64>> {
        self.moments.iter().map(RunningMoments::variance).collect()
    }
}

/// Builds the level-`level` output table on `points` with `replications`
/// columns and charges `N * M` evaluations to `cost`.
pub fn simulate_level<M: SimulationModel + ?Sized>(
    model: &M,
    points: Points<'_>,
    replications: usize,
    seed: u64,
    level: usize,
    cost: &mut CostCounter,
) -> Result<OutputTable> {
    if replications < 2 {
        return Err(Error::TooFewReplications(replications));
    }
    let mut table = OutputTable::new(points, level, seed);
    cost.add(table.extend(model, replications)?);
    Ok(table)
}

/// `V_l(., M_l, w_l)`, `V_{l-1}(., M_l, w_l)` and their difference on `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEstimate {
    pub level: usize,
    pub values: Vec<f64>,
    pub aux_values: Option<Vec<f64>>,
    pub refinement: Vec<f64>,
    pub replications: usize,
    pub design_size: usize,
}

/// Paired estimators sharing one table: the auxiliary estimator reads the
/// first `weights_aux.cols()` rows, i.e. `T_{l-1}`.
pub fn level_estimator(
    table: &OutputTable,
    weights: &WeightMatrix,
    weights_aux: Option<&WeightMatrix>,
) -> Result<LevelEstimate> {
    let variances = table.sample_variances()?;
    estimate_from_variances(
        table.level(),
        table.replications(),
        &variances,
        weights,
        weights_aux,
    )
}

pub(crate) fn estimate_from_variances(
    level: usize,
    replications: usize,
    variances: &[f64],
    weights: &WeightMatrix,
    weights_aux: Option<&WeightMatrix>,
) -> Result<LevelEstimate> {
    let n = variances.len();
    if weights.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.cols(),
        });
    }
    let mut values = vec![0.0; weights.rows()];
    weights.predict_into(variances, &mut values);
    let (aux_values, refinement) = match weights_aux {
        None => (None, values.clone()),
        Some(aux) => {
            if aux.cols() > n {
                return Err(Error::PrefixViolation {
                    aux: aux.cols(),
                    level: n,
                });
            }
            if aux.rows() != weights.rows() {
                return Err(Error::DimensionMismatch {
                    expected: weights.rows(),
                    found: aux.rows(),
                });
            }
            let mut aux_values = vec![0.0; aux.rows()];
            aux.predict_into(&variances[..aux.cols()], &mut aux_values);
            let refinement = values.iter().zip(&aux_values).map(|(v, a)| v - a).collect();
            (Some(aux_values), refinement)
        }
    };
    Ok(LevelEstimate {
        level,
        values,
        aux_values,
        refinement,
        replications,
        design_size: n,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceMeta {
    /// Finest level `L`.
    pub levels: usize,
    pub replications: Vec<usize>,
    pub design_sizes: Vec<usize>,
    pub seed: u64,
    pub total_cost: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSurface {
    pub values: Vec<f64>,
    pub meta: SurfaceMeta,
}

fn check_contiguous(estimates: &[LevelEstimate]) -> Result<()> {
    if estimates.is_empty() {
        return Err(Error::MissingLevel(0));
    }
    let width = estimates[0].values.len();
    for (l, e) in estimates.iter().enumerate() {
        if e.level != l {
            return Err(Error::MissingLevel(l));
        }
        if e.refinement.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: e.refinement.len(),
            });
        }
        if l > 0 && e.aux_values.is_none() {
            return Err(Error::invalid(
                "estimates",
                format!("level {l} lacks its auxiliary estimator"),
            ));
        }
    }
    Ok(())
}

/// `V(theta) = sum_l Delta V_l(theta)`.
pub fn assemble_mlmc(estimates: &[LevelEstimate], seed: u64) -> Result<VarianceSurface> {
    check_contiguous(estimates)?;
    let mut values = vec![0.0; estimates[0].refinement.len()];
    for e in estimates {
        for (v, r) in values.iter_mut().zip(&e.refinement) {
            *v += r;
        }
    }
    let meta = SurfaceMeta {
        levels: estimates.len() - 1,
        replications: estimates.iter().map(|e| e.replications).collect(),
        design_sizes: estimates.iter().map(|e| e.design_size).collect(),
        seed,
        total_cost: estimates
            .iter()
            .map(|e| (e.replications * e.design_size) as u64)
            .sum(),
    };
    Ok(VarianceSurface { values, meta })
}

/// Control-variate arrangement of the same surface:
/// `V_L(M_L) + sum_{l<L} (V_l(M_l) - V_l(M_{l+1}))`.
pub fn control_variate_form(estimates: &[LevelEstimate]) -> Result<Vec<f64>> {
    check_contiguous(estimates)?;
    let last = estimates.len() - 1;
    let mut out = estimates[last].values.clone();
    for l in 0..last {
        let aux = estimates[l + 1].aux_values.as_ref().expect("checked above");
        for ((o, v), a) in out.iter_mut().zip(&estimates[l].values).zip(aux) {
            *o += v - a;
        }
    }
    Ok(out)
}

/// LOOCV-selected Gaussian-kernel bandwidth for `variances` on `points`,
/// using the default grid.
pub fn select_bandwidth(
    points: Points<'_>,
    variances: &[f64],
    domain: &InputDomain,
) -> Result<f64> {
    let grid = default_bandwidth_grid(domain.dim(), points.len());
    Ok(loocv_bandwidth(points, variances, &grid, domain)?.chosen)
}

/// Single-level smoother on `design` with `replications` columns keyed as
/// level 0. Returns the surface and the chosen bandwidth.
pub fn smc_estimator<M: SimulationModel + ?Sized>(
    model: &M,
    design: Points<'_>,
    domain: &InputDomain,
    prediction: &PredictionSet,
    replications: usize,
    seed: u64,
) -> Result<(VarianceSurface, f64)> {
    let mut cost = CostCounter::new();
    let table = simulate_level(model, design, replications, seed, 0, &mut cost)?;
    let variances = table.sample_variances()?;
    let h = select_bandwidth(design, &variances, domain)?;
    let w = gaussian_kernel_weights(prediction.points(), design, h, domain)?;
    let est = estimate_from_variances(0, replications, &variances, &w, None)?;
    Ok((assemble_mlmc(&[est], seed)?, h))
}

/// One level of a fitted MLMC metamodel: its design, sample variances and
/// bandwidth, enough to evaluate the refinement anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLevel {
    pub design: PointSet,
    pub variances: Vec<f64>,
    pub bandwidth: f64,
    pub replications: usize,
}

/// Final MLMC estimator as a function of `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcMetamodel {
    pub domain: InputDomain,
    pub levels: Vec<FittedLevel>,
}

impl MlmcMetamodel {
    /// `sum_l [w^l(theta) . S_l - w^{l-1}(theta) . S_l[..N_{l-1}]]` at every
    /// point.
    pub fn evaluate(&self, points: Points<'_>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; points.len()];
        let mut buf = vec![0.0; points.len()];
        for (l, level) in self.levels.iter().enumerate() {
            let w = gaussian_kernel_weights(
                points,
                level.design.view(),
                level.bandwidth,
                &self.domain,
            )?;
            w.predict_into(&level.variances, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
            if l > 0 {
                let prev = &self.levels[l - 1];
                let n_prev = prev.design.len();
                let w = gaussian_kernel_weights(
                    points,
                    prev.design.view(),
                    prev.bandwidth,
                    &self.domain,
                )?;
                w.predict_into(&level.variances[..n_prev], &mut buf);
                out.iter_mut().zip(&buf).for_each(|(o, b)| *o -= b);
            }
        }
        Ok(out)
    }
}
