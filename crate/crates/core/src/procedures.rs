//! Adaptive MLMC drivers: target accuracy `eps^2` and fixed budget `T`.

use alloc::vec::Vec;

use crate::bootstrap::{
    bootstrap_refinement_variance, refinement_squared_norm, BootstrapConfig, DEFAULT_REPLICATES,
};
use crate::design::{DesignGrowth, LevelDesign, PredictionSet};
use crate::error::{Error, Result};
use crate::estimators::{
    assemble_mlmc, estimate_from_variances, select_bandwidth, CostCounter, FittedLevel,
    LevelEstimate, MlmcMetamodel, OutputTable, VarianceSurface,
};
use crate::metamodel::{gaussian_kernel_weights, WeightMatrix};
use crate::model::{InputDomain, SimulationModel};

/// Raw outputs kept per level for bootstrap refreshes (8 bytes each).
pub const MAX_RETAINED_OUTPUTS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcConfig {
    /// Bias / variance decay rate.
    pub alpha: f64,
    /// Design growth rate.
    pub gamma: f64,
    /// Growth base `s > 1`.
    pub s: f64,
    /// Initial replications per new level.
    pub m0: usize,
    /// `N_0`; `None` selects `round(s^gamma)`.
    pub n_base: Option<usize>,
    pub bootstrap_replicates: usize,
    /// Resample whole replications (one index vector shared by all design
    /// points), which keeps the common-random-number coupling between points.
    /// `false` resamples every design point independently.
    pub shared_bootstrap_indices: bool,
    pub max_level: usize,
    pub max_replications: usize,
    /// Re-estimate `V_l` once `M_l` reaches this multiple of the replication
    /// count it was last estimated with. `None` keeps the first estimate.
    pub refresh_factor: Option<f64>,
    /// No refreshes above this many replications, nor once a level holds
    /// more than [`MAX_RETAINED_OUTPUTS`] raw outputs.
    pub refresh_limit: usize,
    pub seed: u64,
}

impl MlmcConfig {
    pub fn new(alpha: f64, gamma: f64, s: f64, m0: usize, seed: u64) -> Self {
        MlmcConfig {
            alpha,
            gamma,
            s,
            m0,
            n_base: None,
            bootstrap_replicates: DEFAULT_REPLICATES,
            shared_bootstrap_indices: true,
            max_level: 12,
            max_replications: 10_000_000,
            refresh_factor: Some(2.0),
            refresh_limit: 32_768,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if self.m0 < 2 {
            return Err(Error::invalid("m0", "need at least 2 initial replications"));
        }
        if self.bootstrap_replicates < 2 {
            return Err(Error::invalid("B", "need at least 2 bootstrap replicates"));
        }
        if self.max_replications < self.m0 {
            return Err(Error::invalid("max_replications", "below m0"));
        }
        if let Some(f) = self.refresh_factor {
            if !(f > 1.0) {
                return Err(Error::invalid("refresh_factor", "must exceed 1"));
            }
        }
        self.growth().map(|_| ())
    }

    pub fn growth(&self) -> Result<DesignGrowth> {
        DesignGrowth::new(self.s, self.gamma, self.n_base)
    }

    fn decay(&self) -> f64 {
        libm::pow(self.s, 2.0 * self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    LevelAdded,
    Replications,
    VarianceRefresh,
    ReplicationCap,
    LevelCap,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::LevelAdded => "add_level",
            Action::Replications => "add_replications",
            Action::VarianceRefresh => "refresh_variance",
            Action::ReplicationCap => "replication_cap",
            Action::LevelCap => "level_cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub action: Action,
    pub level: usize,
    pub delta_replications: usize,
    pub d2: f64,
    pub v: f64,
    /// Cumulative model evaluations after the action.
    pub cost: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    BiasCriterionMet,
    BudgetExhausted,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::BiasCriterionMet => "bias-criterion-met",
            Termination::BudgetExhausted => "budget-exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSummary {
    pub design_size: usize,
    pub replications: usize,
    pub v: f64,
    pub d2: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub surface: VarianceSurface,
    pub estimates: Vec<LevelEstimate>,
    pub levels: Vec<LevelSummary>,
    pub trace: Vec<TraceEntry>,
    pub termination: Termination,
    pub metamodel: MlmcMetamodel,
}

impl RunReport {
    pub fn cost(&self) -> u64 {
        self.surface.meta.total_cost
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }
}

/// `M*_l = ceil(2 eps^{-2} sqrt(V_l / N_l) sum_k sqrt(V_k N_k) + 1)`, at least 2.
pub fn optimal_replications(eps2: f64, v: &[f64], n: &[usize]) -> Result<Vec<usize>> {
    if !(eps2 > 0.0 && eps2.is_finite()) {
        return Err(Error::invalid("eps2", "must be positive"));
    }
    if v.len() != n.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            found: n.len(),
        });
    }
    if v.iter().any(|x| !(*x >= 0.0)) || n.contains(&0) {
        return Err(Error::invalid("V", "need V >= 0 and N >= 1"));
    }
    Ok(v.iter()
        .zip(n)
        .map(|(vl, nl)| {
            // one root per term keeps exactly representable cases exact
            let sum: f64 = v
                .iter()
                .zip(n)
                .map(|(vk, nk)| libm::sqrt(vl * vk * *nk as f64 / *nl as f64))
                .sum();
            let m = libm::ceil(2.0 / eps2 * sum + 1.0);
            if m >= usize::MAX as f64 {
                usize::MAX
            } else {
                (m as usize).max(2)
            }
        })
        .collect())
}

/// `max{d_L^2, s^{-2 alpha} d_{L-1}^2} < (s^{2 alpha} - 1) eps^2 / 2`.
pub fn stopping_criterion_met(d2_last: f64, d2_prev: f64, s: f64, alpha: f64, eps2: f64) -> bool {
    let decay = libm::pow(s, 2.0 * alpha);
    d2_last.max(d2_prev / decay) < (decay - 1.0) * eps2 / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats {
    pub v: f64,
    pub replications: usize,
    pub design_size: usize,
}

/// Affordable level with the largest variance reduction per evaluation,
/// `V / ((M-1)(M-1+A) N)`; lowest index on ties.
pub fn select_level_for_replications(
    stats: &[LevelStats],
    a: usize,
    spent: u64,
    budget: u64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (l, st) in stats.iter().enumerate() {
        if spent + (st.design_size * a) as u64 > budget {
            continue;
        }
        let m1 = (st.replications - 1) as f64;
        let score = st.v / (m1 * (m1 + a as f64) * st.design_size as f64);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((l, score));
        }
    }
    best.map(|(l, _)| l)
}

struct Level {
    table: OutputTable,
    bandwidth: f64,
    weights: WeightMatrix,
    aux: Option<WeightMatrix>,
    v: f64,
    v_replications: usize,
    estimate: LevelEstimate,
    d2: f64,
}

struct Driver<'a, M: ?Sized> {
    model: &'a M,
    prediction: &'a PredictionSet,
    cfg: &'a MlmcConfig,
    design: LevelDesign,
    levels: Vec<Level>,
    cost: CostCounter,
    trace: Vec<TraceEntry>,
    iteration: usize,
}

impl<'a, M: SimulationModel + ?Sized> Driver<'a, M> {
    fn new(
        model: &'a M,
        domain: &InputDomain,
        prediction: &'a PredictionSet,
        cfg: &'a MlmcConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if model.dimension() != domain.dim() || prediction.points().dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: model.dimension(),
            });
        }
        Ok(Driver {
            model,
            prediction,
            cfg,
            design: LevelDesign::seeded(domain, 0, cfg.growth()?, cfg.seed)?,
            levels: Vec::new(),
            cost: CostCounter::new(),
            trace: Vec::new(),
            iteration: 0,
        })
    }

    fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    fn record(&mut self, action: Action, level: usize, delta: usize) {
        let (d2, v) = self.levels.get(level).map_or((0.0, 0.0), |l| (l.d2, l.v));
        self.trace.push(TraceEntry {
            iteration: self.iteration,
            action,
            level,
            delta_replications: delta,
            d2,
            v,
            cost: self.cost.total(),
        });
    }

    fn bootstrap(&self, level: &Level) -> Result<f64> {
        let cfg = BootstrapConfig {
            replicates: self.cfg.bootstrap_replicates,
            seed: self.cfg.seed,
            shared_indices: self.cfg.shared_bootstrap_indices,
        };
        Ok(
            bootstrap_refinement_variance(&level.table, &level.weights, level.aux.as_ref(), &cfg)?
                .integrated,
        )
    }

    fn add_level(&mut self) -> Result<()> {
        let l = self.levels.len();
        if l > 0 {
            self.design.push_level()?;
        }
        let domain = self.design.domain().clone();
        let points = self.design.points(l);
        // raw outputs are only needed while the bootstrap may still run
        let retain = match self.cfg.refresh_factor {
            Some(_) => self
                .cfg
                .refresh_limit
                .min(MAX_RETAINED_OUTPUTS / points.len())
                .max(self.cfg.m0),
            None => self.cfg.m0,
        };
        let mut table = OutputTable::new(points, l, self.cfg.seed).with_retention(retain);
        self.cost.add(table.extend(self.model, self.cfg.m0)?);
        let variances = table.sample_variances()?;
        let bandwidth = select_bandwidth(points, &variances, &domain)?;
        let weights =
            gaussian_kernel_weights(self.prediction.points(), points, bandwidth, &domain)?
                .with_level(l);
        let aux = match self.levels.last() {
            Some(prev) => Some(
                gaussian_kernel_weights(
                    self.prediction.points(),
                    self.design.points(l - 1),
                    prev.bandwidth,
                    &domain,
                )?
                .with_level(l - 1),
            ),
            None => None,
        };
        let estimate =
            estimate_from_variances(l, table.replications(), &variances, &weights, aux.as_ref())?;
        let d2 = refinement_squared_norm(&estimate);
        let mut level = Level {
            v_replications: table.replications(),
            table,
            bandwidth,
            weights,
            aux,
            v: 0.0,
            estimate,
            d2,
        };
        level.v = self.bootstrap(&level)?;
        self.levels.push(level);
        self.record(Action::LevelAdded, l, self.cfg.m0);
        Ok(())
    }

    fn add_replications(&mut self, l: usize, delta: usize) -> Result<()> {
        let level = &mut self.levels[l];
        self.cost.add(level.table.extend(self.model, delta)?);
        let variances = level.table.sample_variances()?;
        level.estimate = estimate_from_variances(
            l,
            level.table.replications(),
            &variances,
            &level.weights,
            level.aux.as_ref(),
        )?;
        level.d2 = refinement_squared_norm(&level.estimate);
        self.record(Action::Replications, l, delta);
        Ok(())
    }

    fn refresh_variance(&mut self, l: usize) -> Result<()> {
        let Some(factor) = self.cfg.refresh_factor else {
            return Ok(());
        };
        let level = &self.levels[l];
        let m = level.table.replications();
        if m > self.cfg.refresh_limit
            || !level.table.is_complete()
            || (m as f64) < factor * level.v_replications as f64
        {
            return Ok(());
        }
        let v = self.bootstrap(level)?;
        let level = &mut self.levels[l];
        level.v = v;
        level.v_replications = m;
        self.record(Action::VarianceRefresh, l, 0);
        Ok(())
    }

    /// Tops every level up to its `M*_l` (capped).
    fn allocate(&mut self, eps2: f64) -> Result<()> {
        for l in 0..self.levels.len() {
            self.refresh_variance(l)?;
        }
        let v: Vec<f64> = self.levels.iter().map(|l| l.v).collect();
        let n: Vec<usize> = self.levels.iter().map(|l| l.table.len()).collect();
        let targets = optimal_replications(eps2, &v, &n)?;
        for (l, target) in targets.into_iter().enumerate() {
            let target = if target > self.cfg.max_replications {
                self.record(Action::ReplicationCap, l, 0);
                self.cfg.max_replications
            } else {
                target
            };
            let m = self.levels[l].table.replications();
            if target > m {
                self.add_replications(l, target - m)?;
            }
        }
        Ok(())
    }

    fn stats(&self) -> Vec<LevelStats> {
        self.levels
            .iter()
            .map(|l| LevelStats {
                v: l.v,
                replications: l.table.replications(),
                design_size: l.table.len(),
            })
            .collect()
    }

    fn d2_pair(&self) -> (f64, f64) {
        let last = self.finest();
        let prev = if last == 0 {
            0.0
        } else {
            self.levels[last - 1].d2
        };
        (self.levels[last].d2, prev)
    }

    fn finish(self, termination: Termination) -> Result<RunReport> {
        let estimates: Vec<LevelEstimate> =
            self.levels.iter().map(|l| l.estimate.clone()).collect();
        let surface = assemble_mlmc(&estimates, self.cfg.seed)?;
        debug_assert_eq!(surface.meta.total_cost, self.cost.total());
        let levels = self
            .levels
            .iter()
            .map(|l| LevelSummary {
                design_size: l.table.len(),
                replications: l.table.replications(),
                v: l.v,
                d2: l.d2,
                bandwidth: l.bandwidth,
            })
            .collect();
        let fitted = self
            .levels
            .iter()
            .map(|l| {
                Ok(FittedLevel {
                    design: l.table.points().to_owned(),
                    variances: l.table.sample_variances()?,
                    bandwidth: l.bandwidth,
                    replications: l.table.replications(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunReport {
            surface,
            estimates,
            levels,
            trace: self.trace,
            termination,
            metamodel: MlmcMetamodel {
                domain: self.design.domain().clone(),
                levels: fitted,
            },
        })
    }
}

/// Adds levels until `L >= 2` and the bias criterion holds, allocating
/// replications optimally for `eps2` after every new level.
pub fn run_target_accuracy<M: SimulationModel + ?Sized>(
    model: &M,
    domain: &InputDomain,
    prediction: &PredictionSet,
    cfg: &MlmcConfig,
    eps2: f64,
) -> Result<RunReport> {
    if !(eps2 > 0.0 && eps2.is_finite()) {
        return Err(Error::invalid("eps2", "must be positive"));
    }
    let mut driver = Driver::new(model, domain, prediction, cfg)?;
    loop {
        driver.iteration += 1;
        driver.add_level()?;
        driver.allocate(eps2)?;
        let last = driver.finest();
        let (d_last, d_prev) = driver.d2_pair();
        if last >= 2 && stopping_criterion_met(d_last, d_prev, cfg.s, cfg.alpha, eps2) {
            break;
        }
        if last >= cfg.max_level {
            driver.record(Action::LevelCap, last, 0);
            return Err(Error::LevelCapReached {
                max_level: cfg.max_level,
                last_d2: d_last,
            });
        }
    }
    driver.iteration += 1;
    driver.allocate(eps2)?;
    driver.finish(Termination::BiasCriterionMet)
}

/// Spends at most `budget` model evaluations, adding a level when the
/// estimated squared bias dominates the variance and `a` replications at the
/// most efficient level otherwise.
pub fn run_fixed_budget<M: SimulationModel + ?Sized>(
    model: &M,
    domain: &InputDomain,
    prediction: &PredictionSet,
    cfg: &MlmcConfig,
    budget: u64,
    a: usize,
) -> Result<RunReport> {
    if a == 0 {
        return Err(Error::invalid(
            "A",
            "need at least one replication per step",
        ));
    }
    let growth = cfg.growth()?;
    let required = (growth.size(0) * cfg.m0) as u64;
    if budget < required {
        return Err(Error::BudgetTooSmall { budget, required });
    }
    let mut driver = Driver::new(model, domain, prediction, cfg)?;
    driver.iteration += 1;
    driver.add_level()?;
    let n0 = growth.size(0) as u64;
    let decay = cfg.decay();
    let mut cap_logged = false;
    while driver.cost.total() + n0 * a as u64 <= budget {
        driver.iteration += 1;
        let t = driver.cost.total();
        let next = driver.finest() + 1;
        let affordable = t + (growth.size(next) * cfg.m0) as u64 <= budget;
        if affordable && next > cfg.max_level {
            if !cap_logged {
                driver.record(Action::LevelCap, next - 1, 0);
                cap_logged = true;
            }
        } else if affordable {
            let (d_last, d_prev) = driver.d2_pair();
            let bias = d_last.max(d_prev / decay) / (decay - 1.0);
            let variance: f64 = driver
                .levels
                .iter()
                .map(|l| l.v / (l.table.replications() - 1) as f64)
                .sum();
            if bias >= variance {
                driver.add_level()?;
                continue;
            }
        }
        let Some(l) = select_level_for_replications(&driver.stats(), a, t, budget) else {
            break;
        };
        let a = a.min(
            cfg.max_replications
                .saturating_sub(driver.levels[l].table.replications()),
        );
        if a == 0 {
            driver.record(Action::ReplicationCap, l, 0);
            break;
        }
        driver.add_replications(l, a)?;
        driver.refresh_variance(l)?;
    }
    driver.finish(Termination::BudgetExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::build_prediction_set;
    use crate::model::ModelError;
    use crate::normal::ppnd16;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn optimal_replications_examples() {
        assert_eq!(optimal_replications(0.01, &[2.0], &[4]).unwrap(), vec![401]);
        assert_eq!(
            optimal_replications(0.1, &[0.0, 0.0, 0.0], &[2, 4, 8]).unwrap(),
            vec![2, 2, 2]
        );
        assert!(optimal_replications(0.0, &[1.0], &[1]).is_err());
        assert!(optimal_replications(-1.0, &[1.0], &[1]).is_err());
    }

    #[test]
    fn optimal_replications_are_homogeneous() {
        let v = [1.3, 0.4, 0.05];
        let n = [2, 4, 8];
        let eps2 = 1e-3;
        let raw = |v: &[f64]| {
            let total: f64 = v
                .iter()
                .zip(&n)
                .map(|(v, n)| libm::sqrt(v * *n as f64))
                .sum();
            v.iter()
                .zip(&n)
                .map(|(v, n)| 2.0 / eps2 * libm::sqrt(v / *n as f64) * total)
                .collect::<Vec<f64>>()
        };
        let scaled: Vec<f64> = v.iter().map(|x| 4.0 * x).collect();
        for (a, b) in raw(&v).iter().zip(raw(&scaled)) {
            assert!((b - 4.0 * a).abs() < 1e-9 * b);
        }
        let m1 = optimal_replications(eps2, &v, &n).unwrap();
        let m4 = optimal_replications(eps2, &scaled, &n).unwrap();
        for (a, b) in m1.iter().zip(&m4) {
            assert!(b >= a);
        }
    }

    #[test]
    fn stopping_criterion_examples() {
        assert!(stopping_criterion_met(1e-3, 4e-3, 2.0, 1.5, 1e-3));
        assert!(stopping_criterion_met(0.0, 0.0, 2.0, 1.5, 1e-9));
        let threshold = 7.0 * 1e-3 / 2.0;
        assert!(!stopping_criterion_met(threshold, 0.0, 2.0, 1.5, 1e-3));
        assert!(!stopping_criterion_met(
            0.0,
            8.0 * threshold,
            2.0,
            1.5,
            1e-3
        ));
    }

    #[test]
    fn level_selection_examples() {
        let st = |v, m, n| LevelStats {
            v,
            replications: m,
            design_size: n,
        };
        let two = [st(1.0, 10, 2), st(0.25, 10, 4)];
        assert_eq!(select_level_for_replications(&two, 2, 0, 100), Some(0));
        let same = [st(1.0, 10, 2), st(1.0, 10, 2)];
        assert_eq!(select_level_for_replications(&same, 2, 0, 100), Some(0));
        assert_eq!(select_level_for_replications(&two, 2, 99, 100), None);
        // only level 0 affordable even though level 1 would score higher
        let skew = [st(0.0, 10, 2), st(5.0, 10, 4)];
        assert_eq!(select_level_for_replications(&skew, 2, 95, 100), Some(0));
    }

    proptest! {
        #[test]
        fn allocation_meets_variance_target(
            v in proptest::collection::vec(1e-4f64..10.0, 1..6),
            n_exp in proptest::collection::vec(0u32..8, 6),
            eps2 in 1e-4f64..1e-1,
        ) {
            let n: Vec<usize> = v.iter().enumerate().map(|(i, _)| 1usize << n_exp[i]).collect();
            let m = optimal_replications(eps2, &v, &n).unwrap();
            let var: f64 = v.iter().zip(&m).map(|(v, m)| v / (*m as f64 - 1.0)).sum();
            prop_assert!(var < eps2 / 2.0);
            // continuous relaxation: (M-1) proportional to sqrt(V/N)
            let total: f64 = v.iter().zip(&n).map(|(v, n)| libm::sqrt(v * *n as f64)).sum();
            let ratios: Vec<f64> = v.iter().zip(&n)
                .map(|(v, n)| 2.0 / eps2 * libm::sqrt(v / *n as f64) * total / libm::sqrt(v / *n as f64))
                .collect();
            for r in &ratios {
                prop_assert!((r - ratios[0]).abs() <= 1e-9 * ratios[0]);
            }
            let relaxed: f64 = v.iter().zip(&n)
                .map(|(v, n)| v / (2.0 / eps2 * libm::sqrt(v / *n as f64) * total))
                .sum();
            prop_assert!((relaxed - eps2 / 2.0).abs() <= 1e-9 * eps2);
        }
    }

    struct Deterministic;

    impl SimulationModel for Deterministic {
        fn dimension(&self) -> usize {
            1
        }
        fn uniforms_per_replication(&self) -> usize {
            1
        }
        fn evaluate(&self, theta: &[f64], _: &[f64]) -> core::result::Result<f64, ModelError> {
            Ok(theta[0] * theta[0])
        }
    }

    /// `Y = (1 + theta) Z`.
    struct Linear;

    impl SimulationModel for Linear {
        fn dimension(&self) -> usize {
            1
        }
        fn uniforms_per_replication(&self) -> usize {
            1
        }
        fn evaluate(&self, theta: &[f64], u: &[f64]) -> core::result::Result<f64, ModelError> {
            Ok((1.0 + theta[0]) * ppnd16(u[0]))
        }
    }

    fn setup() -> (InputDomain, PredictionSet) {
        let domain = InputDomain::unit(1).unwrap();
        let pred = build_prediction_set(&domain, 32, 1).unwrap();
        (domain, pred)
    }

    fn small_cfg(seed: u64) -> MlmcConfig {
        MlmcConfig {
            bootstrap_replicates: 40,
            ..MlmcConfig::new(1.5, 1.0, 2.0, 4, seed)
        }
    }

    #[test]
    fn deterministic_model_stops_at_level_two() {
        let (domain, pred) = setup();
        let r = run_target_accuracy(&Deterministic, &domain, &pred, &small_cfg(3), 1e-3).unwrap();
        assert_eq!(r.finest_level(), 2);
        assert_eq!(r.termination, Termination::BiasCriterionMet);
        assert!(r
            .levels
            .iter()
            .all(|l| l.d2 == 0.0 && l.replications == 4 && l.v == 0.0));
        assert!(r.surface.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn target_accuracy_cost_is_monotone_in_eps() {
        let (domain, pred) = setup();
        let cfg = small_cfg(5);
        let loose = run_target_accuracy(&Linear, &domain, &pred, &cfg, 1e-1).unwrap();
        let tight = run_target_accuracy(&Linear, &domain, &pred, &cfg, 1e-2).unwrap();
        assert!(tight.cost() >= loose.cost());
        let n_m: u64 = tight
            .levels
            .iter()
            .map(|l| (l.design_size * l.replications) as u64)
            .sum();
        assert_eq!(tight.cost(), n_m);
        assert_eq!(tight.trace.last().unwrap().cost, tight.cost());
    }

    #[test]
    fn level_cap_is_reported() {
        let (domain, pred) = setup();
        let cfg = MlmcConfig {
            max_level: 2,
            ..small_cfg(1)
        };
        match run_target_accuracy(&Linear, &domain, &pred, &cfg, 1e-9) {
            Err(Error::LevelCapReached { max_level: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_replays_identically() {
        let (domain, pred) = setup();
        let cfg = small_cfg(17);
        let a = run_target_accuracy(&Linear, &domain, &pred, &cfg, 5e-2).unwrap();
        let b = run_target_accuracy(&Linear, &domain, &pred, &cfg, 5e-2).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.surface, b.surface);
        let c = run_fixed_budget(&Linear, &domain, &pred, &cfg, 2000, 2).unwrap();
        let d = run_fixed_budget(&Linear, &domain, &pred, &cfg, 2000, 2).unwrap();
        assert_eq!(c.trace, d.trace);
    }

    #[test]
    fn budget_boundary_builds_level_zero_only() {
        let (domain, pred) = setup();
        let cfg = small_cfg(2);
        let r = run_fixed_budget(&Linear, &domain, &pred, &cfg, 8, 2).unwrap();
        assert_eq!(r.levels.len(), 1);
        assert_eq!(r.cost(), 8);
        assert_eq!(r.trace.len(), 1);
        assert!(matches!(
            run_fixed_budget(&Linear, &domain, &pred, &cfg, 7, 2),
            Err(Error::BudgetTooSmall {
                budget: 7,
                required: 8
            })
        ));
    }

    #[test]
    fn deterministic_model_adds_levels_when_affordable() {
        let (domain, pred) = setup();
        let cfg = small_cfg(2);
        let r = run_fixed_budget(&Deterministic, &domain, &pred, &cfg, 200, 2).unwrap();
        // level sizes 2, 4, 8, 16, 32 cost 8 + 16 + 32 + 64 = 120; the next (128) is not affordable
        assert_eq!(r.levels.len(), 4);
        let added = r
            .trace
            .iter()
            .filter(|e| e.action == Action::LevelAdded)
            .count();
        assert_eq!(added, 4);
        assert!(r.cost() <= 200 && 200 - r.cost() < 4);
    }

    #[test]
    fn budget_is_never_exceeded() {
        let (domain, pred) = setup();
        for seed in 0..3 {
            let r = run_fixed_budget(&Linear, &domain, &pred, &small_cfg(seed), 3000, 2).unwrap();
            assert!(r.trace.iter().all(|e| e.cost <= 3000));
            assert!(3000 - r.cost() < 2 * 2);
            assert_eq!(r.termination, Termination::BudgetExhausted);
        }
    }

    #[test]
    fn fitted_metamodel_reproduces_surface() {
        let (domain, pred) = setup();
        let r = run_fixed_budget(&Linear, &domain, &pred, &small_cfg(4), 1500, 2).unwrap();
        let again = r.metamodel.evaluate(pred.points()).unwrap();
        for (a, b) in r.surface.values.iter().zip(&again) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
