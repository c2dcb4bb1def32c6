//! Macro-replication studies. Replications run on the rayon pool; results
//! are returned in replication order, so output never depends on the number
//! of workers.

use mlmc_varfn_core::analysis::{
    empirical_mise, estimate_sobol_index, fit_cost_slope, smc_reference_cost, truth_on,
    MiseEstimate, SlopeFit, SmcReference, SobolConfig, SobolEstimate, DEFAULT_PILOT_REPLICATIONS,
};
use mlmc_varfn_core::benchmarks::{
    ishigami_conditional, ishigami_full, BenchmarkModel, ISHIGAMI_SOBOL_INDICES,
};
use mlmc_varfn_core::bootstrap::BootstrapConfig;
use mlmc_varfn_core::design::{build_prediction_set, PredictionSet};
use mlmc_varfn_core::estimators::{smc_estimator, VarianceSurface};
use mlmc_varfn_core::procedures::{run_fixed_budget, run_target_accuracy, MlmcConfig, RunReport};
use mlmc_varfn_core::rng::derive_seed;
use mlmc_varfn_core::{Error, Points, Result};
use rayon::prelude::*;

/// Runs `f(r)` for `r = 0..reps` in parallel; the first error in replication
/// order wins.
pub fn par_reps<T, F>(reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..reps)
        .into_par_iter()
        .map(f)
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Seed of macro-replication `r`.
pub fn rep_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, r as u64)
}

/// One benchmark, one parameter set and a fixed prediction set shared by all
/// macro-replications.
pub struct Study<'a> {
    pub bench: &'a BenchmarkModel,
    pub base: MlmcConfig,
    pub prediction: PredictionSet,
    pub truth: Vec<f64>,
    pub master_seed: u64,
}

impl<'a> Study<'a> {
    /// `base.seed` is ignored; every replication gets a derived seed.
    pub fn new(
        bench: &'a BenchmarkModel,
        base: MlmcConfig,
        pred_points: usize,
        master_seed: u64,
    ) -> Result<Self> {
        base.validate()?;
        let prediction = build_prediction_set(&bench.domain, pred_points, master_seed)?;
        let truth = truth_on(prediction.points(), bench.truth);
        Ok(Study {
            bench,
            base,
            prediction,
            truth,
            master_seed,
        })
    }

    pub fn config(&self, r: usize) -> MlmcConfig {
        MlmcConfig {
            seed: rep_seed(self.master_seed, r),
            ..self.base.clone()
        }
    }

    pub fn target_one(&self, eps2: f64, r: usize) -> Result<RunReport> {
        run_target_accuracy(
            self.bench.model.as_ref(),
            &self.bench.domain,
            &self.prediction,
            &self.config(r),
            eps2,
        )
    }

    pub fn target(&self, eps2: f64, reps: usize) -> Result<Vec<RunReport>> {
        par_reps(reps, |r| self.target_one(eps2, r))
    }

    pub fn budget(&self, budget: u64, a: usize, reps: usize) -> Result<Vec<RunReport>> {
        par_reps(reps, |r| {
            run_fixed_budget(
                self.bench.model.as_ref(),
                &self.bench.domain,
                &self.prediction,
                &self.config(r),
                budget,
                a,
            )
        })
    }

    /// Integrated squared error of one surface against the truth.
    pub fn ise(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.truth)
            .map(|(v, t)| (v - t) * (v - t))
            .sum::<f64>()
            / values.len() as f64
    }

    pub fn mise(&self, reports: &[RunReport]) -> Result<MiseEstimate> {
        let surfaces: Vec<Vec<f64>> = reports.iter().map(|r| r.surface.values.clone()).collect();
        empirical_mise(&surfaces, &self.truth)
    }

    fn bootstrap(&self, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.base.bootstrap_replicates,
            seed,
            shared_indices: self.base.shared_bootstrap_indices,
        }
    }

    /// Single-level reference on the finest design of `report`.
    pub fn smc_reference(&self, report: &RunReport, eps2: f64, seed: u64) -> Result<SmcReference> {
        let design = finest_design(report)?;
        smc_reference_cost(
            self.bench.model.as_ref(),
            design,
            &self.bench.domain,
            &self.prediction,
            eps2,
            seed,
            DEFAULT_PILOT_REPLICATIONS,
            &self.bootstrap(seed),
        )
    }
}

pub fn finest_design(report: &RunReport) -> Result<Points<'_>> {
    report
        .metamodel
        .levels
        .last()
        .map(|l| l.design.view())
        .ok_or(Error::MissingLevel(0))
}

#[derive(Debug, Clone)]
pub struct SweepRep {
    pub mlmc_cost: u64,
    pub mlmc_ise: f64,
    pub finest_level: usize,
    pub smc: SmcReference,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub eps: f64,
    pub eps2: f64,
    pub reps: Vec<SweepRep>,
}

impl SweepPoint {
    pub fn mean_mlmc_cost(&self) -> f64 {
        mean(self.reps.iter().map(|r| r.mlmc_cost as f64))
    }

    /// Mean of `M*_L N_L`; pilot evaluations are reported separately.
    pub fn mean_smc_cost(&self) -> f64 {
        mean(self.reps.iter().map(|r| r.smc.cost as f64))
    }

    pub fn mean_pilot_cost(&self) -> f64 {
        mean(self.reps.iter().map(|r| r.smc.pilot_cost as f64))
    }

    /// SMC over MLMC mean cost; NaN when the MLMC cost is zero.
    pub fn ratio(&self) -> f64 {
        let m = self.mean_mlmc_cost();
        if m > 0.0 {
            self.mean_smc_cost() / m
        } else {
            f64::NAN
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Fits of log10 mean cost on log10 eps^2.
    pub mlmc_fit: SlopeFit,
    pub smc_fit: SlopeFit,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// MLMC target runs and SMC reference costs for every `eps` (not squared).
/// Replication `r` uses the same derived seed at every accuracy level.
pub fn sweep(study: &Study<'_>, eps: &[f64], reps: usize) -> Result<SweepResult> {
    let jobs: Vec<(usize, usize)> = (0..eps.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, r)| {
            let eps2 = eps[i] * eps[i];
            let report = study.target_one(eps2, r)?;
            let smc = study.smc_reference(&report, eps2, rep_seed(study.master_seed, r))?;
            Ok(SweepRep {
                mlmc_cost: report.cost(),
                mlmc_ise: study.ise(&report.surface.values),
                finest_level: report.finest_level(),
                smc,
            })
        })
        .collect::<Vec<Result<SweepRep>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut it = results.into_iter();
    let points: Vec<SweepPoint> = eps
        .iter()
        .map(|&e| SweepPoint {
            eps: e,
            eps2: e * e,
            reps: it.by_ref().take(reps).collect(),
        })
        .collect();
    let mlmc_fit = fit_cost_slope(
        &points
            .iter()
            .map(|p| (p.eps2, p.mean_mlmc_cost()))
            .collect::<Vec<_>>(),
    )?;
    let smc_fit = fit_cost_slope(
        &points
            .iter()
            .map(|p| (p.eps2, p.mean_smc_cost()))
            .collect::<Vec<_>>(),
    )?;
    Ok(SweepResult {
        points,
        mlmc_fit,
        smc_fit,
    })
}

#[derive(Debug, Clone)]
pub struct CompareRep {
    pub mlmc: RunReport,
    pub smc: SmcReference,
    pub smc_surface: VarianceSurface,
}

/// MLMC run plus a full single-level run with the reference replication count.
pub fn compare_smc(study: &Study<'_>, eps2: f64, reps: usize) -> Result<Vec<CompareRep>> {
    par_reps(reps, |r| {
        let mlmc = study.target_one(eps2, r)?;
        let seed = rep_seed(study.master_seed, r);
        let smc = study.smc_reference(&mlmc, eps2, seed)?;
        let (smc_surface, _) = smc_estimator(
            study.bench.model.as_ref(),
            finest_design(&mlmc)?,
            &study.bench.domain,
            &study.prediction,
            smc.replications,
            seed,
        )?;
        Ok(CompareRep {
            mlmc,
            smc,
            smc_surface,
        })
    })
}

/// Settings of the Sobol' study; `mlmc.seed` is ignored.
#[derive(Debug, Clone)]
pub struct SobolStudy {
    pub template: SobolConfig,
    pub pred_points: usize,
    pub master_seed: u64,
}

impl SobolStudy {
    pub fn new(master_seed: u64) -> Self {
        SobolStudy {
            template: SobolConfig::new(0),
            pred_points: 256,
            master_seed,
        }
    }

    /// Estimates of `S_1, S_2, S_3` for replication `r`. Index `i` uses seed
    /// `derive_seed(rep_seed, i)`.
    pub fn run_one(&self, r: usize) -> Result<[SobolEstimate; 3]> {
        let full = ishigami_full();
        let seed = rep_seed(self.master_seed, r);
        let mut out = Vec::with_capacity(3);
        for i in 0..3 {
            let cond = ishigami_conditional(i);
            let s = derive_seed(seed, i as u64);
            let pred = build_prediction_set(&cond.domain, self.pred_points, s)?;
            let mut cfg = self.template.clone();
            cfg.mlmc.seed = s;
            let run = estimate_sobol_index(
                cond.model.as_ref(),
                &cond.domain,
                full.model.as_ref(),
                &pred,
                &cfg,
            )?;
            out.push(run.estimate);
        }
        Ok([out[0], out[1], out[2]])
    }

    pub fn run(&self, reps: usize) -> Result<Vec<[SobolEstimate; 3]>> {
        par_reps(reps, |r| self.run_one(r))
    }
}

/// Per index: mean estimate and mean squared error against the reference.
pub fn sobol_summary(estimates: &[[SobolEstimate; 3]]) -> [(f64, f64); 3] {
    let n = estimates.len() as f64;
    let mut out = [(0.0, 0.0); 3];
    for (i, o) in out.iter_mut().enumerate() {
        let m = estimates.iter().map(|e| e[i].index).sum::<f64>() / n;
        let mse = estimates
            .iter()
            .map(|e| (e[i].index - ISHIGAMI_SOBOL_INDICES[i]).powi(2))
            .sum::<f64>()
            / n;
        *o = (m, mse);
    }
    out
}
