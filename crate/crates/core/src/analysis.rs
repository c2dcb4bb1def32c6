//! Evaluation utilities: MISE against a known truth, cost-slope fits, the SMC
//! reference cost, Sobol' index estimation and a normality diagnostic.

use alloc::vec;
use alloc::vec::Vec;

use crate::bootstrap::{bootstrap_refinement_variance, BootstrapConfig};
use crate::design::{sobol_sequence, PredictionSet};
use crate::error::{Error, Result};
use crate::estimators::{select_bandwidth, OutputTable};
use crate::metamodel::gaussian_kernel_weights;
use crate::model::{InputDomain, PointSet, Points, SimulationModel};
use crate::normal::normal_cdf;
use crate::procedures::{run_fixed_budget, MlmcConfig, RunReport};
use crate::rng::{fill_uniforms, Namespace, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiseEstimate {
    pub value: f64,
    /// Integrated squared bias of the across-rep mean.
    pub bias_part: f64,
    /// Integrated across-rep variance with the `R - 1` divisor, so that
    /// `value = bias_part + variance_part * (R - 1) / R`.
    pub variance_part: f64,
    pub macro_reps: usize,
}

/// MISE of `surfaces` (one vector over `P` per macro-rep) against `truth`
/// evaluated on the same points.
pub fn empirical_mise(surfaces: &[Vec<f64>], truth: &[f64]) -> Result<MiseEstimate> {
    let r = surfaces.len();
    if r < 2 {
        return Err(Error::invalid(
            "surfaces",
            "need at least 2 macro-replications",
        ));
    }
    let p = truth.len();
    if let Some(bad) = surfaces.iter().find(|s| s.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: bad.len(),
        });
    }
    let (mut value, mut bias, mut var) = (0.0, 0.0, 0.0);
    for (k, &t) in truth.iter().enumerate() {
        let mean = surfaces.iter().map(|s| s[k]).sum::<f64>() / r as f64;
        value += surfaces
            .iter()
            .map(|s| (s[k] - t) * (s[k] - t))
            .sum::<f64>()
            / r as f64;
        bias += (mean - t) * (mean - t);
        var += surfaces
            .iter()
            .map(|s| (s[k] - mean) * (s[k] - mean))
            .sum::<f64>()
            / (r - 1) as f64;
    }
    Ok(MiseEstimate {
        value: value / p as f64,
        bias_part: bias / p as f64,
        variance_part: var / p as f64,
        macro_reps: r,
    })
}

/// `truth` evaluated at every point.
pub fn truth_on(points: Points<'_>, truth: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    points.iter().map(truth).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `(log10 x, log10 cost)`, sorted by `x`.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through `(log10 x, log10 cost)`.
pub fn fit_cost_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.iter().any(|(x, c)| !(*x > 0.0 && *c > 0.0)) {
        return Err(Error::invalid(
            "pairs",
            "abscissae and costs must be positive",
        ));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateAbscissa(w[0].0));
    }
    if sorted.len() < 2 {
        return Err(Error::invalid(
            "pairs",
            "need at least 2 distinct abscissae",
        ));
    }
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .map(|(x, c)| (libm::log10(*x), libm::log10(*c)))
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - intercept - slope * p.0;
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
        points,
    })
}

/// `max(2, ceil(2 V / eps^2 + 1))`.
pub fn smc_replications(eps2: f64, v: f64) -> Result<usize> {
    if !(eps2 > 0.0 && eps2.is_finite()) {
        return Err(Error::invalid("eps2", "must be positive"));
    }
    if !(v >= 0.0) {
        return Err(Error::invalid("V", "must be nonnegative"));
    }
    Ok((libm::ceil(2.0 * v / eps2 + 1.0) as usize).max(2))
}

pub const DEFAULT_PILOT_REPLICATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcReference {
    pub replications: usize,
    /// `M* N_L`.
    pub cost: u64,
    /// Evaluations spent on the pilot run (reported separately).
    pub pilot_cost: u64,
    pub v: f64,
}

/// Cost of a single-level estimator on `design` that meets the variance half
/// of an `eps2` MISE target, from a pilot run and a bootstrap estimate of `V`.
#[allow(clippy::too_many_arguments)]
pub fn smc_reference_cost<M: SimulationModel + ?Sized>(
    model: &M,
    design: Points<'_>,
    domain: &InputDomain,
    prediction: &PredictionSet,
    eps2: f64,
    seed: u64,
    pilot: usize,
    bootstrap: &BootstrapConfig,
) -> Result<SmcReference> {
    if pilot < 2 {
        return Err(Error::TooFewReplications(pilot));
    }
    let mut table = OutputTable::new(design, 0, seed).in_namespace(Namespace::Pilot);
    let pilot_cost = table.extend(model, pilot)?;
    let variances = table.sample_variances()?;
    let h = select_bandwidth(design, &variances, domain)?;
    let w = gaussian_kernel_weights(prediction.points(), design, h, domain)?;
    let v = bootstrap_refinement_variance(&table, &w, None, bootstrap)?.integrated;
    let replications = smc_replications(eps2, v)?;
    Ok(SmcReference {
        replications,
        cost: (replications * design.len()) as u64,
        pilot_cost,
        v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolEstimate {
    pub index: f64,
    pub var_total: f64,
    pub mean_conditional_var: f64,
    /// The finite-sample estimate came out negative; it is reported as is.
    pub negative: bool,
}

/// `(Var_M(Y) - mean V(theta_u)) / Var_M(Y)` with the `1/M` divisor.
pub fn sobol_index_from_parts(
    outputs: &[f64],
    conditional_variances: &[f64],
) -> Result<SobolEstimate> {
    if outputs.len() < 2 || conditional_variances.is_empty() {
        return Err(Error::invalid(
            "samples",
            "need outputs and conditional variances",
        ));
    }
    let m = outputs.len() as f64;
    let mean = outputs.iter().sum::<f64>() / m;
    let var_total = outputs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / m;
    if !(var_total > 0.0) {
        return Err(Error::NonPositiveTotalVariance(var_total));
    }
    let mean_conditional_var =
        conditional_variances.iter().sum::<f64>() / conditional_variances.len() as f64;
    let index = (var_total - mean_conditional_var) / var_total;
    Ok(SobolEstimate {
        index,
        var_total,
        mean_conditional_var,
        negative: index < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterSampling {
    /// Randomly shifted Sobol' points.
    ShiftedSobol,
    Iid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolConfig {
    pub mlmc: MlmcConfig,
    /// Model evaluations for the conditional-variance metamodel.
    pub budget: u64,
    pub a: usize,
    /// Number of `theta_u` draws (`N`).
    pub outer_points: usize,
    /// Number of unconditional outputs (`M`).
    pub unconditional_outputs: usize,
    pub sampling: OuterSampling,
}

impl SobolConfig {
    pub fn new(seed: u64) -> Self {
        SobolConfig {
            mlmc: MlmcConfig::new(2.0, 2.0, 2.0, 4, seed),
            budget: 10_000,
            a: 2,
            outer_points: 10_000,
            unconditional_outputs: 10_000,
            sampling: OuterSampling::ShiftedSobol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SobolRun {
    pub estimate: SobolEstimate,
    pub report: RunReport,
}

/// `n` points in `(0, 1)^dim`. Sobol' coordinates that land exactly on 0 are
/// nudged inside so inverse-CDF transforms stay finite.
fn outer_uniforms(
    dim: usize,
    n: usize,
    seed: u64,
    stream: usize,
    sampling: OuterSampling,
) -> Result<PointSet> {
    let key = StreamKey::new(seed, stream, 0);
    let mut rng = key.rng_in(Namespace::OuterSample);
    match sampling {
        OuterSampling::Iid => {
            let mut coords = vec![0.0; dim * n];
            fill_uniforms(&mut rng, &mut coords);
            PointSet::new(dim, coords)
        }
        OuterSampling::ShiftedSobol => {
            let mut shift = vec![0.0; dim];
            fill_uniforms(&mut rng, &mut shift);
            let ps = sobol_sequence(dim, n, &shift)?;
            let tiny = f64::EPSILON / 2.0;
            let coords = ps.coords().iter().map(|&u| u.max(tiny)).collect();
            PointSet::new(dim, coords)
        }
    }
}

/// First-order index of the input conditioned on by `conditional`:
/// fixed-budget MLMC for `V(theta_u)`, then the plug-in estimator on `N`
/// outer draws of `theta_u` and `M` outputs of `unconditional`.
pub fn estimate_sobol_index<C, U>(
    conditional: &C,
    domain: &InputDomain,
    unconditional: &U,
    prediction: &PredictionSet,
    cfg: &SobolConfig,
) -> Result<SobolRun>
where
    C: SimulationModel + ?Sized,
    U: SimulationModel + ?Sized,
{
    let report = run_fixed_budget(
        conditional,
        domain,
        prediction,
        &cfg.mlmc,
        cfg.budget,
        cfg.a,
    )?;
    let seed = cfg.mlmc.seed;

    let unit = outer_uniforms(domain.dim(), cfg.outer_points, seed, 0, cfg.sampling)?;
    let mut coords = vec![0.0; unit.coords().len()];
    for (src, dst) in unit.iter().zip(coords.chunks_exact_mut(domain.dim())) {
        domain.from_unit(src, dst);
    }
    let thetas = PointSet::new(domain.dim(), coords)?;
    let conditional_variances = report.metamodel.evaluate(thetas.view())?;

    let k = unconditional.uniforms_per_replication();
    let omegas = outer_uniforms(k.max(1), cfg.unconditional_outputs, seed, 1, cfg.sampling)?;
    let anchor: Vec<f64> = vec![0.5; unconditional.dimension()];
    let outputs = omegas
        .iter()
        .enumerate()
        .map(|(m, u)| {
            unconditional
                .evaluate(&anchor, &u[..k])
                .map_err(|e| Error::ModelFailure {
                    level: 0,
                    point: 0,
                    replication: m,
                    message: e.0,
                })
        })
        .collect::<Result<Vec<f64>>>()?;

    let estimate = sobol_index_from_parts(&outputs, &conditional_variances)?;
    Ok(SobolRun { estimate, report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityResult {
    pub standardized: Vec<f64>,
    /// Anderson-Darling `A^2`.
    pub statistic: f64,
    pub p_value: f64,
}

pub const MIN_NORMALITY_SAMPLE: usize = 50;

/// Anderson-Darling test of the standardized sample against N(0, 1), with
/// the p-value for estimated mean and variance (small-sample adjusted
/// `A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)`).
pub fn normality_diagnostic(sample: &[f64]) -> Result<NormalityResult> {
    let n = sample.len();
    if n < MIN_NORMALITY_SAMPLE {
        return Err(Error::invalid("sample", "need at least 50 values"));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let sd = libm::sqrt(sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0));
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample);
    }
    let standardized: Vec<f64> = sample.iter().map(|x| (x - mean) / sd).collect();
    let mut z = standardized.clone();
    z.sort_by(f64::total_cmp);
    let mut s = 0.0;
    for i in 0..n {
        let lower = normal_cdf(z[i]).max(f64::MIN_POSITIVE);
        let upper = normal_cdf(-z[n - 1 - i]).max(f64::MIN_POSITIVE);
        s += (2 * i + 1) as f64 * (libm::log(lower) + libm::log(upper));
    }
    let statistic = -nf - s / nf;
    let a = statistic * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p_value = if a >= 0.6 {
        libm::exp(1.2937 - 5.709 * a + 0.0186 * a * a)
    } else if a >= 0.34 {
        libm::exp(0.9177 - 4.279 * a - 1.38 * a * a)
    } else if a >= 0.2 {
        1.0 - libm::exp(-8.318 + 42.796 * a - 59.938 * a * a)
    } else {
        1.0 - libm::exp(-13.436 + 101.14 * a - 223.73 * a * a)
    };
    Ok(NormalityResult {
        standardized,
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{ishigami_conditional, IshigamiFull};
    use crate::design::build_prediction_set;
    use crate::model::ModelError;
    use crate::normal::ppnd16;
    use crate::rng::open_unit;
    use rand::RngCore;

    #[test]
    fn mise_examples() {
        let truth = vec![1.0, 2.0, 3.0];
        let exact = empirical_mise(&[truth.clone(), truth.clone()], &truth).unwrap();
        assert_eq!(exact.value, 0.0);
        let off: Vec<f64> = truth.iter().map(|t| t + 0.5).collect();
        let biased = empirical_mise(&[off.clone(), off.clone(), off], &truth).unwrap();
        assert!((biased.value - 0.25).abs() < 1e-15);
        assert_eq!(biased.variance_part, 0.0);
        let c = 0.3;
        let plus: Vec<f64> = truth.iter().map(|t| t + c).collect();
        let minus: Vec<f64> = truth.iter().map(|t| t - c).collect();
        let spread = empirical_mise(&[plus, minus], &truth).unwrap();
        assert!(spread.bias_part.abs() < 1e-15);
        assert!((spread.variance_part - 2.0 * c * c).abs() < 1e-14);
        assert!((spread.value - c * c).abs() < 1e-14);
        assert!(empirical_mise(core::slice::from_ref(&truth), &truth).is_err());
    }

    #[test]
    fn mise_decomposition_identity() {
        let truth = vec![0.5, -1.0, 2.0, 0.0];
        let surfaces: Vec<Vec<f64>> = (0..7)
            .map(|r| {
                truth
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t + libm::sin((r * 5 + k) as f64))
                    .collect()
            })
            .collect();
        let m = empirical_mise(&surfaces, &truth).unwrap();
        let r = 7.0;
        let rebuilt = m.bias_part + m.variance_part * (r - 1.0) / r;
        assert!((m.value - rebuilt).abs() < 1e-12);
    }

    #[test]
    fn slope_examples() {
        let eps = [0.1, 0.03, 0.01, 0.003];
        let pairs: Vec<(f64, f64)> = eps.iter().map(|e| (*e, libm::pow(*e, -2.0))).collect();
        let fit = fit_cost_slope(&pairs).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = eps.iter().map(|e| (*e, 50.0)).collect();
        let fit = fit_cost_slope(&flat).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert_eq!(fit.r2, 1.0);
        assert!(matches!(
            fit_cost_slope(&[(0.1, 1.0), (0.1, 2.0)]),
            Err(Error::DuplicateAbscissa(_))
        ));
        assert!(fit_cost_slope(&[(0.1, 1.0)]).is_err());
    }

    #[test]
    fn slope_ignores_input_order() {
        let pairs = [(0.1, 12.0), (0.01, 300.0), (0.03, 80.0), (0.003, 4000.0)];
        let mut rev = pairs;
        rev.reverse();
        let a = fit_cost_slope(&pairs).unwrap();
        let b = fit_cost_slope(&rev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smc_replication_examples() {
        assert_eq!(smc_replications(0.01, 1.0).unwrap(), 201);
        assert_eq!(201 * 8, 1608);
        assert_eq!(smc_replications(0.5, 0.0).unwrap(), 2);
        let a = smc_replications(0.02, 0.37).unwrap();
        let b = smc_replications(0.01, 0.37).unwrap();
        assert!((b - 1) as f64 >= 2.0 * (a - 1) as f64 - 2.0);
        assert!(smc_replications(0.0, 1.0).is_err());
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
            Ok(theta[0])
        }
    }

    #[test]
    fn smc_reference_of_deterministic_model() {
        let domain = InputDomain::unit(1).unwrap();
        let design = PointSet::new(1, vec![0.1, 0.4, 0.7, 0.9]).unwrap();
        let pred = build_prediction_set(&domain, 16, 0).unwrap();
        let r = smc_reference_cost(
            &Deterministic,
            design.view(),
            &domain,
            &pred,
            1e-3,
            1,
            50,
            &BootstrapConfig::new(10, 1),
        )
        .unwrap();
        assert_eq!(r.replications, 2);
        assert_eq!(r.cost, 8);
        assert_eq!(r.pilot_cost, 200);
        assert_eq!(r.v, 0.0);
    }

    #[test]
    fn sobol_from_parts_examples() {
        let ys = [1.0, 3.0, -1.0, 5.0];
        let var = 5.0;
        let zero = sobol_index_from_parts(&ys, &[var; 3]).unwrap();
        assert!(zero.index.abs() < 1e-15);
        let one = sobol_index_from_parts(&ys, &[0.0; 3]).unwrap();
        assert_eq!(one.index, 1.0);
        let neg = sobol_index_from_parts(&ys, &[6.0]).unwrap();
        assert!(neg.negative && neg.index < 0.0);
        assert!(matches!(
            sobol_index_from_parts(&[2.0, 2.0], &[1.0]),
            Err(Error::NonPositiveTotalVariance(_))
        ));
    }

    #[test]
    fn sobol_index_for_second_input() {
        // one run has a standard deviation near 0.036 here, so the tolerance
        // is applied to the mean of eight runs
        let x2 = ishigami_conditional(1);
        let pred = build_prediction_set(&x2.domain, 256, 4).unwrap();
        let mut total = 0.0;
        for seed in 0..8 {
            let cfg = SobolConfig::new(seed);
            let run =
                estimate_sobol_index(x2.model.as_ref(), &x2.domain, &IshigamiFull, &pred, &cfg)
                    .unwrap();
            assert!(run.report.cost() <= 10_000);
            assert!(run.estimate.index < 1.0);
            total += run.estimate.index;
        }
        let mean = total / 8.0;
        assert!((mean - 0.4424).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn anderson_darling_matches_reference_values() {
        // reference values from an independent implementation
        let x: Vec<f64> = (0..60)
            .map(|i| libm::sin(1.7 * i as f64) + 0.3 * libm::cos(0.37 * (i * i) as f64))
            .collect();
        let r = normality_diagnostic(&x).unwrap();
        assert!(
            (r.statistic - 0.6114605261990462).abs() < 1e-9,
            "{}",
            r.statistic
        );
        assert!((r.p_value - 0.10690579266753417).abs() < 1e-9);
        let y: Vec<f64> = (0..60).map(|i| libm::pow(i as f64 / 59.0, 3.0)).collect();
        let r = normality_diagnostic(&y).unwrap();
        assert!((r.statistic - 3.884835675987233).abs() < 1e-9);
        assert!((r.p_value / 8.482948823864833e-10 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn anderson_darling_rejects_degenerate_input() {
        assert_eq!(
            normality_diagnostic(&[2.0; 60]),
            Err(Error::DegenerateSample)
        );
        assert!(normality_diagnostic(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn anderson_darling_is_calibrated_on_normal_data() {
        let mut rng = StreamKey::new(99, 0, 0).rng();
        let passes = (0..100)
            .filter(|_| {
                let xs: Vec<f64> = (0..500)
                    .map(|_| ppnd16(open_unit(rng.next_u64())))
                    .collect();
                normality_diagnostic(&xs).unwrap().p_value > 0.01
            })
            .count();
        assert!(passes >= 95, "{passes}/100");
        let r = normality_diagnostic(&(0..500).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        assert!(r.standardized.iter().sum::<f64>().abs() < 1e-9);
    }
}
