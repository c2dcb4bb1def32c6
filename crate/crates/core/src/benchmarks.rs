//! Test problems with closed-form variance functions.

use alloc::boxed::Box;
use core::f64::consts::PI;

use crate::model::{InputDomain, ModelError, SimulationModel};
use crate::normal::ppnd16;

type ModelResult = core::result::Result<f64, ModelError>;

/// Default procedure parameters for a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    pub alpha: f64,
    pub gamma: f64,
    pub s: f64,
    pub m0: usize,
}

pub struct BenchmarkModel {
    pub name: &'static str,
    pub model: Box<dyn SimulationModel + Send + Sync>,
    pub domain: InputDomain,
    pub truth: fn(&[f64]) -> f64,
    pub defaults: Defaults,
}

impl core::fmt::Debug for BenchmarkModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BenchmarkModel")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("defaults", &self.defaults)
            .finish()
    }
}

pub const NAMES: [&str; 6] = [
    "ivp",
    "griewank",
    "ishigami-x1",
    "ishigami-x2",
    "ishigami-x3",
    "ishigami-full",
];

pub fn by_name(name: &str) -> Option<BenchmarkModel> {
    Some(match name {
        "ivp" => ivp_model(),
        "griewank" => griewank_model(),
        "ishigami-x1" => ishigami_conditional(0),
        "ishigami-x2" => ishigami_conditional(1),
        "ishigami-x3" => ishigami_conditional(2),
        "ishigami-full" => ishigami_full(),
        _ => return None,
    })
}

// ---------------------------------------------------------------------------
// Initial value problem: Y(t) = U0 exp(Lambda t).

const IVP_MU0: f64 = 10.0;
const IVP_SIGMA0: f64 = 2.0;
const IVP_MU: f64 = -1.0;
const IVP_SIGMA: f64 = 0.25;

#[derive(Debug, Clone, Copy, Default)]
pub struct Ivp;

impl SimulationModel for Ivp {
    fn dimension(&self) -> usize {
        1
    }

    fn uniforms_per_replication(&self) -> usize {
        2
    }

    fn evaluate(&self, theta: &[f64], u: &[f64]) -> ModelResult {
        let u0 = IVP_MU0 + IVP_SIGMA0 * ppnd16(u[0]);
        let lambda = IVP_MU + IVP_SIGMA * ppnd16(u[1]);
        Ok(u0 * libm::exp(lambda * theta[0]))
    }
}

pub fn ivp_truth(theta: &[f64]) -> f64 {
    let t = theta[0];
    let g = libm::exp(IVP_SIGMA * IVP_SIGMA * t * t);
    libm::exp(2.0 * IVP_MU * t) * g * (IVP_SIGMA0 * IVP_SIGMA0 * g + IVP_MU0 * IVP_MU0 * (g - 1.0))
}

pub fn ivp_model() -> BenchmarkModel {
    BenchmarkModel {
        name: "ivp",
        model: Box::new(Ivp),
        domain: InputDomain::unit(1).expect("valid domain"),
        truth: ivp_truth,
        defaults: Defaults {
            alpha: 1.5,
            gamma: 1.0,
            s: 2.0,
            m0: 4,
        },
    }
}

// ---------------------------------------------------------------------------
// Griewank mean with heteroscedastic Gaussian noise on [-5, 5]^2.

#[derive(Debug, Clone, Copy, Default)]
pub struct Griewank;

impl SimulationModel for Griewank {
    fn dimension(&self) -> usize {
        2
    }

    fn uniforms_per_replication(&self) -> usize {
        2
    }

    fn evaluate(&self, theta: &[f64], u: &[f64]) -> ModelResult {
        let (x, y) = (theta[0], theta[1]);
        let mean = 1.0 + (x * x + y * y) / 4000.0
            - libm::cos(x) * libm::cos(y / core::f64::consts::SQRT_2);
        Ok(mean + (1.0 + x.abs()) * ppnd16(u[0]) + libm::exp(-y * y) * ppnd16(u[1]))
    }
}

pub fn griewank_truth(theta: &[f64]) -> f64 {
    let a = 1.0 + theta[0].abs();
    a * a + libm::exp(-2.0 * theta[1] * theta[1])
}

pub fn griewank_model() -> BenchmarkModel {
    BenchmarkModel {
        name: "griewank",
        model: Box::new(Griewank),
        domain: InputDomain::cube(2, -5.0, 5.0).expect("valid domain"),
        truth: griewank_truth,
        defaults: Defaults {
            alpha: 2.0,
            gamma: 2.0,
            s: 2.0,
            m0: 4,
        },
    }
}

// ---------------------------------------------------------------------------
// Ishigami function with a = 7, b = 0.1.

pub const ISHIGAMI_A: f64 = 7.0;
pub const ISHIGAMI_B: f64 = 0.1;

/// First-order indices `(S1, S2, S3)` of the Ishigami function.
pub const ISHIGAMI_SOBOL_INDICES: [f64; 3] = [0.3139, 0.4424, 0.0];

pub fn ishigami(x: [f64; 3]) -> f64 {
    let s1 = libm::sin(x[0]);
    let s2 = libm::sin(x[1]);
    s1 + ISHIGAMI_A * s2 * s2 + ISHIGAMI_B * x[2] * x[2] * x[2] * x[2] * s1
}

/// `Var(Y) = a^2/8 + b pi^4/5 + b^2 pi^8/18 + 1/2`.
pub fn ishigami_total_variance() -> f64 {
    let pi4 = PI * PI * PI * PI;
    ISHIGAMI_A * ISHIGAMI_A / 8.0
        + ISHIGAMI_B * pi4 / 5.0
        + ISHIGAMI_B * ISHIGAMI_B * pi4 * pi4 / 18.0
        + 0.5
}

#[inline]
fn uniform_pm_pi(u: f64) -> f64 {
    PI * (2.0 * u - 1.0)
}

/// `Y | X_input = theta`; the other two inputs come from the two uniforms.
#[derive(Debug, Clone, Copy)]
pub struct IshigamiConditional {
    input: usize,
}

impl IshigamiConditional {
    pub fn new(input: usize) -> Self {
        assert!(input < 3, "Ishigami has three inputs");
        IshigamiConditional { input }
    }

    pub fn input(&self) -> usize {
        self.input
    }
}

impl SimulationModel for IshigamiConditional {
    fn dimension(&self) -> usize {
        1
    }

    fn uniforms_per_replication(&self) -> usize {
        2
    }

    fn evaluate(&self, theta: &[f64], u: &[f64]) -> ModelResult {
        let mut x = [0.0; 3];
        let mut k = 0;
        for (i, xi) in x.iter_mut().enumerate() {
            if i == self.input {
                *xi = theta[0];
            } else {
                *xi = uniform_pm_pi(u[k]);
                k += 1;
            }
        }
        Ok(ishigami(x))
    }
}

pub fn ishigami_truth_x1(theta: &[f64]) -> f64 {
    let pi8 = libm::pow(PI, 8.0);
    let s = libm::sin(theta[0]);
    49.0 / 8.0 + 4.0 * pi8 / 5625.0 * s * s
}

pub fn ishigami_truth_x2(_theta: &[f64]) -> f64 {
    0.5 + libm::pow(PI, 4.0) / 50.0 + libm::pow(PI, 8.0) / 1800.0
}

pub fn ishigami_truth_x3(theta: &[f64]) -> f64 {
    let q = 1.0 + 0.1 * libm::pow(theta[0], 4.0);
    49.0 / 8.0 + 0.5 * q * q
}

fn ishigami_defaults() -> Defaults {
    Defaults {
        alpha: 2.0,
        gamma: 2.0,
        s: 2.0,
        m0: 4,
    }
}

pub fn ishigami_conditional(input: usize) -> BenchmarkModel {
    let (name, truth): (&'static str, fn(&[f64]) -> f64) = match input {
        0 => ("ishigami-x1", ishigami_truth_x1),
        1 => ("ishigami-x2", ishigami_truth_x2),
        _ => ("ishigami-x3", ishigami_truth_x3),
    };
    BenchmarkModel {
        name,
        model: Box::new(IshigamiConditional::new(input)),
        domain: InputDomain::cube(1, -PI, PI).expect("valid domain"),
        truth,
        defaults: ishigami_defaults(),
    }
}

/// The unconditional output as a model with a dummy one-dimensional input;
/// its variance function is the constant `Var(Y)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IshigamiFull;

impl SimulationModel for IshigamiFull {
    fn dimension(&self) -> usize {
        1
    }

    fn uniforms_per_replication(&self) -> usize {
        3
    }

    fn evaluate(&self, _theta: &[f64], u: &[f64]) -> ModelResult {
        Ok(ishigami([
            uniform_pm_pi(u[0]),
            uniform_pm_pi(u[1]),
            uniform_pm_pi(u[2]),
        ]))
    }
}

fn ishigami_full_truth(_theta: &[f64]) -> f64 {
    ishigami_total_variance()
}

pub fn ishigami_full() -> BenchmarkModel {
    BenchmarkModel {
        name: "ishigami-full",
        model: Box::new(IshigamiFull),
        domain: InputDomain::cube(1, -PI, PI).expect("valid domain"),
        truth: ishigami_full_truth,
        defaults: ishigami_defaults(),
    }
}

/// The three conditional models followed by the unconditional one.
pub fn ishigami_family() -> [BenchmarkModel; 4] {
    [
        ishigami_conditional(0),
        ishigami_conditional(1),
        ishigami_conditional(2),
        ishigami_full(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_uniforms, StreamKey};
    use crate::stats::RunningMoments;
    use alloc::vec;

    /// Sample variance of `reps` outputs at `theta` and its standard error
    /// `sqrt((m4 - s^4 (n-3)/(n-1)) / n)`.
    fn brute_force(
        model: &dyn SimulationModel,
        theta: &[f64],
        reps: usize,
        seed: u64,
    ) -> (f64, f64) {
        let mut u = vec![0.0; model.uniforms_per_replication()];
        let mut ys = vec![0.0; reps];
        for (m, y) in ys.iter_mut().enumerate() {
            fill_uniforms(&mut StreamKey::new(seed, 0, m).rng(), &mut u);
            *y = model.evaluate(theta, &u).unwrap();
        }
        let mut mom = RunningMoments::new();
        mom.extend(ys.iter().copied());
        let (mean, var) = (mom.mean(), mom.variance().unwrap());
        let m4 = ys.iter().map(|y| libm::pow(y - mean, 4.0)).sum::<f64>() / reps as f64;
        let n = reps as f64;
        (
            var,
            libm::sqrt((m4 - var * var * (n - 3.0) / (n - 1.0)) / n),
        )
    }

    #[test]
    fn ivp_truth_values() {
        assert!((ivp_truth(&[0.0]) - 4.0).abs() < 1e-14);
        let expected =
            libm::exp(-1.9375) * (4.0 * libm::exp(0.0625) + 100.0 * (libm::exp(0.0625) - 1.0));
        assert!((ivp_truth(&[1.0]) - expected).abs() < 1e-14);
        assert!((ivp_truth(&[1.0]) - 1.543).abs() < 1e-3);
    }

    #[test]
    fn griewank_truth_values() {
        assert_eq!(griewank_truth(&[0.0, 0.0]), 2.0);
        assert_eq!(griewank_truth(&[5.0, 0.0]), 37.0);
    }

    #[test]
    fn ishigami_truth_values() {
        assert_eq!(ishigami_truth_x1(&[0.0]), 6.125);
        assert!((ishigami_truth_x2(&[0.3]) - 7.7196).abs() < 1e-4);
        assert_eq!(ishigami_truth_x2(&[0.3]), ishigami_truth_x2(&[-2.0]));
        assert_eq!(ishigami_truth_x3(&[0.0]), 6.625);
        assert!((ishigami_total_variance() - 13.8446).abs() < 1e-4);
    }

    #[test]
    fn registry_resolves_every_name() {
        for name in NAMES {
            let b = by_name(name).unwrap();
            assert_eq!(b.name, name);
            assert_eq!(b.model.dimension(), b.domain.dim());
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn truths_positive_on_domain() {
        for name in NAMES {
            let b = by_name(name).unwrap();
            let dim = b.domain.dim();
            let mut theta = vec![0.0; dim];
            for i in 0..=20 {
                let unit = vec![i as f64 / 20.0; dim];
                b.domain.from_unit(&unit, &mut theta);
                let v = (b.truth)(&theta);
                assert!(v.is_finite() && v > 0.0, "{name} at {theta:?}");
            }
        }
    }

    #[test]
    fn brute_force_spot_checks() {
        let ivp = ivp_model();
        let (v, se) = brute_force(ivp.model.as_ref(), &[0.5], 200_000, 1);
        assert!((v - ivp_truth(&[0.5])).abs() < 4.0 * se, "{v} ± {se}");
        let g = griewank_model();
        let (v, se) = brute_force(g.model.as_ref(), &[-2.0, 1.0], 200_000, 2);
        assert!((v - griewank_truth(&[-2.0, 1.0])).abs() < 4.0 * se);
        let x1 = ishigami_conditional(0);
        let (v, se) = brute_force(x1.model.as_ref(), &[1.0], 200_000, 3);
        assert!((v - ishigami_truth_x1(&[1.0])).abs() < 4.0 * se);
    }

    #[test]
    fn ishigami_conditional_means_match_indices() {
        let var_y = ishigami_total_variance();
        let truths = [ishigami_truth_x1, ishigami_truth_x2, ishigami_truth_x3];
        for (i, truth) in truths.iter().enumerate() {
            let n = 10_000;
            let mean = (0..n)
                .map(|k| truth(&[uniform_pm_pi((k as f64 + 0.5) / n as f64)]))
                .sum::<f64>()
                / n as f64;
            let expected = var_y * (1.0 - ISHIGAMI_SOBOL_INDICES[i]);
            assert!(
                (mean / expected - 1.0).abs() < 0.01,
                "S{}: {mean} vs {expected}",
                i + 1
            );
        }
    }
}
