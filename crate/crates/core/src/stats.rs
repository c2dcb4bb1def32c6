use crate::error::{Error, Result};

/// Unbiased sample variance `(M-1)^{-1} sum (y - mean)^2`, two-pass.
pub fn sample_variance(row: &[f64]) -> Result<f64> {
    let m = row.len();
    if m < 2 {
        return Err(Error::TooFewReplications(m));
    }
    let mean = row.iter().sum::<f64>() / m as f64;
    let (mut ss, mut comp) = (0.0, 0.0);
    for &y in row {
        let d = y - mean;
        ss += d * d;
        comp += d;
    }
    // corrected two-pass: removes the rounding error left in `mean`
    Ok((ss - comp * comp / m as f64) / (m - 1) as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Welford accumulator for mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, y: f64) {
        self.count += 1;
        let delta = y - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased variance; needs at least two observations.
    pub fn variance(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::TooFewReplications(self.count as usize));
        }
        Ok((self.m2 / (self.count - 1) as f64).max(0.0))
    }
}

impl Extend<f64> for RunningMoments {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for y in iter {
            self.push(y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    #[test]
    fn constant_row_has_zero_variance() {
        assert_eq!(sample_variance(&[3.7; 9]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_value() {
        assert_eq!(sample_variance(&[2.0, 4.0, 6.0]).unwrap(), 4.0);
    }

    #[test]
    fn needs_two_values() {
        assert_eq!(sample_variance(&[1.0]), Err(Error::TooFewReplications(1)));
        assert_eq!(sample_variance(&[]), Err(Error::TooFewReplications(0)));
        assert!(RunningMoments::new().variance().is_err());
    }

    /// Exact rational variance of small integers: (M sum y^2 - (sum y)^2) / (M (M-1)).
    fn exact_variance(row: &[i64]) -> (i128, i128) {
        let m = row.len() as i128;
        let s: i128 = row.iter().map(|&y| y as i128).sum();
        let s2: i128 = row.iter().map(|&y| (y as i128) * (y as i128)).sum();
        (m * s2 - s * s, m * (m - 1))
    }

    proptest! {
        #[test]
        fn matches_exact_rational(row in proptest::collection::vec(-1000i64..1000, 2..60)) {
            let (num, den) = exact_variance(&row);
            let exact = num as f64 / den as f64;
            let xs: Vec<f64> = row.iter().map(|&y| y as f64).collect();
            let two_pass = sample_variance(&xs).unwrap();
            let mut welford = RunningMoments::new();
            welford.extend(xs.iter().copied());
            let tol = 1e-12 * exact.abs().max(1e-300);
            prop_assert!((two_pass - exact).abs() <= tol, "{} vs {}", two_pass, exact);
            prop_assert!((welford.variance().unwrap() - exact).abs() <= 1e-11 * exact.abs().max(1e-300));
        }

        #[test]
        fn shift_invariant(row in proptest::collection::vec(-50.0f64..50.0, 2..40), shift in -1e3f64..1e3) {
            let shifted: Vec<f64> = row.iter().map(|y| y + shift).collect();
            let a = sample_variance(&row).unwrap();
            let b = sample_variance(&shifted).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
