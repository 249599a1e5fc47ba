//! Empirical quantile function.
//!
//! The i-th order statistic (1-based) of an `n`-point sample sits at
//! plotting position `q_i = (i − 1)/(n − 1)`; between positions the
//! function is linear. Tied order statistics stay separate nodes, which
//! gives flat segments.

use rand::Rng;

use crate::error::{Error, Result};

/// Plotting positions `{(i − 1)/(n − 1) : i = 1..n}`.
pub fn plotting_points(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::TooFewObservations { required: 2, got: n });
    }
    let d = (n - 1) as f64;
    Ok((0..n).map(|i| i as f64 / d).collect())
}

/// A sample sorted ascending, with at least two values.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewObservations {
                required: 2,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "sample contains non-finite values".into(),
            ));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(SortedSample { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sample quantile at `p ∈ [0, 1]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        let x = &self.values;
        let last = x.len() - 1;
        let h = p * last as f64;
        // land exactly on the order statistic at a plotting position
        let r = h.round();
        if (h - r).abs() <= 4.0 * f64::EPSILON * r.max(1.0) {
            return x[(r as usize).min(last)];
        }
        let i = h.floor() as usize;
        if i >= last {
            return x[last];
        }
        let frac = h - i as f64;
        x[i] + frac * (x[i + 1] - x[i])
    }
}

/// Same-length resample drawn uniformly with replacement.
pub fn resample_with_replacement<R: Rng + ?Sized>(s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::TooFewObservations { required: 1, got: 0 });
    }
    let n = s.len();
    Ok((0..n).map(|_| s[rng.random_range(0..n)]).collect())
}
