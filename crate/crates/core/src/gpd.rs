//! Generalised Pareto distribution for threshold excesses.
//!
//! `H(y; σ, ξ) = 1 − (1 + ξy/σ)₊^(−1/ξ)` for `y ≥ 0`. All evaluations go
//! through `log1p`/`expm1`, and the exponential limit is used whenever
//! `|ξ| < SMALL_SHAPE`.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|ξ|` the `ξ = 0` (exponential) formulas are used.
pub const SMALL_SHAPE: f64 = 1e-8;

/// Scale/shape pair of a GPD. Scale is strictly positive and both are finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    scale: f64,
    shape: f64,
}

impl GpdParams {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        if !shape.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "shape must be finite, got {shape}"
            )));
        }
        Ok(GpdParams { scale, shape })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    fn is_exponential(&self) -> bool {
        self.shape.abs() < SMALL_SHAPE
    }

    /// Upper end of the support, finite only for negative shape.
    pub fn upper_endpoint(&self) -> Option<f64> {
        if self.shape < 0.0 && !self.is_exponential() {
            Some(-self.scale / self.shape)
        } else {
            None
        }
    }

    /// `−ln(1 − H(y))`, which is also the transform of `y` to unit
    /// exponential margins. `+∞` at and beyond a finite upper endpoint.
    pub(crate) fn neg_log_survival_unchecked(&self, y: f64) -> f64 {
        if self.is_exponential() {
            return y / self.scale;
        }
        let t = self.shape * y / self.scale;
        if t <= -1.0 {
            return f64::INFINITY;
        }
        t.ln_1p() / self.shape
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        check_excess(y)?;
        let z = self.neg_log_survival_unchecked(y);
        Ok(-(-z).exp_m1())
    }

    /// Survivor function `1 − H(y)`.
    pub fn survival(&self, y: f64) -> Result<f64> {
        check_excess(y)?;
        Ok((-self.neg_log_survival_unchecked(y)).exp())
    }

    /// Log density. Points outside the support give `−∞`.
    pub fn log_density(&self, y: f64) -> Result<f64> {
        check_excess(y)?;
        Ok(self.log_density_unchecked(y))
    }

    pub(crate) fn log_density_unchecked(&self, y: f64) -> f64 {
        if self.is_exponential() {
            return -self.scale.ln() - y / self.scale;
        }
        let t = self.shape * y / self.scale;
        if t <= -1.0 {
            return f64::NEG_INFINITY;
        }
        -self.scale.ln() - (1.0 + 1.0 / self.shape) * t.ln_1p()
    }

    /// Quantile for `prob ∈ [0, 1)`.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&prob) {
            return Err(Error::InvalidProbability(prob));
        }
        Ok(self.quantile_unchecked(prob))
    }

    /// Like [`quantile`](Self::quantile) but also accepts `prob = 1` when the
    /// support is bounded, returning the upper endpoint.
    pub fn quantile_inclusive(&self, prob: f64) -> Result<f64> {
        match self.upper_endpoint() {
            Some(end) if prob == 1.0 => Ok(end),
            _ => self.quantile(prob),
        }
    }

    pub(crate) fn quantile_unchecked(&self, prob: f64) -> f64 {
        // -ln(1 - p), exact for small p
        let e = -(-prob).ln_1p();
        self.quantile_from_exp(e)
    }

    /// Quantile at unit-exponential level `e = −ln(1 − p)`.
    pub(crate) fn quantile_from_exp(&self, e: f64) -> f64 {
        if self.is_exponential() {
            self.scale * e
        } else {
            self.scale * (self.shape * e).exp_m1() / self.shape
        }
    }

    /// `n` independent draws by inversion, one uniform per draw.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                self.quantile_unchecked(u)
            })
            .collect()
    }

    /// Parameters of the excesses of a threshold `delta` above the current
    /// one: `(σ + ξ·delta, ξ)`.
    pub fn shift_threshold(&self, delta: f64) -> Result<GpdParams> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold shift must be non-negative, got {delta}"
            )));
        }
        if let Some(end) = self.upper_endpoint() {
            if delta >= end {
                return Err(Error::OutsideSupport { value: delta });
            }
        }
        if self.is_exponential() {
            return Ok(*self);
        }
        GpdParams::new(self.scale + self.shape * delta, self.shape)
    }
}

fn check_excess(y: f64) -> Result<()> {
    if y.is_nan() || y < 0.0 {
        Err(Error::OutsideSupport { value: y })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedKey;

    fn p(scale: f64, shape: f64) -> GpdParams {
        GpdParams::new(scale, shape).unwrap()
    }

    /// Composite Simpson rule, used as an independent integrator.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn constructor_rejects_bad_params() {
        assert!(GpdParams::new(0.0, 0.1).is_err());
        assert!(GpdParams::new(-1.0, 0.1).is_err());
        assert!(GpdParams::new(1.0, f64::NAN).is_err());
        assert!(GpdParams::new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(p(0.5, 0.1).cdf(0.0).unwrap(), 0.0);
        let med = p(1.0, 0.0).cdf(std::f64::consts::LN_2).unwrap();
        assert!((med - 0.5).abs() < 1e-15);
        let v = p(0.5, 0.1).cdf(1.0).unwrap();
        assert!((v - (1.0 - 1.2f64.powf(-10.0))).abs() < 1e-14);
        assert!((v - 0.838494417110154).abs() < 1e-12);
        // beyond the upper endpoint 10/3
        assert_eq!(p(1.0, -0.3).cdf(5.0).unwrap(), 1.0);
        assert!(p(1.0, 0.1).cdf(-0.1).is_err());
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let g = p(0.5, 0.1);
        let integral = simpson(|y| g.log_density(y).unwrap().exp(), 0.0, 1.0, 2000);
        assert!((integral - g.cdf(1.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn log_density_examples() {
        assert!(p(1.0, 0.3).log_density(0.0).unwrap().abs() < 1e-15);
        assert_eq!(p(1.0, -0.3).log_density(5.0).unwrap(), f64::NEG_INFINITY);
        let v = p(0.5, 0.1).log_density(1.0).unwrap();
        assert!((v - (2.0f64.ln() - 11.0 * 1.2f64.ln())).abs() < 1e-14);
        assert!((v + 1.3123899441735551).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(p(2.0, 0.4).quantile(0.0).unwrap(), 0.0);
        let q = p(1.0, 0.0).quantile(1.0 - (-1.0f64).exp()).unwrap();
        assert!((q - 1.0).abs() < 1e-14);
        let q = p(0.5, 0.1).quantile(0.838494417110154).unwrap();
        assert!((q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quantile_at_one() {
        assert!(p(1.0, 0.2).quantile(1.0).is_err());
        assert!(p(1.0, 0.0).quantile_inclusive(1.0).is_err());
        assert!(p(1.0, -0.5).quantile(1.0).is_err());
        assert_eq!(p(1.0, -0.5).quantile_inclusive(1.0).unwrap(), 2.0);
        assert!(p(1.0, 0.1).quantile(-0.01).is_err());
    }

    #[test]
    fn shift_examples() {
        let s = p(0.5, 0.1).shift_threshold(1.0).unwrap();
        assert!((s.scale() - 0.6).abs() < 1e-15 && s.shape() == 0.1);
        let e = p(0.7, 0.0).shift_threshold(12.0).unwrap();
        assert_eq!(e, p(0.7, 0.0));
        let base = p(0.5, 0.1);
        let s = base.shift_threshold(2.0).unwrap();
        assert!((s.scale() - 0.7).abs() < 1e-15);
        let x = 0.3;
        let lhs = s.survival(x).unwrap();
        let rhs = base.survival(2.0 + x).unwrap() / base.survival(2.0).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(p(1.0, -0.5).shift_threshold(2.0).is_err());
        assert!(p(1.0, -0.5).shift_threshold(-1.0).is_err());
    }

    #[test]
    fn sample_is_deterministic_and_matches_cdf() {
        let g = p(0.5, 0.1);
        let key = SeedKey::new(11);
        assert!(g.sample(0, &mut key.stream()).is_empty());
        let mut a = g.sample(100_000, &mut key.stream());
        let b = g.sample(100_000, &mut key.stream());
        assert_eq!(a, b);
        a.sort_by(f64::total_cmp);
        let n = a.len() as f64;
        let ks = a
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let f = g.cdf(y).unwrap();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }
}
