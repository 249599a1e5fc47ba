//! Simulation cases with a known threshold at 1.
//!
//! * Case 0: `1 + GPD(σ, ξ)`, nothing below the threshold.
//! * Cases 1–3, 5–8: fixed counts of `U(0.5, 1)` below and `1 + GPD(σ, ξ)`
//!   above, in proportion 1 : 5.
//! * Case 4: GPD(σ, ξ) proposals from 0, rejected when below a
//!   `Beta(α, β)` draw. Excesses of 1 are exactly GPD(σ + ξ, ξ) but the
//!   density is smooth across the threshold.
//! * Gaussian: standard normal, no true threshold.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::gpd::GpdParams;

/// Upper limit on Case 4 proposals.
pub const PROPOSAL_CAP: u64 = 100_000_000;

/// Quadrature order used for `τ`.
pub const TAU_QUADRATURE_ORDER: usize = 64;

/// Location of the true threshold for every case with one.
pub const TRUE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    Case0,
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    Case6,
    Case7,
    Case8,
    Gaussian,
}

impl CaseId {
    pub const ALL: [CaseId; 10] = [
        CaseId::Case0,
        CaseId::Case1,
        CaseId::Case2,
        CaseId::Case3,
        CaseId::Case4,
        CaseId::Case5,
        CaseId::Case6,
        CaseId::Case7,
        CaseId::Case8,
        CaseId::Gaussian,
    ];
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseId::Gaussian => f.write_str("gaussian"),
            other => write!(f, "case{}", *other as u8),
        }
    }
}

impl FromStr for CaseId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "gaussian" || t == "normal" {
            return Ok(CaseId::Gaussian);
        }
        let digits = t.strip_prefix("case").unwrap_or(&t).trim();
        match digits.parse::<usize>() {
            Ok(k) if k <= 8 => Ok(CaseId::ALL[k]),
            _ => Err(Error::InvalidParameter(format!("unknown case '{s}'"))),
        }
    }
}

/// A simulation scenario. For Case 4 `sigma_u` is the proposal scale at 0;
/// for the Gaussian scenario only `n_above` (the sample size) is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: CaseId,
    pub sigma_u: f64,
    pub xi: f64,
    pub n_below: usize,
    pub n_above: usize,
    pub beta_params: (f64, f64),
}

impl CaseSpec {
    fn mixture(id: CaseId, xi: f64, n_below: usize, n_above: usize) -> Self {
        CaseSpec {
            id,
            sigma_u: 0.5,
            xi,
            n_below,
            n_above,
            beta_params: (1.0, 2.0),
        }
    }

    pub fn preset(id: CaseId) -> Self {
        match id {
            CaseId::Case0 => Self::mixture(id, 0.1, 0, 1000),
            CaseId::Case1 => Self::mixture(id, 0.1, 200, 1000),
            CaseId::Case2 => Self::mixture(id, 0.1, 80, 400),
            CaseId::Case3 => Self::mixture(id, -0.05, 400, 2000),
            CaseId::Case4 => Self::mixture(id, 0.1, 721, 279),
            CaseId::Case5 => Self::mixture(id, 0.1, 20, 100),
            CaseId::Case6 => Self::mixture(id, -0.2, 200, 1000),
            CaseId::Case7 => Self::mixture(id, -0.3, 200, 1000),
            // 20000 split 1 : 5 as closely as integers allow
            CaseId::Case8 => Self::mixture(id, 0.1, 3333, 16667),
            CaseId::Gaussian => Self::gaussian(2000),
        }
    }

    pub fn gaussian(n: usize) -> Self {
        CaseSpec {
            id: CaseId::Gaussian,
            sigma_u: 1.0,
            xi: 0.0,
            n_below: 0,
            n_above: n,
            beta_params: (1.0, 2.0),
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_below + self.n_above
    }

    /// GPD of the excesses of the true threshold.
    pub fn tail_params(&self) -> Result<GpdParams> {
        match self.id {
            CaseId::Gaussian => Err(Error::InvalidParameter(
                "the Gaussian scenario has no GPD tail".into(),
            )),
            CaseId::Case4 => GpdParams::new(self.sigma_u, self.xi)?.shift_threshold(TRUE_THRESHOLD),
            _ => GpdParams::new(self.sigma_u, self.xi),
        }
    }

    /// Grid used by the studies: 0(5)95, or for Gaussian data 50(5)95
    /// (50(0.5)95 from 20000 values up).
    pub fn default_grid(&self) -> crate::eqd::GridSpec {
        let (start, step) = match self.id {
            CaseId::Gaussian if self.n_total() >= 20_000 => (50.0, 0.5),
            CaseId::Gaussian => (50.0, 5.0),
            _ => (0.0, 5.0),
        };
        crate::eqd::GridSpec::Percent {
            start,
            step,
            end: 95.0,
        }
    }

    pub fn has_true_threshold(&self) -> bool {
        self.id != CaseId::Gaussian
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total() < 2 {
            return Err(Error::TooFewObservations {
                required: 2,
                got: self.n_total(),
            });
        }
        if self.id == CaseId::Gaussian {
            return Ok(());
        }
        GpdParams::new(self.sigma_u, self.xi)?;
        let (a, b) = self.beta_params;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta parameters ({a}, {b})")));
        }
        if self.id == CaseId::Case0 && self.n_below != 0 {
            return Err(Error::InvalidParameter("case 0 has no values below 1".into()));
        }
        Ok(())
    }

    /// Probability of exceeding the true threshold.
    fn tail_prob(&self) -> Result<f64> {
        match self.id {
            CaseId::Case0 => Ok(1.0),
            CaseId::Case4 => {
                let (a, b) = self.beta_params;
                Ok(1.0 - compute_tau(self.sigma_u, self.xi, a, b)?)
            }
            CaseId::Gaussian => Ok(1.0),
            _ => Ok(5.0 / 6.0),
        }
    }
}

/// Draw one sample of the case. Values are returned in generation order.
pub fn simulate_case<R: Rng + ?Sized>(spec: &CaseSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    match spec.id {
        CaseId::Gaussian => Ok((0..spec.n_above).map(|_| StandardNormal.sample(rng)).collect()),
        CaseId::Case4 => simulate_rejection(spec, rng),
        _ => {
            let below = Uniform::new(0.5, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
            let tail = GpdParams::new(spec.sigma_u, spec.xi)?;
            let mut out: Vec<f64> = (0..spec.n_below).map(|_| below.sample(rng)).collect();
            out.extend(tail.sample(spec.n_above, rng).into_iter().map(|y| TRUE_THRESHOLD + y));
            Ok(out)
        }
    }
}

fn simulate_rejection<R: Rng + ?Sized>(spec: &CaseSpec, rng: &mut R) -> Result<Vec<f64>> {
    let proposal = GpdParams::new(spec.sigma_u, spec.xi)?;
    let (a, b) = spec.beta_params;
    let beta = Beta::new(a, b).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut below = Vec::with_capacity(spec.n_below);
    let mut above = Vec::with_capacity(spec.n_above);
    let mut proposals = 0u64;
    while below.len() < spec.n_below || above.len() < spec.n_above {
        if proposals >= PROPOSAL_CAP {
            return Err(Error::Numerical(format!(
                "quota fill exceeded {PROPOSAL_CAP} proposals"
            )));
        }
        proposals += 1;
        let y = proposal.quantile_unchecked(rng.random::<f64>());
        let cut: f64 = beta.sample(rng);
        if y < cut {
            continue;
        }
        if y <= TRUE_THRESHOLD {
            if below.len() < spec.n_below {
                below.push(y);
            }
        } else if above.len() < spec.n_above {
            above.push(y);
        }
    }
    below.extend(above);
    Ok(below)
}

/// Level exceeded with probability `p`.
pub fn true_quantile(spec: &CaseSpec, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    if spec.id == CaseId::Gaussian {
        return inverse_normal_cdf(p).map(|z| -z);
    }
    let zeta = spec.tail_prob()?;
    if p > zeta {
        return Err(Error::InvalidProbability(p));
    }
    let tail = spec.tail_params()?;
    Ok(TRUE_THRESHOLD + tail.quantile_from_exp(-(p / zeta).ln()))
}

/// Standard normal quantile.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(p))
}

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn beta_cdf(a: f64, b: f64, s: f64) -> f64 {
    if a == 1.0 && b == 2.0 {
        2.0 * s - s * s
    } else {
        beta_reg(a, b, s)
    }
}

fn tau_with_order(sigma: f64, xi: f64, a: f64, b: f64, order: usize) -> Result<f64> {
    let g = GpdParams::new(sigma, xi)?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!("beta parameters ({a}, {b})")));
    }
    let (nodes, weights) = gauss_legendre(order);
    let q: f64 = nodes
        .iter()
        .zip(&weights)
        .map(|(&t, &w)| {
            let s = 0.5 * (t + 1.0);
            0.5 * w * g.log_density_unchecked(s).exp() * beta_cdf(a, b, s)
        })
        .sum();
    let tail = (-g.neg_log_survival_unchecked(TRUE_THRESHOLD)).exp();
    Ok(q / (q + tail))
}

/// `P(X ≤ 1)` for the Case 4 construction.
pub fn compute_tau(sigma: f64, xi: f64, alpha: f64, beta: f64) -> Result<f64> {
    tau_with_order(sigma, xi, alpha, beta, TAU_QUADRATURE_ORDER)
}
