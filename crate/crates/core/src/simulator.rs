//! Synthetic count series from known coefficient functions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::series::CountSeries;

pub type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Points used to check the truth invariants.
const CHECK_GRID: usize = 1000;

#[derive(Clone)]
pub struct TruthFunctions {
    mu: CoefFn,
    a: Vec<CoefFn>,
    b: Vec<CoefFn>,
    label: String,
}

impl fmt::Debug for TruthFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruthFunctions")
            .field("label", &self.label)
            .field("p", &self.a.len())
            .field("q", &self.b.len())
            .finish()
    }
}

impl TruthFunctions {
    /// Checks `μ > 0`, `a_i, b_k ∈ [0, 1)` and `Σ a_i + Σ b_k < 1` on a
    /// fine grid of `[0, 1]`.
    pub fn new(label: impl Into<String>, mu: CoefFn, a: Vec<CoefFn>, b: Vec<CoefFn>) -> Result<Self> {
        let label = label.into();
        for g in 0..=CHECK_GRID {
            let x = g as f64 / CHECK_GRID as f64;
            let m = mu(x);
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidParams(format!("{label}: mu({x}) = {m} is not positive")));
            }
            let mut total = 0.0;
            for f in a.iter().chain(&b) {
                let v = f(x);
                if !(0.0..1.0).contains(&v) {
                    return Err(Error::InvalidParams(format!("{label}: coefficient {v} at x={x} outside [0, 1)")));
                }
                total += v;
            }
            if total >= 1.0 {
                return Err(Error::InvalidParams(format!("{label}: coefficients sum to {total} at x={x}")));
            }
        }
        Ok(Self { mu, a, b, label })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mu(&self, x: f64) -> f64 {
        (self.mu)(x)
    }

    pub fn a(&self, i: usize, x: f64) -> f64 {
        (self.a[i - 1])(x)
    }

    pub fn b(&self, k: usize, x: f64) -> f64 {
        (self.b[k - 1])(x)
    }

    pub fn ar_order(&self) -> usize {
        self.a.len()
    }

    pub fn ch_order(&self) -> usize {
        self.b.len()
    }

    /// `μ(0) / (1 − Σ a_i(0) − Σ b_k(0))`.
    pub fn stationary_start(&self) -> f64 {
        let s: f64 = self.a.iter().chain(&self.b).map(|f| f(0.0)).sum();
        self.mu(0.0) / (1.0 - s)
    }

    fn intensity(&self, t: usize, t_last: usize, x: &[u64], lambda: &[f64]) -> f64 {
        let u = t as f64 / t_last as f64;
        let mut l = self.mu(u);
        for (i, f) in self.a.iter().enumerate() {
            if t > i {
                l += f(u) * x[t - i - 1] as f64;
            }
        }
        for (k, f) in self.b.iter().enumerate() {
            if t > k {
                l += f(u) * lambda[t - k - 1];
            }
        }
        l
    }
}

/// The built-in simulation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Ar1,
    Ar2,
    Ingarch11,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AR1" => Ok(Scenario::Ar1),
            "AR2" => Ok(Scenario::Ar2),
            "INGARCH11" => Ok(Scenario::Ingarch11),
            _ => Err(Error::UnknownCase(s.to_string())),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Ar1 => "AR1",
            Scenario::Ar2 => "AR2",
            Scenario::Ingarch11 => "INGARCH11",
        })
    }
}

fn bump(height: f64) -> CoefFn {
    Arc::new(move |x: f64| height * (-(x - 0.5).powi(2) / 0.1).exp())
}

fn a1_truth() -> CoefFn {
    Arc::new(|x: f64| 0.3 * (x - 1.0).powi(2) + 0.1)
}

pub fn builtin_truth(case: Scenario) -> TruthFunctions {
    let built = match case {
        Scenario::Ar1 => TruthFunctions::new("AR1", bump(10.0), vec![a1_truth()], vec![]),
        Scenario::Ar2 => TruthFunctions::new(
            "AR2",
            bump(10.0),
            vec![a1_truth(), Arc::new(|x: f64| 0.4 * x * x + 0.1)],
            vec![],
        ),
        Scenario::Ingarch11 => TruthFunctions::new(
            "INGARCH11",
            bump(25.0),
            vec![a1_truth()],
            vec![Arc::new(|x: f64| 0.1 * x.powf(1.5) + 0.1)],
        ),
    };
    built.expect("built-in scenarios satisfy the stability constraints")
}

/// Draws `X_0, ..., X_T`. `X_0 ~ Poisson(λ_0)` with `λ_0 = lambda_init`
/// (default [`TruthFunctions::stationary_start`]); later intensities use
/// zero padding for lags before 0.
pub fn simulate<R: Rng + ?Sized>(
    truth: &TruthFunctions,
    t_last: usize,
    rng: &mut R,
    lambda_init: Option<f64>,
) -> Result<CountSeries> {
    if t_last < 10 {
        return Err(Error::InvalidParams(format!("T must be at least 10 (got {t_last})")));
    }
    let lambda0 = lambda_init.unwrap_or_else(|| truth.stationary_start());
    if !(lambda0 > 0.0) {
        return Err(Error::InvalidParams(format!("initial intensity must be positive (got {lambda0})")));
    }
    let mut x = Vec::with_capacity(t_last + 1);
    let mut lambda = Vec::with_capacity(t_last + 1);
    for t in 0..=t_last {
        let l = if t == 0 {
            lambda0
        } else {
            truth.intensity(t, t_last, &x, &lambda)
        };
        let draw = Poisson::new(l).map_err(|e| Error::InvalidParams(format!("Poisson({l}): {e}")))?;
        x.push(draw.sample(rng) as u64);
        lambda.push(l);
    }
    CountSeries::new(x)
}

/// `E[X_t]` for `t = 0..=T` via `E[X_t] = μ + Σ a_i E[X_{t-i}] + Σ b_k E[λ_{t-k}]`.
pub fn expected_means(truth: &TruthFunctions, t_last: usize, lambda_init: Option<f64>) -> Vec<f64> {
    let lambda0 = lambda_init.unwrap_or_else(|| truth.stationary_start());
    let mut means = vec![lambda0];
    for t in 1..=t_last {
        let u = t as f64 / t_last as f64;
        let mut m = truth.mu(u);
        for i in 1..=truth.ar_order() {
            if t >= i {
                m += truth.a(i, u) * means[t - i];
            }
        }
        for k in 1..=truth.ch_order() {
            if t >= k {
                m += truth.b(k, u) * means[t - k];
            }
        }
        means.push(m);
    }
    means
}
