//! Time-varying Poisson autoregression of order `p`.
//!
//! `X_t | past ~ Poisson(λ_t)` with `λ_t = μ(t/T) + Σ_i a_i(t/T) X_{t-i}`.
//! The coefficient functions are spline expansions:
//!
//! * `μ(x) = Σ_j exp(β_j) B_j(x)`, positive for any real `β`;
//! * `a_i(x) = Σ_j θ_ij M_i B_j(x)` with `θ_ij ∈ [0, 1]` and
//!   `M = softmax(δ_0, ..., δ_p)`.
//!
//! Since `M_0 > 0`, `Σ_i a_i(x) ≤ Σ_{i≥1} M_i < 1` for every `x`, so every
//! parameter value satisfies the stability constraint.

use crate::error::{Error, Result};
use crate::series::CountSeries;
use crate::splines::{BasisGrid, SplineBasis};

/// Softmax with max-subtraction. Entries equal to `-inf` get weight zero.
pub fn simplex_weights(delta: &[f64]) -> Vec<f64> {
    let max = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = delta.iter().map(|d| (d - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Smallest slack weight `M_0` treated as inside the support. Below it the
/// lag weights round to one and `Σ a_i(x) < 1` can no longer be guaranteed in
/// floating point.
pub const SLACK_FLOOR: f64 = 1e-14;

/// Whether the slack weight of `softmax(delta)` stays above [`SLACK_FLOOR`].
pub fn slack_resolved(delta: &[f64]) -> bool {
    simplex_weights(delta)[0] >= SLACK_FLOOR
}

/// Prior variances for `δ` (`c1`) and `β` (`c2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub c1: f64,
    pub c2: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { c1: 100.0, c2: 100.0 }
    }
}

impl Hyper {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "prior variances must be positive (c1={c1}, c2={c2})"
            )));
        }
        Ok(Self { c1, c2 })
    }

    pub(crate) fn log_prior(&self, beta: &[f64], delta: &[f64]) -> f64 {
        let b: f64 = beta.iter().map(|v| v * v).sum();
        let d: f64 = delta.iter().map(|v| v * v).sum();
        -b / (2.0 * self.c2) - d / (2.0 * self.c1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvbarcParams {
    pub beta: Vec<f64>,
    /// `p` rows of `K` box-constrained spline weights.
    pub theta: Vec<Vec<f64>>,
    /// Length `p + 1`; index 0 is the slack component.
    pub delta: Vec<f64>,
}

impl TvbarcParams {
    /// Starting point inside every constraint with `μ` near the sample mean.
    pub fn initial(series: &CountSeries, num_basis: usize, p: usize) -> Self {
        let level = series.mean().max(1.0).ln();
        Self {
            beta: vec![level; num_basis],
            theta: vec![vec![0.5; num_basis]; p],
            delta: vec![0.0; p + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        simplex_weights(&self.delta)
    }

    pub fn check_shape(&self, num_basis: usize) -> Result<()> {
        let p = self.order();
        if self.beta.len() != num_basis
            || self.delta.len() != p + 1
            || self.theta.iter().any(|r| r.len() != num_basis)
        {
            return Err(Error::InvalidParams(format!(
                "expected beta[{num_basis}], theta[{p}x{num_basis}], delta[{}]",
                p + 1
            )));
        }
        Ok(())
    }

    pub fn theta_in_box(&self) -> bool {
        in_unit_box(&self.theta)
    }

    /// θ inside the unit box and a resolvable slack weight.
    pub fn in_support(&self) -> bool {
        self.theta_in_box() && slack_resolved(&self.delta)
    }

    /// `(μ(x), [a_1(x), ..., a_p(x)])`.
    pub fn coefficient_at(&self, basis: &SplineBasis, x: f64) -> Result<(f64, Vec<f64>)> {
        if !self.theta_in_box() {
            return Err(Error::InvalidParams("theta entries must lie in [0, 1]".into()));
        }
        let alpha: Vec<f64> = self.beta.iter().map(|b| b.exp()).collect();
        let mu = basis.combine(&alpha, x)?;
        let m = self.weights();
        let a = self
            .theta
            .iter()
            .enumerate()
            .map(|(i, row)| Ok(m[i + 1] * basis.combine(row, x)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok((mu, a))
    }

    pub fn len_flat(num_basis: usize, p: usize) -> usize {
        num_basis + p * num_basis + p + 1
    }

    /// Layout `[β | θ row-major | δ]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        for row in &self.theta {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.delta);
        v
    }

    pub fn from_flat(flat: &[f64], num_basis: usize, p: usize) -> Self {
        assert_eq!(flat.len(), Self::len_flat(num_basis, p));
        let (beta, rest) = flat.split_at(num_basis);
        let (theta, delta) = rest.split_at(p * num_basis);
        Self {
            beta: beta.to_vec(),
            theta: theta.chunks(num_basis).map(<[f64]>::to_vec).collect(),
            delta: delta.to_vec(),
        }
    }

    pub fn flat_names(num_basis: usize, p: usize) -> Vec<String> {
        let mut names: Vec<String> = (1..=num_basis).map(|j| format!("beta_{j}")).collect();
        for i in 1..=p {
            names.extend((1..=num_basis).map(|j| format!("theta_{i}_{j}")));
        }
        names.extend((0..=p).map(|l| format!("delta_{l}")));
        names
    }
}

pub(crate) fn in_unit_box(rows: &[Vec<f64>]) -> bool {
    rows.iter().flatten().all(|v| (0.0..=1.0).contains(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvbarcGradient {
    pub beta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
}

impl TvbarcGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        TvbarcParams {
            beta: self.beta.clone(),
            theta: self.theta.clone(),
            delta: self.delta.clone(),
        }
        .to_flat()
    }
}

/// A TVBARC(p) model bound to one observed series.
#[derive(Debug, Clone)]
pub struct TvbarcModel {
    series: CountSeries,
    basis: SplineBasis,
    grid: BasisGrid,
    p: usize,
    hyper: Hyper,
}

impl TvbarcModel {
    pub fn new(series: CountSeries, basis: SplineBasis, p: usize, hyper: Hyper) -> Result<Self> {
        series.require_order(p)?;
        let grid = BasisGrid::new(&basis, series.last_index());
        Ok(Self {
            series,
            basis,
            grid,
            p,
            hyper,
        })
    }

    pub fn series(&self) -> &CountSeries {
        &self.series
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn hyper(&self) -> Hyper {
        self.hyper
    }

    pub fn num_basis(&self) -> usize {
        self.basis.num_basis()
    }

    /// First time index with a likelihood term; the sum runs over `t = p..=T`.
    pub fn first_term(&self) -> usize {
        self.p
    }

    fn alpha(params: &TvbarcParams) -> Vec<f64> {
        params.beta.iter().map(|b| b.exp()).collect()
    }

    /// `s_i(t) = Σ_j θ_ij B_j(t/T)` and `λ_t`.
    #[inline]
    fn intensity_at(&self, alpha: &[f64], params: &TvbarcParams, m: &[f64], t: usize, s: &mut [f64]) -> f64 {
        let mut lambda = self.grid.combine(alpha, t);
        for (i, row) in params.theta.iter().enumerate() {
            s[i] = self.grid.combine(row, t);
            lambda += m[i + 1] * s[i] * self.series.lagged(t, i + 1);
        }
        lambda
    }

    /// `λ_p, ..., λ_T`.
    pub fn intensities(&self, params: &TvbarcParams) -> Vec<f64> {
        let alpha = Self::alpha(params);
        let m = params.weights();
        let mut s = vec![0.0; self.p];
        (self.first_term()..=self.series.last_index())
            .map(|t| self.intensity_at(&alpha, params, &m, t, &mut s))
            .collect()
    }

    /// Per-observation Poisson log-likelihood `X_t log λ_t − λ_t` for
    /// `t = p..=T`, without the `log X_t!` constant.
    pub fn log_likelihood_terms(&self, params: &TvbarcParams) -> Vec<f64> {
        let x = self.series.values();
        self.intensities(params)
            .into_iter()
            .zip(self.first_term()..)
            .map(|(lambda, t)| poisson_term(x[t], lambda))
            .collect()
    }

    pub fn log_likelihood(&self, params: &TvbarcParams) -> f64 {
        self.log_likelihood_terms(params).into_iter().sum()
    }

    /// Log-posterior up to an additive constant; `-inf` outside the support.
    pub fn log_posterior(&self, params: &TvbarcParams) -> f64 {
        if !params.in_support() {
            return f64::NEG_INFINITY;
        }
        self.log_likelihood(params) + self.hyper.log_prior(&params.beta, &params.delta)
    }

    /// Gradient of [`Self::log_posterior`] (ascent direction).
    pub fn grad_log_posterior(&self, params: &TvbarcParams) -> TvbarcGradient {
        let k = self.num_basis();
        let p = self.p;
        let alpha = Self::alpha(params);
        let m = params.weights();
        let x = self.series.values();

        let mut d_alpha = vec![0.0; k];
        let mut d_s = vec![vec![0.0; k]; p];
        // g[i] = ∂ loglik / ∂ M_i
        let mut g = vec![0.0; p + 1];
        let mut s = vec![0.0; p];

        for t in self.first_term()..=self.series.last_index() {
            let lambda = self.intensity_at(&alpha, params, &m, t, &mut s);
            let w = x[t] as f64 / lambda - 1.0;
            self.grid.scatter(t, w, &mut d_alpha);
            for i in 0..p {
                let lag = self.series.lagged(t, i + 1);
                if lag != 0.0 {
                    self.grid.scatter(t, lag * w, &mut d_s[i]);
                    g[i + 1] += s[i] * lag * w;
                }
            }
        }

        let beta = d_alpha
            .iter()
            .zip(&alpha)
            .zip(&params.beta)
            .map(|((d, a), b)| d * a - b / self.hyper.c2)
            .collect();
        let theta = d_s
            .into_iter()
            .enumerate()
            .map(|(i, row)| row.into_iter().map(|v| v * m[i + 1]).collect())
            .collect();
        let delta = softmax_chain(&m, &g, &params.delta, self.hyper.c1);
        TvbarcGradient { beta, theta, delta }
    }
}

/// `∂/∂δ_k` of `f(M(δ)) − Σ δ²/(2 c1)` given `g_i = ∂f/∂M_i`.
pub(crate) fn softmax_chain(m: &[f64], g: &[f64], delta: &[f64], c1: f64) -> Vec<f64> {
    let mean_g: f64 = m.iter().zip(g).map(|(mi, gi)| mi * gi).sum();
    m.iter()
        .zip(g)
        .zip(delta)
        .map(|((mk, gk), dk)| mk * (gk - mean_g) - dk / c1)
        .collect()
}

#[inline]
pub(crate) fn poisson_term(x: u64, lambda: f64) -> f64 {
    if x == 0 {
        -lambda
    } else {
        x as f64 * lambda.ln() - lambda
    }
}
