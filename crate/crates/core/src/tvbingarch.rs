//! Time-varying Poisson INGARCH(p, q).
//!
//! `λ_t = μ(t/T) + Σ_i a_i(t/T) X_{t-i} + Σ_k b_k(t/T) λ_{t-k}` with
//! `λ_0` a free parameter and zero padding for negative indices. The
//! recursive coefficients are `b_k(x) = Σ_j η_kj M_{p+k} B_j(x)`, sharing the
//! softmax weights `M = softmax(δ_0, ..., δ_{p+q})` with the `a_i`.

use crate::error::{Error, Result};
use crate::series::CountSeries;
use crate::splines::{BasisGrid, SplineBasis};
use crate::tvbarc::{in_unit_box, poisson_term, simplex_weights, slack_resolved, softmax_chain, Hyper};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperIngarch {
    pub c1: f64,
    pub c2: f64,
    /// Shape and scale of the inverse-gamma prior on `λ_0`.
    pub d1: f64,
}

impl Default for HyperIngarch {
    fn default() -> Self {
        Self {
            c1: 100.0,
            c2: 100.0,
            d1: 0.1,
        }
    }
}

impl HyperIngarch {
    pub fn new(c1: f64, c2: f64, d1: f64) -> Result<Self> {
        Hyper::new(c1, c2)?;
        if !(d1 > 0.0) {
            return Err(Error::InvalidParams(format!("d1 must be positive (got {d1})")));
        }
        Ok(Self { c1, c2, d1 })
    }

    fn gaussian(&self) -> Hyper {
        Hyper {
            c1: self.c1,
            c2: self.c2,
        }
    }

    /// Inverse-gamma(d1, d1) log-density of `λ_0`, up to a constant.
    pub fn log_prior_lambda0(&self, lambda0: f64) -> f64 {
        -(self.d1 + 1.0) * lambda0.ln() - self.d1 / lambda0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvbingarchParams {
    pub beta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    /// Length `p + q + 1`; index 0 is the slack component.
    pub delta: Vec<f64>,
    pub lambda0: f64,
}

impl TvbingarchParams {
    pub fn initial(series: &CountSeries, num_basis: usize, p: usize, q: usize) -> Self {
        let level = series.mean().max(1.0);
        Self {
            beta: vec![level.ln(); num_basis],
            theta: vec![vec![0.5; num_basis]; p],
            eta: vec![vec![0.5; num_basis]; q],
            delta: vec![0.0; p + q + 1],
            lambda0: (series.values()[0] as f64).max(1.0),
        }
    }

    pub fn ar_order(&self) -> usize {
        self.theta.len()
    }

    pub fn ch_order(&self) -> usize {
        self.eta.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        simplex_weights(&self.delta)
    }

    pub fn in_support(&self) -> bool {
        in_unit_box(&self.theta)
            && in_unit_box(&self.eta)
            && slack_resolved(&self.delta)
            && self.lambda0 > 0.0
            && self.lambda0.is_finite()
    }

    pub fn check_shape(&self, num_basis: usize) -> Result<()> {
        let (p, q) = (self.ar_order(), self.ch_order());
        if self.beta.len() != num_basis
            || self.delta.len() != p + q + 1
            || self.theta.iter().chain(&self.eta).any(|r| r.len() != num_basis)
        {
            return Err(Error::InvalidParams(format!(
                "expected beta[{num_basis}], theta[{p}x{num_basis}], eta[{q}x{num_basis}], delta[{}]",
                p + q + 1
            )));
        }
        Ok(())
    }

    /// `(μ(x), [a_i(x)], [b_k(x)])`.
    pub fn coefficient_at(&self, basis: &SplineBasis, x: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        if !(in_unit_box(&self.theta) && in_unit_box(&self.eta)) {
            return Err(Error::InvalidParams("theta and eta entries must lie in [0, 1]".into()));
        }
        let alpha: Vec<f64> = self.beta.iter().map(|b| b.exp()).collect();
        let mu = basis.combine(&alpha, x)?;
        let m = self.weights();
        let p = self.ar_order();
        let a = self
            .theta
            .iter()
            .enumerate()
            .map(|(i, row)| Ok(m[i + 1] * basis.combine(row, x)?))
            .collect::<Result<Vec<f64>>>()?;
        let b = self
            .eta
            .iter()
            .enumerate()
            .map(|(k, row)| Ok(m[p + k + 1] * basis.combine(row, x)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok((mu, a, b))
    }

    pub fn len_flat(num_basis: usize, p: usize, q: usize) -> usize {
        num_basis * (1 + p + q) + p + q + 2
    }

    /// Layout `[β | θ | η | δ | log λ_0]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        for row in self.theta.iter().chain(&self.eta) {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.delta);
        v.push(self.lambda0.ln());
        v
    }

    pub fn from_flat(flat: &[f64], num_basis: usize, p: usize, q: usize) -> Self {
        assert_eq!(flat.len(), Self::len_flat(num_basis, p, q));
        let k = num_basis;
        let (beta, rest) = flat.split_at(k);
        let (theta, rest) = rest.split_at(p * k);
        let (eta, rest) = rest.split_at(q * k);
        let (delta, rest) = rest.split_at(p + q + 1);
        Self {
            beta: beta.to_vec(),
            theta: theta.chunks(k).map(<[f64]>::to_vec).collect(),
            eta: eta.chunks(k).map(<[f64]>::to_vec).collect(),
            delta: delta.to_vec(),
            lambda0: rest[0].exp(),
        }
    }

    pub fn flat_names(num_basis: usize, p: usize, q: usize) -> Vec<String> {
        let mut names: Vec<String> = (1..=num_basis).map(|j| format!("beta_{j}")).collect();
        for i in 1..=p {
            names.extend((1..=num_basis).map(|j| format!("theta_{i}_{j}")));
        }
        for k in 1..=q {
            names.extend((1..=num_basis).map(|j| format!("eta_{k}_{j}")));
        }
        names.extend((0..=p + q).map(|l| format!("delta_{l}")));
        names.push("log_lambda0".into());
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvbingarchGradient {
    pub beta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    /// Derivative with respect to `λ_0` on its natural scale.
    pub lambda0: f64,
}

/// How the gradient handles the dependence of past intensities on the
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Past intensities enter as fixed data and `∂/∂λ_0` is a central
    /// difference of the exact log-posterior.
    #[default]
    Frozen,
    /// Full derivative through the intensity recursion (reverse sweep).
    Exact,
}

#[derive(Debug, Clone)]
pub struct TvbingarchModel {
    series: CountSeries,
    basis: SplineBasis,
    grid: BasisGrid,
    p: usize,
    q: usize,
    hyper: HyperIngarch,
    mode: GradientMode,
}

/// Coefficient paths on the observation grid for one parameter value.
struct Paths {
    m: Vec<f64>,
    /// `s[i][t] = Σ_j θ_ij B_j(t/T)`
    s: Vec<Vec<f64>>,
    /// `r[k][t] = Σ_j η_kj B_j(t/T)`
    r: Vec<Vec<f64>>,
    lambda: Vec<f64>,
}

impl TvbingarchModel {
    pub fn new(series: CountSeries, basis: SplineBasis, p: usize, q: usize, hyper: HyperIngarch) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParams("INGARCH order q must be at least 1".into()));
        }
        series.require_order(p.max(1))?;
        let grid = BasisGrid::new(&basis, series.last_index());
        Ok(Self {
            series,
            basis,
            grid,
            p,
            q,
            hyper,
            mode: GradientMode::default(),
        })
    }

    pub fn with_gradient_mode(mut self, mode: GradientMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn gradient_mode(&self) -> GradientMode {
        self.mode
    }

    pub fn series(&self) -> &CountSeries {
        &self.series
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn hyper(&self) -> HyperIngarch {
        self.hyper
    }

    pub fn num_basis(&self) -> usize {
        self.basis.num_basis()
    }

    /// Poisson terms run over `t = 1..=T`; `λ_0` only seeds the recursion.
    pub fn first_term(&self) -> usize {
        1
    }

    fn paths(&self, params: &TvbingarchParams) -> Paths {
        let n = self.series.len();
        let alpha: Vec<f64> = params.beta.iter().map(|b| b.exp()).collect();
        let m = params.weights();
        let s: Vec<Vec<f64>> = params
            .theta
            .iter()
            .map(|row| (0..n).map(|t| self.grid.combine(row, t)).collect())
            .collect();
        let r: Vec<Vec<f64>> = params
            .eta
            .iter()
            .map(|row| (0..n).map(|t| self.grid.combine(row, t)).collect())
            .collect();
        let mut lambda = Vec::with_capacity(n);
        lambda.push(params.lambda0);
        for t in 1..n {
            let mut l = self.grid.combine(&alpha, t);
            for i in 0..self.p {
                l += m[i + 1] * s[i][t] * self.series.lagged(t, i + 1);
            }
            for k in 0..self.q {
                if k < t {
                    l += m[self.p + k + 1] * r[k][t] * lambda[t - k - 1];
                }
            }
            lambda.push(l);
        }
        Paths { m, s, r, lambda }
    }

    /// `λ_0, ..., λ_T`.
    pub fn intensities_recursive(&self, params: &TvbingarchParams) -> Result<Vec<f64>> {
        if !(params.lambda0 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "lambda0 must be positive (got {})",
                params.lambda0
            )));
        }
        Ok(self.paths(params).lambda)
    }

    /// Poisson log-likelihood terms for `t = 1..=T`.
    pub fn log_likelihood_terms(&self, params: &TvbingarchParams) -> Vec<f64> {
        let x = self.series.values();
        self.paths(params)
            .lambda
            .iter()
            .enumerate()
            .skip(self.first_term())
            .map(|(t, &l)| poisson_term(x[t], l))
            .collect()
    }

    pub fn log_likelihood(&self, params: &TvbingarchParams) -> f64 {
        self.log_likelihood_terms(params).into_iter().sum()
    }

    /// Log-posterior up to a constant; `-inf` outside the θ/η boxes or for
    /// `λ_0 ≤ 0`.
    pub fn log_posterior(&self, params: &TvbingarchParams) -> f64 {
        if !params.in_support() {
            return f64::NEG_INFINITY;
        }
        self.log_likelihood(params)
            + self.hyper.gaussian().log_prior(&params.beta, &params.delta)
            + self.hyper.log_prior_lambda0(params.lambda0)
    }

    /// Step for the central difference in `λ_0`.
    pub fn lambda0_step(lambda0: f64) -> f64 {
        let h = (1e-4f64).max(1e-4 * lambda0);
        // keep λ_0 − h inside the support for very small λ_0
        h.min(0.5 * lambda0)
    }

    fn numeric_dlambda0(&self, params: &TvbingarchParams) -> f64 {
        let h = Self::lambda0_step(params.lambda0);
        let mut up = params.clone();
        up.lambda0 += h;
        let mut down = params.clone();
        down.lambda0 -= h;
        (self.log_posterior(&up) - self.log_posterior(&down)) / (2.0 * h)
    }

    /// Gradient of the log-posterior (ascent direction) under the model's
    /// [`GradientMode`].
    pub fn grad_log_posterior(&self, params: &TvbingarchParams) -> TvbingarchGradient {
        self.grad_with_mode(params, self.mode)
    }

    pub fn grad_with_mode(&self, params: &TvbingarchParams, mode: GradientMode) -> TvbingarchGradient {
        let (p, q) = (self.p, self.q);
        let k = self.num_basis();
        let x = self.series.values();
        let paths = self.paths(params);
        let lambda = &paths.lambda;
        let m = &paths.m;
        let n = lambda.len();

        // adj[t] = ∂ loglik / ∂ λ_t, either locally (frozen) or through the recursion.
        let mut adj: Vec<f64> = (0..n)
            .map(|t| if t == 0 { 0.0 } else { x[t] as f64 / lambda[t] - 1.0 })
            .collect();
        if mode == GradientMode::Exact {
            for t in (0..n).rev() {
                let mut carry = 0.0;
                for kk in 0..q {
                    let later = t + kk + 1;
                    if later < n {
                        carry += m[p + kk + 1] * paths.r[kk][later] * adj[later];
                    }
                }
                adj[t] += carry;
            }
        }

        let mut d_alpha = vec![0.0; k];
        let mut d_s = vec![vec![0.0; k]; p];
        let mut d_r = vec![vec![0.0; k]; q];
        let mut g = vec![0.0; p + q + 1];
        for t in 1..n {
            let w = adj[t];
            self.grid.scatter(t, w, &mut d_alpha);
            for i in 0..p {
                let lag = self.series.lagged(t, i + 1);
                if lag != 0.0 {
                    self.grid.scatter(t, lag * w, &mut d_s[i]);
                    g[i + 1] += paths.s[i][t] * lag * w;
                }
            }
            for kk in 0..q {
                if kk < t {
                    let lag = lambda[t - kk - 1];
                    self.grid.scatter(t, lag * w, &mut d_r[kk]);
                    g[p + kk + 1] += paths.r[kk][t] * lag * w;
                }
            }
        }

        let beta = d_alpha
            .iter()
            .zip(&params.beta)
            .map(|(d, b)| d * b.exp() - b / self.hyper.c2)
            .collect();
        let theta = d_s
            .into_iter()
            .enumerate()
            .map(|(i, row)| row.into_iter().map(|v| v * m[i + 1]).collect())
            .collect();
        let eta = d_r
            .into_iter()
            .enumerate()
            .map(|(kk, row)| row.into_iter().map(|v| v * m[p + kk + 1]).collect())
            .collect();
        let delta = softmax_chain(m, &g, &params.delta, self.hyper.c1);
        let lambda0 = match mode {
            GradientMode::Frozen => self.numeric_dlambda0(params),
            GradientMode::Exact => {
                let l0 = params.lambda0;
                adj[0] - (self.hyper.d1 + 1.0) / l0 + self.hyper.d1 / (l0 * l0)
            }
        };
        TvbingarchGradient {
            beta,
            theta,
            eta,
            delta,
            lambda0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvbarc::{TvbarcModel, TvbarcParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, t_last: usize, p: usize, q: usize) -> (TvbingarchModel, TvbingarchParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 6;
        let values: Vec<u64> = (0..=t_last).map(|_| rng.gen_range(0..30)).collect();
        let model = TvbingarchModel::new(
            CountSeries::new(values).unwrap(),
            SplineBasis::new(k, 3).unwrap(),
            p,
            q,
            HyperIngarch::default(),
        )
        .unwrap();
        let params = TvbingarchParams {
            beta: (0..k).map(|_| rng.gen_range(0.0..2.5)).collect(),
            theta: (0..p).map(|_| (0..k).map(|_| rng.gen_range(0.05..0.95)).collect()).collect(),
            eta: (0..q).map(|_| (0..k).map(|_| rng.gen_range(0.05..0.95)).collect()).collect(),
            delta: (0..=p + q).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            lambda0: rng.gen_range(1.0..20.0),
        };
        (model, params)
    }

    #[test]
    fn fixed_point_recursion() {
        // a ≡ 0 through θ ≡ 0; b ≡ 0.5 with M_2 = 0.5 and η ≡ 1; μ ≡ 1.
        let model = TvbingarchModel::new(
            CountSeries::new(vec![3, 7, 1, 4]).unwrap(),
            SplineBasis::new(4, 3).unwrap(),
            1,
            1,
            HyperIngarch::default(),
        )
        .unwrap();
        let params = TvbingarchParams {
            beta: vec![0.0; 4],
            theta: vec![vec![0.0; 4]],
            eta: vec![vec![1.0; 4]],
            delta: vec![0.0, 0.0, f64::ln(2.0)],
            lambda0: 2.0,
        };
        assert!((params.weights()[2] - 0.5).abs() < 1e-15);
        let lam = model.intensities_recursive(&params).unwrap();
        for l in lam {
            assert!((l - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn nonpositive_lambda0_rejected() {
        let (model, mut params) = random_instance(1, 10, 1, 1);
        params.lambda0 = 0.0;
        assert!(model.intensities_recursive(&params).is_err());
        assert_eq!(model.log_posterior(&params), f64::NEG_INFINITY);
        params.lambda0 = -1.0;
        assert_eq!(model.log_posterior(&params), f64::NEG_INFINITY);
    }

    #[test]
    fn q_zero_rejected() {
        let s = CountSeries::new(vec![1, 2, 3]).unwrap();
        assert!(TvbingarchModel::new(s, SplineBasis::new(4, 3).unwrap(), 1, 0, HyperIngarch::default()).is_err());
    }

    #[test]
    fn recursion_matches_step_by_step_reference() {
        for seed in 0..20 {
            let (model, params) = random_instance(seed, 5 + seed as usize, 1 + (seed as usize % 2), 1 + (seed as usize % 3 == 0) as usize);
            let basis = model.basis().clone();
            let x = model.series().values();
            let t_last = model.series().last_index();
            let lam = model.intensities_recursive(&params).unwrap();
            let mut reference = vec![params.lambda0];
            for t in 1..=t_last {
                let (mu, a, b) = params.coefficient_at(&basis, t as f64 / t_last as f64).unwrap();
                let mut l = mu;
                for (i, ai) in a.iter().enumerate() {
                    if t > i {
                        l += ai * x[t - i - 1] as f64;
                    }
                }
                for (kk, bk) in b.iter().enumerate() {
                    if t > kk {
                        l += bk * reference[t - kk - 1];
                    }
                }
                reference.push(l);
            }
            for (a, b) in lam.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0), "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn lambda0_prior_at_one() {
        assert!((HyperIngarch::default().log_prior_lambda0(1.0) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn log_posterior_matches_naive_sum() {
        let (model, params) = random_instance(3, 50, 1, 1);
        let basis = model.basis().clone();
        let x = model.series().values();
        let mut prev = params.lambda0;
        let mut total = 0.0;
        for t in 1..=50usize {
            let (mu, a, b) = params.coefficient_at(&basis, t as f64 / 50.0).unwrap();
            let l = mu + a[0] * x[t - 1] as f64 + b[0] * prev;
            total += -l + x[t] as f64 * l.ln();
            prev = l;
        }
        total -= params.beta.iter().map(|v| v * v).sum::<f64>() / 200.0;
        total -= params.delta.iter().map(|v| v * v).sum::<f64>() / 200.0;
        total += -1.1 * params.lambda0.ln() - 0.1 / params.lambda0;
        assert!((model.log_posterior(&params) - total).abs() < 1e-10);
    }

    fn forced_pair() -> (TvbarcModel, TvbarcParams, TvbingarchModel, TvbingarchParams) {
        let (ing, mut ip) = random_instance(8, 60, 1, 1);
        ip.eta = vec![vec![0.0; 6]];
        ip.delta[2] = f64::NEG_INFINITY;
        let ar = TvbarcModel::new(ing.series().clone(), ing.basis().clone(), 1, Hyper::default()).unwrap();
        let ap = TvbarcParams {
            beta: ip.beta.clone(),
            theta: ip.theta.clone(),
            delta: ip.delta[..2].to_vec(),
        };
        (ar, ap, ing, ip)
    }

    #[test]
    fn degenerate_reduction_to_tvbarc() {
        let (ar, ap, ing, ip) = forced_pair();
        assert_eq!(ar.log_likelihood_terms(&ap), ing.log_likelihood_terms(&ip));
        let gb = ar.grad_log_posterior(&ap).beta;
        let gi = ing.grad_log_posterior(&ip).beta;
        for (a, b) in gb.iter().zip(&gi) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn likelihood_is_delta_shift_invariant() {
        let (model, params) = random_instance(4, 40, 1, 1);
        let mut shifted = params.clone();
        shifted.delta.iter_mut().for_each(|d| *d -= 2.5);
        let a = model.log_likelihood(&params);
        let b = model.log_likelihood(&shifted);
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn exact_and_frozen_agree_without_recursion_feedback() {
        // With q = 1 and η ≡ 0 the recursion carries nothing back, so the
        // only differences are the λ_0 derivative routes.
        let (model, mut params) = random_instance(6, 30, 1, 1);
        params.eta = vec![vec![0.0; 6]];
        let f = model.grad_with_mode(&params, GradientMode::Frozen);
        let e = model.grad_with_mode(&params, GradientMode::Exact);
        for (a, b) in f.beta.iter().zip(&e.beta) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
        assert!((f.lambda0 - e.lambda0).abs() < 1e-6 * e.lambda0.abs().max(1.0));
    }

    #[test]
    fn flat_roundtrip() {
        let (_, params) = random_instance(2, 10, 2, 1);
        let flat = params.to_flat();
        assert_eq!(flat.len(), TvbingarchParams::len_flat(6, 2, 1));
        let back = TvbingarchParams::from_flat(&flat, 6, 2, 1);
        assert_eq!(back.theta, params.theta);
        assert!((back.lambda0 - params.lambda0).abs() < 1e-12 * params.lambda0);
        assert_eq!(TvbingarchParams::flat_names(6, 2, 1).len(), flat.len());
    }
}
