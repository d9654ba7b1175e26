//! Sampler-facing view of the two count models over flat parameter vectors.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::hmc::{Block, Bound, Target};
use crate::series::CountSeries;
use crate::splines::SplineBasis;
use crate::tvbarc::{TvbarcModel, TvbarcParams};
use crate::tvbingarch::{TvbingarchModel, TvbingarchParams};

impl Target for TvbarcModel {
    fn dim(&self) -> usize {
        TvbarcParams::len_flat(self.num_basis(), self.order())
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_posterior(&TvbarcParams::from_flat(x, self.num_basis(), self.order()))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad_log_posterior(&TvbarcParams::from_flat(x, self.num_basis(), self.order()))
            .to_flat()
    }

    /// β, θ and δ are updated as separate blocks; θ is absent when `p = 0`.
    fn blocks(&self) -> Vec<Block> {
        let k = self.num_basis();
        let p = self.order();
        let mut blocks = vec![Block::new("beta", 0..k)];
        if p > 0 {
            blocks.push(Block::new("theta", k..k + p * k));
        }
        blocks.push(Block::new("delta", k + p * k..k + p * k + p + 1));
        blocks
    }

    fn bounds(&self) -> Vec<Bound> {
        let k = self.num_basis();
        let p = self.order();
        let mut b = vec![None; self.dim()];
        for v in &mut b[k..k + p * k] {
            *v = Some((0.0, 1.0));
        }
        b
    }

    fn names(&self) -> Vec<String> {
        TvbarcParams::flat_names(self.num_basis(), self.order())
    }
}

impl TvbingarchModel {
    fn unflatten(&self, x: &[f64]) -> TvbingarchParams {
        let (p, q) = self.orders();
        TvbingarchParams::from_flat(x, self.num_basis(), p, q)
    }

    fn box_range(&self) -> Range<usize> {
        let (p, q) = self.orders();
        let k = self.num_basis();
        k..k + (p + q) * k
    }
}

/// The last coordinate is `u = log λ_0`; the density includes the
/// log-Jacobian `u` of that change of variables.
impl Target for TvbingarchModel {
    fn dim(&self) -> usize {
        let (p, q) = self.orders();
        TvbingarchParams::len_flat(self.num_basis(), p, q)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let u = *x.last().expect("non-empty state");
        self.log_posterior(&self.unflatten(x)) + u
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let params = self.unflatten(x);
        let g = self.grad_log_posterior(&params);
        let mut flat = g.beta;
        for row in g.theta.into_iter().chain(g.eta) {
            flat.extend(row);
        }
        flat.extend(g.delta);
        flat.push(params.lambda0 * g.lambda0 + 1.0);
        flat
    }

    /// β alone, then everything that shapes the `a_i`, the `b_k` and `λ_0`
    /// jointly.
    fn blocks(&self) -> Vec<Block> {
        let k = self.num_basis();
        vec![Block::new("beta", 0..k), Block::new("joint", k..self.dim())]
    }

    fn bounds(&self) -> Vec<Bound> {
        let mut b = vec![None; self.dim()];
        for v in &mut b[self.box_range()] {
            *v = Some((0.0, 1.0));
        }
        b
    }

    fn names(&self) -> Vec<String> {
        let (p, q) = self.orders();
        TvbingarchParams::flat_names(self.num_basis(), p, q)
    }
}

/// A coefficient function of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Mu,
    /// `a_i`, 1-based.
    Ar(usize),
    /// `b_k`, 1-based.
    Ch(usize),
}

impl Selector {
    pub fn label(&self) -> String {
        match self {
            Selector::Mu => "mu".into(),
            Selector::Ar(i) => format!("a{i}"),
            Selector::Ch(k) => format!("b{k}"),
        }
    }
}

impl std::str::FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Selector(s.to_string());
        if s == "mu" {
            return Ok(Selector::Mu);
        }
        let (kind, idx) = s.split_at(1.min(s.len()));
        let idx: usize = idx.parse().map_err(|_| bad())?;
        match kind {
            "a" if idx >= 1 => Ok(Selector::Ar(idx)),
            "b" if idx >= 1 => Ok(Selector::Ch(idx)),
            _ => Err(bad()),
        }
    }
}

/// Either model, bound to its data.
#[derive(Debug, Clone)]
pub enum FitModel {
    Tvbarc(TvbarcModel),
    Tvbingarch(TvbingarchModel),
}

impl FitModel {
    pub fn series(&self) -> &CountSeries {
        match self {
            FitModel::Tvbarc(m) => m.series(),
            FitModel::Tvbingarch(m) => m.series(),
        }
    }

    pub fn basis(&self) -> &SplineBasis {
        match self {
            FitModel::Tvbarc(m) => m.basis(),
            FitModel::Tvbingarch(m) => m.basis(),
        }
    }

    /// `(p, q)`.
    pub fn orders(&self) -> (usize, usize) {
        match self {
            FitModel::Tvbarc(m) => (m.order(), 0),
            FitModel::Tvbingarch(m) => m.orders(),
        }
    }

    pub fn first_term(&self) -> usize {
        match self {
            FitModel::Tvbarc(m) => m.first_term(),
            FitModel::Tvbingarch(m) => m.first_term(),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let k = self.basis().num_basis();
        match self {
            FitModel::Tvbarc(m) => TvbarcParams::initial(m.series(), k, m.order()).to_flat(),
            FitModel::Tvbingarch(m) => {
                let (p, q) = m.orders();
                TvbingarchParams::initial(m.series(), k, p, q).to_flat()
            }
        }
    }

    pub fn selectors(&self) -> Vec<Selector> {
        let (p, q) = self.orders();
        std::iter::once(Selector::Mu)
            .chain((1..=p).map(Selector::Ar))
            .chain((1..=q).map(Selector::Ch))
            .collect()
    }

    pub fn check_selector(&self, selector: Selector) -> Result<()> {
        let (p, q) = self.orders();
        let ok = match selector {
            Selector::Mu => true,
            Selector::Ar(i) => (1..=p).contains(&i),
            Selector::Ch(k) => (1..=q).contains(&k),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Selector(selector.label()))
        }
    }

    /// Fitted intensities for the likelihood terms `t = first_term()..=T`.
    pub fn fitted_intensities(&self, flat: &[f64]) -> Vec<f64> {
        match self {
            FitModel::Tvbarc(m) => m.intensities(&TvbarcParams::from_flat(flat, m.num_basis(), m.order())),
            FitModel::Tvbingarch(m) => {
                let lam = m.intensities_recursive(&m.unflatten(flat)).expect("lambda0 = exp(u) > 0");
                lam[m.first_term()..].to_vec()
            }
        }
    }

    /// `(Σ_i a_i(x) + Σ_k b_k(x), μ(x))` for a draw.
    pub fn stability_profile(&self, flat: &[f64], x: f64) -> Result<(f64, f64)> {
        match self {
            FitModel::Tvbarc(m) => {
                let (mu, a) = TvbarcParams::from_flat(flat, m.num_basis(), m.order()).coefficient_at(m.basis(), x)?;
                Ok((a.iter().sum(), mu))
            }
            FitModel::Tvbingarch(m) => {
                let (mu, a, b) = m.unflatten(flat).coefficient_at(m.basis(), x)?;
                Ok((a.iter().chain(&b).sum(), mu))
            }
        }
    }

    pub fn weights(&self, flat: &[f64]) -> Vec<f64> {
        match self {
            FitModel::Tvbarc(m) => TvbarcParams::from_flat(flat, m.num_basis(), m.order()).weights(),
            FitModel::Tvbingarch(m) => m.unflatten(flat).weights(),
        }
    }

    /// Value of one coefficient function at `x` for a flat draw.
    pub fn coefficient(&self, flat: &[f64], selector: Selector, x: f64) -> Result<f64> {
        self.check_selector(selector)?;
        let (mu, a, b) = match self {
            FitModel::Tvbarc(m) => {
                let (mu, a) = TvbarcParams::from_flat(flat, m.num_basis(), m.order()).coefficient_at(m.basis(), x)?;
                (mu, a, Vec::new())
            }
            FitModel::Tvbingarch(m) => m.unflatten(flat).coefficient_at(m.basis(), x)?,
        };
        Ok(match selector {
            Selector::Mu => mu,
            Selector::Ar(i) => a[i - 1],
            Selector::Ch(k) => b[k - 1],
        })
    }

    pub fn as_target(&self) -> &(dyn Target + Sync) {
        match self {
            FitModel::Tvbarc(m) => m,
            FitModel::Tvbingarch(m) => m,
        }
    }
}
