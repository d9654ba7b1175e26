//! AMSE, pointwise credible bands, coverage and a constant-coefficient
//! Poisson autoregression baseline.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hmc::Chain;
use crate::model::{FitModel, Selector};
use crate::series::CountSeries;

/// `(1/n) Σ_t (X_t − λ_t)^2` over aligned observations and intensities.
pub fn mean_squared_error(observed: &[u64], intensities: &[f64]) -> f64 {
    debug_assert_eq!(observed.len(), intensities.len());
    let total: f64 = observed
        .iter()
        .zip(intensities)
        .map(|(&x, l)| (x as f64 - l).powi(2))
        .sum();
    total / observed.len() as f64
}

/// Posterior mean over post-burn-in draws of the per-draw in-sample MSE,
/// recomputing each draw's intensity path.
pub fn amse(chain: &Chain, model: &FitModel) -> Result<f64> {
    let draws = chain.post_burn_in();
    if draws.is_empty() {
        return Err(Error::NoDraws);
    }
    let observed = &model.series().values()[model.first_term()..];
    let total: f64 = draws
        .iter()
        .map(|d| mean_squared_error(observed, &model.fitted_intensities(d)))
        .sum();
    Ok(total / draws.len() as f64)
}

/// `t/T` for `t = 1..=T`.
pub fn observation_grid(t_last: usize) -> Vec<f64> {
    (1..=t_last).map(|t| t as f64 / t_last as f64).collect()
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n − 1) q`). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibleBand {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

impl CredibleBand {
    /// Builds a band from per-grid-point samples.
    pub fn from_samples(grid: Vec<f64>, samples: Vec<Vec<f64>>, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParams(format!("band level must lie in (0, 1) (got {level})")));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("band grid must be strictly increasing".into()));
        }
        if samples.iter().any(Vec::is_empty) || samples.len() != grid.len() {
            return Err(Error::NoDraws);
        }
        let tail = (1.0 - level) / 2.0;
        let mut lower = Vec::with_capacity(grid.len());
        let mut mean = Vec::with_capacity(grid.len());
        let mut upper = Vec::with_capacity(grid.len());
        for mut s in samples {
            s.sort_by(f64::total_cmp);
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let lo = quantile(&s, tail);
            let hi = quantile(&s, 1.0 - tail);
            // Rounding in the mean can leave it a hair outside a degenerate band.
            lower.push(lo.min(m));
            mean.push(m);
            upper.push(hi.max(m));
        }
        Ok(Self {
            grid,
            lower,
            mean,
            upper,
            level,
        })
    }

    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    pub fn median_width(&self) -> f64 {
        let mut w = self.widths();
        w.sort_by(f64::total_cmp);
        quantile(&w, 0.5)
    }

    /// `x,lower,mean,upper` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,lower,mean,upper\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.grid[i], self.lower[i], self.mean[i], self.upper[i]
            ));
        }
        out
    }
}

/// Pointwise band for one coefficient function over the post-burn-in draws.
pub fn credible_band(chain: &Chain, model: &FitModel, selector: Selector, grid: &[f64], level: f64) -> Result<CredibleBand> {
    model.check_selector(selector)?;
    let draws = chain.post_burn_in();
    if draws.is_empty() {
        return Err(Error::NoDraws);
    }
    let mut samples = vec![Vec::with_capacity(draws.len()); grid.len()];
    for d in draws {
        for (g, &x) in grid.iter().enumerate() {
            samples[g].push(model.coefficient(d, selector, x)?);
        }
    }
    CredibleBand::from_samples(grid.to_vec(), samples, level)
}

/// Fraction of grid points where the band contains `truth(x)`.
pub fn coverage(band: &CredibleBand, truth: impl Fn(f64) -> f64) -> f64 {
    let hits = band
        .grid
        .iter()
        .zip(band.lower.iter().zip(&band.upper))
        .filter(|(&x, (&lo, &hi))| {
            let v = truth(x);
            lo <= v && v <= hi
        })
        .count();
    hits as f64 / band.grid.len() as f64
}

/// Maximum-likelihood fit of the time-constant Poisson autoregression
/// `λ_t = μ + Σ_i a_i X_{t-i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantBaseline {
    pub mu: f64,
    pub a: Vec<f64>,
    pub log_likelihood: f64,
    /// In-sample MSE of the fitted intensities over `t = p..=T`.
    pub amse: f64,
    pub iterations: usize,
    pub converged: bool,
}

const BASELINE_MAX_ITER: usize = 500;
const MU_FLOOR: f64 = 1e-8;
const SUM_CEILING: f64 = 1.0 - 1e-8;

struct Design<'a> {
    x: &'a [u64],
    p: usize,
}

impl Design<'_> {
    fn lags(&self, t: usize) -> impl Iterator<Item = f64> + '_ {
        (1..=self.p).map(move |i| self.x[t - i] as f64)
    }

    fn intensity(&self, theta: &[f64], t: usize) -> f64 {
        theta[0] + self.lags(t).zip(&theta[1..]).map(|(v, a)| v * a).sum::<f64>()
    }

    fn intensities(&self, theta: &[f64]) -> Vec<f64> {
        (self.p..self.x.len()).map(|t| self.intensity(theta, t)).collect()
    }

    fn loglik(&self, theta: &[f64]) -> f64 {
        (self.p..self.x.len())
            .map(|t| {
                let l = self.intensity(theta, t);
                let x = self.x[t] as f64;
                if x == 0.0 {
                    -l
                } else {
                    x * l.ln() - l
                }
            })
            .sum()
    }

    fn grad_hess(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.p + 1;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for t in self.p..self.x.len() {
            let l = self.intensity(theta, t);
            let x = self.x[t] as f64;
            let z: Vec<f64> = std::iter::once(1.0).chain(self.lags(t)).collect();
            let w = x / l - 1.0;
            let c = x / (l * l);
            for i in 0..n {
                g[i] += w * z[i];
                for j in 0..n {
                    h[(i, j)] -= c * z[i] * z[j];
                }
            }
        }
        (g, h)
    }
}

/// Euclidean projection onto `{a ≥ 0, Σ a ≤ cap}`.
fn project_capped_simplex(a: &mut [f64], cap: f64) {
    let clipped: f64 = a.iter().map(|v| v.max(0.0)).sum();
    if clipped <= cap {
        a.iter_mut().for_each(|v| *v = v.max(0.0));
        return;
    }
    let mut sorted = a.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - cap) / (k + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    a.iter_mut().for_each(|v| *v = (*v - shift).max(0.0));
}

fn project(theta: &mut [f64]) {
    theta[0] = theta[0].max(MU_FLOOR);
    project_capped_simplex(&mut theta[1..], SUM_CEILING);
}

/// Projected Newton ascent with Armijo backtracking; falls back to a
/// projected gradient step when the Newton direction makes no progress.
pub fn fit_constant_baseline(series: &CountSeries, p: usize) -> Result<ConstantBaseline> {
    series.require_order(p)?;
    let design = Design { x: series.values(), p };
    let level = series.values()[p..].iter().map(|&v| v as f64).sum::<f64>() / (series.len() - p) as f64;
    let mut theta: Vec<f64> = std::iter::once((0.8 * level).max(0.1))
        .chain(std::iter::repeat(0.2 / p.max(1) as f64).take(p))
        .collect();
    project(&mut theta);
    let mut ll = design.loglik(&theta);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < BASELINE_MAX_ITER {
        iterations += 1;
        let (g, h) = design.grad_hess(&theta);
        let n = theta.len();
        let ridge = DMatrix::<f64>::identity(n, n) * 1e-10;
        let newton = (-&h + ridge).cholesky().map(|c| c.solve(&g));
        let gradient_step = {
            let scale = h.diagonal().iter().map(|v| -v).fold(1e-12, f64::max);
            g.clone() / scale
        };

        let mut improved = None;
        for dir in newton.iter().chain(std::iter::once(&gradient_step)) {
            let mut step = 1.0;
            for _ in 0..60 {
                let mut cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect();
                project(&mut cand);
                let moved: f64 = cand.iter().zip(&theta).zip(g.iter()).map(|((c, t), gi)| (c - t) * gi).sum();
                let cand_ll = design.loglik(&cand);
                if cand_ll.is_finite() && cand_ll >= ll + 1e-4 * moved {
                    improved = Some((cand, cand_ll));
                    break;
                }
                step *= 0.5;
            }
            if improved.is_some() {
                break;
            }
        }

        let Some((cand, cand_ll)) = improved else {
            converged = true;
            break;
        };
        let change = cand.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let gain = cand_ll - ll;
        theta = cand;
        ll = cand_ll;
        if change < 1e-10 || gain.abs() < 1e-12 * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    let lambdas = design.intensities(&theta);
    Ok(ConstantBaseline {
        mu: theta[0],
        a: theta[1..].to_vec(),
        log_likelihood: ll,
        amse: mean_squared_error(&series.values()[p..], &lambdas),
        iterations,
        converged,
    })
}
