//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvcount::hmc::Target;
use tvcount::{
    CountSeries, GradientMode, Hyper, HyperIngarch, SplineBasis, TvbarcModel, TvbarcParams, TvbingarchModel,
    TvbingarchParams,
};

pub const REL_TOL: f64 = 1e-6;
pub const ABS_TOL: f64 = 1e-8;

/// Fourth-order central difference of `f` along every coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut at = |d: f64| {
                y[i] = x[i] + d;
                let v = f(&y);
                y[i] = x[i];
                v
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        })
        .collect()
}

/// Relative error `rel`, switching to absolute error below `ABS_TOL`.
pub fn mismatch(analytic: f64, numeric: f64) -> Option<String> {
    let scale = analytic.abs().max(numeric.abs());
    let err = (analytic - numeric).abs();
    let bad = if scale < ABS_TOL { err > ABS_TOL } else { err > REL_TOL * scale };
    bad.then(|| format!("analytic {analytic:e} vs numeric {numeric:e}"))
}

pub fn compare(label: &str, names: &[String], analytic: &[f64], numeric: &[f64]) -> Vec<String> {
    names
        .iter()
        .zip(analytic.iter().zip(numeric))
        .filter_map(|(n, (&a, &f))| mismatch(a, f).map(|m| format!("{label} {n}: {m}")))
        .collect()
}

fn random_counts(rng: &mut ChaCha8Rng, t_last: usize) -> CountSeries {
    CountSeries::new((0..=t_last).map(|_| rng.gen_range(0..30)).collect()).unwrap()
}

pub fn tvbarc_instance(seed: u64, p: usize) -> (TvbarcModel, TvbarcParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 6;
    let model = TvbarcModel::new(random_counts(&mut rng, 50), SplineBasis::new(k, 3).unwrap(), p, Hyper::default()).unwrap();
    let params = TvbarcParams {
        beta: (0..k).map(|_| rng.gen_range(0.0..2.5)).collect(),
        theta: (0..p).map(|_| (0..k).map(|_| rng.gen_range(0.05..0.95)).collect()).collect(),
        delta: (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    (model, params)
}

pub fn ingarch_instance(seed: u64) -> (TvbingarchModel, TvbingarchParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 6;
    let model = TvbingarchModel::new(
        random_counts(&mut rng, 50),
        SplineBasis::new(k, 3).unwrap(),
        1,
        1,
        HyperIngarch::default(),
    )
    .unwrap();
    let params = TvbingarchParams {
        beta: (0..k).map(|_| rng.gen_range(0.0..2.5)).collect(),
        theta: vec![(0..k).map(|_| rng.gen_range(0.05..0.95)).collect()],
        eta: vec![(0..k).map(|_| rng.gen_range(0.05..0.95)).collect()],
        delta: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        lambda0: rng.gen_range(1.0..20.0),
    };
    (model, params)
}

/// `[β | θ | η | δ | λ_0]` with `λ_0` on its natural scale.
fn ingarch_natural(params: &TvbingarchParams) -> Vec<f64> {
    let mut v = params.to_flat();
    *v.last_mut().unwrap() = params.lambda0;
    v
}

fn ingarch_from_natural(x: &[f64], k: usize) -> TvbingarchParams {
    let mut flat = x.to_vec();
    let last = flat.len() - 1;
    flat[last] = flat[last].ln();
    TvbingarchParams::from_flat(&flat, k, 1, 1)
}

/// Log-posterior with the lagged intensities replaced by `history`, written
/// independently of the library's recursion.
pub fn frozen_log_posterior(model: &TvbingarchModel, params: &TvbingarchParams, history: &[f64]) -> f64 {
    let x = model.series().values();
    let t_last = model.series().last_index();
    let hyper = model.hyper();
    let mut total = 0.0;
    for t in 1..=t_last {
        let (mu, a, b) = params.coefficient_at(model.basis(), t as f64 / t_last as f64).unwrap();
        let lambda = mu + a[0] * x[t - 1] as f64 + b[0] * history[t - 1];
        total += x[t] as f64 * lambda.ln() - lambda;
    }
    let sq = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>();
    total - sq(&params.beta) / (2.0 * hyper.c2) - sq(&params.delta) / (2.0 * hyper.c1)
        + hyper.log_prior_lambda0(params.lambda0)
}

/// Richardson-extrapolated central difference of the exact log-posterior in `λ_0`.
pub fn richardson_dlambda0(model: &TvbingarchModel, params: &TvbingarchParams) -> f64 {
    let d = |h: f64| {
        let mut up = params.clone();
        up.lambda0 += h;
        let mut down = params.clone();
        down.lambda0 -= h;
        (model.log_posterior(&up) - model.log_posterior(&down)) / (2.0 * h)
    };
    let h = 1e-2 * params.lambda0;
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn flatten_gradient(g: &tvcount::tvbingarch::TvbingarchGradient) -> Vec<f64> {
    let mut v = g.beta.clone();
    for row in g.theta.iter().chain(&g.eta) {
        v.extend_from_slice(row);
    }
    v.extend_from_slice(&g.delta);
    v.push(g.lambda0);
    v
}

/// Every gradient mismatch over the 20-instance oracle suite.
pub fn gradient_oracle_failures() -> Vec<String> {
    const H: f64 = 1e-3;
    let mut failures = Vec::new();
    for p in [1, 2] {
        for seed in 0..20 {
            let (model, params) = tvbarc_instance(seed, p);
            let x = params.to_flat();
            let analytic = Target::gradient(&model, &x);
            let numeric = fd_gradient(|y| model.log_density(y), &x, H);
            failures.extend(compare(&format!("tvbarc p={p} seed={seed}"), &model.names(), &analytic, &numeric));
        }
    }
    for seed in 0..20 {
        let (model, params) = ingarch_instance(seed);
        let k = model.num_basis();
        let names = TvbingarchParams::flat_names(k, 1, 1);
        let x = ingarch_natural(&params);
        let n = x.len();

        // Frozen mode: every block but λ_0 against the fixed-history posterior.
        let history = model.intensities_recursive(&params).unwrap();
        let frozen = flatten_gradient(&model.grad_with_mode(&params, GradientMode::Frozen));
        let numeric = fd_gradient(|y| frozen_log_posterior(&model, &ingarch_from_natural(y, k), &history), &x, H);
        let label = format!("tvbingarch frozen seed={seed}");
        failures.extend(compare(&label, &names[..n - 1], &frozen[..n - 1], &numeric[..n - 1]));

        // The numeric λ_0 derivative against a Richardson oracle.
        let oracle = richardson_dlambda0(&model, &params);
        let err = (frozen[n - 1] - oracle).abs() / oracle.abs().max(1.0);
        if err > 1e-4 {
            failures.push(format!("{label} lambda0: {} vs Richardson {oracle} (rel {err:e})", frozen[n - 1]));
        }

        // Exact mode: every component against the full recursion.
        let exact = flatten_gradient(&model.grad_with_mode(&params, GradientMode::Exact));
        let numeric = fd_gradient(|y| model.log_posterior(&ingarch_from_natural(y, k)), &x, H);
        failures.extend(compare(&format!("tvbingarch exact seed={seed}"), &names, &exact, &numeric));
    }
    failures
}

/// Posterior mean and sd of the grid-averaged `μ` from a TVBARC(0) fit to
/// Poisson(5) counts.
pub fn constant_mean_recovery() -> (f64, f64) {
    use tvcount::simulator::{simulate, TruthFunctions};
    use tvcount::{FitModel, HmcConfig};

    let truth = TruthFunctions::new("flat", std::sync::Arc::new(|_| 5.0), vec![], vec![]).unwrap();
    let series = simulate(&truth, 500, &mut ChaCha8Rng::seed_from_u64(31), None).unwrap();
    let model = FitModel::Tvbarc(TvbarcModel::new(series, SplineBasis::new(6, 3).unwrap(), 0, Hyper::default()).unwrap());
    let config = HmcConfig {
        seed: 31,
        ..HmcConfig::default()
    };
    let chain = tvcount::hmc::run_chain(model.as_target(), model.initial_state(), &config).unwrap();
    let grid = tvcount::evaluation::observation_grid(500);
    let levels: Vec<f64> = chain
        .post_burn_in()
        .iter()
        .map(|d| {
            grid.iter()
                .map(|&x| model.coefficient(d, tvcount::Selector::Mu, x).unwrap())
                .sum::<f64>()
                / grid.len() as f64
        })
        .collect();
    let n = levels.len() as f64;
    let mean = levels.iter().sum::<f64>() / n;
    let sd = (levels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (mean, sd)
}
