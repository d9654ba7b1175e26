mod common;

use std::time::Instant;

use tvcount::hmc::Target;
use tvcount::{GradientMode, TvbingarchParams};

#[test]
fn analytic_gradients_match_finite_differences() {
    let start = Instant::now();
    let failures = common::gradient_oracle_failures();
    assert!(failures.is_empty(), "{} mismatches:\n{}", failures.len(), failures.join("\n"));
    assert!(start.elapsed().as_secs_f64() < 10.0, "oracle took {:?}", start.elapsed());
}

#[test]
fn modes_agree_without_conditional_heteroscedasticity() {
    // With η ≡ 0 the recursion has no feedback, so freezing the history is exact.
    let (model, mut params) = common::ingarch_instance(3);
    params.eta = vec![vec![0.0; model.num_basis()]];
    let frozen = model.grad_with_mode(&params, GradientMode::Frozen);
    let exact = model.grad_with_mode(&params, GradientMode::Exact);
    for (a, b) in frozen.beta.iter().chain(&frozen.theta[0]).zip(exact.beta.iter().chain(&exact.theta[0])) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn sampler_coordinates_are_chain_ruled() {
    // The sampler works on u = log λ_0 and adds its log-Jacobian.
    let (model, params) = common::ingarch_instance(7);
    let model = model.with_gradient_mode(GradientMode::Exact);
    let x = params.to_flat();
    let analytic = Target::gradient(&model, &x);
    let numeric = common::fd_gradient(|y| model.log_density(y), &x, 1e-3);
    let names = TvbingarchParams::flat_names(model.num_basis(), 1, 1);
    let failures = common::compare("log-scale", &names, &analytic, &numeric);
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn far_too_large_initial_intensity_pulls_down() {
    let (model, mut params) = common::ingarch_instance(11);
    params.lambda0 = 1e4;
    assert!(model.grad_with_mode(&params, GradientMode::Frozen).lambda0 < 0.0);
}
