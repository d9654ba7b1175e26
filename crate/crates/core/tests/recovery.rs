mod common;

#[test]
fn constant_intensity_is_recovered_without_lags() {
    let (mean, sd) = common::constant_mean_recovery();
    assert!((mean - 5.0).abs() <= 3.0 * sd, "posterior mean {mean}, sd {sd}");
}
