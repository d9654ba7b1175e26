//! Count CSV ingestion, run configuration, and the artifacts written by the
//! `simulate`, `fit` and `evaluate` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{amse, coverage, credible_band, fit_constant_baseline, observation_grid, CredibleBand};
use crate::hmc::{run_chain, Chain, ClampMode, FreezeRule, HmcConfig};
use crate::model::{FitModel, Selector};
use crate::series::CountSeries;
use crate::simulator::{builtin_truth, Scenario};
use crate::splines::SplineBasis;
use crate::tvbarc::{Hyper, TvbarcModel};
use crate::tvbingarch::{GradientMode, HyperIngarch, TvbingarchModel};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "TVCOUNT_OUT";

/// `$TVCOUNT_OUT`, or `runs` in the working directory.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Reads a `t,x` or `date,count` file. Dates are kept as labels; the `t`
/// column is ignored. Errors name the 1-based file line (the header is line 1).
pub fn read_count_csv(path: &Path) -> Result<CountSeries> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let parse_err = |row: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let header: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    let dated = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t", "x"] => false,
        ["date", "count"] => true,
        _ => {
            return Err(parse_err(
                1,
                format!("expected header `t,x` or `date,count`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            ))
        }
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => parse_err(pos.line(), e.to_string()),
            None => csv_err(e),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let raw = &record[1];
        let count = raw.parse::<u64>().map_err(|_| {
            let why = match raw.parse::<f64>() {
                Ok(v) if v < 0.0 => "is negative",
                Ok(_) => "is not an integer",
                Err(_) => "is not a number",
            };
            parse_err(line, format!("count `{raw}` {why}"))
        })?;
        values.push(count);
        if dated {
            labels.push(record[0].to_string());
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    if dated {
        CountSeries::with_labels(values, labels)
    } else {
        CountSeries::new(values)
    }
}

/// Writes `date,count` when the series carries labels, `t,x` otherwise.
pub fn write_series_csv(series: &CountSeries, path: &Path) -> Result<()> {
    let mut out = String::new();
    match series.labels() {
        Some(labels) => {
            out.push_str("date,count\n");
            for (d, x) in labels.iter().zip(series.values()) {
                let _ = writeln!(out, "{d},{x}");
            }
        }
        None => {
            out.push_str("t,x\n");
            for (t, x) in series.values().iter().enumerate() {
                let _ = writeln!(out, "{t},{x}");
            }
        }
    }
    write_text(path, &out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tvbarc,
    Tvbingarch,
}

impl ModelKind {
    fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tvbarc => "tvbarc",
            ModelKind::Tvbingarch => "tvbingarch",
        }
    }
}

/// Everything needed to reproduce a fit. Keys of the flat `key=value`
/// config file are the long flag names.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub model: ModelKind,
    pub p: usize,
    pub q: usize,
    pub num_basis: usize,
    /// When set, the basis is built from this many interior knots instead
    /// of `num_basis`.
    pub interior_knots: Option<usize>,
    pub degree: usize,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub hmc: HmcConfig,
    /// `None` means half of `hmc.iterations`.
    pub burn_in: Option<usize>,
    pub ingarch_gradient: GradientMode,
    pub level: f64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Tvbarc,
            p: 1,
            q: 0,
            num_basis: 6,
            interior_knots: None,
            degree: 3,
            c1: 100.0,
            c2: 100.0,
            d1: 0.1,
            hmc: HmcConfig::default(),
            burn_in: None,
            ingarch_gradient: GradientMode::default(),
            level: 0.95,
            input: None,
            output: None,
        }
    }
}

/// Manifest keys that report results rather than configure a run.
const RESULT_PREFIX: &str = "result.";

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("{key}: expected true or false, found `{value}`")),
    }
}

impl FitConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key.trim().replace('_', "-").as_str() {
            "model" => {
                self.model = match value.to_ascii_lowercase().as_str() {
                    "tvbarc" => ModelKind::Tvbarc,
                    "tvbingarch" => ModelKind::Tvbingarch,
                    _ => return Err(format!("model: expected tvbarc or tvbingarch, found `{value}`")),
                }
            }
            "p" => self.p = parse_num(key, value)?,
            "q" => self.q = parse_num(key, value)?,
            "num-basis" => self.num_basis = parse_num(key, value)?,
            "interior-knots" => {
                self.interior_knots = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "degree" => self.degree = parse_num(key, value)?,
            "c1" => self.c1 = parse_num(key, value)?,
            "c2" => self.c2 = parse_num(key, value)?,
            "d1" => self.d1 = parse_num(key, value)?,
            "iterations" => self.hmc.iterations = parse_num(key, value)?,
            "burn-in" => self.burn_in = Some(parse_num(key, value)?),
            "leapfrog-steps" => self.hmc.leapfrog_steps = parse_num(key, value)?,
            "step-size" => self.hmc.initial_step_size = parse_num(key, value)?,
            "adapt-interval" => self.hmc.adapt_interval = parse_num(key, value)?,
            "seed" => self.hmc.seed = parse_num(key, value)?,
            "clamp" => {
                self.hmc.clamp = match value {
                    "each-step" => ClampMode::EachStep,
                    "final-only" => ClampMode::FinalOnly,
                    _ => return Err(format!("clamp: expected each-step or final-only, found `{value}`")),
                }
            }
            "adapt-after-burn-in" => self.hmc.adapt_after_burn_in = parse_bool(key, value)?,
            "freeze" => {
                self.hmc.freeze = match value {
                    "average" => FreezeRule::Average,
                    "last" => FreezeRule::Last,
                    _ => return Err(format!("freeze: expected average or last, found `{value}`")),
                }
            }
            "ingarch-gradient" => {
                self.ingarch_gradient = match value {
                    "frozen" => GradientMode::Frozen,
                    "exact" => GradientMode::Exact,
                    _ => return Err(format!("ingarch-gradient: expected frozen or exact, found `{value}`")),
                }
            }
            "level" => self.level = parse_num(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown setting `{key}`")),
        }
        Ok(())
    }

    /// Applies settings in order (later ones win), then validates. Every
    /// unparsable setting and every violated constraint is reported.
    pub fn from_settings<'a>(settings: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut config = Self::default();
        let mut problems: Vec<String> = settings
            .into_iter()
            .filter_map(|(k, v)| config.set(k, v).err())
            .collect();
        problems.extend(config.violations());
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self.model {
            ModelKind::Tvbarc if self.q != 0 => v.push(format!("q must be 0 for tvbarc (got {})", self.q)),
            ModelKind::Tvbingarch if self.q == 0 => v.push("q must be >= 1 for tvbingarch".to_string()),
            _ => {}
        }
        let k = self.basis_size();
        if k < 4 {
            v.push(format!("num-basis must be at least 4 (got {k})"));
        }
        if k >= 4 && k < self.degree + 1 {
            v.push(format!("num-basis ({k}) must be at least degree + 1 ({})", self.degree + 1));
        }
        for (name, value) in [("c1", self.c1), ("c2", self.c2), ("d1", self.d1)] {
            if !(value > 0.0 && value.is_finite()) {
                v.push(format!("{name} must be positive (got {value})"));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            v.push(format!("level must lie in (0, 1) (got {})", self.level));
        }
        v.extend(self.hmc_config().violations());
        v
    }

    pub fn basis_size(&self) -> usize {
        match self.interior_knots {
            Some(n) => n + self.degree + 1,
            None => self.num_basis,
        }
    }

    /// The sampler settings with the burn-in default resolved.
    pub fn hmc_config(&self) -> HmcConfig {
        HmcConfig {
            burn_in: self.burn_in.unwrap_or(self.hmc.iterations / 2),
            ..self.hmc.clone()
        }
    }

    /// Reads a `key=value` file. Blank lines, `#` comments and `result.*`
    /// keys (as found in run manifests) are skipped.
    pub fn read_settings(path: &Path) -> Result<Vec<(String, String)>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: i as u64 + 1,
                message: format!("expected key=value, found `{line}`"),
            })?;
            if !k.trim().starts_with(RESULT_PREFIX) {
                out.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        Ok(out)
    }

    /// The configuration as `key=value` lines, readable by [`FitConfig::read_settings`].
    pub fn to_settings(&self) -> String {
        let hmc = self.hmc_config();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("model", self.model.as_str().into());
        kv("p", self.p.to_string());
        kv("q", self.q.to_string());
        kv("num-basis", self.basis_size().to_string());
        kv("degree", self.degree.to_string());
        kv("c1", self.c1.to_string());
        kv("c2", self.c2.to_string());
        kv("d1", self.d1.to_string());
        kv("iterations", hmc.iterations.to_string());
        kv("burn-in", hmc.burn_in.to_string());
        kv("leapfrog-steps", hmc.leapfrog_steps.to_string());
        kv("step-size", hmc.initial_step_size.to_string());
        kv("adapt-interval", hmc.adapt_interval.to_string());
        kv("seed", hmc.seed.to_string());
        kv(
            "clamp",
            match hmc.clamp {
                ClampMode::EachStep => "each-step",
                ClampMode::FinalOnly => "final-only",
            }
            .into(),
        );
        kv("adapt-after-burn-in", hmc.adapt_after_burn_in.to_string());
        kv(
            "freeze",
            match hmc.freeze {
                FreezeRule::Average => "average",
                FreezeRule::Last => "last",
            }
            .into(),
        );
        kv(
            "ingarch-gradient",
            match self.ingarch_gradient {
                GradientMode::Frozen => "frozen",
                GradientMode::Exact => "exact",
            }
            .into(),
        );
        kv("level", self.level.to_string());
        if let Some(input) = &self.input {
            kv("input", input.display().to_string());
        }
        out
    }

    pub fn basis(&self) -> Result<SplineBasis> {
        match self.interior_knots {
            Some(n) => SplineBasis::with_interior_knots(n, self.degree),
            None => SplineBasis::new(self.num_basis, self.degree),
        }
    }

    /// Binds the configured model to `series`.
    pub fn build_model(&self, series: CountSeries) -> Result<FitModel> {
        let basis = self.basis()?;
        Ok(match self.model {
            ModelKind::Tvbarc => FitModel::Tvbarc(TvbarcModel::new(series, basis, self.p, Hyper::new(self.c1, self.c2)?)?),
            ModelKind::Tvbingarch => FitModel::Tvbingarch(
                TvbingarchModel::new(series, basis, self.p, self.q, HyperIngarch::new(self.c1, self.c2, self.d1)?)?
                    .with_gradient_mode(self.ingarch_gradient),
            ),
        })
    }
}

/// Pointwise band of the fitted intensity at `t/T` for every likelihood term.
pub fn intensity_band(chain: &Chain, model: &FitModel, level: f64) -> Result<CredibleBand> {
    let draws = chain.post_burn_in();
    if draws.is_empty() {
        return Err(Error::NoDraws);
    }
    let t_last = model.series().last_index();
    let first = model.first_term().max(1);
    let skip = first - model.first_term();
    let grid: Vec<f64> = (first..=t_last).map(|t| t as f64 / t_last as f64).collect();
    let mut samples = vec![Vec::with_capacity(draws.len()); grid.len()];
    for d in draws {
        for (s, l) in samples.iter_mut().zip(model.fitted_intensities(d).into_iter().skip(skip)) {
            s.push(l);
        }
    }
    CredibleBand::from_samples(grid, samples, level)
}

/// What a fit produced, besides the files.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub chain: Chain,
    pub amse: f64,
    pub baseline_amse: f64,
    pub output_dir: PathBuf,
}

/// Runs a fit and writes `series.csv`, `chain.csv`, `band_<fn>.csv`,
/// `intensities.csv`, `amse.txt` and `manifest.txt` into `output_dir`.
pub fn run_fit(config: &FitConfig, series: CountSeries, output_dir: &Path) -> Result<FitReport> {
    let problems = config.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let model = config.build_model(series)?;
    let hmc = config.hmc_config();
    let chain = run_chain(model.as_target(), model.initial_state(), &hmc)?;

    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    write_series_csv(model.series(), &output_dir.join("series.csv"))?;
    chain.write_csv(&output_dir.join("chain.csv"))?;

    let grid = observation_grid(model.series().last_index());
    for sel in model.selectors() {
        let band = credible_band(&chain, &model, sel, &grid, config.level)?;
        write_text(&output_dir.join(format!("band_{}.csv", sel.label())), &band.to_csv())?;
    }
    let intensities = intensity_band(&chain, &model, config.level)?;
    write_text(&output_dir.join("intensities.csv"), &intensities.to_csv())?;

    let fitted_amse = amse(&chain, &model)?;
    let baseline = fit_constant_baseline(model.series(), config.p)?;
    write_text(
        &output_dir.join("amse.txt"),
        &format!(
            "amse={fitted_amse} baseline_amse={} draws={}\n",
            baseline.amse,
            chain.post_burn_in().len()
        ),
    )?;

    let mut manifest = config.to_settings();
    let _ = writeln!(manifest, "{RESULT_PREFIX}burn_in={}", chain.burn_in);
    let _ = writeln!(manifest, "{RESULT_PREFIX}draws={}", chain.post_burn_in().len());
    for (block, rate) in chain.post_burn_in_acceptance() {
        let _ = writeln!(manifest, "{RESULT_PREFIX}acceptance.{block}={rate}");
    }
    for (block, step) in chain.final_step_sizes() {
        let _ = writeln!(manifest, "{RESULT_PREFIX}step.{block}={step}");
    }
    let _ = writeln!(manifest, "{RESULT_PREFIX}amse={fitted_amse}");
    write_text(&output_dir.join("manifest.txt"), &manifest)?;

    Ok(FitReport {
        chain,
        amse: fitted_amse,
        baseline_amse: baseline.amse,
        output_dir: output_dir.to_path_buf(),
    })
}

/// AMSE of a stored run and, when the truth is known, band coverage per
/// coefficient function.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub amse: f64,
    pub coverage: Vec<(Selector, f64)>,
}

impl Evaluation {
    /// Single line of `key=value` pairs.
    pub fn to_line(&self) -> String {
        let mut out = format!("amse={}", self.amse);
        for (sel, c) in &self.coverage {
            let _ = write!(out, " coverage_{}={c}", sel.label());
        }
        out
    }
}

/// Recomputes AMSE (and coverage against a builtin truth) from the
/// `manifest.txt`, `series.csv` and `chain.csv` of a run directory.
pub fn evaluate_run(run_dir: &Path, case: Option<Scenario>) -> Result<Evaluation> {
    let settings = FitConfig::read_settings(&run_dir.join("manifest.txt"))?;
    let config = FitConfig::from_settings(settings.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let series = read_count_csv(&run_dir.join("series.csv"))?;
    let model = config.build_model(series)?;
    let chain = Chain::read_csv(&run_dir.join("chain.csv"), config.hmc.seed)?;
    if chain.names.len() != model.as_target().dim() {
        return Err(Error::InvalidParams(format!(
            "chain has {} parameters but the manifest's model needs {}",
            chain.names.len(),
            model.as_target().dim()
        )));
    }
    let fitted_amse = amse(&chain, &model)?;
    let mut cov = Vec::new();
    if let Some(case) = case {
        let truth = builtin_truth(case);
        let grid = observation_grid(model.series().last_index());
        for sel in model.selectors() {
            let band = credible_band(&chain, &model, sel, &grid, config.level)?;
            let c = coverage(&band, |x| match sel {
                Selector::Mu => truth.mu(x),
                Selector::Ar(i) if i <= truth.ar_order() => truth.a(i, x),
                Selector::Ch(k) if k <= truth.ch_order() => truth.b(k, x),
                _ => 0.0,
            });
            cov.push((sel, c));
        }
    }
    Ok(Evaluation {
        amse: fitted_amse,
        coverage: cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn reads_plain_series() {
        let dir = tempfile::tempdir().unwrap();
        let s = read_count_csv(&write(dir.path(), "a.csv", "t,x\n0,3\n1,5\n")).unwrap();
        assert_eq!(s.values(), &[3, 5]);
        assert!(s.labels().is_none());
    }

    #[test]
    fn negative_count_names_file_line() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_count_csv(&write(dir.path(), "a.csv", "t,x\n6,2\n7,-1\n")).unwrap_err();
        match err {
            Error::Parse { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("negative"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fractional_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_count_csv(&write(dir.path(), "a.csv", "date,count\n2020-01-01,2.5\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_count_csv(&write(dir.path(), "a.csv", "")), Err(Error::EmptyFile(_))));
        assert!(matches!(read_count_csv(&write(dir.path(), "b.csv", "t,x\n")), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn dated_series_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = CountSeries::with_labels(vec![1, 0, 4], vec!["2020-01-23".into(), "2020-01-24".into(), "2020-01-25".into()])
            .unwrap();
        let path = dir.path().join("s.csv");
        write_series_csv(&s, &path).unwrap();
        assert_eq!(read_count_csv(&path).unwrap(), s);
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_count_csv(&write(dir.path(), "a.csv", "day,n\n0,1\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn validation_lists_every_problem() {
        let err = FitConfig::from_settings([("model", "tvbingarch"), ("q", "0"), ("num-basis", "3"), ("c1", "-1")])
            .unwrap_err();
        let Error::Config(problems) = err else { panic!() };
        assert_eq!(problems.len(), 3, "{problems:?}");
        assert!(problems[0].contains("q must be >= 1"));
    }

    #[test]
    fn unknown_and_malformed_settings_reported() {
        let Error::Config(problems) = FitConfig::from_settings([("colour", "red"), ("p", "two")]).unwrap_err() else {
            panic!()
        };
        assert_eq!(problems.len(), 2);
    }

    #[test]
    fn tvbarc_with_q_rejected() {
        assert!(FitConfig::from_settings([("q", "1")]).is_err());
    }

    #[test]
    fn later_settings_win_and_burn_in_defaults_to_half() {
        let c = FitConfig::from_settings([("p", "2"), ("iterations", "400"), ("p", "3")]).unwrap();
        assert_eq!(c.p, 3);
        assert_eq!(c.hmc_config().burn_in, 200);
    }

    #[test]
    fn interior_knots_set_basis_size() {
        let c = FitConfig::from_settings([("interior-knots", "6")]).unwrap();
        assert_eq!(c.basis_size(), 10);
        assert_eq!(c.basis().unwrap().num_basis(), 10);
    }

    #[test]
    fn settings_round_trip() {
        let c = FitConfig::from_settings([
            ("model", "tvbingarch"),
            ("q", "1"),
            ("seed", "9"),
            ("clamp", "final-only"),
            ("ingarch-gradient", "exact"),
            ("iterations", "300"),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "m.txt", &format!("{}result.amse=1\n# note\n", c.to_settings()));
        let settings = FitConfig::read_settings(&path).unwrap();
        let back = FitConfig::from_settings(settings.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back.hmc_config(), c.hmc_config());
        assert_eq!(back.model, c.model);
        assert_eq!(back.ingarch_gradient, c.ingarch_gradient);
    }
}
