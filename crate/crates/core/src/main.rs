use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tvcount::cli_io::{default_output_root, evaluate_run, read_count_csv, run_fit, write_series_csv, FitConfig};
use tvcount::simulator::{builtin_truth, simulate, Scenario};
use tvcount::{Error, Result};

#[derive(Parser)]
#[command(name = "tvcount", version, about = "Time-varying Bayesian Poisson autoregression for count series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a builtin scenario and write it as `t,x` CSV.
    Simulate {
        /// AR1, AR2 or INGARCH11.
        #[arg(long)]
        case: Scenario,
        /// Index of the last observation (the series has T+1 points).
        #[arg(long = "T", visible_alias = "t-last")]
        t_last: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file [default: $TVCOUNT_OUT/<case>_T<T>_seed<seed>.csv].
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit a model and write chain, bands, intensities, AMSE and manifest.
    Fit(FitArgs),
    /// Recompute AMSE (and coverage for a builtin case) from a run directory.
    Evaluate {
        #[arg(long)]
        run_dir: PathBuf,
        /// Builtin truth to measure band coverage against.
        #[arg(long)]
        case: Option<Scenario>,
    },
}

/// Flags override values from `--config`.
#[derive(Args)]
struct FitArgs {
    /// Flat key=value file using the long flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Count CSV with header `t,x` or `date,count`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Run directory [default: $TVCOUNT_OUT/fit].
    #[arg(long)]
    output: Option<PathBuf>,
    /// tvbarc or tvbingarch.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    num_basis: Option<String>,
    #[arg(long)]
    interior_knots: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    c2: Option<String>,
    #[arg(long)]
    d1: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    leapfrog_steps: Option<String>,
    #[arg(long)]
    step_size: Option<String>,
    #[arg(long)]
    adapt_interval: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// each-step or final-only.
    #[arg(long)]
    clamp: Option<String>,
    #[arg(long)]
    adapt_after_burn_in: Option<String>,
    /// average or last.
    #[arg(long)]
    freeze: Option<String>,
    /// frozen or exact.
    #[arg(long)]
    ingarch_gradient: Option<String>,
    #[arg(long)]
    level: Option<String>,
}

impl FitArgs {
    fn settings(&self) -> Result<Vec<(String, String)>> {
        let mut out = match &self.config {
            Some(path) => FitConfig::read_settings(path)?,
            None => Vec::new(),
        };
        let flags = [
            ("model", &self.model),
            ("p", &self.p),
            ("q", &self.q),
            ("num-basis", &self.num_basis),
            ("interior-knots", &self.interior_knots),
            ("degree", &self.degree),
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("d1", &self.d1),
            ("iterations", &self.iterations),
            ("burn-in", &self.burn_in),
            ("leapfrog-steps", &self.leapfrog_steps),
            ("step-size", &self.step_size),
            ("adapt-interval", &self.adapt_interval),
            ("seed", &self.seed),
            ("clamp", &self.clamp),
            ("adapt-after-burn-in", &self.adapt_after_burn_in),
            ("freeze", &self.freeze),
            ("ingarch-gradient", &self.ingarch_gradient),
            ("level", &self.level),
        ];
        out.extend(flags.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))));
        if let Some(input) = &self.input {
            out.push(("input".into(), input.display().to_string()));
        }
        if let Some(output) = &self.output {
            out.push(("output".into(), output.display().to_string()));
        }
        Ok(out)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            case,
            t_last,
            seed,
            output,
        } => {
            let path = output.unwrap_or_else(|| default_output_root().join(format!("{case}_T{t_last}_seed{seed}.csv")));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let series = simulate(&builtin_truth(case), t_last, &mut rng, None)?;
            write_series_csv(&series, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Fit(args) => {
            let settings = args.settings()?;
            let config = FitConfig::from_settings(settings.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
            let input = config
                .input
                .clone()
                .ok_or_else(|| Error::Config(vec!["input is required".into()]))?;
            let output = config.output.clone().unwrap_or_else(|| default_output_root().join("fit"));
            let series = read_count_csv(&input)?;
            let report = run_fit(&config, series, &output)?;
            let rates: Vec<String> = report
                .chain
                .post_burn_in_acceptance()
                .iter()
                .map(|(b, r)| format!("{b}={r:.3}"))
                .collect();
            println!(
                "amse={} baseline_amse={} acceptance {} -> {}",
                report.amse,
                report.baseline_amse,
                rates.join(" "),
                output.display()
            );
        }
        Command::Evaluate { run_dir, case } => {
            println!("{}", evaluate_run(&run_dir, case)?.to_line());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tvcount: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
