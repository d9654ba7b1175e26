//! Blockwise Hamiltonian Monte Carlo with periodic step-size tuning.
//!
//! Each iteration sweeps the target's parameter blocks in order. A block
//! update draws a standard-normal momentum for the block coordinates, runs
//! a leapfrog trajectory with the other blocks held fixed, and accepts or
//! rejects with the exact log-density. Box-bounded coordinates that leave
//! their interval are mapped back to the nearest boundary point.
//!
//! During burn-in each block's step size is multiplied by `down_factor`
//! when its acceptance over the last `adapt_interval` iterations falls
//! below `target_accept_low` and by `up_factor` when it exceeds
//! `target_accept_high`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A contiguous group of coordinates updated together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub range: Range<usize>,
}

impl Block {
    pub fn new(name: impl Into<String>, range: Range<usize>) -> Self {
        Self {
            name: name.into(),
            range,
        }
    }
}

/// Closed interval constraint on one coordinate.
pub type Bound = Option<(f64, f64)>;

/// An unnormalized log-density with its gradient.
pub trait Target {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Gradient of [`Target::log_density`] (ascent direction).
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Gradient restricted to one block.
    fn block_gradient(&self, x: &[f64], range: Range<usize>) -> Vec<f64> {
        self.gradient(x)[range].to_vec()
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::new("all", 0..self.dim())]
    }

    fn bounds(&self) -> Vec<Bound> {
        vec![None; self.dim()]
    }

    fn names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClampMode {
    /// Clamp after every leapfrog position update.
    #[default]
    EachStep,
    /// Clamp only the final proposal.
    FinalOnly,
}

/// Step size kept once burn-in ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreezeRule {
    /// Geometric mean of the per-iteration step sizes over the second half
    /// of burn-in.
    #[default]
    Average,
    /// Whatever the last adaptation produced.
    Last,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub initial_step_size: f64,
    pub target_accept_low: f64,
    pub target_accept_high: f64,
    pub adapt_interval: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub down_factor: f64,
    pub up_factor: f64,
    pub min_step_size: f64,
    pub clamp: ClampMode,
    /// Keep tuning after burn-in (breaks exact stationarity).
    pub adapt_after_burn_in: bool,
    /// How the post-burn-in step size is chosen.
    pub freeze: FreezeRule,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            leapfrog_steps: 30,
            initial_step_size: 1e-3,
            target_accept_low: 0.6,
            target_accept_high: 0.8,
            adapt_interval: 100,
            iterations: 10_000,
            burn_in: 5_000,
            seed: 0,
            down_factor: 0.8,
            up_factor: 1.25,
            min_step_size: 1e-12,
            clamp: ClampMode::EachStep,
            adapt_after_burn_in: false,
            freeze: FreezeRule::default(),
        }
    }
}

impl HmcConfig {
    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.leapfrog_steps == 0 {
            v.push("leapfrog_steps must be at least 1".to_string());
        }
        if !(self.initial_step_size > 0.0 && self.initial_step_size.is_finite()) {
            v.push(format!("step_size must be positive (got {})", self.initial_step_size));
        }
        if !(0.0 < self.target_accept_low
            && self.target_accept_low < self.target_accept_high
            && self.target_accept_high < 1.0)
        {
            v.push(format!(
                "acceptance targets must satisfy 0 < low < high < 1 (got {}, {})",
                self.target_accept_low, self.target_accept_high
            ));
        }
        if self.adapt_interval == 0 {
            v.push("adapt_interval must be at least 1".to_string());
        }
        if self.burn_in >= self.iterations {
            v.push(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if !(0.0 < self.down_factor && self.down_factor < 1.0 && self.up_factor > 1.0) {
            v.push("step-size factors must satisfy 0 < down < 1 < up".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Leapfrog integration failed because the gradient stopped being finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteGradient;

fn clamp_into(position: &mut [f64], bounds: &[Bound]) {
    for (x, b) in position.iter_mut().zip(bounds) {
        if let Some((lo, hi)) = *b {
            *x = x.clamp(lo, hi);
        }
    }
}

/// Runs `n_steps` leapfrog steps in place: half momentum kick, alternating
/// drifts and kicks, final half kick. When `bounds` is given, positions are
/// clamped after every drift.
pub fn leapfrog<G>(
    position: &mut [f64],
    momentum: &mut [f64],
    step: f64,
    n_steps: usize,
    mut grad: G,
    bounds: Option<&[Bound]>,
) -> std::result::Result<(), NonFiniteGradient>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let kick = |momentum: &mut [f64], g: &[f64], scale: f64| -> std::result::Result<(), NonFiniteGradient> {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NonFiniteGradient);
        }
        for (m, gi) in momentum.iter_mut().zip(g) {
            *m += scale * gi;
        }
        Ok(())
    };
    kick(momentum, &grad(position), 0.5 * step)?;
    for s in 0..n_steps {
        for (x, m) in position.iter_mut().zip(momentum.iter()) {
            *x += step * m;
        }
        if let Some(b) = bounds {
            clamp_into(position, b);
        }
        let scale = if s + 1 == n_steps { 0.5 * step } else { step };
        kick(momentum, &grad(position), scale)?;
    }
    Ok(())
}

/// One HMC update of `block` in place. Returns whether the proposal was
/// accepted; `log_density` is the cached density of `state` and is updated
/// on acceptance.
#[allow(clippy::too_many_arguments)]
pub fn hmc_update_block<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    state: &mut Vec<f64>,
    log_density: &mut f64,
    block: &Block,
    bounds: &[Bound],
    step: f64,
    config: &HmcConfig,
    rng: &mut R,
) -> bool {
    let range = block.range.clone();
    let block_bounds = &bounds[range.clone()];
    let n = range.len();
    let momentum0: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let u: f64 = rng.gen();

    let mut proposal = state.clone();
    let mut position = state[range.clone()].to_vec();
    let mut momentum = momentum0.clone();
    let each_step = match config.clamp {
        ClampMode::EachStep => Some(block_bounds),
        ClampMode::FinalOnly => None,
    };
    let mut scratch = state.clone();
    let integrated = leapfrog(
        &mut position,
        &mut momentum,
        step,
        config.leapfrog_steps,
        |q| {
            scratch[range.clone()].copy_from_slice(q);
            target.block_gradient(&scratch, range.clone())
        },
        each_step,
    );
    if integrated.is_err() {
        return false;
    }
    clamp_into(&mut position, block_bounds);
    proposal[range].copy_from_slice(&position);

    let proposed = target.log_density(&proposal);
    let kinetic = |m: &[f64]| 0.5 * m.iter().map(|v| v * v).sum::<f64>();
    let h0 = -*log_density + kinetic(&momentum0);
    let h1 = -proposed + kinetic(&momentum);
    let log_ratio = h0 - h1;
    if !log_ratio.is_finite() && log_ratio != f64::INFINITY {
        return false;
    }
    if u.ln() < log_ratio {
        *state = proposal;
        *log_density = proposed;
        true
    } else {
        false
    }
}

/// Multiplies `current` by `down_factor` below the target band, by
/// `up_factor` above it, and leaves it unchanged inside.
pub fn adapt_step_size(current: f64, recent_accept_rate: f64, config: &HmcConfig) -> f64 {
    if recent_accept_rate < config.target_accept_low {
        (current * config.down_factor).max(config.min_step_size)
    } else if recent_accept_rate > config.target_accept_high {
        current * config.up_factor
    } else {
        current
    }
}

/// Posterior draws with per-block acceptance and step-size history.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub names: Vec<String>,
    pub blocks: Vec<String>,
    /// One snapshot per iteration, taken after the full block sweep.
    pub draws: Vec<Vec<f64>>,
    pub burn_in: usize,
    /// `accepted[iter][block]`
    pub accepted: Vec<Vec<bool>>,
    /// Step size used for each block at each iteration.
    pub step_sizes: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Chain {
    pub fn iterations(&self) -> usize {
        self.draws.len()
    }

    pub fn is_burn_in(&self, iter: usize) -> bool {
        iter < self.burn_in
    }

    pub fn post_burn_in(&self) -> &[Vec<f64>] {
        &self.draws[self.burn_in.min(self.draws.len())..]
    }

    pub fn acceptance_rate(&self, block: usize, iters: Range<usize>) -> f64 {
        let n = iters.len();
        if n == 0 {
            return f64::NAN;
        }
        let hits = self.accepted[iters].iter().filter(|a| a[block]).count();
        hits as f64 / n as f64
    }

    /// Acceptance rate of every block over the post-burn-in draws.
    pub fn post_burn_in_acceptance(&self) -> Vec<(String, f64)> {
        let range = self.burn_in..self.draws.len();
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, name)| (name.clone(), self.acceptance_rate(b, range.clone())))
            .collect()
    }

    /// Final step size of every block.
    pub fn final_step_sizes(&self) -> Vec<(String, f64)> {
        let last = self.step_sizes.last().cloned().unwrap_or_default();
        self.blocks.iter().cloned().zip(last).collect()
    }

    fn header(&self) -> String {
        let mut cols = vec!["iter".to_string(), "phase".to_string()];
        cols.extend(self.names.iter().cloned());
        cols.extend(self.blocks.iter().map(|b| format!("accept_{b}")));
        cols.extend(self.blocks.iter().map(|b| format!("step_{b}")));
        cols.join(",")
    }

    /// One row per iteration: `iter,phase,<parameters>,accept_<block>...,step_<block>...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.header());
        out.push('\n');
        for (i, draw) in self.draws.iter().enumerate() {
            let phase = if self.is_burn_in(i) { "burnin" } else { "sample" };
            let _ = write!(out, "{i},{phase}");
            for v in draw {
                let _ = write!(out, ",{v}");
            }
            for a in &self.accepted[i] {
                let _ = write!(out, ",{}", u8::from(*a));
            }
            for s in &self.step_sizes[i] {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a chain written by [`Chain::write_csv`]. Block names are taken
    /// from the `accept_` columns.
    pub fn read_csv(path: &Path, seed: u64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let parse_err = |row: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyFile(path.to_path_buf()))?
            .map_err(|e| Error::io(path, e))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "iter" || cols[1] != "phase" {
            return Err(parse_err(1, "header must start with iter,phase".into()));
        }
        let blocks: Vec<String> = cols
            .iter()
            .filter_map(|c| c.strip_prefix("accept_").map(str::to_string))
            .collect();
        let nb = blocks.len();
        let np = cols.len() - 2 - 2 * nb;
        let names: Vec<String> = cols[2..2 + np].iter().map(|s| s.to_string()).collect();

        let mut chain = Chain {
            names,
            blocks,
            draws: Vec::new(),
            burn_in: 0,
            accepted: Vec::new(),
            step_sizes: Vec::new(),
            seed,
        };
        for (idx, line) in lines.enumerate() {
            let row = idx as u64 + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(parse_err(row, format!("expected {} fields, found {}", cols.len(), fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(row, format!("`{s}` is not a number")));
            if fields[1] == "burnin" {
                chain.burn_in += 1;
            }
            chain.draws.push(fields[2..2 + np].iter().map(|s| num(s)).collect::<Result<_>>()?);
            chain.accepted.push(fields[2 + np..2 + np + nb].iter().map(|s| *s == "1").collect());
            chain
                .step_sizes
                .push(fields[2 + np + nb..].iter().map(|s| num(s)).collect::<Result<_>>()?);
        }
        Ok(chain)
    }
}

/// Runs one chain from `init` with an RNG seeded from `config.seed`.
pub fn run_chain<T: Target + ?Sized>(target: &T, init: Vec<f64>, config: &HmcConfig) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_chain_with_rng(target, init, config, &mut rng)
}

pub fn run_chain_with_rng<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    init: Vec<f64>,
    config: &HmcConfig,
    rng: &mut R,
) -> Result<Chain> {
    config.validate()?;
    if init.len() != target.dim() {
        return Err(Error::InvalidParams(format!(
            "initial state has {} coordinates, target has {}",
            init.len(),
            target.dim()
        )));
    }
    let blocks: Vec<Block> = target.blocks().into_iter().filter(|b| !b.range.is_empty()).collect();
    let bounds = target.bounds();
    let mut state = init;
    clamp_into(&mut state, &bounds);
    let mut logp = target.log_density(&state);
    if !logp.is_finite() {
        return Err(Error::InvalidParams("initial state has zero posterior density".into()));
    }

    let mut steps = vec![config.initial_step_size; blocks.len()];
    let mut window_hits = vec![0usize; blocks.len()];
    let mut chain = Chain {
        names: target.names(),
        blocks: blocks.iter().map(|b| b.name.clone()).collect(),
        draws: Vec::with_capacity(config.iterations),
        burn_in: config.burn_in,
        accepted: Vec::with_capacity(config.iterations),
        step_sizes: Vec::with_capacity(config.iterations),
        seed: config.seed,
    };

    let average_from = config.burn_in / 2;
    let mut log_step_sums = vec![0.0; blocks.len()];

    for iter in 0..config.iterations {
        if iter == config.burn_in && config.freeze == FreezeRule::Average && config.burn_in > average_from {
            let n = (config.burn_in - average_from) as f64;
            for (s, total) in steps.iter_mut().zip(&log_step_sums) {
                *s = (total / n).exp();
            }
        }
        if (average_from..config.burn_in).contains(&iter) {
            for (total, s) in log_step_sums.iter_mut().zip(&steps) {
                *total += s.ln();
            }
        }
        let mut flags = Vec::with_capacity(blocks.len());
        for (b, block) in blocks.iter().enumerate() {
            let ok = hmc_update_block(target, &mut state, &mut logp, block, &bounds, steps[b], config, rng);
            window_hits[b] += usize::from(ok);
            flags.push(ok);
        }
        chain.draws.push(state.clone());
        chain.accepted.push(flags);
        chain.step_sizes.push(steps.clone());

        if (iter + 1) % config.adapt_interval == 0 {
            let adapting = iter < config.burn_in || config.adapt_after_burn_in;
            for (b, block) in blocks.iter().enumerate() {
                let rate = window_hits[b] as f64 / config.adapt_interval as f64;
                if window_hits[b] == 0 && steps[b] <= config.min_step_size {
                    return Err(Error::SamplerStalled(format!(
                        "block `{}` accepted nothing in iterations {}..={} at the minimum step size {:e}",
                        block.name,
                        iter + 1 - config.adapt_interval,
                        iter,
                        steps[b]
                    )));
                }
                if adapting {
                    steps[b] = adapt_step_size(steps[b], rate, config);
                }
                window_hits[b] = 0;
            }
        }
    }
    Ok(chain)
}

/// Runs `n_chains` chains in parallel on independent ChaCha streams of
/// `config.seed`.
pub fn run_chains<T: Target + Sync + ?Sized>(
    target: &T,
    init: &[f64],
    config: &HmcConfig,
    n_chains: usize,
) -> Result<Vec<Chain>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains)
            .map(|c| {
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(c as u64);
                    run_chain_with_rng(target, init.to_vec(), config, &mut rng)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}
