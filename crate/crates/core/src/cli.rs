//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::accept::{self, Targets};
use crate::branching::{
    estimate_h, martingale_diagnostics_paths, overshoot_stat, sample_conditioned, simulate_bp_many,
    simulate_modified_bp, BpLimits, DEFAULT_GEN_CAP, DEFAULT_LEVEL_CAP,
};
use crate::cookie::CookieLaw;
use crate::diffusion::{
    euler_path, estimate_ab, sample_functionals, scaling_check, FunctionalConfig, PostAbsorption, Stepping, DEFAULT_DT,
    DEFAULT_HORIZON,
};
use crate::error::{Error, Result};
use crate::experiment::{censored_mean_r, phase_sweep, Artifact, ExperimentConfig, SweepBudget};
use crate::rng::{stream_rng, PathCoins};
use crate::stats::{
    build_survival, fit_tail, fit_tail_with, marginal_distance_bp_vs_sde, FitOptions, MarginalConfig, Sample,
    DEFAULT_GRID_BASE,
};
use crate::walk::{estimate_escape, simulate_excursions, simulate_returns, WalkConfig, DEFAULT_RANGE_CAP, DEFAULT_STEP_CAP};

#[derive(Debug, Parser)]
#[command(name = "erwlab", version, about = "Excited random walk, branching process and diffusion experiments")]
pub struct Cli {
    /// Base seed of all random streams.
    #[arg(long, global = true, env = "ERWLAB_SEED", default_value_t = accept::DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate walk excursions, returns or escapes.
    Walk(WalkArgs),
    /// Simulate the forward branching process and its variants.
    Bp(BpArgs),
    /// Simulate the limiting diffusion.
    Sde(SdeArgs),
    /// Fit a power-law tail to a CSV of `value,censored` rows.
    Fit(FitArgs),
    /// Tail exponents and strong-transience verdicts over drifts.
    Sweep(SweepArgs),
    /// Truncated mean return times across caps.
    MeanR(MeanRArgs),
    /// Run the acceptance suite.
    Accept(AcceptArgs),
}

#[derive(Debug, Args)]
pub struct LawArgs {
    /// TOML file with `m` and `[[stacks]]` entries (`probs`, `weight`).
    #[arg(long = "config", visible_alias = "law", conflicts_with = "delta")]
    pub law: Option<PathBuf>,
    /// Drift; builds `ceil(2|delta|)` equal cookies.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
}

impl LawArgs {
    fn load(&self) -> Result<CookieLaw> {
        let law = match (&self.law, self.delta) {
            (Some(path), _) => load_law(path)?,
            (None, Some(d)) => CookieLaw::equal_strength(d)?,
            (None, None) => CookieLaw::fair(1),
        };
        eprintln!("delta = {}", law.delta());
        Ok(law)
    }
}

pub fn load_law(path: &Path) -> Result<CookieLaw> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(toml::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WalkMode {
    Excursion,
    Return,
    Escape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WalkTable {
    Duration,
    Depth,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    #[command(flatten)]
    pub law: LawArgs,
    #[arg(long, value_enum, default_value_t = WalkMode::Excursion)]
    pub mode: WalkMode,
    #[arg(long, default_value_t = 10_000)]
    pub runs: u64,
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    pub step_cap: u64,
    #[arg(long, default_value_t = DEFAULT_RANGE_CAP)]
    pub range_cap: u64,
    /// Quantity tabulated in CSV output.
    #[arg(long, value_enum, default_value_t = WalkTable::Duration)]
    pub table: WalkTable,
    /// Emit one JSON line per excursion instead of a summary.
    #[arg(long)]
    pub outcomes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BpMode {
    #[value(alias = "plain")]
    Raw,
    Conditioned,
    Progeny,
    H,
    Modified,
    Martingale,
    Overshoot,
}

#[derive(Debug, Args)]
pub struct BpArgs {
    #[command(flatten)]
    pub law: LawArgs,
    #[arg(long, value_enum, default_value_t = BpMode::Raw)]
    pub mode: BpMode,
    #[arg(long, default_value_t = 1)]
    pub v0: u64,
    #[arg(long, default_value_t = 10_000)]
    pub runs: u64,
    #[arg(long, default_value_t = DEFAULT_GEN_CAP)]
    pub gen_cap: u64,
    /// Rejection level of conditioned proposals.
    #[arg(long, default_value_t = DEFAULT_LEVEL_CAP)]
    pub level_cap: u64,
    /// Starting sizes for `h` mode.
    #[arg(long, value_delimiter = ',', default_values_t = [8u64, 16, 32, 64, 128, 256, 512, 1024])]
    pub n_grid: Vec<u64>,
    /// Level for `overshoot` mode.
    #[arg(long, default_value_t = 100)]
    pub x: u64,
    /// Increments pooled in `martingale` mode.
    #[arg(long, default_value_t = 100_000)]
    pub increments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SdeMode {
    Path,
    Functionals,
    Scaling,
    Ab,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PostMode {
    Frozen,
    Degenerate,
    Free,
}

#[derive(Debug, Args)]
pub struct SdeArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub runs: u64,
    #[arg(long, value_enum, default_value_t = SdeMode::Functionals)]
    pub mode: SdeMode,
    /// Second start for `scaling` mode.
    #[arg(long, default_value_t = 2.0)]
    pub x2: f64,
    #[arg(long, value_enum, default_value_t = PostMode::Frozen)]
    pub post: PostMode,
    /// Use constant steps instead of steps proportional to `max(1, Y)`.
    #[arg(long)]
    pub fixed_steps: bool,
    /// Branching-process scale for `marginal` mode.
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Compare the process conditioned on extinction in `marginal` mode.
    #[arg(long)]
    pub conditioned: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with a header and `value,censored` columns.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GRID_BASE)]
    pub grid_base: f64,
    #[arg(long)]
    pub window_lo: Option<f64>,
    #[arg(long)]
    pub window_hi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-4.0, -2.0, 0.0, 0.5, 2.0, 4.0])]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub runs: u64,
    #[arg(long, default_value_t = DEFAULT_GEN_CAP)]
    pub gen_cap: u64,
    #[arg(long, default_value_t = DEFAULT_LEVEL_CAP)]
    pub level_cap: u64,
}

#[derive(Debug, Args)]
pub struct MeanRArgs {
    #[command(flatten)]
    pub law: LawArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [10_000u64, 100_000, 1_000_000])]
    pub caps: Vec<u64>,
    #[arg(long, default_value_t = 100_000)]
    pub runs: u64,
}

#[derive(Debug, Args)]
pub struct AcceptArgs {
    /// `all`, or a comma-separated list of criterion names or numbers.
    #[arg(long, default_value = "all")]
    pub suite: String,
}

/// Exit status for an error: 2 for bad configuration or input, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidLaw(_)
        | Error::InvalidInput(_)
        | Error::Config(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Toml(_) => 2,
        _ => 1,
    }
}

struct Output<'a> {
    out: Option<&'a Path>,
    format: Format,
}

impl Output<'_> {
    fn write(&self, text: &str) -> Result<()> {
        match self.out {
            Some(p) => fs::write(p, text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    /// JSON of the whole artifact, or the metadata header followed by the
    /// rows produced by `csv`.
    fn emit<T: Serialize>(
        &self,
        artifact: &Artifact<T>,
        csv: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
    ) -> Result<()> {
        match self.format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(artifact)?;
                s.push('\n');
                self.write(&s)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                csv(&mut w)?;
                let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
                let mut s = artifact.csv_header();
                s.push_str(&String::from_utf8_lossy(&body));
                self.write(&s)
            }
        }
    }
}

fn fit_or_error(samples: &[Sample]) -> std::result::Result<crate::stats::TailFit, String> {
    build_survival(samples, DEFAULT_GRID_BASE)
        .and_then(|t| fit_tail(&t))
        .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TailSummary {
    runs: u64,
    returned: u64,
    duration: std::result::Result<crate::stats::TailFit, String>,
    depth: Option<std::result::Result<crate::stats::TailFit, String>>,
}

/// Runs a parsed command line and returns the exit status.
pub fn run(cli: Cli) -> Result<u8> {
    let out = Output {
        out: cli.out.as_deref(),
        format: cli.format,
    };
    let (seed, workers) = (cli.seed, cli.workers);
    match cli.command {
        Command::Walk(a) => walk(a, seed, workers, &out),
        Command::Bp(a) => bp(a, seed, workers, &out),
        Command::Sde(a) => sde(a, seed, workers, &out),
        Command::Fit(a) => fit(a, seed, &out),
        Command::Sweep(a) => sweep(a, seed, workers, &out),
        Command::MeanR(a) => mean_r(a, seed, workers, &out),
        Command::Accept(a) => accept_cmd(a, seed, workers, &out),
    }
}

fn walk(a: WalkArgs, seed: u64, workers: Option<usize>, out: &Output) -> Result<u8> {
    let law = a.law.load()?;
    let cfg = WalkConfig::new(law.clone())
        .with_step_cap(a.step_cap)
        .with_range_cap(a.range_cap);
    let kind = match a.mode {
        WalkMode::Excursion => "walk-excursion",
        WalkMode::Return => "walk-return",
        WalkMode::Escape => "escape",
    };
    let config = ExperimentConfig::new(kind, Some(law), a.runs, seed)
        .param("step_cap", a.step_cap as f64)
        .param("range_cap", a.range_cap as f64);
    if a.mode == WalkMode::Escape {
        let p = estimate_escape(&cfg, a.runs, seed, workers)?;
        let art = Artifact::new(config, p)?;
        out.emit(&art, |w| {
            w.write_record(["escaped", "runs", "estimate", "lo", "hi"])?;
            let p = &art.result;
            w.write_record([
                p.successes.to_string(),
                p.trials.to_string(),
                p.estimate.to_string(),
                p.lo.to_string(),
                p.hi.to_string(),
            ])?;
            Ok(())
        })?;
        return Ok(0);
    }
    let outcomes = if a.mode == WalkMode::Excursion {
        simulate_excursions(&cfg, a.runs, seed, workers)?
    } else {
        simulate_returns(&cfg, a.runs, seed, workers)?
    };
    if a.outcomes {
        let mut s = String::new();
        for o in &outcomes {
            s.push_str(&serde_json::to_string(o)?);
            s.push('\n');
        }
        out.write(&s)?;
        return Ok(0);
    }
    match out.format {
        Format::Json => {
            let dur: Vec<Sample> = outcomes.iter().map(|o| o.duration_sample()).collect();
            let depth: Vec<Sample> = outcomes.iter().map(|o| o.depth_sample()).collect();
            let summary = TailSummary {
                runs: a.runs,
                returned: outcomes.iter().filter(|o| o.returned).count() as u64,
                duration: fit_or_error(&dur),
                depth: (a.mode == WalkMode::Excursion).then(|| fit_or_error(&depth)),
            };
            out.emit(&Artifact::new(config, summary)?, |_| Ok(()))?;
        }
        Format::Csv => {
            let samples: Vec<Sample> = outcomes
                .iter()
                .map(|o| match a.table {
                    WalkTable::Duration => o.duration_sample(),
                    WalkTable::Depth => o.depth_sample(),
                })
                .collect();
            let table = build_survival(&samples, DEFAULT_GRID_BASE)?;
            let art = Artifact::new(config, outcomes.len())?;
            out.emit(&art, |w| table.write_rows(w))?;
        }
    }
    Ok(0)
}

fn bp(a: BpArgs, seed: u64, workers: Option<usize>, out: &Output) -> Result<u8> {
    let law = a.law.load()?;
    let limits = BpLimits::gen_cap(a.gen_cap);
    let config = |kind: &str| {
        ExperimentConfig::new(kind, Some(law.clone()), a.runs, seed)
            .param("v0", a.v0 as f64)
            .param("gen_cap", a.gen_cap as f64)
            .param("level_cap", a.level_cap as f64)
    };
    match a.mode {
        BpMode::Raw | BpMode::Conditioned | BpMode::Progeny => {
            let (paths, rate) = if a.mode != BpMode::Conditioned {
                (simulate_bp_many(&law, a.v0, &limits, a.runs, seed, workers), None)
            } else {
                let s = sample_conditioned(&law, a.v0, &limits.clone().with_level_cap(a.level_cap), a.runs, seed, workers)?;
                let rate = s.acceptance_rate;
                (s.paths, Some(rate))
            };
            let kind = match a.mode {
                BpMode::Raw => "bp",
                BpMode::Progeny => "bp-progeny",
                _ => "bp-conditioned",
            };
            match out.format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Summary {
                        runs: u64,
                        extinct: u64,
                        acceptance_rate: Option<f64>,
                        extinction: std::result::Result<crate::stats::TailFit, String>,
                        progeny: std::result::Result<crate::stats::TailFit, String>,
                    }
                    let ext: Vec<Sample> = paths.iter().map(|p| p.extinction_sample()).collect();
                    let prog: Vec<Sample> = paths.iter().map(|p| p.progeny_sample()).collect();
                    let s = Summary {
                        runs: a.runs,
                        extinct: paths.iter().filter(|p| p.extinct()).count() as u64,
                        acceptance_rate: rate,
                        extinction: fit_or_error(&ext),
                        progeny: fit_or_error(&prog),
                    };
                    out.emit(&Artifact::new(config(kind), s)?, |_| Ok(()))?;
                }
                Format::Csv => {
                    let samples: Vec<Sample> = paths
                        .iter()
                        .map(|p| if a.mode == BpMode::Progeny { p.progeny_sample() } else { p.extinction_sample() })
                        .collect();
                    let table = build_survival(&samples, DEFAULT_GRID_BASE)?;
                    let art = Artifact::new(config(kind), paths.len())?;
                    out.emit(&art, |w| table.write_rows(w))?;
                }
            }
        }
        BpMode::H => {
            let r = estimate_h(&law, &a.n_grid, a.runs, a.gen_cap, seed, workers)?;
            let art = Artifact::new(config("h"), r)?;
            out.emit(&art, |w| {
                w.write_record(["n", "h", "lo", "hi", "level_cap"])?;
                for e in &art.result.estimates {
                    w.serialize((e.n, e.h_hat, e.ci.0, e.ci.1, e.cap_used))?;
                }
                Ok(())
            })?;
        }
        BpMode::Modified => {
            let p = simulate_modified_bp(&law, a.v0, a.gen_cap, &mut PathCoins::new(seed, 0))?;
            let art = Artifact::new(config("bp-modified"), p)?;
            out.emit(&art, |w| {
                w.write_record(["k", "v", "m", "a"])?;
                let p = &art.result;
                for k in 0..p.trajectory.len() {
                    w.serialize((k, p.trajectory[k], p.martingale_m[k], p.compensator_a[k]))?;
                }
                Ok(())
            })?;
        }
        BpMode::Martingale => {
            let d = martingale_diagnostics_paths(&law, a.v0.max(1), a.gen_cap, a.increments, seed)?;
            let art = Artifact::new(config("martingale"), d)?;
            out.emit(&art, |w| {
                w.write_record(["statistic", "mean", "se", "n"])?;
                for (name, s) in [("first", art.result.first), ("second", art.result.second)] {
                    w.serialize((name, s.mean, s.se, s.n))?;
                }
                Ok(())
            })?;
        }
        BpMode::Overshoot => {
            let r = overshoot_stat(&law, a.x, a.runs, seed, workers)?;
            let art = Artifact::new(config("overshoot").param("x", a.x as f64), r)?;
            out.emit(&art, |w| {
                w.write_record(["overshoot"])?;
                for o in &art.result.overshoots {
                    w.serialize([o])?;
                }
                Ok(())
            })?;
        }
    }
    Ok(0)
}

fn sde(a: SdeArgs, seed: u64, workers: Option<usize>, out: &Output) -> Result<u8> {
    let stepping = if a.fixed_steps { Stepping::Fixed } else { Stepping::Adaptive };
    let cfg = FunctionalConfig::new(a.delta, a.x0)
        .with_dt(a.dt)
        .with_horizon(a.horizon)
        .with_stepping(stepping);
    let config = |kind: &str| {
        ExperimentConfig::new(kind, None, a.runs, seed)
            .param("delta", a.delta)
            .param("x0", a.x0)
            .param("dt", a.dt)
            .param("horizon", a.horizon)
            .param("adaptive", f64::from(u8::from(!a.fixed_steps)))
    };
    match a.mode {
        SdeMode::Path => {
            let mode = match a.post {
                PostMode::Frozen => PostAbsorption::Frozen,
                PostMode::Degenerate => PostAbsorption::DegenerateDrift,
                PostMode::Free => PostAbsorption::Free,
            };
            let p = euler_path(a.delta, a.x0, a.dt, a.horizon, mode, &mut stream_rng(seed, 0))?;
            let art = Artifact::new(config("sde-path"), p)?;
            out.emit(&art, |w| {
                w.write_record(["t", "y"])?;
                for (j, y) in art.result.values.iter().enumerate() {
                    w.serialize((art.result.time(j), y))?;
                }
                Ok(())
            })?;
        }
        SdeMode::Functionals => {
            let r = sample_functionals(&cfg, a.runs, seed, workers)?;
            match out.format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Summary<'a> {
                        sigma0_fit: &'a crate::stats::TailFit,
                        area_fit: &'a crate::stats::TailFit,
                        censored_fraction: f64,
                        warning: &'a Option<String>,
                    }
                    let s = Summary {
                        sigma0_fit: &r.sigma0_fit,
                        area_fit: &r.area_fit,
                        censored_fraction: r.censored_fraction,
                        warning: &r.warning,
                    };
                    out.emit(&Artifact::new(config("sde-functionals"), s)?, |_| Ok(()))?;
                }
                Format::Csv => {
                    let art = Artifact::new(config("sde-functionals"), r.samples.len())?;
                    out.emit(&art, |w| {
                        w.write_record(["sigma0", "area", "censored"])?;
                        for s in &r.samples {
                            w.serialize((s.sigma0_sample().value, s.area, s.censored))?;
                        }
                        Ok(())
                    })?;
                }
            }
        }
        SdeMode::Scaling => {
            let r = scaling_check(&cfg, a.x2, a.runs, seed, workers)?;
            let art = Artifact::new(config("sde-scaling").param("x2", a.x2), r)?;
            out.emit(&art, |w| {
                w.write_record(["statistic", "p_value", "n_a", "n_b"])?;
                let r = &art.result;
                w.serialize((r.statistic, r.p_value, r.n_a, r.n_b))?;
                Ok(())
            })?;
        }
        SdeMode::Ab => {
            let r = estimate_ab(&cfg, a.runs, seed, workers)?;
            let art = Artifact::new(config("sde-ab"), r)?;
            out.emit(&art, |w| {
                w.write_record(["constant", "value", "lo", "hi", "flatness", "reliable"])?;
                for (name, p) in [("a", art.result.a), ("b", art.result.b)] {
                    w.serialize((name, p.value, p.ci.0, p.ci.1, p.flatness, p.reliable))?;
                }
                Ok(())
            })?;
        }
        SdeMode::Marginal => {
            let law = CookieLaw::equal_strength(a.delta)?;
            let mut m = MarginalConfig::new(law, a.n);
            m.runs = a.runs;
            m.dt = a.dt;
            m.conditioned = a.conditioned;
            let r = marginal_distance_bp_vs_sde(&m, seed, workers)?;
            let art = Artifact::new(
                config("sde-marginal")
                    .param("n", a.n as f64)
                    .param("conditioned", f64::from(u8::from(a.conditioned))),
                r,
            )?;
            out.emit(&art, |w| {
                w.write_record(["statistic", "p_value", "sde_drift"])?;
                let r = &art.result;
                w.serialize((r.ks.statistic, r.ks.p_value, r.sde_drift))?;
                Ok(())
            })?;
        }
    }
    Ok(0)
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        other => Err(Error::InvalidInput(format!("censored flag {other:?} is not a boolean"))),
    }
}

/// Reads `value,censored` rows (header required).
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let value: f64 = rec
            .get(0)
            .ok_or_else(|| Error::InvalidInput("missing value column".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::InvalidInput(format!("bad value: {e}")))?;
        let censored = parse_bool(rec.get(1).unwrap_or("0"))?;
        out.push(Sample { value, censored });
    }
    Ok(out)
}

fn fit(a: FitArgs, seed: u64, out: &Output) -> Result<u8> {
    let samples = read_samples(&a.input)?;
    let table = build_survival(&samples, a.grid_base)?;
    let window = match (a.window_lo, a.window_hi) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(0.0), hi.unwrap_or(f64::INFINITY))),
    };
    let f = fit_tail_with(
        &table,
        &FitOptions {
            window,
            ..FitOptions::default()
        },
    )?;
    let config = ExperimentConfig::new("fit", None, samples.len() as u64, seed).param("grid_base", a.grid_base);
    let art = Artifact::new(config, f)?;
    out.emit(&art, |w| table.write_rows(w))?;
    Ok(0)
}

fn sweep(a: SweepArgs, seed: u64, workers: Option<usize>, out: &Output) -> Result<u8> {
    let budget = SweepBudget {
        runs: a.runs,
        gen_cap: a.gen_cap,
        level_cap: a.level_cap,
    };
    let rows = phase_sweep(&a.deltas, &budget, seed, workers);
    let config = ExperimentConfig::new("phase-sweep", None, a.runs, seed)
        .param("gen_cap", a.gen_cap as f64)
        .param("level_cap", a.level_cap as f64);
    let art = Artifact::new(config, rows)?;
    out.emit(&art, |w| {
        w.write_record([
            "delta", "depth", "depth_lo", "depth_hi", "duration", "duration_lo", "duration_hi", "return", "return_lo",
            "return_hi", "verdict", "errors",
        ])?;
        let cell = |e: &Option<crate::experiment::ExponentEstimate>| match e {
            Some(e) => [e.exponent.to_string(), e.ci.0.to_string(), e.ci.1.to_string()],
            None => [String::new(), String::new(), String::new()],
        };
        for r in &art.result {
            let mut rec = vec![r.delta.to_string()];
            rec.extend(cell(&r.depth));
            rec.extend(cell(&r.duration));
            rec.extend(cell(&r.ret));
            rec.push(r.verdict.map_or(String::new(), |v| format!("{v:?}")));
            rec.push(r.errors.join("; "));
            w.write_record(rec)?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn mean_r(a: MeanRArgs, seed: u64, workers: Option<usize>, out: &Output) -> Result<u8> {
    let law = a.law.load()?;
    let r = censored_mean_r(&law, &a.caps, a.runs, seed, workers)?;
    let mut config = ExperimentConfig::new("mean-r", Some(law), a.runs, seed);
    for c in &r.caps {
        config = config.param("cap", *c as f64);
    }
    let art = Artifact::new(config, r)?;
    out.emit(&art, |w| {
        w.write_record(["cap", "mean", "se"])?;
        for (c, (m, se)) in art.result.caps.iter().zip(&art.result.means) {
            w.serialize((c, m, se))?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn accept_cmd(a: AcceptArgs, seed: u64, workers: Option<usize>, out: &Output) -> Result<u8> {
    let criteria = accept::select(&a.suite)?;
    let to_stdout = out.out.is_none();
    let quiet_stdout = to_stdout && out.format == Format::Json;
    let report = accept::run_suite(&criteria, seed, workers, &Targets::default(), |r| {
        if quiet_stdout {
            eprintln!("{}", r.line());
        } else {
            println!("{}", r.line());
        }
    });
    match out.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report)?;
            s.push('\n');
            out.write(&s)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["id", "name", "passed", "elapsed_s", "detail"])?;
            for r in &report.results {
                w.serialize((r.id, &r.name, r.passed, r.elapsed_s, &r.detail))?;
            }
            let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            if !to_stdout {
                out.write(&String::from_utf8_lossy(&body))?;
            }
        }
    }
    Ok(if report.passed { 0 } else { 1 })
}
