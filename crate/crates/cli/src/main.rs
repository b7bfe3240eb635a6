//! `cranbf`: scenario generation, feasibility search, full solves and sweeps.
//!
//! Exit status is 0 on success, 2 when no feasible starting point was found
//! (a blame table goes to stderr) and 1 for every other error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cran_bf::archive::{
    beamformers_to_json, load_beamformers, load_scenario, scenario_to_json, write_text,
};
use cran_bf::driver::{run, OuterRecord, RunOptions, Termination};
use cran_bf::feasibility::{find_feasible, FeasibilityOptions, FeasibilityReport};
use cran_bf::physics::max_relative_violation;
use cran_bf::scenario::generate;
use cran_bf::sweep::{
    paired_means, rows_to_csv, run_sweep, timing_csv, Sweep, SweepParam, SweepRow,
};
use cran_bf::{ChannelSet, Execution, RateReport, ResidualTable, Scenario, ScenarioConfig};

const FEASIBILITY_SCHEMA: &str = "cranbf.feasibility/1";
const SUMMARY_SCHEMA: &str = "cranbf.summary/1";
const SWEEP_SCHEMA: &str = "cranbf.sweep/1";

#[derive(Parser)]
#[command(
    name = "cranbf",
    version,
    about = "Joint fronthaul/access beamforming for C-RANs with SWIPT"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and write `scenario.json`.
    Gen(Common),
    /// Search for a feasible starting point.
    Feas(Common),
    /// Search for a feasible start (or load one) and run the outer loop.
    Solve(SolveArgs),
    /// Run a parameter grid over several seeds.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// TOML scenario template; the full-size default template when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario archive written by `gen`; overrides --config and --seed.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Run every kernel on the calling thread.
    #[arg(long)]
    sequential: bool,
    /// Also write wall-clock timings (the only outputs that differ between runs).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Momentum-accelerated inner solver.
    #[arg(long)]
    accelerated: bool,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Relative WSR change that stops the outer loop.
    #[arg(long)]
    tol: Option<f64>,
    /// Starting beamformers (`start.json` from `feas`) instead of a fresh search.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    accelerated: bool,
    /// Grid as `param=v1,v2,...` with param one of `n`, `p_c` (dBm), `e_min` (mW).
    #[arg(long)]
    sweep: String,
    /// Seeds per cell, numbered from --seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

/// Failure that maps to its own exit status.
#[derive(Debug)]
struct Infeasible;

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("no feasible starting point found")
    }
}

impl std::error::Error for Infeasible {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Infeasible>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Gen(c) | Command::Feas(c) => c,
        Command::Solve(a) => &a.common,
        Command::Bench(a) => &a.common,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("building the thread pool")?;
    pool.install(|| match &cli.command {
        Command::Gen(c) => cmd_gen(c),
        Command::Feas(c) => cmd_feas(c).map(|_| ()),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
    })
}

impl Common {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn template(&self) -> Result<ScenarioConfig> {
        match &self.config {
            Some(p) => Ok(ScenarioConfig::load(p)?),
            None => Ok(ScenarioConfig::default()),
        }
    }

    fn instance(&self) -> Result<(Scenario, ChannelSet)> {
        match &self.scenario {
            Some(p) => Ok(load_scenario(p)?),
            None => Ok(generate(&self.template()?, self.seed)?),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn save(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_text(&dir.join(name), text)?;
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn cmd_gen(c: &Common) -> Result<()> {
    let (sc, ch) = c.instance()?;
    let dir = c.out_dir()?;
    save(dir, "scenario.json", &scenario_to_json(&sc, &ch))?;
    eprintln!(
        "wrote {} (N={}, K={}, Q={}, G={})",
        dir.join("scenario.json").display(),
        sc.num_rrh,
        sc.num_iu,
        sc.num_eu,
        sc.num_groups
    );
    Ok(())
}

#[derive(Serialize)]
struct Blame {
    component: String,
    scaled_violation: f64,
}

#[derive(Serialize)]
struct FeasibilityFile<'a> {
    schema: &'static str,
    seed: u64,
    blame: Vec<Blame>,
    #[serde(flatten)]
    report: &'a FeasibilityReport,
}

fn feasibility_trace_csv(rep: &FeasibilityReport) -> String {
    let mut out = String::from("attempt,t,s,cost,component_id\n");
    for r in &rep.trace {
        let id = r.component_id.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.attempt, r.t, r.s, r.cost, id
        ));
    }
    out
}

/// Runs the search, writes its files and fails with [`Infeasible`] when no
/// feasible point came out.
fn feasibility_stage(
    c: &Common,
    sc: &Scenario,
    ch: &ChannelSet,
    dir: &Path,
) -> Result<FeasibilityReport> {
    let start = Instant::now();
    let rep = find_feasible(
        sc,
        ch,
        sc.seed,
        &FeasibilityOptions::from_scenario(sc, c.exec()),
    )?;
    let wall_s = start.elapsed().as_secs_f64();
    let blame: Vec<Blame> = rep
        .blame(sc)
        .into_iter()
        .map(|(component, scaled_violation)| Blame {
            component,
            scaled_violation,
        })
        .collect();
    let file = FeasibilityFile {
        schema: FEASIBILITY_SCHEMA,
        seed: sc.seed,
        blame,
        report: &rep,
    };
    save(dir, "feasibility.json", &json(&file))?;
    save(dir, "feasibility_trace.csv", &feasibility_trace_csv(&rep))?;
    if c.timing {
        save(
            dir,
            "feasibility_timing.csv",
            &format!("stage,wall_s\nfeasibility,{wall_s}\n"),
        )?;
    }
    if !rep.feasible {
        eprintln!(
            "infeasible after {} SCA iterations over {} attempts",
            rep.sca_iterations, rep.attempts
        );
        eprintln!("{:<20} {:>14}", "component", "scaled excess");
        for b in &file.blame {
            eprintln!("{:<20} {:>14.6e}", b.component, b.scaled_violation);
        }
        return Err(Infeasible.into());
    }
    save(dir, "start.json", &beamformers_to_json(&rep.point))?;
    eprintln!(
        "feasible after {} SCA iterations ({wall_s:.2} s)",
        rep.sca_iterations
    );
    Ok(rep)
}

fn cmd_feas(c: &Common) -> Result<FeasibilityReport> {
    let (sc, ch) = c.instance()?;
    let dir = c.out_dir()?;
    feasibility_stage(c, &sc, &ch, dir)
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'static str,
    seed: u64,
    accelerated: bool,
    termination: Termination,
    outer_iterations: usize,
    inner_iterations: usize,
    start_wsr: f64,
    final_wsr: f64,
    max_violation: f64,
    report: &'a RateReport,
    residuals: &'a ResidualTable,
    last: Option<&'a OuterRecord>,
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let c = &a.common;
    let (sc, ch) = c.instance()?;
    let dir = c.out_dir()?;
    let v0 = match &a.init {
        Some(p) => load_beamformers(p)?,
        None => feasibility_stage(c, &sc, &ch, dir)?.point,
    };
    let mut opts = RunOptions::from_scenario(&sc, a.accelerated, c.exec());
    if let Some(m) = a.max_outer {
        opts.max_outer = m;
    }
    if let Some(t) = a.tol {
        opts.tol_outer = t;
    }
    let hist = run(&sc, &ch, &v0, &opts)?;
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        seed: sc.seed,
        accelerated: a.accelerated,
        termination: hist.termination,
        outer_iterations: hist.outer_iterations(),
        inner_iterations: hist.inner_iterations(),
        start_wsr: hist.start_wsr,
        final_wsr: hist.report.wsr,
        max_violation: max_relative_violation(&hist.report, &sc),
        report: &hist.report,
        residuals: &hist.residuals,
        last: hist.records.last(),
    };
    save(dir, "history.csv", &hist.to_csv())?;
    save(dir, "summary.json", &json(&summary))?;
    save(dir, "solution.json", &beamformers_to_json(&hist.point))?;
    if c.timing {
        save(dir, "timing.csv", &hist.timing_csv())?;
    }
    eprintln!(
        "WSR {:.6} -> {:.6} bits/s/Hz in {} outer / {} inner iterations ({:?}, {:.2} s)",
        hist.start_wsr,
        hist.report.wsr,
        hist.outer_iterations(),
        hist.inner_iterations(),
        hist.termination,
        hist.wall_s()
    );
    Ok(())
}

fn parse_sweep(arg: &str, first_seed: u64, seeds: u64) -> Result<Sweep> {
    let Some((name, list)) = arg.split_once('=') else {
        bail!("--sweep expects `param=v1,v2,...`, got `{arg}`");
    };
    let param: SweepParam = name.trim().parse().map_err(anyhow::Error::msg)?;
    let values = list
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value `{v}`"))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() || seeds == 0 {
        bail!("empty grid");
    }
    Ok(Sweep {
        param,
        values,
        seeds: (first_seed..first_seed + seeds).collect(),
    })
}

#[derive(Serialize)]
struct SweepFile<'a> {
    schema: &'static str,
    param: SweepParam,
    /// Grid in SI units.
    values: Vec<f64>,
    seeds: &'a [u64],
    accelerated: bool,
    /// Mean WSR per grid value over the seeds feasible in every cell.
    paired_mean_wsr: Vec<f64>,
    paired_seeds: usize,
    rows: &'a [SweepRow],
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let c = &a.common;
    if c.scenario.is_some() {
        bail!("bench generates its own scenarios; use --config");
    }
    let sweep = parse_sweep(&a.sweep, c.seed, a.seeds)?;
    let config = c.template()?;
    let dir = c.out_dir()?;
    let rows = run_sweep(&config, &sweep, a.accelerated, c.exec());
    let (means, paired) = paired_means(&rows, &sweep);
    let file = SweepFile {
        schema: SWEEP_SCHEMA,
        param: sweep.param,
        values: sweep.values.iter().map(|&v| sweep.param.to_si(v)).collect(),
        seeds: &sweep.seeds,
        accelerated: a.accelerated,
        paired_mean_wsr: means.clone(),
        paired_seeds: paired,
        rows: &rows,
    };
    save(dir, "sweep.csv", &rows_to_csv(&rows))?;
    if c.timing {
        save(dir, "sweep_timing.csv", &timing_csv(&rows))?;
    }
    save(dir, "sweep.json", &json(&file))?;
    for (v, m) in file.values.iter().zip(&means) {
        eprintln!(
            "{}={v:<12e} mean WSR {m:.6} ({paired} paired seeds)",
            sweep.param.label()
        );
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "seed {} at {}: {}",
            r.seed,
            r.value,
            r.error.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}
