//! Parameter grids over seeds with one long-format row per run.
//!
//! Each run generates the scenario, searches for a feasible start and runs
//! the outer loop. Runs are independent and are spread over the rayon pool
//! when the execution mode allows it; rows always come back in grid order.
//! Wall times live in a separate table so the main table is reproducible.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::driver::{run, RunOptions};
use crate::exec::{map_indices, Execution};
use crate::feasibility::{find_feasible, FeasibilityOptions};
use crate::scenario::{dbm_to_watts, generate, ScenarioConfig};

/// Scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// `N`, the number of RRHs.
    RrhCount,
    /// Center power budget, given in dBm.
    CenterPowerDbm,
    /// Per-EU energy requirement, given in mW.
    EnergyMinMw,
}

impl SweepParam {
    /// Column label in the output table, in SI units.
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::RrhCount => "rrh_count",
            SweepParam::CenterPowerDbm => "p_c_w",
            SweepParam::EnergyMinMw => "e_min_w",
        }
    }

    /// `value` converted from configuration units to the SI units written out.
    pub fn to_si(self, value: f64) -> f64 {
        match self {
            SweepParam::RrhCount => value,
            SweepParam::CenterPowerDbm => dbm_to_watts(value),
            SweepParam::EnergyMinMw => value * 1e-3,
        }
    }

    pub fn apply(self, config: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut c = config.clone();
        match self {
            SweepParam::RrhCount => c.network.rrh_count = value.round() as usize,
            SweepParam::CenterPowerDbm => c.power.power_center_dbm = value,
            SweepParam::EnergyMinMw => c.power.energy_min_mw = value,
        }
        c
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "n" | "N" | "rrh_count" => Ok(SweepParam::RrhCount),
            "p_c" | "p_c_dbm" => Ok(SweepParam::CenterPowerDbm),
            "e_min" | "e_min_mw" => Ok(SweepParam::EnergyMinMw),
            other => Err(format!(
                "unknown sweep parameter `{other}` (expected n, p_c or e_min)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    /// Grid in configuration units (dBm for `p_c`, mW for `e_min`).
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    /// Grid value in SI units.
    pub value: f64,
    pub seed: u64,
    pub feasible: bool,
    /// Exact WSR at the final point; `NaN` when no feasible start was found.
    pub wsr: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub sca_iterations: usize,
    /// Failure message for runs that did not finish.
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// One grid cell: generate, search for a feasible start, solve. Runs
/// sequentially inside; parallelism is across cells.
pub fn run_cell(
    config: &ScenarioConfig,
    param: SweepParam,
    value: f64,
    seed: u64,
    accelerated: bool,
) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        param,
        value: param.to_si(value),
        seed,
        feasible: false,
        wsr: f64::NAN,
        outer_iterations: 0,
        inner_iterations: 0,
        sca_iterations: 0,
        error: None,
        wall_ms: 0.0,
    };
    let exec = Execution::Sequential;
    let outcome = (|| -> crate::Result<()> {
        let (sc, ch) = generate(&param.apply(config, value), seed)?;
        let feas = find_feasible(
            &sc,
            &ch,
            seed,
            &FeasibilityOptions::from_scenario(&sc, exec),
        )?;
        row.sca_iterations = feas.sca_iterations;
        if !feas.feasible {
            return Ok(());
        }
        row.feasible = true;
        let hist = run(
            &sc,
            &ch,
            &feas.point,
            &RunOptions::from_scenario(&sc, accelerated, exec),
        )?;
        row.wsr = hist.report.wsr;
        row.outer_iterations = hist.outer_iterations();
        row.inner_iterations = hist.inner_iterations();
        Ok(())
    })();
    if let Err(e) = outcome {
        row.feasible = false;
        row.error = Some(e.to_string());
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Every `(value, seed)` cell, values outermost.
pub fn run_sweep(
    config: &ScenarioConfig,
    sweep: &Sweep,
    accelerated: bool,
    exec: Execution,
) -> Vec<SweepRow> {
    let ns = sweep.seeds.len();
    map_indices(exec, sweep.values.len() * ns, |i| {
        run_cell(
            config,
            sweep.param,
            sweep.values[i / ns],
            sweep.seeds[i % ns],
            accelerated,
        )
    })
}

/// Long-format table: `param,value,seed,feasible,wsr,outer_iterations,inner_iterations,sca_iterations`.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "param,value,seed,feasible,wsr,outer_iterations,inner_iterations,sca_iterations\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.param.label(),
            r.value,
            r.seed,
            r.feasible,
            r.wsr,
            r.outer_iterations,
            r.inner_iterations,
            r.sca_iterations
        );
    }
    out
}

/// `param,value,seed,wall_ms`, row for row with [`rows_to_csv`].
pub fn timing_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,value,seed,wall_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.param.label(),
            r.value,
            r.seed,
            r.wall_ms
        );
    }
    out
}

/// Mean WSR per grid value over the seeds that were feasible in every cell,
/// so each mean is taken over the same channel draws. Also returns how many
/// seeds that was.
pub fn paired_means(rows: &[SweepRow], sweep: &Sweep) -> (Vec<f64>, usize) {
    let ns = sweep.seeds.len();
    let keep: Vec<usize> = (0..ns)
        .filter(|&s| (0..sweep.values.len()).all(|v| rows[v * ns + s].feasible))
        .collect();
    let means = (0..sweep.values.len())
        .map(|v| keep.iter().map(|&s| rows[v * ns + s].wsr).sum::<f64>() / keep.len() as f64)
        .collect();
    (means, keep.len())
}
