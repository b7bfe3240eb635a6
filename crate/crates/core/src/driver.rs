//! Successive convex approximation outer loop.
//!
//! Each outer iteration builds the surrogate bundle at the current point,
//! solves the convex subproblem in the dual domain and moves to its primal
//! solution. The move is only taken when the new point is feasible for the
//! exact constraints and does not lower the exact weighted sum rate; otherwise
//! the longest such step towards the candidate is found by bisection. The
//! first time no step works, the proximal weights are halved and the
//! subproblem solved again; when that also fails, or later in the run, the
//! point is kept and the run is declared converged.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::dual::{solve_subproblem, InnerOptions, Subproblem};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::physics::{
    evaluate, max_relative_violation, weighted_sum_rate, BeamformerSet, RateReport, ResidualTable,
};
use crate::scenario::{ChannelSet, Scenario};
use crate::surrogates::{build, SurrogateBundle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub accelerated: bool,
    pub max_outer: usize,
    /// Relative change of the exact WSR below which the loop stops.
    pub tol_outer: f64,
    /// Largest relative violation tolerated at the starting point.
    pub start_tol: f64,
    /// Largest relative violation tolerated at an accepted iterate.
    pub accept_tol: f64,
    /// Bisection steps used to find the longest admissible step when the
    /// full step is not admissible.
    pub line_search: usize,
    pub inner: InnerOptions,
    pub exec: Execution,
}

impl RunOptions {
    pub fn from_scenario(sc: &Scenario, accelerated: bool, exec: Execution) -> Self {
        Self {
            accelerated,
            max_outer: sc.solver.max_outer,
            tol_outer: sc.solver.tol_outer,
            start_tol: 1e-6,
            accept_tol: 1e-7,
            line_search: 30,
            inner: InnerOptions::from_scenario(sc, accelerated, exec),
            exec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    /// Full step to the subproblem solution.
    Full,
    /// Shortened step after at least one halving.
    Damped,
    /// Step accepted only after the proximal weights were halved.
    RhoHalved,
    /// No acceptable step; the point is kept and the run ends.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxOuter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub t: usize,
    /// Exact WSR at the iterate kept after this iteration.
    pub wsr: f64,
    /// Minorant WSR of the subproblem solution.
    pub surrogate_wsr: f64,
    /// Largest relative constraint violation at the kept iterate.
    pub max_violation: f64,
    pub inner_iterations: usize,
    /// Fraction of the step towards the subproblem solution that was taken.
    pub step: f64,
    pub action: StepAction,
    pub rho1: f64,
    pub rho2: f64,
    #[serde(skip)]
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub records: Vec<OuterRecord>,
    pub point: BeamformerSet,
    pub report: RateReport,
    pub residuals: ResidualTable,
    pub start_wsr: f64,
    pub termination: Termination,
}

impl RunHistory {
    pub fn outer_iterations(&self) -> usize {
        self.records.len()
    }

    pub fn inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn wall_s(&self) -> f64 {
        self.records.iter().map(|r| r.wall_s).sum()
    }

    /// One row per outer iteration. Wall times are left out so the file is
    /// reproducible; see [`RunHistory::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,wsr,surrogate_wsr,max_violation,inner_iterations,step,action,rho1,rho2\n",
        );
        for r in &self.records {
            let action = serde_json::to_value(r.action).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.t,
                r.wsr,
                r.surrogate_wsr,
                r.max_violation,
                r.inner_iterations,
                r.step,
                action.as_str().unwrap_or_default(),
                r.rho1,
                r.rho2
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("t,wall_s\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{}", r.t, r.wall_s);
        }
        out
    }
}

/// Runs the outer loop from the feasible point `v0`.
pub fn run(
    sc: &Scenario,
    ch: &ChannelSet,
    v0: &BeamformerSet,
    opts: &RunOptions,
) -> Result<RunHistory> {
    if !v0.shape_matches(sc) {
        return Err(Error::DimensionMismatch(
            "starting point does not match the scenario".into(),
        ));
    }
    let mut report = evaluate(v0, ch, sc, opts.exec)?;
    let start_violation = max_relative_violation(&report, sc);
    // NaN counts as infeasible
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(start_violation <= opts.start_tol) {
        let residuals = ResidualTable::from_report(&report, sc);
        return Err(Error::InfeasibleStart {
            max_violation: start_violation,
            residuals: Box::new(residuals),
        });
    }
    let mut inner_opts = opts.inner;
    inner_opts.accelerated = opts.accelerated;
    let mut point = v0.clone();
    let mut cached = report.service_rates();
    let (mut rho1, mut rho2) = (sc.solver.rho1, sc.solver.rho2);
    let mut halved = false;
    let mut records = Vec::new();
    let mut termination = Termination::MaxOuter;
    let start_wsr = report.wsr;

    for t in 1..=opts.max_outer {
        let clock = Instant::now();
        let bundle = build(&point, ch, sc, &cached, opts.exec)?;
        let mut attempt = try_step(
            &bundle,
            &point,
            &report,
            ch,
            sc,
            rho1,
            rho2,
            opts,
            &inner_opts,
        )?;
        let mut inner_iterations = attempt.inner_iterations;
        let mut action = match attempt.step {
            Some((1.0, ..)) => StepAction::Full,
            Some(_) => StepAction::Damped,
            None => StepAction::Rejected,
        };
        if attempt.step.is_none() && !halved {
            halved = true;
            rho1 *= 0.5;
            rho2 *= 0.5;
            attempt = try_step(
                &bundle,
                &point,
                &report,
                ch,
                sc,
                rho1,
                rho2,
                opts,
                &inner_opts,
            )?;
            inner_iterations += attempt.inner_iterations;
            if attempt.step.is_some() {
                action = StepAction::RhoHalved;
            }
        }

        let prev_wsr = report.wsr;
        let mut tau = 0.0;
        if let Some((step, cand, rep)) = attempt.step {
            tau = step;
            cached = bundle.service_rates(&cand, sc);
            point = cand;
            report = rep;
        }
        records.push(OuterRecord {
            t,
            wsr: report.wsr,
            surrogate_wsr: attempt.surrogate_wsr,
            max_violation: max_relative_violation(&report, sc),
            inner_iterations,
            step: tau,
            action,
            rho1,
            rho2,
            wall_s: clock.elapsed().as_secs_f64(),
        });
        let change = (report.wsr - prev_wsr).abs() / prev_wsr.abs().max(f64::MIN_POSITIVE);
        if action == StepAction::Rejected || change < opts.tol_outer {
            termination = Termination::Converged;
            break;
        }
    }
    let residuals = ResidualTable::from_report(&report, sc);
    Ok(RunHistory {
        records,
        point,
        report,
        residuals,
        start_wsr,
        termination,
    })
}

struct Attempt {
    /// Step length, point and report of the accepted move, if any.
    step: Option<(f64, BeamformerSet, RateReport)>,
    surrogate_wsr: f64,
    inner_iterations: usize,
}

/// Solves the subproblem at `point` and finds the longest admissible step
/// towards its solution.
#[allow(clippy::too_many_arguments)]
fn try_step(
    bundle: &SurrogateBundle,
    point: &BeamformerSet,
    report: &RateReport,
    ch: &ChannelSet,
    sc: &Scenario,
    rho1: f64,
    rho2: f64,
    opts: &RunOptions,
    inner_opts: &InnerOptions,
) -> Result<Attempt> {
    let inner = solve_subproblem(
        &Subproblem::with_rho(bundle, sc, rho1, rho2, opts.exec),
        inner_opts,
    )?;
    let surrogate_wsr = weighted_sum_rate(&inner.rates, &sc.alpha);
    let admissible = |rep: &RateReport| {
        max_relative_violation(rep, sc) <= opts.accept_tol && rep.wsr >= report.wsr
    };
    let full = evaluate(&inner.point, ch, sc, opts.exec)?;
    let step = if admissible(&full) {
        Some((1.0, inner.point.clone(), full))
    } else {
        // `lo` is always admissible since it starts at the current point.
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut best = None;
        for _ in 0..opts.line_search {
            let mid = 0.5 * (lo + hi);
            let cand = point.lerp(&inner.point, mid);
            let rep = evaluate(&cand, ch, sc, opts.exec)?;
            if admissible(&rep) {
                lo = mid;
                best = Some((mid, cand, rep));
            } else {
                hi = mid;
            }
        }
        best
    };
    Ok(Attempt {
        step,
        surrogate_wsr,
        inner_iterations: inner.iterations,
    })
}
