//! Search for a starting point that satisfies every constraint.
//!
//! The fronthaul and energy constraints are folded into the hinge cost
//! `h(V) = sum_n (R_A,n - R_F,n)^+ + sum_q (req_q - P_R,q)^+`, while the power
//! constraints are kept as a projection. Each outer iteration replaces `h` by
//! a convex upper model built at the current point (rate minorants, smoothed
//! load, linearized RF power) and runs projected stochastic subgradient
//! descent on it, one randomly drawn hinge component per step.
//!
//! Two details keep the walk well scaled. Every component is divided by its
//! natural size (the EU requirement, or the anchor fronthaul rate), and the
//! step on the access and fronthaul beamformers is multiplied by the
//! per-RRH and per-link power budget. The model targets carry a small
//! relative margin so that the exact hinge ends up at zero rather than at
//! round-off.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numerics::{fro2, random_phases, CMat};
use crate::physics::{evaluate, required_rf_powers, BeamformerSet, RateReport};
use crate::scenario::{ChannelSet, Scenario};
use crate::surrogates::{build, SurrogateBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// `2 / (M sqrt(s))` in budget-scaled units.
    Diminishing,
    /// Polyak step onto the zero of the drawn component's linearization,
    /// capped by the diminishing step.
    Polyak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityOptions {
    pub feas_tol: f64,
    pub max_sca: usize,
    /// Draws per outer iteration are `inner_per_component * (N + Q)`.
    pub inner_per_component: usize,
    pub restarts: usize,
    /// Relative margin added to every model target.
    pub margin: f64,
    pub tol_outer: f64,
    /// Outer iterations without a new best scaled cost before the attempt
    /// is abandoned.
    pub patience: usize,
    pub step: StepRule,
    pub exec: Execution,
}

impl FeasibilityOptions {
    pub fn from_scenario(sc: &Scenario, exec: Execution) -> Self {
        Self {
            feas_tol: 1e-9,
            max_sca: 50,
            inner_per_component: 200,
            restarts: 3,
            margin: 1e-3,
            tol_outer: sc.solver.tol_outer,
            patience: 3,
            step: StepRule::Diminishing,
            exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityTraceRow {
    pub attempt: usize,
    pub t: usize,
    /// Draws spent in this outer iteration.
    pub s: usize,
    pub cost: f64,
    /// Component with the largest scaled violation, `None` when feasible.
    pub component_id: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    #[serde(skip)]
    pub point: BeamformerSet,
    /// Exact hinge cost (fronthaul parts in bits/s/Hz, energy parts in watts).
    pub cost: f64,
    /// Fronthaul components first (one per RRH), then one per EU.
    pub per_component: Vec<f64>,
    /// Hinge components divided by their natural size.
    pub scaled_components: Vec<f64>,
    pub sca_iterations: usize,
    pub attempts: usize,
    pub feasible: bool,
    pub trace: Vec<FeasibilityTraceRow>,
}

impl FeasibilityReport {
    /// Component names with their scaled violation, worst first, violated
    /// components only.
    pub fn blame(&self, sc: &Scenario) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .scaled_components
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(m, &v)| (component_name(m, sc), v))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}

pub fn component_name(m: usize, sc: &Scenario) -> String {
    if m < sc.num_rrh {
        format!("fronthaul[rrh {m}]")
    } else {
        format!("energy[eu {}]", m - sc.num_rrh)
    }
}

/// Equal power split with random phases: every RRH and the center transmit
/// exactly at their budgets.
pub fn initial_point<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> BeamformerSet {
    let mut bf = BeamformerSet::zeros(sc);
    let m = sc.rrh_antennas;
    for v in bf.v.iter_mut() {
        for n in 0..sc.num_rrh {
            let amp = (sc.p_rrh[n] / (m * sc.access_streams * sc.num_services()) as f64).sqrt();
            let block = random_phases(rng, m, sc.access_streams) * Complex64::new(amp, 0.0);
            v.view_mut((n * m, 0), (m, sc.access_streams))
                .copy_from(&block);
        }
    }
    let amp =
        (sc.p_center / (sc.num_rrh * sc.center_antennas * sc.fronthaul_streams) as f64).sqrt();
    for u in bf.u.iter_mut() {
        *u =
            random_phases(rng, sc.center_antennas, sc.fronthaul_streams) * Complex64::new(amp, 0.0);
    }
    bf
}

fn exact_components(rep: &RateReport, req: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut raw = Vec::with_capacity(rep.r_f.len() + req.len());
    let mut scaled = Vec::with_capacity(raw.capacity());
    for (a, f) in rep.r_a.iter().zip(&rep.r_f) {
        let h = (a - f).max(0.0);
        raw.push(h);
        scaled.push(h / f.max(1.0));
    }
    for (r, p) in req.iter().zip(&rep.p_r) {
        let h = (r - p).max(0.0);
        raw.push(h);
        scaled.push(if *r > 0.0 { h / r } else { 0.0 });
    }
    (raw, scaled)
}

/// Exact hinge cost and its components (fronthaul first, then energy).
pub fn infeasibility_cost(
    bf: &BeamformerSet,
    ch: &ChannelSet,
    sc: &Scenario,
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    let req = required_rf_powers(sc)?;
    let rep = evaluate(bf, ch, sc, exec)?;
    let (raw, _) = exact_components(&rep, &req);
    Ok((raw.iter().sum(), raw))
}

/// Convex upper model of the hinge cost built into `bundle`, without margins.
pub fn surrogate_cost(
    bf: &BeamformerSet,
    bundle: &SurrogateBundle,
    sc: &Scenario,
) -> (f64, Vec<f64>) {
    let model = ComponentModel::plain(bundle, sc);
    let comps: Vec<f64> = (0..sc.num_rrh + sc.num_eu)
        .map(|m| model.value(m, bf))
        .collect();
    (comps.iter().sum(), comps)
}

/// Hinge components of the model with optional margins and weights.
struct ComponentModel<'a> {
    bundle: &'a SurrogateBundle,
    sc: &'a Scenario,
    /// Added to each component before the positive part, in its raw units.
    margin: Vec<f64>,
    /// Each component is divided by its weight.
    weight: Vec<f64>,
}

impl<'a> ComponentModel<'a> {
    fn plain(bundle: &'a SurrogateBundle, sc: &'a Scenario) -> Self {
        let n = sc.num_rrh + sc.num_eu;
        Self {
            bundle,
            sc,
            margin: vec![0.0; n],
            weight: vec![1.0; n],
        }
    }

    fn scaled(bundle: &'a SurrogateBundle, sc: &'a Scenario, rel_margin: f64) -> Self {
        let mut margin = Vec::new();
        let mut weight = Vec::new();
        for n in 0..sc.num_rrh {
            let w = bundle.fronthaul_rate(n, &bundle.anchor).max(1.0);
            weight.push(w);
            margin.push(rel_margin * w);
        }
        for q in 0..sc.num_eu {
            let req = bundle.required_rf[q];
            weight.push(if req > 0.0 { req } else { 1.0 });
            margin.push(rel_margin * req);
        }
        Self {
            bundle,
            sc,
            margin,
            weight,
        }
    }

    fn inner(&self, m: usize, bf: &BeamformerSet) -> f64 {
        let (b, sc) = (self.bundle, self.sc);
        let raw = if m < sc.num_rrh {
            b.fronthaul_load(m, bf, sc) - b.fronthaul_rate(m, bf)
        } else {
            let q = m - sc.num_rrh;
            b.required_rf[q] - b.eh_power(q, bf)
        };
        (raw + self.margin[m]) / self.weight[m]
    }

    fn value(&self, m: usize, bf: &BeamformerSet) -> f64 {
        self.inner(m, bf).max(0.0)
    }

    /// Subgradient of component `m`; zero unless the hinge is strictly active.
    fn gradient(&self, m: usize, bf: &BeamformerSet) -> (Vec<CMat>, Vec<CMat>) {
        let (b, sc) = (self.bundle, self.sc);
        let mut gv: Vec<CMat> =
            bf.v.iter()
                .map(|v| CMat::zeros(v.nrows(), v.ncols()))
                .collect();
        let mut gu: Vec<CMat> =
            bf.u.iter()
                .map(|u| CMat::zeros(u.nrows(), u.ncols()))
                .collect();
        if self.inner(m, bf) <= 0.0 {
            return (gv, gu);
        }
        let w = Complex64::new(1.0 / self.weight[m], 0.0);
        if m < sc.num_rrh {
            let l = m;
            let rows = sc.rrh_rows(l);
            for (j, (g, v)) in gv.iter_mut().zip(&bf.v).enumerate() {
                let c = 2.0 * b.l1_weights[l][j] * b.cached_rates[j];
                let blk = v.rows_range(rows.clone()) * Complex64::new(c, 0.0) * w;
                g.rows_range_mut(rows.clone()).copy_from(&blk);
            }
            let fh = &b.fronthaul[l];
            for (n, (g, u)) in gu.iter_mut().zip(&bf.u).enumerate() {
                *g = &fh.xi * u * Complex64::new(2.0, 0.0);
                if n == l {
                    *g += fh.upsilon.adjoint();
                }
                *g *= w;
            }
        } else {
            let q = m - sc.num_rrh;
            for (g, a) in gv.iter_mut().zip(&b.eh_grad[q]) {
                *g = a * Complex64::new(-2.0, 0.0) * w;
            }
        }
        (gv, gu)
    }
}

/// Subgradient of hinge component `m` of the model (fronthaul components
/// `0..N`, energy components `N..N+Q`), as gradients with respect to each
/// `V_j` and each `U_n` in the real-inner-product convention.
pub fn component_subgradient(
    m: usize,
    bf: &BeamformerSet,
    bundle: &SurrogateBundle,
    sc: &Scenario,
) -> Result<(Vec<CMat>, Vec<CMat>)> {
    let len = sc.num_rrh + sc.num_eu;
    if m >= len {
        return Err(Error::IndexOutOfRange { index: m, len });
    }
    Ok(ComponentModel::plain(bundle, sc).gradient(m, bf))
}

/// Nearest point satisfying the per-RRH and center power budgets: each RRH
/// block, and the fronthaul beamformers jointly, are scaled back onto their
/// ball when outside it.
pub fn power_projection(zv: &[CMat], zu: &[CMat], sc: &Scenario) -> BeamformerSet {
    let mut v: Vec<CMat> = zv.to_vec();
    for n in 0..sc.num_rrh {
        let rows = sc.rrh_rows(n);
        let lambda: f64 = v
            .iter()
            .map(|x| crate::physics::block_norm2(x, rows.clone()))
            .sum();
        if lambda > sc.p_rrh[n] {
            let s = Complex64::new((sc.p_rrh[n] / lambda).sqrt(), 0.0);
            for x in v.iter_mut() {
                let mut blk = x.rows_range_mut(rows.clone());
                blk *= s;
            }
        }
    }
    let mut u: Vec<CMat> = zu.to_vec();
    let lambda: f64 = u.iter().map(fro2).sum();
    if lambda > sc.p_center {
        let s = Complex64::new((sc.p_center / lambda).sqrt(), 0.0);
        for x in u.iter_mut() {
            *x *= s;
        }
    }
    BeamformerSet { v, u }
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Attempt {
    point: BeamformerSet,
    raw: Vec<f64>,
    scaled: Vec<f64>,
    sca_iterations: usize,
}

fn worst(scaled: &[f64]) -> Option<usize> {
    scaled
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(m, _)| m)
}

fn is_feasible(raw: &[f64], scaled: &[f64], tol: f64) -> bool {
    raw.iter().sum::<f64>() <= tol && scaled.iter().sum::<f64>() <= tol
}

fn run_attempt(
    sc: &Scenario,
    ch: &ChannelSet,
    req: &[f64],
    attempt: usize,
    seed: u64,
    opts: &FeasibilityOptions,
    trace: &mut Vec<FeasibilityTraceRow>,
) -> Result<Attempt> {
    let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed(seed, attempt));
    let mut x = initial_point(sc, &mut rng);
    let mut rep = evaluate(&x, ch, sc, opts.exec)?;
    let (mut raw, mut scaled) = exact_components(&rep, req);
    trace.push(FeasibilityTraceRow {
        attempt,
        t: 0,
        s: 0,
        cost: raw.iter().sum(),
        component_id: worst(&scaled),
    });
    let comps = sc.num_rrh + sc.num_eu;
    let p_v = sc.p_rrh.iter().sum::<f64>() / sc.num_rrh as f64;
    let p_u = sc.p_center / sc.num_rrh as f64;
    let mut t = 0;
    let mut prev = scaled.iter().sum::<f64>();
    let mut best = (x.clone(), raw.clone(), scaled.clone(), prev);
    let mut since_best = 0;
    while !is_feasible(&raw, &scaled, opts.feas_tol) && t < opts.max_sca {
        t += 1;
        let bundle = build(&x, ch, sc, &rep.service_rates(), opts.exec)?;
        let model = ComponentModel::scaled(&bundle, sc, opts.margin);
        let draws = opts.inner_per_component * comps;
        let mut used = 0;
        for s in 1..=draws {
            used = s;
            let m = rng.random_range(0..comps);
            let h = model.value(m, &x);
            if h > 0.0 {
                let (gv, gu) = model.gradient(m, &x);
                let cap = 2.0 / (sc.rrh_antennas as f64 * (s as f64).sqrt());
                let step = match opts.step {
                    StepRule::Diminishing => cap,
                    StepRule::Polyak => {
                        let denom: f64 = p_v * gv.iter().map(fro2).sum::<f64>()
                            + p_u * gu.iter().map(fro2).sum::<f64>();
                        if denom > 0.0 {
                            (h / denom).min(cap)
                        } else {
                            0.0
                        }
                    }
                };
                let zv: Vec<CMat> =
                    x.v.iter()
                        .zip(&gv)
                        .map(|(v, g)| v - g * Complex64::new(step * p_v, 0.0))
                        .collect();
                let zu: Vec<CMat> =
                    x.u.iter()
                        .zip(&gu)
                        .map(|(u, g)| u - g * Complex64::new(step * p_u, 0.0))
                        .collect();
                x = power_projection(&zv, &zu, sc);
            }
            if s % comps == 0 && (0..comps).all(|m| model.value(m, &x) == 0.0) {
                break;
            }
        }
        rep = evaluate(&x, ch, sc, opts.exec)?;
        (raw, scaled) = exact_components(&rep, req);
        let cost_scaled: f64 = scaled.iter().sum();
        trace.push(FeasibilityTraceRow {
            attempt,
            t,
            s: used,
            cost: raw.iter().sum(),
            component_id: worst(&scaled),
        });
        if is_feasible(&raw, &scaled, opts.feas_tol) {
            return Ok(Attempt {
                point: x,
                raw,
                scaled,
                sca_iterations: t,
            });
        }
        if cost_scaled < best.3 {
            best = (x.clone(), raw.clone(), scaled.clone(), cost_scaled);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= opts.patience {
            break;
        }
        if (prev - cost_scaled).abs() <= opts.tol_outer * prev.max(f64::MIN_POSITIVE) {
            break;
        }
        prev = cost_scaled;
    }
    let (point, raw, scaled, _) = best;
    Ok(Attempt {
        point,
        raw,
        scaled,
        sca_iterations: t,
    })
}

/// Runs the search from up to `1 + restarts` random starting points and
/// returns the first feasible result, or the least infeasible one.
pub fn find_feasible(
    sc: &Scenario,
    ch: &ChannelSet,
    seed: u64,
    opts: &FeasibilityOptions,
) -> Result<FeasibilityReport> {
    let req = required_rf_powers(sc)?;
    let mut trace = Vec::new();
    let mut best: Option<Attempt> = None;
    let mut attempts = 0;
    let mut total_iters = 0;
    for attempt in 0..=opts.restarts {
        attempts += 1;
        let a = run_attempt(sc, ch, &req, attempt, seed, opts, &mut trace)?;
        total_iters += a.sca_iterations;
        let done = is_feasible(&a.raw, &a.scaled, opts.feas_tol);
        let better = match &best {
            None => true,
            Some(b) => a.scaled.iter().sum::<f64>() < b.scaled.iter().sum::<f64>(),
        };
        if better {
            best = Some(a);
        }
        if done {
            break;
        }
    }
    let best = best.expect("at least one attempt runs");
    Ok(FeasibilityReport {
        cost: best.raw.iter().sum(),
        feasible: is_feasible(&best.raw, &best.scaled, opts.feas_tol),
        per_component: best.raw,
        scaled_components: best.scaled,
        point: best.point,
        sca_iterations: total_iters,
        attempts,
        trace,
    })
}
