//! Acceptance checks: one PASS / WARN / FAIL line per criterion.
//!
//! The process exits non-zero when a check panics. Failed criteria only turn
//! into a non-zero exit with `ACCEPTANCE_STRICT=1`, so the full table is
//! always printed by `cargo test`.


use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use cran_bf::driver::{run, RunOptions, Termination};
use cran_bf::dual::{
    primal_minimizers, project_duals, project_simplex, solve_subproblem, DualVariables,
    InnerOptions, InnerResult, Subproblem,
};
use cran_bf::feasibility::{
    find_feasible, infeasibility_cost, FeasibilityOptions, FeasibilityReport,
};
use cran_bf::numerics::random_gaussian;
use cran_bf::physics::{
    broadcast_rate, eh_forward, eh_inverse, evaluate, fronthaul_rate, max_relative_violation,
    multicast_rate, rx_rf_power, BeamformerSet, RequiredPower,
};
use cran_bf::scenario::generate;
use cran_bf::surrogates::{build, SurrogateBundle};
use cran_bf::sweep::{paired_means, run_sweep, Sweep, SweepParam};
use cran_bf::{ChannelSet, Execution, Scenario, ScenarioConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracle::PrimalOracle;

const SEQ: Execution = Execution::Sequential;

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Warn,
    Fail,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn desk(seed: u64) -> (Scenario, ChannelSet) {
    generate(&ScenarioConfig::desk(), seed).expect("desk scenario")
}

fn rng(tag: u64, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ seed)
}

/// Gaussian beamformers with each RRH block scaled to a uniform fraction of
/// its budget and the fronthaul beams to a uniform fraction of `p_c`.
fn random_point(sc: &Scenario, r: &mut ChaCha8Rng) -> BeamformerSet {
    let mut bf = BeamformerSet {
        v: (0..sc.num_services())
            .map(|_| random_gaussian(r, sc.access_dim(), sc.access_streams))
            .collect(),
        u: (0..sc.num_rrh)
            .map(|_| random_gaussian(r, sc.center_antennas, sc.fronthaul_streams))
            .collect(),
    };
    for n in 0..sc.num_rrh {
        let rows = sc.rrh_rows(n);
        let p: f64 =
            bf.v.iter()
                .map(|v| v.rows_range(rows.clone()).norm_squared())
                .sum();
        let k = Complex64::new((r.random::<f64>() * sc.p_rrh[n] / p).sqrt(), 0.0);
        for v in bf.v.iter_mut() {
            v.rows_range_mut(rows.clone()).scale_mut(k.re);
        }
    }
    let p: f64 = bf.u.iter().map(|u| u.norm_squared()).sum();
    let k = (r.random::<f64>() * sc.p_center / p).sqrt();
    for u in bf.u.iter_mut() {
        u.scale_mut(k);
    }
    bf
}

fn bundle_at(anchor: &BeamformerSet, sc: &Scenario, ch: &ChannelSet) -> SurrogateBundle {
    let rates = evaluate(anchor, ch, sc, SEQ).unwrap().service_rates();
    build(anchor, ch, sc, &rates, SEQ).unwrap()
}

/// Seeded desk subproblems built at the feasibility search output.
struct Case {
    sc: Scenario,
    ch: ChannelSet,
    feas: FeasibilityReport,
    feas_wall_s: f64,
    bundle: SurrogateBundle,
}

fn cases() -> &'static [Case] {
    static CASES: OnceLock<Vec<Case>> = OnceLock::new();
    CASES.get_or_init(|| {
        (0..20)
            .map(|seed| {
                let (sc, ch) = desk(seed);
                let t = Instant::now();
                let feas =
                    find_feasible(&sc, &ch, seed, &FeasibilityOptions::from_scenario(&sc, SEQ))
                        .unwrap();
                let feas_wall_s = t.elapsed().as_secs_f64();
                let bundle = bundle_at(&feas.point, &sc, &ch);
                Case {
                    sc,
                    ch,
                    feas,
                    feas_wall_s,
                    bundle,
                }
            })
            .collect()
    })
}

fn inner(case: &Case, accelerated: bool) -> InnerResult {
    let sp = Subproblem::new(&case.bundle, &case.sc, SEQ);
    solve_subproblem(
        &sp,
        &InnerOptions::from_scenario(&case.sc, accelerated, SEQ),
    )
    .unwrap()
}

fn plain_results() -> &'static [InnerResult] {
    static PLAIN: OnceLock<Vec<InnerResult>> = OnceLock::new();
    PLAIN.get_or_init(|| cases().iter().map(|c| inner(c, false)).collect())
}

fn tightness() -> Outcome {
    let t = Instant::now();
    let mut worst = [0.0f64; 3];
    for seed in 0..50 {
        let (sc, ch) = desk(seed);
        let anchor = random_point(&sc, &mut rng(1, seed));
        let b = bundle_at(&anchor, &sc, &ch);
        let rel = |bar: f64, exact: f64| (bar - exact).abs() / exact.abs().max(1.0);
        for k in 0..sc.num_iu {
            worst[0] = worst[0].max(rel(
                b.broadcast_rate(k, &anchor),
                broadcast_rate(k, &anchor, &ch, &sc).unwrap(),
            ));
            worst[1] = worst[1].max(rel(
                b.multicast_rate(k, &anchor, &sc),
                multicast_rate(k, &anchor, &ch, &sc).unwrap(),
            ));
        }
        for n in 0..sc.num_rrh {
            worst[2] = worst[2].max(rel(
                b.fronthaul_rate(n, &anchor),
                fronthaul_rate(n, &anchor, &ch, &sc).unwrap(),
            ));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let max = worst.iter().copied().fold(0.0, f64::max);
    judge(
        max <= 1e-8 && secs <= 10.0,
        format!(
            "50 instances, max rel error broadcast {:.1e} multicast {:.1e} fronthaul {:.1e} (<= 1e-8), {secs:.2} s (<= 10 s)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn global_bound() -> Outcome {
    let t = Instant::now();
    // largest excess of a minorant over the exact value
    let (mut rate_excess, mut rf_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut points = 0;
    for seed in 0..50 {
        let (sc, ch) = desk(seed);
        let mut r = rng(2, seed);
        let anchor = random_point(&sc, &mut r);
        let b = bundle_at(&anchor, &sc, &ch);
        for i in 0..100 {
            let far = random_point(&sc, &mut r);
            // every other point is pulled towards the anchor, where the bound is tight
            let x = if i % 2 == 0 {
                far
            } else {
                anchor.lerp(&far, r.random::<f64>().powi(3))
            };
            points += 1;
            for k in 0..sc.num_iu {
                rate_excess = rate_excess
                    .max(b.broadcast_rate(k, &x) - broadcast_rate(k, &x, &ch, &sc).unwrap());
                rate_excess = rate_excess
                    .max(b.multicast_rate(k, &x, &sc) - multicast_rate(k, &x, &ch, &sc).unwrap());
            }
            for n in 0..sc.num_rrh {
                rate_excess = rate_excess
                    .max(b.fronthaul_rate(n, &x) - fronthaul_rate(n, &x, &ch, &sc).unwrap());
            }
            for q in 0..sc.num_eu {
                rf_excess = rf_excess.max(b.eh_power(q, &x) - rx_rf_power(q, &x, &ch));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    judge(
        rate_excess <= 1e-9 && rf_excess <= 1e-9 && secs <= 30.0,
        format!(
            "{points} points, max(R_bar - R) = {rate_excess:.1e}, max(P_bar - P_R) = {rf_excess:.1e} (<= 1e-9), {secs:.2} s (<= 30 s)"
        ),
    )
}

#[derive(Clone, Copy)]
enum Family {
    Broadcast,
    Multicast,
    Fronthaul,
}

/// `bf` with one real coordinate moved by `h`.
fn nudge(
    bf: &BeamformerSet,
    access: bool,
    mat: usize,
    row: usize,
    col: usize,
    imag: bool,
    h: f64,
) -> BeamformerSet {
    let mut out = bf.clone();
    let m = if access {
        &mut out.v[mat]
    } else {
        &mut out.u[mat]
    };
    m[(row, col)] += if imag {
        Complex64::new(0.0, h)
    } else {
        Complex64::new(h, 0.0)
    };
    out
}

fn gradient_identity() -> Outcome {
    let h = 1e-6;
    let mut worst = [0.0f64; 3];
    for seed in 0..20 {
        let (sc, ch) = desk(seed);
        let mut r = rng(3, seed);
        let anchor = random_point(&sc, &mut r);
        let b = bundle_at(&anchor, &sc, &ch);
        for (f, fam) in [Family::Broadcast, Family::Multicast, Family::Fronthaul]
            .into_iter()
            .enumerate()
        {
            let access = !matches!(fam, Family::Fronthaul);
            let (mat, rows, cols) = if access {
                (
                    r.random_range(0..sc.num_services()),
                    sc.access_dim(),
                    sc.access_streams,
                )
            } else {
                (
                    r.random_range(0..sc.num_rrh),
                    sc.center_antennas,
                    sc.fronthaul_streams,
                )
            };
            let (row, col, imag) = (
                r.random_range(0..rows),
                r.random_range(0..cols),
                r.random::<bool>(),
            );
            let user = r.random_range(0..sc.num_iu);
            let rrh = r.random_range(0..sc.num_rrh);
            let pair = |x: &BeamformerSet| match fam {
                Family::Broadcast => (
                    b.broadcast_rate(user, x),
                    broadcast_rate(user, x, &ch, &sc).unwrap(),
                ),
                Family::Multicast => (
                    b.multicast_rate(user, x, &sc),
                    multicast_rate(user, x, &ch, &sc).unwrap(),
                ),
                Family::Fronthaul => (
                    b.fronthaul_rate(rrh, x),
                    fronthaul_rate(rrh, x, &ch, &sc).unwrap(),
                ),
            };
            let (bp, ep) = pair(&nudge(&anchor, access, mat, row, col, imag, h));
            let (bm, em) = pair(&nudge(&anchor, access, mat, row, col, imag, -h));
            let (d_bar, d_exact) = ((bp - bm) / (2.0 * h), (ep - em) / (2.0 * h));
            let rel = (d_bar - d_exact).abs() / d_exact.abs().max(d_bar.abs()).max(1e-6);
            worst[f] = worst[f].max(rel);
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    judge(
        max <= 1e-4,
        format!(
            "20 coordinates per family, max rel error broadcast {:.1e} multicast {:.1e} fronthaul {:.1e} (<= 1e-4)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn max_entry_diff(a: &BeamformerSet, b: &BeamformerSet) -> f64 {
    a.v.iter()
        .zip(&b.v)
        .chain(a.u.iter().zip(&b.u))
        .map(|(x, y)| (x - y).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

fn proximal_fixed_point() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let (sc, ch) = desk(seed);
        let anchor = random_point(&sc, &mut rng(4, seed));
        let b = bundle_at(&anchor, &sc, &ch);
        let sp = Subproblem::new(&b, &sc, SEQ);
        let v = primal_minimizers(&DualVariables::zeros(&sc), &sp).unwrap();
        worst = worst.max(max_entry_diff(&v, &anchor));
    }
    for case in cases() {
        let sp = Subproblem::new(&case.bundle, &case.sc, SEQ);
        let v = primal_minimizers(&DualVariables::zeros(&case.sc), &sp).unwrap();
        // pinned blocks are zero in V but hold at most sqrt(eps) in the anchor
        let mut anchor = case.bundle.anchor.clone();
        for n in 0..case.sc.num_rrh {
            for (j, vj) in anchor.v.iter_mut().enumerate() {
                if sp.frozen[n][j] {
                    vj.rows_range_mut(case.sc.rrh_rows(n))
                        .fill(Complex64::new(0.0, 0.0));
                }
            }
        }
        worst = worst.max(max_entry_diff(&v, &anchor));
    }
    judge(
        worst <= 1e-10,
        format!("40 anchors, max entry error {worst:.1e} (<= 1e-10)"),
    )
}

/// All free real coordinates of `bf`, each with a setter.
fn free_coordinates(sp: &Subproblem) -> Vec<(bool, usize, usize, usize, bool)> {
    let sc = sp.sc;
    let mut out = Vec::new();
    for j in 0..sc.num_services() {
        for row in sp.free_rows(j) {
            for col in 0..sc.access_streams {
                out.push((true, j, row, col, false));
                out.push((true, j, row, col, true));
            }
        }
    }
    for n in 0..sc.num_rrh {
        for row in 0..sc.center_antennas {
            for col in 0..sc.fronthaul_streams {
                out.push((false, n, row, col, false));
                out.push((false, n, row, col, true));
            }
        }
    }
    out
}

fn lagrangian_gradient_norm(
    sp: &Subproblem,
    at: &BeamformerSet,
    lam: &DualVariables,
    h: f64,
) -> f64 {
    free_coordinates(sp)
        .into_iter()
        .map(|(access, mat, row, col, imag)| {
            let p = sp.lagrangian(&nudge(at, access, mat, row, col, imag, h), lam);
            let m = sp.lagrangian(&nudge(at, access, mat, row, col, imag, -h), lam);
            ((p - m) / (2.0 * h)).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn dual_stationarity() -> Outcome {
    // M(., L) is quadratic, so central differences carry no truncation error
    // at any step. Small steps lose everything to rounding in the high-SNR
    // fronthaul terms (their constant and quadratic parts nearly cancel), so
    // the step is one unit of beamformer amplitude.
    let h = 1.0;
    let mut worst = 0.0f64;
    for (i, case) in cases().iter().enumerate() {
        let sc = &case.sc;
        let sp = Subproblem::new(&case.bundle, sc, SEQ);
        let mut r = rng(5, i as u64);
        let mut spread = |n: usize| {
            (0..n)
                .map(|_| 10f64.powf(r.random_range(-2.0..1.0)))
                .collect::<Vec<_>>()
        };
        let mu = DualVariables {
            lam_m: spread(sc.num_iu),
            lam_b: spread(sc.num_iu),
            lam_e: spread(sc.num_eu),
            lam_f: spread(sc.num_rrh),
            lam_r: spread(sc.num_rrh),
            lam_c: spread(1)[0],
        };
        let lam = project_duals(&mu, sc);
        let v = primal_minimizers(&lam, &sp).unwrap();
        let at_min = lagrangian_gradient_norm(&sp, &v, &lam, h);
        let at_anchor = lagrangian_gradient_norm(&sp, &case.bundle.anchor, &lam, h);
        worst = worst.max(at_min / (1.0 + at_anchor));
    }
    judge(
        worst <= 1e-6,
        format!(
            "20 multipliers, max |grad M(V*)| / (1 + |grad M(anchor)|) = {worst:.1e} (<= 1e-6)"
        ),
    )
}

/// Nearest point of `{x >= 0, sum x = alpha}` by trying every support.
fn brute_simplex(mu: &[f64], alpha: f64) -> Vec<f64> {
    let n = mu.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let on = |i: usize| mask & (1 << i) != 0;
        let size = mask.count_ones() as f64;
        let tau = ((0..n).filter(|&i| on(i)).map(|i| mu[i]).sum::<f64>() - alpha) / size;
        let x: Vec<f64> = (0..n)
            .map(|i| if on(i) { mu[i] - tau } else { 0.0 })
            .collect();
        let kkt = (0..n).all(|i| {
            if on(i) {
                x[i] >= -1e-14
            } else {
                mu[i] <= tau + 1e-14
            }
        });
        if !kkt {
            continue;
        }
        let dist: f64 = x.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    best.expect("some support satisfies the optimality conditions")
        .1
}

fn projection_oracle() -> Outcome {
    let (sc, _) = desk(0);
    let mut r = rng(6, 0);
    let (mut err, mut sum_err) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let mut draw = |n: usize| {
            (0..n)
                .map(|_| r.random_range(-2.0..2.0))
                .collect::<Vec<f64>>()
        };
        let mu = DualVariables {
            lam_m: draw(sc.num_iu),
            lam_b: draw(sc.num_iu),
            lam_e: draw(sc.num_eu),
            lam_f: draw(sc.num_rrh),
            lam_r: draw(sc.num_rrh),
            lam_c: draw(1)[0],
        };
        let got = project_duals(&mu, &sc);
        let mut want = mu.clone();
        for g in 1..=sc.num_groups {
            let members = sc.members(g);
            let vals: Vec<f64> = members.iter().map(|&k| mu.lam_m[k]).collect();
            for (&k, x) in members.iter().zip(brute_simplex(&vals, sc.alpha[g])) {
                want.lam_m[k] = x;
            }
            let s: f64 = members.iter().map(|&k| got.lam_m[k]).sum();
            sum_err = sum_err.max((s - sc.alpha[g]).abs());
        }
        want.lam_b = brute_simplex(&mu.lam_b, sc.alpha[0]);
        sum_err = sum_err.max((got.lam_b.iter().sum::<f64>() - sc.alpha[0]).abs());
        for v in [&mut want.lam_e, &mut want.lam_f, &mut want.lam_r] {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        want.lam_c = want.lam_c.max(0.0);
        err = err.max(
            got.to_vec()
                .iter()
                .zip(want.to_vec())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );

        // standalone groups of every size up to 3 with a random priority
        let size = r.random_range(1..=3);
        let alpha = r.random_range(0.1..3.0);
        let vals: Vec<f64> = (0..size).map(|_| r.random_range(-3.0..3.0)).collect();
        let (x, _) = project_simplex(&vals, alpha);
        err = err.max(
            x.iter()
                .zip(brute_simplex(&vals, alpha))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        sum_err = sum_err.max((x.iter().sum::<f64>() - alpha).abs());
    }
    judge(
        err <= 1e-6 && sum_err <= 1e-10,
        format!(
            "200 vectors, max error {err:.1e} (<= 1e-6), group sum error {sum_err:.1e} (<= 1e-10)"
        ),
    )
}

fn dual_ascent() -> Outcome {
    let mut worst_drop = 0.0f64;
    let mut worst_rel = 0.0f64;
    let mut oracle_viol = 0.0f64;
    let mut matched = 0;
    let mut misses = Vec::new();
    for (i, (case, plain)) in cases().iter().zip(plain_results()).enumerate() {
        let d = plain.trace.dual_values();
        worst_drop = worst_drop.max(d.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max));
        let sp = Subproblem::new(&case.bundle, &case.sc, SEQ);
        // the oracle minimizes; the dual solver maximizes D of the same problem
        let p = PrimalOracle::new(&sp).solve();
        oracle_viol = oracle_viol.max(p.max_violation);
        let rel = (plain.dual_value - p.value).abs() / p.value.abs().max(1.0);
        if rel <= 1e-4 {
            matched += 1;
            worst_rel = worst_rel.max(rel);
        } else {
            misses.push(format!(
                "seed {i}: D {:.4} vs {:.4}, converged {}",
                plain.dual_value, p.value, plain.converged
            ));
        }
    }
    let mut detail = format!(
        "20 subproblems, max D drop per step {worst_drop:.1e} (<= 1e-9), {matched}/20 match primal oracle \
         (worst matched rel {worst_rel:.1e}, <= 1e-4; oracle constraint residual {oracle_viol:.0e})"
    );
    if !misses.is_empty() {
        detail.push_str(&format!("; {}", misses.join("; ")));
    }
    judge(worst_drop <= 1e-9 && matched == 20, detail)
}

/// First iteration whose `D` is within `1e-4` (relative) of `target`.
fn first_hit(trace: &[f64], target: f64) -> Option<usize> {
    let thr = target - 1e-4 * target.abs().max(1.0);
    trace.iter().position(|&d| d >= thr)
}

fn acceleration() -> Outcome {
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for (case, plain) in cases().iter().zip(plain_results()) {
        if !plain.converged {
            skipped += 1;
            continue;
        }
        let acc = inner(case, true);
        let target = plain.dual_value;
        let p = first_hit(&plain.trace.dual_values(), target)
            .unwrap_or(plain.iterations)
            .max(1);
        let a = first_hit(&acc.trace.dual_values(), target).map_or(f64::INFINITY, |s| s as f64);
        ratios.push(a / p as f64);
    }
    ratios.sort_by(f64::total_cmp);
    let median = if ratios.is_empty() {
        f64::INFINITY
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    let verdict = if median <= 0.5 {
        Verdict::Pass
    } else if median <= 1.0 {
        Verdict::Warn
    } else {
        Verdict::Fail
    };
    Outcome {
        verdict,
        detail: format!(
            "{} subproblems ({skipped} without a converged plain run left out), median accelerated/plain \
             iterations to reach D within 1e-4: {median:.2} (pass <= 0.5, warn <= 1)",
            ratios.len()
        ),
    }
}

fn eh_round_trip() -> Outcome {
    let (sc, _) = desk(0);
    let eh = sc.eh;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let e = eh.p_max * (i as f64 + 0.5) / 100.0;
        let x = eh_inverse(e, &eh).finite().expect("below saturation");
        worst = worst.max((eh_forward(x, &eh) - e).abs() / e);
    }
    let at_p0 = eh_forward(eh.p0, &eh);
    let saturated = [1.0, 1.5, 10.0]
        .iter()
        .all(|k| eh_inverse(k * eh.p_max, &eh) == RequiredPower::Infinite);
    judge(
        worst <= 1e-9 && at_p0 == 0.0 && saturated,
        format!(
            "100 values, max rel error {worst:.1e} (<= 1e-9), forward(P0) = {at_p0:e}, inverse(>= Pmax) infinite: {saturated}"
        ),
    )
}

fn feasibility() -> Outcome {
    let mut ok = 0;
    let (mut worst_cost, mut worst_iters, mut worst_s) = (0.0f64, 0, 0.0f64);
    let mut iters = Vec::new();
    for case in cases() {
        let (cost, _) = infeasibility_cost(&case.feas.point, &case.ch, &case.sc, SEQ).unwrap();
        worst_cost = worst_cost.max(cost);
        worst_iters = worst_iters.max(case.feas.sca_iterations);
        worst_s = worst_s.max(case.feas_wall_s);
        iters.push(case.feas.sca_iterations);
        if cost <= 1e-9 && case.feas.sca_iterations <= 50 && case.feas_wall_s <= 60.0 {
            ok += 1;
        }
    }
    let mean = iters.iter().sum::<usize>() as f64 / iters.len() as f64;
    judge(
        ok == 20,
        format!(
            "{ok}/20 feasible, max cost {worst_cost:.1e} (<= 1e-9), SCA iterations max {worst_iters} mean {mean:.1} \
             (<= 50), slowest {worst_s:.2} s (<= 60 s)"
        ),
    )
}

fn end_to_end() -> Outcome {
    let mut failures = Vec::new();
    let (mut worst_drop, mut worst_viol, mut worst_gap, mut worst_outer) =
        (0.0f64, 0.0f64, 0.0f64, 0);
    for (i, case) in cases().iter().enumerate() {
        let go = |acc| {
            run(
                &case.sc,
                &case.ch,
                &case.feas.point,
                &RunOptions::from_scenario(&case.sc, acc, SEQ),
            )
            .unwrap()
        };
        let (plain, fast) = (go(false), go(true));
        for h in [&plain, &fast] {
            let wsr: Vec<f64> = std::iter::once(h.start_wsr)
                .chain(h.records.iter().map(|r| r.wsr))
                .collect();
            let drop = wsr.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
            let viol = max_relative_violation(&h.report, &case.sc);
            worst_drop = worst_drop.max(drop);
            worst_viol = worst_viol.max(viol);
            worst_outer = worst_outer.max(h.outer_iterations());
            if h.termination != Termination::Converged
                || h.outer_iterations() > 100
                || drop > 1e-6
                || viol > 1e-6
            {
                failures.push(format!("seed {i}"));
            }
        }
        let gap = (plain.report.wsr - fast.report.wsr).abs()
            / plain.report.wsr.abs().max(fast.report.wsr.abs());
        worst_gap = worst_gap.max(gap);
        if gap > 1e-3 {
            failures.push(format!(
                "seed {i} plain {:.5} vs accelerated {:.5}",
                plain.report.wsr, fast.report.wsr
            ));
        }
    }
    failures.dedup();
    let mut detail = format!(
        "20 runs x 2 methods, max outer {worst_outer} (<= 100), max WSR drop {worst_drop:.1e} (<= 1e-6), \
         max violation {worst_viol:.1e} (<= 1e-6), max plain/accelerated gap {worst_gap:.1e} (<= 1e-3)"
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; failing: {}", failures.join(", ")));
    }
    judge(failures.is_empty(), detail)
}

fn directional() -> Outcome {
    let t = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let config = ScenarioConfig::desk();
    let run_grid = |param, values: Vec<f64>| {
        let sweep = Sweep {
            param,
            values,
            seeds: seeds.clone(),
        };
        let rows = run_sweep(&config, &sweep, false, Execution::Parallel);
        paired_means(&rows, &sweep)
    };
    let (pc, pc_n) = run_grid(SweepParam::CenterPowerDbm, vec![20.0, 30.0, 40.0]);
    let (em, em_n) = run_grid(SweepParam::EnergyMinMw, vec![0.01, 0.05, 0.1]);
    let secs = t.elapsed().as_secs_f64();
    let slack = |m: f64| 1e-9 * m.abs().max(1.0);
    let pc_up = pc.windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
    let last_gain = (pc[2] - pc[1]) / pc[1];
    let em_down = em.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    let fmt = |m: &[f64]| {
        m.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    judge(
        pc_up && last_gain <= 0.05 && em_down && secs <= 600.0,
        format!(
            "mean WSR vs p_c 20/30/40 dBm [{}] over {pc_n} paired seeds: non-decreasing {pc_up}, last gain {:.1}% (<= 5%); \
             vs e_min 0.01/0.05/0.1 mW [{}] over {em_n} paired seeds: non-increasing {em_down}; {secs:.1} s (<= 600 s)",
            fmt(&pc),
            100.0 * last_gain,
            fmt(&em)
        ),
    )
}

fn cranbf(args: &[&str], out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_cranbf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");
    let commands: [&[&str]; 5] = [
        &["gen", "--config", config, "--seed", "7"],
        &["feas", "--config", config, "--seed", "7"],
        &["solve", "--config", config, "--seed", "7"],
        &["solve", "--config", config, "--seed", "7", "--accelerated"],
        &[
            "bench",
            "--config",
            config,
            "--seed",
            "7",
            "--sweep",
            "p_c=20,30,40",
            "--seeds",
            "3",
        ],
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut diffs = Vec::new();
    for (i, args) in commands.iter().enumerate() {
        let (a, b) = (
            tmp.path().join(format!("{i}a")),
            tmp.path().join(format!("{i}b")),
        );
        if !cranbf(args, &a) || !cranbf(args, &b) {
            diffs.push(format!("`{}` failed", args[0]));
            continue;
        }
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            compared += 1;
            let x = std::fs::read(a.join(&name)).unwrap();
            if std::fs::read(b.join(&name)).ok().as_ref() != Some(&x) {
                diffs.push(format!("{} {}", args[0], name.to_string_lossy()));
            }
        }
    }
    let mut detail = format!(
        "5 commands run twice, {compared} CSV/JSON files compared, {} differ",
        diffs.len()
    );
    if !diffs.is_empty() {
        detail.push_str(&format!(": {}", diffs.join(", ")));
    }
    judge(compared > 0 && diffs.is_empty(), detail)
}

fn main() -> ExitCode {
    type Check = (&'static str, fn() -> Outcome);
    let checks: [Check; 13] = [
        ("surrogate tightness", tightness),
        ("surrogate global bound", global_bound),
        ("gradient identity", gradient_identity),
        ("proximal fixed point", proximal_fixed_point),
        ("dual stationarity", dual_stationarity),
        ("projection oracle", projection_oracle),
        ("dual ascent", dual_ascent),
        ("acceleration", acceleration),
        ("EH round trip", eh_round_trip),
        ("feasibility search", feasibility),
        ("end to end", end_to_end),
        ("directional trends", directional),
        ("determinism", determinism),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    // comma-separated criterion numbers, e.g. ACCEPTANCE_ONLY=5,7
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let (mut failed, mut crashed) = (0, 0);
    let mut skipped = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            skipped += 1;
            continue;
        }
        let t = Instant::now();
        let (tag, detail) = match std::panic::catch_unwind(check) {
            Ok(o) => {
                let tag = match o.verdict {
                    Verdict::Pass => "PASS",
                    Verdict::Warn => "WARN",
                    Verdict::Fail => {
                        failed += 1;
                        "FAIL"
                    }
                };
                (tag, o.detail)
            }
            Err(_) => {
                crashed += 1;
                ("ERROR", "check panicked".to_string())
            }
        };
        println!(
            "{:>2} {tag:<5} {name}: {detail} [{:.1} s]",
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    let ran = 13 - skipped;
    println!(
        "acceptance: {} of {ran} passed or warned, {failed} failed, {crashed} crashed",
        ran - failed - crashed
    );
    if crashed > 0 || (strict && failed > 0) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
