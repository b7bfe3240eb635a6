//! Dual-domain solver for one proximal SCA subproblem.
//!
//! The subproblem maximizes the weighted sum of minorant service rates minus
//! `rho1 sum ||V_j - V_j^t||^2 + rho2 sum ||U_n - U_n^t||^2` subject to the
//! minorant energy, smoothed fronthaul, and power constraints. Its Lagrangian
//! (written as a minimization)
//!
//! ```text
//! M(V, L) = prox - sum_k (lm_k Rm_k + lb_k Rb_k)
//!         + sum_q le_q (req_q - P_q) / s_q + sum_n lf_n (load_n - Rf_n) / f_n
//!         + sum_n lr_n (P_T,n - p_n) / r_n + lc (sum ||U||^2 - p_c) / c
//! ```
//!
//! is a strongly convex quadratic in `V`, so its minimizer has a closed form
//! and the dual function `D(L) = min_V M(V, L)` is smooth. `D` is maximized by
//! projected gradient ascent over the set where every multiplier is
//! non-negative and the rate multipliers of each service sum to its priority.
//!
//! Every inequality constraint enters divided by the size of its gradient at
//! the anchor (see [`ConstraintScales`]). This only rescales the multipliers
//! but keeps one step size meaningful for constraints measured in watts and
//! in bits.
//!
//! Access blocks `A_n V_j` whose anchor power is at or below the larger of
//! the indicator threshold and the smoothing constant `eps` are pinned to
//! zero and left out of the smoothed load. Their reweighted-l1 weight would
//! be of order `1 / eps`, which drives them to zero anyway but makes `D`
//! numerically stiff.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{try_map_indices, Execution};
use crate::numerics::{bisect_monotone, cholesky, fro2, identity, CMat};
use crate::physics::{block_norm2, center_power, rrh_power, weighted_sum_rate, BeamformerSet};
use crate::scenario::Scenario;
use crate::surrogates::SurrogateBundle;

/// Multipliers of the subproblem constraints, all non-negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualVariables {
    pub lam_m: Vec<f64>,
    pub lam_b: Vec<f64>,
    pub lam_e: Vec<f64>,
    pub lam_f: Vec<f64>,
    pub lam_r: Vec<f64>,
    pub lam_c: f64,
}

impl DualVariables {
    pub fn zeros(sc: &Scenario) -> Self {
        Self {
            lam_m: vec![0.0; sc.num_iu],
            lam_b: vec![0.0; sc.num_iu],
            lam_e: vec![0.0; sc.num_eu],
            lam_f: vec![0.0; sc.num_rrh],
            lam_r: vec![0.0; sc.num_rrh],
            lam_c: 0.0,
        }
    }

    /// Flat view in the order `m, b, e, f, r, c`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(&self.lam_m);
        out.extend(&self.lam_b);
        out.extend(&self.lam_e);
        out.extend(&self.lam_f);
        out.extend(&self.lam_r);
        out.push(self.lam_c);
        out
    }

    pub fn len(&self) -> usize {
        2 * self.lam_m.len() + self.lam_e.len() + 2 * self.lam_f.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Inverse of [`DualVariables::to_vec`] with the layout of `self`.
    pub fn with_values(&self, x: &[f64]) -> Self {
        assert_eq!(x.len(), self.len());
        let (k, q, n) = (self.lam_m.len(), self.lam_e.len(), self.lam_f.len());
        let mut at = 0;
        let mut take = |len: usize| {
            let v = x[at..at + len].to_vec();
            at += len;
            v
        };
        Self {
            lam_m: take(k),
            lam_b: take(k),
            lam_e: take(q),
            lam_f: take(n),
            lam_r: take(n),
            lam_c: take(1)[0],
        }
    }

    /// `self + a * x`.
    pub fn axpy(&self, a: f64, x: &Self) -> Self {
        let v: Vec<f64> = self
            .to_vec()
            .iter()
            .zip(x.to_vec())
            .map(|(s, x)| s + a * x)
            .collect();
        self.with_values(&v)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Euclidean norms of the six families, `m, b, e, f, r, c`.
    pub fn family_norms(&self) -> [f64; 6] {
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        [
            n(&self.lam_m),
            n(&self.lam_b),
            n(&self.lam_e),
            n(&self.lam_f),
            n(&self.lam_r),
            self.lam_c.abs(),
        ]
    }
}

/// Heavy-ball and Nesterov memory of the accelerated method.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub prev_duals: DualVariables,
    pub prev_intermediate: DualVariables,
    pub pi_prev: f64,
    pub pi_cur: f64,
}

impl MomentumState {
    /// State before the first step: both memories at `start`, `pi_0 = 1`,
    /// `pi_1 = (1 + sqrt 5) / 2`, so the first step carries no momentum.
    pub fn new(start: &DualVariables) -> Self {
        Self {
            prev_duals: start.clone(),
            prev_intermediate: start.clone(),
            pi_prev: 1.0,
            pi_cur: next_pi(1.0),
        }
    }

    pub fn beta(&self) -> f64 {
        (self.pi_prev - 1.0) / self.pi_cur
    }
}

pub fn next_pi(pi: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * pi * pi).sqrt())
}

/// Divisors applied to the inequality constraints inside the Lagrangian.
///
/// Each constraint is divided by the norm of its gradient at the anchor in
/// the metric of the proximal term, so that every multiplier sees a dual
/// curvature of order one and a single step size fits all of them. The
/// natural scales (`p_n`, `p_c`, the EU requirement, the anchor fronthaul
/// rate) are kept for reporting violations in relative terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintScales {
    pub eh: Vec<f64>,
    pub fronthaul: Vec<f64>,
    pub rrh: Vec<f64>,
    pub center: f64,
    pub natural: NaturalScales,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalScales {
    pub eh: Vec<f64>,
    pub fronthaul: Vec<f64>,
    pub rrh: Vec<f64>,
    pub center: f64,
}

impl ConstraintScales {
    pub fn new(
        bundle: &SurrogateBundle,
        sc: &Scenario,
        frozen: &[Vec<bool>],
        rho1: f64,
        rho2: f64,
    ) -> Self {
        let b = bundle;
        let v = &b.anchor.v;
        let u = &b.anchor.u;
        let natural = NaturalScales {
            eh: b
                .required_rf
                .iter()
                .map(|&r| if r > 0.0 { r } else { 1.0 })
                .collect(),
            fronthaul: (0..sc.num_rrh)
                .map(|n| b.fronthaul_rate(n, &b.anchor).max(1.0))
                .collect(),
            rrh: sc.p_rrh.clone(),
            center: sc.p_center,
        };
        // sqrt(|grad_V|^2 / (2 rho1) + |grad_U|^2 / (2 rho2)), or the natural
        // scale when the gradient vanishes.
        let norm = |gv: f64, gu: f64, fallback: f64| {
            let s = (gv / (2.0 * rho1) + gu / (2.0 * rho2)).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                fallback
            }
        };
        let eh = (0..sc.num_eu)
            .map(|q| {
                norm(
                    4.0 * b.eh_grad[q].iter().map(fro2).sum::<f64>(),
                    0.0,
                    natural.eh[q],
                )
            })
            .collect();
        let fronthaul = (0..sc.num_rrh)
            .map(|n| {
                let gv: f64 = (0..sc.num_services())
                    .filter(|&j| !frozen[n][j])
                    .map(|j| {
                        let c = 2.0 * b.l1_weights[n][j] * b.cached_rates[j];
                        c * c * block_norm2(&v[j], sc.rrh_rows(n))
                    })
                    .sum();
                let two = Complex64::new(2.0, 0.0);
                let xi = &b.fronthaul[n].xi;
                let gu: f64 = u
                    .iter()
                    .enumerate()
                    .map(|(l, ul)| {
                        let mut g = xi * ul * two;
                        if l == n {
                            g += b.fronthaul[n].upsilon.adjoint();
                        }
                        fro2(&g)
                    })
                    .sum();
                norm(gv, gu, natural.fronthaul[n])
            })
            .collect();
        let rrh = (0..sc.num_rrh)
            .map(|n| norm(4.0 * rrh_power(n, &b.anchor, sc), 0.0, natural.rrh[n]))
            .collect();
        let center = norm(0.0, 4.0 * center_power(&b.anchor), natural.center);
        Self {
            eh,
            fronthaul,
            rrh,
            center,
            natural,
        }
    }
}

/// Blocks `A_n V_j` whose anchor power is at most
/// `max(zero_tol(n), epsilon_smooth)`.
pub fn frozen_blocks(anchor: &BeamformerSet, sc: &Scenario) -> Vec<Vec<bool>> {
    (0..sc.num_rrh)
        .map(|n| {
            let tol = sc.zero_tol(n).max(sc.solver.epsilon_smooth);
            anchor
                .v
                .iter()
                .map(|v| block_norm2(v, sc.rrh_rows(n)) <= tol)
                .collect()
        })
        .collect()
}

/// Everything [`primal_minimizers`] and [`lagrangian`] need besides the duals.
pub struct Subproblem<'a> {
    pub bundle: &'a SurrogateBundle,
    pub sc: &'a Scenario,
    pub scales: ConstraintScales,
    /// `frozen[n][j]` marks blocks pinned to zero.
    pub frozen: Vec<Vec<bool>>,
    pub rho1: f64,
    pub rho2: f64,
    pub exec: Execution,
}

impl<'a> Subproblem<'a> {
    pub fn new(bundle: &'a SurrogateBundle, sc: &'a Scenario, exec: Execution) -> Self {
        Self::with_rho(bundle, sc, sc.solver.rho1, sc.solver.rho2, exec)
    }

    pub fn with_rho(
        bundle: &'a SurrogateBundle,
        sc: &'a Scenario,
        rho1: f64,
        rho2: f64,
        exec: Execution,
    ) -> Self {
        let frozen = frozen_blocks(&bundle.anchor, sc);
        let scales = ConstraintScales::new(bundle, sc, &frozen, rho1, rho2);
        Self {
            bundle,
            sc,
            scales,
            frozen,
            rho1,
            rho2,
            exec,
        }
    }

    /// Scaled constraint values at `bf`, laid out like the duals. Rate
    /// entries hold the negated minorant rates.
    pub fn constraint_values(&self, bf: &BeamformerSet) -> DualVariables {
        let (b, sc, s) = (self.bundle, self.sc, &self.scales);
        DualVariables {
            lam_m: (0..sc.num_iu)
                .map(|k| -b.multicast_rate(k, bf, sc))
                .collect(),
            lam_b: (0..sc.num_iu).map(|k| -b.broadcast_rate(k, bf)).collect(),
            lam_e: (0..sc.num_eu)
                .map(|q| (b.required_rf[q] - b.eh_power(q, bf)) / s.eh[q])
                .collect(),
            lam_f: (0..sc.num_rrh)
                .map(|n| (self.fronthaul_load(n, bf) - b.fronthaul_rate(n, bf)) / s.fronthaul[n])
                .collect(),
            lam_r: (0..sc.num_rrh)
                .map(|n| (rrh_power(n, bf, sc) - sc.p_rrh[n]) / s.rrh[n])
                .collect(),
            lam_c: (center_power(bf) - sc.p_center) / s.center,
        }
    }

    /// Smoothed load of RRH `n` over the blocks that are not frozen.
    pub fn fronthaul_load(&self, n: usize, bf: &BeamformerSet) -> f64 {
        let b = self.bundle;
        bf.v.iter()
            .enumerate()
            .filter(|&(j, _)| !self.frozen[n][j])
            .map(|(j, vj)| {
                b.l1_weights[n][j] * b.cached_rates[j] * block_norm2(vj, self.sc.rrh_rows(n))
            })
            .sum()
    }

    /// Rows of `V_j` that are free in the subproblem.
    pub fn free_rows(&self, j: usize) -> Vec<usize> {
        (0..self.sc.num_rrh)
            .filter(|&n| !self.frozen[n][j])
            .flat_map(|n| self.sc.rrh_rows(n))
            .collect()
    }

    pub fn proximal(&self, bf: &BeamformerSet) -> f64 {
        let (dv, du) = bf.dist2(&self.bundle.anchor);
        self.rho1 * dv + self.rho2 * du
    }

    /// `M(V, L)`.
    pub fn lagrangian(&self, bf: &BeamformerSet, lam: &DualVariables) -> f64 {
        self.proximal(bf) + lam.dot(&self.constraint_values(bf))
    }

    /// Largest relative violation among the inequality constraints, given
    /// the scaled constraint values.
    pub fn max_violation(&self, values: &DualVariables) -> f64 {
        let (s, nat) = (&self.scales, &self.scales.natural);
        let rel = |x: &[f64], by: &[f64], of: &[f64]| -> f64 {
            x.iter()
                .zip(by)
                .zip(of)
                .map(|((&x, &b), &o)| x * b / o)
                .fold(0.0, f64::max)
        };
        rel(&values.lam_e, &s.eh, &nat.eh)
            .max(rel(&values.lam_f, &s.fronthaul, &nat.fronthaul))
            .max(rel(&values.lam_r, &s.rrh, &nat.rrh))
            .max(values.lam_c * s.center / nat.center)
            .max(0.0)
    }

    /// Subproblem objective in maximization form: weighted minorant service
    /// rates minus the proximal term.
    pub fn primal_objective(&self, bf: &BeamformerSet) -> f64 {
        let rates = self.bundle.service_rates(bf, self.sc);
        weighted_sum_rate(&rates, &self.sc.alpha) - self.proximal(bf)
    }
}

/// Unique minimizer of `M(., L)`.
pub fn primal_minimizers(lam: &DualVariables, sp: &Subproblem) -> Result<BeamformerSet> {
    let (b, sc) = (sp.bundle, sp.sc);
    let cplx = |x: f64| Complex64::new(x, 0.0);
    let dim = sc.access_dim();

    let mut base = identity(dim) * cplx(sp.rho1);
    for (k, rc) in b.broadcast.iter().enumerate() {
        if lam.lam_b[k] != 0.0 {
            base += &rc.xi * cplx(lam.lam_b[k]);
        }
    }
    let mut base_m = base.clone();
    for (k, rc) in b.multicast.iter().enumerate() {
        if lam.lam_m[k] != 0.0 {
            base_m += &rc.xi * cplx(lam.lam_m[k]);
        }
    }
    let v = try_map_indices(sp.exec, sc.num_services(), |j| -> Result<CMat> {
        let mut a = if j == 0 { base.clone() } else { base_m.clone() };
        for n in 0..sc.num_rrh {
            let load = if sp.frozen[n][j] {
                0.0
            } else {
                lam.lam_f[n] / sp.scales.fronthaul[n] * b.l1_weights[n][j] * b.cached_rates[j]
            };
            let kappa = load + lam.lam_r[n] / sp.scales.rrh[n];
            for i in sc.rrh_rows(n) {
                a[(i, i)] += cplx(kappa);
            }
        }
        let mut rhs = &b.anchor.v[j] * cplx(sp.rho1);
        for q in 0..sc.num_eu {
            if lam.lam_e[q] != 0.0 {
                rhs += &b.eh_grad[q][j] * cplx(lam.lam_e[q] / sp.scales.eh[q]);
            }
        }
        for k in 0..sc.num_iu {
            if j == 0 && lam.lam_b[k] != 0.0 {
                rhs -= b.broadcast[k].upsilon.adjoint() * cplx(0.5 * lam.lam_b[k]);
            }
            if j != 0 && sc.group_of[k] == j && lam.lam_m[k] != 0.0 {
                rhs -= b.multicast[k].upsilon.adjoint() * cplx(0.5 * lam.lam_m[k]);
            }
        }
        let free = sp.free_rows(j);
        if free.len() == dim {
            return Ok(cholesky(&a)?.solve(&rhs));
        }
        // Frozen rows are zero, so only the free block of `a` matters.
        let mut out = CMat::zeros(dim, sc.access_streams);
        if free.is_empty() {
            return Ok(out);
        }
        let a_ff = a.select_rows(&free).select_columns(&free);
        let x_f = cholesky(&a_ff)?.solve(&rhs.select_rows(&free));
        for (r, &i) in free.iter().enumerate() {
            out.row_mut(i).copy_from(&x_f.row(r));
        }
        Ok(out)
    })?;

    let mut bmat = identity(sc.center_antennas) * cplx(sp.rho2 + lam.lam_c / sp.scales.center);
    for (l, rc) in b.fronthaul.iter().enumerate() {
        if lam.lam_f[l] != 0.0 {
            bmat += &rc.xi * cplx(lam.lam_f[l] / sp.scales.fronthaul[l]);
        }
    }
    let chol = cholesky(&bmat)?;
    let u = (0..sc.num_rrh)
        .map(|n| {
            let rhs = &b.anchor.u[n] * cplx(sp.rho2)
                - b.fronthaul[n].upsilon.adjoint()
                    * cplx(0.5 * lam.lam_f[n] / sp.scales.fronthaul[n]);
            chol.solve(&rhs)
        })
        .collect();
    Ok(BeamformerSet { v, u })
}

/// Gradient of `D` at `L`, given the minimizer `bf` of `M(., L)`.
pub fn dual_gradient(bf: &BeamformerSet, sp: &Subproblem) -> DualVariables {
    sp.constraint_values(bf)
}

/// `mu = L + nu grad`.
pub fn step_plain(lam: &DualVariables, grad: &DualVariables, nu: f64) -> DualVariables {
    lam.axpy(nu, grad)
}

/// `mu~ = L_s + nu grad + beta (L_s - L_{s-1})`,
/// `mu = mu~ + beta (mu~ - mu~_{s-1})` with `beta = (pi_{s-1} - 1) / pi_s`.
pub fn step_accelerated(
    lam: &DualVariables,
    grad: &DualVariables,
    nu: f64,
    state: &MomentumState,
) -> (DualVariables, MomentumState) {
    let beta = state.beta();
    let inter = lam.axpy(nu, grad).axpy(beta, &lam.sub(&state.prev_duals));
    let mu = inter.axpy(beta, &inter.sub(&state.prev_intermediate));
    let next = MomentumState {
        prev_duals: lam.clone(),
        prev_intermediate: inter,
        pi_prev: state.pi_cur,
        pi_cur: next_pi(state.pi_cur),
    };
    (mu, next)
}

/// Euclidean projection of `mu` onto `{x >= 0, sum x = alpha}`, returned with
/// the threshold `w` such that `x_k = (mu_k - w / 2)^+`.
pub fn project_simplex(mu: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    if mu.is_empty() {
        return (Vec::new(), 0.0);
    }
    if alpha <= 0.0 {
        return (
            vec![0.0; mu.len()],
            2.0 * mu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    // widened by alpha so rounding cannot put f(lo) below zero
    let lo = 2.0 * (mu.iter().copied().fold(f64::INFINITY, f64::min) - alpha) - alpha;
    let hi = 2.0 * mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let excess = |w: f64| mu.iter().map(|m| (m - w / 2.0).max(0.0)).sum::<f64>() - alpha;
    let w = bisect_monotone(excess, lo, hi, 1e-12).expect("simplex threshold is bracketed");
    // exact threshold for the active set found by bisection
    let mut active: Vec<bool> = mu.iter().map(|m| m - w / 2.0 > 0.0).collect();
    let mut w_exact = w;
    for _ in 0..mu.len() + 1 {
        let cnt = active.iter().filter(|&&a| a).count();
        if cnt == 0 {
            // pick the largest entry
            let imax = (0..mu.len())
                .max_by(|&a, &b| mu[a].total_cmp(&mu[b]))
                .unwrap();
            active[imax] = true;
            continue;
        }
        let s: f64 = mu
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(m, _)| m)
            .sum();
        w_exact = 2.0 * (s - alpha) / cnt as f64;
        let next: Vec<bool> = mu.iter().map(|m| m - w_exact / 2.0 > 0.0).collect();
        if next == active || next.iter().all(|&a| !a) {
            break;
        }
        active = next;
    }
    let x: Vec<f64> = mu
        .iter()
        .zip(&active)
        .map(|(m, &a)| if a { (m - w_exact / 2.0).max(0.0) } else { 0.0 })
        .collect();
    (x, w_exact)
}

/// Nearest point of the dual domain.
pub fn project_duals(mu: &DualVariables, sc: &Scenario) -> DualVariables {
    let clamp = |v: &[f64]| v.iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
    let mut lam_m = vec![0.0; sc.num_iu];
    for g in 1..=sc.num_groups {
        let members = sc.members(g);
        let vals: Vec<f64> = members.iter().map(|&k| mu.lam_m[k]).collect();
        let (x, _) = project_simplex(&vals, sc.alpha[g]);
        for (&k, xk) in members.iter().zip(x) {
            lam_m[k] = xk;
        }
    }
    DualVariables {
        lam_m,
        lam_b: project_simplex(&mu.lam_b, sc.alpha[0]).0,
        lam_e: clamp(&mu.lam_e),
        lam_f: clamp(&mu.lam_f),
        lam_r: clamp(&mu.lam_r),
        lam_c: mu.lam_c.max(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    pub accelerated: bool,
    pub nu: f64,
    /// Relative change of `D` below which the loop may stop.
    pub tol: f64,
    /// Largest scaled violation of the inequality constraints tolerated at
    /// the returned primal point.
    pub feas_tol: f64,
    /// Largest duality gap `f(V) - D(L)`, relative to `1 + |D|`, tolerated
    /// at the returned primal point, where `f` is the subproblem objective in
    /// minimization form.
    pub gap_tol: f64,
    pub max_inner: usize,
    /// Halve the step until the ascent condition holds.
    pub backtracking: bool,
    /// Factor applied to the step after a plain step that passed the
    /// ascent test without halving. 1 keeps the step non-increasing.
    pub grow: f64,
    /// Drop the momentum whenever an accelerated step lowers `D`.
    pub restart: bool,
    pub exec: Execution,
}

impl InnerOptions {
    pub fn from_scenario(sc: &Scenario, accelerated: bool, exec: Execution) -> Self {
        Self {
            accelerated,
            nu: sc.solver.nu,
            tol: sc.solver.tol_inner,
            feas_tol: 1e-8,
            gap_tol: 1e-6,
            max_inner: sc.solver.max_inner,
            backtracking: true,
            grow: 1.25,
            restart: true,
            exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub s: usize,
    pub dual_value: f64,
    pub grad_norm: f64,
    pub nu: f64,
    pub norm_m: f64,
    pub norm_b: f64,
    pub norm_e: f64,
    pub norm_f: f64,
    pub norm_r: f64,
    pub norm_c: f64,
}

/// Per-iteration record of the dual ascent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerTrace {
    pub rows: Vec<TraceRow>,
}

impl InnerTrace {
    fn push(&mut self, s: usize, d: f64, grad: &DualVariables, nu: f64, lam: &DualVariables) {
        let [m, b, e, f, r, c] = lam.family_norms();
        self.rows.push(TraceRow {
            s,
            dual_value: d,
            grad_norm: grad.norm(),
            nu,
            norm_m: m,
            norm_b: b,
            norm_e: e,
            norm_f: f,
            norm_r: r,
            norm_c: c,
        });
    }

    pub fn dual_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dual_value).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,D,grad_norm,nu,norm_m,norm_b,norm_e,norm_f,norm_r,norm_c\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.s,
                r.dual_value,
                r.grad_norm,
                r.nu,
                r.norm_m,
                r.norm_b,
                r.norm_e,
                r.norm_f,
                r.norm_r,
                r.norm_c
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    /// Primal minimizer at the final multipliers.
    pub point: BeamformerSet,
    /// Minorant service rates at `point`.
    pub rates: Vec<f64>,
    pub duals: DualVariables,
    pub dual_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Scaled violation of the inequality constraints at `point`.
    pub max_violation: f64,
    /// `f(point) - D(duals)`.
    pub gap: f64,
    pub trace: InnerTrace,
}

struct Point {
    lam: DualVariables,
    bf: BeamformerSet,
    d: f64,
    grad: DualVariables,
}

fn eval_point(lam: DualVariables, sp: &Subproblem) -> Result<Point> {
    let bf = primal_minimizers(&lam, sp)?;
    let grad = dual_gradient(&bf, sp);
    let d = sp.proximal(&bf) + lam.dot(&grad);
    Ok(Point { lam, bf, d, grad })
}

fn duality_gap(p: &Point, sp: &Subproblem) -> f64 {
    -sp.primal_objective(&p.bf) - p.d
}

/// Projected step from `p` with backtracking on the step size.
fn plain_step(p: &Point, nu: &mut f64, sp: &Subproblem, opts: &InnerOptions) -> Result<Point> {
    let mut first = true;
    loop {
        let lam = project_duals(&step_plain(&p.lam, &p.grad, *nu), sp.sc);
        // A trial point too far out for the factorization counts as a
        // failed ascent test.
        let next = match eval_point(lam, sp) {
            Err(Error::NotPositiveDefinite) if opts.backtracking && *nu >= 1e-30 => None,
            other => Some(other?),
        };
        if let Some(next) = next {
            if !opts.backtracking || sufficient_ascent(p, &next, *nu) || *nu < 1e-30 {
                if first && opts.backtracking {
                    *nu *= opts.grow;
                }
                return Ok(next);
            }
        }
        first = false;
        *nu *= 0.5;
    }
}

/// `D(L+) >= D(L) + <g, L+ - L> - ||L+ - L||^2 / (2 nu)`.
fn sufficient_ascent(p: &Point, next: &Point, nu: f64) -> bool {
    let delta = next.lam.sub(&p.lam);
    let model = p.d + p.grad.dot(&delta) - delta.dot(&delta) / (2.0 * nu);
    next.d >= model - 1e-12 * (1.0 + p.d.abs())
}

/// Maximizes the dual function of the subproblem built around `sp.bundle`.
pub fn solve_subproblem(sp: &Subproblem, opts: &InnerOptions) -> Result<InnerResult> {
    let sc = sp.sc;
    let mut nu = opts.nu;
    let mut cur = eval_point(project_duals(&DualVariables::zeros(sc), sc), sp)?;
    let mut trace = InnerTrace::default();
    trace.push(0, cur.d, &cur.grad, nu, &cur.lam);
    let mut momentum = MomentumState::new(&cur.lam);
    let mut converged = false;
    let mut iterations = 0;
    for s in 1..=opts.max_inner {
        iterations = s;
        let next = if opts.accelerated {
            let (mu, state) = step_accelerated(&cur.lam, &cur.grad, nu, &momentum);
            let cand = match eval_point(project_duals(&mu, sc), sp) {
                Err(Error::NotPositiveDefinite) => None,
                other => Some(other?),
            };
            match cand {
                Some(cand) if !(opts.restart && cand.d < cur.d) => {
                    momentum = state;
                    cand
                }
                _ => {
                    momentum = MomentumState::new(&cur.lam);
                    plain_step(&cur, &mut nu, sp, opts)?
                }
            }
        } else {
            plain_step(&cur, &mut nu, sp, opts)?
        };
        let change = (next.d - cur.d).abs() / cur.d.abs().max(1.0);
        cur = next;
        trace.push(s, cur.d, &cur.grad, nu, &cur.lam);
        if change < opts.tol
            && sp.max_violation(&cur.grad) <= opts.feas_tol
            && duality_gap(&cur, sp) <= opts.gap_tol * (1.0 + cur.d.abs())
        {
            converged = true;
            break;
        }
    }
    let rates = sp.bundle.service_rates(&cur.bf, sc);
    Ok(InnerResult {
        max_violation: sp.max_violation(&cur.grad),
        gap: duality_gap(&cur, sp),
        rates,
        dual_value: cur.d,
        duals: cur.lam,
        point: cur.bf,
        iterations,
        converged,
        trace,
    })
}

/// `sum_j ||V_j||^2` restricted to RRH `n`, for every `n`.
pub fn rrh_block_powers(bf: &BeamformerSet, sc: &Scenario) -> Vec<f64> {
    (0..sc.num_rrh)
        .map(|n| bf.v.iter().map(|v| block_norm2(v, sc.rrh_rows(n))).sum())
        .collect()
}

/// Squared distance between two beamformer sets.
pub fn distance2(a: &BeamformerSet, b: &BeamformerSet) -> f64 {
    a.v.iter()
        .zip(&b.v)
        .chain(a.u.iter().zip(&b.u))
        .map(|(x, y)| fro2(&(x - y)))
        .sum()
}
