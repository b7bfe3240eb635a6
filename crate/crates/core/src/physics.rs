//! Exact evaluation of rates, powers, harvested energy and constraint slacks.
//!
//! Rates are differences of log-determinants of full and interference
//! covariances, which equals `log2 det(I + X^H S^H J^{-1} S X)` without forming
//! `J^{-1}`. Negative round-off is clamped to zero.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{map_indices, try_map_indices, Execution};
use crate::numerics::{fro2, identity, logdet2_pd, re_inner, CMat};
use crate::scenario::{ChannelSet, EhParams, Scenario};

/// Access beamformers `V_j` (`MN x d_a`, `j = 0..=G`) and fronthaul
/// beamformers `U_n` (`L x d_f`, `n = 0..N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    #[serde(with = "crate::archive::mat_list")]
    pub v: Vec<CMat>,
    #[serde(with = "crate::archive::mat_list")]
    pub u: Vec<CMat>,
}

impl BeamformerSet {
    pub fn zeros(sc: &Scenario) -> Self {
        Self {
            v: (0..sc.num_services())
                .map(|_| CMat::zeros(sc.access_dim(), sc.access_streams))
                .collect(),
            u: (0..sc.num_rrh)
                .map(|_| CMat::zeros(sc.center_antennas, sc.fronthaul_streams))
                .collect(),
        }
    }

    pub fn shape_matches(&self, sc: &Scenario) -> bool {
        self.v.len() == sc.num_services()
            && self.u.len() == sc.num_rrh
            && self
                .v
                .iter()
                .all(|v| v.shape() == (sc.access_dim(), sc.access_streams))
            && self
                .u
                .iter()
                .all(|u| u.shape() == (sc.center_antennas, sc.fronthaul_streams))
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.u).all(crate::numerics::is_finite)
    }

    /// `self + tau (other - self)`.
    pub fn lerp(&self, other: &Self, tau: f64) -> Self {
        let t = Complex64::new(tau, 0.0);
        let mix = |a: &Vec<CMat>, b: &Vec<CMat>| -> Vec<CMat> {
            a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
        };
        Self {
            v: mix(&self.v, &other.v),
            u: mix(&self.u, &other.u),
        }
    }

    /// `sum ||V_j - W_j||^2 + sum ||U_n - Z_n||^2` split into the two parts.
    pub fn dist2(&self, other: &Self) -> (f64, f64) {
        let d = |a: &Vec<CMat>, b: &Vec<CMat>| -> f64 {
            a.iter().zip(b).map(|(x, y)| fro2(&(x - y))).sum()
        };
        (d(&self.v, &other.v), d(&self.u, &other.u))
    }

    /// Multiplies every access beamformer by `e^{i theta_j}`.
    pub fn rotate_access(&self, phases: &[f64]) -> Self {
        let mut out = self.clone();
        for (v, &th) in out.v.iter_mut().zip(phases) {
            *v *= Complex64::from_polar(1.0, th);
        }
        out
    }
}

/// `||A_n X||_F^2` where `A_n` keeps the rows in `rows`.
pub fn block_norm2(x: &CMat, rows: Range<usize>) -> f64 {
    x.rows_range(rows).iter().map(|z| z.norm_sqr()).sum()
}

/// Log-determinant of `sum_i (S X_i)(S X_i)^H + noise I`, in bits.
fn cov_logdet(products: &[&CMat], dim: usize, noise: f64) -> Result<f64> {
    let mut c = identity(dim) * Complex64::new(noise, 0.0);
    for p in products {
        c += *p * p.adjoint();
    }
    logdet2_pd(&c)
}

/// Broadcast and multicast rate of IU `k`.
pub fn iu_rates(
    k: usize,
    bf: &BeamformerSet,
    ch: &ChannelSet,
    sc: &Scenario,
) -> Result<(f64, f64)> {
    let h = &ch.h[k];
    let hv: Vec<CMat> = bf.v.iter().map(|v| h * v).collect();
    let dim = sc.iu_antennas;
    let all: Vec<&CMat> = hv.iter().collect();
    let groups: Vec<&CMat> = hv[1..].iter().collect();
    let others: Vec<&CMat> = hv
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != 0 && j != sc.group_of[k])
        .map(|(_, p)| p)
        .collect();
    let ld_total = cov_logdet(&all, dim, sc.noise_user)?;
    let ld_b = cov_logdet(&groups, dim, sc.noise_user)?;
    let ld_m = cov_logdet(&others, dim, sc.noise_user)?;
    Ok(((ld_total - ld_b).max(0.0), (ld_b - ld_m).max(0.0)))
}

pub fn broadcast_rate(k: usize, bf: &BeamformerSet, ch: &ChannelSet, sc: &Scenario) -> Result<f64> {
    Ok(iu_rates(k, bf, ch, sc)?.0)
}

pub fn multicast_rate(k: usize, bf: &BeamformerSet, ch: &ChannelSet, sc: &Scenario) -> Result<f64> {
    Ok(iu_rates(k, bf, ch, sc)?.1)
}

/// Fronthaul rate of RRH `n`.
pub fn fronthaul_rate(n: usize, bf: &BeamformerSet, ch: &ChannelSet, sc: &Scenario) -> Result<f64> {
    let g = &ch.g[n];
    let gu: Vec<CMat> = bf.u.iter().map(|u| g * u).collect();
    let all: Vec<&CMat> = gu.iter().collect();
    let others: Vec<&CMat> = gu
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != n)
        .map(|(_, p)| p)
        .collect();
    let dim = sc.rrh_antennas;
    Ok((cov_logdet(&all, dim, sc.noise_rrh)? - cov_logdet(&others, dim, sc.noise_rrh)?).max(0.0))
}

/// `R_0 = min_k R_B,k` and `R_g = min_{k in K_g} R_M,k`, as one vector indexed
/// by service.
pub fn service_rates(r_b: &[f64], r_m: &[f64], sc: &Scenario) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; sc.num_services()];
    for k in 0..sc.num_iu {
        out[0] = out[0].min(r_b[k]);
        let g = sc.group_of[k];
        out[g] = out[g].min(r_m[k]);
    }
    out
}

/// RF power received by EU `q`.
pub fn rx_rf_power(q: usize, bf: &BeamformerSet, ch: &ChannelSet) -> f64 {
    bf.v.iter().map(|v| fro2(&(&ch.f[q] * v))).sum()
}

pub fn rrh_power(n: usize, bf: &BeamformerSet, sc: &Scenario) -> f64 {
    bf.v.iter().map(|v| block_norm2(v, sc.rrh_rows(n))).sum()
}

pub fn center_power(bf: &BeamformerSet) -> f64 {
    bf.u.iter().map(fro2).sum()
}

/// Harvested power for RF input `x`: logistic response with sensitivity
/// `p0` and saturation `p_max`.
pub fn eh_forward(x: f64, eh: &EhParams) -> f64 {
    let d1 = (-eh.iota1 * eh.p0 + eh.iota2).exp();
    let inner = (1.0 + d1) / (1.0 + (-eh.iota1 * x + eh.iota2).exp()) - 1.0;
    (eh.p_max / d1 * inner).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RequiredPower {
    Finite(f64),
    /// The requirement reaches the saturation power.
    Infinite,
}

impl RequiredPower {
    pub fn finite(self) -> Option<f64> {
        match self {
            RequiredPower::Finite(x) => Some(x),
            RequiredPower::Infinite => None,
        }
    }
}

/// Smallest RF input power whose harvested power reaches `e`.
pub fn eh_inverse(e: f64, eh: &EhParams) -> RequiredPower {
    if e >= eh.p_max {
        return RequiredPower::Infinite;
    }
    if e <= 0.0 {
        return RequiredPower::Finite(0.0);
    }
    let d1 = (-eh.iota1 * eh.p0 + eh.iota2).exp();
    let d2 = d1 / eh.p_max;
    let arg = (1.0 + d1) / (1.0 + d2 * e) - 1.0;
    RequiredPower::Finite(eh.iota2 / eh.iota1 - arg.ln() / eh.iota1)
}

/// RF power each EU needs, or the first EU whose requirement is unreachable.
pub fn required_rf_powers(sc: &Scenario) -> Result<Vec<f64>> {
    sc.e_min
        .iter()
        .enumerate()
        .map(|(q, &e)| {
            eh_inverse(e, &sc.eh)
                .finite()
                .ok_or(crate::Error::InfiniteRequirement {
                    eu: q,
                    required_w: e,
                })
        })
        .collect()
}

/// `sum_j 1{||A_n V_j||^2 > zero_tol} R_j`.
pub fn aggregate_fronthaul_load(
    n: usize,
    bf: &BeamformerSet,
    rates: &[f64],
    sc: &Scenario,
    zero_tol: f64,
) -> f64 {
    bf.v.iter()
        .zip(rates)
        .filter(|(v, _)| block_norm2(v, sc.rrh_rows(n)) > zero_tol)
        .map(|(_, r)| r)
        .sum()
}

pub fn weighted_sum_rate(rates: &[f64], alpha: &[f64]) -> f64 {
    rates.iter().zip(alpha).map(|(r, a)| r * a).sum()
}

/// Every exact quantity at one beamformer set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_b: Vec<f64>,
    pub r_m: Vec<f64>,
    pub r0: f64,
    pub rg: Vec<f64>,
    pub r_f: Vec<f64>,
    pub r_a: Vec<f64>,
    pub p_r: Vec<f64>,
    pub e_r: Vec<f64>,
    pub p_t: Vec<f64>,
    pub p_center: f64,
    pub wsr: f64,
}

impl RateReport {
    /// `R_j` indexed by service.
    pub fn service_rates(&self) -> Vec<f64> {
        std::iter::once(self.r0)
            .chain(self.rg.iter().copied())
            .collect()
    }
}

pub fn evaluate(
    bf: &BeamformerSet,
    ch: &ChannelSet,
    sc: &Scenario,
    exec: Execution,
) -> Result<RateReport> {
    let iu = try_map_indices(exec, sc.num_iu, |k| iu_rates(k, bf, ch, sc))?;
    let r_b: Vec<f64> = iu.iter().map(|r| r.0).collect();
    let r_m: Vec<f64> = iu.iter().map(|r| r.1).collect();
    let rates = service_rates(&r_b, &r_m, sc);
    let r_f = try_map_indices(exec, sc.num_rrh, |n| fronthaul_rate(n, bf, ch, sc))?;
    let r_a: Vec<f64> = (0..sc.num_rrh)
        .map(|n| aggregate_fronthaul_load(n, bf, &rates, sc, sc.zero_tol(n)))
        .collect();
    let p_r = map_indices(exec, sc.num_eu, |q| rx_rf_power(q, bf, ch));
    let e_r = p_r.iter().map(|&x| eh_forward(x, &sc.eh)).collect();
    let p_t = (0..sc.num_rrh).map(|n| rrh_power(n, bf, sc)).collect();
    Ok(RateReport {
        r_b,
        r_m,
        r0: rates[0],
        rg: rates[1..].to_vec(),
        r_f,
        r_a,
        p_r,
        e_r,
        p_t,
        p_center: center_power(bf),
        wsr: weighted_sum_rate(&rates, &sc.alpha),
    })
}

/// Signed slack of every constraint; negative or zero means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    /// `R_A,n - R_F,n`.
    pub fronthaul: Vec<f64>,
    /// `e_q - E_R,q`.
    pub energy: Vec<f64>,
    /// `P_T,n - p_n`.
    pub rrh_power: Vec<f64>,
    /// `sum ||U_n||^2 - p_c`.
    pub center_power: f64,
}

impl ResidualTable {
    pub fn from_report(rep: &RateReport, sc: &Scenario) -> Self {
        Self {
            fronthaul: rep.r_a.iter().zip(&rep.r_f).map(|(a, f)| a - f).collect(),
            energy: sc.e_min.iter().zip(&rep.e_r).map(|(e, h)| e - h).collect(),
            rrh_power: rep.p_t.iter().zip(&sc.p_rrh).map(|(t, p)| t - p).collect(),
            center_power: rep.p_center - sc.p_center,
        }
    }

    /// Violations scaled to their natural size: fronthaul by `max(1, R_F)`,
    /// energy by `e_q`, powers by their caps. Satisfied constraints give 0.
    pub fn relative_violations(&self, rep: &RateReport, sc: &Scenario) -> ResidualTable {
        let pos = |x: f64, s: f64| if x > 0.0 { x / s } else { 0.0 };
        ResidualTable {
            fronthaul: self
                .fronthaul
                .iter()
                .zip(&rep.r_f)
                .map(|(&x, &f)| pos(x, f.max(1.0)))
                .collect(),
            energy: self
                .energy
                .iter()
                .zip(&sc.e_min)
                .map(|(&x, &e)| pos(x, e.max(f64::MIN_POSITIVE)))
                .collect(),
            rrh_power: self
                .rrh_power
                .iter()
                .zip(&sc.p_rrh)
                .map(|(&x, &p)| pos(x, p))
                .collect(),
            center_power: pos(self.center_power, sc.p_center),
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.fronthaul
            .iter()
            .chain(&self.energy)
            .chain(&self.rrh_power)
            .copied()
            .fold(self.center_power, f64::max)
    }
}

pub fn constraint_residuals(
    bf: &BeamformerSet,
    ch: &ChannelSet,
    sc: &Scenario,
    exec: Execution,
) -> Result<(RateReport, ResidualTable)> {
    let rep = evaluate(bf, ch, sc, exec)?;
    let res = ResidualTable::from_report(&rep, sc);
    Ok((rep, res))
}

/// Largest relative constraint violation, 0 at feasible points.
pub fn max_relative_violation(rep: &RateReport, sc: &Scenario) -> f64 {
    ResidualTable::from_report(rep, sc)
        .relative_violations(rep, sc)
        .max_entry()
}

/// Real inner product `sum_j Re tr(A_j^H B_j)` over matching lists.
pub fn list_inner(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| re_inner(x, y)).sum()
}
