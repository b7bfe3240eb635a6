//! Concave quadratic minorants of the rates, linear minorants of the received
//! RF power, and the smoothed fronthaul load, all built at an anchor point.
//!
//! For a rate `log2 det(C) - log2 det(C - S X X^H S^H)` with full covariance
//! `C = sum_Y S Y Y^H S^H + noise I`, the minorant built at anchor `X^t` is
//!
//! ```text
//! r(V) = vartheta - sum_Y tr(Y^H Xi Y) - Re tr(Upsilon X)
//! Theta = C^{-1} S X^t,  W = (I - Theta^H S X^t)^{-1}
//! Xi = S^H Theta W Theta^H S / ln 2,   Upsilon = -2 W Theta^H S / ln 2
//! vartheta = (d - tr(W (I + noise Theta^H Theta)) + ln det W) / ln 2
//! ```
//!
//! It is tight at the anchor, has the same gradient there, and lies below the
//! rate everywhere. Dividing by `ln 2` keeps the minorant in bits like the
//! rate it bounds.

use std::f64::consts::LN_2;

use num_complex::Complex64;

use crate::error::Result;
use crate::exec::{map_indices, try_map_indices, Execution};
use crate::numerics::{
    fro2, hermitian_part, hermitian_solve, identity, ln_det_pd, re_inner, trace, CMat,
};
use crate::physics::{block_norm2, required_rf_powers, BeamformerSet};
use crate::scenario::{ChannelSet, Scenario};

/// Coefficients of one rate minorant.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCoeffs {
    pub theta: CMat,
    /// Hermitian positive semidefinite, `D x D` where `D` is the channel width.
    pub xi: CMat,
    /// `d x D`.
    pub upsilon: CMat,
    pub vartheta: f64,
}

impl RateCoeffs {
    /// Builds the minorant for channel `s`, desired anchor `x` and the anchor
    /// beams `interference` that make up the rest of the covariance.
    ///
    /// `W` is formed as `I + X^H S^H J^{-1} S X` with `J` the interference plus
    /// noise covariance, and `Theta = J^{-1} S X W^{-1}`. Both equal the
    /// textbook expressions but avoid the cancellation in `I - Theta^H S X` at
    /// high SNR.
    pub fn build(s: &CMat, x: &CMat, interference: &[&CMat], noise: f64) -> Result<Self> {
        let t = s.nrows();
        let d = x.ncols();
        let sx = s * x;
        let mut j = identity(t) * Complex64::new(noise, 0.0);
        for y in interference {
            let sy = s * *y;
            j += &sy * sy.adjoint();
        }
        let j_sx = hermitian_solve(&j, &sx)?;
        let w = hermitian_part(&(identity(d) + sx.adjoint() * &j_sx));
        let theta = hermitian_solve(&w, &j_sx.adjoint())?.adjoint();
        let th_s = theta.adjoint() * s;
        let inv_ln2 = Complex64::new(1.0 / LN_2, 0.0);
        let xi = hermitian_part(&(th_s.adjoint() * &w * &th_s)) * inv_ln2;
        let upsilon = &w * &th_s * Complex64::new(-2.0 / LN_2, 0.0);
        let inner = identity(d) + theta.adjoint() * &theta * Complex64::new(noise, 0.0);
        let vartheta = (d as f64 - trace(&(&w * inner)).re + ln_det_pd(&w)?) / LN_2;
        Ok(Self {
            theta,
            xi,
            upsilon,
            vartheta,
        })
    }

    /// `vartheta - sum_Y tr(Y^H Xi Y) - Re tr(Upsilon X)`.
    pub fn eval<'a>(&self, x: &CMat, cov: impl IntoIterator<Item = &'a CMat>) -> f64 {
        let quad: f64 = cov.into_iter().map(|y| re_inner(y, &(&self.xi * y))).sum();
        // Re tr(Upsilon X) = Re <Upsilon^H, X>
        self.vartheta - quad - re_inner(&self.upsilon.adjoint(), x)
    }
}

/// Everything the subproblem needs about the current anchor.
#[derive(Debug, Clone)]
pub struct SurrogateBundle {
    pub anchor: BeamformerSet,
    /// Per IU.
    pub broadcast: Vec<RateCoeffs>,
    /// Per IU.
    pub multicast: Vec<RateCoeffs>,
    /// Per RRH.
    pub fronthaul: Vec<RateCoeffs>,
    /// `phi_q = -sum_j ||F_q V_j^t||^2`.
    pub phi_e: Vec<f64>,
    /// `F_q^H F_q V_j^t`, indexed `[q][j]`.
    pub eh_grad: Vec<Vec<CMat>>,
    /// `1 / (||A_n V_j^t||^2 + eps)`, indexed `[n][j]`.
    pub l1_weights: Vec<Vec<f64>>,
    /// Service rates carried over from the previous outer iteration.
    pub cached_rates: Vec<f64>,
    /// RF power each EU must receive.
    pub required_rf: Vec<f64>,
}

pub fn build(
    anchor: &BeamformerSet,
    ch: &ChannelSet,
    sc: &Scenario,
    cached_rates: &[f64],
    exec: Execution,
) -> Result<SurrogateBundle> {
    let required_rf = required_rf_powers(sc)?;
    let v = &anchor.v;
    let groups: Vec<&CMat> = v[1..].iter().collect();
    let broadcast = try_map_indices(exec, sc.num_iu, |k| {
        RateCoeffs::build(&ch.h[k], &v[0], &groups, sc.noise_user)
    })?;
    let multicast = try_map_indices(exec, sc.num_iu, |k| {
        let g = sc.group_of[k];
        let others: Vec<&CMat> = (1..v.len()).filter(|&i| i != g).map(|i| &v[i]).collect();
        RateCoeffs::build(&ch.h[k], &v[g], &others, sc.noise_user)
    })?;
    let fronthaul = try_map_indices(exec, sc.num_rrh, |n| {
        let others: Vec<&CMat> = (0..sc.num_rrh)
            .filter(|&l| l != n)
            .map(|l| &anchor.u[l])
            .collect();
        RateCoeffs::build(&ch.g[n], &anchor.u[n], &others, sc.noise_rrh)
    })?;
    let eh_grad: Vec<Vec<CMat>> = map_indices(exec, sc.num_eu, |q| {
        let ff = ch.f[q].adjoint() * &ch.f[q];
        v.iter().map(|vj| &ff * vj).collect()
    });
    let phi_e = (0..sc.num_eu)
        .map(|q| -v.iter().map(|vj| fro2(&(&ch.f[q] * vj))).sum::<f64>())
        .collect();
    let eps = sc.solver.epsilon_smooth;
    let l1_weights = (0..sc.num_rrh)
        .map(|n| {
            v.iter()
                .map(|vj| 1.0 / (block_norm2(vj, sc.rrh_rows(n)) + eps))
                .collect()
        })
        .collect();
    Ok(SurrogateBundle {
        anchor: anchor.clone(),
        broadcast,
        multicast,
        fronthaul,
        phi_e,
        eh_grad,
        l1_weights,
        cached_rates: cached_rates.to_vec(),
        required_rf,
    })
}

impl SurrogateBundle {
    pub fn broadcast_rate(&self, k: usize, bf: &BeamformerSet) -> f64 {
        self.broadcast[k].eval(&bf.v[0], &bf.v)
    }

    pub fn multicast_rate(&self, k: usize, bf: &BeamformerSet, sc: &Scenario) -> f64 {
        self.multicast[k].eval(&bf.v[sc.group_of[k]], &bf.v[1..])
    }

    pub fn fronthaul_rate(&self, n: usize, bf: &BeamformerSet) -> f64 {
        self.fronthaul[n].eval(&bf.u[n], &bf.u)
    }

    /// Linear minorant of the RF power received by EU `q`.
    pub fn eh_power(&self, q: usize, bf: &BeamformerSet) -> f64 {
        self.phi_e[q]
            + 2.0
                * self.eh_grad[q]
                    .iter()
                    .zip(&bf.v)
                    .map(|(a, x)| re_inner(a, x))
                    .sum::<f64>()
    }

    /// `sum_j w_{n,j} R_j ||A_n V_j||^2`.
    pub fn fronthaul_load(&self, n: usize, bf: &BeamformerSet, sc: &Scenario) -> f64 {
        bf.v.iter()
            .enumerate()
            .map(|(j, vj)| {
                self.l1_weights[n][j] * self.cached_rates[j] * block_norm2(vj, sc.rrh_rows(n))
            })
            .sum()
    }

    /// Minorant service rates: minima of the broadcast minorants over all IUs
    /// and of the multicast minorants over each group.
    pub fn service_rates(&self, bf: &BeamformerSet, sc: &Scenario) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; sc.num_services()];
        for k in 0..sc.num_iu {
            out[0] = out[0].min(self.broadcast_rate(k, bf));
            let g = sc.group_of[k];
            out[g] = out[g].min(self.multicast_rate(k, bf, sc));
        }
        out
    }
}
