//! Network instances: dimensions, budgets, geometry, and channels.
//!
//! A [`ScenarioConfig`] is the user-facing template (read from TOML, units in
//! the key names). [`generate`] validates it, places the RRHs and users, and
//! draws the channels, producing a [`Scenario`] (everything in SI units) and
//! a [`ChannelSet`].
//!
//! Path loss follows the log-distance model
//! `PL(d) = PL0 + 10 gamma log10(max(d, d_min) / d0)` in dB, with antenna gains
//! added on top, and small-scale fading is i.i.d. Rayleigh.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{random_gaussian, CMat};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

// ---------------------------------------------------------------------------
// configuration template

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub rrh_count: usize,
    pub iu_count: usize,
    pub eu_count: usize,
    pub group_count: usize,
    pub center_antennas: usize,
    pub rrh_antennas: usize,
    pub iu_antennas: usize,
    pub eu_antennas: usize,
    pub access_streams: usize,
    pub fronthaul_streams: usize,
    pub area_side_m: f64,
    /// 1-based group of every IU; round-robin when absent.
    pub group_of: Option<Vec<usize>>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            rrh_count: 16,
            iu_count: 9,
            eu_count: 4,
            group_count: 3,
            center_antennas: 16,
            rrh_antennas: 4,
            iu_antennas: 2,
            eu_antennas: 2,
            access_streams: 2,
            fronthaul_streams: 2,
            area_side_m: 300.0,
            group_of: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub power_rrh_dbm: f64,
    pub power_center_dbm: f64,
    pub noise_user_dbm: f64,
    pub noise_rrh_dbm: f64,
    pub energy_min_mw: f64,
    /// Priorities of the broadcast service followed by the `G` groups.
    pub priorities: Option<Vec<f64>>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            power_rrh_dbm: 30.0,
            power_center_dbm: 40.0,
            noise_user_dbm: -94.0,
            noise_rrh_dbm: -102.0,
            energy_min_mw: 2.0,
            priorities: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvesterConfig {
    pub iota1: f64,
    pub iota2: f64,
    pub sensitivity_mw: f64,
    pub p_max_mw: f64,
}

impl Default for HarvesterConfig {
    fn default() -> Self {
        Self {
            iota1: 116.0,
            iota2: 2.3,
            sensitivity_mw: 0.08,
            p_max_mw: 37.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub path_loss_ref_db: f64,
    pub ref_distance_m: f64,
    pub exponent_access: f64,
    pub exponent_fronthaul: f64,
    pub gain_center_dbi: f64,
    pub gain_rrh_dbi: f64,
    pub min_distance_m: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            path_loss_ref_db: 30.0,
            ref_distance_m: 1.0,
            exponent_access: 3.0,
            exponent_fronthaul: 2.5,
            gain_center_dbi: 9.0,
            gain_rrh_dbi: 0.0,
            min_distance_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon_smooth: f64,
    /// Proximal weight on the access beamformers; `100 / p_n` when absent.
    pub rho1: Option<f64>,
    /// Proximal weight on the fronthaul beamformers; `100 / p_c` when
    /// absent.
    pub rho2: Option<f64>,
    pub nu: f64,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Indicator threshold relative to the per-RRH power cap.
    pub zero_tol_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon_smooth: 1e-10,
            rho1: None,
            rho2: None,
            nu: 1.0,
            tol_inner: 1e-4,
            tol_outer: 1e-4,
            max_inner: 2000,
            max_outer: 100,
            zero_tol_rel: 1e-12,
        }
    }
}

/// Scenario template as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    pub power: PowerConfig,
    pub harvester: HarvesterConfig,
    pub channel: ChannelConfig,
    pub solver: SolverConfig,
}

impl ScenarioConfig {
    /// Small instance used for tests and quick experiments: 4 RRHs with 2
    /// antennas, 4 single-antenna IUs in 2 groups, 2 single-antenna EUs and a
    /// 4-antenna center in a 5 m square (close enough for the harvesters to
    /// reach their sensitivity threshold).
    pub fn desk() -> Self {
        let mut c = Self {
            network: NetworkConfig {
                rrh_count: 4,
                iu_count: 4,
                eu_count: 2,
                group_count: 2,
                center_antennas: 4,
                rrh_antennas: 2,
                iu_antennas: 1,
                eu_antennas: 1,
                access_streams: 1,
                fronthaul_streams: 1,
                area_side_m: 5.0,
                group_of: None,
            },
            ..Self::default()
        };
        c.power.energy_min_mw = 0.01;
        c
    }

    pub fn from_toml_str(s: &str) -> std::result::Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

// ---------------------------------------------------------------------------
// resolved scenario

/// Nonlinear harvester parameters, powers in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhParams {
    pub iota1: f64,
    pub iota2: f64,
    pub p0: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub epsilon_smooth: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub nu: f64,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub zero_tol_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub center: [f64; 2],
    pub rrh: Vec<[f64; 2]>,
    pub iu: Vec<[f64; 2]>,
    pub eu: Vec<[f64; 2]>,
}

/// A fully resolved network instance in SI units.
///
/// Service index `j = 0` is the broadcast stream and `j = 1..=G` are the
/// multicast groups; `group_of[k]` is the service index of IU `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_rrh: usize,
    pub num_iu: usize,
    pub num_eu: usize,
    pub num_groups: usize,
    pub center_antennas: usize,
    pub rrh_antennas: usize,
    pub iu_antennas: usize,
    pub eu_antennas: usize,
    pub access_streams: usize,
    pub fronthaul_streams: usize,
    pub group_of: Vec<usize>,
    pub alpha: Vec<f64>,
    pub p_rrh: Vec<f64>,
    pub p_center: f64,
    pub e_min: Vec<f64>,
    pub noise_user: f64,
    pub noise_rrh: f64,
    pub eh: EhParams,
    pub solver: SolverParams,
    pub area_side: f64,
    pub seed: u64,
    pub geometry: Geometry,
}

impl Scenario {
    /// Number of access beamformers, `G + 1`.
    pub fn num_services(&self) -> usize {
        self.num_groups + 1
    }

    /// Rows of the network-wide access beamformers, `M N`.
    pub fn access_dim(&self) -> usize {
        self.rrh_antennas * self.num_rrh
    }

    /// Row range of RRH `n` inside an access beamformer.
    pub fn rrh_rows(&self, n: usize) -> std::ops::Range<usize> {
        n * self.rrh_antennas..(n + 1) * self.rrh_antennas
    }

    /// IUs that belong to service `j`; every IU for `j = 0`.
    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.num_iu)
            .filter(|&k| j == 0 || self.group_of[k] == j)
            .collect()
    }

    /// Indicator threshold of RRH `n`.
    pub fn zero_tol(&self, n: usize) -> f64 {
        self.solver.zero_tol_rel * self.p_rrh[n]
    }

    /// Checks every structural invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        check_dims(
            &mut errs,
            self.num_rrh,
            self.num_iu,
            self.num_groups,
            self.center_antennas,
            self.rrh_antennas,
            self.iu_antennas,
            self.eu_antennas,
            self.access_streams,
            self.fronthaul_streams,
        );
        if self.group_of.len() != self.num_iu {
            errs.push(format!(
                "group_of has {} entries, expected one per IU ({})",
                self.group_of.len(),
                self.num_iu
            ));
        } else {
            check_partition(&mut errs, &self.group_of, self.num_groups);
        }
        if self.alpha.len() != self.num_groups + 1 {
            errs.push(format!(
                "expected {} priorities, got {}",
                self.num_groups + 1,
                self.alpha.len()
            ));
        }
        if self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            errs.push("priorities must be finite and non-negative".into());
        }
        if self.p_rrh.len() != self.num_rrh {
            errs.push("one RRH power cap per RRH is required".into());
        }
        if self.e_min.len() != self.num_eu {
            errs.push("one energy requirement per EU is required".into());
        }
        for (name, v) in [
            ("p_center", self.p_center),
            ("noise_user", self.noise_user),
            ("noise_rrh", self.noise_rrh),
            ("area_side", self.area_side),
        ] {
            positive(&mut errs, name, v);
        }
        for &p in &self.p_rrh {
            positive(&mut errs, "p_rrh", p);
        }
        if self.e_min.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            errs.push("energy requirements must be finite and non-negative".into());
        }
        check_eh(&mut errs, &self.eh);
        let s = &self.solver;
        for (name, v) in [
            ("epsilon_smooth", s.epsilon_smooth),
            ("rho1", s.rho1),
            ("rho2", s.rho2),
            ("nu", s.nu),
            ("tol_inner", s.tol_inner),
            ("tol_outer", s.tol_outer),
            ("zero_tol_rel", s.zero_tol_rel),
        ] {
            positive(&mut errs, name, v);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

fn positive(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(format!(
            "{name} must be finite and strictly positive, got {v}"
        ));
    }
}

#[allow(clippy::too_many_arguments)]
fn check_dims(
    errs: &mut Vec<String>,
    n: usize,
    k: usize,
    g: usize,
    l: usize,
    m: usize,
    t_i: usize,
    t_e: usize,
    d_a: usize,
    d_f: usize,
) {
    if n == 0 {
        errs.push("at least one RRH is required".into());
    }
    if k == 0 {
        errs.push("at least one IU is required".into());
    }
    if g == 0 || g > k {
        errs.push(format!(
            "group count must satisfy 1 <= G <= K, got G = {g}, K = {k}"
        ));
    }
    if t_i == 0 || t_e == 0 {
        errs.push("user antenna counts must be at least 1".into());
    }
    if m < t_i.max(t_e) {
        errs.push(format!(
            "RRH antennas M = {m} must be at least max(T_I, T_E) = {}",
            t_i.max(t_e)
        ));
    }
    if l < m {
        errs.push(format!("center antennas L = {l} must be at least M = {m}"));
    }
    if d_a == 0 || d_a > t_i {
        errs.push(format!(
            "access streams must satisfy 1 <= d_a <= T_I, got {d_a}"
        ));
    }
    if d_f == 0 || d_f > m {
        errs.push(format!(
            "fronthaul streams must satisfy 1 <= d_f <= M, got {d_f}"
        ));
    }
}

fn check_partition(errs: &mut Vec<String>, group_of: &[usize], g: usize) {
    if let Some(bad) = group_of.iter().find(|&&x| x == 0 || x > g) {
        errs.push(format!("group index {bad} outside 1..={g}"));
        return;
    }
    for grp in 1..=g {
        if !group_of.contains(&grp) {
            errs.push(format!("group {grp} has no members"));
        }
    }
}

fn check_eh(errs: &mut Vec<String>, eh: &EhParams) {
    positive(errs, "iota1", eh.iota1);
    positive(errs, "p_max", eh.p_max);
    if !eh.iota2.is_finite() {
        errs.push("iota2 must be finite".into());
    }
    if !(eh.p0.is_finite() && eh.p0 >= 0.0) {
        errs.push("harvester sensitivity must be non-negative".into());
    }
}

/// Network-wide channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `H_k`, `T_I x MN`, one per IU.
    pub h: Vec<CMat>,
    /// `F_q`, `T_E x MN`, one per EU.
    pub f: Vec<CMat>,
    /// `G_n`, `M x L`, center to RRH `n`.
    pub g: Vec<CMat>,
}

impl ChannelSet {
    pub fn validate(&self, sc: &Scenario) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |name: &str, mats: &[CMat], count: usize, rows: usize, cols: usize| {
            if mats.len() != count {
                errs.push(format!(
                    "expected {count} {name} matrices, got {}",
                    mats.len()
                ));
            }
            for (i, m) in mats.iter().enumerate() {
                if m.shape() != (rows, cols) {
                    errs.push(format!(
                        "{name}[{i}] is {}x{}, expected {rows}x{cols}",
                        m.nrows(),
                        m.ncols()
                    ));
                } else if !crate::numerics::is_finite(m) {
                    errs.push(format!("{name}[{i}] has non-finite entries"));
                }
            }
        };
        let mn = sc.access_dim();
        check("H", &self.h, sc.num_iu, sc.iu_antennas, mn);
        check("F", &self.f, sc.num_eu, sc.eu_antennas, mn);
        check(
            "G",
            &self.g,
            sc.num_rrh,
            sc.rrh_antennas,
            sc.center_antennas,
        );
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

/// Linear path gain (including antenna gains) at distance `d` meters.
pub fn path_gain(d: f64, exponent: f64, gains_dbi: f64, ch: &ChannelConfig) -> f64 {
    let d = d.max(ch.min_distance_m).max(ch.ref_distance_m);
    let pl_db = ch.path_loss_ref_db + 10.0 * exponent * (d / ch.ref_distance_m).log10();
    db_to_linear(gains_dbi - pl_db)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn resolve(config: &ScenarioConfig, seed: u64, geometry: Geometry) -> Scenario {
    let net = &config.network;
    let pw = &config.power;
    let group_of = net.group_of.clone().unwrap_or_else(|| {
        (0..net.iu_count)
            .map(|k| k % net.group_count.max(1) + 1)
            .collect()
    });
    let alpha = pw
        .priorities
        .clone()
        .unwrap_or_else(|| vec![1.0; net.group_count + 1]);
    let p_r = dbm_to_watts(pw.power_rrh_dbm);
    let p_c = dbm_to_watts(pw.power_center_dbm);
    let sv = &config.solver;
    Scenario {
        num_rrh: net.rrh_count,
        num_iu: net.iu_count,
        num_eu: net.eu_count,
        num_groups: net.group_count,
        center_antennas: net.center_antennas,
        rrh_antennas: net.rrh_antennas,
        iu_antennas: net.iu_antennas,
        eu_antennas: net.eu_antennas,
        access_streams: net.access_streams,
        fronthaul_streams: net.fronthaul_streams,
        group_of,
        alpha,
        p_rrh: vec![p_r; net.rrh_count],
        p_center: p_c,
        e_min: vec![pw.energy_min_mw * 1e-3; net.eu_count],
        noise_user: dbm_to_watts(pw.noise_user_dbm),
        noise_rrh: dbm_to_watts(pw.noise_rrh_dbm),
        eh: EhParams {
            iota1: config.harvester.iota1,
            iota2: config.harvester.iota2,
            p0: config.harvester.sensitivity_mw * 1e-3,
            p_max: config.harvester.p_max_mw * 1e-3,
        },
        solver: SolverParams {
            epsilon_smooth: sv.epsilon_smooth,
            rho1: sv.rho1.unwrap_or(100.0 / p_r),
            rho2: sv.rho2.unwrap_or(100.0 / p_c),
            nu: sv.nu,
            tol_inner: sv.tol_inner,
            tol_outer: sv.tol_outer,
            max_inner: sv.max_inner,
            max_outer: sv.max_outer,
            zero_tol_rel: sv.zero_tol_rel,
        },
        area_side: net.area_side_m,
        seed,
        geometry,
    }
}

/// Validates a template, places nodes uniformly on the square area and draws
/// the channels. Deterministic in `(config, seed)`.
pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<(Scenario, ChannelSet)> {
    let net = &config.network;
    let mut errs = Vec::new();
    for (name, v) in [
        ("path_loss_ref_db", config.channel.path_loss_ref_db),
        ("gain_center_dbi", config.channel.gain_center_dbi),
        ("gain_rrh_dbi", config.channel.gain_rrh_dbi),
    ] {
        if !v.is_finite() {
            errs.push(format!("{name} must be finite"));
        }
    }
    for (name, v) in [
        ("ref_distance_m", config.channel.ref_distance_m),
        ("min_distance_m", config.channel.min_distance_m),
        ("exponent_access", config.channel.exponent_access),
        ("exponent_fronthaul", config.channel.exponent_fronthaul),
    ] {
        positive(&mut errs, name, v);
    }
    if let Some(p) = &config.power.priorities {
        if p.len() != net.group_count + 1 {
            errs.push(format!(
                "priorities must list the broadcast service and every group ({} values), got {}",
                net.group_count + 1,
                p.len()
            ));
        }
    }
    for (name, v) in [
        ("power_rrh_dbm", config.power.power_rrh_dbm),
        ("power_center_dbm", config.power.power_center_dbm),
        ("noise_user_dbm", config.power.noise_user_dbm),
        ("noise_rrh_dbm", config.power.noise_rrh_dbm),
    ] {
        if !v.is_finite() {
            errs.push(format!("{name} must be finite"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = net.area_side_m;
    let mut place = |count: usize| -> Vec<[f64; 2]> {
        (0..count)
            .map(|_| [side * rng.random::<f64>(), side * rng.random::<f64>()])
            .collect()
    };
    let geometry = Geometry {
        center: [side / 2.0, side / 2.0],
        rrh: place(net.rrh_count),
        iu: place(net.iu_count),
        eu: place(net.eu_count),
    };
    let sc = resolve(config, seed, geometry);
    match sc.validate() {
        Err(Error::InvalidConfig(mut more)) => {
            errs.append(&mut more);
        }
        Err(e) => return Err(e),
        Ok(()) => {}
    }
    if !errs.is_empty() {
        return Err(Error::InvalidConfig(errs));
    }

    let ch = &config.channel;
    let m = sc.rrh_antennas;
    let mut access = |user: [f64; 2], antennas: usize| -> CMat {
        let mut mat = CMat::zeros(antennas, sc.access_dim());
        for (n, &rrh) in sc.geometry.rrh.iter().enumerate() {
            let amp = path_gain(dist(user, rrh), ch.exponent_access, ch.gain_rrh_dbi, ch).sqrt();
            let block =
                random_gaussian(&mut rng, antennas, m) * num_complex::Complex64::new(amp, 0.0);
            mat.view_mut((0, n * m), (antennas, m)).copy_from(&block);
        }
        mat
    };
    let h: Vec<CMat> = sc
        .geometry
        .iu
        .iter()
        .map(|&p| access(p, sc.iu_antennas))
        .collect();
    let f: Vec<CMat> = sc
        .geometry
        .eu
        .iter()
        .map(|&p| access(p, sc.eu_antennas))
        .collect();
    let g: Vec<CMat> = sc
        .geometry
        .rrh
        .iter()
        .map(|&p| {
            let amp = path_gain(
                dist(p, sc.geometry.center),
                ch.exponent_fronthaul,
                ch.gain_center_dbi + ch.gain_rrh_dbi,
                ch,
            )
            .sqrt();
            random_gaussian(&mut rng, m, sc.center_antennas) * num_complex::Complex64::new(amp, 0.0)
        })
        .collect();
    Ok((sc, ChannelSet { h, f, g }))
}
