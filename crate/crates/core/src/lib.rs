//! Joint wireless-fronthaul and access-link beamforming for cloud radio access
//! networks with simultaneous wireless information and power transfer.
//!
//! The crate maximizes the weighted sum of one broadcast rate and `G`
//! multicast group rates subject to per-RRH fronthaul capacity, per-RRH and
//! center transmit power, and per-EU harvested-energy constraints. The outer
//! loop ([`driver::run`]) is successive convex approximation; each convex
//! subproblem is solved in the dual domain by projected gradient ascent, with
//! an optional momentum-accelerated variant ([`dual`]). A stochastic
//! subgradient method ([`feasibility::find_feasible`]) produces the feasible
//! starting point the outer loop needs.
//!
//! All powers are in watts and all rates in bits/s/Hz.

pub mod archive;
pub mod driver;
pub mod dual;
pub mod error;
pub mod exec;
pub mod feasibility;
pub mod numerics;
pub mod physics;
pub mod scenario;
pub mod surrogates;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Execution;
pub use numerics::CMat;
pub use physics::{BeamformerSet, RateReport, ResidualTable};
pub use scenario::{ChannelSet, Scenario, ScenarioConfig};
