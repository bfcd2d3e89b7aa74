//! Online packet scheduling for two-tier reconfigurable (hybrid) datacenter
//! networks.
//!
//! Packets arrive over time at source racks and must reach destination racks,
//! either over a direct fixed link or through a transmitter-receiver edge of
//! the reconfigurable layer, where every transmitter and receiver carries at
//! most one transmission per step. The crate provides:
//!
//! * [`dispatcher`]: the impact-minimizing router that commits each packet on
//!   arrival.
//! * [`engine`]: the step simulator that transmits a greedy stable matching.
//! * [`metrics`]: weighted latency of runs and of fractional schedules, plus
//!   speed-limited feasibility of fractional schedules.
//! * [`dual`]: the dual solution fitted to a run and runtime checks of every
//!   inequality that bounds the run against the speed-limited optimum.
//! * [`baselines`] and [`oracle`]: comparison policies and an exhaustive
//!   optimum for tiny instances.
//! * [`format`], [`workload`], [`report`]: instance files, generators, CSV.
//!
//! All code is generic over [`Scalar`]; the aliases below fix it to the exact
//! [`Rational`] used for certification.

pub mod baselines;
pub mod dispatcher;
pub mod dual;
pub mod engine;
pub mod fixtures;
pub mod format;
pub mod metrics;
pub mod model;
pub mod num;
pub mod oracle;
pub mod report;
pub mod workload;

pub use model::{ChunkKey, EdgeRef, Layer, NodeId, PacketId, Topology};
pub use num::{Rational, Scalar};

pub type Instance = model::Instance<Rational>;
pub type Packet = model::Packet<Rational>;
pub type Chunk = model::Chunk<Rational>;
pub type Assignment = dispatcher::Assignment<Rational>;
pub type ImpactBreakdown = dispatcher::ImpactBreakdown<Rational>;
pub type RunLog = engine::RunLog<Rational>;
pub type Matching = engine::Matching<Rational>;
pub type FractionalSchedule = metrics::FractionalSchedule<Rational>;
pub type DualSolution = dual::DualSolution<Rational>;
pub type ChargeLedger = dual::ChargeLedger<Rational>;
pub type OracleResult = oracle::OracleResult<Rational>;
