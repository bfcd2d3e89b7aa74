//! Weighted latency of runs and fractional schedules, and speed-limited
//! feasibility of fractional schedules.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dispatcher::Route;
use crate::engine::RunLog;
use crate::model::{ChunkKey, EdgeRef, Instance, NodeId, PacketId};
use crate::num::{sum, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("packet {0:?} has no assignment")]
    Unassigned(PacketId),
    #[error("chunk {0} was never delivered")]
    Undelivered(ChunkKey),
}

/// Weighted latency of each packet in a complete run.
pub fn packet_latencies<W: Scalar>(log: &RunLog<W>) -> Result<BTreeMap<PacketId, W>, MetricsError> {
    let mut out = BTreeMap::new();
    for p in log.instance.packets() {
        let a = log
            .assignments
            .get(&p.id)
            .ok_or(MetricsError::Unassigned(p.id))?;
        let latency = match &a.route {
            Route::FixedLink { delay } => p.weight.mul_int(*delay as i64),
            Route::Reconfig { chunks, .. } => {
                let mut acc = W::zero();
                for c in chunks {
                    let d = log
                        .deliveries
                        .get(&c.key())
                        .ok_or(MetricsError::Undelivered(c.key()))?;
                    acc = acc + c.weight.mul_int((d - p.release) as i64);
                }
                acc
            }
        };
        out.insert(p.id, latency);
    }
    Ok(out)
}

/// Total weighted latency: per chunk `w_c * (delivery - release)` plus
/// `w_p * link_delay` per fixed-routed packet.
pub fn run_cost<W: Scalar>(log: &RunLog<W>) -> Result<W, MetricsError> {
    Ok(sum(packet_latencies(log)?.into_values()))
}

/// Weighted latency of the traffic sent through the reconfigurable layer.
pub fn reconfig_latency<W: Scalar>(log: &RunLog<W>) -> Result<W, MetricsError> {
    let lat = packet_latencies(log)?;
    Ok(sum(log
        .assignments
        .values()
        .filter(|a| a.edge().is_some())
        .map(|a| lat[&a.packet].clone())))
}

/// The same total accrued step by step: at every step each undelivered
/// fraction of each released packet adds its weight.
pub fn step_accrual_cost<W: Scalar>(log: &RunLog<W>) -> Result<W, MetricsError> {
    // (release, end of activity, weight)
    let mut spans: Vec<(u64, u64, W)> = Vec::new();
    for p in log.instance.packets() {
        match &log
            .assignments
            .get(&p.id)
            .ok_or(MetricsError::Unassigned(p.id))?
            .route
        {
            Route::FixedLink { delay } => spans.push((p.release, p.release + delay, p.weight.clone())),
            Route::Reconfig { chunks, .. } => {
                for c in chunks {
                    let d = *log
                        .deliveries
                        .get(&c.key())
                        .ok_or(MetricsError::Undelivered(c.key()))?;
                    spans.push((p.release, d, c.weight.clone()));
                }
            }
        }
    }
    let start = spans.iter().map(|s| s.0).min().unwrap_or(0);
    let end = spans.iter().map(|s| s.1).max().unwrap_or(0);
    let mut total = W::zero();
    for time in start..end {
        for (r, d, w) in &spans {
            if *r <= time && time < *d {
                total = total + w.clone();
            }
        }
    }
    Ok(total)
}

/// Fractional routing: `x[(p, e, τ)]` of packet `p` starts on edge `e` at
/// step `τ`; `y[p]` goes over the fixed link.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalSchedule<W> {
    pub x: BTreeMap<(PacketId, EdgeRef, u64), W>,
    pub y: BTreeMap<PacketId, W>,
}

impl<W> Default for FractionalSchedule<W> {
    fn default() -> Self {
        FractionalSchedule {
            x: BTreeMap::new(),
            y: BTreeMap::new(),
        }
    }
}

impl<W: Scalar> FractionalSchedule<W> {
    pub fn add_x(&mut self, packet: PacketId, edge: EdgeRef, time: u64, amount: W) {
        let slot = self.x.entry((packet, edge, time)).or_insert_with(W::zero);
        *slot = slot.clone() + amount;
    }

    /// 0/1 embedding of a run with unit-delay edges: each packet's single
    /// chunk becomes `x = 1` at its transmission step.
    pub fn from_unit_run(log: &RunLog<W>) -> Self {
        let mut s = FractionalSchedule::default();
        for a in log.assignments.values() {
            match &a.route {
                Route::FixedLink { .. } => {
                    s.y.insert(a.packet, W::one());
                }
                Route::Reconfig { edge, chunks } => {
                    for c in chunks {
                        s.add_x(a.packet, *edge, log.transmissions[&c.key()], c.size.clone());
                    }
                }
            }
        }
        s
    }
}

/// `Σ w_p x (τ + D(e) - r_p) + Σ w_p y ℓ_p`.
pub fn primal_cost<W: Scalar>(schedule: &FractionalSchedule<W>, instance: &Instance<W>) -> W {
    let topo = &instance.topology;
    let mut total = W::zero();
    for ((p, e, time), x) in &schedule.x {
        let p = instance.packet(*p);
        let path = topo.path_delay(*e).unwrap_or(0) as i64;
        let lat = *time as i64 + path - p.release as i64;
        total = total + p.weight.clone() * x.clone() * W::from_int(lat);
    }
    for (p, y) in &schedule.y {
        let p = instance.packet(*p);
        let link = instance.fixed_link_delay(p).unwrap_or(0) as i64;
        total = total + p.weight.clone() * y.clone() * W::from_int(link);
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrimalViolation<W> {
    Negative { packet: PacketId },
    /// `x` before release or on an edge that does not serve the packet.
    BadX { packet: PacketId, edge: EdgeRef, time: u64 },
    /// `y` for a packet without a fixed link.
    BadY { packet: PacketId },
    /// Coverage `Σ x + y >= 1` fails; `slack = covered - 1 < 0`.
    Coverage { packet: PacketId, slack: W },
    /// Per-step endpoint load `Σ d(e) x <= 1/(2+ε)` fails; `slack = cap - load < 0`.
    TransmitterLoad { node: NodeId, time: u64, slack: W },
    ReceiverLoad { node: NodeId, time: u64, slack: W },
}

/// Checks every constraint of the speed-limited primal relaxation.
pub fn check_primal_feasible<W: Scalar>(
    schedule: &FractionalSchedule<W>,
    instance: &Instance<W>,
    epsilon: &W,
) -> Result<(), Vec<PrimalViolation<W>>> {
    let topo = &instance.topology;
    let mut out = Vec::new();
    let mut covered: BTreeMap<PacketId, W> = BTreeMap::new();
    let mut t_load: BTreeMap<(NodeId, u64), W> = BTreeMap::new();
    let mut r_load: BTreeMap<(NodeId, u64), W> = BTreeMap::new();
    fn add<K: Ord, W: Scalar>(m: &mut BTreeMap<K, W>, k: K, v: W) {
        let slot = m.entry(k).or_insert_with(W::zero);
        *slot = slot.clone() + v;
    }

    for (&(pid, e, time), x) in &schedule.x {
        let p = instance.packet(pid);
        if *x < W::zero() {
            out.push(PrimalViolation::Negative { packet: pid });
        }
        if time < p.release || !instance.candidate_edges(p).contains(&e) {
            out.push(PrimalViolation::BadX {
                packet: pid,
                edge: e,
                time,
            });
            continue;
        }
        add(&mut covered, pid, x.clone());
        let load = x.mul_int(topo.edge_delay(e).unwrap_or(0) as i64);
        add(&mut t_load, (e.transmitter, time), load.clone());
        add(&mut r_load, (e.receiver, time), load);
    }
    for (&pid, y) in &schedule.y {
        if *y < W::zero() {
            out.push(PrimalViolation::Negative { packet: pid });
        }
        if instance.fixed_link_delay(instance.packet(pid)).is_none() {
            out.push(PrimalViolation::BadY { packet: pid });
            continue;
        }
        add(&mut covered, pid, y.clone());
    }
    for p in instance.packets() {
        let c = covered.get(&p.id).cloned().unwrap_or_else(W::zero);
        if c < W::one() {
            out.push(PrimalViolation::Coverage {
                packet: p.id,
                slack: c - W::one(),
            });
        }
    }
    let cap = W::one() / (W::from_int(2) + epsilon.clone());
    for ((node, time), load) in t_load {
        if load > cap {
            out.push(PrimalViolation::TransmitterLoad {
                node,
                time,
                slack: cap.clone() - load,
            });
        }
    }
    for ((node, time), load) in r_load {
        if load > cap {
            out.push(PrimalViolation::ReceiverLoad {
                node,
                time,
                slack: cap.clone() - load,
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Stretches a unit-speed run into a schedule feasible at speed `1/(2+ε)`:
/// with `m = ⌈2+ε⌉`, a chunk sent at step `τ` becomes mass `1/(m d(e))` at
/// steps `mτ .. mτ+m-1`. Fixed sends become `y = 1`.
pub fn dilate_run<W: Scalar>(log: &RunLog<W>, epsilon: &W) -> FractionalSchedule<W> {
    assert!(*epsilon >= W::zero(), "epsilon must be nonnegative");
    let m = (W::from_int(2) + epsilon.clone()).ceil_int();
    let mut s = FractionalSchedule::default();
    for a in log.assignments.values() {
        match &a.route {
            Route::FixedLink { .. } => {
                s.y.insert(a.packet, W::one());
            }
            Route::Reconfig { edge, chunks } => {
                for c in chunks {
                    let Some(&sent) = log.transmissions.get(&c.key()) else {
                        continue;
                    };
                    let piece = c.size.clone() / W::from_int(m);
                    for k in 0..m as u64 {
                        s.add_x(a.packet, *edge, sent * m as u64 + k, piece.clone());
                    }
                }
            }
        }
    }
    s
}
