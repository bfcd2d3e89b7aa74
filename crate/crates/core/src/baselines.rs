//! Comparison policies run on the same engine.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dispatcher::{
    settle_route, Assignment, DispatchError, Dispatcher, ImpactDispatcher, PendingView,
};
use crate::engine::{run_with, ChunkPriority, EngineError, RunLog};
use crate::model::{Instance, Packet, Topology};
use crate::num::{sum, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselinePolicy {
    /// Impact dispatch with weight-first matchings.
    Alg,
    /// Impact dispatch; chunks served in arrival order.
    FifoPriority,
    /// Uniformly random candidate edge.
    RandomDispatch { seed: u64 },
    /// Candidate edge with the least pending adjacent weight.
    LeastLoaded,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unknown policy `{0}` (expected alg, fifo-priority, random-dispatch or least-loaded)")]
pub struct UnknownPolicy(pub String);

impl BaselinePolicy {
    pub const NAMES: [&'static str; 4] = ["alg", "fifo-priority", "random-dispatch", "least-loaded"];

    /// `seed` is only used by `random-dispatch`.
    pub fn from_name(name: &str, seed: u64) -> Result<Self, UnknownPolicy> {
        match name {
            "alg" => Ok(BaselinePolicy::Alg),
            "fifo-priority" => Ok(BaselinePolicy::FifoPriority),
            "random-dispatch" => Ok(BaselinePolicy::RandomDispatch { seed }),
            "least-loaded" | "least-loaded-dispatch" => Ok(BaselinePolicy::LeastLoaded),
            other => Err(UnknownPolicy(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselinePolicy::Alg => "alg",
            BaselinePolicy::FifoPriority => "fifo-priority",
            BaselinePolicy::RandomDispatch { .. } => "random-dispatch",
            BaselinePolicy::LeastLoaded => "least-loaded",
        }
    }
}

impl fmt::Display for BaselinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct RandomDispatcher {
    rng: ChaCha8Rng,
}

impl RandomDispatcher {
    pub fn new(seed: u64) -> Self {
        RandomDispatcher {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<W: Scalar> Dispatcher<W> for RandomDispatcher {
    fn dispatch(
        &mut self,
        topology: &Topology,
        packet: &Packet<W>,
        view: PendingView<'_, W>,
    ) -> Result<Assignment<W>, DispatchError> {
        let edges = topology.candidate_edges(packet.source, packet.dest);
        let pick = (!edges.is_empty()).then(|| edges[self.rng.random_range(0..edges.len())]);
        settle_route(topology, packet, pick, view)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LeastLoadedDispatcher;

impl<W: Scalar> Dispatcher<W> for LeastLoadedDispatcher {
    fn dispatch(
        &mut self,
        topology: &Topology,
        packet: &Packet<W>,
        view: PendingView<'_, W>,
    ) -> Result<Assignment<W>, DispatchError> {
        let mut best: Option<(W, _)> = None;
        for e in topology.candidate_edges(packet.source, packet.dest) {
            let load = sum(
                view.chunks()
                    .iter()
                    .filter(|c| c.edge.is_adjacent(&e))
                    .map(|c| c.weight.clone()),
            );
            if best.as_ref().is_none_or(|(b, _)| load < *b) {
                best = Some((load, e));
            }
        }
        settle_route(topology, packet, best.map(|(_, e)| e), view)
    }
}

/// All policies keep the fixed-link rule of the main dispatcher: the link is
/// taken when `w_p * link_delay` does not exceed the chosen edge's impact.
pub fn baseline_run<W: Scalar>(
    instance: &Instance<W>,
    policy: BaselinePolicy,
) -> Result<RunLog<W>, EngineError> {
    match policy {
        BaselinePolicy::Alg => run_with(instance, ImpactDispatcher, ChunkPriority::WeightFirst),
        BaselinePolicy::FifoPriority => {
            run_with(instance, ImpactDispatcher, ChunkPriority::ArrivalFirst)
        }
        BaselinePolicy::RandomDispatch { seed } => run_with(
            instance,
            RandomDispatcher::new(seed),
            ChunkPriority::WeightFirst,
        ),
        BaselinePolicy::LeastLoaded => {
            run_with(instance, LeastLoadedDispatcher, ChunkPriority::WeightFirst)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::fixtures;
    use crate::metrics::run_cost;
    use crate::model::{Layer, PacketId};
    use crate::num::Rational;

    fn all() -> [BaselinePolicy; 4] {
        [
            BaselinePolicy::Alg,
            BaselinePolicy::FifoPriority,
            BaselinePolicy::RandomDispatch { seed: 3 },
            BaselinePolicy::LeastLoaded,
        ]
    }

    fn same_edge(weights: &[i64]) -> Instance<Rational> {
        let mut t = Topology::new();
        let s = t.add_node("s", Layer::Source);
        let d = t.add_node("d", Layer::Destination);
        let tx = t.add_node("t", Layer::Transmitter);
        let rx = t.add_node("r", Layer::Receiver);
        t.attach(tx, s, 0);
        t.attach(rx, d, 0);
        t.add_edge(tx, rx, 1);
        let mut inst = Instance::new(t);
        for (i, &w) in weights.iter().enumerate() {
            inst.add_packet(format!("p{i}"), s, d, 1, Rational::from_int(w));
        }
        inst
    }

    #[test]
    fn names_round_trip() {
        for p in all() {
            assert_eq!(BaselinePolicy::from_name(p.name(), 3), Ok(p));
        }
        assert!(BaselinePolicy::from_name("bogus", 0).is_err());
    }

    #[test]
    fn single_packet_identical_to_alg() {
        let inst = same_edge(&[5]);
        let alg = run(&inst).unwrap();
        for p in all() {
            let log = baseline_run(&inst, p).unwrap();
            assert_eq!(log.transmissions, alg.transmissions, "{p}");
            assert_eq!(run_cost(&log), run_cost(&alg));
        }
    }

    #[test]
    fn fifo_serves_light_first() {
        let inst = same_edge(&[1, 2]);
        let fifo = baseline_run(&inst, BaselinePolicy::FifoPriority).unwrap();
        assert_eq!(run_cost(&fifo).unwrap(), Rational::from_int(5));
        let alg = run(&inst).unwrap();
        assert_eq!(run_cost(&alg).unwrap(), Rational::from_int(4));
    }

    #[test]
    fn random_dispatch_reproducible() {
        let inst = fixtures::fig1();
        let a = baseline_run(&inst, BaselinePolicy::RandomDispatch { seed: 11 }).unwrap();
        let b = baseline_run(&inst, BaselinePolicy::RandomDispatch { seed: 11 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn least_loaded_avoids_busy_transmitter() {
        let inst = fixtures::fig1();
        let log = baseline_run(&inst, BaselinePolicy::LeastLoaded).unwrap();
        // p2 (s1 -> d2) avoids t1, already holding p1.
        let t = &inst.topology;
        let e = log.assignments[&PacketId(1)].edge().unwrap();
        assert_eq!(t.name(e.transmitter), "t2");
    }
}
