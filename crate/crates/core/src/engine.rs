//! Discrete-time engine: dispatch arrivals, transmit a greedy stable matching
//! each step, and log every transmission and blocking.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::dispatcher::{
    Assignment, DispatchError, Dispatcher, ImpactDispatcher, PendingView, Route,
};
use crate::model::{Chunk, ChunkKey, EdgeRef, Instance, InstanceViolation, NodeId, PacketId, Topology};
use crate::num::Scalar;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid instance: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<InstanceViolation>),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("chunk {0} is assigned to an edge that is not in the topology")]
    UnassignedEdge(ChunkKey),
    #[error("run reached step {step}, past the horizon {horizon}")]
    HorizonExceeded { step: u64, horizon: u64 },
}

/// Total order used to build each step's matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChunkPriority {
    /// Weight descending, then arrival, then chunk index.
    #[default]
    WeightFirst,
    /// Arrival (release, input position) first, then weight descending, then chunk index.
    ArrivalFirst,
}

impl ChunkPriority {
    /// `Less` when `a` is served before `b`.
    pub fn compare<W: Scalar>(self, a: &Chunk<W>, b: &Chunk<W>) -> Ordering {
        let by_weight = || b.weight.partial_cmp(&a.weight).unwrap_or(Ordering::Equal);
        let by_arrival = || a.arrival().cmp(&b.arrival());
        match self {
            ChunkPriority::WeightFirst => by_weight().then_with(by_arrival),
            ChunkPriority::ArrivalFirst => by_arrival().then_with(by_weight),
        }
        .then(a.index.cmp(&b.index))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Matching<W> {
    pub entries: Vec<Chunk<W>>,
}

impl<W> Default for Matching<W> {
    fn default() -> Self {
        Matching {
            entries: Vec::new(),
        }
    }
}

impl<W> Matching<W> {
    pub fn edges(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        self.entries.iter().map(|c| c.edge)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// `blocker` was transmitted while `blocked` waited on an adjacent edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Blocking {
    pub blocked: ChunkKey,
    pub blocker: ChunkKey,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<W> {
    pub time: u64,
    pub matched: Matching<W>,
    pub blocked: Vec<Blocking>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedSend<W> {
    pub packet: PacketId,
    pub departure: u64,
    pub delivery: u64,
    /// `w_p * link_delay`
    pub latency: W,
}

/// Complete transmission history of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLog<W> {
    pub instance: Instance<W>,
    pub priority: ChunkPriority,
    /// Only steps with pending work are recorded.
    pub steps: Vec<StepRecord<W>>,
    pub fixed_sends: Vec<FixedSend<W>>,
    /// Step in which each reconfigurable chunk was transmitted.
    pub transmissions: BTreeMap<ChunkKey, u64>,
    /// `transmission + 1 + attach delays` for each reconfigurable chunk.
    pub deliveries: BTreeMap<ChunkKey, u64>,
    pub assignments: BTreeMap<PacketId, Assignment<W>>,
}

impl<W: Scalar> RunLog<W> {
    pub fn new(instance: Instance<W>, priority: ChunkPriority) -> Self {
        RunLog {
            instance,
            priority,
            steps: Vec::new(),
            fixed_sends: Vec::new(),
            transmissions: BTreeMap::new(),
            deliveries: BTreeMap::new(),
            assignments: BTreeMap::new(),
        }
    }

    /// Every reconfigurable chunk of every assignment.
    pub fn chunks(&self) -> impl Iterator<Item = &Chunk<W>> + '_ {
        self.assignments.values().flat_map(|a| match &a.route {
            Route::Reconfig { chunks, .. } => chunks.as_slice(),
            Route::FixedLink { .. } => &[],
        })
    }

    pub fn last_step(&self) -> Option<u64> {
        self.steps.last().map(|s| s.time)
    }

    /// Time the packet is fully delivered, if it is.
    pub fn completion(&self, packet: PacketId) -> Option<u64> {
        match &self.assignments.get(&packet)?.route {
            Route::FixedLink { delay } => Some(self.instance.packet(packet).release + delay),
            Route::Reconfig { chunks, .. } => chunks
                .iter()
                .map(|c| self.deliveries.get(&c.key()).copied())
                .try_fold(0, |acc, d| d.map(|d| acc.max(d))),
        }
    }
}

/// Delivery time of a chunk transmitted at `step` over `edge`.
pub fn delivery_time(topology: &Topology, edge: EdgeRef, step: u64) -> u64 {
    step + 1 + topology.attach_delay(edge.transmitter) + topology.attach_delay(edge.receiver)
}

/// Greedy stable matching: walk chunks in priority order and admit each one
/// whose transmitter and receiver are both free. A rejected chunk records the
/// transmitter-side occupant as its blocker when that side is busy, otherwise
/// the receiver-side occupant.
pub fn build_stable_matching<W: Scalar>(
    pending: &[Chunk<W>],
    topology: &Topology,
    priority: ChunkPriority,
) -> Result<(Matching<W>, Vec<Blocking>), EngineError> {
    let mut order: Vec<&Chunk<W>> = pending.iter().collect();
    for c in &order {
        if topology.edge_delay(c.edge).is_none() {
            return Err(EngineError::UnassignedEdge(c.key()));
        }
    }
    order.sort_by(|a, b| priority.compare(a, b));

    let mut at_t: BTreeMap<NodeId, ChunkKey> = BTreeMap::new();
    let mut at_r: BTreeMap<NodeId, ChunkKey> = BTreeMap::new();
    let mut matching = Matching::default();
    let mut blocked = Vec::new();
    for c in order {
        let blocker = at_t
            .get(&c.edge.transmitter)
            .or_else(|| at_r.get(&c.edge.receiver));
        match blocker {
            Some(&b) => blocked.push(Blocking {
                blocked: c.key(),
                blocker: b,
            }),
            None => {
                at_t.insert(c.edge.transmitter, c.key());
                at_r.insert(c.edge.receiver, c.key());
                matching.entries.push(c.clone());
            }
        }
    }
    Ok((matching, blocked))
}

/// Engine state between steps.
pub struct Simulator<'a, W: Scalar, D> {
    instance: &'a Instance<W>,
    dispatcher: D,
    order: Vec<PacketId>,
    next: usize,
    pending: Vec<Chunk<W>>,
    log: RunLog<W>,
}

impl<'a, W: Scalar, D: Dispatcher<W>> Simulator<'a, W, D> {
    pub fn new(instance: &'a Instance<W>, dispatcher: D, priority: ChunkPriority) -> Self {
        Simulator {
            instance,
            dispatcher,
            order: instance.arrival_order(),
            next: 0,
            pending: Vec::new(),
            log: RunLog::new(instance.clone(), priority),
        }
    }

    pub fn pending(&self) -> &[Chunk<W>] {
        &self.pending
    }

    pub fn log(&self) -> &RunLog<W> {
        &self.log
    }

    fn next_release(&self) -> Option<u64> {
        self.order
            .get(self.next)
            .map(|&id| self.instance.packet(id).release)
    }

    /// Dispatches, one by one, every packet released at or before `now`.
    pub fn dispatch_arrivals(&mut self, now: u64) -> Result<(), EngineError> {
        while let Some(&id) = self.order.get(self.next) {
            let packet = self.instance.packet(id);
            if packet.release > now {
                break;
            }
            let a = self.dispatcher.dispatch(
                &self.instance.topology,
                packet,
                PendingView::new(&self.pending),
            )?;
            match &a.route {
                Route::FixedLink { delay } => self.log.fixed_sends.push(FixedSend {
                    packet: id,
                    departure: packet.release,
                    delivery: packet.release + delay,
                    latency: a.alpha.clone(),
                }),
                Route::Reconfig { chunks, .. } => self.pending.extend(chunks.iter().cloned()),
            }
            self.log.assignments.insert(id, a);
            self.next += 1;
        }
        Ok(())
    }

    /// Dispatches arrivals up to `now`, then transmits one stable matching.
    pub fn step(&mut self, now: u64) -> Result<(), EngineError> {
        self.dispatch_arrivals(now)?;
        if self.pending.is_empty() {
            return Ok(());
        }
        let topology = &self.instance.topology;
        let (matched, blocked) = build_stable_matching(&self.pending, topology, self.log.priority)?;
        for c in &matched.entries {
            self.log.transmissions.insert(c.key(), now);
            self.log
                .deliveries
                .insert(c.key(), delivery_time(topology, c.edge, now));
        }
        let sent = &self.log.transmissions;
        self.pending.retain(|c| !sent.contains_key(&c.key()));
        self.log.steps.push(StepRecord {
            time: now,
            matched,
            blocked,
        });
        Ok(())
    }

    pub fn run(mut self) -> Result<RunLog<W>, EngineError> {
        let Some(mut now) = self.next_release() else {
            return Ok(self.log);
        };
        loop {
            self.dispatch_arrivals(now)?;
            if self.pending.is_empty() {
                match self.next_release() {
                    Some(r) => {
                        now = r;
                        continue;
                    }
                    None => break,
                }
            }
            self.step(now)?;
            now += 1;
        }
        let horizon = self.instance.horizon();
        if let Some(step) = self.log.last_step() {
            if step >= horizon {
                return Err(EngineError::HorizonExceeded { step, horizon });
            }
        }
        Ok(self.log)
    }
}

/// Runs an arbitrary dispatcher and chunk order on a validated instance.
pub fn run_with<W: Scalar, D: Dispatcher<W>>(
    instance: &Instance<W>,
    dispatcher: D,
    priority: ChunkPriority,
) -> Result<RunLog<W>, EngineError> {
    instance.validate().map_err(EngineError::Invalid)?;
    Simulator::new(instance, dispatcher, priority).run()
}

/// Runs the impact-minimizing dispatcher with weight-first stable matchings.
pub fn run<W: Scalar>(instance: &Instance<W>) -> Result<RunLog<W>, EngineError> {
    run_with(instance, ImpactDispatcher, ChunkPriority::WeightFirst)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StabilityViolation {
    EndpointConflict { time: u64, first: ChunkKey, second: ChunkKey },
    MatchedBeforeRelease { time: u64, chunk: ChunkKey },
    /// Waiting with no adjacent transmitted chunk of at least equal priority.
    Unblocked { time: u64, chunk: ChunkKey },
    NotTransmitted(ChunkKey),
    InconsistentTransmission(ChunkKey),
}

/// Re-derives the stability property from the transmission history alone:
/// every step is a matching, and every waiting chunk has an adjacent
/// transmitted chunk that precedes it in the log's chunk order.
pub fn verify_stability<W: Scalar>(log: &RunLog<W>) -> Result<(), Vec<StabilityViolation>> {
    let mut out = Vec::new();
    let by_time: BTreeMap<u64, &StepRecord<W>> = log.steps.iter().map(|s| (s.time, s)).collect();
    for s in &log.steps {
        for (i, a) in s.matched.entries.iter().enumerate() {
            if a.release > s.time {
                out.push(StabilityViolation::MatchedBeforeRelease {
                    time: s.time,
                    chunk: a.key(),
                });
            }
            for b in &s.matched.entries[i + 1..] {
                if a.edge.is_adjacent(&b.edge) {
                    out.push(StabilityViolation::EndpointConflict {
                        time: s.time,
                        first: a.key(),
                        second: b.key(),
                    });
                }
            }
        }
    }
    for c in log.chunks() {
        let Some(&sent) = log.transmissions.get(&c.key()) else {
            out.push(StabilityViolation::NotTransmitted(c.key()));
            continue;
        };
        let in_step = by_time
            .get(&sent)
            .is_some_and(|s| s.matched.entries.iter().any(|m| m.key() == c.key()));
        if !in_step {
            out.push(StabilityViolation::InconsistentTransmission(c.key()));
        }
        for time in c.release..sent {
            let covered = by_time.get(&time).is_some_and(|s| {
                s.matched.entries.iter().any(|m| {
                    m.edge.is_adjacent(&c.edge) && log.priority.compare(m, c) != Ordering::Greater
                })
            });
            if !covered {
                out.push(StabilityViolation::Unblocked {
                    time,
                    chunk: c.key(),
                });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatcher::{ForcedDispatcher, ForcedRoute};
    use crate::fixtures;
    use crate::model::Layer;
    use crate::num::Rational;

    fn q(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn key(p: usize) -> ChunkKey {
        ChunkKey {
            packet: PacketId(p),
            index: 1,
        }
    }

    fn pending_all(inst: &Instance<Rational>) -> Vec<Chunk<Rational>> {
        inst.packets()
            .iter()
            .map(|p| {
                let e = inst.candidate_edges(p)[0];
                Chunk::split(p, e, 1).remove(0)
            })
            .collect()
    }

    fn matched_packets<W>(m: &Matching<W>) -> Vec<usize> {
        let mut v: Vec<usize> = m.entries.iter().map(|c| c.packet.0).collect();
        v.sort();
        v
    }

    #[test]
    fn fig2_matchings() {
        let pi = fixtures::fig2_pi();
        let (m, b) =
            build_stable_matching(&pending_all(&pi), &pi.topology, ChunkPriority::WeightFirst)
                .unwrap();
        assert_eq!(matched_packets(&m), vec![0, 2]);
        assert_eq!(b, vec![Blocking { blocked: key(1), blocker: key(2) }]);

        let pi2 = fixtures::fig2_pi_prime();
        let (m, b) =
            build_stable_matching(&pending_all(&pi2), &pi2.topology, ChunkPriority::WeightFirst)
                .unwrap();
        assert_eq!(matched_packets(&m), vec![1, 3]);
        assert_eq!(
            b,
            vec![
                Blocking { blocked: key(2), blocker: key(3) },
                Blocking { blocked: key(0), blocker: key(1) },
            ]
        );
    }

    #[test]
    fn empty_pending_gives_empty_matching() {
        let inst = fixtures::fig1();
        let (m, b) =
            build_stable_matching::<Rational>(&[], &inst.topology, ChunkPriority::WeightFirst)
                .unwrap();
        assert!(m.is_empty() && b.is_empty());
    }

    #[test]
    fn chunk_on_unknown_edge_is_rejected() {
        let inst = fixtures::fig1();
        let mut c = pending_all(&inst).remove(0);
        c.edge = EdgeRef::new(NodeId(0), NodeId(1));
        assert_eq!(
            build_stable_matching(&[c], &inst.topology, ChunkPriority::WeightFirst),
            Err(EngineError::UnassignedEdge(key(0)))
        );
    }

    fn fig1_table_routes(inst: &Instance<Rational>) -> ForcedDispatcher {
        let t = &inst.topology;
        let e = |a: &str, b: &str| {
            ForcedRoute::Edge(EdgeRef::new(t.node_id(a).unwrap(), t.node_id(b).unwrap()))
        };
        ForcedDispatcher::new([
            (PacketId(0), e("t1", "r1")),
            (PacketId(1), e("t1", "r2")),
            (PacketId(2), e("t3", "r3")),
            (PacketId(3), e("t3", "r3")),
            (PacketId(4), ForcedRoute::Fixed),
        ])
    }

    #[test]
    fn fig1_table_routing_first_step() {
        let inst = fixtures::fig1();
        let mut sim = Simulator::new(&inst, fig1_table_routes(&inst), ChunkPriority::WeightFirst);
        sim.step(1).unwrap();
        let s = &sim.log().steps[0];
        assert_eq!(matched_packets(&s.matched), vec![0, 2]);
        assert_eq!(s.blocked, vec![Blocking { blocked: key(1), blocker: key(0) }]);
        assert_eq!(sim.pending().len(), 1);

        sim.step(2).unwrap();
        let s = &sim.log().steps[1];
        assert_eq!(matched_packets(&s.matched), vec![1, 3]);
        assert_eq!(sim.log().fixed_sends.len(), 1);
        assert!(sim.pending().is_empty());
    }

    fn one_edge(weights: &[(u64, i64)], d: u64) -> Instance<Rational> {
        let mut t = Topology::new();
        let s = t.add_node("s", Layer::Source);
        let dst = t.add_node("d", Layer::Destination);
        let tx = t.add_node("t", Layer::Transmitter);
        let rx = t.add_node("r", Layer::Receiver);
        t.attach(tx, s, 0);
        t.attach(rx, dst, 0);
        t.add_edge(tx, rx, d);
        let mut inst = Instance::new(t);
        for (i, &(r, w)) in weights.iter().enumerate() {
            inst.add_packet(format!("p{i}"), s, dst, r, q(w));
        }
        inst
    }

    #[test]
    fn siblings_block_each_other_in_index_order() {
        let inst = one_edge(&[(1, 4)], 2);
        let log = run(&inst).unwrap();
        assert_eq!(log.steps.len(), 2);
        let first = ChunkKey { packet: PacketId(0), index: 1 };
        let second = ChunkKey { packet: PacketId(0), index: 2 };
        assert_eq!(log.steps[0].matched.entries[0].key(), first);
        assert_eq!(log.steps[0].blocked, vec![Blocking { blocked: second, blocker: first }]);
        assert_eq!(log.deliveries[&first], 2);
        assert_eq!(log.deliveries[&second], 3);
    }

    #[test]
    fn lone_packet_is_delivered_next_step() {
        let inst = one_edge(&[(3, 5)], 1);
        let log = run(&inst).unwrap();
        assert_eq!(log.steps.len(), 1);
        assert_eq!(log.steps[0].time, 3);
        assert_eq!(log.completion(PacketId(0)), Some(4));
    }

    #[test]
    fn forced_serialization() {
        let n = 6;
        let inst = one_edge(&vec![(1, 1); n], 1);
        let log = run(&inst).unwrap();
        let mut times: Vec<u64> = (0..n).map(|i| log.completion(PacketId(i)).unwrap()).collect();
        times.sort();
        assert_eq!(times, (2..=n as u64 + 1).collect::<Vec<_>>());
        assert!(log.last_step().unwrap() < inst.horizon());
        assert_eq!(verify_stability(&log), Ok(()));
    }

    #[test]
    fn idle_gaps_are_skipped() {
        let inst = one_edge(&[(1, 1), (10, 1)], 1);
        let log = run(&inst).unwrap();
        let times: Vec<u64> = log.steps.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![1, 10]);
    }

    #[test]
    fn undeliverable_packet_names_the_packet() {
        let mut t = Topology::new();
        let s = t.add_node("s", Layer::Source);
        let d = t.add_node("d", Layer::Destination);
        let mut inst = Instance::new(t);
        inst.add_packet("lost", s, d, 1, q(1));
        let e = run(&inst).unwrap_err();
        assert!(e.to_string().contains("`lost`"));
    }

    #[test]
    fn stability_flags_a_swapped_schedule() {
        let inst = one_edge(&[(1, 2), (1, 1)], 1);
        let mut log = run(&inst).unwrap();
        assert_eq!(verify_stability(&log), Ok(()));
        // Serve the light chunk first while the heavy one waits.
        let (a, b) = (log.steps[0].matched.clone(), log.steps[1].matched.clone());
        log.steps[0].matched = b;
        log.steps[1].matched = a;
        log.transmissions.insert(key(0), 2);
        log.transmissions.insert(key(1), 1);
        let v = verify_stability(&log).unwrap_err();
        assert!(v.contains(&StabilityViolation::Unblocked { time: 1, chunk: key(0) }));
    }

    #[test]
    fn fig2_prime_run_is_stable() {
        let inst = fixtures::fig2_pi_prime();
        let log = run(&inst).unwrap();
        assert_eq!(matched_packets(&log.steps[0].matched), vec![1, 3]);
        assert_eq!(verify_stability(&log), Ok(()));
    }

    #[test]
    fn works_with_float_weights() {
        let inst = fixtures::fig2_pi_prime().map_weights(|w| w.to_f64());
        let log = run(&inst).unwrap();
        assert_eq!(matched_packets(&log.steps[0].matched), vec![1, 3]);
    }
}
