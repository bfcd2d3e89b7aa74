//! Exhaustive offline optimum for tiny instances with unit edge delays.
//!
//! Every packet is a single chunk, sent whole either over the fixed link or
//! over one candidate edge at some step. The search is a memoized recursion
//! over (unsent set, step): at each step every released packet waits, takes
//! its fixed link, or is sent over a candidate edge whose endpoints are still
//! free in this step. Sending `p` at `τ` over `e` costs
//! `w_p (τ + path_delay(e) - r_p)`; the link costs `w_p ℓ_p` whenever taken.
//! Schedules are non-preemptive, non-migratory and run at unit speed.
//!
//! Two exchange arguments prune the search without losing an optimum. A
//! fixed link costs the same whenever it is taken, so it is only offered at
//! the packet's release step. An edge is busy for a single step, so a packet
//! that will use the reconfigurable layer never waits while one of its
//! minimum-delay edges has both endpoints free: sending it now cannot delay
//! anyone else and is no more expensive.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::dispatcher::{Assignment, Route};
use crate::engine::{delivery_time, ChunkPriority, FixedSend, Matching, RunLog, StepRecord};
use crate::model::{Chunk, EdgeRef, Instance, NodeId, PacketId};
use crate::num::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_packets: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_packets: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle scale exceeded: {0}")]
    ScaleExceeded(String),
    #[error("no feasible schedule within the horizon")]
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum OracleChoice {
    Fixed,
    Edge(EdgeRef),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult<W> {
    pub cost: W,
    /// Routes in send order: `(step, packet, choice)`; fixed sends use the
    /// release step.
    pub sends: Vec<(u64, PacketId, OracleChoice)>,
    /// The schedule as a run log. `alpha` holds each packet's latency.
    pub log: RunLog<W>,
    pub explored_states: u64,
}

type Decision = Vec<(usize, OracleChoice)>;

struct Search<'a, W: Scalar> {
    instance: &'a Instance<W>,
    horizon: u64,
    /// Per packet: candidate edges with their path delays.
    options: Vec<Vec<(EdgeRef, u64)>>,
    link_cost: Vec<Option<W>>,
    min_path: Vec<u64>,
    memo: HashMap<(u32, u64), Option<(W, Decision)>>,
    explored: u64,
}

impl<'a, W: Scalar> Search<'a, W> {
    fn send_cost(&self, p: usize, path: u64, now: u64) -> W {
        let pk = &self.instance.packets()[p];
        pk.weight.mul_int((now + path - pk.release) as i64)
    }

    /// Minimum cost to finish every packet in `left` starting at `now`.
    fn best(&mut self, left: u32, now: u64) -> Option<W> {
        if left == 0 {
            return Some(W::zero());
        }
        if let Some(v) = self.memo.get(&(left, now)) {
            return v.as_ref().map(|(c, _)| c.clone());
        }
        self.explored += 1;
        let packets = self.instance.packets();
        let ready: Vec<usize> = (0..packets.len())
            .filter(|&i| left & (1 << i) != 0 && packets[i].release <= now)
            .collect();
        let result = if ready.is_empty() {
            let next = (0..packets.len())
                .filter(|&i| left & (1 << i) != 0)
                .map(|i| packets[i].release)
                .min()
                .expect("nonempty");
            self.best(left, next).map(|c| (c, Vec::new()))
        } else if now >= self.horizon {
            // Past the horizon only fixed links remain usable.
            let mut cost = W::zero();
            let mut decision = Vec::new();
            let mut ok = true;
            for i in 0..packets.len() {
                if left & (1 << i) == 0 {
                    continue;
                }
                match &self.link_cost[i] {
                    Some(c) => {
                        cost = cost + c.clone();
                        decision.push((i, OracleChoice::Fixed));
                    }
                    None => ok = false,
                }
            }
            ok.then_some((cost, decision))
        } else {
            let mut best: Option<(W, Decision)> = None;
            let mut busy = BTreeSet::new();
            let mut partial = Vec::new();
            self.branch(&ready, 0, left, now, W::zero(), &mut busy, &mut partial, &mut best);
            best
        };
        let out = result.as_ref().map(|(c, _)| c.clone());
        self.memo.insert((left, now), result);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &mut self,
        ready: &[usize],
        k: usize,
        left: u32,
        now: u64,
        acc: W,
        busy: &mut BTreeSet<NodeId>,
        partial: &mut Decision,
        best: &mut Option<(W, Decision)>,
    ) {
        if k == ready.len() {
            let packets = self.instance.packets();
            for &p in ready {
                if partial.iter().any(|&(i, _)| i == p) {
                    continue;
                }
                let dominated = self.options[p].iter().any(|&(e, path)| {
                    path == self.min_path[p]
                        && !busy.contains(&e.transmitter)
                        && !busy.contains(&e.receiver)
                });
                // Without edges the link had to be taken at release.
                let stranded = self.options[p].is_empty() && packets[p].release <= now;
                if dominated || stranded {
                    return;
                }
            }
            let sent: u32 = partial.iter().map(|&(i, _)| 1u32 << i).sum();
            let Some(rest) = self.best(left & !sent, now + 1) else {
                return;
            };
            let total = acc + rest;
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                *best = Some((total, partial.clone()));
            }
            return;
        }
        let p = ready[k];
        // wait
        self.branch(ready, k + 1, left, now, acc.clone(), busy, partial, best);
        let released_now = self.instance.packets()[p].release == now;
        if let Some(c) = self.link_cost[p].clone().filter(|_| released_now) {
            partial.push((p, OracleChoice::Fixed));
            self.branch(ready, k + 1, left, now, acc.clone() + c, busy, partial, best);
            partial.pop();
        }
        for (e, path) in self.options[p].clone() {
            if busy.contains(&e.transmitter) || busy.contains(&e.receiver) {
                continue;
            }
            busy.insert(e.transmitter);
            busy.insert(e.receiver);
            partial.push((p, OracleChoice::Edge(e)));
            let c = self.send_cost(p, path, now);
            self.branch(ready, k + 1, left, now, acc.clone() + c, busy, partial, best);
            partial.pop();
            busy.remove(&e.transmitter);
            busy.remove(&e.receiver);
        }
    }
}

pub fn brute_force_opt<W: Scalar>(
    instance: &Instance<W>,
    limits: OracleLimits,
) -> Result<OracleResult<W>, OracleError> {
    let n = instance.packets().len();
    if n > limits.max_packets || n > 31 {
        return Err(OracleError::ScaleExceeded(format!(
            "{n} packets, limit {}",
            limits.max_packets
        )));
    }
    let topo = &instance.topology;
    if let Some(e) = topo.edges().iter().find(|e| e.delay != 1) {
        return Err(OracleError::ScaleExceeded(format!(
            "edge {}-{} has delay {}, only unit delays are supported",
            topo.name(e.transmitter),
            topo.name(e.receiver),
            e.delay
        )));
    }
    let options: Vec<Vec<(EdgeRef, u64)>> = instance
        .packets()
        .iter()
        .map(|p| {
            instance
                .candidate_edges(p)
                .into_iter()
                .map(|e| (e, topo.path_delay(e).expect("candidate edge")))
                .collect()
        })
        .collect();
    let link_cost = instance
        .packets()
        .iter()
        .map(|p| instance.fixed_link_delay(p).map(|l| p.weight.mul_int(l as i64)))
        .collect();
    let min_path = options
        .iter()
        .map(|o| o.iter().map(|&(_, d)| d).min().unwrap_or(0))
        .collect();
    let mut search = Search {
        instance,
        horizon: instance.horizon(),
        options,
        link_cost,
        min_path,
        memo: HashMap::new(),
        explored: 0,
    };
    let all = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let start = instance.packets().iter().map(|p| p.release).min().unwrap_or(0);
    let cost = search.best(all, start).ok_or(OracleError::Infeasible)?;

    // Replay the stored decisions.
    let mut sends = Vec::new();
    let (mut left, mut now) = (all, start);
    while left != 0 {
        let (_, decision) = search.memo[&(left, now)].clone().expect("feasible path");
        for &(i, choice) in &decision {
            let at = match choice {
                OracleChoice::Fixed => instance.packets()[i].release,
                OracleChoice::Edge(_) => now,
            };
            sends.push((at, PacketId(i), choice));
            left &= !(1 << i);
        }
        if decision.is_empty() {
            // Idle jump to the next release.
            let next = instance
                .packets()
                .iter()
                .filter(|p| left & (1 << p.id.0) != 0)
                .map(|p| p.release)
                .min()
                .expect("nonempty");
            if next > now {
                now = next;
                continue;
            }
        }
        now += 1;
    }
    sends.sort();
    let log = to_log(instance, &sends);
    Ok(OracleResult {
        cost,
        sends,
        log,
        explored_states: search.explored,
    })
}

fn to_log<W: Scalar>(instance: &Instance<W>, sends: &[(u64, PacketId, OracleChoice)]) -> RunLog<W> {
    let topo = &instance.topology;
    let mut log = RunLog::new(instance.clone(), ChunkPriority::WeightFirst);
    for &(at, id, choice) in sends {
        let p = instance.packet(id);
        match choice {
            OracleChoice::Fixed => {
                let delay = instance.fixed_link_delay(p).expect("link exists");
                let latency = p.weight.mul_int(delay as i64);
                log.fixed_sends.push(FixedSend {
                    packet: id,
                    departure: p.release,
                    delivery: p.release + delay,
                    latency: latency.clone(),
                });
                log.assignments.insert(
                    id,
                    Assignment {
                        packet: id,
                        route: Route::FixedLink { delay },
                        alpha: latency,
                    },
                );
            }
            OracleChoice::Edge(e) => {
                let chunks = Chunk::split(p, e, 1);
                let delivered = delivery_time(topo, e, at);
                for c in &chunks {
                    log.transmissions.insert(c.key(), at);
                    log.deliveries.insert(c.key(), delivered);
                }
                match log.steps.last_mut() {
                    Some(s) if s.time == at => s.matched.entries.extend(chunks.iter().cloned()),
                    _ => log.steps.push(StepRecord {
                        time: at,
                        matched: Matching {
                            entries: chunks.clone(),
                        },
                        blocked: Vec::new(),
                    }),
                }
                log.assignments.insert(
                    id,
                    Assignment {
                        packet: id,
                        route: Route::Reconfig { edge: e, chunks },
                        alpha: p.weight.mul_int((delivered - p.release) as i64),
                    },
                );
            }
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::metrics::run_cost;
    use crate::model::{Layer, Topology};
    use crate::num::Rational;

    fn q(n: i64) -> Rational {
        Rational::from_int(n)
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
            inst.add_packet(format!("p{i}"), s, d, 1, q(w));
        }
        inst
    }

    #[test]
    fn fig1_optimum_is_seven() {
        let res = brute_force_opt(&fixtures::fig1(), OracleLimits::default()).unwrap();
        assert_eq!(res.cost, q(7));
        assert_eq!(run_cost(&res.log).unwrap(), q(7));
        assert!(res.explored_states > 0);
    }

    #[test]
    fn single_packet() {
        let res = brute_force_opt(&same_edge(&[3]), OracleLimits::default()).unwrap();
        assert_eq!(res.cost, q(3));
        assert_eq!(res.sends.len(), 1);
    }

    #[test]
    fn heavy_first_on_shared_edge() {
        let res = brute_force_opt(&same_edge(&[1, 2]), OracleLimits::default()).unwrap();
        assert_eq!(res.cost, q(4));
        assert_eq!(res.sends[0].1, PacketId(1));
    }

    #[test]
    fn empty_instance() {
        let res = brute_force_opt(&Instance::<Rational>::new(Topology::new()), OracleLimits::default())
            .unwrap();
        assert_eq!(res.cost, q(0));
    }

    #[test]
    fn scale_limits() {
        let err = brute_force_opt(&same_edge(&[1; 9]), OracleLimits::default()).unwrap_err();
        assert!(err.to_string().contains("oracle scale exceeded"));
        let mut inst = same_edge(&[1]);
        let (s, d) = (inst.packets()[0].source, inst.packets()[0].dest);
        let mut t = inst.topology.clone();
        let tx = t.add_node("t2", Layer::Transmitter);
        let rx = t.add_node("r2", Layer::Receiver);
        t.attach(tx, s, 0);
        t.attach(rx, d, 0);
        t.add_edge(tx, rx, 2);
        inst.topology = t;
        let err = brute_force_opt(&inst, OracleLimits::default()).unwrap_err();
        assert!(err.to_string().contains("oracle scale exceeded"));
    }

    type Options = Vec<Vec<(Option<(EdgeRef, u64)>, Rational)>>;

    /// Every (step, route) per packet, checked for endpoint conflicts.
    fn enumerate_all(inst: &Instance<Rational>) -> Rational {
        let topo = &inst.topology;
        let horizon = inst.horizon();
        let per_packet: Options = inst
            .packets()
            .iter()
            .map(|p| {
                let mut v = Vec::new();
                if let Some(l) = inst.fixed_link_delay(p) {
                    v.push((None, p.weight.mul_int(l as i64)));
                }
                for e in inst.candidate_edges(p) {
                    for at in p.release..horizon {
                        let lat = delivery_time(topo, e, at) - p.release;
                        v.push((Some((e, at)), p.weight.mul_int(lat as i64)));
                    }
                }
                v
            })
            .collect();
        fn go(
            k: usize,
            per: &Options,
            used: &mut Vec<(NodeId, u64)>,
            acc: Rational,
            best: &mut Option<Rational>,
        ) {
            if k == per.len() {
                if best.as_ref().is_none_or(|b| acc < *b) {
                    *best = Some(acc);
                }
                return;
            }
            for (choice, cost) in &per[k] {
                match choice {
                    None => go(k + 1, per, used, acc.clone() + cost.clone(), best),
                    Some((e, at)) => {
                        let (a, b) = ((e.transmitter, *at), (e.receiver, *at));
                        if used.contains(&a) || used.contains(&b) {
                            continue;
                        }
                        used.push(a);
                        used.push(b);
                        go(k + 1, per, used, acc.clone() + cost.clone(), best);
                        used.truncate(used.len() - 2);
                    }
                }
            }
        }
        let mut best = None;
        go(0, &per_packet, &mut Vec::new(), q(0), &mut best);
        best.unwrap_or_else(|| q(0))
    }

    #[test]
    fn pruned_search_matches_plain_enumeration() {
        use crate::workload::{generate, tiny_config};
        for seed in 0..100 {
            let mut c = tiny_config(seed, 3);
            c.release_span = c.release_span.min(3);
            let inst = generate(&c).unwrap();
            let res = brute_force_opt(&inst, OracleLimits::default()).unwrap();
            assert_eq!(res.cost, enumerate_all(&inst), "seed {seed}");
        }
        assert_eq!(enumerate_all(&fixtures::fig1()), q(7));
    }

    #[test]
    fn deterministic() {
        let a = brute_force_opt(&fixtures::fig1(), OracleLimits::default()).unwrap();
        let b = brute_force_opt(&fixtures::fig1(), OracleLimits::default()).unwrap();
        assert_eq!(a, b);
    }
}
