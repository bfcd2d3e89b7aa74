//! Arrival-time routing: worst-case impact of each candidate edge, compared
//! with the direct fixed link.
//!
//! For a packet `p` and a candidate edge `e = (t, r)` with delay `d`, the
//! pending chunks of earlier packets that sit on edges sharing `t` or `r`
//! are split into the *heavier* set (weight at least `w_p / d`, so they may
//! delay `p`) and the *lighter* set (they may be delayed by all `d` chunks of
//! `p`). The worst-case impact is
//!
//! ```text
//! w_p * (a_t + (d + 1) / 2 + a_r) + w_p * |heavier| + d * W(lighter)
//! ```
//!
//! where `a_t`, `a_r` are the attach delays. The packet takes the fixed link
//! when `w_p * link_delay` is at most the best edge impact.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Chunk, ChunkKey, EdgeRef, Packet, PacketId, Topology};
use crate::num::{sum, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("packet `{packet}`: edge {edge:?} does not connect its source and destination")]
    NotCandidate { packet: String, edge: EdgeRef },
    #[error("packet `{0}`: no route (no candidate edge and no fixed link)")]
    NoRoute(String),
    #[error("packet `{0}`: forced route is not available")]
    BadForcedRoute(String),
}

/// Chunks of earlier-dispatched packets that are still waiting for the
/// reconfigurable network when a packet is processed.
#[derive(Debug)]
pub struct PendingView<'a, W> {
    chunks: &'a [Chunk<W>],
}

impl<W> Clone for PendingView<'_, W> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<W> Copy for PendingView<'_, W> {}

impl<'a, W> PendingView<'a, W> {
    pub fn new(chunks: &'a [Chunk<W>]) -> Self {
        PendingView { chunks }
    }

    pub fn chunks(&self) -> &'a [Chunk<W>] {
        self.chunks
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpactBreakdown<W> {
    pub edge: EdgeRef,
    pub self_term: W,
    pub heavier_count_term: W,
    pub lighter_weight_term: W,
    pub total: W,
    pub heavier: Vec<ChunkKey>,
    pub lighter: Vec<ChunkKey>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Route<W> {
    FixedLink { delay: u64 },
    Reconfig { edge: EdgeRef, chunks: Vec<Chunk<W>> },
}

/// Irrevocable routing decision for one packet.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<W> {
    pub packet: PacketId,
    pub route: Route<W>,
    /// Worst-case impact at dispatch (`w_p * link_delay` on the fixed route).
    pub alpha: W,
}

impl<W> Assignment<W> {
    pub fn edge(&self) -> Option<EdgeRef> {
        match &self.route {
            Route::Reconfig { edge, .. } => Some(*edge),
            Route::FixedLink { .. } => None,
        }
    }
}

fn check_candidate<W: Scalar>(
    topology: &Topology,
    packet: &Packet<W>,
    edge: EdgeRef,
) -> Result<u64, DispatchError> {
    let not_candidate = || DispatchError::NotCandidate {
        packet: packet.name.clone(),
        edge,
    };
    let d = topology.edge_delay(edge).ok_or_else(not_candidate)?;
    let src = topology.attachment(edge.transmitter).map(|a| a.0);
    let dst = topology.attachment(edge.receiver).map(|a| a.0);
    if src != Some(packet.source) || dst != Some(packet.dest) {
        return Err(not_candidate());
    }
    Ok(d)
}

pub type HeavierLighter<'a, W> = (Vec<&'a Chunk<W>>, Vec<&'a Chunk<W>>);

/// Splits the view's chunks adjacent to `edge` into (heavier, lighter)
/// relative to the threshold `w_p / d(e)`. Ties go to the heavier side: every
/// chunk in the view belongs to an earlier packet.
pub fn classify_adjacent<'a, W: Scalar>(
    topology: &Topology,
    packet: &Packet<W>,
    edge: EdgeRef,
    view: PendingView<'a, W>,
) -> Result<HeavierLighter<'a, W>, DispatchError> {
    let d = check_candidate(topology, packet, edge)?;
    let threshold = packet.weight.clone() / W::from_int(d as i64);
    let (heavier, lighter) = view
        .chunks()
        .iter()
        .filter(|c| c.edge.is_adjacent(&edge))
        .partition(|c| c.weight >= threshold);
    Ok((heavier, lighter))
}

pub fn compute_impact<W: Scalar>(
    topology: &Topology,
    packet: &Packet<W>,
    edge: EdgeRef,
    view: PendingView<'_, W>,
) -> Result<ImpactBreakdown<W>, DispatchError> {
    let d = check_candidate(topology, packet, edge)? as i64;
    let (heavier, lighter) = classify_adjacent(topology, packet, edge, view)?;
    let attach =
        topology.attach_delay(edge.transmitter) as i64 + topology.attach_delay(edge.receiver) as i64;
    // w * (attach + (d + 1) / 2)
    let self_term = packet.weight.clone() * W::ratio(2 * attach + d + 1, 2);
    let heavier_count_term = packet.weight.mul_int(heavier.len() as i64);
    let lighter_weight_term = sum(lighter.iter().map(|c| c.weight.clone())).mul_int(d);
    let total = self_term.clone() + heavier_count_term.clone() + lighter_weight_term.clone();
    Ok(ImpactBreakdown {
        edge,
        self_term,
        heavier_count_term,
        lighter_weight_term,
        total,
        heavier: heavier.iter().map(|c| c.key()).collect(),
        lighter: lighter.iter().map(|c| c.key()).collect(),
    })
}

/// Routes `packet` over `edge` with `alpha` set to the edge's impact.
pub fn assign_to_edge<W: Scalar>(
    topology: &Topology,
    packet: &Packet<W>,
    edge: EdgeRef,
    view: PendingView<'_, W>,
) -> Result<Assignment<W>, DispatchError> {
    let imp = compute_impact(topology, packet, edge, view)?;
    let d = topology.edge_delay(edge).expect("checked by compute_impact");
    Ok(Assignment {
        packet: packet.id,
        route: Route::Reconfig {
            edge,
            chunks: Chunk::split(packet, edge, d),
        },
        alpha: imp.total,
    })
}

fn fixed_assignment<W: Scalar>(packet: &Packet<W>, delay: u64) -> Assignment<W> {
    Assignment {
        packet: packet.id,
        route: Route::FixedLink { delay },
        alpha: packet.weight.mul_int(delay as i64),
    }
}

/// Final fixed-vs-reconfigurable decision given the preferred edge (if any):
/// the link wins when `w_p * link_delay <= impact`.
pub fn settle_route<W: Scalar>(
    topology: &Topology,
    packet: &Packet<W>,
    preferred: Option<EdgeRef>,
    view: PendingView<'_, W>,
) -> Result<Assignment<W>, DispatchError> {
    let link = topology.link_delay(packet.source, packet.dest);
    match (preferred, link) {
        (None, None) => Err(DispatchError::NoRoute(packet.name.clone())),
        (None, Some(l)) => Ok(fixed_assignment(packet, l)),
        (Some(e), link) => {
            let via_edge = assign_to_edge(topology, packet, e, view)?;
            match link {
                Some(l) if packet.weight.mul_int(l as i64) <= via_edge.alpha => {
                    Ok(fixed_assignment(packet, l))
                }
                _ => Ok(via_edge),
            }
        }
    }
}

/// Minimum-impact candidate edge; ties keep the first edge in
/// (transmitter, receiver) order.
pub fn best_edge<W: Scalar>(
    topology: &Topology,
    packet: &Packet<W>,
    view: PendingView<'_, W>,
) -> Result<Option<ImpactBreakdown<W>>, DispatchError> {
    let mut best: Option<ImpactBreakdown<W>> = None;
    for e in topology.candidate_edges(packet.source, packet.dest) {
        let imp = compute_impact(topology, packet, e, view)?;
        if best.as_ref().is_none_or(|b| imp.total < b.total) {
            best = Some(imp);
        }
    }
    Ok(best)
}

/// The impact-minimizing dispatch rule.
pub fn dispatch<W: Scalar>(
    topology: &Topology,
    packet: &Packet<W>,
    view: PendingView<'_, W>,
) -> Result<Assignment<W>, DispatchError> {
    let best = best_edge(topology, packet, view)?;
    settle_route(topology, packet, best.map(|b| b.edge), view)
}

/// Routing policy invoked by the engine once per packet, in arrival order.
pub trait Dispatcher<W: Scalar> {
    fn dispatch(
        &mut self,
        topology: &Topology,
        packet: &Packet<W>,
        view: PendingView<'_, W>,
    ) -> Result<Assignment<W>, DispatchError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ImpactDispatcher;

impl<W: Scalar> Dispatcher<W> for ImpactDispatcher {
    fn dispatch(
        &mut self,
        topology: &Topology,
        packet: &Packet<W>,
        view: PendingView<'_, W>,
    ) -> Result<Assignment<W>, DispatchError> {
        dispatch(topology, packet, view)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcedRoute {
    Fixed,
    Edge(EdgeRef),
}

/// Replays prescribed routes; packets without one fall back to [`dispatch`].
/// `alpha` is still the impact of the prescribed edge.
#[derive(Clone, Debug, Default)]
pub struct ForcedDispatcher {
    routes: BTreeMap<PacketId, ForcedRoute>,
}

impl ForcedDispatcher {
    pub fn new(routes: impl IntoIterator<Item = (PacketId, ForcedRoute)>) -> Self {
        ForcedDispatcher {
            routes: routes.into_iter().collect(),
        }
    }
}

impl<W: Scalar> Dispatcher<W> for ForcedDispatcher {
    fn dispatch(
        &mut self,
        topology: &Topology,
        packet: &Packet<W>,
        view: PendingView<'_, W>,
    ) -> Result<Assignment<W>, DispatchError> {
        match self.routes.get(&packet.id) {
            None => dispatch(topology, packet, view),
            Some(ForcedRoute::Edge(e)) => assign_to_edge(topology, packet, *e, view),
            Some(ForcedRoute::Fixed) => topology
                .link_delay(packet.source, packet.dest)
                .map(|l| fixed_assignment(packet, l))
                .ok_or_else(|| DispatchError::BadForcedRoute(packet.name.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{Instance, Layer};
    use crate::num::Rational;

    fn q(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn edge(inst: &Instance<Rational>, t: &str, r: &str) -> EdgeRef {
        let tp = &inst.topology;
        EdgeRef::new(tp.node_id(t).unwrap(), tp.node_id(r).unwrap())
    }

    fn chunk_on(inst: &Instance<Rational>, p: usize, e: EdgeRef) -> Chunk<Rational> {
        let d = inst.topology.edge_delay(e).unwrap();
        Chunk::split(&inst.packets()[p], e, d).remove(0)
    }

    /// One source with transmitters `t0, t1`; one destination with receivers
    /// `r0, r1`; every pair connected with delay `d`, attach delays `(at, ar)`.
    fn square(d: u64, at: u64, ar: u64) -> Topology {
        let mut t = Topology::new();
        let s = t.add_node("s", Layer::Source);
        let dst = t.add_node("d", Layer::Destination);
        let tx: Vec<_> = (0..2)
            .map(|i| t.add_node(format!("t{i}"), Layer::Transmitter))
            .collect();
        let rx: Vec<_> = (0..2)
            .map(|i| t.add_node(format!("r{i}"), Layer::Receiver))
            .collect();
        for &x in &tx {
            t.attach(x, s, at);
        }
        for &y in &rx {
            t.attach(y, dst, ar);
        }
        for &x in &tx {
            for &y in &rx {
                t.add_edge(x, y, d);
            }
        }
        t
    }

    #[test]
    fn fig2_prime_last_packet_classification() {
        let inst = fixtures::fig2_pi_prime();
        let e13 = edge(&inst, "t1", "r1");
        let e12 = edge(&inst, "t1", "r2");
        let e22 = edge(&inst, "t2", "r2");
        let e23 = edge(&inst, "t2", "r3");
        let view = vec![
            chunk_on(&inst, 0, e13),
            chunk_on(&inst, 1, e12),
            chunk_on(&inst, 2, e22),
        ];
        let p4 = &inst.packets()[3];
        let (h, l) = classify_adjacent(&inst.topology, p4, e23, PendingView::new(&view)).unwrap();
        assert!(h.is_empty());
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].packet, PacketId(2));

        let imp = compute_impact(&inst.topology, p4, e23, PendingView::new(&view)).unwrap();
        assert_eq!(imp.total, q(7));
        assert_eq!(imp.self_term, q(4));
        assert_eq!(imp.lighter_weight_term, q(3));

        // First packet on an empty system.
        let p1 = &inst.packets()[0];
        let imp = compute_impact(&inst.topology, p1, e13, PendingView::new(&[])).unwrap();
        assert_eq!(imp.total, q(1));
        let (h, l) = classify_adjacent(&inst.topology, p1, e13, PendingView::new(&[])).unwrap();
        assert!(h.is_empty() && l.is_empty());
    }

    fn weighted_chunks(topology: &Topology, weights: &[i64], edge: EdgeRef) -> Vec<Chunk<Rational>> {
        let mut inst = Instance::new(topology.clone());
        let (s, d) = (topology.node_id("s").unwrap(), topology.node_id("d").unwrap());
        for (i, &w) in weights.iter().enumerate() {
            inst.add_packet(format!("q{i}"), s, d, 1, q(w));
        }
        inst.packets()
            .iter()
            .map(|p| Chunk {
                weight: p.weight.clone(),
                ..Chunk::split(p, edge, 1).remove(0)
            })
            .collect()
    }

    #[test]
    fn threshold_split_keeps_ties_heavier() {
        // Threshold w_p / d = 6 / 2 = 3 against adjacent weights {4, 3, 2}.
        let t = square(2, 0, 0);
        let e00 = EdgeRef::new(t.node_id("t0").unwrap(), t.node_id("r0").unwrap());
        let e01 = EdgeRef::new(t.node_id("t0").unwrap(), t.node_id("r1").unwrap());
        let view = weighted_chunks(&t, &[4, 3, 2], e01);
        let mut inst = Instance::new(t.clone());
        let p = inst.add_packet("p", t.node_id("s").unwrap(), t.node_id("d").unwrap(), 1, q(6));
        let p = inst.packet(p).clone();
        let (h, l) = classify_adjacent(&t, &p, e00, PendingView::new(&view)).unwrap();
        let hw: Vec<_> = h.iter().map(|c| c.weight.clone()).collect();
        let lw: Vec<_> = l.iter().map(|c| c.weight.clone()).collect();
        assert_eq!(hw, vec![q(4), q(3)]);
        assert_eq!(lw, vec![q(2)]);
    }

    #[test]
    fn impact_formula_with_attach_delays() {
        // w=6, d=2, attach (1, 0), adjacent {4, 2}:
        // 6 * (1 + 3/2 + 0) + 6 * 1 + 2 * 2 = 15 + 6 + 4 = 25.
        let t = square(2, 1, 0);
        let e00 = EdgeRef::new(t.node_id("t0").unwrap(), t.node_id("r0").unwrap());
        let e01 = EdgeRef::new(t.node_id("t0").unwrap(), t.node_id("r1").unwrap());
        let view = weighted_chunks(&t, &[4, 2], e01);
        let mut inst = Instance::new(t.clone());
        let p = inst.add_packet("p", t.node_id("s").unwrap(), t.node_id("d").unwrap(), 1, q(6));
        let imp = compute_impact(&t, inst.packet(p), e00, PendingView::new(&view)).unwrap();
        assert_eq!(imp.self_term, q(15));
        assert_eq!(imp.heavier_count_term, q(6));
        assert_eq!(imp.lighter_weight_term, q(4));
        assert_eq!(imp.total, q(25));
    }

    #[test]
    fn non_candidate_edge_is_an_error() {
        let inst = fixtures::fig1();
        let p1 = &inst.packets()[0];
        let e = edge(&inst, "t3", "r4");
        assert!(matches!(
            compute_impact(&inst.topology, p1, e, PendingView::new(&[])),
            Err(DispatchError::NotCandidate { .. })
        ));
    }

    #[test]
    fn fig1_fifth_packet_prefers_edge_over_slow_link() {
        let inst = fixtures::fig1();
        let e33 = edge(&inst, "t3", "r3");
        let e34 = edge(&inst, "t3", "r4");
        let view = vec![chunk_on(&inst, 3, e33)];
        let p5 = &inst.packets()[4];
        let a = dispatch(&inst.topology, p5, PendingView::new(&view)).unwrap();
        assert_eq!(a.edge(), Some(e34));
        assert_eq!(a.alpha, q(2));
        match &a.route {
            Route::Reconfig { chunks, .. } => assert_eq!(chunks.len(), 1),
            Route::FixedLink { .. } => panic!("expected reconfigurable route"),
        }
    }

    #[test]
    fn link_wins_ties() {
        // Link delay 4 against impact 1 * 1 + 1 * 3 = 4 (three heavier chunks).
        let inst = fixtures::fig1();
        let e33 = edge(&inst, "t3", "r3");
        let view: Vec<_> = (0..3).map(|_| chunk_on(&inst, 3, e33)).collect();
        let p5 = &inst.packets()[4];
        let a = dispatch(&inst.topology, p5, PendingView::new(&view)).unwrap();
        assert_eq!(a.route, Route::FixedLink { delay: 4 });
        assert_eq!(a.alpha, q(4));
    }

    #[test]
    fn no_link_forces_reconfig_and_no_route_errors() {
        let inst = fixtures::fig1();
        let p1 = &inst.packets()[0];
        let a = dispatch(&inst.topology, p1, PendingView::new(&[])).unwrap();
        assert_eq!(a.edge(), Some(edge(&inst, "t1", "r1")));

        let mut t = Topology::new();
        let s = t.add_node("s", Layer::Source);
        let d = t.add_node("d", Layer::Destination);
        let mut lonely = Instance::new(t);
        let id = lonely.add_packet("x", s, d, 1, q(1));
        assert_eq!(
            dispatch(&lonely.topology, lonely.packet(id), PendingView::new(&[])),
            Err(DispatchError::NoRoute("x".into()))
        );
    }

    #[test]
    fn argmin_ties_break_by_edge_order() {
        let t = square(1, 0, 0);
        let mut inst = Instance::new(t.clone());
        let p = inst.add_packet("p", t.node_id("s").unwrap(), t.node_id("d").unwrap(), 1, q(1));
        let a = dispatch(&t, inst.packet(p), PendingView::new(&[])).unwrap();
        assert_eq!(
            a.edge(),
            Some(EdgeRef::new(t.node_id("t0").unwrap(), t.node_id("r0").unwrap()))
        );
    }
}
