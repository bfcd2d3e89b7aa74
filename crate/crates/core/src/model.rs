//! Network and demand model: the four-layer topology, packets, and chunks.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::num::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Source,
    Transmitter,
    Receiver,
    Destination,
}

impl Layer {
    pub fn code(self) -> char {
        match self {
            Layer::Source => 'S',
            Layer::Transmitter => 'T',
            Layer::Receiver => 'R',
            Layer::Destination => 'D',
        }
    }

    pub fn from_code(c: &str) -> Option<Layer> {
        match c {
            "S" => Some(Layer::Source),
            "T" => Some(Layer::Transmitter),
            "R" => Some(Layer::Receiver),
            "D" => Some(Layer::Destination),
            _ => None,
        }
    }
}

/// Node handle. Ids are assigned in declaration order, which is also the
/// order used for every id-based tie-break.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub layer: Layer,
}

/// A transmitter-receiver pair. Orders by (transmitter, receiver).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeRef {
    pub transmitter: NodeId,
    pub receiver: NodeId,
}

impl EdgeRef {
    pub fn new(transmitter: NodeId, receiver: NodeId) -> Self {
        EdgeRef {
            transmitter,
            receiver,
        }
    }

    /// Shares the transmitter or the receiver (an edge is adjacent to itself).
    pub fn is_adjacent(&self, other: &EdgeRef) -> bool {
        self.transmitter == other.transmitter || self.receiver == other.receiver
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attachment {
    pub child: NodeId,
    pub parent: NodeId,
    pub delay: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReconfigEdge {
    pub transmitter: NodeId,
    pub receiver: NodeId,
    pub delay: u64,
}

impl ReconfigEdge {
    pub fn edge_ref(&self) -> EdgeRef {
        EdgeRef::new(self.transmitter, self.receiver)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedLink {
    pub source: NodeId,
    pub dest: NodeId,
    pub delay: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TopologyViolation {
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("`{0}` is not attached to any source or destination")]
    Unattached(String),
    #[error("`{0}` is attached more than once")]
    MultipleAttachments(String),
    #[error("attachment `{child}` -> `{parent}` does not connect a transmitter to a source or a receiver to a destination")]
    BadAttachment { child: String, parent: String },
    #[error("edge `{0}`-`{1}` must join a transmitter to a receiver")]
    BadEdgeEndpoints(String, String),
    #[error("edge `{0}`-`{1}`: reconfig delay ≥ 1 required")]
    ZeroDelayEdge(String, String),
    #[error("duplicate edge `{0}`-`{1}`")]
    DuplicateEdge(String, String),
    #[error("link `{0}`-`{1}` must join a source to a destination")]
    BadLinkEndpoints(String, String),
    #[error("duplicate link `{0}`-`{1}`")]
    DuplicateLink(String, String),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown reconfigurable edge {0:?}")]
    UnknownEdge(EdgeRef),
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
}

/// The four-layer network. Mutators record raw declarations; [`Topology::validate`]
/// reports every structural problem. Lookups use the first declaration when
/// duplicates exist.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    nodes: Vec<Node>,
    names: BTreeMap<String, NodeId>,
    attachments: Vec<Attachment>,
    attach_index: BTreeMap<NodeId, usize>,
    edges: Vec<ReconfigEdge>,
    edge_index: BTreeMap<EdgeRef, usize>,
    links: Vec<FixedLink>,
    link_index: BTreeMap<(NodeId, NodeId), usize>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, layer: Layer) -> NodeId {
        let id = NodeId(self.nodes.len());
        let name = name.into();
        self.names.entry(name.clone()).or_insert(id);
        self.nodes.push(Node { name, layer });
        id
    }

    pub fn attach(&mut self, child: NodeId, parent: NodeId, delay: u64) {
        self.attach_index
            .entry(child)
            .or_insert(self.attachments.len());
        self.attachments.push(Attachment {
            child,
            parent,
            delay,
        });
    }

    pub fn add_edge(&mut self, transmitter: NodeId, receiver: NodeId, delay: u64) -> EdgeRef {
        let e = EdgeRef::new(transmitter, receiver);
        self.edge_index.entry(e).or_insert(self.edges.len());
        self.edges.push(ReconfigEdge {
            transmitter,
            receiver,
            delay,
        });
        e
    }

    pub fn add_link(&mut self, source: NodeId, dest: NodeId, delay: u64) {
        self.link_index
            .entry((source, dest))
            .or_insert(self.links.len());
        self.links.push(FixedLink {
            source,
            dest,
            delay,
        });
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    pub fn attachments(&self) -> &[Attachment] {
        &self.attachments
    }

    pub fn edges(&self) -> &[ReconfigEdge] {
        &self.edges
    }

    pub fn links(&self) -> &[FixedLink] {
        &self.links
    }

    /// Parent node and delay of a transmitter or receiver.
    pub fn attachment(&self, child: NodeId) -> Option<(NodeId, u64)> {
        self.attach_index.get(&child).map(|&i| {
            let a = &self.attachments[i];
            (a.parent, a.delay)
        })
    }

    pub fn attach_delay(&self, child: NodeId) -> u64 {
        self.attachment(child).map_or(0, |(_, d)| d)
    }

    pub fn edge_delay(&self, edge: EdgeRef) -> Option<u64> {
        self.edge_index.get(&edge).map(|&i| self.edges[i].delay)
    }

    pub fn link_delay(&self, source: NodeId, dest: NodeId) -> Option<u64> {
        self.link_index
            .get(&(source, dest))
            .map(|&i| self.links[i].delay)
    }

    /// Reconfigurable edges usable between `source` and `dest`, ordered by
    /// (transmitter, receiver).
    pub fn candidate_edges(&self, source: NodeId, dest: NodeId) -> Vec<EdgeRef> {
        let mut out: Vec<EdgeRef> = self
            .edge_index
            .keys()
            .filter(|e| {
                self.attachment(e.transmitter).map(|a| a.0) == Some(source)
                    && self.attachment(e.receiver).map(|a| a.0) == Some(dest)
            })
            .copied()
            .collect();
        out.sort();
        out
    }

    /// Source-side attach delay + edge delay + destination-side attach delay.
    pub fn path_delay(&self, edge: EdgeRef) -> Result<u64, ModelError> {
        let d = self
            .edge_delay(edge)
            .ok_or(ModelError::UnknownEdge(edge))?;
        Ok(self.attach_delay(edge.transmitter) + d + self.attach_delay(edge.receiver))
    }

    /// Largest path delay over all reconfigurable edges (0 without edges).
    pub fn max_path_delay(&self) -> u64 {
        self.edge_index
            .keys()
            .filter_map(|&e| self.path_delay(e).ok())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), Vec<TopologyViolation>> {
        let mut out = Vec::new();
        let mut seen = BTreeMap::new();
        for n in &self.nodes {
            if seen.insert(n.name.as_str(), ()).is_some() {
                out.push(TopologyViolation::DuplicateNode(n.name.clone()));
            }
        }

        let mut attach_count: BTreeMap<NodeId, usize> = BTreeMap::new();
        for a in &self.attachments {
            *attach_count.entry(a.child).or_default() += 1;
            let ok = matches!(
                (self.node(a.child).layer, self.node(a.parent).layer),
                (Layer::Transmitter, Layer::Source) | (Layer::Receiver, Layer::Destination)
            );
            if !ok {
                out.push(TopologyViolation::BadAttachment {
                    child: self.name(a.child).to_string(),
                    parent: self.name(a.parent).to_string(),
                });
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if matches!(n.layer, Layer::Transmitter | Layer::Receiver) {
                match attach_count.get(&NodeId(i)).copied().unwrap_or(0) {
                    0 => out.push(TopologyViolation::Unattached(n.name.clone())),
                    1 => {}
                    _ => out.push(TopologyViolation::MultipleAttachments(n.name.clone())),
                }
            }
        }

        let mut seen_edges = BTreeMap::new();
        for e in &self.edges {
            let (t, r) = (self.name(e.transmitter), self.name(e.receiver));
            if self.node(e.transmitter).layer != Layer::Transmitter
                || self.node(e.receiver).layer != Layer::Receiver
            {
                out.push(TopologyViolation::BadEdgeEndpoints(t.into(), r.into()));
            }
            if e.delay == 0 {
                out.push(TopologyViolation::ZeroDelayEdge(t.into(), r.into()));
            }
            if seen_edges.insert(e.edge_ref(), ()).is_some() {
                out.push(TopologyViolation::DuplicateEdge(t.into(), r.into()));
            }
        }

        let mut seen_links = BTreeMap::new();
        for l in &self.links {
            let (s, d) = (self.name(l.source), self.name(l.dest));
            if self.node(l.source).layer != Layer::Source
                || self.node(l.dest).layer != Layer::Destination
            {
                out.push(TopologyViolation::BadLinkEndpoints(s.into(), d.into()));
            }
            if seen_links.insert((l.source, l.dest), ()).is_some() {
                out.push(TopologyViolation::DuplicateLink(s.into(), d.into()));
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// Packet handle: the position of the packet in the input sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Packet<W> {
    pub id: PacketId,
    pub name: String,
    pub source: NodeId,
    pub dest: NodeId,
    pub release: u64,
    pub weight: W,
}

impl<W> Packet<W> {
    /// Arrival key: release time, then input position.
    pub fn arrival(&self) -> (u64, PacketId) {
        (self.release, self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum InstanceViolation {
    #[error(transparent)]
    Topology(#[from] TopologyViolation),
    #[error("packet `{0}`: source must be a source node")]
    BadSource(String),
    #[error("packet `{0}`: destination must be a destination node")]
    BadDest(String),
    #[error("packet `{0}`: weight must be positive")]
    NonPositiveWeight(String),
    #[error("duplicate packet name `{0}`")]
    DuplicatePacket(String),
}

/// A topology plus the packet input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<W> {
    pub topology: Topology,
    packets: Vec<Packet<W>>,
}

impl<W: Scalar> Instance<W> {
    pub fn new(topology: Topology) -> Self {
        Instance {
            topology,
            packets: Vec::new(),
        }
    }

    pub fn add_packet(
        &mut self,
        name: impl Into<String>,
        source: NodeId,
        dest: NodeId,
        release: u64,
        weight: W,
    ) -> PacketId {
        let id = PacketId(self.packets.len());
        self.packets.push(Packet {
            id,
            name: name.into(),
            source,
            dest,
            release,
            weight,
        });
        id
    }

    pub fn packets(&self) -> &[Packet<W>] {
        &self.packets
    }

    pub fn packet(&self, id: PacketId) -> &Packet<W> {
        &self.packets[id.0]
    }

    /// Packet ids in dispatch order: (release, input position).
    pub fn arrival_order(&self) -> Vec<PacketId> {
        let mut ids: Vec<PacketId> = self.packets.iter().map(|p| p.id).collect();
        ids.sort_by_key(|&id| self.packets[id.0].arrival());
        ids
    }

    pub fn candidate_edges(&self, packet: &Packet<W>) -> Vec<EdgeRef> {
        self.topology.candidate_edges(packet.source, packet.dest)
    }

    pub fn fixed_link_delay(&self, packet: &Packet<W>) -> Option<u64> {
        self.topology.link_delay(packet.source, packet.dest)
    }

    /// `max release + |packets| * max path delay`: no schedule that keeps
    /// some endpoint busy while work is pending needs steps at or past this.
    pub fn horizon(&self) -> u64 {
        let max_release = self.packets.iter().map(|p| p.release).max().unwrap_or(0);
        max_release + self.packets.len() as u64 * self.topology.max_path_delay()
    }

    pub fn validate(&self) -> Result<(), Vec<InstanceViolation>> {
        let mut out: Vec<InstanceViolation> = match self.topology.validate() {
            Ok(()) => Vec::new(),
            Err(v) => v.into_iter().map(Into::into).collect(),
        };
        let mut names = BTreeMap::new();
        for p in &self.packets {
            if names.insert(p.name.as_str(), ()).is_some() {
                out.push(InstanceViolation::DuplicatePacket(p.name.clone()));
            }
            if self.topology.node(p.source).layer != Layer::Source {
                out.push(InstanceViolation::BadSource(p.name.clone()));
            }
            if self.topology.node(p.dest).layer != Layer::Destination {
                out.push(InstanceViolation::BadDest(p.name.clone()));
            }
            if !p.weight.is_positive() {
                out.push(InstanceViolation::NonPositiveWeight(p.name.clone()));
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Same instance with weights mapped through `f`.
    pub fn map_weights<V: Scalar>(&self, f: impl Fn(&W) -> V) -> Instance<V> {
        Instance {
            topology: self.topology.clone(),
            packets: self
                .packets
                .iter()
                .map(|p| Packet {
                    id: p.id,
                    name: p.name.clone(),
                    source: p.source,
                    dest: p.dest,
                    release: p.release,
                    weight: f(&p.weight),
                })
                .collect(),
        }
    }
}

/// Identifies chunk `index` (1-based) of a packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkKey {
    pub packet: PacketId,
    pub index: u32,
}

impl fmt::Display for ChunkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p#{}.{}", self.packet.0, self.index)
    }
}

/// A `1/d(e)` fragment of a packet routed over edge `e`.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk<W> {
    pub packet: PacketId,
    pub release: u64,
    pub index: u32,
    pub size: W,
    pub weight: W,
    pub edge: EdgeRef,
}

impl<W: Scalar> Chunk<W> {
    /// Splits `packet` into `delay` chunks of size `1/delay` on `edge`.
    pub fn split(packet: &Packet<W>, edge: EdgeRef, delay: u64) -> Vec<Chunk<W>> {
        assert!(delay >= 1, "edge delay must be at least 1");
        let size = W::ratio(1, delay as i64);
        let weight = packet.weight.clone() * size.clone();
        (1..=delay as u32)
            .map(|index| Chunk {
                packet: packet.id,
                release: packet.release,
                index,
                size: size.clone(),
                weight: weight.clone(),
                edge,
            })
            .collect()
    }

    pub fn key(&self) -> ChunkKey {
        ChunkKey {
            packet: self.packet,
            index: self.index,
        }
    }

    pub fn arrival(&self) -> (u64, PacketId) {
        (self.release, self.packet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::num::Rational;
    use num_traits::{One, Zero};

    #[test]
    fn fig1_topology_is_valid() {
        let inst = fixtures::fig1();
        assert_eq!(inst.topology.validate(), Ok(()));
        assert_eq!(inst.topology.edges().len(), 5);
        assert_eq!(inst.topology.links().len(), 1);
        let t = &inst.topology;
        let (s2, d3) = (t.node_id("s2").unwrap(), t.node_id("d3").unwrap());
        assert_eq!(t.link_delay(s2, d3), Some(4));
    }

    #[test]
    fn empty_topology_is_valid() {
        assert_eq!(Topology::new().validate(), Ok(()));
    }

    #[test]
    fn zero_delay_edge_is_reported() {
        let mut t = Topology::new();
        let s = t.add_node("s", Layer::Source);
        let d = t.add_node("d", Layer::Destination);
        let tx = t.add_node("t", Layer::Transmitter);
        let rx = t.add_node("r", Layer::Receiver);
        t.attach(tx, s, 0);
        t.attach(rx, d, 0);
        t.add_edge(tx, rx, 0);
        let errs = t.validate().unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("reconfig delay ≥ 1 required"));
    }

    #[test]
    fn dangling_and_duplicate_edges_are_reported() {
        let mut t = Topology::new();
        let s = t.add_node("s", Layer::Source);
        let tx = t.add_node("t", Layer::Transmitter);
        let rx = t.add_node("r", Layer::Receiver);
        t.attach(tx, s, 0);
        t.add_edge(tx, rx, 1);
        t.add_edge(tx, rx, 2);
        let errs = t.validate().unwrap_err();
        assert!(errs.contains(&TopologyViolation::Unattached("r".into())));
        assert!(errs.contains(&TopologyViolation::DuplicateEdge("t".into(), "r".into())));
    }

    #[test]
    fn candidate_edges_in_fig1() {
        let inst = fixtures::fig1();
        let t = &inst.topology;
        let n = |s: &str| t.node_id(s).unwrap();
        // s1 owns t1 and t2; d2 owns r2 and r3.
        assert_eq!(
            t.candidate_edges(n("s1"), n("d2")),
            vec![
                EdgeRef::new(n("t1"), n("r2")),
                EdgeRef::new(n("t2"), n("r3"))
            ]
        );
        assert_eq!(
            t.candidate_edges(n("s2"), n("d2")),
            vec![EdgeRef::new(n("t3"), n("r3"))]
        );
        assert!(t.candidate_edges(n("s1"), n("d3")).is_empty());
    }

    #[test]
    fn path_delay_sums_segments() {
        let inst = fixtures::fig1();
        let t = &inst.topology;
        let e = EdgeRef::new(t.node_id("t1").unwrap(), t.node_id("r1").unwrap());
        assert_eq!(t.path_delay(e), Ok(1));

        for (a, d, b, want) in [(1, 2, 0, 3), (3, 5, 4, 12)] {
            let mut t = Topology::new();
            let s = t.add_node("s", Layer::Source);
            let dst = t.add_node("d", Layer::Destination);
            let tx = t.add_node("t", Layer::Transmitter);
            let rx = t.add_node("r", Layer::Receiver);
            t.attach(tx, s, a);
            t.attach(rx, dst, b);
            let e = t.add_edge(tx, rx, d);
            assert_eq!(t.path_delay(e), Ok(want));
        }

        let missing = EdgeRef::new(NodeId(0), NodeId(1));
        assert_eq!(
            Topology::new().path_delay(missing),
            Err(ModelError::UnknownEdge(missing))
        );
    }

    #[test]
    fn chunks_partition_the_packet() {
        let inst = fixtures::fig1();
        let p = Packet {
            weight: Rational::ratio(7, 3),
            ..inst.packets()[0].clone()
        };
        let e = inst.candidate_edges(&p)[0];
        for d in 1..=5u64 {
            let chunks = Chunk::split(&p, e, d);
            assert_eq!(chunks.len() as u64, d);
            let size: Rational = chunks.iter().map(|c| c.size.clone()).sum();
            let weight: Rational = chunks.iter().map(|c| c.weight.clone()).sum();
            assert!(size.is_one());
            assert_eq!(weight, p.weight);
            for c in &chunks {
                assert_eq!(c.size.mul_int(d as i64), Rational::one());
            }
        }
        assert!(!Rational::zero().is_positive());
    }
}
