//! Line-oriented instance files.
//!
//! ```text
//! topology
//! node <id> <S|T|R|D>
//! attach <t-or-r-id> <s-or-d-id> <delay>
//! edge <t-id> <r-id> <delay>
//! link <s-id> <d-id> <delay>
//! packets
//! packet <id> <s-id> <d-id> <release> <weight>
//! ```
//!
//! Weights are bare integers or `num/den`. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::Signed;
use thiserror::Error;

use crate::model::{Instance, Layer, NodeId, Topology};
use crate::num::{Rational, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        message: message.into(),
    })
}

#[derive(PartialEq)]
enum Section {
    Start,
    Topology,
    Packets,
}

struct Parser {
    topology: Topology,
    packets: Vec<(String, NodeId, NodeId, u64, Rational)>,
}

impl Parser {
    fn node(&self, line: usize, name: &str, layers: &[Layer]) -> Result<NodeId, ParseError> {
        let Some(id) = self.topology.node_id(name) else {
            return err(line, format!("unknown node `{name}`"));
        };
        let layer = self.topology.node(id).layer;
        if !layers.contains(&layer) {
            return err(
                line,
                format!("node `{name}` has layer {} here", layer.code()),
            );
        }
        Ok(id)
    }

    fn topology_line(&mut self, line: usize, fields: &[&str]) -> Result<(), ParseError> {
        match fields {
            ["node", name, layer] => {
                let Some(layer) = Layer::from_code(layer) else {
                    return err(line, format!("unknown layer `{layer}` (want S, T, R or D)"));
                };
                if self.topology.node_id(name).is_some() {
                    return err(line, format!("duplicate node `{name}`"));
                }
                self.topology.add_node(*name, layer);
            }
            ["attach", child, parent, delay] => {
                let c = self.node(line, child, &[Layer::Transmitter, Layer::Receiver])?;
                let want = if self.topology.node(c).layer == Layer::Transmitter {
                    Layer::Source
                } else {
                    Layer::Destination
                };
                let p = self.node(line, parent, &[want])?;
                let delay = int(line, "attach delay", delay)?;
                if self.topology.attachment(c).is_some() {
                    return err(line, format!("`{child}` is already attached"));
                }
                self.topology.attach(c, p, delay);
            }
            ["edge", t, r, delay] => {
                let t = self.node(line, t, &[Layer::Transmitter])?;
                let r = self.node(line, r, &[Layer::Receiver])?;
                let delay = int(line, "edge delay", delay)?;
                if delay < 1 {
                    return err(line, "edge delay must be ≥ 1");
                }
                if self.topology.edge_delay(crate::EdgeRef::new(t, r)).is_some() {
                    return err(line, "duplicate edge");
                }
                self.topology.add_edge(t, r, delay);
            }
            ["link", s, d, delay] => {
                let s = self.node(line, s, &[Layer::Source])?;
                let d = self.node(line, d, &[Layer::Destination])?;
                let delay = int(line, "link delay", delay)?;
                if self.topology.link_delay(s, d).is_some() {
                    return err(line, "duplicate link");
                }
                self.topology.add_link(s, d, delay);
            }
            _ => return err(line, format!("malformed topology record `{}`", fields.join(" "))),
        }
        Ok(())
    }

    fn packet_line(&mut self, line: usize, fields: &[&str]) -> Result<(), ParseError> {
        let ["packet", name, s, d, release, weight] = fields else {
            return err(line, format!("malformed packet record `{}`", fields.join(" ")));
        };
        if self.packets.iter().any(|p| p.0 == *name) {
            return err(line, format!("duplicate packet `{name}`"));
        }
        let s = self.node(line, s, &[Layer::Source])?;
        let d = self.node(line, d, &[Layer::Destination])?;
        let release = int(line, "release", release)?;
        let weight = parse_rational(weight).map_err(|m| ParseError { line, message: m })?;
        if !Scalar::is_positive(&weight) {
            return err(line, "weight must be positive");
        }
        self.packets
            .push((name.to_string(), s, d, release, weight));
        Ok(())
    }
}

fn int(line: usize, what: &str, s: &str) -> Result<u64, ParseError> {
    s.parse::<u64>().or_else(|_| {
        err(
            line,
            format!("{what} must be a nonnegative integer, got `{s}`"),
        )
    })
}

/// Parses `n` or `n/d` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let bad = || format!("expected an integer or `num/den`, got `{s}`");
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n = BigInt::from_str(n).map_err(|_| bad())?;
    let d = BigInt::from_str(d).map_err(|_| bad())?;
    if !d.is_positive() {
        return Err(format!("denominator must be positive in `{s}`"));
    }
    Ok(Rational::new(n, d))
}

pub fn parse_instance(text: &str) -> Result<Instance<Rational>, ParseError> {
    let mut parser = Parser {
        topology: Topology::new(),
        packets: Vec::new(),
    };
    let mut section = Section::Start;
    let mut last_line = 0;
    let mut packets_header = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match (&section, fields.as_slice()) {
            (Section::Start, ["topology"]) => section = Section::Topology,
            (Section::Start, _) => return err(line, "missing topology section"),
            (Section::Topology, ["packets"]) => {
                section = Section::Packets;
                packets_header = line;
            }
            (Section::Topology, f) => parser.topology_line(line, f)?,
            (Section::Packets, f) => parser.packet_line(line, f)?,
        }
    }
    if section == Section::Start {
        return err(last_line.max(1), "missing topology section");
    }
    if let Err(violations) = parser.topology.validate() {
        let at = if packets_header > 0 {
            packets_header
        } else {
            last_line
        };
        let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return err(at, msg.join("; "));
    }
    let mut instance = Instance::new(parser.topology);
    for (name, s, d, release, weight) in parser.packets {
        instance.add_packet(name, s, d, release, weight);
    }
    Ok(instance)
}

/// Canonical text form; [`parse_instance`] reads it back to an equal instance.
pub fn serialize_instance<W: Scalar>(instance: &Instance<W>) -> String {
    let t = &instance.topology;
    let mut out = String::from("topology\n");
    for n in t.nodes() {
        let _ = writeln!(out, "node {} {}", n.name, n.layer.code());
    }
    for a in t.attachments() {
        let _ = writeln!(out, "attach {} {} {}", t.name(a.child), t.name(a.parent), a.delay);
    }
    for e in t.edges() {
        let _ = writeln!(
            out,
            "edge {} {} {}",
            t.name(e.transmitter),
            t.name(e.receiver),
            e.delay
        );
    }
    for l in t.links() {
        let _ = writeln!(out, "link {} {} {}", t.name(l.source), t.name(l.dest), l.delay);
    }
    out.push_str("packets\n");
    for p in instance.packets() {
        let _ = writeln!(
            out,
            "packet {} {} {} {} {}",
            p.name,
            t.name(p.source),
            t.name(p.dest),
            p.release,
            p.weight.exact_string()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fig1_counts() {
        let inst = parse_instance(fixtures::FIG1).unwrap();
        assert_eq!(inst.topology.nodes().len(), 12);
        assert_eq!(inst.topology.edges().len(), 5);
        assert_eq!(inst.topology.links().len(), 1);
        assert_eq!(inst.packets().len(), 5);
    }

    #[test]
    fn empty_file() {
        let e = parse_instance("").unwrap_err();
        assert_eq!(e.message, "missing topology section");
        let e = parse_instance("# only a comment\n\n").unwrap_err();
        assert_eq!(e.message, "missing topology section");
    }

    #[test]
    fn zero_edge_delay() {
        let text = "topology\nnode t1 T\nnode r1 R\nedge t1 r1 0\n";
        let e = parse_instance(text).unwrap_err();
        assert_eq!(e.line, 4);
        assert_eq!(e.message, "edge delay must be ≥ 1");
    }

    #[test]
    fn errors_carry_locations() {
        let base = "topology\nnode s1 S\nnode t1 T\nnode r1 R\nnode d1 D\n\
                    attach t1 s1 0\nattach r1 d1 0\nedge t1 r1 1\n";
        let cases = [
            (format!("{base}edge t1 r1 2\n"), 9, "duplicate edge"),
            (format!("{base}edge t1 r9 2\n"), 9, "unknown node `r9`"),
            (format!("{base}bogus\n"), 9, "malformed"),
            (format!("{base}packets\npacket p s1 d1 1 0\n"), 10, "positive"),
            (format!("{base}packets\npacket p s1 d1 x 1\n"), 10, "release"),
            (format!("{base}packets\npacket p s1 d1 1 1/0\n"), 10, "denominator"),
            (format!("{base}packets\npacket p t1 d1 1 1\n"), 10, "layer"),
            (format!("{base}link s1 d1 1\nlink s1 d1 2\n"), 10, "duplicate link"),
            ("topology\nnode t1 T\npackets\n".to_string(), 3, "not attached"),
        ];
        for (text, line, needle) in cases {
            let e = parse_instance(&text).unwrap_err();
            assert_eq!(e.line, line, "{e}");
            assert!(e.message.contains(needle), "{e}");
        }
    }

    #[test]
    fn rational_literals() {
        assert_eq!(parse_rational("6/4").unwrap(), Rational::ratio(3, 2));
        assert_eq!(parse_rational("5").unwrap(), Rational::from_int(5));
        assert!(parse_rational("1.5").is_err());
        assert!(parse_rational("1/-2").is_err());
    }

    #[test]
    fn fig1_round_trips() {
        let inst = parse_instance(fixtures::FIG1).unwrap();
        let text = serialize_instance(&inst);
        assert_eq!(parse_instance(&text).unwrap(), inst);
    }
}
