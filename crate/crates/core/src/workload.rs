//! Synthetic instances and the unit-size reduction.
//!
//! Every random draw comes from one `ChaCha8Rng` seeded from the config, so a
//! config always produces the same instance.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

use crate::model::{Instance, Layer, NodeId, Topology};
use crate::num::{Rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Uniform,
    ZipfSkewed,
    BurstyOnOff,
}

impl FromStr for Model {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Model::Uniform),
            "zipf-skewed" | "zipf" => Ok(Model::ZipfSkewed),
            "bursty-onoff" | "bursty" => Ok(Model::BurstyOnOff),
            other => Err(GenerateError::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightDist {
    Unit,
    /// Integers in `1..=max`.
    Integer { max: u64 },
    /// `a/b` with `a` in `1..=max_num`, `b` in `1..=max_den`.
    Fraction { max_num: u64, max_den: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub model: Model,
    pub sources: usize,
    pub transmitters_per_source: usize,
    pub receivers_per_dest: usize,
    pub destinations: usize,
    pub packets: usize,
    /// Probability that each transmitter-receiver pair gets an edge.
    pub edge_prob: f64,
    /// Probability that each source-destination pair gets a fixed link.
    pub link_prob: f64,
    /// Inclusive ranges.
    pub edge_delay: (u64, u64),
    pub attach_delay: (u64, u64),
    pub link_delay: (u64, u64),
    /// Releases are spread over this many active steps, starting at 0.
    pub release_span: u64,
    pub weights: WeightDist,
    /// Packet sizes are drawn in `1..=max_size` and split into unit packets.
    pub max_size: u64,
    /// Zipf exponent over (source, destination) pairs.
    pub skew: f64,
    pub burst_on: u64,
    pub burst_off: u64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            model: Model::Uniform,
            sources: 2,
            transmitters_per_source: 1,
            receivers_per_dest: 1,
            destinations: 2,
            packets: 10,
            edge_prob: 1.0,
            link_prob: 0.5,
            edge_delay: (1, 1),
            attach_delay: (0, 1),
            link_delay: (2, 6),
            release_span: 10,
            weights: WeightDist::Integer { max: 4 },
            max_size: 1,
            skew: 1.0,
            burst_on: 3,
            burst_off: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("packet `{0}` has a non-integer or non-positive size")]
    BadSize(String),
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::Config(m.to_string()));
        if self.packets > 0 && (self.sources == 0 || self.destinations == 0) {
            return bad("packets need at least one source and one destination");
        }
        if self.packets > 0
            && (self.transmitters_per_source == 0 || self.receivers_per_dest == 0)
            && self.link_prob <= 0.0
        {
            return bad("no transmitters or receivers and no fixed links: nothing is routable");
        }
        for p in [self.edge_prob, self.link_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        for (lo, hi) in [self.edge_delay, self.attach_delay, self.link_delay] {
            if lo > hi {
                return bad("delay range has min > max");
            }
        }
        if self.edge_delay.0 < 1 {
            return bad("edge delays must be at least 1");
        }
        if self.release_span == 0 {
            return bad("release span must be at least 1");
        }
        if self.max_size == 0 {
            return bad("max size must be at least 1");
        }
        match self.weights {
            WeightDist::Integer { max: 0 } => return bad("weight max must be at least 1"),
            WeightDist::Fraction { max_num, max_den } if max_num == 0 || max_den == 0 => {
                return bad("weight bounds must be at least 1")
            }
            _ => {}
        }
        if !(self.skew >= 0.0 && self.skew.is_finite()) {
            return bad("skew must be finite and nonnegative");
        }
        if self.model == Model::BurstyOnOff && self.burst_on == 0 {
            return bad("burst on-length must be at least 1");
        }
        Ok(())
    }

    /// Maps the `k`-th active step to wall-clock time.
    fn active_step(&self, k: u64) -> u64 {
        match self.model {
            Model::BurstyOnOff => {
                let period = self.burst_on + self.burst_off;
                (k / self.burst_on) * period + k % self.burst_on
            }
            _ => k,
        }
    }
}

/// A packet before the unit-size reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct SizedPacket<W> {
    pub name: String,
    pub source: NodeId,
    pub dest: NodeId,
    pub release: u64,
    pub weight: W,
    pub size: W,
}

/// Replaces a packet of size `s` and weight `w` by `s` unit packets of
/// weight `w/s` named `<name>.1 .. <name>.s`. Size-1 packets are kept as is.
pub fn split_to_unit<W: Scalar>(
    packets: &[SizedPacket<W>],
) -> Result<Vec<SizedPacket<W>>, GenerateError> {
    let mut out = Vec::new();
    for p in packets {
        let s = p.size.ceil_int();
        if s < 1 || W::from_int(s) != p.size {
            return Err(GenerateError::BadSize(p.name.clone()));
        }
        if s == 1 {
            out.push(p.clone());
            continue;
        }
        let w = p.weight.clone() / p.size.clone();
        for k in 1..=s {
            out.push(SizedPacket {
                name: format!("{}.{k}", p.name),
                weight: w.clone(),
                size: W::one(),
                ..p.clone()
            });
        }
    }
    Ok(out)
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (u64, u64)) -> u64 {
    rng.random_range(lo..=hi)
}

pub fn generate(config: &GeneratorConfig) -> Result<Instance<Rational>, GenerateError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut t = Topology::new();
    let sources: Vec<NodeId> = (1..=config.sources)
        .map(|i| t.add_node(format!("s{i}"), Layer::Source))
        .collect();
    let dests: Vec<NodeId> = (1..=config.destinations)
        .map(|i| t.add_node(format!("d{i}"), Layer::Destination))
        .collect();
    let mut txs = Vec::new();
    for &s in &sources {
        for _ in 0..config.transmitters_per_source {
            let id = t.add_node(format!("t{}", txs.len() + 1), Layer::Transmitter);
            t.attach(id, s, draw(&mut rng, config.attach_delay));
            txs.push(id);
        }
    }
    let mut rxs = Vec::new();
    for &d in &dests {
        for _ in 0..config.receivers_per_dest {
            let id = t.add_node(format!("r{}", rxs.len() + 1), Layer::Receiver);
            t.attach(id, d, draw(&mut rng, config.attach_delay));
            rxs.push(id);
        }
    }
    for &tx in &txs {
        for &rx in &rxs {
            if rng.random_bool(config.edge_prob) {
                t.add_edge(tx, rx, draw(&mut rng, config.edge_delay));
            }
        }
    }
    for &s in &sources {
        for &d in &dests {
            if rng.random_bool(config.link_prob) {
                t.add_link(s, d, draw(&mut rng, config.link_delay));
            }
        }
    }

    let routable = |t: &Topology| -> Vec<(NodeId, NodeId)> {
        let mut v = Vec::new();
        for &s in &sources {
            for &d in &dests {
                if t.link_delay(s, d).is_some() || !t.candidate_edges(s, d).is_empty() {
                    v.push((s, d));
                }
            }
        }
        v
    };
    let mut pairs = routable(&t);
    if pairs.is_empty() && config.packets > 0 {
        // Guarantee one route so every packet can be delivered.
        match (txs.first(), rxs.first()) {
            (Some(&tx), Some(&rx)) => {
                t.add_edge(tx, rx, config.edge_delay.0);
            }
            _ => t.add_link(sources[0], dests[0], config.link_delay.0),
        }
        pairs = routable(&t);
    }

    // Popularity ranks are a seeded permutation of the routable pairs.
    let mut ranked = pairs.clone();
    for i in (1..ranked.len()).rev() {
        ranked.swap(i, rng.random_range(0..=i));
    }
    let zipf = if config.model == Model::ZipfSkewed && !ranked.is_empty() {
        Some(
            Zipf::new(ranked.len() as f64, config.skew)
                .map_err(|e| GenerateError::Config(e.to_string()))?,
        )
    } else {
        None
    };

    let mut sized = Vec::with_capacity(config.packets);
    for _ in 0..config.packets {
        let (s, d) = match &zipf {
            Some(z) => ranked[z.sample(&mut rng) as usize - 1],
            None => pairs[rng.random_range(0..pairs.len())],
        };
        let release = config.active_step(rng.random_range(0..config.release_span));
        let weight = match config.weights {
            WeightDist::Unit => Rational::from_int(1),
            WeightDist::Integer { max } => Rational::from_int(rng.random_range(1..=max) as i64),
            WeightDist::Fraction { max_num, max_den } => Rational::ratio(
                rng.random_range(1..=max_num) as i64,
                rng.random_range(1..=max_den) as i64,
            ),
        };
        let size = rng.random_range(1..=config.max_size);
        sized.push(SizedPacket {
            name: String::new(),
            source: s,
            dest: d,
            release,
            weight,
            size: Rational::from_int(size as i64),
        });
    }
    sized.sort_by_key(|p| p.release);
    for (i, p) in sized.iter_mut().enumerate() {
        p.name = format!("p{}", i + 1);
    }
    let mut inst = Instance::new(t);
    for p in split_to_unit(&sized)? {
        inst.add_packet(p.name, p.source, p.dest, p.release, p.weight);
    }
    Ok(inst)
}

/// Shape of the randomized certification corpus: at most 6 transmitters and
/// 6 receivers, delays at most 3, and `1..=max_packets` packets.
pub fn corpus_config(seed: u64, max_packets: usize) -> GeneratorConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let sources = rng.random_range(1..=3);
    let destinations = rng.random_range(1..=3);
    let model = match rng.random_range(0..3) {
        0 => Model::Uniform,
        1 => Model::ZipfSkewed,
        _ => Model::BurstyOnOff,
    };
    GeneratorConfig {
        model,
        sources,
        destinations,
        transmitters_per_source: rng.random_range(1..=6 / sources),
        receivers_per_dest: rng.random_range(1..=6 / destinations),
        packets: rng.random_range(1..=max_packets),
        edge_prob: rng.random_range(0.3..=1.0),
        link_prob: rng.random_range(0.0..=0.6),
        edge_delay: (1, rng.random_range(1..=3)),
        attach_delay: (0, rng.random_range(0..=3)),
        link_delay: (0, 3),
        release_span: rng.random_range(1..=12),
        weights: if rng.random_bool(0.5) {
            WeightDist::Integer { max: 5 }
        } else {
            WeightDist::Fraction {
                max_num: 7,
                max_den: 4,
            }
        },
        max_size: 1,
        skew: rng.random_range(0.0..=2.0),
        burst_on: rng.random_range(1..=3),
        burst_off: rng.random_range(0..=3),
        seed,
    }
}

/// Instances within the oracle's reach: unit edge delays and at most
/// `max_packets` packets.
pub fn tiny_config(seed: u64, max_packets: usize) -> GeneratorConfig {
    let mut c = corpus_config(seed, max_packets);
    c.edge_delay = (1, 1);
    c.transmitters_per_source = c.transmitters_per_source.min(2);
    c.receivers_per_dest = c.receivers_per_dest.min(2);
    c.release_span = c.release_span.min(5);
    c
}

/// Packet counts per (source, destination) pair.
pub fn pair_frequencies<W: Scalar>(instance: &Instance<W>) -> BTreeMap<(NodeId, NodeId), usize> {
    let mut m = BTreeMap::new();
    for p in instance.packets() {
        *m.entry((p.source, p.dest)).or_insert(0) += 1;
    }
    m
}
