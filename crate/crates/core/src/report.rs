//! CSV row builders. Every rational column `x` is followed by `x_dec`, a
//! six-digit decimal rendering for plotting.

use crate::dispatcher::Route;
use crate::dual::Certification;
use crate::engine::RunLog;
use crate::metrics::{packet_latencies, MetricsError};
use crate::model::{EdgeRef, Topology};
use crate::num::Scalar;
use crate::oracle::{OracleChoice, OracleResult};

pub type Row = Vec<String>;

pub fn exact<W: Scalar>(x: &W) -> String {
    x.exact_string()
}

pub fn decimal<W: Scalar>(x: &W) -> String {
    format!("{:.6}", x.to_f64())
}

fn both<W: Scalar>(row: &mut Row, x: Option<&W>) {
    match x {
        Some(x) => {
            row.push(exact(x));
            row.push(decimal(x));
        }
        None => {
            row.push(String::new());
            row.push(String::new());
        }
    }
}

pub fn edge_name(t: &Topology, e: EdgeRef) -> String {
    format!("{}-{}", t.name(e.transmitter), t.name(e.receiver))
}

pub const PACKET_HEADER: [&str; 9] = [
    "packet_id",
    "route",
    "edge",
    "alpha",
    "alpha_dec",
    "release",
    "completion",
    "weighted_latency",
    "weighted_latency_dec",
];

/// One row per packet, in input order.
pub fn packet_rows<W: Scalar>(log: &RunLog<W>) -> Result<Vec<Row>, MetricsError> {
    let lat = packet_latencies(log)?;
    let t = &log.instance.topology;
    let mut rows = Vec::new();
    for p in log.instance.packets() {
        let a = &log.assignments[&p.id];
        let (route, edge) = match &a.route {
            Route::FixedLink { .. } => ("fixed", String::new()),
            Route::Reconfig { edge, .. } => ("reconfig", edge_name(t, *edge)),
        };
        let mut row = vec![p.name.clone(), route.to_string(), edge];
        both(&mut row, Some(&a.alpha));
        row.push(p.release.to_string());
        row.push(log.completion(p.id).map(|c| c.to_string()).unwrap_or_default());
        both(&mut row, Some(&lat[&p.id]));
        rows.push(row);
    }
    Ok(rows)
}

pub const RUNLOG_HEADER: [&str; 5] = ["step", "event", "packet_id", "chunk", "detail"];

/// Event log: `fixed` sends (detail = delivery step), `send` (detail =
/// edge) and `blocked` (detail = blocking chunk), ordered by step.
pub fn runlog_rows<W: Scalar>(log: &RunLog<W>) -> Vec<Row> {
    let inst = &log.instance;
    let t = &inst.topology;
    let chunk = |k: crate::model::ChunkKey| format!("{}#{}", inst.packet(k.packet).name, k.index);
    let mut rows: Vec<(u64, u8, Row)> = Vec::new();
    for f in &log.fixed_sends {
        rows.push((
            f.departure,
            0,
            vec![
                f.departure.to_string(),
                "fixed".into(),
                inst.packet(f.packet).name.clone(),
                String::new(),
                f.delivery.to_string(),
            ],
        ));
    }
    for s in &log.steps {
        for c in &s.matched.entries {
            rows.push((
                s.time,
                1,
                vec![
                    s.time.to_string(),
                    "send".into(),
                    inst.packet(c.packet).name.clone(),
                    chunk(c.key()),
                    edge_name(t, c.edge),
                ],
            ));
        }
        for b in &s.blocked {
            rows.push((
                s.time,
                2,
                vec![
                    s.time.to_string(),
                    "blocked".into(),
                    inst.packet(b.blocked.packet).name.clone(),
                    chunk(b.blocked),
                    chunk(b.blocker),
                ],
            ));
        }
    }
    // Stable: fixed sends keep their dispatch order within a step.
    rows.sort_by_key(|(time, kind, _)| (*time, *kind));
    rows.into_iter().map(|(_, _, r)| r).collect()
}

pub const CERT_HEADER: [&str; 8] = [
    "check",
    "constraints_checked",
    "violations",
    "lhs_max",
    "lhs_max_dec",
    "rhs_min",
    "rhs_min_dec",
    "status",
];

pub fn certification_rows<W: Scalar>(cert: &Certification<W>) -> Vec<Row> {
    cert.rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.check.to_string(),
                r.constraints_checked.to_string(),
                r.violations.to_string(),
            ];
            both(&mut row, r.lhs_max.as_ref());
            both(&mut row, r.rhs_min.as_ref());
            row.push(if r.ok() { "ok" } else { "FAIL" }.to_string());
            row
        })
        .collect()
}

pub const ORACLE_HEADER: [&str; 7] = [
    "kind",
    "packet_id",
    "route",
    "edge",
    "step",
    "value",
    "value_dec",
];

/// A `cost` row, an `explored_states` row, then one `send` row per packet
/// (value = the packet's weighted latency).
pub fn oracle_rows<W: Scalar>(res: &OracleResult<W>) -> Vec<Row> {
    let inst = &res.log.instance;
    let t = &inst.topology;
    let mut rows = Vec::new();
    let mut cost = vec!["cost".into(), String::new(), String::new(), String::new(), String::new()];
    both(&mut cost, Some(&res.cost));
    rows.push(cost);
    rows.push(vec![
        "explored_states".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        res.explored_states.to_string(),
        res.explored_states.to_string(),
    ]);
    for &(step, id, choice) in &res.sends {
        let (route, edge) = match choice {
            OracleChoice::Fixed => ("fixed", String::new()),
            OracleChoice::Edge(e) => ("reconfig", edge_name(t, e)),
        };
        let mut row = vec![
            "send".into(),
            inst.packet(id).name.clone(),
            route.into(),
            edge,
            step.to_string(),
        ];
        both(&mut row, Some(&res.log.assignments[&id].alpha));
        rows.push(row);
    }
    rows
}

/// Inputs of one comparison row.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison<W> {
    pub instance: String,
    pub epsilon: W,
    pub alg_cost: W,
    pub dual_objective: W,
    pub dual_lower_bound: W,
    pub oracle_cost: Option<W>,
    /// `(policy name, cost)` for each baseline other than ALG.
    pub baselines: Vec<(String, W)>,
}

impl<W: Scalar> Comparison<W> {
    pub fn header(&self) -> Row {
        let mut h: Row = vec!["instance".into()];
        let mut pair = |name: &str| {
            h.push(name.to_string());
            h.push(format!("{name}_dec"));
        };
        for name in ["epsilon", "alg_cost", "dual_objective", "dual_lower_bound", "oracle_cost"] {
            pair(name);
        }
        for (policy, _) in &self.baselines {
            pair(&format!("{}_cost", policy.replace('-', "_")));
        }
        pair("alg_oracle_ratio");
        h
    }

    pub fn row(&self) -> Row {
        let mut r: Row = vec![self.instance.clone()];
        for x in [
            Some(&self.epsilon),
            Some(&self.alg_cost),
            Some(&self.dual_objective),
            Some(&self.dual_lower_bound),
            self.oracle_cost.as_ref(),
        ] {
            both(&mut r, x);
        }
        for (_, c) in &self.baselines {
            both(&mut r, Some(c));
        }
        let ratio = self
            .oracle_cost
            .as_ref()
            .filter(|o| !o.is_zero())
            .map(|o| self.alg_cost.clone() / o.clone());
        both(&mut r, ratio.as_ref());
        r
    }
}
