//! Dual solution fitted to a run, the latency charging scheme, and runtime
//! checks of each inequality in the competitive bound.
//!
//! Given a run and `ε > 0`:
//!
//! * `α_p` is the worst-case impact the dispatcher computed when `p` arrived
//!   (`w_p * link_delay` for fixed-routed packets);
//! * `β_{t,τ}` (`β_{r,τ}`) is the total weight of chunks on edges at
//!   transmitter `t` (receiver `r`) that are active at `τ`, i.e. released and
//!   not yet delivered;
//! * the objective is `Σ α - (Σ β_t + Σ β_r) / (2 + ε)`.
//!
//! The checks below verify, on the concrete run, that the run's cost is
//! within `(2+ε)/ε` of the objective and that halving every variable gives a
//! feasible solution of the speed-limited dual, so `objective / 2` is a lower
//! bound on the speed-limited optimum.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dispatcher::{compute_impact, PendingView, Route};
use crate::engine::{verify_stability, RunLog};
use crate::metrics::{
    check_primal_feasible, dilate_run, primal_cost, reconfig_latency, run_cost, MetricsError,
};
use crate::model::{Chunk, ChunkKey, EdgeRef, NodeId, PacketId};
use crate::num::{max_of, min_of, sum, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DualError {
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("chunk {chunk} waited at step {time} with no recorded blocker")]
    MissingBlocker { chunk: ChunkKey, time: u64 },
    #[error("chunk {0} was never transmitted")]
    Untransmitted(ChunkKey),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution<W> {
    pub alpha: BTreeMap<PacketId, W>,
    /// Sparse: only active (transmitter, step) pairs are stored.
    pub beta_t: BTreeMap<(NodeId, u64), W>,
    pub beta_r: BTreeMap<(NodeId, u64), W>,
    pub epsilon: W,
    pub objective: W,
}

impl<W: Scalar> DualSolution<W> {
    pub fn alpha_sum(&self) -> W {
        sum(self.alpha.values().cloned())
    }

    pub fn beta_t_sum(&self) -> W {
        sum(self.beta_t.values().cloned())
    }

    pub fn beta_r_sum(&self) -> W {
        sum(self.beta_r.values().cloned())
    }

    /// Objective for another `ε` with the same variables.
    pub fn objective_at(&self, epsilon: &W) -> W {
        self.alpha_sum()
            - (self.beta_t_sum() + self.beta_r_sum()) / (W::from_int(2) + epsilon.clone())
    }

    /// Value of the halved (feasible) solution: a lower bound on the
    /// speed-limited optimum.
    pub fn lower_bound(&self) -> W {
        self.objective.clone() / W::from_int(2)
    }

    pub fn beta_t_at(&self, t: NodeId, time: u64) -> W {
        self.beta_t.get(&(t, time)).cloned().unwrap_or_else(W::zero)
    }

    pub fn beta_r_at(&self, r: NodeId, time: u64) -> W {
        self.beta_r.get(&(r, time)).cloned().unwrap_or_else(W::zero)
    }
}

fn accumulate<W: Scalar, K: Ord>(m: &mut BTreeMap<K, W>, k: K, v: &W) {
    let slot = m.entry(k).or_insert_with(W::zero);
    *slot = slot.clone() + v.clone();
}

pub fn build_dual<W: Scalar>(log: &RunLog<W>, epsilon: W) -> Result<DualSolution<W>, DualError> {
    if epsilon <= W::zero() {
        return Err(DualError::NonPositiveEpsilon);
    }
    let alpha = log
        .assignments
        .iter()
        .map(|(&p, a)| (p, a.alpha.clone()))
        .collect();
    let mut beta_t = BTreeMap::new();
    let mut beta_r = BTreeMap::new();
    for c in log.chunks() {
        let delivered = *log
            .deliveries
            .get(&c.key())
            .ok_or(MetricsError::Undelivered(c.key()))?;
        for time in c.release..delivered {
            accumulate(&mut beta_t, (c.edge.transmitter, time), &c.weight);
            accumulate(&mut beta_r, (c.edge.receiver, time), &c.weight);
        }
    }
    let mut dual = DualSolution {
        alpha,
        beta_t,
        beta_r,
        epsilon: epsilon.clone(),
        objective: W::zero(),
    };
    dual.objective = dual.objective_at(&epsilon);
    Ok(dual)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaIdentityReport<W> {
    pub beta_t_sum: W,
    pub beta_r_sum: W,
    pub reconfig_latency: W,
    pub run_cost: W,
}

impl<W: Scalar> BetaIdentityReport<W> {
    /// `Σ β_t = Σ β_r = reconfigurable latency <= run cost`, exactly.
    pub fn holds(&self) -> bool {
        self.beta_t_sum == self.reconfig_latency
            && self.beta_r_sum == self.reconfig_latency
            && self.reconfig_latency <= self.run_cost
    }
}

pub fn check_beta_identity<W: Scalar>(
    log: &RunLog<W>,
    dual: &DualSolution<W>,
) -> Result<BetaIdentityReport<W>, DualError> {
    Ok(BetaIdentityReport {
        beta_t_sum: dual.beta_t_sum(),
        beta_r_sum: dual.beta_r_sum(),
        reconfig_latency: reconfig_latency(log)?,
        run_cost: run_cost(log)?,
    })
}

/// Latency charged to one packet, by origin.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketCharges<W> {
    /// Whole latency of a fixed-routed packet.
    pub fixed: W,
    /// Transmission and attach-propagation rounds of the packet's own chunks.
    pub self_rounds: W,
    /// Rounds a chunk waited behind a sibling chunk.
    pub sibling: W,
    /// Rounds a chunk of this packet waited behind an earlier packet.
    pub blocked_by_earlier: W,
    /// Rounds a chunk of an earlier packet waited behind this packet.
    pub blocks_earlier: W,
}

impl<W: Scalar> PacketCharges<W> {
    fn zero() -> Self {
        PacketCharges {
            fixed: W::zero(),
            self_rounds: W::zero(),
            sibling: W::zero(),
            blocked_by_earlier: W::zero(),
            blocks_earlier: W::zero(),
        }
    }

    pub fn total(&self) -> W {
        self.fixed.clone()
            + self.self_rounds.clone()
            + self.sibling.clone()
            + self.blocked_by_earlier.clone()
            + self.blocks_earlier.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChargeLedger<W> {
    pub charges: BTreeMap<PacketId, PacketCharges<W>>,
}

impl<W: Scalar> ChargeLedger<W> {
    pub fn charge(&self, p: PacketId) -> W {
        self.charges.get(&p).map_or_else(W::zero, |c| c.total())
    }

    pub fn total(&self) -> W {
        sum(self.charges.values().map(|c| c.total()))
    }
}

/// Distributes every unit of weighted latency of the run to one packet.
///
/// A chunk `c` of `p` is charged `w_c` per active round: to `p` while it is
/// transmitted or propagating or waiting behind a sibling; when it waits
/// behind a chunk of another packet `p'`, to whichever of `p`, `p'` arrived
/// later. Fixed-routed packets are charged their own latency.
pub fn build_charges<W: Scalar>(log: &RunLog<W>) -> Result<ChargeLedger<W>, DualError> {
    let instance = &log.instance;
    let mut blocker_of: BTreeMap<(ChunkKey, u64), ChunkKey> = BTreeMap::new();
    for s in &log.steps {
        for b in &s.blocked {
            blocker_of.insert((b.blocked, s.time), b.blocker);
        }
    }
    let mut charges: BTreeMap<PacketId, PacketCharges<W>> = instance
        .packets()
        .iter()
        .map(|p| (p.id, PacketCharges::zero()))
        .collect();
    let add = |charges: &mut BTreeMap<PacketId, PacketCharges<W>>,
               p: PacketId,
               field: fn(&mut PacketCharges<W>) -> &mut W,
               amount: &W| {
        let slot = field(charges.get_mut(&p).expect("known packet"));
        *slot = slot.clone() + amount.clone();
    };

    for a in log.assignments.values() {
        let p = instance.packet(a.packet);
        let chunks = match &a.route {
            Route::FixedLink { .. } => {
                add(&mut charges, p.id, |c| &mut c.fixed, &a.alpha);
                continue;
            }
            Route::Reconfig { chunks, .. } => chunks,
        };
        for c in chunks {
            let sent = *log
                .transmissions
                .get(&c.key())
                .ok_or(DualError::Untransmitted(c.key()))?;
            let delivered = *log
                .deliveries
                .get(&c.key())
                .ok_or(MetricsError::Undelivered(c.key()))?;
            for time in c.release..sent {
                let blocker = *blocker_of
                    .get(&(c.key(), time))
                    .ok_or(DualError::MissingBlocker {
                        chunk: c.key(),
                        time,
                    })?;
                if blocker.packet == p.id {
                    add(&mut charges, p.id, |c| &mut c.sibling, &c.weight);
                } else {
                    let other = instance.packet(blocker.packet);
                    if other.arrival() < p.arrival() {
                        add(&mut charges, p.id, |c| &mut c.blocked_by_earlier, &c.weight);
                    } else {
                        add(&mut charges, other.id, |c| &mut c.blocks_earlier, &c.weight);
                    }
                }
            }
            let rounds = (delivered - sent) as i64;
            add(&mut charges, p.id, |c| &mut c.self_rounds, &c.weight.mul_int(rounds));
        }
    }
    Ok(ChargeLedger { charges })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaViolation<W> {
    pub packet: PacketId,
    pub charged: W,
    pub alpha: W,
}

/// `c_p <= α_p` for every packet.
pub fn check_alpha_bound<W: Scalar>(
    ledger: &ChargeLedger<W>,
    dual: &DualSolution<W>,
) -> Result<(), Vec<AlphaViolation<W>>> {
    let mut out = Vec::new();
    for (&p, alpha) in &dual.alpha {
        let charged = ledger.charge(p);
        if charged > *alpha {
            out.push(AlphaViolation {
                packet: p,
                charged,
                alpha: alpha.clone(),
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepViolation<W> {
    pub packet: PacketId,
    /// `None` for constraints on the fixed link.
    pub edge: Option<EdgeRef>,
    pub time: u64,
    pub lhs: W,
    pub rhs: W,
}

/// Outcome of checking a family of `lhs <= rhs` constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport<W> {
    pub constraints_checked: u64,
    pub violations: Vec<SweepViolation<W>>,
    pub lhs_max: Option<W>,
    pub rhs_min: Option<W>,
}

impl<W: Scalar> SweepReport<W> {
    fn new() -> Self {
        SweepReport {
            constraints_checked: 0,
            violations: Vec::new(),
            lhs_max: None,
            rhs_min: None,
        }
    }

    fn record(&mut self, packet: PacketId, edge: Option<EdgeRef>, time: u64, lhs: W, rhs: W) {
        self.constraints_checked += 1;
        if lhs > rhs {
            self.violations.push(SweepViolation {
                packet,
                edge,
                time,
                lhs: lhs.clone(),
                rhs: rhs.clone(),
            });
        }
        self.lhs_max = max_of(self.lhs_max.take(), lhs);
        self.rhs_min = min_of(self.rhs_min.take(), rhs);
    }

    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Chunks of packets dispatched before `p` that had not been transmitted when
/// `p` was processed, reconstructed from the log.
pub fn pending_before<W: Scalar>(log: &RunLog<W>, p: PacketId) -> Vec<Chunk<W>> {
    let inst = &log.instance;
    let me = inst.packet(p);
    log.chunks()
        .filter(|c| {
            inst.packet(c.packet).arrival() < me.arrival()
                && log
                    .transmissions
                    .get(&c.key())
                    .is_none_or(|&sent| sent >= me.release)
        })
        .cloned()
        .collect()
}

/// Dense per-node β values over `[0, horizon)`.
struct DenseBeta<W> {
    t: BTreeMap<NodeId, Vec<W>>,
    r: BTreeMap<NodeId, Vec<W>>,
}

impl<W: Scalar> DenseBeta<W> {
    fn new(dual: &DualSolution<W>, horizon: u64) -> Self {
        let dense = |m: &BTreeMap<(NodeId, u64), W>| {
            let mut out: BTreeMap<NodeId, Vec<W>> = BTreeMap::new();
            for (&(n, time), v) in m {
                if time < horizon {
                    out.entry(n)
                        .or_insert_with(|| vec![W::zero(); horizon as usize])[time as usize] =
                        v.clone();
                }
            }
            out
        };
        DenseBeta {
            t: dense(&dual.beta_t),
            r: dense(&dual.beta_r),
        }
    }

    /// `β_{t,τ} + β_{r,τ}`, or `None` when both are zero.
    fn pair(&self, e: EdgeRef, time: u64) -> Option<W> {
        fn get<W: Scalar>(m: &BTreeMap<NodeId, Vec<W>>, n: NodeId, time: u64) -> Option<&W> {
            m.get(&n).map(|v| &v[time as usize]).filter(|v| !v.is_zero())
        }
        match (get(&self.t, e.transmitter, time), get(&self.r, e.receiver, time)) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (Some(a), Some(b)) => Some(a.clone() + b.clone()),
        }
    }
}

/// Sweeps `Imp(p,e) - d(e) (β_{t,τ} + β_{r,τ}) <= 2 w_p (τ + D(e) - r_p)` over
/// every packet, candidate edge, and step in `[r_p, horizon)`. `Imp(p,e)` is
/// recomputed against the pending set reconstructed from the log.
pub fn check_imp_bound<W: Scalar>(log: &RunLog<W>, dual: &DualSolution<W>) -> SweepReport<W> {
    let inst = &log.instance;
    let topo = &inst.topology;
    let horizon = inst.horizon();
    let beta = DenseBeta::new(dual, horizon);
    let mut report = SweepReport::new();
    for p in inst.packets() {
        let before = pending_before(log, p.id);
        let two_w = p.weight.mul_int(2);
        for e in inst.candidate_edges(p) {
            let imp = compute_impact(topo, p, e, PendingView::new(&before))
                .expect("candidate edge")
                .total;
            let d = topo.edge_delay(e).expect("candidate edge") as i64;
            let path = topo.path_delay(e).expect("candidate edge");
            let mut rhs = two_w.mul_int(path as i64);
            for time in p.release..horizon {
                let lhs = match beta.pair(e, time) {
                    Some(b) => imp.clone() - b.mul_int(d),
                    None => imp.clone(),
                };
                report.record(p.id, Some(e), time, lhs, rhs.clone());
                rhs = rhs + two_w.clone();
            }
        }
    }
    report
}

/// Sweeps both constraint families of the dual with every variable halved:
/// `α_p/2 - d(e) (β_{t,τ}/2 + β_{r,τ}/2) <= w_p (τ + D(e) - r_p)` up to the
/// horizon and `α_p/2 <= w_p ℓ_p` on fixed links, plus the unhalved
/// `α_p <= w_p ℓ_p`.
pub fn check_halved_feasible<W: Scalar>(log: &RunLog<W>, dual: &DualSolution<W>) -> SweepReport<W> {
    let inst = &log.instance;
    let topo = &inst.topology;
    let horizon = inst.horizon();
    let beta = DenseBeta::new(dual, horizon);
    let two = W::from_int(2);
    let mut report = SweepReport::new();
    for p in inst.packets() {
        let alpha = dual.alpha.get(&p.id).cloned().unwrap_or_else(W::zero);
        let half_alpha = alpha.clone() / two.clone();
        for e in inst.candidate_edges(p) {
            let d = topo.edge_delay(e).expect("candidate edge") as i64;
            let path = topo.path_delay(e).expect("candidate edge");
            let mut rhs = p.weight.mul_int(path as i64);
            for time in p.release..horizon {
                let lhs = match beta.pair(e, time) {
                    Some(b) => half_alpha.clone() - b.mul_int(d) / two.clone(),
                    None => half_alpha.clone(),
                };
                report.record(p.id, Some(e), time, lhs, rhs.clone());
                rhs = rhs + p.weight.clone();
            }
        }
        if let Some(l) = inst.fixed_link_delay(p) {
            let link = p.weight.mul_int(l as i64);
            report.record(p.id, None, p.release, half_alpha.clone(), link.clone());
            report.record(p.id, None, p.release, alpha, link);
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioReport<W> {
    pub alg_cost: W,
    pub dual_objective: W,
    /// `(2+ε)/ε`
    pub factor: W,
    /// `objective / 2`, a lower bound on the speed-limited optimum.
    pub opt_lower_bound: W,
    /// `2 (2/ε + 1)`
    pub competitive_bound: W,
    /// `alg_cost <= factor * objective`
    pub bound_holds: bool,
}

pub fn check_ratio<W: Scalar>(
    log: &RunLog<W>,
    dual: &DualSolution<W>,
) -> Result<RatioReport<W>, DualError> {
    let eps = dual.epsilon.clone();
    let two = W::from_int(2);
    let alg_cost = run_cost(log)?;
    let factor = (two.clone() + eps.clone()) / eps.clone();
    let bound_holds = alg_cost <= factor.clone() * dual.objective.clone();
    Ok(RatioReport {
        alg_cost,
        dual_objective: dual.objective.clone(),
        factor,
        opt_lower_bound: dual.lower_bound(),
        competitive_bound: two.clone() * (two / eps + W::one()),
        bound_holds,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakDualityReport<W> {
    pub lower_bound: W,
    pub primal_cost: W,
    /// Number of violated primal constraints (0 when the witness is feasible).
    pub primal_violations: usize,
}

impl<W: Scalar> WeakDualityReport<W> {
    pub fn holds(&self) -> bool {
        self.primal_violations == 0 && self.lower_bound <= self.primal_cost
    }
}

/// Compares the halved dual value against a speed-limited primal witness
/// obtained by dilating `witness` (any complete run of the same instance).
pub fn check_weak_duality<W: Scalar>(
    dual: &DualSolution<W>,
    witness: &RunLog<W>,
) -> WeakDualityReport<W> {
    let schedule = dilate_run(witness, &dual.epsilon);
    let primal_violations = check_primal_feasible(&schedule, &witness.instance, &dual.epsilon)
        .err()
        .map_or(0, |v| v.len());
    WeakDualityReport {
        lower_bound: dual.lower_bound(),
        primal_cost: primal_cost(&schedule, &witness.instance),
        primal_violations,
    }
}

/// One line of a certification report.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow<W> {
    pub check: &'static str,
    pub constraints_checked: u64,
    pub violations: u64,
    pub lhs_max: Option<W>,
    pub rhs_min: Option<W>,
}

impl<W> CheckRow<W> {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certification<W> {
    pub dual: DualSolution<W>,
    pub rows: Vec<CheckRow<W>>,
}

impl<W> Certification<W> {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(CheckRow::ok)
    }
}

fn row<W>(check: &'static str, checked: u64, violations: u64, lhs: W, rhs: W) -> CheckRow<W> {
    CheckRow {
        check,
        constraints_checked: checked,
        violations,
        lhs_max: Some(lhs),
        rhs_min: Some(rhs),
    }
}

/// Runs every check on `log` at `ε`. The constraint sweeps and the
/// weak-duality witness are included when `all_lemmas` is set.
pub fn certify<W: Scalar>(
    log: &RunLog<W>,
    epsilon: W,
    all_lemmas: bool,
) -> Result<Certification<W>, DualError> {
    let dual = build_dual(log, epsilon)?;
    let mut rows = Vec::new();

    let stability = verify_stability(log).err().unwrap_or_default();
    let waiting: u64 = log
        .chunks()
        .map(|c| log.transmissions.get(&c.key()).map_or(0, |&s| s - c.release + 1))
        .sum::<u64>()
        + log.steps.len() as u64;
    rows.push(CheckRow {
        check: "stability",
        constraints_checked: waiting,
        violations: stability.len() as u64,
        lhs_max: None,
        rhs_min: None,
    });

    let beta = check_beta_identity(log, &dual)?;
    let bad = [
        beta.beta_t_sum != beta.reconfig_latency,
        beta.beta_r_sum != beta.reconfig_latency,
        beta.reconfig_latency > beta.run_cost,
    ];
    let lhs = if beta.beta_t_sum >= beta.beta_r_sum {
        beta.beta_t_sum.clone()
    } else {
        beta.beta_r_sum.clone()
    };
    rows.push(row(
        "beta_identity",
        3,
        bad.iter().filter(|&&b| b).count() as u64,
        lhs,
        beta.reconfig_latency.clone(),
    ));

    let ledger = build_charges(log)?;
    let charged = ledger.total();
    rows.push(row(
        "charge_conservation",
        1,
        u64::from(charged != beta.run_cost),
        charged,
        beta.run_cost.clone(),
    ));

    let alpha_violations = check_alpha_bound(&ledger, &dual).err().unwrap_or_default();
    let mut alpha_row = CheckRow {
        check: "alpha_bound",
        constraints_checked: dual.alpha.len() as u64,
        violations: alpha_violations.len() as u64,
        lhs_max: None,
        rhs_min: None,
    };
    for (&p, a) in &dual.alpha {
        alpha_row.lhs_max = max_of(alpha_row.lhs_max.take(), ledger.charge(p));
        alpha_row.rhs_min = min_of(alpha_row.rhs_min.take(), a.clone());
    }
    rows.push(alpha_row);

    if all_lemmas {
        for (name, sweep) in [
            ("imp_bound", check_imp_bound(log, &dual)),
            ("halved_dual_feasible", check_halved_feasible(log, &dual)),
        ] {
            rows.push(CheckRow {
                check: name,
                constraints_checked: sweep.constraints_checked,
                violations: sweep.violations.len() as u64,
                lhs_max: sweep.lhs_max,
                rhs_min: sweep.rhs_min,
            });
        }
    }

    let ratio = check_ratio(log, &dual)?;
    rows.push(row(
        "alg_dual_ratio",
        1,
        u64::from(!ratio.bound_holds),
        ratio.alg_cost.clone(),
        ratio.factor.clone() * ratio.dual_objective.clone(),
    ));

    if all_lemmas {
        let wd = check_weak_duality(&dual, log);
        rows.push(row(
            "weak_duality",
            1 + wd.primal_violations as u64,
            u64::from(!wd.holds()) + wd.primal_violations as u64,
            wd.lower_bound.clone(),
            wd.primal_cost.clone(),
        ));
    }

    Ok(Certification { dual, rows })
}
