use hybrid_sched::dispatcher::{ForcedDispatcher, ForcedRoute};
use hybrid_sched::engine::{build_stable_matching, run, run_with, ChunkPriority};
use hybrid_sched::format::parse_instance;
use hybrid_sched::metrics::{run_cost, step_accrual_cost};
use hybrid_sched::model::ChunkKey;
use hybrid_sched::oracle::{brute_force_opt, OracleLimits};
use hybrid_sched::{fixtures, Chunk, EdgeRef, Instance, PacketId, Rational, Scalar};

fn edge(inst: &Instance, t: &str, r: &str) -> EdgeRef {
    let topo = &inst.topology;
    EdgeRef::new(topo.node_id(t).unwrap(), topo.node_id(r).unwrap())
}

#[test]
fn fig1_table_routing_costs_nine() {
    let inst = parse_instance(fixtures::FIG1).unwrap();
    let routes = ForcedDispatcher::new([
        (PacketId(0), ForcedRoute::Edge(edge(&inst, "t1", "r1"))),
        (PacketId(1), ForcedRoute::Edge(edge(&inst, "t1", "r2"))),
        (PacketId(2), ForcedRoute::Edge(edge(&inst, "t3", "r3"))),
        (PacketId(3), ForcedRoute::Edge(edge(&inst, "t3", "r3"))),
        (PacketId(4), ForcedRoute::Fixed),
    ]);
    let log = run_with(&inst, routes, ChunkPriority::WeightFirst).unwrap();
    assert_eq!(run_cost(&log).unwrap(), Rational::from_int(9));
    assert_eq!(step_accrual_cost(&log).unwrap(), Rational::from_int(9));
}

#[test]
fn fig1_optimum_is_seven() {
    let inst = parse_instance(fixtures::FIG1).unwrap();
    let res = brute_force_opt(&inst, OracleLimits::default()).unwrap();
    assert_eq!(res.cost, Rational::from_int(7));
    let alg = run(&inst).unwrap();
    assert!(res.cost <= run_cost(&alg).unwrap());
}

fn matching_of(inst: &Instance, routes: &[(usize, &str, &str)]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let pending: Vec<Chunk> = routes
        .iter()
        .flat_map(|&(p, t, r)| hybrid_sched::model::Chunk::split(inst.packet(PacketId(p)), edge(inst, t, r), 1))
        .collect();
    let (m, blocked) = build_stable_matching(&pending, &inst.topology, ChunkPriority::WeightFirst).unwrap();
    let mut matched: Vec<usize> = m.entries.iter().map(|c| c.packet.0).collect();
    matched.sort_unstable();
    let pid = |k: ChunkKey| k.packet.0;
    let blocked = blocked.iter().map(|b| (pid(b.blocked), pid(b.blocker))).collect();
    (matched, blocked)
}

#[test]
fn fig2_matchings_and_blockings() {
    let pi = fixtures::fig2_pi();
    let (m, b) = matching_of(&pi, &[(0, "t1", "r1"), (1, "t1", "r2"), (2, "t2", "r2")]);
    assert_eq!(m, vec![0, 2]);
    assert_eq!(b, vec![(1, 2)]);

    let pi2 = fixtures::fig2_pi_prime();
    let (m, mut b) = matching_of(
        &pi2,
        &[(0, "t1", "r1"), (1, "t1", "r2"), (2, "t2", "r2"), (3, "t2", "r3")],
    );
    b.sort_unstable();
    assert_eq!(m, vec![1, 3]);
    assert_eq!(b, vec![(0, 1), (2, 3)]);
}
