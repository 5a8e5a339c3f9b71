//! Integration scenarios across modules: run-level edge cases, suite
//! bookkeeping, audit replay, gossip propagation bounds, and stale chain
//! views under partition.

use std::sync::Arc;

use swarmfl::byzantine::ByzantineKind;
use swarmfl::chain::{sealer_permutation, Block, ChainNode, ChainParams, TxKind};
use swarmfl::contract::{ContractParams, ContractState};
use swarmfl::harness::{self, ExperimentConfig, SuiteName};
use swarmfl::learner::WeightVector;
use swarmfl::netsim::{exchange, ConnectivityGraph};

fn short_config(duration: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.world.duration = duration;
    cfg.validation_samples = 60;
    cfg.validation_duration = 100.0;
    cfg
}

#[test]
fn zero_duration_run_emits_single_terminal_row() {
    let cfg = short_config(0.0);
    let output = harness::run(&cfg, 5).unwrap();
    assert_eq!(output.metrics.len(), 1);
    let row = &output.metrics[0];
    assert_eq!(row.round, 0);
    assert_eq!(row.aggregations, 0);
    assert_eq!(row.sim_time, 0.0);
    assert!(output.audit.all_ok());
}

#[test]
fn byzantine_run_conserves_tokens_across_groups() {
    let mut cfg = short_config(400.0);
    cfg.byzantine_kind = ByzantineKind::Smart;
    cfg.byzantine_count = 2;
    let output = harness::run(&cfg, 9).unwrap();
    let terminal = output.metrics.last().unwrap();
    let honest_count = (15 - 2) as f64;
    let byz_count = 2.0;
    let pool = output.final_state.pool;
    let total =
        terminal.tokens_honest * honest_count + terminal.tokens_byz * byz_count + pool;
    assert!(
        total.abs() < 1e-6,
        "group gains plus pool residual must cancel, got {total}"
    );
    assert!(output.audit.all_ok());
}

#[test]
fn suite_writes_run_dirs_and_deterministic_summary() {
    let dir = tempfile::tempdir().unwrap();
    let base = short_config(200.0);
    let seeds = [4u64];
    let summary_path =
        harness::experiment_suite(SuiteName::Exp1, Some(&seeds), &base, dir.path()).unwrap();
    let summary = std::fs::read_to_string(&summary_path).unwrap();
    // Six configurations, one row each plus the header.
    assert_eq!(summary.lines().count(), 7);
    let labels = [
        "expiration-250",
        "expiration-500",
        "expiration-750",
        "expiration-1000",
        "expiration-1250",
        "faulty-1-nosecurity",
    ];
    for label in labels {
        let run_dir = dir.path().join(label).join("seed-4");
        for file in ["run.toml", "metrics.csv", "blocks.jsonl", "events.jsonl"] {
            assert!(run_dir.join(file).exists(), "{label} missing {file}");
        }
    }
    // Re-running the suite reproduces the summary byte for byte.
    let dir2 = tempfile::tempdir().unwrap();
    let summary_path2 =
        harness::experiment_suite(SuiteName::Exp1, Some(&seeds), &base, dir2.path()).unwrap();
    let summary2 = std::fs::read_to_string(&summary_path2).unwrap();
    assert_eq!(summary, summary2);
}

#[test]
fn audit_replays_a_run_directory_clean() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_config(300.0);
    cfg.byzantine_kind = ByzantineKind::Faulty;
    cfg.byzantine_count = 1;
    let output = harness::run(&cfg, 2).unwrap();
    harness::write_run_dir(dir.path(), &cfg, &output).unwrap();
    let checks = harness::audit_run(dir.path()).unwrap();
    assert!(!checks.is_empty());
    for (label, ok) in &checks {
        assert!(ok, "audit check failed: {label}");
    }
}

fn gossip_fixture(n: usize) -> Vec<ChainNode> {
    let params = ChainParams {
        n_robots: n,
        model_size: 4,
        block_period_ticks: 100,
    };
    let genesis_state = Arc::new(ContractState::genesis(
        ContractParams::standard(n, 4, true),
        WeightVector::zeros(4),
    ));
    let genesis = Block::genesis();
    let permutation = Arc::new(sealer_permutation(1, n));
    (0..n as u16)
        .map(|id| {
            ChainNode::new(
                id,
                params.clone(),
                permutation.clone(),
                genesis.clone(),
                genesis_state.clone(),
            )
        })
        .collect()
}

fn run_ticks(
    nodes: &mut [ChainNode],
    graph: &ConnectivityGraph,
    inboxes: &mut Vec<Vec<(u16, swarmfl::chain::ChainMessage)>>,
    from: u64,
    count: u64,
    seal: bool,
) -> u64 {
    let mut tick = from;
    for _ in 0..count {
        tick += 1;
        let mut outboxes = Vec::with_capacity(nodes.len());
        for (node, inbox) in nodes.iter_mut().zip(inboxes.iter_mut()) {
            outboxes.push(node.step(tick, std::mem::take(inbox), seal));
        }
        *inboxes = exchange(graph, outboxes, |_, _, _| {});
    }
    tick
}

#[test]
fn new_block_floods_a_full_network_within_three_ticks() {
    let n = 15;
    let mut nodes = gossip_fixture(n);
    let full = ConnectivityGraph::complete(n);
    let mut inboxes = vec![Vec::new(); n];
    // Walk to one tick before the in-turn sealer becomes eligible.
    let mut tick = run_ticks(&mut nodes, &full, &mut inboxes, 0, 99, true);
    assert!(nodes.iter().all(|node| node.head_height() == 0));
    // Sealing tick, plus the flood.
    let mut converged_at = None;
    for extra in 0..4u64 {
        tick = run_ticks(&mut nodes, &full, &mut inboxes, tick, 1, true);
        let head = nodes[0].head();
        if nodes.iter().all(|node| node.head() == head) && nodes[0].head_height() == 1 {
            converged_at = Some(extra);
            break;
        }
    }
    let took = converged_at.expect("heads must converge");
    assert!(took <= 3, "flood took more than 3 ticks: {took}");
}

#[test]
fn new_block_floods_multi_hop_within_diameter_ticks() {
    let n = 15;
    let mut nodes = gossip_fixture(n);
    // A line: worst-case diameter of 14 hops.
    let edges: Vec<(u16, u16)> = (0..n as u16 - 1).map(|i| (i, i + 1)).collect();
    let line = ConnectivityGraph::from_edges(n, &edges);
    let diameter = line.diameter();
    assert_eq!(diameter, 14);
    let mut inboxes = vec![Vec::new(); n];
    let mut tick = run_ticks(&mut nodes, &line, &mut inboxes, 0, 100, true);
    // One block must now exist at the in-turn sealer; give the flood
    // exactly `diameter` further ticks to reach everyone.
    tick = run_ticks(&mut nodes, &line, &mut inboxes, tick, diameter as u64, false);
    let _ = tick;
    let head = nodes[0].head();
    assert_eq!(nodes[0].head_height(), 1);
    assert!(
        nodes.iter().all(|node| node.head() == head),
        "flood exceeded the diameter bound"
    );
}

#[test]
fn lagging_node_reads_an_older_round() {
    let n = 15;
    let mut nodes = gossip_fixture(n);
    // Node 14 is isolated; everyone else is fully connected.
    let mut edges = Vec::new();
    for a in 0..n as u16 - 1 {
        for b in a + 1..n as u16 - 1 {
            edges.push((a, b));
        }
    }
    let partitioned = ConnectivityGraph::from_edges(n, &edges);
    // Quorum-filling submissions from robots 0..6.
    for robot in 0..7usize {
        nodes[robot].create_transaction(TxKind::SubmitModel {
            weights: vec![0.001 * (robot as f32 + 1.0); 4],
            n_samples: 1,
        });
    }
    let mut inboxes = vec![Vec::new(); n];
    let tick = run_ticks(&mut nodes, &partitioned, &mut inboxes, 0, 320, true);

    let (round_connected, _) = nodes[0].state().get_model();
    let (round_lagging, _) = nodes[14].state().get_model();
    assert_eq!(round_connected, 1, "quorum must have aggregated");
    assert_eq!(round_lagging, 0, "isolated node must still see genesis");

    // Reconnecting lets the lagging node catch up within a block period.
    let full = ConnectivityGraph::complete(n);
    run_ticks(&mut nodes, &full, &mut inboxes, tick, 100, false);
    let head = nodes[0].head();
    assert!(nodes.iter().all(|node| node.head() == head));
    assert_eq!(nodes[14].state().get_model().0, 1);
}

#[test]
fn faulty_submissions_are_rejected_with_overwhelming_frequency() {
    // Uniform-noise payloads sit ~0.25 mean-absolute-deviation from any
    // trained model, far beyond the 0.05 threshold; audit the event log.
    let mut cfg = short_config(1000.0);
    cfg.byzantine_kind = ByzantineKind::Faulty;
    cfg.byzantine_count = 3;
    let output = harness::run(&cfg, 6).unwrap();
    let mut round = 0u64;
    let mut byz_after_round3 = 0u64;
    let mut byz_rejected = 0u64;
    for entry in &output.event_log {
        if entry["event"] == "aggregated" {
            round = entry["round"].as_u64().unwrap();
            continue;
        }
        let robot = entry["robot"].as_u64().unwrap();
        if robot < 3 && round >= 3 {
            byz_after_round3 += 1;
            if entry["event"] == "rejected" && entry["reason"] == "outlier" {
                byz_rejected += 1;
            }
        }
    }
    assert!(byz_after_round3 > 0, "byzantine robots never submitted");
    let rate = byz_rejected as f64 / byz_after_round3 as f64;
    assert!(
        rate > 0.99,
        "outlier rejection rate {rate} over {byz_after_round3} submissions"
    );
}

#[test]
fn rejected_config_reports_before_start() {
    let mut cfg = short_config(100.0);
    cfg.world.tick = 0.3; // does not divide 1 s
    assert!(harness::run(&cfg, 1).is_err());
}
