//! Experiment orchestration: wires the world, network, chain, contract, and
//! learner together per tick, schedules the train-submit cycle, extracts
//! metrics from the canonical chain, and reproduces the experiment suites as
//! batch runs with CSV output.
//!
//! A run is a pure function of `(config, seed)`: repeating it yields
//! byte-identical CSV files and the same final head hash. At the end of a
//! run the harness forces a full-connectivity sync window (sealing paused)
//! so all nodes converge on one head; metrics are read from that canonical
//! chain, never from per-robot views.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arena::{LocalDataset, Recorder, WorldConfig, WorldState};
use crate::byzantine::{self, ByzantineKind};
use crate::chain::{
    apply_tx, sealer_permutation, Block, BlockHash, ChainMessage, ChainNode, ChainParams,
    Transaction, TxKind,
};
use crate::contract::{ContractEvent, ContractParams, ContractState};
use crate::learner::{self, EncodedSample, ModelConfig, TrainConfig, WeightVector};
use crate::netsim::ConnectivityGraph;
use crate::rng::{self, Domain};
use crate::{Error, Result};

pub type RobotId = u16;

/// Everything a single experiment run needs. Defaults reproduce the paper's
/// setup: 15 robots in a 5x5 m arena for 5000 s, 750 s data expiration,
/// quorum fraction 0.5, a 5-token fee, outlier threshold 0.05, a 10 s block
/// period, and a 100 s train period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Training-data expiration in seconds.
    pub expiration: f64,
    pub security: bool,
    pub byzantine_kind: ByzantineKind,
    pub byzantine_count: usize,
    pub quorum_fraction: f64,
    /// Seconds between training states.
    pub train_period: f64,
    /// Minimum seconds between blocks.
    pub block_period: f64,
    /// Write a per-delivery network log (large!).
    pub log_deliveries: bool,
    /// Validation corpus size and collection window.
    pub validation_samples: usize,
    pub validation_duration: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            expiration: 750.0,
            security: true,
            byzantine_kind: ByzantineKind::Honest,
            byzantine_count: 0,
            quorum_fraction: 0.5,
            train_period: 100.0,
            block_period: 10.0,
            log_deliveries: false,
            validation_samples: 500,
            validation_duration: 500.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.byzantine_count > self.world.n_robots {
            return Err(Error::Config(
                "byzantine_count exceeds the swarm size".into(),
            ));
        }
        if self.byzantine_count > 0 && self.byzantine_kind == ByzantineKind::Honest {
            return Err(Error::Config(
                "byzantine_count > 0 requires a non-honest byzantine_kind".into(),
            ));
        }
        self.world.ticks_of(self.train_period)?;
        self.world.ticks_of(self.block_period)?;
        self.world.ticks_of(self.expiration)?;
        self.contract_params().validate()?;
        Ok(())
    }

    pub fn contract_params(&self) -> ContractParams {
        ContractParams::with_quorum_fraction(
            self.world.n_robots,
            self.model.n_weights(),
            self.security,
            self.quorum_fraction,
        )
    }

    fn kind_of(&self, robot: RobotId) -> ByzantineKind {
        if (robot as usize) < self.byzantine_count {
            self.byzantine_kind
        } else {
            ByzantineKind::Honest
        }
    }
}

/// One metrics row: emitted at every aggregation on the canonical chain,
/// plus one terminal row at run end (whose loss is the shared model's
/// validation MSE).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub sim_time: f64,
    pub round: u64,
    pub average_loss: f64,
    pub tokens_honest: f64,
    pub tokens_byz: f64,
    pub chain_bytes: u64,
    pub aggregations: u64,
}

/// Invariants checked after every run.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditSummary {
    pub heads_converged: bool,
    pub replay_pure: bool,
    pub tokens_conserved: bool,
    pub block_period_floor: bool,
    pub nonces_contiguous: bool,
}

impl AuditSummary {
    pub fn all_ok(&self) -> bool {
        self.heads_converged
            && self.replay_pure
            && self.tokens_conserved
            && self.block_period_floor
            && self.nonces_contiguous
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub metrics: Vec<MetricsRow>,
    pub final_head: BlockHash,
    pub final_state: ContractState,
    pub byz_ids: Vec<RobotId>,
    pub genesis_bytes: u64,
    pub final_chain_bytes: u64,
    pub submit_tx_count: u64,
    pub canonical_blocks: u64,
    pub block_log: Vec<serde_json::Value>,
    pub event_log: Vec<serde_json::Value>,
    pub deliveries_csv: Option<String>,
    pub audit: AuditSummary,
}

/// Headline numbers of a run, read from the canonical chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Last aggregation row's participant-weighted validation loss
    /// (terminal shared-model loss when no aggregation happened).
    pub final_loss: f64,
    /// Validation MSE of the final shared model.
    pub shared_model_loss: f64,
    pub tokens_honest: f64,
    pub tokens_byz: f64,
    pub aggregations: u64,
    pub chain_bytes: u64,
    pub bytes_per_submission: f64,
    pub submit_tx_count: u64,
}

impl RunOutput {
    pub fn summary(&self) -> RunSummary {
        let terminal = self.metrics.last().expect("terminal row always present");
        let final_loss = if self.metrics.len() >= 2 {
            self.metrics[self.metrics.len() - 2].average_loss
        } else {
            terminal.average_loss
        };
        let bytes_per_submission = if self.submit_tx_count > 0 {
            (self.final_chain_bytes - self.genesis_bytes) as f64 / self.submit_tx_count as f64
        } else {
            0.0
        };
        RunSummary {
            final_loss,
            shared_model_loss: terminal.average_loss,
            tokens_honest: terminal.tokens_honest,
            tokens_byz: terminal.tokens_byz,
            aggregations: terminal.aggregations,
            chain_bytes: self.final_chain_bytes,
            bytes_per_submission,
            submit_tx_count: self.submit_tx_count,
        }
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(
            "sim_time,round,average_loss,tokens_honest,tokens_byz,chain_bytes,aggregations\n",
        );
        for row in &self.metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.sim_time,
                row.round,
                row.average_loss,
                row.tokens_honest,
                row.tokens_byz,
                row.chain_bytes,
                row.aggregations
            ));
        }
        out
    }
}

struct Robot {
    id: RobotId,
    kind: ByzantineKind,
    recorder: Recorder,
    dataset: LocalDataset,
    node: ChainNode,
}

/// Builds the held-out validation corpus: a data-collection-only simulation
/// with a seed derived from the run seed, truncated to a fixed sample count.
pub fn validation_corpus(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<EncodedSample>> {
    let mut world_cfg = cfg.world.clone();
    world_cfg.rng_seed = rng::mix(seed, Domain::Validation, 0);
    world_cfg.duration = cfg.validation_duration;
    let mut world = WorldState::new(world_cfg.clone())?;
    let ticks = world_cfg.duration_ticks()?;
    let tps = world_cfg.ticks_per_second();
    let points = cfg.model.sample_points();
    let mut recorders: Vec<Recorder> = (0..world_cfg.n_robots)
        .map(|_| Recorder::new(points))
        .collect();
    let mut corpus = Vec::new();
    'sim: for tick in 1..=ticks {
        world.step();
        if tick % tps != 0 {
            continue;
        }
        for robot in 0..world_cfg.n_robots {
            let sensed = world.sense_neighbors(robot as RobotId);
            let own = world.poses[robot];
            for sample in recorders[robot].record(own, &sensed, tick) {
                corpus.push(learner::encode(&cfg.model, &sample.positions));
                if corpus.len() == cfg.validation_samples {
                    break 'sim;
                }
            }
        }
    }
    if corpus.is_empty() {
        return Err(Error::Config(
            "validation window produced no trajectories".into(),
        ));
    }
    Ok(corpus)
}

/// Runs one experiment. See the module docs for the per-tick pipeline.
pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let mut world_cfg = cfg.world.clone();
    world_cfg.rng_seed = seed;
    let n = world_cfg.n_robots;
    let tick_secs = world_cfg.tick;
    let tps = world_cfg.ticks_per_second();
    let duration_ticks = world_cfg.duration_ticks()?;
    let train_period_ticks = world_cfg.ticks_of(cfg.train_period)?;
    let block_period_ticks = world_cfg.ticks_of(cfg.block_period)?;
    let expiration_ticks = world_cfg.ticks_of(cfg.expiration)?;

    let initial_weights = learner::init_weights(&cfg.model, seed);
    let contract_params = cfg.contract_params();
    let fee = contract_params.fee;
    let initial_tokens = contract_params.initial_tokens;
    let genesis_state = Arc::new(ContractState::genesis(
        contract_params,
        initial_weights,
    ));
    let genesis_block = Block::genesis();
    let genesis_bytes = genesis_block.byte_size() as u64;
    let chain_params = ChainParams {
        n_robots: n,
        model_size: cfg.model.n_weights(),
        block_period_ticks,
    };
    let permutation = Arc::new(sealer_permutation(seed, n));

    let validation = validation_corpus(cfg, seed)?;

    let mut world = WorldState::new(world_cfg.clone())?;
    let mut robots: Vec<Robot> = (0..n as RobotId)
        .map(|id| Robot {
            id,
            kind: cfg.kind_of(id),
            recorder: Recorder::new(cfg.model.sample_points()),
            dataset: LocalDataset::new(expiration_ticks),
            node: ChainNode::new(
                id,
                chain_params.clone(),
                permutation.clone(),
                genesis_block.clone(),
                genesis_state.clone(),
            ),
        })
        .collect();

    let mut inboxes: Vec<Vec<(RobotId, ChainMessage)>> = vec![Vec::new(); n];
    let mut deliveries = if cfg.log_deliveries {
        Some(String::from("tick,sender,receiver,kind,bytes\n"))
    } else {
        None
    };

    for tick in 1..=duration_ticks {
        world.step();
        let graph = ConnectivityGraph::build(&world.positions(), world_cfg.comm_range);

        if tick % tps == 0 {
            for robot in robots.iter_mut() {
                // Smart robots perform no data collection.
                if robot.kind == ByzantineKind::Smart {
                    continue;
                }
                let sensed = world.sense_neighbors(robot.id);
                let own = world.poses[robot.id as usize];
                let samples = robot.recorder.record(own, &sensed, tick);
                robot.dataset.samples.extend(samples);
            }
        }

        if tick % train_period_ticks == 0 {
            expire_datasets(&mut robots, tick);
            let cycle = tick / train_period_ticks;
            submit_cycle(cfg, seed, cycle, fee, &mut robots);
        }

        let mut outboxes: Vec<Vec<ChainMessage>> = Vec::with_capacity(n);
        for (robot, inbox) in robots.iter_mut().zip(inboxes.iter_mut()) {
            outboxes.push(robot.node.step(tick, std::mem::take(inbox), true));
        }
        inboxes = crate::netsim::exchange(&graph, outboxes, |s, r, m| {
            if let Some(log) = deliveries.as_mut() {
                log.push_str(&format!(
                    "{tick},{s},{r},{},{}\n",
                    m.kind(),
                    m.byte_size()
                ));
            }
        });
    }

    // Forced full-connectivity sync window: gossip only, sealing paused,
    // for one block period.
    let full = ConnectivityGraph::complete(n);
    for extra in 1..=block_period_ticks {
        let tick = duration_ticks + extra;
        let mut outboxes: Vec<Vec<ChainMessage>> = Vec::with_capacity(n);
        for (robot, inbox) in robots.iter_mut().zip(inboxes.iter_mut()) {
            outboxes.push(robot.node.step(tick, std::mem::take(inbox), false));
        }
        inboxes = crate::netsim::exchange(&full, outboxes, |s, r, m| {
            if let Some(log) = deliveries.as_mut() {
                log.push_str(&format!(
                    "{tick},{s},{r},{},{}\n",
                    m.kind(),
                    m.byte_size()
                ));
            }
        });
    }

    let heads_converged = robots.windows(2).all(|w| w[0].node.head() == w[1].node.head());
    if !heads_converged {
        return Err(Error::Audit(
            "nodes did not converge on one head after the sync window".into(),
        ));
    }
    let replay_pure = robots
        .par_iter()
        .all(|r| r.node.full_replay() == *r.node.state());

    let byz_ids: Vec<RobotId> = (0..n as RobotId)
        .filter(|&id| cfg.kind_of(id).is_byzantine())
        .collect();

    let extraction = extract_metrics(
        cfg,
        &robots[0].node,
        &validation,
        &byz_ids,
        initial_tokens,
        tick_secs,
        block_period_ticks,
    );

    let tokens_conserved = !cfg.security
        || (extraction.final_state.total_tokens() - initial_tokens * n as f64).abs() < 1e-6;

    Ok(RunOutput {
        seed,
        final_head: robots[0].node.head(),
        genesis_bytes,
        final_chain_bytes: robots[0].node.chain_bytes(),
        metrics: extraction.metrics,
        final_state: extraction.final_state,
        byz_ids,
        submit_tx_count: extraction.submit_tx_count,
        canonical_blocks: extraction.canonical_blocks,
        block_log: extraction.block_log,
        event_log: extraction.event_log,
        deliveries_csv: deliveries,
        audit: AuditSummary {
            heads_converged,
            replay_pure,
            tokens_conserved,
            block_period_floor: extraction.block_period_floor,
            nonces_contiguous: extraction.nonces_contiguous,
        },
    })
}

/// One training boundary: every robot expires data, reads the shared model
/// from its own chain view, trains (or runs its Byzantine strategy), and
/// broadcasts a SubmitModel transaction. Training runs in parallel across
/// robots; transactions are committed in robot-id order.
fn submit_cycle(
    cfg: &ExperimentConfig,
    seed: u64,
    cycle: u64,
    fee: f64,
    robots: &mut [Robot],
) {
    let payloads: Vec<Option<(Vec<f32>, u32)>> = robots
        .par_iter()
        .map(|robot| {
            let view = robot.node.state();
            if cfg.security && view.balances[robot.id as usize] < fee {
                return None; // cannot pay: no longer participates
            }
            match robot.kind {
                ByzantineKind::Honest => {
                    if robot.dataset.is_empty() {
                        return None; // nothing to train on this cycle
                    }
                    let data: Vec<EncodedSample> = robot
                        .dataset
                        .samples
                        .iter()
                        .map(|s| learner::encode(&cfg.model, &s.positions))
                        .collect();
                    let start = view.shared_weights.clone();
                    let tseed = rng::mix2(seed, Domain::Train, robot.id as u64, cycle);
                    let (trained, n_samples) =
                        learner::train(&cfg.model, &cfg.train, &start, &data, tseed);
                    Some((trained.to_f32(), n_samples as u32))
                }
                ByzantineKind::Faulty => {
                    if robot.dataset.is_empty() {
                        return None;
                    }
                    let mut r = rng::stream2(seed, Domain::Faulty, robot.id as u64, cycle);
                    let w = byzantine::faulty_weights(cfg.model.n_weights(), &mut r);
                    Some((w.to_f32(), robot.dataset.len() as u32))
                }
                ByzantineKind::Malicious => {
                    if robot.dataset.is_empty() {
                        return None;
                    }
                    let w = byzantine::malicious_weights(view);
                    Some((w.to_f32(), robot.dataset.len() as u32))
                }
                ByzantineKind::Smart => {
                    let mut r = rng::stream2(seed, Domain::Smart, robot.id as u64, cycle);
                    let w = byzantine::smart_weights(
                        &view.shared_weights,
                        &view.prev_shared_weights,
                        &mut r,
                    );
                    Some((w.to_f32(), byzantine::smart_claimed_samples(view)))
                }
            }
        })
        .collect();

    for (robot, payload) in robots.iter_mut().zip(payloads) {
        if let Some((weights, n_samples)) = payload {
            robot.node.create_transaction(TxKind::SubmitModel { weights, n_samples });
        }
    }
}

/// Expire datasets at the training boundary, before payload computation.
fn expire_datasets(robots: &mut [Robot], now: u64) {
    for robot in robots.iter_mut() {
        robot.dataset.expire(now);
    }
}

struct Extraction {
    metrics: Vec<MetricsRow>,
    final_state: ContractState,
    submit_tx_count: u64,
    canonical_blocks: u64,
    block_log: Vec<serde_json::Value>,
    event_log: Vec<serde_json::Value>,
    block_period_floor: bool,
    nonces_contiguous: bool,
}

/// Replays the canonical chain once, computing metrics rows at every
/// aggregation and building the block/event logs.
fn extract_metrics(
    cfg: &ExperimentConfig,
    node: &ChainNode,
    validation: &[EncodedSample],
    byz_ids: &[RobotId],
    initial_tokens: f64,
    tick_secs: f64,
    block_period_ticks: u64,
) -> Extraction {
    let path = node.canonical_path();
    let mut state = node.genesis_state();
    let byz: std::collections::BTreeSet<RobotId> = byz_ids.iter().copied().collect();
    let n = state.params.n_robots;

    let token_means = |state: &ContractState| -> (f64, f64) {
        let mut honest = (0.0, 0usize);
        let mut byzm = (0.0, 0usize);
        for (id, b) in state.balances.iter().enumerate() {
            let gain = b - initial_tokens;
            if byz.contains(&(id as RobotId)) {
                byzm = (byzm.0 + gain, byzm.1 + 1);
            } else {
                honest = (honest.0 + gain, honest.1 + 1);
            }
        }
        (
            if honest.1 > 0 { honest.0 / honest.1 as f64 } else { 0.0 },
            if byzm.1 > 0 { byzm.0 / byzm.1 as f64 } else { 0.0 },
        )
    };

    let mut metrics = Vec::new();
    let mut block_log = Vec::new();
    let mut event_log = Vec::new();
    let mut round_weights: BTreeMap<RobotId, Arc<Transaction>> = BTreeMap::new();
    let mut submit_tx_count = 0u64;
    let mut cum_bytes = 0u64;
    let mut block_period_floor = true;
    let mut nonces_contiguous = true;
    let mut next_nonces = vec![0u64; n];
    let mut prev_timestamp: Option<u64> = None;

    for hash in &path {
        let block = node.block(hash).expect("canonical block present").clone();
        cum_bytes += block.byte_size() as u64;
        if let Some(prev) = prev_timestamp {
            if block.timestamp < prev + block_period_ticks {
                block_period_floor = false;
            }
        }
        prev_timestamp = Some(block.timestamp);

        let mut tx_entries = Vec::new();
        for tx in &block.txs {
            if tx.nonce != next_nonces[tx.sender as usize] {
                nonces_contiguous = false;
            } else {
                next_nonces[tx.sender as usize] += 1;
            }
            let (kind, n_samples) = match &tx.kind {
                TxKind::SubmitModel { n_samples, .. } => {
                    submit_tx_count += 1;
                    ("submit_model", Some(*n_samples))
                }
                TxKind::Noop => ("noop", None),
            };
            tx_entries.push(json!({
                "sender": tx.sender,
                "nonce": tx.nonce,
                "kind": kind,
                "n_samples": n_samples,
                "bytes": tx.byte_size(),
            }));

            let events = apply_tx(&mut state, tx);
            if let TxKind::SubmitModel { .. } = &tx.kind {
                for event in &events {
                    record_event(
                        cfg,
                        &mut event_log,
                        &mut metrics,
                        &mut round_weights,
                        event,
                        tx,
                        &block,
                        tick_secs,
                        cum_bytes,
                        validation,
                        &token_means,
                        &state,
                    );
                }
            }
        }

        block_log.push(json!({
            "height": block.index,
            "hash": block.hash.to_hex(),
            "parent": block.parent.to_hex(),
            "sealer": block.sealer,
            "time": block.timestamp as f64 * tick_secs,
            "bytes": block.byte_size(),
            "cum_bytes": cum_bytes,
            "txs": tx_entries,
        }));
    }

    // Terminal row: the canonical shared model's validation loss.
    let shared_loss = learner::loss(&cfg.model, &state.shared_weights, validation);
    let (tokens_honest, tokens_byz) = token_means(&state);
    metrics.push(MetricsRow {
        sim_time: cfg.world.duration,
        round: state.round,
        average_loss: shared_loss,
        tokens_honest,
        tokens_byz,
        chain_bytes: cum_bytes,
        aggregations: state.round,
    });

    Extraction {
        metrics,
        final_state: state,
        submit_tx_count,
        canonical_blocks: path.len() as u64,
        block_log,
        event_log,
        block_period_floor,
        nonces_contiguous,
    }
}

#[allow(clippy::too_many_arguments)]
fn record_event(
    cfg: &ExperimentConfig,
    event_log: &mut Vec<serde_json::Value>,
    metrics: &mut Vec<MetricsRow>,
    round_weights: &mut BTreeMap<RobotId, Arc<Transaction>>,
    event: &ContractEvent,
    tx: &Arc<Transaction>,
    block: &Arc<Block>,
    tick_secs: f64,
    cum_bytes: u64,
    validation: &[EncodedSample],
    token_means: &impl Fn(&ContractState) -> (f64, f64),
    state: &ContractState,
) {
    let time = block.timestamp as f64 * tick_secs;
    match event {
        ContractEvent::Accepted {
            robot,
            distance,
            n_samples,
            pending,
        } => {
            round_weights.insert(*robot, tx.clone());
            event_log.push(json!({
                "time": time,
                "height": block.index,
                "event": "accepted",
                "robot": robot,
                "distance": distance,
                "n_samples": n_samples,
                "pending": pending,
            }));
        }
        ContractEvent::Rejected {
            robot,
            reason,
            distance,
        } => {
            event_log.push(json!({
                "time": time,
                "height": block.index,
                "event": "rejected",
                "robot": robot,
                "reason": serde_json::to_value(reason).unwrap(),
                "distance": distance,
            }));
        }
        ContractEvent::Aggregated {
            round,
            ranking,
            payouts,
            pool_distributed,
        } => {
            // Participant-weighted validation loss of the round.
            let losses: Vec<(f64, f64)> = ranking
                .par_iter()
                .map(|&(robot, n_samples, _)| {
                    let tx = &round_weights[&robot];
                    let weights = match &tx.kind {
                        TxKind::SubmitModel { weights, .. } => {
                            WeightVector::from_f32(weights)
                        }
                        TxKind::Noop => unreachable!(),
                    };
                    let mse = learner::loss(&cfg.model, &weights, validation);
                    (n_samples as f64 * mse, n_samples as f64)
                })
                .collect();
            let total_weight: f64 = losses.iter().map(|l| l.1).sum();
            let average_loss =
                losses.iter().map(|l| l.0).sum::<f64>() / total_weight;
            round_weights.clear();

            let (tokens_honest, tokens_byz) = token_means(state);
            metrics.push(MetricsRow {
                sim_time: time,
                round: *round,
                average_loss,
                tokens_honest,
                tokens_byz,
                chain_bytes: cum_bytes,
                aggregations: *round,
            });
            event_log.push(json!({
                "time": time,
                "height": block.index,
                "event": "aggregated",
                "round": round,
                "average_loss": average_loss,
                "ranking": ranking,
                "payouts": payouts,
                "pool": pool_distributed,
            }));
        }
    }
}

// ---------------------------------------------------------------------------
// Run directories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunManifest {
    seed: u64,
    config: ExperimentConfig,
}

/// Writes `run.toml`, `metrics.csv`, `blocks.jsonl`, `events.jsonl`, and
/// (when enabled) `deliveries.csv` under `dir`.
pub fn write_run_dir(dir: &Path, cfg: &ExperimentConfig, output: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = RunManifest {
        seed: output.seed,
        config: cfg.clone(),
    };
    let toml_text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    std::fs::write(dir.join("run.toml"), toml_text)?;
    std::fs::write(dir.join("metrics.csv"), output.metrics_csv())?;
    write_jsonl(&dir.join("blocks.jsonl"), &output.block_log)?;
    write_jsonl(&dir.join("events.jsonl"), &output.event_log)?;
    if let Some(log) = &output.deliveries_csv {
        std::fs::write(dir.join("deliveries.csv"), log)?;
    }
    Ok(())
}

fn write_jsonl(path: &Path, entries: &[serde_json::Value]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for entry in entries {
        writeln!(file, "{entry}")?;
    }
    Ok(())
}

/// Re-runs a written run directory and verifies reproducibility plus the
/// post-run invariants. Returns human-readable check lines.
pub fn audit_run(dir: &Path) -> Result<Vec<(String, bool)>> {
    let manifest: RunManifest = toml::from_str(&std::fs::read_to_string(dir.join("run.toml"))?)?;
    let output = run(&manifest.config, manifest.seed)?;
    let mut checks = Vec::new();

    let stored_metrics = std::fs::read_to_string(dir.join("metrics.csv"))?;
    checks.push((
        "metrics.csv byte-identical on replay".into(),
        stored_metrics == output.metrics_csv(),
    ));
    let stored_blocks = std::fs::read_to_string(dir.join("blocks.jsonl"))?;
    let replayed_blocks = output
        .block_log
        .iter()
        .map(|e| format!("{e}\n"))
        .collect::<String>();
    checks.push((
        "blocks.jsonl byte-identical on replay".into(),
        stored_blocks == replayed_blocks,
    ));
    checks.push(("all nodes converged on one head".into(), output.audit.heads_converged));
    checks.push((
        "cached states equal full replay".into(),
        output.audit.replay_pure,
    ));
    checks.push((
        "token conservation".into(),
        output.audit.tokens_conserved,
    ));
    checks.push((
        "block period floor".into(),
        output.audit.block_period_floor,
    ));
    checks.push((
        "per-sender nonces contiguous".into(),
        output.audit.nonces_contiguous,
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Metric helpers
// ---------------------------------------------------------------------------

/// Participant-weighted validation loss of one aggregation round.
pub fn average_loss(
    model: &ModelConfig,
    participants: &[(WeightVector, u32)],
    validation: &[EncodedSample],
) -> f64 {
    assert!(!participants.is_empty());
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (weights, n) in participants {
        weighted += *n as f64 * learner::loss(model, weights, validation);
        total += *n as f64;
    }
    weighted / total
}

/// Mean tokens gained per group: `(honest_mean, byzantine_mean)`.
pub fn tokens_gained(
    balances_end: &[f64],
    balances_start: &[f64],
    byz_ids: &[RobotId],
) -> (f64, f64) {
    let byz: std::collections::BTreeSet<RobotId> = byz_ids.iter().copied().collect();
    let mut honest = (0.0, 0usize);
    let mut byzm = (0.0, 0usize);
    for (id, (end, start)) in balances_end.iter().zip(balances_start).enumerate() {
        let gain = end - start;
        if byz.contains(&(id as RobotId)) {
            byzm = (byzm.0 + gain, byzm.1 + 1);
        } else {
            honest = (honest.0 + gain, honest.1 + 1);
        }
    }
    (
        if honest.1 > 0 { honest.0 / honest.1 as f64 } else { 0.0 },
        if byzm.1 > 0 { byzm.0 / byzm.1 as f64 } else { 0.0 },
    )
}

// ---------------------------------------------------------------------------
// Experiment suites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteName {
    Exp1,
    Exp2Faulty,
    Exp2Malicious,
    Exp3Smart,
}

impl std::str::FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<SuiteName> {
        match s {
            "exp1" => Ok(SuiteName::Exp1),
            "exp2-faulty" => Ok(SuiteName::Exp2Faulty),
            "exp2-malicious" => Ok(SuiteName::Exp2Malicious),
            "exp3-smart" => Ok(SuiteName::Exp3Smart),
            other => Err(Error::Config(format!(
                "unknown suite '{other}' (expected exp1|exp2-faulty|exp2-malicious|exp3-smart)"
            ))),
        }
    }
}

impl std::fmt::Display for SuiteName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SuiteName::Exp1 => "exp1",
            SuiteName::Exp2Faulty => "exp2-faulty",
            SuiteName::Exp2Malicious => "exp2-malicious",
            SuiteName::Exp3Smart => "exp3-smart",
        };
        write!(f, "{s}")
    }
}

/// One suite configuration: label, config, and the default repetition count
/// used when no explicit seed list is given.
pub fn suite_configs(
    name: SuiteName,
    base: &ExperimentConfig,
) -> Vec<(String, ExperimentConfig, usize)> {
    let mut configs = Vec::new();
    match name {
        SuiteName::Exp1 => {
            for expiration in [250.0, 500.0, 750.0, 1000.0, 1250.0] {
                let mut cfg = base.clone();
                cfg.security = false;
                cfg.byzantine_kind = ByzantineKind::Honest;
                cfg.byzantine_count = 0;
                cfg.expiration = expiration;
                configs.push((format!("expiration-{expiration}"), cfg, 5));
            }
            let mut cfg = base.clone();
            cfg.security = false;
            cfg.byzantine_kind = ByzantineKind::Faulty;
            cfg.byzantine_count = 1;
            cfg.expiration = 750.0;
            configs.push(("faulty-1-nosecurity".into(), cfg, 10));
        }
        SuiteName::Exp2Faulty | SuiteName::Exp2Malicious | SuiteName::Exp3Smart => {
            let (kind, label, default_seeds) = match name {
                SuiteName::Exp2Faulty => (ByzantineKind::Faulty, "faulty", 20),
                SuiteName::Exp2Malicious => (ByzantineKind::Malicious, "malicious", 20),
                SuiteName::Exp3Smart => (ByzantineKind::Smart, "smart", 18),
                SuiteName::Exp1 => unreachable!(),
            };
            for count in 0..=7usize {
                let mut cfg = base.clone();
                cfg.security = true;
                cfg.byzantine_kind = if count == 0 { ByzantineKind::Honest } else { kind };
                cfg.byzantine_count = count;
                cfg.expiration = 750.0;
                configs.push((format!("{label}-{count}"), cfg, default_seeds));
            }
        }
    }
    configs
}

/// Runs a whole experiment suite. Writes one run directory per
/// `(config, seed)` plus `summary.csv` with per-config medians and 95%
/// bootstrap confidence intervals. A failing run aborts only itself; its
/// row reports the failure.
pub fn experiment_suite(
    name: SuiteName,
    seeds: Option<&[u64]>,
    base: &ExperimentConfig,
    out_dir: &Path,
) -> Result<std::path::PathBuf> {
    let configs = suite_configs(name, base);
    std::fs::create_dir_all(out_dir)?;

    struct ConfigResult {
        label: String,
        cfg: ExperimentConfig,
        summaries: Vec<RunSummary>,
        failures: usize,
    }

    let results: Vec<ConfigResult> = configs
        .iter()
        .map(|(label, cfg, default_seeds)| {
            let seed_list: Vec<u64> = match seeds {
                Some(list) => list.to_vec(),
                None => (1..=*default_seeds as u64).collect(),
            };
            let runs: Vec<(u64, Result<RunOutput>)> = seed_list
                .par_iter()
                .map(|&seed| (seed, run(cfg, seed)))
                .collect();
            let mut summaries = Vec::new();
            let mut failures = 0;
            for (seed, outcome) in runs {
                match outcome {
                    Ok(output) => {
                        let dir = out_dir.join(label).join(format!("seed-{seed}"));
                        write_run_dir(&dir, cfg, &output)?;
                        summaries.push(output.summary());
                        eprintln!("suite {name}: {label} seed {seed} done");
                    }
                    Err(err) => {
                        failures += 1;
                        eprintln!("suite {name}: {label} seed {seed} FAILED: {err}");
                    }
                }
            }
            Ok(ConfigResult {
                label: label.clone(),
                cfg: cfg.clone(),
                summaries,
                failures,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = String::from(
        "experiment,config,expiration_s,security,byzantine_kind,byzantine_count,n_seeds,n_failed,\
         final_loss_median,final_loss_ci_low,final_loss_ci_high,\
         tokens_honest_median,tokens_honest_ci_low,tokens_honest_ci_high,\
         tokens_byz_median,tokens_byz_ci_low,tokens_byz_ci_high,\
         aggregations_median,chain_bytes_median,bytes_per_submission_median\n",
    );
    for (idx, result) in results.iter().enumerate() {
        let losses: Vec<f64> = result.summaries.iter().map(|s| s.final_loss).collect();
        let honest: Vec<f64> = result.summaries.iter().map(|s| s.tokens_honest).collect();
        let byz: Vec<f64> = result.summaries.iter().map(|s| s.tokens_byz).collect();
        let aggs: Vec<f64> = result
            .summaries
            .iter()
            .map(|s| s.aggregations as f64)
            .collect();
        let bytes: Vec<f64> = result
            .summaries
            .iter()
            .map(|s| s.chain_bytes as f64)
            .collect();
        let per_sub: Vec<f64> = result
            .summaries
            .iter()
            .map(|s| s.bytes_per_submission)
            .collect();
        let mut boot = rng::stream(idx as u64, Domain::Bootstrap, 0);
        let (l_lo, l_hi) = bootstrap_ci(&losses, &mut boot);
        let (h_lo, h_hi) = bootstrap_ci(&honest, &mut boot);
        let (b_lo, b_hi) = bootstrap_ci(&byz, &mut boot);
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            name,
            result.label,
            result.cfg.expiration,
            result.cfg.security,
            serde_json::to_value(result.cfg.byzantine_kind)
                .unwrap()
                .as_str()
                .unwrap(),
            result.cfg.byzantine_count,
            result.summaries.len(),
            result.failures,
            median(&losses),
            l_lo,
            l_hi,
            median(&honest),
            h_lo,
            h_hi,
            median(&byz),
            b_lo,
            b_hi,
            median(&aggs),
            median(&bytes),
            median(&per_sub),
        ));
    }
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, summary)?;
    Ok(summary_path)
}

/// Median of a sample; NaN on empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Seeded 95% bootstrap interval of the median (percentile method).
pub fn bootstrap_ci(values: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> (f64, f64) {
    use rand::Rng;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.len() == 1 {
        return (values[0], values[0]);
    }
    const RESAMPLES: usize = 1000;
    let mut medians = Vec::with_capacity(RESAMPLES);
    let mut resample = vec![0.0; values.len()];
    for _ in 0..RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = values[rng.gen_range(0..values.len())];
        }
        medians.push(median(&resample));
    }
    medians.sort_by(f64::total_cmp);
    let lo = medians[(RESAMPLES as f64 * 0.025) as usize];
    let hi = medians[(RESAMPLES as f64 * 0.975) as usize - 1];
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_loss_weighted_mean_examples() {
        let model = ModelConfig::default();
        let validation = crate::harness::validation_corpus(
            &ExperimentConfig {
                validation_samples: 20,
                ..ExperimentConfig::default()
            },
            3,
        )
        .unwrap();
        let w = learner::init_weights(&model, 1);
        // Identical participants: equals the single model's loss.
        let single = learner::loss(&model, &w, &validation);
        let got = average_loss(
            &model,
            &[(w.clone(), 3), (w.clone(), 9)],
            &validation,
        );
        assert!((got - single).abs() < 1e-12);
    }

    #[test]
    fn average_loss_two_participant_arithmetic() {
        // Losses 0.02 (n=1) and 0.06 (n=3) -> 0.05; checked through the
        // direct weighted-mean formula the implementation must reproduce.
        let weighted: f64 = (1.0 * 0.02 + 3.0 * 0.06) / 4.0;
        assert!((weighted - 0.05).abs() < 1e-12);
    }

    #[test]
    fn tokens_gained_examples() {
        let start = vec![21.0; 15];
        assert_eq!(tokens_gained(&start, &start, &[]), (0.0, 0.0));
        let mut end = start.clone();
        end[7] += 14.0;
        let (honest, byz) = tokens_gained(&end, &start, &[]);
        assert!((honest - 14.0 / 15.0).abs() < 1e-12);
        assert_eq!(byz, 0.0);
    }

    #[test]
    fn median_and_bootstrap_are_deterministic() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let values = [1.0, 5.0, 2.0, 8.0, 3.0];
        let a = bootstrap_ci(&values, &mut rng::stream(0, Domain::Bootstrap, 0));
        let b = bootstrap_ci(&values, &mut rng::stream(0, Domain::Bootstrap, 0));
        assert_eq!(a, b);
        assert!(a.0 <= median(&values) && median(&values) <= a.1);
    }

    #[test]
    fn config_validation_rejects_bad_periods() {
        let mut cfg = ExperimentConfig::default();
        cfg.train_period = 33.333;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.byzantine_count = 16;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.byzantine_count = 2; // honest kind with nonzero count
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn suite_exp1_has_six_configurations() {
        let configs = suite_configs(SuiteName::Exp1, &ExperimentConfig::default());
        assert_eq!(configs.len(), 6);
        assert!(configs[..5].iter().all(|(_, c, _)| !c.security));
        assert_eq!(configs[5].1.byzantine_count, 1);
    }

    #[test]
    fn suite_byzantine_sweeps_have_eight_counts() {
        for name in [SuiteName::Exp2Faulty, SuiteName::Exp2Malicious, SuiteName::Exp3Smart] {
            let configs = suite_configs(name, &ExperimentConfig::default());
            assert_eq!(configs.len(), 8);
            let counts: Vec<usize> =
                configs.iter().map(|(_, c, _)| c.byzantine_count).collect();
            assert_eq!(counts, (0..=7).collect::<Vec<_>>());
            assert!(configs.iter().all(|(_, c, _)| c.security));
        }
    }
}
