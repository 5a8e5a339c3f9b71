//! Simplified proof-of-authority blockchain, one node per robot.
//!
//! Sealing follows a seeded rotation: the in-turn sealer for height `h` is
//! `permutation[h mod n_robots]` and may seal once a minimum block period has
//! elapsed since the parent. Any other member may seal after one additional
//! block period of grace (staggered by robot id), which keeps partitions
//! without their in-turn sealer alive. Fork choice is longest chain, ties
//! broken by the lexicographically smaller head hash. The contract state is
//! a pure left-fold of [`crate::contract`] transitions over the head path,
//! so any two nodes with the same head hold bit-identical state.
//!
//! # Canonical serialization
//!
//! All integers little-endian, weights 32-bit floats. The block digest is
//! the SHA-256 of the canonical block bytes.
//!
//! Transaction:
//!
//! ```text
//! sender      u16
//! nonce       u64
//! kind        u8            0 = Noop, 1 = SubmitModel
//! n_samples   u32           SubmitModel only
//! n_weights   u32           SubmitModel only
//! weights     f32 * n       SubmitModel only
//! signature   65 bytes      placeholder, all zeros, never verified
//! ```
//!
//! Block (the hashed canonical bytes):
//!
//! ```text
//! index       u64
//! parent      32 bytes
//! sealer      u16
//! timestamp   u64           simulation ticks
//! tx_count    u32
//! per tx:     tx_len u32, tx bytes
//! ```
//!
//! A stored block occupies the canonical bytes plus the 32-byte digest;
//! cumulative chain size is the sum of stored sizes along the head path.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::contract::{ContractEvent, ContractState};

pub type RobotId = u16;

/// Ticks a node waits before re-requesting an unanswered segment.
const REQUEST_RETRY_TICKS: u64 = 10;
/// Head-path hashes included in a segment request.
const HAVE_WINDOW: usize = 64;
/// Signature placeholder size (shape of a 65-byte recoverable ECDSA sig).
const SIGNATURE_LEN: usize = 65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockHash(pub [u8; 32]);

impl BlockHash {
    pub const ZERO: BlockHash = BlockHash([0u8; 32]);

    pub fn to_hex(self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl std::fmt::Display for BlockHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TxKind {
    SubmitModel { weights: Vec<f32>, n_samples: u32 },
    Noop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub sender: RobotId,
    pub nonce: u64,
    pub kind: TxKind,
}

impl Transaction {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_size());
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&self.nonce.to_le_bytes());
        match &self.kind {
            TxKind::Noop => out.push(0),
            TxKind::SubmitModel { weights, n_samples } => {
                out.push(1);
                out.extend_from_slice(&n_samples.to_le_bytes());
                out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
                for w in weights {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&[0u8; SIGNATURE_LEN]);
        out
    }

    /// Canonical byte length without serializing.
    pub fn byte_size(&self) -> usize {
        let payload = match &self.kind {
            TxKind::Noop => 0,
            TxKind::SubmitModel { weights, .. } => 4 + 4 + 4 * weights.len(),
        };
        2 + 8 + 1 + payload + SIGNATURE_LEN
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: u64,
    pub parent: BlockHash,
    pub sealer: RobotId,
    /// Simulation ticks.
    pub timestamp: u64,
    pub txs: Vec<Arc<Transaction>>,
    pub hash: BlockHash,
}

impl Block {
    pub fn seal(
        index: u64,
        parent: BlockHash,
        sealer: RobotId,
        timestamp: u64,
        txs: Vec<Arc<Transaction>>,
    ) -> Arc<Block> {
        let mut block = Block {
            index,
            parent,
            sealer,
            timestamp,
            txs,
            hash: BlockHash::ZERO,
        };
        block.hash = block.compute_hash();
        Arc::new(block)
    }

    pub fn genesis() -> Arc<Block> {
        Block::seal(0, BlockHash::ZERO, 0, 0, Vec::new())
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_size());
        out.extend_from_slice(&self.index.to_le_bytes());
        out.extend_from_slice(&self.parent.0);
        out.extend_from_slice(&self.sealer.to_le_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        out.extend_from_slice(&(self.txs.len() as u32).to_le_bytes());
        for tx in &self.txs {
            let bytes = tx.canonical_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn compute_hash(&self) -> BlockHash {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_bytes());
        BlockHash(hasher.finalize().into())
    }

    /// Canonical bytes plus the stored digest.
    pub fn byte_size(&self) -> usize {
        let tx_bytes: usize = self.txs.iter().map(|t| 4 + t.byte_size()).sum();
        8 + 32 + 2 + 8 + 4 + tx_bytes + 32
    }
}

/// Gossip vocabulary exchanged between neighboring nodes. Everything is
/// broadcast to the sender's current neighbors.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainMessage {
    /// Per-tick heartbeat advertising the node's head.
    Head { hash: BlockHash, height: u64 },
    /// Flooded once per node when a block is first learned.
    NewBlock { block: Arc<Block> },
    /// Flooded once per node when a transaction is first learned.
    NewTx { tx: Arc<Transaction> },
    /// Ask any neighbor for the path to `want`; `have` lists recent
    /// head-path hashes of the requester.
    SegmentRequest { want: BlockHash, have: Vec<BlockHash> },
    /// Ascending blocks ending at the requested hash.
    Segment { blocks: Vec<Arc<Block>> },
}

impl ChainMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ChainMessage::Head { .. } => "head",
            ChainMessage::NewBlock { .. } => "new_block",
            ChainMessage::NewTx { .. } => "new_tx",
            ChainMessage::SegmentRequest { .. } => "segment_request",
            ChainMessage::Segment { .. } => "segment",
        }
    }

    pub fn byte_size(&self) -> usize {
        match self {
            ChainMessage::Head { .. } => 1 + 32 + 8,
            ChainMessage::NewBlock { block } => 1 + block.byte_size(),
            ChainMessage::NewTx { tx } => 1 + tx.byte_size(),
            ChainMessage::SegmentRequest { have, .. } => 1 + 32 + 4 + 32 * have.len(),
            ChainMessage::Segment { blocks } => {
                1 + 4 + blocks.iter().map(|b| b.byte_size()).sum::<usize>()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainParams {
    pub n_robots: usize,
    pub model_size: usize,
    pub block_period_ticks: u64,
}

/// A block plus per-branch bookkeeping: the next expected nonce per sender
/// after this block, and the cumulative stored bytes of its path.
#[derive(Debug, Clone)]
pub struct StoredBlock {
    pub block: Arc<Block>,
    pub next_nonces: Vec<u64>,
    pub cum_bytes: u64,
}

#[derive(Debug)]
enum InsertOutcome {
    Inserted,
    AlreadyKnown,
    UnknownParent,
    Invalid(String),
}

/// One robot's blockchain node.
pub struct ChainNode {
    pub owner: RobotId,
    params: ChainParams,
    sealer_permutation: Arc<Vec<RobotId>>,
    genesis_hash: BlockHash,
    genesis_state: Arc<ContractState>,
    store: BTreeMap<BlockHash, StoredBlock>,
    head: BlockHash,
    state: ContractState,
    mempool: BTreeMap<(RobotId, u64), Arc<Transaction>>,
    seen_txs: BTreeSet<(RobotId, u64)>,
    requested: BTreeMap<BlockHash, u64>,
    next_local_nonce: u64,
    pending_local: Vec<ChainMessage>,
    pub rejection_log: Vec<String>,
}

impl ChainNode {
    pub fn new(
        owner: RobotId,
        params: ChainParams,
        sealer_permutation: Arc<Vec<RobotId>>,
        genesis_block: Arc<Block>,
        genesis_state: Arc<ContractState>,
    ) -> ChainNode {
        assert_eq!(sealer_permutation.len(), params.n_robots);
        let genesis_hash = genesis_block.hash;
        let mut store = BTreeMap::new();
        store.insert(
            genesis_hash,
            StoredBlock {
                cum_bytes: genesis_block.byte_size() as u64,
                next_nonces: vec![0; params.n_robots],
                block: genesis_block,
            },
        );
        ChainNode {
            owner,
            params,
            sealer_permutation,
            genesis_hash,
            state: (*genesis_state).clone(),
            genesis_state,
            store,
            head: genesis_hash,
            mempool: BTreeMap::new(),
            seen_txs: BTreeSet::new(),
            requested: BTreeMap::new(),
            next_local_nonce: 0,
            pending_local: Vec::new(),
            rejection_log: Vec::new(),
        }
    }

    pub fn head(&self) -> BlockHash {
        self.head
    }

    pub fn head_block(&self) -> &Arc<Block> {
        &self.store[&self.head].block
    }

    pub fn head_height(&self) -> u64 {
        self.head_block().index
    }

    /// The node's replayed contract state at its current head.
    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn block(&self, hash: &BlockHash) -> Option<&Arc<Block>> {
        self.store.get(hash).map(|s| &s.block)
    }

    pub fn stored(&self, hash: &BlockHash) -> Option<&StoredBlock> {
        self.store.get(hash)
    }

    /// Cumulative stored bytes of the head path.
    pub fn chain_bytes(&self) -> u64 {
        self.store[&self.head].cum_bytes
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn mempool_contains(&self, sender: RobotId, nonce: u64) -> bool {
        self.mempool.contains_key(&(sender, nonce))
    }

    /// Hashes from genesis to head, ascending.
    pub fn canonical_path(&self) -> Vec<BlockHash> {
        let mut path = Vec::new();
        let mut cursor = self.head;
        loop {
            path.push(cursor);
            if cursor == self.genesis_hash {
                break;
            }
            cursor = self.store[&cursor].block.parent;
        }
        path.reverse();
        path
    }

    /// Creates, mempools, and schedules a local transaction for flooding.
    pub fn create_transaction(&mut self, kind: TxKind) -> Arc<Transaction> {
        let tx = Arc::new(Transaction {
            sender: self.owner,
            nonce: self.next_local_nonce,
            kind,
        });
        self.next_local_nonce += 1;
        self.seen_txs.insert((tx.sender, tx.nonce));
        self.mempool.insert((tx.sender, tx.nonce), tx.clone());
        self.pending_local.push(ChainMessage::NewTx { tx: tx.clone() });
        tx
    }

    /// One protocol step: consume the inbox, attempt to seal, emit the
    /// heartbeat. Returns the outbox to broadcast this tick.
    pub fn step(
        &mut self,
        now: u64,
        inbox: Vec<(RobotId, ChainMessage)>,
        seal_allowed: bool,
    ) -> Vec<ChainMessage> {
        let mut outbox = std::mem::take(&mut self.pending_local);
        for (_, msg) in inbox {
            self.handle_message(now, msg, &mut outbox);
        }
        if seal_allowed {
            if let Some(block) = self.try_seal(now) {
                outbox.push(ChainMessage::NewBlock { block });
            }
        }
        outbox.push(ChainMessage::Head {
            hash: self.head,
            height: self.head_height(),
        });
        outbox
    }

    fn handle_message(&mut self, now: u64, msg: ChainMessage, outbox: &mut Vec<ChainMessage>) {
        match msg {
            ChainMessage::Head { hash, height } => {
                if self.store.contains_key(&hash) {
                    return;
                }
                let better = height > self.head_height()
                    || (height == self.head_height() && hash < self.head);
                if better {
                    self.request_segment(now, hash, outbox);
                }
            }
            ChainMessage::NewBlock { block } => {
                let hash = block.hash;
                match self.insert_block(&block) {
                    InsertOutcome::Inserted => {
                        self.requested.remove(&hash);
                        outbox.push(ChainMessage::NewBlock { block });
                        self.consider_adopt(hash, outbox);
                    }
                    InsertOutcome::AlreadyKnown => {}
                    InsertOutcome::UnknownParent => {
                        self.request_segment(now, hash, outbox);
                    }
                    InsertOutcome::Invalid(reason) => {
                        self.rejection_log.push(format!("block {hash}: {reason}"));
                    }
                }
            }
            ChainMessage::NewTx { tx } => {
                let key = (tx.sender, tx.nonce);
                if self.seen_txs.contains(&key) {
                    return;
                }
                self.seen_txs.insert(key);
                let next = self.store[&self.head]
                    .next_nonces
                    .get(tx.sender as usize)
                    .copied();
                match next {
                    Some(next) if tx.nonce >= next => {
                        self.mempool.insert(key, tx.clone());
                        outbox.push(ChainMessage::NewTx { tx });
                    }
                    Some(_) => {} // already included on our head path
                    None => self
                        .rejection_log
                        .push(format!("tx from unknown sender {}", tx.sender)),
                }
            }
            ChainMessage::SegmentRequest { want, have } => {
                if !self.store.contains_key(&want) {
                    return;
                }
                let have: BTreeSet<BlockHash> = have.into_iter().collect();
                if have.contains(&want) {
                    return;
                }
                let mut blocks = Vec::new();
                let mut cursor = want;
                loop {
                    let stored = &self.store[&cursor];
                    blocks.push(stored.block.clone());
                    let parent = stored.block.parent;
                    if cursor == self.genesis_hash || have.contains(&parent) {
                        break;
                    }
                    cursor = parent;
                }
                blocks.reverse();
                outbox.push(ChainMessage::Segment { blocks });
            }
            ChainMessage::Segment { blocks } => {
                let mut last_inserted = None;
                for block in blocks {
                    let hash = block.hash;
                    match self.insert_block(&block) {
                        InsertOutcome::Inserted => {
                            self.requested.remove(&hash);
                            last_inserted = Some(hash);
                        }
                        InsertOutcome::AlreadyKnown => last_inserted = Some(hash),
                        InsertOutcome::UnknownParent => break,
                        InsertOutcome::Invalid(reason) => {
                            self.rejection_log.push(format!("segment block {hash}: {reason}"));
                            break;
                        }
                    }
                }
                if let Some(hash) = last_inserted {
                    self.consider_adopt(hash, outbox);
                }
            }
        }
    }

    fn request_segment(&mut self, now: u64, want: BlockHash, outbox: &mut Vec<ChainMessage>) {
        if let Some(&asked) = self.requested.get(&want) {
            if now.saturating_sub(asked) < REQUEST_RETRY_TICKS {
                return;
            }
        }
        self.requested.insert(want, now);
        let mut have = Vec::with_capacity(HAVE_WINDOW + 1);
        let mut cursor = self.head;
        for _ in 0..HAVE_WINDOW {
            have.push(cursor);
            if cursor == self.genesis_hash {
                break;
            }
            cursor = self.store[&cursor].block.parent;
        }
        if *have.last().unwrap() != self.genesis_hash {
            have.push(self.genesis_hash);
        }
        outbox.push(ChainMessage::SegmentRequest { want, have });
    }

    fn insert_block(&mut self, block: &Arc<Block>) -> InsertOutcome {
        if self.store.contains_key(&block.hash) {
            return InsertOutcome::AlreadyKnown;
        }
        let parent = match self.store.get(&block.parent) {
            Some(p) => p,
            None => return InsertOutcome::UnknownParent,
        };
        if block.index != parent.block.index + 1 {
            return InsertOutcome::Invalid("bad index".into());
        }
        if block.timestamp < parent.block.timestamp + self.params.block_period_ticks {
            return InsertOutcome::Invalid("block period violated".into());
        }
        if (block.sealer as usize) >= self.params.n_robots {
            return InsertOutcome::Invalid("unknown sealer".into());
        }
        if block.compute_hash() != block.hash {
            return InsertOutcome::Invalid("hash mismatch".into());
        }
        let mut next_nonces = parent.next_nonces.clone();
        for tx in &block.txs {
            let sender = tx.sender as usize;
            if sender >= self.params.n_robots {
                return InsertOutcome::Invalid("tx from unknown sender".into());
            }
            if tx.nonce != next_nonces[sender] {
                return InsertOutcome::Invalid(format!(
                    "nonce gap or duplicate for sender {}",
                    tx.sender
                ));
            }
            if let TxKind::SubmitModel { weights, n_samples } = &tx.kind {
                if weights.len() != self.params.model_size || *n_samples == 0 {
                    return InsertOutcome::Invalid("malformed SubmitModel".into());
                }
            }
            next_nonces[sender] += 1;
        }
        let cum_bytes = parent.cum_bytes + block.byte_size() as u64;
        self.store.insert(
            block.hash,
            StoredBlock {
                block: block.clone(),
                next_nonces,
                cum_bytes,
            },
        );
        InsertOutcome::Inserted
    }

    /// Longest-chain fork choice with smaller-hash tie-break. On a switch,
    /// transactions unique to the abandoned branch return to the mempool and
    /// are re-flooded; the state cache is advanced or re-replayed.
    fn consider_adopt(&mut self, candidate: BlockHash, outbox: &mut Vec<ChainMessage>) {
        if candidate == self.head {
            return;
        }
        let cand_height = self.store[&candidate].block.index;
        let head_height = self.head_height();
        let better = cand_height > head_height
            || (cand_height == head_height && candidate < self.head);
        if !better {
            return;
        }

        let old_head = self.head;
        if self.store[&candidate].block.parent == old_head {
            // Common case: pure extension of the current head.
            let block = self.store[&candidate].block.clone();
            apply_block(&mut self.state, &block);
        } else {
            let new_path = self.path_of(candidate);
            let old_path = self.path_of(old_head);
            let new_set: BTreeSet<BlockHash> = new_path.iter().copied().collect();
            let next_nonces = self.store[&candidate].next_nonces.clone();

            // Return abandoned transactions to the mempool and re-flood them
            // so sealers that never saw the losing branch can include them.
            for hash in old_path.iter().rev() {
                if new_set.contains(hash) {
                    break;
                }
                let block = self.store[hash].block.clone();
                for tx in &block.txs {
                    if tx.nonce >= next_nonces[tx.sender as usize] {
                        let key = (tx.sender, tx.nonce);
                        if self.mempool.insert(key, tx.clone()).is_none() {
                            outbox.push(ChainMessage::NewTx { tx: tx.clone() });
                        }
                    }
                }
            }

            // Re-replay: extend from the fork point when the old head is an
            // ancestor, otherwise rebuild from genesis.
            let mut common = 0;
            for (a, b) in new_path.iter().zip(old_path.iter()) {
                if a == b {
                    common += 1;
                } else {
                    break;
                }
            }
            if common == old_path.len() {
                for hash in &new_path[common..] {
                    let block = self.store[hash].block.clone();
                    apply_block(&mut self.state, &block);
                }
            } else {
                let mut state = (*self.genesis_state).clone();
                for hash in &new_path[1..] {
                    let block = self.store[hash].block.clone();
                    apply_block(&mut state, &block);
                }
                self.state = state;
            }
        }

        self.head = candidate;
        // Drop mempool entries included on the new head path.
        let next_nonces = &self.store[&candidate].next_nonces;
        self.mempool
            .retain(|&(sender, nonce), _| nonce >= next_nonces[sender as usize]);
    }

    fn path_of(&self, hash: BlockHash) -> Vec<BlockHash> {
        let mut path = Vec::new();
        let mut cursor = hash;
        loop {
            path.push(cursor);
            if cursor == self.genesis_hash {
                break;
            }
            cursor = self.store[&cursor].block.parent;
        }
        path.reverse();
        path
    }

    /// Seals if eligible: in-turn sealers after one block period, anyone
    /// after a further period of grace (staggered by id so the lowest id in
    /// a partition goes first). The new block takes every mempool
    /// transaction that continues its sender's nonce sequence.
    pub fn try_seal(&mut self, now: u64) -> Option<Arc<Block>> {
        let head_block = self.head_block().clone();
        let next_height = head_block.index + 1;
        let period = self.params.block_period_ticks;
        let in_turn = self.sealer_permutation
            [(next_height % self.params.n_robots as u64) as usize];
        let eligible = if in_turn == self.owner {
            now >= head_block.timestamp + period
        } else {
            now >= head_block.timestamp + 2 * period + self.owner as u64
        };
        if !eligible {
            return None;
        }

        let mut running = self.store[&self.head].next_nonces.clone();
        let mut txs = Vec::new();
        for (&(sender, nonce), tx) in &self.mempool {
            if nonce == running[sender as usize] {
                if let TxKind::SubmitModel { weights, n_samples } = &tx.kind {
                    if weights.len() != self.params.model_size || *n_samples == 0 {
                        continue;
                    }
                }
                txs.push(tx.clone());
                running[sender as usize] += 1;
            }
        }

        let block = Block::seal(next_height, self.head, self.owner, now, txs);
        match self.insert_block(&block) {
            InsertOutcome::Inserted => {}
            other => panic!("own sealed block rejected: {other:?}"),
        }
        let mut scratch = Vec::new();
        self.consider_adopt(block.hash, &mut scratch);
        debug_assert!(scratch.is_empty());
        debug_assert_eq!(self.head, block.hash);
        Some(block)
    }

    /// Fresh copy of the genesis contract state.
    pub fn genesis_state(&self) -> ContractState {
        (*self.genesis_state).clone()
    }

    /// Full replay from genesis; the cached state must always equal this.
    pub fn full_replay(&self) -> ContractState {
        let mut state = (*self.genesis_state).clone();
        for hash in &self.canonical_path()[1..] {
            apply_block(&mut state, &self.store[hash].block.clone());
        }
        state
    }
}

/// Folds a block's transactions into the contract state, discarding events.
pub fn apply_block(state: &mut ContractState, block: &Arc<Block>) {
    for tx in &block.txs {
        apply_tx(state, tx);
    }
}

/// Applies one transaction, returning the contract events it produced.
pub fn apply_tx(state: &mut ContractState, tx: &Transaction) -> Vec<ContractEvent> {
    match &tx.kind {
        TxKind::SubmitModel { weights, n_samples } => {
            state.submit_model(tx.sender, weights, *n_samples)
        }
        TxKind::Noop => Vec::new(),
    }
}

/// Deterministic sealer rotation for a run.
pub fn sealer_permutation(seed: u64, n_robots: usize) -> Vec<RobotId> {
    use rand::seq::SliceRandom;
    let mut order: Vec<RobotId> = (0..n_robots as RobotId).collect();
    let mut r = crate::rng::stream(seed, crate::rng::Domain::SealerPermutation, 0);
    order.shuffle(&mut r);
    order
}
