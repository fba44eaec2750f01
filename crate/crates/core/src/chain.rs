//! Header clusters, cluster validation and the block tree.
//!
//! Byte layouts are big-endian with fixed widths:
//!
//! ```text
//! preimage = prev_hash(32) merkle_root(32) height(8) timestamp(8) coinbase(4)
//! master   = preimage pos(8) nonce(8) problem_id(32)
//! slave    = preimage pos(8) nonce(8) min_nonce(8) problem_id(32) min_work0(32) min_n_fnv(8)
//! block    = master queue_root(32) n_slaves(2) slave* body_len(4) body
//! ```
//!
//! A block's hash covers everything except the body, which is bound through
//! `merkle_root = SHA3(body)`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::contracts::ProblemContract;
use crate::economy::{Economy, QueueSnapshot, Settlement};
use crate::primitives::{sha3, Hash256, Word256};
use crate::proof::{map_solution, seed_hash, stack_proof, ProofResult, SamplingSchedule, Target, Work, DEFAULT_GAS_LIMIT};
use crate::pvm::{NoSampling, StateReader};

pub const PREIMAGE_LEN: usize = 84;
pub const MASTER_LEN: usize = PREIMAGE_LEN + 48;
pub const SLAVE_LEN: usize = PREIMAGE_LEN + 96;
pub const DEFAULT_MAX_SLAVES: usize = 16;
/// Coinbase of the genesis block.
pub const GENESIS_COINBASE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HeaderPreimage {
    pub prev_hash: Hash256,
    pub merkle_root: Hash256,
    pub height: u64,
    pub timestamp: u64,
    /// Miner id; bound into `H` so two miners never search the same nonces.
    pub coinbase: u32,
}

impl HeaderPreimage {
    pub fn to_bytes(&self) -> [u8; PREIMAGE_LEN] {
        let mut out = [0u8; PREIMAGE_LEN];
        out[..32].copy_from_slice(self.prev_hash.as_bytes());
        out[32..64].copy_from_slice(self.merkle_root.as_bytes());
        out[64..72].copy_from_slice(&self.height.to_be_bytes());
        out[72..80].copy_from_slice(&self.timestamp.to_be_bytes());
        out[80..84].copy_from_slice(&self.coinbase.to_be_bytes());
        out
    }

    fn read(r: &mut Cursor<'_>) -> Result<Self, ChainError> {
        Ok(HeaderPreimage {
            prev_hash: r.hash()?,
            merkle_root: r.hash()?,
            height: r.u64()?,
            timestamp: r.u64()?,
            coinbase: r.u32()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MasterHeader {
    pub base: HeaderPreimage,
    pub pos: u64,
    pub nonce: u64,
    pub problem_id: Hash256,
}

impl MasterHeader {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.base.to_bytes());
        out.extend_from_slice(&self.pos.to_be_bytes());
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(self.problem_id.as_bytes());
    }

    fn read(r: &mut Cursor<'_>) -> Result<Self, ChainError> {
        Ok(MasterHeader {
            base: HeaderPreimage::read(r)?,
            pos: r.u64()?,
            nonce: r.u64()?,
            problem_id: r.hash()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SlaveHeader {
    pub base: HeaderPreimage,
    pub pos: u64,
    pub nonce: u64,
    pub min_nonce: u64,
    pub problem_id: Hash256,
    /// Claimed smallest workload seen on this problem; reproduced from `min_nonce` by verifiers.
    pub min_work: Work,
}

impl SlaveHeader {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SLAVE_LEN);
        self.write(&mut out);
        out
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.base.to_bytes());
        out.extend_from_slice(&self.pos.to_be_bytes());
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(&self.min_nonce.to_be_bytes());
        out.extend_from_slice(self.problem_id.as_bytes());
        out.extend_from_slice(&self.min_work.work0.to_be_bytes());
        out.extend_from_slice(&self.min_work.n_fnv.to_be_bytes());
    }

    fn read(r: &mut Cursor<'_>) -> Result<Self, ChainError> {
        let base = HeaderPreimage::read(r)?;
        let pos = r.u64()?;
        let nonce = r.u64()?;
        let min_nonce = r.u64()?;
        let problem_id = r.hash()?;
        let work0 = r.hash()?.to_word();
        let n_fnv = r.u64()?;
        if n_fnv == 0 {
            return Err(ChainError::Decode("slave min_work has zero n_fnv".into()));
        }
        Ok(SlaveHeader {
            base,
            pos,
            nonce,
            min_nonce,
            problem_id,
            min_work: Work::new(work0, n_fnv),
        })
    }

    pub fn hash(&self) -> Hash256 {
        sha3(&self.to_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub master: MasterHeader,
    pub slaves: Vec<SlaveHeader>,
    /// Commits the priority-ordered queue that resolved `pos` values for this block.
    pub queue_root: Hash256,
    pub body: Vec<u8>,
}

impl Block {
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MASTER_LEN + 34 + SLAVE_LEN * self.slaves.len());
        self.master.write(&mut out);
        out.extend_from_slice(self.queue_root.as_bytes());
        out.extend_from_slice(&(self.slaves.len() as u16).to_be_bytes());
        for s in &self.slaves {
            s.write(&mut out);
        }
        out
    }

    pub fn hash(&self) -> Hash256 {
        sha3(&self.header_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.extend_from_slice(&(self.body.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChainError> {
        let mut r = Cursor { bytes, at: 0 };
        let master = MasterHeader::read(&mut r)?;
        let queue_root = r.hash()?;
        let n = r.take(2)?;
        let n = u16::from_be_bytes([n[0], n[1]]) as usize;
        let slaves = (0..n).map(|_| SlaveHeader::read(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let len = r.u32()? as usize;
        let body = r.take(len)?.to_vec();
        if r.at != bytes.len() {
            return Err(ChainError::Decode("trailing bytes after block".into()));
        }
        Ok(Block {
            master,
            slaves,
            queue_root,
            body,
        })
    }

    pub fn height(&self) -> u64 {
        self.master.base.height
    }

    pub fn parent(&self) -> Hash256 {
        self.master.base.prev_hash
    }
}

/// Flat commitment over the body bytes.
pub fn merkle_root(body: &[u8]) -> Hash256 {
    sha3(body)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ChainError> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| ChainError::Decode("truncated block".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn hash(&mut self) -> Result<Hash256, ChainError> {
        Ok(Hash256(self.take(32)?.try_into().expect("32 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ChainError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ChainError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Read-only account data visible to `CHAINREAD`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainView {
    pub accounts: BTreeMap<Word256, Word256>,
    pub height: u64,
    pub tip: Hash256,
}

impl ChainView {
    /// Accounts `0..n` with balances `f(i)`.
    pub fn with_balances(n: u64, f: impl Fn(u64) -> u64) -> Self {
        ChainView {
            accounts: (0..n).map(|i| (Word256::from(i), Word256::from(f(i)))).collect(),
            ..ChainView::default()
        }
    }
}

impl StateReader for ChainView {
    fn read(&self, key: Word256) -> Word256 {
        self.accounts.get(&key).copied().unwrap_or(Word256::ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsensusMode {
    /// Target-gated master header plus problem-solving slave headers.
    Axe,
    /// A block is valid if either its hash beats the target or its problem is solved.
    Bbgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainParams {
    pub mode: ConsensusMode,
    pub target: Target,
    pub sched: SamplingSchedule,
    pub gas_limit: u64,
    pub max_slaves: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            mode: ConsensusMode::Axe,
            target: Target::from_difficulty(1 << 20),
            sched: SamplingSchedule::default(),
            gas_limit: DEFAULT_GAS_LIMIT,
            max_slaves: DEFAULT_MAX_SLAVES,
        }
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum SlaveError {
    #[error("header names a different problem than the one at its position")]
    ProblemMismatch,
    #[error("nonce does not map to a solution")]
    NotASolution,
    #[error("claimed min_work does not match the recomputation")]
    MinWorkMismatch,
    #[error("min_work beats the target, so the header should have been a master")]
    ShouldBeMaster,
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("parent block is unknown")]
    UnknownParent,
    #[error("block is already in the tree")]
    DuplicateBlock,
    #[error("height {got} does not follow parent height {parent}")]
    HeightMismatch { got: u64, parent: u64 },
    #[error("queue root does not match the parent's queue")]
    QueueRootMismatch,
    #[error("rule 1: merkle root does not commit to the body")]
    RuleOneMerkle,
    #[error("rule 2: master workload does not beat the target")]
    RuleTwoTarget,
    #[error("rule 3: slave at pos {pos} is on a different branch")]
    RuleThreeBranch { pos: u64 },
    #[error("rule 4: slave at pos {pos}: {source}")]
    RuleFourSlave { pos: u64, source: SlaveError },
    #[error("rule 5: pos values are not 0..k with the master last")]
    RuleFivePosGap,
    #[error("{got} slave headers exceed the cap of {max}")]
    TooManySlaves { got: usize, max: usize },
    #[error("master names a different problem than the one at its position")]
    MasterProblemMismatch,
    #[error("block decode: {0}")]
    Decode(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Checks one slave header against the problem it claims to solve.
pub fn verify_slave_header(
    h: &SlaveHeader,
    q: &ProblemContract,
    view: &dyn StateReader,
    params: &ChainParams,
) -> Result<(), SlaveError> {
    if h.problem_id != q.id {
        return Err(SlaveError::ProblemMismatch);
    }
    let pre = h.base.to_bytes();
    let at_nonce = stack_proof(&pre, h.nonce, q, view, &params.sched, params.gas_limit);
    if !at_nonce.solved {
        return Err(SlaveError::NotASolution);
    }
    let at_min = if h.min_nonce == h.nonce {
        at_nonce.work
    } else {
        stack_proof(&pre, h.min_nonce, q, view, &params.sched, params.gas_limit).work
    };
    if at_min != h.min_work || at_nonce.work < h.min_work {
        return Err(SlaveError::MinWorkMismatch);
    }
    if h.min_work.beats(&params.target) {
        return Err(SlaveError::ShouldBeMaster);
    }
    Ok(())
}

/// What validation learned about the master attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MasterCheck {
    pub n_fnv: u64,
    pub gas_used: u64,
}

fn master_problem<'a>(b: &Block, queue: &'a QueueSnapshot) -> Result<&'a Arc<ProblemContract>, ChainError> {
    let q = queue.at(b.master.pos);
    if q.id != b.master.problem_id {
        return Err(ChainError::MasterProblemMismatch);
    }
    Ok(q)
}

/// Applies the cluster rules to `b` as a child of the given parent.
/// Cheap structural checks run first; rule 5 is checked before rule 4 so
/// slave proofs are only recomputed for well-formed clusters.
pub fn validate_cluster(
    b: &Block,
    parent_hash: &Hash256,
    parent_height: u64,
    queue: &QueueSnapshot,
    view: &dyn StateReader,
    params: &ChainParams,
) -> Result<MasterCheck, ChainError> {
    if b.master.base.prev_hash != *parent_hash {
        return Err(ChainError::UnknownParent);
    }
    if b.master.base.height != parent_height + 1 {
        return Err(ChainError::HeightMismatch {
            got: b.master.base.height,
            parent: parent_height,
        });
    }
    if b.queue_root != queue.root() {
        return Err(ChainError::QueueRootMismatch);
    }
    if b.master.base.merkle_root != merkle_root(&b.body) {
        return Err(ChainError::RuleOneMerkle);
    }
    let pre = b.master.base.to_bytes();
    if params.mode == ConsensusMode::Bbgs {
        if !b.slaves.is_empty() || b.master.pos != 0 {
            return Err(ChainError::RuleFivePosGap);
        }
        let q = master_problem(b, queue)?;
        let h = seed_hash(b.master.nonce, &pre);
        if h.to_word() < params.target.0 {
            return Ok(MasterCheck { n_fnv: 0, gas_used: 0 });
        }
        let input = map_solution(&h, &q.space).to_words();
        let out = crate::pvm::execute(&q.solve_code, &input, params.gas_limit, view, &mut NoSampling);
        return if out.solved {
            Ok(MasterCheck { n_fnv: 0, gas_used: out.gas_used })
        } else {
            Err(ChainError::RuleTwoTarget)
        };
    }
    if b.slaves.len() > params.max_slaves {
        return Err(ChainError::TooManySlaves {
            got: b.slaves.len(),
            max: params.max_slaves,
        });
    }
    let contiguous = b.slaves.iter().enumerate().all(|(i, s)| s.pos == i as u64);
    if !contiguous || b.master.pos != b.slaves.len() as u64 {
        return Err(ChainError::RuleFivePosGap);
    }
    for s in &b.slaves {
        if s.base.prev_hash != b.master.base.prev_hash {
            return Err(ChainError::RuleThreeBranch { pos: s.pos });
        }
    }
    let q = master_problem(b, queue)?;
    let master: ProofResult = stack_proof(&pre, b.master.nonce, q, view, &params.sched, params.gas_limit);
    if !master.work.beats(&params.target) {
        return Err(ChainError::RuleTwoTarget);
    }
    for s in &b.slaves {
        verify_slave_header(s, queue.at(s.pos), view, params).map_err(|source| ChainError::RuleFourSlave { pos: s.pos, source })?;
    }
    Ok(MasterCheck {
        n_fnv: master.n_fnv(),
        gas_used: master.gas_used,
    })
}

#[derive(Clone, Debug)]
pub struct ChainNode {
    pub block: Arc<Block>,
    pub hash: Hash256,
    pub height: u64,
    /// Queue and ledger after this block.
    pub economy: Arc<Economy>,
    pub settlement: Option<Settlement>,
}

/// All valid blocks seen, each with its post-state, plus the fork-choice tip.
pub struct Chain {
    params: ChainParams,
    view: Arc<ChainView>,
    nodes: HashMap<Hash256, ChainNode>,
    genesis: Hash256,
    best: Hash256,
    appended: Vec<Hash256>,
    log: Option<BufWriter<File>>,
}

impl Chain {
    pub fn new(params: ChainParams, view: ChainView, economy: Economy) -> Self {
        let queue_root = economy.snapshot().root();
        let body = b"genesis".to_vec();
        let genesis = Block {
            master: MasterHeader {
                base: HeaderPreimage {
                    prev_hash: Hash256::ZERO,
                    merkle_root: merkle_root(&body),
                    height: 0,
                    timestamp: 0,
                    coinbase: GENESIS_COINBASE,
                },
                pos: 0,
                nonce: 0,
                problem_id: economy.default_problem().id,
            },
            slaves: Vec::new(),
            queue_root,
            body,
        };
        let hash = genesis.hash();
        let mut nodes = HashMap::new();
        nodes.insert(
            hash,
            ChainNode {
                block: Arc::new(genesis),
                hash,
                height: 0,
                economy: Arc::new(economy),
                settlement: None,
            },
        );
        Chain {
            params,
            view: Arc::new(view),
            nodes,
            genesis: hash,
            best: hash,
            appended: Vec::new(),
            log: None,
        }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn view(&self) -> &Arc<ChainView> {
        &self.view
    }

    pub fn genesis(&self) -> Hash256 {
        self.genesis
    }

    pub fn node(&self, hash: &Hash256) -> Option<&ChainNode> {
        self.nodes.get(hash)
    }

    pub fn contains(&self, hash: &Hash256) -> bool {
        self.nodes.contains_key(hash)
    }

    /// Number of blocks, genesis included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-genesis blocks in the order they were appended.
    pub fn appended(&self) -> &[Hash256] {
        &self.appended
    }

    /// Validates `b` against its parent and, if valid, stores it and settles it.
    pub fn append_block(&mut self, b: Block) -> Result<Hash256, ChainError> {
        let hash = b.hash();
        if self.nodes.contains_key(&hash) {
            return Err(ChainError::DuplicateBlock);
        }
        let parent = self.nodes.get(&b.parent()).ok_or(ChainError::UnknownParent)?;
        let snapshot = parent.economy.snapshot();
        let check = validate_cluster(&b, &parent.hash, parent.height, &snapshot, &*self.view, &self.params)?;
        let (economy, settlement) = match self.params.mode {
            ConsensusMode::Axe => {
                let mut e = (*parent.economy).clone();
                let s = e.settle_block(&b, &self.params.target, check.n_fnv, check.gas_used);
                (Arc::new(e), Some(s))
            }
            ConsensusMode::Bbgs => (parent.economy.clone(), None),
        };
        let height = parent.height + 1;
        if let Some(log) = &mut self.log {
            write_record(log, &b)?;
        }
        self.nodes.insert(
            hash,
            ChainNode {
                block: Arc::new(b),
                hash,
                height,
                economy,
                settlement,
            },
        );
        self.appended.push(hash);
        if better(height, &hash, self.nodes[&self.best].height, &self.best) {
            self.best = hash;
        }
        Ok(hash)
    }

    /// Highest block; equal heights go to the lower hash.
    pub fn fork_choice(&self) -> Hash256 {
        self.best
    }

    /// Hashes from genesis to `tip`.
    pub fn path_to(&self, tip: &Hash256) -> Vec<Hash256> {
        let mut out = Vec::new();
        let mut at = *tip;
        while let Some(n) = self.nodes.get(&at) {
            out.push(at);
            if at == self.genesis {
                break;
            }
            at = n.block.parent();
        }
        out.reverse();
        out
    }

    pub fn canonical(&self) -> Vec<Hash256> {
        self.path_to(&self.best)
    }

    /// Starts appending every stored block, and each future one, to `path`.
    pub fn persist_to(&mut self, path: &Path) -> Result<(), ChainError> {
        let file = OpenOptions::new().create(true).truncate(true).write(true).open(path)?;
        let mut log = BufWriter::new(file);
        for h in &self.appended {
            write_record(&mut log, &self.nodes[h].block)?;
        }
        log.flush()?;
        self.log = Some(log);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), ChainError> {
        if let Some(log) = &mut self.log {
            log.flush()?;
        }
        Ok(())
    }

    /// Rebuilds a chain by replaying a block file on top of a fresh genesis.
    pub fn load(path: &Path, params: ChainParams, view: ChainView, economy: Economy) -> Result<Self, ChainError> {
        let mut chain = Chain::new(params, view, economy);
        for b in read_blocks(path)? {
            chain.append_block(b)?;
        }
        Ok(chain)
    }
}

/// Fork-choice order: higher wins, then lower hash.
pub fn better(height: u64, hash: &Hash256, than_height: u64, than_hash: &Hash256) -> bool {
    height > than_height || (height == than_height && hash < than_hash)
}

fn write_record(w: &mut impl Write, b: &Block) -> io::Result<()> {
    let bytes = b.to_bytes();
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(&bytes)
}

/// Reads a file of length-prefixed serialized blocks.
pub fn read_blocks(path: &Path) -> Result<Vec<Block>, ChainError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Cursor { bytes: &bytes, at: 0 };
    let mut out = Vec::new();
    while r.at < bytes.len() {
        let len = r.u32()? as usize;
        out.push(Block::from_bytes(r.take(len)?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::corpus;
    use crate::economy::{int, EconomyParams};
    use crate::pvm::EmptyState;

    fn preimage(coinbase: u32) -> HeaderPreimage {
        HeaderPreimage {
            prev_hash: sha3(b"parent"),
            merkle_root: merkle_root(b"body"),
            height: 1,
            timestamp: 5,
            coinbase,
        }
    }

    fn params() -> ChainParams {
        ChainParams {
            target: Target::from_difficulty(1 << 40),
            ..ChainParams::default()
        }
    }

    /// Mines a slave header on `q` the honest way: scan nonces tracking the minimum work.
    fn mine_slave(base: HeaderPreimage, pos: u64, q: &ProblemContract, p: &ChainParams) -> SlaveHeader {
        let pre = base.to_bytes();
        let mut min = (Work::MAX, 0u64);
        for nonce in 0.. {
            let r = stack_proof(&pre, nonce, q, &EmptyState, &p.sched, p.gas_limit);
            if r.work.beats(&p.target) {
                // a miner would have packed a master here; start a fresh window
                min = (Work::MAX, 0);
                continue;
            }
            if r.work < min.0 {
                min = (r.work, nonce);
            }
            if r.solved {
                return SlaveHeader {
                    base,
                    pos,
                    nonce,
                    min_nonce: min.1,
                    problem_id: q.id,
                    min_work: min.0,
                };
            }
        }
        unreachable!()
    }

    #[test]
    fn preimage_layout() {
        let p = preimage(7);
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..32], sha3(b"parent").as_bytes());
        assert_eq!(&bytes[64..72], &1u64.to_be_bytes());
        assert_eq!(&bytes[80..], &7u32.to_be_bytes());
    }

    #[test]
    fn honest_slave_verifies() {
        let p = params();
        let q = corpus::subset_sum_1_to_5();
        let h = mine_slave(preimage(1), 0, &q, &p);
        assert_eq!(verify_slave_header(&h, &q, &EmptyState, &p), Ok(()));
    }

    #[test]
    fn slave_rejections() {
        let p = params();
        let q = corpus::subset_sum_1_to_5();
        let base = preimage(1);
        let h = mine_slave(base, 0, &q, &p);
        let pre = base.to_bytes();
        let bad = (0..)
            .find(|n| !stack_proof(&pre, *n, &q, &EmptyState, &p.sched, p.gas_limit).solved)
            .unwrap();
        let not_solution = SlaveHeader { nonce: bad, ..h };
        assert_eq!(verify_slave_header(&not_solution, &q, &EmptyState, &p), Err(SlaveError::NotASolution));
        let shifted = SlaveHeader { min_nonce: h.min_nonce + 1, ..h };
        assert_eq!(verify_slave_header(&shifted, &q, &EmptyState, &p), Err(SlaveError::MinWorkMismatch));
        let wrong = SlaveHeader { problem_id: sha3(b"other"), ..h };
        assert_eq!(verify_slave_header(&wrong, &q, &EmptyState, &p), Err(SlaveError::ProblemMismatch));
        let easy = ChainParams { target: Target::MAX, ..p };
        assert_eq!(verify_slave_header(&h, &q, &EmptyState, &easy), Err(SlaveError::ShouldBeMaster));
    }

    #[test]
    fn min_nonce_shift_is_detected_broadly() {
        let p = params();
        let q = corpus::always_true();
        for c in 0..50u32 {
            let h = mine_slave(preimage(c), 0, &q, &p);
            let shifted = SlaveHeader { min_nonce: h.min_nonce + 1, ..h };
            assert_eq!(verify_slave_header(&shifted, &q, &EmptyState, &p), Err(SlaveError::MinWorkMismatch));
        }
    }

    #[test]
    fn block_round_trip() {
        let p = params();
        let q = corpus::always_true();
        let s = mine_slave(preimage(2), 0, &q, &p);
        let b = Block {
            master: MasterHeader { base: preimage(3), pos: 1, nonce: 99, problem_id: q.id },
            slaves: vec![s],
            queue_root: sha3(b"q"),
            body: b"body".to_vec(),
        };
        let bytes = b.to_bytes();
        assert_eq!(bytes.len(), MASTER_LEN + 34 + SLAVE_LEN + 4 + 4);
        assert_eq!(Block::from_bytes(&bytes).unwrap(), b);
        assert!(matches!(Block::from_bytes(&bytes[..bytes.len() - 1]), Err(ChainError::Decode(_))));
    }

    struct Fixture {
        chain: Chain,
        queue: Vec<ProblemContract>,
    }

    fn fixture(difficulty: u64) -> Fixture {
        let p = ChainParams {
            target: Target::from_difficulty(difficulty),
            ..ChainParams::default()
        };
        let mut econ = Economy::new(EconomyParams { initial_w: int(10), ..EconomyParams::default() }, corpus::default_problem());
        let queue: Vec<ProblemContract> = (0..3u128)
            .map(|i| corpus::always_true().with_deposit(1_000_000 + i).unwrap())
            .collect();
        for q in &queue {
            econ.enqueue(q.clone()).unwrap();
        }
        Fixture {
            chain: Chain::new(p, ChainView::default(), econ),
            queue,
        }
    }

    /// Builds a child of `parent` with `k` honest slaves and a winning master.
    fn build(chain: &Chain, parent: &Hash256, k: usize, coinbase: u32) -> Block {
        let node = chain.node(parent).unwrap();
        let snap = node.economy.snapshot();
        let body = format!("block by {coinbase}").into_bytes();
        let base = HeaderPreimage {
            prev_hash: *parent,
            merkle_root: merkle_root(&body),
            height: node.height + 1,
            timestamp: node.height + 1,
            coinbase,
        };
        let p = chain.params();
        let slaves: Vec<SlaveHeader> = (0..k).map(|i| mine_slave(base, i as u64, snap.at(i as u64), p)).collect();
        let q = snap.at(k as u64).clone();
        let pre = base.to_bytes();
        let nonce = (0..)
            .find(|n| stack_proof(&pre, *n, &q, &*chain.view, &p.sched, p.gas_limit).work.beats(&p.target))
            .unwrap();
        Block {
            master: MasterHeader { base, pos: k as u64, nonce, problem_id: q.id },
            slaves,
            queue_root: snap.root(),
            body,
        }
    }

    #[test]
    fn valid_cluster_with_two_slaves() {
        let mut f = fixture(2000);
        let g = f.chain.genesis();
        let b = build(&f.chain, &g, 2, 1);
        assert_eq!(b.master.pos, 2);
        let h = f.chain.append_block(b).unwrap();
        assert_eq!(f.chain.node(&h).unwrap().height, 1);
        assert_eq!(f.chain.fork_choice(), h);
        assert!(f.chain.node(&h).unwrap().economy.conserves());
        assert_eq!(f.queue.len(), 3);
    }

    #[test]
    fn zero_slaves_is_valid() {
        let mut f = fixture(2000);
        let g = f.chain.genesis();
        let b = build(&f.chain, &g, 0, 1);
        assert!(f.chain.append_block(b).is_ok());
    }

    #[test]
    fn rule_violations() {
        let f = fixture(2000);
        let g = f.chain.genesis();
        let node = f.chain.node(&g).unwrap();
        let snap = node.economy.snapshot();
        let p = *f.chain.params();
        let check = |b: &Block| validate_cluster(b, &g, 0, &snap, &ChainView::default(), &p);
        let good = build(&f.chain, &g, 3, 1);
        assert!(check(&good).is_ok());

        let mut body = good.clone();
        body.body.push(0);
        assert!(matches!(check(&body), Err(ChainError::RuleOneMerkle)));

        let mut gap = good.clone();
        gap.slaves.remove(1);
        assert!(matches!(check(&gap), Err(ChainError::RuleFivePosGap)));

        let mut branch = good.clone();
        branch.slaves[1].base.prev_hash = sha3(b"elsewhere");
        assert!(matches!(check(&branch), Err(ChainError::RuleThreeBranch { pos: 1 })));

        let mut forged = good.clone();
        forged.slaves[2].min_nonce += 1;
        assert!(matches!(
            check(&forged),
            Err(ChainError::RuleFourSlave { pos: 2, source: SlaveError::MinWorkMismatch })
        ));

        let mut loser = good.clone();
        let pre = loser.master.base.to_bytes();
        let q = snap.at(3);
        loser.master.nonce = (0..)
            .find(|n| !stack_proof(&pre, *n, q, &EmptyState, &p.sched, p.gas_limit).work.beats(&p.target))
            .unwrap();
        assert!(matches!(check(&loser), Err(ChainError::RuleTwoTarget)));

        let mut root = good.clone();
        root.queue_root = Hash256::ZERO;
        assert!(matches!(check(&root), Err(ChainError::QueueRootMismatch)));
    }

    #[test]
    fn rule_five_accepts_only_ascending() {
        let f = fixture(2000);
        let g = f.chain.genesis();
        let snap = f.chain.node(&g).unwrap().economy.snapshot();
        let p = *f.chain.params();
        let good = build(&f.chain, &g, 3, 1);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for perm in perms {
            let mut b = good.clone();
            b.slaves = perm.iter().map(|i| good.slaves[*i]).collect();
            let r = validate_cluster(&b, &g, 0, &snap, &ChainView::default(), &p);
            if perm == [0, 1, 2] {
                assert!(r.is_ok());
            } else {
                assert!(matches!(r, Err(ChainError::RuleFivePosGap)), "{perm:?}");
            }
        }
    }

    #[test]
    fn slaves_do_not_depend_on_body() {
        let f = fixture(2000);
        let g = f.chain.genesis();
        let snap = f.chain.node(&g).unwrap().economy.snapshot();
        let p = *f.chain.params();
        let good = build(&f.chain, &g, 2, 1);
        for s in &good.slaves {
            assert!(verify_slave_header(s, snap.at(s.pos), &EmptyState, &p).is_ok());
        }
        // new body, new merkle root, new master; the same slaves still verify
        let mut moved = good.clone();
        moved.body = b"other body".to_vec();
        moved.master.base.merkle_root = merkle_root(&moved.body);
        for s in &moved.slaves {
            assert!(verify_slave_header(s, snap.at(s.pos), &EmptyState, &p).is_ok());
        }
    }

    #[test]
    fn append_errors_and_fork_choice() {
        let mut f = fixture(500);
        let g = f.chain.genesis();
        let a1 = build(&f.chain, &g, 0, 1);
        let h1 = f.chain.append_block(a1.clone()).unwrap();
        assert!(matches!(f.chain.append_block(a1), Err(ChainError::DuplicateBlock)));
        let mut orphan = build(&f.chain, &h1, 0, 1);
        orphan.master.base.prev_hash = sha3(b"nowhere");
        assert!(matches!(f.chain.append_block(orphan), Err(ChainError::UnknownParent)));

        // branch a: 3 blocks, branch b: 4 blocks
        let mut a = h1;
        for _ in 0..2 {
            let b = build(&f.chain, &a, 0, 1);
            a = f.chain.append_block(b).unwrap();
        }
        let mut b = g;
        for _ in 0..4 {
            let blk = build(&f.chain, &b, 0, 2);
            b = f.chain.append_block(blk).unwrap();
        }
        assert_eq!(f.chain.fork_choice(), b);
        assert_eq!(f.chain.canonical().len(), 5);

        // equal heights: lower hash wins
        let c1 = build(&f.chain, &g, 0, 3);
        let c2 = build(&f.chain, &g, 0, 4);
        let mut fresh = fixture(500);
        let x = fresh.chain.append_block(c1).unwrap();
        let y = fresh.chain.append_block(c2).unwrap();
        assert_eq!(fresh.chain.fork_choice(), x.min(y));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = std::env::temp_dir().join(format!("axechain-chain-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chain.bin");
        let mut f = fixture(500);
        f.chain.persist_to(&path).unwrap();
        let mut tip = f.chain.genesis();
        for i in 0..4 {
            let b = build(&f.chain, &tip, i % 2, 1);
            tip = f.chain.append_block(b).unwrap();
        }
        f.chain.flush().unwrap();
        let g = fixture(500);
        let econ = (*g.chain.node(&g.chain.genesis()).unwrap().economy).clone();
        let loaded = Chain::load(&path, *f.chain.params(), ChainView::default(), econ).unwrap();
        assert_eq!(loaded.fork_choice(), tip);
        assert_eq!(loaded.appended(), f.chain.appended());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
