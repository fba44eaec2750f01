//! Mining strategies: the honest header-cluster loop, the BBGS baseline and
//! the two attackers.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::chain::{merkle_root, Block, ChainParams, HeaderPreimage, MasterHeader, SlaveHeader};
use crate::contracts::{ProblemContract, SolutionVector};
use crate::economy::{QueueSnapshot, G_FNV};
use crate::primitives::Hash256;
use crate::proof::{map_solution, seed_hash, stack_proof, ProofResult, StackTrace, Work};
use crate::pvm::{self, NoSampling, StateReader};

/// Gas charged for the single hash of a BBGS attempt.
pub const BBGS_HASH_GAS: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    HonestAxe,
    HonestBbgs,
    AttackerBbgsSkip,
    AttackerConstantStack,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::HonestAxe => "honest-axe",
            StrategyKind::HonestBbgs => "honest-bbgs",
            StrategyKind::AttackerBbgsSkip => "attacker-bbgs-skip",
            StrategyKind::AttackerConstantStack => "attacker-constant-stack",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            StrategyKind::HonestAxe,
            StrategyKind::HonestBbgs,
            StrategyKind::AttackerBbgsSkip,
            StrategyKind::AttackerConstantStack,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn is_attacker(self) -> bool {
        matches!(self, StrategyKind::AttackerBbgsSkip | StrategyKind::AttackerConstantStack)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MineEvent {
    None,
    SlaveFound(SlaveHeader),
    BlockFound(Block),
}

impl MineEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            MineEvent::None => "none",
            MineEvent::SlaveFound(_) => "slave",
            MineEvent::BlockFound(_) => "block",
        }
    }
}

/// One attempt: what happened and what it cost in gas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepResult {
    pub event: MineEvent,
    pub cost: u64,
    pub pos: u64,
    pub nonce: u64,
    pub work: Option<Work>,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum AdoptError {
    #[error("header is for pos {got}, miner is at pos {want}")]
    StalePos { got: u64, want: u64 },
    #[error("header builds on a different parent")]
    WrongBranch,
    #[error("header failed verification")]
    InvalidSlave,
    #[error("slave cap reached")]
    CapReached,
}

pub struct MinerEnv<'a> {
    pub params: &'a ChainParams,
    pub view: &'a dyn StateReader,
}

/// Body bytes a miner packs: a constant marker and its id.
pub fn block_body(id: u32) -> Vec<u8> {
    let mut body = b"axe-body".to_vec();
    body.extend_from_slice(&id.to_be_bytes());
    body
}

/// Per-miner mining state for one round (one parent block).
#[derive(Clone)]
pub struct MinerState {
    pub id: u32,
    pub strategy: StrategyKind,
    pub header0: HeaderPreimage,
    pub pos: u64,
    pub nonce: u64,
    pub current_problem: Arc<ProblemContract>,
    pub min_work: Work,
    pub min_nonce: u64,
    pub slave_headers: Vec<SlaveHeader>,
    pub solved: bool,
    preimage: [u8; crate::chain::PREIMAGE_LEN],
    queue: QueueSnapshot,
    queue_root: Hash256,
    body: Vec<u8>,
    traces: HashMap<Hash256, Arc<StackTrace>>,
}

impl MinerState {
    pub fn new(id: u32, strategy: StrategyKind, parent: Hash256, parent_height: u64, queue: QueueSnapshot, timestamp: u64, nonce: u64) -> Self {
        let body = block_body(id);
        let header0 = HeaderPreimage {
            prev_hash: parent,
            merkle_root: merkle_root(&body),
            height: parent_height + 1,
            timestamp,
            coinbase: id,
        };
        let current_problem = queue.at(0).clone();
        MinerState {
            id,
            strategy,
            header0,
            pos: 0,
            nonce,
            current_problem,
            min_work: Work::MAX,
            min_nonce: nonce,
            slave_headers: Vec::new(),
            solved: false,
            preimage: header0.to_bytes(),
            queue_root: queue.root(),
            queue,
            body,
            traces: HashMap::new(),
        }
    }

    /// Begins a new round on top of `parent`.
    pub fn start_round(&mut self, parent: Hash256, parent_height: u64, queue: QueueSnapshot, timestamp: u64, nonce: u64) {
        let traces = std::mem::take(&mut self.traces);
        *self = MinerState::new(self.id, self.strategy, parent, parent_height, queue, timestamp, nonce);
        self.traces = traces;
    }

    pub fn parent(&self) -> Hash256 {
        self.header0.prev_hash
    }

    pub fn queue(&self) -> &QueueSnapshot {
        &self.queue
    }

    fn advance(&mut self) {
        self.pos += 1;
        self.min_work = Work::MAX;
        self.min_nonce = self.nonce;
        self.current_problem = self.queue.at(self.pos).clone();
        self.solved = false;
    }

    fn build_block(&self, nonce: u64) -> Block {
        Block {
            master: MasterHeader {
                base: self.header0,
                pos: self.pos,
                nonce,
                problem_id: self.current_problem.id,
            },
            slaves: self.slave_headers.clone(),
            queue_root: self.queue_root,
            body: self.body.clone(),
        }
    }

    /// Runs one attempt according to the miner's strategy.
    pub fn mine_step(&mut self, env: &MinerEnv<'_>) -> StepResult {
        match self.strategy {
            StrategyKind::HonestAxe => self.axe_step(env, None),
            StrategyKind::AttackerConstantStack => self.constant_stack_attack_step(env),
            StrategyKind::HonestBbgs => self.bbgs_step(env, true),
            StrategyKind::AttackerBbgsSkip => self.bbgs_step(env, false),
        }
    }

    fn axe_step(&mut self, env: &MinerEnv<'_>, replayed: Option<ProofResult>) -> StepResult {
        let nonce = self.nonce;
        let p = env.params;
        let (proof, cost) = match replayed {
            Some(r) => {
                let cost = r.n_fnv() * G_FNV;
                (r, cost)
            }
            None => {
                let r = stack_proof(&self.preimage, nonce, &self.current_problem, env.view, &p.sched, p.gas_limit);
                let cost = r.n_fnv() * G_FNV + r.gas_used;
                (r, cost)
            }
        };
        self.nonce = nonce.wrapping_add(1);
        let pos = self.pos;
        if proof.work < self.min_work {
            self.min_work = proof.work;
            self.min_nonce = nonce;
        }
        let event = if proof.work.beats(&p.target) {
            MineEvent::BlockFound(self.build_block(nonce))
        } else if proof.solved && self.slave_headers.len() < p.max_slaves {
            let header = SlaveHeader {
                base: self.header0,
                pos,
                nonce,
                min_nonce: self.min_nonce,
                problem_id: self.current_problem.id,
                min_work: self.min_work,
            };
            self.solved = true;
            self.slave_headers.push(header);
            self.advance();
            MineEvent::SlaveFound(header)
        } else {
            MineEvent::None
        };
        StepResult {
            event,
            cost,
            pos,
            nonce,
            work: Some(proof.work),
        }
    }

    /// Attempts a nonce without executing the contract: the stack trace is
    /// recorded once per problem and replayed into the snapshot chain. Only
    /// the proof's FNV work is paid.
    pub fn constant_stack_attack_step(&mut self, env: &MinerEnv<'_>) -> StepResult {
        let q = self.current_problem.clone();
        let trace = self
            .traces
            .entry(q.id)
            .or_insert_with(|| {
                let lows = SolutionVector(q.space.dims().iter().map(|(a, _)| *a).collect());
                Arc::new(StackTrace::record(&q, &lows, env.view, env.params.gas_limit))
            })
            .clone();
        let proof = trace.replay_proof(self.nonce, &self.preimage, &env.params.sched);
        self.axe_step(env, Some(proof))
    }

    /// One BBGS attempt: a block if the hash beats the target or, for the
    /// honest variant, if the mapped candidate solves the problem.
    pub fn bbgs_step(&mut self, env: &MinerEnv<'_>, honest: bool) -> StepResult {
        let nonce = self.nonce;
        self.nonce = nonce.wrapping_add(1);
        let h = seed_hash(nonce, &self.preimage);
        let mut cost = BBGS_HASH_GAS;
        let mut found = h.to_word() < env.params.target.0;
        if !found && honest {
            let q = &self.current_problem;
            let input = map_solution(&h, &q.space).to_words();
            let out = pvm::execute(&q.solve_code, &input, env.params.gas_limit, env.view, &mut NoSampling);
            cost += out.gas_used;
            found = out.solved;
        }
        let event = if found {
            MineEvent::BlockFound(self.build_block(nonce))
        } else {
            MineEvent::None
        };
        StepResult {
            event,
            cost,
            pos: 0,
            nonce,
            work: None,
        }
    }

    /// Adopts a slave header mined by someone else for the current position.
    /// `verify` is consulted only after the cheap position checks pass.
    pub fn on_slave_received(
        &mut self,
        header: &SlaveHeader,
        max_slaves: usize,
        verify: impl FnOnce(&SlaveHeader, &ProblemContract) -> bool,
    ) -> Result<(), AdoptError> {
        if header.base.prev_hash != self.header0.prev_hash {
            return Err(AdoptError::WrongBranch);
        }
        if header.pos != self.pos {
            return Err(AdoptError::StalePos { got: header.pos, want: self.pos });
        }
        if self.slave_headers.len() >= max_slaves {
            return Err(AdoptError::CapReached);
        }
        if !verify(header, &self.current_problem) {
            return Err(AdoptError::InvalidSlave);
        }
        self.slave_headers.push(*header);
        self.advance();
        Ok(())
    }
}
