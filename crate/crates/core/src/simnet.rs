//! Deterministic discrete-event network of miners, and the digest and
//! solve-frequency experiments.
//!
//! Time advances in ticks. Each tick every miner receives its gas budget and
//! mines until the budget is spent; overspending carries into the next tick.
//! Messages sent at tick `t` arrive at `t + latency` and are delivered in
//! (tick, sender, sequence) order. All randomness comes from the seed.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{
    better, validate_cluster, verify_slave_header, Chain, ChainParams, ChainView, ConsensusMode, SlaveHeader,
    DEFAULT_MAX_SLAVES,
};
use crate::config::{invalid, ConfigError, Document};
use crate::contracts::corpus::{self, TestMode};
use crate::contracts::{load_package, ProblemContract};
use crate::economy::{block_w_sample, fmt_amount, int, Economy, EconomyParams, LedgerTotals};
use crate::miner::{MineEvent, MinerEnv, MinerState, StrategyKind};
use crate::primitives::{sha3_concat, Hash256};
use crate::proof::{
    proof_from_seed, stack_proof, SamplingSchedule, Target, DEFAULT_GAS_LIMIT, DEFAULT_K_RATIO, DEFAULT_SAMPLE_INTERVAL,
};

/// Balance of account `i` in the simulated chain view.
pub fn sim_balance(i: u64) -> u64 {
    i.wrapping_mul(7919) % 2000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MinerSpec {
    pub strategy: StrategyKind,
    pub gas_per_tick: u64,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub mode: ConsensusMode,
    pub miners: Vec<MinerSpec>,
    /// Expected FNV units per master block.
    pub difficulty: u64,
    pub sched: SamplingSchedule,
    pub gas_limit: u64,
    pub max_slaves: usize,
    pub latency: u64,
    pub max_ticks: u64,
    /// Stop once this many valid blocks were produced; 0 means no limit.
    pub max_blocks: u64,
    pub queue: Vec<ProblemContract>,
    pub default_problem: ProblemContract,
    pub economy: EconomyParams,
    pub accounts: u64,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            mode: ConsensusMode::Axe,
            miners: vec![MinerSpec { strategy: StrategyKind::HonestAxe, gas_per_tick: 20_000 }; 8],
            difficulty: 1 << 20,
            sched: SamplingSchedule::default(),
            gas_limit: DEFAULT_GAS_LIMIT,
            max_slaves: DEFAULT_MAX_SLAVES,
            latency: 1,
            max_ticks: 1000,
            max_blocks: 100_000,
            queue: vec![corpus::always_true()],
            default_problem: corpus::default_problem(),
            economy: EconomyParams::default(),
            accounts: corpus::CHAIN_FILTER_ACCOUNTS,
            trace: false,
        }
    }
}

const SIM_KEYS: &[&str] = &[
    "seed",
    "mode",
    "miners",
    "gas_per_tick",
    "difficulty",
    "sample_interval",
    "k_ratio",
    "gas_limit",
    "max_slaves",
    "latency",
    "max_ticks",
    "max_blocks",
    "accounts",
    "trace",
];

impl SimConfig {
    pub fn target(&self) -> Target {
        Target::from_difficulty(self.difficulty)
    }

    pub fn chain_params(&self) -> ChainParams {
        ChainParams {
            mode: self.mode,
            target: self.target(),
            sched: self.sched,
            gas_limit: self.gas_limit,
            max_slaves: self.max_slaves,
        }
    }

    pub fn view(&self) -> ChainView {
        ChainView::with_balances(self.accounts, sim_balance)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| Err(invalid("sim", key, msg.to_string()));
        if self.miners.is_empty() {
            return bad("miners", "at least one miner is required");
        }
        if self.miners.iter().any(|m| m.gas_per_tick == 0) {
            return bad("gas_per_tick", "must be positive");
        }
        if self.difficulty == 0 {
            return bad("difficulty", "must be positive");
        }
        if self.sched.v == 0 || self.sched.k_ratio == 0 {
            return bad("sample_interval", "sample interval and k_ratio must be positive");
        }
        if self.gas_limit == 0 {
            return bad("gas_limit", "must be positive");
        }
        if self.economy.w_window == 0 {
            return Err(invalid("economy", "w_window", "must be positive".into()));
        }
        Ok(())
    }

    /// Reads `[sim]`, `[queue]` and `[economy]`. Relative package paths are
    /// resolved against `base`.
    pub fn from_document(doc: &Document, base: &Path) -> Result<Self, ConfigError> {
        doc.check_keys("sim", SIM_KEYS)?;
        doc.check_keys("queue", &["problem", "default"])?;
        doc.check_keys("economy", &["decay", "min_deposit_w", "gas_price", "w_window", "initial_w"])?;
        let d = SimConfig::default();
        let mode = match doc.get("sim", "mode").unwrap_or("axe") {
            "axe" => ConsensusMode::Axe,
            "bbgs" => ConsensusMode::Bbgs,
            other => return Err(invalid("sim", "mode", format!("expected axe or bbgs, got {other:?}"))),
        };
        let gas = doc.parse_or("sim", "gas_per_tick", 20_000u64)?;
        let miners = match doc.get("sim", "miners") {
            None => vec![MinerSpec { strategy: StrategyKind::HonestAxe, gas_per_tick: gas }; 8],
            Some(text) => parse_miners(text, gas)?,
        };
        let sched = SamplingSchedule {
            v: doc.parse_or("sim", "sample_interval", DEFAULT_SAMPLE_INTERVAL)?,
            k_ratio: doc.parse_or("sim", "k_ratio", DEFAULT_K_RATIO)?,
        };
        let queue = match doc.get_all("queue", "problem") {
            v if v.is_empty() => d.queue.clone(),
            v => v.iter().map(|s| resolve_problem(s, base)).collect::<Result<_, _>>()?,
        };
        let default_problem = match doc.get("queue", "default") {
            None => d.default_problem.clone(),
            Some(s) => resolve_problem(s, base)?,
        };
        let e = EconomyParams::default();
        let rational = |key: &str, dflt: BigRational| -> Result<BigRational, ConfigError> {
            match doc.get("economy", key) {
                None => Ok(dflt),
                Some(v) => crate::security::parse_rational(v).ok_or_else(|| invalid("economy", key, format!("bad number {v:?}"))),
            }
        };
        let economy = EconomyParams {
            decay: doc.parse_or("economy", "decay", e.decay)?,
            min_deposit_w: rational("min_deposit_w", e.min_deposit_w.clone())?,
            gas_price: doc.parse_or("economy", "gas_price", e.gas_price)?,
            w_window: doc.parse_or("economy", "w_window", e.w_window)?,
            initial_w: rational("initial_w", e.initial_w.clone())?,
        };
        let cfg = SimConfig {
            seed: doc.parse_or("sim", "seed", d.seed)?,
            mode,
            miners,
            difficulty: doc.parse_or("sim", "difficulty", d.difficulty)?,
            sched,
            gas_limit: doc.parse_or("sim", "gas_limit", d.gas_limit)?,
            max_slaves: doc.parse_or("sim", "max_slaves", d.max_slaves)?,
            latency: doc.parse_or("sim", "latency", d.latency)?,
            max_ticks: doc.parse_or("sim", "max_ticks", d.max_ticks)?,
            max_blocks: doc.parse_or("sim", "max_blocks", d.max_blocks)?,
            queue,
            default_problem,
            economy,
            accounts: doc.parse_or("sim", "accounts", d.accounts)?,
            trace: doc.parse_or("sim", "trace", d.trace)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `strategy[*count][:gas]` items separated by commas.
pub fn parse_miners(text: &str, default_gas: u64) -> Result<Vec<MinerSpec>, ConfigError> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = |msg: String| invalid("sim", "miners", msg);
        let (rest, gas) = match item.split_once(':') {
            Some((r, g)) => (r, g.trim().parse().map_err(|_| bad(format!("bad gas in {item:?}")))?),
            None => (item, default_gas),
        };
        let (name, count) = match rest.split_once('*') {
            Some((n, c)) => (n, c.trim().parse().map_err(|_| bad(format!("bad count in {item:?}")))?),
            None => (rest, 1usize),
        };
        let strategy = StrategyKind::parse(name.trim()).ok_or_else(|| bad(format!("unknown strategy {name:?}")))?;
        out.extend(std::iter::repeat(MinerSpec { strategy, gas_per_tick: gas }).take(count));
    }
    Ok(out)
}

/// Resolves a queue entry: a source followed by optional `tip=`, `deposit=`
/// and `times=` overrides. Sources are corpus names (`subset_sum`,
/// `test_add`, ...), generators (`subset_sum_experiment:N`,
/// `constant_stack:GAS`, `no_solution:GAS`) or a path to a package file.
pub fn resolve_problem(spec: &str, base: &Path) -> Result<ProblemContract, ConfigError> {
    let mut parts = spec.split_whitespace();
    let source = parts.next().ok_or_else(|| invalid("queue", "problem", "empty problem".into()))?;
    let bad = |msg: String| invalid("queue", "problem", msg);
    let arg = |s: &str| -> Result<u64, ConfigError> { s.parse().map_err(|_| bad(format!("bad argument in {source:?}"))) };
    let mut p = match source.split_once(':') {
        Some(("subset_sum_experiment", n)) => {
            let n = arg(n)?;
            if !(1..=60).contains(&n) {
                return Err(bad("subset_sum_experiment needs 1 <= n <= 60".into()));
            }
            corpus::subset_sum_experiment(n as u32, corpus::DEFAULT_DEPOSIT)
        }
        Some(("constant_stack", g)) => {
            let g = arg(g)?;
            if g < 28 {
                return Err(bad("constant_stack needs at least 28 gas".into()));
            }
            corpus::constant_stack(g)
        }
        Some(("no_solution", g)) => corpus::no_solution(arg(g)?),
        _ if source.ends_with(".axe") => {
            let path = base.join(source);
            let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
            load_package(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?
        }
        _ => corpus::all()
            .into_iter()
            .find(|(name, _)| name == source)
            .map(|(_, p)| p)
            .ok_or_else(|| bad(format!("unknown problem {source:?}")))?,
    };
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {kv:?}")))?;
        let num = |v: &str| -> Result<u128, ConfigError> { v.parse().map_err(|_| bad(format!("bad {k} value {v:?}"))) };
        p = match k {
            "tip" => p.with_tip(num(v)?),
            "deposit" => p.with_deposit(num(v)?),
            "times" => p.with_times(num(v)? as u64),
            _ => return Err(bad(format!("unknown override {k:?}"))),
        }
        .map_err(|e| bad(e.to_string()))?;
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemReport {
    pub id: Hash256,
    pub solutions: u64,
    /// Gas spent by all miners while this problem was their current one.
    pub gas_spent: u64,
    pub debited: BigRational,
    pub refunded: BigRational,
    pub exited: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimMetrics {
    pub ticks: u64,
    /// Valid blocks produced, genesis excluded.
    pub blocks: u64,
    pub canonical: u64,
    /// Produced blocks that are not on the canonical chain.
    pub forks: u64,
    pub rejected: u64,
    pub attempts: u64,
    pub mean_interval: f64,
    pub stdev_interval: f64,
    pub slave_histogram: BTreeMap<usize, u64>,
    pub blocks_by_miner: Vec<u64>,
    pub gas_by_miner: Vec<u64>,
    pub problems: Vec<ProblemReport>,
    pub ledger: LedgerTotals,
    pub ledger_closed: bool,
}

impl SimMetrics {
    /// Blocks produced by attackers over blocks produced by honest miners.
    pub fn attacker_ratio(&self, miners: &[MinerSpec]) -> f64 {
        let (mut a, mut h) = (0u64, 0u64);
        for (m, b) in miners.iter().zip(&self.blocks_by_miner) {
            if m.strategy.is_attacker() {
                a += b;
            } else {
                h += b;
            }
        }
        a as f64 / h as f64
    }

    pub fn block_rate(&self) -> f64 {
        self.blocks as f64 / self.ticks.max(1) as f64
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "ticks = {}", self.ticks);
        let _ = writeln!(o, "blocks = {}", self.blocks);
        let _ = writeln!(o, "canonical = {}", self.canonical);
        let _ = writeln!(o, "forks = {}", self.forks);
        let _ = writeln!(o, "rejected = {}", self.rejected);
        let _ = writeln!(o, "attempts = {}", self.attempts);
        let _ = writeln!(o, "mean_interval = {:.6}", self.mean_interval);
        let _ = writeln!(o, "stdev_interval = {:.6}", self.stdev_interval);
        for (k, n) in &self.slave_histogram {
            let _ = writeln!(o, "slaves_per_block.{k} = {n}");
        }
        for (i, (b, g)) in self.blocks_by_miner.iter().zip(&self.gas_by_miner).enumerate() {
            let _ = writeln!(o, "miner.{i} = blocks {b} gas {g}");
        }
        for p in &self.problems {
            let _ = writeln!(
                o,
                "problem.{} = solutions {} gas {} debited {} refunded {} exited {}",
                p.id,
                p.solutions,
                p.gas_spent,
                fmt_amount(&p.debited),
                fmt_amount(&p.refunded),
                p.exited
            );
        }
        let l = &self.ledger;
        let _ = writeln!(
            o,
            "ledger = deposited {} paid {} destroyed {} refunded {} minted {} tips_destroyed {}",
            fmt_amount(&l.deposited),
            fmt_amount(&l.paid),
            fmt_amount(&l.destroyed),
            fmt_amount(&l.refunded),
            fmt_amount(&l.minted),
            fmt_amount(&l.tips_destroyed)
        );
        let _ = writeln!(o, "ledger_closed = {}", self.ledger_closed);
        o
    }
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub metrics: SimMetrics,
    /// `tick miner kind pos nonce work` lines for every event.
    pub trace: Vec<String>,
    /// Settlement lines of the canonical chain.
    pub audit: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
enum Message {
    Block(Hash256),
    Slave(SlaveHeader),
}

struct Node {
    spec: MinerSpec,
    state: MinerState,
    tip: Hash256,
    tip_height: u64,
    budget: i64,
    rng: ChaCha8Rng,
}

impl Node {
    fn switch_to(&mut self, chain: &Chain, tip: Hash256, tick: u64) {
        let node = chain.node(&tip).expect("known block");
        self.tip = tip;
        self.tip_height = node.height;
        let nonce = self.rng.next_u64();
        self.state.start_round(tip, node.height, node.economy.snapshot(), tick, nonce);
    }
}

fn genesis_economy(cfg: &SimConfig) -> Result<Economy, ConfigError> {
    let mut e = Economy::new(cfg.economy.clone(), cfg.default_problem.clone());
    for p in &cfg.queue {
        e.enqueue(p.clone()).map_err(|err| invalid("queue", "problem", err.to_string()))?;
    }
    Ok(e)
}

/// Runs the network until `max_ticks` or `max_blocks`.
pub fn run_sim(cfg: &SimConfig) -> Result<SimReport, ConfigError> {
    cfg.validate()?;
    let params = cfg.chain_params();
    let mut chain = Chain::new(params, cfg.view(), genesis_economy(cfg)?);
    let view = chain.view().clone();
    let genesis = chain.genesis();
    let queue0 = chain.node(&genesis).expect("genesis").economy.snapshot();

    let mut nodes: Vec<Node> = cfg
        .miners
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let nonce = rng.next_u64();
            Node {
                spec: *spec,
                state: MinerState::new(i as u32, spec.strategy, genesis, 0, queue0.clone(), 0, nonce),
                tip: genesis,
                tip_height: 0,
                budget: 0,
                rng,
            }
        })
        .collect();

    let mut inbox: BTreeMap<(u64, u32, u64), Message> = BTreeMap::new();
    let mut seq = 0u64;
    let mut verified: HashMap<Hash256, bool> = HashMap::new();
    let mut produced_at: HashMap<Hash256, u64> = HashMap::new();
    produced_at.insert(genesis, 0);
    let mut problem_gas: BTreeMap<Hash256, u64> = BTreeMap::new();
    let mut trace = Vec::new();
    let n = nodes.len();
    let mut blocks_by_miner = vec![0u64; n];
    let mut gas_by_miner = vec![0u64; n];
    let (mut blocks, mut rejected, mut attempts) = (0u64, 0u64, 0u64);
    let mut ticks = 0u64;
    let mut done = false;

    while ticks < cfg.max_ticks && !done {
        let tick = ticks;
        while let Some(entry) = inbox.first_entry() {
            if entry.key().0 > tick {
                break;
            }
            let ((_, sender, _), msg) = entry.remove_entry();
            for (r, node) in nodes.iter_mut().enumerate() {
                if r as u32 == sender {
                    continue;
                }
                match msg {
                    Message::Block(hash) => {
                        let height = chain.node(&hash).expect("broadcast blocks are stored").height;
                        if better(height, &hash, node.tip_height, &node.tip) {
                            node.switch_to(&chain, hash, tick);
                        }
                    }
                    Message::Slave(h) => {
                        if cfg.mode != ConsensusMode::Axe
                            || matches!(node.spec.strategy, StrategyKind::HonestBbgs | StrategyKind::AttackerBbgsSkip)
                        {
                            continue;
                        }
                        let _ = node.state.on_slave_received(&h, params.max_slaves, |h, q| {
                            *verified
                                .entry(h.hash())
                                .or_insert_with(|| verify_slave_header(h, q, view.as_ref(), &params).is_ok())
                        });
                    }
                }
            }
        }

        for node in nodes.iter_mut() {
            node.budget += node.spec.gas_per_tick as i64;
        }
        // Attempts interleave in gas time: the next one goes to the miner
        // least far into its tick, lowest id first on ties.
        while !done {
            let Some(i) = next_miner(&nodes) else { break };
            let node = &mut nodes[i];
            {
                let problem = node.state.current_problem.id;
                let env = MinerEnv { params: &params, view: view.as_ref() };
                let res = node.state.mine_step(&env);
                node.budget -= res.cost as i64;
                gas_by_miner[i] += res.cost;
                *problem_gas.entry(problem).or_default() += res.cost;
                attempts += 1;
                let work = res.work.map(|w| w.to_hex()).unwrap_or_else(|| "-".into());
                match res.event {
                    MineEvent::None => {}
                    MineEvent::SlaveFound(h) => {
                        inbox.insert((tick + cfg.latency, i as u32, seq), Message::Slave(h));
                        seq += 1;
                        if cfg.trace {
                            trace.push(format!("{tick} {i} slave {} {} {work}", res.pos, res.nonce));
                        }
                    }
                    MineEvent::BlockFound(b) => match chain.append_block(b) {
                        Ok(hash) => {
                            blocks += 1;
                            blocks_by_miner[i] += 1;
                            produced_at.insert(hash, tick);
                            if cfg.trace {
                                trace.push(format!("{tick} {i} block {} {} {work}", res.pos, res.nonce));
                            }
                            node.switch_to(&chain, hash, tick);
                            inbox.insert((tick + cfg.latency, i as u32, seq), Message::Block(hash));
                            seq += 1;
                            done = cfg.max_blocks > 0 && blocks >= cfg.max_blocks;
                        }
                        Err(_) => {
                            rejected += 1;
                            if cfg.trace {
                                trace.push(format!("{tick} {i} reject {} {} {work}", res.pos, res.nonce));
                            }
                        }
                    },
                }
            }
        }
        ticks += 1;
    }

    let path = chain.canonical();
    let tip = *path.last().expect("genesis is canonical");
    let tip_node = chain.node(&tip).expect("tip");
    let intervals: Vec<f64> = path
        .windows(2)
        .map(|w| produced_at[&w[1]] as f64 - produced_at[&w[0]] as f64)
        .collect();
    let (mean_interval, stdev_interval) = mean_stdev(&intervals);
    let mut slave_histogram = BTreeMap::new();
    let mut audit = Vec::new();
    for h in &path[1..] {
        let node = chain.node(h).expect("canonical");
        *slave_histogram.entry(node.block.slaves.len()).or_insert(0) += 1;
        if let Some(s) = &node.settlement {
            audit.extend(s.audit_lines(h));
        }
    }
    let economy = &tip_node.economy;
    let problems = cfg
        .queue
        .iter()
        .map(|p| {
            let o = economy.outcomes().get(&p.id).cloned().unwrap_or_default();
            ProblemReport {
                id: p.id,
                solutions: o.solutions,
                gas_spent: problem_gas.get(&p.id).copied().unwrap_or(0),
                debited: o.debited,
                refunded: o.refunded,
                exited: o.exited,
            }
        })
        .collect();
    let canonical = path.len() as u64 - 1;
    let metrics = SimMetrics {
        ticks,
        blocks,
        canonical,
        forks: blocks - canonical,
        rejected,
        attempts,
        mean_interval,
        stdev_interval,
        slave_histogram,
        blocks_by_miner,
        gas_by_miner,
        problems,
        ledger: economy.totals().clone(),
        ledger_closed: economy.conserves(),
    };
    Ok(SimReport { metrics, trace, audit })
}

fn next_miner(nodes: &[Node]) -> Option<usize> {
    let mut best: Option<(usize, i128, i128)> = None;
    for (i, node) in nodes.iter().enumerate() {
        if node.budget <= 0 {
            continue;
        }
        let gas = node.spec.gas_per_tick as i128;
        let clock = gas - node.budget as i128;
        if best.map_or(true, |(_, c, g)| clock * g < c * gas) {
            best = Some((i, clock, gas));
        }
    }
    best.map(|b| b.0)
}

fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `scenario,blocks,forks,mean_interval`
pub fn scenario_csv(rows: &[(&str, &SimMetrics)]) -> String {
    let mut o = String::from("scenario,blocks,forks,mean_interval\n");
    for (name, m) in rows {
        let _ = writeln!(o, "{name},{},{},{:.6}", m.blocks, m.forks, m.mean_interval);
    }
    o
}

/// Runs `jobs` on all available cores and returns results in job order.
fn parallel_map<T: Sync, R: Send>(jobs: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= jobs.len() {
                            break local;
                        }
                        local.push((i, f(&jobs[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigestConfig {
    pub modes: Vec<TestMode>,
    /// Sampling frequencies in percent; 10 means one sample per 100 gas.
    pub freqs: Vec<u64>,
    pub n: u64,
    pub seed: u64,
    pub k_ratio: u64,
    pub gas_limit: u64,
}

impl Default for DigestConfig {
    fn default() -> Self {
        DigestConfig {
            modes: TestMode::ALL.to_vec(),
            freqs: vec![10, 20, 30, 40],
            n: 100_000,
            seed: 0,
            k_ratio: DEFAULT_K_RATIO,
            gas_limit: DEFAULT_GAS_LIMIT,
        }
    }
}

impl DigestConfig {
    pub fn from_document(doc: &Document) -> Result<Self, ConfigError> {
        doc.check_keys("digest", &["modes", "freqs", "n", "seed", "k_ratio", "gas_limit"])?;
        let d = DigestConfig::default();
        let modes = match doc.get("digest", "modes") {
            None => d.modes.clone(),
            Some(v) => parse_modes(v)?,
        };
        let cfg = DigestConfig {
            modes,
            freqs: doc.list_or("digest", "freqs", d.freqs.clone())?,
            n: doc.parse_or("digest", "n", d.n)?,
            seed: doc.parse_or("digest", "seed", d.seed)?,
            k_ratio: doc.parse_or("digest", "k_ratio", d.k_ratio)?,
            gas_limit: doc.parse_or("digest", "gas_limit", d.gas_limit)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.modes.is_empty() {
            return Err(invalid("digest", "modes", "no modes".into()));
        }
        if self.freqs.is_empty() || self.freqs.iter().any(|f| !(1..=100).contains(f)) {
            return Err(invalid("digest", "freqs", "frequencies must be in 1..=100".into()));
        }
        if self.n < 10_000 {
            return Err(invalid("digest", "n", "at least 10000 samples".into()));
        }
        if self.k_ratio == 0 {
            return Err(invalid("digest", "k_ratio", "must be positive".into()));
        }
        Ok(())
    }
}

/// `all` or a comma separated list of test-function modes.
pub fn parse_modes(text: &str) -> Result<Vec<TestMode>, ConfigError> {
    if text.trim() == "all" {
        return Ok(TestMode::ALL.to_vec());
    }
    text.split(',')
        .map(|m| TestMode::parse(m).ok_or_else(|| invalid("digest", "modes", format!("unknown mode {m:?}"))))
        .collect()
}

/// Gas between samples for a frequency in percent.
pub fn sample_interval(freq_percent: u64) -> u64 {
    (1000 + freq_percent / 2) / freq_percent
}

#[derive(Clone, Debug, PartialEq)]
pub struct DigestStats {
    pub mode: TestMode,
    pub freq: u64,
    pub samples: u64,
    pub collisions: u64,
    /// `counts[i]` is the number of digests below `2^i`.
    pub counts: [u64; 64],
    pub slope: f64,
}

/// Seed hash of the `j`-th digest sample.
pub fn counter_hash(seed: u64, j: u64) -> Hash256 {
    sha3_concat(&[&seed.to_be_bytes(), &j.to_be_bytes()])
}

pub fn digest_stats(mode: TestMode, freq: u64, digests: &mut [u64]) -> DigestStats {
    digests.sort_unstable();
    let collisions = digests.windows(2).filter(|w| w[0] == w[1]).count() as u64;
    let mut counts = [0u64; 64];
    for (i, c) in counts.iter_mut().enumerate() {
        *c = digests.partition_point(|&d| d < 1u64 << i) as u64;
    }
    DigestStats { mode, freq, samples: digests.len() as u64, collisions, counts, slope: fit_slope(&counts, 40, 63) }
}

/// Weighted least-squares slope of `log2 counts[i]` against `i` over
/// `lo..=hi`. Empty bins are skipped; each bin is weighted by its count,
/// the inverse variance of its logarithm.
pub fn fit_slope(counts: &[u64; 64], lo: usize, hi: usize) -> f64 {
    let pts: Vec<(f64, f64, f64)> = (lo..=hi)
        .filter(|&i| counts[i] > 0)
        .map(|i| (i as f64, (counts[i] as f64).log2(), counts[i] as f64))
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return f64::NAN;
    }
    sxy / sxx
}

/// Digest statistics for every (mode, frequency) pair, in that order.
pub fn experiment_digest(cfg: &DigestConfig) -> Result<Vec<DigestStats>, ConfigError> {
    cfg.validate()?;
    let jobs: Vec<(TestMode, u64)> = cfg.modes.iter().flat_map(|&m| cfg.freqs.iter().map(move |&f| (m, f))).collect();
    let view = ChainView::default();
    Ok(parallel_map(&jobs, |&(mode, freq)| {
        let problem = corpus::test_function(mode);
        let sched = SamplingSchedule::new(sample_interval(freq), cfg.k_ratio);
        let mut digests: Vec<u64> = (0..cfg.n)
            .map(|j| proof_from_seed(counter_hash(cfg.seed, j), &problem, &view, &sched, cfg.gas_limit).state_digest)
            .collect();
        digest_stats(mode, freq, &mut digests)
    }))
}

/// `mode,frequency,collisions,slope`
pub fn digest_csv(stats: &[DigestStats]) -> String {
    let mut o = String::from("mode,frequency,collisions,slope\n");
    for s in stats {
        let _ = writeln!(o, "{},{},{},{:.6}", s.mode.name(), s.freq, s.collisions, s.slope);
    }
    o
}

/// `mode,frequency,i,count` for the cumulative law.
pub fn digest_counts_csv(stats: &[DigestStats]) -> String {
    let mut o = String::from("mode,frequency,i,count\n");
    for s in stats {
        for (i, c) in s.counts.iter().enumerate() {
            let _ = writeln!(o, "{},{},{i},{c}", s.mode.name(), s.freq);
        }
    }
    o
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveConfig {
    pub ns: Vec<u32>,
    /// Deposits as multiples of the initial W.
    pub rewards: Vec<u64>,
    pub reps: u32,
    pub seed: u64,
    /// Expected attempts per master block.
    pub attempts_per_block: u64,
    pub sched: SamplingSchedule,
    pub gas_limit: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            ns: vec![8, 10, 12],
            rewards: vec![1, 2, 5, 10, 20, 50],
            reps: 20,
            seed: 0,
            attempts_per_block: 64,
            sched: SamplingSchedule::default(),
            gas_limit: DEFAULT_GAS_LIMIT,
        }
    }
}

impl SolveConfig {
    pub fn from_document(doc: &Document) -> Result<Self, ConfigError> {
        doc.check_keys(
            "solve",
            &["ns", "rewards", "reps", "seed", "attempts_per_block", "sample_interval", "k_ratio", "gas_limit"],
        )?;
        let d = SolveConfig::default();
        let cfg = SolveConfig {
            ns: doc.list_or("solve", "ns", d.ns.clone())?,
            rewards: doc.list_or("solve", "rewards", d.rewards.clone())?,
            reps: doc.parse_or("solve", "reps", d.reps)?,
            seed: doc.parse_or("solve", "seed", d.seed)?,
            attempts_per_block: doc.parse_or("solve", "attempts_per_block", d.attempts_per_block)?,
            sched: SamplingSchedule {
                v: doc.parse_or("solve", "sample_interval", d.sched.v)?,
                k_ratio: doc.parse_or("solve", "k_ratio", d.sched.k_ratio)?,
            },
            gas_limit: doc.parse_or("solve", "gas_limit", d.gas_limit)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ns.is_empty() || self.ns.iter().any(|n| !(1..=60).contains(n)) {
            return Err(invalid("solve", "ns", "need a nonempty list of sizes in 1..=60".into()));
        }
        if self.rewards.is_empty() || self.rewards.contains(&0) {
            return Err(invalid("solve", "rewards", "need a nonempty list of positive multiples".into()));
        }
        if self.reps < 20 {
            return Err(invalid("solve", "reps", "at least 20 repetitions".into()));
        }
        if self.attempts_per_block == 0 || self.sched.v == 0 || self.sched.k_ratio == 0 {
            return Err(invalid("solve", "attempts_per_block", "must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveCell {
    pub n: u32,
    pub reward_multiple: u64,
    pub successes: u32,
    pub reps: u32,
}

impl SolveCell {
    pub fn freq(&self) -> f64 {
        self.successes as f64 / self.reps as f64
    }
}

/// Mining parameters for the size-`n` problem: the target giving the
/// configured attempts per block, and the W that target implies.
pub fn solve_setup(cfg: &SolveConfig, n: u32) -> (ChainParams, BigRational) {
    let probe = corpus::subset_sum_experiment(n, 1);
    let view = ChainView::default();
    let runs = 64u64;
    let (mut fnv, mut gas) = (0u64, 0u64);
    for nonce in 0..runs {
        let r = stack_proof(b"solve-probe", nonce, &probe, &view, &cfg.sched, cfg.gas_limit);
        fnv += r.n_fnv();
        gas += r.gas_used;
    }
    let (fnv, gas) = ((fnv + runs / 2) / runs, (gas + runs / 2) / runs);
    let target = Target::from_difficulty(cfg.attempts_per_block * fnv);
    let w = block_w_sample(&target, fnv, gas, 1).floor();
    let params = ChainParams { mode: ConsensusMode::Axe, target, sched: cfg.sched, gas_limit: cfg.gas_limit, ..ChainParams::default() };
    (params, w)
}

/// Parent hash used for block `j` of repetition `rep`.
fn solve_parent(seed: u64, rep: u32, j: u64) -> Hash256 {
    sha3_concat(&[b"solve", &seed.to_be_bytes(), &rep.to_be_bytes(), &j.to_be_bytes()])
}

/// One submission: a single honest miner works on the problem until it is
/// solved or leaves the queue. Returns whether a solution was recorded.
///
/// Block `j` of repetition `rep` is mined on a parent hash derived from
/// `(seed, rep, j)` alone, so every deposit in a repetition sees the same
/// nonce stream.
pub fn solve_once(params: &ChainParams, w: &BigRational, n: u32, multiple: u64, seed: u64, rep: u32) -> bool {
    let deposit = (w * int(multiple as u128)).to_integer().to_u128().expect("deposit fits");
    let problem = corpus::subset_sum_experiment(n, deposit);
    let id = problem.id;
    let eparams = EconomyParams { min_deposit_w: int(1), initial_w: w.clone(), ..EconomyParams::default() };
    let mut economy = Economy::new(eparams, corpus::default_problem());
    if economy.enqueue(problem).is_err() {
        return false;
    }
    let view = ChainView::default();
    let env = MinerEnv { params, view: &view };
    let mut miner = MinerState::new(0, StrategyKind::HonestAxe, solve_parent(seed, rep, 0), 0, economy.snapshot(), 0, 0);
    for j in 0.. {
        let block = loop {
            if let MineEvent::BlockFound(b) = miner.mine_step(&env).event {
                break b;
            }
        };
        let check = validate_cluster(&block, &solve_parent(seed, rep, j), j, miner.queue(), &view, params)
            .expect("honest blocks validate");
        economy.settle_block(&block, &params.target, check.n_fnv, check.gas_used);
        let outcome = economy.outcomes().get(&id).cloned().unwrap_or_default();
        if outcome.exited {
            return outcome.solutions > 0;
        }
        miner.start_round(solve_parent(seed, rep, j + 1), j + 1, economy.snapshot(), j + 1, 0);
    }
    unreachable!()
}

/// Success frequency per (n, reward multiple), rows ordered by n then reward.
pub fn experiment_solve(cfg: &SolveConfig) -> Result<Vec<SolveCell>, ConfigError> {
    cfg.validate()?;
    let setups: Vec<(ChainParams, BigRational)> = cfg.ns.iter().map(|&n| solve_setup(cfg, n)).collect();
    let jobs: Vec<(usize, usize, u32)> = (0..cfg.ns.len())
        .flat_map(|a| (0..cfg.rewards.len()).flat_map(move |b| (0..cfg.reps).map(move |r| (a, b, r))))
        .collect();
    let results = parallel_map(&jobs, |&(a, b, rep)| {
        let (params, w) = &setups[a];
        solve_once(params, w, cfg.ns[a], cfg.rewards[b], cfg.seed, rep)
    });
    let mut cells = Vec::new();
    for (a, &n) in cfg.ns.iter().enumerate() {
        for (b, &multiple) in cfg.rewards.iter().enumerate() {
            let successes = jobs
                .iter()
                .zip(&results)
                .filter(|((ja, jb, _), ok)| *ja == a && *jb == b && **ok)
                .count() as u32;
            cells.push(SolveCell { n, reward_multiple: multiple, successes, reps: cfg.reps });
        }
    }
    Ok(cells)
}

/// `n,reward_multiple,success_freq`
pub fn solve_csv(cells: &[SolveCell]) -> String {
    let mut o = String::from("n,reward_multiple,success_freq\n");
    for c in cells {
        let _ = writeln!(o, "{},{},{:.4}", c.n, c.reward_multiple, c.freq());
    }
    o
}

/// Rewards in `cells` for size `n`, in configured order.
pub fn solve_row(cells: &[SolveCell], n: u32) -> Vec<&SolveCell> {
    cells.iter().filter(|c| c.n == n).collect()
}
