use std::fs;

use axechain::chain::{Chain, ChainParams, ChainView};
use axechain::contracts::{corpus, load_package};
use axechain::economy::{Economy, EconomyParams};
use axechain::miner::{MineEvent, MinerEnv, MinerState, StrategyKind};
use axechain::proof::Target;
use axechain::simnet::{run_sim, SimConfig};

fn params() -> ChainParams {
    ChainParams { target: Target::from_difficulty(1 << 14), ..ChainParams::default() }
}

fn economy() -> Economy {
    Economy::new(EconomyParams::default(), corpus::default_problem())
}

#[test]
fn package_to_persisted_chain() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/subset_sum.axe")).unwrap();
    let problem = load_package(&text).unwrap();
    let mut e = economy();
    e.enqueue(problem.clone()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blocks.bin");
    let mut chain = Chain::new(params(), ChainView::default(), e);
    chain.persist_to(&path).unwrap();

    let mut tip = chain.genesis();
    for height in 0..6u64 {
        let queue = chain.node(&tip).unwrap().economy.snapshot();
        let mut m = MinerState::new(0, StrategyKind::HonestAxe, tip, height, queue, height + 1, 0);
        let p = *chain.params();
        let view = chain.view().clone();
        let env = MinerEnv { params: &p, view: &*view };
        let block = loop {
            if let MineEvent::BlockFound(b) = m.mine_step(&env).event {
                break b;
            }
        };
        tip = chain.append_block(block).unwrap();
    }
    chain.flush().unwrap();
    assert_eq!(chain.fork_choice(), tip);
    assert_eq!(chain.canonical().len(), 7);

    let last = chain.node(&tip).unwrap().economy.clone();
    assert!(last.conserves());
    let outcome = &last.outcomes()[&problem.id];
    assert!(outcome.solutions > 0);

    let mut e = economy();
    e.enqueue(problem).unwrap();
    let reloaded = Chain::load(&path, params(), ChainView::default(), e).unwrap();
    assert_eq!(reloaded.canonical(), chain.canonical());
    assert_eq!(reloaded.node(&tip).unwrap().economy.totals(), last.totals());
}

#[test]
fn simulation_reports_are_reproducible() {
    let cfg = SimConfig { seed: 11, max_ticks: 300, trace: true, ..SimConfig::default() };
    let a = run_sim(&cfg).unwrap();
    let b = run_sim(&cfg).unwrap();
    assert_eq!(a.metrics.to_text(), b.metrics.to_text());
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.audit, b.audit);
    assert!(a.metrics.blocks > 0);
    assert!(a.metrics.ledger_closed);
}
