use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use axechain::chain::ChainView;
use axechain::config::{ConfigError, Document};
use axechain::contracts::{load_package, run_solve, PackageError, ProblemContract, SolutionVector};
use axechain::economy::fmt_amount;
use axechain::primitives::{parse_signed, Hash256};
use axechain::proof::{golden_vector_text, map_solution, DEFAULT_GAS_LIMIT};
use axechain::pvm::NoSampling;
use axechain::security::{attack_table_csv, balance_curve_csv, parse_rational};
use axechain::simnet::{
    digest_counts_csv, digest_csv, experiment_digest, experiment_solve, run_sim, scenario_csv, sim_balance, solve_csv,
    DigestConfig, SimConfig, SolveConfig,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "axechain", version, about = "Useful proof-of-work chain toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a package's solve function on one candidate.
    PvmRun {
        package: PathBuf,
        /// Comma separated solution vector.
        #[arg(long, conflicts_with = "hash")]
        input: Option<String>,
        /// Map a 32-byte hex hash into the solution space instead.
        #[arg(long)]
        hash: Option<String>,
        #[arg(long, default_value_t = DEFAULT_GAS_LIMIT)]
        gas_limit: u64,
        /// Accounts in the chain view.
        #[arg(long, default_value_t = 64)]
        accounts: u64,
        /// Print the disassembly first.
        #[arg(long)]
        disasm: bool,
    },
    /// Print or write the sampling-proof golden vectors.
    ProofVectors {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a network simulation.
    SimRun {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        miners: Option<String>,
        #[arg(long)]
        difficulty: Option<u64>,
        #[arg(long)]
        latency: Option<u64>,
        #[arg(long)]
        max_ticks: Option<u64>,
        #[arg(long)]
        max_blocks: Option<u64>,
        /// Write the per-event trace.
        #[arg(long)]
        trace: bool,
        /// Scenario name in the summary CSV.
        #[arg(long, default_value = "sim")]
        name: String,
    },
    /// Digest uniformity experiment.
    ExpDigest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// `all` or a comma separated list.
        #[arg(long)]
        modes: Option<String>,
        /// Percentages, comma separated.
        #[arg(long)]
        freqs: Option<String>,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Solve-frequency experiment.
    ExpSolve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ns: Option<String>,
        /// Deposits as multiples of W, comma separated.
        #[arg(long)]
        rewards: Option<String>,
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long)]
        attempts_per_block: Option<u64>,
    },
    /// Maximum attacker share against utilization.
    SecurityCurve {
        #[arg(long, default_value_t = 100)]
        points: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Double-spend success probability table.
    AttackProb {
        /// Comma separated rate ratios, decimals or fractions.
        #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        deltas: String,
        #[arg(long, default_value_t = 30)]
        max_y: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a package.
    PackageCheck { package: PathBuf },
}

enum Failure {
    Usage(String),
    Config(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Config(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(m) => Failure::Io(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn package(path: &Path) -> Result<ProblemContract> {
    let text = read(path)?;
    load_package(&text).map_err(|e: PackageError| Failure::Config(format!("{}: {e}", path.display())))
}

/// The config file (or an empty document) plus its directory.
fn load_config(path: &Option<PathBuf>) -> Result<(Document, PathBuf)> {
    match path {
        None => Ok((Document::default(), PathBuf::from("."))),
        Some(p) => {
            let doc = Document::parse(&read(p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            Ok((doc, base))
        }
    }
}

fn set<T: ToString>(doc: &mut Document, section: &str, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        doc.set(section, key, v.to_string());
    }
}

fn manifest(doc: &Document, command: &str) -> String {
    let mut m = doc.clone();
    m.set("manifest", "command", command);
    m.set("manifest", "version", env!("CARGO_PKG_VERSION"));
    m.to_string()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PvmRun { package: path, input, hash, gas_limit, accounts, disasm } => {
            let q = package(&path)?;
            let s = match (input, hash) {
                (Some(text), _) => SolutionVector(
                    text.split(',')
                        .map(|v| parse_signed(v.trim()).ok_or_else(|| Failure::Usage(format!("bad input value {v:?}"))))
                        .collect::<Result<_>>()?,
                ),
                (None, Some(h)) => {
                    let h = Hash256::from_hex(&h).ok_or_else(|| Failure::Usage(format!("bad hash {h:?}")))?;
                    map_solution(&h, &q.space)
                }
                (None, None) => return Err(Failure::Usage("pvm-run needs --input or --hash".into())),
            };
            if disasm {
                print!("{}", q.solve_code.disassemble());
            }
            let view = ChainView::with_balances(accounts, sim_balance);
            let out = run_solve(&q, &s, &view, gas_limit, &mut NoSampling).map_err(|e| Failure::Usage(e.to_string()))?;
            let shown: Vec<String> = s.0.iter().map(|x| x.to_string()).collect();
            println!("input = {}", shown.join(","));
            println!("solved = {}", out.solved);
            println!("gas_used = {}", out.gas_used);
            println!("halt = {}", out.halt);
        }
        Command::ProofVectors { out } => {
            let text = golden_vector_text();
            match out {
                Some(dir) => write(&dir, "proof_vectors.txt", &text)?,
                None => print!("{text}"),
            }
        }
        Command::SimRun { config, seed, out, mode, miners, difficulty, latency, max_ticks, max_blocks, trace, name } => {
            let (mut doc, base) = load_config(&config)?;
            set(&mut doc, "sim", "seed", &seed);
            set(&mut doc, "sim", "mode", &mode);
            set(&mut doc, "sim", "miners", &miners);
            set(&mut doc, "sim", "difficulty", &difficulty);
            set(&mut doc, "sim", "latency", &latency);
            set(&mut doc, "sim", "max_ticks", &max_ticks);
            set(&mut doc, "sim", "max_blocks", &max_blocks);
            if trace {
                doc.set("sim", "trace", "true");
            }
            let cfg = SimConfig::from_document(&doc, &base)?;
            let report = run_sim(&cfg)?;
            let m = &report.metrics;
            write(&out, "metrics.txt", &m.to_text())?;
            write(&out, "scenario.csv", &scenario_csv(&[(name.as_str(), m)]))?;
            write(&out, "audit.txt", &lines(&report.audit))?;
            if cfg.trace {
                write(&out, "trace.txt", &lines(&report.trace))?;
            }
            write(&out, "manifest.txt", &manifest(&doc, "sim-run"))?;
            println!("blocks = {} canonical = {} forks = {}", m.blocks, m.canonical, m.forks);
        }
        Command::ExpDigest { config, seed, out, modes, freqs, n } => {
            let (mut doc, _) = load_config(&config)?;
            set(&mut doc, "digest", "seed", &seed);
            set(&mut doc, "digest", "modes", &modes);
            set(&mut doc, "digest", "freqs", &freqs);
            set(&mut doc, "digest", "n", &n);
            let cfg = DigestConfig::from_document(&doc)?;
            let stats = experiment_digest(&cfg)?;
            write(&out, "digest.csv", &digest_csv(&stats))?;
            write(&out, "digest_counts.csv", &digest_counts_csv(&stats))?;
            write(&out, "manifest.txt", &manifest(&doc, "exp-digest"))?;
            let worst = stats.iter().map(|s| (s.slope - 1.0).abs()).fold(0.0, f64::max);
            let collisions: u64 = stats.iter().map(|s| s.collisions).sum();
            println!("combinations = {} collisions = {collisions} max |slope-1| = {worst:.4}", stats.len());
        }
        Command::ExpSolve { config, seed, out, ns, rewards, reps, attempts_per_block } => {
            let (mut doc, _) = load_config(&config)?;
            set(&mut doc, "solve", "seed", &seed);
            set(&mut doc, "solve", "ns", &ns);
            set(&mut doc, "solve", "rewards", &rewards);
            set(&mut doc, "solve", "reps", &reps);
            set(&mut doc, "solve", "attempts_per_block", &attempts_per_block);
            let cfg = SolveConfig::from_document(&doc)?;
            let cells = experiment_solve(&cfg)?;
            let csv = solve_csv(&cells);
            write(&out, "solve.csv", &csv)?;
            write(&out, "manifest.txt", &manifest(&doc, "exp-solve"))?;
            print!("{csv}");
        }
        Command::SecurityCurve { points, out } => {
            let csv = balance_curve_csv(points).map_err(|e| Failure::Usage(e.to_string()))?;
            write(&out, "security_curve.csv", &csv)?;
        }
        Command::AttackProb { deltas, max_y, out } => {
            let deltas = deltas
                .split(',')
                .map(|d| parse_rational(d.trim()).ok_or_else(|| Failure::Usage(format!("bad delta {d:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if max_y == 0 {
                return Err(Failure::Usage("--max-y must be at least 1".into()));
            }
            let ys: Vec<u32> = (1..=max_y).collect();
            let csv = attack_table_csv(&deltas, &ys);
            match out {
                Some(dir) => write(&dir, "attack_prob.csv", &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::PackageCheck { package: path } => {
            let q = package(&path)?;
            println!("id = {}", q.id);
            println!("times = {}", q.times);
            println!("tip = {}", q.tip);
            println!("deposit = {}", fmt_amount(&axechain::economy::int(q.deposit)));
            println!("dims = {}", q.space.len());
            println!("instructions = {}", q.solve_code.len());
        }
    }
    Ok(())
}

fn lines(v: &[String]) -> String {
    v.iter().map(|l| format!("{l}\n")).collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("usage error"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
