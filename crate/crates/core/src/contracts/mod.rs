//! Problem packages: the manifest (tip, deposit, times, solution space) and
//! the `solve` bytecode, plus the shipped corpus.

pub mod corpus;

use std::fmt::Write as _;

use thiserror::Error;

use crate::primitives::{parse_signed, parse_u128, parse_u64, sha3, Hash256, Word256, I256};
use crate::pvm::{self, Bytecode, BytecodeError, ExecOutcome, Opcode, SamplingHook, StateReader};

pub const MAX_DIMS: usize = 32;

/// Per-dimension inclusive integer ranges `[a_i, b_i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolutionSpace {
    dims: Vec<(I256, I256)>,
}

impl SolutionSpace {
    pub fn new(dims: Vec<(I256, I256)>) -> Result<Self, PackageError> {
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(PackageError::InvalidSpace(format!(
                "{} dimensions, expected 1..={MAX_DIMS}",
                dims.len()
            )));
        }
        if let Some((i, (a, b))) = dims.iter().enumerate().find(|(_, (a, b))| a > b) {
            return Err(PackageError::InvalidSpace(format!(
                "dimension {i}: lower bound {a} exceeds upper bound {b}"
            )));
        }
        Ok(SolutionSpace { dims })
    }

    /// Unsigned ranges `[0, hi]` on every dimension.
    pub fn unsigned(his: &[u64]) -> Result<Self, PackageError> {
        Self::new(his.iter().map(|&h| (I256::ZERO, I256::from(h))).collect())
    }

    pub fn dims(&self) -> &[(I256, I256)] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, s: &SolutionVector) -> bool {
        s.0.len() == self.dims.len()
            && s.0.iter().zip(&self.dims).all(|(x, (a, b))| a <= x && x <= b)
    }

    /// Number of points, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.dims.iter().fold(1u128, |acc, (a, b)| {
            let width = b.wrapping_sub(*a).as_u256();
            let count = if width >= Word256::from(u128::MAX) {
                u128::MAX
            } else {
                width.as_u128() + 1
            };
            acc.saturating_mul(count)
        })
    }
}

/// A candidate solution, one signed integer per dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SolutionVector(pub Vec<I256>);

impl SolutionVector {
    /// Two's-complement VM words, as bound to `INPUT i`.
    pub fn to_words(&self) -> Vec<Word256> {
        self.0.iter().map(|x| x.as_u256()).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PackageError {
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("invalid solution space: {0}")]
    InvalidSpace(String),
    #[error("invalid bytecode: {0}")]
    InvalidBytecode(#[from] BytecodeError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("solution has {got} components but the space has {want} dimensions")]
    Arity { got: usize, want: usize },
    #[error("solution lies outside the problem's solution space")]
    OutOfSpace,
}

/// A loaded, validated problem contract. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemContract {
    pub tip: u128,
    pub deposit: u128,
    pub times: u64,
    pub space: SolutionSpace,
    pub solve_code: Bytecode,
    pub id: Hash256,
}

impl ProblemContract {
    pub fn new(
        tip: u128,
        deposit: u128,
        times: u64,
        space: SolutionSpace,
        solve_code: Bytecode,
    ) -> Result<Self, PackageError> {
        if deposit == 0 {
            return Err(PackageError::ParseError("deposit must be positive".into()));
        }
        if times == 0 {
            return Err(PackageError::ParseError("times must be at least 1".into()));
        }
        solve_code.validate()?;
        let dims = space.len() as u64;
        for (at, ins) in solve_code.ops.iter().enumerate() {
            if ins.op == Opcode::Input && ins.imm.unwrap_or_default() >= Word256::from(dims) {
                return Err(PackageError::ParseError(format!(
                    "INPUT at instruction {at} reads past the {dims}-dimensional space"
                )));
            }
        }
        let mut c = ProblemContract {
            tip,
            deposit,
            times,
            space,
            solve_code,
            id: Hash256::ZERO,
        };
        c.id = sha3(&c.canonical_bytes());
        Ok(c)
    }

    /// Byte layout hashed into the content id: tip and deposit as 16-byte
    /// big-endian, times as 8 bytes, the dimension count as one byte, each bound
    /// as 32-byte two's complement, then the canonical bytecode.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"axe-problem/1");
        out.extend_from_slice(&self.tip.to_be_bytes());
        out.extend_from_slice(&self.deposit.to_be_bytes());
        out.extend_from_slice(&self.times.to_be_bytes());
        out.push(self.space.len() as u8);
        for (a, b) in self.space.dims() {
            out.extend_from_slice(&a.to_be_bytes());
            out.extend_from_slice(&b.to_be_bytes());
        }
        out.extend_from_slice(&self.solve_code.to_bytes());
        out
    }

    /// Renders the package document; `load_package(c.to_package())` rebuilds `c`.
    pub fn to_package(&self) -> String {
        let mut out = String::from("[problem]\n");
        let _ = writeln!(out, "tip = {}", self.tip);
        let _ = writeln!(out, "deposit = {}", self.deposit);
        let _ = writeln!(out, "times = {}", self.times);
        let space: Vec<String> = self
            .space
            .dims()
            .iter()
            .map(|(a, b)| format!("({a},{b})"))
            .collect();
        let _ = writeln!(out, "space = {}", space.join(";"));
        out.push_str("[code]\n");
        out.push_str(&self.solve_code.disassemble());
        out
    }

    /// Same problem with a different deposit (and hence a different id).
    pub fn with_deposit(&self, deposit: u128) -> Result<Self, PackageError> {
        Self::new(self.tip, deposit, self.times, self.space.clone(), self.solve_code.clone())
    }

    pub fn with_tip(&self, tip: u128) -> Result<Self, PackageError> {
        Self::new(tip, self.deposit, self.times, self.space.clone(), self.solve_code.clone())
    }

    pub fn with_times(&self, times: u64) -> Result<Self, PackageError> {
        Self::new(self.tip, self.deposit, times, self.space.clone(), self.solve_code.clone())
    }
}

fn parse_space(text: &str) -> Result<SolutionSpace, PackageError> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut dims = Vec::new();
    for part in compact.split(';').filter(|p| !p.is_empty()) {
        let inner = part
            .strip_prefix('(')
            .and_then(|p| p.strip_suffix(')'))
            .ok_or_else(|| PackageError::ParseError(format!("bad range {part:?}")))?;
        let (a, b) = inner
            .split_once(',')
            .ok_or_else(|| PackageError::ParseError(format!("bad range {part:?}")))?;
        let a = parse_signed(a).ok_or_else(|| PackageError::ParseError(format!("bad bound {a:?}")))?;
        let b = parse_signed(b).ok_or_else(|| PackageError::ParseError(format!("bad bound {b:?}")))?;
        dims.push((a, b));
    }
    SolutionSpace::new(dims)
}

/// Parses a package document:
///
/// ```text
/// [problem]
/// tip = <uint>
/// deposit = <uint>
/// times = <uint>
/// space = (a1,b1);(a2,b2);...
/// [code]
/// <assembly lines>
/// ```
pub fn load_package(text: &str) -> Result<ProblemContract, PackageError> {
    let mut lines = text.lines();
    let mut saw_header = false;
    let (mut tip, mut deposit, mut times, mut space) = (None, None, None, None);
    let mut code_text = None;
    while let Some(raw) = lines.next() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let section: String = line.chars().filter(|c| !c.is_whitespace()).collect();
        if section == "[problem]" {
            saw_header = true;
            continue;
        }
        if section == "[code]" {
            code_text = Some(lines.by_ref().collect::<Vec<_>>().join("\n"));
            break;
        }
        if !saw_header {
            return Err(PackageError::ParseError(format!(
                "expected [problem] header, found {line:?}"
            )));
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| PackageError::ParseError(format!("expected key = value, found {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        let bad = || PackageError::ParseError(format!("bad value for {key}: {value:?}"));
        match key {
            "tip" => tip = Some(parse_u128(value).ok_or_else(bad)?),
            "deposit" => deposit = Some(parse_u128(value).ok_or_else(bad)?),
            "times" => times = Some(parse_u64(value).ok_or_else(bad)?),
            "space" => space = Some(parse_space(value)?),
            other => return Err(PackageError::ParseError(format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| PackageError::ParseError(format!("missing {k}"));
    let code_text = code_text.ok_or_else(|| missing("[code] section"))?;
    let code = Bytecode::assemble(&code_text)?;
    ProblemContract::new(
        tip.ok_or_else(|| missing("tip"))?,
        deposit.ok_or_else(|| missing("deposit"))?,
        times.ok_or_else(|| missing("times"))?,
        space.ok_or_else(|| missing("space"))?,
        code,
    )
}

/// Executes the contract's `solve` at `s`.
pub fn run_solve(
    c: &ProblemContract,
    s: &SolutionVector,
    view: &dyn StateReader,
    gas_limit: u64,
    hook: &mut dyn SamplingHook,
) -> Result<ExecOutcome, SolveError> {
    if s.0.len() != c.space.len() {
        return Err(SolveError::Arity {
            got: s.0.len(),
            want: c.space.len(),
        });
    }
    if !c.space.contains(s) {
        return Err(SolveError::OutOfSpace);
    }
    Ok(pvm::execute(&c.solve_code, &s.to_words(), gas_limit, view, hook))
}
