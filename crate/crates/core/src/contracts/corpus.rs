//! Shipped problem contracts and the generators that produce them.
//!
//! Every generator returns package text so the corpus exercises the same
//! parse path as user submissions. The `.axe` files under `corpus/` are the
//! default-parameter outputs of these generators.

use std::fmt::Write as _;

use crate::primitives::{Word256, I256};

use super::{load_package, ProblemContract};

pub const DEFAULT_TIP: u128 = 10;
pub const DEFAULT_DEPOSIT: u128 = 1_000_000_000_000;

/// Inputs and length of the digest test function.
pub const TEST_FN_INPUTS: usize = 12;
pub const TEST_FN_OPS: usize = 100;
/// Each test-function input is drawn from `[0, 2^21 - 1]` so that all twelve
/// components take independent bits of the 256-bit hash.
pub const TEST_FN_INPUT_BITS: u32 = 21;
const CONSTANT_ADDEND: u64 = 0x9E37_79B9_7F4A_7C15;

/// Planted triple for the desk-scale cube-sum contract.
pub const PLANTED_TRIPLE: (i64, i64, i64) = (-5, 7, 9);
pub const PLANTED_RANGE: i64 = 50;
pub const DIOPHANTINE_RANGE: i64 = 1_000_000;
pub const NONLINEAR_THRESHOLD: u64 = 11_800;
pub const CHAIN_FILTER_ACCOUNTS: u64 = 64;
pub const CHAIN_FILTER_THRESHOLD: u64 = 1_000;

fn header(out: &mut String, tip: u128, deposit: u128, times: u64, space: &str) {
    let _ = writeln!(out, "[problem]");
    let _ = writeln!(out, "tip = {tip}");
    let _ = writeln!(out, "deposit = {deposit}");
    let _ = writeln!(out, "times = {times}");
    let _ = writeln!(out, "space = {space}");
    let _ = writeln!(out, "[code]");
}

fn load(text: &str) -> ProblemContract {
    load_package(text).expect("corpus packages are valid")
}

/// Subset-sum over `elements`: the single input is a bitmask in
/// `[0, 2^n - 1]` whose bit `i` selects `elements[i]`.
pub fn subset_sum_text(elements: &[u64], target: u64, times: u64, tip: u128, deposit: u128) -> String {
    assert!(!elements.is_empty() && elements.len() <= 128);
    let n = elements.len();
    let max = (Word256::ONE << n as u32) - Word256::ONE;
    let mut out = String::new();
    header(&mut out, tip, deposit, times, &format!("(0,{max})"));
    let _ = writeln!(out, "# subset sum: select elements whose sum is {target}");
    let _ = writeln!(out, "PUSH 0");
    for (i, e) in elements.iter().enumerate() {
        let bit = Word256::ONE << i as u32;
        let _ = writeln!(out, "INPUT 0\nPUSH {bit}\nDIV\nPUSH 2\nMOD\nPUSH {e}\nMUL\nADD");
    }
    let _ = writeln!(out, "PUSH {target}\nEQ\nRETURN_BOOL");
    out
}

/// The `{1,2,3,4,5}` / sum 9 sample, requesting two solutions.
pub fn subset_sum_package_text() -> String {
    subset_sum_text(&[1, 2, 3, 4, 5], 9, 2, DEFAULT_TIP, DEFAULT_DEPOSIT)
}

pub fn subset_sum_1_to_5() -> ProblemContract {
    load(&subset_sum_package_text())
}

/// `S = {1..n}`, target `n(n+1)/2 - 1`: exactly one solution among `2^n` masks.
pub fn subset_sum_experiment(n: u32, deposit: u128) -> ProblemContract {
    let elements: Vec<u64> = (1..=n as u64).collect();
    let z = (n as u64) * (n as u64 + 1) / 2 - 1;
    load(&subset_sum_text(&elements, z, 1, DEFAULT_TIP, deposit))
}

/// Cube sum `x^3 + y^3 + z^3 = rhs` over `[-range, range]^3`.
pub fn diophantine_text(range: i64, rhs: i64) -> String {
    let mut out = String::new();
    let dim = format!("({},{})", -range, range);
    header(&mut out, DEFAULT_TIP, DEFAULT_DEPOSIT, 1, &format!("{dim};{dim};{dim}"));
    let _ = writeln!(out, "# x^3 + y^3 + z^3 = {rhs}");
    for i in 0..3 {
        let _ = writeln!(out, "INPUT {i}\nDUP1\nDUP1\nMUL\nMUL");
        if i > 0 {
            let _ = writeln!(out, "ADD");
        }
    }
    let _ = writeln!(out, "PUSH {rhs}\nEQ\nRETURN_BOOL");
    out
}

pub fn diophantine_42() -> ProblemContract {
    load(&diophantine_text(DIOPHANTINE_RANGE, 42))
}

/// Desk-scale variant whose right-hand side comes from [`PLANTED_TRIPLE`].
pub fn diophantine_planted() -> ProblemContract {
    let (a, b, c) = PLANTED_TRIPLE;
    load(&diophantine_text(PLANTED_RANGE, a.pow(3) + b.pow(3) + c.pow(3)))
}

/// Integer program over nonnegative `x1..x5`: feasible under the four
/// constraints and objective `7x1^2 - 8x2^3 + 6x1x2 + 5x4 - x5^2 >= threshold`.
/// Every comparison is rearranged so both sides stay nonnegative under the
/// VM's unsigned arithmetic.
pub fn nonlinear_text(threshold: u64) -> String {
    let mut out = String::new();
    header(
        &mut out,
        DEFAULT_TIP,
        DEFAULT_DEPOSIT,
        1,
        "(0,40);(0,20);(0,12);(0,40);(0,20)",
    );
    let body = format!(
        "\
# violated if x1 + x2^2 + x3^3 > 2014
INPUT 0
INPUT 1
DUP1
MUL
ADD
INPUT 2
DUP1
DUP1
MUL
MUL
ADD
PUSH 2014
GT
# violated if x1*x3 > 256 + x2*x4 + 5*x5
INPUT 0
INPUT 2
MUL
PUSH 256
INPUT 1
INPUT 3
MUL
ADD
PUSH 5
INPUT 4
MUL
ADD
GT
OR
# violated unless x2 < 2*x5
INPUT 1
PUSH 2
INPUT 4
MUL
LT
PUSH 0
EQ
OR
# violated unless x1*x2 + x3 + x4^2 > 1024 + x5
INPUT 0
INPUT 1
MUL
INPUT 2
ADD
INPUT 3
DUP1
MUL
ADD
PUSH 1024
INPUT 4
ADD
GT
PUSH 0
EQ
OR
# violated if 7*x1^2 + 6*x1*x2 + 5*x4 < {threshold} + 8*x2^3 + x5^2
INPUT 0
DUP1
MUL
PUSH 7
MUL
INPUT 0
INPUT 1
MUL
PUSH 6
MUL
ADD
INPUT 3
PUSH 5
MUL
ADD
PUSH {threshold}
INPUT 1
DUP1
DUP1
MUL
MUL
PUSH 8
MUL
ADD
INPUT 4
DUP1
MUL
ADD
LT
OR
PUSH 0
EQ
RETURN_BOOL
"
    );
    out.push_str(&body);
    out
}

pub fn nonlinear() -> ProblemContract {
    load(&nonlinear_text(NONLINEAR_THRESHOLD))
}

/// Finds an account index whose balance (read from chain state) is at least `threshold`.
pub fn chain_filter_text(accounts: u64, threshold: u64) -> String {
    let mut out = String::new();
    header(&mut out, DEFAULT_TIP, DEFAULT_DEPOSIT, 1, &format!("(0,{})", accounts - 1));
    let _ = writeln!(out, "# balance(account) >= {threshold}");
    let _ = writeln!(out, "INPUT 0\nCHAINREAD\nPUSH {threshold}\nLT\nPUSH 0\nEQ\nRETURN_BOOL");
    out
}

pub fn chain_filter() -> ProblemContract {
    load(&chain_filter_text(CHAIN_FILTER_ACCOUNTS, CHAIN_FILTER_THRESHOLD))
}

pub fn always_true_text() -> String {
    let mut out = String::new();
    header(&mut out, DEFAULT_TIP, DEFAULT_DEPOSIT, 1_000_000_000, "(0,0)");
    out.push_str("PUSH 1\nRETURN_BOOL\n");
    out
}

/// Every candidate is a solution.
pub fn always_true() -> ProblemContract {
    load(&always_true_text())
}

/// Burns roughly `gas` and reports no solution; the Issue-2 problem for the
/// baseline strategy.
pub fn no_solution(gas: u64) -> ProblemContract {
    let mut out = String::new();
    header(&mut out, DEFAULT_TIP, DEFAULT_DEPOSIT, 1, "(0,0xffffffffffffffff)");
    let iters = (gas / 6).max(1);
    for _ in 0..iters {
        out.push_str("PUSH 1\nPOP\n");
    }
    out.push_str("PUSH 0\nRETURN_BOOL\n");
    load(&out)
}

/// Operand mode of the digest test function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestMode {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Constant,
}

impl TestMode {
    pub const ALL: [TestMode; 6] = [
        TestMode::Add,
        TestMode::Sub,
        TestMode::Mul,
        TestMode::Div,
        TestMode::Mod,
        TestMode::Constant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestMode::Add => "add",
            TestMode::Sub => "sub",
            TestMode::Mul => "mul",
            TestMode::Div => "div",
            TestMode::Mod => "mod",
            TestMode::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Option<TestMode> {
        TestMode::ALL.iter().copied().find(|m| m.name() == s.trim())
    }

    fn opcode(self) -> &'static str {
        match self {
            TestMode::Add | TestMode::Constant => "ADD",
            TestMode::Sub => "SUB",
            TestMode::Mul => "MUL",
            TestMode::Div => "DIV",
            TestMode::Mod => "MOD",
        }
    }

    fn initial(self) -> Word256 {
        match self {
            TestMode::Mul => Word256::ONE,
            TestMode::Div | TestMode::Mod => Word256::MAX,
            _ => Word256::ZERO,
        }
    }
}

/// `result <- op(result, x_(j mod k)+1)` for `j` in `0..n`, then `result < r0`
/// with `r0 = 0`, so the function never reports a solution. The constant mode
/// applies a fixed addend instead of an input, leaving the stack
/// independent of the candidate.
pub fn test_function_text(mode: TestMode) -> String {
    let mut out = String::new();
    let hi = (1u64 << TEST_FN_INPUT_BITS) - 1;
    let space = vec![format!("(0,{hi})"); TEST_FN_INPUTS].join(";");
    header(&mut out, DEFAULT_TIP, DEFAULT_DEPOSIT, 1, &space);
    let _ = writeln!(out, "# test function, mode {}", mode.name());
    let _ = writeln!(out, "PUSH {}", mode.initial());
    for j in 0..TEST_FN_OPS {
        match mode {
            TestMode::Constant => {
                let _ = writeln!(out, "PUSH {CONSTANT_ADDEND}");
            }
            _ => {
                let _ = writeln!(out, "INPUT {}", j % TEST_FN_INPUTS);
            }
        }
        let _ = writeln!(out, "{}", mode.opcode());
    }
    out.push_str("PUSH 0\nLT\nRETURN_BOOL\n");
    out
}

pub fn test_function(mode: TestMode) -> ProblemContract {
    load(&test_function_text(mode))
}

/// Never-solved problem whose stack never depends on its input and whose
/// every execution costs exactly `total_gas` (at least 28).
pub fn constant_stack_text(total_gas: u64) -> String {
    assert!(total_gas >= 28, "constant-stack contract needs at least 28 gas");
    // PUSH(3) + m*(PUSH+ADD = 6) + a*NOT(3) + j*JUMP(8) + PUSH, LT, RETURN_BOOL (6)
    let body = total_gas - 9;
    let (a, j) = (0..2u64)
        .flat_map(|a| (0..3u64).map(move |j| (a, j)))
        .find(|&(a, j)| body >= 3 * a + 8 * j && (body - 3 * a - 8 * j) % 6 == 0)
        .expect("every residue mod 6 is reachable");
    let m = (body - 3 * a - 8 * j) / 6;
    let mut out = String::new();
    header(&mut out, DEFAULT_TIP, DEFAULT_DEPOSIT, 1, "(0,0xffffffffffffffff)");
    let _ = writeln!(out, "# constant stack, {total_gas} gas per run");
    let _ = writeln!(out, "PUSH {CONSTANT_ADDEND}");
    for _ in 0..m {
        out.push_str("PUSH 3\nADD\n");
    }
    if a == 1 {
        out.push_str("NOT\n");
    }
    for i in 0..j {
        let _ = writeln!(out, "JUMP @skip{i}\nskip{i}:");
    }
    out.push_str("PUSH 0\nLT\nRETURN_BOOL\n");
    out
}

pub fn constant_stack(total_gas: u64) -> ProblemContract {
    load(&constant_stack_text(total_gas))
}

/// The queue's built-in lowest-priority problem: the add-mode test function,
/// a fixed-cost contract that is never solved.
pub fn default_problem() -> ProblemContract {
    test_function(TestMode::Add)
}

/// `(file name, package text)` for every shipped `.axe` file.
pub fn corpus_files() -> Vec<(String, String)> {
    let (a, b, c) = PLANTED_TRIPLE;
    let mut files = vec![
        ("subset_sum.axe".to_string(), subset_sum_package_text()),
        ("diophantine.axe".to_string(), diophantine_text(DIOPHANTINE_RANGE, 42)),
        (
            "diophantine_planted.axe".to_string(),
            diophantine_text(PLANTED_RANGE, a.pow(3) + b.pow(3) + c.pow(3)),
        ),
        ("nonlinear.axe".to_string(), nonlinear_text(NONLINEAR_THRESHOLD)),
        (
            "chain_filter.axe".to_string(),
            chain_filter_text(CHAIN_FILTER_ACCOUNTS, CHAIN_FILTER_THRESHOLD),
        ),
        ("always_true.axe".to_string(), always_true_text()),
    ];
    for mode in TestMode::ALL {
        files.push((format!("test_{}.axe", mode.name()), test_function_text(mode)));
    }
    files
}

/// Every shipped contract, loaded.
pub fn all() -> Vec<(String, ProblemContract)> {
    corpus_files()
        .into_iter()
        .map(|(name, text)| (name.trim_end_matches(".axe").to_string(), load(&text)))
        .collect()
}

/// Brute-force count of subset masks of `elements` summing to `target`.
pub fn count_subset_solutions(elements: &[u64], target: u64) -> usize {
    let n = elements.len();
    (0u64..1 << n)
        .filter(|mask| {
            elements
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, e)| e)
                .sum::<u64>()
                == target
        })
        .count()
}

/// Signed bounds helper for tests and drivers.
pub fn signed(x: i64) -> I256 {
    I256::from(x)
}
