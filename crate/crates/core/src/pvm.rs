//! Gas-metered stack VM with 256-bit words.
//!
//! Binary operators pop `b` (top) then `a` and push `a op b`, so
//! `PUSH 7; PUSH 2; SUB` leaves 5. Jump targets are instruction indices
//! carried as immediates, which makes them checkable before execution.
//! Division or modulo by zero pushes 0.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::primitives::{parse_signed, parse_word, Word256};

pub const MAX_STACK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Opcode {
    Stop,
    Push,
    Pop,
    Dup1,
    Dup2,
    Dup3,
    Dup4,
    Swap1,
    Swap2,
    Swap3,
    Swap4,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
    And,
    Or,
    Xor,
    Not,
    Jump,
    JumpI,
    Input,
    ChainRead,
    ReturnBool,
}

const ALL_OPCODES: [Opcode; 28] = [
    Opcode::Stop,
    Opcode::Push,
    Opcode::Pop,
    Opcode::Dup1,
    Opcode::Dup2,
    Opcode::Dup3,
    Opcode::Dup4,
    Opcode::Swap1,
    Opcode::Swap2,
    Opcode::Swap3,
    Opcode::Swap4,
    Opcode::Add,
    Opcode::Sub,
    Opcode::Mul,
    Opcode::Div,
    Opcode::Mod,
    Opcode::Lt,
    Opcode::Gt,
    Opcode::Eq,
    Opcode::And,
    Opcode::Or,
    Opcode::Xor,
    Opcode::Not,
    Opcode::Jump,
    Opcode::JumpI,
    Opcode::Input,
    Opcode::ChainRead,
    Opcode::ReturnBool,
];

impl Opcode {
    pub fn mnemonic(self) -> &'static str {
        use Opcode::*;
        match self {
            Stop => "STOP",
            Push => "PUSH",
            Pop => "POP",
            Dup1 => "DUP1",
            Dup2 => "DUP2",
            Dup3 => "DUP3",
            Dup4 => "DUP4",
            Swap1 => "SWAP1",
            Swap2 => "SWAP2",
            Swap3 => "SWAP3",
            Swap4 => "SWAP4",
            Add => "ADD",
            Sub => "SUB",
            Mul => "MUL",
            Div => "DIV",
            Mod => "MOD",
            Lt => "LT",
            Gt => "GT",
            Eq => "EQ",
            And => "AND",
            Or => "OR",
            Xor => "XOR",
            Not => "NOT",
            Jump => "JUMP",
            JumpI => "JUMPI",
            Input => "INPUT",
            ChainRead => "CHAINREAD",
            ReturnBool => "RETURN_BOOL",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        let upper = s.to_ascii_uppercase();
        ALL_OPCODES.iter().copied().find(|op| op.mnemonic() == upper)
    }

    /// Byte used in the canonical binary encoding.
    pub fn byte(self) -> u8 {
        ALL_OPCODES.iter().position(|&o| o == self).expect("listed") as u8
    }

    pub fn from_byte(b: u8) -> Option<Opcode> {
        ALL_OPCODES.get(b as usize).copied()
    }

    pub fn takes_immediate(self) -> bool {
        matches!(
            self,
            Opcode::Push | Opcode::Jump | Opcode::JumpI | Opcode::Input
        )
    }

    pub fn gas(self) -> u64 {
        use Opcode::*;
        match self {
            Stop | ReturnBool => 0,
            Mul | Div | Mod => 5,
            Jump | JumpI => 8,
            ChainRead => 20,
            _ => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Instr {
    pub op: Opcode,
    pub imm: Option<Word256>,
}

impl Instr {
    pub fn new(op: Opcode) -> Self {
        Instr { op, imm: None }
    }

    pub fn with_imm(op: Opcode, imm: impl Into<Word256>) -> Self {
        Instr {
            op,
            imm: Some(imm.into()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bytecode {
    pub ops: Vec<Instr>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BytecodeError {
    #[error("unknown opcode {0:?} at instruction {1}")]
    UnknownOpcode(String, usize),
    #[error("jump at instruction {at} targets {target}, outside 0..{len}")]
    BadJumpTarget { at: usize, target: Word256, len: usize },
    #[error("{op} at instruction {at} needs an immediate")]
    MissingImmediate { op: &'static str, at: usize },
    #[error("{op} at instruction {at} takes no immediate")]
    UnexpectedImmediate { op: &'static str, at: usize },
    #[error("malformed immediate {text:?} on line {line}")]
    BadImmediate { text: String, line: usize },
    #[error("undefined label {0:?}")]
    UndefinedLabel(String),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("truncated bytecode at byte {0}")]
    Truncated(usize),
}

impl Bytecode {
    pub fn new(ops: Vec<Instr>) -> Self {
        Bytecode { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Checks immediates and jump targets. An empty program is valid; it traps when run.
    pub fn validate(&self) -> Result<(), BytecodeError> {
        let len = self.ops.len();
        for (at, ins) in self.ops.iter().enumerate() {
            match (ins.op.takes_immediate(), ins.imm) {
                (true, None) => {
                    return Err(BytecodeError::MissingImmediate {
                        op: ins.op.mnemonic(),
                        at,
                    })
                }
                (false, Some(_)) => {
                    return Err(BytecodeError::UnexpectedImmediate {
                        op: ins.op.mnemonic(),
                        at,
                    })
                }
                _ => {}
            }
            if matches!(ins.op, Opcode::Jump | Opcode::JumpI) {
                let target = ins.imm.expect("checked above");
                if target >= Word256::from(len as u64) {
                    return Err(BytecodeError::BadJumpTarget { at, target, len });
                }
            }
        }
        Ok(())
    }

    /// Canonical binary form: one opcode byte, followed by a 32-byte
    /// big-endian immediate for opcodes that take one.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.ops.len() * 2);
        for ins in &self.ops {
            out.push(ins.op.byte());
            if let Some(imm) = ins.imm {
                out.extend_from_slice(&imm.to_be_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BytecodeError> {
        let mut ops = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let op = Opcode::from_byte(bytes[i])
                .ok_or_else(|| BytecodeError::UnknownOpcode(format!("0x{:02x}", bytes[i]), ops.len()))?;
            i += 1;
            let imm = if op.takes_immediate() {
                let raw: [u8; 32] = bytes
                    .get(i..i + 32)
                    .ok_or(BytecodeError::Truncated(i))?
                    .try_into()
                    .expect("32 bytes");
                i += 32;
                Some(Word256::from_be_bytes(raw))
            } else {
                None
            };
            ops.push(Instr { op, imm });
        }
        let code = Bytecode { ops };
        code.validate()?;
        Ok(code)
    }

    /// Assembles one instruction per line. `#` starts a comment, `name:` defines
    /// a label and `@name` references one as a jump target.
    pub fn assemble(text: &str) -> Result<Self, BytecodeError> {
        let mut labels: HashMap<String, usize> = HashMap::new();
        let mut pending: Vec<(usize, usize, Opcode, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_suffix(':') {
                let name = name.trim().to_string();
                if labels.insert(name.clone(), pending.len()).is_some() {
                    return Err(BytecodeError::DuplicateLabel(name));
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let mnemonic = parts.next().expect("non-empty line");
            let op = Opcode::from_mnemonic(mnemonic)
                .ok_or_else(|| BytecodeError::UnknownOpcode(mnemonic.to_string(), pending.len()))?;
            let arg = parts.collect::<Vec<_>>().join(" ");
            pending.push((lineno + 1, pending.len(), op, arg));
        }

        let mut ops = Vec::with_capacity(pending.len());
        for (line, at, op, arg) in pending {
            let imm = if arg.is_empty() {
                None
            } else if let Some(label) = arg.strip_prefix('@') {
                let target = labels
                    .get(label)
                    .ok_or_else(|| BytecodeError::UndefinedLabel(label.to_string()))?;
                Some(Word256::from(*target as u64))
            } else if let Some(w) = parse_word(&arg) {
                Some(w)
            } else if let Some(s) = parse_signed(&arg) {
                Some(s.as_u256())
            } else {
                return Err(BytecodeError::BadImmediate { text: arg, line });
            };
            if imm.is_some() && !op.takes_immediate() {
                return Err(BytecodeError::UnexpectedImmediate {
                    op: op.mnemonic(),
                    at,
                });
            }
            ops.push(Instr { op, imm });
        }
        let code = Bytecode { ops };
        code.validate()?;
        Ok(code)
    }

    /// Canonical assembly text; `assemble(disassemble(c)) == c`.
    pub fn disassemble(&self) -> String {
        let mut out = String::new();
        for ins in &self.ops {
            out.push_str(ins.op.mnemonic());
            if let Some(imm) = ins.imm {
                out.push(' ');
                if imm <= Word256::from(u64::MAX) {
                    out.push_str(&imm.to_string());
                } else {
                    out.push_str(&format!("0x{imm:x}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Read-only chain data available to `CHAINREAD`.
pub trait StateReader {
    fn read(&self, key: Word256) -> Word256;
}

/// A reader where every key is unset.
pub struct EmptyState;

impl StateReader for EmptyState {
    fn read(&self, _key: Word256) -> Word256 {
        Word256::ZERO
    }
}

/// Up to four words from the top of the stack, top first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackView {
    pub words: [Word256; 4],
    pub len: usize,
}

impl StackView {
    pub fn as_slice(&self) -> &[Word256] {
        &self.words[..self.len]
    }
}

/// Receives stack samples at gas offsets it chooses.
pub trait SamplingHook {
    /// Gas offset at which the next sample is due; `None` when no more samples are wanted.
    fn next_offset(&self) -> Option<u64>;
    /// Called at the first instruction boundary (or at halt) where gas used has
    /// reached the offset last returned by `next_offset`.
    fn sample(&mut self, gas_used: u64, top: &StackView);
}

pub struct NoSampling;

impl SamplingHook for NoSampling {
    fn next_offset(&self) -> Option<u64> {
        None
    }
    fn sample(&mut self, _gas_used: u64, _top: &StackView) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trap {
    StackUnderflow,
    StackOverflow,
    InputOutOfRange,
    EndOfCode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HaltReason {
    Returned,
    OutOfGas,
    Trap(Trap),
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HaltReason::Returned => f.write_str("returned"),
            HaltReason::OutOfGas => f.write_str("out-of-gas"),
            HaltReason::Trap(t) => write!(f, "trap({t:?})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOutcome {
    pub solved: bool,
    pub gas_used: u64,
    pub halt: HaltReason,
}

/// Mutable state of one execution.
#[derive(Clone, Debug)]
pub struct VmState {
    pub stack: Vec<Word256>,
    pub pc: usize,
    pub gas_used: u64,
    pub halted: Option<HaltReason>,
    pub result: Option<bool>,
}

impl Default for VmState {
    fn default() -> Self {
        VmState {
            stack: Vec::with_capacity(64),
            pc: 0,
            gas_used: 0,
            halted: None,
            result: None,
        }
    }
}

impl VmState {
    pub fn top_view(&self) -> StackView {
        let mut words = [Word256::ZERO; 4];
        let len = self.stack.len().min(4);
        for (i, w) in self.stack.iter().rev().take(4).enumerate() {
            words[i] = *w;
        }
        StackView { words, len }
    }

    fn halt(&mut self, reason: HaltReason, result: bool) {
        self.halted = Some(reason);
        self.result = Some(result);
    }

    fn pop(&mut self) -> Result<Word256, Trap> {
        self.stack.pop().ok_or(Trap::StackUnderflow)
    }

    fn push(&mut self, w: Word256) -> Result<(), Trap> {
        if self.stack.len() >= MAX_STACK {
            return Err(Trap::StackOverflow);
        }
        self.stack.push(w);
        Ok(())
    }

    /// Executes one instruction. A halted state is left untouched.
    pub fn step(&mut self, code: &Bytecode, input: &[Word256], gas_limit: u64, chain: &dyn StateReader) {
        if self.halted.is_some() {
            return;
        }
        let Some(ins) = code.ops.get(self.pc).copied() else {
            self.halt(HaltReason::Trap(Trap::EndOfCode), false);
            return;
        };
        let cost = ins.op.gas();
        if self.gas_used + cost > gas_limit {
            self.gas_used = gas_limit;
            self.halt(HaltReason::OutOfGas, false);
            return;
        }
        self.gas_used += cost;
        if let Err(trap) = self.exec(ins, input, chain) {
            self.halt(HaltReason::Trap(trap), false);
        }
    }

    fn exec(&mut self, ins: Instr, input: &[Word256], chain: &dyn StateReader) -> Result<(), Trap> {
        use Opcode::*;
        let mut next = self.pc + 1;
        match ins.op {
            Stop => {
                self.halt(HaltReason::Returned, false);
            }
            Push => self.push(ins.imm.unwrap_or_default())?,
            Pop => {
                self.pop()?;
            }
            Dup1 | Dup2 | Dup3 | Dup4 => {
                let n = (ins.op.byte() - Dup1.byte()) as usize + 1;
                if self.stack.len() < n {
                    return Err(Trap::StackUnderflow);
                }
                let w = self.stack[self.stack.len() - n];
                self.push(w)?;
            }
            Swap1 | Swap2 | Swap3 | Swap4 => {
                let n = (ins.op.byte() - Swap1.byte()) as usize + 1;
                let len = self.stack.len();
                if len < n + 1 {
                    return Err(Trap::StackUnderflow);
                }
                self.stack.swap(len - 1, len - 1 - n);
            }
            Add | Sub | Mul | Div | Mod | Lt | Gt | Eq | And | Or | Xor => {
                let b = self.pop()?;
                let a = self.pop()?;
                let bool_word = |c: bool| if c { Word256::ONE } else { Word256::ZERO };
                let r = match ins.op {
                    Add => a.wrapping_add(b),
                    Sub => a.wrapping_sub(b),
                    Mul => a.wrapping_mul(b),
                    Div => a.checked_div(b).unwrap_or(Word256::ZERO),
                    Mod => a.checked_rem(b).unwrap_or(Word256::ZERO),
                    Lt => bool_word(a < b),
                    Gt => bool_word(a > b),
                    Eq => bool_word(a == b),
                    And => a & b,
                    Or => a | b,
                    Xor => a ^ b,
                    _ => unreachable!(),
                };
                self.push(r)?;
            }
            Not => {
                let a = self.pop()?;
                self.push(!a)?;
            }
            Jump => {
                next = ins.imm.unwrap_or_default().as_usize();
            }
            JumpI => {
                if self.pop()? != Word256::ZERO {
                    next = ins.imm.unwrap_or_default().as_usize();
                }
            }
            Input => {
                let idx = ins.imm.unwrap_or_default();
                let w = (idx < Word256::from(input.len() as u64))
                    .then(|| input[idx.as_usize()])
                    .ok_or(Trap::InputOutOfRange)?;
                self.push(w)?;
            }
            ChainRead => {
                let key = self.pop()?;
                self.push(chain.read(key))?;
            }
            ReturnBool => {
                let v = self.pop()?;
                self.halt(HaltReason::Returned, v != Word256::ZERO);
            }
        }
        self.pc = next;
        Ok(())
    }
}

fn drain_samples(state: &VmState, hook: &mut dyn SamplingHook) {
    while let Some(at) = hook.next_offset() {
        if at > state.gas_used {
            break;
        }
        hook.sample(state.gas_used, &state.top_view());
    }
}

/// Runs `code` to completion. The hook sees the stack at every instruction
/// boundary where a scheduled offset has been reached, and once more after halt.
///
/// `code` must have passed [`Bytecode::validate`].
pub fn execute(
    code: &Bytecode,
    input: &[Word256],
    gas_limit: u64,
    chain: &dyn StateReader,
    hook: &mut dyn SamplingHook,
) -> ExecOutcome {
    let mut state = VmState::default();
    loop {
        drain_samples(&state, hook);
        if state.halted.is_some() {
            break;
        }
        state.step(code, input, gas_limit, chain);
    }
    let halt = state.halted.expect("loop exits on halt");
    ExecOutcome {
        solved: halt == HaltReason::Returned && state.result == Some(true),
        gas_used: state.gas_used,
        halt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str, input: &[u64], gas: u64) -> ExecOutcome {
        let code = Bytecode::assemble(text).unwrap();
        let input: Vec<Word256> = input.iter().map(|&x| Word256::from(x)).collect();
        execute(&code, &input, gas, &EmptyState, &mut NoSampling)
    }

    #[test]
    fn immediate_return() {
        let out = run("PUSH 1\nRETURN_BOOL", &[], 100);
        assert!(out.solved);
        assert_eq!(out.halt, HaltReason::Returned);
        assert_eq!(out.gas_used, 3);
    }

    #[test]
    fn infinite_loop_exhausts_gas() {
        let out = run("top:\nJUMP @top", &[], 1000);
        assert_eq!(out.halt, HaltReason::OutOfGas);
        assert_eq!(out.gas_used, 1000);
        assert!(!out.solved);
        // limits that are not a multiple of the loop cost still report the full limit
        let out = run("top:\nPUSH 1\nPOP\nJUMP @top", &[], 1001);
        assert_eq!(out.gas_used, 1001);
    }

    #[test]
    fn empty_program_validates_and_traps() {
        let code = Bytecode::default();
        assert_eq!(code.validate(), Ok(()));
        let out = execute(&code, &[], 10, &EmptyState, &mut NoSampling);
        assert_eq!(out.halt, HaltReason::Trap(Trap::EndOfCode));
        assert!(!out.solved);
    }

    #[test]
    fn validation_errors() {
        let code = Bytecode::new(vec![Instr::with_imm(Opcode::Jump, 5u8)]);
        assert!(matches!(code.validate(), Err(BytecodeError::BadJumpTarget { .. })));
        let code = Bytecode::new(vec![Instr::new(Opcode::Push)]);
        assert!(matches!(code.validate(), Err(BytecodeError::MissingImmediate { .. })));
        let code = Bytecode::new(vec![Instr::with_imm(Opcode::Add, 1u8)]);
        assert!(matches!(code.validate(), Err(BytecodeError::UnexpectedImmediate { .. })));
        assert!(matches!(Bytecode::assemble("FROB"), Err(BytecodeError::UnknownOpcode(..))));
        assert!(matches!(Bytecode::assemble("JUMP 3"), Err(BytecodeError::BadJumpTarget { .. })));
        assert!(matches!(Bytecode::from_bytes(&[0xee]), Err(BytecodeError::UnknownOpcode(..))));
        assert!(matches!(Bytecode::from_bytes(&[1, 0, 0]), Err(BytecodeError::Truncated(1))));
    }

    #[test]
    fn operand_order_and_semantics() {
        assert!(run("PUSH 7\nPUSH 2\nSUB\nPUSH 5\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH 7\nPUSH 2\nDIV\nPUSH 3\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH 7\nPUSH 2\nMOD\nPUSH 1\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH 2\nPUSH 7\nLT\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH 7\nPUSH 0\nDIV\nPUSH 0\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH 7\nPUSH 0\nMOD\nPUSH 0\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH 0\nPUSH 1\nSUB\nNOT\nPUSH 0\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH -3\nPUSH 3\nADD\nPUSH 0\nEQ\nRETURN_BOOL", &[], 100).solved);
        // DUP2 copies the second word, SWAP2 exchanges top and third
        assert!(run("PUSH 1\nPUSH 2\nPUSH 3\nSWAP2\nPUSH 1\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("PUSH 1\nPUSH 2\nDUP2\nPUSH 1\nEQ\nRETURN_BOOL", &[], 100).solved);
        assert!(run("INPUT 1\nPUSH 9\nEQ\nRETURN_BOOL", &[4, 9], 100).solved);
        assert!(!run("PUSH 1\nSTOP", &[], 100).solved);
    }

    #[test]
    fn traps() {
        assert_eq!(run("ADD", &[], 100).halt, HaltReason::Trap(Trap::StackUnderflow));
        assert_eq!(run("SWAP1", &[], 100).halt, HaltReason::Trap(Trap::StackUnderflow));
        assert_eq!(run("INPUT 3\nRETURN_BOOL", &[1], 100).halt, HaltReason::Trap(Trap::InputOutOfRange));
        let out = run("top:\nPUSH 1\nJUMP @top", &[], 1_000_000);
        assert_eq!(out.halt, HaltReason::Trap(Trap::StackOverflow));
        assert!(!out.solved);
        assert_eq!(out.gas_used, 1024 * 11 + 3);
    }

    #[test]
    fn chain_read() {
        struct Two;
        impl StateReader for Two {
            fn read(&self, key: Word256) -> Word256 {
                key * Word256::from(2u8)
            }
        }
        let code = Bytecode::assemble("PUSH 21\nCHAINREAD\nPUSH 42\nEQ\nRETURN_BOOL").unwrap();
        let out = execute(&code, &[], 100, &Two, &mut NoSampling);
        assert!(out.solved);
        assert_eq!(out.gas_used, 3 + 20 + 3 + 3);
    }

    struct Recorder {
        every: u64,
        next: u64,
        seen: Vec<(u64, Vec<Word256>)>,
    }

    impl SamplingHook for Recorder {
        fn next_offset(&self) -> Option<u64> {
            Some(self.next)
        }
        fn sample(&mut self, gas_used: u64, top: &StackView) {
            self.seen.push((gas_used, top.as_slice().to_vec()));
            self.next += self.every;
        }
    }

    #[test]
    fn hook_sees_boundaries_in_order() {
        let code = Bytecode::assemble("PUSH 1\nPUSH 2\nADD\nPUSH 4\nRETURN_BOOL").unwrap();
        let mut hook = Recorder { every: 5, next: 5, seen: vec![] };
        execute(&code, &[], 100, &EmptyState, &mut hook);
        let w = |x: u64| Word256::from(x);
        assert_eq!(
            hook.seen,
            vec![
                (6, vec![w(2), w(1)]),
                (12, vec![w(4), w(3)]),
            ]
        );
    }

    #[test]
    fn round_trip_text_and_bytes() {
        let text = "# demo\nstart:\nPUSH 0x10\nPUSH 340282366920938463463374607431768211456\nDUP2\nJUMPI @start\nINPUT 0\nRETURN_BOOL\n";
        let code = Bytecode::assemble(text).unwrap();
        assert_eq!(Bytecode::assemble(&code.disassemble()).unwrap(), code);
        assert_eq!(Bytecode::from_bytes(&code.to_bytes()).unwrap(), code);
    }

    fn arb_program() -> impl proptest::strategy::Strategy<Value = Bytecode> {
        use proptest::prelude::*;
        proptest::collection::vec((0u8..28, any::<u64>()), 1..40).prop_map(|raw| {
            let len = raw.len() as u64;
            let ops = raw
                .into_iter()
                .map(|(b, x)| {
                    let op = Opcode::from_byte(b).unwrap();
                    let imm = match op {
                        Opcode::Jump | Opcode::JumpI => Some(Word256::from(x % len)),
                        Opcode::Input => Some(Word256::from(x % 3)),
                        Opcode::Push => Some(Word256::from(x)),
                        _ => None,
                    };
                    Instr { op, imm }
                })
                .collect();
            Bytecode { ops }
        })
    }

    proptest::proptest! {
        #[test]
        fn deterministic_and_gas_bounded(code in arb_program(), gas in 0u64..5000) {
            let input = [Word256::from(3u8), Word256::from(5u8), Word256::from(7u8)];
            let mut h1 = Recorder { every: 7, next: 3, seen: vec![] };
            let mut h2 = Recorder { every: 7, next: 3, seen: vec![] };
            let a = execute(&code, &input, gas, &EmptyState, &mut h1);
            let b = execute(&code, &input, gas, &EmptyState, &mut h2);
            proptest::prop_assert_eq!(a, b);
            proptest::prop_assert_eq!(h1.seen, h2.seen);
            proptest::prop_assert!(a.gas_used <= gas);
            if a.solved {
                proptest::prop_assert_eq!(a.halt, HaltReason::Returned);
            }
        }

        #[test]
        fn steps_are_gas_monotone(code in arb_program(), gas in 0u64..3000) {
            let input = [Word256::ONE; 3];
            let mut st = VmState::default();
            let mut paid_steps = 0u64;
            while st.halted.is_none() {
                let before = st.gas_used;
                let op = code.ops.get(st.pc).map(|i| i.op);
                st.step(&code, &input, gas, &EmptyState);
                proptest::prop_assert!(st.gas_used >= before);
                if st.gas_used > before {
                    paid_steps += 1;
                } else {
                    // only terminal opcodes are free
                    proptest::prop_assert!(st.halted.is_some(), "free step {:?}", op);
                }
            }
            proptest::prop_assert!(paid_steps <= gas);
            let frozen = st.clone();
            st.step(&code, &input, gas, &EmptyState);
            proptest::prop_assert_eq!(frozen.gas_used, st.gas_used);
            proptest::prop_assert_eq!(frozen.pc, st.pc);
        }

        #[test]
        fn assembly_round_trip(code in arb_program()) {
            proptest::prop_assert_eq!(Bytecode::assemble(&code.disassemble()).unwrap(), code);
        }
    }
}
