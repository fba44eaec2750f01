//! Stack sampling proof.
//!
//! `H = SHA3(nonce_be8 || header)` picks the candidate solution and seeds
//! `snapshot_0`. While the contract runs, the top four stack words are folded
//! into the snapshot at gas offsets that depend on the previous snapshot, so
//! the samples can only be produced serially by actually running the code.
//! `work_0 = SHA3(H || state_digest_be8)` and the final workload is the exact
//! rational `work_0 / n_fnv`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;

use crate::contracts::{ProblemContract, SolutionSpace, SolutionVector};
use crate::primitives::{fnv64, hash_words, sha3, sha3_concat, Hash256, Snapshot64, Word256};
use crate::pvm::{self, ExecOutcome, HaltReason, SamplingHook, StackView, StateReader};

/// FNV calls per sample: 32 byte folds for each of four words, three merges and one fold with the previous snapshot.
pub const FNV_PER_SAMPLE: u64 = 32 * 4 + 3 + 1;
pub const DEFAULT_SAMPLE_INTERVAL: u64 = 100;
pub const DEFAULT_K_RATIO: u64 = 16;
pub const DEFAULT_GAS_LIMIT: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingSchedule {
    /// Gas between consecutive sampling windows.
    pub v: u64,
    /// Cost of one SHA-3 in FNV units.
    pub k_ratio: u64,
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        SamplingSchedule {
            v: DEFAULT_SAMPLE_INTERVAL,
            k_ratio: DEFAULT_K_RATIO,
        }
    }
}

impl SamplingSchedule {
    pub fn new(v: u64, k_ratio: u64) -> Self {
        assert!(v >= 1 && k_ratio >= 1, "schedule needs v >= 1 and k_ratio >= 1");
        SamplingSchedule { v, k_ratio }
    }

    pub fn n_fnv(&self, n_sample: u64) -> u64 {
        n_fnv(self.k_ratio, n_sample)
    }
}

/// FNV-equivalent cost of one workload: `2k + 3 + 132 * n_sample`.
pub fn n_fnv(k_ratio: u64, n_sample: u64) -> u64 {
    2 * k_ratio + 3 + FNV_PER_SAMPLE * n_sample
}

/// Maps `H` into the solution space by mixed-radix decomposition:
/// `s_i = a_i + H_i mod (b_i - a_i + 1)`, `H_{i+1} = H_i / (b_i - a_i + 1)`.
pub fn map_solution(h: &Hash256, space: &SolutionSpace) -> SolutionVector {
    let mut rest = h.to_word();
    let xs = space
        .dims()
        .iter()
        .map(|(a, b)| {
            // b >= a, so the wrapped difference is the exact width
            let width = b.wrapping_sub(*a).as_u256();
            let offset = match width.checked_add(Word256::ONE) {
                Some(m) => {
                    let r = rest % m;
                    rest /= m;
                    r
                }
                None => std::mem::replace(&mut rest, Word256::ZERO),
            };
            a.wrapping_add(offset.as_i256())
        })
        .collect();
    SolutionVector(xs)
}

/// `FNV(FNV(H[0], H[1]), FNV(H[2], H[3]))`.
pub fn initial_snapshot(h: &Hash256) -> Snapshot64 {
    let w = hash_words(h);
    fnv64(fnv64(w[0], w[1]), fnv64(w[2], w[3]))
}

/// Folds four stack words (top first) into the snapshot, byte by byte in
/// big-endian order, starting from the previous snapshot.
pub fn update_snapshot(top4: &[Word256; 4], prev: Snapshot64) -> Snapshot64 {
    let mut acc = prev;
    let mut partial = [0u64; 4];
    for (slot, word) in partial.iter_mut().zip(top4) {
        for byte in word.to_be_bytes() {
            acc = fnv64(acc, byte as u64);
        }
        *slot = acc;
    }
    let merged = fnv64(fnv64(partial[0], partial[1]), fnv64(partial[2], partial[3]));
    fnv64(merged, prev)
}

/// Gas offset of sample `i` (1-based): `(i - 1) * v + prev mod v`.
pub fn next_location(i: u64, v: u64, prev: Snapshot64) -> u64 {
    (i - 1) * v + prev % v
}

/// `H` for a nonce: SHA-3 over the 8-byte big-endian nonce followed by the header preimage.
pub fn seed_hash(nonce: u64, header_preimage: &[u8]) -> Hash256 {
    sha3_concat(&[&nonce.to_be_bytes(), header_preimage])
}

/// `SHA3(H || state_digest)` with the digest as 8 big-endian bytes.
pub fn work0_of(h: &Hash256, digest: Snapshot64) -> Hash256 {
    sha3_concat(&[h.as_bytes(), &digest.to_be_bytes()])
}

fn pad_view(view: &StackView, pad: Word256) -> [Word256; 4] {
    let mut words = [pad; 4];
    words[..view.len].copy_from_slice(view.as_slice());
    words
}

/// Hook that maintains the snapshot chain while a contract executes.
pub struct StackSampler {
    pad: Word256,
    v: u64,
    snapshot: Snapshot64,
    taken: u64,
    next: u64,
    locations: Option<Vec<u64>>,
}

impl StackSampler {
    pub fn new(h: &Hash256, v: u64) -> Self {
        let snapshot = initial_snapshot(h);
        StackSampler {
            pad: h.to_word(),
            v,
            snapshot,
            taken: 0,
            next: next_location(1, v, snapshot),
            locations: None,
        }
    }

    /// Also keep the scheduled offset of every sample taken.
    pub fn recording_locations(mut self) -> Self {
        self.locations = Some(Vec::new());
        self
    }

    pub fn snapshot(&self) -> Snapshot64 {
        self.snapshot
    }

    pub fn samples(&self) -> u64 {
        self.taken
    }

    pub fn locations(&self) -> &[u64] {
        self.locations.as_deref().unwrap_or(&[])
    }

    fn absorb(&mut self, top: &StackView) {
        if let Some(locs) = &mut self.locations {
            locs.push(self.next);
        }
        self.snapshot = update_snapshot(&pad_view(top, self.pad), self.snapshot);
        self.taken += 1;
        self.next = next_location(self.taken + 1, self.v, self.snapshot);
    }

    /// Takes the single forced sample when execution ended before the first scheduled offset.
    pub fn finish(&mut self, final_view: &StackView) {
        if self.taken == 0 {
            self.absorb(final_view);
        }
    }
}

impl SamplingHook for StackSampler {
    fn next_offset(&self) -> Option<u64> {
        Some(self.next)
    }

    fn sample(&mut self, _gas_used: u64, top: &StackView) {
        self.absorb(top);
    }
}

/// Equivalent workload `work_0 / n_fnv`, compared exactly by cross-multiplication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Work {
    pub work0: Word256,
    pub n_fnv: u64,
}

fn mul_u256_u64(x: Word256, m: u64) -> [u64; 5] {
    let (hi, lo) = x.into_words();
    let limbs = [lo as u64, (lo >> 64) as u64, hi as u64, (hi >> 64) as u64];
    let mut out = [0u64; 5];
    let mut carry = 0u128;
    for (i, l) in limbs.iter().enumerate() {
        let p = (*l as u128) * (m as u128) + carry;
        out[i] = p as u64;
        carry = p >> 64;
    }
    out[4] = carry as u64;
    out
}

fn cmp_limbs(a: &[u64; 5], b: &[u64; 5]) -> Ordering {
    a.iter().rev().cmp(b.iter().rev())
}

impl Work {
    /// Larger than any real workload; the `max(WORK)` starting point.
    pub const MAX: Work = Work {
        work0: Word256::MAX,
        n_fnv: 1,
    };

    pub fn new(work0: Word256, n_fnv: u64) -> Self {
        assert!(n_fnv >= 1);
        Work { work0, n_fnv }
    }

    /// `work_0 / n_fnv < target`.
    pub fn beats(&self, target: &Target) -> bool {
        cmp_limbs(&mul_u256_u64(self.work0, 1), &mul_u256_u64(target.0, self.n_fnv)) == Ordering::Less
    }

    pub fn to_ratio(&self) -> BigRational {
        BigRational::new(
            BigUint::from_bytes_be(&self.work0.to_be_bytes()).into(),
            BigUint::from(self.n_fnv).into(),
        )
    }

    pub fn to_hex(&self) -> String {
        format!("{:064x}/{}", self.work0, self.n_fnv)
    }
}

impl Ord for Work {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_limbs(
            &mul_u256_u64(self.work0, other.n_fnv),
            &mul_u256_u64(other.work0, self.n_fnv),
        )
        .then_with(|| other.n_fnv.cmp(&self.n_fnv))
    }
}

impl PartialOrd for Work {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Work {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Difficulty target on the equivalent workload. A target `T` gives one
/// attempt a success probability of about `T * n_fnv / 2^256`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target(pub Word256);

impl Target {
    pub const MAX: Target = Target(Word256::MAX);
    pub const ZERO: Target = Target(Word256::ZERO);

    /// `T = (2^256 - 1) / difficulty`: an attempt with `n_fnv` FNV units
    /// succeeds with probability close to `n_fnv / difficulty`.
    pub fn from_difficulty(difficulty: u64) -> Self {
        assert!(difficulty >= 1);
        Target(Word256::MAX / Word256::from(difficulty))
    }

    /// Per-attempt success probability for a workload normalised by `n_fnv`.
    pub fn attempt_probability(&self, n_fnv: u64) -> f64 {
        let p = self.0.as_f64() * n_fnv as f64 / 2f64.powi(256);
        p.min(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofResult {
    pub h: Hash256,
    pub work: Work,
    pub work0: Hash256,
    pub state_digest: Snapshot64,
    pub n_sample: u64,
    pub solved: bool,
    pub gas_used: u64,
    pub halt: HaltReason,
}

impl ProofResult {
    pub fn n_fnv(&self) -> u64 {
        self.work.n_fnv
    }
}

/// Builds the result once the digest and sample count are known.
pub fn finish_proof(
    h: Hash256,
    digest: Snapshot64,
    n_sample: u64,
    sched: &SamplingSchedule,
    outcome: ExecOutcome,
) -> ProofResult {
    let work0 = work0_of(&h, digest);
    ProofResult {
        h,
        work: Work::new(work0.to_word(), sched.n_fnv(n_sample)),
        work0,
        state_digest: digest,
        n_sample,
        solved: outcome.solved,
        gas_used: outcome.gas_used,
        halt: outcome.halt,
    }
}

fn run_to_halt(state: &mut pvm::VmState, code: &pvm::Bytecode, input: &[Word256], gas_limit: u64, view: &dyn StateReader, mut at_boundary: impl FnMut(&pvm::VmState)) -> ExecOutcome {
    loop {
        at_boundary(state);
        if state.halted.is_some() {
            break;
        }
        state.step(code, input, gas_limit, view);
    }
    let halt = state.halted.expect("loop exits on halt");
    ExecOutcome {
        solved: halt == HaltReason::Returned && state.result == Some(true),
        gas_used: state.gas_used,
        halt,
    }
}

/// Runs the contract at the candidate selected by `h`, sampling as it goes.
/// Returns the finished sampler along with the execution outcome.
pub fn run_sampled(
    h: &Hash256,
    problem: &ProblemContract,
    view: &dyn StateReader,
    gas_limit: u64,
    mut sampler: StackSampler,
) -> (StackSampler, ExecOutcome) {
    let input = map_solution(h, &problem.space).to_words();
    let mut state = pvm::VmState::default();
    let outcome = run_to_halt(&mut state, &problem.solve_code, &input, gas_limit, view, |s| {
        while sampler.next <= s.gas_used {
            sampler.absorb(&s.top_view());
        }
    });
    sampler.finish(&state.top_view());
    (sampler, outcome)
}

/// One honest proof attempt for `nonce` over `header_preimage`.
pub fn stack_proof(
    header_preimage: &[u8],
    nonce: u64,
    problem: &ProblemContract,
    view: &dyn StateReader,
    sched: &SamplingSchedule,
    gas_limit: u64,
) -> ProofResult {
    proof_from_seed(seed_hash(nonce, header_preimage), problem, view, sched, gas_limit)
}

/// The proof computation for an already derived seed hash `h`.
pub fn proof_from_seed(
    h: Hash256,
    problem: &ProblemContract,
    view: &dyn StateReader,
    sched: &SamplingSchedule,
    gas_limit: u64,
) -> ProofResult {
    let sampler = StackSampler::new(&h, sched.v);
    let (sampler, outcome) = run_sampled(&h, problem, view, gas_limit, sampler);
    finish_proof(h, sampler.snapshot(), sampler.samples(), sched, outcome)
}

/// Recomputes the proof for `nonce` and checks a claimed digest and workload against it.
pub fn verify_claim(
    header_preimage: &[u8],
    nonce: u64,
    claimed_digest: Snapshot64,
    claimed_work: &Work,
    problem: &ProblemContract,
    view: &dyn StateReader,
    sched: &SamplingSchedule,
    gas_limit: u64,
) -> bool {
    let honest = stack_proof(header_preimage, nonce, problem, view, sched, gas_limit);
    honest.state_digest == claimed_digest && honest.work == *claimed_work
}

/// Stack views at every instruction boundary of one run, plus the halt state.
/// For a contract whose stack never depends on its input, this single trace
/// reproduces the samples of every candidate without executing the code.
#[derive(Clone, Debug)]
pub struct StackTrace {
    /// First view seen at each distinct gas value, in execution order.
    boundaries: Vec<(u64, StackView)>,
    final_view: StackView,
    outcome: ExecOutcome,
}

impl StackTrace {
    /// Records the trace of one execution at `input`.
    pub fn record(problem: &ProblemContract, input: &SolutionVector, view: &dyn StateReader, gas_limit: u64) -> Self {
        let mut boundaries: Vec<(u64, StackView)> = Vec::new();
        let mut state = pvm::VmState::default();
        let outcome = run_to_halt(&mut state, &problem.solve_code, &input.to_words(), gas_limit, view, |s| {
            if boundaries.last().map_or(true, |(g, _)| *g < s.gas_used) {
                boundaries.push((s.gas_used, s.top_view()));
            }
        });
        StackTrace {
            boundaries,
            final_view: state.top_view(),
            outcome,
        }
    }

    pub fn outcome(&self) -> ExecOutcome {
        self.outcome
    }

    /// View seen by a sample due at `offset`: the first boundary whose gas has reached it.
    fn view_at(&self, offset: u64) -> Option<&StackView> {
        let idx = self.boundaries.partition_point(|(g, _)| *g < offset);
        self.boundaries.get(idx).map(|(_, v)| v)
    }

    /// Replays the sampling schedule for `h` against the recorded trace.
    pub fn replay(&self, h: &Hash256, sched: &SamplingSchedule) -> (Snapshot64, u64) {
        let mut sampler = StackSampler::new(h, sched.v);
        while let Some(view) = self.view_at(sampler.next) {
            let view = *view;
            sampler.absorb(&view);
        }
        sampler.finish(&self.final_view);
        (sampler.snapshot(), sampler.samples())
    }

    /// Full proof result without executing the contract.
    pub fn replay_proof(&self, nonce: u64, header_preimage: &[u8], sched: &SamplingSchedule) -> ProofResult {
        let h = seed_hash(nonce, header_preimage);
        let (digest, n) = self.replay(&h, sched);
        finish_proof(h, digest, n, sched, self.outcome)
    }
}

/// Deterministic 64-bit stream used to pick golden-vector nonces.
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One line of the golden-vector file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenVector {
    pub nonce: u64,
    pub header: Vec<u8>,
    pub problem_id: Hash256,
    pub digest: Snapshot64,
    pub work0: Hash256,
    pub n_sample: u64,
}

impl fmt::Display for GoldenVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:016x} {} {} {:016x} {} {}",
            self.nonce,
            hex::encode(&self.header),
            self.problem_id,
            self.digest,
            self.work0,
            self.n_sample
        )
    }
}

/// Golden vectors over every corpus contract with the default schedule and
/// gas limit. Headers are 32-byte SHA-3 outputs of a counter; the chain view
/// gives account `i` a balance of `37 * i`.
pub fn golden_vectors() -> Vec<GoldenVector> {
    struct Balances;
    impl StateReader for Balances {
        fn read(&self, key: Word256) -> Word256 {
            key.wrapping_mul(Word256::from(37u8))
        }
    }
    let sched = SamplingSchedule::default();
    let mut rng = 0x00AE_C4A1_u64;
    let mut out = Vec::new();
    for (idx, (_name, problem)) in crate::contracts::corpus::all().into_iter().enumerate() {
        let header = sha3(&(idx as u64).to_be_bytes()).0.to_vec();
        let mut nonces = vec![0u64, 1, u64::MAX];
        nonces.extend((0..5).map(|_| splitmix(&mut rng)));
        for nonce in nonces {
            let p = stack_proof(&header, nonce, &problem, &Balances, &sched, DEFAULT_GAS_LIMIT);
            out.push(GoldenVector {
                nonce,
                header: header.clone(),
                problem_id: problem.id,
                digest: p.state_digest,
                work0: p.work0,
                n_sample: p.n_sample,
            });
        }
    }
    out
}

pub fn golden_vector_text() -> String {
    let mut s = String::new();
    for v in golden_vectors() {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}
