//! Counterfeiting experiments.
//!
//! Every trial runs in a fresh world: honest Gen and Sign, then a strategy
//! manipulates the cheque through an [`Adversary`] view that can only touch
//! qubits held by the payee or the adversary, then the result is deposited.
//! Before each deposit, [`acceptance_oracle`] computes the exact acceptance
//! probability from reduced density matrices, so empirical rates can be
//! held against a prediction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comparator::pass_probability;
use crate::error::{Error, Result};
use crate::protocol::{
    gen_account, sign_cheque, verify_cheque, Bank, QuantumCheque, SchemeParams, VerifyResult,
};
use crate::qowf::{amount_bits, f_states, g_state, BitString};
use crate::qsim::{c, gates, Amplitude, DensityMatrix, Owner, QubitHandle, World};
use crate::teleport::PauliCorrection;

// ---------------------------------------------------------------------------
// Strategies and configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackStrategy {
    /// Clone every cheque qubit and deposit both copies.
    #[serde(rename = "clone")]
    CloneAndDoubleSpend,
    /// Deposit the cheque, then submit it again.
    #[serde(rename = "replay")]
    Replay,
    /// Change the amount and keep the quantum part.
    #[serde(rename = "tamper-amount")]
    TamperAmount,
    /// Change the amount, rotate each position towards the new g-state and
    /// rebuild ψ_alice under a uniformly guessed key.
    #[serde(rename = "forge-key-guess")]
    ForgeFreshKeyGuess,
    /// Apply one single-qubit unitary to every `a2` qubit.
    #[serde(rename = "local-unitary")]
    LocalUnitaryTamper,
}

impl AttackStrategy {
    pub const ALL: [AttackStrategy; 5] = [
        AttackStrategy::CloneAndDoubleSpend,
        AttackStrategy::Replay,
        AttackStrategy::TamperAmount,
        AttackStrategy::ForgeFreshKeyGuess,
        AttackStrategy::LocalUnitaryTamper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackStrategy::CloneAndDoubleSpend => "clone",
            AttackStrategy::Replay => "replay",
            AttackStrategy::TamperAmount => "tamper-amount",
            AttackStrategy::ForgeFreshKeyGuess => "forge-key-guess",
            AttackStrategy::LocalUnitaryTamper => "local-unitary",
        }
    }
}

impl fmt::Display for AttackStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackStrategy::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Single-qubit unitary used by [`AttackStrategy::LocalUnitaryTamper`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalUnitary {
    Identity,
    PauliX,
    PauliY,
    PauliZ,
    Hadamard,
    /// `e^{iα} Rz(β) Ry(γ) Rz(δ)`.
    Euler {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
    },
}

impl LocalUnitary {
    pub fn matrix(self) -> [Amplitude; 4] {
        match self {
            LocalUnitary::Identity => gates::identity(),
            LocalUnitary::PauliX => gates::pauli_x(),
            LocalUnitary::PauliY => gates::pauli_y(),
            LocalUnitary::PauliZ => gates::pauli_z(),
            LocalUnitary::Hadamard => gates::hadamard(),
            LocalUnitary::Euler {
                alpha,
                beta,
                gamma,
                delta,
            } => gates::euler(alpha, beta, gamma, delta),
        }
    }

    /// Whether the unitary is the identity up to a global phase.
    pub fn is_trivial(self) -> bool {
        let m = self.matrix();
        m[1].norm() < 1e-12 && m[2].norm() < 1e-12 && (m[0] - m[3]).norm() < 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub strategy: AttackStrategy,
    pub params: SchemeParams,
    pub trials: u64,
    pub seed: u64,
    /// Amount on the honestly signed cheque.
    pub amount: u64,
    /// Amount written by the amount-changing strategies.
    pub forged_amount: u64,
    pub unitary: LocalUnitary,
}

impl AttackConfig {
    pub fn new(strategy: AttackStrategy, params: SchemeParams, trials: u64, seed: u64) -> Self {
        AttackConfig {
            strategy,
            params,
            trials,
            seed,
            amount: 100,
            forged_amount: 1000,
            unitary: LocalUnitary::PauliX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        match self.strategy {
            // key guessing is only observable with deliberately short keys
            AttackStrategy::ForgeFreshKeyGuess => self.params.validate_experimental()?,
            _ => self.params.validate()?,
        }
        let changes_amount = matches!(
            self.strategy,
            AttackStrategy::TamperAmount | AttackStrategy::ForgeFreshKeyGuess
        );
        if changes_amount && self.amount == self.forged_amount {
            return Err(Error::InvalidArgument(
                "forged amount must differ from the signed amount".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Custody-checked adversary view
// ---------------------------------------------------------------------------

/// The adversary's access to the world: it may act on qubits held by the
/// payee or by itself, and on nothing else. It never sees the Bank
/// database or the cheque book.
pub struct Adversary<'w> {
    world: &'w mut World,
}

impl<'w> Adversary<'w> {
    pub fn new(world: &'w mut World) -> Self {
        Adversary { world }
    }

    fn check(&self, q: QubitHandle) -> Result<()> {
        match self.world.owner(q)? {
            Owner::Payee | Owner::Adversary => Ok(()),
            other => Err(Error::Custody(q, other)),
        }
    }

    /// Takes custody of a payee-held qubit.
    pub fn take(&mut self, q: QubitHandle) -> Result<()> {
        self.check(q)?;
        self.world.set_owner(q, Owner::Adversary)
    }

    pub fn apply(&mut self, matrix: &[Amplitude; 4], q: QubitHandle) -> Result<()> {
        self.check(q)?;
        self.world.apply_gate(matrix, &[q])
    }

    /// Returns the two clones; the machine qubit stays with the adversary.
    pub fn clone_qubit(&mut self, q: QubitHandle) -> Result<(QubitHandle, QubitHandle)> {
        self.check(q)?;
        bh_clone_qubit(self.world, q)
    }

    pub fn alloc(&mut self, state: [Amplitude; 2]) -> Result<QubitHandle> {
        self.world.alloc(Owner::Adversary, state)
    }

    pub fn discard(&mut self, q: QubitHandle) -> Result<u8> {
        self.check(q)?;
        self.world.discard(q)
    }

    pub fn random_bits(&mut self, len: usize) -> Result<BitString> {
        BitString::random(self.world.rng(), len)
    }

    /// Read-only view of a qubit's reduced state, for adversary-held qubits.
    pub fn reduced_density(&self, q: QubitHandle) -> Result<DensityMatrix> {
        self.check(q)?;
        self.world.reduced_density(&[q])
    }
}

/// 8×8 unitary on (input, blank, machine) whose action on blank = machine
/// = |0⟩ is the universal 1→2 cloning isometry.
pub fn cloner_matrix() -> [Amplitude; 64] {
    let (a, b) = ((2.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).sqrt());
    // index = 4·input + 2·blank + machine
    let mut cols: Vec<[f64; 8]> = Vec::with_capacity(8);
    let mut zero = [0.0; 8];
    zero[0] = a;
    zero[3] = b;
    zero[5] = b;
    let mut one = [0.0; 8];
    one[7] = a;
    one[2] = b;
    one[4] = b;
    let mut fixed = vec![(0usize, zero), (4usize, one)];
    // complete to an orthonormal basis by Gram-Schmidt over unit vectors
    let mut extra = Vec::new();
    for e in 0..8 {
        let mut v = [0.0; 8];
        v[e] = 1.0;
        for u in fixed.iter().map(|(_, u)| u).chain(extra.iter()) {
            let d: f64 = v.iter().zip(u.iter()).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(u.iter()).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 && extra.len() < 6 {
            v.iter_mut().for_each(|x| *x /= norm);
            extra.push(v);
        }
    }
    let mut free = extra.into_iter();
    for col in 0..8 {
        match fixed.iter().position(|(c, _)| *c == col) {
            Some(p) => cols.push(fixed.remove(p).1),
            None => cols.push(free.next().expect("six completing vectors")),
        }
    }
    let mut m = [c(0.0, 0.0); 64];
    for (col, v) in cols.iter().enumerate() {
        for (row, &x) in v.iter().enumerate() {
            m[row * 8 + col] = c(x, 0.0);
        }
    }
    m
}

/// Universal (Bužek–Hillery) cloner. `q` becomes the first clone; a fresh
/// qubit becomes the second and a fresh machine qubit is left entangled
/// with both. Returns `(first, second)`.
pub fn bh_clone_qubit(world: &mut World, q: QubitHandle) -> Result<(QubitHandle, QubitHandle)> {
    world.owner(q)?;
    let blank = world.alloc_zero(Owner::Adversary);
    let machine = world.alloc_zero(Owner::Adversary);
    if let Err(e) = world.apply_gate(&cloner_matrix(), &[q, blank, machine]) {
        world.discard(blank)?;
        world.discard(machine)?;
        return Err(e);
    }
    Ok((q, blank))
}

/// Applies `ops` to `a2` qubits of `cheque`; anything else is refused.
pub fn local_tamper(
    adv: &mut Adversary<'_>,
    cheque: &QuantumCheque,
    ops: &[(QubitHandle, LocalUnitary)],
) -> Result<QuantumCheque> {
    for &(q, _) in ops {
        if !cheque.a2.contains(&q) {
            return Err(Error::InvalidArgument(format!(
                "{q} is not an a2 qubit of this cheque"
            )));
        }
        adv.check(q)?;
    }
    for &(q, u) in ops {
        adv.apply(&u.matrix(), q)?;
    }
    Ok(cheque.clone())
}

// ---------------------------------------------------------------------------
// Analytic acceptance oracle
// ---------------------------------------------------------------------------

fn sandwich(rho: &[[Amplitude; 2]; 2], w: [Amplitude; 2]) -> f64 {
    let mut acc = c(0.0, 0.0);
    for x in 0..2 {
        for y in 0..2 {
            acc += w[x].conj() * rho[x][y] * w[y];
        }
    }
    acc.re
}

/// Pass probability of position `i`'s swap test given the joint state of
/// `(a2, b)`: project `b` onto |±⟩, apply the branch correction to `a2`,
/// and compare against `target`.
pub fn position_pass_probability(rho_a2_b: &DensityMatrix, target: [Amplitude; 2]) -> f64 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut overlap = 0.0;
    for (sign, correction) in [(1.0, PauliCorrection::I), (-1.0, PauliCorrection::Z)] {
        let o = [c(h, 0.0), c(sign * h, 0.0)];
        // unnormalized conditional state of a2; bit 0 ↔ a2, bit 1 ↔ b
        let mut cond = [[c(0.0, 0.0); 2]; 2];
        for (x, row) in cond.iter_mut().enumerate() {
            for (y, entry) in row.iter_mut().enumerate() {
                for u in 0..2 {
                    for v in 0..2 {
                        *entry += o[u].conj() * rho_a2_b.get(x + 2 * u, y + 2 * v) * o[v];
                    }
                }
            }
        }
        let m = correction.matrix();
        // ⟨t|C ρ C†|t⟩ = ⟨C†t|ρ|C†t⟩
        let w = [
            m[0].conj() * target[0] + m[2].conj() * target[1],
            m[1].conj() * target[0] + m[3].conj() * target[1],
        ];
        overlap += sandwich(&cond, w);
    }
    pass_probability(overlap)
}

/// Per-check pass probabilities and the resulting acceptance probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptancePrediction {
    pub g_pass: Vec<f64>,
    pub psi_pass: f64,
    pub acceptance: f64,
}

/// Exact acceptance probability of depositing `cheque` now.
///
/// Classical rejections give 0. The quantum checks are treated as
/// independent, so every position and ψ_alice must live in separate
/// groups; otherwise this returns [`Error::Entangled`].
pub fn acceptance_oracle(
    world: &World,
    bank: &Bank,
    cheque: &QuantumCheque,
) -> Result<AcceptancePrediction> {
    let params = bank.params();
    let rejected = AcceptancePrediction {
        g_pass: Vec::new(),
        psi_pass: 0.0,
        acceptance: 0.0,
    };
    if cheque.a2.len() != params.l || cheque.psi_alice.len() != params.n {
        return Ok(rejected);
    }
    let Some(record) = bank.record(&cheque.serial).filter(|r| r.id == cheque.id) else {
        return Ok(rejected);
    };
    if record.is_spent()
        || record.is_quarantined()
        || !crate::uss::sig_verify(&record.pk, &cheque.serial, &cheque.signature)
        || cheque
            .handles()
            .any(|q| world.owner(q).map_or(true, |o| o == Owner::Bank))
    {
        return Ok(rejected);
    }
    // independence of the checks
    let mut seen: Vec<QubitHandle> = Vec::new();
    let mut claim = |q: QubitHandle, world: &World| -> Result<()> {
        let members = world.group_of(q)?.qubits();
        if let Some(&clash) = members.iter().find(|m| seen.contains(m)) {
            return Err(Error::Entangled(clash));
        }
        seen.extend_from_slice(members);
        Ok(())
    };
    for &q in &cheque.a2 {
        claim(q, world)?;
    }
    let mut psi_groups: Vec<QubitHandle> = Vec::new();
    for &q in &cheque.psi_alice {
        let first = world.group_of(q)?.qubits()[0];
        if !psi_groups.contains(&first) {
            psi_groups.push(first);
            claim(q, world)?;
        }
    }

    let g_pass = record
        .b_handles
        .iter()
        .zip(&cheque.a2)
        .enumerate()
        .map(|(pos, (&b, &a2))| {
            let rho = world.reduced_density(&[a2, b])?;
            Ok(
                position_pass_probability(&rho, g_state(&cheque.r, &cheque.amount, pos + 1))
                    .clamp(0.0, 1.0),
            )
        })
        .collect::<Result<Vec<f64>>>()?;

    let f = f_states(&record.k, &record.id, &cheque.r, &cheque.amount, params.n)?;
    let psi_overlap = psi_overlap(world, &cheque.psi_alice, &f)?;
    let psi_pass = pass_probability(psi_overlap).clamp(0.0, 1.0);
    Ok(AcceptancePrediction {
        acceptance: params
            .policy
            .acceptance_probability(&g_pass, psi_pass)
            .clamp(0.0, 1.0),
        g_pass,
        psi_pass,
    })
}

/// `Tr(ρ_reg · |f⟩⟨f|)` for a product reference `f`, grouping qubits that
/// share a group.
fn psi_overlap(world: &World, reg: &[QubitHandle], f: &[[Amplitude; 2]]) -> Result<f64> {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (i, &q) in reg.iter().enumerate() {
        match blocks
            .iter_mut()
            .find(|b| world.same_group(reg[b[0]], q).unwrap_or(false))
        {
            Some(b) => b.push(i),
            None => blocks.push(vec![i]),
        }
    }
    let mut total = 1.0;
    for block in blocks {
        let qs: Vec<QubitHandle> = block.iter().map(|&i| reg[i]).collect();
        let rho = world.reduced_density(&qs)?;
        let mut vec = vec![c(1.0, 0.0); 1 << qs.len()];
        for (x, amp) in vec.iter_mut().enumerate() {
            for (p, &i) in block.iter().enumerate() {
                *amp *= f[i][(x >> p) & 1];
            }
        }
        total *= rho.expectation(&vec);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

/// Seed of trial `t`: SHA-256 over the campaign seed and trial index.
pub fn trial_seed(seed: u64, trial: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"qcheque/trial");
    h.update(seed.to_be_bytes());
    h.update(trial.to_be_bytes());
    h.finalize().into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub first: VerifyResult,
    pub second: Option<VerifyResult>,
    /// Oracle probability that `first` accepts.
    pub predicted: f64,
    pub counterfeit: bool,
    pub key_guess_hit: bool,
}

/// Rotation taking `from` to `to` (and `from⊥` to `to⊥`).
fn rotation(from: [Amplitude; 2], to: [Amplitude; 2]) -> [Amplitude; 4] {
    let from_perp = [-from[1].conj(), from[0].conj()];
    let to_perp = [-to[1].conj(), to[0].conj()];
    let mut m = [c(0.0, 0.0); 4];
    for r in 0..2 {
        for col in 0..2 {
            m[r * 2 + col] = to[r] * from[col].conj() + to_perp[r] * from_perp[col].conj();
        }
    }
    m
}

pub fn run_trial(config: &AttackConfig, trial: u64) -> Result<TrialOutcome> {
    let params = config.params;
    let mut world = World::from_seed_bytes(trial_seed(config.seed, trial));
    let mut bank = match config.strategy {
        AttackStrategy::ForgeFreshKeyGuess => Bank::new_experimental(params)?,
        _ => Bank::new(params)?,
    };
    let id = BitString::from_bytes(b"alice")?;
    let (mut book, _) = gen_account(&mut world, &mut bank, &id)?;
    let honest = sign_cheque(&mut world, &mut book, &params, config.amount)?;
    let mut key_guess_hit = false;

    let outcome = match config.strategy {
        AttackStrategy::Replay => {
            let predicted = acceptance_oracle(&world, &bank, &honest)?.acceptance;
            let first = verify_cheque(&mut world, &mut bank, &honest)?;
            let second = verify_cheque(&mut world, &mut bank, &honest)?;
            let counterfeit = first.accepted && second.accepted;
            (first, Some(second), predicted, counterfeit)
        }
        AttackStrategy::CloneAndDoubleSpend => {
            let mut adv = Adversary::new(&mut world);
            let mut copy_a = honest.clone();
            let mut copy_b = honest.clone();
            for (i, &q) in honest.a2.iter().enumerate() {
                let (x, y) = adv.clone_qubit(q)?;
                copy_a.a2[i] = x;
                copy_b.a2[i] = y;
            }
            for (i, &q) in honest.psi_alice.iter().enumerate() {
                let (x, y) = adv.clone_qubit(q)?;
                copy_a.psi_alice[i] = x;
                copy_b.psi_alice[i] = y;
            }
            let predicted = acceptance_oracle(&world, &bank, &copy_a)?.acceptance;
            let first = verify_cheque(&mut world, &mut bank, &copy_a)?;
            let second = verify_cheque(&mut world, &mut bank, &copy_b)?;
            let counterfeit = first.accepted && second.accepted;
            (first, Some(second), predicted, counterfeit)
        }
        AttackStrategy::TamperAmount => {
            let mut forged = honest.clone();
            forged.amount = amount_bits(config.forged_amount);
            let predicted = acceptance_oracle(&world, &bank, &forged)?.acceptance;
            let first = verify_cheque(&mut world, &mut bank, &forged)?;
            let counterfeit = first.accepted;
            (first, None, predicted, counterfeit)
        }
        AttackStrategy::ForgeFreshKeyGuess => {
            let mut forged = honest.clone();
            let new_amount = amount_bits(config.forged_amount);
            let mut adv = Adversary::new(&mut world);
            for (pos, &q) in honest.a2.iter().enumerate() {
                let from = g_state(&honest.r, &honest.amount, pos + 1);
                let to = g_state(&honest.r, &new_amount, pos + 1);
                adv.apply(&rotation(from, to), q)?;
            }
            for &q in &honest.psi_alice {
                adv.discard(q)?;
            }
            let guess = adv.random_bits(params.key_bits)?;
            key_guess_hit = guess == book.k;
            let states = f_states(&guess, &honest.id, &honest.r, &new_amount, params.n)?;
            forged.psi_alice = states
                .into_iter()
                .map(|s| adv.alloc(s))
                .collect::<Result<Vec<_>>>()?;
            forged.amount = new_amount;
            let predicted = acceptance_oracle(&world, &bank, &forged)?.acceptance;
            let first = verify_cheque(&mut world, &mut bank, &forged)?;
            let counterfeit = first.accepted;
            (first, None, predicted, counterfeit)
        }
        AttackStrategy::LocalUnitaryTamper => {
            let mut adv = Adversary::new(&mut world);
            let ops: Vec<_> = honest.a2.iter().map(|&q| (q, config.unitary)).collect();
            let tampered = local_tamper(&mut adv, &honest, &ops)?;
            let predicted = acceptance_oracle(&world, &bank, &tampered)?.acceptance;
            let first = verify_cheque(&mut world, &mut bank, &tampered)?;
            let counterfeit = first.accepted && !config.unitary.is_trivial();
            (first, None, predicted, counterfeit)
        }
    };
    let (first, second, predicted, counterfeit) = outcome;
    Ok(TrialOutcome {
        first,
        second,
        predicted,
        counterfeit,
        key_guess_hit,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: u64, trials: u64) -> Interval {
    let z = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    Interval {
        low: (centre - half).max(0.0),
        high: (centre + half).min(1.0),
    }
}

/// Whether an observed count agrees with a sum of independent Bernoulli
/// probabilities to within four standard deviations. With zero variance
/// the count must match exactly.
pub fn within_four_sigma(observed: u64, expected: f64, variance: f64) -> bool {
    let diff = (observed as f64 - expected).abs();
    if variance <= 1e-12 {
        diff < 0.5
    } else {
        diff <= 4.0 * variance.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackStats {
    pub strategy: AttackStrategy,
    pub trials: u64,
    /// Counterfeit events: an accepted cheque outside the issued set.
    pub successes: u64,
    pub success_rate: f64,
    pub success_interval: Interval,
    /// Acceptances of the manipulated cheque's (first) deposit.
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub acceptance_interval: Interval,
    pub predicted_acceptance: f64,
    pub predicted_sigma: f64,
    pub z_score: f64,
    pub agrees_with_prediction: bool,
    pub second_deposit_accepted: u64,
    pub key_guess_hits: u64,
    /// Rejection reasons over every submission.
    pub failure_histogram: BTreeMap<String, u64>,
    /// Failed swap tests per 1-based g-state position.
    pub g_position_failures: Vec<u64>,
    pub psi_alice_failures: u64,
}

impl AttackStats {
    pub fn from_outcomes(strategy: AttackStrategy, l: usize, outcomes: &[TrialOutcome]) -> Self {
        let trials = outcomes.len() as u64;
        let mut stats = AttackStats {
            strategy,
            trials,
            successes: 0,
            success_rate: 0.0,
            success_interval: Interval {
                low: 0.0,
                high: 0.0,
            },
            accepted: 0,
            acceptance_rate: 0.0,
            acceptance_interval: Interval {
                low: 0.0,
                high: 0.0,
            },
            predicted_acceptance: 0.0,
            predicted_sigma: 0.0,
            z_score: 0.0,
            agrees_with_prediction: false,
            second_deposit_accepted: 0,
            key_guess_hits: 0,
            failure_histogram: BTreeMap::new(),
            g_position_failures: vec![0; l],
            psi_alice_failures: 0,
        };
        let (mut mean, mut var) = (0.0, 0.0);
        for o in outcomes {
            stats.successes += o.counterfeit as u64;
            stats.accepted += o.first.accepted as u64;
            stats.key_guess_hits += o.key_guess_hit as u64;
            mean += o.predicted;
            var += (o.predicted * (1.0 - o.predicted)).max(0.0);
            if o.second.as_ref().is_some_and(|s| s.accepted) {
                stats.second_deposit_accepted += 1;
            }
            for r in std::iter::once(&o.first).chain(o.second.as_ref()) {
                if !r.accepted {
                    *stats
                        .failure_histogram
                        .entry(r.reason.label().to_string())
                        .or_default() += 1;
                }
                for (i, &p) in r.g_passes.iter().enumerate() {
                    if !p && i < l {
                        stats.g_position_failures[i] += 1;
                    }
                }
                stats.psi_alice_failures += (r.psi_pass == Some(false)) as u64;
            }
        }
        let n = trials.max(1) as f64;
        stats.success_rate = stats.successes as f64 / n;
        stats.success_interval = wilson_interval(stats.successes, trials.max(1));
        stats.acceptance_rate = stats.accepted as f64 / n;
        stats.acceptance_interval = wilson_interval(stats.accepted, trials.max(1));
        stats.predicted_acceptance = mean / n;
        stats.predicted_sigma = var.sqrt() / n;
        stats.z_score = if var > 1e-12 {
            (stats.accepted as f64 - mean) / var.sqrt()
        } else {
            0.0
        };
        stats.agrees_with_prediction = within_four_sigma(stats.accepted, mean, var);
        stats
    }
}

/// Runs `config.trials` independent trials in trial-index order.
pub fn run_attack(config: &AttackConfig) -> Result<AttackStats> {
    config.validate()?;
    let outcomes = (0..config.trials)
        .map(|t| run_trial(config, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackStats::from_outcomes(
        config.strategy,
        config.params.l,
        &outcomes,
    ))
}
