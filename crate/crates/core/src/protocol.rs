//! Account generation, cheque signing and verification, plus the Bank's
//! private database and spent-serial ledger.
//!
//! Verification runs the classical checks (record lookup, ledger,
//! signature) before touching any quantum state. Whatever the verdict, every
//! qubit the cheque carries is measured out before `verify_cheque` returns.
//! A serial whose cheque reached the quantum stage and failed is quarantined
//! so it can never be deposited again.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::comparator::{swap_test, AcceptancePolicy};
use crate::error::{Error, Result};
use crate::qowf::{amount_bits, eval_f, eval_g, BitString};
use crate::qsim::{Owner, PlusMinus, QubitHandle, World};
use crate::teleport::{encode_qubit, prepare_ghz, recover_qubit, GhzTriple};
use crate::uss::{
    sig_gen, sig_sign, sig_verify, PublicKey, SecretKey, Signature, DEFAULT_SECURITY,
};

pub const MIN_KEY_BITS: usize = 64;
pub const MIN_SERIAL_BITS: usize = 64;
/// Lower bound on `key_bits` for deliberately weak key-guessing experiments.
pub const MIN_EXPERIMENTAL_KEY_BITS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// GHZ triples (g-state positions) per cheque.
    pub l: usize,
    /// Qubits in the signature state ψ_alice.
    pub n: usize,
    /// Bit length of the shared key `k` and the nonce `r`.
    pub key_bits: usize,
    pub serial_bits: usize,
    /// Security parameter handed to the signature scheme.
    pub sig_security: u32,
    pub policy: AcceptancePolicy,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            l: 8,
            n: 8,
            key_bits: 256,
            serial_bits: 128,
            sig_security: DEFAULT_SECURITY,
            policy: AcceptancePolicy::default(),
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        self.validate_with_key_floor(MIN_KEY_BITS)
    }

    /// Like [`validate`](Self::validate) but admits keys down to
    /// [`MIN_EXPERIMENTAL_KEY_BITS`].
    pub fn validate_experimental(&self) -> Result<()> {
        self.validate_with_key_floor(MIN_EXPERIMENTAL_KEY_BITS)
    }

    fn validate_with_key_floor(&self, key_floor: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.l == 0 {
            return bad("l must be at least 1".into());
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.l > u32::MAX as usize {
            return bad("l must fit in 32 bits".into());
        }
        if self.key_bits < key_floor {
            return bad(format!(
                "key length {} is below {key_floor} bits",
                self.key_bits
            ));
        }
        if self.serial_bits < MIN_SERIAL_BITS {
            return bad(format!(
                "serial length {} is below {MIN_SERIAL_BITS} bits",
                self.serial_bits
            ));
        }
        crate::uss::LamportSizes::for_security(self.sig_security)
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        self.policy.validate()
    }
}

// ---------------------------------------------------------------------------
// Transcript
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Payee,
    Branch,
    Bank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadType {
    AccountOpened,
    DepositRequest,
    RecordLookup,
    HadamardOutcome,
    Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMessage {
    pub seq: u64,
    pub sender: Party,
    pub receiver: Party,
    pub payload_type: PayloadType,
    pub payload: String,
}

// ---------------------------------------------------------------------------
// Bank database
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankRecord {
    pub id: BitString,
    pub pk: PublicKey,
    pub k: BitString,
    pub serial: BitString,
    pub b_handles: Vec<QubitHandle>,
    spent: bool,
    quarantined: bool,
}

impl BankRecord {
    pub fn is_spent(&self) -> bool {
        self.spent
    }

    pub fn is_quarantined(&self) -> bool {
        self.quarantined
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bank {
    params: SchemeParams,
    records: BTreeMap<String, BankRecord>,
    transcript: Vec<TranscriptMessage>,
}

impl Bank {
    pub fn new(params: SchemeParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::new_unchecked(params))
    }

    /// Accepts parameters that pass [`SchemeParams::validate_experimental`].
    pub fn new_experimental(params: SchemeParams) -> Result<Self> {
        params.validate_experimental()?;
        Ok(Self::new_unchecked(params))
    }

    fn new_unchecked(params: SchemeParams) -> Self {
        Bank {
            params,
            records: BTreeMap::new(),
            transcript: Vec::new(),
        }
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn record(&self, serial: &BitString) -> Option<&BankRecord> {
        self.records.get(&serial.to_hex())
    }

    pub fn records(&self) -> impl Iterator<Item = &BankRecord> {
        self.records.values()
    }

    pub fn transcript(&self) -> &[TranscriptMessage] {
        &self.transcript
    }

    fn log(&mut self, sender: Party, receiver: Party, payload_type: PayloadType, payload: String) {
        let seq = self.transcript.len() as u64;
        self.transcript.push(TranscriptMessage {
            seq,
            sender,
            receiver,
            payload_type,
            payload,
        });
    }
}

/// Whether `serial` has been deposited successfully.
pub fn spent_ledger_check(bank: &Bank, serial: &BitString) -> bool {
    bank.record(serial).is_some_and(|r| r.spent)
}

// ---------------------------------------------------------------------------
// Cheque book and cheque
// ---------------------------------------------------------------------------

/// Alice's half of an account: enough to write exactly one cheque.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChequeBook {
    pub id: BitString,
    pub pk: PublicKey,
    pub sk: SecretKey,
    pub k: BitString,
    pub serial: BitString,
    pub triples: Vec<GhzTriple>,
    used: bool,
}

impl ChequeBook {
    pub fn is_used(&self) -> bool {
        self.used
    }

    /// Handles Alice currently holds (`a1`, `a2` of every unconsumed triple).
    pub fn alice_handles(&self) -> Vec<QubitHandle> {
        self.triples
            .iter()
            .filter(|t| !t.is_consumed())
            .flat_map(|t| [t.a1, t.a2])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumCheque {
    pub id: BitString,
    pub serial: BitString,
    pub r: BitString,
    pub signature: Signature,
    pub amount: BitString,
    pub a2: Vec<QubitHandle>,
    pub psi_alice: Vec<QubitHandle>,
}

impl QuantumCheque {
    pub fn handles(&self) -> impl Iterator<Item = QubitHandle> + '_ {
        self.a2.iter().chain(&self.psi_alice).copied()
    }
}

/// Opens an account for `id`: fresh key, signing keypair, serial and `l`
/// GHZ triples. The Bank keeps the `b` halves.
pub fn gen_account(
    world: &mut World,
    bank: &mut Bank,
    id: &BitString,
) -> Result<(ChequeBook, BankRecord)> {
    let params = bank.params;
    let k = BitString::random(world.rng(), params.key_bits)?;
    let keys = sig_gen(params.sig_security, world.rng())?;
    let serial = loop {
        let s = BitString::random(world.rng(), params.serial_bits)?;
        if !bank.records.contains_key(&s.to_hex()) {
            break s;
        }
    };
    let triples = (1..=params.l)
        .map(|i| prepare_ghz(world, i))
        .collect::<Result<Vec<_>>>()?;
    let record = BankRecord {
        id: id.clone(),
        pk: keys.pk.clone(),
        k: k.clone(),
        serial: serial.clone(),
        b_handles: triples.iter().map(|t| t.b).collect(),
        spent: false,
        quarantined: false,
    };
    bank.records.insert(serial.to_hex(), record.clone());
    bank.log(
        Party::Bank,
        Party::Alice,
        PayloadType::AccountOpened,
        format!("id={} serial={}", id.to_hex(), serial.to_hex()),
    );
    let book = ChequeBook {
        id: id.clone(),
        pk: keys.pk,
        sk: keys.sk,
        k,
        serial,
        triples,
        used: false,
    };
    Ok((book, record))
}

/// Writes the book's single cheque for `amount` units and hands its qubits
/// to the payee.
pub fn sign_cheque(
    world: &mut World,
    book: &mut ChequeBook,
    params: &SchemeParams,
    amount: u64,
) -> Result<QuantumCheque> {
    if book.used {
        return Err(Error::BookUsed);
    }
    if book.triples.len() != params.l {
        return Err(Error::LengthMismatch(book.triples.len(), params.l));
    }
    if let Some(t) = book.triples.iter().find(|t| t.is_consumed()) {
        return Err(Error::TripleConsumed(t.index));
    }
    book.used = true;
    let m = amount_bits(amount);
    let r = BitString::random(world.rng(), params.key_bits)?;
    let signature = sig_sign(&mut book.sk, &book.serial)?;
    let psi_alice = eval_f(world, Owner::Alice, &book.k, &book.id, &r, &m, params.n)?;
    for triple in book.triples.iter_mut() {
        let g = eval_g(world, Owner::Alice, &r, &m, triple.index, params.l)?;
        encode_qubit(world, g, triple)?;
    }
    let a2: Vec<QubitHandle> = book.triples.iter().map(|t| t.a2).collect();
    for &q in a2.iter().chain(&psi_alice) {
        world.set_owner(q, Owner::Payee)?;
    }
    Ok(QuantumCheque {
        id: book.id.clone(),
        serial: book.serial.clone(),
        r,
        signature,
        amount: m,
        a2,
        psi_alice,
    })
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyReason {
    Ok,
    /// Wrong handle counts, or handles that are missing, repeated or
    /// held by the Bank.
    Malformed,
    UnknownIdSerial,
    /// The serial failed an earlier quantum check and is quarantined.
    Revoked,
    BadSignature,
    DoubleSpend,
    PsiAliceFail,
    /// 1-based positions of the failed g-state tests.
    GStateFail(Vec<usize>),
}

impl VerifyReason {
    /// Short label used in histograms.
    pub fn label(&self) -> &'static str {
        match self {
            VerifyReason::Ok => "ok",
            VerifyReason::Malformed => "malformed",
            VerifyReason::UnknownIdSerial => "unknown_id_serial",
            VerifyReason::Revoked => "revoked",
            VerifyReason::BadSignature => "bad_signature",
            VerifyReason::DoubleSpend => "double_spend",
            VerifyReason::PsiAliceFail => "psi_alice_fail",
            VerifyReason::GStateFail(_) => "g_state_fail",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub accepted: bool,
    pub reason: VerifyReason,
    /// Per-position swap-test results; empty if the quantum stage never ran.
    pub g_passes: Vec<bool>,
    pub psi_pass: Option<bool>,
    pub hadamard_outcomes: Vec<PlusMinus>,
}

impl VerifyResult {
    fn rejected(reason: VerifyReason) -> Self {
        VerifyResult {
            accepted: false,
            reason,
            g_passes: Vec::new(),
            psi_pass: None,
            hadamard_outcomes: Vec::new(),
        }
    }
}

/// Measures out every live, non-Bank qubit the cheque names.
fn destroy(world: &mut World, cheque: &QuantumCheque) -> Result<()> {
    let mut live: Vec<QubitHandle> = Vec::new();
    for q in cheque.handles() {
        if world.contains(q) && world.owner(q)? != Owner::Bank && !live.contains(&q) {
            live.push(q);
        }
    }
    world.discard_many(&live)?;
    Ok(())
}

fn handles_usable(world: &World, cheque: &QuantumCheque) -> bool {
    let mut seen = BTreeSet::new();
    cheque
        .handles()
        .all(|q| seen.insert(q) && world.owner(q).is_ok_and(|o| o != Owner::Bank))
}

fn conclude(
    world: &mut World,
    bank: &mut Bank,
    cheque: &QuantumCheque,
    result: VerifyResult,
) -> Result<VerifyResult> {
    destroy(world, cheque)?;
    bank.log(
        Party::Branch,
        Party::Payee,
        PayloadType::Verdict,
        format!(
            "serial={} verdict={}",
            cheque.serial.to_hex(),
            result.reason.label()
        ),
    );
    Ok(result)
}

/// Verifies a deposited cheque. Errors only on simulator failures; every
/// protocol outcome is a [`VerifyResult`].
pub fn verify_cheque(
    world: &mut World,
    bank: &mut Bank,
    cheque: &QuantumCheque,
) -> Result<VerifyResult> {
    let params = bank.params;
    bank.log(
        Party::Payee,
        Party::Branch,
        PayloadType::DepositRequest,
        format!(
            "id={} serial={}",
            cheque.id.to_hex(),
            cheque.serial.to_hex()
        ),
    );
    if cheque.a2.len() != params.l || cheque.psi_alice.len() != params.n {
        return conclude(
            world,
            bank,
            cheque,
            VerifyResult::rejected(VerifyReason::Malformed),
        );
    }
    let key = cheque.serial.to_hex();
    let lookup = bank
        .records
        .get(&key)
        .filter(|r| r.id == cheque.id)
        .cloned();
    bank.log(
        Party::Bank,
        Party::Branch,
        PayloadType::RecordLookup,
        format!("serial={key} found={}", lookup.is_some()),
    );
    let Some(record) = lookup else {
        return conclude(
            world,
            bank,
            cheque,
            VerifyResult::rejected(VerifyReason::UnknownIdSerial),
        );
    };
    let early = if record.spent {
        Some(VerifyReason::DoubleSpend)
    } else if record.quarantined {
        Some(VerifyReason::Revoked)
    } else if !sig_verify(&record.pk, &cheque.serial, &cheque.signature) {
        Some(VerifyReason::BadSignature)
    } else if !handles_usable(world, cheque) {
        Some(VerifyReason::Malformed)
    } else {
        None
    };
    if let Some(reason) = early {
        return conclude(world, bank, cheque, VerifyResult::rejected(reason));
    }
    let b_handles = record.b_handles.clone();
    let (k, id) = (record.k.clone(), record.id.clone());

    let mut g_passes = Vec::with_capacity(params.l);
    let mut outcomes = Vec::with_capacity(params.l);
    for (pos, (&b, &a2)) in b_handles.iter().zip(&cheque.a2).enumerate() {
        let i = pos + 1;
        let (a2, outcome) = recover_qubit(world, b, a2)?;
        bank.log(
            Party::Bank,
            Party::Branch,
            PayloadType::HadamardOutcome,
            format!("position={i} outcome={outcome:?}"),
        );
        outcomes.push(outcome);
        let reference = eval_g(world, Owner::Bank, &cheque.r, &cheque.amount, i, params.l)?;
        g_passes.push(swap_test(world, &[a2], &[reference])?.passed);
        world.discard_many(&[a2, reference])?;
    }
    let reference = eval_f(
        world,
        Owner::Bank,
        &k,
        &id,
        &cheque.r,
        &cheque.amount,
        params.n,
    )?;
    let psi_pass = swap_test(world, &cheque.psi_alice, &reference)?.passed;
    let mut spent_qubits = reference;
    spent_qubits.extend_from_slice(&cheque.psi_alice);
    world.discard_many(&spent_qubits)?;

    let accepted = params.policy.accepts(&g_passes, psi_pass);
    let reason = if accepted {
        VerifyReason::Ok
    } else if !params.policy.g_verdict(&g_passes) {
        VerifyReason::GStateFail(
            g_passes
                .iter()
                .enumerate()
                .filter(|(_, &p)| !p)
                .map(|(i, _)| i + 1)
                .collect(),
        )
    } else {
        VerifyReason::PsiAliceFail
    };
    let record = bank.records.get_mut(&key).expect("looked up above");
    if accepted {
        record.spent = true;
    } else {
        record.quarantined = true;
    }
    let result = VerifyResult {
        accepted,
        reason,
        g_passes,
        psi_pass: Some(psi_pass),
        hadamard_outcomes: outcomes,
    };
    conclude(world, bank, cheque, result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qowf::g_state;
    use crate::qsim::c;

    fn small() -> SchemeParams {
        SchemeParams {
            l: 3,
            n: 3,
            ..SchemeParams::default()
        }
    }

    fn alice() -> BitString {
        BitString::from_bytes(b"alice").unwrap()
    }

    fn setup(seed: u64, params: SchemeParams) -> (World, Bank, ChequeBook) {
        let mut w = World::new(seed);
        let mut bank = Bank::new(params).unwrap();
        let (book, _) = gen_account(&mut w, &mut bank, &alice()).unwrap();
        (w, bank, book)
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::default().validate().is_ok());
        for bad in [
            SchemeParams { l: 0, ..small() },
            SchemeParams { n: 0, ..small() },
            SchemeParams {
                key_bits: 63,
                ..small()
            },
            SchemeParams {
                serial_bits: 32,
                ..small()
            },
            SchemeParams {
                sig_security: 40,
                ..small()
            },
            SchemeParams {
                policy: AcceptancePolicy::threshold(0.5, 0.9),
                ..small()
            },
        ] {
            assert!(
                matches!(bad.validate(), Err(Error::InvalidParams(_))),
                "{bad:?}"
            );
        }
        let tiny_key = SchemeParams {
            key_bits: 16,
            ..small()
        };
        assert!(tiny_key.validate().is_err());
        assert!(tiny_key.validate_experimental().is_ok());
        assert!(Bank::new(tiny_key).is_err());
        assert!(Bank::new_experimental(tiny_key).is_ok());
    }

    #[test]
    fn gen_distributes_custody() {
        let (w, bank, book) = setup(1, small());
        let alice_held = book.alice_handles();
        assert_eq!(alice_held.len(), 2 * 3);
        assert!(alice_held
            .iter()
            .all(|&q| w.owner(q).unwrap() == Owner::Alice));
        let record = bank.record(&book.serial).unwrap();
        assert_eq!(record.b_handles.len(), 3);
        for &b in &record.b_handles {
            assert_eq!(w.owner(b).unwrap(), Owner::Bank);
            let rho = w.reduced_density(&[b]).unwrap();
            assert!((rho.get(0, 0).re - 0.5).abs() < 1e-12);
            assert!((rho.get(1, 1).re - 0.5).abs() < 1e-12);
            assert!(rho.get(0, 1).norm() < 1e-12);
        }
        assert_eq!(record.k.len(), 256);
        assert_eq!(book.serial.len(), 128);
        assert!(!spent_ledger_check(&bank, &book.serial));
    }

    #[test]
    fn two_accounts_are_disjoint() {
        let mut w = World::new(2);
        let mut bank = Bank::new(small()).unwrap();
        let (a, _) = gen_account(&mut w, &mut bank, &alice()).unwrap();
        let (b, _) = gen_account(&mut w, &mut bank, &alice()).unwrap();
        assert_ne!(a.serial, b.serial);
        let ha: BTreeSet<_> = a.triples.iter().flat_map(|t| [t.a1, t.a2, t.b]).collect();
        assert!(b
            .triples
            .iter()
            .flat_map(|t| [t.a1, t.a2, t.b])
            .all(|q| !ha.contains(&q)));
        assert_eq!(bank.records().count(), 2);
    }

    #[test]
    fn signed_positions_recover_to_g_states() {
        let params = small();
        let (mut w, bank, mut book) = setup(3, params);
        let cheque = sign_cheque(&mut w, &mut book, &params, 250).unwrap();
        assert!(sig_verify(&book.pk, &cheque.serial, &cheque.signature));
        for q in cheque.handles() {
            assert_eq!(w.owner(q).unwrap(), Owner::Payee);
        }
        let record = bank.record(&cheque.serial).unwrap();
        for (pos, (&b, &a2)) in record.b_handles.iter().zip(&cheque.a2).enumerate() {
            let mut scratch = w.clone();
            let (q, _) = recover_qubit(&mut scratch, b, a2).unwrap();
            let got = scratch.register_state(&[q]).unwrap();
            let want = g_state(&cheque.r, &cheque.amount, pos + 1);
            let f = (want[0].conj() * got[0] + want[1].conj() * got[1]).norm_sqr();
            assert!(
                (f - 1.0).abs() < 1e-10,
                "position {}: fidelity {f}",
                pos + 1
            );
        }
    }

    #[test]
    fn book_signs_once() {
        let params = small();
        let (mut w, _, mut book) = setup(4, params);
        sign_cheque(&mut w, &mut book, &params, 1).unwrap();
        assert!(book.is_used());
        assert!(matches!(
            sign_cheque(&mut w, &mut book, &params, 1),
            Err(Error::BookUsed)
        ));
    }

    #[test]
    fn honest_cheques_always_clear() {
        let params = small();
        for seed in 0..100 {
            let (mut w, mut bank, mut book) = setup(seed, params);
            let cheque = sign_cheque(&mut w, &mut book, &params, seed).unwrap();
            let before = bank.transcript().len();
            let result = verify_cheque(&mut w, &mut bank, &cheque).unwrap();
            assert!(result.accepted, "seed {seed}: {result:?}");
            assert_eq!(result.reason, VerifyReason::Ok);
            assert!(cheque.handles().all(|q| !w.contains(q)));
            assert!(spent_ledger_check(&bank, &cheque.serial));
            let outcomes = bank.transcript()[before..]
                .iter()
                .filter(|m| m.payload_type == PayloadType::HadamardOutcome)
                .count();
            assert_eq!(outcomes, params.l);
            // every triple and reference qubit has been measured out
            assert_eq!(w.qubit_count(), 0);
            w.check_invariants().unwrap();
        }
    }

    #[test]
    fn second_deposit_is_double_spend() {
        let params = small();
        let (mut w, mut bank, mut book) = setup(5, params);
        let cheque = sign_cheque(&mut w, &mut book, &params, 9).unwrap();
        assert!(verify_cheque(&mut w, &mut bank, &cheque).unwrap().accepted);
        let again = verify_cheque(&mut w, &mut bank, &cheque).unwrap();
        assert_eq!(again.reason, VerifyReason::DoubleSpend);
        assert!(spent_ledger_check(&bank, &cheque.serial));
    }

    #[test]
    fn classical_rejections_destroy_the_cheque() {
        let params = small();

        let (mut w, mut bank, mut book) = setup(6, params);
        let mut cheque = sign_cheque(&mut w, &mut book, &params, 9).unwrap();
        cheque.serial.flip_bit(0);
        let res = verify_cheque(&mut w, &mut bank, &cheque).unwrap();
        assert_eq!(res.reason, VerifyReason::UnknownIdSerial);
        assert!(cheque.handles().all(|q| !w.contains(q)));

        let (mut w, mut bank, mut book) = setup(7, params);
        let mut cheque = sign_cheque(&mut w, &mut book, &params, 9).unwrap();
        cheque.id = BitString::from_bytes(b"mallory").unwrap();
        assert_eq!(
            verify_cheque(&mut w, &mut bank, &cheque).unwrap().reason,
            VerifyReason::UnknownIdSerial
        );

        let (mut w, mut bank, mut book) = setup(8, params);
        let mut cheque = sign_cheque(&mut w, &mut book, &params, 9).unwrap();
        cheque.signature.flip_bit(17);
        let res = verify_cheque(&mut w, &mut bank, &cheque).unwrap();
        assert_eq!(res.reason, VerifyReason::BadSignature);
        assert!(cheque.handles().all(|q| !w.contains(q)));
        // a destroyed cheque leaves the ledger untouched
        assert!(!spent_ledger_check(&bank, &cheque.serial));
        assert!(!bank.record(&cheque.serial).unwrap().is_quarantined());

        let (mut w, mut bank, mut book) = setup(9, params);
        let mut cheque = sign_cheque(&mut w, &mut book, &params, 9).unwrap();
        let dropped = cheque.a2.pop().unwrap();
        assert_eq!(
            verify_cheque(&mut w, &mut bank, &cheque).unwrap().reason,
            VerifyReason::Malformed
        );
        assert!(w.contains(dropped));
        assert!(cheque.handles().all(|q| !w.contains(q)));
    }

    #[test]
    fn bank_handles_cannot_be_smuggled_in() {
        let params = small();
        let (mut w, mut bank, mut book) = setup(10, params);
        let mut cheque = sign_cheque(&mut w, &mut book, &params, 9).unwrap();
        let b0 = bank.record(&cheque.serial).unwrap().b_handles[0];
        cheque.a2[1] = b0;
        assert_eq!(
            verify_cheque(&mut w, &mut bank, &cheque).unwrap().reason,
            VerifyReason::Malformed
        );
        assert!(w.contains(b0));
    }

    #[test]
    fn failed_quantum_stage_quarantines_serial() {
        let params = SchemeParams {
            l: 2,
            n: 2,
            ..small()
        };
        let (mut w, mut bank, mut book) = setup(11, params);
        let mut cheque = sign_cheque(&mut w, &mut book, &params, 9).unwrap();
        // swap ψ_alice for |1⟩|1⟩ until some run fails
        for q in cheque.psi_alice.clone() {
            w.discard(q).unwrap();
        }
        cheque.psi_alice = (0..2)
            .map(|_| w.alloc(Owner::Payee, [c(0.0, 0.0), c(1.0, 0.0)]).unwrap())
            .collect();
        let res = verify_cheque(&mut w, &mut bank, &cheque).unwrap();
        assert_eq!(res.g_passes.len(), 2);
        assert!(res.psi_pass.is_some());
        if !res.accepted {
            let rec = bank.record(&cheque.serial).unwrap();
            assert!(rec.is_quarantined() && !rec.is_spent());
            let again = verify_cheque(&mut w, &mut bank, &cheque).unwrap();
            assert_eq!(again.reason, VerifyReason::Revoked);
        }
        assert!(cheque.handles().all(|q| !w.contains(q)));
    }

    #[test]
    fn reason_for_failed_g_positions() {
        let params = SchemeParams {
            l: 4,
            n: 1,
            ..small()
        };
        let mut seen_g_fail = false;
        for seed in 0..40 {
            let (mut w, mut bank, mut book) = setup(seed, params);
            let mut cheque = sign_cheque(&mut w, &mut book, &params, 5).unwrap();
            cheque.amount = amount_bits(6);
            let res = verify_cheque(&mut w, &mut bank, &cheque).unwrap();
            assert_eq!(res.accepted, res.reason == VerifyReason::Ok);
            if let VerifyReason::GStateFail(ix) = &res.reason {
                seen_g_fail = true;
                let want: Vec<usize> = (1..=4).filter(|&i| !res.g_passes[i - 1]).collect();
                assert_eq!(ix, &want);
            }
        }
        assert!(seen_g_fail);
    }
}
