//! GHZ-based encoding of single qubits.
//!
//! Alice Bell-measures the payload `ψ = α|0⟩+β|1⟩` together with `a1` and
//! applies a Pauli to `a2` keyed on the outcome. The pair `(a2, b)` then
//! holds `α|0,x⟩ + β|1,x̄⟩` where `x = 0` after a `Psi` outcome and `x = 1`
//! after a `Phi` outcome: a correction on `a2` alone cannot move the Bank's
//! marginal, which stays `diag(|α|², |β|²)` or `diag(|β|², |α|²)`.
//! Measuring `b` in the Hadamard basis is blind to `x`, so the branch
//! recovers `ψ` exactly (up to global phase) by applying `Z` on `Minus`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{gates, Amplitude, BellOutcome, Owner, PlusMinus, QubitHandle, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauliCorrection {
    I,
    X,
    Y,
    Z,
}

impl PauliCorrection {
    pub fn matrix(self) -> [Amplitude; 4] {
        match self {
            PauliCorrection::I => gates::identity(),
            PauliCorrection::X => gates::pauli_x(),
            PauliCorrection::Y => gates::pauli_y(),
            PauliCorrection::Z => gates::pauli_z(),
        }
    }

    pub fn apply(self, world: &mut World, q: QubitHandle) -> Result<()> {
        if self == PauliCorrection::I {
            world.owner(q)?;
            return Ok(());
        }
        world.apply_gate(&self.matrix(), &[q])
    }
}

/// Alice's correction on `a2` after her Bell measurement.
pub fn sign_correction(outcome: BellOutcome) -> PauliCorrection {
    match outcome {
        BellOutcome::PsiPlus => PauliCorrection::I,
        BellOutcome::PsiMinus => PauliCorrection::Z,
        BellOutcome::PhiPlus => PauliCorrection::X,
        BellOutcome::PhiMinus => PauliCorrection::Y,
    }
}

/// The branch's correction on `a2` after the Bank's Hadamard-basis outcome.
pub fn verify_correction(outcome: PlusMinus) -> PauliCorrection {
    match outcome {
        PlusMinus::Plus => PauliCorrection::I,
        PlusMinus::Minus => PauliCorrection::Z,
    }
}

/// One GHZ triple: `a1`, `a2` held by Alice, `b` by the Bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhzTriple {
    pub index: usize,
    pub a1: QubitHandle,
    pub a2: QubitHandle,
    pub b: QubitHandle,
    consumed: bool,
}

impl GhzTriple {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingRecord {
    pub index: usize,
    pub outcome: BellOutcome,
    pub correction: PauliCorrection,
}

/// Prepares `(|000⟩+|111⟩)/√2` on three fresh qubits.
pub fn prepare_ghz(world: &mut World, index: usize) -> Result<GhzTriple> {
    if world.ceiling() < 3 {
        return Err(Error::CapacityExceeded(3, world.ceiling()));
    }
    let a1 = world.alloc_zero(Owner::Alice);
    let a2 = world.alloc_zero(Owner::Alice);
    let b = world.alloc_zero(Owner::Bank);
    world.apply_gate(&gates::hadamard(), &[a1])?;
    world.apply_gate(&gates::cnot(), &[a1, a2])?;
    world.apply_gate(&gates::cnot(), &[a1, b])?;
    Ok(GhzTriple {
        index,
        a1,
        a2,
        b,
        consumed: false,
    })
}

/// Encodes the single qubit `psi` into `triple`; `psi` and `a1` are
/// consumed by the Bell measurement.
pub fn encode_qubit(
    world: &mut World,
    psi: QubitHandle,
    triple: &mut GhzTriple,
) -> Result<EncodingRecord> {
    if triple.consumed || !world.contains(triple.a1) {
        return Err(Error::TripleConsumed(triple.index));
    }
    if psi == triple.a1 || psi == triple.a2 || psi == triple.b {
        return Err(Error::DuplicateQubit(psi));
    }
    world.owner(psi)?;
    if world.group_of(psi)?.qubits().len() != 1 {
        return Err(Error::Entangled(psi));
    }
    let outcome = world.measure_bell(psi, triple.a1)?;
    triple.consumed = true;
    let correction = sign_correction(outcome);
    correction.apply(world, triple.a2)?;
    Ok(EncodingRecord {
        index: triple.index,
        outcome,
        correction,
    })
}

/// Measures the Bank's `b` out in the Hadamard basis and corrects `a2`,
/// which then carries the encoded payload. Returns `a2` and the outcome
/// that was sent to the branch.
pub fn recover_qubit(
    world: &mut World,
    b: QubitHandle,
    a2: QubitHandle,
) -> Result<(QubitHandle, PlusMinus)> {
    if a2 == b {
        return Err(Error::DuplicateQubit(a2));
    }
    world.owner(a2)?;
    let outcome = world.measure_out_hadamard(b)?;
    verify_correction(outcome).apply(world, a2)?;
    Ok((a2, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{c, DensityMatrix};
    use rand::Rng;

    fn random_qubit(rng: &mut impl Rng) -> [Amplitude; 2] {
        let u: f64 = rng.gen();
        [
            c(u.sqrt(), 0.0),
            Amplitude::from_polar((1.0 - u).sqrt(), rng.gen::<f64>() * std::f64::consts::TAU),
        ]
    }

    fn fidelity(a: &[Amplitude], b: &[Amplitude]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.conj() * y)
            .sum::<Amplitude>()
            .norm_sqr()
    }

    fn within_4_sigma(hits: usize, trials: usize, p: f64) -> bool {
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        (hits as f64 - trials as f64 * p).abs() <= 4.0 * sigma
    }

    #[test]
    fn ghz_preparation() {
        let mut w = World::new(1);
        let t = prepare_ghz(&mut w, 1).unwrap();
        for q in [t.a1, t.a2, t.b] {
            let rho = w.reduced_density(&[q]).unwrap();
            assert!(rho.max_abs_diff(&DensityMatrix::diagonal(&[0.5, 0.5])) < 1e-12);
        }
        let mut ghz = vec![c(0.0, 0.0); 8];
        ghz[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        ghz[7] = ghz[0];
        assert!(
            (fidelity(&w.register_state(&[t.a1, t.a2, t.b]).unwrap(), &ghz) - 1.0).abs() < 1e-12
        );
        assert_eq!(w.owner(t.b).unwrap(), Owner::Bank);
        assert_eq!(w.owner(t.a2).unwrap(), Owner::Alice);
    }

    #[test]
    fn ghz_measurements_are_all_equal() {
        let mut w = World::new(2);
        let trials = 10_000;
        let mut zeros = 0;
        for i in 0..trials {
            let t = prepare_ghz(&mut w, i).unwrap();
            let bits: Vec<u8> = [t.a1, t.a2, t.b]
                .iter()
                .map(|&q| w.discard(q).unwrap())
                .collect();
            assert!(bits == [0, 0, 0] || bits == [1, 1, 1]);
            zeros += (bits[0] == 0) as usize;
        }
        assert!(within_4_sigma(zeros, trials, 0.5));
    }

    #[test]
    fn corrections_follow_the_branch_algebra() {
        // For each forced Bell outcome, the corrected (a2, b) state is
        // α|0x⟩+β|1x̄⟩ and both Hadamard outcomes recover ψ exactly.
        let mut w = World::new(3);
        for _ in 0..20 {
            let s = random_qubit(w.rng());
            let psi = w.alloc(Owner::Alice, s).unwrap();
            let t = prepare_ghz(&mut w, 1).unwrap();
            for outcome in BellOutcome::ALL {
                let mut scratch = w.clone();
                let p = scratch.force_bell(psi, t.a1, outcome).unwrap();
                assert!((p - 0.25).abs() < 1e-12);
                sign_correction(outcome).apply(&mut scratch, t.a2).unwrap();
                let z = c(0.0, 0.0);
                // little-endian over [a2, b]
                let want = match outcome {
                    BellOutcome::PsiPlus | BellOutcome::PsiMinus => [s[0], z, z, s[1]],
                    BellOutcome::PhiPlus | BellOutcome::PhiMinus => [z, s[1], s[0], z],
                };
                let got = scratch.register_state(&[t.a2, t.b]).unwrap();
                assert!((fidelity(&got, &want) - 1.0).abs() < 1e-10, "{outcome:?}");
                for pm in [PlusMinus::Plus, PlusMinus::Minus] {
                    let mut branch = scratch.clone();
                    let q = branch.force_hadamard(t.b, pm).unwrap();
                    assert!((q - 0.5).abs() < 1e-12);
                    verify_correction(pm).apply(&mut branch, t.a2).unwrap();
                    let out = branch.register_state(&[t.a2]).unwrap();
                    assert!((fidelity(&out, &s) - 1.0).abs() < 1e-10);
                }
            }
            w.discard(psi).unwrap();
        }
    }

    #[test]
    fn bank_marginal_before_correction() {
        let mut w = World::new(4);
        let s = random_qubit(w.rng());
        let (a2, b2) = (s[0].norm_sqr(), s[1].norm_sqr());
        let psi = w.alloc(Owner::Alice, s).unwrap();
        let t = prepare_ghz(&mut w, 1).unwrap();
        for (outcome, diag) in [
            (BellOutcome::PsiPlus, [a2, b2]),
            (BellOutcome::PsiMinus, [a2, b2]),
            (BellOutcome::PhiPlus, [b2, a2]),
            (BellOutcome::PhiMinus, [b2, a2]),
        ] {
            let mut scratch = w.clone();
            scratch.force_bell(psi, t.a1, outcome).unwrap();
            let rho = scratch.reduced_density(&[t.b]).unwrap();
            assert!(rho.max_abs_diff(&DensityMatrix::diagonal(&diag)) < 1e-12);
            // Alice's correction on a2 does not move the Bank's marginal
            sign_correction(outcome).apply(&mut scratch, t.a2).unwrap();
            let after = scratch.reduced_density(&[t.b]).unwrap();
            assert!(after.max_abs_diff(&rho) < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_outcome_frequencies() {
        let mut w = World::new(5);
        let trials = 10_000;
        let mut bell = [0usize; 4];
        let mut plus = 0;
        for i in 0..trials {
            let s = random_qubit(w.rng());
            let psi = w.alloc(Owner::Alice, s).unwrap();
            let mut t = prepare_ghz(&mut w, i).unwrap();
            let rec = encode_qubit(&mut w, psi, &mut t).unwrap();
            assert_eq!(rec.correction, sign_correction(rec.outcome));
            bell[rec.outcome as usize] += 1;
            let (out, pm) = recover_qubit(&mut w, t.b, t.a2).unwrap();
            plus += (pm == PlusMinus::Plus) as usize;
            let got = w.register_state(&[out]).unwrap();
            assert!(fidelity(&got, &s) >= 1.0 - 1e-10);
            w.discard(out).unwrap();
            w.check_invariants().unwrap();
        }
        for count in bell {
            assert!(within_4_sigma(count, trials, 0.25), "{bell:?}");
        }
        assert!(within_4_sigma(plus, trials, 0.5));
        assert_eq!(w.qubit_count(), 0);
    }

    #[test]
    fn zero_round_trips_exactly() {
        let mut w = World::new(6);
        let psi = w.alloc_zero(Owner::Alice);
        let mut t = prepare_ghz(&mut w, 1).unwrap();
        encode_qubit(&mut w, psi, &mut t).unwrap();
        let (out, _) = recover_qubit(&mut w, t.b, t.a2).unwrap();
        assert_eq!(w.measure_computational(out).unwrap(), 0);
    }

    #[test]
    fn triple_is_single_use() {
        let mut w = World::new(7);
        let mut t = prepare_ghz(&mut w, 3).unwrap();
        let p1 = w.alloc_zero(Owner::Alice);
        encode_qubit(&mut w, p1, &mut t).unwrap();
        assert!(t.is_consumed());
        let p2 = w.alloc_zero(Owner::Alice);
        assert!(matches!(
            encode_qubit(&mut w, p2, &mut t),
            Err(Error::TripleConsumed(3))
        ));
    }

    #[test]
    fn local_unitaries_on_a2_do_not_signal() {
        let mut w = World::new(8);
        for _ in 0..100 {
            let s = random_qubit(w.rng());
            let psi = w.alloc(Owner::Alice, s).unwrap();
            let mut t = prepare_ghz(&mut w, 1).unwrap();
            let before_sign = w.reduced_density(&[t.b]).unwrap();
            assert!(before_sign.max_abs_diff(&DensityMatrix::diagonal(&[0.5, 0.5])) < 1e-12);
            encode_qubit(&mut w, psi, &mut t).unwrap();
            let before = w.reduced_density(&[t.b]).unwrap();
            let r = w.rng();
            let u = gates::euler(
                r.gen::<f64>() * 6.3,
                r.gen::<f64>() * 6.3,
                r.gen::<f64>() * 3.2,
                r.gen::<f64>() * 6.3,
            );
            w.apply_gate(&u, &[t.a2]).unwrap();
            let after = w.reduced_density(&[t.b]).unwrap();
            assert!(after.max_abs_diff(&before) < 1e-9);
            w.discard(t.a2).unwrap();
            w.discard(t.b).unwrap();
        }
    }
}
