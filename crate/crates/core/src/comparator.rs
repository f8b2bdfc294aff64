//! Swap tests: a |+⟩ ancilla controls one Fredkin gate per aligned qubit
//! pair, is rotated back with a Hadamard and measured. Outcome 0 is a pass.
//!
//! For pure registers the pass probability is `(1 + |⟨a|b⟩|²)/2`; for
//! registers entangled with the outside it is `(1 + Tr ρ_a ρ_b)/2`. The
//! registers keep whatever post-measurement state the test leaves them in.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{c, gates, Owner, QubitHandle, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub passed: bool,
    pub ancilla_bit: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyMode {
    /// Every single-shot test must pass.
    Strict,
    /// The fraction of passing g-state tests must reach `kappa2`, and the
    /// signature-state test must pass.
    Threshold,
}

/// How a verifier turns single-shot swap-test results into a verdict.
///
/// A single copy only yields one pass/fail bit, so `kappa1` (which gates
/// the lone signature-state test) reduces to "must pass" in both modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptancePolicy {
    pub mode: PolicyMode,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for AcceptancePolicy {
    fn default() -> Self {
        AcceptancePolicy {
            mode: PolicyMode::Strict,
            kappa1: 0.91,
            kappa2: 0.91,
        }
    }
}

impl AcceptancePolicy {
    pub fn strict() -> Self {
        Self::default()
    }

    pub fn threshold(kappa1: f64, kappa2: f64) -> Self {
        AcceptancePolicy {
            mode: PolicyMode::Threshold,
            kappa1,
            kappa2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(k > 0.5 && k <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} = {k} is outside (0.5, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Smallest number of passing g-state tests (out of `l`) that is accepted.
    pub fn min_g_passes(&self, l: usize) -> usize {
        match self.mode {
            PolicyMode::Strict => l,
            // tolerate float noise in κ₂·l
            PolicyMode::Threshold => ((self.kappa2 * l as f64) - 1e-9).ceil().max(0.0) as usize,
        }
    }

    pub fn g_verdict(&self, passes: &[bool]) -> bool {
        passes.iter().filter(|&&p| p).count() >= self.min_g_passes(passes.len())
    }

    pub fn accepts(&self, g_passes: &[bool], psi_pass: bool) -> bool {
        psi_pass && self.g_verdict(g_passes)
    }

    /// Acceptance probability given independent per-test pass probabilities.
    pub fn acceptance_probability(&self, g_probs: &[f64], psi_prob: f64) -> f64 {
        // Poisson-binomial distribution of the number of g passes.
        let mut dist = vec![1.0];
        for &p in g_probs {
            let mut next = vec![0.0; dist.len() + 1];
            for (k, &q) in dist.iter().enumerate() {
                next[k] += q * (1.0 - p);
                next[k + 1] += q * p;
            }
            dist = next;
        }
        let need = self.min_g_passes(g_probs.len());
        psi_prob * dist[need..].iter().sum::<f64>()
    }
}

/// Pass probability of a swap test between a state and a reference given
/// `Tr(ρσ)` (or `|⟨a|b⟩|²` for pure inputs).
pub fn pass_probability(trace_overlap: f64) -> f64 {
    (1.0 + trace_overlap) / 2.0
}

fn check_disjoint(regs: &[&[QubitHandle]]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for reg in regs {
        for &q in reg.iter() {
            if !seen.insert(q) {
                return Err(Error::OverlappingRegisters(q));
            }
        }
    }
    Ok(())
}

pub fn swap_test(
    world: &mut World,
    reg_a: &[QubitHandle],
    reg_b: &[QubitHandle],
) -> Result<SwapOutcome> {
    if reg_a.len() != reg_b.len() || reg_a.is_empty() {
        return Err(Error::LengthMismatch(reg_a.len(), reg_b.len()));
    }
    check_disjoint(&[reg_a, reg_b])?;
    for &q in reg_a.iter().chain(reg_b) {
        world.owner(q)?;
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let ancilla = world.alloc(Owner::Bank, [c(h, 0.0), c(h, 0.0)])?;
    let run = |world: &mut World| -> Result<()> {
        for (&a, &b) in reg_a.iter().zip(reg_b) {
            world.apply_cswap(ancilla, a, b)?;
        }
        world.apply_gate(&gates::hadamard(), &[ancilla])
    };
    if let Err(e) = run(world) {
        // leave no stray ancilla behind
        let _ = world.discard(ancilla);
        return Err(e);
    }
    let bit = world.discard(ancilla)?;
    Ok(SwapOutcome {
        passed: bit == 0,
        ancilla_bit: bit,
    })
}

/// Runs one swap test per pair, in order, and applies `policy` to the
/// results as a set of g-state tests.
pub fn repeated_swap_test(
    world: &mut World,
    pairs: &[(Vec<QubitHandle>, Vec<QubitHandle>)],
    policy: &AcceptancePolicy,
) -> Result<(bool, Vec<SwapOutcome>)> {
    let regs: Vec<&[QubitHandle]> = pairs
        .iter()
        .flat_map(|(a, b)| [a.as_slice(), b.as_slice()])
        .collect();
    check_disjoint(&regs)?;
    let outcomes = pairs
        .iter()
        .map(|(a, b)| swap_test(world, a, b))
        .collect::<Result<Vec<_>>>()?;
    let passes: Vec<bool> = outcomes.iter().map(|o| o.passed).collect();
    Ok((policy.g_verdict(&passes), outcomes))
}
