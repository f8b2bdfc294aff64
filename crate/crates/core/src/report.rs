//! Machine-readable run reports. Field order is fixed by the struct
//! definitions, and nothing in a report depends on wall-clock time unless
//! a duration is explicitly attached, so a fixed seed gives identical bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adversary::{
    run_attack, trial_seed, wilson_interval, AttackConfig, AttackStats, AttackStrategy, Interval,
};
use crate::error::Result;
use crate::protocol::{gen_account, sign_cheque, verify_cheque, Bank, PayloadType, SchemeParams};
use crate::qowf::BitString;
use crate::qsim::World;

pub const TOOL: &str = "qcheque";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Provenance {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HonestConfig {
    pub params: SchemeParams,
    pub trials: u64,
    pub seed: u64,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HonestStats {
    pub trials: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub acceptance_interval: Interval,
    /// Exact simulation of an honest run accepts with certainty.
    pub predicted_acceptance: f64,
    pub reason_histogram: BTreeMap<String, u64>,
    /// Verifications whose transcript carried exactly `l` Hadamard-outcome
    /// messages.
    pub transcripts_with_l_outcomes: u64,
    pub leftover_qubits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HonestReport {
    pub provenance: Provenance,
    pub config: HonestConfig,
    pub stats: HonestStats,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub duration_ms: Option<u64>,
}

/// Runs `trials` independent Gen → Sign → Verify rounds.
pub fn run_honest(config: &HonestConfig) -> Result<HonestStats> {
    config.params.validate()?;
    if config.trials == 0 {
        return Err(crate::Error::InvalidArgument(
            "trials must be at least 1".into(),
        ));
    }
    let id = BitString::from_bytes(b"alice")?;
    let mut stats = HonestStats {
        trials: config.trials,
        accepted: 0,
        acceptance_rate: 0.0,
        acceptance_interval: Interval {
            low: 0.0,
            high: 0.0,
        },
        predicted_acceptance: 1.0,
        reason_histogram: BTreeMap::new(),
        transcripts_with_l_outcomes: 0,
        leftover_qubits: 0,
    };
    for t in 0..config.trials {
        let mut world = World::from_seed_bytes(trial_seed(config.seed, t));
        let mut bank = Bank::new(config.params)?;
        let (mut book, _) = gen_account(&mut world, &mut bank, &id)?;
        let cheque = sign_cheque(&mut world, &mut book, &config.params, config.amount)?;
        let before = bank.transcript().len();
        let result = verify_cheque(&mut world, &mut bank, &cheque)?;
        stats.accepted += result.accepted as u64;
        *stats
            .reason_histogram
            .entry(result.reason.label().into())
            .or_default() += 1;
        let outcomes = bank.transcript()[before..]
            .iter()
            .filter(|m| m.payload_type == PayloadType::HadamardOutcome)
            .count();
        stats.transcripts_with_l_outcomes += (outcomes == config.params.l) as u64;
        stats.leftover_qubits += world.qubit_count() as u64;
    }
    stats.acceptance_rate = stats.accepted as f64 / config.trials as f64;
    stats.acceptance_interval = wilson_interval(stats.accepted, config.trials);
    Ok(stats)
}

pub fn honest_report(config: &HonestConfig) -> Result<HonestReport> {
    let stats = run_honest(config)?;
    let ok = stats.accepted == stats.trials
        && stats.transcripts_with_l_outcomes == stats.trials
        && stats.leftover_qubits == 0;
    Ok(HonestReport {
        provenance: Provenance::new("run-honest", config.seed),
        config: config.clone(),
        stats,
        verdict: Verdict::from_bool(ok),
        duration_ms: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub provenance: Provenance,
    pub config: AttackConfig,
    pub stats: AttackStats,
    /// PASS when the empirical acceptance agrees with the oracle within
    /// 4σ and, for double-deposit strategies, no second deposit cleared.
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub duration_ms: Option<u64>,
}

pub fn attack_report(config: &AttackConfig) -> Result<AttackReport> {
    let stats = run_attack(config)?;
    let double_deposit = matches!(
        config.strategy,
        AttackStrategy::Replay | AttackStrategy::CloneAndDoubleSpend
    );
    let ok =
        stats.agrees_with_prediction && (!double_deposit || stats.second_deposit_accepted == 0);
    Ok(AttackReport {
        provenance: Provenance::new("attack", config.seed),
        config: *config,
        stats,
        verdict: Verdict::from_bool(ok),
        duration_ms: None,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SchemeParams {
        SchemeParams {
            l: 2,
            n: 2,
            ..SchemeParams::default()
        }
    }

    #[test]
    fn honest_report_passes_and_is_reproducible() {
        let config = HonestConfig {
            params: small(),
            trials: 20,
            seed: 3,
            amount: 100,
        };
        let a = honest_report(&config).unwrap();
        assert!(a.verdict.is_pass());
        assert_eq!(a.stats.reason_histogram.get("ok"), Some(&20));
        assert_eq!(to_json(&a), to_json(&honest_report(&config).unwrap()));
        assert!(!to_json(&a).contains("duration_ms"));
        assert!(to_json(&a).contains(VERSION));
    }

    #[test]
    fn invalid_config_is_refused() {
        let config = HonestConfig {
            params: SchemeParams { l: 0, ..small() },
            trials: 1,
            seed: 0,
            amount: 1,
        };
        assert!(honest_report(&config).is_err());
    }

    #[test]
    fn attack_report_round_trips() {
        let config = AttackConfig::new(AttackStrategy::Replay, small(), 5, 1);
        let r = attack_report(&config).unwrap();
        assert!(r.verdict.is_pass());
        let back: AttackReport = serde_json::from_str(&to_json(&r)).unwrap();
        assert_eq!(back, r);
    }
}
