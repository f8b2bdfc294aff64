use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qcheque::adversary::{AttackConfig, AttackStrategy, LocalUnitary};
use qcheque::comparator::{AcceptancePolicy, PolicyMode};
use qcheque::protocol::SchemeParams;
use qcheque::qowf::BitString;
use qcheque::report::{self, HonestConfig, Provenance, Verdict};
use qcheque::session::Session;
use qcheque::Error;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "qcheque", version, about = "Quantum cheque scheme simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Honest Gen → Sign → Verify rounds.
    RunHonest(Common),
    /// Counterfeiting campaign against the analytic acceptance oracle.
    Attack(AttackArgs),
    /// Open an account, sign one cheque and save the session.
    Snapshot(Common),
    /// Load a session, check it re-serializes identically and deposit its cheques.
    Restore(RestoreArgs),
    /// Quick end-to-end consistency checks.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Threshold,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitaryArg {
    Identity,
    X,
    Y,
    Z,
    H,
}

#[derive(Args, Clone)]
struct Common {
    /// GHZ triples per cheque.
    #[arg(long, default_value_t = 8)]
    l: usize,
    /// Qubits in the signature state.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    key_bits: usize,
    #[arg(long, default_value_t = 128)]
    serial_bits: usize,
    #[arg(long, default_value_t = 0.91)]
    kappa1: f64,
    #[arg(long, default_value_t = 0.91)]
    kappa2: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Strict)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Amount written on signed cheques.
    #[arg(long, default_value_t = 100)]
    amount: u64,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot file.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Record the wall-clock duration in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    strategy: String,
    /// Amount written by the amount-changing strategies.
    #[arg(long, default_value_t = 1000)]
    forged_amount: u64,
    /// Unitary applied by the local-unitary strategy.
    #[arg(long, value_enum, default_value_t = UnitaryArg::X)]
    unitary: UnitaryArg,
}

#[derive(Args)]
struct RestoreArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::SnapshotParse { .. }
            | Error::SnapshotVersion { .. }
            | Error::SnapshotCorrupt(_) => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl Common {
    fn params(&self) -> SchemeParams {
        let policy = AcceptancePolicy {
            mode: match self.policy {
                PolicyArg::Strict => PolicyMode::Strict,
                PolicyArg::Threshold => PolicyMode::Threshold,
            },
            kappa1: self.kappa1,
            kappa2: self.kappa2,
        };
        SchemeParams {
            l: self.l,
            n: self.n,
            key_bits: self.key_bits,
            serial_bits: self.serial_bits,
            policy,
            ..SchemeParams::default()
        }
    }
}

fn emit<T: Serialize>(report: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = report::to_json(report);
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

fn elapsed_ms(start: Instant, timing: bool) -> Option<u64> {
    let ms = start.elapsed().as_millis() as u64;
    if timing {
        Some(ms)
    } else {
        eprintln!("elapsed: {ms} ms");
        None
    }
}

fn run_honest(args: &Common) -> Result<Verdict, Failure> {
    let start = Instant::now();
    let config = HonestConfig {
        params: args.params(),
        trials: args.trials,
        seed: args.seed,
        amount: args.amount,
    };
    let mut rep = report::honest_report(&config)?;
    rep.duration_ms = elapsed_ms(start, args.timing);
    emit(&rep, args.out.as_deref())?;
    Ok(rep.verdict)
}

fn attack(args: &AttackArgs) -> Result<Verdict, Failure> {
    let start = Instant::now();
    let strategy: AttackStrategy = args.strategy.parse()?;
    let mut config = AttackConfig::new(
        strategy,
        args.common.params(),
        args.common.trials,
        args.common.seed,
    );
    config.amount = args.common.amount;
    config.forged_amount = args.forged_amount;
    config.unitary = match args.unitary {
        UnitaryArg::Identity => LocalUnitary::Identity,
        UnitaryArg::X => LocalUnitary::PauliX,
        UnitaryArg::Y => LocalUnitary::PauliY,
        UnitaryArg::Z => LocalUnitary::PauliZ,
        UnitaryArg::H => LocalUnitary::Hadamard,
    };
    let mut rep = report::attack_report(&config)?;
    rep.duration_ms = elapsed_ms(start, args.common.timing);
    emit(&rep, args.common.out.as_deref())?;
    Ok(rep.verdict)
}

#[derive(Serialize)]
struct SnapshotInfo {
    path: String,
    bytes: u64,
    sha256: String,
    live_qubits: u64,
    records: u64,
    cheques: u64,
}

#[derive(Serialize)]
struct SnapshotReport {
    provenance: Provenance,
    params: SchemeParams,
    amount: u64,
    snapshot: SnapshotInfo,
    verdict: Verdict,
}

fn snapshot_info(path: &Path, text: &str, session: &Session) -> SnapshotInfo {
    SnapshotInfo {
        path: path.display().to_string(),
        bytes: text.len() as u64,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
        live_qubits: session.world.qubit_count() as u64,
        records: session.bank.records().count() as u64,
        cheques: session.cheques.len() as u64,
    }
}

fn snapshot(args: &Common) -> Result<Verdict, Failure> {
    let path = args
        .snapshot
        .as_deref()
        .ok_or_else(|| Failure::Usage("snapshot needs --snapshot PATH".into()))?;
    let mut session = Session::new(args.params(), args.seed)?;
    let book = session.open_account(&BitString::from_bytes(b"alice")?)?;
    session.sign(book, args.amount)?;
    let text = session.to_snapshot_string();
    std::fs::write(path, &text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let rep = SnapshotReport {
        provenance: Provenance::new("snapshot", args.seed),
        params: session.params(),
        amount: args.amount,
        snapshot: snapshot_info(path, &text, &session),
        verdict: Verdict::Pass,
    };
    emit(&rep, args.out.as_deref())?;
    Ok(rep.verdict)
}

#[derive(Serialize)]
struct DepositEntry {
    cheque: usize,
    accepted: bool,
    reason: String,
}

#[derive(Serialize)]
struct RestoreReport {
    provenance: Provenance,
    params: SchemeParams,
    snapshot: SnapshotInfo,
    round_trip_identical: bool,
    deposits: Vec<DepositEntry>,
    verdict: Verdict,
}

fn restore(args: &RestoreArgs) -> Result<Verdict, Failure> {
    let path = args.snapshot.as_path();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut session = Session::from_snapshot_str(&text)?;
    let round_trip_identical = session.to_snapshot_string() == text;
    let info = snapshot_info(path, &text, &session);
    let mut deposits = Vec::new();
    for i in 0..session.cheques.len() {
        let r = session.deposit(i)?;
        deposits.push(DepositEntry {
            cheque: i,
            accepted: r.accepted,
            reason: r.reason.label().into(),
        });
    }
    let ok = round_trip_identical && session.world.qubit_count() == 0;
    let rep = RestoreReport {
        provenance: Provenance::new("restore", 0),
        params: session.params(),
        snapshot: info,
        round_trip_identical,
        deposits,
        verdict: Verdict::from_bool(ok),
    };
    emit(&rep, args.out.as_deref())?;
    Ok(rep.verdict)
}

#[derive(Serialize)]
struct Check {
    name: String,
    verdict: Verdict,
    detail: String,
}

#[derive(Serialize)]
struct SelftestReport {
    provenance: Provenance,
    checks: Vec<Check>,
    verdict: Verdict,
}

fn selftest(args: &SelftestArgs) -> Result<Verdict, Failure> {
    let params = SchemeParams {
        l: 4,
        n: 4,
        ..SchemeParams::default()
    };
    let mut checks = Vec::new();

    let honest = report::honest_report(&HonestConfig {
        params,
        trials: 50,
        seed: args.seed,
        amount: 100,
    })?;
    checks.push(Check {
        name: "honest-completeness".into(),
        verdict: honest.verdict,
        detail: format!("{}/{} accepted", honest.stats.accepted, honest.stats.trials),
    });

    for (strategy, trials) in [
        (AttackStrategy::Replay, 50),
        (AttackStrategy::CloneAndDoubleSpend, 300),
        (AttackStrategy::TamperAmount, 300),
        (AttackStrategy::LocalUnitaryTamper, 300),
    ] {
        let rep = report::attack_report(&AttackConfig::new(strategy, params, trials, args.seed))?;
        checks.push(Check {
            name: format!("attack-{strategy}"),
            verdict: rep.verdict,
            detail: format!(
                "accepted {}/{} (predicted {:.4}), counterfeits {}",
                rep.stats.accepted,
                rep.stats.trials,
                rep.stats.predicted_acceptance,
                rep.stats.successes
            ),
        });
    }

    let mut session = Session::new(params, args.seed)?;
    let book = session.open_account(&BitString::from_bytes(b"alice")?)?;
    session.sign(book, 7)?;
    let text = session.to_snapshot_string();
    let identical = Session::from_snapshot_str(&text)?.to_snapshot_string() == text;
    checks.push(Check {
        name: "snapshot-round-trip".into(),
        verdict: Verdict::from_bool(identical),
        detail: format!("{} bytes", text.len()),
    });

    let verdict = Verdict::from_bool(checks.iter().all(|c| c.verdict.is_pass()));
    let rep = SelftestReport {
        provenance: Provenance::new("selftest", args.seed),
        checks,
        verdict,
    };
    emit(&rep, args.out.as_deref())?;
    Ok(rep.verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::RunHonest(a) => run_honest(a),
        Command::Attack(a) => attack(a),
        Command::Snapshot(a) => snapshot(a),
        Command::Restore(a) => restore(a),
        Command::Selftest(a) => selftest(a),
    };
    match outcome {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
