//! C ABI for the `qcheque` simulator.
//!
//! Sessions are opaque handles. Every fallible function returns a
//! [`QcStatus`]; on failure the message is available from
//! [`qc_last_error`] on the same thread until the next call. Strings
//! returned through out-pointers are owned by the caller and must be
//! released with [`qc_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qcheque::adversary::{AttackConfig, AttackStrategy};
use qcheque::comparator::{AcceptancePolicy, PolicyMode};
use qcheque::protocol::SchemeParams;
use qcheque::qowf::BitString;
use qcheque::report::{attack_report, honest_report, to_json, HonestConfig};
use qcheque::session::Session;
use qcheque::Error;

/// Bumped whenever a signature or struct layout in this header changes.
pub const QC_ABI_VERSION: u32 = 1;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidParams = 3,
    /// A protocol rule was violated (reused book or key, custody, ...).
    Protocol = 4,
    /// The simulator refused the operation (capacity, unitary, ...).
    Simulation = 5,
    Snapshot = 6,
    Io = 7,
    Utf8 = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QcPolicy {
    Strict = 0,
    Threshold = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QcParams {
    /// GHZ triples per cheque.
    pub l: u32,
    /// Qubits in the f-register.
    pub n: u32,
    pub key_bits: u32,
    pub serial_bits: u32,
    /// Lamport security parameter in bits.
    pub sig_security: u32,
    pub policy: QcPolicy,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl From<SchemeParams> for QcParams {
    fn from(p: SchemeParams) -> Self {
        QcParams {
            l: p.l as u32,
            n: p.n as u32,
            key_bits: p.key_bits as u32,
            serial_bits: p.serial_bits as u32,
            sig_security: p.sig_security,
            policy: match p.policy.mode {
                PolicyMode::Strict => QcPolicy::Strict,
                PolicyMode::Threshold => QcPolicy::Threshold,
            },
            kappa1: p.policy.kappa1,
            kappa2: p.policy.kappa2,
        }
    }
}

impl From<QcParams> for SchemeParams {
    fn from(p: QcParams) -> Self {
        let policy = match p.policy {
            QcPolicy::Strict => AcceptancePolicy {
                kappa1: p.kappa1,
                kappa2: p.kappa2,
                ..AcceptancePolicy::strict()
            },
            QcPolicy::Threshold => AcceptancePolicy::threshold(p.kappa1, p.kappa2),
        };
        SchemeParams {
            l: p.l as usize,
            n: p.n as usize,
            key_bits: p.key_bits as usize,
            serial_bits: p.serial_bits as usize,
            sig_security: p.sig_security,
            policy,
        }
    }
}

/// Opaque simulation session.
pub struct QcSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(QcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParams(_) => QcStatus::InvalidParams,
            Error::InvalidArgument(_)
            | Error::UnknownStrategy(_)
            | Error::IndexOutOfRange { .. }
            | Error::LengthMismatch(..)
            | Error::Encoding(_) => QcStatus::InvalidArgument,
            Error::TripleConsumed(_) | Error::KeyReused | Error::BookUsed | Error::Custody(..) => {
                QcStatus::Protocol
            }
            Error::SnapshotParse { .. }
            | Error::SnapshotVersion { .. }
            | Error::SnapshotCorrupt(_) => QcStatus::Snapshot,
            Error::Io(_) => QcStatus::Io,
            _ => QcStatus::Simulation,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(QcStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QcStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(QcStatus::Utf8, format!("`{what}`: {e}")))
}

unsafe fn session_mut<'a>(s: *mut QcSession) -> Result<&'a mut Session, Failure> {
    s.as_mut()
        .map(|s| &mut s.inner)
        .ok_or_else(|| null("session"))
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    if !out.is_null() {
        out.write(value);
    }
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(text).map_err(|e| Failure(QcStatus::Utf8, e.to_string()))?;
    out.write(c.into_raw());
    Ok(())
}

#[no_mangle]
pub extern "C" fn qc_abi_version() -> u32 {
    QC_ABI_VERSION
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn qc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn qc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qc_params_default(out: *mut QcParams) -> QcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(SchemeParams::default().into());
        Ok(())
    })
}

/// Creates an empty session. Free with [`qc_session_free`].
#[no_mangle]
pub unsafe extern "C" fn qc_session_new(
    params: *const QcParams,
    seed: u64,
    out: *mut *mut QcSession,
) -> QcStatus {
    guard(|| {
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Session::new((*params).into(), seed)?;
        out.write(Box::into_raw(Box::new(QcSession { inner })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qc_session_free(session: *mut QcSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qc_session_params(
    session: *const QcSession,
    out: *mut QcParams,
) -> QcStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(s.inner.params().into());
        Ok(())
    })
}

/// Opens an account for the `id_len`-byte identity `id`; writes the index
/// of the new cheque book to `out_book`.
#[no_mangle]
pub unsafe extern "C" fn qc_session_open_account(
    session: *mut QcSession,
    id: *const u8,
    id_len: usize,
    out_book: *mut usize,
) -> QcStatus {
    guard(|| {
        let s = session_mut(session)?;
        if id.is_null() {
            return Err(null("id"));
        }
        let id = BitString::from_bytes(std::slice::from_raw_parts(id, id_len))?;
        let book = s.open_account(&id)?;
        write_out(out_book, book);
        Ok(())
    })
}

/// Signs the single cheque of `book`; writes the cheque index to `out_cheque`.
#[no_mangle]
pub unsafe extern "C" fn qc_session_sign(
    session: *mut QcSession,
    book: usize,
    amount: u64,
    out_cheque: *mut usize,
) -> QcStatus {
    guard(|| {
        let s = session_mut(session)?;
        let cheque = s.sign(book, amount)?;
        write_out(out_cheque, cheque);
        Ok(())
    })
}

/// Deposits `cheque` at a branch. `out_accepted` receives 1 or 0;
/// `out_result_json`, if non-null, receives the full verification result.
#[no_mangle]
pub unsafe extern "C" fn qc_session_deposit(
    session: *mut QcSession,
    cheque: usize,
    out_accepted: *mut i32,
    out_result_json: *mut *mut c_char,
) -> QcStatus {
    guard(|| {
        let s = session_mut(session)?;
        let result = s.deposit(cheque)?;
        write_out(out_accepted, result.accepted as i32);
        if !out_result_json.is_null() {
            let json = serde_json::to_string(&result)
                .map_err(|e| Failure(QcStatus::Simulation, e.to_string()))?;
            write_string(out_result_json, json)?;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qc_session_live_qubits(
    session: *const QcSession,
    out: *mut usize,
) -> QcStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        write_out(out, s.inner.world.qubit_count());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qc_session_snapshot(
    session: *const QcSession,
    out: *mut *mut c_char,
) -> QcStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        write_string(out, s.inner.to_snapshot_string())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qc_session_from_snapshot(
    text: *const c_char,
    out: *mut *mut QcSession,
) -> QcStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Session::from_snapshot_str(text)?;
        out.write(Box::into_raw(Box::new(QcSession { inner })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qc_session_save(
    session: *const QcSession,
    path: *const c_char,
) -> QcStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        s.inner.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qc_session_load(
    path: *const c_char,
    out: *mut *mut QcSession,
) -> QcStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Session::load(Path::new(path))?;
        out.write(Box::into_raw(Box::new(QcSession { inner })));
        Ok(())
    })
}

/// Runs `trials` honest rounds and writes the JSON report to `out_json`.
#[no_mangle]
pub unsafe extern "C" fn qc_run_honest(
    params: *const QcParams,
    trials: u64,
    seed: u64,
    amount: u64,
    out_json: *mut *mut c_char,
) -> QcStatus {
    guard(|| {
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        let report = honest_report(&HonestConfig {
            params: (*params).into(),
            trials,
            seed,
            amount,
        })?;
        write_string(out_json, to_json(&report))
    })
}

/// Runs an attack campaign. `strategy` is one of `clone`, `replay`,
/// `tamper-amount`, `forge-key-guess`, `local-unitary`.
#[no_mangle]
pub unsafe extern "C" fn qc_run_attack(
    strategy: *const c_char,
    params: *const QcParams,
    trials: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> QcStatus {
    guard(|| {
        let strategy: AttackStrategy = str_arg(strategy, "strategy")?.parse()?;
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        let report = attack_report(&AttackConfig::new(strategy, (*params).into(), trials, seed))?;
        write_string(out_json, to_json(&report))
    })
}
