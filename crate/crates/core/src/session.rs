//! A self-contained simulation session (world, Bank database, cheque books
//! and issued cheques) and its textual snapshot format.
//!
//! Snapshots are pretty-printed JSON with a `format` tag and a `version`.
//! Floats round-trip exactly, so save → load → save is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    gen_account, sign_cheque, verify_cheque, Bank, ChequeBook, QuantumCheque, SchemeParams,
    VerifyResult,
};
use crate::qowf::BitString;
use crate::qsim::{World, WorldSnapshot};

pub const SNAPSHOT_FORMAT: &str = "qcheque-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Session {
    pub world: World,
    pub bank: Bank,
    pub books: Vec<ChequeBook>,
    pub cheques: Vec<QuantumCheque>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    format: String,
    version: u32,
    world: WorldSnapshot,
    bank: Bank,
    books: Vec<ChequeBook>,
    cheques: Vec<QuantumCheque>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

impl Session {
    pub fn new(params: SchemeParams, seed: u64) -> Result<Self> {
        Ok(Self::with_bank(Bank::new(params)?, seed))
    }

    pub fn new_experimental(params: SchemeParams, seed: u64) -> Result<Self> {
        Ok(Self::with_bank(Bank::new_experimental(params)?, seed))
    }

    fn with_bank(bank: Bank, seed: u64) -> Self {
        Session {
            world: World::new(seed),
            bank,
            books: Vec::new(),
            cheques: Vec::new(),
        }
    }

    pub fn params(&self) -> SchemeParams {
        *self.bank.params()
    }

    /// Opens an account and returns the index of its cheque book.
    pub fn open_account(&mut self, id: &BitString) -> Result<usize> {
        let (book, _) = gen_account(&mut self.world, &mut self.bank, id)?;
        self.books.push(book);
        Ok(self.books.len() - 1)
    }

    /// Signs the book's cheque and returns the cheque's index.
    pub fn sign(&mut self, book: usize, amount: u64) -> Result<usize> {
        let params = self.params();
        let max = self.books.len();
        let book = self
            .books
            .get_mut(book)
            .ok_or(Error::IndexOutOfRange { index: book, max })?;
        let cheque = sign_cheque(&mut self.world, book, &params, amount)?;
        self.cheques.push(cheque);
        Ok(self.cheques.len() - 1)
    }

    pub fn deposit(&mut self, cheque: usize) -> Result<VerifyResult> {
        let max = self.cheques.len();
        let cheque = self
            .cheques
            .get(cheque)
            .ok_or(Error::IndexOutOfRange { index: cheque, max })?;
        verify_cheque(&mut self.world, &mut self.bank, cheque)
    }

    pub fn to_snapshot_string(&self) -> String {
        let doc = SnapshotDoc {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            world: self.world.to_snapshot(),
            bank: self.bank.clone(),
            books: self.books.clone(),
            cheques: self.cheques.clone(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("snapshot serializes");
        out.push('\n');
        out
    }

    pub fn from_snapshot_str(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        if header.format.as_deref() != Some(SNAPSHOT_FORMAT) {
            return Err(Error::SnapshotCorrupt(format!(
                "missing or wrong `format` tag (expected `{SNAPSHOT_FORMAT}`)"
            )));
        }
        match header.version {
            Some(SNAPSHOT_VERSION) => {}
            Some(found) => {
                return Err(Error::SnapshotVersion {
                    found,
                    expected: SNAPSHOT_VERSION,
                })
            }
            None => return Err(Error::SnapshotCorrupt("missing `version`".into())),
        }
        let doc: SnapshotDoc = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        doc.bank
            .params()
            .validate_experimental()
            .map_err(|e| Error::SnapshotCorrupt(e.to_string()))?;
        Ok(Session {
            world: World::from_snapshot(&doc.world)?,
            bank: doc.bank,
            books: doc.books,
            cheques: doc.cheques,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_snapshot_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::SnapshotParse {
            offset: e.valid_up_to(),
            line: 0,
            column: 0,
            message: "file is not valid UTF-8".into(),
        })?;
        Self::from_snapshot_str(text)
    }
}

fn parse_error(text: &str, e: &serde_json::Error) -> Error {
    let (line, column) = (e.line(), e.column());
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    Error::SnapshotParse {
        offset: (line_start + column.saturating_sub(1)).min(text.len()),
        line,
        column,
        message: e.to_string(),
    }
}
