//! The parties' shared store of encrypted vectors.
//!
//! Every call names its caller's [`Role`]; the decider is refused on every
//! path. Writes happen in exclusive per-vector sessions that work on a copy
//! and commit atomically, bumping the version once. Committed cell edits are
//! appended to a totally ordered log together with their operands, so the
//! final contents of any vector can be recomputed from its initial snapshot.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use num_bigint::BigUint;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::he::{Ciphertext, HeError, PublicKey};
use crate::roles::{PartyId, Role};

pub const DEFAULT_LOCK_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepoError {
    #[error("{0} has no access to the repository")]
    AccessDenied(Role),
    #[error("vector `{0}` already exists")]
    DuplicateLabel(String),
    #[error("no vector labelled `{0}`")]
    UnknownLabel(String),
    #[error("vector `{label}` must have {expected} cells, got {got}")]
    LengthMismatch {
        label: String,
        expected: usize,
        got: usize,
    },
    #[error("cell {index} out of range for `{label}`")]
    CellOutOfRange { label: String, index: usize },
    #[error("timed out waiting for the write lock on `{0}`")]
    LockTimeout(String),
    #[error("{0} already holds a write lock")]
    NestedLock(PartyId),
    #[error("homomorphic operation failed: {0}")]
    He(#[from] HeError),
    #[error("mutation aborted: {0}")]
    Aborted(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Init,
    ReplaceCell,
    MultiplyCell,
    ScaleCell,
    Permute,
    Read,
    Finalize,
    Publish,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Init => "init",
            Action::ReplaceCell => "replace_cell",
            Action::MultiplyCell => "multiply_cell",
            Action::ScaleCell => "scale_cell",
            Action::Permute => "permute",
            Action::Read => "read",
            Action::Finalize => "finalize",
            Action::Publish => "publish",
        })
    }
}

/// Value consumed by a logged cell edit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Ciphertext(Ciphertext),
    Scalar(#[serde(with = "crate::he::biguint_hex")] BigUint),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Position in the repository-wide total order.
    pub seq: u64,
    pub actor: PartyId,
    pub label: String,
    pub action: Action,
    pub cell: Option<usize>,
    /// Vector version after the entry took effect.
    pub version: u64,
    /// Write session that produced the entry; `None` outside sessions.
    pub session: Option<u64>,
    pub operand: Option<Operand>,
}

impl LogEntry {
    /// `actor,label,action,index,version`; index is empty for whole-vector actions.
    pub fn export_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.actor,
            self.label,
            self.action,
            self.cell.map(|c| c.to_string()).unwrap_or_default(),
            self.version
        )
    }
}

#[derive(Debug)]
struct VectorState {
    initial: Vec<Ciphertext>,
    cells: Vec<Ciphertext>,
    version: u64,
}

#[derive(Debug)]
struct Slot {
    writer: Mutex<()>,
    state: RwLock<VectorState>,
}

/// An in-progress exclusive write on one vector.
pub struct WriteSession<'a> {
    label: &'a str,
    cells: Vec<Ciphertext>,
    edits: Vec<(Action, usize, Operand)>,
}

impl WriteSession<'_> {
    pub fn label(&self) -> &str {
        self.label
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, index: usize) -> Result<&Ciphertext, RepoError> {
        self.cells.get(index).ok_or_else(|| self.out_of_range(index))
    }

    fn out_of_range(&self, index: usize) -> RepoError {
        RepoError::CellOutOfRange {
            label: self.label.to_string(),
            index,
        }
    }

    fn check(&self, index: usize) -> Result<(), RepoError> {
        if index < self.cells.len() {
            Ok(())
        } else {
            Err(self.out_of_range(index))
        }
    }

    pub fn replace(&mut self, index: usize, c: Ciphertext) -> Result<(), RepoError> {
        self.check(index)?;
        self.cells[index] = c.clone();
        self.edits
            .push((Action::ReplaceCell, index, Operand::Ciphertext(c)));
        Ok(())
    }

    pub fn multiply(&mut self, pk: &PublicKey, index: usize, c: Ciphertext) -> Result<(), RepoError> {
        self.check(index)?;
        self.cells[index] = pk.add(&self.cells[index], &c)?;
        self.edits
            .push((Action::MultiplyCell, index, Operand::Ciphertext(c)));
        Ok(())
    }

    pub fn scale(&mut self, pk: &PublicKey, index: usize, a: &BigUint) -> Result<(), RepoError> {
        self.check(index)?;
        self.cells[index] = pk.scalar_pow(&self.cells[index], a)?;
        self.edits
            .push((Action::ScaleCell, index, Operand::Scalar(a.clone())));
        Ok(())
    }
}

/// Shared, role-checked vector store with an activity log.
pub struct Repository {
    u: usize,
    timeout: Duration,
    vectors: RwLock<HashMap<String, Arc<Slot>>>,
    log: Mutex<Vec<LogEntry>>,
    bulletin: RwLock<BTreeMap<String, Vec<BigUint>>>,
    holders: Mutex<HashSet<PartyId>>,
    sessions: Mutex<u64>,
}

impl fmt::Debug for Repository {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Repository")
            .field("u", &self.u)
            .field("vectors", &self.vectors.read().len())
            .field("log_len", &self.log.lock().len())
            .finish()
    }
}

fn party_of(caller: Role) -> Result<PartyId, RepoError> {
    match caller {
        Role::Party(p) => Ok(p),
        other => Err(RepoError::AccessDenied(other)),
    }
}

impl Repository {
    pub fn new(u: usize) -> Self {
        Repository::with_timeout(u, DEFAULT_LOCK_TIMEOUT)
    }

    pub fn with_timeout(u: usize, timeout: Duration) -> Self {
        Repository {
            u,
            timeout,
            vectors: RwLock::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            bulletin: RwLock::new(BTreeMap::new()),
            holders: Mutex::new(HashSet::new()),
            sessions: Mutex::new(0),
        }
    }

    /// Length required of every non-scalar vector.
    pub fn vector_len(&self) -> usize {
        self.u
    }

    fn slot(&self, label: &str) -> Result<Arc<Slot>, RepoError> {
        self.vectors
            .read()
            .get(label)
            .cloned()
            .ok_or_else(|| RepoError::UnknownLabel(label.to_string()))
    }

    fn insert(&self, actor: PartyId, label: &str, cells: Vec<Ciphertext>) -> Result<(), RepoError> {
        let mut vectors = self.vectors.write();
        if vectors.contains_key(label) {
            return Err(RepoError::DuplicateLabel(label.to_string()));
        }
        let mut log = self.log.lock();
        vectors.insert(
            label.to_string(),
            Arc::new(Slot {
                writer: Mutex::new(()),
                state: RwLock::new(VectorState {
                    initial: cells.clone(),
                    cells,
                    version: 0,
                }),
            }),
        );
        let seq = log.len() as u64;
        log.push(LogEntry {
            seq,
            actor,
            label: label.to_string(),
            action: Action::Init,
            cell: None,
            version: 0,
            session: None,
            operand: None,
        });
        Ok(())
    }

    /// Stores a new length-`u` vector at version 0.
    pub fn create_vector(
        &self,
        caller: Role,
        label: &str,
        cells: Vec<Ciphertext>,
    ) -> Result<(), RepoError> {
        let actor = party_of(caller)?;
        if cells.len() != self.u {
            return Err(RepoError::LengthMismatch {
                label: label.to_string(),
                expected: self.u,
                got: cells.len(),
            });
        }
        self.insert(actor, label, cells)
    }

    /// Stores a single-cell vector (the emptiness shortcut's scalar).
    pub fn create_scalar(&self, caller: Role, label: &str, cell: Ciphertext) -> Result<(), RepoError> {
        let actor = party_of(caller)?;
        self.insert(actor, label, vec![cell])
    }

    pub fn contains(&self, caller: Role, label: &str) -> Result<bool, RepoError> {
        party_of(caller)?;
        Ok(self.vectors.read().contains_key(label))
    }

    /// Runs `mutation` in an exclusive session on `label`.
    ///
    /// The mutation sees a private copy; if it fails nothing is committed
    /// or logged. Returns the new version.
    pub fn with_write_lock<F>(&self, caller: Role, label: &str, mutation: F) -> Result<u64, RepoError>
    where
        F: FnOnce(&mut WriteSession<'_>) -> Result<(), RepoError>,
    {
        let party = party_of(caller)?;
        let slot = self.slot(label)?;
        if !self.holders.lock().insert(party) {
            return Err(RepoError::NestedLock(party));
        }
        let result = (|| {
            let _guard = slot
                .writer
                .try_lock_for(self.timeout)
                .ok_or_else(|| RepoError::LockTimeout(label.to_string()))?;
            let mut session = WriteSession {
                label,
                cells: slot.state.read().cells.clone(),
                edits: Vec::new(),
            };
            mutation(&mut session)?;

            let session_id = {
                let mut s = self.sessions.lock();
                *s += 1;
                *s
            };
            let mut log = self.log.lock();
            let mut state = slot.state.write();
            state.version += 1;
            state.cells = session.cells;
            for (action, cell, operand) in session.edits {
                let seq = log.len() as u64;
                log.push(LogEntry {
                    seq,
                    actor: party,
                    label: label.to_string(),
                    action,
                    cell: Some(cell),
                    version: state.version,
                    session: Some(session_id),
                    operand: Some(operand),
                });
            }
            Ok(state.version)
        })();
        self.holders.lock().remove(&party);
        result
    }

    fn log_access(&self, actor: PartyId, label: &str, action: Action, version: u64) {
        let mut log = self.log.lock();
        let seq = log.len() as u64;
        log.push(LogEntry {
            seq,
            actor,
            label: label.to_string(),
            action,
            cell: None,
            version,
            session: None,
            operand: None,
        });
    }

    /// Latest committed cells.
    pub fn read(&self, caller: Role, label: &str) -> Result<Vec<Ciphertext>, RepoError> {
        let actor = party_of(caller)?;
        let slot = self.slot(label)?;
        let state = slot.state.read();
        self.log_access(actor, label, Action::Read, state.version);
        Ok(state.cells.clone())
    }

    pub fn version(&self, caller: Role, label: &str) -> Result<u64, RepoError> {
        party_of(caller)?;
        Ok(self.slot(label)?.state.read().version)
    }

    /// Reads a vector for export to the decider. Logged as `finalize`.
    pub fn finalize(&self, caller: Role, label: &str) -> Result<Vec<Ciphertext>, RepoError> {
        let actor = party_of(caller)?;
        let slot = self.slot(label)?;
        let state = slot.state.read();
        self.log_access(actor, label, Action::Finalize, state.version);
        Ok(state.cells.clone())
    }

    /// Records that `caller` permuted an exported copy of `label`. The
    /// permutation itself is not logged.
    pub fn note_permutation(&self, caller: Role, label: &str) -> Result<(), RepoError> {
        let actor = party_of(caller)?;
        let version = self.slot(label)?.state.read().version;
        self.log_access(actor, label, Action::Permute, version);
        Ok(())
    }

    /// Posts public scalars under `label` on the bulletin.
    pub fn publish(&self, caller: Role, label: &str, values: Vec<BigUint>) -> Result<(), RepoError> {
        let actor = party_of(caller)?;
        let mut bulletin = self.bulletin.write();
        if bulletin.contains_key(label) {
            return Err(RepoError::DuplicateLabel(label.to_string()));
        }
        bulletin.insert(label.to_string(), values);
        self.log_access(actor, label, Action::Publish, 0);
        Ok(())
    }

    pub fn bulletin(&self, caller: Role, label: &str) -> Result<Vec<BigUint>, RepoError> {
        party_of(caller)?;
        self.bulletin
            .read()
            .get(label)
            .cloned()
            .ok_or_else(|| RepoError::UnknownLabel(label.to_string()))
    }

    /// Ordered history of `label`.
    pub fn audit(&self, caller: Role, label: &str) -> Result<Vec<LogEntry>, RepoError> {
        party_of(caller)?;
        if !self.vectors.read().contains_key(label) && !self.bulletin.read().contains_key(label) {
            return Err(RepoError::UnknownLabel(label.to_string()));
        }
        Ok(self
            .log
            .lock()
            .iter()
            .filter(|e| e.label == label)
            .cloned()
            .collect())
    }

    /// The complete log across all vectors.
    pub fn full_log(&self, caller: Role) -> Result<Vec<LogEntry>, RepoError> {
        party_of(caller)?;
        Ok(self.log.lock().clone())
    }

    pub fn labels(&self, caller: Role) -> Result<Vec<String>, RepoError> {
        party_of(caller)?;
        let mut labels: Vec<String> = self.vectors.read().keys().cloned().collect();
        labels.sort();
        Ok(labels)
    }

    /// The cells `label` was created with.
    pub fn initial(&self, caller: Role, label: &str) -> Result<Vec<Ciphertext>, RepoError> {
        party_of(caller)?;
        Ok(self.slot(label)?.state.read().initial.clone())
    }

    /// Recomputes `label` from its initial cells and the logged operands.
    pub fn replay(&self, caller: Role, label: &str, pk: &PublicKey) -> Result<Vec<Ciphertext>, RepoError> {
        let mut cells = self.initial(caller, label)?;
        for entry in self.audit(caller, label)? {
            let (Some(j), Some(operand)) = (entry.cell, entry.operand) else {
                continue;
            };
            cells[j] = match (entry.action, operand) {
                (Action::ReplaceCell, Operand::Ciphertext(c)) => c,
                (Action::MultiplyCell, Operand::Ciphertext(c)) => pk.add(&cells[j], &c)?,
                (Action::ScaleCell, Operand::Scalar(a)) => pk.scalar_pow(&cells[j], &a)?,
                (action, _) => {
                    return Err(RepoError::Aborted(format!(
                        "log entry {} has an operand inconsistent with {action}",
                        entry.seq
                    )))
                }
            };
        }
        Ok(cells)
    }

    /// Line-oriented log export.
    pub fn export(&self, caller: Role) -> Result<String, RepoError> {
        Ok(self
            .full_log(caller)?
            .iter()
            .map(|e| e.export_line() + "\n")
            .collect())
    }
}
