//! Hardening of the HE protocols against one non-colluding malicious party.
//!
//! The protocol is repeated once per party, each time with a different
//! leader. The leader encodes its input as a pair of vectors whose cells
//! form `{enc(0), enc(1)}` pairs the decider can check without learning
//! which is which, then scales both by published per-cell scalars and reuses
//! them for every clause that mentions it. Every party submits `Z`; the
//! decider compares all decrypted results and runs a zero-product audit on
//! cells each party knows must be zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::he::{Ciphertext, HeError, PrivateKey, PublicKey};
use crate::protocols::ProtocolResult;
use crate::roles::PartyId;
use crate::setops::CnfExpression;

mod run;

pub use run::run_hardened;

/// A scripted deviation by the malicious party.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Cheat {
    /// Toggles membership of `element` in one repetition only.
    InputInconsistency { element: String, repetition: usize },
    /// Encodes the wrong complement for `element` whenever complementing.
    WrongComplement { element: String },
    /// Multiplies the cell of `element` in clause `clause` (1-based) by a
    /// non-zero encryption instead of following the cell rule.
    CorruptCell { clause: usize, element: String },
    /// Overwrites the cell of `element` in the submitted `Z`.
    BadFinalVector { element: String, force_zero: bool },
}

impl Cheat {
    /// Roman-numeral strategy name.
    pub fn kind(&self) -> &'static str {
        match self {
            Cheat::InputInconsistency { .. } => "i",
            Cheat::WrongComplement { .. } => "ii",
            Cheat::CorruptCell { .. } => "iii",
            Cheat::BadFinalVector { .. } => "iv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adversary {
    pub party: PartyId,
    pub cheat: Cheat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    /// Submissions within one repetition decrypt to different results.
    SubmissionMismatch { repetition: usize, dissenters: Vec<PartyId> },
    /// Repetitions disagree on the result.
    RepetitionMismatch { repetitions: Vec<usize> },
    /// An audit product decrypted to a non-zero value.
    AuditFailure { repetition: usize, auditor: PartyId, clause: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    CheatingDetected {
        findings: Vec<Finding>,
        suspects: BTreeSet<PartyId>,
    },
    /// A leader's initialization failed a check; the run stopped.
    Aborted {
        culprit: PartyId,
        repetition: usize,
        reason: String,
    },
}

impl Verdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Verdict::Consistent)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Consistent => f.write_str("consistent"),
            Verdict::CheatingDetected { findings, suspects } => {
                let s: Vec<String> = suspects.iter().map(ToString::to_string).collect();
                write!(
                    f,
                    "cheating detected ({} findings, suspects [{}])",
                    findings.len(),
                    s.join(", ")
                )
            }
            Verdict::Aborted {
                culprit,
                repetition,
                reason,
            } => write!(f, "aborted in repetition {repetition}: {culprit} {reason}"),
        }
    }
}

/// Leader of repetition `r` (1-based): party `r`.
pub fn leader_of(repetition: usize) -> PartyId {
    PartyId(repetition)
}

/// Builds the two initialization vectors of a leader with input membership
/// `member`: the positive side is enc(0) where the leader's set admits the
/// cell, the negative side the reverse, so each cell pair is
/// `{enc(0), enc(1)}`. `flip` forces the negative side to copy the positive
/// side's plaintext at that cell.
pub fn leader_init_cells<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    member: &[bool],
    flip: Option<usize>,
    rng: &mut R,
) -> Result<(Vec<Ciphertext>, Vec<Ciphertext>), HeError> {
    let mut plus = Vec::with_capacity(member.len());
    let mut minus = Vec::with_capacity(member.len());
    for (j, &m) in member.iter().enumerate() {
        let p = if m { 0 } else { 1 };
        let q = if flip == Some(j) { p } else { 1 - p };
        plus.push(pk.encrypt_u64(p, rng)?);
        minus.push(pk.encrypt_u64(q, rng)?);
    }
    Ok((plus, minus))
}

/// Pairs in per-cell random order, hiding which side is which.
pub fn shuffle_pairs<R: RngCore>(
    plus: &[Ciphertext],
    minus: &[Ciphertext],
    rng: &mut R,
) -> Vec<[Ciphertext; 2]> {
    plus.iter()
        .zip(minus)
        .map(|(a, b)| {
            if rng.gen::<bool>() {
                [a.clone(), b.clone()]
            } else {
                [b.clone(), a.clone()]
            }
        })
        .collect()
}

/// Cells whose pair does not decrypt to exactly `{0, 1}`.
pub fn form_check(sk: &PrivateKey, pairs: &[[Ciphertext; 2]]) -> Result<Vec<usize>, HeError> {
    let mut bad = Vec::new();
    for (j, [a, b]) in pairs.iter().enumerate() {
        let x = sk.decrypt(a)?.into_value();
        let y = sk.decrypt(b)?.into_value();
        let ok = (x.is_zero() && y.is_one()) || (x.is_one() && y.is_zero());
        if !ok {
            bad.push(j);
        }
    }
    Ok(bad)
}

/// Order-independent digest of a pair list, so parties can confirm the
/// decider checked the same ciphertexts the repository holds.
pub fn pair_digest(pairs: &[[Ciphertext; 2]]) -> String {
    let mut h = Sha256::new();
    for [a, b] in pairs {
        let mut both = [a.value().to_bytes_be(), b.value().to_bytes_be()];
        both.sort();
        for bytes in both {
            h.update((bytes.len() as u32).to_be_bytes());
            h.update(&bytes);
        }
    }
    hex::encode(h.finalize())
}

/// Per-cell public scalars, uniform in `[1, N)`.
pub fn random_scalars<R: RngCore + CryptoRng>(pk: &PublicKey, len: usize, rng: &mut R) -> Vec<BigUint> {
    (0..len)
        .map(|_| rng.gen_biguint_range(&BigUint::one(), pk.modulus()))
        .collect()
}

/// Product of `cells` masked with a fresh enc(0).
pub fn audit_product<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    cells: &[&Ciphertext],
    rng: &mut R,
) -> Result<Ciphertext, HeError> {
    let mut acc = pk.encrypt_zero(rng);
    for c in cells {
        acc = pk.add(&acc, c)?;
    }
    Ok(acc)
}

/// Decider-side bookkeeping for a hardened run.
#[derive(Debug, Default)]
pub struct Tally {
    /// Decrypted result per repetition and submitter.
    pub results: BTreeMap<usize, BTreeMap<PartyId, ProtocolResult>>,
    /// Audit outcome per (repetition, auditor, clause): `true` when zero.
    pub audits: BTreeMap<(usize, PartyId, usize), bool>,
}

/// The most common result and whether it is unique. Ties resolve to the
/// earliest-seen value but are reported as not unique.
fn majority<'a>(results: impl Iterator<Item = &'a ProtocolResult>) -> Option<(ProtocolResult, bool)> {
    let mut counts: Vec<(&ProtocolResult, usize)> = Vec::new();
    for r in results {
        match counts.iter_mut().find(|(x, _)| *x == r) {
            Some((_, c)) => *c += 1,
            None => counts.push((r, 1)),
        }
    }
    let best = counts.iter().map(|(_, c)| *c).max()?;
    let unique = counts.iter().filter(|(_, c)| *c == best).count() == 1;
    counts
        .into_iter()
        .find(|(_, c)| *c == best)
        .map(|(r, _)| (r.clone(), unique))
}

impl Tally {
    /// Compares every submission and audit and returns the verdict plus the
    /// agreed result when consistent.
    pub fn conclude(&self, expr: &CnfExpression) -> (Verdict, Option<ProtocolResult>) {
        let mut findings = Vec::new();
        let mut suspects = BTreeSet::new();
        let mut per_rep: Vec<(usize, ProtocolResult)> = Vec::new();

        for (&rep, subs) in &self.results {
            let Some((m, unique)) = majority(subs.values()) else { continue };
            // Without a unique majority no submitter can be cleared.
            let dissenters: Vec<PartyId> = subs
                .iter()
                .filter(|(_, r)| !unique || **r != m)
                .map(|(p, _)| *p)
                .collect();
            if !dissenters.is_empty() {
                suspects.extend(dissenters.iter().copied());
                findings.push(Finding::SubmissionMismatch {
                    repetition: rep,
                    dissenters,
                });
            }
            per_rep.push((rep, m));
        }

        if let Some((m, _)) = majority(per_rep.iter().map(|(_, r)| r)) {
            let odd: Vec<usize> = per_rep
                .iter()
                .filter(|(_, r)| *r != m)
                .map(|(rep, _)| *rep)
                .collect();
            if !odd.is_empty() {
                findings.push(Finding::RepetitionMismatch { repetitions: odd });
            }
        }

        for (&(rep, auditor, clause), &ok) in &self.audits {
            if ok {
                continue;
            }
            findings.push(Finding::AuditFailure {
                repetition: rep,
                auditor,
                clause,
            });
            if let Some(lits) = expr.clauses().get(clause - 1) {
                suspects.extend(
                    lits.iter()
                        .map(|l| l.party)
                        .filter(|p| *p != auditor && *p != leader_of(rep)),
                );
            }
        }

        if findings.is_empty() {
            let result = per_rep.first().map(|(_, r)| r.clone());
            (Verdict::Consistent, result)
        } else {
            (Verdict::CheatingDetected { findings, suspects }, None)
        }
    }
}
