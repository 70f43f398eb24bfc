//! Homomorphic-encryption protocols over a limited universe: union,
//! intersection and the generic CNF protocol, with the per-cell rules,
//! ciphertext pools and finalizer delivery cases they share.
//!
//! The functions here are role-local building blocks. [`crate::runtime`]
//! drives them across the party and decider actors; the `run_*` helpers at
//! the bottom of this module wire a local cluster for one-call use.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::he::{Ciphertext, HeError, PrivateKey, PublicKey};
use crate::repository::{RepoError, WriteSession};
use crate::roles::PartyId;
use crate::setops::{CnfExpression, ExprError, InputSet, Literal, Universe};

mod run;

pub use run::{
    protocol1_emptiness, protocol1_union, protocol2_intersection, protocol3_generic, run_offline,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("at least two parties are required, got {0}")]
    TooFewParties(usize),
    #[error("pool for `{label}` exhausted")]
    PoolExhausted { label: String },
    #[error("no offline material for `{0}`")]
    MissingVector(String),
    #[error("{0}")]
    Expr(#[from] ExprError),
    #[error("{0}")]
    He(#[from] HeError),
    #[error("{0}")]
    Repo(#[from] RepoError),
    #[error("decider received an unexpected scalar plaintext")]
    BadScalar,
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(#[from] crate::runtime::RuntimeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultMode {
    Elements,
    Cardinality,
    Emptiness,
}

impl fmt::Display for ResultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResultMode::Elements => "elements",
            ResultMode::Cardinality => "cardinality",
            ResultMode::Emptiness => "emptiness",
        })
    }
}

impl std::str::FromStr for ResultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "elements" => Ok(ResultMode::Elements),
            "cardinality" => Ok(ResultMode::Cardinality),
            "emptiness" => Ok(ResultMode::Emptiness),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// What the decider learns. Exactly one field per mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProtocolResult {
    Elements { elements: BTreeSet<String> },
    Cardinality { count: u64 },
    Emptiness { empty: bool },
}

impl ProtocolResult {
    pub fn mode(&self) -> ResultMode {
        match self {
            ProtocolResult::Elements { .. } => ResultMode::Elements,
            ProtocolResult::Cardinality { .. } => ResultMode::Cardinality,
            ProtocolResult::Emptiness { .. } => ResultMode::Emptiness,
        }
    }

    /// The expected result for `mode`, derived from a plaintext element set.
    pub fn from_elements(elements: BTreeSet<String>, mode: ResultMode) -> Self {
        match mode {
            ResultMode::Elements => ProtocolResult::Elements { elements },
            ResultMode::Cardinality => ProtocolResult::Cardinality {
                count: elements.len() as u64,
            },
            ResultMode::Emptiness => ProtocolResult::Emptiness {
                empty: elements.is_empty(),
            },
        }
    }
}

impl fmt::Display for ProtocolResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolResult::Elements { elements } => {
                let v: Vec<&str> = elements.iter().map(String::as_str).collect();
                write!(f, "elements {{{}}}", v.join(", "))
            }
            ProtocolResult::Cardinality { count } => write!(f, "cardinality {count}"),
            ProtocolResult::Emptiness { empty } => write!(f, "empty {empty}"),
        }
    }
}

/// Which HE protocol to run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeProtocol {
    Union,
    Intersection,
    Generic(CnfExpression),
}

impl HeProtocol {
    /// The protocol's target as a CNF expression over `n` parties.
    pub fn as_cnf(&self, n: usize) -> CnfExpression {
        match self {
            HeProtocol::Union => CnfExpression::union_of(n),
            HeProtocol::Intersection => CnfExpression::intersection_of(n),
            HeProtocol::Generic(c) => c.clone(),
        }
    }
}

/// Initial content of a working vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorInit {
    RandomNonzero,
    Zero,
    One,
}

/// How an attending party updates each cell of a vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRule {
    /// Literal holds: replace by enc(0). Otherwise: multiply by enc(0).
    Union,
    /// Literal holds: multiply by enc(0). Otherwise: multiply by enc(r).
    Intersection,
    /// Single cell. Set non-empty: replace by enc(0). Otherwise: multiply by enc(0).
    NonEmpty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorPlan {
    pub label: String,
    pub init: VectorInit,
    pub len: usize,
    pub rule: CellRule,
    pub attendees: Vec<Literal>,
}

impl VectorPlan {
    pub fn literal_of(&self, party: PartyId) -> Option<Literal> {
        self.attendees.iter().copied().find(|l| l.party == party)
    }
}

/// Public description of the working vectors of one protocol run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub vectors: Vec<VectorPlan>,
    pub mode: ResultMode,
    /// Emptiness through a single scalar rather than a padded vector.
    pub scalar: bool,
}

impl ProtocolPlan {
    pub fn new(protocol: &HeProtocol, n: usize, u: usize, mode: ResultMode) -> Result<Self, ProtocolError> {
        if n < 2 {
            return Err(ProtocolError::TooFewParties(n));
        }
        let all_positive = || PartyId::all(n).map(Literal::positive).collect::<Vec<_>>();
        let plan = match protocol {
            HeProtocol::Union if mode == ResultMode::Emptiness => ProtocolPlan {
                vectors: vec![VectorPlan {
                    label: "V".into(),
                    init: VectorInit::One,
                    len: 1,
                    rule: CellRule::NonEmpty,
                    attendees: all_positive(),
                }],
                mode,
                scalar: true,
            },
            HeProtocol::Union => ProtocolPlan {
                vectors: vec![VectorPlan {
                    label: "V".into(),
                    init: VectorInit::RandomNonzero,
                    len: u,
                    rule: CellRule::Union,
                    attendees: all_positive(),
                }],
                mode,
                scalar: false,
            },
            HeProtocol::Intersection => ProtocolPlan {
                vectors: vec![VectorPlan {
                    label: "V".into(),
                    init: VectorInit::Zero,
                    len: u,
                    rule: CellRule::Intersection,
                    attendees: all_positive(),
                }],
                mode,
                scalar: false,
            },
            HeProtocol::Generic(cnf) => {
                cnf.check_parties(n)?;
                ProtocolPlan {
                    vectors: cnf
                        .clauses()
                        .iter()
                        .enumerate()
                        .map(|(k, clause)| VectorPlan {
                            label: format!("W^{}", k + 1),
                            init: VectorInit::RandomNonzero,
                            len: u,
                            rule: CellRule::Union,
                            attendees: clause.clone(),
                        })
                        .collect(),
                    mode,
                    scalar: false,
                }
            }
        };
        Ok(plan)
    }

    pub fn vector(&self, label: &str) -> Option<&VectorPlan> {
        self.vectors.iter().find(|v| v.label == label)
    }

    /// Vectors `party` writes to, in plan order.
    pub fn attended_by(&self, party: PartyId) -> impl Iterator<Item = &VectorPlan> {
        self.vectors
            .iter()
            .filter(move |v| v.literal_of(party).is_some())
    }
}

/// Single-use precomputed enc(0) and enc(r) instances for one vector.
#[derive(Clone, Debug, Default)]
pub struct Pool {
    label: String,
    zeros: Vec<Ciphertext>,
    randoms: Vec<Ciphertext>,
}

impl Pool {
    pub fn fill<R: RngCore + CryptoRng>(label: &str, size: usize, pk: &PublicKey, rng: &mut R) -> Self {
        let zeros = (0..size).map(|_| pk.encrypt_zero(rng)).collect();
        let randoms = (0..size).map(|_| pk.encrypt_random_nonzero(rng)).collect();
        Pool {
            label: label.to_string(),
            zeros,
            randoms,
        }
    }

    fn exhausted(&self) -> ProtocolError {
        ProtocolError::PoolExhausted {
            label: self.label.clone(),
        }
    }

    pub fn take_zero(&mut self) -> Result<Ciphertext, ProtocolError> {
        self.zeros.pop().ok_or_else(|| self.exhausted())
    }

    pub fn take_random(&mut self) -> Result<Ciphertext, ProtocolError> {
        self.randoms.pop().ok_or_else(|| self.exhausted())
    }

    pub fn remaining(&self) -> (usize, usize) {
        (self.zeros.len(), self.randoms.len())
    }
}

/// Fresh initial cells for a working vector.
pub fn initial_cells<R: RngCore + CryptoRng>(
    plan: &VectorPlan,
    pk: &PublicKey,
    rng: &mut R,
) -> Result<Vec<Ciphertext>, ProtocolError> {
    (0..plan.len)
        .map(|_| {
            Ok(match plan.init {
                VectorInit::RandomNonzero => pk.encrypt_random_nonzero(rng),
                VectorInit::Zero => pk.encrypt_zero(rng),
                VectorInit::One => pk.encrypt_u64(1, rng)?,
            })
        })
        .collect()
}

/// Membership of each universe element in the input to a literal: `S_i`
/// itself or its complement relative to the universe.
pub fn literal_input(literal: Literal, set: &InputSet, universe: &Universe) -> Vec<bool> {
    universe
        .elements()
        .iter()
        .map(|e| literal.admits(set.contains(e)))
        .collect()
}

/// Applies `rule` to every cell of the session's vector. `holds[j]` says
/// whether the party's literal admits cell `j`. Each cell consumes exactly
/// one pooled ciphertext.
pub fn apply_rule(
    session: &mut WriteSession<'_>,
    pk: &PublicKey,
    rule: CellRule,
    holds: &[bool],
    pool: &mut Pool,
) -> Result<(), ProtocolError> {
    if holds.len() != session.len() {
        return Err(ProtocolError::Invalid(format!(
            "membership vector has {} entries for a vector of {}",
            holds.len(),
            session.len()
        )));
    }
    for (j, &h) in holds.iter().enumerate() {
        match (rule, h) {
            (CellRule::Union | CellRule::NonEmpty, true) => session.replace(j, pool.take_zero()?)?,
            (CellRule::Union | CellRule::NonEmpty, false) => {
                session.multiply(pk, j, pool.take_zero()?)?
            }
            (CellRule::Intersection, true) => session.multiply(pk, j, pool.take_zero()?)?,
            (CellRule::Intersection, false) => session.multiply(pk, j, pool.take_random()?)?,
        }
    }
    Ok(())
}

/// `Z_j = prod_k W^k_j`.
pub fn combine(pk: &PublicKey, vectors: &[Vec<Ciphertext>]) -> Result<Vec<Ciphertext>, ProtocolError> {
    let (first, rest) = vectors
        .split_first()
        .ok_or_else(|| ProtocolError::Invalid("no vectors to combine".into()))?;
    let mut z = first.clone();
    for w in rest {
        if w.len() != z.len() {
            return Err(ProtocolError::Invalid("vectors differ in length".into()));
        }
        for (zj, wj) in z.iter_mut().zip(w) {
            *zj = pk.add(zj, wj)?;
        }
    }
    Ok(z)
}

/// Clone-padding parameters for emptiness delivery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneParams {
    pub min_copies: usize,
    pub max_copies: usize,
    /// Pad cells are drawn from `[pad_min_factor * u, pad_max_factor * u]`.
    pub pad_min_factor: usize,
    pub pad_max_factor: usize,
}

impl Default for CloneParams {
    fn default() -> Self {
        CloneParams {
            min_copies: 2,
            max_copies: 8,
            pad_min_factor: 1,
            pad_max_factor: 4,
        }
    }
}

/// How the finalizer presents `Z` to the decider.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    /// Unpermuted; positions identify elements.
    Plain,
    /// Uniformly permuted.
    Shuffled,
    /// Re-randomized clones plus fresh non-zero pad cells, permuted.
    ClonePadded,
}

impl Delivery {
    pub fn for_mode(mode: ResultMode) -> Self {
        match mode {
            ResultMode::Elements => Delivery::Plain,
            ResultMode::Cardinality => Delivery::Shuffled,
            ResultMode::Emptiness => Delivery::ClonePadded,
        }
    }
}

/// Transforms `z` for delivery.
pub fn prepare_delivery<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    mut z: Vec<Ciphertext>,
    delivery: Delivery,
    clones: &CloneParams,
    rng: &mut R,
) -> Result<Vec<Ciphertext>, ProtocolError> {
    match delivery {
        Delivery::Plain => Ok(z),
        Delivery::Shuffled => {
            z.shuffle(rng);
            Ok(z)
        }
        Delivery::ClonePadded => {
            if clones.min_copies == 0
                || clones.min_copies > clones.max_copies
                || clones.pad_min_factor > clones.pad_max_factor
            {
                return Err(ProtocolError::Invalid("inconsistent clone parameters".into()));
            }
            let u = z.len();
            let mut out = Vec::new();
            for c in &z {
                let copies = rng.gen_range(clones.min_copies..=clones.max_copies);
                for _ in 0..copies {
                    out.push(pk.rerandomize(c, rng)?);
                }
            }
            let pad = rng.gen_range(clones.pad_min_factor * u..=clones.pad_max_factor * u);
            for _ in 0..pad {
                out.push(pk.encrypt_random_nonzero(rng));
            }
            out.shuffle(rng);
            Ok(out)
        }
    }
}

/// Decider-side tallies of one decryption pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionStats {
    pub cells: u64,
    pub zeros: u64,
}

/// Decrypts a delivered vector and reads the result off its zero cells.
pub fn decide_vector(
    sk: &PrivateKey,
    cells: &[Ciphertext],
    delivery: Delivery,
    universe: &Universe,
) -> Result<(ProtocolResult, DecisionStats), ProtocolError> {
    let mut zero_at = Vec::with_capacity(cells.len());
    for c in cells {
        zero_at.push(sk.decrypt(c)?.is_zero());
    }
    let stats = DecisionStats {
        cells: cells.len() as u64,
        zeros: zero_at.iter().filter(|z| **z).count() as u64,
    };
    let result = match delivery {
        Delivery::Plain => {
            if cells.len() != universe.len() {
                return Err(ProtocolError::Invalid(format!(
                    "expected {} cells, received {}",
                    universe.len(),
                    cells.len()
                )));
            }
            ProtocolResult::Elements {
                elements: zero_at
                    .iter()
                    .zip(universe.elements())
                    .filter(|(z, _)| **z)
                    .map(|(_, e)| e.clone())
                    .collect(),
            }
        }
        Delivery::Shuffled => ProtocolResult::Cardinality { count: stats.zeros },
        Delivery::ClonePadded => ProtocolResult::Emptiness {
            empty: stats.zeros == 0,
        },
    };
    Ok((result, stats))
}

/// Decrypts the emptiness scalar: 0 means non-empty, 1 means empty.
pub fn decide_scalar(sk: &PrivateKey, cell: &Ciphertext) -> Result<ProtocolResult, ProtocolError> {
    let m = sk.decrypt(cell)?;
    if m.is_zero() {
        Ok(ProtocolResult::Emptiness { empty: false })
    } else if m.value() == &num_bigint::BigUint::from(1u8) {
        Ok(ProtocolResult::Emptiness { empty: true })
    } else {
        Err(ProtocolError::BadScalar)
    }
}

/// Zero test without a mode, for audits and form checks.
pub fn decrypts_to_zero(sk: &PrivateKey, c: &Ciphertext) -> Result<bool, ProtocolError> {
    Ok(sk.decrypt(c)?.value().is_zero())
}
