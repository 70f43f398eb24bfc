//! Universes, input sets, CNF/DNF set expressions and the plaintext oracle.
//!
//! Complements are taken relative to the published [`Universe`]. The oracle
//! evaluates expressions directly on plaintext sets and is the ground truth
//! every protocol is checked against.

mod config;
mod normal;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roles::PartyId;

pub use config::{parse_element_list, parse_sets_config, SetsConfig};
pub use normal::{cnf_to_dnf, dnf_to_cnf, MAX_NORMAL_FORM_SIZE};
pub use parse::parse_expression;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("not in normal form: `{subterm}` ({reason})")]
    Shape { subterm: String, reason: String },
    #[error("clause `{clause}` contains a set and its complement")]
    Tautology { clause: String },
    #[error("term `{term}` contains a set and its complement")]
    Contradiction { term: String },
    #[error("expression must have at least one non-empty clause or term")]
    Empty,
    #[error("normal form reduces to a constant (the empty set or the whole universe)")]
    Degenerate,
    #[error("normal form exceeds {limit} clauses/terms")]
    TooLarge { limit: usize },
    #[error("expression references {party} but only {n} parties are present")]
    UnknownParty { party: PartyId, n: usize },
    #[error("universe must not be empty")]
    EmptyUniverse,
    #[error("duplicate universe element `{0}`")]
    DuplicateElement(String),
    #[error("element `{element}` of {party} is not in the universe")]
    NotInUniverse { party: PartyId, element: String },
    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },
}

/// The ordered ground set `a_1..a_u` published by the decider.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Universe {
    elements: Vec<String>,
    index: HashMap<String, usize>,
}

impl Universe {
    pub fn new<I, S>(elements: I) -> Result<Self, ExprError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let elements: Vec<String> = elements.into_iter().map(Into::into).collect();
        if elements.is_empty() {
            return Err(ExprError::EmptyUniverse);
        }
        let mut index = HashMap::with_capacity(elements.len());
        for (i, e) in elements.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(ExprError::DuplicateElement(e.clone()));
            }
        }
        Ok(Universe { elements, index })
    }

    /// `a1, a2, ..., a{u}`; convenient for tests and benchmarks.
    pub fn numbered(u: usize) -> Result<Self, ExprError> {
        Universe::new((1..=u).map(|i| format!("a{i}")))
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn get(&self, j: usize) -> Option<&str> {
        self.elements.get(j).map(String::as_str)
    }

    pub fn position(&self, element: &str) -> Option<usize> {
        self.index.get(element).copied()
    }

    /// Membership bitmap of `set` over the universe ordering.
    pub fn membership(&self, set: &InputSet) -> Result<Vec<bool>, ExprError> {
        let mut bits = vec![false; self.len()];
        for e in &set.members {
            let j = self.position(e).ok_or_else(|| ExprError::NotInUniverse {
                party: set.party,
                element: e.clone(),
            })?;
            bits[j] = true;
        }
        Ok(bits)
    }
}

impl TryFrom<Vec<String>> for Universe {
    type Error = ExprError;

    fn try_from(v: Vec<String>) -> Result<Self, ExprError> {
        Universe::new(v)
    }
}

impl From<Universe> for Vec<String> {
    fn from(u: Universe) -> Vec<String> {
        u.elements
    }
}

impl fmt::Debug for Universe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Universe").field(&self.elements).finish()
    }
}

/// A party's private input set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSet {
    pub party: PartyId,
    pub members: BTreeSet<String>,
}

impl InputSet {
    pub fn new<I, S>(party: PartyId, members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        InputSet {
            party,
            members: members.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, element: &str) -> bool {
        self.members.contains(element)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `S_i` or its complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub party: PartyId,
    pub negated: bool,
}

impl Literal {
    pub fn positive(party: PartyId) -> Self {
        Literal {
            party,
            negated: false,
        }
    }

    pub fn negative(party: PartyId) -> Self {
        Literal {
            party,
            negated: true,
        }
    }

    pub fn complement(self) -> Self {
        Literal {
            negated: !self.negated,
            ..self
        }
    }

    /// Whether an element with the given membership in `S_party` satisfies
    /// this literal.
    pub fn admits(self, member: bool) -> bool {
        member != self.negated
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "!S{}", self.party.0)
        } else {
            write!(f, "S{}", self.party.0)
        }
    }
}

fn normalize_group(mut group: Vec<Literal>) -> Vec<Literal> {
    group.sort();
    group.dedup();
    group
}

fn has_complementary_pair(group: &[Literal]) -> bool {
    group.windows(2).any(|w| w[0].party == w[1].party)
}

fn join(group: &[Literal], op: &str) -> String {
    group
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(op)
}

/// An intersection of unions of literals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfExpression {
    clauses: Vec<Vec<Literal>>,
}

impl CnfExpression {
    pub fn new(clauses: Vec<Vec<Literal>>) -> Result<Self, ExprError> {
        if clauses.is_empty() {
            return Err(ExprError::Empty);
        }
        let mut out = Vec::with_capacity(clauses.len());
        for clause in clauses {
            if clause.is_empty() {
                return Err(ExprError::Empty);
            }
            let clause = normalize_group(clause);
            if has_complementary_pair(&clause) {
                return Err(ExprError::Tautology {
                    clause: join(&clause, " | "),
                });
            }
            out.push(clause);
        }
        Ok(CnfExpression { clauses: out })
    }

    /// `S_1 | ... | S_n`.
    pub fn union_of(n: usize) -> Self {
        CnfExpression {
            clauses: vec![PartyId::all(n).map(Literal::positive).collect()],
        }
    }

    /// `S_1 & ... & S_n`.
    pub fn intersection_of(n: usize) -> Self {
        CnfExpression {
            clauses: PartyId::all(n).map(|p| vec![Literal::positive(p)]).collect(),
        }
    }

    pub fn clauses(&self) -> &[Vec<Literal>] {
        &self.clauses
    }

    /// Number of clauses.
    pub fn beta(&self) -> usize {
        self.clauses.len()
    }

    /// Literal count of each clause.
    pub fn alphas(&self) -> Vec<usize> {
        self.clauses.iter().map(Vec::len).collect()
    }

    pub fn max_party(&self) -> PartyId {
        self.clauses
            .iter()
            .flatten()
            .map(|l| l.party)
            .max()
            .expect("non-empty by construction")
    }

    /// The literal `party` contributes to clause `k`, if it attends it.
    pub fn literal_in(&self, k: usize, party: PartyId) -> Option<Literal> {
        self.clauses[k].iter().copied().find(|l| l.party == party)
    }

    pub fn evaluate(&self, member: impl Fn(PartyId) -> bool) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().any(|l| l.admits(member(l.party))))
    }

    pub fn check_parties(&self, n: usize) -> Result<(), ExprError> {
        check_parties(self.clauses.iter().flatten(), n)
    }
}

impl fmt::Display for CnfExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clauses
            .iter()
            .map(|c| format!("({})", join(c, " | ")))
            .collect();
        f.write_str(&parts.join(" & "))
    }
}

/// A union of intersections of literals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnfExpression {
    terms: Vec<Vec<Literal>>,
}

impl DnfExpression {
    pub fn new(terms: Vec<Vec<Literal>>) -> Result<Self, ExprError> {
        if terms.is_empty() {
            return Err(ExprError::Empty);
        }
        let mut out = Vec::with_capacity(terms.len());
        for term in terms {
            if term.is_empty() {
                return Err(ExprError::Empty);
            }
            let term = normalize_group(term);
            if has_complementary_pair(&term) {
                return Err(ExprError::Contradiction {
                    term: join(&term, " & "),
                });
            }
            out.push(term);
        }
        Ok(DnfExpression { terms: out })
    }

    pub fn terms(&self) -> &[Vec<Literal>] {
        &self.terms
    }

    pub fn max_party(&self) -> PartyId {
        self.terms
            .iter()
            .flatten()
            .map(|l| l.party)
            .max()
            .expect("non-empty by construction")
    }

    pub fn evaluate(&self, member: impl Fn(PartyId) -> bool) -> bool {
        self.terms
            .iter()
            .any(|t| t.iter().all(|l| l.admits(member(l.party))))
    }

    /// Whether an element in exactly the parties of `region` belongs to the
    /// expression's result.
    pub fn covers(&self, region: RegionSignature) -> bool {
        self.evaluate(|p| region.contains(p))
    }

    /// All non-excluded regions over `n` parties covered by some term.
    pub fn matching_regions(&self, n: usize) -> Vec<RegionSignature> {
        RegionSignature::all_relevant(n)
            .filter(|r| self.covers(*r))
            .collect()
    }

    pub fn check_parties(&self, n: usize) -> Result<(), ExprError> {
        check_parties(self.terms.iter().flatten(), n)
    }
}

impl fmt::Display for DnfExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| format!("({})", join(t, " & ")))
            .collect();
        f.write_str(&parts.join(" | "))
    }
}

fn check_parties<'a>(lits: impl Iterator<Item = &'a Literal>, n: usize) -> Result<(), ExprError> {
    for l in lits {
        if l.party.0 > n {
            return Err(ExprError::UnknownParty { party: l.party, n });
        }
    }
    Ok(())
}

/// A parsed expression in one of the two normal forms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetExpression {
    Cnf(CnfExpression),
    Dnf(DnfExpression),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalForm {
    Cnf,
    Dnf,
}

impl SetExpression {
    pub fn form(&self) -> NormalForm {
        match self {
            SetExpression::Cnf(_) => NormalForm::Cnf,
            SetExpression::Dnf(_) => NormalForm::Dnf,
        }
    }

    pub fn to_cnf(&self) -> Result<CnfExpression, ExprError> {
        match self {
            SetExpression::Cnf(c) => Ok(c.clone()),
            SetExpression::Dnf(d) => dnf_to_cnf(d),
        }
    }

    pub fn to_dnf(&self) -> Result<DnfExpression, ExprError> {
        match self {
            SetExpression::Cnf(c) => cnf_to_dnf(c),
            SetExpression::Dnf(d) => Ok(d.clone()),
        }
    }

    pub fn max_party(&self) -> PartyId {
        match self {
            SetExpression::Cnf(c) => c.max_party(),
            SetExpression::Dnf(d) => d.max_party(),
        }
    }

    pub fn evaluate(&self, member: impl Fn(PartyId) -> bool) -> bool {
        match self {
            SetExpression::Cnf(c) => c.evaluate(member),
            SetExpression::Dnf(d) => d.evaluate(member),
        }
    }

    pub fn check_parties(&self, n: usize) -> Result<(), ExprError> {
        match self {
            SetExpression::Cnf(c) => c.check_parties(n),
            SetExpression::Dnf(d) => d.check_parties(n),
        }
    }
}

impl fmt::Display for SetExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpression::Cnf(c) => c.fmt(f),
            SetExpression::Dnf(d) => d.fmt(f),
        }
    }
}

impl From<CnfExpression> for SetExpression {
    fn from(c: CnfExpression) -> Self {
        SetExpression::Cnf(c)
    }
}

impl From<DnfExpression> for SetExpression {
    fn from(d: DnfExpression) -> Self {
        SetExpression::Dnf(d)
    }
}

fn find_set(sets: &[InputSet], party: PartyId) -> Option<&InputSet> {
    sets.iter().find(|s| s.party == party)
}

/// Evaluates `expr` directly on plaintext sets, taking complements relative
/// to `universe`.
pub fn oracle_evaluate(
    expr: &SetExpression,
    sets: &[InputSet],
    universe: &Universe,
) -> Result<BTreeSet<String>, ExprError> {
    let max = expr.max_party();
    for p in PartyId::all(max.0) {
        if find_set(sets, p).is_none() {
            return Err(ExprError::UnknownParty {
                party: p,
                n: sets.len(),
            });
        }
    }
    for s in sets {
        universe.membership(s)?;
    }
    Ok(universe
        .elements()
        .iter()
        .filter(|e| {
            expr.evaluate(|p| find_set(sets, p).map(|s| s.contains(e)).unwrap_or(false))
        })
        .cloned()
        .collect())
}

/// Oracle for unlimited universes: evaluates over the union of all input
/// sets, which is equivalent to ignoring the all-complements region.
pub fn oracle_evaluate_unbounded(
    expr: &SetExpression,
    sets: &[InputSet],
) -> Result<BTreeSet<String>, ExprError> {
    let all: BTreeSet<String> = sets.iter().flat_map(|s| s.members.iter().cloned()).collect();
    if all.is_empty() {
        expr.check_parties(sets.len())?;
        return Ok(BTreeSet::new());
    }
    oracle_evaluate(expr, sets, &Universe::new(all)?)
}

/// A Venn region: bit `i - 1` is set iff the element is in `S_i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct RegionSignature {
    mask: u64,
    parties: u8,
}

impl RegionSignature {
    pub const MAX_PARTIES: usize = 20;

    pub fn new(mask: u64, parties: usize) -> Self {
        assert!((1..=Self::MAX_PARTIES).contains(&parties), "unsupported party count");
        assert!(mask < (1u64 << parties), "mask exceeds party count");
        RegionSignature {
            mask,
            parties: parties as u8,
        }
    }

    pub fn from_parties(members: impl IntoIterator<Item = PartyId>, parties: usize) -> Self {
        let mask = members.into_iter().fold(0u64, |m, p| m | (1 << p.slot()));
        RegionSignature::new(mask, parties)
    }

    /// The `2^n - 1` regions other than the all-complements one.
    pub fn all_relevant(parties: usize) -> impl Iterator<Item = RegionSignature> {
        (1..(1u64 << parties)).map(move |m| RegionSignature::new(m, parties))
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn parties(&self) -> usize {
        self.parties as usize
    }

    pub fn contains(&self, party: PartyId) -> bool {
        party.0 >= 1 && party.0 <= self.parties() && self.mask & (1 << party.slot()) != 0
    }

    pub fn members(&self) -> Vec<PartyId> {
        PartyId::all(self.parties()).filter(|p| self.contains(*p)).collect()
    }

    pub fn member_count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// The intersection-of-complements region, irrelevant to the result.
    pub fn is_excluded(&self) -> bool {
        self.mask == 0
    }

    pub fn intersect(&self, other: RegionSignature) -> RegionSignature {
        RegionSignature::new(self.mask & other.mask, self.parties())
    }
}

impl fmt::Display for RegionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in PartyId::all(self.parties()) {
            f.write_str(if self.contains(p) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for RegionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Region({self})")
    }
}

impl std::str::FromStr for RegionSignature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() || s.len() > Self::MAX_PARTIES || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(format!("invalid region signature `{s}`"));
        }
        let mask = s
            .bytes()
            .enumerate()
            .fold(0u64, |m, (i, b)| if b == b'1' { m | (1 << i) } else { m });
        Ok(RegionSignature::new(mask, s.len()))
    }
}

impl From<RegionSignature> for String {
    fn from(r: RegionSignature) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for RegionSignature {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// The Venn region of `element` with respect to `sets` (ordered by party).
pub fn venn_region_of(element: &str, sets: &[InputSet]) -> RegionSignature {
    let mask = sets
        .iter()
        .filter(|s| s.contains(element))
        .fold(0u64, |m, s| m | (1 << s.party.slot()));
    RegionSignature::new(mask, sets.len())
}
