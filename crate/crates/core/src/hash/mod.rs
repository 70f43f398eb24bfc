//! Keyed-hash protocol for unlimited universes.
//!
//! Parties replace elements by HMAC-SHA256 tags under a common key and pad
//! their tag sets with random dummies, one batch per Venn region, shared by
//! exactly that region's members. The decider classifies every tag by the set
//! of parties that sent it; dummies land in their planned region and are
//! subtracted using totals declared by a party.
//!
//! The emptiness variant also sends clones of each element under extra keys
//! agreed by subsets of parties, so the excess over the dummy totals no longer
//! equals the true cardinality.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use hmac::{Hmac, Mac};
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::roles::PartyId;
use crate::setops::{DnfExpression, ExprError, InputSet, RegionSignature};

type HmacSha256 = Hmac<Sha256>;

pub const TAG_LEN: usize = 32;
pub const KEY_LEN: usize = 32;
pub const MIN_KEY_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashError {
    #[error("keyed hash requires a key of at least {MIN_KEY_LEN} bytes")]
    ShortKey,
    #[error("size hint must be positive")]
    ZeroSizeHint,
    #[error("at least two parties are required, got {0}")]
    TooFewParties(usize),
    #[error("region {region} expects {expected} dummy values, have {got}")]
    BudgetMismatch {
        region: RegionSignature,
        expected: u64,
        got: usize,
    },
    #[error("missing dummy values for region {0}")]
    MissingRegion(RegionSignature),
    #[error("tag collision inside the tag set of {0}")]
    Collision(PartyId),
    #[error("declared dummy totals exceed observed collisions in region {region}")]
    Inconsistent { region: RegionSignature },
    #[error("{0}")]
    Expr(#[from] ExprError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A 32-byte keyed-hash image or dummy value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(pub [u8; TAG_LEN]);

impl Tag {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut t = [0u8; TAG_LEN];
        rng.fill_bytes(&mut t);
        Tag(t)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({}..)", &self.to_hex()[..12])
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; TAG_LEN] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("tag must be 32 bytes"))?;
        Ok(Tag(arr))
    }
}

/// HMAC-SHA256 keyed once and reused across many elements.
#[derive(Clone)]
pub struct TagHasher {
    mac: HmacSha256,
}

impl TagHasher {
    pub fn new(key: &[u8]) -> Result<Self, HashError> {
        if key.len() < MIN_KEY_LEN {
            return Err(HashError::ShortKey);
        }
        Ok(TagHasher {
            mac: HmacSha256::new_from_slice(key).expect("HMAC accepts any key length"),
        })
    }

    pub fn tag(&self, element: &[u8]) -> Tag {
        let mut mac = self.mac.clone();
        mac.update(element);
        Tag(mac.finalize().into_bytes().into())
    }
}

/// `HMAC-SHA256(key, element)`.
pub fn keyed_hash(key: &[u8], element: &[u8]) -> Result<Tag, HashError> {
    Ok(TagHasher::new(key)?.tag(element))
}

/// A clone key agreed by a subset of parties.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraKey {
    #[serde(with = "hex_bytes")]
    pub key: Vec<u8>,
    /// Fraction of elements every holder skips under this key.
    pub skip_fraction: f64,
}

impl fmt::Debug for ExtraKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtraKey")
            .field("skip_fraction", &self.skip_fraction)
            .finish_non_exhaustive()
    }
}

impl ExtraKey {
    pub fn generate<R: RngCore + CryptoRng>(skip: (f64, f64), rng: &mut R) -> Self {
        let mut key = vec![0u8; KEY_LEN];
        rng.fill_bytes(&mut key);
        ExtraKey {
            key,
            skip_fraction: rng.gen_range(skip.0..=skip.1),
        }
    }

    /// Whether holders skip `element` under this key. Keyed by the extra key
    /// itself, so every holder makes the same decision.
    pub fn skips(&self, hasher: &TagHasher, element: &[u8]) -> bool {
        let mut input = Vec::with_capacity(element.len() + 5);
        input.extend_from_slice(b"skip:");
        input.extend_from_slice(element);
        let t = hasher.tag(&input);
        let x = u64::from_be_bytes(t.0[..8].try_into().expect("8 bytes"));
        (x as f64) / (u64::MAX as f64 + 1.0) < self.skip_fraction
    }
}

/// Key material known to the parties and never to the decider.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedKeys {
    #[serde(with = "hex_bytes")]
    pub common: Vec<u8>,
    /// Extra clone keys per party subset; empty for the cardinality variant.
    pub extra: BTreeMap<RegionSignature, Vec<ExtraKey>>,
}

impl fmt::Debug for SharedKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SharedKeys")
            .field("subsets", &self.extra.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl SharedKeys {
    pub fn generate_common<R: RngCore + CryptoRng>(rng: &mut R) -> Vec<u8> {
        let mut k = vec![0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        k
    }

    /// All keys for the given variant in one place (tests and single-process use).
    pub fn generate<R: RngCore + CryptoRng>(
        n: usize,
        expr: &DnfExpression,
        config: &HashConfig,
        variant: HashVariant,
        rng: &mut R,
    ) -> Self {
        let common = SharedKeys::generate_common(rng);
        let mut extra = BTreeMap::new();
        if variant == HashVariant::Emptiness {
            for subset in clone_subsets(expr, n) {
                let keys = (0..config.extra_keys)
                    .map(|_| ExtraKey::generate(config.skip_range, rng))
                    .collect();
                extra.insert(subset, keys);
            }
        }
        SharedKeys { common, extra }
    }

    /// The keys `party` holds.
    pub fn view_for(&self, party: PartyId) -> SharedKeys {
        SharedKeys {
            common: self.common.clone(),
            extra: self
                .extra
                .iter()
                .filter(|(t, _)| t.contains(party))
                .map(|(t, k)| (*t, k.clone()))
                .collect(),
        }
    }

    /// Every key byte string, for leak checks.
    pub fn all_key_bytes(&self) -> Vec<Vec<u8>> {
        std::iter::once(self.common.clone())
            .chain(self.extra.values().flatten().map(|k| k.key.clone()))
            .collect()
    }
}

/// Party subsets that receive clone keys.
///
/// A clone of an element held by parties `X` under the key of subset `T`
/// lands in region `T ∩ X`. Only subsets for which a matching `T ∩ X`
/// implies a matching `X` are used, so clones never create excess in a
/// matching region for an element outside the result. The full party set
/// always qualifies.
pub fn clone_subsets(expr: &DnfExpression, n: usize) -> Vec<RegionSignature> {
    RegionSignature::all_relevant(n)
        .filter(|t| t.member_count() >= 2)
        .filter(|t| {
            RegionSignature::all_relevant(n).all(|x| {
                let meet = t.intersect(x);
                meet.is_excluded() || !expr.covers(meet) || expr.covers(x)
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashVariant {
    Cardinality,
    Emptiness,
}

/// Public parameters of a hash-protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashConfig {
    /// Typical input-set size.
    pub size_hint: u64,
    /// Dummy counts per region are drawn from `[m * hint, 2 * m * hint]`.
    pub multiplier: u64,
    /// Clone keys per qualifying subset (emptiness variant).
    pub extra_keys: usize,
    pub skip_range: (f64, f64),
    /// Fixed per-region dummy counts replacing the random draw.
    pub fixed_counts: Option<BTreeMap<RegionSignature, u64>>,
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            size_hint: 10,
            multiplier: 10,
            extra_keys: 2,
            skip_range: (0.05, 0.15),
            fixed_counts: None,
        }
    }
}

impl HashConfig {
    pub fn validate(&self) -> Result<(), HashError> {
        if self.size_hint == 0 {
            return Err(HashError::ZeroSizeHint);
        }
        if self.multiplier == 0 {
            return Err(HashError::Config("multiplier must be positive".into()));
        }
        let (lo, hi) = self.skip_range;
        if !(0.0..1.0).contains(&lo) || !(lo..1.0).contains(&hi) {
            return Err(HashError::Config("skip range must satisfy 0 <= lo <= hi < 1".into()));
        }
        Ok(())
    }

    /// Draws the dummy count for `region`.
    pub fn draw_count<R: RngCore + CryptoRng>(&self, region: RegionSignature, rng: &mut R) -> u64 {
        if let Some(c) = self.fixed_counts.as_ref().and_then(|m| m.get(&region)) {
            return *c;
        }
        let lo = self.multiplier * self.size_hint;
        rng.gen_range(lo..=2 * lo)
    }
}

/// Dummies planned for one Venn region. Parties outside the region know only
/// `count`; `values` is empty in their view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionBudget {
    pub count: u64,
    pub values: Vec<Tag>,
}

impl RegionBudget {
    pub fn generate<R: RngCore + CryptoRng>(count: u64, rng: &mut R) -> Self {
        RegionBudget {
            count,
            values: (0..count).map(|_| Tag::random(rng)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPlan {
    pub parties: usize,
    pub regions: BTreeMap<RegionSignature, RegionBudget>,
}

/// Draws a dummy budget and values for each of the `2^n - 1` regions.
pub fn plan_regions<R: RngCore + CryptoRng>(
    n: usize,
    expr: &DnfExpression,
    config: &HashConfig,
    rng: &mut R,
) -> Result<RegionPlan, HashError> {
    if n < 2 {
        return Err(HashError::TooFewParties(n));
    }
    config.validate()?;
    expr.check_parties(n)?;
    let regions = RegionSignature::all_relevant(n)
        .map(|r| (r, RegionBudget::generate(config.draw_count(r, rng), rng)))
        .collect();
    Ok(RegionPlan { parties: n, regions })
}

impl RegionPlan {
    /// What `party` knows: every count, values only for its own regions.
    pub fn view_for(&self, party: PartyId) -> RegionPlan {
        RegionPlan {
            parties: self.parties,
            regions: self
                .regions
                .iter()
                .map(|(r, b)| {
                    let values = if r.contains(party) { b.values.clone() } else { Vec::new() };
                    (*r, RegionBudget { count: b.count, values })
                })
                .collect(),
        }
    }

    /// Per-region dummy counts for the regions `expr` covers.
    pub fn declared_totals(&self, expr: &DnfExpression) -> BTreeMap<RegionSignature, u64> {
        self.regions
            .iter()
            .filter(|(r, _)| expr.covers(**r))
            .map(|(r, b)| (*r, b.count))
            .collect()
    }
}

/// A party's submission: sorted, duplicate-free tags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    pub party: PartyId,
    pub tags: Vec<Tag>,
}

impl TagSet {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// One 64-hex-character line per tag.
    pub fn to_lines(&self) -> String {
        self.tags.iter().map(|t| t.to_hex() + "\n").collect()
    }
}

/// Tags of `set` under the common key plus every dummy of every region that
/// includes `party`, and clones under the party's extra keys.
pub fn build_tagset(
    party: PartyId,
    set: &InputSet,
    plan: &RegionPlan,
    keys: &SharedKeys,
) -> Result<TagSet, HashError> {
    let hasher = TagHasher::new(&keys.common)?;
    let mut tags: Vec<Tag> = set.members.iter().map(|e| hasher.tag(e.as_bytes())).collect();
    for (subset, extra) in &keys.extra {
        if !subset.contains(party) {
            continue;
        }
        for k in extra {
            let h = TagHasher::new(&k.key)?;
            tags.extend(
                set.members
                    .iter()
                    .filter(|e| !k.skips(&h, e.as_bytes()))
                    .map(|e| h.tag(e.as_bytes())),
            );
        }
    }
    for (region, budget) in &plan.regions {
        if !region.contains(party) {
            continue;
        }
        if budget.values.len() as u64 != budget.count {
            return Err(if budget.values.is_empty() && budget.count > 0 {
                HashError::MissingRegion(*region)
            } else {
                HashError::BudgetMismatch {
                    region: *region,
                    expected: budget.count,
                    got: budget.values.len(),
                }
            });
        }
        tags.extend_from_slice(&budget.values);
    }
    let before = tags.len();
    tags.sort_unstable();
    tags.dedup();
    if tags.len() != before {
        return Err(HashError::Collision(party));
    }
    Ok(TagSet { party, tags })
}

/// Number of distinct tags received from exactly each region's parties.
pub fn region_collisions(tagsets: &[TagSet], n: usize) -> BTreeMap<RegionSignature, u64> {
    let mut masks: HashMap<Tag, u64> = HashMap::new();
    for ts in tagsets {
        let bit = 1u64 << ts.party.slot();
        for t in &ts.tags {
            *masks.entry(*t).or_insert(0) |= bit;
        }
    }
    let mut counts = BTreeMap::new();
    for mask in masks.into_values() {
        *counts.entry(RegionSignature::new(mask, n)).or_insert(0) += 1;
    }
    counts
}

/// Per matching region: collisions minus the declared dummy total.
fn excess_by_region(
    tagsets: &[TagSet],
    expr: &DnfExpression,
    declared: &BTreeMap<RegionSignature, u64>,
) -> Result<BTreeMap<RegionSignature, u64>, HashError> {
    let n = tagsets.len();
    expr.check_parties(n)?;
    let collisions = region_collisions(tagsets, n);
    let mut out = BTreeMap::new();
    for region in expr.matching_regions(n) {
        let gross = collisions.get(&region).copied().unwrap_or(0);
        let dummies = declared.get(&region).copied().unwrap_or(0);
        let excess = gross
            .checked_sub(dummies)
            .ok_or(HashError::Inconsistent { region })?;
        out.insert(region, excess);
    }
    Ok(out)
}

/// `|S_T|`: matching-region collisions minus the declared dummy totals.
pub fn decider_cardinality(
    tagsets: &[TagSet],
    expr: &DnfExpression,
    declared: &BTreeMap<RegionSignature, u64>,
) -> Result<u64, HashError> {
    Ok(excess_by_region(tagsets, expr, declared)?.values().sum())
}

/// Whether `S_T` is empty, plus the total excess (clone-inflated).
pub fn decider_emptiness(
    tagsets: &[TagSet],
    expr: &DnfExpression,
    declared: &BTreeMap<RegionSignature, u64>,
) -> Result<(bool, u64), HashError> {
    let excess = excess_by_region(tagsets, expr, declared)?;
    let total: u64 = excess.values().sum();
    Ok((excess.values().all(|e| *e == 0), total))
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Region counts of the three-party worked example, keyed `A`, `B`, `C`.
pub fn fig1_counts() -> BTreeMap<RegionSignature, u64> {
    [
        ("100", 34),
        ("010", 88),
        ("001", 145),
        ("110", 23),
        ("101", 12),
        ("011", 53),
        ("111", 97),
    ]
    .into_iter()
    .map(|(r, c)| (r.parse().expect("valid signature"), c))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setops::{oracle_evaluate_unbounded, parse_expression, SetExpression};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn dnf(text: &str) -> DnfExpression {
        parse_expression(text).unwrap().to_dnf().unwrap()
    }

    fn fig1_expr() -> DnfExpression {
        match parse_expression("(S1 & S2 & !S3) | (S2 & S3)").unwrap() {
            SetExpression::Dnf(d) => d,
            _ => unreachable!(),
        }
    }

    fn fig1_config() -> HashConfig {
        HashConfig {
            fixed_counts: Some(fig1_counts()),
            ..HashConfig::default()
        }
    }

    /// Sets with known overlaps: 4 in A∩B only, 3 in B∩C only, 2 in all,
    /// plus private elements.
    fn fig1_sets() -> Vec<InputSet> {
        let mut a = vec![];
        let mut b = vec![];
        let mut c = vec![];
        for i in 0..4 {
            a.push(format!("ab{i}"));
            b.push(format!("ab{i}"));
        }
        for i in 0..3 {
            b.push(format!("bc{i}"));
            c.push(format!("bc{i}"));
        }
        for i in 0..2 {
            for s in [&mut a, &mut b, &mut c] {
                s.push(format!("abc{i}"));
            }
        }
        a.push("a0".into());
        a.push("ac0".into());
        c.push("ac0".into());
        c.push("c0".into());
        vec![
            InputSet::new(PartyId(1), a),
            InputSet::new(PartyId(2), b),
            InputSet::new(PartyId(3), c),
        ]
    }

    #[test]
    fn keyed_hash_basics() {
        let k1 = [7u8; 32];
        let k2 = [8u8; 32];
        assert_eq!(keyed_hash(&k1, b"x").unwrap(), keyed_hash(&k1, b"x").unwrap());
        assert_ne!(keyed_hash(&k1, b"x").unwrap(), keyed_hash(&k1, b"y").unwrap());
        assert_ne!(keyed_hash(&k1, b"x").unwrap(), keyed_hash(&k2, b"x").unwrap());
        assert_eq!(keyed_hash(&[], b"x").unwrap_err(), HashError::ShortKey);
    }

    #[test]
    fn keyed_hash_matches_rfc4231_case_2() {
        // key "Jefe", which is shorter than our minimum, so go through the MAC directly
        let mut mac = HmacSha256::new_from_slice(b"Jefe").unwrap();
        mac.update(b"what do ya want for nothing?");
        assert_eq!(
            hex::encode(mac.finalize().into_bytes()),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }

    #[test]
    fn fig1_plan_and_region_soundness() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let plan = plan_regions(3, &fig1_expr(), &fig1_config(), &mut rng).unwrap();
        assert_eq!(plan.regions.len(), 7);
        let ab: RegionSignature = "110".parse().unwrap();
        assert_eq!(plan.regions[&ab].count, 23);
        let keys = SharedKeys::generate(3, &fig1_expr(), &fig1_config(), HashVariant::Cardinality, &mut rng);
        let sets = fig1_sets();
        let tagsets: Vec<TagSet> = sets
            .iter()
            .map(|s| build_tagset(s.party, s, &plan.view_for(s.party), &keys.view_for(s.party)).unwrap())
            .collect();
        let ab_values = &plan.regions[&ab].values;
        assert!(ab_values.iter().all(|v| tagsets[0].tags.binary_search(v).is_ok()));
        assert!(ab_values.iter().all(|v| tagsets[1].tags.binary_search(v).is_ok()));
        assert!(ab_values.iter().all(|v| tagsets[2].tags.binary_search(v).is_err()));
        let collisions = region_collisions(&tagsets, 3);
        for (r, b) in &plan.regions {
            assert!(collisions[r] >= b.count);
        }
    }

    #[test]
    fn fig1_tagset_size_for_party_a() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let plan = plan_regions(3, &fig1_expr(), &fig1_config(), &mut rng).unwrap();
        let keys = SharedKeys::generate(3, &fig1_expr(), &fig1_config(), HashVariant::Cardinality, &mut rng);
        let a = InputSet::new(PartyId(1), (0..10).map(|i| format!("e{i}")));
        let ts = build_tagset(PartyId(1), &a, &plan.view_for(PartyId(1)), &keys).unwrap();
        assert_eq!(ts.len(), 10 + 34 + 23 + 12 + 97);
        let empty = InputSet::new(PartyId(1), Vec::<String>::new());
        let ts = build_tagset(PartyId(1), &empty, &plan, &keys).unwrap();
        assert_eq!(ts.len(), 34 + 23 + 12 + 97);
    }

    #[test]
    fn fig1_cardinality_subtracts_173() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let expr = fig1_expr();
        let plan = plan_regions(3, &expr, &fig1_config(), &mut rng).unwrap();
        let declared = plan.declared_totals(&expr);
        assert_eq!(declared.values().sum::<u64>(), 173);
        let keys = SharedKeys::generate(3, &expr, &fig1_config(), HashVariant::Cardinality, &mut rng);
        let sets = fig1_sets();
        let tagsets: Vec<TagSet> = sets
            .iter()
            .map(|s| build_tagset(s.party, s, &plan, &keys).unwrap())
            .collect();
        let collisions = region_collisions(&tagsets, 3);
        let gross: u64 = expr.matching_regions(3).iter().map(|r| collisions[r]).sum();
        assert_eq!(gross, 9 + 173);
        assert_eq!(decider_cardinality(&tagsets, &expr, &declared).unwrap(), 9);

        let empty: Vec<InputSet> = (1..=3).map(|i| InputSet::new(PartyId(i), Vec::<String>::new())).collect();
        let tagsets: Vec<TagSet> = empty
            .iter()
            .map(|s| build_tagset(s.party, s, &plan, &keys).unwrap())
            .collect();
        assert_eq!(decider_cardinality(&tagsets, &expr, &declared).unwrap(), 0);
    }

    #[test]
    fn overdeclared_totals_are_inconsistent() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let expr = dnf("S1 & S2");
        let cfg = HashConfig { size_hint: 1, ..HashConfig::default() };
        let plan = plan_regions(2, &expr, &cfg, &mut rng).unwrap();
        let keys = SharedKeys::generate(2, &expr, &cfg, HashVariant::Cardinality, &mut rng);
        let sets = [InputSet::new(PartyId(1), ["x"]), InputSet::new(PartyId(2), ["y"])];
        let tagsets: Vec<TagSet> = sets.iter().map(|s| build_tagset(s.party, s, &plan, &keys).unwrap()).collect();
        let mut declared = plan.declared_totals(&expr);
        *declared.values_mut().next().unwrap() += 1;
        assert!(matches!(
            decider_cardinality(&tagsets, &expr, &declared),
            Err(HashError::Inconsistent { .. })
        ));
    }

    #[test]
    fn clone_subsets_respect_negations() {
        // S1 & !S3 over three parties: {1,2} would send clones of a
        // {1,2,3} element into matching region 110.
        let subsets = clone_subsets(&dnf("S1 & !S3"), 3);
        assert!(!subsets.contains(&"110".parse().unwrap()));
        assert!(subsets.contains(&"111".parse().unwrap()));
        // pure intersections admit every subset of size two or more
        assert_eq!(clone_subsets(&dnf("S1 & S2 & S3"), 3).len(), 4);
    }

    #[test]
    fn emptiness_variant_is_exact_on_random_instances() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let exprs = ["S1 & S2", "S1 & !S3", "(S1 & S2 & !S3) | (S2 & S3)", "S1 | S2", "!S1 & S2"];
        let cfg = HashConfig { size_hint: 3, ..HashConfig::default() };
        for text in exprs {
            let expr = parse_expression(text).unwrap();
            let d = expr.to_dnf().unwrap();
            for _ in 0..15 {
                let sets: Vec<InputSet> = (1..=3)
                    .map(|i| {
                        InputSet::new(
                            PartyId(i),
                            (0..8).filter(|_| rng.gen_bool(0.4)).map(|e| format!("e{e}")),
                        )
                    })
                    .collect();
                let truth = oracle_evaluate_unbounded(&expr, &sets).unwrap();
                let plan = plan_regions(3, &d, &cfg, &mut rng).unwrap();
                let keys = SharedKeys::generate(3, &d, &cfg, HashVariant::Emptiness, &mut rng);
                let tagsets: Vec<TagSet> = sets
                    .iter()
                    .map(|s| build_tagset(s.party, s, &plan.view_for(s.party), &keys.view_for(s.party)).unwrap())
                    .collect();
                let (empty, excess) = decider_emptiness(&tagsets, &d, &plan.declared_totals(&d)).unwrap();
                assert_eq!(empty, truth.is_empty(), "{text} {sets:?}");
                assert!(excess >= truth.len() as u64);
            }
        }
    }

    #[test]
    fn tags_and_dummies_share_byte_distribution() {
        // chi-square goodness of fit against uniform bytes, 255 degrees of freedom;
        // 330.5 is the 0.999 quantile
        const CRITICAL: f64 = 330.5;
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let hasher = TagHasher::new(&[3u8; 32]).unwrap();
        let chi = |tags: &[Tag]| {
            let mut bins = [0u64; 256];
            for t in tags {
                for b in t.0 {
                    bins[b as usize] += 1;
                }
            }
            let expected = (tags.len() * TAG_LEN) as f64 / 256.0;
            bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum::<f64>()
        };
        let real: Vec<Tag> = (0..4000).map(|i| hasher.tag(format!("elem{i}").as_bytes())).collect();
        let dummy: Vec<Tag> = (0..4000).map(|_| Tag::random(&mut rng)).collect();
        assert!(chi(&real) < CRITICAL, "{}", chi(&real));
        assert!(chi(&dummy) < CRITICAL, "{}", chi(&dummy));
    }

    #[test]
    fn skip_decision_is_shared_by_holders() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let k = ExtraKey::generate((0.05, 0.15), &mut rng);
        let h = TagHasher::new(&k.key).unwrap();
        let skipped = (0..10_000).filter(|i| k.skips(&h, format!("{i}").as_bytes())).count();
        let frac = skipped as f64 / 10_000.0;
        assert!((frac - k.skip_fraction).abs() < 0.02, "{frac} vs {}", k.skip_fraction);
        let h2 = TagHasher::new(&k.key.clone()).unwrap();
        assert!((0..100).all(|i| k.skips(&h, &[i]) == k.skips(&h2, &[i])));
    }

    #[test]
    fn plan_rejects_zero_hint() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let cfg = HashConfig { size_hint: 0, ..HashConfig::default() };
        assert_eq!(
            plan_regions(3, &fig1_expr(), &cfg, &mut rng).unwrap_err(),
            HashError::ZeroSizeHint
        );
        let plan = plan_regions(4, &dnf("S1 & S4"), &HashConfig::default(), &mut rng).unwrap();
        assert_eq!(plan.regions.len(), 15);
        assert!(plan.regions.values().all(|b| (100..=200).contains(&b.count)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const EXPRS: [&str; 4] = ["S1 & S2", "S1 & !S3", "(S1 & S2 & !S3) | (S2 & S3)", "!S1 & S2 & S3"];

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn cardinality_is_exact(
                which in 0..EXPRS.len(),
                members in prop::collection::vec(prop::collection::btree_set(0u8..12, 0..10), 3),
                seed in any::<u64>(),
            ) {
                let expr = parse_expression(EXPRS[which]).unwrap();
                let d = expr.to_dnf().unwrap();
                let sets: Vec<InputSet> = members
                    .iter()
                    .enumerate()
                    .map(|(i, m)| InputSet::new(PartyId(i + 1), m.iter().map(|e| format!("e{e}"))))
                    .collect();
                let truth = oracle_evaluate_unbounded(&expr, &sets).unwrap();
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let cfg = HashConfig { size_hint: 4, ..HashConfig::default() };
                let plan = plan_regions(3, &d, &cfg, &mut rng).unwrap();
                let keys = SharedKeys::generate(3, &d, &cfg, HashVariant::Cardinality, &mut rng);
                let tagsets: Vec<TagSet> = sets
                    .iter()
                    .map(|s| build_tagset(s.party, s, &plan.view_for(s.party), &keys.view_for(s.party)).unwrap())
                    .collect();
                let got = decider_cardinality(&tagsets, &d, &plan.declared_totals(&d)).unwrap();
                prop_assert_eq!(got, truth.len() as u64);
            }

            #[test]
            fn party_views_hide_foreign_region_values(seed in any::<u64>(), party in 1usize..=4) {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let d = dnf("S1 & S2");
                let plan = plan_regions(4, &d, &HashConfig::default(), &mut rng).unwrap();
                let view = plan.view_for(PartyId(party));
                for (r, b) in &view.regions {
                    prop_assert_eq!(b.count, plan.regions[r].count);
                    prop_assert_eq!(b.values.is_empty(), !r.contains(PartyId(party)) || b.count == 0);
                }
            }
        }
    }
}
