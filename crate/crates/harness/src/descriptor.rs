//! TOML run descriptors and their resolution into a runnable [`Scenario`].
//!
//! ```toml
//! protocol = "generic_he"
//! mode = "cardinality"
//! expression = "(S1 | S2) & (!S1 | S3)"
//! universe = "universe.txt"
//! sets = ["s1.txt", "s2.txt", "s3.txt"]
//! seed = 7
//! ```
//!
//! Relative paths resolve against the descriptor's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use pso_core::hardening::{Adversary, Cheat};
use pso_core::hash::{HashConfig, HashVariant};
use pso_core::he::MIN_KEY_BITS;
use pso_core::protocols::{CloneParams, HeProtocol, ProtocolResult, ResultMode};
use pso_core::roles::PartyId;
use pso_core::runtime::RunOptions;
use pso_core::setops::{
    oracle_evaluate, oracle_evaluate_unbounded, parse_element_list, parse_expression, parse_sets_config,
    CnfExpression, InputSet, RegionSignature, SetExpression, Universe,
};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Union,
    Intersection,
    GenericHe,
    HashCardinality,
    HashEmptiness,
}

impl ProtocolKind {
    pub fn is_hash(self) -> bool {
        matches!(self, ProtocolKind::HashCardinality | ProtocolKind::HashEmptiness)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub party: usize,
    /// `i`..`iv`, or the snake_case strategy name.
    pub strategy: String,
    pub element: String,
    pub clause: Option<usize>,
    pub repetition: Option<usize>,
    pub force_zero: Option<bool>,
}

impl AdversarySpec {
    pub fn to_adversary(&self) -> Result<Adversary, HarnessError> {
        let element = self.element.clone();
        let cheat = match self.strategy.as_str() {
            "i" | "input_inconsistency" => Cheat::InputInconsistency {
                element,
                repetition: self.repetition.unwrap_or(1),
            },
            "ii" | "wrong_complement" => Cheat::WrongComplement { element },
            "iii" | "corrupt_cell" => Cheat::CorruptCell {
                clause: self.clause.unwrap_or(1),
                element,
            },
            "iv" | "bad_final_vector" => Cheat::BadFinalVector {
                element,
                force_zero: self.force_zero.unwrap_or(true),
            },
            other => return Err(HarnessError::Descriptor(format!("unknown cheat strategy `{other}`"))),
        };
        Ok(Adversary {
            party: PartyId(self.party),
            cheat,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashSettings {
    pub size_hint: Option<u64>,
    pub multiplier: Option<u64>,
    pub extra_keys: Option<usize>,
    pub skip_min: Option<f64>,
    pub skip_max: Option<f64>,
    /// Region signature (`"110"`) to dummy count.
    pub fixed_counts: Option<BTreeMap<RegionSignature, u64>>,
}

impl HashSettings {
    fn to_config(&self) -> HashConfig {
        let d = HashConfig::default();
        HashConfig {
            size_hint: self.size_hint.unwrap_or(d.size_hint),
            multiplier: self.multiplier.unwrap_or(d.multiplier),
            extra_keys: self.extra_keys.unwrap_or(d.extra_keys),
            skip_range: (
                self.skip_min.unwrap_or(d.skip_range.0),
                self.skip_max.unwrap_or(d.skip_range.1),
            ),
            fixed_counts: self.fixed_counts.clone(),
        }
    }
}

/// The on-disk descriptor, before any file is read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDescriptor {
    pub protocol: ProtocolKind,
    /// Defaults to `elements` for HE protocols and to the variant's own
    /// mode for hash protocols.
    pub mode: Option<ResultMode>,
    pub expression: Option<String>,
    pub universe: Option<PathBuf>,
    #[serde(default)]
    pub sets: Vec<PathBuf>,
    /// Sectioned file holding all sets (and optionally the universe).
    pub sets_file: Option<PathBuf>,
    pub n: Option<usize>,
    pub key_bits: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub hardened: bool,
    #[serde(default)]
    pub randomize_order: bool,
    pub repetitions: Option<usize>,
    pub adversary: Option<AdversarySpec>,
    pub hash: Option<HashSettings>,
    pub clones: Option<CloneParams>,
}

impl RunDescriptor {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Descriptor(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Reads every referenced file and validates the result.
    pub fn resolve(&self, base: &Path) -> Result<Scenario, HarnessError> {
        let read = |p: &Path| {
            let full = base.join(p);
            fs::read_to_string(&full).map_err(|e| HarnessError::io(full, e))
        };

        let mut universe = None;
        let mut sets = Vec::new();
        if let Some(f) = &self.sets_file {
            if !self.sets.is_empty() {
                return Err(HarnessError::Descriptor("give either `sets` or `sets_file`, not both".into()));
            }
            let cfg = parse_sets_config(&read(f)?)?;
            universe = cfg.universe;
            sets = cfg.sets;
        } else {
            for (i, p) in self.sets.iter().enumerate() {
                sets.push(InputSet::new(PartyId(i + 1), parse_element_list(&read(p)?)));
            }
        }
        if let Some(p) = &self.universe {
            if self.protocol.is_hash() {
                return Err(HarnessError::Descriptor("hash protocols take no universe".into()));
            }
            universe = Some(Universe::new(parse_element_list(&read(p)?))?);
        }
        if let Some(n) = self.n {
            if n != sets.len() {
                return Err(HarnessError::Descriptor(format!(
                    "descriptor declares n = {n} but lists {} sets",
                    sets.len()
                )));
            }
        }

        let mode = match (self.protocol, self.mode) {
            (_, Some(m)) => m,
            (ProtocolKind::HashCardinality, None) => ResultMode::Cardinality,
            (ProtocolKind::HashEmptiness, None) => ResultMode::Emptiness,
            (_, None) => ResultMode::Elements,
        };
        let expression = self.expression.as_deref().map(parse_expression).transpose()?;

        let d = RunOptions::default();
        let scenario = Scenario {
            protocol: self.protocol,
            mode,
            expression,
            universe,
            sets,
            options: RunOptions {
                key_bits: self.key_bits.unwrap_or(d.key_bits),
                seed: self.seed,
                randomize_order: self.randomize_order,
                clones: self.clones.unwrap_or(d.clones),
            },
            hardened: self.hardened,
            adversary: self.adversary.as_ref().map(AdversarySpec::to_adversary).transpose()?,
            hash: self.hash.clone().unwrap_or_default().to_config(),
            repetitions: self.repetitions.unwrap_or(1),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// [`load`](Self::load) followed by [`resolve`](Self::resolve) relative
    /// to the descriptor's directory.
    pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::load(path)?.resolve(base)
    }
}

/// A fully loaded, validated run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub protocol: ProtocolKind,
    pub mode: ResultMode,
    pub expression: Option<SetExpression>,
    /// Required for HE protocols, ignored by hash protocols.
    pub universe: Option<Universe>,
    pub sets: Vec<InputSet>,
    pub options: RunOptions,
    pub hardened: bool,
    pub adversary: Option<Adversary>,
    pub hash: HashConfig,
    /// Benchmark repetitions; `run` reports the fastest.
    pub repetitions: usize,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Descriptor(msg.into())
}

impl Scenario {
    /// A semi-honest HE scenario with default options and the given seed.
    pub fn he(
        protocol: ProtocolKind,
        mode: ResultMode,
        expression: Option<SetExpression>,
        universe: Universe,
        sets: Vec<InputSet>,
        seed: Option<u64>,
    ) -> Self {
        Scenario {
            protocol,
            mode,
            expression,
            universe: Some(universe),
            sets,
            options: RunOptions {
                seed,
                ..RunOptions::default()
            },
            hardened: false,
            adversary: None,
            hash: HashConfig::default(),
            repetitions: 1,
        }
    }

    /// A hash-protocol scenario with default options.
    pub fn hash(variant: HashVariant, expression: SetExpression, sets: Vec<InputSet>, seed: Option<u64>) -> Self {
        let (protocol, mode) = match variant {
            HashVariant::Cardinality => (ProtocolKind::HashCardinality, ResultMode::Cardinality),
            HashVariant::Emptiness => (ProtocolKind::HashEmptiness, ResultMode::Emptiness),
        };
        Scenario {
            protocol,
            mode,
            expression: Some(expression),
            universe: None,
            sets,
            options: RunOptions {
                seed,
                ..RunOptions::default()
            },
            hardened: false,
            adversary: None,
            hash: HashConfig::default(),
            repetitions: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let n = self.n();
        if n < 2 {
            return Err(invalid(format!("at least two parties are required, got {n}")));
        }
        for (i, s) in self.sets.iter().enumerate() {
            if s.party != PartyId(i + 1) {
                return Err(invalid(format!("set {} is labelled {}", i + 1, s.party)));
            }
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be at least 1"));
        }
        if self.protocol.is_hash() {
            let expected = match self.protocol {
                ProtocolKind::HashCardinality => ResultMode::Cardinality,
                _ => ResultMode::Emptiness,
            };
            if self.mode != expected {
                return Err(invalid(format!(
                    "{:?} cannot produce {} results",
                    self.protocol, self.mode
                )));
            }
            if self.hardened || self.adversary.is_some() {
                return Err(invalid("hardening applies to HE protocols only"));
            }
            let expr = self
                .expression
                .as_ref()
                .ok_or_else(|| invalid("hash protocols need an expression"))?;
            expr.to_dnf()?.check_parties(n)?;
            self.hash.validate()?;
            return Ok(());
        }

        let universe = self
            .universe
            .as_ref()
            .ok_or_else(|| invalid("HE protocols need a universe"))?;
        if universe.is_empty() {
            return Err(invalid("universe is empty"));
        }
        for s in &self.sets {
            universe.membership(s)?;
        }
        if self.options.key_bits < MIN_KEY_BITS {
            return Err(invalid(format!(
                "key size {} is below the minimum of {MIN_KEY_BITS} bits",
                self.options.key_bits
            )));
        }
        match (self.protocol, &self.expression) {
            (ProtocolKind::GenericHe, None) => return Err(invalid("generic_he needs an expression")),
            (ProtocolKind::GenericHe, Some(e)) => e.to_cnf()?.check_parties(n)?,
            (_, Some(_)) => return Err(invalid("union and intersection take no expression")),
            (_, None) => {}
        }
        if let Some(adv) = &self.adversary {
            if !self.hardened {
                return Err(invalid("an adversary requires `hardened = true`"));
            }
            if adv.party.0 == 0 || adv.party.0 > n {
                return Err(invalid(format!("adversary {} is not a party", adv.party)));
            }
            let (element, repetition, clause) = match &adv.cheat {
                Cheat::InputInconsistency { element, repetition } => (element, Some(*repetition), None),
                Cheat::WrongComplement { element } => (element, None, None),
                Cheat::CorruptCell { clause, element } => (element, None, Some(*clause)),
                Cheat::BadFinalVector { element, .. } => (element, None, None),
            };
            if universe.position(element).is_none() {
                return Err(invalid(format!("cheat element `{element}` is not in the universe")));
            }
            if repetition.is_some_and(|r| r == 0 || r > n) {
                return Err(invalid("cheat repetition out of range"));
            }
            let beta = self.he_protocol()?.as_cnf(n).beta();
            if clause.is_some_and(|k| k == 0 || k > beta) {
                return Err(invalid("cheat clause out of range"));
            }
        }
        Ok(())
    }

    pub fn he_protocol(&self) -> Result<HeProtocol, HarnessError> {
        Ok(match self.protocol {
            ProtocolKind::Union => HeProtocol::Union,
            ProtocolKind::Intersection => HeProtocol::Intersection,
            ProtocolKind::GenericHe => HeProtocol::Generic(
                self.expression
                    .as_ref()
                    .ok_or_else(|| invalid("generic_he needs an expression"))?
                    .to_cnf()?,
            ),
            _ => return Err(invalid("not an HE protocol")),
        })
    }

    pub fn hash_variant(&self) -> Option<HashVariant> {
        match self.protocol {
            ProtocolKind::HashCardinality => Some(HashVariant::Cardinality),
            ProtocolKind::HashEmptiness => Some(HashVariant::Emptiness),
            _ => None,
        }
    }

    /// The expression the run computes, in plaintext terms.
    pub fn target(&self) -> Result<SetExpression, HarnessError> {
        Ok(match self.protocol {
            ProtocolKind::Union => SetExpression::Cnf(CnfExpression::union_of(self.n())),
            ProtocolKind::Intersection => SetExpression::Cnf(CnfExpression::intersection_of(self.n())),
            _ => self
                .expression
                .clone()
                .ok_or_else(|| invalid("missing expression"))?,
        })
    }

    /// The oracle's element set: complements are relative to the universe
    /// for HE protocols and to the union of inputs for hash protocols.
    pub fn oracle_elements(&self) -> Result<BTreeSet<String>, HarnessError> {
        let target = self.target()?;
        Ok(match &self.universe {
            Some(u) if !self.protocol.is_hash() => oracle_evaluate(&target, &self.sets, u)?,
            _ => oracle_evaluate_unbounded(&target, &self.sets)?,
        })
    }

    pub fn expected(&self) -> Result<ProtocolResult, HarnessError> {
        Ok(ProtocolResult::from_elements(self.oracle_elements()?, self.mode))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversary_strategies_accept_numerals_and_names() {
        let mut spec = AdversarySpec {
            party: 2,
            strategy: "iii".into(),
            element: "a1".into(),
            clause: Some(2),
            ..Default::default()
        };
        assert_eq!(
            spec.to_adversary().unwrap().cheat,
            Cheat::CorruptCell {
                clause: 2,
                element: "a1".into()
            }
        );
        spec.strategy = "bad_final_vector".into();
        assert_eq!(spec.to_adversary().unwrap().cheat.kind(), "iv");
        spec.strategy = "v".into();
        assert!(spec.to_adversary().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunDescriptor::from_toml("protocol = \"union\"\ncolour = 1\n").is_err());
        assert!(RunDescriptor::from_toml("protocol = \"xor\"\n").is_err());
    }

    #[test]
    fn hash_settings_override_defaults_field_by_field() {
        let d = RunDescriptor::from_toml(
            "protocol = \"hash_cardinality\"\n[hash]\nmultiplier = 3\n[hash.fixed_counts]\n\"10\" = 5\n",
        )
        .unwrap();
        let cfg = d.hash.unwrap().to_config();
        assert_eq!(cfg.multiplier, 3);
        assert_eq!(cfg.size_hint, HashConfig::default().size_hint);
        assert_eq!(cfg.fixed_counts.unwrap()[&"10".parse::<RegionSignature>().unwrap()], 5);
    }
}
