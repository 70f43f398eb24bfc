//! Actor runtime: message schema, the party and decider actors, an
//! in-process transport and the coordinator scripts that drive each
//! protocol.
//!
//! Actors only exchange [`Envelope`]s and, for parties, share the
//! [`Repository`]. Delivery is FIFO from a single queue and the coordinator
//! issues one task at a time, so a seeded run is reproducible bit for bit
//! regardless of how the transport is implemented.

mod coordinator;
mod decider;
mod party;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hardening::{Adversary, Verdict};
use crate::hash::{ExtraKey, HashConfig, HashVariant, RegionBudget, TagSet};
use crate::he::{Ciphertext, OpCounts, PublicKey};
use crate::protocols::{CloneParams, Delivery, DecisionStats, ProtocolPlan, ProtocolResult};
use crate::repository::Repository;
use crate::roles::{PartyId, Role};
use crate::setops::{CnfExpression, DnfExpression, InputSet, RegionSignature, Universe};

pub use coordinator::{protocol_name, Coordinator, RunOptions, SessionReport, Timings};
pub use decider::DeciderActor;
pub use party::PartyActor;

/// Version byte of the message schema.
pub const SCHEMA_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("{role} failed: {message}")]
    Actor { role: Role, message: String },
    #[error("no actor for {0}")]
    NoRoute(Role),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("expected {expected} from {role}, got {got}")]
    Unexpected {
        role: Role,
        expected: &'static str,
        got: String,
    },
    #[error("invalid run: {0}")]
    Invalid(String),
}

impl RuntimeError {
    pub(crate) fn actor(role: Role, e: impl ToString) -> Self {
        RuntimeError::Actor {
            role,
            message: e.to_string(),
        }
    }
}

/// Parameters the decider publishes to every party.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicParams {
    pub n: usize,
    pub universe: Universe,
    pub pk: PublicKey,
    pub finalizer: PartyId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeciderCommand {
    Setup { n: usize, universe: Universe, key_bits: usize },
    DecideHash { n: usize, expr: DnfExpression, variant: HashVariant },
    Conclude { expr: CnfExpression },
    ReportCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeciderOutcome {
    Ready { pk: PublicKey, finalizer: PartyId },
    Result {
        result: ProtocolResult,
        stats: DecisionStats,
        excess: Option<u64>,
    },
    PairCheck { repetition: usize, leader: PartyId, bad_cells: Vec<usize> },
    Verdict { verdict: Verdict, result: Option<ProtocolResult> },
    Counts { counts: OpCounts },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Announcement {
    Params(PublicParams),
    PairDigest { repetition: usize, digest: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PartyTask {
    Offline { plan: ProtocolPlan, create: Vec<String> },
    Online,
    Finalize { clones: CloneParams },
    HashSetup {
        n: usize,
        expr: DnfExpression,
        config: HashConfig,
        variant: HashVariant,
    },
    HashSubmit,
    HashDeclare { expr: DnfExpression },
    HardenedOffline { repetition: usize, plan: ProtocolPlan },
    HardenedInit { repetition: usize },
    HardenedScale { repetition: usize },
    HardenedVerify { repetition: usize },
    HardenedOnline { repetition: usize },
    HardenedSubmit { repetition: usize, clones: CloneParams },
    HardenedAudit { repetition: usize },
    ReportCounts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PartyReport {
    Done,
    /// Pool sizes per vector label after the offline phase: (enc(0), enc(r)).
    Pools { sizes: BTreeMap<String, (usize, usize)> },
    Verification { repetition: usize, issues: Vec<String> },
    Counts { counts: OpCounts },
}

/// Material exchanged among parties while setting up the hash protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PeerMessage {
    CommonKey {
        #[serde(with = "hex_vec")]
        key: Vec<u8>,
    },
    RegionMaterial { region: RegionSignature, budget: RegionBudget },
    RegionCount { region: RegionSignature, count: u64 },
    SubsetKeys { subset: RegionSignature, keys: Vec<ExtraKey> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Submission {
    Vector { delivery: Delivery, cells: Vec<Ciphertext> },
    Scalar { cell: Ciphertext },
    TagSet(TagSet),
    DummyTotals { totals: BTreeMap<RegionSignature, u64> },
    Pairs { repetition: usize, pairs: Vec<[Ciphertext; 2]> },
    HardenedZ {
        repetition: usize,
        delivery: Delivery,
        cells: Vec<Ciphertext>,
    },
    AuditProduct {
        repetition: usize,
        clause: usize,
        product: Ciphertext,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Body {
    Command(DeciderCommand),
    Outcome(DeciderOutcome),
    Announce(Announcement),
    Task(PartyTask),
    Report(PartyReport),
    Peer(PeerMessage),
    Submit(Submission),
}

impl Body {
    /// Stable one-byte tag for framing.
    pub fn kind(&self) -> u8 {
        match self {
            Body::Command(_) => 1,
            Body::Outcome(_) => 2,
            Body::Announce(_) => 3,
            Body::Task(_) => 4,
            Body::Report(_) => 5,
            Body::Peer(_) => 6,
            Body::Submit(_) => 7,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Body::Command(_) => "command",
            Body::Outcome(_) => "outcome",
            Body::Announce(_) => "announce",
            Body::Task(_) => "task",
            Body::Report(_) => "report",
            Body::Peer(_) => "peer",
            Body::Submit(_) => "submit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub from: Role,
    pub to: Role,
    pub body: Body,
}

impl Envelope {
    pub fn new(from: Role, to: Role, body: Body) -> Self {
        Envelope { from, to, body }
    }
}

/// A participant that reacts to messages.
pub trait Actor: Send {
    fn role(&self) -> Role;

    /// Handles one envelope and returns the messages it sends in response.
    fn handle(&mut self, envelope: Envelope) -> Result<Vec<Envelope>, RuntimeError>;
}

/// Delivers a coordinator message and everything it triggers.
pub trait Transport {
    /// Runs to quiescence and returns the envelopes addressed to the
    /// coordinator, in delivery order.
    fn exchange(&mut self, envelope: Envelope) -> Result<Vec<Envelope>, RuntimeError>;
}

type Observer = Box<dyn FnMut(&Envelope) + Send>;

/// Direct in-process delivery from a FIFO queue.
pub struct LocalTransport {
    actors: BTreeMap<Role, Box<dyn Actor>>,
    observer: Option<Observer>,
}

impl LocalTransport {
    pub fn new(actors: Vec<Box<dyn Actor>>) -> Self {
        LocalTransport {
            actors: actors.into_iter().map(|a| (a.role(), a)).collect(),
            observer: None,
        }
    }

    /// Calls `f` on every delivered envelope, including coordinator traffic.
    pub fn with_observer(mut self, f: impl FnMut(&Envelope) + Send + 'static) -> Self {
        self.observer = Some(Box::new(f));
        self
    }
}

impl Transport for LocalTransport {
    fn exchange(&mut self, envelope: Envelope) -> Result<Vec<Envelope>, RuntimeError> {
        let mut queue = VecDeque::from([envelope]);
        let mut out = Vec::new();
        while let Some(env) = queue.pop_front() {
            if let Some(obs) = self.observer.as_mut() {
                obs(&env);
            }
            if env.to == Role::Coordinator {
                out.push(env);
                continue;
            }
            let actor = self.actors.get_mut(&env.to).ok_or(RuntimeError::NoRoute(env.to))?;
            let role = actor.role();
            for mut reply in actor.handle(env)? {
                reply.from = role;
                queue.push_back(reply);
            }
        }
        Ok(out)
    }
}

/// Deterministic per-role randomness derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    /// Uses `seed`, or a fresh seed from the operating system.
    pub fn new(seed: Option<u64>) -> Self {
        SeedPlan {
            master: seed.unwrap_or_else(|| rand::rngs::OsRng.next_u64()),
        }
    }

    pub fn stream(&self, role: Role, n: usize) -> ChaCha20Rng {
        let id = match role {
            Role::Decider => 0,
            Role::Party(p) => p.0 as u64,
            Role::Coordinator => n as u64 + 1,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream(id);
        rng
    }
}

/// Builds a cluster on a [`LocalTransport`] and runs `script` against it.
pub fn run_local<F>(
    spec: &ClusterSpec,
    options: &RunOptions,
    script: F,
) -> Result<(SessionReport, Arc<Repository>), RuntimeError>
where
    F: FnOnce(&mut Coordinator, &mut dyn Transport) -> Result<SessionReport, RuntimeError>,
{
    let Cluster {
        actors,
        mut coordinator,
        repository,
    } = spec.build(options)?;
    let mut transport = LocalTransport::new(actors);
    let report = script(&mut coordinator, &mut transport)?;
    Ok((report, repository))
}

/// Everything needed to instantiate one run's actors.
#[derive(Clone, Debug)]
pub struct ClusterSpec {
    pub sets: Vec<InputSet>,
    /// Length of repository vectors (the universe size for HE protocols).
    pub vector_len: usize,
    pub adversary: Option<Adversary>,
}

/// Actors plus the coordinator that drives them.
pub struct Cluster {
    pub actors: Vec<Box<dyn Actor>>,
    pub coordinator: Coordinator,
    pub repository: Arc<Repository>,
}

impl ClusterSpec {
    pub fn build(&self, options: &RunOptions) -> Result<Cluster, RuntimeError> {
        let n = self.sets.len();
        if n < 2 {
            return Err(RuntimeError::Invalid(format!(
                "at least two parties are required, got {n}"
            )));
        }
        for (i, s) in self.sets.iter().enumerate() {
            if s.party != PartyId(i + 1) {
                return Err(RuntimeError::Invalid(format!(
                    "set {} belongs to {}, expected {}",
                    i + 1,
                    s.party,
                    PartyId(i + 1)
                )));
            }
        }
        if let Some(adv) = &self.adversary {
            if adv.party.0 == 0 || adv.party.0 > n {
                return Err(RuntimeError::Invalid(format!("adversary {} is not a party", adv.party)));
            }
        }
        let seeds = SeedPlan::new(options.seed);
        let repository = Arc::new(Repository::new(self.vector_len.max(1)));
        let mut actors: Vec<Box<dyn Actor>> = vec![Box::new(DeciderActor::new(seeds.stream(Role::Decider, n)))];
        for s in &self.sets {
            let cheat = self
                .adversary
                .as_ref()
                .filter(|a| a.party == s.party)
                .map(|a| a.cheat.clone());
            actors.push(Box::new(PartyActor::new(
                s.clone(),
                Arc::clone(&repository),
                seeds.stream(Role::Party(s.party), n),
                cheat,
            )));
        }
        let coordinator = Coordinator::new(n, seeds.stream(Role::Coordinator, n), options.clone());
        Ok(Cluster {
            actors,
            coordinator,
            repository,
        })
    }
}

mod hex_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
