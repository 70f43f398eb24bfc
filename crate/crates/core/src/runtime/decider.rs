use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::hardening::{form_check, pair_digest, Tally};
use crate::hash::{decider_cardinality, decider_emptiness, HashVariant, TagSet};
use crate::he::{keygen, KeyPair, OpMeter, PrivateKey};
use crate::protocols::{decide_scalar, decide_vector, decrypts_to_zero, DecisionStats, ProtocolResult};
use crate::roles::{PartyId, Role};
use crate::setops::{DnfExpression, RegionSignature, Universe};

use super::{
    Announcement, Body, DeciderCommand, DeciderOutcome, Envelope, PublicParams, RuntimeError, Submission,
};

/// The external decider. Holds the private key and sees only what parties
/// submit; it has no repository handle.
pub struct DeciderActor {
    rng: ChaCha20Rng,
    meter: Arc<OpMeter>,
    sk: Option<PrivateKey>,
    universe: Option<Universe>,
    n: Option<usize>,
    tally: Tally,
    tagsets: BTreeMap<PartyId, TagSet>,
    declared: Option<BTreeMap<RegionSignature, u64>>,
}

impl DeciderActor {
    pub fn new(rng: ChaCha20Rng) -> Self {
        DeciderActor {
            rng,
            meter: Arc::new(OpMeter::new()),
            sk: None,
            universe: None,
            n: None,
            tally: Tally::default(),
            tagsets: BTreeMap::new(),
            declared: None,
        }
    }

    fn fail(e: impl ToString) -> RuntimeError {
        RuntimeError::actor(Role::Decider, e)
    }

    fn outcome(o: DeciderOutcome) -> Envelope {
        Envelope::new(Role::Decider, Role::Coordinator, Body::Outcome(o))
    }

    fn sk(&self) -> Result<&PrivateKey, RuntimeError> {
        self.sk.as_ref().ok_or_else(|| Self::fail("no key generated"))
    }

    fn universe(&self) -> Result<&Universe, RuntimeError> {
        self.universe.as_ref().ok_or_else(|| Self::fail("no universe published"))
    }

    fn setup(&mut self, n: usize, universe: Universe, key_bits: usize) -> Result<Vec<Envelope>, RuntimeError> {
        if n < 2 {
            return Err(Self::fail(format!("at least two parties are required, got {n}")));
        }
        if universe.is_empty() {
            return Err(Self::fail("empty universe"));
        }
        let KeyPair { public, private } = keygen(key_bits, &mut self.rng).map_err(Self::fail)?;
        let finalizer = PartyId(self.rng.gen_range(1..=n));
        self.sk = Some(private.with_meter(Arc::clone(&self.meter)));
        self.universe = Some(universe.clone());
        self.n = Some(n);
        self.tally = Tally::default();
        let params = PublicParams {
            n,
            universe,
            pk: public.clone(),
            finalizer,
        };
        let mut out: Vec<Envelope> = PartyId::all(n)
            .map(|p| {
                Envelope::new(
                    Role::Decider,
                    Role::Party(p),
                    Body::Announce(Announcement::Params(params.clone())),
                )
            })
            .collect();
        out.push(Self::outcome(DeciderOutcome::Ready { pk: public, finalizer }));
        Ok(out)
    }

    fn decide_hash(&mut self, n: usize, expr: DnfExpression, variant: HashVariant) -> Result<Vec<Envelope>, RuntimeError> {
        let tagsets: Vec<TagSet> = std::mem::take(&mut self.tagsets).into_values().collect();
        let declared = self
            .declared
            .take()
            .ok_or_else(|| Self::fail("no dummy totals declared"))?;
        if tagsets.len() != n {
            return Err(Self::fail(format!("expected {n} tag sets, received {}", tagsets.len())));
        }
        let stats = DecisionStats {
            cells: tagsets.iter().map(|t| t.len() as u64).sum(),
            zeros: 0,
        };
        let (result, excess) = match variant {
            HashVariant::Cardinality => {
                let count = decider_cardinality(&tagsets, &expr, &declared).map_err(Self::fail)?;
                (ProtocolResult::Cardinality { count }, Some(count))
            }
            HashVariant::Emptiness => {
                let (empty, excess) = decider_emptiness(&tagsets, &expr, &declared).map_err(Self::fail)?;
                (ProtocolResult::Emptiness { empty }, Some(excess))
            }
        };
        Ok(vec![Self::outcome(DeciderOutcome::Result { result, stats, excess })])
    }

    fn command(&mut self, cmd: DeciderCommand) -> Result<Vec<Envelope>, RuntimeError> {
        match cmd {
            DeciderCommand::Setup { n, universe, key_bits } => self.setup(n, universe, key_bits),
            DeciderCommand::DecideHash { n, expr, variant } => self.decide_hash(n, expr, variant),
            DeciderCommand::Conclude { expr } => {
                let (verdict, result) = std::mem::take(&mut self.tally).conclude(&expr);
                Ok(vec![Self::outcome(DeciderOutcome::Verdict { verdict, result })])
            }
            DeciderCommand::ReportCounts => Ok(vec![Self::outcome(DeciderOutcome::Counts {
                counts: self.meter.snapshot(),
            })]),
        }
    }

    fn submission(&mut self, from: PartyId, sub: Submission) -> Result<Vec<Envelope>, RuntimeError> {
        match sub {
            Submission::Vector { delivery, cells } => {
                let (result, stats) =
                    decide_vector(self.sk()?, &cells, delivery, self.universe()?).map_err(Self::fail)?;
                Ok(vec![Self::outcome(DeciderOutcome::Result {
                    result,
                    stats,
                    excess: None,
                })])
            }
            Submission::Scalar { cell } => {
                let result = decide_scalar(self.sk()?, &cell).map_err(Self::fail)?;
                let zeros = u64::from(result == ProtocolResult::Emptiness { empty: false });
                Ok(vec![Self::outcome(DeciderOutcome::Result {
                    result,
                    stats: DecisionStats { cells: 1, zeros },
                    excess: None,
                })])
            }
            Submission::TagSet(ts) => {
                if ts.party != from {
                    return Err(Self::fail(format!("{from} submitted a tag set labelled {}", ts.party)));
                }
                self.tagsets.insert(from, ts);
                Ok(Vec::new())
            }
            Submission::DummyTotals { totals } => {
                self.declared = Some(totals);
                Ok(Vec::new())
            }
            Submission::Pairs { repetition, pairs } => {
                let bad_cells = form_check(self.sk()?, &pairs).map_err(Self::fail)?;
                let digest = pair_digest(&pairs);
                let n = self.tally_parties()?;
                let mut out: Vec<Envelope> = PartyId::all(n)
                    .map(|p| {
                        Envelope::new(
                            Role::Decider,
                            Role::Party(p),
                            Body::Announce(Announcement::PairDigest {
                                repetition,
                                digest: digest.clone(),
                            }),
                        )
                    })
                    .collect();
                out.push(Self::outcome(DeciderOutcome::PairCheck {
                    repetition,
                    leader: from,
                    bad_cells,
                }));
                Ok(out)
            }
            Submission::HardenedZ {
                repetition,
                delivery,
                cells,
            } => {
                let (result, _) =
                    decide_vector(self.sk()?, &cells, delivery, self.universe()?).map_err(Self::fail)?;
                self.tally.results.entry(repetition).or_default().insert(from, result);
                Ok(Vec::new())
            }
            Submission::AuditProduct {
                repetition,
                clause,
                product,
            } => {
                let zero = decrypts_to_zero(self.sk()?, &product).map_err(Self::fail)?;
                self.tally.audits.insert((repetition, from, clause), zero);
                Ok(Vec::new())
            }
        }
    }

    fn tally_parties(&self) -> Result<usize, RuntimeError> {
        self.n.ok_or_else(|| Self::fail("no party count known"))
    }
}

impl super::Actor for DeciderActor {
    fn role(&self) -> Role {
        Role::Decider
    }

    fn handle(&mut self, envelope: Envelope) -> Result<Vec<Envelope>, RuntimeError> {
        match (envelope.from, envelope.body) {
            (Role::Coordinator, Body::Command(c)) => self.command(c),
            (Role::Party(p), Body::Submit(s)) => self.submission(p, s),
            (from, body) => Err(RuntimeError::Unexpected {
                role: Role::Decider,
                expected: "command from the coordinator or submission from a party",
                got: format!("{} from {from}", body.kind_name()),
            }),
        }
    }
}
