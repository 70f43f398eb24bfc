use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;

use crate::hardening::{
    audit_product, leader_init_cells, leader_of, pair_digest, random_scalars, shuffle_pairs, Cheat,
};
use crate::hash::{
    build_tagset, clone_subsets, ExtraKey, HashConfig, HashVariant, RegionBudget, RegionPlan,
    SharedKeys,
};
use crate::he::{Ciphertext, OpMeter, PublicKey};
use crate::protocols::{
    apply_rule, combine, initial_cells, literal_input, prepare_delivery, CellRule, CloneParams,
    Delivery, Pool, ProtocolError, ProtocolPlan, VectorPlan,
};
use crate::repository::{RepoError, Repository, WriteSession};
use crate::roles::{PartyId, Role};
use crate::setops::{DnfExpression, InputSet, Literal, RegionSignature};

use super::{
    Announcement, Body, Envelope, PartyReport, PartyTask, PeerMessage, PublicParams, RuntimeError,
    Submission,
};

#[derive(Default)]
struct HashState {
    common: Option<Vec<u8>>,
    regions: BTreeMap<RegionSignature, RegionBudget>,
    extra: BTreeMap<RegionSignature, Vec<ExtraKey>>,
    n: usize,
}

#[derive(Default)]
struct Repetition {
    plan: Option<ProtocolPlan>,
    pools: BTreeMap<String, Pool>,
    digest: Option<String>,
    /// Membership used in this repetition, per universe position.
    membership: Vec<bool>,
}

/// An input-holding party.
pub struct PartyActor {
    id: PartyId,
    set: InputSet,
    repo: Arc<Repository>,
    rng: ChaCha20Rng,
    cheat: Option<Cheat>,
    meter: Arc<OpMeter>,
    params: Option<PublicParams>,
    plan: Option<ProtocolPlan>,
    pools: BTreeMap<String, Pool>,
    hash: HashState,
    reps: BTreeMap<usize, Repetition>,
}

fn repo_abort(e: ProtocolError) -> RepoError {
    match e {
        ProtocolError::Repo(r) => r,
        other => RepoError::Aborted(other.to_string()),
    }
}

fn plus_label(rep: usize) -> String {
    format!("I+@{rep}")
}

fn minus_label(rep: usize) -> String {
    format!("I-@{rep}")
}

fn scalar_label(rep: usize) -> String {
    format!("a@{rep}")
}

/// Clause number of a `W^k` or `W^k@r` label.
fn clause_of(label: &str) -> Option<usize> {
    label
        .strip_prefix("W^")?
        .split('@')
        .next()?
        .parse()
        .ok()
}

impl PartyActor {
    pub fn new(set: InputSet, repo: Arc<Repository>, rng: ChaCha20Rng, cheat: Option<Cheat>) -> Self {
        PartyActor {
            id: set.party,
            set,
            repo,
            rng,
            cheat,
            meter: Arc::new(OpMeter::new()),
            params: None,
            plan: None,
            pools: BTreeMap::new(),
            hash: HashState::default(),
            reps: BTreeMap::new(),
        }
    }

    fn me(&self) -> Role {
        Role::Party(self.id)
    }

    fn fail(&self, e: impl ToString) -> RuntimeError {
        RuntimeError::actor(self.me(), e)
    }

    fn params(&self) -> Result<&PublicParams, RuntimeError> {
        self.params
            .as_ref()
            .ok_or_else(|| self.fail("no public parameters received"))
    }

    fn pk(&self) -> Result<PublicKey, RuntimeError> {
        Ok(self.params()?.pk.clone())
    }

    fn to_coordinator(&self, report: PartyReport) -> Envelope {
        Envelope::new(self.me(), Role::Coordinator, Body::Report(report))
    }

    fn to_decider(&self, submission: Submission) -> Envelope {
        Envelope::new(self.me(), Role::Decider, Body::Submit(submission))
    }

    fn create(&self, plan: &ProtocolPlan, vp: &VectorPlan, cells: Vec<Ciphertext>) -> Result<(), RuntimeError> {
        let r = if plan.scalar {
            let cell = cells
                .into_iter()
                .next()
                .ok_or_else(|| self.fail("empty scalar plan"))?;
            self.repo.create_scalar(self.me(), &vp.label, cell)
        } else {
            self.repo.create_vector(self.me(), &vp.label, cells)
        };
        r.map_err(|e| self.fail(e))
    }

    fn fill_pools(&mut self, plan: &ProtocolPlan) -> Result<BTreeMap<String, Pool>, RuntimeError> {
        let pk = self.pk()?;
        let mut pools = BTreeMap::new();
        for vp in plan.attended_by(self.id) {
            pools.insert(vp.label.clone(), Pool::fill(&vp.label, vp.len, &pk, &mut self.rng));
        }
        Ok(pools)
    }

    fn pool_sizes(pools: &BTreeMap<String, Pool>) -> BTreeMap<String, (usize, usize)> {
        pools.iter().map(|(l, p)| (l.clone(), p.remaining())).collect()
    }

    /// Membership per universe position, honest.
    fn membership(&self) -> Result<Vec<bool>, RuntimeError> {
        self.params()?
            .universe
            .membership(&self.set)
            .map_err(|e| self.fail(e))
    }

    fn position(&self, element: &str) -> Result<usize, RuntimeError> {
        self.params()?
            .universe
            .position(element)
            .ok_or_else(|| self.fail(format!("cheat target {element} is not in the universe")))
    }

    // ---- semi-honest HE protocols ----

    fn offline(&mut self, plan: ProtocolPlan, create: Vec<String>) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        for label in &create {
            let vp = plan
                .vector(label)
                .ok_or_else(|| self.fail(format!("plan has no vector {label}")))?;
            let cells = initial_cells(vp, &pk, &mut self.rng).map_err(|e| self.fail(e))?;
            self.create(&plan, vp, cells)?;
        }
        self.pools = self.fill_pools(&plan)?;
        let sizes = Self::pool_sizes(&self.pools);
        self.plan = Some(plan);
        Ok(vec![self.to_coordinator(PartyReport::Pools { sizes })])
    }

    fn holds(&self, plan: &ProtocolPlan, lit: Literal, membership: &[bool]) -> Vec<bool> {
        if plan.scalar {
            vec![!self.set.is_empty()]
        } else {
            membership.iter().map(|m| lit.admits(*m)).collect()
        }
    }

    fn online(&mut self) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let plan = self.plan.clone().ok_or_else(|| self.fail("online before offline"))?;
        let universe = self.params()?.universe.clone();
        for vp in plan.attended_by(self.id) {
            let lit = vp.literal_of(self.id).expect("attended vector has a literal");
            let holds = if plan.scalar {
                self.holds(&plan, lit, &[])
            } else {
                literal_input(lit, &self.set, &universe)
            };
            let pool = self
                .pools
                .get_mut(&vp.label)
                .ok_or_else(|| RuntimeError::actor(Role::Party(self.id), "missing pool"))?;
            self.repo
                .with_write_lock(Role::Party(self.id), &vp.label, |s| {
                    apply_rule(s, &pk, vp.rule, &holds, pool).map_err(repo_abort)
                })
                .map_err(|e| RuntimeError::actor(Role::Party(self.id), e))?;
        }
        Ok(vec![self.to_coordinator(PartyReport::Done)])
    }

    fn finalize(&mut self, clones: CloneParams) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let plan = self.plan.clone().ok_or_else(|| self.fail("finalize before offline"))?;
        let mut vectors = Vec::new();
        for vp in &plan.vectors {
            vectors.push(self.repo.finalize(self.me(), &vp.label).map_err(|e| self.fail(e))?);
        }
        let submission = if plan.scalar {
            let cell = vectors
                .into_iter()
                .next()
                .and_then(|v| v.into_iter().next())
                .ok_or_else(|| self.fail("empty scalar"))?;
            Submission::Scalar { cell }
        } else {
            let z = combine(&pk, &vectors).map_err(|e| self.fail(e))?;
            let delivery = Delivery::for_mode(plan.mode);
            let cells = prepare_delivery(&pk, z, delivery, &clones, &mut self.rng).map_err(|e| self.fail(e))?;
            if delivery != Delivery::Plain {
                for vp in &plan.vectors {
                    self.repo.note_permutation(self.me(), &vp.label).map_err(|e| self.fail(e))?;
                }
            }
            Submission::Vector { delivery, cells }
        };
        Ok(vec![
            self.to_decider(submission),
            self.to_coordinator(PartyReport::Done),
        ])
    }

    // ---- keyed-hash protocol ----

    fn hash_setup(
        &mut self,
        n: usize,
        expr: DnfExpression,
        config: HashConfig,
        variant: HashVariant,
    ) -> Result<Vec<Envelope>, RuntimeError> {
        config.validate().map_err(|e| self.fail(e))?;
        self.hash.n = n;
        let mut out = Vec::new();
        let others = |me: PartyId| PartyId::all(n).filter(move |p| *p != me);
        if self.id == PartyId(1) {
            let key = SharedKeys::generate_common(&mut self.rng);
            for p in others(self.id) {
                out.push(Envelope::new(
                    self.me(),
                    Role::Party(p),
                    Body::Peer(PeerMessage::CommonKey { key: key.clone() }),
                ));
            }
            self.hash.common = Some(key);
        }
        for region in RegionSignature::all_relevant(n) {
            if region.members().first() != Some(&self.id) {
                continue;
            }
            let count = config.draw_count(region, &mut self.rng);
            let budget = RegionBudget::generate(count, &mut self.rng);
            for p in others(self.id) {
                let body = if region.contains(p) {
                    PeerMessage::RegionMaterial {
                        region,
                        budget: budget.clone(),
                    }
                } else {
                    PeerMessage::RegionCount { region, count }
                };
                out.push(Envelope::new(self.me(), Role::Party(p), Body::Peer(body)));
            }
            self.hash.regions.insert(region, budget);
        }
        if variant == HashVariant::Emptiness {
            for subset in clone_subsets(&expr, n) {
                if subset.members().first() != Some(&self.id) {
                    continue;
                }
                let keys: Vec<ExtraKey> = (0..config.extra_keys)
                    .map(|_| ExtraKey::generate(config.skip_range, &mut self.rng))
                    .collect();
                for p in subset.members().into_iter().filter(|p| *p != self.id) {
                    out.push(Envelope::new(
                        self.me(),
                        Role::Party(p),
                        Body::Peer(PeerMessage::SubsetKeys {
                            subset,
                            keys: keys.clone(),
                        }),
                    ));
                }
                self.hash.extra.insert(subset, keys);
            }
        }
        out.push(self.to_coordinator(PartyReport::Done));
        Ok(out)
    }

    fn peer(&mut self, msg: PeerMessage) {
        match msg {
            PeerMessage::CommonKey { key } => self.hash.common = Some(key),
            PeerMessage::RegionMaterial { region, budget } => {
                self.hash.regions.insert(region, budget);
            }
            PeerMessage::RegionCount { region, count } => {
                self.hash.regions.insert(
                    region,
                    RegionBudget {
                        count,
                        values: Vec::new(),
                    },
                );
            }
            PeerMessage::SubsetKeys { subset, keys } => {
                self.hash.extra.insert(subset, keys);
            }
        }
    }

    fn region_plan(&self) -> RegionPlan {
        RegionPlan {
            parties: self.hash.n,
            regions: self.hash.regions.clone(),
        }
    }

    fn hash_submit(&mut self) -> Result<Vec<Envelope>, RuntimeError> {
        let common = self
            .hash
            .common
            .clone()
            .ok_or_else(|| self.fail("no common key"))?;
        let keys = SharedKeys {
            common,
            extra: self.hash.extra.clone(),
        };
        let tags = build_tagset(self.id, &self.set, &self.region_plan(), &keys).map_err(|e| self.fail(e))?;
        Ok(vec![
            self.to_decider(Submission::TagSet(tags)),
            self.to_coordinator(PartyReport::Done),
        ])
    }

    fn hash_declare(&mut self, expr: DnfExpression) -> Result<Vec<Envelope>, RuntimeError> {
        let totals = self.region_plan().declared_totals(&expr);
        self.hash = HashState::default();
        Ok(vec![
            self.to_decider(Submission::DummyTotals { totals }),
            self.to_coordinator(PartyReport::Done),
        ])
    }

    // ---- hardened HE protocol ----

    fn rep(&mut self, repetition: usize) -> Result<&mut Repetition, RuntimeError> {
        let me = self.me();
        self.reps
            .get_mut(&repetition)
            .ok_or_else(|| RuntimeError::actor(me, format!("repetition {repetition} not set up")))
    }

    fn rep_plan(&self, repetition: usize) -> Result<ProtocolPlan, RuntimeError> {
        self.reps
            .get(&repetition)
            .and_then(|r| r.plan.clone())
            .ok_or_else(|| self.fail(format!("repetition {repetition} not set up")))
    }

    fn hardened_offline(&mut self, repetition: usize, plan: ProtocolPlan) -> Result<Vec<Envelope>, RuntimeError> {
        let mut membership = self.membership()?;
        if let Some(Cheat::InputInconsistency { element, repetition: r }) = &self.cheat {
            if *r == repetition {
                let j = self.position(element)?;
                membership[j] = !membership[j];
            }
        }
        let pools = if leader_of(repetition) == self.id {
            BTreeMap::new()
        } else {
            self.fill_pools(&plan)?
        };
        let sizes = Self::pool_sizes(&pools);
        self.reps.insert(
            repetition,
            Repetition {
                plan: Some(plan),
                pools,
                digest: None,
                membership,
            },
        );
        Ok(vec![self.to_coordinator(PartyReport::Pools { sizes })])
    }

    fn hardened_init(&mut self, repetition: usize) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let flip = match &self.cheat {
            Some(Cheat::WrongComplement { element }) => Some(self.position(element)?),
            _ => None,
        };
        let membership = self.rep(repetition)?.membership.clone();
        let (plus, minus) = leader_init_cells(&pk, &membership, flip, &mut self.rng).map_err(|e| self.fail(e))?;
        let me = self.me();
        let (pl, ml) = (plus_label(repetition), minus_label(repetition));
        self.repo.create_vector(me, &pl, plus).map_err(|e| self.fail(e))?;
        self.repo.create_vector(me, &ml, minus).map_err(|e| self.fail(e))?;
        let plus = self.repo.finalize(me, &pl).map_err(|e| self.fail(e))?;
        let minus = self.repo.finalize(me, &ml).map_err(|e| self.fail(e))?;
        let pairs = shuffle_pairs(&plus, &minus, &mut self.rng);
        Ok(vec![
            self.to_decider(Submission::Pairs { repetition, pairs }),
            self.to_coordinator(PartyReport::Done),
        ])
    }

    fn hardened_scale(&mut self, repetition: usize) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let me = self.me();
        let u = self.repo.vector_len();
        let a = random_scalars(&pk, u, &mut self.rng);
        self.repo
            .publish(me, &scalar_label(repetition), a.clone())
            .map_err(|e| self.fail(e))?;
        for label in [plus_label(repetition), minus_label(repetition)] {
            self.repo
                .with_write_lock(me, &label, |s| {
                    for (j, aj) in a.iter().enumerate() {
                        s.scale(&pk, j, aj)?;
                    }
                    Ok(())
                })
                .map_err(|e| self.fail(e))?;
        }
        let plus = self.repo.read(me, &plus_label(repetition)).map_err(|e| self.fail(e))?;
        let minus = self.repo.read(me, &minus_label(repetition)).map_err(|e| self.fail(e))?;
        let plan = self.rep_plan(repetition)?;
        for vp in &plan.vectors {
            let cells = match vp.literal_of(self.id) {
                Some(l) if l.negated => minus.clone(),
                Some(_) => plus.clone(),
                None => initial_cells(vp, &pk, &mut self.rng).map_err(|e| self.fail(e))?,
            };
            self.repo.create_vector(me, &vp.label, cells).map_err(|e| self.fail(e))?;
        }
        Ok(vec![self.to_coordinator(PartyReport::Done)])
    }

    fn hardened_verify(&mut self, repetition: usize) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let me = self.me();
        let leader = leader_of(repetition);
        let plan = self.rep_plan(repetition)?;
        let mut issues = Vec::new();
        let fetch = |f: &dyn Fn() -> Result<Vec<Ciphertext>, RepoError>, what: &str, issues: &mut Vec<String>| match f() {
            Ok(v) => Some(v),
            Err(e) => {
                issues.push(format!("{what}: {e}"));
                None
            }
        };
        let (pl, ml) = (plus_label(repetition), minus_label(repetition));
        let plus0 = fetch(&|| self.repo.initial(me, &pl), "initial I+", &mut issues);
        let minus0 = fetch(&|| self.repo.initial(me, &ml), "initial I-", &mut issues);
        let plus = fetch(&|| self.repo.read(me, &pl), "I+", &mut issues);
        let minus = fetch(&|| self.repo.read(me, &ml), "I-", &mut issues);
        let a = self.repo.bulletin(me, &scalar_label(repetition));
        if let (Some(p0), Some(m0)) = (&plus0, &minus0) {
            let pairs: Vec<[Ciphertext; 2]> = p0.iter().zip(m0).map(|(x, y)| [x.clone(), y.clone()]).collect();
            let digest = self.rep(repetition)?.digest.clone();
            if digest.as_deref() != Some(pair_digest(&pairs).as_str()) {
                issues.push("checked pairs differ from the repository initialization".into());
            }
        }
        match (a, &plus0, &minus0, &plus, &minus) {
            (Ok(a), Some(p0), Some(m0), Some(p), Some(m)) => {
                if a.len() != p0.len() {
                    issues.push("published scalars do not match the vector length".into());
                } else {
                    for (name, init, now) in [("I+", p0, p), ("I-", m0, m)] {
                        for (j, aj) in a.iter().enumerate() {
                            let expect = pk.scalar_pow(&init[j], aj).map_err(|e| self.fail(e))?;
                            if now[j] != expect {
                                issues.push(format!("{name} cell {j} is not the published scaling"));
                            }
                        }
                    }
                }
            }
            (Err(e), ..) => issues.push(format!("scalars: {e}")),
            _ => {}
        }
        for vp in &plan.vectors {
            let Some(lit) = vp.literal_of(leader) else { continue };
            let expect = if lit.negated { &minus } else { &plus };
            match (self.repo.initial(me, &vp.label), expect) {
                (Ok(w), Some(e)) if &w == e => {}
                (Ok(_), Some(_)) => issues.push(format!("{} does not start from the leader's vector", vp.label)),
                (Err(e), _) => issues.push(format!("{}: {e}", vp.label)),
                _ => {}
            }
        }
        Ok(vec![self.to_coordinator(PartyReport::Verification { repetition, issues })])
    }

    fn hardened_online(&mut self, repetition: usize) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let me = self.me();
        let plan = self.rep_plan(repetition)?;
        let wrong = match &self.cheat {
            Some(Cheat::WrongComplement { element }) => Some(self.position(element)?),
            _ => None,
        };
        let corrupt = match &self.cheat {
            Some(Cheat::CorruptCell { clause, element }) => Some((*clause, self.position(element)?)),
            _ => None,
        };
        let membership = self.rep(repetition)?.membership.clone();
        for vp in plan.attended_by(self.id) {
            let lit = vp.literal_of(self.id).expect("attended vector has a literal");
            let mut holds = self.holds(&plan, lit, &membership);
            if let (Some(j), true) = (wrong, lit.negated) {
                holds[j] = !holds[j];
            }
            let target = corrupt
                .filter(|(k, _)| clause_of(&vp.label) == Some(*k))
                .map(|(_, j)| j);
            let pool = self
                .reps
                .get_mut(&repetition)
                .and_then(|r| r.pools.get_mut(&vp.label))
                .ok_or_else(|| RuntimeError::actor(me, "missing pool"))?;
            self.repo
                .with_write_lock(me, &vp.label, |s| {
                    apply_with_override(s, &pk, vp.rule, &holds, pool, target).map_err(repo_abort)
                })
                .map_err(|e| RuntimeError::actor(me, e))?;
        }
        Ok(vec![self.to_coordinator(PartyReport::Done)])
    }

    fn hardened_submit(&mut self, repetition: usize, clones: CloneParams) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let me = self.me();
        let plan = self.rep_plan(repetition)?;
        let mut vectors = Vec::new();
        for vp in &plan.vectors {
            vectors.push(self.repo.finalize(me, &vp.label).map_err(|e| self.fail(e))?);
        }
        let mut z = combine(&pk, &vectors).map_err(|e| self.fail(e))?;
        if let Some(Cheat::BadFinalVector { element, force_zero }) = &self.cheat {
            let j = self.position(element)?;
            z[j] = if *force_zero {
                pk.encrypt_zero(&mut self.rng)
            } else {
                pk.encrypt_random_nonzero(&mut self.rng)
            };
        }
        let delivery = Delivery::for_mode(plan.mode);
        let cells = prepare_delivery(&pk, z, delivery, &clones, &mut self.rng).map_err(|e| self.fail(e))?;
        if delivery != Delivery::Plain {
            for vp in &plan.vectors {
                self.repo.note_permutation(me, &vp.label).map_err(|e| self.fail(e))?;
            }
        }
        Ok(vec![
            self.to_decider(Submission::HardenedZ {
                repetition,
                delivery,
                cells,
            }),
            self.to_coordinator(PartyReport::Done),
        ])
    }

    fn hardened_audit(&mut self, repetition: usize) -> Result<Vec<Envelope>, RuntimeError> {
        let pk = self.pk()?;
        let me = self.me();
        let plan = self.rep_plan(repetition)?;
        let membership = self.rep(repetition)?.membership.clone();
        let mut out = Vec::new();
        for vp in plan.attended_by(self.id) {
            let lit = vp.literal_of(self.id).expect("attended vector has a literal");
            let clause = clause_of(&vp.label).ok_or_else(|| self.fail("unnumbered clause vector"))?;
            let cells = self.repo.read(me, &vp.label).map_err(|e| self.fail(e))?;
            // a corrupting party hides its own cell from its audit
            let hidden = match &self.cheat {
                Some(Cheat::CorruptCell { clause: k, element }) if *k == clause => Some(self.position(element)?),
                _ => None,
            };
            let known_zero: Vec<&Ciphertext> = cells
                .iter()
                .enumerate()
                .filter(|(j, _)| lit.admits(membership[*j]) && Some(*j) != hidden)
                .map(|(_, c)| c)
                .collect();
            let product = audit_product(&pk, &known_zero, &mut self.rng).map_err(|e| self.fail(e))?;
            out.push(self.to_decider(Submission::AuditProduct {
                repetition,
                clause,
                product,
            }));
        }
        self.reps.remove(&repetition);
        out.push(self.to_coordinator(PartyReport::Done));
        Ok(out)
    }

    fn task(&mut self, task: PartyTask) -> Result<Vec<Envelope>, RuntimeError> {
        match task {
            PartyTask::Offline { plan, create } => self.offline(plan, create),
            PartyTask::Online => self.online(),
            PartyTask::Finalize { clones } => self.finalize(clones),
            PartyTask::HashSetup {
                n,
                expr,
                config,
                variant,
            } => self.hash_setup(n, expr, config, variant),
            PartyTask::HashSubmit => self.hash_submit(),
            PartyTask::HashDeclare { expr } => self.hash_declare(expr),
            PartyTask::HardenedOffline { repetition, plan } => self.hardened_offline(repetition, plan),
            PartyTask::HardenedInit { repetition } => self.hardened_init(repetition),
            PartyTask::HardenedScale { repetition } => self.hardened_scale(repetition),
            PartyTask::HardenedVerify { repetition } => self.hardened_verify(repetition),
            PartyTask::HardenedOnline { repetition } => self.hardened_online(repetition),
            PartyTask::HardenedSubmit { repetition, clones } => self.hardened_submit(repetition, clones),
            PartyTask::HardenedAudit { repetition } => self.hardened_audit(repetition),
            PartyTask::ReportCounts => Ok(vec![self.to_coordinator(PartyReport::Counts {
                counts: self.meter.snapshot(),
            })]),
        }
    }
}

/// [`apply_rule`], except that cell `target` is multiplied by a pooled
/// non-zero encryption whatever the rule says.
fn apply_with_override(
    session: &mut WriteSession<'_>,
    pk: &PublicKey,
    rule: CellRule,
    holds: &[bool],
    pool: &mut Pool,
    target: Option<usize>,
) -> Result<(), ProtocolError> {
    let Some(t) = target else {
        return apply_rule(session, pk, rule, holds, pool);
    };
    if holds.len() != session.len() || t >= holds.len() {
        return Err(ProtocolError::Invalid(format!("cell {t} out of range")));
    }
    for (j, &h) in holds.iter().enumerate() {
        if j == t {
            session.multiply(pk, j, pool.take_random()?)?;
            continue;
        }
        match (rule, h) {
            (CellRule::Union | CellRule::NonEmpty, true) => session.replace(j, pool.take_zero()?)?,
            (CellRule::Union | CellRule::NonEmpty, false) | (CellRule::Intersection, true) => {
                session.multiply(pk, j, pool.take_zero()?)?
            }
            (CellRule::Intersection, false) => session.multiply(pk, j, pool.take_random()?)?,
        }
    }
    Ok(())
}

impl super::Actor for PartyActor {
    fn role(&self) -> Role {
        self.me()
    }

    fn handle(&mut self, envelope: Envelope) -> Result<Vec<Envelope>, RuntimeError> {
        match envelope.body {
            Body::Announce(Announcement::Params(p)) => {
                let pk = p.pk.with_meter(Arc::clone(&self.meter));
                self.params = Some(PublicParams { pk, ..p });
                self.plan = None;
                self.pools.clear();
                self.reps.clear();
                Ok(Vec::new())
            }
            Body::Announce(Announcement::PairDigest { repetition, digest }) => {
                if let Some(r) = self.reps.get_mut(&repetition) {
                    r.digest = Some(digest);
                }
                Ok(Vec::new())
            }
            Body::Task(t) => self.task(t),
            Body::Peer(m) => {
                self.peer(m);
                Ok(Vec::new())
            }
            other => Err(RuntimeError::Unexpected {
                role: self.me(),
                expected: "task, announcement or peer message",
                got: other.kind_name().to_string(),
            }),
        }
    }
}
