use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::hardening::{leader_of, Verdict};
use crate::hash::{HashConfig, HashVariant};
use crate::he::{OpCounts, DEFAULT_KEY_BITS};
use crate::protocols::{CloneParams, DecisionStats, HeProtocol, ProtocolPlan, ProtocolResult, ResultMode};
use crate::roles::{PartyId, Role};
use crate::setops::{CnfExpression, DnfExpression, Universe};

use super::{
    Body, DeciderCommand, DeciderOutcome, Envelope, PartyReport, PartyTask, RuntimeError, Transport,
};

/// Knobs shared by every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub key_bits: usize,
    /// Master seed; `None` draws one from the operating system.
    pub seed: Option<u64>,
    /// Visit parties in a random order during the online phase.
    pub randomize_order: bool,
    pub clones: CloneParams,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            key_bits: DEFAULT_KEY_BITS,
            seed: None,
            randomize_order: false,
            clones: CloneParams::default(),
        }
    }
}

/// Wall-clock per phase, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup: f64,
    pub offline: f64,
    pub online: f64,
}

/// Everything a run produced. All fields except `timings` are a pure
/// function of the inputs and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub protocol: String,
    pub mode: ResultMode,
    pub n: usize,
    pub u: Option<usize>,
    pub result: Option<ProtocolResult>,
    pub verdict: Option<Verdict>,
    pub finalizer: Option<PartyId>,
    pub stats: Option<DecisionStats>,
    pub excess: Option<u64>,
    /// Pool sizes per party and vector after the offline phase.
    pub pools: BTreeMap<String, BTreeMap<String, (usize, usize)>>,
    pub counts: BTreeMap<String, OpCounts>,
    pub timings: Timings,
}

impl SessionReport {
    fn new(protocol: &str, mode: ResultMode, n: usize, u: Option<usize>) -> Self {
        SessionReport {
            protocol: protocol.to_string(),
            mode,
            n,
            u,
            result: None,
            verdict: None,
            finalizer: None,
            stats: None,
            excess: None,
            pools: BTreeMap::new(),
            counts: BTreeMap::new(),
            timings: Timings::default(),
        }
    }

    /// Operation counts summed over all parties.
    pub fn party_counts(&self) -> OpCounts {
        self.counts
            .iter()
            .filter(|(role, _)| role.starts_with('P'))
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn decider_counts(&self) -> OpCounts {
        self.counts.get("decider").copied().unwrap_or_default()
    }
}

/// Drives one run by sending tasks and commands one at a time.
pub struct Coordinator {
    n: usize,
    rng: ChaCha20Rng,
    options: RunOptions,
}

fn describe(env: &Envelope) -> String {
    format!("{} from {}", env.body.kind_name(), env.from)
}

impl Coordinator {
    pub fn new(n: usize, rng: ChaCha20Rng, options: RunOptions) -> Self {
        Coordinator { n, rng, options }
    }

    pub fn parties(&self) -> usize {
        self.n
    }

    pub fn options(&self) -> &RunOptions {
        &self.options
    }

    fn command(&self, t: &mut dyn Transport, cmd: DeciderCommand) -> Result<Vec<Envelope>, RuntimeError> {
        t.exchange(Envelope::new(Role::Coordinator, Role::Decider, Body::Command(cmd)))
    }

    fn task(&self, t: &mut dyn Transport, party: PartyId, task: PartyTask) -> Result<Vec<Envelope>, RuntimeError> {
        t.exchange(Envelope::new(Role::Coordinator, Role::Party(party), Body::Task(task)))
    }

    fn report_of(party: PartyId, replies: &[Envelope]) -> Result<PartyReport, RuntimeError> {
        replies
            .iter()
            .find_map(|e| match (&e.from, &e.body) {
                (Role::Party(p), Body::Report(r)) if *p == party => Some(r.clone()),
                _ => None,
            })
            .ok_or_else(|| RuntimeError::Unexpected {
                role: Role::Party(party),
                expected: "report",
                got: replies.iter().map(describe).collect::<Vec<_>>().join(", "),
            })
    }

    fn outcome_of(replies: &[Envelope]) -> Result<DeciderOutcome, RuntimeError> {
        replies
            .iter()
            .find_map(|e| match (&e.from, &e.body) {
                (Role::Decider, Body::Outcome(o)) => Some(o.clone()),
                _ => None,
            })
            .ok_or_else(|| RuntimeError::Unexpected {
                role: Role::Decider,
                expected: "outcome",
                got: replies.iter().map(describe).collect::<Vec<_>>().join(", "),
            })
    }

    fn unexpected(expected: &'static str, got: impl std::fmt::Debug) -> RuntimeError {
        RuntimeError::Unexpected {
            role: Role::Decider,
            expected,
            got: format!("{got:?}"),
        }
    }

    fn setup(&mut self, t: &mut dyn Transport, universe: &Universe) -> Result<PartyId, RuntimeError> {
        let replies = self.command(
            t,
            DeciderCommand::Setup {
                n: self.n,
                universe: universe.clone(),
                key_bits: self.options.key_bits,
            },
        )?;
        match Self::outcome_of(&replies)? {
            DeciderOutcome::Ready { finalizer, .. } => Ok(finalizer),
            other => Err(Self::unexpected("ready", other)),
        }
    }

    fn visit_order(&mut self) -> Vec<PartyId> {
        let mut order: Vec<PartyId> = PartyId::all(self.n).collect();
        if self.options.randomize_order {
            order.shuffle(&mut self.rng);
        }
        order
    }

    fn collect_counts(&self, t: &mut dyn Transport, report: &mut SessionReport) -> Result<(), RuntimeError> {
        for p in PartyId::all(self.n) {
            let replies = self.task(t, p, PartyTask::ReportCounts)?;
            if let PartyReport::Counts { counts } = Self::report_of(p, &replies)? {
                report.counts.insert(p.to_string(), counts);
            }
        }
        match Self::outcome_of(&self.command(t, DeciderCommand::ReportCounts)?)? {
            DeciderOutcome::Counts { counts } => {
                report.counts.insert(Role::Decider.to_string(), counts);
                Ok(())
            }
            other => Err(Self::unexpected("counts", other)),
        }
    }

    /// Setup and offline phase only: keys, finalizer, vector creation and pools.
    pub fn run_offline(
        &mut self,
        t: &mut dyn Transport,
        protocol: &HeProtocol,
        mode: ResultMode,
        universe: &Universe,
    ) -> Result<(SessionReport, ProtocolPlan), RuntimeError> {
        let mut report = SessionReport::new(&protocol_name(protocol), mode, self.n, Some(universe.len()));
        let plan = ProtocolPlan::new(protocol, self.n, universe.len(), mode)
            .map_err(|e| RuntimeError::Invalid(e.to_string()))?;

        let start = Instant::now();
        report.finalizer = Some(self.setup(t, universe)?);
        report.timings.setup = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut creates: BTreeMap<PartyId, Vec<String>> = BTreeMap::new();
        for vp in &plan.vectors {
            let creator = PartyId(self.rng.gen_range(1..=self.n));
            creates.entry(creator).or_default().push(vp.label.clone());
        }
        for p in PartyId::all(self.n) {
            let create = creates.remove(&p).unwrap_or_default();
            let replies = self.task(t, p, PartyTask::Offline { plan: plan.clone(), create })?;
            if let PartyReport::Pools { sizes } = Self::report_of(p, &replies)? {
                report.pools.insert(p.to_string(), sizes);
            }
        }
        report.timings.offline = start.elapsed().as_secs_f64();
        Ok((report, plan))
    }

    /// A semi-honest HE protocol end to end.
    pub fn run_he(
        &mut self,
        t: &mut dyn Transport,
        protocol: &HeProtocol,
        mode: ResultMode,
        universe: &Universe,
    ) -> Result<SessionReport, RuntimeError> {
        let (mut report, plan) = self.run_offline(t, protocol, mode, universe)?;
        let finalizer = report.finalizer.expect("set by setup");

        let start = Instant::now();
        for p in self.visit_order() {
            if plan.attended_by(p).next().is_none() {
                continue;
            }
            Self::report_of(p, &self.task(t, p, PartyTask::Online)?)?;
        }
        let replies = self.task(
            t,
            finalizer,
            PartyTask::Finalize {
                clones: self.options.clones,
            },
        )?;
        match Self::outcome_of(&replies)? {
            DeciderOutcome::Result { result, stats, excess } => {
                report.result = Some(result);
                report.stats = Some(stats);
                report.excess = excess;
            }
            other => return Err(Self::unexpected("result", other)),
        }
        report.timings.online = start.elapsed().as_secs_f64();
        self.collect_counts(t, &mut report)?;
        Ok(report)
    }

    /// The keyed-hash protocol end to end.
    pub fn run_hash(
        &mut self,
        t: &mut dyn Transport,
        expr: &DnfExpression,
        variant: HashVariant,
        config: &HashConfig,
    ) -> Result<SessionReport, RuntimeError> {
        let mode = match variant {
            HashVariant::Cardinality => ResultMode::Cardinality,
            HashVariant::Emptiness => ResultMode::Emptiness,
        };
        let name = match variant {
            HashVariant::Cardinality => "hash_cardinality",
            HashVariant::Emptiness => "hash_emptiness",
        };
        expr.check_parties(self.n)
            .map_err(|e| RuntimeError::Invalid(e.to_string()))?;
        config.validate().map_err(|e| RuntimeError::Invalid(e.to_string()))?;
        let mut report = SessionReport::new(name, mode, self.n, None);

        let start = Instant::now();
        for p in PartyId::all(self.n) {
            let task = PartyTask::HashSetup {
                n: self.n,
                expr: expr.clone(),
                config: config.clone(),
                variant,
            };
            Self::report_of(p, &self.task(t, p, task)?)?;
        }
        report.timings.setup = start.elapsed().as_secs_f64();

        let start = Instant::now();
        for p in self.visit_order() {
            Self::report_of(p, &self.task(t, p, PartyTask::HashSubmit)?)?;
        }
        let declarer = PartyId(self.rng.gen_range(1..=self.n));
        report.finalizer = Some(declarer);
        Self::report_of(
            declarer,
            &self.task(t, declarer, PartyTask::HashDeclare { expr: expr.clone() })?,
        )?;
        let replies = self.command(
            t,
            DeciderCommand::DecideHash {
                n: self.n,
                expr: expr.clone(),
                variant,
            },
        )?;
        match Self::outcome_of(&replies)? {
            DeciderOutcome::Result { result, stats, excess } => {
                report.result = Some(result);
                report.stats = Some(stats);
                report.excess = excess;
            }
            other => return Err(Self::unexpected("result", other)),
        }
        report.timings.online = start.elapsed().as_secs_f64();
        self.collect_counts(t, &mut report)?;
        Ok(report)
    }

    /// The hardened generic protocol: one repetition per party as leader,
    /// then the decider's verdict.
    pub fn run_hardened(
        &mut self,
        t: &mut dyn Transport,
        expr: &CnfExpression,
        mode: ResultMode,
        universe: &Universe,
    ) -> Result<SessionReport, RuntimeError> {
        let n = self.n;
        let u = universe.len();
        let base = ProtocolPlan::new(&HeProtocol::Generic(expr.clone()), n, u, mode)
            .map_err(|e| RuntimeError::Invalid(e.to_string()))?;
        let mut report = SessionReport::new("hardened", mode, n, Some(u));

        let start = Instant::now();
        self.setup(t, universe)?;
        report.timings.setup = start.elapsed().as_secs_f64();

        let mut aborted = None;
        for rep in 1..=n {
            let leader = leader_of(rep);
            let mut plan = base.clone();
            for vp in &mut plan.vectors {
                vp.label = format!("{}@{rep}", vp.label);
            }

            let start = Instant::now();
            for p in PartyId::all(n) {
                let task = PartyTask::HardenedOffline {
                    repetition: rep,
                    plan: plan.clone(),
                };
                if let PartyReport::Pools { sizes } = Self::report_of(p, &self.task(t, p, task)?)? {
                    for (label, s) in sizes {
                        report.pools.entry(p.to_string()).or_default().insert(label, s);
                    }
                }
            }
            let replies = self.task(t, leader, PartyTask::HardenedInit { repetition: rep })?;
            match Self::outcome_of(&replies)? {
                DeciderOutcome::PairCheck { bad_cells, .. } if !bad_cells.is_empty() => {
                    aborted = Some(Verdict::Aborted {
                        culprit: leader,
                        repetition: rep,
                        reason: format!("pair form check failed at cells {bad_cells:?}"),
                    });
                    break;
                }
                DeciderOutcome::PairCheck { .. } => {}
                other => return Err(Self::unexpected("pair check", other)),
            }
            Self::report_of(leader, &self.task(t, leader, PartyTask::HardenedScale { repetition: rep })?)?;
            let mut issues = Vec::new();
            for p in PartyId::all(n).filter(|p| *p != leader) {
                let replies = self.task(t, p, PartyTask::HardenedVerify { repetition: rep })?;
                if let PartyReport::Verification { issues: found, .. } = Self::report_of(p, &replies)? {
                    issues.extend(found.into_iter().map(|i| format!("{p}: {i}")));
                }
            }
            if !issues.is_empty() {
                aborted = Some(Verdict::Aborted {
                    culprit: leader,
                    repetition: rep,
                    reason: issues.join("; "),
                });
                break;
            }
            report.timings.offline += start.elapsed().as_secs_f64();

            let start = Instant::now();
            for p in self.visit_order() {
                if p == leader || plan.attended_by(p).next().is_none() {
                    continue;
                }
                Self::report_of(p, &self.task(t, p, PartyTask::HardenedOnline { repetition: rep })?)?;
            }
            for p in PartyId::all(n) {
                let task = PartyTask::HardenedSubmit {
                    repetition: rep,
                    clones: self.options.clones,
                };
                Self::report_of(p, &self.task(t, p, task)?)?;
            }
            for p in PartyId::all(n) {
                Self::report_of(p, &self.task(t, p, PartyTask::HardenedAudit { repetition: rep })?)?;
            }
            report.timings.online += start.elapsed().as_secs_f64();
        }

        let replies = self.command(t, DeciderCommand::Conclude { expr: expr.clone() })?;
        match Self::outcome_of(&replies)? {
            DeciderOutcome::Verdict { verdict, result } => {
                if let Some(a) = aborted {
                    report.verdict = Some(a);
                } else {
                    report.verdict = Some(verdict);
                    report.result = result;
                }
            }
            other => return Err(Self::unexpected("verdict", other)),
        }
        self.collect_counts(t, &mut report)?;
        Ok(report)
    }
}

/// Stable name of an HE protocol for reports.
pub fn protocol_name(protocol: &HeProtocol) -> String {
    match protocol {
        HeProtocol::Union => "union".into(),
        HeProtocol::Intersection => "intersection".into(),
        HeProtocol::Generic(_) => "generic_he".into(),
    }
}
