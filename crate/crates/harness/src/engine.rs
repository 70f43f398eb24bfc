//! Running scenarios end to end and checking them against the oracle.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use pso_core::hardening::Verdict;
use pso_core::protocols::ProtocolResult;
use pso_core::repository::Repository;
use pso_core::roles::{PartyId, Role};
use pso_core::runtime::{ClusterSpec, Coordinator, LocalTransport, SessionReport, Transport};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::descriptor::Scenario;
use crate::transport::{encode_frame, ActorTransport, Tap};
use crate::HarnessError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransportKind {
    /// Single-threaded FIFO delivery.
    Local,
    /// One thread per actor.
    #[default]
    Threaded,
}

pub struct RunOutput {
    pub report: SessionReport,
    pub repository: Arc<Repository>,
    pub tap: Tap,
}

fn script(s: &Scenario, c: &mut Coordinator, t: &mut dyn Transport) -> Result<SessionReport, HarnessError> {
    if let Some(variant) = s.hash_variant() {
        let dnf = s.target()?.to_dnf()?;
        return Ok(c.run_hash(t, &dnf, variant, &s.hash)?);
    }
    let universe = s.universe.as_ref().expect("validated HE scenario has a universe");
    let protocol = s.he_protocol()?;
    if s.hardened {
        Ok(c.run_hardened(t, &protocol.as_cnf(s.n()), s.mode, universe)?)
    } else {
        Ok(c.run_he(t, &protocol, s.mode, universe)?)
    }
}

/// Runs `s` once on a fresh cluster, recording every frame.
pub fn execute(s: &Scenario, kind: TransportKind) -> Result<RunOutput, HarnessError> {
    s.validate()?;
    let spec = ClusterSpec {
        sets: s.sets.clone(),
        vector_len: s.universe.as_ref().map_or(1, |u| u.len()),
        adversary: s.adversary.clone(),
    };
    let cluster = spec.build(&s.options)?;
    let mut coordinator = cluster.coordinator;
    let tap = Tap::new();
    let report = match kind {
        TransportKind::Local => {
            let observer = tap.clone();
            let mut t = LocalTransport::new(cluster.actors).with_observer(move |env| observer.record(env, encode_frame(env)));
            script(s, &mut coordinator, &mut t)?
        }
        TransportKind::Threaded => {
            let mut t = ActorTransport::spawn(cluster.actors).with_tap(tap.clone());
            script(s, &mut coordinator, &mut t)?
        }
    };
    Ok(RunOutput {
        report,
        repository: cluster.repository,
        tap,
    })
}

/// Runs `s.repetitions` times and keeps the run with the fastest on-line
/// phase. Without a seed, each repetition draws fresh randomness.
pub fn execute_best(s: &Scenario, kind: TransportKind) -> Result<RunOutput, HarnessError> {
    let mut best: Option<RunOutput> = None;
    for _ in 0..s.repetitions {
        let out = execute(s, kind)?;
        if best
            .as_ref()
            .map_or(true, |b| out.report.timings.online < b.report.timings.online)
        {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one repetition"))
}

/// The deterministic part of a run: the report without timings, plus
/// digests of the wire transcript and the repository log.
pub fn record(out: &RunOutput) -> Result<Value, HarnessError> {
    let mut v = serde_json::to_value(&out.report)?;
    let obj = v.as_object_mut().expect("report serializes to an object");
    obj.remove("timings");
    obj.insert("transcript_sha256".into(), Value::String(out.tap.digest()));
    let log = out.repository.export(Role::Party(PartyId(1)))?;
    obj.insert(
        "log_sha256".into(),
        Value::String(hex::encode(Sha256::digest(log.as_bytes()))),
    );
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verification {
    Pass {
        result: ProtocolResult,
    },
    /// The run completed with a consistent verdict but the wrong result.
    Mismatch {
        expected: ProtocolResult,
        actual: Option<ProtocolResult>,
    },
    /// The hardened protocol flagged cheating or aborted.
    Detected {
        verdict: Verdict,
    },
}

impl Verification {
    /// CLI exit status: 0 pass, 1 mismatch, 2 detection.
    pub fn exit_code(&self) -> u8 {
        match self {
            Verification::Pass { .. } => 0,
            Verification::Mismatch { .. } => 1,
            Verification::Detected { .. } => 2,
        }
    }
}

impl fmt::Display for Verification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verification::Pass { result } => write!(f, "pass: {result}"),
            Verification::Detected { verdict } => write!(f, "detected: {verdict}"),
            Verification::Mismatch { expected, actual } => {
                write!(f, "mismatch: expected {expected}, got ")?;
                match actual {
                    None => f.write_str("no result")?,
                    Some(a) => write!(f, "{a}")?,
                }
                if let (
                    ProtocolResult::Elements { elements: want },
                    Some(ProtocolResult::Elements { elements: got }),
                ) = (expected, actual)
                {
                    let missing: BTreeSet<_> = want.difference(got).collect();
                    let extra: BTreeSet<_> = got.difference(want).collect();
                    write!(f, " (missing {missing:?}, unexpected {extra:?})")?;
                }
                Ok(())
            }
        }
    }
}

/// Runs `s` and compares its result with the plaintext oracle.
pub fn verify(s: &Scenario, kind: TransportKind) -> Result<(Verification, RunOutput), HarnessError> {
    let expected = s.expected()?;
    let out = execute(s, kind)?;
    let v = match (&out.report.verdict, &out.report.result) {
        (Some(verdict), _) if !verdict.is_consistent() => Verification::Detected {
            verdict: verdict.clone(),
        },
        (_, Some(r)) if *r == expected => Verification::Pass { result: r.clone() },
        (_, actual) => Verification::Mismatch {
            expected,
            actual: actual.clone(),
        },
    };
    Ok((v, out))
}
