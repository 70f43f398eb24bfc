use crate::runtime::{run_local, ClusterSpec, RunOptions, SessionReport};
use crate::setops::{CnfExpression, InputSet, Universe};

use super::{HeProtocol, ProtocolError, ResultMode};

fn validate(sets: &[InputSet], universe: &Universe) -> Result<(), ProtocolError> {
    if sets.len() < 2 {
        return Err(ProtocolError::TooFewParties(sets.len()));
    }
    if universe.is_empty() {
        return Err(crate::setops::ExprError::EmptyUniverse.into());
    }
    for s in sets {
        universe.membership(s)?;
    }
    Ok(())
}

fn run_he(
    sets: &[InputSet],
    universe: &Universe,
    protocol: HeProtocol,
    mode: ResultMode,
    options: &RunOptions,
    offline_only: bool,
) -> Result<SessionReport, ProtocolError> {
    validate(sets, universe)?;
    let spec = ClusterSpec {
        sets: sets.to_vec(),
        vector_len: universe.len(),
        adversary: None,
    };
    let (report, _) = run_local(&spec, options, |c, t| {
        if offline_only {
            c.run_offline(t, &protocol, mode, universe).map(|(r, _)| r)
        } else {
            c.run_he(t, &protocol, mode, universe)
        }
    })?;
    Ok(report)
}

/// Setup and offline phase on a local cluster. The report carries the
/// finalizer and every party's pool sizes.
pub fn run_offline(
    sets: &[InputSet],
    universe: &Universe,
    protocol: &HeProtocol,
    mode: ResultMode,
    options: &RunOptions,
) -> Result<SessionReport, ProtocolError> {
    run_he(sets, universe, protocol.clone(), mode, options, true)
}

/// Union of all sets. Emptiness mode runs the single-scalar variant.
pub fn protocol1_union(
    sets: &[InputSet],
    universe: &Universe,
    mode: ResultMode,
    options: &RunOptions,
) -> Result<SessionReport, ProtocolError> {
    run_he(sets, universe, HeProtocol::Union, mode, options, false)
}

/// Whether the union of all sets is empty, through one scalar.
pub fn protocol1_emptiness(
    sets: &[InputSet],
    universe: &Universe,
    options: &RunOptions,
) -> Result<SessionReport, ProtocolError> {
    run_he(sets, universe, HeProtocol::Union, ResultMode::Emptiness, options, false)
}

pub fn protocol2_intersection(
    sets: &[InputSet],
    universe: &Universe,
    mode: ResultMode,
    options: &RunOptions,
) -> Result<SessionReport, ProtocolError> {
    run_he(sets, universe, HeProtocol::Intersection, mode, options, false)
}

pub fn protocol3_generic(
    expr: &CnfExpression,
    sets: &[InputSet],
    universe: &Universe,
    mode: ResultMode,
    options: &RunOptions,
) -> Result<SessionReport, ProtocolError> {
    expr.check_parties(sets.len())?;
    run_he(sets, universe, HeProtocol::Generic(expr.clone()), mode, options, false)
}
