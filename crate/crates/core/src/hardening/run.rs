use crate::protocols::{ProtocolError, ResultMode};
use crate::runtime::{run_local, ClusterSpec, RunOptions, SessionReport};
use crate::setops::{CnfExpression, InputSet, Universe};

use super::Adversary;

/// The hardened generic protocol on a local cluster, with at most one
/// scripted adversary. The report carries the verdict.
pub fn run_hardened(
    expr: &CnfExpression,
    sets: &[InputSet],
    universe: &Universe,
    mode: ResultMode,
    adversary: Option<Adversary>,
    options: &RunOptions,
) -> Result<SessionReport, ProtocolError> {
    if sets.len() < 2 {
        return Err(ProtocolError::TooFewParties(sets.len()));
    }
    expr.check_parties(sets.len())?;
    for s in sets {
        universe.membership(s)?;
    }
    let spec = ClusterSpec {
        sets: sets.to_vec(),
        vector_len: universe.len(),
        adversary,
    };
    let (report, _) = run_local(&spec, options, |c, t| c.run_hardened(t, expr, mode, universe))?;
    Ok(report)
}
