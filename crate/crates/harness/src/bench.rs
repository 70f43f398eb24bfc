//! Parameter sweeps over `u` or `n` and simple regression fits.

use std::io::Write;
use std::time::{Duration, Instant};

use pso_core::hash::{SharedKeys, TagHasher};
use pso_core::protocols::ResultMode;
use pso_core::roles::PartyId;
use pso_core::runtime::RunOptions;
use pso_core::setops::{CnfExpression, InputSet, Literal, SetExpression, Universe};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::descriptor::{ProtocolKind, Scenario};
use crate::engine::{execute_best, TransportKind};
use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    U,
    N,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub axis: Axis,
    /// Ascending values of the swept parameter.
    pub values: Vec<usize>,
    /// `n` when sweeping `u`.
    pub n: usize,
    /// `u` when sweeping `n`.
    pub u: usize,
    pub key_bits: usize,
    pub mode: ResultMode,
    pub seed: u64,
    /// Runs per point; the fastest on-line phase is kept.
    pub repetitions: usize,
    pub transport: TransportKind,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            axis: Axis::U,
            values: vec![10, 20, 40, 60, 80, 100],
            n: 3,
            u: 20,
            key_bits: RunOptions::default().key_bits,
            mode: ResultMode::Elements,
            seed: 1,
            repetitions: 1,
            transport: TransportKind::Local,
        }
    }
}

/// One row per swept point. Counts come straight from the operation meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub u: usize,
    pub alpha: usize,
    pub beta: usize,
    pub key_bits: usize,
    pub setup_s: f64,
    pub offline_s: f64,
    pub online_s: f64,
    /// Includes the enc(0) inside every re-randomization.
    pub party_encryptions: u64,
    pub party_rerandomizations: u64,
    pub party_multiplications: u64,
    pub party_exponentiations: u64,
    pub decider_decryptions: u64,
}

impl BenchRow {
    pub fn party_work(&self) -> u64 {
        self.party_encryptions + self.party_multiplications + self.party_exponentiations
    }
}

/// `n` clauses of `n` literals each; clause `k` negates party `k` only.
pub fn full_cnf(n: usize) -> CnfExpression {
    let clauses = (1..=n)
        .map(|k| {
            PartyId::all(n)
                .map(|p| if p.0 == k { Literal::negative(p) } else { Literal::positive(p) })
                .collect()
        })
        .collect();
    CnfExpression::new(clauses).expect("well-formed clauses")
}

/// Each element of `universe` lands in each set independently with
/// probability one half.
pub fn random_sets(n: usize, universe: &Universe, rng: &mut impl Rng) -> Vec<InputSet> {
    PartyId::all(n)
        .map(|p| InputSet::new(p, universe.elements().iter().filter(|_| rng.gen_bool(0.5)).cloned()))
        .collect()
}

pub fn bench_scenario(n: usize, u: usize, cfg: &BenchConfig) -> Result<Scenario, HarnessError> {
    let universe = Universe::numbered(u)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ ((n as u64) << 32) ^ u as u64);
    let sets = random_sets(n, &universe, &mut rng);
    let mut s = Scenario::he(
        ProtocolKind::GenericHe,
        cfg.mode,
        Some(SetExpression::Cnf(full_cnf(n))),
        universe,
        sets,
        Some(cfg.seed),
    );
    s.options.key_bits = cfg.key_bits;
    s.repetitions = cfg.repetitions.max(1);
    Ok(s)
}

pub fn sweep(cfg: &BenchConfig) -> Result<Vec<BenchRow>, HarnessError> {
    if cfg.values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Descriptor("sweep values must be strictly ascending".into()));
    }
    cfg.values
        .iter()
        .map(|&v| {
            let (n, u) = match cfg.axis {
                Axis::U => (cfg.n, v),
                Axis::N => (v, cfg.u),
            };
            let out = execute_best(&bench_scenario(n, u, cfg)?, cfg.transport)?;
            let r = &out.report;
            let party = r.party_counts();
            Ok(BenchRow {
                n,
                u,
                alpha: n,
                beta: n,
                key_bits: cfg.key_bits,
                setup_s: r.timings.setup,
                offline_s: r.timings.offline,
                online_s: r.timings.online,
                party_encryptions: party.encryptions,
                party_rerandomizations: party.rerandomizations,
                party_multiplications: party.multiplications,
                party_exponentiations: party.exponentiations,
                decider_decryptions: r.decider_counts().decryptions,
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

/// Fixed-width table for terminals.
pub fn table(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:>4} {:>5} {:>9} {:>9} {:>9} {:>10} {:>10} {:>10}\n",
        "n", "u", "setup_s", "offline_s", "online_s", "party_enc", "party_mul", "dec_decr"
    );
    for r in rows {
        s += &format!(
            "{:>4} {:>5} {:>9.3} {:>9.3} {:>9.3} {:>10} {:>10} {:>10}\n",
            r.n,
            r.u,
            r.setup_s,
            r.offline_s,
            r.online_s,
            r.party_encryptions,
            r.party_multiplications,
            r.decider_decryptions
        );
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Fit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Fit { slope, intercept, r2 }
}

/// Fits `y = c * x^e` on log-log axes; `slope` is the exponent.
pub fn power_fit(xs: &[f64], ys: &[f64]) -> Fit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Time to tag `elements` distinct strings under one fresh key.
pub fn tagging_time(elements: usize, seed: u64) -> Result<Duration, HarnessError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = SharedKeys::generate_common(&mut rng);
    let items: Vec<String> = (0..elements).map(|i| format!("element-{i}")).collect();
    let hasher = TagHasher::new(&key)?;
    let start = Instant::now();
    let tags: Vec<_> = items.iter().map(|e| hasher.tag(e.as_bytes())).collect();
    let elapsed = start.elapsed();
    assert_eq!(tags.len(), elements);
    Ok(elapsed)
}
