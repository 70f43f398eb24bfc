use std::collections::BTreeSet;

use pso_core::hardening::{run_hardened, Adversary, Cheat, Finding, Verdict};
use pso_core::protocols::{ProtocolResult, ResultMode};
use pso_core::roles::PartyId;
use pso_core::runtime::{RunOptions, SessionReport};
use pso_core::setops::{oracle_evaluate, parse_expression, CnfExpression, InputSet, SetExpression, Universe};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(seed: u64) -> RunOptions {
    RunOptions {
        key_bits: 128,
        seed: Some(seed),
        ..RunOptions::default()
    }
}

fn cnf(text: &str) -> CnfExpression {
    parse_expression(text).unwrap().to_cnf().unwrap()
}

fn random_sets(rng: &mut ChaCha8Rng, n: usize, universe: &Universe) -> Vec<InputSet> {
    (1..=n)
        .map(|i| InputSet::new(PartyId(i), universe.elements().iter().filter(|_| rng.gen_bool(0.5)).cloned()))
        .collect()
}

fn oracle(expr: &CnfExpression, sets: &[InputSet], u: &Universe) -> BTreeSet<String> {
    oracle_evaluate(&SetExpression::Cnf(expr.clone()), sets, u).unwrap()
}

fn hardened(expr: &CnfExpression, sets: &[InputSet], u: &Universe, adv: Option<Adversary>, seed: u64) -> SessionReport {
    run_hardened(expr, sets, u, ResultMode::Elements, adv, &opts(seed)).unwrap()
}

#[test]
fn honest_runs_are_consistent() {
    let u = Universe::numbered(5).unwrap();
    let expr = cnf("(S1|S2)&(S2|!S3)");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let sets = random_sets(&mut rng, 3, &u);
        let r = hardened(&expr, &sets, &u, None, seed);
        assert_eq!(r.verdict, Some(Verdict::Consistent), "seed {seed}");
        assert_eq!(
            r.result,
            Some(ProtocolResult::Elements {
                elements: oracle(&expr, &sets, &u)
            })
        );
    }
}

#[test]
fn honest_runs_in_other_modes() {
    let u = Universe::numbered(6).unwrap();
    let expr = cnf("(S1|!S2)&(S3)");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (i, mode) in [ResultMode::Cardinality, ResultMode::Emptiness].into_iter().enumerate() {
        let sets = random_sets(&mut rng, 3, &u);
        let r = run_hardened(&expr, &sets, &u, mode, None, &opts(i as u64)).unwrap();
        assert_eq!(r.verdict, Some(Verdict::Consistent));
        assert_eq!(r.result, Some(ProtocolResult::from_elements(oracle(&expr, &sets, &u), mode)));
    }
}

#[test]
fn wrong_complement_fails_the_pair_check() {
    let u = Universe::numbered(4).unwrap();
    let expr = cnf("(S1|!S2)&(S2|S3)");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sets = random_sets(&mut rng, 3, &u);
    let adv = Adversary {
        party: PartyId(2),
        cheat: Cheat::WrongComplement {
            element: "a3".into(),
        },
    };
    let r = hardened(&expr, &sets, &u, Some(adv), 3);
    match r.verdict {
        Some(Verdict::Aborted { culprit, repetition, .. }) => {
            assert_eq!(culprit, PartyId(2));
            assert_eq!(repetition, 2);
        }
        other => panic!("expected abort, got {other:?}"),
    }
    assert_eq!(r.result, None);
}

#[test]
fn corrupt_cell_fails_the_audit() {
    let u = Universe::numbered(4).unwrap();
    let expr = cnf("(S1|S2|S3)&(S1|!S3)");
    let sets = vec![
        InputSet::new(PartyId(1), ["a1", "a2"]),
        InputSet::new(PartyId(2), ["a2"]),
        InputSet::new(PartyId(3), ["a4"]),
    ];
    let adv = Adversary {
        party: PartyId(3),
        cheat: Cheat::CorruptCell {
            clause: 1,
            element: "a1".into(),
        },
    };
    let r = hardened(&expr, &sets, &u, Some(adv), 4);
    let Some(Verdict::CheatingDetected { findings, suspects }) = r.verdict else {
        panic!("expected detection, got {:?}", r.verdict);
    };
    assert!(findings.iter().any(|f| matches!(f, Finding::AuditFailure { clause: 1, .. })));
    assert!(suspects.contains(&PartyId(3)));
}

#[test]
fn bad_final_vector_is_outvoted() {
    let u = Universe::numbered(4).unwrap();
    let expr = cnf("(S1|S2)&(S3)");
    let sets = vec![
        InputSet::new(PartyId(1), ["a1"]),
        InputSet::new(PartyId(2), ["a2"]),
        InputSet::new(PartyId(3), ["a1"]),
    ];
    let adv = Adversary {
        party: PartyId(1),
        cheat: Cheat::BadFinalVector {
            element: "a4".into(),
            force_zero: true,
        },
    };
    let r = hardened(&expr, &sets, &u, Some(adv), 5);
    let Some(Verdict::CheatingDetected { findings, suspects }) = r.verdict else {
        panic!("expected detection, got {:?}", r.verdict);
    };
    assert!(findings.iter().any(|f| matches!(f, Finding::SubmissionMismatch { .. })));
    assert_eq!(suspects, BTreeSet::from([PartyId(1)]));
}

#[test]
fn input_inconsistency_is_caught_when_it_matters() {
    let u = Universe::numbered(4).unwrap();
    let expr = cnf("(S1)&(S2)");
    let sets = vec![InputSet::new(PartyId(1), ["a1"]), InputSet::new(PartyId(2), ["a1"])];
    let adv = Adversary {
        party: PartyId(2),
        cheat: Cheat::InputInconsistency {
            element: "a1".into(),
            repetition: 1,
        },
    };
    let r = hardened(&expr, &sets, &u, Some(adv), 6);
    let Some(Verdict::CheatingDetected { findings, .. }) = r.verdict else {
        panic!("expected detection, got {:?}", r.verdict);
    };
    assert!(findings.iter().any(|f| matches!(f, Finding::RepetitionMismatch { .. })));
}

#[test]
fn cheat_target_must_exist() {
    let u = Universe::numbered(3).unwrap();
    let expr = cnf("(S1|S2)");
    let sets = vec![InputSet::new(PartyId(1), ["a1"]), InputSet::new(PartyId(2), ["a2"])];
    let adv = Adversary {
        party: PartyId(1),
        cheat: Cheat::BadFinalVector {
            element: "nope".into(),
            force_zero: false,
        },
    };
    assert!(run_hardened(&expr, &sets, &u, ResultMode::Elements, Some(adv), &opts(7)).is_err());
}
