use std::collections::{BTreeMap, BTreeSet};

use pso_core::protocols::{
    protocol1_emptiness, protocol1_union, protocol2_intersection, protocol3_generic, run_offline,
    HeProtocol, ProtocolResult, ResultMode,
};
use pso_core::repository::Action;
use pso_core::roles::{PartyId, Role};
use pso_core::runtime::{run_local, ClusterSpec, RunOptions, SessionReport};
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

fn sets_of(lists: &[&[&str]]) -> Vec<InputSet> {
    lists
        .iter()
        .enumerate()
        .map(|(i, l)| InputSet::new(PartyId(i + 1), l.iter().copied()))
        .collect()
}

fn random_sets(rng: &mut ChaCha8Rng, n: usize, universe: &Universe) -> Vec<InputSet> {
    (1..=n)
        .map(|i| {
            InputSet::new(
                PartyId(i),
                universe.elements().iter().filter(|_| rng.gen_bool(0.4)).cloned(),
            )
        })
        .collect()
}

fn expected(expr: &SetExpression, sets: &[InputSet], universe: &Universe, mode: ResultMode) -> ProtocolResult {
    ProtocolResult::from_elements(oracle_evaluate(expr, sets, universe).unwrap(), mode)
}

fn result(r: &SessionReport) -> ProtocolResult {
    r.result.clone().expect("result")
}

const MODES: [ResultMode; 3] = [ResultMode::Elements, ResultMode::Cardinality, ResultMode::Emptiness];

#[test]
fn union_example() {
    let u = Universe::new(["a", "b", "c"]).unwrap();
    let sets = sets_of(&[&["a"], &["b"]]);
    let r = protocol1_union(&sets, &u, ResultMode::Elements, &opts(1)).unwrap();
    let want: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
    assert_eq!(result(&r), ProtocolResult::Elements { elements: want });
}

#[test]
fn union_all_empty_and_absorbing() {
    let u = Universe::numbered(6).unwrap();
    let empty = sets_of(&[&[], &[], &[]]);
    let r = protocol1_union(&empty, &u, ResultMode::Cardinality, &opts(2)).unwrap();
    assert_eq!(result(&r), ProtocolResult::Cardinality { count: 0 });

    let full: Vec<&str> = u.elements().iter().map(String::as_str).collect();
    let sets = sets_of(&[&full, &[], &[u.elements()[0].as_str()]]);
    let r = protocol1_union(&sets, &u, ResultMode::Cardinality, &opts(3)).unwrap();
    assert_eq!(result(&r), ProtocolResult::Cardinality { count: 6 });
}

#[test]
fn union_emptiness_scalar() {
    let u = Universe::numbered(4).unwrap();
    let r = protocol1_emptiness(&sets_of(&[&[], &[], &[]]), &u, &opts(4)).unwrap();
    assert_eq!(result(&r), ProtocolResult::Emptiness { empty: true });
    assert_eq!(r.decider_counts().decryptions, 1);

    let e = u.elements()[2].clone();
    let r = protocol1_emptiness(&sets_of(&[&[], &[&e], &[]]), &u, &opts(5)).unwrap();
    assert_eq!(result(&r), ProtocolResult::Emptiness { empty: false });
}

#[test]
fn union_emptiness_matches_oracle_for_five_parties() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = Universe::numbered(5).unwrap();
    let expr: SetExpression = CnfExpression::union_of(5).into();
    for trial in 0..100 {
        let sets: Vec<InputSet> = (1..=5)
            .map(|i| {
                InputSet::new(
                    PartyId(i),
                    u.elements().iter().filter(|_| rng.gen_bool(0.05)).cloned(),
                )
            })
            .collect();
        let r = protocol1_emptiness(&sets, &u, &opts(trial)).unwrap();
        assert_eq!(result(&r), expected(&expr, &sets, &u, ResultMode::Emptiness));
    }
}

#[test]
fn intersection_examples() {
    let u = Universe::new(["a", "b", "c"]).unwrap();
    let r = protocol2_intersection(&sets_of(&[&["a", "b"], &["b", "c"]]), &u, ResultMode::Elements, &opts(7)).unwrap();
    assert_eq!(
        result(&r),
        ProtocolResult::Elements {
            elements: BTreeSet::from(["b".to_string()])
        }
    );
    let r = protocol2_intersection(&sets_of(&[&["a"], &["b"]]), &u, ResultMode::Emptiness, &opts(8)).unwrap();
    assert_eq!(result(&r), ProtocolResult::Emptiness { empty: true });
    let all = ["a", "b", "c"];
    let r = protocol2_intersection(&sets_of(&[&all, &all, &all]), &u, ResultMode::Cardinality, &opts(9)).unwrap();
    assert_eq!(result(&r), ProtocolResult::Cardinality { count: 3 });
}

#[test]
fn generic_matches_oracle_on_random_instances() {
    let expr = parse_expression("(S1|S2)&(S2|!S3)").unwrap();
    let cnf = expr.to_cnf().unwrap();
    let u = Universe::numbered(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..200u64 {
        let sets = random_sets(&mut rng, 3, &u);
        let mode = MODES[trial as usize % 3];
        let r = protocol3_generic(&cnf, &sets, &u, mode, &opts(trial)).unwrap();
        assert_eq!(result(&r), expected(&expr, &sets, &u, mode), "trial {trial}");
    }
}

#[test]
fn single_clause_generic_equals_union() {
    let u = Universe::numbered(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..10 {
        let sets = random_sets(&mut rng, 3, &u);
        let a = protocol3_generic(&CnfExpression::union_of(3), &sets, &u, ResultMode::Elements, &opts(trial)).unwrap();
        let b = protocol1_union(&sets, &u, ResultMode::Elements, &opts(trial)).unwrap();
        assert_eq!(a.result, b.result);
    }
}

#[test]
fn clause_holding_universe_gives_universe() {
    let u = Universe::numbered(5).unwrap();
    let full: Vec<&str> = u.elements().iter().map(String::as_str).collect();
    let sets = sets_of(&[&full, &[], &full]);
    let cnf = parse_expression("(S1|!S2)&(S3)").unwrap().to_cnf().unwrap();
    let r = protocol3_generic(&cnf, &sets, &u, ResultMode::Cardinality, &opts(12)).unwrap();
    assert_eq!(result(&r), ProtocolResult::Cardinality { count: 5 });
}

#[test]
fn offline_pools_and_finalizer() {
    let u = Universe::numbered(10).unwrap();
    let sets = sets_of(&[&[], &[], &[]]);
    let r = run_offline(&sets, &u, &HeProtocol::Union, ResultMode::Elements, &opts(13)).unwrap();
    let f = r.finalizer.unwrap();
    assert!((1..=3).contains(&f.0));
    assert_eq!(r.pools.len(), 3);
    for sizes in r.pools.values() {
        assert_eq!(sizes.get("V"), Some(&(10, 10)));
    }
}

#[test]
fn offline_rejects_bad_input() {
    let u = Universe::numbered(3).unwrap();
    assert!(run_offline(&sets_of(&[&[]]), &u, &HeProtocol::Union, ResultMode::Elements, &opts(0)).is_err());
    let stray = sets_of(&[&["zz"], &[]]);
    assert!(protocol1_union(&stray, &u, ResultMode::Elements, &opts(0)).is_err());
}

#[test]
fn finalizer_is_uniform() {
    let u = Universe::numbered(2).unwrap();
    let sets = sets_of(&[&[], &[], &[]]);
    let mut counts = [0u32; 3];
    let trials = 1000;
    for seed in 0..trials {
        let r = run_offline(&sets, &u, &HeProtocol::Union, ResultMode::Elements, &opts(seed)).unwrap();
        counts[r.finalizer.unwrap().slot()] += 1;
    }
    let e = trials as f64 / 3.0;
    let chi: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // chi-square, 2 degrees of freedom, p = 0.001
    assert!(chi < 13.816, "counts {counts:?}, chi-square {chi}");
}

#[test]
fn visit_order_does_not_matter() {
    let u = Universe::numbered(12).unwrap();
    let cnf = parse_expression("(S1|!S2)&(S2|S3)&(!S1|S3)").unwrap().to_cnf().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for trial in 0..10 {
        let sets = random_sets(&mut rng, 3, &u);
        let plain = protocol3_generic(&cnf, &sets, &u, ResultMode::Elements, &opts(trial)).unwrap();
        let shuffled = RunOptions {
            randomize_order: true,
            ..opts(trial + 100)
        };
        let other = protocol3_generic(&cnf, &sets, &u, ResultMode::Elements, &shuffled).unwrap();
        assert_eq!(plain.result, other.result);
    }
}

#[test]
fn modes_agree_on_the_same_seed() {
    let u = Universe::numbered(16).unwrap();
    let cnf = parse_expression("(S1|S2)&(!S3)").unwrap().to_cnf().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for trial in 0..5 {
        let sets = random_sets(&mut rng, 3, &u);
        let e = protocol3_generic(&cnf, &sets, &u, ResultMode::Elements, &opts(trial)).unwrap();
        let c = protocol3_generic(&cnf, &sets, &u, ResultMode::Cardinality, &opts(trial)).unwrap();
        let ProtocolResult::Elements { elements } = result(&e) else { panic!() };
        assert_eq!(result(&c), ProtocolResult::Cardinality { count: elements.len() as u64 });
        assert_eq!(e.stats.unwrap().zeros, c.stats.unwrap().zeros);
    }
}

#[test]
fn every_attending_party_touches_every_cell_once() {
    let u = Universe::numbered(7).unwrap();
    let cnf = parse_expression("(S1|S2)&(S2|!S3)").unwrap().to_cnf().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let sets = random_sets(&mut rng, 3, &u);
    let spec = ClusterSpec {
        sets: sets.clone(),
        vector_len: u.len(),
        adversary: None,
    };
    let protocol = HeProtocol::Generic(cnf.clone());
    let (_, repo) = run_local(&spec, &opts(17), |c, t| c.run_he(t, &protocol, ResultMode::Elements, &u)).unwrap();
    let log = repo.full_log(Role::Party(PartyId(1))).unwrap();
    let mut ops: BTreeMap<(PartyId, String), Vec<usize>> = BTreeMap::new();
    for e in &log {
        if matches!(e.action, Action::ReplaceCell | Action::MultiplyCell) {
            ops.entry((e.actor, e.label.clone())).or_default().push(e.cell.unwrap());
        }
    }
    for (k, clause) in cnf.clauses().iter().enumerate() {
        let label = format!("W^{}", k + 1);
        for p in PartyId::all(3) {
            let cells = ops.get(&(p, label.clone())).cloned().unwrap_or_default();
            if clause.iter().any(|l| l.party == p) {
                assert_eq!(cells, (0..u.len()).collect::<Vec<_>>(), "{p} on {label}");
            } else {
                assert!(cells.is_empty(), "{p} should not attend {label}");
            }
        }
    }
}

#[test]
fn clone_padding_hides_the_zero_count() {
    let u = Universe::numbered(6).unwrap();
    let e = u.elements()[1].clone();
    let sets = sets_of(&[&[&e], &[&e]]);
    let mut sizes = BTreeSet::new();
    let mut zeros = BTreeSet::new();
    for seed in 0..10 {
        let r = protocol2_intersection(&sets, &u, ResultMode::Emptiness, &opts(seed)).unwrap();
        assert_eq!(result(&r), ProtocolResult::Emptiness { empty: false });
        let stats = r.stats.unwrap();
        sizes.insert(stats.cells);
        zeros.insert(stats.zeros);
        assert!((2..=8).contains(&stats.zeros));
    }
    assert!(sizes.len() > 1 && zeros.len() > 1);
}

#[test]
fn decider_decrypts_each_cell_once() {
    let u = Universe::numbered(10).unwrap();
    let sets = sets_of(&[&["a1"], &["a2"], &[]]);
    let r = protocol1_union(&sets, &u, ResultMode::Elements, &opts(18)).unwrap();
    assert_eq!(r.decider_counts().decryptions, 10);
}

#[test]
fn seeded_runs_replay_exactly() {
    let u = Universe::numbered(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let sets = random_sets(&mut rng, 3, &u);
    let cnf = parse_expression("(S1|S2)&(!S3|S2)").unwrap().to_cnf().unwrap();
    let protocol = HeProtocol::Generic(cnf);
    let spec = ClusterSpec {
        sets,
        vector_len: u.len(),
        adversary: None,
    };
    let run = || {
        let (mut r, repo) =
            run_local(&spec, &opts(20), |c, t| c.run_he(t, &protocol, ResultMode::Cardinality, &u)).unwrap();
        r.timings = Default::default();
        (r, repo.export(Role::Party(PartyId(1))).unwrap())
    };
    let (a, log_a) = run();
    let (b, log_b) = run();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
}
