//! CNF <-> DNF conversion by distribution, with absorption.

use super::{CnfExpression, DnfExpression, ExprError, Literal};

/// Upper bound on clauses or terms produced by a conversion.
pub const MAX_NORMAL_FORM_SIZE: usize = 10_000;

/// Distributes `groups` into their cross product. Groups containing a
/// complementary pair are dropped; subsumed groups are removed.
fn distribute(groups: &[Vec<Literal>]) -> Result<Vec<Vec<Literal>>, ExprError> {
    let mut acc: Vec<Vec<Literal>> = vec![Vec::new()];
    for group in groups {
        let mut next = Vec::new();
        for partial in &acc {
            for &lit in group {
                if partial.contains(&lit.complement()) {
                    continue;
                }
                let mut g = partial.clone();
                if !g.contains(&lit) {
                    g.push(lit);
                    g.sort();
                }
                next.push(g);
            }
        }
        next.sort();
        next.dedup();
        acc = absorb(next);
        if acc.len() > MAX_NORMAL_FORM_SIZE {
            return Err(ExprError::TooLarge {
                limit: MAX_NORMAL_FORM_SIZE,
            });
        }
    }
    Ok(acc)
}

/// Removes every group that is a strict superset of another.
fn absorb(mut groups: Vec<Vec<Literal>>) -> Vec<Vec<Literal>> {
    groups.sort_by_key(Vec::len);
    let mut kept: Vec<Vec<Literal>> = Vec::with_capacity(groups.len());
    for g in groups {
        if !kept.iter().any(|k| k.iter().all(|l| g.contains(l))) {
            kept.push(g);
        }
    }
    kept.sort();
    kept
}

pub fn cnf_to_dnf(cnf: &CnfExpression) -> Result<DnfExpression, ExprError> {
    let terms = distribute(cnf.clauses())?;
    if terms.is_empty() {
        return Err(ExprError::Degenerate);
    }
    DnfExpression::new(terms)
}

pub fn dnf_to_cnf(dnf: &DnfExpression) -> Result<CnfExpression, ExprError> {
    let clauses = distribute(dnf.terms())?;
    if clauses.is_empty() {
        return Err(ExprError::Degenerate);
    }
    CnfExpression::new(clauses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roles::PartyId;
    use crate::setops::{parse_expression, SetExpression};
    use proptest::prelude::*;

    fn cnf(text: &str) -> CnfExpression {
        match parse_expression(text).unwrap() {
            SetExpression::Cnf(c) => c,
            other => panic!("{other}"),
        }
    }

    fn dnf(text: &str) -> DnfExpression {
        match parse_expression(text).unwrap() {
            SetExpression::Dnf(d) => d,
            other => panic!("{other}"),
        }
    }

    #[test]
    fn cnf_to_dnf_distributes_and_absorbs() {
        let d = cnf_to_dnf(&cnf("(S1 | S2) & (S1 | S3)")).unwrap();
        assert_eq!(d.to_string(), "(S1) | (S2 & S3)");
    }

    #[test]
    fn dnf_to_cnf_round_trip_shape() {
        let c = dnf_to_cnf(&dnf("(S1 & S2) | (S3)")).unwrap();
        assert_eq!(c.to_string(), "(S1 | S3) & (S2 | S3)");
    }

    #[test]
    fn contradictory_cnf_is_degenerate() {
        assert_eq!(
            cnf_to_dnf(&cnf("S1 & !S1")).unwrap_err(),
            ExprError::Degenerate
        );
        assert_eq!(
            dnf_to_cnf(
                &DnfExpression::new(vec![
                    vec![Literal::positive(PartyId(1))],
                    vec![Literal::negative(PartyId(1))],
                ])
                .unwrap()
            )
            .unwrap_err(),
            ExprError::Degenerate
        );
    }

    #[test]
    fn blowup_is_capped() {
        // 14 two-literal clauses over disjoint parties give 2^14 terms.
        let clauses = (0..14)
            .map(|k| {
                vec![
                    Literal::positive(PartyId(2 * k + 1)),
                    Literal::positive(PartyId(2 * k + 2)),
                ]
            })
            .collect();
        let c = CnfExpression::new(clauses).unwrap();
        assert_eq!(
            cnf_to_dnf(&c).unwrap_err(),
            ExprError::TooLarge {
                limit: MAX_NORMAL_FORM_SIZE
            }
        );
    }

    fn arb_groups(n: usize) -> impl Strategy<Value = Vec<Vec<Literal>>> {
        let lit = (1..=n, any::<bool>()).prop_map(|(p, neg)| Literal {
            party: PartyId(p),
            negated: neg,
        });
        prop::collection::vec(prop::collection::vec(lit, 1..=3), 1..=4)
    }

    proptest! {
        #[test]
        fn conversions_preserve_semantics(groups in arb_groups(4)) {
            let Ok(c) = CnfExpression::new(groups.clone()) else { return Ok(()) };
            match cnf_to_dnf(&c) {
                Ok(d) => {
                    for m in 0u32..16 {
                        let member = |p: PartyId| m & (1 << p.slot()) != 0;
                        prop_assert_eq!(c.evaluate(member), d.evaluate(member));
                    }
                    let back = dnf_to_cnf(&d);
                    if let Ok(back) = back {
                        for m in 0u32..16 {
                            let member = |p: PartyId| m & (1 << p.slot()) != 0;
                            prop_assert_eq!(c.evaluate(member), back.evaluate(member));
                        }
                    }
                }
                Err(ExprError::Degenerate) => {
                    for m in 0u32..16 {
                        prop_assert!(!c.evaluate(|p: PartyId| m & (1 << p.slot()) != 0));
                    }
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
