//! Recursive-descent parser for set expressions.
//!
//! Grammar (`&` binds tighter than `|`):
//!
//! ```text
//! expr   := conj ( '|' conj )*
//! conj   := unary ( '&' unary )*
//! unary  := '!' unary | atom
//! atom   := 'S' digits | '(' expr ')'
//! ```

use super::{CnfExpression, DnfExpression, ExprError, Literal, SetExpression};
use crate::roles::PartyId;

#[derive(Debug, Clone)]
enum Node {
    Set(PartyId),
    Not(Box<Node>, Span),
    And(Vec<Node>, Span),
    Or(Vec<Node>, Span),
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
}

impl Node {
    fn span(&self, fallback: Span) -> Span {
        match self {
            Node::Set(_) => fallback,
            Node::Not(_, s) | Node::And(_, s) | Node::Or(_, s) => *s,
        }
    }
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn syntax(&self, offset: usize, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<(Node, Span), ExprError> {
        let (first, first_span) = self.conj()?;
        let mut children = vec![first];
        let mut span = first_span;
        while self.peek() == Some(b'|') {
            self.pos += 1;
            let (next, next_span) = self.conj()?;
            span.end = next_span.end;
            children.push(next);
        }
        if children.len() == 1 {
            Ok((children.pop().unwrap(), span))
        } else {
            Ok((Node::Or(children, span), span))
        }
    }

    fn conj(&mut self) -> Result<(Node, Span), ExprError> {
        let (first, first_span) = self.unary()?;
        let mut children = vec![first];
        let mut span = first_span;
        while self.peek() == Some(b'&') {
            self.pos += 1;
            let (next, next_span) = self.unary()?;
            span.end = next_span.end;
            children.push(next);
        }
        if children.len() == 1 {
            Ok((children.pop().unwrap(), span))
        } else {
            Ok((Node::And(children, span), span))
        }
    }

    fn unary(&mut self) -> Result<(Node, Span), ExprError> {
        if self.peek() == Some(b'!') {
            let start = self.pos;
            self.pos += 1;
            let (inner, inner_span) = self.unary()?;
            let span = Span {
                start,
                end: inner_span.end,
            };
            return Ok((Node::Not(Box::new(inner), span), span));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<(Node, Span), ExprError> {
        match self.peek() {
            None => Err(self.syntax(self.pos, "unexpected end of expression")),
            Some(b'(') => {
                let start = self.pos;
                self.pos += 1;
                let (inner, _) = self.expr()?;
                if self.peek() != Some(b')') {
                    let at = self.pos;
                    return Err(match self.bytes.get(at) {
                        None => self.syntax(at, "expected ')' before end of expression"),
                        Some(c) => self.syntax(at, format!("expected ')', found '{}'", *c as char)),
                    });
                }
                self.pos += 1;
                let span = Span {
                    start,
                    end: self.pos,
                };
                // Parentheses do not create nodes; widen the span of compound nodes.
                let inner = match inner {
                    Node::Not(x, _) => Node::Not(x, span),
                    Node::And(x, _) => Node::And(x, span),
                    Node::Or(x, _) => Node::Or(x, span),
                    leaf @ Node::Set(_) => leaf,
                };
                Ok((inner, span))
            }
            Some(b'S') | Some(b's') => {
                let start = self.pos;
                self.pos += 1;
                let digits_start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if digits_start == self.pos {
                    return Err(self.syntax(digits_start, "expected a party number after 'S'"));
                }
                let index: usize = self.text[digits_start..self.pos]
                    .parse()
                    .map_err(|_| self.syntax(digits_start, "party number out of range"))?;
                if index == 0 {
                    return Err(self.syntax(digits_start, "parties are numbered from 1"));
                }
                let span = Span {
                    start,
                    end: self.pos,
                };
                Ok((Node::Set(PartyId(index)), span))
            }
            Some(c) => Err(self.syntax(self.pos, format!("unexpected character '{}'", c as char))),
        }
    }
}

fn flatten(node: Node) -> Node {
    match node {
        Node::And(children, span) => {
            let mut flat = Vec::new();
            for c in children {
                match flatten(c) {
                    Node::And(inner, _) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            Node::And(flat, span)
        }
        Node::Or(children, span) => {
            let mut flat = Vec::new();
            for c in children {
                match flatten(c) {
                    Node::Or(inner, _) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            Node::Or(flat, span)
        }
        Node::Not(inner, span) => match flatten(*inner) {
            Node::Not(x, _) => *x,
            other => Node::Not(Box::new(other), span),
        },
        leaf => leaf,
    }
}

fn as_literal(node: &Node) -> Option<Literal> {
    match node {
        Node::Set(p) => Some(Literal::positive(*p)),
        Node::Not(inner, _) => match inner.as_ref() {
            Node::Set(p) => Some(Literal::negative(*p)),
            _ => None,
        },
        _ => None,
    }
}

fn literals_of(node: &Node, want_and: bool) -> Option<Vec<Literal>> {
    if let Some(l) = as_literal(node) {
        return Some(vec![l]);
    }
    match (node, want_and) {
        (Node::And(children, _), true) | (Node::Or(children, _), false) => {
            children.iter().map(as_literal).collect()
        }
        _ => None,
    }
}

/// Parses an expression and classifies it as CNF or DNF.
///
/// Inputs that are both (a single literal, a flat intersection or a flat
/// union of literals) are returned as CNF.
pub fn parse_expression(text: &str) -> Result<SetExpression, ExprError> {
    let mut parser = Parser::new(text);
    let (root, root_span) = parser.expr()?;
    if parser.peek().is_some() {
        let at = parser.pos;
        return Err(parser.syntax(at, format!("unexpected '{}'", parser.bytes[at] as char)));
    }
    let root = flatten(root);
    let snippet = |span: Span| text[span.start..span.end].trim().to_string();

    if let Some(l) = as_literal(&root) {
        return Ok(SetExpression::Cnf(CnfExpression::new(vec![vec![l]])?));
    }
    if let Node::Not(_, span) = &root {
        return Err(ExprError::Shape {
            subterm: snippet(*span),
            reason: "complement applies to a single set only".into(),
        });
    }

    match &root {
        Node::And(children, _) => {
            let mut clauses = Vec::with_capacity(children.len());
            for child in children {
                match literals_of(child, false) {
                    Some(clause) => clauses.push(clause),
                    None => {
                        return Err(ExprError::Shape {
                            subterm: snippet(child.span(root_span)),
                            reason: "intersection operands must be unions of sets or complements"
                                .into(),
                        })
                    }
                }
            }
            Ok(SetExpression::Cnf(CnfExpression::new(clauses)?))
        }
        Node::Or(children, _) => {
            if let Some(clause) = children.iter().map(as_literal).collect::<Option<Vec<_>>>() {
                return Ok(SetExpression::Cnf(CnfExpression::new(vec![clause])?));
            }
            let mut terms = Vec::with_capacity(children.len());
            for child in children {
                match literals_of(child, true) {
                    Some(term) => terms.push(term),
                    None => {
                        return Err(ExprError::Shape {
                            subterm: snippet(child.span(root_span)),
                            reason: "union operands must be intersections of sets or complements"
                                .into(),
                        })
                    }
                }
            }
            Ok(SetExpression::Dnf(DnfExpression::new(terms)?))
        }
        _ => unreachable!("literals handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(p: usize, neg: bool) -> Literal {
        Literal {
            party: PartyId(p),
            negated: neg,
        }
    }

    #[test]
    fn parses_cnf() {
        let e = parse_expression("(S1 | S2) & (S2 | !S3)").unwrap();
        let SetExpression::Cnf(cnf) = e else {
            panic!("expected CNF")
        };
        assert_eq!(cnf.beta(), 2);
        assert_eq!(cnf.alphas(), vec![2, 2]);
        assert_eq!(cnf.clauses()[1], vec![lit(2, false), lit(3, true)]);
    }

    #[test]
    fn parses_dnf() {
        let e = parse_expression("(S1 & S2 & !S3) | (S2 & S3)").unwrap();
        let SetExpression::Dnf(dnf) = e else {
            panic!("expected DNF")
        };
        assert_eq!(dnf.terms().len(), 2);
        assert_eq!(dnf.terms()[0], vec![lit(1, false), lit(2, false), lit(3, true)]);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        let err = parse_expression("S1 & (S2").unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 8, .. }), "{err:?}");
    }

    #[test]
    fn other_syntax_errors() {
        assert!(matches!(
            parse_expression("S1 & ").unwrap_err(),
            ExprError::Syntax { offset: 5, .. }
        ));
        assert!(matches!(
            parse_expression("S1 + S2").unwrap_err(),
            ExprError::Syntax { offset: 3, .. }
        ));
        assert!(matches!(
            parse_expression("S0").unwrap_err(),
            ExprError::Syntax { offset: 1, .. }
        ));
        assert!(matches!(
            parse_expression("S1 S2").unwrap_err(),
            ExprError::Syntax { offset: 3, .. }
        ));
    }

    #[test]
    fn flat_forms_are_cnf() {
        assert_eq!(parse_expression("S1").unwrap().to_string(), "(S1)");
        assert_eq!(parse_expression("S1 | S2 | S3").unwrap().to_string(), "(S1 | S2 | S3)");
        assert_eq!(parse_expression("S1 & !S2").unwrap().to_string(), "(S1) & (!S2)");
        assert_eq!(parse_expression("!!S2").unwrap().to_string(), "(S2)");
    }

    #[test]
    fn precedence_without_parens() {
        let e = parse_expression("S1 & S2 | S3").unwrap();
        assert_eq!(e.to_string(), "(S1 & S2) | (S3)");
    }

    #[test]
    fn nested_forms_name_the_offending_subterm() {
        match parse_expression("S1 & (S2 | (S3 & S4))").unwrap_err() {
            ExprError::Shape { subterm, .. } => assert_eq!(subterm, "(S2 | (S3 & S4))"),
            other => panic!("{other:?}"),
        }
        match parse_expression("!(S1 & S2) | S3").unwrap_err() {
            ExprError::Shape { subterm, .. } => assert_eq!(subterm, "!(S1 & S2)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tautological_clause_is_rejected() {
        assert!(matches!(
            parse_expression("(S1 | !S1) & S2").unwrap_err(),
            ExprError::Tautology { .. }
        ));
        assert!(matches!(
            parse_expression("(S1 & !S1) | (S2 & S3)").unwrap_err(),
            ExprError::Contradiction { .. }
        ));
    }
}
