//! Text format for problem files (`.ip`).
//!
//! ```text
//! # comment
//! var x1 in 0..2
//! maximize 3*x1 + 2*x2 + x3
//! subject c1: 2*x1 + x2 <= 3
//! ```
//!
//! One statement per line. Products use `*`, integer powers `^`, and
//! coefficients may be written as fractions (`1/2*x1`). The constraint
//! right-hand side is a rational literal; constant terms written on the
//! left are folded into it.

use std::collections::HashMap;
use std::fmt::{self, Write};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::model::{
    format_rational, Constraint, Domain, Monomial, Polynomial, Problem, Rational, Sense, Variable,
};

/// 1-based location of a token in the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical,
    Syntax,
    DuplicateVariable,
    UndeclaredVariable,
    DuplicateConstraint,
    EmptyCost,
    EmptyConstraint,
    InvalidDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: SourceSpan,
    pub message: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            kind,
            span,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Colon,
    DotDot,
    Le,
    Ge,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Caret => f.write_str("`^`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::DotDot => f.write_str("`..`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Ge => f.write_str("`>=`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

const KEYWORDS: [&str; 4] = ["var", "in", "maximize", "subject"];

fn lex_line(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let span = |start: usize, len: usize| SourceSpan {
        line: lineno,
        column: start + 1,
        length: len.max(1),
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            Tok::Int(digits.parse().expect("ascii digits"))
        } else {
            let next = chars.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                ('<', Some('=')) => (Tok::Le, 2),
                ('>', Some('=')) => (Tok::Ge, 2),
                ('.', Some('.')) => (Tok::DotDot, 2),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('^', _) => (Tok::Caret, 1),
                (':', _) => (Tok::Colon, 1),
                _ => {
                    return Err(ParseError::new(
                        ParseErrorKind::Lexical,
                        span(start, 1),
                        format!("unexpected character `{c}`"),
                    ))
                }
            };
            i += len;
            tok
        };
        out.push(Token {
            tok,
            span: span(start, i - start),
        });
    }
    Ok(out)
}

struct Cursor<'a> {
    tokens: &'a [Token],
    pos: usize,
    /// Last character of the last token, for "unexpected end of line" errors.
    eol: SourceSpan,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::new(
                ParseErrorKind::Syntax,
                t.span,
                format!("expected {expected}, found {}", t.tok),
            ),
            None => ParseError::new(
                ParseErrorKind::Syntax,
                self.eol,
                format!("expected {expected}, found end of line"),
            ),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<&'a Token, ParseError> {
        match self.peek() {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(String, SourceSpan), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(s),
                span,
            }) => {
                self.pos += 1;
                Ok((s.clone(), *span))
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn int(&mut self, expected: &str) -> Result<(BigInt, SourceSpan), ParseError> {
        let neg = self.eat(&Tok::Minus);
        match self.peek() {
            Some(Token {
                tok: Tok::Int(n),
                span,
            }) => {
                self.pos += 1;
                Ok((if neg { -n.clone() } else { n.clone() }, *span))
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.unexpected("end of line")),
        }
    }
}

struct Builder {
    variables: Vec<Variable>,
    index: HashMap<String, usize>,
    cost: Option<Polynomial>,
    constraints: Vec<Constraint>,
}

impl Builder {
    fn polynomial(&self, cur: &mut Cursor<'_>) -> Result<Polynomial, ParseError> {
        let mut terms = Vec::new();
        let mut negate = if cur.eat(&Tok::Minus) {
            true
        } else {
            cur.eat(&Tok::Plus);
            false
        };
        loop {
            let mut term = self.term(cur)?;
            if negate {
                term.coefficient = -term.coefficient;
            }
            terms.push(term);
            negate = match cur.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => false,
                Some(Tok::Minus) => true,
                _ => break,
            };
            cur.next();
        }
        Ok(Polynomial::new(terms))
    }

    fn term(&self, cur: &mut Cursor<'_>) -> Result<Monomial, ParseError> {
        let mut coefficient = Rational::one();
        let mut factors = Vec::new();
        loop {
            match cur.next() {
                Some(Token {
                    tok: Tok::Int(n), ..
                }) => {
                    let mut value = Rational::from_integer(n.clone());
                    if cur.eat(&Tok::Slash) {
                        let (d, span) = cur.int("a denominator")?;
                        if d.is_zero() || d.is_negative() {
                            return Err(ParseError::new(
                                ParseErrorKind::Syntax,
                                span,
                                "denominator must be a positive integer",
                            ));
                        }
                        value /= Rational::from_integer(d);
                    }
                    coefficient *= value;
                }
                Some(Token {
                    tok: Tok::Ident(name),
                    span,
                }) => {
                    let idx = *self.index.get(name).ok_or_else(|| {
                        ParseError::new(
                            ParseErrorKind::UndeclaredVariable,
                            *span,
                            format!("undeclared variable `{name}`"),
                        )
                    })?;
                    let mut power = 1usize;
                    if cur.eat(&Tok::Caret) {
                        let (p, pspan) = cur.int("an exponent")?;
                        power = usize::try_from(&p).map_err(|_| {
                            ParseError::new(
                                ParseErrorKind::Syntax,
                                pspan,
                                "exponent must be a small non-negative integer",
                            )
                        })?;
                    }
                    factors.extend(std::iter::repeat(idx).take(power));
                }
                _ => {
                    cur.pos -= 1;
                    return Err(cur.unexpected("a number or variable"));
                }
            }
            if !cur.eat(&Tok::Star) {
                return Ok(Monomial::new(coefficient, factors));
            }
        }
    }

    fn rational(&self, cur: &mut Cursor<'_>) -> Result<Rational, ParseError> {
        let (n, _) = cur.int("a rational right-hand side")?;
        let mut value = Rational::from_integer(n);
        if cur.eat(&Tok::Slash) {
            let (d, span) = cur.int("a denominator")?;
            if d.is_zero() || d.is_negative() {
                return Err(ParseError::new(
                    ParseErrorKind::Syntax,
                    span,
                    "denominator must be a positive integer",
                ));
            }
            value /= Rational::from_integer(d);
        }
        Ok(value)
    }

    fn statement(&mut self, cur: &mut Cursor<'_>) -> Result<(), ParseError> {
        let (keyword, kspan) = cur.ident("`var`, `maximize` or `subject`")?;
        match keyword.as_str() {
            "var" => {
                let (name, span) = cur.ident("a variable name")?;
                if KEYWORDS.contains(&name.as_str()) {
                    return Err(ParseError::new(
                        ParseErrorKind::Syntax,
                        span,
                        format!("`{name}` is a keyword"),
                    ));
                }
                if self.index.contains_key(&name) {
                    return Err(ParseError::new(
                        ParseErrorKind::DuplicateVariable,
                        span,
                        format!("variable `{name}` declared twice"),
                    ));
                }
                match cur.ident("`in`") {
                    Ok((kw, _)) if kw == "in" => {}
                    Ok((_, s)) => {
                        return Err(ParseError::new(ParseErrorKind::Syntax, s, "expected `in`"))
                    }
                    Err(e) => return Err(e),
                }
                let (lo, lo_span) = cur.int("a lower bound")?;
                cur.expect(Tok::DotDot, "`..`")?;
                let (hi, hi_span) = cur.int("an upper bound")?;
                cur.finish()?;
                let to_i64 = |v: BigInt, s: SourceSpan| {
                    i64::try_from(v).map_err(|_| {
                        ParseError::new(ParseErrorKind::InvalidDomain, s, "bound out of range")
                    })
                };
                let (lo, hi) = (to_i64(lo, lo_span)?, to_i64(hi, hi_span)?);
                if lo > hi {
                    return Err(ParseError::new(
                        ParseErrorKind::InvalidDomain,
                        lo_span,
                        format!("empty domain {lo}..{hi}"),
                    ));
                }
                self.index.insert(name.clone(), self.variables.len());
                self.variables.push(Variable {
                    name,
                    domain: Domain::new(lo, hi),
                });
            }
            "maximize" => {
                if self.cost.is_some() {
                    return Err(ParseError::new(
                        ParseErrorKind::Syntax,
                        kspan,
                        "a second `maximize` statement",
                    ));
                }
                if cur.peek().is_none() {
                    return Err(ParseError::new(
                        ParseErrorKind::EmptyCost,
                        cur.eol,
                        "empty cost expression",
                    ));
                }
                let cost = self.polynomial(cur)?;
                cur.finish()?;
                self.cost = Some(cost);
            }
            "subject" => {
                let (name, nspan) = cur.ident("a constraint name")?;
                if self.constraints.iter().any(|c| c.name == name) {
                    return Err(ParseError::new(
                        ParseErrorKind::DuplicateConstraint,
                        nspan,
                        format!("constraint `{name}` declared twice"),
                    ));
                }
                cur.expect(Tok::Colon, "`:`")?;
                let lhs_start = cur.peek().map(|t| t.span).unwrap_or(cur.eol);
                let lhs = self.polynomial(cur)?;
                let sense = match cur.next().map(|t| &t.tok) {
                    Some(Tok::Le) => Sense::Le,
                    Some(Tok::Ge) => Sense::Ge,
                    _ => {
                        cur.pos -= 1;
                        return Err(cur.unexpected("`<=` or `>=`"));
                    }
                };
                let rhs = self.rational(cur)?;
                cur.finish()?;
                let constant = lhs.constant_term();
                let lhs = Polynomial::new(lhs.terms().iter().filter(|t| !t.is_constant()).cloned());
                if lhs.is_zero() {
                    return Err(ParseError::new(
                        ParseErrorKind::EmptyConstraint,
                        lhs_start,
                        format!("constraint `{name}` has no variable terms"),
                    ));
                }
                self.constraints
                    .push(Constraint::new(name, lhs, sense, rhs - constant));
            }
            other => {
                return Err(ParseError::new(
                    ParseErrorKind::Syntax,
                    kspan,
                    format!("unknown statement `{other}`"),
                ))
            }
        }
        Ok(())
    }
}

pub fn parse_problem(text: &str) -> Result<Problem, ParseError> {
    let mut b = Builder {
        variables: Vec::new(),
        index: HashMap::new(),
        cost: None,
        constraints: Vec::new(),
    };
    let mut last_line = 1;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let tokens = lex_line(line, lineno)?;
        if tokens.is_empty() {
            continue;
        }
        let last = tokens.last().expect("non-empty").span;
        let eol = SourceSpan {
            line: lineno,
            column: last.column + last.length - 1,
            length: 1,
        };
        let mut cur = Cursor {
            tokens: &tokens,
            pos: 0,
            eol,
        };
        b.statement(&mut cur)?;
    }
    let cost = b.cost.ok_or_else(|| {
        ParseError::new(
            ParseErrorKind::EmptyCost,
            SourceSpan {
                line: last_line,
                column: 1,
                length: 1,
            },
            "missing `maximize` statement",
        )
    })?;
    // The builder already enforced every invariant Problem::new checks.
    Ok(Problem::new(b.variables, cost, b.constraints).expect("validated while parsing"))
}

fn write_rational(out: &mut String, r: &Rational) {
    out.push_str(&format_rational(r));
}

/// Renders a polynomial using variable names.
pub fn format_polynomial(poly: &Polynomial, names: &[String]) -> String {
    if poly.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, term) in poly.terms().iter().enumerate() {
        let negative = term.coefficient.is_negative();
        match (i, negative) {
            (0, true) => out.push('-'),
            (0, false) => {}
            (_, true) => out.push_str(" - "),
            (_, false) => out.push_str(" + "),
        }
        let magnitude = term.coefficient.abs();
        let mut parts: Vec<String> = Vec::new();
        if !magnitude.is_one() || term.is_constant() {
            let mut s = String::new();
            write_rational(&mut s, &magnitude);
            parts.push(s);
        }
        let factors = term.factors();
        let mut j = 0;
        while j < factors.len() {
            let run = factors[j..].iter().take_while(|&&f| f == factors[j]).count();
            let name = &names[factors[j]];
            parts.push(if run == 1 {
                name.clone()
            } else {
                format!("{name}^{run}")
            });
            j += run;
        }
        out.push_str(&parts.join("*"));
    }
    out
}

/// Canonical text of a problem: declarations in order, then the cost, then
/// constraints. Parsing the output yields an equal problem.
pub fn format_problem(p: &Problem) -> String {
    let names: Vec<String> = p.variables().iter().map(|v| v.name.clone()).collect();
    let mut out = String::new();
    for v in p.variables() {
        writeln!(out, "var {} in {}..{}", v.name, v.domain.lo, v.domain.hi).unwrap();
    }
    writeln!(out, "maximize {}", format_polynomial(p.cost(), &names)).unwrap();
    for c in p.constraints() {
        write!(
            out,
            "subject {}: {} {} ",
            c.name,
            format_polynomial(&c.lhs, &names),
            c.sense
        )
        .unwrap();
        write_rational(&mut out, &c.rhs);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rational, ratio};

    const P1: &str = "var x1 in 0..2\nvar x2 in 0..2\nvar x3 in 0..2\nmaximize 3*x1 + 2*x2 + x3\nsubject c1: 2*x1 + x2 <= 3\nsubject c2: x2 + x3 <= 2";

    #[test]
    fn parses_p1() {
        let p = parse_problem(P1).unwrap();
        assert_eq!(p.num_variables(), 3);
        assert_eq!(p.constraints().len(), 2);
        assert_eq!(p.evaluate_cost(&[1, 1, 1]).unwrap(), rational(6));
        assert_eq!(format_problem(&p), format!("{P1}\n"));
    }

    #[test]
    fn undeclared_reference_reports_its_span() {
        let err = parse_problem("maximize x1").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndeclaredVariable);
        assert_eq!(
            err.span,
            SourceSpan {
                line: 1,
                column: 10,
                length: 2
            }
        );
    }

    #[test]
    fn cancelling_terms_vanish() {
        let p = parse_problem("var x1 in 0..2\nvar x2 in 0..2\nmaximize 2*x1*x2 + x2*x1*-2 + x1").unwrap_err();
        // `*-2` is not a factor; unary minus only starts a term
        assert_eq!(p.kind, ParseErrorKind::Syntax);
        let p = parse_problem("var x1 in 0..2\nvar x2 in 0..2\nmaximize 2*x1*x2 - x2*x1*2 + x1").unwrap();
        assert_eq!(format_polynomial(p.cost(), &["x1".into(), "x2".into()]), "x1");
    }

    #[test]
    fn fractional_coefficients_and_powers() {
        let p = parse_problem("var x1 in -1..2\nmaximize 1/2*x1 + x1^2 - 3\nsubject c: x1^3 + 1 >= -7/3").unwrap();
        let text = format_problem(&p);
        assert_eq!(
            text,
            "var x1 in -1..2\nmaximize -3 + 1/2*x1 + x1^2\nsubject c: x1^3 >= -10/3\n"
        );
        assert_eq!(p.constraints()[0].rhs, ratio(-10, 3));
        assert_eq!(parse_problem(&text).unwrap(), p);
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = parse_problem("# header\n\nvar x in 0..1 # trailing\nmaximize x\n").unwrap();
        assert_eq!(p.num_variables(), 1);
    }

    #[test]
    fn error_kinds() {
        let kind = |s: &str| parse_problem(s).unwrap_err().kind;
        assert_eq!(kind("var x in 0..1\nvar x in 0..1\nmaximize x"), ParseErrorKind::DuplicateVariable);
        assert_eq!(kind("var x in 0..1"), ParseErrorKind::EmptyCost);
        assert_eq!(kind("var x in 0..1\nmaximize"), ParseErrorKind::EmptyCost);
        assert_eq!(kind("var x in 3..1\nmaximize x"), ParseErrorKind::InvalidDomain);
        assert_eq!(kind("var x in 0..1\nmaximize x $"), ParseErrorKind::Lexical);
        assert_eq!(kind("var x in 0..1\nmaximize x\nsubject c: x < 1"), ParseErrorKind::Lexical);
        assert_eq!(kind("var x in 0..1\nmaximize x\nsubject c: x == 1"), ParseErrorKind::Lexical);
        assert_eq!(kind("var x in 0..1\nmaximize x\nsubject c: x 1"), ParseErrorKind::Syntax);
        assert_eq!(kind("var x in 0..1\nmaximize x\nsubject c: x - x <= 1"), ParseErrorKind::EmptyConstraint);
        assert_eq!(
            kind("var x in 0..1\nmaximize x\nsubject c: x <= 1\nsubject c: x <= 0"),
            ParseErrorKind::DuplicateConstraint
        );
        assert_eq!(kind("var x in 0..1\nmaximize x\nminimize x"), ParseErrorKind::Syntax);
    }

    #[test]
    fn error_spans_stay_inside_the_input() {
        for text in [
            "var x in 0..1\nmaximize x +",
            "var x in 0..1\nmaximize x\nsubject c: x <=",
            "var",
            "var x in 0..",
        ] {
            let err = parse_problem(text).unwrap_err();
            let line = text.lines().nth(err.span.line - 1).unwrap();
            assert!(err.span.column >= 1 && err.span.column + err.span.length - 1 <= line.chars().count(), "{err}");
        }
    }
}
