//! QDIMACS reader and canonical writer. Plain DIMACS CNF is the special case
//! without quantifier lines.

use std::fmt::Write as _;
use std::io;

use thiserror::Error;

use crate::formula::{Clause, Lit, QbfFormula, QuantBlock, Quantifier, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no `p cnf` header before line {line}")]
    MissingHeader { line: usize },
    #[error("line {line}: malformed header")]
    BadHeader { line: usize },
    #[error("line {line}: second header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: unexpected token `{token}`")]
    BadToken { line: usize, token: String },
    #[error("line {line}: literal {lit} exceeds declared variable count {num_vars}")]
    LiteralOutOfRange { line: usize, lit: i64, num_vars: u32 },
    #[error("line {line}: missing 0 terminator")]
    MissingTerminator { line: usize },
    #[error("line {line}: variable {var} quantified twice")]
    QuantifiedTwice { line: usize, var: u32 },
    #[error("line {line}: quantifier line after the first clause")]
    QuantifierAfterClause { line: usize },
    #[error("line {line}: empty clause")]
    EmptyClause { line: usize },
    #[error("input contains no header")]
    Empty,
}

/// Parses QDIMACS text.
///
/// Variables not named on any quantifier line form a trailing existential
/// block. Tautological clauses are dropped and repeated literals collapsed.
pub fn parse_qdimacs(text: &str) -> Result<QbfFormula, ParseError> {
    let mut num_vars: Option<u32> = None;
    let mut quantified: Vec<bool> = Vec::new();
    let mut prefix: Vec<QuantBlock> = Vec::new();
    let mut matrix: Vec<Clause> = Vec::new();
    let mut pending: Vec<Lit> = Vec::new();
    let mut pending_line = 0;
    let mut in_matrix = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        if trimmed.starts_with('%') {
            break;
        }
        let mut tokens = trimmed.split_whitespace();
        let first = tokens.next().unwrap_or_default();

        if first == "p" {
            if num_vars.is_some() {
                return Err(ParseError::DuplicateHeader { line });
            }
            let fields: Vec<&str> = tokens.collect();
            let n = match fields.as_slice() {
                [fmt, n, m] if *fmt == "cnf" => {
                    let n: u32 = n.parse().map_err(|_| ParseError::BadHeader { line })?;
                    let _: u64 = m.parse().map_err(|_| ParseError::BadHeader { line })?;
                    n
                }
                _ => return Err(ParseError::BadHeader { line }),
            };
            num_vars = Some(n);
            quantified = vec![false; n as usize];
            continue;
        }
        let Some(n) = num_vars else {
            return Err(ParseError::MissingHeader { line });
        };

        if first == "a" || first == "e" {
            if in_matrix {
                return Err(ParseError::QuantifierAfterClause { line });
            }
            let quantifier = if first == "a" {
                Quantifier::Universal
            } else {
                Quantifier::Existential
            };
            let mut vars = Vec::new();
            let mut terminated = false;
            for tok in tokens {
                if terminated {
                    return Err(bad_token(line, tok));
                }
                let v: i64 = tok.parse().map_err(|_| bad_token(line, tok))?;
                if v == 0 {
                    terminated = true;
                    continue;
                }
                if v < 0 {
                    return Err(bad_token(line, tok));
                }
                if v > i64::from(n) {
                    return Err(ParseError::LiteralOutOfRange { line, lit: v, num_vars: n });
                }
                let var = Var::new(v as u32);
                if std::mem::replace(&mut quantified[var.index()], true) {
                    return Err(ParseError::QuantifiedTwice { line, var: var.id() });
                }
                vars.push(var);
            }
            if !terminated {
                return Err(ParseError::MissingTerminator { line });
            }
            prefix.push(QuantBlock::new(quantifier, vars));
            continue;
        }

        in_matrix = true;
        for tok in std::iter::once(first).chain(tokens) {
            let l: i64 = tok.parse().map_err(|_| bad_token(line, tok))?;
            if l == 0 {
                if pending.is_empty() {
                    return Err(ParseError::EmptyClause { line });
                }
                if let Some(c) = Clause::normalize(pending.drain(..)) {
                    matrix.push(c);
                }
                pending.clear();
                continue;
            }
            if l.unsigned_abs() > u64::from(n) {
                return Err(ParseError::LiteralOutOfRange { line, lit: l, num_vars: n });
            }
            if pending.is_empty() {
                pending_line = line;
            }
            pending.push(Lit::new(Var::new(l.unsigned_abs() as u32), l > 0));
        }
    }

    let Some(n) = num_vars else {
        return Err(ParseError::Empty);
    };
    if !pending.is_empty() {
        return Err(ParseError::MissingTerminator { line: pending_line });
    }
    Ok(QbfFormula::with_num_vars(n, prefix, matrix)
        .expect("quantifier uniqueness checked while parsing"))
}

/// Canonical QDIMACS text: header, one line per quantifier block, one line
/// per clause, no comments.
pub fn write_qdimacs(f: &QbfFormula) -> String {
    let mut out = String::new();
    writeln!(out, "p cnf {} {}", f.num_vars(), f.num_clauses()).unwrap();
    for block in f.prefix() {
        out.push(match block.quantifier {
            Quantifier::Universal => 'a',
            Quantifier::Existential => 'e',
        });
        for v in &block.vars {
            write!(out, " {v}").unwrap();
        }
        out.push_str(" 0\n");
    }
    for clause in f.matrix() {
        writeln!(out, "{clause}").unwrap();
    }
    out
}

pub fn write_qdimacs_to<W: io::Write>(f: &QbfFormula, mut w: W) -> io::Result<()> {
    w.write_all(write_qdimacs(f).as_bytes())
}

fn bad_token(line: usize, tok: &str) -> ParseError {
    ParseError::BadToken {
        line,
        token: tok.to_string(),
    }
}
