//! Tokenizer and parser for the literal syntax shared by formula text,
//! grammar files and model files.
//!
//! Names starting with a lowercase letter or `_` are variables; anything
//! else (including quoted strings) is a constant.

use super::{ConjunctiveFormula, ConnectiveForm, Literal, Schema, Term, Variable};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    Caret,
    Bang,
    Arrow,
    QArrow,
    Pipe,
    Colon,
    Assign,
    LBracket,
    RBracket,
    Eq,
}

pub fn is_variable_name(name: &str) -> bool {
    name.chars()
        .next()
        .is_some_and(|c| c.is_ascii_lowercase() || c == '_')
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Renders a constant so that it parses back as the same constant.
pub fn quote_constant(name: &str) -> String {
    if !name.is_empty() && name.chars().all(is_ident_char) && !is_variable_name(name) {
        name.to_string()
    } else {
        let escaped = name.replace('\\', "\\\\").replace('"', "\\\"");
        format!("\"{escaped}\"")
    }
}

pub(crate) fn tokenize(src: &str, line: usize) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(c) = chars.next() {
        let tok = match c {
            c if c.is_whitespace() => continue,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '^' | '∧' => Tok::Caret,
            '!' | '~' | '¬' => Tok::Bang,
            '⇒' => Tok::Arrow,
            '|' => Tok::Pipe,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '=' => {
                if chars.peek() == Some(&'>') {
                    chars.next();
                    Tok::Arrow
                } else {
                    Tok::Eq
                }
            }
            '?' => {
                if chars.next() == Some('=') && chars.next() == Some('>') {
                    Tok::QArrow
                } else {
                    return Err(Error::syntax(line, "expected `?=>`"));
                }
            }
            ':' => {
                if chars.peek() == Some(&'=') {
                    chars.next();
                    Tok::Assign
                } else {
                    Tok::Colon
                }
            }
            '"' => {
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err(Error::syntax(line, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(e) => s.push(e),
                            None => return Err(Error::syntax(line, "unterminated string")),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Quoted(s)
            }
            c if is_ident_char(c) => {
                let mut s = String::from(c);
                while let Some(&n) = chars.peek() {
                    if !is_ident_char(n) {
                        break;
                    }
                    s.push(n);
                    chars.next();
                }
                Tok::Ident(s)
            }
            other => return Err(Error::syntax(line, format!("unexpected character `{other}`"))),
        };
        out.push(tok);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum RawTerm {
    Var(String),
    Const(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct RawAtom {
    pub name: String,
    pub args: Vec<RawTerm>,
    pub negated: bool,
}

pub(crate) struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    pub line: usize,
}

impl Parser {
    pub fn new(toks: Vec<Tok>, line: usize) -> Self {
        Parser { toks, pos: 0, line }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    pub fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::syntax(self.line, msg)
    }

    pub fn expect(&mut self, tok: Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(self.err(format!("expected {tok:?}, found {t:?}"))),
            None => Err(self.err(format!("expected {tok:?}, found end of line"))),
        }
    }

    pub fn ident(&mut self) -> Result<String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            Some(t) => Err(self.err(format!("expected identifier, found {t:?}"))),
            None => Err(self.err("expected identifier, found end of line")),
        }
    }

    pub fn term(&mut self) -> Result<RawTerm> {
        match self.next() {
            Some(Tok::Ident(s)) if is_variable_name(&s) => Ok(RawTerm::Var(s)),
            Some(Tok::Ident(s)) | Some(Tok::Quoted(s)) => Ok(RawTerm::Const(s)),
            Some(t) => Err(self.err(format!("expected term, found {t:?}"))),
            None => Err(self.err("expected term, found end of line")),
        }
    }

    pub fn atom(&mut self) -> Result<RawAtom> {
        let mut negated = false;
        while self.peek() == Some(&Tok::Bang) {
            self.next();
            negated = !negated;
        }
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                args.push(self.term()?);
                match self.next() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => return Err(self.err(format!("malformed argument list of `{name}`"))),
                }
            }
        } else {
            self.next();
        }
        Ok(RawAtom {
            name,
            args,
            negated,
        })
    }
}

/// Resolves a raw atom against the schema, typing terms by argument position.
pub(crate) fn resolve_atom(schema: &Schema, atom: &RawAtom, line: usize) -> Result<Literal> {
    let id = schema
        .lookup(&atom.name)
        .ok_or_else(|| Error::syntax(line, format!("unknown predicate `{}`", atom.name)))?;
    let p = schema.predicate(id);
    if p.arity() != atom.args.len() {
        return Err(Error::syntax(
            line,
            format!(
                "`{}` expects {} arguments, got {}",
                p.name,
                p.arity(),
                atom.args.len()
            ),
        ));
    }
    let args = atom
        .args
        .iter()
        .zip(&p.arg_types)
        .map(|(t, &ty)| match t {
            RawTerm::Var(v) => Term::Var(Variable::new(v.clone(), ty)),
            RawTerm::Const(c) => Term::Const {
                name: c.clone(),
                ty,
            },
        })
        .collect();
    Literal::new(schema, id, args, atom.negated)
}

/// Parses `lit ^ lit ^ ... [=> lit]`.
///
/// With an arrow and at least two target literals the formula is an
/// implication whose consequent is the literal after the arrow; with a
/// single target literal the arrow reads as a conjunction.
pub fn parse_formula(schema: &Schema, src: &str) -> Result<ConjunctiveFormula> {
    let mut p = Parser::new(tokenize(src, 1)?, 1);
    let mut lits = Vec::new();
    let mut consequent = None;
    loop {
        let atom = p.atom()?;
        lits.push(resolve_atom(schema, &atom, 1)?);
        match p.next() {
            None => break,
            Some(Tok::Caret) if consequent.is_none() => continue,
            Some(Tok::Arrow) if consequent.is_none() => {
                let atom = p.atom()?;
                let lit = resolve_atom(schema, &atom, 1)?;
                if !schema.is_target(lit.pred) {
                    return Err(p.err("consequent must be a target literal"));
                }
                lits.push(lit);
                consequent = Some(lits.len() - 1);
                if !p.at_end() {
                    return Err(p.err("trailing input after consequent"));
                }
                break;
            }
            Some(t) => return Err(p.err(format!("unexpected {t:?}"))),
        }
    }
    let targets = lits.iter().filter(|l| schema.is_target(l.pred)).count();
    let form = match consequent {
        Some(_) if targets >= 2 => ConnectiveForm::Implication(targets - 1),
        _ => ConnectiveForm::Conjunction,
    };
    ConjunctiveFormula::new(schema, lits, form)
}
