//! First-order representation: predicate schemas, terms, literals and
//! conjunctive formulas split into an evidence selector and a target enforcer.

mod canon;
pub mod text;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Evidence,
    Target,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Evidence => "evidence",
            Role::Target => "target",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateSchema {
    pub name: String,
    pub arg_types: Vec<TypeId>,
    pub role: Role,
}

impl PredicateSchema {
    pub fn arity(&self) -> usize {
        self.arg_types.len()
    }
}

/// The set of typed predicates a grammar, stream and model agree on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schema {
    types: Vec<String>,
    type_index: HashMap<String, TypeId>,
    preds: Vec<PredicateSchema>,
    pred_index: HashMap<String, PredId>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_type(&mut self, name: &str) -> TypeId {
        if let Some(&id) = self.type_index.get(name) {
            return id;
        }
        let id = TypeId(self.types.len() as u32);
        self.types.push(name.to_string());
        self.type_index.insert(name.to_string(), id);
        id
    }

    pub fn add_predicate(&mut self, name: &str, arg_types: &[&str], role: Role) -> Result<PredId> {
        if self.pred_index.contains_key(name) {
            return Err(Error::Schema(format!("predicate `{name}` declared twice")));
        }
        if arg_types.is_empty() {
            return Err(Error::Schema(format!("predicate `{name}` has no arguments")));
        }
        let arg_types = arg_types.iter().map(|t| self.intern_type(t)).collect();
        let id = PredId(self.preds.len() as u32);
        self.preds.push(PredicateSchema {
            name: name.to_string(),
            arg_types,
            role,
        });
        self.pred_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<PredId> {
        self.pred_index.get(name).copied()
    }

    pub fn predicate(&self, id: PredId) -> &PredicateSchema {
        &self.preds[id.0 as usize]
    }

    pub fn get(&self, id: PredId) -> Option<&PredicateSchema> {
        self.preds.get(id.0 as usize)
    }

    pub fn predicates(&self) -> impl Iterator<Item = (PredId, &PredicateSchema)> {
        self.preds
            .iter()
            .enumerate()
            .map(|(i, p)| (PredId(i as u32), p))
    }

    pub fn num_predicates(&self) -> usize {
        self.preds.len()
    }

    pub fn targets(&self) -> impl Iterator<Item = PredId> + '_ {
        self.predicates()
            .filter(|(_, p)| p.role == Role::Target)
            .map(|(id, _)| id)
    }

    pub fn is_target(&self, id: PredId) -> bool {
        self.predicate(id).role == Role::Target
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.type_index.get(name).copied()
    }

    pub fn type_name(&self, id: TypeId) -> &str {
        &self.types[id.0 as usize]
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    /// One `predicate name(t1,...) role` line per predicate, in declaration order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (_, p) in self.predicates() {
            let types: Vec<&str> = p.arg_types.iter().map(|&t| self.type_name(t)).collect();
            out.push_str(&format!(
                "predicate {}({}) {}\n",
                p.name,
                types.join(","),
                p.role.as_str()
            ));
        }
        out
    }

    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable {
    pub name: String,
    pub ty: TypeId,
}

impl Variable {
    pub fn new(name: impl Into<String>, ty: TypeId) -> Self {
        Variable {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Variable),
    Const { name: String, ty: TypeId },
}

impl Term {
    pub fn ty(&self) -> TypeId {
        match self {
            Term::Var(v) => v.ty,
            Term::Const { ty, .. } => *ty,
        }
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    pub pred: PredId,
    pub args: Vec<Term>,
    pub negated: bool,
}

impl Literal {
    /// Builds a literal, checking arity and argument types against the schema.
    pub fn new(schema: &Schema, pred: PredId, args: Vec<Term>, negated: bool) -> Result<Self> {
        let p = schema
            .get(pred)
            .ok_or_else(|| Error::Schema(format!("unknown predicate id {}", pred.0)))?;
        if p.arity() != args.len() {
            return Err(Error::Schema(format!(
                "`{}` expects {} arguments, got {}",
                p.name,
                p.arity(),
                args.len()
            )));
        }
        for (i, (t, &expected)) in args.iter().zip(&p.arg_types).enumerate() {
            if t.ty() != expected {
                return Err(Error::Schema(format!(
                    "argument {} of `{}` has type {}, expected {}",
                    i + 1,
                    p.name,
                    schema.type_name(t.ty()),
                    schema.type_name(expected)
                )));
            }
        }
        Ok(Literal { pred, args, negated })
    }

    /// Convenience constructor from names, inferring term types from the schema.
    /// Lowercase-initial names are variables, anything else a constant.
    pub fn build(schema: &Schema, pred: &str, args: &[&str], negated: bool) -> Result<Self> {
        let id = schema
            .lookup(pred)
            .ok_or_else(|| Error::Schema(format!("unknown predicate `{pred}`")))?;
        let p = schema.predicate(id);
        if p.arity() != args.len() {
            return Err(Error::Schema(format!(
                "`{}` expects {} arguments, got {}",
                p.name,
                p.arity(),
                args.len()
            )));
        }
        let terms = args
            .iter()
            .zip(&p.arg_types)
            .map(|(a, &ty)| {
                if text::is_variable_name(a) {
                    Term::Var(Variable::new(*a, ty))
                } else {
                    Term::Const {
                        name: a.to_string(),
                        ty,
                    }
                }
            })
            .collect();
        Literal::new(schema, id, terms, negated)
    }

    /// A ground literal; every argument is taken as a constant name.
    pub fn ground(schema: &Schema, pred: &str, consts: &[&str], negated: bool) -> Result<Self> {
        let id = schema
            .lookup(pred)
            .ok_or_else(|| Error::Schema(format!("unknown predicate `{pred}`")))?;
        let types = &schema.predicate(id).arg_types;
        if types.len() != consts.len() {
            return Err(Error::Schema(format!("arity mismatch for `{pred}`")));
        }
        let args = consts
            .iter()
            .zip(types)
            .map(|(c, &ty)| Term::Const {
                name: c.to_string(),
                ty,
            })
            .collect();
        Literal::new(schema, id, args, negated)
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const { .. }))
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.args.iter().filter_map(Term::as_var)
    }

    pub fn negate(&self) -> Self {
        Literal {
            negated: !self.negated,
            ..self.clone()
        }
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> impl fmt::Display + 'a {
        LiteralDisplay { lit: self, schema }
    }
}

struct LiteralDisplay<'a> {
    lit: &'a Literal,
    schema: &'a Schema,
}

impl fmt::Display for LiteralDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lit.negated {
            f.write_str("!")?;
        }
        write!(f, "{}(", self.schema.predicate(self.lit.pred).name)?;
        for (i, t) in self.lit.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match t {
                Term::Var(v) => f.write_str(&v.name)?,
                Term::Const { name, .. } => f.write_str(&text::quote_constant(name))?,
            }
        }
        f.write_str(")")
    }
}

/// How the target literals of a formula are connected.
///
/// `Implication(k)` makes the k-th target literal (0-based, in literal order)
/// the consequent of the remaining target literals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConnectiveForm {
    Conjunction,
    Implication(usize),
}

/// An ordered set of literals, read as `E ∧ Q` (conjunction) or
/// `E ∧ (∧_{i≠k} Q_i ⇒ Q_k)` (implication).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConjunctiveFormula {
    literals: Vec<Literal>,
    form: ConnectiveForm,
}

impl ConjunctiveFormula {
    pub fn new(schema: &Schema, literals: Vec<Literal>, form: ConnectiveForm) -> Result<Self> {
        let f = ConjunctiveFormula { literals, form };
        f.validate(schema)?;
        Ok(f)
    }

    pub fn conjunction(schema: &Schema, literals: Vec<Literal>) -> Result<Self> {
        Self::new(schema, literals, ConnectiveForm::Conjunction)
    }

    fn validate(&self, schema: &Schema) -> Result<()> {
        if self.literals.is_empty() {
            return Err(Error::Formula("formula has no literals".into()));
        }
        let mut types: HashMap<&str, TypeId> = HashMap::new();
        for lit in &self.literals {
            let checked = Literal::new(schema, lit.pred, lit.args.clone(), lit.negated)?;
            for v in checked.variables() {
                if let Some(&ty) = types.get(v.name.as_str()) {
                    if ty != v.ty {
                        return Err(Error::Formula(format!(
                            "variable `{}` used with types {} and {}",
                            v.name,
                            schema.type_name(ty),
                            schema.type_name(v.ty)
                        )));
                    }
                }
            }
            for v in lit.variables() {
                types.insert(&v.name, v.ty);
            }
        }
        let targets = self.target_count(schema);
        if targets == 0 {
            return Err(Error::Formula("formula has no target literal".into()));
        }
        if let ConnectiveForm::Implication(k) = self.form {
            if targets < 2 {
                return Err(Error::Formula(
                    "implication form needs at least two target literals".into(),
                ));
            }
            if k >= targets {
                return Err(Error::Formula(format!(
                    "consequent index {k} out of range for {targets} target literals"
                )));
            }
        }
        let bound: BTreeSet<&str> = self
            .literals
            .iter()
            .filter(|l| !l.negated && !schema.is_target(l.pred))
            .flat_map(|l| l.variables().map(|v| v.name.as_str()))
            .collect();
        for lit in self
            .literals
            .iter()
            .filter(|l| l.negated && !schema.is_target(l.pred))
        {
            if let Some(v) = lit.variables().find(|v| !bound.contains(v.name.as_str())) {
                return Err(Error::Formula(format!(
                    "unsafe negation: variable `{}` of `{}` is not bound by a positive evidence literal",
                    v.name,
                    lit.display(schema)
                )));
            }
        }
        Ok(())
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn form(&self) -> ConnectiveForm {
        self.form
    }

    pub fn with_form(&self, schema: &Schema, form: ConnectiveForm) -> Result<Self> {
        Self::new(schema, self.literals.clone(), form)
    }

    pub fn target_count(&self, schema: &Schema) -> usize {
        self.literals
            .iter()
            .filter(|l| schema.is_target(l.pred))
            .count()
    }

    /// Splits into the selector (evidence literals) and enforcer (target
    /// literals), both in formula order.
    pub fn split(&self, schema: &Schema) -> (Vec<Literal>, Vec<Literal>) {
        self.literals
            .iter()
            .cloned()
            .partition(|l| !schema.is_target(l.pred))
    }

    /// Variables in first-occurrence order.
    pub fn variables(&self) -> Vec<Variable> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in self.literals.iter().flat_map(Literal::variables) {
            if seen.insert(v.name.clone()) {
                out.push(v.clone());
            }
        }
        out
    }

    /// Index into `literals()` of the consequent, if any.
    pub fn consequent_position(&self, schema: &Schema) -> Option<usize> {
        match self.form {
            ConnectiveForm::Conjunction => None,
            ConnectiveForm::Implication(k) => self
                .literals
                .iter()
                .enumerate()
                .filter(|(_, l)| schema.is_target(l.pred))
                .nth(k)
                .map(|(i, _)| i),
        }
    }

    /// Normal form under variable renaming and literal reordering.
    pub fn canonicalize(&self, schema: &Schema) -> Self {
        canon::canonicalize(self, schema)
    }

    /// Same literal multiset, read as a pure conjunction.
    pub fn as_conjunction(&self) -> Self {
        ConjunctiveFormula {
            literals: self.literals.clone(),
            form: ConnectiveForm::Conjunction,
        }
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> impl fmt::Display + 'a {
        FormulaDisplay { f: self, schema }
    }

    pub fn to_text(&self, schema: &Schema) -> String {
        self.display(schema).to_string()
    }

    pub fn parse(schema: &Schema, src: &str) -> Result<Self> {
        text::parse_formula(schema, src)
    }

    pub(crate) fn from_parts_unchecked(literals: Vec<Literal>, form: ConnectiveForm) -> Self {
        ConjunctiveFormula { literals, form }
    }
}

struct FormulaDisplay<'a> {
    f: &'a ConjunctiveFormula,
    schema: &'a Schema,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let consequent = self.f.consequent_position(self.schema);
        let mut first = true;
        for (i, lit) in self.f.literals.iter().enumerate() {
            if Some(i) == consequent {
                continue;
            }
            if !first {
                f.write_str(" ^ ")?;
            }
            first = false;
            write!(f, "{}", lit.display(self.schema))?;
        }
        if let Some(c) = consequent {
            write!(f, " => {}", self.f.literals[c].display(self.schema))?;
        }
        Ok(())
    }
}
