//! Subgraph databases under the closed-world assumption, with
//! predicate and (predicate, position, constant) indexes, and an
//! index-backed join over conjunctions of literals.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::logic::{Literal, PredId, Schema, Term, TypeId, Variable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub pred: PredId,
    pub args: Vec<ConstId>,
}

#[derive(Clone, Debug, Default)]
struct Relation {
    arity: usize,
    rows: Vec<ConstId>,
    members: HashSet<Vec<ConstId>>,
    index: HashMap<(usize, ConstId), Vec<u32>>,
}

impl Relation {
    fn len(&self) -> usize {
        self.members.len()
    }

    fn row(&self, i: usize) -> &[ConstId] {
        &self.rows[i * self.arity..(i + 1) * self.arity]
    }
}

/// A variable-to-constant mapping, as returned by [`Database::satisfying_bindings`].
pub type Substitution = BTreeMap<Variable, String>;

/// One streamed subgraph: typed constants plus the set of true ground atoms.
/// Every other type-consistent ground atom is false.
#[derive(Clone, Debug)]
pub struct Database {
    schema: Arc<Schema>,
    names: Vec<String>,
    ids: HashMap<String, ConstId>,
    domains: Vec<Vec<ConstId>>,
    domain_members: Vec<HashSet<ConstId>>,
    relations: Vec<Relation>,
    hidden: Vec<PredId>,
}

impl PartialEq for Database {
    fn eq(&self, other: &Self) -> bool {
        let atoms = |db: &Database| -> Vec<(String, Vec<String>)> {
            let mut v: Vec<_> = db
                .atoms()
                .map(|a| {
                    (
                        db.schema.predicate(a.pred).name.clone(),
                        a.args.iter().map(|&c| db.const_name(c).to_string()).collect(),
                    )
                })
                .collect();
            v.sort();
            v
        };
        self.schema.to_text() == other.schema.to_text()
            && atoms(self) == atoms(other)
            && self.hidden == other.hidden
    }
}

impl Database {
    pub fn new(schema: Arc<Schema>) -> Self {
        let relations = schema
            .predicates()
            .map(|(_, p)| Relation {
                arity: p.arity(),
                ..Relation::default()
            })
            .collect();
        let ntypes = schema.num_types();
        Database {
            schema,
            names: Vec::new(),
            ids: HashMap::new(),
            domains: vec![Vec::new(); ntypes],
            domain_members: vec![HashSet::new(); ntypes],
            relations,
            hidden: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn intern(&mut self, name: &str) -> ConstId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = ConstId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    /// Adds a true atom. Returns false if it was already present.
    pub fn insert(&mut self, pred: &str, args: &[&str]) -> Result<bool> {
        let id = self
            .schema
            .lookup(pred)
            .ok_or_else(|| Error::Schema(format!("unknown predicate `{pred}`")))?;
        let p = self.schema.predicate(id);
        if p.arity() != args.len() {
            return Err(Error::Schema(format!(
                "`{pred}` expects {} arguments, got {}",
                p.arity(),
                args.len()
            )));
        }
        let ids: Vec<ConstId> = args.iter().map(|a| self.intern(a)).collect();
        Ok(self.insert_ids(id, ids))
    }

    pub fn insert_atom(&mut self, atom: GroundAtom) -> bool {
        self.insert_ids(atom.pred, atom.args)
    }

    fn insert_ids(&mut self, pred: PredId, args: Vec<ConstId>) -> bool {
        let types = self.schema.predicate(pred).arg_types.clone();
        let rel = &mut self.relations[pred.0 as usize];
        if rel.members.contains(&args) {
            return false;
        }
        let row = (rel.rows.len() / rel.arity.max(1)) as u32;
        for (pos, &c) in args.iter().enumerate() {
            rel.index.entry((pos, c)).or_default().push(row);
        }
        rel.rows.extend_from_slice(&args);
        rel.members.insert(args.clone());
        for (&c, ty) in args.iter().zip(types) {
            if self.domain_members[ty.0 as usize].insert(c) {
                self.domains[ty.0 as usize].push(c);
            }
        }
        true
    }

    /// Declares the constant (interning it) as a member of a type's domain.
    pub fn add_constant(&mut self, ty: TypeId, name: &str) -> ConstId {
        let c = self.intern(name);
        if self.domain_members[ty.0 as usize].insert(c) {
            self.domains[ty.0 as usize].push(c);
        }
        c
    }

    pub fn hide(&mut self, pred: PredId) {
        if !self.hidden.contains(&pred) {
            self.hidden.push(pred);
        }
    }

    /// Target predicates marked as the query set by `?hide` directives.
    pub fn hidden_predicates(&self) -> &[PredId] {
        &self.hidden
    }

    pub fn const_id(&self, name: &str) -> Option<ConstId> {
        self.ids.get(name).copied()
    }

    pub fn const_name(&self, id: ConstId) -> &str {
        &self.names[id.0 as usize]
    }

    /// Constants observed at positions of the given type, in first-seen order.
    pub fn domain(&self, ty: TypeId) -> &[ConstId] {
        self.domains
            .get(ty.0 as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.contains_ids(atom.pred, &atom.args)
    }

    pub(crate) fn contains_ids(&self, pred: PredId, args: &[ConstId]) -> bool {
        self.relations[pred.0 as usize].members.contains(args)
    }

    pub fn count(&self, pred: PredId) -> usize {
        self.relations[pred.0 as usize].len()
    }

    pub fn num_atoms(&self) -> usize {
        self.relations.iter().map(Relation::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_atoms() == 0
    }

    /// True atoms, grouped by predicate in declaration order then insertion order.
    pub fn atoms(&self) -> impl Iterator<Item = GroundAtom> + '_ {
        self.relations.iter().enumerate().flat_map(|(p, rel)| {
            (0..rel.len()).map(move |i| GroundAtom {
                pred: PredId(p as u32),
                args: rel.row(i).to_vec(),
            })
        })
    }

    pub fn ground_atom(&self, pred: &str, args: &[&str]) -> Result<GroundAtom> {
        let id = self
            .schema
            .lookup(pred)
            .ok_or_else(|| Error::Schema(format!("unknown predicate `{pred}`")))?;
        if self.schema.predicate(id).arity() != args.len() {
            return Err(Error::Schema(format!("arity mismatch for `{pred}`")));
        }
        let args = args
            .iter()
            .map(|a| {
                self.const_id(a)
                    .ok_or_else(|| Error::Schema(format!("unknown constant `{a}`")))
            })
            .collect::<Result<_>>()?;
        Ok(GroundAtom { pred: id, args })
    }

    pub fn atom_text(&self, atom: &GroundAtom) -> String {
        let args: Vec<&str> = atom.args.iter().map(|&c| self.const_name(c)).collect();
        format!(
            "{}({})",
            self.schema.predicate(atom.pred).name,
            args.join(",")
        )
    }

    /// Every type-consistent grounding of `pred` over this subgraph's domains.
    pub fn type_groundings(&self, pred: PredId) -> Vec<GroundAtom> {
        let types = &self.schema.predicate(pred).arg_types;
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(types.len());
        fn rec(
            db: &Database,
            pred: PredId,
            types: &[TypeId],
            cur: &mut Vec<ConstId>,
            out: &mut Vec<GroundAtom>,
        ) {
            if cur.len() == types.len() {
                out.push(GroundAtom {
                    pred,
                    args: cur.clone(),
                });
                return;
            }
            for &c in db.domain(types[cur.len()]) {
                cur.push(c);
                rec(db, pred, types, cur, out);
                cur.pop();
            }
        }
        rec(self, pred, types, &mut cur, &mut out);
        out
    }

    fn check_known(&self, lit: &Literal) -> Result<()> {
        if self.schema.get(lit.pred).is_none() {
            return Err(Error::Schema(format!("unknown predicate id {}", lit.pred.0)));
        }
        Ok(())
    }

    /// Truth of a ground literal under the closed world.
    pub fn holds(&self, lit: &Literal) -> Result<bool> {
        self.check_known(lit)?;
        let mut args = Vec::with_capacity(lit.args.len());
        for t in &lit.args {
            match t {
                Term::Const { name, .. } => args.push(
                    self.const_id(name)
                        .ok_or_else(|| Error::Schema(format!("unknown constant `{name}`")))?,
                ),
                Term::Var(v) => {
                    return Err(Error::Formula(format!(
                        "literal is not ground: variable `{}`",
                        v.name
                    )))
                }
            }
        }
        Ok(self.contains_ids(lit.pred, &args) != lit.negated)
    }

    /// All substitutions over the variables of `lits` that make every
    /// literal hold. Negated literals must be safe: each of their variables
    /// has to occur in some positive literal.
    pub fn satisfying_bindings(&self, lits: &[Literal]) -> Result<Vec<Substitution>> {
        if lits.is_empty() {
            return Err(Error::Formula("empty literal list".into()));
        }
        for lit in lits {
            self.check_known(lit)?;
        }
        let positive_vars: HashSet<&str> = lits
            .iter()
            .filter(|l| !l.negated)
            .flat_map(|l| l.variables().map(|v| v.name.as_str()))
            .collect();
        for lit in lits.iter().filter(|l| l.negated) {
            if let Some(v) = lit
                .variables()
                .find(|v| !positive_vars.contains(v.name.as_str()))
            {
                return Err(Error::Formula(format!(
                    "unsafe negation: `{}` is not bound by a positive literal",
                    v.name
                )));
            }
        }
        let query = Query::compile(self, lits, &[]);
        let mut out = Vec::new();
        query.for_each(self, |row| {
            out.push(
                query
                    .vars
                    .iter()
                    .zip(row)
                    .map(|(v, &c)| (v.clone(), self.const_name(c).to_string()))
                    .collect(),
            );
        });
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Slot {
    Var(usize),
    Const(ConstId),
    /// A constant that does not occur in this database.
    Missing,
}

#[derive(Clone, Debug)]
pub(crate) struct CompiledLit {
    pub pred: PredId,
    pub slots: Vec<Slot>,
    pub negated: bool,
}

impl CompiledLit {
    /// Ground atom arguments under a full binding, `None` if a constant is missing.
    pub fn ground(&self, row: &[ConstId], buf: &mut Vec<ConstId>) -> bool {
        buf.clear();
        for s in &self.slots {
            match *s {
                Slot::Var(v) => buf.push(row[v]),
                Slot::Const(c) => buf.push(c),
                Slot::Missing => return false,
            }
        }
        true
    }

    /// Closed-world truth under a full binding.
    pub fn holds(&self, db: &Database, row: &[ConstId], buf: &mut Vec<ConstId>) -> bool {
        let present = self.ground(row, buf) && db.contains_ids(self.pred, buf);
        present != self.negated
    }
}

/// A conjunctive query compiled against one database. Variables are
/// numbered in `vars` order; variables that no positive literal binds
/// range over their type's domain.
#[derive(Clone, Debug)]
pub(crate) struct Query {
    pub vars: Vec<Variable>,
    positive: Vec<CompiledLit>,
    negative: Vec<CompiledLit>,
    free: Vec<usize>,
    unsatisfiable: bool,
}

impl Query {
    pub fn var_index(vars: &mut Vec<Variable>, v: &Variable) -> usize {
        match vars.iter().position(|x| x.name == v.name) {
            Some(i) => i,
            None => {
                vars.push(v.clone());
                vars.len() - 1
            }
        }
    }

    pub fn compile_lit(db: &Database, lit: &Literal, vars: &mut Vec<Variable>) -> CompiledLit {
        let slots = lit
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => Slot::Var(Self::var_index(vars, v)),
                Term::Const { name, .. } => db.const_id(name).map_or(Slot::Missing, Slot::Const),
            })
            .collect();
        CompiledLit {
            pred: lit.pred,
            slots,
            negated: lit.negated,
        }
    }

    /// `extra` lists additional variables (ranged over their domain when no
    /// literal binds them) that should appear in every binding.
    pub fn compile(db: &Database, lits: &[Literal], extra: &[Variable]) -> Query {
        let mut vars = Vec::new();
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for lit in lits {
            let c = Self::compile_lit(db, lit, &mut vars);
            if lit.negated {
                negative.push(c);
            } else {
                positive.push(c);
            }
        }
        for v in extra {
            Self::var_index(&mut vars, v);
        }
        let mut bound = vec![false; vars.len()];
        for l in &positive {
            for s in &l.slots {
                if let Slot::Var(v) = s {
                    bound[*v] = true;
                }
            }
        }
        let free = (0..vars.len()).filter(|&v| !bound[v]).collect();
        let unsatisfiable = positive
            .iter()
            .any(|l| l.slots.contains(&Slot::Missing));
        // a negated literal over a missing constant is always true
        negative.retain(|l| !l.slots.contains(&Slot::Missing));
        Query {
            vars,
            positive,
            negative,
            free,
            unsatisfiable,
        }
    }

    pub fn for_each(&self, db: &Database, mut f: impl FnMut(&[ConstId])) {
        if self.unsatisfiable {
            return;
        }
        let mut row = vec![ConstId(u32::MAX); self.vars.len()];
        let mut bound = vec![false; self.vars.len()];
        let mut remaining: Vec<usize> = (0..self.positive.len()).collect();
        let mut buf = Vec::new();
        self.join(db, &mut row, &mut bound, &mut remaining, &mut buf, &mut f);
    }

    fn estimate(&self, db: &Database, lit: &CompiledLit, row: &[ConstId], bound: &[bool]) -> usize {
        let rel = &db.relations[lit.pred.0 as usize];
        let mut best = rel.len();
        for (pos, s) in lit.slots.iter().enumerate() {
            let key = match *s {
                Slot::Const(c) => Some(c),
                Slot::Var(v) if bound[v] => Some(row[v]),
                _ => None,
            };
            if let Some(c) = key {
                best = best.min(rel.index.get(&(pos, c)).map_or(0, Vec::len));
            }
        }
        best
    }

    fn join(
        &self,
        db: &Database,
        row: &mut Vec<ConstId>,
        bound: &mut Vec<bool>,
        remaining: &mut Vec<usize>,
        buf: &mut Vec<ConstId>,
        f: &mut dyn FnMut(&[ConstId]),
    ) {
        if remaining.is_empty() {
            self.range_free(db, 0, row, buf, f);
            return;
        }
        // most selective remaining literal first
        let (slot_in_remaining, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &l)| (i, self.estimate(db, &self.positive[l], row, bound)))
            .min_by_key(|&(_, n)| n)
            .expect("non-empty");
        let lit_idx = remaining.swap_remove(slot_in_remaining);
        let lit = &self.positive[lit_idx];
        let rel = &db.relations[lit.pred.0 as usize];

        let mut probe: Option<&Vec<u32>> = None;
        let mut probe_len = usize::MAX;
        for (pos, s) in lit.slots.iter().enumerate() {
            let key = match *s {
                Slot::Const(c) => Some(c),
                Slot::Var(v) if bound[v] => Some(row[v]),
                _ => None,
            };
            if let Some(c) = key {
                match rel.index.get(&(pos, c)) {
                    Some(list) if list.len() < probe_len => {
                        probe_len = list.len();
                        probe = Some(list);
                    }
                    Some(_) => {}
                    None => {
                        probe_len = 0;
                        probe = None;
                        break;
                    }
                }
            }
        }

        let mut newly: Vec<usize> = Vec::with_capacity(lit.slots.len());
        let mut visit = |r: usize,
                         row: &mut Vec<ConstId>,
                         bound: &mut Vec<bool>,
                         remaining: &mut Vec<usize>,
                         buf: &mut Vec<ConstId>,
                         f: &mut dyn FnMut(&[ConstId])| {
            let tuple = rel.row(r);
            newly.clear();
            let mut ok = true;
            for (s, &c) in lit.slots.iter().zip(tuple) {
                match *s {
                    Slot::Const(k) => {
                        if k != c {
                            ok = false;
                            break;
                        }
                    }
                    Slot::Var(v) => {
                        if bound[v] {
                            if row[v] != c {
                                ok = false;
                                break;
                            }
                        } else {
                            bound[v] = true;
                            row[v] = c;
                            newly.push(v);
                        }
                    }
                    Slot::Missing => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                self.join(db, row, bound, remaining, buf, f);
            }
            for &v in &newly {
                bound[v] = false;
            }
        };

        if probe_len == 0 {
            // some bound position has no posting list
        } else if let Some(list) = probe {
            for &r in list {
                visit(r as usize, row, bound, remaining, buf, f);
            }
        } else {
            for r in 0..rel.len() {
                visit(r, row, bound, remaining, buf, f);
            }
        }

        remaining.push(lit_idx);
        let last = remaining.len() - 1;
        remaining.swap(slot_in_remaining, last);
    }

    fn range_free(
        &self,
        db: &Database,
        i: usize,
        row: &mut Vec<ConstId>,
        buf: &mut Vec<ConstId>,
        f: &mut dyn FnMut(&[ConstId]),
    ) {
        if i == self.free.len() {
            if self.negative.iter().all(|l| l.holds(db, row, buf)) {
                f(row);
            }
            return;
        }
        let v = self.free[i];
        for &c in db.domain(self.vars[v].ty) {
            row[v] = c;
            self.range_free(db, i + 1, row, buf, f);
        }
    }
}
