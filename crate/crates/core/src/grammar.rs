//! Declarative-bias grammar: predicate declarations, placeholder
//! definitions and templates, and their expansion into the candidate
//! formula set.
//!
//! ```text
//! # WikiCollabs-style bias
//! predicate articleEdit(article,user) evidence
//! predicate articleTalk(article,user) evidence
//! predicate similar(article,article) evidence
//! predicate modifies(article,user) target
//! placeholder EDIT(t1:article,u:user) := articleEdit(t1,u) | articleTalk(t1,u) [compounder max=2]
//! template EDIT(t1,u) ^ similar(t1,t2) => modifies(t2,u)
//! ```
//!
//! Placeholder bodies may introduce local variables (any body variable that
//! is not a parameter); each expansion instance gets fresh copies of them.
//! `option compounder_locals = shared` makes the conjuncts of one
//! compounding share their locals instead.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::logic::text::{self, Parser, RawAtom, RawTerm, Tok};
use crate::logic::{ConjunctiveFormula, ConnectiveForm, Literal, Role, Schema, Term, TypeId, Variable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaceholderMode {
    Plain,
    /// Conjunctions of up to `max` distinct expansions.
    Compounder { max: usize },
    /// Chains of up to `max` expansions linked through fresh variables.
    Extender { max: usize },
}

#[derive(Clone, Debug)]
pub struct PlaceholderDef {
    pub name: String,
    pub params: Vec<Variable>,
    pub expansions: Vec<Vec<Literal>>,
    pub mode: PlaceholderMode,
}

#[derive(Clone, Debug)]
pub enum TemplateElem {
    Literal(Literal),
    Invoke { placeholder: usize, args: Vec<Term> },
}

#[derive(Clone, Debug)]
pub struct Template {
    pub body: Vec<TemplateElem>,
    /// Index into `body` of the literal after `=>` / `?=>`.
    pub consequent: Option<usize>,
    /// The connective among target literals is left to selection (`?=>`).
    pub q_marker: bool,
    pub line: usize,
}

#[derive(Clone, Debug, Default)]
pub struct GrammarOptions {
    pub share_compound_locals: bool,
}

#[derive(Clone, Debug)]
pub struct Grammar {
    pub schema: Arc<Schema>,
    pub placeholders: Vec<PlaceholderDef>,
    pub templates: Vec<Template>,
    pub options: GrammarOptions,
}

/// Which connective variants to emit for templates with several target literals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpandMode {
    /// One candidate per (selector, target set); selection resolves connectives.
    Selection,
    /// Every connective variant selection could pick, stated explicitly.
    AllVariants,
}

#[derive(Clone, Debug, Default)]
pub struct Expansion {
    /// Canonical, deduplicated, sorted by text.
    pub formulas: Vec<ConjunctiveFormula>,
    pub rejected: Vec<String>,
}

enum Stmt {
    Placeholder(String, Vec<(String, String)>, Vec<Vec<RawAtom>>, PlaceholderMode),
    Template(Vec<RawAtom>, Option<usize>, bool),
}

impl Grammar {
    pub fn parse(src: &str) -> Result<Grammar> {
        let mut schema = Schema::new();
        let mut options = GrammarOptions::default();
        let mut pending = Vec::new();

        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (kw, rest) = content
                .split_once(char::is_whitespace)
                .unwrap_or((content, ""));
            match kw {
                "predicate" => {
                    parse_predicate(&mut schema, rest, line)?;
                }
                "option" => parse_option(&mut options, rest, line)?,
                "placeholder" => pending.push((line, parse_placeholder(rest, line)?)),
                "template" => pending.push((line, parse_template(rest, line)?)),
                other => {
                    return Err(Error::syntax(line, format!("unknown declaration `{other}`")))
                }
            }
        }

        let schema = Arc::new(schema);
        let mut placeholders: Vec<PlaceholderDef> = Vec::new();
        let mut templates = Vec::new();
        for (line, stmt) in pending {
            match stmt {
                Stmt::Placeholder(name, params, bodies, mode) => {
                    if schema.lookup(&name).is_some() || placeholders.iter().any(|p| p.name == name) {
                        return Err(Error::syntax(line, format!("`{name}` is already defined")));
                    }
                    placeholders.push(resolve_placeholder(&schema, name, params, bodies, mode, line)?);
                }
                Stmt::Template(atoms, consequent, q_marker) => {
                    templates.push(resolve_template(
                        &schema,
                        &placeholders,
                        atoms,
                        consequent,
                        q_marker,
                        line,
                    )?);
                }
            }
        }
        Ok(Grammar {
            schema,
            placeholders,
            templates,
            options,
        })
    }

    /// Expands every template into the candidate set.
    pub fn expand(&self, mode: ExpandMode) -> Expansion {
        let mut out: BTreeMap<String, ConjunctiveFormula> = BTreeMap::new();
        let mut rejected = Vec::new();
        for t in &self.templates {
            let mut fresh = 0usize;
            let options: Vec<Vec<Vec<Literal>>> = t
                .body
                .iter()
                .map(|e| match e {
                    TemplateElem::Literal(l) => vec![vec![l.clone()]],
                    TemplateElem::Invoke { placeholder, args } => {
                        self.instantiate(&self.placeholders[*placeholder], args, &mut fresh)
                    }
                })
                .collect();

            if options.iter().any(Vec::is_empty) {
                continue;
            }
            let mut choice = vec![0usize; options.len()];
            'product: loop {
                let mut lits = Vec::new();
                for (i, &c) in choice.iter().enumerate() {
                    lits.extend(options[i][c].iter().cloned());
                }
                self.emit(t, lits, mode, &mut out, &mut rejected);

                let mut k = choice.len();
                loop {
                    if k == 0 {
                        break 'product;
                    }
                    k -= 1;
                    choice[k] += 1;
                    if choice[k] < options[k].len() {
                        break;
                    }
                    choice[k] = 0;
                }
            }
        }
        Expansion {
            formulas: out.into_values().collect(),
            rejected,
        }
    }

    fn emit(
        &self,
        t: &Template,
        lits: Vec<Literal>,
        mode: ExpandMode,
        out: &mut BTreeMap<String, ConjunctiveFormula>,
        rejected: &mut Vec<String>,
    ) {
        let schema = &self.schema;
        let targets = lits.iter().filter(|l| schema.is_target(l.pred)).count();
        // selection may resolve any target literal as the consequent, so
        // the explicit variant set covers every form regardless of arrows
        let forms: Vec<ConnectiveForm> = match mode {
            _ if targets < 2 => vec![ConnectiveForm::Conjunction],
            ExpandMode::Selection => vec![ConnectiveForm::Conjunction],
            ExpandMode::AllVariants => std::iter::once(ConnectiveForm::Conjunction)
                .chain((0..targets).map(ConnectiveForm::Implication))
                .collect(),
        };
        for form in forms {
            match ConjunctiveFormula::new(schema, lits.clone(), form) {
                Ok(f) => {
                    let c = f.canonicalize(schema);
                    out.entry(c.to_text(schema)).or_insert(c);
                }
                Err(e) => {
                    let text = lits
                        .iter()
                        .map(|l| l.display(schema).to_string())
                        .collect::<Vec<_>>()
                        .join(" ^ ");
                    rejected.push(format!("template at line {}: `{text}`: {e}", t.line));
                }
            }
        }
    }

    fn instantiate(&self, def: &PlaceholderDef, args: &[Term], fresh: &mut usize) -> Vec<Vec<Literal>> {
        let bodies = &def.expansions;
        let mut out = Vec::new();
        match def.mode {
            PlaceholderMode::Plain => {
                for b in bodies {
                    out.push(substitute(b, &def.params, args, &mut HashMap::new(), fresh));
                }
            }
            PlaceholderMode::Compounder { max } => {
                for size in 1..=max.min(bodies.len()) {
                    for combo in combinations(bodies.len(), size) {
                        let mut shared = HashMap::new();
                        let mut lits = Vec::new();
                        for i in combo {
                            if !self.options.share_compound_locals {
                                shared.clear();
                            }
                            lits.extend(substitute(&bodies[i], &def.params, args, &mut shared, fresh));
                        }
                        out.push(lits);
                    }
                }
            }
            PlaceholderMode::Extender { max } => {
                let link_ty = def.params[0].ty;
                for len in 1..=max {
                    for seq in sequences(bodies.len(), len) {
                        let mut ends = vec![args[0].clone()];
                        for _ in 1..len {
                            *fresh += 1;
                            ends.push(Term::Var(Variable::new(format!("_z{fresh}"), link_ty)));
                        }
                        ends.push(args[1].clone());
                        let mut lits = Vec::new();
                        for (step, &i) in seq.iter().enumerate() {
                            let link = [ends[step].clone(), ends[step + 1].clone()];
                            lits.extend(substitute(&bodies[i], &def.params, &link, &mut HashMap::new(), fresh));
                        }
                        out.push(lits);
                    }
                }
            }
        }
        out
    }
}

/// Replaces parameters by the invocation arguments and locals by fresh
/// variables (recorded in `locals`, so callers can share them).
fn substitute(
    body: &[Literal],
    params: &[Variable],
    args: &[Term],
    locals: &mut HashMap<String, Variable>,
    fresh: &mut usize,
) -> Vec<Literal> {
    body.iter()
        .map(|l| Literal {
            pred: l.pred,
            negated: l.negated,
            args: l
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => match params.iter().position(|p| p.name == v.name) {
                        Some(i) => args[i].clone(),
                        None => Term::Var(
                            locals
                                .entry(v.name.clone())
                                .or_insert_with(|| {
                                    *fresh += 1;
                                    Variable::new(format!("_l{fresh}"), v.ty)
                                })
                                .clone(),
                        ),
                    },
                    c => c.clone(),
                })
                .collect(),
        })
        .collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn sequences(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..n).map(move |i| {
                    let mut s = s.clone();
                    s.push(i);
                    s
                })
            })
            .collect();
    }
    out
}

pub(crate) fn parse_predicate(schema: &mut Schema, rest: &str, line: usize) -> Result<()> {
    let mut p = Parser::new(text::tokenize(rest, line)?, line);
    let name = p.ident()?;
    p.expect(Tok::LParen)?;
    let mut types = Vec::new();
    loop {
        types.push(p.ident()?);
        match p.next() {
            Some(Tok::Comma) => continue,
            Some(Tok::RParen) => break,
            _ => return Err(p.err("malformed predicate argument list")),
        }
    }
    let role = match p.ident()?.as_str() {
        "evidence" => Role::Evidence,
        "target" => Role::Target,
        other => return Err(p.err(format!("role must be `evidence` or `target`, found `{other}`"))),
    };
    if !p.at_end() {
        return Err(p.err("trailing input after predicate declaration"));
    }
    let types: Vec<&str> = types.iter().map(String::as_str).collect();
    schema
        .add_predicate(&name, &types, role)
        .map_err(|e| Error::syntax(line, e.to_string()))?;
    Ok(())
}

fn parse_option(options: &mut GrammarOptions, rest: &str, line: usize) -> Result<()> {
    let (key, value) = rest
        .split_once('=')
        .ok_or_else(|| Error::syntax(line, "expected `option key = value`"))?;
    match (key.trim(), value.trim()) {
        ("compounder_locals", "shared") => options.share_compound_locals = true,
        ("compounder_locals", "apart") => options.share_compound_locals = false,
        (k, v) => return Err(Error::syntax(line, format!("unknown option `{k} = {v}`"))),
    }
    Ok(())
}

fn parse_placeholder(rest: &str, line: usize) -> Result<Stmt> {
    let mut p = Parser::new(text::tokenize(rest, line)?, line);
    let name = p.ident()?;
    p.expect(Tok::LParen)?;
    let mut params = Vec::new();
    loop {
        let var = p.ident()?;
        if !text::is_variable_name(&var) {
            return Err(p.err(format!("placeholder parameter `{var}` must be a variable")));
        }
        p.expect(Tok::Colon)?;
        let ty = p.ident()?;
        params.push((var, ty));
        match p.next() {
            Some(Tok::Comma) => continue,
            Some(Tok::RParen) => break,
            _ => return Err(p.err("malformed placeholder parameter list")),
        }
    }
    p.expect(Tok::Assign)?;
    let mut bodies = vec![Vec::new()];
    let mut mode = PlaceholderMode::Plain;
    loop {
        bodies.last_mut().expect("non-empty").push(p.atom()?);
        match p.next() {
            None => break,
            Some(Tok::Caret) => continue,
            Some(Tok::Pipe) => bodies.push(Vec::new()),
            Some(Tok::LBracket) => {
                mode = parse_mode(&mut p)?;
                if !p.at_end() {
                    return Err(p.err("trailing input after mode"));
                }
                break;
            }
            Some(t) => return Err(p.err(format!("unexpected {t:?} in placeholder body"))),
        }
    }
    Ok(Stmt::Placeholder(name, params, bodies, mode))
}

fn parse_mode(p: &mut Parser) -> Result<PlaceholderMode> {
    let kind = p.ident()?;
    let mode = if kind == "plain" {
        PlaceholderMode::Plain
    } else {
        let max = if p.peek() == Some(&Tok::Ident("max".into())) {
            p.next();
            p.expect(Tok::Eq)?;
            let n = p.ident()?;
            n.parse::<usize>()
                .map_err(|_| p.err(format!("max must be a positive integer, found `{n}`")))?
        } else {
            2
        };
        if max == 0 {
            return Err(p.err("max must be at least 1"));
        }
        match kind.as_str() {
            "compounder" => PlaceholderMode::Compounder { max },
            "extender" => PlaceholderMode::Extender { max },
            other => return Err(p.err(format!("unknown placeholder mode `{other}`"))),
        }
    };
    p.expect(Tok::RBracket)?;
    Ok(mode)
}

fn parse_template(rest: &str, line: usize) -> Result<Stmt> {
    let mut p = Parser::new(text::tokenize(rest, line)?, line);
    let mut atoms = Vec::new();
    let mut consequent = None;
    let mut q_marker = false;
    loop {
        atoms.push(p.atom()?);
        match p.next() {
            None => break,
            Some(Tok::Caret) if consequent.is_none() => continue,
            Some(arrow @ (Tok::Arrow | Tok::QArrow)) if consequent.is_none() => {
                q_marker = arrow == Tok::QArrow;
                atoms.push(p.atom()?);
                consequent = Some(atoms.len() - 1);
                if !p.at_end() {
                    return Err(p.err("the consequent must be the last element of a template"));
                }
                break;
            }
            Some(t) => return Err(p.err(format!("unexpected {t:?} in template"))),
        }
    }
    Ok(Stmt::Template(atoms, consequent, q_marker))
}

fn check_user_variable(name: &str, line: usize) -> Result<()> {
    if name.starts_with('_') {
        return Err(Error::syntax(
            line,
            format!("variable names starting with `_` are reserved: `{name}`"),
        ));
    }
    Ok(())
}

fn resolve_placeholder(
    schema: &Schema,
    name: String,
    params: Vec<(String, String)>,
    bodies: Vec<Vec<RawAtom>>,
    mode: PlaceholderMode,
    line: usize,
) -> Result<PlaceholderDef> {
    let params: Vec<Variable> = params
        .into_iter()
        .map(|(v, ty)| {
            check_user_variable(&v, line)?;
            let id = schema
                .type_id(&ty)
                .ok_or_else(|| Error::syntax(line, format!("unknown type `{ty}`")))?;
            Ok(Variable::new(v, id))
        })
        .collect::<Result<_>>()?;
    if let PlaceholderMode::Extender { .. } = mode {
        if params.len() != 2 || params[0].ty != params[1].ty {
            return Err(Error::syntax(
                line,
                format!("extender `{name}` needs exactly two parameters of the same type"),
            ));
        }
    }
    let mut expansions = Vec::new();
    for body in bodies {
        let mut types: HashMap<String, TypeId> =
            params.iter().map(|v| (v.name.clone(), v.ty)).collect();
        let mut lits = Vec::new();
        for atom in &body {
            let lit = text::resolve_atom(schema, atom, line)?;
            for v in lit.variables() {
                check_user_variable(&v.name, line)?;
                match types.get(&v.name) {
                    Some(&ty) if ty != v.ty => {
                        return Err(Error::syntax(
                            line,
                            format!(
                                "type mismatch for `{}` in `{name}`: {} vs {}",
                                v.name,
                                schema.type_name(ty),
                                schema.type_name(v.ty)
                            ),
                        ))
                    }
                    _ => {
                        types.insert(v.name.clone(), v.ty);
                    }
                }
            }
            lits.push(lit);
        }
        expansions.push(lits);
    }
    Ok(PlaceholderDef {
        name,
        params,
        expansions,
        mode,
    })
}

fn resolve_template(
    schema: &Schema,
    placeholders: &[PlaceholderDef],
    atoms: Vec<RawAtom>,
    consequent: Option<usize>,
    q_marker: bool,
    line: usize,
) -> Result<Template> {
    let mut types: HashMap<String, TypeId> = HashMap::new();
    let mut bind = |name: &str, ty: TypeId| -> Result<()> {
        check_user_variable(name, line)?;
        match types.get(name) {
            Some(&t) if t != ty => Err(Error::syntax(
                line,
                format!(
                    "type mismatch for `{name}`: {} vs {}",
                    schema.type_name(t),
                    schema.type_name(ty)
                ),
            )),
            _ => {
                types.insert(name.to_string(), ty);
                Ok(())
            }
        }
    };
    let mut body = Vec::new();
    let mut concrete_targets = 0;
    for (i, atom) in atoms.iter().enumerate() {
        if let Some(idx) = placeholders.iter().position(|p| p.name == atom.name) {
            let def = &placeholders[idx];
            if Some(i) == consequent {
                return Err(Error::syntax(line, "the consequent must be a target literal"));
            }
            if atom.negated {
                return Err(Error::syntax(line, format!("placeholder `{}` cannot be negated", def.name)));
            }
            if atom.args.len() != def.params.len() {
                return Err(Error::syntax(
                    line,
                    format!(
                        "`{}` expects {} arguments, got {}",
                        def.name,
                        def.params.len(),
                        atom.args.len()
                    ),
                ));
            }
            let mut args = Vec::new();
            for (a, param) in atom.args.iter().zip(&def.params) {
                args.push(match a {
                    RawTerm::Var(v) => {
                        bind(v, param.ty)?;
                        Term::Var(Variable::new(v.clone(), param.ty))
                    }
                    RawTerm::Const(c) => Term::Const {
                        name: c.clone(),
                        ty: param.ty,
                    },
                });
            }
            body.push(TemplateElem::Invoke {
                placeholder: idx,
                args,
            });
        } else if schema.lookup(&atom.name).is_some() {
            let lit = text::resolve_atom(schema, atom, line)?;
            for v in lit.variables() {
                bind(&v.name, v.ty)?;
            }
            if schema.is_target(lit.pred) {
                concrete_targets += 1;
            } else if Some(i) == consequent {
                return Err(Error::syntax(line, "the consequent must be a target literal"));
            }
            body.push(TemplateElem::Literal(lit));
        } else {
            return Err(Error::syntax(
                line,
                format!("unresolved predicate or placeholder `{}`", atom.name),
            ));
        }
    }
    if q_marker && concrete_targets < 2 {
        return Err(Error::syntax(
            line,
            "`?=>` needs at least two target literals in the template",
        ));
    }
    Ok(Template {
        body,
        consequent,
        q_marker,
        line,
    })
}
