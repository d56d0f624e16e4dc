use std::cmp::Ordering;
use std::collections::HashMap;

use super::{ConjunctiveFormula, ConnectiveForm, Literal, Schema, Term, Variable};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum ArgKey {
    Var(usize),
    Const(String),
}

struct Search<'a> {
    lits: &'a [(Literal, bool)],
    groups: Vec<Vec<usize>>,
    group_of_pos: Vec<usize>,
    best: Option<(Vec<Vec<ArgKey>>, Vec<usize>)>,
}

impl Search<'_> {
    fn key(&self, lit: &Literal, rename: &mut HashMap<String, usize>) -> (Vec<ArgKey>, usize) {
        let mut added = 0;
        let key = lit
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => {
                    let next = rename.len();
                    let idx = *rename.entry(v.name.clone()).or_insert_with(|| {
                        added += 1;
                        next
                    });
                    ArgKey::Var(idx)
                }
                Term::Const { name, .. } => ArgKey::Const(name.clone()),
            })
            .collect();
        (key, added)
    }

    fn dfs(
        &mut self,
        pos: usize,
        used: &mut [bool],
        rename: &mut HashMap<String, usize>,
        keys: &mut Vec<Vec<ArgKey>>,
        order: &mut Vec<usize>,
    ) {
        if pos == self.lits.len() {
            let better = match &self.best {
                None => true,
                Some((best, _)) => keys.as_slice().cmp(best.as_slice()) == Ordering::Less,
            };
            if better {
                self.best = Some((keys.clone(), order.clone()));
            }
            return;
        }
        let group = self.group_of_pos[pos];
        let members = self.groups[group].clone();
        for m in members {
            if used[m] {
                continue;
            }
            let (key, added) = self.key(&self.lits[m].0, rename);
            keys.push(key);
            let prune = match &self.best {
                Some((best, _)) => keys.as_slice().cmp(&best[..=pos]) == Ordering::Greater,
                None => false,
            };
            if !prune {
                used[m] = true;
                order.push(m);
                self.dfs(pos + 1, used, rename, keys, order);
                order.pop();
                used[m] = false;
            }
            keys.pop();
            if added > 0 {
                // new variables were assigned the highest indices
                let limit = rename.len() - added;
                rename.retain(|_, idx| *idx < limit);
            }
        }
    }
}

pub(super) fn canonicalize(f: &ConjunctiveFormula, schema: &Schema) -> ConjunctiveFormula {
    let consequent = f.consequent_position(schema);
    let mut lits: Vec<(Literal, bool)> = Vec::new();
    for (i, lit) in f.literals.iter().enumerate() {
        let entry = (lit.clone(), Some(i) == consequent);
        if !lits.contains(&entry) {
            lits.push(entry);
        }
    }

    let group_key = |(l, c): &(Literal, bool)| (schema.predicate(l.pred).name.clone(), l.negated, *c);
    let mut keys: Vec<_> = lits.iter().map(group_key).collect();
    keys.sort();
    keys.dedup();
    let groups: Vec<Vec<usize>> = keys
        .iter()
        .map(|k| {
            (0..lits.len())
                .filter(|&i| &group_key(&lits[i]) == k)
                .collect()
        })
        .collect();
    let group_of_pos = groups
        .iter()
        .enumerate()
        .flat_map(|(g, members)| std::iter::repeat_n(g, members.len()))
        .collect();

    let mut search = Search {
        lits: &lits,
        groups,
        group_of_pos,
        best: None,
    };
    let mut used = vec![false; lits.len()];
    search.dfs(0, &mut used, &mut HashMap::new(), &mut Vec::new(), &mut Vec::new());
    let (_, order) = search.best.expect("non-empty formula has an ordering");

    let mut rename: HashMap<String, String> = HashMap::new();
    let mut out = Vec::with_capacity(order.len());
    let mut new_consequent = None;
    for &i in &order {
        let (lit, is_cons) = &lits[i];
        let args = lit
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => {
                    let next = format!("v{}", rename.len() + 1);
                    let name = rename.entry(v.name.clone()).or_insert(next).clone();
                    Term::Var(Variable::new(name, v.ty))
                }
                c => c.clone(),
            })
            .collect();
        if *is_cons {
            new_consequent = Some(out.len());
        }
        out.push(Literal {
            pred: lit.pred,
            args,
            negated: lit.negated,
        });
    }
    let form = match new_consequent {
        None => ConnectiveForm::Conjunction,
        Some(pos) => ConnectiveForm::Implication(
            out[..pos]
                .iter()
                .filter(|l| schema.is_target(l.pred))
                .count(),
        ),
    };
    ConjunctiveFormula::from_parts_unchecked(out, form)
}
