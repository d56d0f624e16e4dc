//! Streaming formula selection.
//!
//! Each candidate `E ∧ Q₁ ∧ … ∧ Q_l` is scored on every subgraph by the
//! empirical probability, over the groundings its selector `E` picks out,
//! that all target literals hold, and (for `l ≥ 2`) by the conditional
//! probability of each `Q_k` given the others. Per-subgraph probabilities
//! are averaged over the subgraphs where they are defined, and a form is
//! kept when its average exceeds the threshold.

use std::fmt;

use rayon::prelude::*;

use crate::db::{CompiledLit, Database, Query};
use crate::logic::{ConjunctiveFormula, ConnectiveForm, Literal, Schema};

/// Grounding counts of one candidate on one subgraph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubgraphStats {
    /// Groundings selected by `E`.
    pub selected: u64,
    /// Selected groundings with every target literal true.
    pub all_true: u64,
    /// Per target literal k (only when there are at least two): selected
    /// groundings where every other target literal is true.
    pub cond_denoms: Vec<u64>,
}

impl SubgraphStats {
    pub fn joint_prob(&self) -> Option<f64> {
        (self.selected > 0).then(|| self.all_true as f64 / self.selected as f64)
    }

    pub fn cond_prob(&self, k: usize) -> Option<f64> {
        let d = *self.cond_denoms.get(k)?;
        (d > 0).then(|| self.all_true as f64 / d as f64)
    }

    pub fn cond_probs(&self) -> Vec<Option<f64>> {
        (0..self.cond_denoms.len()).map(|k| self.cond_prob(k)).collect()
    }
}

/// Counts the selector's groundings and the truth pattern of the enforcer
/// on them. Target variables not bound by the selector range over their
/// type's domain; an empty selector selects every grounding of the targets.
pub fn evaluate_subgraph(schema: &Schema, f: &ConjunctiveFormula, db: &Database) -> SubgraphStats {
    let (selector, enforcer) = f.split(schema);
    let mut vars = Vec::new();
    let query = Query::compile(db, &selector, &f.variables());
    for v in &query.vars {
        Query::var_index(&mut vars, v);
    }
    let targets: Vec<CompiledLit> = enforcer
        .iter()
        .map(|l| Query::compile_lit(db, l, &mut vars))
        .collect();
    debug_assert_eq!(vars.len(), query.vars.len());

    let l = targets.len();
    let mut stats = SubgraphStats {
        cond_denoms: vec![0; if l >= 2 { l } else { 0 }],
        ..SubgraphStats::default()
    };
    let mut buf = Vec::new();
    let mut truth = vec![false; l];
    query.for_each(db, |row| {
        stats.selected += 1;
        let mut n_true = 0;
        for (t, q) in truth.iter_mut().zip(&targets) {
            *t = q.holds(db, row, &mut buf);
            n_true += *t as usize;
        }
        if n_true == l {
            stats.all_true += 1;
        }
        if l >= 2 {
            for (k, &t) in truth.iter().enumerate() {
                // all others true
                if n_true - t as usize == l - 1 {
                    stats.cond_denoms[k] += 1;
                }
            }
        }
    });
    stats
}

/// Running sum of per-subgraph probabilities and the number of subgraphs
/// where the probability was defined.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Average {
    pub sum: f64,
    pub count: u64,
}

impl Average {
    pub fn add(&mut self, p: Option<f64>) {
        if let Some(p) = p {
            self.sum += p;
            self.count += 1;
        }
    }

    pub fn merge(&mut self, other: &Average) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Mergeable accumulator of one candidate's statistics across subgraphs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FormulaStats {
    pub joint: Average,
    pub cond: Vec<Average>,
}

impl FormulaStats {
    pub fn new(target_count: usize) -> Self {
        FormulaStats {
            joint: Average::default(),
            cond: vec![Average::default(); if target_count >= 2 { target_count } else { 0 }],
        }
    }

    pub fn absorb(&mut self, s: &SubgraphStats) {
        self.joint.add(s.joint_prob());
        for (k, acc) in self.cond.iter_mut().enumerate() {
            acc.add(s.cond_prob(k));
        }
    }

    pub fn merge(&mut self, other: &FormulaStats) {
        self.joint.merge(&other.joint);
        for (a, b) in self.cond.iter_mut().zip(&other.cond) {
            a.merge(b);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectedFormula {
    /// The candidate in conjunction form.
    pub source: ConjunctiveFormula,
    pub resolved: ConnectiveForm,
    /// The average that cleared the threshold.
    pub score: f64,
}

impl SelectedFormula {
    /// The selected form, e.g. `E ∧ (Q₁ ⇒ Q₂)`.
    pub fn formula(&self) -> ConjunctiveFormula {
        crate::logic::ConjunctiveFormula::from_parts_unchecked(
            self.source.literals().to_vec(),
            self.resolved,
        )
    }
}

/// Applies the threshold to every candidate's averages. A statistic with no
/// contributing subgraph fails; ties at exactly `theta` are rejected.
pub fn finalize_selection(
    candidates: &[ConjunctiveFormula],
    stats: &[FormulaStats],
    theta: f64,
) -> Vec<SelectedFormula> {
    let mut out = Vec::new();
    for (f, s) in candidates.iter().zip(stats) {
        let source = f.as_conjunction();
        if let Some(avg) = s.joint.mean() {
            if avg > theta {
                out.push(SelectedFormula {
                    source: source.clone(),
                    resolved: ConnectiveForm::Conjunction,
                    score: avg,
                });
            }
        }
        for (k, acc) in s.cond.iter().enumerate() {
            if let Some(avg) = acc.mean() {
                if avg > theta {
                    out.push(SelectedFormula {
                        source: source.clone(),
                        resolved: ConnectiveForm::Implication(k),
                        score: avg,
                    });
                }
            }
        }
    }
    out
}

/// Advisory sign for the weight of a learnable rewrite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightHint {
    Neutral,
    Negative,
}

impl fmt::Display for WeightHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightHint::Neutral => "neutral",
            WeightHint::Negative => "negative",
        })
    }
}

/// Rewrites `E ∧ (∧_{i≠k} Qᵢ ⇒ Q_k)` into the conjunction
/// `E ∧ ∧_{i≠k} Qᵢ ∧ ¬Q_k`, which has the same effect under a negated
/// weight when `E` is observed. Conjunctions pass through.
pub fn resolve_connectives(schema: &Schema, f: &ConjunctiveFormula) -> (ConjunctiveFormula, WeightHint) {
    match f.consequent_position(schema) {
        None => (f.as_conjunction().canonicalize(schema), WeightHint::Neutral),
        Some(pos) => {
            let lits: Vec<Literal> = f
                .literals()
                .iter()
                .enumerate()
                .map(|(i, l)| if i == pos { l.negate() } else { l.clone() })
                .collect();
            let rewritten = ConjunctiveFormula::from_parts_unchecked(lits, ConnectiveForm::Conjunction);
            (rewritten.canonicalize(schema), WeightHint::Negative)
        }
    }
}

/// Accumulates statistics for a fixed candidate set over a stream of subgraphs.
pub struct Selector {
    schema: std::sync::Arc<Schema>,
    candidates: Vec<ConjunctiveFormula>,
    stats: Vec<FormulaStats>,
    processed: usize,
    parallel: bool,
}

impl Selector {
    pub fn new(schema: std::sync::Arc<Schema>, candidates: Vec<ConjunctiveFormula>) -> Self {
        let candidates: Vec<_> = candidates.iter().map(|f| f.as_conjunction()).collect();
        let stats = candidates
            .iter()
            .map(|f| FormulaStats::new(f.target_count(&schema)))
            .collect();
        Selector {
            schema,
            candidates,
            stats,
            processed: 0,
            parallel: true,
        }
    }

    /// Evaluate candidates on a rayon pool (the default) or sequentially.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    /// Evaluates every candidate on one subgraph. Each candidate owns its
    /// accumulator, so the result does not depend on scheduling.
    pub fn observe(&mut self, db: &Database) {
        let schema = &self.schema;
        if self.parallel {
            self.stats
                .par_iter_mut()
                .zip(self.candidates.par_iter())
                .for_each(|(acc, f)| acc.absorb(&evaluate_subgraph(schema, f, db)));
        } else {
            for (acc, f) in self.stats.iter_mut().zip(&self.candidates) {
                acc.absorb(&evaluate_subgraph(schema, f, db));
            }
        }
        self.processed += 1;
    }

    pub fn processed(&self) -> usize {
        self.processed
    }

    pub fn candidates(&self) -> &[ConjunctiveFormula] {
        &self.candidates
    }

    pub fn stats(&self) -> &[FormulaStats] {
        &self.stats
    }

    pub fn finalize(&self, theta: f64) -> Vec<SelectedFormula> {
        finalize_selection(&self.candidates, &self.stats, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Role;
    use std::sync::Arc;

    fn schema() -> Arc<Schema> {
        let mut s = Schema::new();
        s.add_predicate("e", &["t", "t"], Role::Evidence).unwrap();
        s.add_predicate("u", &["t"], Role::Evidence).unwrap();
        s.add_predicate("q", &["t"], Role::Target).unwrap();
        s.add_predicate("q1", &["t"], Role::Target).unwrap();
        s.add_predicate("q2", &["t"], Role::Target).unwrap();
        s.add_predicate("q3", &["t"], Role::Target).unwrap();
        Arc::new(s)
    }

    fn db(s: &Arc<Schema>, atoms: &[(&str, &[&str])]) -> Database {
        let mut db = Database::new(s.clone());
        for (p, args) in atoms {
            db.insert(p, args).unwrap();
        }
        db
    }

    fn f(s: &Schema, text: &str) -> ConjunctiveFormula {
        ConjunctiveFormula::parse(s, text).unwrap()
    }

    #[test]
    fn joint_probability_over_selected_groundings() {
        let s = schema();
        let d = db(&s, &[("e", &["a", "b"]), ("e", &["a", "c"]), ("q", &["b"])]);
        let st = evaluate_subgraph(&s, &f(&s, "e(x,y) ^ q(y)"), &d);
        assert_eq!(st.selected, 2);
        assert_eq!(st.joint_prob(), Some(0.5));
    }

    #[test]
    fn conditional_probabilities() {
        let s = schema();
        let d = db(
            &s,
            &[
                ("u", &["a"]),
                ("u", &["b"]),
                ("u", &["c"]),
                ("q1", &["a"]),
                ("q2", &["a"]),
                ("q1", &["b"]),
            ],
        );
        let st = evaluate_subgraph(&s, &f(&s, "u(x) ^ q1(x) ^ q2(x)"), &d);
        assert_eq!(st.joint_prob(), Some(1.0 / 3.0));
        assert_eq!(st.cond_prob(1), Some(0.5));
        assert_eq!(st.cond_prob(0), Some(1.0));
    }

    #[test]
    fn empty_selector_extension() {
        let s = schema();
        let d = db(&s, &[("q", &["a"])]);
        let st = evaluate_subgraph(&s, &f(&s, "u(x) ^ q(x)"), &d);
        assert_eq!(st.selected, 0);
        assert_eq!(st.joint_prob(), None);
    }

    #[test]
    fn no_selector_selects_all_groundings() {
        let s = schema();
        let d = db(&s, &[("q", &["a"]), ("u", &["b"]), ("u", &["c"])]);
        let st = evaluate_subgraph(&s, &f(&s, "q(x)"), &d);
        assert_eq!(st.selected, 3);
        assert_eq!(st.all_true, 1);
    }

    #[test]
    fn single_target_has_no_conditionals() {
        let s = schema();
        let d = db(&s, &[("u", &["a"])]);
        let st = evaluate_subgraph(&s, &f(&s, "u(x) ^ q(x)"), &d);
        assert!(st.cond_denoms.is_empty());
    }

    #[test]
    fn merge_sums_and_counts() {
        let mut acc = FormulaStats::new(1);
        acc.joint = Average { sum: 0.5, count: 1 };
        let present = SubgraphStats {
            selected: 10,
            all_true: 3,
            cond_denoms: vec![],
        };
        let mut a = acc.clone();
        a.absorb(&present);
        assert!((a.joint.sum - 0.8).abs() < 1e-15);
        assert_eq!(a.joint.count, 2);

        let mut b = acc.clone();
        b.absorb(&SubgraphStats::default());
        assert_eq!(b.joint, Average { sum: 0.5, count: 1 });
    }

    #[test]
    fn merge_is_associative() {
        let sub = |sel, t| SubgraphStats {
            selected: sel,
            all_true: t,
            cond_denoms: vec![sel, t + 1],
        };
        let (a, b, c) = (sub(3, 1), sub(7, 2), sub(9, 9));
        let single = |s: &SubgraphStats| {
            let mut f = FormulaStats::new(2);
            f.absorb(s);
            f
        };
        let mut left = single(&a);
        left.merge(&single(&b));
        left.merge(&single(&c));
        let mut bc = single(&b);
        bc.merge(&single(&c));
        let mut right = single(&a);
        right.merge(&bc);
        assert!((left.joint.sum - right.joint.sum).abs() <= 1e-12);
        for (l, r) in left.cond.iter().zip(&right.cond) {
            assert!((l.sum - r.sum).abs() <= 1e-12);
            assert_eq!(l.count, r.count);
        }
    }

    #[test]
    fn threshold_selects_conjunction() {
        let s = schema();
        let cand = vec![f(&s, "u(x) ^ q(x)")];
        let mut st = FormulaStats::new(1);
        st.joint = Average { sum: 0.5, count: 1 };
        let sel = finalize_selection(&cand, &[st], 0.4);
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].resolved, ConnectiveForm::Conjunction);
        assert_eq!(sel[0].score, 0.5);
    }

    #[test]
    fn zero_average_and_ties_are_rejected() {
        let s = schema();
        let cand = vec![f(&s, "u(x) ^ q(x)")];
        let mut st = FormulaStats::new(1);
        st.joint = Average { sum: 0.0, count: 3 };
        assert!(finalize_selection(&cand, &[st.clone()], 0.4).is_empty());
        st.joint = Average { sum: 0.8, count: 2 };
        assert!(finalize_selection(&cand, &[st.clone()], 0.4).is_empty());
        st.joint = Average::default();
        assert!(finalize_selection(&cand, &[st], 0.0).is_empty());
    }

    #[test]
    fn only_implication_selected() {
        let s = schema();
        let cand = vec![f(&s, "u(x) ^ q1(x) ^ q2(x)")];
        let mut st = FormulaStats::new(2);
        st.joint = Average { sum: 0.1, count: 1 };
        st.cond[0] = Average { sum: 0.2, count: 1 };
        st.cond[1] = Average { sum: 0.7, count: 1 };
        let sel = finalize_selection(&cand, &[st], 0.4);
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].resolved, ConnectiveForm::Implication(1));
        assert_eq!(sel[0].formula().to_text(&s), "u(x) ^ q1(x) => q2(x)");
    }

    #[test]
    fn both_forms_can_be_selected() {
        let s = schema();
        let cand = vec![f(&s, "u(x) ^ q1(x) ^ q2(x)")];
        let mut st = FormulaStats::new(2);
        st.joint = Average { sum: 0.5, count: 1 };
        st.cond[0] = Average { sum: 0.9, count: 1 };
        st.cond[1] = Average { sum: 0.1, count: 1 };
        let forms: Vec<_> = finalize_selection(&cand, &[st], 0.4)
            .into_iter()
            .map(|s| s.resolved)
            .collect();
        assert_eq!(forms, vec![ConnectiveForm::Conjunction, ConnectiveForm::Implication(0)]);
    }

    #[test]
    fn resolve_rewrites_implication() {
        let s = schema();
        let imp = f(&s, "u(x) ^ q1(x) => q2(x)");
        let (rw, hint) = resolve_connectives(&s, &imp);
        assert_eq!(hint, WeightHint::Negative);
        assert_eq!(rw, f(&s, "u(x) ^ q1(x) ^ !q2(x)").canonicalize(&s));

        let conj = f(&s, "u(x) ^ q1(x) ^ q2(x)");
        let (same, hint) = resolve_connectives(&s, &conj);
        assert_eq!(hint, WeightHint::Neutral);
        assert_eq!(same, conj.canonicalize(&s));
    }

    #[test]
    fn resolve_three_targets() {
        let s = schema();
        let imp = f(&s, "u(x) ^ q1(x) ^ q3(x) => q2(x)");
        let (rw, hint) = resolve_connectives(&s, &imp);
        assert_eq!(hint, WeightHint::Negative);
        assert_eq!(rw, f(&s, "u(x) ^ q1(x) ^ q3(x) ^ !q2(x)").canonicalize(&s));
    }

    #[test]
    fn selector_is_order_invariant() {
        let s = schema();
        let dbs = [
            db(&s, &[("u", &["a"]), ("q", &["a"])]),
            db(&s, &[("u", &["a"]), ("u", &["b"]), ("q", &["a"])]),
            db(&s, &[("u", &["a"]), ("u", &["b"]), ("u", &["c"])]),
        ];
        let cands = vec![f(&s, "u(x) ^ q(x)")];
        let mut fwd = Selector::new(s.clone(), cands.clone());
        let mut rev = Selector::new(s.clone(), cands);
        for d in &dbs {
            fwd.observe(d);
        }
        for d in dbs.iter().rev() {
            rev.observe(d);
        }
        assert!((fwd.stats()[0].joint.sum - rev.stats()[0].joint.sum).abs() <= 1e-12);
        assert_eq!(fwd.finalize(0.4), rev.finalize(0.4));
    }
}
