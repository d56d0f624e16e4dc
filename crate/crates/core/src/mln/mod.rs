//! Weighted formulas, grounding against a subgraph, inference and
//! contrastive-divergence weight learning.

use std::collections::HashMap;
use std::sync::Arc;

use crate::db::{ConstId, Database, GroundAtom, Query};
use crate::error::{Error, Result};
use crate::logic::{ConjunctiveFormula, Literal, PredId, Schema, Term, Variable};
use crate::select::WeightHint;

mod infer;
mod learn;

pub use infer::{
    exact_conditional, exact_network, gibbs_conditional, gibbs_network, predict, subgraph_rng,
    ExactResult, InferenceConfig, MAX_EXACT_HIDDEN,
};
pub use learn::{cd_gradient, cd_step, Learner, NegativePhase};

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFormula {
    pub formula: ConjunctiveFormula,
    pub weight: f64,
    pub hint: WeightHint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub learning_rate: f64,
    pub prior_variance: f64,
    pub cd_chain_length: usize,
    pub passes: usize,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            learning_rate: 0.01,
            prior_variance: 100.0,
            cd_chain_length: 1,
            passes: 1,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return Err(Error::Config("prior variance must be positive".into()));
        }
        if self.cd_chain_length == 0 {
            return Err(Error::Config("CD chain length must be at least 1".into()));
        }
        if self.passes == 0 {
            return Err(Error::Config("passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Learnable formulas plus one single-literal prior clause per target
/// predicate. Clause `i` in [`WeightedModel::clauses`] is formula `i` for
/// `i < formulas.len()` and a prior clause after that.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedModel {
    schema: Arc<Schema>,
    pub formulas: Vec<WeightedFormula>,
    pub priors: Vec<WeightedFormula>,
    pub config: LearnConfig,
}

impl WeightedModel {
    /// Model over `formulas` with zero weights and a prior clause
    /// `q(v1,...)` for every target predicate.
    pub fn new(schema: Arc<Schema>, formulas: Vec<(ConjunctiveFormula, WeightHint)>, config: LearnConfig) -> Self {
        let priors = schema
            .targets()
            .map(|p| WeightedFormula {
                formula: prior_clause(&schema, p),
                weight: 0.0,
                hint: WeightHint::Neutral,
            })
            .collect();
        let formulas = formulas
            .into_iter()
            .map(|(formula, hint)| WeightedFormula {
                formula,
                weight: 0.0,
                hint,
            })
            .collect();
        WeightedModel {
            schema,
            formulas,
            priors,
            config,
        }
    }

    /// Assembles a model from parts, checking the prior-clause invariant.
    pub fn from_parts(
        schema: Arc<Schema>,
        formulas: Vec<WeightedFormula>,
        priors: Vec<WeightedFormula>,
        config: LearnConfig,
    ) -> Result<Self> {
        let mut seen = vec![0usize; schema.num_predicates()];
        for p in &priors {
            let lits = p.formula.literals();
            if lits.len() != 1 || lits[0].negated || !schema.is_target(lits[0].pred) {
                return Err(Error::Model("prior clause must be one positive target literal".into()));
            }
            seen[lits[0].pred.0 as usize] += 1;
        }
        for t in schema.targets() {
            if seen[t.0 as usize] != 1 {
                return Err(Error::Model(format!(
                    "target predicate `{}` needs exactly one prior clause",
                    schema.predicate(t).name
                )));
            }
        }
        let model = WeightedModel {
            schema,
            formulas,
            priors,
            config,
        };
        if model.clauses().any(|c| !c.weight.is_finite()) {
            return Err(Error::Model("non-finite weight".into()));
        }
        Ok(model)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn clauses(&self) -> impl Iterator<Item = &WeightedFormula> {
        self.formulas.iter().chain(&self.priors)
    }

    pub fn num_clauses(&self) -> usize {
        self.formulas.len() + self.priors.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.clauses().map(|c| c.weight).collect()
    }

    pub fn set_weights(&mut self, w: &[f64]) {
        assert_eq!(w.len(), self.num_clauses());
        for (c, &v) in self.formulas.iter_mut().chain(self.priors.iter_mut()).zip(w) {
            c.weight = v;
        }
    }

    pub fn prior_weight(&self, pred: PredId) -> Option<f64> {
        self.priors
            .iter()
            .find(|p| p.formula.literals()[0].pred == pred)
            .map(|p| p.weight)
    }
}

/// `q(v1,...,vn)` for target predicate `q`.
pub fn prior_clause(schema: &Schema, pred: PredId) -> ConjunctiveFormula {
    let args = schema
        .predicate(pred)
        .arg_types
        .iter()
        .enumerate()
        .map(|(i, &ty)| Term::Var(Variable::new(format!("v{}", i + 1), ty)))
        .collect();
    let lit = Literal::new(schema, pred, args, false).expect("prior clause is well typed");
    ConjunctiveFormula::conjunction(schema, vec![lit]).expect("prior clause is valid")
}

/// One grounding that touches at least one query atom, reduced by the
/// observed atoms. Its value is `negated XOR (every literal holds)`, where a
/// literal `(i, true)` requires query atom `i` to be true.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundFeature {
    pub clause: usize,
    pub lits: Vec<(u32, bool)>,
    pub negated: bool,
}

impl GroundFeature {
    #[inline]
    pub fn value(&self, state: &[bool]) -> bool {
        self.negated != self.lits.iter().all(|&(a, pos)| state[a as usize] == pos)
    }

    #[inline]
    fn value_with(&self, state: &[bool], atom: u32, v: bool) -> bool {
        self.negated
            != self.lits.iter().all(|&(a, pos)| {
                let s = if a == atom { v } else { state[a as usize] };
                s == pos
            })
    }
}

/// The ground Markov network of a model on one subgraph, conditioned on
/// everything except the query atoms.
#[derive(Clone, Debug)]
pub struct GroundNetwork {
    pub query_atoms: Vec<GroundAtom>,
    pub features: Vec<GroundFeature>,
    /// Per clause: groundings that are true whatever the query atoms are.
    pub evidence_counts: Vec<u64>,
    adjacency: Vec<Vec<u32>>,
}

impl GroundNetwork {
    pub fn num_atoms(&self) -> usize {
        self.query_atoms.len()
    }

    pub fn num_clauses(&self) -> usize {
        self.evidence_counts.len()
    }

    /// Features that mention query atom `i`.
    pub fn features_of(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }

    /// `n_i(x, y)` for every clause.
    pub fn counts(&self, state: &[bool]) -> Vec<f64> {
        let mut n: Vec<f64> = self.evidence_counts.iter().map(|&c| c as f64).collect();
        for f in &self.features {
            if f.value(state) {
                n[f.clause] += 1.0;
            }
        }
        n
    }

    /// `Σ_i w_i n_i(x, y)`.
    pub fn score(&self, weights: &[f64], state: &[bool]) -> f64 {
        self.counts(state).iter().zip(weights).map(|(n, w)| n * w).sum()
    }

    /// Change in score when atom `i` goes from false to true.
    pub fn flip_delta(&self, weights: &[f64], state: &[bool], i: usize) -> f64 {
        let a = i as u32;
        self.adjacency[i]
            .iter()
            .map(|&f| {
                let f = &self.features[f as usize];
                let t = f.value_with(state, a, true) as i32;
                let fl = f.value_with(state, a, false) as i32;
                weights[f.clause] * (t - fl) as f64
            })
            .sum()
    }

    /// `P(x_i = true | all other atoms)`.
    pub fn conditional(&self, weights: &[f64], state: &[bool], i: usize) -> f64 {
        1.0 / (1.0 + (-self.flip_delta(weights, state, i)).exp())
    }
}

enum Truth {
    Fixed(bool),
    Query(u32, bool),
}

/// Grounds every clause of `model` on `db`, treating `hidden` as the query
/// atoms and every other atom as observed under the closed world.
pub fn ground_model(model: &WeightedModel, db: &Database, hidden: &[GroundAtom]) -> GroundNetwork {
    let clauses: Vec<&ConjunctiveFormula> = model.clauses().map(|c| &c.formula).collect();
    ground_formulas(model.schema(), &clauses, db, hidden)
}

pub(crate) fn ground_formulas(
    schema: &Schema,
    clauses: &[&ConjunctiveFormula],
    db: &Database,
    hidden: &[GroundAtom],
) -> GroundNetwork {
    let mut index: Vec<HashMap<Vec<ConstId>, u32>> = vec![HashMap::new(); schema.num_predicates()];
    for (i, a) in hidden.iter().enumerate() {
        index[a.pred.0 as usize].insert(a.args.clone(), i as u32);
    }
    let mut features = Vec::new();
    let mut evidence_counts = vec![0u64; clauses.len()];
    let mut buf = Vec::new();
    for (ci, f) in clauses.iter().enumerate() {
        let (selector, _) = f.split(schema);
        let query = Query::compile(db, &selector, &f.variables());
        let mut vars = query.vars.clone();
        let consequent = f.consequent_position(schema);
        // target literals in formula order, with the consequent flipped so
        // an implication reads as `NOT (others AND NOT consequent)`
        let targets: Vec<_> = f
            .literals()
            .iter()
            .enumerate()
            .filter(|(_, l)| schema.is_target(l.pred))
            .map(|(i, l)| {
                let mut c = Query::compile_lit(db, l, &mut vars);
                if Some(i) == consequent {
                    c.negated = !c.negated;
                }
                c
            })
            .collect();
        let negated = consequent.is_some();
        query.for_each(db, |row| {
            let mut lits = Vec::new();
            let mut inner_false = false;
            for t in &targets {
                let truth = if !t.ground(row, &mut buf) {
                    Truth::Fixed(t.negated)
                } else if let Some(&i) = index[t.pred.0 as usize].get(buf.as_slice()) {
                    Truth::Query(i, !t.negated)
                } else {
                    Truth::Fixed(db.contains_ids(t.pred, &buf) != t.negated)
                };
                match truth {
                    Truth::Fixed(true) => {}
                    Truth::Fixed(false) => {
                        inner_false = true;
                        break;
                    }
                    Truth::Query(i, pos) => lits.push((i, pos)),
                }
            }
            if !inner_false {
                lits.sort_unstable();
                lits.dedup();
                inner_false = lits.windows(2).any(|w| w[0].0 == w[1].0);
            }
            if inner_false || lits.is_empty() {
                let inner = !inner_false;
                if inner != negated {
                    evidence_counts[ci] += 1;
                }
            } else {
                features.push(GroundFeature {
                    clause: ci,
                    lits,
                    negated,
                });
            }
        });
    }
    let mut adjacency = vec![Vec::new(); hidden.len()];
    for (fi, f) in features.iter().enumerate() {
        for &(a, _) in &f.lits {
            let adj: &mut Vec<u32> = &mut adjacency[a as usize];
            if adj.last() != Some(&(fi as u32)) {
                adj.push(fi as u32);
            }
        }
    }
    GroundNetwork {
        query_atoms: hidden.to_vec(),
        features,
        evidence_counts,
        adjacency,
    }
}

/// All type-consistent groundings of `preds` over the subgraph's constants.
pub fn query_atoms(db: &Database, preds: &[PredId]) -> Vec<GroundAtom> {
    preds.iter().flat_map(|&p| db.type_groundings(p)).collect()
}

/// The query atoms for prediction: groundings of the block's `?hide`
/// predicates, or of every target predicate when none is marked.
pub fn prediction_atoms(db: &Database) -> Vec<GroundAtom> {
    let preds: Vec<PredId> = if db.hidden_predicates().is_empty() {
        db.schema().targets().collect()
    } else {
        db.hidden_predicates().to_vec()
    };
    query_atoms(db, &preds)
}

/// Truth values of `atoms` in `db`.
pub fn observed_state(db: &Database, atoms: &[GroundAtom]) -> Vec<bool> {
    atoms.iter().map(|a| db.contains(a)).collect()
}

/// `n(x, y)` of `f` on `db` with the query atoms set to `assignment`.
pub fn true_grounding_count(
    schema: &Schema,
    f: &ConjunctiveFormula,
    db: &Database,
    hidden: &[GroundAtom],
    assignment: &[bool],
) -> u64 {
    let net = ground_formulas(schema, &[f], db, hidden);
    net.counts(assignment)[0] as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Role;

    pub(crate) fn schema() -> Arc<Schema> {
        let mut s = Schema::new();
        s.add_predicate("e", &["t"], Role::Evidence).unwrap();
        s.add_predicate("r", &["t", "t"], Role::Evidence).unwrap();
        s.add_predicate("q", &["t"], Role::Target).unwrap();
        s.add_predicate("p", &["t"], Role::Target).unwrap();
        Arc::new(s)
    }

    fn model(s: &Arc<Schema>, texts: &[&str]) -> WeightedModel {
        let fs = texts
            .iter()
            .map(|t| (ConjunctiveFormula::parse(s, t).unwrap(), WeightHint::Neutral))
            .collect();
        WeightedModel::new(s.clone(), fs, LearnConfig::default())
    }

    fn db(s: &Arc<Schema>, atoms: &[(&str, &[&str])]) -> Database {
        let mut d = Database::new(s.clone());
        for (p, a) in atoms {
            d.insert(p, a).unwrap();
        }
        d
    }

    fn q(s: &Schema, d: &Database, c: &str) -> GroundAtom {
        let _ = s;
        d.ground_atom("q", &[c]).unwrap()
    }

    #[test]
    fn single_grounding() {
        let s = schema();
        let m = model(&s, &["e(x) ^ q(x)"]);
        let d = db(&s, &[("e", &["a"])]);
        let net = ground_model(&m, &d, &[q(&s, &d, "a")]);
        assert_eq!(net.features.iter().filter(|f| f.clause == 0).count(), 1);
    }

    #[test]
    fn false_selector_drops_groundings() {
        let s = schema();
        let m = model(&s, &["e(x) ^ q(x)"]);
        let mut d = db(&s, &[]);
        d.add_constant(s.type_id("t").unwrap(), "a");
        let net = ground_model(&m, &d, &[q(&s, &d, "a")]);
        assert_eq!(net.features.iter().filter(|f| f.clause == 0).count(), 0);
    }

    #[test]
    fn two_groundings_share_an_atom() {
        let s = schema();
        let m = model(&s, &["r(x,y) ^ q(y)"]);
        let d = db(&s, &[("r", &["a", "b"]), ("r", &["c", "b"])]);
        let net = ground_model(&m, &d, &[q(&s, &d, "b")]);
        let f: Vec<_> = net.features.iter().filter(|f| f.clause == 0).collect();
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|f| f.lits == vec![(0, true)]));
    }

    #[test]
    fn grounding_counts() {
        let s = schema();
        let mut d = db(&s, &[("e", &["z"])]);
        let ty = s.type_id("t").unwrap();
        d.add_constant(ty, "a");
        d.add_constant(ty, "b");
        let f = ConjunctiveFormula::parse(&s, "q(x)").unwrap();
        let hidden = vec![q(&s, &d, "a"), q(&s, &d, "b")];
        assert_eq!(true_grounding_count(&s, &f, &d, &hidden, &[true, false]), 1);

        let g = ConjunctiveFormula::parse(&s, "r(x,y) ^ q(y)").unwrap();
        assert_eq!(true_grounding_count(&s, &g, &d, &hidden, &[true, true]), 0);

        let d2 = db(&s, &[("r", &["a", "b"]), ("r", &["c", "b"]), ("q", &["b"])]);
        assert_eq!(true_grounding_count(&s, &g, &d2, &[], &[]), 2);
        let hb = vec![q(&s, &d2, "b")];
        assert_eq!(true_grounding_count(&s, &g, &d2, &hb, &[true]), 2);
        assert_eq!(true_grounding_count(&s, &g, &d2, &hb, &[false]), 0);
    }

    #[test]
    fn implication_counts() {
        let s = schema();
        let d = db(&s, &[("e", &["a"])]);
        let f = ConjunctiveFormula::parse(&s, "e(x) ^ q(x) => p(x)").unwrap();
        let hidden = vec![q(&s, &d, "a"), d.ground_atom("p", &["a"]).unwrap()];
        let truth = |qv: bool, pv: bool| true_grounding_count(&s, &f, &d, &hidden, &[qv, pv]);
        assert_eq!(truth(false, false), 1);
        assert_eq!(truth(false, true), 1);
        assert_eq!(truth(true, false), 0);
        assert_eq!(truth(true, true), 1);
    }

    #[test]
    fn contradictory_literals_are_constant() {
        let s = schema();
        let d = db(&s, &[("e", &["a"])]);
        let f = ConjunctiveFormula::parse(&s, "e(x) ^ q(x) ^ !q(x)").unwrap();
        let hidden = vec![q(&s, &d, "a")];
        let net = ground_formulas(&s, &[&f], &d, &hidden);
        assert!(net.features.is_empty());
        assert_eq!(net.evidence_counts, vec![0]);
    }

    #[test]
    fn prior_clause_per_target() {
        let s = schema();
        let m = model(&s, &[]);
        let texts: Vec<_> = m.priors.iter().map(|p| p.formula.to_text(&s)).collect();
        assert_eq!(texts, ["q(v1)", "p(v1)"]);
        assert!(WeightedModel::from_parts(s.clone(), vec![], vec![], LearnConfig::default()).is_err());
    }
}
