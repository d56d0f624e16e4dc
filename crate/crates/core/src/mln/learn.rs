use rand::Rng;

use super::infer::{exact_network, gibbs_sweep, subgraph_rng};
use super::{ground_model, observed_state, query_atoms, GroundNetwork, LearnConfig, WeightedModel};
use crate::db::Database;
use crate::error::Result;
use crate::logic::PredId;

/// How the model-side expectation of the counts is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativePhase {
    /// Counts at the end of a Gibbs chain of this many sweeps started at the data.
    Gibbs(usize),
    /// Exact expected counts by enumeration.
    Exact,
}

/// `n(data) - n(sample)` per clause.
pub fn cd_gradient(
    net: &GroundNetwork,
    weights: &[f64],
    data: &[bool],
    phase: NegativePhase,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let positive = net.counts(data);
    let negative = match phase {
        NegativePhase::Gibbs(sweeps) => {
            let mut state = data.to_vec();
            for _ in 0..sweeps {
                gibbs_sweep(net, weights, &mut state, rng);
            }
            net.counts(&state)
        }
        NegativePhase::Exact => exact_network(net, weights)?.expected_counts,
    };
    Ok(positive.iter().zip(&negative).map(|(p, n)| p - n).collect())
}

/// One CD update on a fully observed subgraph: every target atom is a
/// query atom, the chain starts at the observed state, and
/// `w += rate * (g - w / variance)`. Returns the raw gradient.
pub fn cd_step(m: &mut WeightedModel, db: &Database, cfg: &LearnConfig, ordinal: u64) -> Result<Vec<f64>> {
    let targets: Vec<PredId> = m.schema().targets().collect();
    let hidden = query_atoms(db, &targets);
    let net = ground_model(m, db, &hidden);
    let data = observed_state(db, &hidden);
    let mut w = m.weights();
    let mut rng = subgraph_rng(cfg.seed, ordinal);
    let g = cd_gradient(&net, &w, &data, NegativePhase::Gibbs(cfg.cd_chain_length), &mut rng)?;
    for (wi, gi) in w.iter_mut().zip(&g) {
        *wi += cfg.learning_rate * (gi - *wi / cfg.prior_variance);
    }
    m.set_weights(&w);
    Ok(g)
}

/// Sequential CD over a stream of training subgraphs.
pub struct Learner {
    model: WeightedModel,
    cfg: LearnConfig,
    seen: u64,
}

impl Learner {
    pub fn new(mut model: WeightedModel, cfg: LearnConfig) -> Result<Self> {
        cfg.validate()?;
        model.config = cfg.clone();
        Ok(Learner { model, cfg, seen: 0 })
    }

    pub fn observe(&mut self, db: &Database) -> Result<()> {
        cd_step(&mut self.model, db, &self.cfg, self.seen)?;
        self.seen += 1;
        Ok(())
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn model(&self) -> &WeightedModel {
        &self.model
    }

    pub fn into_model(self) -> WeightedModel {
        self.model
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::schema;
    use super::*;
    use crate::logic::ConjunctiveFormula;
    use crate::select::WeightHint;

    fn setup() -> (WeightedModel, Database) {
        let s = schema();
        let f = ConjunctiveFormula::parse(&s, "e(x) ^ q(x)").unwrap();
        let m = WeightedModel::new(s.clone(), vec![(f, WeightHint::Neutral)], LearnConfig::default());
        let mut d = Database::new(s.clone());
        d.insert("e", &["a"]).unwrap();
        (m, d)
    }

    #[test]
    fn zero_gradient_keeps_zero_weights() {
        let (m, _) = setup();
        let s = m.schema().clone();
        // no constants: no groundings, so no gradient
        let d = Database::new(s);
        let mut m2 = m.clone();
        let g = cd_step(&mut m2, &d, &LearnConfig::default(), 0).unwrap();
        assert!(g.iter().all(|&g| g == 0.0));
        assert_eq!(m2.weights(), m.weights());
    }

    #[test]
    fn penalty_shrinks_weight() {
        let (mut m, _) = setup();
        let d = Database::new(m.schema().clone());
        let mut w = m.weights();
        w[0] = 1.0;
        m.set_weights(&w);
        cd_step(&mut m, &d, &LearnConfig::default(), 0).unwrap();
        assert!((m.weights()[0] - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn exact_phase_matches_expectation() {
        let (m, mut d) = setup();
        d.insert("q", &["a"]).unwrap();
        let hidden = vec![d.ground_atom("q", &["a"]).unwrap()];
        let net = ground_model(&m, &d, &hidden);
        let mut rng = subgraph_rng(0, 0);
        let g = cd_gradient(&net, &[0.0; 3], &[true], NegativePhase::Exact, &mut rng).unwrap();
        // formula and q prior both count 1 in the data, 0.5 in expectation
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!((g[2 - 1] - 0.5).abs() < 1e-12);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn learner_is_deterministic() {
        let (m, mut d) = setup();
        d.insert("q", &["a"]).unwrap();
        d.insert("e", &["b"]).unwrap();
        let run = || {
            let mut l = Learner::new(m.clone(), LearnConfig::default()).unwrap();
            for _ in 0..20 {
                l.observe(&d).unwrap();
            }
            l.into_model().weights()
        };
        assert_eq!(run(), run());
    }
}
