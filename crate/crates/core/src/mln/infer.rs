use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ground_model, GroundNetwork, WeightedModel};
use crate::db::{Database, GroundAtom};
use crate::error::{Error, Result};
use crate::metrics::{RankedEntry, RankedPrediction};

/// Largest query set that exact enumeration accepts.
pub const MAX_EXACT_HIDDEN: usize = 20;

/// Independent RNG for subgraph `ordinal` of a run seeded with `seed`.
pub fn subgraph_rng(seed: u64, ordinal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactResult {
    /// `P(x_i = true)` per query atom.
    pub marginals: Vec<f64>,
    /// `P(x_i = false)` per query atom, summed independently.
    pub marginals_false: Vec<f64>,
    /// `E[n_i]` per clause.
    pub expected_counts: Vec<f64>,
    pub log_z: f64,
}

/// Marginals and expected counts by enumerating all `2^h` assignments in
/// Gray-code order, keeping a running log-sum-exp.
pub fn exact_network(net: &GroundNetwork, weights: &[f64]) -> Result<ExactResult> {
    let h = net.num_atoms();
    if h > MAX_EXACT_HIDDEN {
        return Err(Error::TooManyHidden {
            hidden: h,
            max: MAX_EXACT_HIDDEN,
        });
    }
    let k = net.num_clauses();
    let mut state = vec![false; h];
    let mut counts = net.counts(&state);
    let mut score: f64 = counts.iter().zip(weights).map(|(n, w)| n * w).sum();

    let mut max = f64::NEG_INFINITY;
    let mut z = 0.0;
    let mut pt = vec![0.0; h];
    let mut pf = vec![0.0; h];
    let mut en = vec![0.0; k];
    let mut before = Vec::new();
    let total: u64 = 1 << h;
    for t in 0..total {
        if score > max {
            let scale = (max - score).exp();
            z *= scale;
            pt.iter_mut().chain(pf.iter_mut()).chain(en.iter_mut()).for_each(|v| *v *= scale);
            max = score;
        }
        let p = (score - max).exp();
        z += p;
        for i in 0..h {
            if state[i] {
                pt[i] += p;
            } else {
                pf[i] += p;
            }
        }
        for (e, n) in en.iter_mut().zip(&counts) {
            *e += p * n;
        }
        if t + 1 == total {
            break;
        }
        let j = (t + 1).trailing_zeros() as usize;
        let adj = net.features_of(j);
        before.clear();
        before.extend(adj.iter().map(|&f| net.features[f as usize].value(&state)));
        state[j] = !state[j];
        for (&f, &b) in adj.iter().zip(&before) {
            let f = &net.features[f as usize];
            let a = f.value(&state);
            if a != b {
                let d = if a { 1.0 } else { -1.0 };
                counts[f.clause] += d;
                score += d * weights[f.clause];
            }
        }
    }
    Ok(ExactResult {
        marginals: pt.iter().map(|v| v / z).collect(),
        marginals_false: pf.iter().map(|v| v / z).collect(),
        expected_counts: en.iter().map(|v| v / z).collect(),
        log_z: max + z.ln(),
    })
}

/// Exact `P(x_i = true | evidence)` for every atom in `hidden`.
pub fn exact_conditional(m: &WeightedModel, db: &Database, hidden: &[GroundAtom]) -> Result<Vec<f64>> {
    if hidden.len() > MAX_EXACT_HIDDEN {
        return Err(Error::TooManyHidden {
            hidden: hidden.len(),
            max: MAX_EXACT_HIDDEN,
        });
    }
    let net = ground_model(m, db, hidden);
    Ok(exact_network(&net, &m.weights())?.marginals)
}

/// One systematic-scan Gibbs sweep; returns nothing, updates `state`.
pub(crate) fn gibbs_sweep(net: &GroundNetwork, weights: &[f64], state: &mut [bool], rng: &mut impl Rng) {
    for i in 0..state.len() {
        let p = net.conditional(weights, state, i);
        state[i] = rng.gen::<f64>() < p;
    }
}

/// Rao-Blackwellized marginals: after `burn_in` sweeps, averages each
/// atom's full conditional over `samples` sweeps.
pub fn gibbs_network(
    net: &GroundNetwork,
    weights: &[f64],
    burn_in: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let h = net.num_atoms();
    let mut state: Vec<bool> = (0..h).map(|_| rng.gen()).collect();
    for _ in 0..burn_in {
        gibbs_sweep(net, weights, &mut state, rng);
    }
    let mut acc = vec![0.0; h];
    for _ in 0..samples {
        for i in 0..h {
            let p = net.conditional(weights, &state, i);
            acc[i] += p;
            state[i] = rng.gen::<f64>() < p;
        }
    }
    let n = samples.max(1) as f64;
    acc.iter().map(|v| v / n).collect()
}

pub fn gibbs_conditional(
    m: &WeightedModel,
    db: &Database,
    hidden: &[GroundAtom],
    burn_in: usize,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let net = ground_model(m, db, hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gibbs_network(&net, &m.weights(), burn_in, samples, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InferenceConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            burn_in: 100,
            samples: 1000,
            seed: 0,
        }
    }
}

/// Scores every atom in `hidden` by its marginal (exact up to
/// [`MAX_EXACT_HIDDEN`] atoms, Gibbs beyond) and ranks them, labelled by
/// their truth in `db`.
pub fn predict(
    m: &WeightedModel,
    db: &Database,
    hidden: &[GroundAtom],
    cfg: &InferenceConfig,
) -> Result<RankedPrediction> {
    if hidden.is_empty() {
        return Ok(RankedPrediction::default());
    }
    let net = ground_model(m, db, hidden);
    let weights = m.weights();
    let scores = if hidden.len() <= MAX_EXACT_HIDDEN {
        exact_network(&net, &weights)?.marginals
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        gibbs_network(&net, &weights, cfg.burn_in, cfg.samples, &mut rng)
    };
    Ok(RankedPrediction::new(
        hidden
            .iter()
            .zip(scores)
            .map(|(a, score)| RankedEntry {
                atom: db.atom_text(a),
                score,
                label: db.contains(a),
            })
            .collect(),
    ))
}
