use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resolwe::grammar::{ExpandMode, Grammar};
use resolwe::io::{write_stream, StreamReader};
use resolwe::metrics::{average_precision, paper_auc, standard_auc, RankedEntry, RankedPrediction};
use resolwe::mln::{exact_network, ground_model, predict, InferenceConfig, LearnConfig, Learner, WeightedModel};
use resolwe::pipeline::{run_pipeline, Mode, PipelineConfig};
use resolwe::select::{evaluate_subgraph, Selector, WeightHint};
use resolwe::synth::{EvidenceDensity, Generator, PlantedRule, SynthConfig};
use resolwe::{ConjunctiveFormula, Database, Literal, Role, Schema, Substitution, Term, Variable};

fn schema() -> Arc<Schema> {
    let mut s = Schema::new();
    s.add_predicate("e", &["a"], Role::Evidence).unwrap();
    s.add_predicate("r", &["a", "b"], Role::Evidence).unwrap();
    s.add_predicate("s", &["a", "a"], Role::Evidence).unwrap();
    s.add_predicate("q", &["a"], Role::Target).unwrap();
    s.add_predicate("p", &["a", "b"], Role::Target).unwrap();
    Arc::new(s)
}

const VARS: [(&str, &str); 4] = [("x", "a"), ("y", "a"), ("z", "b"), ("w", "b")];

fn random_lits(s: &Schema, rng: &mut ChaCha8Rng, preds: &[&str], neg_rate: f64) -> Vec<Literal> {
    let n = rng.gen_range(1..=4);
    (0..n)
        .map(|_| {
            let id = s.lookup(preds.choose(rng).unwrap()).unwrap();
            let args = s
                .predicate(id)
                .arg_types
                .iter()
                .map(|&t| {
                    let opts: Vec<_> = VARS.iter().filter(|v| s.type_id(v.1) == Some(t)).collect();
                    let v = opts.choose(rng).unwrap();
                    Term::Var(Variable::new(v.0, t))
                })
                .collect();
            Literal::new(s, id, args, rng.gen_bool(neg_rate)).unwrap()
        })
        .collect()
}

fn random_db(s: &Arc<Schema>, rng: &mut ChaCha8Rng) -> Database {
    let mut db = Database::new(s.clone());
    let a: Vec<String> = (0..rng.gen_range(1..=4)).map(|i| format!("a{i}")).collect();
    let b: Vec<String> = (0..rng.gen_range(1..=4)).map(|i| format!("b{i}")).collect();
    for c in &a {
        db.add_constant(s.type_id("a").unwrap(), c);
    }
    for c in &b {
        db.add_constant(s.type_id("b").unwrap(), c);
    }
    let d = rng.gen_range(0.1..0.6);
    for x in &a {
        for (pred, args) in [("e", vec![x.as_str()]), ("q", vec![x.as_str()])] {
            if rng.gen_bool(d) {
                db.insert(pred, &args).unwrap();
            }
        }
        for y in &a {
            if rng.gen_bool(d) {
                db.insert("s", &[x, y]).unwrap();
            }
        }
        for z in &b {
            for pred in ["r", "p"] {
                if rng.gen_bool(d) {
                    db.insert(pred, &[x, z]).unwrap();
                }
            }
        }
    }
    db
}

/// Every substitution of the literals' variables over the typed domains that
/// makes each ground literal hold.
fn brute_bindings(s: &Schema, db: &Database, lits: &[Literal]) -> BTreeSet<Substitution> {
    let vars: BTreeSet<Variable> = lits.iter().flat_map(|l| l.variables().cloned()).collect();
    let vars: Vec<Variable> = vars.into_iter().collect();
    let mut out = BTreeSet::new();
    let mut subs: Vec<Substitution> = vec![BTreeMap::new()];
    for v in &vars {
        subs = subs
            .into_iter()
            .flat_map(|sub| {
                db.domain(v.ty)
                    .iter()
                    .map(|&c| {
                        let mut n = sub.clone();
                        n.insert(v.clone(), db.const_name(c).to_string());
                        n
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    for sub in subs {
        let ok = lits.iter().all(|l| {
            let args = l
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => Term::Const {
                        name: sub[v].clone(),
                        ty: v.ty,
                    },
                    c => c.clone(),
                })
                .collect();
            db.holds(&Literal::new(s, l.pred, args, l.negated).unwrap()).unwrap()
        });
        if ok {
            out.insert(sub);
        }
    }
    out
}

fn planted_config(seed: u64, subgraphs: usize, noise: usize, hide: bool) -> SynthConfig {
    SynthConfig {
        seed,
        subgraphs,
        background_rate: 0.02,
        predicates: (0..=noise)
            .map(|i| format!("r{i}(person,item) evidence"))
            .chain(["likes(person,item) target".to_string()])
            .collect(),
        constants: [("person".to_string(), 6), ("item".to_string(), 6)].into(),
        evidence: vec![EvidenceDensity {
            predicate: "r0".into(),
            density: 0.15,
        }],
        default_density: 0.1,
        planted: vec![PlantedRule {
            formula: "r0(p,i) ^ likes(p,i)".into(),
            probability: 0.9,
        }],
        hide: if hide { vec!["likes".into()] } else { vec![] },
    }
}

fn entries(scores: &[f64], labels: &[bool]) -> Vec<RankedEntry> {
    scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&score, &label))| RankedEntry {
            atom: format!("a{i}"),
            score,
            label,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bindings_match_brute_force(seed in any::<u64>()) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lits = random_lits(&s, &mut rng, &["e", "r", "s", "q", "p"], 0.25);
        let db = random_db(&s, &mut rng);
        let got = db.satisfying_bindings(&lits);
        prop_assume!(got.is_ok());
        let got: BTreeSet<Substitution> = got.unwrap().into_iter().collect();
        prop_assert_eq!(got, brute_bindings(&s, &db, &lits));
    }

    #[test]
    fn canonicalize_is_idempotent_and_alpha_invariant(seed in any::<u64>()) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lits = random_lits(&s, &mut rng, &["e", "r", "s"], 0.0);
        lits.extend(random_lits(&s, &mut rng, &["q", "p"], 0.0));
        let f = ConjunctiveFormula::conjunction(&s, lits.clone());
        prop_assume!(f.is_ok());
        let c = f.unwrap().canonicalize(&s);
        prop_assert_eq!(c.canonicalize(&s), c.clone());

        let renamed: Vec<Literal> = lits
            .iter()
            .map(|l| {
                let args = l
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => Term::Var(Variable::new(format!("{}_{seed}", v.name), v.ty)),
                        c => c.clone(),
                    })
                    .collect();
                Literal::new(&s, l.pred, args, l.negated).unwrap()
            })
            .collect();
        let mut shuffled = renamed;
        shuffled.shuffle(&mut rng);
        let g = ConjunctiveFormula::conjunction(&s, shuffled).unwrap();
        prop_assert_eq!(g.canonicalize(&s), c);
    }

    #[test]
    fn raising_target_truth_never_lowers_joint(seed in any::<u64>()) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lits = random_lits(&s, &mut rng, &["e", "r", "s"], 0.2);
        lits.extend(random_lits(&s, &mut rng, &["q", "p"], 0.0));
        let f = ConjunctiveFormula::conjunction(&s, lits);
        prop_assume!(f.is_ok());
        let f = f.unwrap();
        let mut db = random_db(&s, &mut rng);
        let before = evaluate_subgraph(&s, &f, &db);
        let missing: Vec<_> = ["q", "p"]
            .iter()
            .flat_map(|p| db.type_groundings(s.lookup(p).unwrap()))
            .filter(|a| !db.contains(a))
            .collect();
        prop_assume!(!missing.is_empty());
        db.insert_atom(missing.choose(&mut rng).unwrap().clone());
        let after = evaluate_subgraph(&s, &f, &db);
        prop_assert_eq!(before.selected, after.selected);
        prop_assert!(after.joint_prob() >= before.joint_prob());
    }

    #[test]
    fn stream_roundtrip_is_identity(seed in any::<u64>()) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dbs: Vec<Database> = (0..rng.gen_range(0..5))
            .map(|_| {
                let mut db = random_db(&s, &mut rng);
                if rng.gen_bool(0.3) {
                    db.hide(s.lookup("q").unwrap());
                }
                db
            })
            .collect();
        let mut buf = Vec::new();
        write_stream(&mut buf, &dbs).unwrap();
        let back: Vec<Database> = StreamReader::new(&buf[..], s.clone()).collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(back, dbs);
    }

    #[test]
    fn exact_marginals_are_complementary(seed in any::<u64>()) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = ConjunctiveFormula::parse(&s, "r(x,z) ^ q(x) ^ p(x,z)").unwrap();
        let g = ConjunctiveFormula::parse(&s, "s(x,y) ^ q(x) ^ !q(y)").unwrap();
        let mut m = WeightedModel::new(
            s.clone(),
            vec![(f, WeightHint::Neutral), (g, WeightHint::Neutral)],
            LearnConfig::default(),
        );
        let w: Vec<f64> = (0..m.num_clauses()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        m.set_weights(&w);
        let db = random_db(&s, &mut rng);
        let mut hidden = db.type_groundings(s.lookup("q").unwrap());
        hidden.extend(db.type_groundings(s.lookup("p").unwrap()).into_iter().take(6));
        let r = exact_network(&ground_model(&m, &db, &hidden), &w).unwrap();
        for (t, f) in r.marginals.iter().zip(&r.marginals_false) {
            prop_assert!((t + f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_increase_favours_higher_counts(seed in any::<u64>(), i in 0usize..3, dw in 0.01f64..2.0) {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = ConjunctiveFormula::parse(&s, "e(x) ^ q(x) ^ q(y)").unwrap();
        let mut m = WeightedModel::new(s.clone(), vec![(f, WeightHint::Neutral)], LearnConfig::default());
        let mut db = Database::new(s.clone());
        db.insert("e", &["a0"]).unwrap();
        db.insert("r", &["a1", "b0"]).unwrap();
        let hidden = db.type_groundings(s.lookup("q").unwrap());
        prop_assert_eq!(hidden.len(), 2);
        let w: Vec<f64> = (0..m.num_clauses()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        m.set_weights(&w);
        let net = ground_model(&m, &db, &hidden);
        let i = i % w.len();
        let mut w2 = w.clone();
        w2[i] += dw;
        let states: Vec<[bool; 2]> = vec![[false, false], [false, true], [true, false], [true, true]];
        let prob = |w: &[f64], st: &[bool]| {
            (net.score(w, st) - exact_network(&net, w).unwrap().log_z).exp()
        };
        let top = states.iter().map(|st| net.counts(st)[i]).fold(f64::NEG_INFINITY, f64::max);
        let (e1, e2) = (
            exact_network(&net, &w).unwrap().expected_counts[i],
            exact_network(&net, &w2).unwrap().expected_counts[i],
        );
        prop_assert!(e2 >= e1 - 1e-12);
        for st in &states {
            if net.counts(st)[i] == top {
                prop_assert!(prob(&w2, st) >= prob(&w, st) - 1e-12);
            }
        }
        // pairwise odds move towards the assignment with the larger count
        for a in &states {
            for b in &states {
                if net.counts(a)[i] > net.counts(b)[i] {
                    prop_assert!(prob(&w2, a) / prob(&w2, b) > prob(&w, a) / prob(&w, b));
                }
            }
        }
    }

    #[test]
    fn ranking_metrics_depend_only_on_order(
        scores in proptest::collection::vec(-10.0f64..10.0, 2..40),
        flip in any::<u64>(),
    ) {
        let labels: Vec<bool> = (0..scores.len()).map(|i| (flip >> (i % 64)) & 1 == 1).collect();
        let r1 = RankedPrediction::new(entries(&scores, &labels));
        let squashed: Vec<f64> = scores.iter().map(|x| (x / 3.0).exp() * 5.0 + 1.0).collect();
        let r2 = RankedPrediction::new(entries(&squashed, &labels));
        prop_assert_eq!(average_precision(&r1), average_precision(&r2));
        prop_assert_eq!(paper_auc(&r1), paper_auc(&r2));
        for v in [average_precision(&r1), paper_auc(&r1), standard_auc(&r1)].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn reversed_ranking_complements_auc(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
        scores.shuffle(&mut rng);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let fwd = standard_auc(&RankedPrediction::new(entries(&scores, &labels)));
        let neg: Vec<f64> = scores.iter().map(|x| -x).collect();
        let rev = standard_auc(&RankedPrediction::new(entries(&neg, &labels)));
        match (fwd, rev) {
            (Some(a), Some(b)) => prop_assert!((a + b - 1.0).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn selection_is_stream_order_invariant(seed in any::<u64>()) {
        let g = Grammar::parse(include_str!("../../../demo/likes.grammar")).unwrap();
        let cfg = SynthConfig::from_toml(include_str!("../../../demo/train.toml")).unwrap();
        let mut dbs: Vec<Database> = Generator::new(SynthConfig { seed, subgraphs: 30, ..cfg })
            .unwrap()
            .subgraphs()
            .collect();
        let cands = g.expand(ExpandMode::Selection).formulas;
        let run = |dbs: &[Database], parallel: bool| {
            let mut sel = Selector::new(g.schema.clone(), cands.clone()).parallel(parallel);
            dbs.iter().for_each(|d| sel.observe(d));
            sel.finalize(0.4)
        };
        let a = run(&dbs, true);
        dbs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let b = run(&dbs, false);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.resolved, &y.resolved);
            prop_assert!((x.score - y.score).abs() < 1e-12);
        }
    }

    #[test]
    fn resolwe_clauses_are_skip_clauses(seed in any::<u64>(), theta in 0.0f64..0.9) {
        let g = Grammar::parse(include_str!("../../../demo/likes.grammar")).unwrap();
        let cfg = SynthConfig::from_toml(include_str!("../../../demo/train.toml")).unwrap();
        let dbs: Vec<Database> = Generator::new(SynthConfig { seed, subgraphs: 32, ..cfg })
            .unwrap()
            .subgraphs()
            .collect();
        let texts = |mode| {
            let cfg = PipelineConfig { mode, theta, ..PipelineConfig::default() };
            let out = run_pipeline(&g, &dbs, &cfg).unwrap();
            out.model
                .formulas
                .iter()
                .map(|f| f.formula.canonicalize(&g.schema).to_text(&g.schema))
                .collect::<BTreeSet<_>>()
        };
        let (sel, all) = (texts(Mode::Resolwe), texts(Mode::SkipSelection));
        prop_assert!(sel.is_subset(&all), "{:?} not within {:?}", sel, all);
    }
}

fn planted_grammar(noise: usize) -> Grammar {
    let mut g = String::new();
    for i in 0..=noise {
        g += &format!("predicate r{i}(person,item) evidence\n");
    }
    g += "predicate likes(person,item) target\n";
    let exps: Vec<String> = (0..=noise).map(|i| format!("r{i}(p,i)")).collect();
    g += &format!("placeholder REL(p:person,i:item) := {}\n", exps.join(" | "));
    g += "template REL(p,i) ^ likes(p,i)\n";
    Grammar::parse(&g).unwrap()
}

#[test]
fn planted_average_tracks_rule_probability() {
    let g = planted_grammar(3);
    let planted = ConjunctiveFormula::parse(&g.schema, "r0(p,i) ^ likes(p,i)").unwrap();
    let seeds = 40;
    let mut within = 0;
    for seed in 0..seeds {
        let gen = Generator::new(planted_config(seed, 30, 3, false)).unwrap();
        let mut sel = Selector::new(g.schema.clone(), vec![planted.clone()]);
        gen.subgraphs().for_each(|d| sel.observe(&d));
        let mean = sel.stats()[0].joint.mean().unwrap();
        within += ((mean - 0.9).abs() <= 0.1) as usize;
    }
    assert!(within * 100 >= 95 * seeds as usize, "{within}/{seeds}");
}

#[test]
fn learning_signs_follow_the_planted_rule() {
    let g = planted_grammar(0);
    let planted = ConjunctiveFormula::parse(&g.schema, "r0(p,i) ^ likes(p,i)").unwrap();
    let model = WeightedModel::new(
        g.schema.clone(),
        vec![(planted.canonicalize(&g.schema), WeightHint::Neutral)],
        LearnConfig::default(),
    );
    let mut learner = Learner::new(model, LearnConfig::default()).unwrap();
    for db in Generator::new(planted_config(5, 200, 0, false)).unwrap().subgraphs() {
        learner.observe(&db).unwrap();
    }
    let m = learner.model();
    let w = m.weights();
    assert!(w[0] > 0.0, "planted weight {}", w[0]);
    assert!(w[1] < 0.0, "prior weight {}", w[1]);
}

#[test]
fn planted_model_ranks_true_atoms_first() {
    let g = planted_grammar(0);
    let planted = ConjunctiveFormula::parse(&g.schema, "r0(p,i) ^ likes(p,i)").unwrap();
    let mut m = WeightedModel::new(g.schema.clone(), vec![(planted, WeightHint::Neutral)], LearnConfig::default());
    m.set_weights(&[4.0, -3.0]);
    let test: Vec<Database> = Generator::new(planted_config(77, 20, 0, true)).unwrap().subgraphs().collect();
    let cfg = InferenceConfig::default();
    let mut all = Vec::new();
    for db in &test {
        let hidden = resolwe::mln::prediction_atoms(db);
        all.extend(predict(&m, db, &hidden, &cfg).unwrap().entries().iter().cloned());
    }
    let auc = standard_auc(&RankedPrediction::new(all)).unwrap();
    assert!(auc >= 0.9, "auc {auc}");
}
