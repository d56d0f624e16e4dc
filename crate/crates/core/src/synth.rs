//! Synthetic subgraph streams with planted rules.
//!
//! Each subgraph gets a fixed number of constants per type and evidence
//! atoms drawn independently at per-predicate densities. A target atom
//! reached by the selector of one or more planted rules is true with
//! probability `1 - Π(1 - p_r)`; every other target atom is true at the
//! background rate.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::db::{Database, GroundAtom, Query};
use crate::error::{Error, Result};
use crate::grammar::parse_predicate;
use crate::io::write_block;
use crate::logic::{ConjunctiveFormula, Schema, TypeId};
use crate::mln::subgraph_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedRule {
    pub formula: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceDensity {
    pub predicate: String,
    pub density: f64,
}

fn default_background() -> f64 {
    0.02
}

fn default_density() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub subgraphs: usize,
    #[serde(default = "default_background")]
    pub background_rate: f64,
    /// Predicate declarations, e.g. `likes(person,item) target`.
    pub predicates: Vec<String>,
    /// Constants per type in every subgraph.
    pub constants: BTreeMap<String, usize>,
    #[serde(default)]
    pub evidence: Vec<EvidenceDensity>,
    /// Density of evidence predicates without an `evidence` entry.
    #[serde(default = "default_density")]
    pub default_density: f64,
    #[serde(default)]
    pub planted: Vec<PlantedRule>,
    /// Target predicates marked `?hide` in every block.
    #[serde(default)]
    pub hide: Vec<String>,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub subgraphs: usize,
    pub schema_hash: String,
    pub background_rate: f64,
    /// Planted rules in canonical form.
    pub planted: Vec<PlantedRule>,
}

/// A validated [`SynthConfig`] bound to its schema.
#[derive(Clone, Debug)]
pub struct Generator {
    cfg: SynthConfig,
    schema: Arc<Schema>,
    constants: Vec<usize>,
    densities: Vec<f64>,
    planted: Vec<(ConjunctiveFormula, f64)>,
    hide: Vec<crate::logic::PredId>,
}

fn check_prob(what: &str, p: f64, max: f64) -> Result<()> {
    if (0.0..=max).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must lie in [0, {max}], got {p}")))
    }
}

impl Generator {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        let mut schema = Schema::new();
        for (i, decl) in cfg.predicates.iter().enumerate() {
            parse_predicate(&mut schema, decl, i + 1)?;
        }
        let schema = Arc::new(schema);
        check_prob("background rate", cfg.background_rate, 0.2)?;
        check_prob("default density", cfg.default_density, 0.2)?;

        let constants = (0..schema.num_types())
            .map(|t| {
                let name = schema.type_name(TypeId(t as u32));
                cfg.constants
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("no constant count for type `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        for name in cfg.constants.keys() {
            if schema.type_id(name).is_none() {
                return Err(Error::Config(format!("unknown type `{name}`")));
            }
        }

        let mut densities = vec![cfg.default_density; schema.num_predicates()];
        for e in &cfg.evidence {
            let id = schema
                .lookup(&e.predicate)
                .ok_or_else(|| Error::Config(format!("unknown predicate `{}`", e.predicate)))?;
            if schema.is_target(id) {
                return Err(Error::Config(format!("`{}` is a target predicate", e.predicate)));
            }
            check_prob(&format!("density of `{}`", e.predicate), e.density, 0.2)?;
            densities[id.0 as usize] = e.density;
        }

        let mut planted = Vec::new();
        for r in &cfg.planted {
            check_prob("planted probability", r.probability, 1.0)?;
            let f = ConjunctiveFormula::parse(&schema, &r.formula)?.as_conjunction();
            let (selector, enforcer) = f.split(&schema);
            if enforcer.len() != 1 || enforcer[0].negated {
                return Err(Error::Config(format!(
                    "planted rule `{}` needs exactly one positive target literal",
                    r.formula
                )));
            }
            let bound: Vec<_> = selector
                .iter()
                .filter(|l| !l.negated)
                .flat_map(|l| l.variables())
                .collect();
            if let Some(v) = enforcer[0].variables().find(|v| !bound.contains(v)) {
                return Err(Error::Config(format!(
                    "planted rule `{}`: `{}` is not bound by the selector",
                    r.formula, v.name
                )));
            }
            planted.push((f.canonicalize(&schema), r.probability));
        }

        let hide = cfg
            .hide
            .iter()
            .map(|p| {
                schema
                    .lookup(p)
                    .filter(|&id| schema.is_target(id))
                    .ok_or_else(|| Error::Config(format!("`{p}` is not a target predicate")))
            })
            .collect::<Result<_>>()?;

        Ok(Generator {
            cfg,
            schema,
            constants,
            densities,
            planted,
            hide,
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Subgraph `i`; depends only on the seed and `i`.
    pub fn subgraph(&self, i: usize) -> Database {
        let s = &self.schema;
        let mut rng = subgraph_rng(self.cfg.seed, i as u64);
        let mut db = Database::new(s.clone());
        for (t, &n) in self.constants.iter().enumerate() {
            let ty = TypeId(t as u32);
            for c in 0..n {
                db.add_constant(ty, &format!("{}{c}", s.type_name(ty)));
            }
        }
        let preds: Vec<_> = s.predicates().map(|(id, _)| id).collect();
        for &p in &preds {
            if !s.is_target(p) {
                let d = self.densities[p.0 as usize];
                for a in db.type_groundings(p) {
                    if rng.gen::<f64>() < d {
                        db.insert_atom(a);
                    }
                }
            }
        }
        let mut miss: HashMap<GroundAtom, f64> = HashMap::new();
        for (f, p) in &self.planted {
            let (selector, enforcer) = f.split(s);
            let query = Query::compile(&db, &selector, &[]);
            let mut vars = query.vars.clone();
            let target = Query::compile_lit(&db, &enforcer[0], &mut vars);
            let mut reached = Vec::new();
            let mut buf = Vec::new();
            query.for_each(&db, |row| {
                if target.ground(row, &mut buf) {
                    reached.push(GroundAtom {
                        pred: target.pred,
                        args: buf.clone(),
                    });
                }
            });
            reached.sort();
            reached.dedup();
            for a in reached {
                *miss.entry(a).or_insert(1.0) *= 1.0 - p;
            }
        }
        for &p in &preds {
            if s.is_target(p) {
                for a in db.type_groundings(p) {
                    let prob = miss.get(&a).map_or(self.cfg.background_rate, |m| 1.0 - m);
                    if rng.gen::<f64>() < prob {
                        db.insert_atom(a);
                    }
                }
            }
        }
        for &h in &self.hide {
            db.hide(h);
        }
        db
    }

    pub fn subgraphs(&self) -> impl Iterator<Item = Database> + '_ {
        (0..self.cfg.subgraphs).map(|i| self.subgraph(i))
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            seed: self.cfg.seed,
            subgraphs: self.cfg.subgraphs,
            schema_hash: self.schema.hash_hex(),
            background_rate: self.cfg.background_rate,
            planted: self
                .planted
                .iter()
                .map(|(f, p)| PlantedRule {
                    formula: f.to_text(&self.schema),
                    probability: *p,
                })
                .collect(),
        }
    }

    /// Writes the stream one subgraph at a time and returns the manifest.
    pub fn write(&self, out: &mut impl Write) -> Result<Manifest> {
        for db in self.subgraphs() {
            write_block(out, &db)?;
        }
        Ok(self.manifest())
    }
}
