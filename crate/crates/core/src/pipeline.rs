//! The three-step pipeline: expand the grammar, select formulas on the
//! first `k2` subgraphs, then learn weights on the rest of the stream. The
//! skip-selection baseline learns on the full stream over every candidate
//! variant.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::db::Database;
use crate::error::{Error, Result};
use crate::grammar::{ExpandMode, Grammar};
use crate::io::StreamReader;
use crate::logic::{ConjunctiveFormula, Schema};
use crate::metrics::RankedPrediction;
use crate::mln::{predict, prediction_atoms, InferenceConfig, LearnConfig, Learner, WeightedModel};
use crate::select::{resolve_connectives, FormulaStats, SelectedFormula, Selector, WeightHint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Resolwe,
    SkipSelection,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resolwe" => Ok(Mode::Resolwe),
            "skip" | "skipSelection" | "skip-selection" => Ok(Mode::SkipSelection),
            _ => Err(Error::Config(format!("unknown mode `{s}` (resolwe | skipSelection)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Resolwe => "resolwe",
            Mode::SkipSelection => "skipSelection",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub k2: usize,
    pub theta: f64,
    pub mode: Mode,
    pub learn: LearnConfig,
    /// Evaluate candidates in parallel during selection.
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k2: 30,
            theta: 0.4,
            mode: Mode::Resolwe,
            learn: LearnConfig::default(),
            parallel: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k2 == 0 {
            return Err(Error::Config("k2 must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config("theta must lie in [0, 1]".into()));
        }
        self.learn.validate()
    }
}

pub type DbIter<'a> = Box<dyn Iterator<Item = Result<Database>> + 'a>;

/// Something that can be read from the start, once per pass.
pub trait StreamSource {
    fn open(&self) -> Result<DbIter<'_>>;
}

impl StreamSource for [Database] {
    fn open(&self) -> Result<DbIter<'_>> {
        Ok(Box::new(self.iter().cloned().map(Ok)))
    }
}

impl StreamSource for Vec<Database> {
    fn open(&self) -> Result<DbIter<'_>> {
        self.as_slice().open()
    }
}

/// A stream file read lazily against a schema.
pub struct FileStream {
    pub path: PathBuf,
    pub schema: Arc<Schema>,
}

impl StreamSource for FileStream {
    fn open(&self) -> Result<DbIter<'_>> {
        let f = File::open(&self.path)?;
        Ok(Box::new(StreamReader::new(BufReader::new(f), self.schema.clone())))
    }
}

#[derive(Clone, Debug)]
pub struct SelectionOutcome {
    pub candidates: Vec<ConjunctiveFormula>,
    pub stats: Vec<FormulaStats>,
    pub selected: Vec<SelectedFormula>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub mode: Mode,
    pub model: WeightedModel,
    /// Candidate count before selection (the expansion size).
    pub candidates: usize,
    pub selection: Option<SelectionOutcome>,
    /// Expansion plus selection; absent in skip-selection mode.
    pub step2: Option<Duration>,
    /// Weight learning.
    pub step3: Duration,
    pub selection_subgraphs: usize,
    pub training_subgraphs: usize,
}

impl PipelineOutput {
    pub fn total(&self) -> Duration {
        self.step2.unwrap_or_default() + self.step3
    }

    /// Tab-separated timing summary, in minutes.
    pub fn timing_report(&self) -> String {
        let min = |d: Duration| format!("{:.6}", d.as_secs_f64() / 60.0);
        format!(
            "mode\tstep2_minutes\tstep3_minutes\ttotal_minutes\tcandidates\tclauses\tselection_subgraphs\ttraining_subgraphs\n\
             {}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            self.mode,
            self.step2.map_or_else(|| "NA".to_string(), min),
            min(self.step3),
            min(self.total()),
            self.candidates,
            self.model.num_clauses(),
            self.selection_subgraphs,
            self.training_subgraphs
        )
    }
}

/// Rewrites implications into learnable conjunctions and drops duplicates,
/// keeping first occurrences.
pub fn learnable_clauses(schema: &Schema, formulas: &[ConjunctiveFormula]) -> Vec<(ConjunctiveFormula, WeightHint)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for f in formulas {
        let (g, hint) = resolve_connectives(schema, f);
        if seen.insert(g.to_text(schema)) {
            out.push((g, hint));
        }
    }
    out
}

fn train(
    learner: &mut Learner,
    stream: &dyn StreamSource,
    skip: usize,
    passes: usize,
    first: Option<DbIter<'_>>,
) -> Result<usize> {
    let mut seen = 0;
    let mut first = first;
    for _ in 0..passes {
        let iter = match first.take() {
            Some(it) => it,
            None => {
                let mut it = stream.open()?;
                for _ in 0..skip {
                    if it.next().transpose()?.is_none() {
                        break;
                    }
                }
                it
            }
        };
        for db in iter {
            learner.observe(&db?)?;
            seen += 1;
        }
    }
    Ok(seen)
}

pub fn run_pipeline(grammar: &Grammar, stream: &dyn StreamSource, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let schema = grammar.schema.clone();
    match cfg.mode {
        Mode::Resolwe => {
            let start = Instant::now();
            let expansion = grammar.expand(ExpandMode::Selection);
            let n_candidates = expansion.formulas.len();
            let mut selector = Selector::new(schema.clone(), expansion.formulas).parallel(cfg.parallel);
            let mut iter = stream.open()?;
            while selector.processed() < cfg.k2 {
                match iter.next().transpose()? {
                    Some(db) => selector.observe(&db),
                    None => break,
                }
            }
            if selector.processed() < cfg.k2 {
                return Err(Error::StreamExhausted {
                    got: selector.processed(),
                    needed: cfg.k2 + 1,
                });
            }
            let selected = selector.finalize(cfg.theta);
            let formulas: Vec<ConjunctiveFormula> = selected.iter().map(|s| s.formula()).collect();
            let clauses = learnable_clauses(&schema, &formulas);
            log::info!(
                "selected {} of {} candidates on {} subgraphs",
                clauses.len(),
                n_candidates,
                cfg.k2
            );
            let step2 = start.elapsed();

            let start = Instant::now();
            let mut rest = iter.peekable();
            if rest.peek().is_none() {
                return Err(Error::StreamExhausted {
                    got: cfg.k2,
                    needed: cfg.k2 + 1,
                });
            }
            let model = WeightedModel::new(schema.clone(), clauses, cfg.learn.clone());
            let mut learner = Learner::new(model, cfg.learn.clone())?;
            let trained = train(&mut learner, stream, cfg.k2, cfg.learn.passes, Some(Box::new(rest)))?;
            let step3 = start.elapsed();
            Ok(PipelineOutput {
                mode: cfg.mode,
                model: learner.into_model(),
                candidates: n_candidates,
                selection: Some(SelectionOutcome {
                    candidates: selector.candidates().to_vec(),
                    stats: selector.stats().to_vec(),
                    selected,
                }),
                step2: Some(step2),
                step3,
                selection_subgraphs: cfg.k2,
                training_subgraphs: trained,
            })
        }
        Mode::SkipSelection => {
            let start = Instant::now();
            let expansion = grammar.expand(ExpandMode::AllVariants);
            let clauses = learnable_clauses(&schema, &expansion.formulas);
            let model = WeightedModel::new(schema.clone(), clauses, cfg.learn.clone());
            let mut learner = Learner::new(model, cfg.learn.clone())?;
            let trained = train(&mut learner, stream, 0, cfg.learn.passes, None)?;
            Ok(PipelineOutput {
                mode: cfg.mode,
                model: learner.into_model(),
                candidates: expansion.formulas.len(),
                selection: None,
                step2: None,
                step3: start.elapsed(),
                selection_subgraphs: 0,
                training_subgraphs: trained,
            })
        }
    }
}

/// Ranks the query atoms of every subgraph in `stream`. Subgraph `i` uses
/// inference seed `cfg.seed + i`.
pub fn predict_stream(
    model: &WeightedModel,
    stream: &dyn StreamSource,
    cfg: &InferenceConfig,
) -> Result<Vec<RankedPrediction>> {
    let mut out = Vec::new();
    for (i, db) in stream.open()?.enumerate() {
        let db = db?;
        let c = InferenceConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        out.push(predict(model, &db, &prediction_atoms(&db), &c)?);
    }
    Ok(out)
}
