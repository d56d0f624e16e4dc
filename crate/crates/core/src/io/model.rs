//! Text model files.
//!
//! ```text
//! # resolwe model
//! schema 3f9c0a1b2d4e5f60
//! predicate friends(user,user) evidence
//! predicate cFriends(user) target
//! config learning_rate=0.01 prior_variance=100.0 cd_chain_length=1 passes=1 seed=0
//! formula	0.4182	neutral	cFriends(v1) ^ friends(v1,v2) ^ cFriends(v2)
//! prior	-1.25	cFriends(v1)
//! ```
//!
//! Weights are written in shortest round-trip form, so reading a written
//! model restores every weight bit for bit.
#![allow(clippy::tabs_in_doc_comments)]

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grammar::parse_predicate;
use crate::logic::{ConjunctiveFormula, Schema};
use crate::mln::{LearnConfig, WeightedFormula, WeightedModel};
use crate::select::WeightHint;

const MAGIC: &str = "# resolwe model";

pub fn write_model(m: &WeightedModel) -> String {
    let s = m.schema();
    let c = &m.config;
    let mut out = format!("{MAGIC}\nschema {}\n{}", s.hash_hex(), s.to_text());
    let _ = writeln!(
        out,
        "config learning_rate={:?} prior_variance={:?} cd_chain_length={} passes={} seed={}",
        c.learning_rate, c.prior_variance, c.cd_chain_length, c.passes, c.seed
    );
    for f in &m.formulas {
        let _ = writeln!(out, "formula\t{:?}\t{}\t{}", f.weight, f.hint, f.formula.to_text(s));
    }
    for p in &m.priors {
        let _ = writeln!(out, "prior\t{:?}\t{}", p.weight, p.formula.to_text(s));
    }
    out
}

fn model_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Model(format!("line {line}: {}", msg.into()))
}

fn parse_weight(s: &str, line: usize) -> Result<f64> {
    let w: f64 = s.parse().map_err(|_| model_err(line, format!("bad weight `{s}`")))?;
    if !w.is_finite() {
        return Err(model_err(line, "non-finite weight"));
    }
    Ok(w)
}

fn parse_config(rest: &str, line: usize) -> Result<LearnConfig> {
    let mut c = LearnConfig::default();
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| model_err(line, format!("expected key=value, found `{kv}`")))?;
        let bad = || model_err(line, format!("bad value for `{k}`: `{v}`"));
        match k {
            "learning_rate" => c.learning_rate = v.parse().map_err(|_| bad())?,
            "prior_variance" => c.prior_variance = v.parse().map_err(|_| bad())?,
            "cd_chain_length" => c.cd_chain_length = v.parse().map_err(|_| bad())?,
            "passes" => c.passes = v.parse().map_err(|_| bad())?,
            "seed" => c.seed = v.parse().map_err(|_| bad())?,
            _ => return Err(model_err(line, format!("unknown config key `{k}`"))),
        }
    }
    c.validate()?;
    Ok(c)
}

/// Parses a model file. When `expected` is given, the model's schema must
/// hash to the same value.
pub fn read_model(text: &str, expected: Option<&Schema>) -> Result<WeightedModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(Error::Model("missing model header".into())),
    }
    let mut schema = Schema::new();
    let mut hash = None;
    let mut config = None;
    let mut formulas = Vec::new();
    let mut priors = Vec::new();
    for (n, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (kind, rest) = line
            .split_once(['\t', ' '])
            .ok_or_else(|| model_err(n, format!("unrecognized line `{line}`")))?;
        match kind {
            "schema" => hash = Some(rest.trim().to_string()),
            "predicate" => parse_predicate(&mut schema, rest, n)?,
            "config" => config = Some(parse_config(rest, n)?),
            "formula" | "prior" => {
                if formulas.is_empty() && priors.is_empty() {
                    // schema is complete once the first clause appears
                    let got = schema.hash_hex();
                    if hash.as_deref() != Some(got.as_str()) {
                        return Err(model_err(n, "schema hash does not match the declared predicates"));
                    }
                }
                let fields: Vec<&str> = rest.split('\t').collect();
                let (w, hint, text) = match (kind, fields.as_slice()) {
                    ("formula", [w, hint, text]) => (w, *hint, text),
                    ("prior", [w, text]) => (w, "neutral", text),
                    _ => return Err(model_err(n, format!("malformed `{kind}` line"))),
                };
                let hint = match hint {
                    "neutral" => WeightHint::Neutral,
                    "negative" => WeightHint::Negative,
                    other => return Err(model_err(n, format!("unknown hint `{other}`"))),
                };
                let formula = ConjunctiveFormula::parse(&schema, text).map_err(|e| model_err(n, e.to_string()))?;
                let wf = WeightedFormula {
                    formula,
                    weight: parse_weight(w, n)?,
                    hint,
                };
                if kind == "formula" {
                    formulas.push(wf);
                } else {
                    priors.push(wf);
                }
            }
            _ => return Err(model_err(n, format!("unrecognized line kind `{kind}`"))),
        }
    }
    if hash.as_deref() != Some(schema.hash_hex().as_str()) {
        return Err(Error::Model("schema hash does not match the declared predicates".into()));
    }
    if let Some(e) = expected {
        if e.hash_hex() != schema.hash_hex() {
            return Err(Error::Model(format!(
                "model schema {} differs from expected schema {}",
                schema.hash_hex(),
                e.hash_hex()
            )));
        }
    }
    let config = config.ok_or_else(|| Error::Model("missing config line".into()))?;
    WeightedModel::from_parts(Arc::new(schema), formulas, priors, config)
}
