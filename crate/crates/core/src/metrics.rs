//! Ranking metrics over per-subgraph predictions.
//!
//! Mean average precision and a literal ROC reading are computed position
//! by position over the whole ranking; the Mann-Whitney AUC is computed
//! from scores with ties counting one half.

use std::cmp::Ordering;
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct RankedEntry {
    pub atom: String,
    pub score: f64,
    pub label: bool,
}

/// Entries in descending score order; equal scores keep their input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedPrediction {
    entries: Vec<RankedEntry>,
}

impl RankedPrediction {
    pub fn new(mut entries: Vec<RankedEntry>) -> Self {
        entries.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
        RankedPrediction { entries }
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.entries.iter().filter(|e| e.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }
}

/// `(1/|R|) Σ_r P@r` over every rank position r, where `P@r` is the
/// fraction of positives among the top r.
pub fn average_precision(r: &RankedPrediction) -> Option<f64> {
    if r.is_empty() {
        return None;
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (i, e) in r.entries.iter().enumerate() {
        tp += e.label as usize;
        sum += tp as f64 / (i + 1) as f64;
    }
    Some(sum / r.len() as f64)
}

/// `(1/|R|) Σ_r TN@r` where `TN@r` is the fraction of all negatives ranked
/// strictly after position r.
pub fn paper_auc(r: &RankedPrediction) -> Option<f64> {
    let neg = r.negatives();
    if neg == 0 {
        return None;
    }
    let mut after = neg;
    let mut sum = 0.0;
    for e in &r.entries {
        after -= !e.label as usize;
        sum += after as f64 / neg as f64;
    }
    Some(sum / r.len() as f64)
}

/// Probability that a random positive outscores a random negative.
pub fn standard_auc(r: &RankedPrediction) -> Option<f64> {
    let (pos, neg) = (r.positives(), r.negatives());
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = r.len();
    // walk score groups from the bottom of the ranking
    while i > 0 {
        let score = r.entries[i - 1].score;
        let (mut p, mut n) = (0usize, 0usize);
        while i > 0 && r.entries[i - 1].score.partial_cmp(&score) == Some(Ordering::Equal) {
            if r.entries[i - 1].label {
                p += 1;
            } else {
                n += 1;
            }
            i -= 1;
        }
        if p + n == 0 {
            // NaN score: its own group
            let e = &r.entries[i - 1];
            if e.label {
                p = 1;
            } else {
                n = 1;
            }
            i -= 1;
        }
        wins += p as f64 * (neg_below as f64 + 0.5 * n as f64);
        neg_below += n;
    }
    Some(wins / (pos * neg) as f64)
}

fn mean(values: impl Iterator<Item = Option<f64>>, what: &str) -> Option<f64> {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{what}: {skipped} ranking(s) excluded as undefined");
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean of per-subgraph average precision; empty rankings are excluded.
pub fn map_score(rankings: &[RankedPrediction]) -> Option<f64> {
    mean(rankings.iter().map(average_precision), "MAP")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AucScores {
    pub paper: Option<f64>,
    pub standard: Option<f64>,
}

pub fn auc_scores(rankings: &[RankedPrediction]) -> AucScores {
    AucScores {
        paper: mean(rankings.iter().map(paper_auc), "literal AUC"),
        standard: mean(rankings.iter().map(standard_auc), "AUC"),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

/// Tab-separated per-subgraph and aggregate MAP / literal AUC / AUC.
pub fn evaluation_report(rankings: &[RankedPrediction]) -> String {
    let mut out = String::from("subgraph\tatoms\tpositives\tmap\tpaper_auc\tstandard_auc\n");
    for (i, r) in rankings.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i}\t{}\t{}\t{}\t{}\t{}",
            r.len(),
            r.positives(),
            cell(average_precision(r)),
            cell(paper_auc(r)),
            cell(standard_auc(r))
        );
    }
    let auc = auc_scores(rankings);
    let _ = writeln!(
        out,
        "all\t{}\t{}\t{}\t{}\t{}",
        rankings.iter().map(|r| r.len()).sum::<usize>(),
        rankings.iter().map(|r| r.positives()).sum::<usize>(),
        cell(map_score(rankings)),
        cell(auc.paper),
        cell(auc.standard)
    );
    out
}
