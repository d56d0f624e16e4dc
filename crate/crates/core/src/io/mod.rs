//! File formats: subgraph streams, model files and selection reports.

mod model;
mod stream;

pub use model::{read_model, write_model};
pub use stream::{read_stream, write_block, write_stream, StreamReader};

use std::fmt::Write as _;

use crate::logic::{ConjunctiveFormula, ConnectiveForm, Schema};
use crate::select::{Average, FormulaStats, SelectedFormula};

fn avg_cell(a: &Average) -> String {
    a.mean().map_or_else(|| "NA".to_string(), |m| format!("{m:.6}"))
}

/// One tab-separated row per candidate: canonical text, joint average and
/// contributing subgraphs, per-target conditional averages and counts
/// (1-based target order, comma-separated) and the selected forms.
pub fn selection_report(
    schema: &Schema,
    candidates: &[ConjunctiveFormula],
    stats: &[FormulaStats],
    selected: &[SelectedFormula],
) -> String {
    let mut out = String::from("formula\tjoint_avg\tjoint_subgraphs\tcond_avg\tcond_subgraphs\tselected\n");
    for (f, s) in candidates.iter().zip(stats) {
        let forms: Vec<String> = selected
            .iter()
            .filter(|sf| &sf.source == f)
            .map(|sf| match sf.resolved {
                ConnectiveForm::Conjunction => "conjunction".to_string(),
                ConnectiveForm::Implication(k) => format!("implication({})", k + 1),
            })
            .collect();
        let join = |v: Vec<String>| if v.is_empty() { "-".to_string() } else { v.join(",") };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            f.to_text(schema),
            avg_cell(&s.joint),
            s.joint.count,
            join(s.cond.iter().map(avg_cell).collect()),
            join(s.cond.iter().map(|a| a.count.to_string()).collect()),
            join(forms)
        );
    }
    out
}

/// `subgraph<TAB>atom<TAB>score<TAB>label` rows, rankings in order.
pub fn write_predictions(rankings: &[crate::metrics::RankedPrediction]) -> String {
    let mut out = String::from("subgraph\tatom\tscore\tlabel\n");
    for (i, r) in rankings.iter().enumerate() {
        for e in r.entries() {
            let _ = writeln!(out, "{i}\t{}\t{:?}\t{}", e.atom, e.score, e.label as u8);
        }
    }
    out
}

/// Inverse of [`write_predictions`]. Subgraph ids must be `0..n` in order;
/// a ranking with no rows is not representable and does not occur.
pub fn read_predictions(text: &str) -> crate::Result<Vec<crate::metrics::RankedPrediction>> {
    use crate::metrics::{RankedEntry, RankedPrediction};
    let mut groups: Vec<Vec<RankedEntry>> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || crate::Error::syntax(n + 1, format!("malformed prediction row `{line}`"));
        let f: Vec<&str> = line.split('\t').collect();
        let [sub, atom, score, label] = f.as_slice() else {
            return Err(bad());
        };
        let sub: usize = sub.parse().map_err(|_| bad())?;
        let score: f64 = score.parse().map_err(|_| bad())?;
        let label = match *label {
            "1" => true,
            "0" => false,
            _ => return Err(bad()),
        };
        if sub + 1 < groups.len() || sub > groups.len() {
            return Err(bad());
        }
        if sub == groups.len() {
            groups.push(Vec::new());
        }
        groups[sub].push(RankedEntry {
            atom: atom.to_string(),
            score,
            label,
        });
    }
    Ok(groups.into_iter().map(RankedPrediction::new).collect())
}
