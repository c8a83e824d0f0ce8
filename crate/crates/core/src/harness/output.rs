//! CSV and JSON writers for run artifacts.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::ChainResult;

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "model",
    "method",
    "eps0",
    "k",
    "a",
    "probabilistic",
    "moment",
    "slowest_index",
    "ess_r",
    "ess_c",
    "n_evals",
    "cost_r",
    "cost_c",
    "ci_lo",
    "ci_hi",
];

/// Formats an optional number: empty when undefined, `inf` when infinite.
pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.is_nan() => String::new(),
        Some(x) if x == f64::INFINITY => "inf".to_string(),
        Some(x) => x.to_string(),
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Numerical(format!("{other:?}")),
    })
}

/// Draws of one chain: `iter, stage, stages_tried, evals, q0, q1, ...`.
pub fn write_chain_csv(path: &Path, chain: &ChainResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["iter", "stage", "stages_tried", "evals"].map(String::from).to_vec();
    header.extend((0..chain.dim).map(|j| format!("q{j}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..chain.n_draws() {
        row.clear();
        row.push(i.to_string());
        row.push(chain.stage_tags[i].to_string());
        row.push(chain.stages_tried[i].to_string());
        row.push(chain.eval_counts[i].to_string());
        row.extend(chain.draw(i).iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optional_formatting() {
        assert_eq!(fmt_opt(None), "");
        assert_eq!(fmt_opt(Some(f64::INFINITY)), "inf");
        assert_eq!(fmt_opt(Some(0.25)), "0.25");
        assert_eq!(fmt_opt(Some(f64::NAN)), "");
    }
}
