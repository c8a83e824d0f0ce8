//! Plot-ready figure data: binned marginals, per-stage acceptance
//! histograms and cost ratios.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Moment;
use crate::sampler::ChainResult;

use super::output::{csv_writer, fmt_opt};
use super::run::GridOutcome;

pub const BIN_WIDTH: f64 = 0.1;

pub const MARGINAL_COLUMNS: [&str; 9] = ["cell", "method", "eps0", "k", "a", "bin_lo", "bin_hi", "count", "density"];
pub const STAGE_COLUMNS: [&str; 7] = ["cell", "stage", "outcome", "bin_lo", "bin_hi", "count", "density"];
pub const COST_RATIO_COLUMNS: [&str; 13] = [
    "moment",
    "cell",
    "method",
    "eps0",
    "k",
    "a",
    "probabilistic",
    "cost",
    "ratio",
    "ratio_lo",
    "ratio_hi",
    "baseline_cell",
    "baseline_cost",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureId {
    FunnelMarginal,
    StageHistogram,
    CostRatio,
}

impl FigureId {
    pub const ALL: [FigureId; 3] = [FigureId::FunnelMarginal, FigureId::StageHistogram, FigureId::CostRatio];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::FunnelMarginal => "funnel-marginal",
            FigureId::StageHistogram => "stage-histogram",
            FigureId::CostRatio => "cost-ratio",
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| Error::Unknown {
            kind: "figure",
            name: s.to_string(),
        })
    }
}

pub fn bin_of(x: f64) -> i64 {
    (x / BIN_WIDTH).floor() as i64
}

fn bin_edges(b: i64) -> (f64, f64) {
    (b as f64 * BIN_WIDTH, (b + 1) as f64 * BIN_WIDTH)
}

/// Histogram of the first coordinate.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Marginal {
    pub counts: BTreeMap<i64, u64>,
    pub total: u64,
}

impl Marginal {
    pub fn add_chain(&mut self, chain: &ChainResult) {
        for x in chain.column(0) {
            *self.counts.entry(bin_of(x)).or_default() += 1;
            self.total += 1;
        }
    }

    pub fn merge(&mut self, other: &Marginal) {
        for (b, c) in &other.counts {
            *self.counts.entry(*b).or_default() += c;
        }
        self.total += other.total;
    }

    /// Draws strictly below `x`, which must sit on a bin edge.
    pub fn count_below(&self, x: f64) -> u64 {
        let edge = (x / BIN_WIDTH).round() as i64;
        self.counts.range(..edge).map(|(_, c)| c).sum()
    }

    pub fn min_bin_edge(&self) -> Option<f64> {
        self.counts.keys().next().map(|b| bin_edges(*b).0)
    }
}

/// Accept and reject counts per stage, binned by the first coordinate of
/// the transition's starting point.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageHistogram {
    /// `(stage, accepted, bin) -> count`.
    pub counts: BTreeMap<(u8, bool, i64), u64>,
    pub transitions: u64,
}

impl StageHistogram {
    pub fn add_chain(&mut self, chain: &ChainResult) {
        for i in 0..chain.n_draws() {
            let bin = bin_of(chain.origin(i)[0]);
            let tried = chain.stages_tried[i];
            let accepted = chain.stage_tags[i];
            for stage in 1..=tried {
                let ok = stage == accepted;
                *self.counts.entry((stage, ok, bin)).or_default() += 1;
            }
            self.transitions += 1;
        }
    }

    pub fn merge(&mut self, other: &StageHistogram) {
        for (key, c) in &other.counts {
            *self.counts.entry(*key).or_default() += c;
        }
        self.transitions += other.transitions;
    }

    /// Transitions that made a stage-`stage` proposal.
    pub fn attempts(&self, stage: u8) -> u64 {
        self.counts.iter().filter(|((s, _, _), _)| *s == stage).map(|(_, c)| c).sum()
    }

    pub fn accepts(&self, stage: u8) -> u64 {
        self.counts.iter().filter(|((s, ok, _), _)| *s == stage && *ok).map(|(_, c)| c).sum()
    }
}

pub(crate) fn write_marginals(path: &Path, grid: &GridOutcome) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(MARGINAL_COLUMNS)?;
    for cell in &grid.cells {
        let Some(m) = &cell.marginal else { continue };
        for (b, c) in &m.counts {
            let (lo, hi) = bin_edges(*b);
            let density = *c as f64 / (m.total as f64 * BIN_WIDTH);
            w.write_record([
                cell.cell.id.clone(),
                cell.cell.method.to_string(),
                cell.cell.eps0.to_string(),
                cell.cell.k.to_string(),
                cell.cell.a_label(),
                lo.to_string(),
                hi.to_string(),
                c.to_string(),
                density.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_stage_histograms(path: &Path, grid: &GridOutcome) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(STAGE_COLUMNS)?;
    for cell in &grid.cells {
        let Some(h) = &cell.stage_histogram_by_origin else { continue };
        for ((stage, ok, b), c) in &h.counts {
            let (lo, hi) = bin_edges(*b);
            let density = *c as f64 / (h.transitions as f64 * BIN_WIDTH);
            w.write_record([
                cell.cell.id.clone(),
                stage.to_string(),
                if *ok { "accept" } else { "reject" }.to_string(),
                lo.to_string(),
                hi.to_string(),
                c.to_string(),
                density.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of the cost-ratio table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRatio {
    pub moment: Moment,
    pub cell: String,
    pub cost: Option<f64>,
    pub ratio: Option<f64>,
    pub ratio_lo: Option<f64>,
    pub ratio_hi: Option<f64>,
    pub baseline_cell: Option<String>,
    pub baseline_cost: Option<f64>,
}

/// Costs relative to the cheapest HMC cell, per moment.
pub fn cost_ratios(grid: &GridOutcome) -> Vec<CostRatio> {
    let mut rows = Vec::new();
    for (mi, &moment) in grid.spec.moments.iter().enumerate() {
        let baseline = grid
            .cells
            .iter()
            .filter(|c| c.cell.method == crate::sampler::Method::Hmc)
            .filter_map(|c| c.reports[mi].report.primary_cost().map(|v| (c, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        for cell in &grid.cells {
            let r = &cell.reports[mi];
            let cost = r.report.primary_cost();
            let scale = |v: Option<f64>| Some(v? / baseline?.1);
            rows.push(CostRatio {
                moment,
                cell: cell.cell.id.clone(),
                cost,
                ratio: scale(cost),
                ratio_lo: scale(r.ci.map(|c| c.lo)),
                ratio_hi: scale(r.ci.map(|c| c.hi)),
                baseline_cell: baseline.map(|b| b.0.cell.id.clone()),
                baseline_cost: baseline.map(|b| b.1),
            });
        }
    }
    rows
}

pub(crate) fn write_cost_ratios(path: &Path, grid: &GridOutcome) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(COST_RATIO_COLUMNS)?;
    for row in cost_ratios(grid) {
        let cell = &grid.cells.iter().find(|c| c.cell.id == row.cell).expect("cell exists").cell;
        w.write_record([
            row.moment.label().to_string(),
            row.cell.clone(),
            cell.method.to_string(),
            cell.eps0.to_string(),
            cell.k.to_string(),
            cell.a_label(),
            cell.probabilistic.to_string(),
            fmt_opt(row.cost),
            fmt_opt(row.ratio),
            fmt_opt(row.ratio_lo),
            fmt_opt(row.ratio_hi),
            row.baseline_cell.clone().unwrap_or_default(),
            fmt_opt(row.baseline_cost),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
