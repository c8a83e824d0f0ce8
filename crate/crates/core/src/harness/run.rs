//! Grid execution: pooled warmup, optional reference run, then every cell's
//! chains in parallel under a worker budget.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::adaptation::{warmup, WarmupPlan};
use crate::diagnostics::{bootstrap_cost, BootstrapCi, ChainSummary, EssReport, BOOTSTRAP_MIN_CHAINS};
use crate::error::{Error, Result};
use crate::model::{Moment, MomentRef, TargetModel};
use crate::phase_space::MassMatrix;
use crate::rng::{chain_rng, derive_seed};
use crate::sampler::{DrConfig, Method, Sampler};

use super::config::RunSpec;
use super::figures::{self, FigureId, Marginal, StageHistogram};
use super::output::{create_dir, csv_writer, fmt_opt, write_chain_csv, write_json, SUMMARY_COLUMNS};

const WARMUP_STREAM: u64 = u64::MAX;
const REFERENCE_STREAM: u64 = u64::MAX - 1;
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// Where and how a grid runs.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Thread budget; all available cores when `None`.
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    /// Directory that relative dataset paths resolve against.
    pub base_dir: PathBuf,
    /// Figure files to write next to the summary.
    pub figures: Vec<FigureId>,
    /// Per-chain draw CSVs; sidecars and the summary are always written.
    pub write_draws: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            workers: None,
            out_dir: out_dir.into(),
            base_dir: PathBuf::from("."),
            figures: FigureId::ALL.to_vec(),
            write_draws: true,
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub id: String,
    pub method: Method,
    pub eps_multiplier: f64,
    pub eps0: f64,
    pub n_steps: usize,
    pub k: usize,
    pub a: usize,
    pub probabilistic: bool,
}

impl Cell {
    /// The adaptivity factor, blank for HMC.
    pub fn a_label(&self) -> String {
        if self.method == Method::Hmc {
            String::new()
        } else {
            self.a.to_string()
        }
    }
}

/// Step size and mass shared by every cell, with each chain's start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tuning {
    pub eps: f64,
    pub mass: MassMatrix,
    pub adapted: bool,
    /// Per-chain adapted step sizes; empty when fixed.
    pub chain_eps: Vec<f64>,
    pub chain_accept: Vec<f64>,
    pub starts: Vec<Vec<f64>>,
    /// Per-chain warmup evaluations; zero when fixed.
    pub warmup_evals: Vec<u64>,
}

/// Expands the grid. HMC cells vary only the step size.
pub fn expand_grid(spec: &RunSpec, base_eps: f64) -> Vec<Cell> {
    let t = spec.integration_time;
    let mut cells = Vec::new();
    let mut push = |method: Method, m: f64, k: usize, a: usize| {
        let index = cells.len();
        let eps0 = base_eps * m;
        let n_steps = ((t / eps0).round() as usize).max(1);
        let id = if method == Method::Hmc {
            format!("c{index:03}-{method}-m{m}")
        } else {
            format!("c{index:03}-{method}-m{m}-k{k}-a{a}")
        };
        cells.push(Cell {
            index,
            id,
            method,
            eps_multiplier: m,
            eps0,
            n_steps,
            k,
            a,
            probabilistic: method == Method::DrhmcProb,
        });
    };
    for &method in &spec.method {
        if method == Method::Hmc {
            let ms = spec.grid.hmc_eps_multipliers.as_ref().unwrap_or(&spec.grid.eps_multipliers);
            for &m in ms {
                push(method, m, 1, 2);
            }
        } else {
            for &m in &spec.grid.eps_multipliers {
                for &k in &spec.grid.k {
                    for &a in &spec.grid.a {
                        push(method, m, k, a);
                    }
                }
            }
        }
    }
    cells
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Warmup on every chain, pooled by the median; or the fixed tuning.
pub fn tune(spec: &RunSpec, model: &TargetModel) -> Result<Tuning> {
    let d = model.dim();
    let fixed_mass = match &spec.tuning.mass {
        Some(m) if m.len() != d => {
            return Err(Error::config("tuning.mass", format!("expected {d} entries, got {}", m.len())));
        }
        Some(m) => Some(MassMatrix::new(m.clone())?),
        None => None,
    };
    if let Some(eps) = spec.tuning.step_size {
        return Ok(Tuning {
            eps,
            mass: fixed_mass.unwrap_or_else(|| MassMatrix::identity(d)),
            adapted: false,
            chain_eps: Vec::new(),
            chain_accept: Vec::new(),
            starts: vec![model.typical_point(); spec.n_chains],
            warmup_evals: vec![0; spec.n_chains],
        });
    }
    let mut plan = WarmupPlan::new(spec.n_warmup, spec.integration_time)?;
    plan.target_accept = spec.tuning.target_accept;
    plan.max_steps = spec.tuning.max_steps;
    if fixed_mass.is_some() {
        plan.mass_windows.clear();
        plan.initial_mass = fixed_mass.clone();
    }
    let stream = derive_seed(spec.seed, WARMUP_STREAM);
    let results: Vec<_> = (0..spec.n_chains)
        .into_par_iter()
        .map(|c| {
            let local = model.fork();
            let mut rng = chain_rng(derive_seed(stream, c as u64));
            let w = warmup(&mut rng, &local, local.typical_point(), &plan)?;
            debug_assert_eq!(w.evals, local.eval_count());
            Ok(w)
        })
        .collect::<Result<_>>()?;
    let eps: Vec<f64> = results.iter().map(|w| w.eps).collect();
    let pooled_eps = median(&mut eps.clone());
    let mass = match fixed_mass {
        Some(m) => m,
        None => {
            let inv = (0..d)
                .map(|j| median(&mut results.iter().map(|w| w.mass.inv_diag()[j]).collect::<Vec<_>>()))
                .collect();
            MassMatrix::from_inverse(inv)?
        }
    };
    Ok(Tuning {
        eps: pooled_eps,
        mass,
        adapted: true,
        chain_eps: eps,
        chain_accept: results.iter().map(|w| w.mean_accept).collect(),
        starts: results.iter().map(|w| w.position.clone()).collect(),
        warmup_evals: results.iter().map(|w| w.evals).collect(),
    })
}

/// Expectations used for the error-based ESS, and where they came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct References {
    pub source: &'static str,
    /// One entry per requested moment.
    pub moments: Vec<Option<Vec<MomentRef>>>,
}

/// Exact moments when the model has them; otherwise the pooled moments of a
/// long HMC run when the spec asks for one.
pub fn references(spec: &RunSpec, model: &TargetModel, tuning: &Tuning) -> Result<References> {
    let exact: Vec<_> = spec.moments.iter().map(|&m| model.exact_moments(m)).collect();
    if exact.iter().all(Option::is_some) {
        return Ok(References {
            source: "exact",
            moments: exact,
        });
    }
    let Some(r) = &spec.reference else {
        return Ok(References {
            source: "none",
            moments: vec![None; spec.moments.len()],
        });
    };
    let d = model.dim();
    let n = ((spec.integration_time / tuning.eps).round() as usize).max(1);
    let cfg = DrConfig::hmc(tuning.eps, n, tuning.mass.clone())?;
    let burn = if tuning.adapted { 0 } else { spec.n_warmup };
    let stream = derive_seed(spec.seed, REFERENCE_STREAM);
    let nm = spec.moments.len();
    // per moment and coordinate: (sum f, sum f^2)
    let sums: Vec<Vec<(f64, f64)>> = (0..r.n_chains)
        .into_par_iter()
        .map(|c| {
            let local = model.fork();
            let seed = derive_seed(stream, c as u64);
            let start = tuning.starts[c % tuning.starts.len()].clone();
            let chain = Sampler::new(&local, cfg.clone(), start, chain_rng(seed))?.run(seed, burn, r.n_draws)?;
            let mut acc = vec![(0.0, 0.0); nm * d];
            for i in 0..chain.n_draws() {
                for (j, &x) in chain.draw(i).iter().enumerate() {
                    for (mi, m) in spec.moments.iter().enumerate() {
                        let f = m.apply(x);
                        let slot = &mut acc[mi * d + j];
                        slot.0 += f;
                        slot.1 += f * f;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = (r.n_chains * r.n_draws) as f64;
    let moments = (0..nm)
        .map(|mi| {
            let refs = (0..d)
                .map(|j| {
                    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v[mi * d + j].0, acc.1 + v[mi * d + j].1));
                    let mean = s / total;
                    let var = (s2 / total - mean * mean).max(0.0) * total / (total - 1.0).max(1.0);
                    MomentRef { mean, sd: var.sqrt() }
                })
                .collect();
            Some(refs)
        })
        .collect();
    Ok(References {
        source: "reference-run",
        moments,
    })
}

/// Bookkeeping for one chain once its draws are written and summarized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRecord {
    pub chain: usize,
    pub seed: u64,
    /// Evaluations during recorded draws.
    pub sampling_evals: u64,
    /// Evaluations before the first draw: initial point and any burn-in.
    pub burn_in_evals: u64,
    /// Pooled-warmup evaluations spent by this chain.
    pub warmup_evals: u64,
    /// The chain's own model counter, for the accounting check.
    pub model_evals: u64,
    pub divergences: u64,
    pub acceptance_rate: f64,
    /// Draws per accepted stage, index 0 for full rejections.
    pub stage_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub report: EssReport,
    /// Bootstrap interval of the primary cost.
    pub ci: Option<BootstrapCi>,
    pub ci_note: Option<String>,
}

/// Everything kept from a finished cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub cell: Cell,
    pub seed: u64,
    pub config_fingerprint: String,
    pub chains: Vec<ChainRecord>,
    /// One per moment in the spec.
    pub reports: Vec<MomentReport>,
    #[serde(skip)]
    pub marginal: Option<Marginal>,
    #[serde(skip)]
    pub stage_histogram_by_origin: Option<StageHistogram>,
}

impl CellOutcome {
    pub fn sampling_evals(&self) -> u64 {
        self.chains.iter().map(|c| c.sampling_evals).sum()
    }

    pub fn divergences(&self) -> u64 {
        self.chains.iter().map(|c| c.divergences).sum()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / self.chains.len() as f64
    }

    pub fn report(&self, moment: Moment) -> Option<&MomentReport> {
        self.reports.iter().find(|r| r.report.moment == moment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub index: usize,
    pub id: String,
    pub message: String,
}

/// Result of a whole grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutcome {
    pub version: &'static str,
    pub config_hash: String,
    pub spec: RunSpec,
    pub model: String,
    pub tuning: Tuning,
    pub references: References,
    pub cells: Vec<CellOutcome>,
    pub failures: Vec<CellFailure>,
}

impl GridOutcome {
    pub fn cell(&self, id: &str) -> Option<&CellOutcome> {
        self.cells.iter().find(|c| c.cell.id == id)
    }
}

struct ChainOutput {
    record: ChainRecord,
    summaries: Vec<ChainSummary>,
    marginal: Marginal,
    stages: StageHistogram,
}

fn run_one_chain(
    spec: &RunSpec,
    model: &TargetModel,
    config: &DrConfig,
    tuning: &Tuning,
    cell_seed: u64,
    c: usize,
    dir: Option<&Path>,
) -> Result<ChainOutput> {
    let local = model.fork();
    let seed = derive_seed(cell_seed, c as u64);
    let burn = if tuning.adapted { 0 } else { spec.n_warmup };
    let start = tuning.starts[c].clone();
    let chain = Sampler::new(&local, config.clone(), start, chain_rng(seed))?.run(seed, burn, spec.n_draws)?;
    if let Some(dir) = dir {
        write_chain_csv(&dir.join(format!("chain_{c:03}.csv")), &chain)?;
    }
    let mut marginal = Marginal::default();
    marginal.add_chain(&chain);
    let mut stages = StageHistogram::default();
    stages.add_chain(&chain);
    let summaries = spec.moments.iter().map(|&m| ChainSummary::new(&chain, m)).collect();
    let record = ChainRecord {
        chain: c,
        seed,
        sampling_evals: chain.sampling_evals(),
        burn_in_evals: chain.warmup_evals,
        warmup_evals: tuning.warmup_evals[c],
        model_evals: local.eval_count(),
        divergences: chain.divergences,
        acceptance_rate: chain.acceptance_rate(),
        stage_counts: chain.stage_histogram(),
    };
    if record.model_evals != chain.total_evals() {
        return Err(Error::Numerical(format!(
            "chain {c}: counter {} disagrees with recorded {}",
            record.model_evals,
            chain.total_evals()
        )));
    }
    Ok(ChainOutput {
        record,
        summaries,
        marginal,
        stages,
    })
}

#[derive(Serialize)]
struct CellSidecar<'a> {
    version: &'static str,
    config_hash: &'a str,
    spec: &'a RunSpec,
    tuning: &'a Tuning,
    config: &'a DrConfig,
    outcome: &'a CellOutcome,
}

fn run_cell(
    spec: &RunSpec,
    hash: &str,
    model: &TargetModel,
    tuning: &Tuning,
    refs: &References,
    cell: &Cell,
    opts: &RunOptions,
) -> Result<CellOutcome> {
    let config = DrConfig::for_method(cell.method, cell.eps0, cell.n_steps, tuning.mass.clone(), cell.k, cell.a)?
        .with_retry_rule(spec.retry_rule)?;
    let seed = derive_seed(spec.seed, cell.index as u64);
    let dir = opts.out_dir.join("cells").join(&cell.id);
    create_dir(&dir)?;
    let draws_dir = opts.write_draws.then_some(dir.as_path());
    let outputs: Vec<ChainOutput> = (0..spec.n_chains)
        .into_par_iter()
        .map(|c| run_one_chain(spec, model, &config, tuning, seed, c, draws_dir))
        .collect::<Result<_>>()?;
    let mut marginal = Marginal::default();
    let mut stages = StageHistogram::default();
    for o in &outputs {
        marginal.merge(&o.marginal);
        stages.merge(&o.stages);
    }
    let mut boot_rng = chain_rng(derive_seed(seed, BOOTSTRAP_STREAM));
    let mut reports = Vec::with_capacity(spec.moments.len());
    for (mi, &moment) in spec.moments.iter().enumerate() {
        let summaries: Vec<ChainSummary> = outputs.iter().map(|o| o.summaries[mi].clone()).collect();
        let r = refs.moments[mi].as_deref();
        let report = EssReport::from_summaries(&summaries, moment, r)?;
        let (ci, ci_note) = if summaries.len() < BOOTSTRAP_MIN_CHAINS {
            (None, Some(format!("bootstrap needs at least {BOOTSTRAP_MIN_CHAINS} chains")))
        } else {
            match bootstrap_cost(&mut boot_rng, &summaries, moment, r, spec.bootstrap_resamples) {
                Ok(ci) => (Some(ci), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        reports.push(MomentReport { report, ci, ci_note });
    }
    let outcome = CellOutcome {
        cell: cell.clone(),
        seed,
        config_fingerprint: config.fingerprint(),
        chains: outputs.into_iter().map(|o| o.record).collect(),
        reports,
        marginal: Some(marginal),
        stage_histogram_by_origin: Some(stages),
    };
    write_json(
        &dir.join("cell.json"),
        &CellSidecar {
            version: env!("CARGO_PKG_VERSION"),
            config_hash: hash,
            spec,
            tuning,
            config: &config,
            outcome: &outcome,
        },
    )?;
    Ok(outcome)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

/// Builds the model from the spec and runs the grid.
pub fn run_grid(spec: &RunSpec, opts: &RunOptions) -> Result<GridOutcome> {
    let model = spec.model.build(&opts.base_dir)?;
    run_grid_with_model(spec, &model, opts)
}

/// Runs every cell of the grid on `model`. A failing or panicking cell is
/// recorded in `failures` and the rest carry on.
pub fn run_grid_with_model(spec: &RunSpec, model: &TargetModel, opts: &RunOptions) -> Result<GridOutcome> {
    spec.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        if w == 0 {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(spec, model, opts))
}

fn run_in_pool(spec: &RunSpec, model: &TargetModel, opts: &RunOptions) -> Result<GridOutcome> {
    let hash = spec.hash();
    create_dir(&opts.out_dir)?;
    let tuning = tune(spec, model)?;
    let refs = references(spec, model, &tuning)?;
    let cells = expand_grid(spec, tuning.eps);
    let results: Vec<std::result::Result<CellOutcome, CellFailure>> = cells
        .par_iter()
        .map(|cell| {
            let fail = |message| CellFailure {
                index: cell.index,
                id: cell.id.clone(),
                message,
            };
            match catch_unwind(AssertUnwindSafe(|| run_cell(spec, &hash, model, &tuning, &refs, cell, opts))) {
                Ok(Ok(o)) => Ok(o),
                Ok(Err(e)) => Err(fail(e.to_string())),
                Err(p) => Err(fail(panic_message(p))),
            }
        })
        .collect();
    let mut grid = GridOutcome {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: hash,
        spec: spec.clone(),
        model: model.name().to_string(),
        tuning,
        references: refs,
        cells: Vec::new(),
        failures: Vec::new(),
    };
    for r in results {
        match r {
            Ok(o) => grid.cells.push(o),
            Err(f) => grid.failures.push(f),
        }
    }
    write_summary(&opts.out_dir.join("summary.csv"), &grid)?;
    write_json(&opts.out_dir.join("run.json"), &grid)?;
    write_figures(&opts.out_dir, &grid, &opts.figures)?;
    Ok(grid)
}

/// Writes the requested figure tables under `out_dir/figures`.
pub fn write_figures(out_dir: &Path, grid: &GridOutcome, which: &[FigureId]) -> Result<()> {
    if which.is_empty() {
        return Ok(());
    }
    let dir = out_dir.join("figures");
    create_dir(&dir)?;
    for f in which {
        let path = dir.join(format!("{}.csv", f.as_str()));
        match f {
            FigureId::FunnelMarginal => figures::write_marginals(&path, grid)?,
            FigureId::StageHistogram => figures::write_stage_histograms(&path, grid)?,
            FigureId::CostRatio => figures::write_cost_ratios(&path, grid)?,
        }
    }
    Ok(())
}

fn write_summary(path: &Path, grid: &GridOutcome) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for cell in &grid.cells {
        for r in &cell.reports {
            let e = &r.report;
            w.write_record([
                grid.model.clone(),
                cell.cell.method.to_string(),
                cell.cell.eps0.to_string(),
                cell.cell.k.to_string(),
                cell.cell.a_label(),
                cell.cell.probabilistic.to_string(),
                e.moment.label().to_string(),
                e.slowest_index.to_string(),
                fmt_opt(e.ess_r),
                fmt_opt(e.ess_c),
                e.n_evals.to_string(),
                fmt_opt(e.cost_r),
                fmt_opt(e.cost_c),
                fmt_opt(r.ci.map(|c| c.lo)),
                fmt_opt(r.ci.map(|c| c.hi)),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
