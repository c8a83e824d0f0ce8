use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use drhmc::harness::{self, AuditOptions, FigureId, ModelSpec, RunOptions, RunSpec};
use drhmc::TargetModel;

#[derive(Parser)]
#[command(name = "drhmc", version, about = "HMC and delayed-rejection HMC experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a grid and write draws, sidecars and summary.csv.
    Run(RunArgs),
    /// Check involution, volume preservation and energy-error order of the
    /// proposal maps.
    Audit(AuditArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Run a grid and write one figure table.
    FigureData {
        /// funnel-marginal, stage-histogram or cost-ratio
        figure: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print config defaults and CSV layouts as JSON.
    Schema {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the per-chain draw CSVs.
    #[arg(long)]
    no_draws: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// Model name with default parameters.
    #[arg(long, conflicts_with = "config")]
    model: Option<String>,
    /// Take the model from a run spec.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 10)]
    n_steps: usize,
    #[arg(long, default_value_t = 2)]
    a: usize,
    #[arg(long, default_value_t = 4)]
    k_max: usize,
    /// Also write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Models named on the command line, or every model when none is.
fn models(args: &ModelArgs) -> Result<Vec<TargetModel>> {
    if let Some(path) = &args.config {
        let spec = harness::parse_config(path)?;
        return Ok(vec![spec.model.build(&base_dir(path))?]);
    }
    let names: Vec<&str> = match &args.model {
        Some(name) => vec![name.as_str()],
        None => ModelSpec::NAMES.to_vec(),
    };
    names
        .into_iter()
        .map(|n| Ok(ModelSpec::named(n)?.build(Path::new("."))?))
        .collect()
}

fn load_spec(args: &RunArgs) -> Result<(RunSpec, RunOptions)> {
    let mut spec = harness::parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output_dir = out.clone();
    }
    let mut opts = RunOptions::new(spec.output_dir.clone());
    opts.workers = args.workers;
    opts.write_draws = !args.no_draws;
    opts.base_dir = base_dir(&args.config);
    Ok((spec, opts))
}

fn run(spec: &RunSpec, opts: &RunOptions) -> Result<ExitCode> {
    let grid = harness::run_grid(spec, opts)?;
    println!(
        "{}: {} cells, eps {:.4} ({}), references: {}",
        grid.model,
        grid.cells.len() + grid.failures.len(),
        grid.tuning.eps,
        if grid.tuning.adapted { "adapted" } else { "fixed" },
        grid.references.source
    );
    for cell in &grid.cells {
        let costs: Vec<String> = cell
            .reports
            .iter()
            .map(|r| match r.report.primary_cost() {
                Some(c) => format!("{}={c:.1}", r.report.moment.label()),
                None => format!("{}=NA", r.report.moment.label()),
            })
            .collect();
        println!(
            "  {:<28} accept={:.3} divergences={} cost {}",
            cell.cell.id,
            cell.acceptance_rate(),
            cell.divergences(),
            costs.join(" ")
        );
    }
    for f in &grid.failures {
        eprintln!("  {} FAILED: {}", f.id, f.message);
    }
    println!("wrote {}", opts.out_dir.display());
    Ok(if grid.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let (spec, opts) = load_spec(&args)?;
            run(&spec, &opts)
        }
        Command::FigureData { figure, run: args } => {
            let id: FigureId = figure.parse()?;
            let (spec, mut opts) = load_spec(&args)?;
            opts.figures = vec![id];
            let code = run(&spec, &opts)?;
            println!("figure: {}", opts.out_dir.join("figures").join(format!("{}.csv", id.as_str())).display());
            Ok(code)
        }
        Command::Audit(args) => {
            let opts = AuditOptions {
                eps: args.eps,
                n_steps: args.n_steps,
                a: args.a,
                k_max: args.k_max,
                n_points: args.points,
                seed: args.seed,
                ..AuditOptions::default()
            };
            if args.points == 0 || args.k_max == 0 || args.n_steps == 0 || args.a < 2 || !(args.eps > 0.0) {
                bail!("audit needs positive points, k-max, n-steps and eps, and a >= 2");
            }
            let mut reports = Vec::new();
            for model in models(&args.model)? {
                let r = harness::audit(&model, &opts);
                print!("{r}");
                reports.push(r);
            }
            if let Some(out) = args.out {
                let text = serde_json::to_string_pretty(&reports)?;
                std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck(args) => {
            let mut ok = true;
            for model in models(&args.model)? {
                let r = harness::gradcheck(&model, args.points, args.h, args.tol, args.seed);
                println!("{r}");
                ok &= r.passed();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Schema { out } => {
            let text = serde_json::to_string_pretty(&harness::schema())?;
            match out {
                Some(path) => std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
