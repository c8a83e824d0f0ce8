use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use drhmc::harness::output::SUMMARY_COLUMNS;
use drhmc::harness::{self, FigureId, RunOptions, RunSpec};
use drhmc::model::Gaussian;
use drhmc::rng::derive_seed;
use drhmc::{run_chain, Density, DrConfig, MassMatrix, Method, TargetModel};

fn spec(json: serde_json::Value) -> RunSpec {
    RunSpec::parse_str(&json.to_string()).unwrap()
}

fn small_spec() -> RunSpec {
    spec(serde_json::json!({
        "model": {"name": "funnel", "d": 3},
        "method": "hmc",
        "grid": {"eps_multipliers": [1.0]},
        "integration_time": 1.0,
        "n_chains": 2,
        "n_warmup": 50,
        "n_draws": 100,
        "seed": 9,
        "tuning": {"step_size": 0.1}
    }))
}

fn run(spec: &RunSpec, dir: &Path) -> harness::GridOutcome {
    harness::run_grid(spec, &RunOptions::new(dir)).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn one_cell_writes_draws_sidecar_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let grid = run(&small_spec(), dir.path());
    assert_eq!(grid.cells.len(), 1);
    let cell = dir.path().join("cells").join(&grid.cells[0].cell.id);
    for c in 0..2 {
        let (header, rows) = read_csv(&cell.join(format!("chain_{c:03}.csv")));
        assert_eq!(header, ["iter", "stage", "stages_tried", "evals", "q0", "q1", "q2"]);
        assert_eq!(rows.len(), 100);
    }
    assert!(cell.join("cell.json").exists());
    let (header, rows) = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(header, SUMMARY_COLUMNS);
    // one row per moment
    assert_eq!(rows.len(), 2);
    let run_json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["config_hash"], grid.config_hash);
    assert_eq!(run_json["spec"]["n_draws"], 100);
    for f in FigureId::ALL {
        assert!(dir.path().join("figures").join(format!("{}.csv", f.as_str())).exists());
    }
}

#[test]
fn artifacts_are_a_function_of_spec_and_seed() {
    let mut s = small_spec();
    s.method = vec![Method::Hmc, Method::Drhmc];
    s.grid.k = vec![2];
    s.grid.a = vec![2];
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut one = RunOptions::new(a.path());
    one.workers = Some(1);
    let mut three = RunOptions::new(b.path());
    three.workers = Some(3);
    harness::run_grid(&s, &one).unwrap();
    harness::run_grid(&s, &three).unwrap();
    let ta = tree(a.path());
    assert!(ta.len() > 5);
    assert_eq!(ta, tree(b.path()));

    s.seed += 1;
    run(&s, c.path());
    assert_ne!(ta[Path::new("summary.csv")], tree(c.path())[Path::new("summary.csv")]);
}

#[test]
fn fixed_tuning_matches_direct_chains() {
    let mut s = small_spec();
    s.tuning.mass = Some(vec![1.0, 2.0, 0.5]);
    let dir = tempfile::tempdir().unwrap();
    let grid = run(&s, dir.path());
    let cell = &grid.cells[0];
    let model = s.model.build(Path::new(".")).unwrap();
    let cfg = DrConfig::hmc(0.1, 10, MassMatrix::new(vec![1.0, 2.0, 0.5]).unwrap()).unwrap();
    assert_eq!(cell.config_fingerprint, cfg.fingerprint());
    for c in 0..2 {
        let seed = derive_seed(derive_seed(s.seed, cell.cell.index as u64), c as u64);
        let direct = run_chain(seed, &model, &cfg, s.n_warmup, s.n_draws).unwrap();
        let (_, rows) = read_csv(&dir.path().join("cells").join(&cell.cell.id).join(format!("chain_{c:03}.csv")));
        for (i, row) in rows.iter().enumerate() {
            for j in 0..3 {
                let v: f64 = row[4 + j].parse().unwrap();
                assert_eq!(v.to_bits(), direct.draw(i)[j].to_bits());
            }
        }
        assert_eq!(cell.chains[c].sampling_evals, direct.sampling_evals());
    }
}

#[test]
fn evaluation_accounting_is_exact() {
    for step in [Some(0.3), None] {
        let mut s = small_spec();
        s.method = vec![Method::Hmc, Method::Drhmc];
        s.grid.k = vec![3];
        s.grid.a = vec![2];
        s.tuning.step_size = step;
        s.n_warmup = 150;
        let dir = tempfile::tempdir().unwrap();
        let grid = run(&s, dir.path());
        assert_eq!(grid.tuning.adapted, step.is_none());
        for cell in &grid.cells {
            for ch in &cell.chains {
                assert_eq!(ch.model_evals, ch.burn_in_evals + ch.sampling_evals);
                assert_eq!(ch.warmup_evals > 0, step.is_none());
            }
            for r in &cell.reports {
                assert_eq!(r.report.n_evals, cell.sampling_evals());
            }
        }
    }
}

#[test]
fn stage_histogram_counts_every_transition() {
    let mut s = small_spec();
    s.method = vec![Method::Drhmc];
    s.grid.k = vec![3];
    s.grid.a = vec![2];
    s.tuning.step_size = Some(1.2);
    let dir = tempfile::tempdir().unwrap();
    let grid = run(&s, dir.path());
    let cell = &grid.cells[0];
    let h = cell.stage_histogram_by_origin.as_ref().unwrap();
    assert_eq!(h.transitions, 200);
    let stage_counts: Vec<u64> = (0..4).map(|i| cell.chains.iter().map(|c| c.stage_counts[i]).sum()).collect();
    assert_eq!(stage_counts.iter().sum::<u64>(), 200);
    for stage in 1..=3u8 {
        assert_eq!(h.accepts(stage), stage_counts[stage as usize]);
    }
    // every transition tries stage 1; a stage is tried once per rejection
    // of the one before it that was retried
    assert_eq!(h.attempts(1), 200);
    assert!(h.attempts(2) <= h.attempts(1) - h.accepts(1));
    assert!(h.attempts(2) > 0);
}

/// A standard normal that panics far out in the tails.
struct Fragile(Gaussian);

impl Density for Fragile {
    fn dim(&self) -> usize {
        1
    }

    fn name(&self) -> &str {
        "fragile"
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        assert!(q[0].abs() <= 50.0, "left the safe region at {}", q[0]);
        self.0.log_density_grad(q, grad)
    }
}

#[test]
fn failing_cell_leaves_the_others_intact() {
    let s = spec(serde_json::json!({
        "model": {"name": "normal", "d": 1},
        "method": "hmc",
        "grid": {"eps_multipliers": [0.1, 5.0]},
        "integration_time": 50.0,
        "n_chains": 2,
        "n_warmup": 10,
        "n_draws": 50,
        "tuning": {"step_size": 1.0}
    }));
    let model = TargetModel::new(Fragile(Gaussian::standard(1)));
    let dir = tempfile::tempdir().unwrap();
    let grid = harness::run_grid_with_model(&s, &model, &RunOptions::new(dir.path())).unwrap();
    assert_eq!(grid.cells.len(), 1);
    assert_eq!(grid.failures.len(), 1);
    assert!(grid.failures[0].message.contains("safe region"), "{}", grid.failures[0].message);
    let ok = &grid.cells[0].cell;
    assert_eq!(ok.eps0, 0.1);
    let cell_dir = dir.path().join("cells").join(&ok.id);
    assert!(cell_dir.join("cell.json").exists());
    assert_eq!(read_csv(&cell_dir.join("chain_001.csv")).1.len(), 50);
    assert_eq!(read_csv(&dir.path().join("summary.csv")).1.len(), 2);
}

#[test]
fn draws_can_be_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = RunOptions::new(dir.path());
    opts.write_draws = false;
    opts.figures.clear();
    let grid = harness::run_grid(&small_spec(), &opts).unwrap();
    let cell = dir.path().join("cells").join(&grid.cells[0].cell.id);
    assert!(cell.join("cell.json").exists());
    assert!(!cell.join("chain_000.csv").exists());
    assert!(!dir.path().join("figures").exists());
}

#[test]
fn shipped_presets_parse_and_build() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    let mut seen = 0;
    for group in ["desk", "full"] {
        for entry in std::fs::read_dir(root.join(group)).unwrap() {
            let path = entry.unwrap().path();
            let s = harness::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            s.model.build(path.parent().unwrap()).unwrap();
            if group == "full" {
                assert_eq!((s.n_chains, s.n_warmup, s.n_draws), (50, 1000, 20_000), "{}", path.display());
            }
            seen += 1;
        }
    }
    assert!(seen >= 8);
}
