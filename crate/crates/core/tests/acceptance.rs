//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! `cargo test -p drhmc --test acceptance` runs everything; criterion
//! numbers after `--` pick a subset, e.g. `-- 4 5 11`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use drhmc::diagnostics::{autocorr_ess, error_based_ess, integrated_autocorr_time, ks_statistic};
use drhmc::harness::{self, AuditOptions, GridOutcome, ModelSpec, RunOptions, RunSpec};
use drhmc::model::{Funnel, Gaussian};
use drhmc::phase_space::{energy_error_slope, flow_map, hamiltonian, MassMatrix, PhasePoint, ProposalMapSpec};
use drhmc::rng::chain_rng;
use drhmc::sampler::{forced_ladder, ladder_cost, log_alpha_k, Sampler, LOG_COMPLEMENT_FLOOR};
use drhmc::{DrConfig, Method, Moment, RetryRule, TargetModel};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/desk").join(name)
}

fn run_preset(name: &str, write_draws: bool) -> (GridOutcome, tempfile::TempDir) {
    let path = preset(name);
    let spec: RunSpec = harness::parse_config(&path).expect("preset parses");
    let dir = tempfile::tempdir().expect("tempdir");
    let mut opts = RunOptions::new(dir.path());
    opts.write_draws = write_draws;
    opts.base_dir = path.parent().unwrap().to_path_buf();
    let grid = harness::run_grid(&spec, &opts).expect("grid runs");
    assert!(grid.failures.is_empty(), "failed cells: {:?}", grid.failures);
    (grid, dir)
}

fn named_models() -> Vec<TargetModel> {
    ModelSpec::NAMES
        .iter()
        .map(|n| ModelSpec::named(n).unwrap().build(Path::new(".")).unwrap())
        .collect()
}

fn gradients() -> Verdict {
    let t0 = Instant::now();
    let mut models = named_models();
    models.push(TargetModel::new(Funnel::new(20, 3.0).unwrap()));
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let r = harness::gradcheck(m, 100, 1e-5, 1e-5, 100 + i as u64);
        worst = worst.max(r.max_rel_error);
        if !r.passed() {
            failed.push(r.to_string());
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        failed.is_empty() && elapsed < Duration::from_secs(10),
        format!(
            "{} models x 100 points, worst relative error {worst:.2e} (tol 1e-5), {:.1?}{}",
            models.len(),
            elapsed,
            if failed.is_empty() { String::new() } else { format!("; {}", failed.join("; ")) }
        ),
    )
}

fn involution_and_volume() -> Verdict {
    let t0 = Instant::now();
    let mut models = named_models();
    models.push(TargetModel::new(Gaussian::new(vec![0.5, 1.0, 3.0]).unwrap()));
    let (mut inv, mut jac, mut jac_models) = (0.0f64, 0.0f64, 0);
    let mut failed = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let opts = AuditOptions {
            seed: i as u64,
            ..AuditOptions::default()
        };
        let r = harness::audit(m, &opts);
        let mut has_jac = false;
        for p in r.probes.iter().filter(|p| !p.name.starts_with("energy")) {
            if p.name.starts_with("involution") {
                inv = inv.max(p.measured);
            } else {
                has_jac = true;
                jac = jac.max(p.measured);
            }
            if !p.pass || p.points + p.skipped != 1000 {
                failed.push(format!("{} {}: {:.2e} ({} skipped)", r.model, p.name, p.measured, p.skipped));
            }
        }
        jac_models += has_jac as usize;
    }
    let elapsed = t0.elapsed();
    verdict(
        failed.is_empty() && jac_models >= 4 && elapsed < Duration::from_secs(60),
        format!(
            "k<=4, 1000 points, {} models: worst involution {inv:.2e} (tol 1e-8), worst |det-1| {jac:.2e} on {jac_models} models with d<=5 (tol 1e-5), {:.1?}{}",
            models.len(),
            elapsed,
            if failed.is_empty() { String::new() } else { format!("; {}", failed.join("; ")) }
        ),
    )
}

fn energy_scaling() -> Verdict {
    let model = TargetModel::new(Gaussian::standard(10));
    let mass = MassMatrix::identity(10);
    let mut rng = chain_rng(3);
    let points: Vec<PhasePoint> = (0..100)
        .map(|_| {
            let q = (0..10).map(|_| rng.sample(StandardNormal)).collect();
            let p = (0..10).map(|_| rng.sample(StandardNormal)).collect();
            PhasePoint::new(q, p, &model)
        })
        .collect();
    let slope = energy_error_slope(&points, &[0.2, 0.1, 0.05, 0.025], 1.0, &mass, &model);
    verdict(
        (1.9..=2.1).contains(&slope),
        format!("slope of log mean |dH| vs log eps on a 10-d standard normal: {slope:.4} (want [1.9, 2.1])"),
    )
}

fn stationary_law() -> Verdict {
    let model = TargetModel::new(Gaussian::standard(1));
    let cfg = DrConfig::new(3.0, 5, MassMatrix::identity(1), 3, 2, false).unwrap();
    let mut sampler = Sampler::new(&model, cfg, vec![0.0], chain_rng(4)).unwrap();
    let n = 50_000;
    let mut draws = Vec::with_capacity(n);
    let (mut exact, mut short, mut mismatched) = (0usize, 0usize, 0usize);
    let mut by_stage = [0usize; 4];
    for _ in 0..n {
        let before = model.eval_count();
        let ladder = sampler.step();
        let spent = model.eval_count() - before;
        let tried = ladder.stages_tried();
        by_stage[tried] += 1;
        let full = 1usize << tried;
        let ok = spent == ladder.evals
            && if ladder.short_circuited {
                short += 1;
                ladder.nodes < full
            } else {
                ladder.nodes == full
            };
        if ok {
            exact += 1;
        } else {
            mismatched += 1;
        }
        draws.push(sampler.position()[0]);
    }
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let ks = ks_statistic(&draws, |x| std_normal.cdf(x)).unwrap();
    verdict(
        ks.p_value > 0.01 && mismatched == 0,
        format!(
            "eps=3 n=5 a=2 k=3 on N(0,1), {n} draws: KS D={:.4} p={:.3} (want > 0.01); ghost audit {exact}/{n} exact (2^k nodes, {short} short-circuited), stages tried {:?}",
            ks.d,
            ks.p_value,
            &by_stage[1..]
        ),
    )
}

/// Brute-force acceptance: enumerate all `2^k` tree points by composing
/// stage maps, then evaluate the acceptance recursion on them in linear
/// space.
struct Enumerated {
    energy: Vec<f64>,
    k: usize,
    rule: Option<RetryRule>,
}

impl Enumerated {
    fn new(x: &PhasePoint, k: usize, cfg: &DrConfig, model: &TargetModel) -> Self {
        let size = 1usize << k;
        let mut points: Vec<Option<PhasePoint>> = vec![None; size];
        let mut energy = vec![f64::INFINITY; size];
        points[0] = Some(x.clone());
        energy[0] = hamiltonian(x, &cfg.mass);
        for m in 1..size {
            let stage = m.trailing_zeros() as usize + 1;
            let parent = points[m & (m - 1)].as_ref().unwrap();
            let spec = ProposalMapSpec::new(cfg.eps0, cfg.n_steps, stage, cfg.a).unwrap();
            let f = flow_map(parent, &spec, &cfg.mass, model);
            if !f.divergent {
                energy[m] = hamiltonian(&f.point, &cfg.mass);
            }
            points[m] = Some(f.point);
        }
        let rule = cfg.probabilistic.then_some(cfg.retry_rule);
        Self { energy, k, rule }
    }

    fn retry(&self, _alpha: f64, complement: f64) -> f64 {
        match self.rule {
            None | Some(RetryRule::Always) => 1.0,
            Some(RetryRule::OneMinusAlpha) => complement,
            Some(RetryRule::Constant(c)) => c,
        }
    }

    /// `(alpha_j, 1 - alpha_j)` from node `m`. The complement is kept
    /// separately since `1 - alpha` cancels when alpha is close to 1.
    fn alpha(&self, m: usize, j: usize) -> (f64, f64) {
        assert!(j <= self.k);
        let y = m | (1 << (j - 1));
        if !self.energy[m].is_finite() || !self.energy[y].is_finite() {
            return (0.0, 1.0);
        }
        let floor = LOG_COMPLEMENT_FLOOR.exp();
        let mut num = 1.0;
        let mut den = 1.0;
        for i in 1..j {
            let (ay, cy) = self.alpha(y, i);
            let (ax, cx) = self.alpha(m, i);
            num *= cy * self.retry(ay, cy);
            den *= cx.max(floor) * self.retry(ax, cx).max(floor);
        }
        if num == 0.0 {
            return (0.0, 1.0);
        }
        let log_r = (self.energy[m] - self.energy[y] + num.ln() - den.ln()).min(0.0);
        (log_r.exp(), -log_r.exp_m1())
    }
}

fn acceptance_oracle() -> Verdict {
    let mut rng = chain_rng(5);
    let (mut worst, mut interior, mut drawn) = (0.0f64, 0usize, 0usize);
    let mut worst_case = String::new();
    // instances where alpha is exactly 0 or 1 say little, so keep drawing
    // until 500 have it strictly inside
    while interior < 500 {
        let case = drawn;
        drawn += 1;
        let d = rng.random_range(1..=3usize);
        let model = if rng.random_bool(0.5) {
            let scales = (0..d).map(|_| rng.random_range(0.3..3.0)).collect();
            TargetModel::new(Gaussian::new(scales).unwrap())
        } else {
            TargetModel::new(Funnel::new(d + 1, 3.0).unwrap())
        };
        let dim = model.dim();
        let k = rng.random_range(2..=3usize);
        let a = [2usize, 3, 5][rng.random_range(0..3)];
        let eps = rng.random_range(0.2..2.5);
        let n = rng.random_range(1..=5usize);
        let probabilistic = rng.random_bool(0.5);
        let rule = if rng.random_bool(0.5) {
            RetryRule::OneMinusAlpha
        } else {
            RetryRule::Constant(rng.random_range(0.1..1.0))
        };
        let cfg = DrConfig::new(eps, n, MassMatrix::identity(dim), k, a, probabilistic)
            .unwrap()
            .with_retry_rule(rule)
            .unwrap();
        let q: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let p: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x = PhasePoint::new(q, p, &model);
        let oracle = Enumerated::new(&x, k, &cfg, &model).alpha(0, k).0;
        let got = log_alpha_k(&x, k, &cfg, &model).exp();
        if !(oracle > 0.0 && oracle < 1.0) {
            continue;
        }
        interior += 1;
        let err = (got - oracle).abs();
        if !(err <= worst) {
            worst = if err.is_nan() { f64::INFINITY } else { err };
            worst_case = format!("case {case}: k={k} a={a} eps={eps:.3} n={n} prob={probabilistic}");
        }
    }
    verdict(
        worst <= 1e-12,
        format!("{interior} instances with 0 < alpha < 1 ({drawn} drawn), k in {{2,3}}: max |alpha - oracle| = {worst:.2e} (tol 1e-12) at {worst_case}"),
    )
}

fn ess_calibration() -> Verdict {
    let mut rng = chain_rng(6);
    let (n, rho) = (100_000usize, 0.5f64);
    let mut x = rng.sample::<f64, _>(StandardNormal);
    let ar: Vec<f64> = (0..n)
        .map(|_| {
            x = rho * x + (1.0 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect();
    let ess = autocorr_ess(&ar).unwrap();
    let target = n as f64 / 3.0;
    let rel_ar = (ess / target - 1.0).abs();

    let (chains, len) = (400usize, 1000usize);
    let means: Vec<f64> = (0..chains)
        .map(|_| (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).sum::<f64>() / len as f64)
        .collect();
    let err_ess = error_based_ess(&means, 0.0, 1.0).unwrap().total();
    let total = (chains * len) as f64;
    let rel_iid = (err_ess / total - 1.0).abs();
    verdict(
        rel_ar <= 0.10 && rel_iid <= 0.25,
        format!(
            "AR(1) rho=0.5, N={n}: ESS {ess:.0} vs N/3={target:.0} ({:.1}% off, tol 10%); iid {chains}x{len}: error-based ESS {err_ess:.0} vs {total:.0} ({:.1}% off, tol 25%)",
            100.0 * rel_ar,
            100.0 * rel_iid
        ),
    )
}

fn read_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

fn funnel_cutoff() -> Verdict {
    let (grid, dir) = run_preset("funnel-cutoff.json", true);
    let hmc = grid.cells.iter().find(|c| c.cell.method == Method::Hmc).unwrap();
    let dr = grid.cells.iter().find(|c| c.cell.method == Method::Drhmc).unwrap();
    let hmc_below = hmc.marginal.as_ref().unwrap().count_below(-5.0);
    let dr_below = dr.marginal.as_ref().unwrap().count_below(-5.0);
    // KS assumes independent draws, so each chain is thinned by its
    // integrated autocorrelation time first
    let mut thinned = Vec::new();
    for c in 0..grid.spec.n_chains {
        let beta = read_column(&dir.path().join("cells").join(&dr.cell.id).join(format!("chain_{c:03}.csv")), "q0");
        let tau = integrated_autocorr_time(&beta).unwrap_or(beta.len() as f64);
        thinned.extend(beta.iter().step_by(tau.ceil().max(1.0) as usize));
    }
    let prior = Normal::new(0.0, 3.0).unwrap();
    let ks = ks_statistic(&thinned, |x| prior.cdf(x)).unwrap();
    verdict(
        hmc_below == 0 && dr_below >= 50 && ks.p_value > 0.001,
        format!(
            "d=20, eps=0.2, 4x12500: HMC {hmc_below} draws with beta < -5 (want 0); DRHMC k=3 a=2 {dr_below} (want >= 50), KS vs N(0,9) on {} thinned draws p={:.3} (want > 0.001)",
            thinned.len(),
            ks.p_value
        ),
    )
}

fn funnel_efficiency() -> Verdict {
    let t0 = Instant::now();
    let (grid, _dir) = run_preset("funnel-efficiency.json", false);
    let beta_cost = |c: &harness::CellOutcome| c.report(Moment::First).unwrap().report.cost_at(0).1;
    let hmc = grid.cells.iter().find(|c| c.cell.method == Method::Hmc).unwrap();
    let hmc_cost = beta_cost(hmc).unwrap();
    let best = grid
        .cells
        .iter()
        .filter(|c| c.cell.method == Method::Drhmc)
        .filter_map(|c| beta_cost(c).map(|v| (c, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let ratio = best.1 / hmc_cost;
    let elapsed = t0.elapsed();
    verdict(
        ratio <= 0.5 && elapsed < Duration::from_secs(1800),
        format!(
            "d=5, error-based cost of beta: HMC eps=0.01 {hmc_cost:.1}, best DRHMC {} {:.1}, ratio {ratio:.3} (want <= 0.5), {:.1?}",
            best.0.cell.id, best.1, elapsed
        ),
    )
}

fn best_cost(grid: &GridOutcome, method: Method, cost: impl Fn(&harness::CellOutcome) -> Option<f64>) -> (String, f64) {
    grid.cells
        .iter()
        .filter(|c| c.cell.method == method)
        .filter_map(|c| cost(c).map(|v| (c.cell.id.clone(), v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

fn mixture() -> Verdict {
    let (grid, _dir) = run_preset("mixture.json", false);
    let cost = |c: &harness::CellOutcome| c.report(Moment::Second).unwrap().report.primary_cost();
    let (hmc_id, hmc) = best_cost(&grid, Method::Hmc, cost);
    let (dr_id, dr) = best_cost(&grid, Method::Drhmc, cost);
    let ratio = dr / hmc;
    verdict(
        ratio <= 0.7,
        format!("theta^2 cost: best HMC {hmc_id} {hmc:.1}, best DRHMC {dr_id} {dr:.1}, ratio {ratio:.3} (want <= 0.7)"),
    )
}

fn probabilistic_overhead() -> Verdict {
    let (grid, _dir) = run_preset("normal-overhead.json", false);
    let cost = |c: &harness::CellOutcome| c.report(Moment::First).unwrap().report.cost_r;
    let (_, hmc) = best_cost(&grid, Method::Hmc, cost);
    let (det_id, det) = best_cost(&grid, Method::Drhmc, cost);
    let (prob_id, prob) = best_cost(&grid, Method::DrhmcProb, cost);
    let (rd, rp) = (det / hmc, prob / hmc);
    verdict(
        rp <= 1.3 && rd >= 1.5,
        format!(
            "50-d normal, autocorrelation cost of theta vs HMC {hmc:.1}: probabilistic {prob_id} {rp:.3}x (want <= 1.3), deterministic {det_id} {rd:.3}x (want >= 1.5)"
        ),
    )
}

fn cost_growth() -> Verdict {
    let model = TargetModel::new(Gaussian::standard(2));
    let x = PhasePoint::new(vec![0.3, -0.7], vec![0.5, 1.1], &model);
    let mut rows = Vec::new();
    let mut pass = true;
    for (n, a, k) in [(5usize, 2usize, 3usize), (3, 5, 2), (2, 2, 4)] {
        let cfg = DrConfig::new(0.01, n, MassMatrix::identity(2), k, a, false).unwrap();
        let ladder = forced_ladder(&x, k, &cfg, &model);
        let mut expected = 0u64;
        for j in 1..=k {
            expected += 2u64.pow((k - j) as u32) * (a as u64).pow((j - 1) as u32) * n as u64;
        }
        let ok = ladder.leapfrog_steps == expected && ladder_cost(n, a, k) == expected;
        pass &= ok;
        rows.push(format!("({n},{a},{k}): {} of {expected}", ladder.leapfrog_steps));
    }
    verdict(pass, format!("forced ladders, measured leapfrog steps: {}", rows.join(", ")))
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 11] = [
    (1, "gradient suite", gradients),
    (2, "involution and volume", involution_and_volume),
    (3, "energy error scaling", energy_scaling),
    (4, "stationary law", stationary_law),
    (5, "acceptance oracle", acceptance_oracle),
    (6, "ESS calibration", ess_calibration),
    (7, "funnel cutoff", funnel_cutoff),
    (8, "funnel efficiency", funnel_efficiency),
    (9, "mixture efficiency", mixture),
    (10, "probabilistic overhead", probabilistic_overhead),
    (11, "cost growth", cost_growth),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<4} {name} [{:.1?}]: {}",
            if v.pass { "PASS" } else { "FAIL" },
            t0.elapsed(),
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
