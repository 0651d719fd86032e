//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dido::cli::{self, IngestOptions, Mode};
use dido::gauss::{gauss_fit, gauss_predict, StdMode};
use dido::measures::{gaussian_quantiles, GaussianMeasure, QuantileGrid, QuantileMeasure};
use dido::regression::{fit, frechet_ls_gradient, frechet_ls_objective, predict, DidoDataset, FitOptions};
use dido::simulate::{cee, generate_scenario, run_replications, ReplicationReport, ScenarioConfig};
use dido::transport::{odot_decomposed, odot_direct, oplus_chain, optimal_map, parallel_transport, MonotoneMode, TangentMap};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const RECOVERY_CEE: f64 = 1e-10;
const RECOVERY_R2: f64 = 1e-12;
const RECOVERY_BUDGET: Duration = Duration::from_secs(5);
const TABLE_BUDGET: Duration = Duration::from_secs(60);
const LOW_NOISE_R2_MIN: f64 = 0.99;
const LOW_NOISE_MSE_MAX: f64 = 0.01;
const LOW_NOISE_CEE_MAX: f64 = 0.005;
const COMMUTATIVITY_TOL: f64 = 1e-12;
const ADDITIVITY_TOL: f64 = 1e-10;
const CROSS_REPR_TOL: f64 = 1e-3;
const CROSS_REPR_GRID: usize = 10_000;
const OLS_TOL: f64 = 1e-10;
const UNBIASED_SE: f64 = 4.0;
const GRADIENT_REL_TOL: f64 = 1e-6;
const INGEST_ALPHA_TOL: f64 = 0.1;
const REPS: usize = 200;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn g(m: f64, s: f64) -> GaussianMeasure {
    GaussianMeasure::new(m, s).unwrap()
}

fn full_dataset(config: &ScenarioConfig, idx: u64) -> (Vec<f64>, DidoDataset<GaussianMeasure>) {
    let sc = generate_scenario(config, idx).unwrap();
    let mut preds = sc.train.predictors().to_vec();
    preds.extend_from_slice(sc.test.predictors());
    let mut resp = sc.train.responses().to_vec();
    resp.extend_from_slice(sc.test.responses());
    let names = sc.train.names().to_vec();
    (sc.true_alpha, DidoDataset::new(preds, resp, names).unwrap())
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let mut worst_cee: f64 = 0.0;
    let mut worst_r2: f64 = 0.0;
    let cells = [(10, 1), (10, 3), (10, 7), (50, 1), (50, 3), (50, 7), (200, 1), (200, 3), (200, 7)];
    for s in 0..100u64 {
        let (n, p) = cells[s as usize % cells.len()];
        let cfg = ScenarioConfig { n, p, noiseless: true, seed: 1000 + s, reps: 1, ..Default::default() };
        let (alpha, data) = full_dataset(&cfg, 0);
        let model = gauss_fit(&data, &FitOptions::default()).unwrap();
        worst_cee = worst_cee.max(cee(&alpha, &model.alpha).unwrap());
        worst_r2 = worst_r2.max((model.diagnostics.r2 - 1.0).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_cee < RECOVERY_CEE && worst_r2 <= RECOVERY_R2 && elapsed < RECOVERY_BUDGET,
        format!("max CEE {worst_cee:.2e}, max |R²-1| {worst_r2:.2e}, {elapsed:.2?}"),
    )
}

fn replications(n: usize, p: usize, zeta: f64, seed: u64) -> ReplicationReport {
    run_replications(&ScenarioConfig { n, p, zeta, reps: REPS, seed, ..Default::default() }).unwrap()
}

fn table1_cells() -> Outcome {
    let start = Instant::now();
    let low = replications(500, 2, 0.01, 11);
    let high = replications(500, 10, 1.0, 12);
    let elapsed = start.elapsed();
    let r2 = low.mean("dido", "r2_train");
    let mse = low.mean("dido", "mse_test");
    let dido_test = high.mean("dido", "r2_test");
    let lr_test = high.mean("lr", "r2_test");
    let pass = (LOW_NOISE_R2_MIN..=1.0).contains(&r2) && mse <= LOW_NOISE_MSE_MAX && dido_test > lr_test && elapsed < TABLE_BUDGET;
    outcome(
        pass,
        format!(
            "low noise R² {r2:.4}, test MSE {mse:.4}; high noise test R² DIDO {dido_test:.3} vs LR {lr_test:.3} (train {:.3} vs {:.3}); {elapsed:.2?}",
            high.mean("dido", "r2_train"),
            high.mean("lr", "r2_train"),
        ),
    )
}

fn table2_cee() -> Outcome {
    let start = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for p in [2, 5, 10] {
        let r = replications(500, p, 0.01, 20 + p as u64);
        let c = r.mean("dido", "cee");
        pass &= c <= LOW_NOISE_CEE_MAX;
        let _ = write!(detail, "p={p}: {c:.5}  ");
    }
    let elapsed = start.elapsed();
    outcome(pass && elapsed < TABLE_BUDGET, format!("mean CEE {detail}{elapsed:.2?}"))
}

fn random_quantiles(rng: &mut ChaCha8Rng, k: usize) -> QuantileMeasure {
    let mut v = rng.random_range(-3.0..3.0);
    let scale = rng.random_range(0.1..3.0) / k as f64;
    let q = (0..k)
        .map(|_| {
            v += scale * rng.random_range(0.0..2.0);
            v
        })
        .collect();
    QuantileMeasure::new(q).unwrap()
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

fn commutativity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_perm: f64 = 0.0;
    let mut worst_explicit: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(20..200);
        let p = rng.random_range(1..=6);
        let nu_bar = Arc::new(random_quantiles(&mut rng, k));
        let mut maps = Vec::new();
        let mut explicit = nu_bar.quantiles().to_vec();
        for _ in 0..p {
            let mu = random_quantiles(&mut rng, k);
            let mu_bar = Arc::new(random_quantiles(&mut rng, k));
            let a = rng.random_range(-2.0..2.0);
            for (e, (x, y)) in explicit.iter_mut().zip(mu.quantiles().iter().zip(mu_bar.quantiles())) {
                *e += a * (x - y);
            }
            let at_bar = optimal_map(&mu, mu_bar).unwrap();
            let moved = parallel_transport(&at_bar, Arc::clone(&nu_bar)).unwrap();
            maps.push(odot_direct(a, &moved));
        }
        let chain = oplus_chain(Arc::clone(&nu_bar), &maps).unwrap();
        let mut shuffled: Vec<&TangentMap> = maps.iter().collect();
        shuffled.shuffle(&mut rng);
        let permuted = oplus_chain(Arc::clone(&nu_bar), shuffled).unwrap();
        worst_perm = worst_perm.max(max_rel_diff(&chain.image(), &permuted.image()));
        worst_explicit = worst_explicit.max(max_rel_diff(&chain.image(), &explicit));
    }
    outcome(
        worst_perm <= COMMUTATIVITY_TOL && worst_explicit <= COMMUTATIVITY_TOL,
        format!("max permutation diff {worst_perm:.2e}, max explicit-form diff {worst_explicit:.2e}"),
    )
}

fn additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(10..200);
        let base = Arc::new(random_quantiles(&mut rng, k));
        let target = random_quantiles(&mut rng, k);
        let map = optimal_map(&target, base).unwrap();
        let a = rng.random_range(-5.0..5.0);
        let d = odot_decomposed(a, &map);
        let e = odot_direct(a, &map);
        let diff = d
            .displacements()
            .iter()
            .zip(e.displacements())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    outcome(worst <= ADDITIVITY_TOL, format!("max |decomposed - direct| {worst:.2e}"))
}

fn cross_representation() -> Outcome {
    let grid = QuantileGrid::new(CROSS_REPR_GRID).unwrap();
    let mut worst_alpha: f64 = 0.0;
    let mut worst_pred: f64 = 0.0;
    for s in 0..50u64 {
        let p = 1 + (s as usize % 3);
        let cfg = ScenarioConfig { n: 30, p, zeta: 0.3, seed: 600 + s, ..Default::default() };
        let sc = generate_scenario(&cfg, 0).unwrap();
        let data = &sc.train;
        let gm = gauss_fit(data, &FitOptions::default()).unwrap();
        let conv = |m: &GaussianMeasure| gaussian_quantiles(m, grid);
        let qdata = DidoDataset::new(
            data.predictors().iter().map(|r| r.iter().map(conv).collect()).collect(),
            data.responses().iter().map(conv).collect(),
            data.names().to_vec(),
        )
        .unwrap();
        let qm = fit(&qdata, &FitOptions::default()).unwrap();
        for (a, b) in gm.alpha.iter().zip(&qm.alpha) {
            worst_alpha = worst_alpha.max((a - b).abs());
        }
        for (row, qrow) in data.predictors().iter().zip(qdata.predictors()).take(10) {
            let gp = gauss_predict(&gm, row, StdMode::Clamp).unwrap().measure;
            let qp = predict(&qm, qrow, MonotoneMode::Project).unwrap().measure;
            let d = dido::measures::w2_distance(&conv(&gp), &qp).unwrap();
            worst_pred = worst_pred.max(d);
        }
    }
    outcome(
        worst_alpha <= CROSS_REPR_TOL && worst_pred <= CROSS_REPR_TOL,
        format!("max |alpha diff| {worst_alpha:.2e}, max squared W2 between predictions {worst_pred:.2e}"),
    )
}

fn ols_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(8..60);
        let p = rng.random_range(1..5).min(n - 2);
        let stds: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..2.0)).collect();
        let resp_std = rng.random_range(0.5..2.0);
        let preds: Vec<Vec<GaussianMeasure>> = (0..n)
            .map(|_| stds.iter().map(|&s| g(rng.random_range(-5.0..5.0), s)).collect())
            .collect();
        let resp: Vec<GaussianMeasure> = (0..n).map(|_| g(rng.random_range(-5.0..5.0), resp_std)).collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        let data = DidoDataset::new(preds.clone(), resp.clone(), names).unwrap();
        let model = gauss_fit(&data, &FitOptions::default()).unwrap();

        let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { preds[i][j - 1].mean() });
        let y = DVector::from_iterator(n, resp.iter().map(|r| r.mean()));
        let beta = x.svd(true, true).solve(&y, 1e-14).unwrap();
        for j in 0..p {
            worst = worst.max((model.alpha[j] - beta[j + 1]).abs());
        }
    }
    outcome(worst <= OLS_TOL, format!("max |alpha - OLS slope| {worst:.2e} over 50 datasets"))
}

fn unbiasedness() -> Outcome {
    let alpha = vec![1.2, -0.7, 0.4];
    let cfg = ScenarioConfig { n: 100, p: 3, zeta: 0.5, reps: 500, seed: 8, alpha: Some(alpha.clone()), ..Default::default() };
    let estimates: Vec<Vec<f64>> = (0..cfg.reps as u64)
        .map(|i| {
            let sc = generate_scenario(&cfg, i).unwrap();
            gauss_fit(&sc.train, &FitOptions::default()).unwrap().alpha
        })
        .collect();
    let r = estimates.len() as f64;
    let mut worst_z: f64 = 0.0;
    let mut detail = String::new();
    for j in 0..alpha.len() {
        let mean = estimates.iter().map(|a| a[j]).sum::<f64>() / r;
        let var = estimates.iter().map(|a| (a[j] - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let z = (mean - alpha[j]).abs() / (var / r).sqrt();
        worst_z = worst_z.max(z);
        let _ = write!(detail, "{mean:.4} vs {:.1} ({z:.2} SE)  ", alpha[j]);
    }
    outcome(worst_z <= UNBIASED_SE, detail.trim_end().to_string())
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(10..80);
        let n = rng.random_range(5..25);
        let p = rng.random_range(1..4);
        let preds: Vec<Vec<QuantileMeasure>> = (0..n).map(|_| (0..p).map(|_| random_quantiles(&mut rng, k)).collect()).collect();
        let resp: Vec<QuantileMeasure> = (0..n).map(|_| random_quantiles(&mut rng, k)).collect();
        let data = DidoDataset::new(preds, resp, (0..p).map(|j| format!("x{j}")).collect()).unwrap();
        let alpha: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad = frechet_ls_gradient(&data, &alpha).unwrap();
        let h = 1e-4;
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for j in 0..p {
            let mut up = alpha.clone();
            let mut down = alpha.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (frechet_ls_objective(&data, &up).unwrap() - frechet_ls_objective(&data, &down).unwrap()) / (2.0 * h);
            err2 += (fd - grad[j]).powi(2);
            norm2 += grad[j].powi(2);
        }
        worst = worst.max(err2.sqrt() / norm2.sqrt().max(f64::MIN_POSITIVE));
    }
    outcome(worst < GRADIENT_REL_TOL, format!("max relative error {worst:.2e}"))
}

fn determinism(dir: &Path) -> Outcome {
    let cfg = ScenarioConfig { n: 100, p: 3, zeta: 0.5, reps: 40, seed: 2024, ..Default::default() };
    let a = cli::cmd_simulate(&cfg, false, &dir.join("run_a")).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| cli::cmd_simulate(&cfg, false, &dir.join("run_b")).unwrap());
    let same_csv = fs::read(&a.csv).unwrap() == fs::read(&b.csv).unwrap();
    let same_txt = fs::read(&a.table).unwrap() == fs::read(&b.table).unwrap();
    outcome(same_csv && same_txt, format!("csv identical: {same_csv}, table identical: {same_txt}"))
}

const PLANTED_ALPHA: [f64; 7] = [0.8, -0.5, 0.3, 0.6, -0.4, 0.2, 0.5];

/// Seven predictor signals and one response signal at 1 Hz with a planted
/// linear relation between window distributions.
fn synthetic_signal(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let window = 300usize;
    let windows = 120;
    let bar_m: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..5.0)).collect();
    let bar_s: Vec<f64> = (0..7).map(|_| rng.random_range(1.0..2.0)).collect();
    let (resp_m, resp_s) = (10.0, 3.0);
    let mut out = String::from("time,hr,map,spo2,etco2,rr,temp,bis,co\n");
    for w in 0..windows {
        let mut params = Vec::new();
        let (mut m, mut s) = (resp_m, resp_s);
        for j in 0..7 {
            let mj = bar_m[j] + Normal::new(0.0, 3.0).unwrap().sample(&mut rng);
            let sj = bar_s[j] + rng.random_range(-0.3..0.3);
            m += PLANTED_ALPHA[j] * (mj - bar_m[j]);
            s += PLANTED_ALPHA[j] * (sj - bar_s[j]);
            params.push((mj, sj));
        }
        params.push((m, s));
        let dists: Vec<Normal<f64>> = params.iter().map(|&(m, s)| Normal::new(m, s).unwrap()).collect();
        for t in 0..window {
            let time = (w * window + t) as f64;
            let _ = write!(out, "{time}");
            for (c, d) in dists.iter().enumerate() {
                if (t + c) % 97 == 0 {
                    out.push_str(",NA");
                } else {
                    let _ = write!(out, ",{}", d.sample(&mut rng));
                }
            }
            out.push('\n');
        }
    }
    fs::write(path, out).unwrap();
}

fn ingest_pipeline(dir: &Path) -> Outcome {
    let signal = dir.join("signal.csv");
    let dataset = dir.join("windows.csv");
    let model_path = dir.join("model.json");
    let preds_path = dir.join("predictions.csv");
    let traj_path = dir.join("trajectory.csv");
    synthetic_signal(&signal);

    let opts = IngestOptions { window_seconds: 300.0, ..Default::default() };
    let report = cli::cmd_ingest(&signal, &opts, Some(&dataset)).unwrap();
    cli::cmd_fit(&dataset, &FitOptions::default(), None, Some(77), Some(&model_path)).unwrap();
    let model = cli::ModelFile::load(&model_path).unwrap();
    let alpha = model.model.alpha().to_vec();
    let worst = alpha.iter().zip(PLANTED_ALPHA).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let grid_size = 1000;
    cli::cmd_predict(&model_path, &dataset, Mode::Clamp, Some(&preds_path)).unwrap();
    cli::cmd_trajectory(&model_path, &dataset, Some("5"), grid_size, Mode::Clamp, Some(&traj_path)).unwrap();

    let preds = fs::read_to_string(&preds_path).unwrap();
    let row: Vec<&str> = preds.lines().find(|l| l.starts_with("5,")).unwrap().split(',').collect();
    let predicted = g(row[1].parse().unwrap(), row[2].parse().unwrap());
    let expected = gaussian_quantiles(&predicted, QuantileGrid::new(grid_size).unwrap());
    let traj = fs::read_to_string(&traj_path).unwrap();
    let final_curve: Vec<f64> = traj
        .lines()
        .filter(|l| l.starts_with("partial_7,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let labels: std::collections::BTreeSet<&str> = traj.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let exact = final_curve == expected.quantiles();
    let pass = report.rows == 120 && alpha.len() == 7 && worst <= INGEST_ALPHA_TOL && exact && labels.len() == 9;
    outcome(
        pass,
        format!(
            "{} windows, p = {}, max |alpha - planted| {worst:.4}, {} curves, final curve equals prediction: {exact}",
            report.rows,
            alpha.len(),
            labels.len()
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; a name filter selects nothing here.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 exact recovery (noiseless)", Box::new(exact_recovery)),
        ("2 simulation cells (low noise fit, DIDO beats LR)", Box::new(table1_cells)),
        ("3 coefficient estimation error", Box::new(table2_cee)),
        ("4 commutativity and explicit form", Box::new(commutativity)),
        ("5 additivity of scalar multiplication", Box::new(additivity)),
        ("6 quantile grid vs closed form", Box::new(cross_representation)),
        ("7 equivalence with least squares", Box::new(ols_equivalence)),
        ("8 unbiasedness", Box::new(unbiasedness)),
        ("9 gradient check", Box::new(gradient_check)),
        ("10 simulation determinism", Box::new(|| determinism(dir.path()))),
        ("ingest pipeline", Box::new(|| ingest_pipeline(dir.path()))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
