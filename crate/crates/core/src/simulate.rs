//! Seeded simulation study for the Gaussian model.
//!
//! One replicate draws random barycenters, coefficients and predictor measures,
//! builds responses from the explicit model plus a noise map, splits the samples
//! into train and test sets, then fits both the Gaussian model and a Euclidean
//! linear-regression baseline. [`run_replications`] aggregates the replicate
//! metrics into the mean and standard deviation of every (method, metric) pair.
//!
//! Every replicate owns an RNG stream derived from `(seed, replicate_index)`, so
//! results do not depend on how replicates are scheduled across threads.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{gauss_fit, gauss_goodness_of_fit, gauss_predict, GaussPrediction, StdMode, CLAMPED_STD};
use crate::linalg::{ols, OlsFit};
use crate::measures::{barycenter_gaussian, GaussianMeasure, Measure};
use crate::regression::{adjusted, DidoDataset, FitOptions};

/// How the baseline models the response spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrVariant {
    /// Regress the response std directly.
    #[default]
    Std,
    /// Regress the log of the response std and exponentiate predictions.
    LogStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub zeta: f64,
    pub reps: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub delta_m_std: f64,
    pub delta_sigma_halfwidth: f64,
    pub sigma_floor: f64,
    /// Skip the noise map entirely.
    pub noiseless: bool,
    /// Fixed coefficients instead of drawing them from `Uniform(-2, 2)`.
    pub alpha: Option<Vec<f64>>,
    pub lr_variant: LrVariant,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 500,
            p: 2,
            zeta: 0.01,
            reps: 200,
            seed: 0,
            train_fraction: 0.7,
            delta_m_std: 1.0,
            delta_sigma_halfwidth: 0.5,
            sigma_floor: 0.05,
            noiseless: false,
            alpha: None,
            lr_variant: LrVariant::Std,
        }
    }
}

/// Lower end of the noise-std draw `Uniform(0.01, zeta)`.
const TAU_LOW: f64 = 0.01;
const MAX_ROW_DRAWS: usize = 10_000;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 4 {
            return bad(format!("n must be at least 4, got {}", self.n));
        }
        if self.p < 1 {
            return bad("p must be at least 1".into());
        }
        if !(self.zeta > 0.0) || !self.zeta.is_finite() {
            return bad(format!("zeta must be positive, got {}", self.zeta));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if !(self.delta_m_std >= 0.0) || !(self.delta_sigma_halfwidth >= 0.0) || !(self.sigma_floor > 0.0) {
            return bad("dispersion parameters must be non-negative and the std floor positive".into());
        }
        if self.reps == 0 {
            return bad("reps must be positive".into());
        }
        if let Some(a) = &self.alpha {
            if a.len() != self.p || a.iter().any(|v| !v.is_finite()) {
                return bad("fixed alpha must have p finite entries".into());
            }
        }
        Ok(())
    }

    pub fn train_size(&self) -> usize {
        ((self.train_fraction * self.n as f64).round() as usize).clamp(2, self.n - 1)
    }

    /// Half-width of the centred std perturbation `tau - tau_bar`.
    fn noise_halfwidth(&self) -> f64 {
        if self.noiseless {
            0.0
        } else {
            (self.zeta - TAU_LOW).abs() / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub true_alpha: Vec<f64>,
    pub pred_barycenters: Vec<GaussianMeasure>,
    pub resp_barycenter: GaussianMeasure,
    pub train: DidoDataset<GaussianMeasure>,
    pub test: DidoDataset<GaussianMeasure>,
    /// Predictor rows rejected because their noiseless response std fell below the floor.
    pub redrawn_rows: usize,
}

fn replicate_rng(seed: u64, replicate_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_index);
    rng
}

fn uniform(lo: f64, hi: f64) -> Uniform<f64> {
    Uniform::new(lo, hi).expect("valid uniform bounds")
}

fn predictor_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Draws one replicate.
///
/// Predictor rows whose noiseless response std would put the noisy std below
/// `sigma_floor` are redrawn, so the floor never distorts the linear model.
pub fn generate_scenario(config: &ScenarioConfig, replicate_index: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, replicate_index);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = config.p;

    let bar_means: Vec<f64> = (0..p).map(|_| std_normal.sample(&mut rng)).collect();
    let resp_mean = std_normal.sample(&mut rng);
    let bar_stds: Vec<f64> = (0..p).map(|_| rng.random_range(1.0..2.0)).collect();
    let resp_std = rng.random_range(1.0..2.0);
    let drawn_alpha: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let alpha = config.alpha.clone().unwrap_or(drawn_alpha);

    let dm = Normal::new(0.0, config.delta_m_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let ds = (config.delta_sigma_halfwidth > 0.0)
        .then(|| uniform(-config.delta_sigma_halfwidth, config.delta_sigma_halfwidth));
    let shift = Normal::new(0.0, config.zeta).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (tau_lo, tau_hi) = if config.zeta < TAU_LOW { (config.zeta, TAU_LOW) } else { (TAU_LOW, config.zeta) };
    let tau = (tau_hi > tau_lo).then(|| uniform(tau_lo, tau_hi));
    let tau_mean = (tau_lo + tau_hi) / 2.0;
    let min_clean_std = config.sigma_floor + config.noise_halfwidth();

    let mut predictors = Vec::with_capacity(config.n);
    let mut responses = Vec::with_capacity(config.n);
    let mut redrawn_rows = 0;
    for _ in 0..config.n {
        let mut attempt = 0;
        let (row, clean_mean, clean_std) = loop {
            let mut row = Vec::with_capacity(p);
            let mut mean = resp_mean;
            let mut std = resp_std;
            for j in 0..p {
                let m = bar_means[j] + dm.sample(&mut rng);
                let s_delta = ds.map_or(0.0, |d| d.sample(&mut rng));
                let s = (bar_stds[j] + s_delta).max(config.sigma_floor);
                mean += alpha[j] * (m - bar_means[j]);
                std += alpha[j] * (s - bar_stds[j]);
                row.push(GaussianMeasure::new(m, s)?);
            }
            attempt += 1;
            if std >= min_clean_std || attempt >= MAX_ROW_DRAWS {
                break (row, mean, std);
            }
            redrawn_rows += 1;
        };
        let (mean, std) = if config.noiseless {
            (clean_mean, clean_std.max(config.sigma_floor))
        } else {
            let s = shift.sample(&mut rng);
            let t = tau.map_or(tau_mean, |d| d.sample(&mut rng));
            (clean_mean + s, (clean_std + (t - tau_mean)).max(config.sigma_floor))
        };
        predictors.push(row);
        responses.push(GaussianMeasure::new(mean, std)?);
    }

    let mut order: Vec<usize> = (0..config.n).collect();
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = order.split_at(config.train_size());
    let subset = |idx: &[usize]| {
        DidoDataset::new(
            idx.iter().map(|&i| predictors[i].clone()).collect(),
            idx.iter().map(|&i| responses[i]).collect(),
            predictor_names(p),
        )
    };
    let test = if test_idx.len() >= 2 {
        subset(test_idx)?
    } else {
        // a single held-out sample is duplicated so the dataset invariants hold
        let i = test_idx[0];
        DidoDataset::new(
            vec![predictors[i].clone(); 2],
            vec![responses[i]; 2],
            predictor_names(p),
        )?
    };
    Ok(Scenario {
        true_alpha: alpha,
        pred_barycenters: bar_means
            .iter()
            .zip(&bar_stds)
            .map(|(&m, &s)| GaussianMeasure::new(m, s))
            .collect::<Result<_>>()?,
        resp_barycenter: GaussianMeasure::new(resp_mean, resp_std)?,
        train: subset(train_idx)?,
        test,
        redrawn_rows,
    })
}

/// Two least-squares fits on `(m_1..m_p, s_1..s_p)`: one for the response mean, one for its spread.
#[derive(Debug, Clone, PartialEq)]
pub struct LrBaseline {
    pub mean_fit: OlsFit,
    pub std_fit: OlsFit,
    pub variant: LrVariant,
}

fn lr_features(row: &[GaussianMeasure]) -> Vec<f64> {
    row.iter().map(GaussianMeasure::mean).chain(row.iter().map(GaussianMeasure::std)).collect()
}

impl LrBaseline {
    /// Intercepts and slopes of both fits: `4p + 2`.
    pub fn num_coefficients(&self) -> usize {
        2 + self.mean_fit.slopes.len() + self.std_fit.slopes.len()
    }

    /// Predicted Gaussian; non-positive std predictions are clamped.
    pub fn predict(&self, row: &[GaussianMeasure]) -> Result<GaussPrediction> {
        let x = lr_features(row);
        let mean = self.mean_fit.predict(&x);
        let raw = self.std_fit.predict(&x);
        let std = match self.variant {
            LrVariant::Std => raw,
            LrVariant::LogStd => raw.exp(),
        };
        let clamped = !(std > 0.0);
        Ok(GaussPrediction {
            measure: GaussianMeasure::new(mean, if clamped { CLAMPED_STD } else { std })?,
            clamped,
        })
    }
}

pub fn fit_baseline_lr(train: &DidoDataset<GaussianMeasure>, variant: LrVariant) -> Result<LrBaseline> {
    let x: Vec<Vec<f64>> = train.predictors().iter().map(|r| lr_features(r)).collect();
    let means: Vec<f64> = train.responses().iter().map(GaussianMeasure::mean).collect();
    let spreads: Vec<f64> = train
        .responses()
        .iter()
        .map(|g| match variant {
            LrVariant::Std => g.std(),
            LrVariant::LogStd => g.std().ln(),
        })
        .collect();
    Ok(LrBaseline {
        mean_fit: ols(&x, &means)?,
        std_fit: ols(&x, &spreads)?,
        variant,
    })
}

/// Coefficient estimation error `sqrt(|alpha - alpha_hat|^2 / p)`.
pub fn cee(true_alpha: &[f64], est_alpha: &[f64]) -> Result<f64> {
    if true_alpha.len() != est_alpha.len() || true_alpha.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} true vs {} estimated coefficients",
            true_alpha.len(),
            est_alpha.len()
        )));
    }
    let ss: f64 = true_alpha.iter().zip(est_alpha).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / true_alpha.len() as f64).sqrt())
}

/// Mean squared Wasserstein distance between paired predictions and truths.
pub fn mse<M: Measure>(predictions: &[M], truths: &[M]) -> Result<f64> {
    if predictions.len() != truths.len() || truths.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    for (a, b) in predictions.iter().zip(truths) {
        total += a.w2(b)?;
    }
    Ok(total / truths.len() as f64)
}

fn r2_against(preds: &[GaussianMeasure], truths: &[GaussianMeasure], reference: &GaussianMeasure) -> Result<f64> {
    let rss = mse(preds, truths)?;
    let tss = mse(&vec![*reference; truths.len()], truths)?;
    Ok(if tss == 0.0 { 1.0 } else { 1.0 - rss / tss })
}

/// Metrics of one replicate. R² on the test split uses the test responses' own barycenter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub dido_r2_train: f64,
    pub dido_adj_r2_train: f64,
    pub dido_r2_test: f64,
    pub dido_mse_train: f64,
    pub dido_mse_test: f64,
    pub dido_cee: f64,
    pub lr_r2_train: f64,
    pub lr_adj_r2_train: f64,
    pub lr_r2_test: f64,
    pub lr_mse_train: f64,
    pub lr_mse_test: f64,
}

/// Reads one metric out of a replicate.
pub type MetricAccessor = fn(&ReplicateMetrics) -> f64;

/// `(method, metric)` labels in report order, paired with their accessor.
pub const METRICS: [(&str, &str, MetricAccessor); 11] = [
    ("dido", "r2_train", |m| m.dido_r2_train),
    ("dido", "adj_r2_train", |m| m.dido_adj_r2_train),
    ("dido", "r2_test", |m| m.dido_r2_test),
    ("dido", "mse_train", |m| m.dido_mse_train),
    ("dido", "mse_test", |m| m.dido_mse_test),
    ("dido", "cee", |m| m.dido_cee),
    ("lr", "r2_train", |m| m.lr_r2_train),
    ("lr", "adj_r2_train", |m| m.lr_adj_r2_train),
    ("lr", "r2_test", |m| m.lr_r2_test),
    ("lr", "mse_train", |m| m.lr_mse_train),
    ("lr", "mse_test", |m| m.lr_mse_test),
];

pub fn run_replicate(config: &ScenarioConfig, replicate_index: u64) -> Result<ReplicateMetrics> {
    let sc = generate_scenario(config, replicate_index)?;
    let model = gauss_fit(&sc.train, &FitOptions::default())?;
    let lr = fit_baseline_lr(&sc.train, config.lr_variant)?;

    let predict_all = |data: &DidoDataset<GaussianMeasure>, f: &dyn Fn(&[GaussianMeasure]) -> Result<GaussPrediction>| {
        data.predictors()
            .iter()
            .map(|r| f(r).map(|p| p.measure))
            .collect::<Result<Vec<_>>>()
    };
    let dido = |r: &[GaussianMeasure]| gauss_predict(&model, r, StdMode::Clamp);
    let base = |r: &[GaussianMeasure]| lr.predict(r);

    let train_bar = barycenter_gaussian(sc.train.responses())?;
    let test_bar = barycenter_gaussian(sc.test.responses())?;
    let n_train = sc.train.len();

    let dido_train = predict_all(&sc.train, &dido)?;
    let dido_test = predict_all(&sc.test, &dido)?;
    let lr_train = predict_all(&sc.train, &base)?;
    let lr_test = predict_all(&sc.test, &base)?;

    let dido_gof = gauss_goodness_of_fit(&model, &sc.train)?;
    let lr_r2_train = r2_against(&lr_train, sc.train.responses(), &train_bar)?;
    Ok(ReplicateMetrics {
        dido_r2_train: dido_gof.r2,
        dido_adj_r2_train: adjusted(dido_gof.r2, n_train, config.p).unwrap_or(f64::NAN),
        dido_r2_test: r2_against(&dido_test, sc.test.responses(), &test_bar)?,
        dido_mse_train: mse(&dido_train, sc.train.responses())?,
        dido_mse_test: mse(&dido_test, sc.test.responses())?,
        dido_cee: cee(&sc.true_alpha, &model.alpha)?,
        lr_r2_train,
        lr_adj_r2_train: adjusted(lr_r2_train, n_train, 2 * config.p).unwrap_or(f64::NAN),
        lr_r2_test: r2_against(&lr_test, sc.test.responses(), &test_bar)?,
        lr_mse_train: mse(&lr_train, sc.train.responses())?,
        lr_mse_test: mse(&lr_test, sc.test.responses())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub config: ScenarioConfig,
    /// Replicates that completed.
    pub reps: usize,
    /// Replicates that failed (e.g. singular normal systems) and were excluded.
    pub failures: usize,
    pub summaries: Vec<MetricSummary>,
    /// Per-replicate metrics in replicate order.
    #[serde(skip)]
    pub replicates: Vec<ReplicateMetrics>,
}

impl ReplicationReport {
    pub fn get(&self, method: &str, metric: &str) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.method == method && s.metric == metric)
    }

    /// Mean of a metric, NaN when absent.
    pub fn mean(&self, method: &str, metric: &str) -> f64 {
        self.get(method, metric).map_or(f64::NAN, |s| s.mean)
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = xs.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let sd = if finite.len() > 1 {
        (finite.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs `config.reps` replicates (in parallel) and aggregates them in replicate order.
pub fn run_replications(config: &ScenarioConfig) -> Result<ReplicationReport> {
    config.validate()?;
    let outcomes: Vec<Result<ReplicateMetrics>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|i| run_replicate(config, i))
        .collect();
    let mut replicates = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(m) => replicates.push(m),
            Err(Error::InvalidConfig(msg)) => return Err(Error::InvalidConfig(msg)),
            Err(_) => failures += 1,
        }
    }
    let summaries = METRICS
        .iter()
        .map(|(method, metric, get)| {
            let values: Vec<f64> = replicates.iter().map(get).collect();
            let (mean, sd) = mean_sd(&values);
            MetricSummary {
                method: method.to_string(),
                metric: metric.to_string(),
                mean,
                sd,
            }
        })
        .collect();
    Ok(ReplicationReport {
        config: config.clone(),
        reps: replicates.len(),
        failures,
        summaries,
        replicates,
    })
}

/// Runs every `(n, p, zeta)` cell of a lattice with the other settings taken from `base`.
pub fn run_lattice(base: &ScenarioConfig, ns: &[usize], ps: &[usize], zetas: &[f64]) -> Result<Vec<ReplicationReport>> {
    let mut out = Vec::with_capacity(ns.len() * ps.len() * zetas.len());
    for &zeta in zetas {
        for &n in ns {
            for &p in ps {
                let cfg = ScenarioConfig {
                    n,
                    p,
                    zeta,
                    alpha: None,
                    ..base.clone()
                };
                out.push(run_replications(&cfg)?);
            }
        }
    }
    Ok(out)
}

/// Long-format CSV: one row per cell, method and metric.
pub fn report_csv(reports: &[ReplicationReport]) -> String {
    let mut out = String::from("n,p,zeta,method,metric,mean,sd,reps,failures,seed\n");
    for r in reports {
        for s in &r.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.17e},{:.17e},{},{},{}",
                r.config.n, r.config.p, r.config.zeta, s.method, s.metric, s.mean, s.sd, r.reps, r.failures, r.config.seed
            );
        }
    }
    out
}

fn cell(r: &ReplicationReport, method: &str, metric: &str) -> String {
    match r.get(method, metric) {
        Some(s) => format!("{:.3} ({:.3})", s.mean, s.sd),
        None => "-".into(),
    }
}

/// Aligned text tables: R² and test MSE per method, then coefficient estimation error.
pub fn report_tables(reports: &[ReplicationReport]) -> String {
    let mut zetas: Vec<f64> = Vec::new();
    for r in reports {
        if !zetas.contains(&r.config.zeta) {
            zetas.push(r.config.zeta);
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "Simulation results: mean (sd) over replicates; R² on train, MSE on test");
    for &z in &zetas {
        let _ = writeln!(out, "\nzeta = {z}");
        let _ = writeln!(
            out,
            "{:>6} {:>4}  {:>15} {:>15}  {:>15} {:>15}",
            "n", "p", "DIDO R²", "DIDO Test MSE", "LR R²", "LR Test MSE"
        );
        for r in reports.iter().filter(|r| r.config.zeta == z) {
            let _ = writeln!(
                out,
                "{:>6} {:>4}  {:>15} {:>15}  {:>15} {:>15}",
                r.config.n,
                r.config.p,
                cell(r, "dido", "r2_train"),
                cell(r, "dido", "mse_test"),
                cell(r, "lr", "r2_train"),
                cell(r, "lr", "mse_test"),
            );
        }
    }
    let _ = writeln!(out, "\nCoefficient estimation error: mean (sd)");
    let mut header = format!("{:>6} {:>4}", "n", "p");
    for z in &zetas {
        let _ = write!(header, "  {:>15}", format!("zeta={z}"));
    }
    let _ = writeln!(out, "{header}");
    let mut seen: Vec<(usize, usize)> = Vec::new();
    for r in reports {
        let key = (r.config.n, r.config.p);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let mut line = format!("{:>6} {:>4}", key.0, key.1);
        for &z in &zetas {
            let c = reports
                .iter()
                .find(|x| (x.config.n, x.config.p) == key && x.config.zeta == z)
                .map_or("-".into(), |x| cell(x, "dido", "cee"));
            let _ = write!(line, "  {c:>15}");
        }
        let _ = writeln!(out, "{line}");
    }
    out
}
