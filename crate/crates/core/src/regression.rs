//! Fréchet least-squares fitting of the distribution-in-distribution-out model
//! for measures on a quantile grid.
//!
//! With barycenters `mu_bar_j` (predictors) and `nu_bar` (response), each
//! predictor contributes the displacement `q_{mu_ij} - q_{mu_bar_j}`, parallel
//! transported to `nu_bar`. The model predicts
//!
//! ```text
//! q_hat_i = q_{nu_bar} + sum_j alpha_j (q_{mu_ij} - q_{mu_bar_j})
//! ```
//!
//! and `alpha` solves `Sigma alpha = C` where `Sigma` and `C` are the sample
//! Wasserstein covariances of those displacements.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, SymMatrix};
use crate::measures::{barycenter, w2_distance, Measure, QuantileMeasure};
use crate::transport::{
    odot_direct, oplus, optimal_map, parallel_transport, pushforward, MonotoneMode, Pushforward,
    TangentMap,
};

/// `N` samples of `p` predictor measures and one response measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DidoDataset<M> {
    predictors: Vec<Vec<M>>,
    responses: Vec<M>,
    names: Vec<String>,
}

impl<M: Measure> DidoDataset<M> {
    /// `predictors[i]` holds the `p` predictor measures of sample `i`.
    pub fn new(predictors: Vec<Vec<M>>, responses: Vec<M>, names: Vec<String>) -> Result<Self> {
        let n = predictors.len();
        if n < 2 {
            return Err(Error::ShapeMismatch(format!("need at least 2 samples, got {n}")));
        }
        if responses.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} predictor rows but {} responses",
                responses.len()
            )));
        }
        let p = names.len();
        if p == 0 {
            return Err(Error::ShapeMismatch("need at least one predictor".into()));
        }
        if let Some(i) = predictors.iter().position(|r| r.len() != p) {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} has {} predictors, expected {p}",
                predictors[i].len()
            )));
        }
        let grid = responses[0].grid_size();
        for m in predictors.iter().flatten().chain(&responses) {
            let g = m.grid_size();
            if g != grid {
                return Err(Error::GridMismatch {
                    left: grid.unwrap_or(0),
                    right: g.unwrap_or(0),
                });
            }
        }
        Ok(Self {
            predictors,
            responses,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn num_predictors(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn predictors(&self) -> &[Vec<M>] {
        &self.predictors
    }

    pub fn responses(&self) -> &[M] {
        &self.responses
    }

    /// Column `j` across samples.
    pub fn predictor_column(&self, j: usize) -> Vec<M>
    where
        M: Clone,
    {
        self.predictors.iter().map(|r| r[j].clone()).collect()
    }

    /// Same samples with predictor columns reordered by `order`.
    pub fn permute_predictors(&self, order: &[usize]) -> Result<Self>
    where
        M: Clone,
    {
        let mut seen = vec![false; self.num_predictors()];
        if order.len() != seen.len() || order.iter().any(|&j| j >= seen.len() || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::ShapeMismatch("order is not a permutation".into()));
        }
        let predictors = self
            .predictors
            .iter()
            .map(|r| order.iter().map(|&j| r[j].clone()).collect())
            .collect();
        let names = order.iter().map(|&j| self.names[j].clone()).collect();
        Self::new(predictors, self.responses.clone(), names)
    }

    pub fn grid_size(&self) -> Option<usize> {
        self.responses[0].grid_size()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub ridge: f64,
    pub mode: MonotoneMode,
    /// Solve in units of each predictor's Fréchet standard deviation; alpha is reported on the original scale.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            mode: MonotoneMode::Project,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_samples: usize,
    pub r2: f64,
    pub adjusted_r2: Option<f64>,
    /// Mean squared residual distance.
    pub residual_variance: f64,
    /// Training predictions that needed a monotone projection (quantile) or a std clamp (Gaussian).
    pub corrected_count: usize,
    pub jittered: bool,
    pub degenerate_response: bool,
    /// Set when `N <= p`.
    pub few_samples: bool,
}

impl Diagnostics {
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.jittered {
            w.push("normal system needed diagonal jitter".to_string());
        }
        if self.degenerate_response {
            w.push("responses have zero Fréchet variance; R² reported as 1".to_string());
        }
        if self.few_samples {
            w.push("sample count does not exceed predictor count".to_string());
        }
        if self.corrected_count > 0 {
            w.push(format!(
                "{} training predictions left the measure space and were corrected",
                self.corrected_count
            ));
        }
        w
    }
}

/// Fitted model for quantile-grid measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidoModel {
    pub alpha: Vec<f64>,
    pub predictor_names: Vec<String>,
    pub grid_size: usize,
    pub pred_barycenters: Vec<QuantileMeasure>,
    pub resp_barycenter: QuantileMeasure,
    pub diagnostics: Diagnostics,
}

/// Sample Wasserstein covariance of two families of displacement profiles
/// already expressed at a common base.
pub fn wasserstein_cov(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} displacement profiles",
            a.len(),
            b.len()
        )));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::ShapeMismatch("profiles on different grids".into()));
        }
        total += x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() / x.len() as f64;
    }
    Ok(total / a.len() as f64)
}

/// Barycenters and the displacement profiles at the response barycenter.
struct Displacements {
    pred_barycenters: Vec<QuantileMeasure>,
    resp_barycenter: Arc<QuantileMeasure>,
    /// `predictors[j][i]`: predictor `j` of sample `i`, transported to `nu_bar`.
    predictors: Vec<Vec<Vec<f64>>>,
    /// `responses[i]`: optimal map from `nu_bar` to `nu_i`.
    responses: Vec<Vec<f64>>,
}

fn displacements(data: &DidoDataset<QuantileMeasure>) -> Result<Displacements> {
    let resp_barycenter = Arc::new(barycenter(data.responses())?);
    let responses = data
        .responses()
        .iter()
        .map(|nu| optimal_map(nu, Arc::clone(&resp_barycenter)).map(|t| t.displacements().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut pred_barycenters = Vec::with_capacity(data.num_predictors());
    let mut predictors = Vec::with_capacity(data.num_predictors());
    for j in 0..data.num_predictors() {
        let column = data.predictor_column(j);
        let bar = Arc::new(barycenter(&column)?);
        let profiles = column
            .iter()
            .map(|mu| {
                let at_mu_bar = optimal_map(mu, Arc::clone(&bar))?;
                parallel_transport(&at_mu_bar, Arc::clone(&resp_barycenter))
                    .map(|t| t.displacements().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        pred_barycenters.push(Arc::unwrap_or_clone(bar));
        predictors.push(profiles);
    }
    Ok(Displacements {
        pred_barycenters,
        resp_barycenter,
        predictors,
        responses,
    })
}

fn normal_system(d: &Displacements) -> Result<(SymMatrix, Vec<f64>)> {
    let p = d.predictors.len();
    let mut sigma = SymMatrix::zeros(p);
    let mut c = vec![0.0; p];
    for j in 0..p {
        for k in 0..=j {
            let v = wasserstein_cov(&d.predictors[j], &d.predictors[k])?;
            sigma[(j, k)] = v;
            sigma[(k, j)] = v;
        }
        c[j] = wasserstein_cov(&d.predictors[j], &d.responses)?;
    }
    Ok((sigma, c))
}

/// Wasserstein covariance matrix of the predictors and cross-covariance with the response.
pub fn build_normal_system(data: &DidoDataset<QuantileMeasure>) -> Result<(SymMatrix, Vec<f64>)> {
    normal_system(&displacements(data)?)
}

/// Solves `Sigma alpha = C` with optional ridge and standardization.
/// Returns `(alpha, jittered)`.
pub(crate) fn solve_coefficients(
    sigma: &SymMatrix,
    c: &[f64],
    options: &FitOptions,
) -> Result<(Vec<f64>, bool)> {
    if !options.standardize {
        let sol = solve_spd(sigma, c, options.ridge)?;
        return Ok((sol.x, sol.jittered));
    }
    let p = sigma.dim();
    let scale: Vec<f64> = (0..p).map(|j| sigma[(j, j)].sqrt()).collect();
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::SingularSystem);
    }
    let mut scaled = SymMatrix::zeros(p);
    for j in 0..p {
        for k in 0..p {
            scaled[(j, k)] = sigma[(j, k)] / (scale[j] * scale[k]);
        }
    }
    let rhs: Vec<f64> = c.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let sol = solve_spd(&scaled, &rhs, options.ridge)?;
    Ok((sol.x.iter().zip(&scale).map(|(a, s)| a / s).collect(), sol.jittered))
}

pub(crate) fn adjusted(r2: f64, n: usize, p: usize) -> Option<f64> {
    if n > p + 1 {
        Some(1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0))
    } else {
        None
    }
}

/// Estimates the model by Fréchet least squares.
pub fn fit(data: &DidoDataset<QuantileMeasure>, options: &FitOptions) -> Result<DidoModel> {
    let d = displacements(data)?;
    let (sigma, c) = normal_system(&d)?;
    let (alpha, jittered) = solve_coefficients(&sigma, &c, options)?;
    let mut model = DidoModel {
        alpha,
        predictor_names: data.names().to_vec(),
        grid_size: d.resp_barycenter.grid().size(),
        pred_barycenters: d.pred_barycenters,
        resp_barycenter: Arc::unwrap_or_clone(d.resp_barycenter),
        diagnostics: Diagnostics {
            n_samples: data.len(),
            r2: f64::NAN,
            adjusted_r2: None,
            residual_variance: f64::NAN,
            corrected_count: 0,
            jittered,
            degenerate_response: false,
            few_samples: data.len() <= data.num_predictors(),
        },
    };
    let gof = goodness_of_fit(&model, data)?;
    model.diagnostics.r2 = gof.r2;
    model.diagnostics.adjusted_r2 = gof.adjusted_r2;
    model.diagnostics.residual_variance = gof.residual_variance;
    model.diagnostics.corrected_count = gof.corrected_count;
    model.diagnostics.degenerate_response = gof.degenerate_response;
    Ok(model)
}

impl DidoModel {
    fn check_predictors(&self, predictors: &[QuantileMeasure]) -> Result<()> {
        if predictors.len() != self.alpha.len() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} predictors, got {}",
                self.alpha.len(),
                predictors.len()
            )));
        }
        for m in predictors {
            self.resp_barycenter.grid().check(&m.grid())?;
        }
        Ok(())
    }

    /// The chain `T_{i0}` after each predictor has been added:
    /// `id ⊕ alpha_1 ⊙ T_1 ⊕ ... ⊕ alpha_j ⊙ T_j` at `nu_bar`, for `j = 1..=p`.
    pub fn partial_maps(&self, predictors: &[QuantileMeasure]) -> Result<Vec<TangentMap>> {
        self.check_predictors(predictors)?;
        let base = Arc::new(self.resp_barycenter.clone());
        let mut acc = TangentMap::identity(Arc::clone(&base));
        let mut out = Vec::with_capacity(predictors.len());
        for ((mu, bar), &a) in predictors.iter().zip(&self.pred_barycenters).zip(&self.alpha) {
            let at_bar = optimal_map(mu, Arc::new(bar.clone()))?;
            let moved = parallel_transport(&at_bar, Arc::clone(&base))?;
            acc = oplus(&acc, &odot_direct(a, &moved))?;
            out.push(acc.clone());
        }
        Ok(out)
    }
}

/// Predicted response measure for one sample.
pub fn predict(
    model: &DidoModel,
    predictors: &[QuantileMeasure],
    mode: MonotoneMode,
) -> Result<Pushforward> {
    let maps = model.partial_maps(predictors)?;
    let last = maps.last().ok_or(Error::EmptyInput)?;
    pushforward(last, mode)
}

/// Cumulative predictions after each predictor, in column order; the last one equals [`predict`].
pub fn partial_predictions(
    model: &DidoModel,
    predictors: &[QuantileMeasure],
    mode: MonotoneMode,
) -> Result<Vec<Pushforward>> {
    model
        .partial_maps(predictors)?
        .iter()
        .map(|m| pushforward(m, mode))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    /// Optimal map from the prediction to the observed response, based at the prediction.
    pub map: TangentMap,
    /// Squared distance between response and prediction.
    pub squared: f64,
    pub projected: bool,
}

pub fn residual_map(
    model: &DidoModel,
    predictors: &[QuantileMeasure],
    response: &QuantileMeasure,
    mode: MonotoneMode,
) -> Result<Residual> {
    let pred = predict(model, predictors, mode)?;
    let map = optimal_map(response, Arc::new(pred.measure))?;
    let squared = w2_distance(response, map.base())?;
    Ok(Residual {
        map,
        squared,
        projected: pred.projected,
    })
}

/// R² and friends evaluated on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    pub r2: f64,
    pub adjusted_r2: Option<f64>,
    pub residual_variance: f64,
    pub corrected_count: usize,
    pub degenerate_response: bool,
}

/// Degenerate responses (zero total variation) report R² = 1 with the flag set.
pub(crate) fn summarize(
    residual_ss: f64,
    total_ss: f64,
    n: usize,
    p: usize,
    corrected_count: usize,
) -> GoodnessOfFit {
    let degenerate_response = total_ss == 0.0;
    let r2 = if degenerate_response {
        1.0
    } else {
        1.0 - residual_ss / total_ss
    };
    GoodnessOfFit {
        r2,
        adjusted_r2: adjusted(r2, n, p),
        residual_variance: residual_ss / n as f64,
        corrected_count,
        degenerate_response,
    }
}

/// Goodness of fit using projected predictions; the reference barycenter is the
/// model's `nu_bar`.
pub fn goodness_of_fit(model: &DidoModel, data: &DidoDataset<QuantileMeasure>) -> Result<GoodnessOfFit> {
    let mut rss = 0.0;
    let mut tss = 0.0;
    let mut corrected = 0;
    for (row, nu) in data.predictors().iter().zip(data.responses()) {
        let pred = predict(model, row, MonotoneMode::Project)?;
        corrected += pred.projected as usize;
        rss += w2_distance(nu, &pred.measure)?;
        tss += w2_distance(nu, &model.resp_barycenter)?;
    }
    Ok(summarize(rss, tss, data.len(), model.alpha.len(), corrected))
}

/// `1 - sum d²(nu_i, nu_hat_i) / sum d²(nu_i, nu_bar)`.
pub fn r_squared(model: &DidoModel, data: &DidoDataset<QuantileMeasure>) -> Result<f64> {
    let g = goodness_of_fit(model, data)?;
    if g.degenerate_response {
        return Err(Error::DegenerateResponse);
    }
    Ok(g.r2)
}

/// `1 - (1 - R²)(N - 1)/(N - p - 1)`.
pub fn adjusted_r_squared(model: &DidoModel, data: &DidoDataset<QuantileMeasure>) -> Result<f64> {
    let r2 = r_squared(model, data)?;
    adjusted(r2, data.len(), model.alpha.len()).ok_or_else(|| {
        Error::PreconditionViolated("adjusted R² needs more samples than predictors plus one".into())
    })
}

/// Half the mean squared distance between responses and unprojected predictions.
pub fn frechet_ls_objective(data: &DidoDataset<QuantileMeasure>, alpha: &[f64]) -> Result<f64> {
    let d = displacements(data)?;
    objective_from(&d, alpha)
}

fn objective_from(d: &Displacements, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != d.predictors.len() {
        return Err(Error::ShapeMismatch("alpha length".into()));
    }
    let n = d.responses.len();
    let k = d.resp_barycenter.grid().size();
    let mut total = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for node in 0..k {
            let mut fitted = 0.0;
            for (j, a) in alpha.iter().enumerate() {
                fitted += a * d.predictors[j][i][node];
            }
            let e = fitted - d.responses[i][node];
            s += e * e;
        }
        total += s / k as f64;
    }
    Ok(0.5 * total / n as f64)
}

/// Analytic gradient `Sigma alpha - C` of [`frechet_ls_objective`].
pub fn frechet_ls_gradient(data: &DidoDataset<QuantileMeasure>, alpha: &[f64]) -> Result<Vec<f64>> {
    let (sigma, c) = build_normal_system(data)?;
    if alpha.len() != c.len() {
        return Err(Error::ShapeMismatch("alpha length".into()));
    }
    Ok(sigma.mul_vec(alpha).iter().zip(&c).map(|(s, c)| s - c).collect())
}
