//! Closed-form model for Gaussian predictors and responses.
//!
//! For Gaussians the optimal maps are affine and every displacement profile is
//! `(m - m_bar) + (s - s_bar) z`, so the Wasserstein covariances reduce to sums
//! of products of mean and std deviations from the barycenter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols, SymMatrix};
use crate::measures::{barycenter_gaussian, w2_gaussian, GaussianMeasure};
use crate::regression::{solve_coefficients, summarize, DidoDataset, Diagnostics, FitOptions, GoodnessOfFit};

/// Std assigned to a prediction whose linear std is not positive, in clamp mode.
pub const CLAMPED_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    Strict,
    #[default]
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussDidoModel {
    pub alpha: Vec<f64>,
    pub predictor_names: Vec<String>,
    pub pred_barycenters: Vec<GaussianMeasure>,
    pub resp_barycenter: GaussianMeasure,
    pub diagnostics: Diagnostics,
}

fn normal_system(
    data: &DidoDataset<GaussianMeasure>,
) -> Result<(Vec<GaussianMeasure>, GaussianMeasure, SymMatrix, Vec<f64>)> {
    let p = data.num_predictors();
    let n = data.len() as f64;
    let bars: Vec<GaussianMeasure> = (0..p)
        .map(|j| barycenter_gaussian(&data.predictor_column(j)))
        .collect::<Result<_>>()?;
    let resp_bar = barycenter_gaussian(data.responses())?;
    let mut sigma = SymMatrix::zeros(p);
    let mut c = vec![0.0; p];
    for (row, nu) in data.predictors().iter().zip(data.responses()) {
        let dm: Vec<f64> = row.iter().zip(&bars).map(|(g, b)| g.mean() - b.mean()).collect();
        let ds: Vec<f64> = row.iter().zip(&bars).map(|(g, b)| g.std() - b.std()).collect();
        let rn = nu.mean() - resp_bar.mean();
        let rs = nu.std() - resp_bar.std();
        for j in 0..p {
            for k in 0..=j {
                sigma[(j, k)] += dm[j] * dm[k] + ds[j] * ds[k];
            }
            c[j] += dm[j] * rn + ds[j] * rs;
        }
    }
    for j in 0..p {
        for k in 0..=j {
            let v = sigma[(j, k)] / n;
            sigma[(j, k)] = v;
            sigma[(k, j)] = v;
        }
        c[j] /= n;
    }
    Ok((bars, resp_bar, sigma, c))
}

/// Wasserstein covariance matrix and cross-covariance vector in closed form.
pub fn gauss_normal_system(data: &DidoDataset<GaussianMeasure>) -> Result<(SymMatrix, Vec<f64>)> {
    normal_system(data).map(|(_, _, s, c)| (s, c))
}

pub fn gauss_fit(data: &DidoDataset<GaussianMeasure>, options: &FitOptions) -> Result<GaussDidoModel> {
    let (bars, resp_bar, sigma, c) = normal_system(data)?;
    let (alpha, jittered) = solve_coefficients(&sigma, &c, options)?;
    let mut model = GaussDidoModel {
        alpha,
        predictor_names: data.names().to_vec(),
        pred_barycenters: bars,
        resp_barycenter: resp_bar,
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
    let gof = gauss_goodness_of_fit(&model, data)?;
    model.diagnostics.r2 = gof.r2;
    model.diagnostics.adjusted_r2 = gof.adjusted_r2;
    model.diagnostics.residual_variance = gof.residual_variance;
    model.diagnostics.corrected_count = gof.corrected_count;
    model.diagnostics.degenerate_response = gof.degenerate_response;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPrediction {
    pub measure: GaussianMeasure,
    pub clamped: bool,
}

fn finish(mean: f64, std: f64, mode: StdMode) -> Result<GaussPrediction> {
    if std > 0.0 {
        return Ok(GaussPrediction {
            measure: GaussianMeasure::new(mean, std)?,
            clamped: false,
        });
    }
    match mode {
        StdMode::Strict => Err(Error::NotAMeasure { node: 0 }),
        StdMode::Clamp => Ok(GaussPrediction {
            measure: GaussianMeasure::new(mean, CLAMPED_STD)?,
            clamped: true,
        }),
    }
}

impl GaussDidoModel {
    /// Unclamped `(mean, std)` after adding each predictor's term in column order.
    pub fn partial_parameters(&self, predictors: &[GaussianMeasure]) -> Result<Vec<(f64, f64)>> {
        if predictors.len() != self.alpha.len() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} predictors, got {}",
                self.alpha.len(),
                predictors.len()
            )));
        }
        let mut mean = self.resp_barycenter.mean();
        let mut std = self.resp_barycenter.std();
        let mut out = Vec::with_capacity(predictors.len());
        for ((g, bar), a) in predictors.iter().zip(&self.pred_barycenters).zip(&self.alpha) {
            mean += a * (g.mean() - bar.mean());
            std += a * (g.std() - bar.std());
            out.push((mean, std));
        }
        Ok(out)
    }
}

/// `N(n_bar + sum a_j (m_j - m_bar_j), (eta_bar + sum a_j (s_j - s_bar_j))^2)`.
pub fn gauss_predict(
    model: &GaussDidoModel,
    predictors: &[GaussianMeasure],
    mode: StdMode,
) -> Result<GaussPrediction> {
    let params = model.partial_parameters(predictors)?;
    let &(mean, std) = params.last().ok_or(Error::EmptyInput)?;
    finish(mean, std, mode)
}

pub fn gauss_partial_predictions(
    model: &GaussDidoModel,
    predictors: &[GaussianMeasure],
    mode: StdMode,
) -> Result<Vec<GaussPrediction>> {
    model
        .partial_parameters(predictors)?
        .into_iter()
        .map(|(m, s)| finish(m, s, mode))
        .collect()
}

/// `x -> intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Pushforward of a Gaussian through the map.
    pub fn push(&self, g: &GaussianMeasure) -> Result<GaussianMeasure> {
        GaussianMeasure::new(self.apply(g.mean()), self.slope.abs() * g.std())
    }

    pub fn is_identity(&self) -> bool {
        self.intercept == 0.0 && self.slope == 1.0
    }
}

/// Residual map carrying the (clamped) prediction onto the observed response:
/// `x -> n_i + (eta_i / eta_hat)(x - n_hat)`.
pub fn gauss_residual_map(
    model: &GaussDidoModel,
    predictors: &[GaussianMeasure],
    response: &GaussianMeasure,
) -> Result<AffineMap> {
    let pred = gauss_predict(model, predictors, StdMode::Clamp)?.measure;
    let slope = response.std() / pred.std();
    Ok(AffineMap {
        intercept: response.mean() - slope * pred.mean(),
        slope,
    })
}

pub fn gauss_goodness_of_fit(
    model: &GaussDidoModel,
    data: &DidoDataset<GaussianMeasure>,
) -> Result<GoodnessOfFit> {
    let mut rss = 0.0;
    let mut tss = 0.0;
    let mut clamped = 0;
    for (row, nu) in data.predictors().iter().zip(data.responses()) {
        let pred = gauss_predict(model, row, StdMode::Clamp)?;
        clamped += pred.clamped as usize;
        rss += w2_gaussian(nu, &pred.measure);
        tss += w2_gaussian(nu, &model.resp_barycenter);
    }
    Ok(summarize(rss, tss, data.len(), model.alpha.len(), clamped))
}

/// `1 - sum[(n_hat - n)^2 + (eta_hat - eta)^2] / sum[(n_bar - n)^2 + (eta_bar - eta)^2]`.
pub fn gauss_r_squared(model: &GaussDidoModel, data: &DidoDataset<GaussianMeasure>) -> Result<f64> {
    let g = gauss_goodness_of_fit(model, data)?;
    if g.degenerate_response {
        return Err(Error::DegenerateResponse);
    }
    Ok(g.r2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsReduction {
    pub gauss_alpha: Vec<f64>,
    pub ols_alpha: Vec<f64>,
    pub ols_intercept: f64,
    /// `n_bar - sum alpha_j m_bar_j` from the Gaussian fit.
    pub implied_intercept: f64,
}

impl OlsReduction {
    pub fn max_abs_diff(&self) -> f64 {
        self.gauss_alpha
            .iter()
            .zip(&self.ols_alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn agrees(&self, tol: f64) -> bool {
        self.max_abs_diff() <= tol && (self.ols_intercept - self.implied_intercept).abs() <= tol
    }
}

/// With every std constant per predictor (and for the response), the Gaussian
/// fit must coincide with ordinary least squares of response means on predictor means.
pub fn ols_reduction_check(data: &DidoDataset<GaussianMeasure>) -> Result<OlsReduction> {
    let first = &data.predictors()[0];
    for (i, row) in data.predictors().iter().enumerate() {
        for (j, (g, g0)) in row.iter().zip(first).enumerate() {
            if g.std() != g0.std() {
                return Err(Error::PreconditionViolated(format!(
                    "predictor {j} std varies (sample {i})"
                )));
            }
        }
    }
    let eta0 = data.responses()[0].std();
    if data.responses().iter().any(|g| g.std() != eta0) {
        return Err(Error::PreconditionViolated("response std varies".into()));
    }
    let model = gauss_fit(data, &FitOptions::default())?;
    let features: Vec<Vec<f64>> = data
        .predictors()
        .iter()
        .map(|r| r.iter().map(GaussianMeasure::mean).collect())
        .collect();
    let y: Vec<f64> = data.responses().iter().map(GaussianMeasure::mean).collect();
    let lr = ols(&features, &y)?;
    let implied_intercept = model.resp_barycenter.mean()
        - model
            .alpha
            .iter()
            .zip(&model.pred_barycenters)
            .map(|(a, b)| a * b.mean())
            .sum::<f64>();
    Ok(OlsReduction {
        gauss_alpha: model.alpha,
        ols_alpha: lr.slopes,
        ols_intercept: lr.intercept,
        implied_intercept,
    })
}
