//! Closed-form fitting when every measure is a univariate Gaussian, and the
//! reduction to ordinary least squares when all spreads are equal.
//!
//! cargo run --example gaussian_regression

use dido::gauss::{gauss_fit, gauss_predict, gauss_residual_map, ols_reduction_check, StdMode};
use dido::measures::GaussianMeasure;
use dido::regression::{DidoDataset, FitOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dido::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let alpha = [1.5, -0.8];
    let n = 40;
    let mut preds = Vec::new();
    let mut resp = Vec::new();
    for _ in 0..n {
        let row = vec![
            GaussianMeasure::new(rng.random_range(-2.0..2.0), rng.random_range(1.0..1.5))?,
            GaussianMeasure::new(rng.random_range(0.0..4.0), rng.random_range(0.5..1.0))?,
        ];
        let mean = 3.0 + alpha[0] * row[0].mean() + alpha[1] * row[1].mean() + rng.random_range(-0.1..0.1);
        let std = 2.0 + alpha[0] * row[0].std() + alpha[1] * row[1].std();
        resp.push(GaussianMeasure::new(mean, std)?);
        preds.push(row);
    }
    let data = DidoDataset::new(preds, resp, vec!["a".into(), "b".into()])?;
    let model = gauss_fit(&data, &FitOptions::default())?;
    println!("planted alpha {alpha:?}, fitted [{:.4}, {:.4}]", model.alpha[0], model.alpha[1]);
    println!("R² = {:.5}", model.diagnostics.r2);

    let row = &data.predictors()[0];
    let pred = gauss_predict(&model, row, StdMode::Clamp)?;
    println!("prediction for sample 0: N({:.3}, {:.3}²)", pred.measure.mean(), pred.measure.std());
    let residual = gauss_residual_map(&model, row, &data.responses()[0])?;
    println!("residual map: x -> {:.4} + {:.4} x", residual.intercept, residual.slope);

    // equal spreads: the coefficients are plain least-squares slopes on the means
    let flat: Vec<Vec<GaussianMeasure>> = data
        .predictors()
        .iter()
        .map(|r| r.iter().map(|g| GaussianMeasure::new(g.mean(), 1.0)).collect())
        .collect::<dido::Result<_>>()?;
    let flat_resp: Vec<GaussianMeasure> = data
        .responses()
        .iter()
        .map(|g| GaussianMeasure::new(g.mean(), 2.0))
        .collect::<dido::Result<_>>()?;
    let flat = DidoDataset::new(flat, flat_resp, data.names().to_vec())?;
    let check = ols_reduction_check(&flat)?;
    println!(
        "equal spreads: Gaussian alpha {:?} vs OLS {:?} (max diff {:.1e})",
        check.gauss_alpha,
        check.ols_alpha,
        check.max_abs_diff()
    );
    Ok(())
}
