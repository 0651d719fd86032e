//! Fitting the model on nonparametric (quantile grid) measures.
//!
//! cargo run --example quantile_regression

use dido::measures::{estimate_quantile, QuantileGrid};
use dido::regression::{fit, goodness_of_fit, predict, DidoDataset, FitOptions};
use dido::transport::MonotoneMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

fn main() -> dido::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = QuantileGrid::new(400)?;
    let n = 60;

    // predictor 1: shifted exponentials; predictor 2: normals of varying scale.
    // response: comonotone blend 0.7·x1 + 0.4·x2 plus a random shift, which is
    // linear in quantile space.
    let mut predictors = Vec::with_capacity(n);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let shift = rng.random_range(-2.0..2.0);
        let scale = rng.random_range(0.5..2.0);
        let mut x1: Vec<f64> = Exp::new(1.0).unwrap().sample_iter(&mut rng).take(800).map(|v| v + shift).collect();
        let mut x2: Vec<f64> = Normal::new(0.0, scale).unwrap().sample_iter(&mut rng).take(800).collect();
        x1.sort_by(f64::total_cmp);
        x2.sort_by(f64::total_cmp);
        let noise = Normal::new(0.0, 0.2).unwrap().sample(&mut rng);
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 0.7 * a + 0.4 * b + noise).collect();
        predictors.push(vec![estimate_quantile(&x1, grid)?, estimate_quantile(&x2, grid)?]);
        responses.push(estimate_quantile(&y, grid)?);
    }
    let data = DidoDataset::new(predictors, responses, vec!["exp_shift".into(), "normal_scale".into()])?;

    let model = fit(&data, &FitOptions::default())?;
    for (name, a) in model.predictor_names.iter().zip(&model.alpha) {
        println!("alpha[{name}] = {a:+.4}");
    }
    let gof = goodness_of_fit(&model, &data)?;
    println!("R² = {:.4}, adjusted R² = {:.4}", gof.r2, gof.adjusted_r2.unwrap_or(f64::NAN));

    let pred = predict(&model, &data.predictors()[0], MonotoneMode::Project)?;
    println!(
        "first sample: predicted median {:.3}, observed median {:.3}",
        pred.measure.quantiles()[grid.size() / 2],
        data.responses()[0].quantiles()[grid.size() / 2]
    );

    let ridge = fit(&data, &FitOptions { ridge: 0.5, ..Default::default() })?;
    println!("with ridge 0.5: alpha = {:?}", ridge.alpha.iter().map(|a| format!("{a:+.4}")).collect::<Vec<_>>());
    Ok(())
}
