//! Estimating measures from samples, Wasserstein distances and barycenters.
//!
//! cargo run --example distances

use dido::measures::{
    barycenter, barycenter_gaussian, estimate_gaussian, estimate_quantile, frechet_variance, gaussian_quantiles,
    w2_distance, w2_gaussian, GaussianMeasure, QuantileGrid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

fn main() -> dido::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = QuantileGrid::new(500)?;

    let normal: Vec<f64> = Normal::new(2.0, 1.5).unwrap().sample_iter(&mut rng).take(5000).collect();
    let skewed: Vec<f64> = Gamma::new(2.0, 1.0).unwrap().sample_iter(&mut rng).take(5000).collect();

    let g = estimate_gaussian(&normal)?;
    println!("Gaussian fit to normal samples: mean {:.3}, std {:.3}", g.mean(), g.std());

    let qn = estimate_quantile(&normal, grid)?;
    let qs = estimate_quantile(&skewed, grid)?;
    println!("squared W2(normal, gamma) on the grid: {:.4}", w2_distance(&qn, &qs)?);

    // closed form vs grid for two Gaussians
    let a = GaussianMeasure::new(0.0, 1.0)?;
    let b = GaussianMeasure::new(3.0, 2.0)?;
    let on_grid = w2_distance(&gaussian_quantiles(&a, grid), &gaussian_quantiles(&b, grid))?;
    println!("squared W2(N(0,1), N(3,4)): closed form {:.4}, grid {:.4}", w2_gaussian(&a, &b), on_grid);

    let bar = barycenter_gaussian(&[a, b])?;
    println!("Gaussian barycenter: N({:.2}, {:.2}²)", bar.mean(), bar.std());

    let qbar = barycenter(&[qn.clone(), qs.clone()])?;
    println!(
        "quantile barycenter median {:.3}, Fréchet variance of the pair {:.4}",
        qbar.quantiles()[grid.size() / 2],
        frechet_variance(&[qn, qs])?
    );
    Ok(())
}
