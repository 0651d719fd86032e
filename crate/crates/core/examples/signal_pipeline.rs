//! From raw multichannel signals to a fitted model and a trajectory export:
//! window the signals, fit, predict and write the cumulative prediction path.
//!
//! cargo run --example signal_pipeline

use std::fmt::Write as _;
use std::fs;

use dido::cli::{self, IngestOptions, Mode};
use dido::regression::FitOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> dido::Result<()> {
    let dir = std::env::temp_dir().join("dido_signal_pipeline");
    fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // three channels sampled at 1 Hz; the response tracks 0.6·pressure - 0.3·rate
    let mut csv = String::from("time,pressure,rate,flow\n");
    for w in 0..40 {
        let pm = rng.random_range(60.0..100.0);
        let ps = rng.random_range(3.0..6.0);
        let rm = rng.random_range(50.0..90.0);
        let rs = rng.random_range(2.0..4.0);
        let (fm, fs_) = (5.0 + 0.6 * (pm - 80.0) - 0.3 * (rm - 70.0), 6.0 + 0.6 * (ps - 4.5) - 0.3 * (rs - 3.0));
        let (p, r, f) = (Normal::new(pm, ps).unwrap(), Normal::new(rm, rs).unwrap(), Normal::new(fm, fs_).unwrap());
        for t in 0..120 {
            let _ = writeln!(csv, "{},{},{},{}", w * 120 + t, p.sample(&mut rng), r.sample(&mut rng), f.sample(&mut rng));
        }
    }
    let signal = dir.join("signal.csv");
    fs::write(&signal, csv)?;

    let dataset = dir.join("windows.csv");
    let report = cli::cmd_ingest(&signal, &IngestOptions { window_seconds: 120.0, ..Default::default() }, Some(&dataset))?;
    println!("{} windows -> {} dataset rows", report.windows, report.rows);

    let model = dir.join("model.json");
    print!("{}", cli::cmd_fit(&dataset, &FitOptions::default(), None, Some(5), Some(&model))?);

    let preds = cli::cmd_predict(&model, &dataset, Mode::Clamp, Some(&dir.join("predictions.csv")))?;
    println!("mean squared residual {:.4}", preds.mean_residual_sq().unwrap_or(f64::NAN));

    let curves = cli::cmd_trajectory(&model, &dataset, Some("3"), 200, Mode::Clamp, Some(&dir.join("trajectory.csv")))?;
    let labels: Vec<&str> = curves.iter().map(|c| c.label.as_str()).collect();
    println!("trajectory curves: {labels:?}");
    println!("files written to {}", dir.display());
    Ok(())
}
