//! Tangent maps at a base measure: addition, scalar multiplication, parallel
//! transport and pushforward with monotone projection.
//!
//! cargo run --example transport_arithmetic

use std::sync::Arc;

use dido::measures::{gaussian_quantiles, GaussianMeasure, QuantileGrid};
use dido::transport::{
    odot_decomposed, odot_direct, oplus, optimal_map, parallel_transport, pushforward, MonotoneMode,
};

fn main() -> dido::Result<()> {
    let grid = QuantileGrid::new(200)?;
    let q = |m, s| -> dido::Result<_> { Ok(gaussian_quantiles(&GaussianMeasure::new(m, s)?, grid)) };

    let base = Arc::new(q(0.0, 1.0)?);
    let to_wide = optimal_map(&q(2.0, 3.0)?, Arc::clone(&base))?;
    let to_left = optimal_map(&q(-1.0, 1.0)?, Arc::clone(&base))?;

    let sum = oplus(&to_wide, &to_left)?;
    let pushed = pushforward(&sum, MonotoneMode::Strict)?.measure;
    println!("(wide ⊕ left) pushes N(0,1) to mean {:.3}", pushed.mean());

    let half = odot_direct(0.5, &to_wide);
    println!("0.5 ⊙ wide pushes N(0,1) to mean {:.3}", pushforward(&half, MonotoneMode::Strict)?.measure.mean());

    let a = 2.7;
    let max_gap = odot_decomposed(a, &to_wide)
        .displacements()
        .iter()
        .zip(odot_direct(a, &to_wide).displacements())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("geodesic decomposition of {a} ⊙ wide differs from direct scaling by {max_gap:.1e}");

    // move a map from N(5,1) to N(0,2)
    let source = Arc::new(q(5.0, 1.0)?);
    let shift = optimal_map(&q(7.0, 1.5)?, source)?;
    let moved = parallel_transport(&shift, Arc::new(q(0.0, 2.0)?))?;
    let image = pushforward(&moved, MonotoneMode::Strict)?.measure;
    println!("transported map sends N(0,2) to mean {:.3}", image.mean());

    // a strong negative multiple reverses the order of quantiles
    let reversed = odot_direct(-1.0, &to_wide);
    match pushforward(&reversed, MonotoneMode::Strict) {
        Ok(_) => println!("-1 ⊙ wide stayed monotone"),
        Err(e) => println!("strict pushforward: {e}"),
    }
    let projected = pushforward(&reversed, MonotoneMode::Project)?;
    println!("projected pushforward: projected = {}, mean {:.3}", projected.projected, projected.measure.mean());
    Ok(())
}
