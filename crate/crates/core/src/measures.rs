//! Univariate probability measures in quantile coordinates.
//!
//! Two representations are supported. [`QuantileMeasure`] stores a quantile
//! function sampled at the midpoints `t_k = (k - 0.5) / K` of a [`QuantileGrid`];
//! every integral over `(0, 1)` becomes a midpoint sum over those nodes.
//! [`GaussianMeasure`] stores `(mean, std)` and admits closed forms for the
//! distance and the barycenter.
//!
//! All distances are returned squared.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Default number of quantile nodes.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// Standard normal quantile function.
pub fn probit(t: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * t)
}

/// Midpoint grid over `(0, 1)`. Two grids are the same grid iff they have the same size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantileGrid {
    size: usize,
}

impl QuantileGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig(format!(
                "quantile grid needs at least 2 nodes, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Probability level of node `k` (0-based).
    pub fn node(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.size as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.size).map(|k| self.node(k))
    }

    pub(crate) fn check(&self, other: &QuantileGrid) -> Result<()> {
        if self.size != other.size {
            return Err(Error::GridMismatch {
                left: self.size,
                right: other.size,
            });
        }
        Ok(())
    }
}

/// A measure given by its quantile function on a [`QuantileGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileMeasure {
    grid: QuantileGrid,
    q: Vec<f64>,
}

impl QuantileMeasure {
    /// Builds a measure from quantile values; they must be finite and non-decreasing.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        let grid = QuantileGrid::new(q.len())?;
        if let Some(k) = q.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite quantile at node {k}")));
        }
        if let Some(k) = first_decrease(&q) {
            return Err(Error::NotAMeasure { node: k });
        }
        Ok(Self { grid, q })
    }

    /// Point mass at `value`.
    pub fn dirac(value: f64, grid: QuantileGrid) -> Self {
        Self {
            grid,
            q: vec![value; grid.size()],
        }
    }

    pub(crate) fn from_sorted_unchecked(q: Vec<f64>) -> Self {
        debug_assert!(first_decrease(&q).is_none());
        Self {
            grid: QuantileGrid { size: q.len() },
            q,
        }
    }

    pub fn grid(&self) -> QuantileGrid {
        self.grid
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.q
    }

    pub fn is_point_mass(&self) -> bool {
        self.q.first() == self.q.last()
    }

    /// Mean of the measure (midpoint rule).
    pub fn mean(&self) -> f64 {
        self.q.iter().sum::<f64>() / self.q.len() as f64
    }
}

impl TryFrom<Vec<f64>> for QuantileMeasure {
    type Error = Error;

    fn try_from(q: Vec<f64>) -> Result<Self> {
        QuantileMeasure::new(q)
    }
}

impl From<QuantileMeasure> for Vec<f64> {
    fn from(m: QuantileMeasure) -> Self {
        m.q
    }
}

pub(crate) fn first_decrease(q: &[f64]) -> Option<usize> {
    q.windows(2).position(|w| w[1] < w[0]).map(|k| k + 1)
}

/// Normal measure `N(mean, std^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeasure {
    mean: f64,
    std: f64,
}

impl GaussianMeasure {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
            return Err(Error::InvalidMeasure(format!(
                "gaussian needs finite mean and positive std, got ({mean}, {std})"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }
}

/// Quantiles `m + std * probit(t_k)` of a Gaussian on `grid`.
pub fn gaussian_quantiles(g: &GaussianMeasure, grid: QuantileGrid) -> QuantileMeasure {
    let q = grid.nodes().map(|t| g.mean + g.std * probit(t)).collect();
    QuantileMeasure::from_sorted_unchecked(q)
}

fn check_finite(samples: &[f64]) -> Result<()> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample value".into()));
    }
    Ok(())
}

/// Sample mean and sample standard deviation (divisor `N - 1`).
pub fn estimate_gaussian(samples: &[f64]) -> Result<GaussianMeasure> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    check_finite(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let std = (ss / (n - 1.0)).sqrt();
    if std <= 0.0 {
        return Err(Error::DegenerateSample("zero variance".into()));
    }
    GaussianMeasure::new(mean, std)
}

/// Empirical quantiles with linear interpolation between order statistics.
///
/// A constant sample yields a point mass (see [`QuantileMeasure::is_point_mass`]).
pub fn estimate_quantile(samples: &[f64], grid: QuantileGrid) -> Result<QuantileMeasure> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    check_finite(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = sorted.len() - 1;
    let mut q: Vec<f64> = grid
        .nodes()
        .map(|t| {
            let h = t * last as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(last);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect();
    // interpolation can round below the previous node when neighbours are equal
    for k in 1..q.len() {
        if q[k] < q[k - 1] {
            q[k] = q[k - 1];
        }
    }
    Ok(QuantileMeasure::from_sorted_unchecked(q))
}

/// Squared 2-Wasserstein distance on the shared grid.
pub fn w2_distance(a: &QuantileMeasure, b: &QuantileMeasure) -> Result<f64> {
    a.grid.check(&b.grid)?;
    let k = a.q.len() as f64;
    Ok(a.q.iter().zip(&b.q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / k)
}

/// Squared 2-Wasserstein distance between Gaussians: `(dm)^2 + (dstd)^2`.
pub fn w2_gaussian(a: &GaussianMeasure, b: &GaussianMeasure) -> f64 {
    let dm = a.mean - b.mean;
    let ds = a.std - b.std;
    dm * dm + ds * ds
}

/// Unsquared distance, for display.
pub fn w2_distance_sqrt(a: &QuantileMeasure, b: &QuantileMeasure) -> Result<f64> {
    w2_distance(a, b).map(f64::sqrt)
}

/// Fréchet barycenter: the pointwise quantile average.
pub fn barycenter(measures: &[QuantileMeasure]) -> Result<QuantileMeasure> {
    let first = measures.first().ok_or(Error::EmptyInput)?;
    // accumulate deviations from the first measure so identical inputs average exactly
    let mut acc = vec![0.0; first.q.len()];
    for m in measures {
        first.grid.check(&m.grid)?;
        for ((a, v), f) in acc.iter_mut().zip(&m.q).zip(&first.q) {
            *a += v - f;
        }
    }
    let n = measures.len() as f64;
    let mut q: Vec<f64> = acc.into_iter().zip(&first.q).map(|(s, f)| f + s / n).collect();
    for k in 1..q.len() {
        if q[k] < q[k - 1] {
            q[k] = q[k - 1];
        }
    }
    Ok(QuantileMeasure::from_sorted_unchecked(q))
}

pub fn barycenter_gaussian(measures: &[GaussianMeasure]) -> Result<GaussianMeasure> {
    if measures.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = measures.len() as f64;
    let mean = measures.iter().map(|g| g.mean).sum::<f64>() / n;
    let std = measures.iter().map(|g| g.std).sum::<f64>() / n;
    GaussianMeasure::new(mean, std)
}

/// Common interface of the two representations.
pub trait Measure: Sized {
    fn w2(&self, other: &Self) -> Result<f64>;
    fn barycenter_of(measures: &[Self]) -> Result<Self>;
    /// Grid size for quantile measures, `None` for parametric ones.
    fn grid_size(&self) -> Option<usize> {
        None
    }
}

impl Measure for QuantileMeasure {
    fn w2(&self, other: &Self) -> Result<f64> {
        w2_distance(self, other)
    }

    fn barycenter_of(measures: &[Self]) -> Result<Self> {
        barycenter(measures)
    }

    fn grid_size(&self) -> Option<usize> {
        Some(self.grid.size())
    }
}

impl Measure for GaussianMeasure {
    fn w2(&self, other: &Self) -> Result<f64> {
        Ok(w2_gaussian(self, other))
    }

    fn barycenter_of(measures: &[Self]) -> Result<Self> {
        barycenter_gaussian(measures)
    }
}

/// Mean squared distance to the barycenter.
pub fn frechet_variance<M: Measure>(measures: &[M]) -> Result<f64> {
    let bar = M::barycenter_of(measures)?;
    let mut total = 0.0;
    for m in measures {
        total += m.w2(&bar)?;
    }
    Ok(total / measures.len() as f64)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn sorted_vec(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0..50.0f64, k).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v
        })
    }

    proptest! {
        #[test]
        fn w2_symmetric(a in sorted_vec(16), b in sorted_vec(16)) {
            let a = QuantileMeasure::new(a).unwrap();
            let b = QuantileMeasure::new(b).unwrap();
            prop_assert_eq!(w2_distance(&a, &b).unwrap(), w2_distance(&b, &a).unwrap());
            prop_assert_eq!(w2_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn estimate_quantile_monotone(xs in prop::collection::vec(-1e6..1e6f64, 2..200), k in 2usize..300) {
            let q = estimate_quantile(&xs, QuantileGrid::new(k).unwrap()).unwrap();
            prop_assert!(first_decrease(q.quantiles()).is_none());
        }

        #[test]
        fn gaussian_grid_gap_small(m1 in -10.0..10.0f64, s1 in 0.01..5.0f64, m2 in -10.0..10.0f64, s2 in 0.01..5.0f64) {
            let gr = QuantileGrid::new(10_000).unwrap();
            let a = GaussianMeasure::new(m1, s1).unwrap();
            let b = GaussianMeasure::new(m2, s2).unwrap();
            let grid_d = w2_distance(&gaussian_quantiles(&a, gr), &gaussian_quantiles(&b, gr)).unwrap();
            prop_assert!((grid_d - w2_gaussian(&a, &b)).abs() < 1e-2);
        }

        #[test]
        fn barycenter_is_local_minimum(ms in prop::collection::vec(sorted_vec(8), 2..6), node in 0usize..8, delta in 1e-3..0.5f64) {
            let ms: Vec<QuantileMeasure> = ms.into_iter().map(|q| QuantileMeasure::new(q).unwrap()).collect();
            let bar = barycenter(&ms).unwrap();
            let obj = |c: &QuantileMeasure| ms.iter().map(|m| w2_distance(m, c).unwrap()).sum::<f64>();
            let base = obj(&bar);
            for sign in [-1.0, 1.0] {
                let mut q = bar.quantiles().to_vec();
                q[node] += sign * delta;
                if let Ok(p) = QuantileMeasure::new(q) {
                    prop_assert!(obj(&p) >= base);
                }
            }
        }

        #[test]
        fn frechet_variance_zero_iff_identical(ms in prop::collection::vec(sorted_vec(6), 1..5)) {
            let ms: Vec<QuantileMeasure> = ms.into_iter().map(|q| QuantileMeasure::new(q).unwrap()).collect();
            let v = frechet_variance(&ms).unwrap();
            let identical = ms.iter().all(|m| m == &ms[0]);
            prop_assert_eq!(v == 0.0, identical);
        }
    }
}
