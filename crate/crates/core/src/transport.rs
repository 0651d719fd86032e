//! Transport maps between quantile measures and the arithmetic on them.
//!
//! A [`TangentMap`] at base `B` stores the displacement `T(x) - x` evaluated at
//! the grid quantiles of `B`, i.e. `disp_k = T(F_B^{-1}(t_k)) - F_B^{-1}(t_k)`.
//! In these coordinates the optimal map from `B` to `mu` is `q_mu - q_B`, the
//! parallel transport along a geodesic keeps the displacement profile and only
//! swaps the base, `⊕` adds displacements and `⊙` scales them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isotonic::project_monotone;
use crate::measures::{first_decrease, QuantileMeasure};

/// What to do when a pushforward would produce decreasing quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonotoneMode {
    /// Fail with [`Error::NotAMeasure`].
    Strict,
    /// Replace the quantiles by their isotonic (L2) projection.
    #[default]
    Project,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentMap {
    base: Arc<QuantileMeasure>,
    disp: Vec<f64>,
}

impl TangentMap {
    pub fn new(base: Arc<QuantileMeasure>, disp: Vec<f64>) -> Result<Self> {
        if disp.len() != base.grid().size() {
            return Err(Error::GridMismatch {
                left: base.grid().size(),
                right: disp.len(),
            });
        }
        if let Some(k) = disp.iter().position(|d| !d.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite displacement at node {k}")));
        }
        Ok(Self { base, disp })
    }

    pub fn identity(base: Arc<QuantileMeasure>) -> Self {
        let disp = vec![0.0; base.grid().size()];
        Self { base, disp }
    }

    /// Translation `x -> x + c`.
    pub fn translation(base: Arc<QuantileMeasure>, c: f64) -> Self {
        let disp = vec![c; base.grid().size()];
        Self { base, disp }
    }

    pub fn base(&self) -> &Arc<QuantileMeasure> {
        &self.base
    }

    pub fn displacements(&self) -> &[f64] {
        &self.disp
    }

    pub fn is_identity(&self) -> bool {
        self.disp.iter().all(|&d| d == 0.0)
    }

    /// Image of each base quantile under the map, `T(F_B^{-1}(t_k))`.
    pub fn image(&self) -> Vec<f64> {
        self.base
            .quantiles()
            .iter()
            .zip(&self.disp)
            .map(|(q, d)| q + d)
            .collect()
    }

    /// The map with negated displacement (the reverse geodesic direction).
    pub fn inverse_direction(&self) -> Self {
        Self {
            base: Arc::clone(&self.base),
            disp: self.disp.iter().map(|d| -d).collect(),
        }
    }

    fn same_base(&self, other: &TangentMap) -> bool {
        Arc::ptr_eq(&self.base, &other.base) || self.base == other.base
    }
}

/// Optimal map from `source` to `target`, expressed at `source`.
pub fn optimal_map(target: &QuantileMeasure, source: Arc<QuantileMeasure>) -> Result<TangentMap> {
    source.grid().check(&target.grid())?;
    let disp = target
        .quantiles()
        .iter()
        .zip(source.quantiles())
        .map(|(t, s)| t - s)
        .collect();
    Ok(TangentMap { base: source, disp })
}

/// Moves a tangent map to the tangent space at `new_base`.
pub fn parallel_transport(map: &TangentMap, new_base: Arc<QuantileMeasure>) -> Result<TangentMap> {
    map.base.grid().check(&new_base.grid())?;
    Ok(TangentMap {
        base: new_base,
        disp: map.disp.clone(),
    })
}

/// `a ⊕ b` for two maps at the same base.
pub fn oplus(a: &TangentMap, b: &TangentMap) -> Result<TangentMap> {
    if !a.same_base(b) {
        return Err(Error::BaseMismatch);
    }
    let disp = a.disp.iter().zip(&b.disp).map(|(x, y)| x + y).collect();
    Ok(TangentMap {
        base: Arc::clone(&a.base),
        disp,
    })
}

/// Folds `⊕` over `maps` in order, starting from the identity at `base`.
pub fn oplus_chain<'a, I>(base: Arc<QuantileMeasure>, maps: I) -> Result<TangentMap>
where
    I: IntoIterator<Item = &'a TangentMap>,
{
    let mut acc = TangentMap::identity(base);
    for m in maps {
        acc = oplus(&acc, m)?;
    }
    Ok(acc)
}

/// Closed form of `alpha ⊙ T`: `id + alpha (T - id)`.
pub fn odot_direct(alpha: f64, map: &TangentMap) -> TangentMap {
    TangentMap {
        base: Arc::clone(&map.base),
        disp: map.disp.iter().map(|d| alpha * d).collect(),
    }
}

/// Geodesic point `id + a (T - id)` for `a` in `[0, 1]`.
pub fn geodesic(map: &TangentMap, a: f64) -> TangentMap {
    odot_direct(a, map)
}

/// `alpha ⊙ T` built from its sign/integer/fraction decomposition:
/// a fractional geodesic component followed by `floor(|alpha|)` unit components,
/// all along `T` (or its reverse when `alpha < 0`), combined with `⊕`.
pub fn odot_decomposed(alpha: f64, map: &TangentMap) -> TangentMap {
    let directed = if alpha < 0.0 {
        map.inverse_direction()
    } else {
        map.clone()
    };
    let magnitude = alpha.abs();
    let whole = magnitude.floor();
    let frac = magnitude - whole;

    let mut acc = geodesic(&directed, frac);
    let unit = geodesic(&directed, 1.0);
    for _ in 0..whole as u64 {
        // same base by construction
        acc = oplus(&acc, &unit).expect("components share a base");
    }
    acc
}

/// A pushforward result together with whether projection was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Pushforward {
    pub measure: QuantileMeasure,
    pub projected: bool,
}

/// Pushes the base measure through `map`.
pub fn pushforward(map: &TangentMap, mode: MonotoneMode) -> Result<Pushforward> {
    pushforward_quantiles(map.image(), mode)
}

pub(crate) fn pushforward_quantiles(q: Vec<f64>, mode: MonotoneMode) -> Result<Pushforward> {
    if let Some(k) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidMeasure(format!("non-finite quantile at node {k}")));
    }
    match first_decrease(&q) {
        None => Ok(Pushforward {
            measure: QuantileMeasure::new(q)?,
            projected: false,
        }),
        Some(node) => match mode {
            MonotoneMode::Strict => Err(Error::NotAMeasure { node }),
            MonotoneMode::Project => Ok(Pushforward {
                measure: QuantileMeasure::new(project_monotone(&q))?,
                projected: true,
            }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{gaussian_quantiles, probit, GaussianMeasure, QuantileGrid};
    use approx::assert_abs_diff_eq;

    fn grid(k: usize) -> QuantileGrid {
        QuantileGrid::new(k).unwrap()
    }

    fn gq(m: f64, s: f64, k: usize) -> Arc<QuantileMeasure> {
        Arc::new(gaussian_quantiles(&GaussianMeasure::new(m, s).unwrap(), grid(k)))
    }

    #[test]
    fn optimal_map_cases() {
        let src = gq(0.0, 1.0, 33);
        assert!(optimal_map(&src, Arc::clone(&src)).unwrap().is_identity());

        let d0 = Arc::new(QuantileMeasure::dirac(0.0, grid(5)));
        let d3 = QuantileMeasure::dirac(3.0, grid(5));
        assert_eq!(optimal_map(&d3, d0).unwrap().displacements(), &[3.0; 5]);

        // N(0,1) -> N(2,3) is x -> 2 + 3x
        let tgt = gq(2.0, 3.0, 33);
        let t = optimal_map(&tgt, Arc::clone(&src)).unwrap();
        for (k, (&x, img)) in src.quantiles().iter().zip(t.image()).enumerate() {
            assert_abs_diff_eq!(img, 2.0 + 3.0 * x, epsilon = 1e-12);
            let z = probit(grid(33).node(k));
            assert_abs_diff_eq!(t.displacements()[k], 2.0 + 2.0 * z, epsilon = 1e-12);
        }

        assert!(optimal_map(&d3, src).is_err());
    }

    #[test]
    fn parallel_transport_cases() {
        let a = gq(0.0, 1.0, 21);
        let b = gq(3.0, 0.5, 21);
        let id = TangentMap::identity(Arc::clone(&a));
        assert!(parallel_transport(&id, Arc::clone(&b)).unwrap().is_identity());
        let tr = TangentMap::translation(Arc::clone(&a), 1.5);
        assert_eq!(parallel_transport(&tr, Arc::clone(&b)).unwrap().displacements(), &[1.5; 21]);

        // mu_bar = N(0,1), mu_i = N(1,2), nu_bar = N(5,1):
        // transported map is x -> (x - 5)(2 - 1)/1 + x + (1 - 0)
        let mu_bar = gq(0.0, 1.0, 101);
        let mu_i = gq(1.0, 2.0, 101);
        let nu_bar = gq(5.0, 1.0, 101);
        let t = optimal_map(&mu_i, mu_bar).unwrap();
        let moved = parallel_transport(&t, Arc::clone(&nu_bar)).unwrap();
        for (&x, img) in nu_bar.quantiles().iter().zip(moved.image()) {
            assert_abs_diff_eq!(img, (x - 5.0) * (2.0 - 1.0) / 1.0 + x + 1.0, epsilon = 1e-12);
        }

        let back = parallel_transport(&moved, Arc::clone(&t.base)).unwrap();
        assert_eq!(back, t);
        assert!(parallel_transport(&t, gq(0.0, 1.0, 5)).is_err());
    }

    #[test]
    fn oplus_cases() {
        let base = gq(0.0, 1.0, 17);
        let other = gq(1.0, 1.0, 17);
        let a = optimal_map(&gq(0.5, 2.0, 17), Arc::clone(&base)).unwrap();
        let id = TangentMap::identity(Arc::clone(&base));
        assert_eq!(oplus(&a, &id).unwrap(), a);
        let t1 = TangentMap::translation(Arc::clone(&base), 1.25);
        let t2 = TangentMap::translation(Arc::clone(&base), -3.0);
        assert_eq!(oplus(&t1, &t2).unwrap().displacements(), &[-1.75; 17]);
        assert_eq!(oplus(&a, &t1).unwrap(), oplus(&t1, &a).unwrap());
        let elsewhere = TangentMap::identity(other);
        assert!(matches!(oplus(&a, &elsewhere), Err(Error::BaseMismatch)));
    }

    #[test]
    fn odot_cases() {
        let base = gq(0.0, 1.0, 9);
        let t = optimal_map(&gq(1.0, 0.3, 9), Arc::clone(&base)).unwrap();
        assert!(odot_direct(0.0, &t).is_identity());
        assert_eq!(odot_direct(1.0, &t), t);
        let tr = TangentMap::translation(Arc::clone(&base), 2.0);
        assert_eq!(odot_direct(-1.5, &tr).displacements(), &[-3.0; 9]);
        assert_eq!(odot_decomposed(2.5, &tr).displacements(), &[5.0; 9]);
        let direct = odot_direct(0.7, &t);
        let decomposed = odot_decomposed(0.7, &t);
        assert_eq!(decomposed, direct);
        assert_eq!(odot_decomposed(-2.0, &tr).displacements(), &[-4.0; 9]);
    }

    #[test]
    fn pushforward_cases() {
        let base = gq(0.0, 1.0, 40);
        let pf = pushforward(&TangentMap::identity(Arc::clone(&base)), MonotoneMode::Strict).unwrap();
        assert_eq!(&pf.measure, base.as_ref());
        assert!(!pf.projected);

        let target = gq(-1.0, 0.2, 40);
        let round = pushforward(&optimal_map(&target, Arc::clone(&base)).unwrap(), MonotoneMode::Strict).unwrap();
        for (a, b) in round.measure.quantiles().iter().zip(target.quantiles()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }

        // disp = -2 z gives image -z: strictly decreasing
        let disp: Vec<f64> = base.quantiles().iter().map(|z| -2.0 * z).collect();
        let m = TangentMap::new(Arc::clone(&base), disp).unwrap();
        assert!(matches!(pushforward(&m, MonotoneMode::Strict), Err(Error::NotAMeasure { node: 1 })));
        let p = pushforward(&m, MonotoneMode::Project).unwrap();
        assert!(p.projected);
        // PAVA of a sequence antisymmetric about zero pools everything to its mean, 0
        for v in p.measure.quantiles() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tangent_map_validation() {
        let base = gq(0.0, 1.0, 4);
        assert!(TangentMap::new(Arc::clone(&base), vec![0.0; 3]).is_err());
        assert!(TangentMap::new(base, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::measures::{barycenter, QuantileGrid};
    use proptest::prelude::*;

    fn sorted(k: usize) -> impl Strategy<Value = QuantileMeasure> {
        prop::collection::vec(-20.0..20.0f64, k).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            QuantileMeasure::new(v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn decomposed_matches_direct(alpha in -5.0..5.0f64, target in sorted(12), src in sorted(12)) {
            let t = optimal_map(&target, Arc::new(src)).unwrap();
            let a = odot_decomposed(alpha, &t);
            let b = odot_direct(alpha, &t);
            for (x, y) in a.displacements().iter().zip(b.displacements()) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn transport_round_trip(target in sorted(10), src in sorted(10), other in sorted(10)) {
            let src = Arc::new(src);
            let t = optimal_map(&target, Arc::clone(&src)).unwrap();
            let there = parallel_transport(&t, Arc::new(other)).unwrap();
            let back = parallel_transport(&there, src).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn barycenter_pushes_to_each_sample(ms in prop::collection::vec(sorted(8), 1..5)) {
            let bar = Arc::new(barycenter(&ms).unwrap());
            for m in &ms {
                let pf = pushforward(&optimal_map(m, Arc::clone(&bar)).unwrap(), MonotoneMode::Strict).unwrap();
                for (a, b) in pf.measure.quantiles().iter().zip(m.quantiles()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn identity_is_neutral(m in sorted(6)) {
            let base = Arc::new(QuantileMeasure::dirac(0.0, QuantileGrid::new(6).unwrap()));
            let t = optimal_map(&m, base).unwrap();
            let id = TangentMap::identity(Arc::clone(t.base()));
            prop_assert_eq!(oplus(&t, &id).unwrap(), t.clone());
            prop_assert_eq!(oplus(&id, &t).unwrap(), t);
        }
    }
}
