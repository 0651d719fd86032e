//! Linear regression between univariate probability measures in 2-Wasserstein space.
//!
//! Predictors and the response of every sample are probability measures on the
//! real line. The model moves the response barycenter along the predictors'
//! transport maps, each scaled by a real coefficient:
//!
//! ```text
//! nu_i = (T_eps_i ⊕ alpha_1 ⊙ T_{mu_i1} ⊕ ... ⊕ alpha_p ⊙ T_{mu_ip})_# nu_bar
//! ```
//!
//! Modules:
//! - [`measures`]: quantile-grid and Gaussian measures, distances, barycenters
//! - [`transport`]: tangent maps, parallel transport, `⊕`, `⊙`, pushforward
//! - [`regression`]: Fréchet least-squares fit on quantile grids
//! - [`gauss`]: the closed-form Gaussian specialization
//! - [`simulate`]: seeded simulation study with a Euclidean baseline
//! - [`cli`]: file formats, windowed ingestion, model persistence and trajectories

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gauss;
pub mod isotonic;
pub mod linalg;
pub mod measures;
pub mod regression;
pub mod simulate;
pub mod transport;

pub use error::{Error, Result};
pub use gauss::{gauss_fit, gauss_predict, GaussDidoModel, StdMode};
pub use measures::{GaussianMeasure, QuantileGrid, QuantileMeasure};
pub use regression::{fit, predict, DidoDataset, DidoModel, FitOptions};
pub use transport::{MonotoneMode, TangentMap};
