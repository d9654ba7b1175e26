//! Bayesian time-varying Poisson autoregression (TVBARC) and time-varying
//! Poisson INGARCH (TVBINGARCH) for count time series, fitted with
//! Hamiltonian Monte Carlo.

pub mod cli_io;
pub mod error;
pub mod evaluation;
pub mod hmc;
pub mod model;
pub mod series;
pub mod simulator;
pub mod splines;
pub mod tvbarc;
pub mod tvbingarch;

pub use error::{Error, Result};
pub use series::CountSeries;
pub use splines::{BasisGrid, SplineBasis};
pub use tvbarc::{simplex_weights, Hyper, TvbarcModel, TvbarcParams};
pub use tvbingarch::{GradientMode, HyperIngarch, TvbingarchModel, TvbingarchParams};
pub use hmc::{Chain, ClampMode, FreezeRule, HmcConfig};
pub use model::{FitModel, Selector};
