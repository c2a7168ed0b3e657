//! State-space time-series core.
//!
//! Regression with ARMA (optionally seasonal MA at lag 12) errors, fitted by
//! exact Gaussian maximum likelihood through a Kalman filter; AICc order
//! selection; Ljung–Box and ADF diagnostics; forecast fans.

pub mod diagnostics;
pub mod fan;
pub mod fit;
pub mod kalman;
pub mod select;
pub mod simulate;
pub mod spec;
pub mod transform;

use serde::{Deserialize, Serialize};

pub use diagnostics::{adf_test, ljung_box, AdfResult, LjungBox};
pub use fan::{forecast_fan, x95, ForecastFan};
pub use fit::{aicc, ar_root_moduli, fit, loglik, ArimaFit, Exog, FitOptions, ModelParams, SeKind, StdErrors};
pub use select::{select_order, Candidate, Selection, SelectionGrid, SelectionRules};
pub use simulate::simulate_arma;
pub use spec::{ArimaSpec, ArmaParams, SEASONAL_PERIOD};

use crate::Result;

/// Serializable summary of a fit with residual diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub spec: String,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub seasonal_ma: Vec<f64>,
    pub intercept: Option<f64>,
    pub beta_exog: Vec<f64>,
    pub std_errors: Option<StdErrors>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aicc: f64,
    pub n_obs: usize,
    pub lb12_p: Option<f64>,
    pub lb24_p: Option<f64>,
    pub converged: bool,
    pub boundary: bool,
}

impl FitReport {
    pub fn new(fit: &ArimaFit) -> Result<Self> {
        let lb = ljung_box(&fit.residuals, &[12, 24]).ok();
        Ok(FitReport {
            spec: fit.spec.label(),
            ar: fit.params.ar.clone(),
            ma: fit.params.ma.clone(),
            seasonal_ma: fit.params.seasonal_ma.clone(),
            intercept: fit.intercept,
            beta_exog: fit.beta_exog.clone(),
            std_errors: fit.std_errors.clone(),
            sigma2: fit.sigma2,
            loglik: fit.loglik,
            aicc: fit.aicc,
            n_obs: fit.n_obs,
            lb12_p: lb.as_ref().map(|v| v[0].p_value),
            lb24_p: lb.as_ref().map(|v| v[1].p_value),
            converged: fit.converged,
            boundary: fit.boundary,
        })
    }
}
