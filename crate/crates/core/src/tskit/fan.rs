//! h-step forecast means and conditional level variances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fit::{profile, ArimaFit, Prepared};
use super::kalman::ArmaStateSpace;
use crate::{Error, Result};

/// z-score of the two-sided 95% band.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFan {
    pub horizon: usize,
    /// Level forecasts for steps 1..=h.
    pub mean_path: Vec<f64>,
    /// Conditional level variances for steps 1..=h.
    pub var_path: Vec<f64>,
}

impl ForecastFan {
    /// Standard deviation at step `h` (1-based).
    pub fn sd(&self, h: usize) -> f64 {
        self.var_path[h - 1].sqrt()
    }

    /// Multiplicative 95% band `exp(1.96·sd)` at step `h`.
    pub fn x95(&self, h: usize) -> f64 {
        x95(self.sd(h))
    }

    pub fn sd_path(&self) -> Vec<f64> {
        self.var_path.iter().map(|v| v.sqrt()).collect()
    }
}

pub fn x95(sd: f64) -> f64 {
    (Z95 * sd).exp()
}

/// Forecast fan for `h` steps.
///
/// Fits carrying data condition on the observed sample through the filter.
/// Fits built from parameters alone condition on an infinite past, so the
/// variance path is `σ² Σ ψ_i²` (cumulated once more when d = 1). Future
/// exogenous values are held at their last observed row.
pub fn forecast_fan(fit: &ArimaFit, h: usize) -> Result<ForecastFan> {
    if h == 0 {
        return Err(Error::OutOfRange("horizon must be positive".into()));
    }
    let ss = ArmaStateSpace::new(&fit.params);
    let m = ss.m;
    let (mean0, p0, last_level, regression_mean) = if fit.has_data() {
        let (y, exog) = fit.data();
        let prep = Prepared::new(&fit.spec, y, exog)?;
        let prof = profile(&fit.params, &prep)?;
        // filtered state of u = y − Xβ is linear in the per-series states
        let mut a = prof.out.next_state[0].clone();
        for (j, b) in prof.beta.iter().enumerate() {
            for i in 0..m {
                a[i] -= b * prof.out.next_state[j + 1][i];
            }
        }
        let p = DMatrix::from_row_slice(m, m, &prof.out.next_cov);
        let last_x: Vec<f64> = exog.iter().map(|c| *c.last().unwrap()).collect();
        let xb: f64 = last_x.iter().zip(&fit.beta_exog).map(|(x, b)| x * b).sum();
        let c = fit.intercept.unwrap_or(0.0);
        let reg = if fit.spec.d == 0 { c + xb } else { c };
        (DVector::from_vec(a), p, *y.last().unwrap(), reg)
    } else {
        let rr = DMatrix::from_fn(m, m, |i, j| ss.r[i] * ss.r[j]);
        (DVector::zeros(m), rr, 0.0, fit.intercept.unwrap_or(0.0))
    };
    let t = ss.transition();
    let rr = DMatrix::from_fn(m, m, |i, j| ss.r[i] * ss.r[j]);
    let mut a = mean0;
    let mut p = p0;
    let mut mean_path = Vec::with_capacity(h);
    let mut var_path = Vec::with_capacity(h);
    if fit.spec.d == 0 {
        for _ in 0..h {
            mean_path.push(regression_mean + a[0]);
            var_path.push(fit.sigma2 * p[(0, 0)]);
            a = &t * a;
            p = &t * p * t.transpose() + &rr;
        }
    } else {
        // augment with the running sum of differenced errors
        let mut cum = 0.0;
        let mut pc = DVector::<f64>::zeros(m); // cov(x, s)
        let mut pss = 0.0; // var(s)
        for step in 0..h {
            // s ← s + x₀
            pss += 2.0 * pc[0] + p[(0, 0)];
            for i in 0..m {
                pc[i] += p[(i, 0)];
            }
            cum += a[0];
            mean_path.push(last_level + regression_mean * (step + 1) as f64 + cum);
            var_path.push(fit.sigma2 * pss);
            // x ← T x + R e
            a = &t * a;
            p = &t * p * t.transpose() + &rr;
            pc = &t * pc;
        }
    }
    Ok(ForecastFan {
        horizon: h,
        mean_path,
        var_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tskit::fit::ModelParams;
    use crate::tskit::spec::{ArimaSpec, ArmaParams};

    fn from(spec: ArimaSpec, ar: Vec<f64>, ma: Vec<f64>, s2: f64) -> ArimaFit {
        ArimaFit::from_params(
            spec,
            ModelParams {
                arma: ArmaParams::new(ar, ma, vec![]),
                intercept: 0.0,
                beta: vec![],
                sigma2: s2,
            },
        )
        .unwrap()
    }

    #[test]
    fn white_noise_flat() {
        let f = forecast_fan(&from(ArimaSpec::new(0, 0, 0), vec![], vec![], 1.0), 5).unwrap();
        assert!(f.var_path.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn ar1_closed_form() {
        let phi: f64 = 0.7;
        let f = forecast_fan(&from(ArimaSpec::new(1, 0, 0), vec![phi], vec![], 2.0), 10).unwrap();
        for j in 0..10 {
            let want: f64 = 2.0 * (0..=j).map(|i| phi.powi(2 * i as i32)).sum::<f64>();
            assert!((f.var_path[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn random_walk_linear_variance() {
        let f = forecast_fan(&from(ArimaSpec::new(0, 1, 0), vec![], vec![], 0.5), 6).unwrap();
        for j in 0..6 {
            assert!((f.var_path[j] - 0.5 * (j + 1) as f64).abs() < 1e-12);
        }
    }
}
