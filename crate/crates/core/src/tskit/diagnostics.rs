//! Residual portmanteau test and augmented Dickey–Fuller unit-root test.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::stats::{chi2_sf, mean, normal_cdf, ols};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub lag: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Sample autocorrelations `ρ̂₁ … ρ̂_h`.
pub fn acf(x: &[f64], h: usize) -> Vec<f64> {
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    (1..=h)
        .map(|k| d[k..].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect()
}

/// Ljung–Box Q at each lag in `lags`, chi-square with `lag` degrees of freedom.
pub fn ljung_box(residuals: &[f64], lags: &[usize]) -> Result<Vec<LjungBox>> {
    let n = residuals.len();
    let hmax = lags.iter().copied().max().unwrap_or(0);
    if n <= hmax {
        return Err(Error::TooShort {
            needed: hmax + 1,
            got: n,
        });
    }
    let m = mean(residuals);
    if residuals.iter().all(|v| (v - m).abs() <= 1e-14 * m.abs().max(1.0)) {
        return Err(Error::Degenerate("constant residual series".into()));
    }
    let rho = acf(residuals, hmax);
    let nf = n as f64;
    let mut terms = Vec::with_capacity(hmax);
    let mut acc = 0.0;
    for (k, r) in rho.iter().enumerate() {
        acc += r * r / (nf - (k + 1) as f64);
        terms.push(acc);
    }
    Ok(lags
        .iter()
        .map(|&h| {
            let q = if h == 0 { 0.0 } else { nf * (nf + 2.0) * terms[h - 1] };
            LjungBox {
                lag: h,
                statistic: q,
                p_value: chi2_sf(q, h),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Augmentation lags chosen by AIC.
    pub lags: usize,
    /// Observations in the final regression.
    pub n_obs: usize,
}

/// Default lag ceiling `⌊12 (n/100)^{1/4}⌋`.
pub fn default_max_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// ADF regression `Δy_t = c + γ y_{t−1} + Σ δ_i Δy_{t−i} + e_t`, constant only.
/// The lag order minimizes AIC over `0..=max_lags` on a common sample, then
/// the chosen model is refit on all usable observations.
pub fn adf_test(y: &[f64], max_lags: Option<usize>) -> Result<AdfResult> {
    let n = y.len();
    let max_lags = max_lags.unwrap_or_else(|| default_max_lags(n));
    let needed = (3 * max_lags + 1).max(8);
    if n < needed {
        return Err(Error::TooShort { needed, got: n });
    }
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let mut best = (f64::INFINITY, 0);
    for l in 0..=max_lags {
        let Ok((_, rss, nobs, k)) = adf_regression(y, &dy, l, max_lags) else {
            continue;
        };
        let nf = nobs as f64;
        let aic = nf * (rss / nf).ln() + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, l);
        }
    }
    let lags = best.1;
    let (tstat, _, nobs, _) = adf_regression(y, &dy, lags, lags)?;
    Ok(AdfResult {
        statistic: tstat,
        p_value: mackinnon_p_constant(tstat),
        lags,
        n_obs: nobs,
    })
}

/// Returns (t-statistic on γ, RSS, observations, regressors). Rows start at
/// `start` lags into the differenced series so different `l` share a sample.
fn adf_regression(y: &[f64], dy: &[f64], l: usize, start: usize) -> Result<(f64, f64, usize, usize)> {
    let rows = dy.len() - start;
    let k = 2 + l;
    let a = DMatrix::from_fn(rows, k, |i, j| {
        let t = i + start; // index into dy; Δy_t = y[t+1] − y[t]
        match j {
            0 => 1.0,
            1 => y[t],
            _ => dy[t - (j - 1)],
        }
    });
    let b = DVector::from_column_slice(&dy[start..]);
    let (coef, rss) = ols(&a, &b)?;
    let dof = rows as f64 - k as f64;
    let s2 = rss / dof;
    let inv = (a.transpose() * &a)
        .try_inverse()
        .ok_or_else(|| Error::Singular("ADF design".into()))?;
    let se = (s2 * inv[(1, 1)]).sqrt();
    Ok((coef[1] / se, rss, rows, k))
}

/// MacKinnon (1994) response-surface p-value for the constant-only,
/// single-series Dickey–Fuller distribution.
pub fn mackinnon_p_constant(tau: f64) -> f64 {
    const TAU_MAX: f64 = 2.74;
    const TAU_MIN: f64 = -18.83;
    const TAU_STAR: f64 = -1.61;
    const SMALL: [f64; 3] = [2.1659, 1.4412, 0.038269];
    const LARGE: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];
    if tau > TAU_MAX {
        return 1.0;
    }
    if tau < TAU_MIN {
        return 0.0;
    }
    let coef: &[f64] = if tau <= TAU_STAR { &SMALL } else { &LARGE };
    let z = coef.iter().rev().fold(0.0, |acc, c| acc * tau + c);
    normal_cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_obs_by_hand() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        // mean 3, deviations -2 0 -1 2 1, c0 = 10
        // c1 = 0*-2 + -1*0 + 2*-1 + 1*2 = 0 ; c2 = -1*-2 + 2*0 + 1*-1 = 1
        let r = ljung_box(&x, &[2]).unwrap()[0];
        let want = 5.0 * 7.0 * (0.0 / 4.0 + 0.01 / 3.0);
        assert!((r.statistic - want).abs() < 1e-12);
    }

    #[test]
    fn constant_rejected() {
        assert!(ljung_box(&[2.0; 30], &[12]).is_err());
    }

    #[test]
    fn mackinnon_matches_published_table() {
        for (tau, p) in [
            (-1.9538, 0.3072),
            (-3.9752, 0.0015),
            (0.2520, 0.9750),
            (-0.7324, 0.8382),
            (2.5719, 0.9991),
            (-2.6147, 0.0900),
        ] {
            assert!((mackinnon_p_constant(tau) - p).abs() < 5e-5, "{tau}");
        }
    }
}
