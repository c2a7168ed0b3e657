//! Per-region three-factor loadings, expanding-window stability, cumulative
//! decompositions and scenario bands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::factors::FactorSet;
use crate::ingest::write_table;
use crate::stats::median;
use crate::tskit::{
    fit, forecast_fan, ljung_box, x95, ArimaFit, ArimaSpec, ArmaParams, FitOptions,
};
use crate::{Error, Month, Result};

/// Minimum window length for expanding-window fits.
pub const MIN_WINDOW: usize = 120;
/// Default horizon (months) for scenario bands.
pub const DEFAULT_HORIZON: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingSource {
    FullSample,
    MedianOfWindows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingSe {
    #[serde(deserialize_with = "crate::stats::nan_as_null::deserialize")]
    pub b: f64,
    #[serde(deserialize_with = "crate::stats::nan_as_null::deserialize")]
    pub beta: f64,
    #[serde(deserialize_with = "crate::stats::nan_as_null::deserialize")]
    pub lambda: f64,
    #[serde(deserialize_with = "crate::stats::nan_as_null::deserialize")]
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionLoadings {
    pub region_id: String,
    #[serde(deserialize_with = "crate::stats::nan_as_null::deserialize")]
    pub b: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Standard errors; absent for median-of-windows loadings.
    pub se: Option<LoadingSe>,
    pub lifestyle_included: bool,
    /// Model for ε_r. For full-sample loadings this is the joint ARIMAX fit;
    /// for median loadings it is refit on μ_r minus the factor part.
    pub remainder_fit: Option<ArimaFit>,
    pub source: LoadingSource,
}

impl RegionLoadings {
    /// Three-factor linear part `b + βU + λδ_PS + γδ_L`.
    pub fn factor_part(&self, f: &FactorSet) -> Vec<f64> {
        (0..f.len())
            .map(|t| {
                self.b
                    + self.beta * f.market[t]
                    + self.lambda * f.mining[t]
                    + self.gamma * f.lifestyle[t]
            })
            .collect()
    }

    /// 95% confidence interval `estimate ± 1.96·se` for β.
    pub fn beta_ci(&self) -> Option<(f64, f64)> {
        self.se.map(|s| (self.beta - 1.96 * s.beta, self.beta + 1.96 * s.beta))
    }

    /// ε_r variance at horizon `h` from the remainder fan.
    pub fn remainder_variance(&self, h: usize) -> Result<f64> {
        let fit = self
            .remainder_fit
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{}: no remainder model", self.region_id)))?;
        Ok(forecast_fan(fit, h)?.var_path[h - 1])
    }
}

fn check_aligned(mu: &[f64], f: &FactorSet) -> Result<()> {
    if mu.len() != f.len() || f.mining.len() != f.len() || f.lifestyle.len() != f.len() {
        return Err(Error::Dimension(format!(
            "region series has {} months, factors {}",
            mu.len(),
            f.len()
        )));
    }
    Ok(())
}

fn exog(f: &FactorSet, lifestyle: bool) -> Vec<Vec<f64>> {
    let mut x = vec![f.market.clone(), f.mining.clone()];
    if lifestyle {
        x.push(f.lifestyle.clone());
    }
    x
}

/// Joint ARIMAX fit of `μ_r` on the factors. Without the Lifestyle column
/// γ is fixed at 0.
pub fn fit_region(
    region_id: &str,
    mu: &[f64],
    factors: &FactorSet,
    spec: &ArimaSpec,
    lifestyle: bool,
    opts: &FitOptions,
) -> Result<RegionLoadings> {
    check_aligned(mu, factors)?;
    let spec = ArimaSpec {
        intercept: true,
        ..*spec
    };
    let f = fit(&spec, mu, &exog(factors, lifestyle), opts)?;
    Ok(loadings_from_fit(region_id, f, lifestyle))
}

fn loadings_from_fit(region_id: &str, f: ArimaFit, lifestyle: bool) -> RegionLoadings {
    let g = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let se = f.std_errors.as_ref().map(|s| LoadingSe {
        b: s.intercept.unwrap_or(f64::NAN),
        beta: g(&s.exog, 0),
        lambda: g(&s.exog, 1),
        gamma: if lifestyle { g(&s.exog, 2) } else { 0.0 },
    });
    RegionLoadings {
        region_id: region_id.to_string(),
        b: f.intercept.unwrap_or(0.0),
        beta: g(&f.beta_exog, 0),
        lambda: g(&f.beta_exog, 1),
        gamma: if lifestyle { g(&f.beta_exog, 2) } else { 0.0 },
        se,
        lifestyle_included: lifestyle,
        remainder_fit: Some(f),
        source: LoadingSource::FullSample,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InclusionTest {
    pub aicc_2f: f64,
    pub aicc_3f: f64,
    /// `aicc_3f − aicc_2f`
    pub delta: f64,
    pub include: bool,
    pub lb12_2f: Option<f64>,
    pub lb12_3f: Option<f64>,
}

/// AICc threshold for adding the Lifestyle factor.
pub const INCLUSION_DELTA: f64 = -2.0;

/// Compare two-factor and three-factor fits of the same spec.
pub fn lifestyle_inclusion_test(
    mu: &[f64],
    factors: &FactorSet,
    spec: &ArimaSpec,
    opts: &FitOptions,
) -> Result<(InclusionTest, RegionLoadings, RegionLoadings)> {
    let two = fit_region("", mu, factors, spec, false, opts)?;
    let three = fit_region("", mu, factors, spec, true, opts)?;
    let (f2, f3) = (
        two.remainder_fit.as_ref().unwrap(),
        three.remainder_fit.as_ref().unwrap(),
    );
    let lb = |f: &ArimaFit| ljung_box(&f.residuals, &[12]).ok().map(|v| v[0].p_value);
    let delta = f3.aicc - f2.aicc;
    let test = InclusionTest {
        aicc_2f: f2.aicc,
        aicc_3f: f3.aicc,
        delta,
        include: delta <= INCLUSION_DELTA,
        lb12_2f: lb(f2),
        lb12_3f: lb(f3),
    };
    Ok((test, two, three))
}

/// Indexes of window-end months from `first` in `step`-month steps, plus
/// `last` itself when the steps do not land on it.
pub fn window_endpoints(months: &[Month], first: Month, last: Month, step: usize) -> Vec<usize> {
    let step = step.max(1) as i64;
    let mut out: Vec<usize> = months
        .iter()
        .enumerate()
        .filter(|(_, m)| **m >= first && **m <= last && m.months_since(first) % step == 0)
        .map(|(i, _)| i)
        .collect();
    if let Some(i) = months.iter().position(|m| *m == last) {
        if out.last() != Some(&i) {
            out.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadingPath {
    pub region_id: String,
    pub endpoints: Vec<Month>,
    pub b_path: Vec<Option<f64>>,
    pub beta_path: Vec<Option<f64>>,
    pub lambda_path: Vec<Option<f64>>,
    pub gamma_path: Vec<Option<f64>>,
    /// `(endpoint, error)` for windows that failed to fit.
    pub failures: Vec<(Month, String)>,
}

impl LoadingPath {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        write_table(
            path,
            &["endpoint", "b", "beta", "lambda", "gamma"],
            (0..self.endpoints.len()).map(|i| {
                vec![
                    self.endpoints[i].to_string(),
                    o(self.b_path[i]),
                    o(self.beta_path[i]),
                    o(self.lambda_path[i]),
                    o(self.gamma_path[i]),
                ]
            }),
        )
    }
}

/// One fit per window `[start, end]` (inclusive end index) with the spec held
/// fixed. `warm` seeds every window's optimizer, typically with the
/// full-sample ARMA coefficients.
#[allow(clippy::too_many_arguments)]
pub fn expanding_windows(
    region_id: &str,
    mu: &[f64],
    factors: &FactorSet,
    spec: &ArimaSpec,
    lifestyle: bool,
    start: usize,
    endpoints: &[usize],
    warm: Option<&ArmaParams>,
    exec: Exec,
) -> Result<LoadingPath> {
    check_aligned(mu, factors)?;
    if endpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("window endpoints must be strictly increasing"));
    }
    if let Some(&e) = endpoints.first() {
        if e + 1 < start + MIN_WINDOW {
            return Err(Error::TooShort {
                needed: MIN_WINDOW,
                got: (e + 1).saturating_sub(start),
            });
        }
    }
    if endpoints.last().is_some_and(|&e| e >= mu.len()) {
        return Err(Error::OutOfRange("window endpoint beyond series".into()));
    }
    let opts = match warm {
        Some(p) => FitOptions::warm(p.clone()),
        None => FitOptions {
            std_errors: false,
            ..FitOptions::default()
        },
    };
    let results: Vec<Result<RegionLoadings>> = exec.map(endpoints.to_vec(), |e| {
        let sub = window(factors, start, e);
        fit_region(region_id, &mu[start..=e], &sub, spec, lifestyle, &opts)
    });
    let mut path = LoadingPath {
        region_id: region_id.to_string(),
        endpoints: endpoints.iter().map(|&e| factors.months[e]).collect(),
        b_path: Vec::new(),
        beta_path: Vec::new(),
        lambda_path: Vec::new(),
        gamma_path: Vec::new(),
        failures: Vec::new(),
    };
    for (r, &e) in results.into_iter().zip(endpoints) {
        match r {
            Ok(l) => {
                path.b_path.push(Some(l.b));
                path.beta_path.push(Some(l.beta));
                path.lambda_path.push(Some(l.lambda));
                path.gamma_path.push(Some(l.gamma));
            }
            Err(err) => {
                path.b_path.push(None);
                path.beta_path.push(None);
                path.lambda_path.push(None);
                path.gamma_path.push(None);
                path.failures.push((factors.months[e], err.to_string()));
            }
        }
    }
    Ok(path)
}

fn window(f: &FactorSet, start: usize, end: usize) -> FactorSet {
    FactorSet {
        months: f.months[start..=end].to_vec(),
        market: f.market[start..=end].to_vec(),
        mining: f.mining[start..=end].to_vec(),
        lifestyle: f.lifestyle[start..=end].to_vec(),
        ..f.clone()
    }
}

/// Per-loading medians over endpoints in `[from, to]`; failed windows are
/// skipped. The result has no remainder model; see [`attach_remainder`].
pub fn median_loadings(path: &LoadingPath, from: Month, to: Month) -> Result<RegionLoadings> {
    let idx: Vec<usize> = (0..path.endpoints.len())
        .filter(|&i| path.endpoints[i] >= from && path.endpoints[i] <= to)
        .filter(|&i| path.beta_path[i].is_some())
        .collect();
    if idx.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: idx.len(),
        });
    }
    let med = |v: &[Option<f64>]| median(&idx.iter().filter_map(|&i| v[i]).collect::<Vec<_>>());
    let gamma = med(&path.gamma_path);
    Ok(RegionLoadings {
        region_id: path.region_id.clone(),
        b: med(&path.b_path),
        beta: med(&path.beta_path),
        lambda: med(&path.lambda_path),
        gamma,
        se: None,
        lifestyle_included: gamma != 0.0,
        remainder_fit: None,
        source: LoadingSource::MedianOfWindows,
    })
}

/// Fit the remainder `μ_r − (b + βU + λδ_PS + γδ_L)` with the ARMA part of
/// `spec` (no intercept, no regressors).
pub fn attach_remainder(
    loadings: &mut RegionLoadings,
    mu: &[f64],
    factors: &FactorSet,
    spec: &ArimaSpec,
    opts: &FitOptions,
) -> Result<()> {
    check_aligned(mu, factors)?;
    let fp = loadings.factor_part(factors);
    let eps: Vec<f64> = mu.iter().zip(&fp).map(|(a, b)| a - b).collect();
    let spec = ArimaSpec {
        intercept: false,
        ..*spec
    };
    loadings.remainder_fit = Some(fit(&spec, &eps, &[], opts)?);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub months: Vec<Month>,
    pub observed: Vec<f64>,
    pub market: Vec<f64>,
    pub market_mining: Vec<f64>,
    pub market_mining_lifestyle: Vec<f64>,
    pub remainder: Vec<f64>,
}

impl Decomposition {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_table(
            path,
            &[
                "month",
                "observed",
                "market",
                "market_mining",
                "market_mining_lifestyle",
                "remainder",
            ],
            (0..self.months.len()).map(|t| {
                vec![
                    self.months[t].to_string(),
                    self.observed[t].to_string(),
                    self.market[t].to_string(),
                    self.market_mining[t].to_string(),
                    self.market_mining_lifestyle[t].to_string(),
                    self.remainder[t].to_string(),
                ]
            }),
        )
    }

    /// Share of the non-market variance of `μ_r − market` accounted for by
    /// the mining term, `1 − var(μ − market − λδ_PS) / var(μ − market)`.
    pub fn mining_share(&self) -> f64 {
        let nm: Vec<f64> = self.observed.iter().zip(&self.market).map(|(a, b)| a - b).collect();
        let after: Vec<f64> = self
            .observed
            .iter()
            .zip(&self.market_mining)
            .map(|(a, b)| a - b)
            .collect();
        1.0 - crate::stats::variance(&after) / crate::stats::variance(&nm)
    }
}

/// Cumulative factor approximations and the remainder.
pub fn decompose(mu: &[f64], factors: &FactorSet, l: &RegionLoadings) -> Result<Decomposition> {
    check_aligned(mu, factors)?;
    if ![l.b, l.beta, l.lambda, l.gamma].iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite loadings"));
    }
    let n = mu.len();
    let market: Vec<f64> = (0..n).map(|t| l.b + l.beta * factors.market[t]).collect();
    let mm: Vec<f64> = (0..n).map(|t| market[t] + l.lambda * factors.mining[t]).collect();
    let mml: Vec<f64> = (0..n).map(|t| mm[t] + l.gamma * factors.lifestyle[t]).collect();
    let remainder = (0..n).map(|t| mu[t] - mml[t]).collect();
    Ok(Decomposition {
        months: factors.months.clone(),
        observed: mu.to_vec(),
        market,
        market_mining: mm,
        market_mining_lifestyle: mml,
        remainder,
    })
}

/// `f_r = f_M^β`.
pub fn scenario_map(f_m: f64, beta: f64) -> Result<f64> {
    if !(f_m > 0.0) {
        return Err(Error::OutOfRange(format!("f_M = {f_m} must be positive")));
    }
    Ok(f_m.powf(beta))
}

/// `T_r = T_M / β`.
pub fn doubling_time(t_m: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::OutOfRange(format!("beta = {beta} must be positive")));
    }
    Ok(t_m / beta)
}

/// National doubling time in years from the realized average monthly growth
/// of the log index `u` between its first and last month.
pub fn national_doubling_time(u: &[f64]) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: u.len(),
        });
    }
    let rate = (u[u.len() - 1] - u[0]) / (u.len() - 1) as f64;
    if !(rate > 0.0) {
        return Err(Error::Degenerate("national index does not grow".into()));
    }
    Ok(std::f64::consts::LN_2 / rate / 12.0)
}

/// Factor-level standard deviations at the band horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonSigmas {
    pub mining: f64,
    pub lifestyle: f64,
    pub idiosyncratic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBand {
    pub region_id: String,
    pub f_m: f64,
    pub f_r: f64,
    pub x95_factors: f64,
    pub x95_total: f64,
    /// Log-space variance shares (mining, lifestyle, idiosyncratic).
    pub var_shares: [f64; 3],
    pub doubling_time_years: Option<f64>,
}

impl ScenarioBand {
    pub fn lo(&self) -> f64 {
        self.f_r / self.x95_total
    }

    pub fn hi(&self) -> f64 {
        self.f_r * self.x95_total
    }
}

/// Band multipliers and variance shares. With every input zero the band is
/// exactly 1 and the whole (zero) variance is attributed to ε.
pub fn band_components(lambda: f64, gamma: f64, s: &HorizonSigmas) -> Result<(f64, f64, [f64; 3])> {
    if s.mining < 0.0 || s.lifestyle < 0.0 || s.idiosyncratic < 0.0 {
        return Err(Error::invalid("negative horizon standard deviation"));
    }
    let vm = (lambda * s.mining).powi(2);
    let vl = (gamma * s.lifestyle).powi(2);
    let ve = s.idiosyncratic.powi(2);
    let total = vm + vl + ve;
    let shares = if total > 0.0 {
        [vm / total, vl / total, ve / total]
    } else {
        [0.0, 0.0, 1.0]
    };
    Ok((x95((vm + vl).sqrt()), x95(total.sqrt()), shares))
}

pub fn uncertainty_band(
    l: &RegionLoadings,
    f_m: f64,
    t_m: Option<f64>,
    s: &HorizonSigmas,
) -> Result<ScenarioBand> {
    let (xf, xt, shares) = band_components(l.lambda, l.gamma, s)?;
    Ok(ScenarioBand {
        region_id: l.region_id.clone(),
        f_m,
        f_r: scenario_map(f_m, l.beta)?,
        x95_factors: xf,
        x95_total: xt,
        var_shares: shares,
        doubling_time_years: match t_m {
            Some(t) => Some(doubling_time(t, l.beta)?),
            None => None,
        },
    })
}

/// `region,beta,lambda,gamma,f_r_at_2,doubling_time,x95,x95_total`
pub fn write_scenario_table(
    path: &Path,
    loadings: &[RegionLoadings],
    bands: &[ScenarioBand],
) -> Result<()> {
    write_table(
        path,
        &["region", "beta", "lambda", "gamma", "f_r_at_2", "doubling_time", "x95", "x95_total"],
        loadings.iter().zip(bands).map(|(l, b)| {
            vec![
                l.region_id.clone(),
                format!("{:.4}", l.beta),
                format!("{:.4}", l.lambda),
                format!("{:.4}", l.gamma),
                format!("{:.4}", 2f64.powf(l.beta)),
                b.doubling_time_years.map(|v| format!("{v:.4}")).unwrap_or_default(),
                format!("{:.4}", b.x95_factors),
                format!("{:.4}", b.x95_total),
            ]
        }),
    )
}

/// `region,f_r,lo,hi,share_mining,share_lifestyle,share_idio`
pub fn write_band_table(path: &Path, bands: &[ScenarioBand]) -> Result<()> {
    write_table(
        path,
        &["region", "f_r", "lo", "hi", "share_mining", "share_lifestyle", "share_idio"],
        bands.iter().map(|b| {
            vec![
                b.region_id.clone(),
                format!("{:.6}", b.f_r),
                format!("{:.6}", b.lo()),
                format!("{:.6}", b.hi()),
                format!("{:.6}", b.var_shares[0]),
                format!("{:.6}", b.var_shares[1]),
                format!("{:.6}", b.var_shares[2]),
            ]
        }),
    )
}
