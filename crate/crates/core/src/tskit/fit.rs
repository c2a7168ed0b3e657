//! Maximum-likelihood fitting of regression models with ARMA errors.
//!
//! The regression coefficients (intercept and exogenous columns) and σ² are
//! concentrated out of the likelihood: for fixed ARMA coefficients every
//! series is passed through the same filter and β is the GLS solution on the
//! innovations. Only the ARMA coefficients are searched numerically, in the
//! unconstrained partial-autocorrelation parameterization.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kalman::{filter, ArmaStateSpace, FilterOutput};
use super::spec::{ArimaSpec, ArmaParams};
use super::transform::{
    ar_to_pacf, ar_to_unconstrained, is_invertible, is_stationary, ma_to_unconstrained,
    unconstrained_to_ar, unconstrained_to_ma,
};
use crate::stats::ols;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Objective value returned for parameter vectors the filter rejects.
const PENALTY: f64 = 1e10;
/// Partial autocorrelations beyond this magnitude flag a boundary solution.
const BOUNDARY_PACF: f64 = 0.999;

/// Exogenous regressors, one `Vec` per column.
pub type Exog = [Vec<f64>];

/// All parameters of a regression-with-ARMA-errors model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arma: ArmaParams,
    /// Constant (drift when d = 1). Ignored when the spec has no intercept.
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of optimizer starts.
    pub starts: usize,
    /// Optional warm start, tried first.
    pub initial: Option<ArmaParams>,
    /// Observed-information standard errors (numerical Hessian). When false,
    /// only the conditional GLS standard errors of the regression part are
    /// reported.
    pub std_errors: bool,
    pub max_iter: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 3,
            initial: None,
            std_errors: true,
            max_iter: 2000,
        }
    }
}

impl FitOptions {
    /// Single start from `initial`, no Hessian. Used for window refits.
    pub fn warm(initial: ArmaParams) -> Self {
        FitOptions {
            starts: 1,
            initial: Some(initial),
            std_errors: false,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    /// Inverse of the numerically differentiated (σ²-profiled) log-likelihood Hessian.
    ObservedInformation,
    /// GLS covariance of the regression coefficients given the ARMA part.
    ConditionalGls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub kind: SeKind,
    /// NaN when unavailable.
    #[serde(deserialize_with = "crate::stats::nan_as_null::vec")]
    pub ar: Vec<f64>,
    #[serde(deserialize_with = "crate::stats::nan_as_null::vec")]
    pub ma: Vec<f64>,
    #[serde(deserialize_with = "crate::stats::nan_as_null::vec")]
    pub seasonal_ma: Vec<f64>,
    pub intercept: Option<f64>,
    #[serde(deserialize_with = "crate::stats::nan_as_null::vec")]
    pub exog: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArimaFit {
    pub spec: ArimaSpec,
    pub params: ArmaParams,
    /// `None` when the spec has no intercept.
    pub intercept: Option<f64>,
    pub beta_exog: Vec<f64>,
    pub sigma2: f64,
    #[serde(deserialize_with = "crate::stats::nan_as_null::deserialize")]
    pub loglik: f64,
    #[serde(deserialize_with = "crate::stats::nan_as_null::deserialize")]
    pub aicc: f64,
    /// Observations entering the likelihood (after differencing).
    pub n_obs: usize,
    /// One-step prediction errors of the (differenced) series.
    pub residuals: Vec<f64>,
    pub std_errors: Option<StdErrors>,
    pub converged: bool,
    pub boundary: bool,
    pub evaluations: u64,
    #[serde(skip)]
    pub(crate) y: Vec<f64>,
    #[serde(skip)]
    pub(crate) exog: Vec<Vec<f64>>,
}

impl ArimaFit {
    /// A fit assembled from known parameters, with no data attached.
    /// Forecast fans from such a fit condition on an infinitely long past.
    pub fn from_params(spec: ArimaSpec, params: ModelParams) -> Result<Self> {
        spec.validate()?;
        check_orders(&spec, &params.arma)?;
        let fit = ArimaFit {
            spec,
            intercept: spec.intercept.then_some(params.intercept),
            beta_exog: params.beta,
            sigma2: params.sigma2,
            params: params.arma,
            loglik: f64::NAN,
            aicc: f64::NAN,
            n_obs: 0,
            residuals: Vec::new(),
            std_errors: None,
            converged: true,
            boundary: false,
            evaluations: 0,
            y: Vec::new(),
            exog: Vec::new(),
        };
        fit.check_invariants()?;
        Ok(fit)
    }

    pub fn phi(&self) -> &[f64] {
        &self.params.ar
    }

    pub fn theta(&self) -> &[f64] {
        &self.params.ma
    }

    pub fn seasonal_theta(&self) -> Option<f64> {
        self.params.seasonal_ma.first().copied()
    }

    /// Estimated parameter count including σ².
    pub fn n_params(&self) -> usize {
        self.spec.n_arma() + self.beta_exog.len() + usize::from(self.spec.intercept) + 1
    }

    /// AICc recomputed from the stored log-likelihood.
    pub fn recompute_aicc(&self) -> Result<f64> {
        aicc(self.loglik, self.n_params(), self.n_obs)
    }

    pub fn has_data(&self) -> bool {
        !self.y.is_empty()
    }

    pub fn data(&self) -> (&[f64], &Exog) {
        (&self.y, &self.exog)
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            arma: self.params.clone(),
            intercept: self.intercept.unwrap_or(0.0),
            beta: self.beta_exog.clone(),
            sigma2: self.sigma2,
        }
    }

    /// Moduli of the roots of the AR polynomial `1 − φ₁z − …`.
    pub fn ar_root_moduli(&self) -> Vec<f64> {
        ar_root_moduli(&self.params.ar)
    }

    /// Stationarity, invertibility, σ² > 0 and AICc consistency.
    pub fn check_invariants(&self) -> Result<()> {
        if !is_stationary(&self.params.ar) {
            return Err(Error::NonStationary);
        }
        if !is_invertible(&self.params.ma) || !is_invertible(&self.params.seasonal_ma) {
            return Err(Error::NonStationary);
        }
        if self.ar_root_moduli().iter().any(|&m| m <= 1.0) {
            return Err(Error::NonStationary);
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::invalid(format!("sigma2 = {}", self.sigma2)));
        }
        if self.loglik.is_finite() {
            let a = self.recompute_aicc()?;
            if a != self.aicc {
                return Err(Error::invalid(format!(
                    "stored AICc {} differs from recomputed {a}",
                    self.aicc
                )));
            }
        }
        Ok(())
    }
}

/// Moduli of the roots of `1 − φ₁z − … − φ_p z^p`.
pub fn ar_root_moduli(phi: &[f64]) -> Vec<f64> {
    let p = phi.len();
    if p == 0 {
        return Vec::new();
    }
    // eigenvalues of the companion matrix are the inverse roots
    let comp = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            phi[j]
        } else if j + 1 == i {
            1.0
        } else {
            0.0
        }
    });
    comp.complex_eigenvalues()
        .iter()
        .map(|l| 1.0 / l.norm())
        .collect()
}

/// Hurvich–Tsai corrected AIC.
pub fn aicc(loglik: f64, k: usize, n: usize) -> Result<f64> {
    if n <= k + 1 {
        return Err(Error::TooShort {
            needed: k + 2,
            got: n,
        });
    }
    let (k, n) = (k as f64, n as f64);
    Ok(-2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0))
}

fn check_orders(spec: &ArimaSpec, p: &ArmaParams) -> Result<()> {
    if p.ar.len() != spec.p || p.ma.len() != spec.q || p.seasonal_ma.len() != spec.seasonal_q {
        return Err(Error::Dimension(format!(
            "parameters ({}, {}, {}) do not match spec {}",
            p.ar.len(),
            p.ma.len(),
            p.seasonal_ma.len(),
            spec.label()
        )));
    }
    Ok(())
}

/// Response and regression columns after differencing.
pub(crate) struct Prepared {
    pub n: usize,
    pub y: Vec<f64>,
    /// Intercept column (if any) first, then exogenous columns.
    pub cols: Vec<Vec<f64>>,
}

impl Prepared {
    pub fn new(spec: &ArimaSpec, y: &[f64], exog: &Exog) -> Result<Self> {
        for (j, c) in exog.iter().enumerate() {
            if c.len() != y.len() {
                return Err(Error::Dimension(format!(
                    "exog column {j} has {} rows, y has {}",
                    c.len(),
                    y.len()
                )));
            }
        }
        if y.iter().chain(exog.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in series"));
        }
        let tr = |s: &[f64]| -> Vec<f64> {
            if spec.d == 1 {
                s.windows(2).map(|w| w[1] - w[0]).collect()
            } else {
                s.to_vec()
            }
        };
        let yd = tr(y);
        let n = yd.len();
        let mut cols = Vec::with_capacity(exog.len() + 1);
        if spec.intercept {
            cols.push(vec![1.0; n]);
        }
        cols.extend(exog.iter().map(|c| tr(c)));
        Ok(Prepared { n, y: yd, cols })
    }
}

pub(crate) struct Profile {
    pub loglik: f64,
    pub sigma2: f64,
    /// Coefficients for `Prepared::cols`; dropped collinear columns get 0.
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Weighted design after column dropping, for GLS standard errors.
    pub design: DMatrix<f64>,
    pub kept: Vec<usize>,
    pub out: FilterOutput,
}

/// Indexes of columns that are not (numerically) in the span of earlier ones.
fn independent_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..a.ncols() {
        let col = a.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = col.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let rn = r.norm();
        if rn > 1e-9 * norm {
            basis.push(r / rn);
            kept.push(j);
        }
    }
    kept
}

/// σ²- and β-concentrated log-likelihood for fixed ARMA coefficients.
pub(crate) fn profile(params: &ArmaParams, prep: &Prepared) -> Result<Profile> {
    let ss = ArmaStateSpace::new(params);
    let mut series: Vec<&[f64]> = Vec::with_capacity(prep.cols.len() + 1);
    series.push(&prep.y);
    series.extend(prep.cols.iter().map(|c| c.as_slice()));
    let out = filter(&ss, &series)?;
    let n = prep.n;
    let w: Vec<f64> = out.f.iter().map(|f| 1.0 / f.sqrt()).collect();
    let k = prep.cols.len();
    let mut beta = vec![0.0; k];
    let mut resid = out.innovations[0].clone();
    let mut kept = Vec::new();
    let mut design = DMatrix::zeros(n, 0);
    if k > 0 {
        let a = DMatrix::from_fn(n, k, |t, j| out.innovations[j + 1][t] * w[t]);
        kept = independent_columns(&a);
        design = a.select_columns(&kept);
        if !kept.is_empty() {
            let b = DVector::from_fn(n, |t, _| out.innovations[0][t] * w[t]);
            let (coef, _) = ols(&design, &b)?;
            for (i, &j) in kept.iter().enumerate() {
                beta[j] = coef[i];
            }
            for (t, r) in resid.iter_mut().enumerate() {
                for (i, &j) in kept.iter().enumerate() {
                    *r -= coef[i] * out.innovations[j + 1][t];
                }
            }
        }
    }
    let rss: f64 = resid.iter().zip(&out.f).map(|(v, f)| v * v / f).sum();
    let sigma2 = (rss / n as f64).max(f64::MIN_POSITIVE);
    let sum_ln_f: f64 = out.f.iter().map(|f| f.ln()).sum();
    let loglik = -0.5 * n as f64 * (LN_2PI + sigma2.ln() + 1.0) - 0.5 * sum_ln_f;
    Ok(Profile {
        loglik,
        sigma2,
        beta,
        residuals: resid,
        design,
        kept,
        out,
    })
}

/// Exact Gaussian log-likelihood at fully specified parameters.
pub fn loglik(spec: &ArimaSpec, params: &ModelParams, y: &[f64], exog: &Exog) -> Result<f64> {
    spec.validate()?;
    check_orders(spec, &params.arma)?;
    if params.beta.len() != exog.len() {
        return Err(Error::Dimension(format!(
            "{} exog coefficients for {} columns",
            params.beta.len(),
            exog.len()
        )));
    }
    if !(params.sigma2 > 0.0) {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    if !is_stationary(&params.arma.ar)
        || !is_invertible(&params.arma.ma)
        || !is_invertible(&params.arma.seasonal_ma)
    {
        return Err(Error::NonStationary);
    }
    let prep = Prepared::new(spec, y, exog)?;
    let u = regression_errors(spec, &prep, params.intercept, &params.beta);
    let ss = ArmaStateSpace::new(&params.arma);
    let out = filter(&ss, &[&u])?;
    let n = prep.n as f64;
    let quad: f64 = out.innovations[0].iter().zip(&out.f).map(|(v, f)| v * v / f).sum();
    let sum_ln_f: f64 = out.f.iter().map(|f| f.ln()).sum();
    Ok(-0.5 * n * (LN_2PI + params.sigma2.ln()) - 0.5 * sum_ln_f - 0.5 * quad / params.sigma2)
}

fn regression_errors(spec: &ArimaSpec, prep: &Prepared, intercept: f64, beta: &[f64]) -> Vec<f64> {
    let off = usize::from(spec.intercept);
    (0..prep.n)
        .map(|t| {
            let mut u = prep.y[t];
            if spec.intercept {
                u -= intercept;
            }
            for (j, b) in beta.iter().enumerate() {
                u -= b * prep.cols[j + off][t];
            }
            u
        })
        .collect()
}

/// σ²-profiled log-likelihood over (ARMA, intercept, β) in natural units.
fn profiled_full(spec: &ArimaSpec, prep: &Prepared, x: &[f64]) -> Result<f64> {
    let (arma, rest) = split_natural(spec, x);
    if !is_stationary(&arma.ar) || !is_invertible(&arma.ma) || !is_invertible(&arma.seasonal_ma)
    {
        return Err(Error::NonStationary);
    }
    let (c, beta) = if spec.intercept {
        (rest[0], &rest[1..])
    } else {
        (0.0, rest)
    };
    let u = regression_errors(spec, prep, c, beta);
    let out = filter(&ArmaStateSpace::new(&arma), &[&u])?;
    let n = prep.n as f64;
    let rss: f64 = out.innovations[0].iter().zip(&out.f).map(|(v, f)| v * v / f).sum();
    let s2 = (rss / n).max(f64::MIN_POSITIVE);
    let sum_ln_f: f64 = out.f.iter().map(|f| f.ln()).sum();
    Ok(-0.5 * n * (LN_2PI + s2.ln() + 1.0) - 0.5 * sum_ln_f)
}

fn split_natural<'a>(spec: &ArimaSpec, x: &'a [f64]) -> (ArmaParams, &'a [f64]) {
    let (p, q, sq) = (spec.p, spec.q, spec.seasonal_q);
    (
        ArmaParams::new(
            x[..p].to_vec(),
            x[p..p + q].to_vec(),
            x[p + q..p + q + sq].to_vec(),
        ),
        &x[p + q + sq..],
    )
}

fn params_from_unconstrained(spec: &ArimaSpec, x: &[f64]) -> ArmaParams {
    let (p, q) = (spec.p, spec.q);
    ArmaParams::new(
        unconstrained_to_ar(&x[..p]),
        unconstrained_to_ma(&x[p..p + q]),
        unconstrained_to_ma(&x[p + q..]),
    )
}

fn unconstrained_from_params(spec: &ArimaSpec, a: &ArmaParams) -> Option<Vec<f64>> {
    if check_orders(spec, a).is_err() {
        return None;
    }
    let mut x = ar_to_unconstrained(&a.ar)?;
    x.extend(ma_to_unconstrained(&a.ma)?);
    x.extend(ma_to_unconstrained(&a.seasonal_ma)?);
    Some(x)
}

struct Objective<'a> {
    spec: &'a ArimaSpec,
    prep: &'a Prepared,
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let params = params_from_unconstrained(self.spec, x);
        Ok(match profile(&params, self.prep) {
            Ok(p) if p.loglik.is_finite() => -p.loglik / self.prep.n as f64,
            _ => PENALTY,
        })
    }
}

struct NmResult {
    x: Vec<f64>,
    cost: f64,
    converged: bool,
    evals: u64,
}

fn nelder_mead(obj: Objective<'_>, x0: &[f64], step: f64, max_iter: u64) -> Result<NmResult> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += if v[i] > 2.0 { -step } else { step };
        simplex.push(v);
    }
    let tol = 1e-10;
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .map_err(|e| Error::Optimizer(e.to_string()))?;
    let res = Executor::new(obj, solver)
        .configure(|s| s.max_iters(max_iter).counting(true))
        .run()
        .map_err(|e| Error::Optimizer(e.to_string()))?;
    let state = res.state();
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let evals = state.get_func_counts().get("cost_count").copied().unwrap_or(0);
    Ok(NmResult {
        x: state.best_param.clone().unwrap_or_else(|| x0.to_vec()),
        cost: state.get_best_cost(),
        converged,
        evals,
    })
}

/// Hannan–Rissanen style starting values; falls back to zeros.
fn initial_guess(spec: &ArimaSpec, prep: &Prepared) -> Vec<f64> {
    let zeros = vec![0.0; spec.n_arma()];
    let u = if prep.cols.is_empty() {
        prep.y.clone()
    } else {
        let a = DMatrix::from_fn(prep.n, prep.cols.len(), |t, j| prep.cols[j][t]);
        let kept = independent_columns(&a);
        let a = a.select_columns(&kept);
        let b = DVector::from_column_slice(&prep.y);
        match ols(&a, &b) {
            Ok((coef, _)) => (&b - &a * coef).iter().copied().collect(),
            Err(_) => return zeros,
        }
    };
    let n = u.len();
    let nma = spec.q + spec.seasonal_q;
    let ehat: Vec<f64> = if nma > 0 {
        let l = if spec.seasonal_q > 0 { 15 } else { (spec.p + spec.q + 4).max(8) };
        if n < 4 * l {
            return zeros;
        }
        match ar_ols(&u, &(1..=l).collect::<Vec<_>>(), &[], &[]) {
            Some((_, e)) => e,
            None => return zeros,
        }
    } else {
        vec![0.0; n]
    };
    let ar_lags: Vec<usize> = (1..=spec.p).collect();
    let ma_lags: Vec<usize> = (1..=spec.q).collect();
    let sma_lags: Vec<usize> = if spec.seasonal_q > 0 { vec![12] } else { vec![] };
    let Some((coef, _)) = ar_ols(&u, &ar_lags, &ma_lags.iter().chain(&sma_lags).copied().collect::<Vec<_>>(), &ehat)
    else {
        return zeros;
    };
    let a = ArmaParams::new(
        coef[..spec.p].to_vec(),
        coef[spec.p..spec.p + spec.q].to_vec(),
        coef[spec.p + spec.q..].to_vec(),
    );
    let mut x = Vec::with_capacity(spec.n_arma());
    x.extend(ar_to_unconstrained(&a.ar).unwrap_or_else(|| vec![0.0; spec.p]));
    x.extend(ma_to_unconstrained(&a.ma).unwrap_or_else(|| vec![0.0; spec.q]));
    x.extend(ma_to_unconstrained(&a.seasonal_ma).unwrap_or_else(|| vec![0.0; spec.seasonal_q]));
    // keep starts away from the transform's flat tails
    x.iter().map(|v| v.clamp(-3.0, 3.0)).collect()
}

/// Regress `u_t` on its own lags and lags of `e`. Returns the coefficients and
/// residuals (zero before the first usable index).
fn ar_ols(u: &[f64], lags: &[usize], e_lags: &[usize], e: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = lags.len() + e_lags.len();
    let start = lags.iter().chain(e_lags).copied().max().unwrap_or(0);
    let n = u.len();
    if k == 0 {
        return Some((vec![], u.to_vec()));
    }
    if n <= start + k + 2 {
        return None;
    }
    let rows = n - start;
    let a = DMatrix::from_fn(rows, k, |i, j| {
        let t = i + start;
        if j < lags.len() {
            u[t - lags[j]]
        } else {
            e[t - e_lags[j - lags.len()]]
        }
    });
    let b = DVector::from_column_slice(&u[start..]);
    let (coef, _) = ols(&a, &b).ok()?;
    let fitted = &a * &coef;
    let mut resid = vec![0.0; n];
    for i in 0..rows {
        resid[i + start] = b[i] - fitted[i];
    }
    Some((coef.iter().copied().collect(), resid))
}

/// Fit `spec` to `y` with exogenous regressors by exact maximum likelihood.
pub fn fit(spec: &ArimaSpec, y: &[f64], exog: &Exog, opts: &FitOptions) -> Result<ArimaFit> {
    spec.validate()?;
    let prep = Prepared::new(spec, y, exog)?;
    let k_total = spec.n_arma() + prep.cols.len() + 1;
    if prep.n <= k_total + 10 {
        return Err(Error::TooShort {
            needed: k_total + 11 + spec.d,
            got: y.len(),
        });
    }
    let narma = spec.n_arma();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 0;
    let mut converged = true;
    if narma > 0 {
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(x) = opts.initial.as_ref().and_then(|a| unconstrained_from_params(spec, a)) {
            starts.push(x.iter().map(|v| v.clamp(-4.0, 4.0)).collect());
        }
        let hr = initial_guess(spec, &prep);
        starts.push(hr.clone());
        starts.push(vec![0.0; narma]);
        starts.push(hr.iter().map(|v| 0.5 * v).collect());
        starts.push(vec![0.5; narma]);
        let mut uniq: Vec<Vec<f64>> = Vec::new();
        for s in starts {
            if !uniq.iter().any(|u| u == &s) {
                uniq.push(s);
            }
        }
        uniq.truncate(opts.starts.max(1));
        for x0 in &uniq {
            let r = nelder_mead(Objective { spec, prep: &prep }, x0, 0.3, opts.max_iter)?;
            evaluations += r.evals;
            if best.as_ref().is_none_or(|(_, c)| r.cost < *c) {
                best = Some((r.x, r.cost));
            }
        }
        let (x, _) = best.clone().expect("at least one start");
        let polish = nelder_mead(Objective { spec, prep: &prep }, &x, 0.05, opts.max_iter)?;
        evaluations += polish.evals;
        converged = polish.converged;
        if polish.cost <= best.as_ref().map_or(f64::INFINITY, |b| b.1) {
            best = Some((polish.x, polish.cost));
        }
        if best.as_ref().is_some_and(|b| b.1 >= PENALTY) {
            return Err(Error::Optimizer(format!(
                "no admissible parameters found for {}",
                spec.label()
            )));
        }
    }
    let x = best.map(|b| b.0).unwrap_or_default();
    let params = params_from_unconstrained(spec, &x);
    let prof = profile(&params, &prep)?;
    let boundary = ar_to_pacf(&params.ar)
        .into_iter()
        .flatten()
        .chain(ar_to_pacf(&params.ma.iter().map(|t| -t).collect::<Vec<_>>()).into_iter().flatten())
        .chain(
            ar_to_pacf(&params.seasonal_ma.iter().map(|t| -t).collect::<Vec<_>>())
                .into_iter()
                .flatten(),
        )
        .any(|r| r.abs() >= BOUNDARY_PACF);
    let off = usize::from(spec.intercept);
    let intercept = spec.intercept.then(|| prof.beta[0]);
    let beta_exog = prof.beta[off..].to_vec();
    let std_errors = Some(if opts.std_errors {
        observed_information_se(spec, &prep, &params, &prof)
            .unwrap_or_else(|| gls_se(spec, &prof))
    } else {
        gls_se(spec, &prof)
    });
    let k = narma + prep.cols.len() + 1;
    let aicc_v = aicc(prof.loglik, k, prep.n)?;
    Ok(ArimaFit {
        spec: *spec,
        params,
        intercept,
        beta_exog,
        sigma2: prof.sigma2,
        loglik: prof.loglik,
        aicc: aicc_v,
        n_obs: prep.n,
        residuals: prof.residuals,
        std_errors,
        converged,
        boundary,
        evaluations,
        y: y.to_vec(),
        exog: exog.to_vec(),
    })
}

fn gls_se(spec: &ArimaSpec, prof: &Profile) -> StdErrors {
    let k = prof.beta.len();
    let mut se = vec![f64::NAN; k];
    let xtx = prof.design.transpose() * &prof.design;
    if let Some(inv) = xtx.try_inverse() {
        for (i, &j) in prof.kept.iter().enumerate() {
            se[j] = (prof.sigma2 * inv[(i, i)]).max(0.0).sqrt();
        }
    }
    let off = usize::from(spec.intercept);
    StdErrors {
        kind: SeKind::ConditionalGls,
        ar: vec![f64::NAN; spec.p],
        ma: vec![f64::NAN; spec.q],
        seasonal_ma: vec![f64::NAN; spec.seasonal_q],
        intercept: spec.intercept.then(|| se[0]),
        exog: se[off..].to_vec(),
    }
}

fn observed_information_se(
    spec: &ArimaSpec,
    prep: &Prepared,
    params: &ArmaParams,
    prof: &Profile,
) -> Option<StdErrors> {
    // collinear regression columns make the Hessian singular
    if prof.kept.len() != prof.beta.len() {
        return None;
    }
    let mut x0: Vec<f64> = params.ar.clone();
    x0.extend(&params.ma);
    x0.extend(&params.seasonal_ma);
    x0.extend(&prof.beta);
    let k = x0.len();
    let h: Vec<f64> = x0.iter().map(|v| 1e-4 * v.abs().max(0.5)).collect();
    let f = |x: &[f64]| profiled_full(spec, prep, x).ok().filter(|v| v.is_finite());
    let f0 = f(&x0)?;
    let mut hess = DMatrix::zeros(k, k);
    let mut x = x0.clone();
    for i in 0..k {
        x[i] = x0[i] + h[i];
        let fp = f(&x)?;
        x[i] = x0[i] - h[i];
        let fm = f(&x)?;
        x[i] = x0[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut e = |si: f64, sj: f64| {
                x[i] = x0[i] + si * h[i];
                x[j] = x0[j] + sj * h[j];
                let v = f(&x);
                x[i] = x0[i];
                x[j] = x0[j];
                v
            };
            let v = (e(1.0, 1.0)? - e(1.0, -1.0)? - e(-1.0, 1.0)? + e(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let info = -hess;
    let chol = info.cholesky()?;
    let cov = chol.inverse();
    let se: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt()).collect();
    if se.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (p, q, sq) = (spec.p, spec.q, spec.seasonal_q);
    let r = p + q + sq;
    let off = usize::from(spec.intercept);
    Some(StdErrors {
        kind: SeKind::ObservedInformation,
        ar: se[..p].to_vec(),
        ma: se[p..p + q].to_vec(),
        seasonal_ma: se[p + q..r].to_vec(),
        intercept: spec.intercept.then(|| se[r]),
        exog: se[r + off..].to_vec(),
    })
}
