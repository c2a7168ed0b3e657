//! Kalman filter for an ARMA error process in Harvey's companion form.
//!
//! ```text
//! x[t+1] = T x[t] + R e[t+1],   u[t] = x₀[t],   e ~ N(0, σ²)
//! ```
//!
//! with `T` the companion matrix of the AR polynomial and
//! `R = (1, c₁, …, c_{m−1})` the full MA polynomial. All covariances are
//! held in units of σ², so the filter output is independent of σ². The
//! initial state covariance is the stationary solution of `P = TPTᵀ + RRᵀ`.

use nalgebra::DMatrix;

use super::spec::ArmaParams;
use super::transform::is_stationary;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ArmaStateSpace {
    pub m: usize,
    /// AR coefficients padded to length `m`.
    pub phi: Vec<f64>,
    /// `(1, c₁, …)` padded to length `m`.
    pub r: Vec<f64>,
}

impl ArmaStateSpace {
    pub fn new(params: &ArmaParams) -> Self {
        let c = params.full_ma();
        let m = params.ar.len().max(c.len() + 1).max(1);
        let mut phi = vec![0.0; m];
        phi[..params.ar.len()].copy_from_slice(&params.ar);
        let mut r = vec![0.0; m];
        r[0] = 1.0;
        r[1..=c.len()].copy_from_slice(&c);
        ArmaStateSpace { m, phi, r }
    }

    pub fn transition(&self) -> DMatrix<f64> {
        let m = self.m;
        DMatrix::from_fn(m, m, |i, j| {
            let mut v = if j == 0 { self.phi[i] } else { 0.0 };
            if j == i + 1 {
                v += 1.0;
            }
            v
        })
    }

    /// `T a`
    fn t_vec(&self, a: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            out[i] = self.phi[i] * a[0] + if i + 1 < m { a[i + 1] } else { 0.0 };
        }
    }

    /// `T P Tᵀ` for symmetric `P` stored row-major.
    fn t_p_tt(&self, p: &[f64], tp: &mut [f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            for j in 0..m {
                tp[i * m + j] = self.phi[i] * p[j] + if i + 1 < m { p[(i + 1) * m + j] } else { 0.0 };
            }
        }
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] =
                    tp[i * m] * self.phi[j] + if j + 1 < m { tp[i * m + j + 1] } else { 0.0 };
            }
        }
    }

    /// Stationary state covariance (σ² = 1).
    pub fn stationary_cov(&self) -> Result<Vec<f64>> {
        if !is_stationary(&self.phi) {
            return Err(Error::NonStationary);
        }
        let m = self.m;
        let rr = DMatrix::from_fn(m, m, |i, j| self.r[i] * self.r[j]);
        if self.phi.iter().all(|&v| v == 0.0) {
            // pure MA: finite sum Σ_{j<m} T^j RRᵀ T'^j
            let t = self.transition();
            let mut p = rr.clone();
            let mut term = rr;
            for _ in 1..m {
                term = &t * term * t.transpose();
                p += &term;
            }
            return Ok(p.transpose().as_slice().to_vec());
        }
        // doubling: P_{k+1} = P_k + A_k P_k A_kᵀ, A_{k+1} = A_k²
        let mut a = self.transition();
        let mut p = rr;
        for _ in 0..200 {
            let inc = &a * &p * a.transpose();
            let done = inc.amax() <= 1e-15 * p.amax();
            p += inc;
            if done {
                return Ok(p.transpose().as_slice().to_vec());
            }
            a = &a * &a;
        }
        Err(Error::NonStationary)
    }
}

/// Innovations of several series passed through the same filter.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// `innovations[s][t]`
    pub innovations: Vec<Vec<f64>>,
    /// Innovation variances in units of σ².
    pub f: Vec<f64>,
    /// Predicted state mean after the last observation, per series.
    pub next_state: Vec<Vec<f64>>,
    /// Predicted state covariance after the last observation (row-major).
    pub next_cov: Vec<f64>,
}

/// Filter each series in `series` (all of equal length) with the ARMA model.
pub fn filter(ss: &ArmaStateSpace, series: &[&[f64]]) -> Result<FilterOutput> {
    let m = ss.m;
    let n = series.first().map_or(0, |s| s.len());
    let k = series.len();
    let mut p = ss.stationary_cov()?;
    let rr: Vec<f64> = (0..m * m).map(|i| ss.r[i / m] * ss.r[i % m]).collect();
    let mut states = vec![vec![0.0; m]; k];
    let mut innovations = vec![Vec::with_capacity(n); k];
    let mut f = Vec::with_capacity(n);
    let mut tp = vec![0.0; m * m];
    let mut tpt = vec![0.0; m * m];
    let mut gain = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    let mut steady = false;
    for t in 0..n {
        let ft = p[0];
        if !(ft > 0.0) || !ft.is_finite() {
            return Err(Error::Singular("nonpositive innovation variance".into()));
        }
        f.push(ft);
        if !steady {
            // K = T P Z / F
            let pz: Vec<f64> = (0..m).map(|i| p[i * m]).collect();
            ss.t_vec(&pz, &mut gain);
            gain.iter_mut().for_each(|g| *g /= ft);
        }
        for (s, x) in series.iter().enumerate() {
            let v = x[t] - states[s][0];
            innovations[s].push(v);
            ss.t_vec(&states[s], &mut tmp);
            for i in 0..m {
                states[s][i] = tmp[i] + gain[i] * v;
            }
        }
        if !steady {
            ss.t_p_tt(&p, &mut tp, &mut tpt);
            let mut delta: f64 = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let v = tpt[i * m + j] - gain[i] * gain[j] * ft + rr[i * m + j];
                    delta = delta.max((v - p[i * m + j]).abs());
                    p[i * m + j] = v;
                }
            }
            if delta < 1e-13 {
                steady = true;
            }
        }
    }
    Ok(FilterOutput {
        innovations,
        f,
        next_state: states,
        next_cov: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_stationary_variance() {
        let ss = ArmaStateSpace::new(&ArmaParams::new(vec![0.5], vec![], vec![]));
        let p = ss.stationary_cov().unwrap();
        assert!((p[0] - 1.0 / 0.75).abs() < 1e-12);
    }

    #[test]
    fn arma_stationary_variance_matches_psi_sum() {
        let params = ArmaParams::new(vec![1.932, -0.934], vec![-0.398], vec![]);
        let ss = ArmaStateSpace::new(&params);
        let p = ss.stationary_cov().unwrap();
        let psi = params.psi_weights(20000);
        let want: f64 = psi.iter().map(|v| v * v).sum();
        assert!((p[0] - want).abs() < 1e-8 * want);
    }

    #[test]
    fn seasonal_ma_variance() {
        let params = ArmaParams::new(vec![], vec![0.3], vec![-0.5]);
        let ss = ArmaStateSpace::new(&params);
        assert_eq!(ss.m, 14);
        let p = ss.stationary_cov().unwrap();
        let want = 1.0 + params.full_ma().iter().map(|c| c * c).sum::<f64>();
        assert!((p[0] - want).abs() < 1e-12);
    }

    #[test]
    fn nonstationary_rejected() {
        let ss = ArmaStateSpace::new(&ArmaParams::new(vec![1.0], vec![], vec![]));
        assert!(matches!(ss.stationary_cov(), Err(Error::NonStationary)));
    }
}
