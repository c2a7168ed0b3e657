use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Seasonal period of the optional seasonal MA term.
pub const SEASONAL_PERIOD: usize = 12;

/// ARIMA(p, d, q) × (0, 0, Q)_12 with optional intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    /// Seasonal MA order, 0 or 1.
    pub seasonal_q: usize,
    pub intercept: bool,
}

impl ArimaSpec {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        ArimaSpec {
            p,
            d,
            q,
            seasonal_q: 0,
            intercept: true,
        }
    }

    pub fn with_seasonal_ma(mut self) -> Self {
        self.seasonal_q = 1;
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d > 1 {
            return Err(Error::OutOfRange(format!("d = {} (must be 0 or 1)", self.d)));
        }
        if self.p > 3 || self.q > 2 || self.seasonal_q > 1 {
            return Err(Error::OutOfRange(format!(
                "orders ({}, {}, {}) x (0, 0, {}) outside p<=3, q<=2, Q<=1",
                self.p, self.q, self.d, self.seasonal_q
            )));
        }
        Ok(())
    }

    /// Number of ARMA coefficients (AR + MA + seasonal MA).
    pub fn n_arma(&self) -> usize {
        self.p + self.q + self.seasonal_q
    }

    pub fn label(&self) -> String {
        if self.seasonal_q > 0 {
            format!("({},{},{})(0,0,{})[12]", self.p, self.d, self.q, self.seasonal_q)
        } else {
            format!("({},{},{})", self.p, self.d, self.q)
        }
    }
}

/// ARMA coefficients with the MA polynomial written as `1 + θ₁B + …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ArmaParams {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub seasonal_ma: Vec<f64>,
}

impl ArmaParams {
    pub fn new(ar: Vec<f64>, ma: Vec<f64>, seasonal_ma: Vec<f64>) -> Self {
        ArmaParams {
            ar,
            ma,
            seasonal_ma,
        }
    }

    /// Coefficients `c₁ … c_K` of `(1 + Σθ_j B^j)(1 + Θ B^12)`.
    pub fn full_ma(&self) -> Vec<f64> {
        let big = self.seasonal_ma.len() * SEASONAL_PERIOD;
        let deg = if big > 0 { big + self.ma.len() } else { self.ma.len() };
        let mut c = vec![0.0; deg];
        for (j, &t) in self.ma.iter().enumerate() {
            c[j] += t;
        }
        for (s, &big_theta) in self.seasonal_ma.iter().enumerate() {
            let base = (s + 1) * SEASONAL_PERIOD;
            c[base - 1] += big_theta;
            for (j, &t) in self.ma.iter().enumerate() {
                c[base + j] += big_theta * t;
            }
        }
        c
    }

    /// MA(∞) weights ψ₀ = 1, ψ₁, … of the ARMA process, `n` terms.
    pub fn psi_weights(&self, n: usize) -> Vec<f64> {
        let c = self.full_ma();
        let mut psi = vec![0.0; n];
        if n == 0 {
            return psi;
        }
        psi[0] = 1.0;
        for j in 1..n {
            let mut v = if j <= c.len() { c[j - 1] } else { 0.0 };
            for (i, &phi) in self.ar.iter().enumerate() {
                if j > i {
                    v += phi * psi[j - 1 - i];
                }
            }
            psi[j] = v;
        }
        psi
    }
}
