//! Maps between unconstrained reals and stationary / invertible coefficients
//! through partial autocorrelations.

const PACF_LIMIT: f64 = 0.9999;

/// Partial autocorrelations to AR coefficients (Durbin–Levinson).
pub fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - rk * prev[k - 1 - j];
        }
        phi.push(rk);
    }
    phi
}

/// Inverse of [`pacf_to_ar`]. Returns `None` when any partial autocorrelation
/// reaches the unit circle, i.e. the polynomial is not stationary.
pub fn ar_to_pacf(phi: &[f64]) -> Option<Vec<f64>> {
    let p = phi.len();
    let mut cur = phi.to_vec();
    let mut r = vec![0.0; p];
    for k in (0..p).rev() {
        let rk = cur[k];
        if !(rk.abs() < 1.0) {
            return None;
        }
        r[k] = rk;
        let denom = 1.0 - rk * rk;
        let prev: Vec<f64> = (0..k).map(|j| (cur[j] + rk * cur[k - 1 - j]) / denom).collect();
        cur = prev;
    }
    Some(r)
}

pub fn is_stationary(phi: &[f64]) -> bool {
    ar_to_pacf(phi).is_some_and(|r| r.iter().all(|v| v.abs() < 1.0))
}

/// MA polynomial `1 + Σθ_j B^j` is invertible.
pub fn is_invertible(theta: &[f64]) -> bool {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    is_stationary(&neg)
}

pub fn unconstrained_to_ar(x: &[f64]) -> Vec<f64> {
    pacf_to_ar(&x.iter().map(|v| v.tanh()).collect::<Vec<_>>())
}

pub fn unconstrained_to_ma(x: &[f64]) -> Vec<f64> {
    unconstrained_to_ar(x).into_iter().map(|v| -v).collect()
}

pub fn ar_to_unconstrained(phi: &[f64]) -> Option<Vec<f64>> {
    ar_to_pacf(phi).map(|r| {
        r.into_iter()
            .map(|v| v.clamp(-PACF_LIMIT, PACF_LIMIT).atanh())
            .collect()
    })
}

pub fn ma_to_unconstrained(theta: &[f64]) -> Option<Vec<f64>> {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    ar_to_unconstrained(&neg)
}
