//! Simulation of ARMA processes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::spec::ArmaParams;
use super::transform::is_stationary;
use crate::{Error, Result};

/// Default burn-in discarded before the returned sample.
pub const BURN_IN: usize = 500;

/// `n` draws of a zero-mean ARMA process with innovation variance `sigma2`,
/// after discarding `burn` start-up values.
pub fn simulate_arma<R: Rng + ?Sized>(
    params: &ArmaParams,
    sigma2: f64,
    n: usize,
    burn: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !is_stationary(&params.ar) {
        return Err(Error::NonStationary);
    }
    if sigma2 < 0.0 {
        return Err(Error::invalid("negative innovation variance"));
    }
    let c = params.full_ma();
    let total = n + burn;
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let e: Vec<f64> = (0..total).map(|_| normal.sample(rng)).collect();
    let mut x = vec![0.0; total];
    for t in 0..total {
        let mut v = e[t];
        for (j, cj) in c.iter().enumerate() {
            if t > j {
                v += cj * e[t - 1 - j];
            }
        }
        for (i, phi) in params.ar.iter().enumerate() {
            if t > i {
                v += phi * x[t - 1 - i];
            }
        }
        x[t] = v;
    }
    Ok(x.split_off(burn))
}
