//! Market, Mining and Lifestyle factor proxies.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::csv_writer;
use crate::rsindex::IndexPanel;
use crate::stats::{correlation, covariance, demean};
use crate::{Error, Month, Result};

/// Region roles used to build the two spreads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorDefinition {
    /// Long leg of the mining spread (Perth role).
    pub mining_long: String,
    /// Short leg of the mining spread (Sydney role).
    pub mining_short: String,
    pub lifestyle_top: Vec<String>,
    pub lifestyle_bottom: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSet {
    pub months: Vec<Month>,
    pub market: Vec<f64>,
    pub mining: Vec<f64>,
    pub lifestyle: Vec<f64>,
    pub alpha_mining: f64,
    pub alpha_lifestyle: f64,
    pub definition: FactorDefinition,
}

impl FactorSet {
    pub fn len(&self) -> usize {
        self.market.len()
    }

    pub fn is_empty(&self) -> bool {
        self.market.is_empty()
    }

    /// First `n` months.
    pub fn truncated(&self, n: usize) -> FactorSet {
        FactorSet {
            months: self.months[..n].to_vec(),
            market: self.market[..n].to_vec(),
            mining: self.mining[..n].to_vec(),
            lifestyle: self.lifestyle[..n].to_vec(),
            ..self.clone()
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        w.write_record(["month", "market", "mining", "lifestyle"])
            .map_err(err)?;
        for t in 0..self.len() {
            w.write_record([
                self.months[t].to_string(),
                self.market[t].to_string(),
                self.mining[t].to_string(),
                self.lifestyle[t].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `cov(a, U) / cov(b, U)`.
pub fn trend_adjust_alpha(a: &[f64], b: &[f64], u: &[f64]) -> Result<f64> {
    if a.len() != u.len() || b.len() != u.len() {
        return Err(Error::Dimension("series are not aligned".into()));
    }
    let cb = covariance(b, u);
    if cb.abs() < 1e-300 {
        return Err(Error::Degenerate("cov(b, U) is zero".into()));
    }
    Ok(covariance(a, u) / cb)
}

/// Demeaned `a − α b`.
pub fn mining_spread(long: &[f64], short: &[f64], alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = long.iter().zip(short).map(|(p, s)| p - alpha * s).collect();
    demean(&raw)
}

/// Weighted mean of a region basket. Missing weights count as zero.
pub fn basket_mean(panel: &IndexPanel, basket: &[String], weights: &HashMap<String, f64>) -> Result<Vec<f64>> {
    if basket.is_empty() {
        return Err(Error::invalid("empty basket"));
    }
    let cols: Vec<(usize, f64)> = basket
        .iter()
        .map(|id| {
            let c = panel
                .column_of(id)
                .ok_or_else(|| Error::UnknownRegion(id.clone()))?;
            Ok((c, weights.get(id).copied().unwrap_or(0.0)))
        })
        .collect::<Result<_>>()?;
    let total: f64 = cols.iter().map(|c| c.1).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("basket has zero total weight".into()));
    }
    Ok((0..panel.n_months())
        .map(|t| cols.iter().map(|&(c, w)| w * panel.values[(t, c)]).sum::<f64>() / total)
        .collect())
}

/// Demeaned weighted top-basket mean minus `α` times the bottom-basket mean.
pub fn lifestyle_spread(
    panel: &IndexPanel,
    top: &[String],
    bottom: &[String],
    weights: &HashMap<String, f64>,
    alpha: f64,
) -> Result<Vec<f64>> {
    let a = basket_mean(panel, top, weights)?;
    let b = basket_mean(panel, bottom, weights)?;
    Ok(mining_spread(&a, &b, alpha))
}

/// Build all three factors.
///
/// `market` is the national index; the mining legs are read from
/// `mining_panel` and the lifestyle baskets from `basket_panel`.
pub fn build_factors(
    market: &[f64],
    mining_panel: &IndexPanel,
    basket_panel: &IndexPanel,
    basket_weights: &HashMap<String, f64>,
    def: &FactorDefinition,
) -> Result<FactorSet> {
    if market.len() != mining_panel.n_months() || market.len() != basket_panel.n_months() {
        return Err(Error::Dimension("factor inputs have different month grids".into()));
    }
    let long = mining_panel.series_by_id(&def.mining_long)?;
    let short = mining_panel.series_by_id(&def.mining_short)?;
    let alpha_mining = trend_adjust_alpha(&long, &short, market)?;
    let top = basket_mean(basket_panel, &def.lifestyle_top, basket_weights)?;
    let bottom = basket_mean(basket_panel, &def.lifestyle_bottom, basket_weights)?;
    let alpha_lifestyle = trend_adjust_alpha(&top, &bottom, market)?;
    Ok(FactorSet {
        months: mining_panel.months.clone(),
        market: market.to_vec(),
        mining: mining_spread(&long, &short, alpha_mining),
        lifestyle: mining_spread(&top, &bottom, alpha_lifestyle),
        alpha_mining,
        alpha_lifestyle,
        definition: def.clone(),
    })
}

/// Correlation matrix of (market, mining, lifestyle).
pub fn factor_correlations(fs: &FactorSet) -> [[f64; 3]; 3] {
    let s = [&fs.market, &fs.mining, &fs.lifestyle];
    let mut m = [[1.0; 3]; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let c = correlation(s[i], s[j]);
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u() -> Vec<f64> {
        (0..50).map(|t| 0.01 * t as f64 + 0.05 * (t as f64 * 0.4).sin()).collect()
    }

    #[test]
    fn alpha_simple_cases() {
        let u = u();
        assert!((trend_adjust_alpha(&u, &u, &u).unwrap() - 1.0).abs() < 1e-12);
        let two: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        assert!((trend_adjust_alpha(&two, &u, &u).unwrap() - 2.0).abs() < 1e-12);
        let flat = vec![1.0; u.len()];
        assert!(trend_adjust_alpha(&u, &flat, &u).is_err());
    }

    #[test]
    fn spread_cases() {
        let u = u();
        assert!(mining_spread(&u, &u, 1.0).iter().all(|v| v.abs() < 1e-15));
        let s = mining_spread(&u, &[0.0; 50], 0.0);
        let d = demean(&u);
        assert!(s.iter().zip(&d).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn spread_is_shift_invariant() {
        let u = u();
        let b: Vec<f64> = u.iter().map(|v| 0.8 * v + 0.1).collect();
        let s1 = mining_spread(&u, &b, 0.9);
        let u2: Vec<f64> = u.iter().map(|v| v + 3.0).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + 3.0).collect();
        let s2 = mining_spread(&u2, &b2, 0.9);
        assert!(s1.iter().zip(&s2).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn identical_series_correlate_fully() {
        let u = u();
        let fs = FactorSet {
            months: Month::new(2000, 1).unwrap().range(50),
            market: u.clone(),
            mining: u.clone(),
            lifestyle: u,
            alpha_mining: 1.0,
            alpha_lifestyle: 1.0,
            definition: FactorDefinition {
                mining_long: "a".into(),
                mining_short: "b".into(),
                lifestyle_top: vec![],
                lifestyle_bottom: vec![],
            },
        };
        let c = factor_correlations(&fs);
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[i][j] - 1.0).abs() < 1e-12);
                assert_eq!(c[i][j], c[j][i]);
            }
        }
    }
}
