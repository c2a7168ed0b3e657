//! Ground-truth synthetic worlds.
//!
//! A world is a set of coarse areas, each split into a small lattice of fine
//! regions. Fine log indexes follow
//! `μ_r = b_r + β_r U + λ_r δ_PS + γ_r δ_L + ε_r`, and transactions are drawn
//! from those indexes with property effects and sale noise.
//!
//! The design step makes the factor proxies the pipeline can observe coincide
//! with the generating factors:
//!
//! - area weights are exponentially tilted from a prior so the weighted mean
//!   loading is `(1, 0, 0)`, and the disturbances are projected to a weighted
//!   mean of zero, so the national index is `U`;
//! - the spreads are orthogonalized against `U` in-sample, so the sample
//!   trend-adjustment coefficients equal loading ratios;
//! - the lifestyle baskets and the mining anchors receive a small linear
//!   correction so each spread carries unit weight on its own factor and zero
//!   on the other.
//!
//! Coarse-area truth is the weighted mean of its fine regions and is what the
//! manifest reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::factors::{FactorDefinition, FactorSet};
use crate::ingest::{write_geography, write_table, write_transactions, RegionGraph, TransactionRecord};
use crate::rsindex::IndexPanel;
use crate::stats::{covariance, demean, task_rng};
use crate::tskit::simulate::BURN_IN;
use crate::tskit::transform::is_stationary;
use crate::tskit::{simulate_arma, ArmaParams};
use crate::{Error, Month, Result};

const STREAM_DESIGN: u64 = 1;
const STREAM_MARKET: u64 = 2;
const STREAM_MINING: u64 = 3;
const STREAM_LIFESTYLE: u64 = 4;
const STREAM_EPS: u64 = 1_000;
const STREAM_SALES: u64 = 1_000_000;

/// Level loadings of one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loadings {
    pub b: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Loadings {
    pub fn new(beta: f64, lambda: f64, gamma: f64) -> Self {
        Loadings {
            b: 0.0,
            beta,
            lambda,
            gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSpec {
    pub id: String,
    /// Prior dwelling share before balancing.
    pub share: f64,
    pub loadings: Loadings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Monthly drift of log U.
    pub drift: f64,
    /// Monthly innovation sd of log U.
    pub vol: f64,
}

/// Zero-mean ARMA process with innovation variance `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaProcess {
    pub arma: ArmaParams,
    pub sigma2: f64,
}

impl ArmaProcess {
    /// Unconditional variance from the ψ-weights.
    pub fn unconditional_variance(&self) -> f64 {
        self.sigma2 * self.arma.psi_weights(20_000).iter().map(|p| p * p).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub start: Month,
    pub months: usize,
    pub areas: Vec<AreaSpec>,
    pub fine_per_area: usize,
    /// Columns of each area's fine lattice.
    pub lattice_cols: usize,
    /// Sd of fine-region deviations from their area loading.
    pub beta_dispersion: f64,
    pub lambda_dispersion: f64,
    pub gamma_dispersion: f64,
    /// Tilt area shares so the national index is exactly `U`.
    pub balance_weights: bool,
    /// Residualize the spreads on `U` (and Lifestyle on Mining) in-sample.
    pub orthogonalize_factors: bool,
    /// Correct basket and anchor loadings so proxies equal factors.
    pub anchor_spreads: bool,
    pub mining_long: String,
    pub mining_short: String,
    pub basket_size: usize,
    pub market: MarketParams,
    pub mining: ArmaProcess,
    pub lifestyle: ArmaProcess,
    pub eps: ArmaProcess,
    /// Mean sales per fine region per month.
    pub intensity: f64,
    /// Per fine or coarse region overrides of `intensity`.
    pub intensity_overrides: BTreeMap<String, f64>,
    /// Probability a sale is of an already sold property.
    pub repeat_share: f64,
    pub log_price_level: f64,
    pub property_sd: f64,
    /// Sd of idiosyncratic log price noise per sale.
    pub noise_sd: f64,
}

/// Table-5 style coarse areas with loadings and rough prior dwelling shares.
pub fn default_areas() -> Vec<AreaSpec> {
    let rows: [(&str, f64, f64, f64, f64); 14] = [
        ("Melbourne", 0.19, 1.22, -0.16, -0.70),
        ("Brisbane", 0.09, 1.10, 0.06, 0.39),
        ("Hobart", 0.01, 1.02, 0.12, 0.68),
        ("ACT", 0.02, 1.02, -0.08, 0.11),
        ("Sydney", 0.20, 1.01, -0.43, -0.14),
        ("Adelaide", 0.05, 0.96, 0.05, 0.09),
        ("Perth", 0.08, 0.96, 0.60, -0.13),
        ("Rest Of Tas.", 0.01, 0.93, 0.14, 0.54),
        ("Darwin", 0.005, 0.91, 0.13, -0.27),
        ("Rest Of NSW", 0.12, 0.88, -0.04, 0.38),
        ("Rest Of QLD", 0.08, 0.85, 0.23, 0.47),
        ("Rest Of VIC", 0.06, 0.81, 0.01, 0.09),
        ("Rest Of SA", 0.015, 0.73, 0.10, 0.21),
        ("Rest Of WA", 0.03, 0.70, 0.25, -0.09),
    ];
    rows.iter()
        .map(|&(id, share, b, l, g)| AreaSpec {
            id: id.to_string(),
            share,
            loadings: Loadings::new(b, l, g),
        })
        .collect()
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 20_240_601,
            start: Month::new(1995, 1).expect("valid month"),
            months: 360,
            areas: default_areas(),
            fine_per_area: 8,
            lattice_cols: 4,
            beta_dispersion: 0.0,
            lambda_dispersion: 0.3,
            gamma_dispersion: 0.15,
            balance_weights: true,
            orthogonalize_factors: true,
            anchor_spreads: true,
            mining_long: "Perth".into(),
            mining_short: "Sydney".into(),
            basket_size: 20,
            market: MarketParams {
                drift: std::f64::consts::LN_2 / 120.0,
                vol: 0.006,
            },
            mining: ArmaProcess {
                arma: ArmaParams::new(vec![1.932, -0.934], vec![-0.398], vec![]),
                sigma2: 4.485e-5,
            },
            lifestyle: ArmaProcess {
                arma: ArmaParams::new(vec![1.896, -0.898], vec![-0.309], vec![]),
                sigma2: 1.706e-5,
            },
            eps: ArmaProcess {
                arma: ArmaParams::new(vec![1.7, -0.72], vec![], vec![0.2]),
                sigma2: 0.005 * 0.005,
            },
            intensity: 5.0,
            intensity_overrides: BTreeMap::new(),
            repeat_share: 0.7,
            log_price_level: 13.0,
            property_sd: 0.3,
            noise_sd: 0.03,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.months < 2 {
            return Err(Error::invalid("world needs at least two months"));
        }
        if self.areas.is_empty() || self.fine_per_area == 0 || self.lattice_cols == 0 {
            return Err(Error::invalid("world needs at least one area and one fine region"));
        }
        for p in [&self.mining, &self.lifestyle, &self.eps] {
            if !is_stationary(&p.arma.ar) {
                return Err(Error::NonStationary);
            }
            if !(p.sigma2 >= 0.0) {
                return Err(Error::invalid("negative innovation variance"));
            }
        }
        let rates = std::iter::once(self.intensity).chain(self.intensity_overrides.values().copied());
        for v in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("negative sales intensity {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.repeat_share) {
            return Err(Error::invalid("repeat share outside [0, 1]"));
        }
        for a in &self.areas {
            if !(a.share > 0.0) {
                return Err(Error::invalid(format!("area {} has nonpositive share", a.id)));
            }
        }
        if self.anchor_spreads {
            for id in [&self.mining_long, &self.mining_short] {
                if !self.areas.iter().any(|a| &a.id == id) {
                    return Err(Error::UnknownRegion(id.clone()));
                }
            }
            let n = self.areas.len() * self.fine_per_area;
            if self.basket_size == 0 || 2 * self.basket_size > n {
                return Err(Error::invalid(format!("basket size {} for {n} fine regions", self.basket_size)));
            }
        }
        Ok(())
    }

    fn intensity_for(&self, fine: &str, area: &str) -> f64 {
        self.intensity_overrides
            .get(fine)
            .or_else(|| self.intensity_overrides.get(area))
            .copied()
            .unwrap_or(self.intensity)
    }
}

/// Geography, weights and fine-region loadings of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDesign {
    pub graph: RegionGraph,
    pub fine_loadings: Vec<Loadings>,
    /// Weighted means of the fine loadings per area, in area order.
    pub area_loadings: Vec<(String, Loadings)>,
    pub area_weights: Vec<f64>,
    pub definition: FactorDefinition,
    /// Loading ratios the trend adjustment recovers.
    pub alpha_mining: f64,
    pub alpha_lifestyle: f64,
}

/// Solve for tilted shares `w ∝ p exp(η·x)` with `Σ w x = 0`.
fn tilt(prior: &[f64], x: &[Vector3<f64>]) -> Result<Vec<f64>> {
    let total: f64 = prior.iter().sum();
    let p: Vec<f64> = prior.iter().map(|v| v / total).collect();
    let weights = |eta: &Vector3<f64>| -> Vec<f64> {
        let e: Vec<f64> = x.iter().map(|xi| eta.dot(xi)).collect();
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = p.iter().zip(&e).map(|(pi, ei)| pi * (ei - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    };
    let mut eta = Vector3::zeros();
    for _ in 0..200 {
        let w = weights(&eta);
        let g: Vector3<f64> = x.iter().zip(&w).map(|(xi, wi)| xi * *wi).sum();
        if g.norm() < 1e-13 {
            return Ok(w);
        }
        let mut h: Matrix3<f64> = x.iter().zip(&w).map(|(xi, wi)| xi * xi.transpose() * *wi).sum();
        h -= g * g.transpose();
        // components with no spread across areas carry no information
        for i in 0..3 {
            if h[(i, i)] < 1e-14 {
                if g[i].abs() > 1e-12 {
                    return Err(Error::Degenerate("area loadings cannot be balanced".into()));
                }
                h[(i, i)] = 1.0;
            }
        }
        let step = h
            .lu()
            .solve(&g)
            .ok_or_else(|| Error::Degenerate("area loadings cannot be balanced".into()))?;
        let obj = |e: &Vector3<f64>| -> f64 {
            let v: Vec<f64> = x.iter().map(|xi| e.dot(xi)).collect();
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + p.iter().zip(&v).map(|(pi, vi)| pi * (vi - m).exp()).sum::<f64>().ln()
        };
        let f0 = obj(&eta);
        let mut t = 1.0;
        while t > 1e-10 && obj(&(eta - step * t)) > f0 + 1e-15 {
            t *= 0.5;
        }
        eta -= step * t;
    }
    let w = weights(&eta);
    let g: Vector3<f64> = x.iter().zip(&w).map(|(xi, wi)| xi * *wi).sum();
    if g.norm() < 1e-10 {
        Ok(w)
    } else {
        Err(Error::Degenerate("area loadings cannot be balanced".into()))
    }
}

fn weighted_mean(idx: &[usize], w: &[f64], v: impl Fn(usize) -> f64) -> f64 {
    let s: f64 = idx.iter().map(|&i| w[i]).sum();
    idx.iter().map(|&i| w[i] * v(i)).sum::<f64>() / s
}

/// Top and bottom `k` fine regions by γ, ties broken by index.
fn baskets(gamma: &[f64], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..gamma.len()).collect();
    order.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]).then(a.cmp(&b)));
    let mut top = order[..k].to_vec();
    let mut bottom = order[order.len() - k..].to_vec();
    top.sort_unstable();
    bottom.sort_unstable();
    (top, bottom)
}

pub fn design(cfg: &WorldConfig) -> Result<WorldDesign> {
    cfg.validate()?;
    let mut rng = task_rng(cfg.seed, STREAM_DESIGN);
    let na = cfg.areas.len();
    let nf = cfg.fine_per_area;

    let prior: Vec<f64> = cfg.areas.iter().map(|a| a.share).collect();
    let area_w = if cfg.balance_weights {
        let x: Vec<Vector3<f64>> = cfg
            .areas
            .iter()
            .map(|a| Vector3::new(a.loadings.beta - 1.0, a.loadings.lambda, a.loadings.gamma))
            .collect();
        tilt(&prior, &x)?
    } else {
        let s: f64 = prior.iter().sum();
        prior.iter().map(|v| v / s).collect()
    };

    // fine regions, weights and zero-sum deviations
    let (mut nodes, mut coarse, mut weights, mut edges) = (vec![], vec![], vec![], vec![]);
    let mut fine: Vec<Loadings> = Vec::with_capacity(na * nf);
    let mut area_of = Vec::with_capacity(na * nf);
    for (ai, a) in cfg.areas.iter().enumerate() {
        let raw: Vec<f64> = (0..nf).map(|_| rng.random_range(0.5..1.5)).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| area_w[ai] * v / s).collect();
        let dev = |sd: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let d: Vec<f64> = (0..nf)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                })
                .collect();
            let m = d.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>() / area_w[ai];
            d.into_iter().map(|x| x - m).collect()
        };
        let db = dev(cfg.beta_dispersion, &mut rng);
        let dl = dev(cfg.lambda_dispersion, &mut rng);
        let dg = dev(cfg.gamma_dispersion, &mut rng);
        let name = |i: usize| format!("{}-{:02}", a.id, i + 1);
        for i in 0..nf {
            nodes.push(name(i));
            coarse.push(a.id.clone());
            weights.push(w[i]);
            area_of.push(ai);
            let l = a.loadings;
            fine.push(Loadings {
                b: l.b,
                beta: l.beta + db[i],
                lambda: l.lambda + dl[i],
                gamma: l.gamma + dg[i],
            });
            let (r, c) = (i / cfg.lattice_cols, i % cfg.lattice_cols);
            if c + 1 < cfg.lattice_cols && i + 1 < nf {
                edges.push((name(i), name(i + 1)));
            }
            if i + cfg.lattice_cols < nf {
                edges.push((name(i), name((r + 1) * cfg.lattice_cols + c)));
            }
        }
    }
    let graph = RegionGraph::new(nodes, coarse, weights.clone(), &edges)?;
    let members = |id: &str| -> Vec<usize> { graph.members(id) };

    let k = cfg.basket_size.min(fine.len() / 2).max(1);
    let mut base = fine.clone();
    let (top, bottom) = baskets(&fine.iter().map(|l| l.gamma).collect::<Vec<_>>(), k);
    let (mut alpha_m, mut alpha_l) = (f64::NAN, f64::NAN);
    if cfg.anchor_spreads {
        let long = members(&cfg.mining_long);
        let short = members(&cfg.mining_short);
        let beta = |i: usize| fine[i].beta;
        alpha_m = weighted_mean(&long, &weights, beta) / weighted_mean(&short, &weights, beta);
        {
            alpha_l = weighted_mean(&top, &weights, beta) / weighted_mean(&bottom, &weights, beta);
            let groups: [&[usize]; 3] = [&top, &bottom, &long];
            let in_other = |i: usize| groups.iter().all(|g| !g.contains(&i)) && !short.contains(&i);
            let other: Vec<usize> = (0..base.len()).filter(|&i| in_other(i)).collect();
            let all_groups: [&[usize]; 4] = [&top, &bottom, &long, &other];
            // rows: national balance, lifestyle contrast, mining contrast
            let share = |set: &[usize], g: &[usize]| -> f64 {
                let s: f64 = set.iter().map(|&i| weights[i]).sum();
                set.iter().filter(|i| g.contains(i)).map(|&i| weights[i]).sum::<f64>() / s
            };
            let all: Vec<usize> = (0..base.len()).collect();
            let a = DMatrix::from_fn(3, 4, |row, col| {
                let g = all_groups[col];
                match row {
                    0 => share(&all, g),
                    1 => share(&top, g) - alpha_l * share(&bottom, g),
                    _ => share(&long, g) - alpha_m * share(&short, g),
                }
            });
            let svd = a.clone().svd(true, true);
            let contrast = |get: &dyn Fn(usize) -> f64, t_l: f64, t_m: f64| -> Result<DVector<f64>> {
                let s_l = weighted_mean(&top, &weights, get) - alpha_l * weighted_mean(&bottom, &weights, get);
                let s_m = weighted_mean(&long, &weights, get) - alpha_m * weighted_mean(&short, &weights, get);
                let rhs = DVector::from_vec(vec![0.0, t_l - s_l, t_m - s_m]);
                svd.solve(&rhs, 1e-12)
                    .map_err(|e| Error::Degenerate(format!("anchor correction: {e}")))
            };
            let cl = contrast(&|i| fine[i].lambda, 0.0, 1.0)?;
            let cg = contrast(&|i| fine[i].gamma, 1.0, 0.0)?;
            base = fine.clone();
            for (col, g) in all_groups.iter().enumerate() {
                for &i in g.iter() {
                    base[i].lambda += cl[col];
                    base[i].gamma += cg[col];
                }
            }
        }
    }
    let area_loadings = cfg
        .areas
        .iter()
        .map(|a| {
            let m = members(&a.id);
            let l = Loadings {
                b: weighted_mean(&m, &weights, |i| base[i].b),
                beta: weighted_mean(&m, &weights, |i| base[i].beta),
                lambda: weighted_mean(&m, &weights, |i| base[i].lambda),
                gamma: weighted_mean(&m, &weights, |i| base[i].gamma),
            };
            (a.id.clone(), l)
        })
        .collect();
    let ids = |set: &[usize]| set.iter().map(|&i| graph.nodes[i].clone()).collect::<Vec<_>>();
    let definition = FactorDefinition {
        mining_long: cfg.mining_long.clone(),
        mining_short: cfg.mining_short.clone(),
        lifestyle_top: ids(&top),
        lifestyle_bottom: ids(&bottom),
    };
    Ok(WorldDesign {
        graph,
        fine_loadings: base,
        area_loadings,
        area_weights: area_w,
        definition,
        alpha_mining: alpha_m,
        alpha_lifestyle: alpha_l,
    })
}

/// Residual of `y` on a constant and the columns of `x`.
fn residualize(y: &[f64], x: &[&[f64]]) -> Vec<f64> {
    let mut r = demean(y);
    let cols: Vec<Vec<f64>> = x.iter().map(|c| demean(c)).collect();
    // sequential Gram–Schmidt is exact for the small column counts used here
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c;
        for b in &basis {
            let k = v.iter().zip(b).map(|(a, b)| a * b).sum::<f64>() / b.iter().map(|x| x * x).sum::<f64>();
            v.iter_mut().zip(b).for_each(|(a, b)| *a -= k * b);
        }
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-24 {
            basis.push(v);
        }
    }
    for b in &basis {
        let k = covariance(&r, b) / covariance(b, b);
        r.iter_mut().zip(b).for_each(|(a, b)| *a -= k * b);
    }
    r
}

/// Market random walk with drift starting at zero, and demeaned spreads.
pub fn simulate_factors(cfg: &WorldConfig) -> Result<FactorSet> {
    let d = design(cfg)?;
    simulate_factors_for(cfg, &d)
}

fn simulate_factors_for(cfg: &WorldConfig, d: &WorldDesign) -> Result<FactorSet> {
    let n = cfg.months;
    let mut rng = task_rng(cfg.seed, STREAM_MARKET);
    let step = Normal::new(cfg.market.drift, cfg.market.vol.max(0.0))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut market = Vec::with_capacity(n);
    let mut u = 0.0;
    for t in 0..n {
        if t > 0 {
            u += step.sample(&mut rng);
        }
        market.push(u);
    }
    let draw = |p: &ArmaProcess, stream: u64| -> Result<Vec<f64>> {
        let mut rng = task_rng(cfg.seed, stream);
        simulate_arma(&p.arma, p.sigma2, n, BURN_IN, &mut rng)
    };
    let mut mining = demean(&draw(&cfg.mining, STREAM_MINING)?);
    let mut lifestyle = demean(&draw(&cfg.lifestyle, STREAM_LIFESTYLE)?);
    let varies = |x: &[f64]| x.iter().any(|v| (v - x[0]).abs() > 0.0);
    if cfg.orthogonalize_factors && varies(&market) {
        mining = residualize(&mining, &[&market]);
        lifestyle = residualize(&lifestyle, &[&market, &mining]);
    }
    Ok(FactorSet {
        months: cfg.start.range(n),
        market,
        mining,
        lifestyle,
        alpha_mining: d.alpha_mining,
        alpha_lifestyle: d.alpha_lifestyle,
        definition: d.definition.clone(),
    })
}

/// Fine-region disturbances, projected to a weighted cross-sectional mean of
/// zero when the weights are balanced.
fn simulate_eps(cfg: &WorldConfig, d: &WorldDesign, exec: Exec) -> Result<Vec<Vec<f64>>> {
    let n = cfg.months;
    let mut eps: Vec<Vec<f64>> = exec
        .map_range(d.graph.len(), |r| {
            let mut rng = task_rng(cfg.seed, STREAM_EPS + r as u64);
            simulate_arma(&cfg.eps.arma, cfg.eps.sigma2, n, BURN_IN, &mut rng)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    if cfg.balance_weights {
        let w = &d.graph.weights;
        let total: f64 = w.iter().sum();
        for t in 0..n {
            let m = eps.iter().zip(w).map(|(e, wi)| wi * e[t]).sum::<f64>() / total;
            eps.iter_mut().for_each(|e| e[t] -= m);
        }
    }
    Ok(eps)
}

/// Fine log index panel built from the factor model, rebased to month 0.
pub fn simulate_panel(cfg: &WorldConfig, factors: &FactorSet) -> Result<IndexPanel> {
    let d = design(cfg)?;
    simulate_panel_for(cfg, &d, factors, Exec::default())
}

fn simulate_panel_for(cfg: &WorldConfig, d: &WorldDesign, f: &FactorSet, exec: Exec) -> Result<IndexPanel> {
    let n = f.len();
    if n != cfg.months {
        return Err(Error::Dimension(format!("{n} factor months vs {} configured", cfg.months)));
    }
    let eps = simulate_eps(cfg, d, exec)?;
    let values = DMatrix::from_fn(n, d.graph.len(), |t, r| {
        let l = &d.fine_loadings[r];
        l.b + l.beta * f.market[t] + l.lambda * f.mining[t] + l.gamma * f.lifestyle[t] + eps[r][t]
    });
    let panel = IndexPanel::new(f.months.clone(), d.graph.nodes.clone(), values, 0)?;
    Ok(panel.rebased(0))
}

/// Sales drawn from a fine panel. Each region has its own stream, so the
/// output does not depend on the executor.
pub fn simulate_transactions(panel: &IndexPanel, cfg: &WorldConfig) -> Result<Vec<TransactionRecord>> {
    let d = design(cfg)?;
    simulate_transactions_for(panel, cfg, &d, Exec::default())
}

fn simulate_transactions_for(
    panel: &IndexPanel,
    cfg: &WorldConfig,
    d: &WorldDesign,
    exec: Exec,
) -> Result<Vec<TransactionRecord>> {
    let noise = Normal::new(0.0, cfg.noise_sd.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let fe = Normal::new(0.0, cfg.property_sd.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let per_region: Vec<Result<Vec<TransactionRecord>>> = exec.map_range(panel.n_regions(), |r| {
        let id = &panel.regions[r];
        let area = d
            .graph
            .index_of(id)
            .map(|i| d.graph.coarse[i].as_str())
            .unwrap_or("");
        let rate = cfg.intensity_for(id, area);
        let mut rng = task_rng(cfg.seed, STREAM_SALES + r as u64);
        let mut out = Vec::new();
        if rate <= 0.0 {
            return Ok(out);
        }
        let pois = Poisson::new(rate).map_err(|e| Error::invalid(e.to_string()))?;
        // (property effect, last sale month)
        let mut pool: Vec<(f64, usize)> = Vec::new();
        for t in 0..panel.n_months() {
            let count = pois.sample(&mut rng) as usize;
            for _ in 0..count {
                let reuse = !pool.is_empty() && rng.random_bool(cfg.repeat_share);
                let mut k = None;
                if reuse {
                    // a property sells at most once per month
                    for _ in 0..8 {
                        let j = rng.random_range(0..pool.len());
                        if pool[j].1 < t {
                            k = Some(j);
                            break;
                        }
                    }
                }
                let j = match k {
                    Some(j) => j,
                    None => {
                        pool.push((fe.sample(&mut rng), usize::MAX));
                        pool.len() - 1
                    }
                };
                pool[j].1 = t;
                let lp = cfg.log_price_level + panel.values[(t, r)] + pool[j].0 + noise.sample(&mut rng);
                out.push(TransactionRecord {
                    property_id: format!("{id}#{j}"),
                    price: lp.exp(),
                    date: panel.months[t],
                    region_id: id.clone(),
                });
            }
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per_region {
        all.extend(r?);
    }
    Ok(all)
}

/// Everything the oracle tests need about a world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldManifest {
    pub config: WorldConfig,
    pub design: WorldDesign,
    pub mining_unconditional_sd: f64,
    pub lifestyle_unconditional_sd: f64,
    pub n_transactions: usize,
}

#[derive(Debug, Clone)]
pub struct World {
    pub manifest: WorldManifest,
    pub factors: FactorSet,
    pub panel: IndexPanel,
    pub transactions: Vec<TransactionRecord>,
}

impl World {
    pub fn design(&self) -> &WorldDesign {
        &self.manifest.design
    }

    /// Planted loadings of a coarse area.
    pub fn area_truth(&self, id: &str) -> Option<Loadings> {
        self.design()
            .area_loadings
            .iter()
            .find(|(a, _)| a == id)
            .map(|(_, l)| *l)
    }

    /// Weights keyed by fine region id.
    pub fn weight_map(&self) -> std::collections::HashMap<String, f64> {
        let g = &self.design().graph;
        g.nodes.iter().cloned().zip(g.weights.iter().copied()).collect()
    }

    /// Write `transactions.csv`, `geography/`, `world.json`,
    /// `true_factors.csv` and `true_panel.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_transactions(&dir.join("transactions.csv"), &self.transactions)?;
        write_geography(&dir.join("geography"), &self.design().graph)?;
        let p = dir.join("world.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&p, json).map_err(|source| Error::Io { path: p, source })?;
        self.factors.write_csv(&dir.join("true_factors.csv"))?;
        self.panel.write_csv(&dir.join("true_panel.csv"))?;
        let rows = self.design().area_loadings.iter().map(|(id, l)| {
            vec![
                id.clone(),
                l.beta.to_string(),
                l.lambda.to_string(),
                l.gamma.to_string(),
            ]
        });
        write_table(&dir.join("true_loadings.csv"), &["region", "beta", "lambda", "gamma"], rows)
    }
}

pub fn read_manifest(path: &Path) -> Result<WorldManifest> {
    let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut m: WorldManifest = serde_json::from_str(&s)?;
    // the lookup table is not serialized
    let g = &m.design.graph;
    let edges: Vec<(String, String)> = g
        .edges
        .iter()
        .map(|&(a, b)| (g.nodes[a].clone(), g.nodes[b].clone()))
        .collect();
    m.design.graph = RegionGraph::new(g.nodes.clone(), g.coarse.clone(), g.weights.clone(), &edges)?;
    Ok(m)
}

/// Generate a complete world.
pub fn build_world(cfg: &WorldConfig, exec: Exec) -> Result<World> {
    let d = design(cfg)?;
    let factors = simulate_factors_for(cfg, &d)?;
    let panel = simulate_panel_for(cfg, &d, &factors, exec)?;
    let transactions = simulate_transactions_for(&panel, cfg, &d, exec)?;
    let manifest = WorldManifest {
        config: cfg.clone(),
        mining_unconditional_sd: cfg.mining.unconditional_variance().sqrt(),
        lifestyle_unconditional_sd: cfg.lifestyle.unconditional_variance().sqrt(),
        n_transactions: transactions.len(),
        design: d,
    };
    Ok(World {
        manifest,
        factors,
        panel,
        transactions,
    })
}

/// Coarse areas whose fine regions appear in a basket, for reporting.
pub fn basket_areas(d: &WorldDesign) -> BTreeSet<String> {
    let def = &d.definition;
    def.lifestyle_top
        .iter()
        .chain(&def.lifestyle_bottom)
        .filter_map(|id| d.graph.index_of(id).map(|i| d.graph.coarse[i].clone()))
        .collect()
}

/// Loadings `(β, λ, γ)` carried by the mining and lifestyle proxies when
/// built from the noise-free fine panel with the design's trend adjustments.
pub fn proxy_contrasts(d: &WorldDesign) -> [[f64; 3]; 2] {
    let g = &d.graph;
    let w = &g.weights;
    let ids = |v: &[String]| -> Vec<usize> { v.iter().filter_map(|id| g.index_of(id)).collect() };
    let f = &d.fine_loadings;
    let get = |set: &[usize], k: usize| {
        weighted_mean(set, w, |i| [f[i].beta, f[i].lambda, f[i].gamma][k])
    };
    let def = &d.definition;
    let (long, short) = (g.members(&def.mining_long), g.members(&def.mining_short));
    let (top, bottom) = (ids(&def.lifestyle_top), ids(&def.lifestyle_bottom));
    let mut out = [[0.0; 3]; 2];
    for k in 0..3 {
        out[0][k] = get(&long, k) - d.alpha_mining * get(&short, k);
        out[1][k] = get(&top, k) - d.alpha_lifestyle * get(&bottom, k);
    }
    out
}

/// Weighted mean over fine regions, used by tests to check balance.
pub fn national_loading(d: &WorldDesign) -> Loadings {
    let all: Vec<usize> = (0..d.graph.len()).collect();
    let w = &d.graph.weights;
    let f = &d.fine_loadings;
    Loadings {
        b: weighted_mean(&all, w, |i| f[i].b),
        beta: weighted_mean(&all, w, |i| f[i].beta),
        lambda: weighted_mean(&all, w, |i| f[i].lambda),
        gamma: weighted_mean(&all, w, |i| f[i].gamma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;

    #[test]
    fn default_design_is_balanced_and_anchored() {
        let cfg = WorldConfig::default();
        let d = design(&cfg).unwrap();
        let nat = national_loading(&d);
        assert!((nat.beta - 1.0).abs() < 1e-9, "{nat:?}");
        assert!(nat.lambda.abs() < 1e-9 && nat.gamma.abs() < 1e-9, "{nat:?}");
        assert_eq!(d.definition.lifestyle_top.len(), 20);
        let c = proxy_contrasts(&d);
        for (row, want) in c.iter().zip([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]) {
            for k in 0..3 {
                assert!((row[k] - want[k]).abs() < 1e-9, "{c:?}");
            }
        }
        assert_eq!(d.graph.len(), 14 * cfg.fine_per_area);
    }

    #[test]
    fn zero_drift_zero_vol_market_is_flat() {
        let mut cfg = WorldConfig::default();
        cfg.market = MarketParams { drift: 0.0, vol: 0.0 };
        let f = simulate_factors(&cfg).unwrap();
        assert!(f.market.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tilt_keeps_prior_when_already_balanced() {
        let x = vec![Vector3::new(0.1, 0.0, 0.0), Vector3::new(-0.1, 0.0, 0.0)];
        let w = tilt(&[1.0, 1.0], &x).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!(tilt(&[1.0, 1.0], &[Vector3::new(0.1, 0.0, 0.0); 2]).is_err());
    }

    #[test]
    fn residual_is_orthogonal() {
        let u: Vec<f64> = (0..40).map(|t| (t as f64).sqrt()).collect();
        let y: Vec<f64> = (0..40).map(|t| (t as f64 * 0.3).sin() + 0.2 * t as f64).collect();
        let r = residualize(&y, &[&u]);
        assert!(covariance(&r, &u).abs() < 1e-12);
        assert!(mean(&r).abs() < 1e-12);
    }
}
