//! Laplacian-regularized repeat-sales regression.
//!
//! Minimizes
//!
//! ```text
//! ‖y − jθ − D_t μ − D_st α‖² + λ_μ μ'L_t μ + λ_α α'(L_s ⊗ L_t)α
//! ```
//!
//! with `μ[base] = 0` and `α[r, base] = 0`, by preconditioned conjugate
//! gradients on the normal equations. The operator is applied matrix-free.

use serde::{Deserialize, Serialize};

use super::laplacian::{build_laplacians, LaplacianSet};
use crate::ingest::{RegionGraph, RepeatSalePair};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsConfig {
    pub lambda_mu: f64,
    pub lambda_alpha: f64,
    /// Month index pinned to zero.
    pub base_month: usize,
    /// Include the common intercept θ.
    pub intercept: bool,
    /// Relative residual tolerance of the CG solve.
    pub tolerance: f64,
    pub max_iter: Option<usize>,
}

impl Default for RsConfig {
    fn default() -> Self {
        RsConfig {
            lambda_mu: 1.0,
            lambda_alpha: 10.0,
            base_month: 0,
            intercept: true,
            tolerance: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsFit {
    pub theta: f64,
    /// Common trend, length T.
    pub mu: Vec<f64>,
    /// Local deviations, `alpha[r][t]`.
    pub alpha: Vec<Vec<f64>>,
    pub lambda_mu: f64,
    pub lambda_alpha: f64,
    pub sigma2: f64,
    pub objective: f64,
    pub n_pairs: usize,
    pub iterations: usize,
    pub rel_residual: f64,
    /// Months without any sale in the area (filled by the penalty alone).
    pub empty_months: Vec<usize>,
    /// Regions without any pair.
    pub empty_regions: Vec<usize>,
}

impl RsFit {
    /// Log index of region `r`: `μ + α_r`.
    pub fn region_index(&self, r: usize) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.alpha[r])
            .map(|(m, a)| m + a)
            .collect()
    }
}

/// Pair reduced to solver coordinates.
#[derive(Debug, Clone, Copy)]
struct Obs {
    t1: usize,
    t2: usize,
    r: usize,
    y: f64,
}

/// Layout of the unknown vector: `[θ?] [μ; T] [α; R·T]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub intercept: bool,
    pub months: usize,
    pub regions: usize,
    /// α estimated (false for single-region areas where it duplicates μ).
    pub local: bool,
}

impl Layout {
    pub fn mu(&self, t: usize) -> usize {
        self.intercept as usize + t
    }
    pub fn alpha(&self, r: usize, t: usize) -> usize {
        self.intercept as usize + self.months + r * self.months + t
    }
    pub fn len(&self) -> usize {
        self.intercept as usize + self.months * (1 + if self.local { self.regions } else { 0 })
    }
    pub fn pinned(&self, base: usize) -> Vec<usize> {
        let mut p = vec![self.mu(base)];
        if self.local {
            p.extend((0..self.regions).map(|r| self.alpha(r, base)));
        }
        p
    }
}

pub(crate) struct Problem<'a> {
    layout: Layout,
    obs: Vec<Obs>,
    lap: &'a LaplacianSet,
    cfg: RsConfig,
    mask: Vec<bool>,
}

impl Problem<'_> {
    /// Design row of observation `o` as (index, coefficient) pairs.
    fn row(&self, o: &Obs) -> ([(usize, f64); 5], usize) {
        let l = &self.layout;
        let mut out = [(0, 0.0); 5];
        let mut k = 0;
        if l.intercept {
            out[k] = (0, 1.0);
            k += 1;
        }
        out[k] = (l.mu(o.t2), 1.0);
        out[k + 1] = (l.mu(o.t1), -1.0);
        k += 2;
        if l.local {
            out[k] = (l.alpha(o.r, o.t2), 1.0);
            out[k + 1] = (l.alpha(o.r, o.t1), -1.0);
            k += 2;
        }
        (out, k)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for o in &self.obs {
            let (row, k) = self.row(o);
            let dx: f64 = row[..k].iter().map(|&(i, c)| c * x[i]).sum();
            for &(i, c) in &row[..k] {
                out[i] += c * dx;
            }
        }
        self.apply_penalty(x, out);
        for (o, &m) in out.iter_mut().zip(&self.mask) {
            if !m {
                *o = 0.0;
            }
        }
    }

    fn apply_penalty(&self, x: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        let t = l.months;
        let off = l.intercept as usize;
        if self.cfg.lambda_mu > 0.0 {
            self.lap
                .temporal
                .mul_add(&x[off..off + t], self.cfg.lambda_mu, &mut out[off..off + t]);
        }
        if l.local && self.cfg.lambda_alpha > 0.0 {
            let a = off + t;
            let n = l.regions * t;
            self.lap
                .spatio_temporal
                .mul_add(&x[a..a + n], self.cfg.lambda_alpha, &mut out[a..a + n]);
        }
    }

    fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.layout.len()];
        for o in &self.obs {
            let (row, k) = self.row(o);
            for &(i, c) in &row[..k] {
                b[i] += c * o.y;
            }
        }
        for (v, &m) in b.iter_mut().zip(&self.mask) {
            if !m {
                *v = 0.0;
            }
        }
        b
    }

    fn diagonal(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut d = vec![0.0; l.len()];
        for o in &self.obs {
            let (row, k) = self.row(o);
            for &(i, c) in &row[..k] {
                d[i] += c * c;
            }
        }
        let off = l.intercept as usize;
        for (t, v) in self.lap.temporal.diag().into_iter().enumerate() {
            d[off + t] += self.cfg.lambda_mu * v;
        }
        if l.local {
            for (k, v) in self.lap.spatio_temporal.diag().into_iter().enumerate() {
                d[off + l.months + k] += self.cfg.lambda_alpha * v;
            }
        }
        d
    }

    /// Penalized objective at `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let rss: f64 = self
            .obs
            .iter()
            .map(|o| {
                let (row, k) = self.row(o);
                let fit: f64 = row[..k].iter().map(|&(i, c)| c * x[i]).sum();
                (o.y - fit).powi(2)
            })
            .sum();
        let mut pen = vec![0.0; x.len()];
        self.apply_penalty(x, &mut pen);
        rss + x.iter().zip(&pen).map(|(a, b)| a * b).sum::<f64>()
    }

    fn rss(&self, x: &[f64]) -> f64 {
        self.obs
            .iter()
            .map(|o| {
                let (row, k) = self.row(o);
                let fit: f64 = row[..k].iter().map(|&(i, c)| c * x[i]).sum();
                (o.y - fit).powi(2)
            })
            .sum()
    }
}

/// Jacobi-preconditioned CG on the masked system. Returns (x, iterations, rel residual).
fn pcg(p: &Problem<'_>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, f64)> {
    let n = p.layout.len();
    let b = p.rhs();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let diag = p.diagonal();
    let minv: Vec<f64> = diag
        .iter()
        .zip(&p.mask)
        .map(|(&d, &m)| if m && d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    if p.mask.iter().zip(&diag).any(|(&m, &d)| m && d <= 0.0) {
        return Err(Error::Singular(
            "an unknown has no data and no penalty (empty month with zero penalty?)".into(),
        ));
    }
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(a, m)| a * m).collect();
    let mut d = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ad = vec![0.0; n];
    for it in 0..max_iter {
        p.apply(&d, &mut ad);
        let dad: f64 = d.iter().zip(&ad).map(|(a, b)| a * b).sum();
        let dd: f64 = d.iter().map(|v| v * v).sum();
        if dad <= 1e-14 * dd * diag.iter().cloned().fold(0.0, f64::max) {
            return Err(Error::Singular(
                "normal equations are singular after normalization".into(),
            ));
        }
        let step = rz / dad;
        for i in 0..n {
            x[i] += step * d[i];
            r[i] -= step * ad[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok((x, it + 1, rnorm / bnorm));
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    // recompute the true residual for the report
    let mut ax = vec![0.0; n];
    p.apply(&x, &mut ax);
    let rel = b
        .iter()
        .zip(&ax)
        .map(|(a, c)| (a - c).powi(2))
        .sum::<f64>()
        .sqrt()
        / bnorm;
    Err(Error::Singular(format!(
        "conjugate gradients did not converge in {max_iter} iterations (relative residual {rel:.3e})"
    )))
}

/// Estimate fine-region log indexes for one coarse area.
///
/// `graph` holds only the area's fine regions; every pair's region must be
/// one of them. `months` is the panel length.
pub fn estimate_indexes(
    pairs: &[RepeatSalePair],
    graph: &RegionGraph,
    months: usize,
    cfg: &RsConfig,
) -> Result<RsFit> {
    if pairs.is_empty() {
        return Err(Error::invalid("no repeat-sale pairs"));
    }
    if !(cfg.lambda_mu >= 0.0 && cfg.lambda_alpha >= 0.0) {
        return Err(Error::invalid("penalties must be nonnegative"));
    }
    if cfg.base_month >= months {
        return Err(Error::OutOfRange(format!(
            "base month {} outside panel of {months}",
            cfg.base_month
        )));
    }
    let lap = build_laplacians(graph, months)?;
    let obs: Vec<Obs> = pairs
        .iter()
        .map(|p| {
            let r = graph
                .index_of(&p.region_id)
                .ok_or_else(|| Error::UnknownRegion(p.region_id.clone()))?;
            if p.t1 >= p.t2 || p.t2 >= months {
                return Err(Error::invalid(format!(
                    "pair months ({}, {}) invalid for panel of {months}",
                    p.t1, p.t2
                )));
            }
            Ok(Obs {
                t1: p.t1,
                t2: p.t2,
                r,
                y: p.dlog_price,
            })
        })
        .collect::<Result<_>>()?;

    let layout = Layout {
        intercept: cfg.intercept,
        months,
        regions: graph.len(),
        local: graph.len() > 1,
    };
    let mut mask = vec![true; layout.len()];
    for i in layout.pinned(cfg.base_month) {
        mask[i] = false;
    }
    let problem = Problem {
        layout,
        obs,
        lap: &lap,
        cfg: *cfg,
        mask,
    };

    let mut seen_month = vec![false; months];
    let mut seen_region = vec![false; graph.len()];
    for o in &problem.obs {
        seen_month[o.t1] = true;
        seen_month[o.t2] = true;
        seen_region[o.r] = true;
    }
    let empty_months: Vec<usize> = (0..months).filter(|&t| !seen_month[t]).collect();
    let empty_regions: Vec<usize> = (0..graph.len()).filter(|&r| !seen_region[r]).collect();
    if !empty_months.is_empty() {
        log::warn!(
            "{} month(s) without sales are filled by the penalty: {:?}",
            empty_months.len(),
            empty_months
        );
    }
    if !empty_regions.is_empty() {
        log::warn!(
            "region(s) without pairs are filled by the penalty: {:?}",
            empty_regions
                .iter()
                .map(|&r| graph.nodes[r].as_str())
                .collect::<Vec<_>>()
        );
    }

    let max_iter = cfg.max_iter.unwrap_or(20 * layout.len() + 100);
    let (x, iterations, rel_residual) = pcg(&problem, cfg.tolerance, max_iter)?;

    let off = layout.intercept as usize;
    let mu = x[off..off + months].to_vec();
    let alpha = (0..graph.len())
        .map(|r| {
            if layout.local {
                (0..months).map(|t| x[layout.alpha(r, t)]).collect()
            } else {
                vec![0.0; months]
            }
        })
        .collect();
    let rss = problem.rss(&x);
    Ok(RsFit {
        theta: if cfg.intercept { x[0] } else { 0.0 },
        mu,
        alpha,
        lambda_mu: cfg.lambda_mu,
        lambda_alpha: cfg.lambda_alpha,
        sigma2: rss / problem.obs.len() as f64,
        objective: problem.objective(&x),
        n_pairs: problem.obs.len(),
        iterations,
        rel_residual,
        empty_months,
        empty_regions,
    })
}

/// Penalized objective for an explicit parameter set, in the same units the
/// estimator minimizes. Used to verify optimality.
pub fn penalized_objective(
    pairs: &[RepeatSalePair],
    graph: &RegionGraph,
    months: usize,
    cfg: &RsConfig,
    fit: &RsFit,
) -> Result<f64> {
    let lap = build_laplacians(graph, months)?;
    let layout = Layout {
        intercept: cfg.intercept,
        months,
        regions: graph.len(),
        local: graph.len() > 1,
    };
    let obs = pairs
        .iter()
        .map(|p| Obs {
            t1: p.t1,
            t2: p.t2,
            r: graph.index_of(&p.region_id).unwrap_or(0),
            y: p.dlog_price,
        })
        .collect();
    let problem = Problem {
        layout,
        obs,
        lap: &lap,
        cfg: *cfg,
        mask: vec![true; layout.len()],
    };
    let mut x = vec![0.0; layout.len()];
    if cfg.intercept {
        x[0] = fit.theta;
    }
    for t in 0..months {
        x[layout.mu(t)] = fit.mu[t];
        if layout.local {
            for r in 0..graph.len() {
                x[layout.alpha(r, t)] = fit.alpha[r][t];
            }
        }
    }
    Ok(problem.objective(&x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph1() -> RegionGraph {
        RegionGraph::new(vec!["a".into()], vec!["C".into()], vec![1.0], &[]).unwrap()
    }

    fn pair(t1: usize, t2: usize, y: f64, r: &str) -> RepeatSalePair {
        RepeatSalePair {
            property_id: format!("p{t1}-{t2}"),
            t1,
            t2,
            dlog_price: y,
            region_id: r.into(),
        }
    }

    #[test]
    fn single_pair_exactly_identified() {
        let cfg = RsConfig {
            lambda_mu: 0.0,
            lambda_alpha: 0.0,
            intercept: false,
            ..Default::default()
        };
        let fit = estimate_indexes(&[pair(0, 1, 2f64.ln(), "a")], &graph1(), 2, &cfg).unwrap();
        assert!((fit.mu[1] - fit.mu[0] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(fit.mu[0], 0.0);
    }

    #[test]
    fn empty_month_with_zero_penalty_is_singular() {
        let cfg = RsConfig {
            lambda_mu: 0.0,
            lambda_alpha: 0.0,
            intercept: false,
            ..Default::default()
        };
        let r = estimate_indexes(&[pair(0, 12, 0.5, "a")], &graph1(), 13, &cfg);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn gap_filled_by_penalty() {
        let cfg = RsConfig {
            lambda_mu: 1e-6,
            intercept: false,
            ..Default::default()
        };
        let fit = estimate_indexes(&[pair(0, 12, 0.6, "a")], &graph1(), 13, &cfg).unwrap();
        assert_eq!(fit.empty_months.len(), 11);
        // a straight line through the two observed months
        for t in 0..13 {
            assert!((fit.mu[t] - 0.05 * t as f64).abs() < 1e-4, "{t}: {}", fit.mu[t]);
        }
    }

    #[test]
    fn large_penalty_flattens_trend() {
        let pairs: Vec<_> = (0..20)
            .map(|i| pair(i % 5, 5 + i % 4, 0.1 * (i as f64).sin(), "a"))
            .collect();
        let cfg = RsConfig {
            lambda_mu: 1e9,
            ..Default::default()
        };
        let fit = estimate_indexes(&pairs, &graph1(), 10, &cfg).unwrap();
        assert!(fit.mu.windows(2).all(|w| (w[1] - w[0]).abs() < 1e-6));
    }

    #[test]
    fn negative_penalty_rejected() {
        let cfg = RsConfig {
            lambda_mu: -1.0,
            ..Default::default()
        };
        assert!(estimate_indexes(&[pair(0, 1, 0.1, "a")], &graph1(), 2, &cfg).is_err());
        assert!(estimate_indexes(&[], &graph1(), 2, &RsConfig::default()).is_err());
    }
}
