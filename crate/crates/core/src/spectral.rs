//! Principal components of a log index panel.
//!
//! PCA runs on per-region centered levels (no variance scaling) through an SVD
//! of the centered `T × R` matrix `X = U S Vᵀ`. Component series are the
//! scores `z_k = s_k u_k` and loadings are the rows of `Vᵀ`, so
//! `Σ_r a_kr x_r = z_k` and `x_r = Σ_k a_kr z_k` hold exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::rsindex::IndexPanel;
use crate::stats::correlation;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaResult {
    /// `components[k][t]`
    pub components: Vec<Vec<f64>>,
    /// `loadings[k][r]`, orthonormal rows.
    pub loadings: Vec<Vec<f64>>,
    /// Share of total centered variance per retained component.
    pub explained_variance: Vec<f64>,
    /// Squared singular values of all components (not only retained ones).
    pub eigenvalues: Vec<f64>,
    /// Per-region means removed before the decomposition.
    pub centering: Vec<f64>,
    pub regions: Vec<String>,
}

/// Orientation rules applied after the decomposition.
#[derive(Debug, Clone, Default)]
pub struct SignAnchors {
    /// PC1 is flipped so it correlates positively with this series.
    pub national: Option<Vec<f64>>,
    /// PC2 is flipped so this region loads positively.
    pub pc2_region: Option<String>,
    /// PC3 is flipped so the summed loading over these regions is positive.
    pub pc3_regions: Vec<String>,
}

pub fn fit_pca(panel: &IndexPanel, q: usize, anchors: &SignAnchors) -> Result<PcaResult> {
    let (t, r) = (panel.n_months(), panel.n_regions());
    if q == 0 || q > t.min(r) {
        return Err(Error::OutOfRange(format!(
            "component count {q} outside 1..={}",
            t.min(r)
        )));
    }
    let centering: Vec<f64> = (0..r).map(|c| panel.values.column(c).mean()).collect();
    let x = DMatrix::from_fn(t, r, |i, c| panel.values[(i, c)] - centering[c]);
    let total: f64 = x.norm_squared();
    if total <= 1e-24 {
        return Err(Error::Degenerate("panel is constant over time".into()));
    }
    let svd = x.svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| svd.singular_values[k].powi(2)).collect();
    let mut components = Vec::with_capacity(q);
    let mut loadings = Vec::with_capacity(q);
    for &k in order.iter().take(q) {
        let s = svd.singular_values[k];
        components.push(u.column(k).iter().map(|v| v * s).collect::<Vec<_>>());
        loadings.push(vt.row(k).iter().copied().collect::<Vec<_>>());
    }
    let mut res = PcaResult {
        components,
        loadings,
        explained_variance: eigenvalues.iter().take(q).map(|e| e / total).collect(),
        eigenvalues,
        centering,
        regions: panel.regions.clone(),
    };
    orient(&mut res, anchors);
    Ok(res)
}

fn flip(res: &mut PcaResult, k: usize) {
    res.components[k].iter_mut().for_each(|v| *v = -*v);
    res.loadings[k].iter_mut().for_each(|v| *v = -*v);
}

fn orient(res: &mut PcaResult, anchors: &SignAnchors) {
    let q = res.components.len();
    let loading_sum = |res: &PcaResult, k: usize, ids: &[String]| -> f64 {
        ids.iter()
            .filter_map(|id| res.regions.iter().position(|r| r == id))
            .map(|c| res.loadings[k][c])
            .sum()
    };
    // default: positive loading sum
    for k in 0..q {
        if res.loadings[k].iter().sum::<f64>() < 0.0 {
            flip(res, k);
        }
    }
    if let Some(u) = &anchors.national {
        if u.len() == res.components[0].len() && correlation(&res.components[0], u) < 0.0 {
            flip(res, 0);
        }
    }
    if q > 1 {
        if let Some(id) = &anchors.pc2_region {
            if loading_sum(res, 1, std::slice::from_ref(id)) < 0.0 {
                flip(res, 1);
            }
        }
    }
    if q > 2 && !anchors.pc3_regions.is_empty() && loading_sum(res, 2, &anchors.pc3_regions) < 0.0 {
        flip(res, 2);
    }
}

/// Rank-`q_used` reconstruction plus centering.
pub fn reconstruct(res: &PcaResult, panel_like: &IndexPanel, q_used: usize) -> Result<IndexPanel> {
    if q_used > res.components.len() {
        return Err(Error::OutOfRange(format!(
            "q_used {q_used} exceeds retained {}",
            res.components.len()
        )));
    }
    let t = res.components.first().map_or(0, |c| c.len());
    let r = res.centering.len();
    let values = DMatrix::from_fn(t, r, |i, c| {
        res.centering[c]
            + (0..q_used)
                .map(|k| res.loadings[k][c] * res.components[k][i])
                .sum::<f64>()
    });
    IndexPanel::new(
        panel_like.months.clone(),
        res.regions.clone(),
        values,
        panel_like.base_month,
    )
}

/// `Σ_r a_kr (μ_r − c_r)` for 0-based component `k`.
pub fn component_from_panel(res: &PcaResult, panel: &IndexPanel, k: usize) -> Result<Vec<f64>> {
    if k >= res.loadings.len() {
        return Err(Error::OutOfRange(format!("component {k} not retained")));
    }
    if panel.n_regions() != res.centering.len() {
        return Err(Error::Dimension("panel region count differs from fit".into()));
    }
    Ok((0..panel.n_months())
        .map(|t| {
            (0..panel.n_regions())
                .map(|c| res.loadings[k][c] * (panel.values[(t, c)] - res.centering[c]))
                .sum()
        })
        .collect())
}

/// Regions with the `n` most positive and `n` most negative loadings on
/// component `k`, most extreme first.
pub fn rank_by_loading(res: &PcaResult, k: usize, n: usize) -> Result<(Vec<String>, Vec<String>)> {
    if k >= res.loadings.len() {
        return Err(Error::OutOfRange(format!("component {k} not retained")));
    }
    let mut idx: Vec<usize> = (0..res.regions.len()).collect();
    idx.sort_by(|&a, &b| res.loadings[k][b].total_cmp(&res.loadings[k][a]).then(a.cmp(&b)));
    let top = idx.iter().take(n).map(|&i| res.regions[i].clone()).collect();
    let bottom = idx.iter().rev().take(n).map(|&i| res.regions[i].clone()).collect();
    Ok((top, bottom))
}
