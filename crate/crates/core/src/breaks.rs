//! Structural-break analysis: binary segmentation, regime dummies,
//! regime-adjusted forecast fans and per-regime unit-root tests.

use serde::{Deserialize, Serialize};

use crate::tskit::{adf_test, fit, forecast_fan, AdfResult, ArimaFit, ArimaSpec, FitOptions};
use crate::{Error, Result};

/// Default minimum segment length (months).
pub const DEFAULT_MIN_SIZE: usize = 12;
/// Regimes shorter than this get no ADF statistic.
pub const MIN_ADF_REGIME: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SegmentCost {
    /// SSE of a least-squares line fitted within the segment.
    #[default]
    LinearTrend,
    /// SSE around the segment mean.
    MeanShift,
}

/// Prefix sums giving O(1) segment costs.
pub struct CostTable {
    kind: SegmentCost,
    s1: Vec<f64>,
    st: Vec<f64>,
    stt: Vec<f64>,
    sy: Vec<f64>,
    sty: Vec<f64>,
    syy: Vec<f64>,
}

impl CostTable {
    pub fn new(y: &[f64], kind: SegmentCost) -> Self {
        let n = y.len();
        let mut c = CostTable {
            kind,
            s1: vec![0.0; n + 1],
            st: vec![0.0; n + 1],
            stt: vec![0.0; n + 1],
            sy: vec![0.0; n + 1],
            sty: vec![0.0; n + 1],
            syy: vec![0.0; n + 1],
        };
        for (i, &v) in y.iter().enumerate() {
            let t = i as f64;
            c.s1[i + 1] = c.s1[i] + 1.0;
            c.st[i + 1] = c.st[i] + t;
            c.stt[i + 1] = c.stt[i] + t * t;
            c.sy[i + 1] = c.sy[i] + v;
            c.sty[i + 1] = c.sty[i] + t * v;
            c.syy[i + 1] = c.syy[i] + v * v;
        }
        c
    }

    /// Cost of the half-open segment `[a, b)`.
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        let d = |s: &[f64]| s[b] - s[a];
        let n = d(&self.s1);
        if n < 1.0 {
            return 0.0;
        }
        let sy = d(&self.sy);
        let syy = d(&self.syy) - sy * sy / n;
        let v = match self.kind {
            SegmentCost::MeanShift => syy,
            SegmentCost::LinearTrend => {
                if n < 3.0 {
                    return 0.0;
                }
                let st = d(&self.st);
                let stt = d(&self.stt) - st * st / n;
                let sty = d(&self.sty) - st * sy / n;
                syy - sty * sty / stt
            }
        };
        v.max(0.0)
    }

    /// Total cost of the segmentation implied by `breakpoints`.
    pub fn total(&self, breakpoints: &[usize]) -> f64 {
        let n = self.s1.len() - 1;
        let mut edges = vec![0];
        edges.extend_from_slice(breakpoints);
        edges.push(n);
        edges.windows(2).map(|w| self.cost(w[0], w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSet {
    /// First index of each regime after the first, strictly increasing.
    pub breakpoints: Vec<usize>,
    /// Series length.
    pub n: usize,
}

impl RegimeSet {
    pub fn new(breakpoints: Vec<usize>, n: usize) -> Result<Self> {
        if breakpoints.windows(2).any(|w| w[0] >= w[1])
            || breakpoints.first().is_some_and(|&b| b == 0)
            || breakpoints.last().is_some_and(|&b| b >= n)
        {
            return Err(Error::invalid("breakpoints must be strictly increasing and interior"));
        }
        Ok(RegimeSet { breakpoints, n })
    }

    /// Half-open `[start, end)` intervals partitioning `0..n`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut edges = vec![0];
        edges.extend_from_slice(&self.breakpoints);
        edges.push(self.n);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn dummies(&self) -> Vec<Vec<f64>> {
        regime_dummies(self, self.n).expect("consistent length")
    }
}

/// Greedy binary segmentation. Each step splits the segment and position with
/// the largest cost reduction; equal gains go to the earliest index.
pub fn binary_segmentation(
    y: &[f64],
    n_bkps: usize,
    cost: SegmentCost,
    min_size: usize,
) -> Result<RegimeSet> {
    let n = y.len();
    if n_bkps == 0 {
        return Err(Error::invalid("n_bkps must be at least 1"));
    }
    let min_size = min_size.max(2);
    let needed = 10 * (n_bkps + 1);
    if n < needed {
        return Err(Error::TooShort { needed, got: n });
    }
    if n < min_size * (n_bkps + 1) {
        return Err(Error::OutOfRange(format!(
            "{n_bkps} breakpoints with minimum segment {min_size} need {} points",
            min_size * (n_bkps + 1)
        )));
    }
    let table = CostTable::new(y, cost);
    let mut bkps: Vec<usize> = Vec::new();
    for _ in 0..n_bkps {
        let mut edges = vec![0];
        edges.extend_from_slice(&bkps);
        edges.push(n);
        let mut best: Option<(f64, usize)> = None;
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let whole = table.cost(a, b);
            for s in (a + min_size)..=(b.saturating_sub(min_size)) {
                let gain = whole - table.cost(a, s) - table.cost(s, b);
                let better = match best {
                    None => true,
                    Some((g, i)) => gain > g || (gain == g && s < i),
                };
                if better {
                    best = Some((gain, s));
                }
            }
        }
        let Some((_, s)) = best else {
            return Err(Error::OutOfRange(format!(
                "no admissible split for breakpoint {} with minimum segment {min_size}",
                bkps.len() + 1
            )));
        };
        bkps.push(s);
        bkps.sort_unstable();
    }
    RegimeSet::new(bkps, n)
}

/// One indicator column per regime after the first.
pub fn regime_dummies(regimes: &RegimeSet, n: usize) -> Result<Vec<Vec<f64>>> {
    if regimes.n != n {
        return Err(Error::Dimension(format!(
            "regimes cover {} points, series has {n}",
            regimes.n
        )));
    }
    Ok(regimes.segments()[1..]
        .iter()
        .map(|&(a, b)| (0..n).map(|t| if t >= a && t < b { 1.0 } else { 0.0 }).collect())
        .collect())
}

/// OLS slope of `y` against time within each regime.
pub fn regime_slopes(y: &[f64], regimes: &RegimeSet) -> Vec<f64> {
    regimes
        .segments()
        .iter()
        .map(|&(a, b)| {
            let seg = &y[a..b];
            let n = seg.len() as f64;
            let tm = (n - 1.0) / 2.0;
            let ym = seg.iter().sum::<f64>() / n;
            let (mut num, mut den) = (0.0, 0.0);
            for (i, v) in seg.iter().enumerate() {
                let dt = i as f64 - tm;
                num += dt * (v - ym);
                den += dt * dt;
            }
            if den > 0.0 {
                num / den
            } else {
                f64::NAN
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeFan {
    pub horizon: usize,
    pub sd_adjusted: f64,
    pub sd_unconditional: f64,
    pub x95_adjusted: f64,
    pub x95_unconditional: f64,
    pub aicc_adjusted: f64,
    pub aicc_unconditional: f64,
    #[serde(skip)]
    pub adjusted: Option<ArimaFit>,
    #[serde(skip)]
    pub unconditional: Option<ArimaFit>,
}

impl RegimeFan {
    pub fn sd_ratio(&self) -> f64 {
        self.sd_adjusted / self.sd_unconditional
    }
}

/// Fit `spec` with and without regime dummies; the adjusted fan keeps the
/// last regime's dummies fixed over the horizon.
pub fn regime_adjusted_fan(
    y: &[f64],
    regimes: &RegimeSet,
    spec: &ArimaSpec,
    h: usize,
    opts: &FitOptions,
) -> Result<RegimeFan> {
    let d = regime_dummies(regimes, y.len())?;
    let adj = fit(spec, y, &d, opts)?;
    let unc = fit(spec, y, &[], opts)?;
    let fa = forecast_fan(&adj, h)?;
    let fu = forecast_fan(&unc, h)?;
    Ok(RegimeFan {
        horizon: h,
        sd_adjusted: fa.sd(h),
        sd_unconditional: fu.sd(h),
        x95_adjusted: fa.x95(h),
        x95_unconditional: fu.x95(h),
        aicc_adjusted: adj.aicc,
        aicc_unconditional: unc.aicc,
        adjusted: Some(adj),
        unconditional: Some(unc),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeAdf {
    pub label: String,
    pub start: usize,
    pub end: usize,
    /// `None` when the regime is too short.
    pub result: Option<AdfResult>,
    pub note: Option<String>,
}

/// ADF on the full series, its first difference, and each regime.
pub fn adf_by_regime(y: &[f64], regimes: &RegimeSet, max_lags: Option<usize>) -> Result<Vec<RegimeAdf>> {
    let mut out = Vec::new();
    let run = |label: String, a: usize, b: usize, s: &[f64]| -> RegimeAdf {
        if s.len() < MIN_ADF_REGIME {
            return RegimeAdf {
                label,
                start: a,
                end: b,
                result: None,
                note: Some("insufficient".into()),
            };
        }
        let lags = max_lags.map(|l| l.min((s.len() - 1) / 3));
        match adf_test(s, lags) {
            Ok(r) => RegimeAdf {
                label,
                start: a,
                end: b,
                result: Some(r),
                note: None,
            },
            Err(e) => RegimeAdf {
                label,
                start: a,
                end: b,
                result: None,
                note: Some(e.to_string()),
            },
        }
    };
    out.push(run("full".into(), 0, y.len(), y));
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    out.push(run("first difference".into(), 1, y.len(), &dy));
    for (i, (a, b)) in regimes.segments().into_iter().enumerate() {
        out.push(run(format!("regime {}", i + 1), a, b, &y[a..b]));
    }
    Ok(out)
}

/// Breakpoint report for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreakReport {
    pub breakpoints: Vec<String>,
    pub breakpoint_index: Vec<usize>,
    #[serde(deserialize_with = "crate::stats::nan_as_null::vec")]
    pub slopes: Vec<f64>,
    pub adf: Vec<RegimeAdf>,
    pub fan: Option<RegimeFan>,
}
