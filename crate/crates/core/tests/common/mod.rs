//! Oracles shared by the integration tests.
#![allow(dead_code)]

use hpfactor::tskit::{ArimaSpec, ArmaParams, ModelParams};
use nalgebra::{DMatrix, DVector};

/// ARMA autocovariances γ(0..n) from ψ weights, σ² = 1.
pub fn arma_autocov(params: &ArmaParams, n: usize) -> Vec<f64> {
    let psi = params.psi_weights(6000);
    (0..n)
        .map(|k| psi.iter().zip(&psi[k..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// Dense multivariate-normal log density of the regression errors under the
/// model, using the Toeplitz covariance.
pub fn dense_loglik(spec: &ArimaSpec, p: &ModelParams, y: &[f64], exog: &[Vec<f64>]) -> f64 {
    let tr = |s: &[f64]| -> Vec<f64> {
        if spec.d == 1 {
            s.windows(2).map(|w| w[1] - w[0]).collect()
        } else {
            s.to_vec()
        }
    };
    let yd = tr(y);
    let xd: Vec<Vec<f64>> = exog.iter().map(|c| tr(c)).collect();
    let n = yd.len();
    let u = DVector::from_fn(n, |t, _| {
        let mut v = yd[t];
        if spec.intercept {
            v -= p.intercept;
        }
        for (j, b) in p.beta.iter().enumerate() {
            v -= b * xd[j][t];
        }
        v
    });
    let g = arma_autocov(&p.arma, n);
    let sigma = DMatrix::from_fn(n, n, |i, j| p.sigma2 * g[i.abs_diff(j)]);
    let chol = sigma.cholesky().expect("covariance positive definite");
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = chol.solve(&u);
    -0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * u.dot(&z)
}

/// Brute-force median by sorting.
pub fn sort_median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Path Laplacian over `n` nodes.
pub fn path_laplacian(n: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for t in 0..n.saturating_sub(1) {
        l[(t, t)] += 1.0;
        l[(t + 1, t + 1)] += 1.0;
        l[(t, t + 1)] -= 1.0;
        l[(t + 1, t)] -= 1.0;
    }
    l
}

/// Laplacian of an undirected edge list over `n` nodes.
pub fn graph_laplacian(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(a, b) in edges {
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
    }
    l
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// Penalized repeat-sales solution from the dense normal equations with the
/// base-month unknowns removed. Returns `(θ, μ, α)`.
pub fn dense_rsindex(
    pairs: &[hpfactor::ingest::RepeatSalePair],
    graph: &hpfactor::ingest::RegionGraph,
    months: usize,
    cfg: &hpfactor::rsindex::RsConfig,
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let r = graph.len();
    let local = r > 1;
    let off = usize::from(cfg.intercept);
    let n = off + months + if local { r * months } else { 0 };
    let mu = |t: usize| off + t;
    let al = |g: usize, t: usize| off + months + g * months + t;
    let mut x = DMatrix::zeros(pairs.len(), n);
    let mut y = DVector::zeros(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let g = graph.index_of(&p.region_id).unwrap();
        if cfg.intercept {
            x[(i, 0)] = 1.0;
        }
        x[(i, mu(p.t2))] += 1.0;
        x[(i, mu(p.t1))] -= 1.0;
        if local {
            x[(i, al(g, p.t2))] += 1.0;
            x[(i, al(g, p.t1))] -= 1.0;
        }
        y[i] = p.dlog_price;
    }
    let mut pen = DMatrix::zeros(n, n);
    let lt = path_laplacian(months);
    pen.view_mut((off, off), (months, months)).copy_from(&(lt.clone() * cfg.lambda_mu));
    if local {
        let ls = graph_laplacian(r, &graph.edges);
        let lst = kron(&ls, &lt) * cfg.lambda_alpha;
        pen.view_mut((off + months, off + months), (r * months, r * months)).copy_from(&lst);
    }
    let a = x.transpose() * &x + pen;
    let b = x.transpose() * &y;
    let mut keep: Vec<usize> = (0..n).collect();
    let mut pinned = vec![mu(cfg.base_month)];
    if local {
        pinned.extend((0..r).map(|g| al(g, cfg.base_month)));
    }
    keep.retain(|i| !pinned.contains(i));
    let ak = DMatrix::from_fn(keep.len(), keep.len(), |i, j| a[(keep[i], keep[j])]);
    let bk = DVector::from_fn(keep.len(), |i, _| b[keep[i]]);
    let sol = ak.cholesky().expect("normal equations positive definite").solve(&bk);
    let mut full = vec![0.0; n];
    for (i, &k) in keep.iter().enumerate() {
        full[k] = sol[i];
    }
    let theta = if cfg.intercept { full[0] } else { 0.0 };
    let m = (0..months).map(|t| full[mu(t)]).collect();
    let alpha = (0..r)
        .map(|g| (0..months).map(|t| if local { full[al(g, t)] } else { 0.0 }).collect())
        .collect();
    (theta, m, alpha)
}

/// Small random repeat-sales problem: `R ≤ 4` regions on a path graph with
/// one chord, `T ≤ 8` months, every month and region touched.
pub fn random_rs_instance(
    seed: u64,
) -> (
    Vec<hpfactor::ingest::RepeatSalePair>,
    hpfactor::ingest::RegionGraph,
    usize,
    hpfactor::rsindex::RsConfig,
) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = rng.random_range(1..=4usize);
    let months = rng.random_range(3..=8usize);
    let nodes: Vec<String> = (0..r).map(|i| format!("n{i}")).collect();
    let mut edges: Vec<(String, String)> = (1..r).map(|i| (nodes[i - 1].clone(), nodes[i].clone())).collect();
    if r >= 3 && rng.random_bool(0.5) {
        edges.push((nodes[0].clone(), nodes[r - 1].clone()));
    }
    let graph = hpfactor::ingest::RegionGraph::new(nodes.clone(), vec!["A".into(); r], vec![1.0; r], &edges).unwrap();
    let mut pairs = Vec::new();
    let n_pairs = rng.random_range(3 * months..6 * months) * r;
    for k in 0..n_pairs {
        // guarantee coverage of each month and region first
        let g = k % r;
        let (t1, t2) = if k < months * r {
            let t = (k / r) % months;
            if t + 1 < months { (t, t + 1) } else { (t - 1, t) }
        } else if k < months * r + r {
            // a long gap separates the intercept from a common linear trend
            (0, months - 1)
        } else {
            let a = rng.random_range(0..months - 1);
            (a, rng.random_range(a + 1..months))
        };
        pairs.push(hpfactor::ingest::RepeatSalePair {
            property_id: format!("p{k}"),
            t1,
            t2,
            dlog_price: rng.random_range(-0.3..0.5),
            region_id: nodes[g].clone(),
        });
    }
    let cfg = hpfactor::rsindex::RsConfig {
        lambda_mu: rng.random_range(0.1..5.0),
        lambda_alpha: rng.random_range(0.1..20.0),
        base_month: rng.random_range(0..months),
        intercept: rng.random_bool(0.5),
        tolerance: 1e-14,
        max_iter: None,
    };
    (pairs, graph, months, cfg)
}

/// Published regional table: region, β, λ, γ, f_r at f_M = 2, doubling time,
/// x95 (factors), x95 (total).
#[allow(clippy::type_complexity)]
pub const PUBLISHED_REGIONS: [(&str, f64, f64, f64, f64, f64, f64, f64); 14] = [
    ("Melbourne", 1.22, -0.16, -0.70, 2.33, 8.16, 1.24, 1.25),
    ("Brisbane", 1.10, 0.06, 0.39, 2.14, 9.05, 1.12, 1.14),
    ("Hobart", 1.02, 0.12, 0.68, 2.03, 9.76, 1.23, 1.30),
    ("ACT", 1.02, -0.08, 0.11, 2.03, 9.76, 1.05, 1.10),
    ("Sydney", 1.01, -0.43, -0.14, 2.01, 9.86, 1.26, 1.27),
    ("Adelaide", 0.96, 0.05, 0.09, 1.95, 10.37, 1.04, 1.10),
    ("Perth", 0.96, 0.60, -0.13, 1.95, 10.37, 1.38, 1.39),
    ("Rest Of Tas.", 0.93, 0.14, 0.54, 1.91, 10.71, 1.19, 1.24),
    ("Darwin", 0.91, 0.13, -0.27, 1.88, 10.94, 1.11, 1.39),
    ("Rest Of NSW", 0.88, -0.04, 0.38, 1.84, 11.31, 1.12, 1.12),
    ("Rest Of QLD", 0.85, 0.23, 0.47, 1.80, 11.71, 1.20, 1.20),
    ("Rest Of VIC", 0.81, 0.01, 0.09, 1.75, 12.29, 1.03, 1.10),
    ("Rest Of SA", 0.73, 0.10, 0.21, 1.66, 13.64, 1.08, 1.11),
    ("Rest Of WA", 0.70, 0.25, -0.09, 1.62, 14.22, 1.14, 1.23),
];

/// Ten-year factor standard deviations of the published fans.
pub const SIGMA_MINING_120: f64 = 0.27;
pub const SIGMA_LIFESTYLE_120: f64 = 0.15;
/// National doubling time in years behind the published table.
pub const T_M: f64 = 9.96;

/// Random break positions in `0..n` with gaps of at least `gap`, including
/// from either end.
fn planted_breaks(rng: &mut impl rand::Rng, n: usize, k: usize, gap: usize) -> Vec<usize> {
    loop {
        let mut b: Vec<usize> = (0..k).map(|_| rng.random_range(gap..n - gap)).collect();
        b.sort_unstable();
        if b.windows(2).all(|w| w[1] - w[0] >= gap) {
            return b;
        }
    }
}

/// Three level shifts of size 1 to 2 (random sign) in Gaussian noise.
pub fn staircase(seed: u64, n: usize) -> (Vec<f64>, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let b = planted_breaks(&mut rng, n, 3, 20);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut level = 0.0;
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        if b.contains(&t) {
            let jump: f64 = rng.random_range(1.0..2.0);
            level += if rng.random_bool(0.5) { jump } else { -jump };
        }
        y.push(level + noise.sample(&mut rng));
    }
    (y, b)
}

/// Continuous piecewise-linear path with three kinks; slopes change by
/// 0.05 to 0.1 per step.
pub fn kinked(seed: u64, n: usize) -> (Vec<f64>, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let b = planted_breaks(&mut rng, n, 3, 20);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut slope: f64 = rng.random_range(-0.05..0.05);
    let mut level = 0.0;
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        if b.contains(&t) {
            let change: f64 = rng.random_range(0.05..0.1);
            slope += if rng.random_bool(0.5) { change } else { -change };
        }
        level += slope;
        y.push(level + noise.sample(&mut rng));
    }
    (y, b)
}

/// Minimum total cost over every placement of three breakpoints with
/// segments of at least `min_size`.
pub fn exhaustive_three(table: &hpfactor::breaks::CostTable, n: usize, min_size: usize) -> (f64, [usize; 3]) {
    let mut best = (f64::INFINITY, [0; 3]);
    for a in min_size..=n - 3 * min_size {
        let ca = table.cost(0, a);
        for b in a + min_size..=n - 2 * min_size {
            let cb = ca + table.cost(a, b);
            if cb >= best.0 {
                continue;
            }
            for c in b + min_size..=n - min_size {
                let total = cb + table.cost(b, c) + table.cost(c, n);
                if total < best.0 {
                    best = (total, [a, b, c]);
                }
            }
        }
    }
    best
}

/// SSE of an OLS line on `y` (or around the mean when `line` is false).
pub fn direct_sse(y: &[f64], line: bool) -> f64 {
    let n = y.len();
    let x = DMatrix::from_fn(n, if line { 2 } else { 1 }, |t, j| if j == 0 { 1.0 } else { t as f64 });
    let yv = DVector::from_column_slice(y);
    let beta = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &yv));
    (yv - x * beta).norm_squared()
}

/// Selected spec is `(p, d, q)` itself, or lies within 2 AICc of it.
pub fn selects_or_equivalent(sel: &hpfactor::tskit::Selection, p: usize, d: usize, q: usize) -> bool {
    let s = &sel.selected;
    if (s.p, s.d, s.q, s.seasonal_q) == (p, d, q, 0) {
        return true;
    }
    let target = sel
        .candidates
        .iter()
        .find(|c| (c.spec.p, c.spec.d, c.spec.q, c.spec.seasonal_q) == (p, d, q, 0))
        .and_then(|c| c.aicc);
    match target {
        Some(a) => (sel.fit.aicc - a).abs() <= 2.0,
        None => false,
    }
}

/// Published ARIMA(2,0,1) factor coefficients: (φ1, φ2, θ1, σ²).
pub const MINING_ARMA: (f64, f64, f64, f64) = (1.932, -0.934, -0.398, 4.485e-5);
pub const LIFESTYLE_ARMA: (f64, f64, f64, f64) = (1.896, -0.898, -0.309, 1.706e-5);

/// Fit object carrying the given ARIMA(2,0,1) coefficients, no intercept.
pub fn published_fit(c: (f64, f64, f64, f64)) -> hpfactor::tskit::ArimaFit {
    let spec = ArimaSpec::new(2, 0, 1).without_intercept();
    let params = ModelParams {
        arma: ArmaParams::new(vec![c.0, c.1], vec![c.2], vec![]),
        intercept: 0.0,
        beta: vec![],
        sigma2: c.3,
    };
    hpfactor::tskit::ArimaFit::from_params(spec, params).unwrap()
}

/// Random (spec, params, y, exog) with T ≤ 50 for likelihood oracles.
pub fn random_instance(seed: u64) -> (ArimaSpec, ModelParams, Vec<f64>, Vec<Vec<f64>>) {
    use hpfactor::tskit::transform;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = hpfactor::stats::task_rng(seed, 0);
    let p = rng.random_range(0..=3);
    let q = rng.random_range(0..=2);
    let d = rng.random_range(0..=1);
    let sq = usize::from(rng.random_bool(0.3));
    let mut spec = ArimaSpec::new(p, d, q);
    spec.seasonal_q = sq;
    spec.intercept = rng.random_bool(0.7);
    let pacf = |rng: &mut rand_chacha::ChaCha8Rng, k| -> Vec<f64> {
        (0..k).map(|_| rng.random_range(-0.85..0.85)).collect()
    };
    let ar = transform::pacf_to_ar(&pacf(&mut rng, p));
    let ma: Vec<f64> = transform::pacf_to_ar(&pacf(&mut rng, q)).iter().map(|v| -v).collect();
    let sma: Vec<f64> = pacf(&mut rng, sq);
    let n = rng.random_range(20..=50);
    let k = rng.random_range(0..=2);
    let exog: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|t| 0.05 * t as f64 + { let z: f64 = StandardNormal.sample(&mut rng); z })
        .collect();
    let params = ModelParams {
        arma: ArmaParams::new(ar, ma, sma),
        intercept: rng.random_range(-1.0..1.0),
        beta: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
        sigma2: rng.random_range(0.2..3.0),
    };
    (spec, params, y, exog)
}
