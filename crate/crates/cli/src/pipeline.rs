//! One function per command. Each reads its inputs from the run directory,
//! writes its artifacts next to them, and records warnings and failed checks.

use std::collections::HashMap;
use std::path::PathBuf;

use hpfactor::breaks::{adf_by_regime, binary_segmentation, regime_adjusted_fan, regime_slopes, BreakReport};
use hpfactor::factors::{build_factors, factor_correlations, FactorDefinition, FactorSet};
use hpfactor::ingest::{load_geography, load_transactions, pair_repeat_sales, LoadOptions, PairOptions, RegionGraph};
use hpfactor::rsindex::{aggregate, estimate_panel, AggregateLevel, IndexPanel, RsConfig};
use hpfactor::scenario::{
    attach_remainder, decompose, expanding_windows, fit_region, lifestyle_inclusion_test, median_loadings,
    national_doubling_time, uncertainty_band, window_endpoints, write_band_table, write_scenario_table, HorizonSigmas,
    InclusionTest, LoadingPath, RegionLoadings,
};
use hpfactor::spectral::{fit_pca, rank_by_loading, PcaResult, SignAnchors};
use hpfactor::stats::{correlation, sample_sd};
use hpfactor::synth::{build_world, WorldManifest};
use hpfactor::tskit::{fit, forecast_fan, select_order, ArimaFit, ArimaSpec, FitOptions, FitReport, ForecastFan};
use hpfactor::exec::Exec;
use serde::{Deserialize, Serialize};

use crate::config::{FactorName, LoadingChoice, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::run::RunDir;

pub struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub run: &'a RunDir,
    pub exec: Exec,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorSpecs {
    pub mining: ArimaSpec,
    pub lifestyle: ArimaSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSpec {
    pub region: String,
    pub spec: ArimaSpec,
    pub lifestyle: bool,
    pub test: InclusionTest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub factors: FactorSpecs,
    pub regions: Vec<RegionSpec>,
}

/// Loadings plus the conditional remainder variance path `h = 1..horizon`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadingsRecord {
    pub horizon: usize,
    pub loadings: Vec<RegionLoadings>,
    pub remainder_var: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowsRecord {
    pub paths: Vec<LoadingPath>,
    pub median: LoadingsRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FansRecord {
    pub mining: ForecastFan,
    pub lifestyle: ForecastFan,
    pub mining_fit: FitReport,
    pub lifestyle_fit: FitReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub t_m_years: Option<f64>,
    pub horizon: usize,
    pub loadings: LoadingChoice,
    pub bands: Vec<hpfactor::scenario::ScenarioBand>,
}

fn f6(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

fn opt6(x: Option<f64>) -> String {
    x.map(f6).unwrap_or_default()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(";")
}

/// File-name form of a region id: "Rest Of Tas." becomes "rest_of_tas".
pub fn slug(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.split('_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_")
}

impl Ctx<'_> {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn check_fit(&mut self, what: &str, f: &ArimaFit) {
        if let Err(e) = f.check_invariants() {
            self.failures.push(format!("{what}: {e}"));
        }
        if !f.converged {
            self.warn(format!("{what}: optimizer did not converge"));
        }
        if f.boundary {
            self.warn(format!("{what}: estimate on the invertibility boundary, conditional standard errors"));
        }
    }

    fn inputs(&self) -> CliResult<(PathBuf, PathBuf)> {
        let tx = match &self.cfg.transactions {
            Some(p) => p.clone(),
            None => self.run.require_csv("synth/transactions.csv", "synth")?,
        };
        let geo = match &self.cfg.geography {
            Some(p) => p.clone(),
            None => {
                self.run.require_csv("synth/geography/nodes.csv", "synth")?;
                self.run.require_csv("synth/geography/edges.csv", "synth")?;
                self.run.path("synth/geography")
            }
        };
        Ok((tx, geo))
    }

    fn graph(&self) -> CliResult<RegionGraph> {
        Ok(load_geography(&self.inputs()?.1)?)
    }

    fn panel(&self, name: &str) -> CliResult<IndexPanel> {
        let p = self.run.require_csv(&format!("index/{name}.csv"), "build-index")?;
        Ok(IndexPanel::read_csv(&p, self.cfg.base_month)?)
    }

    fn factor_set(&self) -> CliResult<FactorSet> {
        self.run.read_json("factors/factors.json", "factors")
    }

    fn selection(&self) -> CliResult<SelectionRecord> {
        self.run.read_json("select/selection.json", "select")
    }

    fn regions(&self, coarse: &IndexPanel) -> CliResult<Vec<String>> {
        if self.cfg.regions.is_empty() {
            return Ok(coarse.regions.clone());
        }
        for r in &self.cfg.regions {
            if coarse.column_of(r).is_none() {
                return Err(CliError::Config(format!("regions: unknown coarse region {r:?}")));
            }
        }
        Ok(self.cfg.regions.clone())
    }

    fn no_se() -> FitOptions {
        FitOptions {
            std_errors: false,
            ..FitOptions::default()
        }
    }
}

pub fn synth(ctx: &mut Ctx) -> CliResult<()> {
    let world = build_world(&ctx.cfg.world(), ctx.exec)?;
    world.write(&ctx.run.path("synth"))?;
    for rel in [
        "synth/transactions.csv",
        "synth/geography/nodes.csv",
        "synth/geography/edges.csv",
        "synth/true_factors.csv",
        "synth/true_panel.csv",
        "synth/true_loadings.csv",
    ] {
        ctx.run.adopt_csv(rel)?;
    }
    ctx.run.write_json("synth/world.json", &world.manifest)?;
    log::info!("synth: {} transactions", world.transactions.len());
    Ok(())
}

pub fn build_index(ctx: &mut Ctx) -> CliResult<()> {
    let cfg = ctx.cfg;
    let (tx, geo) = ctx.inputs()?;
    let graph = load_geography(&geo)?;
    let opts = LoadOptions {
        window: Some((cfg.start, cfg.end)),
        reject_tolerance: cfg.reject_tolerance,
        ..LoadOptions::default()
    };
    let loaded = load_transactions(&tx, &opts, Some(&graph))?;
    if !loaded.rejected.is_empty() {
        ctx.warn(format!("{} of {} rows rejected", loaded.rejected.len(), loaded.total_rows));
    }
    let months = cfg.months();
    let pairs = pair_repeat_sales(&loaded.records, &PairOptions::new(cfg.start, months));
    let rs = RsConfig {
        lambda_mu: cfg.rsindex.lambda_mu,
        lambda_alpha: cfg.rsindex.lambda_alpha,
        tolerance: cfg.rsindex.tolerance,
        base_month: cfg.base_month.months_since(cfg.start) as usize,
        ..RsConfig::default()
    };
    let (fine, reports) = estimate_panel(&pairs, &graph, cfg.start, months, &rs, ctx.exec)?;
    let coarse = aggregate(&fine, &graph, AggregateLevel::Coarse)?;
    let national = aggregate(&fine, &graph, AggregateLevel::National)?;
    for (name, p) in [("fine_panel", &fine), ("coarse_panel", &coarse), ("national", &national)] {
        if p.values.iter().any(|v| !v.is_finite()) {
            ctx.failures.push(format!("{name}: non-finite index values"));
        }
        ctx.run.write_csv_with(&format!("index/{name}.csv"), |path| p.write_csv(path))?;
    }
    for r in &reports {
        if !r.empty_months.is_empty() {
            ctx.warn(format!("{}: {} months without sales", r.coarse_id, r.empty_months.len()));
        }
    }
    ctx.run.write_json(
        "index/report.json",
        &serde_json::json!({
            "base_month": cfg.base_month,
            "lambda_mu": rs.lambda_mu,
            "lambda_alpha": rs.lambda_alpha,
            "tolerance": rs.tolerance,
            "total_rows": loaded.total_rows,
            "records": loaded.records.len(),
            "rejected": loaded.rejected.len(),
            "rejected_sample": loaded.rejected.iter().take(50).collect::<Vec<_>>(),
            "pairs": pairs.len(),
            "areas": reports,
        }),
    )
}

pub fn pca(ctx: &mut Ctx) -> CliResult<()> {
    let cfg = ctx.cfg;
    let fine = ctx.panel("fine_panel")?;
    let national = ctx.panel("national")?.series(0);
    let graph = ctx.graph()?;
    let anchors = SignAnchors {
        national: Some(national.clone()),
        pc2_region: graph
            .members(&cfg.factors.mining_long)
            .first()
            .map(|&i| graph.nodes[i].clone()),
        pc3_regions: cfg.factors.lifestyle_top.clone(),
    };
    let res = fit_pca(&fine, cfg.pca_components, &anchors)?;
    let q = res.components.len();
    let zs: Vec<String> = (1..=q).map(|k| format!("z{k}")).collect();
    let pcs: Vec<String> = (1..=q).map(|k| format!("pc{k}")).collect();
    let mut header = vec!["month"];
    header.extend(zs.iter().map(String::as_str));
    ctx.run.write_rows(
        "pca/components.csv",
        &header,
        fine.months.iter().enumerate().map(|(t, m)| {
            let mut row = vec![m.to_string()];
            row.extend(res.components.iter().map(|c| f6(c[t])));
            row
        }),
    )?;
    let mut header = vec!["region_id"];
    header.extend(pcs.iter().map(String::as_str));
    ctx.run.write_rows(
        "pca/loadings.csv",
        &header,
        res.regions.iter().enumerate().map(|(i, r)| {
            let mut row = vec![r.clone()];
            row.extend(res.loadings.iter().map(|l| f6(l[i])));
            row
        }),
    )?;
    ctx.run.write_rows(
        "pca/explained.csv",
        &["component", "eigenvalue", "explained_variance"],
        (0..q).map(|k| vec![pcs[k].clone(), f6(res.eigenvalues[k]), f6(res.explained_variance[k])]),
    )?;
    let c1 = correlation(&res.components[0], &national);
    ctx.run.write_json("pca/pca.json", &res)?;
    log::info!("pca: corr(PC1, national) = {c1:.4}");
    Ok(())
}

pub fn factors(ctx: &mut Ctx) -> CliResult<()> {
    let cfg = ctx.cfg;
    let national = ctx.panel("national")?.series(0);
    let coarse = ctx.panel("coarse_panel")?;
    let fine = ctx.panel("fine_panel")?;
    let graph = ctx.graph()?;
    let weights: HashMap<String, f64> = graph.nodes.iter().cloned().zip(graph.weights.iter().copied()).collect();
    let pca: Option<PcaResult> = if ctx.run.exists("pca/pca.json") {
        Some(ctx.run.read_json("pca/pca.json", "pca")?)
    } else {
        None
    };

    let fc = &cfg.factors;
    let (top, bottom, source) = if !fc.lifestyle_top.is_empty() && !fc.lifestyle_bottom.is_empty() {
        (fc.lifestyle_top.clone(), fc.lifestyle_bottom.clone(), "config")
    } else if cfg.transactions.is_none() && ctx.run.exists("synth/world.json") {
        let m: WorldManifest = ctx.run.read_json("synth/world.json", "synth")?;
        let d = m.design.definition;
        (d.lifestyle_top, d.lifestyle_bottom, "synthetic world")
    } else {
        let res = pca.as_ref().ok_or_else(|| CliError::MissingArtifact {
            artifact: ctx.run.path("pca/pca.json").display().to_string(),
            producer: "pca".into(),
        })?;
        let (t, b) = rank_by_loading(res, 2, fc.basket_size)?;
        (t, b, "PC3 ranking")
    };
    let def = FactorDefinition {
        mining_long: fc.mining_long.clone(),
        mining_short: fc.mining_short.clone(),
        lifestyle_top: top,
        lifestyle_bottom: bottom,
    };
    let fs = build_factors(&national, &coarse, &fine, &weights, &def)?;

    ctx.run.write_csv_with("factors/factors.csv", |p| fs.write_csv(p))?;
    ctx.run.write_json("factors/factors.json", &fs)?;
    let names = ["market", "mining", "lifestyle"];
    let c = factor_correlations(&fs);
    ctx.run.write_rows(
        "factors/correlations.csv",
        &["factor", "market", "mining", "lifestyle"],
        (0..3).map(|i| {
            let mut row = vec![names[i].to_string()];
            row.extend(c[i].iter().map(|&v| f6(v)));
            row
        }),
    )?;
    if let Some(res) = &pca {
        let series = [&fs.market, &fs.mining, &fs.lifestyle];
        ctx.run.write_rows(
            "factors/pc_correlations.csv",
            &["component", "market", "mining", "lifestyle"],
            res.components.iter().enumerate().map(|(k, pc)| {
                let mut row = vec![format!("pc{}", k + 1)];
                row.extend(series.iter().map(|s| f6(correlation(pc, s))));
                row
            }),
        )?;
    }
    ctx.run.write_json(
        "factors/summary.json",
        &serde_json::json!({
            "basket_source": source,
            "alpha_mining": fs.alpha_mining,
            "alpha_lifestyle": fs.alpha_lifestyle,
            "definition": fs.definition,
        }),
    )
}

fn factor_model_row(name: &str, f: &ArimaFit) -> Vec<String> {
    let min_root = f.ar_root_moduli().into_iter().fold(f64::INFINITY, f64::min);
    let lb = FitReport::new(f).ok();
    vec![
        name.to_string(),
        f.spec.label(),
        opt6(f.intercept),
        join(&f.params.ar),
        join(&f.params.ma),
        join(&f.params.seasonal_ma),
        f6(f.sigma2.sqrt()),
        format!("{:.6e}", f.sigma2),
        f6(f.loglik),
        f6(f.aicc),
        opt6(lb.as_ref().and_then(|r| r.lb12_p)),
        opt6(lb.as_ref().and_then(|r| r.lb24_p)),
        f6(min_root),
        f.converged.to_string(),
    ]
}

const FACTOR_MODEL_HEADER: [&str; 14] = [
    "factor", "spec", "intercept", "ar", "ma", "seasonal_ma", "sigma", "sigma2", "loglik", "aicc", "lb12_p",
    "lb24_p", "min_root_modulus", "converged",
];

pub fn select(ctx: &mut Ctx) -> CliResult<()> {
    let cfg = ctx.cfg;
    let fs = ctx.factor_set()?;
    let coarse = ctx.panel("coarse_panel")?;
    let regions = ctx.regions(&coarse)?;
    let rules = cfg.rules.rules();

    let mut fits = Vec::new();
    let mut cand_rows = Vec::new();
    for (name, y) in [("mining", &fs.mining), ("lifestyle", &fs.lifestyle)] {
        let sel = select_order(y, &[], &cfg.factor_grid.grid(), &rules, ctx.exec)?;
        for c in &sel.candidates {
            cand_rows.push(vec![
                name.to_string(),
                c.spec.label(),
                opt6(c.aicc),
                c.error.clone().unwrap_or_default(),
            ]);
        }
        let f = fit(&sel.selected, y, &[], &FitOptions::default())?;
        ctx.check_fit(name, &f);
        fits.push(f);
    }
    ctx.run.write_rows(
        "select/factor_models.csv",
        &FACTOR_MODEL_HEADER,
        [factor_model_row("mining", &fits[0]), factor_model_row("lifestyle", &fits[1])],
    )?;
    ctx.run.write_rows("select/factor_candidates.csv", &["factor", "spec", "aicc", "error"], cand_rows)?;

    let exog = vec![fs.market.clone(), fs.mining.clone(), fs.lifestyle.clone()];
    let grid = cfg.region_grid.grid();
    let exec = ctx.exec;
    let results = exec.map(regions, |r| -> CliResult<RegionSpec> {
        let mu = coarse.series_by_id(&r)?;
        let sel = select_order(&mu, &exog, &grid, &rules, exec)?;
        let (test, _, _) = lifestyle_inclusion_test(&mu, &fs, &sel.selected, &Ctx::no_se())?;
        Ok(RegionSpec {
            region: r,
            spec: sel.selected,
            lifestyle: test.include,
            test,
        })
    });
    let regions = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    ctx.run.write_rows(
        "select/region_models.csv",
        &["region", "spec", "aicc_2f", "aicc_3f", "delta", "lifestyle_included", "lb12_2f", "lb12_3f"],
        regions.iter().map(|r| {
            vec![
                r.region.clone(),
                r.spec.label(),
                f6(r.test.aicc_2f),
                f6(r.test.aicc_3f),
                f6(r.test.delta),
                r.lifestyle.to_string(),
                opt6(r.test.lb12_2f),
                opt6(r.test.lb12_3f),
            ]
        }),
    )?;
    ctx.run.write_json(
        "select/selection.json",
        &SelectionRecord {
            factors: FactorSpecs {
                mining: fits[0].spec,
                lifestyle: fits[1].spec,
            },
            regions,
        },
    )
}

fn remainder_path(l: &RegionLoadings, h: usize) -> CliResult<Vec<f64>> {
    let f = l
        .remainder_fit
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{}: no remainder model", l.region_id)))?;
    Ok(forecast_fan(f, h)?.var_path)
}

fn write_loadings_table(ctx: &Ctx, rel: &str, rec: &LoadingsRecord) -> CliResult<()> {
    ctx.run.write_rows(
        rel,
        &[
            "region", "spec", "lifestyle_included", "b", "beta", "beta_se", "beta_lo", "beta_hi", "lambda",
            "lambda_se", "lambda_lo", "lambda_hi", "gamma", "gamma_se", "gamma_lo", "gamma_hi", "sigma2",
            "lb12_p", "lb24_p",
        ],
        rec.loadings.iter().map(|l| {
            let ci = |est: f64, se: Option<f64>| match se {
                Some(s) if s.is_finite() => [f6(s), f6(est - 1.96 * s), f6(est + 1.96 * s)],
                _ => Default::default(),
            };
            let [bs, bl, bh] = ci(l.beta, l.se.map(|s| s.beta));
            let [ls, ll, lh] = ci(l.lambda, l.se.map(|s| s.lambda));
            let [gs, gl, gh] = if l.lifestyle_included {
                ci(l.gamma, l.se.map(|s| s.gamma))
            } else {
                Default::default()
            };
            let rep = l.remainder_fit.as_ref().and_then(|f| FitReport::new(f).ok());
            vec![
                l.region_id.clone(),
                l.remainder_fit.as_ref().map(|f| f.spec.label()).unwrap_or_default(),
                l.lifestyle_included.to_string(),
                f6(l.b),
                f6(l.beta),
                bs,
                bl,
                bh,
                f6(l.lambda),
                ls,
                ll,
                lh,
                f6(l.gamma),
                gs,
                gl,
                gh,
                opt6(l.remainder_fit.as_ref().map(|f| f.sigma2)),
                opt6(rep.as_ref().and_then(|r| r.lb12_p)),
                opt6(rep.as_ref().and_then(|r| r.lb24_p)),
            ]
        }),
    )
}

pub fn fit_loadings(ctx: &mut Ctx) -> CliResult<()> {
    let h = ctx.cfg.horizon;
    let sel = ctx.selection()?;
    let fs = ctx.factor_set()?;
    let coarse = ctx.panel("coarse_panel")?;
    let results = ctx.exec.map(sel.regions.clone(), |r| -> CliResult<(RegionLoadings, Vec<f64>)> {
        let mu = coarse.series_by_id(&r.region)?;
        let l = fit_region(&r.region, &mu, &fs, &r.spec, r.lifestyle, &FitOptions::default())?;
        let var = remainder_path(&l, h)?;
        Ok((l, var))
    });
    let (loadings, remainder_var): (Vec<_>, Vec<_>) =
        results.into_iter().collect::<CliResult<Vec<_>>>()?.into_iter().unzip();
    for l in &loadings {
        if let Some(f) = &l.remainder_fit {
            ctx.check_fit(&l.region_id, f);
        }
    }
    let rec = LoadingsRecord {
        horizon: h,
        loadings,
        remainder_var,
    };
    write_loadings_table(ctx, "fit/loadings.csv", &rec)?;
    ctx.run.write_rows(
        "fit/remainder_fans.csv",
        &["region", "h", "var", "sd"],
        rec.loadings.iter().zip(&rec.remainder_var).flat_map(|(l, v)| {
            v.iter()
                .enumerate()
                .map(|(i, &x)| vec![l.region_id.clone(), (i + 1).to_string(), format!("{x:.6e}"), f6(x.sqrt())])
                .collect::<Vec<_>>()
        }),
    )?;
    ctx.run.write_json("fit/loadings.json", &rec)
}

pub fn windows(ctx: &mut Ctx) -> CliResult<()> {
    let cfg = ctx.cfg;
    let w = &cfg.windows;
    let sel = ctx.selection()?;
    let fs = ctx.factor_set()?;
    let coarse = ctx.panel("coarse_panel")?;
    let full: LoadingsRecord = ctx.run.read_json("fit/loadings.json", "fit")?;
    let endpoints = window_endpoints(&fs.months, w.first_end, w.last_end, w.step);
    if endpoints.is_empty() {
        return Err(CliError::Config("windows: no endpoints inside the sample".into()));
    }
    let mut paths = Vec::new();
    let mut median = Vec::new();
    let mut vars = Vec::new();
    for r in &sel.regions {
        let mu = coarse.series_by_id(&r.region)?;
        let warm = full
            .loadings
            .iter()
            .find(|l| l.region_id == r.region)
            .and_then(|l| l.remainder_fit.as_ref())
            .map(|f| f.params.clone());
        let path = expanding_windows(&r.region, &mu, &fs, &r.spec, r.lifestyle, 0, &endpoints, warm.as_ref(), ctx.exec)?;
        for (m, e) in &path.failures {
            ctx.warn(format!("{} window ending {m}: {e}", r.region));
        }
        let mut med = median_loadings(&path, w.median_from, w.median_to)?;
        attach_remainder(&mut med, &mu, &fs, &r.spec, &Ctx::no_se())?;
        ctx.run
            .write_csv_with(&format!("windows/paths/{}.csv", slug(&r.region)), |p| path.write_csv(p))?;
        vars.push(remainder_path(&med, cfg.horizon)?);
        median.push(med);
        paths.push(path);
    }
    ctx.run.write_rows(
        "windows/paths.csv",
        &["region", "endpoint", "b", "beta", "lambda", "gamma"],
        paths.iter().flat_map(|p| {
            (0..p.endpoints.len())
                .map(|i| {
                    vec![
                        p.region_id.clone(),
                        p.endpoints[i].to_string(),
                        opt6(p.b_path[i]),
                        opt6(p.beta_path[i]),
                        opt6(p.lambda_path[i]),
                        opt6(p.gamma_path[i]),
                    ]
                })
                .collect::<Vec<_>>()
        }),
    )?;
    ctx.run.write_rows(
        "windows/median_loadings.csv",
        &["region", "b", "beta", "lambda", "gamma"],
        median.iter().map(|l| vec![l.region_id.clone(), f6(l.b), f6(l.beta), f6(l.lambda), f6(l.gamma)]),
    )?;
    ctx.run.write_json(
        "windows/windows.json",
        &WindowsRecord {
            paths,
            median: LoadingsRecord {
                horizon: cfg.horizon,
                loadings: median,
                remainder_var: vars,
            },
        },
    )
}

pub fn fans(ctx: &mut Ctx) -> CliResult<()> {
    let h = ctx.cfg.horizon;
    let sel = ctx.selection()?;
    let fs = ctx.factor_set()?;
    let fm = fit(&sel.factors.mining, &fs.mining, &[], &FitOptions::default())?;
    let fl = fit(&sel.factors.lifestyle, &fs.lifestyle, &[], &FitOptions::default())?;
    ctx.check_fit("mining fan model", &fm);
    ctx.check_fit("lifestyle fan model", &fl);
    let rec = FansRecord {
        mining: forecast_fan(&fm, h)?,
        lifestyle: forecast_fan(&fl, h)?,
        mining_fit: FitReport::new(&fm)?,
        lifestyle_fit: FitReport::new(&fl)?,
    };
    ctx.run.write_rows(
        "fans/factor_fans.csv",
        &["h", "mining_mean", "mining_sd", "mining_x95", "lifestyle_mean", "lifestyle_sd", "lifestyle_x95"],
        (1..=h).map(|k| {
            vec![
                k.to_string(),
                f6(rec.mining.mean_path[k - 1]),
                f6(rec.mining.sd(k)),
                f6(rec.mining.x95(k)),
                f6(rec.lifestyle.mean_path[k - 1]),
                f6(rec.lifestyle.sd(k)),
                f6(rec.lifestyle.x95(k)),
            ]
        }),
    )?;
    ctx.run.write_rows(
        "fans/summary.csv",
        &["factor", "spec", "horizon", "sd", "x95"],
        [("mining", &fm, &rec.mining), ("lifestyle", &fl, &rec.lifestyle)].map(|(n, f, fan)| {
            vec![n.to_string(), f.spec.label(), h.to_string(), f6(fan.sd(h)), f6(fan.x95(h))]
        }),
    )?;
    ctx.run.write_json("fans/fans.json", &rec)
}

pub fn decomposition(ctx: &mut Ctx) -> CliResult<()> {
    let fs = ctx.factor_set()?;
    let coarse = ctx.panel("coarse_panel")?;
    let rec: LoadingsRecord = ctx.run.read_json("fit/loadings.json", "fit")?;
    let mut rows = Vec::new();
    for l in &rec.loadings {
        let mu = coarse.series_by_id(&l.region_id)?;
        let d = decompose(&mu, &fs, l)?;
        ctx.run.write_csv_with(&format!("decompose/{}.csv", slug(&l.region_id)), |p| d.write_csv(p))?;
        rows.push(vec![
            l.region_id.clone(),
            f6(d.mining_share()),
            f6(sample_sd(&d.remainder)),
            f6(*d.remainder.last().unwrap_or(&f64::NAN)),
        ]);
    }
    ctx.run.write_rows(
        "decompose/summary.csv",
        &["region", "mining_share", "remainder_sd", "remainder_last"],
        rows,
    )
}

pub fn scenario(ctx: &mut Ctx) -> CliResult<()> {
    let cfg = ctx.cfg;
    let h = cfg.horizon;
    let rec: LoadingsRecord = match cfg.scenario.loadings {
        LoadingChoice::FullSample => ctx.run.read_json("fit/loadings.json", "fit")?,
        LoadingChoice::Median => ctx.run.read_json::<WindowsRecord>("windows/windows.json", "windows")?.median,
    };
    let fans: FansRecord = ctx.run.read_json("fans/fans.json", "fans")?;
    let fs = ctx.factor_set()?;
    if rec.horizon < h || fans.mining.horizon < h {
        return Err(CliError::Config(format!("upstream fans stop before horizon {h}")));
    }
    let t_m = match national_doubling_time(&fs.market) {
        Ok(t) => Some(t),
        Err(e) => {
            ctx.warn(format!("no national doubling time: {e}"));
            None
        }
    };
    let mut bands = Vec::new();
    for &f_m in &cfg.scenario.f_m {
        for (l, var) in rec.loadings.iter().zip(&rec.remainder_var) {
            let s = HorizonSigmas {
                mining: fans.mining.sd(h),
                lifestyle: fans.lifestyle.sd(h),
                idiosyncratic: var[h - 1].sqrt(),
            };
            bands.push(uncertainty_band(l, f_m, t_m, &s)?);
        }
    }
    let n = rec.loadings.len();
    ctx.run
        .write_csv_with("scenario/regions.csv", |p| write_scenario_table(p, &rec.loadings, &bands[..n]))?;
    ctx.run.write_csv_with("scenario/bands.csv", |p| write_band_table(p, &bands[..n]))?;
    ctx.run.write_rows(
        "scenario/bands_all.csv",
        &[
            "f_m", "region", "f_r", "lo", "hi", "x95_factors", "x95_total", "share_mining", "share_lifestyle",
            "share_idio", "doubling_time",
        ],
        bands.iter().map(|b| {
            vec![
                f6(b.f_m),
                b.region_id.clone(),
                f6(b.f_r),
                f6(b.lo()),
                f6(b.hi()),
                f6(b.x95_factors),
                f6(b.x95_total),
                f6(b.var_shares[0]),
                f6(b.var_shares[1]),
                f6(b.var_shares[2]),
                opt6(b.doubling_time_years),
            ]
        }),
    )?;
    ctx.run.write_json(
        "scenario/scenario.json",
        &ScenarioRecord {
            t_m_years: t_m,
            horizon: h,
            loadings: cfg.scenario.loadings,
            bands,
        },
    )
}

pub fn breaks(ctx: &mut Ctx) -> CliResult<()> {
    let cfg = ctx.cfg;
    let b = &cfg.breaks;
    let fs = ctx.factor_set()?;
    let sel = ctx.selection()?;
    let origin = fs.months[0];
    let (i0, i1) = (b.from.months_since(origin), b.to.months_since(origin));
    if i0 < 0 || i1 < i0 || i1 as usize >= fs.len() {
        return Err(CliError::Config(format!("breaks window {}..{} outside the factor sample", b.from, b.to)));
    }
    let (i0, i1) = (i0 as usize, i1 as usize);
    let (series, spec) = match b.series {
        FactorName::Mining => (&fs.mining, sel.factors.mining),
        FactorName::Lifestyle => (&fs.lifestyle, sel.factors.lifestyle),
        FactorName::Market => {
            let s = select_order(&fs.market[i0..=i1], &[], &cfg.factor_grid.grid(), &cfg.rules.rules(), ctx.exec)?;
            (&fs.market, s.selected)
        }
    };
    let y = &series[i0..=i1];
    let regimes = binary_segmentation(y, b.n_bkps, b.cost, b.min_size)?;
    let slopes = regime_slopes(y, &regimes);
    let adf = adf_by_regime(y, &regimes, b.adf_max_lags)?;
    let fan = match regime_adjusted_fan(y, &regimes, &spec, cfg.horizon, &FitOptions::default()) {
        Ok(f) => Some(f),
        Err(e) => {
            ctx.warn(format!("regime-adjusted fan failed: {e}"));
            None
        }
    };
    let months = &fs.months[i0..=i1];
    let report = BreakReport {
        breakpoints: regimes.breakpoints.iter().map(|&k| months[k].to_string()).collect(),
        breakpoint_index: regimes.breakpoints.clone(),
        slopes,
        adf,
        fan,
    };
    let segs = regimes.segments();
    ctx.run.write_rows(
        "breaks/regimes.csv",
        &["regime", "start", "end", "slope_per_year"],
        segs.iter().zip(&report.slopes).enumerate().map(|(i, (&(a, e), s))| {
            vec![
                (i + 1).to_string(),
                months[a].to_string(),
                months[e - 1].to_string(),
                f6(s * 12.0),
            ]
        }),
    )?;
    ctx.run.write_rows(
        "breaks/adf.csv",
        &["sample", "start", "end", "statistic", "p_value", "lags", "n_obs", "note"],
        report.adf.iter().map(|a| {
            vec![
                a.label.clone(),
                months[a.start.min(months.len() - 1)].to_string(),
                months[a.end - 1].to_string(),
                opt6(a.result.as_ref().map(|r| r.statistic)),
                opt6(a.result.as_ref().map(|r| r.p_value)),
                a.result.as_ref().map(|r| r.lags.to_string()).unwrap_or_default(),
                a.result.as_ref().map(|r| r.n_obs.to_string()).unwrap_or_default(),
                a.note.clone().unwrap_or_default(),
            ]
        }),
    )?;
    if let Some(f) = &report.fan {
        ctx.run.write_rows(
            "breaks/fan.csv",
            &["horizon", "sd_unconditional", "sd_adjusted", "sd_ratio", "x95_unconditional", "x95_adjusted", "aicc_unconditional", "aicc_adjusted"],
            [vec![
                f.horizon.to_string(),
                f6(f.sd_unconditional),
                f6(f.sd_adjusted),
                f6(f.sd_ratio()),
                f6(f.x95_unconditional),
                f6(f.x95_adjusted),
                f6(f.aicc_unconditional),
                f6(f.aicc_adjusted),
            ]],
        )?;
    }
    ctx.run.write_json("breaks/report.json", &report)
}
