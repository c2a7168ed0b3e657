//! Pipeline configuration: one JSON file, every field defaulted, with
//! `key.path=value` overrides from the command line.

use std::path::PathBuf;

use hpfactor::breaks::SegmentCost;
use hpfactor::synth::WorldConfig;
use hpfactor::tskit::{SelectionGrid, SelectionRules};
use hpfactor::Month;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

fn month(y: i32, m: u32) -> Month {
    Month::new(y, m).expect("valid month")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsSection {
    pub lambda_mu: f64,
    pub lambda_alpha: f64,
    pub tolerance: f64,
}

impl Default for RsSection {
    fn default() -> Self {
        let d = hpfactor::rsindex::RsConfig::default();
        RsSection {
            lambda_mu: d.lambda_mu,
            lambda_alpha: d.lambda_alpha,
            tolerance: d.tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorSection {
    pub mining_long: String,
    pub mining_short: String,
    /// Empty lists fall back to the synthetic world's baskets, then to PC3 ranking.
    pub lifestyle_top: Vec<String>,
    pub lifestyle_bottom: Vec<String>,
    pub basket_size: usize,
}

impl Default for FactorSection {
    fn default() -> Self {
        FactorSection {
            mining_long: "Perth".into(),
            mining_short: "Sydney".into(),
            lifestyle_top: vec![],
            lifestyle_bottom: vec![],
            basket_size: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub q: Vec<usize>,
    pub seasonal_q: Vec<usize>,
}

impl GridSection {
    pub fn grid(&self) -> SelectionGrid {
        SelectionGrid {
            p: self.p.clone(),
            d: self.d.clone(),
            q: self.q.clone(),
            seasonal_q: self.seasonal_q.clone(),
            intercept: true,
        }
    }

    fn factor_default() -> Self {
        GridSection {
            p: vec![0, 1, 2, 3],
            d: vec![0, 1],
            q: vec![0, 1, 2],
            seasonal_q: vec![0],
        }
    }

    fn region_default() -> Self {
        GridSection {
            seasonal_q: vec![0, 1],
            ..Self::factor_default()
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self::factor_default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesSection {
    pub parsimony_delta: Option<f64>,
    pub d1_margin: Option<f64>,
}

impl Default for RulesSection {
    fn default() -> Self {
        let r = SelectionRules::default();
        RulesSection {
            parsimony_delta: r.parsimony_delta,
            d1_margin: r.d1_margin,
        }
    }
}

impl RulesSection {
    pub fn rules(&self) -> SelectionRules {
        SelectionRules {
            parsimony_delta: self.parsimony_delta,
            d1_margin: self.d1_margin,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub first_end: Month,
    pub last_end: Month,
    pub step: usize,
    pub median_from: Month,
    pub median_to: Month,
}

impl Default for WindowSection {
    fn default() -> Self {
        WindowSection {
            first_end: month(2008, 1),
            last_end: month(2024, 12),
            step: 3,
            median_from: month(2008, 1),
            median_to: month(2024, 12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingChoice {
    FullSample,
    Median,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub f_m: Vec<f64>,
    pub loadings: LoadingChoice,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            f_m: vec![2.0],
            loadings: LoadingChoice::FullSample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorName {
    Market,
    Mining,
    Lifestyle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreakSection {
    pub series: FactorName,
    pub from: Month,
    pub to: Month,
    pub n_bkps: usize,
    pub min_size: usize,
    pub cost: SegmentCost,
    pub adf_max_lags: Option<usize>,
}

impl Default for BreakSection {
    fn default() -> Self {
        BreakSection {
            series: FactorName::Mining,
            from: month(2000, 1),
            to: month(2020, 12),
            n_bkps: 3,
            min_size: hpfactor::breaks::DEFAULT_MIN_SIZE,
            cost: SegmentCost::LinearTrend,
            adf_max_lags: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub run_id: String,
    /// Defaults to the synthetic world's file inside the run directory.
    pub transactions: Option<PathBuf>,
    pub geography: Option<PathBuf>,
    pub start: Month,
    pub end: Month,
    pub base_month: Month,
    pub reject_tolerance: f64,
    pub rsindex: RsSection,
    pub pca_components: usize,
    pub factors: FactorSection,
    /// Coarse regions to model; empty means every coarse region.
    pub regions: Vec<String>,
    pub factor_grid: GridSection,
    pub region_grid: GridSection,
    pub rules: RulesSection,
    pub windows: WindowSection,
    pub horizon: usize,
    pub scenario: ScenarioSection,
    pub breaks: BreakSection,
    pub synth: WorldConfig,
    pub charts: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: WorldConfig::default().seed,
            out_dir: PathBuf::from("out"),
            run_id: "default".into(),
            transactions: None,
            geography: None,
            start: month(1995, 1),
            end: month(2024, 12),
            base_month: month(1995, 1),
            reject_tolerance: 0.05,
            rsindex: RsSection::default(),
            pca_components: 3,
            factors: FactorSection::default(),
            regions: vec![],
            factor_grid: GridSection::factor_default(),
            region_grid: GridSection::region_default(),
            rules: RulesSection::default(),
            windows: WindowSection::default(),
            horizon: hpfactor::scenario::DEFAULT_HORIZON,
            scenario: ScenarioSection::default(),
            breaks: BreakSection::default(),
            synth: WorldConfig::default(),
            charts: false,
        }
    }
}

/// Config keys, what they mean, and which commands read them.
pub const KEYS: &[(&str, &str, &[&str])] = &[
    ("out_dir", "output root; artifacts go to <out_dir>/<run_id>/", &["*"]),
    ("run_id", "run directory name", &["*"]),
    ("charts", "also write SVG charts derived from the CSVs", &["*"]),
    ("seed", "master seed of the synthetic world", &["synth"]),
    ("synth.*", "synthetic world settings (areas, fine_per_area, intensity, noise_sd, eps, mining, lifestyle, market, ...)", &["synth"]),
    ("transactions", "transactions CSV (default: synth/transactions.csv in the run directory)", &["build-index"]),
    ("geography", "directory with nodes.csv and edges.csv (default: synth/geography)", &["build-index", "factors"]),
    ("start", "first month of the sample window", &["build-index"]),
    ("end", "last month of the sample window", &["build-index"]),
    ("base_month", "month pinned to zero in every index", &["build-index", "pca"]),
    ("reject_tolerance", "maximum share of rejected transaction rows", &["build-index"]),
    ("rsindex.lambda_mu", "temporal smoothing penalty of the area index", &["build-index"]),
    ("rsindex.lambda_alpha", "spatio-temporal penalty of local deviations", &["build-index"]),
    ("rsindex.tolerance", "relative residual tolerance of the solver", &["build-index"]),
    ("pca_components", "number of retained principal components", &["pca"]),
    ("factors.mining_long", "coarse region on the long side of the mining spread", &["pca", "factors"]),
    ("factors.mining_short", "coarse region on the short side of the mining spread", &["factors"]),
    ("factors.lifestyle_top", "fine regions in the top lifestyle basket", &["pca", "factors"]),
    ("factors.lifestyle_bottom", "fine regions in the bottom lifestyle basket", &["factors"]),
    ("factors.basket_size", "basket size when ranking by PC3 loadings", &["factors"]),
    ("regions", "coarse regions to model (empty: all)", &["select", "fit", "windows", "decompose", "scenario"]),
    ("factor_grid.p", "AR orders searched for the factor spreads", &["select"]),
    ("factor_grid.d", "differencing orders searched for the factor spreads", &["select"]),
    ("factor_grid.q", "MA orders searched for the factor spreads", &["select"]),
    ("factor_grid.seasonal_q", "seasonal MA orders searched for the factor spreads", &["select"]),
    ("region_grid.p", "AR orders searched for regional disturbances", &["select"]),
    ("region_grid.d", "differencing orders searched for regional disturbances", &["select"]),
    ("region_grid.q", "MA orders searched for regional disturbances", &["select"]),
    ("region_grid.seasonal_q", "seasonal MA orders searched for regional disturbances", &["select"]),
    ("rules.parsimony_delta", "AICc distance treated as equivalent (null: plain minimum)", &["select"]),
    ("rules.d1_margin", "AICc gain required to prefer d = 1 (null: no preference)", &["select"]),
    ("horizon", "forecast horizon in months", &["fit", "windows", "fans", "scenario", "breaks"]),
    ("windows.first_end", "first expanding-window endpoint", &["windows"]),
    ("windows.last_end", "last expanding-window endpoint", &["windows"]),
    ("windows.step", "months between endpoints", &["windows"]),
    ("windows.median_from", "first endpoint entering the median loadings", &["windows"]),
    ("windows.median_to", "last endpoint entering the median loadings", &["windows"]),
    ("scenario.f_m", "national growth factors to map", &["scenario"]),
    ("scenario.loadings", "full_sample or median", &["scenario"]),
    ("breaks.series", "factor analysed for breaks: market, mining or lifestyle", &["breaks"]),
    ("breaks.from", "first month of the break analysis window", &["breaks"]),
    ("breaks.to", "last month of the break analysis window", &["breaks"]),
    ("breaks.n_bkps", "number of breakpoints", &["breaks"]),
    ("breaks.min_size", "minimum segment length", &["breaks"]),
    ("breaks.cost", "linear_trend or mean_shift", &["breaks"]),
    ("breaks.adf_max_lags", "ADF lag ceiling (null: 12(n/100)^0.25)", &["breaks"]),
];

/// Help text listing the keys a command consumes.
pub fn keys_help(command: &str) -> String {
    let mut s = String::from("Config keys:\n");
    for (k, desc, cmds) in KEYS {
        if command == "all" || cmds.contains(&"*") || cmds.contains(&command) {
            s.push_str(&format!("  {k:<26} {desc}\n"));
        }
    }
    s
}

impl PipelineConfig {
    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut v = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        // a config.json copied out of a run directory carries its hash
        if let Some(m) = v.as_object_mut() {
            m.remove("config_hash");
        }
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let cfg: PipelineConfig =
            serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.end < self.start {
            return bad("end precedes start".into());
        }
        if self.base_month < self.start || self.base_month > self.end {
            return bad("base_month outside [start, end]".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.scenario.f_m.iter().any(|f| !(*f > 0.0)) {
            return bad("scenario.f_m values must be positive".into());
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return bad(format!("run_id {:?} is not a plain name", self.run_id));
        }
        self.synth.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
        Ok(())
    }

    pub fn months(&self) -> usize {
        (self.end.months_since(self.start) + 1) as usize
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// SHA-256 of the canonical config with output location fields cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.run_id = String::new();
        c.charts = false;
        let v = serde_json::to_value(&c).expect("config serializes");
        let text = serde_json::to_string(&v).expect("value serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `a.b.c=value`; the value is parsed as JSON and kept as a string otherwise.
fn apply_override(root: &mut Value, o: &str) -> Result<(), CliError> {
    let (key, raw) = o
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, p) in parts.iter().enumerate() {
        if !cur.is_object() {
            // fill in defaults so a nested override can land inside them
            *cur = Value::Object(Default::default());
        }
        let map = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(p.to_string(), value);
            return Ok(());
        }
        cur = map.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(CliError::Config(format!("empty override key in {o:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        let d: PipelineConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c.hash(), d.hash());
        assert_eq!(c.months(), 360);
    }

    #[test]
    fn overrides_change_hash_but_not_out_dir() {
        let a = PipelineConfig::load(None, &[]).unwrap();
        let b = PipelineConfig::load(None, &["horizon=60".into()]).unwrap();
        let c = PipelineConfig::load(None, &["run_id=other".into()]).unwrap();
        assert_eq!(b.horizon, 60);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), c.hash());
        let d = PipelineConfig::load(None, &["windows.step=6".into()]).unwrap();
        assert_eq!(d.windows.step, 6);
        assert!(PipelineConfig::load(None, &["nonsense=1".into()]).is_err());
    }
}
