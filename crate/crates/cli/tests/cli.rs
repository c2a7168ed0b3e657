//! End-to-end runs of the `hpfactor` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_hpfactor");

/// A 240-month world with four fine regions per area and narrow grids.
const SMALL: &str = r#"{
  "start": "2000-01",
  "end": "2019-12",
  "base_month": "2000-01",
  "synth": { "start": "2000-01", "months": 240, "fine_per_area": 4, "basket_size": 8 },
  "regions": ["Sydney", "Perth", "Melbourne", "Hobart"],
  "factor_grid": { "p": [1, 2], "d": [0], "q": [0, 1], "seasonal_q": [0] },
  "region_grid": { "p": [1, 2], "d": [0], "q": [0, 1], "seasonal_q": [0] },
  "windows": { "first_end": "2010-01", "last_end": "2019-12", "step": 12,
               "median_from": "2010-01", "median_to": "2019-12" },
  "breaks": { "from": "2004-01", "to": "2019-12", "n_bkps": 2 }
}"#;

fn hp(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_dir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("config.json"), SMALL).unwrap();
    d
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"))
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_lists_consumed_keys() {
    let cases: &[(&str, &[&str])] = &[
        ("synth", &["seed", "synth.*", "out_dir", "run_id"]),
        (
            "build-index",
            &["transactions", "geography", "start", "end", "base_month", "reject_tolerance", "rsindex.lambda_mu", "rsindex.lambda_alpha", "rsindex.tolerance"],
        ),
        ("pca", &["pca_components", "base_month", "factors.mining_long", "factors.lifestyle_top"]),
        ("factors", &["factors.mining_long", "factors.mining_short", "factors.lifestyle_top", "factors.lifestyle_bottom", "factors.basket_size", "geography"]),
        ("select", &["regions", "factor_grid.p", "factor_grid.seasonal_q", "region_grid.q", "region_grid.seasonal_q", "rules.parsimony_delta", "rules.d1_margin"]),
        ("fit", &["regions", "horizon"]),
        ("windows", &["windows.first_end", "windows.last_end", "windows.step", "windows.median_from", "windows.median_to", "horizon"]),
        ("fans", &["horizon"]),
        ("decompose", &["regions"]),
        ("scenario", &["scenario.f_m", "scenario.loadings", "horizon"]),
        ("breaks", &["breaks.series", "breaks.from", "breaks.to", "breaks.n_bkps", "breaks.min_size", "breaks.cost", "breaks.adf_max_lags", "horizon"]),
        ("all", &["seed", "rsindex.lambda_mu", "scenario.f_m", "breaks.cost", "windows.step"]),
    ];
    let d = tempfile::tempdir().unwrap();
    for (cmd, keys) in cases {
        let o = hp(d.path(), &[cmd, "--help"]);
        ok(&o);
        let text = String::from_utf8_lossy(&o.stdout);
        for k in *keys {
            assert!(text.contains(k), "`{cmd} --help` does not mention {k}:\n{text}");
        }
    }
}

#[test]
fn scenario_without_fit_names_missing_artifact() {
    let d = tempfile::tempdir().unwrap();
    let o = hp(d.path(), &["scenario"]);
    assert_eq!(o.status.code(), Some(3));
    let e = error_json(&o);
    assert_eq!(e["error"], "missing_artifact");
    assert!(e["artifact"].as_str().unwrap().ends_with("fit/loadings.json"), "{e}");
    assert_eq!(e["producer"], "fit");
}

#[test]
fn bad_override_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = hp(d.path(), &["--set", "horizon=0", "fans"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "config");
}

#[test]
fn mixed_hash_pipeline_is_rejected() {
    let d = small_dir();
    ok(&hp(d.path(), &["--config", "config.json", "--seed", "1", "synth"]));
    let o = hp(d.path(), &["--config", "config.json", "--seed", "2", "build-index"]);
    assert_eq!(o.status.code(), Some(4));
    let e = error_json(&o);
    assert_eq!(e["error"], "config_hash_mismatch");
    assert!(e["artifact"].as_str().unwrap().contains("synth"), "{e}");
}

#[test]
fn small_pipeline_stamps_every_artifact_and_reruns_identically() {
    let d = small_dir();
    let args = ["--config", "config.json", "--charts"];
    ok(&hp(d.path(), &[&args[..], &["synth"]].concat()));
    ok(&hp(d.path(), &[&args[..], &["all"]].concat()));
    let run = d.path().join("out/default");
    let hash = {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    let listed = files(&run);
    for rel in [
        "index/fine_panel.csv",
        "pca/components.csv",
        "factors/factors.csv",
        "select/factor_models.csv",
        "select/region_models.csv",
        "fit/loadings.csv",
        "windows/paths.csv",
        "windows/paths/perth.csv",
        "fans/summary.csv",
        "decompose/hobart.csv",
        "scenario/regions.csv",
        "scenario/bands.csv",
        "breaks/report.json",
        "scenario/bands.svg",
    ] {
        assert!(listed.contains(&PathBuf::from(rel)), "missing {rel}");
    }
    for rel in &listed {
        let text = fs::read_to_string(run.join(rel)).unwrap();
        match rel.extension().and_then(|e| e.to_str()) {
            Some("csv") => assert!(text.starts_with(&format!("# config_hash={hash}\n")), "{rel:?}"),
            Some("json") => assert!(text.contains(&format!("\"config_hash\": \"{hash}\"")), "{rel:?}"),
            Some("svg") => assert!(text.contains(&format!("config_hash={hash}")), "{rel:?}"),
            _ => panic!("unexpected artifact {rel:?}"),
        }
    }
    let table = fs::read_to_string(run.join("scenario/regions.csv")).unwrap();
    let mut lines = table.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "region,beta,lambda,gamma,f_r_at_2,doubling_time,x95,x95_total");
    assert_eq!(lines.count(), 4);

    // second run over a copy of the first
    let first = d.path().join("first");
    fs::rename(&run, &first).unwrap();
    ok(&hp(d.path(), &[&args[..], &["--threads", "1", "synth"]].concat()));
    ok(&hp(d.path(), &[&args[..], &["--threads", "1", "all"]].concat()));
    assert_eq!(files(&first), files(&run));
    for rel in files(&run) {
        if rel == Path::new("run.json") {
            continue;
        }
        assert!(fs::read(first.join(&rel)).unwrap() == fs::read(run.join(&rel)).unwrap(), "{rel:?} differs");
    }
}

#[test]
fn default_world_yields_fourteen_region_table() {
    let d = tempfile::tempdir().unwrap();
    ok(&hp(d.path(), &["synth"]));
    ok(&hp(d.path(), &["all"]));
    let table = fs::read_to_string(d.path().join("out/default/scenario/regions.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 14);
    for region in ["Perth", "Sydney", "Melbourne", "ACT", "Rest Of WA", "Rest Of Tas."] {
        assert!(rows.iter().any(|r| r.starts_with(&format!("{region},"))), "{region} missing");
    }
}
