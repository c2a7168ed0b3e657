//! Plain SVG charts rendered from the CSV artifacts already on disk and
//! written beside them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::run::RunDir;

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let header = rdr
            .headers()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(Table { header, rows })
    }

    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].parse().unwrap_or(f64::NAN)).collect())
    }

    fn text(&self, name: &str) -> Option<Vec<String>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].clone()).collect())
    }
}

fn bounds<'a>(vals: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn frame(title: &str, hash: &str, y_lo: f64, y_hi: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<!-- config_hash={hash} -->");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="20" font-size="14">{title}</text>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="4" y="{}">{y_hi:.3}</text>"#, PAD + 4.0);
    let _ = writeln!(s, r#"<text x="4" y="{}">{y_lo:.3}</text>"#, H - PAD);
    s
}

fn sx(i: f64, n: f64) -> f64 {
    PAD + (W - 2.0 * PAD) * if n > 1.0 { i / (n - 1.0) } else { 0.5 }
}

fn sy(v: f64, lo: f64, hi: f64) -> f64 {
    H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo)
}

fn line_chart(title: &str, hash: &str, series: &[(String, Vec<f64>)]) -> String {
    let (lo, hi) = bounds(series.iter().flat_map(|(_, v)| v.iter()));
    let mut s = frame(title, hash, lo, hi);
    for (k, (name, v)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let n = v.len() as f64;
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, &y)| format!("{:.1},{:.1}", sx(i as f64, n), sy(y, lo, hi)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            W - PAD - 140.0,
            PAD + 14.0 * (k as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn interval_chart(title: &str, hash: &str, labels: &[String], mid: &[f64], lo: &[f64], hi: &[f64]) -> String {
    let (y_lo, y_hi) = bounds(lo.iter().chain(hi.iter()));
    let mut s = frame(title, hash, y_lo, y_hi);
    let n = labels.len() as f64 + 2.0;
    for (i, label) in labels.iter().enumerate() {
        let x = sx(i as f64 + 1.0, n);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{}" stroke-width="3"/>"#,
            sy(lo[i], y_lo, y_hi),
            sy(hi[i], y_lo, y_hi),
            COLORS[0]
        );
        let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{:.1}" r="3" fill="{}"/>"#, sy(mid[i], y_lo, y_hi), COLORS[1]);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{}" transform="rotate(45 {x:.1} {})">{label}</text>"#,
            H - PAD + 12.0,
            H - PAD + 12.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write_svg(run: &RunDir, rel: &str, body: String) -> CliResult<()> {
    let p = run.path(rel);
    if let Some(d) = p.parent() {
        fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    fs::write(&p, body).map_err(|e| CliError::io(&p, e))
}

fn series(t: &Table, cols: &[&str]) -> Vec<(String, Vec<f64>)> {
    cols.iter()
        .filter_map(|c| t.column(c).map(|v| (c.to_string(), v)))
        .collect()
}

/// Render every chart whose source CSV exists. Returns the files written.
pub fn render(run: &RunDir) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    let mut emit = |rel: String, body: String| -> CliResult<()> {
        write_svg(run, &rel, body)?;
        out.push(rel);
        Ok(())
    };
    if run.exists("factors/factors.csv") {
        let t = Table::read(&run.require_csv("factors/factors.csv", "factors")?)?;
        emit(
            "factors/factors.svg".into(),
            line_chart("Factors (log)", &run.hash, &series(&t, &["market", "mining", "lifestyle"])),
        )?;
    }
    if run.exists("fans/factor_fans.csv") {
        let t = Table::read(&run.require_csv("fans/factor_fans.csv", "fans")?)?;
        emit(
            "fans/factor_fans.svg".into(),
            line_chart("Forecast sd by horizon", &run.hash, &series(&t, &["mining_sd", "lifestyle_sd"])),
        )?;
    }
    if run.exists("scenario/bands_all.csv") {
        let t = Table::read(&run.require_csv("scenario/bands_all.csv", "scenario")?)?;
        let f_m = t.column("f_m").unwrap_or_default();
        let first = f_m.first().copied().unwrap_or(f64::NAN);
        let keep: Vec<usize> = (0..f_m.len()).filter(|&i| f_m[i] == first).collect();
        let pick = |v: Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let labels = t.text("region").unwrap_or_default();
        let labels: Vec<String> = keep.iter().map(|&i| labels[i].clone()).collect();
        emit(
            "scenario/bands.svg".into(),
            interval_chart(
                &format!("Regional growth factor at national {first}"),
                &run.hash,
                &labels,
                &pick(t.column("f_r").unwrap_or_default()),
                &pick(t.column("lo").unwrap_or_default()),
                &pick(t.column("hi").unwrap_or_default()),
            ),
        )?;
    }
    let dir = run.path("decompose");
    if dir.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| n.ends_with(".csv") && n != "summary.csv")
            .collect();
        names.sort();
        for n in names {
            let t = Table::read(&run.require_csv(&format!("decompose/{n}"), "decompose")?)?;
            let stem = n.trim_end_matches(".csv");
            emit(
                format!("decompose/{stem}.svg"),
                line_chart(
                    &format!("Decomposition: {stem}"),
                    &run.hash,
                    &series(&t, &["observed", "market", "market_mining", "market_mining_lifestyle"]),
                ),
            )?;
        }
    }
    Ok(out)
}
