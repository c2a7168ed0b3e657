use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::estimate::{estimate_indexes, RsConfig, RsFit};
use crate::exec::Exec;
use crate::ingest::{csv_writer, RegionGraph, RepeatSalePair};
use crate::{Error, Month, Result};

/// Months × regions matrix of log index levels.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPanel {
    pub months: Vec<Month>,
    pub regions: Vec<String>,
    /// `values[(t, r)]`
    pub values: DMatrix<f64>,
    pub base_month: usize,
}

impl IndexPanel {
    pub fn new(
        months: Vec<Month>,
        regions: Vec<String>,
        values: DMatrix<f64>,
        base_month: usize,
    ) -> Result<Self> {
        if values.nrows() != months.len() || values.ncols() != regions.len() {
            return Err(Error::Dimension(format!(
                "values {}x{} vs {} months, {} regions",
                values.nrows(),
                values.ncols(),
                months.len(),
                regions.len()
            )));
        }
        if base_month >= months.len() {
            return Err(Error::OutOfRange("base month outside panel".into()));
        }
        Ok(IndexPanel {
            months,
            regions,
            values,
            base_month,
        })
    }

    pub fn n_months(&self) -> usize {
        self.months.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn column_of(&self, region: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == region)
    }

    pub fn series(&self, r: usize) -> Vec<f64> {
        self.values.column(r).iter().copied().collect()
    }

    pub fn series_by_id(&self, region: &str) -> Result<Vec<f64>> {
        self.column_of(region)
            .map(|c| self.series(c))
            .ok_or_else(|| Error::UnknownRegion(region.to_string()))
    }

    /// Shift every series so it is zero at `base`.
    pub fn rebased(&self, base: usize) -> IndexPanel {
        let mut v = self.values.clone();
        for mut col in v.column_iter_mut() {
            let b = col[base];
            col.iter_mut().for_each(|x| *x -= b);
        }
        IndexPanel {
            months: self.months.clone(),
            regions: self.regions.clone(),
            values: v,
            base_month: base,
        }
    }

    pub fn scaled(&self, a: f64) -> IndexPanel {
        IndexPanel {
            values: &self.values * a,
            ..self.clone()
        }
    }

    /// Tidy CSV `month,region_id,log_index`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        w.write_record(["month", "region_id", "log_index"])
            .map_err(err)?;
        for (t, m) in self.months.iter().enumerate() {
            for (r, id) in self.regions.iter().enumerate() {
                w.write_record([m.to_string().as_str(), id, &self.values[(t, r)].to_string()])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Read a tidy panel CSV. Month and region order follow first appearance.
    pub fn read_csv(path: &Path, base_month: Month) -> Result<IndexPanel> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
        let mut months: Vec<Month> = Vec::new();
        let mut regions: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for row in rdr.records() {
            let row = row.map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let m: Month = row.get(0).unwrap_or("").parse()?;
            let id = row.get(1).unwrap_or("").to_string();
            let v: f64 = row
                .get(2)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::invalid(format!("bad log_index in {}", path.display())))?;
            let t = months.iter().position(|x| *x == m).unwrap_or_else(|| {
                months.push(m);
                months.len() - 1
            });
            let r = regions.iter().position(|x| *x == id).unwrap_or_else(|| {
                regions.push(id);
                regions.len() - 1
            });
            cells.insert((t, r), v);
        }
        if cells.len() != months.len() * regions.len() {
            return Err(Error::invalid(format!("{}: panel has missing cells", path.display())));
        }
        let values = DMatrix::from_fn(months.len(), regions.len(), |t, r| cells[&(t, r)]);
        let base = months
            .iter()
            .position(|m| *m == base_month)
            .ok_or_else(|| Error::invalid(format!("base month {base_month} not in panel")))?;
        IndexPanel::new(months, regions, values, base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateLevel {
    Coarse,
    National,
}

pub const NATIONAL_ID: &str = "national";

/// Weighted aggregation of a fine panel.
///
/// The panel's regions must all be graph nodes. Coarse output columns follow
/// the graph's coarse-id order.
pub fn aggregate(panel: &IndexPanel, graph: &RegionGraph, level: AggregateLevel) -> Result<IndexPanel> {
    let mut groups: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    let cols: Vec<usize> = panel
        .regions
        .iter()
        .map(|id| {
            graph
                .index_of(id)
                .ok_or_else(|| Error::UnknownRegion(id.clone()))
        })
        .collect::<Result<_>>()?;
    match level {
        AggregateLevel::National => {
            groups.push((
                NATIONAL_ID.to_string(),
                cols.iter().enumerate().map(|(c, &g)| (c, graph.weights[g])).collect(),
            ));
        }
        AggregateLevel::Coarse => {
            for cid in graph.coarse_ids() {
                let members: Vec<(usize, f64)> = cols
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| graph.coarse[g] == cid)
                    .map(|(c, &g)| (c, graph.weights[g]))
                    .collect();
                if !members.is_empty() {
                    groups.push((cid, members));
                }
            }
        }
    }
    let t = panel.n_months();
    let mut values = DMatrix::zeros(t, groups.len());
    for (k, (id, members)) in groups.iter().enumerate() {
        let total: f64 = members.iter().map(|m| m.1).sum();
        if total <= 0.0 {
            return Err(Error::Degenerate(format!("zero total weight in {id}")));
        }
        for &(c, w) in members {
            for i in 0..t {
                values[(i, k)] += w / total * panel.values[(i, c)];
            }
        }
    }
    IndexPanel::new(
        panel.months.clone(),
        groups.into_iter().map(|g| g.0).collect(),
        values,
        panel.base_month,
    )
}

/// Per-area summary of an estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaReport {
    pub coarse_id: String,
    pub n_pairs: usize,
    pub iterations: usize,
    pub rel_residual: f64,
    pub sigma2: f64,
    pub theta: f64,
    pub empty_months: Vec<usize>,
    pub empty_regions: Vec<String>,
}

/// Estimate every coarse area independently and assemble the fine panel in
/// graph node order.
pub fn estimate_panel(
    pairs: &[RepeatSalePair],
    graph: &RegionGraph,
    origin: Month,
    months: usize,
    cfg: &RsConfig,
    exec: Exec,
) -> Result<(IndexPanel, Vec<AreaReport>)> {
    let areas = graph.coarse_ids();
    let mut by_area: BTreeMap<&str, Vec<RepeatSalePair>> = BTreeMap::new();
    for p in pairs {
        let i = graph
            .index_of(&p.region_id)
            .ok_or_else(|| Error::UnknownRegion(p.region_id.clone()))?;
        by_area.entry(graph.coarse[i].as_str()).or_default().push(p.clone());
    }
    let tasks: Vec<(String, Vec<usize>, Vec<RepeatSalePair>)> = areas
        .iter()
        .map(|a| {
            (
                a.clone(),
                graph.members(a),
                by_area.remove(a.as_str()).unwrap_or_default(),
            )
        })
        .collect();
    let results: Vec<Result<(String, Vec<usize>, RsFit, Vec<String>)>> =
        exec.map(tasks, |(area, members, area_pairs)| {
            let sub = graph.induced(&members)?;
            let fit = estimate_indexes(&area_pairs, &sub, months, cfg)
                .map_err(|e| Error::invalid(format!("area {area}: {e}")))?;
            let empty = fit.empty_regions.iter().map(|&r| sub.nodes[r].clone()).collect();
            Ok((area, members, fit, empty))
        });
    let mut values = DMatrix::zeros(months, graph.len());
    let mut reports = Vec::with_capacity(results.len());
    for res in results {
        let (area, members, fit, empty_regions) = res?;
        for (k, &g) in members.iter().enumerate() {
            for (t, v) in fit.region_index(k).into_iter().enumerate() {
                values[(t, g)] = v;
            }
        }
        reports.push(AreaReport {
            coarse_id: area,
            n_pairs: fit.n_pairs,
            iterations: fit.iterations,
            rel_residual: fit.rel_residual,
            sigma2: fit.sigma2,
            theta: fit.theta,
            empty_months: fit.empty_months,
            empty_regions,
        });
    }
    let panel = IndexPanel::new(origin.range(months), graph.nodes.clone(), values, cfg.base_month)?;
    Ok((panel, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> RegionGraph {
        RegionGraph::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["X".into(), "X".into(), "Y".into()],
            vec![1.0, 3.0, 2.0],
            &[("a".into(), "b".into())],
        )
        .unwrap()
    }

    fn panel(values: DMatrix<f64>) -> IndexPanel {
        let m0 = Month::new(2000, 1).unwrap();
        IndexPanel::new(
            m0.range(values.nrows()),
            vec!["a".into(), "b".into(), "c".into()],
            values,
            0,
        )
        .unwrap()
    }

    #[test]
    fn identical_series_aggregate_to_themselves() {
        let s = [0.0, 0.1, 0.3];
        let p = panel(DMatrix::from_fn(3, 3, |t, _| s[t]));
        let agg = aggregate(&p, &graph(), AggregateLevel::National).unwrap();
        for t in 0..3 {
            assert!((agg.values[(t, 0)] - s[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_zero_member_ignored() {
        let g = RegionGraph::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["X".into(), "X".into(), "Y".into()],
            vec![1.0, 0.0, 2.0],
            &[],
        )
        .unwrap();
        let p = panel(DMatrix::from_fn(4, 3, |t, r| (t * (r + 1)) as f64));
        let agg = aggregate(&p, &g, AggregateLevel::Coarse).unwrap();
        assert_eq!(agg.regions, vec!["X", "Y"]);
        for t in 0..4 {
            assert_eq!(agg.values[(t, 0)], p.values[(t, 0)]);
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = panel(DMatrix::from_fn(4, 3, |t, r| 0.1 * t as f64 - 0.37 * r as f64));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        p.write_csv(&path).unwrap();
        let q = IndexPanel::read_csv(&path, p.months[0]).unwrap();
        assert_eq!(p, q);
    }
}
