//! Transaction and geography ingestion, repeat-sale pairing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Month, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub property_id: String,
    pub price: f64,
    pub date: Month,
    pub region_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSalePair {
    pub property_id: String,
    /// Month index of the earlier sale, relative to the panel origin.
    pub t1: usize,
    pub t2: usize,
    pub dlog_price: f64,
    pub region_id: String,
}

/// Column names of the transactions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub property_id: String,
    pub price: String,
    pub date: String,
    pub region_id: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            property_id: "property_id".into(),
            price: "price".into(),
            date: "date".into(),
            region_id: "region_id".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub schema: CsvSchema,
    /// Inclusive sample window; rows outside are rejected.
    pub window: Option<(Month, Month)>,
    /// Maximum tolerated fraction of rejected rows.
    pub reject_tolerance: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            schema: CsvSchema::default(),
            window: None,
            reject_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub records: Vec<TransactionRecord>,
    pub rejected: Vec<RejectedRow>,
    pub total_rows: usize,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::invalid(format!("{}: missing column {name:?}", path.display())))
}

/// Read and validate a transactions CSV.
///
/// Rows with unparseable fields, nonpositive prices or dates outside the
/// window are rejected with a reason. A region id absent from `graph` is a
/// hard error.
pub fn load_transactions(
    path: &Path,
    opts: &LoadOptions,
    graph: Option<&RegionGraph>,
) -> Result<LoadReport> {
    let mut rdr = csv_reader(path)?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let s = &opts.schema;
    let (ip, ipr, id, ir) = (
        column(&headers, &s.property_id, path)?,
        column(&headers, &s.price, path)?,
        column(&headers, &s.date, path)?,
        column(&headers, &s.region_id, path)?,
    );

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut total = 0;
    for (i, row) in rdr.records().enumerate() {
        total += 1;
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow {
                    row: row_no,
                    reason: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        match parse_row(&row, (ip, ipr, id, ir), opts.window) {
            Ok(rec) => {
                if let Some(g) = graph {
                    if g.index_of(&rec.region_id).is_none() {
                        return Err(Error::UnknownRegion(rec.region_id));
                    }
                }
                records.push(rec);
            }
            Err(reason) => rejected.push(RejectedRow {
                row: row_no,
                reason,
            }),
        }
    }
    if total > 0 && rejected.len() as f64 > opts.reject_tolerance * total as f64 {
        return Err(Error::TooManyRejects {
            rejected: rejected.len(),
            total,
            tolerance: opts.reject_tolerance,
        });
    }
    if !rejected.is_empty() {
        log::warn!(
            "{}: rejected {} of {} rows",
            path.display(),
            rejected.len(),
            total
        );
    }
    Ok(LoadReport {
        records,
        rejected,
        total_rows: total,
    })
}

fn parse_row(
    row: &csv::StringRecord,
    (ip, ipr, id, ir): (usize, usize, usize, usize),
    window: Option<(Month, Month)>,
) -> std::result::Result<TransactionRecord, String> {
    let field = |i: usize, name: &str| {
        row.get(i)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| format!("missing {name}"))
    };
    let property_id = field(ip, "property_id")?.to_string();
    let price: f64 = field(ipr, "price")?
        .parse()
        .map_err(|_| "unparseable price".to_string())?;
    if !price.is_finite() {
        return Err("unparseable price".into());
    }
    if price <= 0.0 {
        return Err("nonpositive price".into());
    }
    let date: Month = field(id, "date")?
        .parse()
        .map_err(|_| "unparseable date".to_string())?;
    if let Some((lo, hi)) = window {
        if date < lo || date > hi {
            return Err("date outside sample window".into());
        }
    }
    let region_id = field(ir, "region_id")?.to_string();
    Ok(TransactionRecord {
        property_id,
        price,
        date,
        region_id,
    })
}

pub fn write_transactions(path: &Path, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(["property_id", "price", "date", "region_id"])
        .map_err(err)?;
    for r in records {
        w.write_record([
            r.property_id.as_str(),
            &r.price.to_string(),
            &r.date.to_string(),
            r.region_id.as_str(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

/// Write a header and string rows as CSV.
pub(crate) fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv_writer(path)?;
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Options for [`pair_repeat_sales`].
#[derive(Debug, Clone, Copy)]
pub struct PairOptions {
    /// Month with index 0.
    pub origin: Month,
    /// Panel length in months; sales at or beyond are dropped.
    pub months: usize,
    /// Drop pairs with `|dlog_price|` above this bound.
    pub max_abs_dlog: Option<f64>,
}

impl PairOptions {
    pub fn new(origin: Month, months: usize) -> Self {
        PairOptions {
            origin,
            months,
            max_abs_dlog: Some(10f64.ln()),
        }
    }
}

/// Consecutive repeat-sale pairs per property.
///
/// Sales of a property are sorted by (date, price); each adjacent pair with
/// distinct months yields one pair. The pair takes the region of the later
/// sale. Output is sorted by (property_id, t1, t2), so it does not depend on
/// input order.
pub fn pair_repeat_sales(records: &[TransactionRecord], opts: &PairOptions) -> Vec<RepeatSalePair> {
    let mut by_property: BTreeMap<&str, Vec<&TransactionRecord>> = BTreeMap::new();
    for r in records {
        by_property.entry(r.property_id.as_str()).or_default().push(r);
    }
    let mut pairs = Vec::new();
    for (pid, mut sales) in by_property {
        sales.sort_by(|a, b| {
            a.date
                .cmp(&b.date)
                .then(a.price.total_cmp(&b.price))
                .then(a.region_id.cmp(&b.region_id))
        });
        for w in sales.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.date == b.date {
                continue;
            }
            let t1 = a.date.months_since(opts.origin);
            let t2 = b.date.months_since(opts.origin);
            if t1 < 0 || t2 as usize >= opts.months {
                continue;
            }
            let dlog = b.price.ln() - a.price.ln();
            if !dlog.is_finite() {
                continue;
            }
            if let Some(m) = opts.max_abs_dlog {
                if dlog.abs() > m {
                    continue;
                }
            }
            pairs.push(RepeatSalePair {
                property_id: pid.to_string(),
                t1: t1 as usize,
                t2: t2 as usize,
                dlog_price: dlog,
                region_id: b.region_id.clone(),
            });
        }
    }
    pairs
}

/// Fine-region adjacency graph with its coarse hierarchy and sales weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGraph {
    pub nodes: Vec<String>,
    /// Undirected edges as node-index pairs with `a < b`.
    pub edges: Vec<(usize, usize)>,
    /// Coarse region of each node.
    pub coarse: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl RegionGraph {
    /// Build and validate a graph. Edges are given by node id.
    pub fn new(
        nodes: Vec<String>,
        coarse: Vec<String>,
        weights: Vec<f64>,
        edges: &[(String, String)],
    ) -> Result<Self> {
        if nodes.len() != coarse.len() || nodes.len() != weights.len() {
            return Err(Error::Dimension("nodes, coarse map and weights differ in length".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate node {n:?}")));
            }
        }
        for (n, c) in nodes.iter().zip(&coarse) {
            if c.is_empty() {
                return Err(Error::invalid(format!("region {n:?} has no coarse mapping")));
            }
        }
        for (n, w) in nodes.iter().zip(&weights) {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(format!("region {n:?} has negative weight {w}")));
            }
        }
        let mut seen = HashSet::new();
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::invalid(format!("edge endpoint {a:?} not in node list")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::invalid(format!("edge endpoint {b:?} not in node list")))?;
            if ia == ib {
                return Err(Error::invalid(format!("self-loop on {a:?}")));
            }
            let e = (ia.min(ib), ia.max(ib));
            if !seen.insert(e) {
                return Err(Error::invalid(format!("duplicate edge {a:?}-{b:?}")));
            }
            idx_edges.push(e);
        }
        let g = RegionGraph {
            nodes,
            edges: idx_edges,
            coarse,
            weights,
            index,
        };
        for c in g.coarse_ids() {
            let total: f64 = g.members(&c).iter().map(|&i| g.weights[i]).sum();
            if total <= 0.0 {
                return Err(Error::invalid(format!("coarse region {c:?} has zero total weight")));
            }
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    /// Coarse ids in order of first appearance in the node list.
    pub fn coarse_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.coarse
            .iter()
            .filter(|c| seen.insert(c.as_str()))
            .cloned()
            .collect()
    }

    pub fn members(&self, coarse: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.coarse[i] == coarse).collect()
    }

    /// Subgraph induced by `members` (kept in the given order).
    pub fn induced(&self, members: &[usize]) -> Result<RegionGraph> {
        let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let edges: Vec<(String, String)> = self
            .edges
            .iter()
            .filter(|(a, b)| pos.contains_key(a) && pos.contains_key(b))
            .map(|&(a, b)| (self.nodes[a].clone(), self.nodes[b].clone()))
            .collect();
        RegionGraph::new(
            members.iter().map(|&i| self.nodes[i].clone()).collect(),
            members.iter().map(|&i| self.coarse[i].clone()).collect(),
            members.iter().map(|&i| self.weights[i]).collect(),
            &edges,
        )
    }
}

/// Load `nodes.csv` (`region_id,coarse_id,weight`) and `edges.csv`
/// (`region_a,region_b`) from a directory.
pub fn load_geography(dir: &Path) -> Result<RegionGraph> {
    let nodes_path = dir.join("nodes.csv");
    let edges_path = dir.join("edges.csv");

    let mut rdr = csv_reader(&nodes_path)?;
    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| Error::Csv { path: p, source }
    };
    let h = rdr.headers().map_err(csv_err(&nodes_path))?.clone();
    let (ir, ic, iw) = (
        column(&h, "region_id", &nodes_path)?,
        column(&h, "coarse_id", &nodes_path)?,
        column(&h, "weight", &nodes_path)?,
    );
    let (mut nodes, mut coarse, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for row in rdr.records() {
        let row = row.map_err(csv_err(&nodes_path))?;
        let get = |i| row.get(i).unwrap_or("").to_string();
        nodes.push(get(ir));
        coarse.push(get(ic));
        let w = get(iw);
        weights.push(
            w.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad weight {w:?} for {}", get(ir))))?,
        );
    }

    let mut rdr = csv_reader(&edges_path)?;
    let h = rdr.headers().map_err(csv_err(&edges_path))?.clone();
    let (ia, ib) = (
        column(&h, "region_a", &edges_path)?,
        column(&h, "region_b", &edges_path)?,
    );
    let mut edges = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(&edges_path))?;
        edges.push((
            row.get(ia).unwrap_or("").to_string(),
            row.get(ib).unwrap_or("").to_string(),
        ));
    }
    RegionGraph::new(nodes, coarse, weights, &edges)
}

pub fn write_geography(dir: &Path, g: &RegionGraph) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let p = dir.join("nodes.csv");
    let mut w = csv_writer(&p)?;
    let err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| Error::Csv { path: p, source }
    };
    w.write_record(["region_id", "coarse_id", "weight"])
        .map_err(err(&p))?;
    for i in 0..g.len() {
        w.write_record([g.nodes[i].as_str(), &g.coarse[i], &g.weights[i].to_string()])
            .map_err(err(&p))?;
    }
    w.flush().map_err(|source| Error::Io { path: p.clone(), source })?;

    let p = dir.join("edges.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["region_a", "region_b"]).map_err(err(&p))?;
    for &(a, b) in &g.edges {
        w.write_record([g.nodes[a].as_str(), &g.nodes[b]])
            .map_err(err(&p))?;
    }
    w.flush().map_err(|source| Error::Io { path: p.clone(), source })
}
