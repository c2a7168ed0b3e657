use nalgebra::DMatrix;

use crate::ingest::RegionGraph;
use crate::{Error, Result};

/// Compressed sparse row matrix, square.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets; duplicates are summed, zeros dropped.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut rows: Vec<usize> = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] != 0.0).collect();
        let rows: Vec<usize> = keep.iter().map(|&k| rows[k]).collect();
        let cols: Vec<usize> = keep.iter().map(|&k| cols[k]).collect();
        let vals: Vec<f64> = keep.iter().map(|&k| vals[k]).collect();
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    /// `out += scale * self * x`
    pub fn mul_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let s: f64 = self.row(i).map(|(j, v)| v * x[j]).sum();
            *o += scale * s;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).find(|&(j, _)| j == i).map_or(0.0, |(_, v)| v))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Csr) -> Csr {
        let mut trip = Vec::with_capacity(self.vals.len() * other.vals.len());
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                for k in 0..other.n {
                    for (l, b) in other.row(k) {
                        trip.push((i * other.n + k, j * other.n + l, a * b));
                    }
                }
            }
        }
        Csr::from_triplets(self.n * other.n, trip)
    }
}

/// Temporal, spatial and spatio-temporal graph Laplacians.
#[derive(Debug, Clone)]
pub struct LaplacianSet {
    /// Path-graph Laplacian over months.
    pub temporal: Csr,
    /// `Δ − W` over fine regions.
    pub spatial: Csr,
    /// `spatial ⊗ temporal`, indexed region-major (`r * T + t`).
    pub spatio_temporal: Csr,
}

pub fn temporal_laplacian(months: usize) -> Csr {
    let mut trip = Vec::with_capacity(4 * months);
    for t in 0..months.saturating_sub(1) {
        trip.push((t, t, 1.0));
        trip.push((t + 1, t + 1, 1.0));
        trip.push((t, t + 1, -1.0));
        trip.push((t + 1, t, -1.0));
    }
    Csr::from_triplets(months, trip)
}

pub fn spatial_laplacian(graph: &RegionGraph) -> Csr {
    let mut trip = Vec::with_capacity(4 * graph.edges.len());
    for &(a, b) in &graph.edges {
        trip.push((a, a, 1.0));
        trip.push((b, b, 1.0));
        trip.push((a, b, -1.0));
        trip.push((b, a, -1.0));
    }
    Csr::from_triplets(graph.len(), trip)
}

pub fn build_laplacians(graph: &RegionGraph, months: usize) -> Result<LaplacianSet> {
    if months < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: months,
        });
    }
    let temporal = temporal_laplacian(months);
    let spatial = spatial_laplacian(graph);
    let spatio_temporal = spatial.kron(&temporal);
    Ok(LaplacianSet {
        temporal,
        spatial,
        spatio_temporal,
    })
}
