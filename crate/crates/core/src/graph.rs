//! Undirected graphs, the self-loop normalized adjacency, sparse propagation
//! kernels and homophily statistics.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows × nnz threshold above which `spmm` splits rows across the rayon pool.
const PAR_SPMM_WORK: usize = 1 << 15;

/// Immutable undirected graph.
///
/// `edges` holds each undirected edge once, in input order; the CSR
/// adjacency stores both directions with sorted neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Self-loops, out-of-range
    /// indices and duplicates (including `(j, i)` after `(i, j)`) are errors.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut degree = vec![0usize; n];
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoopInInput(i));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::DuplicateEdge(i, j));
            }
            degree[i] += 1;
            degree[j] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for d in &degree {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut fill = row_ptr[..n].to_vec();
        let mut col_idx = vec![0usize; row_ptr[n]];
        for &(i, j) in edges {
            col_idx[fill[i]] = j;
            fill[i] += 1;
            col_idx[fill[j]] = i;
            fill[j] += 1;
        }
        for i in 0..n {
            col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }

        Ok(Self {
            n,
            edges: edges.to_vec(),
            row_ptr,
            col_idx,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Edge density `|E| / (n choose 2)`.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let pairs = self.n as f64 * (self.n as f64 - 1.0) / 2.0;
        self.edges.len() as f64 / pairs
    }
}

/// Parses the plain-text edge-list format: one whitespace-separated `i j`
/// pair per line, 0-based, `#` starts a comment.
pub fn parse_edge_list(text: &str, source: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            let tok = tok.ok_or_else(|| Error::Parse {
                path: source.to_string(),
                line: lineno + 1,
                msg: "expected two node indices".into(),
            })?;
            tok.parse::<usize>().map_err(|e| Error::Parse {
                path: source.to_string(),
                line: lineno + 1,
                msg: format!("bad node index {tok:?}: {e}"),
            })
        };
        let i = parse(parts.next())?;
        let j = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                path: source.to_string(),
                line: lineno + 1,
                msg: "trailing tokens after edge".into(),
            });
        }
        edges.push((i, j));
    }
    Ok(edges)
}

pub fn format_edge_list(g: &Graph) -> String {
    let mut out = String::with_capacity(g.edge_count() * 12);
    let _ = writeln!(out, "# {} nodes, {} undirected edges", g.node_count(), g.edge_count());
    for &(i, j) in g.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

/// Square sparse matrix in compressed-row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Entry lookup (zero when not stored).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Largest `|A_ij − A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense product `self · x`. Each output row accumulates its stored
    /// entries in column order, so the result does not depend on how rows are
    /// distributed over threads.
    pub fn spmm(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return Err(Error::dims(format!(
                "sparse operator is {n}x{n}, features have {} rows",
                x.nrows(),
                n = self.n
            )));
        }
        let mut out = Array2::<f64>::zeros((self.n, x.ncols()));
        let kernel = |i: usize, mut row: ndarray::ArrayViewMut1<'_, f64>| {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                row.scaled_add(a, &x.row(j));
            }
        };
        if self.nnz() * x.ncols() >= PAR_SPMM_WORK {
            out.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .for_each(|(i, row)| kernel(i, row));
        } else {
            for (i, row) in out.axis_iter_mut(Axis(0)).enumerate() {
                kernel(i, row);
            }
        }
        Ok(out)
    }

    /// `I − self`, keeping the sparsity pattern.
    fn identity_minus(&self) -> CsrMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                values.push(if i == j { 1.0 - v } else { -v });
            }
        }
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }
}

/// `Ã = D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂ = D + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
    degrees: Vec<usize>,
}

impl NormalizedAdjacency {
    pub fn node_count(&self) -> usize {
        self.matrix.n
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Graph degrees (without the self-loop).
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.matrix.to_dense()
    }
}

pub fn normalized_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.node_count();
    let degrees = g.degrees();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / ((d + 1) as f64).sqrt()).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(2 * g.edge_count() + n);
    let mut values = Vec::with_capacity(2 * g.edge_count() + n);
    for i in 0..n {
        let nbrs = g.neighbors(i);
        // Merge the self-loop into the sorted neighbor list.
        let split = nbrs.partition_point(|&j| j < i);
        let cols = nbrs[..split].iter().copied().chain(std::iter::once(i)).chain(nbrs[split..].iter().copied());
        for j in cols {
            col_idx.push(j);
            values.push(if i == j {
                1.0 / (degrees[i] + 1) as f64
            } else {
                inv_sqrt[i] * inv_sqrt[j]
            });
        }
        row_ptr.push(col_idx.len());
    }
    NormalizedAdjacency {
        matrix: CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        },
        degrees,
    }
}

/// `L̃ = I − Ã`.
pub fn laplacian(a: &NormalizedAdjacency) -> CsrMatrix {
    a.matrix.identity_minus()
}

/// `Ã · x`; cost O(nnz · d).
pub fn spmm(a: &NormalizedAdjacency, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    a.matrix.spmm(x)
}

/// Fraction of undirected edges whose endpoints share a label.
pub fn label_homophily(g: &Graph, y: &[usize]) -> Result<f64> {
    homophily(g, y)
}

/// Fraction of undirected edges whose endpoints share the sensitive group.
pub fn sensitive_homophily(g: &Graph, s: &SensitiveVector) -> Result<f64> {
    homophily(g, s.groups())
}

fn homophily<T: PartialEq>(g: &Graph, attr: &[T]) -> Result<f64> {
    if attr.len() != g.node_count() {
        return Err(Error::dims(format!(
            "attribute vector has length {}, graph has {} nodes",
            attr.len(),
            g.node_count()
        )));
    }
    if g.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let same = g.edges().iter().filter(|&&(i, j)| attr[i] == attr[j]).count();
    Ok(same as f64 / g.edge_count() as f64)
}

/// Binary sensitive attribute together with its incident vector
/// `Δ_s = 1(s>0)/|{s>0}| − 1(s<0)/|{s<0}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveVector {
    groups: Vec<i8>,
    delta: Array1<f64>,
    n_pos: usize,
}

impl SensitiveVector {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Per-node group, each `-1` or `+1`.
    pub fn groups(&self) -> &[i8] {
        &self.groups
    }

    pub fn delta(&self) -> &Array1<f64> {
        &self.delta
    }

    pub fn positive_count(&self) -> usize {
        self.n_pos
    }

    pub fn negative_count(&self) -> usize {
        self.groups.len() - self.n_pos
    }

    /// Incident vector restricted to the nodes where `mask` is set; entries
    /// outside the mask are zero and the groups are renormalized within it.
    pub fn masked_delta(&self, mask: &[bool]) -> Result<Array1<f64>> {
        if mask.len() != self.len() {
            return Err(Error::dims("mask length differs from node count"));
        }
        let pos = self.groups.iter().zip(mask).filter(|(&g, &m)| m && g > 0).count();
        let neg = self.groups.iter().zip(mask).filter(|(&g, &m)| m && g < 0).count();
        if pos == 0 || neg == 0 {
            return Err(Error::SingleGroup);
        }
        Ok(self
            .groups
            .iter()
            .zip(mask)
            .map(|(&g, &m)| match (m, g > 0) {
                (false, _) => 0.0,
                (true, true) => 1.0 / pos as f64,
                (true, false) => -1.0 / neg as f64,
            })
            .collect())
    }
}

/// Builds the [`SensitiveVector`] for a ±1 group assignment.
pub fn incident_vector(s: &[i8]) -> Result<SensitiveVector> {
    if let Some(&bad) = s.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::NonBinarySensitive(bad as i64));
    }
    let n_pos = s.iter().filter(|&&v| v > 0).count();
    let n_neg = s.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleGroup);
    }
    let (wp, wn) = (1.0 / n_pos as f64, 1.0 / n_neg as f64);
    let delta = s.iter().map(|&v| if v > 0 { wp } else { -wn }).collect();
    Ok(SensitiveVector {
        groups: s.to_vec(),
        delta,
        n_pos,
    })
}
