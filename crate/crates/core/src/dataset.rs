//! On-disk node-classification datasets and a synthetic biased task.
//!
//! A dataset directory holds four files with one node per line:
//!
//! | file           | content                                    |
//! |----------------|--------------------------------------------|
//! | `edges.txt`    | `i j` per undirected edge, `#` comments    |
//! | `features.csv` | comma-separated floats                     |
//! | `labels.txt`   | `0` or `1`                                 |
//! | `sens.txt`     | `-1` or `1`                                |
//!
//! An optional `meta.json` is carried along as provenance.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{format_edge_list, incident_vector, label_homophily, parse_edge_list, sensitive_homophily};
use crate::graph::{Graph, SensitiveVector};
use crate::rng::{derive_seed, seeded};
use crate::synth::{sample_sbm, SbmParams};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";
pub const SENS_FILE: &str = "sens.txt";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub sens: SensitiveVector,
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub label_homophily: Option<f64>,
    pub sensitive_homophily: Option<f64>,
}

impl DatasetBundle {
    pub fn new(
        graph: Graph,
        features: Array2<f64>,
        labels: Vec<usize>,
        sens: SensitiveVector,
        provenance: serde_json::Value,
    ) -> Result<Self> {
        let n = graph.node_count();
        for (file, found) in [(FEATURES_FILE, features.nrows()), (LABELS_FILE, labels.len()), (SENS_FILE, sens.len())] {
            if found != n {
                return Err(Error::RowCountMismatch { file: file.into(), expected: n, found });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::NonBinaryLabel(bad as i64));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("features contain non-finite values".into()));
        }
        Ok(Self { graph, features, labels, sens, provenance })
    }

    pub fn len(&self) -> usize {
        self.graph.node_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            nodes: self.len(),
            edges: self.graph.edge_count(),
            features: self.features.ncols(),
            label_homophily: label_homophily(&self.graph, &self.labels).ok(),
            sensitive_homophily: sensitive_homophily(&self.graph, &self.sens).ok(),
        }
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn read(dir: &Path, name: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path)?;
    Ok((path, text))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_ints(path: &Path, text: &str) -> Result<Vec<i64>> {
    data_lines(text)
        .map(|(line, tok)| {
            tok.parse::<i64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("expected an integer, got {tok:?}: {e}"),
            })
        })
        .collect()
}

pub fn parse_features(path: &Path, text: &str) -> Result<Array2<f64>> {
    let mut width = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, raw) in data_lines(text) {
        let start = data.len();
        for tok in raw.split(',') {
            let v = tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("bad float {tok:?}: {e}"),
            })?;
            data.push(v);
        }
        let w = data.len() - start;
        if *width.get_or_insert(w) != w {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("row has {w} columns, expected {}", width.unwrap()),
            });
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), data).map_err(|e| Error::dims(e.to_string()))
}

/// Graph, features and sensitive attribute of a dataset directory, without
/// labels. The node count is taken from `sens.txt`.
pub fn load_unlabeled(dir: &Path) -> Result<(Graph, Array2<f64>, SensitiveVector)> {
    let (sens_path, sens_text) = read(dir, SENS_FILE)?;
    let (edges_path, edges_text) = read(dir, EDGES_FILE)?;
    let (feat_path, feat_text) = read(dir, FEATURES_FILE)?;
    let groups: Vec<i8> = parse_ints(&sens_path, &sens_text)?
        .into_iter()
        .map(|v| match v {
            1 => Ok(1),
            -1 => Ok(-1),
            other => Err(Error::NonBinarySensitive(other)),
        })
        .collect::<Result<_>>()?;
    let n = groups.len();
    let sens = incident_vector(&groups)?;
    let features = parse_features(&feat_path, &feat_text)?;
    if features.nrows() != n {
        return Err(Error::RowCountMismatch { file: FEATURES_FILE.into(), expected: n, found: features.nrows() });
    }
    let edges = parse_edge_list(&edges_text, &edges_path.display().to_string())?;
    let graph = Graph::from_edges(n, &edges)?;
    Ok((graph, features, sens))
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let (graph, features, sens) = load_unlabeled(dir)?;
    let (label_path, label_text) = read(dir, LABELS_FILE)?;
    let labels: Vec<usize> = parse_ints(&label_path, &label_text)?
        .into_iter()
        .map(|v| if v == 0 || v == 1 { Ok(v as usize) } else { Err(Error::NonBinaryLabel(v)) })
        .collect::<Result<_>>()?;
    let provenance = match fs::read_to_string(dir.join(META_FILE)) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => serde_json::Value::Null,
    };
    DatasetBundle::new(graph, features, labels, sens, provenance)
}

/// Writes the four data files (and `meta.json` when provenance is set).
pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(EDGES_FILE), format_edge_list(&bundle.graph))?;
    fs::write(dir.join(FEATURES_FILE), format_matrix(&bundle.features))?;
    let labels: String = bundle.labels.iter().map(|y| format!("{y}\n")).collect();
    fs::write(dir.join(LABELS_FILE), labels)?;
    let sens: String = bundle.sens.groups().iter().map(|s| format!("{s}\n")).collect();
    fs::write(dir.join(SENS_FILE), sens)?;
    if !bundle.provenance.is_null() {
        fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&bundle.provenance)?)?;
    }
    Ok(())
}

pub fn format_matrix(x: &Array2<f64>) -> String {
    let mut out = String::with_capacity(x.len() * 24);
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Node classification where the label leans on the sensitive group and the
/// graph is sensitive-homophilous.
///
/// `P(y=1 | s=+1) = 0.5 + label_bias`, `P(y=1 | s=-1) = 0.5 − label_bias`.
/// Features are `signal·(2y−1)` on the first coordinate, `group_shift·s` on
/// the second, and unit Gaussian noise everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasedTaskParams {
    pub n: usize,
    pub rho_d: f64,
    pub eps_sens: f64,
    pub c: f64,
    pub label_bias: f64,
    pub dim: usize,
    pub signal: f64,
    pub group_shift: f64,
}

impl Default for BiasedTaskParams {
    fn default() -> Self {
        Self {
            n: 2000,
            rho_d: 5e-3,
            eps_sens: 0.95,
            c: 0.5,
            label_bias: 0.2,
            dim: 4,
            signal: 1.0,
            group_shift: 1.0,
        }
    }
}

pub fn biased_classification(p: &BiasedTaskParams, seed: u64) -> Result<DatasetBundle> {
    if !(0.0..0.5).contains(&p.label_bias) {
        return Err(Error::InvalidParameter(format!("label_bias = {} must lie in [0, 0.5)", p.label_bias)));
    }
    if p.dim < 2 {
        return Err(Error::InvalidParameter("biased task needs at least 2 feature dimensions".into()));
    }
    let sbm = SbmParams::new(p.n, p.rho_d, p.eps_sens, p.c)?;
    let (graph, sens) = sample_sbm(&sbm, derive_seed(seed, 0))?;
    let mut rng = seeded(derive_seed(seed, 1));
    let labels: Vec<usize> = sens
        .groups()
        .iter()
        .map(|&s| usize::from(rng.random_bool(0.5 + p.label_bias * f64::from(s))))
        .collect();
    let mut features = Array2::<f64>::zeros((p.n, p.dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        row[0] += p.signal * (2.0 * labels[i] as f64 - 1.0);
        row[1] += p.group_shift * f64::from(sens.groups()[i]);
    }
    let provenance = serde_json::json!({ "generator": "biased_classification", "params": p, "seed": seed });
    DatasetBundle::new(graph, features, labels, sens, provenance)
}
