//! Post embeddings, HDBSCAN clustering, and centroid prototypes.

mod embed;
mod hdbscan;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embed::{fallback_embed, DEFAULT_FALLBACK_DIM};
pub use hdbscan::{
    core_distances, hdbscan, hdbscan_points, minimum_spanning_tree, mutual_reachability,
    ClusterAssignment, HdbscanParams, MstEdge,
};

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Row-major `n x d` matrix of L2-normalized post vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    source: String,
}

impl EmbeddingMatrix {
    /// Builds a matrix, normalizing every row to unit length.
    pub fn from_rows(
        ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidInput(format!(
                "row/id count mismatch: {} ids, {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if !rows.is_empty() && dim < 2 {
            return Err(Error::InvalidInput(format!(
                "embedding dimension must be >= 2, got {dim}"
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "dimension mismatch for `{id}`: expected {dim}, got {}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in embedding `{id}`"
                )));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "zero vector for `{id}` cannot be normalized"
                )));
            }
            data.extend(row.iter().map(|v| v / norm));
        }
        Ok(EmbeddingMatrix {
            ids,
            dim,
            data,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    /// Restricts the matrix to `ids`, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("no embedding for record `{id}`")))?;
            data.extend_from_slice(self.row(i));
        }
        Ok(EmbeddingMatrix {
            ids: ids.to_vec(),
            dim: self.dim,
            data,
            source: self.source.clone(),
        })
    }

    pub fn is_unit_normalized(&self) -> bool {
        self.rows().all(|r| {
            (r.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= UNIT_NORM_TOLERANCE
        })
    }

    /// Serializes in the embedding file format (`#dim=<d> source=<label>` header).
    pub fn to_file_string(&self) -> String {
        let mut out = format!("#dim={} source={}\n", self.dim, self.source);
        for (id, row) in self.ids.iter().zip(self.rows()) {
            out.push_str(id);
            out.push('\t');
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn parse_header(line: &str) -> Option<(usize, String)> {
    let rest = line.strip_prefix('#')?;
    let mut dim = None;
    let mut source = String::new();
    let mut remaining = rest.trim();
    while !remaining.is_empty() {
        if let Some(v) = remaining.strip_prefix("source=") {
            source = v.trim().to_string();
            break;
        }
        let (field, tail) = remaining
            .split_once(char::is_whitespace)
            .unwrap_or((remaining, ""));
        if let Some(v) = field.strip_prefix("dim=") {
            dim = v.parse().ok();
        }
        remaining = tail.trim_start();
    }
    Some((dim?, source))
}

/// Reads `#dim=<d> source=<label>` followed by `id<TAB>v1 v2 ... vd` lines.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.into(),
            line,
            message,
        },
        other => other,
    })
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingMatrix> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: "<embeddings>".into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (dim, source) = lines
        .next()
        .and_then(|(_, l)| parse_header(l))
        .ok_or_else(|| parse_err(1, "expected `#dim=<d> source=<label>` header".into()))?;

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (id, values) = line.split_once('\t').unwrap_or((line, ""));
        let row = values
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(idx + 1, e.to_string()))?;
        if row.is_empty() {
            return Err(Error::InvalidInput(format!(
                "row/id count mismatch: `{id}` has no vector"
            )));
        }
        if row.len() != dim {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch for `{id}`: header says {dim}, row has {}",
                row.len()
            )));
        }
        ids.push(id.to_string());
        rows.push(row);
    }
    EmbeddingMatrix::from_rows(ids, rows, source)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prototype {
    pub cluster_id: i32,
    pub cluster_size: usize,
    pub record_id: String,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Member closest to the arithmetic mean of `members`; ties go to the
/// smallest id.
pub fn centroid_prototype<'a>(members: &[(&'a str, &[f64])]) -> Option<&'a str> {
    let (_, first) = members.first()?;
    let mut centroid = vec![0.0; first.len()];
    for (_, row) in members {
        for (c, v) in centroid.iter_mut().zip(row.iter()) {
            *c += v;
        }
    }
    let n = members.len() as f64;
    centroid.iter_mut().for_each(|c| *c /= n);

    members
        .iter()
        .map(|(id, row)| (squared_distance(row, &centroid), *id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id)
}

/// Centroid prototypes of the `k` largest clusters, largest first.
pub fn prototypes(
    matrix: &EmbeddingMatrix,
    assignment: &ClusterAssignment,
    k: usize,
) -> Result<Vec<Prototype>> {
    if assignment.labels.len() != matrix.len() {
        return Err(Error::InvalidInput(format!(
            "assignment covers {} rows but the matrix has {}",
            assignment.labels.len(),
            matrix.len()
        )));
    }
    let take = k.min(assignment.sizes.len());
    let mut out = Vec::with_capacity(take);
    for cluster in 0..take {
        let members: Vec<(&str, &[f64])> = assignment
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster as i32)
            .map(|(i, _)| (matrix.ids[i].as_str(), matrix.row(i)))
            .collect();
        if let Some(id) = centroid_prototype(&members) {
            out.push(Prototype {
                cluster_id: cluster as i32,
                cluster_size: members.len(),
                record_id: id.to_string(),
            });
        }
    }
    Ok(out)
}
