//! HDBSCAN: core distances, mutual reachability, Prim MST, single-linkage
//! hierarchy, condensed tree, and excess-of-mass cluster extraction.

use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Distances below this are treated as this value when converting to
/// lambda = 1 / distance, keeping stabilities finite for duplicate points.
const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbor rank for core distances, counting the point itself.
    pub min_samples: usize,
    #[serde(default)]
    pub metric: Metric,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        HdbscanParams {
            min_cluster_size,
            min_samples: min_cluster_size,
            metric: Metric::Euclidean,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::InvalidInput("min_cluster_size must be >= 2".into()));
        }
        if self.min_samples < 1 {
            return Err(Error::InvalidInput("min_samples must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams::new(5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Per-row label; `-1` is noise, clusters are numbered by decreasing size.
    pub labels: Vec<i32>,
    pub sizes: Vec<usize>,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

fn pairwise_distances(points: &[f64], dim: usize) -> Vec<f64> {
    let n = points.len() / dim;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let pi = &points[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let pj = &points[j * dim..(j + 1) * dim];
            let d = pi
                .iter()
                .zip(pj)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

fn core_from_distances(dist: &[f64], n: usize, min_samples: usize) -> Vec<f64> {
    let k = min_samples.clamp(1, n) - 1;
    (0..n)
        .map(|i| {
            let mut row = dist[i * n..(i + 1) * n].to_vec();
            row.select_nth_unstable_by(k, f64::total_cmp);
            row[k]
        })
        .collect()
}

/// Distance from each point to its `min_samples`-th nearest neighbor, the
/// point itself being the first.
pub fn core_distances(points: &[f64], dim: usize, min_samples: usize) -> Vec<f64> {
    let n = points.len() / dim;
    core_from_distances(&pairwise_distances(points, dim), n, min_samples)
}

/// Dense `n x n` mutual reachability matrix with a zero diagonal.
pub fn mutual_reachability(points: &[f64], dim: usize, min_samples: usize) -> Vec<f64> {
    let n = points.len() / dim;
    let mut dist = pairwise_distances(points, dim);
    let core = core_from_distances(&dist, n, min_samples);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = &mut dist[i * n + j];
                *d = d.max(core[i]).max(core[j]);
            }
        }
    }
    dist
}

/// Prim's algorithm over a dense symmetric weight matrix. Ties go to the
/// lowest vertex index.
pub fn minimum_spanning_tree(weights: &[f64], n: usize) -> Vec<MstEdge> {
    if n == 0 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    in_tree[0] = true;
    best[1..n].copy_from_slice(&weights[1..n]);
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        let (a, b) = (from[next].min(next), from[next].max(next));
        edges.push(MstEdge {
            a,
            b,
            weight: best[next],
        });
        for k in 0..n {
            if !in_tree[k] && weights[next * n + k] < best[k] {
                best[k] = weights[next * n + k];
                from[k] = next;
            }
        }
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

struct Merge {
    left: usize,
    right: usize,
    distance: f64,
}

/// Single-linkage dendrogram: merge `k` creates node `n + k`.
fn single_linkage(mut edges: Vec<MstEdge>, n: usize) -> (Vec<Merge>, Vec<usize>) {
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    let mut uf = UnionFind::new(2 * n - 1);
    let mut size = vec![1usize; 2 * n - 1];
    let mut merges = Vec::with_capacity(n - 1);
    for (k, e) in edges.iter().enumerate() {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let node = n + k;
        size[node] = size[ra] + size[rb];
        uf.parent[ra] = node;
        uf.parent[rb] = node;
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: e.weight,
        });
    }
    (merges, size)
}

#[derive(Debug, Clone, Copy)]
enum Child {
    Point(usize),
    Cluster(usize),
}

#[derive(Debug, Clone, Copy)]
struct CondensedEdge {
    parent: usize,
    child: Child,
    lambda: f64,
    size: usize,
}

struct CondensedTree {
    edges: Vec<CondensedEdge>,
    cluster_parent: Vec<Option<usize>>,
    cluster_birth: Vec<f64>,
}

fn lambda_of(distance: f64) -> f64 {
    1.0 / distance.max(MIN_DISTANCE)
}

fn leaves(node: usize, n: usize, merges: &[Merge], out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let m = &merges[x - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
}

/// Children of `node`, looking through descendants merged at the same
/// distance so that a simultaneous split is one multi-way split whatever
/// order the equal-weight edges were processed in.
fn split_children(node: usize, n: usize, merges: &[Merge]) -> Vec<usize> {
    let distance = merges[node - n].distance;
    let mut out = Vec::new();
    let mut stack = vec![merges[node - n].right, merges[node - n].left];
    while let Some(x) = stack.pop() {
        if x >= n && merges[x - n].distance == distance {
            stack.push(merges[x - n].right);
            stack.push(merges[x - n].left);
        } else {
            out.push(x);
        }
    }
    out
}

fn condense(merges: &[Merge], size: &[usize], n: usize, min_cluster_size: usize) -> CondensedTree {
    let mut tree = CondensedTree {
        edges: Vec::new(),
        cluster_parent: vec![None],
        cluster_birth: vec![0.0],
    };
    let mut stack = vec![(2 * n - 2, 0usize)];
    let mut fallen = Vec::new();
    while let Some((node, cluster)) = stack.pop() {
        let lambda = lambda_of(merges[node - n].distance);
        let children = split_children(node, n, merges);
        let big = children
            .iter()
            .filter(|&&c| size[c] >= min_cluster_size)
            .count();
        for child in children {
            let sz = size[child];
            if sz < min_cluster_size {
                fallen.clear();
                leaves(child, n, merges, &mut fallen);
                tree.edges.extend(fallen.iter().map(|&p| CondensedEdge {
                    parent: cluster,
                    child: Child::Point(p),
                    lambda,
                    size: 1,
                }));
            } else if big >= 2 {
                let id = tree.cluster_parent.len();
                tree.cluster_parent.push(Some(cluster));
                tree.cluster_birth.push(lambda);
                tree.edges.push(CondensedEdge {
                    parent: cluster,
                    child: Child::Cluster(id),
                    lambda,
                    size: sz,
                });
                stack.push((child, id));
            } else if child >= n {
                stack.push((child, cluster));
            } else {
                // a lone point can only be "big" when min_cluster_size is 1
                tree.edges.push(CondensedEdge {
                    parent: cluster,
                    child: Child::Point(child),
                    lambda,
                    size: 1,
                });
            }
        }
    }
    tree
}

/// Excess-of-mass selection; the root is never selected.
fn select_clusters(tree: &CondensedTree) -> Vec<bool> {
    let nc = tree.cluster_parent.len();
    let mut stability = vec![0.0; nc];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for e in &tree.edges {
        stability[e.parent] += (e.lambda - tree.cluster_birth[e.parent]) * e.size as f64;
        if let Child::Cluster(c) = e.child {
            children[e.parent].push(c);
        }
    }
    let mut selected = vec![false; nc];
    let mut subtree = stability.clone();
    for c in (1..nc).rev() {
        let child_sum: f64 = children[c].iter().map(|&k| subtree[k]).sum();
        if !children[c].is_empty() && child_sum > stability[c] {
            subtree[c] = child_sum;
        } else {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend_from_slice(&children[k]);
            }
        }
    }
    selected
}

fn relabel_by_size(raw: &[Option<usize>]) -> ClusterAssignment {
    let mut groups: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for (i, c) in raw.iter().enumerate() {
        if let Some(c) = c {
            let entry = groups.entry(*c).or_insert((0, i));
            entry.0 += 1;
        }
    }
    let mut order: Vec<(usize, usize, usize)> = groups
        .into_iter()
        .map(|(c, (sz, first))| (c, sz, first))
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let mut new_label = std::collections::HashMap::new();
    for (label, (c, _, _)) in order.iter().enumerate() {
        new_label.insert(*c, label as i32);
    }
    ClusterAssignment {
        labels: raw
            .iter()
            .map(|c| c.map_or(-1, |c| new_label[&c]))
            .collect(),
        sizes: order.iter().map(|&(_, sz, _)| sz).collect(),
    }
}

/// Clusters the rows of a flat row-major `points` buffer of width `dim`.
pub fn hdbscan_points(
    points: &[f64],
    dim: usize,
    params: &HdbscanParams,
) -> Result<ClusterAssignment> {
    params.validate()?;
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidInput(
            "point buffer is not a whole number of rows".into(),
        ));
    }
    let n = points.len() / dim;
    if n < params.min_cluster_size {
        return Err(Error::InvalidInput(format!(
            "need at least min_cluster_size = {} points, got {n}",
            params.min_cluster_size
        )));
    }
    let mr = mutual_reachability(points, dim, params.min_samples);
    let mst = minimum_spanning_tree(&mr, n);
    if mst.iter().all(|e| e.weight == 0.0) {
        // every point coincides: one cluster, nothing to split
        return Ok(ClusterAssignment {
            labels: vec![0; n],
            sizes: vec![n],
        });
    }
    let (merges, size) = single_linkage(mst, n);
    let tree = condense(&merges, &size, n, params.min_cluster_size);
    let selected = select_clusters(&tree);

    let mut raw = vec![None; n];
    for e in &tree.edges {
        if let Child::Point(p) = e.child {
            let mut c = Some(e.parent);
            while let Some(k) = c {
                if selected[k] {
                    raw[p] = Some(k);
                    break;
                }
                c = tree.cluster_parent[k];
            }
        }
    }
    Ok(relabel_by_size(&raw))
}

pub fn hdbscan(matrix: &EmbeddingMatrix, params: &HdbscanParams) -> Result<ClusterAssignment> {
    hdbscan_points(matrix.data(), matrix.dim(), params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_form_one_cluster() {
        let points = [0.6, 0.8].repeat(10);
        let a = hdbscan_points(&points, 2, &HdbscanParams::default()).unwrap();
        assert_eq!(a.labels, vec![0; 10]);
        assert_eq!(a.sizes, vec![10]);
    }

    #[test]
    fn too_few_points() {
        let points = [1.0, 0.0].repeat(4);
        assert!(hdbscan_points(&points, 2, &HdbscanParams::default()).is_err());
    }

    #[test]
    fn invalid_params() {
        let points = [1.0, 0.0].repeat(4);
        assert!(hdbscan_points(&points, 2, &HdbscanParams::new(1)).is_err());
    }

    #[test]
    fn core_distance_counts_self() {
        let points = [0.0, 0.0, 1.0, 0.0, 3.0, 0.0];
        assert_eq!(core_distances(&points, 2, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(core_distances(&points, 2, 2), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn prim_on_a_path() {
        let w = [0.0, 1.0, 5.0, 1.0, 0.0, 2.0, 5.0, 2.0, 0.0];
        let mst = minimum_spanning_tree(&w, 3);
        let total: f64 = mst.iter().map(|e| e.weight).sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn two_separated_groups() {
        let mut points = Vec::new();
        for i in 0..6 {
            points.extend([i as f64 * 0.01, 0.0]);
        }
        for i in 0..6 {
            points.extend([10.0 + i as f64 * 0.01, 0.0]);
        }
        let a = hdbscan_points(&points, 2, &HdbscanParams::new(3)).unwrap();
        assert_eq!(a.n_clusters(), 2);
        assert!(a.labels[..6].iter().all(|&l| l == a.labels[0]));
        assert!(a.labels[6..].iter().all(|&l| l == a.labels[6]));
        assert_ne!(a.labels[0], a.labels[6]);
    }
}
