#![allow(dead_code)]

pub mod stub;

use std::collections::HashMap;
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_json(name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture exists");
    serde_json::from_str(&text).expect("fixture parses")
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings (noise is treated as its own label).
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut table: HashMap<(i64, i64), u64> = HashMap::new();
    let mut rows: HashMap<i64, u64> = HashMap::new();
    let mut cols: HashMap<i64, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| choose2(v)).sum();
    let total = choose2(a.len() as u64);
    let expected = sum_rows * sum_cols / total;
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Kruskal over every edge of a dense weight matrix, returning the sorted
/// weights of the spanning tree.
pub fn brute_force_mst_weights(weights: &[f64], n: usize) -> Vec<f64> {
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((weights[i * n + j], i, j));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        r
    }
    let mut out = Vec::new();
    for (w, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            out.push(w);
        }
    }
    out
}

pub fn points_from_json(v: &serde_json::Value) -> (Vec<f64>, usize) {
    let rows = v.as_array().unwrap();
    let dim = rows[0].as_array().unwrap().len();
    let flat = rows
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect();
    (flat, dim)
}

pub fn labels_from_json(v: &serde_json::Value) -> Vec<i64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_i64().unwrap())
        .collect()
}

/// Every one-to-one exact-match alignment; returns the best
/// (matches, chunks) with matches maximized first, chunks minimized second.
pub fn brute_force_alignment(hyp: &[String], reference: &[String]) -> (usize, usize) {
    fn chunks(pairs: &[(usize, usize)]) -> usize {
        let mut sorted = pairs.to_vec();
        sorted.sort();
        let mut count = 0;
        let mut prev: Option<(usize, usize)> = None;
        for &(h, r) in &sorted {
            if !prev.is_some_and(|(ph, pr)| h == ph + 1 && r == pr + 1) {
                count += 1;
            }
            prev = Some((h, r));
        }
        count
    }
    fn rec(
        i: usize,
        hyp: &[String],
        reference: &[String],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == hyp.len() {
            let (m, c) = (cur.len(), chunks(cur));
            if m > best.0 || (m == best.0 && c < best.1) {
                *best = (m, c);
            }
            return;
        }
        rec(i + 1, hyp, reference, used, cur, best);
        for j in 0..reference.len() {
            if !used[j] && hyp[i] == reference[j] {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, hyp, reference, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    rec(
        0,
        hyp,
        reference,
        &mut vec![false; reference.len()],
        &mut Vec::new(),
        &mut best,
    );
    best
}

pub fn write(dir: &std::path::Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}
