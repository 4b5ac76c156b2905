//! Staged one-to-one unigram alignment.
//!
//! Each stage groups the still-unmatched tokens of both sides into
//! equivalence classes (exact form, stem, synonym set). Within a class every
//! hypothesis token is interchangeable with every reference token, so the
//! number of matches a stage contributes is fixed at `sum(min(|H_c|, |R_c|))`.
//! What remains is choosing *which* tokens pair up so the combined alignment
//! has as few chunks as possible.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Stage, StageKeys};

/// Searches with at most this many ambiguous tokens run to completion.
const EXACT_SEARCH_MAX_AMBIGUOUS: usize = 12;
/// Node budget for the branch-and-bound when the instance is larger.
const BOUNDED_SEARCH_NODES: usize = 20_000;
const REPAIR_ROUNDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub hyp_index: usize,
    pub ref_index: usize,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    /// Sorted by `hyp_index`.
    pub matches: Vec<Match>,
    pub chunk_count: usize,
}

/// Number of maximal runs that are contiguous in both sequences.
pub fn count_chunks(pairs: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut sorted: Vec<(usize, usize)> = pairs.into_iter().collect();
    sorted.sort_unstable();
    chunks_of_sorted(&sorted)
}

fn chunks_of_sorted(sorted: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(h, r) in sorted {
        match prev {
            Some((ph, pr)) if h == ph + 1 && r == pr + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((h, r));
    }
    chunks
}

fn chunks_of_partners(partner: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for (h, p) in partner.iter().enumerate() {
        if let Some(r) = *p {
            match prev {
                Some((ph, pr)) if h == ph + 1 && r == pr + 1 => {}
                _ => chunks += 1,
            }
            prev = Some((h, r));
        }
    }
    chunks
}

pub(super) fn align_tokens(
    hyp: &[String],
    reference: &[String],
    stages: &[Stage],
    keys: &StageKeys<'_>,
) -> Alignment {
    let mut partner: Vec<Option<usize>> = vec![None; hyp.len()];
    let mut stage_of: Vec<Option<Stage>> = vec![None; hyp.len()];
    let mut ref_used = vec![false; reference.len()];

    for &stage in stages {
        let problem =
            StageProblem::build(hyp, reference, &partner, &ref_used, |t| keys.key(stage, t));
        if problem.quota.iter().all(|&q| q == 0) {
            continue;
        }
        let solved = problem.solve(&partner, &ref_used);
        for (h, p) in solved.iter().enumerate() {
            if let Some(r) = *p {
                if partner[h].is_none() {
                    partner[h] = Some(r);
                    stage_of[h] = Some(stage);
                    ref_used[r] = true;
                }
            }
        }
    }

    let matches: Vec<Match> = partner
        .iter()
        .enumerate()
        .filter_map(|(h, p)| {
            p.map(|r| Match {
                hyp_index: h,
                ref_index: r,
                stage: stage_of[h].expect("matched tokens carry their stage"),
            })
        })
        .collect();
    let chunk_count = chunks_of_partners(&partner);
    Alignment {
        matches,
        chunk_count,
    }
}

struct StageProblem {
    /// Class of each still-free hypothesis token, if it can match at all.
    class_of_hyp: Vec<Option<usize>>,
    class_refs: Vec<Vec<usize>>,
    class_hyps: Vec<Vec<usize>>,
    quota: Vec<usize>,
}

impl StageProblem {
    fn build<F>(
        hyp: &[String],
        reference: &[String],
        partner: &[Option<usize>],
        ref_used: &[bool],
        key: F,
    ) -> Self
    where
        F: Fn(&str) -> Option<String>,
    {
        let mut class_ids: HashMap<String, usize> = HashMap::new();
        let mut class_refs: Vec<Vec<usize>> = Vec::new();
        for (j, tok) in reference.iter().enumerate() {
            if ref_used[j] {
                continue;
            }
            if let Some(k) = key(tok) {
                let next = class_ids.len();
                let c = *class_ids.entry(k).or_insert(next);
                if c == class_refs.len() {
                    class_refs.push(Vec::new());
                }
                class_refs[c].push(j);
            }
        }
        let mut class_hyps = vec![Vec::new(); class_refs.len()];
        let class_of_hyp = hyp
            .iter()
            .enumerate()
            .map(|(i, tok)| {
                if partner[i].is_some() {
                    return None;
                }
                let c = *class_ids.get(&key(tok)?)?;
                class_hyps[c].push(i);
                Some(c)
            })
            .collect();
        let quota = class_refs
            .iter()
            .zip(&class_hyps)
            .map(|(r, h)| r.len().min(h.len()))
            .collect();
        StageProblem {
            class_of_hyp,
            class_refs,
            class_hyps,
            quota,
        }
    }

    fn ambiguous_tokens(&self) -> usize {
        self.class_refs
            .iter()
            .zip(&self.class_hyps)
            .filter(|(r, h)| !h.is_empty() && !r.is_empty() && (r.len() > 1 || h.len() > 1))
            .map(|(r, h)| r.len() + h.len())
            .sum()
    }

    fn solve(&self, fixed: &[Option<usize>], ref_used: &[bool]) -> Vec<Option<usize>> {
        let mut incumbent = self.greedy(fixed, ref_used);
        self.repair(&mut incumbent);
        if self.ambiguous_tokens() == 0 {
            return incumbent;
        }
        let budget = if self.ambiguous_tokens() <= EXACT_SEARCH_MAX_AMBIGUOUS {
            None
        } else {
            Some(BOUNDED_SEARCH_NODES)
        };
        let best_chunks = chunks_of_partners(&incumbent);
        let mut search = Search {
            problem: self,
            partner: fixed.to_vec(),
            ref_used: ref_used.to_vec(),
            quota_left: self.quota.clone(),
            hyp_left: self.class_hyps.iter().map(Vec::len).collect(),
            best_chunks,
            best: incumbent,
            nodes: 0,
            budget,
        };
        search.dfs(0, None, 0);
        search.best
    }

    /// Left-to-right matching that continues the current chunk when it can
    /// and otherwise takes the smallest free reference index.
    fn greedy(&self, fixed: &[Option<usize>], ref_used: &[bool]) -> Vec<Option<usize>> {
        let mut partner = fixed.to_vec();
        let mut used = ref_used.to_vec();
        let mut quota_left = self.quota.clone();
        let mut prev: Option<(usize, usize)> = None;
        #[allow(clippy::needless_range_loop)] // `partner[i]` is written inside the loop
        for i in 0..partner.len() {
            if let Some(r) = partner[i] {
                prev = Some((i, r));
                continue;
            }
            let Some(c) = self.class_of_hyp[i] else {
                continue;
            };
            if quota_left[c] == 0 {
                continue;
            }
            let contiguous = prev
                .filter(|&(ph, _)| ph + 1 == i)
                .map(|(_, pr)| pr + 1)
                .filter(|&j| self.class_refs[c].contains(&j) && !used[j]);
            let j = contiguous.or_else(|| self.class_refs[c].iter().copied().find(|&j| !used[j]));
            if let Some(j) = j {
                partner[i] = Some(j);
                used[j] = true;
                quota_left[c] -= 1;
                prev = Some((i, j));
            }
        }
        partner
    }

    /// Hill-climbs on chunk count by swapping partners inside a class and by
    /// moving a match onto a free token of the same class.
    fn repair(&self, partner: &mut [Option<usize>]) {
        let mut current = chunks_of_partners(partner);
        for _ in 0..REPAIR_ROUNDS {
            let mut improved = false;
            for (c, hyps) in self.class_hyps.iter().enumerate() {
                if self.quota[c] == 0 {
                    continue;
                }
                for a in 0..hyps.len() {
                    for b in a + 1..hyps.len() {
                        let (ha, hb) = (hyps[a], hyps[b]);
                        if partner[ha].is_none() && partner[hb].is_none() {
                            continue;
                        }
                        partner.swap(ha, hb);
                        let trial = chunks_of_partners(partner);
                        if trial < current {
                            current = trial;
                            improved = true;
                        } else {
                            partner.swap(ha, hb);
                        }
                    }
                }
                let refs = &self.class_refs[c];
                for &h in hyps {
                    let Some(old) = partner[h] else { continue };
                    for &j in refs {
                        if partner.contains(&Some(j)) {
                            continue;
                        }
                        partner[h] = Some(j);
                        let trial = chunks_of_partners(partner);
                        if trial < current {
                            current = trial;
                            improved = true;
                            break;
                        }
                        partner[h] = Some(old);
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
}

struct Search<'a> {
    problem: &'a StageProblem,
    partner: Vec<Option<usize>>,
    ref_used: Vec<bool>,
    quota_left: Vec<usize>,
    hyp_left: Vec<usize>,
    best_chunks: usize,
    best: Vec<Option<usize>>,
    nodes: usize,
    budget: Option<usize>,
}

impl Search<'_> {
    fn dfs(&mut self, i: usize, prev: Option<(usize, usize)>, chunks: usize) {
        self.nodes += 1;
        if self.budget.is_some_and(|b| self.nodes > b) || chunks >= self.best_chunks {
            return;
        }
        if i == self.partner.len() {
            self.best_chunks = chunks;
            self.best.clone_from(&self.partner);
            return;
        }
        let opens_chunk = |j: usize| match prev {
            Some((ph, pr)) => !(ph + 1 == i && pr + 1 == j),
            None => true,
        };

        if let Some(j) = self.partner[i] {
            let next = chunks + usize::from(opens_chunk(j));
            self.dfs(i + 1, Some((i, j)), next);
            return;
        }
        let Some(c) = self.problem.class_of_hyp[i] else {
            self.dfs(i + 1, prev, chunks);
            return;
        };

        self.hyp_left[c] -= 1;
        if self.quota_left[c] > 0 {
            let contiguous = prev.filter(|&(ph, _)| ph + 1 == i).map(|(_, pr)| pr + 1);
            let refs = &self.problem.class_refs[c];
            let order = contiguous
                .filter(|j| refs.contains(j))
                .into_iter()
                .chain(refs.iter().copied().filter(move |&j| Some(j) != contiguous));
            let candidates: Vec<usize> = order.collect();
            for j in candidates {
                if self.ref_used[j] {
                    continue;
                }
                self.ref_used[j] = true;
                self.partner[i] = Some(j);
                self.quota_left[c] -= 1;
                let next = chunks + usize::from(opens_chunk(j));
                self.dfs(i + 1, Some((i, j)), next);
                self.quota_left[c] += 1;
                self.partner[i] = None;
                self.ref_used[j] = false;
            }
        }
        if self.hyp_left[c] >= self.quota_left[c] {
            self.dfs(i + 1, prev, chunks);
        }
        self.hyp_left[c] += 1;
    }
}
