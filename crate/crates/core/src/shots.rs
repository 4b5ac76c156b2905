//! Few-shot example selection: random, difficulty-stratified, and cluster
//! prototypes.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::Prototype;
use crate::corpus::{Language, Record, Split};
use crate::error::{Error, Result};
use crate::meteor::Meteor;

pub const STANDARD_SHOT_COUNTS: [usize; 3] = [3, 5, 10];
pub const DEFAULT_HARD_QUANTILE: f64 = 0.25;
pub const DEFAULT_EASY_QUANTILE: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Easy,
    Hard,
    Middle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub record_id: String,
    pub self_meteor: f64,
    pub band: Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub hard_quantile: f64,
    pub easy_quantile: f64,
    pub hard_threshold: f64,
    pub easy_threshold: f64,
}

/// Which text is scored against the reference claim.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultySource {
    #[default]
    CleanedPost,
    RawPost,
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Scores every training post against its own claim and assigns difficulty
/// bands relative to the rest of the pool. Scores exactly on a threshold
/// fall in the middle band.
pub fn self_difficulty(
    records: &[Record],
    meteor: &Meteor,
    hard_q: f64,
    easy_q: f64,
    source: DifficultySource,
) -> Result<(Vec<DifficultyRecord>, Thresholds)> {
    if !(0.0 < hard_q && hard_q < easy_q && easy_q < 1.0) {
        return Err(Error::InvalidInput(format!(
            "quantiles must satisfy 0 < hard ({hard_q}) < easy ({easy_q}) < 1"
        )));
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let scores = records
        .iter()
        .map(|r| {
            let claim = r
                .reference_claim
                .as_deref()
                .ok_or_else(|| Error::MissingField {
                    id: r.id.clone(),
                    field: "normalized_claim",
                })?;
            let post = match source {
                DifficultySource::CleanedPost => {
                    r.cleaned_post
                        .as_deref()
                        .ok_or_else(|| Error::MissingField {
                            id: r.id.clone(),
                            field: "cleaned_post",
                        })?
                }
                DifficultySource::RawPost => &r.raw_post,
            };
            Ok(meteor.score(post, claim).score)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let thresholds = Thresholds {
        hard_quantile: hard_q,
        easy_quantile: easy_q,
        hard_threshold: quantile(&sorted, hard_q),
        easy_threshold: quantile(&sorted, easy_q),
    };
    let out = records
        .iter()
        .zip(scores)
        .map(|(r, s)| DifficultyRecord {
            record_id: r.id.clone(),
            self_meteor: s,
            band: if s < thresholds.hard_threshold {
                Band::Hard
            } else if s > thresholds.easy_threshold {
                Band::Easy
            } else {
                Band::Middle
            },
        })
        .collect();
    Ok((out, thresholds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    MixedDifficulty,
    HardOnly,
    TopKPrototypes,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::MixedDifficulty,
        Strategy::HardOnly,
        Strategy::TopKPrototypes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::MixedDifficulty => "mixed_difficulty",
            Strategy::HardOnly => "hard_only",
            Strategy::TopKPrototypes => "top_k_prototypes",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::InvalidInput(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSet {
    pub language: Language,
    pub strategy: Strategy,
    pub n_shots: usize,
    pub seed: u64,
    pub record_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Auxiliary inputs needed by the non-random strategies.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelectionInputs<'a> {
    pub difficulty: Option<&'a [DifficultyRecord]>,
    pub prototypes: Option<&'a [Prototype]>,
    /// Recorded in the returned set for provenance only.
    pub thresholds: Option<Thresholds>,
}

fn check_pool(pool: &[Record]) -> Result<Language> {
    let first = pool.first().ok_or(Error::EmptyCorpus)?;
    let mut seen = HashSet::new();
    for r in pool {
        if r.split != Split::Train {
            return Err(Error::InvalidInput(format!(
                "shot pool record `{}` is from the {} split",
                r.id, r.split
            )));
        }
        if r.language != first.language {
            return Err(Error::InvalidInput(format!(
                "shot pool mixes languages {} and {}",
                first.language, r.language
            )));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate record id `{}` in shot pool",
                r.id
            )));
        }
    }
    Ok(first.language)
}

/// Draws up to `n` ids uniformly without replacement, in random order.
fn draw(candidates: &[&str], n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    candidates
        .choose_multiple(rng, n.min(candidates.len()))
        .map(|s| s.to_string())
        .collect()
}

/// Selects `n_shots` training examples. The same inputs and seed always
/// produce the same set.
pub fn select_shots(
    pool: &[Record],
    strategy: Strategy,
    n_shots: usize,
    seed: u64,
    inputs: SelectionInputs<'_>,
) -> Result<ShotSet> {
    let language = check_pool(pool)?;
    if n_shots == 0 {
        return Err(Error::InvalidInput("n_shots must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool_ids: Vec<&str> = pool.iter().map(|r| r.id.as_str()).collect();
    let in_pool: HashSet<&str> = pool_ids.iter().copied().collect();
    let mut warnings = Vec::new();

    let record_ids = match strategy {
        Strategy::Random => draw(&pool_ids, n_shots, &mut rng),
        Strategy::HardOnly => {
            let difficulty = difficulty_for(inputs, &in_pool)?;
            let mut ranked: Vec<&DifficultyRecord> = difficulty.values().copied().collect();
            ranked.sort_by(|a, b| {
                a.self_meteor
                    .total_cmp(&b.self_meteor)
                    .then_with(|| a.record_id.cmp(&b.record_id))
            });
            ranked
                .iter()
                .take(n_shots)
                .map(|d| d.record_id.clone())
                .collect()
        }
        Strategy::MixedDifficulty => {
            let difficulty = difficulty_for(inputs, &in_pool)?;
            let band_ids = |band: Band| -> Vec<&str> {
                let mut ids: Vec<&str> = pool_ids
                    .iter()
                    .copied()
                    .filter(|id| difficulty.get(id).is_some_and(|d| d.band == band))
                    .collect();
                ids.sort_unstable();
                ids
            };
            let (hard, easy, middle) = (
                band_ids(Band::Hard),
                band_ids(Band::Easy),
                band_ids(Band::Middle),
            );
            let want_hard = n_shots.div_ceil(2);
            let want_easy = n_shots / 2;
            let mut chosen = draw(&hard, want_hard, &mut rng);
            chosen.extend(draw(&easy, want_easy, &mut rng));
            let missing = n_shots.saturating_sub(chosen.len());
            if missing > 0 {
                warnings.push(format!(
                    "difficulty bands too small (hard {}, easy {}); backfilled {missing} from the middle band",
                    hard.len(),
                    easy.len()
                ));
                chosen.extend(draw(&middle, missing, &mut rng));
            }
            let missing = n_shots.saturating_sub(chosen.len());
            if missing > 0 {
                let taken: HashSet<String> = chosen.iter().cloned().collect();
                let rest: Vec<&str> = pool_ids
                    .iter()
                    .copied()
                    .filter(|id| !taken.contains(*id))
                    .collect();
                chosen.extend(draw(&rest, missing, &mut rng));
            }
            chosen
        }
        Strategy::TopKPrototypes => {
            let prototypes = inputs.prototypes.ok_or_else(|| {
                Error::InvalidInput("top_k_prototypes needs cluster prototypes".into())
            })?;
            let mut chosen: Vec<String> = Vec::new();
            for p in prototypes {
                if chosen.len() == n_shots {
                    break;
                }
                if !in_pool.contains(p.record_id.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "prototype `{}` is not in the training pool",
                        p.record_id
                    )));
                }
                if !chosen.contains(&p.record_id) {
                    chosen.push(p.record_id.clone());
                }
            }
            let missing = n_shots.saturating_sub(chosen.len());
            if missing > 0 {
                let rest: Vec<&str> = pool_ids
                    .iter()
                    .copied()
                    .filter(|id| !chosen.iter().any(|c| c == id))
                    .collect();
                chosen.extend(draw(&rest, missing, &mut rng));
            }
            chosen
        }
    };

    Ok(ShotSet {
        language,
        strategy,
        n_shots,
        seed,
        record_ids,
        thresholds: inputs.thresholds,
        warnings,
    })
}

fn difficulty_for<'a>(
    inputs: SelectionInputs<'a>,
    in_pool: &HashSet<&str>,
) -> Result<HashMap<&'a str, &'a DifficultyRecord>> {
    let difficulty = inputs.difficulty.ok_or_else(|| {
        Error::InvalidInput("difficulty strategies need self-METEOR scores".into())
    })?;
    Ok(difficulty
        .iter()
        .filter(|d| in_pool.contains(d.record_id.as_str()))
        .map(|d| (d.record_id.as_str(), d))
        .collect())
}
