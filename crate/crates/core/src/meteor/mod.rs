//! METEOR scoring with punctuation-stripped preprocessing and corpus averaging.
//!
//! The score for one pair is
//!
//! ```text
//! P = m / |hyp|      R = m / |ref|
//! Fmean   = P R / (alpha P + (1 - alpha) R)
//! penalty = gamma (chunks / m)^beta
//! score   = Fmean (1 - penalty)
//! ```
//!
//! With the default parameters (`alpha = 0.9`, `beta = 3`, `gamma = 0.5`)
//! this is the familiar `10PR / (R + 9P)` harmonic mean. Pairs with no
//! matches score exactly zero.

mod align;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_general_category::get_general_category;

use crate::error::{Error, Result};

pub use align::{count_chunks, Alignment, Match};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exact,
    Stem,
    Synonym,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Exact => "exact",
            Stage::Stem => "stem",
            Stage::Synonym => "synonym",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Stage::Exact),
            "stem" => Ok(Stage::Stem),
            "synonym" => Ok(Stage::Synonym),
            other => Err(Error::InvalidInput(format!(
                "unknown METEOR stage `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub stages: Vec<Stage>,
    pub casefold: bool,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
            stages: vec![Stage::Exact],
            casefold: true,
        }
    }
}

impl MeteorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.stages.is_empty() {
            return Err(Error::Config(
                "at least one matching stage is required".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: MeteorParams =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }
}

/// Reduces a token to its stem for the `stem` stage.
pub trait Stemmer: Send + Sync {
    fn stem(&self, token: &str) -> String;
}

/// Maps a token to a synonym-set identifier for the `synonym` stage. Tokens
/// sharing an identifier match each other.
pub trait SynonymLookup: Send + Sync {
    fn synset(&self, token: &str) -> Option<String>;
}

impl<F> Stemmer for F
where
    F: Fn(&str) -> String + Send + Sync,
{
    fn stem(&self, token: &str) -> String {
        self(token)
    }
}

pub(crate) struct StageKeys<'a> {
    stemmer: Option<&'a dyn Stemmer>,
    synonyms: Option<&'a dyn SynonymLookup>,
}

impl StageKeys<'_> {
    fn key(&self, stage: Stage, token: &str) -> Option<String> {
        match stage {
            Stage::Exact => Some(token.to_string()),
            Stage::Stem => self.stemmer.map(|s| s.stem(token)),
            Stage::Synonym => self.synonyms.and_then(|s| s.synset(token)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeteorScore {
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
    pub matches: usize,
    pub chunks: usize,
}

/// A configured scorer. Stem and synonym resources are optional; a stage
/// without its resource contributes no matches.
#[derive(Default)]
pub struct Meteor {
    params: MeteorParams,
    stemmer: Option<Box<dyn Stemmer>>,
    synonyms: Option<Box<dyn SynonymLookup>>,
}

impl fmt::Debug for Meteor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Meteor")
            .field("params", &self.params)
            .field("stemmer", &self.stemmer.is_some())
            .field("synonyms", &self.synonyms.is_some())
            .finish()
    }
}

impl Meteor {
    pub fn new(params: MeteorParams) -> Result<Self> {
        params.validate()?;
        Ok(Meteor {
            params,
            stemmer: None,
            synonyms: None,
        })
    }

    pub fn with_stemmer(mut self, stemmer: impl Stemmer + 'static) -> Self {
        self.stemmer = Some(Box::new(stemmer));
        self
    }

    pub fn with_synonyms(mut self, synonyms: impl SynonymLookup + 'static) -> Self {
        self.synonyms = Some(Box::new(synonyms));
        self
    }

    pub fn params(&self) -> &MeteorParams {
        &self.params
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, self.params.casefold)
    }

    pub fn align(&self, hyp: &[String], reference: &[String]) -> Alignment {
        let keys = StageKeys {
            stemmer: self.stemmer.as_deref(),
            synonyms: self.synonyms.as_deref(),
        };
        align::align_tokens(hyp, reference, &self.params.stages, &keys)
    }

    pub fn score_tokens(&self, hyp: &[String], reference: &[String]) -> MeteorScore {
        if hyp.is_empty() || reference.is_empty() {
            return MeteorScore::default();
        }
        let alignment = self.align(hyp, reference);
        score_from_counts(
            &self.params,
            alignment.matches.len(),
            alignment.chunk_count,
            hyp.len(),
            reference.len(),
        )
    }

    pub fn score(&self, hyp_text: &str, ref_text: &str) -> MeteorScore {
        self.score_tokens(&self.tokenize(hyp_text), &self.tokenize(ref_text))
    }

    /// Mean sentence score over all pairs; empty predictions count as zero.
    pub fn corpus<'a, I>(&self, pairs: I) -> Result<f64>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut total = 0.0;
        let mut n = 0usize;
        for (hyp, reference) in pairs {
            total += self.score(hyp, reference).score;
            n += 1;
        }
        if n == 0 {
            return Err(Error::InvalidInput(
                "cannot average METEOR over zero pairs".into(),
            ));
        }
        Ok(total / n as f64)
    }
}

/// Closed-form score given alignment statistics.
pub fn score_from_counts(
    params: &MeteorParams,
    matches: usize,
    chunks: usize,
    hyp_len: usize,
    ref_len: usize,
) -> MeteorScore {
    if matches == 0 || hyp_len == 0 || ref_len == 0 {
        return MeteorScore::default();
    }
    let m = matches as f64;
    let precision = m / hyp_len as f64;
    let recall = m / ref_len as f64;
    let fmean = precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let penalty = params.gamma * (chunks as f64 / m).powf(params.beta);
    MeteorScore {
        precision,
        recall,
        fmean,
        penalty,
        score: fmean * (1.0 - penalty),
        matches,
        chunks,
    }
}

fn is_punctuation(c: char) -> bool {
    get_general_category(c).abbreviation().starts_with('P')
}

fn simple_fold(c: char) -> char {
    unicode_case_mapping::case_folded(c)
        .and_then(|cp| char::from_u32(cp.get()))
        .unwrap_or(c)
}

fn tokenize(text: &str, casefold: bool) -> Vec<String> {
    let stripped: String = text
        .chars()
        .filter(|&c| !is_punctuation(c))
        .map(|c| if casefold { simple_fold(c) } else { c })
        .collect();
    stripped.split_whitespace().map(str::to_string).collect()
}

/// Drops every Unicode punctuation character (general category `P*`),
/// applies simple case folding, and splits on whitespace.
pub fn normalize_for_scoring(text: &str) -> Vec<String> {
    tokenize(text, true)
}

pub fn align(hyp: &[String], reference: &[String], params: &MeteorParams) -> Alignment {
    Meteor {
        params: params.clone(),
        stemmer: None,
        synonyms: None,
    }
    .align(hyp, reference)
}

pub fn meteor_single(hyp_text: &str, ref_text: &str, params: &MeteorParams) -> MeteorScore {
    Meteor {
        params: params.clone(),
        stemmer: None,
        synonyms: None,
    }
    .score(hyp_text, ref_text)
}

pub fn corpus_meteor<'a, I>(pairs: I, params: &MeteorParams) -> Result<f64>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    Meteor::new(params.clone())?.corpus(pairs)
}
