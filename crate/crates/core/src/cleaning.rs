//! Placeholder removal, repetition condensation, and cross-split deduplication.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Language, Record, Split};
use crate::error::{Error, Result};

const PLACEHOLDER: &str = "None";

/// How the repetition check treats a trailing remainder that is shorter than
/// one period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepetitionMode {
    /// The repeated unit must cover every token of the post.
    #[default]
    FullCoverage,
    /// Literal pseudocode behavior: only the prefix `s * floor(n / s)` is
    /// compared and any remainder is dropped. Unrepeated posts are returned
    /// without re-joining their tokens.
    PrefixOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub record_id: String,
    pub trailing_placeholder_removed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetition_period_tokens: Option<usize>,
    pub tokens_before: usize,
    pub tokens_after: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Removes one trailing `None` placeholder when it stands as its own word.
pub fn strip_trailing_placeholder(text: &str) -> String {
    strip_placeholder_inner(text).unwrap_or_else(|| text.to_string())
}

fn strip_placeholder_inner(text: &str) -> Option<String> {
    let trimmed = text.trim_end();
    let head = trimmed.strip_suffix(PLACEHOLDER)?;
    if head.chars().next_back().is_some_and(is_word_char) {
        return None;
    }
    Some(head.trim_end().to_string())
}

/// Collapses a post made of `r >= 2` copies of its smallest repeating token
/// unit down to a single copy.
pub fn condense_repetition(text: &str) -> (String, Option<usize>) {
    condense_repetition_with(text, RepetitionMode::FullCoverage)
}

pub fn condense_repetition_with(text: &str, mode: RepetitionMode) -> (String, Option<usize>) {
    let words: Vec<&str> = text.split_whitespace().collect();
    match smallest_period(&words, mode) {
        Some(s) => (words[..s].join(" "), Some(s)),
        None => match mode {
            RepetitionMode::FullCoverage => (words.join(" "), None),
            RepetitionMode::PrefixOnly => (text.to_string(), None),
        },
    }
}

fn smallest_period(words: &[&str], mode: RepetitionMode) -> Option<usize> {
    let n = words.len();
    (1..=n / 2).find(|&s| {
        let repeats = n / s;
        if mode == RepetitionMode::FullCoverage && repeats * s != n {
            return false;
        }
        (s..repeats * s).all(|i| words[i] == words[i % s])
    })
}

pub fn clean_post(text: &str) -> (String, CleaningReport) {
    clean_post_with(text, RepetitionMode::FullCoverage)
}

/// `FullCoverage` repeats strip-then-condense until nothing changes, so a
/// unit that itself ends in `None` cannot survive a second call.
/// `PrefixOnly` runs a single pass. The reported period is the first one found.
pub fn clean_post_with(text: &str, mode: RepetitionMode) -> (String, CleaningReport) {
    let mut placeholder_removed = false;
    let mut first_period = None;
    let mut current = text.to_string();
    loop {
        let stripped = strip_placeholder_inner(&current);
        placeholder_removed |= stripped.is_some();
        let (cleaned, period) =
            condense_repetition_with(stripped.as_deref().unwrap_or(&current), mode);
        first_period = first_period.or(period);
        let changed = stripped.is_some() || period.is_some();
        current = cleaned;
        if !changed || mode == RepetitionMode::PrefixOnly {
            break;
        }
    }
    let cleaned = current;
    let report = CleaningReport {
        record_id: String::new(),
        trailing_placeholder_removed: placeholder_removed,
        repetition_period_tokens: first_period,
        tokens_before: text.split_whitespace().count(),
        tokens_after: cleaned.split_whitespace().count(),
    };
    (cleaned, report)
}

/// Cleans every record in place, filling `cleaned_post`.
pub fn clean_records(records: &mut [Record], mode: RepetitionMode) -> Vec<CleaningReport> {
    records
        .iter_mut()
        .map(|r| {
            let (cleaned, mut report) = clean_post_with(&r.raw_post, mode);
            report.record_id = r.id.clone();
            r.cleaned_post = Some(cleaned);
            report
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordRef {
    pub language: Language,
    pub split: Split,
    pub record_id: String,
}

impl From<&Record> for RecordRef {
    fn from(r: &Record) -> Self {
        RecordRef {
            language: r.language,
            split: r.split,
            record_id: r.id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub key: String,
    pub kept: RecordRef,
    pub removed: Vec<RecordRef>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DedupOptions {
    /// Also drop repeats inside the surviving split, keeping the first.
    pub within_split: bool,
}

/// NFC-normalized text with whitespace runs collapsed to single spaces.
pub fn dedup_key(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes cross-split duplicates within each language, keeping the copy in
/// the highest-priority split (test > dev > train). Survivors keep input order.
pub fn dedupe_cross_split(
    records: &[Record],
    options: DedupOptions,
) -> Result<(Vec<Record>, Vec<DedupReport>)> {
    let mut groups: HashMap<(Language, String), Vec<usize>> = HashMap::new();
    let mut group_order = Vec::new();
    for (idx, r) in records.iter().enumerate() {
        let cleaned = r
            .cleaned_post
            .as_deref()
            .ok_or_else(|| Error::MissingField {
                id: r.id.clone(),
                field: "cleaned_post",
            })?;
        let key = (r.language, dedup_key(cleaned));
        let members = groups.entry(key.clone()).or_default();
        if members.is_empty() {
            group_order.push(key);
        }
        members.push(idx);
    }

    let mut removed = vec![false; records.len()];
    let mut reports = Vec::new();
    for key in group_order {
        let members = &groups[&key];
        let splits: BTreeSet<Split> = members.iter().map(|&i| records[i].split).collect();
        let best = *splits
            .iter()
            .max_by_key(|s| s.retention_priority())
            .expect("group is non-empty");
        let mut kept = None;
        let mut dropped = Vec::new();
        for &i in members {
            let r = &records[i];
            let drop = r.split != best || (options.within_split && kept.is_some());
            if drop {
                removed[i] = true;
                dropped.push(RecordRef::from(r));
            } else if kept.is_none() {
                kept = Some(RecordRef::from(r));
            }
        }
        if !dropped.is_empty() {
            reports.push(DedupReport {
                key: key.1,
                kept: kept.expect("highest-priority split always keeps a record"),
                removed: dropped,
            });
        }
    }

    let survivors = records
        .iter()
        .zip(&removed)
        .filter(|(_, &gone)| !gone)
        .map(|(r, _)| r.clone())
        .collect();
    Ok((survivors, reports))
}
