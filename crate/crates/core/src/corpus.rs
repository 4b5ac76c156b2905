//! Records, dataset I/O and descriptive statistics for the task corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a language ships with training data or only a test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Monolingual,
    ZeroShot,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Monolingual => "monolingual",
            Setting::ZeroShot => "zero_shot",
        })
    }
}

macro_rules! languages {
    ($( $variant:ident => $code:literal, $name:literal, $setting:ident; )*) => {
        /// One of the twenty task languages, identified by its ISO-639-1 code.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Language {
            $( $variant, )*
        }

        impl Language {
            pub const ALL: &'static [Language] = &[$( Language::$variant, )*];

            pub fn code(self) -> &'static str {
                match self {
                    $( Language::$variant => $code, )*
                }
            }

            pub fn english_name(self) -> &'static str {
                match self {
                    $( Language::$variant => $name, )*
                }
            }

            pub fn setting(self) -> Setting {
                match self {
                    $( Language::$variant => Setting::$setting, )*
                }
            }
        }

        impl FromStr for Language {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $( $code => Ok(Language::$variant), )*
                    _ => Err(Error::UnknownLanguage(s.to_string())),
                }
            }
        }
    };
}

languages! {
    Ar => "ar", "Arabic", Monolingual;
    En => "en", "English", Monolingual;
    Fr => "fr", "French", Monolingual;
    De => "de", "German", Monolingual;
    Hi => "hi", "Hindi", Monolingual;
    Id => "id", "Indonesian", Monolingual;
    Mr => "mr", "Marathi", Monolingual;
    Pl => "pl", "Polish", Monolingual;
    Pt => "pt", "Portuguese", Monolingual;
    Pa => "pa", "Punjabi", Monolingual;
    Es => "es", "Spanish", Monolingual;
    Ta => "ta", "Tamil", Monolingual;
    Th => "th", "Thai", Monolingual;
    Bn => "bn", "Bengali", ZeroShot;
    Cs => "cs", "Czech", ZeroShot;
    Nl => "nl", "Dutch", ZeroShot;
    El => "el", "Greek", ZeroShot;
    Ko => "ko", "Korean", ZeroShot;
    Ro => "ro", "Romanian", ZeroShot;
    Te => "te", "Telugu", ZeroShot;
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for Language {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    /// Retention priority when the same post shows up in several splits.
    pub fn retention_priority(self) -> u8 {
        match self {
            Split::Test => 2,
            Split::Dev => 1,
            Split::Train => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}

/// A single example. Serialized as one JSONL line; absent fields are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub language: Language,
    pub split: Split,
    #[serde(rename = "post")]
    pub raw_post: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleaned_post: Option<String>,
    #[serde(
        rename = "normalized_claim",
        alias = "normalized claim",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub reference_claim: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
}

impl Record {
    pub fn new(
        id: impl Into<String>,
        language: Language,
        split: Split,
        raw_post: impl Into<String>,
    ) -> Self {
        Record {
            id: id.into(),
            language,
            split,
            raw_post: raw_post.into(),
            cleaned_post: None,
            reference_claim: None,
            prediction: None,
        }
    }

    pub fn with_claim(mut self, claim: impl Into<String>) -> Self {
        self.reference_claim = Some(claim.into());
        self
    }

    /// The cleaned post when available, otherwise the raw post.
    pub fn post(&self) -> &str {
        self.cleaned_post.as_deref().unwrap_or(&self.raw_post)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("record id must be non-empty".into()));
        }
        if self.raw_post.is_empty() {
            return Err(Error::MissingField {
                id: self.id.clone(),
                field: "post",
            });
        }
        if self.language.setting() == Setting::ZeroShot && self.split != Split::Test {
            return Err(Error::InvalidInput(format!(
                "record `{}`: zero-shot language {} only has a test split, got {}",
                self.id, self.language, self.split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(CorpusFormat::Csv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::InvalidInput(format!(
                "unknown corpus format `{other}`"
            ))),
        }
    }
}

/// Column names used when ingesting CSV releases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvColumns {
    pub post: String,
    pub claim: String,
    pub id: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            post: "post".into(),
            claim: "normalized claim".into(),
            id: "id".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonlRow {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    language: Option<Language>,
    #[serde(default)]
    split: Option<Split>,
    post: String,
    #[serde(default)]
    cleaned_post: Option<String>,
    #[serde(rename = "normalized_claim", alias = "normalized claim", default)]
    reference_claim: Option<String>,
    #[serde(default)]
    prediction: Option<String>,
}

fn default_id(language: Language, split: Split, row: usize) -> String {
    format!("{language}-{split}-{row}")
}

/// Loads one language/split file. Ids default to `<language>-<split>-<row>`.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    language: Language,
    split: Split,
) -> Result<Vec<Record>> {
    load_corpus_with(path, format, language, split, &CsvColumns::default())
}

pub fn load_corpus_with(
    path: &Path,
    format: CorpusFormat,
    language: Language,
    split: Split,
    columns: &CsvColumns,
) -> Result<Vec<Record>> {
    let records = match format {
        CorpusFormat::Csv => read_csv(path, language, split, columns)?,
        CorpusFormat::Jsonl => read_jsonl_rows(path, Some((language, split)))?,
    };
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(records)
}

fn read_csv(
    path: &Path,
    language: Language,
    split: Split,
    columns: &CsvColumns,
) -> Result<Vec<Record>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: e.to_string(),
            })
        }
    };
    if headers.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let post_col = find(&columns.post).ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        message: format!("missing `{}` column", columns.post),
    })?;
    let claim_col = find(&columns.claim);
    let id_col = find(&columns.id);

    let mut out = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let line = row + 2;
        let rec = result.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(line),
            message: e.to_string(),
        })?;
        let post = rec.get(post_col).unwrap_or_default();
        if post.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: "empty post".into(),
            });
        }
        let id = id_col
            .and_then(|c| rec.get(c))
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| default_id(language, split, row));
        let mut record = Record::new(id, language, split, post);
        record.reference_claim = claim_col.and_then(|c| rec.get(c)).map(str::to_string);
        record.validate().map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn read_jsonl_rows(path: &Path, fallback: Option<(Language, Split)>) -> Result<Vec<Record>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut row = 0usize;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line: line_no,
            message,
        };
        let parsed: JsonlRow = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let (language, split) = match (parsed.language, parsed.split, fallback) {
            (Some(l), Some(s), _) => (l, s),
            (l, s, Some((fl, fs))) => (l.unwrap_or(fl), s.unwrap_or(fs)),
            _ => return Err(parse_err("missing `language`/`split` keys".into())),
        };
        let id = parsed
            .id
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| default_id(language, split, row));
        let record = Record {
            id,
            language,
            split,
            raw_post: parsed.post,
            cleaned_post: parsed.cleaned_post,
            reference_claim: parsed.reference_claim,
            prediction: parsed.prediction,
        };
        record.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(record);
        row += 1;
    }
    Ok(out)
}

/// Reads the canonical JSONL interchange format; every line carries its
/// own `language` and `split`.
pub fn read_jsonl(path: &Path) -> Result<Vec<Record>> {
    let records = read_jsonl_rows(path, None)?;
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(records)
}

/// Reads one `T` per non-blank line; parse errors name the line.
pub fn read_jsonl_as<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    RawPost,
    CleanedPost,
    ReferenceClaim,
}

impl TextField {
    fn name(self) -> &'static str {
        match self {
            TextField::RawPost => "post",
            TextField::CleanedPost => "cleaned_post",
            TextField::ReferenceClaim => "normalized_claim",
        }
    }

    fn get(self, record: &Record) -> Option<&str> {
        match self {
            TextField::RawPost => Some(&record.raw_post),
            TextField::CleanedPost => record.cleaned_post.as_deref(),
            TextField::ReferenceClaim => record.reference_claim.as_deref(),
        }
    }
}

impl FromStr for TextField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw_post" | "post" => Ok(TextField::RawPost),
            "cleaned_post" => Ok(TextField::CleanedPost),
            "reference_claim" | "normalized_claim" => Ok(TextField::ReferenceClaim),
            other => Err(Error::InvalidInput(format!("unknown field `{other}`"))),
        }
    }
}

pub const HISTOGRAM_BIN_WIDTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n: usize,
    pub mean_words: f64,
    /// Population standard deviation.
    pub std_words: f64,
    pub min_words: usize,
    pub max_words: usize,
    /// `(bin lower bound, frequency)` for contiguous 10-word bins from 0.
    pub histogram: Vec<(usize, usize)>,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn word_count_stats(records: &[Record], field: TextField) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts = records
        .iter()
        .map(|r| {
            field
                .get(r)
                .map(word_count)
                .ok_or_else(|| Error::MissingField {
                    id: r.id.clone(),
                    field: field.name(),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = counts.len();
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let min = *counts.iter().min().expect("non-empty");
    let max = *counts.iter().max().expect("non-empty");

    let mut histogram: Vec<(usize, usize)> = (0..=max / HISTOGRAM_BIN_WIDTH)
        .map(|b| (b * HISTOGRAM_BIN_WIDTH, 0))
        .collect();
    for &c in &counts {
        histogram[c / HISTOGRAM_BIN_WIDTH].1 += 1;
    }

    Ok(CorpusStats {
        n,
        mean_words: mean,
        std_words: var.sqrt(),
        min_words: min,
        max_words: max,
        histogram,
    })
}

/// Record counts per `(language, split)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitCounts(BTreeMap<(Language, Split), usize>);

impl SplitCounts {
    pub fn get(&self, language: Language, split: Split) -> usize {
        self.0.get(&(language, split)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Language, Split, usize)> + '_ {
        self.0.iter().map(|(&(l, s), &c)| (l, s, c))
    }

    pub fn contains(&self, language: Language, split: Split) -> bool {
        self.0.contains_key(&(language, split))
    }
}

pub fn split_counts(records: &[Record]) -> SplitCounts {
    let mut map = BTreeMap::new();
    for r in records {
        *map.entry((r.language, r.split)).or_insert(0) += 1;
    }
    SplitCounts(map)
}
