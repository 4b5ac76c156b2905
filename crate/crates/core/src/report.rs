//! Per-language scoring, leaderboard tables and the fine-tuning grid.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Language, Record, Setting};
use crate::error::{Error, Result};
use crate::meteor::Meteor;

/// One model output. Extra keys in a JSONL line are ignored, so rows written
/// as full records also parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub language: Language,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageResult {
    pub language: Language,
    pub setting: Setting,
    pub strategy_label: String,
    pub model_label: String,
    pub avg_meteor: f64,
    pub n_scored: usize,
    /// References with no prediction; each scored as an empty output.
    #[serde(default)]
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub results: Vec<LanguageResult>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunLabels {
    pub strategy: String,
    pub model: String,
}

/// Joins predictions to references on (language, id) and averages sentence
/// METEOR per language. Languages appear in code order.
pub fn score_run(
    predictions: &[Prediction],
    references: &[Record],
    meteor: &Meteor,
    labels: &RunLabels,
) -> Result<ScoreReport> {
    let mut by_key: HashMap<(Language, &str), &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_key
            .insert((p.language, p.id.as_str()), p.prediction.as_str())
            .is_some()
        {
            return Err(Error::InvalidInput(format!(
                "duplicate prediction for {}/{}",
                p.language, p.id
            )));
        }
    }
    let mut ref_keys = HashSet::with_capacity(references.len());
    for r in references {
        if !ref_keys.insert((r.language, r.id.as_str())) {
            return Err(Error::InvalidInput(format!(
                "duplicate reference {}/{}",
                r.language, r.id
            )));
        }
    }
    let mut orphans: Vec<String> = predictions
        .iter()
        .filter(|p| !ref_keys.contains(&(p.language, p.id.as_str())))
        .map(|p| format!("{}/{}", p.language, p.id))
        .collect();
    if !orphans.is_empty() {
        orphans.sort();
        let shown = orphans
            .iter()
            .take(20)
            .cloned()
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::InvalidInput(format!(
            "{} predictions match no reference: {shown}{}",
            orphans.len(),
            if orphans.len() > 20 { ", ..." } else { "" }
        )));
    }

    let mut groups: BTreeMap<Language, Vec<(&str, &str)>> = BTreeMap::new();
    let mut missing: BTreeMap<Language, usize> = BTreeMap::new();
    for r in references {
        let claim = r
            .reference_claim
            .as_deref()
            .ok_or_else(|| Error::MissingField {
                id: r.id.clone(),
                field: "normalized_claim",
            })?;
        let hyp = match by_key.get(&(r.language, r.id.as_str())) {
            Some(p) => *p,
            None => {
                *missing.entry(r.language).or_default() += 1;
                ""
            }
        };
        groups.entry(r.language).or_default().push((hyp, claim));
    }

    let mut warnings = Vec::new();
    let mut results = Vec::with_capacity(groups.len());
    for (language, pairs) in groups {
        let n_missing = missing.get(&language).copied().unwrap_or(0);
        if n_missing > 0 {
            warnings.push(format!(
                "{language}: {n_missing} references have no prediction; scored as 0"
            ));
        }
        results.push(LanguageResult {
            language,
            setting: language.setting(),
            strategy_label: labels.strategy.clone(),
            model_label: labels.model.clone(),
            avg_meteor: meteor.corpus(pairs.iter().copied())?,
            n_scored: pairs.len(),
            n_missing,
        });
    }
    Ok(ScoreReport { results, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Tsv,
    Json,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(TableFormat::Tsv),
            "json" => Ok(TableFormat::Json),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(Error::InvalidInput(format!("unknown table format `{s}`"))),
        }
    }
}

fn setting_rank(s: Setting) -> u8 {
    match s {
        Setting::Monolingual => 0,
        Setting::ZeroShot => 1,
    }
}

/// Monolingual rows first, then zero-shot; best score first within each.
pub fn leaderboard_order(results: &[LanguageResult]) -> Vec<LanguageResult> {
    let mut rows = results.to_vec();
    rows.sort_by(|a, b| {
        setting_rank(a.setting)
            .cmp(&setting_rank(b.setting))
            .then(b.avg_meteor.total_cmp(&a.avg_meteor))
            .then(a.language.cmp(&b.language))
    });
    rows
}

fn cell(s: &str, sep: char) -> String {
    s.chars()
        .map(|c| {
            if c == sep || c == '\n' || c == '\r' {
                ' '
            } else {
                c
            }
        })
        .collect()
}

const COLUMNS: [&str; 6] = [
    "setting",
    "language",
    "strategy",
    "model",
    "avg_meteor",
    "n",
];

pub fn leaderboard_table(results: &[LanguageResult], format: TableFormat) -> Result<String> {
    let rows = leaderboard_order(results);
    let fields = |r: &LanguageResult, sep: char| {
        [
            r.setting.to_string(),
            r.language.english_name().to_string(),
            cell(&r.strategy_label, sep),
            cell(&r.model_label, sep),
            format!("{:.4}", r.avg_meteor),
            r.n_scored.to_string(),
        ]
    };
    Ok(match format {
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(&rows)?;
            s.push('\n');
            s
        }
        TableFormat::Tsv => {
            let mut out = COLUMNS.join("\t");
            out.push('\n');
            for r in &rows {
                out.push_str(&fields(r, '\t').join("\t"));
                out.push('\n');
            }
            out
        }
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n", COLUMNS.join(" | "));
            out.push_str("|---|---|---|---|---:|---:|\n");
            for r in &rows {
                out.push_str(&format!("| {} |\n", fields(r, '|').join(" | ")));
            }
            out
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMaxLength {
    #[serde(rename = "fixed_128")]
    Fixed128,
    /// Longest target in the batch plus two tokens.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adafactor,
    Adamw,
}

impl GenerationMaxLength {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMaxLength::Fixed128 => "fixed_128",
            GenerationMaxLength::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for GenerationMaxLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Adafactor => "adafactor",
            Optimizer::Adamw => "adamw",
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HparamConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub warmup_steps: u32,
    pub effective_batch_size: u32,
    pub generation_max_length: GenerationMaxLength,
    pub optimizer: Optimizer,
    pub num_beams: u32,
}

pub const GRID_EPOCHS: [u32; 4] = [3, 5, 10, 20];
pub const GRID_LEARNING_RATES: [f64; 3] = [3e-3, 1e-3, 5e-4];
pub const GRID_MAX_LENGTHS: [GenerationMaxLength; 2] =
    [GenerationMaxLength::Fixed128, GenerationMaxLength::Dynamic];
pub const GRID_OPTIMIZERS: [Optimizer; 2] = [Optimizer::Adafactor, Optimizer::Adamw];
pub const WARMUP_STEPS: u32 = 90;
pub const EFFECTIVE_BATCH_SIZE: u32 = 32;
pub const NUM_BEAMS: u32 = 15;

/// Cartesian product of the varied settings, epochs outermost.
pub fn emit_hparam_grid() -> Vec<HparamConfig> {
    let mut grid = Vec::with_capacity(48);
    for epochs in GRID_EPOCHS {
        for learning_rate in GRID_LEARNING_RATES {
            for generation_max_length in GRID_MAX_LENGTHS {
                for optimizer in GRID_OPTIMIZERS {
                    grid.push(HparamConfig {
                        epochs,
                        learning_rate,
                        warmup_steps: WARMUP_STEPS,
                        effective_batch_size: EFFECTIVE_BATCH_SIZE,
                        generation_max_length,
                        optimizer,
                        num_beams: NUM_BEAMS,
                    });
                }
            }
        }
    }
    grid
}

impl fmt::Display for HparamConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epochs={} lr={} len={} opt={}",
            self.epochs, self.learning_rate, self.generation_max_length, self.optimizer
        )
    }
}
