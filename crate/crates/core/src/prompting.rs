//! Zero-shot prompt templates and few-shot prompt assembly.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};

/// Answer cue used for few-shot shots when the template carries none.
pub const DEFAULT_ANSWER_CUE: &str = "Normalized statement:";
pub const KNOWN_PLACEHOLDERS: [&str; 2] = ["{original_post}", "{post_text}"];

macro_rules! bundled {
    ($($code:literal),* $(,)?) => {
        fn bundled_text(code: &str) -> Option<&'static str> {
            match code {
                $( $code => Some(include_str!(concat!("../prompts/", $code, ".txt"))), )*
                _ => None,
            }
        }
    };
}

bundled!(
    "ar", "bn", "cs", "de", "el", "en", "es", "fr", "hi", "id", "ko", "mr", "nl", "pa", "pl", "pt",
    "ro", "ta", "te", "th",
);

const MANIFEST: &str = include_str!("../prompts/manifest.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Transcribed verbatim from an existing prompt.
    Transcribed,
    /// Translated from the English template.
    Translated,
    /// Loaded from a user-supplied file.
    User,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    provenance: Provenance,
    placeholder: String,
}

fn manifest() -> &'static BTreeMap<String, ManifestEntry> {
    static M: OnceLock<BTreeMap<String, ManifestEntry>> = OnceLock::new();
    M.get_or_init(|| toml::from_str(MANIFEST).expect("bundled prompt manifest is valid TOML"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    language: Language,
    text: String,
    placeholder: String,
    provenance: Provenance,
    // byte offsets into `text`
    line_start: usize,
    slot: usize,
    line_end: usize,
}

impl PromptTemplate {
    /// Builds a template; `placeholder` must occur exactly once in `text`.
    pub fn new(
        language: Language,
        text: impl Into<String>,
        placeholder: &str,
        provenance: Provenance,
    ) -> Result<Self> {
        let text = text.into();
        if placeholder.is_empty() {
            return Err(Error::InvalidInput("empty placeholder".into()));
        }
        let slot = text.find(placeholder).ok_or_else(|| {
            Error::InvalidInput(format!(
                "template for {language} has no {placeholder} placeholder"
            ))
        })?;
        if text[slot + placeholder.len()..].contains(placeholder) {
            return Err(Error::InvalidInput(format!(
                "template for {language} contains {placeholder} more than once"
            )));
        }
        let line_start = text[..slot].rfind('\n').map_or(0, |i| i + 1);
        let after = slot + placeholder.len();
        let line_end = text[after..].find('\n').map_or(text.len(), |i| after + i);
        Ok(PromptTemplate {
            language,
            text,
            placeholder: placeholder.to_string(),
            provenance,
            line_start,
            slot,
            line_end,
        })
    }

    /// The template shipped with the crate for `language`.
    pub fn bundled(language: Language) -> Result<Self> {
        let code = language.code();
        let (text, entry) = bundled_text(code)
            .zip(manifest().get(code))
            .ok_or_else(|| Error::InvalidInput(format!("no bundled template for {language}")))?;
        Self::new(language, text, &entry.placeholder, entry.provenance)
    }

    /// Reads `<dir>/<lang>.txt`, detecting which known placeholder it uses.
    pub fn from_dir(dir: &Path, language: Language) -> Result<Self> {
        let path = dir.join(format!("{}.txt", language.code()));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let placeholder = KNOWN_PLACEHOLDERS
            .into_iter()
            .find(|p| text.contains(p))
            .ok_or_else(|| {
                Error::InvalidInput(format!("{} contains no known placeholder", path.display()))
            })?;
        Self::new(language, text, placeholder, Provenance::User)
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn placeholder(&self) -> &str {
        &self.placeholder
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Everything before the line that holds the placeholder.
    pub fn instruction(&self) -> &str {
        self.text[..self.line_start].trim_end_matches('\n')
    }

    /// Text preceding the placeholder on its line, e.g. `"Post: "`.
    pub fn post_label(&self) -> &str {
        &self.text[self.line_start..self.slot]
    }

    /// Lines after the placeholder line, if any.
    pub fn answer_cue(&self) -> Option<&str> {
        let rest = self.text[self.line_end..].trim_start_matches('\n');
        (!rest.is_empty()).then_some(rest)
    }

    fn post_line_suffix(&self) -> &str {
        &self.text[self.slot + self.placeholder.len()..self.line_end]
    }

    /// Substitutes `post` for the placeholder, leaving every other byte as is.
    pub fn render_zero_shot(&self, post: &str) -> Result<String> {
        if post.is_empty() {
            return Err(Error::InvalidInput("cannot render an empty post".into()));
        }
        let mut out = String::with_capacity(self.text.len() + post.len());
        out.push_str(&self.text[..self.slot]);
        out.push_str(post);
        out.push_str(&self.text[self.slot + self.placeholder.len()..]);
        Ok(out)
    }

    /// Instruction, then one labelled post/claim pair per shot, then the
    /// target post and the answer cue. Blocks are separated by blank lines.
    pub fn render_few_shot<S: AsRef<str>>(
        &self,
        shots: &[(S, S)],
        target_post: &str,
    ) -> Result<String> {
        if shots.is_empty() {
            return Err(Error::InvalidInput(
                "few-shot rendering needs at least one shot".into(),
            ));
        }
        if target_post.is_empty() {
            return Err(Error::InvalidInput("cannot render an empty post".into()));
        }
        let cue = self.answer_cue().unwrap_or(DEFAULT_ANSWER_CUE);
        let label = self.post_label();
        let suffix = self.post_line_suffix();
        let mut blocks = Vec::with_capacity(shots.len() + 2);
        if !self.instruction().is_empty() {
            blocks.push(self.instruction().to_string());
        }
        for (post, claim) in shots {
            blocks.push(format!(
                "{label}{}{suffix}\n{cue} {}",
                post.as_ref(),
                claim.as_ref()
            ));
        }
        blocks.push(format!("{label}{target_post}{suffix}\n{cue}"));
        Ok(blocks.join("\n\n"))
    }
}
