//! Annotated corpora: tokens, utterances, context annotation and primed
//! relabeling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::align::Verdict;
use crate::error::{Error, Result};
use crate::frontend::{load_features, FeatureSequence};
use crate::label::{Label, CONTEXT_CLASSES};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Ground-truth realization quality, written only by the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realization {
    Clean,
    Degraded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub label: Label,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub realization: Option<Realization>,
}

impl Token {
    pub fn new(label: Label, start: usize, end: usize) -> Self {
        Token {
            label,
            start,
            end,
            realization: None,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: Arc<FeatureSequence>,
    pub tokens: Vec<Token>,
}

impl Utterance {
    pub fn labels(&self) -> Vec<Label> {
        self.tokens.iter().map(|t| t.label.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationMode {
    Plain,
    Contextual,
}

/// Which consonants carry a context class and how following vowels map to
/// classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMap {
    /// Consonants annotated by their right context.
    pub bearing: BTreeSet<String>,
    /// Symbols treated as vowels when they follow a bearing consonant.
    pub vowels: BTreeSet<String>,
    /// Vowel symbol to class 1..=6.
    pub classes: BTreeMap<String, u8>,
    /// Class used when the successor is not a vowel or is absent.
    pub fallback: u8,
}

impl Default for ContextMap {
    /// Unvoiced stops and fricatives; French vowels split by place,
    /// rounding, aperture and nasality.
    fn default() -> Self {
        let groups: [(u8, &[&str]); 6] = [
            (1, &["i", "e", "ɛ"]),
            (2, &["y", "ø", "œ", "ə"]),
            (3, &["a", "ɑ"]),
            (4, &["u", "o", "ɔ"]),
            (5, &["ɛ̃", "œ̃"]),
            (6, &["ɑ̃", "ɔ̃"]),
        ];
        let classes: BTreeMap<String, u8> = groups
            .iter()
            .flat_map(|(class, vowels)| vowels.iter().map(move |v| (v.to_string(), *class)))
            .collect();
        ContextMap {
            bearing: ["p", "t", "k", "f", "s", "ʃ"].iter().map(|s| s.to_string()).collect(),
            vowels: classes.keys().cloned().collect(),
            classes,
            fallback: CONTEXT_CLASSES,
        }
    }
}

impl ContextMap {
    pub fn validate(&self) -> Result<()> {
        let valid = 1..=CONTEXT_CLASSES;
        if !valid.contains(&self.fallback) {
            return Err(Error::Config(format!("fallback class {} outside 1..=6", self.fallback)));
        }
        if let Some((v, c)) = self.classes.iter().find(|(_, c)| !valid.contains(c)) {
            return Err(Error::Config(format!("vowel {v} mapped to class {c} outside 1..=6")));
        }
        if let Some(v) = self.classes.keys().find(|v| !self.vowels.contains(*v)) {
            return Err(Error::Config(format!(
                "{v} has a context class but is not listed as a vowel"
            )));
        }
        if let Some(b) = self.bearing.iter().find(|b| self.vowels.contains(*b)) {
            return Err(Error::Config(format!(
                "{b} is both a vowel and a context-bearing consonant"
            )));
        }
        Ok(())
    }

    pub fn is_vowel(&self, base: &str) -> bool {
        self.vowels.contains(base)
    }

    pub fn is_bearing(&self, base: &str) -> bool {
        self.bearing.contains(base)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    inventory: BTreeSet<String>,
    mode: AnnotationMode,
    context_map: ContextMap,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>, mode: AnnotationMode, context_map: ContextMap) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        context_map.validate()?;
        let dim = utterances[0].features.dim();
        let mut ids = BTreeSet::new();
        for utt in &utterances {
            if !ids.insert(utt.id.as_str()) {
                return Err(Error::InvalidCorpus(format!("duplicate utterance id {}", utt.id)));
            }
            if utt.features.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: utt.features.dim(),
                });
            }
            validate_tokens(utt, mode, &context_map)?;
        }
        let inventory = utterances
            .iter()
            .flat_map(|u| u.tokens.iter().map(|t| t.label.base().to_string()))
            .collect();
        Ok(Corpus {
            utterances,
            inventory,
            mode,
            context_map,
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn inventory(&self) -> &BTreeSet<String> {
        &self.inventory
    }

    pub fn mode(&self) -> AnnotationMode {
        self.mode
    }

    pub fn context_map(&self) -> &ContextMap {
        &self.context_map
    }

    pub fn dim(&self) -> usize {
        self.utterances[0].features.dim()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> + '_ {
        self.utterances.iter().flat_map(|u| u.tokens.iter())
    }

    pub fn token_count(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }

    /// Distinct token labels in canonical order.
    pub fn label_inventory(&self) -> BTreeSet<Label> {
        self.tokens().map(|t| t.label.clone()).collect()
    }

    /// Label count implied by the inventory and annotation mode: each
    /// context-bearing consonant present expands to six contextual labels.
    pub fn effective_label_count(&self) -> usize {
        let n = self.inventory.len();
        match self.mode {
            AnnotationMode::Plain => n,
            AnnotationMode::Contextual => {
                let bearing = self.inventory.iter().filter(|b| self.context_map.is_bearing(b)).count();
                n - bearing + bearing * usize::from(CONTEXT_CLASSES)
            }
        }
    }

    /// Annotates context-bearing consonants with the class of the following
    /// vowel, or the fallback class when no vowel follows.
    pub fn contextualize(&self) -> Result<Corpus> {
        if self.mode == AnnotationMode::Contextual {
            return Err(Error::InvalidCorpus("corpus is already contextual".into()));
        }
        self.contextualize_with(&self.context_map)
    }

    pub fn contextualize_with(&self, map: &ContextMap) -> Result<Corpus> {
        if self.mode == AnnotationMode::Contextual {
            return Err(Error::InvalidCorpus("corpus is already contextual".into()));
        }
        map.validate()?;
        if let Some(v) = self
            .inventory
            .iter()
            .find(|b| map.is_vowel(b) && !map.classes.contains_key(*b))
        {
            return Err(Error::Config(format!("vowel {v} has no context class")));
        }
        let mut utterances = self.utterances.clone();
        for utt in &mut utterances {
            let successors: Vec<Option<String>> = (0..utt.tokens.len())
                .map(|i| utt.tokens.get(i + 1).map(|t| t.label.base().to_string()))
                .collect();
            for (token, next) in utt.tokens.iter_mut().zip(successors) {
                if !map.is_bearing(token.label.base()) {
                    continue;
                }
                let class = next
                    .as_deref()
                    .and_then(|base| map.classes.get(base).copied())
                    .unwrap_or(map.fallback);
                let mut label = Label::new(token.label.base()).with_context(class);
                if token.label.is_primed() {
                    label = label.primed();
                }
                token.label = label;
            }
        }
        Corpus::new(utterances, AnnotationMode::Contextual, map.clone())
    }

    /// Primes every unprimed token whose verdict is wrong. `verdicts` is
    /// indexed like the corpus and must hold `Some` exactly for unprimed
    /// tokens. Returns the new corpus and the number of tokens primed.
    pub fn relabel_primed(&self, verdicts: &[Vec<Option<Verdict>>]) -> Result<(Corpus, usize)> {
        if verdicts.len() != self.utterances.len() {
            return Err(Error::InvalidCorpus(format!(
                "verdicts cover {} utterances, corpus has {}",
                verdicts.len(),
                self.utterances.len()
            )));
        }
        let mut utterances = self.utterances.clone();
        let mut primed = 0;
        for (utt, row) in utterances.iter_mut().zip(verdicts) {
            if row.len() != utt.tokens.len() {
                return Err(Error::InvalidCorpus(format!(
                    "utterance {}: {} verdicts for {} tokens",
                    utt.id,
                    row.len(),
                    utt.tokens.len()
                )));
            }
            for (i, (token, verdict)) in utt.tokens.iter_mut().zip(row).enumerate() {
                match (token.label.is_primed(), verdict) {
                    (true, Some(_)) => {
                        return Err(Error::InvalidToken {
                            utterance: utt.id.clone(),
                            token: i,
                            message: "verdict supplied for an already primed token".into(),
                        })
                    }
                    (false, None) => {
                        return Err(Error::InvalidToken {
                            utterance: utt.id.clone(),
                            token: i,
                            message: "missing verdict for unprimed token".into(),
                        })
                    }
                    (false, Some(Verdict::Wrong)) => {
                        token.label = token.label.clone().primed();
                        primed += 1;
                    }
                    _ => {}
                }
            }
        }
        let corpus = Corpus {
            utterances,
            inventory: self.inventory.clone(),
            mode: self.mode,
            context_map: self.context_map.clone(),
        };
        Ok((corpus, primed))
    }

    /// Replaces the context map without touching tokens.
    pub fn with_context_map(self, context_map: ContextMap) -> Result<Corpus> {
        Corpus::new(self.utterances, self.mode, context_map)
    }

    /// Writes `manifest.jsonl` plus one feature file per utterance under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let feat_dir = dir.join("features");
        fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        let manifest = dir.join(MANIFEST_FILE);
        let file = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let mut out = BufWriter::new(file);
        for utt in &self.utterances {
            let rel = format!("features/{}.feat", sanitize(&utt.id));
            utt.features.save(dir.join(&rel))?;
            let record = ManifestRecord {
                id: utt.id.clone(),
                features: rel,
                tokens: utt
                    .tokens
                    .iter()
                    .map(|t| ManifestToken {
                        label: t.label.clone(),
                        start: t.start,
                        end: t.end,
                        tag: t.realization,
                    })
                    .collect(),
            };
            let line = serde_json::to_string(&record).expect("manifest record serializes");
            writeln!(out, "{line}").map_err(|e| Error::io(&manifest, e))?;
        }
        out.flush().map_err(|e| Error::io(&manifest, e))?;
        Ok(manifest)
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn validate_tokens(utt: &Utterance, mode: AnnotationMode, map: &ContextMap) -> Result<()> {
    let bad = |token: usize, message: String| Error::InvalidToken {
        utterance: utt.id.clone(),
        token,
        message,
    };
    if utt.tokens.is_empty() {
        return Err(Error::InvalidCorpus(format!("utterance {} has no tokens", utt.id)));
    }
    let frames = utt.features.len();
    for (i, token) in utt.tokens.iter().enumerate() {
        if token.start >= token.end {
            return Err(bad(i, format!("empty span {}..{}", token.start, token.end)));
        }
        if token.end > frames {
            return Err(bad(
                i,
                format!("end frame {} exceeds {} feature frames", token.end, frames),
            ));
        }
        if i > 0 {
            let prev = utt.tokens[i - 1].end;
            if token.start < prev {
                return Err(bad(
                    i,
                    format!("span starts at {} inside previous token ending at {prev}", token.start),
                ));
            }
            if token.start > prev {
                return Err(bad(i, format!("gap between frame {prev} and {}", token.start)));
            }
        }
        match (mode, token.label.context()) {
            (AnnotationMode::Plain, Some(_)) => {
                return Err(bad(i, format!("context class on {} in a plain corpus", token.label)))
            }
            (AnnotationMode::Contextual, Some(_)) if !map.is_bearing(token.label.base()) => {
                return Err(bad(i, format!("{} is not context-bearing", token.label)))
            }
            (AnnotationMode::Contextual, None) if map.is_bearing(token.label.base()) => {
                return Err(bad(i, format!("{} lacks a context class", token.label)))
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    features: String,
    tokens: Vec<ManifestToken>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestToken {
    label: Label,
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<Realization>,
}

/// Loads a JSON-lines manifest. Feature paths are relative to the manifest's
/// directory. The annotation mode is contextual when any label carries a
/// context class.
pub fn load_corpus(manifest: impl AsRef<Path>, context_map: ContextMap) -> Result<Corpus> {
    let manifest = manifest.as_ref();
    let file = fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let base_dir = manifest.parent().unwrap_or(Path::new("."));
    let mut utterances = Vec::new();
    let mut dim = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: manifest.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let features = load_features(base_dir.join(&record.features), dim)?;
        dim = Some(features.dim());
        let tokens = record
            .tokens
            .into_iter()
            .map(|t| Token {
                label: t.label,
                start: t.start,
                end: t.end,
                realization: t.tag,
            })
            .collect();
        utterances.push(Utterance {
            id: record.id,
            features: Arc::new(features),
            tokens,
        });
    }
    let contextual = utterances
        .iter()
        .flat_map(|u| &u.tokens)
        .any(|t| t.label.context().is_some());
    let mode = if contextual {
        AnnotationMode::Contextual
    } else {
        AnnotationMode::Plain
    };
    Corpus::new(utterances, mode, context_map)
}
