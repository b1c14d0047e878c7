//! Gloss-to-text matching, placeholder substitution and homonym statistics.
//!
//! The gloss files of the source corpus are not linked to the translations,
//! so every original gloss is matched against candidate glosses that carry a
//! translation. Two scorers are available: word-set intersection and
//! sentence BLEU. Ties always go to the lowest candidate index.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SampleRecord;
use crate::metrics;
use crate::{Error, Result};

/// A processed gloss together with the translation attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlossCandidate {
    pub gloss_tokens: Vec<String>,
    pub text_tokens: Vec<String>,
}

impl GlossCandidate {
    pub fn new(gloss_tokens: Vec<String>, text_tokens: Vec<String>) -> Result<Self> {
        if gloss_tokens.is_empty() || text_tokens.is_empty() {
            return Err(Error::InvalidArgument(
                "gloss candidates need non-empty gloss and text".into(),
            ));
        }
        Ok(Self {
            gloss_tokens,
            text_tokens,
        })
    }
}

/// Splits on whitespace, uppercases and strips everything but alphanumerics
/// and hyphens.
pub fn normalize_gloss(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|t| {
            t.chars()
                .filter(|c| c.is_alphanumeric() || *c == '-')
                .flat_map(char::to_uppercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn check_candidates(candidates: &[GlossCandidate]) -> Result<()> {
    if candidates.is_empty() {
        Err(Error::InvalidArgument("no candidates to align against".into()))
    } else {
        Ok(())
    }
}

/// Index of the first maximum; NaN never wins.
fn argmax_first(scores: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Candidate sharing the most distinct tokens with `original`.
pub fn wordset_match(original: &[String], candidates: &[GlossCandidate]) -> Result<(usize, usize)> {
    check_candidates(candidates)?;
    let orig: HashSet<&str> = original.iter().map(String::as_str).collect();
    let (idx, score) = argmax_first(candidates.iter().map(|c| {
        let set: HashSet<&str> = c.gloss_tokens.iter().map(String::as_str).collect();
        set.intersection(&orig).count() as f64
    }));
    Ok((idx, score as usize))
}

/// Candidate whose gloss has the highest smoothed BLEU-4 against `original`.
pub fn bleu_align(original: &[String], candidates: &[GlossCandidate]) -> Result<(usize, f64)> {
    check_candidates(candidates)?;
    let reference = [original.to_vec()];
    Ok(argmax_first(
        candidates
            .iter()
            .map(|c| metrics::bleu_n(&c.gloss_tokens, &reference, 4)),
    ))
}

/// Placeholder → replacement map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubstitutionTable {
    map: BTreeMap<String, String>,
}

impl SubstitutionTable {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if k == v {
                return Err(Error::InvalidArgument(format!(
                    "substitution `{k}` maps to itself"
                )));
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate substitution key `{k}`"
                )));
            }
        }
        Ok(Self { map })
    }

    /// Reads `placeholder<TAB>replacement` lines; blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `placeholder<TAB>replacement`".into(),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::new(pairs)
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.map.get(token).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }
}

pub fn apply_substitutions(text: &[String], table: &SubstitutionTable) -> Vec<String> {
    text.iter()
        .map(|t| table.get(t).unwrap_or(t).to_string())
        .collect()
}

/// Gloss → distinct meanings. Every entry has at least two meanings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HomonymLexicon {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl HomonymLexicon {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<String>)>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (gloss, meanings) in entries {
            let set: BTreeSet<String> = meanings.into_iter().collect();
            if set.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "homonym `{gloss}` needs at least two distinct meanings"
                )));
            }
            out.insert(gloss, set);
        }
        Ok(Self { entries: out })
    }

    /// Reads `gloss<TAB>meaning1|meaning2|...` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (g, m) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `gloss<TAB>meaning|meaning...`".into(),
            })?;
            let meanings = m.split('|').map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            entries.push((g.trim().to_string(), meanings.collect()));
        }
        Self::new(entries)
    }

    pub fn contains(&self, gloss: &str) -> bool {
        self.entries.contains_key(gloss)
    }

    pub fn meanings(&self, gloss: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(gloss)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomonymReport {
    pub records: usize,
    /// Records whose gloss contains at least one lexicon token.
    pub flagged: usize,
    pub fraction: f64,
    /// Mean number of homonym-token occurrences per record.
    pub mean_per_record: f64,
    pub occurrences: BTreeMap<String, usize>,
}

pub fn homonym_scan(records: &[SampleRecord], lexicon: &HomonymLexicon) -> HomonymReport {
    let mut occurrences: BTreeMap<String, usize> = BTreeMap::new();
    let mut flagged = 0;
    let mut total = 0usize;
    for r in records {
        let hits: Vec<&String> = r.gloss.iter().filter(|g| lexicon.contains(g)).collect();
        if !hits.is_empty() {
            flagged += 1;
        }
        total += hits.len();
        for h in hits {
            *occurrences.entry(h.clone()).or_default() += 1;
        }
    }
    let n = records.len();
    let ratio = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    HomonymReport {
        records: n,
        flagged,
        fraction: ratio(flagged),
        mean_per_record: ratio(total),
        occurrences,
    }
}

/// Result of aligning one original gloss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub original: Vec<String>,
    pub index: usize,
    pub score: f64,
    pub gloss: Vec<String>,
    pub text: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMethod {
    Wordset,
    Bleu,
}

/// Aligns every original against the candidate pool and substitutes
/// placeholders in the selected translations.
pub fn align_all(
    originals: &[Vec<String>],
    candidates: &[GlossCandidate],
    method: AlignMethod,
    table: &SubstitutionTable,
) -> Result<Vec<AlignedPair>> {
    let mut cache: HashMap<&[String], (usize, f64)> = HashMap::new();
    originals
        .iter()
        .map(|orig| {
            let (index, score) = match cache.get(orig.as_slice()) {
                Some(&hit) => hit,
                None => {
                    let hit = match method {
                        AlignMethod::Wordset => {
                            wordset_match(orig, candidates).map(|(i, s)| (i, s as f64))?
                        }
                        AlignMethod::Bleu => bleu_align(orig, candidates)?,
                    };
                    cache.insert(orig.as_slice(), hit);
                    hit
                }
            };
            let c = &candidates[index];
            Ok(AlignedPair {
                original: orig.clone(),
                index,
                score,
                gloss: c.gloss_tokens.clone(),
                text: apply_substitutions(&c.text_tokens, table),
            })
        })
        .collect()
}
