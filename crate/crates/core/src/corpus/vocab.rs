use std::collections::{BTreeSet, HashMap};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use super::SampleRecord;
use crate::{Error, Result};

/// Token ↔ id bijection with reserved ids in front of the content tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    num_reserved: usize,
    unk_id: usize,
}

impl Vocabulary {
    fn with_reserved(reserved: &[&str], unk_id: usize, content: Vec<String>) -> Result<Self> {
        let mut tokens: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        tokens.extend(content);
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self {
            tokens,
            ids,
            num_reserved: reserved.len(),
            unk_id,
        })
    }

    /// Total number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_reserved(&self) -> usize {
        self.num_reserved
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    /// Id of `token`, or the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(self.unk_id)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Content tokens (reserved entries excluded), in id order.
    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[self.num_reserved..]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Decodes ids, skipping reserved ids other than the unknown token.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i >= self.num_reserved || i == self.unk_id)
            .filter_map(|&i| self.token(i).map(str::to_string))
            .collect()
    }
}

/// Gloss labels `L` plus the CTC blank `ε` at id 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct GlossVocabulary(Vocabulary);

impl GlossVocabulary {
    pub const BLANK: usize = 0;
    pub const PAD: usize = 1;
    pub const BOS: usize = 2;
    pub const EOS: usize = 3;
    pub const UNK: usize = 4;
    const RESERVED: [&'static str; 5] = ["<blank>", "<pad>", "<s>", "</s>", "<unk>"];

    pub fn new(content: Vec<String>) -> Result<Self> {
        Vocabulary::with_reserved(&Self::RESERVED, Self::UNK, content).map(Self)
    }

    pub fn blank_id(&self) -> usize {
        Self::BLANK
    }
}

/// Spoken-language side vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TextVocabulary(Vocabulary);

impl TextVocabulary {
    pub const PAD: usize = 0;
    pub const BOS: usize = 1;
    pub const EOS: usize = 2;
    pub const UNK: usize = 3;
    const RESERVED: [&'static str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

    pub fn new(content: Vec<String>) -> Result<Self> {
        Vocabulary::with_reserved(&Self::RESERVED, Self::UNK, content).map(Self)
    }
}

macro_rules! vocab_glue {
    ($t:ty) => {
        impl Deref for $t {
            type Target = Vocabulary;
            fn deref(&self) -> &Vocabulary {
                &self.0
            }
        }
        impl TryFrom<Vec<String>> for $t {
            type Error = Error;
            fn try_from(content: Vec<String>) -> Result<Self> {
                Self::new(content)
            }
        }
        impl From<$t> for Vec<String> {
            fn from(v: $t) -> Vec<String> {
                v.content_tokens().to_vec()
            }
        }
    };
}
vocab_glue!(GlossVocabulary);
vocab_glue!(TextVocabulary);

/// Builds both vocabularies from `records` (pass the train split). Tokens are
/// deduplicated and sorted lexicographically.
pub fn build_vocabularies(records: &[SampleRecord]) -> Result<(GlossVocabulary, TextVocabulary)> {
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build vocabularies from an empty corpus".into(),
        ));
    }
    let gloss: BTreeSet<&String> = records.iter().flat_map(|r| &r.gloss).collect();
    let text: BTreeSet<&String> = records.iter().flat_map(|r| &r.text).collect();
    Ok((
        GlossVocabulary::new(gloss.into_iter().cloned().collect())?,
        TextVocabulary::new(text.into_iter().cloned().collect())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::tiny_record;

    #[test]
    fn gloss_tokens_sorted_after_reserved() {
        let recs = vec![
            tiny_record("a", &["REGEN", "MORGEN"], 2),
            tiny_record("b", &["REGEN"], 1),
        ];
        let (g, t) = build_vocabularies(&recs).unwrap();
        assert_eq!(g.content_tokens(), ["MORGEN", "REGEN"]);
        assert_eq!(g.id("MORGEN"), 5);
        assert_eq!(g.blank_id(), 0);
        assert_eq!(t.content_tokens(), ["wort"]);
        assert_eq!(t.len(), 5);
    }

    #[test]
    fn reserved_ids_distinct_and_below_content() {
        let g = GlossVocabulary::new(vec!["A".into()]).unwrap();
        let reserved = [
            GlossVocabulary::BLANK,
            GlossVocabulary::PAD,
            GlossVocabulary::BOS,
            GlossVocabulary::EOS,
            GlossVocabulary::UNK,
        ];
        let set: BTreeSet<_> = reserved.iter().collect();
        assert_eq!(set.len(), reserved.len());
        assert!(reserved.iter().all(|&r| r < g.id("A")));
    }

    #[test]
    fn unseen_tokens_map_to_unk() {
        let t = TextVocabulary::new(vec!["a".into()]).unwrap();
        assert_eq!(t.id("zzz"), TextVocabulary::UNK);
        assert_eq!(t.decode(&[TextVocabulary::BOS, 4, TextVocabulary::EOS]), ["a"]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(build_vocabularies(&[]).is_err());
    }

    #[test]
    fn encode_decode_identity() {
        let toks: Vec<String> = ["b", "a", "c"].iter().map(|s| s.to_string()).collect();
        let mut sorted = toks.clone();
        sorted.sort();
        let v = TextVocabulary::new(sorted).unwrap();
        assert_eq!(v.decode(&v.encode(&toks)), toks);
    }

    #[test]
    fn serde_round_trip() {
        let v = GlossVocabulary::new(vec!["A".into(), "B".into()]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["A","B"]"#);
        let back: GlossVocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
