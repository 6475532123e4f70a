//! Guideline store for retrieval-augmented answers.
//!
//! Documents are tokenised into lowercase ASCII-alphanumeric runs. A
//! document scores `Σ tf(t, d) · ln(1 + N / df(t))` over the distinct query
//! terms; ties rank by document id.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KnowledgeError {
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` has no indexable text")]
    EmptyText(String),
    #[error("the knowledge index is empty")]
    EmptyIndex,
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub documents: usize,
    pub terms: usize,
    pub postings: usize,
    /// SHA-256 over ids, titles, sources and the term index.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub title: String,
    pub source: String,
    pub score: f64,
    pub text: String,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    docs: Vec<Document>,
    /// term → (document index → term frequency)
    index: BTreeMap<String, BTreeMap<usize, usize>>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        KnowledgeBase::default()
    }

    /// Parses a JSON-lines corpus, one [`Document`] per non-blank line.
    pub fn parse_jsonl(text: &str) -> Result<Vec<Document>, KnowledgeError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| KnowledgeError::Corpus {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>, KnowledgeError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| KnowledgeError::Corpus {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        KnowledgeBase::parse_jsonl(&text)
    }

    /// The bundled guideline corpus.
    pub fn builtin() -> Self {
        let mut kb = KnowledgeBase::new();
        let docs = KnowledgeBase::parse_jsonl(include_str!("../../data/guidelines.jsonl")).expect("bundled corpus parses");
        kb.ingest(docs).expect("bundled corpus ingests");
        kb
    }

    /// Adds documents; on error the index is left unchanged.
    pub fn ingest(&mut self, documents: Vec<Document>) -> Result<IndexSummary, KnowledgeError> {
        let mut seen: BTreeSet<&str> = self.docs.iter().map(|d| d.id.as_str()).collect();
        for d in &documents {
            if !seen.insert(&d.id) {
                return Err(KnowledgeError::DuplicateId(d.id.clone()));
            }
            if tokenize(&d.text).is_empty() {
                return Err(KnowledgeError::EmptyText(d.id.clone()));
            }
        }
        for d in documents {
            let n = self.docs.len();
            for t in tokenize(&d.text) {
                *self.index.entry(t).or_default().entry(n).or_default() += 1;
            }
            self.docs.push(d);
        }
        Ok(self.summary())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.index.get(term).map_or(0, BTreeMap::len)
    }

    pub fn summary(&self) -> IndexSummary {
        let mut h = Sha256::new();
        for d in &self.docs {
            for f in [&d.id, &d.title, &d.source] {
                h.update(f.as_bytes());
                h.update([0]);
            }
        }
        for (t, post) in &self.index {
            h.update(t.as_bytes());
            for (d, tf) in post {
                h.update(self.docs[*d].id.as_bytes());
                h.update((*tf as u64).to_le_bytes());
            }
        }
        IndexSummary {
            documents: self.docs.len(),
            terms: self.index.len(),
            postings: self.index.values().map(BTreeMap::len).sum(),
            hash: hex::encode(h.finalize()),
        }
    }

    /// Top `k` documents for `query`; documents sharing no term are omitted.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Snippet>, KnowledgeError> {
        if self.docs.is_empty() {
            return Err(KnowledgeError::EmptyIndex);
        }
        let n = self.docs.len() as f64;
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for t in &terms {
            let Some(post) = self.index.get(t) else { continue };
            let idf = (1.0 + n / post.len() as f64).ln();
            for (d, tf) in post {
                *scores.entry(*d).or_default() += *tf as f64 * idf;
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.docs[a.0].id.cmp(&self.docs[b.0].id)));
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|(d, score)| {
                let doc = &self.docs[d];
                Snippet {
                    id: doc.id.clone(),
                    title: doc.title.clone(),
                    source: doc.source.clone(),
                    score,
                    text: doc.text.clone(),
                }
            })
            .collect())
    }
}

/// Builds a fresh index from `documents`.
pub fn kb_ingest(documents: Vec<Document>) -> Result<(KnowledgeBase, IndexSummary), KnowledgeError> {
    let mut kb = KnowledgeBase::new();
    let s = kb.ingest(documents)?;
    Ok((kb, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            title: format!("title {id}"),
            text: text.into(),
            source: format!("src/{id}"),
        }
    }

    #[test]
    fn tokenizer_is_lowercase_alphanumeric() {
        assert_eq!(tokenize("LVEF<40%, e.g. HCM-like!"), ["lvef", "40", "e", "g", "hcm", "like"]);
    }

    #[test]
    fn ingest_errors_and_determinism() {
        let docs = vec![doc("a", "alpha beta"), doc("b", "beta gamma"), doc("c", "gamma delta")];
        let (kb, s) = kb_ingest(docs.clone()).unwrap();
        assert_eq!(kb.len(), 3);
        assert_eq!(s, kb_ingest(docs.clone()).unwrap().1);
        let mut dup = docs.clone();
        dup.push(doc("b", "x"));
        assert_eq!(kb_ingest(dup).unwrap_err(), KnowledgeError::DuplicateId("b".into()));
        let mut kb2 = kb.clone();
        assert!(kb2.ingest(vec![doc("a", "again")]).is_err());
        assert_eq!(kb2.summary(), s);
        assert!(matches!(kb_ingest(vec![doc("e", "--")]), Err(KnowledgeError::EmptyText(_))));
    }

    #[test]
    fn ranking_and_ties() {
        let (kb, _) = kb_ingest(vec![doc("b", "shared words"), doc("a", "shared words"), doc("c", "unique shared")]).unwrap();
        let r = kb.retrieve("unique", 3).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].id, "c");
        assert_eq!(r[0].source, "src/c");
        let r = kb.retrieve("words", 3).unwrap();
        assert_eq!(r.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert!(kb.retrieve("nothing here", 3).unwrap().is_empty());
        assert_eq!(KnowledgeBase::new().retrieve("x", 1), Err(KnowledgeError::EmptyIndex));
    }

    #[test]
    fn builtin_corpus_loads() {
        let kb = KnowledgeBase::builtin();
        assert!(kb.len() >= 10);
        let r = kb.retrieve("hypertrophic cardiomyopathy wall thickness", 3).unwrap();
        assert!(!r.is_empty());
    }
}
