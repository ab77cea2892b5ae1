//! Cloze templates and keyword-sentence sampling for prototype pretraining.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::index;

use crate::encode::MASK_TOKEN;
use crate::error::{Error, Result};
use crate::model::LabelSpace;
use crate::rng::{self, Stream};

pub const SENTENCE_SLOT: &str = "[SENTENCE]";

/// A pattern with exactly one `[MASK]` and one `[SENTENCE]` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pattern: String,
}

impl Template {
    pub fn new(pattern: impl Into<String>) -> Result<Self> {
        let pattern = pattern.into();
        if pattern.trim().is_empty() {
            return Err(Error::Template("empty template pattern".into()));
        }
        let masks = count_masks(&pattern);
        let slots = pattern.matches(SENTENCE_SLOT).count();
        if masks != 1 || slots != 1 {
            return Err(Error::Template(format!(
                "pattern {pattern:?} needs one {MASK_TOKEN} and one {SENTENCE_SLOT}, found {masks} and {slots}"
            )));
        }
        Ok(Self { pattern })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn fill(&self, sentence: &str) -> Result<String> {
        check_sentence(sentence)?;
        Ok(self.pattern.replacen(SENTENCE_SLOT, sentence, 1))
    }
}

/// Templates from a file: one pattern per line, blank lines and `#` comments skipped.
pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<Template>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(Template::new(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    if out.is_empty() {
        return Err(Error::parse(path, 1, "no templates in file"));
    }
    Ok(out)
}

fn count_masks(text: &str) -> usize {
    text.to_lowercase().matches(&MASK_TOKEN.to_lowercase()).count()
}

fn check_sentence(sentence: &str) -> Result<()> {
    if sentence.trim().is_empty() {
        return Err(Error::Template("empty sentence".into()));
    }
    if count_masks(sentence) > 0 {
        return Err(Error::Template(format!(
            "sentence contains a literal {MASK_TOKEN}: {sentence:?}"
        )));
    }
    Ok(())
}

/// Wraps a keyword sentence as `"<sentence> In this sentence, <word> means [MASK]."`.
pub fn fill_pretrain_template(sentence: &str, word: &str) -> Result<String> {
    check_sentence(sentence)?;
    if !contains_word(sentence, word) {
        return Err(Error::Template(format!(
            "word {word:?} does not occur in sentence {sentence:?}"
        )));
    }
    Ok(format!(
        "{} In this sentence, {word} means {MASK_TOKEN}.",
        sentence.trim_end()
    ))
}

/// Case-insensitive whole-token match; tokens are maximal alphanumeric runs.
pub fn contains_word(sentence: &str, word: &str) -> bool {
    let word = word.trim().to_lowercase();
    if word.is_empty() {
        return false;
    }
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .any(|tok| !tok.is_empty() && tok.to_lowercase() == word)
}

/// Splits a document after `.`, `!` or `?` when followed by whitespace.
pub fn split_sentences(document: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = document.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    push_trimmed(&mut out, &document[start..end]);
                    start = end;
                }
            }
        }
    }
    push_trimmed(&mut out, &document[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Sentences of a corpus file holding one document per line.
pub fn read_corpus_sentences(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().flat_map(split_sentences).collect())
}

/// A sampled corpus sentence together with the label word it matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSentence {
    pub sentence: String,
    pub word: String,
}

impl KeywordSentence {
    pub fn prompt(&self) -> Result<String> {
        fill_pretrain_template(&self.sentence, &self.word)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSampleSpec {
    pub sentences_per_label: usize,
    pub corpus: PathBuf,
}

impl PretrainSampleSpec {
    pub fn sample(&self, labels: &LabelSpace, seed: u64) -> Result<Vec<Vec<KeywordSentence>>> {
        let sentences = read_corpus_sentences(&self.corpus)?;
        sample_keyword_sentences(&sentences, labels, self.sentences_per_label, seed)
    }
}

/// For every label, up to `q` distinct corpus sentences containing one of its
/// label words, drawn uniformly without replacement. Polysemous hits are kept.
pub fn sample_keyword_sentences(
    sentences: &[String],
    labels: &LabelSpace,
    q: usize,
    seed: u64,
) -> Result<Vec<Vec<KeywordSentence>>> {
    if q == 0 {
        return Err(Error::Config("sentences per label must be at least 1".into()));
    }
    labels.require_label_words()?;
    let mut rng = rng::stream(seed, Stream::Keywords);
    let mut out = Vec::with_capacity(labels.len());
    for k in 0..labels.len() {
        let words = labels.words(k);
        let mut seen = HashSet::new();
        let mut hits = Vec::new();
        for s in sentences {
            if let Some(word) = words.iter().find(|w| contains_word(s, w)) {
                if seen.insert(s.as_str()) {
                    hits.push(KeywordSentence {
                        sentence: s.clone(),
                        word: word.clone(),
                    });
                }
            }
        }
        if hits.is_empty() {
            return Err(Error::Config(format!(
                "no corpus sentence contains a label word of {:?} (words: {})",
                labels.name(k),
                words.join(", ")
            )));
        }
        if hits.len() < q {
            warn!(
                "label {:?}: only {} sentences contain its label words, wanted {q}",
                labels.name(k),
                hits.len()
            );
            out.push(hits);
            continue;
        }
        let mut picked = index::sample(&mut rng, hits.len(), q).into_vec();
        picked.sort_unstable();
        out.push(picked.into_iter().map(|i| hits[i].clone()).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_sentence_slot_only() {
        let t = Template::new("[Category: [MASK]] [SENTENCE]").unwrap();
        assert_eq!(t.fill("hello").unwrap(), "[Category: [MASK]] hello");
        let t = Template::new("[SENTENCE] Topic: [MASK].").unwrap();
        assert_eq!(t.fill("a b").unwrap(), "a b Topic: [MASK].");
    }

    #[test]
    fn template_and_sentence_validation() {
        assert!(Template::new("no slots").is_err());
        assert!(Template::new("[MASK] [MASK] [SENTENCE]").is_err());
        assert!(Template::new("[MASK] [SENTENCE] [SENTENCE]").is_err());
        let t = Template::new("[SENTENCE] [MASK]").unwrap();
        assert!(matches!(t.fill("look at [MASK] here"), Err(Error::Template(_))));
        assert!(t.fill("   ").is_err());
    }

    #[test]
    fn pretrain_template() {
        assert_eq!(
            fill_pretrain_template("The business failed.", "business").unwrap(),
            "The business failed. In this sentence, business means [MASK]."
        );
        assert!(fill_pretrain_template("Business is good.", "business").is_ok());
        assert!(fill_pretrain_template("Stocks fell sharply.", "business").is_err());
        // Whole tokens only.
        assert!(fill_pretrain_template("Businesses fell.", "business").is_err());
    }

    #[test]
    fn splitter() {
        assert_eq!(
            split_sentences("One. Two!  Three? Four"),
            vec!["One.", "Two!", "Three?", "Four"]
        );
        assert_eq!(
            split_sentences("v1.2 is out. Done."),
            vec!["v1.2 is out.", "Done."]
        );
        assert!(split_sentences("   ").is_empty());
    }

    fn labels() -> LabelSpace {
        LabelSpace::new(
            vec!["sports".into(), "business".into()],
            vec![vec!["sports".into()], vec!["business".into(), "market".into()]],
        )
        .unwrap()
    }

    #[test]
    fn sampling_pools_words_and_dedupes() {
        let corpus: Vec<String> = [
            "Sports today.",
            "The market rose.",
            "Big business news.",
            "Sports again.",
            "The market rose.",
            "Nothing here.",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let out = sample_keyword_sentences(&corpus, &labels(), 2, 3).unwrap();
        assert_eq!(out[0].len(), 2);
        assert_eq!(out[1].len(), 2);
        let biz: Vec<&str> = out[1].iter().map(|k| k.sentence.as_str()).collect();
        assert!(biz.contains(&"The market rose."));
        assert!(biz.contains(&"Big business news."));
        assert_eq!(out, sample_keyword_sentences(&corpus, &labels(), 2, 3).unwrap());
        assert_eq!(out[1][0].prompt().unwrap().matches("[MASK]").count(), 1);
    }

    #[test]
    fn sampling_errors_name_the_label() {
        let corpus = vec!["Sports only.".to_string()];
        let err = sample_keyword_sentences(&corpus, &labels(), 1, 0).unwrap_err();
        assert!(err.to_string().contains("business"));
        assert!(sample_keyword_sentences(&corpus, &labels(), 0, 0).is_err());
    }
}
