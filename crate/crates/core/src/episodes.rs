//! Labeled text datasets, k-shot episode sampling and a synthetic topic benchmark.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabelSpace;
use crate::rng::{self, Stream};
use crate::templating::Template;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextDataset {
    pub split: Split,
    pub num_classes: usize,
    pub records: Vec<TextRecord>,
}

impl TextDataset {
    pub fn new(split: Split, num_classes: usize, records: Vec<TextRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.label >= num_classes {
                return Err(Error::Data(format!(
                    "record {i} has label {} outside [0, {num_classes})",
                    r.label
                )));
            }
            if r.text.trim().is_empty() {
                return Err(Error::Data(format!("record {i} has empty text")));
            }
        }
        Ok(Self {
            split,
            num_classes,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Exactly `k` records per class; `k = 0` yields the empty (zero-shot) set.
    pub fn k_shot_sample(&self, spec: &EpisodeSpec) -> Result<Self> {
        let picked = k_shot_indices(&self.labels(), self.num_classes, spec.k, spec.seed)?;
        Ok(Self {
            split: self.split,
            num_classes: self.num_classes,
            records: picked.into_iter().map(|i| self.records[i].clone()).collect(),
        })
    }

    /// Writes `label,text` rows with 0-based labels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        for r in &self.records {
            w.write_record([r.label.to_string().as_str(), r.text.as_str()])
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub k: usize,
    pub seed: u64,
    pub template_index: usize,
}

/// Sorted indices of `k` items per class, drawn without replacement.
pub fn k_shot_indices(labels: &[usize], num_classes: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::Data(format!(
                "item {i} has label {l} outside [0, {num_classes})"
            )));
        }
        by_class[l].push(i);
    }
    let mut rng = rng::stream(seed, Stream::Episode);
    let mut out = Vec::with_capacity(k * num_classes);
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {c} has {} instances, fewer than k = {k}",
                members.len()
            )));
        }
        out.extend(
            index::sample(&mut rng, members.len(), k)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    out.sort_unstable();
    Ok(out)
}

/// Column layout of a delimited dataset file.
///
/// Textual form: `label=0,text=1+2,base=1` (label column, `+`-joined text
/// columns, and whether labels in the file start at 0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub label_column: usize,
    pub text_columns: Vec<usize>,
    pub one_based: bool,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        Self {
            label_column: 0,
            text_columns: vec![1],
            one_based: false,
        }
    }
}

impl FromStr for DatasetSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut schema = Self::default();
        let bad = |msg: String| Error::Config(format!("schema {s:?}: {msg}"));
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
            let col = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| bad(format!("bad column index {v:?}")))
            };
            match key.trim() {
                "label" => schema.label_column = col(value)?,
                "text" => {
                    schema.text_columns = value.split('+').map(col).collect::<Result<_>>()?;
                }
                "base" => {
                    schema.one_based = match value.trim() {
                        "0" => false,
                        "1" => true,
                        v => return Err(bad(format!("base must be 0 or 1, got {v:?}"))),
                    }
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        if schema.text_columns.is_empty() {
            return Err(bad("no text columns".into()));
        }
        Ok(schema)
    }
}

impl fmt::Display for DatasetSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: Vec<String> = self.text_columns.iter().map(usize::to_string).collect();
        write!(
            f,
            "label={},text={},base={}",
            self.label_column,
            text.join("+"),
            u8::from(self.one_based)
        )
    }
}

/// Reads a comma-delimited file (RFC 4180 quoting) into a dataset.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
    num_classes: usize,
    split: Split,
) -> Result<TextDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::parse(path, row_no, e.to_string()))?;
        let field = |c: usize| {
            row.get(c).ok_or_else(|| {
                Error::parse(
                    path,
                    row_no,
                    format!("row has {} fields, no column {c}", row.len()),
                )
            })
        };
        let raw = field(schema.label_column)?.trim();
        let value: i64 = raw
            .parse()
            .map_err(|_| Error::parse(path, row_no, format!("unknown label value {raw:?}")))?;
        let label = value - i64::from(schema.one_based);
        if label < 0 || label as usize >= num_classes {
            return Err(Error::parse(
                path,
                row_no,
                format!("label {value} out of range for {num_classes} classes"),
            ));
        }
        let parts = schema
            .text_columns
            .iter()
            .map(|&c| field(c).map(str::trim))
            .collect::<Result<Vec<_>>>()?;
        let text = parts
            .into_iter()
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if text.is_empty() {
            return Err(Error::parse(path, row_no, "empty text"));
        }
        records.push(TextRecord {
            text,
            label: label as usize,
        });
    }
    TextDataset::new(split, num_classes, records)
}

/// Knobs of the synthetic topic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_corpus_docs: usize,
    pub signature_tokens: usize,
    pub filler_tokens: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a slot holds a class-neutral filler token.
    pub filler_rate: f64,
    /// Probability that a content slot is drawn from a uniformly random class.
    pub noise: f64,
    /// Fraction of corpus sentences that carry their class's label word.
    pub label_word_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            n_train: 500,
            n_test: 1000,
            n_corpus_docs: 1500,
            signature_tokens: 12,
            filler_tokens: 40,
            min_len: 10,
            max_len: 16,
            filler_rate: 0.4,
            noise: 0.1,
            label_word_rate: 0.3,
            seed: 0,
        }
    }
}

/// Generated train/test splits, an unlabeled corpus and the label space.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: TextDataset,
    pub test: TextDataset,
    /// One document per entry, each holding several sentences.
    pub corpus: Vec<String>,
    pub labels: LabelSpace,
    pub templates: Vec<Template>,
}

/// Cloze patterns used with the synthetic benchmark.
pub const SYNTH_TEMPLATES: [&str; 4] = [
    "[Category: [MASK]] [SENTENCE]",
    "[SENTENCE] Topic: [MASK].",
    "A [MASK] story: [SENTENCE]",
    "[MASK] question: [SENTENCE]",
];

struct Vocabulary {
    signatures: Vec<Vec<String>>,
    fillers: Vec<String>,
    label_words: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const ONSETS: [&str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr",
    ];
    const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
    const CODAS: [&str; 6] = ["", "n", "r", "s", "k", "l"];
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).expect("non-empty"));
        w.push_str(VOWELS.choose(rng).expect("non-empty"));
    }
    w.push_str(CODAS.choose(rng).expect("non-empty"));
    w
}

impl Vocabulary {
    fn generate(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut seen = HashSet::new();
        let mut fresh = |rng: &mut ChaCha8Rng| loop {
            let w = pseudo_word(rng);
            if seen.insert(w.clone()) {
                break w;
            }
        };
        let label_words = (0..cfg.num_classes).map(|_| fresh(rng)).collect();
        let signatures = (0..cfg.num_classes)
            .map(|_| (0..cfg.signature_tokens).map(|_| fresh(rng)).collect())
            .collect();
        let fillers = (0..cfg.filler_tokens).map(|_| fresh(rng)).collect();
        Self {
            signatures,
            fillers,
            label_words,
        }
    }

    fn sentence(&self, cfg: &SynthConfig, class: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        (0..len)
            .map(|_| {
                if !self.fillers.is_empty() && rng.random_bool(cfg.filler_rate) {
                    return self.fillers.choose(rng).expect("non-empty").clone();
                }
                let source = if rng.random_bool(cfg.noise) {
                    rng.random_range(0..cfg.num_classes)
                } else {
                    class
                };
                self.signatures[source].choose(rng).expect("non-empty").clone()
            })
            .collect()
    }
}

fn finish_sentence(mut tokens: Vec<String>) -> String {
    if let Some(first) = tokens.first_mut() {
        let mut chars = first.chars();
        if let Some(c) = chars.next() {
            *first = c.to_uppercase().chain(chars).collect();
        }
    }
    format!("{}.", tokens.join(" "))
}

/// Synthetic benchmark: every class owns a set of signature tokens; documents
/// mix them with shared fillers, and `noise` replaces content tokens with
/// those of a random class. Corpus sentences carry their class's label word
/// at rate `label_word_rate` so keyword pretraining has material to work on.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.num_classes < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs at least 2 classes, got {}",
            cfg.num_classes
        )));
    }
    for (name, rate) in [
        ("noise", cfg.noise),
        ("filler_rate", cfg.filler_rate),
        ("label_word_rate", cfg.label_word_rate),
    ] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("{name} must lie in [0, 1], got {rate}")));
        }
    }
    if cfg.signature_tokens == 0 || cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(
            "need signature tokens and 0 < min_len <= max_len".into(),
        ));
    }

    let mut rng = rng::stream(cfg.seed, Stream::Synth);
    let vocab = Vocabulary::generate(cfg, &mut rng);
    let labels = LabelSpace::new(
        vocab.label_words.clone(),
        vocab.label_words.iter().map(|w| vec![w.clone()]).collect(),
    )?;

    let make_split = |n: usize, split: Split, rng: &mut ChaCha8Rng| {
        let records = (0..n)
            .map(|i| {
                let label = i % cfg.num_classes;
                TextRecord {
                    text: finish_sentence(vocab.sentence(cfg, label, rng)),
                    label,
                }
            })
            .collect();
        TextDataset::new(split, cfg.num_classes, records)
    };
    let train = make_split(cfg.n_train, Split::Train, &mut rng)?;
    let test = make_split(cfg.n_test, Split::Test, &mut rng)?;

    let corpus = (0..cfg.n_corpus_docs)
        .map(|_| {
            let class = rng.random_range(0..cfg.num_classes);
            let n_sentences = rng.random_range(2..=3);
            (0..n_sentences)
                .map(|_| {
                    let mut tokens = vocab.sentence(cfg, class, &mut rng);
                    if rng.random_bool(cfg.label_word_rate) {
                        let at = rng.random_range(0..=tokens.len());
                        tokens.insert(at, vocab.label_words[class].clone());
                    }
                    finish_sentence(tokens)
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    let templates = SYNTH_TEMPLATES
        .iter()
        .map(|p| Template::new(*p))
        .collect::<Result<_>>()?;
    Ok(SynthData {
        train,
        test,
        corpus,
        labels,
        templates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn schema_parsing() {
        let s: DatasetSchema = "label=0,text=1+2,base=1".parse().unwrap();
        assert_eq!(s.label_column, 0);
        assert_eq!(s.text_columns, vec![1, 2]);
        assert!(s.one_based);
        assert_eq!(s.to_string().parse::<DatasetSchema>().unwrap(), s);
        assert!("label=x".parse::<DatasetSchema>().is_err());
        assert!("base=2".parse::<DatasetSchema>().is_err());
    }

    #[test]
    fn loads_one_based_rows_and_quoted_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "3,Title,Body\n1,\"Wall St, again\",\"more, text\"\n").unwrap();
        let schema: DatasetSchema = "label=0,text=1+2,base=1".parse().unwrap();
        let ds = load_dataset(&path, &schema, 4, Split::Train).unwrap();
        assert_eq!(
            ds.records[0],
            TextRecord {
                text: "Title Body".into(),
                label: 2
            }
        );
        assert_eq!(ds.records[1].text, "Wall St, again more, text");
        assert_eq!(ds.records[1].label, 0);
    }

    #[test]
    fn bad_rows_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let schema: DatasetSchema = "label=0,text=1,base=1".parse().unwrap();
        fs::write(&path, "1,ok\n9,Title\n").unwrap();
        let err = load_dataset(&path, &schema, 4, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        fs::write(&path, "1,ok\n2,  \n").unwrap();
        assert!(matches!(
            load_dataset(&path, &schema, 4, Split::Train),
            Err(Error::Parse { line: 2, .. })
        ));
        fs::write(&path, "sports,ok\n").unwrap();
        assert!(load_dataset(&path, &schema, 4, Split::Train).is_err());
    }

    fn toy_dataset() -> TextDataset {
        let records = (0..30)
            .map(|i| TextRecord {
                text: format!("doc {i}"),
                label: i % 3,
            })
            .collect();
        TextDataset::new(Split::Train, 3, records).unwrap()
    }

    #[test]
    fn k_shot_is_uniform_and_seeded() {
        let ds = toy_dataset();
        let spec = EpisodeSpec {
            k: 1,
            seed: 4,
            template_index: 0,
        };
        let one = ds.k_shot_sample(&spec).unwrap();
        assert_eq!(one.len(), 3);
        let mut labels = one.labels();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
        assert_eq!(one, ds.k_shot_sample(&spec).unwrap());

        assert!(ds
            .k_shot_sample(&EpisodeSpec { k: 0, ..spec })
            .unwrap()
            .is_empty());
        assert!(ds.k_shot_sample(&EpisodeSpec { k: 11, ..spec }).is_err());
    }

    #[test]
    fn synth_is_reproducible_and_validated() {
        let cfg = SynthConfig {
            n_train: 40,
            n_test: 20,
            n_corpus_docs: 30,
            ..Default::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.train.len(), 40);
        assert_eq!(a.labels.len(), 10);

        assert!(synth_generate(&SynthConfig {
            num_classes: 1,
            ..cfg.clone()
        })
        .is_err());
        assert!(synth_generate(&SynthConfig {
            noise: 1.5,
            ..cfg.clone()
        })
        .is_err());
        let c = synth_generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn synth_corpus_mentions_every_label_word() {
        let cfg = SynthConfig {
            n_corpus_docs: 300,
            ..Default::default()
        };
        let data = synth_generate(&cfg).unwrap();
        for k in 0..data.labels.len() {
            let word = &data.labels.words(k)[0];
            assert!(data
                .corpus
                .iter()
                .any(|d| crate::templating::contains_word(d, word)));
        }
    }
}
