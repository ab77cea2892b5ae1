//! `[MASK]`-position embeddings: a deterministic hashed n-gram toy encoder and
//! the line-oriented interchange format used for precomputed vectors.
//!
//! Interchange format (UTF-8, one JSON object per line):
//!
//! ```text
//! {"m": 4, "source": "toy:m=4:seed=0"}
//! {"id": "row0", "label": 2, "v": [0.5, -0.25, 0.0, 0.8]}
//! {"id": "row1", "label": null, "v": [...]}
//! ```
//!
//! Values are written as 32-bit floats and widened to `f64` on load.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MaskEmbedding;

pub const MASK_TOKEN: &str = "[MASK]";

/// Token weights decay as `exp(-distance / POSITION_DECAY)` away from the mask.
const POSITION_DECAY: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Toy,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dim: usize,
    pub seed: u64,
    pub max_tokens: usize,
}

impl EncoderSpec {
    pub fn toy(dim: usize, seed: u64) -> Self {
        Self {
            kind: EncoderKind::Toy,
            dim,
            seed,
            max_tokens: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!(
                "encoder dimension must be >= 2, got {}",
                self.dim
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Provenance string written into embedding file headers.
    pub fn source(&self) -> String {
        match self.kind {
            EncoderKind::Toy => format!("toy:m={}:seed={}", self.dim, self.seed),
            EncoderKind::Precomputed => "precomputed".to_string(),
        }
    }
}

/// Stand-in for a masked language model: the `[MASK]` vector is a signed
/// feature-hashed bag of character 1/2/3-grams of the surrounding tokens,
/// weighted by proximity to the mask and L2-normalized.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    spec: EncoderSpec,
}

impl ToyEncoder {
    pub fn new(spec: EncoderSpec) -> Result<Self> {
        spec.validate()?;
        if spec.kind != EncoderKind::Toy {
            return Err(Error::Config("ToyEncoder needs a toy encoder spec".into()));
        }
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn encode(&self, prompted_text: &str) -> Result<Vec<f64>> {
        let (tokens, mask_pos) = tokenize_prompt(prompted_text, self.spec.max_tokens)?;
        let mut v = vec![0.0; self.spec.dim];
        for (pos, token) in tokens.iter().enumerate() {
            if pos == mask_pos {
                continue;
            }
            let weight = (-(pos.abs_diff(mask_pos) as f64) / POSITION_DECAY).exp();
            let grams = char_ngrams(token);
            let per_gram = weight / grams.len() as f64;
            for gram in grams {
                let h = seeded_hash(self.spec.seed, gram.as_bytes());
                let bucket = (h % self.spec.dim as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                v[bucket] += sign * per_gram;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Degenerate(format!(
                "text {prompted_text:?} hashes to the zero vector"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Lowercased whitespace tokens plus the index of the mask token.
///
/// Truncation to `max_tokens` always keeps the mask: tail tokens after it go
/// first, then head tokens before it.
fn tokenize_prompt(text: &str, max_tokens: usize) -> Result<(Vec<String>, usize)> {
    let lower = text.to_lowercase();
    let marker = MASK_TOKEN.to_lowercase();
    let count = lower.matches(&marker).count();
    if count != 1 {
        return Err(Error::Template(format!(
            "expected exactly one {MASK_TOKEN} marker, found {count} in {text:?}"
        )));
    }
    let (before, after) = lower.split_once(&marker).expect("one marker");
    let mut head: Vec<String> = before.split_whitespace().map(str::to_string).collect();
    let mut tail: Vec<String> = after.split_whitespace().map(str::to_string).collect();

    let budget = max_tokens.saturating_sub(1);
    if head.len() + tail.len() > budget {
        let keep_tail = tail.len().min(budget.saturating_sub(head.len()));
        tail.truncate(keep_tail);
        let drop_head = (head.len() + tail.len()).saturating_sub(budget);
        head.drain(..drop_head);
    }
    if head.is_empty() && tail.is_empty() {
        return Err(Error::Degenerate(format!(
            "no tokens besides {MASK_TOKEN} remain in {text:?}"
        )));
    }
    let mask_pos = head.len();
    let mut tokens = head;
    tokens.push(marker);
    tokens.extend(tail);
    Ok((tokens, mask_pos))
}

/// Character 1/2/3-grams of `<token>`; the lone boundary markers are skipped.
fn char_ngrams(token: &str) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for n in 1..=3 {
        for window in chars.windows(n) {
            if n == 1 && (window[0] == '<' || window[0] == '>') {
                continue;
            }
            grams.push(window.iter().collect());
        }
    }
    grams
}

/// FNV-1a over the bytes, keyed by the seed and finished with a splitmix64 mix.
/// Stable across platforms and compiler versions, unlike `DefaultHasher`.
fn seeded_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// An ordered collection of embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    source: String,
    records: Vec<MaskEmbedding>,
    ids: HashSet<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    m: usize,
    source: String,
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    id: std::borrow::Cow<'a, str>,
    label: Option<usize>,
    v: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, source: impl Into<String>) -> Self {
        Self {
            dim,
            source: source.into(),
            records: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MaskEmbedding] {
        &self.records
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn push(&mut self, record: MaskEmbedding) -> Result<()> {
        record.validate(self.dim)?;
        if self.ids.contains(&record.id) {
            return Err(Error::Data(format!("duplicate embedding id {:?}", record.id)));
        }
        self.ids.insert(record.id.clone());
        self.records.push(record);
        Ok(())
    }

    /// Labels of every record, failing on the first unlabeled one.
    pub fn require_labels(&self) -> Result<Vec<usize>> {
        self.records
            .iter()
            .map(|r| {
                r.label
                    .ok_or_else(|| Error::Data(format!("embedding {:?} has no label", r.id)))
            })
            .collect()
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = Self::new(self.dim, self.source.clone());
        for &i in indices {
            out.push(self.records[i].clone())?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();

        let header: Header = loop {
            match lines.next() {
                None => return Err(Error::parse(path, 1, "missing header line")),
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line)
                        .map_err(|e| Error::parse(path, i + 1, format!("bad header: {e}")))?;
                }
            }
        };
        if header.m == 0 {
            return Err(Error::parse(path, 1, "header declares m = 0"));
        }

        let mut store = Self::new(header.m, header.source);
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record<'_> = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, lineno, format!("bad record: {e}")))?;
            if rec.v.len() != store.dim {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "record has {} values but header declares m = {}",
                        rec.v.len(),
                        store.dim
                    ),
                ));
            }
            if let Some(j) = rec.v.iter().position(|v| !v.is_finite()) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("non-finite value at index {j}"),
                ));
            }
            let emb = MaskEmbedding::new(
                rec.id.into_owned(),
                rec.v.iter().map(|&x| f64::from(x)).collect(),
                rec.label,
            );
            store
                .push(emb)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        }
        Ok(store)
    }

    /// Writes the store, replacing `path` atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| {
            let header = Header {
                m: self.dim,
                source: self.source.clone(),
            };
            writeln!(
                w,
                "{}",
                serde_json::to_string(&header).expect("header serializes")
            )?;
            for r in &self.records {
                let rec = Record {
                    id: std::borrow::Cow::Borrowed(&r.id),
                    label: r.label,
                    v: r.vector.iter().map(|&x| x as f32).collect(),
                };
                writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
            }
            Ok(())
        })
    }
}

/// Writes through a sibling temp file and renames it over `path`.
pub(crate) fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
