use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
    #[default]
    Unspecified,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
            Domain::Unspecified => "unspecified",
        })
    }
}

/// Utterance-keyed vectors of one dimension, with an optional
/// utterance → speaker map and a domain tag.
///
/// Insertion order is preserved. An empty set may have `dim == 0`
/// (dimension not yet known); the first pushed vector fixes it.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    entries: IndexMap<String, Vec<f64>>,
    speakers: BTreeMap<String, String>,
    domain: Domain,
}

/// Integer speaker labels plus the sorted speaker vocabulary they index.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerLabels {
    pub labels: Vec<usize>,
    pub vocabulary: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, domain: Domain) -> Self {
        EmbeddingSet {
            dim,
            entries: IndexMap::new(),
            speakers: BTreeMap::new(),
            domain,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn set_domain(&mut self, domain: Domain) {
        self.domain = domain;
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn push(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("bad utterance id `{id}`")));
        }
        if self.dim == 0 && self.entries.is_empty() {
            if vector.is_empty() {
                return Err(Error::dims(format!("utterance `{id}` has no values")));
            }
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(Error::dims(format!(
                "utterance `{id}` has dimension {}, set has {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector of `{id}`")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::InvalidArgument(format!("duplicate utterance id `{id}`")));
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    pub fn set_speaker(&mut self, utt: &str, speaker: impl Into<String>) -> Result<()> {
        let speaker = speaker.into();
        if speaker.is_empty() || speaker.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("bad speaker id `{speaker}`")));
        }
        if !self.entries.contains_key(utt) {
            return Err(Error::MissingId(utt.to_owned()));
        }
        self.speakers.insert(utt.to_owned(), speaker);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn speaker(&self, id: &str) -> Option<&str> {
        self.speakers.get(id).map(String::as_str)
    }

    pub fn speaker_map(&self) -> &BTreeMap<String, String> {
        &self.speakers
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.values().map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// True when every utterance has a speaker.
    pub fn is_fully_labeled(&self) -> bool {
        !self.is_empty() && self.speakers.len() == self.entries.len()
    }

    /// Speaker index per utterance over a sorted vocabulary.
    pub fn speaker_labels(&self) -> Result<SpeakerLabels> {
        if !self.is_fully_labeled() {
            return Err(Error::Degenerate(
                "every utterance needs a speaker label".into(),
            ));
        }
        let vocabulary: Vec<String> = self
            .speakers
            .values()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let labels = self
            .entries
            .keys()
            .map(|id| {
                vocabulary
                    .binary_search(&self.speakers[id])
                    .expect("speaker in vocabulary")
            })
            .collect();
        Ok(SpeakerLabels { labels, vocabulary })
    }

    /// All vectors stacked as rows, in insertion order.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.is_empty() {
            return Err(Error::Degenerate("empty embedding set".into()));
        }
        let mut data = Vec::with_capacity(self.len() * self.dim);
        for v in self.entries.values() {
            data.extend_from_slice(v);
        }
        Ok(Matrix::from_raw(self.len(), self.dim, data))
    }

    /// Stacks the vectors at `positions` (insertion order indices).
    pub fn rows_matrix(&self, positions: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(positions.len() * self.dim);
        for &p in positions {
            data.extend_from_slice(&self.entries[p]);
        }
        Matrix::from_raw(positions.len(), self.dim, data)
    }

    /// Same ids, speakers and domain with new vectors (rows of `m`, in order).
    pub fn with_vectors(&self, m: &Matrix) -> Result<EmbeddingSet> {
        if m.rows() != self.len() {
            return Err(Error::dims(format!(
                "{} rows for {} utterances",
                m.rows(),
                self.len()
            )));
        }
        let mut out = EmbeddingSet::new(m.cols(), self.domain);
        for (i, id) in self.entries.keys().enumerate() {
            out.push(id.clone(), m.row(i).to_vec())?;
        }
        out.speakers = self.speakers.clone();
        Ok(out)
    }

    /// Applies `f` to every vector; all outputs must share one length.
    pub fn map_vectors(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<EmbeddingSet> {
        let mut out = EmbeddingSet::new(0, self.domain);
        for (id, v) in &self.entries {
            out.push(id.clone(), f(v)?)?;
        }
        if self.is_empty() {
            out.dim = self.dim;
        }
        out.speakers = self.speakers.clone();
        Ok(out)
    }

    /// Subset with the given ids, in the given order.
    pub fn select(&self, ids: &[&str]) -> Result<EmbeddingSet> {
        let mut out = EmbeddingSet::new(self.dim, self.domain);
        for &id in ids {
            let v = self.get(id).ok_or_else(|| Error::MissingId(id.to_owned()))?;
            out.push(id, v.to_vec())?;
            if let Some(s) = self.speaker(id) {
                out.speakers.insert(id.to_owned(), s.to_owned());
            }
        }
        Ok(out)
    }

    /// Drops the speaker map (e.g. to hand a set to unsupervised code).
    pub fn without_labels(&self) -> EmbeddingSet {
        let mut out = self.clone();
        out.speakers.clear();
        out
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Degenerate("mean of an empty set".into()));
        }
        let mut m = vec![0.0; self.dim];
        for v in self.entries.values() {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        Ok(m)
    }
}

/// One value with 17 significant digits, enough for an exact `f64` round trip.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn sorted_ids(set: &EmbeddingSet) -> Vec<&str> {
    let mut ids: Vec<&str> = set.ids().collect();
    ids.sort_unstable();
    ids
}

/// `utt_id v1 … vd` lines, sorted by utterance id.
pub fn format_embeddings(set: &EmbeddingSet) -> String {
    let mut out = String::new();
    for id in sorted_ids(set) {
        out.push_str(id);
        for v in set.get(id).expect("id from set") {
            out.push(' ');
            out.push_str(&format_value(*v));
        }
        out.push('\n');
    }
    out
}

/// `utt_id spk_id` lines, sorted by utterance id.
pub fn format_utt2spk(set: &EmbeddingSet) -> String {
    let mut out = String::new();
    for (utt, spk) in set.speaker_map() {
        out.push_str(utt);
        out.push(' ');
        out.push_str(spk);
        out.push('\n');
    }
    out
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_owned(),
        line,
        msg: msg.into(),
    }
}

/// Parses the vectors text format. `path` is only used in messages.
pub fn parse_embeddings(text: &str, path: &Path) -> Result<EmbeddingSet> {
    let mut set = EmbeddingSet::new(0, Domain::Unspecified);
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format_err(path, lineno, format!("unparseable value `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(format_err(path, lineno, format!("utterance `{id}` has no values")));
        }
        if !set.is_empty() && values.len() != set.dim() {
            return Err(format_err(
                path,
                lineno,
                format!(
                    "ragged dimensions: {} values, previous lines have {}",
                    values.len(),
                    set.dim()
                ),
            ));
        }
        if set.get(id).is_some() {
            return Err(format_err(path, lineno, format!("duplicate utterance id `{id}`")));
        }
        set.push(id, values)
            .map_err(|e| format_err(path, lineno, e.to_string()))?;
    }
    Ok(set)
}

/// Parses `utt_id spk_id` lines into `set`.
pub fn parse_utt2spk(text: &str, path: &Path, set: &mut EmbeddingSet) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [utt, spk] => {
                if !seen.insert(utt.to_string()) {
                    return Err(format_err(path, lineno, format!("duplicate utterance `{utt}`")));
                }
                if set.get(utt).is_none() {
                    return Err(format_err(
                        path,
                        lineno,
                        format!("utterance `{utt}` has no vector"),
                    ));
                }
                set.set_speaker(utt, *spk)
                    .map_err(|e| format_err(path, lineno, e.to_string()))?;
            }
            _ => return Err(format_err(path, lineno, "expected `utt_id spk_id`")),
        }
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(vectors: &Path, utt2spk: Option<&Path>) -> Result<EmbeddingSet> {
    let mut set = parse_embeddings(&read_text(vectors)?, vectors)?;
    if let Some(p) = utt2spk {
        parse_utt2spk(&read_text(p)?, p, &mut set)?;
    }
    Ok(set)
}

pub fn write_embeddings(set: &EmbeddingSet, vectors: &Path, utt2spk: Option<&Path>) -> Result<()> {
    std::fs::write(vectors, format_embeddings(set)).map_err(|e| Error::io(vectors, e))?;
    if let Some(p) = utt2spk {
        std::fs::write(p, format_utt2spk(set)).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}
