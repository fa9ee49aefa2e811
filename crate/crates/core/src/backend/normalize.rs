use crate::dataio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::norm;

/// Vectors with norm below this are rejected by [`length_normalize`].
pub const MIN_NORM: f64 = 1e-12;

/// Subtracts the mean of `mean_source` from every vector of `emb`.
pub fn mean_normalize(emb: &EmbeddingSet, mean_source: &EmbeddingSet) -> Result<EmbeddingSet> {
    if mean_source.is_empty() {
        return Err(Error::Degenerate("mean source set is empty".into()));
    }
    subtract_mean(emb, &mean_source.mean()?)
}

pub fn subtract_mean(emb: &EmbeddingSet, mean: &[f64]) -> Result<EmbeddingSet> {
    if !emb.is_empty() && emb.dim() != mean.len() {
        return Err(Error::dims(format!(
            "mean of dimension {} for vectors of dimension {}",
            mean.len(),
            emb.dim()
        )));
    }
    emb.map_vectors(|v| Ok(v.iter().zip(mean).map(|(x, m)| x - m).collect()))
}

/// Scales every vector to unit Euclidean norm.
pub fn length_normalize(emb: &EmbeddingSet) -> Result<EmbeddingSet> {
    if let Some((id, _)) = emb.iter().find(|(_, v)| norm(v) < MIN_NORM) {
        return Err(Error::Degenerate(format!("zero-norm vector `{id}`")));
    }
    emb.map_vectors(|v| {
        let n = norm(v);
        Ok(v.iter().map(|x| x / n).collect())
    })
}
