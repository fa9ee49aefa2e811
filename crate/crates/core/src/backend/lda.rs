use crate::dataio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, solve_lower, solve_upper_t, sym_eig, Matrix};
use crate::modelfile::{Item, ModelFile, Role};

/// Ridge added to the within-class scatter, relative to its mean diagonal.
pub const WITHIN_RIDGE: f64 = 1e-6;

/// Linear projection `y = P (x − mean)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaTransform {
    /// `[p × d]`, rows ordered by decreasing discriminability.
    pub projection: Matrix,
    pub mean: Vec<f64>,
    /// Generalized eigenvalues of the kept directions.
    pub eigenvalues: Vec<f64>,
}

/// Per-class means, global mean, and the within/between scatter matrices
/// (both divided by the sample count).
pub(crate) struct ClassStats {
    pub mean: Vec<f64>,
    pub class_means: Vec<Vec<f64>>,
    pub class_counts: Vec<usize>,
    pub within: Matrix,
    pub between: Matrix,
}

pub(crate) fn class_stats(emb: &EmbeddingSet) -> Result<ClassStats> {
    let labels = emb.speaker_labels()?;
    let k = labels.vocabulary.len();
    if k < 2 {
        return Err(Error::Degenerate(format!("need at least two classes, got {k}")));
    }
    let d = emb.dim();
    let n = emb.len() as f64;
    let mean = emb.mean()?;
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (v, &c) in emb.vectors().zip(&labels.labels) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(v) {
            *s += x;
        }
    }
    let class_means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|x| x / c as f64).collect())
        .collect();
    let mut within = Matrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (v, &c) in emb.vectors().zip(&labels.labels) {
        for ((o, x), m) in diff.iter_mut().zip(v).zip(&class_means[c]) {
            *o = x - m;
        }
        within.add_outer(1.0 / n, &diff, &diff);
    }
    let mut between = Matrix::zeros(d, d);
    for (m, &c) in class_means.iter().zip(&counts) {
        for ((o, x), g) in diff.iter_mut().zip(m).zip(&mean) {
            *o = x - g;
        }
        between.add_outer(c as f64 / n, &diff, &diff);
    }
    within.symmetrize();
    between.symmetrize();
    Ok(ClassStats {
        mean,
        class_means,
        class_counts: counts,
        within,
        between,
    })
}

/// Fits LDA by whitening the within-class scatter with its Cholesky factor
/// and diagonalizing the whitened between-class scatter. Projected data has
/// identity within-class covariance.
pub fn lda_fit(emb: &EmbeddingSet, p: usize) -> Result<LdaTransform> {
    let d = emb.dim();
    if p == 0 || p > d {
        return Err(Error::InvalidArgument(format!(
            "LDA dimension {p} must be in 1..={d}"
        )));
    }
    let stats = class_stats(emb)?;
    let mut sw = stats.within;
    let ridge = WITHIN_RIDGE * sw.trace() / d as f64;
    for i in 0..d {
        sw[(i, i)] += ridge;
    }
    let l = cholesky(&sw).map_err(|e| {
        Error::Degenerate(format!("within-class scatter is singular ({e})"))
    })?;
    // M = L⁻¹ S_b L⁻ᵀ
    let half = solve_lower(&l, &stats.between)?;
    let mut m = solve_lower(&l, &half.transpose())?;
    m.symmetrize();
    let (vals, vecs) = sym_eig(&m)?;
    let mut top = Matrix::zeros(d, p);
    for i in 0..d {
        for j in 0..p {
            top[(i, j)] = vecs[(i, j)];
        }
    }
    let w = solve_upper_t(&l, &top)?;
    Ok(LdaTransform {
        projection: w.transpose(),
        mean: stats.mean,
        eigenvalues: vals[..p].to_vec(),
    })
}

impl LdaTransform {
    pub fn input_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims(format!(
                "LDA expects dimension {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.output_dim())
            .map(|r| dot(self.projection.row(r), &centered))
            .collect())
    }

    pub fn to_file(&self) -> ModelFile {
        let mut f = ModelFile::new(Role::Lda);
        f.push("projection", Item::Matrix(self.projection.clone()))
            .expect("fresh file");
        f.push("mean", Item::Vector(self.mean.clone())).expect("fresh file");
        f.push("eigenvalues", Item::Vector(self.eigenvalues.clone()))
            .expect("fresh file");
        f
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        f.expect_role(Role::Lda)?;
        let t = LdaTransform {
            projection: f.matrix("projection")?.clone(),
            mean: f.vector("mean")?.to_vec(),
            eigenvalues: f.vector("eigenvalues")?.to_vec(),
        };
        if t.mean.len() != t.input_dim() || t.eigenvalues.len() != t.output_dim() {
            return Err(Error::dims("inconsistent LDA model file"));
        }
        Ok(t)
    }
}

/// `y = P (x − mean)` for every vector.
pub fn lda_apply(t: &LdaTransform, emb: &EmbeddingSet) -> Result<EmbeddingSet> {
    if !emb.is_empty() && emb.dim() != t.input_dim() {
        return Err(Error::dims(format!(
            "LDA expects dimension {}, set has {}",
            t.input_dim(),
            emb.dim()
        )));
    }
    emb.map_vectors(|v| t.apply_vec(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Domain;
    use crate::linalg::Rng;

    fn labeled(points: &[(&str, Vec<f64>)]) -> EmbeddingSet {
        let mut s = EmbeddingSet::new(points[0].1.len(), Domain::Source);
        for (i, (spk, v)) in points.iter().enumerate() {
            let id = format!("u{i:03}");
            s.push(id.clone(), v.clone()).unwrap();
            s.set_speaker(&id, *spk).unwrap();
        }
        s
    }

    /// Two classes that differ only along axis 0, equal within-class spread.
    fn axis_classes() -> EmbeddingSet {
        let mut pts = Vec::new();
        for (spk, c) in [("a", -2.0), ("b", 2.0)] {
            for (dx, dy) in [(-0.5, -1.0), (0.5, -1.0), (-0.5, 1.0), (0.5, 1.0)] {
                pts.push((spk, vec![c + dx, dy]));
            }
        }
        labeled(&pts)
    }

    #[test]
    fn separating_axis_found() {
        let t = lda_fit(&axis_classes(), 1).unwrap();
        let dir = t.projection.row(0);
        assert!(dir[1].abs() < 1e-9 * dir[0].abs(), "{dir:?}");
    }

    #[test]
    fn full_rank_projection() {
        let mut rng = Rng::new(8);
        let mut pts = Vec::new();
        for spk in ["a", "b", "c", "d"] {
            let c = rng.gaussian_sample(3);
            for _ in 0..10 {
                pts.push((spk, c.iter().map(|m| m + rng.gaussian()).collect()));
            }
        }
        let t = lda_fit(&labeled(&pts), 3).unwrap();
        // Whitened within-class scatter means PᵀP is invertible (full rank).
        let ppt = t.projection.matmul(&t.projection.transpose()).unwrap();
        assert!(crate::linalg::cholesky(&ppt).is_ok());
        assert!(t.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn single_class_rejected() {
        let s = labeled(&[("a", vec![1.0]), ("a", vec![2.0])]);
        assert!(matches!(lda_fit(&s, 1), Err(Error::Degenerate(_))));
        assert!(lda_fit(&axis_classes(), 3).is_err());
    }

    #[test]
    fn apply_examples() {
        let t = lda_fit(&axis_classes(), 2).unwrap();
        let at_mean = t.apply_vec(&t.mean).unwrap();
        assert!(at_mean.iter().all(|v| v.abs() < 1e-12));

        let ident = LdaTransform {
            projection: Matrix::identity(2),
            mean: vec![0.0, 0.0],
            eigenvalues: vec![1.0, 1.0],
        };
        assert_eq!(ident.apply_vec(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);

        let fixed = LdaTransform {
            projection: Matrix::from_rows(&[[1.0, 2.0], [0.0, -1.0]]).unwrap(),
            mean: vec![1.0, 1.0],
            eigenvalues: vec![2.0, 1.0],
        };
        // (x − m) = (2, −3): rows give 2 − 6 = −4 and 3.
        assert_eq!(fixed.apply_vec(&[3.0, -2.0]).unwrap(), vec![-4.0, 3.0]);
        assert!(fixed.apply_vec(&[1.0]).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let t = lda_fit(&axis_classes(), 2).unwrap();
        let back = LdaTransform::from_file(&ModelFile::from_bytes(&t.to_file().to_bytes()).unwrap())
            .unwrap();
        assert_eq!(back, t);
    }
}
