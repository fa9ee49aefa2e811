//! Two-covariance PLDA: `x = μ + y + ε`, `y ~ N(0, Φb)`, `ε ~ N(0, Φw)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::lda::class_stats;
use crate::dataio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, inverse_spd, log_det_spd, solve_lower, sym_eig, Matrix};
use crate::modelfile::{Item, ModelFile, Role};

pub const DEFAULT_EM_ITERS: usize = 10;
pub const DEFAULT_WITHIN_SCALE: f64 = 0.75;
pub const DEFAULT_BETWEEN_SCALE: f64 = 0.25;

/// Matrices for the closed-form verification score.
///
/// With `T = Φb + Φw` and `S = T − Φb T⁻¹ Φb`, the same-speaker joint
/// covariance `[[T, Φb], [Φb, T]]` has inverse blocks `A = S⁻¹` (diagonal)
/// and `−T⁻¹ Φb A` (off-diagonal), so for centered `e`, `t`:
///
/// `llr = ½ eᵀQe + ½ tᵀQt + eᵀPt + k` with `Q = T⁻¹ − A`,
/// `P = T⁻¹ Φb A` and `k = ½ ln|T| − ½ ln|S|`.
#[derive(Clone, Debug, PartialEq)]
struct ScoringCache {
    q: Matrix,
    p: Matrix,
    constant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PldaModel {
    mu: Vec<f64>,
    phi_b: Matrix,
    phi_w: Matrix,
    cache: ScoringCache,
}

impl PldaModel {
    /// Validates `Φb` (symmetric PSD) and `Φw` (SPD) and precomputes the
    /// scoring matrices.
    pub fn new(mu: Vec<f64>, mut phi_b: Matrix, mut phi_w: Matrix) -> Result<Self> {
        let d = mu.len();
        if phi_b.shape() != (d, d) || phi_w.shape() != (d, d) {
            return Err(Error::dims(format!(
                "PLDA of dimension {d} with covariances {:?} and {:?}",
                phi_b.shape(),
                phi_w.shape()
            )));
        }
        cholesky(&phi_w)?;
        let (b_vals, _) = sym_eig(&phi_b)?;
        let scale = b_vals.first().copied().unwrap_or(0.0).abs().max(phi_w.max_abs());
        if let Some(&low) = b_vals.last() {
            if low < -1e-10 * scale {
                return Err(Error::InvalidArgument(format!(
                    "between-speaker covariance has negative eigenvalue {low:e}"
                )));
            }
        }
        phi_b.symmetrize();
        phi_w.symmetrize();

        let total = phi_b.add(&phi_w)?;
        let t_inv = inverse_spd(&total)?;
        let mut s = total.sub(&phi_b.matmul(&t_inv)?.matmul(&phi_b)?)?;
        s.symmetrize();
        let a = inverse_spd(&s)?;
        let mut p = t_inv.matmul(&phi_b)?.matmul(&a)?;
        p.symmetrize();
        let mut q = t_inv.sub(&a)?;
        q.symmetrize();
        let constant = 0.5 * log_det_spd(&total)? - 0.5 * log_det_spd(&s)?;
        Ok(PldaModel {
            mu,
            phi_b,
            phi_w,
            cache: ScoringCache { q, p, constant },
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn phi_b(&self) -> &Matrix {
        &self.phi_b
    }

    pub fn phi_w(&self) -> &Matrix {
        &self.phi_w
    }

    /// Same-speaker vs different-speaker log-likelihood ratio.
    pub fn score(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        let d = self.dim();
        if enroll.len() != d || test.len() != d {
            return Err(Error::dims(format!(
                "PLDA of dimension {d} scoring vectors of dimension {} and {}",
                enroll.len(),
                test.len()
            )));
        }
        let e: Vec<f64> = enroll.iter().zip(&self.mu).map(|(x, m)| x - m).collect();
        let t: Vec<f64> = test.iter().zip(&self.mu).map(|(x, m)| x - m).collect();
        let c = &self.cache;
        let qe = c.q.matvec(&e)?;
        let qt = c.q.matvec(&t)?;
        let pt = c.p.matvec(&t)?;
        Ok(0.5 * dot(&e, &qe) + 0.5 * dot(&t, &qt) + dot(&e, &pt) + c.constant)
    }

    pub fn to_file(&self) -> ModelFile {
        let mut f = ModelFile::new(Role::Plda);
        f.push("mu", Item::Vector(self.mu.clone())).expect("fresh file");
        f.push("phi_b", Item::Matrix(self.phi_b.clone()))
            .expect("fresh file");
        f.push("phi_w", Item::Matrix(self.phi_w.clone()))
            .expect("fresh file");
        f
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        f.expect_role(Role::Plda)?;
        PldaModel::new(
            f.vector("mu")?.to_vec(),
            f.matrix("phi_b")?.clone(),
            f.matrix("phi_w")?.clone(),
        )
    }
}

/// Fitted model plus the training log-likelihood before the first and
/// after every EM iteration.
#[derive(Clone, Debug)]
pub struct PldaFit {
    pub model: PldaModel,
    pub loglik: Vec<f64>,
}

/// Centered per-speaker sufficient statistics.
struct SpeakerStats {
    /// Speaker mean minus the global mean, with its utterance count.
    means: Vec<(Vec<f64>, usize)>,
    /// Sum over speakers of `Σ (x − x̄)(x − x̄)ᵀ`.
    within_scatter: Matrix,
    n: usize,
}

fn speaker_stats(emb: &EmbeddingSet) -> Result<(Vec<f64>, SpeakerStats)> {
    let cs = class_stats(emb)?;
    let n = emb.len();
    let means = cs
        .class_means
        .iter()
        .zip(&cs.class_counts)
        .map(|(m, &c)| (m.iter().zip(&cs.mean).map(|(a, g)| a - g).collect(), c))
        .collect();
    Ok((
        cs.mean,
        SpeakerStats {
            means,
            within_scatter: cs.within.scale(n as f64),
            n,
        },
    ))
}

/// Exact log-likelihood of the training data under `(Φb, Φw)`.
///
/// Each speaker's utterances factor into the speaker mean,
/// `x̄ ~ N(μ, Φb + Φw/n)`, times `n − 1` orthonormal contrasts that are
/// i.i.d. `N(0, Φw)`; the orthogonal change of variables contributes
/// `−(d/2) ln n`.
fn log_likelihood(stats: &SpeakerStats, phi_b: &Matrix, phi_w: &Matrix) -> Result<f64> {
    let d = phi_b.rows() as f64;
    let ln2pi = (2.0 * PI).ln();
    let w_inv = inverse_spd(phi_w)?;
    let logdet_w = log_det_spd(phi_w)?;
    let mut ll = 0.0;

    let mut by_count: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for (m, c) in &stats.means {
        by_count.entry(*c).or_default().push(m);
    }
    for (&c, means) in &by_count {
        let cov = phi_b.add(&phi_w.scale(1.0 / c as f64))?;
        let l = cholesky(&cov)?;
        let logdet = 2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>();
        for m in means {
            let z = solve_lower(&l, &Matrix::column(m))?;
            let quad: f64 = z.as_slice().iter().map(|v| v * v).sum();
            ll += -0.5 * (d * ln2pi + logdet + quad) - 0.5 * d * (c as f64).ln();
            ll += -0.5 * (c as f64 - 1.0) * (d * ln2pi + logdet_w);
        }
    }
    let st = stats.within_scatter.transpose();
    let tr: f64 = (0..w_inv.rows()).map(|i| dot(w_inv.row(i), st.row(i))).sum();
    ll -= 0.5 * tr;
    Ok(ll)
}

/// One EM update of `(Φb, Φw)` with `μ` held at the global mean.
///
/// Posterior of a speaker variable given `n` utterances with centered mean
/// `m`: `Cov = Φb − Φb (Φb + Φw/n)⁻¹ Φb`, `E[y] = Φb (Φb + Φw/n)⁻¹ m`.
fn em_step(stats: &SpeakerStats, phi_b: &Matrix, phi_w: &Matrix) -> Result<(Matrix, Matrix)> {
    let d = phi_b.rows();
    let n_spk = stats.means.len() as f64;
    let mut new_b = Matrix::zeros(d, d);
    let mut new_w = stats.within_scatter.clone();

    let mut gains: BTreeMap<usize, (Matrix, Matrix)> = BTreeMap::new();
    for (m, c) in &stats.means {
        if !gains.contains_key(c) {
            let cov = phi_b.add(&phi_w.scale(1.0 / *c as f64))?;
            let gain = phi_b.matmul(&inverse_spd(&cov)?)?;
            let mut post_cov = phi_b.sub(&gain.matmul(phi_b)?)?;
            post_cov.symmetrize();
            gains.insert(*c, (gain, post_cov));
        }
        let (gain, post_cov) = &gains[c];
        let y = gain.matvec(m)?;
        new_b.add_outer(1.0, &y, &y);
        new_b.add_scaled(1.0, post_cov)?;
        let r: Vec<f64> = m.iter().zip(&y).map(|(a, b)| a - b).collect();
        let cf = *c as f64;
        new_w.add_outer(cf, &r, &r);
        new_w.add_scaled(cf, post_cov)?;
    }
    let mut new_b = new_b.scale(1.0 / n_spk);
    let mut new_w = new_w.scale(1.0 / stats.n as f64);
    new_b.symmetrize();
    new_w.symmetrize();
    Ok((new_b, new_w))
}

/// Fits the two-covariance model by EM, starting from the between- and
/// within-class scatter.
pub fn plda_fit(emb: &EmbeddingSet, iters: usize) -> Result<PldaFit> {
    let (mu, stats) = speaker_stats(emb)?;
    if stats.means.iter().all(|(_, c)| *c < 2) {
        return Err(Error::Degenerate(
            "within-speaker covariance is unidentifiable: every speaker has one utterance".into(),
        ));
    }
    let d = mu.len();
    let mut phi_w = stats.within_scatter.scale(1.0 / stats.n as f64);
    let mut phi_b = Matrix::zeros(d, d);
    for (m, _) in &stats.means {
        phi_b.add_outer(1.0 / stats.means.len() as f64, m, m);
    }
    phi_b.symmetrize();
    if cholesky(&phi_w).is_err() {
        return Err(Error::Degenerate(
            "within-speaker scatter is singular (identical or collinear vectors)".into(),
        ));
    }

    let mut loglik = vec![log_likelihood(&stats, &phi_b, &phi_w)?];
    for _ in 0..iters {
        let (b, w) = em_step(&stats, &phi_b, &phi_w)?;
        phi_b = b;
        phi_w = w;
        let ll = log_likelihood(&stats, &phi_b, &phi_w)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite("PLDA log-likelihood".into()));
        }
        loglik.push(ll);
    }
    Ok(PldaFit {
        model: PldaModel::new(mu, phi_b, phi_w)?,
        loglik,
    })
}

/// Unsupervised adaptation to a new domain.
///
/// The unlabeled set's covariance `C` (about its own mean, divided by `n`)
/// is compared with the model total `T = Φb + Φw` in a basis that whitens
/// `T`. Every eigen-direction of the whitened `C` with eigenvalue `s > 1`
/// carries excess variance `s − 1`; a `within_scale` share of it is added
/// to `Φw` and a `between_scale` share to `Φb` (mapped back through the
/// whitening). Directions with `s ≤ 1` are untouched, and `μ` is kept.
pub fn plda_adapt(
    m: &PldaModel,
    unlabeled: &EmbeddingSet,
    within_scale: f64,
    between_scale: f64,
) -> Result<PldaModel> {
    for (name, s) in [("within_scale", within_scale), ("between_scale", between_scale)] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1]")));
        }
    }
    if unlabeled.len() < 2 {
        return Err(Error::Degenerate(
            "PLDA adaptation needs at least two unlabeled vectors".into(),
        ));
    }
    let d = m.dim();
    if unlabeled.dim() != d {
        return Err(Error::dims(format!(
            "PLDA of dimension {d}, adaptation data of dimension {}",
            unlabeled.dim()
        )));
    }
    let mean = unlabeled.mean()?;
    let mut cov = Matrix::zeros(d, d);
    let inv_n = 1.0 / unlabeled.len() as f64;
    let mut diff = vec![0.0; d];
    for v in unlabeled.vectors() {
        for ((o, x), mu) in diff.iter_mut().zip(v).zip(&mean) {
            *o = x - mu;
        }
        cov.add_outer(inv_n, &diff, &diff);
    }
    cov.symmetrize();

    let total = m.phi_b.add(&m.phi_w)?;
    let l = cholesky(&total)?;
    let half = solve_lower(&l, &cov)?;
    let mut white = solve_lower(&l, &half.transpose())?;
    white.symmetrize();
    let (vals, vecs) = sym_eig(&white)?;

    let mut phi_w = m.phi_w.clone();
    let mut phi_b = m.phi_b.clone();
    for (j, &s) in vals.iter().enumerate() {
        if s <= 1.0 {
            continue;
        }
        let excess = s - 1.0;
        let u: Vec<f64> = (0..d).map(|i| vecs[(i, j)]).collect();
        let v = l.matvec(&u)?;
        phi_w.add_outer(within_scale * excess, &v, &v);
        phi_b.add_outer(between_scale * excess, &v, &v);
    }
    PldaModel::new(m.mu.clone(), phi_b, phi_w)
}
