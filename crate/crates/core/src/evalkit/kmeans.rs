use crate::dataio::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansResult {
    /// Cluster index per input row.
    pub assignment: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++: first centre uniform, later ones with probability
/// proportional to the squared distance to the nearest chosen centre.
fn seed_centroids(x: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.below(n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the running sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.below(free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    let mut c = Matrix::zeros(k, x.cols());
    for (r, &i) in chosen.iter().enumerate() {
        c.row_mut(r).copy_from_slice(x.row(i));
    }
    c
}

/// Nearest centroid per row (lowest index on ties) and the total inertia.
fn assign(x: &Matrix, c: &Matrix, out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        let mut best = (0, f64::INFINITY);
        for j in 0..c.rows() {
            let d = sq_dist(x.row(i), c.row(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        *slot = best.0;
        inertia += best.1;
    }
    inertia
}

fn lloyd(x: &Matrix, mut c: Matrix) -> KmeansResult {
    let (n, d, k) = (x.rows(), x.cols(), c.rows());
    let mut assignment = vec![usize::MAX; n];
    let mut next = vec![0; n];
    let mut trace = Vec::new();
    let mut inertia = f64::INFINITY;
    for _ in 0..MAX_LLOYD_ITERS {
        inertia = assign(x, &c, &mut next);
        trace.push(inertia);
        if next == assignment {
            break;
        }
        assignment.copy_from_slice(&next);
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        // Empty clusters keep their previous centroid.
        for (j, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                for (o, s) in c.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *o = s / cnt as f64;
                }
            }
        }
    }
    KmeansResult {
        assignment,
        centroids: c,
        inertia,
        trace,
    }
}

/// Best of `restarts` seeded Lloyd runs by final inertia (first wins ties).
pub fn kmeans_matrix(x: &Matrix, k: usize, restarts: usize, rng: &mut Rng) -> Result<KmeansResult> {
    if k == 0 || k > x.rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={}",
            x.rows()
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("at least one restart is required".into()));
    }
    let mut best: Option<KmeansResult> = None;
    for _ in 0..restarts {
        let run = lloyd(x, seed_centroids(x, k, rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Clusters the vectors of `emb` in entry order.
pub fn kmeans(emb: &EmbeddingSet, k: usize, restarts: usize, rng: &mut Rng) -> Result<KmeansResult> {
    if emb.is_empty() {
        return Err(Error::InvalidArgument("cannot cluster an empty set".into()));
    }
    kmeans_matrix(&emb.to_matrix()?, k, restarts, rng)
}
