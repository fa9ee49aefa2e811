use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};

use super::trials::ScoreSet;
use crate::error::{Error, Result};

pub const DEFAULT_P_TARGET: f64 = 0.01;

/// One operating point. A trial is accepted when `score >= threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_miss: f64,
}

/// Operating points at `-inf`, every distinct score (ascending) and `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetCurve {
    points: Vec<DetPoint>,
}

fn check_labels(s: &ScoreSet) -> Result<(usize, usize)> {
    let n_tar = s.trials().n_target();
    let n_non = s.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::Degenerate(format!(
            "need target and nontarget trials, got {n_tar} and {n_non}"
        )));
    }
    Ok((n_tar, n_non))
}

/// Sweeps the sorted scores once. At threshold `t`, misses are targets
/// strictly below `t` and false alarms are nontargets at or above it.
pub fn compute_det(s: &ScoreSet) -> Result<DetCurve> {
    let (n_tar, n_non) = check_labels(s)?;
    let mut sorted: Vec<(f64, bool)> = s.iter().map(|(t, v)| (v, t.target)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let point = |t: f64, miss: usize, below_non: usize| DetPoint {
        threshold: t,
        p_fa: (n_non - below_non) as f64 / n_non as f64,
        p_miss: miss as f64 / n_tar as f64,
    };
    let mut points = Vec::with_capacity(sorted.len() + 2);
    points.push(point(f64::NEG_INFINITY, 0, 0));
    let (mut miss, mut below_non) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        points.push(point(t, miss, below_non));
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                miss += 1;
            } else {
                below_non += 1;
            }
            i += 1;
        }
    }
    points.push(point(f64::INFINITY, miss, below_non));
    Ok(DetCurve { points })
}

impl DetCurve {
    pub fn points(&self) -> &[DetPoint] {
        &self.points
    }

    /// Equal error rate from the first point with `p_miss >= p_fa`,
    /// interpolated linearly against its predecessor when the two rates
    /// differ there.
    pub fn eer(&self) -> f64 {
        eer_from_rates(self.points.iter().map(|p| (p.p_miss, p.p_fa)))
    }

    pub fn min_dcf(&self, p_target: f64, c_miss: f64, c_fa: f64) -> Result<f64> {
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "target prior {p_target} must lie in (0, 1)"
            )));
        }
        if !(c_miss > 0.0 && c_fa > 0.0) {
            return Err(Error::InvalidArgument("detection costs must be positive".into()));
        }
        let best = self
            .points
            .iter()
            .map(|p| c_miss * p.p_miss * p_target + c_fa * p.p_fa * (1.0 - p_target))
            .fold(f64::INFINITY, f64::min);
        Ok(best / (c_miss * p_target).min(c_fa * (1.0 - p_target)))
    }

    /// `threshold p_fa p_miss [probit_fa probit_miss]` with a header row.
    pub fn to_tsv(&self, probit: bool) -> String {
        let mut out = String::from("threshold\tp_fa\tp_miss");
        if probit {
            out.push_str("\tprobit_fa\tprobit_miss");
        }
        out.push('\n');
        for p in &self.points {
            write!(out, "{}\t{}\t{}", p.threshold, p.p_fa, p.p_miss).unwrap();
            if probit {
                write!(out, "\t{}\t{}", probit_of(p.p_fa), probit_of(p.p_miss)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// `rates` yields `(p_miss, p_fa)` in ascending threshold order.
fn eer_from_rates(rates: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    for (m1, f1) in rates {
        if m1 >= f1 {
            if m1 == f1 {
                return m1;
            }
            let Some((m0, f0)) = prev else {
                return m1;
            };
            let alpha = (f0 - m0) / ((m1 - m0) - (f1 - f0));
            return m0 + alpha * (m1 - m0);
        }
        prev = Some((m1, f1));
    }
    unreachable!("the +inf point always has p_miss = 1 >= p_fa = 0")
}

/// Inverse standard-normal CDF; `±inf` at 0 and 1.
pub fn probit_of(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        Normal::standard().inverse_cdf(p)
    }
}

pub fn eer(s: &ScoreSet) -> Result<f64> {
    Ok(compute_det(s)?.eer())
}

pub fn min_dcf(s: &ScoreSet, p_target: f64, c_miss: f64, c_fa: f64) -> Result<f64> {
    compute_det(s)?.min_dcf(p_target, c_miss, c_fa)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(targets: &[f64], nontargets: &[f64]) -> ScoreSet {
        let pairs: Vec<(f64, bool)> = targets
            .iter()
            .map(|&s| (s, true))
            .chain(nontargets.iter().map(|&s| (s, false)))
            .collect();
        ScoreSet::from_labeled(&pairs).unwrap()
    }

    #[test]
    fn separable_curve_reaches_origin() {
        let det = compute_det(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap();
        assert!(det.points().iter().any(|p| p.p_fa == 0.0 && p.p_miss == 0.0));
        assert_eq!(det.eer(), 0.0);
    }

    #[test]
    fn single_label_rejected() {
        assert!(compute_det(&set(&[0.1, 0.2], &[])).is_err());
        assert!(eer(&set(&[], &[0.3])).is_err());
    }

    #[test]
    fn brute_force_small_case() {
        let s = set(&[0.9, 0.8, 0.7], &[0.1, 0.2, 0.75]);
        let det = compute_det(&s).unwrap();
        let at = det.points().iter().find(|p| p.threshold == 0.75).unwrap();
        assert_eq!((at.p_miss, at.p_fa), (1.0 / 3.0, 1.0 / 3.0));
        assert_eq!(det.eer(), 1.0 / 3.0);
    }

    #[test]
    fn inverted_scores() {
        assert_eq!(eer(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap(), 1.0);
    }

    #[test]
    fn interpolated_crossing() {
        let s = set(&[1.0, 2.0, 3.0], &[0.0, 2.5]);
        let det = compute_det(&s).unwrap();
        let rates: Vec<(f64, f64)> = det.points().iter().map(|p| (p.p_miss, p.p_fa)).collect();
        // t = 2: (1/3, 1/2), t = 2.5: (2/3, 1/2); the crossing sits halfway.
        assert_eq!(rates[3], (1.0 / 3.0, 0.5));
        assert_eq!(rates[4], (2.0 / 3.0, 0.5));
        assert!((det.eer() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn min_dcf_examples() {
        assert_eq!(
            min_dcf(&set(&[2.0, 3.0], &[1.0, 0.5]), DEFAULT_P_TARGET, 1.0, 1.0).unwrap(),
            0.0
        );
        let flat = set(&[1.0, 1.0], &[1.0, 1.0, 1.0]);
        assert_eq!(min_dcf(&flat, DEFAULT_P_TARGET, 1.0, 1.0).unwrap(), 1.0);
        let small = set(&[2.0, 3.0], &[1.0, 2.5]);
        assert_eq!(min_dcf(&small, 0.5, 1.0, 1.0).unwrap(), 0.5);
        assert!(min_dcf(&small, 1.0, 1.0, 1.0).is_err());
        assert!(min_dcf(&small, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn monotone_rates() {
        let s = set(&[0.3, 0.1, 0.9, 0.3], &[0.2, 0.3, 0.0, 0.5, 0.5]);
        let det = compute_det(&s).unwrap();
        for w in det.points().windows(2) {
            assert!(w[0].threshold < w[1].threshold);
            assert!(w[1].p_fa <= w[0].p_fa && w[1].p_miss >= w[0].p_miss);
        }
        let first = det.points()[0];
        let last = *det.points().last().unwrap();
        assert_eq!((first.p_miss, first.p_fa), (0.0, 1.0));
        assert_eq!((last.p_miss, last.p_fa), (1.0, 0.0));
    }

    #[test]
    fn tsv_layout() {
        let det = compute_det(&set(&[1.0], &[0.0])).unwrap();
        let tsv = det.to_tsv(true);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "threshold\tp_fa\tp_miss\tprobit_fa\tprobit_miss");
        assert_eq!(lines[1], "-inf\t1\t0\tinf\t-inf");
        assert_eq!(lines.len(), 5);
        assert!((probit_of(0.975) - 1.959964).abs() < 1e-6);
    }
}
