use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How mutual information is normalized by the two entropies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NmiNorm {
    /// `(H(A) + H(B)) / 2`
    #[default]
    Arithmetic,
    /// `√(H(A) H(B))`
    Sqrt,
    /// `max(H(A), H(B))`
    Max,
}

impl fmt::Display for NmiNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NmiNorm::Arithmetic => "arithmetic",
            NmiNorm::Sqrt => "sqrt",
            NmiNorm::Max => "max",
        })
    }
}

impl FromStr for NmiNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arithmetic" => Ok(NmiNorm::Arithmetic),
            "sqrt" => Ok(NmiNorm::Sqrt),
            "max" => Ok(NmiNorm::Max),
            _ => Err(Error::InvalidArgument(format!(
                "unknown NMI normalization `{s}` (arithmetic, sqrt, max)"
            ))),
        }
    }
}

/// Sums in ascending order, so the total depends only on the multiset of
/// terms (not on which partition came first).
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn entropy<'a>(counts: impl Iterator<Item = &'a usize>, n: f64) -> f64 {
    sorted_sum(
        counts
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .collect(),
    )
}

/// Normalized mutual information between two partitions of the same items.
/// Two single-cluster partitions agree perfectly (1); a single-cluster
/// partition against a non-trivial one carries no information (0).
pub fn nmi_with(a: &[usize], b: &[usize], norm: NmiNorm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(format!(
            "partitions of {} and {} items",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty partitions".into()));
    }
    let n = a.len() as f64;
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *joint.entry((x, y)).or_default() += 1;
    }
    let ha = entropy(ca.values(), n);
    let hb = entropy(cb.values(), n);
    match (ha == 0.0, hb == 0.0) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mi = sorted_sum(
        joint
            .iter()
            .map(|(&(x, y), &c)| {
                let pxy = c as f64 / n;
                let px = ca[&x] as f64 / n;
                let py = cb[&y] as f64 / n;
                pxy * (pxy / (px * py)).ln()
            })
            .collect(),
    );
    let denom = match norm {
        NmiNorm::Arithmetic => 0.5 * (ha + hb),
        NmiNorm::Sqrt => (ha * hb).sqrt(),
        NmiNorm::Max => ha.max(hb),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    nmi_with(a, b, NmiNorm::Arithmetic)
}
