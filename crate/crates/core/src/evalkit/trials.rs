use std::collections::HashSet;

use crate::backend::PldaModel;
use crate::dataio::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub target: bool,
}

impl Trial {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, target: bool) -> Self {
        Trial {
            enroll: enroll.into(),
            test: test.into(),
            target,
        }
    }

    pub fn label(&self) -> &'static str {
        if self.target {
            "target"
        } else {
            "nontarget"
        }
    }
}

/// Ordered trials without duplicate `(enroll, test)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialList {
    trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(trials.len());
        for t in &trials {
            if !seen.insert((t.enroll.as_str(), t.test.as_str())) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate trial ({}, {})",
                    t.enroll, t.test
                )));
            }
        }
        Ok(TrialList { trials })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trial> {
        self.trials.iter()
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn n_target(&self) -> usize {
        self.trials.iter().filter(|t| t.target).count()
    }
}

/// Trials with one finite score each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    trials: TrialList,
    scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(trials: TrialList, scores: Vec<f64>) -> Result<Self> {
        if trials.len() != scores.len() {
            return Err(Error::dims(format!(
                "{} scores for {} trials",
                scores.len(),
                trials.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("trial score".into()));
        }
        Ok(ScoreSet { trials, scores })
    }

    /// Builds a score set from bare `(score, is_target)` pairs with
    /// synthetic trial ids.
    pub fn from_labeled(scores: &[(f64, bool)]) -> Result<Self> {
        let trials = scores
            .iter()
            .enumerate()
            .map(|(i, &(_, t))| Trial::new(format!("e{i}"), format!("t{i}"), t))
            .collect();
        ScoreSet::new(
            TrialList::new(trials)?,
            scores.iter().map(|&(s, _)| s).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn trials(&self) -> &TrialList {
        &self.trials
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Trial, f64)> {
        self.trials.iter().zip(self.scores.iter().copied())
    }

    pub fn target_scores(&self) -> Vec<f64> {
        self.iter().filter(|(t, _)| t.target).map(|(_, s)| s).collect()
    }

    pub fn nontarget_scores(&self) -> Vec<f64> {
        self.iter().filter(|(t, _)| !t.target).map(|(_, s)| s).collect()
    }

    /// Same trials with every score passed through `f`.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<ScoreSet> {
        ScoreSet::new(self.trials.clone(), self.scores.iter().map(|&s| f(s)).collect())
    }
}

/// PLDA log-likelihood ratio for every trial, in trial order.
pub fn score_trials(model: &PldaModel, emb: &EmbeddingSet, trials: &TrialList) -> Result<ScoreSet> {
    let mut scores = Vec::with_capacity(trials.len());
    for t in trials.iter() {
        let e = emb
            .get(&t.enroll)
            .ok_or_else(|| Error::MissingId(t.enroll.clone()))?;
        let x = emb
            .get(&t.test)
            .ok_or_else(|| Error::MissingId(t.test.clone()))?;
        scores.push(model.score(e, x)?);
    }
    ScoreSet::new(trials.clone(), scores)
}
