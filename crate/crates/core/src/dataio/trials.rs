use std::path::Path;

use crate::error::{Error, Result};
use crate::evalkit::{ScoreSet, Trial, TrialList};

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_owned(),
        line,
        msg: msg.into(),
    }
}

/// Parses `enroll_id test_id target|nontarget` lines, preserving order.
pub fn parse_trials(text: &str, path: &Path) -> Result<TrialList> {
    let mut trials = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (e, t, label) = match fields.as_slice() {
            [] => continue,
            [e, t, label] => (*e, *t, *label),
            _ => return Err(format_err(path, lineno, "expected `enroll_id test_id label`")),
        };
        let target = match label {
            "target" => true,
            "nontarget" => false,
            other => {
                return Err(format_err(
                    path,
                    lineno,
                    format!("label `{other}` is neither `target` nor `nontarget`"),
                ))
            }
        };
        if !seen.insert((e.to_owned(), t.to_owned())) {
            return Err(format_err(path, lineno, format!("duplicate trial ({e}, {t})")));
        }
        trials.push(Trial::new(e, t, target));
    }
    TrialList::new(trials)
}

pub fn format_trials(trials: &TrialList) -> String {
    let mut out = String::new();
    for t in trials.iter() {
        out.push_str(&format!("{} {} {}\n", t.enroll, t.test, t.label()));
    }
    out
}

pub fn read_trials(path: &Path) -> Result<TrialList> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials(&text, path)
}

pub fn write_trials(trials: &TrialList, path: &Path) -> Result<()> {
    std::fs::write(path, format_trials(trials)).map_err(|e| Error::io(path, e))
}

/// `enroll_id<TAB>test_id<TAB>score` lines in trial order.
pub fn format_scores(scores: &ScoreSet) -> String {
    let mut out = String::new();
    for (t, s) in scores.iter() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            t.enroll,
            t.test,
            super::format_value(s)
        ));
    }
    out
}

/// Parses a scores TSV and attaches labels from `trials` by `(enroll, test)`.
pub fn parse_scores(text: &str, path: &Path, trials: &TrialList) -> Result<ScoreSet> {
    let mut by_pair = std::collections::HashMap::with_capacity(trials.len());
    for (i, t) in trials.iter().enumerate() {
        by_pair.insert((t.enroll.as_str(), t.test.as_str()), i);
    }
    let mut scores: Vec<Option<f64>> = vec![None; trials.len()];
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if line.trim().is_empty() {
            continue;
        }
        let [e, t, s] = fields.as_slice() else {
            return Err(format_err(path, lineno, "expected `enroll_id<TAB>test_id<TAB>score`"));
        };
        let idx = *by_pair
            .get(&(*e, *t))
            .ok_or_else(|| format_err(path, lineno, format!("trial ({e}, {t}) not in trial list")))?;
        let v: f64 = s
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| format_err(path, lineno, format!("unparseable score `{s}`")))?;
        if scores[idx].replace(v).is_some() {
            return Err(format_err(path, lineno, format!("duplicate score for ({e}, {t})")));
        }
    }
    let missing = scores.iter().position(Option::is_none);
    if let Some(i) = missing {
        let t = &trials.trials()[i];
        return Err(Error::MissingId(format!("score for trial ({}, {})", t.enroll, t.test)));
    }
    ScoreSet::new(trials.clone(), scores.into_iter().map(Option::unwrap).collect())
}

pub fn read_scores(path: &Path, trials: &TrialList) -> Result<ScoreSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text, path, trials)
}

pub fn write_scores(scores: &ScoreSet, path: &Path) -> Result<()> {
    std::fs::write(path, format_scores(scores)).map_err(|e| Error::io(path, e))
}
