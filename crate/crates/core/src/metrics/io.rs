//! Trial list and score file formats.
//!
//! Trial list: `<label 0|1> <enroll_id> <test_id>` per line.
//! Score file: `<enroll_id> <test_id> <score>` per line.
//! Fields are whitespace separated; blank lines are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MetricsError, TrialScores};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub target: bool,
    pub enroll: String,
    pub test: String,
}

pub type ScoreTable = HashMap<(String, String), f64>;

fn format_err(path: &str, line: usize, msg: impl Into<String>) -> MetricsError {
    MetricsError::Format {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String, MetricsError> {
    fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a trial list. `origin` names the source in error messages.
pub fn parse_trials(text: &str, origin: &str) -> Result<Vec<Trial>, MetricsError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [label, enroll, test] = fields[..] else {
            return Err(format_err(origin, lineno, format!("expected 3 fields, found {}", fields.len())));
        };
        let target = match label {
            "1" => true,
            "0" => false,
            other => return Err(format_err(origin, lineno, format!("trial label must be 0 or 1, got `{other}`"))),
        };
        out.push(Trial {
            target,
            enroll: enroll.to_string(),
            test: test.to_string(),
        });
    }
    Ok(out)
}

/// Parses a score file into a lookup keyed by `(enroll, test)`.
pub fn parse_scores(text: &str, origin: &str) -> Result<ScoreTable, MetricsError> {
    let mut out = ScoreTable::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [enroll, test, score] = fields[..] else {
            return Err(format_err(origin, lineno, format!("expected 3 fields, found {}", fields.len())));
        };
        let value: f64 = score
            .parse()
            .map_err(|_| format_err(origin, lineno, format!("score `{score}` is not a number")))?;
        if !value.is_finite() {
            return Err(format_err(origin, lineno, "score is not finite"));
        }
        out.insert((enroll.to_string(), test.to_string()), value);
    }
    Ok(out)
}

pub fn read_trials(path: &Path) -> Result<Vec<Trial>, MetricsError> {
    parse_trials(&read_text(path)?, &path.display().to_string())
}

pub fn read_scores(path: &Path) -> Result<ScoreTable, MetricsError> {
    parse_scores(&read_text(path)?, &path.display().to_string())
}

/// Looks up every trial's score and splits them by label.
pub fn join_trials(trials: &[Trial], scores: &ScoreTable) -> Result<TrialScores<f64>, MetricsError> {
    let mut target = Vec::new();
    let mut nontarget = Vec::new();
    for t in trials {
        let key = (t.enroll.clone(), t.test.clone());
        let s = *scores.get(&key).ok_or_else(|| MetricsError::MissingScore {
            enroll: t.enroll.clone(),
            test: t.test.clone(),
        })?;
        if t.target {
            target.push(s);
        } else {
            nontarget.push(s);
        }
    }
    TrialScores::new(target, nontarget)
}

pub fn write_trials(path: &Path, trials: &[Trial]) -> Result<(), MetricsError> {
    let mut text = String::new();
    for t in trials {
        let _ = writeln!(text, "{} {} {}", u8::from(t.target), t.enroll, t.test);
    }
    write_text(path, &text)
}

/// Writes `(enroll, test, score)` rows in the given order.
pub fn write_scores(path: &Path, rows: &[(String, String, f64)]) -> Result<(), MetricsError> {
    let mut text = String::new();
    for (e, t, s) in rows {
        let _ = writeln!(text, "{e} {t} {s}");
    }
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<(), MetricsError> {
    fs::write(path, text).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}
