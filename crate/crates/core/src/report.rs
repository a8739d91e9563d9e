//! Session aggregation, learner feedback and report output.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mindstate::{StateKind, StateOfMind};

/// Per-window states for one learner session, in window order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTimeline {
    pub session: String,
    pub states: Vec<StateOfMind>,
    /// Accepted frames left over in an incomplete trailing window.
    pub residual_frames: usize,
    /// Frames skipped by one-per-second sampling.
    #[serde(default)]
    pub dropped_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: String,
    /// One entry per distinct label, in order of first occurrence.
    pub counts: Vec<LabelCount>,
    pub dominant: Option<String>,
    pub empty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement_rate: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub timeline: SessionTimeline,
}

/// Tallies states per label. The dominant label is the most frequent one,
/// with ties going to whichever appeared first.
pub fn aggregate(timeline: &SessionTimeline) -> SessionReport {
    let mut order: Vec<&str> = Vec::new();
    let mut tally: HashMap<&str, usize> = HashMap::new();
    for s in &timeline.states {
        let n = tally.entry(s.label.as_str()).or_insert(0);
        if *n == 0 {
            order.push(s.label.as_str());
        }
        *n += 1;
    }
    let total = timeline.states.len();
    let counts: Vec<LabelCount> = order
        .iter()
        .map(|&label| LabelCount {
            label: label.to_string(),
            count: tally[label],
            proportion: tally[label] as f64 / total as f64,
        })
        .collect();
    let mut dominant: Option<&LabelCount> = None;
    for c in &counts {
        if dominant.is_none_or(|d| c.count > d.count) {
            dominant = Some(c);
        }
    }
    let mut warnings = Vec::new();
    if total == 0 {
        warnings.push("timeline has no completed windows".to_string());
    }
    SessionReport {
        session: timeline.session.clone(),
        dominant: dominant.map(|d| d.label.clone()),
        counts,
        empty: total == 0,
        agreement_rate: None,
        warnings,
        timeline: timeline.clone(),
    }
}

/// One learner's verdict on their session: either a single whole-session
/// flag or one flag per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session: String,
    pub candidate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agree: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FeedbackRecord {
    /// Flags that count toward agreement; per-interval flags take precedence.
    fn flags(&self) -> Vec<bool> {
        match (&self.intervals, self.agree) {
            (Some(iv), _) => iv.clone(),
            (None, Some(a)) => vec![a],
            (None, None) => Vec::new(),
        }
    }
}

pub fn parse_feedback(text: &str) -> Result<Vec<FeedbackRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: FeedbackRecord = serde_json::from_str(raw).map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if rec.agree.is_none() && rec.intervals.is_none() {
            return Err(Error::Data(format!("line {line}: record needs 'agree' or 'intervals'")));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_feedback(path: impl AsRef<Path>) -> Result<Vec<FeedbackRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feedback(&text)
}

/// Fraction of all agreement flags that are true.
pub fn agreement_rate(report: &SessionReport, feedback: &[FeedbackRecord]) -> Result<f64> {
    if feedback.is_empty() {
        return Err(Error::Data("no feedback records".into()));
    }
    let windows = report.timeline.states.len();
    let (mut agreed, mut total) = (0usize, 0usize);
    for rec in feedback {
        if rec.session != report.session {
            return Err(Error::Usage(format!(
                "feedback from candidate '{}' is for session '{}', report is '{}'",
                rec.candidate, rec.session, report.session
            )));
        }
        if let Some(iv) = &rec.intervals {
            if iv.len() > windows {
                return Err(Error::Data(format!(
                    "candidate '{}' rated {} intervals but the timeline has {windows}",
                    rec.candidate,
                    iv.len()
                )));
            }
        }
        let flags = rec.flags();
        agreed += flags.iter().filter(|&&f| f).count();
        total += flags.len();
    }
    if total == 0 {
        return Err(Error::Data("feedback contains no agreement flags".into()));
    }
    Ok(agreed as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// JSON: the whole report. CSV: one `start_time,label,score,kind` row per window.
pub fn emit_report(report: &SessionReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Csv => {
            let mut out = String::from("start_time,label,score,kind\n");
            for s in &report.timeline.states {
                let kind = match s.kind {
                    StateKind::Complex => "complex",
                    StateKind::FallbackBasic => "fallback-basic",
                };
                out.push_str(&format!("{},{},{},{}\n", s.start, s.label, s.score, kind));
            }
            out
        }
    }
}

pub fn write_report(report: &SessionReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, emit_report(report, format)).map_err(|e| Error::io(path, e))
}

/// Accepts either a full report document or a bare timeline.
pub fn parse_timeline_document(text: &str) -> Result<SessionTimeline> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        Report(Box<SessionReport>),
        Timeline(SessionTimeline),
    }
    match serde_json::from_str(text).map_err(|e| Error::Data(format!("timeline JSON: {e}")))? {
        Doc::Report(r) => Ok(r.timeline),
        Doc::Timeline(t) => Ok(t),
    }
}
