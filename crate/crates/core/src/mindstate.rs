//! State-of-mind detection over six-second windows of emotion scores.
//!
//! Each complex emotion is a [`StateRule`] with one weight vector for the
//! early half of the window (frames 1–3) and one for the late half (frames
//! 4–6). A rule scores
//!
//! ```text
//! 0.5 · <w_early, mean(frames 1..=3)> + 0.5 · <w_late, mean(frames 4..=6)>
//! ```
//!
//! The best rule wins when it reaches the threshold; otherwise the window's
//! dominant basic emotion is reported instead.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emotion::{argmax, Emotion, EmotionScores, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::report::SessionTimeline;

pub const WINDOW_LEN: usize = 6;
const HALF: usize = WINDOW_LEN / 2;

/// Tolerance for rule weight sums accepted from JSON.
pub const LOADER_SUM_TOLERANCE: f64 = 1e-6;
/// Tolerance held by a constructed [`StateRule`].
pub const RULE_SUM_TOLERANCE: f64 = 1e-9;

/// Six time-ordered score vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionWindow {
    frames: [EmotionScores; WINDOW_LEN],
    timestamps: [f64; WINDOW_LEN],
}

impl EmotionWindow {
    pub fn new(frames: [EmotionScores; WINDOW_LEN], timestamps: [f64; WINDOW_LEN]) -> Result<Self> {
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Usage(format!("window timestamps {timestamps:?} are not strictly increasing")));
        }
        Ok(EmotionWindow { frames, timestamps })
    }

    /// Window with frames at integer seconds `start, start + 1, ...`.
    pub fn at_seconds(frames: [EmotionScores; WINDOW_LEN], start: f64) -> Result<Self> {
        Self::new(frames, std::array::from_fn(|i| start + i as f64))
    }

    pub fn frames(&self) -> &[EmotionScores; WINDOW_LEN] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[f64; WINDOW_LEN] {
        &self.timestamps
    }

    pub fn start(&self) -> f64 {
        self.timestamps[0]
    }

    fn mean_of(frames: &[EmotionScores]) -> [f64; NUM_EMOTIONS] {
        let mut mean = [0.0; NUM_EMOTIONS];
        for f in frames {
            for (m, v) in mean.iter_mut().zip(f.values()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= frames.len() as f64);
        mean
    }

    pub fn early_mean(&self) -> [f64; NUM_EMOTIONS] {
        Self::mean_of(&self.frames[..HALF])
    }

    pub fn late_mean(&self) -> [f64; NUM_EMOTIONS] {
        Self::mean_of(&self.frames[HALF..])
    }

    pub fn mean(&self) -> [f64; NUM_EMOTIONS] {
        Self::mean_of(&self.frames)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateRule {
    name: String,
    early: [f64; NUM_EMOTIONS],
    late: [f64; NUM_EMOTIONS],
}

fn check_weights(name: &str, half: &str, w: &[f64; NUM_EMOTIONS], tolerance: f64) -> Result<()> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Data(format!("rule '{name}': {half} weights must be finite and non-negative")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(Error::Data(format!("rule '{name}': {half} weights sum to {sum}, not 1")));
    }
    Ok(())
}

impl StateRule {
    pub fn new(name: impl Into<String>, early: [f64; NUM_EMOTIONS], late: [f64; NUM_EMOTIONS]) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::Data("rule name must not be empty".into()));
        }
        check_weights(&name, "early", &early, RULE_SUM_TOLERANCE)?;
        check_weights(&name, "late", &late, RULE_SUM_TOLERANCE)?;
        Ok(StateRule { name, early, late })
    }

    /// Builds a rule from sparse `(emotion, weight)` lists; omitted emotions weigh 0.
    pub fn from_pairs(name: &str, early: &[(Emotion, f64)], late: &[(Emotion, f64)]) -> Result<Self> {
        let dense = |pairs: &[(Emotion, f64)]| {
            let mut w = [0.0; NUM_EMOTIONS];
            for &(e, v) in pairs {
                w[e.index()] += v;
            }
            w
        };
        Self::new(name, dense(early), dense(late))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn early(&self) -> &[f64; NUM_EMOTIONS] {
        &self.early
    }

    pub fn late(&self) -> &[f64; NUM_EMOTIONS] {
        &self.late
    }
}

fn dot(a: &[f64; NUM_EMOTIONS], b: &[f64; NUM_EMOTIONS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rule_score(rule: &StateRule, window: &EmotionWindow) -> f64 {
    let s = 0.5 * dot(&rule.early, &window.early_mean()) + 0.5 * dot(&rule.late, &window.late_mean());
    s.clamp(0.0, 1.0)
}

/// Ordered rules plus the acceptance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<StateRule>,
    threshold: f64,
}

impl RuleSet {
    pub const DEFAULT_THRESHOLD: f64 = 0.35;

    pub fn new(rules: Vec<StateRule>, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Data(format!("threshold {threshold} must lie strictly between 0 and 1")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = rules.iter().find(|r| !seen.insert(r.name.as_str())) {
            return Err(Error::Data(format!("duplicate rule name '{}'", dup.name)));
        }
        Ok(RuleSet { rules, threshold })
    }

    /// Confusion, satisfaction, disappointment and frustration at θ = 0.35.
    pub fn default_rules() -> Self {
        use Emotion::*;
        let rules = vec![
            StateRule::from_pairs("confusion", &[(Surprise, 1.0)], &[(Fear, 0.5), (Sadness, 0.5)]),
            StateRule::from_pairs("satisfaction", &[(Joy, 0.5), (Neutral, 0.5)], &[(Joy, 1.0)]),
            StateRule::from_pairs("disappointment", &[(Joy, 0.5), (Surprise, 0.5)], &[(Sadness, 1.0)]),
            StateRule::from_pairs("frustration", &[(Anger, 0.5), (Disgust, 0.5)], &[(Anger, 1.0)]),
        ];
        let rules = rules.into_iter().collect::<Result<Vec<_>>>().expect("default rules are valid");
        RuleSet::new(rules, Self::DEFAULT_THRESHOLD).expect("default rule set is valid")
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = threshold;
        Self::new(self.rules, threshold)
    }

    pub fn rules(&self) -> &[StateRule] {
        &self.rules
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RuleSetDoc = serde_json::from_str(text).map_err(|e| Error::Data(format!("rules JSON: {e}")))?;
        doc.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RuleSetDoc::from(self)).expect("rules serialize")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSetDoc {
    threshold: f64,
    rules: Vec<RuleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    name: String,
    #[serde(default)]
    early: BTreeMap<Emotion, f64>,
    #[serde(default)]
    late: BTreeMap<Emotion, f64>,
}

impl TryFrom<RuleSetDoc> for RuleSet {
    type Error = Error;

    fn try_from(doc: RuleSetDoc) -> Result<Self> {
        let dense = |name: &str, half: &str, map: &BTreeMap<Emotion, f64>| -> Result<[f64; NUM_EMOTIONS]> {
            let mut w = [0.0; NUM_EMOTIONS];
            for (e, &v) in map {
                w[e.index()] = v;
            }
            check_weights(name, half, &w, LOADER_SUM_TOLERANCE)?;
            // Renormalise sums that are within loader tolerance.
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            Ok(w)
        };
        let rules = doc
            .rules
            .iter()
            .map(|r| StateRule::new(&r.name, dense(&r.name, "early", &r.early)?, dense(&r.name, "late", &r.late)?))
            .collect::<Result<Vec<_>>>()?;
        RuleSet::new(rules, doc.threshold)
    }
}

impl From<&RuleSet> for RuleSetDoc {
    fn from(set: &RuleSet) -> Self {
        let sparse = |w: &[f64; NUM_EMOTIONS]| {
            Emotion::ALL
                .iter()
                .filter(|e| w[e.index()] != 0.0)
                .map(|&e| (e, w[e.index()]))
                .collect()
        };
        RuleSetDoc {
            threshold: set.threshold,
            rules: set
                .rules
                .iter()
                .map(|r| RuleDoc {
                    name: r.name.clone(),
                    early: sparse(&r.early),
                    late: sparse(&r.late),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Complex,
    FallbackBasic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateOfMind {
    pub label: String,
    pub score: f64,
    /// Timestamp of the window's first frame, in seconds.
    pub start: f64,
    pub kind: StateKind,
}

pub fn detect_state(rules: &RuleSet, window: &EmotionWindow) -> Result<StateOfMind> {
    if rules.rules.is_empty() {
        return Err(Error::Usage("cannot detect states with an empty rule set".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, rule) in rules.rules.iter().enumerate() {
        let s = rule_score(rule, window);
        if s > best.1 {
            best = (i, s);
        }
    }
    if best.1 >= rules.threshold {
        return Ok(StateOfMind {
            label: rules.rules[best.0].name.clone(),
            score: best.1,
            start: window.start(),
            kind: StateKind::Complex,
        });
    }
    let mean = window.mean();
    let dominant = Emotion::ALL[argmax(&mean)];
    Ok(StateOfMind {
        label: dominant.name().to_string(),
        score: mean[dominant.index()].clamp(0.0, 1.0),
        start: window.start(),
        kind: StateKind::FallbackBasic,
    })
}

/// Nominal second a timestamp belongs to: the nearest integer, halves up.
pub fn nominal_second(t: f64) -> i64 {
    (t + 0.5).floor() as i64
}

/// Accumulates one score vector per nominal second and emits a window after
/// every six accepted entries. Windows tile the stream without overlap.
///
/// Within a second, a later frame replaces the pending one when it lies
/// closer to the integer boundary. The sixth entry closes its window on
/// arrival, so later frames from that same second are dropped.
#[derive(Debug, Clone, Default)]
pub struct WindowBuffer {
    pending: Vec<(f64, i64, EmotionScores)>,
    last_t: Option<f64>,
    closed_second: Option<i64>,
    accepted: usize,
    dropped: usize,
}

impl WindowBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, scores: EmotionScores, t: f64) -> Result<Option<EmotionWindow>> {
        if !t.is_finite() {
            return Err(Error::Usage(format!("timestamp {t} is not finite")));
        }
        if let Some(last) = self.last_t {
            if t <= last {
                return Err(Error::Usage(format!("timestamp {t} does not increase past {last}")));
            }
        }
        self.last_t = Some(t);
        let second = nominal_second(t);
        if self.closed_second == Some(second) {
            self.dropped += 1;
            return Ok(None);
        }
        if let Some(last) = self.pending.last_mut() {
            if last.1 == second {
                self.dropped += 1;
                if (t - second as f64).abs() < (last.0 - second as f64).abs() {
                    *last = (t, second, scores);
                }
                return Ok(None);
            }
        }
        self.pending.push((t, second, scores));
        self.accepted += 1;
        if self.pending.len() < WINDOW_LEN {
            return Ok(None);
        }
        self.closed_second = Some(second);
        let entries = std::mem::take(&mut self.pending);
        let frames = std::array::from_fn(|i| entries[i].2);
        let timestamps = std::array::from_fn(|i| entries[i].0);
        EmotionWindow::new(frames, timestamps).map(Some)
    }

    /// Entries waiting for a window to fill.
    pub fn residual(&self) -> usize {
        self.pending.len()
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    /// Frames discarded because their second was already represented.
    pub fn dropped(&self) -> usize {
        self.dropped
    }
}

/// Picks one frame per nominal second: the one nearest the integer boundary,
/// earlier on ties. Input must be strictly time-ordered.
pub fn sample_per_second(frames: &[(f64, EmotionScores)]) -> Result<Vec<(f64, EmotionScores)>> {
    let mut out: Vec<(f64, EmotionScores)> = Vec::new();
    let mut prev: Option<f64> = None;
    for &(t, scores) in frames {
        if !t.is_finite() || prev.is_some_and(|p| t <= p) {
            return Err(Error::Usage(format!("stream timestamps must increase strictly (at t = {t})")));
        }
        prev = Some(t);
        let second = nominal_second(t);
        match out.last_mut() {
            Some(last) if nominal_second(last.0) == second => {
                if (t - second as f64).abs() < (last.0 - second as f64).abs() {
                    *last = (t, scores);
                }
            }
            _ => out.push((t, scores)),
        }
    }
    Ok(out)
}

/// Runs a scored frame stream through per-second sampling and the window
/// buffer, detecting one state per completed window.
pub fn stream_states(rules: &RuleSet, session: &str, frames: &[(f64, EmotionScores)]) -> Result<SessionTimeline> {
    let sampled = sample_per_second(frames)?;
    let mut buffer = WindowBuffer::new();
    let mut states = Vec::new();
    for (t, scores) in sampled.iter().copied() {
        if let Some(window) = buffer.push(scores, t)? {
            states.push(detect_state(rules, &window)?);
        }
    }
    Ok(SessionTimeline {
        session: session.to_string(),
        states,
        residual_frames: buffer.residual(),
        dropped_frames: frames.len() - sampled.len() + buffer.dropped(),
        source: None,
    })
}
