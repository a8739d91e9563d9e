//! Independent evaluation of the default state-of-mind table.

use engagement::mindstate::{detect_state, EmotionWindow, RuleSet, StateKind};
use engagement::{Emotion, EmotionScores};

/// The documented default table, indexed in emotion order
/// [anger, disgust, fear, joy, sadness, surprise, neutral].
pub const DEFAULT_TABLE: [(&str, [f64; 7], [f64; 7]); 4] = [
    ("confusion", [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0]),
    ("satisfaction", [0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.5], [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
    ("disappointment", [0.0, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
    ("frustration", [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
];
pub const THRESHOLD: f64 = 0.35;

const NAMES: [&str; 7] = ["anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"];

/// Frames 1–3 one-hot `early`, frames 4–6 one-hot `late`.
pub fn two_phase_window(early: Emotion, late: Emotion) -> EmotionWindow {
    let e = EmotionScores::one_hot(early);
    let l = EmotionScores::one_hot(late);
    EmotionWindow::at_seconds([e, e, e, l, l, l], 0.0).unwrap()
}

/// Expected (label, score, complex?) for a two-phase one-hot window: with
/// one-hot means the dot products reduce to picking single weights.
pub fn expected_two_phase(early: usize, late: usize) -> (String, f64, bool) {
    let mut best: Option<(&str, f64)> = None;
    for (name, we, wl) in DEFAULT_TABLE {
        let score = 0.5 * we[early] + 0.5 * wl[late];
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((name, score));
        }
    }
    let (name, score) = best.unwrap();
    if score >= THRESHOLD {
        return (name.to_string(), score, true);
    }
    // Window mean puts 0.5 on each phase's emotion (1.0 if they coincide);
    // ties go to the lower index.
    let dominant = early.min(late);
    let mass = if early == late { 1.0 } else { 0.5 };
    (NAMES[dominant].to_string(), mass, false)
}

/// All 49 early×late combinations whose detected state disagrees with the
/// direct evaluation.
pub fn brute_force_mismatches() -> Vec<(Emotion, Emotion)> {
    let rules = RuleSet::default_rules();
    let mut bad = Vec::new();
    for early in Emotion::ALL {
        for late in Emotion::ALL {
            let got = detect_state(&rules, &two_phase_window(early, late)).unwrap();
            let (label, score, complex) = expected_two_phase(early.index(), late.index());
            let kind_ok = (got.kind == StateKind::Complex) == complex;
            if got.label != label || (got.score - score).abs() > 1e-12 || !kind_ok {
                bad.push((early, late));
            }
        }
    }
    bad
}
