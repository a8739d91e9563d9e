//! The seven basic emotions and per-frame score vectors.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const NUM_EMOTIONS: usize = 7;

/// Basic emotion classes in the fixed output order of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Joy,
    Sadness,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_EMOTIONS] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Emotion> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .iter()
            .copied()
            .find(|e| e.name() == lower)
            .ok_or_else(|| Error::Usage(format!("unknown emotion '{s}'")))
    }
}

impl Serialize for Emotion {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Emotion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Probability vector over [`Emotion::ALL`].
///
/// Every entry lies in [0, 1] and the entries sum to 1 within 1e-6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionScores([f64; NUM_EMOTIONS]);

impl EmotionScores {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(values: [f64; NUM_EMOTIONS]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("emotion score {v} is not finite")));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!("emotion scores {values:?} leave [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Data(format!("emotion scores sum to {sum}, not 1")));
        }
        Ok(EmotionScores(values))
    }

    /// Builds scores from a probability slice of length 7 (e.g. a softmax output).
    pub fn from_probs<T: Copy + Into<f64>>(probs: &[T]) -> Result<Self> {
        if probs.len() != NUM_EMOTIONS {
            return Err(Error::Shape(format!(
                "expected {NUM_EMOTIONS} probabilities, got {}",
                probs.len()
            )));
        }
        let mut values = [0.0; NUM_EMOTIONS];
        for (v, p) in values.iter_mut().zip(probs) {
            *v = (*p).into();
        }
        Self::new(values)
    }

    pub fn uniform() -> Self {
        EmotionScores([1.0 / NUM_EMOTIONS as f64; NUM_EMOTIONS])
    }

    pub fn one_hot(emotion: Emotion) -> Self {
        let mut values = [0.0; NUM_EMOTIONS];
        values[emotion.index()] = 1.0;
        EmotionScores(values)
    }

    pub fn values(&self) -> &[f64; NUM_EMOTIONS] {
        &self.0
    }

    pub fn get(&self, emotion: Emotion) -> f64 {
        self.0[emotion.index()]
    }

    /// The predominant emotion; ties go to the lowest index.
    pub fn dominant(&self) -> Emotion {
        Emotion::ALL[argmax(&self.0)]
    }
}

impl Serialize for EmotionScores {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(NUM_EMOTIONS))?;
        for e in Emotion::ALL {
            map.serialize_entry(e.name(), &self.0[e.index()])?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for EmotionScores {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ScoresVisitor;

        impl<'de> Visitor<'de> for ScoresVisitor {
            type Value = EmotionScores;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from emotion name to probability")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
                let mut values = [0.0; NUM_EMOTIONS];
                let mut seen = [false; NUM_EMOTIONS];
                while let Some((emotion, value)) = access.next_entry::<Emotion, f64>()? {
                    if seen[emotion.index()] {
                        return Err(de::Error::custom(format!("duplicate emotion '{emotion}'")));
                    }
                    seen[emotion.index()] = true;
                    values[emotion.index()] = value;
                }
                if let Some(i) = seen.iter().position(|s| !s) {
                    return Err(de::Error::custom(format!("missing emotion '{}'", Emotion::ALL[i])));
                }
                EmotionScores::new(values).map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_map(ScoresVisitor)
    }
}
