//! Seeded synthetic 7-class image sets: one geometric template per
//! emotion class, randomly shifted and corrupted with Gaussian noise.
//! Used for smoke-testing training end to end without a face corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::io::{LabeledDataset, LabeledImage, IMAGE_SIDE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub per_class: usize,
    /// Maximum template shift in pixels along each axis.
    pub max_shift: i32,
    /// Standard deviation of additive pixel noise, in gray levels.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            per_class: 100,
            max_shift: 3,
            noise_std: 20.0,
            seed: 2024,
        }
    }
}

const BACKGROUND: f64 = 40.0;
const FOREGROUND: f64 = 210.0;

/// Whether pixel (x, y), relative to the image centre, belongs to the
/// template of `class`.
fn template(class: Emotion, x: i32, y: i32) -> bool {
    match class {
        Emotion::Anger => (-14..=-9).contains(&y) && x.abs() <= 16,
        Emotion::Disgust => x.abs() <= 3 && y.abs() <= 16,
        Emotion::Fear => (x - y).abs() <= 3 && x.abs() <= 15,
        Emotion::Joy => {
            let r2 = x * x + y * y;
            (100..=196).contains(&r2)
        }
        Emotion::Sadness => (x.abs() <= 2 || y.abs() <= 2) && x.abs() <= 15 && y.abs() <= 15,
        Emotion::Surprise => x.abs() <= 16 && y.abs() <= 16 && ((x + 32) / 8 + (y + 32) / 8) % 2 == 0,
        Emotion::Neutral => (9..=15).contains(&y) && (x + y / 2).abs() <= 12,
    }
}

/// `per_class` images of each class, interleaved so that sample `i` has
/// class `i % 7`.
pub fn generate(config: &SyntheticConfig) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_std.max(0.0)).expect("finite noise std");
    let half = IMAGE_SIDE as i32 / 2;
    let mut samples = Vec::with_capacity(config.per_class * NUM_EMOTIONS);
    for _ in 0..config.per_class {
        for class in Emotion::ALL {
            let dx = rng.random_range(-config.max_shift..=config.max_shift);
            let dy = rng.random_range(-config.max_shift..=config.max_shift);
            let mut pixels = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE);
            for y in 0..IMAGE_SIDE as i32 {
                for x in 0..IMAGE_SIDE as i32 {
                    let on = template(class, x - half - dx, y - half - dy);
                    let base = if on { FOREGROUND } else { BACKGROUND };
                    let v: f64 = base + noise.sample(&mut rng);
                    pixels.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
            samples.push(LabeledImage { label: class, pixels });
        }
    }
    LabeledDataset {
        samples,
        source: None,
    }
}

/// Deterministic stratified split: every `k`-th round of classes goes to
/// the held-out part. `k = 5` holds out 20%.
pub fn split_every(dataset: LabeledDataset, k: usize) -> (LabeledDataset, LabeledDataset) {
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, s) in dataset.samples.into_iter().enumerate() {
        if k > 0 && (i / NUM_EMOTIONS) % k == k - 1 {
            held.push(s);
        } else {
            train.push(s);
        }
    }
    (
        LabeledDataset { samples: train, source: dataset.source.clone() },
        LabeledDataset { samples: held, source: dataset.source },
    )
}
