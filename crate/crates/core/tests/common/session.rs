//! A hand-set brightness classifier and scripted PGM sessions for
//! end-to-end runs.

use engagement::io::{save_model, save_pgm};
use engagement::nn::LayerSpec::*;
use engagement::nn::LayerParams;
use engagement::pipeline::Frame;
use engagement::{Model, Tensor};
use std::path::{Path, PathBuf};

pub const BRIGHT: u8 = 230;
pub const DARK: u8 = 25;
pub const MID: u8 = 128;

/// 18 frames: bright ×6; bright ×3 then dark ×3; dark ×4 then mid ×2.
pub const SESSION_LEVELS: [u8; 18] = [
    BRIGHT, BRIGHT, BRIGHT, BRIGHT, BRIGHT, BRIGHT,
    BRIGHT, BRIGHT, BRIGHT, DARK, DARK, DARK,
    DARK, DARK, DARK, DARK, MID, MID,
];

/// Worked by hand from the default table: all-joy scores satisfaction
/// 0.5·0.5·p + 0.5·p ≈ 0.72; joy→sadness scores disappointment ≈ 0.72;
/// the last window's best rule is disappointment 0.5·(1/3)·p ≈ 0.16 < 0.35,
/// so it falls back to the dominant mean emotion, sadness (≈ 4/6·p).
pub const SESSION_LABELS: [&str; 3] = ["satisfaction", "disappointment", "sadness"];

/// Identity conv → ReLU → pool → dense. With mean brightness m the logits
/// are joy 20m − 10, sadness 10 − 20m, neutral 5 and −10 elsewhere.
pub fn brightness_model() -> Model<f32> {
    let n = 24 * 24;
    let mut conv = vec![0.0f32; 9];
    conv[4] = 1.0;
    let mut dense = vec![0.0f32; 7 * n];
    dense[3 * n..4 * n].fill(20.0 / n as f32);
    dense[4 * n..5 * n].fill(-20.0 / n as f32);
    let bias = vec![-10.0f32, -10.0, -10.0, -10.0, 10.0, -10.0, 5.0];
    Model::from_parameters(
        [1, 48, 48],
        vec![Conv2D { in_channels: 1, out_channels: 1 }, ReLU, MaxPool, Flatten, Dense { in_units: n, out_units: 7 }, Softmax],
        vec![
            LayerParams { weights: Tensor::new(vec![1, 1, 3, 3], conv).unwrap(), bias: Tensor::vector(vec![0.0]).unwrap() },
            LayerParams { weights: Tensor::new(vec![7, n], dense).unwrap(), bias: Tensor::vector(bias).unwrap() },
        ],
    )
    .unwrap()
}

/// Writes one 64×64 uniform PGM per level, a manifest with one frame per
/// second (slightly jittered), and the brightness model. Returns
/// `(manifest, model)` paths.
pub fn write_session(dir: &Path, name: &str, levels: &[u8]) -> (PathBuf, PathBuf) {
    let frames = dir.join("frames");
    std::fs::create_dir_all(&frames).unwrap();
    let mut manifest = String::new();
    for (i, &v) in levels.iter().enumerate() {
        let file = format!("frames/{name}-{i:02}.pgm");
        save_pgm(&Frame::gray(64, 64, vec![v; 64 * 64]).unwrap(), dir.join(&file)).unwrap();
        let t = i as f64 + if i % 2 == 0 { 0.1 } else { -0.05 };
        manifest.push_str(&format!("{{\"t\": {t}, \"frame\": \"{file}\"}}\n"));
    }
    let manifest_path = dir.join(format!("{name}.jsonl"));
    std::fs::write(&manifest_path, manifest).unwrap();
    let model_path = dir.join("brightness.emc");
    save_model(&brightness_model(), &model_path).unwrap();
    (manifest_path, model_path)
}
