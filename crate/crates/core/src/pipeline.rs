//! Frame preprocessing and single-frame emotion classification.
//!
//! Frames are expected to be pre-cropped faces. The chain is grayscale →
//! bilinear resize to the model input → scale to [0, 1] → forward pass.

use crate::emotion::EmotionScores;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

/// Side length of the default network input.
pub const INPUT_SIZE: usize = 48;

/// An 8-bit image, grayscale (1 channel) or interleaved RGB (3 channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
    /// Capture time in seconds.
    pub timestamp: f64,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>, timestamp: f64) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Data(format!("frame dims {width}x{height}x{channels} must be positive")));
        }
        if width * height * channels != pixels.len() {
            return Err(Error::Data(format!(
                "{width}x{height}x{channels} frame needs {} bytes, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        if !(timestamp.is_finite() && timestamp >= 0.0) {
            return Err(Error::Data(format!("frame timestamp {timestamp} must be finite and non-negative")));
        }
        Ok(Frame {
            width,
            height,
            channels,
            pixels,
            timestamp,
        })
    }

    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, pixels, 0.0)
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels]
    }
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up.
pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    match frame.channels {
        1 => Ok(frame.clone()),
        3 => {
            let pixels = frame
                .pixels
                .chunks_exact(3)
                .map(|rgb| {
                    let weighted = 299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32;
                    ((weighted + 500) / 1000) as u8
                })
                .collect();
            Frame::new(frame.width, frame.height, 1, pixels, frame.timestamp)
        }
        n => Err(Error::Data(format!("unsupported channel count {n}; expected 1 or 3"))),
    }
}

/// Largest centred square; useful for loosely framed faces.
pub fn center_crop_square(frame: &Frame) -> Frame {
    let side = frame.width.min(frame.height);
    let (x0, y0) = ((frame.width - side) / 2, (frame.height - side) / 2);
    let c = frame.channels;
    let mut pixels = Vec::with_capacity(side * side * c);
    for y in y0..y0 + side {
        let row = (y * frame.width + x0) * c;
        pixels.extend_from_slice(&frame.pixels[row..row + side * c]);
    }
    Frame::new(side, side, c, pixels, frame.timestamp).expect("crop of a valid frame")
}

/// Corner-aligned source coordinate for output index `i` of `dst` samples.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        0.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Bilinear resize with corner-aligned sampling: output corners land
/// exactly on input corners. Values round half-up to 8 bits.
pub fn resize_bilinear(frame: &Frame, height: usize, width: usize) -> Result<Frame> {
    if height == 0 || width == 0 {
        return Err(Error::Usage(format!("resize target {height}x{width} must be positive")));
    }
    let (sw, sh, c) = (frame.width, frame.height, frame.channels);
    let px = |x: usize, y: usize, ch: usize| frame.pixels[(y * sw + x) * c + ch] as f64;
    let mut pixels = Vec::with_capacity(width * height * c);
    for oy in 0..height {
        let sy = source_coord(oy, sh, height);
        let y0 = (sy.floor() as usize).min(sh - 1);
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for ox in 0..width {
            let sx = source_coord(ox, sw, width);
            let x0 = (sx.floor() as usize).min(sw - 1);
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let top = px(x0, y0, ch) * (1.0 - fx) + px(x1, y0, ch) * fx;
                let bottom = px(x0, y1, ch) * (1.0 - fx) + px(x1, y1, ch) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Frame::new(width, height, c, pixels, frame.timestamp)
}

/// Grayscale frame → `[1, H, W]` tensor with values `p / 255`.
pub fn normalize(frame: &Frame) -> Result<Tensor<f32>> {
    if frame.channels != 1 {
        return Err(Error::Usage(format!(
            "normalize needs a grayscale frame, got {} channels",
            frame.channels
        )));
    }
    let data = frame.pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Tensor::new(vec![1, frame.height, frame.width], data)
}

/// Inverse of [`normalize`], rounding to the nearest level.
pub fn denormalize(tensor: &Tensor<f32>) -> Result<Frame> {
    let [1, h, w] = *tensor.shape() else {
        return Err(Error::Shape(format!("expected [1, H, W], got {:?}", tensor.shape())));
    };
    let pixels = tensor
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    Frame::gray(w, h, pixels)
}

/// The model-ready tensor for `frame`: grayscale, resized to the model's input, normalized.
pub fn preprocess(frame: &Frame, model: &Model<f32>) -> Result<Tensor<f32>> {
    let [_, h, w] = model.input_shape();
    let gray = to_grayscale(frame)?;
    let resized = if gray.height == h && gray.width == w {
        gray
    } else {
        resize_bilinear(&gray, h, w)?
    };
    normalize(&resized)
}

pub fn classify_frame(model: &Model<f32>, frame: &Frame) -> Result<EmotionScores> {
    let input = preprocess(frame, model)?;
    model.forward(&input)?.scores()
}
