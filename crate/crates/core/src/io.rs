//! On-disk formats: FER-style CSV datasets, binary PGM frames, JSON Lines
//! stream manifests and the binary model file.
//!
//! # Model file layout
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "EMC1"                      4 bytes magic
//! version        u32          currently 1
//! layer_count    u32
//! layer_count × {
//!     kind       u8           0 conv2d, 1 relu, 2 maxpool, 3 flatten, 4 dense, 5 softmax
//!     rank       u8
//!     dims       rank × u32   the layer's input activation shape
//! }
//! payload                     f32 values: for each conv2d/dense layer in order,
//!                             its weights (row-major) followed by its bias
//! ```
//!
//! Output sizes are recovered from the next layer's input shape; the final
//! layer is always a 7-way softmax.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::nn::{LayerParams, LayerSpec, Model};
use crate::pipeline::Frame;
use crate::tensor::Tensor;
use crate::training::Example;

pub const IMAGE_SIDE: usize = 48;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

pub const MODEL_MAGIC: &[u8; 4] = b"EMC1";
pub const MODEL_VERSION: u32 = 1;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub label: Emotion,
    /// 48×48 grayscale, row-major.
    pub pixels: Vec<u8>,
}

impl LabeledImage {
    pub fn to_frame(&self) -> Frame {
        Frame::gray(IMAGE_SIDE, IMAGE_SIDE, self.pixels.clone()).expect("48x48 image")
    }

    pub fn to_example(&self) -> Example<f32> {
        let data = self.pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Example {
            input: Tensor::new(vec![1, IMAGE_SIDE, IMAGE_SIDE], data).expect("48x48 image"),
            label: self.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledDataset {
    pub samples: Vec<LabeledImage>,
    pub source: Option<PathBuf>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_examples(&self) -> Vec<Example<f32>> {
        self.samples.iter().map(LabeledImage::to_example).collect()
    }
}

/// Reads an `emotion,pixels[,usage]` CSV with 2304 space-separated pixels per row.
pub fn load_fer_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut dataset = parse_fer_csv(&bytes[..])?;
    dataset.source = Some(path.to_path_buf());
    Ok(dataset)
}

pub fn parse_fer_csv(input: impl Read) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("line 1: unreadable header: {e}")))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let (Some(label_col), Some(pixel_col)) = (column("emotion"), column("pixels")) else {
        return Err(Error::Data(format!(
            "line 1: header must contain 'emotion' and 'pixels', got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    };

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| Error::Data(format!("line {line}: missing column {i}")))
        };
        let raw_label = field(label_col)?.trim();
        let label = raw_label
            .parse::<usize>()
            .ok()
            .and_then(Emotion::from_index)
            .ok_or_else(|| Error::Data(format!("line {line}: label '{raw_label}' is not an integer in 0..=6")))?;
        let mut pixels = Vec::with_capacity(IMAGE_PIXELS);
        for token in field(pixel_col)?.split_ascii_whitespace() {
            let v = token
                .parse::<u8>()
                .map_err(|_| Error::Data(format!("line {line}: pixel '{token}' is not an integer in 0..=255")))?;
            pixels.push(v);
        }
        if pixels.len() != IMAGE_PIXELS {
            return Err(Error::Data(format!(
                "line {line}: expected {IMAGE_PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        samples.push(LabeledImage { label, pixels });
    }
    Ok(LabeledDataset { samples, source: None })
}

pub fn fer_csv_string(dataset: &LabeledDataset) -> String {
    let mut out = String::from("emotion,pixels\n");
    for s in &dataset.samples {
        out.push_str(&s.label.index().to_string());
        out.push(',');
        let pixels: Vec<String> = s.pixels.iter().map(u8::to_string).collect();
        out.push_str(&pixels.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_fer_csv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), fer_csv_string(dataset).as_bytes())
}

/// Reads a binary (P5) PGM with maxval 255.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    decode_pgm(&read_file(path)?).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::Data("offset 0: not a binary PGM (magic must be P5)".into()));
    }
    let mut header = PgmHeader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Data(format!("PGM maxval {maxval} unsupported; expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Data(format!("PGM dims {width}x{height} must be positive")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => {
            return Err(Error::Data(format!(
                "offset {}: expected whitespace before PGM payload",
                header.pos
            )))
        }
    }
    let start = header.pos;
    let need = width * height;
    let payload = &bytes[start..];
    if payload.len() < need {
        return Err(Error::Data(format!(
            "offset {}: payload has {} bytes, expected {need}",
            bytes.len(),
            payload.len()
        )));
    }
    if payload.len() > need {
        return Err(Error::Data(format!(
            "offset {}: {} trailing bytes after the {need}-byte payload",
            start + need,
            payload.len() - need
        )));
    }
    Frame::gray(width, height, payload.to_vec())
}

struct PgmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmHeader<'_> {
    /// Skips whitespace and `#` comments, then reads a decimal field.
    fn number(&mut self, what: &str) -> Result<usize> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Data(format!("offset {start}: expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Data(format!("offset {start}: {what} out of range")))
    }
}

pub fn encode_pgm(frame: &Frame) -> Result<Vec<u8>> {
    if frame.channels() != 1 {
        return Err(Error::Usage("PGM frames must be grayscale".into()));
    }
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    Ok(out)
}

pub fn save_pgm(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(frame)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub t: f64,
    pub frame: PathBuf,
}

/// Time-ordered list of frame files for one recorded session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative frame paths are resolved against.
    pub base_dir: PathBuf,
}

impl StreamManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.frame.is_absolute() {
            entry.frame.clone()
        } else {
            self.base_dir.join(&entry.frame)
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entry serializes") + "\n")
            .collect()
    }
}

/// Reads `{"t": seconds, "frame": path}` JSON Lines. Timestamps must be
/// strictly increasing; blank lines are skipped.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<StreamManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base_dir: PathBuf) -> Result<StreamManifest> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Line {
        t: f64,
        frame: String,
    }

    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(raw).map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if !parsed.t.is_finite() || parsed.t < 0.0 {
            return Err(Error::Data(format!("line {line}: timestamp {} must be finite and non-negative", parsed.t)));
        }
        if parsed.frame.is_empty() {
            return Err(Error::Data(format!("line {line}: empty frame path")));
        }
        if let Some(prev) = entries.last() {
            if parsed.t <= prev.t {
                return Err(Error::Data(format!(
                    "line {line}: timestamp {} does not increase past {}",
                    parsed.t, prev.t
                )));
            }
        }
        entries.push(ManifestEntry {
            t: parsed.t,
            frame: PathBuf::from(parsed.frame),
        });
    }
    Ok(StreamManifest { entries, base_dir })
}

const KIND_CONV: u8 = 0;
const KIND_RELU: u8 = 1;
const KIND_POOL: u8 = 2;
const KIND_FLATTEN: u8 = 3;
const KIND_DENSE: u8 = 4;
const KIND_SOFTMAX: u8 = 5;

fn kind_code(layer: &LayerSpec) -> u8 {
    match layer {
        LayerSpec::Conv2D { .. } => KIND_CONV,
        LayerSpec::ReLU => KIND_RELU,
        LayerSpec::MaxPool => KIND_POOL,
        LayerSpec::Flatten => KIND_FLATTEN,
        LayerSpec::Dense { .. } => KIND_DENSE,
        LayerSpec::Softmax => KIND_SOFTMAX,
    }
}

pub fn encode_model(model: &Model<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.parameter_count() * 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    let mut input = model.input_shape().to_vec();
    for (layer, output) in model.layers().iter().zip(model.layer_shapes()) {
        out.push(kind_code(layer));
        out.push(input.len() as u8);
        for &d in &input {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        input = output.clone();
    }
    for p in model.parameters().iter().flatten() {
        for v in p.weights.data().iter().chain(p.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated model file: {what} at offset {} needs {n} bytes", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = ByteReader { bytes, pos: 0 };
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::Format("bad magic: not an EMC1 model file".into()));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let count = r.u32("layer count")? as usize;
    if count == 0 || count > 4096 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut table = Vec::with_capacity(count);
    for i in 0..count {
        let kind = r.u8("layer kind")?;
        let rank = r.u8("layer rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("layer dim")? as usize);
        }
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Format(format!("layer {i}: invalid input shape {dims:?}")));
        }
        table.push((kind, dims));
    }

    let input_shape: [usize; 3] = table[0]
        .1
        .as_slice()
        .try_into()
        .map_err(|_| Error::Format(format!("model input shape {:?} is not [C, H, W]", table[0].1)))?;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let (kind, ref dims) = table[i];
        let next_leading = || {
            table
                .get(i + 1)
                .map(|(_, d)| d[0])
                .ok_or_else(|| Error::Format(format!("layer {i}: parameterised layer cannot be last")))
        };
        layers.push(match kind {
            KIND_CONV => LayerSpec::Conv2D {
                in_channels: dims[0],
                out_channels: next_leading()?,
            },
            KIND_RELU => LayerSpec::ReLU,
            KIND_POOL => LayerSpec::MaxPool,
            KIND_FLATTEN => LayerSpec::Flatten,
            KIND_DENSE => LayerSpec::Dense {
                in_units: dims[0],
                out_units: next_leading()?,
            },
            KIND_SOFTMAX => LayerSpec::Softmax,
            k => return Err(Error::Format(format!("layer {i}: unknown kind {k}"))),
        });
    }

    let skeleton = Model::<f32>::new(input_shape, layers.clone()).map_err(|e| Error::Format(format!("{e}")))?;
    let mut expected_input = input_shape.to_vec();
    for (i, ((_, dims), out)) in table.iter().zip(skeleton.layer_shapes()).enumerate() {
        if *dims != expected_input {
            return Err(Error::Format(format!(
                "layer {i}: recorded input {dims:?} but the previous layer produces {expected_input:?}"
            )));
        }
        expected_input = out.clone();
    }

    let mut params = Vec::new();
    for layer in &layers {
        let Some((w_shape, b_len)) = layer.parameter_shape() else { continue };
        let w_len: usize = w_shape.iter().product();
        let read = |r: &mut ByteReader, n: usize| -> Result<Vec<f32>> {
            Ok(r.take(n * 4, "parameters")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect())
        };
        let weights = Tensor::new(w_shape, read(&mut r, w_len)?)?;
        let bias = Tensor::new(vec![b_len], read(&mut r, b_len)?)?;
        params.push(LayerParams { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} unexpected trailing bytes at offset {}",
            bytes.len() - r.pos,
            r.pos
        )));
    }
    Model::from_parameters(input_shape, layers, params).map_err(|e| Error::Format(format!("{e}")))
}

pub fn save_model(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model<f32>> {
    decode_model(&read_file(path.as_ref())?)
}
