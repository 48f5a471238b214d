//! Little-endian binary formats without padding.
//!
//! ```text
//! GPZD  magic "GPZD" | version u32 | B u32 | d0 u32 | K u32 | labels B×u32 | data B×d0 f32
//! GPZM  magic "GPZM" | version u32 | layer_count u32 | split_index u32 |
//!       per layer: in u32 | out u32 | activation u8 (0 relu, 1 identity) |
//!                  weights out×in f32 | bias out f32
//! GPZA  magic "GPZA" | version u32 | layer_count u32 | B u32 | K u32 | labels B×u32 |
//!       per layer: name_len u32 | name UTF-8 | rank u32 | shape rank×u32 | d u32 |
//!                  data B×d f32
//! ```
//!
//! Weights and activations are row-major. Readers reject trailing bytes and
//! non-finite floats, and every parse error names the field and the byte
//! offset where it starts.

use std::fmt;
use std::path::Path;

use gpz_core::datagen::Dataset;
use gpz_core::micronet::{Activation, Layer, MlpModel};
use gpz_core::repr_stats::{ActivationBatch, ActivationSet};

pub const VERSION: u32 = 1;
pub const DATASET_MAGIC: [u8; 4] = *b"GPZD";
pub const MODEL_MAGIC: [u8; 4] = *b"GPZM";
pub const ACTIVATION_MAGIC: [u8; 4] = *b"GPZA";

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    UnsupportedVersion(u32),
    Truncated { needed: u64, available: u64 },
    TrailingBytes(u64),
    NonFinite(f32),
    InvalidUtf8,
    Invalid(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::BadMagic { expected, found } => write!(
                f,
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            ),
            ParseErrorKind::UnsupportedVersion(v) => write!(f, "unsupported version {v} (expected {VERSION})"),
            ParseErrorKind::Truncated { needed, available } => {
                write!(f, "truncated: needs {needed} bytes, {available} available")
            }
            ParseErrorKind::TrailingBytes(n) => write!(f, "{n} trailing bytes after the declared payload"),
            ParseErrorKind::NonFinite(v) => write!(f, "non-finite value {v}"),
            ParseErrorKind::InvalidUtf8 => f.write_str("invalid UTF-8"),
            ParseErrorKind::Invalid(msg) => f.write_str(msg),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("parse error in field `{field}` at byte {offset}: {kind}")]
    Parse {
        field: String,
        offset: u64,
        kind: ParseErrorKind,
    },
    #[error("cannot write: {0}")]
    Unrepresentable(String),
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
}

impl FormatError {
    /// Field and offset of a parse error.
    pub fn location(&self) -> Option<(&str, u64)> {
        match self {
            FormatError::Parse { field, offset, .. } => Some((field, *offset)),
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, FormatError>;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn error(&self, field: &str, offset: usize, kind: ParseErrorKind) -> FormatError {
        FormatError::Parse {
            field: field.to_owned(),
            offset: offset as u64,
            kind,
        }
    }

    fn take(&mut self, field: &str, count: usize, width: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        let needed = count.checked_mul(width);
        match needed {
            Some(n) if n <= available => {
                let out = &self.bytes[self.pos..self.pos + n];
                self.pos += n;
                Ok(out)
            }
            _ => Err(self.error(
                field,
                self.pos,
                ParseErrorKind::Truncated {
                    needed: (count as u64).saturating_mul(width as u64),
                    available: available as u64,
                },
            )),
        }
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let available = &self.bytes[..self.bytes.len().min(4)];
        if available != expected {
            return Err(self.error(
                "magic",
                0,
                ParseErrorKind::BadMagic {
                    expected,
                    found: available.to_vec(),
                },
            ));
        }
        self.pos = 4;
        Ok(())
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let b = self.take(field, 1, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn count(&mut self, field: &str) -> Result<usize> {
        Ok(self.u32(field)? as usize)
    }

    fn version(&mut self) -> Result<()> {
        let at = self.pos;
        let v = self.u32("version")?;
        if v != VERSION {
            return Err(self.error("version", at, ParseErrorKind::UnsupportedVersion(v)));
        }
        Ok(())
    }

    fn u32s(&mut self, field: &str, n: usize) -> Result<Vec<u32>> {
        let b = self.take(field, n, 4)?;
        Ok(b.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    fn f32s(&mut self, field: &str, n: usize) -> Result<Vec<f32>> {
        let start = self.pos;
        let b = self.take(field, n, 4)?;
        let mut out = Vec::with_capacity(n);
        for (i, c) in b.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(self.error(&format!("{field}[{i}]"), start + 4 * i, ParseErrorKind::NonFinite(v)));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn labels(&mut self, n: usize, classes: usize) -> Result<Vec<u32>> {
        let start = self.pos;
        let labels = self.u32s("labels", n)?;
        if let Some(i) = labels.iter().position(|&y| y as usize >= classes) {
            return Err(self.error(
                &format!("labels[{i}]"),
                start + 4 * i,
                ParseErrorKind::Invalid(format!("label {} >= class count {classes}", labels[i])),
            ));
        }
        Ok(labels)
    }

    fn finish(&self) -> Result<()> {
        let rest = self.bytes.len() - self.pos;
        if rest > 0 {
            return Err(self.error("end of payload", self.pos, ParseErrorKind::TrailingBytes(rest as u64)));
        }
        Ok(())
    }
}

fn invalid(field: &str, offset: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        field: field.to_owned(),
        offset: offset as u64,
        kind: ParseErrorKind::Invalid(msg.into()),
    }
}

fn to_u32(field: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| FormatError::Unrepresentable(format!("{field} = {v} exceeds u32")))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + 4 * ds.labels().len() + 4 * ds.inputs().len());
    out.extend_from_slice(&DATASET_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32("B", ds.len())?);
    put_u32(&mut out, to_u32("d0", ds.dim())?);
    put_u32(&mut out, to_u32("K", ds.classes())?);
    for &y in ds.labels() {
        put_u32(&mut out, y);
    }
    put_f32s(&mut out, ds.inputs());
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.version()?;
    let b_at = r.pos;
    let b = r.count("B")?;
    let d_at = r.pos;
    let d0 = r.count("d0")?;
    let k_at = r.pos;
    let k = r.count("K")?;
    if b == 0 {
        return Err(invalid("B", b_at, "must be at least 1"));
    }
    if d0 == 0 {
        return Err(invalid("d0", d_at, "must be at least 1"));
    }
    if k == 0 {
        return Err(invalid("K", k_at, "must be at least 1"));
    }
    let labels = r.labels(b, k)?;
    let data_at = r.pos;
    let data = r.f32s("data", b * d0)?;
    r.finish()?;
    Dataset::new(data, labels, k, d0).map_err(|e| invalid("data", data_at, e.to_string()))
}

pub fn encode_model(model: &MlpModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32("layer_count", model.num_layers())?);
    put_u32(&mut out, to_u32("split_index", model.split_index())?);
    for layer in model.layers() {
        put_u32(&mut out, to_u32("in", layer.in_dim())?);
        put_u32(&mut out, to_u32("out", layer.out_dim())?);
        out.push(match layer.activation() {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        put_f32s(&mut out, layer.weights());
        put_f32s(&mut out, layer.bias());
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    r.version()?;
    let count_at = r.pos;
    let count = r.count("layer_count")?;
    let split_at = r.pos;
    let split = r.count("split_index")?;
    if count == 0 {
        return Err(invalid("layer_count", count_at, "must be at least 1"));
    }
    if split > count {
        return Err(invalid("split_index", split_at, format!("{split} exceeds layer_count {count}")));
    }
    let mut layers: Vec<Layer> = Vec::with_capacity(count.min(1024));
    for j in 0..count {
        let in_at = r.pos;
        let in_dim = r.count(&format!("layer[{j}].in"))?;
        let out_at = r.pos;
        let out_dim = r.count(&format!("layer[{j}].out"))?;
        if in_dim == 0 {
            return Err(invalid(&format!("layer[{j}].in"), in_at, "must be at least 1"));
        }
        if out_dim == 0 {
            return Err(invalid(&format!("layer[{j}].out"), out_at, "must be at least 1"));
        }
        if let Some(prev) = layers.last() {
            if prev.out_dim() != in_dim {
                return Err(invalid(
                    &format!("layer[{j}].in"),
                    in_at,
                    format!("{in_dim} does not chain with the previous output width {}", prev.out_dim()),
                ));
            }
        }
        let act_at = r.pos;
        let field = format!("layer[{j}].activation");
        let activation = match r.take(&field, 1, 1)?[0] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return Err(invalid(&field, act_at, format!("unknown activation code {other}"))),
        };
        let weights = r.f32s(&format!("layer[{j}].weights"), out_dim.saturating_mul(in_dim))?;
        let bias = r.f32s(&format!("layer[{j}].bias"), out_dim)?;
        let layer = Layer::new(in_dim, out_dim, weights, bias, activation)
            .map_err(|e| invalid(&format!("layer[{j}]"), in_at, e.to_string()))?;
        layers.push(layer);
    }
    r.finish()?;
    MlpModel::new(layers, split).map_err(|e| invalid("layers", count_at, e.to_string()))
}

pub fn encode_activations(set: &ActivationSet) -> Result<Vec<u8>> {
    let labels = set.labels();
    let mut out = Vec::new();
    out.extend_from_slice(&ACTIVATION_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32("layer_count", set.batches.len())?);
    put_u32(&mut out, to_u32("B", labels.len())?);
    put_u32(&mut out, to_u32("K", set.classes)?);
    for &y in labels {
        put_u32(&mut out, y);
    }
    for batch in &set.batches {
        put_u32(&mut out, to_u32("name_len", batch.layer_name.len())?);
        out.extend_from_slice(batch.layer_name.as_bytes());
        put_u32(&mut out, to_u32("rank", batch.shape.len())?);
        for &e in &batch.shape {
            put_u32(&mut out, to_u32("shape", e)?);
        }
        put_u32(&mut out, to_u32("d", batch.dim())?);
        put_f32s(&mut out, &batch.data);
    }
    Ok(out)
}

pub fn decode_activations(bytes: &[u8]) -> Result<ActivationSet> {
    let mut r = Reader::new(bytes);
    r.magic(ACTIVATION_MAGIC)?;
    r.version()?;
    let count_at = r.pos;
    let count = r.count("layer_count")?;
    let b_at = r.pos;
    let b = r.count("B")?;
    let k_at = r.pos;
    let k = r.count("K")?;
    if count == 0 {
        return Err(invalid("layer_count", count_at, "must be at least 1"));
    }
    if b == 0 {
        return Err(invalid("B", b_at, "must be at least 1"));
    }
    if k == 0 {
        return Err(invalid("K", k_at, "must be at least 1"));
    }
    let labels = r.labels(b, k)?;
    let mut batches = Vec::with_capacity(count.min(1024));
    for j in 0..count {
        let len = r.count(&format!("layer[{j}].name_len"))?;
        let name_at = r.pos;
        let field = format!("layer[{j}].name");
        let name = std::str::from_utf8(r.take(&field, len, 1)?)
            .map_err(|_| r.error(&field, name_at, ParseErrorKind::InvalidUtf8))?
            .to_owned();
        let rank_at = r.pos;
        let rank = r.count(&format!("layer[{j}].rank"))?;
        if rank == 0 {
            return Err(invalid(&format!("layer[{j}].rank"), rank_at, "must be at least 1"));
        }
        let shape_at = r.pos;
        let shape: Vec<usize> = r
            .u32s(&format!("layer[{j}].shape"), rank)?
            .into_iter()
            .map(|e| e as usize)
            .collect();
        if shape.contains(&0) {
            return Err(invalid(&format!("layer[{j}].shape"), shape_at, "extents must be non-zero"));
        }
        let d_at = r.pos;
        let d = r.count(&format!("layer[{j}].d"))?;
        let product = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
        if product != Some(d) {
            return Err(invalid(
                &format!("layer[{j}].d"),
                d_at,
                format!("{d} does not equal the product of shape {shape:?}"),
            ));
        }
        let data_at = r.pos;
        let data = r.f32s(&format!("layer[{j}].data"), b.saturating_mul(d))?;
        let batch = ActivationBatch::new(name, shape, data, labels.clone())
            .map_err(|e| invalid(&format!("layer[{j}]"), data_at, e.to_string()))?;
        batches.push(batch);
    }
    r.finish()?;
    ActivationSet::new(k, batches).map_err(|e| invalid("labels", 20, e.to_string()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|error| FormatError::Io {
        path: path.display().to_string(),
        error,
    })
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = std::fs::write(&tmp, bytes).and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn write_file(path: &Path, bytes: Result<Vec<u8>>) -> Result<()> {
    write_atomic(path, &bytes?).map_err(|error| FormatError::Io {
        path: path.display().to_string(),
        error,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read_file(path)?)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_file(path, encode_dataset(ds))
}

pub fn read_model(path: &Path) -> Result<MlpModel> {
    decode_model(&read_file(path)?)
}

pub fn write_model(path: &Path, model: &MlpModel) -> Result<()> {
    write_file(path, encode_model(model))
}

pub fn read_activations(path: &Path) -> Result<ActivationSet> {
    decode_activations(&read_file(path)?)
}

pub fn write_activations(path: &Path, set: &ActivationSet) -> Result<()> {
    write_file(path, encode_activations(set))
}
