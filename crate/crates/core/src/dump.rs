//! Binary container for per-layer activations.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EMBD"                      4 bytes magic
//! format_version              u32
//! manifest_len                u64
//! manifest                    manifest_len bytes of UTF-8 JSON (no BOM)
//! layer 0 .. num_layers-1     num_tokens x hidden_dim f32, row-major, no padding
//! ```
//!
//! Layer 0 is the embedding-layer output (the hidden state before the first
//! block); the last layer is the output of the final block.

use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EMBD";
pub const FORMAT_VERSION: u32 = 1;

/// Fixed-size prefix before the manifest JSON: magic, version, length.
const PREFIX_LEN: u64 = 4 + 4 + 8;

/// Key written into `extra` documenting the layer ordering.
pub const LAYER_ORDER_KEY: &str = "layer_order";
pub const LAYER_ORDER: &str = "embedding_output_first";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model_name: String,
    pub checkpoint_step: u64,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_tokens: usize,
    pub dtype: DType,
    /// Free-form metadata (hyperparameters, provenance). Unknown top-level
    /// manifest keys found on read are folded in here.
    pub extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawManifest {
    format_version: u32,
    model_name: String,
    checkpoint_step: u64,
    num_layers: usize,
    hidden_dim: usize,
    num_tokens: usize,
    dtype: DType,
    #[serde(default)]
    extra: BTreeMap<String, Value>,
    #[serde(flatten)]
    unknown: BTreeMap<String, Value>,
}

impl From<RawManifest> for Manifest {
    fn from(raw: RawManifest) -> Self {
        let mut extra = raw.extra;
        for (k, v) in raw.unknown {
            extra.entry(k).or_insert(v);
        }
        Manifest {
            format_version: raw.format_version,
            model_name: raw.model_name,
            checkpoint_step: raw.checkpoint_step,
            num_layers: raw.num_layers,
            hidden_dim: raw.hidden_dim,
            num_tokens: raw.num_tokens,
            dtype: raw.dtype,
            extra,
        }
    }
}

impl Manifest {
    pub fn new(
        model_name: impl Into<String>,
        checkpoint_step: u64,
        num_layers: usize,
        num_tokens: usize,
        hidden_dim: usize,
    ) -> Self {
        let mut extra = BTreeMap::new();
        extra.insert(LAYER_ORDER_KEY.to_owned(), Value::from(LAYER_ORDER));
        Manifest {
            format_version: FORMAT_VERSION,
            model_name: model_name.into(),
            checkpoint_step,
            num_layers,
            hidden_dim,
            num_tokens,
            dtype: DType::Float32,
            extra,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        if self.num_layers == 0 || self.hidden_dim == 0 || self.num_tokens == 0 {
            return Err(Error::Manifest(format!(
                "num_layers ({}), hidden_dim ({}) and num_tokens ({}) must all be positive",
                self.num_layers, self.hidden_dim, self.num_tokens
            )));
        }
        self.payload_len()?;
        Ok(())
    }

    pub fn layer_len(&self) -> Result<u64> {
        (self.num_tokens as u64)
            .checked_mul(self.hidden_dim as u64)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::Manifest("layer size overflows u64".into()))
    }

    /// Declared payload size in bytes.
    pub fn payload_len(&self) -> Result<u64> {
        self.layer_len()?
            .checked_mul(self.num_layers as u64)
            .ok_or_else(|| Error::Manifest("payload size overflows u64".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub manifest: Manifest,
    pub layers: Vec<EmbeddingBatch>,
}

impl ActivationDump {
    /// Checks layer count and shapes against the manifest.
    pub fn new(manifest: Manifest, layers: Vec<EmbeddingBatch>) -> Result<Self> {
        check_shapes(&manifest, &layers)?;
        Ok(Self { manifest, layers })
    }
}

fn check_shapes(manifest: &Manifest, layers: &[EmbeddingBatch]) -> Result<()> {
    manifest.validate()?;
    if layers.len() != manifest.num_layers {
        return Err(Error::ShapeMismatch(format!(
            "manifest declares {} layers, {} supplied",
            manifest.num_layers,
            layers.len()
        )));
    }
    for (i, layer) in layers.iter().enumerate() {
        if layer.n_samples() != manifest.num_tokens || layer.emb_dim() != manifest.hidden_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer {i} is {}x{}, manifest declares {}x{}",
                layer.n_samples(),
                layer.emb_dim(),
                manifest.num_tokens,
                manifest.hidden_dim
            )));
        }
    }
    Ok(())
}

/// Serializes `layers` under `manifest`. Values are narrowed to f32; any
/// value that is not finite after narrowing is rejected before anything is
/// written.
pub fn write_dump<W: Write>(manifest: &Manifest, layers: &[EmbeddingBatch], mut sink: W) -> Result<()> {
    check_shapes(manifest, layers)?;
    for (l, layer) in layers.iter().enumerate() {
        if let Some(pos) = layer.values().iter().position(|&v| !(v as f32).is_finite()) {
            return Err(Error::NonFinite {
                layer: l,
                row: pos / manifest.hidden_dim,
                col: pos % manifest.hidden_dim,
            });
        }
    }

    let json = serde_json::to_vec(manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    sink.write_all(&MAGIC)?;
    sink.write_all(&manifest.format_version.to_le_bytes())?;
    sink.write_all(&(json.len() as u64).to_le_bytes())?;
    sink.write_all(&json)?;

    let mut buf = Vec::with_capacity(manifest.hidden_dim * 4);
    for layer in layers {
        for row in layer.rows() {
            buf.clear();
            for &v in row {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            sink.write_all(&buf)?;
        }
    }
    sink.flush()?;
    Ok(())
}

/// Parses magic, version and manifest. Returns the manifest and the number
/// of header bytes consumed.
fn read_header<R: Read>(source: &mut R) -> Result<(Manifest, u64)> {
    let mut prefix = [0u8; PREFIX_LEN as usize];
    read_exact_or_truncated(source, &mut prefix, 0)?;
    let magic: [u8; 4] = prefix[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(prefix[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let json_len = u64::from_le_bytes(prefix[8..16].try_into().unwrap());
    let json_len_usize = usize::try_from(json_len)
        .map_err(|_| Error::Manifest(format!("manifest length {json_len} too large")))?;
    let mut json = Vec::new();
    source.take(json_len).read_to_end(&mut json)?;
    if json.len() != json_len_usize {
        return Err(Error::Truncated {
            expected: PREFIX_LEN + json_len,
            actual: PREFIX_LEN + json.len() as u64,
        });
    }
    if json.starts_with(&[0xEF, 0xBB, 0xBF]) {
        return Err(Error::Manifest("manifest JSON must not start with a BOM".into()));
    }
    let text = std::str::from_utf8(&json).map_err(|e| Error::Manifest(e.to_string()))?;
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    let manifest = Manifest::from(raw);
    if manifest.format_version != version {
        return Err(Error::Manifest(format!(
            "manifest format_version {} disagrees with header version {version}",
            manifest.format_version
        )));
    }
    manifest.validate()?;
    Ok((manifest, PREFIX_LEN + json_len))
}

fn read_exact_or_truncated<R: Read>(source: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    expected: offset + buf.len() as u64,
                    actual: offset + filled as u64,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn decode_layer(bytes: &[u8], layer: usize, hidden_dim: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(bytes.len() / 4);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                layer,
                row: i / hidden_dim,
                col: i % hidden_dim,
            });
        }
        values.push(f64::from(v));
    }
    Ok(values)
}

/// Reads and validates a whole dump.
pub fn read_dump<R: Read>(mut source: R) -> Result<ActivationDump> {
    let (manifest, header_len) = read_header(&mut source)?;
    let expected = manifest.payload_len()?;
    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    let actual = payload.len() as u64;
    if actual < expected {
        return Err(Error::Truncated {
            expected: header_len + expected,
            actual: header_len + actual,
        });
    }
    if actual > expected {
        return Err(Error::TrailingBytes {
            expected: header_len + expected,
            actual: header_len + actual,
        });
    }
    let layer_len = manifest.layer_len()? as usize;
    let layers = payload
        .chunks_exact(layer_len)
        .enumerate()
        .map(|(l, bytes)| {
            let values = decode_layer(bytes, l, manifest.hidden_dim)?;
            Ok(EmbeddingBatch::from_parts_unchecked(
                manifest.num_tokens,
                manifest.hidden_dim,
                values,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ActivationDump { manifest, layers })
}

/// Parsed header of a dump: enough to locate any layer without reading the
/// payload. Immutable once opened, so one index can serve concurrent readers
/// that each hold their own handle on the same file.
#[derive(Debug, Clone)]
pub struct DumpIndex {
    manifest: Manifest,
    payload_offset: u64,
}

impl DumpIndex {
    /// Reads the header and checks that the source holds exactly the
    /// declared payload.
    pub fn open<R: Read + Seek>(source: &mut R) -> Result<Self> {
        source.seek(SeekFrom::Start(0))?;
        let (manifest, payload_offset) = read_header(source)?;
        let end = source.seek(SeekFrom::End(0))?;
        let expected = payload_offset + manifest.payload_len()?;
        if end < expected {
            return Err(Error::Truncated { expected, actual: end });
        }
        if end > expected {
            return Err(Error::TrailingBytes { expected, actual: end });
        }
        Ok(Self {
            manifest,
            payload_offset,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Seeks to and decodes one layer from `source`, which must be the same
    /// bytes this index was opened on.
    pub fn read_layer<R: Read + Seek>(&self, source: &mut R, layer_index: usize) -> Result<EmbeddingBatch> {
        let m = &self.manifest;
        if layer_index >= m.num_layers {
            return Err(Error::LayerOutOfRange {
                index: layer_index,
                num_layers: m.num_layers,
            });
        }
        let layer_len = m.layer_len()?;
        let start = self.payload_offset + layer_len * layer_index as u64;
        source.seek(SeekFrom::Start(start))?;
        let mut bytes = vec![0u8; layer_len as usize];
        read_exact_or_truncated(source, &mut bytes, start)?;
        let values = decode_layer(&bytes, layer_index, m.hidden_dim)?;
        Ok(EmbeddingBatch::from_parts_unchecked(m.num_tokens, m.hidden_dim, values))
    }
}

/// Reads a single layer by seeking past the others.
pub fn read_layer<R: Read + Seek>(mut source: R, layer_index: usize) -> Result<EmbeddingBatch> {
    let index = DumpIndex::open(&mut source)?;
    index.read_layer(&mut source, layer_index)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    fn small() -> (Manifest, Vec<EmbeddingBatch>) {
        let m = Manifest::new("test", 0, 1, 2, 2);
        let l = EmbeddingBatch::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        (m, vec![l])
    }

    fn encode(m: &Manifest, layers: &[EmbeddingBatch]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dump(m, layers, &mut buf).unwrap();
        buf
    }

    #[test]
    fn payload_is_row_major_f32_after_header() {
        let (m, layers) = small();
        let bytes = encode(&m, &layers);
        assert_eq!(&bytes[..4], b"EMBD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload = &bytes[16 + json_len..];
        let expected: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        assert_eq!(payload, &expected[..]);
    }

    #[test]
    fn layer_count_mismatch_is_rejected() {
        let (mut m, layers) = small();
        m.num_layers = 2;
        let err = write_dump(&m, &layers, Vec::new()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "{err}");
    }

    #[test]
    fn overflowing_f32_is_non_finite() {
        let m = Manifest::new("test", 0, 1, 1, 2);
        let l = EmbeddingBatch::from_rows(&[[1.0, 1e300]]).unwrap();
        let err = write_dump(&m, &[l], Vec::new()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 0, row: 0, col: 1 }));
    }

    #[test]
    fn round_trip_small() {
        let (m, layers) = small();
        let dump = read_dump(Cursor::new(encode(&m, &layers))).unwrap();
        assert_eq!(dump.manifest, m);
        assert_eq!(dump.layers, layers);
    }

    #[test]
    fn truncation_names_byte_counts() {
        let (m, layers) = small();
        let mut bytes = encode(&m, &layers);
        let full = bytes.len() as u64;
        bytes.truncate(bytes.len() - 6);
        match read_dump(Cursor::new(&bytes)).unwrap_err() {
            Error::Truncated { expected, actual } => {
                assert_eq!(expected, full);
                assert_eq!(actual, full - 6);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            read_layer(Cursor::new(&bytes), 0).unwrap_err(),
            Error::Truncated { .. }
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let (m, layers) = small();
        let mut bytes = encode(&m, &layers);
        bytes.push(0);
        assert!(matches!(read_dump(Cursor::new(&bytes)).unwrap_err(), Error::TrailingBytes { .. }));
    }

    #[test]
    fn nan_in_payload_reports_position() {
        let m = Manifest::new("test", 0, 2, 2, 2);
        let layers = vec![
            EmbeddingBatch::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
            EmbeddingBatch::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).unwrap(),
        ];
        let mut bytes = encode(&m, &layers);
        let n = bytes.len();
        // layer 1, row 1, col 0
        bytes[n - 8..n - 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = read_dump(Cursor::new(&bytes)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 1, row: 1, col: 0 }), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let (m, layers) = small();
        let mut bytes = encode(&m, &layers);
        bytes[0] = b'X';
        assert!(matches!(read_dump(Cursor::new(&bytes)).unwrap_err(), Error::BadMagic { .. }));
        let mut bytes = encode(&m, &layers);
        bytes[4] = 9;
        assert!(matches!(
            read_dump(Cursor::new(&bytes)).unwrap_err(),
            Error::UnsupportedVersion(9)
        ));
    }

    #[test]
    fn layer_index_out_of_range() {
        let (m, layers) = small();
        let bytes = encode(&m, &layers);
        let err = read_layer(Cursor::new(&bytes), 1).unwrap_err();
        assert!(matches!(err, Error::LayerOutOfRange { index: 1, num_layers: 1 }));
        assert_eq!(read_layer(Cursor::new(&bytes), 0).unwrap(), layers[0]);
    }

    #[test]
    fn unknown_manifest_keys_land_in_extra() {
        let json = br#"{"format_version":1,"model_name":"m","checkpoint_step":3,"num_layers":1,"hidden_dim":1,"num_tokens":1,"dtype":"float32","n_heads":16,"extra":{"lr":0.1}}"#;
        let mut bytes = b"EMBD".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(json);
        bytes.extend_from_slice(&0.5f32.to_le_bytes());
        let dump = read_dump(Cursor::new(bytes)).unwrap();
        assert_eq!(dump.manifest.extra["n_heads"], 16);
        assert_eq!(dump.manifest.extra["lr"], 0.1);
        assert_eq!(dump.layers[0].values(), &[0.5]);
    }
}
