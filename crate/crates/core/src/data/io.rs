//! EMB1 embedding files, DSC1 score sidecars and label CSVs.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{AugTag, Domain, EmbeddingBatch, LabelMatrix};
use crate::error::{FormatError, MudasError, Result};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u32 = 1;
pub const DSC1_MAGIC: &[u8; 4] = b"DSC1";

/// Little-endian cursor over an in-memory file image.
pub(crate) struct ByteReader<'a> {
    format: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(format: &'static str, buf: &'a [u8]) -> Self {
        Self { format, buf, pos: 0 }
    }

    pub(crate) fn magic(&mut self, expected: &'static [u8; 4]) -> Result<(), FormatError> {
        let found = self.buf.get(..4).unwrap_or(self.buf);
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: std::str::from_utf8(expected).unwrap_or("????"),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        self.pos = 4;
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let remaining = self.buf.len() - self.pos;
        if remaining < n {
            return Err(FormatError::Truncated {
                format: self.format,
                expected: n,
                found: remaining,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32_vec(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    /// Requires the remaining payload to be exactly `n` bytes.
    pub(crate) fn expect_payload(&self, n: usize) -> Result<(), FormatError> {
        let remaining = self.buf.len() - self.pos;
        if remaining != n {
            return Err(FormatError::Truncated {
                format: self.format,
                expected: n,
                found: remaining,
            });
        }
        Ok(())
    }

    pub(crate) fn expect_at_least(&self, n: usize) -> Result<(), FormatError> {
        let remaining = self.buf.len() - self.pos;
        if remaining < n {
            return Err(FormatError::Truncated {
                format: self.format,
                expected: n,
                found: remaining,
            });
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<(), FormatError> {
        self.expect_payload(0)
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn len_u32(n: usize, what: &str) -> io::Result<u32> {
    u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, format!("{what} exceeds u32")))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| MudasError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| MudasError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn format_err(path: &Path) -> impl FnOnce(FormatError) -> MudasError + '_ {
    move |source| MudasError::Format {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes a batch as EMB1: magic, version, rows, dim, domain tag,
/// augmentation tag, then row-major f32 little-endian values.
pub fn write_embeddings<W: Write>(batch: &EmbeddingBatch, mut w: W) -> io::Result<()> {
    let mut out = Vec::with_capacity(18 + batch.rows.len() * 4);
    out.extend_from_slice(EMB1_MAGIC);
    put_u32(&mut out, EMB1_VERSION);
    put_u32(&mut out, len_u32(batch.len(), "row count")?);
    put_u32(&mut out, len_u32(batch.dim(), "dimension")?);
    out.push(batch.domain.tag());
    out.push(batch.aug.tag());
    put_f32s(&mut out, batch.rows.iter());
    w.write_all(&out)
}

pub fn read_embeddings(
    bytes: &[u8],
    expected_dim: Option<usize>,
) -> Result<EmbeddingBatch, FormatError> {
    let mut r = ByteReader::new("EMB1", bytes);
    r.magic(EMB1_MAGIC)?;
    let version = r.u32()?;
    if version != EMB1_VERSION {
        return Err(FormatError::UnsupportedVersion {
            format: "EMB1",
            version,
        });
    }
    let rows = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let domain_tag = r.u8()?;
    let aug_tag = r.u8()?;
    let domain = Domain::from_tag(domain_tag).ok_or(FormatError::BadTag {
        field: "domain",
        value: domain_tag,
    })?;
    let aug = AugTag::from_tag(aug_tag).ok_or(FormatError::BadTag {
        field: "augmentation",
        value: aug_tag,
    })?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(FormatError::DimMismatch {
                expected,
                found: dim,
            });
        }
    }
    r.expect_payload(rows * dim * 4)?;
    let values = r.f32_vec(rows * dim)?;
    let rows = Array2::from_shape_vec((rows, dim), values)
        .map_err(|e| FormatError::Other(e.to_string()))?;
    Ok(EmbeddingBatch::new(rows, domain, aug))
}

pub fn save_embeddings(batch: &EmbeddingBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_embeddings(batch, &mut bytes).map_err(|source| MudasError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, &bytes)
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingBatch> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    read_embeddings(&bytes, expected_dim).map_err(format_err(path))
}

/// DSC1 sidecar: magic, u32 count, f32 scores aligned with EMB1 row order.
pub fn save_scores(scores: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + scores.len() * 4);
    out.extend_from_slice(DSC1_MAGIC);
    let count = len_u32(scores.len(), "score count").map_err(|source| MudasError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    put_u32(&mut out, count);
    put_f32s(&mut out, scores);
    write_file(path, &out)
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let parse = || -> Result<Vec<f64>, FormatError> {
        let mut r = ByteReader::new("DSC1", &bytes);
        r.magic(DSC1_MAGIC)?;
        let count = r.u32()? as usize;
        r.expect_payload(count * 4)?;
        r.f32_vec(count)
    };
    parse().map_err(format_err(path))
}

/// Parses a label CSV: header row of class names, then rows of 0/1.
/// Rows are numbered from 1 (first data row), columns from 1.
pub fn read_labels<R: Read>(reader: R) -> Result<LabelMatrix, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| FormatError::Other(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(FormatError::Other("label CSV has no header row".into()));
    }
    let k = header.len();
    let mut cells = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| FormatError::Label {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        for (j, field) in record.iter().enumerate() {
            match field {
                "0" => cells.push(0u8),
                "1" => cells.push(1u8),
                other => {
                    return Err(FormatError::Label {
                        row,
                        column: j + 1,
                        message: format!("expected 0 or 1, found {other:?}"),
                    })
                }
            }
        }
        rows += 1;
    }
    let cells = Array2::from_shape_vec((rows, k), cells)
        .map_err(|e| FormatError::Other(e.to_string()))?;
    LabelMatrix::new(header, cells).map_err(|e| FormatError::Other(e.to_string()))
}

pub fn write_labels<W: Write>(labels: &LabelMatrix, writer: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(labels.class_names())?;
    for row in labels.cells().rows() {
        w.write_record(row.iter().map(|v| if *v == 1 { "1" } else { "0" }))?;
    }
    w.flush()
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMatrix> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    read_labels(bytes.as_slice()).map_err(format_err(path))
}

pub fn save_labels(labels: &LabelMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_labels(labels, &mut bytes).map_err(|source| MudasError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, &bytes)
}
