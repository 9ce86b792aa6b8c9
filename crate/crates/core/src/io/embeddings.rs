//! `REMB` embedding files: magic, u32 version, u32 header length, JSON
//! header, then `count × dim` little-endian f32 values row by row.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::EmbeddingMatrix;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"REMB";
pub const EMBEDDING_VERSION: u32 = 1;
/// Refuse headers larger than this; a corrupt length would otherwise
/// allocate gigabytes.
const MAX_HEADER_BYTES: u32 = 256 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingHeader {
    pub count: usize,
    pub dim: usize,
    pub dtype: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
}

impl EmbeddingHeader {
    pub fn new(count: usize, dim: usize, ids: Option<Vec<String>>) -> Self {
        Self {
            count,
            dim,
            dtype: "f32".into(),
            layout: "row-major".into(),
            ids,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dtype != "f32" {
            return Err(Error::Format(format!("unsupported dtype `{}`", self.dtype)));
        }
        if self.layout != "row-major" {
            return Err(Error::Format(format!("unsupported layout `{}`", self.layout)));
        }
        if let Some(ids) = &self.ids {
            if ids.len() != self.count {
                return Err(Error::Format(format!("{} ids for {} rows", ids.len(), self.count)));
            }
            let mut seen = HashSet::with_capacity(ids.len());
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(Error::Format(format!("duplicate id `{dup}`")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    pub header: EmbeddingHeader,
    pub data: Vec<f32>,
}

impl EmbeddingFile {
    pub fn new(dim: usize, data: Vec<f32>, ids: Option<Vec<String>>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Format(format!("{} values do not form rows of {dim}", data.len())));
        }
        let header = EmbeddingHeader::new(data.len() / dim, dim, ids);
        header.validate()?;
        Ok(Self { header, data })
    }

    pub fn from_matrix(m: &EmbeddingMatrix, ids: Option<Vec<String>>) -> Result<Self> {
        let header = EmbeddingHeader::new(m.rows(), m.dim(), ids);
        header.validate()?;
        Ok(Self {
            header,
            data: m.as_slice().iter().map(|&x| x as f32).collect(),
        })
    }

    pub fn to_matrix(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(
            self.header.count,
            self.header.dim,
            self.data.iter().map(|&x| x as f64).collect(),
        )
    }
}

pub(crate) fn write_framed<W: Write>(w: &mut W, magic: &[u8; 4], version: u32, header: &[u8], payload: &[f32]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(header)?;
    let mut buf = Vec::with_capacity(payload.len() * 4);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads magic, version and header; returns `(version, header bytes)`.
pub(crate) fn read_frame_header<R: Read>(r: &mut R, magic: &[u8; 4], max_version: u32) -> Result<(u32, Vec<u8>)> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(|_| Error::Format("file too short for a magic number".into()))?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version == 0 || version > max_version {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let len = read_u32(r)?;
    if len > MAX_HEADER_BYTES {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut header = vec![0u8; len as usize];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file ends inside the header".into()))?;
    Ok((version, header))
}

/// Reads exactly `n` f32 values and checks nothing follows.
pub(crate) fn read_payload<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * n {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            4 * n
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_embeddings_to<W: Write>(w: &mut W, file: &EmbeddingFile) -> Result<()> {
    file.header.validate()?;
    if file.data.len() != file.header.count * file.header.dim {
        return Err(Error::DimensionMismatch {
            context: "embedding payload",
            expected: file.header.count * file.header.dim,
            actual: file.data.len(),
        });
    }
    let header = serde_json::to_vec(&file.header)?;
    write_framed(w, EMBEDDING_MAGIC, EMBEDDING_VERSION, &header, &file.data)
}

pub fn read_embeddings_from<R: Read>(r: &mut R) -> Result<EmbeddingFile> {
    let (_, header) = read_frame_header(r, EMBEDDING_MAGIC, EMBEDDING_VERSION)?;
    let header: EmbeddingHeader =
        serde_json::from_slice(&header).map_err(|e| Error::Format(format!("embedding header: {e}")))?;
    header.validate()?;
    let n = header
        .count
        .checked_mul(header.dim)
        .ok_or_else(|| Error::Format("count × dim overflows".into()))?;
    let data = read_payload(r, n)?;
    Ok(EmbeddingFile { header, data })
}

pub fn write_embeddings(path: &Path, file: &EmbeddingFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings_to(&mut w, file)?;
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingFile> {
    read_embeddings_from(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(f: &EmbeddingFile) -> Result<EmbeddingFile> {
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, f)?;
        read_embeddings_from(&mut buf.as_slice())
    }

    proptest! {
        #[test]
        fn bits_survive_a_roundtrip(rows in 1usize..20, dim in 1usize..16, seed in any::<u32>()) {
            let data: Vec<f32> = (0..rows * dim)
                .map(|i| f32::from_bits((seed as u64 * 2_654_435_761 + i as u64 * 40_503) as u32 & 0x7f7f_ffff))
                .collect();
            let ids = Some((0..rows).map(|i| format!("id-{i}")).collect());
            let f = EmbeddingFile::new(dim, data, ids).unwrap();
            let back = roundtrip(&f).unwrap();
            prop_assert_eq!(back.header, f.header);
            prop_assert!(back.data.iter().zip(&f.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn layout_is_magic_version_header_payload() {
        let f = EmbeddingFile::new(2, vec![1.0, -2.0], None).unwrap();
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"REMB");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        let hlen = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&buf[12..12 + hlen]).unwrap();
        assert_eq!(header["dtype"], "f32");
        assert_eq!(header["layout"], "row-major");
        assert_eq!(&buf[12 + hlen..], [1.0f32.to_le_bytes(), (-2.0f32).to_le_bytes()].concat());
    }

    #[test]
    fn truncated_or_padded_payloads_are_rejected() {
        let f = EmbeddingFile::new(3, vec![0.5; 6], None).unwrap();
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &f).unwrap();
        let short = &buf[..buf.len() - 1];
        assert!(matches!(read_embeddings_from(&mut &short[..]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.extend([0, 0, 0, 0]);
        assert!(matches!(read_embeddings_from(&mut long.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_version_and_ids_are_rejected() {
        let f = EmbeddingFile::new(1, vec![0.0; 2], None).unwrap();
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &f).unwrap();
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(read_embeddings_from(&mut wrong.as_slice()).is_err());
        let mut v9 = buf.clone();
        v9[4] = 9;
        assert!(read_embeddings_from(&mut v9.as_slice()).is_err());
        assert!(EmbeddingFile::new(1, vec![0.0; 2], Some(vec!["a".into(), "a".into()])).is_err());
        assert!(EmbeddingFile::new(1, vec![0.0; 2], Some(vec!["a".into()])).is_err());
    }
}
