//! Id-aligned sentence embedding matrices and the SEMB1 container.
//!
//! SEMB1 layout, all integers and floats little-endian:
//!
//! ```text
//! "SEMB" | 0x01 | u32 n | u32 d
//! n × (u16 byte length, UTF-8 id)
//! n·d × binary32, row-major
//! ```

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;

use crate::corpus::LabeledDataset;
use crate::error::{Error, Result};
use crate::io::{dim_u32, open_container, put_f32s};

const MAGIC: &[u8; 4] = b"SEMB";
const VERSION: u8 = 0x01;

/// Dense `n × dim` embeddings stored as `f32`, one row per id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// `data` is row-major with `ids.len() * dim` entries.
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(format!(
                "{} values do not fill {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.is_empty() {
                return Err(Error::invalid("empty embedding id"));
            }
            if id.len() > u16::MAX as usize {
                return Err(Error::invalid(format!("id of {} bytes exceeds the u16 length field", id.len())));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate embedding id `{id}`")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value in row `{}` column {}",
                ids[pos / dim],
                pos % dim
            )));
        }
        Ok(Self { ids, dim, data })
    }

    /// Builds a matrix from `f64` rows, rounding to `f32` storage.
    pub fn from_f64(ids: Vec<String>, rows: &DMatrix<f64>) -> Result<Self> {
        if rows.nrows() != ids.len() {
            return Err(Error::invalid(format!("{} ids for {} rows", ids.len(), rows.nrows())));
        }
        let dim = rows.ncols();
        let mut data = Vec::with_capacity(rows.len());
        for r in 0..rows.nrows() {
            data.extend(rows.row(r).iter().map(|&v| v as f32));
        }
        Self::new(ids, dim, data)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row promoted to `f64`.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// All rows promoted to an `n × dim` `f64` matrix.
    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.len(), self.dim, self.data.iter().map(|&v| v as f64))
    }

    /// Rows selected by index, in the given order, promoted to `f64`.
    pub fn select_f64(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_row_iterator(
            rows.len(),
            self.dim,
            rows.iter().flat_map(|&r| self.row(r).iter().map(|&v| v as f64)),
        )
    }

    /// Sub-matrix with the rows of `alignment`, in dataset order.
    pub fn subset(&self, alignment: &Alignment) -> EmbeddingMatrix {
        let ids = alignment.indices.iter().map(|&r| self.ids[r].clone()).collect();
        let data = alignment.indices.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        EmbeddingMatrix {
            ids,
            dim: self.dim,
            data,
        }
    }
}

/// Maps dataset position `i` to matrix row `indices[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub indices: Vec<usize>,
}

/// Locates every dataset id in `m`. Rows of `m` that the dataset does not
/// mention are ignored.
pub fn align(ds: &LabeledDataset, m: &EmbeddingMatrix) -> Result<Alignment> {
    align_ids(ds.ids(), m)
}

pub fn align_ids<'a>(ids: impl IntoIterator<Item = &'a str>, m: &EmbeddingMatrix) -> Result<Alignment> {
    let index: HashMap<&str, usize> = m.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let indices = ids
        .into_iter()
        .map(|id| index.get(id).copied().ok_or_else(|| Error::Alignment(id.to_string())))
        .collect::<Result<_>>()?;
    Ok(Alignment { indices })
}

pub fn write_embeddings(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let id_bytes: usize = m.ids.iter().map(|id| 2 + id.len()).sum();
    let mut out = Vec::with_capacity(13 + id_bytes + 4 * m.data.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&dim_u32(m.len(), "row count")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(m.dim, "dimension")?.to_le_bytes());
    for id in &m.ids {
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    put_f32s(&mut out, m.data.iter().copied());
    Ok(out)
}

pub fn read_embeddings(raw: &[u8]) -> Result<EmbeddingMatrix> {
    let mut r = open_container(raw, MAGIC, VERSION)?;
    let n = r.u32("row count")? as usize;
    let dim = r.u32("dimension")? as usize;
    // cap the pre-allocation so a corrupt header cannot request gigabytes
    let mut ids = Vec::with_capacity(n.min(raw.len() / 2));
    for i in 0..n {
        let len = r.u16("id length")? as usize;
        let bytes = r.take(len, "id bytes")?;
        let id = std::str::from_utf8(bytes)
            .map_err(|_| Error::invalid(format!("id #{i} is not valid UTF-8")))?;
        ids.push(id.to_string());
    }
    let count = n
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("declared matrix size overflows".into()))?;
    let data = r.f32s(count, "embedding values")?;
    r.finish()?;
    EmbeddingMatrix::new(ids, dim, data)
}
