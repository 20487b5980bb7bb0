//! Named parameter collections and their on-disk / on-wire encoding.
//!
//! A [`ParameterSet`] is the unit exchanged in federation: an ordered list of
//! named f32 tensors. The checkpoint container stores one set together with a
//! JSON metadata header; the same entry encoding doubles as the transport
//! payload, so a checkpoint written by one process can be imported bit-exactly
//! by another.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::util::fnv1a64;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One named tensor: shape plus row-major f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl ParamEntry {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Self {
        let entry = Self {
            name: name.into(),
            shape,
            values,
        };
        debug_assert_eq!(entry.shape.iter().product::<usize>(), entry.values.len());
        entry
    }
}

/// Ordered, uniquely named collection of f32 tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: Vec<ParamEntry>,
}

impl ParameterSet {
    /// Builds a set, rejecting duplicate names, shape/value length
    /// disagreements, and non-finite values.
    pub fn new(entries: Vec<ParamEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.name.clone()) {
                return Err(CoreError::ParamMismatch {
                    name: e.name.clone(),
                    reason: "duplicate entry name".into(),
                });
            }
            if e.shape.iter().product::<usize>() != e.values.len() {
                return Err(CoreError::ParamMismatch {
                    name: e.name.clone(),
                    reason: format!(
                        "shape {:?} does not match value count {}",
                        e.shape,
                        e.values.len()
                    ),
                });
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite(format!("parameter entry `{}`", e.name)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all entries.
    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Entry-by-entry name and shape compatibility; the first offending entry
    /// is named in the error.
    pub fn check_compatible(&self, other: &ParameterSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "entry count {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(other.entries.iter()) {
            if a.name != b.name {
                return Err(CoreError::ParamMismatch {
                    name: a.name.clone(),
                    reason: format!("name mismatch (other side has `{}`)", b.name),
                });
            }
            if a.shape != b.shape {
                return Err(CoreError::ParamMismatch {
                    name: a.name.clone(),
                    reason: format!("shape {:?} vs {:?}", a.shape, b.shape),
                });
            }
        }
        Ok(())
    }

    /// Content hash over names, shapes, and exact value bits.
    pub fn content_hash(&self) -> u64 {
        let mut buf = Vec::new();
        self.encode_into(&mut buf).expect("vec write");
        fnv1a64(&buf)
    }

    /// Binary entry encoding shared by checkpoints and the socket transport.
    pub fn encode_into<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let name = e.name.as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(e.shape.len() as u8).to_le_bytes())?;
            for &d in &e.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            w.write_all(&(e.values.len() as u64).to_le_bytes())?;
            for &v in &e.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn decode_from<R: Read>(r: &mut R) -> Result<Self> {
        let n = read_u32(r)? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = read_u16(r)? as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf).map_err(|_| CoreError::Format {
                path: "<stream>".into(),
                reason: "entry name is not UTF-8".into(),
            })?;
            let ndim = read_u8(r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(r)? as usize);
            }
            let count = read_u64(r)? as usize;
            let mut raw = vec![0u8; count * 4];
            r.read_exact(&mut raw)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(ParamEntry::new(name, shape, values));
        }
        ParameterSet::new(entries)
    }
}

/// Metadata header stored alongside the parameters in a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub epoch: u64,
    pub seed: u64,
    /// Echo of the resolved configuration that produced the parameters.
    pub config: serde_json::Value,
    /// Optimizer step count when the set holds Adam moments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt_step: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl CheckpointMeta {
    pub fn new(epoch: u64, seed: u64, config: serde_json::Value) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            epoch,
            seed,
            config,
            opt_step: None,
            extra: BTreeMap::new(),
        }
    }
}

pub fn write_checkpoint(path: &Path, params: &ParameterSet, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let meta_json = serde_json::to_vec(meta).map_err(|e| CoreError::Format {
        path: path.to_path_buf(),
        reason: format!("metadata serialization: {e}"),
    })?;
    w.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    w.write_all(&meta_json)?;
    params.encode_into(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(ParameterSet, CheckpointMeta)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path).map_err(|_| {
        CoreError::MissingCheckpoint(path.to_path_buf())
    })?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CoreError::Format {
            path: path.to_path_buf(),
            reason: "bad magic".into(),
        });
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CoreError::Format {
            path: path.to_path_buf(),
            reason: format!("unsupported version {version}"),
        });
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta_buf = vec![0u8; meta_len];
    r.read_exact(&mut meta_buf)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_buf).map_err(|e| CoreError::Format {
        path: path.to_path_buf(),
        reason: format!("metadata: {e}"),
    })?;
    let params = ParameterSet::decode_from(&mut r)?;
    Ok((params, meta))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
