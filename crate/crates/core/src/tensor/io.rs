//! Raw tensor files: little-endian `f32` values in NCHW order, described by a
//! JSON sidecar `{"dims": [n, c, h, w], "dtype": "f32le", "data": "<file>"}`.
//! The `data` path is resolved relative to the sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor4;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dims: [usize; 4],
    pub dtype: String,
    pub data: String,
}

pub fn read_tensor(sidecar: &Path) -> Result<Tensor4> {
    let meta: RawSidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
    if meta.dtype != "f32le" {
        return Err(Error::Schema {
            path: "dtype".into(),
            msg: format!("unsupported dtype `{}`", meta.dtype),
        });
    }
    let base = sidecar.parent().unwrap_or_else(|| Path::new("."));
    let bytes = fs::read(base.join(&meta.data))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Schema {
            path: "data".into(),
            msg: format!("byte length {} is not a multiple of 4", bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor4::new(meta.dims, values)
}

/// Writes `<stem>.bin` next to `sidecar` and the sidecar itself.
pub fn write_tensor(sidecar: &Path, tensor: &Tensor4) -> Result<()> {
    let stem = sidecar
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::param("write_tensor", "sidecar path has no file stem"))?;
    let data_name = format!("{stem}.bin");
    let base = sidecar.parent().unwrap_or_else(|| Path::new("."));
    let mut bytes = Vec::with_capacity(tensor.data().len() * 4);
    for v in tensor.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(base.join(&data_name), bytes)?;
    let meta = RawSidecar {
        dims: tensor.dims(),
        dtype: "f32le".into(),
        data: data_name,
    };
    fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
