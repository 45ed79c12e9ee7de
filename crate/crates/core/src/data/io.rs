//! Raw volume format: `<id>.raw` holds 32-bit little-endian floats in
//! depth-major then row-major order, `<id>.json` the sidecar header and
//! `<id>.mask.raw` an optional 8-bit {0, 1} mask of the same shape.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sean_tensor::Tensor;

use crate::data::volume::{CtVolume, Mask};
use crate::error::{Error, Result};

pub const DTYPE_F32LE: &str = "f32le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
    pub id: String,
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sidecar_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

/// Paths of the raw payload and mask belonging to a sidecar path.
fn companion_paths(sidecar: &Path) -> (PathBuf, PathBuf) {
    let stem = sidecar.with_extension("");
    let stem = stem.to_string_lossy();
    (PathBuf::from(format!("{stem}.raw")), PathBuf::from(format!("{stem}.mask.raw")))
}

/// Writes the volume (and mask, if given) into `dir`; returns the sidecar path.
pub fn write_volume(vol: &CtVolume, mask: Option<&Mask>, dir: &Path) -> Result<PathBuf> {
    if let Some(m) = mask {
        if m.dims() != vol.dims() {
            return Err(Error::Shape(format!("mask {:?} does not match volume {:?}", m.dims(), vol.dims())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sidecar = sidecar_path(dir, &vol.id);
    let (raw, mask_path) = companion_paths(&sidecar);
    let mut bytes = Vec::with_capacity(vol.voxels().numel() * 4);
    for v in vol.voxels().data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(&raw, &bytes)?;
    if let Some(m) = mask {
        write_atomic(&mask_path, m.data())?;
    }
    let header = Sidecar { dims: vol.dims(), spacing: vol.spacing, dtype: DTYPE_F32LE.into(), id: vol.id.clone() };
    let json = serde_json::to_vec_pretty(&header).expect("sidecar serializes");
    write_atomic(&sidecar, &json)?;
    Ok(sidecar)
}

/// Reads a volume from its sidecar path, plus the mask when one exists.
pub fn read_volume(sidecar: &Path) -> Result<(CtVolume, Option<Mask>)> {
    let text = fs::read(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let header: Sidecar =
        serde_json::from_slice(&text).map_err(|e| Error::format(sidecar, format!("bad sidecar: {e}")))?;
    if header.dtype != DTYPE_F32LE {
        return Err(Error::format(sidecar, format!("unsupported dtype {:?}", header.dtype)));
    }
    let n: usize = header.dims.iter().product();
    let (raw, mask_path) = companion_paths(sidecar);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    if bytes.len() < n * 4 {
        return Err(Error::format(&raw, format!("truncated: expected {} bytes for {:?}, found {}", n * 4, header.dims, bytes.len())));
    }
    if bytes.len() > n * 4 {
        return Err(Error::format(&raw, format!("expected {} bytes for {:?}, found {}", n * 4, header.dims, bytes.len())));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let vol = CtVolume::new(header.id, Tensor::from_vec(header.dims.to_vec(), data), header.spacing)?;
    let mask = if mask_path.exists() {
        let mb = fs::read(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        if mb.len() != n {
            return Err(Error::format(&mask_path, format!("expected {n} mask bytes, found {}", mb.len())));
        }
        Some(Mask::new(header.dims, mb).map_err(|e| Error::format(&mask_path, e.to_string()))?)
    } else {
        None
    };
    Ok((vol, mask))
}
