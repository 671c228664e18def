//! Text metadata + raw voxel file format.
//!
//! ```text
//! dims = 64 64 64
//! spacing = 1 1 1
//! type = u16le
//! data = phantom.raw
//! ```
//!
//! The `data` path is resolved relative to the metadata file.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ValueType, Volume, VolumeError, VolumeMeta, VoxelData};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VolumeError + '_ {
    move |source| VolumeError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_triple<T: std::str::FromStr>(line: usize, value: &str) -> Result<[T; 3], VolumeError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(VolumeError::Meta {
            line,
            message: format!("expected three values, found {}", parts.len()),
        });
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| VolumeError::Meta {
            line,
            message: format!("cannot parse `{p}`"),
        })?);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

struct ParsedMeta {
    meta: VolumeMeta,
    data: PathBuf,
}

fn parse_meta(text: &str) -> Result<ParsedMeta, VolumeError> {
    let mut dims = None;
    let mut spacing = None;
    let mut value_type = None;
    let mut data = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| VolumeError::Meta {
            line,
            message: "expected `key = value`".into(),
        })?;
        let value = value.trim();
        match key.trim() {
            "dims" => dims = Some(parse_triple::<usize>(line, value)?),
            "spacing" => spacing = Some(parse_triple::<f64>(line, value)?),
            "type" => value_type = Some(value.parse::<ValueType>()?),
            "data" => data = Some(PathBuf::from(value)),
            other => {
                return Err(VolumeError::Meta {
                    line,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }

    let meta = VolumeMeta::new(
        dims.ok_or(VolumeError::MissingKey("dims"))?,
        spacing.ok_or(VolumeError::MissingKey("spacing"))?,
        value_type.ok_or(VolumeError::MissingKey("type"))?,
    )?;
    Ok(ParsedMeta {
        meta,
        data: data.ok_or(VolumeError::MissingKey("data"))?,
    })
}

/// Loads a volume from its metadata file and the raw file it references.
pub fn load_volume(meta_path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    let meta_path = meta_path.as_ref();
    let text = fs::read_to_string(meta_path).map_err(io_err(meta_path))?;
    let parsed = parse_meta(&text)?;
    let raw_path = meta_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&parsed.data);
    let bytes = fs::read(&raw_path).map_err(io_err(&raw_path))?;

    let meta = parsed.meta;
    let expected = meta.voxel_count() * meta.value_type.bytes_per_voxel();
    if bytes.len() != expected {
        return Err(VolumeError::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let data = match meta.value_type {
        ValueType::U8 => VoxelData::U8(bytes),
        ValueType::U16Le => VoxelData::U16(
            bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
    };
    Volume::new(meta, data)
}

/// Raw voxel bytes exactly as they are stored on disk.
pub fn raw_bytes(volume: &Volume) -> Vec<u8> {
    match volume.data() {
        VoxelData::U8(v) => v.clone(),
        VoxelData::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
    }
}

/// Writes `meta_path` plus a sibling raw file named after it (`.raw`).
pub fn save_volume(volume: &Volume, meta_path: impl AsRef<Path>) -> Result<PathBuf, VolumeError> {
    let meta_path = meta_path.as_ref();
    let raw_path = meta_path.with_extension("raw");
    let raw_name = raw_path
        .file_name()
        .expect("metadata path has a file name")
        .to_string_lossy()
        .into_owned();
    let m = volume.meta();
    let text = format!(
        "dims = {} {} {}\nspacing = {} {} {}\ntype = {}\ndata = {}\n",
        m.dims[0],
        m.dims[1],
        m.dims[2],
        m.spacing[0],
        m.spacing[1],
        m.spacing[2],
        m.value_type.as_str(),
        raw_name
    );
    fs::write(&raw_path, raw_bytes(volume)).map_err(io_err(&raw_path))?;
    fs::write(meta_path, text).map_err(io_err(meta_path))?;
    Ok(raw_path)
}
