//! Volume and layout files: a JSON header next to a little-endian raw blob.
//!
//! ```text
//! scan.json  {"shape": [D, H, W], "dtype": "f32", "spacing_mm": [z, y, x], "order": "row-major, z slowest"}
//! scan.raw   D·H·W little-endian f32 values
//! ```
//!
//! Layouts use the same header with `"dtype": "u8"`. Every write goes to a
//! temporary file in the destination directory and is renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thoraxdiff_core::data::{SemanticLayout, Volume};

use crate::{Error, Result};

pub const ORDER: &str = "row-major, z slowest";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::U8 => "u8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub shape: [usize; 3],
    pub dtype: Dtype,
    pub spacing_mm: [f64; 3],
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    shape: [usize; 3],
    dtype: &'a str,
    spacing_mm: [f64; 3],
    order: &'a str,
}

/// `scan`, `scan.json` and `scan.raw` all name the pair `scan.json` + `scan.raw`.
pub fn file_pair(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (json.into(), raw.into())
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, "json", e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, "json", e.to_string()))
}

pub fn read_header(path: &Path) -> Result<Header> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, "header", e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| Error::format(path, "header", "expected a JSON object"))?;
    let bad = |field: &str, reason: &str| Error::format(path, field, reason);
    for key in obj.keys() {
        if !matches!(key.as_str(), "shape" | "dtype" | "spacing_mm" | "order") {
            return Err(bad(key, "unknown field"));
        }
    }
    let triple = |field: &str| -> Result<[&Value; 3]> {
        let a = obj.get(field).ok_or_else(|| bad(field, "missing"))?;
        let a = a.as_array().filter(|a| a.len() == 3).ok_or_else(|| bad(field, "expected an array of 3 numbers"))?;
        Ok([&a[0], &a[1], &a[2]])
    };
    let mut shape = [0usize; 3];
    for (s, v) in shape.iter_mut().zip(triple("shape")?) {
        *s = v.as_u64().filter(|&n| n > 0).ok_or_else(|| bad("shape", "extents must be positive integers"))? as usize;
    }
    let mut spacing_mm = [0.0f64; 3];
    for (s, v) in spacing_mm.iter_mut().zip(triple("spacing_mm")?) {
        *s = v.as_f64().filter(|x| *x > 0.0 && x.is_finite()).ok_or_else(|| bad("spacing_mm", "spacings must be positive numbers"))?;
    }
    let dtype = match obj.get("dtype").and_then(Value::as_str) {
        Some("f32") => Dtype::F32,
        Some("u8") => Dtype::U8,
        Some(other) => return Err(bad("dtype", &format!("unsupported dtype `{other}`"))),
        None => return Err(bad("dtype", "missing")),
    };
    match obj.get("order").and_then(Value::as_str) {
        Some(ORDER) => {}
        Some(other) => return Err(bad("order", &format!("unsupported order `{other}`, expected `{ORDER}`"))),
        None => return Err(bad("order", "missing")),
    }
    Ok(Header { shape, dtype, spacing_mm })
}

fn save_pair(path: &Path, header: &Header, blob: &[u8]) -> Result<PathBuf> {
    let (json, raw) = file_pair(path);
    write_atomic(&raw, blob)?;
    write_json(
        &json,
        &HeaderOut {
            shape: header.shape,
            dtype: header.dtype.as_str(),
            spacing_mm: header.spacing_mm,
            order: ORDER,
        },
    )?;
    Ok(json)
}

fn load_pair(path: &Path, want: Dtype) -> Result<(Header, Vec<u8>)> {
    let (json, raw) = file_pair(path);
    let header = read_header(&json)?;
    if header.dtype != want {
        return Err(Error::format(
            &json,
            "dtype",
            format!("expected `{}`, found `{}`", want.as_str(), header.dtype.as_str()),
        ));
    }
    let blob = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let expected = header.shape.iter().product::<usize>() * want.size();
    if blob.len() != expected {
        return Err(Error::format(
            &raw,
            "shape",
            format!("shape {:?} needs {expected} bytes of {}, blob has {}", header.shape, want.as_str(), blob.len()),
        ));
    }
    Ok((header, blob))
}

/// Returns the header path written.
pub fn save_volume(path: &Path, vol: &Volume) -> Result<PathBuf> {
    let blob: Vec<u8> = vol.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = Header {
        shape: vol.dims(),
        dtype: Dtype::F32,
        spacing_mm: vol.spacing_mm(),
    };
    save_pair(path, &header, &blob)
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    let (h, blob) = load_pair(path, Dtype::F32)?;
    let values = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Volume::new(h.shape, h.spacing_mm, values).map_err(|e| Error::Input {
        what: file_pair(path).1.display().to_string(),
        source: e,
    })
}

pub fn save_layout(path: &Path, layout: &SemanticLayout) -> Result<PathBuf> {
    let header = Header {
        shape: layout.dims(),
        dtype: Dtype::U8,
        spacing_mm: layout.spacing_mm(),
    };
    save_pair(path, &header, layout.labels())
}

pub fn load_layout(path: &Path) -> Result<SemanticLayout> {
    let (h, blob) = load_pair(path, Dtype::U8)?;
    SemanticLayout::new(h.shape, h.spacing_mm, blob).map_err(|e| Error::Input {
        what: file_pair(path).1.display().to_string(),
        source: e,
    })
}

/// Little-endian `f32` blob.
pub fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn read_f32_blob(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let blob = fs::read(path).map_err(|e| Error::io(path, e))?;
    if blob.len() != expected_len * 4 {
        return Err(Error::format(
            path,
            "length",
            format!("expected {} bytes ({expected_len} f32 values), found {}", expected_len * 4, blob.len()),
        ));
    }
    Ok(blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
