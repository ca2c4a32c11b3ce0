//! Directories of phantoms: `index.json` listing volume/layout pairs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thoraxdiff_core::data::{generate_phantom, PhantomConfig, SemanticLayout, Volume};

use crate::io::{load_layout, load_volume, read_json, save_layout, save_volume, write_json};
use crate::{Error, Result};

pub const INDEX: &str = "index.json";
pub const FORMAT: &str = "thoraxdiff-dataset";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub name: String,
    /// Header paths relative to the index.
    pub volume: String,
    pub layout: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Index {
    pub format: String,
    pub seed: Option<u64>,
    pub count: usize,
    pub phantom: Option<PhantomConfig>,
    pub entries: Vec<Entry>,
}

/// Phantom `i` is generated from seed `seed + i` (wrapping).
pub fn phantom_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

pub fn generate_dataset(count: usize, seed: u64, cfg: &PhantomConfig, out_dir: &Path) -> Result<Index> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let s = phantom_seed(seed, i);
        let p = generate_phantom(s, cfg)?;
        let name = format!("phantom_{i:04}");
        save_volume(&out_dir.join(&name), &p.volume)?;
        save_layout(&out_dir.join(format!("{name}_layout")), &p.layout)?;
        entries.push(Entry {
            volume: format!("{name}.json"),
            layout: format!("{name}_layout.json"),
            name,
            seed: Some(s),
        });
    }
    let index = Index {
        format: FORMAT.into(),
        seed: Some(seed),
        count,
        phantom: Some(cfg.clone()),
        entries,
    };
    write_json(&out_dir.join(INDEX), &index)?;
    Ok(index)
}

pub fn read_index(dir: &Path) -> Result<Index> {
    let path = dir.join(INDEX);
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found")));
    }
    let index: Index = read_json(&path)?;
    if index.format != FORMAT {
        return Err(Error::format(&path, "format", format!("expected `{FORMAT}`")));
    }
    if index.count != index.entries.len() {
        return Err(Error::format(&path, "count", "does not match the number of entries"));
    }
    Ok(index)
}

pub struct LoadedEntry {
    pub name: String,
    pub volume: Volume,
    pub layout: SemanticLayout,
    pub volume_path: PathBuf,
    pub layout_path: PathBuf,
}

pub fn load_dataset(dir: &Path) -> Result<Vec<LoadedEntry>> {
    read_index(dir)?
        .entries
        .into_iter()
        .map(|e| {
            let (vp, lp) = (dir.join(&e.volume), dir.join(&e.layout));
            Ok(LoadedEntry {
                volume: load_volume(&vp)?,
                layout: load_layout(&lp)?,
                name: e.name,
                volume_path: vp,
                layout_path: lp,
            })
        })
        .collect()
}
