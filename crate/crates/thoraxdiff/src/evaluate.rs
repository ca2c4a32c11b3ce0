//! Set-level and paired evaluation of synthetic volumes against real ones.
//!
//! A pairing manifest lists the entries explicitly:
//!
//! ```json
//! {"pairs": [{"real": "phantom_0000", "synthetic": "sample_0000", "layout": "phantom_0000_layout", "fold": 0}]}
//! ```
//!
//! `real` and `layout` are resolved against the real directory, `synthetic`
//! against the synthetic one. Without a manifest, volumes present under the
//! same name in both directories are paired, the layout of real volume `n`
//! is `n_layout`, and entries are dealt round-robin into the requested folds.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thoraxdiff_core::data::{derive_masks, Mask, Volume};
use thoraxdiff_core::metrics::{fold_metrics, FeatureExtractor, FoldMetrics, MetricReport, PairedSample, RbfKernel};

use crate::io::{load_layout, load_volume, read_header, read_json, write_atomic, write_json, Dtype};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub real: String,
    pub synthetic: String,
    pub layout: String,
    #[serde(default)]
    pub fold: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingManifest {
    pub pairs: Vec<PairSpec>,
}

/// Names of the `f32` volumes in `dir`, sorted.
pub fn volume_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        if let Ok(h) = read_header(&path) {
            if h.dtype == Dtype::F32 {
                names.insert(path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string());
            }
        }
    }
    Ok(names.into_iter().collect())
}

/// Pairs by shared name, dealt into `folds` folds.
pub fn default_pairing(real_dir: &Path, syn_dir: &Path, folds: usize) -> Result<PairingManifest> {
    let syn: BTreeSet<String> = volume_names(syn_dir)?.into_iter().collect();
    let pairs: Vec<PairSpec> = volume_names(real_dir)?
        .into_iter()
        .filter(|n| syn.contains(n) && real_dir.join(format!("{n}_layout.json")).exists())
        .enumerate()
        .map(|(i, n)| PairSpec {
            layout: format!("{n}_layout"),
            synthetic: n.clone(),
            real: n,
            fold: i % folds.max(1),
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::Manifest(format!(
            "no volume names shared by {} and {} with a layout in the real directory",
            real_dir.display(),
            syn_dir.display()
        )));
    }
    Ok(PairingManifest { pairs })
}

pub fn read_manifest(path: &Path) -> Result<PairingManifest> {
    read_json(path)
}

fn header_path(dir: &Path, name: &str) -> PathBuf {
    let p = dir.join(name);
    if p.extension().is_some_and(|e| e == "json") {
        p
    } else {
        dir.join(format!("{name}.json"))
    }
}

/// Evaluates every fold of the manifest; volumes are featurized with up to
/// `threads` threads.
pub fn evaluate_dirs(
    real_dir: &Path,
    syn_dir: &Path,
    manifest: &PairingManifest,
    extractor: &(dyn FeatureExtractor + Sync),
    kernel: RbfKernel,
    threads: usize,
) -> Result<MetricReport> {
    if manifest.pairs.is_empty() {
        return Err(Error::Manifest("no pairs".into()));
    }
    let n_folds = manifest.pairs.iter().map(|p| p.fold).max().unwrap_or(0) + 1;
    for (i, p) in manifest.pairs.iter().enumerate() {
        for (dir, name, role) in [(real_dir, &p.real, "real"), (syn_dir, &p.synthetic, "synthetic"), (real_dir, &p.layout, "layout")] {
            if !header_path(dir, name).exists() {
                return Err(Error::Manifest(format!("pair {i}: {role} entry `{name}` not found in {}", dir.display())));
            }
        }
    }
    let mut folds = Vec::with_capacity(n_folds);
    for fold in 0..n_folds {
        let specs: Vec<&PairSpec> = manifest.pairs.iter().filter(|p| p.fold == fold).collect();
        if specs.is_empty() {
            return Err(Error::Manifest(format!("fold {fold} has no pairs")));
        }
        let load = |dir: &Path, name: &str| load_volume(&header_path(dir, name));
        let real: Vec<Volume> = specs.iter().map(|p| load(real_dir, &p.real)).collect::<Result<_>>()?;
        let syn: Vec<Volume> = specs.iter().map(|p| load(syn_dir, &p.synthetic)).collect::<Result<_>>()?;
        let lungs: Vec<Mask> = specs
            .iter()
            .map(|p| load_layout(&header_path(real_dir, &p.layout)).map(|l| derive_masks(&l).lung))
            .collect::<Result<_>>()?;
        let pairs: Vec<PairedSample> = (0..specs.len())
            .map(|i| PairedSample {
                real: &real[i],
                synthetic: &syn[i],
                lung: &lungs[i],
            })
            .collect();
        let featurize = |set: &[Volume]| -> Result<Vec<Vec<f64>>> {
            let refs: Vec<&Volume> = set.iter().collect();
            crate::par_map(&refs, threads, |v| extractor.extract(v).map(|f| f.values))
                .into_iter()
                .collect::<Result<_, _>>()
                .map_err(Error::from)
        };
        let m = fold_metrics(&featurize(&real)?, &featurize(&syn)?, &pairs, kernel).map_err(|e| Error::Input {
            what: format!("fold {fold}"),
            source: e,
        })?;
        folds.push(m);
    }
    Ok(MetricReport::from_folds(folds, extractor.id(), kernel)?)
}

/// `report.json` and `report.csv` (one row per fold).
pub fn write_report(dir: &Path, report: &MetricReport) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let path = dir.join("report.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let row = |fold: usize, f: &FoldMetrics| -> Vec<String> {
        vec![
            fold.to_string(),
            format!("{:?}", f.fid),
            format!("{:?}", f.mmd),
            format!("{:?}", f.mse),
            format!("{:?}", f.mmd_bandwidth),
            f.real_count.to_string(),
            f.synthetic_count.to_string(),
            f.pair_count.to_string(),
            report.extractor_id.clone(),
        ]
    };
    let header = ["fold", "fid", "mmd", "mse", "mmd_bandwidth", "real_count", "synthetic_count", "pair_count", "extractor"];
    w.write_record(header).map_err(|e| Error::io(&path, e.into()))?;
    for (i, f) in report.folds.iter().enumerate() {
        w.write_record(row(i, f)).map_err(|e| Error::io(&path, e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
    write_atomic(&path, &bytes)
}
