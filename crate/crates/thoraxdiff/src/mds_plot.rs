//! Feature tables and the joint MDS / ellipse diversity analysis.
//!
//! Feature CSV: header `name,extractor,f0,f1,…`, one row per volume.

use std::fmt::Write as _;
use std::path::Path;

use thoraxdiff_core::metrics::{ellipse_overlap, fit_ellipse, mds_embed, pairwise_distances, Ellipse, FeatureVector, Overlap};

use crate::io::write_atomic;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub extractor_id: String,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn from_vectors(rows: Vec<(String, FeatureVector)>) -> Result<Self> {
        let extractor_id = rows.first().map(|r| r.1.extractor_id.clone()).unwrap_or_default();
        if rows.iter().any(|r| r.1.extractor_id != extractor_id) {
            return Err(Error::Usage("feature rows come from different extractors".into()));
        }
        Ok(Self {
            extractor_id,
            rows: rows.into_iter().map(|(n, f)| (n, f.values)).collect(),
        })
    }
}

pub fn write_feature_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    let dim = table.rows.first().map_or(0, |r| r.1.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["name".to_string(), "extractor".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
    for (name, values) in &table.rows {
        let mut rec = vec![name.clone(), table.extractor_id.clone()];
        // `{:?}` prints the shortest string that parses back to the same f64.
        rec.extend(values.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, "csv", e.to_string()))?;
    let header = r.headers().map_err(|e| Error::format(path, "header", e.to_string()))?.clone();
    if header.get(0) != Some("name") || header.get(1) != Some("extractor") {
        return Err(Error::format(path, "header", "expected `name,extractor,f0,...`"));
    }
    let dim = header.len() - 2;
    let mut table = FeatureTable {
        extractor_id: String::new(),
        rows: Vec::new(),
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, format!("row {i}"), e.to_string()))?;
        if rec.len() != dim + 2 {
            return Err(Error::format(path, format!("row {i}"), format!("expected {} columns", dim + 2)));
        }
        let id = &rec[1];
        if table.rows.is_empty() {
            table.extractor_id = id.to_string();
        } else if id != table.extractor_id {
            return Err(Error::format(path, "extractor", format!("mixed extractors `{}` and `{id}`", table.extractor_id)));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::format(path, format!("row {i}"), "non-numeric feature"))?;
        table.rows.push((rec[0].to_string(), values));
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacedPoint {
    pub source: String,
    pub name: String,
    pub xy: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapRow {
    pub source: String,
    pub reference: String,
    pub overlap: Overlap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdsAnalysis {
    pub points: Vec<PlacedPoint>,
    pub ellipses: Vec<(String, Ellipse)>,
    pub overlaps: Vec<OverlapRow>,
}

/// Embeds every row of every source jointly, fits one ellipse per source and
/// measures each ellipse's overlap with the `reference` source's.
pub fn analyze(sources: &[(String, FeatureTable)], reference: &str, samples: usize, seed: u64) -> Result<MdsAnalysis> {
    if !sources.iter().any(|(n, _)| n == reference) {
        return Err(Error::Usage(format!("reference source `{reference}` is not among the sources")));
    }
    let ids: Vec<&str> = sources.iter().map(|s| s.1.extractor_id.as_str()).collect();
    if ids.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Usage(format!("sources use different extractors: {ids:?}")));
    }
    let all: Vec<Vec<f64>> = sources.iter().flat_map(|(_, t)| t.rows.iter().map(|r| r.1.clone())).collect();
    let dims: Vec<usize> = all.iter().map(Vec::len).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Usage("feature vectors differ in length across sources".into()));
    }
    let coords = mds_embed(&pairwise_distances(&all))?;
    let mut points = Vec::with_capacity(all.len());
    let mut ellipses = Vec::with_capacity(sources.len());
    let mut k = 0;
    for (source, table) in sources {
        let own = &coords[k..k + table.rows.len()];
        k += table.rows.len();
        for ((name, _), xy) in table.rows.iter().zip(own) {
            points.push(PlacedPoint {
                source: source.clone(),
                name: name.clone(),
                xy: *xy,
            });
        }
        let e = fit_ellipse(own).map_err(|e| Error::Input {
            what: format!("source `{source}`"),
            source: e,
        })?;
        ellipses.push((source.clone(), e));
    }
    let reference_ellipse = ellipses.iter().find(|(n, _)| n == reference).expect("reference checked above").1;
    let overlaps = ellipses
        .iter()
        .map(|(source, e)| {
            Ok(OverlapRow {
                source: source.clone(),
                reference: reference.to_string(),
                overlap: ellipse_overlap(e, &reference_ellipse, samples, seed)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MdsAnalysis { points, ellipses, overlaps })
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Scatter of the embedding with one outlined ellipse per source.
pub fn render_svg(a: &MdsAnalysis) -> String {
    let (size, margin) = (480.0, 40.0);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &a.points {
        for i in 0..2 {
            lo[i] = lo[i].min(p.xy[i]);
            hi[i] = hi[i].max(p.xy[i]);
        }
    }
    for (_, e) in &a.ellipses {
        let ext = e.half_extents();
        for i in 0..2 {
            lo[i] = lo[i].min(e.center[i] - ext[i]);
            hi[i] = hi[i].max(e.center[i] + ext[i]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (size - 2.0 * margin) / span;
    let map = |p: [f64; 2]| (margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, (source, e)) in a.ellipses.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let (cx, cy) = map(e.center);
        let _ = writeln!(
            s,
            r#"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.3} {cx:.2} {cy:.2})" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            e.semi_axes[0] * scale,
            e.semi_axes[1] * scale,
            -e.angle.to_degrees()
        );
        for p in a.points.iter().filter(|p| &p.source == source) {
            let (x, y) = map(p.xy);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(s, r#"<text x="{margin}" y="{:.0}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#, 16.0 + 14.0 * i as f64, xml_escape(source));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn csv_bytes(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.into_inner().map_err(|e| Error::io(path, e.into_error()))
}

/// `embedding.csv`, `ellipses.csv`, `overlap.csv` and `figure.svg`.
pub fn write_outputs(dir: &Path, a: &MdsAnalysis) -> Result<()> {
    let p = dir.join("embedding.csv");
    let bytes = csv_bytes(&p, &["source", "name", "x", "y"], a.points.iter().map(|q| vec![q.source.clone(), q.name.clone(), format!("{:?}", q.xy[0]), format!("{:?}", q.xy[1])]))?;
    write_atomic(&p, &bytes)?;
    let p = dir.join("ellipses.csv");
    let bytes = csv_bytes(
        &p,
        &["source", "center_x", "center_y", "semi_major", "semi_minor", "angle_rad"],
        a.ellipses.iter().map(|(s, e)| {
            vec![s.clone(), format!("{:?}", e.center[0]), format!("{:?}", e.center[1]), format!("{:?}", e.semi_axes[0]), format!("{:?}", e.semi_axes[1]), format!("{:?}", e.angle)]
        }),
    )?;
    write_atomic(&p, &bytes)?;
    let p = dir.join("overlap.csv");
    let bytes = csv_bytes(
        &p,
        &["source", "reference", "overlap_area", "fraction_of_source", "fraction_of_reference", "samples"],
        a.overlaps.iter().map(|o| {
            vec![
                o.source.clone(),
                o.reference.clone(),
                format!("{:?}", o.overlap.area),
                format!("{:?}", o.overlap.fraction_of_a),
                format!("{:?}", o.overlap.fraction_of_b),
                o.overlap.samples.to_string(),
            ]
        }),
    )?;
    write_atomic(&p, &bytes)?;
    write_atomic(&dir.join("figure.svg"), render_svg(a).as_bytes())
}
