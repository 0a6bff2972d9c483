//! Topology extraction from raster images: classify pixels against a palette, merge them
//! into 4-connected regions (dropping small ones), then count region pairs whose
//! dilations reach into each other.
//!
//! Dilation uses city-block balls. With radius 1 and a minimum overlap of 1 two regions
//! are adjacent exactly when some pixel of one is 4-adjacent to a pixel of the other.
//! At the default radius 2 seams up to 2 px wide still link, while two regions meeting
//! only at a corner overlap by 3 pixels, under the default minimum of 4.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ColorMode, RasterImage};
use crate::topology::{grey_profile, Pair, Palette, PaletteViolation, TopologyGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    /// Regions smaller than this fraction of the image are discarded.
    pub min_area_fraction: f64,
    /// Dilation radius in pixels, city-block metric. See [`reach`].
    pub dilation_radius: usize,
    /// Minimum overlap in pixels for two regions to count as adjacent.
    pub min_overlap: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams { min_area_fraction: 0.002, dilation_radius: 2, min_overlap: 4 }
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid extraction parameters: {0}")]
    InvalidParams(String),
    #[error("palette unusable: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Palette(Vec<PaletteViolation>),
    #[error("cannot read directory {path}: {source}")]
    DirectoryUnreadable { path: PathBuf, source: std::io::Error },
}

impl ExtractParams {
    pub fn validate(&self) -> Result<(), ExtractError> {
        if !(self.min_area_fraction > 0.0 && self.min_area_fraction < 1.0) {
            return Err(ExtractError::InvalidParams("min_area_fraction must be in (0,1)".into()));
        }
        if self.dilation_radius < 1 {
            return Err(ExtractError::InvalidParams("dilation_radius must be >= 1".into()));
        }
        if self.min_overlap < 1 {
            return Err(ExtractError::InvalidParams("min_overlap must be >= 1".into()));
        }
        Ok(())
    }

    pub fn min_area_pixels(&self, width: usize, height: usize) -> f64 {
        self.min_area_fraction * (width * height) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PixelClass {
    Label(u32),
    Background,
    Boundary,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<PixelClass>,
}

impl LabelMap {
    pub fn unlabeled_fraction(&self) -> f64 {
        let n = self.classes.iter().filter(|c| **c == PixelClass::Unlabeled).count();
        n as f64 / self.classes.len() as f64
    }
}

/// Maps each pixel to the nearest palette colour within tolerance. Candidates are the
/// entries in order, then background, then boundary; the first of equally near wins.
pub fn classify(image: &RasterImage, palette: &Palette) -> LabelMap {
    let mut candidates: Vec<([f64; 3], PixelClass)> = palette
        .entries
        .iter()
        .map(|e| (e.rgb.as_f64(), PixelClass::Label(e.label)))
        .collect();
    candidates.push((palette.background.as_f64(), PixelClass::Background));
    candidates.push((palette.boundary.as_f64(), PixelClass::Boundary));
    let tol2 = palette.tolerance * palette.tolerance;

    let mut cache: HashMap<[u8; 3], PixelClass> = HashMap::new();
    let classes = image
        .pixels
        .iter()
        .map(|p| {
            *cache.entry(p.0).or_insert_with(|| {
                let f = p.as_f64();
                let mut best = (f64::INFINITY, PixelClass::Unlabeled);
                for (c, class) in &candidates {
                    let d2 = (f[0] - c[0]).powi(2) + (f[1] - c[1]).powi(2) + (f[2] - c[2]).powi(2);
                    if d2 < best.0 {
                        best = (d2, *class);
                    }
                }
                if best.0 <= tol2 {
                    best.1
                } else {
                    PixelClass::Unlabeled
                }
            })
        })
        .collect();
    LabelMap { width: image.width, height: image.height, classes }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub label: u32,
    /// Row-major pixel indices in ascending order.
    pub pixels: Vec<u32>,
    /// (min_x, min_y, max_x, max_y), inclusive.
    pub bbox: (usize, usize, usize, usize),
}

impl Region {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn summary(&self) -> RegionSummary {
        RegionSummary { label: self.label, pixel_count: self.pixels.len(), bbox: self.bbox }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub label: u32,
    pub pixel_count: usize,
    pub bbox: (usize, usize, usize, usize),
}

/// 4-connected components of labelled pixels, in raster order of their first pixel.
/// Components below the area threshold are dropped.
pub fn segment(map: &LabelMap, params: &ExtractParams) -> Vec<Region> {
    let (w, h) = (map.width, map.height);
    let min_area = params.min_area_pixels(w, h);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        let PixelClass::Label(label) = map.classes[start] else {
            continue;
        };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i as u32);
            for n in crate::plangen::neighbors4(i, w, h) {
                if !seen[n] && map.classes[n] == PixelClass::Label(label) {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        if (pixels.len() as f64) < min_area {
            continue;
        }
        pixels.sort_unstable();
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        for &p in &pixels {
            let (x, y) = (p as usize % w, p as usize / w);
            bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x), bbox.3.max(y));
        }
        out.push(Region { label, pixels, bbox });
    }
    out
}

/// Pixel reach of the adjacency test for a dilation radius: both regions grow by `radius`
/// and must meet, so region pixels up to `2 * radius - 1` steps apart are linked.
pub fn reach(radius: usize) -> usize {
    (2 * radius).saturating_sub(1)
}

/// Overlap between two regions: the number of pixels of one region within `reach(radius)`
/// city-block steps of the other, taking the larger of the two directions. Returns the
/// overlap for every region pair (by index) that has any.
pub fn region_overlaps(
    regions: &[Region],
    width: usize,
    height: usize,
    radius: usize,
) -> BTreeMap<(usize, usize), usize> {
    let mut owner = vec![u32::MAX; width * height];
    for (k, r) in regions.iter().enumerate() {
        for &p in &r.pixels {
            owner[p as usize] = k as u32;
        }
    }
    let r = reach(radius) as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx.abs() + dy.abs() <= r && (dx, dy) != (0, 0))
        .collect();

    // near[(a, b)]: pixels of region b within reach of region a.
    let mut near: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut seen: Vec<u32> = Vec::new();
    for (s, region) in regions.iter().enumerate() {
        for &p in &region.pixels {
            let (x, y) = ((p as usize % width) as isize, (p as usize / width) as isize);
            seen.clear();
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let o = owner[ny as usize * width + nx as usize];
                if o != u32::MAX && o as usize != s && !seen.contains(&o) {
                    seen.push(o);
                }
            }
            for &o in &seen {
                *near.entry((o as usize, s)).or_insert(0) += 1;
            }
        }
    }
    let mut overlap = BTreeMap::new();
    for (&(a, b), &n) in &near {
        let key = (a.min(b), a.max(b));
        let e = overlap.entry(key).or_insert(0);
        *e = (*e).max(n);
    }
    overlap
}

/// Adjacent region pairs by index.
pub fn adjacent_region_pairs(
    regions: &[Region],
    width: usize,
    height: usize,
    params: &ExtractParams,
) -> Vec<(usize, usize)> {
    region_overlaps(regions, width, height, params.dilation_radius)
        .into_iter()
        .filter(|&(_, n)| n >= params.min_overlap)
        .map(|(k, _)| k)
        .collect()
}

/// Number of adjacent region pairs per unordered label pair.
pub fn adjacencies(
    regions: &[Region],
    width: usize,
    height: usize,
    params: &ExtractParams,
) -> BTreeMap<Pair<u32>, usize> {
    let mut out = BTreeMap::new();
    for (a, b) in adjacent_region_pairs(regions, width, height, params) {
        *out.entry(Pair::new(regions[a].label, regions[b].label)).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub a: u32,
    pub b: u32,
    pub count: usize,
}

/// Detected versus expected count for one grey-level pair of the core profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreyPairCheck {
    pub a: u32,
    pub b: u32,
    pub expected: usize,
    pub detected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyReport {
    pub image_id: String,
    pub mode: ColorMode,
    pub regions: Vec<RegionSummary>,
    pub adjacency: Vec<PairCount>,
    pub core_found: usize,
    pub core_total: usize,
    pub extra: usize,
    pub total_adjacencies: usize,
    pub unlabeled_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grey_pairs: Vec<GreyPairCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AdjacencyReport {
    pub fn core_recall(&self) -> f64 {
        if self.core_total == 0 {
            0.0
        } else {
            self.core_found as f64 / self.core_total as f64
        }
    }

    pub fn detected_pairs(&self) -> BTreeSet<Pair<u32>> {
        self.adjacency.iter().map(|p| Pair::new(p.a, p.b)).collect()
    }

    fn failed(image_id: String, mode: ColorMode, core_total: usize, error: String) -> Self {
        AdjacencyReport {
            image_id,
            mode,
            regions: vec![],
            adjacency: vec![],
            core_found: 0,
            core_total,
            extra: 0,
            total_adjacencies: 0,
            unlabeled_fraction: 1.0,
            grey_pairs: vec![],
            error: Some(error),
        }
    }
}

/// Label pairs that the graph requires, in the labelling used by `mode`.
pub fn core_pairs(graph: &TopologyGraph, mode: ColorMode) -> BTreeMap<Pair<u32>, usize> {
    match mode {
        ColorMode::Rgb => graph.edge_set().into_iter().map(|p| (p, 1)).collect(),
        ColorMode::Grey => grey_profile(graph)
            .counts
            .into_iter()
            .map(|(p, n)| (Pair::new(p.lo() as u32, p.hi() as u32), n))
            .collect(),
    }
}

pub fn extract_report(
    image_id: &str,
    image: &RasterImage,
    palette: &Palette,
    graph: &TopologyGraph,
    mode: ColorMode,
    params: &ExtractParams,
) -> Result<AdjacencyReport, ExtractError> {
    params.validate()?;
    let violations = palette.separation_violations();
    if !violations.is_empty() {
        return Err(ExtractError::Palette(violations));
    }
    let map = classify(image, palette);
    let regions = segment(&map, params);
    let adjacency = adjacencies(&regions, image.width, image.height, params);
    Ok(build_report(image_id, mode, graph, &map, &regions, adjacency))
}

fn build_report(
    image_id: &str,
    mode: ColorMode,
    graph: &TopologyGraph,
    map: &LabelMap,
    regions: &[Region],
    adjacency: BTreeMap<Pair<u32>, usize>,
) -> AdjacencyReport {
    let core = core_pairs(graph, mode);
    let core_found = core.keys().filter(|p| adjacency.contains_key(p)).count();
    let extra = adjacency.keys().filter(|p| !core.contains_key(p)).count();
    let grey_pairs = match mode {
        ColorMode::Grey => core
            .iter()
            .map(|(p, &expected)| GreyPairCheck {
                a: p.lo(),
                b: p.hi(),
                expected,
                detected: adjacency.get(p).copied().unwrap_or(0),
            })
            .collect(),
        ColorMode::Rgb => vec![],
    };
    AdjacencyReport {
        image_id: image_id.to_string(),
        mode,
        regions: regions.iter().map(Region::summary).collect(),
        total_adjacencies: adjacency.values().sum(),
        adjacency: adjacency
            .into_iter()
            .map(|(p, count)| PairCount { a: p.lo(), b: p.hi(), count })
            .collect(),
        core_found,
        core_total: core.len(),
        extra,
        unlabeled_fraction: map.unlabeled_fraction(),
        grey_pairs,
        error: None,
    }
}

/// Files under `dir` (recursively) whose slash-separated relative path matches `filter`,
/// sorted lexicographically.
pub fn list_images(dir: &Path, filter: &Regex) -> Result<Vec<String>, ExtractError> {
    fn walk(root: &Path, dir: &Path, filter: &Regex, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, filter, out)?;
            } else if let Ok(rel) = path.strip_prefix(root) {
                let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                if filter.is_match(&rel) {
                    out.push(rel);
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, filter, &mut out)
        .map_err(|source| ExtractError::DirectoryUnreadable { path: dir.to_path_buf(), source })?;
    out.sort();
    Ok(out)
}

pub const DEFAULT_IMAGE_FILTER: &str = r"(?i)\.png$";

/// Extracts one report per matching image. Unreadable images yield a report with
/// `error` set instead of aborting the batch.
pub fn batch_extract(
    dir: &Path,
    palette: &Palette,
    graph: &TopologyGraph,
    mode: ColorMode,
    params: &ExtractParams,
    filter: &Regex,
) -> Result<Vec<AdjacencyReport>, ExtractError> {
    batch_extract_with(dir, palette, graph, mode, params, filter, |img| img)
}

/// Like [`batch_extract`], with `prepare` applied to each decoded image first, e.g. to
/// keep the target half of a composed pair.
pub fn batch_extract_with(
    dir: &Path,
    palette: &Palette,
    graph: &TopologyGraph,
    mode: ColorMode,
    params: &ExtractParams,
    filter: &Regex,
    prepare: impl Fn(RasterImage) -> RasterImage + Sync,
) -> Result<Vec<AdjacencyReport>, ExtractError> {
    params.validate()?;
    let violations = palette.separation_violations();
    if !violations.is_empty() {
        return Err(ExtractError::Palette(violations));
    }
    let core_total = core_pairs(graph, mode).len();
    let files = list_images(dir, filter)?;
    Ok(files
        .into_par_iter()
        .map(|rel| match RasterImage::read_png(&dir.join(&rel)) {
            Ok(img) => extract_report(&rel, &prepare(img), palette, graph, mode, params)
                .unwrap_or_else(|e| AdjacencyReport::failed(rel, mode, core_total, e.to_string())),
            Err(e) => AdjacencyReport::failed(rel, mode, core_total, e.to_string()),
        })
        .collect())
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    image_id: &'a str,
    core_found: usize,
    core_total: usize,
    extra: usize,
    unlabeled_fraction: f64,
}

pub fn reports_to_csv(reports: &[AdjacencyReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(CsvRow {
            image_id: &r.image_id,
            core_found: r.core_found,
            core_total: r.core_total,
            extra: r.extra,
            unlabeled_fraction: r.unlabeled_fraction,
        })
        .expect("in-memory csv");
    }
    if reports.is_empty() {
        w.write_record(["image_id", "core_found", "core_total", "extra", "unlabeled_fraction"])
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8 csv")
}

pub fn reports_to_jsonl(reports: &[AdjacencyReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}
