//! Loss curves and adjacency learning-rate curves.

mod losslog;
mod phases;
mod report;

pub use losslog::{
    format_loss_log, parse_loss_log, parse_loss_log_document, synthetic_loss_log, LogLine, LossLog,
    LossRecord, ParseError,
};
pub use phases::{
    detect_phases, fit_three_segments, stable_from, turning_points, PhaseSegmentation, ThreeSegmentFit, MIN_POINTS,
    STABILITY_FRACTION, STABILITY_WINDOW,
};
pub use report::{emit_report, ReportBundle, ReportInputs};

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extract::{core_pairs, AdjacencyReport};
use crate::raster::ColorMode;
use crate::topology::TopologyGraph;

pub const DEFAULT_EPOCH_REGEX: &str = r"epoch(?P<epoch>\d+)[/_].*?(?P<sample>\d+)_fake_B";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub lambda_l1: f64,
    pub sample_size: usize,
    pub epoch_regex: String,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            lambda_l1: 100.0,
            sample_size: 50,
            epoch_regex: DEFAULT_EPOCH_REGEX.to_string(),
            seed: 0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.lambda_l1 > 0.0 && self.lambda_l1.is_finite()) {
            return Err(MetricsError::InvalidConfig(format!("lambda_l1 must be > 0, got {}", self.lambda_l1)));
        }
        if self.sample_size == 0 {
            return Err(MetricsError::InvalidConfig("sample_size must be at least 1".into()));
        }
        self.epoch_pattern().map(|_| ())
    }

    pub fn epoch_pattern(&self) -> Result<Regex, MetricsError> {
        let re = Regex::new(&self.epoch_regex)
            .map_err(|e| MetricsError::InvalidConfig(format!("epoch_regex: {e}")))?;
        let names: Vec<&str> = re.capture_names().flatten().collect();
        if !names.contains(&"epoch") || !names.contains(&"sample") {
            return Err(MetricsError::InvalidConfig(
                "epoch_regex needs named groups `epoch` and `sample`".into(),
            ));
        }
        Ok(re)
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid metrics config: {0}")]
    InvalidConfig(String),
    #[error("{} file name(s) do not match the epoch pattern, first: {:?}", .unmatched.len(), .unmatched.first())]
    RegexMismatch { unmatched: Vec<String> },
    #[error("need {needed} reports, have {available}")]
    InsufficientReports { needed: usize, available: usize },
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("epochs must be strictly increasing")]
    EpochsNotIncreasing,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("cannot write {path}: {source}")]
    OutputUnwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `(g_gan + lambda_l1 * g_l1, d_real + d_fake)`.
pub fn total_losses(record: &LossRecord, config: &MetricsConfig) -> (f64, f64) {
    (record.g_gan + config.lambda_l1 * record.g_l1, record.d_real + record.d_fake)
}

/// Per-epoch means of the raw losses and both totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: u32,
    pub n: usize,
    pub g_gan: f64,
    pub g_l1: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub g_total: f64,
    pub d_total: f64,
}

pub fn epoch_losses(records: &[LossRecord], config: &MetricsConfig) -> Vec<EpochLosses> {
    let mut groups: BTreeMap<u32, Vec<&LossRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.epoch).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(epoch, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&LossRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            EpochLosses {
                epoch,
                n: rs.len(),
                g_gan: mean(&|r| r.g_gan),
                g_l1: mean(&|r| r.g_l1),
                d_real: mean(&|r| r.d_real),
                d_fake: mean(&|r| r.d_fake),
                g_total: mean(&|r| total_losses(r, config).0),
                d_total: mean(&|r| total_losses(r, config).1),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub n_samples: usize,
    pub mean_core_found: f64,
    pub core_total: usize,
    pub core_recall: f64,
    pub mean_total_adjacencies: f64,
    pub mean_extra: f64,
    pub std_total_adjacencies: f64,
}

/// Epoch number captured from an image id, or `None` when the id does not match.
pub fn epoch_of(pattern: &Regex, image_id: &str) -> Option<u32> {
    let caps = pattern.captures(image_id)?;
    caps.name("sample")?;
    caps.name("epoch")?.as_str().parse().ok()
}

fn sample_key(seed: u64, image_id: &str) -> [u8; 8] {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(image_id.as_bytes())
        .finalize();
    digest[..8].try_into().expect("8 bytes")
}

/// Groups reports by the epoch in their file name and aggregates a seeded sample of
/// `min(sample_size, group size)` per epoch. The sample is the reports with the smallest
/// keyed hash of `image_id`, so it does not depend on input order.
pub fn epoch_metrics(
    reports: &[AdjacencyReport],
    graph: &TopologyGraph,
    config: &MetricsConfig,
) -> Result<Vec<EpochMetrics>, MetricsError> {
    config.validate()?;
    let pattern = config.epoch_pattern()?;
    let mut groups: BTreeMap<u32, Vec<&AdjacencyReport>> = BTreeMap::new();
    let mut unmatched = Vec::new();
    for r in reports {
        match epoch_of(&pattern, &r.image_id) {
            Some(e) => groups.entry(e).or_default().push(r),
            None => unmatched.push(r.image_id.clone()),
        }
    }
    if !unmatched.is_empty() {
        unmatched.sort();
        return Err(MetricsError::RegexMismatch { unmatched });
    }

    let mut out = Vec::with_capacity(groups.len());
    for (epoch, mut group) in groups {
        group.sort_by_cached_key(|r| (sample_key(config.seed, &r.image_id), r.image_id.clone()));
        group.truncate(config.sample_size);
        group.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let mode = group.first().map(|r| r.mode).unwrap_or(ColorMode::Rgb);
        let core_total = core_pairs(graph, mode).len();
        let n = group.len() as f64;
        let mean_core_found = group.iter().map(|r| r.core_found as f64).sum::<f64>() / n;
        let totals: Vec<f64> = group.iter().map(|r| r.total_adjacencies as f64).collect();
        let mean_total = totals.iter().sum::<f64>() / n;
        let var = totals.iter().map(|t| (t - mean_total).powi(2)).sum::<f64>() / n;
        out.push(EpochMetrics {
            epoch,
            n_samples: group.len(),
            mean_core_found,
            core_total,
            core_recall: if core_total == 0 { 0.0 } else { mean_core_found / core_total as f64 },
            mean_total_adjacencies: mean_total,
            mean_extra: group.iter().map(|r| r.extra as f64).sum::<f64>() / n,
            std_total_adjacencies: var.sqrt(),
        });
    }
    Ok(out)
}

/// Mean total adjacencies over a set of reports, e.g. the target renders of a dataset.
pub fn mean_total_adjacencies(reports: &[AdjacencyReport]) -> Option<f64> {
    if reports.is_empty() {
        return None;
    }
    Some(reports.iter().map(|r| r.total_adjacencies as f64).sum::<f64>() / reports.len() as f64)
}

pub const SUFFICIENCY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyRow {
    pub size: usize,
    pub mean_abs_rel_error: f64,
    pub max_abs_rel_error: f64,
    /// Fraction of resamples whose estimate is within 5% of the population mean.
    pub within_tolerance: f64,
}

/// How well `size` reports drawn without replacement estimate the population mean of
/// total adjacencies. Draws for each size come from their own RNG stream, so adding a
/// size does not change the others. When the population mean is 0 the error is absolute.
pub fn sample_sufficiency(
    reports: &[AdjacencyReport],
    sizes: &[usize],
    resamples: usize,
    config: &MetricsConfig,
) -> Result<Vec<SufficiencyRow>, MetricsError> {
    let needed = sizes.iter().copied().max().unwrap_or(0);
    if needed > reports.len() {
        return Err(MetricsError::InsufficientReports { needed, available: reports.len() });
    }
    if sizes.contains(&0) || resamples == 0 {
        return Err(MetricsError::InvalidConfig("sizes and resamples must be positive".into()));
    }
    let values: Vec<f64> = reports.iter().map(|r| r.total_adjacencies as f64).collect();
    let population = values.iter().sum::<f64>() / values.len() as f64;
    let denom = if population == 0.0 { 1.0 } else { population.abs() };

    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let rows = sizes
        .into_iter()
        .map(|size| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(size as u64);
            let errors: Vec<f64> = (0..resamples)
                .map(|_| {
                    let mut idx = rand::seq::index::sample(&mut rng, values.len(), size).into_vec();
                    idx.sort_unstable();
                    let est = idx.iter().map(|&i| values[i]).sum::<f64>() / size as f64;
                    (est - population).abs() / denom
                })
                .collect();
            SufficiencyRow {
                size,
                mean_abs_rel_error: errors.iter().sum::<f64>() / resamples as f64,
                max_abs_rel_error: errors.iter().copied().fold(0.0, f64::max),
                within_tolerance: errors.iter().filter(|&&e| e <= SUFFICIENCY_TOLERANCE).count() as f64
                    / resamples as f64,
            }
        })
        .collect();
    Ok(rows)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` when either side is
/// constant or the lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn report(id: &str, core_found: usize, total: usize) -> AdjacencyReport {
        AdjacencyReport {
            image_id: id.to_string(),
            mode: ColorMode::Rgb,
            regions: vec![],
            adjacency: vec![],
            core_found,
            core_total: 11,
            extra: total - core_found,
            total_adjacencies: total,
            unlabeled_fraction: 0.0,
            grey_pairs: vec![],
            error: None,
        }
    }

    fn record(g_gan: f64, g_l1: f64, d_real: f64, d_fake: f64) -> LossRecord {
        LossRecord { epoch: 1, iters: 1, time_s: 0.0, data_s: 0.0, g_gan, g_l1, d_real, d_fake, extras: vec![] }
    }

    #[test]
    fn totals() {
        let c = MetricsConfig::default();
        assert_eq!(total_losses(&record(0.5, 30.0, 0.0, 0.0), &c).0, 3000.5);
        assert_eq!(total_losses(&record(0.0, 0.0, 0.7, 0.3), &c).1, 1.0);
        assert_eq!(total_losses(&record(0.0, 0.0, 0.0, 0.0), &c), (0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(MetricsConfig::default().validate().is_ok());
        assert!(MetricsConfig { lambda_l1: 0.0, ..Default::default() }.validate().is_err());
        assert!(MetricsConfig { sample_size: 0, ..Default::default() }.validate().is_err());
        let no_sample = MetricsConfig { epoch_regex: r"epoch(?P<epoch>\d+)".into(), ..Default::default() };
        assert!(matches!(no_sample.validate(), Err(MetricsError::InvalidConfig(_))));
    }

    #[test]
    fn epoch_is_read_from_file_names() {
        let re = MetricsConfig::default().epoch_pattern().unwrap();
        assert_eq!(epoch_of(&re, "epoch007/000012_fake_B.png"), Some(7));
        assert_eq!(epoch_of(&re, "web/images/epoch012_000003_fake_B.png"), Some(12));
        assert_eq!(epoch_of(&re, "epoch007/000012_real_B.png"), None);
    }

    #[test]
    fn pristine_reports_give_full_recall() {
        let g = fixtures::case_house();
        let reports: Vec<_> = (1..=3)
            .flat_map(|e| (0..4).map(move |i| report(&format!("epoch{e:03}/{i:06}_fake_B.png"), 11, 13)))
            .collect();
        let m = epoch_metrics(&reports, &g, &MetricsConfig::default()).unwrap();
        assert_eq!(m.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
        for e in &m {
            assert_eq!(e.core_recall, 1.0);
            assert_eq!(e.n_samples, 4);
            assert_eq!(e.mean_extra, 2.0);
            assert_eq!(e.std_total_adjacencies, 0.0);
        }
    }

    #[test]
    fn sampling_caps_group_size_and_ignores_order() {
        let g = fixtures::case_house();
        let mut reports: Vec<_> =
            (0..30).map(|i| report(&format!("epoch001/{i:06}_fake_B.png"), i % 12, 11 + i % 5)).collect();
        let config = MetricsConfig { sample_size: 7, ..Default::default() };
        let a = epoch_metrics(&reports, &g, &config).unwrap();
        reports.reverse();
        let b = epoch_metrics(&reports, &g, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].n_samples, 7);
    }

    #[test]
    fn unmatched_names_are_listed() {
        let g = fixtures::case_house();
        let reports = vec![report("epoch001/000000_fake_B.png", 11, 11), report("other.png", 11, 11)];
        match epoch_metrics(&reports, &g, &MetricsConfig::default()) {
            Err(MetricsError::RegexMismatch { unmatched }) => assert_eq!(unmatched, vec!["other.png"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_population_has_zero_error() {
        let reports: Vec<_> = (0..40).map(|i| report(&format!("{i}"), 11, 11 + i % 7)).collect();
        let rows = sample_sufficiency(&reports, &[40, 5], 10, &MetricsConfig::default()).unwrap();
        assert_eq!(rows[0].size, 5);
        assert_eq!(rows[1].mean_abs_rel_error, 0.0);
        assert_eq!(rows[1].within_tolerance, 1.0);
        assert!(matches!(
            sample_sufficiency(&reports, &[41], 10, &MetricsConfig::default()),
            Err(MetricsError::InsufficientReports { needed: 41, available: 40 })
        ));
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn epoch_loss_means() {
        let mut a = record(1.0, 2.0, 0.5, 0.5);
        let mut b = record(3.0, 4.0, 0.5, 1.5);
        a.epoch = 2;
        b.epoch = 2;
        let e = epoch_losses(&[a, b], &MetricsConfig::default());
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].g_gan, e[0].g_l1, e[0].g_total, e[0].d_total), (2.0, 3.0, 302.0, 1.5));
    }
}
