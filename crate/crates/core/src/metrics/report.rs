//! CSV tables, `phases.json` and static SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::phases::{stable_from, STABILITY_FRACTION, STABILITY_WINDOW};
use super::{epoch_losses, total_losses, EpochLosses, EpochMetrics, LossRecord, MetricsConfig, MetricsError};
use super::PhaseSegmentation;

pub struct ReportInputs<'a> {
    pub records: &'a [LossRecord],
    pub epochs: &'a [EpochMetrics],
    pub segmentation: Option<&'a PhaseSegmentation>,
    /// Mean total adjacencies over the dataset's target renders.
    pub dataset_mean: Option<f64>,
    pub config: &'a MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct PhasesJson<'a> {
    segmentation: Option<&'a PhaseSegmentation>,
    stable_from: BTreeMap<&'static str, Option<u32>>,
    core_total: Option<usize>,
    dataset_mean: Option<f64>,
}

/// Loss curves drawn as charts, by file stem.
const LOSS_CURVES: [(&str, &str); 5] = [
    ("G_GAN", "loss_G_GAN"),
    ("G_L1", "loss_G_L1"),
    ("D_real", "loss_D_real"),
    ("D_fake", "loss_D_fake"),
    ("D_total", "loss_total"),
];

fn loss_value(name: &str, r: &LossRecord, config: &MetricsConfig) -> f64 {
    match name {
        "G_GAN" => r.g_gan,
        "G_L1" => r.g_l1,
        "D_real" => r.d_real,
        "D_fake" => r.d_fake,
        "G_total" => total_losses(r, config).0,
        _ => total_losses(r, config).1,
    }
}

pub fn emit_report(inputs: &ReportInputs, dir: &Path) -> Result<ReportBundle, MetricsError> {
    let unwritable = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MetricsError::OutputUnwritable { path, source }
    };
    fs::create_dir_all(dir).map_err(unwritable(dir))?;
    let mut files = Vec::new();
    let mut write = |name: &str, body: String| -> Result<(), MetricsError> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(unwritable(&path))?;
        files.push(path);
        Ok(())
    };

    let config = inputs.config;
    let per_epoch = epoch_losses(inputs.records, config);
    if !inputs.records.is_empty() {
        write("losses.csv", losses_csv(inputs.records, config))?;
        write("loss_epochs.csv", loss_epochs_csv(&per_epoch))?;
    }
    if !inputs.epochs.is_empty() {
        write("learning_rate.csv", learning_rate_csv(inputs.epochs))?;
    }

    let mut stable = BTreeMap::new();
    for (name, _) in LOSS_CURVES {
        let series: Vec<(u32, f64)> = per_epoch.iter().map(|e| (e.epoch, epoch_value(name, e))).collect();
        stable.insert(name, stable_from(&series, STABILITY_WINDOW, STABILITY_FRACTION));
    }
    let recall: Vec<(u32, f64)> = inputs.epochs.iter().map(|e| (e.epoch, e.core_recall)).collect();
    stable.insert("core_recall", stable_from(&recall, STABILITY_WINDOW, STABILITY_FRACTION));
    let phases = PhasesJson {
        segmentation: inputs.segmentation,
        stable_from: stable,
        core_total: inputs.epochs.first().map(|e| e.core_total),
        dataset_mean: inputs.dataset_mean,
    };
    let json = serde_json::to_string_pretty(&phases).expect("phases serialize");
    write("phases.json", json + "\n")?;

    let rules: Vec<u32> = inputs
        .segmentation
        .map(|s| vec![s.early_end, s.middle_end])
        .unwrap_or_default();
    if !inputs.records.is_empty() {
        for (name, stem) in LOSS_CURVES {
            write(&format!("{stem}.svg"), loss_chart(name, inputs.records, &per_epoch, &rules, config))?;
        }
    }
    if !inputs.epochs.is_empty() {
        write("learning_rate.svg", learning_rate_chart(inputs.epochs, inputs.dataset_mean, &rules))?;
    }
    Ok(ReportBundle { dir: dir.to_path_buf(), files })
}

fn epoch_value(name: &str, e: &EpochLosses) -> f64 {
    match name {
        "G_GAN" => e.g_gan,
        "G_L1" => e.g_l1,
        "D_real" => e.d_real,
        "D_fake" => e.d_fake,
        "G_total" => e.g_total,
        _ => e.d_total,
    }
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
}

fn losses_csv(records: &[LossRecord], config: &MetricsConfig) -> String {
    let header = ["epoch", "iters", "time", "data", "G_GAN", "G_L1", "D_real", "D_fake", "G_total", "D_total"];
    csv_string(
        &header,
        records.iter().map(|r| {
            let (g, d) = total_losses(r, config);
            vec![
                r.epoch.to_string(),
                r.iters.to_string(),
                r.time_s.to_string(),
                r.data_s.to_string(),
                r.g_gan.to_string(),
                r.g_l1.to_string(),
                r.d_real.to_string(),
                r.d_fake.to_string(),
                g.to_string(),
                d.to_string(),
            ]
        }),
    )
}

fn loss_epochs_csv(rows: &[EpochLosses]) -> String {
    let header = ["epoch", "records", "G_GAN", "G_L1", "D_real", "D_fake", "G_total", "D_total"];
    csv_string(
        &header,
        rows.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                e.n.to_string(),
                e.g_gan.to_string(),
                e.g_l1.to_string(),
                e.d_real.to_string(),
                e.d_fake.to_string(),
                e.g_total.to_string(),
                e.d_total.to_string(),
            ]
        }),
    )
}

fn learning_rate_csv(rows: &[EpochMetrics]) -> String {
    let header = [
        "epoch",
        "n_samples",
        "mean_core_found",
        "core_total",
        "core_recall",
        "mean_total_adjacencies",
        "mean_extra",
        "std_total_adjacencies",
    ];
    csv_string(
        &header,
        rows.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                e.n_samples.to_string(),
                e.mean_core_found.to_string(),
                e.core_total.to_string(),
                e.core_recall.to_string(),
                e.mean_total_adjacencies.to_string(),
                e.mean_extra.to_string(),
                e.std_total_adjacencies.to_string(),
            ]
        }),
    )
}

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        let (x0, x1) = span(xs);
        let (y0, y1) = span(ys);
        let pad = (y1 - y0) * 0.05;
        Frame { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }

    fn open(&self, title: &str, y_label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none"><path d="M{l} {t}V{b}H{r}"/></g>"#);
        for k in 0..=4 {
            let v = self.y0 + (self.y1 - self.y0) * k as f64 / 4.0;
            let y = self.py(v);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, tick(v));
        }
        for k in 0..=5 {
            let v = self.x0 + (self.x1 - self.x0) * k as f64 / 5.0;
            let x = self.px(v);
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 16.0, tick(v));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, (l + r) / 2.0, H - 6.0);
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(y_label)
        );
        s
    }

    fn polyline(&self, s: &mut String, class: &str, color: &str, pts: impl Iterator<Item = (f64, f64)>) {
        let pts: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }

    fn phase_rules(&self, s: &mut String, rules: &[u32]) {
        for &e in rules {
            let x = self.px(e as f64);
            let _ = writeln!(
                s,
                r#"<line class="phase" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="grey" stroke-dasharray="4 3"/>"#,
                H - BOTTOM
            );
        }
    }
}

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-epoch min/max band with the epoch mean on top.
fn loss_chart(
    name: &str,
    records: &[LossRecord],
    per_epoch: &[EpochLosses],
    rules: &[u32],
    config: &MetricsConfig,
) -> String {
    let mut band: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for r in records {
        let v = loss_value(name, r, config);
        let e = band.entry(r.epoch).or_insert((v, v));
        e.0 = e.0.min(v);
        e.1 = e.1.max(v);
    }
    let frame = Frame::new(
        band.keys().map(|&e| e as f64),
        band.values().flat_map(|&(lo, hi)| [lo, hi]),
    );
    let mut s = frame.open(&format!("{name} loss"), name);
    let upper: Vec<String> = band.iter().map(|(&e, &(_, hi))| format!("{:.2},{:.2}", frame.px(e as f64), frame.py(hi))).collect();
    let lower: Vec<String> =
        band.iter().rev().map(|(&e, &(lo, _))| format!("{:.2},{:.2}", frame.px(e as f64), frame.py(lo))).collect();
    let _ = writeln!(
        s,
        r##"<polygon class="range" fill="#9ecae1" fill-opacity="0.5" stroke="none" points="{} {}"/>"##,
        upper.join(" "),
        lower.join(" ")
    );
    frame.polyline(&mut s, "mean", "#08519c", per_epoch.iter().map(|e| (e.epoch as f64, epoch_value(name, e))));
    frame.phase_rules(&mut s, rules);
    s.push_str("</svg>\n");
    s
}

/// Mean core adjacencies found and mean total adjacencies per epoch, with horizontal
/// reference lines at the core total and at the dataset mean.
fn learning_rate_chart(epochs: &[EpochMetrics], dataset_mean: Option<f64>, rules: &[u32]) -> String {
    let core_total = epochs[0].core_total as f64;
    let ys = epochs
        .iter()
        .flat_map(|e| [e.mean_core_found, e.mean_total_adjacencies])
        .chain([core_total, 0.0])
        .chain(dataset_mean);
    let frame = Frame::new(epochs.iter().map(|e| e.epoch as f64), ys);
    let mut s = frame.open("Adjacency learning rate", "adjacencies");
    let reference = |s: &mut String, y: f64, label: &str| {
        let py = frame.py(y);
        let _ = writeln!(
            s,
            r##"<line class="reference" x1="{LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#d62728" stroke-dasharray="6 3"/>"##,
            W - RIGHT
        );
        let _ = writeln!(s, r##"<text x="{}" y="{:.2}" text-anchor="end" fill="#d62728">{}</text>"##, W - RIGHT - 4.0, py - 4.0, label);
    };
    reference(&mut s, core_total, &format!("core total {}", core_total));
    if let Some(m) = dataset_mean {
        reference(&mut s, m, &format!("dataset mean {m:.2}"));
    }
    frame.polyline(&mut s, "core", "#2ca02c", epochs.iter().map(|e| (e.epoch as f64, e.mean_core_found)));
    frame.polyline(&mut s, "total", "#1f77b4", epochs.iter().map(|e| (e.epoch as f64, e.mean_total_adjacencies)));
    frame.phase_rules(&mut s, rules);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{parse_loss_log, synthetic_loss_log};

    fn epoch(e: u32, core: f64, total: f64) -> EpochMetrics {
        EpochMetrics {
            epoch: e,
            n_samples: 5,
            mean_core_found: core,
            core_total: 11,
            core_recall: core / 11.0,
            mean_total_adjacencies: total,
            mean_extra: total - core,
            std_total_adjacencies: 0.0,
        }
    }

    fn names(b: &ReportBundle) -> Vec<String> {
        b.files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect()
    }

    #[test]
    fn empty_inputs_give_phases_only() {
        let dir = tempfile::tempdir().unwrap();
        let config = MetricsConfig::default();
        let inputs = ReportInputs { records: &[], epochs: &[], segmentation: None, dataset_mean: None, config: &config };
        let b = emit_report(&inputs, dir.path()).unwrap();
        assert_eq!(names(&b), ["phases.json"]);
    }

    #[test]
    fn learning_rate_chart_has_two_reference_lines() {
        let dir = tempfile::tempdir().unwrap();
        let config = MetricsConfig::default();
        let epochs: Vec<_> = (1..=8).map(|e| epoch(e, (e as f64).min(11.0), e as f64 + 2.0)).collect();
        let seg = PhaseSegmentation { early_end: 2, middle_end: 5, turning_points: BTreeMap::new() };
        let inputs = ReportInputs {
            records: &[],
            epochs: &epochs,
            segmentation: Some(&seg),
            dataset_mean: Some(13.4),
            config: &config,
        };
        emit_report(&inputs, dir.path()).unwrap();
        let svg = fs::read_to_string(dir.path().join("learning_rate.svg")).unwrap();
        assert_eq!(svg.matches(r#"class="reference""#).count(), 2);
        assert_eq!(svg.matches(r#"class="phase""#).count(), 2);
    }

    #[test]
    fn output_is_deterministic_and_csv_round_trips() {
        let records = parse_loss_log(&synthetic_loss_log(12, 5, 9)).unwrap();
        let config = MetricsConfig::default();
        let epochs: Vec<_> = (1..=12).map(|e| epoch(e, 11.0, 14.0)).collect();
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let inputs =
                ReportInputs { records: &records, epochs: &epochs, segmentation: None, dataset_mean: Some(14.0), config: &config };
            let b = emit_report(&inputs, dir.path()).unwrap();
            let contents: Vec<(String, Vec<u8>)> =
                b.files.iter().map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap())).collect();
            contents
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.iter().filter(|(n, _)| n.ends_with(".svg")).count(), 6);

        let losses = &a.iter().find(|(n, _)| n == "losses.csv").unwrap().1;
        let mut rdr = csv::Reader::from_reader(losses.as_slice());
        for (row, r) in rdr.records().zip(&records) {
            let row = row.unwrap();
            assert_eq!(row[4].parse::<f64>().unwrap(), r.g_gan);
            assert_eq!(row[8].parse::<f64>().unwrap(), total_losses(r, &config).0);
        }
    }

    #[test]
    fn unwritable_output_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, "x").unwrap();
        let config = MetricsConfig::default();
        let inputs = ReportInputs { records: &[], epochs: &[], segmentation: None, dataset_mean: None, config: &config };
        assert!(matches!(emit_report(&inputs, &file), Err(MetricsError::OutputUnwritable { .. })));
    }
}
