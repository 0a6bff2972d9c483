//! pix2pix `loss_log.txt` reading and writing.
//!
//! Record lines look like
//! `(epoch: 1, iters: 100, time: 0.102, data: 0.004) G_GAN: 0.648 G_L1: 32.154 D_real: 0.701 D_fake: 0.612 `
//! and every other line (the `=== Training Loss (...) ===` banners, blanks) is kept as text.
//! Numbers are written the way pix2pix writes them (`%.3f`), so a log produced by pix2pix
//! survives parse and re-serialization unchanged.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: u32,
    pub iters: u64,
    pub time_s: f64,
    pub data_s: f64,
    pub g_gan: f64,
    pub g_l1: f64,
    pub d_real: f64,
    pub d_fake: f64,
    /// Loss keys other than the four pix2pix ones, in file order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("loss log line {line_number}: {message}: {snippet:?}")]
pub struct ParseError {
    pub line_number: usize,
    pub snippet: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogLine {
    Text(String),
    Record(LossRecord),
}

/// A whole log file. Lines keep their order, and `trailing_newline` records whether the
/// last line was terminated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossLog {
    pub lines: Vec<LogLine>,
    pub trailing_newline: bool,
}

impl LossLog {
    pub fn records(&self) -> impl Iterator<Item = &LossRecord> {
        self.lines.iter().filter_map(|l| match l {
            LogLine::Record(r) => Some(r),
            LogLine::Text(_) => None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, line) in self.lines.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            match line {
                LogLine::Text(t) => out.push_str(t),
                LogLine::Record(r) => write_record(&mut out, r),
            }
        }
        if self.trailing_newline && !self.lines.is_empty() {
            out.push('\n');
        }
        out
    }
}

pub fn parse_loss_log(text: &str) -> Result<Vec<LossRecord>, ParseError> {
    Ok(parse_loss_log_document(text)?.records().cloned().collect())
}

pub fn parse_loss_log_document(text: &str) -> Result<LossLog, ParseError> {
    if text.is_empty() {
        return Ok(LossLog::default());
    }
    let trailing_newline = text.ends_with('\n');
    let body = if trailing_newline { &text[..text.len() - 1] } else { text };
    let mut lines = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        if line.trim_start().starts_with("(epoch:") {
            lines.push(LogLine::Record(parse_record(line, i + 1)?));
        } else {
            lines.push(LogLine::Text(line.to_string()));
        }
    }
    Ok(LossLog { lines, trailing_newline })
}

fn parse_record(line: &str, line_number: usize) -> Result<LossRecord, ParseError> {
    let err = |message: &str| ParseError {
        line_number,
        snippet: line.chars().take(80).collect(),
        message: message.to_string(),
    };
    let open = line.find('(').ok_or_else(|| err("missing '('"))?;
    let close = line.find(')').ok_or_else(|| err("missing ')'"))?;
    let mut epoch = None;
    let mut iters = None;
    let mut time_s = None;
    let mut data_s = None;
    for field in line[open + 1..close].split(',') {
        let (key, value) = field.split_once(':').ok_or_else(|| err("header field without ':'"))?;
        let value = value.trim();
        match key.trim() {
            "epoch" => epoch = Some(value.parse::<u32>().map_err(|_| err("bad epoch"))?),
            "iters" => iters = Some(value.parse::<u64>().map_err(|_| err("bad iters"))?),
            "time" => time_s = Some(value.parse::<f64>().map_err(|_| err("bad time"))?),
            "data" => data_s = Some(value.parse::<f64>().map_err(|_| err("bad data"))?),
            _ => return Err(err("unknown header field")),
        }
    }

    let mut losses = [None; 4];
    let mut extras = Vec::new();
    let mut tokens = line[close + 1..].split_whitespace();
    while let Some(key) = tokens.next() {
        let key = key.strip_suffix(':').ok_or_else(|| err("loss key without ':'"))?;
        let value = tokens.next().ok_or_else(|| err("loss key without value"))?;
        let value: f64 = value.parse().map_err(|_| err("bad loss value"))?;
        if !value.is_finite() {
            return Err(err("non-finite loss"));
        }
        match key {
            "G_GAN" => losses[0] = Some(value),
            "G_L1" => losses[1] = Some(value),
            "D_real" => losses[2] = Some(value),
            "D_fake" => losses[3] = Some(value),
            other => extras.push((other.to_string(), value)),
        }
    }

    let epoch = epoch.ok_or_else(|| err("missing epoch"))?;
    if epoch == 0 {
        return Err(err("epoch must be at least 1"));
    }
    let [Some(g_gan), Some(g_l1), Some(d_real), Some(d_fake)] = losses else {
        return Err(err("missing one of G_GAN, G_L1, D_real, D_fake"));
    };
    Ok(LossRecord {
        epoch,
        iters: iters.ok_or_else(|| err("missing iters"))?,
        time_s: time_s.ok_or_else(|| err("missing time"))?,
        data_s: data_s.ok_or_else(|| err("missing data"))?,
        g_gan,
        g_l1,
        d_real,
        d_fake,
        extras,
    })
}

fn write_record(out: &mut String, r: &LossRecord) {
    let _ = write!(
        out,
        "(epoch: {}, iters: {}, time: {:.3}, data: {:.3}) G_GAN: {:.3} G_L1: {:.3} D_real: {:.3} D_fake: {:.3} ",
        r.epoch, r.iters, r.time_s, r.data_s, r.g_gan, r.g_l1, r.d_real, r.d_fake
    );
    for (k, v) in &r.extras {
        let _ = write!(out, "{k}: {v:.3} ");
    }
}

pub fn format_loss_log(records: &[LossRecord]) -> String {
    LossLog {
        lines: records.iter().cloned().map(LogLine::Record).collect(),
        trailing_newline: true,
    }
    .to_text()
}

/// A plausible pix2pix log: G_GAN rises in an S, G_L1 drops in an L, and the
/// discriminator terms are noisy around 0.5 with noise that fades over training.
pub fn synthetic_loss_log(epochs: u32, lines_per_epoch: u32, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    out.push_str("================ Training Loss (Mon Jan  1 00:00:00 2024) ================\n");
    let total = epochs.max(1) as f64;
    for epoch in 1..=epochs {
        let t = epoch as f64 / total;
        for line in 0..lines_per_epoch {
            let noise = 1.0 - 0.9 * t;
            let g_gan = 0.7 + 1.5 / (1.0 + (-(t - 0.3) * 12.0).exp()) + rng.random_range(-0.2..0.2);
            let g_l1 = 8.0 + 40.0 * (-t * 12.0).exp() + rng.random_range(-2.0..2.0);
            let d_real = 0.5 + noise * rng.random_range(-0.3..0.3);
            let d_fake = 0.5 + noise * rng.random_range(-0.3..0.3);
            let record = LossRecord {
                epoch,
                iters: (line as u64 + 1) * 100,
                time_s: rng.random_range(0.05..0.2),
                data_s: rng.random_range(0.001..0.01),
                g_gan,
                g_l1,
                d_real,
                d_fake,
                extras: vec![],
            };
            write_record(&mut out, &record);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str =
        "(epoch: 1, iters: 100, time: 0.102, data: 0.004) G_GAN: 0.648 G_L1: 32.154 D_real: 0.701 D_fake: 0.612 ";

    #[test]
    fn parses_a_record_line() {
        let rs = parse_loss_log(LINE).unwrap();
        assert_eq!(rs.len(), 1);
        let r = &rs[0];
        assert_eq!((r.epoch, r.iters), (1, 100));
        assert_eq!((r.time_s, r.data_s), (0.102, 0.004));
        assert_eq!((r.g_gan, r.g_l1, r.d_real, r.d_fake), (0.648, 32.154, 0.701, 0.612));
        assert!(r.extras.is_empty());
    }

    #[test]
    fn empty_log() {
        assert!(parse_loss_log("").unwrap().is_empty());
        assert_eq!(parse_loss_log_document("").unwrap().to_text(), "");
    }

    #[test]
    fn banners_are_skipped_and_kept() {
        let text = format!("======== Training Loss (x) ========\n{LINE}\n\n{LINE}\n");
        let doc = parse_loss_log_document(&text).unwrap();
        assert_eq!(doc.records().count(), 2);
        assert_eq!(doc.to_text(), text);
    }

    #[test]
    fn extras_are_preserved_in_order() {
        let text = format!("{LINE}cycle_A: 1.250 idt_B: 0.010 ");
        let doc = parse_loss_log_document(&text).unwrap();
        let r = doc.records().next().unwrap();
        assert_eq!(r.extras, vec![("cycle_A".to_string(), 1.25), ("idt_B".to_string(), 0.01)]);
        assert_eq!(doc.to_text(), text);
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = format!("banner\n{}", LINE.replace("32.154", "3x.154"));
        let e = parse_loss_log(&text).unwrap_err();
        assert_eq!(e.line_number, 2);
        assert!(e.snippet.starts_with("(epoch: 1"));
    }

    #[test]
    fn missing_loss_is_an_error() {
        let text = LINE.replace("D_fake: 0.612 ", "");
        assert!(parse_loss_log(&text).is_err());
    }

    #[test]
    fn synthetic_log_round_trips() {
        let text = synthetic_loss_log(5, 7, 3);
        let doc = parse_loss_log_document(&text).unwrap();
        assert_eq!(doc.records().count(), 35);
        assert_eq!(doc.to_text(), text);
    }

    #[test]
    fn negative_zero_survives() {
        let text = LINE.replace("0.648", "-0.000");
        assert_eq!(parse_loss_log_document(&text).unwrap().to_text(), text);
    }
}
