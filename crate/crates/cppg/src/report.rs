//! CSV and JSON outputs: metrics reports, training history and gate reports.
//!
//! Floats are written with 9 significant digits so repeated runs produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cppg_core::eval::{BlandAltman, ChannelScore, ChunkEvaluation, ClinicalScores, LagStats, MedianScores, MetricsReport, Rate};
use cppg_core::pipeline::GateRecord;
use cppg_core::train::EpochRecord;
use cppg_core::ChannelLabel;
use serde::Serialize;

use crate::dataset::labels_to_strings;
use crate::error::{Error, Result};

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.8e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `x` rounded to 9 significant digits; `None` for non-finite values.
pub fn round9(x: f64) -> Option<f64> {
    x.is_finite().then(|| format!("{x:.8e}").parse().unwrap())
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn channel_names(n: usize) -> Vec<&'static str> {
    if n == 1 { vec!["green"] } else { vec!["red", "infrared", "green"] }
}

/// Per-channel rows, so a 1-channel run only writes its own channel.
fn score_cells(s: &ChannelScore) -> [String; 6] {
    [num(s.metrics.rmse), num(s.metrics.mae), num(s.metrics.r), num(s.metrics.r2), num(s.snr_db), num(s.rmse_f)]
}

fn rate_cells(r: &Rate) -> [String; 2] {
    [opt(r.pp), opt(r.pr)]
}

pub fn write_chunks_csv(path: &Path, evals: &[ChunkEvaluation], fs: f64) -> Result<()> {
    let header = [
        "chunk_id", "channel", "source", "rmse_t", "mae", "r", "r2", "snr_db", "rmse_f", "pp_s", "pr_bpm", "fppg_pp_s", "fppg_pr_bpm", "ecg_rr_s",
        "ecg_hr_bpm", "truth_pr_bpm", "lag_to_fppg_ms", "lag_restored_vs_measured_ms",
    ];
    let mut rows = Vec::new();
    for e in evals {
        let names = channel_names(e.measured.len());
        for (c, name) in names.iter().enumerate() {
            for (source, score, rate) in [("measured", &e.measured[c], &e.measured_rate[c]), ("restored", &e.restored[c], &e.restored_rate[c])] {
                let mut r = vec![e.id.clone(), name.to_string(), source.to_string()];
                r.extend(score_cells(score));
                r.extend(rate_cells(rate));
                r.extend(rate_cells(&e.fppg_rate[c]));
                r.extend(rate_cells(&e.ecg_rate));
                r.push(opt(e.truth_pr));
                r.push(num(e.applied_lag as f64 * 1000.0 / fs));
                r.push(num(e.lag_restored_vs_measured as f64 * 1000.0 / fs));
                rows.push(r);
            }
        }
    }
    write_csv(path, &header, rows)
}

/// PP of each chunk against the finger PP, for Bland-Altman plots.
pub fn write_bland_altman_csv(path: &Path, evals: &[ChunkEvaluation]) -> Result<()> {
    let mut rows = Vec::new();
    for e in evals {
        let names = channel_names(e.measured.len());
        for (c, name) in names.iter().enumerate() {
            for (source, rate) in [("measured", &e.measured_rate[c]), ("restored", &e.restored_rate[c])] {
                if let (Some(pp), Some(f)) = (rate.pp, e.fppg_rate[c].pp) {
                    rows.push(vec![e.id.clone(), name.to_string(), source.into(), num(pp), num(f), num(0.5 * (pp + f)), num(pp - f)]);
                }
            }
        }
    }
    write_csv(path, &["chunk_id", "channel", "source", "pp_s", "fppg_pp_s", "mean_s", "diff_s"], rows)
}

pub fn write_lag_histogram_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut rows = Vec::new();
    for (what, s) in [("restored_vs_measured", &report.lag_restored_vs_measured), ("restored_vs_fppg", &report.lag_restored_vs_fppg)] {
        for (start, count) in &s.histogram {
            rows.push(vec![what.into(), num(*start), num(start + cppg_core::eval::LAG_BIN_MS), count.to_string()]);
        }
    }
    write_csv(path, &["pair", "bin_start_ms", "bin_end_ms", "count"], rows)
}

#[derive(Serialize)]
struct MediansDto {
    rmse_t: Option<f64>,
    mae: Option<f64>,
    r: Option<f64>,
    r2: Option<f64>,
    snr_db: Option<f64>,
    rmse_f: Option<f64>,
}

impl From<&MedianScores> for MediansDto {
    fn from(m: &MedianScores) -> Self {
        Self { rmse_t: round9(m.rmse_t), mae: round9(m.mae), r: round9(m.r), r2: round9(m.r2), snr_db: round9(m.snr_db), rmse_f: round9(m.rmse_f) }
    }
}

#[derive(Serialize)]
struct BlandAltmanDto {
    bias: Option<f64>,
    sd: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
}

impl From<&BlandAltman> for BlandAltmanDto {
    fn from(b: &BlandAltman) -> Self {
        Self { bias: round9(b.bias), sd: round9(b.sd), lower: round9(b.lower), upper: round9(b.upper) }
    }
}

#[derive(Serialize)]
struct ClinicalDto {
    r_pp: Option<f64>,
    r_pr: Option<f64>,
    r_hr: Option<f64>,
    r_rr: Option<f64>,
    mae_pr: Option<f64>,
    mae_hr: Option<f64>,
    mae_pr_truth: Option<f64>,
    bland_altman: Option<BlandAltmanDto>,
    excluded: usize,
}

impl From<&ClinicalScores> for ClinicalDto {
    fn from(c: &ClinicalScores) -> Self {
        let r = |x: Option<f64>| x.and_then(round9);
        Self {
            r_pp: r(c.r_pp),
            r_pr: r(c.r_pr),
            r_hr: r(c.r_hr),
            r_rr: r(c.r_rr),
            mae_pr: r(c.mae_pr),
            mae_hr: r(c.mae_hr),
            mae_pr_truth: r(c.mae_pr_truth),
            bland_altman: c.bland_altman.as_ref().map(BlandAltmanDto::from),
            excluded: c.excluded,
        }
    }
}

#[derive(Serialize)]
struct LagDto {
    mean_ms: Option<f64>,
    sd_ms: Option<f64>,
    median_abs_ms: Option<f64>,
}

impl From<&LagStats> for LagDto {
    fn from(l: &LagStats) -> Self {
        Self { mean_ms: round9(l.mean_ms), sd_ms: round9(l.sd_ms), median_abs_ms: round9(l.median_abs_ms) }
    }
}

#[derive(Serialize)]
struct ChannelSummary {
    measured: MediansDto,
    restored: MediansDto,
    clinical_measured: ClinicalDto,
    clinical_restored: ClinicalDto,
}

#[derive(Serialize)]
struct SummaryDto<'a> {
    n_chunks: usize,
    failed_chunks: &'a [String],
    channels: BTreeMap<&'static str, ChannelSummary>,
    lag_restored_vs_measured: LagDto,
    lag_restored_vs_fppg: LagDto,
}

pub fn write_summary_json(path: &Path, report: &MetricsReport, failed: &[String]) -> Result<()> {
    let channels = channel_names(report.n_channels)
        .into_iter()
        .enumerate()
        .map(|(c, name)| {
            (
                name,
                ChannelSummary {
                    measured: (&report.measured[c]).into(),
                    restored: (&report.restored[c]).into(),
                    clinical_measured: (&report.clinical_measured[c]).into(),
                    clinical_restored: (&report.clinical_restored[c]).into(),
                },
            )
        })
        .collect();
    let dto = SummaryDto {
        n_chunks: report.n_chunks,
        failed_chunks: failed,
        channels,
        lag_restored_vs_measured: (&report.lag_restored_vs_measured).into(),
        lag_restored_vs_fppg: (&report.lag_restored_vs_fppg).into(),
    };
    write_json(path, &dto)
}

/// `chunks.csv`, `summary.json`, `bland_altman.csv` and `lag_histogram.csv` in `dir`.
pub fn write_report(dir: &Path, report: &MetricsReport, evals: &[ChunkEvaluation], failed: &[String], fs: f64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_chunks_csv(&dir.join("chunks.csv"), evals, fs)?;
    write_summary_json(&dir.join("summary.json"), report, failed)?;
    write_bland_altman_csv(&dir.join("bland_altman.csv"), evals)?;
    write_lag_histogram_csv(&dir.join("lag_histogram.csv"), report)
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let n = history.first().map_or(0, |r| r.val_rmse.len());
    let mut header: Vec<String> = ["epoch", "adv_y", "cycle_y", "id_y", "adv_x", "cycle_x", "id_x", "disc_y", "disc_x"].map(String::from).to_vec();
    header.extend(channel_names(n).iter().map(|c| format!("val_rmse_{c}")));
    let rows = history.iter().map(|r| {
        let l = &r.losses;
        let mut row = vec![r.epoch.to_string()];
        row.extend([l.y.adv, l.y.cycle, l.y.id, l.x.adv, l.x.cycle, l.x.id, l.d_y, l.d_x].map(num));
        row.extend(r.val_rmse.iter().map(|&v| num(v)));
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, rows)
}

pub fn write_gate_report_csv(path: &Path, records: &[GateRecord]) -> Result<()> {
    let mut header = vec!["chunk_id".to_string()];
    for c in channel_names(3) {
        for m in ["entropy", "kurtosis", "pr_bpm", "r_d", "chest_label"] {
            header.push(format!("{m}_{c}"));
        }
    }
    header.extend(["fppg_ok", "retained"].map(String::from));
    let rows = records.iter().map(|g| {
        let f = &g.label.fppg;
        let mut row = vec![g.id.clone()];
        for c in 0..3 {
            row.push(num(f.screens[c].entropy));
            row.push(opt(f.screens[c].kurtosis));
            row.push(opt(f.pulse_rate[c]));
            row.push(opt(f.r_d[c]));
            row.push(g.label.cppg_labels[c].name().into());
        }
        row.push(f.ok.to_string());
        row.push(g.label.retained.to_string());
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, rows)
}

/// Chest labels of every chunk, `{"<subject>/<index>": ["keep", "leave", "keep"]}`.
pub fn write_labels_json(path: &Path, records: &[GateRecord]) -> Result<()> {
    let map: BTreeMap<&str, [String; 3]> = records.iter().map(|g| (g.id.as_str(), labels_to_strings(&g.label.cppg_labels))).collect();
    write_json(path, &map)
}

pub fn read_labels_json(path: &Path) -> Result<BTreeMap<String, [ChannelLabel; 3]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, [String; 3]> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    raw.into_iter().map(|(k, v)| Ok((k, crate::dataset::labels_from_strings(path, &v)?))).collect()
}
