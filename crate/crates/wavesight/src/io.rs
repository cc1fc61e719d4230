//! File formats: binary CFR captures with a JSON debug export, JSONL streams
//! for estimates / detections / ROIs / ground truth, the per-frame metrics
//! CSV, the run summary, and the run-directory writer used by the CLI.
//!
//! Everything written here is deterministic for a fixed scenario and seed:
//! float formatting goes through the shortest round-trip representation and
//! no wall-clock data is recorded.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CfrSample, ChannelConfig};
use crate::cluster::{ClusterResult, MotionEvent};
use crate::error::{Error, Result};
use crate::estimator::PathEstimate;
use crate::metrics::{LatencyBreakdown, Strategy};
use crate::pipeline::{FrameReport, MetricsRow, PipelineOutput, Summary};
use crate::roi::RoiSpec;
use crate::scenario::{render_frame, Generated, GroundTruth, Scenario};

const CAPTURE_MAGIC: &[u8; 8] = b"WVSIGHT1";

/// A channel config plus the CFR samples recorded under it.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub config: ChannelConfig,
    pub samples: Vec<CfrSample>,
}

// ── binary capture ─────────────────────────────────────────────────────

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Binary capture layout: magic, config header, sample count, then per
/// sample a timestamp and the K x N entries as interleaved little-endian
/// f64 (real, imaginary), row-major over subcarriers then antennas.
pub fn write_capture<W: Write>(capture: &Capture, mut w: W) -> Result<()> {
    let cfg = &capture.config;
    w.write_all(CAPTURE_MAGIC)?;
    write_f64(&mut w, cfg.carrier_freq_hz)?;
    write_f64(&mut w, cfg.subcarrier_spacing_hz)?;
    w.write_all(&(cfg.num_subcarriers as u32).to_le_bytes())?;
    w.write_all(&(cfg.num_rx_antennas as u32).to_le_bytes())?;
    w.write_all(&[u8::from(cfg.antenna_spacing_m.is_some())])?;
    write_f64(&mut w, cfg.antenna_spacing_m.unwrap_or(0.0))?;
    write_f64(&mut w, cfg.speed_of_light_mps)?;
    w.write_all(&(capture.samples.len() as u64).to_le_bytes())?;
    for s in &capture.samples {
        s.check(cfg)?;
        write_f64(&mut w, s.timestamp_s)?;
        for k in 0..cfg.num_subcarriers {
            for n in 0..cfg.num_rx_antennas {
                write_f64(&mut w, s.h[[k, n]].re)?;
                write_f64(&mut w, s.h[[k, n]].im)?;
            }
        }
    }
    Ok(())
}

pub fn read_capture<R: Read>(mut r: R) -> Result<Capture> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CAPTURE_MAGIC {
        return Err(Error::Format("not a capture file (bad magic)".into()));
    }
    let carrier_freq_hz = read_f64(&mut r)?;
    let subcarrier_spacing_hz = read_f64(&mut r)?;
    let num_subcarriers = read_u32(&mut r)? as usize;
    let num_rx_antennas = read_u32(&mut r)? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let spacing = read_f64(&mut r)?;
    let config = ChannelConfig {
        carrier_freq_hz,
        subcarrier_spacing_hz,
        num_subcarriers,
        num_rx_antennas,
        antenna_spacing_m: (flag[0] != 0).then_some(spacing),
        speed_of_light_mps: read_f64(&mut r)?,
    };
    config.validate()?;
    let count = read_u64(&mut r)? as usize;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let timestamp_s = read_f64(&mut r)?;
        let mut h = Array2::<Complex64>::zeros((num_subcarriers, num_rx_antennas));
        for k in 0..num_subcarriers {
            for n in 0..num_rx_antennas {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                h[[k, n]] = Complex64::new(re, im);
            }
        }
        samples.push(CfrSample { timestamp_s, h });
    }
    Ok(Capture { config, samples })
}

pub fn write_capture_file(capture: &Capture, path: &Path) -> Result<()> {
    write_capture(capture, BufWriter::new(File::create(path)?))
}

pub fn read_capture_file(path: &Path) -> Result<Capture> {
    read_capture(BufReader::new(File::open(path)?))
}

// ── JSON capture export ────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct SampleJson {
    timestamp_s: f64,
    /// K rows of N [re, im] pairs.
    h: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct CaptureJson {
    config: ChannelConfig,
    samples: Vec<SampleJson>,
}

/// Lossless text form of a capture for debugging.
pub fn write_capture_json<W: Write>(capture: &Capture, w: W) -> Result<()> {
    let json = CaptureJson {
        config: capture.config.clone(),
        samples: capture
            .samples
            .iter()
            .map(|s| SampleJson {
                timestamp_s: s.timestamp_s,
                h: (0..s.h.nrows())
                    .map(|k| (0..s.h.ncols()).map(|n| [s.h[[k, n]].re, s.h[[k, n]].im]).collect())
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_writer(w, &json)?;
    Ok(())
}

pub fn read_capture_json<R: Read>(r: R) -> Result<Capture> {
    let json: CaptureJson = serde_json::from_reader(r)?;
    json.config.validate()?;
    let (k_count, n_count) = (json.config.num_subcarriers, json.config.num_rx_antennas);
    let mut samples = Vec::with_capacity(json.samples.len());
    for s in json.samples {
        if s.h.len() != k_count || s.h.iter().any(|row| row.len() != n_count) {
            return Err(Error::Format("sample dimensions disagree with config".into()));
        }
        let mut h = Array2::<Complex64>::zeros((k_count, n_count));
        for (k, row) in s.h.iter().enumerate() {
            for (n, &[re, im]) in row.iter().enumerate() {
                h[[k, n]] = Complex64::new(re, im);
            }
        }
        samples.push(CfrSample {
            timestamp_s: s.timestamp_s,
            h,
        });
    }
    Ok(Capture {
        config: json.config,
        samples,
    })
}

// ── estimates JSONL ────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub aoa_deg: f64,
    pub range_m: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub timestamp_s: f64,
    pub paths: Vec<PathRecord>,
}

impl EstimateRecord {
    pub fn from_estimates(timestamp_s: f64, paths: &[PathEstimate]) -> Self {
        Self {
            timestamp_s,
            paths: paths
                .iter()
                .map(|p| PathRecord {
                    aoa_deg: p.aoa_deg,
                    range_m: p.range_m,
                    power: p.power(),
                })
                .collect(),
        }
    }

    /// Rebuild estimator output (amplitudes reconstructed as real square
    /// roots of the stored powers).
    pub fn to_estimates(&self) -> (f64, Vec<PathEstimate>) {
        (
            self.timestamp_s,
            self.paths
                .iter()
                .map(|p| PathEstimate {
                    aoa_deg: p.aoa_deg,
                    range_m: p.range_m,
                    amplitude: Complex64::new(p.power.max(0.0).sqrt(), 0.0),
                })
                .collect(),
        )
    }
}

pub fn write_estimates_jsonl<W: Write>(
    records: &[(f64, Vec<PathEstimate>)],
    mut w: W,
) -> Result<()> {
    for (t, paths) in records {
        serde_json::to_writer(&mut w, &EstimateRecord::from_estimates(*t, paths))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_estimates_jsonl<R: BufRead>(r: R) -> Result<Vec<EstimateRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

// ── detections JSONL ───────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub centroid_aoa_deg: f64,
    pub centroid_range_m: f64,
    pub extent_aoa_deg: f64,
    pub size: usize,
}

impl From<&ClusterResult> for ClusterRecord {
    fn from(c: &ClusterResult) -> Self {
        Self {
            centroid_aoa_deg: c.centroid_aoa_deg,
            centroid_range_m: c.centroid_range_m,
            extent_aoa_deg: c.extent_aoa_deg,
            size: c.members.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub cluster: ClusterRecord,
    /// None marks a new target.
    pub displacement: Option<f64>,
}

impl From<&MotionEvent> for EventRecord {
    fn from(e: &MotionEvent) -> Self {
        Self {
            cluster: ClusterRecord::from(&e.cluster),
            displacement: e.displacement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: usize,
    pub clusters: Vec<ClusterRecord>,
    pub events: Vec<EventRecord>,
}

impl From<&FrameReport> for FrameDetections {
    fn from(r: &FrameReport) -> Self {
        Self {
            frame_index: r.frame_index,
            clusters: r.clusters.iter().map(ClusterRecord::from).collect(),
            events: r.events.iter().map(EventRecord::from).collect(),
        }
    }
}

pub fn write_detections_jsonl<W: Write>(reports: &[FrameReport], mut w: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, &FrameDetections::from(r))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// ── ROI JSONL ──────────────────────────────────────────────────────────

pub fn write_rois_jsonl<W: Write>(reports: &[FrameReport], mut w: W) -> Result<()> {
    for r in reports {
        for roi in &r.rois {
            serde_json::to_writer(&mut w, roi)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_rois_jsonl<R: BufRead>(r: R) -> Result<Vec<RoiSpec>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

// ── ground truth JSONL ─────────────────────────────────────────────────

pub fn write_ground_truth_jsonl<W: Write>(gt: &GroundTruth, mut w: W) -> Result<()> {
    for f in &gt.frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ground_truth_jsonl<R: BufRead>(r: R) -> Result<GroundTruth> {
    let mut gt = GroundTruth::default();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        gt.frames.push(serde_json::from_str(&line)?);
    }
    Ok(gt)
}

// ── metrics CSV ────────────────────────────────────────────────────────

pub const METRICS_HEADER: &str =
    "frame,strategy,bytes,tx_ms,io_ms,inference_ms,proc_ms,end_device_ms,e2e_ms";

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let l = &r.latency;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.frame_index,
            r.strategy.name(),
            r.bytes,
            l.tx_s * 1e3,
            l.io_s * 1e3,
            l.inference_s * 1e3,
            l.sensing_proc_s * 1e3,
            l.end_device_s * 1e3,
            l.end_to_end_s * 1e3,
        )?;
    }
    Ok(())
}

pub fn read_metrics_csv<R: BufRead>(r: R) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != METRICS_HEADER {
                return Err(Error::Format("unexpected metrics CSV header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Format(format!(
                "metrics CSV line {} has {} fields",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad number '{s}' in metrics CSV")))
        };
        let ms = |s: &str| -> Result<f64> { Ok(parse(s)? / 1e3) };
        rows.push(MetricsRow {
            frame_index: fields[0]
                .parse()
                .map_err(|_| Error::Format("bad frame index in metrics CSV".into()))?,
            strategy: fields[1].parse::<Strategy>()?,
            bytes: fields[2]
                .parse()
                .map_err(|_| Error::Format("bad byte count in metrics CSV".into()))?,
            latency: LatencyBreakdown {
                tx_s: ms(fields[3])?,
                io_s: ms(fields[4])?,
                inference_s: ms(fields[5])?,
                sensing_proc_s: ms(fields[6])?,
                end_device_s: ms(fields[7])?,
                end_to_end_s: ms(fields[8])?,
            },
        });
    }
    Ok(rows)
}

// ── summary / manifest ─────────────────────────────────────────────────

pub fn write_summary_json<W: Write>(summary: &Summary, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_summary_json<R: Read>(r: R) -> Result<Summary> {
    Ok(serde_json::from_reader(r)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a Scenario,
    files: &'a [String],
}

/// Raster container for frames written by the run directory writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Png,
    Ppm,
}

impl std::str::FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png" => Ok(FrameFormat::Png),
            "ppm" => Ok(FrameFormat::Ppm),
            other => Err(Error::Config(format!("unknown frame format '{other}'"))),
        }
    }
}

/// What [`write_run_outputs`] should materialize besides the core reports.
#[derive(Debug, Clone, Copy)]
pub struct RunWriteOptions {
    pub json_capture: bool,
    pub write_frames: bool,
    pub write_rois: bool,
    pub frame_format: FrameFormat,
}

impl Default for RunWriteOptions {
    fn default() -> Self {
        Self {
            json_capture: false,
            write_frames: false,
            write_rois: false,
            frame_format: FrameFormat::Png,
        }
    }
}

fn save_frame(frame: &crate::frame::Frame, path: &Path, format: FrameFormat) -> Result<()> {
    match format {
        FrameFormat::Png => frame.write_png(path),
        FrameFormat::Ppm => frame.write_ppm(BufWriter::new(File::create(path)?)),
    }
}

/// Write a complete run directory: capture, ground truth, per-sample
/// estimates, detections, ROIs, metrics, summary and a manifest, plus
/// rendered frames and ROI crops when requested. Returns the written file
/// names (relative to `dir`).
pub fn write_run_outputs(
    dir: &Path,
    scn: &Scenario,
    generated: &Generated,
    output: &PipelineOutput,
    opts: &RunWriteOptions,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<String> = Vec::new();
    let mut track = |name: &str| files.push(name.to_string());

    write_capture_file(&generated.capture, &dir.join("capture.bin"))?;
    track("capture.bin");
    if opts.json_capture {
        write_capture_json(
            &generated.capture,
            BufWriter::new(File::create(dir.join("capture.json"))?),
        )?;
        track("capture.json");
    }
    write_ground_truth_jsonl(
        &generated.ground_truth,
        BufWriter::new(File::create(dir.join("ground_truth.jsonl"))?),
    )?;
    track("ground_truth.jsonl");
    write_estimates_jsonl(
        &output.sample_estimates,
        BufWriter::new(File::create(dir.join("estimates.jsonl"))?),
    )?;
    track("estimates.jsonl");
    write_detections_jsonl(
        &output.frames,
        BufWriter::new(File::create(dir.join("detections.jsonl"))?),
    )?;
    track("detections.jsonl");
    write_rois_jsonl(
        &output.frames,
        BufWriter::new(File::create(dir.join("rois.jsonl"))?),
    )?;
    track("rois.jsonl");
    write_metrics_csv(
        &output.metrics,
        BufWriter::new(File::create(dir.join("metrics.csv"))?),
    )?;
    track("metrics.csv");
    write_summary_json(
        &output.summary,
        BufWriter::new(File::create(dir.join("summary.json"))?),
    )?;
    track("summary.json");

    let ext = match opts.frame_format {
        FrameFormat::Png => "png",
        FrameFormat::Ppm => "ppm",
    };
    if opts.write_frames || opts.write_rois {
        if opts.write_frames {
            std::fs::create_dir_all(dir.join("frames"))?;
        }
        if opts.write_rois {
            std::fs::create_dir_all(dir.join("roi_crops"))?;
        }
        for truth in &generated.ground_truth.frames {
            let report = output.frames.iter().find(|f| f.frame_index == truth.frame_index);
            let frame = render_frame(scn, truth);
            if opts.write_frames {
                let name = format!("frames/frame_{:05}.{ext}", truth.frame_index);
                save_frame(&frame, &dir.join(&name), opts.frame_format)?;
                track(&name);
            }
            if opts.write_rois {
                if let Some(report) = report {
                    for (ri, roi) in report.rois.iter().enumerate() {
                        let cropped = crate::roi::crop(&frame, roi)?;
                        let name =
                            format!("roi_crops/frame_{:05}_roi_{ri:02}.{ext}", truth.frame_index);
                        save_frame(&cropped, &dir.join(&name), opts.frame_format)?;
                        track(&name);
                    }
                }
            }
        }
    }

    files.sort();
    let manifest = Manifest {
        scenario: scn,
        files: &files,
    };
    let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    files.push("manifest.json".to_string());
    Ok(files)
}

/// Machine-readable error envelope printed to stderr by the CLI.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
    })
    .to_string()
}

/// Convenience: path joining that keeps the run-dir layout in one place.
pub fn run_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
