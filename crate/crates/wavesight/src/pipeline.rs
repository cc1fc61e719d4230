//! End-to-end pipeline: synchronize CFR samples with video frames, estimate
//! multipath parameters, cluster, detect motion, extract ROIs and account
//! offloading costs for every strategy.
//!
//! Processing is a strict fold over frames in timestamp order (motion
//! detection compares against the previous frame's clusters), while the work
//! inside one frame is pure.

use serde::{Deserialize, Serialize};

use crate::channel::synthesize_cfr;
use crate::cluster::{
    dbscan, detect_motion, frame_estimates, Background, ClusterResult, EstimatePoint, MotionEvent,
};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, PathEstimate};
use crate::frame::Frame;
use crate::geometry::GeometryConfig;
use crate::io::Capture;
use crate::metrics::{compare, latency, occupation, LatencyBreakdown, OccupationReport, Strategy};
use crate::roi::{crop, merge_rois, roi_from_cluster, RoiSpec};
use crate::scenario::{GroundTruth, RangeCorrection, Scenario};

/// Per-frame detection output.
#[derive(Debug, Clone)]
pub struct FrameReport {
    pub frame_index: usize,
    pub clusters: Vec<ClusterResult>,
    pub events: Vec<MotionEvent>,
    /// Merged regions of interest emitted for this frame.
    pub rois: Vec<RoiSpec>,
}

/// One metrics record: a (frame, strategy) cost line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub frame_index: usize,
    pub strategy: Strategy,
    pub bytes: u64,
    pub latency: LatencyBreakdown,
}

/// Aggregates for one strategy over the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub occupation: OccupationReport,
    /// Component-wise mean of the per-frame latency breakdowns.
    pub mean_latency: LatencyBreakdown,
}

/// Run-level summary written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: usize,
    pub strategies: Vec<StrategySummary>,
    /// Fraction of (frame, subject) pairs whose ground-truth box lies fully
    /// inside an emitted ROI; None without subjects or ground truth.
    pub containment_sawec: Option<f64>,
    /// Fraction of boxes falling entirely inside a single 640x640 tile.
    pub containment_tiles: Option<f64>,
    /// Clusters dropped because their corrected range was degenerate.
    pub skipped_degenerate_clusters: usize,
}

/// Full pipeline output.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Per consumed CFR sample: timestamp and its path estimates.
    pub sample_estimates: Vec<(f64, Vec<PathEstimate>)>,
    pub frames: Vec<FrameReport>,
    pub metrics: Vec<MetricsRow>,
    pub summary: Summary,
}

/// Assign timestamps to video-frame windows.
///
/// The i-th timestamp must sit within half a sampling period of its lattice
/// slot `i / C` (the capture and the camera share one clock starting at 0);
/// larger misalignment — a dropped sample or a clock offset — is a
/// synchronization error. Frame `f` owns the samples in `[f/V, (f+1)/V)`;
/// samples past the last complete frame window are left unconsumed.
pub fn group_timestamps(
    timestamps: &[f64],
    cfr_rate_hz: f64,
    frame_rate_fps: f64,
    num_frames: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); num_frames];
    let half_period = 0.5 / cfr_rate_hz;
    for (i, &t) in timestamps.iter().enumerate() {
        let expected = i as f64 / cfr_rate_hz;
        let misalignment = (t - expected).abs();
        if misalignment > half_period * (1.0 + 1e-6) {
            return Err(Error::Synchronization(format!(
                "sample {i} at t={t}s is {misalignment}s off its expected slot {expected}s"
            )));
        }
        let frame = (i as f64 * frame_rate_fps / cfr_rate_hz + 1e-9).floor() as usize;
        if frame < num_frames {
            groups[frame].push(i);
        }
    }
    Ok(groups)
}

/// Assign capture samples to video-frame windows by timestamp.
pub fn group_samples_by_frame(
    capture: &Capture,
    cfr_rate_hz: f64,
    frame_rate_fps: f64,
    num_frames: usize,
) -> Result<Vec<Vec<usize>>> {
    let timestamps: Vec<f64> = capture.samples.iter().map(|s| s.timestamp_s).collect();
    group_timestamps(&timestamps, cfr_rate_hz, frame_rate_fps, num_frames)
}

fn corrected_range(range_m: f64, mode: RangeCorrection, direct_m: f64) -> f64 {
    match mode {
        RangeCorrection::None => range_m,
        RangeCorrection::HalfDirect => range_m - direct_m / 2.0,
    }
}

/// Build the empty-scene calibration background for a scenario, if enabled.
pub fn calibration_background(scn: &Scenario, estimator: &Estimator) -> Result<Option<Background>> {
    if !scn.pipeline.background_subtraction {
        return Ok(None);
    }
    let statics = scn.static_components()?;
    let calib = synthesize_cfr(&statics, &scn.channel, 0.0, 0.0, 0)?;
    let estimates = estimator.estimate(&calib)?;
    Ok(Some(Background {
        points: estimates.iter().map(EstimatePoint::from).collect(),
        match_eps: scn.cluster.eps,
    }))
}

/// Detection stage for one frame: background-filter and range-correct the
/// sample estimates, cluster, compare against the previous frame, emit
/// merged ROIs. Returns the report and the number of clusters skipped for
/// degenerate geometry.
pub fn detect_frame(
    scn: &Scenario,
    geometry: &GeometryConfig,
    background: Option<&Background>,
    prev_clusters: &[ClusterResult],
    per_sample: &[Vec<PathEstimate>],
    frame_index: usize,
) -> Result<(FrameReport, usize)> {
    let direct_m = scn.direct_path_length_m();
    let mut points = frame_estimates(per_sample, background, &scn.cluster);
    for p in &mut points {
        p.range_m = corrected_range(p.range_m, scn.pipeline.range_correction, direct_m);
    }
    let (clusters, _noise) = dbscan(&points, &scn.cluster);
    let events = detect_motion(prev_clusters, &clusters, frame_index, &scn.cluster);

    let mut skipped = 0usize;
    let mut rois = Vec::new();
    for event in &events {
        match roi_from_cluster(&event.cluster, frame_index, geometry, &scn.roi) {
            Ok(roi) => rois.push(roi),
            Err(Error::DegenerateTarget) | Err(Error::BoresightDegenerate(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let rois = merge_rois(rois, &scn.roi);
    Ok((
        FrameReport {
            frame_index,
            clusters,
            events,
            rois,
        },
        skipped,
    ))
}

/// Run clustering, motion detection and ROI extraction over externally
/// produced per-sample estimates (timestamp, paths).
pub fn detect_from_estimates(
    scn: &Scenario,
    records: &[(f64, Vec<PathEstimate>)],
) -> Result<(Vec<FrameReport>, usize)> {
    scn.validate()?;
    let geometry = scn.geometry.geometry()?;
    let estimator = Estimator::new(&scn.channel, &scn.estimator)?;
    let background = calibration_background(scn, &estimator)?;

    let timestamps: Vec<f64> = records.iter().map(|r| r.0).collect();
    let frames_available = ((records.len() as f64 / scn.timing.cfr_rate_hz)
        * scn.timing.frame_rate_fps
        + 1e-9)
        .floor() as usize;
    let num_frames = scn.num_frames().min(frames_available);
    let groups = group_timestamps(
        &timestamps,
        scn.timing.cfr_rate_hz,
        scn.timing.frame_rate_fps,
        num_frames,
    )?;

    let mut reports = Vec::with_capacity(groups.len());
    let mut prev: Vec<ClusterResult> = Vec::new();
    let mut skipped_total = 0usize;
    for (frame_index, group) in groups.iter().enumerate() {
        let per_sample: Vec<Vec<PathEstimate>> =
            group.iter().map(|&i| records[i].1.clone()).collect();
        let (report, skipped) = detect_frame(
            scn,
            &geometry,
            background.as_ref(),
            &prev,
            &per_sample,
            frame_index,
        )?;
        skipped_total += skipped;
        prev = report.clusters.clone();
        reports.push(report);
    }
    Ok((reports, skipped_total))
}

fn box_in_single_tile(
    left: i64,
    top: i64,
    width: u32,
    height: u32,
    frame_w: u32,
    frame_h: u32,
) -> bool {
    let w = frame_w as i64;
    let left = left.rem_euclid(w);
    if left + width as i64 > w {
        return false; // seam-straddling boxes always cross a tile edge
    }
    if top < 0 || top + height as i64 > frame_h as i64 {
        return false;
    }
    let right = left + width as i64 - 1;
    let bottom = top + height as i64 - 1;
    left / 640 == right / 640 && top / 640 == bottom / 640
}

/// Run estimation, clustering, motion detection, ROI extraction and cost
/// accounting over a capture.
///
/// `ground_truth` enables the containment scores; `strategies` selects which
/// cost rows to emit (the full-frame baseline is always computed internally
/// for the reduction figures).
pub fn run_pipeline(
    scn: &Scenario,
    capture: &Capture,
    ground_truth: Option<&GroundTruth>,
    strategies: &[Strategy],
) -> Result<PipelineOutput> {
    scn.validate()?;
    if capture.config != scn.channel {
        return Err(Error::Consistency(
            "capture channel config differs from the scenario".into(),
        ));
    }
    let geometry = scn.geometry.geometry()?;
    let timing = &scn.timing;

    // only frames whose full window is covered by the capture
    let frames_available = ((capture.samples.len() as f64 / timing.cfr_rate_hz)
        * timing.frame_rate_fps
        + 1e-9)
        .floor() as usize;
    let num_frames = scn.num_frames().min(frames_available);
    let groups = group_samples_by_frame(
        capture,
        timing.cfr_rate_hz,
        timing.frame_rate_fps,
        num_frames,
    )?;

    let estimator = Estimator::new(&scn.channel, &scn.estimator)?;
    let background = calibration_background(scn, &estimator)?;

    let mut sample_estimates: Vec<(f64, Vec<PathEstimate>)> = Vec::new();
    let mut frame_reports: Vec<FrameReport> = Vec::with_capacity(num_frames);
    let mut metrics_rows: Vec<MetricsRow> = Vec::new();
    let mut skipped_degenerate = 0usize;
    let mut prev_clusters: Vec<ClusterResult> = Vec::new();

    for (frame_index, group) in groups.iter().enumerate() {
        let mut per_sample: Vec<Vec<PathEstimate>> = Vec::with_capacity(group.len());
        for &si in group {
            let estimates = estimator.estimate(&capture.samples[si])?;
            sample_estimates.push((capture.samples[si].timestamp_s, estimates.clone()));
            per_sample.push(estimates);
        }

        let (report, skipped) = detect_frame(
            scn,
            &geometry,
            background.as_ref(),
            &prev_clusters,
            &per_sample,
            frame_index,
        )?;
        skipped_degenerate += skipped;

        for &strategy in strategies {
            let bytes = occupation(
                strategy,
                scn.roi.frame_width_px,
                scn.roi.frame_height_px,
                &report.rois,
            );
            metrics_rows.push(MetricsRow {
                frame_index,
                strategy,
                bytes,
                latency: latency(strategy, bytes, &scn.link, timing),
            });
        }

        prev_clusters = report.clusters.clone();
        frame_reports.push(report);
    }

    // containment against ground truth
    let mut pairs = 0usize;
    let mut sawec_hits = 0usize;
    let mut tile_hits = 0usize;
    if let Some(gt) = ground_truth {
        for (report, truth) in frame_reports.iter().zip(gt.frames.iter()) {
            for s in &truth.subjects {
                pairs += 1;
                if report.rois.iter().any(|r| {
                    r.contains_rect(s.box_left_px, s.box_top_px, s.box_width_px, s.box_height_px)
                }) {
                    sawec_hits += 1;
                }
                if box_in_single_tile(
                    s.box_left_px,
                    s.box_top_px,
                    s.box_width_px,
                    s.box_height_px,
                    scn.roi.frame_width_px,
                    scn.roi.frame_height_px,
                ) {
                    tile_hits += 1;
                }
            }
        }
    }
    let containment_sawec = (pairs > 0).then(|| sawec_hits as f64 / pairs as f64);
    let containment_tiles = (pairs > 0).then(|| tile_hits as f64 / pairs as f64);

    // per-strategy aggregates; the full-frame baseline is always available
    let full_total: u64 =
        3 * scn.roi.frame_width_px as u64 * scn.roi.frame_height_px as u64 * num_frames as u64;
    let mut summaries = Vec::new();
    for &strategy in strategies {
        let rows: Vec<&MetricsRow> = metrics_rows
            .iter()
            .filter(|r| r.strategy == strategy)
            .collect();
        let total_bytes: u64 = rows.iter().map(|r| r.bytes).sum();
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&LatencyBreakdown) -> f64| -> f64 {
            rows.iter().map(|r| f(&r.latency)).sum::<f64>() / n
        };
        let mean_latency = LatencyBreakdown::from_components(
            mean(|l| l.tx_s),
            mean(|l| l.io_s),
            mean(|l| l.inference_s),
            mean(|l| l.sensing_proc_s),
            mean(|l| l.end_device_s),
        );
        let reduction_vs_full = if full_total > 0 {
            Some(compare(total_bytes as f64, full_total as f64)?)
        } else {
            None
        };
        summaries.push(StrategySummary {
            occupation: OccupationReport {
                strategy,
                frames: rows.len(),
                total_bytes,
                bytes_per_frame_mean: total_bytes as f64 / n,
                reduction_vs_full,
            },
            mean_latency,
        });
    }

    Ok(PipelineOutput {
        sample_estimates,
        frames: frame_reports,
        metrics: metrics_rows,
        summary: Summary {
            frames: num_frames,
            strategies: summaries,
            containment_sawec,
            containment_tiles,
            skipped_degenerate_clusters: skipped_degenerate,
        },
    })
}

/// Crop every ROI of a frame report out of the corresponding rendered frame.
pub fn crop_frame_rois(frame: &Frame, report: &FrameReport) -> Result<Vec<Frame>> {
    report.rois.iter().map(|roi| crop(frame, roi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Strategy;
    use crate::scenario::{generate, ReflectorSpec, Scenario, Subject};

    fn pipeline_scenario() -> Scenario {
        let mut scn = crate::scenario::tests::small_scenario();
        scn.duration_s = 0.6;
        scn.cluster.motion_threshold = 0.1;
        scn.subjects[0] = Subject {
            waypoints: vec![(-1.5, 3.0), (1.5, 3.0)],
            speed_mps: 2.2,
            reflectivity: 0.6,
            box_px: 6,
        };
        scn
    }

    #[test]
    fn grouping_consumes_each_sample_once() {
        let scn = pipeline_scenario();
        let gen = generate(&scn).unwrap();
        let groups = group_samples_by_frame(&gen.capture, 200.0, 25.0, scn.num_frames()).unwrap();
        assert_eq!(groups.len(), 15);
        let mut seen = vec![0usize; gen.capture.samples.len()];
        for g in &groups {
            assert_eq!(g.len(), 8); // C/V = 8 exactly
            for &i in g {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c <= 1));
        assert_eq!(seen.iter().sum::<usize>(), 120);
    }

    #[test]
    fn grouping_rejects_misaligned_timestamps() {
        let scn = pipeline_scenario();
        let mut gen = generate(&scn).unwrap();
        gen.capture.samples[3].timestamp_s += 0.6 / 200.0; // past half a period
        let err = group_samples_by_frame(&gen.capture, 200.0, 25.0, scn.num_frames());
        assert!(matches!(err, Err(Error::Synchronization(_))));
        // within half a period is tolerated
        let mut gen = generate(&scn).unwrap();
        gen.capture.samples[3].timestamp_s += 0.4 / 200.0;
        assert!(group_samples_by_frame(&gen.capture, 200.0, 25.0, scn.num_frames()).is_ok());
    }

    #[test]
    fn grouping_handles_fractional_rate_ratio() {
        // C/V = 7.5: windows alternate between 7 and 8 samples
        let timestamps: Vec<f64> = (0..150).map(|i| i as f64 / 150.0).collect();
        let groups = group_timestamps(&timestamps, 150.0, 20.0, 20).unwrap();
        assert_eq!(groups.len(), 20);
        for g in &groups {
            assert!(g.len() == 7 || g.len() == 8, "window of {}", g.len());
        }
        assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), 150);
    }

    #[test]
    fn static_scene_emits_nothing() {
        let mut scn = pipeline_scenario();
        scn.subjects.clear();
        scn.static_reflectors = vec![ReflectorSpec {
            path_length_m: 7.0,
            aoa_deg: 40.0,
            amplitude: 0.5,
            phase_deg: 0.0,
        }];
        scn.duration_s = 0.2;
        let gen = generate(&scn).unwrap();
        let out = run_pipeline(&scn, &gen.capture, Some(&gen.ground_truth), &Strategy::ALL).unwrap();
        assert!(out.frames.iter().all(|f| f.events.is_empty()));
        assert!(out.frames.iter().all(|f| f.rois.is_empty()));
        let sawec_bytes: u64 = out
            .metrics
            .iter()
            .filter(|r| r.strategy == Strategy::Sawec)
            .map(|r| r.bytes)
            .sum();
        assert_eq!(sawec_bytes, 0);
        assert_eq!(out.summary.containment_sawec, None);
    }

    #[test]
    fn moving_subject_produces_rois_every_frame() {
        let scn = pipeline_scenario();
        let gen = generate(&scn).unwrap();
        let out = run_pipeline(&scn, &gen.capture, Some(&gen.ground_truth), &Strategy::ALL).unwrap();
        assert_eq!(out.frames.len(), 15);
        for f in &out.frames {
            assert!(!f.rois.is_empty(), "frame {} lost the subject", f.frame_index);
        }
        let containment = out.summary.containment_sawec.unwrap();
        assert!(containment >= 0.95, "containment {containment}");
        // breakdown closure on every row
        for r in &out.metrics {
            let sum = r.latency.tx_s
                + r.latency.io_s
                + r.latency.inference_s
                + r.latency.sensing_proc_s
                + r.latency.end_device_s;
            assert_eq!(r.latency.end_to_end_s, sum);
        }
    }

    #[test]
    fn detect_from_estimates_matches_run_pipeline() {
        let mut scn = pipeline_scenario();
        scn.duration_s = 0.3;
        let gen = generate(&scn).unwrap();
        let out = run_pipeline(&scn, &gen.capture, None, &[Strategy::Sawec]).unwrap();
        let (reports, skipped) = detect_from_estimates(&scn, &out.sample_estimates).unwrap();
        assert_eq!(reports.len(), out.frames.len());
        assert_eq!(skipped, out.summary.skipped_degenerate_clusters);
        for (a, b) in reports.iter().zip(out.frames.iter()) {
            assert_eq!(a.rois, b.rois);
            assert_eq!(a.clusters.len(), b.clusters.len());
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let mut scn = pipeline_scenario();
        scn.duration_s = 0.3;
        scn.noise_std = 0.05;
        let gen_a = generate(&scn).unwrap();
        let gen_b = generate(&scn).unwrap();
        assert_eq!(gen_a.capture.samples, gen_b.capture.samples);
        let out_a = run_pipeline(&scn, &gen_a.capture, Some(&gen_a.ground_truth), &Strategy::ALL).unwrap();
        let out_b = run_pipeline(&scn, &gen_b.capture, Some(&gen_b.ground_truth), &Strategy::ALL).unwrap();
        assert_eq!(out_a.metrics, out_b.metrics);
        assert_eq!(out_a.summary.containment_sawec, out_b.summary.containment_sawec);
    }

    #[test]
    fn capture_config_mismatch_is_rejected() {
        let scn = pipeline_scenario();
        let gen = generate(&scn).unwrap();
        let mut other = scn.clone();
        other.channel = crate::channel::ChannelConfig::new(5.25e9, 312.5e3, 32, 2).unwrap();
        let err = run_pipeline(&other, &gen.capture, None, &Strategy::ALL);
        assert!(matches!(err, Err(Error::Consistency(_))));
    }

    #[test]
    fn short_capture_truncates_to_complete_frames() {
        let scn = pipeline_scenario();
        let mut gen = generate(&scn).unwrap();
        gen.capture.samples.truncate(44); // 5.5 frame windows
        let out = run_pipeline(&scn, &gen.capture, None, &[Strategy::Sawec]).unwrap();
        assert_eq!(out.frames.len(), 5);
    }

    #[test]
    fn tile_membership_respects_boundaries_and_seam() {
        assert!(box_in_single_tile(10, 10, 100, 100, 9600, 4800));
        assert!(!box_in_single_tile(600, 10, 100, 100, 9600, 4800)); // spans x=640
        assert!(!box_in_single_tile(10, 600, 100, 100, 9600, 4800)); // spans y=640
        assert!(!box_in_single_tile(-20, 10, 100, 100, 9600, 4800)); // seam wrap
        assert!(box_in_single_tile(9500, 10, 90, 90, 9600, 4800)); // last partial tile
    }

    #[test]
    fn sample_grouping_sanity_for_odd_sample_counts() {
        let timestamps: Vec<f64> = (0..23).map(|i| i as f64 / 200.0).collect();
        let capture_frames = ((23.0 / 200.0) * 25.0_f64 + 1e-9).floor() as usize;
        assert_eq!(capture_frames, 2);
        let groups = group_timestamps(&timestamps, 200.0, 25.0, capture_frames).unwrap();
        assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), 16);
    }
}
