//! Channel-occupation and end-to-end latency accounting for the three
//! offloading strategies: sensing-selected ROIs, full frames, and fixed
//! 640x640 tiling.
//!
//! All byte counts are raw RGB (3 bytes per pixel, no codec); MB means 10^6
//! bytes. Latency components are configuration constants plus the two closed
//! forms for sensing processing time, so the module is a cost model, not a
//! testbed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::RoiSpec;

/// Capture-rate relation between CFR sampling and video frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    /// CFR sampling rate C (Hz).
    pub cfr_rate_hz: f64,
    /// Video frame rate V (frames/s).
    pub frame_rate_fps: f64,
    /// Processing time T for one CFR sample (s).
    pub per_cfr_processing_s: f64,
}

impl TimingConfig {
    pub fn new(cfr_rate_hz: f64, frame_rate_fps: f64, per_cfr_processing_s: f64) -> Result<Self> {
        let tc = Self {
            cfr_rate_hz,
            frame_rate_fps,
            per_cfr_processing_s,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_fps > 0.0) {
            return Err(Error::Config("frame rate must be positive".into()));
        }
        if self.cfr_rate_hz < self.frame_rate_fps {
            return Err(Error::Config(format!(
                "CFR rate {} must be >= frame rate {}",
                self.cfr_rate_hz, self.frame_rate_fps
            )));
        }
        if !(self.per_cfr_processing_s > 0.0) {
            return Err(Error::Config("per-CFR processing time must be positive".into()));
        }
        Ok(())
    }

    /// CFR samples per video frame, C / V.
    pub fn samples_per_frame(&self) -> f64 {
        self.cfr_rate_hz / self.frame_rate_fps
    }
}

/// Offloading strategy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sensing-selected regions of interest.
    Sawec,
    /// Whole raw frame.
    FullFrame,
    /// Every 640x640 tile of the frame.
    Tiles640,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sawec, Strategy::FullFrame, Strategy::Tiles640];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Sawec => "sawec",
            Strategy::FullFrame => "full_frame",
            Strategy::Tiles640 => "tiles_640",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sawec" => Ok(Strategy::Sawec),
            "full" | "full_frame" => Ok(Strategy::FullFrame),
            "tiles" | "tiles_640" => Ok(Strategy::Tiles640),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Link and server timing constants for the latency breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    /// Offload link throughput (bytes/s).
    pub rate_bytes_per_s: f64,
    /// Server-side I/O cost per transferred megabyte (s / 10^6 bytes).
    pub io_s_per_megabyte: f64,
    /// Inference time on the edge server (s).
    pub inference_s: f64,
    /// Local processing on the end device for the full-frame strategy (s).
    pub end_device_full_s: f64,
    /// Local processing on the end device for the tiling strategy (s).
    pub end_device_tiles_s: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            rate_bytes_per_s: 70.3e6,
            // calibrated so a 92.2 MB full-frame transfer costs 528.46 ms of I/O
            io_s_per_megabyte: 0.528_46 / 92.2,
            inference_s: 0.018_43,
            end_device_full_s: 1.779_34,
            end_device_tiles_s: 1.667_18,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_bytes_per_s > 0.0) {
            return Err(Error::Config("link rate must be positive".into()));
        }
        if self.io_s_per_megabyte < 0.0
            || self.inference_s < 0.0
            || self.end_device_full_s < 0.0
            || self.end_device_tiles_s < 0.0
        {
            return Err(Error::Config("latency constants must be >= 0".into()));
        }
        Ok(())
    }

    fn end_device_s(&self, strategy: Strategy) -> f64 {
        match strategy {
            Strategy::Sawec => 0.0,
            Strategy::FullFrame => self.end_device_full_s,
            Strategy::Tiles640 => self.end_device_tiles_s,
        }
    }
}

/// Per-frame latency decomposition. All fields in seconds; the total is the
/// exact component sum by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub tx_s: f64,
    pub io_s: f64,
    pub inference_s: f64,
    pub sensing_proc_s: f64,
    pub end_device_s: f64,
    pub end_to_end_s: f64,
}

impl LatencyBreakdown {
    pub fn from_components(
        tx_s: f64,
        io_s: f64,
        inference_s: f64,
        sensing_proc_s: f64,
        end_device_s: f64,
    ) -> Self {
        Self {
            tx_s,
            io_s,
            inference_s,
            sensing_proc_s,
            end_device_s,
            end_to_end_s: tx_s + io_s + inference_s + sensing_proc_s + end_device_s,
        }
    }
}

/// Aggregate channel-occupation figures for one strategy over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub strategy: Strategy,
    pub frames: usize,
    pub total_bytes: u64,
    pub bytes_per_frame_mean: f64,
    /// 1 - own/full; None for the full-frame report itself when degenerate.
    pub reduction_vs_full: Option<f64>,
}

/// Sensing processing time and latency for one video frame.
///
/// Processing a frame takes `T + (C/V - 1) / C`: the last of the C/V samples
/// in a frame window arrives `(C/V - 1) / C` after the first, and its own
/// processing takes `T`. The latency subtracts the frame period `1/V`.
pub fn sensing_processing(tc: &TimingConfig) -> (f64, f64) {
    let total =
        tc.per_cfr_processing_s + (tc.samples_per_frame() - 1.0) / tc.cfr_rate_hz;
    let latency = total - 1.0 / tc.frame_rate_fps;
    (total, latency)
}

/// Raw bytes put on the wireless link for one frame under `strategy`.
///
/// The ROI list is only consulted for [`Strategy::Sawec`]; ROIs are expected
/// to be merged already (overlap handling lives in the roi module).
pub fn occupation(
    strategy: Strategy,
    frame_width_px: u32,
    frame_height_px: u32,
    rois: &[RoiSpec],
) -> u64 {
    let (w, h) = (frame_width_px as u64, frame_height_px as u64);
    match strategy {
        Strategy::Sawec => rois
            .iter()
            .map(|r| 3 * r.side_px as u64 * r.clipped_height(frame_height_px) as u64)
            .sum(),
        Strategy::FullFrame => 3 * w * h,
        Strategy::Tiles640 => {
            let tiles = w.div_ceil(640) * h.div_ceil(640);
            3 * 640 * 640 * tiles
        }
    }
}

/// Full latency breakdown for transferring `bytes` under `strategy`.
///
/// Transmission is `bytes / rate`, I/O is the per-megabyte coefficient, the
/// sensing processing latency is charged only to the ROI strategy, and the
/// end-device constant only to the baselines.
pub fn latency(
    strategy: Strategy,
    bytes: u64,
    link: &LinkModel,
    tc: &TimingConfig,
) -> LatencyBreakdown {
    let tx = bytes as f64 / link.rate_bytes_per_s;
    let io = link.io_s_per_megabyte * bytes as f64 / 1e6;
    let sensing = match strategy {
        Strategy::Sawec => sensing_processing(tc).1,
        _ => 0.0,
    };
    LatencyBreakdown::from_components(tx, io, link.inference_s, sensing, link.end_device_s(strategy))
}

/// Fractional reduction of `bytes_a` relative to `bytes_b`: `1 - a/b`.
pub fn compare(bytes_a: f64, bytes_b: f64) -> Result<f64> {
    if bytes_b <= 0.0 {
        return Err(Error::Config(
            "comparison baseline must have positive byte count".into(),
        ));
    }
    Ok(1.0 - bytes_a / bytes_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi::RoiSpec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    fn roi(side: u32, w: u32, h: u32) -> RoiSpec {
        RoiSpec {
            frame_index: 0,
            center_theta_deg: 180.0,
            center_row_px: h as i64 / 2,
            side_px: side,
            left_px: 0,
            top_px: (h as i64 - side as i64) / 2,
            frame_width_px: w,
            frame_height_px: h,
        }
    }

    #[test]
    fn sensing_processing_matches_reference_point() {
        let tc = TimingConfig::new(200.0, 25.0, 0.080).unwrap();
        let (total, lat) = sensing_processing(&tc);
        assert!(close(total, 0.115, 1e-12));
        assert!(close(lat, 0.075, 1e-12));
    }

    #[test]
    fn sensing_processing_collapses_at_equal_rates() {
        let tc = TimingConfig::new(25.0, 25.0, 0.040).unwrap();
        let (total, lat) = sensing_processing(&tc);
        assert!(close(total, 0.040, 1e-15));
        assert!(close(lat, 0.0, 1e-15));
    }

    #[test]
    fn sensing_processing_direct_evaluation() {
        let tc = TimingConfig::new(100.0, 25.0, 0.080).unwrap();
        let (total, lat) = sensing_processing(&tc);
        assert!(close(total, 0.110, 1e-12));
        assert!(close(lat, 0.070, 1e-12));
    }

    #[test]
    fn timing_validation() {
        assert!(TimingConfig::new(10.0, 25.0, 0.1).is_err()); // C < V
        assert!(TimingConfig::new(200.0, 0.0, 0.1).is_err());
        assert!(TimingConfig::new(200.0, 25.0, 0.0).is_err());
    }

    #[test]
    fn full_frame_occupation_is_raw_rgb() {
        let bytes = occupation(Strategy::FullFrame, 9600, 4800, &[]);
        assert_eq!(bytes, 138_240_000);
        // stays within half a percent of the 138.88 MB reference figure
        let rel = (138.24e6 - 138.88e6f64).abs() / 138.88e6;
        assert!(rel < 0.005);
    }

    #[test]
    fn roi_occupation_counts_square_pixels() {
        let bytes = occupation(Strategy::Sawec, 9600, 4800, &[roi(996, 9600, 4800)]);
        assert_eq!(bytes, 2_976_048);
        assert_eq!(occupation(Strategy::Sawec, 9600, 4800, &[]), 0);
    }

    #[test]
    fn tiling_occupation_counts_whole_tiles() {
        let bytes = occupation(Strategy::Tiles640, 9600, 4800, &[]);
        assert_eq!(bytes, 3 * 640 * 640 * 15 * 8);
    }

    #[test]
    fn latency_components_sum_exactly() {
        let link = LinkModel::default();
        let tc = TimingConfig::new(200.0, 25.0, 0.080).unwrap();
        for strategy in Strategy::ALL {
            for bytes in [0u64, 1, 5_500_000, 138_240_000] {
                let b = latency(strategy, bytes, &link, &tc);
                let sum = b.tx_s + b.io_s + b.inference_s + b.sensing_proc_s + b.end_device_s;
                assert_eq!(b.end_to_end_s, sum);
            }
        }
    }

    #[test]
    fn zero_bytes_cost_no_transfer_time() {
        let link = LinkModel::default();
        let tc = TimingConfig::new(200.0, 25.0, 0.080).unwrap();
        let b = latency(Strategy::FullFrame, 0, &link, &tc);
        assert_eq!(b.tx_s, 0.0);
        assert_eq!(b.io_s, 0.0);
    }

    #[test]
    fn tx_time_is_linear_in_bytes() {
        let link = LinkModel::default();
        let tc = TimingConfig::new(200.0, 25.0, 0.080).unwrap();
        let one = latency(Strategy::FullFrame, 10_000_000, &link, &tc);
        let two = latency(Strategy::FullFrame, 20_000_000, &link, &tc);
        assert!(close(two.tx_s, 2.0 * one.tx_s, 1e-15));
    }

    #[test]
    fn compare_reference_points() {
        assert!(close(compare(5.5e6, 92.2e6).unwrap(), 0.9403, 1e-4));
        assert!(close(compare(7.0, 7.0).unwrap(), 0.0, 1e-15));
        let mean_baseline = (92.2e6 + 85.9e6) / 2.0;
        assert!(close(compare(36.0e6, mean_baseline).unwrap(), 0.5957, 5e-4));
        assert!(compare(1.0, 0.0).is_err());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("sawec".parse::<Strategy>().unwrap(), Strategy::Sawec);
        assert_eq!("full".parse::<Strategy>().unwrap(), Strategy::FullFrame);
        assert_eq!("tiles".parse::<Strategy>().unwrap(), Strategy::Tiles640);
        assert!("mystery".parse::<Strategy>().is_err());
    }
}
