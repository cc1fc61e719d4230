//! Scenario description and synthetic data generation.
//!
//! A scenario places the sensing array, the camera and the transmitter in a
//! shared planar reference frame (array at `(nic_x, 0)` with boresight along
//! +Y), adds static reflectors, and walks subjects along waypoint polylines
//! at constant speed (ping-pong at the endpoints). From this it derives:
//!
//! - a CFR capture at the configured sampling rate, built from the direct
//!   transmitter path, the static reflectors, and one reflection per subject
//!   whose path length is the full transmitter-to-subject-to-array distance;
//! - per-frame ground truth (true positions, angles, panorama boxes);
//! - flat-background frames with each subject drawn as a filled rectangle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{synthesize_cfr, ChannelConfig, MultipathComponent};
use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::frame::Frame;
use crate::geometry::{to_panorama_angle, GeometryConfig};
use crate::io::Capture;
use crate::metrics::{LinkModel, TimingConfig};
use crate::roi::RoiConfig;

/// Geometry block of a scenario file: device placement plus the transmitter
/// position that the channel synthesis needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub nic_x_m: f64,
    pub camera_x_m: f64,
    /// Optional; derived from the positions when omitted.
    #[serde(default)]
    pub nic_camera_distance_m: Option<f64>,
    pub tx_panorama_deg: f64,
    /// Transmitter position in the shared plane.
    pub tx_x_m: f64,
    pub tx_y_m: f64,
}

impl GeometrySpec {
    pub fn geometry(&self) -> Result<GeometryConfig> {
        let cfg = GeometryConfig {
            nic_x_m: self.nic_x_m,
            camera_x_m: self.camera_x_m,
            nic_camera_distance_m: self
                .nic_camera_distance_m
                .unwrap_or((self.nic_x_m - self.camera_x_m).abs()),
            tx_panorama_deg: self.tx_panorama_deg,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A static multipath component given directly by its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectorSpec {
    pub path_length_m: f64,
    pub aoa_deg: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

impl ReflectorSpec {
    pub fn component(&self) -> Result<MultipathComponent> {
        MultipathComponent::new(
            self.path_length_m,
            self.aoa_deg,
            Complex64::from_polar(self.amplitude, self.phase_deg.to_radians()),
        )
    }
}

/// A moving subject: a waypoint polyline traversed at constant speed,
/// bouncing between the endpoints for as long as the scenario runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    /// (x, y) waypoints in meters; at least two.
    pub waypoints: Vec<(f64, f64)>,
    pub speed_mps: f64,
    /// Reflection amplitude contributed to the CFR.
    pub reflectivity: f64,
    /// Side of the ground-truth rectangle drawn on synthetic frames (px).
    #[serde(default = "default_box_px")]
    pub box_px: u32,
}

fn default_box_px() -> u32 {
    16
}

impl Subject {
    fn segment_lengths(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .map(|w| {
                let (x0, y0) = w[0];
                let (x1, y1) = w[1];
                (x1 - x0).hypot(y1 - y0)
            })
            .collect()
    }

    pub fn path_length_m(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    /// Position at time `t`, ping-ponging along the polyline.
    pub fn position(&self, t: f64) -> (f64, f64) {
        let total = self.path_length_m();
        if total == 0.0 {
            return self.waypoints[0];
        }
        let mut s = (self.speed_mps * t).rem_euclid(2.0 * total);
        if s > total {
            s = 2.0 * total - s;
        }
        let lengths = self.segment_lengths();
        for (w, len) in self.waypoints.windows(2).zip(lengths) {
            if s <= len || len == 0.0 {
                if len == 0.0 {
                    continue;
                }
                let f = s / len;
                let (x0, y0) = w[0];
                let (x1, y1) = w[1];
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            }
            s -= len;
        }
        *self.waypoints.last().unwrap()
    }

    fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config("a subject needs at least two waypoints".into()));
        }
        if !(self.speed_mps > 0.0) {
            return Err(Error::Config("subject speed must be positive".into()));
        }
        if self.box_px < 1 {
            return Err(Error::Config("subject box must be at least 1 px".into()));
        }
        for &(_, y) in &self.waypoints {
            if y <= 0.0 {
                return Err(Error::Config(
                    "subjects must stay in front of the array (y > 0)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// How the pipeline converts a reflection's total path length into the
/// array-to-target distance that the projection consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeCorrection {
    /// Use the estimated path length as-is.
    None,
    /// Subtract half the known transmitter-to-array direct distance; exact
    /// when the target sits halfway along the illumination path, a usable
    /// approximation elsewhere. ROI placement depends on the angle, so the
    /// residual range bias does not move regions sideways.
    HalfDirect,
}

/// Pipeline behavior knobs that are not part of any single stage's config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Remove estimates matching an empty-scene calibration capture.
    #[serde(default = "default_true")]
    pub background_subtraction: bool,
    #[serde(default = "default_range_correction")]
    pub range_correction: RangeCorrection,
    /// Amplitude of the direct transmitter-to-array path; 0 disables it.
    #[serde(default = "default_direct_amplitude")]
    pub direct_path_amplitude: f64,
}

fn default_true() -> bool {
    true
}

fn default_range_correction() -> RangeCorrection {
    RangeCorrection::HalfDirect
}

fn default_direct_amplitude() -> f64 {
    1.0
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            background_subtraction: true,
            range_correction: RangeCorrection::HalfDirect,
            direct_path_amplitude: 1.0,
        }
    }
}

/// Complete scenario description, loadable from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise_std: f64,
    pub channel: ChannelConfig,
    pub timing: TimingConfig,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default = "ClusterConfig::default")]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub roi: RoiConfig,
    #[serde(default)]
    pub link: LinkModel,
    #[serde(default)]
    pub pipeline: PipelineOptions,
    #[serde(default)]
    pub static_reflectors: Vec<ReflectorSpec>,
    #[serde(default)]
    pub subjects: Vec<Subject>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scn: Scenario = toml::from_str(text)?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise std must be >= 0".into()));
        }
        self.channel.validate()?;
        self.timing.validate()?;
        self.geometry.geometry()?;
        self.estimator.validate()?;
        self.cluster.validate()?;
        self.roi.validate()?;
        self.link.validate()?;
        if self.geometry.tx_y_m <= 0.0 && self.pipeline.direct_path_amplitude != 0.0 {
            return Err(Error::Config(
                "transmitter must sit in front of the array (tx_y_m > 0) \
                 when the direct path is enabled"
                    .into(),
            ));
        }
        for r in &self.static_reflectors {
            r.component()?;
        }
        for s in &self.subjects {
            s.validate()?;
        }
        Ok(())
    }

    /// Direct transmitter-to-array path length.
    pub fn direct_path_length_m(&self) -> f64 {
        (self.geometry.tx_x_m - self.geometry.nic_x_m).hypot(self.geometry.tx_y_m)
    }

    /// Angle of arrival (deg) of a scene point at the sensing array.
    pub fn aoa_at_nic_deg(&self, x: f64, y: f64) -> f64 {
        (x - self.geometry.nic_x_m).atan2(y).to_degrees()
    }

    /// Number of CFR samples the capture will hold (one per full sampling
    /// period inside the duration).
    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.timing.cfr_rate_hz + 1e-9).floor().max(0.0) as usize
    }

    /// Number of video frames whose full CFR window fits in the duration.
    pub fn num_frames(&self) -> usize {
        (self.duration_s * self.timing.frame_rate_fps + 1e-9).floor().max(0.0) as usize
    }

    /// Static multipath components present in every sample: direct path plus
    /// configured reflectors.
    pub fn static_components(&self) -> Result<Vec<MultipathComponent>> {
        let mut comps = Vec::new();
        if self.pipeline.direct_path_amplitude != 0.0 {
            let aoa = self.aoa_at_nic_deg(self.geometry.tx_x_m, self.geometry.tx_y_m);
            comps.push(MultipathComponent::real(
                self.direct_path_length_m(),
                aoa,
                self.pipeline.direct_path_amplitude,
            )?);
        }
        for r in &self.static_reflectors {
            comps.push(r.component()?);
        }
        Ok(comps)
    }

    /// All multipath components at time `t`: statics plus one reflection per
    /// subject, with the full transmitter-to-subject-to-array path length.
    pub fn components_at(&self, t: f64) -> Result<Vec<MultipathComponent>> {
        let mut comps = self.static_components()?;
        for s in &self.subjects {
            let (x, y) = s.position(t);
            let to_tx = (x - self.geometry.tx_x_m).hypot(y - self.geometry.tx_y_m);
            let to_nic = (x - self.geometry.nic_x_m).hypot(y);
            comps.push(MultipathComponent::real(
                to_tx + to_nic,
                self.aoa_at_nic_deg(x, y),
                s.reflectivity,
            )?);
        }
        Ok(comps)
    }

    fn sample_seed(&self, index: usize) -> u64 {
        // splitmix-style decorrelation of per-sample noise streams
        self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Ground truth for one subject in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub x_m: f64,
    pub y_m: f64,
    pub aoa_nic_deg: f64,
    /// Array-to-subject distance (not the reflection path length).
    pub range_nic_m: f64,
    /// Panorama angle of the subject as the camera sees it.
    pub theta_pano_deg: f64,
    pub box_left_px: i64,
    pub box_top_px: i64,
    pub box_width_px: u32,
    pub box_height_px: u32,
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame_index: usize,
    pub timestamp_s: f64,
    pub subjects: Vec<SubjectTruth>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: Vec<FrameTruth>,
}

/// Capture plus ground truth for a scenario. Frames are rendered on demand
/// (a full panorama is large); see [`render_frame`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub capture: Capture,
    pub ground_truth: GroundTruth,
}

/// Generate the CFR capture and per-frame ground truth for a scenario.
pub fn generate(scn: &Scenario) -> Result<Generated> {
    scn.validate()?;
    let geometry = scn.geometry.geometry()?;
    let mut samples = Vec::with_capacity(scn.num_samples());
    for i in 0..scn.num_samples() {
        let t = i as f64 / scn.timing.cfr_rate_hz;
        let comps = scn.components_at(t)?;
        samples.push(synthesize_cfr(
            &comps,
            &scn.channel,
            t,
            scn.noise_std,
            scn.sample_seed(i),
        )?);
    }

    let mut frames = Vec::with_capacity(scn.num_frames());
    for fi in 0..scn.num_frames() {
        let t = fi as f64 / scn.timing.frame_rate_fps;
        let mut subjects = Vec::with_capacity(scn.subjects.len());
        for s in &scn.subjects {
            let (x, y) = s.position(t);
            let aoa_cam = (x - scn.geometry.camera_x_m).atan2(y).to_degrees();
            let theta = to_panorama_angle(aoa_cam, &geometry);
            let center_col =
                (theta / 360.0 * scn.roi.frame_width_px as f64).round() as i64;
            let center_row = scn
                .roi
                .center_row_px
                .unwrap_or(scn.roi.frame_height_px as i64 / 2);
            subjects.push(SubjectTruth {
                x_m: x,
                y_m: y,
                aoa_nic_deg: scn.aoa_at_nic_deg(x, y),
                range_nic_m: (x - scn.geometry.nic_x_m).hypot(y),
                theta_pano_deg: theta,
                box_left_px: center_col - s.box_px as i64 / 2,
                box_top_px: center_row - s.box_px as i64 / 2,
                box_width_px: s.box_px,
                box_height_px: s.box_px,
            });
        }
        frames.push(FrameTruth {
            frame_index: fi,
            timestamp_s: t,
            subjects,
        });
    }

    Ok(Generated {
        capture: Capture {
            config: scn.channel.clone(),
            samples,
        },
        ground_truth: GroundTruth { frames },
    })
}

/// Distinguishable subject fill colors.
const SUBJECT_COLORS: [[u8; 3]; 6] = [
    [230, 80, 60],
    [70, 160, 230],
    [90, 200, 110],
    [240, 200, 70],
    [190, 110, 220],
    [250, 140, 40],
];

/// Render the synthetic panorama for one frame of ground truth: flat
/// background with each subject as a filled rectangle at its true panorama
/// position.
pub fn render_frame(scn: &Scenario, truth: &FrameTruth) -> Frame {
    let mut frame = Frame::filled(
        truth.frame_index,
        truth.timestamp_s,
        scn.roi.frame_width_px,
        scn.roi.frame_height_px,
        [24, 24, 28],
    );
    for (si, s) in truth.subjects.iter().enumerate() {
        frame.fill_rect_wrapped(
            s.box_left_px,
            s.box_top_px,
            s.box_width_px,
            s.box_height_px,
            SUBJECT_COLORS[si % SUBJECT_COLORS.len()],
        );
    }
    frame
}
