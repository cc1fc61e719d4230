//! Conversion of moving clusters into pixel-space regions of interest on the
//! equirectangular frame, overlap merging, and seam-aware cropping.
//!
//! A cluster covering `a` degrees of AoA becomes a square of side
//! `a * alpha * W / 360` pixels (clamped between a configurable minimum and
//! the frame width), centered horizontally at the cluster's panorama angle.
//! Horizontal pixel coordinates live on a cylinder: a region may straddle
//! the 0/360 seam, in which case its stored `left_px` is negative and all
//! column arithmetic is modulo the frame width.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterResult;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{project_to_camera, to_panorama_angle, GeometryConfig};

/// ROI sizing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    /// Multiplying factor applied to the cluster extent to absorb
    /// localization error.
    pub alpha: f64,
    /// Full panorama width (px).
    pub frame_width_px: u32,
    /// Full panorama height (px).
    pub frame_height_px: u32,
    /// Lower clamp for the ROI side (px).
    pub min_side_px: u32,
    /// Vertical ROI center; defaults to mid-height.
    #[serde(default)]
    pub center_row_px: Option<i64>,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            frame_width_px: 9600,
            frame_height_px: 4800,
            min_side_px: 8,
            center_row_px: None,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.frame_width_px < 2 || self.frame_height_px < 2 {
            return Err(Error::Config("frame must be at least 2x2".into()));
        }
        if self.min_side_px < 1 {
            return Err(Error::Config("min side must be >= 1".into()));
        }
        Ok(())
    }

    fn center_row(&self) -> i64 {
        self.center_row_px
            .unwrap_or(self.frame_height_px as i64 / 2)
    }
}

/// A square region of interest on an equirectangular frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub frame_index: usize,
    /// Panorama angle of the ROI center in [0, 360).
    pub center_theta_deg: f64,
    pub center_row_px: i64,
    pub side_px: u32,
    /// Leftmost column before wrapping; negative when straddling the seam.
    pub left_px: i64,
    /// Top row before vertical clipping; may be negative.
    pub top_px: i64,
    pub frame_width_px: u32,
    pub frame_height_px: u32,
}

impl RoiSpec {
    /// Height actually present after clipping to the frame.
    pub fn clipped_height(&self, frame_height_px: u32) -> u32 {
        let top = self.top_px.max(0);
        let bottom = (self.top_px + self.side_px as i64).min(frame_height_px as i64);
        (bottom - top).max(0) as u32
    }

    pub fn clipped_top(&self) -> i64 {
        self.top_px.max(0)
    }

    /// Raw RGB bytes this region occupies on the link.
    pub fn bytes(&self) -> u64 {
        3 * self.side_px as u64 * self.clipped_height(self.frame_height_px) as u64
    }

    /// Whether an axis-aligned pixel rectangle lies fully inside the region,
    /// treating columns modulo the frame width.
    pub fn contains_rect(&self, left: i64, top: i64, width: u32, height: u32) -> bool {
        if width > self.side_px {
            return false;
        }
        let offset = (left - self.left_px).rem_euclid(self.frame_width_px as i64);
        if offset + width as i64 > self.side_px as i64 {
            return false;
        }
        let row_lo = self.clipped_top();
        let row_hi = self.top_px + self.side_px as i64;
        let row_hi = row_hi.min(self.frame_height_px as i64);
        top >= row_lo && top + height as i64 <= row_hi
    }
}

/// Square side in pixels for a cluster extent of `extent_deg` degrees:
/// `round(extent * alpha * W / 360)` clamped to `[min_side, W]`.
pub fn side_from_extent(extent_deg: f64, cfg: &RoiConfig) -> u32 {
    let raw = (extent_deg * cfg.alpha * cfg.frame_width_px as f64 / 360.0).round();
    let raw = if raw < 0.0 { 0 } else { raw as u64 };
    (raw.clamp(cfg.min_side_px as u64, cfg.frame_width_px as u64)) as u32
}

/// Build the ROI for a moving cluster: project its centroid into the camera
/// system, map onto the panorama scale, and size the square from the
/// cluster's angular extent.
pub fn roi_from_cluster(
    cluster: &ClusterResult,
    frame_index: usize,
    geom: &GeometryConfig,
    cfg: &RoiConfig,
) -> Result<RoiSpec> {
    cfg.validate()?;
    let (aoa_cam, _range_cam) =
        project_to_camera(cluster.centroid_aoa_deg, cluster.centroid_range_m, geom)?;
    let theta = to_panorama_angle(aoa_cam, geom);
    let w = cfg.frame_width_px;
    let center_col = (theta / 360.0 * w as f64).round() as i64;
    let side = side_from_extent(cluster.extent_aoa_deg, cfg);
    let center_row = cfg.center_row();
    Ok(RoiSpec {
        frame_index,
        center_theta_deg: theta,
        center_row_px: center_row,
        side_px: side,
        left_px: center_col - side as i64 / 2,
        top_px: center_row - side as i64 / 2,
        frame_width_px: w,
        frame_height_px: cfg.frame_height_px,
    })
}

/// Cylinder-aware column overlap of two regions, in pixels.
fn column_overlap(a: &RoiSpec, b: &RoiSpec) -> u32 {
    let w = a.frame_width_px as i64;
    let mut best = 0i64;
    for shift in [-w, 0, w] {
        let l = a.left_px.max(b.left_px + shift);
        let r = (a.left_px + a.side_px as i64).min(b.left_px + shift + b.side_px as i64);
        best = best.max(r - l);
    }
    best.max(0) as u32
}

fn row_overlap(a: &RoiSpec, b: &RoiSpec) -> u32 {
    let l = a.top_px.max(b.top_px);
    let r = (a.top_px + a.side_px as i64).min(b.top_px + b.side_px as i64);
    (r - l).max(0) as u32
}

/// Bounding square of two overlapping regions. The square is grown from the
/// exact bounding box so both inputs stay fully covered.
fn bounding(a: &RoiSpec, b: &RoiSpec, cfg: &RoiConfig) -> RoiSpec {
    let w = a.frame_width_px as i64;
    // place b on the unwrapped column axis nearest to a
    let center_a = a.left_px + a.side_px as i64 / 2;
    let center_b = b.left_px + b.side_px as i64 / 2;
    let mut b_left = b.left_px;
    let mut best = (center_b - center_a).abs();
    for shift in [-w, w] {
        if (center_b + shift - center_a).abs() < best {
            best = (center_b + shift - center_a).abs();
            b_left = b.left_px + shift;
        }
    }
    let left = a.left_px.min(b_left);
    let right = (a.left_px + a.side_px as i64).max(b_left + b.side_px as i64);
    let top = a.top_px.min(b.top_px);
    let bottom = (a.top_px + a.side_px as i64).max(b.top_px + b.side_px as i64);
    let width = right - left;
    let height = bottom - top;
    let side = (width.max(height) as u64).clamp(1, a.frame_width_px as u64) as i64;
    let new_left = left - (side - width).max(0) / 2;
    let new_top = top - (side - height).max(0) / 2;
    let center_col = new_left + side / 2;
    let theta = (center_col as f64 / a.frame_width_px as f64 * 360.0).rem_euclid(360.0);
    RoiSpec {
        frame_index: a.frame_index,
        center_theta_deg: theta,
        center_row_px: new_top + side / 2,
        side_px: side as u32,
        left_px: new_left,
        top_px: new_top,
        frame_width_px: cfg.frame_width_px,
        frame_height_px: cfg.frame_height_px,
    }
}

/// Merge regions that overlap by at least half of the smaller side (in both
/// axes) into their bounding square, repeating until stable. Avoids
/// transmitting duplicated pixels for nearby targets.
pub fn merge_rois(mut rois: Vec<RoiSpec>, cfg: &RoiConfig) -> Vec<RoiSpec> {
    loop {
        let mut merged_any = false;
        'outer: for i in 0..rois.len() {
            for j in (i + 1)..rois.len() {
                let smaller = rois[i].side_px.min(rois[j].side_px);
                let needed = smaller.div_ceil(2);
                if column_overlap(&rois[i], &rois[j]) >= needed
                    && row_overlap(&rois[i], &rois[j]) >= needed
                {
                    let b = rois.remove(j);
                    let a = rois.remove(i);
                    rois.push(bounding(&a, &b, cfg));
                    merged_any = true;
                    break 'outer;
                }
            }
        }
        if !merged_any {
            return rois;
        }
    }
}

/// Cut the region out of a full frame. Columns wrap around the seam, rows
/// are clipped; the output is `side_px` wide and `clipped_height` tall, and
/// every output pixel is a verbatim copy of its source pixel.
pub fn crop(frame: &Frame, roi: &RoiSpec) -> Result<Frame> {
    if frame.width_px != roi.frame_width_px || frame.height_px != roi.frame_height_px {
        return Err(Error::Consistency(format!(
            "frame is {}x{} but the ROI was computed for {}x{}",
            frame.width_px, frame.height_px, roi.frame_width_px, roi.frame_height_px
        )));
    }
    if roi.side_px > frame.width_px {
        return Err(Error::Consistency(
            "ROI side exceeds the frame width".into(),
        ));
    }
    let height = roi.clipped_height(frame.height_px);
    let top = roi.clipped_top();
    let mut out = Frame::filled(roi.frame_index, frame.timestamp_s, roi.side_px, height, [0, 0, 0]);
    let w = frame.width_px as i64;
    for r in 0..height {
        let src_row = (top + r as i64) as u32;
        for c in 0..roi.side_px {
            let src_col = (roi.left_px + c as i64).rem_euclid(w) as u32;
            out.set_pixel(r, c, frame.pixel(src_row, src_col));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::EstimatePoint;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cfg(alpha: f64, w: u32, h: u32) -> RoiConfig {
        RoiConfig {
            alpha,
            frame_width_px: w,
            frame_height_px: h,
            min_side_px: 8,
            center_row_px: None,
        }
    }

    fn cluster(centroid_aoa: f64, centroid_range: f64, extent: f64) -> ClusterResult {
        let members = vec![
            EstimatePoint {
                aoa_deg: centroid_aoa - extent / 2.0,
                range_m: centroid_range,
                power: 1.0,
            },
            EstimatePoint {
                aoa_deg: centroid_aoa + extent / 2.0,
                range_m: centroid_range,
                power: 1.0,
            },
        ];
        ClusterResult {
            members,
            centroid_aoa_deg: centroid_aoa,
            centroid_range_m: centroid_range,
            extent_aoa_deg: extent,
        }
    }

    #[test]
    fn side_formula_reference_points() {
        let c = cfg(2.0, 9600, 4800);
        assert_eq!(side_from_extent(18.675, &c), 996);
        assert_eq!(side_from_extent(0.0, &c), 8); // clamp floor
        assert_eq!(side_from_extent(200.0, &c), 9600); // clamp ceiling
    }

    #[test]
    fn side_formula_exact_within_clamp() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = rng.gen_range(0.0..90.0);
            let alpha = rng.gen_range(0.5..4.0);
            let w = rng.gen_range(100..20_000);
            let c = cfg(alpha, w, w / 2);
            let expected = (a * alpha * w as f64 / 360.0).round();
            let side = side_from_extent(a, &c);
            if expected >= c.min_side_px as f64 && expected <= w as f64 {
                assert_eq!(side as f64, expected, "a={a} alpha={alpha} w={w}");
            } else {
                assert!(side >= c.min_side_px && side <= w);
            }
        }
    }

    proptest! {
        #[test]
        fn side_monotone_in_alpha_and_extent(
            a1 in 0.0f64..60.0,
            da in 0.0f64..30.0,
            alpha1 in 0.25f64..3.0,
            dalpha in 0.0f64..2.0,
        ) {
            let w = 9600;
            let lo = cfg(alpha1, w, 4800);
            let hi = cfg(alpha1 + dalpha, w, 4800);
            prop_assert!(side_from_extent(a1 + da, &lo) >= side_from_extent(a1, &lo));
            prop_assert!(side_from_extent(a1, &hi) >= side_from_extent(a1, &lo));
        }
    }

    #[test]
    fn roi_centered_from_cluster() {
        let geom = GeometryConfig::new(0.0, 0.0, 0.0).unwrap();
        let c = cfg(2.0, 9600, 4800);
        let roi = roi_from_cluster(&cluster(45.0, 5.0, 4.5), 3, &geom, &c).unwrap();
        // identity projection, theta = 45 -> center col 1200
        assert_eq!(roi.frame_index, 3);
        assert!((roi.center_theta_deg - 45.0).abs() < 1e-9);
        assert_eq!(roi.side_px, side_from_extent(4.5, &c));
        assert_eq!(roi.left_px, 1200 - roi.side_px as i64 / 2);
        assert_eq!(roi.center_row_px, 2400);
        // degenerate centroid propagates the geometry error
        assert!(roi_from_cluster(&cluster(0.0, 0.0, 1.0), 0, &geom, &c).is_err());
    }

    fn patterned(w: u32, h: u32) -> Frame {
        let mut f = Frame::filled(0, 0.0, w, h, [0, 0, 0]);
        for row in 0..h {
            for col in 0..w {
                f.set_pixel(
                    row,
                    col,
                    [(row % 251) as u8, (col % 253) as u8, ((col / 253) % 256) as u8],
                );
            }
        }
        f
    }

    fn roi_at(theta: f64, side: u32, w: u32, h: u32) -> RoiSpec {
        let center_col = (theta / 360.0 * w as f64).round() as i64;
        let center_row = h as i64 / 2;
        RoiSpec {
            frame_index: 0,
            center_theta_deg: theta,
            center_row_px: center_row,
            side_px: side,
            left_px: center_col - side as i64 / 2,
            top_px: center_row - side as i64 / 2,
            frame_width_px: w,
            frame_height_px: h,
        }
    }

    #[test]
    fn contiguous_crop() {
        let frame = patterned(960, 480);
        let roi = roi_at(180.0, 100, 960, 480);
        let out = crop(&frame, &roi).unwrap();
        assert_eq!((out.width_px, out.height_px), (100, 100));
        for r in 0..100 {
            for c in 0..100 {
                let src = frame.pixel((roi.clipped_top() + r as i64) as u32, (roi.left_px + c as i64) as u32);
                assert_eq!(out.pixel(r, c), src);
            }
        }
    }

    #[test]
    fn seam_crop_wraps_columns() {
        // centered at 0.5 deg with side 400 on a 9600-wide frame: columns
        // [9413, 9600) then [0, 213)
        let w = 9600u32;
        let frame = patterned(w, 64);
        let mut roi = roi_at(0.5, 400, w, 64);
        roi.top_px = 0;
        assert_eq!(roi.left_px, -187);
        let out = crop(&frame, &roi).unwrap();
        assert_eq!(out.width_px, 400);
        // index-by-index modular copy oracle
        for r in 0..out.height_px {
            for c in 0..400u32 {
                let src_col = ((-187i64 + c as i64).rem_euclid(w as i64)) as u32;
                assert_eq!(out.pixel(r, c), frame.pixel(r, src_col), "r={r} c={c}");
            }
        }
        assert_eq!(
            ((-187i64).rem_euclid(w as i64)) as u32,
            w - 187,
            "first source column"
        );
    }

    #[test]
    fn vertical_clipping_preserves_width() {
        let frame = patterned(960, 200);
        let mut roi = roi_at(90.0, 160, 960, 200);
        roi.top_px = -40; // sticks out over the top edge
        let out = crop(&frame, &roi).unwrap();
        assert_eq!(out.width_px, 160);
        assert_eq!(out.height_px, 120);
        assert_eq!(out.pixel(0, 0), frame.pixel(0, roi.left_px as u32));
    }

    #[test]
    fn crop_dimension_mismatch_is_an_error() {
        let frame = patterned(960, 480);
        let roi = roi_at(10.0, 50, 480, 480);
        assert!(matches!(crop(&frame, &roi), Err(Error::Consistency(_))));
    }

    #[test]
    fn crop_commutes_with_column_rolls() {
        let w = 360u32;
        let frame = patterned(w, 40);
        let side = 50u32;
        let base = roi_at(10.0, side, w, 40);
        let out_a = crop(&frame, &base).unwrap();
        for k in [1i64, 17, 200] {
            // roll the frame right by k columns and shift the ROI with it
            let mut rolled = Frame::filled(0, 0.0, w, 40, [0, 0, 0]);
            for row in 0..40 {
                for col in 0..w {
                    let src = ((col as i64 - k).rem_euclid(w as i64)) as u32;
                    rolled.set_pixel(row, col, frame.pixel(row, src));
                }
            }
            let mut shifted = base;
            shifted.left_px += k;
            shifted.center_theta_deg = (shifted.center_theta_deg + k as f64 / w as f64 * 360.0).rem_euclid(360.0);
            let out_b = crop(&rolled, &shifted).unwrap();
            assert_eq!(out_a.pixels, out_b.pixels, "roll {k}");
        }
    }

    #[test]
    fn merge_coalesces_heavy_overlap() {
        let c = cfg(2.0, 960, 480);
        let a = roi_at(100.0, 100, 960, 480);
        let b = roi_at(110.0, 100, 960, 480); // 10 deg = ~27 px apart
        let merged = merge_rois(vec![a, b], &c);
        assert_eq!(merged.len(), 1);
        for orig in [a, b] {
            assert!(merged[0].contains_rect(
                orig.left_px,
                orig.clipped_top(),
                orig.side_px,
                orig.clipped_height(480)
            ));
        }
        // far apart: no merge
        let d = roi_at(300.0, 100, 960, 480);
        assert_eq!(merge_rois(vec![a, d], &c).len(), 2);
    }

    #[test]
    fn merge_handles_seam_straddlers() {
        let c = cfg(2.0, 960, 480);
        let a = roi_at(1.0, 80, 960, 480); // left is negative
        let b = roi_at(357.0, 80, 960, 480);
        assert!(a.left_px < 0);
        let merged = merge_rois(vec![a, b], &c);
        assert_eq!(merged.len(), 1);
        for orig in [a, b] {
            assert!(merged[0].contains_rect(
                orig.left_px,
                orig.clipped_top(),
                orig.side_px,
                orig.clipped_height(480)
            ));
        }
    }

    #[test]
    fn contains_rect_respects_the_seam() {
        let roi = roi_at(0.5, 400, 9600, 4800);
        // box inside the wrapped span
        assert!(roi.contains_rect(9500, 2300, 80, 80));
        assert!(roi.contains_rect(-100, 2300, 80, 80));
        assert!(roi.contains_rect(100, 2300, 80, 80));
        // box crossing past the right edge of the ROI
        assert!(!roi.contains_rect(180, 2300, 80, 80));
        // box vertically outside
        assert!(!roi.contains_rect(100, 10, 80, 80));
        // wider than the ROI
        assert!(!roi.contains_rect(0, 2300, 500, 80));
    }

    #[test]
    fn occupies_expected_bytes() {
        let roi = roi_at(180.0, 996, 9600, 4800);
        assert_eq!(roi.bytes(), 3 * 996 * 996);
        let mut clipped = roi;
        clipped.top_px = 4800 - 500;
        assert_eq!(clipped.bytes(), 3 * 996 * 500);
    }
}
