//! Projection of sensing-side (AoA, range) estimates into the camera
//! reference system, and mapping of camera angles onto the 360-degree
//! panorama scale.
//!
//! The sensing array (at x = A_x) and the panoramic camera (at x = B_x)
//! share their Y and Z coordinates, so the correction reduces to planar
//! trigonometry. All public angles are degrees, clockwise from boresight,
//! positive to the right; radians appear only inside trig evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative placement of sensing array, camera and transmitter panorama
/// anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Sensing array position on the shared X axis (m).
    pub nic_x_m: f64,
    /// Camera position on the shared X axis (m).
    pub camera_x_m: f64,
    /// |nic_x_m - camera_x_m|, stored redundantly for config files.
    pub nic_camera_distance_m: f64,
    /// Panorama angle of the transmitter in [0, 360).
    pub tx_panorama_deg: f64,
}

impl GeometryConfig {
    pub fn new(nic_x_m: f64, camera_x_m: f64, tx_panorama_deg: f64) -> Result<Self> {
        let cfg = Self {
            nic_x_m,
            camera_x_m,
            nic_camera_distance_m: (nic_x_m - camera_x_m).abs(),
            tx_panorama_deg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ab = (self.nic_x_m - self.camera_x_m).abs();
        if (self.nic_camera_distance_m - ab).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "nic/camera distance {} disagrees with |{} - {}|",
                self.nic_camera_distance_m, self.nic_x_m, self.camera_x_m
            )));
        }
        if !(0.0..360.0).contains(&self.tx_panorama_deg) {
            return Err(Error::Config(format!(
                "transmitter panorama angle must lie in [0, 360), got {}",
                self.tx_panorama_deg
            )));
        }
        Ok(())
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Project an (AoA, range) pair observed at the sensing array into the
/// camera reference system.
///
/// With the target at O, the array at A and the camera at B, the corrective
/// construction works on segment lengths: the target's lateral offset from
/// the array boresight is `OA sin|aoa|`, the device displacement `AB` is
/// added or removed according to which side the camera sits on
/// (`sgn(A_x - B_x)`) and which side the target is on (`sgn(aoa)`), and the
/// camera-side angle is recovered through the arctangent. The returned angle
/// keeps the input sign convention (positive = right of boresight); the
/// returned range is the camera-to-target distance.
///
/// `sgn(0) = 0`: a boresight target collapses the lateral correction, so the
/// pair is returned unchanged apart from the range staying `OA`.
pub fn project_to_camera(
    aoa_nic_deg: f64,
    range_nic_m: f64,
    cfg: &GeometryConfig,
) -> Result<(f64, f64)> {
    if range_nic_m <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    if aoa_nic_deg.abs() >= 90.0 {
        return Err(Error::BoresightDegenerate(aoa_nic_deg));
    }
    let aoa_rad = aoa_nic_deg.to_radians();
    let oc = range_nic_m * aoa_rad.sin().abs();
    let cd = cfg.nic_camera_distance_m;
    let bd = range_nic_m * aoa_rad.cos();
    let zeta_pos = sgn(cfg.nic_x_m - cfg.camera_x_m);
    let zeta_aoa = sgn(aoa_nic_deg);
    let od = oc + zeta_pos * zeta_aoa * cd;
    let obd_rad = (od / bd).atan();
    // hypot instead of od / sin(obd): identical when od != 0, finite at od = 0
    let ob = od.hypot(bd);
    let aoa_cam_deg = if zeta_aoa < 0.0 {
        -obd_rad.to_degrees()
    } else {
        obd_rad.to_degrees()
    };
    Ok((aoa_cam_deg, ob))
}

/// Map a camera-frame AoA onto the panorama angle scale:
/// `(aoa + tx_panorama) mod 360`, normalized to `[0, 360)`.
pub fn to_panorama_angle(aoa_cam_deg: f64, cfg: &GeometryConfig) -> f64 {
    let theta = (aoa_cam_deg + cfg.tx_panorama_deg).rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 when the argument is a tiny
    // negative number; fold it back.
    if theta >= 360.0 {
        0.0
    } else {
        theta
    }
}

/// Test-side reference: place the target explicitly in the plane and read the
/// camera-frame angle and distance off the coordinates.
///
/// The array sits at `(nic_x, 0)` with boresight along +Y; a target at range
/// `r` and AoA `a` (clockwise-positive toward +X) is at
/// `(nic_x + r sin a, r cos a)`.
pub fn cartesian_camera_view(
    aoa_nic_deg: f64,
    range_nic_m: f64,
    cfg: &GeometryConfig,
) -> (f64, f64) {
    let aoa_rad = aoa_nic_deg.to_radians();
    let target_x = cfg.nic_x_m + range_nic_m * aoa_rad.sin();
    let target_y = range_nic_m * aoa_rad.cos();
    let dx = target_x - cfg.camera_x_m;
    let dy = target_y;
    (dx.atan2(dy).to_degrees(), dx.hypot(dy))
}
