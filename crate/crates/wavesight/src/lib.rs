//! Wi-Fi sensing driven region-of-interest offloading.
//!
//! A panoramic camera that shares its wireless NIC with a sensing pipeline
//! can know, before encoding a single pixel, where in the scene something
//! moved. This crate implements that pipeline end-to-end on synthetic data:
//!
//! 1. [`channel`] synthesizes multipath channel frequency response samples
//!    from a parametric scene, with controllable noise and seeding.
//! 2. [`estimator`] recovers per-path (AoA, range, amplitude) via a joint
//!    2-D matched filter with successive interference cancellation.
//! 3. [`cluster`] groups per-frame estimates with DBSCAN and flags clusters
//!    whose centroid moved between frames.
//! 4. [`geometry`] projects sensing-side estimates into the camera reference
//!    system and onto the 360-degree panorama angle scale.
//! 5. [`roi`] converts moving clusters into square pixel regions, merges
//!    overlaps and crops them out of equirectangular frames (seam-aware).
//! 6. [`metrics`] accounts channel occupation and end-to-end latency for
//!    ROI offloading against full-frame and 640x640-tile baselines.
//! 7. [`scenario`] and [`pipeline`] generate waypoint-walk scenes, drive the
//!    whole chain and emit reports; [`io`] holds the file formats.
//!
//! The `examples/` directory has one runnable program per stage; the
//! `wavesight` binary wraps scenario generation and the full pipeline in a
//! small CLI.

pub mod channel;
pub mod cluster;
pub mod error;
pub mod estimator;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod roi;
pub mod scenario;

pub use error::{Error, Result};
