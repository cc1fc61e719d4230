//! DBSCAN clustering of per-frame (AoA, range) estimates and frame-to-frame
//! motion detection.
//!
//! The estimates harvested from the C/V CFR samples of one video frame are
//! clustered in a scaled feature space (degrees and meters are
//! incommensurable, so each axis is divided by a configurable scale). Noise
//! points are discarded; surviving clusters are matched against the previous
//! frame's centroids and a cluster is reported as moving when it is new or
//! its centroid displaced by more than the motion threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::PathEstimate;

/// One clustering input point: (AoA, range) with the extraction power
/// carried along (never used for distances).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatePoint {
    pub aoa_deg: f64,
    pub range_m: f64,
    pub power: f64,
}

impl From<&PathEstimate> for EstimatePoint {
    fn from(p: &PathEstimate) -> Self {
        Self {
            aoa_deg: p.aoa_deg,
            range_m: p.range_m,
            power: p.power(),
        }
    }
}

/// DBSCAN and tracking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Neighborhood radius in scaled feature space.
    pub eps: f64,
    /// Minimum neighborhood size (the point itself counts) for a core point.
    pub min_pts: usize,
    /// Degrees of AoA per feature-space unit.
    pub aoa_scale_deg: f64,
    /// Meters of range per feature-space unit.
    pub range_scale_m: f64,
    /// Centroid displacement (scaled space) above which a matched cluster is
    /// reported as moving.
    pub motion_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            eps: 1.0,
            min_pts: 4,
            aoa_scale_deg: 5.0,
            range_scale_m: 0.5,
            motion_threshold: 1.0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.min_pts < 1 {
            return Err(Error::Config("min_pts must be >= 1".into()));
        }
        if !(self.aoa_scale_deg > 0.0) || !(self.range_scale_m > 0.0) {
            return Err(Error::Config("feature scales must be positive".into()));
        }
        if self.motion_threshold < 0.0 {
            return Err(Error::Config("motion threshold must be >= 0".into()));
        }
        Ok(())
    }

    /// Euclidean distance between two points in scaled feature space.
    pub fn scaled_distance(&self, a: &EstimatePoint, b: &EstimatePoint) -> f64 {
        let da = (a.aoa_deg - b.aoa_deg) / self.aoa_scale_deg;
        let dr = (a.range_m - b.range_m) / self.range_scale_m;
        da.hypot(dr)
    }
}

/// A DBSCAN cluster with its centroid and AoA extent.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub members: Vec<EstimatePoint>,
    pub centroid_aoa_deg: f64,
    pub centroid_range_m: f64,
    /// Angular extent a: max member AoA minus min member AoA.
    pub extent_aoa_deg: f64,
}

impl ClusterResult {
    fn from_members(members: Vec<EstimatePoint>) -> Self {
        debug_assert!(!members.is_empty());
        let n = members.len() as f64;
        let centroid_aoa_deg = members.iter().map(|p| p.aoa_deg).sum::<f64>() / n;
        let centroid_range_m = members.iter().map(|p| p.range_m).sum::<f64>() / n;
        let min = members.iter().map(|p| p.aoa_deg).fold(f64::INFINITY, f64::min);
        let max = members
            .iter()
            .map(|p| p.aoa_deg)
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            members,
            centroid_aoa_deg,
            centroid_range_m,
            extent_aoa_deg: max - min,
        }
    }

    fn centroid_point(&self) -> EstimatePoint {
        EstimatePoint {
            aoa_deg: self.centroid_aoa_deg,
            range_m: self.centroid_range_m,
            power: 0.0,
        }
    }
}

/// A cluster whose location changed (or appeared) with respect to the
/// previous frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionEvent {
    pub frame_index: usize,
    pub cluster: ClusterResult,
    /// Scaled-space displacement from the matched previous centroid;
    /// `None` marks a cluster with no match (new target).
    pub displacement: Option<f64>,
}

/// DBSCAN over (AoA/aoa_scale, range/range_scale) with Euclidean distance.
///
/// Core points are found first, clusters are the connected components of the
/// core-to-core eps graph, and each border point joins the cluster of its
/// lowest-index core neighbor. Every input point lands in exactly one
/// cluster or in the noise list; clusters are ordered by their smallest
/// member index.
pub fn dbscan(
    points: &[EstimatePoint],
    cfg: &ClusterConfig,
) -> (Vec<ClusterResult>, Vec<EstimatePoint>) {
    let n = points.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    // eps-neighborhoods, self-inclusive
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if cfg.scaled_distance(&points[i], &points[j]) <= cfg.eps {
                neighbors[i].push(j);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= cfg.min_pts).collect();

    // connected components over core points
    const UNASSIGNED: usize = usize::MAX;
    let mut label = vec![UNASSIGNED; n];
    let mut next_label = 0usize;
    for start in 0..n {
        if !core[start] || label[start] != UNASSIGNED {
            continue;
        }
        let cluster_id = next_label;
        next_label += 1;
        let mut stack = vec![start];
        label[start] = cluster_id;
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if core[j] && label[j] == UNASSIGNED {
                    label[j] = cluster_id;
                    stack.push(j);
                }
            }
        }
    }

    // border points: non-core with at least one core neighbor; they join the
    // cluster of their lowest-index core neighbor
    for i in 0..n {
        if core[i] {
            continue;
        }
        if let Some(&j) = neighbors[i].iter().find(|&&j| core[j]) {
            label[i] = label[j];
        }
    }

    let mut clusters: Vec<Vec<EstimatePoint>> = vec![Vec::new(); next_label];
    let mut noise = Vec::new();
    for i in 0..n {
        if label[i] == UNASSIGNED {
            noise.push(points[i]);
        } else {
            clusters[label[i]].push(points[i]);
        }
    }
    let clusters = clusters
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(ClusterResult::from_members)
        .collect();
    (clusters, noise)
}

/// Compare current cluster centroids against the previous frame's.
///
/// Greedy nearest-neighbor matching in scaled space (closest pair first,
/// each cluster matched at most once). A current cluster produces a
/// [`MotionEvent`] when it is unmatched (new target) or its displacement
/// exceeds the motion threshold; static matched clusters emit nothing.
pub fn detect_motion(
    prev: &[ClusterResult],
    curr: &[ClusterResult],
    frame_index: usize,
    cfg: &ClusterConfig,
) -> Vec<MotionEvent> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * curr.len());
    for (pi, p) in prev.iter().enumerate() {
        for (ci, c) in curr.iter().enumerate() {
            let d = cfg.scaled_distance(&p.centroid_point(), &c.centroid_point());
            pairs.push((d, pi, ci));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut prev_used = vec![false; prev.len()];
    let mut curr_match: Vec<Option<f64>> = vec![None; curr.len()];
    for (d, pi, ci) in pairs {
        if !prev_used[pi] && curr_match[ci].is_none() {
            prev_used[pi] = true;
            curr_match[ci] = Some(d);
        }
    }

    let mut events = Vec::new();
    for (ci, c) in curr.iter().enumerate() {
        match curr_match[ci] {
            Some(d) if d > cfg.motion_threshold => events.push(MotionEvent {
                frame_index,
                cluster: c.clone(),
                displacement: Some(d),
            }),
            Some(_) => {}
            None => events.push(MotionEvent {
                frame_index,
                cluster: c.clone(),
                displacement: None,
            }),
        }
    }
    events
}

/// Static (AoA, range) landmarks estimated from an empty-scene calibration
/// capture; estimates matching any of them are treated as background.
#[derive(Debug, Clone, Default)]
pub struct Background {
    pub points: Vec<EstimatePoint>,
    /// Scaled-space match radius.
    pub match_eps: f64,
}

impl Background {
    pub fn matches(&self, p: &EstimatePoint, cfg: &ClusterConfig) -> bool {
        self.points
            .iter()
            .any(|b| cfg.scaled_distance(b, p) <= self.match_eps)
    }
}

/// Flatten the estimate lists of the C/V samples backing one video frame
/// into clustering points, dropping estimates that match the static
/// background when one is supplied.
pub fn frame_estimates(
    samples: &[Vec<PathEstimate>],
    background: Option<&Background>,
    cfg: &ClusterConfig,
) -> Vec<EstimatePoint> {
    samples
        .iter()
        .flatten()
        .map(EstimatePoint::from)
        .filter(|p| match background {
            Some(bg) => !bg.matches(p, cfg),
            None => true,
        })
        .collect()
}
