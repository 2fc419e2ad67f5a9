use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::savgol::savgol_filter;
use crate::geometry::{distance, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("a path needs at least two poses, got {0}")]
    TooFewPoses(usize),
    #[error("poses {0} and {} coincide", .0 + 1)]
    RepeatedPose(usize),
}

/// Ordered reference poses with distinct consecutive positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPath {
    poses: Vec<Pose>,
}

impl WaypointPath {
    pub fn new(poses: Vec<Pose>) -> Result<Self, PathError> {
        if poses.len() < 2 {
            return Err(PathError::TooFewPoses(poses.len()));
        }
        if let Some(i) = poses.windows(2).position(|w| w[0].distance_to(&w[1]) <= 1e-9) {
            return Err(PathError::RepeatedPose(i));
        }
        Ok(Self { poses })
    }

    /// Builds a path from positions, taking headings from the local tangent.
    pub fn from_points(points: &[[f64; 2]]) -> Result<Self, PathError> {
        let headings = tangent_headings(points);
        Self::new(
            points
                .iter()
                .zip(headings)
                .map(|(p, h)| Pose::new(p[0], p[1], h))
                .collect(),
        )
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.poses.iter().map(Pose::position).collect()
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn first(&self) -> &Pose {
        &self.poses[0]
    }

    pub fn last(&self) -> &Pose {
        &self.poses[self.poses.len() - 1]
    }

    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.poses.windows(2).map(|w| w[0].distance_to(&w[1]))
    }

    pub fn length(&self) -> f64 {
        self.gaps().sum()
    }

    /// Arc length at each pose, starting from zero.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.poses.len());
        s.push(0.0);
        for g in self.gaps() {
            s.push(s.last().copied().unwrap_or(0.0) + g);
        }
        s
    }

    /// Pose at arc length `s` (clamped to the path), interpolating position
    /// linearly and taking the heading of the containing segment.
    pub fn pose_at(&self, s: f64, arc: &[f64]) -> Pose {
        let total = *arc.last().expect("non-empty");
        let s = s.clamp(0.0, total);
        let seg = match arc.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(self.poses.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.poses.len() - 2),
        };
        let a = &self.poses[seg];
        let b = &self.poses[seg + 1];
        let t = ((s - arc[seg]) / (arc[seg + 1] - arc[seg])).clamp(0.0, 1.0);
        Pose::new(
            a.x + t * (b.x - a.x),
            a.y + t * (b.y - a.y),
            (b.y - a.y).atan2(b.x - a.x),
        )
    }
}

fn tangent_headings(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i.saturating_sub(1)];
            let b = points[(i + 1).min(n.saturating_sub(1))];
            (b[1] - a[1]).atan2(b[0] - a[0])
        })
        .collect()
}

/// Inserts evenly spaced points so no gap exceeds `v_ref · dt · w_dis`.
pub fn densify_path(path: &WaypointPath, v_ref: f64, dt: f64, w_dis: f64) -> WaypointPath {
    let threshold = v_ref * dt * w_dis;
    assert!(threshold > 0.0, "densify threshold must be positive");
    let mut out = Vec::with_capacity(path.len());
    out.push(path.poses[0]);
    for w in path.poses.windows(2) {
        let (a, b) = (w[0], w[1]);
        let gap = a.distance_to(&b);
        // The small slack keeps already-dense input unchanged.
        let pieces = ((gap / threshold) - 1e-9).ceil().max(1.0) as usize;
        let heading = (b.y - a.y).atan2(b.x - a.x);
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            out.push(Pose::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), heading));
        }
        out.push(b);
    }
    WaypointPath { poses: out }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub path: WaypointPath,
    /// False when the path was returned unchanged.
    pub filtered: bool,
}

/// Savitzky–Golay filters x and y independently and recomputes headings.
pub fn smooth_path(path: &WaypointPath, window: usize, order: usize) -> Smoothed {
    let unfiltered = || Smoothed {
        path: path.clone(),
        filtered: false,
    };
    let xs: Vec<f64> = path.poses.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = path.poses.iter().map(|p| p.y).collect();
    let (Ok(sx), Ok(sy)) = (savgol_filter(&xs, window, order), savgol_filter(&ys, window, order)) else {
        log::warn!("path of {} poses left unsmoothed (window {window}, order {order})", path.len());
        return unfiltered();
    };
    let points: Vec<[f64; 2]> = sx.into_iter().zip(sy).map(|(x, y)| [x, y]).collect();
    if points.windows(2).any(|w| distance(w[0], w[1]) <= 1e-9) {
        log::warn!("smoothing collapsed consecutive poses; keeping the raw path");
        return unfiltered();
    }
    Smoothed {
        path: WaypointPath::from_points(&points).expect("checked distinct"),
        filtered: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> WaypointPath {
        WaypointPath::new(xs.iter().map(|&x| Pose::new(x, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_degenerate_paths() {
        assert_eq!(WaypointPath::new(vec![Pose::new(0.0, 0.0, 0.0)]), Err(PathError::TooFewPoses(1)));
        let p = Pose::new(1.0, 1.0, 0.0);
        assert_eq!(WaypointPath::new(vec![p, p]), Err(PathError::RepeatedPose(0)));
    }

    #[test]
    fn densify_examples() {
        let out = densify_path(&line(&[0.0, 2.4]), 10.0, 0.1, 1.2);
        let xs: Vec<f64> = out.poses().iter().map(|p| p.x).collect();
        assert_eq!(xs.len(), 3);
        assert!((xs[1] - 1.2).abs() < 1e-12);

        let out = densify_path(&line(&[0.0, 3.0]), 10.0, 0.1, 1.2);
        assert_eq!(out.len(), 4);
        for g in out.gaps() {
            assert!((g - 1.0).abs() < 1e-12);
        }

        let dense = line(&[0.0, 1.0, 2.2, 3.0]);
        assert_eq!(densify_path(&dense, 10.0, 0.1, 1.2), dense);
    }

    #[test]
    fn arc_length_lookup() {
        let p = WaypointPath::from_points(&[[0.0, 0.0], [4.0, 0.0], [4.0, 3.0]]).unwrap();
        let arc = p.arc_lengths();
        assert_eq!(arc, vec![0.0, 4.0, 7.0]);
        let q = p.pose_at(5.5, &arc);
        assert!((q.x - 4.0).abs() < 1e-12 && (q.y - 1.5).abs() < 1e-12);
        assert!((q.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(p.pose_at(99.0, &arc).position(), [4.0, 3.0]);
        assert_eq!(p.pose_at(-1.0, &arc).position(), [0.0, 0.0]);
    }

    #[test]
    fn short_paths_are_left_alone() {
        let p = line(&[0.0, 1.0, 2.0]);
        let s = smooth_path(&p, 9, 3);
        assert!(!s.filtered);
        assert_eq!(s.path, p);
    }
}
