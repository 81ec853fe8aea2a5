//! Rectangle geometry: axis-aligned rects for scene objects, oriented boxes
//! for the ego footprint, and the separating-axis overlap test shared by the
//! collision and time-to-collision checks.

use crate::geom::Pose;

/// Axis-aligned rectangle given by center and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Rect {
    pub fn new(cx: f64, cy: f64, hx: f64, hy: f64) -> Self {
        Self { cx, cy, hx, hy }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    pub fn to_obb(&self) -> Obb {
        Obb {
            cx: self.cx,
            cy: self.cy,
            half_len: self.hx,
            half_wid: self.hy,
            theta: 0.0,
        }
    }
}

/// Oriented box: `half_len` extends along the heading, `half_wid` across it.
#[derive(Debug, Clone, Copy)]
pub struct Obb {
    pub cx: f64,
    pub cy: f64,
    pub half_len: f64,
    pub half_wid: f64,
    pub theta: f64,
}

impl Obb {
    /// Footprint of a `length` x `width` body centered on `pose`.
    pub fn from_pose(pose: &Pose, length: f64, width: f64) -> Self {
        Self {
            cx: pose.x,
            cy: pose.y,
            half_len: 0.5 * length,
            half_wid: 0.5 * width,
            theta: pose.theta,
        }
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.theta.sin_cos();
        let lx = c * self.half_len;
        let ly = s * self.half_len;
        let wx = -s * self.half_wid;
        let wy = c * self.half_wid;
        [
            (self.cx + lx + wx, self.cy + ly + wy),
            (self.cx + lx - wx, self.cy + ly - wy),
            (self.cx - lx - wx, self.cy - ly - wy),
            (self.cx - lx + wx, self.cy - ly + wy),
        ]
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.theta.sin_cos();
        [(c, s), (-s, c)]
    }

    /// Separating-axis test over the four face normals of the two boxes.
    /// Touching boundaries count as overlap.
    pub fn overlaps(&self, other: &Obb) -> bool {
        self.separation_margin(other) <= 0.0
    }

    /// Largest gap over the four candidate axes: positive means separated by
    /// that distance along some axis, non-positive means overlapping with at
    /// least that penetration on every axis.
    pub fn separation_margin(&self, other: &Obb) -> f64 {
        let corners_a = self.corners();
        let corners_b = other.corners();
        let mut margin = f64::NEG_INFINITY;
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (lo_a, hi_a) = project(&corners_a, axis);
            let (lo_b, hi_b) = project(&corners_b, axis);
            let gap = (lo_b - hi_a).max(lo_a - hi_b);
            margin = margin.max(gap);
        }
        margin
    }
}

fn project(corners: &[(f64, f64); 4], axis: (f64, f64)) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(x, y) in corners {
        let d = x * axis.0 + y * axis.1;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}
