//! Planar poses and oriented rectangles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A world-frame pose. Serialized as `[x, y, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl From<[f64; 3]> for Pose2D {
    fn from(v: [f64; 3]) -> Self {
        Pose2D::new(v[0], v[1], v[2])
    }
}

impl From<Pose2D> for [f64; 3] {
    fn from(p: Pose2D) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Rotates a parent-frame vector into the local frame.
    pub fn inverse_rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }

    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    /// `self ∘ other`: `other` expressed in this pose's frame, lifted to the parent.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let p = self.transform_point([other.x, other.y]);
        Pose2D::new(p[0], p[1], self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2D {
        let p = self.inverse_rotate([-self.x, -self.y]);
        Pose2D::new(p[0], p[1], -self.theta)
    }

    /// Pose of `other` relative to `self`.
    pub fn between(&self, other: &Pose2D) -> Pose2D {
        self.inverse().compose(other)
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A rectangle with a center pose and half-extents along its local axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Pose2D,
    pub half_extents: [f64; 2],
}

impl OrientedRect {
    pub fn new(center: Pose2D, half_extents: [f64; 2]) -> Self {
        Self {
            center,
            half_extents,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let l = self.center.inverse_transform_point(p);
        l[0].abs() <= self.half_extents[0] && l[1].abs() <= self.half_extents[1]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [hx, hy] = self.half_extents;
        [[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]].map(|c| self.center.transform_point(c))
    }

    /// Distance along a unit-direction ray to the first boundary crossing in
    /// front of the origin. Rays starting inside the rectangle report `None`.
    pub fn ray_entry(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
        let o = self.center.inverse_transform_point(origin);
        let d = self.center.inverse_rotate(dir);
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for axis in 0..2 {
            let h = self.half_extents[axis];
            if d[axis].abs() < 1e-15 {
                if o[axis].abs() > h {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[axis];
            let mut t0 = (-h - o[axis]) * inv;
            let mut t1 = (h - o[axis]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return None;
            }
        }
        (t_min > 0.0).then_some(t_min)
    }

    /// Distance from a point to the rectangle boundary.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let l = self.center.inverse_transform_point(p);
        let dx = l[0].abs() - self.half_extents[0];
        let dy = l[1].abs() - self.half_extents[1];
        if dx <= 0.0 && dy <= 0.0 {
            -dx.max(dy)
        } else {
            dx.max(0.0).hypot(dy.max(0.0))
        }
    }
}
