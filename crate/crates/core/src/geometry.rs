//! Planar geometry in the simulator frame.
//!
//! The frame follows the usual simulator convention: `x` forward, `y` to the
//! right, heading measured clockwise from `+x`. A positive lateral offset is
//! therefore to the right of a path, and a positive steering angle turns right.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }

    pub fn unit(heading: f64) -> Point {
        Point::new(heading.cos(), heading.sin())
    }

    /// Unit vector pointing to the right of `heading`.
    pub fn right_of(heading: f64) -> Point {
        Point::new(-heading.sin(), heading.cos())
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn forward(&self) -> Point {
        Point::unit(self.heading)
    }

    /// Expresses a world point in this pose's frame as (longitudinal, lateral-right).
    pub fn to_local(&self, p: Point) -> (f64, f64) {
        let d = p.sub(self.position());
        (d.dot(self.forward()), d.dot(Point::right_of(self.heading)))
    }
}

/// Wraps an angle into `(-PI, PI]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Eight-way label for a relative angle (positive to the right).
pub fn compass8(relative: f64) -> &'static str {
    const LABELS: [&str; 8] = [
        "forward",
        "forward-right",
        "right",
        "backward-right",
        "backward",
        "backward-left",
        "left",
        "forward-left",
    ];
    let a = wrap_angle(relative).rem_euclid(2.0 * PI);
    let sector = ((a + PI / 8.0) / (PI / 4.0)).floor() as usize % 8;
    LABELS[sector]
}

/// Oriented rectangle used for actor footprints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Point,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    pub fn new(pose: Pose, length: f64, width: f64) -> Self {
        Self {
            center: pose.position(),
            heading: pose.heading,
            half_length: length / 2.0,
            half_width: width / 2.0,
        }
    }

    /// Corners in order front-left, front-right, rear-right, rear-left.
    pub fn corners(&self) -> [Point; 4] {
        let f = Point::unit(self.heading);
        let r = Point::right_of(self.heading);
        let c = self.center;
        let (hl, hw) = (self.half_length, self.half_width);
        [
            c.add(f.scale(hl)).sub(r.scale(hw)),
            c.add(f.scale(hl)).add(r.scale(hw)),
            c.sub(f.scale(hl)).add(r.scale(hw)),
            c.sub(f.scale(hl)).sub(r.scale(hw)),
        ]
    }

    pub fn contains(&self, p: Point) -> bool {
        let d = p.sub(self.center);
        let lon = d.dot(Point::unit(self.heading));
        let lat = d.dot(Point::right_of(self.heading));
        lon.abs() <= self.half_length && lat.abs() <= self.half_width
    }

    /// Separating-axis overlap test.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let axes = [
            Point::unit(self.heading),
            Point::right_of(self.heading),
            Point::unit(other.heading),
            Point::right_of(other.heading),
        ];
        let a = self.corners();
        let b = other.corners();
        axes.iter().all(|axis| {
            let (amin, amax) = project_range(&a, *axis);
            let (bmin, bmax) = project_range(&b, *axis);
            amax >= bmin && bmax >= amin
        })
    }

    /// Minimum distance between the rectangle and a segment; zero when they touch.
    pub fn distance_to_segment(&self, a: Point, b: Point) -> f64 {
        if self.contains(a) || self.contains(b) {
            return 0.0;
        }
        let c = self.corners();
        let mut best = f64::INFINITY;
        for i in 0..4 {
            let (p, q) = (c[i], c[(i + 1) % 4]);
            best = best.min(segment_distance(p, q, a, b));
        }
        best
    }
}

fn project_range(pts: &[Point; 4], axis: Point) -> (f64, f64) {
    pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = p.dot(axis);
        (lo.min(v), hi.max(v))
    })
}

/// Closest point parameter on segment `ab` to `p`, clamped to `[0, 1]`.
pub fn segment_param(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return 0.0;
    }
    (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0)
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    p.dist(a.lerp(b, segment_param(p, a, b)))
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = p2.sub(p1).cross(q1.sub(p1));
    let d2 = p2.sub(p1).cross(q2.sub(p1));
    let d3 = q2.sub(q1).cross(p1.sub(q1));
    let d4 = q2.sub(q1).cross(p2.sub(q1));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

pub fn segment_distance(p1: Point, p2: Point, q1: Point, q2: Point) -> f64 {
    if segments_intersect(p1, p2, q1, q2) {
        return 0.0;
    }
    point_segment_distance(p1, q1, q2)
        .min(point_segment_distance(p2, q1, q2))
        .min(point_segment_distance(q1, p1, p2))
        .min(point_segment_distance(q2, p1, p2))
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the projected point.
    pub s: f64,
    pub point: Point,
    /// Signed distance, positive to the right of the path direction.
    pub lateral: f64,
    /// Unsigned distance from the query point to `point`.
    pub distance: f64,
    pub segment: usize,
    pub heading: f64,
    /// True when the foot of the perpendicular lies within the path extent.
    pub interior: bool,
}

/// Polyline with cached cumulative arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polyline {
    points: Vec<Point>,
    cumulative: Vec<f64>,
}

impl From<Vec<Point>> for Polyline {
    fn from(points: Vec<Point>) -> Self {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += p.dist(points[i - 1]);
            }
            cumulative.push(acc);
        }
        Self { points, cumulative }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn first(&self) -> Option<Point> {
        self.points.first().copied()
    }

    pub fn last(&self) -> Option<Point> {
        self.points.last().copied()
    }

    fn segment_at(&self, s: f64) -> usize {
        if self.points.len() < 2 {
            return 0;
        }
        let idx = self.cumulative.partition_point(|c| *c <= s);
        idx.saturating_sub(1).min(self.points.len() - 2)
    }

    /// Point at arc length `s`, extrapolating linearly past either end.
    pub fn point_at(&self, s: f64) -> Point {
        match self.points.len() {
            0 => Point::default(),
            1 => self.points[0],
            _ => {
                let i = self.segment_at(s);
                let (a, b) = (self.points[i], self.points[i + 1]);
                let seg = self.cumulative[i + 1] - self.cumulative[i];
                let t = if seg > 0.0 { (s - self.cumulative[i]) / seg } else { 0.0 };
                a.lerp(b, t)
            }
        }
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let i = self.segment_at(s);
        self.points[i + 1].sub(self.points[i]).heading()
    }

    pub fn project(&self, p: Point) -> Option<Projection> {
        if self.points.len() < 2 {
            return None;
        }
        let mut best: Option<Projection> = None;
        let last = self.points.len() - 2;
        for i in 0..=last {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let raw = {
                let ab = b.sub(a);
                let len2 = ab.dot(ab);
                if len2 == 0.0 {
                    0.0
                } else {
                    p.sub(a).dot(ab) / len2
                }
            };
            let t = raw.clamp(0.0, 1.0);
            let foot = a.lerp(b, t);
            let d = p.dist(foot);
            if best.map_or(true, |bp| d < bp.distance) {
                let heading = b.sub(a).heading();
                let lateral = p.sub(foot).dot(Point::right_of(heading));
                let seg_len = self.cumulative[i + 1] - self.cumulative[i];
                let interior = !((i == 0 && raw < 0.0) || (i == last && raw > 1.0));
                best = Some(Projection {
                    s: self.cumulative[i] + t * seg_len,
                    point: foot,
                    lateral: if d == 0.0 { 0.0 } else { lateral.signum() * d },
                    distance: d,
                    segment: i,
                    heading,
                    interior,
                });
            }
        }
        best
    }

    /// Samples the path from `s0` to `s1` every `spacing` meters (inclusive of `s1`).
    pub fn sample(&self, s0: f64, s1: f64, spacing: f64) -> Vec<Point> {
        let mut out = Vec::new();
        if s1 < s0 || spacing <= 0.0 {
            return out;
        }
        let mut s = s0;
        while s < s1 {
            out.push(self.point_at(s));
            s += spacing;
        }
        out.push(self.point_at(s1));
        out
    }

    /// Sub-path between two arc lengths, keeping interior vertices.
    pub fn slice(&self, s0: f64, s1: f64) -> Polyline {
        let mut pts = vec![self.point_at(s0)];
        for (p, c) in self.points.iter().zip(&self.cumulative) {
            if *c > s0 && *c < s1 {
                pts.push(*p);
            }
        }
        pts.push(self.point_at(s1));
        pts.dedup_by(|a, b| a.dist(*b) < 1e-9);
        Polyline::new(pts)
    }

    /// Concatenates, dropping a duplicated joint.
    pub fn extend(&mut self, other: &[Point]) {
        let mut pts = std::mem::take(&mut self.points);
        for p in other {
            if pts.last().map_or(true, |l| l.dist(*p) > 1e-6) {
                pts.push(*p);
            }
        }
        *self = Polyline::new(pts);
    }

    pub fn reversed(&self) -> Polyline {
        let mut pts = self.points.clone();
        pts.reverse();
        Polyline::new(pts)
    }

    /// Shifts every vertex by `offset` meters to the right of the local direction.
    pub fn offset(&self, offset: f64) -> Polyline {
        if self.points.len() < 2 || offset == 0.0 {
            return self.clone();
        }
        let n = self.points.len();
        let pts = (0..n)
            .map(|i| {
                let h = if i == 0 {
                    self.points[1].sub(self.points[0]).heading()
                } else if i == n - 1 {
                    self.points[n - 1].sub(self.points[n - 2]).heading()
                } else {
                    let h0 = self.points[i].sub(self.points[i - 1]).heading();
                    let h1 = self.points[i + 1].sub(self.points[i]).heading();
                    h0 + wrap_angle(h1 - h0) / 2.0
                };
                self.points[i].add(Point::right_of(h).scale(offset))
            })
            .collect();
        Polyline::new(pts)
    }
}
