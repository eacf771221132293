//! Planar geometry: points, poses, oriented boxes, rays.
//!
//! Everything downstream (raycasting, collision filtering, IoU scoring)
//! reduces to these primitives. Conventions:
//!
//! - yaw is counter-clockwise from +x, normalized to (-pi, pi]
//! - box corners come out counter-clockwise starting at the front-left corner
//! - edge contact counts as intersection (conservative collision filter)
//! - intersection areas below [`AREA_EPS`] are treated as zero

use std::ops::{Add, Mul, Neg, Sub};

/// Intersection areas below this count as zero square meters. Keeps IoU
/// stable for barely-touching boxes.
pub const AREA_EPS: f64 = 1e-9;

/// 2D point or vector in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3D cross product; positive when `other` is
    /// counter-clockwise from `self`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Wraps an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % std::f64::consts::TAU;
    if r <= -std::f64::consts::PI {
        r += std::f64::consts::TAU;
    } else if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    r
}

/// Position plus heading in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x, in (-pi, pi].
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2 { x, y, yaw: normalize_angle(yaw) }
    }

    pub fn position(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Maps a point from this pose's local frame into the world frame.
    pub fn to_world(self, local: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(self.x + local.x * c - local.y * s, self.y + local.x * s + local.y * c)
    }

    /// Maps a world point into this pose's local frame.
    pub fn to_local(self, world: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        let d = world - self.position();
        Point2::new(d.x * c + d.y * s, -d.x * s + d.y * c)
    }

    /// Rotates a world-frame direction into this pose's local frame.
    pub fn dir_to_local(self, dir: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(dir.x * c + dir.y * s, -dir.x * s + dir.y * c)
    }
}

/// Rectangle with an orientation: `length` runs along the heading, `width`
/// across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Pose2,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Pose2, length: f64, width: f64) -> Self {
        OrientedBox { center, length, width }
    }

    pub fn from_parts(x: f64, y: f64, yaw: f64, length: f64, width: f64) -> Self {
        OrientedBox::new(Pose2::new(x, y, yaw), length, width)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Corner points, counter-clockwise, starting at the front-left corner
    /// (+length/2, +width/2 in the local frame).
    pub fn corners(&self) -> [Point2; 4] {
        let hl = self.length * 0.5;
        let hw = self.width * 0.5;
        [
            self.center.to_world(Point2::new(hl, hw)),
            self.center.to_world(Point2::new(-hl, hw)),
            self.center.to_world(Point2::new(-hl, -hw)),
            self.center.to_world(Point2::new(hl, -hw)),
        ]
    }

    /// Boundary-inclusive point membership.
    pub fn contains(&self, p: Point2) -> bool {
        let l = self.center.to_local(p);
        l.x.abs() <= self.length * 0.5 && l.y.abs() <= self.width * 0.5
    }
}

/// Half-line with a unit direction.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point2,
    pub direction: Point2,
}

impl Ray {
    /// Builds a ray, normalizing `direction`. Panics on a zero direction.
    pub fn new(origin: Point2, direction: Point2) -> Self {
        let n = direction.norm();
        assert!(n > 0.0, "ray direction must be nonzero");
        Ray { origin, direction: direction * (1.0 / n) }
    }

    pub fn from_angle(origin: Point2, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Ray { origin, direction: Point2::new(c, s) }
    }
}

fn project_onto(corners: &[Point2; 4], axis: Point2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in corners {
        let d = c.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Separating-axis test. Edge contact counts as intersecting, so this is a
/// conservative collision predicate.
pub fn obb_intersects(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let axes = [
        ca[0] - ca[1],
        ca[1] - ca[2],
        cb[0] - cb[1],
        cb[1] - cb[2],
    ];
    for axis in axes {
        let (a_lo, a_hi) = project_onto(&ca, axis);
        let (b_lo, b_hi) = project_onto(&cb, axis);
        if a_hi < b_lo || b_hi < a_lo {
            return false;
        }
    }
    true
}

/// Signed shoelace area, absolute value. Degenerate polygons give 0.
fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        sum += p.cross(q);
    }
    sum.abs() * 0.5
}

/// Intersection of segment (p, q) with the infinite line through (a, b).
/// Callers guarantee p and q are not both on the line.
fn line_intersect(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let ab = b - a;
    let pq = q - p;
    let t = (a - p).cross(ab) / pq.cross(ab);
    p + pq * t
}

/// Sutherland-Hodgman clip of a convex subject polygon by a counter-clockwise
/// convex clip polygon.
fn clip_polygon(subject: &[Point2], clip: &[Point2; 4]) -> Vec<Point2> {
    let mut output: Vec<Point2> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = edge.cross(cur - a) >= 0.0;
            let prev_in = edge.cross(prev - a) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersect(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersect(prev, cur, a, b));
            }
        }
    }
    output
}

fn box_key(b: &OrientedBox) -> [f64; 5] {
    [b.center.x, b.center.y, b.center.yaw, b.length, b.width]
}

/// Intersection-over-union of two oriented boxes via convex polygon clipping.
/// Symmetric in its arguments bit-for-bit: the pair is put into a canonical
/// order before clipping.
pub fn obb_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let ka = box_key(a);
    let kb = box_key(b);
    let a_first = ka
        .iter()
        .zip(kb.iter())
        .find_map(|(x, y)| match x.total_cmp(y) {
            std::cmp::Ordering::Equal => None,
            ord => Some(ord == std::cmp::Ordering::Less),
        })
        .unwrap_or(true);
    let (p, q) = if a_first { (a, b) } else { (b, a) };

    let pc = p.corners();
    let qc = q.corners();
    let inter = polygon_area(&clip_polygon(&pc, &qc));
    if inter < AREA_EPS {
        return 0.0;
    }
    let union = polygon_area(&pc) + polygon_area(&qc) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Nearest intersection of a ray with a box boundary within `max_range`.
/// A ray starting inside the box hits the exit edge. Returns (distance, hit
/// point).
pub fn ray_box_hit(ray: &Ray, b: &OrientedBox, max_range: f64) -> Option<(f64, Point2)> {
    let lo = b.center.to_local(ray.origin);
    let ld = b.center.dir_to_local(ray.direction);
    let o = [lo.x, lo.y];
    let d = [ld.x, ld.y];
    let half = [b.length * 0.5, b.width * 0.5];

    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for i in 0..2 {
        if d[i].abs() < 1e-12 {
            if o[i].abs() > half[i] {
                return None;
            }
        } else {
            let inv = 1.0 / d[i];
            let mut t1 = (-half[i] - o[i]) * inv;
            let mut t2 = (half[i] - o[i]) * inv;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            tmin = tmin.max(t1);
            tmax = tmax.min(t2);
            if tmin > tmax {
                return None;
            }
        }
    }
    if tmax < 0.0 {
        return None;
    }
    let t = if tmin >= 0.0 { tmin } else { tmax };
    if t > max_range {
        return None;
    }
    Some((t, ray.origin + ray.direction * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sq(x: f64, y: f64, side: f64) -> OrientedBox {
        OrientedBox::from_parts(x, y, 0.0, side, side)
    }

    #[test]
    fn corners_axis_aligned() {
        let b = sq(0.0, 0.0, 2.0);
        let c = b.corners();
        let expect = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        for (got, want) in c.iter().zip(expect) {
            assert_abs_diff_eq!(got.x, want.0, epsilon = 1e-12);
            assert_abs_diff_eq!(got.y, want.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn corners_square_rotation_symmetry() {
        let b = sq(0.0, 0.0, 2.0);
        let r = OrientedBox::from_parts(0.0, 0.0, std::f64::consts::FRAC_PI_2, 2.0, 2.0);
        // Same corner set, order rotated.
        for rc in r.corners() {
            assert!(
                b.corners().iter().any(|bc| bc.dist(rc) < 1e-9),
                "corner {rc:?} missing from the unrotated set"
            );
        }
    }

    #[test]
    fn corners_translated_rectangle() {
        let b = OrientedBox::from_parts(1.0, 0.0, 0.0, 4.0, 2.0);
        let c = b.corners();
        let expect = [(3.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (3.0, -1.0)];
        for (got, want) in c.iter().zip(expect) {
            assert_abs_diff_eq!(got.x, want.0, epsilon = 1e-12);
            assert_abs_diff_eq!(got.y, want.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn corner_centroid_is_center() {
        let b = OrientedBox::from_parts(3.2, -1.7, 0.83, 4.5, 1.9);
        let c = b.corners();
        let cx = c.iter().map(|p| p.x).sum::<f64>() / 4.0;
        let cy = c.iter().map(|p| p.y).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(cx, 3.2, epsilon = 1e-9);
        assert_abs_diff_eq!(cy, -1.7, epsilon = 1e-9);
    }

    #[test]
    fn iou_identity_is_exactly_one() {
        let b = OrientedBox::from_parts(2.0, 3.0, 0.7, 4.5, 1.9);
        assert_eq!(obb_iou(&b, &b), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = sq(0.0, 0.0, 1.0);
        let b = sq(100.0, 0.0, 1.0);
        assert_eq!(obb_iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_overlapping_unit_squares() {
        let a = sq(0.0, 0.0, 1.0);
        let b = sq(0.5, 0.0, 1.0);
        // overlap 0.5, union 1.5
        assert_abs_diff_eq!(obb_iou(&a, &b), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn iou_symmetric_bitwise() {
        let a = OrientedBox::from_parts(0.3, -0.2, 0.9, 3.0, 1.5);
        let b = OrientedBox::from_parts(1.1, 0.4, -0.4, 2.0, 2.0);
        assert_eq!(obb_iou(&a, &b).to_bits(), obb_iou(&b, &a).to_bits());
    }

    #[test]
    fn intersects_identity_and_touch() {
        let a = sq(0.0, 0.0, 1.0);
        assert!(obb_intersects(&a, &a));
        let touching = sq(1.0, 0.0, 1.0);
        assert!(obb_intersects(&a, &touching));
        let apart = sq(1.0 + 1e-6, 0.0, 1.0);
        assert!(!obb_intersects(&a, &apart));
    }

    #[test]
    fn touching_boxes_have_zero_iou() {
        let a = sq(0.0, 0.0, 1.0);
        let touching = sq(1.0, 0.0, 1.0);
        assert_eq!(obb_iou(&a, &touching), 0.0);
    }

    #[test]
    fn ray_hits_front_face() {
        let ray = Ray::from_angle(Point2::new(0.0, 0.0), 0.0);
        let b = OrientedBox::from_parts(5.0, 0.0, 0.0, 2.0, 2.0);
        let (t, p) = ray_box_hit(&ray, &b, 60.0).unwrap();
        assert_eq!(t, 4.0);
        assert_abs_diff_eq!(p.x, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ray_misses_offset_box() {
        let ray = Ray::from_angle(Point2::new(0.0, 0.0), 0.0);
        let b = OrientedBox::from_parts(0.0, 5.0, 0.0, 2.0, 2.0);
        assert!(ray_box_hit(&ray, &b, 60.0).is_none());
    }

    #[test]
    fn ray_from_inside_exits() {
        let ray = Ray::from_angle(Point2::new(1.0, 0.0), 0.0);
        let b = OrientedBox::from_parts(0.0, 0.0, 0.0, 4.0, 2.0);
        let (t, p) = ray_box_hit(&ray, &b, 60.0).unwrap();
        assert_eq!(t, 1.0);
        assert_abs_diff_eq!(p.x, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ray_range_cutoff() {
        let ray = Ray::from_angle(Point2::new(0.0, 0.0), 0.0);
        let b = OrientedBox::from_parts(5.0, 0.0, 0.0, 2.0, 2.0);
        assert!(ray_box_hit(&ray, &b, 3.9).is_none());
        assert!(ray_box_hit(&ray, &b, 4.0).is_some());
    }

    #[test]
    fn angle_normalization_range() {
        for a in [-7.0, -std::f64::consts::PI, 0.0, 3.0, 9.42, 100.0] {
            let n = normalize_angle(a);
            assert!(n > -std::f64::consts::PI && n <= std::f64::consts::PI, "{a} -> {n}");
        }
        assert_eq!(normalize_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_eq!(normalize_angle(-std::f64::consts::PI), std::f64::consts::PI);
    }

    #[test]
    fn local_world_round_trip() {
        let pose = Pose2::new(2.0, -1.0, 0.6);
        let p = Point2::new(3.3, 4.4);
        let back = pose.to_world(pose.to_local(p));
        assert_abs_diff_eq!(back.x, p.x, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y, p.y, epsilon = 1e-12);
    }
}
