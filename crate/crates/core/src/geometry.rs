//! Rotated-rectangle primitives.
//!
//! Angles are in degrees throughout and are never normalized implicitly; use
//! [`OrientedBox::canonicalize`] when a stable representation is needed.
//! Polygons use the orientation with positive shoelace area, which is
//! counter-clockwise in a y-up frame (and clockwise on screen for y-down
//! image coordinates, matching the DOTA corner order).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid oriented box: {0}")]
    InvalidBox(String),
    #[error("point {index} is not finite")]
    NonFinitePoint { index: usize },
    #[error("empty point set")]
    EmptyPointSet,
    #[error("polygon is degenerate: {0} distinct non-collinear vertices")]
    DegeneratePolygon(usize),
    #[error("polygon is not convex")]
    NotConvex,
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> T {
        self.sub(o).norm()
    }
}

/// Rotated rectangle: center, width, height and rotation in degrees.
///
/// The `w` axis points along `(cos θ, sin θ)`, the `h` axis along `(-sin θ, cos θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox<T> {
    pub x_c: T,
    pub y_c: T,
    pub w: T,
    pub h: T,
    pub theta: T,
}

/// `sin`/`cos` of an angle in degrees, exact at multiples of 90°.
fn sin_cos_deg<T: Scalar>(deg: T) -> (T, T) {
    let quarter = deg / T::lit(90.0);
    if quarter == quarter.round() {
        let k = quarter.to_i64().map(|k| k.rem_euclid(4)).unwrap_or(0);
        let (z, o) = (T::zero(), T::one());
        return match k {
            0 => (z, o),
            1 => (o, z),
            2 => (z, -o),
            _ => (-o, z),
        };
    }
    deg.to_radians().sin_cos()
}

/// Maps `angle` into `[lo, lo + period)`.
fn wrap_angle<T: Scalar>(angle: T, lo: T, period: T) -> T {
    let mut t = angle - period * ((angle - lo) / period).floor();
    if t >= lo + period {
        t = t - period;
    }
    if t < lo {
        t = lo;
    }
    t
}

impl<T: Scalar> OrientedBox<T> {
    pub fn new(x_c: T, y_c: T, w: T, h: T, theta: T) -> Result<Self> {
        let b = Self { x_c, y_c, w, h, theta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.x_c, self.y_c, self.w, self.h, self.theta];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidBox(format!("non-finite field in {self:?}")));
        }
        if !(self.w > T::zero() && self.h > T::zero()) {
            return Err(GeometryError::InvalidBox(format!(
                "width and height must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Point2<T> {
        Point2::new(self.x_c, self.y_c)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// The four corners in positive-area order, starting at local `(-w/2, -h/2)`.
    pub fn corners(&self) -> [Point2<T>; 4] {
        let (s, c) = sin_cos_deg(self.theta);
        let half = T::lit(0.5);
        let (hw, hh) = (self.w * half, self.h * half);
        let local = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
        local.map(|(dx, dy)| Point2::new(self.x_c + dx * c - dy * s, self.y_c + dx * s + dy * c))
    }

    /// Equivalent representation with `w >= h` and `theta` in `[-90, 90)`.
    ///
    /// Squares additionally get `theta` in `[-45, 45)`.
    pub fn canonicalize(&self) -> Self {
        let mut out = *self;
        if out.h > out.w {
            std::mem::swap(&mut out.w, &mut out.h);
            out.theta = out.theta + T::lit(90.0);
        }
        out.theta = if out.w == out.h {
            wrap_angle(out.theta, T::lit(-45.0), T::lit(90.0))
        } else {
            wrap_angle(out.theta, T::lit(-90.0), T::lit(180.0))
        };
        out
    }

    /// True when both boxes have the same corner set within `tol`.
    pub fn same_geometry(&self, other: &Self, tol: T) -> bool {
        let mine = self.corners();
        let theirs = other.corners();
        mine.iter().all(|p| theirs.iter().any(|q| p.distance(*q) <= tol))
            && theirs.iter().all(|p| mine.iter().any(|q| p.distance(*q) <= tol))
    }

    fn ordering_key(&self) -> [T; 5] {
        [self.x_c, self.y_c, self.w, self.h, self.theta]
    }
}

/// Convex polygon with vertices in positive-area order and no collinear runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPolygon<T> {
    vertices: Vec<Point2<T>>,
}

/// Shoelace signed area; positive for counter-clockwise (y-up) order.
pub fn signed_area<T: Scalar>(pts: &[Point2<T>]) -> T {
    if pts.len() < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for (i, p) in pts.iter().enumerate() {
        let q = pts[(i + 1) % pts.len()];
        acc = acc + p.cross(q);
    }
    acc * T::lit(0.5)
}

/// Distance of `b` from the line through `a` and `c` (or from `a` when `a == c`).
fn line_distance<T: Scalar>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    let base = c.sub(a);
    let len = base.norm();
    if len <= T::EPS_GEOM {
        return b.distance(a);
    }
    base.cross(b.sub(a)).abs() / len
}

impl<T: Scalar> ConvexPolygon<T> {
    /// Builds a polygon from vertices in either orientation.
    ///
    /// Near-duplicate and collinear vertices (within `EPS_GEOM`) are merged.
    pub fn new(vertices: Vec<Point2<T>>) -> Result<Self> {
        if let Some(index) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinitePoint { index });
        }
        let mut v = vertices;
        v.dedup_by(|a, b| a.distance(*b) <= T::EPS_GEOM);
        while v.len() > 1 && v[0].distance(v[v.len() - 1]) <= T::EPS_GEOM {
            v.pop();
        }
        if signed_area(&v) < T::zero() {
            v.reverse();
        }
        loop {
            let n = v.len();
            if n < 3 {
                return Err(GeometryError::DegeneratePolygon(n));
            }
            let drop = (0..n).find(|&i| {
                let a = v[(i + n - 1) % n];
                let c = v[(i + 1) % n];
                line_distance(a, v[i], c) <= T::EPS_GEOM
            });
            match drop {
                Some(i) => {
                    v.remove(i);
                }
                None => break,
            }
        }
        let n = v.len();
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            if b.sub(a).cross(c.sub(b)) <= T::zero() {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(Self { vertices: v })
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices)
    }

    /// Inside or within `tol` of the boundary.
    pub fn contains(&self, p: Point2<T>, tol: T) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let e = b.sub(a);
            e.cross(p.sub(a)) / e.norm() >= -tol
        })
    }
}

pub fn obb_to_polygon<T: Scalar>(b: &OrientedBox<T>) -> Result<ConvexPolygon<T>> {
    b.validate()?;
    Ok(ConvexPolygon { vertices: b.corners().to_vec() })
}

/// Andrew's monotone chain. Returns the hull in positive-area order with
/// collinear points dropped; fewer than 3 points means a degenerate set.
pub fn convex_hull<T: Scalar>(points: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap_or(Ordering::Equal).then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal)));
    pts.dedup_by(|a, b| a.distance(*b) <= T::EPS_GEOM);
    if pts.len() < 3 {
        return pts;
    }
    let keeps_left_turn = |hull: &[Point2<T>], p: Point2<T>| {
        let o = hull[hull.len() - 2];
        let a = hull[hull.len() - 1];
        let ob = p.sub(o);
        ob.cross(a.sub(o)) < -T::EPS_GEOM * ob.norm()
    };
    let mut lower: Vec<Point2<T>> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && !keeps_left_turn(&lower, p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2<T>> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && !keeps_left_turn(&upper, p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn degenerate_rect<T: Scalar>(hull: &[Point2<T>]) -> OrientedBox<T> {
    let (mut a, mut b) = (hull[0], hull[0]);
    let mut best = T::zero();
    for (i, &p) in hull.iter().enumerate() {
        for &q in &hull[i + 1..] {
            let d = p.distance(q);
            if d > best {
                best = d;
                a = p;
                b = q;
            }
        }
    }
    let eps = T::EPS_GEOM;
    let half = T::lit(0.5);
    if best <= eps {
        log::warn!("min_area_rect: point set collapses to a single point");
        return OrientedBox { x_c: a.x, y_c: a.y, w: eps, h: eps, theta: T::zero() };
    }
    log::warn!("min_area_rect: collinear point set, returning a {eps}-thin box");
    let d = b.sub(a);
    OrientedBox {
        x_c: (a.x + b.x) * half,
        y_c: (a.y + b.y) * half,
        w: best,
        h: eps,
        theta: d.y.atan2(d.x).to_degrees(),
    }
}

/// Minimum-area enclosing rectangle via convex hull and rotating calipers.
///
/// The result is canonicalized (see [`OrientedBox::canonicalize`]).
/// Collinear or single-point inputs give an `EPS_GEOM`-thin box.
pub fn min_area_rect<T: Scalar>(points: &[Point2<T>]) -> Result<OrientedBox<T>> {
    if points.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    if let Some(index) = points.iter().position(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinitePoint { index });
    }
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Ok(degenerate_rect(&hull).canonicalize());
    }
    let n = hull.len();
    let at = |i: usize| hull[i % n];
    let (mut far, mut right, mut left) = (1usize, 1usize, 0usize);
    let mut best: Option<(T, OrientedBox<T>)> = None;
    for i in 0..n {
        let p = at(i);
        let e = at(i + 1).sub(p);
        let len = e.norm();
        let u = Point2::new(e.x / len, e.y / len);
        let nrm = Point2::new(-u.y, u.x);
        let proj_u = |k: usize| u.dot(at(k).sub(p));
        let proj_n = |k: usize| nrm.dot(at(k).sub(p));

        if right < i + 1 {
            right = i + 1;
        }
        for _ in 0..n {
            if proj_u(right + 1) > proj_u(right) {
                right += 1;
            } else {
                break;
            }
        }
        if far < right {
            far = right;
        }
        for _ in 0..n {
            if proj_n(far + 1) > proj_n(far) {
                far += 1;
            } else {
                break;
            }
        }
        if i == 0 || left < far {
            left = far;
        }
        for _ in 0..n {
            if proj_u(left + 1) < proj_u(left) {
                left += 1;
            } else {
                break;
            }
        }

        let (min_u, max_u, height) = (proj_u(left), proj_u(right), proj_n(far));
        let width = max_u - min_u;
        let area = width * height;
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let half = T::lit(0.5);
            let mid_u = (min_u + max_u) * half;
            let mid_n = height * half;
            let rect = OrientedBox {
                x_c: p.x + u.x * mid_u + nrm.x * mid_n,
                y_c: p.y + u.y * mid_u + nrm.y * mid_n,
                w: width,
                h: height,
                theta: u.y.atan2(u.x).to_degrees(),
            };
            best = Some((area, rect));
        }
    }
    let (_, rect) = best.expect("hull has at least three edges");
    Ok(rect.canonicalize())
}

/// Sutherland–Hodgman clipping of an arbitrary simple `subject` polygon by a
/// convex `clip` polygon. The output may contain repeated or collinear points.
pub fn clip_polygon<T: Scalar>(subject: &[Point2<T>], clip: &ConvexPolygon<T>) -> Vec<Point2<T>> {
    let mut output = subject.to_vec();
    let cv = clip.vertices();
    for (i, &a) in cv.iter().enumerate() {
        if output.is_empty() {
            break;
        }
        let edge = cv[(i + 1) % cv.len()].sub(a);
        let side = |p: Point2<T>| edge.cross(p.sub(a));
        let input = std::mem::take(&mut output);
        for (j, &cur) in input.iter().enumerate() {
            let prev = input[(j + input.len() - 1) % input.len()];
            let (dc, dp) = (side(cur), side(prev));
            if dc >= T::zero() {
                if dp < T::zero() {
                    output.push(lerp_at_zero(prev, cur, dp, dc));
                }
                output.push(cur);
            } else if dp >= T::zero() {
                output.push(lerp_at_zero(prev, cur, dp, dc));
            }
        }
    }
    output
}

fn lerp_at_zero<T: Scalar>(a: Point2<T>, b: Point2<T>, da: T, db: T) -> Point2<T> {
    let t = da / (da - db);
    Point2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

/// Intersection of two convex polygons, `None` when empty or degenerate
/// (touching edges or corners count as empty).
pub fn convex_intersection<T: Scalar>(a: &ConvexPolygon<T>, b: &ConvexPolygon<T>) -> Option<ConvexPolygon<T>> {
    let clipped = clip_polygon(a.vertices(), b);
    ConvexPolygon::new(clipped).ok().filter(|p| p.area() > T::zero())
}

/// Rotated intersection-over-union in `[0, 1]`; exactly symmetric in its arguments.
pub fn rotated_iou<T: Scalar>(a: &OrientedBox<T>, b: &OrientedBox<T>) -> T {
    debug_assert!(a.validate().is_ok() && b.validate().is_ok());
    if a == b {
        return T::one();
    }
    let (a, b) = match a.ordering_key().partial_cmp(&b.ordering_key()) {
        Some(Ordering::Greater) => (b, a),
        _ => (a, b),
    };
    let reach = |bx: &OrientedBox<T>| bx.w.hypot(bx.h) * T::lit(0.5);
    if a.center().distance(b.center()) > reach(a) + reach(b) {
        return T::zero();
    }
    let pa = ConvexPolygon { vertices: a.corners().to_vec() };
    let pb = ConvexPolygon { vertices: b.corners().to_vec() };
    let inter = convex_intersection(&pa, &pb).map(|p| p.area()).unwrap_or_else(T::zero);
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}
