//! Planar primitives shared by every layout stage.
//!
//! All coordinates live in a y-up Cartesian frame (the same orientation as
//! longitude/latitude). Orientation tests go through Shewchuk's adaptive
//! predicates, so segment intersection answers are exact for the `f64`
//! inputs they are given.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translate(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

fn coord(p: Point) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

/// Sign of the turn `a -> b -> c`: positive for counter-clockwise, zero when
/// collinear. Exact.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

fn within_box(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);

    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(b0, b1, a0))
        || (d2 == 0.0 && within_box(b0, b1, a1))
        || (d3 == 0.0 && within_box(a0, a1, b0))
        || (d4 == 0.0 && within_box(a0, a1, b1))
}

/// True when the open interiors of the two segments cross at a single point.
pub fn segments_cross_properly(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

pub fn segment_segment_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    if segments_intersect(a0, a1, b0, b1) {
        return 0.0;
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

/// Axis-aligned rectangle. `min` is the lower-left corner in the y-up frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn centered(center: Point, half_width: f64, half_height: f64) -> Self {
        Self {
            min: Point::new(center.x - half_width, center.y - half_height),
            max: Point::new(center.x + half_width, center.y + half_height),
        }
    }

    pub fn point(p: Point) -> Self {
        Self { min: p, max: p }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Point {
        self.min.midpoint(self.max)
    }

    pub fn is_empty(&self) -> bool {
        !(self.min.x <= self.max.x && self.min.y <= self.max.y)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    fn contains_strictly(&self, p: Point) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    /// Corners counter-clockwise from the lower-left.
    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }

    pub fn edges(&self) -> [(Point, Point); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }

    /// Corners, edge midpoints and centre.
    pub fn probe_points(&self) -> [Point; 9] {
        let c = self.corners();
        [
            c[0],
            c[1],
            c[2],
            c[3],
            c[0].midpoint(c[1]),
            c[1].midpoint(c[2]),
            c[2].midpoint(c[3]),
            c[3].midpoint(c[0]),
            self.center(),
        ]
    }

    pub fn inset(&self, by: f64) -> Rect {
        let dx = by.min(0.5 * self.width()).max(0.0);
        let dy = by.min(0.5 * self.height()).max(0.0);
        Rect::new(self.min.translate(dx, dy), self.max.translate(-dx, -dy))
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            Point::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            Point::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(self.max)
    }

    /// Euclidean distance between the (filled) rectangle and a segment.
    pub fn distance_to_segment(&self, a: Point, b: Point) -> f64 {
        if self.contains(a) || self.contains(b) {
            return 0.0;
        }
        self.edges()
            .iter()
            .map(|&(e0, e1)| segment_segment_distance(e0, e1, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A simple polygon stored as an open ring (no repeated closing vertex).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a ring, dropping a repeated closing vertex and consecutive
    /// duplicates. No validation; see [`Polygon::validate`].
    pub fn new(mut vertices: Vec<Point>) -> Self {
        vertices.dedup();
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Point {
        let a = self.signed_area();
        if a == 0.0 {
            let n = self.vertices.len().max(1) as f64;
            let (sx, sy) = self
                .vertices
                .iter()
                .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            return Point::new(sx / n, sy / n);
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for (p, q) in self.edges() {
            let cross = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    pub fn bbox(&self) -> Rect {
        let mut r = Rect::point(self.vertices[0]);
        for &p in &self.vertices[1..] {
            r = r.union(&Rect::point(p));
        }
        r
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        self.edges()
            .any(|(a, b)| orient(a, b, p) == 0.0 && within_box(a, b, p))
    }

    /// Strict interior test; points on the boundary are outside.
    pub fn contains(&self, p: Point) -> bool {
        if self.on_boundary(p) {
            return false;
        }
        self.winds(p)
    }

    pub fn contains_or_on(&self, p: Point) -> bool {
        self.on_boundary(p) || self.winds(p)
    }

    // Even-odd crossing count using exact orientation for the edge side.
    fn winds(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let o = orient(a, b, p);
                // Upward edge: p left of it means the ray crosses.
                if (b.y > a.y && o > 0.0) || (b.y < a.y && o < 0.0) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// At least three vertices, non-zero area, no two non-adjacent edges
    /// touching and no adjacent edges folding back over each other.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 || self.area() == 0.0 || self.vertices.iter().any(|p| !p.is_finite()) {
            return false;
        }
        let edges: Vec<(Point, Point)> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a0, a1) = edges[i];
                let (b0, b1) = edges[j];
                if adjacent {
                    // Shared vertex is fine; overlap along a line is not.
                    let shared = if j == i + 1 { a1 } else { a0 };
                    let (other_a, other_b) = if j == i + 1 { (a0, b1) } else { (a1, b0) };
                    if orient(other_a, shared, other_b) == 0.0 {
                        let back = (other_a.x - shared.x) * (other_b.x - shared.x)
                            + (other_a.y - shared.y) * (other_b.y - shared.y);
                        if back > 0.0 {
                            return false;
                        }
                    }
                } else if segments_intersect(a0, a1, b0, b1) {
                    return false;
                }
            }
        }
        true
    }

    /// Largest-clearance interior point over a grid with the given step.
    pub fn grid_pole(&self, step: f64) -> Option<Point> {
        let bb = self.bbox();
        let step = step.max(f64::EPSILON * bb.diagonal().max(1.0));
        let nx = ((bb.width() / step).ceil() as usize).max(1);
        let ny = ((bb.height() / step).ceil() as usize).max(1);
        let mut best: Option<(f64, Point)> = None;
        for iy in 0..=ny {
            for ix in 0..=nx {
                let p = Point::new(
                    bb.min.x + bb.width() * ix as f64 / nx as f64,
                    bb.min.y + bb.height() * iy as f64 / ny as f64,
                );
                if !self.contains(p) {
                    continue;
                }
                let d = self.boundary_distance(p);
                if best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, p));
                }
            }
        }
        best.map(|(_, p)| p)
    }

    /// Default connection site: the centroid, or a grid pole of
    /// inaccessibility (1% of the bounding-box diagonal) when the centroid
    /// falls outside.
    pub fn interior_anchor(&self) -> Option<Point> {
        let c = self.centroid();
        if self.contains(c) {
            return Some(c);
        }
        let diag = self.bbox().diagonal();
        self.grid_pole(0.01 * diag)
            .or_else(|| self.grid_pole(0.001 * diag))
    }

    /// Filled rectangle lies inside the closed polygon.
    pub fn contains_rect(&self, rect: &Rect) -> bool {
        if !rect.probe_points().iter().all(|&p| self.contains_or_on(p)) {
            return false;
        }
        if self.vertices.iter().any(|&v| rect.contains_strictly(v)) {
            return false;
        }
        for (e0, e1) in rect.edges() {
            for (a, b) in self.edges() {
                if segments_cross_properly(e0, e1, a, b) {
                    return false;
                }
            }
        }
        true
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|p| p.translate(dx, dy)).collect(),
        }
    }

    /// Minimum distance between the two boundaries (zero when they touch).
    pub fn boundary_gap(&self, other: &Polygon) -> f64 {
        let mut best = f64::INFINITY;
        for (a0, a1) in self.edges() {
            for (b0, b1) in other.edges() {
                best = best.min(segment_segment_distance(a0, a1, b0, b1));
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.0),
        ])
    }

    #[test]
    fn closing_vertex_dropped() {
        assert_eq!(square().vertices().len(), 4);
        assert_eq!(square().area(), 1.0);
    }

    #[test]
    fn crossing_and_touching_segments() {
        let p = Point::new;
        assert!(segments_intersect(p(0., 0.), p(2., 2.), p(0., 2.), p(2., 0.)));
        assert!(segments_cross_properly(p(0., 0.), p(2., 2.), p(0., 2.), p(2., 0.)));
        // T-junction touches but does not cross properly.
        assert!(segments_intersect(p(0., 0.), p(2., 0.), p(1., 0.), p(1., 1.)));
        assert!(!segments_cross_properly(p(0., 0.), p(2., 0.), p(1., 0.), p(1., 1.)));
        // Collinear disjoint.
        assert!(!segments_intersect(p(0., 0.), p(1., 0.), p(2., 0.), p(3., 0.)));
        // Parallel.
        assert!(!segments_intersect(p(0., 0.), p(1., 1.), p(0., 1.), p(1., 2.)));
    }

    #[test]
    fn point_in_polygon_is_strict() {
        let sq = square();
        assert!(sq.contains(Point::new(0.5, 0.5)));
        assert!(!sq.contains(Point::new(1.0, 0.5)));
        assert!(sq.contains_or_on(Point::new(1.0, 0.5)));
        assert!(!sq.contains(Point::new(1.5, 0.5)));
    }

    #[test]
    fn bowtie_is_not_simple() {
        let bow = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ]);
        assert!(!bow.is_simple());
        assert!(square().is_simple());
        let flat = Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)]);
        assert!(!flat.is_simple());
    }

    #[test]
    fn concave_polygon_anchor_falls_back_to_pole() {
        // A "C" shape whose centroid sits in the notch.
        let c = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(3.0, 2.0),
            Point::new(3.0, 3.0),
            Point::new(0.0, 3.0),
        ]);
        assert!(c.is_simple());
        assert!(!c.contains(c.centroid()));
        let anchor = c.interior_anchor().unwrap();
        assert!(c.contains(anchor));
    }

    #[test]
    fn rect_containment_rejects_reflex_vertex() {
        let notch = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(4.0, 4.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 4.0),
        ]);
        assert!(notch.contains_rect(&Rect::new(Point::new(0.5, 0.5), Point::new(3.5, 1.5))));
        assert!(!notch.contains_rect(&Rect::new(Point::new(0.5, 0.5), Point::new(3.5, 3.0))));
        assert!(square().contains_rect(&Rect::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0))));
    }

    #[test]
    fn rect_segment_distance() {
        let r = Rect::new(Point::new(0.0, 0.0), Point::new(2.0, 2.0));
        assert_eq!(r.distance_to_segment(Point::new(-1.0, 5.0), Point::new(3.0, 5.0)), 3.0);
        assert_eq!(r.distance_to_segment(Point::new(-1.0, 1.0), Point::new(3.0, 1.0)), 0.0);
        assert_eq!(r.distance_to_segment(Point::new(1.0, 1.0), Point::new(1.5, 1.5)), 0.0);
    }
}
