//! Points of ℝ^N for N ≤ 3, stored with unused trailing coordinates set to zero.

/// A point (or vector) of ℝ^N. Components beyond the working dimension are zero.
pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

/// Unit vector along `a`, or `None` for the zero vector.
pub fn unit(a: &Point) -> Option<Point> {
    let n = norm(a);
    (n > 0.0).then(|| scale(a, 1.0 / n))
}

/// Builds a point from a slice of at most three coordinates.
pub fn from_slice(c: &[f64]) -> Point {
    let mut p = ORIGIN;
    for (dst, src) in p.iter_mut().zip(c) {
        *dst = *src;
    }
    p
}

/// Unit vector of the plane at angle `phi` from the first axis.
pub fn polar(phi: f64) -> Point {
    [phi.cos(), phi.sin(), 0.0]
}

/// Smallest pairwise distance, `f64::INFINITY` for fewer than two points.
pub fn min_pairwise_distance(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(dist(&points[i], &points[j]));
        }
    }
    best
}
