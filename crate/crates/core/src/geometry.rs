//! Symmetric convex bodies, gauge norms, anisotropic distances and
//! neighbourhoods.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, Mask, Point};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ball { radius: f64 },
    Ellipse { semi_axes: [f64; 2], angle: f64 },
    Polygon { vertices: Vec<Point> },
}

/// A bounded, open, convex body symmetric about the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexBody {
    dim: usize,
    shape: Shape,
    #[serde(skip)]
    edges: Vec<(Point, f64)>,
}

impl ConvexBody {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidBody(format!("dimension {dim}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidBody(format!("radius {radius}")));
        }
        Ok(Self {
            dim,
            shape: Shape::Ball { radius },
            edges: Vec::new(),
        })
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(dim, 1.0).expect("unit ball")
    }

    /// Ellipse with semi-axis `a` along the direction at `angle` and `b`
    /// orthogonal to it.
    pub fn ellipse(a: f64, b: f64, angle: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && angle.is_finite()) {
            return Err(Error::InvalidBody(format!("semi-axes ({a}, {b})")));
        }
        Ok(Self {
            dim: 2,
            shape: Shape::Ellipse { semi_axes: [a, b], angle },
            edges: Vec::new(),
        })
    }

    /// Convex polygon from counterclockwise vertices closed under negation.
    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidBody(format!(
                "a symmetric polygon needs an even number (>= 4) of vertices, got {n}"
            )));
        }
        let scale = vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidBody("degenerate polygon".into()));
        }
        let tol = 1e-12 * scale.max(1.0);
        for v in &vertices {
            if !vertices.iter().any(|w| (w[0] + v[0]).abs() <= tol && (w[1] + v[1]).abs() <= tol) {
                return Err(Error::InvalidBody(format!("vertex ({}, {}) has no antipode", v[0], v[1])));
            }
        }
        let mut edges = Vec::with_capacity(n);
        for k in 0..n {
            let a = vertices[k];
            let b = vertices[(k + 1) % n];
            let c = vertices[(k + 2) % n];
            let turn = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if turn <= tol * scale {
                return Err(Error::InvalidBody(
                    "vertices are not in strictly convex counterclockwise order".into(),
                ));
            }
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len = ex.hypot(ey);
            let normal = [ey / len, -ex / len];
            let offset = normal[0] * a[0] + normal[1] * a[1];
            if offset <= 0.0 {
                return Err(Error::InvalidBody("origin is not interior".into()));
            }
            edges.push((normal, offset));
        }
        Ok(Self {
            dim: 2,
            shape: Shape::Polygon { vertices },
            edges,
        })
    }

    /// The square `[-s, s]^2`.
    pub fn square(s: f64) -> Result<Self> {
        Self::polygon(vec![[s, s], [-s, s], [-s, -s], [s, -s]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// `|x|_S = inf{t > 0 : x ∈ tS}`.
    pub fn gauge(&self, x: Point) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => {
                if self.dim == 1 {
                    x[0].abs() / radius
                } else {
                    x[0].hypot(x[1]) / radius
                }
            }
            Shape::Ellipse { semi_axes, angle } => {
                let (s, c) = angle.sin_cos();
                let p = c * x[0] + s * x[1];
                let q = -s * x[0] + c * x[1];
                ((p / semi_axes[0]).powi(2) + (q / semi_axes[1]).powi(2)).sqrt()
            }
            Shape::Polygon { .. } => self.edges.iter().map(|(n, d)| (n[0] * x[0] + n[1] * x[1]) / d).fold(0.0, f64::max),
        }
    }

    /// `sup{⟨y, v⟩ : y ∈ S}`.
    pub fn support(&self, v: Point) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => {
                if self.dim == 1 {
                    radius * v[0].abs()
                } else {
                    radius * v[0].hypot(v[1])
                }
            }
            Shape::Ellipse { semi_axes, angle } => {
                let (s, c) = angle.sin_cos();
                let p = c * v[0] + s * v[1];
                let q = -s * v[0] + c * v[1];
                ((p * semi_axes[0]).powi(2) + (q * semi_axes[1]).powi(2)).sqrt()
            }
            Shape::Polygon { vertices } => vertices.iter().map(|w| w[0] * v[0] + w[1] * v[1]).fold(0.0, f64::max),
        }
    }

    pub fn contains(&self, x: Point) -> bool {
        self.gauge(x) <= 1.0
    }

    /// Surface density `φ_ρ(v) = 2 sup{|⟨y, v⟩| : y ∈ S}`.
    pub fn phi_rho(&self, v: Point) -> f64 {
        2.0 * self.support(v)
    }

    /// Length of the chord `{t : tξ ∈ S}`.
    pub fn tau(&self, xi: &Direction) -> f64 {
        2.0 / self.gauge(xi.0)
    }

    /// Largest `|x|` over `S`.
    pub fn circumradius(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => *radius,
            Shape::Ellipse { semi_axes, .. } => semi_axes[0].max(semi_axes[1]),
            Shape::Polygon { vertices } => vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        }
    }

    /// Radius of the largest Euclidean ball centred at 0 inside `S`.
    pub fn inradius(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => *radius,
            Shape::Ellipse { semi_axes, .. } => semi_axes[0].min(semi_axes[1]),
            Shape::Polygon { .. } => self.edges.iter().map(|e| e.1).fold(f64::INFINITY, f64::min),
        }
    }

    /// Lebesgue measure `L^n(S)`.
    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => {
                if self.dim == 1 {
                    2.0 * radius
                } else {
                    std::f64::consts::PI * radius * radius
                }
            }
            Shape::Ellipse { semi_axes, .. } => std::f64::consts::PI * semi_axes[0] * semi_axes[1],
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                0.5 * (0..n)
                    .map(|k| {
                        let a = vertices[k];
                        let b = vertices[(k + 1) % n];
                        a[0] * b[1] - a[1] * b[0]
                    })
                    .sum::<f64>()
            }
        }
    }

    /// `max` over `samples` unit directions of `τ_ξ |⟨v, ξ⟩|`.
    pub fn phi_rho_dual(&self, v: Point, samples: usize) -> f64 {
        if self.dim == 1 {
            return self.tau(&Direction([1.0, 0.0])) * v[0].abs();
        }
        (0..samples)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / samples as f64;
                let xi = Direction([t.cos(), t.sin()]);
                self.tau(&xi) * (v[0] * xi.0[0] + v[1] * xi.0[1]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// A unit vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Direction(Point);

impl Direction {
    pub fn new(v: Point) -> Result<Self> {
        let n = v[0].hypot(v[1]);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDirection(n));
        }
        Ok(Self(v))
    }

    pub fn normalize(v: Point) -> Result<Self> {
        let n = v[0].hypot(v[1]);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidDirection(n));
        }
        Ok(Self([v[0] / n, v[1] / n]))
    }

    pub fn from_angle(theta: f64) -> Self {
        Self([theta.cos(), theta.sin()])
    }

    pub fn e1() -> Self {
        Self([1.0, 0.0])
    }

    pub fn e2() -> Self {
        Self([0.0, 1.0])
    }

    pub fn get(&self) -> Point {
        self.0
    }

    pub fn dot(&self, v: Point) -> f64 {
        self.0[0] * v[0] + self.0[1] * v[1]
    }

    /// The direction rotated by +90 degrees.
    pub fn perp(&self) -> Self {
        Self([-self.0[1], self.0[0]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub normal: Direction,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    /// Euclidean distance from `x` to the closed segment.
    pub fn distance(&self, x: Point) -> f64 {
        let (dx, dy) = (self.b[0] - self.a[0], self.b[1] - self.a[1]);
        let t = ((x[0] - self.a[0]) * dx + (x[1] - self.a[1]) * dy) / (dx * dx + dy * dy);
        let t = t.clamp(0.0, 1.0);
        (x[0] - self.a[0] - t * dx).hypot(x[1] - self.a[1] - t * dy)
    }
}

/// Finite union of non-crossing segments with unit normals.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct JumpPolyline {
    segments: Vec<Segment>,
}

impl JumpPolyline {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            let len = s.length();
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidJump("segment of zero length".into()));
            }
            Direction::new(s.normal.0)?;
            let t = [(s.b[0] - s.a[0]) / len, (s.b[1] - s.a[1]) / len];
            if s.normal.dot(t).abs() > 1e-9 {
                return Err(Error::InvalidJump("normal not orthogonal to segment".into()));
            }
        }
        for (i, s) in segments.iter().enumerate() {
            for r in &segments[i + 1..] {
                if segments_cross(s, r) {
                    return Err(Error::InvalidJump("segments cross".into()));
                }
            }
        }
        Ok(Self { segments })
    }

    /// Single segment from `a` to `b` with normal rotated +90 degrees from
    /// `b - a`.
    pub fn segment(a: Point, b: Point) -> Result<Self> {
        let t = Direction::normalize([b[0] - a[0], b[1] - a[1]]).map_err(|_| Error::InvalidJump("segment of zero length".into()))?;
        Self::new(vec![Segment { a, b, normal: t.perp() }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// `∫_K φ_ρ(ν) dH^1`.
    pub fn anisotropic_length(&self, body: &ConvexBody) -> f64 {
        self.segments.iter().map(|s| s.length() * body.phi_rho(s.normal.0)).sum()
    }

    /// Points along every segment at spacing at most `spacing`, endpoints
    /// included.
    pub fn sample(&self, spacing: f64) -> Vec<Point> {
        let mut pts = Vec::new();
        for s in &self.segments {
            let n = (s.length() / spacing).ceil().max(1.0) as usize;
            for k in 0..=n {
                let t = k as f64 / n as f64;
                pts.push([s.a[0] + t * (s.b[0] - s.a[0]), s.a[1] + t * (s.b[1] - s.a[1])]);
            }
        }
        pts
    }
}

fn segments_cross(s: &Segment, r: &Segment) -> bool {
    let orient = |p: Point, q: Point, x: Point| (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
    let shared = |p: Point| p == r.a || p == r.b;
    if shared(s.a) || shared(s.b) {
        return false;
    }
    let d1 = orient(s.a, s.b, r.a);
    let d2 = orient(s.a, s.b, r.b);
    let d3 = orient(r.a, r.b, s.a);
    let d4 = orient(r.a, r.b, s.b);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    // Collinear overlap.
    if d1 == 0.0 && d2 == 0.0 {
        let on = |p: Point, a: Point, b: Point| {
            p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
        };
        return on(r.a, s.a, s.b) || on(r.b, s.a, s.b) || on(s.a, r.a, r.b);
    }
    false
}

/// `min_{y ∈ K} |x − y|_S` over a finite sample.
pub fn dist_s(body: &ConvexBody, x: Point, targets: &[Point]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyTarget);
    }
    Ok(targets
        .iter()
        .map(|y| body.gauge([x[0] - y[0], x[1] - y[1]]))
        .fold(f64::INFINITY, f64::min))
}

/// Nodal `dist_S(·, K)` truncated at `cap`: values above `cap` are reported
/// as `+∞`.
///
/// Each target only visits nodes in the Euclidean box of half-width
/// `R_S · cap`, which contains every node within gauge distance `cap`.
pub fn distance_field(body: &ConvexBody, grid: &GridDomain, targets: &[Point], cap: f64) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let h = grid.spacing();
    let lo = grid.lo();
    let [nx, ny] = grid.counts();
    let reach = body.circumradius() * cap;
    let mut out = vec![f64::INFINITY; grid.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let y = grid.node(0, j)[1];
        for t in targets {
            if grid.dim() == 2 && (t[1] - y).abs() > reach {
                continue;
            }
            let first = ((t[0] - reach - lo[0]) / h - 0.5).floor();
            let last = ((t[0] + reach - lo[0]) / h - 0.5).floor() + 2.0;
            let i0 = first.clamp(0.0, nx as f64) as usize;
            let i1 = last.clamp(0.0, nx as f64) as usize;
            for (i, slot) in row.iter_mut().enumerate().take(i1).skip(i0) {
                let x = grid.node(i, j);
                let d = body.gauge([x[0] - t[0], x[1] - t[1]]);
                if d <= cap && d < *slot {
                    *slot = d;
                }
            }
        }
    });
    debug_assert_eq!(out.len(), nx * ny);
    Ok(out)
}

/// Targets for distance queries against a polyline, sampled at half the
/// grid spacing.
pub fn polyline_targets(k: &JumpPolyline, grid: &GridDomain) -> Vec<Point> {
    k.sample(0.5 * grid.spacing())
}

/// Node centres of a mask, as distance targets.
pub fn mask_targets(mask: &Mask) -> Vec<Point> {
    let g = mask.grid();
    (0..g.len()).filter(|&k| mask.get(k)).map(|k| g.node_at(k)).collect()
}

/// Grid nodes with `dist_S(x, K) ≤ h`.
pub fn aniso_neighborhood(body: &ConvexBody, targets: &[Point], h: f64, grid: &GridDomain) -> Result<Mask> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("neighbourhood size {h}")));
    }
    if grid.spacing() >= h {
        return Err(Error::GridTooCoarse);
    }
    let d = distance_field(body, grid, targets, h)?;
    Mask::from_bits(grid, d.iter().map(|v| *v <= h).collect())
}

/// `(1/h) L^n(K_h)` by cell counting.
pub fn minkowski_content(body: &ConvexBody, k: &JumpPolyline, h: f64, grid: &GridDomain) -> Result<f64> {
    let targets = polyline_targets(k, grid);
    let m = aniso_neighborhood(body, &targets, h, grid)?;
    Ok(m.measure() / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rhombus() -> ConvexBody {
        ConvexBody::polygon(vec![[2.0, 0.0], [0.0, 1.0], [-2.0, 0.0], [0.0, -1.0]]).unwrap()
    }

    // Bisection on t with a crossing-number point-in-polygon test.
    fn gauge_by_bisection(vertices: &[Point], x: Point) -> f64 {
        let inside = |p: Point| {
            let mut c = false;
            let n = vertices.len();
            for k in 0..n {
                let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                if (a[1] > p[1]) != (b[1] > p[1]) {
                    let xc = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                    if p[0] < xc {
                        c = !c;
                    }
                }
            }
            c
        };
        let (mut lo, mut hi) = (1e-9, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if inside([x[0] / mid, x[1] / mid]) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn gauge_examples() {
        assert_relative_eq!(ConvexBody::unit_ball(2).gauge([3.0, 4.0]), 5.0);
        assert_relative_eq!(ConvexBody::square(1.0).unwrap().gauge([0.5, -2.0]), 2.0);
        let r = rhombus();
        let oracle = gauge_by_bisection(&[[2.0, 0.0], [0.0, 1.0], [-2.0, 0.0], [0.0, -1.0]], [1.0, 0.5]);
        assert_relative_eq!(oracle, 1.0, epsilon = 1e-9);
        assert_relative_eq!(r.gauge([1.0, 0.5]), oracle, epsilon = 1e-9);
    }

    #[test]
    fn support_examples() {
        assert_relative_eq!(ConvexBody::unit_ball(2).support([0.0, 1.0]), 1.0);
        assert_relative_eq!(ConvexBody::square(1.0).unwrap().support([1.0, 1.0]), 2.0);
        // Max over densely sampled boundary points of the rhombus.
        let verts = [[2.0, 0.0], [0.0, 1.0], [-2.0, 0.0], [0.0, -1.0], [2.0, 0.0]];
        let mut best: f64 = 0.0;
        for w in verts.windows(2) {
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                best = best.max(w[0][0] + t * (w[1][0] - w[0][0]));
            }
        }
        assert_relative_eq!(rhombus().support([1.0, 0.0]), best);
    }

    #[test]
    fn phi_and_tau_examples() {
        let sq = ConvexBody::square(1.0).unwrap();
        let d = Direction::normalize([1.0, 1.0]).unwrap();
        assert_relative_eq!(sq.phi_rho([1.0, 0.0]), 2.0);
        assert_relative_eq!(sq.phi_rho(d.get()), 2.0 * 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(sq.tau(&d), 2.0 * 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(ConvexBody::unit_ball(2).tau(&Direction::from_angle(0.7)), 2.0);
    }

    #[test]
    fn ellipse_matches_rotated_axes() {
        let e = ConvexBody::ellipse(3.0, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert_relative_eq!(e.gauge([0.0, 3.0]), 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.support([1.0, 0.0]), 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.volume(), 3.0 * std::f64::consts::PI);
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(ConvexBody::polygon(vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).is_err());
        // Clockwise order.
        assert!(ConvexBody::polygon(vec![[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]]).is_err());
        // Not symmetric.
        assert!(ConvexBody::polygon(vec![[2.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).is_err());
    }

    #[test]
    fn dist_s_examples() {
        let b = ConvexBody::unit_ball(2);
        assert_relative_eq!(dist_s(&b, [1.0, 1.0], &[[0.0, 0.0]]).unwrap(), 2f64.sqrt());
        assert_eq!(dist_s(&b, [0.3, 0.2], &[[0.3, 0.2]]).unwrap(), 0.0);
        assert_eq!(dist_s(&b, [0.0, 0.0], &[]), Err(Error::EmptyTarget));
        let sq = ConvexBody::square(1.0).unwrap();
        let k = JumpPolyline::segment([0.0, 0.0], [1.0, 0.0]).unwrap().sample(1e-3);
        assert!((dist_s(&sq, [0.5, 0.3], &k).unwrap() - 0.3).abs() <= 1e-3);
    }

    #[test]
    fn neighbourhood_of_a_point_is_a_disk() {
        let g = GridDomain::new_2d([-0.2, -0.2], [0.2, 0.2], 400).unwrap();
        let h = 0.1;
        let m = aniso_neighborhood(&ConvexBody::unit_ball(2), &[[0.0, 0.0]], h, &g).unwrap();
        let exact = std::f64::consts::PI * h * h;
        assert!((m.measure() - exact).abs() < 0.05 * exact);
        let coarse = GridDomain::unit_square(8).unwrap();
        assert_eq!(
            aniso_neighborhood(&ConvexBody::unit_ball(2), &[[0.5, 0.5]], 0.1, &coarse),
            Err(Error::GridTooCoarse)
        );
    }

    #[test]
    fn minkowski_content_of_a_segment() {
        let g = GridDomain::new_2d([-0.1, -0.1], [1.1, 0.1], 1200).unwrap();
        let k = JumpPolyline::segment([0.0, 0.0], [1.0, 0.0]).unwrap();
        let h = 0.02;
        let sq = minkowski_content(&ConvexBody::square(1.0).unwrap(), &k, h, &g).unwrap();
        assert!((sq - (2.0 + 4.0 * h)).abs() < 0.01 * (2.0 + 4.0 * h));
        let ball = minkowski_content(&ConvexBody::unit_ball(2), &k, h, &g).unwrap();
        let exact = 2.0 + std::f64::consts::PI * h;
        assert!((ball - exact).abs() < 0.01 * exact);
    }

    #[test]
    fn crossing_segments_rejected() {
        let s = |a: Point, b: Point| {
            let t = Direction::normalize([b[0] - a[0], b[1] - a[1]]).unwrap();
            Segment { a, b, normal: t.perp() }
        };
        assert!(JumpPolyline::new(vec![s([0.0, 0.0], [1.0, 1.0]), s([0.0, 1.0], [1.0, 0.0])]).is_err());
        assert!(JumpPolyline::new(vec![s([0.0, 0.0], [1.0, 0.0]), s([1.0, 0.0], [1.0, 1.0])]).is_ok());
    }
}
