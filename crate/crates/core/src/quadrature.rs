//! One-dimensional and polygonal quadrature, and extrapolation to zero.

use crate::grid::Point;

/// Adaptive Simpson rule on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Integral of `f` over a convex polygon by a fan of Duffy-mapped tensor
/// Gauss rules.
pub fn integrate_polygon(f: &dyn Fn(Point) -> f64, polygon: &[Point], order: usize) -> f64 {
    if polygon.len() < 3 {
        return 0.0;
    }
    let rule = gauss_legendre(order);
    let p0 = polygon[0];
    let mut total = 0.0;
    for w in polygon[1..].windows(2) {
        let (p1, p2) = (w[0], w[1]);
        let jac = ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])).abs();
        for &(xu, wu) in &rule {
            let u = 0.5 * (xu + 1.0);
            for &(xv, wv) in &rule {
                let v = 0.5 * (xv + 1.0);
                // Collapsed square: (u, v) -> (u, u v) on the reference triangle.
                let (s, t) = (u * (1.0 - v), u * v);
                let x = [
                    p0[0] + s * (p1[0] - p0[0]) + t * (p2[0] - p0[0]),
                    p0[1] + s * (p1[1] - p0[1]) + t * (p2[1] - p0[1]),
                ];
                total += 0.25 * wu * wv * u * jac * f(x);
            }
        }
    }
    total
}

/// Clips a convex polygon to the half-plane `⟨n, x⟩ ≥ c`.
pub fn clip_half_plane(polygon: &[Point], n: Point, c: f64) -> Vec<Point> {
    let side = |p: Point| n[0] * p[0] + n[1] * p[1] - c;
    let mut out = Vec::new();
    for k in 0..polygon.len() {
        let a = polygon[k];
        let b = polygon[(k + 1) % polygon.len()];
        let (sa, sb) = (side(a), side(b));
        if sa >= 0.0 {
            out.push(a);
        }
        if (sa >= 0.0) != (sb >= 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Value at `x = 0` of the polynomial through the last three `(x, y)`
/// points (Neville). With fewer points, the last value is returned.
pub fn extrapolate_to_zero(points: &[(f64, f64)]) -> f64 {
    let pts = &points[points.len().saturating_sub(3)..];
    let mut p: Vec<f64> = pts.iter().map(|q| q.1).collect();
    let x: Vec<f64> = pts.iter().map(|q| q.0).collect();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
        }
    }
    p.first().copied().unwrap_or(f64::NAN)
}
