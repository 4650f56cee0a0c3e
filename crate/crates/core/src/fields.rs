//! Displacement fields: grid samples, symmetrized gradients, mollification,
//! piecewise-smooth fields with explicit jumps, and one-dimensional slices.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Direction, JumpPolyline};
use crate::grid::{correlate, GridDomain, Mask, Point, Stencil};
use crate::quadrature::{clip_half_plane, integrate_polygon};

/// Symmetric strain; in 1D only `xx` is used.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Strain {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Strain {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    /// Symmetric part of a gradient `g[i][j] = ∂_j u_i`.
    pub fn from_gradient(g: [[f64; 2]; 2]) -> Self {
        Self::new(g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1])
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Frobenius norm squared; the off-diagonal entry counts twice.
    pub fn norm_sq(&self) -> f64 {
        self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.xx, s * self.xy, s * self.yy)
    }

    pub fn add(&self, o: &Strain) -> Self {
        Self::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    /// `⟨M ξ, ξ⟩`.
    pub fn quadratic(&self, xi: Point) -> f64 {
        self.xx * xi[0] * xi[0] + 2.0 * self.xy * xi[0] * xi[1] + self.yy * xi[1] * xi[1]
    }
}

/// Nodal vector field on a grid; in 1D only the first component is used.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridDomain,
    values: Vec<Point>,
}

impl GridField {
    pub fn new(grid: &GridDomain, values: Vec<Point>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::InvalidField("non-finite value".into()));
        }
        let mut values = values;
        if grid.dim() == 1 {
            values.iter_mut().for_each(|v| v[1] = 0.0);
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &GridDomain) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![[0.0, 0.0]; grid.len()],
        }
    }

    pub fn from_fn(grid: &GridDomain, f: impl Fn(Point) -> Point) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(|k| f(grid.node_at(k))).collect())
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Point] {
        &mut self.values
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    /// Degrees of freedom as a flat vector (`n` entries per node).
    pub fn to_flat(&self) -> Vec<f64> {
        let n = self.grid.dim();
        self.values.iter().flat_map(|v| v[..n].to_vec()).collect()
    }

    pub fn from_flat(grid: &GridDomain, flat: &[f64]) -> Result<Self> {
        let n = grid.dim();
        if flat.len() != n * grid.len() {
            return Err(Error::InvalidField("flat length mismatch".into()));
        }
        let values = flat.chunks(n).map(|c| if n == 1 { [c[0], 0.0] } else { [c[0], c[1]] }).collect();
        Self::new(grid, values)
    }

    /// Bilinear interpolation inside the node hull.
    pub fn interpolate(&self, x: Point) -> Option<Point> {
        let g = &self.grid;
        let h = g.spacing();
        let [nx, ny] = g.counts();
        let fx = (x[0] - g.lo()[0]) / h - 0.5;
        let tol = 1e-9;
        if fx < -tol || fx > (nx - 1) as f64 + tol {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(nx - 2);
        let s = (fx - i as f64).clamp(0.0, 1.0);
        if g.dim() == 1 {
            let a = self.values[i][0];
            let b = self.values[i + 1][0];
            return Some([a + s * (b - a), 0.0]);
        }
        let fy = (x[1] - g.lo()[1]) / h - 0.5;
        if fy < -tol || fy > (ny - 1) as f64 + tol {
            return None;
        }
        let j = (fy.floor().max(0.0) as usize).min(ny - 2);
        let t = (fy - j as f64).clamp(0.0, 1.0);
        let v00 = self.values[g.index(i, j)];
        let v10 = self.values[g.index(i + 1, j)];
        let v01 = self.values[g.index(i, j + 1)];
        let v11 = self.values[g.index(i + 1, j + 1)];
        let mut out = [0.0; 2];
        for c in 0..2 {
            out[c] = (1.0 - s) * (1.0 - t) * v00[c] + s * (1.0 - t) * v10[c] + (1.0 - s) * t * v01[c] + s * t * v11[c];
        }
        Some(out)
    }

    /// CSV with columns `x, y, u1, u2`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,u1,u2")?;
        for (k, v) in self.values.iter().enumerate() {
            let p = self.grid.node_at(k);
            writeln!(
                out,
                "{},{},{},{}",
                format_float(p[0]),
                format_float(p[1]),
                format_float(v[0]),
                format_float(v[1])
            )?;
        }
        Ok(())
    }

    /// Raw binary: `n`, bounds, spacing, counts, then `n` little-endian
    /// `f64` values per node.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = &self.grid;
        let n = g.dim();
        out.write_all(&(n as u64).to_le_bytes())?;
        for v in [g.lo()[0], g.lo()[1], g.hi()[0], g.hi()[1], g.spacing()] {
            out.write_all(&v.to_le_bytes())?;
        }
        for c in g.counts() {
            out.write_all(&(c as u64).to_le_bytes())?;
        }
        for v in &self.values {
            for x in &v[..n] {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::InvalidField(format!("binary read: {e}"));
        let mut b8 = [0u8; 8];
        let mut u64_ = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8).map_err(bad)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = u64_(&mut input)? as usize;
        let mut f = [0.0; 5];
        for v in f.iter_mut() {
            *v = f64::from_bits(u64_(&mut input)?);
        }
        let nx = u64_(&mut input)? as usize;
        let ny = u64_(&mut input)? as usize;
        let grid = match n {
            1 => GridDomain::new_1d(f[0], f[2], nx)?,
            2 => GridDomain::new_2d([f[0], f[1]], [f[2], f[3]], nx)?,
            _ => return Err(Error::InvalidField(format!("dimension {n}"))),
        };
        if grid.counts() != [nx, ny] {
            return Err(Error::InvalidField("header counts disagree with bounds".into()));
        }
        let mut flat = Vec::with_capacity(n * grid.len());
        for _ in 0..n * grid.len() {
            flat.push(f64::from_bits(u64_(&mut input)?));
        }
        Self::from_flat(&grid, &flat)
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Second-order difference along `axis` (0 = x, 1 = y); one-sided at the
/// grid edges.
pub fn diff_axis(grid: &GridDomain, v: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing();
    let [nx, ny] = grid.counts();
    let (len, stride) = if axis == 0 { (nx, 1) } else { (ny, nx) };
    let mut out = vec![0.0; v.len()];
    for k in 0..v.len() {
        let (i, j) = grid.ij(k);
        let p = if axis == 0 { i } else { j };
        out[k] = if p == 0 {
            (-3.0 * v[k] + 4.0 * v[k + stride] - v[k + 2 * stride]) / (2.0 * h)
        } else if p == len - 1 {
            (3.0 * v[k] - 4.0 * v[k - stride] + v[k - 2 * stride]) / (2.0 * h)
        } else {
            (v[k + stride] - v[k - stride]) / (2.0 * h)
        };
    }
    out
}

/// Transpose of [`diff_axis`].
pub fn diff_axis_t(grid: &GridDomain, g: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing();
    let [nx, ny] = grid.counts();
    let (len, stride) = if axis == 0 { (nx, 1) } else { (ny, nx) };
    let mut out = vec![0.0; g.len()];
    for k in 0..g.len() {
        let gk = g[k] / (2.0 * h);
        if gk == 0.0 {
            continue;
        }
        let (i, j) = grid.ij(k);
        let p = if axis == 0 { i } else { j };
        if p == 0 {
            out[k] -= 3.0 * gk;
            out[k + stride] += 4.0 * gk;
            out[k + 2 * stride] -= gk;
        } else if p == len - 1 {
            out[k] += 3.0 * gk;
            out[k - stride] -= 4.0 * gk;
            out[k - 2 * stride] += gk;
        } else {
            out[k + stride] += gk;
            out[k - stride] -= gk;
        }
    }
    out
}

/// `Eu = (∇u + ∇uᵀ)/2` by finite differences.
pub fn sym_gradient(u: &GridField) -> Vec<Strain> {
    let g = u.grid();
    let u1 = u.component(0);
    if g.dim() == 1 {
        return diff_axis(g, &u1, 0).into_iter().map(|d| Strain::new(d, 0.0, 0.0)).collect();
    }
    let u2 = u.component(1);
    let (d1x, d1y) = (diff_axis(g, &u1, 0), diff_axis(g, &u1, 1));
    let (d2x, d2y) = (diff_axis(g, &u2, 0), diff_axis(g, &u2, 1));
    (0..g.len()).map(|k| Strain::new(d1x[k], 0.5 * (d1y[k] + d2x[k]), d2y[k])).collect()
}

/// Adjoint of [`sym_gradient`]: given `∂Φ/∂E` per node (with `xy` the
/// derivative with respect to the single off-diagonal entry), returns
/// `∂Φ/∂u`.
pub fn sym_gradient_t(grid: &GridDomain, dual: &[Strain]) -> Vec<Point> {
    let gxx: Vec<f64> = dual.iter().map(|s| s.xx).collect();
    if grid.dim() == 1 {
        return diff_axis_t(grid, &gxx, 0).into_iter().map(|v| [v, 0.0]).collect();
    }
    let half_xy: Vec<f64> = dual.iter().map(|s| 0.5 * s.xy).collect();
    let gyy: Vec<f64> = dual.iter().map(|s| s.yy).collect();
    let a = diff_axis_t(grid, &gxx, 0);
    let b = diff_axis_t(grid, &half_xy, 1);
    let c = diff_axis_t(grid, &half_xy, 0);
    let d = diff_axis_t(grid, &gyy, 1);
    (0..grid.len()).map(|k| [a[k] + b[k], c[k] + d[k]]).collect()
}

/// Nodes whose full stencil footprint lies inside the grid.
pub fn stencil_interior(grid: &GridDomain, stencil: &Stencil) -> Mask {
    let r = stencil.reach();
    Mask::interior(grid, [r[0] as usize, r[1] as usize])
}

/// `∫ w(y) ρ(y − x) dy` for a stencil of `ρ`, together with the nodes where
/// no part of the kernel falls outside the grid.
pub fn mollify_with(w: &GridField, stencil: &Stencil) -> Result<(GridField, Mask)> {
    let g = w.grid();
    let valid = stencil_interior(g, stencil);
    if valid.is_empty() {
        return Err(Error::DomainTooSmall(stencil.reach()[0] as f64 * g.spacing()));
    }
    let c1 = correlate(g, &w.component(0), stencil, None, Some(&valid));
    let c2 = if g.dim() == 2 {
        correlate(g, &w.component(1), stencil, None, Some(&valid))
    } else {
        vec![0.0; g.len()]
    };
    let field = GridField::new(g, c1.into_iter().zip(c2).map(|(a, b)| [a, b]).collect())?;
    Ok((field, valid))
}

pub fn mollify(w: &GridField, kernel: &crate::kernels::Kernel, theta: f64) -> Result<(GridField, Mask)> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!("θ = {theta}")));
    }
    let st = kernel.stencil(theta, w.grid().spacing());
    mollify_with(w, &st).map_err(|_| Error::DomainTooSmall(theta))
}

/// Componentwise mollification of a strain field.
pub fn mollify_strain(grid: &GridDomain, e: &[Strain], stencil: &Stencil, outer: Option<&Mask>) -> Vec<Strain> {
    let comp = |f: fn(&Strain) -> f64| {
        let v: Vec<f64> = e.iter().map(f).collect();
        correlate(grid, &v, stencil, None, outer)
    };
    let xx = comp(|s| s.xx);
    let xy = comp(|s| s.xy);
    let yy = comp(|s| s.yy);
    (0..grid.len()).map(|k| Strain::new(xx[k], xy[k], yy[k])).collect()
}

/// Closed half-planes `⟨n, x⟩ ≥ c`; the empty list is the whole domain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Region {
    pub half_planes: Vec<(Point, f64)>,
}

impl Region {
    pub fn everything() -> Self {
        Self::default()
    }

    pub fn half_plane(n: Point, c: f64) -> Self {
        Self { half_planes: vec![(n, c)] }
    }

    pub fn contains(&self, x: Point) -> bool {
        self.half_planes.iter().all(|(n, c)| n[0] * x[0] + n[1] * x[1] >= *c)
    }

    /// Region intersected with a box, as a convex polygon (2D) or an
    /// interval encoded as a degenerate polygon (1D is not supported here).
    pub fn clip_box(&self, lo: Point, hi: Point) -> Vec<Point> {
        let mut poly = vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
        for (n, c) in &self.half_planes {
            poly = clip_half_plane(&poly, *n, *c);
        }
        poly
    }

    pub fn clip_interval(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let (mut a, mut b) = (lo, hi);
        for (n, c) in &self.half_planes {
            if n[0] > 0.0 {
                a = a.max(c / n[0]);
            } else if n[0] < 0.0 {
                b = b.min(c / n[0]);
            } else if *c > 0.0 {
                return None;
            }
        }
        (a < b).then_some((a, b))
    }
}

pub type MapFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;
pub type GradFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

#[derive(Clone)]
pub struct Piece {
    pub region: Region,
    pub map: MapFn,
    /// `grad(x)[i][j] = ∂_j u_i`.
    pub grad: GradFn,
}

impl std::fmt::Debug for Piece {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Piece").field("region", &self.region).finish()
    }
}

impl Piece {
    pub fn new(region: Region, map: MapFn, grad: GradFn) -> Self {
        Self { region, map, grad }
    }

    /// `u(x) = A x + b`.
    pub fn affine(region: Region, a: [[f64; 2]; 2], b: Point) -> Self {
        Self::new(
            region,
            Arc::new(move |x| [a[0][0] * x[0] + a[0][1] * x[1] + b[0], a[1][0] * x[0] + a[1][1] * x[1] + b[1]]),
            Arc::new(move |_| a),
        )
    }

    pub fn constant(region: Region, value: Point) -> Self {
        Self::affine(region, [[0.0; 2]; 2], value)
    }
}

/// Smooth pieces on closed regions plus the jump polyline between them.
#[derive(Debug, Clone)]
pub struct PiecewiseSmoothField {
    dim: usize,
    lo: Point,
    hi: Point,
    pieces: Vec<Piece>,
    jump: JumpPolyline,
    jump_points: Vec<f64>,
}

impl PiecewiseSmoothField {
    pub fn new(dim: usize, lo: Point, hi: Point, pieces: Vec<Piece>, jump: JumpPolyline) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidField("no pieces".into()));
        }
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidField(format!("dimension {dim}")));
        }
        Ok(Self {
            dim,
            lo,
            hi,
            pieces,
            jump,
            jump_points: Vec::new(),
        })
    }

    /// One smooth piece on the whole domain.
    pub fn smooth(dim: usize, lo: Point, hi: Point, map: MapFn, grad: GradFn) -> Result<Self> {
        Self::new(
            dim,
            lo,
            hi,
            vec![Piece::new(Region::everything(), map, grad)],
            JumpPolyline::empty(),
        )
    }

    /// Constant `minus` and `plus` on either side of the line through the
    /// segment `a → b`; `plus` lies on the side of the segment normal.
    pub fn step(lo: Point, hi: Point, a: Point, b: Point, minus: Point, plus: Point) -> Result<Self> {
        let jump = JumpPolyline::segment(a, b)?;
        let nu = jump.segments()[0].normal.get();
        let c = nu[0] * a[0] + nu[1] * a[1];
        Self::new(
            2,
            lo,
            hi,
            vec![
                Piece::constant(Region::half_plane([-nu[0], -nu[1]], -c), minus),
                Piece::constant(Region::half_plane(nu, c), plus),
            ],
            jump,
        )
    }

    /// 1D step at `x0` from `minus` to `plus`.
    pub fn step_1d(lo: f64, hi: f64, x0: f64, minus: f64, plus: f64) -> Result<Self> {
        Self::new(
            1,
            [lo, 0.0],
            [hi, 0.0],
            vec![
                Piece::constant(Region::half_plane([-1.0, 0.0], -x0), [minus, 0.0]),
                Piece::constant(Region::half_plane([1.0, 0.0], x0), [plus, 0.0]),
            ],
            JumpPolyline::empty(),
        )
        .map(|mut f| {
            f.jump_points.push(x0);
            f
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> (Point, Point) {
        (self.lo, self.hi)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn jump(&self) -> &JumpPolyline {
        &self.jump
    }

    /// Jump points of a 1D field.
    pub fn jump_points(&self) -> &[f64] {
        &self.jump_points
    }

    fn in_domain(&self, x: Point) -> bool {
        let tol = 1e-12;
        x[0] >= self.lo[0] - tol && x[0] <= self.hi[0] + tol && (self.dim == 1 || (x[1] >= self.lo[1] - tol && x[1] <= self.hi[1] + tol))
    }

    /// Index of the piece that owns `x`; ties go to the `+ν` side.
    pub fn piece_at(&self, x: Point) -> Result<usize> {
        if !self.in_domain(x) {
            return Err(Error::UncoveredNode(x[0], x[1]));
        }
        let owners: Vec<usize> = (0..self.pieces.len()).filter(|&i| self.pieces[i].region.contains(x)).collect();
        match owners.len() {
            0 => Err(Error::UncoveredNode(x[0], x[1])),
            1 => Ok(owners[0]),
            _ => {
                let nu = self.normal_near(x);
                let probe = [x[0] + 1e-9 * nu[0], x[1] + 1e-9 * nu[1]];
                Ok(owners
                    .iter()
                    .copied()
                    .find(|&i| self.pieces[i].region.contains(probe))
                    .unwrap_or(owners[0]))
            }
        }
    }

    fn normal_near(&self, x: Point) -> Point {
        if self.dim == 1 {
            return [1.0, 0.0];
        }
        self.jump
            .segments()
            .iter()
            .min_by(|a, b| a.distance(x).total_cmp(&b.distance(x)))
            .map(|s| s.normal.get())
            .unwrap_or([0.0, 1.0])
    }

    pub fn eval(&self, x: Point) -> Result<Point> {
        let i = self.piece_at(x)?;
        Ok((self.pieces[i].map)(x))
    }

    pub fn strain(&self, x: Point) -> Result<Strain> {
        let i = self.piece_at(x)?;
        let g = (self.pieces[i].grad)(x);
        Ok(if self.dim == 1 {
            Strain::new(g[0][0], 0.0, 0.0)
        } else {
            Strain::from_gradient(g)
        })
    }

    /// `Σ_pieces ∫_{region ∩ box} g(x, E u_i(x)) dx` by Gauss rules.
    pub fn integrate(&self, lo: Point, hi: Point, g: &(dyn Fn(Point, Point, Strain) -> f64 + Sync)) -> f64 {
        let order = 12;
        let mut total = 0.0;
        for p in &self.pieces {
            let eval = |x: Point| {
                let gr = (p.grad)(x);
                let e = if self.dim == 1 {
                    Strain::new(gr[0][0], 0.0, 0.0)
                } else {
                    Strain::from_gradient(gr)
                };
                g(x, (p.map)(x), e)
            };
            if self.dim == 1 {
                if let Some((a, b)) = p.region.clip_interval(lo[0], hi[0]) {
                    let rule = crate::quadrature::gauss_legendre(order);
                    // Composite rule, 16 panels.
                    let panels = 16;
                    let w = (b - a) / panels as f64;
                    for k in 0..panels {
                        let a0 = a + k as f64 * w;
                        for &(t, wt) in &rule {
                            total += 0.5 * w * wt * eval([a0 + 0.5 * w * (t + 1.0), 0.0]);
                        }
                    }
                }
            } else {
                let poly = p.region.clip_box(lo, hi);
                total += integrate_polygon(&eval, &poly, order);
            }
        }
        total
    }

    pub fn rasterize(&self, grid: &GridDomain) -> Result<GridField> {
        let values: Result<Vec<Point>> = (0..grid.len()).into_par_iter().map(|k| self.eval(grid.node_at(k))).collect();
        GridField::new(grid, values?)
    }
}

/// Samples `⟨u(y + tξ), ξ⟩` at `t_k = t0 + k·spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub direction: Direction,
    pub offset: Point,
    pub t0: f64,
    pub spacing: f64,
    pub samples: Vec<f64>,
}

impl Slice {
    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.spacing
    }
}

/// Parameter range of `y + tξ` inside the box `[lo, hi]`.
fn line_box(lo: Point, hi: Point, dim: usize, xi: Point, y: Point) -> Option<(f64, f64)> {
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in 0..dim {
        if xi[c].abs() < 1e-15 {
            if y[c] < lo[c] - 1e-12 || y[c] > hi[c] + 1e-12 {
                return None;
            }
        } else {
            let t1 = (lo[c] - y[c]) / xi[c];
            let t2 = (hi[c] - y[c]) / xi[c];
            a = a.max(t1.min(t2));
            b = b.min(t1.max(t2));
        }
    }
    (b >= a).then_some((a, b))
}

fn sample_count(a: f64, b: f64, spacing: f64) -> usize {
    ((b - a) / spacing + 1e-9).floor() as usize + 1
}

/// Section of a grid field along `y + tξ`, bilinearly interpolated.
pub fn section(u: &GridField, xi: &Direction, y: Point) -> Result<Slice> {
    let g = u.grid();
    let (lo, hi) = g.node_hull();
    let d = xi.get();
    let (a, b) = line_box(lo, hi, g.dim(), d, y).ok_or(Error::EmptySection)?;
    let h = g.spacing();
    let n = sample_count(a, b, h);
    if n < 2 {
        return Err(Error::EmptySection);
    }
    let samples = (0..n)
        .map(|k| {
            let t = a + k as f64 * h;
            let v = u.interpolate([y[0] + t * d[0], y[1] + t * d[1]]).ok_or(Error::EmptySection)?;
            Ok(xi.dot(v))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Slice {
        direction: *xi,
        offset: y,
        t0: a,
        spacing: h,
        samples,
    })
}

/// Exact section of a piecewise-smooth field at the given spacing.
pub fn section_exact(u: &PiecewiseSmoothField, xi: &Direction, y: Point, spacing: f64) -> Result<Slice> {
    let (lo, hi) = u.bounds();
    let d = xi.get();
    let (a, b) = line_box(lo, hi, u.dim(), d, y).ok_or(Error::EmptySection)?;
    let n = sample_count(a, b, spacing);
    if n < 2 {
        return Err(Error::EmptySection);
    }
    let samples = (0..n)
        .map(|k| {
            let t = a + k as f64 * spacing;
            Ok(xi.dot(u.eval([y[0] + t * d[0], y[1] + t * d[1]])?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Slice {
        direction: *xi,
        offset: y,
        t0: a,
        spacing,
        samples,
    })
}

/// Section averaged over the transverse ball of radius `r` around `y`.
pub fn avg_section(u: &GridField, xi: &Direction, y: Point, r: f64) -> Result<Slice> {
    let g = u.grid();
    let h = g.spacing();
    if r < h * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("averaging radius {r} below grid spacing")));
    }
    if g.dim() == 1 {
        return section(u, xi, y);
    }
    let perp = xi.perp().get();
    let d = xi.get();
    let m = (r / h + 1e-9).floor() as i64;
    let (lo, hi) = g.node_hull();
    let mut range = (f64::NEG_INFINITY, f64::INFINITY);
    let offsets: Vec<Point> = (-m..=m)
        .map(|k| [y[0] + k as f64 * h * perp[0], y[1] + k as f64 * h * perp[1]])
        .collect();
    for z in &offsets {
        let (a, b) = line_box(lo, hi, 2, d, *z).ok_or(Error::EmptySection)?;
        range = (range.0.max(a), range.1.min(b));
    }
    let (a, b) = range;
    if !(b > a) {
        return Err(Error::EmptySection);
    }
    let n = sample_count(a, b, h);
    let mut samples = vec![0.0; n];
    for z in &offsets {
        for (k, s) in samples.iter_mut().enumerate() {
            let t = a + k as f64 * h;
            let v = u.interpolate([z[0] + t * d[0], z[1] + t * d[1]]).ok_or(Error::EmptySection)?;
            *s += xi.dot(v) / offsets.len() as f64;
        }
    }
    Ok(Slice {
        direction: *xi,
        offset: y,
        t0: a,
        spacing: h,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexBody;
    use crate::kernels::{Kernel, Profile};
    use approx::assert_relative_eq;

    fn square(n: usize) -> GridDomain {
        GridDomain::unit_square(n).unwrap()
    }

    #[test]
    fn affine_strain_is_exact() {
        let g = square(12);
        let a = [[0.3, -0.7], [0.2, 1.1]];
        let u = GridField::from_fn(&g, |x| [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]).unwrap();
        for e in sym_gradient(&u) {
            assert_relative_eq!(e.xx, 0.3, epsilon = 1e-12);
            assert_relative_eq!(e.xy, -0.25, epsilon = 1e-12);
            assert_relative_eq!(e.yy, 1.1, epsilon = 1e-12);
        }
        let shear = GridField::from_fn(&g, |x| [x[1], 0.0]).unwrap();
        assert!(sym_gradient(&shear)
            .iter()
            .all(|e| (e.xy - 0.5).abs() < 1e-12 && e.xx.abs() < 1e-12));
    }

    #[test]
    fn sine_strain_converges_at_second_order() {
        let err = |n: usize| {
            let g = square(n);
            let u = GridField::from_fn(&g, |x| [(3.0 * x[0]).sin(), 0.0]).unwrap();
            sym_gradient(&u)
                .iter()
                .enumerate()
                .map(|(k, e)| (e.xx - 3.0 * (3.0 * g.node_at(k)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        let r1 = (e1 / e2).log2();
        let r2 = (e2 / e3).log2();
        assert!(r1 > 1.8 && r1 < 2.2, "rate {r1}");
        assert!(r2 > 1.8 && r2 < 2.2, "rate {r2}");
    }

    #[test]
    fn transpose_matches_adjoint_identity() {
        let g = GridDomain::new_2d([0.0, 0.0], [1.0, 0.75], 12).unwrap();
        let u = GridField::from_fn(&g, |x| [(5.0 * x[0] * x[1]).sin(), x[0].powi(3) - x[1]]).unwrap();
        let dual: Vec<Strain> = (0..g.len())
            .map(|k| {
                let p = g.node_at(k);
                Strain::new(p[0].cos(), p[1] * p[0], 2.0 - p[1])
            })
            .collect();
        let lhs: f64 = sym_gradient(&u)
            .iter()
            .zip(&dual)
            .map(|(e, d)| e.xx * d.xx + e.xy * d.xy + e.yy * d.yy)
            .sum();
        let rhs: f64 = sym_gradient_t(&g, &dual)
            .iter()
            .zip(u.values())
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .sum();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn mollify_preserves_affine_fields() {
        let g = square(64);
        let k = Kernel::new(ConvexBody::unit_ball(2), Profile::Cone).unwrap();
        let u = GridField::from_fn(&g, |x| [2.0 * x[0] - x[1], 0.5 + x[1]]).unwrap();
        let (v, valid) = mollify(&u, &k, 0.1).unwrap();
        for idx in 0..g.len() {
            if valid.get(idx) {
                let (a, b) = (u.values()[idx], v.values()[idx]);
                assert!((a[0] - b[0]).abs() < 1e-3 && (a[1] - b[1]).abs() < 1e-3);
            }
        }
        assert!(matches!(mollify(&u, &k, 0.6), Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn mollified_square_norm_gains_second_moment() {
        // Uniform disk of radius θ: ∫|z|² ρ_θ = θ²/2.
        let g = square(128);
        let k = Kernel::new(ConvexBody::unit_ball(2), Profile::Uniform).unwrap();
        let theta = 0.1;
        let u = GridField::from_fn(&g, |x| [x[0] * x[0] + x[1] * x[1], 0.0]).unwrap();
        let (v, valid) = mollify(&u, &k, theta).unwrap();
        let idx = g.index(64, 64);
        assert!(valid.get(idx));
        let expect = u.values()[idx][0] + theta * theta / 2.0;
        assert!((v.values()[idx][0] - expect).abs() < 1e-3);
    }

    #[test]
    fn rasterize_step_and_tie_break() {
        let f = PiecewiseSmoothField::step([0.0, 0.0], [1.0, 1.0], [1.0, 0.5], [0.0, 0.5], [0.0, 0.0], [1.0, 0.0]).unwrap();
        // Normal of a → b rotated +90° from (−1, 0) is (0, −1): plus lies below.
        assert_eq!(f.eval([0.3, 0.2]).unwrap(), [1.0, 0.0]);
        assert_eq!(f.eval([0.3, 0.8]).unwrap(), [0.0, 0.0]);
        assert_eq!(f.eval([0.3, 0.5]).unwrap(), [1.0, 0.0]);
        assert!(f.eval([1.5, 0.5]).is_err());
        let g = square(10);
        let r = f.rasterize(&g).unwrap();
        assert_eq!(r.values()[g.index(3, 2)], [1.0, 0.0]);
        assert_eq!(r.values()[g.index(3, 7)], [0.0, 0.0]);
    }

    #[test]
    fn sections() {
        let g = square(32);
        let a = [[1.0, 0.5], [0.5, -2.0]];
        let u = GridField::from_fn(&g, |x| [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]).unwrap();
        let xi = Direction::normalize([1.0, 2.0]).unwrap();
        let s = section(&u, &xi, [0.3, 0.4]).unwrap();
        let slope = Strain::from_gradient(a).quadratic(xi.get());
        for k in 1..s.samples.len() {
            assert_relative_eq!((s.samples[k] - s.samples[k - 1]) / s.spacing, slope, epsilon = 1e-10);
        }
        let avg = avg_section(&u, &xi, [0.5, 0.5], 2.0 * g.spacing()).unwrap();
        let plain = section(&u, &xi, [0.5, 0.5]).unwrap();
        let shift = ((avg.t0 - plain.t0) / g.spacing()).round() as usize;
        for (k, v) in avg.samples.iter().enumerate() {
            assert_relative_eq!(*v, plain.samples[k + shift], epsilon = 1e-10);
        }
    }

    #[test]
    fn section_across_jump_orthogonal_to_amplitude_is_continuous() {
        // Jump amplitude (1, 0) across y = 0.5; slicing along e₂ sees nothing.
        let f = PiecewiseSmoothField::step([0.0, 0.0], [1.0, 1.0], [0.0, 0.5], [1.0, 0.5], [0.0, 0.0], [1.0, 0.0]).unwrap();
        let s = section_exact(&f, &Direction::e2(), [0.5, 0.0], 0.01).unwrap();
        assert!(s.samples.iter().all(|v| *v == 0.0));
        let s = section_exact(&f, &Direction::e1(), [0.0, 0.7], 0.01).unwrap();
        assert!(s.samples.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn binary_round_trip() {
        let g = GridDomain::new_2d([-1.0, 0.0], [1.0, 0.5], 32).unwrap();
        let u = GridField::from_fn(&g, |x| [x[0].sin(), x[1] * 3.0]).unwrap();
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(GridField::read_binary(buf.as_slice()).unwrap(), u);
    }
}
