//! Cell-centred Cartesian grids, node masks and offset stencils.
//!
//! Every node sits at the centre of a cell of side `h`, so the node rule
//! `Σ h^n g(x)` is the midpoint rule over the cell partition of the box.
//! One-dimensional grids are stored with a single row (`counts[1] == 1`).

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// A point or vector in the plane; the second component is ignored in 1D.
pub type Point = [f64; 2];

pub const MIN_NODES_PER_AXIS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDomain {
    dim: usize,
    lo: Point,
    hi: Point,
    counts: [usize; 2],
    spacing: f64,
}

impl GridDomain {
    pub fn new_1d(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidGrid(format!("bad interval [{lo}, {hi}]")));
        }
        if cells < MIN_NODES_PER_AXIS {
            return Err(Error::InvalidGrid(format!("{cells} nodes, need at least {MIN_NODES_PER_AXIS}")));
        }
        Ok(Self {
            dim: 1,
            lo: [lo, 0.0],
            hi: [hi, 0.0],
            counts: [cells, 1],
            spacing: (hi - lo) / cells as f64,
        })
    }

    /// A 2D grid with `cells_x` cells along x; the y extent must be an
    /// integer number of cells of the same spacing.
    pub fn new_2d(lo: Point, hi: Point, cells_x: usize) -> Result<Self> {
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return Err(Error::InvalidGrid(format!("bad box {lo:?}..{hi:?}")));
        }
        let h = (hi[0] - lo[0]) / cells_x as f64;
        let ny = (hi[1] - lo[1]) / h;
        let cells_y = ny.round();
        if (ny - cells_y).abs() > 1e-6 {
            return Err(Error::InvalidGrid(format!("y extent is {ny} cells; spacing must be uniform")));
        }
        let cells_y = cells_y as usize;
        if cells_x < MIN_NODES_PER_AXIS || cells_y < MIN_NODES_PER_AXIS {
            return Err(Error::InvalidGrid(format!(
                "{cells_x}x{cells_y} nodes, need at least {MIN_NODES_PER_AXIS} per axis"
            )));
        }
        Ok(Self {
            dim: 2,
            lo,
            hi,
            counts: [cells_x, cells_y],
            spacing: h,
        })
    }

    /// Grid over `[lo, hi]` with the given target spacing (rounded to fit).
    pub fn with_spacing(dim: usize, lo: Point, hi: Point, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing {spacing}")));
        }
        let cells = ((hi[0] - lo[0]) / spacing).round().max(1.0) as usize;
        match dim {
            1 => Self::new_1d(lo[0], hi[0], cells),
            2 => Self::new_2d(lo, hi, cells),
            _ => Err(Error::InvalidGrid(format!("dimension {dim}"))),
        }
    }

    pub fn unit_square(cells: usize) -> Result<Self> {
        Self::new_2d([0.0, 0.0], [1.0, 1.0], cells)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> Point {
        self.lo
    }

    pub fn hi(&self) -> Point {
        self.hi
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^n`, the measure attached to each node.
    pub fn cell_measure(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn measure(&self) -> f64 {
        self.len() as f64 * self.cell_measure()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.counts[0] * j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.counts[0], idx / self.counts[0])
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        let h = self.spacing;
        let y = if self.dim == 2 { self.lo[1] + (j as f64 + 0.5) * h } else { 0.0 };
        [self.lo[0] + (i as f64 + 0.5) * h, y]
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> Point {
        let (i, j) = self.ij(idx);
        self.node(i, j)
    }

    /// Shifted index, or `None` when the offset leaves the grid.
    #[inline]
    pub fn offset(&self, i: usize, j: usize, di: i32, dj: i32) -> Option<usize> {
        let ii = i as i64 + di as i64;
        let jj = j as i64 + dj as i64;
        if ii < 0 || jj < 0 || ii >= self.counts[0] as i64 || jj >= self.counts[1] as i64 {
            None
        } else {
            Some(self.index(ii as usize, jj as usize))
        }
    }

    /// Closed box spanned by the nodes (not the cells).
    pub fn node_hull(&self) -> (Point, Point) {
        let a = self.node(0, 0);
        let b = self.node(self.counts[0] - 1, self.counts[1] - 1);
        (a, b)
    }

    /// Sub-grid of the node index box `[i0, i1) x [j0, j1)`.
    pub fn sub_grid(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> Result<Self> {
        if i1 <= i0 || j1 <= j0 || i1 > self.counts[0] || j1 > self.counts[1] {
            return Err(Error::InvalidGrid("empty sub-grid".into()));
        }
        let h = self.spacing;
        let lo = [
            self.lo[0] + i0 as f64 * h,
            if self.dim == 2 { self.lo[1] + j0 as f64 * h } else { 0.0 },
        ];
        let hi = [
            self.lo[0] + i1 as f64 * h,
            if self.dim == 2 { self.lo[1] + j1 as f64 * h } else { 0.0 },
        ];
        let counts = [i1 - i0, j1 - j0];
        if counts[0] < MIN_NODES_PER_AXIS || (self.dim == 2 && counts[1] < MIN_NODES_PER_AXIS) {
            return Err(Error::InvalidGrid(format!(
                "sub-grid {}x{} below {MIN_NODES_PER_AXIS} nodes per axis",
                counts[0], counts[1]
            )));
        }
        Ok(Self {
            dim: self.dim,
            lo,
            hi,
            counts,
            spacing: h,
        })
    }
}

/// Boolean set of grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: GridDomain,
    bits: Vec<bool>,
}

impl Mask {
    pub fn full(grid: &GridDomain) -> Self {
        Self {
            grid: grid.clone(),
            bits: vec![true; grid.len()],
        }
    }

    pub fn empty(grid: &GridDomain) -> Self {
        Self {
            grid: grid.clone(),
            bits: vec![false; grid.len()],
        }
    }

    pub fn from_bits(grid: &GridDomain, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "mask has {} entries for {} nodes",
                bits.len(),
                grid.len()
            )));
        }
        Ok(Self { grid: grid.clone(), bits })
    }

    pub fn from_fn(grid: &GridDomain, pred: impl Fn(Point) -> bool) -> Self {
        let bits = (0..grid.len()).map(|k| pred(grid.node_at(k))).collect();
        Self { grid: grid.clone(), bits }
    }

    /// Nodes at least `margin` index steps away from every grid edge.
    pub fn interior(grid: &GridDomain, margin: [usize; 2]) -> Self {
        let [nx, ny] = grid.counts();
        let my = if grid.dim() == 2 { margin[1] } else { 0 };
        let bits = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                i >= margin[0] && i + margin[0] < nx && j >= my && j + my < ny
            })
            .collect();
        Self { grid: grid.clone(), bits }
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.bits[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Lebesgue measure of the union of the selected cells.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_measure()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    fn zip(&self, other: &Mask, op: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(self.grid, other.grid, "masks on different grids");
        Mask {
            grid: self.grid.clone(),
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| op(*a, *b)).collect(),
        }
    }

    /// Number of lattice edges with one endpoint inside the mask and the
    /// other outside, counting only edges whose endpoints both lie in
    /// `within`.
    pub fn boundary_edges(&self, within: &Mask) -> usize {
        let g = &self.grid;
        let [nx, ny] = g.counts();
        let mut edges = 0;
        for j in 0..ny {
            for i in 0..nx {
                let a = g.index(i, j);
                if !within.get(a) {
                    continue;
                }
                if i + 1 < nx {
                    let b = g.index(i + 1, j);
                    if within.get(b) && self.bits[a] != self.bits[b] {
                        edges += 1;
                    }
                }
                if j + 1 < ny {
                    let b = g.index(i, j + 1);
                    if within.get(b) && self.bits[a] != self.bits[b] {
                        edges += 1;
                    }
                }
            }
        }
        edges
    }

    /// Plain ASCII PGM (P2), 0 outside and 255 inside, top row = largest y.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let [nx, ny] = self.grid.counts();
        writeln!(out, "P2")?;
        writeln!(out, "{nx} {ny}")?;
        writeln!(out, "255")?;
        for j in (0..ny).rev() {
            let row: Vec<&str> = (0..nx)
                .map(|i| if self.bits[self.grid.index(i, j)] { "255" } else { "0" })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub dj: i32,
    pub entries: Vec<(i32, f64)>,
}

/// Weights on lattice offsets (in cells), stored row by row.
///
/// A stencil built from a density `g` carries cell averages of `g`, so the
/// discrete correlation `h^n Σ_o w(o) v(x + o)` integrates `g` exactly
/// against cellwise-constant data.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    dim: usize,
    rows: Vec<StencilRow>,
}

impl Stencil {
    /// Cell averages of `density` over the cells within `reach` of the
    /// origin, using `sub` midpoint samples per axis and per cell.
    ///
    /// With `refine > 1`, cells where some samples vanish and others do not
    /// (the cell straddles a jump to zero) are resampled with `sub · refine`
    /// points per axis.
    pub fn from_cell_average(
        dim: usize,
        h: f64,
        reach: [i32; 2],
        sub: usize,
        refine: usize,
        density: impl Fn(Point) -> f64 + Sync,
    ) -> Self {
        let sub = sub.max(1);
        let average = |cx: f64, cy: f64, s: usize| -> (f64, bool) {
            let offs = (0..s).map(|k| ((k as f64 + 0.5) / s as f64 - 0.5) * h);
            let (mut acc, mut zeros, mut count) = (0.0, 0usize, 0usize);
            let mut visit = |p: Point| {
                let v = density(p);
                acc += v;
                zeros += (v == 0.0) as usize;
                count += 1;
            };
            if dim == 2 {
                for oy in offs.clone() {
                    for ox in offs.clone() {
                        visit([cx + ox, cy + oy]);
                    }
                }
            } else {
                offs.for_each(|ox| visit([cx + ox, 0.0]));
            }
            (acc / count as f64, zeros > 0 && zeros < count)
        };
        let ry = if dim == 2 { reach[1] } else { 0 };
        let rows: Vec<StencilRow> = (-ry..=ry)
            .into_par_iter()
            .filter_map(|dj| {
                let entries: Vec<(i32, f64)> = (-reach[0]..=reach[0])
                    .filter_map(|di| {
                        let (cx, cy) = (di as f64 * h, dj as f64 * h);
                        let (mut acc, mixed) = average(cx, cy, sub);
                        if mixed && refine > 1 {
                            acc = average(cx, cy, sub * refine).0;
                        }
                        (acc != 0.0).then_some((di, acc))
                    })
                    .collect();
                (!entries.is_empty()).then_some(StencilRow { dj, entries })
            })
            .collect();
        Self { dim, rows }
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (i32, i32, f64)>) -> Self {
        let mut all: Vec<(i32, i32, f64)> = entries.into_iter().filter(|e| e.2 != 0.0).collect();
        all.sort_by_key(|e| (e.1, e.0));
        let mut rows: Vec<StencilRow> = Vec::new();
        for (di, dj, w) in all {
            match rows.last_mut() {
                Some(r) if r.dj == dj => r.entries.push((di, w)),
                _ => rows.push(StencilRow {
                    dj,
                    entries: vec![(di, w)],
                }),
            }
        }
        Self { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[StencilRow] {
        &self.rows
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, i32, f64)> + '_ {
        self.rows.iter().flat_map(|r| r.entries.iter().map(move |&(di, w)| (di, r.dj, w)))
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.entries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `h^n Σ w`, the discrete mass.
    pub fn mass(&self, h: f64) -> f64 {
        self.iter().map(|e| e.2).sum::<f64>() * h.powi(self.dim as i32)
    }

    /// Largest `|di|` and `|dj|` carrying a weight.
    pub fn reach(&self) -> [i32; 2] {
        self.iter().fold([0, 0], |r, (di, dj, _)| [r[0].max(di.abs()), r[1].max(dj.abs())])
    }

    /// Point reflection `o -> -o`, the transpose of the correlation.
    pub fn reflected(&self) -> Self {
        Self::from_entries(self.dim, self.iter().map(|(di, dj, w)| (-di, -dj, w)))
    }

    /// Weights renormalised to unit discrete mass.
    pub fn normalized(&self, h: f64) -> Self {
        let m = self.mass(h);
        Self::from_entries(self.dim, self.iter().map(|(di, dj, w)| (di, dj, w / m)))
    }
}

/// Discrete correlation `out(x) = h^n Σ_o w(o) v(x + o)`.
///
/// Source nodes outside `inner` (or outside the grid) are dropped, which is
/// the clipped integral `∫_A`; outputs outside `outer` are zero.
pub fn correlate(grid: &GridDomain, values: &[f64], stencil: &Stencil, inner: Option<&Mask>, outer: Option<&Mask>) -> Vec<f64> {
    assert_eq!(values.len(), grid.len());
    let scale = grid.cell_measure();
    let src_ok = |k: usize| inner.is_none_or(|m| m.get(k));
    let dst_ok = |k: usize| outer.is_none_or(|m| m.get(k));
    let nnz = (0..grid.len()).filter(|&k| values[k] != 0.0 && src_ok(k)).count();

    let mut out = vec![0.0; grid.len()];
    if nnz == 0 {
        return out;
    }
    if nnz * 4 < grid.len() {
        // Sparse source: scatter in index order.
        for (y, &v) in values.iter().enumerate() {
            if v == 0.0 || !src_ok(y) {
                continue;
            }
            let (i, j) = grid.ij(y);
            for row in stencil.rows() {
                for &(di, w) in &row.entries {
                    if let Some(x) = grid.offset(i, j, -di, -row.dj) {
                        if dst_ok(x) {
                            out[x] += w * v * scale;
                        }
                    }
                }
            }
        }
        return out;
    }

    let [nx, ny] = grid.counts();
    let row_live: Vec<bool> = (0..ny)
        .map(|j| {
            (0..nx).any(|i| {
                let k = grid.index(i, j);
                values[k] != 0.0 && src_ok(k)
            })
        })
        .collect();
    out.par_iter_mut().enumerate().for_each(|(x, o)| {
        if !dst_ok(x) {
            return;
        }
        let (i, j) = grid.ij(x);
        let mut acc = 0.0;
        for row in stencil.rows() {
            let jj = j as i64 + row.dj as i64;
            if jj < 0 || jj >= ny as i64 || !row_live[jj as usize] {
                continue;
            }
            let base = nx * jj as usize;
            for &(di, w) in &row.entries {
                let ii = i as i64 + di as i64;
                if ii < 0 || ii >= nx as i64 {
                    continue;
                }
                let y = base + ii as usize;
                if src_ok(y) {
                    acc += w * values[y];
                }
            }
        }
        *o = acc * scale;
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_cell_centres() {
        let g = GridDomain::unit_square(10).unwrap();
        assert_eq!(g.node(0, 0), [0.05, 0.05]);
        assert!((g.node(9, 9)[0] - 0.95).abs() < 1e-15);
        assert!((g.measure() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_or_non_uniform_grids() {
        assert!(GridDomain::unit_square(4).is_err());
        assert!(GridDomain::new_2d([0.0, 0.0], [1.0, 0.55], 10).is_err());
        assert!(GridDomain::new_1d(0.0, 1.0, 7).is_err());
    }

    #[test]
    fn scatter_and_gather_agree() {
        let g = GridDomain::unit_square(16).unwrap();
        let st = Stencil::from_entries(2, [(0, 0, 1.0), (1, 0, 0.5), (-1, 2, 0.25)]);
        let mut sparse = vec![0.0; g.len()];
        sparse[g.index(5, 5)] = 1.0;
        sparse[g.index(9, 3)] = -2.0;
        let a = correlate(&g, &sparse, &st, None, None);
        // Dense evaluation of the same correlation by brute force.
        for (x, &ax) in a.iter().enumerate() {
            let (i, j) = g.ij(x);
            let mut acc = 0.0;
            for (di, dj, w) in st.iter() {
                if let Some(y) = g.offset(i, j, di, dj) {
                    acc += w * sparse[y];
                }
            }
            assert!((ax - acc * g.cell_measure()).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_edges_of_a_block() {
        let g = GridDomain::unit_square(10).unwrap();
        let m = Mask::from_fn(&g, |p| p[0] > 0.3 && p[0] < 0.6 && p[1] > 0.3 && p[1] < 0.6);
        // 3x3 block has 12 boundary edges.
        assert_eq!(m.count(), 9);
        assert_eq!(m.boundary_edges(&Mask::full(&g)), 12);
    }
}
