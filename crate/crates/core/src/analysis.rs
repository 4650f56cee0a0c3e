//! Lower-bound crack extraction, slicing, recovery fields and ε-sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{affine_minorant, check_resolution, limit_energy, one_d_energy, EnergyModel, NonlocalEnergy, TransitionFunction};
use crate::error::{Error, Result};
use crate::fields::{format_float, sym_gradient, GridField, PiecewiseSmoothField};
use crate::geometry::{distance_field, mask_targets, Direction};
use crate::grid::{correlate, GridDomain, Mask, Point, Stencil};
use crate::kernels::TruncatedKernel;
use crate::quadrature::extrapolate_to_zero;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiVariant {
    Plain,
    Truncated { delta: f64, eta: f64 },
}

/// Nodal `ε ∫_Ω W(Eu(y)) k(y − x) dy` on `a` for a stencil of `k`.
fn psi_with(grid: &GridDomain, w: &[f64], stencil: &Stencil, eps: f64, a: &Mask) -> Vec<f64> {
    let mut out = correlate(grid, w, stencil, None, Some(a));
    out.iter_mut().for_each(|v| *v *= eps);
    out
}

/// `ψ_ε` (kernel `ρ_ε`) or `ψ_ε^{η,δ}` (kernel `ρ^η_{(1−δ)ε}`), with the
/// inner integral over the whole grid and values on `a`.
pub fn psi_field(model: &EnergyModel, u: &GridField, eps: f64, variant: PsiVariant, a: &Mask) -> Result<Vec<f64>> {
    let grid = u.grid();
    let h = grid.spacing();
    let w: Vec<f64> = sym_gradient(u).iter().map(|e| model.w.eval(e)).collect();
    let stencil = match variant {
        PsiVariant::Plain => {
            check_resolution(&model.kernel, eps, h)?;
            model.kernel.stencil(eps, h).reflected()
        }
        PsiVariant::Truncated { delta, eta } => {
            check_unit("δ", delta)?;
            let scale = (1.0 - delta) * eps;
            check_resolution(&model.kernel, scale, h)?;
            model.kernel.truncate(eta)?.stencil_matching(scale, h, eps).reflected()
        }
    };
    Ok(psi_with(grid, &w, &stencil, eps, a))
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtractionParams {
    pub delta: f64,
    pub eta: f64,
    pub levels: usize,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            eta: 0.5,
            levels: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificates {
    pub area_bound_ok: bool,
    pub perimeter_bound_ok: bool,
    pub bulk_bound_ok: bool,
}

impl Certificates {
    pub fn all(&self) -> bool {
        self.area_bound_ok && self.perimeter_bound_ok && self.bulk_bound_ok
    }
}

/// Quantities entering the three certified inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtractionSummary {
    pub a: f64,
    pub b: f64,
    pub sigma_eta: f64,
    pub c_delta_eta: f64,
    pub m_delta_eta: f64,
    pub chosen_level: f64,
    pub level_cap: f64,
    pub f_eps: f64,
    pub area_k1: f64,
    pub area_bound: f64,
    pub perimeter: f64,
    pub perimeter_bound: f64,
    pub bulk_integral: f64,
    pub bulk_lhs: f64,
    pub k_nodes: usize,
    pub k2_nodes: usize,
    pub certified: Certificates,
}

#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub k_mask: Mask,
    pub k1_mask: Mask,
    pub k2_mask: Mask,
    pub v_field: GridField,
    pub summary: ExtractionSummary,
}

/// Builds `K_ε`, `K′_ε`, `K″_ε` and `v_ε^{δ,η}` for `u` on the subdomain
/// `a` and evaluates the area, perimeter and bulk inequalities.
///
/// Inner integrals run over the whole grid; `a` should keep a margin of
/// `ε R_S` from the grid boundary. The reference energy is
/// `F = (1/ε) ∫_a f(ψ_ε)`.
pub fn extract_crack(model: &EnergyModel, u: &GridField, eps: f64, params: ExtractionParams, a: &Mask) -> Result<ExtractionResult> {
    let ExtractionParams { delta, eta, levels } = params;
    check_unit("δ", delta)?;
    check_unit("η", eta)?;
    if levels < 1 {
        return Err(Error::InvalidParameter("level scan needs at least one level".into()));
    }
    if a.is_empty() {
        return Err(Error::EmptySubdomain);
    }
    let grid = u.grid();
    let h = grid.spacing();
    let n = grid.dim() as i32;
    let level_cap = delta * eta * eps;
    if level_cap < 2.0 * h {
        return Err(Error::ExtractionUnderResolved { level_cap });
    }
    let (fa, fb) = affine_minorant(&model.f, delta)?;
    let trunc: TruncatedKernel = model.kernel.truncate(eta)?;
    let sigma = trunc.sigma_eta();
    let c = 1.0 / ((1.0 - delta).powi(n) * (1.0 - sigma));

    let ev = NonlocalEnergy::new(model, grid, eps, Some(a), None)?;
    let psi = ev.psi(u)?;
    let f_eps = ev.energy_from_psi(&psi);
    let psi_t = psi_field(model, u, eps, PsiVariant::Truncated { delta, eta }, a)?;

    let threshold = c * fb / fa;
    let k_mask = Mask::from_bits(grid, (0..grid.len()).map(|k| a.get(k) && psi_t[k] >= threshold).collect())?;

    let (k1_mask, k2_mask, chosen_level, perimeter) = if k_mask.is_empty() {
        let empty = Mask::empty(grid);
        (empty.clone(), empty, level_cap / (levels + 1) as f64, 0.0)
    } else {
        let body = model.kernel.body();
        let dist = distance_field(body, grid, &mask_targets(&k_mask), level_cap)?;
        let level_mask = |t: f64| Mask::from_bits(grid, (0..grid.len()).map(|k| a.get(k) && dist[k] <= t).collect());
        let k1 = level_mask(level_cap)?;
        let mut best: Option<(f64, f64, Mask)> = None;
        for l in 1..=levels {
            let t = level_cap * l as f64 / (levels + 1) as f64;
            let m = level_mask(t)?;
            let per = m.boundary_edges(a) as f64 * h.powi(n - 1);
            if best.as_ref().is_none_or(|b| per < b.1) {
                best = Some((t, per, m));
            }
        }
        let (t, per, k2) = best.expect("at least one level");
        (k1, k2, t, per)
    };

    // v = mollification with ρ^η at scale (1 − δ)ε, zero on K″ and off `a`.
    let st = trunc.stencil((1.0 - delta) * eps, h).reflected();
    let comp = |c: usize| correlate(grid, &u.component(c), &st, None, None);
    let (v1, v2) = (comp(0), if n == 2 { comp(1) } else { vec![0.0; grid.len()] });
    let smooth = GridField::new(grid, v1.iter().zip(&v2).map(|(x, y)| [*x, *y]).collect())?;
    let hn = grid.cell_measure();
    let keep = a.and_not(&k2_mask);
    let bulk_integral: f64 = sym_gradient(&smooth)
        .iter()
        .enumerate()
        .filter(|(k, _)| keep.get(*k))
        .map(|(_, e)| model.w.eval(e))
        .sum::<f64>()
        * hn;
    let mut v_field = smooth;
    for (k, v) in v_field.values_mut().iter_mut().enumerate() {
        if !keep.get(k) {
            *v = [0.0, 0.0];
        }
    }

    let alpha = model.f.alpha();
    let bulk_const = alpha * (1.0 - sigma).powi(2) * (1.0 - delta).powi(2 * n + 1);
    let bulk_lhs = bulk_const * bulk_integral;
    let area_k1 = k1_mask.measure();
    let area_bound = eps / fb * f_eps;
    let m_de = 1.0 / (eta * delta * fb);
    let perimeter_bound = m_de * f_eps;
    let slack = 1e-12 * f_eps.max(1.0);
    let certified = Certificates {
        area_bound_ok: area_k1 <= area_bound + slack,
        perimeter_bound_ok: perimeter <= perimeter_bound + slack,
        bulk_bound_ok: bulk_lhs <= f_eps + slack,
    };
    let summary = ExtractionSummary {
        a: fa,
        b: fb,
        sigma_eta: sigma,
        c_delta_eta: c,
        m_delta_eta: m_de,
        chosen_level,
        level_cap,
        f_eps,
        area_k1,
        area_bound,
        perimeter,
        perimeter_bound,
        bulk_integral,
        bulk_lhs,
        k_nodes: k_mask.count(),
        k2_nodes: k2_mask.count(),
        certified,
    };
    Ok(ExtractionResult {
        k_mask,
        k1_mask,
        k2_mask,
        v_field,
        summary,
    })
}

/// Quintic smoothstep on `[0, 1]`.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (s * 6.0 - 15.0) + 10.0)
}

/// Default cut-off radius `γ_ε = ε²`.
pub fn default_gamma(eps: f64) -> f64 {
    eps * eps
}

/// Recovery field `u (1 − φ)` where `φ = 1` on `{dist_S(·, J_u) ≤ γ}`,
/// `φ = 0` on `{dist_S ≥ 2γ}` and a quintic smoothstep in between.
pub fn build_recovery(model: &EnergyModel, u: &PiecewiseSmoothField, eps: f64, gamma: f64, grid: &GridDomain) -> Result<GridField> {
    if !(gamma > 0.0 && gamma <= 0.2 * eps) {
        return Err(Error::InvalidParameter(format!("γ = {gamma} must lie in (0, 0.2 ε]")));
    }
    let raster = u.rasterize(grid)?;
    let jump = u.jump();
    if jump.is_empty() {
        return Ok(raster);
    }
    let (lo, hi) = u.bounds();
    let tol = 1e-12;
    for s in jump.segments() {
        let inside = |p: Point| (0..2).all(|c| p[c] >= lo[c] - tol && p[c] <= hi[c] + tol);
        let on_edge = |c: usize, v: f64| (s.a[c] - v).abs() <= tol && (s.b[c] - v).abs() <= tol;
        let along = (0..2).any(|c| on_edge(c, lo[c]) || on_edge(c, hi[c]));
        if !inside(s.a) || !inside(s.b) || along {
            return Err(Error::JumpTouchesBoundary);
        }
    }
    let body = model.kernel.body();
    let targets = jump.sample((0.5 * grid.spacing()).min(0.25 * gamma));
    let dist = distance_field(body, grid, &targets, 2.0 * gamma)?;
    let mut out = raster;
    for (k, v) in out.values_mut().iter_mut().enumerate() {
        let d = dist[k];
        if d.is_finite() {
            let phi = smoothstep(2.0 - d / gamma);
            v[0] *= 1.0 - phi;
            v[1] *= 1.0 - phi;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub h_grid: f64,
    pub value: f64,
    pub limit_target: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub extrapolated: f64,
    pub target: f64,
    pub rel_gap: f64,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "eps,h_grid,F_eps,limit_target,rel_gap")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                format_float(r.eps),
                format_float(r.h_grid),
                format_float(r.value),
                format_float(r.limit_target),
                format_float(r.rel_gap)
            )?;
        }
        Ok(())
    }
}

/// Evaluates `energy(ε) -> (h_grid, value)` on a strictly decreasing ε list
/// and extrapolates the values to `ε = 0`.
pub fn gamma_sweep(eps_list: &[f64], target: f64, energy: impl Fn(f64) -> Result<(f64, f64)> + Sync) -> Result<SweepReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("ε list must be strictly decreasing".into()));
    }
    let values: Vec<(f64, f64)> = eps_list.par_iter().map(|&e| energy(e)).collect::<Result<Vec<_>>>()?;
    let gap = |v: f64| (v - target).abs() / target.abs().max(f64::MIN_POSITIVE);
    let rows: Vec<SweepRow> = eps_list
        .iter()
        .zip(&values)
        .map(|(&eps, &(h_grid, value))| SweepRow {
            eps,
            h_grid,
            value,
            limit_target: target,
            rel_gap: gap(value),
        })
        .collect();
    if rows.iter().any(|r| !r.value.is_finite()) {
        return Err(Error::InvalidField("non-finite energy in sweep".into()));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.value)).collect();
    let extrapolated = extrapolate_to_zero(&pts);
    Ok(SweepReport {
        rows,
        extrapolated,
        target,
        rel_gap: gap(extrapolated),
    })
}

/// 1D scenarios on `I = (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario1d {
    /// Unit jump at `x0`, replaced by a linear ramp of width `ε³`.
    Jump { x0: f64 },
    /// `u(x) = slope · x`.
    Affine { slope: f64 },
}

impl Scenario1d {
    pub fn sample(&self, eps: f64, x: f64) -> f64 {
        match *self {
            Scenario1d::Jump { x0 } => {
                let w = eps.powi(3);
                ((x - x0) / w + 0.5).clamp(0.0, 1.0)
            }
            Scenario1d::Affine { slope } => slope * x,
        }
    }

    /// The limit `α ∫|u′|^p + 2β #J_u`.
    pub fn limit(&self, f: &TransitionFunction, p: f64) -> f64 {
        match *self {
            Scenario1d::Jump { .. } => 2.0 * f.beta(),
            Scenario1d::Affine { slope } => f.alpha() * slope.abs().powf(p),
        }
    }
}

/// `H_ε` sweep at a fixed number of cells per ε.
pub fn sweep_1d(f: &TransitionFunction, p: f64, scenario: Scenario1d, eps_list: &[f64], cells_per_eps: usize) -> Result<SweepReport> {
    gamma_sweep(eps_list, scenario.limit(f, p), |eps| {
        let n = (cells_per_eps as f64 / eps).round() as usize;
        let h = 1.0 / n as f64;
        let u: Vec<f64> = (0..n).map(|i| scenario.sample(eps, (i as f64 + 0.5) * h)).collect();
        Ok((h, one_d_energy(f, p, &u, h, eps)?))
    })
}

/// Cut-off radius used by recovery sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GammaRule {
    /// `γ_ε = ε²`.
    EpsSquared,
    /// `γ_ε = c h`, which keeps the cut nodes the same at every ε.
    GridCells(f64),
}

impl GammaRule {
    pub fn gamma(&self, eps: f64, h: f64) -> f64 {
        match *self {
            GammaRule::EpsSquared => default_gamma(eps),
            GammaRule::GridCells(c) => c * h,
        }
    }
}

/// `F_ε(u_ε, Ω)` on recovery fields, regenerating the grid for each ε at a
/// fixed number of cells per ε.
pub fn sweep_recovery(
    model: &EnergyModel,
    u: &PiecewiseSmoothField,
    eps_list: &[f64],
    cells_per_eps: usize,
    gamma: GammaRule,
) -> Result<SweepReport> {
    let target = limit_energy(model, u, None).total();
    let (lo, hi) = u.bounds();
    gamma_sweep(eps_list, target, |eps| {
        let grid = GridDomain::with_spacing(u.dim(), lo, hi, eps / cells_per_eps as f64)?;
        let ue = build_recovery(model, u, eps, gamma.gamma(eps, grid.spacing()), &grid)?;
        let e = NonlocalEnergy::on(model, &grid, eps, None)?.total(&ue)?;
        Ok((grid.spacing(), e))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// Half-length `τ_ξ (1 − δ)/2` and radius `δ η′` of the cylinder, in
    /// units of ε.
    pub half_length: f64,
    pub radius: f64,
    pub min_weight: f64,
}

/// Checks `F_ε(u) ≥ Σ_slices h^{n−1} w_j H_j` where `H_j` is the 1D energy
/// of the slice along the `j`-th lattice line in direction `ξ`, with
/// window `|t| ≤ τ_ξ(1 − δ)ε/2` and transition `g(t) = f(κ t)`.
///
/// `κ = ε m̂ c N h^{n−1}` with `m̂` the smallest stencil weight on the
/// cylinder of radius `δη′ε` around the chord, `N` the number of lattice
/// lines it meets and `c` the coercivity constant, so every step
/// (kernel minorant, `W ≥ c|⟨Eξ, ξ⟩|^p`, Jensen over lines for concave
/// `f`) holds exactly on the grid. `ξ` must be a lattice axis.
pub fn slicing_check(model: &EnergyModel, u: &GridField, eps: f64, xi: &Direction, delta: f64) -> Result<SliceReport> {
    check_unit("δ", delta)?;
    let grid = u.grid();
    let d = xi.get();
    let axis = if d[1] == 0.0 && d[0].abs() == 1.0 {
        0
    } else if d[0] == 0.0 && d[1].abs() == 1.0 && grid.dim() == 2 {
        1
    } else {
        return Err(Error::InvalidParameter("slicing directions must be lattice axes".into()));
    };
    let ev = NonlocalEnergy::on(model, grid, eps, None)?;
    let lhs = ev.energy(u)?;
    let body = model.kernel.body();
    let h = grid.spacing();
    let n = grid.dim() as i32;
    let inr = body.inradius();
    if !(inr > 0.0) {
        return Err(Error::NoInscribedBall);
    }
    let half_length = body.tau(xi) * (1.0 - delta) / 2.0;
    let radius = if n == 2 { delta * inr } else { 0.0 };
    let along = (half_length * eps / h + 1e-9).floor() as i32;
    let across = (radius * eps / h + 1e-9).floor() as i32;
    let weights: std::collections::HashMap<(i32, i32), f64> = ev.stencil().iter().map(|(di, dj, w)| ((di, dj), w)).collect();
    let mut m_hat = f64::INFINITY;
    for a in -along..=along {
        for b in -across..=across {
            let o = if axis == 0 { (a, b) } else { (b, a) };
            m_hat = m_hat.min(weights.get(&o).copied().unwrap_or(0.0));
        }
    }
    if !(m_hat > 0.0) {
        return Err(Error::NoInscribedBall);
    }
    let lines = (2 * across + 1) as f64;
    let (c_coerc, _) = model.w.coercivity(grid.dim());
    let p = model.w.p();
    let kappa = eps * m_hat * c_coerc * lines * h.powi(n - 1);

    let strain = sym_gradient(u);
    let q: Vec<f64> = strain.iter().map(|e| e.quadratic(d).abs().powf(p)).collect();
    let [nx, ny] = grid.counts();
    let (len, count) = if axis == 0 { (nx, ny) } else { (ny, nx) };
    let at = |line: usize, t: usize| if axis == 0 { grid.index(t, line) } else { grid.index(line, t) };
    let f = model.f;
    let rhs: f64 = (0..count)
        .into_par_iter()
        .map(|line| {
            let mut prefix = vec![0.0; len + 1];
            for t in 0..len {
                prefix[t + 1] = prefix[t] + q[at(line, t)];
            }
            let h_line: f64 = (0..len)
                .map(|t| {
                    let a0 = t.saturating_sub(along as usize);
                    let a1 = (t + along as usize + 1).min(len);
                    f.eval(kappa * h * (prefix[a1] - prefix[a0]))
                })
                .sum::<f64>()
                * h
                / eps;
            let lo = line as i64 - across as i64;
            let hi = line as i64 + across as i64;
            let covered = (hi.min(count as i64 - 1) - lo.max(0) + 1) as f64;
            h.powi(n - 1) * covered / lines * h_line
        })
        .sum();
    let pass = lhs >= rhs - 1e-12 * lhs.max(1.0);
    Ok(SliceReport {
        lhs,
        rhs,
        pass,
        half_length,
        radius,
        min_weight: m_hat,
    })
}

/// `F_ε` on the recovery fields of two through-cracks with normals `e₁`
/// and `e₂`, each in its own strip of half-width `margin` around the crack.
pub fn anisotropy_energies(model: &EnergyModel, eps: f64, cells_per_eps: usize, margin: f64, gamma: GammaRule) -> Result<(f64, f64)> {
    let h = eps / cells_per_eps as f64;
    let run = |lo: Point, hi: Point, a: Point, b: Point| -> Result<f64> {
        let u = PiecewiseSmoothField::step(lo, hi, a, b, [0.0, 0.0], [1.0, 1.0])?;
        let grid = GridDomain::with_spacing(2, lo, hi, h)?;
        let ue = build_recovery(model, &u, eps, gamma.gamma(eps, h), &grid)?;
        NonlocalEnergy::on(model, &grid, eps, None)?.energy(&ue)
    };
    let e1 = run([0.5 - margin, 0.0], [0.5 + margin, 1.0], [0.5, 0.0], [0.5, 1.0])?;
    let e2 = run([0.0, 0.5 - margin], [1.0, 0.5 + margin], [0.0, 0.5], [1.0, 0.5])?;
    Ok((e1, e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::BulkDensity;
    use crate::geometry::ConvexBody;
    use crate::kernels::{Kernel, Profile};

    fn model() -> EnergyModel {
        let k = Kernel::new(ConvexBody::unit_ball(2), Profile::Cone).unwrap();
        EnergyModel::new(
            BulkDensity::PPower { p: 2.0 },
            TransitionFunction::MinAffine { alpha: 1.0, beta: 1.0 },
            None,
            k,
        )
        .unwrap()
    }

    fn c_de(m: &EnergyModel, delta: f64, eta: f64) -> f64 {
        1.0 / ((1.0 - delta).powi(2) * (1.0 - m.kernel.sigma_eta(eta).unwrap()))
    }

    #[test]
    fn psi_of_affine_field_and_domination() {
        let g = GridDomain::unit_square(200).unwrap();
        let m = model();
        let u = GridField::from_fn(&g, |x| [0.2 * x[0] + 0.1 * x[1], -0.1 * x[1]]).unwrap();
        let a = Mask::interior(&g, [40, 40]);
        let eps = 0.1;
        let plain = psi_field(&m, &u, eps, PsiVariant::Plain, &a).unwrap();
        let wa = 0.04 + 2.0 * 0.05f64.powi(2) + 0.01;
        let k = g.index(100, 100);
        assert!((plain[k] - eps * wa).abs() < 0.02 * eps * wa);
        let (delta, eta) = (0.3, 0.3);
        let t = psi_field(&m, &u, eps, PsiVariant::Truncated { delta, eta }, &a).unwrap();
        assert!((t[k] - eps * wa).abs() < 0.02 * eps * wa);
        for k in 0..g.len() {
            assert!(t[k] <= c_de(&m, delta, eta) * plain[k] + 1e-12);
        }
        // ρ^η_{(1−δ)ε} ≤ C_{δ,η} ρ_ε pointwise for a nonincreasing profile.
        let trunc = m.kernel.truncate(eta).unwrap();
        let c = 1.0 / ((1.0 - delta).powi(2) * (1.0 - trunc.sigma_eta()));
        for i in 0..200 {
            let z = [
                0.11 * (i as f64 * 0.37).cos() * (i as f64 / 200.0),
                0.11 * (i as f64 * 0.37).sin() * (i as f64 / 200.0),
            ];
            assert!(trunc.eval_scaled(z, (1.0 - delta) * eps) <= c * m.kernel.eval_scaled(z, eps) + 1e-12);
        }
    }

    #[test]
    fn extraction_on_affine_field_is_trivial() {
        let g = GridDomain::unit_square(200).unwrap();
        let m = model();
        let u = GridField::from_fn(&g, |x| [0.01 * x[0], 0.0]).unwrap();
        let a = Mask::interior(&g, [30, 30]);
        let r = extract_crack(&m, &u, 0.1, ExtractionParams::default(), &a).unwrap();
        assert!(r.k_mask.is_empty());
        assert!(r.summary.certified.all());
        let k = g.index(100, 100);
        assert!((r.v_field.values()[k][0] - 0.01 * g.node_at(k)[0]).abs() < 1e-5);
    }

    #[test]
    fn extraction_under_resolved() {
        let g = GridDomain::unit_square(64).unwrap();
        let u = GridField::zeros(&g);
        let r = extract_crack(&model(), &u, 0.1, ExtractionParams::default(), &Mask::full(&g));
        assert!(matches!(r, Err(Error::ExtractionUnderResolved { .. })));
    }

    #[test]
    fn recovery_without_jump_is_identity() {
        let g = GridDomain::unit_square(64).unwrap();
        let u = PiecewiseSmoothField::smooth(
            2,
            [0.0, 0.0],
            [1.0, 1.0],
            std::sync::Arc::new(|x| [x[0] * x[1], x[0]]),
            std::sync::Arc::new(|x| [[x[1], x[0]], [1.0, 0.0]]),
        )
        .unwrap();
        let r = build_recovery(&model(), &u, 0.1, 0.01, &g).unwrap();
        assert_eq!(r, u.rasterize(&g).unwrap());
    }

    #[test]
    fn recovery_rejects_boundary_jumps() {
        let g = GridDomain::unit_square(64).unwrap();
        let along = PiecewiseSmoothField::step([0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(build_recovery(&model(), &along, 0.1, 0.01, &g), Err(Error::JumpTouchesBoundary));
        let outside = PiecewiseSmoothField::step([0.0, 0.0], [1.0, 1.0], [-0.5, 0.5], [1.0, 0.5], [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(build_recovery(&model(), &outside, 0.1, 0.01, &g), Err(Error::JumpTouchesBoundary));
    }

    #[test]
    fn recovery_zeroes_the_crack_neighbourhood() {
        let g = GridDomain::unit_square(100).unwrap();
        // Crack through a row of nodes so that the γ-band contains nodes.
        let y = g.node(0, 50)[1];
        let u = PiecewiseSmoothField::step([0.0, 0.0], [1.0, 1.0], [0.0, y], [1.0, y], [1.0, 0.0], [1.0, 0.0]).unwrap();
        let r = build_recovery(&model(), &u, 0.2, 0.02, &g).unwrap();
        assert_eq!(r.values()[g.index(10, 50)], [0.0, 0.0]);
        assert_eq!(r.values()[g.index(10, 49)], [0.0, 0.0]);
        assert_eq!(r.values()[g.index(10, 40)], [1.0, 0.0]);
    }

    #[test]
    fn one_d_sweeps() {
        let f = TransitionFunction::MinAffine { alpha: 1.0, beta: 1.0 };
        let eps = [0.04, 0.02, 0.01];
        let jump = sweep_1d(&f, 2.0, Scenario1d::Jump { x0: 0.5 }, &eps, 64).unwrap();
        assert!(jump.rel_gap < 0.05, "{jump:?}");
        let affine = sweep_1d(&f, 2.0, Scenario1d::Affine { slope: 1.0 }, &eps, 64).unwrap();
        assert!(affine.rel_gap < 0.03, "{affine:?}");
        assert!(gamma_sweep(&[0.01, 0.02], 1.0, |_| Ok((1.0, 1.0))).is_err());
    }

    #[test]
    fn slicing_on_zero_and_ramp() {
        let g = GridDomain::unit_square(128).unwrap();
        let m = model();
        let z = slicing_check(&m, &GridField::zeros(&g), 0.1, &Direction::e1(), 0.3).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        let ramp = GridField::from_fn(&g, |x| [((x[0] - 0.5) / 1e-3).clamp(0.0, 1.0), 0.0]).unwrap();
        let r = slicing_check(&m, &ramp, 0.1, &Direction::e1(), 0.3).unwrap();
        assert!(r.pass, "{r:?}");
        // Each slice saturates on a window of length about τ(1 − δ)ε.
        assert!(r.rhs > 0.5 * 2.0 * 0.7, "{r:?}");
        assert!(slicing_check(&m, &ramp, 0.1, &Direction::from_angle(0.3), 0.3).is_err());
    }
}
