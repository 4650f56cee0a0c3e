//! Bulk densities, transition functions, the discrete non-local energies
//! and their limit.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{sym_gradient, sym_gradient_t, GridField, PiecewiseSmoothField, Strain};
use crate::grid::{correlate, GridDomain, Mask, Point, Stencil};
use crate::kernels::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BulkDensity {
    /// `|M|^p`.
    PPower { p: f64 },
    /// `μ|M|² + (λ/2) tr(M)²`.
    IsotropicElastic { mu: f64, lambda: f64 },
}

impl BulkDensity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BulkDensity::PPower { p } if !(p > 1.0 && p.is_finite()) => {
                Err(Error::InvalidParameter(format!("exponent p = {p} must exceed 1")))
            }
            BulkDensity::IsotropicElastic { mu, lambda } if !(mu > 0.0 && lambda >= 0.0) => {
                Err(Error::InvalidParameter(format!("elastic moduli μ = {mu}, λ = {lambda}")))
            }
            _ => Ok(()),
        }
    }

    pub fn p(&self) -> f64 {
        match *self {
            BulkDensity::PPower { p } => p,
            BulkDensity::IsotropicElastic { .. } => 2.0,
        }
    }

    pub fn eval(&self, e: &Strain) -> f64 {
        match *self {
            BulkDensity::PPower { p } => {
                let s = e.norm_sq();
                if p == 2.0 {
                    s
                } else {
                    s.powf(0.5 * p)
                }
            }
            BulkDensity::IsotropicElastic { mu, lambda } => mu * e.norm_sq() + 0.5 * lambda * e.trace().powi(2),
        }
    }

    /// Partial derivatives with respect to `xx`, the single entry `xy`, and
    /// `yy`.
    pub fn derivative(&self, e: &Strain, dim: usize) -> Strain {
        let d = match *self {
            BulkDensity::PPower { p } => {
                let s = e.norm_sq();
                if s == 0.0 {
                    return Strain::default();
                }
                let c = p * s.powf(0.5 * p - 1.0);
                Strain::new(c * e.xx, 2.0 * c * e.xy, c * e.yy)
            }
            BulkDensity::IsotropicElastic { mu, lambda } => {
                let tr = e.trace();
                Strain::new(2.0 * mu * e.xx + lambda * tr, 4.0 * mu * e.xy, 2.0 * mu * e.yy + lambda * tr)
            }
        };
        if dim == 1 {
            Strain::new(d.xx, 0.0, 0.0)
        } else {
            d
        }
    }

    /// Constants with `c|M|^p ≤ W(M) ≤ C(1 + |M|^p)`.
    pub fn coercivity(&self, dim: usize) -> (f64, f64) {
        match *self {
            BulkDensity::PPower { .. } => (1.0, 1.0),
            BulkDensity::IsotropicElastic { mu, lambda } => {
                let n = dim as f64;
                ((2.0 * mu).min(2.0 * mu + n * lambda) / 2.0, mu + 0.5 * n * lambda)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionFunction {
    /// `min{αt, β}`.
    MinAffine { alpha: f64, beta: f64 },
    /// `β(1 − e^{−αt/β})`.
    ExpSaturating { alpha: f64, beta: f64 },
}

impl TransitionFunction {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.alpha(), self.beta());
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("α = {a}, β = {b} must be positive")))
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            TransitionFunction::MinAffine { alpha, .. } | TransitionFunction::ExpSaturating { alpha, .. } => alpha,
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            TransitionFunction::MinAffine { beta, .. } | TransitionFunction::ExpSaturating { beta, .. } => beta,
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, TransitionFunction::ExpSaturating { .. })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TransitionFunction::MinAffine { alpha, beta } => (alpha * t).min(beta),
            TransitionFunction::ExpSaturating { alpha, beta } => -beta * (-alpha * t / beta).exp_m1(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TransitionFunction::MinAffine { alpha, beta } => {
                if alpha * t < beta {
                    alpha
                } else {
                    0.0
                }
            }
            TransitionFunction::ExpSaturating { alpha, beta } => alpha * (-alpha * t / beta).exp(),
        }
    }
}

/// `ψ(s) = s^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityPsi {
    pub q: f64,
}

impl FidelityPsi {
    pub fn eval(&self, s: f64) -> f64 {
        s.powf(self.q)
    }

    /// `∇_u ψ(|u|) = q |u|^{q−2} u`.
    pub fn gradient(&self, u: Point) -> Point {
        let s = u[0].hypot(u[1]);
        if s == 0.0 {
            return [0.0, 0.0];
        }
        let c = self.q * s.powf(self.q - 2.0);
        [c * u[0], c * u[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub w: BulkDensity,
    pub f: TransitionFunction,
    pub psi: Option<FidelityPsi>,
    pub kernel: Kernel,
}

impl EnergyModel {
    pub fn new(w: BulkDensity, f: TransitionFunction, psi: Option<FidelityPsi>, kernel: Kernel) -> Result<Self> {
        w.validate()?;
        f.validate()?;
        if let Some(psi) = psi {
            if !(psi.q > 1.0 && psi.q <= w.p()) {
                return Err(Error::InvalidParameter(format!(
                    "fidelity exponent q = {} must lie in (1, p]",
                    psi.q
                )));
            }
        }
        Ok(Self { w, f, psi, kernel })
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }
}

/// Cells per scaled inradius below which ε is rejected.
pub const MIN_CELLS: f64 = 4.0;
/// Cells per scaled inradius below which a warning is logged.
pub const WARN_CELLS: f64 = 8.0;

pub fn check_resolution(kernel: &Kernel, eps: f64, h: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("ε = {eps}")));
    }
    let cells = eps * kernel.body().inradius() / h;
    if cells < MIN_CELLS - 1e-9 {
        return Err(Error::UnderResolved { cells });
    }
    if cells < WARN_CELLS - 1e-9 {
        log::warn!("ε = {eps} spans only {cells:.2} cells per inradius");
    }
    Ok(())
}

/// Precomputed data for repeated evaluation of `F_ε(·, A)` on one grid.
///
/// The outer integral runs over `outer`, the inner one over `inner`
/// (both default to the full grid).
#[derive(Debug, Clone)]
pub struct NonlocalEnergy {
    model: EnergyModel,
    grid: GridDomain,
    eps: f64,
    stencil: Stencil,
    reflected: Stencil,
    outer: Mask,
    inner: Mask,
}

impl NonlocalEnergy {
    pub fn new(model: &EnergyModel, grid: &GridDomain, eps: f64, outer: Option<&Mask>, inner: Option<&Mask>) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "kernel dimension {} on a {}D grid",
                model.dim(),
                grid.dim()
            )));
        }
        check_resolution(&model.kernel, eps, grid.spacing())?;
        let outer = outer.cloned().unwrap_or_else(|| Mask::full(grid));
        let inner = inner.cloned().unwrap_or_else(|| Mask::full(grid));
        if outer.is_empty() {
            return Err(Error::EmptySubdomain);
        }
        // ρ_ε(x − y) with y = x + o is the stencil reflected.
        let stencil = model.kernel.stencil(eps, grid.spacing()).reflected();
        let reflected = stencil.reflected();
        Ok(Self {
            model: model.clone(),
            grid: grid.clone(),
            eps,
            stencil,
            reflected,
            outer,
            inner,
        })
    }

    /// `F_ε(·, A)` with the inner integral clipped to the same `A`.
    pub fn on(model: &EnergyModel, grid: &GridDomain, eps: f64, a: Option<&Mask>) -> Result<Self> {
        Self::new(model, grid, eps, a, a)
    }

    pub fn model(&self) -> &EnergyModel {
        &self.model
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn outer(&self) -> &Mask {
        &self.outer
    }

    pub fn inner(&self) -> &Mask {
        &self.inner
    }

    fn check_field(&self, u: &GridField) -> Result<()> {
        if u.grid() != &self.grid {
            return Err(Error::InvalidField("field lives on a different grid".into()));
        }
        Ok(())
    }

    /// Nodal `W(Eu)`.
    pub fn density(&self, u: &GridField) -> Vec<f64> {
        sym_gradient(u).iter().map(|e| self.model.w.eval(e)).collect()
    }

    /// `ψ_ε(x) = ε ∫_inner W(Eu(y)) ρ_ε(x − y) dy` on `outer`.
    pub fn psi(&self, u: &GridField) -> Result<Vec<f64>> {
        self.check_field(u)?;
        Ok(self.psi_of_density(&self.density(u)))
    }

    pub fn psi_of_density(&self, w: &[f64]) -> Vec<f64> {
        let mut psi = correlate(&self.grid, w, &self.stencil, Some(&self.inner), Some(&self.outer));
        psi.iter_mut().for_each(|v| *v *= self.eps);
        psi
    }

    pub fn energy_from_psi(&self, psi: &[f64]) -> f64 {
        let hn = self.grid.cell_measure();
        let f = &self.model.f;
        (0..psi.len()).filter(|&k| self.outer.get(k)).map(|k| f.eval(psi[k])).sum::<f64>() * hn / self.eps
    }

    /// `F_ε(u)`.
    pub fn energy(&self, u: &GridField) -> Result<f64> {
        Ok(self.energy_from_psi(&self.psi(u)?))
    }

    /// `∫_outer ψ(|u|)`; zero without a fidelity term.
    pub fn fidelity(&self, u: &GridField) -> f64 {
        let Some(psi) = self.model.psi else { return 0.0 };
        let hn = self.grid.cell_measure();
        u.values()
            .iter()
            .enumerate()
            .filter(|(k, _)| self.outer.get(*k))
            .map(|(_, v)| psi.eval(v[0].hypot(v[1])))
            .sum::<f64>()
            * hn
    }

    /// `G_ε(u) = F_ε(u) + ∫ψ(|u|)`.
    pub fn total(&self, u: &GridField) -> Result<f64> {
        Ok(self.energy(u)? + self.fidelity(u))
    }

    /// Exact gradient of the discrete `F_ε` with respect to nodal values.
    pub fn gradient(&self, u: &GridField) -> Result<(f64, Vec<Point>)> {
        if !self.model.f.is_smooth() {
            return Err(Error::NonSmoothTransition);
        }
        self.check_field(u)?;
        let strain = sym_gradient(u);
        let w: Vec<f64> = strain.par_iter().map(|e| self.model.w.eval(e)).collect();
        let psi = self.psi_of_density(&w);
        let energy = self.energy_from_psi(&psi);
        let f = &self.model.f;
        let g: Vec<f64> = (0..psi.len())
            .map(|k| if self.outer.get(k) { f.derivative(psi[k]) } else { 0.0 })
            .collect();
        let hn = self.grid.cell_measure();
        let dw = correlate(&self.grid, &g, &self.reflected, None, Some(&self.inner));
        let dim = self.grid.dim();
        let dual: Vec<Strain> = strain
            .par_iter()
            .zip(dw.par_iter())
            .map(|(e, d)| self.model.w.derivative(e, dim).scale(d * hn))
            .collect();
        Ok((energy, sym_gradient_t(&self.grid, &dual)))
    }

    /// Gradient of `G_ε`.
    pub fn total_gradient(&self, u: &GridField) -> Result<(f64, Vec<Point>)> {
        let (e, mut g) = self.gradient(u)?;
        let Some(psi) = self.model.psi else { return Ok((e, g)) };
        let hn = self.grid.cell_measure();
        for (k, v) in u.values().iter().enumerate() {
            if self.outer.get(k) {
                let d = psi.gradient(*v);
                g[k][0] += hn * d[0];
                g[k][1] += hn * d[1];
            }
        }
        Ok((e + self.fidelity(u), g))
    }
}

/// `F_ε(u, A)` with the inner integral clipped to `A` (`None` = whole grid).
pub fn nonlocal_energy(model: &EnergyModel, u: &GridField, eps: f64, a: Option<&Mask>) -> Result<f64> {
    NonlocalEnergy::on(model, u.grid(), eps, a)?.energy(u)
}

/// `G_ε(u, A)`.
pub fn fidelity_energy(model: &EnergyModel, u: &GridField, eps: f64, a: Option<&Mask>) -> Result<f64> {
    NonlocalEnergy::on(model, u.grid(), eps, a)?.total(u)
}

pub fn nonlocal_gradient(model: &EnergyModel, u: &GridField, eps: f64, a: Option<&Mask>) -> Result<Vec<Point>> {
    Ok(NonlocalEnergy::on(model, u.grid(), eps, a)?.gradient(u)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitEnergy {
    pub bulk: f64,
    pub surface: f64,
    pub fidelity: f64,
}

impl LimitEnergy {
    pub fn total(&self) -> f64 {
        self.bulk + self.surface + self.fidelity
    }
}

/// `α ∫_A W(Eu) + β ∫_{J_u ∩ A} φ_ρ(ν)` (plus `∫_A ψ(|u|)` if present) over
/// the box `A`, the field's domain by default.
pub fn limit_energy(model: &EnergyModel, u: &PiecewiseSmoothField, a: Option<(Point, Point)>) -> LimitEnergy {
    let (lo, hi) = a.unwrap_or_else(|| u.bounds());
    let w = model.w;
    let bulk = model.f.alpha() * u.integrate(lo, hi, &|_, _, e| w.eval(&e));
    let fidelity = model
        .psi
        .map(|psi| u.integrate(lo, hi, &|_, v, _| psi.eval(v[0].hypot(v[1]))))
        .unwrap_or(0.0);
    let body = model.kernel.body();
    let surface = if u.dim() == 1 {
        let count = u.jump_points().iter().filter(|&&x| x > lo[0] && x < hi[0]).count();
        model.f.beta() * count as f64 * body.phi_rho([1.0, 0.0])
    } else {
        model.f.beta()
            * u.jump()
                .segments()
                .iter()
                .map(|s| clipped_length(s.a, s.b, lo, hi) * body.phi_rho(s.normal.get()))
                .sum::<f64>()
    };
    LimitEnergy { bulk, surface, fidelity }
}

/// Length of the part of segment `a → b` inside the box.
fn clipped_length(a: Point, b: Point, lo: Point, hi: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for c in 0..2 {
        if d[c] == 0.0 {
            if a[c] < lo[c] || a[c] > hi[c] {
                return 0.0;
            }
        } else {
            let (s0, s1) = ((lo[c] - a[c]) / d[c], (hi[c] - a[c]) / d[c]);
            t0 = t0.max(s0.min(s1));
            t1 = t1.min(s0.max(s1));
        }
    }
    (t1 - t0).max(0.0) * d[0].hypot(d[1])
}

/// `H_ε(u) = (1/ε) ∫_I f(½ ∫_{x−ε}^{x+ε} |u′|^p dy) dx` for cell-centred
/// samples on `I`, with `u′` extended by zero outside `I`.
///
/// The inner integral is exact for the cellwise-constant derivative, via
/// prefix sums.
pub fn one_d_energy(f: &TransitionFunction, p: f64, u: &[f64], spacing: f64, eps: f64) -> Result<f64> {
    if !(eps >= MIN_CELLS * spacing * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved { cells: eps / spacing });
    }
    let n = u.len();
    if n < 3 {
        return Err(Error::InvalidField("need at least three samples".into()));
    }
    let h = spacing;
    let du: Vec<f64> = (0..n)
        .map(|i| {
            let d = if i == 0 {
                (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h)
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            };
            d.abs().powf(p)
        })
        .collect();
    // prefix[k] = ∫_0^{k h} |u′|^p with I = (0, n h) in local coordinates.
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + du[i] * h;
    }
    let cumulative = |s: f64| {
        let s = s.clamp(0.0, n as f64 * h);
        let k = ((s / h).floor() as usize).min(n - 1);
        prefix[k] + du[k] * (s - k as f64 * h)
    };
    let total: f64 = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            f.eval(0.5 * (cumulative(x + eps) - cumulative(x - eps)))
        })
        .sum();
    Ok(total * h / eps)
}

/// `(a_δ, b_δ)` with `a_δ ≥ α(1 − δ)` and `min{a_δ t, b_δ} ≤ f(t)` for all
/// `t ≥ 0`, certified on a log grid over `[1e−9, 1e9]`.
pub fn affine_minorant(f: &TransitionFunction, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("δ = {delta} outside (0, 1)")));
    }
    let (a, b) = match *f {
        TransitionFunction::MinAffine { alpha, beta } => (alpha, beta),
        TransitionFunction::ExpSaturating { alpha, .. } => {
            let a = alpha * (1.0 - delta);
            let gap = |t: f64| f.eval(t) - a * t;
            let mut hi = 1.0;
            while gap(hi) >= 0.0 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gap(mid) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (a, a * lo)
        }
    };
    let steps = 4000;
    for k in 0..=steps {
        let t = 10f64.powf(-9.0 + 18.0 * k as f64 / steps as f64);
        if (a * t).min(b) > f.eval(t) {
            return Err(Error::MinorantViolated(t));
        }
    }
    Ok((a, b))
}

/// Ball-average energy `F̃_ε` with discrete constants, next to `F_ε`, both
/// with outer integral over `a` and inner integral over the whole grid.
///
/// `f̃(t) = f(m̂ |B̂| t)` where `m̂ ε^{-n}` is the smallest stencil weight on
/// the ball offsets `|o h| ≤ ηε` and `|B̂|` their measure over `ε^n`, so that
/// `F̃_ε ≤ F_ε` holds node by node.
pub fn comparison_energies(model: &EnergyModel, u: &GridField, eps: f64, eta: f64, a: &Mask) -> Result<(f64, f64)> {
    let grid = u.grid();
    let ev = NonlocalEnergy::new(model, grid, eps, Some(a), None)?;
    let h = grid.spacing();
    let dim = grid.dim();
    let r = eta * eps;
    let ball: Vec<(i32, i32)> = {
        let m = (r / h).floor() as i32;
        let my = if dim == 2 { m } else { 0 };
        (-my..=my)
            .flat_map(|dj| (-m..=m).map(move |di| (di, dj)))
            .filter(|&(di, dj)| ((di as f64 * h).powi(2) + (dj as f64 * h).powi(2)).sqrt() <= r)
            .collect()
    };
    if ball.is_empty() {
        return Err(Error::InvalidParameter("ball average has no nodes".into()));
    }
    let weights: std::collections::HashMap<(i32, i32), f64> = ev.stencil().iter().map(|(di, dj, w)| ((di, dj), w)).collect();
    let m_hat = ball
        .iter()
        .map(|o| weights.get(o).copied().unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    let w = ev.density(u);
    let f = model.f;
    let hn = grid.cell_measure();
    let tilde: f64 = (0..grid.len())
        .filter(|&k| a.get(k))
        .map(|k| {
            let (i, j) = grid.ij(k);
            let mut sum = 0.0;
            for &(di, dj) in &ball {
                if let Some(y) = grid.offset(i, j, di, dj) {
                    sum += w[y];
                }
            }
            let avg = sum / ball.len() as f64;
            // m̂ |B̂| ε avg with |B̂| = N hⁿ.
            f.eval(m_hat * ball.len() as f64 * hn * eps * avg)
        })
        .sum::<f64>()
        * hn
        / eps;
    Ok((tilde, ev.energy(u)?))
}
