//! Gradient descent with Armijo backtracking for the discrete `G_ε`.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, NonlocalEnergy};
use crate::error::{Error, Result};
use crate::fields::{format_float, GridField};
use crate::grid::{GridDomain, Mask, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    fn contains(&self, grid: &GridDomain, idx: usize) -> bool {
        let (i, j) = grid.ij(idx);
        let [nx, ny] = grid.counts();
        match self {
            Edge::Left => i == 0,
            Edge::Right => i + 1 == nx,
            Edge::Bottom => grid.dim() == 2 && j == 0,
            Edge::Top => grid.dim() == 2 && j + 1 == ny,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weight", rename_all = "snake_case")]
pub enum Constraint {
    Hard,
    Penalty(f64),
}

/// Dirichlet data on a node set.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCase {
    mask: Mask,
    values: Vec<Point>,
    constraint: Constraint,
}

impl LoadCase {
    /// `values` holds one prescribed displacement per grid node; only the
    /// entries on `mask` are used.
    pub fn new(mask: Mask, values: Vec<Point>, constraint: Constraint) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::InvalidParameter("empty boundary mask".into()));
        }
        if values.len() != mask.grid().len() {
            return Err(Error::InvalidField("one prescribed value per node expected".into()));
        }
        if (0..values.len()).any(|k| mask.get(k) && !(values[k][0].is_finite() && values[k][1].is_finite())) {
            return Err(Error::InvalidField("non-finite prescribed displacement".into()));
        }
        if let Constraint::Penalty(w) = constraint {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("penalty weight {w}")));
            }
        }
        Ok(Self { mask, values, constraint })
    }

    /// Constant displacement on each listed edge.
    pub fn from_edges(grid: &GridDomain, edges: &[(Edge, Point)], constraint: Constraint) -> Result<Self> {
        let mut mask = Mask::empty(grid);
        let mut values = vec![[0.0, 0.0]; grid.len()];
        for (e, v) in edges {
            for (k, value) in values.iter_mut().enumerate() {
                if e.contains(grid, k) {
                    mask.set(k, true);
                    *value = *v;
                }
            }
        }
        Self::new(mask, values, constraint)
    }

    /// 1D bar with `u = s x` prescribed at both end nodes.
    pub fn stretched_bar(grid: &GridDomain, s: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidGrid("stretched bar needs a 1D grid".into()));
        }
        let n = grid.len();
        let mut mask = Mask::empty(grid);
        let mut values = vec![[0.0, 0.0]; n];
        for k in [0, n - 1] {
            mask.set(k, true);
            values[k] = [s * grid.node_at(k)[0], 0.0];
        }
        Self::new(mask, values, Constraint::Hard)
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    fn project(&self, u: &mut GridField) {
        if self.constraint == Constraint::Hard {
            for (k, v) in u.values_mut().iter_mut().enumerate() {
                if self.mask.get(k) {
                    *v = self.values[k];
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop when `|g| ≤ grad_tol |g₀|`.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            shrink: 0.5,
            initial_step: 1e-3,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_energy: f64,
    pub energy_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub step_history: Vec<f64>,
    pub wall_time_s: f64,
    pub stop: StopReason,
}

impl SolveReport {
    /// Iteration log: one row per accepted step, the first row is the
    /// initial state with step 0.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,energy,grad_norm,step")?;
        for k in 0..self.energy_history.len() {
            writeln!(
                out,
                "{},{},{},{}",
                k,
                format_float(self.energy_history[k]),
                format_float(self.grad_norm_history[k]),
                format_float(if k == 0 { 0.0 } else { self.step_history[k - 1] })
            )?;
        }
        Ok(())
    }
}

struct Objective<'a> {
    ev: NonlocalEnergy,
    load: &'a LoadCase,
}

impl Objective<'_> {
    fn value(&self, u: &GridField) -> Result<f64> {
        let mut e = self.ev.total(u)?;
        if let Constraint::Penalty(w) = self.load.constraint {
            let hn = u.grid().cell_measure();
            e += 0.5 * w * hn * self.penalty_sq(u);
        }
        check_finite(e)
    }

    fn penalty_sq(&self, u: &GridField) -> f64 {
        u.values()
            .iter()
            .enumerate()
            .filter(|(k, _)| self.load.mask.get(*k))
            .map(|(k, v)| {
                let g = self.load.values[k];
                (v[0] - g[0]).powi(2) + (v[1] - g[1]).powi(2)
            })
            .sum()
    }

    fn gradient(&self, u: &GridField) -> Result<(f64, Vec<Point>)> {
        let (mut e, mut g) = self.ev.total_gradient(u)?;
        let hn = u.grid().cell_measure();
        match self.load.constraint {
            Constraint::Hard => {
                for (k, gk) in g.iter_mut().enumerate() {
                    if self.load.mask.get(k) {
                        *gk = [0.0, 0.0];
                    }
                }
            }
            Constraint::Penalty(w) => {
                e += 0.5 * w * hn * self.penalty_sq(u);
                for (k, gk) in g.iter_mut().enumerate() {
                    if self.load.mask.get(k) {
                        let v = u.values()[k];
                        let t = self.load.values[k];
                        gk[0] += w * hn * (v[0] - t[0]);
                        gk[1] += w * hn * (v[1] - t[1]);
                    }
                }
            }
        }
        if u.grid().dim() == 1 {
            g.iter_mut().for_each(|v| v[1] = 0.0);
        }
        Ok((check_finite(e)?, g))
    }
}

fn check_finite(e: f64) -> Result<f64> {
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::Divergence)
    }
}

fn norm(g: &[Point]) -> f64 {
    g.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt()
}

/// Projected (hard) or penalized gradient descent on `G_ε` from `init`.
pub fn minimize(model: &EnergyModel, eps: f64, load: &LoadCase, init: &GridField, opts: &SolveOptions) -> Result<(GridField, SolveReport)> {
    if !model.f.is_smooth() {
        return Err(Error::NonSmoothTransition);
    }
    if !(opts.armijo_c1 > 0.0 && opts.armijo_c1 < 1.0 && opts.shrink > 0.0 && opts.shrink < 1.0 && opts.initial_step > 0.0) {
        return Err(Error::InvalidParameter("line-search parameters out of range".into()));
    }
    let grid = init.grid();
    if load.mask.grid() != grid {
        return Err(Error::InvalidField("load case lives on a different grid".into()));
    }
    let start = Instant::now();
    let obj = Objective {
        ev: NonlocalEnergy::on(model, grid, eps, None)?,
        load,
    };
    let mut u = init.clone();
    load.project(&mut u);
    let (mut e, mut g) = obj.gradient(&u)?;
    let g0 = norm(&g);
    let mut report = SolveReport {
        iterations: 0,
        final_energy: e,
        energy_history: vec![e],
        grad_norm_history: vec![g0],
        step_history: Vec::new(),
        wall_time_s: 0.0,
        stop: StopReason::MaxIterations,
    };
    let mut step = opts.initial_step;
    let mut stop = if g0 == 0.0 { Some(StopReason::Converged) } else { None };
    while stop.is_none() && report.iterations < opts.max_iter {
        let gn2: f64 = g.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum();
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut trial = u.clone();
            for (v, d) in trial.values_mut().iter_mut().zip(&g) {
                v[0] -= step * d[0];
                v[1] -= step * d[1];
            }
            let et = obj.value(&trial)?;
            if et <= e - opts.armijo_c1 * step * gn2 {
                accepted = Some((trial, et));
                break;
            }
            step *= opts.shrink;
        }
        let Some((trial, et)) = accepted else {
            stop = Some(StopReason::LineSearchStalled);
            break;
        };
        assert!(et <= e, "accepted step increased the energy");
        u = trial;
        report.step_history.push(step);
        report.iterations += 1;
        let (e1, g1) = obj.gradient(&u)?;
        e = e1;
        g = g1;
        let gn = norm(&g);
        report.energy_history.push(e);
        report.grad_norm_history.push(gn);
        if gn <= opts.grad_tol * g0 {
            stop = Some(StopReason::Converged);
        }
        step *= 2.0;
    }
    report.stop = stop.unwrap_or(StopReason::MaxIterations);
    report.final_energy = e;
    report.wall_time_s = start.elapsed().as_secs_f64();
    log::info!(
        "minimize: {} iterations, energy {:.6e}, stop {:?}",
        report.iterations,
        e,
        report.stop
    );
    Ok((u, report))
}

/// `u = s x` on a 1D grid.
pub fn affine_seed(grid: &GridDomain, s: f64) -> Result<GridField> {
    GridField::from_fn(grid, |x| [s * x[0], 0.0])
}

/// Two constant pieces `0` and `s` joined by a linear ramp over `width`
/// cells, centred at a cell face drawn from `[0.4, 0.6]` of the domain by
/// a ChaCha8 stream with the given seed. `width = 1` gives a sharp step.
pub fn ramp_seed(grid: &GridDomain, s: f64, width: usize, seed: u64) -> Result<GridField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (grid.lo()[0], grid.hi()[0]);
    let h = grid.spacing();
    let x0 = lo + h * ((hi - lo) * rng.gen_range(0.4..0.6) / h).round();
    let half = 0.5 * width.max(1) as f64 * grid.spacing();
    GridField::from_fn(grid, |x| [s * ((x[0] - x0 + half) / (2.0 * half)).clamp(0.0, 1.0), 0.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Elastic,
    Broken,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchOutcome {
    pub stretch: f64,
    pub elastic_energy: f64,
    pub broken_energy: f64,
    pub selected: Branch,
    pub final_energy: f64,
    pub elastic_report: SolveReport,
    pub broken_report: SolveReport,
}

/// Minimizes the stretched 1D bar from the affine seed and from a ramp
/// seed and keeps the lower final energy.
pub fn two_branch(
    model: &EnergyModel,
    eps: f64,
    grid: &GridDomain,
    s: f64,
    seed: u64,
    opts: &SolveOptions,
) -> Result<(GridField, BranchOutcome)> {
    let load = LoadCase::stretched_bar(grid, s)?;
    let (ue, re) = minimize(model, eps, &load, &affine_seed(grid, s)?, opts)?;
    let (ub, rb) = minimize(model, eps, &load, &ramp_seed(grid, s, 1, seed)?, opts)?;
    let (selected, field, final_energy) = if re.final_energy <= rb.final_energy {
        (Branch::Elastic, ue, re.final_energy)
    } else {
        (Branch::Broken, ub, rb.final_energy)
    };
    Ok((
        field,
        BranchOutcome {
            stretch: s,
            elastic_energy: re.final_energy,
            broken_energy: rb.final_energy,
            selected,
            final_energy,
            elastic_report: re,
            broken_report: rb,
        },
    ))
}
