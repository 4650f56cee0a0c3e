//! Experiment configuration (TOML) and its conversion to core types.

use aniso_core::analysis::GammaRule;
use aniso_core::energy::{BulkDensity, EnergyModel, FidelityPsi, TransitionFunction};
use aniso_core::fields::{GridField, PiecewiseSmoothField};
use aniso_core::geometry::ConvexBody;
use aniso_core::grid::{GridDomain, Point};
use aniso_core::kernels::{Kernel, Profile};
use aniso_core::solver::{Constraint, Edge, SolveOptions};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub domain: Option<DomainConfig>,
    pub grid: Option<GridConfig>,
    pub kernel: Option<KernelConfig>,
    pub model: Option<ModelConfig>,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "two")]
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cells along the first axis; the second axis uses the same spacing.
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyConfig {
    Ball {
        radius: f64,
    },
    Ellipse {
        semi_axes: [f64; 2],
        #[serde(default)]
        angle: f64,
    },
    Square {
        half_side: f64,
    },
    Polygon {
        vertices: Vec<Point>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Uniform,
    Cone,
    TruncatedGaussian { sigma: f64 },
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub body: BodyConfig,
    #[serde(default = "uniform")]
    pub profile: ProfileConfig,
    /// Truncation level for the ball-minorant report.
    pub eta: Option<f64>,
}

fn uniform() -> ProfileConfig {
    ProfileConfig::Uniform
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BulkName {
    /// `|M|^p`, needs `p`.
    PPower,
    /// `μ|M|² + (λ/2) tr(M)²`, needs `mu` and `lambda`.
    IsotropicElastic,
}

impl BulkName {
    pub fn name(self) -> &'static str {
        match self {
            BulkName::PPower => "p_power",
            BulkName::IsotropicElastic => "isotropic_elastic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TransitionName {
    /// `min{αt, β}`.
    MinAffine,
    /// `β(1 − e^{−αt/β})`.
    ExpSaturating,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "W")]
    pub w: BulkName,
    pub p: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub f: TransitionName,
    pub alpha: f64,
    pub beta: f64,
    /// Exponent `q` of the fidelity term `|u|^q`; omitted for none.
    pub psi_q: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

pub fn default_dir() -> String {
    "aniso-out".into()
}

/// Displacement fields used by the experiments.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Zero,
    Affine {
        matrix: [[f64; 2]; 2],
        #[serde(default)]
        offset: Point,
    },
    /// Piecewise constant, jumping across the segment `a → b`; `plus` on
    /// the side of the left normal of `b − a`.
    Step {
        a: Point,
        b: Point,
        minus: Point,
        plus: Point,
    },
    /// As `step` with a linear transition of the given width across the
    /// line through `a` and `b`.
    Ramp {
        a: Point,
        b: Point,
        minus: Point,
        plus: Point,
        width: f64,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Jump,
    Affine,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    E1,
    E2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaConfig {
    EpsSquared,
    GridCells { cells: f64 },
}

impl From<GammaConfig> for GammaRule {
    fn from(g: GammaConfig) -> Self {
        match g {
            GammaConfig::EpsSquared => GammaRule::EpsSquared,
            GammaConfig::GridCells { cells } => GammaRule::GridCells(cells),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EdgeName {
    Left,
    Right,
    Bottom,
    Top,
}

impl From<EdgeName> for Edge {
    fn from(e: EdgeName) -> Self {
        match e {
            EdgeName::Left => Edge::Left,
            EdgeName::Right => Edge::Right,
            EdgeName::Bottom => Edge::Bottom,
            EdgeName::Top => Edge::Top,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EdgeLoad {
    pub edge: EdgeName,
    pub displacement: Point,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    Hard,
    Penalty { weight: f64 },
}

impl From<ConstraintConfig> for Constraint {
    fn from(c: ConstraintConfig) -> Self {
        match c {
            ConstraintConfig::Hard => Constraint::Hard,
            ConstraintConfig::Penalty { weight } => Constraint::Penalty(weight),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    Zero,
    /// `u = (s x, 0)`.
    Affine {
        stretch: f64,
    },
    /// Seeded step from `0` to `stretch` over `width` cells.
    Ramp {
        stretch: f64,
        #[serde(default = "one")]
        width: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            max_iter: d.max_iter,
            grad_tol: d.grad_tol,
            armijo_c1: d.armijo_c1,
            shrink: d.shrink,
            initial_step: d.initial_step,
            max_backtracks: d.max_backtracks,
        }
    }
}

impl SolveConfig {
    pub fn options(&self) -> SolveOptions {
        let c = self;
        SolveOptions {
            max_iter: c.max_iter,
            grad_tol: c.grad_tol,
            armijo_c1: c.armijo_c1,
            shrink: c.shrink,
            initial_step: c.initial_step,
            max_backtracks: c.max_backtracks,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// `(angle, φ_ρ, τ)` over equally spaced directions.
    PhiTable {
        #[serde(default = "directions")]
        directions: usize,
    },
    /// `F_ε(u, A)`, fidelity and limit energy of one field.
    Energy {
        eps: f64,
        field: FieldConfig,
        /// Outer and inner integration box `[lo, hi]`; whole grid if omitted.
        subdomain: Option<[Point; 2]>,
    },
    /// 1D `H_ε` sweep on `(0, 1)` with extrapolation.
    Gamma1d {
        scenario: Scenario,
        #[serde(default = "half")]
        x0: f64,
        #[serde(default = "unit")]
        slope: f64,
        eps: Vec<f64>,
        #[serde(default = "cells_1d")]
        cells_per_eps: usize,
        tolerance: Option<f64>,
    },
    /// 2D recovery sweep on the configured domain.
    Recover2d {
        field: FieldConfig,
        eps: Vec<f64>,
        cells_per_eps: usize,
        #[serde(default = "gamma_default")]
        gamma: GammaConfig,
        tolerance: Option<f64>,
    },
    /// Crack extraction with certificates.
    Extract {
        eps: f64,
        field: FieldConfig,
        #[serde(default = "point_five")]
        delta: f64,
        #[serde(default = "point_five")]
        eta: f64,
        #[serde(default = "levels")]
        levels: usize,
        /// Nodes removed from each side of the grid to form `A`; defaults
        /// to `ceil(ε R_S / h)`.
        erosion: Option<usize>,
    },
    /// Slicing lower bound along a lattice axis.
    SliceCheck {
        eps: f64,
        field: FieldConfig,
        direction: Axis,
        #[serde(default = "point_three")]
        delta: f64,
    },
    /// Gradient descent under edge loads.
    Minimize {
        eps: f64,
        load: Vec<EdgeLoad>,
        #[serde(default = "hard")]
        constraint: ConstraintConfig,
        init: InitConfig,
        #[serde(default)]
        solver: SolveConfig,
    },
    /// Kernel normalization and (N1)/(N2) report.
    ValidateKernel {},
}

fn directions() -> usize {
    64
}
fn half() -> f64 {
    0.5
}
fn unit() -> f64 {
    1.0
}
fn cells_1d() -> usize {
    64
}
fn gamma_default() -> GammaConfig {
    GammaConfig::EpsSquared
}
fn point_three() -> f64 {
    0.3
}
fn point_five() -> f64 {
    0.5
}
fn levels() -> usize {
    32
}
fn hard() -> ConstraintConfig {
    ConstraintConfig::Hard
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::PhiTable { .. } => "phi_table",
            Experiment::Energy { .. } => "energy",
            Experiment::Gamma1d { .. } => "gamma1d",
            Experiment::Recover2d { .. } => "recover2d",
            Experiment::Extract { .. } => "extract",
            Experiment::SliceCheck { .. } => "slice_check",
            Experiment::Minimize { .. } => "minimize",
            Experiment::ValidateKernel {} => "validate_kernel",
        }
    }

    /// Sections the experiment reads besides `experiment` and `output`.
    pub fn required(&self) -> &'static [&'static str] {
        match self {
            Experiment::PhiTable { .. } | Experiment::ValidateKernel {} => &["kernel"],
            Experiment::Gamma1d { .. } => &["model"],
            Experiment::Recover2d { .. } => &["domain", "kernel", "model"],
            _ => &["domain", "grid", "kernel", "model"],
        }
    }
}

/// A configuration problem, reported with the offending key path.
#[derive(Debug, Clone, PartialEq)]
pub struct Invalid {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn invalid(path: &str, e: impl std::fmt::Display) -> Invalid {
    Invalid {
        path: path.into(),
        message: e.to_string(),
    }
}

/// Parses TOML, reporting the key path of the first schema violation.
pub fn parse(text: &str) -> Result<ExperimentConfig, Invalid> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Invalid {
            path: if path.is_empty() || path == "." { "<root>".into() } else { path },
            message: inner.message().trim().to_string(),
        }
    })
}

impl ExperimentConfig {
    pub fn check_sections(&self) -> Result<(), Invalid> {
        for s in self.experiment.required() {
            let present = match *s {
                "domain" => self.domain.is_some(),
                "grid" => self.grid.is_some(),
                "kernel" => self.kernel.is_some(),
                "model" => self.model.is_some(),
                _ => true,
            };
            if !present {
                return Err(invalid(
                    s,
                    format!("section required by experiment kind {}", self.experiment.kind()),
                ));
            }
        }
        Ok(())
    }

    pub fn body(&self) -> Result<ConvexBody, Invalid> {
        let k = self.kernel.as_ref().ok_or_else(|| invalid("kernel", "missing section"))?;
        let dim = self.domain.as_ref().map_or(2, |d| d.dim);
        if let Experiment::Gamma1d { .. } = self.experiment {
            return ConvexBody::ball(1, 1.0).map_err(|e| invalid("kernel.body", e));
        }
        let body = match &k.body {
            BodyConfig::Ball { radius } => ConvexBody::ball(dim, *radius),
            BodyConfig::Ellipse { semi_axes, angle } => ConvexBody::ellipse(semi_axes[0], semi_axes[1], *angle),
            BodyConfig::Square { half_side } => ConvexBody::square(*half_side),
            BodyConfig::Polygon { vertices } => ConvexBody::polygon(vertices.clone()),
        };
        let body = body.map_err(|e| invalid("kernel.body", e))?;
        if body.dim() != dim {
            return Err(invalid("kernel.body", format!("{}D body on a {dim}D domain", body.dim())));
        }
        Ok(body)
    }

    pub fn kernel(&self) -> Result<Kernel, Invalid> {
        let body = self.body()?;
        let profile = match self.kernel.as_ref().map(|k| k.profile.clone()).unwrap_or(ProfileConfig::Uniform) {
            ProfileConfig::Uniform => Profile::Uniform,
            ProfileConfig::Cone => Profile::Cone,
            ProfileConfig::TruncatedGaussian { sigma } => Profile::TruncatedGaussian { sigma },
            ProfileConfig::Table { values } => Profile::Table { values },
        };
        Kernel::new(body, profile).map_err(|e| invalid("kernel.profile", e))
    }

    pub fn transition(&self) -> Result<TransitionFunction, Invalid> {
        let m = self.model.as_ref().ok_or_else(|| invalid("model", "missing section"))?;
        let (alpha, beta) = (m.alpha, m.beta);
        let f = match m.f {
            TransitionName::MinAffine => TransitionFunction::MinAffine { alpha, beta },
            TransitionName::ExpSaturating => TransitionFunction::ExpSaturating { alpha, beta },
        };
        f.validate().map_err(|e| invalid("model.f", e))?;
        Ok(f)
    }

    pub fn bulk(&self) -> Result<BulkDensity, Invalid> {
        let m = self.model.as_ref().ok_or_else(|| invalid("model", "missing section"))?;
        let unused = |key: &str, v: Option<f64>| match v {
            Some(_) => Err(invalid(&format!("model.{key}"), format!("not used by W = {}", m.w.name()))),
            None => Ok(()),
        };
        let need = |key: &str, v: Option<f64>| v.ok_or_else(|| invalid(&format!("model.{key}"), format!("required by W = {}", m.w.name())));
        let w = match m.w {
            BulkName::PPower => {
                unused("mu", m.mu)?;
                unused("lambda", m.lambda)?;
                BulkDensity::PPower { p: need("p", m.p)? }
            }
            BulkName::IsotropicElastic => {
                unused("p", m.p)?;
                BulkDensity::IsotropicElastic {
                    mu: need("mu", m.mu)?,
                    lambda: need("lambda", m.lambda)?,
                }
            }
        };
        w.validate().map_err(|e| invalid("model.W", e))?;
        Ok(w)
    }

    pub fn model(&self) -> Result<EnergyModel, Invalid> {
        let m = self.model.as_ref().ok_or_else(|| invalid("model", "missing section"))?;
        let psi = m.psi_q.map(|q| FidelityPsi { q });
        EnergyModel::new(self.bulk()?, self.transition()?, psi, self.kernel()?).map_err(|e| invalid("model", e))
    }

    pub fn bounds(&self) -> Result<(usize, Point, Point), Invalid> {
        let d = self.domain.as_ref().ok_or_else(|| invalid("domain", "missing section"))?;
        if d.dim != 1 && d.dim != 2 {
            return Err(invalid("domain.dim", format!("dimension {} not in {{1, 2}}", d.dim)));
        }
        Ok((d.dim, d.lo, d.hi))
    }

    pub fn grid(&self) -> Result<GridDomain, Invalid> {
        let (dim, lo, hi) = self.bounds()?;
        let cells = self.grid.as_ref().ok_or_else(|| invalid("grid", "missing section"))?.cells;
        let g = if dim == 1 {
            GridDomain::new_1d(lo[0], hi[0], cells)
        } else {
            GridDomain::new_2d(lo, hi, cells)
        };
        g.map_err(|e| invalid("grid", e))
    }
}

impl FieldConfig {
    /// Exact piecewise-smooth representation, when one exists.
    pub fn piecewise(&self, dim: usize, lo: Point, hi: Point) -> Result<Option<PiecewiseSmoothField>, Invalid> {
        let p = "experiment.field";
        let field = match *self {
            FieldConfig::Zero => PiecewiseSmoothField::smooth(dim, lo, hi, Arc::new(|_| [0.0, 0.0]), Arc::new(|_| [[0.0; 2]; 2])),
            FieldConfig::Affine { matrix, offset } => PiecewiseSmoothField::smooth(
                dim,
                lo,
                hi,
                Arc::new(move |x| {
                    [
                        matrix[0][0] * x[0] + matrix[0][1] * x[1] + offset[0],
                        matrix[1][0] * x[0] + matrix[1][1] * x[1] + offset[1],
                    ]
                }),
                Arc::new(move |_| matrix),
            ),
            FieldConfig::Step { a, b, minus, plus } => {
                if dim == 1 {
                    PiecewiseSmoothField::step_1d(lo[0], hi[0], a[0], minus[0], plus[0])
                } else {
                    PiecewiseSmoothField::step(lo, hi, a, b, minus, plus)
                }
            }
            FieldConfig::Ramp { .. } => return Ok(None),
        };
        field.map(Some).map_err(|e| invalid(p, e))
    }

    pub fn rasterize(&self, grid: &GridDomain) -> Result<GridField, Invalid> {
        let p = "experiment.field";
        let (lo, hi) = (grid.lo(), grid.hi());
        if let FieldConfig::Ramp { a, b, minus, plus, width } = *self {
            if !(width > 0.0) {
                return Err(invalid("experiment.field.width", "width must be positive"));
            }
            let t = [b[0] - a[0], b[1] - a[1]];
            let len = t[0].hypot(t[1]);
            if !(len > 0.0) {
                return Err(invalid(p, "degenerate segment"));
            }
            let n = [-t[1] / len, t[0] / len];
            return GridField::from_fn(grid, |x| {
                let s = if grid.dim() == 1 {
                    x[0] - a[0]
                } else {
                    (x[0] - a[0]) * n[0] + (x[1] - a[1]) * n[1]
                };
                let w = (s / width + 0.5).clamp(0.0, 1.0);
                [minus[0] + w * (plus[0] - minus[0]), minus[1] + w * (plus[1] - minus[1])]
            })
            .map_err(|e| invalid(p, e));
        }
        let pw = self.piecewise(grid.dim(), lo, hi)?.expect("piecewise field");
        pw.rasterize(grid).map_err(|e| invalid(p, e))
    }
}
