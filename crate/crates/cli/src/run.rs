//! Experiment execution and artifact writing.

use crate::config::{Axis, Experiment, ExperimentConfig, FieldConfig, InitConfig, Invalid, Scenario};
use aniso_core::analysis::{extract_crack, slicing_check, sweep_1d, sweep_recovery, ExtractionParams, Scenario1d, SweepReport};
use aniso_core::energy::{limit_energy, BulkDensity, NonlocalEnergy};
use aniso_core::fields::{format_float, GridField};
use aniso_core::geometry::Direction;
use aniso_core::grid::{GridDomain, Mask};
use aniso_core::solver::{affine_seed, minimize, ramp_seed, LoadCase};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Why a run did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or parameters rejected by the core library.
    Invalid(String),
    /// The computation finished but a certified check did not hold.
    Certificate(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Certificate(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Failure::Invalid(_) => "validation_failed",
            Failure::Certificate(_) => "certificate_failed",
            Failure::Io(_) => "io_error",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Certificate(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Invalid> for Failure {
    fn from(e: Invalid) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<aniso_core::Error> for Failure {
    fn from(e: aniso_core::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Collects written files and the JSON summary of a run.
pub struct Run {
    dir: PathBuf,
    pub artifacts: Vec<String>,
    pub summary: Value,
}

impl Run {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            summary: Value::Null,
        }
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
        let mut out = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut out)?;
        out.flush()?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::other)?;
            writeln!(out)
        })
    }

    fn field(&mut self, name: &str, u: &GridField) -> Result<(), Failure> {
        self.write(name, |out| u.write_csv(out))
    }

    fn mask(&mut self, name: &str, m: &Mask) -> Result<(), Failure> {
        self.write(name, |out| m.write_pgm(out))
    }

    fn sweep(&mut self, report: &SweepReport, tolerance: Option<f64>) -> Result<(), Failure> {
        self.write("sweep.csv", |out| report.write_csv(out))?;
        self.summary = json!({
            "extrapolated": report.extrapolated,
            "target": report.target,
            "rel_gap": report.rel_gap,
            "tolerance": tolerance,
        });
        self.json("summary.json", &self.summary.clone())?;
        match tolerance {
            Some(t) if !(report.rel_gap <= t) => Err(Failure::Certificate(format!("rel_gap {} exceeds tolerance {t}", report.rel_gap))),
            _ => Ok(()),
        }
    }
}

fn subdomain_mask(grid: &GridDomain, b: [[f64; 2]; 2]) -> Result<Mask, Failure> {
    let one_d = grid.dim() == 1;
    let m = Mask::from_fn(grid, |x| {
        (b[0][0]..=b[1][0]).contains(&x[0]) && (one_d || (b[0][1]..=b[1][1]).contains(&x[1]))
    });
    if m.is_empty() {
        return Err(Failure::Invalid("experiment.subdomain: contains no grid node".into()));
    }
    Ok(m)
}

pub fn execute(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), Failure> {
    cfg.check_sections()?;
    match &cfg.experiment {
        Experiment::PhiTable { directions } => {
            if *directions == 0 {
                return Err(Failure::Invalid("experiment.directions: must be positive".into()));
            }
            let body = cfg.body()?;
            let n = *directions;
            let rows: Vec<(f64, f64, f64)> = (0..n)
                .map(|k| {
                    let theta = std::f64::consts::TAU * k as f64 / n as f64;
                    let d = Direction::from_angle(theta);
                    (theta, body.phi_rho(d.get()), body.tau(&d))
                })
                .collect();
            run.write("phi_table.csv", |out| {
                writeln!(out, "angle,phi_rho,tau")?;
                for (t, p, s) in &rows {
                    writeln!(out, "{},{},{}", format_float(*t), format_float(*p), format_float(*s))?;
                }
                Ok(())
            })?;
            let phi = rows.iter().map(|r| r.1);
            run.summary = json!({
                "directions": n,
                "phi_min": phi.clone().fold(f64::INFINITY, f64::min),
                "phi_max": phi.fold(0.0, f64::max),
            });
            run.json("summary.json", &run.summary.clone())
        }
        Experiment::ValidateKernel {} => {
            let eta = cfg.kernel.as_ref().and_then(|k| k.eta);
            let report = cfg.kernel()?.validate(eta);
            run.summary = serde_json::to_value(&report).expect("serializable report");
            run.json("kernel_report.json", &report)?;
            if !report.n1 {
                return Err(Failure::Certificate("kernel fails N1".into()));
            }
            Ok(())
        }
        Experiment::Energy { eps, field, subdomain } => {
            let model = cfg.model()?;
            let grid = cfg.grid()?;
            let u = field.rasterize(&grid)?;
            let a = subdomain.map(|b| subdomain_mask(&grid, b)).transpose()?;
            let e = NonlocalEnergy::on(&model, &grid, *eps, a.as_ref())?;
            let f_eps = e.energy(&u)?;
            let fidelity = e.fidelity(&u);
            let limit = field
                .piecewise(grid.dim(), grid.lo(), grid.hi())?
                .map(|pw| limit_energy(&model, &pw, subdomain.map(|b| (b[0], b[1]))));
            run.summary = json!({
                "eps": eps,
                "h": grid.spacing(),
                "F_eps": f_eps,
                "fidelity": fidelity,
                "total": f_eps + fidelity,
                "bulk_limit": limit.map(|l| l.bulk),
                "surface_limit": limit.map(|l| l.surface),
                "fidelity_limit": limit.map(|l| l.fidelity),
                "limit_total": limit.map(|l| l.total()),
            });
            run.json("energy.json", &run.summary.clone())?;
            run.field("field.csv", &u)
        }
        Experiment::Gamma1d {
            scenario,
            x0,
            slope,
            eps,
            cells_per_eps,
            tolerance,
        } => {
            let f = cfg.transition()?;
            let p = match cfg.bulk()? {
                BulkDensity::PPower { p } => p,
                _ => return Err(Failure::Invalid("model.W: the 1D sweep needs p_power".into())),
            };
            let sc = match scenario {
                Scenario::Jump => Scenario1d::Jump { x0: *x0 },
                Scenario::Affine => Scenario1d::Affine { slope: *slope },
            };
            let report = sweep_1d(&f, p, sc, eps, *cells_per_eps)?;
            run.sweep(&report, *tolerance)
        }
        Experiment::Recover2d {
            field,
            eps,
            cells_per_eps,
            gamma,
            tolerance,
        } => {
            let model = cfg.model()?;
            let (dim, lo, hi) = cfg.bounds()?;
            let pw = field
                .piecewise(dim, lo, hi)?
                .ok_or_else(|| Failure::Invalid("experiment.field: recovery needs a piecewise field (zero, affine or step)".into()))?;
            let report = sweep_recovery(&model, &pw, eps, *cells_per_eps, (*gamma).into())?;
            run.sweep(&report, *tolerance)
        }
        Experiment::Extract {
            eps,
            field,
            delta,
            eta,
            levels,
            erosion,
        } => {
            let model = cfg.model()?;
            let grid = cfg.grid()?;
            let u = field.rasterize(&grid)?;
            let margin = erosion.unwrap_or_else(|| (eps * model.kernel.body().circumradius() / grid.spacing()).ceil() as usize);
            let a = Mask::interior(&grid, [margin, if grid.dim() == 2 { margin } else { 0 }]);
            if a.is_empty() {
                return Err(Failure::Invalid("experiment.erosion: subdomain is empty".into()));
            }
            let params = ExtractionParams {
                delta: *delta,
                eta: *eta,
                levels: *levels,
            };
            let res = extract_crack(&model, &u, *eps, params, &a)?;
            run.summary = serde_json::to_value(res.summary).expect("serializable summary");
            run.json("extraction.json", &res.summary)?;
            run.mask("K.pgm", &res.k_mask)?;
            run.mask("K1.pgm", &res.k1_mask)?;
            run.mask("K2.pgm", &res.k2_mask)?;
            run.field("v_field.csv", &res.v_field)?;
            let c = res.summary.certified;
            if !c.all() {
                return Err(Failure::Certificate(format!(
                    "area {}, perimeter {}, bulk {}",
                    c.area_bound_ok, c.perimeter_bound_ok, c.bulk_bound_ok
                )));
            }
            Ok(())
        }
        Experiment::SliceCheck {
            eps,
            field,
            direction,
            delta,
        } => {
            let model = cfg.model()?;
            let grid = cfg.grid()?;
            let u = field.rasterize(&grid)?;
            let xi = match direction {
                Axis::E1 => Direction::e1(),
                Axis::E2 => Direction::e2(),
            };
            let report = slicing_check(&model, &u, *eps, &xi, *delta)?;
            run.summary = serde_json::to_value(report).expect("serializable report");
            run.json("slice.json", &report)?;
            if !report.pass {
                return Err(Failure::Certificate(format!("lhs {} < rhs {}", report.lhs, report.rhs)));
            }
            Ok(())
        }
        Experiment::Minimize {
            eps,
            load,
            constraint,
            init,
            solver,
        } => {
            let model = cfg.model()?;
            let grid = cfg.grid()?;
            if load.is_empty() {
                return Err(Failure::Invalid("experiment.load: at least one edge is required".into()));
            }
            let edges: Vec<_> = load.iter().map(|l| (l.edge.into(), l.displacement)).collect();
            let case = LoadCase::from_edges(&grid, &edges, (*constraint).into())?;
            let u0 = match *init {
                InitConfig::Zero => GridField::zeros(&grid),
                InitConfig::Affine { stretch } => affine_seed(&grid, stretch)?,
                InitConfig::Ramp { stretch, width } => ramp_seed(&grid, stretch, width, cfg.seed)?,
            };
            let (u, report) = minimize(&model, *eps, &case, &u0, &solver.options())?;
            run.write("iterations.csv", |out| report.write_csv(out))?;
            run.field("field.csv", &u)?;
            run.summary = json!({
                "iterations": report.iterations,
                "final_energy": report.final_energy,
                "stop": report.stop,
                "solver_wall_time_s": report.wall_time_s,
            });
            run.json("report.json", &run.summary.clone())
        }
    }
}

/// Rejects fields the experiment cannot rasterize on its grid.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    cfg.check_sections()?;
    match &cfg.experiment {
        Experiment::PhiTable { .. } => {
            cfg.body()?;
        }
        Experiment::ValidateKernel {} => {
            cfg.kernel()?;
        }
        Experiment::Gamma1d { .. } => {
            cfg.transition()?;
            cfg.bulk()?;
        }
        Experiment::Recover2d { field, .. } => {
            cfg.model()?;
            let (dim, lo, hi) = cfg.bounds()?;
            if let FieldConfig::Ramp { .. } = field {
                return Err(Failure::Invalid(
                    "experiment.field: recovery needs a piecewise field (zero, affine or step)".into(),
                ));
            }
            field.piecewise(dim, lo, hi)?;
        }
        Experiment::Energy { field, .. } | Experiment::Extract { field, .. } | Experiment::SliceCheck { field, .. } => {
            cfg.model()?;
            field.rasterize(&cfg.grid()?)?;
        }
        Experiment::Minimize { .. } => {
            cfg.model()?;
            cfg.grid()?;
        }
    }
    Ok(())
}
