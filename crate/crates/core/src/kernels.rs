//! Gauge-radial convolution kernels `ρ(x) = ϱ(|x|_S) / Z`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::grid::{Point, Stencil};
use crate::quadrature::adaptive_simpson;

const RADIAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    /// `1 − r`.
    Cone,
    /// `exp(−r² / (2σ²))` cut at `r = 1`.
    TruncatedGaussian {
        sigma: f64,
    },
    /// Piecewise-linear through equally spaced samples on `[0, 1]`.
    Table {
        values: Vec<f64>,
    },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        match self {
            Profile::TruncatedGaussian { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidParameter(format!("gaussian sigma {sigma}")))
            }
            Profile::Table { values } => {
                if values.len() < 2 {
                    return Err(Error::InvalidParameter("table needs at least two values".into()));
                }
                if values.iter().all(|v| *v == 0.0) {
                    return Err(Error::DegenerateProfile);
                }
                let inner = &values[..values.len() - 1];
                if inner.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(values[values.len() - 1] >= 0.0) {
                    return Err(Error::InvalidParameter("table values must be positive on [0, 1)".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `ϱ(r)`, zero for `r ≥ 1`.
    pub fn value(&self, r: f64) -> f64 {
        if !(r < 1.0) {
            return 0.0;
        }
        let r = r.max(0.0);
        match self {
            Profile::Uniform => 1.0,
            Profile::Cone => 1.0 - r,
            Profile::TruncatedGaussian { sigma } => (-r * r / (2.0 * sigma * sigma)).exp(),
            Profile::Table { values } => {
                let n = values.len() - 1;
                let s = r * n as f64;
                let k = (s.floor() as usize).min(n - 1);
                let t = s - k as f64;
                values[k] * (1.0 - t) + values[k + 1] * t
            }
        }
    }

    pub fn is_nonincreasing(&self) -> bool {
        match self {
            Profile::Table { values } => values.windows(2).all(|w| w[1] <= w[0]),
            _ => true,
        }
    }

    /// Points where `ϱ` is not smooth, for splitting radial integrals.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::Table { values } => {
                let n = values.len() - 1;
                (0..=n).map(|k| k as f64 / n as f64).collect()
            }
            _ => vec![0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kernel {
    body: ConvexBody,
    profile: Profile,
    z: f64,
}

impl Kernel {
    pub fn new(body: ConvexBody, profile: Profile) -> Result<Self> {
        profile.validate()?;
        let z = radial_mass(&body, &profile, 1.0);
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::DegenerateProfile);
        }
        Ok(Self { body, profile, z })
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn normalization(&self) -> f64 {
        self.z
    }

    pub fn satisfies_n2(&self) -> bool {
        self.profile.is_nonincreasing()
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.profile.value(self.body.gauge(x)) / self.z
    }

    /// `ρ_ε(x) = ε^{−n} ρ(x / ε)`.
    pub fn eval_scaled(&self, x: Point, eps: f64) -> f64 {
        self.eval([x[0] / eps, x[1] / eps]) / eps.powi(self.dim() as i32)
    }

    /// `sup ρ`, attained at the origin for nonincreasing profiles.
    pub fn sup(&self) -> f64 {
        let n = 1024;
        (0..n).map(|k| self.profile.value(k as f64 / n as f64)).fold(0.0, f64::max) / self.z
    }

    /// `σ_η = ∫_{ηS} ρ`.
    pub fn sigma_eta(&self, eta: f64) -> Result<f64> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("η = {eta} outside (0, 1)")));
        }
        Ok(radial_mass(&self.body, &self.profile, eta) / self.z)
    }

    pub fn truncate(&self, eta: f64) -> Result<TruncatedKernel> {
        let sigma = self.sigma_eta(eta)?;
        if sigma >= 1.0 - 1e-9 {
            return Err(Error::TruncationExhausts);
        }
        Ok(TruncatedKernel {
            base: self.clone(),
            eta,
            sigma,
        })
    }

    /// Cell-averaged stencil of `ρ_scale` on a grid of spacing `h`.
    pub fn stencil(&self, scale: f64, h: f64) -> Stencil {
        build_stencil(&self.body, scale, h, None, |x| self.eval_scaled(x, scale))
    }

    /// Checks (N1) and (N2) and finds a ball minorant `ρ ≥ m_η` on `B_η`.
    pub fn validate(&self, eta: Option<f64>) -> KernelReport {
        let body = &self.body;
        let dim = body.dim();
        let h = 2.0 * body.circumradius() / 64.0;
        let mass = self.stencil(1.0, h).mass(h);
        let outside_zero = sample_directions(dim, 64).iter().all(|d| {
            (1..=32).all(|k| {
                let t = 1.0 + k as f64 / 32.0;
                let g = body.gauge(*d);
                self.eval([d[0] * t / g, d[1] * t / g]) == 0.0
            })
        });
        let inside_positive = sample_directions(dim, 64).iter().all(|d| {
            (0..32).all(|k| {
                let t = k as f64 / 32.0;
                let g = body.gauge(*d);
                self.eval([d[0] * t / g, d[1] * t / g]) > 0.0
            })
        });
        let n1 = (mass - 1.0).abs() <= 1e-3 && outside_zero && inside_positive;

        // (N2): monotone along 64 rays.
        let mut n2 = true;
        for d in sample_directions(dim, 64) {
            let g = body.gauge(d);
            let mut prev = f64::INFINITY;
            for k in 0..=256 {
                let t = 1.2 * k as f64 / 256.0;
                let v = self.eval([d[0] * t / g, d[1] * t / g]);
                if v > prev + 1e-12 {
                    n2 = false;
                }
                prev = v;
            }
        }

        let eta = eta.unwrap_or(0.5 * body.inradius());
        let m_eta = if eta > 0.0 && eta < body.inradius() * (1.0 + 1e-12) {
            let mut m = f64::INFINITY;
            for d in sample_directions(dim, 256) {
                for k in 0..=64 {
                    let t = eta * k as f64 / 64.0;
                    m = m.min(self.eval([d[0] * t, d[1] * t]));
                }
            }
            m
        } else {
            0.0
        };
        KernelReport {
            n1,
            n2,
            discrete_mass: mass,
            ball_minorant: BallMinorant { eta, m_eta },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallMinorant {
    pub eta: f64,
    pub m_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    #[serde(rename = "N1")]
    pub n1: bool,
    #[serde(rename = "N2")]
    pub n2: bool,
    pub discrete_mass: f64,
    pub ball_minorant: BallMinorant,
}

/// `ρ^η = ρ (1 − χ_{ηS}) / (1 − σ_η)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedKernel {
    base: Kernel,
    eta: f64,
    sigma: f64,
}

impl TruncatedKernel {
    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma_eta(&self) -> f64 {
        self.sigma
    }

    pub fn eval(&self, x: Point) -> f64 {
        if self.base.body.gauge(x) < self.eta {
            0.0
        } else {
            self.base.eval(x) / (1.0 - self.sigma)
        }
    }

    pub fn eval_scaled(&self, x: Point, scale: f64) -> f64 {
        self.eval([x[0] / scale, x[1] / scale]) / scale.powi(self.base.dim() as i32)
    }

    pub fn stencil(&self, scale: f64, h: f64) -> Stencil {
        build_stencil(&self.base.body, scale, h, None, |x| self.eval_scaled(x, scale))
    }

    /// Stencil sampled at the same subcell points as `base.stencil(reference, h)`
    /// without refinement, so that pointwise kernel inequalities carry over
    /// to the weights wherever the reference cells are not refined.
    pub fn stencil_matching(&self, scale: f64, h: f64, reference: f64) -> Stencil {
        let sub = subsamples(reference * self.base.body.inradius() / h);
        build_stencil(&self.base.body, scale, h, Some(sub), |x| self.eval_scaled(x, scale))
    }
}

/// `n L^n(S) ∫_0^η ϱ(r) r^{n−1} dr`.
fn radial_mass(body: &ConvexBody, profile: &Profile, eta: f64) -> f64 {
    let n = body.dim() as i32;
    let integrand = |r: f64| profile.value(r) * r.powi(n - 1);
    let mut cuts: Vec<f64> = profile.breakpoints().into_iter().filter(|r| *r < eta).collect();
    cuts.push(eta);
    let radial: f64 = cuts
        .windows(2)
        // Stay strictly below the jump of ϱ at r = 1.
        .map(|w| adaptive_simpson(&integrand, w[0], w[1].min(1.0 - 1e-15), RADIAL_TOL))
        .sum();
    n as f64 * body.volume() * radial
}

/// Subsamples per axis for cell averages: enough that `m · s ≥ 128` where
/// `m` is the number of cells per scaled inradius.
pub fn subsamples(cells_per_inradius: f64) -> usize {
    ((128.0 / cells_per_inradius).ceil() as usize).clamp(4, 32)
}

/// Extra subsampling factor on cells cut by the support boundary.
const REFINE: usize = 8;

fn build_stencil(body: &ConvexBody, scale: f64, h: f64, sub: Option<usize>, density: impl Fn(Point) -> f64 + Sync) -> Stencil {
    let reach = (scale * body.circumradius() / h + 1.0).ceil() as i32;
    // Matched sampling keeps one point set per cell; otherwise refine cells
    // that straddle a jump to zero.
    let (sub, refine) = match sub {
        Some(s) => (s, 1),
        None => (subsamples(scale * body.inradius() / h), REFINE),
    };
    Stencil::from_cell_average(body.dim(), h, [reach, reach], sub, refine, density)
}

fn sample_directions(dim: usize, count: usize) -> Vec<Point> {
    if dim == 1 {
        return vec![[1.0, 0.0], [-1.0, 0.0]];
    }
    (0..count)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            [t.cos(), t.sin()]
        })
        .collect()
}
