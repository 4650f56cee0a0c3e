use std::f64::consts::PI;

use aniso_core::analysis::{build_recovery, extract_crack, slicing_check, ExtractionParams};
use aniso_core::energy::{comparison_energies, nonlocal_energy, BulkDensity, EnergyModel, NonlocalEnergy, TransitionFunction};
use aniso_core::fields::{mollify_strain, mollify_with, section, stencil_interior, sym_gradient, GridField, PiecewiseSmoothField};
use aniso_core::geometry::{ConvexBody, Direction};
use aniso_core::grid::{correlate, GridDomain, Mask, Point};
use aniso_core::kernels::{Kernel, Profile};
use aniso_core::solver::{minimize, LoadCase, SolveOptions};
use proptest::prelude::*;
use std::sync::Arc;

fn symmetric_polygon(axes: (f64, f64), tilt: f64, angles: &[f64]) -> ConvexBody {
    let mut a: Vec<f64> = angles.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a.dedup_by(|x, y| (*x - *y).abs() < 0.05);
    let (c, s) = (tilt.cos(), tilt.sin());
    let half: Vec<Point> = a
        .iter()
        .map(|t| {
            let (x, y) = (axes.0 * t.cos(), axes.1 * t.sin());
            [c * x - s * y, s * x + c * y]
        })
        .collect();
    let mut v = half.clone();
    v.extend(half.iter().map(|p| [-p[0], -p[1]]));
    ConvexBody::polygon(v).unwrap()
}

fn bodies() -> Vec<ConvexBody> {
    vec![
        ConvexBody::unit_ball(2),
        ConvexBody::square(1.0).unwrap(),
        ConvexBody::ellipse(1.0, 3.0, 0.0).unwrap(),
        ConvexBody::polygon(vec![[1.0, 0.0], [0.0, 2.0], [-1.0, 0.0], [0.0, -2.0]]).unwrap(),
    ]
}

fn body_strategy() -> impl Strategy<Value = ConvexBody> {
    prop_oneof![
        (0.3f64..3.0).prop_map(|r| ConvexBody::ball(2, r).unwrap()),
        (0.3f64..3.0, 0.3f64..3.0, 0.0f64..PI).prop_map(|(a, b, t)| ConvexBody::ellipse(a, b, t).unwrap()),
        (
            (0.5f64..2.0, 0.5f64..2.0),
            0.0f64..PI,
            prop::collection::vec(0.0f64..PI - 0.1, 2..6)
        )
            .prop_filter_map("too few distinct angles", |(ax, t, angles)| {
                let mut a = angles.clone();
                a.sort_by(|x, y| x.partial_cmp(y).unwrap());
                a.dedup_by(|x, y| (*x - *y).abs() < 0.05);
                (a.len() >= 2).then(|| symmetric_polygon(ax, t, &a))
            }),
    ]
}

fn vec2() -> impl Strategy<Value = Point> {
    (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| [x, y])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn phi_rho_is_a_norm(body in body_strategy(), u in vec2(), v in vec2(), lambda in -4.0f64..4.0) {
        let p = |x: Point| body.phi_rho(x);
        let scaled = p([lambda * u[0], lambda * u[1]]);
        prop_assert!((scaled - lambda.abs() * p(u)).abs() <= 1e-12 * (1.0 + scaled));
        prop_assert!(p([u[0] + v[0], u[1] + v[1]]) <= p(u) + p(v) + 1e-12);
        prop_assert!((p([-v[0], -v[1]]) - p(v)).abs() <= 1e-12 * (1.0 + p(v)));
    }

    #[test]
    fn gauge_is_symmetric_and_subadditive(body in body_strategy(), u in vec2(), v in vec2()) {
        let g = |x: Point| body.gauge(x);
        prop_assert!(g([u[0] + v[0], u[1] + v[1]]) <= g(u) + g(v) + 1e-12);
        prop_assert!((g([-u[0], -u[1]]) - g(u)).abs() <= 1e-12 * (1.0 + g(u)));
    }

    #[test]
    fn chord_times_gauge_is_two(body in body_strategy(), theta in 0.0f64..2.0 * PI) {
        let xi = Direction::from_angle(theta);
        prop_assert!((body.tau(&xi) * body.gauge(xi.get()) - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn phi_rho_duality(body in body_strategy(), theta in 0.0f64..2.0 * PI, r in 0.1f64..10.0) {
        let v = [r * theta.cos(), r * theta.sin()];
        let exact = body.phi_rho(v);
        prop_assert!((exact - body.phi_rho_dual(v, 4096)).abs() <= 0.01 * exact);
    }

    #[test]
    fn kernel_ray_monotonicity(idx in 0usize..4, x in vec2(), y in vec2(), profile in 0usize..3) {
        let body = bodies().swap_remove(idx);
        let profile = [Profile::Uniform, Profile::Cone, Profile::TruncatedGaussian { sigma: 0.4 }][profile].clone();
        let k = Kernel::new(body.clone(), profile).unwrap();
        let (x, y) = if body.gauge(x) >= body.gauge(y) { (x, y) } else { (y, x) };
        prop_assert!(k.eval(x) <= k.eval(y) + 1e-12);
    }

    #[test]
    fn sigma_eta_monotone_and_bounded(idx in 0usize..4, e1 in 0.01f64..0.99, e2 in 0.01f64..0.99) {
        let body = bodies().swap_remove(idx);
        let k = Kernel::new(body.clone(), Profile::Cone).unwrap();
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (s_lo, s_hi) = (k.sigma_eta(lo).unwrap(), k.sigma_eta(hi).unwrap());
        prop_assert!(s_lo <= s_hi + 1e-12);
        prop_assert!(s_hi <= hi * hi * k.sup() * body.volume() + 1e-12);
    }

    #[test]
    fn truncation_commutes_with_scaling(idx in 0usize..4, eta in 0.05f64..0.9, eps in 0.01f64..1.0, x in vec2()) {
        let body = bodies().swap_remove(idx);
        let k = Kernel::new(body.clone(), Profile::Cone).unwrap();
        let t = k.truncate(eta).unwrap();
        let x = [x[0] * eps / 5.0, x[1] * eps / 5.0];
        // Scale first, then remove the core ηεS and renormalize.
        let scaled_first = if body.gauge(x) < eta * eps {
            0.0
        } else {
            k.eval_scaled(x, eps) / (1.0 - t.sigma_eta())
        };
        prop_assert!((t.eval_scaled(x, eps) - scaled_first).abs() <= 1e-12 * (1.0 + scaled_first));
    }

    #[test]
    fn scaling_bound_and_rescaling_limit(t in 0.0f64..50.0, lambda in 0.0f64..1.0, alpha in 0.1f64..5.0, beta in 0.1f64..5.0) {
        for f in [TransitionFunction::MinAffine { alpha, beta }, TransitionFunction::ExpSaturating { alpha, beta }] {
            prop_assert!(f.eval(lambda * t) >= lambda * f.eval(t) - 1e-12);
        }
    }
}

#[test]
fn rescaling_limit_of_exp_saturating() {
    let f = TransitionFunction::ExpSaturating { alpha: 1.3, beta: 0.7 };
    let eps = 1e-6;
    for w in [0.1, 1.0, 10.0] {
        let v = f.eval(eps * w) / eps;
        assert!((v - 1.3 * w).abs() <= 1e-4 * 1.3 * w, "{v}");
    }
}

#[test]
fn discrete_kernel_mass() {
    for body in bodies() {
        for profile in [Profile::Uniform, Profile::Cone] {
            let k = Kernel::new(body.clone(), profile).unwrap();
            // At least 32 cells across the support.
            let h = 2.0 * body.inradius() / 32.0;
            for (label, st) in [
                ("rho", k.stencil(1.0, h)),
                ("rho_eps", k.stencil(0.25, 0.25 * h)),
                ("rho_eta", k.truncate(0.4).unwrap().stencil(1.0, h)),
            ] {
                let m = st.mass(h * if label == "rho_eps" { 0.25 } else { 1.0 });
                assert!((m - 1.0).abs() <= 1e-3, "{label} {body:?} {m}");
            }
        }
    }
}

fn sine_field(g: &GridDomain, c: [f64; 6]) -> GridField {
    GridField::from_fn(g, |x| {
        [
            c[0] * (PI * (x[0] + c[2] * x[1])).sin() + c[4] * x[0],
            c[1] * (PI * (c[3] * x[0] - x[1])).cos() + c[5] * x[1],
        ]
    })
    .unwrap()
}

fn coeffs() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(-1.0f64..1.0)
}

fn cone_model(body: ConvexBody, f: TransitionFunction) -> EnergyModel {
    EnergyModel::new(BulkDensity::PPower { p: 2.0 }, f, None, Kernel::new(body, Profile::Cone).unwrap()).unwrap()
}

fn elastic_model(f: TransitionFunction) -> EnergyModel {
    EnergyModel::new(
        BulkDensity::IsotropicElastic { mu: 1.0, lambda: 0.5 },
        f,
        None,
        Kernel::new(ConvexBody::ellipse(1.0, 2.0, 0.4).unwrap(), Profile::Uniform).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sym_gradient_exact_on_affine(a in prop::array::uniform4(-3.0f64..3.0), b in prop::array::uniform2(-1.0f64..1.0)) {
        let g = GridDomain::new_2d([0.0, 0.0], [1.0, 0.5], 20).unwrap();
        let u = GridField::from_fn(&g, |x| [a[0] * x[0] + a[1] * x[1] + b[0], a[2] * x[0] + a[3] * x[1] + b[1]]).unwrap();
        for e in sym_gradient(&u) {
            prop_assert!((e.xx - a[0]).abs() < 1e-11);
            prop_assert!((e.yy - a[3]).abs() < 1e-11);
            prop_assert!((e.xy - 0.5 * (a[1] + a[2])).abs() < 1e-11);
        }
    }

    #[test]
    fn mollification_commutes_with_strain(c in coeffs()) {
        let g = GridDomain::unit_square(96).unwrap();
        let u = sine_field(&g, c);
        let k = Kernel::new(ConvexBody::unit_ball(2), Profile::Cone).unwrap();
        let st = k.stencil(32.0 * g.spacing(), g.spacing());
        let (v, valid) = mollify_with(&u, &st).unwrap();
        let lhs = sym_gradient(&v);
        let rhs = mollify_strain(&g, &sym_gradient(&u), &st, None);
        let r = st.reach();
        let inner = Mask::interior(&g, [r[0] as usize + 1, r[1] as usize + 1]);
        prop_assert!(inner.is_subset_of(&valid));
        let scale = rhs.iter().map(|e| e.norm()).fold(0.0, f64::max).max(1e-3);
        for k in (0..g.len()).filter(|&k| inner.get(k)) {
            prop_assert!(lhs[k].add(&rhs[k].scale(-1.0)).norm() <= 1e-3 * scale);
        }
    }

    #[test]
    fn section_derivative_is_directional_strain(c in coeffs(), theta in 0.0f64..PI, y0 in 0.3f64..0.7) {
        let xi = Direction::from_angle(theta);
        let d = xi.get();
        let n = 256;
        let g = GridDomain::unit_square(n).unwrap();
        let u = sine_field(&g, c);
        let s = section(&u, &xi, [0.5, y0]).unwrap();
        // Exact directional strain of the analytic field.
        let exact = |x: Point| {
            let a = PI * c[0] * (PI * (x[0] + c[2] * x[1])).cos();
            let b = -PI * c[1] * (PI * (c[3] * x[0] - x[1])).sin();
            let gxx = a + c[4];
            let gxy = a * c[2];
            let gyx = b * c[3];
            let gyy = -b + c[5];
            d[0] * d[0] * gxx + d[0] * d[1] * (gxy + gyx) + d[1] * d[1] * gyy
        };
        let m = s.samples.len();
        prop_assume!(m > 20);
        for k in m / 4..3 * m / 4 {
            let dv = (s.samples[k + 1] - s.samples[k - 1]) / (2.0 * s.spacing);
            let t = s.t(k);
            let x = [0.5 + t * d[0], y0 + t * d[1]];
            prop_assert!((dv - exact(x)).abs() < 0.05, "{dv} vs {}", exact(x));
        }
    }

    #[test]
    fn superadditive_and_monotone_in_a(c in coeffs(), split in 12usize..36, smooth in any::<bool>()) {
        let f = if smooth {
            TransitionFunction::ExpSaturating { alpha: 1.0, beta: 0.5 }
        } else {
            TransitionFunction::MinAffine { alpha: 1.0, beta: 0.5 }
        };
        let g = GridDomain::unit_square(48).unwrap();
        let m = cone_model(ConvexBody::unit_ball(2), f);
        let u = sine_field(&g, c);
        let eps = 0.1;
        let a1 = Mask::from_fn(&g, |x| x[0] < split as f64 / 48.0);
        let a2 = Mask::from_fn(&g, |x| x[0] >= split as f64 / 48.0 && x[1] < 0.7);
        let both = a1.or(&a2);
        let e = |a: &Mask| nonlocal_energy(&m, &u, eps, Some(a)).unwrap();
        prop_assert!(e(&both) >= e(&a1) + e(&a2) - 1e-12);
        prop_assert!(e(&a1) <= e(&both) + 1e-12);
        prop_assert!(e(&both) <= e(&Mask::full(&g)) + 1e-12);
    }

    #[test]
    fn comparison_energy_is_below(c in coeffs(), eta in 0.2f64..0.9, elastic in any::<bool>()) {
        let g = GridDomain::unit_square(48).unwrap();
        let f = TransitionFunction::ExpSaturating { alpha: 1.0, beta: 1.0 };
        let m = if elastic { elastic_model(f) } else { cone_model(ConvexBody::unit_ball(2), f) };
        let u = sine_field(&g, c);
        let a = Mask::interior(&g, [6, 6]);
        let (tilde, full) = comparison_energies(&m, &u, 0.12, eta, &a).unwrap();
        prop_assert!(tilde <= full + 1e-9, "{tilde} > {full}");
    }

    #[test]
    fn jensen_for_mollified_strain(c in coeffs(), elastic in any::<bool>()) {
        let g = GridDomain::unit_square(64).unwrap();
        let f = TransitionFunction::MinAffine { alpha: 1.0, beta: 1.0 };
        let m = if elastic { elastic_model(f) } else { cone_model(ConvexBody::unit_ball(2), f) };
        let u = sine_field(&g, c);
        let h = g.spacing();
        // Mass-one stencil so that the discrete average is a convex combination.
        let st = m.kernel.stencil(0.15, h).normalized(h);
        let e = sym_gradient(&u);
        let we: Vec<f64> = e.iter().map(|s| m.w.eval(s)).collect();
        let lhs = mollify_strain(&g, &e, &st, None);
        let rhs = correlate(&g, &we, &st, None, None);
        let inside = stencil_interior(&g, &st);
        for k in (0..g.len()).filter(|&k| inside.get(k)) {
            prop_assert!(m.w.eval(&lhs[k]) <= rhs[k] + 1e-6);
        }
    }

    #[test]
    fn slicing_inequality_on_smooth_fields(c in coeffs(), eps in prop::sample::select(vec![0.1, 0.15, 0.2]), axis in 0usize..2, delta in 0.1f64..0.6) {
        let g = GridDomain::unit_square(48).unwrap();
        let m = cone_model(ConvexBody::unit_ball(2), TransitionFunction::MinAffine { alpha: 1.0, beta: 1.0 });
        let u = sine_field(&g, c);
        let xi = if axis == 0 { Direction::e1() } else { Direction::e2() };
        let r = slicing_check(&m, &u, eps, &xi, delta).unwrap();
        prop_assert!(r.pass, "{r:?}");
    }
}

#[test]
fn slicing_inequality_on_jumps_and_elastic_bulk() {
    let g = GridDomain::unit_square(96).unwrap();
    let f = TransitionFunction::ExpSaturating { alpha: 1.0, beta: 1.0 };
    for m in [elastic_model(f), cone_model(ConvexBody::square(1.0).unwrap(), f)] {
        let u = PiecewiseSmoothField::step([0.0, 0.0], [1.0, 1.0], [0.2, 0.0], [0.7, 1.0], [0.0, 0.0], [0.3, -0.2])
            .unwrap()
            .rasterize(&g)
            .unwrap();
        for xi in [Direction::e1(), Direction::e2()] {
            let r = slicing_check(&m, &u, 0.2, &xi, 0.3).unwrap();
            assert!(r.pass && r.rhs > 0.0, "{r:?}");
        }
    }
}

#[test]
fn extraction_certificates_on_shipped_fields() {
    let g = GridDomain::unit_square(256).unwrap();
    let eps = 0.1;
    let margin = (eps * 1.0 / g.spacing()).ceil() as usize;
    let a = Mask::interior(&g, [margin, margin]);
    let params = ExtractionParams {
        delta: 0.5,
        eta: 0.5,
        levels: 16,
    };
    let fields: Vec<GridField> = vec![
        sine_field(&g, [0.3, -0.2, 0.5, 0.1, 0.2, -0.1]),
        GridField::from_fn(&g, |x| [((x[0] - x[1]) / 1e-3).clamp(0.0, 1.0), 0.0]).unwrap(),
        PiecewiseSmoothField::step([0.0, 0.0], [1.0, 1.0], [0.0, 0.4], [1.0, 0.6], [0.0, 0.0], [0.5, 0.5])
            .unwrap()
            .rasterize(&g)
            .unwrap(),
    ];
    for f in [
        TransitionFunction::MinAffine { alpha: 1.0, beta: 1.0 },
        TransitionFunction::ExpSaturating { alpha: 2.0, beta: 0.5 },
    ] {
        for m in [
            cone_model(ConvexBody::unit_ball(2), f),
            cone_model(ConvexBody::square(1.0).unwrap(), f),
        ] {
            for u in &fields {
                let r = extract_crack(&m, u, eps, params, &a).unwrap();
                assert!(r.summary.certified.all(), "{:?}", r.summary);
            }
        }
    }
}

#[test]
fn recovery_without_jump_approaches_bulk() {
    let m = cone_model(ConvexBody::unit_ball(2), TransitionFunction::MinAffine { alpha: 1.0, beta: 1.0 });
    let map: aniso_core::fields::MapFn = Arc::new(|x| [0.1 * x[0] + 0.05 * x[1] * x[1], 0.0]);
    let grad: aniso_core::fields::GradFn = Arc::new(|x| [[0.1, 0.1 * x[1]], [0.0, 0.0]]);
    let u = PiecewiseSmoothField::smooth(2, [0.0, 0.0], [1.0, 1.0], map, grad).unwrap();
    let bulk = aniso_core::energy::limit_energy(&m, &u, None).total();
    let report = aniso_core::analysis::gamma_sweep(&[0.08, 0.04, 0.02], bulk, |eps| {
        let g = GridDomain::with_spacing(2, [0.0, 0.0], [1.0, 1.0], eps / 8.0)?;
        let ue = build_recovery(&m, &u, eps, eps * eps, &g)?;
        Ok((g.spacing(), nonlocal_energy(&m, &ue, eps, None)?))
    })
    .unwrap();
    assert!(report.rel_gap < 0.03, "{report:?}");
}

#[test]
fn halving_the_grid_barely_moves_smooth_energies() {
    let m = cone_model(
        ConvexBody::ellipse(1.0, 2.0, 0.3).unwrap(),
        TransitionFunction::ExpSaturating { alpha: 1.0, beta: 1.0 },
    );
    let eps = 0.1;
    let energy = |cells: usize| {
        let g = GridDomain::unit_square(cells).unwrap();
        nonlocal_energy(&m, &sine_field(&g, [0.2, 0.1, 0.3, -0.4, 0.1, 0.0]), eps, None).unwrap()
    };
    let (coarse, fine) = (energy(80), energy(160));
    assert!((coarse - fine).abs() < 0.01 * fine, "{coarse} {fine}");
}

#[test]
fn converged_gradient_is_orthogonal_to_constraints() {
    let g = GridDomain::new_1d(0.0, 1.0, 48).unwrap();
    let m = EnergyModel::new(
        BulkDensity::PPower { p: 2.0 },
        TransitionFunction::ExpSaturating { alpha: 1.0, beta: 1.0 },
        None,
        Kernel::new(ConvexBody::unit_ball(1), Profile::Uniform).unwrap(),
    )
    .unwrap();
    let load = LoadCase::stretched_bar(&g, 0.4).unwrap();
    let init = GridField::from_fn(&g, |x| [0.4 * x[0] + 0.01 * (PI * x[0]).sin(), 0.0]).unwrap();
    let opts = SolveOptions {
        max_iter: 200_000,
        ..SolveOptions::default()
    };
    let (u, r) = minimize(&m, 0.1, &load, &init, &opts).unwrap();
    assert_eq!(r.stop, aniso_core::solver::StopReason::Converged);
    assert!(r.energy_history.windows(2).all(|w| w[1] <= w[0]));
    // The free gradient at the solution only has components on constrained
    // nodes (up to the stopping tolerance).
    let (_, grad) = NonlocalEnergy::on(&m, &g, 0.1, None).unwrap().gradient(&u).unwrap();
    let free: f64 = (0..g.len())
        .filter(|&k| !load.mask().get(k))
        .map(|k| grad[k][0].powi(2))
        .sum::<f64>()
        .sqrt();
    let g0 = r.grad_norm_history[0];
    assert!(free <= 1e-6 * g0, "{free} vs {g0}");
}
