use std::sync::Arc;

use super::*;
use crate::geom::{RadialGrid, RingSpacing, WarpedSurface};
use crate::model::CurvatureProfile;
use crate::psolve::{capacity_potential, complete_potential, green_kernel_numeric, PSolveConfig};

fn model(m: usize, k2: f64) -> Arc<ModelManifold> {
    Arc::new(ModelManifold::new(m, CurvatureProfile::constant(k2), 40.0).unwrap())
}

fn radial(mm: Arc<ModelManifold>, n: usize) -> Domain {
    Domain::Radial(RadialGrid::new(mm, 0.01, 6.0, n, 0.01).unwrap())
}

fn fake_on(dom: &Domain, mm: &Arc<ModelManifold>, p: f64) -> FakeDistanceField {
    let rep = green_kernel_numeric(dom, &PSolveConfig { exhaustion: vec![1.0], ..PSolveConfig::with_p(p) }, &[]).unwrap();
    fake_distance(dom, &rep, &ModelKernel::entire(mm.clone(), p).unwrap()).unwrap()
}

#[test]
fn rho_is_the_distance_on_models() {
    for k2 in [0.0, 1.0] {
        let mm = model(3, k2);
        let dom = radial(mm.clone(), 800);
        for p in [2.0, 1.5, 1.2] {
            let fd = fake_on(&dom, &mm, p);
            let r = dom.distance();
            let worst = (1..dom.n_vertices()).map(|v| (fd.rho[v] / r[v] - 1.0).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-3, "k2 = {k2}, p = {p}: {worst}");
            assert!(fd.round_trip_defect().unwrap() < 1e-8);
            let g = check_gradient_bound(&dom, &fd).unwrap();
            assert!(g.pass && (g.lhs - 1.0).abs() < 1e-2, "{g:?}");
            assert!(check_upper_bound_r(&dom, &fd).unwrap().pass);
        }
    }
}

#[test]
fn rho_tracks_r_near_the_collar() {
    let mm = model(3, 1.0);
    let dom = radial(mm.clone(), 800);
    let fd = fake_on(&dom, &mm, 1.5);
    let r = dom.distance();
    for v in 0..10 {
        assert!((fd.rho[v] / r[v] - 1.0).abs() < 1e-3);
    }
}

#[test]
fn preconditions_and_range() {
    let mm = model(3, 0.0);
    let dom = radial(mm.clone(), 100);
    let rep = green_kernel_numeric(&dom, &PSolveConfig::with_p(2.0), &[]).unwrap();
    let entire = ModelKernel::entire(mm.clone(), 2.0).unwrap();
    assert!(matches!(fake_distance(&dom, &rep, &ModelKernel::new(mm.clone(), 2.0, 5.0).unwrap()), Err(Error::Precondition(_))));
    assert!(matches!(fake_distance(&dom, &rep, &ModelKernel::entire(mm.clone(), 1.5).unwrap()), Err(Error::Precondition(_))));
    let pot = capacity_potential(&dom, TAG_COLLAR, TAG_OUTER, &PSolveConfig::with_p(2.0)).unwrap();
    assert!(matches!(fake_distance(&dom, &pot, &entire), Err(Error::Precondition(_))));
    let mut huge = rep.clone();
    huge.log_field[3] = 1e6;
    assert!(matches!(fake_distance(&dom, &huge, &entire), Err(Error::Range(_))));
}

#[test]
fn larger_curvature_gives_smaller_rho() {
    let flat = model(3, 0.0);
    let hyp = model(3, 1.0);
    let dom = radial(flat.clone(), 300);
    let rep = green_kernel_numeric(&dom, &PSolveConfig::with_p(1.5), &[]).unwrap();
    let a = fake_distance(&dom, &rep, &ModelKernel::entire(flat, 1.5).unwrap()).unwrap();
    let b = fake_distance(&dom, &rep, &ModelKernel::entire(hyp, 1.5).unwrap()).unwrap();
    for v in 0..dom.n_vertices() {
        assert!(b.rho[v] <= a.rho[v] * (1.0 + 1e-12));
    }
    assert!(b.rho[dom.n_vertices() / 2] < 0.99 * a.rho[dom.n_vertices() / 2]);
}

#[test]
fn rho_identity_residuals_on_models() {
    for k2 in [0.0, 1.0] {
        let mm = model(3, k2);
        let coarse = radial(mm.clone(), 400);
        let fine = radial(mm.clone(), 800);
        let p = 1.5;
        let rc = pde_residual_rho(&coarse, &fake_on(&coarse, &mm, p)).unwrap();
        let rf = pde_residual_rho(&fine, &fake_on(&fine, &mm, p)).unwrap();
        assert!(rf < 1e-4, "k2 = {k2}: {rc} {rf}");
        assert!(rf < 0.5 * rc, "no convergence: {rc} -> {rf}");
        let sq = |t: f64| [t * t, 2.0 * t, 2.0];
        let qf = pde_residual_composite(&fine, &fake_on(&fine, &mm, p), sq).unwrap();
        assert!(qf < 1e-4, "ψ = t²: {qf}");
    }
}

#[test]
fn rho_residual_detects_a_non_harmonic_source() {
    let mm = model(3, 0.0);
    let dom = radial(mm.clone(), 400);
    let mut fd = fake_on(&dom, &mm, 1.5);
    let before = pde_residual_rho(&dom, &fd).unwrap();
    for (x, r) in fd.rho.iter_mut().zip(dom.distance()) {
        *x += 0.05 * (3.0 * r).sin();
    }
    let after = pde_residual_rho(&dom, &fd).unwrap();
    assert!(after > 1e-3 && after > 100.0 * before, "{before} {after}");
}

fn cylinder(n_t: usize, n_theta: usize) -> Domain {
    Domain::Surface(
        WarpedSurface {
            h: Arc::new(|t: f64| (-t).exp()),
            f: Arc::new(|_, _| 1.0),
            n_t,
            n_theta,
            t_in: 0.0,
            t_out: 3.0,
            spacing: RingSpacing::Uniform,
            pole: false,
            background: None,
        }
        .build()
        .unwrap(),
    )
}

#[test]
fn hyperbolic_cylinder_attains_the_sharp_estimate() {
    let dom = cylinder(40, 64);
    for p in [1.5, 1.2, 3.0] {
        let l: Vec<f64> = dom.chart_t().iter().map(|t| t / (p - 1.0)).collect();
        let a = check_sharp_gradient_estimate(&dom, &l, p, 1.0, BoundaryTerm::Absent).unwrap();
        assert!(a.pass);
        assert!((a.lhs - a.rhs).abs() <= a.tol, "{a:?}");
        assert!((a.rhs - 1.0 / (p - 1.0)).abs() < 1e-12);
    }
    let zero = vec![0.0; dom.n_vertices()];
    let a = check_sharp_gradient_estimate(&dom, &zero, 2.0, 1.0, BoundaryTerm::Absent).unwrap();
    assert_eq!(a.lhs, 0.0);
    assert!(check_sharp_gradient_estimate(&dom, &zero, 1.0, 1.0, BoundaryTerm::Absent).is_err());
}

#[test]
fn flat_annulus_potential_obeys_the_boundary_term() {
    let mm = model(3, 0.0);
    let dom = Domain::Radial(RadialGrid::new(mm, 0.5, 4.0, 400, 1.0).unwrap());
    let p = 1.5;
    let pot = capacity_potential(&dom, TAG_COLLAR, TAG_OUTER, &PSolveConfig::with_p(p)).unwrap();
    let full = complete_potential(&dom, &pot, TAG_OUTER).unwrap();
    let a = check_sharp_gradient_estimate(&dom, &full.log_field, p, 0.0, BoundaryTerm::Measured(&[TAG_COLLAR, TAG_OUTER])).unwrap();
    assert!(a.pass, "{a:?}");
    assert!(a.rhs > 0.0);
}

#[test]
fn flat_barrier_and_tau_monotonicity() {
    let (m, p, big_r) = (3usize, 1.5, 0.5);
    let want = (m as f64 - p) / ((p - 1.0) * big_r);
    assert!((barrier_slope(m, p, 0.0, big_r, None).unwrap() / want - 1.0).abs() < 1e-6);
    let mut last = f64::INFINITY;
    for tau in [0.1, 0.5, 1.0, 4.0, 20.0] {
        let s = barrier_slope(m, p, 1.0, big_r, Some(tau)).unwrap();
        assert!(s <= last);
        last = s;
    }
    assert!(last >= barrier_slope(m, p, 1.0, big_r, None).unwrap());
    assert!(matches!(barrier_slope(m, p, 0.0, 0.0, None), Err(Error::Precondition(_))));

    let mm = model(3, 0.0);
    let dom = Domain::Radial(RadialGrid::new(mm, big_r, 6.0, 600, 1.0).unwrap());
    let pot = capacity_potential(&dom, TAG_COLLAR, TAG_OUTER, &PSolveConfig::with_p(p)).unwrap();
    let full = complete_potential(&dom, &pot, TAG_OUTER).unwrap();
    let a = check_boundary_barrier(&dom, &full, TAG_COLLAR, &[(0, big_r)], None, 0.0).unwrap();
    assert!(a.pass, "{a:?}");
    assert!((a.lhs / want - 1.0).abs() < 2e-2, "{a:?}");
    assert!(check_boundary_barrier(&dom, &full, TAG_COLLAR, &[(0, -1.0)], None, 0.0).is_err());
    // hyperbolic barrier is the model kernel's log derivative
    let hyp = model(3, 1.0);
    let k = ModelKernel::entire(hyp, p).unwrap();
    assert!((barrier_slope(3, p, 1.0, 0.7, None).unwrap() + k.log_derivative(0.7).unwrap()).abs() < 1e-8);
}
