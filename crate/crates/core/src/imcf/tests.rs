use std::sync::Arc;

use super::*;
use crate::geom::RadialGrid;

fn model(m: usize, profile: CurvatureProfile) -> Arc<ModelManifold> {
    Arc::new(ModelManifold::new(m, profile, 40.0).unwrap())
}

fn radial(mm: &Arc<ModelManifold>, eps: f64, n: usize) -> Domain {
    Domain::Radial(RadialGrid::new(mm.clone(), eps, 6.0, n, 0.01).unwrap())
}

#[test]
fn schedules() {
    let s = ContinuationSchedule::default();
    assert_eq!(s.p_list[0], 1.5);
    assert_eq!(*s.p_list.last().unwrap(), P_FLOOR);
    assert!(s.validate().is_ok());
    assert_eq!(ContinuationSchedule::mesh().p_list, vec![1.5, 1.25, 1.125, 1.0625]);
    let bad = ContinuationSchedule { p_list: vec![1.2, 1.5], ..Default::default() };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    let bad = ContinuationSchedule { p_list: vec![1.5, 1.0], ..Default::default() };
    assert!(bad.validate().is_err());
    assert!((richardson(1.2, 3.0, 1.1, 2.0) - 1.0).abs() < 1e-12);
}

#[test]
fn flat_plane_point_flow() {
    let mm = model(2, CurvatureProfile::constant(0.0));
    let dom = radial(&mm, 0.01, 800);
    let fr = run_point_flow(&dom, &mm, &ContinuationSchedule::default()).unwrap();
    let r = dom.distance();
    let worst = (0..dom.n_vertices()).map(|v| (fr.rho1[v] / r[v] - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-2, "{worst}");
    assert!(fr.rho1.iter().all(|&x| x > 0.0));
    // w(t = 1) = log 2π
    let v1 = (0..dom.n_vertices()).min_by(|a, b| (r[*a] - 1.0).abs().total_cmp(&(r[*b] - 1.0).abs())).unwrap();
    assert!((fr.w[v1] - (2.0 * std::f64::consts::PI * r[v1]).ln()).abs() < 1e-2);
    assert!(*fr.cauchy_trace.last().unwrap() < 1e-2);
    let lim = check_limit_formula(&dom, &fr, 0.02).unwrap();
    assert!(lim.pass, "{lim:?}");
    for a in check_mean_curvature_bound(&dom, &fr).unwrap() {
        assert!(a.pass, "{a:?}");
        assert!(a.lhs > 0.98 * a.rhs, "not sharp: {a:?}");
    }
    // flat Sobolev constant 1/√(4π): ρ₁ ≥ r/4
    let s = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    for a in lower_bound_rho1(&dom, &fr, &SobolevData::Constant(s)).unwrap() {
        assert!(a.pass, "{a:?}");
    }
    assert!(check_sandwich(&dom, &fr).is_err());
}

#[test]
fn mean_curvature_right_side() {
    for k2 in [0.0, 1.0, 2.5] {
        let mm = model(2, CurvatureProfile::constant(k2));
        for t in [0.1, 1.0, 3.0] {
            let wt = mm.log_v(t) - mm.omega().ln();
            let a = mean_curvature_rhs(&mm, wt).unwrap();
            let b = mean_curvature_rhs_kappa(2, k2.sqrt(), wt);
            assert!((a / mm.mean_curvature(t) - 1.0).abs() < 1e-8);
            assert!((a / b - 1.0).abs() < 1e-8);
            // shifting w recomputes the right side at the shifted argument
            let c = 0.3;
            let shifted = mean_curvature_rhs_kappa(2, k2.sqrt(), wt + c);
            let direct = (-(wt + c)).exp() * (k2 * (2.0 * (wt + c)).exp() + 1.0).sqrt();
            assert!((shifted - direct).abs() < 1e-12 * direct);
        }
    }
    let m3 = model(3, CurvatureProfile::constant(1.0));
    let wt = m3.log_v(2.0) - m3.omega().ln();
    assert!((mean_curvature_rhs(&m3, wt).unwrap() / m3.mean_curvature(2.0) - 1.0).abs() < 1e-8);
}

#[test]
fn model_ball_domain_flow() {
    let mm = model(2, CurvatureProfile::constant(1.0));
    let mut dom = radial(&mm, 0.01, 800);
    let a = 1.0;
    dom.tag_ball("omega", a).unwrap();
    let sched = ContinuationSchedule { p_list: vec![1.2, 1.1, 1.05, 1.025], ..Default::default() };
    let fr = run_domain_flow(&dom, "omega", &mm, &sched).unwrap();
    let (ri, ro) = (fr.r_i.unwrap(), fr.r_o.unwrap());
    assert!((ri / a - 1.0).abs() < 2e-2 && (ro / a - 1.0).abs() < 2e-2, "{ri} {ro}");
    assert!(ri <= ro);
    let r = dom.distance();
    for v in 0..dom.n_vertices() {
        if r[v] > a {
            let want = mm.log_v(r[v]) - mm.log_v(a);
            assert!((fr.w[v] - want).abs() < 2e-2 * (1.0 + want), "r = {}: {} vs {want}", r[v], fr.w[v]);
        }
    }
    for s in check_sandwich(&dom, &fr).unwrap() {
        assert!(s.pass, "{s:?}");
    }
    let g = check_domain_gradient(&dom, &fr).unwrap();
    assert!(g.pass, "{g:?}");
    assert!(matches!(explicit_quadratic_decay_bound(&dom, &fr), Err(Error::Precondition(_))));
}

#[test]
fn quadratic_profile_decay_bound() {
    let mm = model(3, CurvatureProfile::Quadratic { kappa: 0.5 });
    let mut dom = Domain::Radial(RadialGrid::new(mm.clone(), 0.05, 8.0, 800, 0.05).unwrap());
    dom.tag_ball("omega", 1.0).unwrap();
    let sched = ContinuationSchedule { p_list: vec![1.2, 1.1, 1.05], ..Default::default() };
    let fr = run_domain_flow(&dom, "omega", &mm, &sched).unwrap();
    let a = explicit_quadratic_decay_bound(&dom, &fr).unwrap();
    assert!(a.pass, "{a:?}");
    assert!(a.lhs > 0.9 * a.rhs, "bound not attained: {a:?}");
}

#[test]
fn parabolic_family_is_rejected() {
    let mm = model(2, CurvatureProfile::constant(0.0));
    let dom = radial(&mm, 0.01, 50);
    let sched = ContinuationSchedule { p_list: vec![2.0, 1.5], ..Default::default() };
    assert!(matches!(run_point_flow(&dom, &mm, &sched), Err(Error::Parabolic { .. })));
    let mut dom = dom;
    dom.tag_ball("small", 0.001).unwrap();
    assert!(matches!(
        run_domain_flow(&dom, "small", &mm, &ContinuationSchedule::mesh()),
        Err(Error::Precondition(_)) | Err(Error::Domain(_))
    ));
}
