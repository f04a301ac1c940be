use serde::Serialize;

use super::profile::CurvatureProfile;
use super::omega;
use crate::error::{Error, Result};
use crate::quad::{bisect, fit_line, gl8};

/// Closed-form or tabulated warping function.
#[derive(Clone, Debug)]
enum Warp {
    Flat,
    Hyperbolic(f64),
    Spherical(f64),
    Power(f64),
    Table { dt: f64, h: Vec<f64>, dh: Vec<f64>, ddh: Vec<f64> },
}

/// Large-`t` behaviour of `log v_h`.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Tail {
    /// `log v = a + b t`
    Exponential { a: f64, b: f64, exact: bool },
    /// `log v = a + b log t`
    Power { a: f64, b: f64, exact: bool },
    /// The warping function vanishes at `r_inf`.
    Compact { r_inf: f64 },
}

/// Rotationally symmetric model `dt² + h(t)² dθ²` of dimension `m`.
#[derive(Clone, Debug)]
pub struct ModelManifold {
    m: usize,
    profile: CurvatureProfile,
    warp: Warp,
    t_max: f64,
    omega: f64,
    tail: Tail,
    vol_dt: f64,
    vol: Vec<f64>,
}

fn quintic(s: f64, d: f64, f0: [f64; 3], f1: [f64; 3]) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let b = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5),
        10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        0.5 * (s3 - 2.0 * s4 + s5),
    ];
    let db = [
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4),
        30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4),
    ];
    let c = [f0[0], d * f0[1], d * d * f0[2], f1[0], d * f1[1], d * d * f1[2]];
    let v: f64 = b.iter().zip(c.iter()).map(|(x, y)| x * y).sum();
    let dv: f64 = db.iter().zip(c.iter()).map(|(x, y)| x * y).sum::<f64>() / d;
    (v, dv)
}

impl ModelManifold {
    /// Builds the model up to `t_max` with the default table resolution.
    pub fn new(m: usize, profile: CurvatureProfile, t_max: f64) -> Result<Self> {
        let n = ((t_max / 0.0025).ceil() as usize).max(4096);
        Self::with_resolution(m, profile, t_max, n)
    }

    pub fn with_resolution(m: usize, profile: CurvatureProfile, t_max: f64, n: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Domain(format!("dimension must be >= 2, got {m}")));
        }
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::Domain(format!("t_max must be positive, got {t_max}")));
        }
        if n < 16 {
            return Err(Error::Domain("table resolution too small".into()));
        }
        profile.validate()?;
        let om = omega(m);
        let lo = om.ln();
        let mf = (m - 1) as f64;
        let (warp, tail) = match &profile {
            CurvatureProfile::Constant { kappa2 } if *kappa2 == 0.0 => {
                (Warp::Flat, Tail::Power { a: lo, b: mf, exact: true })
            }
            CurvatureProfile::Constant { kappa2 } if *kappa2 > 0.0 => {
                let k = kappa2.sqrt();
                let a = lo - mf * (2.0 * k).ln();
                (Warp::Hyperbolic(k), Tail::Exponential { a, b: mf * k, exact: true })
            }
            CurvatureProfile::Constant { kappa2 } => {
                let k = (-kappa2).sqrt();
                (Warp::Spherical(k), Tail::Compact { r_inf: std::f64::consts::PI / k })
            }
            CurvatureProfile::Quadratic { kappa } => {
                let kp = CurvatureProfile::quadratic_exponent(*kappa);
                (Warp::Power(kp), Tail::Power { a: lo, b: mf * kp, exact: true })
            }
            _ => {
                let warp = Self::integrate_table(&profile, t_max, n)?;
                let tail = Self::fit_tail(&warp, lo, mf);
                (warp, tail)
            }
        };
        let t_end = match tail {
            Tail::Compact { r_inf } => r_inf.min(t_max),
            _ => t_max,
        };
        let nv = 4096usize;
        let mut mm = ModelManifold {
            m,
            profile,
            warp,
            t_max,
            omega: om,
            tail,
            vol_dt: t_end / nv as f64,
            vol: Vec::new(),
        };
        let mut vol = Vec::with_capacity(nv + 1);
        vol.push(0.0);
        let mut acc = 0.0;
        for k in 0..nv {
            let a = k as f64 * mm.vol_dt;
            let b = a + mm.vol_dt;
            acc += gl8(a, b).iter().map(|&(x, w)| w * mm.log_v(x).exp()).sum::<f64>();
            vol.push(acc);
        }
        mm.vol = vol;
        Ok(mm)
    }

    fn integrate_table(profile: &CurvatureProfile, t_max: f64, n: usize) -> Result<Warp> {
        let dt = t_max / n as f64;
        let mut h = Vec::with_capacity(n + 1);
        let mut dh = Vec::with_capacity(n + 1);
        let mut ddh = Vec::with_capacity(n + 1);
        let (mut y, mut z) = (0.0f64, 1.0f64);
        let f = |t: f64| {
            let v = profile.eval(t);
            if !v.is_finite() || v < 0.0 {
                Err(Error::InvalidProfile(format!("H({t}) = {v} is not a finite non-negative value")))
            } else {
                Ok(v)
            }
        };
        for k in 0..=n {
            let t = k as f64 * dt;
            let hk = f(t)?;
            h.push(y);
            dh.push(z);
            ddh.push(hk * y);
            if k == n {
                break;
            }
            let hm = f(t + 0.5 * dt)?;
            let h1 = f(t + dt)?;
            let (k1y, k1z) = (z, hk * y);
            let (k2y, k2z) = (z + 0.5 * dt * k1z, hm * (y + 0.5 * dt * k1y));
            let (k3y, k3z) = (z + 0.5 * dt * k2z, hm * (y + 0.5 * dt * k2y));
            let (k4y, k4z) = (z + dt * k3z, h1 * (y + dt * k3y));
            y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            z += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
            if !y.is_finite() || !z.is_finite() {
                return Err(Error::InvalidProfile("warping function overflowed; lower t_max".into()));
            }
        }
        Ok(Warp::Table { dt, h, dh, ddh })
    }

    fn fit_tail(warp: &Warp, log_omega: f64, mf: f64) -> Tail {
        let Warp::Table { dt, h, .. } = warp else { unreachable!() };
        let n = h.len() - 1;
        let k0 = n - (n / 10).max(16);
        let ts: Vec<f64> = (k0..=n).map(|k| k as f64 * dt).collect();
        let ys: Vec<f64> = (k0..=n).map(|k| log_omega + mf * h[k].ln()).collect();
        let lts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let (_, be, re) = fit_line(&ts, &ys);
        let (_, bp, rp) = fit_line(&lts, &ys);
        // slope from the fit, offset pinned to the last node so the extension is continuous
        let y_end = ys[ys.len() - 1];
        let t_end = ts[ts.len() - 1];
        if rp <= re {
            Tail::Power { a: y_end - bp * t_end.ln(), b: bp, exact: false }
        } else {
            Tail::Exponential { a: y_end - be * t_end, b: be, exact: false }
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn profile(&self) -> &CurvatureProfile {
        &self.profile
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    /// `ω_{m-1}`, the area of the unit `(m-1)`-sphere.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Radius where `h` vanishes, for compact models.
    pub fn r_inf(&self) -> Option<f64> {
        match self.tail {
            Tail::Compact { r_inf } => Some(r_inf),
            _ => None,
        }
    }

    pub fn curvature(&self, t: f64) -> f64 {
        self.profile.eval(t)
    }

    fn table_eval(&self, t: f64) -> Option<(f64, f64)> {
        let Warp::Table { dt, h, dh, ddh } = &self.warp else { return None };
        let n = h.len() - 1;
        if t > n as f64 * dt {
            return None;
        }
        let k = ((t / dt) as usize).min(n - 1);
        let s = (t - k as f64 * dt) / dt;
        Some(quintic(s, *dt, [h[k], dh[k], ddh[k]], [h[k + 1], dh[k + 1], ddh[k + 1]]))
    }

    fn tail_log_v(&self, t: f64) -> f64 {
        match self.tail {
            Tail::Exponential { a, b, .. } => a + b * t,
            Tail::Power { a, b, .. } => a + b * t.ln(),
            Tail::Compact { .. } => f64::NAN,
        }
    }

    pub fn log_h(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if t == 0.0 { f64::NEG_INFINITY } else { f64::NAN };
        }
        match &self.warp {
            Warp::Flat => t.ln(),
            Warp::Hyperbolic(k) => {
                let x = k * t;
                if x > 20.0 {
                    x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p() - k.ln()
                } else {
                    (x.sinh() / k).ln()
                }
            }
            Warp::Spherical(k) => {
                if k * t >= std::f64::consts::PI {
                    f64::NAN
                } else {
                    ((k * t).sin() / k).ln()
                }
            }
            Warp::Power(kp) => kp * t.ln(),
            Warp::Table { .. } => match self.table_eval(t) {
                Some((h, _)) => h.ln(),
                None => (self.tail_log_v(t) - self.omega.ln()) / (self.m - 1) as f64,
            },
        }
    }

    pub fn h(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.log_h(t).exp()
    }

    /// `h'(t) / h(t)`.
    pub fn dlog_h(&self, t: f64) -> f64 {
        match &self.warp {
            Warp::Flat => 1.0 / t,
            Warp::Hyperbolic(k) => k / (k * t).tanh(),
            Warp::Spherical(k) => k / (k * t).tan(),
            Warp::Power(kp) => kp / t,
            Warp::Table { .. } => match self.table_eval(t) {
                Some((h, dh)) => dh / h,
                None => {
                    let mf = (self.m - 1) as f64;
                    match self.tail {
                        Tail::Exponential { b, .. } => b / mf,
                        Tail::Power { b, .. } => b / (mf * t),
                        Tail::Compact { .. } => f64::NAN,
                    }
                }
            },
        }
    }

    pub fn dh(&self, t: f64) -> f64 {
        if t == 0.0 {
            return match &self.warp {
                Warp::Power(kp) if *kp > 1.0 => 0.0,
                _ => 1.0,
            };
        }
        self.h(t) * self.dlog_h(t)
    }

    pub fn log_v(&self, t: f64) -> f64 {
        self.omega.ln() + (self.m - 1) as f64 * self.log_h(t)
    }

    /// `v_h'/v_h`, the mean curvature of the model sphere of radius `t`.
    pub fn mean_curvature(&self, t: f64) -> f64 {
        (self.m - 1) as f64 * self.dlog_h(t)
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("radius must be finite and >= 0, got {t}")));
        }
        if let Some(r) = self.r_inf() {
            if t > r {
                return Err(Error::Range(format!("t = {t} beyond r_inf = {r}")));
            }
        }
        Ok(())
    }

    /// `v_h(t) = ω_{m-1} h(t)^{m-1}`.
    pub fn sphere_volume(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        Ok(if t == 0.0 { 0.0 } else { self.log_v(t).exp() })
    }

    /// `V_h(t) = ∫_0^t v_h`.
    pub fn ball_volume(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        let n = self.vol.len() - 1;
        let end = n as f64 * self.vol_dt;
        let f = |a: f64, b: f64| gl8(a, b).iter().map(|&(x, w)| w * self.log_v(x).exp()).sum::<f64>();
        if t <= end {
            let k = ((t / self.vol_dt) as usize).min(n - 1);
            let a = k as f64 * self.vol_dt;
            return Ok(self.vol[k] + if t > a { f(a, t) } else { 0.0 });
        }
        let mut acc = self.vol[n];
        let mut a = end;
        while a < t {
            let b = (a + self.vol_dt).min(t);
            acc += f(a, b);
            a = b;
        }
        Ok(acc)
    }

    /// Integral of `v_h` over `[a, b]`, accurate for short intervals far out.
    pub fn shell_volume(&self, a: f64, b: f64) -> f64 {
        let n = (((b - a) / self.vol_dt).ceil() as usize).max(1);
        let d = (b - a) / n as f64;
        (0..n)
            .map(|k| {
                let x0 = a + k as f64 * d;
                gl8(x0, x0 + d).iter().map(|&(x, w)| w * self.log_v(x).exp()).sum::<f64>()
            })
            .sum()
    }

    fn monotone_bracket(&self) -> f64 {
        match self.tail {
            Tail::Compact { r_inf } => 0.5 * r_inf,
            _ => f64::INFINITY,
        }
    }

    /// Inverse of `v_h` on its increasing branch.
    pub fn inv_sphere_volume(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("sphere volume must be > 0, got {v}")));
        }
        let target = v.ln();
        self.invert_increasing(|t| self.log_v(t), target)
    }

    pub fn inv_ball_volume(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("ball volume must be > 0, got {v}")));
        }
        let target = v.ln();
        self.invert_increasing(|t| self.ball_volume(t).map(|x| x.ln()).unwrap_or(f64::INFINITY), target)
    }

    fn invert_increasing<F: Fn(f64) -> f64>(&self, f: F, target: f64) -> Result<f64> {
        let cap = self.monotone_bracket();
        let mut lo = 1e-300f64.max(1e-12 * self.t_max.min(1.0));
        if f(lo) > target {
            lo = 0.0;
            if cap.is_finite() || f(1e-300) > target {
                // values below the smallest representable radius
                return Ok(0.0);
            }
        }
        let mut hi = self.t_max.min(cap);
        while f(hi) < target {
            if cap.is_finite() {
                return Err(Error::Range("value beyond the increasing branch".into()));
            }
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Range("inverse out of range".into()));
            }
        }
        Ok(bisect(|t| f(t) - target, lo, hi, 1e-15))
    }

    /// Whether the Green kernel of the `p`-Laplacian is finite.
    pub fn nonparabolic(&self, p: f64) -> Result<bool> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("p must be in (1, ∞), got {p}")));
        }
        let alpha = 1.0 / (p - 1.0);
        match self.tail {
            Tail::Compact { .. } => Ok(false),
            Tail::Exponential { b, exact, .. } => {
                if !exact && b.abs() < 1e-9 {
                    return Err(Error::Indeterminate("exponential tail rate is zero".into()));
                }
                Ok(b > 0.0)
            }
            Tail::Power { b, exact, .. } => {
                let beta = b * alpha;
                if !exact && (beta - 1.0).abs() < 1e-6 {
                    return Err(Error::Indeterminate(format!("tail exponent ratio {beta} too close to 1")));
                }
                Ok(beta > 1.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::profile::CurvatureProfile;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        let hyp = ModelManifold::new(3, CurvatureProfile::constant(1.0), 30.0).unwrap();
        assert!((hyp.h(1.0) - 1f64.sinh()).abs() < 1e-14);
        assert!((hyp.dh(1.0) - 1f64.cosh()).abs() < 1e-13);
        let flat = ModelManifold::new(3, CurvatureProfile::constant(0.0), 30.0).unwrap();
        let v = flat.ball_volume(2.0).unwrap();
        assert!((v - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-10);
        let sph = ModelManifold::new(2, CurvatureProfile::constant(-1.0), 5.0).unwrap();
        assert!((sph.r_inf().unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert!(matches!(sph.ball_volume(4.0), Err(Error::Range(_))));
        assert!((sph.ball_volume(std::f64::consts::PI).unwrap() - 4.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn table_matches_closed_form() {
        let tab = ModelManifold::new(3, CurvatureProfile::closure("one", |_| 1.0), 20.0).unwrap();
        for &t in &[1e-3, 0.1, 1.0, 5.0, 19.0] {
            let rel = (tab.h(t) / (t as f64).sinh() - 1.0).abs();
            assert!(rel < 1e-9, "t={t} rel={rel}");
            let d = (tab.dlog_h(t) - 1.0 / t.tanh()).abs();
            assert!(d < 1e-8, "t={t} d={d}");
        }
        assert!(matches!(tab.tail(), Tail::Exponential { .. }));
        assert!(tab.nonparabolic(1.01).unwrap());
    }

    #[test]
    fn inverse_square_reference_values() {
        // reference: 50-digit ODE integration of h'' = h/(1+t)^2
        let mm = ModelManifold::new(3, CurvatureProfile::inverse_square(1.0), 40.0).unwrap();
        assert!((mm.h(1.0) - 1.081_365_283_916_961).abs() < 1e-9);
        assert!((mm.h(2.0) - 2.418_737_067_189_557).abs() < 1e-9);
        assert!(matches!(mm.tail(), Tail::Power { .. }));
    }

    #[test]
    fn parabolicity_rules() {
        let flat = ModelManifold::new(3, CurvatureProfile::constant(0.0), 10.0).unwrap();
        assert!(flat.nonparabolic(2.0).unwrap());
        assert!(!flat.nonparabolic(3.0).unwrap());
        assert!(!flat.nonparabolic(4.0).unwrap());
        let sph = ModelManifold::new(3, CurvatureProfile::constant(-1.0), 10.0).unwrap();
        assert!(!sph.nonparabolic(1.5).unwrap());
        assert!(flat.nonparabolic(1.0).is_err());
    }

    #[test]
    fn inverses() {
        let mm = ModelManifold::new(3, CurvatureProfile::constant(1.0), 20.0).unwrap();
        let v = mm.sphere_volume(2.5).unwrap();
        assert!((mm.inv_sphere_volume(v).unwrap() - 2.5).abs() < 1e-10);
        let big = mm.sphere_volume(30.0).unwrap();
        assert!((mm.inv_sphere_volume(big).unwrap() - 30.0).abs() < 1e-9);
        let vb = mm.ball_volume(1.5).unwrap();
        assert!((mm.inv_ball_volume(vb).unwrap() - 1.5).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sturm_comparison(k1 in 0.0f64..2.0, dk in 0.0f64..2.0, t in 0.01f64..8.0) {
            let lo = ModelManifold::new(3, CurvatureProfile::closure("lo", move |_| k1), 10.0).unwrap();
            let hi = ModelManifold::new(3, CurvatureProfile::closure("hi", move |s| k1 + dk / (1.0 + s)), 10.0).unwrap();
            prop_assert!(hi.h(t) >= lo.h(t) * (1.0 - 1e-12));
            prop_assert!(lo.h(t) >= t * (1.0 - 1e-12));
        }

        #[test]
        fn ball_volume_is_integral_of_sphere_volume(t in 0.2f64..5.0) {
            let mm = ModelManifold::new(4, CurvatureProfile::constant(0.5), 10.0).unwrap();
            let d = 1e-4;
            let num = (mm.ball_volume(t + d).unwrap() - mm.ball_volume(t - d).unwrap()) / (2.0 * d);
            let v = mm.sphere_volume(t).unwrap();
            prop_assert!((num / v - 1.0).abs() < 1e-5);
        }
    }
}
