use std::sync::Arc;

use super::manifold::{ModelManifold, Tail};
use crate::error::{Error, Result};
use crate::quad::{log_add_exp, log_integrate_exp};

/// Result of inverting a kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inversion {
    pub t: f64,
    /// The radius lies past the tabulated range and came from the analytic tail.
    pub extrapolated: bool,
}

/// Radial Green kernel `G_R(t) = ∫_t^R v_h^{-1/(p-1)}` of a model, `R = ∞` for the entire kernel.
///
/// Values are kept as logarithms; `exp` of them under- or overflows long before the
/// logarithms lose accuracy when `p` is close to 1.
#[derive(Clone, Debug)]
pub struct ModelKernel {
    model: Arc<ModelManifold>,
    p: f64,
    alpha: f64,
    radius: f64,
    nodes: Vec<f64>,
    log_i: Vec<f64>,
}

impl ModelKernel {
    pub fn new(model: Arc<ModelManifold>, p: f64, radius: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("p must be in (1, ∞), got {p}")));
        }
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("radius must be > 0, got {radius}")));
        }
        if let Some(r) = model.r_inf() {
            if radius >= r {
                return Err(Error::Parabolic { p });
            }
        }
        if radius.is_infinite() && !model.nonparabolic(p)? {
            return Err(Error::Parabolic { p });
        }
        let alpha = 1.0 / (p - 1.0);
        let t_end = if radius.is_finite() { radius } else { model.t_max() };
        let t_lo = 1e-3 * t_end.min(1.0);
        let mf = (model.dim() - 1) as f64;
        let dmax = t_end / 2000.0;
        let mut nodes = vec![t_lo];
        let mut s = t_lo;
        while s < t_end {
            let slope = alpha * mf * model.dlog_h(s).abs();
            let mut step = (0.25 * s).min(dmax);
            if slope > 0.0 {
                step = step.min(0.5 / slope);
            }
            s = (s + step).min(t_end);
            if t_end - s < 1e-9 * step {
                s = t_end;
            }
            nodes.push(s);
        }
        let phi = |x: f64| -alpha * model.log_v(x);
        let n = nodes.len();
        let mut log_i = vec![f64::NEG_INFINITY; n];
        log_i[n - 1] = if radius.is_finite() {
            f64::NEG_INFINITY
        } else {
            Self::tail_log_integral(model.tail(), alpha, t_end)
        };
        for k in (0..n - 1).rev() {
            log_i[k] = log_add_exp(log_i[k + 1], log_integrate_exp(phi, nodes[k], nodes[k + 1]));
        }
        Ok(ModelKernel { model, p, alpha, radius, nodes, log_i })
    }

    /// Entire kernel on the model.
    pub fn entire(model: Arc<ModelManifold>, p: f64) -> Result<Self> {
        Self::new(model, p, f64::INFINITY)
    }

    fn tail_log_integral(tail: Tail, alpha: f64, t: f64) -> f64 {
        match tail {
            Tail::Exponential { a, b, .. } => -alpha * (a + b * t) - (alpha * b).ln(),
            Tail::Power { a, b, .. } => -alpha * a + (1.0 - alpha * b) * t.ln() - (alpha * b - 1.0).ln(),
            Tail::Compact { .. } => f64::NAN,
        }
    }

    fn tail_inverse(&self, lg: f64) -> f64 {
        let al = self.alpha;
        match self.model.tail() {
            Tail::Exponential { a, b, .. } => (-lg - (al * b).ln()) / (al * b) - a / b,
            Tail::Power { a, b, .. } => ((lg + al * a + (al * b - 1.0).ln()) / (1.0 - al * b)).exp(),
            Tail::Compact { .. } => f64::NAN,
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn model(&self) -> &Arc<ModelManifold> {
        &self.model
    }

    /// Largest radius covered by the quadrature table.
    pub fn table_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    fn phi(&self, t: f64) -> f64 {
        -self.alpha * self.model.log_v(t)
    }

    pub fn log_value(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || t.is_nan() {
            return Err(Error::Domain(format!("kernel argument must be > 0, got {t}")));
        }
        if t > self.radius {
            return Err(Error::Range(format!("t = {t} beyond R = {}", self.radius)));
        }
        if t == self.radius {
            return Ok(f64::NEG_INFINITY);
        }
        let t_lo = self.nodes[0];
        let t_end = self.table_end();
        if t >= t_end {
            return Ok(Self::tail_log_integral(self.model.tail(), self.alpha, t));
        }
        if t < t_lo {
            return Ok(self.inner_log_value(t));
        }
        let k = self.nodes.partition_point(|&x| x <= t) - 1;
        let k = k.min(self.nodes.len() - 2);
        let part = log_integrate_exp(|x| self.phi(x), t, self.nodes[k + 1]);
        Ok(log_add_exp(self.log_i[k + 1], part))
    }

    fn inner_log_value(&self, t: f64) -> f64 {
        let t_lo = self.nodes[0];
        let mf = (self.model.dim() - 1) as f64;
        let mut acc = f64::NEG_INFINITY;
        let mut s = t;
        while s < t_lo {
            let slope = self.alpha * mf * self.model.dlog_h(s).abs();
            let mut step = (0.25 * s).min(t_lo - s);
            if slope > 0.0 {
                step = step.min(0.5 / slope);
            }
            let b = s + step;
            acc = log_add_exp(acc, log_integrate_exp(|x| self.phi(x), s, b));
            s = b;
            // remaining piece up to t_lo is bounded by (t_lo - s) sup integrand
            if (t_lo - s).ln() + self.phi(s) < acc - 38.0 {
                break;
            }
        }
        log_add_exp(acc, self.log_i[0])
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        self.log_value(t).map(f64::exp)
    }

    /// `(log G)'(t) = -v_h(t)^{-1/(p-1)} / G(t)`.
    pub fn log_derivative(&self, t: f64) -> Result<f64> {
        let lg = self.log_value(t)?;
        Ok(-(self.phi(t) - lg).exp())
    }

    /// Radius `t` with `G(t) = g`.
    pub fn invert(&self, g: f64) -> Result<Inversion> {
        if !(g >= 0.0) {
            return Err(Error::Domain(format!("kernel value must be >= 0, got {g}")));
        }
        self.invert_log(g.ln())
    }

    /// Radius `t` with `log G(t) = lg`.
    pub fn invert_log(&self, lg: f64) -> Result<Inversion> {
        if lg.is_nan() {
            return Err(Error::Domain("NaN kernel value".into()));
        }
        if lg == f64::NEG_INFINITY {
            return if self.radius.is_finite() {
                Ok(Inversion { t: self.radius, extrapolated: false })
            } else {
                Err(Error::Range("zero kernel value has no preimage".into()))
            };
        }
        let n = self.nodes.len();
        if lg < self.log_i[n - 1] {
            let t = self.tail_inverse(lg);
            return Ok(Inversion { t, extrapolated: true });
        }
        let (a, b) = if lg > self.log_i[0] {
            let mut a = self.nodes[0];
            loop {
                a *= 0.1;
                if a < 1e-280 {
                    return Err(Error::Range(format!("log value {lg} exceeds the kernel at the pole")));
                }
                if self.inner_log_value(a) >= lg {
                    break;
                }
            }
            (a, self.nodes[0])
        } else {
            // log_i is non-increasing along the nodes
            let k = self.log_i.partition_point(|&x| x >= lg);
            let k = k.clamp(1, n - 1);
            (self.nodes[k - 1], self.nodes[k])
        };
        let t = self.solve_bracket(lg, a, b)?;
        Ok(Inversion { t, extrapolated: false })
    }

    fn solve_bracket(&self, lg: f64, mut a: f64, mut b: f64) -> Result<f64> {
        let mut t = 0.5 * (a + b);
        for _ in 0..200 {
            let f = self.log_value(t)? - lg;
            if f == 0.0 {
                return Ok(t);
            }
            if f > 0.0 {
                a = t;
            } else {
                b = t;
            }
            let d = self.log_derivative(t)?;
            let mut next = t - f / d;
            if !(next > a && next < b) || !next.is_finite() {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() <= 1e-15 * t || (b - a) <= 1e-15 * b {
                return Ok(next);
            }
            t = next;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mu_euclidean, CurvatureProfile};
    use proptest::prelude::*;

    fn hyp3() -> Arc<ModelManifold> {
        Arc::new(ModelManifold::new(3, CurvatureProfile::constant(1.0), 30.0).unwrap())
    }

    #[test]
    fn hyperbolic_reference_values() {
        // high-precision quadrature references
        let k2 = ModelKernel::entire(hyp3(), 2.0).unwrap();
        let v = k2.value(1.0).unwrap();
        assert!((v / 0.024_910_556_524_700_641 - 1.0).abs() < 1e-9, "{v}");
        let k15 = ModelKernel::entire(hyp3(), 1.5).unwrap();
        let v = k15.value(1.0).unwrap();
        assert!((v / 0.000_685_285_696_227_103_07 - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn flat_kernel_is_mu() {
        let flat = Arc::new(ModelManifold::new(3, CurvatureProfile::constant(0.0), 20.0).unwrap());
        for &p in &[1.1, 1.5, 2.0, 2.5] {
            let k = ModelKernel::entire(flat.clone(), p).unwrap();
            for &t in &[1e-5, 1e-2, 0.5, 3.0, 19.0, 50.0] {
                let rel = (k.log_value(t).unwrap() - mu_euclidean(3, p, t).unwrap().ln()).abs();
                assert!(rel < 1e-9, "p={p} t={t} rel={rel}");
            }
        }
        let k = ModelKernel::entire(flat.clone(), 2.0).unwrap();
        assert!((k.value(1.0).unwrap() - 0.079_577_471_545_947_668).abs() < 1e-12);
        assert!(matches!(ModelKernel::entire(flat, 3.0), Err(Error::Parabolic { .. })));
    }

    #[test]
    fn small_p_in_log_domain() {
        let k = ModelKernel::entire(hyp3(), 1.001).unwrap();
        let lg = k.log_value(2.0).unwrap();
        assert!(lg.is_finite() && lg < -1000.0);
        // [G]^{p-1} → 1/v_h as p → 1
        let mm = hyp3();
        let lim = 0.001 * lg + mm.log_v(2.0);
        assert!(lim.abs() < 0.02, "{lim}");
        let inv = k.invert_log(lg).unwrap();
        assert!((inv.t - 2.0).abs() < 1e-10);
    }

    #[test]
    fn finite_radius_kernel() {
        let k = ModelKernel::new(hyp3(), 2.0, 3.0).unwrap();
        assert_eq!(k.log_value(3.0).unwrap(), f64::NEG_INFINITY);
        assert!(k.log_value(3.5).is_err());
        let e = ModelKernel::entire(hyp3(), 2.0).unwrap();
        let exact = |t: f64| ((1.0 / t.tanh()) - (1.0 / 3f64.tanh())) / (4.0 * std::f64::consts::PI);
        assert!((k.value(1.0).unwrap() / exact(1.0) - 1.0).abs() < 1e-9);
        assert!(k.value(1.0).unwrap() < e.value(1.0).unwrap());
        assert_eq!(k.invert(0.0).unwrap().t, 3.0);
    }

    #[test]
    fn extrapolated_tail_is_flagged() {
        let k = ModelKernel::entire(hyp3(), 2.0).unwrap();
        let lg = k.log_value(45.0).unwrap();
        let inv = k.invert_log(lg).unwrap();
        assert!(inv.extrapolated);
        assert!((inv.t - 45.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn invert_roundtrip(t in 1e-4f64..25.0, p in 1.05f64..2.8) {
            let k = ModelKernel::entire(hyp3(), p).unwrap();
            let lg = k.log_value(t).unwrap();
            let back = k.invert_log(lg).unwrap();
            prop_assert!((back.t - t).abs() <= 1e-10 * t.max(1.0));
        }

        #[test]
        fn kernel_decreasing_and_radius_monotone(t in 0.01f64..5.0, dt in 0.001f64..1.0, r in 6.0f64..12.0) {
            let mm = hyp3();
            let k = ModelKernel::entire(mm.clone(), 1.7).unwrap();
            prop_assert!(k.log_value(t + dt).unwrap() < k.log_value(t).unwrap());
            let kr = ModelKernel::new(mm, 1.7, r).unwrap();
            prop_assert!(kr.log_value(t).unwrap() <= k.log_value(t).unwrap());
        }

        #[test]
        fn chi_decreases_to_limit(t in 0.05f64..8.0) {
            // χ = -(log G)' decreases to (m-1)κ/(p-1)
            let p = 1.5;
            let k = ModelKernel::entire(hyp3(), p).unwrap();
            let c1 = -k.log_derivative(t).unwrap();
            let c2 = -k.log_derivative(t * 1.1).unwrap();
            prop_assert!(c2 <= c1 * (1.0 + 1e-10));
            prop_assert!(c2 >= 2.0 / (p - 1.0) * (1.0 - 1e-9));
        }
    }
}
