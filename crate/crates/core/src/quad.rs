//! Small quadrature and log-domain helpers shared by the numeric modules.

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Eight Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gl8(a: f64, b: f64) -> [(f64, f64); 8] {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 8];
    for k in 0..4 {
        out[2 * k] = (c - r * GL8_X[k], r * GL8_W[k]);
        out[2 * k + 1] = (c + r * GL8_X[k], r * GL8_W[k]);
    }
    out
}

/// Three-point Gauss rule on `[a, b]`.
pub fn gauss3(a: f64, b: f64) -> [(f64, f64); 3] {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let x = (0.6f64).sqrt();
    [(c - r * x, r * 5.0 / 9.0), (c, r * 8.0 / 9.0), (c + r * x, r * 5.0 / 9.0)]
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    gl8(a, b).iter().map(|&(x, w)| w * f(x)).sum()
}

/// `log ∫_a^b exp(phi)` on a single panel, stable for any magnitude of `phi`.
pub fn log_integrate_exp<F: Fn(f64) -> f64>(phi: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return f64::NEG_INFINITY;
    }
    let nodes = gl8(a, b);
    let mut vals = [0.0; 8];
    let mut m = f64::NEG_INFINITY;
    for (k, &(x, _)) in nodes.iter().enumerate() {
        vals[k] = phi(x);
        m = m.max(vals[k]);
    }
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = nodes.iter().zip(vals.iter()).map(|(&(_, w), &v)| w * (v - m).exp()).sum();
    m + s.ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log(exp(a) - exp(b))` for `a >= b`.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    (a, b, (rss / n).sqrt())
}

/// Bisection for a sign change of `f` on `[a, b]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if (b - a).abs() <= tol * (1.0 + c.abs()) {
            return c;
        }
        let fc = f(c);
        if (fc > 0.0) == (fa > 0.0) {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl8_integrates_degree_15() {
        let v = integrate(|x| x.powi(15) + x.powi(4), 0.0, 1.0);
        assert!((v - (1.0 / 16.0 + 0.2)).abs() < 1e-14);
    }

    #[test]
    fn log_integrate_huge_exponent() {
        // ∫_0^1 exp(1000 - 2x) dx
        let v = log_integrate_exp(|x| 1000.0 - 2.0 * x, 0.0, 1.0);
        let exact = 1000.0 + ((1.0 - (-2.0f64).exp()) / 2.0).ln();
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn log_add_sub_roundtrip() {
        let a = 3.0;
        let b = 1.5;
        let s = log_add_exp(a, b);
        assert!((log_sub_exp(s, b) - a).abs() < 1e-13);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
    }

    #[test]
    fn line_fit_exact() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b, r) = fit_line(&x, &y);
        assert!((a - 2.0).abs() < 1e-12 && (b + 0.5).abs() < 1e-12 && r < 1e-12);
    }
}
