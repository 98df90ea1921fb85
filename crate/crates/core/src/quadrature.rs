//! Numerical integration: adaptive Gauss-Kronrod, Gauss-Legendre rules,
//! Wynn-accelerated oscillatory tails.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel: (integral, error estimate).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod on [a,b]. Fails if the requested
/// tolerance (absolute or relative to the result) is not met within
/// the panel budget.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate_with_budget(&f, a, b, abs_tol, rel_tol, 4000)
}

pub fn integrate_with_budget<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (v, e) = gk15(f, a, b);
    panels.push((a, b, v, e));
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if panels.len() >= max_panels {
            return Err(Error::QuadratureFailure {
                tolerance: abs_tol.max(rel_tol * total.abs()),
                estimate: err,
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        let (v1, e1) = gk15(f, pa, m);
        let (v2, e2) = gk15(f, m, pb);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
    }
    // re-sum to shed accumulated cancellation
    Ok(panels.iter().map(|p| p.2).sum())
}

/// Gauss-Legendre nodes and weights on [-1,1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        w[0] = 2.0;
    }
    (x, w)
}

/// Gauss rule on [0, 1/2] built from panels graded geometrically toward
/// k=0, where momentum-space integrands are singular.
pub fn graded_half_rule(panels: usize, order: usize, grading: f64) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let mut edges = Vec::with_capacity(panels + 1);
    for i in 0..=panels {
        let s = i as f64 / panels as f64;
        edges.push(0.5 * s.powf(grading));
    }
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let (a, b) = (edges[p], edges[p + 1]);
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        for j in 0..order {
            nodes.push(c + h * gx[j]);
            weights.push(h * gw[j]);
        }
    }
    (nodes, weights)
}

/// Wynn epsilon extrapolation of a sequence of partial sums.
pub fn wynn_epsilon(s: &[f64]) -> f64 {
    let n = s.len();
    if n < 3 {
        return *s.last().unwrap_or(&0.0);
    }
    let mut prev: Vec<f64> = Vec::new();
    let mut best = s[n - 1];
    let mut best_diff = f64::INFINITY;
    let mut cur = s.to_vec();
    let mut k = 1;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            let p = if k == 1 { 0.0 } else { prev[i + 1] };
            next.push(if d == 0.0 { f64::INFINITY } else { p + 1.0 / d });
        }
        prev = cur;
        cur = next;
        if k % 2 == 0 && cur.len() >= 2 {
            let l = cur.len();
            let diff = (cur[l - 1] - cur[l - 2]).abs();
            if cur[l - 1].is_finite() && diff < best_diff {
                best_diff = diff;
                best = cur[l - 1];
            }
        }
        k += 1;
        if k > 30 {
            break;
        }
    }
    best
}

/// ∫_0^∞ (1 - cos(θ y)) y^{-p} dy for 1 < p < 3, integrated directly in y:
/// substitution on the singular head, then half-period panels on the
/// oscillatory tail summed with Wynn acceleration.
pub fn one_minus_cos_power(theta: f64, p: f64) -> Result<f64> {
    let theta = theta.abs();
    if theta == 0.0 {
        return Ok(0.0);
    }
    let y0 = std::f64::consts::PI / theta;
    // head: y = y0 s^m with m chosen so the integrand is bounded in s
    let m = (1.0 / (3.0 - p)).max(1.0);
    let head = integrate(
        |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let y = y0 * s.powf(m);
            let one_m_cos = 2.0 * (0.5 * theta * y).sin().powi(2);
            one_m_cos * y.powf(-p) * y0 * m * s.powf(m - 1.0)
        },
        0.0,
        1.0,
        1e-15,
        1e-13,
    )?;
    // tail: ∫_{y0}^∞ y^{-p} - ∫_{y0}^∞ cos(θy) y^{-p}
    let power_tail = y0.powf(1.0 - p) / (p - 1.0);
    let half = std::f64::consts::PI / theta;
    let mut partial = Vec::with_capacity(40);
    let mut acc = 0.0;
    for j in 0..40 {
        let a = y0 + j as f64 * half;
        let b = a + half;
        let v = integrate(|y: f64| (theta * y).cos() * y.powf(-p), a, b, 1e-17, 1e-14)?;
        acc += v;
        partial.push(acc);
    }
    let osc = wynn_epsilon(&partial);
    Ok(head + power_tail - osc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(s, 2.0 / 15.0, epsilon = 1e-14);
        let s: f64 = w.iter().sum();
        assert_relative_eq!(s, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn budget_exhaustion_reports_failure() {
        let f = |x: f64| if x > 0.3 { 1.0 / (x - 0.3).abs().sqrt().max(1e-300) } else { 0.0 };
        let r = integrate_with_budget(&f, 0.0, 1.0, 1e-300, 0.0, 10);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        // log 2 = 1 - 1/2 + 1/3 - ...
        let mut s = Vec::new();
        let mut acc = 0.0;
        for n in 1..=20 {
            acc += if n % 2 == 1 { 1.0 } else { -1.0 } / n as f64;
            s.push(acc);
        }
        assert!((wynn_epsilon(&s) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_minus_cos_matches_closed_form() {
        // ∫(1-cos y) y^{-2} dy = π/2
        let v = one_minus_cos_power(1.0, 2.0).unwrap();
        assert_relative_eq!(v, std::f64::consts::FRAC_PI_2, epsilon = 1e-11);
        // scaling: θ^{p-1}
        let v2 = one_minus_cos_power(3.0, 2.5).unwrap();
        let v1 = one_minus_cos_power(1.0, 2.5).unwrap();
        assert_relative_eq!(v2, v1 * 3f64.powf(1.5), max_relative = 1e-11);
    }

    #[test]
    fn graded_rule_mass() {
        let (x, w) = graded_half_rule(10, 8, 2.0);
        let s: f64 = w.iter().sum();
        assert_relative_eq!(s, 0.5, epsilon = 1e-14);
        assert!(x.iter().all(|&k| k > 0.0 && k < 0.5));
    }
}
