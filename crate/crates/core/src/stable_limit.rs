//! The jump process η_a with jumps of size > a, the interface rule on
//! straddling jumps, and exact symmetric α-stable increments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kinetic_mc::{InitialField, McOptions};
use crate::model::{DerivedConstants, InterfaceCoefficients, Outcome};
use crate::rng::{exp1, open01, substream};
use crate::stats::{Estimate, Welford};

/// η_a: compound Poisson with rate Q and jump density ĉ q_β(u) 1{|u|>a} / Q.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizedLevyConfig {
    pub a: f64,
    pub jump_rate: f64,
    pub alpha: f64,
}

impl RegularizedLevyConfig {
    pub fn new(constants: &DerivedConstants, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::NonPositive { name: "a", value: a });
        }
        Ok(RegularizedLevyConfig {
            a,
            jump_rate: constants.jump_rate(a),
            alpha: constants.alpha,
        })
    }
}

/// Jump with |J| = a U^{-1/α} and a fair random sign.
#[inline]
pub fn sample_truncated_jump<R: Rng + ?Sized>(cfg: &RegularizedLevyConfig, rng: &mut R) -> f64 {
    let m = cfg.a * open01(rng).powf(-1.0 / cfg.alpha);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub y_before: f64,
    pub y_after: f64,
    pub crossing: bool,
    pub outcome: Option<Outcome>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevyPath {
    pub jumps: Vec<JumpRecord>,
    pub crossing_times: Vec<f64>,
    pub end_position: f64,
    pub absorbed: bool,
}

#[inline]
fn straddles(y: f64, y_new: f64, jump: f64) -> bool {
    // landing exactly on 0 counts as crossing in the jump direction
    y * y_new < 0.0 || (y_new == 0.0 && jump * y < 0.0)
}

/// η_a started at y and run for time `t_end`, with the interface rule
/// applied on every straddling jump (or no rule if `coeffs` is None).
pub fn simulate_eta<R: Rng + ?Sized>(
    y: f64,
    t_end: f64,
    cfg: &RegularizedLevyConfig,
    coeffs: Option<&InterfaceCoefficients>,
    record: bool,
    rng: &mut R,
) -> Result<LevyPath> {
    if y == 0.0 {
        return Err(Error::InvalidOrigin);
    }
    let mut path = LevyPath::default();
    let mut pos = y;
    let mut t = 0.0;
    loop {
        t += exp1(rng) / cfg.jump_rate;
        if t > t_end {
            break;
        }
        let j = sample_truncated_jump(cfg, rng);
        let mut new = pos + j;
        let crossing = straddles(pos, new, j);
        let mut outcome = None;
        if crossing {
            path.crossing_times.push(t);
            if let Some(c) = coeffs {
                // momentum-free limit: coefficients frozen at k = 0
                let o = c.outcome(0.0, open01(rng));
                outcome = Some(o);
                match o {
                    Outcome::Transmit => {}
                    Outcome::Reflect => new = -new,
                    Outcome::Absorb => {
                        path.absorbed = true;
                    }
                }
            }
        }
        if record {
            path.jumps.push(JumpRecord {
                time: t,
                y_before: pos,
                y_after: if path.absorbed { 0.0 } else { new },
                crossing,
                outcome,
            });
        }
        if path.absorbed {
            pos = 0.0;
            break;
        }
        pos = if new == 0.0 { f64::MIN_POSITIVE * j.signum() } else { new };
    }
    path.end_position = pos;
    Ok(path)
}

/// First `m_max` crossings of the free η_a: (times, positions right after
/// the straddling jumps), stopped at time `t_max`.
pub fn free_eta_crossings<R: Rng + ?Sized>(
    y: f64,
    m_max: usize,
    t_max: f64,
    cfg: &RegularizedLevyConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if y == 0.0 {
        return Err(Error::InvalidOrigin);
    }
    let (mut times, mut positions) = (Vec::new(), Vec::new());
    let mut pos = y;
    let mut t = 0.0;
    while times.len() < m_max {
        t += exp1(rng) / cfg.jump_rate;
        if t > t_max {
            break;
        }
        let j = sample_truncated_jump(cfg, rng);
        let new = pos + j;
        if straddles(pos, new, j) {
            times.push(t);
            positions.push(new);
        }
        pos = if new == 0.0 { f64::MIN_POSITIVE * j.signum() } else { new };
    }
    Ok((times, positions))
}

/// Symmetric α-stable increment with E exp(iθX) = exp(-rate·dt·|θ|^α)
/// (Chambers-Mallows-Stuck).
pub fn sample_exact_stable_increment<R: Rng + ?Sized>(alpha: f64, rate: f64, dt: f64, rng: &mut R) -> f64 {
    let v = PI * (open01(rng) - 0.5);
    let w = exp1(rng);
    let x = (alpha * v).sin() / v.cos().powf(1.0 / alpha)
        * ((v * (1.0 - alpha)).cos() / w).powf((1.0 - alpha) / alpha);
    (rate * dt).powf(1.0 / alpha) * x
}

/// Monte-Carlo estimate of the limit solution W(t, y) via η_a.
pub fn estimate_w_limit(
    t: f64,
    y: f64,
    w0: &dyn InitialField,
    cfg: &RegularizedLevyConfig,
    coeffs: &InterfaceCoefficients,
    temperature: f64,
    mc: McOptions,
) -> Result<Estimate> {
    if y == 0.0 {
        return Err(Error::InvalidOrigin);
    }
    let parts: Vec<Result<Welford>> = mc.par.map_chunks(mc.n_samples, |range| {
        let mut w = Welford::default();
        for i in range {
            let mut rng = substream(mc.seed, i as u64);
            let p = simulate_eta(y, t, cfg, Some(coeffs), false, &mut rng)?;
            w.push(if p.absorbed { temperature } else { w0.value(p.end_position, 0.0) });
        }
        Ok(w)
    })?;
    let parts: Vec<Welford> = parts.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_welford(&Welford::reduce(&parts), mc.seed))
}

/// Per-sample values behind `estimate_w_limit`.
pub fn sample_w_limit(
    t: f64,
    y: f64,
    w0: &dyn InitialField,
    cfg: &RegularizedLevyConfig,
    coeffs: &InterfaceCoefficients,
    temperature: f64,
    mc: McOptions,
) -> Result<Vec<f64>> {
    if y == 0.0 {
        return Err(Error::InvalidOrigin);
    }
    mc.par
        .map_samples(mc.n_samples, |i| {
            let mut rng = substream(mc.seed, i as u64);
            let p = simulate_eta(y, t, cfg, Some(coeffs), false, &mut rng)?;
            Ok(if p.absorbed { temperature } else { w0.value(p.end_position, 0.0) })
        })?
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ModelParams};
    use crate::rng::Parallelism;
    use crate::stats::{chi_square, empirical_cf, ks_one_sample, ks_one_sample_pvalue, ks_two_sample, ks_two_sample_pvalue};

    fn constants() -> DerivedConstants {
        validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2)).unwrap().constants
    }

    #[test]
    fn jump_rate_formula() {
        let c = constants();
        let cfg = RegularizedLevyConfig::new(&c, 0.01).unwrap();
        let want = 2.0 * c.c_hat * c.c_beta * 0.01f64.powf(-1.5) / 1.5;
        assert!((cfg.jump_rate - want).abs() < 1e-9 * want);
    }

    #[test]
    fn truncated_jump_law() {
        let cfg = RegularizedLevyConfig::new(&constants(), 0.1).unwrap();
        let mut rng = substream(8, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_truncated_jump(&cfg, &mut rng).abs()).collect();
        assert!(xs.iter().all(|&x| x >= 0.1));
        let d = ks_one_sample(&xs, |x| 1.0 - (x / 0.1).powf(-1.5));
        assert!(ks_one_sample_pvalue(d, xs.len()) > 0.001);
    }

    #[test]
    fn exact_increment_characteristic_function() {
        let mut rng = substream(10, 0);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| sample_exact_stable_increment(1.5, 0.7, 2.0, &mut rng))
            .collect();
        for &th in &[0.3, 0.8, 1.5] {
            let want = (-1.4 * f64::powf(th, 1.5)).exp();
            assert!((empirical_cf(&xs, th) - want).abs() < 0.006, "{th}");
        }
    }

    #[test]
    fn truncated_process_approaches_stable_law() {
        // η_a(t) with small a has E cos(θη) ≈ exp(-t ĉ |θ|^α)
        let c = constants();
        let cfg = RegularizedLevyConfig::new(&c, 1e-3).unwrap();
        let mut rng = substream(12, 0);
        let mut xs = Vec::new();
        for _ in 0..20_000 {
            let p = simulate_eta(1.0, 0.5, &cfg, None, false, &mut rng).unwrap();
            xs.push(p.end_position - 1.0);
        }
        for &th in &[0.5, 1.0, 2.0] {
            let want = (-0.5 * c.c_hat * f64::powf(th, 1.5)).exp();
            assert!((empirical_cf(&xs, th) - want).abs() < 0.02, "{th}");
        }
    }

    #[test]
    fn absorption_only_interface_kills_on_crossing() {
        let cfg = RegularizedLevyConfig::new(&constants(), 0.05).unwrap();
        let c = InterfaceCoefficients::constant(0.0, 0.0, 1.0);
        for i in 0..100 {
            let mut rng = substream(13, i);
            let p = simulate_eta(0.3, 2.0, &cfg, Some(&c), true, &mut rng).unwrap();
            assert_eq!(p.absorbed, !p.crossing_times.is_empty());
            assert!(p.jumps.iter().filter(|j| j.crossing).count() <= 1);
        }
    }

    #[test]
    fn equilibrium_limit_exact() {
        let cfg = RegularizedLevyConfig::new(&constants(), 0.05).unwrap();
        let c = InterfaceCoefficients::constant(0.5, 0.3, 0.2);
        let w0 = |_: f64, _: f64| 1.3;
        let mc = McOptions {
            n_samples: 1000,
            seed: 3,
            par: Parallelism::new(2),
        };
        let e = estimate_w_limit(1.0, 0.5, &w0, &cfg, &c, 1.3, mc).unwrap();
        assert_eq!(e.mean, 1.3);
    }

    fn ends(y: f64, t: f64, cfg: &RegularizedLevyConfig, c: Option<&InterfaceCoefficients>, seed: u64) -> Vec<f64> {
        (0..4000)
            .map(|i| {
                let mut rng = substream(seed, i);
                simulate_eta(y, t, cfg, c, false, &mut rng).unwrap().end_position
            })
            .collect()
    }

    fn same_law(a: &[f64], b: &[f64]) -> bool {
        ks_two_sample_pvalue(ks_two_sample(a, b), a.len(), b.len()) > 0.001
    }

    #[test]
    fn jump_count_is_poisson() {
        let cfg = RegularizedLevyConfig::new(&constants(), 0.2).unwrap();
        let t = 2.0 / cfg.jump_rate;
        let mut counts = [0u64; 6];
        for i in 0..20_000 {
            let mut rng = substream(40, i);
            let n = simulate_eta(100.0, t, &cfg, None, true, &mut rng).unwrap().jumps.len();
            counts[n.min(5)] += 1;
        }
        let pmf = |k: i32| (-2.0f64).exp() * 2.0f64.powi(k) / (1..=k).product::<i32>().max(1) as f64;
        let mut probs: Vec<f64> = (0..5).map(pmf).collect();
        probs.push(1.0 - probs.iter().sum::<f64>());
        let (_, p) = chi_square(&counts, &probs);
        assert!(p > 0.001, "{counts:?}");
    }

    #[test]
    fn stable_increment_median_and_sign_symmetry() {
        let mut rng = substream(41, 0);
        let xs: Vec<f64> = (0..40_000)
            .map(|_| sample_exact_stable_increment(1.5, 1.0, 1.0, &mut rng))
            .collect();
        let pos = xs.iter().filter(|&&x| x > 0.0).count() as f64 / xs.len() as f64;
        assert!((pos - 0.5).abs() < 4.0 * (0.25 / xs.len() as f64).sqrt(), "{pos}");
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!(same_law(&xs[..20_000], &neg[20_000..]));
    }

    #[test]
    fn stable_increment_self_similarity() {
        // X(c dt) has the law of c^{1/α} X(dt)
        let (alpha, c) = (1.5, 8.0);
        let mut rng = substream(42, 0);
        let a: Vec<f64> = (0..20_000)
            .map(|_| sample_exact_stable_increment(alpha, 0.7, c, &mut rng))
            .collect();
        let b: Vec<f64> = (0..20_000)
            .map(|_| c.powf(1.0 / alpha) * sample_exact_stable_increment(alpha, 0.7, 1.0, &mut rng))
            .collect();
        assert!(same_law(&a, &b));
    }

    #[test]
    fn full_transmission_is_the_free_process() {
        let cfg = RegularizedLevyConfig::new(&constants(), 0.02).unwrap();
        let c = InterfaceCoefficients::constant(1.0, 0.0, 0.0);
        let with = ends(0.1, 0.5, &cfg, Some(&c), 43);
        let free = ends(0.1, 0.5, &cfg, None, 44);
        assert!(same_law(&with, &free));
    }

    #[test]
    fn mirror_symmetry() {
        // frozen coefficients do not see the side, so η from -y is -η from y
        let cfg = RegularizedLevyConfig::new(&constants(), 0.02).unwrap();
        let c = InterfaceCoefficients::constant(0.5, 0.3, 0.2);
        let right = ends(0.2, 0.5, &cfg, Some(&c), 45);
        let left: Vec<f64> = ends(-0.2, 0.5, &cfg, Some(&c), 46).iter().map(|x| -x).collect();
        assert!(same_law(&right, &left));
    }

    #[test]
    fn full_reflection_keeps_side() {
        let cfg = RegularizedLevyConfig::new(&constants(), 0.02).unwrap();
        let c = InterfaceCoefficients::constant(0.0, 1.0, 0.0);
        for i in 0..200 {
            let mut rng = substream(47, i);
            let p = simulate_eta(0.1, 1.0, &cfg, Some(&c), true, &mut rng).unwrap();
            assert!(p.jumps.iter().all(|j| j.y_after > 0.0));
            assert!(!p.absorbed);
        }
    }
}
