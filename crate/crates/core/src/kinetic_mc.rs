//! Monte-Carlo simulation of the scaled kinetic chain with the
//! randomized transmission/reflection/absorption rule at y = 0.
//!
//! The walker follows backward characteristics: between collisions the
//! position moves with velocity -ω̄'(K). Time is physical time divided by
//! N and positions are scaled by N^{-1/α}.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InterfaceCoefficients, Outcome, ValidatedModel};
use crate::rng::{exp1, open01, substream, Parallelism};
use crate::stats::{Estimate, Welford};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// current (observed) momentum K^o
    pub k: f64,
    /// number of completed flights
    pub n: u64,
    /// physical time
    pub time: f64,
    /// scaled position Y^o
    pub position: f64,
    /// +1 or -1: side of the interface the walker is on. Kept apart from
    /// the sign of `position` so that a walker sitting exactly at 0 still
    /// has a well-defined side.
    pub side: i8,
    /// product of the reflection signs applied so far
    pub sign: i8,
    pub absorbed: bool,
}

impl ChainState {
    pub fn new(y: f64, k: f64) -> Result<Self> {
        if y == 0.0 || !y.is_finite() {
            return Err(Error::InvalidOrigin);
        }
        Ok(ChainState {
            k,
            n: 0,
            time: 0.0,
            position: y,
            side: if y > 0.0 { 1 } else { -1 },
            sign: 1,
            absorbed: false,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    /// time of the crossing inside the flight (kinetic time units)
    pub time: f64,
    pub momentum: f64,
    pub outcome: Outcome,
    /// time of the first momentum jump after the crossing; None if absorbed
    pub post_step_time: Option<f64>,
    pub post_step_position: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Jump,
    Crossing,
    End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub kind: EventKind,
    pub time: f64,
    pub position: f64,
    pub momentum: f64,
    pub sign: i8,
    pub outcome: Option<Outcome>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KineticPath {
    pub events: Vec<PathEvent>,
    pub crossings: Vec<CrossingEvent>,
}

/// Result of one flight of the unscaled chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flight {
    pub duration: f64,
    pub displacement: f64,
}

/// Deterministic core of one flight: holding time t̄(K)τ, displacement
/// -ω̄'(K)t̄(K)τ, then momentum replaced by `next_k`.
pub fn advance_one_flight_with(
    state: &ChainState,
    model: &ValidatedModel,
    tau: f64,
    next_k: f64,
) -> Result<(ChainState, Flight)> {
    let tbar = model.holding_time_mean(state.k)?;
    let duration = tbar * tau;
    let displacement = -model.group_velocity(state.k) * duration;
    let mut s = *state;
    s.position += displacement;
    s.time += duration;
    s.n += 1;
    s.k = next_k;
    Ok((s, Flight { duration, displacement }))
}

/// One flight of the interface-free chain with unscaled increments.
pub fn advance_one_flight<R: Rng + ?Sized>(
    state: &ChainState,
    model: &ValidatedModel,
    rng: &mut R,
) -> Result<(ChainState, Flight)> {
    let tau = exp1(rng);
    let next = model.sample_momentum(state.k, rng);
    advance_one_flight_with(state, model, tau, next)
}

/// Time s in (0, duration] at which y + v s = 0, if any.
pub fn detect_crossing(y_start: f64, velocity: f64, duration: f64) -> Option<f64> {
    if velocity == 0.0 || y_start == 0.0 {
        return None;
    }
    let s = -y_start / velocity;
    if s > 0.0 && s <= duration {
        Some(s)
    } else {
        None
    }
}

/// Randomized interface rule at momentum k. Returns the outcome and the
/// momentum after it (flipped on reflection).
pub fn apply_interface<R: Rng + ?Sized>(
    k: f64,
    coeffs: &InterfaceCoefficients,
    rng: &mut R,
) -> (Outcome, f64) {
    let o = coeffs.outcome(k, open01(rng));
    let k_after = if o == Outcome::Reflect { -k } else { k };
    (o, k_after)
}

/// Controls for a single path.
#[derive(Clone, Copy, Debug)]
pub struct PathOptions {
    pub scale_n: f64,
    pub record: bool,
    /// use the interface rule; false simulates the free chain
    pub interface: bool,
}

/// Terminal state and, if requested, the event log of one path on
/// [0, t_end] in kinetic time.
pub fn simulate_path<R: Rng + ?Sized>(
    y: f64,
    k: f64,
    t_end: f64,
    model: &ValidatedModel,
    coeffs: &InterfaceCoefficients,
    opts: PathOptions,
    rng: &mut R,
) -> Result<(ChainState, KineticPath)> {
    let mut st = ChainState::new(y, k)?;
    let n = opts.scale_n;
    let scale = n.powf(-1.0 / model.constants.alpha);
    let horizon = n * t_end;
    let gamma0 = model.params.gamma0;
    let mut path = KineticPath::default();
    let rec = opts.record;
    if rec {
        path.events.push(PathEvent {
            kind: EventKind::Jump,
            time: 0.0,
            position: st.position,
            momentum: st.k,
            sign: st.sign,
            outcome: None,
        });
    }
    loop {
        let rate = gamma0 * model.total_rate(st.k);
        if rate <= 0.0 {
            return Err(Error::ZeroRate);
        }
        let d = exp1(rng) / rate;
        let mut v = -model.group_velocity(st.k) * scale;
        let remaining = horizon - st.time;
        let seg = d.min(remaining);
        let end_pos = st.position + v * seg;
        let side = st.side as f64;
        let crossed = end_pos * side < 0.0 || (end_pos == 0.0 && v * side < 0.0 && seg == d);
        let mut pos = end_pos;
        if opts.interface && crossed {
            let s = if st.position == 0.0 { 0.0 } else { -st.position / v };
            let (o, k_after) = apply_interface(st.k, coeffs, rng);
            let ct = (st.time + s) / n;
            let ce = CrossingEvent {
                time: ct,
                momentum: st.k,
                outcome: o,
                post_step_time: None,
                post_step_position: None,
            };
            if rec {
                path.events.push(PathEvent {
                    kind: EventKind::Crossing,
                    time: ct,
                    position: 0.0,
                    momentum: st.k,
                    sign: st.sign,
                    outcome: Some(o),
                });
            }
            match o {
                Outcome::Absorb => {
                    st.absorbed = true;
                    st.time += s;
                    st.position = 0.0;
                    path.crossings.push(ce);
                    break;
                }
                Outcome::Transmit => {
                    st.side = -st.side;
                }
                Outcome::Reflect => {
                    st.k = k_after;
                    st.sign = -st.sign;
                    v = -v;
                    pos = -end_pos;
                }
            }
            // post-step: end of the current flight, even past the horizon
            let flight_end = st.time + d;
            let pos_end = if seg == d { pos } else { pos + v * (d - seg) };
            path.crossings.push(CrossingEvent {
                post_step_time: Some(flight_end / n),
                post_step_position: Some(pos_end),
                ..ce
            });
        } else if crossed {
            st.side = -st.side;
        }
        st.position = pos;
        if d >= remaining {
            st.time = horizon;
            break;
        }
        st.time += d;
        st.n += 1;
        st.k = model.sample_momentum(st.k, rng);
        if rec {
            path.events.push(PathEvent {
                kind: EventKind::Jump,
                time: st.time / n,
                position: st.position,
                momentum: st.k,
                sign: st.sign,
                outcome: None,
            });
        }
    }
    st.time /= n;
    if rec {
        path.events.push(PathEvent {
            kind: EventKind::End,
            time: st.time,
            position: st.position,
            momentum: st.k,
            sign: st.sign,
            outcome: path.crossings.last().map(|c| c.outcome),
        });
    }
    Ok((st, path))
}

/// Initial datum of the backward problem.
pub trait InitialField: Sync {
    fn value(&self, y: f64, k: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64 + Sync> InitialField for F {
    fn value(&self, y: f64, k: f64) -> f64 {
        self(y, k)
    }
}

/// Shared options of every Monte-Carlo estimator.
#[derive(Clone, Copy, Debug)]
pub struct McOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub par: Parallelism,
}

/// Per-sample values of W0(Y^o_N(t), K^o_N(t)), or T for absorbed paths.
pub fn sample_w_n(
    t: f64,
    y: f64,
    k: f64,
    w0: &dyn InitialField,
    scale_n: f64,
    model: &ValidatedModel,
    mc: McOptions,
) -> Result<Vec<f64>> {
    ChainState::new(y, k)?;
    let coeffs = model.interface();
    let opts = PathOptions {
        scale_n,
        record: false,
        interface: true,
    };
    let temp = model.temperature();
    let vals: Vec<Result<f64>> = mc.par.map_samples(mc.n_samples, |i| {
        let mut rng = substream(mc.seed, i as u64);
        let (st, _) = simulate_path(y, k, t, model, coeffs, opts, &mut rng)?;
        Ok(if st.absorbed { temp } else { w0.value(st.position, st.k) })
    })?;
    vals.into_iter().collect()
}

/// Monte-Carlo estimate of W_N(t, y, k).
pub fn estimate_w_n(
    t: f64,
    y: f64,
    k: f64,
    w0: &dyn InitialField,
    scale_n: f64,
    model: &ValidatedModel,
    mc: McOptions,
) -> Result<Estimate> {
    ChainState::new(y, k)?;
    let coeffs = model.interface();
    let opts = PathOptions {
        scale_n,
        record: false,
        interface: true,
    };
    let temp = model.temperature();
    let parts: Vec<Result<Welford>> = mc.par.map_chunks(mc.n_samples, |range| {
        let mut w = Welford::default();
        for i in range {
            let mut rng = substream(mc.seed, i as u64);
            let (st, _) = simulate_path(y, k, t, model, coeffs, opts, &mut rng)?;
            w.push(if st.absorbed { temp } else { w0.value(st.position, st.k) });
        }
        Ok(w)
    })?;
    let parts: Vec<Welford> = parts.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_welford(&Welford::reduce(&parts), mc.seed))
}

/// Crossing data of the free scaled walk Z_N on the step clock n/N.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingSample {
    /// 𝔰^N_{y,m}
    pub times: Vec<f64>,
    /// Z_N(𝔰^N_{y,m})
    pub positions: Vec<f64>,
    /// momentum of the crossing flight
    pub momenta: Vec<f64>,
    /// |ω̄'(K) t̄(K)| of the crossing flight, unscaled
    pub flight_means: Vec<f64>,
}

/// First `m_max` alternating crossings of Z_N(t) = y - N^{-1/α} Σ ω̄'(K_l) t̄(K_l) τ_l,
/// stopped at step-clock time `t_max`.
pub fn free_crossings<R: Rng + ?Sized>(
    y: f64,
    k: f64,
    scale_n: f64,
    m_max: usize,
    t_max: f64,
    model: &ValidatedModel,
    rng: &mut R,
) -> Result<CrossingSample> {
    if y == 0.0 {
        return Err(Error::InvalidOrigin);
    }
    let scale = scale_n.powf(-1.0 / model.constants.alpha);
    let max_steps = (scale_n * t_max).ceil() as u64;
    let mut out = CrossingSample::default();
    let mut pos = y;
    let mut side = y.signum();
    let mut kk = k;
    let mut step: u64 = 0;
    while out.times.len() < m_max && step < max_steps {
        let f = model.mean_flight(kk);
        pos -= f * exp1(rng) * scale;
        if pos * side < 0.0 {
            side = -side;
            out.times.push((step + 1) as f64 / scale_n);
            out.positions.push(pos);
            out.momenta.push(kk);
            out.flight_means.push(f.abs());
        }
        step += 1;
        kk = model.sample_momentum(kk, rng);
    }
    Ok(out)
}

/// Z_N(t) - y for the free walk on the step clock: N^{-1/α} times the
/// sum of the first ⌊Nt⌋ flights, started from momentum k.
pub fn free_displacement<R: Rng + ?Sized>(k: f64, scale_n: f64, t: f64, model: &ValidatedModel, rng: &mut R) -> f64 {
    let steps = (scale_n * t).floor() as u64;
    let mut kk = k;
    let mut s = 0.0;
    for _ in 0..steps {
        s -= model.mean_flight(kk) * exp1(rng);
        kk = model.sample_momentum(kk, rng);
    }
    s * scale_n.powf(-1.0 / model.constants.alpha)
}

/// Crossing statistics of many independent free walks.
pub fn crossing_statistics(
    y: f64,
    k: f64,
    scale_n: f64,
    m_max: usize,
    t_max: f64,
    model: &ValidatedModel,
    mc: McOptions,
) -> Result<Vec<CrossingSample>> {
    if y == 0.0 {
        return Err(Error::InvalidOrigin);
    }
    mc.par
        .map_samples(mc.n_samples, |i| {
            let mut rng = substream(mc.seed, i as u64);
            free_crossings(y, k, scale_n, m_max, t_max, model, &mut rng)
        })?
        .into_iter()
        .collect()
}

/// Coupled crossing outcomes: the path follows the k-dependent rule, and
/// at each crossing the same uniform is also fed to the rule frozen at
/// k = 0. Returns, for each path, the momentum of each of the first `m`
/// crossing flights and whether the two outcomes differed there.
pub fn coupled_mismatch(
    y: f64,
    k: f64,
    t_end: f64,
    scale_n: f64,
    m: usize,
    model: &ValidatedModel,
    mc: McOptions,
) -> Result<Vec<Vec<(f64, bool)>>> {
    let frozen = model.interface().frozen();
    let coeffs = model.interface();
    let scale = scale_n.powf(-1.0 / model.constants.alpha);
    let horizon = scale_n * t_end;
    let gamma0 = model.params.gamma0;
    ChainState::new(y, k)?;
    mc.par.map_samples(mc.n_samples, |i| {
        let mut rng = substream(mc.seed, i as u64);
        let (mut pos, mut kk, mut t) = (y, k, 0.0);
        let mut side = y.signum();
        let mut seen = Vec::new();
        while t < horizon && seen.len() < m {
            let d = exp1(&mut rng) / (gamma0 * model.total_rate(kk));
            let v = -model.group_velocity(kk) * scale;
            let seg = d.min(horizon - t);
            let end = pos + v * seg;
            if end * side < 0.0 {
                let u = open01(&mut rng);
                let o = coeffs.outcome(kk, u);
                seen.push((kk, o != frozen.outcome(kk, u)));
                match o {
                    Outcome::Absorb => break,
                    Outcome::Transmit => {
                        side = -side;
                        pos = end;
                    }
                    Outcome::Reflect => {
                        kk = -kk;
                        pos = -end;
                    }
                }
            } else {
                pos = end;
            }
            t += d;
            kk = model.sample_momentum(kk, &mut rng);
        }
        seen
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, validate_with, ModelParams, ValidationOptions};
    use crate::stats::{ks_two_sample, ks_two_sample_pvalue};
    use proptest::prelude::*;

    fn model() -> ValidatedModel {
        validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2)).unwrap()
    }

    #[test]
    fn flight_with_given_draws() {
        // ω̄'(1/3) = 1/2 and t̄ = 2 when γ0 R0 = 1/(2 sin²(π/3))
        let mut p = ModelParams::reference(2.0, 0.5, 0.3, 0.2);
        p.gamma0 = 1.0 / (2.0 * (std::f64::consts::PI / 3.0).sin().powi(2));
        let m = validate(&p).unwrap();
        let st = ChainState::new(0.7, 1.0 / 3.0).unwrap();
        let (s, f) = advance_one_flight_with(&st, &m, 1.0, 0.2).unwrap();
        assert!((f.displacement + 1.0).abs() < 1e-12);
        assert!((s.position - (0.7 - 1.0)).abs() < 1e-12);
        assert_eq!(s.n, 1);
        assert_eq!(s.k, 0.2);
    }

    #[test]
    fn crossing_detection() {
        assert_eq!(detect_crossing(0.3, -1.0, 0.5), Some(0.3));
        assert_eq!(detect_crossing(0.3, -1.0, 0.2), None);
        assert_eq!(detect_crossing(0.3, 1.0, 5.0), None);
        assert_eq!(detect_crossing(-0.3, 1.0, 0.3), Some(0.3));
    }

    #[test]
    fn origin_rejected() {
        let m = model();
        let w0 = |_: f64, _: f64| 1.0;
        let mc = McOptions {
            n_samples: 4,
            seed: 1,
            par: Parallelism::default(),
        };
        assert!(matches!(
            estimate_w_n(1.0, 0.0, 0.1, &w0, 10.0, &m, mc),
            Err(Error::InvalidOrigin)
        ));
    }

    #[test]
    fn interface_frequencies_chi_square() {
        let c = InterfaceCoefficients::constant(0.5, 0.3, 0.2);
        let mut rng = substream(2, 0);
        let mut counts = [0u64; 3];
        for _ in 0..100_000 {
            let (o, _) = apply_interface(0.1, &c, &mut rng);
            counts[match o {
                Outcome::Transmit => 0,
                Outcome::Reflect => 1,
                Outcome::Absorb => 2,
            }] += 1;
        }
        let (_, p) = crate::stats::chi_square(&counts, &[0.5, 0.3, 0.2]);
        assert!(p > 0.001, "{counts:?}");
    }

    #[test]
    fn equilibrium_is_exact() {
        let m = model();
        let t = m.temperature();
        let w0 = move |_: f64, _: f64| t;
        let mc = McOptions {
            n_samples: 2000,
            seed: 5,
            par: Parallelism::new(2),
        };
        let e = estimate_w_n(1.0, 0.4, 0.1, &w0, 100.0, &m, mc).unwrap();
        assert_eq!(e.mean, t);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn transparent_interface_matches_free_chain() {
        let p = ModelParams::reference(2.0, 1.0, 0.0, 0.0);
        let m = validate_with(&p, ValidationOptions { allow_zero_absorption: true }).unwrap();
        let c = m.interface().clone();
        let run = |interface: bool, seed: u64| -> Vec<f64> {
            (0..3000)
                .map(|i| {
                    let mut rng = substream(seed, i);
                    let o = PathOptions {
                        scale_n: 50.0,
                        record: false,
                        interface,
                    };
                    simulate_path(0.2, 0.3, 1.0, &m, &c, o, &mut rng).unwrap().0.position
                })
                .collect()
        };
        let a = run(true, 1);
        let b = run(false, 2);
        let d = ks_two_sample(&a, &b);
        assert!(ks_two_sample_pvalue(d, a.len(), b.len()) > 0.001, "{d}");
    }

    #[test]
    fn crossing_order_invariant_on_recorded_path() {
        let m = model();
        let c = InterfaceCoefficients::constant(0.6, 0.4, 0.0);
        for i in 0..200 {
            let mut rng = substream(77, i);
            let o = PathOptions {
                scale_n: 100.0,
                record: true,
                interface: true,
            };
            let (_, path) = simulate_path(0.05, 0.2, 2.0, &m, &c, o, &mut rng).unwrap();
            for w in path.crossings.windows(2) {
                let post = w[0].post_step_time.unwrap();
                assert!(w[0].time <= post && post <= w[1].time);
            }
            let times: Vec<f64> = path.events.iter().map(|e| e.time).collect();
            assert!(times.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn full_absorption_stops_at_first_crossing() {
        let m = model();
        let c = InterfaceCoefficients::constant(0.0, 0.0, 1.0);
        let o = PathOptions {
            scale_n: 100.0,
            record: true,
            interface: true,
        };
        let mut absorbed = 0;
        for i in 0..300 {
            let mut rng = substream(31, i);
            let (st, path) = simulate_path(0.05, 0.2, 1.0, &m, &c, o, &mut rng).unwrap();
            assert!(path.crossings.len() <= 1);
            assert_eq!(st.absorbed, path.crossings.len() == 1);
            if st.absorbed {
                assert_eq!(path.crossings[0].outcome, Outcome::Absorb);
                assert!(path.crossings[0].post_step_time.is_none());
                absorbed += 1;
            }
        }
        assert!(absorbed > 0);
    }

    #[test]
    fn no_jump_probability() {
        // momentum is kept until the first collision: P = exp(-γ0 R(k) N t)
        let m = model();
        let c = m.interface().clone();
        let (k, n, t) = (0.3, 10.0, 0.05);
        let want = (-m.params.gamma0 * m.total_rate(k) * n * t).exp();
        let o = PathOptions {
            scale_n: n,
            record: false,
            interface: false,
        };
        let trials = 20_000;
        let kept = (0..trials)
            .filter(|&i| {
                let mut rng = substream(32, i);
                simulate_path(0.5, k, t, &m, &c, o, &mut rng).unwrap().0.k == k
            })
            .count();
        let p = kept as f64 / trials as f64;
        let sd = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((p - want).abs() < 4.0 * sd, "{p} vs {want}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn reflection_keeps_side(seed in 0u64..1000, y in 0.01f64..1.0) {
            let m = model();
            let c = InterfaceCoefficients::constant(0.0, 1.0, 0.0);
            let mut rng = substream(seed, 0);
            let o = PathOptions { scale_n: 20.0, record: false, interface: true };
            let (st, _) = simulate_path(y, 0.25, 1.0, &m, &c, o, &mut rng).unwrap();
            prop_assert!(st.position >= 0.0);
            prop_assert_eq!(st.side, 1);
        }

        #[test]
        fn estimator_worker_invariance(seed in 0u64..100) {
            let m = model();
            let w0 = |y: f64, _: f64| (-y * y).exp();
            let mk = |w| McOptions { n_samples: 300, seed, par: Parallelism::new(w) };
            let a = sample_w_n(0.5, 0.3, 0.1, &w0, 30.0, &m, mk(1)).unwrap();
            let b = sample_w_n(0.5, 0.3, 0.1, &w0, 30.0, &m, mk(3)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
