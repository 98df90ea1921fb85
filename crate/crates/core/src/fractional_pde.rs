//! Finite-volume discretisation of the fractional heat equation with the
//! interface terms, using the kernel truncated at |u| > a.
//!
//! Cells have width h with centres (i + 1/2)h, so the interface y = 0 is a
//! cell boundary. Kernel weights are exact cell integrals of q^{(a)}; the
//! diagonal is minus the total row mass, so constants (equal to T and the
//! far field) are annihilated exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Dense};
use crate::model::ValidatedModel;
use crate::quadrature::integrate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub h: f64,
    /// cells per side; the domain is [-n_half h, n_half h]
    pub n_half: usize,
}

impl SpatialGrid {
    pub fn new(h: f64, half_width: f64) -> Result<Self> {
        if !(h > 0.0 && half_width > h) {
            return Err(Error::InvalidGrid(format!("h={h}, L={half_width}")));
        }
        Ok(SpatialGrid {
            h,
            n_half: (half_width / h).round() as usize,
        })
    }
    pub fn len(&self) -> usize {
        2 * self.n_half
    }
    pub fn is_empty(&self) -> bool {
        self.n_half == 0
    }
    pub fn half_width(&self) -> f64 {
        self.n_half as f64 * self.h
    }
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.n_half as f64 + 0.5) * self.h
    }
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        2 * self.n_half - 1 - i
    }
    #[inline]
    pub fn positive(&self, i: usize) -> bool {
        i >= self.n_half
    }
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.node(i))).collect()
    }
}

/// Interface and kernel constants of the limit equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeCoefficients {
    pub alpha: f64,
    pub c_beta: f64,
    pub c_hat: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub g0: f64,
    pub temperature: f64,
}

impl PdeCoefficients {
    pub fn from_model(m: &ValidatedModel) -> Self {
        let (p_plus, p_minus, g0) = m.interface().at_zero();
        PdeCoefficients {
            alpha: m.constants.alpha,
            c_beta: m.constants.c_beta,
            c_hat: m.constants.c_hat,
            p_plus,
            p_minus,
            g0,
            temperature: m.temperature(),
        }
    }
}

/// Kernel masses of q_β restricted to |u| > a.
#[derive(Clone, Copy, Debug)]
struct Kernel {
    c_beta: f64,
    alpha: f64,
    a: f64,
}

impl Kernel {
    /// ∫_lo^∞ q^{(a)}(u) du
    #[inline]
    fn tail(&self, lo: f64) -> f64 {
        let lo = lo.max(self.a);
        self.c_beta * lo.powf(-self.alpha) / self.alpha
    }
    /// ∫_lo^hi q^{(a)}(u) du for 0 < lo < hi (lo may be below a)
    #[inline]
    fn segment(&self, lo: f64, hi: f64) -> f64 {
        if hi <= self.a {
            0.0
        } else {
            self.tail(lo) - self.tail(hi)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowMass {
    pub same_side: f64,
    pub cross: f64,
    pub outside_same: f64,
    pub outside_cross: f64,
    /// momentum-free mass bookkeeping: p+ cross, p- cross, g0 cross
    pub transmission: f64,
    pub reflection: f64,
    pub absorption: f64,
}

/// Assembled operator L̂_a on a grid (without the factor ĉ) plus the
/// constant source coming from T and the far field.
#[derive(Clone, Debug)]
pub struct NonlocalOperator {
    pub grid: SpatialGrid,
    pub a: f64,
    pub coeffs: PdeCoefficients,
    pub far_field: f64,
    pub matrix: Dense,
    pub source: Vec<f64>,
    pub rows: Vec<RowMass>,
    /// cell weight at index offset d (d >= 1)
    offset_weight: Vec<f64>,
    /// near-field coefficient for a = 0
    band: f64,
}

impl NonlocalOperator {
    /// `a` = 0 selects the untruncated kernel with a second-order
    /// correction for the singular band inside each cell.
    pub fn assemble(grid: SpatialGrid, a: f64, coeffs: PdeCoefficients, far_field: f64) -> Result<Self> {
        let h = grid.h;
        if a != 0.0 && a < 2.0 * h {
            return Err(Error::TruncationTooFine { a, h });
        }
        if a >= grid.half_width() {
            return Err(Error::InvalidGrid("truncation exceeds the domain".into()));
        }
        let kern = Kernel {
            c_beta: coeffs.c_beta,
            alpha: coeffs.alpha,
            a,
        };
        let n = grid.len();
        let offset_weight: Vec<f64> = (0..n)
            .map(|d| {
                if d == 0 {
                    0.0
                } else {
                    let dd = d as f64 * h;
                    kern.segment(dd - 0.5 * h, dd + 0.5 * h)
                }
            })
            .collect();
        // ∫_{|u|<h/2} q u² du / (2h²) times 2 (both directions)
        let band = if a == 0.0 {
            let p = 1.0 + coeffs.alpha;
            coeffs.c_beta * (0.5 * h).powf(3.0 - p) / (3.0 - p) / (h * h)
        } else {
            0.0
        };
        let (pp, pm, g0) = (coeffs.p_plus, coeffs.p_minus, coeffs.g0);
        let l = grid.half_width();
        let mut matrix = Dense::zeros(n);
        let mut source = vec![0.0; n];
        let mut rows = vec![RowMass::default(); n];
        for i in 0..n {
            let yi = grid.node(i);
            let pos = grid.positive(i);
            let mut same = 0.0;
            let mut cross = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = offset_weight[i.abs_diff(j)];
                if grid.positive(j) == pos {
                    matrix.add(i, j, w);
                    same += w;
                } else {
                    matrix.add(i, j, pp * w);
                    matrix.add(i, grid.mirror(j), pm * w);
                    cross += w;
                }
            }
            if band > 0.0 {
                for j in [i.wrapping_sub(1), i + 1] {
                    if j < n && grid.positive(j) == pos {
                        matrix.add(i, j, band);
                        same += band;
                    }
                }
            }
            let out_same = kern.tail(l - yi.abs());
            let out_cross = kern.tail(l + yi.abs());
            let total = same + cross + out_same + out_cross;
            matrix.add(i, i, -total);
            source[i] = far_field * (out_same + (pp + pm) * out_cross)
                + g0 * coeffs.temperature * (cross + out_cross);
            let cr = cross + out_cross;
            rows[i] = RowMass {
                same_side: same + out_same,
                cross: cr,
                outside_same: out_same,
                outside_cross: out_cross,
                transmission: pp * cr,
                reflection: pm * cr,
                absorption: g0 * cr,
            };
        }
        Ok(NonlocalOperator {
            grid,
            a,
            coeffs,
            far_field,
            matrix,
            source,
            rows,
            offset_weight,
            band,
        })
    }

    /// Analytic total mass 2 c_β a^{-α}/α of q^{(a)} (a > 0).
    pub fn analytic_row_mass(&self) -> f64 {
        2.0 * self.coeffs.c_beta * self.a.powf(-self.coeffs.alpha) / self.coeffs.alpha
    }

    /// L̂_a W including the constant source.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.matrix.matvec(w);
        r.iter_mut().zip(&self.source).for_each(|(x, s)| *x += s);
        r
    }

    /// Stepper for implicit Euler with step dt.
    pub fn stepper(&self, dt: f64) -> Result<ImplicitEuler<'_>> {
        let n = self.grid.len();
        let mut b = self.matrix.clone();
        let f = -dt * self.coeffs.c_hat;
        b.data.iter_mut().for_each(|x| *x *= f);
        for i in 0..n {
            b.add(i, i, 1.0);
        }
        let chol = Cholesky::factor(&b)?;
        let rhs_shift = self.source.iter().map(|s| dt * self.coeffs.c_hat * s).collect();
        Ok(ImplicitEuler {
            op: self,
            dt,
            chol,
            rhs_shift,
        })
    }

    /// Solve on [0, t_end] storing every step.
    pub fn solve(&self, w0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
        let steps = (t_end / dt).round().max(1.0) as usize;
        let dt = t_end / steps as f64;
        let st = self.stepper(dt)?;
        let mut traj = Trajectory {
            grid: self.grid,
            far_field: self.far_field,
            times: vec![0.0],
            fields: vec![w0.to_vec()],
        };
        let mut w = w0.to_vec();
        for s in 1..=steps {
            w = st.step(&w);
            traj.times.push(s as f64 * dt);
            traj.fields.push(w.clone());
        }
        Ok(traj)
    }

    /// ‖G‖²_{H_a} evaluated from its double-integral definition with both
    /// orderings of every pair, G taken equal to `far` outside the grid.
    pub fn h_norm(&self, g: &[f64], far: f64) -> f64 {
        let grid = &self.grid;
        let n = grid.len();
        let h = grid.h;
        let (pp, pm, g0) = (self.coeffs.p_plus, self.coeffs.p_minus, self.coeffs.g0);
        let mut same = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            let pos = grid.positive(i);
            let gi = g[i];
            let mut si = 0.0;
            let mut ci = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = self.offset_weight[i.abs_diff(j)];
                let gj = g[j];
                if grid.positive(j) == pos {
                    si += w * (gi - gj).powi(2);
                } else {
                    let gm = g[grid.mirror(j)];
                    ci += w * (g0 * (gi * gi + gj * gj) + pp * (gi - gj).powi(2) + pm * (gi - gm).powi(2));
                }
            }
            if self.band > 0.0 {
                for j in [i.wrapping_sub(1), i + 1] {
                    if j < n && grid.positive(j) == pos {
                        si += self.band * (gi - g[j]).powi(2);
                    }
                }
            }
            let r = &self.rows[i];
            si += 2.0 * r.outside_same * (gi - far).powi(2);
            ci += 2.0 * r.outside_cross * (g0 * (gi * gi + far * far) + (pp + pm) * (gi - far).powi(2));
            same += h * si;
            cross += h * ci;
        }
        if far != 0.0 {
            // both points outside, on opposite sides
            let l = grid.half_width();
            let k = Kernel {
                c_beta: self.coeffs.c_beta,
                alpha: self.coeffs.alpha,
                a: self.a,
            };
            let oo = k.c_beta * (2.0 * l).powf(1.0 - k.alpha) / (k.alpha * (k.alpha - 1.0));
            cross += 2.0 * oo * g0 * 2.0 * far * far;
        }
        same + cross
    }

    /// Split of `h_norm` into (same-side, g0 term, p± terms) for G = 0 outside.
    pub fn h_norm_parts(&self, g: &[f64]) -> (f64, f64, f64) {
        let grid = &self.grid;
        let n = grid.len();
        let h = grid.h;
        let (pp, pm, g0) = (self.coeffs.p_plus, self.coeffs.p_minus, self.coeffs.g0);
        let (mut s, mut a, mut c) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let pos = grid.positive(i);
            let gi = g[i];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = h * self.offset_weight[i.abs_diff(j)];
                let gj = g[j];
                if grid.positive(j) == pos {
                    s += w * (gi - gj).powi(2);
                } else {
                    let gm = g[grid.mirror(j)];
                    a += w * g0 * (gi * gi + gj * gj);
                    c += w * (pp * (gi - gj).powi(2) + pm * (gi - gm).powi(2));
                }
            }
            let r = &self.rows[i];
            s += 2.0 * h * r.outside_same * gi * gi;
            a += 2.0 * h * r.outside_cross * g0 * gi * gi;
            c += 2.0 * h * r.outside_cross * (pp + pm) * gi * gi;
        }
        (s, a, c)
    }

    /// Discrete L² pairing h Σ u v.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.grid.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }
}

pub struct ImplicitEuler<'a> {
    op: &'a NonlocalOperator,
    pub dt: f64,
    chol: Cholesky,
    rhs_shift: Vec<f64>,
}

impl ImplicitEuler<'_> {
    /// Solve (I - dt ĉ L̂_a) W' = W + dt ĉ s.
    pub fn step(&self, w: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = w.iter().zip(&self.rhs_shift).map(|(a, b)| a + b).collect();
        self.chol.solve(&rhs)
    }
    pub fn operator(&self) -> &NonlocalOperator {
        self.op
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: SpatialGrid,
    pub far_field: f64,
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Piecewise-constant value at y in the stored field index `n`.
    pub fn value_at(&self, n: usize, y: f64) -> f64 {
        let g = &self.grid;
        let l = g.half_width();
        if y.abs() >= l {
            return self.far_field;
        }
        let i = ((y / g.h) + g.n_half as f64).floor() as usize;
        self.fields[n][i.min(g.len() - 1)]
    }

    /// Linear interpolation within the side of y, constant extrapolation
    /// from the outermost nodes.
    pub fn interp_at(&self, n: usize, y: f64) -> f64 {
        let g = &self.grid;
        if y.abs() >= g.half_width() {
            return self.far_field;
        }
        let f = &self.fields[n];
        let nh = g.n_half;
        let s = (y.abs() / g.h - 0.5).max(0.0);
        let m = (s as usize).min(nh - 1);
        if m + 1 >= nh {
            return if y > 0.0 { f[2 * nh - 1] } else { f[0] };
        }
        let t = s - m as f64;
        let (a, b) = if y > 0.0 { (nh + m, nh + m + 1) } else { (nh - 1 - m, nh - 2 - m) };
        f[a] + t * (f[b] - f[a])
    }

    /// Index of the stored time closest to t.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyStep {
    pub t: f64,
    pub l2_squared: f64,
    pub h_norm_squared: f64,
    /// ĉ ∫_0^t ‖W‖²_H
    pub cumulative_dissipation: f64,
    /// ‖W_{n+1} - W_n‖² / dt: dissipation of the time discretisation
    pub numerical_dissipation: f64,
    pub identity_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub temperature: f64,
    pub steps: Vec<EnergyStep>,
    /// max over steps of |residual| / max(ĉ‖W‖²_H, |d/dt ‖W‖²|)
    pub max_relative_residual: f64,
    /// for T != 0: RHS - LHS of the energy inequality at the final time
    pub inequality_slack: Option<f64>,
}

/// Energy bookkeeping along an implicit-Euler trajectory. The discrete
/// balance (E_{n+1} - E_n)/dt + ĉ‖W_{n+1}‖²_H + ‖W_{n+1} - W_n‖²/dt = 0 is
/// exact for T = 0 and zero far field; for T != 0 the inequality
/// ‖W(t)‖² + ĉ∫‖W - T‖²_H ≤ ‖W0‖² + 2T(‖W(t)‖₁ + ‖W0‖₁) is evaluated.
pub fn energy_audit(traj: &Trajectory, op: &NonlocalOperator) -> EnergyReport {
    let t_bath = op.coeffs.temperature;
    let c_hat = op.coeffs.c_hat;
    let h = op.grid.h;
    let l2 = |w: &[f64]| h * w.iter().map(|x| x * x).sum::<f64>();
    let l1 = |w: &[f64]| h * w.iter().map(|x| x.abs()).sum::<f64>();
    let mut steps = Vec::new();
    let mut cum = 0.0;
    let mut max_rel: f64 = 0.0;
    let far_tilde = op.far_field - t_bath;
    let h0 = {
        let g: Vec<f64> = traj.fields[0].iter().map(|x| x - t_bath).collect();
        op.h_norm(&g, far_tilde)
    };
    steps.push(EnergyStep {
        t: 0.0,
        l2_squared: l2(&traj.fields[0]),
        h_norm_squared: h0,
        cumulative_dissipation: 0.0,
        numerical_dissipation: 0.0,
        identity_residual: 0.0,
    });
    for n in 1..traj.fields.len() {
        let dt = traj.times[n] - traj.times[n - 1];
        let w = &traj.fields[n];
        let g: Vec<f64> = w.iter().map(|x| x - t_bath).collect();
        let hn = op.h_norm(&g, far_tilde);
        cum += dt * c_hat * hn;
        let e_now = l2(w);
        let e_prev = steps[n - 1].l2_squared;
        let num = h * w
            .iter()
            .zip(&traj.fields[n - 1])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / dt;
        let res = (e_now - e_prev) / dt + c_hat * hn + num;
        if t_bath == 0.0 {
            let scale = (c_hat * hn).max(((e_now - e_prev) / dt).abs()).max(1e-300);
            max_rel = max_rel.max(res.abs() / scale);
        }
        steps.push(EnergyStep {
            t: traj.times[n],
            l2_squared: e_now,
            h_norm_squared: hn,
            cumulative_dissipation: cum,
            numerical_dissipation: num,
            identity_residual: res,
        });
    }
    let inequality_slack = if t_bath != 0.0 {
        let last = traj.fields.last().unwrap();
        let lhs = l2(last) + cum;
        let rhs = l2(&traj.fields[0]) + 2.0 * t_bath * (l1(last) + l1(&traj.fields[0]));
        Some(rhs - lhs)
    } else {
        None
    };
    EnergyReport {
        temperature: t_bath,
        steps,
        max_relative_residual: max_rel,
        inequality_slack,
    }
}

/// Smooth test function G(t,y) = e^{-λt} Σ A_m φ((y - c_m)/r_m) with the
/// standard bump φ(s) = exp(-1/(1-s²)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub bumps: Vec<(f64, f64, f64)>,
    pub decay: f64,
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_dd(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let d = 1.0 - s * s;
    let g1 = -2.0 * s / (d * d);
    let g2 = -2.0 / (d * d) - 8.0 * s * s / (d * d * d);
    bump(s) * (g2 + g1 * g1)
}

impl TestFunction {
    pub fn spatial(&self, y: f64) -> f64 {
        self.bumps.iter().map(|&(c, r, amp)| amp * bump((y - c) / r)).sum()
    }
    pub fn spatial_dd(&self, y: f64) -> f64 {
        self.bumps
            .iter()
            .map(|&(c, r, amp)| amp * bump_dd((y - c) / r) / (r * r))
            .sum()
    }
    pub fn time_factor(&self, t: f64) -> f64 {
        (-self.decay * t).exp()
    }
    /// Distance from the support to the interface.
    pub fn gap(&self) -> f64 {
        self.bumps
            .iter()
            .map(|&(c, r, _)| c.abs() - r)
            .fold(f64::INFINITY, f64::min)
    }

    /// Λ_β φ(y) = ∫_0^∞ q_β(u)(2φ(y) - φ(y+u) - φ(y-u)) du.
    pub fn frac_laplacian(&self, y: f64, c_beta: f64, alpha: f64) -> Result<f64> {
        let phi_y = self.spatial(y);
        // below u_c the second difference is replaced by -φ''(y)u²
        let u_c = 1e-3 * self.bumps.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
        let inner = -self.spatial_dd(y) * c_beta * u_c.powf(2.0 - alpha) / (2.0 - alpha);
        let mut breaks = vec![u_c];
        let mut reach: f64 = 0.0;
        for &(c, r, _) in &self.bumps {
            for e in [c - r, c + r] {
                let d = (y - e).abs();
                if d > u_c {
                    breaks.push(d);
                }
                reach = reach.max(d);
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let f = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            c_beta * u.powf(-1.0 - alpha) * (2.0 * phi_y - self.spatial(y + u) - self.spatial(y - u))
        };
        let mut s = 0.0;
        for w in breaks.windows(2) {
            s += integrate(f, w[0], w[1], 1e-13, 1e-11)?;
        }
        Ok(inner + s + 2.0 * phi_y * c_beta * reach.max(u_c).powf(-alpha) / alpha)
    }
}

/// Residual of the weak formulation for the stored trajectory and
/// initial datum `w0`, with the untruncated kernel.
pub fn weak_residual(traj: &Trajectory, op: &NonlocalOperator, w0: &[f64], g: &TestFunction) -> Result<f64> {
    let grid = &traj.grid;
    if g.gap() <= grid.h {
        return Err(Error::SupportTouchesInterface);
    }
    let c = &op.coeffs;
    let n = grid.len();
    let h = grid.h;
    let kern = Kernel {
        c_beta: c.c_beta,
        alpha: c.alpha,
        a: 0.0,
    };
    let phi: Vec<f64> = grid.sample(|y| g.spatial(y));
    let lam: Vec<f64> = (0..n)
        .map(|i| g.frac_laplacian(grid.node(i), c.c_beta, c.alpha))
        .collect::<Result<_>>()?;
    // ∫_{|y|>L} Λφ dy = -∫ φ(y') [tail(L - y') + tail(L + y')] dy'
    let lam_out: f64 = -(0..n)
        .map(|i| {
            let y = grid.node(i);
            let l = grid.half_width();
            h * phi[i] * (kern.tail(l - y) + kern.tail(l + y))
        })
        .sum::<f64>();
    let support: Vec<usize> = (0..n).filter(|&i| phi[i] != 0.0).collect();
    let far = traj.far_field;
    let l = grid.half_width();
    // integrand in time of the t-dependent terms
    let term = |w: &[f64], t: f64| -> f64 {
        let chi = g.time_factor(t);
        let dchi = -g.decay * chi;
        let mut s = 0.0;
        for i in 0..n {
            s += h * (dchi * phi[i] - c.c_hat * chi * lam[i]) * w[i];
        }
        s += -c.c_hat * chi * lam_out * far;
        for &i in &support {
            let pos = grid.positive(i);
            let yi = grid.node(i);
            let mut inner = 0.0;
            for j in 0..n {
                if grid.positive(j) == pos {
                    continue;
                }
                let d = (yi - grid.node(j)).abs();
                let wt = kern.segment(d - 0.5 * h, d + 0.5 * h);
                inner += wt * (c.p_minus * (w[grid.mirror(j)] - w[j]) + c.g0 * (c.temperature - w[j]));
            }
            inner += kern.tail(l + yi.abs()) * c.g0 * (c.temperature - far);
            s += c.c_hat * chi * h * phi[i] * inner;
        }
        s
    };
    let mut total = 0.0;
    let mut prev = term(&traj.fields[0], traj.times[0]);
    for k in 1..traj.fields.len() {
        let cur = term(&traj.fields[k], traj.times[k]);
        total += 0.5 * (traj.times[k] - traj.times[k - 1]) * (prev + cur);
        prev = cur;
    }
    let t0 = *traj.times.last().unwrap();
    let last = traj.fields.last().unwrap();
    let end: f64 = (0..n).map(|i| h * g.time_factor(t0) * phi[i] * last[i]).sum();
    let start: f64 = (0..n).map(|i| h * g.time_factor(0.0) * phi[i] * w0[i]).sum();
    Ok(total - end + start)
}

/// Near-interface profile of W(t) - T and the fitted power of |y|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub t: f64,
    pub y: Vec<f64>,
    pub excess: Vec<f64>,
    pub exponent_plus: f64,
    pub exponent_minus: f64,
}

pub fn boundary_trace(traj: &Trajectory, t: f64, temperature: f64, nodes: usize) -> BoundaryTrace {
    let g = &traj.grid;
    let idx = traj.index_of(t);
    let f = &traj.fields[idx];
    let nh = g.n_half;
    let m = nodes.min(nh);
    let mut y = Vec::new();
    let mut excess = Vec::new();
    for i in nh - m..nh + m {
        y.push(g.node(i));
        excess.push(f[i] - temperature);
    }
    let fit = |range: std::ops::Range<usize>| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = range
            .filter(|&i| excess[i].abs() > 0.0)
            .map(|i| (y[i].abs().ln(), excess[i].abs().ln()))
            .unzip();
        if xs.len() < 2 {
            f64::NAN
        } else {
            crate::stats::linear_fit(&xs, &ys).0
        }
    };
    BoundaryTrace {
        t: traj.times[idx],
        exponent_minus: fit(0..m),
        exponent_plus: fit(m..2 * m),
        y,
        excess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ModelParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn coeffs(pp: f64, pm: f64, g0: f64, t: f64) -> PdeCoefficients {
        let m = validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2)).unwrap();
        PdeCoefficients {
            p_plus: pp,
            p_minus: pm,
            g0,
            temperature: t,
            ..PdeCoefficients::from_model(&m)
        }
    }

    fn op(h: f64, l: f64, a: f64, c: PdeCoefficients, far: f64) -> NonlocalOperator {
        NonlocalOperator::assemble(SpatialGrid::new(h, l).unwrap(), a, c, far).unwrap()
    }

    #[test]
    fn row_mass_matches_analytic() {
        let o = op(1.0 / 32.0, 2.0, 2.5 / 32.0, coeffs(0.5, 0.3, 0.2, 1.0), 0.0);
        let want = o.analytic_row_mass();
        for r in &o.rows {
            let total = r.same_side + r.cross;
            assert_relative_eq!(total, want, max_relative = 1e-12);
            assert_relative_eq!(r.transmission + r.reflection + r.absorption, r.cross, max_relative = 1e-14);
        }
    }

    #[test]
    fn truncation_below_two_cells_rejected() {
        let g = SpatialGrid::new(0.1, 2.0).unwrap();
        let r = NonlocalOperator::assemble(g, 0.15, coeffs(0.5, 0.3, 0.2, 1.0), 0.0);
        assert!(matches!(r, Err(Error::TruncationTooFine { .. })));
    }

    #[test]
    fn constants_are_stationary() {
        let o = op(1.0 / 32.0, 2.0, 2.5 / 32.0, coeffs(0.5, 0.3, 0.2, 0.7), 0.7);
        let w = vec![0.7; o.grid.len()];
        let r = o.apply(&w);
        assert!(r.iter().all(|x| x.abs() < 1e-9));
        let st = o.stepper(0.01).unwrap();
        let w1 = st.step(&w);
        assert!(w1.iter().all(|x| (x - 0.7).abs() < 1e-12));
    }

    #[test]
    fn reflection_term_vanishes_for_even_fields() {
        // for G(-y) = G(y) the p- mirror coupling cancels against the p- part of the diagonal
        let c1 = coeffs(0.5, 0.3, 0.2, 0.0);
        let c2 = coeffs(0.8, 0.0, 0.2, 0.0);
        let o1 = op(1.0 / 16.0, 2.0, 2.5 / 16.0, c1, 0.0);
        let o2 = op(1.0 / 16.0, 2.0, 2.5 / 16.0, c2, 0.0);
        let g = o1.grid.sample(|y| (-y * y).exp());
        let a = o1.apply(&g);
        let b = o2.apply(&g);
        for i in 0..a.len() {
            assert!((a[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn h_norm_domination() {
        let o = op(1.0 / 16.0, 2.0, 2.5 / 16.0, coeffs(0.5, 0.3, 0.2, 0.0), 0.0);
        let g = o.grid.sample(|y| (3.0 * y).sin() * (-y * y).exp() + 0.3);
        let (_, absorb, pm) = o.h_norm_parts(&g);
        assert!(pm <= 2.0 * (0.5 + 0.3) * absorb / 0.2 + 1e-12);
    }

    #[test]
    fn maximum_principle_and_positivity() {
        let o = op(1.0 / 32.0, 2.0, 2.5 / 32.0, coeffs(0.5, 0.3, 0.2, 1.0), 0.0);
        let w0 = o.grid.sample(|y| if y.abs() < 1.0 { 2.0 } else { 0.0 });
        let tr = o.solve(&w0, 0.5, 0.01).unwrap();
        for f in &tr.fields {
            assert!(f.iter().all(|&x| (0.0..=2.0 + 1e-12).contains(&x)));
        }
    }

    #[test]
    fn energy_identity_without_temperature() {
        let o = op(1.0 / 32.0, 2.0, 2.5 / 32.0, coeffs(0.5, 0.3, 0.2, 0.0), 0.0);
        let w0 = o.grid.sample(|y| (-4.0 * (y - 0.3).powi(2)).exp());
        let tr = o.solve(&w0, 0.2, 0.01).unwrap();
        let rep = energy_audit(&tr, &o);
        assert!(rep.max_relative_residual < 1e-9, "{}", rep.max_relative_residual);
    }

    #[test]
    fn energy_inequality_with_temperature() {
        let o = op(1.0 / 32.0, 2.0, 2.5 / 32.0, coeffs(0.5, 0.3, 0.2, 1.0), 0.0);
        let w0 = o.grid.sample(|y| (-4.0 * y * y).exp());
        let tr = o.solve(&w0, 0.2, 0.01).unwrap();
        assert!(energy_audit(&tr, &o).inequality_slack.unwrap() > 0.0);
    }

    #[test]
    fn no_absorption_pure_transmission_conserves_mass_far_from_edges() {
        let o = op(1.0 / 16.0, 6.0, 2.5 / 16.0, coeffs(1.0, 0.0, 0.0, 0.0), 0.0);
        let w0 = o.grid.sample(|y| (-8.0 * y * y).exp());
        let tr = o.solve(&w0, 0.05, 0.005).unwrap();
        let m0: f64 = tr.fields[0].iter().sum();
        let m1: f64 = tr.fields.last().unwrap().iter().sum();
        assert!((m1 / m0 - 1.0).abs() < 2e-3, "{}", m1 / m0);
    }

    #[test]
    fn frac_laplacian_outside_support_is_negative_convolution() {
        let c = coeffs(0.5, 0.3, 0.2, 0.0);
        let g = TestFunction {
            bumps: vec![(0.5, 0.3, 1.0)],
            decay: 0.0,
        };
        for &y in &[-0.7, 1.3, 2.5] {
            let direct = -integrate(
                |x| c.c_beta * (y - x).abs().powf(-1.0 - c.alpha) * g.spatial(x),
                0.2,
                0.8,
                1e-14,
                1e-12,
            )
            .unwrap();
            let v = g.frac_laplacian(y, c.c_beta, c.alpha).unwrap();
            assert_relative_eq!(v, direct, max_relative = 1e-8);
        }
        assert!(g.frac_laplacian(0.5, c.c_beta, c.alpha).unwrap() > 0.0);
    }

    #[test]
    fn weak_residual_rejects_interface_support() {
        let o = op(1.0 / 16.0, 2.0, 2.5 / 16.0, coeffs(0.5, 0.3, 0.2, 0.0), 0.0);
        let w0 = vec![0.0; o.grid.len()];
        let tr = o.solve(&w0, 0.1, 0.05).unwrap();
        let g = TestFunction {
            bumps: vec![(0.1, 0.2, 1.0)],
            decay: 0.0,
        };
        assert!(matches!(weak_residual(&tr, &o, &w0, &g), Err(Error::SupportTouchesInterface)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn quadratic_form_matches_h_norm(seed in 0u64..1000) {
            use rand::Rng;
            let o = op(1.0 / 16.0, 2.0, 2.5 / 16.0, coeffs(0.45, 0.35, 0.2, 0.0), 0.0);
            let mut rng = crate::rng::substream(seed, 0);
            let g: Vec<f64> = (0..o.grid.len()).map(|_| rng.random::<f64>() - 0.5).collect();
            let lg = o.matrix.matvec(&g);
            let q = -2.0 * o.inner(&lg, &g);
            let hn = o.h_norm(&g, 0.0);
            prop_assert!((q - hn).abs() <= 1e-10 * hn);
        }
    }
}
