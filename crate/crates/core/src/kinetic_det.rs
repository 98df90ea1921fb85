//! Deterministic solution of the kinetic equation with the interface
//! condition: free-flight semigroup S_t, collision operator 𝓡 and the
//! mild (Duhamel) formulation solved by Picard iteration on a time grid.
//!
//! Constants solve the problem with the bath temperature, so W - T is
//! computed with T = 0 and shifted back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional_pde::SpatialGrid;
use crate::kinetic_mc::InitialField;
use crate::model::{InterfaceCoefficients, KernelForm, ValidatedModel};
use crate::quadrature::graded_half_rule;

/// Tensor grid: cells in y (interface on a cell boundary) times a
/// symmetric graded Gauss rule in k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub y: SpatialGrid,
    pub k: Vec<f64>,
    pub k_weights: Vec<f64>,
}

impl PhaseGrid {
    pub fn new(h: f64, half_width: f64, k_panels: usize, k_order: usize, k_grading: f64) -> Result<Self> {
        if k_panels == 0 || k_order == 0 {
            return Err(Error::InvalidGrid("empty momentum rule".into()));
        }
        let y = SpatialGrid::new(h, half_width)?;
        let (kh, wh) = graded_half_rule(k_panels, k_order, k_grading);
        let mut k: Vec<f64> = kh.iter().rev().map(|x| -x).collect();
        k.extend_from_slice(&kh);
        let mut k_weights: Vec<f64> = wh.iter().rev().copied().collect();
        k_weights.extend_from_slice(&wh);
        Ok(PhaseGrid { y, k, k_weights })
    }
    pub fn nk(&self) -> usize {
        self.k.len()
    }
    pub fn ny(&self) -> usize {
        self.y.len()
    }
    #[inline]
    pub fn mirror_k(&self, j: usize) -> usize {
        self.k.len() - 1 - j
    }
    pub fn nearest_k(&self, k: f64) -> usize {
        let mut best = 0;
        for (j, &x) in self.k.iter().enumerate() {
            if (x - k).abs() < (self.k[best] - k).abs() {
                best = j;
            }
        }
        best
    }
}

/// Field on a phase grid, row-major in (y, k), with a per-k value taken
/// beyond the y-domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub far: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFieldHeader {
    pub h: f64,
    pub n_half: usize,
    pub half_width: f64,
    pub nk: usize,
    pub far: Vec<f64>,
    pub t: f64,
}

impl GridField {
    pub fn from_fn(grid: &PhaseGrid, f: &dyn InitialField, far: f64) -> Self {
        let (ny, nk) = (grid.ny(), grid.nk());
        let mut values = Vec::with_capacity(ny * nk);
        for i in 0..ny {
            let y = grid.y.node(i);
            for &k in &grid.k {
                values.push(f.value(y, k));
            }
        }
        GridField {
            grid: grid.clone(),
            values,
            far: vec![far; nk],
        }
    }

    pub fn constant(grid: &PhaseGrid, c: f64) -> Self {
        GridField {
            grid: grid.clone(),
            values: vec![c; grid.ny() * grid.nk()],
            far: vec![c; grid.nk()],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.nk() + j]
    }

    /// Linear interpolation in y within the side of `y` (extrapolating
    /// from that side next to the interface), far value beyond the domain.
    #[inline]
    pub fn interp(&self, y: f64, j: usize) -> f64 {
        let g = &self.grid.y;
        let n = g.n_half;
        let nk = self.grid.nk();
        let s = y.abs() / g.h - 0.5;
        if s >= n as f64 - 1.0 {
            return if y.abs() >= g.half_width() {
                self.far[j]
            } else {
                let m = if y > 0.0 { 2 * n - 1 } else { 0 };
                self.values[m * nk + j]
            };
        }
        let (m, t) = if s < 0.0 { (0usize, s) } else { (s as usize, s - s.floor()) };
        let (a, b) = if y > 0.0 { (n + m, n + m + 1) } else { (n - 1 - m, n - 2 - m) };
        let va = self.values[a * nk + j];
        let vb = self.values[b * nk + j];
        va + t * (vb - va)
    }

    /// Value at an arbitrary y and a grid momentum.
    pub fn value_at(&self, y: f64, k: f64) -> Result<f64> {
        let j = self.grid.nearest_k(k);
        if y == 0.0 || y.abs() > self.grid.y.half_width() || (self.grid.k[j] - k).abs() > 1e-12 {
            return Err(Error::InterpolationOutOfDomain { y, k });
        }
        Ok(self.interp(y, j))
    }

    /// μ-average over k at y: ∫ W(y,k) R(k) dk / ∫ R.
    pub fn k_average(&self, y: f64, model: &ValidatedModel) -> f64 {
        let mut s = 0.0;
        let mut z = 0.0;
        for (j, (&k, &w)) in self.grid.k.iter().zip(&self.grid.k_weights).enumerate() {
            let r = model.total_rate(k) * w;
            s += r * self.interp(y, j);
            z += r;
        }
        s / z
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f64, other: &GridField) {
        self.values.iter_mut().zip(&other.values).for_each(|(x, y)| *x += a * y);
        self.far.iter_mut().zip(&other.far).for_each(|(x, y)| *x += a * y);
    }

    pub fn sup_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn header(&self, t: f64) -> GridFieldHeader {
        GridFieldHeader {
            h: self.grid.y.h,
            n_half: self.grid.y.n_half,
            half_width: self.grid.y.half_width(),
            nk: self.grid.nk(),
            far: self.far.clone(),
            t,
        }
    }
}

/// 𝓡 on the grid with quadrature in k.
pub struct Collision<'a> {
    model: &'a ValidatedModel,
    rates: Vec<f64>,
    /// separable factors: R(k,k') = Σ_m u_m(k) u_m(k') (product / mixture)
    factors: Vec<Vec<f64>>,
}

impl<'a> Collision<'a> {
    pub fn new(model: &'a ValidatedModel, grid: &PhaseGrid) -> Self {
        let r0 = model.params.r0;
        let rn = model.r_norm;
        let base: Vec<f64> = grid
            .k
            .iter()
            .map(|&k| (r0 / rn).sqrt() * model.total_rate(k) / r0)
            .collect();
        let mut factors = vec![base.clone()];
        if let KernelForm::Mixture { kappa } = model.params.kernel {
            let c0 = model.mix_c0;
            factors.push(
                grid.k
                    .iter()
                    .zip(&base)
                    .map(|(&k, b)| kappa.sqrt() * b * ((2.0 * std::f64::consts::PI * k).cos() - c0))
                    .collect(),
            );
        }
        Collision {
            model,
            rates: grid.k.iter().map(|&k| model.total_rate(k)).collect(),
            factors,
        }
    }

    /// 𝓡F via the separable structure of the kernel.
    pub fn apply(&self, f: &GridField) -> GridField {
        let g = &f.grid;
        let nk = g.nk();
        let mut out = f.clone();
        for i in 0..g.ny() {
            let row = &f.values[i * nk..(i + 1) * nk];
            let dst = &mut out.values[i * nk..(i + 1) * nk];
            dst.iter_mut().for_each(|x| *x = 0.0);
            for u in &self.factors {
                let c: f64 = (0..nk).map(|l| g.k_weights[l] * u[l] * row[l]).sum();
                for j in 0..nk {
                    dst[j] += u[j] * c;
                }
            }
        }
        for j in 0..nk {
            out.far[j] = self
                .factors
                .iter()
                .map(|u| u[j] * (0..nk).map(|l| g.k_weights[l] * u[l] * f.far[l]).sum::<f64>())
                .sum();
        }
        out
    }

    /// 𝓡F by direct quadrature with the pair kernel.
    pub fn apply_dense(&self, f: &GridField) -> GridField {
        let g = &f.grid;
        let nk = g.nk();
        let mut out = f.clone();
        for i in 0..g.ny() {
            for j in 0..nk {
                out.values[i * nk + j] = (0..nk)
                    .map(|l| g.k_weights[l] * self.model.pair_kernel(g.k[j], g.k[l]) * f.values[i * nk + l])
                    .sum();
            }
        }
        for j in 0..nk {
            out.far[j] = (0..nk)
                .map(|l| g.k_weights[l] * self.model.pair_kernel(g.k[j], g.k[l]) * f.far[l])
                .sum();
        }
        out
    }

    /// L_k F = 𝓡F - R(k)F.
    pub fn generator(&self, f: &GridField) -> GridField {
        let mut out = self.apply(f);
        let nk = f.grid.nk();
        for (idx, v) in out.values.iter_mut().enumerate() {
            *v -= self.rates[idx % nk] * f.values[idx];
        }
        for j in 0..nk {
            out.far[j] -= self.rates[j] * f.far[j];
        }
        out
    }
}

/// Where the backward characteristic from (y,k) is after time τ.
#[inline]
fn foot(y: f64, v: f64, tau: f64) -> (f64, bool) {
    let x = y - v * tau;
    (x, x * y <= 0.0)
}

/// S_τ G on the grid (interface rule with T = 0), y-interpolation of G.
pub fn apply_semigroup(g: &GridField, tau: f64, model: &ValidatedModel) -> GridField {
    let grid = &g.grid;
    let nk = grid.nk();
    let coeffs = model.interface();
    let gamma0 = model.params.gamma0;
    let mut out = g.clone();
    let vel: Vec<f64> = grid.k.iter().map(|&k| model.group_velocity(k)).collect();
    let damp: Vec<f64> = grid.k.iter().map(|&k| (-gamma0 * model.total_rate(k) * tau).exp()).collect();
    let pc: Vec<(f64, f64, f64)> = grid.k.iter().map(|&k| coeffs.at(k)).collect();
    for i in 0..grid.ny() {
        let y = grid.y.node(i);
        for j in 0..nk {
            let (x, crossed) = foot(y, vel[j], tau);
            let v = if !crossed {
                g.interp(x, j)
            } else {
                let (pp, pm, _) = pc[j];
                pp * g.interp(x, j) + pm * g.interp(-x, grid.mirror_k(j))
            };
            out.values[i * nk + j] = damp[j] * v;
        }
    }
    for j in 0..nk {
        out.far[j] = damp[j] * g.far[j];
    }
    out
}

/// S_τ W0 with W0 evaluated exactly at the characteristic feet.
pub fn apply_semigroup_exact(
    w0: &dyn InitialField,
    shift: f64,
    far: f64,
    grid: &PhaseGrid,
    tau: f64,
    model: &ValidatedModel,
    coeffs: &InterfaceCoefficients,
) -> GridField {
    let nk = grid.nk();
    let gamma0 = model.params.gamma0;
    let l = grid.y.half_width();
    let eval = |x: f64, k: f64| if x.abs() >= l { far } else { w0.value(x, k) - shift };
    let mut out = GridField::constant(grid, 0.0);
    for i in 0..grid.ny() {
        let y = grid.y.node(i);
        for (j, &k) in grid.k.iter().enumerate() {
            let vel = model.group_velocity(k);
            let damp = (-gamma0 * model.total_rate(k) * tau).exp();
            let (x, crossed) = foot(y, vel, tau);
            let v = if !crossed {
                eval(x, k)
            } else {
                let (pp, pm, _) = coeffs.at(k);
                pp * eval(x, k) + pm * eval(-x, -k)
            };
            out.values[i * nk + j] = damp * v;
        }
    }
    for (j, &k) in grid.k.iter().enumerate() {
        out.far[j] = (-gamma0 * model.total_rate(k) * tau).exp() * far;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelOptions {
    pub h: f64,
    pub half_width: f64,
    pub k_panels: usize,
    pub k_order: usize,
    pub k_grading: f64,
    pub time_steps: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// recompute on the 2h grid and report the difference
    pub estimate_grid_error: bool,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        DuhamelOptions {
            h: 1.0 / 128.0,
            half_width: 2.0,
            k_panels: 12,
            k_order: 8,
            k_grading: 3.0,
            time_steps: 32,
            tolerance: 1e-10,
            max_iterations: 60,
            estimate_grid_error: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelSolution {
    pub times: Vec<f64>,
    /// W (not W - T) at every time node
    pub fields: Vec<GridField>,
    pub iterations: usize,
    /// iterations after which the a-priori tail bound is below tolerance
    pub guaranteed_iterations: usize,
    pub last_increment: f64,
    /// sup|W_h - W_{2h}| at the final time over common points
    pub grid_error: Option<f64>,
    /// final field of the 2h companion run
    pub coarse: Option<GridField>,
    pub far_field: f64,
    pub temperature: f64,
}

impl DuhamelSolution {
    pub fn final_field(&self) -> &GridField {
        self.fields.last().unwrap()
    }

    /// W(t_end, y, k) at a grid momentum.
    pub fn value(&self, y: f64, k: f64) -> Result<f64> {
        self.final_field().value_at(y, k)
    }

    /// |W_h - W_{2h}| at the final time at one point, if the companion
    /// run was made.
    pub fn grid_error_at(&self, y: f64, k: f64) -> Result<Option<f64>> {
        let fine = self.value(y, k)?;
        match &self.coarse {
            Some(c) => {
                let j = c.grid.nearest_k(k);
                Ok(Some((c.interp(y, j) - fine).abs()))
            }
            None => Ok(None),
        }
    }
}

/// Number of Picard iterations after which the tail Σ_{j≥J} (γ0R0t)^j/j!
/// falls below `tol`.
pub fn picard_bound(gamma0_r0_t: f64, tol: f64) -> usize {
    let mut term = 1.0f64;
    let mut j = 0usize;
    loop {
        j += 1;
        term *= gamma0_r0_t / j as f64;
        let tail = term * (gamma0_r0_t).exp();
        if tail < tol || j > 500 {
            return j;
        }
    }
}

fn duhamel_on_grid(
    w0: &dyn InitialField,
    far_field: f64,
    t: f64,
    grid: &PhaseGrid,
    model: &ValidatedModel,
    opts: &DuhamelOptions,
) -> Result<(Vec<f64>, Vec<GridField>, usize, f64)> {
    let temp = model.temperature();
    let far = far_field - temp;
    let m = opts.time_steps.max(1);
    let dt = t / m as f64;
    let times: Vec<f64> = (0..=m).map(|i| i as f64 * dt).collect();
    let coeffs = model.interface();
    let free: Vec<GridField> = times
        .iter()
        .map(|&s| apply_semigroup_exact(w0, temp, far, grid, s, model, coeffs))
        .collect();
    let coll = Collision::new(model, grid);
    let gamma0 = model.params.gamma0;
    let cap = opts.max_iterations;
    let mut cur = free.clone();
    let mut inc = f64::INFINITY;
    let mut it = 0;
    while it < cap {
        it += 1;
        let rw: Vec<GridField> = cur.iter().map(|f| coll.apply(f)).collect();
        // collision part D_i = S_dt(D_{i-1} + w rw_{i-1}) + w rw_i, which is
        // the trapezoid rule for γ0∫S_{t_i-s}𝓡W(s)ds by the semigroup law
        let w = 0.5 * dt * gamma0;
        let mut next = free.clone();
        let mut d = GridField::constant(grid, 0.0);
        for i in 1..=m {
            d.axpy(w, &rw[i - 1]);
            d = apply_semigroup(&d, dt, model);
            d.axpy(w, &rw[i]);
            next[i].axpy(1.0, &d);
        }
        inc = next
            .iter()
            .zip(&cur)
            .map(|(a, b)| a.sup_diff(b))
            .fold(0.0, f64::max);
        cur = next;
        if inc < opts.tolerance {
            break;
        }
    }
    if !(inc < opts.tolerance) {
        return Err(Error::NotConverged {
            achieved: inc,
            tolerance: opts.tolerance,
        });
    }
    for f in &mut cur {
        f.values.iter_mut().for_each(|v| *v += temp);
        f.far.iter_mut().for_each(|v| *v += temp);
    }
    Ok((times, cur, it, inc))
}

/// Solve the mild formulation up to time t.
pub fn duhamel_solve(
    w0: &dyn InitialField,
    far_field: f64,
    t: f64,
    model: &ValidatedModel,
    opts: &DuhamelOptions,
) -> Result<DuhamelSolution> {
    if !(t > 0.0) {
        return Err(Error::NonPositive { name: "t", value: t });
    }
    let grid = PhaseGrid::new(opts.h, opts.half_width, opts.k_panels, opts.k_order, opts.k_grading)?;
    let (times, fields, iterations, last_increment) = duhamel_on_grid(w0, far_field, t, &grid, model, opts)?;
    let (grid_error, coarse) = if opts.estimate_grid_error {
        let coarse_grid = PhaseGrid::new(2.0 * opts.h, opts.half_width, opts.k_panels, opts.k_order, opts.k_grading)?;
        let co = DuhamelOptions {
            time_steps: (opts.time_steps / 2).max(1),
            ..*opts
        };
        let (_, cf, _, _) = duhamel_on_grid(w0, far_field, t, &coarse_grid, model, &co)?;
        let fine = fields.last().unwrap();
        let coarse = cf.last().unwrap();
        let nk = grid.nk();
        let mut e: f64 = 0.0;
        // coarse cell centres are fine-cell boundaries: compare against the mean
        let reach = opts.half_width - model.params.omega0p * t - 4.0 * opts.h;
        for ic in 0..coarse_grid.ny() {
            let y = coarse_grid.y.node(ic);
            if y.abs() > reach {
                continue;
            }
            for j in 0..nk {
                let fv = fine.interp(y, j);
                e = e.max((coarse.at(ic, j) - fv).abs());
            }
        }
        (Some(e), Some(cf.last().unwrap().clone()))
    } else {
        (None, None)
    };
    Ok(DuhamelSolution {
        times,
        fields,
        iterations,
        guaranteed_iterations: picard_bound(model.params.gamma0 * model.params.r0 * t, opts.tolerance),
        last_increment,
        grid_error,
        coarse,
        far_field,
        temperature: model.temperature(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalResiduals {
    /// sup |D_t W - γ0 L_k W| along non-crossing characteristics
    pub transport: f64,
    /// sup over k and time of the interface-condition mismatch at 0±
    pub interface: f64,
    /// sup |W(0) - W0| on the grid
    pub initial: f64,
}

/// Residuals of the classical formulation for a stored solution.
pub fn classical_residuals(
    sol: &DuhamelSolution,
    w0: &dyn InitialField,
    model: &ValidatedModel,
) -> ClassicalResiduals {
    let grid = &sol.fields[0].grid;
    let nk = grid.nk();
    let ny = grid.ny();
    let coll = Collision::new(model, grid);
    let gamma0 = model.params.gamma0;
    let temp = model.temperature();
    let coeffs = model.interface();
    let t_end = *sol.times.last().unwrap();
    let reach = grid.y.half_width() - model.params.omega0p * t_end - 2.0 * grid.y.h;
    let gens: Vec<GridField> = sol.fields.iter().map(|f| coll.generator(f)).collect();
    let mut transport: f64 = 0.0;
    for n in 0..sol.times.len() - 1 {
        let dt = sol.times[n + 1] - sol.times[n];
        let (a, b) = (&sol.fields[n], &sol.fields[n + 1]);
        for i in 0..ny {
            let y = grid.y.node(i);
            if y.abs() > reach {
                continue;
            }
            for j in 0..nk {
                let v = model.group_velocity(grid.k[j]);
                let (x, crossed) = foot(y, v, dt);
                if crossed || x.abs() < grid.y.h {
                    continue;
                }
                let d = (b.at(i, j) - a.interp(x, j)) / dt;
                let rhs = 0.5 * gamma0 * (gens[n + 1].at(i, j) + gens[n].interp(x, j));
                transport = transport.max((d - rhs).abs());
            }
        }
    }
    let nh = grid.y.n_half;
    let mut interface: f64 = 0.0;
    for f in &sol.fields[1..] {
        let edge = |i0: usize, i1: usize, j: usize| 1.5 * f.at(i0, j) - 0.5 * f.at(i1, j);
        for j in 0..nk {
            let k = grid.k[j];
            let (pp, pm, g) = coeffs.at(k);
            let mj = grid.mirror_k(j);
            let r = if k > 0.0 {
                edge(nh, nh + 1, j) - pm * edge(nh, nh + 1, mj) - pp * edge(nh - 1, nh - 2, j) - g * temp
            } else {
                edge(nh - 1, nh - 2, j) - pm * edge(nh - 1, nh - 2, mj) - pp * edge(nh, nh + 1, j) - g * temp
            };
            interface = interface.max(r.abs());
        }
    }
    let mut initial: f64 = 0.0;
    let f0 = &sol.fields[0];
    for i in 0..ny {
        let y = grid.y.node(i);
        for j in 0..nk {
            initial = initial.max((f0.at(i, j) - w0.value(y, grid.k[j])).abs());
        }
    }
    ClassicalResiduals {
        transport,
        interface,
        initial,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ModelParams};

    fn model() -> ValidatedModel {
        validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2)).unwrap()
    }

    fn small_opts() -> DuhamelOptions {
        DuhamelOptions {
            h: 1.0 / 32.0,
            half_width: 2.0,
            k_panels: 6,
            k_order: 6,
            time_steps: 16,
            estimate_grid_error: false,
            ..Default::default()
        }
    }

    #[test]
    fn collision_of_constant_is_total_rate() {
        let m = model();
        let g = PhaseGrid::new(0.25, 1.0, 12, 8, 3.0).unwrap();
        let c = Collision::new(&m, &g);
        let one = GridField::constant(&g, 1.0);
        let r = c.apply(&one);
        for j in 0..g.nk() {
            assert!((r.at(0, j) - m.total_rate(g.k[j])).abs() < 1e-8);
        }
    }

    #[test]
    fn fast_path_matches_dense_quadrature() {
        for kernel in [KernelForm::Product, KernelForm::Mixture { kappa: 0.15 }] {
            let mut p = ModelParams::reference(1.5, 0.5, 0.3, 0.2);
            p.kernel = kernel;
            let m = validate(&p).unwrap();
            let g = PhaseGrid::new(0.25, 1.0, 4, 6, 2.0).unwrap();
            let c = Collision::new(&m, &g);
            let f = GridField::from_fn(&g, &|y: f64, k: f64| (y + 3.0 * k).sin(), 0.0);
            let a = c.apply(&f);
            let b = c.apply_dense(&f);
            assert!(a.sup_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn semigroup_preserves_interface_condition_with_zero_temperature() {
        let m = model();
        let g = PhaseGrid::new(1.0 / 64.0, 2.0, 4, 4, 2.0).unwrap();
        let w0 = |y: f64, _k: f64| (-(y - 0.5).powi(2)).exp();
        let s = apply_semigroup_exact(&w0, 0.0, 0.0, &g, 0.3, &m, m.interface());
        // value just right of 0 for k > 0 is the mix of incoming data
        let nh = g.y.n_half;
        let j = g.nk() - 1;
        let k = g.k[j];
        let (pp, pm, _) = m.interface().at(k);
        let lhs = s.at(nh, j);
        let y = g.y.node(nh);
        let v = m.group_velocity(k);
        let x = y - v * 0.3;
        let want = (-m.params.gamma0 * m.total_rate(k) * 0.3).exp() * (pp * w0(x, k) + pm * w0(-x, -k));
        assert!((lhs - want).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let m = model();
        let t = m.temperature();
        let w0 = move |_: f64, _: f64| t;
        let sol = duhamel_solve(&w0, t, 0.3, &m, &small_opts()).unwrap();
        for f in &sol.fields {
            assert!(f.values.iter().all(|v| (v - t).abs() < 1e-12));
        }
    }

    #[test]
    fn picard_bound_is_monotone() {
        assert!(picard_bound(0.5, 1e-10) <= picard_bound(2.0, 1e-10));
        assert!(picard_bound(0.5, 1e-10) < 20);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let m = model();
        let w0 = |y: f64, _: f64| (-y * y).exp();
        let o = DuhamelOptions {
            tolerance: 1e-12,
            max_iterations: 2,
            ..small_opts()
        };
        assert!(matches!(duhamel_solve(&w0, 0.0, 0.3, &m, &o), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn corrupted_field_is_flagged() {
        let m = model();
        let w0 = |y: f64, _: f64| 1.0 + 0.5 * (-(y - 0.4).powi(2) * 4.0).exp();
        let sol = duhamel_solve(&w0, 1.0, 0.25, &m, &small_opts()).unwrap();
        let clean = classical_residuals(&sol, &w0, &m);
        let mut bad = sol.clone();
        let mid = bad.fields.len() / 2;
        let f = &mut bad.fields[mid];
        let nk = f.grid.nk();
        for i in 0..f.grid.ny() {
            if f.grid.y.node(i) > 1.0 {
                for j in 0..nk {
                    f.values[i * nk + j] += 1.0;
                }
            }
        }
        let dirty = classical_residuals(&bad, &w0, &m);
        assert!(dirty.transport > 10.0 * clean.transport.max(1e-3), "{clean:?} {dirty:?}");
        assert!(clean.initial < 1e-14);
    }

    fn bump(y: f64, k: f64) -> f64 {
        let r: f64 = (y - 0.8) / 0.5;
        let b = if r.abs() < 1.0 { (1.0 - r * r).powi(4) } else { 0.0 };
        0.5 * b * (1.0 + 0.5 * (2.0 * std::f64::consts::PI * k).cos())
    }

    #[test]
    fn transport_residual_halves_under_refinement() {
        let m = model();
        let w0 = |y: f64, k: f64| 1.0 + bump(y, k);
        let mut last = f64::INFINITY;
        for (h, ts) in [(16.0, 8), (32.0, 16), (64.0, 32)] {
            let o = DuhamelOptions {
                h: 1.0 / h,
                time_steps: ts,
                k_panels: 6,
                ..small_opts()
            };
            let sol = duhamel_solve(&w0, 1.0, 0.5, &m, &o).unwrap();
            let r = classical_residuals(&sol, &w0, &m);
            assert!(last / r.transport >= 1.8, "{last} -> {}", r.transport);
            last = r.transport;
        }
    }

    #[test]
    fn zero_field_stays_zero_and_far_nodes_follow_characteristics() {
        let m = model();
        let g = PhaseGrid::new(1.0 / 32.0, 2.0, 4, 4, 2.0).unwrap();
        let z = apply_semigroup(&GridField::constant(&g, 0.0), 0.2, &m);
        assert!(z.values.iter().all(|&v| v == 0.0));
        let f = GridField::from_fn(&g, &|y: f64, k: f64| 1.0 + y + k, 0.0);
        let s = apply_semigroup(&f, 0.1, &m);
        let i = g.y.n_half + 40;
        for j in 0..g.nk() {
            let k = g.k[j];
            let x = g.y.node(i) - m.group_velocity(k) * 0.1;
            let want = (-m.total_rate(k) * 0.1).exp() * (1.0 + x + k);
            assert!((s.at(i, j) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_property_within_interpolation_error() {
        let m = model();
        let g = PhaseGrid::new(1.0 / 64.0, 2.0, 4, 4, 2.0).unwrap();
        let f = GridField::from_fn(&g, &|y: f64, k: f64| bump(y, k) + bump(-y - 0.2, k), 0.0);
        for (t, s) in [(0.1, 0.25), (0.25, 0.1), (0.1, 0.1)] {
            let two = apply_semigroup(&apply_semigroup(&f, s, &m), t, &m);
            let one = apply_semigroup(&f, t + s, &m);
            assert!(one.sup_diff(&two) < 2e-3, "{}", one.sup_diff(&two));
        }
    }

    #[test]
    fn maximum_principle_and_linearity() {
        let m = validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2).with_temperature(0.0)).unwrap();
        let a = |y: f64, k: f64| bump(y, k) - 0.3 * (-(y + 0.7f64).powi(2) * 10.0).exp();
        let b = |y: f64, k: f64| (3.0 * y + k).sin() * (-y * y).exp();
        let o = small_opts();
        let sa = duhamel_solve(&a, 0.0, 0.4, &m, &o).unwrap();
        let sb = duhamel_solve(&b, 0.0, 0.4, &m, &o).unwrap();
        let ab = move |y: f64, k: f64| 2.0 * a(y, k) - 0.5 * b(y, k);
        let sab = duhamel_solve(&ab, 0.0, 0.4, &m, &o).unwrap();
        let sup0 = sa.fields[0].values.iter().fold(0.0f64, |x, v| x.max(v.abs()));
        for f in &sa.fields {
            assert!(f.values.iter().all(|v| v.abs() <= sup0 + 1e-12));
        }
        let fa = sa.final_field();
        let fb = sb.final_field();
        let fab = sab.final_field();
        for idx in 0..fa.values.len() {
            let want = 2.0 * fa.values[idx] - 0.5 * fb.values[idx];
            assert!((fab.values[idx] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn interface_residual_stays_closed_under_collisions() {
        let m = model();
        let w0 = |y: f64, k: f64| bump(y, k) + bump(-y, k);
        let o = small_opts();
        let mz = validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2).with_temperature(0.0)).unwrap();
        let sol = duhamel_solve(&w0, 0.0, 0.5, &mz, &o).unwrap();
        let free = apply_semigroup_exact(&w0, 0.0, 0.0, &sol.fields[0].grid, 0.5, &mz, mz.interface());
        let free_sol = DuhamelSolution {
            fields: vec![free.clone(), free],
            times: vec![0.0, 0.5],
            ..sol.clone()
        };
        let r = classical_residuals(&sol, &w0, &mz).interface;
        let r0 = classical_residuals(&free_sol, &w0, &mz).interface;
        assert!(r <= 3.0 * r0.max(1e-6), "{r} vs {r0}");
        let _ = m;
    }

    #[test]
    fn single_collision_term_for_short_times() {
        let m = model();
        let w0 = |y: f64, k: f64| bump(y, k);
        let t = 0.01;
        let o = DuhamelOptions { time_steps: 8, ..small_opts() };
        let mz = validate(&ModelParams::reference(2.0, 0.5, 0.3, 0.2).with_temperature(0.0)).unwrap();
        let sol = duhamel_solve(&w0, 0.0, t, &mz, &o).unwrap();
        let g = &sol.fields[0].grid;
        let c = Collision::new(&mz, g);
        let dt = t / 8.0;
        // S_t W0 + γ0∫ S_{t-s}𝓡S_s W0 by the trapezoid rule
        let mut approx = apply_semigroup_exact(&w0, 0.0, 0.0, g, t, &mz, mz.interface());
        for l in 0..=8 {
            let s = l as f64 * dt;
            let w = if l == 0 || l == 8 { 0.5 * dt } else { dt };
            let inner = c.apply(&apply_semigroup_exact(&w0, 0.0, 0.0, g, s, &mz, mz.interface()));
            approx.axpy(w, &apply_semigroup(&inner, t - s, &mz));
        }
        let rmax = mz.params.r0;
        let bound = (rmax * t).powi(2) * (rmax * t).exp() * 0.75;
        assert!(sol.final_field().sup_diff(&approx) <= bound + 1e-6);
        let _ = m;
    }
}
