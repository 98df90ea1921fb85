//! Model parameters, validation and derived quantities of the kinetic
//! chain: dispersion, scattering kernel, interface coefficients and
//! the constants of the stable limit.

mod constants;
mod interface;
mod sampler;

pub use constants::{levy_constants, levy_symbol_check, DerivedConstants};
pub use interface::{CoefficientProfile, InterfaceCoefficients, Outcome};
pub use sampler::MomentumTable;

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::rng::open01;

/// Scattering kernel family. Both forms have total rate R0 |sin πk|^β.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelForm {
    /// R(k,k') = R(k) R(k') / R̄: post-collision momenta are i.i.d.
    Product,
    /// R(k,k') = R(k) R(k') (1 + κ φ(k) φ(k')) / R̄ with φ = cos 2πk - c0
    /// centred under the invariant law, a smooth k-dependent perturbation.
    Mixture { kappa: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub beta: f64,
    pub gamma0: f64,
    pub r0: f64,
    /// ω0' in the group velocity ω0' cos(πk) sgn k.
    pub omega0p: f64,
    pub bath_temperature: f64,
    pub interface: InterfaceCoefficients,
    #[serde(default = "default_kernel")]
    pub kernel: KernelForm,
}

fn default_kernel() -> KernelForm {
    KernelForm::Product
}

impl ModelParams {
    /// Reference parameters: γ0 = R0 = ω0' = 1 with constant coefficients.
    pub fn reference(beta: f64, p_plus: f64, p_minus: f64, g: f64) -> Self {
        ModelParams {
            beta,
            gamma0: 1.0,
            r0: 1.0,
            omega0p: 1.0,
            bath_temperature: 1.0,
            interface: InterfaceCoefficients::constant(p_plus, p_minus, g),
            kernel: KernelForm::Product,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.bath_temperature = t;
        self
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ValidationOptions {
    /// Permit g(0) = 0 (transparent or energy-conserving interfaces used in
    /// diagnostics).
    pub allow_zero_absorption: bool,
}

/// A model that passed every structural check, with cached quadratures.
#[derive(Clone, Debug)]
pub struct ValidatedModel {
    pub params: ModelParams,
    /// ∫_𝕋 |sin πk|^β dk.
    pub r_norm: f64,
    /// centring constant of the mixture perturbation
    pub mix_c0: f64,
    mix_bound: f64,
    pub constants: DerivedConstants,
    table: MomentumTable,
}

pub fn validate(params: &ModelParams) -> Result<ValidatedModel> {
    validate_with(params, ValidationOptions::default())
}

pub fn validate_with(params: &ModelParams, opts: ValidationOptions) -> Result<ValidatedModel> {
    let p = params;
    if !(p.beta.is_finite() && p.beta > 1.0) {
        return Err(Error::DegenerateBeta(p.beta));
    }
    for (name, v) in [("gamma0", p.gamma0), ("r0", p.r0), ("omega0p", p.omega0p)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::NonPositive { name, value: v });
        }
    }
    if !(p.bath_temperature.is_finite() && p.bath_temperature >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "bath_temperature",
            requirement: ">= 0",
            value: p.bath_temperature,
        });
    }
    p.interface.check()?;
    let g0 = p.interface.g(0.0);
    if !opts.allow_zero_absorption && !(g0 > 0.0) {
        return Err(Error::DegenerateAbsorption(g0));
    }
    let beta = p.beta;
    let r_norm = 2.0 * integrate(|k: f64| (PI * k).sin().powf(beta), 0.0, 0.5, 1e-15, 1e-13)?;
    let (mix_c0, mix_bound) = match p.kernel {
        KernelForm::Product => (0.0, 1.0),
        KernelForm::Mixture { kappa } => {
            let c0 = 2.0
                * integrate(
                    |k: f64| (PI * k).sin().powf(beta) * (2.0 * PI * k).cos(),
                    0.0,
                    0.5,
                    1e-15,
                    1e-13,
                )?
                / r_norm;
            let m = (1.0 + c0.abs()).powi(2);
            if !(kappa.is_finite() && kappa >= 0.0 && kappa * m < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "kappa",
                    requirement: "0 <= kappa < 1/(1+|c0|)^2",
                    value: kappa,
                });
            }
            (c0, 1.0 + kappa * m)
        }
    };
    let constants = levy_constants(p, r_norm)?;
    let table = MomentumTable::build(beta, r_norm)?;
    let m = ValidatedModel {
        params: p.clone(),
        r_norm,
        mix_c0,
        mix_bound,
        constants,
        table,
    };
    m.check_kernel()?;
    Ok(m)
}

impl ValidatedModel {
    pub fn beta(&self) -> f64 {
        self.params.beta
    }
    pub fn interface(&self) -> &InterfaceCoefficients {
        &self.params.interface
    }
    pub fn temperature(&self) -> f64 {
        self.params.bath_temperature
    }

    #[inline]
    fn r(&self, k: f64) -> f64 {
        (PI * k).sin().abs().powf(self.params.beta)
    }

    /// R(k) = R0 |sin πk|^β.
    #[inline]
    pub fn total_rate(&self, k: f64) -> f64 {
        self.params.r0 * self.r(k)
    }

    /// R̄ = ∫ R(k) dk.
    pub fn r_bar(&self) -> f64 {
        self.params.r0 * self.r_norm
    }

    /// ω̄'(k) = ω0' cos(πk) sgn k, zero at k = 0.
    #[inline]
    pub fn group_velocity(&self, k: f64) -> f64 {
        if k == 0.0 {
            0.0
        } else {
            self.params.omega0p * (PI * k).cos() * k.signum()
        }
    }

    pub fn holding_time_mean(&self, k: f64) -> Result<f64> {
        let rate = self.params.gamma0 * self.total_rate(k);
        if rate <= 0.0 {
            return Err(Error::ZeroRate);
        }
        Ok(1.0 / rate)
    }

    /// ω̄'(k) t̄(k): mean displacement of one flight.
    #[inline]
    pub fn mean_flight(&self, k: f64) -> f64 {
        self.group_velocity(k) / (self.params.gamma0 * self.total_rate(k))
    }

    #[inline]
    fn phi(&self, k: f64) -> f64 {
        (2.0 * PI * k).cos() - self.mix_c0
    }

    /// Symmetric kernel R(k,k').
    pub fn pair_kernel(&self, k: f64, kp: f64) -> f64 {
        let base = self.params.r0 * self.r(k) * self.r(kp) / self.r_norm;
        match self.params.kernel {
            KernelForm::Product => base,
            KernelForm::Mixture { kappa } => base * (1.0 + kappa * self.phi(k) * self.phi(kp)),
        }
    }

    /// Transition density p(k,k') = R(k,k') / R(k).
    pub fn transition_density(&self, k: f64, kp: f64) -> f64 {
        let base = self.r(kp) / self.r_norm;
        match self.params.kernel {
            KernelForm::Product => base,
            KernelForm::Mixture { kappa } => base * (1.0 + kappa * self.phi(k) * self.phi(kp)),
        }
    }

    /// Density of the invariant law μ(dk) = R(k)/R̄ dk.
    pub fn invariant_density(&self, k: f64) -> f64 {
        self.r(k) / self.r_norm
    }

    /// Draw from the invariant law μ.
    #[inline]
    pub fn sample_invariant<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = open01(rng);
        let s = self.table.sample_abs(u);
        if rng.random::<bool>() {
            s
        } else {
            -s
        }
    }

    /// Draw the next momentum from p(k, ·).
    #[inline]
    pub fn sample_momentum<R: Rng + ?Sized>(&self, k: f64, rng: &mut R) -> f64 {
        match self.params.kernel {
            KernelForm::Product => self.sample_invariant(rng),
            KernelForm::Mixture { kappa } => {
                let pk = self.phi(k);
                loop {
                    let kp = self.sample_invariant(rng);
                    let acc = (1.0 + kappa * pk * self.phi(kp)) / self.mix_bound;
                    if open01(rng) < acc {
                        return kp;
                    }
                }
            }
        }
    }

    /// Kernel symmetry and normalisation of p(k, ·).
    fn check_kernel(&self) -> Result<()> {
        let probe = [0.013, 0.07, 0.19, 0.31, 0.44, 0.5];
        for &a in &probe {
            for &b in &probe {
                for (k, kp) in [(a, b), (-a, b)] {
                    let d = (self.pair_kernel(k, kp) - self.pair_kernel(kp, k)).abs();
                    if d > 1e-12 * (1.0 + self.pair_kernel(k, kp).abs()) {
                        return Err(Error::AsymmetricKernel { k, kp, diff: d });
                    }
                }
            }
            let mass = 2.0 * integrate(|kp| self.transition_density(a, kp), 0.0, 0.5, 1e-14, 1e-12)?;
            if (mass - 1.0).abs() > 1e-9 {
                return Err(Error::AsymmetricKernel {
                    k: a,
                    kp: f64::NAN,
                    diff: mass - 1.0,
                });
            }
        }
        Ok(())
    }

    /// Serializable summary of the model and its constants.
    pub fn report(&self) -> ModelReport {
        let (pp, pm, g) = self.interface().at_zero();
        ModelReport {
            params: self.params.clone(),
            alpha_stable: self.constants.alpha,
            tau_bar: self.constants.tau_bar,
            c_beta: self.constants.c_beta,
            c_hat: self.constants.c_hat,
            r_bar: self.r_bar(),
            p_plus_0: pp,
            p_minus_0: pm,
            g_0: g,
            constants: self.constants.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelReport {
    pub params: ModelParams,
    pub alpha_stable: f64,
    pub tau_bar: f64,
    pub c_beta: f64,
    pub c_hat: f64,
    pub r_bar: f64,
    pub p_plus_0: f64,
    pub p_minus_0: f64,
    pub g_0: f64,
    pub constants: DerivedConstants,
}
