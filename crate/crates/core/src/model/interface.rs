//! Reflection / transmission / absorption coefficients at the interface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Transmit,
    Reflect,
    Absorb,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Transmit => "transmit",
            Outcome::Reflect => "reflect",
            Outcome::Absorb => "absorb",
        }
    }
}

/// Shape of the coefficient functions. All profiles depend on |k| only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientProfile {
    Constant { p_plus: f64, p_minus: f64, g: f64 },
    /// Values at nodes `k` in [0, 1/2], linearly interpolated in |k|.
    Table {
        k: Vec<f64>,
        p_plus: Vec<f64>,
        p_minus: Vec<f64>,
        g: Vec<f64>,
    },
    /// p± = p±0 + amp± |k|^exponent and g = 1 - p+ - p-.
    Power {
        p_plus_0: f64,
        p_minus_0: f64,
        amp_plus: f64,
        amp_minus: f64,
        exponent: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceCoefficients {
    pub profile: CoefficientProfile,
    /// Hoelder constant C0 in |p(k) - p(0)| <= C0 |k|^gamma.
    #[serde(default = "default_c0")]
    pub holder_c0: f64,
    #[serde(default = "default_gamma")]
    pub holder_gamma: f64,
}

fn default_c0() -> f64 {
    f64::INFINITY
}
fn default_gamma() -> f64 {
    1.0
}

fn interp(nodes: &[f64], vals: &[f64], k: f64) -> f64 {
    let k = k.abs();
    if k <= nodes[0] {
        return vals[0];
    }
    let last = nodes.len() - 1;
    if k >= nodes[last] {
        return vals[last];
    }
    let i = nodes.partition_point(|&x| x <= k) - 1;
    let t = (k - nodes[i]) / (nodes[i + 1] - nodes[i]);
    vals[i] + t * (vals[i + 1] - vals[i])
}

impl InterfaceCoefficients {
    pub fn constant(p_plus: f64, p_minus: f64, g: f64) -> Self {
        InterfaceCoefficients {
            profile: CoefficientProfile::Constant { p_plus, p_minus, g },
            holder_c0: 0.0,
            holder_gamma: 1.0,
        }
    }

    /// (p+, p-, g) at momentum k.
    pub fn at(&self, k: f64) -> (f64, f64, f64) {
        match &self.profile {
            CoefficientProfile::Constant { p_plus, p_minus, g } => (*p_plus, *p_minus, *g),
            CoefficientProfile::Table {
                k: nodes,
                p_plus,
                p_minus,
                g,
            } => (
                interp(nodes, p_plus, k),
                interp(nodes, p_minus, k),
                interp(nodes, g, k),
            ),
            CoefficientProfile::Power {
                p_plus_0,
                p_minus_0,
                amp_plus,
                amp_minus,
                exponent,
            } => {
                let s = k.abs().powf(*exponent);
                let pp = p_plus_0 + amp_plus * s;
                let pm = p_minus_0 + amp_minus * s;
                (pp, pm, 1.0 - pp - pm)
            }
        }
    }

    pub fn p_plus(&self, k: f64) -> f64 {
        self.at(k).0
    }
    pub fn p_minus(&self, k: f64) -> f64 {
        self.at(k).1
    }
    pub fn g(&self, k: f64) -> f64 {
        self.at(k).2
    }

    /// Limits at k = 0.
    pub fn at_zero(&self) -> (f64, f64, f64) {
        self.at(0.0)
    }

    /// Constant coefficients frozen at the k = 0 limits.
    pub fn frozen(&self) -> InterfaceCoefficients {
        let (p, m, g) = self.at_zero();
        InterfaceCoefficients::constant(p, m, g)
    }

    /// Outcome of one interface encounter from a uniform draw.
    #[inline]
    pub fn outcome(&self, k: f64, u: f64) -> Outcome {
        let (pp, pm, _) = self.at(k);
        if u < pp {
            Outcome::Transmit
        } else if u < pp + pm {
            Outcome::Reflect
        } else {
            Outcome::Absorb
        }
    }

    /// Structural checks: shape, balance, nonnegativity, evenness and the
    /// declared Hoelder bound. Positivity of g(0) is checked by the caller.
    pub fn check(&self) -> Result<()> {
        if let CoefficientProfile::Table {
            k,
            p_plus,
            p_minus,
            g,
        } = &self.profile
        {
            let n = k.len();
            if n < 2 || p_plus.len() != n || p_minus.len() != n || g.len() != n {
                return Err(Error::Config(
                    "coefficient table columns must have equal length >= 2".into(),
                ));
            }
            if k[0] != 0.0 || (k[n - 1] - 0.5).abs() > 1e-12 || k.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(
                    "coefficient table nodes must increase from 0 to 1/2".into(),
                ));
            }
        }
        if let CoefficientProfile::Power { exponent, .. } = &self.profile {
            if !(exponent.is_finite() && *exponent > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "exponent",
                    requirement: "> 0",
                    value: *exponent,
                });
            }
        }
        if !(self.holder_gamma > 0.0) || !(self.holder_c0 >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "holder",
                requirement: "c0 >= 0 and gamma > 0",
                value: self.holder_gamma,
            });
        }
        let (pp0, pm0, _) = self.at_zero();
        let n = 4001;
        for i in 0..n {
            let k = -0.5 + i as f64 / (n - 1) as f64;
            let (pp, pm, g) = self.at(k);
            let sum = pp + pm + g;
            if !sum.is_finite() || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::BalanceViolation { k, sum });
            }
            for (name, v) in [("p_plus", pp), ("p_minus", pm), ("g", g)] {
                if !(v >= 0.0) {
                    return Err(Error::InvalidParameter {
                        name,
                        requirement: ">= 0 for every k",
                        value: v,
                    });
                }
            }
            let (qp, qm, qg) = self.at(-k);
            if qp != pp || qm != pm || qg != g {
                return Err(Error::NonEvenCoefficient { which: "p", k });
            }
            let bound = self.holder_c0 * k.abs().powf(self.holder_gamma);
            for (which, dev) in [("p_plus", (pp - pp0).abs()), ("p_minus", (pm - pm0).abs())] {
                if dev > bound * (1.0 + 1e-9) + 1e-12 {
                    return Err(Error::HolderViolation {
                        which,
                        k,
                        deviation: dev,
                        bound,
                    });
                }
            }
        }
        Ok(())
    }
}
