//! Link functions: the maps `η = g(ρ)` between a probability ratio in
//! `(0, 1)` and the real line, their inverses, and the inverse derivatives.
//!
//! Every supported link has a strictly increasing inverse with a strictly
//! positive derivative on the whole real line. Inverse values are clamped to
//! `[PROB_CLAMP, 1 - PROB_CLAMP]` so downstream logs and divisions stay
//! finite.

use crate::error::{Error, Result};
use crate::special;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Inverse-link outputs are kept this far away from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-12;

/// A link function `g : (0,1) → ℝ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Link {
    Logit,
    Probit,
    /// `g(ρ) = -log(-log ρ)`.
    LogLog,
    /// Complementary log-log, `g(ρ) = log(-log(1-ρ))`.
    CLogLog,
    Cauchit,
    /// Student-t cdf link with fixed degrees of freedom `ν > 0`. `ν = 1`
    /// coincides with the cauchit link; `ν = 7` approximates the logit.
    StudentT(f64),
}

impl Link {
    /// `η = g(ρ)`. Errors unless `ρ ∈ (0, 1)`.
    pub fn eval(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain(format!(
                "link argument must lie strictly in (0,1), got {rho}"
            )));
        }
        Ok(match *self {
            Link::Logit => (rho / (1.0 - rho)).ln(),
            Link::Probit => special::normal_quantile(rho),
            Link::LogLog => -(-rho.ln()).ln(),
            // -ln(1-ρ) via ln_1p keeps precision for small ρ.
            Link::CLogLog => (-(-rho).ln_1p()).ln(),
            Link::Cauchit => (PI * (rho - 0.5)).tan(),
            Link::StudentT(nu) => special::t_quantile(rho, nu),
        })
    }

    /// `ρ = g⁻¹(η)`, clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn inverse(&self, eta: f64) -> f64 {
        let raw = match *self {
            Link::Logit => {
                // Evaluate through the negative-exponent branch for stability.
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Link::Probit => special::normal_cdf(eta),
            Link::LogLog => (-(-eta).exp()).exp(),
            Link::CLogLog => -(-eta.exp()).exp_m1(),
            Link::Cauchit => 0.5 + eta.atan() / PI,
            Link::StudentT(nu) => special::t_cdf(eta, nu),
        };
        raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    /// `(g⁻¹)'(η)`, strictly positive for all finite `η`.
    pub fn inverse_deriv(&self, eta: f64) -> f64 {
        let raw = match *self {
            Link::Logit => {
                // σ(η)·σ(-η) without forming ρ(1-ρ) from a saturated ρ.
                let p = if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                };
                let q = if eta >= 0.0 {
                    let e = (-eta).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + eta.exp())
                };
                p * q
            }
            Link::Probit => special::normal_pdf(eta),
            // exp(-e^{-η} - η); the exponent combination avoids overflow of
            // e^{-η} for η below -30 (the sum is -inf, the result 0).
            Link::LogLog => (-(-eta).exp() - eta).exp(),
            Link::CLogLog => (-eta.exp() + eta).exp(),
            Link::Cauchit => 1.0 / (PI * (1.0 + eta * eta)),
            Link::StudentT(nu) => special::t_pdf(eta, nu),
        };
        raw.max(f64::MIN_POSITIVE)
    }

    /// The η interval on which `inverse` is not clamped, i.e. where
    /// `g(g⁻¹(η)) = η` holds exactly.
    pub fn unclamped_range(&self) -> (f64, f64) {
        let lo = self.eval(PROB_CLAMP).unwrap();
        let hi = self.eval(1.0 - PROB_CLAMP).unwrap();
        (lo, hi)
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Logit => write!(f, "logit"),
            Link::Probit => write!(f, "probit"),
            Link::LogLog => write!(f, "loglog"),
            Link::CLogLog => write!(f, "cloglog"),
            Link::Cauchit => write!(f, "cauchit"),
            Link::StudentT(nu) => write!(f, "t:{nu}"),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    /// Accepts `logit`, `probit`, `loglog`, `cloglog`, `cauchit`, and
    /// `t:<nu>` (e.g. `t:7`).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "loglog" | "log-log" => Ok(Link::LogLog),
            "cloglog" | "complementary-log-log" => Ok(Link::CLogLog),
            "cauchit" => Ok(Link::Cauchit),
            other => {
                if let Some(nu_str) = other.strip_prefix("t:") {
                    let nu: f64 = nu_str.parse().map_err(|_| {
                        Error::InvalidModel(format!("invalid t link degrees of freedom: {nu_str}"))
                    })?;
                    if !(nu > 0.0 && nu.is_finite()) {
                        return Err(Error::InvalidModel(format!(
                            "t link requires positive finite degrees of freedom, got {nu}"
                        )));
                    }
                    Ok(Link::StudentT(nu))
                } else {
                    Err(Error::InvalidModel(format!("unknown link: {other}")))
                }
            }
        }
    }
}

impl TryFrom<String> for Link {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Link> for String {
    fn from(link: Link) -> String {
        link.to_string()
    }
}

/// All named links plus a `t:7`, useful for search candidate sets and tests.
pub fn standard_links() -> Vec<Link> {
    vec![
        Link::Logit,
        Link::Probit,
        Link::LogLog,
        Link::CLogLog,
        Link::Cauchit,
        Link::StudentT(7.0),
    ]
}
