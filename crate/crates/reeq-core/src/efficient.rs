//! Closed-form efficient equilibrium price and the Type A / Type B
//! classifier.
//!
//! The efficient price discounts each dividend flow at the effective rate:
//! a permanent dividend dollar is worth `1/(r-xi)`, a transitory one
//! `1/(r-xi+alpha_D)`, and the information signal the difference of the
//! two present values. Any candidate whose coefficients deviate from this
//! rule is informationally inefficient (Type B).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PriceCoefficients};

/// Equilibrium class tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumTag {
    TypeA,
    TypeB,
}

impl std::fmt::Display for EquilibriumTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EquilibriumTag::TypeA => write!(f, "Equilibrium-Type A"),
            EquilibriumTag::TypeB => write!(f, "Equilibrium-Type B"),
        }
    }
}

/// Classification outcome: the tag plus the largest absolute coefficient
/// gap from the efficient closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumClass {
    pub tag: EquilibriumTag,
    pub max_coeff_deviation: f64,
}

/// Default tolerance separating Type A from Type B, in coefficient units.
/// The solver's residual tolerance propagates to coefficient error well
/// below this at the problem's scales.
pub const CLASSIFICATION_TOL: f64 = 1e-4;

/// The efficient price coefficients.
///
/// `p0` is the risk discount the market-clearing constant demands from
/// risk-averse investors; it is the unique constant under which the solved
/// equilibrium with efficient slopes clears the market, and it carries no
/// noise-volatility term.
pub fn efficient_coefficients(params: &ModelParams) -> Result<PriceCoefficients> {
    let re = params.effective_rate();
    if re <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "efficient price requires r > xi (r = {}, xi = {})",
            params.r, params.xi
        )));
    }
    let rho = if params.sigma_0 > 0.0 {
        params.rho_i()?
    } else {
        0.0
    };
    let ra_i = re + params.alpha_i;
    let ra_d = re + params.alpha_d;

    let p_d0 = 1.0 / re;
    let p_d1 = 1.0 / ra_d;
    let p_i = 1.0 / re - 1.0 / ra_i;

    let info_term = (ra_i * ra_i - 2.0 * re * params.alpha_i * rho)
        * params.sigma_0
        * params.sigma_0
        / (re * re * ra_i * ra_i);
    let transitory_term = params.sigma_d * params.sigma_d / (ra_d * ra_d);
    let p0 = -(info_term + transitory_term) * (params.r / re) * params.phi;

    Ok(PriceCoefficients::new(p0, p_d0, p_d1, p_i))
}

/// Classifies a candidate price rule against the efficient closed form.
/// Type A iff every coefficient agrees within `tol`.
pub fn classify(
    candidate: &PriceCoefficients,
    params: &ModelParams,
    tol: f64,
) -> Result<EquilibriumClass> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(
            "classification tolerance must be positive".into(),
        ));
    }
    let efficient = efficient_coefficients(params)?;
    let dev = candidate.max_abs_deviation(&efficient);
    Ok(EquilibriumClass {
        tag: if dev <= tol {
            EquilibriumTag::TypeA
        } else {
            EquilibriumTag::TypeB
        },
        max_coeff_deviation: dev,
    })
}
