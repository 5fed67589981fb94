//! Exogenous economy parameters, state dynamics, and the matrix
//! constructions shared by the equilibrium solver, the closed-form
//! efficient price, and the estimator.
//!
//! The state vector is `Z = (1, D0, D1, I, Theta)`: a constant, the
//! permanent dividend component, the transitory dividend component, the
//! private information signal, and the noise supply. Its drift/diffusion
//! pair `(A, B^{1/2})` drives everything downstream.

use nalgebra::{RowSVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat5 = SMatrix<f64, 5, 5>;
pub type Mat5x4 = SMatrix<f64, 5, 4>;
pub type Row5 = RowSVector<f64, 5>;
pub type Row4 = RowSVector<f64, 4>;

/// Indices into the 5-dimensional state `(1, D0, D1, I, Theta)`.
pub mod state {
    pub const ONE: usize = 0;
    pub const D0: usize = 1;
    pub const D1: usize = 2;
    pub const INFO: usize = 3;
    pub const THETA: usize = 4;
}

/// Exogenous parameters of the economy. Rates and mean-reversion speeds are
/// per year; volatilities are innovation standard deviations per sqrt-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Riskless interest rate `r`.
    pub r: f64,
    /// Dividend growth trend `xi` removed by de-trending.
    pub xi: f64,
    /// Time-impatience `beta`.
    pub beta: f64,
    /// Absolute risk aversion `phi`.
    pub phi: f64,
    /// Mean-reversion speed of the transitory dividend `alpha_D`.
    pub alpha_d: f64,
    /// Mean-reversion speed of private information `alpha_I`.
    pub alpha_i: f64,
    /// Mean-reversion speed of the noise supply `alpha_Theta`.
    pub alpha_theta: f64,
    /// Permanent-dividend volatility `sigma_0`.
    pub sigma_0: f64,
    /// Transitory-dividend volatility `sigma_D`.
    pub sigma_d: f64,
    /// Information volatility `sigma_I`.
    pub sigma_i: f64,
    /// Noise volatility `sigma_Theta`.
    pub sigma_theta: f64,
}

impl ModelParams {
    /// Effective discount rate `r - xi` of the de-trended economy.
    pub fn effective_rate(&self) -> f64 {
        self.r - self.xi
    }

    /// Information-to-permanent variance ratio `rho_I = sigma_I^2 / (2 sigma_0^2)`.
    pub fn rho_i(&self) -> Result<f64> {
        rho_from_sigmas(self.sigma_i, self.sigma_0)
    }

    /// Checks every domain constraint; returns `self` for chaining.
    pub fn validated(self) -> Result<Self> {
        if !self.all_finite() {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        if self.r <= self.xi {
            return Err(Error::InvalidParameter(format!(
                "r = {} must exceed xi = {}",
                self.r, self.xi
            )));
        }
        if self.alpha_d <= 0.0 || self.alpha_i <= 0.0 {
            return Err(Error::InvalidParameter(
                "alpha_D and alpha_I must be positive".into(),
            ));
        }
        if self.alpha_theta < 0.0 {
            return Err(Error::InvalidParameter("alpha_Theta must be >= 0".into()));
        }
        if self.phi <= 0.0 {
            return Err(Error::InvalidParameter("phi must be positive".into()));
        }
        if [self.sigma_0, self.sigma_d, self.sigma_i, self.sigma_theta]
            .iter()
            .any(|s| *s < 0.0)
        {
            return Err(Error::InvalidParameter(
                "volatilities must be >= 0".into(),
            ));
        }
        if self.sigma_0 > 0.0 {
            // 0 <= rho_I <= 2 keeps the information diffusion real.
            self.rho_i()?;
        } else if self.sigma_i > 0.0 {
            return Err(Error::InvalidParameter(
                "sigma_I > 0 requires sigma_0 > 0".into(),
            ));
        }
        Ok(self)
    }

    fn all_finite(&self) -> bool {
        [
            self.r,
            self.xi,
            self.beta,
            self.phi,
            self.alpha_d,
            self.alpha_i,
            self.alpha_theta,
            self.sigma_0,
            self.sigma_d,
            self.sigma_i,
            self.sigma_theta,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `rho_I = sigma_I^2 / (2 sigma_0^2)`; rejects `sigma_0 = 0` and values
/// outside the technical condition `[0, 2]`.
pub fn rho_from_sigmas(sigma_i: f64, sigma_0: f64) -> Result<f64> {
    if sigma_0 <= 0.0 {
        return Err(Error::InvalidParameter(
            "rho_I requires sigma_0 > 0".into(),
        ));
    }
    let rho = sigma_i * sigma_i / (2.0 * sigma_0 * sigma_0);
    if !(0.0..=2.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "rho_I = {rho} outside the admissible range [0, 2]"
        )));
    }
    Ok(rho)
}

/// The state `Z = (1, D0, D1, I, Theta)`. The first component is pinned at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(SMatrix<f64, 5, 1>);

impl StateVector {
    pub fn new(d0: f64, d1: f64, info: f64, theta: f64) -> Self {
        StateVector(SMatrix::<f64, 5, 1>::from_column_slice(&[
            1.0, d0, d1, info, theta,
        ]))
    }

    pub fn as_vector(&self) -> &SMatrix<f64, 5, 1> {
        &self.0
    }
}

/// Drift `A` (5x5) and diffusion `B^{1/2}` (5x4, shock order w0, wD, wI, wTheta)
/// of the state dynamics `dZ = A Z dt + B^{1/2} dw`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: Mat5,
    pub b_half: Mat5x4,
}

impl SystemMatrices {
    /// `B = B^{1/2} (B^{1/2})^T`, the instantaneous state covariance rate.
    pub fn b(&self) -> Mat5 {
        self.b_half * self.b_half.transpose()
    }
}

/// Builds `A` and `B^{1/2}` from the parameters.
pub fn build_system_matrices(params: &ModelParams) -> Result<SystemMatrices> {
    let p = params.validated()?;
    let rho = if p.sigma_0 > 0.0 { p.rho_i()? } else { 0.0 };

    let mut a = Mat5::zeros();
    a[(state::D0, state::INFO)] = p.alpha_i;
    a[(state::D1, state::D1)] = -p.alpha_d;
    a[(state::INFO, state::INFO)] = -p.alpha_i;
    a[(state::THETA, state::THETA)] = -p.alpha_theta;

    let mut b_half = Mat5x4::zeros();
    b_half[(state::D0, 0)] = p.sigma_0;
    b_half[(state::D1, 1)] = p.sigma_d;
    b_half[(state::INFO, 0)] = -rho * p.sigma_0;
    // At rho_I = 2 the orthogonal component vanishes exactly.
    b_half[(state::INFO, 2)] = (2.0 * rho - rho * rho).max(0.0).sqrt() * p.sigma_0;
    b_half[(state::THETA, 3)] = p.sigma_theta;

    Ok(SystemMatrices { a, b_half })
}

/// The conjectured linear price rule `P = p0 + pD0 D0 + pD1 D1 + pI I + Theta`.
/// The loading on the noise state is identically 1 and not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceCoefficients {
    pub p0: f64,
    pub p_d0: f64,
    pub p_d1: f64,
    pub p_i: f64,
}

impl PriceCoefficients {
    pub fn new(p0: f64, p_d0: f64, p_d1: f64, p_i: f64) -> Self {
        PriceCoefficients { p0, p_d0, p_d1, p_i }
    }

    /// The full price row `(p0, pD0, pD1, pI, 1)` over the state.
    pub fn price_row(&self) -> Row5 {
        Row5::from_row_slice(&[self.p0, self.p_d0, self.p_d1, self.p_i, 1.0])
    }

    pub fn is_finite(&self) -> bool {
        self.p0.is_finite()
            && self.p_d0.is_finite()
            && self.p_d1.is_finite()
            && self.p_i.is_finite()
    }

    /// Largest absolute coefficient gap to `other`.
    pub fn max_abs_deviation(&self, other: &PriceCoefficients) -> f64 {
        (self.p0 - other.p0)
            .abs()
            .max((self.p_d0 - other.p_d0).abs())
            .max((self.p_d1 - other.p_d1).abs())
            .max((self.p_i - other.p_i).abs())
    }
}

/// Excess-return loadings of one share under a price rule: the expected
/// excess-return row `S`, the price diffusion row `T^{1/2}`, and the
/// instantaneous return variance `T = T^{1/2} (T^{1/2})^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnLoadings {
    pub s: Row5,
    pub t_half: Row4,
    pub t: f64,
}

/// Computes `S = M - (r - xi) Pbar + Pbar A`, `T^{1/2} = Pbar B^{1/2}` and
/// `T` for the price row `Pbar = (p0, pD0, pD1, pI, 1)`, with the dividend
/// payout row `M = (0, 1, 1, 0, 0)`. The de-trended economy discounts at the
/// effective rate `r - xi`.
pub fn return_loadings(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
) -> Result<ReturnLoadings> {
    let sys = build_system_matrices(params)?;
    Ok(return_loadings_with(params, coeffs, &sys))
}

/// As [`return_loadings`], reusing prebuilt system matrices.
pub fn return_loadings_with(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
    sys: &SystemMatrices,
) -> ReturnLoadings {
    let p_bar = coeffs.price_row();
    let m = Row5::from_row_slice(&[0.0, 1.0, 1.0, 0.0, 0.0]);
    let s = m - p_bar * params.effective_rate() + p_bar * sys.a;
    let t_half = p_bar * sys.b_half;
    let t = (t_half * t_half.transpose())[(0, 0)];
    ReturnLoadings { s, t_half, t }
}

/// Instantaneous variance of `dP`: the quadratic form `T^{1/2}(T^{1/2})^T`.
pub fn instantaneous_price_variance(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
) -> Result<f64> {
    Ok(return_loadings(params, coeffs)?.t)
}
