//! Exact discretization of the continuous state dynamics and exact-discrete
//! simulation.
//!
//! The observable pair `(P_t, D_t)` loads on a 4-dimensional latent state
//! in the order `(D0, I, D1, Theta)`. Sampling at interval `dt` preserves
//! the continuous model exactly: the transition is `F = e^{A dt}` and the
//! innovation covariance is the integral `int_0^dt e^{sA} Sigma e^{sA^T} ds`,
//! evaluated by the augmented-block matrix exponential.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matexp::transition_and_noise;
use crate::model::{ModelParams, PriceCoefficients};
use crate::series::{ObservationSeries, SeriesMeta};

/// Latent-state indices in the discrete model.
pub mod latent {
    pub const D0: usize = 0;
    pub const INFO: usize = 1;
    pub const D1: usize = 2;
    pub const THETA: usize = 3;
}

pub const N_STATES: usize = 4;
pub const N_OBS: usize = 2;

/// Exact discrete transition plus measurement map.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    /// 4x4 transition `F = e^{A dt}`.
    pub f: DMatrix<f64>,
    /// 4x4 innovation covariance.
    pub omega: DMatrix<f64>,
    /// Measurement intercept `(p0, 0)`.
    pub intercept: [f64; 2],
    /// 2x4 loadings: price row `(pD0, pI, pD1, 1)`, dividend row `(1, 0, 1, 0)`.
    pub h: DMatrix<f64>,
    /// Sampling interval in years.
    pub dt: f64,
}

/// Continuous 4-state drift in the `(D0, I, D1, Theta)` order.
pub fn continuous_drift(params: &ModelParams) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(N_STATES, N_STATES);
    a[(latent::D0, latent::INFO)] = params.alpha_i;
    a[(latent::INFO, latent::INFO)] = -params.alpha_i;
    a[(latent::D1, latent::D1)] = -params.alpha_d;
    a[(latent::THETA, latent::THETA)] = -params.alpha_theta;
    a
}

/// Continuous 4-state diffusion covariance rate `Sigma = B^{1/2} (B^{1/2})^T`.
pub fn continuous_noise(params: &ModelParams) -> Result<DMatrix<f64>> {
    let rho = if params.sigma_0 > 0.0 {
        params.rho_i()?
    } else if params.sigma_i > 0.0 {
        return Err(Error::InvalidParameter(
            "sigma_I > 0 requires sigma_0 > 0".into(),
        ));
    } else {
        0.0
    };
    let s0sq = params.sigma_0 * params.sigma_0;
    let mut sig = DMatrix::<f64>::zeros(N_STATES, N_STATES);
    sig[(latent::D0, latent::D0)] = s0sq;
    sig[(latent::D0, latent::INFO)] = -rho * s0sq;
    sig[(latent::INFO, latent::D0)] = -rho * s0sq;
    // rho^2 + (2 rho - rho^2) = 2 rho, i.e. the information innovation
    // variance equals sigma_I^2.
    sig[(latent::INFO, latent::INFO)] = 2.0 * rho * s0sq;
    sig[(latent::D1, latent::D1)] = params.sigma_d * params.sigma_d;
    sig[(latent::THETA, latent::THETA)] = params.sigma_theta * params.sigma_theta;
    Ok(sig)
}

/// Builds the exact discrete model at sampling interval `dt`.
pub fn exact_discretize(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
    dt: f64,
) -> Result<StateSpaceModel> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    let a = continuous_drift(params);
    let sigma = continuous_noise(params)?;
    let (f, omega) = transition_and_noise(&a, &sigma, dt);

    let mut h = DMatrix::<f64>::zeros(N_OBS, N_STATES);
    h[(0, latent::D0)] = coeffs.p_d0;
    h[(0, latent::INFO)] = coeffs.p_i;
    h[(0, latent::D1)] = coeffs.p_d1;
    h[(0, latent::THETA)] = 1.0;
    h[(1, latent::D0)] = 1.0;
    h[(1, latent::D1)] = 1.0;

    Ok(StateSpaceModel {
        f,
        omega,
        intercept: [coeffs.p0, 0.0],
        h,
        dt,
    })
}

/// Lower-triangular factor `C` with `C C^T = m` for a PSD matrix, tolerant
/// of zero (or slightly negative from roundoff) eigenvalues.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let floor = -1e-8 * (1.0 + m.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let ev = eig.eigenvalues[j];
        if ev < floor {
            return Err(Error::Numerical(format!(
                "matrix is not PSD (eigenvalue {ev})"
            )));
        }
        let s = ev.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    Ok(scaled)
}

/// Draws an exact-discrete sample path of length `n` from `z_0 = 0` and
/// emits the measurement series. Deterministic in `seed`.
pub fn simulate(model: &StateSpaceModel, n: usize, seed: u64) -> Result<ObservationSeries> {
    if n == 0 {
        return Err(Error::InvalidParameter("simulate requires n >= 1".into()));
    }
    let chol = psd_factor(&model.omega)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::<f64>::zeros(N_STATES, 1);
    let mut times = Vec::with_capacity(n);
    let mut price = Vec::with_capacity(n);
    let mut dividend = Vec::with_capacity(n);
    for t in 0..n {
        let shocks = DMatrix::<f64>::from_fn(N_STATES, 1, |_, _| {
            StandardNormal.sample(&mut rng)
        });
        z = &model.f * z + &chol * shocks;
        let y = &model.h * &z;
        times.push((t + 1) as f64 * model.dt);
        price.push(model.intercept[0] + y[(0, 0)]);
        dividend.push(model.intercept[1] + y[(1, 0)]);
    }
    ObservationSeries::new(
        times,
        price,
        dividend,
        SeriesMeta {
            source: format!("simulated(seed={seed})"),
            xi: 0.0,
            normalization: 1.0,
            source_hash: None,
        },
    )
}
