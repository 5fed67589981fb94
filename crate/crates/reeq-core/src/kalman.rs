//! Kalman filter over the exact-discrete model: prediction-error
//! log-likelihood and filtered state extraction.
//!
//! The data are non-stationary, so the filter starts from a diffuse prior:
//! zero state mean with a large diagonal covariance. The first few
//! prediction errors therefore enter the likelihood as-is, which keeps
//! likelihood values comparable across model variants fitted the same way.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::series::ObservationSeries;
use crate::statespace::{StateSpaceModel, N_OBS, N_STATES};

/// Diagonal magnitude of the diffuse prior covariance.
pub const DIFFUSE_VARIANCE: f64 = 1e6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Filter options.
#[derive(Debug, Clone, Copy)]
pub struct FilterOptions {
    /// Include the Gaussian constant `-(m/2) ln 2pi` per observation.
    pub include_constant: bool,
    /// Diffuse prior variance on each state.
    pub diffuse_variance: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            include_constant: true,
            diffuse_variance: DIFFUSE_VARIANCE,
        }
    }
}

/// Filtered (posterior) state means and covariances, one entry per
/// observation time.
#[derive(Debug, Clone)]
pub struct FilteredStates {
    pub means: Vec<[f64; N_STATES]>,
    pub covariances: Vec<DMatrix<f64>>,
    pub loglik: f64,
}

/// Prediction-error log-likelihood with default options.
pub fn kalman_loglik(model: &StateSpaceModel, series: &ObservationSeries) -> Result<f64> {
    kalman_loglik_with(model, series, FilterOptions::default())
}

/// Prediction-error log-likelihood.
pub fn kalman_loglik_with(
    model: &StateSpaceModel,
    series: &ObservationSeries,
    opts: FilterOptions,
) -> Result<f64> {
    run_filter(model, series, opts, false).map(|(ll, _)| ll)
}

/// Runs the filter and returns the per-period posterior states.
pub fn filter_states(
    model: &StateSpaceModel,
    series: &ObservationSeries,
) -> Result<FilteredStates> {
    let (loglik, states) = run_filter(model, series, FilterOptions::default(), true)?;
    let (means, covariances) = states.expect("states requested");
    Ok(FilteredStates {
        means,
        covariances,
        loglik,
    })
}

type StateTrack = (Vec<[f64; N_STATES]>, Vec<DMatrix<f64>>);

fn run_filter(
    model: &StateSpaceModel,
    series: &ObservationSeries,
    opts: FilterOptions,
    keep_states: bool,
) -> Result<(f64, Option<StateTrack>)> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("empty observation series".into()));
    }
    if model.h.nrows() != N_OBS || model.h.ncols() != N_STATES {
        return Err(Error::InvalidParameter("measurement map shape".into()));
    }

    let ident = DMatrix::<f64>::identity(N_STATES, N_STATES);
    let mut x = DMatrix::<f64>::zeros(N_STATES, 1);
    let mut p = &ident * opts.diffuse_variance;

    let mut loglik = 0.0;
    let mut means = Vec::new();
    let mut covs = Vec::new();

    for t in 0..series.len() {
        // Predict.
        x = &model.f * x;
        p = &model.f * &p * model.f.transpose() + &model.omega;

        // Innovate.
        let y0 = series.price[t] - model.intercept[0];
        let y1 = series.dividend[t] - model.intercept[1];
        let hx = &model.h * &x;
        let v = [y0 - hx[(0, 0)], y1 - hx[(1, 0)]];
        let pht = &p * model.h.transpose();
        let f_inn = &model.h * &pht;

        let (a, b, c, d) = (
            f_inn[(0, 0)],
            f_inn[(0, 1)],
            f_inn[(1, 0)],
            f_inn[(1, 1)],
        );
        let det = a * d - b * c;
        if !(a > 0.0 && det > 0.0 && det.is_finite()) {
            return Err(Error::Numerical(format!(
                "innovation covariance not positive definite at t = {t} (det = {det})"
            )));
        }
        // Direct 2x2 solve of f^{-1} v.
        let fi_v = [(d * v[0] - b * v[1]) / det, (-c * v[0] + a * v[1]) / det];
        let quad = v[0] * fi_v[0] + v[1] * fi_v[1];
        loglik -= 0.5 * (det.ln() + quad);
        if opts.include_constant {
            loglik -= 0.5 * N_OBS as f64 * LN_2PI;
        }

        // Update: K = P H^T f^{-1}; Joseph-form covariance.
        let mut fi = DMatrix::<f64>::zeros(N_OBS, N_OBS);
        fi[(0, 0)] = d / det;
        fi[(0, 1)] = -b / det;
        fi[(1, 0)] = -c / det;
        fi[(1, 1)] = a / det;
        let k = &pht * fi;
        let v_col = DMatrix::<f64>::from_column_slice(N_OBS, 1, &v);
        x += &k * v_col;
        let ikh = &ident - &k * &model.h;
        p = &ikh * &p * ikh.transpose();
        // Keep symmetric under roundoff.
        p = (&p + p.transpose()) * 0.5;

        if keep_states {
            means.push([x[(0, 0)], x[(1, 0)], x[(2, 0)], x[(3, 0)]]);
            covs.push(p.clone());
        }
    }

    let states = keep_states.then_some((means, covs));
    Ok((loglik, states))
}
