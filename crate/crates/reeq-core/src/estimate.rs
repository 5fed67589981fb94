//! Maximum-likelihood estimation of the exact-discrete model and the
//! likelihood-ratio comparison between the constrained (efficient-price)
//! and free-coefficient fits.
//!
//! The estimated parameter vector is
//! `theta = (alpha_D, alpha_I, alpha_Theta, sigma_0, sigma_D, sigma_Theta, rho_I)`
//! plus the measurement intercept `p0` (free in both modes) and, in the
//! free mode, the three slope coefficients. The information volatility is
//! implied: `sigma_I^2 = 2 rho_I sigma_0^2`. In the constrained mode the
//! slopes are recomputed from the efficient closed form at every step, so
//! the constrained fit is nested in the free one with three restrictions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::efficient::efficient_coefficients;
use crate::error::{Error, Result};
use crate::kalman::{filter_states, kalman_loglik, FilteredStates};
use crate::model::{ModelParams, PriceCoefficients};
use crate::optim::{nelder_mead_multistart, SimplexOptions};
use crate::series::ObservationSeries;
use crate::statespace::exact_discretize;

/// Which coefficient structure the likelihood is maximized under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMode {
    /// Slopes tied to the efficient closed form; only `p0` free.
    TypeAConstrained,
    /// All four price coefficients free.
    TypeBFree,
}

/// Interest-rate treatment. The rate only enters through the constrained
/// slope formulas, so it is ignored (and not counted) in the free mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateMode {
    Fixed(f64),
    Free,
}

/// Box bounds for one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        Bounds { lower, upper }
    }
}

/// Derivative-free optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub max_evals: usize,
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_evals: 6000,
            tolerance: 1e-9,
            restarts: 3,
            seed: 0,
        }
    }
}

/// Dynamic-parameter block: bounds enforce positivity and the technical
/// condition on `rho_I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBounds {
    pub alpha: Bounds,
    pub sigma: Bounds,
    pub rho_i: Bounds,
    pub intercept: Bounds,
    pub slope: Bounds,
    pub rate: Bounds,
}

impl Default for ThetaBounds {
    fn default() -> Self {
        ThetaBounds {
            alpha: Bounds::new(1e-4, 5.0),
            sigma: Bounds::new(1e-6, 5.0),
            rho_i: Bounds::new(0.0, 2.0),
            intercept: Bounds::new(-1e4, 1e4),
            slope: Bounds::new(-1e4, 1e4),
            rate: Bounds::new(1e-4, 0.25),
        }
    }
}

/// Full estimation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSpec {
    pub mode: EstimationMode,
    pub rate_mode: RateMode,
    /// De-trending rate recorded with the series; enters the constrained
    /// slope formulas through the effective rate.
    pub xi: f64,
    /// Initial dynamic parameters; `None` derives moment-based defaults.
    pub theta_init: Option<ThetaInit>,
    /// Initial price coefficients: `p0` seeds both modes, the slopes seed
    /// the free mode. Starting the free fit at a constrained optimum makes
    /// the nesting inequality hold by construction.
    pub coeffs_init: Option<PriceCoefficients>,
    pub bounds: ThetaBounds,
    pub optimizer: OptimizerSettings,
}

/// Named initial values for the dynamic block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaInit {
    pub alpha_d: f64,
    pub alpha_i: f64,
    pub alpha_theta: f64,
    pub sigma_0: f64,
    pub sigma_d: f64,
    pub sigma_theta: f64,
    pub rho_i: f64,
}

impl EstimationSpec {
    pub fn new(mode: EstimationMode, rate_mode: RateMode, xi: f64) -> Self {
        EstimationSpec {
            mode,
            rate_mode,
            xi,
            theta_init: None,
            coeffs_init: None,
            bounds: ThetaBounds::default(),
            optimizer: OptimizerSettings::default(),
        }
    }
}

/// Estimation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub mode: EstimationMode,
    /// Fitted dynamic parameters embedded in a full parameter set
    /// (preference fields are placeholders; they do not enter the fit).
    pub params_hat: ModelParams,
    pub coeffs_hat: PriceCoefficients,
    /// Fitted interest rate when `RateMode::Free`, else the fixed value
    /// (or `None` in the free-coefficient mode, where it is undefined).
    pub rate_hat: Option<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub n_evals: usize,
    /// Count of free parameters in the fit.
    pub n_params: usize,
    #[serde(skip)]
    pub filtered: Option<FilteredStates>,
}

struct Layout {
    mode: EstimationMode,
    rate: RateMode,
    xi: f64,
}

impl Layout {
    /// theta layout: 7 dynamics + p0 [+ 3 slopes | +r].
    fn dim(&self) -> usize {
        let mut n = 8;
        if self.mode == EstimationMode::TypeBFree {
            n += 3;
        } else if matches!(self.rate, RateMode::Free) {
            n += 1;
        }
        n
    }

    fn decode(&self, x: &[f64]) -> Result<(ModelParams, PriceCoefficients)> {
        let (alpha_d, alpha_i, alpha_theta) = (x[0], x[1], x[2]);
        let (sigma_0, sigma_d, sigma_theta, rho_i) = (x[3], x[4], x[5], x[6]);
        let p0 = x[7];
        let sigma_i = (2.0 * rho_i * sigma_0 * sigma_0).max(0.0).sqrt();
        let rate = match (self.mode, self.rate) {
            (EstimationMode::TypeAConstrained, RateMode::Free) => x[8],
            (_, RateMode::Fixed(r)) => r,
            (EstimationMode::TypeBFree, RateMode::Free) => self.xi + 0.02,
        };
        let params = ModelParams {
            r: rate,
            xi: self.xi,
            beta: 0.0,
            phi: 1.0,
            alpha_d,
            alpha_i,
            alpha_theta,
            sigma_0,
            sigma_d,
            sigma_i,
            sigma_theta,
        };
        let coeffs = match self.mode {
            EstimationMode::TypeBFree => PriceCoefficients::new(p0, x[8], x[9], x[10]),
            EstimationMode::TypeAConstrained => {
                let mut c = efficient_coefficients(&params)?;
                c.p0 = p0;
                c
            }
        };
        Ok((params, coeffs))
    }
}

fn moment_theta_init(series: &ObservationSeries) -> ThetaInit {
    let sd_diff = |v: &[f64]| -> f64 {
        if v.len() < 3 {
            return 0.1;
        }
        let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        (d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
    };
    let dt = series.dt();
    let sd = (sd_diff(&series.dividend) / dt.sqrt()).max(1e-4);
    let sp = (sd_diff(&series.price) / dt.sqrt()).max(1e-3);
    ThetaInit {
        alpha_d: 0.5,
        alpha_i: 0.3,
        alpha_theta: 0.1,
        sigma_0: sd,
        sigma_d: sd,
        sigma_theta: (0.5 * sp).min(4.0),
        rho_i: 0.5,
    }
}

/// Maximizes the Kalman log-likelihood over the requested parameter block.
pub fn estimate_ml(series: &ObservationSeries, spec: &EstimationSpec) -> Result<EstimationResult> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("empty series".into()));
    }
    if let RateMode::Fixed(r) = spec.rate_mode {
        if r <= spec.xi && spec.mode == EstimationMode::TypeAConstrained {
            return Err(Error::InvalidParameter(format!(
                "fixed rate {r} must exceed xi = {}",
                spec.xi
            )));
        }
    }
    let layout = Layout {
        mode: spec.mode,
        rate: spec.rate_mode,
        xi: spec.xi,
    };
    let dim = layout.dim();
    let b = &spec.bounds;

    let mut lower = vec![0.0; dim];
    let mut upper = vec![0.0; dim];
    for i in 0..3 {
        lower[i] = b.alpha.lower;
        upper[i] = b.alpha.upper;
    }
    for i in 3..6 {
        lower[i] = b.sigma.lower;
        upper[i] = b.sigma.upper;
    }
    lower[6] = b.rho_i.lower;
    upper[6] = b.rho_i.upper;
    lower[7] = b.intercept.lower;
    upper[7] = b.intercept.upper;
    match spec.mode {
        EstimationMode::TypeBFree => {
            for i in 8..11 {
                lower[i] = b.slope.lower;
                upper[i] = b.slope.upper;
            }
        }
        EstimationMode::TypeAConstrained => {
            if matches!(spec.rate_mode, RateMode::Free) {
                lower[8] = (spec.xi + 1e-4).max(b.rate.lower);
                upper[8] = b.rate.upper.max(lower[8] + 1e-3);
            }
        }
    }

    let init = spec.theta_init.unwrap_or_else(|| moment_theta_init(series));
    let mut x0 = vec![
        init.alpha_d,
        init.alpha_i,
        init.alpha_theta,
        init.sigma_0,
        init.sigma_d,
        init.sigma_theta,
        init.rho_i,
        spec.coeffs_init.map_or(0.0, |c| c.p0),
    ];
    match spec.mode {
        EstimationMode::TypeBFree => match spec.coeffs_init {
            Some(c) => x0.extend_from_slice(&[c.p_d0, c.p_d1, c.p_i]),
            None => {
                // Moment hints: price on dividend scale for the slopes.
                let pm = series.price.iter().sum::<f64>() / series.len() as f64;
                let dm = series.dividend.iter().sum::<f64>() / series.len() as f64;
                let ratio = if dm.abs() > 1e-12 { pm / dm } else { 1.0 };
                x0.extend_from_slice(&[ratio, 1.0, ratio.abs().sqrt()]);
            }
        },
        EstimationMode::TypeAConstrained => {
            if matches!(spec.rate_mode, RateMode::Free) {
                x0.push((spec.xi + 0.03).clamp(lower[8], upper[8]));
            }
        }
    }

    let dt = series.dt();
    const PENALTY: f64 = 1e12;
    let objective = |x: &[f64]| -> f64 {
        match layout.decode(x) {
            Ok((params, coeffs)) => {
                match exact_discretize(&params, &coeffs, dt)
                    .and_then(|m| kalman_loglik(&m, series))
                {
                    Ok(ll) if ll.is_finite() => -ll,
                    _ => PENALTY,
                }
            }
            Err(_) => PENALTY,
        }
    };

    let opts = SimplexOptions {
        max_evals: spec.optimizer.max_evals,
        f_tol: spec.optimizer.tolerance,
        x_tol: spec.optimizer.tolerance.sqrt().max(1e-8),
    };
    let run = nelder_mead_multistart(
        objective,
        &x0,
        &lower,
        &upper,
        opts,
        spec.optimizer.restarts,
        spec.optimizer.seed,
    );

    let (params_hat, coeffs_hat) = layout.decode(&run.x)?;
    let model = exact_discretize(&params_hat, &coeffs_hat, dt)?;
    let filtered = filter_states(&model, series)?;
    let loglik = -run.f;
    // Contract check: re-evaluating at the optimum reproduces the optimum.
    debug_assert!((filtered.loglik - loglik).abs() <= 1e-9 * (1.0 + loglik.abs()));

    let rate_hat = match (spec.mode, spec.rate_mode) {
        (EstimationMode::TypeAConstrained, RateMode::Free) => Some(run.x[8]),
        (EstimationMode::TypeAConstrained, RateMode::Fixed(r)) => Some(r),
        (EstimationMode::TypeBFree, _) => None,
    };

    Ok(EstimationResult {
        mode: spec.mode,
        params_hat,
        coeffs_hat,
        rate_hat,
        loglik,
        converged: run.converged,
        n_evals: run.n_evals,
        n_params: dim,
        filtered: Some(filtered),
    })
}

/// Rejection levels for the likelihood-ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    None,
    AtFivePercent,
    AtOnePercent,
    AtTenthPercent,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::None => write!(f, "no rejection"),
            Rejection::AtFivePercent => write!(f, "reject at 5%"),
            Rejection::AtOnePercent => write!(f, "reject at 1%"),
            Rejection::AtTenthPercent => write!(f, "reject at 0.1%"),
        }
    }
}

/// Likelihood-ratio verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub dof: usize,
    /// Critical values at 5%, 1%, 0.1%.
    pub thresholds: [f64; 3],
    pub decision: Rejection,
}

/// Critical values used for three freed slope coefficients.
pub const CHI2_3_THRESHOLDS: [f64; 3] = [7.82, 11.35, 16.27];

/// `-2 (loglik_A - loglik_B)` against chi-squared critical values. A
/// negative statistic is returned as-is; it signals mis-nesting upstream.
pub fn lr_test(loglik_a: f64, loglik_b: f64, dof: usize) -> Result<LrTest> {
    if dof == 0 {
        return Err(Error::InvalidParameter("LR test requires dof >= 1".into()));
    }
    let statistic = -2.0 * (loglik_a - loglik_b);
    let thresholds = if dof == 3 {
        CHI2_3_THRESHOLDS
    } else {
        let chi = ChiSquared::new(dof as f64)
            .map_err(|e| Error::InvalidParameter(format!("chi-squared dof: {e}")))?;
        [
            chi.inverse_cdf(0.95),
            chi.inverse_cdf(0.99),
            chi.inverse_cdf(0.999),
        ]
    };
    let decision = if statistic >= thresholds[2] {
        Rejection::AtTenthPercent
    } else if statistic >= thresholds[1] {
        Rejection::AtOnePercent
    } else if statistic >= thresholds[0] {
        Rejection::AtFivePercent
    } else {
        Rejection::None
    };
    Ok(LrTest {
        statistic,
        dof,
        thresholds,
        decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::simulate;
    use approx::assert_relative_eq;

    fn gen_params() -> ModelParams {
        ModelParams {
            r: 0.05,
            xi: 0.0,
            beta: 0.0,
            phi: 1.0,
            alpha_d: 0.6,
            alpha_i: 0.4,
            alpha_theta: 0.15,
            sigma_0: 0.20,
            sigma_d: 0.10,
            sigma_i: 0.20,
            sigma_theta: 0.30,
        }
    }

    #[test]
    fn lr_table_row() {
        let t = lr_test(540.96, 636.39, 3).unwrap();
        assert_relative_eq!(t.statistic, 190.86, epsilon = 1e-9);
        assert_eq!(t.decision, Rejection::AtTenthPercent);
    }

    #[test]
    fn lr_equal_fits() {
        let t = lr_test(123.4, 123.4, 3).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.decision, Rejection::None);
    }

    #[test]
    fn lr_second_table_row_arithmetic() {
        let t = lr_test(487.17, 638.58, 3).unwrap();
        assert_relative_eq!(t.statistic, 302.82, epsilon = 1e-9);
    }

    #[test]
    fn lr_shift_invariance() {
        let a = lr_test(100.0, 130.0, 3).unwrap();
        let b = lr_test(100.0 + 55.5, 130.0 + 55.5, 3).unwrap();
        assert_relative_eq!(a.statistic, b.statistic, epsilon = 1e-9);
    }

    #[test]
    fn lr_negative_statistic_passes_through() {
        let t = lr_test(200.0, 150.0, 3).unwrap();
        assert!(t.statistic < 0.0);
        assert_eq!(t.decision, Rejection::None);
    }

    #[test]
    fn lr_general_dof_uses_chi2() {
        let t = lr_test(0.0, 10.0, 5).unwrap();
        assert!(t.thresholds[0] > 11.0 && t.thresholds[0] < 11.1);
    }

    #[test]
    fn self_consistency_at_optimum() {
        // Initializing at the generator recovers at least its likelihood.
        let p = gen_params();
        let coeffs = PriceCoefficients::new(-0.3, 10.0, 1.5, 3.0);
        let model = exact_discretize(&p, &coeffs, 1.0).unwrap();
        let series = simulate(&model, 150, 21).unwrap();
        let ll_true = kalman_loglik(&model, &series).unwrap();

        let mut spec = EstimationSpec::new(EstimationMode::TypeBFree, RateMode::Fixed(0.05), 0.0);
        spec.theta_init = Some(ThetaInit {
            alpha_d: p.alpha_d,
            alpha_i: p.alpha_i,
            alpha_theta: p.alpha_theta,
            sigma_0: p.sigma_0,
            sigma_d: p.sigma_d,
            sigma_theta: p.sigma_theta,
            rho_i: p.rho_i().unwrap(),
        });
        spec.optimizer = OptimizerSettings {
            max_evals: 4000,
            tolerance: 1e-9,
            restarts: 0,
            seed: 1,
        };
        let fit = estimate_ml(&series, &spec).unwrap();
        assert!(
            fit.loglik >= ll_true - 1e-6,
            "fit {} vs generator {}",
            fit.loglik,
            ll_true
        );
    }

    #[test]
    fn tiny_series_returns_finite() {
        let p = gen_params();
        let coeffs = PriceCoefficients::new(-0.3, 10.0, 1.5, 3.0);
        let model = exact_discretize(&p, &coeffs, 1.0).unwrap();
        let series = simulate(&model, 5, 4).unwrap();
        let mut spec = EstimationSpec::new(EstimationMode::TypeBFree, RateMode::Fixed(0.05), 0.0);
        spec.optimizer.max_evals = 300;
        spec.optimizer.restarts = 0;
        let fit = estimate_ml(&series, &spec).unwrap();
        assert!(fit.loglik.is_finite());
    }
}
