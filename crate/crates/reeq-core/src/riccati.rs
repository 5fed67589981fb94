//! Joint equilibrium solver: the value-function Riccati equation plus
//! market clearing, solved for candidate price rules by damped multi-start
//! Newton, with the state-independent utility ranking and (phi,
//! sigma_Theta) grid sweeps.
//!
//! # The equilibrium system
//!
//! For a conjectured price row `Pbar = (p0, pD0, pD1, pI, 1)` the investor's
//! value function is exponential-quadratic with matrix `L`, and optimality
//! requires the algebraic Riccati identity `LUL - LX - X^T L - Y = 0` built
//! from the return loadings. The optimal holding is the mean-variance
//! demand with hedging,
//! `psi Z = (S - T^{1/2} (B^{1/2})^T L) Z / (r phi T)`,
//! and clearing against the `1 + Theta` supply pins the coefficient rows.
//!
//! One scalar identity in that 20-equation set is not free: the demand
//! loading on the noise state is already determined by the remaining
//! equations, and forcing it to 1 as well leaves no solutions at all (the
//! 19 remaining equations uniquely consume the 19 unknowns). The solver
//! therefore drives the 15 Riccati entries and the clearing components on
//! the constant, both dividend states, and the information state to zero,
//! and reports the leftover noise-demand gap per candidate. The efficient
//! closed form satisfies the solved system exactly, constant included.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efficient::{classify, efficient_coefficients, EquilibriumClass, CLASSIFICATION_TOL};
use crate::error::{Error, Result};
use crate::model::{
    build_system_matrices, return_loadings_with, Mat5, ModelParams, PriceCoefficients, Row5,
    StateVector, SystemMatrices,
};

/// Riccati blocks `U`, `X`, `Y` for a given price rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiBlocks {
    pub u: Mat5,
    pub x: Mat5,
    pub y: Mat5,
    /// Return variance `T` (kept for the demand row).
    pub t: f64,
}

/// `U = B^{1/2} (T I4 - (T^{1/2})^T T^{1/2}) (B^{1/2})^T`,
/// `X = T (A - (r-xi)/2 I5) - B^{1/2} (T^{1/2})^T S`, `Y = S^T S`.
pub fn build_riccati_blocks(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
) -> Result<RiccatiBlocks> {
    let sys = build_system_matrices(params)?;
    build_riccati_blocks_with(params, coeffs, &sys)
}

fn build_riccati_blocks_with(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
    sys: &SystemMatrices,
) -> Result<RiccatiBlocks> {
    let rl = return_loadings_with(params, coeffs, sys);
    if !rl.t.is_finite() {
        return Err(Error::Numerical("non-finite return variance".into()));
    }
    let deflation = rl.t * nalgebra::SMatrix::<f64, 4, 4>::identity()
        - rl.t_half.transpose() * rl.t_half;
    let u = sys.b_half * deflation * sys.b_half.transpose();
    let half_rate = 0.5 * params.effective_rate();
    let x = (sys.a - Mat5::identity() * half_rate) * rl.t
        - sys.b_half * (rl.t_half.transpose() * rl.s);
    let y = rl.s.transpose() * rl.s;
    Ok(RiccatiBlocks { u, x, y, t: rl.t })
}

/// `L U L - L X - X^T L - Y` for a symmetric `L`.
pub fn riccati_residual(l: &Mat5, blocks: &RiccatiBlocks) -> Mat5 {
    l * blocks.u * l - l * blocks.x - blocks.x.transpose() * l - blocks.y
}

/// Demand coefficient row `psi = (S - T^{1/2} (B^{1/2})^T L) / (r phi T)`.
pub fn demand_row(params: &ModelParams, coeffs: &PriceCoefficients, l: &Mat5) -> Result<Row5> {
    let sys = build_system_matrices(params)?;
    demand_row_with(params, coeffs, l, &sys)
}

fn demand_row_with(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
    l: &Mat5,
    sys: &SystemMatrices,
) -> Result<Row5> {
    let rl = return_loadings_with(params, coeffs, sys);
    if !(rl.t > 0.0) {
        return Err(Error::Numerical(format!(
            "demand undefined for T = {} <= 0",
            rl.t
        )));
    }
    let hedge = rl.t_half * sys.b_half.transpose() * l;
    Ok((rl.s - hedge) / (params.r * params.phi * rl.t))
}

/// Clearing target: investors absorb the unit supply plus the noise flow.
fn clearing_target() -> Row5 {
    Row5::from_row_slice(&[1.0, 0.0, 0.0, 0.0, 1.0])
}

/// Full 5-component clearing residual `psi - (1, 0, 0, 0, 1)`. The first
/// four components are equations of the equilibrium system; the fifth is
/// the reported noise-demand gap.
pub fn clearing_residual(
    params: &ModelParams,
    coeffs: &PriceCoefficients,
    l: &Mat5,
) -> Result<Row5> {
    Ok(demand_row(params, coeffs, l)? - clearing_target())
}

/// Solves `r (1 + lambda - ln r) - beta - tr((B^{1/2})^T L B^{1/2}) / 2 = 0`.
pub fn lambda_closed_form(params: &ModelParams, l: &Mat5) -> Result<f64> {
    if !(params.r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda requires r > 0 (r = {})",
            params.r
        )));
    }
    let sys = build_system_matrices(params)?;
    let trace = (sys.b_half.transpose() * l * sys.b_half).trace();
    Ok(params.beta / params.r - 1.0 + params.r.ln() + trace / (2.0 * params.r))
}

/// The state-independent utility component `lambda + l_11 / 2` used to
/// rank candidates at a fixed parameter point.
pub fn essential_utility(l: &Mat5, lambda: f64) -> f64 {
    lambda + 0.5 * l[(0, 0)]
}

/// Optimal consumption rate
/// `( Z^T L Z / 2 + (r - xi) phi W + lambda - ln r ) / phi`.
pub fn optimal_consumption(
    params: &ModelParams,
    l: &Mat5,
    lambda: f64,
    z: &StateVector,
    wealth: f64,
) -> Result<f64> {
    if !(params.phi > 0.0) {
        return Err(Error::InvalidParameter("phi must be positive".into()));
    }
    if !(params.r > 0.0) {
        return Err(Error::InvalidParameter("consumption requires r > 0".into()));
    }
    let zv = z.as_vector();
    let quad = (zv.transpose() * l * zv)[(0, 0)];
    Ok(
        (0.5 * quad + params.effective_rate() * params.phi * wealth + lambda - params.r.ln())
            / params.phi,
    )
}

/// Multi-start solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_starts: usize,
    /// Uniform sampling box for the four price coefficients.
    pub coeff_range: (f64, f64),
    /// Uniform sampling box for the L entries.
    pub l_range: (f64, f64),
    pub newton_max_iter: usize,
    /// Acceptance tolerance on both residual infinity-norms.
    pub residual_tol: f64,
    /// Infinity-norm dedupe distance on the concatenated (coeffs, L) vector.
    pub dedupe_tol: f64,
    pub rng_seed: u64,
    /// Classification tolerance for the Type A / Type B tag.
    pub classification_tol: f64,
    /// Record per-start diagnostics in [`solve_report`].
    pub collect_diagnostics: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_starts: 1000,
            coeff_range: (-10.0, 10.0),
            l_range: (-10.0, 10.0),
            newton_max_iter: 80,
            residual_tol: 1e-8,
            dedupe_tol: 1e-5,
            rng_seed: 0,
            classification_tol: CLASSIFICATION_TOL,
            collect_diagnostics: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
        }
        if !(self.residual_tol > 0.0) || !(self.dedupe_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "residual_tol and dedupe_tol must be positive".into(),
            ));
        }
        if self.coeff_range.0 >= self.coeff_range.1 || self.l_range.0 >= self.l_range.1 {
            return Err(Error::InvalidParameter("empty sampling range".into()));
        }
        Ok(())
    }
}

/// A solved candidate equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEquilibrium {
    pub coeffs: PriceCoefficients,
    /// Symmetric value-function matrix, row-major.
    pub l: [[f64; 5]; 5],
    pub lambda: f64,
    pub essential_utility: f64,
    pub riccati_residual_norm: f64,
    /// Infinity-norm over the solved clearing components
    /// (constant, D0, D1, I).
    pub clearing_residual_norm: f64,
    /// Reported gap `psi_Theta - 1` on the noise-demand loading.
    pub theta_clearing_gap: f64,
    pub t_value: f64,
    pub class: EquilibriumClass,
}

impl CandidateEquilibrium {
    pub fn l_matrix(&self) -> Mat5 {
        Mat5::from_fn(|i, j| self.l[i][j])
    }
}

/// Outcome of one Newton start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostic {
    pub start_index: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_norm: f64,
}

/// Candidates plus optional per-start diagnostics.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub candidates: Vec<CandidateEquilibrium>,
    pub diagnostics: Vec<StartDiagnostic>,
}

const N_UNKNOWNS: usize = 19;
const N_EQUATIONS: usize = 19;

/// Upper-triangle index pairs in row-major order.
fn triu_pairs() -> [(usize, usize); 15] {
    let mut out = [(0usize, 0usize); 15];
    let mut k = 0;
    for i in 0..5 {
        for j in i..5 {
            out[k] = (i, j);
            k += 1;
        }
    }
    out
}

fn unpack(x: &[f64]) -> (PriceCoefficients, Mat5) {
    let coeffs = PriceCoefficients::new(x[0], x[1], x[2], x[3]);
    let mut l = Mat5::zeros();
    for (k, (i, j)) in triu_pairs().iter().enumerate() {
        l[(*i, *j)] = x[4 + k];
        l[(*j, *i)] = x[4 + k];
    }
    (coeffs, l)
}

fn pack(coeffs: &PriceCoefficients, l: &Mat5) -> [f64; N_UNKNOWNS] {
    let mut x = [0.0; N_UNKNOWNS];
    x[0] = coeffs.p0;
    x[1] = coeffs.p_d0;
    x[2] = coeffs.p_d1;
    x[3] = coeffs.p_i;
    for (k, (i, j)) in triu_pairs().iter().enumerate() {
        x[4 + k] = l[(*i, *j)];
    }
    x
}

/// The 19 equilibrium residuals at a packed point. Returns None when the
/// point leaves the domain (T <= 0 or non-finite intermediates).
fn system_residual(params: &ModelParams, sys: &SystemMatrices, x: &[f64]) -> Option<[f64; N_EQUATIONS]> {
    let (coeffs, l) = unpack(x);
    if !coeffs.is_finite() {
        return None;
    }
    let blocks = build_riccati_blocks_with(params, &coeffs, sys).ok()?;
    if !(blocks.t > 0.0) {
        return None;
    }
    let r = riccati_residual(&l, &blocks);
    let psi = demand_row_with(params, &coeffs, &l, sys).ok()?;
    let clr = psi - clearing_target();
    let mut out = [0.0; N_EQUATIONS];
    for (k, (i, j)) in triu_pairs().iter().enumerate() {
        out[k] = r[(*i, *j)];
    }
    out[15] = clr[0];
    out[16] = clr[1];
    out[17] = clr[2];
    out[18] = clr[3];
    if out.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(out)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

struct NewtonOutcome {
    x: [f64; N_UNKNOWNS],
    residual_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Damped Newton on the square system with central-difference Jacobian and
/// backtracking halving on the residual 2-norm.
fn newton_run(
    params: &ModelParams,
    sys: &SystemMatrices,
    x0: &[f64; N_UNKNOWNS],
    max_iter: usize,
    tol: f64,
) -> NewtonOutcome {
    let mut x = *x0;
    let mut f = match system_residual(params, sys, &x) {
        Some(f) => f,
        None => {
            return NewtonOutcome {
                x,
                residual_norm: f64::INFINITY,
                iterations: 0,
                converged: false,
            }
        }
    };

    let inner_tol = tol * 1e-2;
    for iter in 0..max_iter {
        let fnorm = norm_inf(&f);
        if fnorm <= inner_tol {
            return NewtonOutcome {
                x,
                residual_norm: fnorm,
                iterations: iter,
                converged: true,
            };
        }

        // Central-difference Jacobian.
        let mut jac = DMatrix::<f64>::zeros(N_EQUATIONS, N_UNKNOWNS);
        let mut ok = true;
        for j in 0..N_UNKNOWNS {
            let h = 3e-6 * x[j].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            match (
                system_residual(params, sys, &xp),
                system_residual(params, sys, &xm),
            ) {
                (Some(fp), Some(fm)) => {
                    for i in 0..N_EQUATIONS {
                        jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        let rhs = DVector::<f64>::from_row_slice(&f);
        let step = jac
            .clone()
            .lu()
            .solve(&(-&rhs))
            .or_else(|| {
                jac.svd(true, true)
                    .solve(&(-&rhs), 1e-12)
                    .ok()
            });
        let step = match step {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => break,
        };

        // Backtracking line search: accept the first strict decrease.
        let f0 = norm2(&f);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut xn = x;
            for j in 0..N_UNKNOWNS {
                xn[j] += t * step[j];
            }
            if let Some(fnew) = system_residual(params, sys, &xn) {
                if norm2(&fnew) < f0 {
                    x = xn;
                    f = fnew;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if norm_inf(&x) > 1e9 {
            break;
        }
    }

    let fnorm = norm_inf(&f);
    NewtonOutcome {
        x,
        residual_norm: fnorm,
        iterations: max_iter,
        converged: fnorm <= inner_tol,
    }
}

/// Multi-start solve returning ranked candidates.
pub fn solve_candidates(
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<Vec<CandidateEquilibrium>> {
    solve_report(params, config).map(|r| r.candidates)
}

/// Multi-start solve returning candidates plus per-start diagnostics.
pub fn solve_report(params: &ModelParams, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let params = params.validated()?;
    let sys = build_system_matrices(&params)?;

    // Seeded start list: the closed form first, then uniform draws over the
    // configured boxes.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut starts: Vec<[f64; N_UNKNOWNS]> = Vec::with_capacity(config.n_starts);
    if let Ok(eff) = efficient_coefficients(&params) {
        starts.push(pack(&eff, &Mat5::zeros()));
    }
    while starts.len() < config.n_starts {
        let mut x = [0.0; N_UNKNOWNS];
        for v in x.iter_mut().take(4) {
            *v = rng.gen_range(config.coeff_range.0..=config.coeff_range.1);
        }
        for v in x.iter_mut().skip(4) {
            *v = rng.gen_range(config.l_range.0..=config.l_range.1);
        }
        starts.push(x);
    }

    let runs: Vec<(usize, NewtonOutcome)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            (
                i,
                newton_run(&params, &sys, x0, config.newton_max_iter, config.residual_tol),
            )
        })
        .collect();

    let diagnostics: Vec<StartDiagnostic> = if config.collect_diagnostics {
        runs.iter()
            .map(|(i, o)| StartDiagnostic {
                start_index: *i,
                converged: o.converged,
                iterations: o.iterations,
                final_residual_norm: o.residual_norm,
            })
            .collect()
    } else {
        Vec::new()
    };

    // Independent re-substitution gate, then canonical dedupe.
    let mut roots: Vec<[f64; N_UNKNOWNS]> = Vec::new();
    for (_, o) in &runs {
        if !o.converged {
            continue;
        }
        if let Some(f) = system_residual(&params, &sys, &o.x) {
            if norm_inf(&f) <= config.residual_tol && o.x.iter().all(|v| v.is_finite()) {
                roots.push(o.x);
            }
        }
    }
    roots.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<[f64; N_UNKNOWNS]> = Vec::new();
    for x in roots {
        let dup = kept.iter().any(|k| {
            k.iter()
                .zip(x.iter())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                < config.dedupe_tol
        });
        if !dup {
            kept.push(x);
        }
    }

    let mut candidates = Vec::with_capacity(kept.len());
    for x in kept {
        let (coeffs, l) = unpack(&x);
        let blocks = build_riccati_blocks_with(&params, &coeffs, &sys)?;
        if !(blocks.t > 0.0) {
            continue;
        }
        let ric = riccati_residual(&l, &blocks);
        let ric_norm = ric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let psi = demand_row_with(&params, &coeffs, &l, &sys)?;
        let clr = psi - clearing_target();
        let clr_norm = (0..4).fold(0.0f64, |m, i| m.max(clr[i].abs()));
        if ric_norm > config.residual_tol || clr_norm > config.residual_tol {
            continue;
        }
        let lambda = lambda_closed_form(&params, &l)?;
        let utility = essential_utility(&l, lambda);
        let class = classify(&coeffs, &params, config.classification_tol)?;
        let mut l_arr = [[0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                l_arr[i][j] = l[(i, j)];
            }
        }
        candidates.push(CandidateEquilibrium {
            coeffs,
            l: l_arr,
            lambda,
            essential_utility: utility,
            riccati_residual_norm: ric_norm,
            clearing_residual_norm: clr_norm,
            theta_clearing_gap: clr[4],
            t_value: blocks.t,
            class,
        });
    }

    // Stable descending sort by utility.
    candidates.sort_by(|a, b| {
        b.essential_utility
            .partial_cmp(&a.essential_utility)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(SolveReport {
        candidates,
        diagnostics,
    })
}

/// One grid node of a risk-perception sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub phi: f64,
    pub sigma_theta: f64,
    pub best_type_a_utility: Option<f64>,
    pub best_type_b_utility: Option<f64>,
    /// Class of the overall best candidate; None when the node is empty.
    pub dominant: Option<crate::efficient::EquilibriumTag>,
    pub n_candidates: usize,
}

/// Runs [`solve_candidates`] on every (phi, sigma_Theta) node.
pub fn sweep(
    params_base: &ModelParams,
    phi_grid: &[f64],
    sigma_theta_grid: &[f64],
    config: &SolverConfig,
) -> Result<Vec<SweepRecord>> {
    if phi_grid.is_empty() || sigma_theta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty sweep grid".into()));
    }
    let mut out = Vec::with_capacity(phi_grid.len() * sigma_theta_grid.len());
    for &phi in phi_grid {
        for &sigma_theta in sigma_theta_grid {
            let params = ModelParams {
                phi,
                sigma_theta,
                ..*params_base
            };
            let candidates = solve_candidates(&params, config)?;
            let best_a = candidates
                .iter()
                .filter(|c| c.class.tag == crate::efficient::EquilibriumTag::TypeA)
                .map(|c| c.essential_utility)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            let best_b = candidates
                .iter()
                .filter(|c| c.class.tag == crate::efficient::EquilibriumTag::TypeB)
                .map(|c| c.essential_utility)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            let dominant = candidates.first().map(|c| c.class.tag);
            out.push(SweepRecord {
                phi,
                sigma_theta,
                best_type_a_utility: best_a,
                best_type_b_utility: best_b,
                dominant,
                n_candidates: candidates.len(),
            });
        }
    }
    Ok(out)
}

/// Writes candidates as CSV in the table layout.
pub fn candidates_to_csv<W: std::io::Write>(
    candidates: &[CandidateEquilibrium],
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "class",
        "utility",
        "p0",
        "pD0",
        "pD1",
        "pI",
        "lambda",
        "l11",
        "riccati_residual",
        "clearing_residual",
        "theta_gap",
    ])?;
    for c in candidates {
        wtr.write_record(&[
            c.class.tag.to_string(),
            format!("{:.6}", c.essential_utility),
            format!("{:.6}", c.coeffs.p0),
            format!("{:.6}", c.coeffs.p_d0),
            format!("{:.6}", c.coeffs.p_d1),
            format!("{:.6}", c.coeffs.p_i),
            format!("{:.6}", c.lambda),
            format!("{:.6}", c.l[0][0]),
            format!("{:.3e}", c.riccati_residual_norm),
            format!("{:.3e}", c.clearing_residual_norm),
            format!("{:.6}", c.theta_clearing_gap),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes sweep records as CSV, one row per grid node.
pub fn sweep_to_csv<W: std::io::Write>(records: &[SweepRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "phi",
        "sigma_theta",
        "best_type_a_utility",
        "best_type_b_utility",
        "dominant",
        "n_candidates",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in records {
        wtr.write_record(&[
            format!("{}", r.phi),
            format!("{}", r.sigma_theta),
            opt(r.best_type_a_utility),
            opt(r.best_type_b_utility),
            r.dominant
                .map_or(String::new(), |d| d.to_string()),
            format!("{}", r.n_candidates),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
