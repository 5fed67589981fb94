//! Box-constrained Nelder-Mead simplex minimizer with seeded random
//! restarts. Candidate points are clamped to the bounds, which keeps the
//! simplex inside the box and lets solutions sit on a boundary.

use rand::{Rng, SeedableRng};

/// Simplex settings.
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Convergence tolerance on the function spread across the simplex.
    pub f_tol: f64,
    /// Convergence tolerance on the simplex diameter.
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evals: 4000,
            f_tol: 1e-10,
            x_tol: 1e-9,
        }
    }
}

/// Minimization outcome.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    pub converged: bool,
}

const ALPHA: f64 = 1.0; // reflection
const GAMMA: f64 = 2.0; // expansion
const RHO: f64 = 0.5; // contraction
const SIGMA: f64 = 0.5; // shrink

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// One Nelder-Mead run from `x0`.
pub fn nelder_mead_bounded<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: SimplexOptions,
) -> OptimResult {
    let n = x0.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n);

    let mut start = x0.to_vec();
    clamp(&mut start, lower, upper);

    // Initial simplex: perturb each coordinate by a fraction of the box,
    // flipping direction when the step would leave it.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        let span = upper[i] - lower[i];
        let mut h = if span.is_finite() && span > 0.0 {
            0.05 * span
        } else {
            0.1 * v[i].abs().max(1e-3)
        };
        if v[i] + h > upper[i] {
            h = -h;
        }
        v[i] += h;
        clamp(&mut v, lower, upper);
        simplex.push(v);
    }

    let mut n_evals = 0;
    let mut fv: Vec<f64> = simplex
        .iter()
        .map(|v| {
            n_evals += 1;
            f(v)
        })
        .collect();

    let mut converged = false;
    while n_evals < opts.max_evals {
        // Order ascending by f.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal));
        let reorder: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let refv: Vec<f64> = order.iter().map(|&i| fv[i]).collect();
        simplex = reorder;
        fv = refv;

        let spread = (fv[n] - fv[0]).abs();
        let diam = (0..n)
            .map(|i| {
                simplex
                    .iter()
                    .map(|v| v[i])
                    .fold(f64::NEG_INFINITY, f64::max)
                    - simplex.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        if spread < opts.f_tol && diam < opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst.
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }

        let mut reflected = vec![0.0; n];
        for i in 0..n {
            reflected[i] = centroid[i] + ALPHA * (centroid[i] - simplex[n][i]);
        }
        clamp(&mut reflected, lower, upper);
        let fr = {
            n_evals += 1;
            f(&reflected)
        };

        if fr < fv[0] {
            // Expand.
            let mut expanded = vec![0.0; n];
            for i in 0..n {
                expanded[i] = centroid[i] + GAMMA * (reflected[i] - centroid[i]);
            }
            clamp(&mut expanded, lower, upper);
            let fe = {
                n_evals += 1;
                f(&expanded)
            };
            if fe < fr {
                simplex[n] = expanded;
                fv[n] = fe;
            } else {
                simplex[n] = reflected;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = reflected;
            fv[n] = fr;
        } else {
            // Contract toward the better of worst/reflected.
            let (base, fb) = if fr < fv[n] {
                (reflected.clone(), fr)
            } else {
                (simplex[n].clone(), fv[n])
            };
            let mut contracted = vec![0.0; n];
            for i in 0..n {
                contracted[i] = centroid[i] + RHO * (base[i] - centroid[i]);
            }
            clamp(&mut contracted, lower, upper);
            let fc = {
                n_evals += 1;
                f(&contracted)
            };
            if fc < fb {
                simplex[n] = contracted;
                fv[n] = fc;
            } else {
                // Shrink toward the best vertex.
                for j in 1..=n {
                    for i in 0..n {
                        simplex[j][i] =
                            simplex[0][i] + SIGMA * (simplex[j][i] - simplex[0][i]);
                    }
                    clamp(&mut simplex[j], lower, upper);
                    n_evals += 1;
                    fv[j] = f(&simplex[j]);
                }
            }
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    OptimResult {
        x: simplex[best].clone(),
        f: fv[best],
        n_evals,
        converged,
    }
}

/// Nelder-Mead from `x0` plus `restarts` seeded random starts inside the
/// box, followed by a polish run from the incumbent best (a fresh simplex
/// escapes the collapsed one). Returns the overall best.
pub fn nelder_mead_multistart<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: SimplexOptions,
    restarts: usize,
    seed: u64,
) -> OptimResult {
    let mut best = nelder_mead_bounded(&mut f, x0, lower, upper, opts);
    let mut total_evals = best.n_evals;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        let start: Vec<f64> = (0..x0.len())
            .map(|i| {
                if upper[i] > lower[i] && upper[i].is_finite() && lower[i].is_finite() {
                    rng.gen_range(lower[i]..=upper[i])
                } else {
                    x0[i]
                }
            })
            .collect();
        let run = nelder_mead_bounded(&mut f, &start, lower, upper, opts);
        total_evals += run.n_evals;
        if run.f < best.f {
            best = run;
        }
    }
    loop {
        let polish = nelder_mead_bounded(&mut f, &best.x, lower, upper, opts);
        total_evals += polish.n_evals;
        if polish.f < best.f - 1e-10 * (1.0 + best.f.abs()) {
            best = polish;
        } else {
            if polish.f < best.f {
                best = polish;
            }
            break;
        }
    }
    best.n_evals = total_evals;
    best
}
