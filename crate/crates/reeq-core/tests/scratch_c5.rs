//! Scratch: filter vs brute-force joint-Gaussian density (precursor of the
//! acceptance criterion; deleted before release).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use reeq_core::kalman::{kalman_loglik_with, FilterOptions};
use reeq_core::series::{ObservationSeries, SeriesMeta};
use reeq_core::statespace::StateSpaceModel;

const N: usize = 4;
const M: usize = 2;

fn brute_force_loglik(model: &StateSpaceModel, series: &ObservationSeries, prior: f64) -> f64 {
    let t_len = series.len();
    let dim = M * t_len;
    // Powers of F.
    let mut f_pow: Vec<DMatrix<f64>> = vec![DMatrix::identity(N, N)];
    for _ in 0..t_len {
        f_pow.push(&model.f * f_pow.last().unwrap());
    }
    let p0 = DMatrix::<f64>::identity(N, N) * prior;
    // Cov(z_s, z_t) = F^s P0 (F^t)' + sum_{k=1}^{min(s,t)} F^{s-k} Omega (F^{t-k})'.
    let mut big = DMatrix::<f64>::zeros(dim, dim);
    for s in 1..=t_len {
        for t in 1..=t_len {
            let mut cov = &f_pow[s] * &p0 * f_pow[t].transpose();
            for k in 1..=s.min(t) {
                cov += &f_pow[s - k] * &model.omega * f_pow[t - k].transpose();
            }
            let block = &model.h * cov * model.h.transpose();
            big.view_mut(((s - 1) * M, (t - 1) * M), (M, M)).copy_from(&block);
        }
    }
    let mut resid = DMatrix::<f64>::zeros(dim, 1);
    for t in 0..t_len {
        resid[(t * M, 0)] = series.price[t] - model.intercept[0];
        resid[(t * M + 1, 0)] = series.dividend[t] - model.intercept[1];
    }
    let chol = big.clone().cholesky().expect("brute-force covariance PD");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let solve = chol.solve(&resid);
    let quad = (resid.transpose() * solve)[(0, 0)];
    -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

#[test]
#[ignore]
fn filter_matches_brute_force() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut max_err: f64 = 0.0;
    for trial in 0..100 {
        // Random stable F, PSD Omega, random H and intercept.
        let raw = DMatrix::<f64>::from_fn(N, N, |_, _| rng.gen_range(-1.0..1.0));
        let spectral = raw
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        let f = raw * (rng.gen_range(0.3..0.95) / spectral.max(1e-6));
        let g = DMatrix::<f64>::from_fn(N, N, |_, _| rng.gen_range(-1.0..1.0));
        let omega = &g * g.transpose() + DMatrix::<f64>::identity(N, N) * 0.01;
        let h = DMatrix::<f64>::from_fn(M, N, |_, _| rng.gen_range(-2.0..2.0));
        let intercept = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let model = StateSpaceModel {
            f,
            omega,
            intercept,
            h,
            dt: 1.0,
        };
        let t_len = 1 + trial % 5;
        let times: Vec<f64> = (1..=t_len).map(|t| t as f64).collect();
        let price: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dividend: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let series =
            ObservationSeries::new(times, price, dividend, SeriesMeta::default()).unwrap();
        let opts = FilterOptions {
            include_constant: true,
            diffuse_variance: 100.0,
        };
        let ll_filter = kalman_loglik_with(&model, &series, opts).unwrap();
        let ll_brute = brute_force_loglik(&model, &series, 100.0);
        let err = (ll_filter - ll_brute).abs();
        max_err = max_err.max(err);
        assert!(
            err <= 1e-8,
            "trial {trial}: filter {ll_filter} vs brute {ll_brute} (err {err:.2e})"
        );
    }
    println!("max |filter - brute| over 100 trials: {max_err:.2e}");
}
