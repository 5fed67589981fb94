//! Dense matrix exponential (Higham scaling-and-squaring with Pade
//! approximants) and the Van Loan block trick for integrals of the form
//! `int_0^h e^{sA} Q e^{sA^T} ds`.

use nalgebra::DMatrix;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let ident = DMatrix::<f64>::identity(n, n);
    let mut u_poly = DMatrix::<f64>::zeros(n, n);
    let mut v_poly = DMatrix::<f64>::zeros(n, n);
    let mut a_pow = ident.clone();
    // coeffs[1], coeffs[3], ... multiply odd powers (through the final A)
    for k in (0..coeffs.len()).step_by(2) {
        v_poly += &a_pow * coeffs[k];
        if k + 1 < coeffs.len() {
            u_poly += &a_pow * coeffs[k + 1];
        }
        if k + 2 < coeffs.len() {
            a_pow = &a_pow * &a2;
        }
    }
    (a * u_poly, v_poly)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let c = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * c[13] + &a4 * c[11] + &a2 * c[9];
    let u = a * (&a6 * u_inner + &a6 * c[7] + &a4 * c[5] + &a2 * c[3] + &ident * c[1]);
    let v_inner = &a6 * c[12] + &a4 * c[10] + &a2 * c[8];
    let v = &a6 * v_inner + &a6 * c[6] + &a4 * c[4] + &a2 * c[2] + &ident * c[0];
    (u, v)
}

/// `e^A` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "expm requires a square matrix");
    let norm = one_norm(a);

    // Degree thresholds from Higham (2005).
    let (u, v, squarings) = if norm <= 1.495_585_217_958_292e-2 {
        let (u, v) = pade_low(a, &PADE3);
        (u, v, 0)
    } else if norm <= 2.539_398_330_063_23e-1 {
        let (u, v) = pade_low(a, &PADE5);
        (u, v, 0)
    } else if norm <= 9.504_178_996_162_932e-1 {
        let (u, v) = pade_low(a, &PADE7);
        (u, v, 0)
    } else if norm <= 2.097_847_961_257_068 {
        let (u, v) = pade_low(a, &PADE9);
        (u, v, 0)
    } else {
        let theta13 = 5.371_920_351_148_152;
        let s = ((norm / theta13).log2().ceil()).max(0.0) as u32;
        let scaled = a * 2f64.powi(-(s as i32));
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("expm: Pade denominator is singular");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Computes the pair `(F, Omega)` with `F = e^{A h}` and
/// `Omega = int_0^h e^{sA} Q e^{sA^T} ds` by exponentiating the block
/// matrix `[[-A, Q], [0, A^T]] h`; then `Omega = F * E12` where `E12` is
/// the upper-right block.
pub fn transition_and_noise(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a * h));
    block.view_mut((0, n), (n, n)).copy_from(&(q * h));
    block.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * h));
    let e = expm(&block);
    let e12 = e.view((0, n), (n, n)).into_owned();
    let e22 = e.view((n, n), (n, n)).into_owned();
    let f = e22.transpose();
    let omega = &f * e12;
    // Symmetrize away roundoff.
    let omega = (&omega + omega.transpose()) * 0.5;
    (f, omega)
}
