//! Dense real small-matrix kernel.
//!
//! Everything here operates on `nalgebra` dynamic matrices. Sizes in this crate
//! never exceed a few dozen rows, so there is no sparse or Krylov path.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative residual bound accepted by [`solve_linear`].
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;
/// Pivot ratio below which an LU factorization is treated as rank-deficient.
pub const PIVOT_RATIO_TOL: f64 = 1e-14;
/// Convergence threshold handed to the real Schur iteration.
pub const EIG_EPS: f64 = f64::EPSILON;
/// Iteration cap for the real Schur iteration.
pub const EIG_MAX_ITER: usize = 10_000;

/// Numerical knobs of the kernel. [`Tolerances::default`] reproduces the
/// module constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub solve_residual: f64,
    pub pivot_ratio: f64,
    pub eig_eps: f64,
    pub eig_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solve_residual: SOLVE_RESIDUAL_TOL,
            pivot_ratio: PIVOT_RATIO_TOL,
            eig_eps: EIG_EPS,
            eig_max_iter: EIG_MAX_ITER,
        }
    }
}

fn check_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

fn check_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Maximum absolute column sum.
pub fn norm_1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute row sum.
pub fn norm_inf(a: &Matrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with Padé approximants of
/// degree 3 to 13 (Higham 2005 degree selection).
pub fn mat_exp(a: &Matrix) -> Result<Matrix> {
    let n = check_square(a)?;
    check_finite(a, "matrix exponential argument")?;
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let norm = norm_1(a);
    let (u, v, squarings) = if norm < 1.495_585_217_958_292e-2 {
        let (u, v) = pade3(a);
        (u, v, 0)
    } else if norm < 2.539_398_330_063_23e-1 {
        let (u, v) = pade5(a);
        (u, v, 0)
    } else if norm < 9.504_178_996_162_932e-1 {
        let (u, v) = pade7(a);
        (u, v, 0)
    } else if norm < 2.097_847_961_257_068 {
        let (u, v) = pade9(a);
        (u, v, 0)
    } else {
        const THETA_13: f64 = 5.371_920_351_148_152;
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let scaled = a * 2f64.powi(-s);
        let (u, v) = pade13(&scaled);
        (u, v, s as u32)
    };

    // r = (V - U)^-1 (V + U)
    let numer = &v + &u;
    let denom = v - u;
    let mut r = denom.lu().solve(&numer).ok_or(Error::Singular)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix exponential result"));
    }
    Ok(r)
}

fn pade3(a: &Matrix) -> (Matrix, Matrix) {
    const B: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
    let ident = Matrix::identity(a.nrows(), a.ncols());
    let a2 = a * a;
    let u = a * (&a2 * B[3] + &ident * B[1]);
    let v = &a2 * B[2] + ident * B[0];
    (u, v)
}

fn pade5(a: &Matrix) -> (Matrix, Matrix) {
    const B: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
    let ident = Matrix::identity(a.nrows(), a.ncols());
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let u = a * (&a4 * B[5] + &a2 * B[3] + &ident * B[1]);
    let v = &a4 * B[4] + &a2 * B[2] + ident * B[0];
    (u, v)
}

fn pade7(a: &Matrix) -> (Matrix, Matrix) {
    const B: [f64; 8] = [
        17_297_280.0,
        8_648_640.0,
        1_995_840.0,
        277_200.0,
        25_200.0,
        1_512.0,
        56.0,
        1.0,
    ];
    let ident = Matrix::identity(a.nrows(), a.ncols());
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u = a * (&a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &ident * B[1]);
    let v = &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + ident * B[0];
    (u, v)
}

fn pade9(a: &Matrix) -> (Matrix, Matrix) {
    const B: [f64; 10] = [
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
    let ident = Matrix::identity(a.nrows(), a.ncols());
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let a8 = &a6 * &a2;
    let u = a * (&a8 * B[9] + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &ident * B[1]);
    let v = &a8 * B[8] + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + ident * B[0];
    (u, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    const B: [f64; 14] = [
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
    let ident = Matrix::identity(a.nrows(), a.ncols());
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]);
    let u = a * (inner_u + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &ident * B[1]);
    let inner_v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]);
    let v = inner_v + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + ident * B[0];
    (u, v)
}

/// Solves `A x = b` by partial-pivot LU.
///
/// A factorization with a vanishing pivot ratio, or a solution whose residual
/// exceeds `1e-10 (|A| |x| + |b|)`, is reported as [`Error::Singular`].
pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<Vector> {
    solve_linear_with(a, b, &Tolerances::default())
}

pub fn solve_linear_with(a: &Matrix, b: &Vector, tol: &Tolerances) -> Result<Vector> {
    let n = check_square(a)?;
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, matrix is {n}x{n}",
            b.len()
        )));
    }
    check_finite(a, "linear system matrix")?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear system right-hand side"));
    }

    let lu = a.clone().lu();
    let u = lu.u();
    let (min_pivot, max_pivot) = u
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            (lo.min(p.abs()), hi.max(p.abs()))
        });
    if n > 0 && (max_pivot == 0.0 || min_pivot / max_pivot < tol.pivot_ratio) {
        return Err(Error::Singular);
    }
    let x = lu.solve(b).ok_or(Error::Singular)?;

    let residual = (a * &x - b).amax();
    let bound = tol.solve_residual * (norm_inf(a) * x.amax() + b.amax());
    if !residual.is_finite() || residual > bound {
        return Err(Error::Singular);
    }
    Ok(x)
}

/// All eigenvalues of a real square matrix, via the real Schur form.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    eigenvalues_with(a, &Tolerances::default())
}

pub fn eigenvalues_with(a: &Matrix, tol: &Tolerances) -> Result<Vec<Complex<f64>>> {
    check_square(a)?;
    check_finite(a, "eigenvalue argument")?;
    let schur = Schur::try_new(a.clone(), tol.eig_eps, tol.eig_max_iter)
        .ok_or(Error::EigenNoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    spectral_abscissa_with(a, &Tolerances::default())
}

pub fn spectral_abscissa_with(a: &Matrix, tol: &Tolerances) -> Result<f64> {
    if a.nrows() == 0 {
        return Err(Error::Dimension(
            "spectral abscissa of an empty matrix".into(),
        ));
    }
    Ok(eigenvalues_with(a, tol)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}
