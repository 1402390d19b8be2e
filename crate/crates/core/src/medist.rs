//! Matrix-exponential distributions: validation, density, Laplace transform
//! and exponential tilting.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Default tolerance on `alpha (-T)^-1 s = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-8;
/// Densities in `(-DENSITY_CLAMP, 0)` are rounding noise and are clamped to zero.
pub const DENSITY_CLAMP: f64 = 1e-12;

/// Parameters `(alpha, T, s)` of a `p`-dimensional ME distribution with
/// density `alpha exp(T x) s`.
///
/// Construction only checks shapes and finiteness; [`validate`] checks that
/// the triple actually defines a probability density.
#[derive(Debug, Clone, PartialEq)]
pub struct MEParams {
    alpha: Vector,
    t: Matrix,
    s: Vector,
}

impl MEParams {
    pub fn new(alpha: Vector, t: Matrix, s: Vector) -> Result<Self> {
        let p = alpha.len();
        if p == 0 {
            return Err(Error::Dimension("dimension p must be at least 1".into()));
        }
        if t.nrows() != t.ncols() {
            return Err(Error::NonSquare {
                rows: t.nrows(),
                cols: t.ncols(),
            });
        }
        if t.nrows() != p || s.len() != p {
            return Err(Error::Dimension(format!(
                "alpha has length {p}, T is {}x{}, s has length {}",
                t.nrows(),
                t.ncols(),
                s.len()
            )));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("alpha"));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("T"));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("s"));
        }
        Ok(Self { alpha, t, s })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(alpha: &[f64], t: &[Vec<f64>], s: &[f64]) -> Result<Self> {
        let p = alpha.len();
        if t.len() != p || t.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension(format!("T must be {p}x{p}")));
        }
        let flat: Vec<f64> = t.iter().flatten().copied().collect();
        Self::new(
            Vector::from_column_slice(alpha),
            Matrix::from_row_slice(p, p, &flat),
            Vector::from_column_slice(s),
        )
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    pub fn t(&self) -> &Matrix {
        &self.t
    }

    pub fn s(&self) -> &Vector {
        &self.s
    }

    /// Dominant eigenvalue (spectral abscissa) of `T`.
    pub fn sigma0(&self) -> Result<f64> {
        linalg::spectral_abscissa(&self.t)
    }

    /// First diagonal entry of `T` that is strictly positive, if any.
    pub fn first_positive_diagonal(&self) -> Option<(usize, f64)> {
        (0..self.dim())
            .map(|i| (i, self.t[(i, i)]))
            .find(|&(_, v)| v > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub sigma0: f64,
    /// `alpha (-T)^-1 s`; NaN when `-T` is singular.
    pub normalization: f64,
    pub diag_nonpositive: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    /// Computes every field without failing on a bad model.
    pub fn compute(params: &MEParams, tol: f64) -> Result<Self> {
        let sigma0 = params.sigma0()?;
        let normalization = match linalg::solve_linear(&(-params.t()), params.s()) {
            Ok(x) => params.alpha().dot(&x),
            Err(Error::Singular) => f64::NAN,
            Err(e) => return Err(e),
        };
        let diag_nonpositive = params.first_positive_diagonal().is_none();

        let mut messages = Vec::new();
        if sigma0 >= 0.0 {
            messages.push(format!(
                "dominant eigenvalue of T is {sigma0}, not strictly negative"
            ));
        }
        if !((normalization - 1.0).abs() <= tol) {
            messages.push(format!(
                "alpha (-T)^-1 s = {normalization}, expected 1 within {tol}"
            ));
        }
        if let Some((i, v)) = params.first_positive_diagonal() {
            messages.push(format!(
                "T[{i}][{i}] = {v} is positive; the anti-state construction is unavailable"
            ));
        }
        Ok(Self {
            sigma0,
            normalization,
            diag_nonpositive,
            messages,
        })
    }
}

/// Checks that `(alpha, T, s)` defines a probability density: `T` stable and
/// `alpha (-T)^-1 s = 1` within `tol`.
///
/// A positive diagonal is only reported in the returned flag; it becomes an
/// error when a sign split is requested.
pub fn validate(params: &MEParams, tol: f64) -> Result<ValidationReport> {
    let report = ValidationReport::compute(params, tol)?;
    if report.sigma0 >= 0.0 {
        return Err(Error::UnstableT {
            sigma0: report.sigma0,
        });
    }
    if !((report.normalization - 1.0).abs() <= tol) {
        return Err(Error::NotADensity {
            normalization: report.normalization,
            tol,
        });
    }
    Ok(report)
}

/// `alpha exp(T x) s`.
pub fn density(params: &MEParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::NegativeX(x));
    }
    let v = params
        .alpha()
        .dot(&(linalg::mat_exp(&(params.t() * x))? * params.s()));
    if v < 0.0 {
        if v > -DENSITY_CLAMP {
            return Ok(0.0);
        }
        return Err(Error::NegativeDensity { x, value: v });
    }
    Ok(v)
}

/// `alpha (lambda I - T)^-1 s`, the Laplace transform of the density at
/// `lambda`. Requires `lambda` above the dominant eigenvalue of `T`.
pub fn laplace_transform(params: &MEParams, lambda: f64) -> Result<f64> {
    let sigma0 = params.sigma0()?;
    if !(lambda > sigma0) {
        return Err(Error::LambdaTooSmall {
            lambda,
            threshold: sigma0,
        });
    }
    resolvent_form(params, lambda, 1)
}

/// `alpha (lambda I - T)^-k s` for `k >= 1`, without the abscissa check.
pub(crate) fn resolvent_form(params: &MEParams, lambda: f64, k: u32) -> Result<f64> {
    let p = params.dim();
    let a = Matrix::identity(p, p) * lambda - params.t();
    let mut x = params.s().clone();
    for _ in 0..k {
        x = linalg::solve_linear(&a, &x)?;
    }
    Ok(params.alpha().dot(&x))
}

/// Exponential tilt: the ME parameters of `exp(-lambda x) f(x) / L(lambda)`,
/// namely `(alpha / L(lambda), T - lambda I, s)`.
pub fn tilt(params: &MEParams, lambda: f64) -> Result<MEParams> {
    let norm = laplace_transform(params, lambda)?;
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Singular);
    }
    let p = params.dim();
    MEParams::new(
        params.alpha() / norm,
        params.t() - Matrix::identity(p, p) * lambda,
        params.s().clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn exp1() -> MEParams {
        MEParams::from_rows(&[1.0], &[vec![-1.0]], &[1.0]).unwrap()
    }

    /// Closed-form oracle: integral of e^{-l x} (2/3) e^{-x} (1 + cos x) over [0, inf)
    /// = (2/3) (1/(1+l) + (1+l)/((1+l)^2 + 1)).
    fn example_laplace_closed(l: f64) -> f64 {
        let a = 1.0 + l;
        2.0 / 3.0 * (1.0 / a + a / (a * a + 1.0))
    }

    #[test]
    fn validate_example() {
        let r = validate(&example::params(), NORMALIZATION_TOL).unwrap();
        assert_relative_eq!(r.sigma0, -1.0, epsilon = 1e-9);
        assert_relative_eq!(r.normalization, 1.0, epsilon = 1e-12);
        assert!(r.diag_nonpositive);
        assert!(r.messages.is_empty());
    }

    #[test]
    fn validate_exponential() {
        let r = validate(&exp1(), NORMALIZATION_TOL).unwrap();
        assert_relative_eq!(r.sigma0, -1.0, epsilon = 1e-12);
        assert_relative_eq!(r.normalization, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn validate_rejects_unstable() {
        let p = MEParams::from_rows(&[1.0], &[vec![1.0]], &[1.0]).unwrap();
        assert!(matches!(
            validate(&p, NORMALIZATION_TOL),
            Err(Error::UnstableT { .. })
        ));
        let r = ValidationReport::compute(&p, NORMALIZATION_TOL).unwrap();
        assert!(!r.diag_nonpositive);
        assert_eq!(r.messages.len(), 3);
    }

    #[test]
    fn validate_rejects_unnormalized() {
        let p = MEParams::from_rows(&[0.5], &[vec![-1.0]], &[1.0]).unwrap();
        assert!(matches!(
            validate(&p, NORMALIZATION_TOL),
            Err(Error::NotADensity { .. })
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(MEParams::from_rows(&[1.0, 0.0], &[vec![-1.0]], &[1.0]).is_err());
        assert!(MEParams::from_rows(&[], &[], &[]).is_err());
        assert!(matches!(
            MEParams::from_rows(&[f64::NAN], &[vec![-1.0]], &[1.0]),
            Err(Error::NonFinite("alpha"))
        ));
    }

    #[test]
    fn density_examples() {
        let p = example::params();
        assert_relative_eq!(density(&p, 0.0).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        assert!(density(&p, PI).unwrap().abs() < 1e-14);
        assert_relative_eq!(
            density(&exp1(), 2.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-14
        );
        assert_eq!(density(&p, -0.1), Err(Error::NegativeX(-0.1)));
    }

    #[test]
    fn density_matches_closed_form() {
        let p = example::params();
        for k in 0..=100 {
            let x = k as f64 * 0.1;
            let closed = example::density_closed(x);
            assert!((density(&p, x).unwrap() - closed).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn materially_negative_density_is_an_error() {
        // f(x) = 2 e^{-x} - e^{-x/2} / 2 turns negative near x = 3.
        let p = MEParams::from_rows(
            &[1.0, 1.0],
            &[vec![-1.0, 0.0], vec![0.0, -0.5]],
            &[2.0, -0.5],
        )
        .unwrap();
        assert!(matches!(
            density(&p, 5.0),
            Err(Error::NegativeDensity { .. })
        ));
    }

    #[test]
    fn laplace_examples() {
        let p = example::params();
        assert_relative_eq!(laplace_transform(&p, 0.0).unwrap(), 1.0, epsilon = 1e-13);
        assert_relative_eq!(
            laplace_transform(&p, 2.0).unwrap(),
            19.0 / 45.0,
            epsilon = 1e-13
        );
        assert_relative_eq!(
            laplace_transform(&p, 1.0).unwrap(),
            3.0 / 5.0,
            epsilon = 1e-13
        );
        for l in [0.0, 0.5, 1.0, 2.0, 7.5] {
            assert_relative_eq!(
                laplace_transform(&p, l).unwrap(),
                example_laplace_closed(l),
                epsilon = 1e-13
            );
        }
        assert!(matches!(
            laplace_transform(&p, -1.0),
            Err(Error::LambdaTooSmall { .. })
        ));
        assert!(matches!(
            laplace_transform(&p, -1.5),
            Err(Error::LambdaTooSmall { .. })
        ));
    }

    #[test]
    fn tilt_examples() {
        let p = example::params();
        let q = tilt(&p, 2.0).unwrap();
        assert_relative_eq!(q.alpha()[0], 45.0 / 19.0, epsilon = 1e-12);
        assert_eq!(q.alpha()[1], 0.0);
        assert_eq!(q.alpha()[2], 0.0);
        assert_eq!(q.t(), &(p.t() - Matrix::identity(3, 3) * 2.0));
        assert_eq!(q.s(), p.s());
        validate(&q, NORMALIZATION_TOL).unwrap();

        let same = tilt(&p, 0.0).unwrap();
        assert!((same.alpha() - p.alpha()).amax() < 1e-13);
        assert_eq!(same.t(), p.t());

        let e2 = tilt(&exp1(), 1.0).unwrap();
        assert_relative_eq!(e2.alpha()[0], 2.0, epsilon = 1e-14);
        assert_eq!(e2.t()[(0, 0)], -2.0);
        assert_eq!(e2.s()[0], 1.0);
    }

    #[test]
    fn tilted_density_identity() {
        let p = example::params();
        for lambda in [0.5, 2.0, 3.0] {
            let q = tilt(&p, lambda).unwrap();
            let norm = laplace_transform(&p, lambda).unwrap();
            for k in 0..=20 {
                let x = k as f64 * 0.5;
                let lhs = density(&q, x).unwrap();
                let rhs = (-lambda * x).exp() * density(&p, x).unwrap() / norm;
                assert!((lhs - rhs).abs() < 1e-10, "lambda {lambda} x {x}");
            }
            for mu in [0.0, 0.7, 2.0] {
                let lhs = laplace_transform(&q, mu).unwrap();
                let rhs = laplace_transform(&p, lambda + mu).unwrap() / norm;
                assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tilted_mass_approaches_one() {
        // Composite Simpson on [0, X]; the tail beyond X is bounded by
        // C e^{(sigma0 - lambda) X}.
        let q = tilt(&example::params(), 2.0).unwrap();
        let simpson = |upper: f64| {
            let n = 2000;
            let h = upper / n as f64;
            (0..=n)
                .map(|k| {
                    let w = if k == 0 || k == n {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    w * density(&q, k as f64 * h).unwrap()
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let mut prev_gap = f64::INFINITY;
        for upper in [1.0, 2.0, 4.0, 8.0] {
            let gap = (1.0 - simpson(upper)).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-9);
    }
}
