//! Sign decomposition of `(alpha, T, s)` and the doubled jump-process
//! generator built from it.
//!
//! With `T = T+ - T-` and `s = s+ - s-` split by sign, the `2p` transient
//! states (originals `1o..po`, anti-states `1a..pa`) evolve under
//!
//! ```text
//! D(lambda) = [ T+ - lambda I    T-             ]
//!             [ T-               T+ - lambda I  ]
//! ```
//!
//! exit to `Delta_o` at rates `(s+; s-)`, to `Delta_a` at rates `(s-; s+)`, and
//! are killed at the remaining row defect. The defect is nonnegative exactly
//! when `lambda >= lambda_0`.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::medist::MEParams;

/// An abscissa of `D(lambda)` must be below `-TRANSIENCE_TOL` to count as
/// transient; this keeps a computed `0 +- eps` on the non-transient side.
pub const TRANSIENCE_TOL: f64 = 1e-9;
/// Step added to `lambda_0` by automatic selection when `lambda_0` itself is
/// not transient.
pub const AUTO_LAMBDA_DELTA: f64 = 1.0;

/// `(T+, T-, s+, s-)` and the threshold `lambda_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSplit {
    t_plus: Matrix,
    t_minus: Matrix,
    s_plus: Vector,
    s_minus: Vector,
    lambda0: f64,
}

impl SignSplit {
    pub fn from_params(params: &MEParams) -> Result<Self> {
        sign_split(params.t(), params.s())
    }

    pub fn dim(&self) -> usize {
        self.s_plus.len()
    }

    pub fn t_plus(&self) -> &Matrix {
        &self.t_plus
    }

    pub fn t_minus(&self) -> &Matrix {
        &self.t_minus
    }

    pub fn s_plus(&self) -> &Vector {
        &self.s_plus
    }

    pub fn s_minus(&self) -> &Vector {
        &self.s_minus
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// `T+ + T-`, the Metzler matrix whose abscissa decides transience.
    pub fn abs_part(&self) -> Matrix {
        &self.t_plus + &self.t_minus
    }

    /// Reassembled `T = T+ - T-`.
    pub fn t(&self) -> Matrix {
        &self.t_plus - &self.t_minus
    }

    /// Reassembled `s = s+ - s-`.
    pub fn s(&self) -> Vector {
        &self.s_plus - &self.s_minus
    }

    /// Row sums of `T+ + T-` plus `s+ + s-`.
    fn row_loads(&self) -> Vector {
        let p = self.dim();
        Vector::from_fn(p, |i, _| {
            let row: f64 = (0..p)
                .map(|j| self.t_plus[(i, j)] + self.t_minus[(i, j)])
                .sum();
            row + self.s_plus[i] + self.s_minus[i]
        })
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        if !(lambda >= self.lambda0) {
            return Err(Error::LambdaTooSmall {
                lambda,
                threshold: self.lambda0,
            });
        }
        Ok(())
    }
}

/// Splits `T` and `s` by sign. Off-diagonal entries and `s` go to the `+` or
/// `-` part according to their sign; the (nonpositive) diagonal stays in `T+`.
pub fn sign_split(t: &Matrix, s: &Vector) -> Result<SignSplit> {
    let p = t.nrows();
    if t.ncols() != p {
        return Err(Error::NonSquare {
            rows: p,
            cols: t.ncols(),
        });
    }
    if s.len() != p {
        return Err(Error::Dimension(format!(
            "s has length {}, T is {p}x{p}",
            s.len()
        )));
    }
    if let Some(i) = (0..p).find(|&i| t[(i, i)] > 0.0) {
        return Err(Error::PositiveDiagonal {
            index: i,
            value: t[(i, i)],
        });
    }

    let mut t_plus = Matrix::zeros(p, p);
    let mut t_minus = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let v = t[(i, j)];
            if i == j || v > 0.0 {
                t_plus[(i, j)] = v;
            } else if v < 0.0 {
                t_minus[(i, j)] = -v;
            }
        }
    }
    let s_plus = s.map(|v| v.max(0.0));
    let s_minus = s.map(|v| (-v).max(0.0));

    let mut split = SignSplit {
        t_plus,
        t_minus,
        s_plus,
        s_minus,
        lambda0: 0.0,
    };
    split.lambda0 = lambda_zero(&split);
    Ok(split)
}

/// Least `lambda >= 0` for which every row of the doubled generator has a
/// nonnegative defect: `max(0, max_i [sum_j (T+ + T-)_ij + s+_i + s-_i])`.
pub fn lambda_zero(split: &SignSplit) -> f64 {
    split.row_loads().iter().copied().fold(0.0, f64::max)
}

/// How the initial vector `alpha` is spread over original and anti-states.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSplit {
    pub w_plus: f64,
    pub w_minus: f64,
    /// Positive part of `alpha` normalized to a probability vector, or zero.
    pub alpha_plus: Vector,
    pub alpha_minus: Vector,
    /// Joint initial law on originals (`alphahat_plus`) and anti-states
    /// (`alphahat_minus`); the two together sum to one.
    pub alphahat_plus: Vector,
    pub alphahat_minus: Vector,
}

impl InitialSplit {
    pub fn w_total(&self) -> f64 {
        self.w_plus + self.w_minus
    }

    /// `(alphahat_plus, alphahat_minus)` as one vector of length `2p`.
    pub fn doubled(&self) -> Vector {
        let p = self.alphahat_plus.len();
        Vector::from_fn(2 * p, |k, _| {
            if k < p {
                self.alphahat_plus[k]
            } else {
                self.alphahat_minus[k - p]
            }
        })
    }
}

pub fn initial_split(alpha: &Vector) -> Result<InitialSplit> {
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("alpha"));
    }
    let pos = alpha.map(|v| v.max(0.0));
    let neg = alpha.map(|v| (-v).max(0.0));
    let w_plus: f64 = pos.sum();
    let w_minus: f64 = neg.sum();
    let total = w_plus + w_minus;
    if total == 0.0 {
        return Err(Error::ZeroAlpha);
    }
    let normalized = |v: &Vector, w: f64| {
        if w > 0.0 {
            v / w
        } else {
            Vector::zeros(v.len())
        }
    };
    Ok(InitialSplit {
        w_plus,
        w_minus,
        alpha_plus: normalized(&pos, w_plus),
        alpha_minus: normalized(&neg, w_minus),
        alphahat_plus: &pos / total,
        alphahat_minus: &neg / total,
    })
}

/// `D(lambda)`, the `2p x 2p` block matrix over original and anti-states.
/// No admissibility checks; `lambda = 0` gives the untilted doubled matrix.
pub fn doubled_matrix(split: &SignSplit, lambda: f64) -> Matrix {
    let p = split.dim();
    let diag = &split.t_plus - Matrix::identity(p, p) * lambda;
    let mut d = Matrix::zeros(2 * p, 2 * p);
    d.view_mut((0, 0), (p, p)).copy_from(&diag);
    d.view_mut((p, p), (p, p)).copy_from(&diag);
    d.view_mut((0, p), (p, p)).copy_from(&split.t_minus);
    d.view_mut((p, 0), (p, p)).copy_from(&split.t_minus);
    d
}

fn stack(top: &Vector, bottom: &Vector) -> Vector {
    let p = top.len();
    Vector::from_fn(2 * p, |k, _| if k < p { top[k] } else { bottom[k - p] })
}

/// The doubled subintensity structure at a fixed `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub lambda: f64,
    /// Transitions among the `2p` transient states.
    pub d: Matrix,
    /// Rates into `Delta_o`: `(s+; s-)`.
    pub abs_o: Vector,
    /// Rates into `Delta_a`: `(s-; s+)`.
    pub abs_a: Vector,
    /// Killing rates (row defect), nonnegative.
    pub term: Vector,
}

impl Generator {
    pub fn n_transient(&self) -> usize {
        self.d.nrows()
    }

    /// The `(2p + 2) x (2p + 2)` subintensity matrix with `Delta_o`, `Delta_a`
    /// as the last two (absorbing, all-zero) rows. Killing is the row defect.
    pub fn full_matrix(&self) -> Matrix {
        let n = self.n_transient();
        let mut g = Matrix::zeros(n + 2, n + 2);
        g.view_mut((0, 0), (n, n)).copy_from(&self.d);
        g.view_mut((0, n), (n, 1)).copy_from(&self.abs_o);
        g.view_mut((0, n + 1), (n, 1)).copy_from(&self.abs_a);
        g
    }
}

pub fn build_generator(split: &SignSplit, lambda: f64) -> Result<Generator> {
    split.check_lambda(lambda)?;
    let loads = split.row_loads();
    let term_half = loads.map(|l| (lambda - l).max(0.0));
    Ok(Generator {
        lambda,
        d: doubled_matrix(split, lambda),
        abs_o: stack(&split.s_plus, &split.s_minus),
        abs_a: stack(&split.s_minus, &split.s_plus),
        term: stack(&term_half, &term_half),
    })
}

/// Exit intensities and the conditional landing probabilities given the
/// pre-exit state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitProfile {
    /// Total exit rate out of the transient block: `lambda 1 - (T+ + T-) 1`.
    pub d: Vector,
    pub q_plus: Vector,
    pub q_minus: Vector,
    /// Expected landing sign given exit from `i^o`: `q+_i - q-_i`.
    pub qbar_original: Vector,
    /// Expected landing sign given exit from `i^a`: `q-_i - q+_i`.
    pub qbar_anti: Vector,
}

impl ExitProfile {
    /// `qbar` indexed by doubled state (`0..p` originals, `p..2p` anti-states).
    pub fn qbar(&self, state: usize) -> f64 {
        let p = self.d.len();
        if state < p {
            self.qbar_original[state]
        } else {
            self.qbar_anti[state - p]
        }
    }
}

pub fn exit_profile(split: &SignSplit, lambda: f64) -> Result<ExitProfile> {
    split.check_lambda(lambda)?;
    let p = split.dim();
    let abs = split.abs_part();
    let d = Vector::from_fn(p, |i, _| lambda - abs.row(i).sum());
    let ratio = |num: f64, den: f64| {
        if den > 0.0 && num > 0.0 {
            (num / den).min(1.0)
        } else {
            0.0
        }
    };
    let q_plus = Vector::from_fn(p, |i, _| ratio(split.s_plus[i], d[i]));
    let q_minus = Vector::from_fn(p, |i, _| ratio(split.s_minus[i], d[i]));
    let qbar_original = &q_plus - &q_minus;
    let qbar_anti = -&qbar_original;
    Ok(ExitProfile {
        d,
        q_plus,
        q_minus,
        qbar_original,
        qbar_anti,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transience {
    pub transient: bool,
    /// Spectral abscissa of `D(lambda)`.
    pub abscissa: f64,
}

/// The doubled states are transient iff `D(lambda)` is stable. Defined for
/// any `lambda`, though only `lambda >= lambda_0` gives a jump process.
pub fn check_transience(split: &SignSplit, lambda: f64) -> Result<Transience> {
    let abscissa = linalg::spectral_abscissa(&doubled_matrix(split, lambda))?;
    Ok(Transience {
        transient: abscissa < -TRANSIENCE_TOL,
        abscissa,
    })
}

/// `exp(D(lambda) x) (s; -s)`. Entry `i` is the signed absorption density
/// started from `i^o`, entry `p + i` the one started from `i^a`.
pub fn doubled_signed_density(split: &SignSplit, lambda: f64, x: f64) -> Result<Vector> {
    if !(x >= 0.0) {
        return Err(Error::NegativeX(x));
    }
    let tr = check_transience(split, lambda)?;
    if !tr.transient {
        return Err(Error::NotTransient {
            lambda,
            abscissa: tr.abscissa,
        });
    }
    let s = split.s();
    let e = linalg::mat_exp(&(doubled_matrix(split, lambda) * x))?;
    Ok(e * stack(&s, &(-&s)))
}

/// Tilting rate as requested by a caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    /// `lambda_0` when transient there, else `lambda_0 + delta`.
    Auto {
        delta: f64,
    },
    Value(f64),
}

impl LambdaSpec {
    pub fn auto() -> Self {
        LambdaSpec::Auto {
            delta: AUTO_LAMBDA_DELTA,
        }
    }

    /// Resolves to a concrete rate and checks that it is admissible and
    /// transient.
    pub fn resolve(self, split: &SignSplit) -> Result<f64> {
        let lambda = match self {
            LambdaSpec::Auto { delta } => auto_lambda(split, delta)?,
            LambdaSpec::Value(v) => v,
        };
        let tr = check_transience(split, lambda)?;
        if !tr.transient {
            return Err(Error::NotTransient {
                lambda,
                abscissa: tr.abscissa,
            });
        }
        Ok(lambda)
    }
}

pub fn auto_lambda(split: &SignSplit, delta: f64) -> Result<f64> {
    let lambda0 = split.lambda0();
    if check_transience(split, lambda0)?.transient {
        Ok(lambda0)
    } else {
        Ok(lambda0 + delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use approx::assert_relative_eq;
    use nalgebra::Complex;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        let p = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix::from_row_slice(p, rows[0].len(), &flat)
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn example_split() -> SignSplit {
        SignSplit::from_params(&example::params()).unwrap()
    }

    fn phase_type() -> MEParams {
        let t = m(&[&[-3.0, 1.0, 0.5], &[0.0, -2.0, 1.0], &[0.5, 0.5, -1.5]]);
        let s = -(&t * Vector::from_element(3, 1.0));
        MEParams::new(v(&[0.2, 0.5, 0.3]), t, s).unwrap()
    }

    #[test]
    fn example_split_values() {
        let sp = example_split();
        let t23 = 2.0 / 3.0;
        assert_eq!(
            sp.t_plus(),
            &m(&[&[-1.0, 0.0, t23], &[1.0, -1.0, 0.0], &[0.0, 0.0, -1.0]])
        );
        assert_eq!(
            sp.t_minus(),
            &m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, t23], &[0.0, 0.0, 0.0]])
        );
        assert_eq!(sp.s_plus(), example::params().s());
        assert_eq!(sp.s_minus(), &Vector::zeros(3));
        assert_eq!(sp.lambda0(), 2.0);
    }

    #[test]
    fn phase_type_split_is_trivial() {
        let ph = phase_type();
        let sp = SignSplit::from_params(&ph).unwrap();
        assert_eq!(sp.t_minus(), &Matrix::zeros(3, 3));
        assert_eq!(sp.s_minus(), &Vector::zeros(3));
        assert!(lambda_zero(&sp).abs() < 1e-15);
    }

    #[test]
    fn positive_diagonal_rejected() {
        let t = m(&[&[0.5, 0.0], &[0.0, -1.0]]);
        let err = sign_split(&t, &v(&[1.0, 1.0])).unwrap_err();
        assert_eq!(
            err,
            Error::PositiveDiagonal {
                index: 0,
                value: 0.5
            }
        );
    }

    #[test]
    fn lambda_zero_clamps_at_zero() {
        let sp = sign_split(&m(&[&[-1.0]]), &v(&[0.0])).unwrap();
        assert_eq!(lambda_zero(&sp), 0.0);
    }

    #[test]
    fn initial_split_examples() {
        let a = initial_split(&v(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!((a.w_plus, a.w_minus), (1.0, 0.0));
        assert_eq!(a.alphahat_plus, v(&[1.0, 0.0, 0.0]));
        assert_eq!(a.alphahat_minus, Vector::zeros(3));
        assert_eq!(a.alpha_minus, Vector::zeros(3));

        let b = initial_split(&v(&[-1.0])).unwrap();
        assert_eq!((b.w_plus, b.w_minus), (0.0, 1.0));
        assert_eq!(b.alphahat_minus, v(&[1.0]));
        assert_eq!(b.alphahat_plus, v(&[0.0]));

        let c = initial_split(&v(&[0.5, -0.5])).unwrap();
        assert_eq!((c.w_plus, c.w_minus), (0.5, 0.5));
        assert_eq!(c.alphahat_plus, v(&[0.5, 0.0]));
        assert_eq!(c.alphahat_minus, v(&[0.0, 0.5]));
        assert_eq!(c.alpha_plus, v(&[1.0, 0.0]));

        assert_eq!(initial_split(&v(&[0.0, 0.0])), Err(Error::ZeroAlpha));
    }

    #[test]
    fn example_generator_matches_display() {
        let g = build_generator(&example_split(), 2.0).unwrap();
        let t = 2.0 / 3.0;
        let expected = m(&[
            &[-3.0, 0.0, t, 0.0, 1.0, 0.0],
            &[1.0, -3.0, 0.0, 0.0, 0.0, t],
            &[0.0, 0.0, -3.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, -3.0, 0.0, t],
            &[0.0, 0.0, t, 1.0, -3.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 0.0, -3.0],
        ]);
        assert_eq!(g.d, expected);
        // Defect is 0 on the tight first row.
        assert_eq!(g.term[0], 0.0);
        assert_eq!(g.term[3], 0.0);
        assert!(g.term.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn lambda_below_threshold_rejected() {
        let sp = example_split();
        assert!(matches!(
            build_generator(&sp, 1.5),
            Err(Error::LambdaTooSmall { .. })
        ));
        assert!(matches!(
            exit_profile(&sp, 1.5),
            Err(Error::LambdaTooSmall { .. })
        ));
    }

    #[test]
    fn example_exit_profile() {
        let ep = exit_profile(&example_split(), 2.0).unwrap();
        let close = |a: &Vector, b: &[f64]| (a - v(b)).amax() < 1e-14;
        assert!(close(&ep.d, &[4.0 / 3.0, 4.0 / 3.0, 3.0]));
        assert!(close(&ep.q_plus, &[1.0, 0.5, 1.0 / 3.0]));
        assert_eq!(ep.q_minus, Vector::zeros(3));
        assert!(close(&ep.qbar_original, &[1.0, 0.5, 1.0 / 3.0]));
        assert_eq!(ep.qbar_anti, -&ep.qbar_original);
    }

    #[test]
    fn zero_exit_rate_gives_zero_q() {
        // Row 0 has d = lambda - 0 = 0 at lambda = 0.
        let sp = sign_split(&m(&[&[0.0, 0.0], &[1.0, -2.0]]), &v(&[0.0, 1.0])).unwrap();
        let ep = exit_profile(&sp, 0.0).unwrap();
        assert_eq!(ep.d[0], 0.0);
        assert_eq!(ep.q_plus[0], 0.0);
        assert_eq!(ep.q_minus[0], 0.0);
    }

    #[test]
    fn zero_exit_vector_gives_zero_qbar() {
        let sp = sign_split(&m(&[&[-1.0, 0.5], &[0.5, -1.0]]), &Vector::zeros(2)).unwrap();
        let ep = exit_profile(&sp, 1.0).unwrap();
        assert_eq!(ep.qbar_original, Vector::zeros(2));
        assert_eq!(ep.qbar_anti, Vector::zeros(2));
    }

    #[test]
    fn transience_examples() {
        let sp = example_split();
        let at2 = check_transience(&sp, 2.0).unwrap();
        assert!(at2.transient);
        assert_relative_eq!(at2.abscissa, -2.0, epsilon = 1e-9);
        assert!(!check_transience(&sp, 0.0).unwrap().transient);
        let ph = SignSplit::from_params(&phase_type()).unwrap();
        assert!(check_transience(&ph, ph.lambda0()).unwrap().transient);
    }

    #[test]
    fn auto_lambda_rules() {
        assert_eq!(LambdaSpec::auto().resolve(&example_split()).unwrap(), 2.0);
        // lambda_0 = 0 and T+ + T- = 0: not transient at 0, so step by delta.
        let sp = sign_split(&m(&[&[0.0]]), &v(&[0.0])).unwrap();
        assert_eq!(sp.lambda0(), 0.0);
        assert_eq!(LambdaSpec::Auto { delta: 0.25 }.resolve(&sp).unwrap(), 0.25);
        assert!(matches!(
            LambdaSpec::Value(0.0).resolve(&sp),
            Err(Error::NotTransient { .. })
        ));
    }

    #[test]
    fn signed_density_matches_tilted_vector() {
        let sp = example_split();
        let p = example::params();
        for lambda in [2.0, 3.0] {
            for x in [0.0, 0.3, 1.0, 4.0] {
                let dv = doubled_signed_density(&sp, lambda, x).unwrap();
                let direct = linalg::mat_exp(&((p.t() - Matrix::identity(3, 3) * lambda) * x))
                    .unwrap()
                    * p.s();
                for i in 0..3 {
                    assert!((dv[i] - direct[i]).abs() < 1e-10);
                    assert!((dv[3 + i] + dv[i]).abs() < 1e-12);
                }
                if lambda == 2.0 {
                    assert!((dv[0] - example::tilted_unnormalized_closed(x)).abs() < 1e-10);
                }
            }
        }
        assert!(matches!(
            doubled_signed_density(&sp, 2.0, -1.0),
            Err(Error::NegativeX(_))
        ));
    }

    fn max_block_difference(sp: &SignSplit, lambda: f64, x: f64) -> f64 {
        let p = sp.dim();
        let e = linalg::mat_exp(&(doubled_matrix(sp, lambda) * x)).unwrap();
        let diff = e.view((0, 0), (p, p)) - e.view((0, p), (p, p));
        let direct = linalg::mat_exp(&((sp.t() - Matrix::identity(p, p) * lambda) * x)).unwrap();
        (diff - direct).amax()
    }

    /// Every computed eigenvalue is paired with a distinct expected one.
    fn multiset_distance(mut got: Vec<Complex<f64>>, expected: &[Complex<f64>]) -> f64 {
        let mut worst = 0.0f64;
        for e in expected {
            let (k, d) = got
                .iter()
                .enumerate()
                .map(|(k, g)| (k, (g - e).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            worst = worst.max(d);
            got.swap_remove(k);
        }
        worst
    }

    fn eigen_union_distance(sp: &SignSplit, lambda: f64) -> f64 {
        let got = linalg::eigenvalues(&doubled_matrix(sp, lambda)).unwrap();
        let mut expected = linalg::eigenvalues(&sp.t()).unwrap();
        expected.extend(linalg::eigenvalues(&sp.abs_part()).unwrap());
        let shifted: Vec<_> = expected.iter().map(|z| z - lambda).collect();
        multiset_distance(got, &shifted)
    }

    #[test]
    fn example_structural_identities() {
        let sp = example_split();
        for lambda in [2.0, 3.0] {
            for x in [0.5, 1.0, 5.0] {
                assert!(max_block_difference(&sp, lambda, x) < 1e-9);
            }
            assert!(eigen_union_distance(&sp, lambda) < 1e-8);
        }
    }

    #[test]
    fn random_models_structural_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..10 {
            let p = 1 + k % 4;
            let params = example::random_model(&mut rng, p);
            let sp = SignSplit::from_params(&params).unwrap();
            for lambda in [sp.lambda0(), sp.lambda0() + 1.0] {
                assert!(eigen_union_distance(&sp, lambda) < 1e-8, "model {k}");
                for x in [0.5, 1.0, 5.0] {
                    assert!(max_block_difference(&sp, lambda, x) < 1e-9, "model {k}");
                }
            }
        }
    }

    fn arb_split() -> impl Strategy<Value = (Matrix, Vector)> {
        (1usize..=4).prop_flat_map(|p| {
            (
                prop::collection::vec(-2.0f64..2.0, p * p),
                prop::collection::vec(0.0f64..3.0, p),
                prop::collection::vec(-2.0f64..2.0, p),
            )
                .prop_map(move |(off, diag, s)| {
                    let mut t = Matrix::from_vec(p, p, off);
                    for i in 0..p {
                        t[(i, i)] = -diag[i];
                    }
                    (t, Vector::from_vec(s))
                })
        })
    }

    proptest! {
        #[test]
        fn split_invariants((t, s) in arb_split(), extra in 0.0f64..3.0) {
            let sp = sign_split(&t, &s).unwrap();
            let p = sp.dim();
            prop_assert_eq!(sp.t(), t.clone());
            prop_assert_eq!(sp.s(), s.clone());
            for i in 0..p {
                prop_assert!(sp.s_plus()[i] >= 0.0 && sp.s_minus()[i] >= 0.0);
                prop_assert!(sp.s_plus()[i].min(sp.s_minus()[i]) == 0.0);
                prop_assert!(sp.t_plus()[(i, i)] <= 0.0);
                for j in 0..p {
                    prop_assert!(sp.t_minus()[(i, j)] >= 0.0);
                    if i != j {
                        prop_assert!(sp.t_plus()[(i, j)] >= 0.0);
                        prop_assert!(sp.t_plus()[(i, j)].min(sp.t_minus()[(i, j)]) == 0.0);
                    }
                }
            }

            // Row-sum law of the full generator with explicit killing.
            let lambda = sp.lambda0() + extra;
            let g = build_generator(&sp, lambda).unwrap();
            let full = g.full_matrix();
            for r in 0..2 * p {
                let sum: f64 = full.row(r).sum() + g.term[r];
                prop_assert!(sum.abs() < 1e-12);
                prop_assert!(g.term[r] >= 0.0);
                for c in 0..2 * p + 2 {
                    if c != r {
                        prop_assert!(full[(r, c)] >= 0.0);
                    }
                }
            }
            for r in 2 * p..2 * p + 2 {
                prop_assert!(full.row(r).iter().all(|&x| x == 0.0));
            }
            // Symmetric blocks.
            prop_assert_eq!(g.d.view((0, 0), (p, p)), g.d.view((p, p), (p, p)));
            prop_assert_eq!(g.d.view((0, p), (p, p)), g.d.view((p, 0), (p, p)));

            let tight = build_generator(&sp, sp.lambda0()).unwrap();
            if sp.lambda0() > 0.0 {
                prop_assert!(tight.term.iter().any(|&x| x == 0.0));
            }

            let ep = exit_profile(&sp, lambda).unwrap();
            prop_assert_eq!(ep.qbar_anti.clone(), -ep.qbar_original.clone());
            for i in 0..p {
                prop_assert!(ep.d[i] >= -1e-12);
                prop_assert!(ep.q_plus[i] + ep.q_minus[i] <= 1.0 + 1e-12);
            }
        }
    }
}
