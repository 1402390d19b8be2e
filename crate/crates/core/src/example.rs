//! Built-in reference model.
//!
//! A three-phase ME law with density `(2/3) e^{-x} (1 + cos x)`. Its `T` has
//! negative off-diagonal entries and a complex eigenvalue pair, so the
//! parameters carry no phase-type meaning. The smallest admissible tilting
//! rate is `lambda_0 = 2`.

use crate::medist::MEParams;

/// Smallest admissible tilting rate for [`params`].
pub const LAMBDA0: f64 = 2.0;

/// `alpha (2I - T)^-1 s` for [`params`].
pub const NORMALIZER_AT_LAMBDA0: f64 = 19.0 / 45.0;

pub fn params() -> MEParams {
    MEParams::from_rows(
        &[1.0, 0.0, 0.0],
        &[
            vec![-1.0, -1.0, 2.0 / 3.0],
            vec![1.0, -1.0, -2.0 / 3.0],
            vec![0.0, 0.0, -1.0],
        ],
        &[4.0 / 3.0, 2.0 / 3.0, 1.0],
    )
    .expect("reference model is well formed")
}

/// `(2/3) e^{-x} (1 + cos x)`.
pub fn density_closed(x: f64) -> f64 {
    2.0 / 3.0 * (-x).exp() * (1.0 + x.cos())
}

/// Unnormalized tilted density at `lambda = 2`: `(2/3) e^{-3x} (1 + cos x)`.
pub fn tilted_unnormalized_closed(x: f64) -> f64 {
    2.0 / 3.0 * (-3.0 * x).exp() * (1.0 + x.cos())
}

/// Normalized tilted density at `lambda = 2`: `(30/19) e^{-3x} (1 + cos x)`.
pub fn tilted_density_closed(x: f64) -> f64 {
    30.0 / 19.0 * (-3.0 * x).exp() * (1.0 + x.cos())
}

/// Average of [`tilted_density_closed`] over `[a, b]`, from the antiderivative
/// `-e^{-3x}/3 + e^{-3x} (sin x - 3 cos x) / 10`.
pub fn tilted_bin_average_closed(a: f64, b: f64) -> f64 {
    let anti = |x: f64| {
        let e = (-3.0 * x).exp();
        -e / 3.0 + e * (x.sin() - 3.0 * x.cos()) / 10.0
    };
    30.0 / 19.0 * (anti(b) - anti(a)) / (b - a)
}

/// Random phase-type model of order `p`: positive initial vector summing to
/// one, Metzler `T` with strictly negative row sums, `s = -T 1`.
pub fn random_phase_type<R: rand::Rng + ?Sized>(rng: &mut R, p: usize) -> MEParams {
    use crate::linalg::{Matrix, Vector};
    let mut t = Matrix::zeros(p, p);
    for i in 0..p {
        let mut off = 0.0;
        for j in 0..p {
            if i != j {
                t[(i, j)] = rng.random_range(0.0..1.0);
                off += t[(i, j)];
            }
        }
        t[(i, i)] = -off - rng.random_range(0.2..1.5);
    }
    let s = -(&t * Vector::from_element(p, 1.0));
    let raw = Vector::from_fn(p, |_, _| rng.random_range(0.05..1.0));
    let alpha = &raw / raw.sum();
    MEParams::new(alpha, t, s).expect("finite by construction")
}

/// Random valid ME model of order `p` that is generally not phase-type in
/// the given coordinates: a random phase-type model under a similarity
/// transform `(alpha S, S^-1 T S, S^-1 s)` with `S` near the identity. The
/// density is unchanged. Transforms that make a diagonal entry of `T`
/// positive are redrawn.
pub fn random_model<R: rand::Rng + ?Sized>(rng: &mut R, p: usize) -> MEParams {
    use crate::linalg::Matrix;
    let base = random_phase_type(rng, p);
    loop {
        let mut sim = Matrix::identity(p, p);
        for v in sim.iter_mut() {
            *v += rng.random_range(-0.4..0.4);
        }
        let Some(inv) = sim.clone().try_inverse() else {
            continue;
        };
        if inv.amax() > 5.0 {
            continue;
        }
        let t = &inv * base.t() * &sim;
        if (0..p).any(|i| t[(i, i)] > 0.0) {
            continue;
        }
        let alpha = (base.alpha().transpose() * &sim).transpose();
        let s = &inv * base.s();
        if let Ok(m) = MEParams::new(alpha, t, s) {
            return m;
        }
    }
}
