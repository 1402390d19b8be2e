//! Signed Monte-Carlo estimators of the tilted density and of untilted
//! expectations, with their analytic counterparts.
//!
//! Density estimators are histogram estimators. Per bin, each path
//! contributes `scale * w / width` when its exit time falls in the bin and `0`
//! otherwise, with `w` either the landing sign (`beta` form) or the expected
//! landing sign given the pre-exit state (`qbar` form). Standard errors are
//! the plain sample standard deviation of these per-path contributions over
//! `sqrt(n)`.
//!
//! Accumulators only hold integer tallies or exactly rounded sums, so merging
//! partial results in any grouping is bit-identical to a single pass.

use crate::error::{Error, Result};
use crate::jumpsim::{PathOutcome, StateId};
use crate::linalg::{self, Matrix, Vector};
use crate::medist::{self, MEParams};
use crate::splitting::{self, ExitProfile, InitialSplit, SignSplit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_bins: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_bins: usize) -> Result<Self> {
        if !(x_min >= 0.0 && x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "bounds [{x_min}, {x_max}] must be finite and nonnegative"
            )));
        }
        if !(x_min < x_max) {
            return Err(Error::InvalidGrid(format!(
                "x_min = {x_min} must be below x_max = {x_max}"
            )));
        }
        if n_bins == 0 {
            return Err(Error::InvalidGrid("n_bins must be at least 1".into()));
        }
        Ok(Self {
            x_min,
            x_max,
            n_bins,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_bins as f64
    }

    /// `[lo, hi)` of bin `b`.
    pub fn edges(&self, b: usize) -> (f64, f64) {
        let w = self.width();
        let lo = self.x_min + b as f64 * w;
        let hi = if b + 1 == self.n_bins {
            self.x_max
        } else {
            self.x_min + (b + 1) as f64 * w
        };
        (lo, hi)
    }

    pub fn mid(&self, b: usize) -> f64 {
        let (lo, hi) = self.edges(b);
        0.5 * (lo + hi)
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min && x < self.x_max) {
            return None;
        }
        let b = ((x - self.x_min) / self.width()) as usize;
        Some(b.min(self.n_bins - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRow {
    pub x_mid: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n_hits: u64,
}

impl DensityRow {
    /// Sample variance of the per-path contributions to this bin.
    pub fn contribution_variance(&self, n_paths: u64) -> f64 {
        self.stderr * self.stderr * n_paths as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Grid,
    pub scale: f64,
    pub n_paths: u64,
    pub rows: Vec<DensityRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting<'a> {
    /// Landing sign `beta`.
    Beta,
    /// Expected landing sign given the pre-exit state.
    Qbar(&'a ExitProfile),
}

const LANDINGS: usize = 3;

fn landing_slot(s: StateId) -> usize {
    match s {
        StateId::DeltaO => 0,
        StateId::DeltaA => 1,
        _ => 2,
    }
}

/// Per-bin tallies of exit events by pre-exit state and landing.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityAccumulator {
    grid: Grid,
    p: usize,
    n_paths: u64,
    tallies: Vec<u64>,
}

impl DensityAccumulator {
    pub fn new(grid: Grid, p: usize) -> Self {
        Self {
            grid,
            p,
            n_paths: 0,
            tallies: vec![0; grid.n_bins() * 2 * p * LANDINGS],
        }
    }

    fn slot(&self, bin: usize, state: usize, landing: usize) -> usize {
        (bin * 2 * self.p + state) * LANDINGS + landing
    }

    pub fn n_paths(&self) -> u64 {
        self.n_paths
    }

    pub fn push(&mut self, o: &PathOutcome) {
        self.n_paths += 1;
        if let Some(b) = self.grid.bin_of(o.tau) {
            let k = o
                .pre_exit
                .doubled_index(self.p)
                .filter(|&k| k < 2 * self.p)
                .expect("pre-exit state belongs to the model");
            let slot = self.slot(b, k, landing_slot(o.landing));
            self.tallies[slot] += 1;
        }
    }

    pub fn extend<'a, I: IntoIterator<Item = &'a PathOutcome>>(&mut self, outcomes: I) {
        for o in outcomes {
            self.push(o);
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.p != other.p {
            return Err(Error::Dimension(
                "cannot merge accumulators over different grids".into(),
            ));
        }
        self.n_paths += other.n_paths;
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            *a += b;
        }
        Ok(())
    }

    pub fn finish(&self, weighting: Weighting<'_>, scale: f64) -> Result<DensityEstimate> {
        if self.n_paths == 0 {
            return Err(Error::EmptyOutcomes);
        }
        if let Weighting::Qbar(profile) = weighting {
            if profile.d.len() != self.p {
                return Err(Error::Dimension(
                    "exit profile does not match the model".into(),
                ));
            }
        }
        let n = self.n_paths as f64;
        let width = self.grid.width();
        let factor = scale / width;
        let rows = (0..self.grid.n_bins())
            .map(|b| {
                let (mut s1, mut s2, mut hits) = (0.0, 0.0, 0u64);
                for k in 0..2 * self.p {
                    let c = |l| self.tallies[self.slot(b, k, l)];
                    let (pos, neg, killed) = (c(0), c(1), c(2));
                    hits += pos + neg + killed;
                    match weighting {
                        Weighting::Beta => {
                            s1 += pos as f64 - neg as f64;
                            s2 += (pos + neg) as f64;
                        }
                        Weighting::Qbar(profile) => {
                            let w = profile.qbar(k);
                            let count = (pos + neg + killed) as f64;
                            s1 += count * w;
                            s2 += count * w * w;
                        }
                    }
                }
                let mean = s1 / n;
                let var = if self.n_paths > 1 {
                    ((s2 - s1 * mean) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                DensityRow {
                    x_mid: self.grid.mid(b),
                    estimate: factor * mean,
                    stderr: factor.abs() * (var / n).sqrt(),
                    n_hits: hits,
                }
            })
            .collect();
        Ok(DensityEstimate {
            grid: self.grid,
            scale,
            n_paths: self.n_paths,
            rows,
        })
    }
}

fn infer_dim(outcomes: &[PathOutcome]) -> usize {
    outcomes
        .iter()
        .filter_map(|o| match o.pre_exit {
            StateId::Original(i) | StateId::Anti(i) => Some(i + 1),
            _ => None,
        })
        .max()
        .unwrap_or(1)
}

/// Tilted density from landing signs. `scale` is
/// `(w+ + w-) / alpha (lambda I - T)^-1 s`.
pub fn mc_density_beta(
    outcomes: &[PathOutcome],
    grid: Grid,
    scale: f64,
) -> Result<DensityEstimate> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut acc = DensityAccumulator::new(grid, infer_dim(outcomes));
    acc.extend(outcomes);
    acc.finish(Weighting::Beta, scale)
}

/// Tilted density from `qbar(pre-exit state)`; every exiting path contributes,
/// killed ones included.
pub fn mc_density_qbar(
    outcomes: &[PathOutcome],
    profile: &ExitProfile,
    grid: Grid,
    scale: f64,
) -> Result<DensityEstimate> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut acc = DensityAccumulator::new(grid, profile.d.len());
    acc.extend(outcomes);
    acc.finish(Weighting::Qbar(profile), scale)
}

/// Correctly rounded floating-point sum (Shewchuk partials), hence
/// independent of summation order.
#[derive(Debug, Clone, Default, PartialEq)]
struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    fn merge(&mut self, other: &Self) {
        for &x in &other.partials {
            self.add(x);
        }
    }

    fn value(&self) -> f64 {
        let mut n = self.partials.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = self.partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = self.partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round half to even across the remaining partials.
        if n > 0
            && ((lo < 0.0 && self.partials[n - 1] < 0.0)
                || (lo > 0.0 && self.partials[n - 1] > 0.0))
        {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: u64,
    /// Largest `|h(tau) e^{lambda tau} w|` seen; a heavy-tail diagnostic.
    pub max_abs_weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpectationAccumulator {
    sum: ExactSum,
    sum_sq: ExactSum,
    n: u64,
    max_abs: f64,
}

impl ExpectationAccumulator {
    pub fn push(&mut self, weight: f64) {
        self.sum.add(weight);
        self.sum_sq.add(weight * weight);
        self.n += 1;
        self.max_abs = self.max_abs.max(weight.abs());
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.n += other.n;
        self.max_abs = self.max_abs.max(other.max_abs);
    }

    pub fn finish(&self, w_total: f64) -> Result<ExpectationEstimate> {
        if self.n == 0 {
            return Err(Error::EmptyOutcomes);
        }
        let n = self.n as f64;
        let mean = self.sum.value() / n;
        let var = if self.n > 1 {
            ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(ExpectationEstimate {
            value: w_total * mean,
            stderr: w_total.abs() * (var / n).sqrt(),
            n_paths: self.n,
            max_abs_weight: self.max_abs,
        })
    }
}

fn path_weight(o: &PathOutcome, weighting: Weighting<'_>, p: usize) -> f64 {
    match weighting {
        Weighting::Beta => o.sign as f64,
        Weighting::Qbar(profile) => o.pre_exit.doubled_index(p).map_or(0.0, |k| profile.qbar(k)),
    }
}

fn expectation_with<F: Fn(f64) -> f64>(
    outcomes: &[PathOutcome],
    tilted_weight: F,
    w_total: f64,
    weighting: Weighting<'_>,
) -> Result<ExpectationEstimate> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let p = match weighting {
        Weighting::Qbar(profile) => profile.d.len(),
        Weighting::Beta => infer_dim(outcomes),
    };
    let mut acc = ExpectationAccumulator::default();
    for o in outcomes {
        let sign = path_weight(o, weighting, p);
        let w = if sign == 0.0 {
            0.0
        } else {
            let hw = tilted_weight(o.tau);
            if !hw.is_finite() {
                return Err(Error::NonFiniteWeight(o.tau));
            }
            hw * sign
        };
        acc.push(w);
    }
    acc.finish(w_total)
}

/// `w_total * mean(h(tau) e^{lambda tau} w)`, an estimate of
/// `integral h(x) f(x) dx` for the untilted density `f`.
pub fn mc_expectation_untilted<F: Fn(f64) -> f64>(
    outcomes: &[PathOutcome],
    h: F,
    lambda: f64,
    w_total: f64,
    weighting: Weighting<'_>,
) -> Result<ExpectationEstimate> {
    expectation_with(
        outcomes,
        |tau| h(tau) * (lambda * tau).exp(),
        w_total,
        weighting,
    )
}

/// Structured test functions `h` with a known decay rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `e^{-c x}`
    ExpDecay { c: f64 },
    /// `x^k e^{-c x}`
    PolyExpDecay { k: u32, c: f64 },
}

impl TestFunction {
    pub fn decay(&self) -> f64 {
        match *self {
            TestFunction::ExpDecay { c } | TestFunction::PolyExpDecay { c, .. } => c,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::ExpDecay { c } => (-c * x).exp(),
            TestFunction::PolyExpDecay { k, c } => x.powi(k as i32) * (-c * x).exp(),
        }
    }

    /// `h(x) e^{lambda x}`, evaluated without forming `e^{lambda x}` alone.
    pub fn tilted(&self, x: f64, lambda: f64) -> f64 {
        match *self {
            TestFunction::ExpDecay { c } => ((lambda - c) * x).exp(),
            TestFunction::PolyExpDecay { k, c } => x.powi(k as i32) * ((lambda - c) * x).exp(),
        }
    }

    /// `integral h f` in closed form: `k! alpha (c I - T)^{-(k+1)} s`.
    /// Requires `c` above the dominant eigenvalue of `T`.
    pub fn analytic_expectation(&self, params: &MEParams) -> Result<f64> {
        let c = self.decay();
        let sigma0 = params.sigma0()?;
        if !(c > sigma0) {
            return Err(Error::LambdaTooSmall {
                lambda: c,
                threshold: sigma0,
            });
        }
        match *self {
            TestFunction::ExpDecay { .. } => medist::resolvent_form(params, c, 1),
            TestFunction::PolyExpDecay { k, .. } => {
                let fact: f64 = (1..=k).map(f64::from).product();
                Ok(fact * medist::resolvent_form(params, c, k + 1)?)
            }
        }
    }
}

/// Same as [`mc_expectation_untilted`] for a structured `h`.
pub fn mc_expectation_structured(
    outcomes: &[PathOutcome],
    h: &TestFunction,
    lambda: f64,
    w_total: f64,
    weighting: Weighting<'_>,
) -> Result<ExpectationEstimate> {
    expectation_with(outcomes, |tau| h.tilted(tau, lambda), w_total, weighting)
}

pub const VARIANCE_GUARD_MARGIN: f64 = 1e-9;

/// Sufficient condition for a finite second moment of `h(tau) e^{lambda tau}`.
///
/// The exit time has tail rate `r = -abscissa(D(lambda))`, so with
/// `h ~ e^{-c x}` the weight is square integrable when `2 (lambda - c) < r`.
/// The boundary itself diverges, so the comparison keeps a margin of
/// [`VARIANCE_GUARD_MARGIN`] against rounding in `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceGuard {
    pub tail_rate: f64,
    pub weight_growth: f64,
    pub finite_second_moment: bool,
}

impl VarianceGuard {
    pub fn check(split: &SignSplit, lambda: f64, h: &TestFunction) -> Result<Self> {
        let tr = splitting::check_transience(split, lambda)?;
        let tail_rate = -tr.abscissa;
        let weight_growth = lambda - h.decay();
        let finite_second_moment = 2.0 * weight_growth < tail_rate - VARIANCE_GUARD_MARGIN;
        Ok(Self {
            tail_rate,
            weight_growth,
            finite_second_moment,
        })
    }
}

/// Average of the tilted density over every bin of `grid`:
/// `alpha' T'^-1 (e^{T' hi} - e^{T' lo}) s / (hi - lo)` for tilted parameters
/// `(alpha', T', s)`.
pub fn analytic_bin_averages(tilted: &MEParams, grid: &Grid) -> Result<Vec<f64>> {
    let p = tilted.dim();
    let t = tilted.t();
    let cdf_part = |x: f64| -> Result<Vector> { Ok(linalg::mat_exp(&(t * x))? * tilted.s()) };
    // alpha' T'^-1 v  =  (T'^-T alpha')^T v
    let left = linalg::solve_linear(&t.transpose(), tilted.alpha())?;
    let mut prev = cdf_part(grid.x_min())?;
    let mut out = Vec::with_capacity(grid.n_bins());
    for b in 0..grid.n_bins() {
        let (lo, hi) = grid.edges(b);
        let next = cdf_part(hi)?;
        out.push(left.dot(&(&next - &prev)) / (hi - lo));
        prev = next;
    }
    debug_assert_eq!(prev.len(), p);
    Ok(out)
}

/// `(w+ + w-) (alphahat+, alphahat-) exp(D(0) x) (s; -s)`, which reproduces
/// the untilted density.
pub fn analytic_untilted_doubled(split: &SignSplit, init: &InitialSplit, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::NegativeX(x));
    }
    let v = signed_doubled_vector(split, 0.0, x)?;
    Ok(init.w_total() * init.doubled().dot(&v))
}

fn signed_doubled_vector(split: &SignSplit, lambda: f64, x: f64) -> Result<Vector> {
    let s = split.s();
    let p = s.len();
    let stacked = Vector::from_fn(2 * p, |k, _| if k < p { s[k] } else { -s[k - p] });
    Ok(linalg::mat_exp(&(splitting::doubled_matrix(split, lambda) * x))? * stacked)
}

/// `|exp(D(0) x) (s; -s)|_inf * e^{-sigma0 x}` for each `x`. Bounded values
/// show the signed vector decays at the rate of `T`, not of `D(0)`.
pub fn decay_cancellation_check(split: &SignSplit, sigma0: f64, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            if !(x >= 0.0) {
                return Err(Error::NegativeX(x));
            }
            Ok(signed_doubled_vector(split, 0.0, x)?.amax() * (-sigma0 * x).exp())
        })
        .collect()
}

/// `|exp(M x)|_inf * e^{-sigma0 x}`: the same ratio without the cancelling
/// right-hand side, for contrast.
pub fn uncancelled_growth(split: &SignSplit, sigma0: f64, x: f64) -> Result<f64> {
    let e: Matrix = linalg::mat_exp(&(splitting::doubled_matrix(split, 0.0) * x))?;
    Ok(linalg::norm_inf(&e) * (-sigma0 * x).exp())
}
