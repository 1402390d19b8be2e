//! Simulation of the terminating jump process on original states, anti-states,
//! the two absorbing states and a killing state.
//!
//! Paths are simulated on the embedded chain: an exponential holding time at
//! the total exit rate, then one categorical draw for the destination.
//!
//! Random streams are ChaCha8 keyed by `seed` with the stream index as the
//! ChaCha stream id. A batch splits its paths into chunks; chunk `c` consumes
//! stream `c` sequentially, so output does not depend on thread count.

use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::splitting::{self, InitialSplit, SignSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateId {
    /// Original state, 0-based.
    Original(usize),
    /// Anti-state, 0-based.
    Anti(usize),
    DeltaO,
    DeltaA,
    Terminated,
}

impl StateId {
    /// Index in the doubled transient block: originals `0..p`, anti-states
    /// `p..2p`. `None` for absorbing states.
    pub fn doubled_index(self, p: usize) -> Option<usize> {
        match self {
            StateId::Original(i) => Some(i),
            StateId::Anti(i) => Some(p + i),
            _ => None,
        }
    }

    pub fn from_doubled_index(k: usize, p: usize) -> Self {
        if k < p {
            StateId::Original(k)
        } else {
            StateId::Anti(k - p)
        }
    }

    pub fn is_transient(self) -> bool {
        matches!(self, StateId::Original(_) | StateId::Anti(_))
    }

    /// `+1` for `Delta_o`, `-1` for `Delta_a`, `0` otherwise.
    pub fn sign(self) -> i8 {
        match self {
            StateId::DeltaO => 1,
            StateId::DeltaA => -1,
            _ => 0,
        }
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateId::Original(i) => write!(f, "{}o", i + 1),
            StateId::Anti(i) => write!(f, "{}a", i + 1),
            StateId::DeltaO => f.write_str("Do"),
            StateId::DeltaA => f.write_str("Da"),
            StateId::Terminated => f.write_str("X"),
        }
    }
}

/// One simulated realization up to the exit time `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub tau: f64,
    /// Last transient state before exit.
    pub pre_exit: StateId,
    /// `DeltaO`, `DeltaA` or `Terminated`.
    pub landing: StateId,
    pub sign: i8,
    pub n_jumps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub from: StateId,
    pub to: StateId,
}

/// Writes one `time\tfrom\tto` line per jump.
pub fn write_trace<W: Write>(mut out: W, jumps: &[Jump]) -> io::Result<()> {
    for j in jumps {
        writeln!(out, "{}\t{}\t{}", j.time, j.from, j.to)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Row {
    rate: f64,
    /// Destinations with positive weight and their cumulative weights.
    targets: Vec<(StateId, f64)>,
}

impl Row {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> StateId {
        let total = self.targets.last().map_or(0.0, |t| t.1);
        let u = rng.random::<f64>() * total;
        self.targets
            .iter()
            .find(|(_, cum)| u < *cum)
            .unwrap_or_else(|| self.targets.last().expect("row has a destination"))
            .0
    }
}

/// Precomputed jump tables of the doubled process at a fixed `lambda`.
#[derive(Debug, Clone)]
pub struct JumpModel {
    p: usize,
    lambda: f64,
    rows: Vec<Row>,
}

impl JumpModel {
    /// Requires `lambda >= lambda_0` and transient doubled states.
    pub fn new(split: &SignSplit, lambda: f64) -> Result<Self> {
        let tr = splitting::check_transience(split, lambda)?;
        if !tr.transient {
            return Err(Error::NotTransient {
                lambda,
                abscissa: tr.abscissa,
            });
        }
        let gen = splitting::build_generator(split, lambda)?;
        let p = split.dim();
        let n = 2 * p;
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let mut targets = Vec::new();
            let mut cum = 0.0;
            let mut push = |state: StateId, w: f64| {
                if w > 0.0 {
                    cum += w;
                    targets.push((state, cum));
                }
            };
            for c in 0..n {
                if c != r {
                    push(StateId::from_doubled_index(c, p), gen.d[(r, c)]);
                }
            }
            push(StateId::DeltaO, gen.abs_o[r]);
            push(StateId::DeltaA, gen.abs_a[r]);
            push(StateId::Terminated, gen.term[r]);

            let rate = -gen.d[(r, r)];
            // A transient D(lambda) has no row with zero exit rate.
            if !(rate > 0.0) || targets.is_empty() {
                return Err(Error::NotTransient {
                    lambda,
                    abscissa: tr.abscissa,
                });
            }
            rows.push(Row { rate, targets });
        }
        Ok(Self { p, lambda, rows })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Total exit rate of a transient state.
    pub fn exit_rate(&self, state: StateId) -> Option<f64> {
        state.doubled_index(self.p).map(|k| self.rows[k].rate)
    }

    pub fn simulate<R: Rng + ?Sized>(&self, start: StateId, rng: &mut R) -> PathOutcome {
        self.run(start, rng, None)
    }

    pub fn simulate_traced<R: Rng + ?Sized>(
        &self,
        start: StateId,
        rng: &mut R,
    ) -> (PathOutcome, Vec<Jump>) {
        let mut jumps = Vec::new();
        let out = self.run(start, rng, Some(&mut jumps));
        (out, jumps)
    }

    fn run<R: Rng + ?Sized>(
        &self,
        start: StateId,
        rng: &mut R,
        mut trace: Option<&mut Vec<Jump>>,
    ) -> PathOutcome {
        let mut k = start
            .doubled_index(self.p)
            .filter(|&k| k < 2 * self.p)
            .expect("paths start in an original or anti-state");
        let mut time = 0.0;
        let mut n_jumps = 0u32;
        loop {
            let row = &self.rows[k];
            let hold: f64 = rng.sample(Exp1);
            time += hold / row.rate;
            let from = StateId::from_doubled_index(k, self.p);
            let to = row.draw(rng);
            n_jumps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(Jump { time, from, to });
            }
            match to.doubled_index(self.p) {
                Some(next) => k = next,
                None => {
                    return PathOutcome {
                        tau: time,
                        pre_exit: from,
                        landing: to,
                        sign: to.sign(),
                        n_jumps,
                    }
                }
            }
        }
    }

    /// Initial draw followed by a full path, both from `rng`.
    pub fn sample_path<R: Rng + ?Sized>(&self, init: &InitialSplit, rng: &mut R) -> PathOutcome {
        let start = sample_initial(init, rng);
        self.simulate(start, rng)
    }
}

/// Draws the starting state: `Original(i)` with probability
/// `alphahat_plus[i]`, `Anti(i)` with probability `alphahat_minus[i]`.
pub fn sample_initial<R: Rng + ?Sized>(init: &InitialSplit, rng: &mut R) -> StateId {
    let p = init.alphahat_plus.len();
    let weights = init.alphahat_plus.iter().chain(init.alphahat_minus.iter());
    let total: f64 = weights.clone().sum();
    let u = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut last = None;
    for (k, &w) in weights.enumerate() {
        if w > 0.0 {
            cum += w;
            last = Some(k);
            if u < cum {
                return StateId::from_doubled_index(k, p);
            }
        }
    }
    StateId::from_doubled_index(last.expect("initial law has positive mass"), p)
}

pub fn simulate_path(
    split: &SignSplit,
    lambda: f64,
    start: StateId,
    stream: RngStream,
) -> Result<PathOutcome> {
    check_start(start, split.dim())?;
    Ok(JumpModel::new(split, lambda)?.simulate(start, &mut stream.rng()))
}

pub fn simulate_path_traced(
    split: &SignSplit,
    lambda: f64,
    start: StateId,
    stream: RngStream,
) -> Result<(PathOutcome, Vec<Jump>)> {
    check_start(start, split.dim())?;
    Ok(JumpModel::new(split, lambda)?.simulate_traced(start, &mut stream.rng()))
}

fn check_start(start: StateId, p: usize) -> Result<()> {
    match start {
        StateId::Original(i) | StateId::Anti(i) if i < p => Ok(()),
        _ => Err(Error::Dimension(format!(
            "start state {start} is not a transient state"
        ))),
    }
}

/// Simulates `n_paths` paths. Path `k` comes from stream `k / chunk`; chunks
/// run in parallel and results are returned in path order.
pub fn simulate_batch(
    split: &SignSplit,
    lambda: f64,
    init: &InitialSplit,
    n_paths: usize,
    seed: u64,
    chunk: usize,
) -> Result<Vec<PathOutcome>> {
    let model = JumpModel::new(split, lambda)?;
    simulate_batch_with(&model, init, n_paths, seed, chunk)
}

pub fn simulate_batch_with(
    model: &JumpModel,
    init: &InitialSplit,
    n_paths: usize,
    seed: u64,
    chunk: usize,
) -> Result<Vec<PathOutcome>> {
    if n_paths == 0 {
        return Err(Error::ZeroPaths);
    }
    if chunk == 0 {
        return Err(Error::Dimension("chunk size must be positive".into()));
    }
    if init.alphahat_plus.len() != model.dim() {
        return Err(Error::Dimension(
            "initial split does not match the model".into(),
        ));
    }
    let n_chunks = n_paths.div_ceil(chunk);
    let chunks: Vec<Vec<PathOutcome>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(seed, c as u64).rng();
            let len = chunk.min(n_paths - c * chunk);
            (0..len)
                .map(|_| model.sample_path(init, &mut rng))
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}
