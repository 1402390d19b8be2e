//! Subcommand implementations. Each writes its report to `out`, warnings to
//! `err`, and returns a [`CliError`] carrying the exit code on failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use metilt::jumpsim::{self, JumpModel, RngStream};
use metilt::{
    estimators, medist, splitting, DensityAccumulator, ExitProfile, InitialSplit, LambdaSpec,
    MEParams, Matrix, SignSplit, ValidationReport, VarianceGuard, Vector, Weighting,
};

use crate::error::CliError;
use crate::files::{self, LambdaField, ModelFile, RunConfig};

/// Everything derived from a validated model at a resolved tilting rate.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub params: MEParams,
    pub report: ValidationReport,
    pub split: SignSplit,
    pub init: InitialSplit,
    pub lambda: f64,
    pub profile: ExitProfile,
    pub tilted: MEParams,
    /// `alpha (lambda I - T)^-1 s`
    pub normalizer: f64,
    /// `(w+ + w-) / normalizer`
    pub scale: f64,
}

impl Pipeline {
    pub fn new(params: MEParams, lambda: LambdaSpec) -> Result<Self, CliError> {
        let report = medist::validate(&params, medist::NORMALIZATION_TOL)?;
        let split = SignSplit::from_params(&params)?;
        let init = splitting::initial_split(params.alpha())?;
        let lambda = lambda.resolve(&split)?;
        let profile = splitting::exit_profile(&split, lambda)?;
        let normalizer = medist::laplace_transform(&params, lambda)?;
        let tilted = medist::tilt(&params, lambda)?;
        let scale = init.w_total() / normalizer;
        Ok(Self {
            params,
            report,
            split,
            init,
            lambda,
            profile,
            tilted,
            normalizer,
            scale,
        })
    }

    pub fn jump_model(&self) -> Result<JumpModel, CliError> {
        Ok(JumpModel::new(&self.split, self.lambda)?)
    }
}

fn fmt_vector(v: &Vector) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", items.join(", "))
}

fn fmt_matrix(m: &Matrix, indent: &str) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        s.push_str(indent);
        for c in 0..m.ncols() {
            let _ = write!(s, "{:>11.6}", m[(r, c)]);
        }
        s.push('\n');
    }
    s
}

fn csv_matrix(m: &Matrix) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| m[(r, c)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn cmd_validate(model: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let params = files::load_model(model)?;
    let report = ValidationReport::compute(&params, medist::NORMALIZATION_TOL)?;
    writeln!(out, "dimension p        = {}", params.dim())?;
    writeln!(out, "sigma0             = {}", report.sigma0)?;
    writeln!(out, "normalization      = {}", report.normalization)?;
    writeln!(out, "diag(T) <= 0       = {}", report.diag_nonpositive)?;
    for m in &report.messages {
        writeln!(out, "note: {m}")?;
    }
    match medist::validate(&params, medist::NORMALIZATION_TOL) {
        Ok(_) => {
            writeln!(out, "status             = valid")?;
            Ok(())
        }
        Err(e) => {
            writeln!(out, "status             = invalid")?;
            Err(e.into())
        }
    }
}

pub fn cmd_split(
    model: &Path,
    lambda: LambdaField,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let params = files::load_model(model)?;
    let split = SignSplit::from_params(&params)?;
    let lambda = match lambda.spec() {
        LambdaSpec::Auto { delta } => splitting::auto_lambda(&split, delta)?,
        LambdaSpec::Value(v) => v,
    };
    let gen = splitting::build_generator(&split, lambda)?;
    let profile = splitting::exit_profile(&split, lambda)?;
    let tr = splitting::check_transience(&split, lambda)?;
    let p = split.dim();

    writeln!(out, "T+ =\n{}", fmt_matrix(split.t_plus(), "  "))?;
    writeln!(out, "T- =\n{}", fmt_matrix(split.t_minus(), "  "))?;
    writeln!(out, "s+ = {}", fmt_vector(split.s_plus()))?;
    writeln!(out, "s- = {}", fmt_vector(split.s_minus()))?;
    writeln!(out, "lambda0 = {}", split.lambda0())?;
    writeln!(out, "lambda  = {lambda}")?;
    writeln!(out)?;
    writeln!(
        out,
        "G(lambda) over [1o..{p}o, 1a..{p}a, Do, Da] =\n{}",
        fmt_matrix(&gen.full_matrix(), "  ")
    )?;
    writeln!(out, "killing rates = {}", fmt_vector(&gen.term))?;
    writeln!(out, "d     = {}", fmt_vector(&profile.d))?;
    writeln!(out, "q+    = {}", fmt_vector(&profile.q_plus))?;
    writeln!(out, "q-    = {}", fmt_vector(&profile.q_minus))?;
    writeln!(out, "qbar(i^o) = {}", fmt_vector(&profile.qbar_original))?;
    writeln!(out, "qbar(i^a) = {}", fmt_vector(&profile.qbar_anti))?;
    writeln!(
        out,
        "transient = {} (abscissa of D(lambda) = {})",
        if tr.transient { "yes" } else { "no" },
        tr.abscissa
    )?;
    if let Some(path) = csv_out {
        fs::write(path, csv_matrix(&gen.full_matrix()))?;
    }
    Ok(())
}

pub fn cmd_tilt(
    model: &Path,
    lambda: LambdaField,
    json_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let pipe = Pipeline::new(files::load_model(model)?, lambda.spec())?;
    let name = format!("tilted at lambda = {}", pipe.lambda);
    let json = ModelFile::from_params(&pipe.tilted, Some(name)).to_json();
    match json_out {
        Some(path) => {
            fs::write(path, json + "\n")?;
            writeln!(out, "lambda = {}", pipe.lambda)?;
            writeln!(out, "alpha (lambda I - T)^-1 s = {}", pipe.normalizer)?;
        }
        None => writeln!(out, "{json}")?,
    }
    Ok(())
}

pub const CSV_HEADER: &str =
    "x_mid,f_tilted_analytic,est_beta,stderr_beta,est_qbar,stderr_qbar,n_hits";

/// Runs the simulation and both estimators; returns the CSV text.
pub fn estimate_csv(pipe: &Pipeline, cfg: &RunConfig) -> Result<String, CliError> {
    cfg.check()?;
    let grid = cfg.grid.grid()?;
    let model = pipe.jump_model()?;
    let outcomes =
        jumpsim::simulate_batch_with(&model, &pipe.init, cfg.n_paths, cfg.seed, cfg.chunk)?;
    let mut acc = DensityAccumulator::new(grid, pipe.split.dim());
    acc.extend(&outcomes);
    let analytic = estimators::analytic_bin_averages(&pipe.tilted, &grid)?;
    let beta = cfg
        .estimator
        .beta()
        .then(|| acc.finish(Weighting::Beta, pipe.scale))
        .transpose()?;
    let qbar = cfg
        .estimator
        .qbar()
        .then(|| acc.finish(Weighting::Qbar(&pipe.profile), pipe.scale))
        .transpose()?;
    let hits = acc.finish(Weighting::Beta, pipe.scale)?;

    let mut csv = String::with_capacity(64 * grid.n_bins());
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for (b, exact) in analytic.iter().enumerate() {
        let pair = |e: &Option<metilt::DensityEstimate>| match e {
            Some(e) => format!("{},{}", e.rows[b].estimate, e.rows[b].stderr),
            None => ",".to_string(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            grid.mid(b),
            exact,
            pair(&beta),
            pair(&qbar),
            hits.rows[b].n_hits
        );
    }
    Ok(csv)
}

fn run_header(pipe: &Pipeline, cfg: &RunConfig) -> String {
    format!(
        "seed = {}, n_paths = {}, chunk = {}, lambda = {}, lambda0 = {}",
        cfg.seed,
        cfg.n_paths,
        cfg.chunk,
        pipe.lambda,
        pipe.split.lambda0()
    )
}

fn write_trace_file(pipe: &Pipeline, cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    let model = pipe.jump_model()?;
    // Path 0 is the first draw of stream 0.
    let mut rng = RngStream::new(cfg.seed, 0).rng();
    let start = jumpsim::sample_initial(&pipe.init, &mut rng);
    let (_, jumps) = model.simulate_traced(start, &mut rng);
    let mut buf = Vec::new();
    jumpsim::write_trace(&mut buf, &jumps)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn cmd_estimate(
    model: &Path,
    cfg: &RunConfig,
    csv_out: Option<&Path>,
    trace: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    cfg.check()?;
    let pipe = Pipeline::new(files::load_model(model)?, cfg.lambda.spec())?;
    writeln!(err, "# {}", run_header(&pipe, cfg))?;
    let csv = estimate_csv(&pipe, cfg)?;
    match csv_out {
        Some(path) => fs::write(path, csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    if let Some(path) = trace {
        write_trace_file(&pipe, cfg, path)?;
    }
    Ok(())
}

pub fn cmd_expect(
    model: &Path,
    cfg: &RunConfig,
    trace: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    cfg.check()?;
    let h = cfg.h.ok_or_else(|| {
        CliError::Usage("a test function h is required (config \"h\" or --h)".into())
    })?;
    let pipe = Pipeline::new(files::load_model(model)?, cfg.lambda.spec())?;
    let f = h.function();

    let guard = VarianceGuard::check(&pipe.split, pipe.lambda, &f)?;
    if !guard.finite_second_moment {
        writeln!(
            err,
            "warning: the squared weight (h(tau) e^(lambda tau))^2 grows at rate {} and the exit \
             time decays at rate {:.6}; the estimator may have infinite variance",
            2.0 * guard.weight_growth,
            guard.tail_rate
        )?;
    }

    let model = pipe.jump_model()?;
    let outcomes =
        jumpsim::simulate_batch_with(&model, &pipe.init, cfg.n_paths, cfg.seed, cfg.chunk)?;
    let w = pipe.init.w_total();
    let beta =
        estimators::mc_expectation_structured(&outcomes, &f, pipe.lambda, w, Weighting::Beta)?;
    let qbar = estimators::mc_expectation_structured(
        &outcomes,
        &f,
        pipe.lambda,
        w,
        Weighting::Qbar(&pipe.profile),
    )?;

    writeln!(out, "# {}", run_header(&pipe, cfg))?;
    writeln!(out, "h            = {h}")?;
    writeln!(
        out,
        "beta form    = {} +- {} (max |weight| = {})",
        beta.value, beta.stderr, beta.max_abs_weight
    )?;
    writeln!(
        out,
        "qbar form    = {} +- {} (max |weight| = {})",
        qbar.value, qbar.stderr, qbar.max_abs_weight
    )?;
    match f.analytic_expectation(&pipe.params) {
        Ok(v) => writeln!(out, "analytic     = {v}")?,
        Err(e) => writeln!(out, "analytic     = unavailable ({e})")?,
    }
    if let Some(path) = trace {
        write_trace_file(&pipe, cfg, path)?;
    }
    Ok(())
}
