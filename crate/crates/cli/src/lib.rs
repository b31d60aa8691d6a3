//! Batch front end for `mconvex-core`: parses problem descriptions from
//! flags or a `key=value` config file, runs one computation and emits a CSV
//! (or plain-text) report headed by the command and seed.

pub mod config;
pub mod expr;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mconvex_core::convexity::{
    addition_nonclosure_witness, check_convex, check_convex_exact, classify_rational, efc_equivalent_check,
    efc_equivalent_check_exact, farey_grid, Convexity, ConvexityReport, RationalInterval, Witness,
};
use mconvex_core::descend::{
    brute_force_fixed_points, closed_form_quasiarithmetic, contraction_certificate, solve_fixed_point, LipschitzOptions,
};
use mconvex_core::rational::{is_in_open_unit_interval, rat};
use mconvex_core::xreal::check_chain;
use mconvex_core::{
    DescendantProblem, Error, ExactRational, Extended, ExtendedFunction, Interval, Sampler, SolveOptions,
    TwoDiagonalMatrix, Verdict,
};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{ExprError, FuncExpr, MeanExpr};
use crate::report::{fmt_f64, fmt_xrational, fmt_xreal, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for parse and usage errors, 3 for non-convergence, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Usage(_) => 1,
            CliError::Core(Error::NonConvergence { .. }) => 3,
            _ => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    Counterexample,
    NonConvergence,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Counterexample => 2,
            Status::NonConvergence => 3,
        }
    }
}

/// Rendered report plus the exit status it implies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub text: String,
    pub status: Status,
}

#[derive(Parser, Debug, Clone)]
#[command(name = "mconvex", version, about = "Descendants of mean tuples and M-convexity checks")]
pub struct Cli {
    /// Seed for every random sampler.
    #[arg(long, global = true, env = "MCONVEX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Solve for the descendants of a tuple of means at (x, y).
    Descend(DescendArgs),
    /// Lipschitz moduli and the contraction certificate on [lo, hi].
    Certify(CertifyArgs),
    /// Spectrum and w-sequence of the two-diagonal matrix A(u, v).
    Eig(EigArgs),
    /// Sample or exactly check lower/upper M-convexity of a function.
    Convexity(ConvexityArgs),
    /// The x1 family: upper A_t- but not A_{1-t}-convexity, and an addition counterexample.
    #[command(name = "x1-demo")]
    X1Demo(X1Args),
    /// The chain inequality for divided differences.
    Chain(ChainArgs),
    /// Read the command and its options from a key=value file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct DescendArgs {
    /// Comma-separated means, e.g. `A(1/2),QA(ln,1/3)`.
    #[arg(long)]
    pub means: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, allow_hyphen_values = true)]
    pub y: String,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Also evaluate the quasi-arithmetic closed form.
    #[arg(long)]
    pub closed_form: bool,
    /// Compute a contraction certificate before iterating.
    #[arg(long)]
    pub certify: bool,
    /// Also scan for all fixed points on a grid (n <= 4).
    #[arg(long)]
    pub brute_force: bool,
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// CSV instead of plain text.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CertifyArgs {
    #[arg(long)]
    pub means: String,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: String,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: String,
    #[arg(long, default_value_t = 1.05)]
    pub safety: f64,
    #[arg(long, default_value_t = 1024)]
    pub lip_grid: usize,
}

#[derive(Args, Debug, Clone)]
pub struct EigArgs {
    /// Superdiagonal, comma-separated.
    #[arg(long)]
    pub u: String,
    /// Subdiagonal, comma-separated.
    #[arg(long)]
    pub v: String,
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Lower,
    Upper,
}

impl From<Kind> for Convexity {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Lower => Convexity::Lower,
            Kind::Upper => Convexity::Upper,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ConvexityArgs {
    /// Function, e.g. `sq`, `2*poly(0,1,3)+exp`, `x1(poly(0,0,1))`.
    #[arg(long)]
    pub function: String,
    #[arg(long)]
    pub mean: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub lo: String,
    #[arg(long, allow_hyphen_values = true, default_value = "1")]
    pub hi: String,
    #[arg(long, value_enum, default_value_t = Kind::Lower)]
    pub kind: Kind,
    /// Number of random pairs.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Use all pairs of this many grid midpoints instead of random pairs.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Exact rational check over a Farey grid; the mean must be `A(s)`.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 32)]
    pub max_den: u64,
    /// Also compare the divided-difference and inequality forms.
    #[arg(long)]
    pub efc: bool,
}

#[derive(Args, Debug, Clone)]
pub struct X1Args {
    #[arg(long)]
    pub t: String,
    /// Partner of `t` in the addition counterexample; defaults to `t`.
    #[arg(long)]
    pub s: Option<String>,
    /// Convex polynomial `h` as `poly(c0,c1,...)`.
    #[arg(long, default_value = "poly(0,0,1)")]
    pub h: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub lo: String,
    #[arg(long, allow_hyphen_values = true, default_value = "1")]
    pub hi: String,
    #[arg(long, default_value_t = 63)]
    pub max_den: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    #[arg(long)]
    pub function: String,
    /// Increasing chain `x_0,...,x_{n+1}`; without it, random chains are drawn.
    #[arg(long, allow_hyphen_values = true)]
    pub points: Option<String>,
    /// Number of random chains.
    #[arg(long, default_value_t = 100)]
    pub random: usize,
    /// Longest random chain, endpoints included.
    #[arg(long, default_value_t = 10)]
    pub max_points: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub lo: String,
    #[arg(long, allow_hyphen_values = true, default_value = "1")]
    pub hi: String,
    /// Exact rational arithmetic; needs a polynomial-type function.
    #[arg(long)]
    pub exact: bool,
}

/// A resolved invocation: the command line (or config file) plus where each
/// config value came from, for error positions.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub command: Command,
    /// `key -> (line, column)` of the value, when read from a file.
    pub origins: config::Origins,
}

impl RunConfig {
    fn command_name(&self) -> &'static str {
        match self.command {
            Command::Descend(_) => "descend",
            Command::Certify(_) => "certify",
            Command::Eig(_) => "eig",
            Command::Convexity(_) => "convexity",
            Command::X1Demo(_) => "x1-demo",
            Command::Chain(_) => "chain",
            Command::Run { .. } => "run",
        }
    }

    fn expr_error(&self, key: &str, e: ExprError) -> CliError {
        match self.origins.get(key) {
            Some(&(line, column)) => {
                CliError::Parse { line, column: column + e.offset, message: format!("{key}: {}", e.message) }
            }
            None => CliError::Parse { line: 1, column: e.offset + 1, message: format!("--{key}: {}", e.message) },
        }
    }

    fn number(&self, key: &str, text: &str) -> CliResult<ExactRational> {
        expr::parse_number(text).map_err(|e| self.expr_error(key, e))
    }

    fn float(&self, key: &str, text: &str) -> CliResult<f64> {
        Ok(expr::to_f64(&self.number(key, text)?))
    }

    fn floats(&self, key: &str, text: &str) -> CliResult<Vec<f64>> {
        let qs = expr::parse_number_list(text).map_err(|e| self.expr_error(key, e))?;
        Ok(qs.iter().map(expr::to_f64).collect())
    }

    fn means(&self, key: &str, text: &str) -> CliResult<Vec<MeanExpr>> {
        expr::parse_mean_list(text).map_err(|e| self.expr_error(key, e))
    }

    fn interval(&self, lo: &str, hi: &str) -> CliResult<RationalInterval> {
        let (l, h) = (self.number("lo", lo)?, self.number("hi", hi)?);
        Ok(RationalInterval::closed(l, h)?)
    }

    fn function(&self, text: &str, domain: &RationalInterval) -> CliResult<ExtendedFunction> {
        let f = expr::parse_function(text).map_err(|e| self.expr_error("function", e))?;
        f.build(text, domain).map_err(|e| self.expr_error("function", e))
    }

    fn report(&self, params: &[(&str, String)]) -> Report {
        Report::new(self.command_name(), self.seed, params)
    }
}

/// Parses a command line (program name first). A `run --config` invocation
/// is resolved by reading the file.
pub fn parse_args<I, T>(args: I) -> CliResult<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.render().to_string()))?;
    match &cli.command {
        Command::Run { config: path } => {
            let text = std::fs::read_to_string(path)?;
            config::load(&text, cli.seed, cli.output.clone())
        }
        _ => Ok(RunConfig { seed: cli.seed, output: cli.output, command: cli.command, origins: Default::default() }),
    }
}

/// Runs the configured command, writes the report to `output` if set, and
/// returns it.
pub fn run(config: &RunConfig) -> CliResult<Outcome> {
    let outcome = match &config.command {
        Command::Descend(a) => descend(config, a)?,
        Command::Certify(a) => certify(config, a)?,
        Command::Eig(a) => eig(config, a)?,
        Command::Convexity(a) => convexity(config, a)?,
        Command::X1Demo(a) => x1_demo(config, a)?,
        Command::Chain(a) => chain(config, a)?,
        Command::Run { .. } => return Err(CliError::Usage("nested run".into())),
    };
    if let Some(path) = &config.output {
        std::fs::write(path, &outcome.text)?;
    }
    Ok(outcome)
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<T> = args.into_iter().collect();
    if let Err(e) = Cli::try_parse_from(args.clone()) {
        if !e.use_stderr() {
            print!("{}", e.render());
            return 0;
        }
    }
    let result = parse_args(args).and_then(|c| run(&c).map(|o| (c, o)));
    match result {
        Ok((config, outcome)) => {
            if config.output.is_none() {
                print!("{}", outcome.text);
            }
            outcome.status.code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn descend(config: &RunConfig, a: &DescendArgs) -> CliResult<Outcome> {
    let exprs = config.means("means", &a.means)?;
    let means =
        exprs.iter().map(|m| m.build()).collect::<Result<Vec<_>, _>>().map_err(|e| config.expr_error("means", e))?;
    let (x, y) = (config.float("x", &a.x)?, config.float("y", &a.y)?);
    let problem = DescendantProblem::new(means, x, y)?;
    let opts = SolveOptions { tol: a.tol, max_iter: a.max_iter, certify: a.certify, ..Default::default() };
    let solved = solve_fixed_point(&problem, &opts)?;

    let mut report = config.report(&[("means", a.means.clone()), ("x", a.x.clone()), ("y", a.y.clone())]);
    report.header(&["method", "cluster", "index", "xi", "residual", "iterations", "converged", "certified"]);
    let mut plain = Vec::new();
    let mut emit = |report: &mut Report,
                    method: &str,
                    cluster: usize,
                    xi: &[f64],
                    residual: f64,
                    iters: String,
                    conv: String,
                    cert: String| {
        for (i, v) in xi.iter().enumerate() {
            report.row([
                method.to_string(),
                cluster.to_string(),
                (i + 1).to_string(),
                fmt_f64(*v),
                fmt_f64(residual),
                iters.clone(),
                conv.clone(),
                cert.clone(),
            ]);
        }
        let xs: Vec<String> = xi.iter().map(|v| fmt_f64(*v)).collect();
        plain.push(format!("{method}[{cluster}]: xi = ({}) residual = {}", xs.join(", "), fmt_f64(residual)));
    };
    emit(
        &mut report,
        "solver",
        1,
        &solved.xi,
        solved.residual,
        solved.iterations.to_string(),
        solved.converged.to_string(),
        solved.certified().to_string(),
    );
    if a.closed_form {
        let parts: Vec<_> = exprs.iter().map(MeanExpr::quasi_parts).collect();
        let common = parts.iter().all(|p| matches!((p, &parts[0]), (Some((h, _)), Some((h0, _))) if h == h0));
        if !common {
            return Err(
                Error::PreconditionViolation("closed form needs means A(s) or QA(h,s) with a single h".into()).into()
            );
        }
        let h = parts[0].as_ref().unwrap().0.build().map_err(|e| config.expr_error("means", e))?;
        let s: Vec<f64> = parts.iter().map(|p| expr::to_f64(&p.as_ref().unwrap().1)).collect();
        let xi = closed_form_quasiarithmetic(&h, &s, x, y)?;
        let res = problem.residual(&xi)?;
        emit(&mut report, "closed-form", 1, &xi, res, String::new(), String::new(), String::new());
    }
    if a.brute_force {
        for (k, xi) in brute_force_fixed_points(&problem, a.grid)?.iter().enumerate() {
            let res = problem.residual(xi)?;
            emit(&mut report, "brute-force", k + 1, xi, res, String::new(), String::new(), String::new());
        }
    }
    let status = if solved.converged { Status::Success } else { Status::NonConvergence };
    let text = if a.csv {
        report.finish()
    } else {
        let mut t = report.preamble();
        for line in plain {
            t.push_str(&line);
            t.push('\n');
        }
        t.push_str(&format!(
            "iterations = {} converged = {} certified = {}\n",
            solved.iterations,
            solved.converged,
            solved.certified()
        ));
        t
    };
    Ok(Outcome { text, status })
}

fn certify(config: &RunConfig, a: &CertifyArgs) -> CliResult<Outcome> {
    let exprs = config.means("means", &a.means)?;
    let mut fs = Vec::new();
    let mut gs = Vec::new();
    for m in &exprs {
        let mean = m.build().map_err(|e| config.expr_error("means", e))?;
        let gen = mean
            .generators()
            .ok_or_else(|| Error::PreconditionViolation(format!("{} has no generators", mean.label())))?;
        fs.push(gen.f.clone());
        gs.push(gen.g.clone());
    }
    let (lo, hi) = (config.float("lo", &a.lo)?, config.float("hi", &a.hi)?);
    let cert = contraction_certificate(&fs, &gs, lo, hi, &LipschitzOptions { grid: a.lip_grid, safety: a.safety })?;
    let mut report = config.report(&[("means", a.means.clone()), ("lo", a.lo.clone()), ("hi", a.hi.clone())]);
    report.header(&["quantity", "index", "value"]);
    for (k, v) in cert.a.iter().enumerate() {
        report.row(["a".into(), (k + 2).to_string(), fmt_f64(*v)]);
    }
    for (name, vals) in [("b", &cert.b), ("w", &cert.w)] {
        for (k, v) in vals.iter().enumerate() {
            report.row([name.into(), (k + 1).to_string(), fmt_f64(*v)]);
        }
    }
    if let Some(c) = &cert.c {
        for (k, v) in c.iter().enumerate() {
            report.row(["c".into(), (k + 1).to_string(), fmt_f64(*v)]);
        }
    }
    if let Some(l) = cert.lambda {
        report.row(["lambda".into(), String::new(), fmt_f64(l)]);
    }
    report.row(["valid".into(), String::new(), cert.valid.to_string()]);
    Ok(Outcome { text: report.finish(), status: Status::Success })
}

fn eig(config: &RunConfig, a: &EigArgs) -> CliResult<Outcome> {
    let m = TwoDiagonalMatrix::new(config.floats("u", &a.u)?, config.floats("v", &a.v)?)?;
    let eigenvalues = m.eigenvalues(a.tol)?;
    let r = m.all_below_one()?;
    let mut report = config.report(&[("u", a.u.clone()), ("v", a.v.clone())]);
    report.header(&["quantity", "index", "value"]);
    for (k, v) in eigenvalues.iter().enumerate() {
        report.row(["eigenvalue".into(), (k + 1).to_string(), fmt_f64(*v)]);
    }
    for (k, v) in r.w.iter().enumerate() {
        report.row(["w".into(), (k + 1).to_string(), fmt_f64(*v)]);
    }
    report.row(["below_one_by_w".into(), String::new(), r.below_one_by_w.to_string()]);
    report.row(["below_one_by_eig".into(), String::new(), r.below_one_by_eig.to_string()]);
    report.row(["sufficient".into(), String::new(), r.sufficient.to_string()]);
    report.row(["cross_check".into(), String::new(), format!("{:?}", r.cross_check).to_lowercase()]);
    Ok(Outcome { text: report.finish(), status: Status::Success })
}

fn witness_cells<T>(
    w: &Option<Witness<T>>,
    num: impl Fn(&T) -> String,
    ext: impl Fn(&Extended<T>) -> String,
) -> [String; 6] {
    match w {
        Some(w) => [num(&w.x), num(&w.m), num(&w.y), ext(&w.dd), ext(&w.lhs), ext(&w.rhs)],
        None => Default::default(),
    }
}

fn convexity_row<T>(
    r: &ConvexityReport<T>,
    num: impl Fn(&T) -> String,
    ext: impl Fn(&Extended<T>) -> String,
) -> Vec<String> {
    let kind = match r.kind {
        Convexity::Lower => "lower",
        Convexity::Upper => "upper",
    };
    let mut row = vec![
        kind.to_string(),
        r.verdict.to_string(),
        r.samples_checked.to_string(),
        r.seed.map(|s| s.to_string()).unwrap_or_default(),
    ];
    row.extend(witness_cells(&r.witness, num, ext));
    row
}

fn convexity(config: &RunConfig, a: &ConvexityArgs) -> CliResult<Outcome> {
    let domain = config.interval(&a.lo, &a.hi)?;
    let f = config.function(&a.function, &domain)?;
    let mean_expr = expr::parse_mean(&a.mean).map_err(|e| config.expr_error("mean", e))?;
    let kind: Convexity = a.kind.into();
    let mut report = config.report(&[
        ("function", a.function.clone()),
        ("mean", a.mean.clone()),
        ("lo", a.lo.clone()),
        ("hi", a.hi.clone()),
    ]);
    report.header(&["kind", "verdict", "samples_checked", "seed", "x", "m", "y", "dd", "lhs", "rhs"]);
    let (verdict, agree) = if a.exact {
        let MeanExpr::Arith(t) = &mean_expr else {
            return Err(CliError::Usage("--exact supports only A(s) means".into()));
        };
        let grid = farey_grid(&domain, a.max_den);
        let r = check_convex_exact(&f, t, &grid, kind)?;
        report.row(convexity_row(&r, ToString::to_string, fmt_xrational));
        let agree = if a.efc { Some(efc_equivalent_check_exact(&f, t, &grid, kind)?) } else { None };
        (r.verdict, agree)
    } else {
        let mean = mean_expr.build().map_err(|e| config.expr_error("mean", e))?;
        let sampler = match a.grid_points {
            Some(points) => Sampler::Grid { points },
            None => Sampler::Random { count: a.samples, seed: config.seed },
        };
        let r = check_convex(&f, &mean, &sampler, kind)?;
        report.row(convexity_row(&r, |v| fmt_f64(*v), fmt_xreal));
        let agree = if a.efc { Some(efc_equivalent_check(&f, &mean, &sampler, kind)?) } else { None };
        (r.verdict, agree)
    };
    if let Some(agree) = agree {
        report.comment(&format!("efc_agree={agree}"));
    }
    let status = if verdict == Verdict::Counterexample { Status::Counterexample } else { Status::Success };
    Ok(Outcome { text: report.finish(), status })
}

fn x1_demo(config: &RunConfig, a: &X1Args) -> CliResult<Outcome> {
    let t = config.number("t", &a.t)?;
    if !is_in_open_unit_interval(&t) {
        return Err(Error::ParamOutOfRange(format!("t must lie in ]0, 1[, got {t}")).into());
    }
    let s = match &a.s {
        Some(s) => config.number("s", s)?,
        None => t.clone(),
    };
    let h = match expr::parse_function(&a.h).map_err(|e| config.expr_error("h", e))? {
        FuncExpr::Poly(cs) => cs,
        _ => return Err(config.expr_error("h", ExprError { offset: 0, message: "h must be poly(...)".into() })),
    };
    let domain = config.interval(&a.lo, &a.hi)?;
    let f = FuncExpr::X1(h).build("x1", &domain).map_err(|e| config.expr_error("h", e))?;
    let grid = farey_grid(&domain, a.max_den);
    let mut report =
        config.report(&[("t", a.t.clone()), ("h", a.h.clone()), ("lo", a.lo.clone()), ("hi", a.hi.clone())]);
    report.header(&["check", "param", "class", "verdict", "samples", "x", "m", "y", "lhs", "rhs", "verified"]);
    let co = ExactRational::one() - &t;
    for p in [&t, &co] {
        let r = check_convex_exact(&f, p, &grid, Convexity::Upper)?;
        let verified = match &r.witness {
            Some(w) => w.reverify(|q| f.eval_exact(q).expect("exact"), Convexity::Upper)?.to_string(),
            None => String::new(),
        };
        let [x, m, y, _, lhs, rhs] = witness_cells(&r.witness, ToString::to_string, fmt_xrational);
        report.row([
            "upper".into(),
            p.to_string(),
            classify_rational(p).to_string(),
            r.verdict.to_string(),
            r.samples_checked.to_string(),
            x,
            m,
            y,
            lhs,
            rhs,
            verified,
        ]);
    }
    let sum = &s + &t;
    let row = match addition_nonclosure_witness(&s, &t, &f) {
        Ok(w) => vec![
            "addition".into(),
            sum.to_string(),
            classify_rational(&sum).to_string(),
            Verdict::Counterexample.to_string(),
            String::new(),
            w.x.to_string(),
            w.u.to_string(),
            w.y.to_string(),
            fmt_xrational(&w.lhs),
            fmt_xrational(&w.rhs),
            w.verify(&f).to_string(),
        ],
        Err(Error::PreconditionViolation(why)) => {
            report.comment(&format!("addition skipped: {why}"));
            let mut r = vec!["addition".into(), sum.to_string(), classify_rational(&sum).to_string(), "SKIPPED".into()];
            r.resize(11, String::new());
            r
        }
        Err(e) => return Err(e.into()),
    };
    report.row(row);
    Ok(Outcome { text: report.finish(), status: Status::Success })
}

fn random_chain(rng: &mut ChaCha8Rng, lo: f64, hi: f64, max_points: usize) -> Vec<f64> {
    loop {
        let len = rng.random_range(3..=max_points.max(3));
        let mut pts: Vec<f64> = (0..len).map(|_| rng.random_range(lo..=hi)).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        if pts.len() >= 3 {
            return pts;
        }
    }
}

fn chain(config: &RunConfig, a: &ChainArgs) -> CliResult<Outcome> {
    let domain = config.interval(&a.lo, &a.hi)?;
    let f = config.function(&a.function, &domain)?;
    let window: Interval = domain.to_interval();
    let (lo, hi) = window.window();
    if a.exact && f.exact_domain().is_none() {
        return Err(CliError::Usage(format!("{} has no exact form", a.function)));
    }
    let chains: Vec<Vec<ExactRational>> = match &a.points {
        Some(text) => vec![expr::parse_number_list(text).map_err(|e| config.expr_error("points", e))?],
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..a.random)
                .map(|_| {
                    let pts = random_chain(&mut rng, lo, hi, a.max_points);
                    if a.exact {
                        // Snap to denominators of at most 64 for exact runs.
                        let mut q: Vec<ExactRational> = pts
                            .iter()
                            .map(|v| {
                                let num = (v * 64.0).round() as i64;
                                rat(num, 64)
                            })
                            .collect();
                        q.dedup();
                        q
                    } else {
                        pts.iter().map(|v| mconvex_core::rational::from_f64(*v).expect("finite")).collect()
                    }
                })
                .filter(|c| c.len() >= 3)
                .collect()
        }
    };
    let mut report = config.report(&[("function", a.function.clone()), ("lo", a.lo.clone()), ("hi", a.hi.clone())]);
    report.header(&["chain", "index", "points", "min_lower", "lower", "upper", "max_upper", "holds"]);
    let mut all_hold = true;
    for (c, pts) in chains.iter().enumerate() {
        for i in 1..pts.len() - 1 {
            let row = if a.exact {
                let r = check_chain(pts, i, |q| f.eval_exact(q).expect("exact"))?;
                all_hold &= r.holds;
                let shown: Vec<String> = pts.iter().map(ToString::to_string).collect();
                [
                    shown.join(" "),
                    fmt_xrational(&r.min_lower),
                    fmt_xrational(&r.lower),
                    fmt_xrational(&r.upper),
                    fmt_xrational(&r.max_upper),
                    r.holds.to_string(),
                ]
            } else {
                let floats: Vec<f64> = pts.iter().map(expr::to_f64).collect();
                let r = check_chain(&floats, i, |v| f.eval(*v))?;
                all_hold &= r.holds;
                let shown: Vec<String> = floats.iter().map(|v| fmt_f64(*v)).collect();
                [
                    shown.join(" "),
                    fmt_xreal(&r.min_lower),
                    fmt_xreal(&r.lower),
                    fmt_xreal(&r.upper),
                    fmt_xreal(&r.max_upper),
                    r.holds.to_string(),
                ]
            };
            let mut cells = vec![(c + 1).to_string(), i.to_string()];
            cells.extend(row);
            report.row(cells);
        }
    }
    let status = if all_hold { Status::Success } else { Status::Counterexample };
    Ok(Outcome { text: report.finish(), status })
}
