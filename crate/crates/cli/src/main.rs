mod manifest;

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cocycle::families::{
    explo_family, irrat_rot_family, rotation_family_with_speed, schrodinger_family, schrodinger_unscaled,
    sublevel_decay, sweep_l1, uniform_grid, Engine, ParamFamily, RotationMode, SweepOptions,
};
use cocycle::hyperbolicity::{certify, CertifyOptions, SearchParams, Verdict};
use cocycle::io::read_cocycle;
use cocycle::limits::{clt_test, gordin_livsic_for, ldt_tail_with, monte_carlo_l1, simulate_lognorm, SimConfig, Truncation};
use cocycle::numeric::{fmt_f64, mean_stderr};
use cocycle::stationary::{furstenberg_l1, l1_branch_series, stationary_measure, LyapunovReport};
use cocycle::{Cocycle, Error};

use manifest::{Manifest, Output};

#[derive(Parser)]
#[command(name = "cocycle", version, about = "Random products of 2x2 matrices with rank-one letters")]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Top Lyapunov exponent of a cocycle file.
    Lyapunov(LyapunovArgs),
    /// Decide projective uniform hyperbolicity.
    Certify(CertifyArgs),
    /// Sweep L1 over a one-parameter family.
    Sweep(SweepArgs),
    /// Large-deviation tails of log|A^n v|/n.
    Ldt(LdtArgs),
    /// Central limit test with the Gordin-Livsic variance.
    Clt(CltArgs),
    /// Atomic stationary measure as CSV.
    Measure(MeasureArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output file; stdout when absent. A manifest sidecar is written next to it.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LyapunovEngine {
    Series,
    Furstenberg,
    MonteCarlo,
}

#[derive(Args)]
struct LyapunovArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tail_eps: f64,
    #[arg(long, value_enum, default_value_t = LyapunovEngine::Furstenberg)]
    engine: LyapunovEngine,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1_000)]
    trials: usize,
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CertifyArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 12)]
    depth: usize,
    /// Fattening step of the cone search.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyName {
    Irratrot,
    Schrodinger,
    Explo,
    /// Rotations of the letters of `--input`.
    Rotation,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepEngine {
    Series,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Left,
    Right,
    InvertibleOnly,
}

#[derive(Args)]
struct SweepArgs {
    family: FamilyName,
    #[arg(long, default_value_t = 2048)]
    grid: usize,
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    #[arg(long, value_enum, default_value_t = SweepEngine::Series)]
    engine: SweepEngine,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    null_depth: usize,
    /// Add the PUH verdict column.
    #[arg(long)]
    certify: bool,
    #[arg(long, default_value_t = 0)]
    refine: usize,
    /// Sublevels `N` reported as trailing comment lines.
    #[arg(long, value_delimiter = ',')]
    sublevel: Vec<f64>,
    /// Schrödinger: finite potential value.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    a: f64,
    /// Schrödinger: probability of the large potential value.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Schrödinger: large potential value; adds the finite-λ comparison column.
    #[arg(long)]
    lambda: Option<f64>,
    /// Rotation family: base cocycle file.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::InvertibleOnly)]
    mode: Mode,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct LdtArgs {
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Reference exponent; computed when absent.
    #[arg(long, allow_hyphen_values = true)]
    l1: Option<f64>,
    /// `none`, `cube-root` or a fixed level.
    #[arg(long, default_value = "none")]
    truncation: String,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CltArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 2_000)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-12)]
    tail_eps: f64,
    #[arg(long, default_value_t = 200)]
    series_depth: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct MeasureArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tail_eps: f64,
    #[command(flatten)]
    out: OutArgs,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NullWord(_) => 3,
            Error::ZeroVariance => 5,
            Error::InvalidCocycle(_)
            | Error::InvalidArgument(_)
            | Error::EmptyGrid
            | Error::BadTruncation { .. }
            | Error::NotPrimitive
            | Error::NoSingularSymbol
            | Error::Inadmissible(_) => 2,
            _ => 1,
        };
        Failure { code, err: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        match err.downcast::<Error>() {
            Ok(e) => e.into(),
            Err(err) => Failure { code: 1, err },
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Error::InvalidArgument(msg.into()).into()
}

type Run = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Lyapunov(a) => lyapunov(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Ldt(a) => ldt(a),
        Command::Clt(a) => clt(a),
        Command::Measure(a) => measure(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            if let Some(Error::NullWord(w)) = f.err.downcast_ref::<Error>() {
                println!("null word: {w}");
            }
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

fn load(path: &PathBuf) -> Result<(Cocycle, String), Failure> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display())).map_err(|e| Failure {
        code: 2,
        err: e,
    })?;
    let c = read_cocycle(path)?;
    Ok((c, manifest::digest(&bytes)))
}

fn need_seed(seed: Option<u64>, what: &str) -> Result<u64, Failure> {
    seed.ok_or_else(|| invalid(format!("{what} is random; pass --seed")))
}

fn lyapunov(a: LyapunovArgs) -> Run {
    let (c, digest) = load(&a.input)?;
    let mut m = Manifest::new("lyapunov", Some(digest));
    m.param("tail_eps", a.tail_eps).param("engine", value_name(&a.engine));
    let report: LyapunovReport = match a.engine {
        LyapunovEngine::Series => l1_branch_series(&c, a.tail_eps)?,
        LyapunovEngine::Furstenberg => furstenberg_l1(&c, a.tail_eps)?,
        LyapunovEngine::MonteCarlo => {
            let seed = need_seed(a.seed, "the Monte Carlo engine")?;
            m.seed(seed).param("n", a.n).param("trials", a.trials);
            let cfg = SimConfig { seed, n: a.n, trials: a.trials, start: SimConfig::natural_start(&c) };
            monte_carlo_l1(&c, &cfg)?
        }
    };
    if a.csv {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let body = format!(
            "l1,l2,induced_l1,series_depth,tail_bound,method,stderr,cross_check_gap\n{},{},{},{},{},{},{},{}\n",
            fmt_f64(report.l1),
            fmt_f64(report.l2),
            opt(report.induced_l1),
            report.series_depth,
            fmt_f64(report.tail_bound),
            serde_json::to_value(report.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            opt(report.stderr),
            opt(report.cross_check_gap),
        );
        Output::Csv(body).write(&m, a.out.out.as_deref())?;
    } else {
        Output::Json(serde_json::to_value(&report).map_err(anyhow::Error::from)?).write(&m, a.out.out.as_deref())?;
    }
    Ok(0)
}

fn certify_cmd(a: CertifyArgs) -> Run {
    let (c, digest) = load(&a.input)?;
    if !(a.eps > 0.0) {
        return Err(invalid("--eps must be positive"));
    }
    let mut m = Manifest::new("certify", Some(digest));
    m.param("depth", a.depth).param("eps", a.eps).param("max_iter", a.max_iter);
    let opts = CertifyOptions {
        depth: a.depth,
        search: SearchParams { eps: a.eps, max_iter: a.max_iter, ..SearchParams::default() },
        ..CertifyOptions::default()
    };
    let cert = certify(&c, &opts);
    Output::Json(serde_json::to_value(&cert).map_err(anyhow::Error::from)?).write(&m, a.out.out.as_deref())?;
    Ok(match cert.verdict {
        Verdict::Puh => 0,
        Verdict::NotPuh => 1,
        Verdict::Unknown => 4,
    })
}

fn family_for(a: &SweepArgs, m: &mut Manifest) -> Result<(ParamFamily, (f64, f64)), Failure> {
    Ok(match a.family {
        FamilyName::Irratrot => (irrat_rot_family(), (0.1, PI - 0.1)),
        FamilyName::Schrodinger => {
            if !(a.p > 0.0 && a.p < 1.0) {
                return Err(invalid("--p must lie in (0, 1)"));
            }
            m.param("a", a.a).param("p", a.p);
            let f = schrodinger_family(a.a, a.p);
            let d = f.domain();
            (f, d)
        }
        FamilyName::Explo => {
            let f = explo_family();
            let d = f.domain();
            (f, d)
        }
        FamilyName::Rotation => {
            let path = a.input.as_ref().ok_or_else(|| invalid("the rotation family needs --input"))?;
            let (base, digest) = load(path)?;
            m.param("input_digest", digest).param("speed", a.speed);
            let mode = match a.mode {
                Mode::Left => RotationMode::Left,
                Mode::Right => RotationMode::Right,
                Mode::InvertibleOnly => RotationMode::InvertibleOnly,
            };
            m.param("mode", format!("{mode:?}"));
            if a.speed == 0.0 {
                return Err(invalid("--speed must be nonzero"));
            }
            let f = rotation_family_with_speed(&base, mode, a.speed);
            let d = f.domain();
            (f, d)
        }
    })
}

fn sweep(a: SweepArgs) -> Run {
    let mut m = Manifest::new("sweep", None);
    m.param("family", value_name(&a.family));
    let (family, (lo, hi)) = family_for(&a, &mut m)?;
    let from = a.from.unwrap_or(lo);
    let to = a.to.unwrap_or(hi);
    if a.grid == 0 {
        return Err(Error::EmptyGrid.into());
    }
    if a.grid > 1 && !(to > from) {
        return Err(invalid("--to must exceed --from"));
    }
    m.param("grid", a.grid).param("from", from).param("to", to).param("null_depth", a.null_depth);
    m.param("certify", a.certify).param("refine", a.refine);
    let engine = match a.engine {
        SweepEngine::Series => Engine::Series,
        SweepEngine::MonteCarlo => {
            let seed = need_seed(a.seed, "the Monte Carlo engine")?;
            m.seed(seed).param("n", a.n).param("trials", a.trials);
            Engine::MonteCarlo { seed, n: a.n, trials: a.trials }
        }
    };
    let opts = SweepOptions {
        engine,
        null_depth: a.null_depth,
        certify: a.certify.then(CertifyOptions::default),
        refine_rounds: a.refine,
        ..SweepOptions::default()
    };
    let grid = uniform_grid(from, to, a.grid);
    let res = sweep_l1(&family, &grid, &opts)?;
    let mut buf = Vec::new();
    res.write_csv(&mut buf).map_err(anyhow::Error::from)?;
    let mut body = String::from_utf8(buf).map_err(anyhow::Error::from)?;
    if let (FamilyName::Schrodinger, Some(lambda)) = (a.family, a.lambda) {
        let seed = need_seed(a.seed, "the finite-lambda comparison")?;
        m.seed(seed).param("lambda", lambda).param("n", a.n).param("trials", a.trials);
        body = lambda_columns(&body, &res.grid(), a.a, a.p, lambda, seed, a.n, a.trials)?;
    }
    if !a.sublevel.is_empty() {
        m.param("sublevel", format!("{:?}", a.sublevel));
        let rep = sublevel_decay(&res, &a.sublevel);
        for (n, frac) in &rep.rows {
            body.push_str(&format!("# sublevel N={} fraction={}\n", fmt_f64(*n), fmt_f64(*frac)));
        }
        body.push_str(&format!("# gamma={}\n", rep.gamma.map(fmt_f64).unwrap_or_else(|| "-".into())));
    }
    for d in &res.discontinuities {
        body.push_str(&format!("# discontinuity t={} word={}\n", fmt_f64(d.t), d.word));
    }
    Output::Csv(body).write(&m, a.out.out.as_deref())?;
    Ok(0)
}

/// Append `l1_lambda_minus_p_log_lambda`: the Monte Carlo exponent of the
/// unscaled potential cocycle minus `p log λ`.
#[allow(clippy::too_many_arguments)]
fn lambda_columns(body: &str, grid: &[f64], a: f64, p: f64, lambda: f64, seed: u64, n: usize, trials: usize) -> Result<String, Failure> {
    use rayon::prelude::*;
    let vals: Vec<Result<f64, Error>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let c = schrodinger_unscaled(a, p, lambda, t)?;
            let cfg = SimConfig { seed: seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), n, trials, start: SimConfig::natural_start(&c) };
            Ok(monte_carlo_l1(&c, &cfg)?.l1 - p * lambda.ln())
        })
        .collect();
    let mut out = String::new();
    let mut rows = vals.into_iter();
    for (k, line) in body.lines().enumerate() {
        out.push_str(line);
        if k == 0 {
            out.push_str(",l1_lambda_minus_p_log_lambda");
        } else {
            out.push(',');
            out.push_str(&fmt_f64(rows.next().expect("aligned")?));
        }
        out.push('\n');
    }
    Ok(out)
}

fn reference_l1(c: &Cocycle, seed: u64) -> Result<f64, Failure> {
    if c.has_singular() {
        return Ok(furstenberg_l1(c, 1e-12)?.l1);
    }
    let cfg = SimConfig { seed, n: 10_000, trials: 200, start: SimConfig::natural_start(c) };
    Ok(monte_carlo_l1(c, &cfg)?.l1)
}

fn ldt(a: LdtArgs) -> Run {
    let (c, digest) = load(&a.input)?;
    let seed = need_seed(a.seed, "the LDT run")?;
    let truncation = match a.truncation.as_str() {
        "none" => Truncation::None,
        "cube-root" => Truncation::CubeRoot,
        s => Truncation::Fixed(s.parse().map_err(|_| invalid(format!("unknown truncation {s}")))?),
    };
    let mut m = Manifest::new("ldt", Some(digest));
    m.seed(seed).param("n", format!("{:?}", a.n)).param("trials", a.trials).param("eps", a.eps);
    m.param("truncation", &a.truncation);
    let l1 = match a.l1 {
        Some(x) => x,
        None => reference_l1(&c, seed)?,
    };
    m.param("l1", l1);
    let rep = ldt_tail_with(&c, l1, a.eps, &a.n, a.trials, seed, truncation)?;
    if a.json {
        Output::Json(serde_json::to_value(&rep).map_err(anyhow::Error::from)?).write(&m, a.out.out.as_deref())?;
    } else {
        let mut body = String::from("n,trials,hits,tail,wilson_lo,wilson_hi\n");
        for r in &rep.rows {
            body.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n,
                r.trials,
                r.hits,
                fmt_f64(r.tail),
                fmt_f64(r.wilson_lo),
                fmt_f64(r.wilson_hi)
            ));
        }
        Output::Csv(body).write(&m, a.out.out.as_deref())?;
    }
    Ok(0)
}

fn clt(a: CltArgs) -> Run {
    let (c, digest) = load(&a.input)?;
    let seed = need_seed(a.seed, "the CLT run")?;
    let mut m = Manifest::new("clt", Some(digest));
    m.seed(seed).param("n", a.n).param("trials", a.trials).param("tail_eps", a.tail_eps);
    m.param("series_depth", a.series_depth);
    let (l1, sigma, gl) = if c.has_singular() {
        let gl = gordin_livsic_for(&c, a.tail_eps, a.series_depth)?;
        (furstenberg_l1(&c, a.tail_eps)?.l1, gl.sigma, Some(gl))
    } else {
        // Without atoms the variance is read off a pilot run.
        let cfg = SimConfig { seed: seed ^ 0x70696c6f74, n: a.n, trials: a.trials.min(500), start: SimConfig::natural_start(&c) };
        let s = simulate_lognorm(&c, &cfg)?;
        let nf = a.n as f64;
        let totals: Vec<f64> = s.iter().map(|x| x * nf).collect();
        let (mean, se) = mean_stderr(&totals);
        let sigma = se * (totals.len() as f64).sqrt() / nf.sqrt();
        (mean / nf, if sigma > 1e-9 { sigma } else { 0.0 }, None)
    };
    let rep = clt_test(&c, l1, sigma, a.n, a.trials, seed)?;
    let value = json!({ "l1": l1, "gordin_livsic": gl, "clt": rep });
    Output::Json(value).write(&m, a.out.out.as_deref())?;
    Ok(0)
}

fn measure(a: MeasureArgs) -> Run {
    let (c, digest) = load(&a.input)?;
    let mut m = Manifest::new("measure", Some(digest));
    m.param("tail_eps", a.tail_eps);
    let eta = stationary_measure(&c, a.tail_eps)?;
    let mut buf = Vec::new();
    eta.write_csv(&mut buf).map_err(anyhow::Error::from)?;
    Output::Csv(String::from_utf8(buf).map_err(anyhow::Error::from)?).write(&m, a.out.out.as_deref())?;
    Ok(0)
}
