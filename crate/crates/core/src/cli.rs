//! Command-line front end: configuration, dispatch and output files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::acceptance::{self, SuiteConfig};
use crate::body::ConvexBody;
use crate::body_spec::BodySpec;
use crate::error::{Error, Result};
use crate::expansion::{fuglede_report_for_body, slope_bound_check, EXPANSION_HEADER};
use crate::functionals::{evaluate, write_reports, UNIT_VOLUME};
use crate::gap_analysis::{elongation_scan, near_ball_scan, near_ball_spheroid};
use crate::harmonics::analyze;
use crate::optimizer::{minimize_family, sweep, write_sweep_csv, Family, OptimizationProblem};
use crate::recenter::recenter;
use crate::sphere_grid::{build_grid, SphereGrid};

pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "isoq", version, about = "Log-corrected isoperimetric quotient of convex bodies in R^3")]
pub struct Cli {
    /// Quadrature grid as N_THETAxN_PHI.
    #[arg(long, global = true, value_name = "NxM")]
    pub grid: Option<String>,
    #[arg(long, global = true)]
    pub tol_lambda: Option<f64>,
    #[arg(long, global = true)]
    pub tol_recenter: Option<f64>,
    #[arg(long, global = true)]
    pub tol_convexity: Option<f64>,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// key=value or JSON configuration; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Functional report of one body, e.g. `eval spheroid a=0.4082483 c=6`.
    Eval {
        #[arg(required = true, num_args = 1..)]
        spec: Vec<String>,
    },
    /// Elongation or near-ball family scan, e.g. `scan elongation c=6,12,24,60`.
    Scan {
        kind: ScanKind,
        /// `c=...` for elongation, `eps=...` for near-ball.
        values: Option<String>,
    },
    /// Minimize Q* over a parametric family.
    Optimize {
        #[arg(long)]
        family: Option<String>,
        /// Top harmonic degree of the harmonic family.
        #[arg(long)]
        degree: Option<usize>,
        /// Use all orders m, not only zonal modes.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        restarts: Option<usize>,
        /// Objective evaluations per restart.
        #[arg(long)]
        budget: Option<usize>,
        /// Also tabulate this many evenly spaced points of a one-parameter family.
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Run the acceptance suite, or the listed items (numbers or names).
    Verify { items: Vec<String> },
    /// First-moment recentering, e.g. `recenter ball r=1 shift=0.2`.
    Recenter {
        #[arg(required = true, num_args = 1..)]
        spec: Vec<String>,
    },
    /// Second-order perimeter expansion and slope bound.
    Expand {
        #[arg(required = true, num_args = 1..)]
        spec: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScanKind {
    Elongation,
    NearBall,
}

const CONFIG_KEYS: [&str; 16] = [
    "grid",
    "tol_lambda",
    "tol_recenter",
    "tol_convexity",
    "seed",
    "out",
    "family",
    "bounds",
    "start",
    "degree",
    "zonal",
    "restarts",
    "budget",
    "sweep",
    "seed_c",
    "xtol",
];

/// Settings after merging the config file with command-line flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    pub tol_lambda: f64,
    pub tol_recenter: f64,
    pub tol_convexity: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Command-specific keys.
    pub extra: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_theta: 128,
            n_phi: 256,
            tol_lambda: 1e-9,
            tol_recenter: 1e-10,
            tol_convexity: 1e-6,
            seed: 42,
            out: None,
            extra: BTreeMap::new(),
        }
    }
}

pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("grid must look like 128x256, got `{s}`"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse(format!("bad value for {key}: `{v}`")))
}

fn positive_tol(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("{key} must be positive, got {v}")))
    }
}

/// Flat `key=value` lines (`#` comments) or a flat JSON object. Keys are
/// lowercased with `-` read as `_`; JSON arrays become comma lists and
/// pairs inside them `lo:hi`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let norm = |k: &str| k.trim().to_ascii_lowercase().replace('-', "_");
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config JSON: {e}")))?;
        let obj = v.as_object().ok_or_else(|| Error::Parse("config JSON must be an object".into()))?;
        for (k, v) in obj {
            map.insert(norm(k), json_scalar(v)?);
        }
    } else {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", n + 1)))?;
            map.insert(norm(k), v.trim().to_string());
        }
    }
    if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(Error::Parse(format!("unknown config key `{k}`")));
    }
    Ok(map)
}

fn json_scalar(v: &serde_json::Value) -> Result<String> {
    use serde_json::Value;
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|x| match x {
                Value::Array(pair) => Ok(pair.iter().map(json_scalar).collect::<Result<Vec<_>>>()?.join(":")),
                other => json_scalar(other),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => return Err(Error::Parse(format!("unsupported config value {v}"))),
    })
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut file = match &cli.config {
            Some(p) => parse_config_text(&fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        let mut cfg = RunConfig::default();
        let grid = cli.grid.clone().or_else(|| file.remove("grid"));
        if let Some(g) = grid {
            (cfg.n_theta, cfg.n_phi) = parse_grid(&g)?;
        }
        let mut tol = |key: &str, flag: Option<f64>, slot: &mut f64| -> Result<()> {
            if let Some(v) = flag {
                *slot = positive_tol(key, v)?;
            } else if let Some(v) = file.remove(key) {
                *slot = positive_tol(key, parse_num(key, &v)?)?;
            }
            Ok(())
        };
        tol("tol_lambda", cli.tol_lambda, &mut cfg.tol_lambda)?;
        tol("tol_recenter", cli.tol_recenter, &mut cfg.tol_recenter)?;
        tol("tol_convexity", cli.tol_convexity, &mut cfg.tol_convexity)?;
        file.remove("tol_lambda");
        file.remove("tol_recenter");
        file.remove("tol_convexity");
        if let Some(s) = cli.seed {
            cfg.seed = s;
        } else if let Some(s) = file.remove("seed") {
            cfg.seed = parse_num("seed", &s)?;
        }
        file.remove("seed");
        cfg.out = cli.out.clone().or_else(|| file.remove("out").map(PathBuf::from));
        file.remove("out");
        cfg.extra = file;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Arc<SphereGrid>> {
        Ok(Arc::new(build_grid(self.n_theta, self.n_phi)?))
    }

    fn extra<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.extra.get(key).map(|v| parse_num(key, v)).transpose()
    }
}

/// Collected outputs of one command: files to write under `--out`.
struct Output {
    files: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn new() -> Self {
        Output { files: Vec::new() }
    }

    /// Prints `bytes` on stdout and queues them as `name`.
    fn stdout(&mut self, name: String, bytes: Vec<u8>) {
        print!("{}", String::from_utf8_lossy(&bytes));
        self.files.push((name, bytes));
    }

    /// Prints `text` on stderr and queues it as `name`.
    fn note(&mut self, name: String, text: String) {
        eprint!("{text}");
        self.files.push((name, text.into_bytes()));
    }

    fn quiet(&mut self, name: String, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    fn write(self, dir: Option<&Path>) -> Result<()> {
        if let Some(dir) = dir {
            fs::create_dir_all(dir)?;
            for (name, bytes) in self.files {
                fs::write(dir.join(name), bytes)?;
            }
        }
        Ok(())
    }
}

fn spec_of(tokens: &[String]) -> Result<BodySpec> {
    BodySpec::parse(&tokens.join(" "))
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse(_) => EXIT_PARSE,
                _ => EXIT_NUMERICAL,
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = RunConfig::from_cli(cli)?;
    let mut out = Output::new();
    let code = match &cli.command {
        Command::Eval { spec } => cmd_eval(&cfg, &spec_of(spec)?, &mut out)?,
        Command::Scan { kind, values } => cmd_scan(&cfg, *kind, values.as_deref(), &mut out)?,
        Command::Optimize { family, degree, full, restarts, budget, sweep } => {
            cmd_optimize(&cfg, family.as_deref(), *degree, *full, *restarts, *budget, *sweep, &mut out)?
        }
        Command::Verify { items } => cmd_verify(&cfg, items, &mut out)?,
        Command::Recenter { spec } => cmd_recenter(&cfg, &spec_of(spec)?, &mut out)?,
        Command::Expand { spec } => cmd_expand(&cfg, &spec_of(spec)?, &mut out)?,
    };
    out.write(cfg.out.as_deref())?;
    Ok(code)
}

fn cmd_eval(cfg: &RunConfig, spec: &BodySpec, out: &mut Output) -> Result<i32> {
    let grid = cfg.grid()?;
    let body = spec.build(cfg.seed)?;
    let report = evaluate(&body, &grid, cfg.tol_lambda)?;
    let mut buf = Vec::new();
    write_reports(&mut buf, &[(spec.id(), report)])?;
    out.stdout(format!("eval_{}.csv", spec.slug()), buf);
    Ok(0)
}

fn parse_list(values: Option<&str>, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    let Some(v) = values else { return Ok(default.to_vec()) };
    let list = v
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Parse(format!("expected {key}=v1,v2,..., got `{v}`")))?;
    list.split(',').map(|x| parse_num(key, x)).collect()
}

fn cmd_scan(cfg: &RunConfig, kind: ScanKind, values: Option<&str>, out: &mut Output) -> Result<i32> {
    let grid = cfg.grid()?;
    let (name, scan) = match kind {
        ScanKind::Elongation => {
            let c = parse_list(values, "c", &[6.0, 12.0, 24.0, 60.0])?;
            ("elongation", elongation_scan(&c, &grid, cfg.tol_lambda)?)
        }
        ScanKind::NearBall => {
            let eps = parse_list(values, "eps", &[0.1, 0.05, 0.02, 0.01])?;
            ("near_ball", near_ball_scan(near_ball_spheroid, &eps, &grid, cfg.tol_lambda)?)
        }
    };
    let mut buf = Vec::new();
    scan.write_csv(&mut buf)?;
    out.stdout(format!("scan_{name}.csv"), buf);
    out.note(format!("scan_{name}.txt"), scan.summary());
    Ok(0)
}

fn parse_bounds(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|pair| {
            let (lo, hi) = pair
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("bounds must look like lo:hi,lo:hi, got `{s}`")))?;
            let (lo, hi) = (parse_num::<f64>("bounds", lo)?, parse_num::<f64>("bounds", hi)?);
            if lo > hi {
                return Err(Error::Parse(format!("empty bound {lo}:{hi}")));
            }
            Ok((lo, hi))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    cfg: &RunConfig,
    family: Option<&str>,
    degree: Option<usize>,
    full: bool,
    restarts: Option<usize>,
    budget: Option<usize>,
    sweep_points: Option<usize>,
    out: &mut Output,
) -> Result<i32> {
    let grid = cfg.grid()?;
    let name = family.map(str::to_string).or_else(|| cfg.extra.get("family").cloned()).unwrap_or("spheroid".into());
    let fam = match name.as_str() {
        "spheroid" => Family::Spheroid,
        "superspheroid" => Family::Superspheroid,
        "harmonic" => {
            let zonal = !full && cfg.extra("zonal")?.unwrap_or(true);
            let max_degree = degree.or(cfg.extra("degree")?).unwrap_or(4);
            if max_degree < 2 {
                return Err(Error::Parse("harmonic family needs degree >= 2".into()));
            }
            let c = cfg.extra("seed_c")?.unwrap_or(6.0);
            Family::Harmonic { max_degree, zonal_only: zonal, seed: Box::new(ConvexBody::unit_volume_spheroid(c)?) }
        }
        other => return Err(Error::Parse(format!("unknown family `{other}`"))),
    };
    let mut problem = OptimizationProblem::new(fam);
    problem.seed = cfg.seed;
    problem.lambda_tol = cfg.tol_lambda;
    problem.convexity_tol = cfg.tol_convexity;
    if let Some(b) = cfg.extra.get("bounds") {
        problem.bounds = parse_bounds(b)?;
    }
    if let Some(s) = cfg.extra.get("start") {
        problem.start = s.split(',').map(|x| parse_num("start", x)).collect::<Result<_>>()?;
    }
    let dim = problem.family.dimension();
    if problem.bounds.len() != dim || problem.start.len() != dim {
        return Err(Error::Parse(format!("family `{name}` has {dim} parameters")));
    }
    if let Some(b) = budget.or(cfg.extra("budget")?) {
        problem.options.max_evals = b;
    }
    if let Some(x) = cfg.extra("xtol")? {
        problem.options.xtol = positive_tol("xtol", x)?;
    }
    let restarts = restarts.or(cfg.extra("restarts")?).unwrap_or(1);
    let best = minimize_family(&problem, &grid, restarts)?;

    let mut buf = Vec::new();
    write_reports(&mut buf, &[(best.descriptor.clone(), best.report.clone())])?;
    out.stdout(format!("optimize_{name}.csv"), buf);
    let mut trace = csv::Writer::from_writer(Vec::new());
    trace.write_record(["iteration", "best"])?;
    for (i, v) in &best.trace {
        trace.write_record([i.to_string(), format!("{v:.12e}")])?;
    }
    out.quiet(format!("optimize_{name}_trace.csv"), trace.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    out.note(
        format!("optimize_{name}.txt"),
        format!(
            "best {} with q_star {:.6} after {} evaluations (start value {:.6})\n",
            best.descriptor, best.report.q_star, best.evaluations, best.start_value
        ),
    );
    if let Some(n) = sweep_points.or(cfg.extra("sweep")?) {
        if dim != 1 || n < 2 {
            return Err(Error::Parse("sweep needs a one-parameter family and at least 2 points".into()));
        }
        let (lo, hi) = problem.bounds[0];
        let pts: Vec<Vec<f64>> = (0..n).map(|k| vec![lo + (hi - lo) * k as f64 / (n - 1) as f64]).collect();
        let rows = sweep(&problem, &grid, &pts)?;
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows)?;
        out.quiet(format!("optimize_{name}_sweep.csv"), buf);
    }
    Ok(0)
}

fn cmd_verify(cfg: &RunConfig, items: &[String], out: &mut Output) -> Result<i32> {
    let only = items
        .iter()
        .map(|i| acceptance::resolve(i).ok_or_else(|| Error::Parse(format!("unknown verify item `{i}`"))))
        .collect::<Result<Vec<_>>>()?;
    let suite = SuiteConfig {
        n_theta: cfg.n_theta,
        n_phi: cfg.n_phi,
        tol_lambda: cfg.tol_lambda,
        tol_recenter: cfg.tol_recenter,
        seed: cfg.seed,
    };
    let mut text = String::new();
    let outcomes = acceptance::run(&suite, &only, |o| {
        println!("{}", o.line());
        text.push_str(&o.line());
        text.push('\n');
    })?;
    let passed = outcomes.iter().filter(|o| o.pass).count();
    let summary = format!("summary {passed}/{} PASS\n", outcomes.len());
    print!("{summary}");
    text.push_str(&summary);
    out.quiet("verify.txt".into(), text.into_bytes());
    Ok(if passed == outcomes.len() { 0 } else { EXIT_VERIFY_FAILED })
}

fn cmd_recenter(cfg: &RunConfig, spec: &BodySpec, out: &mut Output) -> Result<i32> {
    let grid = cfg.grid()?;
    let body = spec.build(cfg.seed)?;
    let r = recenter(&body, &grid, cfg.tol_recenter)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["body_id", "shift_x", "shift_y", "shift_z", "residual_moment", "iterations", "hausdorff", "bound_ratio"])?;
    w.write_record([
        spec.id(),
        format!("{:.12e}", r.shift.x),
        format!("{:.12e}", r.shift.y),
        format!("{:.12e}", r.shift.z),
        format!("{:.3e}", r.residual_moment.norm()),
        r.iterations.to_string(),
        format!("{:.12e}", r.hausdorff),
        format!("{:.6e}", r.bound_ratio),
    ])?;
    out.stdout(format!("recenter_{}.csv", spec.slug()), w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    Ok(0)
}

/// The expansion is stated at unit volume, so the body is rescaled first
/// when needed; the slope check uses the body as given.
fn cmd_expand(cfg: &RunConfig, spec: &BodySpec, out: &mut Output) -> Result<i32> {
    let grid = cfg.grid()?;
    let body = spec.build(cfg.seed)?;
    let slope = slope_bound_check(&body, &grid)?;
    let lam = slope.lambda;
    let mut text = format!(
        "d_H(K,B) = {lam:.6e}\nsup|grad u| = {:.6e}\nsqrt(2 d_H) = {:.6e}\nsup|grad u| / sqrt(2 d_H) = {:.6}\n\
         bound 2 sqrt(d_H)(1+d_H)/(1-d_H) = {:.6e}\nsup|grad u| / bound = {:.6}\n",
        slope.sup_grad,
        (2.0 * lam).sqrt(),
        if lam > 0.0 { slope.sup_grad / (2.0 * lam).sqrt() } else { 0.0 },
        slope.bound,
        slope.ratio,
    );
    let v = body.volume(&grid)?;
    let (unit, id) = if ((v - UNIT_VOLUME) / UNIT_VOLUME).abs() > 1e-12 {
        text.push_str(&format!("expansion evaluated on the body rescaled from volume {v:.9} to 4π/3\n"));
        (body.normalized_to_unit_volume(&grid)?, format!("{} (unit volume)", spec.id()))
    } else {
        (body.clone(), spec.id())
    };
    let report = fuglede_report_for_body(&unit, &grid)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EXPANSION_HEADER)?;
    w.write_record(report.csv_record(&id))?;
    out.stdout(format!("expand_{}.csv", spec.slug()), w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    let u: Vec<f64> = unit.radial_samples(&grid)?.iter().map(|r| r - 1.0).collect();
    let spectrum = analyze(&grid, &u, grid.band_limit().min(32))?;
    let mut buf = Vec::new();
    spectrum.write_csv(&mut buf)?;
    out.quiet(format!("expand_{}_spectrum.csv", spec.slug()), buf);
    out.note(format!("expand_{}.txt", spec.slug()), text);
    Ok(0)
}
