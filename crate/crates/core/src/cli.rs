//! Command-line front end. Every command writes a JSON report (to `--out`
//! or stdout) and exits 0 when all checks pass, 1 when a check fails, 2 on
//! usage or configuration errors and 3 when the solver does not converge.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::barrier::{check_window, choose_parameters_with, keq_lhs, verify_keq, BarrierParams};
use crate::doubling::ConstantLedger;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::lipschitz::{per_phase_quotients, theorem_report, CertifyConfig};
use crate::report::{Check, Report};
use crate::solver::{
    convergence_study, cone_problem, manufactured_solution, solve, zero_initial, ProblemFamily, ProblemSpec,
    SolverConfig, StencilWidth, SweepOrder, FLUX_MARGIN,
};
use crate::viscosity::{default_tol_zero, extract_phases, survey, SurveyConfig};

/// Worker count for the parallel pair searches and sweeps.
pub const THREADS_ENV: &str = "INFLAP_FB_THREADS";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "inflap-fb", version, about = "Two-phase infinity-Laplacian solver and Lipschitz certificate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Solve the two-phase problem for a profile's data.
    Solve,
    /// Choose barrier constants for (K, a, b) and verify the barrier inequality.
    Barrier,
    /// Run the doubling certificate over sampled centers.
    Certify,
    /// Measure Lipschitz quotients over the region.
    Lipschitz,
    /// Check the discrete viscosity inequalities and the flux condition.
    Viscosity,
    /// Convergence table over --levels.
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Exact two-phase solution with f+ = -1, f- = +1 and interface x1 = 0.
    Prandtl,
    /// slope * |x - vertex|, zero forcing.
    Cone,
    /// slope * x1, zero forcing.
    Linear,
    Zero,
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Options {
    /// Points per axis (odd, at least 5).
    #[arg(long, global = true, default_value_t = 33)]
    pub m: usize,
    /// Dimension, 1 or 2.
    #[arg(long, global = true, default_value_t = 2)]
    pub n: usize,
    #[arg(long, global = true, value_enum, default_value_t = Profile::Prandtl)]
    pub profile: Profile,
    /// Profile constant of the two-phase solution.
    #[arg(long = "C", global = true, default_value_t = 1.0)]
    pub c: f64,
    /// Flux bound; defaults to C^(1/3) + 0.1 for the two-phase profile, 1 otherwise.
    #[arg(long = "Lambda", global = true)]
    pub lambda: Option<f64>,
    /// Slope of the cone and linear profiles.
    #[arg(long, global = true, default_value_t = 3.0)]
    pub slope: f64,
    /// Cone vertex.
    #[arg(long, global = true, value_delimiter = ',', num_args = 2, default_values_t = [1.5, 1.0])]
    pub vertex: Vec<f64>,
    #[arg(long = "K", global = true)]
    pub k: Option<f64>,
    #[arg(long, global = true)]
    pub a: Option<f64>,
    #[arg(long, global = true)]
    pub b: Option<f64>,
    /// Forces the Lipschitz scale L.
    #[arg(long = "L", global = true)]
    pub l: Option<f64>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Solver update tolerance; interior inequality tolerance for `viscosity`.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "tol-slope", global = true)]
    pub tol_slope: Option<f64>,
    #[arg(long = "tol-zero", global = true)]
    pub tol_zero: Option<f64>,
    /// Witness tolerance; default is four times the largest axis second difference.
    #[arg(long = "tau-w", global = true)]
    pub tau_w: Option<f64>,
    /// Report path (JSON); stdout when absent. Not embedded in the report.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Field to examine (or initial guess for `solve`), in grid CSV format.
    #[arg(long = "grid-in", global = true)]
    pub grid_in: Option<PathBuf>,
    /// Where `solve` writes its solution.
    #[arg(long = "grid-out", global = true)]
    pub grid_out: Option<PathBuf>,
    /// Seed for randomized samples.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Grid sizes for `convergence`.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = [17, 33, 65])]
    pub levels: Vec<usize>,
    /// Sample count for barrier checks.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub samples: usize,
    /// Centers per axis for `certify`.
    #[arg(long, global = true, default_value_t = 5)]
    pub centers: usize,
    /// Stencil reach in cells, or `auto` to grow it with the grid.
    #[arg(long = "stencil-width", global = true)]
    pub stencil_width: Option<String>,
    #[arg(long = "max-iters", global = true, default_value_t = 200_000)]
    pub max_iters: usize,
    /// Two-color sweeps on worker threads instead of serial Gauss-Seidel.
    #[arg(long, global = true)]
    pub parallel: bool,
    /// Examine the solver's output instead of the profile's exact field.
    #[arg(long, global = true)]
    pub solved: bool,
}

/// Accepts `--command NAME` as an alias for the subcommand.
pub fn normalize_args(args: Vec<OsString>) -> Vec<OsString> {
    let mut out = Vec::with_capacity(args.len());
    let mut command = None;
    let mut it = args.into_iter();
    if let Some(bin) = it.next() {
        out.push(bin);
    }
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--command" {
            command = it.next();
        } else if let Some(v) = s.strip_prefix("--command=") {
            command = Some(OsString::from(v));
        } else {
            out.push(a);
        }
    }
    if let Some(c) = command {
        out.insert(1.min(out.len()), c);
    }
    out
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_from_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(normalize_args(args.into_iter().collect())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match run(&cli) {
        Ok(report) => {
            for c in &report.checks {
                eprintln!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
            }
            if report.all_pass() {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        _ => EXIT_USAGE,
    }
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs the command, writes the report and returns it.
pub fn run(cli: &Cli) -> Result<Report> {
    let opts = &cli.opts;
    validate(opts)?;
    let report = match cli.command {
        Command::Solve => cmd_solve(opts)?,
        Command::Barrier => cmd_barrier(opts)?,
        Command::Certify => cmd_certify(opts)?,
        Command::Lipschitz => cmd_lipschitz(opts)?,
        Command::Viscosity => cmd_viscosity(opts)?,
        Command::Convergence => cmd_convergence(opts)?,
    };
    let report = Report { config: config_value(cli.command, opts)?, ..report };
    match &opts.out {
        Some(path) => report.write(path)?,
        None => print!("{}", report.to_json()?),
    }
    Ok(report)
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

fn validate(o: &Options) -> Result<()> {
    if o.m < 5 || o.m.is_multiple_of(2) {
        return Err(usage(format!("--m must be odd and at least 5, got {}", o.m)));
    }
    if !(o.n == 1 || o.n == 2) {
        return Err(usage(format!("--n must be 1 or 2, got {}", o.n)));
    }
    let positive = [
        ("--tol", o.tol),
        ("--tol-slope", o.tol_slope),
        ("--tau-w", o.tau_w),
        ("--Lambda", o.lambda),
        ("--L", o.l),
    ];
    for (name, v) in positive {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(usage(format!("{name} must be positive, got {v}")));
            }
        }
    }
    if let Some(z) = o.tol_zero {
        if !(z >= 0.0) {
            return Err(usage(format!("--tol-zero must be non-negative, got {z}")));
        }
    }
    Ok(())
}

fn params(o: &Options) -> Result<BarrierParams> {
    let d = BarrierParams::default();
    BarrierParams::new(o.kappa.unwrap_or(d.kappa), o.theta.unwrap_or(d.theta))
}

fn lambda(o: &Options) -> f64 {
    o.lambda.unwrap_or(match o.profile {
        Profile::Prandtl => o.c.cbrt() + FLUX_MARGIN,
        _ => 1.0,
    })
}

fn stencil_width(o: &Options, default: StencilWidth) -> Result<StencilWidth> {
    match o.stencil_width.as_deref() {
        None => Ok(default),
        Some("auto") => Ok(StencilWidth::Scaled),
        Some(s) => match s.parse::<usize>() {
            Ok(w) if w >= 1 => Ok(StencilWidth::Fixed(w)),
            _ => Err(usage(format!("--stencil-width must be a positive integer or `auto`, got {s}"))),
        },
    }
}

fn solver_config(o: &Options, width: StencilWidth) -> Result<SolverConfig> {
    Ok(SolverConfig {
        max_iters: o.max_iters,
        tol: o.tol.unwrap_or(SolverConfig::default().tol),
        stencil_width: stencil_width(o, width)?,
        sweep: if o.parallel { SweepOrder::TwoColor } else { SweepOrder::Lexicographic },
        parallel: o.parallel,
        ..SolverConfig::default()
    })
}

fn vertex(o: &Options) -> [f64; 2] {
    [o.vertex[0], o.vertex[1]]
}

/// Exact field and problem data of the selected profile.
fn profile_instance(o: &Options, n: usize, m: usize) -> Result<(ScalarField, ProblemSpec)> {
    let (u, mut problem) = match o.profile {
        Profile::Prandtl => manufactured_solution(o.c, n, m)?,
        Profile::Cone => cone_problem(o.slope, vertex(o), n, m)?,
        Profile::Linear => {
            let u = ScalarField::from_fn(n, m, |x| o.slope * x[0])?;
            let zero = ScalarField::zeros(n, m)?;
            let p = ProblemSpec::new(zero.clone(), zero, 1.0, u.clone())?;
            (u, p)
        }
        Profile::Zero => {
            let u = ScalarField::zeros(n, m)?;
            (u.clone(), ProblemSpec::new(u.clone(), u.clone(), 1.0, u)?)
        }
    };
    problem.lambda = lambda(o);
    Ok((u, problem))
}

/// The field under examination with its problem data: `--grid-in` if given,
/// else the solver output with `--solved`, else the exact profile.
fn field_and_problem(o: &Options) -> Result<(ScalarField, ProblemSpec, Option<usize>)> {
    if let Some(path) = &o.grid_in {
        let u = ScalarField::load_csv(path)?;
        let (_, mut problem) = profile_instance(o, u.dim(), u.points_per_axis())?;
        problem.dirichlet = u.clone();
        return Ok((u, problem, None));
    }
    let (exact, problem) = profile_instance(o, o.n, o.m)?;
    if o.solved {
        let sol = solve(&problem, &zero_initial(&problem), &solver_config(o, StencilWidth::Fixed(1))?)?;
        return Ok((sol.field, problem, Some(sol.iterations)));
    }
    Ok((exact, problem, None))
}

fn config_value(command: Command, o: &Options) -> Result<serde_json::Value> {
    let p = params(o)?;
    Ok(json!({
        "command": command,
        "options": o,
        "resolved": {
            "Lambda": lambda(o),
            "kappa": p.kappa,
            "theta": p.theta,
        },
    }))
}

fn sup_error_half(a: &ScalarField, b: &ScalarField) -> f64 {
    a.indices_in_ball([0.0, 0.0], 0.5)
        .into_iter()
        .map(|k| (a.value(k) - b.value(k)).abs())
        .fold(0.0, f64::max)
}

fn cmd_solve(o: &Options) -> Result<Report> {
    let (exact, problem) = profile_instance(o, o.n, o.m)?;
    let initial = match &o.grid_in {
        Some(path) => {
            let g = ScalarField::load_csv(path)?;
            if !g.same_grid(&exact) {
                return Err(usage("--grid-in does not match --m/--n"));
            }
            g
        }
        None => zero_initial(&problem),
    };
    let cfg = solver_config(o, StencilWidth::Fixed(1))?;
    let sol = match solve(&problem, &initial, &cfg) {
        Ok(s) => s,
        Err(Error::NonConvergence { iterations, last_update, residual, last_iterate }) => {
            if let Some(path) = &o.grid_out {
                last_iterate.save_csv(path)?;
            }
            return Err(Error::NonConvergence { iterations, last_update, residual, last_iterate });
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = &o.grid_out {
        sol.field.save_csv(path)?;
    }
    let err = sup_error_half(&sol.field, &exact);
    let mut r = Report::new(&())?.with_results(&json!({
        "solver": cfg,
        "iterations": sol.iterations,
        "last_update": sol.last_update,
        "residual": sol.residual,
        "sup_error_half_ball": err,
    }))?;
    r.push(Check::le("last_update_below_tol", sol.last_update, cfg.tol));
    Ok(r)
}

fn cmd_barrier(o: &Options) -> Result<Report> {
    let (Some(k), Some(a), Some(b)) = (o.k, o.a, o.b) else {
        return Err(usage("barrier needs --K, --a and --b"));
    };
    let p = params(o)?;
    let choice = choose_parameters_with(p, k, a, b)?;
    let l = o.l.unwrap_or(choice.lbar);
    let cert = verify_keq(&p, l, a, b, k, o.samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let random_worst = (0..o.samples)
        .map(|_| {
            let t: f64 = rng.gen_range(f64::EPSILON..1.0);
            keq_lhs(&p, l, a, b, t)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let window = check_window(&p, o.samples.max(2))?;
    let mut r = Report::new(&())?.with_results(&json!({
        "choice": choice,
        "L": l,
        "certificate": cert,
        "random_worst_lhs": random_worst,
    }))?;
    r.push(Check::lt("keq_uniform_samples", -k - cert.worst_margin, -k));
    r.push(Check::lt("keq_random_samples", random_worst, -k));
    r.push(Check::flag("derivative_window", window));
    Ok(r)
}

fn cmd_certify(o: &Options) -> Result<Report> {
    let p = params(o)?;
    let (u, problem, _) = field_and_problem(o)?;
    let cfg = CertifyConfig {
        centers_per_axis: o.centers,
        tau_w: o.tau_w,
        l_override: o.l,
        tol_zero: o.tol_zero,
        ..CertifyConfig::default()
    };
    let rep = theorem_report(&u, &problem, &p, &cfg)?;
    let mut r = Report::new(&())?.with_ledger(&rep.ledger)?.with_results(&rep)?;
    r.push(Check::flag("ledger_rules", rep.ledger_rules_hold));
    for c in &rep.centers {
        let z = c.search.z0;
        r.push(Check::le(format!("no_witness_at({}, {})", z[0], z[1]), c.search.max_gap, c.search.tau_w));
    }
    let tau = rep.centers.iter().map(|c| c.search.tau_w).fold(0.0, f64::max);
    r.push(Check::le("lipschitz_consequence", rep.lipschitz_excess, 2.0 * tau));
    Ok(r)
}

fn cmd_lipschitz(o: &Options) -> Result<Report> {
    let p = params(o)?;
    let (u, problem, _) = field_and_problem(o)?;
    let mut ledger = ConstantLedger::from_problem(&u, &problem, [0.0, 0.0], &p)?;
    if let Some(l) = o.l {
        ledger = ledger.with_l(l);
    }
    let phases = extract_phases(&u, o.tol_zero.unwrap_or_else(|| default_tol_zero(&u)))?;
    let per = per_phase_quotients(&u, &phases, 0.5)?;
    let sup = per.pos_pos.value.max(per.neg_neg.value).max(per.cross.value);
    let bound = ledger.l + ledger.varrho;
    let mut r = Report::new(&())?.with_ledger(&ledger)?.with_results(&json!({
        "sup_quotient": sup,
        "per_phase": per,
        "bound_value": bound,
        "empirical_C": sup / (ledger.l + ledger.norm_u),
    }))?;
    r.push(Check::le("quotient_within_bound", sup, bound));
    Ok(r)
}

fn cmd_viscosity(o: &Options) -> Result<Report> {
    let (u, problem, _) = field_and_problem(o)?;
    let mut cfg = SurveyConfig::defaults_for(&u);
    if let Some(t) = o.tol {
        cfg.tol = t;
    }
    if let Some(t) = o.tol_slope {
        cfg.tol_slope = t;
    }
    if let Some(t) = o.tol_zero {
        cfg.tol_zero = t;
    }
    let s = survey(&u, &problem, &cfg)?;
    let mut r = Report::new(&())?.with_results(&json!({ "survey_config": cfg, "survey": s }))?;
    r.push(Check::le("interior_inequalities", s.interior_failed as f64, 0.0));
    r.push(Check::le("flux_condition", s.fb_failed as f64, 0.0));
    Ok(r)
}

fn cmd_convergence(o: &Options) -> Result<Report> {
    let family = match o.profile {
        Profile::Prandtl => ProblemFamily::Manufactured { c: o.c, n: o.n },
        Profile::Cone => ProblemFamily::Cone { slope: o.slope, vertex: vertex(o), n: o.n },
        other => return Err(usage(format!("convergence supports the prandtl and cone profiles, not {other:?}"))),
    };
    for &m in &o.levels {
        if m < 5 || m % 2 == 0 {
            return Err(usage(format!("--levels entries must be odd and at least 5, got {m}")));
        }
    }
    let cfg = solver_config(o, StencilWidth::Scaled)?;
    let rows = convergence_study(&family, &o.levels, &cfg)?;
    let mut r = Report::new(&())?.with_results(&json!({ "solver": cfg, "family": family, "rows": rows }))?;
    for w in rows.windows(2) {
        r.push(Check::lt(format!("error_decreases_{}_to_{}", w[0].m, w[1].m), w[1].sup_error, w[0].sup_error));
    }
    if let (ProblemFamily::Cone { slope, .. }, Some(last)) = (family, rows.last()) {
        r.push(Check::le(format!("error_at_{}_within_5pct_of_slope", last.m), last.sup_error, 0.05 * slope));
    }
    Ok(r)
}
