use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avgcost::discounted::relative_value;
use avgcost::numfmt::{self, fmt17};
use avgcost::vanish::{self, SequenceOptions, VanishOptions};
use avgcost::verify::{self, SuiteOptions};
use avgcost::{
    catalog, io, sim, Construction, DiscountSchedule, Error, MdpModel, Policy, ValueKind, VanishDiagnostics,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Vanishing-discount solver and optimality checks for average-cost MDPs.
#[derive(Parser)]
#[command(name = "avgcost", version)]
struct Cli {
    /// Worker threads for per-alpha solves and replications (0 = all cores).
    #[arg(long, env = "AVGCOST_THREADS", default_value_t = 0, global = true)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the discounted problem for one alpha.
    Solve(SolveArgs),
    /// Run the vanishing-discount pipeline and write diagnostics.
    Vanish(VanishArgs),
    /// Run verification checks against saved diagnostics.
    Verify(VerifyArgs),
    /// Estimate the average cost of a policy by simulation.
    Simulate(SimulateArgs),
    /// Write a catalog model file.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Pipeline, verification and a simulated cross-check in one table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = vanish::DEFAULT_TOL)]
    tol: f64,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstructionArg {
    Pointwise,
    Weak,
}

impl From<ConstructionArg> for Construction {
    fn from(c: ConstructionArg) -> Self {
        match c {
            ConstructionArg::Pointwise => Construction::Pointwise,
            ConstructionArg::Weak => Construction::Weak,
        }
    }
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    model: PathBuf,
    /// `geometric:<gamma>:<n_max>`, `harmonic:<n_max>` or `list:<a1>,<a2>,...`.
    #[arg(long, default_value = avgcost::schedule::DEFAULT_SCHEDULE)]
    schedule: DiscountSchedule,
    /// Defaults to weak for W* models and pointwise otherwise.
    #[arg(long, value_enum)]
    construction: Option<ConstructionArg>,
    /// Solver tolerance per alpha.
    #[arg(long, default_value_t = vanish::DEFAULT_TOL)]
    solver_tol: f64,
    /// Decreasing ball radii for the weak construction; all distinct distances when absent.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Tolerance for membership in A*(x).
    #[arg(long)]
    a_star_tol: Option<f64>,
    /// Extra schedules aggregated into the w_lower/w_upper estimates.
    #[arg(long = "refine")]
    refine: Vec<DiscountSchedule>,
    /// Solve the schedule entries one after another.
    #[arg(long)]
    serial: bool,
}

impl PipelineArgs {
    fn options(&self) -> VanishOptions {
        VanishOptions {
            sequence: SequenceOptions {
                tol: self.solver_tol,
                parallel: !self.serial,
                ..Default::default()
            },
            construction: self.construction.map(Into::into),
            radii: self.radii.clone(),
            a_star_tol: self.a_star_tol,
            refinement: self.refine.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct VanishArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Diagnostics file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the extracted policy on its own.
    #[arg(long)]
    policy_out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Comma-separated check groups; all when absent.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Optimality residual tolerance; the A* tolerance of the diagnostics when absent.
    #[arg(long)]
    tol: Option<f64>,
    /// Horizon for the iterated bound.
    #[arg(long, default_value_t = 100)]
    bound_horizon: usize,
    /// Continuity thresholds.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.1,0.01")]
    eps: Vec<f64>,
    /// Integrability levels; powers of two up to the family maximum when absent.
    #[arg(long, value_delimiter = ',')]
    k_levels: Option<Vec<f64>>,
}

impl CheckArgs {
    fn options(&self) -> SuiteOptions {
        SuiteOptions {
            tol: self.tol,
            bound_horizon: self.bound_horizon,
            eps_list: self.eps.clone(),
            k_list: self.k_levels.clone(),
            only: self.checks.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    diagnostics: PathBuf,
    #[command(flatten)]
    checks: CheckArgs,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Policy file, or a diagnostics file carrying a policy.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 0)]
    x0: usize,
    #[arg(long, default_value_t = 10_000)]
    horizon: usize,
    #[arg(long, default_value_t = 16)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the first replication as a step log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CatalogCmd {
    /// Grid on [0,1], one action, all mass to 0, cost 1 off the origin.
    Indicator {
        #[arg(long, default_value_t = 101)]
        grid_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Alternating rational/irrational labels, cost 1 on irrational ones.
    Dirichlet {
        #[arg(long, default_value_t = 10)]
        n_pairs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded random model with positive kernels.
    Random {
        #[arg(long)]
        n_states: usize,
        #[arg(long)]
        n_actions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        sparsity: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every pair costs the same value.
    Constant {
        #[arg(long)]
        n_states: usize,
        #[arg(long)]
        n_actions: usize,
        #[arg(long, default_value_t = 1.0)]
        value: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    checks: CheckArgs,
    /// Start state of the simulated cross-check.
    #[arg(long, default_value_t = 0)]
    x0: usize,
    /// Horizon of the simulated cross-check; 0 skips it.
    #[arg(long, default_value_t = 10_000)]
    horizon: usize,
    #[arg(long, default_value_t = 16)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write diagnostics, report and simulation as one JSON document.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code: 2 input, 3 solver, 4 extraction, 5 verification.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotConverged { .. } => 3,
        Error::ScheduleEntry { source, .. } => exit_code(source),
        Error::EmptyActionSet { .. } => 4,
        _ => 2,
    }
}

type CmdResult = Result<(), Failure>;

fn load_model(path: &Path) -> Result<MdpModel, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    let (model, report) = io::parse_model(&text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    if !report.is_valid() {
        let lines: Vec<String> = report.violations.iter().map(|v| format!("  {v}")).collect();
        return Err(Failure {
            code: 2,
            message: format!("{}: model fails validation\n{}", path.display(), lines.join("\n")),
        });
    }
    if report.normalization_deviation > 0.0 {
        eprintln!(
            "note: kernel rows normalized at load (largest deviation {})",
            fmt17(report.normalization_deviation)
        );
    }
    Ok(model)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn print_text(text: &str) -> CmdResult {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit(json: &str, out: Option<&Path>) -> CmdResult {
    match out {
        Some(p) => Ok(fs::write(p, format!("{json}\n"))?),
        None => print_text(&format!("{json}\n")),
    }
}

#[derive(Serialize)]
struct SolveReport<'a> {
    #[serde(with = "numfmt")]
    alpha: f64,
    #[serde(with = "numfmt")]
    tol: f64,
    #[serde(with = "numfmt")]
    m: f64,
    #[serde(with = "numfmt")]
    scaled_m: f64,
    #[serde(with = "numfmt::vec")]
    v: &'a [f64],
    #[serde(with = "numfmt::vec")]
    u: &'a [f64],
    iterations: usize,
    #[serde(with = "numfmt")]
    residual: f64,
}

fn cmd_solve(a: &SolveArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let rv = relative_value(&model, a.alpha, a.tol)?;
    let report = SolveReport {
        alpha: rv.alpha,
        tol: a.tol,
        m: rv.m,
        scaled_m: rv.scaled_m,
        v: &rv.v.values,
        u: &rv.u.values,
        iterations: rv.iterations,
        residual: rv.residual,
    };
    emit(&serde_json::to_string_pretty(&report)?, a.out.as_deref())
}

fn empty_a_star(diag: &VanishDiagnostics) -> Failure {
    Failure {
        code: 4,
        message: format!(
            "A*(x) is empty at states {:?} (tolerance {})",
            diag.empty_action_states(),
            diag.a_star_tol.map_or("default".into(), fmt17)
        ),
    }
}

fn cmd_vanish(a: &VanishArgs) -> CmdResult {
    let model = load_model(&a.pipeline.model)?;
    let diag = vanish::run(&model, &a.pipeline.schedule, &a.pipeline.options())?;
    emit(&serde_json::to_string_pretty(&diag)?, a.out.as_deref())?;
    match &diag.policy {
        Some(p) => {
            if let Some(path) = &a.policy_out {
                fs::write(path, serde_json::to_string_pretty(p)? + "\n")?;
            }
            Ok(())
        }
        None => Err(empty_a_star(&diag)),
    }
}

fn verification_failed(report: &verify::VerificationReport) -> Failure {
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| c.kind != verify::CheckKind::Evidence && c.verdict == verify::Verdict::Fail)
        .map(|c| c.name.as_str())
        .collect();
    Failure {
        code: 5,
        message: format!("failed checks: {}", failed.join(", ")),
    }
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let diag: VanishDiagnostics =
        serde_json::from_str(&fs::read_to_string(&a.diagnostics)?).map_err(|e| Failure {
            code: 2,
            message: format!("{}: {e}", a.diagnostics.display()),
        })?;
    if diag.n_states() != model.n_states() {
        return Err(Failure {
            code: 2,
            message: format!(
                "diagnostics cover {} states, model has {}",
                diag.n_states(),
                model.n_states()
            ),
        });
    }
    let report = verify::run_suite(&model, &diag, &a.checks.options())?;
    print_text(&report.to_table())?;
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if report.non_evidence_pass() {
        Ok(())
    } else {
        Err(verification_failed(&report))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolicyDoc {
    Plain(Policy),
    Bare(Vec<usize>),
    Diagnostics { policy: Policy },
}

fn load_policy(path: &Path) -> Result<Policy, Failure> {
    let doc: PolicyDoc = serde_json::from_str(&fs::read_to_string(path)?).map_err(|_| Failure {
        code: 2,
        message: format!(
            "{}: expected a policy, an action list or diagnostics with a policy",
            path.display()
        ),
    })?;
    Ok(match doc {
        PolicyDoc::Plain(p) | PolicyDoc::Diagnostics { policy: p } => p,
        PolicyDoc::Bare(a) => Policy::new(a),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let policy = load_policy(&a.policy)?;
    policy.check(&model)?;
    let est = sim::simulate_average_cost(&model, &policy, a.x0, a.horizon, a.reps, a.seed)?;
    if let Some(path) = &a.log {
        let traj =
            sim::simulate_trajectory(&model, &policy, a.x0, a.horizon, sim::replication_seed(a.seed, 0))?;
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        traj.write_log(&mut w)?;
        w.flush()?;
    }
    emit(&serde_json::to_string_pretty(&est)?, a.out.as_deref())
}

fn cmd_catalog(c: &CatalogCmd) -> CmdResult {
    let bad = |m: &str| Failure {
        code: 2,
        message: m.to_string(),
    };
    let (model, out) = match c {
        CatalogCmd::Indicator { grid_size, out } => {
            if *grid_size < 2 {
                return Err(bad("grid-size must be at least 2"));
            }
            (catalog::example_indicator(*grid_size), out)
        }
        CatalogCmd::Dirichlet { n_pairs, out } => {
            if *n_pairs < 1 {
                return Err(bad("n-pairs must be at least 1"));
            }
            (catalog::example_dirichlet(*n_pairs), out)
        }
        CatalogCmd::Random {
            n_states,
            n_actions,
            seed,
            sparsity,
            out,
        } => {
            if *n_states < 1 || *n_actions < 1 {
                return Err(bad("n-states and n-actions must be at least 1"));
            }
            if !(0.0..1.0).contains(sparsity) {
                return Err(bad("sparsity must lie in [0,1)"));
            }
            (
                catalog::random_finite(*n_states, *n_actions, *seed, *sparsity),
                out,
            )
        }
        CatalogCmd::Constant {
            n_states,
            n_actions,
            value,
            seed,
            out,
        } => {
            if *n_states < 1 || *n_actions < 1 {
                return Err(bad("n-states and n-actions must be at least 1"));
            }
            if !value.is_finite() {
                return Err(bad("value must be finite"));
            }
            (catalog::constant_cost(*n_states, *n_actions, *value, *seed), out)
        }
    };
    io::write_model(&model, out)?;
    Ok(())
}

#[derive(Serialize)]
struct FullReport<'a> {
    diagnostics: &'a VanishDiagnostics,
    verification: &'a verify::VerificationReport,
    simulation: Option<&'a sim::TauberianResult>,
}

fn summary_table(model: &MdpModel, diag: &VanishDiagnostics) -> String {
    let mut s = String::new();
    let line = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k:<18} {v}\n"));
    line(&mut s, "states", model.n_states().to_string());
    line(&mut s, "actions", model.n_actions().to_string());
    line(&mut s, "schedule", diag.schedule.to_string());
    line(
        &mut s,
        "tail window",
        format!("{}..={}", diag.tail_start, diag.trace.len() - 1),
    );
    line(&mut s, "w_lower_seq", fmt17(diag.w_lower_seq));
    line(&mut s, "w_upper_seq", fmt17(diag.w_upper_seq));
    if let (Some(lo), Some(hi)) = (diag.w_lower, diag.w_upper) {
        line(
            &mut s,
            "w_lower/w_upper",
            format!("{} / {}", fmt17(lo), fmt17(hi)),
        );
    }
    line(
        &mut s,
        "w* estimate",
        diag.w_star_estimate.map_or("-".into(), fmt17),
    );
    if let Some(ValueKind::Limit { construction }) = diag.u.as_ref().map(|u| &u.kind) {
        line(&mut s, "construction", construction.to_string());
    }
    s.push('\n');
    s.push_str(&format!("{:>6} {:>24} {:>8} {}\n", "state", "u", "policy", "A*"));
    for x in 0..model.n_states() {
        let u = diag.u.as_ref().map_or("-".into(), |u| fmt17(u.values[x]));
        let p = diag
            .policy
            .as_ref()
            .map_or("-".into(), |p| model.actions()[p.action(x)].clone());
        let a: Vec<&str> = diag.a_star[x]
            .iter()
            .map(|&a| model.actions()[a].as_str())
            .collect();
        s.push_str(&format!("{x:>6} {u:>24} {p:>8} {{{}}}\n", a.join(",")));
    }
    for n in &diag.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s
}

fn cmd_report(a: &ReportArgs) -> CmdResult {
    let model = load_model(&a.pipeline.model)?;
    let diag = vanish::run(&model, &a.pipeline.schedule, &a.pipeline.options())?;
    let report = verify::run_suite(&model, &diag, &a.checks.options())?;
    let simulation = match (&diag.policy, a.horizon) {
        (Some(p), h) if h > 0 => Some(sim::tauberian_check(
            &model,
            p,
            a.x0,
            &a.pipeline.schedule,
            h,
            a.reps,
            a.seed,
        )?),
        _ => None,
    };
    let mut text = summary_table(&model, &diag);
    text.push('\n');
    text.push_str(&report.to_table());
    if let Some(t) = &simulation {
        let mut side = verify::VerificationReport::default();
        side.push(t.check.clone());
        text.push('\n');
        text.push_str(&side.to_table());
    }
    print_text(&text)?;
    if let Some(p) = &a.out {
        let doc = FullReport {
            diagnostics: &diag,
            verification: &report,
            simulation: simulation.as_ref(),
        };
        fs::write(p, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    if diag.policy.is_none() {
        return Err(empty_a_star(&diag));
    }
    if !report.non_evidence_pass() {
        return Err(verification_failed(&report));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Vanish(a) => cmd_vanish(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Catalog(c) => cmd_catalog(c),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
