//! Command-line front end: single runs, scheme comparisons, refinement
//! studies, steady-state audits and timing benchmarks.
//!
//! Every command returns a [`CommandResult`] instead of exiting, so the
//! binary stays a thin wrapper and the commands can be exercised in-process.
//! Exit code 2 means the input was rejected before any computation; exit
//! code 1 means a simulation or study failed numerically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::integrate::{simulate, IntegrateError, Method, Trajectory};
use crate::network::{assemble_dae, steady_solve, NetworkError, SteadyOptions};
use crate::scenario_io::{
    builtin_case, parse_network, parse_scenario, read_text, write_csv_file, Init, Scenario, ScenarioError,
};
use crate::schemes::{continuous_steady_profile, EigSum, PipeGrid, Scheme, SourceQuadrature};
use crate::studies::{
    oscillation_metric, steady_residual_study, traveling_wave_residuals, traveling_wave_study, uniform_flow_study,
    ConvergenceStudy, Probe, StudyError, UniformFlowOutlet, UNIFORM_FLOW_DT0,
};

/// Oscillation metric above which a run is reported as oscillating.
pub const OSCILLATION_THRESHOLD: f64 = 1e-6;

/// Known outlet pressure of `pipe_steady` (bar), checked by `steady`.
const PIPE_STEADY_REFERENCE_BAR: f64 = 153.8887;
const PIPE_STEADY_REFERENCE_BAND_BAR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    /// 0 on success, 1 on a numerical failure, 2 on an input error.
    pub exit_code: i32,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

impl CommandResult {
    fn failure(failure: Failure, artifacts: Vec<PathBuf>) -> Self {
        let (exit_code, message) = match failure {
            Failure::Input(m) => (2, m),
            Failure::Numerical(m) => (1, m),
        };
        Self {
            exit_code,
            summary: format!("error: {message}\n"),
            artifacts,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gasnet", version, about = "Transient gas flow on pipe networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write its trajectory
    Run {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Spatial scheme: new, mid or end (defaults to the scenario's)
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Output directory for CSV files and reports
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate one scenario with several schemes and compare them
    Compare {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Comma-separated list of schemes
        #[arg(long, value_delimiter = ',', default_value = "new,mid,end")]
        schemes: Vec<Scheme>,
        /// Run the schemes concurrently (wall times then include contention)
        #[arg(long)]
        parallel: bool,
        /// Output directory for CSV files and reports
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Grid/time-step refinement study against an exact solution
    Convergence {
        #[arg(long, value_enum)]
        target: Target,
        /// Number of refinement levels (at least 3)
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Source quadrature for the steady-state residual study
        #[arg(long, value_parser = parse_source, default_value = "midpoint")]
        source: SourceQuadrature,
        /// Time integrator for the uniform-flow study
        #[arg(long, value_enum, default_value_t = MethodArg::ImplicitEuler)]
        method: MethodArg,
        /// Pin the outlet pressure instead of the exact outlet flux
        #[arg(long)]
        pressure_outlet: bool,
        /// Coarsest time step of the uniform-flow study
        #[arg(long)]
        dt0: Option<f64>,
        /// Output directory for CSV files and reports
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Drive a scenario to its steady state and audit it against the
    /// steady-state ODE of every pipe
    Steady {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Spatial scheme: new, mid or end (defaults to the scenario's)
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Solve the steady equations directly instead of time stepping
        #[arg(long)]
        direct: bool,
        /// Output directory for CSV files and reports
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Repeat runs per scheme and report wall times
    Bench {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Comma-separated list of schemes
        #[arg(long, value_delimiter = ',', default_value = "new,mid,end")]
        schemes: Vec<Scheme>,
        /// Runs per scheme
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Output directory for CSV files and reports
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Where the scenario comes from, plus overrides applied on top of it.
#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["case", "network", "scenario"])))]
pub struct ScenarioArgs {
    /// Built-in case name
    #[arg(long)]
    pub case: Option<String>,
    /// Network file (JSON); simulated with default settings
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Scenario file (JSON)
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Uniform cell count for every pipe
    #[arg(long)]
    pub cells: Option<usize>,
    /// Integrator time step in seconds
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final simulation time in seconds
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Friction source quadrature of the new scheme: midpoint or simpson
    #[arg(long, value_parser = parse_source)]
    pub source: Option<SourceQuadrature>,
    /// Eigenvalue pair in the new scheme's flux rows: printed or derived
    #[arg(long = "eig-sum", value_parser = parse_eig_sum)]
    pub eig_sum: Option<EigSum>,
    /// Use the pressure-divided friction terms in the mid/end schemes
    #[arg(long)]
    pub verbatim_source: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Target {
    UniformFlow,
    TravelingWave,
    SteadyResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    ImplicitEuler,
    Bdf2,
}

fn parse_source(s: &str) -> Result<SourceQuadrature, String> {
    match s {
        "midpoint" => Ok(SourceQuadrature::Midpoint),
        "simpson" => Ok(SourceQuadrature::Simpson),
        other => Err(format!(
            "unknown source quadrature '{other}' (expected midpoint|simpson)"
        )),
    }
}

fn parse_eig_sum(s: &str) -> Result<EigSum, String> {
    match s {
        "printed" => Ok(EigSum::Printed),
        "derived" => Ok(EigSum::Derived),
        other => Err(format!("unknown eigenvalue sum '{other}' (expected printed|derived)")),
    }
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<NetworkError> for Failure {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Invalid(_) | NetworkError::MissingSignal(_) => Failure::Input(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<IntegrateError> for Failure {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::InvalidConfig(_) => Failure::Input(e.to_string()),
            IntegrateError::Network(n) => n.into(),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::TooFewLevels { .. } => Failure::Input(e.to_string()),
            StudyError::Integrate(i) => i.into(),
            StudyError::Network(n) => n.into(),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and executes the command.
/// `--help` and `--version` come back as exit code 0 with the text as
/// summary.
pub fn run_cli<I, T>(args: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli.command),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            CommandResult {
                exit_code: code,
                summary: e.render().to_string(),
                artifacts: Vec::new(),
            }
        }
    }
}

pub fn execute(command: Command) -> CommandResult {
    let mut artifacts = Vec::new();
    let outcome = match command {
        Command::Run { input, scheme, out } => cmd_run(&input, scheme, &out, &mut artifacts),
        Command::Compare {
            input,
            schemes,
            parallel,
            out,
        } => cmd_compare(&input, &schemes, parallel, &out, &mut artifacts),
        Command::Convergence {
            target,
            levels,
            source,
            method,
            pressure_outlet,
            dt0,
            out,
        } => {
            let method = match method {
                MethodArg::ImplicitEuler => Method::ImplicitEuler,
                MethodArg::Bdf2 => Method::Bdf2,
            };
            let outlet = if pressure_outlet {
                UniformFlowOutlet::Pressure
            } else {
                UniformFlowOutlet::ExactFlux
            };
            let study = StudySpec {
                target,
                levels,
                source,
                method,
                outlet,
                dt0,
            };
            cmd_convergence(&study, &out, &mut artifacts)
        }
        Command::Steady {
            input,
            scheme,
            direct,
            out,
        } => cmd_steady(&input, scheme, direct, &out, &mut artifacts),
        Command::Bench {
            input,
            schemes,
            repeats,
            out,
        } => cmd_bench(&input, &schemes, repeats, &out, &mut artifacts),
    };
    match outcome {
        Ok(mut summary) => {
            for a in &artifacts {
                let _ = writeln!(summary, "wrote {}", a.display());
            }
            CommandResult {
                exit_code: 0,
                summary,
                artifacts,
            }
        }
        Err(f) => CommandResult::failure(f, artifacts),
    }
}

/// Loads the scenario named by `args` and applies its overrides.
pub fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, String> {
    load(args).map_err(|f| match f {
        Failure::Input(m) | Failure::Numerical(m) => m,
    })
}

fn load(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut scenario = if let Some(name) = &args.case {
        builtin_case(name)?
    } else if let Some(path) = &args.scenario {
        let base = path.parent().unwrap_or(Path::new("."));
        parse_scenario(&read_text(path)?, base)?
    } else if let Some(path) = &args.network {
        let network = parse_network(&read_text(path)?)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "network".into());
        Scenario {
            name,
            network,
            t_end: 100.0,
            output_dt: 1.0,
            init: Init::Steady,
            scheme: Scheme::New,
            options: Default::default(),
            integrator: Default::default(),
        }
    } else {
        return Err(Failure::Input(
            "one of --case, --network or --scenario is required".into(),
        ));
    };
    if let Some(n) = args.cells {
        for pipe in &mut scenario.network.pipes {
            pipe.grid = PipeGrid::new(pipe.grid.geom, pipe.grid.law, n).map_err(|e| Failure::Input(e.to_string()))?;
        }
    }
    if let Some(dt) = args.dt {
        scenario.integrator.dt = dt;
    }
    if let Some(t_end) = args.t_end {
        if !(t_end > 0.0) {
            return Err(Failure::Input(format!("--t-end must be positive, got {t_end}")));
        }
        scenario.t_end = t_end;
        scenario.output_dt = scenario.output_dt.min(t_end);
    }
    if let Some(s) = args.source {
        scenario.options.source = s;
    }
    if let Some(e) = args.eig_sum {
        scenario.options.eig_sum = e;
    }
    scenario.options.verbatim_source |= args.verbatim_source;
    scenario
        .integrator
        .validate()
        .map_err(|e| Failure::Input(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: PathBuf, text: &str, artifacts: &mut Vec<PathBuf>) -> Result<(), Failure> {
    std::fs::write(&path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    artifacts.push(path);
    Ok(())
}

fn write_trajectory(traj: &Trajectory, path: PathBuf, artifacts: &mut Vec<PathBuf>) -> Result<(), Failure> {
    write_csv_file(traj, &path)?;
    artifacts.push(path);
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::ImplicitEuler => "implicit Euler",
        Method::Bdf2 => "BDF2",
        Method::ExplicitEuler => "explicit Euler",
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

struct SchemeRun {
    scheme: Scheme,
    trajectory: Trajectory,
    wall_seconds: f64,
    oscillation: f64,
}

fn run_scheme(scenario: &Scenario, scheme: Scheme) -> Result<SchemeRun, Failure> {
    let mut s = scenario.clone();
    s.scheme = scheme;
    let result = simulate(&s)?;
    let probe = Probe::default_for(&s.network);
    let oscillation = oscillation_metric(&probe.series(&result.trajectory));
    Ok(SchemeRun {
        scheme,
        trajectory: result.trajectory,
        wall_seconds: result.wall_seconds,
        oscillation,
    })
}

fn final_state_table(scenario: &Scenario, traj: &Trajectory) -> String {
    let last = traj.times.len() - 1;
    let mut out = format!("final state (t = {} s):\n", traj.times[last]);
    let _ = writeln!(
        out,
        "  {:<8} {:>14} {:>14} {:>14} {:>14}",
        "pipe", "p_in [bar]", "p_out [bar]", "q_in [kg/s]", "q_out [kg/s]"
    );
    for (k, pipe) in scenario.network.pipes.iter().enumerate() {
        let n = traj.xs[k].len() - 1;
        let _ = writeln!(
            out,
            "  {:<8} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
            pipe.id,
            traj.pressure(last, k, 0) / 1e5,
            traj.pressure(last, k, n) / 1e5,
            traj.flux(last, k, 0),
            traj.flux(last, k, n)
        );
    }
    out
}

fn cmd_run(
    input: &ScenarioArgs,
    scheme: Option<Scheme>,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<String, Failure> {
    let mut scenario = load(input)?;
    if let Some(s) = scheme {
        scenario.scheme = s;
    }
    prepare_out(out)?;
    let run = run_scheme(&scenario, scenario.scheme)?;
    let traj = &run.trajectory;
    let stem = format!("{}_{}", file_stem(&scenario.name), run.scheme);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {}, scheme {}, {} pipe(s), {} unknowns",
        scenario.name,
        run.scheme,
        scenario.network.pipes.len(),
        traj.final_state().len()
    );
    let _ = writeln!(
        s,
        "{} with dt = {} s up to t = {} s: {} steps ({} rejected)",
        method_name(scenario.integrator.method),
        scenario.integrator.dt,
        scenario.t_end,
        traj.steps.len(),
        traj.rejected_steps
    );
    let _ = writeln!(s, "wall time {:.3} s", run.wall_seconds);
    s.push_str(&final_state_table(&scenario, traj));
    let (jp, jq) = traj.max_junction_residuals();
    let _ = writeln!(s, "max junction residuals: pressure {jp:.3e}, flux balance {jq:.3e}");
    let _ = writeln!(
        s,
        "max algebraic constraint violation: {:.3e}",
        traj.max_constraint_violation()
    );
    let probe = Probe::default_for(&scenario.network);
    let _ = writeln!(
        s,
        "oscillation metric ({}): {:.3e}",
        probe.describe(&scenario.network),
        run.oscillation
    );
    if run.oscillation > OSCILLATION_THRESHOLD {
        let _ = writeln!(
            s,
            "warning: persistent oscillation, metric above {OSCILLATION_THRESHOLD:e}"
        );
    }

    write_trajectory(traj, out.join(format!("{stem}.csv")), artifacts)?;
    write_text(out.join(format!("{stem}_summary.txt")), &s, artifacts)?;
    Ok(s)
}

/// Largest pairwise difference of pipe outlet pressures over all samples,
/// absolute (Pa) and relative to the local pressure.
fn cross_scheme_deviation(runs: &[SchemeRun]) -> (f64, f64) {
    let mut abs: f64 = 0.0;
    let mut rel: f64 = 0.0;
    for (a, ra) in runs.iter().enumerate() {
        for rb in &runs[a + 1..] {
            let (ta, tb) = (&ra.trajectory, &rb.trajectory);
            for s in 0..ta.times.len().min(tb.times.len()) {
                for k in 0..ta.offsets.len() {
                    let n = ta.xs[k].len() - 1;
                    let (pa, pb) = (ta.pressure(s, k, n), tb.pressure(s, k, n));
                    abs = abs.max((pa - pb).abs());
                    rel = rel.max((pa - pb).abs() / pa.abs().max(pb.abs()));
                }
            }
        }
    }
    (abs, rel)
}

fn cmd_compare(
    input: &ScenarioArgs,
    schemes: &[Scheme],
    parallel: bool,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<String, Failure> {
    let scenario = load(input)?;
    if schemes.len() < 2 {
        return Err(Failure::Input("compare needs at least two schemes".into()));
    }
    prepare_out(out)?;
    let runs: Vec<SchemeRun> = if parallel {
        let scenario = &scenario;
        std::thread::scope(|scope| {
            let handles: Vec<_> = schemes
                .iter()
                .map(|&sc| scope.spawn(move || run_scheme(scenario, sc)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("simulation thread panicked"))
                .collect::<Result<_, _>>()
        })?
    } else {
        schemes
            .iter()
            .map(|&sc| run_scheme(&scenario, sc))
            .collect::<Result<_, _>>()?
    };

    let stem = file_stem(&scenario.name);
    let mut s = format!("scenario {}: comparison of {} schemes\n", scenario.name, runs.len());
    let probe = Probe::default_for(&scenario.network);
    let _ = writeln!(s, "oscillation probe: {}", probe.describe(&scenario.network));
    let _ = writeln!(
        s,
        "{:<6} {:>12} {:>8} {:>9} {:>14} {:>16}",
        "scheme", "wall [s]", "steps", "rejected", "oscillation", "p_out end [bar]"
    );
    for r in &runs {
        let t = &r.trajectory;
        let k = t.offsets.len() - 1;
        let p_end = t.pressure(t.times.len() - 1, k, t.xs[k].len() - 1) / 1e5;
        let _ = writeln!(
            s,
            "{:<6} {:>12.4} {:>8} {:>9} {:>14.4e} {:>16.6}",
            r.scheme.name(),
            r.wall_seconds,
            t.steps.len(),
            t.rejected_steps,
            r.oscillation,
            p_end
        );
    }
    let (abs, rel) = cross_scheme_deviation(&runs);
    let _ = writeln!(
        s,
        "max cross-scheme outlet pressure deviation: {:.6} bar ({:.3e} relative)",
        abs / 1e5,
        rel
    );
    let _ = writeln!(s, "check outlet pressures agree within 1%: {}", pass(rel <= 0.01));
    let find = |sc: Scheme| runs.iter().find(|r| r.scheme == sc);
    if let (Some(new), Some(mid)) = (find(Scheme::New), find(Scheme::Mid)) {
        let ok = new.oscillation < 1e-3 * mid.oscillation;
        let _ = writeln!(
            s,
            "check oscillation new < 1e-3 x mid ({:.3e} vs {:.3e}): {}",
            new.oscillation,
            mid.oscillation,
            pass(ok)
        );
    }
    if let (Some(new), Some(mid), Some(end)) = (find(Scheme::New), find(Scheme::Mid), find(Scheme::End)) {
        let ok = new.wall_seconds <= end.wall_seconds && end.wall_seconds < mid.wall_seconds;
        let _ = writeln!(s, "check wall-time ordering new <= end < mid: {}", pass(ok));
    }
    if parallel {
        s.push_str("note: schemes ran concurrently; wall times include contention\n");
    }

    for r in &runs {
        write_trajectory(&r.trajectory, out.join(format!("{stem}_{}.csv", r.scheme)), artifacts)?;
    }
    write_text(out.join(format!("{stem}_compare.txt")), &s, artifacts)?;
    Ok(s)
}

struct StudySpec {
    target: Target,
    levels: usize,
    source: SourceQuadrature,
    method: Method,
    outlet: UniformFlowOutlet,
    dt0: Option<f64>,
}

fn cmd_convergence(spec: &StudySpec, out: &Path, artifacts: &mut Vec<PathBuf>) -> Result<String, Failure> {
    if spec.levels < 3 {
        return Err(Failure::Input(format!(
            "a convergence study needs at least 3 levels, got {}",
            spec.levels
        )));
    }
    prepare_out(out)?;
    let mut s = String::new();
    let (study, name, expected): (ConvergenceStudy, String, (f64, f64)) = match spec.target {
        Target::UniformFlow => {
            let dt0 = spec.dt0.unwrap_or(match spec.outlet {
                UniformFlowOutlet::ExactFlux => UNIFORM_FLOW_DT0,
                UniformFlowOutlet::Pressure => 2.0,
            });
            let study = uniform_flow_study(spec.levels, spec.method, spec.outlet, dt0)?;
            let expected = match spec.method {
                Method::Bdf2 => (1.7, 2.3),
                _ => (0.8, 1.2),
            };
            let outlet = match spec.outlet {
                UniformFlowOutlet::ExactFlux => "exact_flux",
                UniformFlowOutlet::Pressure => "pressure",
            };
            let method = if spec.method == Method::Bdf2 {
                "bdf2"
            } else {
                "implicit_euler"
            };
            let _ = writeln!(
                s,
                "uniform flow, {}, outlet {outlet}, dt0 = {dt0} s",
                method_name(spec.method)
            );
            (study, format!("uniform_flow_{method}_{outlet}"), expected)
        }
        Target::TravelingWave => {
            let (mass, momentum) = traveling_wave_residuals(1e-4)?;
            let _ = writeln!(
                s,
                "traveling wave residuals at h = 1e-4: mass {mass:.3e}, momentum {momentum:.3e}"
            );
            (traveling_wave_study(spec.levels)?, "traveling_wave".into(), (0.7, 1.3))
        }
        Target::SteadyResidual => {
            let (label, expected) = match spec.source {
                SourceQuadrature::Midpoint => ("midpoint", (0.7, 1.3)),
                SourceQuadrature::Simpson => ("simpson", (3.0, f64::INFINITY)),
            };
            let _ = writeln!(s, "steady-state residual, {label} source quadrature");
            (
                steady_residual_study(spec.source, spec.levels)?,
                format!("steady_residual_{label}"),
                expected,
            )
        }
    };
    s.push_str(&study.table());
    let (lo, hi) = expected;
    let range = if hi.is_finite() {
        format!("[{lo}, {hi}]")
    } else {
        format!(">= {lo}")
    };
    let _ = writeln!(
        s,
        "check slope {:.4} in {range}: {}",
        study.slope,
        pass(study.slope >= lo && study.slope <= hi)
    );
    write_text(out.join(format!("convergence_{name}.txt")), &s, artifacts)?;
    Ok(s)
}

fn cmd_steady(
    input: &ScenarioArgs,
    scheme: Option<Scheme>,
    direct: bool,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<String, Failure> {
    let mut scenario = load(input)?;
    if let Some(sc) = scheme {
        scenario.scheme = sc;
    }
    prepare_out(out)?;
    let dae = assemble_dae(&scenario.network, scenario.scheme, scenario.options)?;
    let (t, u, how) = if direct {
        let sol = steady_solve(&dae, scenario.t_end, SteadyOptions::default())?;
        (
            scenario.t_end,
            sol.state,
            format!("direct steady solve ({} iterations)", sol.iterations),
        )
    } else {
        let r = simulate(&scenario)?;
        let t = *r.trajectory.times.last().expect("initial snapshot");
        let how = format!("time stepping to t = {t} s, wall time {:.3} s", r.wall_seconds);
        (t, r.trajectory.final_state().clone(), how)
    };

    let mut s = format!("scenario {}, scheme {}: {how}\n", scenario.name, scenario.scheme);
    let _ = writeln!(
        s,
        "  {:<8} {:>14} {:>14} {:>14} {:>12} {:>12}",
        "pipe", "q mean [kg/s]", "q spread", "p_out [bar]", "ODE [bar]", "deviation"
    );
    let mut worst_spread: f64 = 0.0;
    let mut worst_dev: f64 = 0.0;
    let mut outlet_bar = Vec::new();
    for (k, pipe) in scenario.network.pipes.iter().enumerate() {
        let st = dae.pipe_state(&u, k);
        let q_mean = st.q.iter().sum::<f64>() / st.q.len() as f64;
        let spread = st.q.iter().map(|q| (q - q_mean).abs()).fold(0.0, f64::max) / q_mean.abs().max(1e-300);
        let p_out = *st.p.last().expect("nonempty pipe");
        let oracle = continuous_steady_profile(&pipe.grid, q_mean, st.p[0], &[pipe.grid.geom.length])
            .map_err(|e| Failure::Numerical(format!("pipe {}: {e}", pipe.id)))?[0];
        let dev = (p_out - oracle).abs() / oracle;
        worst_spread = worst_spread.max(if q_mean == 0.0 { 0.0 } else { spread });
        worst_dev = worst_dev.max(dev);
        outlet_bar.push(p_out / 1e5);
        let _ = writeln!(
            s,
            "  {:<8} {:>14.6} {:>14.3e} {:>14.6} {:>12.6} {:>12.3e}",
            pipe.id,
            q_mean,
            spread,
            p_out / 1e5,
            oracle / 1e5,
            dev
        );
    }
    let (jp, jq) = dae.junction_residuals(&u);
    let _ = writeln!(s, "junction residuals: pressure {jp:.3e}, flux balance {jq:.3e}");
    let _ = writeln!(s, "check flux uniform to 1e-6 relative: {}", pass(worst_spread <= 1e-6));
    let _ = writeln!(
        s,
        "check outlet pressure within 0.5% of the steady ODE: {}",
        pass(worst_dev <= 5e-3)
    );
    if scenario.name == "pipe_steady" && outlet_bar.len() == 1 {
        let d = outlet_bar[0] - PIPE_STEADY_REFERENCE_BAR;
        let inside = d.abs() <= PIPE_STEADY_REFERENCE_BAND_BAR;
        let _ = writeln!(
            s,
            "reference outlet pressure {PIPE_STEADY_REFERENCE_BAR} bar: deviation {d:+.4} bar ({} the ±{PIPE_STEADY_REFERENCE_BAND_BAR} bar band)",
            if inside { "inside" } else { "OUTSIDE" }
        );
    }

    let mut snapshot = Trajectory::new(&dae);
    snapshot.times.push(t);
    snapshot.states.push(u);
    let stem = format!("{}_{}_steady", file_stem(&scenario.name), scenario.scheme);
    write_trajectory(&snapshot, out.join(format!("{stem}.csv")), artifacts)?;
    write_text(out.join(format!("{stem}.txt")), &s, artifacts)?;
    Ok(s)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

fn cmd_bench(
    input: &ScenarioArgs,
    schemes: &[Scheme],
    repeats: usize,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<String, Failure> {
    let scenario = load(input)?;
    if repeats == 0 || schemes.is_empty() {
        return Err(Failure::Input("bench needs at least one scheme and one repeat".into()));
    }
    prepare_out(out)?;
    let mut s = format!(
        "scenario {}: wall time of simulate over {repeats} repeat(s)\n",
        scenario.name
    );
    let _ = writeln!(
        s,
        "{:<6} {:>12} {:>12} {:>12}",
        "scheme", "min [s]", "median [s]", "max [s]"
    );
    let mut medians = Vec::new();
    for &sc in schemes {
        let mut times = (0..repeats)
            .map(|_| run_scheme(&scenario, sc).map(|r| r.wall_seconds))
            .collect::<Result<Vec<_>, _>>()?;
        let med = median(&mut times);
        let _ = writeln!(
            s,
            "{:<6} {:>12.4} {:>12.4} {:>12.4}",
            sc.name(),
            times[0],
            med,
            times[times.len() - 1]
        );
        medians.push((sc, med));
    }
    let get = |sc: Scheme| medians.iter().find(|m| m.0 == sc).map(|m| m.1);
    if let (Some(new), Some(mid), Some(end)) = (get(Scheme::New), get(Scheme::Mid), get(Scheme::End)) {
        let _ = writeln!(
            s,
            "check median ordering new <= end < mid: {}",
            pass(new <= end && end < mid)
        );
    }
    write_text(
        out.join(format!("{}_bench.txt", file_stem(&scenario.name))),
        &s,
        artifacts,
    )?;
    Ok(s)
}
