mod check;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use genham::dynamics::{
    conservation_report, integrate, vector_field_of, verify_flattening, FlowRoute, Method,
    SystemSpec,
};
use genham::hdw::{hamiltonian_form_at, solve_hdw_value};
use genham::sample::PRNG_NAME;
use genham::systems::{build, catalog, Builtin};
use genham::Error;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "genham",
    version,
    about = "Generalized Hamiltonian systems: identity checks, HDW solves, trajectories"
)]
struct Cli {
    /// JSON system definition, used instead of a built-in name.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Also write the report as JSON to this path.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run structural identity checks at sampled points.
    Check {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Comma-separated subset of closure,jacobi,fundamental,measure,routes.
        #[arg(long, value_delimiter = ',')]
        identities: Option<Vec<String>>,
    },
    /// Integrate a trajectory and report conservation drift.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x0: Vec<f64>,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Rk4)]
        method: MethodArg,
        /// Relative tolerance for rkf45.
        #[arg(long, default_value_t = 1e-9)]
        rtol: f64,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the HDW equation at one point.
    Solve {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        point: Vec<f64>,
    },
    /// Check a Moser flattening at sampled points.
    Flatten {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = RouteArg::ClosedForm)]
        route: RouteArg,
        /// Points must satisfy every positivity constraint by this margin.
        #[arg(long, default_value_t = 0.1)]
        margin: f64,
    },
    /// List built-in systems and flattening examples.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rk4,
    Rkf45,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    ClosedForm,
    Numeric,
}

/// Built-in name plus its parameters; only the flags given are forwarded.
#[derive(Args)]
struct SystemArgs {
    name: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long = "H", allow_hyphen_values = true)]
    h: Option<String>,
    #[arg(long = "Psi", allow_hyphen_values = true)]
    psi: Option<String>,
    #[arg(long = "B1", allow_hyphen_values = true)]
    b1: Option<String>,
    #[arg(long = "B2", allow_hyphen_values = true)]
    b2: Option<String>,
    #[arg(long = "B3", allow_hyphen_values = true)]
    b3: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    f: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
}

impl SystemArgs {
    fn parameters(&self) -> BTreeMap<String, String> {
        let named = [
            ("lambda", &self.lambda),
            ("n", &self.n),
            ("k", &self.k),
            ("H", &self.h),
            ("Psi", &self.psi),
            ("B1", &self.b1),
            ("B2", &self.b2),
            ("B3", &self.b3),
            ("f", &self.f),
            ("g", &self.g),
        ];
        named
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

/// Failure classes, each with its exit code.
enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_)
            | Error::Index(_)
            | Error::InvalidDegree { .. }
            | Error::Invalid(_)
            | Error::OutsideDomain { .. }
            | Error::Config { .. }
            | Error::Duality { .. }
            | Error::SingularChart(_) => Failure::Input(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn write_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("cannot write {}: {e}", path.display()))
}

type Outcome = Result<bool, Failure>;

/// stdout output that tolerates a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout().lock(), $($arg)*);
    }};
}

fn resolve(cli: &Cli, args: &SystemArgs) -> Result<Builtin, Failure> {
    match (&cli.config, &args.name) {
        (Some(_), Some(name)) => Err(Failure::Input(format!(
            "give either a built-in name or --config, not both (got `{name}`)"
        ))),
        (Some(path), None) => {
            if !args.parameters().is_empty() {
                return Err(Failure::Input(
                    "built-in parameters cannot be combined with --config".into(),
                ));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            Ok(Builtin::System(genham::config::load_system(&text)?))
        }
        (None, Some(name)) => Ok(build(name, &args.parameters())?),
        (None, None) => Err(Failure::Input(
            "no system given: pass a built-in name or --config PATH".into(),
        )),
    }
}

fn resolve_system(cli: &Cli, args: &SystemArgs) -> Result<SystemSpec, Failure> {
    match resolve(cli, args)? {
        Builtin::System(s) => Ok(s),
        Builtin::Moser(m) => Err(Failure::Input(format!(
            "`{}` is a flattening example; use `flatten`",
            m.name
        ))),
    }
}

fn write_json(cli: &Cli, value: &serde_json::Value) -> Result<(), Failure> {
    if let Some(path) = &cli.json {
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        std::fs::write(path, text + "\n").map_err(|e| write_failure(path, e))?;
    }
    Ok(())
}

fn header(command: &str, system: &str, cli: &Cli) -> String {
    format!(
        "# genham {command} system={system} seed={} prng=\"{PRNG_NAME}\"",
        cli.seed
    )
}

fn run_list(out: &mut impl Write) -> io::Result<()> {
    writeln!(
        out,
        "{:<14} {:>2} {:>2}  {:<44}  description",
        "name", "n", "k", "parameters (defaults)"
    )?;
    for e in catalog() {
        let params: Vec<String> = e
            .parameters
            .iter()
            .map(|(p, d)| format!("{p}={d}"))
            .collect();
        writeln!(
            out,
            "{:<14} {:>2} {:>2}  {:<44}  {}",
            e.name,
            e.n,
            e.k,
            params.join(" "),
            e.description
        )?;
    }
    Ok(())
}

fn run_simulate(
    cli: &Cli,
    args: &SystemArgs,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: Method,
    out: Option<&Path>,
) -> Outcome {
    let sys = resolve_system(cli, args)?;
    if x0.len() != sys.n {
        return Err(Failure::Input(format!(
            "--x0 has {} entries, {} has n = {}",
            x0.len(),
            sys.name,
            sys.n
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite() && dt > 0.0 && dt.is_finite()) {
        return Err(Failure::Input(format!(
            "need positive finite --t-end and --dt, got {t_end} and {dt}"
        )));
    }
    let (trajectory, error) = match integrate(&sys, x0, t_end, dt, method) {
        Ok(t) => (t, None),
        Err(f) => match f.partial {
            Some(p) => (p, Some(f.error)),
            None => return Err(f.error.into()),
        },
    };
    let csv_result = match out {
        Some(path) => File::create(path)
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                trajectory.write_csv(&mut w)?;
                w.flush()
            })
            .map_err(|e| write_failure(path, e)),
        None => trajectory
            .write_csv(io::stdout().lock())
            .map_err(|e| Failure::Runtime(e.to_string())),
    };
    csv_result?;
    // Keep stdout pure CSV when it carries the trajectory.
    let mut log: Box<dyn Write> = if out.is_some() {
        Box::new(io::stdout().lock())
    } else {
        Box::new(io::stderr().lock())
    };
    let report = conservation_report(&trajectory, &sys)?;
    let _ = writeln!(
        log,
        "{}: {} steps with {}, t = {}",
        sys.name,
        report.steps,
        method.name(),
        trajectory.times.last().copied().unwrap_or(0.0)
    );
    for d in &report.drifts {
        let _ = writeln!(
            log,
            "  drift {:<8} {:.3e} (initial {})",
            d.name, d.max_relative_drift, d.initial
        );
    }
    let _ = writeln!(
        log,
        "  divergence integral {:.3e}",
        report.divergence_integral
    );
    write_json(
        cli,
        &json!({ "system": sys.name, "method": method.name(), "conservation": report, "truncation": trajectory.truncation, "error": error.as_ref().map(|e| e.to_string()) }),
    )?;
    if let Some(cut) = &trajectory.truncation {
        let _ = writeln!(log, "truncated at t = {}: {}", cut.t, cut.reason);
        return Err(Failure::Runtime(format!(
            "trajectory stopped at t = {} before t-end = {t_end}",
            cut.t
        )));
    }
    if let Some(e) = error {
        return Err(Failure::Runtime(format!(
            "{e} (partial trajectory of {} steps written)",
            trajectory.len()
        )));
    }
    Ok(true)
}

/// Drops the sign of negative zeros for display.
fn tidy(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x + 0.0).collect()
}

fn run_solve(cli: &Cli, args: &SystemArgs, point: &[f64]) -> Outcome {
    let sys = resolve_system(cli, args)?;
    let value = match vector_field_of(&sys, point) {
        Ok(r) => {
            let solve = r.solve.as_ref();
            json!({
                "system": sys.name,
                "point": point,
                "route": r.route,
                "X": tidy(&r.x),
                "consistent": solve.map_or(true, |s| s.consistent),
                "residual": solve.map(|s| s.residual),
                "kernel_dim": solve.map(|s| s.kernel_dim),
                "rank": solve.map(|s| s.rank),
                "unique": solve.map(|s| s.unique),
                "surjectivity_possible": solve.map(|s| s.surjectivity_possible),
                "X_min_norm": solve.and_then(|s| s.x.as_deref().map(tidy)),
                "agreement_residual": r.agreement_residual,
            })
        }
        Err(Error::Inconsistent { .. }) => {
            let route = sys.form_route().expect("only form solves are inconsistent");
            let w = sys
                .form()
                .expect("form route")
                .eval(point, &sys.params)
                .map_err(Error::from)?;
            let sigma = hamiltonian_form_at(&route.hamiltonians, sys.n, point, &sys.params)?;
            let s = solve_hdw_value(&w, &sigma, cli.tol)?;
            json!({
                "system": sys.name,
                "point": point,
                "route": "form",
                "X": null,
                "consistent": false,
                "residual": s.residual,
                "kernel_dim": s.kernel_dim,
                "rank": s.rank,
                "unique": false,
                "surjectivity_possible": s.surjectivity_possible,
                "X_min_norm": null,
                "agreement_residual": null,
            })
        }
        Err(e) => return Err(e.into()),
    };
    say!(
        "{}",
        serde_json::to_string_pretty(&value).expect("reports serialize")
    );
    write_json(cli, &value)?;
    Ok(value["consistent"].as_bool() == Some(true))
}

fn run_flatten(
    cli: &Cli,
    args: &SystemArgs,
    t: f64,
    samples: usize,
    route: FlowRoute,
    margin: f64,
) -> Outcome {
    let problem = match resolve(cli, args)? {
        Builtin::Moser(m) => m,
        Builtin::System(s) => {
            return Err(Failure::Input(format!(
                "`{}` is not a flattening example",
                s.name
            )))
        }
    };
    if !t.is_finite() {
        return Err(Failure::Input(format!("--t must be finite, got {t}")));
    }
    let points = problem.sample_points(samples, cli.seed, margin)?;
    let residual = verify_flattening(&problem, &problem.w, t, &points, route)?;
    let pass = residual <= cli.tol;
    let route_name = match route {
        FlowRoute::ClosedForm => "closed-form",
        FlowRoute::Numeric => "numeric",
    };
    say!("{}", header("flatten", &problem.name, cli));
    say!("t = {t}, {samples} points, {route_name} flow");
    say!(
        "max |pullback - w0| = {residual:.3e}  {}",
        if pass { "PASS" } else { "FAIL" }
    );
    write_json(
        cli,
        &json!({ "system": problem.name, "seed": cli.seed, "prng": PRNG_NAME, "t": t, "samples": samples, "route": route, "residual": residual, "tolerance": cli.tol, "pass": pass }),
    )?;
    Ok(pass)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::List => {
            run_list(&mut io::stdout().lock()).map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok(true)
        }
        Command::Check {
            system,
            samples,
            identities,
        } => {
            let sys = resolve_system(cli, system)?;
            let selected = check::select(identities.as_deref())?;
            let summary = check::run(&sys, &selected, *samples, cli.seed, cli.tol)?;
            say!("{}", header("check", &sys.name, cli));
            let _ = write!(io::stdout().lock(), "{}", summary.table());
            write_json(
                cli,
                &serde_json::to_value(&summary).expect("reports serialize"),
            )?;
            Ok(summary.pass)
        }
        Command::Simulate {
            system,
            x0,
            t_end,
            dt,
            method,
            rtol,
            out,
        } => {
            let method = match method {
                MethodArg::Rk4 => Method::Rk4,
                MethodArg::Rkf45 => Method::Rkf45 { rtol: *rtol },
            };
            run_simulate(cli, system, x0, *t_end, *dt, method, out.as_deref())
        }
        Command::Solve { system, point } => run_solve(cli, system, point),
        Command::Flatten {
            system,
            t,
            samples,
            route,
            margin,
        } => {
            let route = match route {
                RouteArg::ClosedForm => FlowRoute::ClosedForm,
                RouteArg::Numeric => FlowRoute::Numeric,
            };
            run_flatten(cli, system, *t, *samples, route, *margin)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let (Failure::Input(m) | Failure::Runtime(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
