//! `postlie` command-line front end.
//!
//! Exit status: 0 on success, 1 when a verification fails or a run cannot
//! complete, 2 on usage errors (bad flags, malformed codes or JSON).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::{json, Value};

use postlie::forest_algebra::{graft, ForestVector, TruncatedSeries};
use postlie::geometry::spec::FieldSpec;
use postlie::geometry::{Backend, Point, VectorField};
use postlie::integrators::{convergence_table, exact_flow_oracle, integrate, Method, MIN_ORACLE_TOL};
use postlie::trees::{enumerate_trees, Alphabet, Tree};
use postlie::verify::{self, Criterion, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "postlie", version, about = "Post-Lie algebra and Lie–Butcher series toolkit")]
struct Cli {
    /// Seed for all sampling; POSTLIE_SEED takes precedence.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the primary result here instead of stdout. Sidecar JSON goes
    /// next to it with a `.json` extension.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate planar trees.
    Trees {
        #[command(subcommand)]
        action: TreesAction,
    },
    /// Exact operations on forest vectors.
    Algebra(AlgebraArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Integrate a vector field with a frozen-field stepper.
    Integrate(IntegrateArgs),
    /// Convergence study of a stepper against the exact-flow oracle.
    Convergence(ConvergenceArgs),
}

#[derive(Subcommand)]
enum TreesAction {
    Enumerate {
        /// Comma-separated color names.
        #[arg(long, default_value = "a")]
        colors: String,
        #[arg(long, default_value_t = 4)]
        max_grade: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgebraOp {
    /// Tree grafting `lhs ⊳ rhs` on single trees.
    Graft,
    /// Extended `lhs ⊳ rhs` on forest vectors.
    Triangle,
    Concat,
    /// Grossman–Larson product.
    Gl,
    /// Commutator under concatenation.
    Bracket,
    /// `exp^∗(lhs)` truncated at `--order`.
    Exp,
    /// `exp^·(lhs)` truncated at `--order`.
    ExpDot,
}

#[derive(Args)]
struct AlgebraArgs {
    op: AlgebraOp,
    /// Forest code such as `a[a[]]b[]`, or a forest vector in JSON.
    #[arg(long)]
    lhs: String,
    #[arg(long)]
    rhs: Option<String>,
    #[arg(long, default_value_t = 4)]
    order: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendName {
    Sphere,
    So3,
    Flat,
}

#[derive(Args)]
struct VerifyArgs {
    /// Criterion name or number (1-12), or `all`.
    criterion: String,
    /// Backend for `theorem1`; without it all three standard runs are made.
    #[arg(long, value_enum)]
    backend: Option<BackendName>,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = verify::THEOREM1_SAMPLES)]
    samples: usize,
    /// Override the residual tolerance of a single-backend `theorem1` run.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct FlowArgs {
    /// Field specification: inline JSON or `@path`.
    #[arg(long)]
    field: String,
    /// Initial point, comma-separated ambient coordinates; defaults to the
    /// backend origin.
    #[arg(long)]
    p0: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    t1: f64,
    #[arg(long, default_value = "frozen-midpoint")]
    method: String,
}

#[derive(Args)]
struct IntegrateArgs {
    #[command(flatten)]
    flow: FlowArgs,
    #[arg(long, default_value_t = 64)]
    steps: usize,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    flow: FlowArgs,
    /// Comma-separated step counts in geometric progression.
    #[arg(long, default_value = "16,32,64,128,256,512")]
    steps: String,
}

enum Failure {
    Usage(String),
    Run(String),
    Verification,
}

type Outcome = Result<(), Failure>;

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn run_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Run(e.to_string())
}

struct Sink {
    output: Option<PathBuf>,
}

impl Sink {
    fn primary(&self, text: &str) -> Outcome {
        match &self.output {
            Some(path) => fs::write(path, text).map_err(run_err),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes()).map_err(run_err)
            }
        }
    }

    /// Sidecar JSON: next to `--output`, otherwise on stderr.
    fn sidecar(&self, value: &Value) -> Outcome {
        let text = serde_json::to_string_pretty(value).map_err(run_err)? + "\n";
        match &self.output {
            Some(path) => fs::write(path.with_extension("json"), text).map_err(run_err),
            None => {
                eprint!("{text}");
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let seed = match std::env::var("POSTLIE_SEED") {
        Ok(s) => match s.trim().parse() {
            Ok(v) => v,
            Err(_) => {
                eprintln!("error: POSTLIE_SEED must be an unsigned 64-bit integer, got {s:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => cli.seed,
    };
    let sink = Sink { output: cli.output };
    let result = match cli.command {
        Command::Trees { action } => trees(action, &sink),
        Command::Algebra(a) => algebra(a, &sink),
        Command::Verify(v) => verify_cmd(v, seed, &sink),
        Command::Integrate(i) => integrate_cmd(i, &sink),
        Command::Convergence(c) => convergence_cmd(c, &sink),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn trees(action: TreesAction, sink: &Sink) -> Outcome {
    let TreesAction::Enumerate { colors, max_grade, json } = action;
    let names: Vec<&str> = colors.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let alphabet = Alphabet::new(&names).map_err(usage)?;
    if max_grade == 0 {
        return Err(usage("--max-grade must be at least 1"));
    }
    let mut by_grade = Vec::new();
    for g in 1..=max_grade {
        by_grade.push(enumerate_trees(&alphabet, g).map_err(usage)?);
    }
    let text = if json {
        let grades: Vec<Value> = by_grade
            .iter()
            .enumerate()
            .map(|(i, ts)| json!({"grade": i + 1, "count": ts.len(), "trees": ts.iter().map(Tree::code).collect::<Vec<_>>()}))
            .collect();
        serde_json::to_string_pretty(&json!({"colors": names, "grades": grades})).map_err(run_err)? + "\n"
    } else {
        let mut s = String::new();
        for (i, ts) in by_grade.iter().enumerate() {
            for t in ts {
                s.push_str(&format!("{}\t{}\n", i + 1, t.code()));
            }
            s.push_str(&format!("grade {}: {} trees\n", i + 1, ts.len()));
        }
        s
    };
    sink.primary(&text)
}

fn parse_vector(s: &str) -> Result<ForestVector, Failure> {
    let s = s.trim();
    if s.starts_with('{') {
        ForestVector::from_json_str(s).map_err(usage)
    } else {
        ForestVector::parse(s).map_err(usage)
    }
}

fn algebra(a: AlgebraArgs, sink: &Sink) -> Outcome {
    let rhs = || -> Result<&str, Failure> { a.rhs.as_deref().ok_or_else(|| usage("this operation needs --rhs")) };
    let result = match a.op {
        AlgebraOp::Graft => {
            let l = Tree::parse(&a.lhs).map_err(usage)?;
            let r = Tree::parse(rhs()?).map_err(usage)?;
            graft(&l, &r)
        }
        AlgebraOp::Triangle => parse_vector(&a.lhs)?.triangle(&parse_vector(rhs()?)?),
        AlgebraOp::Concat => parse_vector(&a.lhs)?.concat(&parse_vector(rhs()?)?),
        AlgebraOp::Gl => parse_vector(&a.lhs)?.gl_product(&parse_vector(rhs()?)?),
        AlgebraOp::Bracket => parse_vector(&a.lhs)?.lie_bracket(&parse_vector(rhs()?)?),
        AlgebraOp::Exp | AlgebraOp::ExpDot => {
            let alpha = TruncatedSeries::new(a.order, parse_vector(&a.lhs)?).map_err(usage)?;
            let e = match a.op {
                AlgebraOp::Exp => alpha.exp_star(a.order),
                _ => alpha.exp_dot(a.order),
            }
            .map_err(usage)?;
            e.coefficients().clone()
        }
    };
    let op = a.op.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let out = json!({
        "op": op,
        "lhs": a.lhs,
        "rhs": a.rhs,
        "result": result.to_json(),
        "text": result.to_string(),
    });
    sink.primary(&(serde_json::to_string_pretty(&out).map_err(run_err)? + "\n"))
}

fn backend_of(name: BackendName, m: usize) -> Result<Backend, Failure> {
    match name {
        BackendName::Sphere if m >= 1 => Ok(Backend::Sphere { m }),
        BackendName::Flat if m >= 1 => Ok(Backend::EuclideanFlat { m }),
        BackendName::So3 => Ok(Backend::RotationGroupFlat),
        _ => Err(usage("--m must be at least 1")),
    }
}

fn verify_cmd(v: VerifyArgs, seed: u64, sink: &Sink) -> Outcome {
    if v.criterion.eq_ignore_ascii_case("all") {
        let reports = verify::run_all(seed).map_err(run_err)?;
        for r in &reports {
            eprintln!("{}", r.line());
        }
        let pass = reports.iter().all(|r| r.pass);
        sink.primary(
            &(serde_json::to_string_pretty(&json!({"seed": seed, "reports": reports})).map_err(run_err)? + "\n"),
        )?;
        return if pass { Ok(()) } else { Err(Failure::Verification) };
    }
    let criterion: Criterion = v.criterion.parse().map_err(usage)?;
    if criterion == Criterion::Theorem1 {
        if let Some(name) = v.backend {
            let backend = backend_of(name, v.m)?;
            let mut report = verify::theorem1(backend, v.samples, seed).map_err(run_err)?;
            if let Some(tol) = v.tolerance {
                report.tolerance = tol;
                report.pass = report.max_residuals.max() <= tol;
            }
            sink.primary(&(serde_json::to_string_pretty(&report).map_err(run_err)? + "\n"))?;
            return if report.pass { Ok(()) } else { Err(Failure::Verification) };
        }
    }
    let report = verify::run(criterion, seed).map_err(run_err)?;
    eprintln!("{}", report.line());
    sink.primary(&(serde_json::to_string_pretty(&report).map_err(run_err)? + "\n"))?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

struct Problem {
    spec: FieldSpec,
    field: VectorField,
    p0: Point,
    method: Method,
}

fn read_field(arg: &str) -> Result<String, Failure> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(Path::new(path)).map_err(|e| usage(format!("{path}: {e}"))),
        None => Ok(arg.to_string()),
    }
}

fn problem(flow: &FlowArgs) -> Result<Problem, Failure> {
    let spec = FieldSpec::parse(&read_field(&flow.field)?).map_err(usage)?;
    let field = spec.build().map_err(usage)?;
    let backend = spec.backend();
    let p0 = match &flow.p0 {
        None => backend.origin(),
        Some(s) => {
            let xs: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| usage(format!("--p0: {e}"))))
                .collect::<Result<_, _>>()?;
            Point::new(backend, DVector::from_vec(xs)).map_err(usage)?
        }
    };
    let method: Method = flow.method.parse().map_err(usage)?;
    if !(flow.t1.is_finite() && flow.t1 > 0.0) {
        return Err(usage("--t1 must be positive"));
    }
    Ok(Problem { spec, field, p0, method })
}

fn spec_value(spec: &FieldSpec) -> Value {
    serde_json::from_str(&spec.to_json()).unwrap_or(Value::Null)
}

fn integrate_cmd(args: IntegrateArgs, sink: &Sink) -> Outcome {
    let pr = problem(&args.flow)?;
    if args.steps == 0 {
        return Err(usage("--steps must be positive"));
    }
    let traj = integrate(&pr.field, &pr.p0, args.flow.t1, args.steps, pr.method).map_err(run_err)?;
    let exact = exact_flow_oracle(&pr.field, &pr.p0, args.flow.t1, MIN_ORACLE_TOL).map_err(run_err)?;
    sink.primary(&traj.to_csv())?;
    sink.sidecar(&json!({
        "method": pr.method.name(),
        "h": traj.h,
        "steps": args.steps,
        "t1": args.flow.t1,
        "backend": pr.spec.backend().name(),
        "field": spec_value(&pr.spec),
        "endpoint_error_vs_oracle": traj.endpoint().distance_to(&exact),
        "manifold_defect": traj.manifold_defect(),
    }))
}

fn convergence_cmd(args: ConvergenceArgs, sink: &Sink) -> Outcome {
    let pr = problem(&args.flow)?;
    let steps: Vec<usize> = args
        .steps
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| usage(format!("--steps: {e}"))))
        .collect::<Result<_, _>>()?;
    let table = convergence_table(&pr.field, &pr.p0, args.flow.t1, pr.method, &steps).map_err(usage)?;
    sink.primary(&table.to_csv())?;
    sink.sidecar(&json!({
        "method": pr.method.name(),
        "t1": args.flow.t1,
        "backend": pr.spec.backend().name(),
        "field": spec_value(&pr.spec),
        "steps": steps,
        "slope": table.slope,
    }))
}
