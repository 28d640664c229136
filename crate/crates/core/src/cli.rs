//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::carleson::Variant;
use crate::stopping::DEFAULT_ATOM_BUDGET;
use crate::verify::{
    check_carleson, check_props, check_sparse, derive_seed, gen_instance, CheckResult, Checker, Instance, InstanceError,
    Status, VerifyError, WeightModel,
};
use crate::weights::{SupMode, WeightConstant, Witness};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INVALID: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

/// Environment variable overriding the enumeration budget.
pub const BUDGET_ENV: &str = "FILTERMAX_ATOM_BUDGET";

/// Column order of CSV reports.
pub const CSV_HEADER: [&str; 7] = ["theorem", "seed", "lhs", "rhs", "slack", "mode", "status"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: invalid instance: {source}")]
    Invalid { path: String, source: InstanceError },
    #[error("enumeration infeasible: {0} (rerun with --fallback or --mode heuristic)")]
    Infeasible(String),
    #[error("{0}")]
    Check(VerifyError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Invalid { .. } | CliError::Check(_) => EXIT_INVALID,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "filtermax", version, about = "Bilinear maximal operators on finite filtered spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a random instance on a uniform tree.
    Gen(GenArgs),
    /// Print weight constants of an instance.
    Constants(ConstantsArgs),
    /// Run verification suites on an instance or a seeded ensemble.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ShapeArgs {
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    /// lognormal(s), power(a) or product.
    #[arg(long, default_value = "product")]
    pub model: WeightModel,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    A,
    Rh,
    S,
    B,
    Winf,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct ConstantsArgs {
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Which::All)]
    pub which: Which,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Use the heuristic when exact enumeration is infeasible.
    #[arg(long)]
    pub fallback: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Thm11,
    Thm12,
    Thm14,
    Thm15,
    Sparse,
    Carleson,
    Props,
    All,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Instance file; mutually exclusive with --ensemble.
    #[arg(required_unless_present = "ensemble", conflicts_with = "ensemble")]
    pub instance: Option<PathBuf>,
    /// Master seed and member count of a generated ensemble.
    #[arg(long, num_args = 2, value_names = ["SEED", "COUNT"])]
    pub ensemble: Option<Vec<u64>>,
    /// Seed reported for an instance file.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    #[arg(long)]
    pub fallback: bool,
    #[arg(long, default_value_t = crate::tol::REL_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    let budget = atom_budget()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Constants(a) => cmd_constants(&a, budget),
        Command::Verify(a) => cmd_verify(&a, budget),
    }
}

/// Enumeration budget, from [`BUDGET_ENV`] when set.
pub fn atom_budget() -> Result<usize, CliError> {
    match std::env::var(BUDGET_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Usage(format!("{BUDGET_ENV}: not a count: {s:?}"))),
        Err(_) => Ok(DEFAULT_ATOM_BUDGET),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(io_err(p)),
        None => std::io::stdout().write_all(bytes).map_err(io_err(Path::new("<stdout>"))),
    }
}

pub fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Instance::from_json(&text).map_err(|source| CliError::Invalid { path: path.display().to_string(), source })
}

fn generate(seed: u64, shape: &ShapeArgs) -> Result<Instance, CliError> {
    gen_instance(seed, shape.depth, shape.branching, shape.model, shape.p1, shape.p2).map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_gen(a: &GenArgs) -> Result<i32, CliError> {
    let inst = generate(a.seed, &a.shape)?;
    let mut json = inst.to_json();
    json.push('\n');
    write_output(a.out.as_deref(), json.as_bytes())?;
    let atoms: usize = inst.space.levels().iter().map(Vec::len).sum();
    let summary = format!(
        "points {}, atoms {}, window L = {}, p1 = {}, p2 = {}, model {}",
        inst.space.n_points(),
        atoms,
        inst.space.depth(),
        inst.exps.p1,
        inst.exps.p2,
        a.shape.model
    );
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(EXIT_PASS)
}

fn witness_str(w: &Witness) -> String {
    match w {
        Witness::Atom { level, atom } => format!("atom {level}:{atom}"),
        Witness::StoppingTime(tau) => format!("tail {}", tau.tail_set()),
    }
}

fn sup_mode(mode: ModeArg, budget: usize) -> SupMode {
    match mode {
        ModeArg::Exact => SupMode::Exact { budget },
        ModeArg::Heuristic => SupMode::Heuristic,
    }
}

fn constants_for(checker: &Checker, which: Which) -> Result<Vec<WeightConstant>, VerifyError> {
    let mut out = Vec::new();
    let all = which == Which::All;
    if all || which == Which::A {
        out.push(checker.a().clone());
    }
    if all || which == Which::Rh {
        out.push(checker.rh()?.clone());
    }
    if all || which == Which::S {
        out.push(checker.s()?.clone());
    }
    if all || which == Which::B {
        out.push(checker.b().clone());
    }
    if all || which == Which::Winf {
        out.push(checker.w_infty()?.clone());
    }
    Ok(out)
}

fn cmd_constants(a: &ConstantsArgs, budget: usize) -> Result<i32, CliError> {
    let inst = load_instance(&a.instance)?;
    let checker = Checker::new(&inst, sup_mode(a.mode, budget));
    let rows = match constants_for(&checker, a.which) {
        Ok(rows) => rows,
        Err(e) if e.is_infeasible() && a.fallback => {
            constants_for(&Checker::new(&inst, SupMode::Heuristic), a.which).map_err(CliError::Check)?
        }
        Err(e) if e.is_infeasible() => return Err(CliError::Infeasible(e.to_string())),
        Err(e) => return Err(CliError::Check(e)),
    };
    let bytes = match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| CliError::Io { path: "<csv>".into(), source: e.into() };
            w.write_record(["name", "value", "mode", "witness"]).map_err(csv_err)?;
            for c in &rows {
                w.write_record([c.name.to_string(), c.value.to_string(), c.mode.as_str().to_string(), witness_str(&c.witness)])
                    .map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| CliError::Io { path: "<csv>".into(), source: e.into_error() })?
        }
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|c| {
                    serde_json::json!({"name": c.name, "value": c.value, "mode": c.mode.as_str(), "witness": witness_str(&c.witness)})
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&v).expect("rows serialize");
            s.push('\n');
            s.into_bytes()
        }
    };
    write_output(a.out.as_deref(), &bytes)?;
    Ok(EXIT_PASS)
}

fn wants(suite: Suite, s: Suite) -> bool {
    suite == Suite::All || suite == s
}

/// Rows of `suite` for one instance. Product-weight-only checks are
/// skipped on other instances.
pub fn run_suite(inst: &Instance, suite: Suite, mode: SupMode, tol: f64) -> Result<Vec<CheckResult>, VerifyError> {
    let checker = Checker::new(inst, mode).with_tol(tol);
    let mut rows = Vec::new();
    if wants(suite, Suite::Thm11) {
        if inst.product_weight {
            for (f1, f2) in &inst.tests {
                rows.push(checker.thm11_forward(f1, f2)?);
            }
            rows.push(checker.cor53()?);
        }
        rows.push(checker.thm11_converse()?);
    }
    if wants(suite, Suite::Thm12) {
        rows.push(checker.thm12_attained()?);
        for (f1, f2) in &inst.tests {
            rows.push(checker.thm12_bound(f1, f2)?);
        }
    }
    if wants(suite, Suite::Thm14) {
        for (f1, f2) in &inst.tests {
            rows.push(checker.thm14(f1, f2)?);
        }
    }
    if wants(suite, Suite::Thm15) {
        for (f1, f2) in &inst.tests {
            rows.push(checker.thm15(f1, f2)?);
        }
    }
    if wants(suite, Suite::Sparse) {
        for (f1, f2) in &inst.tests {
            rows.push(check_sparse(inst, f1, f2, tol)?);
        }
    }
    if wants(suite, Suite::Carleson) {
        for (f1, f2) in &inst.tests {
            rows.push(check_carleson(inst, f1, f2, Variant::PBased, mode, tol)?);
            rows.push(check_carleson(inst, f1, f2, Variant::ExitBased, mode, tol)?);
        }
    }
    if wants(suite, Suite::Props) {
        for (f1, f2) in &inst.tests {
            rows.push(check_props(inst, f1, f2)?);
        }
    }
    Ok(rows)
}

fn verify_one(inst: &Instance, seed: u64, a: &VerifyArgs, budget: usize) -> Result<Vec<CheckResult>, CliError> {
    let rows = match run_suite(inst, a.suite, sup_mode(a.mode, budget), a.tol) {
        Ok(rows) => rows,
        Err(e) if e.is_infeasible() && a.fallback => run_suite(inst, a.suite, SupMode::Heuristic, a.tol).map_err(CliError::Check)?,
        Err(e) if e.is_infeasible() => return Err(CliError::Infeasible(format!("seed {seed}: {e}"))),
        Err(e) => return Err(CliError::Check(e)),
    };
    Ok(rows
        .into_iter()
        .map(|mut r| {
            r.seed = seed;
            r
        })
        .collect())
}

/// Report bytes for `rows` in the given format.
pub fn render_report(rows: &[CheckResult], format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for r in rows {
                w.write_record([
                    r.theorem.clone(),
                    r.seed.to_string(),
                    r.lhs.to_string(),
                    r.rhs.to_string(),
                    r.slack.to_string(),
                    r.mode.as_str().to_string(),
                    r.status.as_str().to_string(),
                ])
                .expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s.into_bytes()
        }
    }
}

fn replay_dir(out: Option<&Path>) -> PathBuf {
    out.and_then(Path::parent).filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn cmd_verify(a: &VerifyArgs, budget: usize) -> Result<i32, CliError> {
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if !(a.tol.is_finite() && a.tol >= 0.0) {
        return Err(CliError::Usage("--tol must be a nonnegative number".into()));
    }
    let members: Vec<(u64, Instance)> = match (&a.instance, &a.ensemble) {
        (Some(path), _) => vec![(a.seed, load_instance(path)?)],
        (None, Some(e)) => {
            let (master, count) = (e[0], e[1]);
            (0..count)
                .map(|k| {
                    let seed = derive_seed(master, k);
                    generate(seed, &a.shape).map(|inst| (seed, inst))
                })
                .collect::<Result<_, _>>()?
        }
        (None, None) => return Err(CliError::Usage("an instance path or --ensemble is required".into())),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<CheckResult>, CliError>> =
        pool.install(|| members.par_iter().map(|(seed, inst)| verify_one(inst, *seed, a, budget)).collect());
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|x, y| (x.seed, &x.theorem).cmp(&(y.seed, &y.theorem)));
    write_output(a.out.as_deref(), &render_report(&rows, a.format))?;

    let count = |s: Status| rows.iter().filter(|r| r.status == s).count();
    eprintln!(
        "{} rows: {} pass, {} fail, {} inconclusive",
        rows.len(),
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Inconclusive)
    );
    let written = write_replays(&rows, &members, &replay_dir(a.out.as_deref()))?;
    for path in &written {
        eprintln!("falsified; replay instance written to {}", path.display());
    }
    Ok(if written.is_empty() { EXIT_PASS } else { EXIT_FALSIFIED })
}

/// Writes `filtermax-replay-<seed>.json` into `dir` for every seed with a
/// failing row and returns the paths.
pub fn write_replays(rows: &[CheckResult], members: &[(u64, Instance)], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut failed: Vec<u64> = rows.iter().filter(|r| r.status == Status::Fail).map(|r| r.seed).collect();
    failed.sort_unstable();
    failed.dedup();
    let mut out = Vec::new();
    for seed in failed {
        let Some((_, inst)) = members.iter().find(|(s, _)| *s == seed) else { continue };
        let path = dir.join(format!("filtermax-replay-{seed}.json"));
        fs::write(&path, inst.to_json() + "\n").map_err(io_err(&path))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::FilteredSpace;

    #[test]
    fn parses_ensemble_and_suite() {
        let cli = Cli::try_parse_from(["filtermax", "verify", "--ensemble", "7", "3", "--suite", "sparse", "--jobs", "2"]).unwrap();
        let Command::Verify(a) = cli.command else { panic!("verify expected") };
        assert_eq!(a.ensemble, Some(vec![7, 3]));
        assert_eq!(a.suite, Suite::Sparse);
        assert_eq!(a.jobs, 2);
        assert_eq!(a.tol, 1e-9);
    }

    #[test]
    fn verify_needs_a_source() {
        assert!(Cli::try_parse_from(["filtermax", "verify"]).is_err());
        assert!(Cli::try_parse_from(["filtermax", "verify", "x.json", "--ensemble", "1", "2"]).is_err());
    }

    #[test]
    fn bad_model_is_a_usage_error() {
        assert_eq!(run_from(["filtermax", "gen", "--model", "gaussian"]), EXIT_USAGE);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Infeasible("x".into()).exit_code(), 5);
    }

    #[test]
    fn sparse_row_on_dyadic_example() {
        let space = FilteredSpace::uniform_tree(2, 2);
        let n = space.n_points();
        let mut inst = Instance::unit(space);
        let mut f = vec![0.0; n];
        f[0] = 1.0;
        let f = crate::space::PointFn::new(f).unwrap();
        inst = inst.with_tests(vec![(f.clone(), f)]).unwrap();
        let rows = run_suite(&inst, Suite::Sparse, SupMode::exact(), 1e-9).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].status, Status::Pass);
    }

    #[test]
    fn csv_header_is_fixed() {
        let bytes = render_report(&[], Format::Csv);
        assert_eq!(String::from_utf8(bytes).unwrap(), "theorem,seed,lhs,rhs,slack,mode,status\n");
    }

    #[test]
    fn replay_written_for_failing_seed_only() {
        let dir = tempfile::tempdir().unwrap();
        let inst = Instance::unit(FilteredSpace::uniform_tree(1, 2));
        let members = vec![(3, inst.clone()), (4, inst.clone())];
        let f = crate::space::PointFn::constant(2, 1.0);
        let mut rows = vec![Checker::new(&inst, SupMode::exact()).thm14(&f, &f).unwrap()];
        rows[0].seed = 4;
        assert!(write_replays(&rows, &members, dir.path()).unwrap().is_empty());
        rows[0].status = Status::Fail;
        let paths = write_replays(&rows, &members, dir.path()).unwrap();
        assert_eq!(paths, vec![dir.path().join("filtermax-replay-4.json")]);
        let back = Instance::from_json(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn replay_dir_defaults_to_cwd() {
        assert_eq!(replay_dir(None), PathBuf::from("."));
        assert_eq!(replay_dir(Some(Path::new("r.csv"))), PathBuf::from("."));
        assert_eq!(replay_dir(Some(Path::new("/tmp/x/r.csv"))), PathBuf::from("/tmp/x"));
    }
}
