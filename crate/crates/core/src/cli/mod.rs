//! The `cbd` command line.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 capacity exceeded,
//! 3 a requested assertion failed, 4 numerical failure.

pub mod report;
pub mod witness;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::augment::{augment, cells_filled, invariance_row, FillPolicy, InvarianceReport};
use crate::catalog::{
    generate_cyclic, generate_paper_matrix, parse_rational, random_system, CyclicSpec, Pattern,
    RandomShape,
};
use crate::coupling::multimaximal_coupling;
use crate::error::{Error, Result};
use crate::lp::{contextuality_degree_with, LpOptions, DEFAULT_MAX_CELLS, EPS_DEGREE};
use crate::system::{parse_system, serialize_system, ContentId, ContextId, Outcome, System};

#[derive(Parser, Debug)]
#[command(
    name = "cbd",
    version,
    about = "Contextuality analysis of binary content-context systems"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the degree of contextuality of a system
    Analyze(AnalyzeArgs),
    /// Fill the empty cells of a system with deterministic variables
    Augment(AugmentArgs),
    /// Show the multimaximal coupling of one connection
    Couple(CoupleArgs),
    /// Check that augmentation leaves the degree unchanged
    Invariance(InvarianceArgs),
    /// Write a catalog system
    #[command(subcommand)]
    Generate(GenerateCommand),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Table,
    Json,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    system: PathBuf,
    /// Write the minimizing signed joint distribution here
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Exit with status 3 if the system is contextual
    #[arg(long)]
    assert_noncontextual: bool,
    /// Degrees above this count as contextual
    #[arg(long, default_value_t = EPS_DEGREE)]
    tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
    max_cells: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("policy").required(true))]
struct AugmentArgs {
    system: PathBuf,
    /// Value for every empty cell: +1 or -1
    #[arg(long, group = "policy", allow_hyphen_values = true, value_parser = parse_outcome)]
    fill: Option<Outcome>,
    /// JSON map {"fills": [{"content", "context", "value"}]} covering every empty cell
    #[arg(long, group = "policy")]
    per_cell: Option<PathBuf>,
    /// Write the augmented system here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    system: PathBuf,
    #[arg(long)]
    content: String,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Fills {
    Both,
    #[value(name = "+1")]
    Plus,
    #[value(name = "-1")]
    Minus,
}

#[derive(Args, Debug)]
struct InvarianceArgs {
    system: PathBuf,
    /// Random per-cell policies to try
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Uniform policies to try
    #[arg(long, value_enum, default_value_t = Fills::Both, allow_hyphen_values = true)]
    fills: Fills,
    #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
    max_cells: usize,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PaperPmfs {
    /// Perfectly correlated pairs in every context
    Correlated,
    /// Independent fair coins
    Coins,
    /// Every variable constantly +1
    Deterministic,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RandomPattern {
    PaperMatrix,
    Random,
}

#[derive(Subcommand, Debug)]
enum GenerateCommand {
    /// Three contents in four contexts, with two empty cells
    PaperMatrix {
        #[arg(long, value_enum, default_value_t = PaperPmfs::Correlated)]
        pmfs: PaperPmfs,
        /// Four comma-separated masses for one context, repeated for c1..c4
        #[arg(long, num_args = 1)]
        bunch: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cyclic system of rank n
    Cyclic {
        #[arg(long)]
        n: usize,
        /// pr-box, tsirelson or coins
        #[arg(long)]
        preset: Option<String>,
        /// n comma-separated correlations
        #[arg(long, allow_hyphen_values = true)]
        correlations: Option<String>,
        /// 2n comma-separated P[+1] values, two per context
        #[arg(long)]
        marginals: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded random system
    Random {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = RandomPattern::PaperMatrix)]
        pattern: RandomPattern,
        #[arg(long, default_value_t = 3)]
        contents: usize,
        #[arg(long, default_value_t = 3)]
        contexts: usize,
        #[arg(long, default_value_t = 1)]
        empty: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_outcome(s: &str) -> std::result::Result<Outcome, String> {
    match s {
        "+1" | "1" => Ok(Outcome::Plus),
        "-1" => Ok(Outcome::Minus),
        _ => Err(format!("expected +1 or -1, got `{s}`")),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FillMapFile {
    fills: Vec<FillEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FillEntry {
    content: ContentId,
    context: ContextId,
    value: Outcome,
}

pub fn parse_fill_map(text: &str) -> Result<FillPolicy> {
    let file: FillMapFile = serde_json::from_str(text).map_err(crate::system::file::json_error)?;
    let mut map = BTreeMap::new();
    for (i, f) in file.fills.into_iter().enumerate() {
        if map.insert((f.content, f.context), f.value).is_some() {
            return Err(Error::parse(format!("fills[{i}]"), "cell listed twice"));
        }
    }
    Ok(FillPolicy::PerCell(map))
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Capacity { .. } => 2,
        Error::Numerical { .. } => 4,
        _ => 1,
    }
}

fn read_system(path: &Path) -> Result<System> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_system(&text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Either the output of a command or an assertion failure with its message.
enum Status {
    Done,
    AssertionFailed(String),
}

/// Runs `cbd` with `args` (including the program name) and returns the exit
/// status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(Status::Done) => 0,
        Ok(Status::AssertionFailed(message)) => {
            let _ = writeln!(err, "cbd: {message}");
            3
        }
        Err(e) => {
            let _ = writeln!(err, "cbd: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    match command {
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Augment(a) => cmd_augment(&a, out, err),
        Command::Couple(a) => cmd_couple(&a, out),
        Command::Invariance(a) => cmd_invariance(&a, out),
        Command::Generate(g) => cmd_generate(g, out),
    }
}

fn options(max_cells: usize) -> LpOptions {
    LpOptions {
        max_cells,
        ..LpOptions::default()
    }
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<Status> {
    if !(a.tolerance >= 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be nonnegative, got {}",
            a.tolerance
        )));
    }
    let system = read_system(&a.system)?;
    let mut report = contextuality_degree_with(&system, &options(a.max_cells))?;
    report.contextual = report.degree > a.tolerance;
    let witness_path = a.witness.as_ref().map(|p| p.display().to_string());
    if let Some(path) = &a.witness {
        write_file(path, &witness::serialize_witness(&report.witness))?;
    }
    let file = a.system.display().to_string();
    let text = match a.format {
        Format::Table => report::analysis_table(&file, &system, &report, witness_path.as_deref()),
        Format::Json => report::analysis_json(&file, &system, &report, witness_path.as_deref()),
    };
    emit(out, &text)?;
    if a.assert_noncontextual && report.contextual {
        return Ok(Status::AssertionFailed(format!(
            "system is contextual: degree {} exceeds tolerance {}",
            report::fixed(report.degree),
            a.tolerance
        )));
    }
    Ok(Status::Done)
}

fn cmd_augment(a: &AugmentArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    let system = read_system(&a.system)?;
    let policy = match (&a.fill, &a.per_cell) {
        (Some(v), _) => FillPolicy::Uniform(*v),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            parse_fill_map(&text)?
        }
        (None, None) => unreachable!("clap requires a policy"),
    };
    let augmented = augment(&system, &policy)?;
    let text = serialize_system(&augmented);
    let note = format!("cells filled: {}\n", cells_filled(&system));
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            emit(out, &note)?;
        }
        None => {
            emit(out, &text)?;
            err.write_all(note.as_bytes())?;
        }
    }
    Ok(Status::Done)
}

fn cmd_couple(a: &CoupleArgs, out: &mut dyn Write) -> Result<Status> {
    let system = read_system(&a.system)?;
    let view = system.connection(&ContentId::new(a.content.as_str()))?;
    let coupling = multimaximal_coupling(&view)?;
    let text = match a.format {
        Format::Table => report::coupling_text(&view, &coupling)?,
        Format::Json => report::coupling_json(&view, &coupling)?,
    };
    emit(out, &text)?;
    Ok(Status::Done)
}

fn invariance_policies(system: &System, a: &InvarianceArgs) -> Vec<FillPolicy> {
    let mut policies = Vec::new();
    if matches!(a.fills, Fills::Both | Fills::Plus) {
        policies.push(FillPolicy::Uniform(Outcome::Plus));
    }
    if matches!(a.fills, Fills::Both | Fills::Minus) {
        policies.push(FillPolicy::Uniform(Outcome::Minus));
    }
    for k in 0..a.trials as u64 {
        policies.push(FillPolicy::random(system, a.seed.wrapping_add(k)));
    }
    policies
}

fn cmd_invariance(a: &InvarianceArgs, out: &mut dyn Write) -> Result<Status> {
    let system = read_system(&a.system)?;
    let opts = options(a.max_cells);
    let before = contextuality_degree_with(&system, &opts)?.degree;
    let policies = invariance_policies(&system, a);
    let jobs = a.jobs.max(1).min(policies.len().max(1));
    let chunk = policies.len().div_ceil(jobs).max(1);
    // Rows stay in policy order whatever the thread count.
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = policies
            .chunks(chunk)
            .map(|part| {
                let (system, opts) = (&system, &opts);
                scope.spawn(move || {
                    part.iter()
                        .map(|p| invariance_row(system, before, p, opts))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("invariance worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let report = InvarianceReport {
        degree_before: before,
        rows: rows.into_iter().flatten().collect(),
    };
    let file = a.system.display().to_string();
    let text = match a.format {
        Format::Table => report::invariance_table(&file, &system, &report),
        Format::Json => report::invariance_json(&file, &system, &report),
    };
    emit(out, &text)?;
    if !report.all_pass() {
        let failed = report.rows.iter().filter(|r| !r.pass).count();
        return Ok(Status::AssertionFailed(format!(
            "{failed} augmentation(s) changed the degree by more than {}",
            crate::augment::INVARIANCE_TOLERANCE
        )));
    }
    Ok(Status::Done)
}

fn rational_list(text: &str, what: &str) -> Result<Vec<num_rational::Rational64>> {
    text.split(',')
        .map(|t| {
            parse_rational(t.trim())
                .ok_or_else(|| Error::Domain(format!("{what}: `{}` is not a number", t.trim())))
        })
        .collect()
}

fn paper_matrix_pmfs(pmfs: PaperPmfs, bunch: &[String]) -> Result<Vec<Vec<f64>>> {
    if !bunch.is_empty() {
        return bunch
            .iter()
            .map(|b| {
                Ok(rational_list(b, "--bunch")?
                    .into_iter()
                    .map(|r| *r.numer() as f64 / *r.denom() as f64)
                    .collect())
            })
            .collect();
    }
    let pmf = match pmfs {
        PaperPmfs::Correlated => vec![0.5, 0.0, 0.0, 0.5],
        PaperPmfs::Coins => vec![0.25; 4],
        PaperPmfs::Deterministic => vec![1.0, 0.0, 0.0, 0.0],
    };
    Ok(vec![pmf; 4])
}

fn cyclic_spec(
    n: usize,
    preset: Option<&str>,
    correlations: Option<&str>,
    marginals: Option<&str>,
) -> Result<CyclicSpec> {
    let mut spec = match (preset, correlations) {
        (Some(_), Some(_)) => {
            return Err(Error::domain(
                "give either --preset or --correlations, not both",
            ))
        }
        (Some(p), None) => CyclicSpec::preset(p, n)?,
        (None, Some(c)) => CyclicSpec::new(rational_list(c, "--correlations")?),
        (None, None) => return Err(Error::domain("cyclic needs --preset or --correlations")),
    };
    if spec.correlations.len() != n {
        return Err(Error::Domain(format!(
            "{} correlations for rank {n}",
            spec.correlations.len()
        )));
    }
    if let Some(m) = marginals {
        let values = rational_list(m, "--marginals")?;
        if values.len() != 2 * n {
            return Err(Error::Domain(format!(
                "--marginals needs {} values, got {}",
                2 * n,
                values.len()
            )));
        }
        spec.marginals = values.chunks(2).map(|p| (p[0], p[1])).collect();
    }
    Ok(spec)
}

fn cmd_generate(g: GenerateCommand, out: &mut dyn Write) -> Result<Status> {
    let (system, path) = match g {
        GenerateCommand::PaperMatrix { pmfs, bunch, out } => (
            generate_paper_matrix(&paper_matrix_pmfs(pmfs, &bunch)?)?,
            out,
        ),
        GenerateCommand::Cyclic {
            n,
            preset,
            correlations,
            marginals,
            out,
        } => {
            let spec = cyclic_spec(
                n,
                preset.as_deref(),
                correlations.as_deref(),
                marginals.as_deref(),
            )?;
            (generate_cyclic(&spec)?, out)
        }
        GenerateCommand::Random {
            seed,
            pattern,
            contents,
            contexts,
            empty,
            out,
        } => {
            let shape = RandomShape {
                contents,
                contexts,
                pattern: match pattern {
                    RandomPattern::PaperMatrix => Pattern::PaperMatrix,
                    RandomPattern::Random => Pattern::Random { empty },
                },
            };
            (random_system(seed, &shape)?, out)
        }
    };
    let text = serialize_system(&system);
    match path {
        Some(p) => write_file(&p, &text)?,
        None => emit(out, &text)?,
    }
    Ok(Status::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("cbd").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn fill_values_parse() {
        assert_eq!(parse_outcome("+1"), Ok(Outcome::Plus));
        assert_eq!(parse_outcome("-1"), Ok(Outcome::Minus));
        assert!(parse_outcome("0").is_err());
    }

    #[test]
    fn fill_map_rejects_duplicates_and_unknown_fields() {
        let ok = r#"{"fills": [{"content": "q3", "context": "c1", "value": -1}]}"#;
        assert!(matches!(parse_fill_map(ok), Ok(FillPolicy::PerCell(m)) if m.len() == 1));
        let dup = r#"{"fills": [{"content": "q3", "context": "c1", "value": 1},
                                {"content": "q3", "context": "c1", "value": -1}]}"#;
        assert!(matches!(parse_fill_map(dup), Err(Error::Parse { .. })));
        let extra = r#"{"fills": [], "note": 1}"#;
        assert!(matches!(parse_fill_map(extra), Err(Error::Parse { .. })));
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        let (code, _, err) = run_capture(&["analyze"]);
        assert_eq!(code, 1);
        assert!(err.contains("Usage"));
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("analyze"));
    }

    #[test]
    fn generate_to_stdout_parses_back() {
        let (code, out, _) =
            run_capture(&["generate", "cyclic", "--n", "3", "--correlations", "1,1,-1"]);
        assert_eq!(code, 0);
        let s = parse_system(&out).unwrap();
        assert_eq!(s.contexts().len(), 3);
        let (code, _, err) = run_capture(&["generate", "cyclic", "--n", "3"]);
        assert_eq!(code, 1);
        assert!(err.contains("--preset"));
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(
            exit_code(&Error::Capacity {
                cells: 30,
                limit: 20
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::Numerical {
                message: String::new(),
                best_bound: 0.0
            }),
            4
        );
        assert_eq!(exit_code(&Error::Domain(String::new())), 1);
    }
}
