//! The `wco` command line: `check`, `classify`, `examples` and `continuous`.
//!
//! Exit codes: 0 centered / checks pass, 1 not centered / checks fail,
//! 2 inconclusive, 64 usage error, 65 input that does not parse.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::builtins::{builtin, Builtin, ShiftInstance};
use crate::classify::{continuous_type, structural_type, ClassifyOptions, TypeVerdict};
use crate::continuous::{
    boundedness_test, chain_rule_residual, halfline_model, quadrature_verify, rn_linear, sample_points,
    ContinuousConfig, LinearModel, RadialDensity, TestFunction,
};
use crate::discrete::WeightedShift;
use crate::error::{Error, Result};
use crate::oracle::DEFAULT_RANK_TOL;
use crate::report::{full_report, to_json, to_table, type_table, ReportOptions, Subject, SCHEMA};
use crate::tree::{TreeSpec, VertexId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_PARSE: i32 = 65;

#[derive(Parser, Debug)]
#[command(name = "wco", version, about = "Centeredness and type of weighted composition operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the centeredness conditions and print a report.
    Check(CheckArgs),
    /// Classify a centered instance into types I–IV.
    Classify(CheckArgs),
    /// Write a builtin instance as a tree-spec or continuous config.
    Examples(ExamplesArgs),
    /// Check a continuous model (half-line translation or linear map).
    Continuous(ContinuousArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Named builtin instance.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub builtin: Option<String>,
    /// Tree-spec file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Base vertex of the window (default: the builtin's base, or the root of an input tree).
    #[arg(long)]
    pub base: Option<String>,
    /// Window depth above and below the base.
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 3)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Include wall-clock timings (makes the output nondeterministic).
    #[arg(long)]
    pub timings: bool,
    /// Skip the dense-matrix oracle.
    #[arg(long)]
    pub no_oracle: bool,
    /// Attach a type classification when the instance is centered.
    #[arg(long)]
    pub classify: bool,
}

#[derive(Args, Debug)]
pub struct ExamplesArgs {
    pub name: String,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ContinuousArgs {
    /// `halfline` or `linear_gauss`; flags below override the model.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Config file as written by `examples halfline` or `examples linear_gauss`.
    #[arg(long, conflicts_with = "builtin")]
    pub input: Option<PathBuf>,
    /// Radial density: `exp` or `poly:a0,a1,...`.
    #[arg(long)]
    pub rho: Option<String>,
    /// Row-major entries of `A`, comma separated.
    #[arg(long)]
    pub matrix: Option<String>,
    #[arg(long)]
    pub kappa: Option<usize>,
    /// Order `n` of the Radon–Nikodym derivative.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Half-width of the quadrature box.
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    /// Quadrature cells per axis (default 100000 in one dimension, 1000 in two).
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Check(a) => cmd_check(&a, false),
        Command::Classify(a) => cmd_check(&a, true),
        Command::Examples(a) => cmd_examples(&a),
        Command::Continuous(a) => cmd_continuous(&a),
    };
    match outcome.and_then(|o| o.emit(stdout).map(|_| o.code)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::CycleDetected(_)
        | Error::Disconnected(..)
        | Error::DuplicateParent(_)
        | Error::RootMismatch { .. }
        | Error::EmptyTree => EXIT_PARSE,
        Error::UnknownVertex(_)
        | Error::UnknownBuiltin(_)
        | Error::OrderTooLarge { .. }
        | Error::SingularMatrix
        | Error::Invalid(_) => {
            EXIT_USAGE
        }
        Error::NotCentered(_) => EXIT_FAIL,
        _ => EXIT_INCONCLUSIVE,
    }
}

struct Outcome {
    text: String,
    output: Option<PathBuf>,
    code: i32,
}

impl Outcome {
    fn emit(&self, stdout: &mut dyn Write) -> Result<()> {
        match &self.output {
            Some(path) => fs::write(path, &self.text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display()))),
            None => stdout.write_all(self.text.as_bytes()).map_err(|e| Error::Invalid(e.to_string())),
        }
    }
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })
}

/// The weighted shift named by `--builtin`, or read from `--input`.
fn load_shift(a: &CheckArgs) -> Result<ShiftInstance> {
    if a.n_max == 0 {
        return Err(Error::Invalid("--n-max must be at least 1".into()));
    }
    let depth_applies = a.builtin.is_some() || a.base.is_some();
    if depth_applies && a.depth < a.n_max + 2 {
        return Err(Error::Invalid(format!(
            "--depth {} is too shallow for --n-max {} (need depth >= n_max + 2)",
            a.depth, a.n_max
        )));
    }
    if let Some(name) = &a.builtin {
        let mut inst = match builtin(name, a.depth)? {
            Builtin::Shift(s) => s,
            Builtin::Continuous(_) => {
                return Err(Error::Invalid(format!("`{name}` is continuous; use the `continuous` command")))
            }
        };
        if let Some(b) = &a.base {
            inst.base = VertexId::new(b.as_str());
        }
        inst.shift.tree.parent(&inst.base)?;
        return Ok(inst);
    }
    let path = a.input.as_ref().expect("clap requires --builtin or --input");
    let spec = TreeSpec::parse(&read(path)?)?;
    let shift = WeightedShift::from_spec(&spec)?;
    let root = shift.tree.root().ok_or(Error::EmptyTree)?;
    let (base, depth) = match &a.base {
        Some(b) => (VertexId::new(b.as_str()), a.depth),
        None => (root, shift.tree.finite_height().unwrap_or(0)),
    };
    shift.tree.parent(&base)?;
    Ok(ShiftInstance {
        name: path.display().to_string(),
        shift,
        base,
        depth,
        iv_witness: None,
    })
}

fn cmd_check(a: &CheckArgs, classify: bool) -> Result<Outcome> {
    let inst = load_shift(a)?;
    if classify {
        return cmd_classify(a, inst);
    }
    let subject = Subject::from_shift(inst)?;
    let opts = ReportOptions {
        n_max: a.n_max,
        tol: a.tol,
        rank_tol: DEFAULT_RANK_TOL,
        oracle: !a.no_oracle,
        classify: a.classify,
        timings: a.timings,
    };
    let report = full_report(&subject, &opts)?;
    let text = match a.format {
        Format::Json => to_json(&report),
        Format::Table => to_table(&report),
    };
    Ok(Outcome {
        text,
        output: a.output.clone(),
        code: report.exit_code(),
    })
}

#[derive(Serialize)]
struct ClassifyDoc<'a> {
    schema: u32,
    instance: &'a str,
    classification: &'a TypeVerdict,
}

fn cmd_classify(a: &CheckArgs, inst: ShiftInstance) -> Result<Outcome> {
    let opts = ClassifyOptions {
        n_max: a.n_max,
        tol: a.tol,
        rank_tol: DEFAULT_RANK_TOL,
        stability: true,
    };
    let verdict = structural_type(&inst, &opts)?;
    let text = match a.format {
        Format::Json => to_json(&ClassifyDoc {
            schema: SCHEMA,
            instance: &inst.name,
            classification: &verdict,
        }),
        Format::Table => type_table(&verdict),
    };
    Ok(Outcome {
        text,
        output: a.output.clone(),
        code: EXIT_OK,
    })
}

fn cmd_examples(a: &ExamplesArgs) -> Result<Outcome> {
    let text = match builtin(&a.name, a.depth)? {
        Builtin::Shift(inst) => {
            let window = inst.window()?;
            let header = [
                format!("builtin {} depth {} base {}", inst.name, inst.depth, inst.base),
                format!("window of {} vertices; its top is written as the root", window.len()),
            ];
            inst.shift.to_spec(&window)?.render(&header)
        }
        Builtin::Continuous(c) => c.render(&a.name),
    };
    Ok(Outcome {
        text,
        output: a.output.clone(),
        code: EXIT_OK,
    })
}

/// Reads the `key value` lines written by [`ContinuousConfig::render`].
fn parse_continuous(text: &str) -> Result<ContinuousConfig> {
    let mut model = None;
    let (mut kappa, mut rho, mut matrix) = (None, None, None);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let Some((key, value)) = line.split_once(char::is_whitespace) else {
            if line.is_empty() {
                continue;
            }
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected `key value`, found `{line}`"),
            });
        };
        let value = value.trim();
        match key {
            "model" => model = Some(value.to_owned()),
            "kappa" => {
                kappa = Some(value.parse::<usize>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?)
            }
            "rho" => rho = Some(value.to_owned()),
            "matrix" => matrix = Some(value.to_owned()),
            "map" | "measure" => {}
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }
    match model.as_deref() {
        Some("halfline") => Ok(ContinuousConfig::HalfLine),
        Some("linear") => {
            let kappa = kappa.unwrap_or(1);
            let density = RadialDensity::parse(rho.as_deref().unwrap_or("exp")).map_err(as_parse)?;
            let model = LinearModel::parse(matrix.as_deref().unwrap_or("1"), kappa).map_err(as_parse)?;
            Ok(ContinuousConfig::Linear { density, model })
        }
        _ => Err(Error::Parse {
            line: 0,
            message: "missing or unknown `model`".into(),
        }),
    }
}

fn as_parse(e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::Parse {
            line: 0,
            message: other.to_string(),
        },
    }
}

fn continuous_config(a: &ContinuousArgs) -> Result<ContinuousConfig> {
    let base = match (&a.builtin, &a.input) {
        (Some(name), _) => match builtin(name, 8)? {
            Builtin::Continuous(c) => Some(c),
            Builtin::Shift(_) => return Err(Error::Invalid(format!("`{name}` is not a continuous builtin"))),
        },
        (None, Some(path)) => Some(parse_continuous(&read(path)?)?),
        (None, None) => None,
    };
    let overridden = a.rho.is_some() || a.matrix.is_some() || a.kappa.is_some();
    match base {
        Some(ContinuousConfig::HalfLine) if overridden => {
            Err(Error::Invalid("--rho/--matrix/--kappa do not apply to the half-line".into()))
        }
        Some(ContinuousConfig::Linear { density, model }) if overridden => {
            let kappa = a.kappa.unwrap_or(model.kappa);
            let density = match &a.rho {
                Some(r) => RadialDensity::parse(r)?,
                None => density,
            };
            let model = match &a.matrix {
                Some(m) => LinearModel::parse(m, kappa)?,
                None if kappa == model.kappa => model,
                None => return Err(Error::Invalid("--kappa changes the dimension; pass --matrix too".into())),
            };
            Ok(ContinuousConfig::Linear { density, model })
        }
        Some(c) => Ok(c),
        None => {
            let kappa = a.kappa.unwrap_or(1);
            let density = RadialDensity::parse(a.rho.as_deref().unwrap_or("exp"))?;
            let matrix = a
                .matrix
                .as_deref()
                .ok_or_else(|| Error::Invalid("pass --builtin, --input or --matrix".into()))?;
            Ok(ContinuousConfig::Linear {
                density,
                model: LinearModel::parse(matrix, kappa)?,
            })
        }
    }
}

/// Bumps near the origin, wide enough for the default grids.
fn linear_tests(kappa: usize, radius: f64) -> Vec<TestFunction> {
    [-0.25, 0.05, 0.2]
        .iter()
        .map(|&c| TestFunction::Bump {
            center: vec![c * radius; kappa],
            radius: radius / 5.0,
        })
        .collect()
}

fn cmd_continuous(a: &ContinuousArgs) -> Result<Outcome> {
    if a.order == 0 {
        return Err(Error::Invalid("--order must be at least 1".into()));
    }
    let config = continuous_config(a)?;
    let classify_opts = ClassifyOptions {
        n_max: a.order.max(2),
        ..Default::default()
    };
    let classification = continuous_type(&config, &classify_opts)?;
    let name = a.builtin.clone().unwrap_or_else(|| {
        a.input
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "linear".into())
    });
    let (results, pass) = match &config {
        ContinuousConfig::HalfLine => {
            let grid = a.grid.unwrap_or(100_000);
            let r = halfline_model(a.order, a.radius, grid)?;
            let pass = r.quadrature_residual <= a.tol && r.coisometry_residual <= a.tol;
            (serde_json::to_value(&r).expect("serializable"), pass)
        }
        ContinuousConfig::Linear { density, model } => {
            let grid = a.grid.unwrap_or(if model.kappa == 1 { 100_000 } else { 1000 });
            let bounded = boundedness_test(density, model);
            let tests = linear_tests(model.kappa, a.radius);
            let quadrature = quadrature_verify(density, model, a.order, &tests, a.radius, grid)?;
            let samples = sample_points(model.kappa, 4.0, if model.kappa == 1 { 1000 } else { 32 });
            let chain = chain_rule_residual(density, model, a.order, 1, &samples)?;
            let probes: Vec<_> = sample_points(model.kappa, 2.0, 4)
                .into_iter()
                .map(|x: DVector<f64>| {
                    let h = rn_linear(density, model, a.order, &x)?;
                    Ok(json!({"x": x.as_slice(), "h": h}))
                })
                .collect::<Result<_>>()?;
            let pass = quadrature <= a.tol && chain <= 1e-12 && bounded.bounded;
            (
                json!({
                    "order": a.order,
                    "rho": density.describe(),
                    "kappa": model.kappa,
                    "det": model.det(),
                    "boundedness": bounded,
                    "quadrature_residual": quadrature,
                    "grid": grid,
                    "radius": a.radius,
                    "chain_rule_residual": chain,
                    "h_samples": probes,
                }),
                pass,
            )
        }
    };
    let doc = json!({
        "schema": SCHEMA,
        "instance": name,
        "results": results,
        "classification": classification,
        "pass": pass,
    });
    let text = match a.format {
        Format::Json => to_json(&doc),
        Format::Table => {
            let mut s = format!("instance {name}\n");
            if let Some(obj) = doc["results"].as_object() {
                for (k, v) in obj {
                    s += &format!("  {k}: {v}\n");
                }
            }
            s += &type_table(&classification);
            s += &format!("pass: {pass}\n");
            s
        }
    };
    Ok(Outcome {
        text,
        output: a.output.clone(),
        code: if pass { EXIT_OK } else { EXIT_FAIL },
    })
}
