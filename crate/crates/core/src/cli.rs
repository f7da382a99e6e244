//! The `martcheck` command line.
//!
//! ```text
//! martcheck classify   [--preset NAME | --model FILE] [model flags] [quadrature flags] [--strict]
//! martcheck table      [--preset NAME] [--rhos LIST] [model flags] [quadrature flags]
//! martcheck sweep      [--preset NAME] [--rhos LIST] [model flags] [simulation flags]
//! martcheck simulate   [--preset NAME] [--rho R] [model flags] [simulation flags]
//! martcheck parse-check EXPR
//! ```
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a deciding verdict is
//! unknown, 3 a table row disagrees with the closed-form oracle.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classifier::{
    boundary_profile, classify_martingale, classify_ui, full_report, Finiteness, Profile,
    SideFlags, Verdict,
};
use crate::diffusion::{CorrelationScheme, DiffusionSpec, ModelFile, SchemeKind};
use crate::expr::parse;
use crate::montecarlo::{sweep_rho, to_csv, SimConfig, SweepRow};
use crate::quadrature::{Measure, QuadConfig, TailAnnotation};
use crate::scott::{
    analytic_profile, preset_kind, scott_spec, tail_annotations, theorem_verdict, ScottParams,
    PRESET_CHOLESKY, PRESET_WU_YOR,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "martcheck",
    version,
    about = "Martingale and positivity classification for stochastic-volatility price processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify one model and print the full report.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        /// Correlation.
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        #[command(flatten)]
        quad: QuadArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Fail without printing if any verdict is unknown.
        #[arg(long)]
        strict: bool,
    },
    /// Reproduce the boundary summary table of a preset against its oracle.
    Table {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated correlations.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rhos: Option<Vec<f64>>,
        #[command(flatten)]
        quad: QuadArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo estimates of E[S_T] over a list of correlations.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rhos: Option<Vec<f64>>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo estimate of E[S_T] for one correlation.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parse an expression and print its normalized form.
    ParseCheck {
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Cholesky,
    WuYor,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Cholesky => SchemeKind::Cholesky,
            SchemeArg::WuYor => SchemeKind::WuYor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Built-in model: scott-cholesky or scott-wuyor.
    #[arg(long)]
    preset: Option<String>,
    /// JSON model file (takes precedence over --preset).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Base point of the scale and test functions (default: x0).
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
}

#[derive(Debug, Args)]
struct QuadArgs {
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    mesh_factor: Option<f64>,
    #[arg(long)]
    max_refinements: Option<u32>,
    #[arg(long)]
    divergence_threshold: Option<f64>,
}

impl QuadArgs {
    fn config(&self) -> Result<QuadConfig, String> {
        let d = QuadConfig::default();
        let cfg = QuadConfig {
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            boundary_mesh_factor: self.mesh_factor.unwrap_or(d.boundary_mesh_factor),
            max_refinements: self.max_refinements.unwrap_or(d.max_refinements),
            divergence_threshold: self.divergence_threshold.unwrap_or(d.divergence_threshold),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Horizon.
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig, String> {
        let d = SimConfig::default();
        let cfg = SimConfig {
            t: self.t.unwrap_or(d.t),
            n_steps: self.steps.unwrap_or(d.n_steps),
            n_paths: self.paths.unwrap_or(d.n_paths),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// A failure that ends the command.
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// A resolved model: either a preset with its closed-form knowledge, or a
/// generic model file.
struct Resolved {
    spec: DiffusionSpec,
    kind: SchemeKind,
    rho: Option<f64>,
    scott: Option<ScottParams>,
}

impl Resolved {
    fn scheme(&self, rho: Option<f64>) -> Result<CorrelationScheme, Failure> {
        let rho = rho.or(self.rho).unwrap_or(0.0);
        CorrelationScheme::with_rho(self.kind, rho).map_err(|e| usage(e.to_string()))
    }

    fn annotations(&self, scheme: &CorrelationScheme) -> Vec<TailAnnotation> {
        self.scott
            .map(|p| tail_annotations(p, scheme))
            .unwrap_or_default()
    }

    fn base_point(&self, args: &ModelArgs) -> f64 {
        args.c.unwrap_or_else(|| self.spec.default_base_point())
    }
}

fn preset_params(args: &ModelArgs) -> Result<(SchemeKind, ScottParams), Failure> {
    let name = args.preset.as_deref().unwrap_or(PRESET_CHOLESKY);
    let kind = preset_kind(name).ok_or_else(|| {
        usage(format!(
            "unknown preset {name:?} (expected {PRESET_CHOLESKY} or {PRESET_WU_YOR})"
        ))
    })?;
    let d = ScottParams::default();
    let p = ScottParams {
        alpha: args.alpha.unwrap_or(d.alpha),
        m: args.m.unwrap_or(d.m),
        beta: args.beta.unwrap_or(d.beta),
        x0: args.x0.unwrap_or(d.x0),
    };
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok((args.scheme.map_or(kind, Into::into), p))
}

fn resolve(args: &ModelArgs) -> Result<Resolved, Failure> {
    if let Some(path) = &args.model {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let mut mf = ModelFile::from_json(&text).map_err(|e| usage(e.to_string()))?;
        for (name, v) in [("alpha", args.alpha), ("m", args.m), ("beta", args.beta)] {
            if let Some(v) = v {
                mf.params.set(name, v);
            }
        }
        if let Some(x0) = args.x0 {
            mf.x0 = x0;
        }
        if let Some(s) = args.scheme {
            mf.scheme.kind = s.into();
        }
        let (spec, scheme) = mf.build().map_err(|e| usage(e.to_string()))?;
        return Ok(Resolved {
            spec,
            kind: scheme.kind(),
            rho: Some(scheme.rho()),
            scott: None,
        });
    }
    let (kind, p) = preset_params(args)?;
    Ok(Resolved {
        spec: scott_spec(p).map_err(|e| usage(e.to_string()))?,
        kind,
        rho: None,
        scott: Some(p),
    })
}

fn emit(output: &OutputArgs, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match &output.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| usage(format!("cannot write output: {e}"))),
    }
}

fn default_rhos(kind: SchemeKind) -> Vec<f64> {
    match kind {
        SchemeKind::Cholesky => vec![-1.0, -0.5, 0.0, 0.25, 0.5, 1.0],
        SchemeKind::WuYor => vec![0.0, 0.5, 1.0],
    }
}

fn classify(
    model: &ModelArgs,
    rho: Option<f64>,
    quad: &QuadArgs,
    output: &OutputArgs,
    strict: bool,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let r = resolve(model)?;
    let scheme = r.scheme(rho)?;
    let cfg = quad.config().map_err(usage)?;
    let c = r.base_point(model);
    let report = full_report(&r.spec, &scheme, c, &cfg, &r.annotations(&scheme))
        .map_err(|e| usage(e.to_string()))?;
    let unknown: Vec<&str> = report
        .verdicts()
        .iter()
        .filter(|(_, v)| *v == Verdict::Unknown)
        .map(|(name, _)| *name)
        .collect();
    if strict && !unknown.is_empty() {
        return Err(Failure {
            code: EXIT_UNKNOWN,
            message: format!("inconclusive: {} (--strict)", unknown.join(", ")),
        });
    }
    let text = match output.format.unwrap_or(Format::Json) {
        Format::Json => report.to_json() + "\n",
        Format::Text => {
            let mut s = String::new();
            for (name, v) in report.verdicts() {
                s += &format!("{name:<24} {v}\n");
            }
            for w in &report.warnings {
                s += &format!("warning: {w}\n");
            }
            s
        }
        Format::Csv => return Err(usage("classify supports --format json or text")),
    };
    emit(output, &text, out)?;
    Ok(if unknown.is_empty() {
        EXIT_OK
    } else {
        EXIT_UNKNOWN
    })
}

#[derive(Debug, Serialize)]
struct TableRow {
    scheme: SchemeKind,
    rho: f64,
    measure: Measure,
    numeric: SideFlags,
    oracle: SideFlags,
    /// Martingale / UI verdicts on the numeric profile (Q rows only).
    #[serde(skip_serializing_if = "Option::is_none")]
    martingale: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    uniformly_integrable: Option<Verdict>,
    status: &'static str,
}

fn flag(f: Finiteness, upper_sign: &str) -> &'static str {
    match (f, upper_sign) {
        (Finiteness::Finite, _) => "finite",
        (Finiteness::Infinite, "-") => "-inf",
        (Finiteness::Infinite, _) => "+inf",
        (Finiteness::Unknown, _) => "?",
    }
}

fn side_cells(s: &SideFlags) -> [&'static str; 6] {
    [
        flag(s.s_lower, "-"),
        flag(s.s_upper, "+"),
        flag(s.v_lower, "+"),
        flag(s.v_upper, "+"),
        flag(s.vb_lower, "+"),
        flag(s.vb_upper, "+"),
    ]
}

fn table(
    model: &ModelArgs,
    rhos: Option<&[f64]>,
    quad: &QuadArgs,
    output: &OutputArgs,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if model.model.is_some() {
        return Err(usage("table needs a preset (the oracle is closed-form)"));
    }
    let (kind, p) = preset_params(model)?;
    let spec = scott_spec(p).map_err(|e| usage(e.to_string()))?;
    let cfg = quad.config().map_err(usage)?;
    let c = model.c.unwrap_or_else(|| spec.default_base_point());
    let rhos = rhos.map_or_else(|| default_rhos(kind), <[f64]>::to_vec);
    let mut rows = Vec::new();
    for &rho in &rhos {
        let scheme = CorrelationScheme::with_rho(kind, rho).map_err(|e| usage(e.to_string()))?;
        let numeric = boundary_profile(&spec, &scheme, c, &cfg, &tail_annotations(p, &scheme))
            .map_err(|e| usage(e.to_string()))?;
        let oracle = analytic_profile(p, &scheme);
        let expected = theorem_verdict(&scheme);
        let flags = numeric.flags();
        for measure in [Measure::Q, Measure::P] {
            let (num, ora) = match measure {
                Measure::P => (flags.p, oracle.p),
                Measure::Q => (flags.q, oracle.q),
            };
            let (mart, ui) = match measure {
                Measure::Q => (
                    Some(classify_martingale(&numeric)),
                    Some(classify_ui(&numeric)),
                ),
                Measure::P => (None, None),
            };
            let verdicts_ok = match (mart, ui) {
                (Some(m), Some(u)) => {
                    m.is_yes() == expected.martingale
                        && m != Verdict::Unknown
                        && u.is_yes() == expected.uniformly_integrable
                        && u != Verdict::Unknown
                }
                _ => true,
            };
            rows.push(TableRow {
                scheme: kind,
                rho,
                measure,
                numeric: num,
                oracle: ora,
                martingale: mart,
                uniformly_integrable: ui,
                status: if num == ora && verdicts_ok {
                    "MATCH"
                } else {
                    "MISMATCH"
                },
            });
        }
    }
    let mismatch = rows.iter().any(|r| r.status == "MISMATCH");
    let text = match output.format.unwrap_or(Format::Text) {
        Format::Json => serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
        Format::Text => table_text(&rows),
        Format::Csv => table_csv(&rows),
    };
    emit(output, &text, out)?;
    Ok(if mismatch { EXIT_MISMATCH } else { EXIT_OK })
}

const HEADER: [&str; 6] = ["s(l)", "s(r)", "v(l)", "v(r)", "vb(l)", "vb(r)"];

fn table_text(rows: &[TableRow]) -> String {
    let mut s = format!("{:<9} {:>6} {:<3}", "scheme", "rho", "msr");
    for h in HEADER {
        s += &format!(" {h:<7}");
    }
    s += &format!(" {:<5} {:<5} {}\n", "mart", "ui", "status");
    for r in rows {
        s += &format!("{:<9} {:>6} {:<3}", r.scheme.to_string(), r.rho, format!("{:?}", r.measure));
        for cell in side_cells(&r.numeric) {
            s += &format!(" {cell:<7}");
        }
        let label = |v: Option<Verdict>| v.map_or("-".to_string(), |v| v.to_string());
        s += &format!(
            " {:<5} {:<5} {}\n",
            label(r.martingale),
            label(r.uniformly_integrable),
            r.status
        );
        if r.numeric != r.oracle {
            s += &format!("{:>20}", "oracle:");
            for cell in side_cells(&r.oracle) {
                s += &format!(" {cell:<7}");
            }
            s += "\n";
        }
    }
    s
}

fn table_csv(rows: &[TableRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scheme", "rho", "measure"];
    header.extend(HEADER);
    header.extend(HEADER.map(|h| match h {
        "s(l)" => "oracle_s(l)",
        "s(r)" => "oracle_s(r)",
        "v(l)" => "oracle_v(l)",
        "v(r)" => "oracle_v(r)",
        "vb(l)" => "oracle_vb(l)",
        _ => "oracle_vb(r)",
    }));
    header.extend(["martingale", "uniformly_integrable", "status"]);
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.scheme.to_string(), r.rho.to_string(), format!("{:?}", r.measure)];
        rec.extend(side_cells(&r.numeric).map(String::from));
        rec.extend(side_cells(&r.oracle).map(String::from));
        let label = |v: Option<Verdict>| v.map_or(String::new(), |v| v.to_string());
        rec.extend([
            label(r.martingale),
            label(r.uniformly_integrable),
            r.status.to_string(),
        ]);
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn simulate_rows(
    model: &ModelArgs,
    rhos: &[f64],
    sim: &SimArgs,
    output: &OutputArgs,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if model.model.is_some() {
        return Err(usage("simulation is available for presets only"));
    }
    let (kind, p) = preset_params(model)?;
    let cfg = sim.config().map_err(usage)?;
    let rows: Vec<SweepRow> =
        sweep_rho(p, kind, rhos, &cfg).map_err(|e| usage(e.to_string()))?;
    let text = match output.format.unwrap_or(Format::Csv) {
        Format::Csv => to_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
        Format::Text => return Err(usage("simulation output supports --format csv or json")),
    };
    emit(output, &text, out)?;
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match cli.command {
        Command::Classify {
            model,
            rho,
            quad,
            output,
            strict,
        } => classify(&model, rho, &quad, &output, strict, out),
        Command::Table {
            model,
            rhos,
            quad,
            output,
        } => table(&model, rhos.as_deref(), &quad, &output, out),
        Command::Sweep {
            model,
            rhos,
            sim,
            output,
        } => {
            let kind = preset_params(&model)?.0;
            let rhos = rhos.unwrap_or_else(|| default_rhos(kind));
            simulate_rows(&model, &rhos, &sim, &output, out)
        }
        Command::Simulate {
            model,
            rho,
            sim,
            output,
        } => {
            // a single row keeps the base seed
            let (kind, p) = preset_params(&model)?;
            let cfg = sim.config().map_err(usage)?;
            let rho = rho.unwrap_or(0.0);
            let scheme =
                CorrelationScheme::with_rho(kind, rho).map_err(|e| usage(e.to_string()))?;
            let estimate = crate::montecarlo::simulate(p, &scheme, &cfg)
                .map_err(|e| usage(e.to_string()))?;
            let rows = [SweepRow { rho, estimate }];
            let text = match output.format.unwrap_or(Format::Csv) {
                Format::Csv => to_csv(&rows),
                Format::Json => {
                    serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"
                }
                Format::Text => {
                    return Err(usage("simulation output supports --format csv or json"))
                }
            };
            emit(&output, &text, out)?;
            Ok(EXIT_OK)
        }
        Command::ParseCheck { expr } => match parse(&expr) {
            Ok(e) => {
                writeln!(out, "{e}").map_err(|e| usage(e.to_string()))?;
                Ok(EXIT_OK)
            }
            Err(e) => {
                let caret = format!("{}^", " ".repeat(e.position));
                Err(usage(format!("{e}\n  {expr}\n  {caret}")))
            }
        },
    }
}

/// Run with explicit streams; returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            if f.code == EXIT_USAGE {
                let _ = writeln!(err, "hint: run `martcheck --help` for usage");
            }
            f.code
        }
    }
}

/// Run on the process streams; `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
