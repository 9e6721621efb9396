//! `ctrlfill` command-line front end.

mod args;

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use ctrlfill_core::control::{gamma_weights_paper, impulse_weights_exact};
use ctrlfill_core::oracle::{summarize, verify_instance, InstanceLimits};
use ctrlfill_core::series::{parse_csv, write_csv, ParseOptions, WriteOptions, DEFAULT_NA_MARKERS};
use ctrlfill_core::{fit_model, impute, ArModel, Error, ErrorClass, FitOptions, ImputeConfig, ModelKind, Series};

use args::{Cli, CoeffsArgs, Command, ImputeArgs, InputArgs, KindArg, ModelArgs, VerifyArgs};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_VERIFY: u8 = 5;

/// A failure reported as one stderr line plus an exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Usage => EXIT_USAGE,
            ErrorClass::Data => EXIT_DATA,
            ErrorClass::Numerical => EXIT_NUMERICAL,
        };
        let message = match e.hint() {
            Some(h) => format!("{e} (hint: {h})"),
            None => e.to_string(),
        };
        Failure { code, message }
    }
}

fn io_failure(what: &str, path: Option<&Path>, e: io::Error) -> Failure {
    let target = path.map_or_else(|| "stdin/stdout".to_string(), |p| p.display().to_string());
    Failure { code: EXIT_DATA, message: format!("cannot {what} {target}: {e}") }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("ctrlfill: {}", line.trim_start_matches("error: ").trim());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Impute(a) => cmd_impute(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Coeffs(a) => cmd_coeffs(&a),
        Command::Verify(a) => cmd_verify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ctrlfill: error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn read_input(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| io_failure("read", Some(p), e)),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(|e| io_failure("read", None, e))?;
            Ok(s)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure("write", Some(p), e)),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| io_failure("write", None, e)),
    }
}

fn na_markers(na: &Option<Vec<String>>) -> Vec<String> {
    let mut markers = vec![String::new()];
    match na {
        Some(list) => markers.extend(list.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty())),
        None => markers.extend(DEFAULT_NA_MARKERS.iter().filter(|s| !s.is_empty()).map(|s| s.to_string())),
    }
    markers
}

/// Value series and optional covariate series from the same table.
fn load(a: &InputArgs) -> Result<(Series, Option<Series>), Failure> {
    let text = read_input(a.input.as_deref())?;
    let na = na_markers(&a.na);
    let covariates = a.covariates.clone().unwrap_or_default();
    let mut exclude = vec!["index".to_string()];
    exclude.extend(covariates.iter().cloned());
    let values = parse_csv(
        &text,
        &ParseOptions { delimiter: a.delimiter, na_markers: na.clone(), columns: a.columns.clone(), exclude },
    )?;
    let cov = if covariates.is_empty() {
        None
    } else {
        Some(parse_csv(
            &text,
            &ParseOptions { delimiter: a.delimiter, na_markers: na, columns: Some(covariates), exclude: Vec::new() },
        )?)
    };
    Ok((values, cov))
}

fn base_config(m: &ModelArgs) -> ImputeConfig {
    ImputeConfig {
        model: m.model.into(),
        order: m.order as usize,
        fit: FitOptions { intercept: !m.no_intercept, ..FitOptions::default() },
        ..ImputeConfig::default()
    }
}

fn check_covariates(kind: ModelKind, cov: &Option<Series>) -> CmdResult {
    if kind == ModelKind::Regression && cov.is_none() {
        return Err(Failure { code: EXIT_USAGE, message: "--model regression requires --covariates".into() });
    }
    Ok(())
}

fn cmd_impute(a: &ImputeArgs) -> CmdResult {
    let (series, cov) = load(&a.model.input)?;
    let cfg = ImputeConfig {
        mode: a.mode.into(),
        refit_per_gap: a.refit_per_gap,
        allow_open_gap: a.allow_open_gap,
        ..base_config(&a.model)
    };
    check_covariates(cfg.model, &cov)?;
    let out = impute(&series, cov.as_ref(), &cfg)?;
    let csv = write_csv(&series, &out.imputed, &WriteOptions { precision: a.precision as usize })?;
    if let Some(path) = &a.report {
        fs::write(path, out.report.to_json()).map_err(|e| io_failure("write", Some(path), e))?;
    }
    write_output(a.output.as_deref(), &csv)
}

fn cmd_fit(a: &ModelArgs) -> CmdResult {
    let (series, cov) = load(&a.input)?;
    let cfg = base_config(a);
    check_covariates(cfg.model, &cov)?;
    let fitted = fit_model(&series, cov.as_ref(), &cfg)?;
    write_output(None, &pretty(&fitted))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_coeffs(a: &CoeffsArgs) -> CmdResult {
    let model = ArModel::new(a.coefficients.clone(), 0.0)?;
    let m = a.length as usize;
    let psi = impulse_weights_exact(&model, m)?;
    let gamma = gamma_weights_paper(&model, m)?;
    let mut out = String::from("lag,psi,gamma,diff\n");
    for (j, (p, g)) in psi.as_slice().iter().zip(gamma.as_slice()).enumerate() {
        out.push_str(&format!("{j},{p},{g},{}\n", g - p));
    }
    write_output(None, &out)
}

#[derive(Serialize)]
struct FailedCase {
    seed: u64,
    pass: bool,
    error: String,
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let limits = match a.kind {
        KindArg::Scalar => InstanceLimits::scalar(),
        KindArg::Var => InstanceLimits::var(),
    };
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let mut emit = |line: String| writeln!(out, "{line}").map_err(|e| io_failure("write", None, e));
    if a.cases == 0 {
        eprintln!("ctrlfill: warning: 0 cases requested; verification is vacuous");
    }
    let mut records = Vec::new();
    let mut errors = 0usize;
    for seed in (0..a.cases).map(|i| a.seed.wrapping_add(i)) {
        match verify_instance(seed, &limits, a.inject_fault) {
            Ok(r) => {
                emit(serde_json::to_string(&r).expect("serializable"))?;
                records.push(r);
            }
            Err(e) => {
                errors += 1;
                let f = FailedCase { seed, pass: false, error: e.to_string() };
                emit(serde_json::to_string(&f).expect("serializable"))?;
            }
        }
    }
    let summary = summarize(&records);
    let failed = summary.cases - summary.passed + errors;
    emit(serde_json::json!({ "summary": summary, "errors": errors, "failed": failed }).to_string())?;
    out.flush().map_err(|e| io_failure("write", None, e))?;
    if failed > 0 {
        return Err(Failure {
            code: EXIT_VERIFY,
            message: format!("{failed} of {} instances failed certification", a.cases),
        });
    }
    Ok(())
}
