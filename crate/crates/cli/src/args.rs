use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctrlfill_core::{CoeffMode, ModelKind};

#[derive(Debug, Parser)]
#[command(name = "ctrlfill", version, about = "Fill time-series gaps with minimum-energy control corrections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill every gap and write the completed series with origin flags.
    Impute(ImputeArgs),
    /// Fit the model on the leading observed prefix and print it.
    Fit(ModelArgs),
    /// Print exact impulse-response and printed-recurrence weights side by side.
    Coeffs(CoeffsArgs),
    /// Certify random instances against the constrained-minimization oracle.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Ar,
    Var,
    Regression,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ar => ModelKind::Ar,
            ModelArg::Var => ModelKind::Var,
            ModelArg::Regression => ModelKind::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Paper,
}

impl From<ModeArg> for CoeffMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => CoeffMode::Exact,
            ModeArg::Paper => CoeffMode::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Scalar,
    Var,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV with a header row; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Field delimiter (a single byte; `tab` for tab-separated input).
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,

    /// Tokens marking a missing value, replacing the defaults NA,NaN,+. Empty cells are always missing.
    #[arg(long, value_delimiter = ',')]
    pub na: Option<Vec<String>>,

    /// Value columns by header name (default: all but covariates and `index`).
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,

    /// Covariate columns for the regression model.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_enum, default_value_t = ModelArg::Ar)]
    pub model: ModelArg,

    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub order: u32,

    /// Fit without an intercept term.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,

    /// Refit on all observations before each gap instead of the leading prefix.
    #[arg(long)]
    pub refit_per_gap: bool,

    /// Extrapolate a trailing gap that has no anchor.
    #[arg(long)]
    pub allow_open_gap: bool,

    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Write the JSON imputation report here.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Significant digits for imputed values.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=17))]
    pub precision: u8,
}

#[derive(Debug, Args)]
pub struct CoeffsArgs {
    /// AR coefficients a_1..a_p.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub coefficients: Vec<f64>,

    /// Number of weights to print.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub length: u32,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// First instance seed; instances use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 1000)]
    pub cases: u64,

    #[arg(long, value_enum, default_value_t = KindArg::Scalar)]
    pub kind: KindArg,

    /// Perturb every solution before certification (harness self-test).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character or `tab`, got '{s}'")),
    }
}
