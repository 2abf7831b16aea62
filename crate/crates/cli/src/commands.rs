//! Argument parsing and per-subcommand drivers.
//!
//! Every command prints its primary report as JSON on stdout. With `--out
//! DIR` the same report, any companion plot data, and a `manifest.json`
//! recording the invocation and input digests are written into the
//! directory. Floats are serialized with 17 significant digits so reruns
//! are byte-comparable.

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use longbracket::bracketing::bracket_report_from;
use longbracket::data::{self, CombinedDataset, CsvSchema};
use longbracket::dgp::{self, DgpSpec, McBootstrap, McEstimatorConfig, McReport};
use longbracket::dominance::{dominance_report, DominanceConfig, DominanceReport};
use longbracket::estimands::{estimate_all, Estimand, EstimateReport, DEFAULT_PSI_TOL};
use longbracket::inference::{
    bootstrap, lalonde_tests_from, standard_errors, BootstrapSpec, EstimandSummary, TestResult,
};
use longbracket::report::{
    format_float, sha256_file, sha256_hex, to_json, Manifest, ManifestInput,
};
use longbracket::sensitivity::{sensitivity_curve, solve_rho_star, PhiSpec, SensitivityCurve};
use longbracket::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

type CResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser)]
#[command(
    name = "longbracket",
    version,
    about = "Bound long-term treatment effects by combining a short-term \
             experiment with an observational panel",
    propagate_version = true
)]
pub struct Cli {
    /// Directory for artifacts (JSON reports, CSV plot data, manifest.json)
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Cap on worker threads; results are identical for every value
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Check a combined CSV for schema, missingness, and overlap problems
    Validate(DataArgs),
    /// Point estimates, bootstrap uncertainty, and the bracket
    Analyze(AnalyzeArgs),
    /// First-period stochastic dominance between untreated groups
    Dominance(DominanceArgs),
    /// How the comparison bound moves under partial persistence
    Sensitivity(SensitivityArgs),
    /// Wald tests of each bound against the experimental benchmark
    Tests(TestsArgs),
    /// Monte Carlo study of a synthetic data generating process
    Simulate(SimulateArgs),
}

#[derive(Args)]
pub struct DataArgs {
    /// Combined panel CSV (columns g,w,y1,y2; extra columns become labels)
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,

    /// Keep only rows matching label terms, e.g. "site=A,cohort=2"
    #[arg(long, value_name = "TERMS")]
    pub subgroup: Option<String>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Bootstrap replicates
    #[arg(long, default_value_t = 1000, value_name = "B")]
    pub bootstrap: usize,

    /// Bootstrap seed; reruns with the same seed are byte-identical
    #[arg(long, value_name = "SEED")]
    pub seed: u64,

    /// Size used for confidence intervals and the dominance band
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Args)]
pub struct DominanceArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Pointwise confidence band size
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Slack allowed before an ECDF crossing counts as a violation
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
}

#[derive(Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Smallest persistence factor on the curve
    #[arg(long, default_value_t = 0.5)]
    pub rho_min: f64,

    /// Largest persistence factor on the curve
    #[arg(long, default_value_t = 1.0)]
    pub rho_max: f64,

    /// Number of grid points, endpoints included
    #[arg(long, default_value_t = 11)]
    pub steps: usize,

    /// Solve for the persistence at which the adjusted bound equals this
    #[arg(long, value_name = "VALUE")]
    pub target: Option<f64>,
}

#[derive(Args)]
pub struct TestsArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Bootstrap replicates behind the test statistics
    #[arg(long, default_value_t = 1000, value_name = "B")]
    pub bootstrap: usize,

    /// Bootstrap seed
    #[arg(long, value_name = "SEED")]
    pub seed: u64,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Preset name or path to a JSON process description
    #[arg(long, value_name = "NAME|FILE")]
    pub dgp: String,

    /// Monte Carlo replications
    #[arg(long, default_value_t = 100, value_name = "R")]
    pub reps: usize,

    /// Master seed; each replication derives its own stream from it
    #[arg(long, value_name = "SEED")]
    pub seed: u64,

    /// Hide long-term outcomes of experimental units, as in production data
    #[arg(long, default_value_t = true, action = ArgAction::Set, value_name = "BOOL")]
    pub mask_experimental_y2: bool,

    /// Per-replication bootstrap replicates (enables coverage and tests)
    #[arg(long, value_name = "B")]
    pub bootstrap: Option<usize>,

    /// Size for the per-replication confidence intervals
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

pub fn run(cli: Cli) -> CResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| usage(format!("could not size the thread pool: {e}")))?;
    }
    let out = cli.out;
    match cli.command {
        Command::Validate(a) => cmd_validate(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Dominance(a) => cmd_dominance(a, out),
        Command::Sensitivity(a) => cmd_sensitivity(a, out),
        Command::Tests(a) => cmd_tests(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
    }
}

/// Routes the primary report to stdout and, when `--out` was given, all
/// artifacts plus the manifest into the directory.
struct Outputs {
    dir: Option<PathBuf>,
    manifest: Manifest,
}

impl Outputs {
    fn new(dir: Option<PathBuf>, inputs: Vec<ManifestInput>, seed: Option<u64>) -> CResult<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Outputs {
            dir,
            manifest: Manifest {
                tool: "longbracket".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: std::env::args().skip(1).collect::<Vec<_>>().join(" "),
                inputs,
                seed,
            },
        })
    }

    fn primary(&self, name: &str, value: &impl Serialize) -> CResult<()> {
        let body = to_json(value).map_err(CliError::from)?;
        print!("{body}");
        self.put(name, &body)
    }

    fn json(&self, name: &str, value: &impl Serialize) -> CResult<()> {
        let body = to_json(value)?;
        self.put(name, &body)
    }

    fn put(&self, name: &str, body: &str) -> CResult<()> {
        if let Some(d) = &self.dir {
            fs::write(d.join(name), body)?;
        }
        Ok(())
    }

    fn finish(&self) -> CResult<()> {
        self.json("manifest.json", &self.manifest)
    }
}

fn load_data(args: &DataArgs) -> CResult<(CombinedDataset, ManifestInput)> {
    let input = ManifestInput {
        path: args.data.display().to_string(),
        sha256: sha256_file(&args.data)?,
    };
    let mut d = data::load_csv_path(&args.data, &CsvSchema::default())?;
    if let Some(raw) = &args.subgroup {
        let predicate = data::parse_subgroup(raw).map_err(|e| usage(e.to_string()))?;
        d = data::filter_subgroup(&d, &predicate)?;
    }
    Ok((d, input))
}

fn check_alpha(alpha: f64) -> CResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(format!(
            "--alpha must lie strictly between 0 and 1, got {alpha}"
        )))
    }
}

fn cmd_validate(args: DataArgs, out: Option<PathBuf>) -> CResult<()> {
    let (d, input) = load_data(&args)?;
    let report = data::validate(&d);
    let outputs = Outputs::new(out, vec![input], None)?;
    outputs.primary("validation.json", &report)?;
    outputs.finish()?;
    if report.overlap_ok && report.missing_y2_observational == 0 {
        Ok(())
    } else {
        Err(Error::Validation(report.messages.join("; ")).into())
    }
}

#[derive(Serialize)]
struct AnalysisArtifact {
    estimates: EstimateReport,
    summaries: BTreeMap<Estimand, EstimandSummary>,
    replicate_failures: BTreeMap<Estimand, usize>,
    warnings: Vec<String>,
    bootstrap: BootstrapSpec,
}

fn cmd_analyze(args: AnalyzeArgs, out: Option<PathBuf>) -> CResult<()> {
    check_alpha(args.alpha)?;
    if args.bootstrap < 2 {
        return Err(usage("--bootstrap must be at least 2"));
    }
    let (d, input) = load_data(&args.data)?;
    let spec = BootstrapSpec {
        replicates: args.bootstrap,
        seed: args.seed,
        ci_level: 1.0 - args.alpha,
    };
    let dist = bootstrap(&d, &spec)?;
    let artifact = AnalysisArtifact {
        estimates: estimate_all(&d, DEFAULT_PSI_TOL)?,
        summaries: standard_errors(&dist)?,
        replicate_failures: dist.failure_counts(),
        warnings: dist.warnings.clone(),
        bootstrap: spec,
    };
    let dom = DominanceConfig {
        alpha: args.alpha,
        ..DominanceConfig::default()
    };
    let bracket = bracket_report_from(&d, &dist, &dom, DEFAULT_PSI_TOL)?;
    let outputs = Outputs::new(out, vec![input], Some(args.seed))?;
    outputs.primary("estimates.json", &artifact)?;
    outputs.json("bracket.json", &bracket)?;
    outputs.finish()
}

fn cmd_dominance(args: DominanceArgs, out: Option<PathBuf>) -> CResult<()> {
    check_alpha(args.alpha)?;
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(usage(format!("--tol must be nonnegative, got {}", args.tol)));
    }
    let (d, input) = load_data(&args.data)?;
    let config = DominanceConfig {
        alpha: args.alpha,
        tol: args.tol,
        ..DominanceConfig::default()
    };
    let report = dominance_report(&d, &config)?;
    let outputs = Outputs::new(out, vec![input], None)?;
    outputs.primary("dominance.json", &report)?;
    outputs.put("dominance.csv", &dominance_csv(&report))?;
    outputs.finish()
}

fn dominance_csv(r: &DominanceReport) -> String {
    let mut s =
        String::from("x,f_observational,f_experimental,band_observational,band_experimental\n");
    for i in 0..r.grid.len() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            format_float(r.grid[i]),
            format_float(r.f_observational[i]),
            format_float(r.f_experimental[i]),
            format_float(r.band_observational[i]),
            format_float(r.band_experimental[i]),
        ));
    }
    s
}

#[derive(Serialize)]
struct SensitivityArtifact {
    curve: SensitivityCurve,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_star: Option<f64>,
}

fn cmd_sensitivity(args: SensitivityArgs, out: Option<PathBuf>) -> CResult<()> {
    if args.rho_min.partial_cmp(&args.rho_max) != Some(std::cmp::Ordering::Less) {
        return Err(usage(format!(
            "--rho-min must be below --rho-max, got {} and {}",
            args.rho_min, args.rho_max
        )));
    }
    if args.steps < 2 {
        return Err(usage("--steps must be at least 2"));
    }
    let (d, input) = load_data(&args.data)?;
    let phi = PhiSpec::Linear;
    let curve = sensitivity_curve(&d, &phi, args.rho_min, args.rho_max, args.steps)?;
    let rho_star = match args.target {
        Some(t) => Some(solve_rho_star(&d, &phi, t, (args.rho_min, args.rho_max))?),
        None => None,
    };
    let artifact = SensitivityArtifact {
        curve,
        target: args.target,
        rho_star,
    };
    let outputs = Outputs::new(out, vec![input], None)?;
    outputs.primary("sensitivity.json", &artifact)?;
    outputs.put("sensitivity.csv", &sensitivity_csv(&artifact.curve))?;
    outputs.finish()
}

fn sensitivity_csv(c: &SensitivityCurve) -> String {
    let mut s = String::from("rho,delta,adjusted\n");
    for i in 0..c.rho.len() {
        s.push_str(&format!(
            "{},{},{}\n",
            format_float(c.rho[i]),
            format_float(c.delta[i]),
            format_float(c.adjusted[i]),
        ));
    }
    s
}

#[derive(Serialize)]
struct TestsArtifact {
    tests: Vec<TestResult>,
    bootstrap: BootstrapSpec,
}

fn cmd_tests(args: TestsArgs, out: Option<PathBuf>) -> CResult<()> {
    if args.bootstrap < 2 {
        return Err(usage("--bootstrap must be at least 2"));
    }
    let (d, input) = load_data(&args.data)?;
    let spec = BootstrapSpec::new(args.bootstrap, args.seed);
    let dist = bootstrap(&d, &spec)?;
    let artifact = TestsArtifact {
        tests: lalonde_tests_from(&dist)?,
        bootstrap: spec,
    };
    let outputs = Outputs::new(out, vec![input], Some(args.seed))?;
    outputs.primary("tests.json", &artifact)?;
    outputs.finish()
}

fn cmd_simulate(args: SimulateArgs, out: Option<PathBuf>) -> CResult<()> {
    check_alpha(args.alpha)?;
    if args.reps < 2 {
        return Err(usage("--reps must be at least 2"));
    }
    if let Some(b) = args.bootstrap {
        if b < 2 {
            return Err(usage("--bootstrap must be at least 2"));
        }
    }
    let (spec, input) = resolve_dgp(&args.dgp)?;
    let cfg = McEstimatorConfig {
        mask_experimental_y2: args.mask_experimental_y2,
        bootstrap: args.bootstrap.map(|replicates| McBootstrap {
            replicates,
            ci_level: 1.0 - args.alpha,
        }),
        ..McEstimatorConfig::default()
    };
    let report = dgp::monte_carlo(&spec, args.reps, args.seed, &cfg)?;
    let outputs = Outputs::new(out, vec![input], Some(args.seed))?;
    outputs.primary("mc_report.json", &report)?;
    outputs.put("mc_summary.csv", &mc_summary_csv(&report))?;
    outputs.finish()
}

fn resolve_dgp(raw: &str) -> CResult<(DgpSpec, ManifestInput)> {
    let (path, text) = if dgp::PRESET_NAMES.contains(&raw) {
        (format!("preset:{raw}"), dgp::preset_source(raw)?.to_string())
    } else if std::path::Path::new(raw).is_file() {
        (raw.to_string(), fs::read_to_string(raw)?)
    } else {
        return Err(usage(format!(
            "--dgp '{raw}' is neither a preset ({}) nor a file",
            dgp::PRESET_NAMES.join(", ")
        )));
    };
    let spec = dgp::spec_from_json(&text)?;
    let input = ManifestInput {
        path,
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok((spec, input))
}

fn mc_summary_csv(r: &McReport) -> String {
    let mut s = String::from("estimand,reps,mean,bias,sd,rmse,mc_se,coverage\n");
    for (est, st) in &r.estimands {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            est.key(),
            st.reps,
            format_float(st.mean),
            format_float(st.bias),
            format_float(st.sd),
            format_float(st.rmse),
            format_float(st.mc_se),
            st.coverage.map(format_float).unwrap_or_default(),
        ));
    }
    s
}
