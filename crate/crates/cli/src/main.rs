//! Batch command-line surface: train and apply lp-norm MKL models, compute
//! kernel alignments and normalizations, evaluate generalization bounds,
//! and run the synthetic sparsity study.
//!
//! Exit codes: 0 success, 1 validation or I/O failure, 2 non-convergence
//! (the best iterate is still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use lpmkl::error::Error;
use lpmkl::experiments::{SweepConfig, ToyConfig};
use lpmkl::io;
use lpmkl::kernel::{KernelMatrix, KernelStack};
use lpmkl::mkl::{MklConfig, MklModel, PNorm, TrainingMode};

const EXIT_FAILURE: u8 = 1;
const EXIT_NON_CONVERGENCE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "lpmkl",
    about = "lp-norm multiple kernel learning toolkit",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an MKL model from kernel files and a label file.
    Train(TrainArgs),
    /// Apply a trained model to test-kernel row files.
    Predict(PredictArgs),
    /// Generate a synthetic two-Gaussian dataset as CSV.
    Toygen(ToygenArgs),
    /// Run the sparsity sweep and report test/model errors as CSV.
    Sweep(SweepArgs),
    /// Evaluate Rademacher generalization bounds over parameter grids.
    Bounds(BoundsArgs),
    /// Pairwise alignment matrix of centered kernels.
    Align(AlignArgs),
    /// Normalize or center a kernel file.
    Normalize(NormalizeArgs),
}

fn parse_pnorm(s: &str) -> Result<PNorm, String> {
    PNorm::parse(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<TrainingMode, String> {
    TrainingMode::parse(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    /// Mixing-norm parameter: a real >= 1 or 'inf'.
    #[arg(long, value_parser = parse_pnorm, default_value = "2")]
    p: PNorm,
    /// Block-norm exponent q > 2; replaces the lp mixing update.
    #[arg(long = "q-block")]
    q_block: Option<f64>,
    /// Soft-margin trade-off.
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, value_parser = parse_mode, default_value = "interleaved")]
    mode: TrainingMode,
    /// Kernel files (text, or binary with extension .kmb), all over the
    /// same training points.
    #[arg(long, required = true, num_args = 1..)]
    kernels: Vec<PathBuf>,
    /// Label file: one +1/-1 per line.
    #[arg(long)]
    labels: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON file with objective traces and counters.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long = "epsilon-svm", default_value_t = 1e-3)]
    epsilon_svm: f64,
    #[arg(long = "epsilon-mkl", default_value_t = 1e-3)]
    epsilon_mkl: f64,
    #[arg(long = "max-outer", default_value_t = 200)]
    max_outer: usize,
    /// Normalization applied to every kernel after loading:
    /// none | multiplicative | spherical.
    #[arg(long, default_value = "none")]
    normalize: String,
    /// Write the resolved configuration as JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// One rows file per training kernel, in model order; row t holds
    /// k_m(x_i, x_t) for every training point i.
    #[arg(long = "test-kernels", required = true, num_args = 1..)]
    test_kernels: Vec<PathBuf>,
    /// Output CSV with decision values and predicted labels.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ToygenArgs {
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// Number of informative leading features (ignored when --pattern is
    /// given).
    #[arg(long, default_value_t = 50)]
    informative: usize,
    /// Explicit 0/1 pattern, e.g. 110100; overrides --informative.
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, default_value_t = 1.75)]
    rho: f64,
    /// Sample size (balanced, must be even).
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV: header y,x1..xd then one row per sample.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep configuration as JSON; defaults to the standard sparsity
    /// study.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the repetition cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the repetition count of every scenario.
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Kernel counts, comma separated.
    #[arg(long = "M", value_delimiter = ',', required = true)]
    m: Vec<usize>,
    /// Kernel diagonal bound R.
    #[arg(long = "R", default_value_t = 1.0)]
    r: f64,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Norm parameters, comma separated ('inf' allowed).
    #[arg(long, value_delimiter = ',', value_parser = parse_pnorm, required = true)]
    p: Vec<PNorm>,
    /// Confidence parameter for the risk bounds.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Lipschitz constant; adds the full risk-bound column.
    #[arg(long = "L")]
    lipschitz: Option<f64>,
    /// Margin; adds the radius-margin column.
    #[arg(long)]
    gamma: Option<f64>,
    /// Empirical risk used by the risk-bound columns.
    #[arg(long = "empirical-risk", default_value_t = 0.0)]
    empirical_risk: f64,
    /// Case-study scenario column: uniform | sparse.
    #[arg(long)]
    scenario: Option<String>,
    /// Add the competitor comparison column (integer conjugate exponents).
    #[arg(long, default_value_t = false)]
    cortes: bool,
    /// Output CSV (stdout when omitted). A single grid point without
    /// extra columns prints just the bound value.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long, required = true, num_args = 1..)]
    kernels: Vec<PathBuf>,
    /// Normalization before centering: none | spherical | multiplicative.
    #[arg(long, default_value = "none")]
    normalize: String,
    /// Output CSV (stdout when omitted): a header of kernel names, then
    /// the M x M alignment matrix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    kernel: PathBuf,
    /// multiplicative | spherical | center
    #[arg(long)]
    method: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Toygen(args) => cmd_toygen(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Align(args) => cmd_align(args),
        Command::Normalize(args) => cmd_normalize(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn apply_normalization(k: KernelMatrix, method: &str) -> Result<KernelMatrix, Error> {
    match method {
        "none" => Ok(k),
        "multiplicative" => lpmkl::normalize_multiplicative(&k),
        "spherical" => lpmkl::normalize_spherical(&k),
        "center" => lpmkl::center(&k),
        other => Err(Error::Validation(format!(
            "unknown normalization '{other}' (expected none, multiplicative, spherical, or center)"
        ))),
    }
}

fn load_stack(paths: &[PathBuf], normalize: &str) -> Result<KernelStack, Error> {
    let mut kernels = Vec::with_capacity(paths.len());
    for path in paths {
        let raw = io::read_kernel_auto(path).map_err(|e| name_file_error(e, path))?;
        // default the label to the file stem so stacks of unnamed kernels
        // keep unique names
        let named = if raw.name().is_empty() {
            raw.with_name(file_stem(path))
        } else {
            raw
        };
        kernels.push(apply_normalization(named, normalize)?);
    }
    KernelStack::new(kernels)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn name_file_error(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io_err) => Error::Validation(format!("{}: {io_err}", path.display())),
        other => other,
    }
}

fn write_manifest(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("cannot serialize manifest: {e}")))?;
    io::write_atomic(path, json.as_bytes())
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, Error> {
    let stack = load_stack(&args.kernels, &args.normalize)?;
    let y = io::read_labels(&args.labels)?;
    if y.len() != stack.n() {
        return Err(Error::Validation(format!(
            "{}: {} labels for kernels with n = {}",
            args.labels.display(),
            y.len(),
            stack.n()
        )));
    }
    let config = MklConfig {
        p: args.p,
        q_block: args.q_block,
        c: args.c,
        epsilon_svm: args.epsilon_svm,
        epsilon_mkl: args.epsilon_mkl,
        mode: args.mode,
        max_outer: args.max_outer,
        ..MklConfig::default()
    };
    config.validate()?;
    if let Some(path) = &args.manifest {
        write_manifest(path, &config)?;
    }

    let finish = |model: &MklModel, converged: bool| -> Result<ExitCode, Error> {
        io::write_model(&args.out, model)?;
        if let Some(path) = &args.report {
            let json = serde_json::to_string_pretty(&model.report)
                .map_err(|e| Error::Validation(format!("cannot serialize report: {e}")))?;
            io::write_atomic(path, json.as_bytes())?;
        }
        if converged {
            Ok(ExitCode::SUCCESS)
        } else {
            eprintln!(
                "warning: training did not converge (gap {:.3e}); best iterate written",
                model.report.final_gap
            );
            Ok(ExitCode::from(EXIT_NON_CONVERGENCE))
        }
    };

    match lpmkl::train(&stack, &y, &config) {
        Ok(model) => finish(&model, true),
        Err(Error::MklNonConvergence { best, .. }) => finish(&best, false),
        Err(e @ Error::Stall { .. }) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(EXIT_NON_CONVERGENCE))
        }
        Err(e) => Err(e),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<ExitCode, Error> {
    let model = io::read_model(&args.model)?;
    if args.test_kernels.len() != model.theta.len() {
        return Err(Error::Validation(format!(
            "model mixes {} kernels but {} test-kernel files were given",
            model.theta.len(),
            args.test_kernels.len()
        )));
    }
    let mut rows: Vec<Array2<f64>> = Vec::with_capacity(args.test_kernels.len());
    for path in &args.test_kernels {
        let (matrix, _) =
            io::read_kernel_rows_text(path).map_err(|e| name_file_error(e, path))?;
        rows.push(matrix);
    }
    let decisions = lpmkl::predict(&model, &rows)?;
    let mut csv = String::from("decision,label\n");
    for &f in &decisions {
        let label = if f < 0.0 { -1 } else { 1 };
        csv.push_str(&format!("{},{}\n", io::format_f64(f), label));
    }
    io::write_atomic(&args.out, csv.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn parse_pattern(s: &str, d: usize) -> Result<Vec<u8>, Error> {
    let pattern: Vec<u8> = s
        .chars()
        .map(|c| match c {
            '0' => Ok(0u8),
            '1' => Ok(1u8),
            other => Err(Error::Validation(format!(
                "pattern may only contain 0 and 1, found '{other}'"
            ))),
        })
        .collect::<Result<_, _>>()?;
    if pattern.len() != d {
        return Err(Error::Validation(format!(
            "pattern has {} entries for d = {d}",
            pattern.len()
        )));
    }
    Ok(pattern)
}

fn cmd_toygen(args: ToygenArgs) -> Result<ExitCode, Error> {
    let theta_true = match &args.pattern {
        Some(s) => parse_pattern(s, args.d)?,
        None => {
            if args.informative == 0 || args.informative > args.d {
                return Err(Error::Validation(format!(
                    "--informative must lie in 1..={}, got {}",
                    args.d, args.informative
                )));
            }
            ToyConfig::leading_ones(args.d, args.informative)
        }
    };
    let config = ToyConfig {
        d: args.d,
        theta_true,
        rho: args.rho,
        n_train: args.n,
        seed: args.seed,
        ..ToyConfig::default()
    };
    if let Some(path) = &args.manifest {
        write_manifest(path, &config)?;
    }
    let data = lpmkl::generate_toy(&config)?;
    let mut csv = String::from("y");
    for j in 1..=args.d {
        csv.push_str(&format!(",x{j}"));
    }
    csv.push('\n');
    for i in 0..data.y.len() {
        csv.push_str(if data.y[i] > 0.0 { "1" } else { "-1" });
        for j in 0..args.d {
            csv.push_str(&format!(",{}", data.x[[i, j]]));
        }
        csv.push('\n');
    }
    io::write_atomic(&args.out, csv.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let mut config = match &args.config {
        Some(path) => {
            let contents = std::fs::read_to_string(path)
                .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SweepConfig>(&contents).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => SweepConfig::standard_study(args.seed.unwrap_or(0)),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
        for s in config.scenarios.iter_mut() {
            s.seed = seed;
        }
    }
    if let Some(reps) = args.repetitions {
        for s in config.scenarios.iter_mut() {
            s.repetitions = reps;
        }
    }
    if args.jobs == 0 {
        return Err(Error::Validation("--jobs must be at least 1".into()));
    }
    if let Some(path) = &args.manifest {
        write_manifest(path, &config)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::Validation(format!("cannot build thread pool: {e}")))?;
    let report = pool.install(|| lpmkl::run_sparsity_sweep(&config))?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => io::write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    let boundary: usize = report.cells.iter().map(|c| c.boundary_hits).sum();
    if boundary > 0 {
        eprintln!(
            "warning: {boundary} repetition(s) selected C on the grid boundary; widen the grid"
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Five significant digits, enough to quote bound values.
fn sig5(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (4 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn cmd_bounds(args: BoundsArgs) -> Result<ExitCode, Error> {
    use lpmkl::bounds;
    let scenario = args
        .scenario
        .as_deref()
        .map(bounds::CaseScenario::parse)
        .transpose()?;
    let mut header = String::from("p,M,n,R,rademacher_bound");
    let extra_columns =
        args.lipschitz.is_some() || args.gamma.is_some() || scenario.is_some() || args.cortes;
    if args.lipschitz.is_some() {
        header.push_str(",risk_bound");
    }
    if args.gamma.is_some() {
        header.push_str(",radius_margin_bound");
    }
    if scenario.is_some() {
        header.push_str(",case_study_bound");
    }
    if args.cortes {
        header.push_str(",comparison_bound");
    }
    header.push('\n');

    let mut rows = Vec::new();
    let mut single_value = None;
    for &p in &args.p {
        for &m in &args.m {
            for &n in &args.n {
                let bound = bounds::lp_rademacher_bound(m, args.r, n, p)?;
                single_value = Some(bound);
                let mut row = format!("{p},{m},{n},{},{}", args.r, sig5(bound));
                let inputs = bounds::BoundInputs {
                    m,
                    n,
                    r: args.r,
                    p,
                    gamma: args.gamma.unwrap_or(1.0),
                    delta: args.delta,
                    lipschitz: args.lipschitz.unwrap_or(1.0),
                };
                if args.lipschitz.is_some() {
                    let v = bounds::generalization_bound(&inputs, args.empirical_risk)?;
                    row.push_str(&format!(",{}", sig5(v)));
                }
                if args.gamma.is_some() {
                    let v = bounds::radius_margin_bound(&inputs, args.empirical_risk)?;
                    row.push_str(&format!(",{}", sig5(v)));
                }
                if let Some(sc) = scenario {
                    let v = bounds::case_study_bounds(
                        m,
                        n,
                        args.r,
                        args.lipschitz.unwrap_or(1.0),
                        args.delta,
                        sc,
                        p,
                    )?;
                    row.push_str(&format!(",{}", sig5(v)));
                }
                if args.cortes {
                    let v = bounds::cortes_comparison_bound(m, args.r, n, p)?;
                    row.push_str(&format!(",{}", sig5(v)));
                }
                row.push('\n');
                rows.push(row);
            }
        }
    }
    let single_grid_point = rows.len() == 1 && !extra_columns && args.out.is_none();
    if single_grid_point {
        println!("{}", sig5(single_value.expect("one row computed")));
        return Ok(ExitCode::SUCCESS);
    }
    let mut csv = header;
    for row in rows {
        csv.push_str(&row);
    }
    match &args.out {
        Some(path) => io::write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_align(args: AlignArgs) -> Result<ExitCode, Error> {
    if args.normalize == "center" {
        return Err(Error::Validation(
            "align centers internally; choose none, spherical, or multiplicative".into(),
        ));
    }
    let stack = load_stack(&args.kernels, &args.normalize)?;
    let matrix = lpmkl::alignment_matrix(&stack)?;
    let names: Vec<&str> = stack.iter().map(|k| k.name()).collect();
    let mut csv = names.join(",");
    csv.push('\n');
    for i in 0..stack.len() {
        let row: Vec<String> = (0..stack.len())
            .map(|j| io::format_f64(matrix[[i, j]]))
            .collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    match &args.out {
        Some(path) => io::write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_normalize(args: NormalizeArgs) -> Result<ExitCode, Error> {
    if args.method == "none" {
        return Err(Error::Validation(
            "choose a method: multiplicative, spherical, or center".into(),
        ));
    }
    let kernel =
        io::read_kernel_auto(&args.kernel).map_err(|e| name_file_error(e, &args.kernel))?;
    let result = apply_normalization(kernel, &args.method)?;
    io::write_kernel_auto(&args.out, &result)?;
    Ok(ExitCode::SUCCESS)
}
