//! Batch front end: model ingestion, threshold and rate computation, sweep
//! orchestration and CSV/JSON emission.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qef_core::cascade::{compute_cascade, scheme_weights, SchemeKind};
use qef_core::freq_domain::{qef_rate_direct, qef_rate_homotopy, theta_star, theta_zero};
use qef_core::grid::FrequencyGrid;
use qef_core::model::OqhoModel;
use qef_core::state_space::{rate_sweep, RateResult};
use qef_core::Error;

/// Hard ceiling on the truncation order: the filter dimension grows like
/// 4(r+1)n and dense solves beyond this are not what this tool is for.
const MAX_ORDER: usize = 16;

/// Relative realizability residual above which a model file is rejected.
const PR_REJECT: f64 = 1e-2;
/// Relative realizability residual above which a warning is printed.
const PR_WARN: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "qef",
    version,
    about = "Growth rates of quadratic-exponential functionals for stable linear quantum stochastic systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file: JSON with integer fields n, m and row-major arrays
    /// Theta (n x n), A (n x n), B (n x m), optional C, R, M
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Number of frequency quadrature nodes
    #[arg(long, default_value_t = qef_core::DEFAULT_NODES)]
    nodes: usize,
    /// Compactification scale of the frequency grid
    /// (default: ten times the spectral radius of A)
    #[arg(long)]
    scale: Option<f64>,
}

impl GridArgs {
    fn build(&self, model: &OqhoModel) -> Result<FrequencyGrid, Error> {
        match self.scale {
            Some(scale) if !(scale > 0.0 && scale.is_finite()) => Err(Error::InvalidArgument(
                format!("grid scale must be positive and finite, got {scale}"),
            )),
            Some(scale) => Ok(FrequencyGrid::new(self.nodes, scale)),
            None => Ok(FrequencyGrid::for_model(model, self.nodes)),
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format for tabular results
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, ValueEnum)]
enum Scheme {
    Taylor,
    Sqrtpoly,
}

impl From<Scheme> for SchemeKind {
    fn from(s: Scheme) -> SchemeKind {
        match s {
            Scheme::Taylor => SchemeKind::Taylor,
            Scheme::Sqrtpoly => SchemeKind::SqrtPoly,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum FdMethod {
    Direct,
    Homotopy,
}

#[derive(Subcommand)]
enum Command {
    /// Print model diagnostics: realizability residuals, stability,
    /// conditioning
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Compute the risk-sensitivity thresholds theta* and theta0
    Thresholds {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// State-space rate ladder Upsilon_0..Upsilon_r at one theta
    Rate {
        #[command(flatten)]
        model: ModelArgs,
        /// Risk sensitivity parameter (nonnegative)
        #[arg(long)]
        theta: f64,
        /// Largest truncation order of the ladder
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Scheme::Taylor)]
        scheme: Scheme,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Frequency-domain rate at one theta
    RateFd {
        #[command(flatten)]
        model: ModelArgs,
        /// Risk sensitivity parameter (nonnegative)
        #[arg(long)]
        theta: f64,
        #[arg(long, value_enum, default_value_t = FdMethod::Direct)]
        method: FdMethod,
        /// RK4 steps of the homotopy integrator
        #[arg(long, default_value_t = qef_core::DEFAULT_HOMOTOPY_STEPS)]
        steps: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rate sweep over an ascending theta list, one record per
    /// (theta, order, method, scheme)
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated ascending list of theta values
        #[arg(long)]
        thetas: String,
        /// Largest truncation order (the ladder 0..=order is swept)
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Scheme::Taylor)]
        scheme: Scheme,
        /// Also emit direct frequency-domain reference rows
        #[arg(long)]
        with_fd: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Dump cascade coefficients and scheme weights as JSON
    Coeffs {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Scheme::Taylor)]
        scheme: Scheme,
        /// Emit the parsed model itself (round-trip exact) instead of the
        /// coefficients
        #[arg(long)]
        dump_model: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse(_) => 2,
        Error::InvalidModel(_)
        | Error::InvalidArgument(_)
        | Error::NotHurwitz { .. }
        | Error::NotPsd { .. }
        | Error::NotHermitian { .. }
        | Error::SingularTransform
        | Error::GenerationFailure { .. } => 3,
        Error::GammaSingular { .. } => 4,
        Error::StabilizingSolutionLost { .. } | Error::NoConvergence { .. } => 5,
        Error::ThetaBeyondThreshold { .. } | Error::OdeBlowup { .. } => 6,
        Error::SolveFailure(_) | Error::SingularV { .. } => 1,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Parse(_) => "parse",
        Error::InvalidModel(_) => "invalid-model",
        Error::InvalidArgument(_) => "invalid-argument",
        Error::NotHurwitz { .. } => "not-hurwitz",
        Error::NotPsd { .. } => "not-psd",
        Error::NotHermitian { .. } => "not-hermitian",
        Error::SingularTransform => "singular-transform",
        Error::GenerationFailure { .. } => "generation-failure",
        Error::GammaSingular { .. } => "gamma-singular",
        Error::StabilizingSolutionLost { .. } => "stabilizing-lost",
        Error::NoConvergence { .. } => "no-convergence",
        Error::ThetaBeyondThreshold { .. } => "theta-threshold",
        Error::OdeBlowup { .. } => "ode-blowup",
        Error::SolveFailure(_) => "solve-failure",
        Error::SingularV { .. } => "singular-v",
    }
}

/// Fixed 12-significant-digit formatting so identical runs emit identical
/// bytes.
fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.11e}")
    }
}

fn load_model(args: &ModelArgs) -> Result<OqhoModel, Error> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| Error::Parse(format!("{}: {e}", args.model.display())))?;
    let model = OqhoModel::from_json(&text)?;
    let diag = model.validate();
    let rel = diag.pr1_residual.max(diag.pr2_residual) / model.pr_scale();
    if rel > PR_REJECT {
        return Err(Error::InvalidModel(format!(
            "realizability residual {rel:.3e} exceeds {PR_REJECT:.0e}"
        )));
    }
    if rel > PR_WARN {
        eprintln!(
            "qef: warning: realizability residual {rel:.3e} above {PR_WARN:.0e} \
             (rounded model data?)"
        );
    }
    Ok(model)
}

fn emit(output: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match output {
        Some(path) => fs::write(path, content)
            .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn check_order(order: usize) -> Result<(), Error> {
    if order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "truncation order {order} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    Ok(())
}

fn parse_thetas(list: &str) -> Result<Vec<f64>, Error> {
    let thetas: Result<Vec<f64>, _> = list
        .split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect();
    let thetas =
        thetas.map_err(|e| Error::InvalidArgument(format!("bad theta list: {e}")))?;
    if thetas.is_empty() {
        return Err(Error::InvalidArgument("theta list is empty".into()));
    }
    Ok(thetas)
}

const SWEEP_HEADER: &str =
    "theta,r,method,scheme,rate,valid,are_residual,closed_loop_abscissa,newton_iterations\n";

fn sweep_row(point: &RateResult, method: &str) -> String {
    format!(
        "{},{},{method},{},{},{},{},{},{}\n",
        fmt_f(point.theta),
        point.r,
        point.scheme.as_str(),
        fmt_f(point.rate),
        point.valid,
        fmt_f(point.are_residual),
        fmt_f(point.closed_loop_abscissa),
        point.newton_iterations
    )
}

fn rate_table(points: &[RateResult], method: &str, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::from(SWEEP_HEADER);
            for p in points {
                out.push_str(&sweep_row(p, method));
            }
            out
        }
        Format::Json => {
            let mut value = serde_json::to_value(points).expect("serializable");
            if let serde_json::Value::Array(rows) = &mut value {
                for row in rows {
                    row["method"] = serde_json::Value::String(method.to_string());
                }
            }
            let mut text = serde_json::to_string_pretty(&value).expect("serializable");
            text.push('\n');
            text
        }
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { model } => {
            // Diagnostics are printed even for models that fail the hard
            // realizability threshold, so parse without the gate.
            let text = fs::read_to_string(&model.model)
                .map_err(|e| Error::Parse(format!("{}: {e}", model.model.display())))?;
            let parsed = OqhoModel::from_json(&text)?;
            let diag = parsed.validate();
            let rel = diag.pr1_residual.max(diag.pr2_residual) / parsed.pr_scale();
            let status = if rel > PR_REJECT {
                "invalid"
            } else if rel > PR_WARN {
                "warn"
            } else {
                "ok"
            };
            let mut out = String::new();
            let _ = writeln!(out, "n = {}", parsed.n());
            let _ = writeln!(out, "m = {}", parsed.m());
            let _ = writeln!(out, "pr1_residual = {}", fmt_f(diag.pr1_residual));
            let _ = writeln!(out, "pr2_residual = {}", fmt_f(diag.pr2_residual));
            let _ = writeln!(out, "pr_relative = {}", fmt_f(rel));
            let _ = writeln!(out, "spectral_abscissa = {}", fmt_f(diag.spectral_abscissa));
            let _ = writeln!(out, "mho_condition = {}", fmt_f(diag.mho_condition));
            let _ = writeln!(out, "bbt_min_eigenvalue = {}", fmt_f(diag.bbt_min_eigenvalue));
            let _ = writeln!(out, "status = {status}");
            print!("{out}");
            if status == "invalid" {
                return Err(Error::InvalidModel(format!(
                    "realizability residual {rel:.3e} exceeds {PR_REJECT:.0e}"
                )));
            }
            Ok(())
        }
        Command::Thresholds { model, grid } => {
            let model = load_model(&model)?;
            let grid = grid.build(&model)?;
            let star = theta_star(&model, &grid)?;
            let zero = theta_zero(&model, &grid)?;
            println!("theta_star = {}", fmt_f(star));
            println!("theta_zero = {}", fmt_f(zero));
            Ok(())
        }
        Command::Rate {
            model,
            theta,
            order,
            scheme,
            output,
        } => {
            check_order(order)?;
            let model = load_model(&model)?;
            let mut points = Vec::with_capacity(order + 1);
            for r in 0..=order {
                points.push(qef_core::qef_rate_ss(&model, theta, r, scheme.into())?);
            }
            emit(&output.output, &rate_table(&points, "ss", output.format))
        }
        Command::RateFd {
            model,
            theta,
            method,
            steps,
            grid,
            output,
        } => {
            let model = load_model(&model)?;
            let grid = grid.build(&model)?;
            let (name, rate) = match method {
                FdMethod::Direct => ("direct", qef_rate_direct(&model, theta, &grid)?),
                FdMethod::Homotopy => (
                    "homotopy",
                    qef_rate_homotopy(&model, theta, &grid, steps)?,
                ),
            };
            let content = match output.format {
                Format::Csv => format!(
                    "theta,method,rate\n{},{name},{}\n",
                    fmt_f(theta),
                    fmt_f(rate)
                ),
                Format::Json => format!(
                    "{}\n",
                    serde_json::json!({
                        "theta": theta,
                        "method": name,
                        "rate": rate,
                    })
                ),
            };
            emit(&output.output, &content)
        }
        Command::Sweep {
            model,
            thetas,
            order,
            scheme,
            with_fd,
            grid,
            output,
        } => {
            check_order(order)?;
            let model = load_model(&model)?;
            let thetas = parse_thetas(&thetas)?;
            let mut rows = String::from(SWEEP_HEADER);
            let mut json_rows = Vec::new();
            for r in 0..=order {
                let points = rate_sweep(&model, &thetas, r, scheme.into())?;
                for p in &points {
                    rows.push_str(&sweep_row(p, "ss"));
                }
                json_rows.extend(points);
            }
            let mut fd_rows = String::new();
            let mut fd_json = Vec::new();
            if with_fd {
                let grid = grid.build(&model)?;
                for &theta in &thetas {
                    let rate = match qef_rate_direct(&model, theta, &grid) {
                        Ok(rate) => rate,
                        Err(Error::ThetaBeyondThreshold { .. }) => f64::NAN,
                        Err(other) => return Err(other),
                    };
                    fd_rows.push_str(&format!(
                        "{},,direct,,{},{},,,\n",
                        fmt_f(theta),
                        fmt_f(rate),
                        !rate.is_nan()
                    ));
                    fd_json.push(serde_json::json!({
                        "theta": theta,
                        "method": "direct",
                        "rate": if rate.is_nan() { None } else { Some(rate) },
                        "valid": !rate.is_nan(),
                    }));
                }
            }
            let content = match output.format {
                Format::Csv => format!("{rows}{fd_rows}"),
                Format::Json => {
                    let mut value = serde_json::to_value(&json_rows).expect("serializable");
                    if let serde_json::Value::Array(arr) = &mut value {
                        for row in arr.iter_mut() {
                            row["method"] = serde_json::Value::String("ss".into());
                        }
                        arr.extend(fd_json);
                    }
                    let mut text = serde_json::to_string_pretty(&value).expect("serializable");
                    text.push('\n');
                    text
                }
            };
            emit(&output.output, &content)
        }
        Command::Coeffs {
            model,
            order,
            scheme,
            dump_model,
            output,
        } => {
            check_order(order)?;
            let model = load_model(&model)?;
            if dump_model {
                let mut text = model.to_json();
                text.push('\n');
                return emit(&output.output, &text);
            }
            let coeffs = compute_cascade(&model, order)?;
            let weights = scheme_weights(scheme.into(), order);
            let alpha: Vec<_> = (0..=coeffs.max_index())
                .map(|j| matrix_rows(coeffs.alpha(j)))
                .collect();
            let beta: Vec<_> = (0..=coeffs.max_index())
                .map(|j| matrix_rows(coeffs.beta(j)))
                .collect();
            let gamma: Vec<_> = (0..=coeffs.max_index())
                .map(|j| matrix_rows(coeffs.gamma(j)))
                .collect();
            let doc = serde_json::json!({
                "order": order,
                "scheme": { "kind": SchemeKind::from(scheme).as_str(), "weights": weights.weights },
                "gamma_condition_numbers": coeffs.gamma_condition_numbers(),
                "alpha": alpha,
                "beta": beta,
                "gamma": gamma,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
            text.push('\n');
            emit(&output.output, &text)
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("QEF_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("qef: error kind={} code={code}: {err}", error_kind(&err));
            ExitCode::from(code)
        }
    }
}
