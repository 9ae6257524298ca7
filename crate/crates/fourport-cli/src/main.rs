//! Command-line front end for the fourport engine.
//!
//! Subcommands load a frequency-binned device spectrum, run one stage of
//! the pipeline on each bin (validation, state transformation, or
//! factorization), and print JSON to standard output. Human-readable
//! summaries and diagnostics go to standard error, so stdout stays
//! machine-parseable. Bins transform independently, and scans over a whole
//! spectrum run them in parallel, emitting one JSON array in bin order;
//! selecting a single bin with `--bin` or `--omega` emits one JSON object.
//!
//! Exit codes: 0 when every requested check passes, 1 for unreadable or
//! unparseable input and bad flags, 2 when a numerical check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use fourport::coherentmap::{coherent_result, transform_coherent};
use fourport::device::{
    load_spectrum, mat22_to_pairs, validate, DeviceError, DeviceSpectrum, SpectrumBin,
};
use fourport::embedding::embed;
use fourport::factorization::{
    compose_chain, factor_eight, factor_five, factor_lossless, netlist_json,
};
use fourport::fockmap::{fock_result, output_amplitudes, output_density};
use fourport::oracle::{
    coherent_fidelity, evolve_coherent, evolve_fock, COHERENT_TRUNCATION,
};
use fourport::smallmat::{identity, matrix_exp, maxabs, maxabs_diff};
use fourport::{CMat, CoherentVector, DeviceMatrices, Occupation4, DEFAULT_CAP};

/// The lossless factorization is only defined for devices that do not
/// absorb; the absorption matrix must vanish to this tolerance.
const LOSSLESS_ABSORPTION_TOL: f64 = 1e-10;
/// Pass threshold for the coherent oracle's fidelity shortfall. Truncation
/// error dominates rounding here, so the gate is wider than `--tol`.
const COHERENT_SHORTFALL_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "fourport",
    version,
    about = "Quantum state transformation through dispersive, absorbing optical four-port devices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the energy constraint T T† + A A† = I for each bin
    Validate(ValidateArgs),
    /// Transform a Fock or coherent input state bin by bin
    Transform(TransformArgs),
    /// Factor each bin's embedding into two-mode blocks and recompose
    Factorize(FactorizeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Device spectrum JSON file
    spectrum: PathBuf,
    /// Tolerance for pass/fail checks
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Rescale misnormalized bins before processing
    #[arg(long)]
    renormalize: bool,
    /// Process only the bin with this index
    #[arg(long, conflicts_with = "omega")]
    bin: Option<usize>,
    /// Process only the bin whose midfrequency is nearest to this value
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    /// Gauge of the embedding's device rows
    #[arg(long, value_enum, default_value_t = GaugeChoice::Identity)]
    gauge: GaugeChoice,
}

impl CommonArgs {
    fn single_bin(&self) -> bool {
        self.bin.is_some() || self.omega.is_some()
    }
}

/// Named gauges for the device rows. Only the identity exists today; the
/// flag is the mount point for user-supplied gauges later.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GaugeChoice {
    Identity,
}

fn gauge_matrix(choice: GaugeChoice) -> Option<CMat> {
    match choice {
        GaugeChoice::Identity => None,
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
#[command(group = ArgGroup::new("state").required(true))]
struct TransformArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fock input occupation: four mode counts (two field, two device)
    #[arg(long, num_args = 4, value_name = "N", group = "state")]
    fock: Option<Vec<usize>>,
    /// Coherent input amplitudes: four real values, or eight re/im values
    #[arg(long, num_args = 4..=8, value_name = "X", allow_negative_numbers = true, group = "state")]
    coherent: Option<Vec<f64>>,
    /// Largest total quanta the Fock machinery may handle
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// Cross-check each result against the brute-force sector oracle
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct FactorizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which factorization to run
    #[arg(long, value_enum)]
    kind: ChainKindArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainKindArg {
    /// Five two-mode blocks (gauge recorded in the output)
    Five,
    /// Eight two-mode blocks composing to the identity-gauge embedding
    Eight,
    /// Five scalar exponentials of a lossless transmission matrix
    Lossless,
}

enum CliError {
    /// Unreadable or unparseable input: exit code 1.
    Input(String),
    /// A numerical check failed on well-formed input: exit code 2.
    Check(String),
}

fn load_error(e: DeviceError) -> CliError {
    match e {
        DeviceError::Io(_) | DeviceError::Parse { .. } | DeviceError::Spectrum { .. } => {
            CliError::Input(e.to_string())
        }
        other => CliError::Check(other.to_string()),
    }
}

fn check_at<E: std::fmt::Display>(omega: f64) -> impl Fn(E) -> CliError {
    move |e| CliError::Check(format!("bin at omega = {omega}: {e}"))
}

fn select_bins<'s>(
    spectrum: &'s DeviceSpectrum,
    bin: Option<usize>,
    omega: Option<f64>,
) -> Result<Vec<(usize, &'s SpectrumBin)>, CliError> {
    if spectrum.bins.is_empty() {
        return Err(CliError::Input("spectrum has no bins".to_string()));
    }
    if let Some(i) = bin {
        let b = spectrum.bins.get(i).ok_or_else(|| {
            CliError::Input(format!(
                "bin index {i} out of range (spectrum has {} bins)",
                spectrum.bins.len()
            ))
        })?;
        return Ok(vec![(i, b)]);
    }
    if let Some(w) = omega {
        if !w.is_finite() {
            return Err(CliError::Input("--omega must be finite".to_string()));
        }
        let nearest = spectrum
            .bins
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| {
                let dx = (x.omega() - w).abs();
                let dy = (y.omega() - w).abs();
                dx.partial_cmp(&dy).expect("bin distances are finite")
            })
            .expect("spectrum is nonempty");
        return Ok(vec![nearest]);
    }
    Ok(spectrum.bins.iter().enumerate().collect())
}

fn emit(docs: Vec<Value>, single: bool) {
    let out = if single {
        docs.into_iter().next().expect("a selected bin produced output")
    } else {
        Value::Array(docs)
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("JSON output"));
}

fn run_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let a = &args.common;
    // Load with an infinite gate so constraint violations are reported
    // per bin below instead of rejecting the file.
    let spectrum = load_spectrum(&a.spectrum, f64::INFINITY, a.renormalize).map_err(load_error)?;
    let selection = select_bins(&spectrum, a.bin, a.omega)?;
    let mut docs = Vec::with_capacity(selection.len());
    let mut failing: Vec<f64> = Vec::new();
    for (i, b) in &selection {
        let report = validate(&b.device, a.tol);
        if !report.pass {
            failing.push(b.omega());
        }
        docs.push(json!({
            "bin": i,
            "omega": b.omega(),
            "residual": report.residual,
            "tol": report.tol,
            "pass": report.pass,
            "renormalized": b.renorm.is_some(),
        }));
    }
    let total = selection.len();
    emit(docs, a.single_bin());
    eprintln!(
        "{} of {} bins pass the energy constraint at tol {:.3e}",
        total - failing.len(),
        total,
        a.tol
    );
    if failing.is_empty() {
        Ok(())
    } else {
        let list = failing
            .iter()
            .map(|w| format!("{w}"))
            .collect::<Vec<_>>()
            .join(", ");
        Err(CliError::Check(format!(
            "energy constraint violated at omega = {list}"
        )))
    }
}

enum InputState {
    Fock(Occupation4),
    Coherent(CoherentVector),
}

fn parse_state(args: &TransformArgs) -> Result<InputState, CliError> {
    if let Some(values) = &args.fock {
        return Ok(InputState::Fock(Occupation4([
            values[0], values[1], values[2], values[3],
        ])));
    }
    let values = args.coherent.as_ref().expect("clap enforces the state group");
    let g = match values.len() {
        4 => [
            Complex64::new(values[0], 0.0),
            Complex64::new(values[1], 0.0),
            Complex64::new(values[2], 0.0),
            Complex64::new(values[3], 0.0),
        ],
        8 => [
            Complex64::new(values[0], values[1]),
            Complex64::new(values[2], values[3]),
            Complex64::new(values[4], values[5]),
            Complex64::new(values[6], values[7]),
        ],
        n => {
            return Err(CliError::Input(format!(
                "--coherent takes 4 real values or 8 re/im values, got {n}"
            )))
        }
    };
    Ok(InputState::Coherent(CoherentVector(g)))
}

fn transform_bin(
    i: usize,
    b: &SpectrumBin,
    state: &InputState,
    args: &TransformArgs,
) -> Result<(Value, bool), CliError> {
    let omega = b.omega();
    let gauge = gauge_matrix(args.common.gauge);
    let emb = embed(&b.device, gauge.as_ref()).map_err(check_at(omega))?;
    match state {
        InputState::Fock(n) => {
            let amps = output_amplitudes(&emb, *n, args.cap).map_err(check_at(omega))?;
            let density = output_density(&emb, *n, false, args.cap).map_err(check_at(omega))?;
            let mut doc = json!({
                "bin": i,
                "omega": omega,
                "fock": fock_result(*n, &amps, &density),
            });
            let mut pass = true;
            if args.oracle {
                let brute = evolve_fock(&emb, *n, args.cap).map_err(check_at(omega))?;
                let mut max_dev = 0.0f64;
                for k in amps.amps.keys().chain(brute.amps.keys()) {
                    max_dev = max_dev.max((amps.get(*k) - brute.get(*k)).norm());
                }
                pass = max_dev <= args.common.tol;
                doc["oracle"] = json!({
                    "max_deviation": max_dev,
                    "tol": args.common.tol,
                    "pass": pass,
                });
            }
            Ok((doc, pass))
        }
        InputState::Coherent(g) => {
            let out = transform_coherent(&emb, g);
            let mut doc = json!({
                "bin": i,
                "omega": omega,
                "coherent": coherent_result(g, &out),
            });
            let mut pass = true;
            if args.oracle {
                let d = evolve_coherent(&emb, g, COHERENT_TRUNCATION).map_err(check_at(omega))?;
                let f = coherent_fidelity(&d, out.0[0], out.0[1], COHERENT_TRUNCATION);
                let shortfall = (1.0 - f).max(0.0);
                pass = shortfall <= COHERENT_SHORTFALL_TOL;
                doc["oracle"] = json!({
                    "fidelity": f,
                    "shortfall": shortfall,
                    "truncation": COHERENT_TRUNCATION,
                    "tol": COHERENT_SHORTFALL_TOL,
                    "pass": pass,
                });
            }
            Ok((doc, pass))
        }
    }
}

fn run_transform(args: &TransformArgs) -> Result<(), CliError> {
    let a = &args.common;
    let state = parse_state(args)?;
    let spectrum = load_spectrum(&a.spectrum, a.tol, a.renormalize).map_err(load_error)?;
    let selection = select_bins(&spectrum, a.bin, a.omega)?;
    let results: Vec<(Value, bool)> = selection
        .par_iter()
        .map(|(i, b)| transform_bin(*i, b, &state, args))
        .collect::<Result<_, _>>()?;
    let all_pass = results.iter().all(|(_, pass)| *pass);
    let total = results.len();
    emit(results.into_iter().map(|(doc, _)| doc).collect(), a.single_bin());
    let kind = match state {
        InputState::Fock(n) => format!("fock {:?}", n.0),
        InputState::Coherent(_) => "coherent".to_string(),
    };
    eprintln!(
        "transformed {total} bin(s) for input {kind}{}",
        if args.oracle {
            if all_pass {
                "; oracle agrees"
            } else {
                "; ORACLE DISAGREES"
            }
        } else {
            ""
        }
    );
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Check(
            "oracle deviation exceeded the tolerance".to_string(),
        ))
    }
}

/// Residual of the composed chain's field rows against `[T A]`. The field
/// rows are gauge-independent, so this is meaningful for every chain kind.
fn field_rows_residual(composed: &CMat, device: &DeviceMatrices) -> f64 {
    let mut residual = 0.0f64;
    for row in 0..2 {
        for col in 0..4 {
            let expected = if col < 2 {
                device.t[[row, col]]
            } else {
                device.a[[row, col - 2]]
            };
            residual = residual.max((composed[[row, col]] - expected).norm());
        }
    }
    residual
}

fn factorize_bin(
    i: usize,
    b: &SpectrumBin,
    args: &FactorizeArgs,
) -> Result<(Value, bool), CliError> {
    let omega = b.omega();
    let tol = args.common.tol;
    match args.kind {
        ChainKindArg::Five | ChainKindArg::Eight => {
            let (chain, kind_name) = match args.kind {
                ChainKindArg::Five => (
                    factor_five(&b.device).map_err(check_at(omega))?,
                    "five",
                ),
                _ => (
                    factor_eight(&b.device).map_err(check_at(omega))?,
                    "eight",
                ),
            };
            let composed = compose_chain(&chain);
            // The five-factor chain recomposes to the embedding at its
            // recorded gauge; the eight-factor chain's gauge is the
            // identity, so there the two targets coincide.
            let target = embed(&b.device, Some(&chain.gauge)).map_err(check_at(omega))?;
            let residual = maxabs_diff(&composed, &target.lambda);
            let field_residual = field_rows_residual(&composed, &b.device);
            let pass = residual <= tol;
            let doc = json!({
                "bin": i,
                "omega": omega,
                "kind": kind_name,
                "blocks": netlist_json(&chain),
                "gauge": mat22_to_pairs(&chain.gauge),
                "recomposition_residual": residual,
                "field_row_residual": field_residual,
                "tol": tol,
                "pass": pass,
            });
            Ok((doc, pass))
        }
        ChainKindArg::Lossless => {
            let absorption = maxabs(&b.device.a);
            if absorption > LOSSLESS_ABSORPTION_TOL {
                return Err(CliError::Check(format!(
                    "bin at omega = {omega}: absorption matrix norm {absorption:.3e} exceeds {LOSSLESS_ABSORPTION_TOL:.0e}; the lossless factorization needs A = 0"
                )));
            }
            let chain = factor_lossless(&b.device.t).map_err(check_at(omega))?;
            let mut recomposed = identity(2);
            for factor in &chain.factors {
                recomposed = recomposed.dot(&matrix_exp(&factor.generator));
            }
            let residual = maxabs_diff(&recomposed, &b.device.t);
            let pass = residual <= tol;
            let factors: Vec<Value> = chain
                .factors
                .iter()
                .map(|f| {
                    json!({
                        "label": f.label,
                        "generator": mat22_to_pairs(&f.generator),
                    })
                })
                .collect();
            let doc = json!({
                "bin": i,
                "omega": omega,
                "kind": "lossless",
                "factors": factors,
                "phase": chain.phi,
                "t": [chain.t.re, chain.t.im],
                "r": [chain.r.re, chain.r.im],
                "recomposition_residual": residual,
                "tol": tol,
                "pass": pass,
            });
            Ok((doc, pass))
        }
    }
}

fn run_factorize(args: &FactorizeArgs) -> Result<(), CliError> {
    let a = &args.common;
    let spectrum = load_spectrum(&a.spectrum, a.tol, a.renormalize).map_err(load_error)?;
    let selection = select_bins(&spectrum, a.bin, a.omega)?;
    let results: Vec<(Value, bool)> = selection
        .par_iter()
        .map(|(i, b)| factorize_bin(*i, b, args))
        .collect::<Result<_, _>>()?;
    let all_pass = results.iter().all(|(_, pass)| *pass);
    let worst = results
        .iter()
        .filter_map(|(doc, _)| doc["recomposition_residual"].as_f64())
        .fold(0.0f64, f64::max);
    let total = results.len();
    emit(results.into_iter().map(|(doc, _)| doc).collect(), a.single_bin());
    eprintln!(
        "factored {total} bin(s); worst recomposition residual {worst:.3e}"
    );
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "recomposition residual exceeded {tol:.3e}",
            tol = a.tol
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors; everything else is
            // an input problem, mapped to exit code 1.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Validate(args) => run_validate(args),
        Command::Transform(args) => run_transform(args),
        Command::Factorize(args) => run_factorize(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
    }
}
