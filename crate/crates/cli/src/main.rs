use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use deczx::format::{
    diagram_to_json, matrix_to_json, normal_form_to_json, parse_diagram, parse_matrix,
};
use deczx::fuzz::{self, FuzzConfig};
use deczx::normalform::{self, NormalFormError};
use deczx::rewrite;
use deczx::Diagram;

const EXIT_DIFFERENT: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NON_AFFINE: u8 = 3;

/// Evaluate, normalize, compare and synthesize decohered ZX diagrams.
#[derive(Parser)]
#[command(name = "deczx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the matrix a diagram evaluates to.
    Eval {
        /// Diagram file, or - for stdin.
        path: PathBuf,
    },
    /// Print the canonical normal-form datum of a diagram.
    Normalize { path: PathBuf },
    /// Exit 0 if two diagrams have the same interpretation, 1 otherwise.
    Equal {
        first: PathBuf,
        second: PathBuf,
        /// Relative tolerance on the continuous parameters.
        #[arg(long, default_value_t = normalform::DEFAULT_TOL)]
        tol: f64,
    },
    /// Build a diagram from a matrix with affine support.
    Synthesize { path: PathBuf },
    /// Fuse spiders and remove identities.
    Simplify {
        path: PathBuf,
        /// Also print the applied rules as a JSON line.
        #[arg(long)]
        trace: bool,
    },
    /// Check normalization, rewrite rules and equality on random diagrams.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum number of boundary wires.
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(0..=fuzz::MAX_WIRES as u64))]
        wires: u64,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }
}

impl From<NormalFormError> for Failure {
    fn from(e: NormalFormError) -> Self {
        match e {
            NormalFormError::NonAffine { .. } => Failure {
                code: EXIT_NON_AFFINE,
                message: e.to_string(),
            },
            other => Failure::input(other),
        }
    }
}

fn read_input(path: &PathBuf) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::input(format!("stdin: {e}")))?;
        Ok(text)
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }
}

fn load_diagram(path: &PathBuf) -> Result<Diagram, Failure> {
    let text = read_input(path)?;
    parse_diagram(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Eval { path } => {
            let d = load_diagram(&path)?;
            let m = deczx::evaluate(&d).map_err(Failure::input)?;
            println!("{}", matrix_to_json(&m));
        }
        Command::Normalize { path } => {
            let nf = normalform::normalize_diagram(&load_diagram(&path)?)?;
            println!("{}", normal_form_to_json(&nf));
        }
        Command::Equal { first, second, tol } => {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Failure::input(format!(
                    "tolerance must be nonnegative, got {tol}"
                )));
            }
            if first.as_os_str() == "-" && second.as_os_str() == "-" {
                return Err(Failure::input(
                    "stdin can supply only one of the two diagrams",
                ));
            }
            let (a, b) = (load_diagram(&first)?, load_diagram(&second)?);
            let equal = normalform::diagrams_equal(&a, &b, tol)?;
            println!("{}", json!({ "equal": equal }));
            return Ok(if equal { 0 } else { EXIT_DIFFERENT });
        }
        Command::Synthesize { path } => {
            let text = read_input(&path)?;
            let m = parse_matrix(&text)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            let d = normalform::synthesize(&m)?;
            println!("{}", diagram_to_json(&d));
        }
        Command::Simplify { path, trace } => {
            let (d, steps) = rewrite::simplify_traced(&load_diagram(&path)?);
            println!("{}", diagram_to_json(&d));
            if trace {
                println!("{}", json!({ "trace": steps }));
            }
        }
        Command::Fuzz {
            seed,
            wires,
            iters,
            inject_fault,
        } => {
            let report = fuzz::run(&FuzzConfig {
                seed,
                wires: wires as usize,
                iters,
                inject_fault,
            });
            for f in &report.failures {
                let reproducer: serde_json::Value =
                    serde_json::from_str(&f.reproducer).expect("reproducer is JSON");
                println!(
                    "{}",
                    json!({ "iteration": f.iteration, "check": f.check, "detail": f.detail, "reproducer": reproducer })
                );
            }
            println!(
                "{}",
                json!({
                    "seed": seed,
                    "iterations": report.iterations,
                    "checks": report.checks,
                    "failures": report.failures.len(),
                    "passed": report.passed(),
                })
            );
            return Ok(if report.passed() { 0 } else { EXIT_DIFFERENT });
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
