mod commands;
mod report;

use clap::{Args, Parser, Subcommand};
use projconst::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "projconst", version, about = "Maximal projection constants, ETFs and their certificates")]
struct Cli {
    /// Write the JSON run report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Print the JSON run report instead of the text summary.
    #[arg(long, global = true)]
    json: bool,
    /// Record wall-clock time in the report (makes reports non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
    #[arg(long, global = true, default_value_t = 1e-9)]
    residual_tol: f64,
    #[arg(long, global = true, default_value_t = 1e-12)]
    identity_tol: f64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    lp_tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DimArgs {
    #[arg(long)]
    pub field: String,
    #[arg(long)]
    pub n: usize,
}

#[derive(Args, Debug, Clone)]
pub struct OptArgs {
    #[arg(long)]
    pub field: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "N")]
    pub big_n: usize,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Falls back to PROJCONST_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the best frame as a frame document.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum EtfCommand {
    /// Build a maximal ETF (tags R2, R3, R7, C2, C3).
    Build {
        #[arg(long)]
        tag: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check norms, equiangularity and tightness of a vector set.
    Verify {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// d, φ, δ and the zonotope scale for one dimension.
    Constants(DimArgs),
    /// Build or verify an ETF vector set.
    #[command(subcommand)]
    Etf(EtfCommand),
    /// Evaluate Σ t_i t_j |⟨u_i,u_j⟩| on a weighted frame.
    Phi {
        #[arg(long)]
        input: PathBuf,
    },
    /// Test the four equality conditions on a weighted frame.
    EqualityCheck {
        #[arg(long)]
        input: PathBuf,
    },
    /// Maximize over tight frames and weights.
    Maximize(OptArgs),
    /// Maximize over tight frames with uniform weights.
    Mu(OptArgs),
    /// Compare the uniform-weight maximum with δ and the divisibility of N.
    Divisibility(OptArgs),
    /// Membership of a point in absconv{w} or in the rescaled zonotope.
    Contains {
        #[arg(long)]
        etf: String,
        /// Point document {"field": .., "vector": [..]}.
        #[arg(long)]
        point: PathBuf,
        #[arg(long, value_parser = ["absconv", "zonotope"], default_value = "absconv")]
        set: String,
    },
    /// absconv{w} ⊆ T(B) ⊆ C·Z(w) for a supplied T (identity by default).
    Sandwich {
        #[arg(long)]
        ball: PathBuf,
        #[arg(long)]
        etf: String,
        /// Matrix document for T.
        #[arg(long)]
        transform: Option<PathBuf>,
    },
    /// Nested family of extremal dual balls between absconv{w} and C·Z(w).
    Family {
        #[arg(long)]
        etf: String,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory receiving ball_1.json .. ball_k.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Minimal projection onto the embedded space of a real dual ball.
    Minproj {
        #[arg(long)]
        input: PathBuf,
        /// Write the full LP in text form.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Build and verify the trace-duality operator for an ETF ball.
    Cm {
        #[arg(long)]
        etf: String,
        /// Coefficient grid document; omitted means no zonotope rows.
        #[arg(long)]
        coeffs: Option<PathBuf>,
    },
    /// Check w_j ∈ C·Z(w) via sign coefficients.
    Inclusion {
        #[arg(long)]
        etf: String,
    },
    /// Search for a point separating absconv{w} from C·Z(w).
    Witness {
        #[arg(long)]
        etf: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Exit status of a finished command.
pub enum Verdict {
    Ok,
    Failed,
}

fn exit_code(e: &Error) -> (u8, &'static str) {
    match e {
        Error::VerificationFailed(_) | Error::ConditionsNotMet | Error::NoStrictGap => (1, "verification_failed"),
        Error::Undetermined { .. } | Error::NumericalFailure(_) | Error::SamplingExhausted { .. } => {
            (3, "undetermined")
        }
        _ => (2, "bad_input"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(&cli, argv) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Failed) => ExitCode::from(1),
        Err(err) => {
            let (code, kind) = match err.downcast_ref::<Error>() {
                Some(e) => exit_code(e),
                None => (2, "bad_input"),
            };
            eprintln!("error[{kind}]: {err:#}");
            eprintln!(
                "{}",
                serde_json::json!({"error": kind, "code": code, "message": format!("{err:#}")})
            );
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::VerificationFailed("x".into())).0, 1);
        assert_eq!(exit_code(&Error::Undetermined { residual: 1.0, iterations: 3 }).0, 3);
        assert_eq!(exit_code(&Error::Parse("x".into())).0, 2);
        assert_eq!(exit_code(&Error::ComplexUnsupported).0, 2);
    }
}
