use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flatlas::atlas::{corpus, parse_split, split_list, AnalysisReport, DegenerateRequest, Format, Session, SystemFile};
use flatlas::sampling::DEFAULT_SEED;
use flatlas::Error;

#[derive(Parser)]
#[command(name = "flatlas", version, about = "Flatness analysis of control-affine systems")]
struct Cli {
    /// Sampling seed (decimal or 0x-hex).
    #[arg(long, global = true, env = "FLATLAS_SEED", value_parser = parse_seed, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Classify points (all named points when --point is omitted).
    Classify {
        file: PathBuf,
        /// A named point, or `x=…` and optional `u=…`.
        #[arg(long, num_args = 1..=2)]
        point: Option<Vec<String>>,
    },
    /// Pairwise brackets of the drift and control fields.
    Brackets { file: PathBuf },
    /// Verify a generic-route flat output.
    FlatGeneric {
        file: PathBuf,
        #[arg(long, num_args = 1..=2, required = true)]
        point: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated components, e.g. "x1, x2".
        #[arg(long)]
        psi: Option<String>,
    },
    /// Run the degenerate route at a point.
    FlatDegenerate {
        file: PathBuf,
        #[arg(long, num_args = 1..=2, required = true)]
        point: Vec<String>,
        /// Control split, e.g. a=1,2,b=3.
        #[arg(long)]
        split: Option<String>,
        /// Jet truncation order (default 2p−2).
        #[arg(long)]
        order: Option<usize>,
        /// Comma-separated φ candidates.
        #[arg(long)]
        phi: Option<String>,
    },
    /// Run both routes over the named points and list the verified charts.
    Atlas { file: PathBuf },
    /// Numeric round trip along one chart of the atlas.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        chart: String,
        /// Comma-separated closed-form components in `t`.
        #[arg(long)]
        signal: String,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| format!("bad seed `{s}`: {e}"))
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(path: &Path) -> Result<SystemFile, Failure> {
    match std::fs::read_to_string(path) {
        Ok(text) => SystemFile::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        Err(err) => path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(corpus)
            .ok_or_else(|| Failure::Usage(format!("{}: {err}", path.display()))),
    }
}

fn session(path: &Path, seed: u64) -> Result<Session, Failure> {
    Session::new(load(path)?, seed).map_err(usage)
}

fn run(cli: Cli) -> Result<AnalysisReport, Failure> {
    match cli.command {
        Command::Classify { file, point } => {
            let s = session(&file, cli.seed)?;
            let points = match point {
                Some(tokens) => vec![s.resolve_point(&tokens).map_err(usage)?],
                None => s.file.points.iter().map(|p| (p.name.clone(), s.file.point_map(p))).collect(),
            };
            s.classify(&points).map_err(runtime)
        }
        Command::Brackets { file } => session(&file, cli.seed)?.brackets().map_err(runtime),
        Command::FlatGeneric { file, point, k, psi } => {
            let s = session(&file, cli.seed)?;
            let (name, pt) = s.resolve_point(&point).map_err(usage)?;
            let psi = psi.map(|p| s.file.parse_exprs(&p)).transpose().map_err(usage)?;
            s.flat_generic(&name, &pt, k, psi).map_err(runtime)
        }
        Command::FlatDegenerate { file, point, split, order, phi } => {
            let s = session(&file, cli.seed)?;
            let (name, pt) = s.resolve_point(&point).map_err(usage)?;
            let split = split.map(|t| parse_split(&t)).transpose().map_err(usage)?;
            let phi = phi.map(|p| s.file.parse_exprs(&p)).transpose().map_err(usage)?;
            let req = DegenerateRequest { name: "cli".into(), split, phi, order };
            s.flat_degenerate(&name, &pt, &req).map_err(runtime)
        }
        Command::Atlas { file } => session(&file, cli.seed)?.atlas().map(|(r, _)| r).map_err(runtime),
        Command::Simulate { file, chart, signal, t_end, dt, tol } => {
            let s = session(&file, cli.seed)?;
            if !(dt > 0.0 && t_end > 0.0) {
                return Err(Failure::Usage("--dt and --t-end must be positive".into()));
            }
            s.simulate(&chart, &split_list(&signal), t_end, dt, tol).map_err(|e| match e {
                Error::Invalid(_) | Error::Parse(_) => usage(e),
                e => runtime(e),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = match cli.format {
        OutputFormat::Text => Format::Text,
        OutputFormat::Json => Format::Json,
    };
    match run(cli) {
        Ok(report) => {
            print!("{}", report.render(format));
            ExitCode::from(if report.passed { 0 } else { 1 })
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
