use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use feller_core::analytic::SymmetryKind;
use feller_core::experiment::{
    flagged_diagnostics, run_diagnostics, run_experiment, Check, DiagnosticReport, Family, Preset,
    RunConfig,
};
use feller_core::{FellerError, MeanKind};

#[derive(Parser)]
#[command(
    name = "feller",
    version,
    about = "Lagrangian solver and diagnostics for Feller's diffusion equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write snapshots and a summary.
    Run(RunArgs),
    /// Run one diagnostic check and print its report.
    Diag(DiagArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "FELLER_OUT", default_value = "feller-out")]
    out: PathBuf,
    /// Mean used for the node gaps; overrides the configuration.
    #[arg(long, value_enum)]
    mean: Option<MeanArg>,
    /// Seed for Monte Carlo comparisons.
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false, args = ["config", "preset"])]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Also write node positions at every accepted step.
    #[arg(long)]
    trajectories: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, value_enum)]
    check: CheckArg,
    /// Preset supplying the run for conservation, oracle and mc checks.
    #[arg(long, value_enum, default_value = "expand")]
    preset: PresetArg,
    /// Restrict the residual check to these families (repeatable).
    #[arg(long, value_enum)]
    family: Vec<FamilyArg>,
    /// Restrict the symmetry check to these maps (repeatable).
    #[arg(long, value_enum)]
    kind: Vec<KindArg>,
    /// Monte Carlo path count.
    #[arg(long, default_value_t = 1_000_000)]
    paths: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Steady,
    Expand,
    Confine,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Steady => Preset::Steady,
            PresetArg::Expand => Preset::Expand,
            PresetArg::Confine => Preset::Confine,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MeanArg {
    Arithmetic,
    Geometric,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Residual,
    Symmetry,
    Conservation,
    Oracle,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FamilyArg {
    SteadyExp,
    SteadyGeneral,
    Xi3,
    Xi4,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum KindArg {
    TimeShift,
    ScaleP,
    #[value(name = "exp_scale_3")]
    ExpScale3,
    #[value(name = "exp_scale_4")]
    ExpScale4,
    AddKummerM,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::SteadyExp => Family::SteadyExp,
            FamilyArg::SteadyGeneral => Family::SteadyGeneral,
            FamilyArg::Xi3 => Family::Xi3,
            FamilyArg::Xi4 => Family::Xi4,
        }
    }
}

impl From<KindArg> for SymmetryKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::TimeShift => SymmetryKind::TimeShift,
            KindArg::ScaleP => SymmetryKind::ScaleP,
            KindArg::ExpScale3 => SymmetryKind::ExpScale3,
            KindArg::ExpScale4 => SymmetryKind::ExpScale4,
            KindArg::AddKummerM => SymmetryKind::AddKummerM,
        }
    }
}

const EXIT_BREACH: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INTEGRATION: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(err: &FellerError) -> u8 {
    match err {
        FellerError::Io(_) => EXIT_IO,
        FellerError::InvalidConfig(_)
        | FellerError::Parse { .. }
        | FellerError::Domain { .. }
        | FellerError::DegenerateGrid { .. }
        | FellerError::TailNotReached { .. } => EXIT_CONFIG,
        FellerError::OrderingViolation { .. }
        | FellerError::StepSizeUnderflow { .. }
        | FellerError::NonConvergence { .. }
        | FellerError::TruncationInvalid { .. }
        | FellerError::EmptyOverlap => EXIT_INTEGRATION,
    }
}

fn apply_mean(cfg: &mut RunConfig, mean: Option<MeanArg>) {
    match mean {
        Some(MeanArg::Arithmetic) => cfg.mean = MeanKind::Arithmetic,
        Some(MeanArg::Geometric) => cfg.mean = MeanKind::Geometric,
        None => {}
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, FellerError> {
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        (None, Some(preset)) => Preset::from(preset).config(),
        (None, None) => unreachable!("clap requires one source"),
    };
    apply_mean(&mut cfg, args.common.mean);
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(report: &DiagnosticReport, path: &Path) -> Result<(), FellerError> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(path, report.to_csv())?;
    Ok(())
}

fn run(args: &RunArgs) -> Result<bool, FellerError> {
    let cfg = load_config(args)?;
    let out = &args.common.out;
    let outcome = run_experiment(&cfg, out, args.trajectories)?;
    let s = &outcome.summary;
    println!(
        "N={} T={} accepted={} rejected={} mass={} support_ratio={:.4} max_moment_rel_error={:.3e} elapsed={:.2}s",
        s.n,
        s.t_final,
        s.accepted_steps,
        s.rejected_steps,
        s.total_probability,
        s.support_ratio,
        s.max_moment_rel_error,
        s.elapsed_seconds
    );
    let report = flagged_diagnostics(&cfg, &outcome, args.common.seed)?;
    if !report.sections.is_empty() || !report.breaches.is_empty() {
        print!("{}", report.to_csv());
        write_report(&report, &out.join("diagnostics.csv"))?;
    }
    println!("wrote {}", out.display());
    Ok(report.passed())
}

fn diag(args: &DiagArgs) -> Result<bool, FellerError> {
    let mut cfg = Preset::from(args.preset).config();
    apply_mean(&mut cfg, args.common.mean);
    let (check, name) = match args.check {
        CheckArg::Residual => {
            let families = if args.family.is_empty() {
                Family::ALL.to_vec()
            } else {
                args.family.iter().map(|&f| f.into()).collect()
            };
            (Check::Residual(families), "residual")
        }
        CheckArg::Symmetry => {
            let kinds = if args.kind.is_empty() {
                SymmetryKind::ALL.to_vec()
            } else {
                args.kind.iter().map(|&k| k.into()).collect()
            };
            (Check::Symmetry(kinds), "symmetry")
        }
        CheckArg::Conservation => (Check::Conservation, "conservation"),
        CheckArg::Oracle => (Check::Oracle, "oracle"),
        CheckArg::Mc => (Check::Mc { paths: args.paths }, "mc"),
    };
    let report = run_diagnostics(&check, &cfg, args.common.seed)?;
    print!("{}", report.to_csv());
    write_report(&report, &args.common.out.join(format!("diag_{name}.csv")))?;
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Diag(args) => diag(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("feller: diagnostic threshold breached");
            ExitCode::from(EXIT_BREACH)
        }
        Err(e) => {
            eprintln!("feller: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
