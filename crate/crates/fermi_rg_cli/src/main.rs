use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fermi_rg::config::{FamilySpec, HoelderSpec, LadderDemoSpec, RunConfig};
use fermi_rg::emit::diagnostic;
use fermi_rg::scenario::{run, Outcome, Scenario, ScenarioKind, ScenarioSpec, EXIT_CONFIG};

const THREADS_ENV: &str = "FERMI_RG_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fermi-rg", version, about = "Scenario runner for the fermi_rg toolkit")]
struct Cli {
    /// Seed for randomized test data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output format for tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Occupation-number jump across the Fermi curve.
    JumpSweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ladder recursion, closed form and telescoping residuals.
    LadderDemo {
        #[arg(long)]
        scales: Option<i32>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        lmax: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resummed P, Q, Sigma and dSigma/dk0 on off-shell samples.
    Resum {
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        check_budget: bool,
        #[arg(long)]
        top: Option<i32>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hoelder certificate and fitted exponent of the sine family.
    HoelderCheck {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        c0: f64,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derivative budget of every q term of a family.
    NormBudget {
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        top: Option<i32>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &Option<PathBuf>) -> fermi_rg::Result<RunConfig> {
    match config {
        Some(p) => RunConfig::load(p),
        None => RunConfig::parse(""),
    }
}

fn family_spec(base: Option<FamilySpec>, family: &Option<String>, top: Option<i32>) -> FamilySpec {
    let mut spec = base.unwrap_or_default();
    if let Some(f) = family {
        spec.family = f.clone();
    }
    if top.is_some() {
        spec.top = top;
    }
    spec
}

fn build(cli: &Cli) -> fermi_rg::Result<(Scenario, Option<PathBuf>)> {
    let (kind, cfg, out) = match &cli.command {
        Command::JumpSweep { config, out } => (ScenarioKind::JumpSweep, load(config)?, out.clone()),
        Command::LadderDemo { config, out, .. } => (ScenarioKind::LadderDemo, load(config)?, out.clone()),
        Command::Resum { config, out, .. } => (ScenarioKind::Resum, load(config)?, out.clone()),
        Command::HoelderCheck { out, .. } => (ScenarioKind::HoelderCheck, load(&None)?, out.clone()),
        Command::NormBudget { config, out, .. } => (ScenarioKind::NormBudget, load(config)?, out.clone()),
    };
    let mut s = Scenario::from_config(&cfg, kind, cli.seed);
    s.spec = match &cli.command {
        Command::JumpSweep { .. } => s.spec,
        Command::LadderDemo {
            scales, grid, lmax, ..
        } => {
            let mut spec = cfg.ladder_demo.clone().unwrap_or_else(LadderDemoSpec::default);
            spec.scales = scales.unwrap_or(spec.scales);
            spec.grid = grid.unwrap_or(spec.grid);
            spec.lmax = lmax.unwrap_or(spec.lmax);
            ScenarioSpec::LadderDemo(spec)
        }
        Command::Resum {
            family,
            check_budget,
            top,
            ..
        } => ScenarioSpec::Resum {
            family: family_spec(cfg.resum.clone(), family, *top),
            check_budget: *check_budget,
        },
        Command::HoelderCheck {
            alpha,
            beta,
            c0,
            c1,
            m,
            ..
        } => ScenarioSpec::HoelderCheck(HoelderSpec {
            alpha: *alpha,
            beta: *beta,
            c0: *c0,
            c1: *c1,
            m: *m,
            ..Default::default()
        }),
        Command::NormBudget { family, top, .. } => {
            ScenarioSpec::NormBudget(family_spec(cfg.norm_budget.clone(), family, *top))
        }
    };
    Ok((s, out))
}

fn render(o: &Outcome, format: Format) -> String {
    let mut text = match (&o.table, format) {
        (Some(t), Format::Json) => t.to_json(),
        _ => o.primary.clone(),
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text
}

fn sibling(out: &Path, name: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}.{name}.{ext}"))
}

fn write_outputs(o: &Outcome, format: Format, out: &Option<PathBuf>) -> fermi_rg::Result<()> {
    let primary = render(o, format);
    match out {
        Some(p) => {
            std::fs::write(p, primary)?;
            for (name, text) in &o.extra {
                std::fs::write(sibling(p, name), text)?;
            }
        }
        None => print!("{primary}"),
    }
    Ok(())
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v}"))?;
        if n == 0 {
            return Err(format!("{THREADS_ENV} must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            eprintln!("{}", diagnostic("usage", &e.kind().to_string(), EXIT_CONFIG));
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("{}", diagnostic("config", &msg, EXIT_CONFIG));
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let (scenario, out) = match build(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{}", diagnostic("config", &e.to_string(), EXIT_CONFIG));
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let kind = scenario.kind();
    let mut outcome = run(&scenario);
    if !outcome.primary.is_empty() {
        if let Err(e) = write_outputs(&outcome, cli.format, &out) {
            outcome.diagnostics.push(diagnostic("io", &e.to_string(), EXIT_CONFIG));
            outcome.exit_code = outcome.exit_code.max(EXIT_CONFIG);
        }
    }
    if !outcome.summary.is_empty() {
        eprintln!("{} {}", kind.name(), outcome.summary);
    }
    for d in &outcome.diagnostics {
        eprintln!("{d}");
    }
    ExitCode::from(outcome.exit_code as u8)
}
