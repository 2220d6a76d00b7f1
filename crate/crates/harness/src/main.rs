use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use vartrack::checks::registry;
use vartrack::experiment::{run_experiment, Status};
use vartrack::formats::{
    read_family_jsonl, read_jsonl_file, verify_family, write_family_jsonl, write_file, write_json,
};
use vartrack::study::{variability_study, StudyKind};
use vartrack::{ExperimentConfig, HarnessError};
use vartrack_core::hard_instances::{flip_family, switch_family, FlipFamilySpec, SwitchFamilySpec};
use vartrack_core::rational::parse_small;
use vartrack_core::Eps;

#[derive(Parser)]
#[command(
    name = "vartrack",
    version,
    about = "Distributed tracking experiments parameterized by stream variability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and its bound checks.
    Simulate(SimulateArgs),
    /// Monte Carlo variability study over a grid of stream lengths.
    Study(StudyArgs),
    /// Generate or verify lower-bound sequence families.
    #[command(subcommand)]
    Family(FamilyCommand),
    /// List the check registry.
    Checks,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for traces, logs and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rational in (0, 1], e.g. `1/4`.
    #[arg(long)]
    eps: Option<Eps>,
    /// Check to run; repeatable. Replaces the config's list.
    #[arg(long = "check")]
    checks: Vec<String>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct StudyArgs {
    /// `monotone`, `unbiased`, `biased(MU)` or `nearly_monotone(BETA)`.
    #[arg(long)]
    kind: StudyKind,
    /// Comma-separated stream lengths.
    #[arg(long = "n", value_delimiter = ',', required = true)]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the table as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum FamilyCommand {
    /// Flip family: all r-subsets of 1..=n in colex order.
    Flip {
        #[arg(long)]
        m: i64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        /// Defaults to the whole family.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random switch family with rejection of over-variable samples.
    Switch {
        #[arg(long)]
        eps: Eps,
        /// Target variability, integer or `p/q`.
        #[arg(long)]
        v: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Force the switch probability, `p/q`.
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute variabilities and check pairwise distinctness of a family file.
    Verify {
        #[arg(long)]
        input: PathBuf,
        /// Also check that no two sequences match under this eps.
        #[arg(long)]
        eps: Option<Eps>,
        /// Print full pair lists instead of counts.
        #[arg(long)]
        full: bool,
    },
}

fn simulate(args: SimulateArgs) -> anyhow::Result<bool> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(out) = args.out {
        config.outputs = Some(out);
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(eps) = args.eps {
        config.eps = eps;
    }
    if !args.checks.is_empty() {
        config.checks = args.checks;
    }
    let report = run_experiment(&config)?;
    if !args.quiet {
        let mut out = io::stdout().lock();
        for t in &report.trials {
            writeln!(
                out,
                "trial {}: messages {} bits {} v(n) {:.4} max rel err {:.4} failure rate {:.4}",
                t.trial,
                t.messages,
                t.bits,
                t.variability_f64,
                t.max_relative_error,
                t.failure_rate
            )?;
        }
        for c in report.failures() {
            let scope = c
                .trial
                .map_or("pooled".to_string(), |t| format!("trial {t}"));
            if let Some(o) = &c.outcome {
                writeln!(
                    out,
                    "fail {} ({scope}): measured {} {} {}{}",
                    c.check,
                    o.measured,
                    o.relation,
                    o.bound,
                    o.detail
                        .as_ref()
                        .map(|d| format!(" [{d}]"))
                        .unwrap_or_default()
                )?;
            }
        }
        let count = |s: Status| report.checks.iter().filter(|c| c.status == s).count();
        writeln!(
            out,
            "{}: {} passed, {} failed, {} not applicable",
            if report.passed { "PASS" } else { "FAIL" },
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Skipped)
        )?;
    }
    Ok(report.passed)
}

fn study(args: StudyArgs) -> anyhow::Result<bool> {
    let table = variability_study(args.kind, &args.n_grid, args.trials, args.seed)?;
    match &args.out {
        Some(path) => write_json(path, &table)?,
        None => writeln!(
            io::stdout().lock(),
            "{}",
            serde_json::to_string_pretty(&table)?
        )?,
    }
    if !args.quiet {
        eprintln!(
            "{}: fitted c = {:.4}, ratio spread {:.3}",
            table.kind, table.fitted_c, table.ratio_spread
        );
    }
    Ok(table.stable && table.harmonic_exact != Some(false))
}

fn emit_family(
    out: Option<PathBuf>,
    family: &[vartrack_core::hard_instances::ValueSequence],
) -> anyhow::Result<()> {
    match out {
        Some(path) => write_file(&path, |w| write_family_jsonl(w, family))?,
        None => write_family_jsonl(io::stdout().lock(), family)?,
    }
    Ok(())
}

fn family(cmd: FamilyCommand) -> anyhow::Result<bool> {
    match cmd {
        FamilyCommand::Flip {
            m,
            n,
            r,
            count,
            out,
        } => {
            let spec = FlipFamilySpec { m, n, r };
            spec.validate()?;
            let size = spec.family_size();
            let count = count.unwrap_or_else(|| usize::try_from(size).unwrap_or(usize::MAX));
            let fam = flip_family(&spec, count)?;
            emit_family(out, &fam)?;
            eprintln!(
                "{} of {size} sequences; (n/r)^r = {:.3e}",
                fam.len(),
                spec.counting_bound()
            );
            Ok(true)
        }
        FamilyCommand::Switch {
            eps,
            v,
            n,
            count,
            seed,
            p,
            out,
        } => {
            let v = parse_small(&v).context("--v")?;
            let p_override = match p {
                Some(p) => {
                    let p = parse_small(&p).context("--p")?;
                    Some(vartrack_core::rational::small_to_q(p))
                }
                None => None,
            };
            let spec = SwitchFamilySpec {
                eps,
                v,
                n,
                count,
                seed,
                p_override,
            };
            let fam = switch_family(&spec)?;
            emit_family(out, &fam.sequences)?;
            let st = &fam.stats;
            let stats = serde_json::json!({
                "sampled": st.sampled,
                "survivors": st.survivors,
                "mean_switches": st.mean_switches,
                "pairwise_match_rate": st.pairwise_match_rate,
                "max_variability": vartrack::formats::fraction_big(&st.max_variability),
            });
            eprintln!("{stats}");
            if fam.shortfall() > 0 {
                eprintln!(
                    "shortfall: {} of {} requested sequences",
                    fam.shortfall(),
                    fam.requested
                );
                return Ok(false);
            }
            Ok(true)
        }
        FamilyCommand::Verify { input, eps, full } => {
            let lines = read_jsonl_file(&input, read_family_jsonl)?;
            if lines.is_empty() {
                bail!(HarnessError::Config(format!(
                    "{} holds no sequences",
                    input.display()
                )));
            }
            let verdict = verify_family(&lines, eps)?;
            let shown = if full {
                serde_json::to_value(&verdict)?
            } else {
                verdict.summary()
            };
            writeln!(
                io::stdout().lock(),
                "{}",
                serde_json::to_string_pretty(&shown)?
            )?;
            Ok(verdict.ok())
        }
    }
}

fn list_checks() -> anyhow::Result<bool> {
    let mut out = io::stdout().lock();
    for c in registry() {
        writeln!(
            out,
            "{:<26} {:<22} [{}] {}",
            c.name,
            c.topic,
            c.trackers().join(","),
            c.description
        )?;
    }
    Ok(true)
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Study(args) => study(args),
        Command::Family(cmd) => family(cmd),
        Command::Checks => list_checks(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
