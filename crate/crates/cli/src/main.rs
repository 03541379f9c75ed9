use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod output;

use config::{RunConfig, SCHEMA_VERSION};
use output::Format;

/// Asymptotic analysis and simulation of FDR-controlling step-up procedures.
#[derive(Parser, Debug)]
#[command(name = "fdrt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Overrides simulation.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for simulations; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Asymptotic threshold, pFDR, CLT spread and conditions per procedure.
    Analyze(Common),
    /// Apply procedures to a p-value CSV (columns pvalue[,is_null]).
    Apply {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sample: PathBuf,
        /// Fail unless the sample carries labels.
        #[arg(long)]
        fdp: bool,
    },
    /// Monte Carlo study of FDP against the limit laws.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Keep every replicate (JSON field `raw`, or PATH.raw.csv).
        #[arg(long)]
        raw: bool,
    },
    /// Fixed-point iteration from a two-stage procedure to its one-stage limit.
    Iterate(Common),
    /// Asymptotic power ordering for every pair of procedures.
    Compare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Analyze(c) | Command::Iterate(c) | Command::Compare(c) => c,
            Command::Apply { common, .. } | Command::Simulate { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Apply { .. } => "apply",
            Command::Simulate { .. } => "simulate",
            Command::Iterate(_) => "iterate",
            Command::Compare(_) => "compare",
        }
    }
}

#[derive(Serialize)]
struct Document<'a> {
    command: &'static str,
    schema_version: u32,
    seed: Option<u64>,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample: Option<String>,
    results: &'a serde_json::Value,
}

fn sidecar(out: &Path, tag: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(format!(".{tag}.csv"));
    PathBuf::from(name)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let common = cli.command.common();
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        match cfg.simulation.as_mut() {
            Some(s) => s.seed = seed,
            None if matches!(cli.command, Command::Simulate { .. }) => {}
            None => eprintln!("note: --seed has no effect without a simulation block"),
        }
    }
    // Embed what actually runs: FDR08's κ and BH95o's π₀ come from the model.
    if let Some(model) = cfg.model {
        cfg.procedures = cfg
            .procedures
            .iter()
            .map(|s| s.resolved_for(model.pi0()))
            .collect::<fdr_threshold::Result<_>>()?;
    }
    let mut sample_path = None;
    let produced = match &cli.command {
        Command::Analyze(_) => commands::analyze(&cfg)?,
        Command::Apply { sample, fdp, .. } => {
            let file = File::open(sample).with_context(|| format!("opening {}", sample.display()))?;
            let s = fdr_threshold::LabeledSample::read_csv(file).with_context(|| format!("reading {}", sample.display()))?;
            sample_path = Some(sample.display().to_string());
            commands::apply(&cfg, &s, *fdp)?
        }
        Command::Simulate { raw, .. } => commands::simulate(&cfg, *raw, common.workers)?,
        Command::Iterate(_) => commands::iterate_cmd(&cfg)?,
        Command::Compare(_) => commands::compare(&cfg)?,
    };

    let seed = cfg.simulation.as_ref().map(|s| s.seed);
    let doc = Document {
        command: cli.command.name(),
        schema_version: SCHEMA_VERSION,
        seed,
        config: &cfg,
        sample: sample_path.clone(),
        results: &produced.results,
    };
    let sink: Box<dyn Write> = match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    match common.format {
        Format::Json => output::write_json(sink, &doc)?,
        Format::Csv => {
            let mut preamble = vec![
                format!("command: {}", doc.command),
                format!("seed: {}", seed.map_or("none".to_string(), |s| s.to_string())),
                format!("config: {}", output::compact_json(&cfg)?),
            ];
            if let Some(s) = &sample_path {
                preamble.push(format!("sample: {s}"));
            }
            output::write_csv_rows(sink, &preamble, &produced.rows)?;
            for (tag, rows) in &produced.extra_tables {
                let Some(out) = &common.out else {
                    bail!("the {tag} table needs --out when writing CSV");
                };
                let path = sidecar(out, tag);
                let f = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                output::write_csv_rows(f, &preamble, rows)?;
            }
        }
    }
    Ok(if produced.precondition_failed {
        eprintln!("a mathematical precondition failed; see the status column");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let precondition = e
                .chain()
                .any(|c| c.downcast_ref::<fdr_threshold::Error>().is_some_and(|x| x.is_precondition_failure()));
            ExitCode::from(if precondition { 2 } else { 1 })
        }
    }
}
