use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use survscore::{mix64, run_replications, simulate_dataset, write_csv, AnalysisSpec, SimulationScenario};

use crate::output::{create, read_text, write_header};
use crate::CliError;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario JSON.
    pub scenario: PathBuf,
    /// Number of replicates.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub replicates: u32,
    /// Comma-separated keywords (band, process, fit) or `@file.json` with a
    /// list of analysis specs.
    #[arg(long, default_value = "band,fit")]
    pub analyses: String,
    /// Also write the dataset analysed by replicate 0 to `dataset.csv`.
    #[arg(long)]
    pub dataset: bool,
    /// Replaces the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn parse_analyses(spec: &str) -> Result<Vec<AnalysisSpec>, CliError> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = read_text(Path::new(path))?;
        return serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{path}: {e}")));
    }
    spec.split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(|k| {
            AnalysisSpec::from_keyword(k)
                .ok_or_else(|| CliError::usage(format!("unknown analysis '{k}' (expected band, process or fit)")))
        })
        .collect()
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let text = read_text(&args.scenario)?;
    let mut scenario: SimulationScenario =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let analyses = parse_analyses(&args.analyses)?;
    let report = run_replications(&scenario, args.replicates as usize, &analyses)?;

    let mut w = create(&args.out, "report.json")?;
    report.write_json(&mut w)?;
    writeln!(w)?;
    w.flush()?;

    let config = json!({
        "command": "simulate",
        "scenario": scenario,
        "replicates": args.replicates,
        "analyses": analyses,
    });
    let mut w = create(&args.out, "report.csv")?;
    write_header(&mut w, &config)?;
    report.write_csv(&mut w)?;
    w.flush()?;

    if args.dataset {
        let data = simulate_dataset(&scenario.with_seed(mix64(scenario.seed, 0)))?;
        let mut w = create(&args.out, "dataset.csv")?;
        write_csv(&data, &mut w)?;
        w.flush()?;
    }

    for (metric, s) in &report.summary {
        println!("{metric}: mean {:.6} (se {:.6}, n = {})", s.mean, s.se, s.count);
    }
    Ok(())
}
