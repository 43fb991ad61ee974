use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use survscore::{select_effect, time_transform, Candidate, CandidateSet};

use crate::output::{create, load_dataset, num, read_text, write_header, write_json, write_row};
use crate::CliError;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset in the `id,time,status,z1,...,zp` CSV format.
    pub dataset: PathBuf,
    /// Candidate-set JSON; a single all-constant candidate when omitted.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn run(args: &FitArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.dataset)?;
    let p = data.dim();
    let candidates = match &args.candidates {
        Some(path) => CandidateSet::from_json(&read_text(path)?)?,
        None => CandidateSet::new(vec![Candidate::new("constant", vec![])]),
    };
    candidates.check(p)?;
    let transformed = time_transform(&data)?;
    let selection = select_effect(&transformed, &candidates)?;
    for (name, reason) in &selection.failures {
        eprintln!("survscore: candidate {name} failed: {reason}");
    }
    let config = json!({
        "command": "fit",
        "dataset": args.dataset.display().to_string(),
        "candidates": candidates,
    });

    let mut w = create(&args.out, "ranking.csv")?;
    write_header(&mut w, &config)?;
    let mut header = vec!["rank".to_string(), "candidate".into(), "effect".into()];
    header.extend((1..=p).map(|j| format!("beta{j}")));
    header.extend(["r2", "loglik", "converged", "iterations"].map(String::from));
    write_row(&mut w, &header)?;
    for (rank, r) in selection.ranked.iter().enumerate() {
        let effect: Vec<String> = r.fit.effect.bases.iter().map(|b| b.to_string()).collect();
        let mut row = vec![(rank + 1).to_string(), r.name.clone(), effect.join(";")];
        row.extend(r.fit.effect.loadings.iter().map(|&b| num(b)));
        row.extend([num(r.fit.r2.value), num(r.fit.loglik), r.fit.converged.to_string(), r.fit.iterations.to_string()]);
        write_row(&mut w, &row)?;
        println!("{:>3}  R2 {:.4}  {}", rank + 1, r.fit.r2.value, r.name);
    }
    w.flush()?;

    let best = selection.best();
    let report = json!({
        "version": survscore::VERSION,
        "config": config,
        "best": {
            "candidate": best.name,
            "effect": best.fit.effect,
            "r2": best.fit.r2.value,
            "loglik": best.fit.loglik,
            "loglik_null": best.fit.loglik_null,
            "iterations": best.fit.iterations,
            "converged": best.fit.converged,
            "score": best.fit.score,
            "information": best.fit.information,
        },
        "ranking": selection.ranked.iter().map(|r| json!({"candidate": r.name, "r2": r.fit.r2.value})).collect::<Vec<_>>(),
        "failures": selection.failures.iter().map(|(c, e)| json!({"candidate": c, "reason": e})).collect::<Vec<_>>(),
    });
    write_json(&args.out, "best.json", &report)
}
