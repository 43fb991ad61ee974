use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use survscore::{bridge_sup_statistic, confidence_bands, kolmogorov_quantile, score_process, time_transform_at};

use crate::output::{create, load_dataset, num, write_header, write_json, write_row};
use crate::CliError;

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Dataset in the `id,time,status,z1,...,zp` CSV format.
    pub dataset: PathBuf,
    /// Point at which the process is evaluated, comma separated [default: zeros].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta0: Option<Vec<f64>>,
    /// Level of the confidence bands.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}

pub fn run(args: &DiagnoseArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.dataset)?;
    let p = data.dim();
    let beta0 = match &args.beta0 {
        Some(b) if b.len() != p => {
            return Err(CliError::usage(format!("--beta0 has {} values but the dataset has {p} covariates", b.len())))
        }
        Some(b) => b.clone(),
        None => vec![0.0; p],
    };
    let transformed = time_transform_at(&data, &beta0)?;
    let trace = score_process(&transformed, &beta0)?;
    let bands = confidence_bands(&trace, args.alpha)?;
    let quantile = kolmogorov_quantile(args.alpha)?;
    let standardized = trace.standardized()?;
    let config = json!({
        "command": "diagnose",
        "dataset": args.dataset.display().to_string(),
        "beta0": beta0,
        "alpha": args.alpha,
    });

    let mut w = create(&args.out, "process.csv")?;
    write_header(&mut w, &config)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=p).map(|i| format!("u{i}")));
    header.extend((1..=p).map(|i| format!("s{i}")));
    for i in 1..=p {
        header.push(format!("lower{i}"));
        header.push(format!("upper{i}"));
    }
    write_row(&mut w, &header)?;
    for (j, &t) in trace.grid.iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(trace.values[j].iter().map(|&v| num(v)));
        row.extend(standardized[j].iter().map(|&v| num(v)));
        for band in &bands {
            row.push(num(band.lower(t)));
            row.push(num(band.upper(t)));
        }
        write_row(&mut w, &row)?;
    }
    w.flush()?;

    let sigma = &trace.sigma_hat.as_ref().expect("bands need the standardization").matrix;
    let mut components = Vec::new();
    for band in &bands {
        let sup = bridge_sup_statistic(&trace, band.component)?;
        let verdict = if band.rejects() { "reject constant effect" } else { "consistent with a constant effect" };
        println!("z{}: sup statistic {sup:.4} vs a({}) = {quantile:.4}, {verdict}", band.component + 1, args.alpha);
        components.push(json!({
            "component": band.component + 1,
            "sup_statistic": sup,
            "slope": band.slope,
            "half_width": band.half_width,
            "reject": band.rejects(),
            "crossed_at": band.crossed,
        }));
    }
    let decisions = json!({
        "version": survscore::VERSION,
        "config": config,
        "n": data.len(),
        "p": p,
        "k_n": trace.k_n,
        "quantile": quantile,
        "sigma_hat": (0..p).map(|i| (0..p).map(|j| sigma[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "components": components,
    });
    write_json(&args.out, "decisions.json", &decisions)
}
