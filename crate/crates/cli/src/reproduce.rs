//! Data behind the simulation tables and figures: the published single-draw
//! values next to a fresh draw and Monte-Carlo summaries over replicates.

use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args};
use serde_json::{json, Value};
use survscore::{
    confidence_bands, expected_drift, run_replications, scenarios, score_process, select_effect, simulate_dataset,
    time_transform, AnalysisSpec, Basis, CandidateSet, ReplicationReport, Selection, SimulationScenario,
};

use crate::output::{create, num, write_header, write_row};
use crate::CliError;

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("target").required(true).args(["table", "figure"])))]
pub struct ReproduceArgs {
    /// Table to regenerate (1 or 2).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub table: Option<u8>,
    /// Figure to regenerate (1 or 2).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub figure: Option<u8>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte-Carlo replicates behind the summaries.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    pub replicates: u32,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

const N: usize = 200;

// Published single-draw values, in candidate order.
const TABLE1_BETA: [f64; 5] = [1.06, 2.45, 3.73, 1.77, 1.83];
const TABLE1_R2: [f64; 5] = [0.25, 0.36, 0.37, 0.34, 0.34];
const TABLE1_RATIO: f64 = 0.16;
const TABLE2_BETA1: [f64; 7] = [0.45, 0.93, 0.96, 0.89, 0.95, 0.86, 0.72];
const TABLE2_BETA2: [f64; 7] = [-0.73, -0.72, -0.73, -0.74, -0.79, -0.80, -0.77];
const TABLE2_R2: [f64; 7] = [0.24, 0.35, 0.37, 0.35, 0.39, 0.37, 0.32];
const TABLE2_RATIO_AT_06: f64 = -0.12;

pub fn run(args: &ReproduceArgs) -> Result<(), CliError> {
    let config = json!({
        "command": "reproduce",
        "table": args.table,
        "figure": args.figure,
        "seed": args.seed,
        "replicates": args.replicates,
    });
    match (args.table, args.figure) {
        (Some(1), _) => table(args, &config, 1),
        (Some(2), _) => table(args, &config, 2),
        (_, Some(f)) => figure(args, &config, f),
        _ => Err(CliError::usage("choose --table 1|2 or --figure 1|2")),
    }
}

/// Type-7 quantile of unsorted values.
fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q * (v.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

struct Row {
    quantity: &'static str,
    source: &'static str,
    cells: Vec<Option<f64>>,
}

/// Rows for one per-candidate metric: published values, the draw, and replicate summaries.
fn metric_rows(
    quantity: &'static str,
    published: Option<Vec<Option<f64>>>,
    draw: Vec<Option<f64>>,
    report: &ReplicationReport,
    key: impl Fn(&str) -> String,
    names: &[String],
) -> Vec<Row> {
    let values: Vec<Vec<f64>> = names.iter().map(|n| report.values(&key(n))).collect();
    let summary = |f: &dyn Fn(&[f64]) -> f64| values.iter().map(|v| (!v.is_empty()).then(|| f(v))).collect();
    let mut rows = Vec::new();
    if let Some(cells) = published {
        rows.push(Row { quantity, source: "published", cells });
    }
    rows.push(Row { quantity, source: "draw", cells: draw });
    rows.push(Row { quantity, source: "mc_mean", cells: summary(&|v| v.iter().sum::<f64>() / v.len() as f64) });
    rows.push(Row { quantity, source: "mc_q025", cells: summary(&|v| quantile(v, 0.025)) });
    rows.push(Row { quantity, source: "mc_q975", cells: summary(&|v| quantile(v, 0.975)) });
    rows
}

fn draw_metric(
    selection: &Selection,
    names: &[String],
    f: impl Fn(&survscore::RankedFit) -> Option<f64>,
) -> Vec<Option<f64>> {
    names.iter().map(|n| selection.ranked.iter().find(|r| &r.name == n).and_then(&f)).collect()
}

fn ratio_of(r: &survscore::RankedFit) -> Option<f64> {
    match r.fit.effect.bases[0] {
        Basis::Changepoint { ratio, .. } => Some(ratio),
        _ => None,
    }
}

fn table(args: &ReproduceArgs, config: &Value, which: u8) -> Result<(), CliError> {
    let (scenario, candidates): (SimulationScenario, CandidateSet) = match which {
        1 => (scenarios::decaying_effect(N, args.seed), scenarios::decay_candidates()),
        _ => (scenarios::bivariate_changepoint(N, args.seed), scenarios::changepoint_candidates()),
    };
    let names = candidates.labels();
    let data = time_transform(&simulate_dataset(&scenario)?)?;
    let selection = select_effect(&data, &candidates)?;
    let report = run_replications(
        &scenario,
        args.replicates as usize,
        &[AnalysisSpec::Select { candidates: candidates.clone() }],
    )?;
    let some = |xs: &[f64]| Some(xs.iter().map(|&x| Some(x)).collect::<Vec<_>>());

    let mut rows = Vec::new();
    let loading = |j: usize| move |r: &survscore::RankedFit| Some(r.fit.effect.loadings[j]);
    if which == 1 {
        rows.extend(metric_rows(
            "beta",
            some(&TABLE1_BETA),
            draw_metric(&selection, &names, loading(0)),
            &report,
            |n| format!("select.beta1[{n}]"),
            &names,
        ));
    } else {
        rows.extend(metric_rows(
            "beta1",
            some(&TABLE2_BETA1),
            draw_metric(&selection, &names, loading(0)),
            &report,
            |n| format!("select.beta1[{n}]"),
            &names,
        ));
        rows.extend(metric_rows(
            "beta2",
            some(&TABLE2_BETA2),
            draw_metric(&selection, &names, loading(1)),
            &report,
            |n| format!("select.beta2[{n}]"),
            &names,
        ));
    }
    let published_r2: &[f64] = if which == 1 { &TABLE1_R2 } else { &TABLE2_R2 };
    rows.extend(metric_rows(
        "r2",
        some(published_r2),
        draw_metric(&selection, &names, |r| Some(r.fit.r2.value)),
        &report,
        |n| format!("select.r2[{n}]"),
        &names,
    ));
    let published_ratio = names
        .iter()
        .map(|n| match (which, n.as_str()) {
            (1, "changepoint(0.5)") => Some(TABLE1_RATIO),
            (2, "changepoint(0.6)") => Some(TABLE2_RATIO_AT_06),
            _ => None,
        })
        .collect();
    rows.extend(metric_rows(
        "slope_ratio",
        Some(published_ratio),
        draw_metric(&selection, &names, ratio_of),
        &report,
        |n| format!("select.ratio1[{n}]"),
        &names,
    ));
    let top = selection.best().name.clone();
    rows.push(Row {
        quantity: "top",
        source: "draw",
        cells: names.iter().map(|n| Some((n == &top) as u8 as f64)).collect(),
    });
    rows.push(Row {
        quantity: "top",
        source: "mc_rate",
        cells: names.iter().map(|n| report.mean(&format!("select.top[{n}]"))).collect(),
    });

    let name = format!("table{which}.csv");
    let mut w = create(&args.out, &name)?;
    write_header(&mut w, config)?;
    let mut header = vec!["quantity".to_string(), "source".into()];
    header.extend(names.iter().cloned());
    write_row(&mut w, &header)?;
    for row in &rows {
        let mut fields = vec![row.quantity.to_string(), row.source.to_string()];
        fields.extend(row.cells.iter().map(|c| c.map(num).unwrap_or_default()));
        write_row(&mut w, &fields)?;
    }
    w.flush()?;

    println!("table {which}: R2 by candidate (published / draw / mean of {} replicates)", args.replicates);
    for (i, n) in names.iter().enumerate() {
        let draw = draw_metric(&selection, &names, |r| Some(r.fit.r2.value))[i];
        let mean = report.mean(&format!("select.r2[{n}]"));
        println!(
            "  {n:<18} {:.2} / {} / {}",
            published_r2[i],
            draw.map_or("-".into(), |v| format!("{v:.3}")),
            mean.map_or("-".into(), |v| format!("{v:.3}"))
        );
    }
    println!("wrote {}", args.out.join(name).display());
    Ok(())
}

fn figure(args: &ReproduceArgs, config: &Value, which: u8) -> Result<(), CliError> {
    let panels: Vec<(&str, SimulationScenario)> = match which {
        1 => vec![
            ("beta0", scenarios::constant_effect(N, 0.0, args.seed)),
            ("beta0.5", scenarios::constant_effect(N, 0.5, args.seed)),
        ],
        _ => vec![
            ("step", scenarios::step_effect(N, args.seed)),
            ("interrupted", scenarios::interrupted_effect(N, args.seed)),
        ],
    };
    let times: Vec<f64> = (0..=100).map(|j| j as f64 / 100.0).collect();
    for (panel, scenario) in panels {
        let mut config = config.clone();
        config["panel"] = json!(panel);
        config["true_effect"] = json!(scenario.true_effect);

        let data = time_transform(&simulate_dataset(&scenario)?)?;
        let trace = score_process(&data, &[0.0])?;
        let bands = confidence_bands(&trace, 0.05)?;
        let standardized = trace.standardized()?;
        let name = format!("figure{which}_{panel}.csv");
        let mut w = create(&args.out, &name)?;
        write_header(&mut w, &config)?;
        write_row(&mut w, &["t", "u1", "s1", "drift1", "lower1", "upper1"])?;
        for (j, &t) in trace.grid.iter().enumerate() {
            let drift = expected_drift(&scenario.true_effect, &[0.0], &trace.sigma, trace.k_n, t)[0];
            let row = [
                num(t),
                num(trace.values[j][0]),
                num(standardized[j][0]),
                num(drift),
                num(bands[0].lower(t)),
                num(bands[0].upper(t)),
            ];
            write_row(&mut w, &row)?;
        }
        w.flush()?;

        let report = run_replications(
            &scenario,
            args.replicates as usize,
            &[AnalysisSpec::Process { times: times.clone(), beta0: None }],
        )?;
        let envelope = format!("figure{which}_{panel}_mc.csv");
        let mut w = create(&args.out, &envelope)?;
        write_header(&mut w, &config)?;
        write_row(&mut w, &["t", "expected", "mean", "q025", "q975"])?;
        for &t in &times {
            let v = report.values(&format!("process.z1@{t}"));
            let expected = report.mean(&format!("process.z1.expected@{t}")).unwrap_or(f64::NAN);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            write_row(&mut w, &[num(t), num(expected), num(mean), num(quantile(&v, 0.025)), num(quantile(&v, 0.975))])?;
        }
        w.flush()?;
        let verdict = if bands[0].rejects() { "leaves" } else { "stays inside" };
        println!("figure {which} ({panel}): k_n = {}, process {verdict} the 5% band", trace.k_n);
        println!("wrote {} and {}", args.out.join(name).display(), args.out.join(envelope).display());
    }
    Ok(())
}
