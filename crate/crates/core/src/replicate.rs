//! Seeded Monte-Carlo replication of simulation scenarios.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effect::{Basis, Effect};
use crate::error::{Error, Result};
use crate::fit::{fit_partial_likelihood, select_effect, slope_ratio_changepoint, CandidateSet};
use crate::process::{bridge_sup_statistic, confidence_bands, score_process};
use crate::simulate::{mix64, simulate_dataset, SimulationScenario};
use crate::transform::{time_transform, TransformedDataset};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SURVSCORE_THREADS";

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.10]
}

fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

/// One analysis run on every replicate. Components are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case")]
pub enum AnalysisSpec {
    /// Confidence-band decisions and bridge sup statistics.
    Band {
        #[serde(default = "default_alphas")]
        alphas: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta0: Option<Vec<f64>>,
    },
    /// Standardized process at fixed times, with the drift predicted by the
    /// scenario's true effect.
    Process {
        #[serde(default = "default_times")]
        times: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta0: Option<Vec<f64>>,
    },
    /// Partial-likelihood fit; all-constant bases when omitted.
    Fit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bases: Option<Vec<Basis>>,
    },
    Select {
        candidates: CandidateSet,
    },
    SlopeRatio {
        component: usize,
        t0: f64,
    },
}

impl AnalysisSpec {
    /// `band`, `process` or `fit` with default settings.
    pub fn from_keyword(k: &str) -> Option<Self> {
        match k {
            "band" => Some(AnalysisSpec::Band { alphas: default_alphas(), beta0: None }),
            "process" => Some(AnalysisSpec::Process { times: default_times(), beta0: None }),
            "fit" => Some(AnalysisSpec::Fit { bases: None }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    /// Monte-Carlo standard error of the mean.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub version: String,
    pub scenario: SimulationScenario,
    pub replicates: usize,
    pub analyses: Vec<AnalysisSpec>,
    pub records: Vec<ReplicateRecord>,
    /// Per-metric mean over the replicates where it is defined; for 0/1
    /// indicators the mean is a rate (rejection, selection frequency).
    pub summary: BTreeMap<String, MetricSummary>,
}

impl ReplicationReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).map(|s| s.mean)
    }

    /// All values of one metric, in replicate order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.metrics.get(metric).copied()).collect()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per replicate, one column per metric.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let names: Vec<&String> = self.summary.keys().collect();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["replicate".to_string(), "seed".to_string(), "errors".to_string()];
        header.extend(names.iter().map(|s| s.to_string()));
        out.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.replicate.to_string(), r.seed.to_string(), r.errors.join("; ")];
            row.extend(names.iter().map(|n| r.metrics.get(*n).map(|v| format!("{v:.16e}")).unwrap_or_default()));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn zeros_or(beta0: &Option<Vec<f64>>, p: usize) -> Result<Vec<f64>> {
    match beta0 {
        Some(b) if b.len() != p => Err(Error::Domain(format!("beta0 has length {}, expected {p}", b.len()))),
        Some(b) => Ok(b.clone()),
        None => Ok(vec![0.0; p]),
    }
}

fn run_analysis(
    spec: &AnalysisSpec,
    scenario: &SimulationScenario,
    data: &TransformedDataset,
    out: &mut BTreeMap<String, f64>,
) -> Result<()> {
    let p = data.dim();
    match spec {
        AnalysisSpec::Band { alphas, beta0 } => {
            let trace = score_process(data, &zeros_or(beta0, p)?)?;
            for j in 0..p {
                out.insert(format!("band.z{}.sup", j + 1), bridge_sup_statistic(&trace, j)?);
            }
            for &a in alphas {
                for band in confidence_bands(&trace, a)? {
                    out.insert(format!("band.z{}.reject@{a}", band.component + 1), band.rejects() as u8 as f64);
                }
            }
        }
        AnalysisSpec::Process { times, beta0 } => {
            let b0 = zeros_or(beta0, p)?;
            let trace = score_process(data, &b0)?;
            let root_k = (trace.k_n as f64).sqrt();
            for &t in times {
                let s = trace.standardized_at(t)?;
                let target = scenario.true_effect.cumulative(t);
                for j in 0..p {
                    let expected = root_k * (target[j] - b0[j] * t);
                    out.insert(format!("process.z{}@{t}", j + 1), s[j]);
                    out.insert(format!("process.z{}.expected@{t}", j + 1), expected);
                    out.insert(format!("process.z{}.deviation@{t}", j + 1), s[j] - expected);
                }
            }
        }
        AnalysisSpec::Fit { bases } => {
            let bases = bases.clone().unwrap_or_else(|| vec![Basis::Constant; p]);
            let fit = fit_partial_likelihood(data, &bases)?;
            for (j, b) in fit.effect.loadings.iter().enumerate() {
                out.insert(format!("fit.beta{}", j + 1), *b);
            }
            out.insert("fit.r2".into(), fit.r2.value);
            out.insert("fit.loglik".into(), fit.loglik);
            out.insert("fit.iterations".into(), fit.iterations as f64);
        }
        AnalysisSpec::Select { candidates } => {
            let sel = select_effect(data, candidates)?;
            let top = &sel.best().name;
            for name in candidates.labels() {
                out.insert(format!("select.top[{name}]"), (&name == top) as u8 as f64);
            }
            for r in &sel.ranked {
                out.insert(format!("select.r2[{}]", r.name), r.fit.r2.value);
                for (j, (b, basis)) in r.fit.effect.loadings.iter().zip(&r.fit.effect.bases).enumerate() {
                    out.insert(format!("select.beta{}[{}]", j + 1, r.name), *b);
                    if let Basis::Changepoint { ratio, .. } = basis {
                        out.insert(format!("select.ratio{}[{}]", j + 1, r.name), *ratio);
                    }
                }
            }
        }
        AnalysisSpec::SlopeRatio { component, t0 } => {
            if *component == 0 || *component > p {
                return Err(Error::Schema(format!("component {component} out of range (p = {p})")));
            }
            let trace = score_process(data, &vec![0.0; p])?;
            let c = slope_ratio_changepoint(&trace, component - 1, *t0)?;
            out.insert(format!("slope_ratio.z{component}@{t0}"), c);
        }
    }
    Ok(())
}

/// Simulates and analyses replicate `r` with seed `mix64(scenario.seed, r)`.
pub fn run_replicate(scenario: &SimulationScenario, r: usize, analyses: &[AnalysisSpec]) -> ReplicateRecord {
    let seed = mix64(scenario.seed, r as u64);
    let mut metrics = BTreeMap::new();
    let mut errors = Vec::new();
    match simulate_dataset(&scenario.with_seed(seed)).and_then(|d| time_transform(&d)) {
        Ok(data) => {
            metrics.insert("k_n".to_string(), data.k_n() as f64);
            for a in analyses {
                if let Err(e) = run_analysis(a, scenario, &data, &mut metrics) {
                    errors.push(e.to_string());
                }
            }
        }
        Err(e) => errors.push(e.to_string()),
    }
    metrics.retain(|_, v| v.is_finite());
    ReplicateRecord { replicate: r, seed, metrics, errors }
}

fn summarize(records: &[ReplicateRecord]) -> BTreeMap<String, MetricSummary> {
    let mut by_name: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        for (k, v) in &r.metrics {
            by_name.entry(k.clone()).or_default().push(*v);
        }
    }
    by_name
        .into_iter()
        .map(|(k, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (k, MetricSummary { count: xs.len(), mean, sd, se: sd / n.sqrt() })
        })
        .collect()
}

/// Worker count from `SURVSCORE_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `replicates` independent replicates in parallel. Failures inside a
/// replicate are recorded in that replicate and never abort the batch.
pub fn run_replications(
    scenario: &SimulationScenario,
    replicates: usize,
    analyses: &[AnalysisSpec],
) -> Result<ReplicationReport> {
    if replicates == 0 {
        return Err(Error::Domain("need at least one replicate".into()));
    }
    scenario.check()?;
    let work = || (0..replicates).into_par_iter().map(|r| run_replicate(scenario, r, analyses)).collect::<Vec<_>>();
    let records = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(e.to_string()))?
            .install(work),
        None => work(),
    };
    let summary = summarize(&records);
    Ok(ReplicationReport {
        version: crate::VERSION.to_string(),
        scenario: scenario.clone(),
        replicates,
        analyses: analyses.to_vec(),
        records,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn single_replicate_matches_direct_analysis() {
        let s = scenarios::constant_effect(100, 0.5, 1);
        let report = run_replications(&s, 1, &[AnalysisSpec::Fit { bases: None }]).unwrap();
        assert_eq!(report.records.len(), 1);
        let data = time_transform(&simulate_dataset(&s.with_seed(mix64(1, 0))).unwrap()).unwrap();
        let fit = fit_partial_likelihood(&data, &[Basis::Constant]).unwrap();
        assert_eq!(report.records[0].metrics["fit.beta1"], fit.effect.loadings[0]);
        assert_eq!(report.summary["fit.beta1"].se, 0.0);
    }

    #[test]
    fn reports_are_deterministic() {
        let s = scenarios::decaying_effect(60, 5);
        let analyses = [AnalysisSpec::from_keyword("band").unwrap(), AnalysisSpec::from_keyword("process").unwrap()];
        let a = run_replications(&s, 8, &analyses).unwrap();
        let b = run_replications(&s, 8, &analyses).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.write_json(&mut ja).unwrap();
        b.write_json(&mut jb).unwrap();
        assert_eq!(ja, jb);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("replicate,seed,errors,"));
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let s = scenarios::constant_effect(30, 0.0, 2);
        let bad = AnalysisSpec::SlopeRatio { component: 4, t0: 0.5 };
        let report = run_replications(&s, 3, &[bad, AnalysisSpec::Fit { bases: None }]).unwrap();
        assert!(report.records.iter().all(|r| r.errors.len() == 1 && r.metrics.contains_key("fit.beta1")));
    }

    #[test]
    fn analysis_json() {
        let a: AnalysisSpec = serde_json::from_str(r#"{"analysis":"band"}"#).unwrap();
        assert_eq!(a, AnalysisSpec::from_keyword("band").unwrap());
        let a: AnalysisSpec = serde_json::from_str(r#"{"analysis":"slope_ratio","component":1,"t0":0.5}"#).unwrap();
        assert_eq!(a, AnalysisSpec::SlopeRatio { component: 1, t0: 0.5 });
        assert!(AnalysisSpec::from_keyword("nope").is_none());
    }

    #[test]
    fn zero_replicates_rejected() {
        assert!(run_replications(&scenarios::constant_effect(10, 0.0, 0), 0, &[]).is_err());
    }

    #[test]
    fn expected_drift_uses_true_effect() {
        let s = scenarios::step_effect(80, 3);
        let r = run_replicate(&s, 0, &[AnalysisSpec::from_keyword("process").unwrap()]);
        let k = r.metrics["k_n"];
        assert!((r.metrics["process.z1.expected@1"] - k.sqrt() * 0.5).abs() < 1e-12);
        assert!((s.true_effect.cumulative(0.25)[0] - 0.25).abs() < 1e-15);
    }
}
