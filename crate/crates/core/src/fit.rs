//! Maximum partial likelihood for effects `β₀ⱼ Bⱼ(t)`, changepoint slope
//! ratios read off the score process, and `R²`-guided model selection.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effect::{Basis, TemporalEffect};
use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::moments::weighted_moments;
use crate::predictive::{r_squared, R2Result};
use crate::process::{score_process, ScoreProcessTrace};
use crate::transform::TransformedDataset;

pub const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 20;
const DIVERGENCE_BOUND: f64 = 50.0;

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

/// Log partial likelihood with its gradient and observed information in the
/// loadings, over the informative failure grid.
fn evaluate(data: &TransformedDataset, bases: &[Basis], b: &[f64]) -> Evaluation {
    let p = data.dim();
    let mut loglik = 0.0;
    let mut score = DVector::<f64>::zeros(p);
    let mut information = DMatrix::<f64>::zeros(p, p);
    let mut bt = vec![0.0; p];
    let mut beta = vec![0.0; p];
    data.for_each_risk_set(|i, rows, mult, failing| {
        let t = data.grid()[i].time;
        for j in 0..p {
            bt[j] = bases[j].at(t);
            beta[j] = if b[j] == 0.0 { 0.0 } else { b[j] * bt[j] };
        }
        let m = weighted_moments(rows, mult, p, &beta);
        loglik += beta.iter().zip(failing).map(|(x, z)| x * z).sum::<f64>() - m.log_norm;
        for j in 0..p {
            score[j] += bt[j] * (failing[j] - m.mean[j]);
            for k in 0..p {
                information[(j, k)] += bt[j] * bt[k] * m.cov[(j, k)];
            }
        }
    });
    Evaluation { loglik, score, information }
}

/// Log partial likelihood of `β(t) = (loadings[j] · bases[j](t))ⱼ`.
pub fn log_partial_likelihood(data: &TransformedDataset, bases: &[Basis], loadings: &[f64]) -> f64 {
    evaluate(data, bases, loadings).loglik
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub effect: TemporalEffect,
    pub loglik: f64,
    pub loglik_null: f64,
    pub iterations: usize,
    pub converged: bool,
    pub r2: R2Result,
    pub score_norm: f64,
    pub score: Vec<f64>,
    /// Observed information at the optimum, row-major.
    pub information: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton–Raphson with step halving, started at zero.
pub fn fit_partial_likelihood(data: &TransformedDataset, bases: &[Basis]) -> Result<FitResult> {
    let p = data.dim();
    if bases.len() != p {
        return Err(Error::Domain(format!("need {p} bases, got {}", bases.len())));
    }
    for basis in bases {
        basis.check()?;
    }
    if data.k_n() < p {
        return Err(Error::Domain(format!("k_n = {} is smaller than p = {p}", data.k_n())));
    }
    let mut b = vec![0.0; p];
    let mut ev = evaluate(data, bases, &b);
    let loglik_null = ev.loglik;
    let mut iterations = 0;
    let converged = loop {
        let scale = 1.0 + norm(&b);
        let delta = match spd_solve(&ev.information, &ev.score) {
            Ok(d) => d,
            // information only degenerates away from zero when the weights
            // concentrate on single subjects, i.e. the likelihood is heading
            // to an asymptote
            Err(_) if iterations > 0 => return Err(Error::MonotoneLikelihood { bound: norm(&b) }),
            Err(_) => return Err(Error::SingularInformation),
        };
        // a vanishing score alone is not enough: under separation it decays
        // while the Newton step stays of order one
        if ev.score.norm() < 1e-8 * scale && delta.norm() < 1e-6 * scale {
            break true;
        }
        if iterations == MAX_ITER {
            return Err(Error::NonConvergence { iterations });
        }
        iterations += 1;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = b.iter().zip(delta.iter()).map(|(x, d)| x + step * d).collect();
            let next = evaluate(data, bases, &cand);
            if next.loglik.is_finite() && next.loglik >= ev.loglik - 1e-12 * (1.0 + ev.loglik.abs()) {
                accepted = Some((cand, next));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, next)) = accepted else {
            // no ascent left at machine precision
            if ev.score.norm() < 1e-6 * scale {
                break true;
            }
            return Err(Error::NonConvergence { iterations });
        };
        b = cand;
        ev = next;
        if norm(&b) > DIVERGENCE_BOUND {
            return Err(Error::MonotoneLikelihood { bound: DIVERGENCE_BOUND });
        }
    };
    let effect = TemporalEffect { loadings: b, bases: bases.to_vec() };
    let r2 = r_squared(data, &effect)?;
    let information = (0..p).map(|j| (0..p).map(|k| ev.information[(j, k)]).collect()).collect();
    Ok(FitResult {
        effect,
        loglik: ev.loglik,
        loglik_null,
        iterations,
        converged,
        r2,
        score_norm: ev.score.norm(),
        score: ev.score.iter().cloned().collect(),
        information,
    })
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - tm).powi(2)).sum();
    sxy / sxx
}

/// Ratio of least-squares slopes of the standardized component after and
/// before `t0`, each segment with its own intercept.
pub fn slope_ratio_changepoint(trace: &ScoreProcessTrace, component: usize, t0: f64) -> Result<f64> {
    if component >= trace.dim() {
        return Err(Error::Domain(format!("component {component} out of range (p = {})", trace.dim())));
    }
    if !(t0 > 0.0 && t0 < 1.0) {
        return Err(Error::Domain(format!("changepoint must lie in (0, 1), got {t0}")));
    }
    let s = trace.standardized_component(component)?;
    let (before, after): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
        trace.grid.iter().cloned().zip(s).partition(|(t, _)| *t <= t0);
    if before.len() < 2 || after.len() < 2 {
        return Err(Error::DegenerateSegment(format!(
            "{} points before and {} after t0 = {t0}",
            before.len(),
            after.len()
        )));
    }
    let first = ols_slope(&before);
    if first.abs() < 1e-12 {
        return Err(Error::DegenerateSegment(format!("flat process before t0 = {t0}")));
    }
    Ok(ols_slope(&after) / first)
}

/// Shape of one component in a candidate; a changepoint without `ratio` has
/// it estimated from the score process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum BasisSpec {
    Constant,
    Changepoint {
        t0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ratio: Option<f64>,
    },
    Power {
        k: f64,
    },
    OneMinusSq,
    LogT,
    Table {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl From<Basis> for BasisSpec {
    fn from(b: Basis) -> Self {
        match b {
            Basis::Constant => BasisSpec::Constant,
            Basis::Changepoint { t0, ratio } => BasisSpec::Changepoint { t0, ratio: Some(ratio) },
            Basis::Power { k } => BasisSpec::Power { k },
            Basis::OneMinusSq => BasisSpec::OneMinusSq,
            Basis::LogT => BasisSpec::LogT,
            Basis::Table { breakpoints, values } => BasisSpec::Table { breakpoints, values },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    /// 1-based covariate index.
    pub component: usize,
    #[serde(flatten)]
    pub basis: BasisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(default)]
    pub name: String,
    /// Components not listed get a constant basis.
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
}

impl Candidate {
    pub fn new(name: impl Into<String>, components: Vec<ComponentSpec>) -> Self {
        Candidate { name: name.into(), components }
    }

    /// Single-component candidate.
    pub fn univariate(name: impl Into<String>, basis: impl Into<BasisSpec>) -> Self {
        Candidate::new(name, vec![ComponentSpec { component: 1, basis: basis.into() }])
    }

    fn check(&self, p: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.components {
            if c.component == 0 || c.component > p {
                return Err(Error::Schema(format!(
                    "candidate '{}' references component {} but p = {p}",
                    self.name, c.component
                )));
            }
            if !seen.insert(c.component) {
                return Err(Error::Schema(format!("candidate '{}' lists component {} twice", self.name, c.component)));
            }
            if let BasisSpec::Changepoint { t0, ratio: None } = c.basis {
                Basis::Changepoint { t0, ratio: 0.0 }.check()?;
            }
        }
        Ok(())
    }

    /// Concrete bases, calling `ratio(component, t0)` (0-based component) for
    /// every changepoint whose ratio is left open.
    pub fn resolve(&self, p: usize, mut ratio: impl FnMut(usize, f64) -> Result<f64>) -> Result<Vec<Basis>> {
        self.check(p)?;
        let mut bases = vec![Basis::Constant; p];
        for c in &self.components {
            let j = c.component - 1;
            bases[j] = match c.basis.clone() {
                BasisSpec::Constant => Basis::Constant,
                BasisSpec::Changepoint { t0, ratio: Some(r) } => Basis::Changepoint { t0, ratio: r },
                BasisSpec::Changepoint { t0, ratio: None } => Basis::Changepoint { t0, ratio: ratio(j, t0)? },
                BasisSpec::Power { k } => Basis::Power { k },
                BasisSpec::OneMinusSq => Basis::OneMinusSq,
                BasisSpec::LogT => Basis::LogT,
                BasisSpec::Table { breakpoints, values } => Basis::Table { breakpoints, values },
            };
            bases[j].check()?;
        }
        Ok(bases)
    }

    fn label(&self, index: usize) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        if self.components.is_empty() {
            return "constant".into();
        }
        let parts: Vec<String> =
            self.components.iter().map(|c| format!("z{}:{}", c.component, spec_label(&c.basis))).collect();
        format!("#{} {}", index + 1, parts.join(","))
    }
}

fn spec_label(b: &BasisSpec) -> String {
    match b {
        BasisSpec::Changepoint { t0, ratio: None } => format!("changepoint(t0={t0})"),
        other => match other.clone() {
            BasisSpec::Constant => Basis::Constant,
            BasisSpec::Changepoint { t0, ratio } => Basis::Changepoint { t0, ratio: ratio.unwrap_or(0.0) },
            BasisSpec::Power { k } => Basis::Power { k },
            BasisSpec::OneMinusSq => Basis::OneMinusSq,
            BasisSpec::LogT => Basis::LogT,
            BasisSpec::Table { breakpoints, values } => Basis::Table { breakpoints, values },
        }
        .to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Candidate>) -> Self {
        CandidateSet { candidates }
    }

    /// Accepts `{"candidates": [...]}` or a bare list of candidates.
    pub fn from_json(s: &str) -> Result<Self> {
        let schema = |e: serde_json::Error| Error::Schema(e.to_string());
        let set = if s.trim_start().starts_with('[') {
            CandidateSet { candidates: serde_json::from_str(s).map_err(schema)? }
        } else {
            serde_json::from_str(s).map_err(schema)?
        };
        if set.candidates.is_empty() {
            return Err(Error::Schema("candidate set is empty".into()));
        }
        Ok(set)
    }

    pub fn check(&self, p: usize) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Schema("candidate set is empty".into()));
        }
        self.candidates.iter().try_for_each(|c| c.check(p))
    }

    /// Candidate labels, with generated names for unnamed candidates.
    pub fn labels(&self) -> Vec<String> {
        self.candidates.iter().enumerate().map(|(i, c)| c.label(i)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedFit {
    pub name: String,
    /// Position in the candidate set.
    pub index: usize,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    /// Successful fits by decreasing `R²`; the head is the selected effect.
    pub ranked: Vec<RankedFit>,
    /// Candidates that could not be fitted, with the reason.
    pub failures: Vec<(String, String)>,
}

impl Selection {
    pub fn best(&self) -> &RankedFit {
        &self.ranked[0]
    }
}

/// Fits every candidate and ranks by `R²`, ties broken by declaration order.
/// Open changepoint ratios are read off the standardized score process at zero.
pub fn select_effect(data: &TransformedDataset, candidates: &CandidateSet) -> Result<Selection> {
    let p = data.dim();
    candidates.check(p)?;
    let needs_trace = candidates
        .candidates
        .iter()
        .flat_map(|c| &c.components)
        .any(|c| matches!(c.basis, BasisSpec::Changepoint { ratio: None, .. }));
    let trace = if needs_trace { Some(score_process(data, &vec![0.0; p])) } else { None };
    let labels = candidates.labels();
    let outcomes: Vec<Result<FitResult>> = candidates
        .candidates
        .par_iter()
        .map(|c| {
            let bases = c.resolve(p, |j, t0| match &trace {
                Some(Ok(tr)) => slope_ratio_changepoint(tr, j, t0),
                Some(Err(e)) => Err(Error::Domain(format!("score process unavailable: {e}"))),
                None => unreachable!("trace computed when a ratio is open"),
            })?;
            fit_partial_likelihood(data, &bases)
        })
        .collect();
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for (index, (name, outcome)) in labels.into_iter().zip(outcomes).enumerate() {
        match outcome {
            Ok(fit) => ranked.push(RankedFit { name, index, fit }),
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    if ranked.is_empty() {
        return Err(Error::AllCandidatesFailed(failures));
    }
    ranked.sort_by(|a, b| b.fit.r2.value.total_cmp(&a.fit.r2.value).then(a.index.cmp(&b.index)));
    Ok(Selection { ranked, failures })
}
