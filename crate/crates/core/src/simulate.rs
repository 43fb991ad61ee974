//! Survival data generators for known effects.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Subject, SurvivalDataset};
use crate::effect::{Effect, TemporalEffect};
use crate::error::{Error, Result};
use crate::linalg::SymEigen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    /// Independent Bernoulli(`q`) components.
    Bernoulli {
        q: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
}

fn one() -> usize {
    1
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::Bernoulli { dim, .. } => *dim,
            CovariateLaw::Gaussian { mean, .. } => mean.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Censoring {
    None,
    /// Independent exponential censoring times.
    Exponential {
        rate: f64,
    },
    /// Everyone still at risk at `cutoff` is censored.
    Administrative {
        cutoff: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Failure times from the hazard `λ₀ exp(β(t)ᵀZ)` on the original scale.
    AbsoluteTime,
    /// Failure order drawn step by step from the risk-set probabilities.
    RankConditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub n: usize,
    pub p: usize,
    pub covariate_law: CovariateLaw,
    pub true_effect: TemporalEffect,
    #[serde(default = "unit_rate")]
    pub baseline: f64,
    #[serde(default = "no_censoring")]
    pub censoring: Censoring,
    pub generator: Generator,
    /// For the absolute-time generator with a time-varying effect: original
    /// time `s` is mapped to effect time `min(s / horizon, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub seed: u64,
}

fn unit_rate() -> f64 {
    1.0
}

fn no_censoring() -> Censoring {
    Censoring::None
}

impl SimulationScenario {
    /// `n` subjects, Bernoulli(`q`) covariate, rank-conditional generator, no censoring.
    pub fn bernoulli(n: usize, q: f64, effect: TemporalEffect, seed: u64) -> Self {
        SimulationScenario {
            n,
            p: effect.dim(),
            covariate_law: CovariateLaw::Bernoulli { q, dim: effect.dim() },
            true_effect: effect,
            baseline: 1.0,
            censoring: Censoring::None,
            generator: Generator::RankConditional,
            horizon: None,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimulationScenario { seed, ..self.clone() }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.p == 0 || self.covariate_law.dim() != self.p || self.true_effect.dim() != self.p {
            return bad(format!(
                "dimension mismatch: p = {}, covariates {}, effect {}",
                self.p,
                self.covariate_law.dim(),
                self.true_effect.dim()
            ));
        }
        for b in &self.true_effect.bases {
            b.check().map_err(|e| Error::InvalidScenario(e.to_string()))?;
        }
        match &self.covariate_law {
            CovariateLaw::Bernoulli { q, .. } if !(*q > 0.0 && *q < 1.0) => {
                return bad(format!("Bernoulli parameter must lie in (0, 1), got {q}"))
            }
            CovariateLaw::Gaussian { mean, covariance } => {
                let p = mean.len();
                if covariance.len() != p || covariance.iter().any(|r| r.len() != p) {
                    return bad("covariance must be p x p".into());
                }
                let m = covariance_matrix(covariance);
                if (0..p).any(|i| (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
                    return bad("covariance must be symmetric".into());
                }
                let eig = SymEigen::new(&m);
                if eig.min() < -1e-12 * (1.0 + eig.max().abs()) {
                    return bad("covariance must be positive semidefinite".into());
                }
            }
            _ => {}
        }
        if !(self.baseline.is_finite() && self.baseline > 0.0) {
            return bad("baseline hazard must be positive".into());
        }
        match self.censoring {
            Censoring::Exponential { rate } if !(rate.is_finite() && rate > 0.0) => {
                return bad("censoring rate must be positive".into())
            }
            Censoring::Administrative { cutoff } if !(cutoff.is_finite() && cutoff > 0.0) => {
                return bad("censoring cutoff must be positive".into())
            }
            _ => {}
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return bad("horizon must be positive".into());
            }
        }
        Ok(())
    }
}

fn covariance_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = rows.len();
    DMatrix::from_fn(p, p, |i, j| rows[i][j])
}

/// Seed of replicate `r`: the splitmix64 finalizer applied to
/// `seed + (r + 1) · 0x9E3779B97F4A7C15` (wrapping).
pub fn mix64(seed: u64, r: u64) -> u64 {
    let mut z = seed.wrapping_add(r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_covariates(law: &CovariateLaw, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    match law {
        CovariateLaw::Bernoulli { q, dim } => {
            (0..n).map(|_| (0..*dim).map(|_| if rng.random::<f64>() < *q { 1.0 } else { 0.0 }).collect()).collect()
        }
        CovariateLaw::Gaussian { mean, covariance } => {
            let p = mean.len();
            let root = SymEigen::new(&covariance_matrix(covariance)).apply(|l| l.max(0.0).sqrt());
            (0..n)
                .map(|_| {
                    let e: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
                    (0..p).map(|i| mean[i] + (0..p).map(|j| root[(i, j)] * e[j]).sum::<f64>()).collect()
                })
                .collect()
        }
    }
}

/// Binary indexed tree over nonnegative weights, for sampling with removal.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn build(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        tree[1..].copy_from_slice(weights);
        for i in 1..=n {
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                tree[j] += tree[i];
            }
        }
        Fenwick { tree }
    }

    fn add(&mut self, mut i: usize, delta: f64) {
        i += 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut i = self.tree.len() - 1;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Smallest index whose prefix sum exceeds `u`.
    fn find(&self, mut u: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

fn linear_predictor(beta: &[f64], z: &[f64]) -> f64 {
    beta.iter().zip(z).map(|(b, x)| b * x).sum()
}

/// Draws the failure order one step at a time. Step `s` (1-based) happens at
/// latent time `s / n` and picks a subject among those still at risk with
/// probability proportional to `exp(β(s/n)ᵀZ)`.
fn rank_conditional(
    scenario: &SimulationScenario,
    effect: &dyn Effect,
    z: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, bool)> {
    let n = z.len();
    let nf = n as f64;
    let censor: Vec<f64> = match scenario.censoring {
        Censoring::Exponential { rate } => {
            let law = Exp::new(rate).expect("checked rate");
            (0..n).map(|_| law.sample(rng)).collect()
        }
        _ => vec![f64::INFINITY; n],
    };
    let cutoff = match scenario.censoring {
        Censoring::Administrative { cutoff } => cutoff,
        _ => f64::INFINITY,
    };
    // censoring events in time order, consumed as the latent clock advances
    let mut censor_order: Vec<usize> = (0..n).filter(|&i| censor[i].is_finite()).collect();
    censor_order.sort_by(|&a, &b| censor[a].total_cmp(&censor[b]));
    let mut next_censor = 0;

    let mut out: Vec<(f64, bool)> = vec![(f64::NAN, false); n];
    let mut alive = vec![true; n];
    let mut beta = vec![f64::NAN; scenario.p];
    let mut weights = vec![0.0; n];
    let mut tree = Fenwick::build(&weights);
    let mut remaining = n;
    let mut last_failure = 0.0;
    for s in 1..=n {
        let t = s as f64 / nf;
        if t > cutoff {
            break;
        }
        while next_censor < censor_order.len() && censor[censor_order[next_censor]] < t {
            let i = censor_order[next_censor];
            if alive[i] {
                alive[i] = false;
                remaining -= 1;
                tree.add(i, -weights[i]);
                weights[i] = 0.0;
                out[i] = (censor[i], false);
            }
            next_censor += 1;
        }
        if remaining == 0 {
            break;
        }
        let current = effect.eval(t);
        if current != beta {
            beta = current;
            let etas: Vec<f64> = (0..n).map(|i| if alive[i] { linear_predictor(&beta, &z[i]) } else { 0.0 }).collect();
            let max = (0..n).filter(|&i| alive[i]).map(|i| etas[i]).fold(f64::NEG_INFINITY, f64::max);
            for i in 0..n {
                weights[i] = if alive[i] { (etas[i] - max).exp() } else { 0.0 };
            }
            tree = Fenwick::build(&weights);
        }
        let mut pick = tree.find(rng.random::<f64>() * tree.total());
        if !alive[pick] {
            // rounding at the upper end of the cumulative sum
            pick = (0..n).rev().find(|&i| alive[i]).expect("someone at risk");
        }
        alive[pick] = false;
        remaining -= 1;
        tree.add(pick, -weights[pick]);
        weights[pick] = 0.0;
        out[pick] = (t, true);
        last_failure = t;
    }
    for i in 0..n {
        if alive[i] {
            out[i] = if cutoff.is_finite() {
                let lo = last_failure.min(cutoff);
                (lo + (cutoff - lo) * (1.0 - rng.random::<f64>()), false)
            } else {
                (censor[i], false)
            };
        }
    }
    out
}

const INVERSION_STEPS: usize = 4096;

/// Failure time solving `Λ(T | z) = e` for the hazard `λ₀ exp(β(min(s/h, 1))ᵀz)`.
fn invert_hazard(effect: &dyn Effect, baseline: f64, horizon: f64, z: &[f64], e: f64) -> f64 {
    let h = horizon / INVERSION_STEPS as f64;
    let rate = |s: f64| baseline * linear_predictor(&effect.eval((s / horizon).min(1.0)), z).exp();
    let mut acc = 0.0;
    let mut prev = rate(0.0);
    for k in 1..=INVERSION_STEPS {
        let s = k as f64 * h;
        let cur = rate(s);
        let piece = 0.5 * h * (prev + cur);
        if acc + piece >= e {
            // solve within the step assuming a linear hazard
            let need = e - acc;
            let slope = (cur - prev) / h;
            let x = if slope.abs() < 1e-300 {
                need / prev
            } else {
                ((prev * prev + 2.0 * slope * need).max(0.0).sqrt() - prev) / slope
            };
            return s - h + x.clamp(0.0, h);
        }
        acc += piece;
        prev = cur;
    }
    horizon + (e - acc) / rate(horizon)
}

fn absolute_time(
    scenario: &SimulationScenario,
    effect: &dyn Effect,
    z: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
    constant: Option<&[f64]>,
) -> Result<Vec<(f64, bool)>> {
    let horizon = match (constant, scenario.horizon) {
        (Some(_), _) => f64::NAN,
        (None, Some(h)) => h,
        (None, None) => {
            return Err(Error::InvalidScenario("absolute-time generator needs a constant effect or a horizon".into()))
        }
    };
    let mut out = Vec::with_capacity(z.len());
    for zi in z {
        let e: f64 = Exp1.sample(rng);
        let t = match constant {
            Some(b) => e / (scenario.baseline * linear_predictor(b, zi).exp()),
            None => invert_hazard(effect, scenario.baseline, horizon, zi, e),
        };
        let (time, failed) = match scenario.censoring {
            Censoring::None => (t, true),
            Censoring::Exponential { rate } => {
                let c = Exp::new(rate).expect("checked rate").sample(rng);
                if t <= c {
                    (t, true)
                } else {
                    (c, false)
                }
            }
            Censoring::Administrative { cutoff } => {
                if t <= cutoff {
                    (t, true)
                } else {
                    (cutoff, false)
                }
            }
        };
        out.push((time, failed));
    }
    Ok(out)
}

/// Simulates one dataset under the scenario's own effect.
pub fn simulate_dataset(scenario: &SimulationScenario) -> Result<SurvivalDataset> {
    let effect = scenario.true_effect.clone();
    let constant = effect.is_proportional().then(|| effect.loadings.clone());
    simulate_inner(scenario, &effect, constant.as_deref())
}

/// Simulates one dataset with an arbitrary effect in place of `true_effect`.
pub fn simulate_with_effect(scenario: &SimulationScenario, effect: &dyn Effect) -> Result<SurvivalDataset> {
    simulate_inner(scenario, effect, None)
}

fn simulate_inner(
    scenario: &SimulationScenario,
    effect: &dyn Effect,
    constant: Option<&[f64]>,
) -> Result<SurvivalDataset> {
    scenario.check()?;
    if effect.dim() != scenario.p {
        return Err(Error::InvalidScenario(format!("effect has dimension {}, expected {}", effect.dim(), scenario.p)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let z = draw_covariates(&scenario.covariate_law, scenario.n, &mut rng);
    let outcomes = match scenario.generator {
        Generator::RankConditional => rank_conditional(scenario, effect, &z, &mut rng),
        Generator::AbsoluteTime => absolute_time(scenario, effect, &z, &mut rng, constant)?,
    };
    let subjects = z
        .into_iter()
        .zip(outcomes)
        .enumerate()
        .map(|(i, (zi, (time, failed)))| Subject::fixed(format!("{:06}", i + 1), time, failed, zi))
        .collect();
    Ok(SurvivalDataset::new(subjects))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effect::Basis;
    use std::collections::HashMap;

    #[test]
    fn mix64_reference_values() {
        // splitmix64 output stream for state 0 (r = 0, 1)
        assert_eq!(mix64(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix64(0, 1), 0x6E78_9E6A_A1B9_65F4);
        assert_ne!(mix64(1, 0), mix64(0, 0));
    }

    #[test]
    fn fenwick_sampling_matches_prefix_sums() {
        let w = [0.5, 0.0, 2.0, 1.5];
        let mut t = Fenwick::build(&w);
        assert!((t.total() - 4.0).abs() < 1e-15);
        assert_eq!(t.find(0.25), 0);
        assert_eq!(t.find(0.5), 2);
        assert_eq!(t.find(2.49), 2);
        assert_eq!(t.find(2.5), 3);
        t.add(2, -2.0);
        assert_eq!(t.find(0.6), 3);
    }

    #[test]
    fn null_absolute_time_is_unit_exponential() {
        let s = SimulationScenario {
            generator: Generator::AbsoluteTime,
            ..SimulationScenario::bernoulli(10_000, 0.5, TemporalEffect::zero(1), 3)
        };
        let d = simulate_dataset(&s).unwrap();
        let mean = d.subjects().iter().map(|x| x.time).sum::<f64>() / 10_000.0;
        assert!((0.9..=1.1).contains(&mean), "{mean}");
        assert!(d.subjects().iter().all(|x| x.failed));
    }

    #[test]
    fn null_rank_conditional_orders_are_uniform() {
        let base = SimulationScenario::bernoulli(4, 0.5, TemporalEffect::zero(1), 0);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let draws = 24_000;
        for r in 0..draws {
            let d = simulate_dataset(&base.with_seed(mix64(11, r))).unwrap();
            let mut idx: Vec<usize> = (0..4).collect();
            idx.sort_by(|&a, &b| d.subjects()[a].time.total_cmp(&d.subjects()[b].time));
            *counts.entry(idx).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = draws as f64 / 24.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 0.99 quantile of chi-square with 23 degrees of freedom
        assert!(chi2 < 41.64, "{chi2}");
    }

    #[test]
    fn deterministic_given_seed() {
        let s = SimulationScenario::bernoulli(50, 0.5, TemporalEffect::univariate(3.0, Basis::Power { k: 2.0 }), 9);
        assert_eq!(simulate_dataset(&s).unwrap(), simulate_dataset(&s).unwrap());
        assert_ne!(simulate_dataset(&s).unwrap(), simulate_dataset(&s.with_seed(10)).unwrap());
    }

    #[test]
    fn administrative_cutoff_censors_the_tail() {
        let s = SimulationScenario {
            censoring: Censoring::Administrative { cutoff: 0.5 },
            ..SimulationScenario::bernoulli(100, 0.5, TemporalEffect::constant(vec![1.0]), 2)
        };
        let d = simulate_dataset(&s).unwrap();
        assert_eq!(d.failures(), 50);
        for x in d.subjects() {
            assert!(x.time <= 0.5);
            if !x.failed {
                assert!(x.time > 0.5 - 1e-12 - 0.01);
            }
        }
    }

    #[test]
    fn exponential_censoring_removes_subjects_from_risk() {
        let s = SimulationScenario {
            censoring: Censoring::Exponential { rate: 2.0 },
            ..SimulationScenario::bernoulli(400, 0.5, TemporalEffect::zero(1), 5)
        };
        let d = simulate_dataset(&s).unwrap();
        let censored = d.len() - d.failures();
        assert!(censored > 50 && censored < 350, "{censored}");
    }

    #[test]
    fn gaussian_covariates_have_requested_covariance() {
        let s = SimulationScenario {
            p: 2,
            covariate_law: CovariateLaw::Gaussian {
                mean: vec![0.0, 1.0],
                covariance: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
            },
            ..SimulationScenario::bernoulli(20_000, 0.5, TemporalEffect::zero(2), 4)
        };
        let d = simulate_dataset(&s).unwrap();
        let n = d.len() as f64;
        let z: Vec<&[f64]> = d.subjects().iter().map(|x| x.covariates.at(0.0)).collect();
        let m1 = z.iter().map(|v| v[1]).sum::<f64>() / n;
        let c01 = z.iter().map(|v| v[0] * (v[1] - m1)).sum::<f64>() / n;
        assert!((m1 - 1.0).abs() < 0.03 && (c01 - 0.5).abs() < 0.03);
    }

    #[test]
    fn time_varying_absolute_needs_horizon() {
        let s = SimulationScenario {
            generator: Generator::AbsoluteTime,
            ..SimulationScenario::bernoulli(10, 0.5, TemporalEffect::univariate(1.0, Basis::Power { k: 1.0 }), 1)
        };
        assert!(matches!(simulate_dataset(&s), Err(Error::InvalidScenario(_))));
        let ok = SimulationScenario { horizon: Some(2.0), ..s };
        assert_eq!(simulate_dataset(&ok).unwrap().len(), 10);
    }

    #[test]
    fn hazard_inversion_matches_closed_form_for_constant_rate() {
        let e = TemporalEffect::constant(vec![0.7]);
        for x in [0.1, 1.0, 3.0] {
            let t = invert_hazard(&e, 2.0, 1.0, &[1.0], x);
            assert!((t - x / (2.0 * 0.7f64.exp())).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let base = SimulationScenario::bernoulli(10, 0.5, TemporalEffect::zero(1), 1);
        assert!(SimulationScenario { n: 1, ..base.clone() }.check().is_err());
        assert!(SimulationScenario { covariate_law: CovariateLaw::Bernoulli { q: 1.0, dim: 1 }, ..base.clone() }
            .check()
            .is_err());
        assert!(SimulationScenario { p: 2, ..base }.check().is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let json = r#"{"n":200,"p":1,"covariate_law":{"law":"bernoulli","q":0.5},
            "true_effect":{"loadings":[3.0],"bases":[{"basis":"power","k":2.0}]},
            "generator":"rank_conditional","seed":7}"#;
        let s: SimulationScenario = serde_json::from_str(json).unwrap();
        assert_eq!(s.censoring, Censoring::None);
        assert_eq!(s.baseline, 1.0);
        let back: SimulationScenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
