//! Ready-made simulation scenarios and candidate sets for the standard studies.

use crate::effect::{Basis, TemporalEffect};
use crate::fit::{BasisSpec, Candidate, CandidateSet, ComponentSpec};
use crate::simulate::{Censoring, CovariateLaw, Generator, SimulationScenario};

/// Bernoulli(0.5) covariate with a constant effect `beta`.
pub fn constant_effect(n: usize, beta: f64, seed: u64) -> SimulationScenario {
    SimulationScenario::bernoulli(n, 0.5, TemporalEffect::constant(vec![beta]), seed)
}

/// Bernoulli(0.5) covariate with `β(t) = 3(1 − t)²`.
pub fn decaying_effect(n: usize, seed: u64) -> SimulationScenario {
    SimulationScenario::bernoulli(n, 0.5, TemporalEffect::univariate(3.0, Basis::Power { k: 2.0 }), seed)
}

/// Bernoulli(0.5) covariate with `β(t) = I(t ≤ 0.5)`.
pub fn step_effect(n: usize, seed: u64) -> SimulationScenario {
    SimulationScenario::bernoulli(
        n,
        0.5,
        TemporalEffect::univariate(1.0, Basis::Changepoint { t0: 0.5, ratio: 0.0 }),
        seed,
    )
}

/// Bernoulli(0.5) covariate with `β(t) = I(t ≤ 1/3) + 0.5 I(t > 2/3)`.
pub fn interrupted_effect(n: usize, seed: u64) -> SimulationScenario {
    let basis = Basis::Table { breakpoints: vec![1.0 / 3.0, 2.0 / 3.0], values: vec![1.0, 0.0, 0.5] };
    SimulationScenario::bernoulli(n, 0.5, TemporalEffect::univariate(1.0, basis), seed)
}

/// Two standard normal covariates with covariance 0.5, `β₁(t) = I(t ≤ 0.5)`
/// and `β₂(t) = −1`.
pub fn bivariate_changepoint(n: usize, seed: u64) -> SimulationScenario {
    SimulationScenario {
        n,
        p: 2,
        covariate_law: CovariateLaw::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
        },
        true_effect: TemporalEffect {
            loadings: vec![1.0, -1.0],
            bases: vec![Basis::Changepoint { t0: 0.5, ratio: 0.0 }, Basis::Constant],
        },
        baseline: 1.0,
        censoring: Censoring::None,
        generator: Generator::RankConditional,
        horizon: None,
        seed,
    }
}

/// Constant, `1 − t`, `(1 − t)²`, `1 − t²` and a changepoint at 0.5 whose
/// ratio is read off the score process.
pub fn decay_candidates() -> CandidateSet {
    CandidateSet::new(vec![
        Candidate::univariate("constant", Basis::Constant),
        Candidate::univariate("1-t", Basis::Power { k: 1.0 }),
        Candidate::univariate("(1-t)^2", Basis::Power { k: 2.0 }),
        Candidate::univariate("1-t^2", Basis::OneMinusSq),
        Candidate::univariate("changepoint(0.5)", BasisSpec::Changepoint { t0: 0.5, ratio: None }),
    ])
}

/// Changepoint locations tried for the first covariate.
pub const CHANGEPOINTS: [f64; 6] = [0.45, 0.5, 0.55, 0.6, 0.65, 0.7];

/// Proportional baseline plus one changepoint candidate on the first
/// covariate per location in [`CHANGEPOINTS`]; the second covariate stays constant.
pub fn changepoint_candidates() -> CandidateSet {
    let mut c = vec![Candidate::new("constant", vec![])];
    for t0 in CHANGEPOINTS {
        c.push(Candidate::new(
            format!("changepoint({t0})"),
            vec![ComponentSpec { component: 1, basis: BasisSpec::Changepoint { t0, ratio: None } }],
        ));
    }
    CandidateSet::new(c)
}
