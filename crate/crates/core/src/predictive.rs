//! Explained variation `R²` for time-varying effects.

use nalgebra::DVector;
use serde::Serialize;

use crate::effect::{Effect, TemporalEffect};
use crate::error::{Error, Result};
use crate::moments::{moments_along, weighted_moments};
use crate::simulate::{simulate_with_effect, SimulationScenario};
use crate::transform::{time_transform, TransformedDataset};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Residual discrepancy averaged over the failure grid: squared residuals at
/// `alpha1` when `p = 1`, squared projections onto `alpha2` when `p > 1`.
pub fn q_hat(data: &TransformedDataset, alpha1: &dyn Effect, alpha2: &dyn Effect) -> f64 {
    let p = data.dim();
    let mut a2 = vec![0.0; p];
    let mut r = vec![0.0; p];
    let mut sum = 0.0;
    moments_along(data, alpha1, |i, m, failing, _| {
        for k in 0..p {
            r[k] = failing[k] - m.mean[k];
        }
        if p == 1 {
            sum += r[0] * r[0];
        } else {
            alpha2.eval_into(data.grid()[i].time, &mut a2);
            let proj = dot(&a2, &r);
            sum += proj * proj;
        }
    });
    sum / data.k_n() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct R2Result {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub effect: TemporalEffect,
}

/// `R²(α) = 1 − Q̂(α, α) / Q̂(0, α)`.
pub fn r_squared(data: &TransformedDataset, effect: &TemporalEffect) -> Result<R2Result> {
    let p = data.dim();
    if effect.dim() != p {
        return Err(Error::Domain(format!("effect has dimension {}, expected {p}", effect.dim())));
    }
    let zero = vec![0.0; p];
    let (mut num, mut den) = (0.0, 0.0);
    let mut r = vec![0.0; p];
    data.for_each_risk_set(|i, rows, mult, failing| {
        let a = effect.eval(data.grid()[i].time);
        let at_alpha = weighted_moments(rows, mult, p, &a);
        let at_zero = weighted_moments(rows, mult, p, &zero);
        for (m, acc) in [(&at_alpha, &mut num), (&at_zero, &mut den)] {
            for k in 0..p {
                r[k] = failing[k] - m.mean[k];
            }
            *acc += if p == 1 { r[0] * r[0] } else { dot(&a, &r).powi(2) };
        }
    });
    let k = data.k_n() as f64;
    let (numerator, denominator) = (num / k, den / k);
    if denominator <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(R2Result { value: 1.0 - numerator / denominator, numerator, denominator, effect: effect.clone() })
}

const ORACLE_MIN_N: usize = 20_000;
const ORACLE_GRID: usize = 200;

/// Large-sample limit of `R²(effect_eval)` when data follow `effect_true`.
///
/// The limit functions `e(γ, t)` and `v(γ, t)` are estimated from the at-risk
/// population of one simulated dataset with at least 20000 subjects, and the
/// time integrals use the trapezoid rule on 200 equispaced points.
pub fn r_squared_limit_oracle(
    effect_true: &dyn Effect,
    effect_eval: &dyn Effect,
    scenario: &SimulationScenario,
) -> Result<f64> {
    let mut big = scenario.clone();
    big.n = big.n.max(ORACLE_MIN_N);
    let data = time_transform(&simulate_with_effect(&big, effect_true)?)?;
    let p = data.dim();
    let k = data.k_n();
    let zero = vec![0.0; p];
    let mut num = Vec::with_capacity(ORACLE_GRID);
    let mut den = Vec::with_capacity(ORACLE_GRID);
    for j in 0..ORACLE_GRID {
        let t = j as f64 / (ORACLE_GRID - 1) as f64;
        let i = ((t * k as f64).ceil() as usize).saturating_sub(1).min(k - 1);
        let rows = data.risk_set_rows(i);
        let b = effect_true.eval(t);
        let a = effect_eval.eval(t);
        let mb = weighted_moments(&rows, None, p, &b);
        let ma = weighted_moments(&rows, None, p, &a);
        let m0 = weighted_moments(&rows, None, p, &zero);
        if p == 1 {
            let v = mb.cov[(0, 0)];
            num.push(v + (ma.mean[0] - mb.mean[0]).powi(2));
            den.push(v + (m0.mean[0] - mb.mean[0]).powi(2));
        } else {
            let av = DVector::from_column_slice(&a);
            let v = (av.transpose() * &mb.cov * &av)[(0, 0)];
            num.push(v + av.dot(&(&mb.mean - &ma.mean)).powi(2));
            den.push(v + av.dot(&(&mb.mean - &m0.mean)).powi(2));
        }
    }
    let trapezoid = |y: &[f64]| {
        let h = 1.0 / (y.len() - 1) as f64;
        y.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum::<f64>()
    };
    let d = trapezoid(&den);
    if d <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(1.0 - trapezoid(&num) / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalDataset;
    use crate::effect::{Basis, FnEffect};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fixture() -> TransformedDataset {
        let rows = vec![vec![2.0], vec![1.0], vec![0.0]];
        time_transform(&SurvivalDataset::from_columns(&[10.0, 20.0, 30.0], &[true; 3], &rows)).unwrap()
    }

    #[test]
    fn q_hat_examples() {
        let d = fixture();
        let zero = TemporalEffect::zero(1);
        assert_relative_eq!(q_hat(&d, &zero, &zero), 0.625, epsilon = 1e-15);
        let ln2 = TemporalEffect::constant(vec![2f64.ln()]);
        let exact = 0.5 * ((4.0f64 / 7.0).powi(2) + (1.0f64 / 3.0).powi(2));
        assert_relative_eq!(q_hat(&d, &ln2, &ln2), exact, epsilon = 1e-14);
        assert!((exact - 0.21884).abs() < 5e-5);
    }

    #[test]
    fn r_squared_examples() {
        let d = fixture();
        let r0 = r_squared(&d, &TemporalEffect::zero(1)).unwrap();
        assert_eq!(r0.value, 0.0);
        let r = r_squared(&d, &TemporalEffect::constant(vec![2f64.ln()])).unwrap();
        assert_relative_eq!(r.value, 1.0 - r.numerator / r.denominator);
        assert!((r.value - 0.6499).abs() < 1e-4);
    }

    #[test]
    fn large_effect_drives_r_squared_to_one() {
        // the largest at-risk covariate fails at every grid point
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![6.0 - i as f64]).collect();
        let times: Vec<f64> = (1..=6).map(f64::from).collect();
        let d = time_transform(&SurvivalDataset::from_columns(&times, &[true; 6], &rows)).unwrap();
        let r = r_squared(&d, &TemporalEffect::constant(vec![60.0])).unwrap();
        assert!(r.value > 1.0 - 1e-12);
    }

    #[test]
    fn zero_projection_in_multivariate_branch() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0], vec![2.0, 1.0]];
        let d = time_transform(&SurvivalDataset::from_columns(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true; 5], &rows)).unwrap();
        let zero = TemporalEffect::zero(2);
        let some = TemporalEffect::constant(vec![0.4, -0.2]);
        assert_eq!(q_hat(&d, &some, &zero), 0.0);
        assert!(matches!(r_squared(&d, &zero), Err(Error::ZeroDenominator)));
        assert!(r_squared(&d, &some).unwrap().value <= 1.0);
    }

    #[test]
    fn fn_effect_matches_temporal_effect() {
        let d = fixture();
        let basis = Basis::Power { k: 2.0 };
        let te = TemporalEffect::univariate(1.3, basis.clone());
        let fe = FnEffect::new(1, move |t| vec![1.3 * basis.at(t)]);
        assert_eq!(q_hat(&d, &te, &te), q_hat(&d, &fe, &fe));
    }

    fn arb_univariate() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
        (4usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(0.1f64..10.0, n),
                prop::collection::vec(prop::bool::weighted(0.7), n),
                prop::collection::vec(-2.0f64..2.0, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn r_squared_at_most_one_and_invariant(
            (times, mut failed, z) in arb_univariate(),
            beta in -2.0f64..2.0,
            shift in -3.0f64..3.0,
            scale in 0.2f64..5.0,
        ) {
            failed[0] = true;
            let build = |g: &dyn Fn(f64) -> f64| {
                let rows: Vec<Vec<f64>> = z.iter().map(|&x| vec![g(x)]).collect();
                time_transform(&SurvivalDataset::from_columns(&times, &failed, &rows))
            };
            let Ok(d) = build(&|x| x) else { return Ok(()); };
            let e = TemporalEffect::constant(vec![beta]);
            let Ok(r) = r_squared(&d, &e) else { return Ok(()); };
            prop_assert!(r.value <= 1.0 + 1e-12);
            prop_assert!(r.numerator >= 0.0 && r.denominator >= 0.0);

            let shifted = build(&|x| x + shift).unwrap();
            let rs = r_squared(&shifted, &e).unwrap();
            prop_assert!((rs.value - r.value).abs() < 1e-9 * (1.0 + r.value.abs()));

            let scaled = build(&|x| scale * x).unwrap();
            let rc = r_squared(&scaled, &TemporalEffect::constant(vec![beta / scale])).unwrap();
            prop_assert!((rc.value - r.value).abs() < 1e-9 * (1.0 + r.value.abs()));
        }
    }
}
