//! Standardized score process `U*(β₀, ·)`, its global standardization by
//! `Σ̂^{-1/2}`, Brownian-bridge sup statistics and confidence bands.

use nalgebra::{DMatrix, DVector};

use crate::effect::Effect;
use crate::error::{Error, Result};
use crate::kolmogorov::kolmogorov_quantile;
use crate::linalg::{sym_power_from, Power, SymEigen};
use crate::moments::{weighted_moments, SigmaHat};
use crate::transform::TransformedDataset;

/// The score process on the grid `0, 1/k_n, …, 1`, linearly interpolated in between.
#[derive(Debug, Clone)]
pub struct ScoreProcessTrace {
    pub beta0: Vec<f64>,
    pub k_n: usize,
    /// `0, 1/k_n, …, 1` (length `k_n + 1`).
    pub grid: Vec<f64>,
    /// `U*(β₀, t_j)`; `values[0]` is the zero vector.
    pub values: Vec<DVector<f64>>,
    /// Per-failure whitened residuals `V^{-1/2} r` (length `k_n`).
    pub increments: Vec<DVector<f64>>,
    /// Average risk-set covariance (always available).
    pub sigma: DMatrix<f64>,
    /// `Σ̂` with its inverse square root, when positive definite.
    pub sigma_hat: Option<SigmaHat>,
    /// `Σ̂^{-1/2} U*(β₀, t_j)`, present iff `sigma_hat` is.
    pub standardized_values: Option<Vec<DVector<f64>>>,
}

impl ScoreProcessTrace {
    pub fn dim(&self) -> usize {
        self.beta0.len()
    }

    fn interpolate(&self, series: &[DVector<f64>], u: f64) -> DVector<f64> {
        let k = self.k_n as f64;
        let x = (u.clamp(0.0, 1.0) * k).min(k);
        let j = (x.floor() as usize).min(self.k_n);
        if j == self.k_n {
            return series[j].clone();
        }
        let frac = x - j as f64;
        &series[j] + (&series[j + 1] - &series[j]) * frac
    }

    /// `U*(β₀, u)` for any `u ∈ [0, 1]`.
    pub fn value_at(&self, u: f64) -> DVector<f64> {
        self.interpolate(&self.values, u)
    }

    /// `Σ̂^{-1/2} U*(β₀, u)`.
    pub fn standardized_at(&self, u: f64) -> Result<DVector<f64>> {
        Ok(self.interpolate(self.standardized()?, u))
    }

    pub fn standardized(&self) -> Result<&[DVector<f64>]> {
        self.standardized_values.as_deref().ok_or(Error::SingularMatrix)
    }

    /// Component `i` of the standardized process at every grid point.
    pub fn standardized_component(&self, i: usize) -> Result<Vec<f64>> {
        Ok(self.standardized()?.iter().map(|v| v[i]).collect())
    }

    fn sigma_hat_ref(&self) -> Result<&SigmaHat> {
        self.sigma_hat.as_ref().ok_or(Error::SingularMatrix)
    }

    /// `s_i(t_j) − t_j s_i(1)` of the standardized component `i`.
    fn bridge(&self, i: usize) -> Result<Vec<f64>> {
        let s = self.standardize_component_checked(i)?;
        let end = *s.last().expect("non-empty grid");
        Ok(s.iter().zip(&self.grid).map(|(v, t)| v - t * end).collect())
    }

    fn standardize_component_checked(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.dim() {
            return Err(Error::Domain(format!("component {i} out of range (p = {})", self.dim())));
        }
        self.standardized_component(i)
    }
}

/// Builds `U*(β₀, ·)` from the whitened Schoenfeld-type residuals at every
/// informative failure.
pub fn score_process(data: &TransformedDataset, beta0: &[f64]) -> Result<ScoreProcessTrace> {
    let p = data.dim();
    if beta0.len() != p {
        return Err(Error::Domain(format!("parameter has length {}, expected {p}", beta0.len())));
    }
    let k_n = data.k_n();
    if k_n < 2 {
        return Err(Error::Domain(format!("score process needs k_n >= 2, got {k_n}")));
    }
    let scale = (k_n as f64).sqrt();
    let mut increments = Vec::with_capacity(k_n);
    let mut sigma = DMatrix::<f64>::zeros(p, p);
    let mut failure: Option<Error> = None;
    data.for_each_risk_set(|i, rows, mult, fail| {
        if failure.is_some() {
            return;
        }
        let m = weighted_moments(rows, mult, p, beta0);
        let eig = SymEigen::new(&m.cov);
        match sym_power_from(&eig, Power::InverseHalf) {
            Ok(w) => {
                let r = DVector::from_column_slice(fail) - &m.mean;
                increments.push(w * r);
                sigma += &m.cov;
            }
            Err(_) => failure = Some(Error::DegenerateRiskSet { time: data.grid()[i].time }),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    sigma /= k_n as f64;

    let mut values = Vec::with_capacity(k_n + 1);
    let mut running = DVector::<f64>::zeros(p);
    values.push(running.clone());
    for inc in &increments {
        running += inc;
        values.push(&running / scale);
    }
    let grid = (0..=k_n).map(|j| j as f64 / k_n as f64).collect();
    let sigma_hat = SigmaHat::from_matrix(sigma.clone()).ok();
    let standardized_values = sigma_hat.as_ref().map(|s| values.iter().map(|v| &s.inv_sqrt * v).collect::<Vec<_>>());
    Ok(ScoreProcessTrace {
        beta0: beta0.to_vec(),
        k_n,
        grid,
        values,
        increments,
        sigma,
        sigma_hat,
        standardized_values,
    })
}

/// Large-sample mean curve `√k_n Σ^{1/2} ∫₀ᵗ (β(s) − β₀) ds` of `U*(β₀, t)`.
pub fn expected_drift(effect: &dyn Effect, beta0: &[f64], sigma: &DMatrix<f64>, k_n: usize, t: f64) -> Vec<f64> {
    let cumulative = effect.cumulative(t);
    let ib = DVector::from_iterator(beta0.len(), cumulative.iter().zip(beta0).map(|(c, b)| c - b * t));
    let half = SymEigen::new(sigma).apply(|l| l.max(0.0).sqrt());
    ((half * ib) * (k_n as f64).sqrt()).iter().cloned().collect()
}

/// Normalized sup of the bridge of standardized component `component`:
/// `‖Σ̂^{-1/2}_{·,i}‖₂⁻¹ sup_t |s_i(t) − t s_i(1)|`. The process is piecewise
/// linear, so the sup is attained on the grid.
pub fn bridge_sup_statistic(trace: &ScoreProcessTrace, component: usize) -> Result<f64> {
    let bridge = trace.bridge(component)?;
    let norm = trace.sigma_hat_ref()?.column_norm(component);
    Ok(bridge.iter().fold(0.0_f64, |m, b| m.max(b.abs())) / norm)
}

/// Linear envelope `t·s_i(1) ± ‖Σ̂^{-1/2}_{·,i}‖₂ a(α)` for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    pub component: usize,
    pub alpha: f64,
    /// Slope of the chord, `s_i(1)`.
    pub slope: f64,
    pub half_width: f64,
    /// First time the standardized component leaves the band, if it does.
    pub crossed: Option<f64>,
}

impl ConfidenceBand {
    pub fn lower(&self, t: f64) -> f64 {
        self.slope * t - self.half_width
    }

    pub fn upper(&self, t: f64) -> f64 {
        self.slope * t + self.half_width
    }

    pub fn rejects(&self) -> bool {
        self.crossed.is_some()
    }
}

/// Per-component confidence bands at level `alpha`. A crossing rejects the
/// hypothesis that the corresponding effect is constant in time.
pub fn confidence_bands(trace: &ScoreProcessTrace, alpha: f64) -> Result<Vec<ConfidenceBand>> {
    let a = kolmogorov_quantile(alpha)?;
    let sigma_hat = trace.sigma_hat_ref()?;
    (0..trace.dim())
        .map(|i| {
            let s = trace.standardized_component(i)?;
            let bridge = trace.bridge(i)?;
            let half_width = sigma_hat.column_norm(i) * a;
            let mut crossed = None;
            for j in 1..bridge.len() {
                let (b0, b1) = (bridge[j - 1], bridge[j]);
                if b1.abs() > half_width {
                    let edge = half_width.copysign(b1);
                    let frac = if b1 != b0 { ((edge - b0) / (b1 - b0)).clamp(0.0, 1.0) } else { 0.0 };
                    let (t0, t1) = (trace.grid[j - 1], trace.grid[j]);
                    crossed = Some(t0 + frac * (t1 - t0));
                    break;
                }
            }
            Ok(ConfidenceBand { component: i, alpha, slope: *s.last().expect("grid"), half_width, crossed })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalDataset;
    use crate::effect::{Basis, TemporalEffect};
    use crate::transform::time_transform;
    use approx::assert_relative_eq;

    fn fixture() -> TransformedDataset {
        let rows = vec![vec![2.0], vec![1.0], vec![0.0]];
        time_transform(&SurvivalDataset::from_columns(&[10.0, 20.0, 30.0], &[true; 3], &rows)).unwrap()
    }

    #[test]
    fn hand_evaluated_trace() {
        let trace = score_process(&fixture(), &[0.0]).unwrap();
        // r = (1, 1/2), V = (2/3, 1/4)
        let inc: Vec<f64> = trace.increments.iter().map(|v| v[0]).collect();
        assert_relative_eq!(inc[0], 1.5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(inc[1], 1.0, epsilon = 1e-14);
        let vals: Vec<f64> = trace.values.iter().map(|v| v[0]).collect();
        assert_eq!(vals[0], 0.0);
        assert_relative_eq!(vals[1], 1.5f64.sqrt() / 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(vals[2], (1.5f64.sqrt() + 1.0) / 2f64.sqrt(), epsilon = 1e-14);
        assert!((vals[1] - 0.8660).abs() < 1e-4 && (vals[2] - 1.5731).abs() < 1e-4);
        assert_eq!(trace.grid, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn increments_scale_into_values() {
        let trace = score_process(&fixture(), &[0.3]).unwrap();
        let s = (trace.k_n as f64).sqrt();
        for j in 1..=trace.k_n {
            let diff = &trace.values[j] - &trace.values[j - 1];
            assert_relative_eq!(diff[0], trace.increments[j - 1][0] / s, epsilon = 1e-14);
        }
    }

    #[test]
    fn interpolation_midpoint() {
        let trace = score_process(&fixture(), &[0.0]).unwrap();
        let mid = trace.value_at(0.25)[0];
        assert_relative_eq!(mid, 0.5 * (trace.values[0][0] + trace.values[1][0]), epsilon = 1e-15);
        assert_relative_eq!(trace.value_at(1.0)[0], trace.values[2][0]);
    }

    #[test]
    fn bridge_sup_of_fixture() {
        let trace = score_process(&fixture(), &[0.0]).unwrap();
        let stat = bridge_sup_statistic(&trace, 0).unwrap();
        let v = &trace.values;
        assert_relative_eq!(stat, (v[1][0] - 0.5 * v[2][0]).abs(), epsilon = 1e-14);
        assert!((stat - 0.0795).abs() < 1e-4);
    }

    #[test]
    fn band_width_and_decision_cancel_sigma_for_p1() {
        let trace = score_process(&fixture(), &[0.0]).unwrap();
        let bands = confidence_bands(&trace, 0.05).unwrap();
        let a = kolmogorov_quantile(0.05).unwrap();
        let inv = trace.sigma_hat.as_ref().unwrap().inv_sqrt[(0, 0)];
        assert_relative_eq!(bands[0].half_width, inv * a, epsilon = 1e-14);
        assert_relative_eq!(bands[0].upper(0.3) - bands[0].lower(0.3), 2.0 * inv * a, epsilon = 1e-14);
        assert_relative_eq!(bands[0].upper(0.0), bands[0].half_width);
        let raw_sup = (trace.values[1][0] - 0.5 * trace.values[2][0]).abs();
        assert_eq!(bands[0].rejects(), raw_sup > a);
    }

    #[test]
    fn process_on_its_chord_never_crosses() {
        let mut trace = score_process(&fixture(), &[0.0]).unwrap();
        let end = trace.values[2].clone();
        trace.values = trace.grid.iter().map(|t| &end * *t).collect();
        let inv = trace.sigma_hat.as_ref().unwrap().inv_sqrt.clone();
        trace.standardized_values = Some(trace.values.iter().map(|v| &inv * v).collect());
        assert!(bridge_sup_statistic(&trace, 0).unwrap() < 1e-15);
        for alpha in [0.5, 0.05, 0.001] {
            assert!(!confidence_bands(&trace, alpha).unwrap()[0].rejects());
        }
    }

    #[test]
    fn first_crossing_is_interpolated() {
        let mut trace = score_process(&fixture(), &[0.0]).unwrap();
        // standardized bridge 0 -> 10 -> 0 with half width 2a·… crosses inside the first segment
        let inv = trace.sigma_hat.as_ref().unwrap().inv_sqrt.clone();
        trace.standardized_values =
            Some(vec![DVector::from_element(1, 0.0), DVector::from_element(1, 10.0), DVector::from_element(1, 0.0)]);
        let band = &confidence_bands(&trace, 0.05).unwrap()[0];
        let hw = inv[(0, 0)] * kolmogorov_quantile(0.05).unwrap();
        assert_relative_eq!(band.crossed.unwrap(), 0.5 * hw / 10.0, epsilon = 1e-14);
    }

    #[test]
    fn drift_examples() {
        let sigma = DMatrix::from_element(1, 1, 0.25);
        let same = TemporalEffect::constant(vec![0.7]);
        for t in [0.0, 0.3, 1.0] {
            assert_relative_eq!(expected_drift(&same, &[0.7], &sigma, 100, t)[0], 0.0, epsilon = 1e-14);
        }
        let c = TemporalEffect::constant(vec![0.5]);
        assert_relative_eq!(expected_drift(&c, &[0.0], &sigma, 100, 0.4)[0], 10.0 * 0.5 * 0.5 * 0.4, epsilon = 1e-14);
        let step = TemporalEffect::univariate(1.0, Basis::Changepoint { t0: 0.5, ratio: 0.0 });
        assert_relative_eq!(expected_drift(&step, &[0.0], &sigma, 100, 0.3)[0], 10.0 * 0.5 * 0.3, epsilon = 1e-14);
        assert_relative_eq!(expected_drift(&step, &[0.0], &sigma, 100, 0.9)[0], 10.0 * 0.5 * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn permuting_subjects_leaves_trace_unchanged() {
        let rows = vec![vec![0.3], vec![1.2], vec![-0.5], vec![2.0], vec![0.9]];
        let times = [3.0, 1.0, 4.0, 1.5, 9.0];
        let failed = [true, true, false, true, true];
        let a = time_transform(&SurvivalDataset::from_columns(&times, &failed, &rows)).unwrap();
        let perm = [4, 2, 0, 3, 1];
        let subjects: Vec<_> = perm.iter().map(|&i| a.source().subjects()[i].clone()).collect();
        let b = time_transform(&SurvivalDataset::new(subjects)).unwrap();
        let ta = score_process(&a, &[0.1]).unwrap();
        let tb = score_process(&b, &[0.1]).unwrap();
        assert_eq!(ta.values, tb.values);
    }

    #[test]
    fn short_grid_is_rejected() {
        let rows = vec![vec![1.0], vec![0.0]];
        let t = time_transform(&SurvivalDataset::from_columns(&[1.0, 2.0], &[true, false], &rows)).unwrap();
        assert!(matches!(score_process(&t, &[0.0]), Err(Error::Domain(_))));
    }
}
