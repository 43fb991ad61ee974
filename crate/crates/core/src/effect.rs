//! Time-varying regression effects `β(t) = (β₀ⱼ Bⱼ(t))ⱼ` on the rank time scale.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Known time shape multiplying one scalar loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum Basis {
    /// `1`
    Constant,
    /// `I(t ≤ t0) + ratio · I(t > t0)`
    Changepoint { t0: f64, ratio: f64 },
    /// `(1 - t)^k`
    Power { k: f64 },
    /// `1 - t²`
    OneMinusSq,
    /// `ln t`; only evaluated at `t > 0`.
    LogT,
    /// Piecewise constant: `values[0]` on `t ≤ breakpoints[0]`, `values[j]` on
    /// `(breakpoints[j-1], breakpoints[j]]`, `values[m]` beyond the last breakpoint.
    Table { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl Basis {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Basis::Constant => 1.0,
            Basis::Changepoint { t0, ratio } => {
                if t <= *t0 {
                    1.0
                } else {
                    *ratio
                }
            }
            Basis::Power { k } => (1.0 - t).powf(*k),
            Basis::OneMinusSq => 1.0 - t * t,
            Basis::LogT => t.ln(),
            Basis::Table { breakpoints, values } => values[breakpoints.partition_point(|b| *b < t)],
        }
    }

    /// `∫₀ᵗ B(s) ds` in closed form.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Basis::Constant => t,
            Basis::Changepoint { t0, ratio } => t.min(*t0) + ratio * (t - t0).max(0.0),
            Basis::Power { k } => (1.0 - (1.0 - t).powf(k + 1.0)) / (k + 1.0),
            Basis::OneMinusSq => t - t.powi(3) / 3.0,
            Basis::LogT => {
                if t <= 0.0 {
                    0.0
                } else {
                    t * t.ln() - t
                }
            }
            Basis::Table { breakpoints, values } => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                for (j, &b) in breakpoints.iter().enumerate() {
                    if t <= b {
                        return acc + values[j] * (t - lo).max(0.0);
                    }
                    acc += values[j] * (b - lo).max(0.0);
                    lo = b.max(0.0);
                }
                acc + values[breakpoints.len()] * (t - lo).max(0.0)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Basis::Constant)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Schema(m.to_string()));
        match self {
            Basis::Changepoint { t0, ratio } => {
                if !(t0.is_finite() && *t0 > 0.0 && *t0 < 1.0) {
                    return bad("changepoint t0 must lie in (0, 1)");
                }
                if !ratio.is_finite() {
                    return bad("changepoint ratio must be finite");
                }
            }
            Basis::Power { k } if !(k.is_finite() && *k >= 0.0) => return bad("power exponent must be >= 0"),
            Basis::Table { breakpoints, values } => {
                if values.len() != breakpoints.len() + 1 {
                    return bad("table needs exactly one more value than breakpoints");
                }
                if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || values.iter().any(|v| !v.is_finite()) {
                    return bad("table breakpoints must increase and values must be finite");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Constant => write!(f, "constant"),
            Basis::Changepoint { t0, ratio } => write!(f, "changepoint(t0={t0},ratio={ratio})"),
            Basis::Power { k } => write!(f, "(1-t)^{k}"),
            Basis::OneMinusSq => write!(f, "1-t^2"),
            Basis::LogT => write!(f, "log(t)"),
            Basis::Table { breakpoints, values } => write!(f, "table({breakpoints:?};{values:?})"),
        }
    }
}

/// Anything that maps rank time `t ∈ [0,1]` to a `p`-vector of regression effects.
pub trait Effect: Send + Sync {
    fn dim(&self) -> usize;

    fn eval_into(&self, t: f64, out: &mut [f64]);

    fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// `∫₀ᵗ β(s) ds`; the default uses a 1024-interval trapezoid rule.
    fn cumulative(&self, t: f64) -> Vec<f64> {
        const STEPS: usize = 1024;
        let p = self.dim();
        let mut acc = vec![0.0; p];
        if t <= 0.0 {
            return acc;
        }
        let h = t / STEPS as f64;
        let mut prev = self.eval(0.0);
        for s in 1..=STEPS {
            let cur = self.eval(s as f64 * h);
            for j in 0..p {
                acc[j] += 0.5 * h * (prev[j] + cur[j]);
            }
            prev = cur;
        }
        acc
    }
}

/// `β(t) = (β₀ⱼ Bⱼ(t))ⱼ` with known bases and scalar loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalEffect {
    pub loadings: Vec<f64>,
    pub bases: Vec<Basis>,
}

impl TemporalEffect {
    pub fn new(loadings: Vec<f64>, bases: Vec<Basis>) -> Result<Self> {
        if loadings.len() != bases.len() || loadings.is_empty() {
            return Err(Error::Schema(format!(
                "effect needs one basis per loading (got {} loadings, {} bases)",
                loadings.len(),
                bases.len()
            )));
        }
        if loadings.iter().any(|b| !b.is_finite()) {
            return Err(Error::Schema("effect loadings must be finite".into()));
        }
        for b in &bases {
            b.check()?;
        }
        Ok(TemporalEffect { loadings, bases })
    }

    /// Constant-in-time effect (a proportional hazards model).
    pub fn constant(loadings: Vec<f64>) -> Self {
        let bases = vec![Basis::Constant; loadings.len()];
        TemporalEffect { loadings, bases }
    }

    pub fn zero(p: usize) -> Self {
        Self::constant(vec![0.0; p])
    }

    pub fn univariate(loading: f64, basis: Basis) -> Self {
        TemporalEffect { loadings: vec![loading], bases: vec![basis] }
    }

    pub fn with_loadings(&self, loadings: Vec<f64>) -> Self {
        TemporalEffect { loadings, bases: self.bases.clone() }
    }

    pub fn is_proportional(&self) -> bool {
        self.bases.iter().all(Basis::is_constant)
    }

    pub fn is_zero(&self) -> bool {
        self.loadings.iter().all(|b| *b == 0.0)
    }
}

impl Effect for TemporalEffect {
    fn dim(&self) -> usize {
        self.loadings.len()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        for ((o, b), basis) in out.iter_mut().zip(&self.loadings).zip(&self.bases) {
            *o = if *b == 0.0 { 0.0 } else { b * basis.at(t) };
        }
    }

    fn cumulative(&self, t: f64) -> Vec<f64> {
        self.loadings.iter().zip(&self.bases).map(|(b, basis)| b * basis.integral(t)).collect()
    }
}

/// Wraps an arbitrary closure `t ↦ β(t)`.
pub struct FnEffect<F> {
    dim: usize,
    f: F,
}

impl<F> FnEffect<F>
where
    F: Fn(f64) -> Vec<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnEffect { dim, f }
    }
}

impl<F> Effect for FnEffect<F>
where
    F: Fn(f64) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&(self.f)(t));
    }
}
