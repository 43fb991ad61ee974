//! Risk-set probabilities, conditional moments and the covariance average Σ̂.

use nalgebra::{DMatrix, DVector};

use crate::effect::Effect;
use crate::error::{Error, Result};
use crate::linalg::{sym_power_from, Power, SymEigen};
use crate::transform::TransformedDataset;

/// Conditional mean and covariance of the covariates under exponential
/// tilting weights `exp(βᵀZ)`, plus `log Σ exp(βᵀZ)`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_norm: f64,
}

/// Two-pass weighted moments over `rows` (row-major, `p` columns), each row
/// counted `mult[j]` times. The largest exponent is subtracted before
/// exponentiation.
pub(crate) fn weighted_moments(rows: &[f64], mult: Option<&[f64]>, p: usize, beta: &[f64]) -> Moments {
    let m = rows.len() / p;
    let mut eta = Vec::with_capacity(m);
    let mut max = f64::NEG_INFINITY;
    for j in 0..m {
        if mult.is_some_and(|c| c[j] <= 0.0) {
            eta.push(f64::NEG_INFINITY);
            continue;
        }
        let z = &rows[j * p..(j + 1) * p];
        let e: f64 = z.iter().zip(beta).map(|(a, b)| a * b).sum();
        max = max.max(e);
        eta.push(e);
    }
    let mut total = 0.0;
    let mut mean = vec![0.0; p];
    for j in 0..m {
        if eta[j] == f64::NEG_INFINITY {
            eta[j] = 0.0;
            continue;
        }
        let w = (eta[j] - max).exp() * mult.map_or(1.0, |c| c[j]);
        eta[j] = w;
        total += w;
        let z = &rows[j * p..(j + 1) * p];
        for k in 0..p {
            mean[k] += w * z[k];
        }
    }
    for x in &mut mean {
        *x /= total;
    }
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for j in 0..m {
        let w = eta[j];
        if w == 0.0 {
            continue;
        }
        let z = &rows[j * p..(j + 1) * p];
        for a in 0..p {
            let da = z[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += w * da * (z[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Moments { mean: DVector::from_vec(mean), cov, log_norm: max + total.ln() }
}

/// Streaming weighted mean/covariance with weights `exp(eta)`, kept on a
/// rescaled log scale so that no weight underflows relative to the largest.
#[derive(Debug, Clone)]
pub(crate) struct WeightedAccumulator {
    p: usize,
    log_scale: f64,
    total: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WeightedAccumulator {
    pub fn new(p: usize) -> Self {
        WeightedAccumulator { p, log_scale: f64::NEG_INFINITY, total: 0.0, mean: vec![0.0; p], m2: vec![0.0; p * p] }
    }

    pub fn push(&mut self, z: &[f64], eta: f64) {
        if eta > self.log_scale {
            let f = (self.log_scale - eta).exp();
            self.total *= f;
            for x in &mut self.m2 {
                *x *= f;
            }
            self.log_scale = eta;
        }
        let w = (eta - self.log_scale).exp();
        self.total += w;
        let r = w / self.total;
        let p = self.p;
        let delta: Vec<f64> = z.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for k in 0..p {
            self.mean[k] += r * delta[k];
        }
        for a in 0..p {
            for b in 0..p {
                self.m2[a * p + b] += w * delta[a] * (z[b] - self.mean[b]);
            }
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut c = DMatrix::<f64>::zeros(p, p);
        if self.total > 0.0 {
            for a in 0..p {
                for b in 0..p {
                    c[(a, b)] = 0.5 * (self.m2[a * p + b] + self.m2[b * p + a]) / self.total;
                }
            }
        }
        c
    }
}

/// Risk-set probabilities and conditional moments at one failure time.
#[derive(Debug, Clone)]
pub struct RiskSetMoments {
    /// Grid time `t_i`.
    pub time: f64,
    /// At-risk subject indices, aligned with `pi`.
    pub subjects: Vec<usize>,
    pub pi: Vec<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cov_sqrt: DMatrix<f64>,
    cov_inv_sqrt: Option<DMatrix<f64>>,
}

impl RiskSetMoments {
    /// `V^{-1/2}`, or `DegenerateRiskSet` when the covariance is not positive definite.
    pub fn cov_inv_sqrt(&self) -> Result<&DMatrix<f64>> {
        self.cov_inv_sqrt.as_ref().ok_or(Error::DegenerateRiskSet { time: self.time })
    }
}

/// Moments over the risk set of grid point `i` (0-based) at a constant parameter.
pub fn riskset_moments(data: &TransformedDataset, i: usize, beta: &[f64]) -> Result<RiskSetMoments> {
    let p = data.dim();
    if i >= data.k_n() {
        return Err(Error::Domain(format!("grid index {i} out of range (k_n = {})", data.k_n())));
    }
    if beta.len() != p {
        return Err(Error::Domain(format!("parameter has length {}, expected {p}", beta.len())));
    }
    let rows = data.risk_set_rows(i);
    let m = weighted_moments(&rows, None, p, beta);
    let pi: Vec<f64> = rows
        .chunks(p)
        .map(|z| {
            let e: f64 = z.iter().zip(beta).map(|(a, b)| a * b).sum();
            (e - m.log_norm).exp()
        })
        .collect();
    let eig = SymEigen::new(&m.cov);
    let cov_sqrt = sym_power_from(&eig, Power::Half)?;
    let cov_inv_sqrt = sym_power_from(&eig, Power::InverseHalf).ok();
    Ok(RiskSetMoments {
        time: data.grid()[i].time,
        subjects: data.risk_set(i).to_vec(),
        pi,
        mean: m.mean,
        cov: m.cov,
        cov_sqrt,
        cov_inv_sqrt,
    })
}

/// Like [`riskset_moments`] with the parameter taken from a time-varying effect at `t_i`.
pub fn riskset_moments_at(data: &TransformedDataset, i: usize, effect: &dyn Effect) -> Result<RiskSetMoments> {
    let t = data.grid().get(i).map(|g| g.time).unwrap_or(f64::NAN);
    riskset_moments(data, i, &effect.eval(t))
}

/// Calls `f(i, moments, failing, beta_t)` along the grid with the parameter
/// taken from `effect` at each grid time.
pub(crate) fn moments_along<F>(data: &TransformedDataset, effect: &dyn Effect, mut f: F)
where
    F: FnMut(usize, &Moments, &[f64], &[f64]),
{
    let p = data.dim();
    let mut beta = vec![0.0; p];
    data.for_each_risk_set(|i, rows, mult, failing| {
        effect.eval_into(data.grid()[i].time, &mut beta);
        let m = weighted_moments(rows, mult, p, &beta);
        f(i, &m, failing, &beta);
    });
}

/// Average conditional covariance over the grid, with its inverse square root.
#[derive(Debug, Clone)]
pub struct SigmaHat {
    pub matrix: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl SigmaHat {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let eig = SymEigen::new(&matrix);
        let inv_sqrt = sym_power_from(&eig, Power::InverseHalf)?;
        Ok(SigmaHat { matrix, inv_sqrt })
    }

    /// `‖Σ̂^{-1/2}_{·,i}‖₂`.
    pub fn column_norm(&self, i: usize) -> f64 {
        self.inv_sqrt.column(i).norm()
    }
}

/// Average of the risk-set covariances over all grid points.
pub(crate) fn average_cov(data: &TransformedDataset, beta0: &[f64]) -> DMatrix<f64> {
    let p = data.dim();
    let mut sum = DMatrix::<f64>::zeros(p, p);
    data.for_each_risk_set(|_, rows, mult, _| {
        sum += weighted_moments(rows, mult, p, beta0).cov;
    });
    sum / data.k_n() as f64
}

/// `Σ̂ = k_n⁻¹ Σᵢ V_{β₀}(Z | t_i)`.
pub fn sigma_hat(data: &TransformedDataset, beta0: &[f64]) -> Result<SigmaHat> {
    if beta0.len() != data.dim() {
        return Err(Error::Domain(format!("parameter has length {}, expected {}", beta0.len(), data.dim())));
    }
    SigmaHat::from_matrix(average_cov(data, beta0))
}
