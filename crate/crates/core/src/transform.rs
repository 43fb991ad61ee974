//! Rank-based time transform onto `[0, 1]` and the informative-failure grid.
//!
//! Subjects are ordered by `(time, failures before censorings, id)`; this
//! strict order stands in for the continuous-time ordering everywhere.
//! A failure is *informative* when the covariance of the covariates over its
//! risk set is positive definite. The `i`-th informative failure is sent to
//! `i / k_n`; censored subjects are spread uniformly between the images of
//! the failures that bracket them, preserving their original ranking.

use std::collections::HashMap;

use serde::Serialize;

use crate::data::{validate, SurvivalDataset};
use crate::error::{Error, Result};
use crate::linalg::SymEigen;
use crate::moments::{weighted_moments, WeightedAccumulator};

/// One point `t_i = i / k_n` of the failure grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    /// Transformed time `i / k_n`.
    pub time: f64,
    /// Index (into the source dataset) of the failing subject.
    pub subject: usize,
    /// Original-scale failure time.
    pub original_time: f64,
    /// Position of the failing subject in the tie-broken order; the risk set
    /// is every subject from here on.
    #[serde(skip)]
    pub(crate) start: usize,
}

/// Distinct fixed covariate vectors with their tie-broken order membership.
#[derive(Debug, Clone)]
pub(crate) struct Profiles {
    pub values: Vec<f64>,
    pub of_position: Vec<usize>,
}

impl Profiles {
    pub fn len(&self, p: usize) -> usize {
        self.values.len() / p
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Layout {
    /// Few distinct covariate vectors: risk sets are profile counts.
    Profiles(Profiles),
    /// Fixed covariates stored row-major in tie-broken order.
    Rows(Vec<f64>),
    /// Time-varying covariates, evaluated per grid point.
    Paths,
}

/// A dataset re-indexed on the rank time scale.
#[derive(Debug, Clone)]
pub struct TransformedDataset {
    source: SurvivalDataset,
    order: Vec<usize>,
    k_n: usize,
    grid: Vec<GridPoint>,
    phi: Vec<f64>,
    excluded: Vec<usize>,
    eval_beta: Vec<f64>,
    pub(crate) layout: Layout,
}

impl TransformedDataset {
    pub fn source(&self) -> &SurvivalDataset {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn k_n(&self) -> usize {
        self.k_n
    }

    pub fn grid(&self) -> &[GridPoint] {
        &self.grid
    }

    /// Transformed time `φ_n(X)` of every subject, indexed like the source.
    pub fn transformed_times(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi(&self, subject: usize) -> f64 {
        self.phi[subject]
    }

    /// Subject indices in tie-broken time order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Failures whose risk set is covariate-degenerate.
    pub fn excluded_failures(&self) -> Vec<&str> {
        self.excluded.iter().map(|&i| self.source.subjects()[i].id.as_str()).collect()
    }

    /// Parameter at which informativeness was decided.
    pub fn eval_beta(&self) -> &[f64] {
        &self.eval_beta
    }

    /// Subject indices at risk at grid point `i` (0-based).
    pub fn risk_set(&self, i: usize) -> &[usize] {
        &self.order[self.grid[i].start..]
    }

    /// Covariates of the failing subject at grid point `i`.
    pub fn failing_covariates(&self, i: usize) -> &[f64] {
        let g = &self.grid[i];
        self.source.subjects()[g.subject].covariates.at(g.original_time)
    }

    /// Calls `f(i, rows, multiplicities, failing)` for every grid point in
    /// order, where `rows` holds the at-risk covariate vectors row-major.
    pub(crate) fn for_each_risk_set<F>(&self, mut f: F)
    where
        F: FnMut(usize, &[f64], Option<&[f64]>, &[f64]),
    {
        let p = self.dim();
        match &self.layout {
            Layout::Profiles(prof) => {
                let mut counts = vec![0.0; prof.len(p)];
                for &k in &prof.of_position {
                    counts[k] += 1.0;
                }
                let mut removed = 0;
                for (i, g) in self.grid.iter().enumerate() {
                    while removed < g.start {
                        counts[prof.of_position[removed]] -= 1.0;
                        removed += 1;
                    }
                    f(i, &prof.values, Some(&counts), self.failing_covariates(i));
                }
            }
            Layout::Rows(rows) => {
                for (i, g) in self.grid.iter().enumerate() {
                    f(i, &rows[g.start * p..], None, self.failing_covariates(i));
                }
            }
            Layout::Paths => {
                let mut buf = Vec::with_capacity(self.order.len() * p);
                for (i, g) in self.grid.iter().enumerate() {
                    buf.clear();
                    for &s in &self.order[g.start..] {
                        buf.extend_from_slice(self.source.subjects()[s].covariates.at(g.original_time));
                    }
                    f(i, &buf, None, self.failing_covariates(i));
                }
            }
        }
    }

    /// At-risk covariate rows at grid point `i`, one row per subject.
    pub(crate) fn risk_set_rows(&self, i: usize) -> Vec<f64> {
        let g = &self.grid[i];
        let mut rows = Vec::with_capacity((self.order.len() - g.start) * self.dim());
        for &s in &self.order[g.start..] {
            rows.extend_from_slice(self.source.subjects()[s].covariates.at(g.original_time));
        }
        rows
    }
}

fn tie_broken_order(ds: &SurvivalDataset) -> Vec<usize> {
    let subjects = ds.subjects();
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&subjects[a], &subjects[b]);
        sa.time.total_cmp(&sb.time).then(sb.failed.cmp(&sa.failed)).then_with(|| sa.id.cmp(&sb.id))
    });
    order
}

/// For each position in `order`, whether it is a failure with a positive
/// definite risk-set covariance at parameter `beta`.
fn informative_flags(ds: &SurvivalDataset, order: &[usize], beta: &[f64]) -> Vec<bool> {
    let subjects = ds.subjects();
    let p = ds.dim();
    let n = order.len();
    let mut flags = vec![false; n];
    if ds.all_fixed() {
        let mut acc = WeightedAccumulator::new(p);
        for pos in (0..n).rev() {
            let s = &subjects[order[pos]];
            let z = s.covariates.at(s.time);
            let eta: f64 = z.iter().zip(beta).map(|(a, b)| a * b).sum();
            acc.push(z, eta);
            if s.failed {
                flags[pos] = SymEigen::new(&acc.covariance()).is_positive_definite();
            }
        }
    } else {
        let mut buf = Vec::new();
        for pos in 0..n {
            let s = &subjects[order[pos]];
            if !s.failed {
                continue;
            }
            buf.clear();
            for &j in &order[pos..] {
                buf.extend_from_slice(subjects[j].covariates.at(s.time));
            }
            let m = weighted_moments(&buf, None, p, beta);
            flags[pos] = SymEigen::new(&m.cov).is_positive_definite();
        }
    }
    flags
}

fn check_beta(ds: &SurvivalDataset, beta: &[f64]) -> Result<()> {
    validate(ds).into_result()?;
    if beta.len() != ds.dim() {
        return Err(Error::Domain(format!("parameter has length {}, expected {}", beta.len(), ds.dim())));
    }
    Ok(())
}

/// Number of failures whose risk-set covariance is positive definite at `beta`.
pub fn count_informative_failures(ds: &SurvivalDataset, beta: &[f64]) -> Result<usize> {
    check_beta(ds, beta)?;
    let order = tie_broken_order(ds);
    Ok(informative_flags(ds, &order, beta).into_iter().filter(|&f| f).count())
}

/// Rank-based transform with informativeness decided at `beta = 0`.
pub fn time_transform(ds: &SurvivalDataset) -> Result<TransformedDataset> {
    time_transform_at(ds, &vec![0.0; ds.dim()])
}

/// Rank-based transform with informativeness decided at `beta`.
///
/// Failures after the last informative failure keep counting, so their image
/// exceeds 1; they stay in the risk sets but take no part in grid
/// constructions. A degenerate failure before the last informative one (only
/// possible with time-varying covariates) is placed like a censoring.
pub fn time_transform_at(ds: &SurvivalDataset, beta: &[f64]) -> Result<TransformedDataset> {
    check_beta(ds, beta)?;
    let order = tie_broken_order(ds);
    let flags = informative_flags(ds, &order, beta);
    let k_n = flags.iter().filter(|&&f| f).count();
    if k_n == 0 {
        return Err(Error::NoInformativeFailures);
    }
    let subjects = ds.subjects();
    let last_informative = flags.iter().rposition(|&f| f).expect("k_n > 0");

    // counting value N̄ at each position, and whether the position sits on the grid
    let mut counts = Vec::with_capacity(order.len());
    let mut on_grid = Vec::with_capacity(order.len());
    let mut c = 0usize;
    for (pos, &idx) in order.iter().enumerate() {
        let failed = subjects[idx].failed;
        let counted = failed && (flags[pos] || pos > last_informative);
        if counted {
            c += 1;
        }
        counts.push(c);
        on_grid.push(counted);
    }
    let mut group_size: HashMap<usize, usize> = HashMap::new();
    for &c in &counts {
        *group_size.entry(c).or_insert(0) += 1;
    }

    let kf = k_n as f64;
    let mut phi = vec![0.0; order.len()];
    let mut grid = Vec::with_capacity(k_n);
    let mut excluded = Vec::new();
    let mut seen_in_group = 0usize;
    for (pos, &idx) in order.iter().enumerate() {
        if pos == 0 || counts[pos] != counts[pos - 1] {
            seen_in_group = 0;
        }
        let c = counts[pos];
        let value =
            if on_grid[pos] { c as f64 / kf } else { (c as f64 + seen_in_group as f64 / group_size[&c] as f64) / kf };
        phi[idx] = value;
        seen_in_group += 1;
        if flags[pos] {
            grid.push(GridPoint { time: value, subject: idx, original_time: subjects[idx].time, start: pos });
        } else if subjects[idx].failed {
            excluded.push(idx);
        }
    }
    debug_assert_eq!(grid.len(), k_n);

    let p = ds.dim();
    let layout = if ds.all_fixed() {
        let mut rows = Vec::with_capacity(order.len() * p);
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut values = Vec::new();
        let mut of_position = Vec::with_capacity(order.len());
        for &idx in &order {
            let z = subjects[idx].covariates.at(0.0);
            rows.extend_from_slice(z);
            let key: Vec<u64> = z.iter().map(|x| (x + 0.0).to_bits()).collect();
            let next = index.len();
            let k = *index.entry(key).or_insert_with(|| {
                values.extend_from_slice(z);
                next
            });
            of_position.push(k);
        }
        if 2 * index.len() <= order.len() {
            Layout::Profiles(Profiles { values, of_position })
        } else {
            Layout::Rows(rows)
        }
    } else {
        Layout::Paths
    };

    Ok(TransformedDataset { source: ds.clone(), order, k_n, grid, phi, excluded, eval_beta: beta.to_vec(), layout })
}
