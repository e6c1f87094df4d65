//! Index models: convex combinations of standardized per-target predictions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linear_fit::{fit_vector, LinearModel};
use crate::ranking::{rank_descending, rank_of, RankVector};
use crate::rashomon::{Ambiguity, FlipReport, Method, PruneSet, SearchConfig, SearchMode};
use crate::solver::{
    self, root_presolve, Direction, Family, MipInstance, MipSolution, Objective, PairBound, Region,
    SolveOptions, SolveStatus, SIMPLEX_MIN_SUM, SIMPLEX_SUM_WEIGHT,
};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Standardization {
    /// `(p - mean) / sd` with the sample standard deviation.
    #[default]
    Zscore,
    /// Mid-rank empirical CDF in `[0, 1]`.
    Percentile,
    /// Raw predictions.
    None,
}

impl std::str::FromStr for Standardization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(Standardization::Zscore),
            "percentile" => Ok(Standardization::Percentile),
            "none" => Ok(Standardization::None),
            other => Err(Error::Config(format!("unknown standardization `{other}`"))),
        }
    }
}

impl std::fmt::Display for Standardization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Standardization::Zscore => "zscore",
            Standardization::Percentile => "percentile",
            Standardization::None => "none",
        })
    }
}

/// Standardization parameters frozen on a reference set of predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mode: Standardization,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Sorted reference predictions per target (percentile mode).
    pub reference: Vec<Vec<f64>>,
}

impl Standardizer {
    pub fn fit(raw: &DMatrix<f64>, mode: Standardization, names: &[String]) -> Result<Self> {
        let n = raw.nrows();
        if n < 2 {
            return Err(Error::TooFewRows { required: 2, actual: n });
        }
        let mut means = Vec::new();
        let mut sds = Vec::new();
        let mut reference = Vec::new();
        for (k, col) in raw.column_iter().enumerate() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if mode == Standardization::Zscore && (sd.is_nan() || sd <= 1e-12 * (1.0 + mean.abs())) {
                return Err(Error::ZeroVariance(names.get(k).cloned().unwrap_or_default()));
            }
            means.push(mean);
            sds.push(sd);
            if mode == Standardization::Percentile {
                let mut v: Vec<f64> = col.iter().copied().collect();
                v.sort_by(f64::total_cmp);
                reference.push(v);
            }
        }
        Ok(Standardizer {
            mode,
            means,
            sds,
            reference,
        })
    }

    pub fn apply(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = raw.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            match self.mode {
                Standardization::None => {}
                Standardization::Zscore => {
                    for v in col.iter_mut() {
                        *v = (*v - self.means[k]) / self.sds[k];
                    }
                }
                Standardization::Percentile => {
                    let r = &self.reference[k];
                    let m = r.len() as f64;
                    for v in col.iter_mut() {
                        let below = r.partition_point(|&x| x < *v);
                        let upto = r.partition_point(|&x| x <= *v);
                        *v = (below as f64 + 0.5 * (upto - below) as f64) / m;
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEnsemble {
    pub target_names: Vec<String>,
    /// n x K standardized predictions.
    pub predictions: DMatrix<f64>,
    pub standardization: Standardization,
    /// Reference combining weights (uniform by default).
    pub alpha: DVector<f64>,
    pub row_ids: Vec<String>,
}

impl IndexEnsemble {
    pub fn new(
        target_names: Vec<String>,
        predictions: DMatrix<f64>,
        standardization: Standardization,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let k = predictions.ncols();
        if k == 0 {
            return Err(Error::Config("ensemble needs at least one target".into()));
        }
        if target_names.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: target_names.len(),
            });
        }
        if row_ids.len() != predictions.nrows() {
            return Err(Error::DimensionMismatch {
                expected: predictions.nrows(),
                actual: row_ids.len(),
            });
        }
        Ok(IndexEnsemble {
            target_names,
            predictions,
            standardization,
            alpha: DVector::from_element(k, 1.0 / k as f64),
            row_ids,
        })
    }

    pub fn with_alpha(mut self, alpha: DVector<f64>) -> Result<Self> {
        check_simplex(&alpha, self.k())?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.predictions.nrows()
    }

    pub fn k(&self) -> usize {
        self.predictions.ncols()
    }

    pub fn combined(&self) -> DVector<f64> {
        self.combined_with(&self.alpha)
    }

    pub fn combined_with(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.predictions * alpha
    }

    pub fn ranks(&self, alpha: &DVector<f64>, kappa: usize) -> Result<RankVector> {
        rank_descending(self.combined_with(alpha).as_slice(), kappa)
    }

    /// Rows `0..n` restricted to `rows`, keeping the same standardized values.
    pub fn subset(&self, rows: &[usize]) -> IndexEnsemble {
        IndexEnsemble {
            target_names: self.target_names.clone(),
            predictions: self.predictions.select_rows(rows),
            standardization: self.standardization,
            alpha: self.alpha.clone(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

fn check_simplex(alpha: &DVector<f64>, k: usize) -> Result<()> {
    if alpha.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: alpha.len(),
        });
    }
    if alpha.iter().any(|&a| a.is_nan() || a < -SIMPLEX_TOL) || (alpha.sum() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidAlpha);
    }
    Ok(())
}

pub fn one_hot(k: usize, j: usize) -> DVector<f64> {
    let mut e = DVector::zeros(k);
    e[j] = 1.0;
    e
}

/// In-sample predictions of each model on `ds`, standardized on themselves.
pub fn build_ensemble(models: &[LinearModel], ds: &Dataset, standardization: Standardization) -> Result<IndexEnsemble> {
    if models.is_empty() {
        return Err(Error::Config("ensemble needs at least one model".into()));
    }
    let x = ds.features();
    let mut raw = DMatrix::zeros(ds.n(), models.len());
    for (k, m) in models.iter().enumerate() {
        if m.weights.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: m.weights.len(),
            });
        }
        raw.set_column(k, &(x * &m.weights));
    }
    let names: Vec<String> = models.iter().map(|m| m.target_name.clone()).collect();
    let std = Standardizer::fit(&raw, standardization, &names)?;
    IndexEnsemble::new(names, std.apply(&raw), standardization, ds.row_ids().to_vec())
}

/// OLS fit to the composite target `sum_k alpha_k y_k`.
pub fn fit_index_variable(ds: &Dataset, alpha: &DVector<f64>, targets: &[&str]) -> Result<LinearModel> {
    check_simplex(alpha, targets.len())?;
    let mut y = DVector::zeros(ds.n());
    for (k, t) in targets.iter().enumerate() {
        y += ds.target(t)? * alpha[k];
    }
    let name = targets
        .iter()
        .zip(alpha.iter())
        .map(|(t, a)| format!("{a}*{t}"))
        .collect::<Vec<_>>()
        .join("+");
    fit_vector(ds, &y, &name)
}

/// `Delta_{i,i'}(alpha_ref) + sum_k |p_k(i) - p_k(i')|`. Never negative for
/// `alpha_ref` on the simplex, so it cannot certify dominance on its own.
pub fn gap_bound_multi(ens: &IndexEnsemble, i: usize, i_prime: usize, alpha_ref: &DVector<f64>) -> f64 {
    let g = ens.predictions.row(i) - ens.predictions.row(i_prime);
    g.dot(&alpha_ref.transpose()) + g.iter().map(|v| v.abs()).sum::<f64>()
}

/// `sup` of `Delta_{i,i'}` over the simplex: the largest per-target gap.
pub fn gap_supremum_multi(ens: &IndexEnsemble, i: usize, i_prime: usize) -> f64 {
    (ens.predictions.row(i) - ens.predictions.row(i_prime))
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Which gap bound drives multi-target pruning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneRule {
    /// The per-target supremum (certifies componentwise dominance).
    #[default]
    Supremum,
    /// `gap_bound_multi` at the uniform reference.
    Reference,
}

pub fn prune_never_top_multi(ens: &IndexEnsemble, kappa: usize) -> Result<PruneSet> {
    prune_multi(ens, kappa, PruneRule::Supremum)
}

pub fn prune_multi(ens: &IndexEnsemble, kappa: usize, rule: PruneRule) -> Result<PruneSet> {
    let n = ens.n();
    if kappa == 0 || kappa > n {
        return Err(Error::KappaOutOfRange { kappa, n });
    }
    let uniform = DVector::from_element(ens.k(), 1.0 / ens.k() as f64);
    let bound = |i: usize, j: usize| match rule {
        PruneRule::Supremum => gap_supremum_multi(ens, i, j),
        PruneRule::Reference => gap_bound_multi(ens, i, j, &uniform),
    };
    let counts: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dominators = 0;
            let mut dominated = 0;
            for j in (0..n).filter(|&j| j != i) {
                dominators += (bound(i, j) < 0.0) as usize;
                dominated += (bound(j, i) < 0.0) as usize;
            }
            (dominators, dominated)
        })
        .collect();
    let (dominators, dominated): (Vec<usize>, Vec<usize>) = counts.into_iter().unzip();
    let never_top = (0..n).filter(|&i| dominators[i] >= kappa).collect();
    let always_top = (0..n).filter(|&i| dominators[i] < kappa && dominated[i] >= n - kappa).collect();
    Ok(PruneSet {
        never_top,
        always_top,
        dominators,
        dominated,
    })
}

/// One-hot at the target with the largest prediction for row `i`; ties go
/// to the lowest target index.
pub fn max_prediction_alpha(ens: &IndexEnsemble, i: usize) -> DVector<f64> {
    let row = ens.predictions.row(i);
    let mut best = 0;
    for k in 1..ens.k() {
        if row[k] > row[best] {
            best = k;
        }
    }
    one_hot(ens.k(), best)
}

fn min_prediction_alpha(ens: &IndexEnsemble, i: usize) -> DVector<f64> {
    let row = ens.predictions.row(i);
    let mut best = 0;
    for k in 1..ens.k() {
        if row[k] < row[best] {
            best = k;
        }
    }
    one_hot(ens.k(), best)
}

/// Multi-target flip search for one ensemble and one `kappa`.
#[derive(Clone, Debug)]
pub struct MultiTarget {
    ens: IndexEnsemble,
    kappa: usize,
    reference: RankVector,
    scale: f64,
    config: SearchConfig,
}

impl MultiTarget {
    pub fn new(ens: IndexEnsemble, kappa: usize) -> Result<Self> {
        let reference = ens.ranks(&ens.alpha, kappa)?;
        let scale = ens.predictions.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        Ok(MultiTarget {
            ens,
            kappa,
            reference,
            scale,
            config: SearchConfig::default(),
        })
    }

    pub fn with_config(mut self, config: SearchConfig) -> Self {
        self.config = config;
        self
    }

    pub fn ensemble(&self) -> &IndexEnsemble {
        &self.ens
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn n(&self) -> usize {
        self.ens.n()
    }

    fn rank_at(&self, alpha: &DVector<f64>, i: usize) -> usize {
        rank_of(self.ens.combined_with(alpha).as_slice(), i)
    }

    /// Big-M: spread of all standardized predictions.
    pub fn big_m(&self) -> f64 {
        let p = &self.ens.predictions;
        p.max() - p.min()
    }

    /// Supremum of `sum_k alpha_k g_k` over the soft simplex.
    fn soft_sup(g: f64) -> f64 {
        if g >= 0.0 {
            g
        } else {
            SIMPLEX_MIN_SUM * g
        }
    }

    pub(crate) fn scores(&self) -> DMatrix<f64> {
        &self.ens.predictions / self.scale
    }

    pub(crate) fn seeds(&self) -> Vec<DVector<f64>> {
        let k = self.ens.k();
        let mut s: Vec<DVector<f64>> = (0..k).map(|j| one_hot(k, j)).collect();
        s.push(DVector::from_element(k, 1.0 / k as f64));
        s.push(self.ens.alpha.clone());
        s
    }

    pub(crate) fn base_instance(&self, family: Family, direction: Direction, objective: Objective) -> MipInstance {
        let owners = objective.owners();
        let n = self.n();
        let mut bounds = Vec::with_capacity(owners.len() * n.saturating_sub(1));
        for &i in &owners {
            for j in (0..n).filter(|&j| j != i) {
                let up = gap_supremum_multi(&self.ens, i, j) / self.scale;
                let down = gap_supremum_multi(&self.ens, j, i) / self.scale;
                bounds.push(PairBound {
                    owner_over_other: Self::soft_sup(up),
                    other_over_owner: Self::soft_sup(down),
                });
            }
        }
        let inst = MipInstance {
            family,
            direction,
            scores: self.scores(),
            region: Region::soft_simplex(),
            objective,
            big_m: vec![self.big_m() / self.scale; owners.len()],
            margin: self.config.margin,
            sum_weight: SIMPLEX_SUM_WEIGHT,
            gap_bounds: Some(bounds),
            fixed: Vec::new(),
        };
        root_presolve(&inst)
    }

    pub fn instance(&self, i: usize, direction: Direction) -> MipInstance {
        self.base_instance(Family::FlipMulti, direction, Objective::Rank { row: i })
    }

    pub(crate) fn run(&self, inst: &MipInstance, target: Option<usize>) -> MipSolution {
        let opts = SolveOptions {
            budget: self.config.budget,
            target,
            seeds: self.seeds(),
        };
        solver::solve(inst, &opts)
    }

    pub fn flip_search(&self, i: usize) -> FlipReport {
        let n = self.n();
        let kappa = self.kappa;
        let k = self.ens.k();
        let r0 = self.reference.ranks[i];
        let mut report = FlipReport {
            row: i,
            row_id: self.ens.row_ids[i].clone(),
            baseline_rank: r0,
            min_rank: r0,
            max_rank: r0,
            min_rank_bound: 1,
            max_rank_bound: n,
            exact: false,
            flippable: None,
            method: Method::Undetermined,
            witness: None,
            witness_alpha: Vec::new(),
            nodes: 0,
        };
        let (dominators, dominated) = self.prune_row(i);
        report.min_rank_bound = dominators + 1;
        report.max_rank_bound = n - dominated;
        let mut alpha_min = self.ens.alpha.clone();
        let mut alpha_max = self.ens.alpha.clone();
        let mut candidates: Vec<DVector<f64>> = (0..k).map(|j| one_hot(k, j)).collect();
        candidates.push(max_prediction_alpha(&self.ens, i));
        candidates.push(min_prediction_alpha(&self.ens, i));
        for a in candidates {
            let r = self.rank_at(&a, i);
            if r < report.min_rank {
                report.min_rank = r;
                alpha_min = a.clone();
            }
            if r > report.max_rank {
                report.max_rank = r;
                alpha_max = a;
            }
        }
        let pruned = dominators >= kappa || dominated >= n - kappa;
        let closed = report.min_rank <= kappa && report.max_rank > kappa;
        let mut absorb = |report: &mut FlipReport, sol: &MipSolution, dir: Direction| {
            report.nodes += sol.node_count;
            if sol.status == SolveStatus::Infeasible {
                return;
            }
            let has_point = !sol.indicators.is_empty();
            match dir {
                Direction::Min => {
                    if has_point {
                        let r = self.rank_at(&sol.continuous, i);
                        if r < report.min_rank {
                            report.min_rank = r;
                            alpha_min = sol.continuous.clone();
                        }
                    }
                    report.min_rank_bound = report.min_rank_bound.max(sol.bound + 1).min(report.min_rank);
                }
                Direction::Max => {
                    if has_point {
                        let r = self.rank_at(&sol.continuous, i);
                        if r > report.max_rank {
                            report.max_rank = r;
                            alpha_max = sol.continuous.clone();
                        }
                    }
                    report.max_rank_bound = report.max_rank_bound.min(sol.bound + 1).max(report.max_rank);
                }
            }
        };
        if self.config.mode == SearchMode::Exact {
            let lo = self.run(&self.instance(i, Direction::Min), None);
            absorb(&mut report, &lo, Direction::Min);
            let hi = self.run(&self.instance(i, Direction::Max), None);
            absorb(&mut report, &hi, Direction::Max);
            report.method = if pruned { Method::PrunedUnflippable } else { Method::MipCertified };
        } else if pruned {
            report.method = Method::PrunedUnflippable;
        } else if closed {
            report.method = Method::ClosedFormFlip;
        } else if report.min_rank <= kappa {
            let sol = self.run(&self.instance(i, Direction::Max), Some(kappa));
            absorb(&mut report, &sol, Direction::Max);
            report.method = Method::MipCertified;
        } else {
            let sol = self.run(&self.instance(i, Direction::Min), Some(kappa - 1));
            absorb(&mut report, &sol, Direction::Min);
            report.method = Method::MipCertified;
        }
        report.exact = report.min_rank == report.min_rank_bound && report.max_rank == report.max_rank_bound;
        let can_in = report.min_rank <= kappa;
        let can_out = report.max_rank > kappa;
        report.flippable = if can_in && can_out {
            Some(true)
        } else if report.min_rank_bound > kappa || report.max_rank_bound <= kappa {
            Some(false)
        } else {
            None
        };
        if report.flippable.is_none() {
            report.method = Method::Undetermined;
        }
        if report.flippable == Some(true) {
            report.witness_alpha = vec![alpha_min, alpha_max];
        }
        report
    }

    fn prune_row(&self, i: usize) -> (usize, usize) {
        let mut dominators = 0;
        let mut dominated = 0;
        for j in (0..self.n()).filter(|&j| j != i) {
            dominators += (gap_supremum_multi(&self.ens, i, j) < 0.0) as usize;
            dominated += (gap_supremum_multi(&self.ens, j, i) < 0.0) as usize;
        }
        (dominators, dominated)
    }

    /// Both witnesses lie on the simplex and put the row on both sides.
    pub fn verify_witness(&self, report: &FlipReport) -> bool {
        if !report.is_flippable() {
            return report.witness_alpha.is_empty();
        }
        let [a_in, a_out] = &report.witness_alpha[..] else {
            return false;
        };
        check_simplex(a_in, self.ens.k()).is_ok()
            && check_simplex(a_out, self.ens.k()).is_ok()
            && self.rank_at(a_in, report.row) <= self.kappa
            && self.rank_at(a_out, report.row) > self.kappa
    }

    pub fn flip_search_rows(&self, rows: &[usize]) -> Vec<FlipReport> {
        rows.par_iter().map(|&i| self.flip_search(i)).collect()
    }

    pub fn flip_search_all(&self) -> Vec<FlipReport> {
        let rows: Vec<usize> = (0..self.n()).collect();
        self.flip_search_rows(&rows)
    }
}

pub fn flip_search_multi(ens: &IndexEnsemble, kappa: usize, i: usize) -> Result<FlipReport> {
    if i >= ens.n() {
        return Err(Error::Config(format!("row {i} out of range")));
    }
    Ok(MultiTarget::new(ens.clone(), kappa)?.flip_search(i))
}

/// Fraction of the sample whose top-`kappa` status depends on `alpha`.
pub fn ambiguity_multi(reports: &[FlipReport], sample: &[usize]) -> Result<Ambiguity> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let by_row = crate::rashomon::index_reports(reports);
    let mut flippable = 0;
    let mut undetermined = 0;
    for &i in sample {
        let r = by_row
            .get(&i)
            .ok_or_else(|| Error::IncompleteReports(format!("no report for row {i}")))?;
        match r.flippable {
            Some(true) => flippable += 1,
            Some(false) => {}
            None => undetermined += 1,
        }
    }
    Ok(Ambiguity {
        value: flippable as f64 / sample.len() as f64,
        flippable,
        denominator: sample.len(),
        undetermined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(rows: &[&[f64]]) -> IndexEnsemble {
        let k = rows[0].len();
        let p = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        IndexEnsemble::new(
            (0..k).map(|j| format!("t{j}")).collect(),
            p,
            Standardization::None,
            (0..rows.len()).map(|i| i.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn opposite_predictions_cancel_and_tie_by_index() {
        let e = ens(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        assert_eq!(e.combined(), DVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(e.ranks(&e.alpha, 1).unwrap().ranks, vec![1, 2]);
    }

    #[test]
    fn argmax_alpha_and_ties() {
        let e = ens(&[&[0.2, 0.9, 0.1], &[0.5, 0.5, 0.1]]);
        assert_eq!(max_prediction_alpha(&e, 0), one_hot(3, 1));
        assert_eq!(max_prediction_alpha(&e, 1), one_hot(3, 0));
        let single = ens(&[&[0.3], &[0.1]]);
        assert_eq!(max_prediction_alpha(&single, 1), one_hot(1, 0));
    }

    #[test]
    fn zscore_is_centered_and_unit_sd() {
        let raw = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 30.0, 3.0, 20.0, 6.0, 0.0]);
        let s = Standardizer::fit(&raw, Standardization::Zscore, &["a".into(), "b".into()]).unwrap();
        let z = s.apply(&raw);
        for col in z.column_iter() {
            assert!(col.mean().abs() < 1e-12);
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
            assert!((sd - 1.0).abs() < 1e-12);
        }
        let flat = DMatrix::from_row_slice(3, 1, &[2.0, 2.0, 2.0]);
        assert!(matches!(
            Standardizer::fit(&flat, Standardization::Zscore, &["c".into()]),
            Err(Error::ZeroVariance(name)) if name == "c"
        ));
    }

    #[test]
    fn percentile_uses_mid_ranks() {
        let raw = DMatrix::from_row_slice(4, 1, &[3.0, 1.0, 2.0, 2.0]);
        let s = Standardizer::fit(&raw, Standardization::Percentile, &["a".into()]).unwrap();
        let p = s.apply(&raw);
        assert_eq!(p.as_slice(), &[0.875, 0.125, 0.5, 0.5]);
    }

    #[test]
    fn reference_bound_never_certifies() {
        let e = ens(&[&[5.0, 5.0], &[-5.0, -5.0], &[0.0, 1.0]]);
        let u = DVector::from_vec(vec![0.5, 0.5]);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(gap_bound_multi(&e, i, j, &u) >= 0.0);
                }
            }
        }
        assert!(prune_multi(&e, 1, PruneRule::Reference).unwrap().never_top.is_empty());
        assert_eq!(prune_never_top_multi(&e, 1).unwrap().never_top, vec![1, 2]);
    }

    #[test]
    fn kappa_n_prunes_nothing_out() {
        let e = ens(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]);
        assert!(prune_never_top_multi(&e, 3).unwrap().never_top.is_empty());
    }

    #[test]
    fn identical_targets_are_stable() {
        let e = ens(&[&[1.0, 1.0], &[3.0, 3.0], &[2.0, 2.0], &[0.0, 0.0]]);
        let m = MultiTarget::new(e, 2).unwrap();
        for r in m.flip_search_all() {
            assert_eq!(r.min_rank, r.max_rank);
            assert_eq!(r.flippable, Some(false));
        }
    }
}
