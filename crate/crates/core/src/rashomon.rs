//! Single-target multiplicity over the Rashomon ball.
//!
//! Each row is resolved in three stages: gap-bound pruning, the closed-form
//! extreme models, and finally the exact ordering MIP.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Basis, Dataset};
use crate::error::{Error, Result};
use crate::linear_fit::{ball_membership, RashomonBall};
use crate::ranking::{rank_descending, rank_of, RankVector};
use crate::solver::{
    self, root_presolve, Budget, Direction, Family, MipInstance, MipSolution, Objective, PairBound,
    Region, SolveOptions, SolveStatus, DEFAULT_MARGIN,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PrunedUnflippable,
    ClosedFormFlip,
    MipCertified,
    OracleCertified,
    /// The solver ran out of budget before settling the flip status.
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Settle only the flip status, stopping each search at the threshold.
    #[default]
    Status,
    /// Solve both rank extremes to optimality.
    Exact,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "status" => Ok(SearchMode::Status),
            "exact" => Ok(SearchMode::Exact),
            other => Err(Error::Config(format!("unknown search mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub budget: Budget,
    /// Strict-order margin on normalized predictions.
    pub margin: f64,
    pub mode: SearchMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: Budget::default(),
            margin: DEFAULT_MARGIN,
            mode: SearchMode::Status,
        }
    }
}

/// Per-row outcome of a flip search.
///
/// `min_rank` and `max_rank` are attained by some model of the family;
/// `min_rank_bound` and `max_rank_bound` are proven limits. They coincide
/// when `exact` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub row: usize,
    pub row_id: String,
    pub baseline_rank: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    pub min_rank_bound: usize,
    pub max_rank_bound: usize,
    pub exact: bool,
    /// `None` when the budget ran out first.
    pub flippable: Option<bool>,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "crate::vecs::opt")]
    pub witness: Option<DVector<f64>>,
    /// Normalized combining weights putting the row inside and outside the
    /// top `kappa`, in that order (index models only).
    #[serde(skip_serializing_if = "Vec::is_empty", default, with = "crate::vecs::many")]
    pub witness_alpha: Vec<DVector<f64>>,
    pub nodes: u64,
}

impl FlipReport {
    pub fn is_certified(&self) -> bool {
        self.flippable.is_some()
    }

    pub fn is_flippable(&self) -> bool {
        self.flippable == Some(true)
    }
}

/// Writes one JSON object per report.
pub fn write_reports_jsonl<W: Write>(reports: &[FlipReport], mut w: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::Io {
            path: "<stream>".into(),
            source: e,
        })?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub i: usize,
    pub i_prime: usize,
    pub value: f64,
}

/// Rows whose top-`kappa` status cannot change anywhere in the ball.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneSet {
    /// Outside the top for every model.
    pub never_top: Vec<usize>,
    /// Inside the top for every model.
    pub always_top: Vec<usize>,
    /// Per row: number of rows certified strictly above it.
    pub dominators: Vec<usize>,
    /// Per row: number of rows certified strictly below it.
    pub dominated: Vec<usize>,
}

impl PruneSet {
    pub fn certified(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.never_top.iter().chain(&self.always_top).copied().collect();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, i: usize) -> bool {
        self.never_top.binary_search(&i).is_ok() || self.always_top.binary_search(&i).is_ok()
    }
}

/// The single-target problem for one ball and one `kappa`.
#[derive(Clone, Debug)]
pub struct SingleTarget {
    design: DMatrix<f64>,
    ball: RashomonBall,
    kappa: usize,
    baseline: DVector<f64>,
    ranks: RankVector,
    row_ids: Vec<String>,
    config: SearchConfig,
}

impl SingleTarget {
    pub fn new(design: DMatrix<f64>, ball: RashomonBall, kappa: usize, row_ids: Vec<String>) -> Result<Self> {
        if design.ncols() != ball.dim() {
            return Err(Error::DimensionMismatch {
                expected: ball.dim(),
                actual: design.ncols(),
            });
        }
        if row_ids.len() != design.nrows() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                actual: row_ids.len(),
            });
        }
        let baseline = &design * &ball.center.weights;
        let ranks = rank_descending(baseline.as_slice(), kappa)?;
        Ok(SingleTarget {
            design,
            ball,
            kappa,
            baseline,
            ranks,
            row_ids,
            config: SearchConfig::default(),
        })
    }

    pub fn from_dataset(ds: &Dataset, ball: RashomonBall, kappa: usize) -> Result<Self> {
        if ds.basis() != Basis::Orthonormal {
            return Err(Error::NotOrthonormal);
        }
        Self::new(ds.features().clone(), ball, kappa, ds.row_ids().to_vec())
    }

    pub fn with_config(mut self, config: SearchConfig) -> Self {
        self.config = config;
        self
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn ball(&self) -> &RashomonBall {
        &self.ball
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn baseline_ranks(&self) -> &RankVector {
        &self.ranks
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    fn row_gap(&self, i: usize, j: usize) -> f64 {
        (self.design.row(i) - self.design.row(j)).norm()
    }

    /// `Delta_{i,i'}(w0) + sqrt(eps) * ||x_i - x_i'||`.
    pub fn gap_bound(&self, i: usize, i_prime: usize) -> GapBound {
        GapBound {
            i,
            i_prime,
            value: self.baseline[i] - self.baseline[i_prime] + self.ball.radius() * self.row_gap(i, i_prime),
        }
    }

    pub fn prune(&self) -> PruneSet {
        let n = self.n();
        let r = self.ball.radius();
        let counts: Vec<(usize, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut dominators = 0;
                let mut dominated = 0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let reach = r * self.row_gap(i, j);
                    let gap = self.baseline[i] - self.baseline[j];
                    if gap + reach < 0.0 {
                        dominators += 1;
                    }
                    if -gap + reach < 0.0 {
                        dominated += 1;
                    }
                }
                (dominators, dominated)
            })
            .collect();
        let (dominators, dominated): (Vec<usize>, Vec<usize>) = counts.into_iter().unzip();
        let mut never_top = Vec::new();
        let mut always_top = Vec::new();
        for i in 0..n {
            if self.ball.epsilon == 0.0 {
                // a single model: nothing moves
                if self.ranks.is_top(i) {
                    always_top.push(i);
                } else {
                    never_top.push(i);
                }
            } else if dominators[i] >= self.kappa {
                never_top.push(i);
            } else if dominated[i] >= n - self.kappa {
                always_top.push(i);
            }
        }
        PruneSet {
            never_top,
            always_top,
            dominators,
            dominated,
        }
    }

    pub fn max_prediction_model(&self, i: usize) -> DVector<f64> {
        max_prediction_model(&self.ball, &self.design.row(i).transpose())
    }

    /// Mirror of the maximizer: the ball member minimizing row `i`'s score.
    pub fn min_prediction_model(&self, i: usize) -> DVector<f64> {
        let x = self.design.row(i).transpose();
        let norm = x.norm();
        if norm == 0.0 || self.ball.epsilon == 0.0 {
            return self.ball.center.weights.clone();
        }
        &self.ball.center.weights - x * (self.ball.radius() / norm)
    }

    /// Per-row big-M from the triangle inequality `||w|| <= ||w0|| + sqrt(eps)`.
    pub fn big_m(&self, i: usize) -> f64 {
        (self.ball.center.weights.norm() + self.ball.radius()) * self.max_row_gap(i)
    }

    /// `sqrt(||w0||^2 + eps) * max ||x_j - x_i||`, which is not a valid bound
    /// in general: `||w0 + u||` can reach `||w0|| + ||u||`.
    pub fn big_m_literal(&self, i: usize) -> f64 {
        (self.ball.center.weights.norm_squared() + self.ball.epsilon).sqrt() * self.max_row_gap(i)
    }

    fn max_row_gap(&self, i: usize) -> f64 {
        (0..self.n()).map(|j| self.row_gap(i, j)).fold(0.0, f64::max)
    }

    fn scale(&self) -> f64 {
        let s = self.ball.center.weights.norm() + self.ball.radius();
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    }

    /// Rank MIP for row `i`, normalized so predictions are O(1).
    pub fn instance(&self, i: usize, direction: Direction) -> MipInstance {
        let n = self.n();
        let scale = self.scale();
        let r = self.ball.radius() / scale;
        let bounds = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let gap = (self.baseline[i] - self.baseline[j]) / scale;
                let reach = r * self.row_gap(i, j);
                PairBound {
                    owner_over_other: gap + reach,
                    other_over_owner: -gap + reach,
                }
            })
            .collect();
        let inst = MipInstance {
            family: Family::FlipSingle,
            direction,
            scores: self.design.clone(),
            region: Region::Ball {
                center: &self.ball.center.weights / scale,
                radius_sq: self.ball.epsilon / (scale * scale),
            },
            objective: Objective::Rank { row: i },
            big_m: vec![self.big_m(i) / scale],
            margin: self.config.margin,
            sum_weight: 0.0,
            gap_bounds: Some(bounds),
            fixed: Vec::new(),
        };
        root_presolve(&inst)
    }

    fn rank_at(&self, w: &DVector<f64>, i: usize) -> usize {
        let s = &self.design * w;
        rank_of(s.as_slice(), i)
    }

    fn solve(&self, i: usize, direction: Direction, target: Option<usize>) -> (MipSolution, f64) {
        let scale = self.scale();
        let inst = self.instance(i, direction);
        let seeds = [
            self.ball.center.weights.clone(),
            self.max_prediction_model(i),
            self.min_prediction_model(i),
        ]
        .into_iter()
        .map(|w| w / scale)
        .collect();
        let opts = SolveOptions {
            budget: self.config.budget,
            target,
            seeds,
        };
        (solver::solve(&inst, &opts), scale)
    }

    pub fn flip_search(&self, i: usize) -> FlipReport {
        let n = self.n();
        let kappa = self.kappa;
        let r0 = self.ranks.ranks[i];
        let top = self.ranks.is_top(i);
        let mut report = FlipReport {
            row: i,
            row_id: self.row_ids[i].clone(),
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
        if self.ball.epsilon == 0.0 {
            report.min_rank_bound = r0;
            report.max_rank_bound = r0;
            report.exact = true;
            report.flippable = Some(false);
            report.method = Method::PrunedUnflippable;
            return report;
        }
        let prune = self.prune_row(i);
        report.min_rank_bound = prune.0 + 1;
        report.max_rank_bound = n - prune.1;
        let w_hi = self.max_prediction_model(i);
        let w_lo = self.min_prediction_model(i);
        let r_hi = self.rank_at(&w_hi, i);
        let r_lo = self.rank_at(&w_lo, i);
        report.min_rank = report.min_rank.min(r_hi);
        report.max_rank = report.max_rank.max(r_lo);

        let exact = self.config.mode == SearchMode::Exact;
        let pruned = if top { prune.1 >= n - kappa } else { prune.0 >= kappa };
        if exact {
            let (lo, s1) = self.solve(i, Direction::Min, None);
            let (hi, s2) = self.solve(i, Direction::Max, None);
            report.nodes = lo.node_count + hi.node_count;
            self.absorb(&mut report, &lo, s1, Direction::Min);
            self.absorb(&mut report, &hi, s2, Direction::Max);
            report.exact = report.min_rank == report.min_rank_bound && report.max_rank == report.max_rank_bound;
            report.method = if pruned { Method::PrunedUnflippable } else { Method::MipCertified };
        } else if pruned {
            report.method = Method::PrunedUnflippable;
        } else if (!top && r_hi <= kappa) || (top && r_lo > kappa) {
            report.method = Method::ClosedFormFlip;
        } else {
            let (dir, target) = if top {
                (Direction::Max, kappa)
            } else {
                (Direction::Min, kappa - 1)
            };
            let (sol, scale) = self.solve(i, dir, Some(target));
            report.nodes = sol.node_count;
            self.absorb(&mut report, &sol, scale, dir);
            report.method = match sol.status {
                SolveStatus::BudgetExhausted => Method::Undetermined,
                _ => Method::MipCertified,
            };
            report.exact = report.min_rank == report.min_rank_bound && report.max_rank == report.max_rank_bound;
        }
        self.settle(&mut report, &w_hi, &w_lo);
        report
    }

    fn prune_row(&self, i: usize) -> (usize, usize) {
        let r = self.ball.radius();
        let mut dominators = 0;
        let mut dominated = 0;
        for j in (0..self.n()).filter(|&j| j != i) {
            let reach = r * self.row_gap(i, j);
            let gap = self.baseline[i] - self.baseline[j];
            dominators += (gap + reach < 0.0) as usize;
            dominated += (-gap + reach < 0.0) as usize;
        }
        (dominators, dominated)
    }

    fn absorb(&self, report: &mut FlipReport, sol: &MipSolution, scale: f64, dir: Direction) {
        if sol.status == SolveStatus::Infeasible {
            return;
        }
        let has_point = !sol.indicators.is_empty();
        match dir {
            Direction::Min => {
                if has_point {
                    let w = &sol.continuous * scale;
                    let r = self.rank_at(&w, report.row);
                    if r < report.min_rank {
                        report.min_rank = r;
                        if !self.ranks.is_top(report.row) && r <= self.kappa {
                            report.witness = Some(w);
                        }
                    }
                }
                report.min_rank_bound = report.min_rank_bound.max(sol.bound + 1).min(report.min_rank);
            }
            Direction::Max => {
                if has_point {
                    let w = &sol.continuous * scale;
                    let r = self.rank_at(&w, report.row);
                    if r > report.max_rank {
                        report.max_rank = r;
                        if self.ranks.is_top(report.row) && r > self.kappa {
                            report.witness = Some(w);
                        }
                    }
                }
                report.max_rank_bound = report.max_rank_bound.min(sol.bound + 1).max(report.max_rank);
            }
        }
    }

    /// Decides the flip status from attained ranks and proven bounds.
    fn settle(&self, report: &mut FlipReport, w_hi: &DVector<f64>, w_lo: &DVector<f64>) {
        let kappa = self.kappa;
        let top = self.ranks.is_top(report.row);
        let attained = if top { report.max_rank > kappa } else { report.min_rank <= kappa };
        let excluded = if top {
            report.max_rank_bound <= kappa
        } else {
            report.min_rank_bound > kappa
        };
        report.flippable = if attained {
            Some(true)
        } else if excluded {
            Some(false)
        } else {
            None
        };
        if report.flippable.is_none() {
            report.method = Method::Undetermined;
        }
        if attained && report.witness.is_none() {
            let w = if top { w_lo } else { w_hi };
            if self.flips_at(report.row, w) {
                report.witness = Some(w.clone());
            }
        }
    }

    fn flips_at(&self, i: usize, w: &DVector<f64>) -> bool {
        (self.rank_at(w, i) <= self.kappa) != self.ranks.is_top(i)
    }

    /// Ball membership plus the flipped top status, recomputed from scratch.
    pub fn verify_witness(&self, report: &FlipReport) -> bool {
        match &report.witness {
            None => !report.is_flippable(),
            Some(w) => ball_membership(&self.ball, w) && self.flips_at(report.row, w),
        }
    }

    pub fn flip_search_rows(&self, rows: &[usize]) -> Vec<FlipReport> {
        rows.par_iter().map(|&i| self.flip_search(i)).collect()
    }

    pub fn flip_search_all(&self) -> Vec<FlipReport> {
        let rows: Vec<usize> = (0..self.n()).collect();
        self.flip_search_rows(&rows)
    }
}

pub fn gap_bound(ds: &Dataset, ball: &RashomonBall, i: usize, i_prime: usize) -> Result<GapBound> {
    let n = ds.n();
    if i >= n || i_prime >= n || i == i_prime {
        return Err(Error::Config(format!("invalid row pair ({i}, {i_prime})")));
    }
    let x = ds.features();
    let w0 = &ball.center.weights;
    let gap = (x.row(i) - x.row(i_prime)).dot(&w0.transpose());
    Ok(GapBound {
        i,
        i_prime,
        value: gap + ball.radius() * (x.row(i) - x.row(i_prime)).norm(),
    })
}

pub fn prune_unflippable(ds: &Dataset, ball: &RashomonBall, kappa: usize) -> Result<PruneSet> {
    Ok(SingleTarget::from_dataset(ds, ball.clone(), kappa)?.prune())
}

/// `w0 + sqrt(eps) * x / ||x||`, the ball member with the largest score on `x`.
pub fn max_prediction_model(ball: &RashomonBall, x: &DVector<f64>) -> DVector<f64> {
    let norm = x.norm();
    if norm == 0.0 || ball.epsilon == 0.0 {
        return ball.center.weights.clone();
    }
    &ball.center.weights + x * (ball.radius() / norm)
}

pub fn flip_search(ds: &Dataset, ball: &RashomonBall, kappa: usize, i: usize) -> Result<FlipReport> {
    if i >= ds.n() {
        return Err(Error::Config(format!("row {i} out of range")));
    }
    Ok(SingleTarget::from_dataset(ds, ball.clone(), kappa)?.flip_search(i))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityMode {
    /// Fraction of the sample that is flippable.
    All,
    /// Baseline-top rows of the sample that can leave the top, over `kappa`.
    Top,
}

impl std::str::FromStr for AmbiguityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(AmbiguityMode::All),
            "top" => Ok(AmbiguityMode::Top),
            other => Err(Error::Config(format!("unknown ambiguity mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub value: f64,
    pub flippable: usize,
    pub denominator: usize,
    /// Sampled rows whose status the solver could not settle.
    pub undetermined: usize,
}

pub(crate) fn index_reports(reports: &[FlipReport]) -> BTreeMap<usize, &FlipReport> {
    reports.iter().map(|r| (r.row, r)).collect()
}

/// Ambiguity of a sample from its flip reports. Undetermined rows are not
/// counted as flippable.
pub fn ambiguity_single(reports: &[FlipReport], kappa: usize, sample: &[usize], mode: AmbiguityMode) -> Result<Ambiguity> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let by_row = index_reports(reports);
    let mut flippable = 0;
    let mut undetermined = 0;
    for &i in sample {
        let r = by_row
            .get(&i)
            .ok_or_else(|| Error::IncompleteReports(format!("no report for row {i}")))?;
        let counts = match mode {
            AmbiguityMode::All => true,
            AmbiguityMode::Top => r.baseline_rank <= kappa,
        };
        if !counts {
            continue;
        }
        match r.flippable {
            Some(true) => flippable += 1,
            Some(false) => {}
            None => undetermined += 1,
        }
    }
    let denominator = match mode {
        AmbiguityMode::All => sample.len(),
        AmbiguityMode::Top => kappa,
    };
    Ok(Ambiguity {
        value: flippable as f64 / denominator as f64,
        flippable,
        denominator,
        undetermined,
    })
}
