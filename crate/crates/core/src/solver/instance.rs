//! MIP instance and solution types.
//!
//! An instance scores row `j` at a continuous point `v` as `scores.row(j) . v`.
//! `v` is a weight vector in the orthonormal basis (single target) or the
//! combining weights `alpha` (index models). Each ordering indicator
//! `I(i' > i)` is linked to the scores by two big-M rows
//!
//! ```text
//! s_i' - s_i <= M * I(i' > i)
//! s_i - s_i' <= M * (1 - I(i' > i))
//! ```
//!
//! with the complementary indicator `I(i > i') = 1 - I(i' > i)` implied, and
//! orderings are strict by a margin `delta` on the continuous side.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const DEFAULT_MARGIN: f64 = 1e-9;
pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;
pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(60);
pub const SIMPLEX_MIN_SUM: f64 = 0.1;
pub const SIMPLEX_SUM_WEIGHT: f64 = 0.5;
pub const CHECK_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    FlipSingle,
    FlipMulti,
    GroupRate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: usize, b: usize) -> bool {
        match self {
            Direction::Min => a < b,
            Direction::Max => a > b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `||v - center||^2 <= radius_sq`.
    Ball {
        center: DVector<f64>,
        radius_sq: f64,
    },
    /// `0 <= v_k <= 1`, `min_sum <= sum(v) <= max_sum`.
    SoftSimplex { min_sum: f64, max_sum: f64 },
}

impl Region {
    pub fn soft_simplex() -> Self {
        Region::SoftSimplex {
            min_sum: SIMPLEX_MIN_SUM,
            max_sum: 1.0,
        }
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        match self {
            Region::Ball { center, radius_sq } => {
                v.len() == center.len() && (v - center).norm_squared() <= radius_sq + tol
            }
            Region::SoftSimplex { min_sum, max_sum } => {
                let s = v.sum();
                v.iter().all(|&a| a >= -tol && a <= 1.0 + tol)
                    && s >= min_sum - tol
                    && s <= max_sum + tol
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Number of rows ranked above `row`.
    Rank { row: usize },
    /// Number of `members` inside the top `kappa`.
    GroupCount { members: Vec<usize>, kappa: usize },
}

impl Objective {
    /// Rows that own indicator blocks, in formulation order.
    pub fn owners(&self) -> Vec<usize> {
        match self {
            Objective::Rank { row } => vec![*row],
            Objective::GroupCount { members, .. } => members.clone(),
        }
    }
}

/// Supremum of `s_i - s_i'` and of `s_i' - s_i` over the region, one entry
/// per indicator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBound {
    pub owner_over_other: f64,
    pub other_over_owner: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipInstance {
    pub family: Family,
    pub direction: Direction,
    /// n x dim; row `j` scores as `scores.row(j) . v`.
    pub scores: DMatrix<f64>,
    pub region: Region,
    pub objective: Objective,
    /// Big-M per owner row.
    pub big_m: Vec<f64>,
    pub margin: f64,
    /// Weight on `sum(alpha)` in the objective (soft simplex only).
    pub sum_weight: f64,
    /// Optional certified gap bounds, aligned with [`MipInstance::indicators`].
    pub gap_bounds: Option<Vec<PairBound>>,
    /// Indicators fixed by presolve, aligned with [`MipInstance::indicators`].
    pub fixed: Vec<Option<bool>>,
}

/// `I(other > owner)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub owner: usize,
    pub other: usize,
}

impl MipInstance {
    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn dim(&self) -> usize {
        self.scores.ncols()
    }

    pub fn indicators(&self) -> Vec<Indicator> {
        let n = self.n();
        self.objective
            .owners()
            .into_iter()
            .flat_map(|owner| {
                (0..n)
                    .filter(move |&o| o != owner)
                    .map(move |other| Indicator { owner, other })
            })
            .collect()
    }

    pub fn indicator_count(&self) -> usize {
        self.objective.owners().len() * (self.n().saturating_sub(1))
    }

    pub fn predictions(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.scores * v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Value of the MIP objective for an integer count and continuous point.
    pub fn objective_value(&self, count: usize, v: &DVector<f64>) -> f64 {
        let c = count as f64;
        match (&self.region, self.direction) {
            (Region::SoftSimplex { .. }, Direction::Min) => c - self.sum_weight * v.sum(),
            (Region::SoftSimplex { .. }, Direction::Max) => c + self.sum_weight * v.sum(),
            _ => c,
        }
    }

    /// Verifies every constraint of the formulation at `sol`.
    pub fn check(&self, sol: &MipSolution, tol: f64) -> std::result::Result<(), String> {
        let v = &sol.continuous;
        if v.len() != self.dim() {
            return Err(format!("continuous dim {} != {}", v.len(), self.dim()));
        }
        if !self.region.contains(v, tol.max(1e-9)) {
            return Err("continuous point outside region".into());
        }
        let inds = self.indicators();
        if sol.indicators.len() != inds.len() {
            return Err("indicator count mismatch".into());
        }
        let s = self.predictions(v);
        let owners = self.objective.owners();
        let n = self.n();
        for (k, (ind, &val)) in inds.iter().zip(&sol.indicators).enumerate() {
            let m = self.big_m[k / (n - 1)];
            let gap = s[ind.other] - s[ind.owner];
            let i = val as u8 as f64;
            if gap > m * i + tol {
                return Err(format!("upper ordering link violated at indicator {k}: {gap} > {}", m * i));
            }
            if -gap > m * (1.0 - i) + tol {
                return Err(format!("lower ordering link violated at indicator {k}: {} > {}", -gap, m * (1.0 - i)));
            }
            if let Some(Some(f)) = self.fixed.get(k) {
                if *f != val {
                    return Err(format!("presolve fixing violated at indicator {k}"));
                }
            }
        }
        for (a, &owner) in owners.iter().enumerate() {
            // complementarity: the pair of owners must agree when both own blocks
            for (b, &other) in owners.iter().enumerate() {
                if a == b {
                    continue;
                }
                let ia = a * (n - 1) + if other < owner { other } else { other - 1 };
                let ib = b * (n - 1) + if owner < other { owner } else { owner - 1 };
                if sol.indicators[ia] == sol.indicators[ib] {
                    return Err(format!("complementarity violated for rows {owner},{other}"));
                }
            }
        }
        let above: Vec<usize> = (0..owners.len())
            .map(|a| sol.indicators[a * (n - 1)..(a + 1) * (n - 1)].iter().filter(|&&b| b).count())
            .collect();
        match &self.objective {
            Objective::Rank { .. } => {
                if sol.count != above[0] {
                    return Err("count differs from indicator sum".into());
                }
            }
            Objective::GroupCount { kappa, .. } => {
                if sol.top.len() != owners.len() {
                    return Err("top indicator count mismatch".into());
                }
                let kf = *kappa as f64;
                for (a, &t) in sol.top.iter().enumerate() {
                    let t = t as u8 as f64;
                    let sum = above[a] as f64;
                    if kf - sum > kf * t + tol {
                        return Err(format!("top indicator too low for member {}", owners[a]));
                    }
                    if (1.0 + sum) - kf > (n as f64 - kf) * (1.0 - t) + tol {
                        return Err(format!("top indicator too high for member {}", owners[a]));
                    }
                }
                if sol.count != sol.top.iter().filter(|&&t| t).count() {
                    return Err("count differs from top indicator sum".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    BudgetExhausted,
    /// Stopped early because the incumbent reached the requested target.
    Cutoff,
    /// Proved that no point reaches the requested target.
    Unreachable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_nodes: u64,
    #[serde(with = "secs")]
    pub max_time: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_nodes: DEFAULT_NODE_BUDGET,
            max_time: DEFAULT_TIME_BUDGET,
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipSolution {
    pub status: SolveStatus,
    /// Count part of the objective (rows above the target, or group members
    /// in the top `kappa`).
    pub count: usize,
    pub objective_value: f64,
    /// Best proven bound on `count`; equals `count` when optimal.
    pub bound: usize,
    pub indicators: Vec<bool>,
    /// `T_i` per group member (group objective only).
    pub top: Vec<bool>,
    /// Weights, or `alpha` normalized to unit sum.
    pub continuous: DVector<f64>,
    pub node_count: u64,
    pub wall_time_secs: f64,
}

impl MipSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
