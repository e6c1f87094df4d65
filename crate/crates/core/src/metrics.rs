//! Ambiguity curves and stable-point sets built from flip reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{orthonormalize, Dataset};
use crate::error::{Error, Result};
use crate::linear_fit::{fit_ols, EpsilonMode, RashomonBall};
use crate::rashomon::{ambiguity_single, Ambiguity, AmbiguityMode, FlipReport, SearchConfig, SingleTarget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rashomon,
    Index,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rashomon" => Ok(Family::Rashomon),
            "index" => Ok(Family::Index),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Rashomon => "rashomon",
            Family::Index => "index",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableSet {
    pub kappa: usize,
    pub family: Family,
    /// Inside the top `kappa` under every model of the family.
    pub stable_selected: Vec<usize>,
    /// Outside the top `kappa` under every model of the family.
    pub stable_unselected: Vec<usize>,
    pub flippable: Vec<usize>,
    /// Rows the solver could not settle; never counted as stable.
    pub undetermined: Vec<usize>,
    pub stable_fraction: f64,
}

/// Rows whose proven rank range sits entirely on one side of `kappa`.
pub fn stable_points(reports: &[FlipReport], kappa: usize, family: Family) -> Result<StableSet> {
    let n = reports.len();
    if kappa == 0 || kappa > n {
        return Err(Error::KappaOutOfRange { kappa, n });
    }
    let mut seen = vec![false; n];
    for r in reports {
        if r.row >= n || std::mem::replace(&mut seen[r.row], true) {
            return Err(Error::IncompleteReports(format!("unexpected report for row {}", r.row)));
        }
    }
    let mut set = StableSet {
        kappa,
        family,
        stable_selected: Vec::new(),
        stable_unselected: Vec::new(),
        flippable: Vec::new(),
        undetermined: Vec::new(),
        stable_fraction: 0.0,
    };
    let mut sorted: Vec<&FlipReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.row);
    for r in sorted {
        if r.max_rank_bound <= kappa {
            set.stable_selected.push(r.row);
        } else if r.min_rank_bound > kappa {
            set.stable_unselected.push(r.row);
        } else if r.min_rank <= kappa && r.max_rank > kappa {
            set.flippable.push(r.row);
        } else {
            set.undetermined.push(r.row);
        }
    }
    set.stable_fraction = set.stable_selected.len() as f64 / kappa as f64;
    Ok(set)
}

pub fn write_stable_csv<W: Write>(sets: &[StableSet], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["kappa", "stable_fraction", "family"])?;
    for s in sets {
        out.write_record([s.kappa.to_string(), format!("{:.6}", s.stable_fraction), s.family.to_string()])?;
    }
    out.flush().map_err(|e| Error::Io {
        path: "<stable>".into(),
        source: e,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Tolerance as given.
    pub epsilon: f64,
    /// Absolute RSS slack.
    pub epsilon_abs: f64,
    pub all: Ambiguity,
    pub top: Ambiguity,
    /// Rows settled by a witness carried over from a smaller tolerance.
    pub reused: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub epsilon_mode: EpsilonMode,
    pub search: SearchConfig,
    /// Carry flip witnesses forward to larger tolerances.
    pub reuse: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            epsilon_mode: EpsilonMode::Relative,
            search: SearchConfig::default(),
            reuse: true,
        }
    }
}

/// Single-target ambiguity at each tolerance in ascending order. Every row
/// of `ds` is in the sample.
pub fn ambiguity_curve(
    ds: &Dataset,
    target: &str,
    kappa: usize,
    epsilons: &[f64],
    opts: &CurveOptions,
) -> Result<(Vec<CurvePoint>, Vec<Vec<FlipReport>>)> {
    if epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::Config("tolerances must be finite and non-negative".into()));
    }
    if epsilons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("tolerances must be strictly ascending".into()));
    }
    let (o, _) = orthonormalize(ds)?;
    let center = fit_ols(&o, target)?;
    let sample: Vec<usize> = (0..o.n()).collect();
    let mut carried: Vec<Option<FlipReport>> = vec![None; o.n()];
    let mut points = Vec::new();
    let mut all_reports = Vec::new();
    for &eps in epsilons {
        let ball = RashomonBall::new(center.clone(), eps, opts.epsilon_mode)?;
        let problem = SingleTarget::from_dataset(&o, ball.clone(), kappa)?.with_config(opts.search);
        let todo: Vec<usize> = sample
            .iter()
            .copied()
            .filter(|&i| !(opts.reuse && carried[i].is_some()))
            .collect();
        let fresh = problem.flip_search_rows(&todo);
        let mut reports: Vec<FlipReport> = Vec::with_capacity(o.n());
        let mut reused = 0;
        let mut fresh_iter = fresh.into_iter().peekable();
        for (i, slot) in carried.iter_mut().enumerate() {
            if fresh_iter.peek().is_some_and(|r| r.row == i) {
                let r = fresh_iter.next().expect("peeked");
                if r.is_flippable() {
                    *slot = Some(r.clone());
                }
                reports.push(r);
            } else {
                let mut r = slot.clone().expect("carried report");
                // Ranks stay attainable in the larger ball; only the bounds lapse.
                r.min_rank_bound = r.min_rank_bound.min(1);
                r.max_rank_bound = o.n();
                r.exact = false;
                r.nodes = 0;
                reused += 1;
                reports.push(r);
            }
        }
        points.push(CurvePoint {
            epsilon: eps,
            epsilon_abs: ball.epsilon,
            all: ambiguity_single(&reports, kappa, &sample, AmbiguityMode::All)?,
            top: ambiguity_single(&reports, kappa, &sample, AmbiguityMode::Top)?,
            reused,
        });
        all_reports.push(reports);
    }
    Ok((points, all_reports))
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], target: &str, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epsilon", "ambiguity_all", "ambiguity_top", "target"])?;
    for p in points {
        out.write_record([
            format!("{}", p.epsilon),
            format!("{:.6}", p.all.value),
            format!("{:.6}", p.top.value),
            target.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::Io {
        path: "<curve>".into(),
        source: e,
    })
}
