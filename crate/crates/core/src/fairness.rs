//! Group selection-rate ranges over index-model weights, and the
//! train / tune / holdout audit workflow.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{orthonormalize, Dataset, Split};
use crate::error::{Error, Result};
use crate::index_model::{one_hot, IndexEnsemble, MultiTarget, Standardization, Standardizer};
use crate::linear_fit::{fit_ols, LinearModel};
use crate::ranking::{rank_descending, KappaSpec};
use crate::rashomon::SearchConfig;
use crate::solver::{Direction, Family, MipInstance, MipSolution, Objective, SolveStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateDirection {
    Min,
    Max,
    Both,
}

impl std::str::FromStr for RateDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(RateDirection::Min),
            "max" => Ok(RateDirection::Max),
            "both" => Ok(RateDirection::Both),
            other => Err(Error::Config(format!("unknown direction `{other}`"))),
        }
    }
}

/// One solved side of the group-count range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupExtreme {
    /// Attained count at `alpha`.
    pub count: usize,
    /// Proven bound; equals `count` when `status` is optimal.
    pub bound: usize,
    pub rate: f64,
    #[serde(with = "crate::vecs")]
    pub alpha: DVector<f64>,
    pub status: SolveStatus,
    pub nodes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRate {
    pub target: String,
    pub count: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRateReport {
    pub group_label: String,
    pub kappa: usize,
    pub group_size: usize,
    pub min: Option<GroupExtreme>,
    pub max: Option<GroupExtreme>,
    /// Counts under each single-target ranking.
    pub one_hot: Vec<TargetRate>,
}

impl GroupRateReport {
    pub fn min_count(&self) -> Option<usize> {
        self.min.as_ref().map(|e| e.count)
    }

    pub fn max_count(&self) -> Option<usize> {
        self.max.as_ref().map(|e| e.count)
    }

    pub fn is_exact(&self) -> bool {
        [&self.min, &self.max]
            .iter()
            .all(|e| e.as_ref().is_none_or(|e| e.status == SolveStatus::Optimal))
    }
}

/// Members of `members` inside the top `kappa` of `scores`.
pub fn group_count(scores: &[f64], members: &[usize], kappa: usize) -> Result<usize> {
    let r = rank_descending(scores, kappa)?;
    Ok(members.iter().filter(|&&i| r.is_top(i)).count())
}

impl MultiTarget {
    fn count_at(&self, alpha: &DVector<f64>, members: &[usize]) -> usize {
        let s = self.ensemble().combined_with(alpha);
        group_count(s.as_slice(), members, self.kappa()).expect("kappa validated")
    }

    pub fn group_instance(&self, members: &[usize], direction: Direction) -> MipInstance {
        self.base_instance(
            Family::GroupRate,
            direction,
            Objective::GroupCount {
                members: members.to_vec(),
                kappa: self.kappa(),
            },
        )
    }

    pub fn group_extreme(&self, members: &[usize], direction: Direction) -> GroupExtreme {
        let kappa = self.kappa();
        let inst = self.group_instance(members, direction);
        let sol: MipSolution = self.run(&inst, None);
        // Seeds come first so a single-target ranking wins ties.
        let mut seeds = self.seeds().into_iter();
        let mut best_alpha = seeds.next().expect("at least one seed");
        let mut best = self.count_at(&best_alpha, members);
        let mut consider = |a: DVector<f64>| {
            let c = self.count_at(&a, members);
            if direction.better(c, best) {
                best = c;
                best_alpha = a;
            }
        };
        for a in seeds {
            consider(a);
        }
        if !sol.indicators.is_empty() {
            consider(sol.continuous.clone());
        }
        let bound = match (sol.status, direction) {
            (SolveStatus::Optimal, _) => best,
            (_, Direction::Max) => sol.bound.max(best),
            (_, Direction::Min) => sol.bound.min(best),
        };
        GroupExtreme {
            count: best,
            bound,
            rate: best as f64 / kappa as f64,
            alpha: best_alpha,
            status: if bound == best { SolveStatus::Optimal } else { sol.status },
            nodes: sol.node_count,
        }
    }
}

/// Exact min and/or max of the group's top-`kappa` count over all weights.
pub fn group_rate_extremes(
    ens: &IndexEnsemble,
    groups: &[String],
    label: &str,
    kappa: usize,
    direction: RateDirection,
) -> Result<GroupRateReport> {
    group_rate_extremes_with(ens, groups, label, kappa, direction, SearchConfig::default())
}

pub fn group_rate_extremes_with(
    ens: &IndexEnsemble,
    groups: &[String],
    label: &str,
    kappa: usize,
    direction: RateDirection,
    config: SearchConfig,
) -> Result<GroupRateReport> {
    if groups.len() != ens.n() {
        return Err(Error::DimensionMismatch {
            expected: ens.n(),
            actual: groups.len(),
        });
    }
    let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == label).collect();
    if members.is_empty() {
        return Err(Error::UnknownGroup(label.to_string()));
    }
    let mt = MultiTarget::new(ens.clone(), kappa)?.with_config(config);
    let dirs: Vec<Direction> = match direction {
        RateDirection::Min => vec![Direction::Min],
        RateDirection::Max => vec![Direction::Max],
        RateDirection::Both => vec![Direction::Min, Direction::Max],
    };
    let solved: Vec<(Direction, GroupExtreme)> = dirs
        .into_par_iter()
        .map(|d| (d, mt.group_extreme(&members, d)))
        .collect();
    let mut report = GroupRateReport {
        group_label: label.to_string(),
        kappa,
        group_size: members.len(),
        min: None,
        max: None,
        one_hot: Vec::new(),
    };
    for (d, e) in solved {
        match d {
            Direction::Min => report.min = Some(e),
            Direction::Max => report.max = Some(e),
        }
    }
    for (k, name) in ens.target_names.iter().enumerate() {
        let s = ens.combined_with(&one_hot(ens.k(), k));
        let count = group_count(s.as_slice(), &members, kappa)?;
        report.one_hot.push(TargetRate {
            target: name.clone(),
            count,
            rate: count as f64 / kappa as f64,
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkflowConfig {
    pub targets: Vec<String>,
    pub group_label: String,
    pub kappa: KappaSpec,
    pub standardization: Standardization,
    pub search: SearchConfig,
}

/// One model evaluated on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub split: Split,
    /// Target name for single-target rankings, `index` for the fitted weights.
    pub model: String,
    #[serde(with = "crate::vecs")]
    pub alpha: DVector<f64>,
    pub kappa: usize,
    pub group_count: usize,
    /// Share of the selected rows that belong to the group.
    pub group_rate: f64,
    /// Per target: share of the split's total outcome captured by the selected rows.
    pub concentration: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkflowReport {
    pub targets: Vec<String>,
    pub group_label: String,
    pub standardization: Standardization,
    pub models: Vec<LinearModel>,
    pub standardizer: Standardizer,
    pub tune: GroupRateReport,
    #[serde(with = "crate::vecs")]
    pub alpha: DVector<f64>,
    pub summaries: Vec<ModelSummary>,
}

impl WorkflowReport {
    pub fn summary(&self, split: Split, model: &str) -> Option<&ModelSummary> {
        self.summaries.iter().find(|s| s.split == split && s.model == model)
    }

    /// Best group rate among the single-target rankings on `split`.
    pub fn best_single_rate(&self, split: Split) -> f64 {
        self.summaries
            .iter()
            .filter(|s| s.split == split && s.model != "index")
            .map(|s| s.group_rate)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_table<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![
            "split".to_string(),
            "model".into(),
            "alpha".into(),
            "kappa".into(),
            "group_count".into(),
            "group_rate".into(),
        ];
        header.extend(self.targets.iter().map(|t| format!("concentration_{t}")));
        out.write_record(&header)?;
        for s in &self.summaries {
            let alpha = s.alpha.iter().map(|a| format!("{a:.6}")).collect::<Vec<_>>().join(";");
            let mut rec = vec![
                s.split.as_str().to_string(),
                s.model.clone(),
                alpha,
                s.kappa.to_string(),
                s.group_count.to_string(),
                format!("{:.6}", s.group_rate),
            ];
            rec.extend(s.concentration.iter().map(|c| format!("{c:.6}")));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::Io {
            path: "<table>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn raw_predictions(design: &DMatrix<f64>, models: &[LinearModel]) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(design.nrows(), models.len());
    for (k, m) in models.iter().enumerate() {
        p.set_column(k, &(design * &m.weights));
    }
    p
}

fn summarize(
    split: Split,
    model: &str,
    alpha: &DVector<f64>,
    scores: &DVector<f64>,
    ds: &Dataset,
    label: &str,
    kappa: usize,
) -> Result<ModelSummary> {
    let r = rank_descending(scores.as_slice(), kappa)?;
    let top = r.top_rows();
    let group_count = top.iter().filter(|&&i| ds.groups()[i] == label).count();
    let targets = ds.targets();
    let concentration = targets
        .column_iter()
        .map(|col| {
            let total: f64 = col.sum();
            let sel: f64 = top.iter().map(|&i| col[i]).sum();
            if total == 0.0 {
                0.0
            } else {
                sel / total
            }
        })
        .collect();
    Ok(ModelSummary {
        split,
        model: model.to_string(),
        alpha: alpha.clone(),
        kappa,
        group_count,
        group_rate: group_count as f64 / kappa as f64,
        concentration,
    })
}

/// Fits per-target models on train, maximizes the group's count over the
/// weights on tune, then reports every ranking on tune and holdout.
pub fn fairness_workflow(ds: &Dataset, cfg: &WorkflowConfig) -> Result<WorkflowReport> {
    if cfg.targets.is_empty() {
        return Err(Error::Config("at least one target is required".into()));
    }
    for t in &cfg.targets {
        ds.target_index(t)?;
    }
    let train = ds.split(Split::Train).map_err(|e| e.in_phase("train"))?;
    let (train_o, basis) = orthonormalize(&train).map_err(|e| e.in_phase("train"))?;
    let models = cfg
        .targets
        .iter()
        .map(|t| fit_ols(&train_o, t))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_phase("train"))?;

    let tune = ds.split(Split::Tune).map_err(|e| e.in_phase("tune"))?;
    let (tune_report, standardizer, alpha) = (|| {
        let raw = raw_predictions(&basis.apply(tune.features())?, &models);
        let st = Standardizer::fit(&raw, cfg.standardization, &cfg.targets)?;
        let ens = IndexEnsemble::new(
            cfg.targets.clone(),
            st.apply(&raw),
            cfg.standardization,
            tune.row_ids().to_vec(),
        )?;
        let kappa = cfg.kappa.resolve(tune.n())?;
        let rep = group_rate_extremes_with(
            &ens,
            tune.groups(),
            &cfg.group_label,
            kappa,
            RateDirection::Max,
            cfg.search,
        )?;
        let alpha = rep.max.as_ref().expect("max requested").alpha.clone();
        Ok::<_, Error>((rep, st, alpha))
    })()
    .map_err(|e| e.in_phase("tune"))?;

    let holdout = ds.split(Split::Holdout).map_err(|e| e.in_phase("holdout"))?;
    let mut summaries = Vec::new();
    for (split, part) in [(Split::Tune, &tune), (Split::Holdout, &holdout)] {
        let phase = if split == Split::Tune { "tune" } else { "holdout" };
        let rows = (|| {
            let raw = raw_predictions(&basis.apply(part.features())?, &models);
            let z = standardizer.apply(&raw);
            let kappa = cfg.kappa.resolve(part.n())?;
            let mut rows = Vec::new();
            for (k, t) in cfg.targets.iter().enumerate() {
                let e = one_hot(cfg.targets.len(), k);
                rows.push(summarize(split, t, &e, &(&z * &e), part, &cfg.group_label, kappa)?);
            }
            rows.push(summarize(split, "index", &alpha, &(&z * &alpha), part, &cfg.group_label, kappa)?);
            Ok::<_, Error>(rows)
        })()
        .map_err(|e| e.in_phase(phase))?;
        summaries.extend(rows);
    }
    Ok(WorkflowReport {
        targets: cfg.targets.clone(),
        group_label: cfg.group_label.clone(),
        standardization: cfg.standardization,
        models,
        standardizer,
        tune: tune_report,
        alpha,
        summaries,
    })
}
