//! Tabular ingestion and design-matrix transforms.
//!
//! A [`Dataset`] owns an `n x (d+1)` design whose first column is the
//! intercept, `K` named targets, one categorical group label per row and a
//! train/tune/holdout tag. [`orthonormalize`] rewrites the design into an
//! orthonormal basis via column-pivoted Gram-Schmidt with the intercept
//! pinned first; collinear columns are dropped rather than rejected.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a column is treated as collinear.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Columns removed from the released healthcare extract before OLS fitting.
pub const HEALTHCARE_COLLINEAR_PATTERN: &str =
    "(gagne_sum_tm1|normal_tm1|esr_.*-low_tm1|crp_(min|mean|max).*_tm1|ghba1c_.*-low_tm1)";

/// Reduced healthcare feature set (used as a keep-list).
pub const HEALTHCARE_SUBSET_PATTERN: &str =
    "(gagne_sum_tm1|hypertension_elixhauser_tm1|^dem_|cost.*tm1)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Tune,
    Holdout,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Tune => "tune",
            Split::Holdout => "holdout",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "tune" | "validation" | "valid" => Ok(Split::Tune),
            "holdout" | "test" => Ok(Split::Holdout),
            other => Err(Error::Schema(format!("unknown split tag `{other}`"))),
        }
    }
}

/// Whether the design columns are raw features or an orthonormal basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Raw,
    Orthonormal,
}

/// Column-role mapping for CSV ingestion.
///
/// Parses from `key=value` pairs separated by whitespace or `;`, e.g.
/// `features=age,age_sq targets=y1,y2 group=group split=split`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    /// `None` selects every column not claimed by another role.
    pub features: Option<Vec<String>>,
    pub targets: Vec<String>,
    pub group: String,
    pub split: Option<String>,
    pub id: Option<String>,
    /// Drop rows with empty cells instead of failing.
    pub drop_missing: bool,
    /// Seed for the hash split used when no split column is present.
    pub split_seed: u64,
}

impl Schema {
    pub fn new<S: Into<String>>(targets: Vec<S>, group: impl Into<String>) -> Self {
        Schema {
            targets: targets.into_iter().map(Into::into).collect(),
            group: group.into(),
            ..Schema::default()
        }
    }

    pub fn with_features<S: Into<String>>(mut self, features: Vec<S>) -> Self {
        self.features = Some(features.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_split(mut self, column: impl Into<String>) -> Self {
        self.split = Some(column.into());
        self
    }

    pub fn with_id(mut self, column: impl Into<String>) -> Self {
        self.id = Some(column.into());
        self
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut schema = Schema::default();
        for token in s.split(|c: char| c.is_whitespace() || c == ';') {
            if token.is_empty() {
                continue;
            }
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("expected key=value, got `{token}`")))?;
            match key {
                "features" => schema.features = Some(split_list(value)),
                "targets" => schema.targets = split_list(value),
                "group" => schema.group = value.to_string(),
                "split" => schema.split = Some(value.to_string()),
                "id" => schema.id = Some(value.to_string()),
                other => return Err(Error::Schema(format!("unknown schema key `{other}`"))),
            }
        }
        Ok(schema)
    }
}

/// Immutable table: design, targets, group labels, row ids and split tags.
#[derive(Clone, Debug)]
pub struct Dataset {
    feature_names: Vec<String>,
    features: DMatrix<f64>,
    basis: Basis,
    target_names: Vec<String>,
    targets: DMatrix<f64>,
    group_column: String,
    groups: Vec<String>,
    row_ids: Vec<String>,
    splits: Vec<Split>,
    rejected_rows: usize,
}

impl Dataset {
    /// Builds a dataset from raw features (without the intercept column).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        feature_names: Vec<String>,
        raw_features: DMatrix<f64>,
        target_names: Vec<String>,
        targets: DMatrix<f64>,
        group_column: impl Into<String>,
        groups: Vec<String>,
        row_ids: Option<Vec<String>>,
        splits: Option<Vec<Split>>,
    ) -> Result<Self> {
        let n = raw_features.nrows();
        if n < 2 {
            return Err(Error::TooFewRows {
                required: 2,
                actual: n,
            });
        }
        if feature_names.len() != raw_features.ncols() {
            return Err(Error::DimensionMismatch {
                expected: raw_features.ncols(),
                actual: feature_names.len(),
            });
        }
        if target_names.is_empty() {
            return Err(Error::Schema("at least one target is required".into()));
        }
        if targets.nrows() != n || targets.ncols() != target_names.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: targets.nrows(),
            });
        }
        if groups.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: groups.len(),
            });
        }
        let row_ids = row_ids.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        if row_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row_ids.len(),
            });
        }
        let splits = match splits {
            Some(s) if s.len() != n => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: s.len(),
                })
            }
            Some(s) => s,
            None => row_ids.iter().map(|id| hash_split(id, 0)).collect(),
        };
        let mut features = DMatrix::from_element(n, raw_features.ncols() + 1, 1.0);
        features.columns_mut(1, raw_features.ncols()).copy_from(&raw_features);
        Ok(Dataset {
            feature_names,
            features,
            basis: Basis::Raw,
            target_names,
            targets,
            group_column: group_column.into(),
            groups,
            row_ids,
            splits,
            rejected_rows: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Number of non-intercept feature columns (raw basis) or basis columns minus one.
    pub fn d(&self) -> usize {
        self.features.ncols() - 1
    }

    pub fn k(&self) -> usize {
        self.target_names.len()
    }

    /// Design matrix including the intercept (raw) or the orthonormal basis.
    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn target_index(&self, name: &str) -> Result<usize> {
        self.target_names
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::UnknownTarget(name.to_string()))
    }

    pub fn target(&self, name: &str) -> Result<DVector<f64>> {
        let k = self.target_index(name)?;
        Ok(self.targets.column(k).into_owned())
    }

    pub fn group_column(&self) -> &str {
        &self.group_column
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn group_labels(&self) -> BTreeSet<&str> {
        self.groups.iter().map(String::as_str).collect()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Rows dropped at ingestion because of empty cells.
    pub fn rejected_rows(&self) -> usize {
        self.rejected_rows
    }

    /// Rows belonging to `label`, in ascending order.
    pub fn group_members(&self, label: &str) -> Result<Vec<usize>> {
        let members: Vec<usize> = self
            .groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.as_str() == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(Error::UnknownGroup(label.to_string()));
        }
        Ok(members)
    }

    /// Restriction to the given rows (order preserved as given).
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.len() < 2 {
            return Err(Error::TooFewRows {
                required: 2,
                actual: rows.len(),
            });
        }
        let features = self.features.select_rows(rows);
        let targets = self.targets.select_rows(rows);
        Ok(Dataset {
            feature_names: self.feature_names.clone(),
            features,
            basis: self.basis,
            target_names: self.target_names.clone(),
            targets,
            group_column: self.group_column.clone(),
            groups: rows.iter().map(|&i| self.groups[i].clone()).collect(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            splits: rows.iter().map(|&i| self.splits[i]).collect(),
            rejected_rows: self.rejected_rows,
        })
    }

    pub fn split_rows(&self, split: Split) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn split(&self, split: Split) -> Result<Dataset> {
        self.subset(&self.split_rows(split))
    }

    /// Re-tags every row with the seeded hash split.
    pub fn with_hash_split(mut self, seed: u64) -> Dataset {
        self.splits = self.row_ids.iter().map(|id| hash_split(id, seed)).collect();
        self
    }

    pub fn with_splits(mut self, splits: Vec<Split>) -> Result<Dataset> {
        if splits.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: splits.len(),
            });
        }
        self.splits = splits;
        Ok(self)
    }

    fn with_feature_columns(&self, keep: &[usize]) -> Result<Dataset> {
        if keep.is_empty() {
            return Err(Error::EmptyDesign);
        }
        let mut cols = vec![0];
        cols.extend(keep.iter().map(|c| c + 1));
        let mut out = self.clone();
        out.features = self.features.select_columns(&cols);
        out.feature_names = keep.iter().map(|&c| self.feature_names[c].clone()).collect();
        Ok(out)
    }
}

/// Deterministic 1/3 split from the row id.
pub fn hash_split(row_id: &str, seed: u64) -> Split {
    // FNV-1a over seed bytes then id bytes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(row_id.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    match h % 3 {
        0 => Split::Train,
        1 => Split::Tune,
        _ => Split::Holdout,
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

/// Parses a CSV stream with a header row; the intercept column is prepended.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    if schema.targets.is_empty() {
        return Err(Error::Schema("schema names no target column".into()));
    }
    if schema.group.is_empty() {
        return Err(Error::Schema("schema names no group column".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };

    let target_idx: Vec<usize> = schema.targets.iter().map(|t| find(t)).collect::<Result<_>>()?;
    let group_idx = find(&schema.group)?;
    let split_idx = schema.split.as_deref().map(find).transpose()?;
    let id_idx = schema.id.as_deref().map(find).transpose()?;

    let feature_names: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => {
            let mut claimed: BTreeSet<usize> = target_idx.iter().copied().collect();
            claimed.insert(group_idx);
            claimed.extend(split_idx);
            claimed.extend(id_idx);
            header
                .iter()
                .enumerate()
                .filter(|(i, _)| !claimed.contains(i))
                .map(|(_, h)| h.clone())
                .collect()
        }
    };
    if feature_names.is_empty() {
        return Err(Error::Schema("schema names no feature column".into()));
    }
    let feature_idx: Vec<usize> = feature_names.iter().map(|f| find(f)).collect::<Result<_>>()?;

    let mut feat_vals = Vec::new();
    let mut target_vals = Vec::new();
    let mut groups = Vec::new();
    let mut ids = Vec::new();
    let mut splits = Vec::new();
    let mut rejected = 0usize;

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let numeric: Vec<usize> = feature_idx.iter().chain(&target_idx).copied().collect();
        let missing = numeric
            .iter()
            .chain(std::iter::once(&group_idx))
            .find(|&&i| cell(i).is_empty());
        if let Some(&col) = missing {
            if schema.drop_missing {
                rejected += 1;
                continue;
            }
            return Err(Error::Parse {
                row,
                column: header[col].clone(),
                message: "missing value".into(),
            });
        }
        let parse = |i: usize| -> Result<f64> {
            let raw = cell(i);
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: header[i].clone(),
                message: format!("non-numeric value `{raw}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header[i].clone(),
                    message: format!("non-finite value `{raw}`"),
                });
            }
            Ok(v)
        };
        for &i in &feature_idx {
            feat_vals.push(parse(i)?);
        }
        for &i in &target_idx {
            target_vals.push(parse(i)?);
        }
        groups.push(cell(group_idx).to_string());
        ids.push(match id_idx {
            Some(i) => cell(i).to_string(),
            None => row.to_string(),
        });
        if let Some(i) = split_idx {
            splits.push(cell(i).parse::<Split>().map_err(|e| Error::Parse {
                row,
                column: header[i].clone(),
                message: e.to_string(),
            })?);
        }
    }

    let n = groups.len();
    let raw = DMatrix::from_row_slice(n, feature_idx.len(), &feat_vals);
    let targets = DMatrix::from_row_slice(n, target_idx.len(), &target_vals);
    let splits = if split_idx.is_some() {
        Some(splits)
    } else {
        Some(ids.iter().map(|id| hash_split(id, schema.split_seed)).collect())
    };
    let mut ds = Dataset::from_parts(
        feature_names,
        raw,
        schema.targets.clone(),
        targets,
        schema.group.clone(),
        groups,
        Some(ids),
        splits,
    )?;
    ds.rejected_rows = rejected;
    Ok(ds)
}

/// Writes `id, features..., targets..., group, split` with a header row.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["row_id".to_string()];
    header.extend(ds.feature_names.iter().cloned());
    header.extend(ds.target_names.iter().cloned());
    header.push(ds.group_column.clone());
    header.push("split".to_string());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = vec![ds.row_ids[i].clone()];
        rec.extend((1..ds.features.ncols()).map(|c| ds.features[(i, c)].to_string()));
        rec.extend((0..ds.k()).map(|k| ds.targets[(i, k)].to_string()));
        rec.push(ds.groups[i].clone());
        rec.push(ds.splits[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Schema that reads back what [`write_csv`] produced.
pub fn written_schema(ds: &Dataset) -> Schema {
    Schema {
        features: Some(ds.feature_names.clone()),
        targets: ds.target_names.clone(),
        group: ds.group_column.clone(),
        split: Some("split".into()),
        id: Some("row_id".into()),
        drop_missing: false,
        split_seed: 0,
    }
}

fn compile(patterns: &[&str]) -> Result<Vec<Regex>> {
    patterns
        .iter()
        .map(|p| {
            Regex::new(p).map_err(|e| Error::Pattern {
                pattern: p.to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Removes feature columns whose name matches any pattern.
pub fn drop_columns_matching(ds: &Dataset, patterns: &[&str]) -> Result<Dataset> {
    let res = compile(patterns)?;
    let keep: Vec<usize> = (0..ds.feature_names.len())
        .filter(|&c| !res.iter().any(|r| r.is_match(&ds.feature_names[c])))
        .collect();
    ds.with_feature_columns(&keep)
}

/// Keeps only feature columns whose name matches some pattern.
pub fn keep_columns_matching(ds: &Dataset, patterns: &[&str]) -> Result<Dataset> {
    let res = compile(patterns)?;
    let keep: Vec<usize> = (0..ds.feature_names.len())
        .filter(|&c| res.iter().any(|r| r.is_match(&ds.feature_names[c])))
        .collect();
    ds.with_feature_columns(&keep)
}

pub const HEALTHCARE_TARGETS: [&str; 3] = ["cost_t", "cost_avoidable_t", "gagne_sum_t"];
pub const HEALTHCARE_GROUP: &str = "race";

/// Loads the released healthcare extract: the three outcome columns as
/// targets, `race` as the group, every `dem_*` and `*_tm1` column as a
/// feature minus the collinear ones. `subset` instead keeps only the
/// reduced feature set; `max_rows` keeps the first rows of the file.
pub fn load_healthcare(path: impl AsRef<Path>, subset: bool, max_rows: Option<usize>, split_seed: u64) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let features: Vec<String> = header
        .iter()
        .filter(|h| h.starts_with("dem_") || h.ends_with("_tm1"))
        .cloned()
        .collect();
    let schema = Schema {
        features: Some(features),
        targets: HEALTHCARE_TARGETS.iter().map(|s| s.to_string()).collect(),
        group: HEALTHCARE_GROUP.into(),
        split: None,
        id: None,
        drop_missing: true,
        split_seed,
    };
    let full = load_csv(path, &schema)?;
    let ds = match max_rows {
        Some(m) if m < full.n() => full.subset(&(0..m).collect::<Vec<_>>())?,
        _ => full,
    };
    if subset {
        keep_columns_matching(&ds, &[HEALTHCARE_SUBSET_PATTERN])
    } else {
        drop_columns_matching(&ds, &[HEALTHCARE_COLLINEAR_PATTERN])
    }
}

/// Map from a raw design (with intercept) to an orthonormal basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthoBasis {
    /// `(d+1) x rank`; rows of dropped columns are zero.
    pub transform: DMatrix<f64>,
    pub rank: usize,
    /// Columns of the raw design (0 = intercept) removed as collinear.
    pub dropped_columns: Vec<usize>,
    /// Retained columns in pivot order.
    pub kept_columns: Vec<usize>,
    pub source_columns: Vec<String>,
}

impl OrthoBasis {
    /// Maps a raw design with the same columns into the basis.
    pub fn apply(&self, raw_design: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw_design.ncols() != self.transform.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.transform.nrows(),
                actual: raw_design.ncols(),
            });
        }
        Ok(raw_design * &self.transform)
    }

    /// Expresses basis weights in the raw feature coordinates.
    pub fn raw_weights(&self, basis_weights: &DVector<f64>) -> DVector<f64> {
        &self.transform * basis_weights
    }
}

/// Orthonormal factor of a column-pivoted QR with column 0 pinned first.
pub(crate) struct PivotedQr {
    pub q: DMatrix<f64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub transform: DMatrix<f64>,
}

pub(crate) fn pivoted_qr(x: &DMatrix<f64>) -> Result<PivotedQr> {
    let (n, p) = x.shape();
    let mut resid = x.clone();
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut qs: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut max_pivot = 0.0f64;

    while !remaining.is_empty() && qs.len() < n {
        let pos = if qs.is_empty() {
            0
        } else {
            let mut best = 0;
            for (j, &c) in remaining.iter().enumerate() {
                if resid.column(c).norm() > resid.column(remaining[best]).norm() {
                    best = j;
                }
            }
            best
        };
        let c = remaining[pos];
        // second Gram-Schmidt pass
        let mut v = resid.column(c).into_owned();
        for q in &qs {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let pivot = v.norm();
        if pivot == 0.0 || (!qs.is_empty() && pivot < PIVOT_TOLERANCE * max_pivot) {
            if qs.is_empty() {
                return Err(Error::RankZero);
            }
            break;
        }
        max_pivot = max_pivot.max(pivot);
        v /= pivot;
        remaining.remove(pos);
        for &o in &remaining {
            let proj = v.dot(&resid.column(o));
            let mut col = resid.column_mut(o);
            col.axpy(-proj, &v, 1.0);
        }
        qs.push(v);
        kept.push(c);
    }
    let dropped: Vec<usize> = {
        let mut d = remaining;
        d.sort_unstable();
        d
    };
    let r = kept.len();
    let q = DMatrix::from_columns(&qs);
    let x_kept = x.select_columns(&kept);
    let rmat = q.transpose() * &x_kept;
    let rinv = rmat
        .upper_triangle()
        .solve_upper_triangular(&DMatrix::identity(r, r))
        .ok_or(Error::RankZero)?;
    let mut transform = DMatrix::zeros(p, r);
    for (row, &c) in kept.iter().enumerate() {
        transform.row_mut(c).copy_from(&rinv.row(row));
    }
    Ok(PivotedQr {
        q,
        kept,
        dropped,
        transform,
    })
}

/// Rewrites the design into an orthonormal basis (`X^T X = I`).
pub fn orthonormalize(ds: &Dataset) -> Result<(Dataset, OrthoBasis)> {
    if ds.basis == Basis::Orthonormal {
        let p = ds.features.ncols();
        let basis = OrthoBasis {
            transform: DMatrix::identity(p, p),
            rank: p,
            dropped_columns: vec![],
            kept_columns: (0..p).collect(),
            source_columns: ds.feature_names.clone(),
        };
        return Ok((ds.clone(), basis));
    }
    let qr = pivoted_qr(&ds.features)?;
    let mut source_columns = vec!["(intercept)".to_string()];
    source_columns.extend(ds.feature_names.iter().cloned());
    let rank = qr.kept.len();
    let mut out = ds.clone();
    out.features = qr.q;
    out.basis = Basis::Orthonormal;
    out.feature_names = (1..rank).map(|j| format!("basis_{j}")).collect();
    let basis = OrthoBasis {
        transform: qr.transform,
        rank,
        dropped_columns: qr.dropped,
        kept_columns: qr.kept,
        source_columns,
    };
    Ok((out, basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_csv() -> &'static str {
        "age,y1,y2,group\n30,1.5,2.0,a\n40,0.5,1.0,b\n50,2.5,0.0,a\n"
    }

    fn schema() -> Schema {
        Schema::new(vec!["y1", "y2"], "group")
    }

    #[test]
    fn parses_small_csv() {
        let ds = read_csv(small_csv().as_bytes(), &schema()).unwrap();
        assert_eq!((ds.n(), ds.d(), ds.k()), (3, 1, 2));
        assert_eq!(ds.feature_names(), ["age"]);
        assert!(ds.features().column(0).iter().all(|&v| v == 1.0));
        assert_eq!(ds.features()[(2, 1)], 50.0);
        assert_eq!(ds.groups(), ["a", "b", "a"]);
        assert_eq!(ds.row_ids(), ["0", "1", "2"]);
    }

    #[test]
    fn blank_target_is_a_parse_error_naming_the_row() {
        let csv = "age,y1,y2,group\n30,1.5,2.0,a\n40,,1.0,b\n";
        match read_csv(csv.as_bytes(), &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "y1");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn drop_missing_counts_rejected_rows() {
        let csv = "age,y1,y2,group\n30,1.5,2.0,a\n40,,1.0,b\n50,1,1,b\n";
        let mut s = schema();
        s.drop_missing = true;
        let ds = read_csv(csv.as_bytes(), &s).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.rejected_rows(), 1);
    }

    #[test]
    fn non_numeric_and_missing_column() {
        let csv = "age,y1,y2,group\n30,abc,2.0,a\n40,1,1.0,b\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &schema()),
            Err(Error::Parse { row: 0, .. })
        ));
        let s = Schema::new(vec!["nope"], "group");
        assert!(matches!(read_csv(small_csv().as_bytes(), &s), Err(Error::Schema(_))));
    }

    #[test]
    fn schema_from_keys() {
        let s: Schema = "features=a,b targets=y1,y2;group=g split=s".parse().unwrap();
        assert_eq!(s.features, Some(vec!["a".into(), "b".into()]));
        assert_eq!(s.targets, vec!["y1", "y2"]);
        assert_eq!(s.group, "g");
        assert_eq!(s.split.as_deref(), Some("s"));
        assert!("bogus=1".parse::<Schema>().is_err());
    }

    #[test]
    fn write_then_read_is_identity() {
        let csv = "a,b,c,y,g\n0.1,2,3e-5,1.25,x\n-4,5.5,6,2,y\n7,8,9.75,-3,x\n";
        let ds = read_csv(csv.as_bytes(), &Schema::new(vec!["y"], "g")).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &written_schema(&ds)).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.targets(), ds.targets());
        assert_eq!(back.groups(), ds.groups());
        assert_eq!(back.row_ids(), ds.row_ids());
        assert_eq!(back.splits(), ds.splits());
        assert_eq!(back.feature_names(), ds.feature_names());
    }

    #[test]
    fn column_filters() {
        let csv = "a,b,c,y,g\n1,2,3,1,x\n4,5,6,2,y\n7,8,10,3,x\n";
        let ds = read_csv(csv.as_bytes(), &Schema::new(vec!["y"], "g")).unwrap();
        let out = drop_columns_matching(&ds, &["^b$"]).unwrap();
        assert_eq!(out.feature_names(), ["a", "c"]);
        assert_eq!(out.features().column(2), ds.features().column(3));
        let same = drop_columns_matching(&ds, &["zzz"]).unwrap();
        assert_eq!(same.features(), ds.features());
        assert!(matches!(
            drop_columns_matching(&ds, &["."]),
            Err(Error::EmptyDesign)
        ));
        let kept = keep_columns_matching(&ds, &["^(a|c)$"]).unwrap();
        assert_eq!(kept.feature_names(), ["a", "c"]);
        assert!(matches!(
            drop_columns_matching(&ds, &["("]),
            Err(Error::Pattern { .. })
        ));
    }

    #[test]
    fn healthcare_patterns_select_expected_columns() {
        let names = [
            "gagne_sum_tm1",
            "esr_min-low_tm1",
            "crp_mean-high_tm1",
            "ghba1c_max-low_tm1",
            "ldl_mean-normal_tm1",
            "cost_emergency_tm1",
            "dem_female",
            "hypertension_elixhauser_tm1",
            "lupus_elixhauser_tm1",
        ];
        let re = Regex::new(HEALTHCARE_COLLINEAR_PATTERN).unwrap();
        let dropped: Vec<&str> = names.iter().copied().filter(|n| re.is_match(n)).collect();
        assert_eq!(
            dropped,
            [
                "gagne_sum_tm1",
                "esr_min-low_tm1",
                "crp_mean-high_tm1",
                "ghba1c_max-low_tm1",
                "ldl_mean-normal_tm1"
            ]
        );
        let keep = Regex::new(HEALTHCARE_SUBSET_PATTERN).unwrap();
        let kept: Vec<&str> = names.iter().copied().filter(|n| keep.is_match(n)).collect();
        assert_eq!(
            kept,
            [
                "gagne_sum_tm1",
                "cost_emergency_tm1",
                "dem_female",
                "hypertension_elixhauser_tm1"
            ]
        );
    }

    #[test]
    fn hash_split_is_balanced_and_stable() {
        let tags: Vec<Split> = (0..3000).map(|i| hash_split(&i.to_string(), 7)).collect();
        for s in [Split::Train, Split::Tune, Split::Holdout] {
            let c = tags.iter().filter(|&&t| t == s).count();
            assert!((850..1150).contains(&c), "{s}: {c}");
        }
        assert_eq!(hash_split("42", 7), hash_split("42", 7));
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn orthonormal_input_keeps_identity_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 10, 3);
        let q = a.qr().q();
        let qr = pivoted_qr(&q).unwrap();
        assert!(qr.dropped.is_empty());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == qr.kept[j] { 1.0 } else { 0.0 };
                assert!((qr.transform[(i, j)].abs() - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn duplicated_column_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut raw = random_matrix(&mut rng, 12, 3);
        let c0 = raw.column(0).into_owned();
        raw.column_mut(2).copy_from(&c0);
        let ds = Dataset::from_parts(
            vec!["a".into(), "b".into(), "a2".into()],
            raw,
            vec!["y".into()],
            DMatrix::from_element(12, 1, 1.0),
            "g",
            vec!["x".into(); 12],
            None,
            None,
        )
        .unwrap();
        let (ortho, basis) = orthonormalize(&ds).unwrap();
        assert_eq!(basis.rank, ds.d());
        assert_eq!(basis.dropped_columns.len(), 1);
        assert!([1, 3].contains(&basis.dropped_columns[0]));
        assert_eq!(basis.kept_columns[0], 0);
        let gram = ortho.features().transpose() * ortho.features();
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn random_design_is_orthonormalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = random_matrix(&mut rng, 20, 3);
        let ds = Dataset::from_parts(
            vec!["a".into(), "b".into(), "c".into()],
            raw,
            vec!["y".into()],
            DMatrix::from_element(20, 1, 0.0),
            "g",
            vec!["x".into(); 20],
            None,
            None,
        )
        .unwrap();
        let (ortho, basis) = orthonormalize(&ds).unwrap();
        let x = ortho.features();
        let gram = x.transpose() * x;
        assert!((gram - DMatrix::identity(4, 4)).norm() < 1e-10);
        let mapped = basis.apply(ds.features()).unwrap();
        assert!((mapped - x).norm() < 1e-10);
        // intercept pinned: first basis column is constant
        let c0 = x.column(0);
        assert!(c0.iter().all(|v| (v - c0[0]).abs() < 1e-12));
    }
}
