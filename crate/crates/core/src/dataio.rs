//! CSV ingestion with one-hot and calendar features, and a rolling-origin
//! evaluation harness over time-ordered data.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Months, NaiveDate, NaiveDateTime, Timelike};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::recipe::ModelRecipe;
use crate::rng::{child_seed, rng_from_seed};
use crate::scoring::{score_testset, ScoreReport};

pub const YEAR_DAYS: f64 = 365.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub target: String,
    /// Numeric feature columns. When both this and `categorical` are empty,
    /// every column other than the target and timestamp is numeric.
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
    /// Append calendar features derived from the timestamp column.
    #[serde(default = "yes")]
    pub calendar: bool,
    /// Declared response range `[l, u]`.
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    /// Drop rows whose target is exactly zero.
    #[serde(default)]
    pub drop_zero_target: bool,
}

fn yes() -> bool {
    true
}

impl TableSchema {
    pub fn new(target: impl Into<String>) -> Self {
        TableSchema {
            target: target.into(),
            features: Vec::new(),
            categorical: Vec::new(),
            timestamp: None,
            calendar: true,
            bounds: None,
            drop_zero_target: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let names = std::iter::once(&self.target)
            .chain(&self.features)
            .chain(&self.categorical)
            .chain(&self.timestamp);
        for name in names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        if let Some([lo, hi]) = self.bounds {
            if !(lo < hi) {
                return Err(Error::InvalidRange { lower: lo, upper: hi });
            }
        }
        Ok(())
    }
}

/// Loaded table: the dataset plus what was derived from the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub data: Dataset,
    pub timestamps: Option<Vec<NaiveDateTime>>,
    /// One-hot levels per categorical column, in order of first appearance.
    pub levels: Vec<(String, Vec<String>)>,
    pub bounds: Option<(f64, f64)>,
}

impl Table {
    /// Feature layout as loaded, for echoing next to a fitted model.
    pub fn schema_echo(&self) -> serde_json::Value {
        serde_json::json!({
            "features": self.data.names(),
            "levels": self.levels.iter().map(|(c, l)| serde_json::json!({"column": c, "levels": l})).collect::<Vec<_>>(),
            "bounds": self.bounds.map(|(l, u)| [l, u]),
            "rows": self.data.len(),
        })
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Table {
        Table {
            data: self.data.slice_rows(start, end),
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
            levels: self.levels.clone(),
            bounds: self.bounds,
        }
    }
}

pub fn load_csv(path: &Path, schema: &TableSchema) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), schema)
}

fn parse_value(s: &str, line: usize, column: &str) -> Result<f64> {
    let err = |message: &str| Error::Parse {
        line,
        column: column.to_string(),
        message: message.to_string(),
    };
    let s = s.trim();
    if s.is_empty() {
        return Err(err("missing value"));
    }
    let v: f64 = s.parse().map_err(|_| err(&format!("not a number: `{s}`")))?;
    if !v.is_finite() {
        return Err(err(&format!("non-finite value `{s}`")));
    }
    Ok(v)
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    const FORMATS: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y%m%d %H:%M",
        "%Y%m%d %H:%M:%S",
    ];
    for fmt in FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
        .map_err(|_| Error::Timestamp(s.to_string()))
}

pub fn read_csv<R: Read>(reader: R, schema: &TableSchema) -> Result<Table> {
    read_table(reader, schema, true)
}

/// Like [`load_csv`] but the target column may be absent, for prediction
/// inputs; missing responses are filled with `0`.
pub fn load_features(path: &Path, schema: &TableSchema) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(std::io::BufReader::new(file), schema)
}

pub fn read_features<R: Read>(reader: R, schema: &TableSchema) -> Result<Table> {
    read_table(reader, schema, false)
}

fn read_table<R: Read>(reader: R, schema: &TableSchema, require_target: bool) -> Result<Table> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyData("file has no header".into()));
    }
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target = match col(&schema.target) {
        Ok(i) => Some(i),
        Err(_) if !require_target => None,
        Err(e) => return Err(e),
    };
    let ts_col = schema.timestamp.as_deref().map(col).transpose()?;
    let features: Vec<String> = if schema.features.is_empty() && schema.categorical.is_empty() {
        header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != target && Some(*i) != ts_col)
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.features.clone()
    };
    let feature_cols = features.iter().map(|f| col(f)).collect::<Result<Vec<_>>>()?;
    let cat_cols = schema.categorical.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;

    let mut ys = Vec::new();
    let mut numeric: Vec<f64> = Vec::new();
    let mut cats: Vec<Vec<usize>> = Vec::new();
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); cat_cols.len()];
    let mut stamps = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let y = match target {
            Some(t) => parse_value(field(t), line, &schema.target)?,
            None => 0.0,
        };
        if schema.drop_zero_target && y == 0.0 {
            continue;
        }
        ys.push(y);
        for (&c, name) in feature_cols.iter().zip(&features) {
            numeric.push(parse_value(field(c), line, name)?);
        }
        let mut row_cats = Vec::with_capacity(cat_cols.len());
        for (j, &c) in cat_cols.iter().enumerate() {
            let v = field(c).trim();
            if v.is_empty() {
                return Err(Error::Parse {
                    line,
                    column: schema.categorical[j].clone(),
                    message: "missing value".into(),
                });
            }
            let idx = match levels[j].iter().position(|l| l == v) {
                Some(i) => i,
                None => {
                    levels[j].push(v.to_string());
                    levels[j].len() - 1
                }
            };
            row_cats.push(idx);
        }
        cats.push(row_cats);
        if let Some(c) = ts_col {
            stamps.push(parse_timestamp(field(c)).map_err(|_| Error::Parse {
                line,
                column: schema.timestamp.clone().unwrap_or_default(),
                message: format!("unparseable timestamp `{}`", field(c)),
            })?);
        }
    }
    if ys.is_empty() {
        return Err(Error::EmptyData("no data rows".into()));
    }

    let n = ys.len();
    let mut names = features.clone();
    for (j, lv) in levels.iter().enumerate() {
        names.extend(lv.iter().map(|l| format!("{}_{}", schema.categorical[j], l)));
    }
    let calendar = match (ts_col, schema.calendar) {
        (Some(_), true) => Some(calendar_features(&stamps)),
        _ => None,
    };
    if let Some((_, cal_names)) = &calendar {
        names.extend(cal_names.iter().cloned());
    }
    let p = names.len();
    let mut x = Array2::zeros((n, p));
    let nf = features.len();
    for i in 0..n {
        for j in 0..nf {
            x[[i, j]] = numeric[i * nf + j];
        }
        let mut offset = nf;
        for (j, lv) in levels.iter().enumerate() {
            x[[i, offset + cats[i][j]]] = 1.0;
            offset += lv.len();
        }
        if let Some((cal, _)) = &calendar {
            for (k, v) in cal.row(i).iter().enumerate() {
                x[[i, offset + k]] = *v;
            }
        }
    }
    let data = Dataset::new(x, ys, Some(names))?;
    Ok(Table {
        data,
        timestamps: ts_col.map(|_| stamps),
        levels: schema.categorical.iter().cloned().zip(levels).collect(),
        bounds: schema.bounds.map(|[l, u]| (l, u)),
    })
}

/// Zero-based day of the year including the time of day.
pub fn fractional_day_of_year(t: &NaiveDateTime) -> f64 {
    t.ordinal0() as f64 + t.num_seconds_from_midnight() as f64 / 86_400.0
}

/// `doy_sin`, `doy_cos` with period 365.25 days, then `hour_0..hour_23`
/// indicators.
pub fn calendar_features(timestamps: &[NaiveDateTime]) -> (Array2<f64>, Vec<String>) {
    let mut names = vec!["doy_sin".to_string(), "doy_cos".to_string()];
    names.extend((0..24).map(|h| format!("hour_{h}")));
    let mut out = Array2::zeros((timestamps.len(), names.len()));
    for (i, t) in timestamps.iter().enumerate() {
        let angle = 2.0 * PI * fractional_day_of_year(t) / YEAR_DAYS;
        out[[i, 0]] = angle.sin();
        out[[i, 1]] = angle.cos();
        out[[i, 2 + t.hour() as usize]] = 1.0;
    }
    (out, names)
}

/// One fold trains on rows `[0, train_end)` and tests on
/// `[train_end, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_end: usize,
    pub test_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingPlan {
    folds: Vec<Fold>,
}

fn check_sorted(timestamps: &[NaiveDateTime]) -> Result<()> {
    match timestamps.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::Unsorted(i + 1)),
        None => Ok(()),
    }
}

fn month_index(t: &NaiveDateTime) -> i64 {
    t.year() as i64 * 12 + t.month0() as i64
}

impl RollingPlan {
    pub fn new(folds: Vec<Fold>, n_rows: usize) -> Result<Self> {
        let plan = RollingPlan { folds };
        plan.validate(n_rows)?;
        Ok(plan)
    }

    pub fn folds(&self) -> &[Fold] {
        &self.folds
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn validate(&self, n_rows: usize) -> Result<()> {
        let first = self
            .folds
            .first()
            .ok_or_else(|| Error::InvalidCount("a rolling plan needs at least one fold".into()))?;
        if first.train_end == 0 {
            return Err(Error::EmptyData("initial training window is empty".into()));
        }
        for (i, f) in self.folds.iter().enumerate() {
            if f.test_end <= f.train_end {
                return Err(Error::EmptyFold(i));
            }
            if i > 0 && f.train_end != self.folds[i - 1].test_end {
                return Err(Error::InvalidParameter(format!(
                    "fold {i} does not start where fold {} ended",
                    i - 1
                )));
            }
        }
        let last = self.folds.last().expect("nonempty").test_end;
        if last > n_rows {
            return Err(Error::IndexOutOfBounds {
                index: last,
                bins: n_rows,
            });
        }
        Ok(())
    }

    /// Fixed-size test spans by row count.
    pub fn by_rows(n_rows: usize, initial: usize, test_len: usize, n_folds: usize) -> Result<Self> {
        if test_len == 0 {
            return Err(Error::EmptyFold(0));
        }
        let folds = (0..n_folds)
            .map(|f| Fold {
                train_end: initial + f * test_len,
                test_end: initial + (f + 1) * test_len,
            })
            .collect();
        Self::new(folds, n_rows)
    }

    /// The first `initial_months` calendar months train; each fold tests
    /// the following month. Without `n_folds`, every remaining month is a
    /// fold.
    pub fn monthly(timestamps: &[NaiveDateTime], initial_months: usize, n_folds: Option<usize>) -> Result<Self> {
        check_sorted(timestamps)?;
        let first = timestamps
            .first()
            .ok_or_else(|| Error::EmptyData("no timestamps".into()))?;
        let base = month_index(first);
        let offsets: Vec<i64> = timestamps.iter().map(|t| month_index(t) - base).collect();
        let span = *offsets.last().expect("nonempty") as usize + 1;
        let n_folds = n_folds.unwrap_or(span.saturating_sub(initial_months));
        let boundary = |k: usize| offsets.partition_point(|&o| o < k as i64);
        let folds = (0..n_folds)
            .map(|f| Fold {
                train_end: boundary(initial_months + f),
                test_end: boundary(initial_months + f + 1),
            })
            .collect();
        Self::new(folds, timestamps.len())
    }
}

/// Serializable plan description resolved against a loaded table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PlanSpec {
    Monthly {
        initial_months: usize,
        #[serde(default)]
        folds: Option<usize>,
    },
    Rows {
        initial: usize,
        test: usize,
        folds: usize,
    },
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec::Monthly {
            initial_months: 12,
            folds: Some(12),
        }
    }
}

impl PlanSpec {
    pub fn resolve(&self, table: &Table) -> Result<RollingPlan> {
        match self {
            PlanSpec::Monthly { initial_months, folds } => {
                let ts = table.timestamps.as_deref().ok_or_else(|| {
                    Error::InvalidParameter("monthly folds need a timestamp column".into())
                })?;
                RollingPlan::monthly(ts, *initial_months, *folds)
            }
            PlanSpec::Rows { initial, test, folds } => RollingPlan::by_rows(table.data.len(), *initial, *test, *folds),
        }
    }
}

/// True when every fold's training timestamps precede all of its test
/// timestamps.
pub fn leakage_free(plan: &RollingPlan, timestamps: &[NaiveDateTime]) -> bool {
    plan.folds().iter().all(|f| {
        let max_train = timestamps[..f.train_end].iter().max();
        let min_test = timestamps[f.train_end..f.test_end].iter().min();
        match (max_train, min_test) {
            (Some(a), Some(b)) => a < b,
            _ => false,
        }
    })
}

/// Per-element `(a - b) / b` and its mean.
pub fn relative_change(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyData("no scores to compare".into()));
    }
    let per: Vec<f64> = a.iter().zip(b).map(|(a, b)| (a - b) / b).collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_start: Option<String>,
    pub a: ScoreReport,
    pub b: Option<ScoreReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub crps: f64,
    pub aqtl: f64,
    pub coverage90: f64,
}

impl MeanScores {
    fn of<'a>(reports: impl Iterator<Item = &'a ScoreReport>) -> Self {
        let (mut c, mut a, mut v, mut n) = (0.0, 0.0, 0.0, 0.0);
        for r in reports {
            c += r.crps;
            a += r.aqtl;
            v += r.coverage90;
            n += 1.0;
        }
        MeanScores {
            crps: c / n,
            aqtl: a / n,
            coverage90: v / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub folds: usize,
    pub a: MeanScores,
    pub b: Option<MeanScores>,
    /// Mean over folds of `(A - B) / B`.
    pub rel_crps: Option<f64>,
    pub rel_aqtl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub folds: Vec<FoldReport>,
    pub aggregate: Aggregate,
}

impl RollingReport {
    fn column(&self, pick: impl Fn(&FoldReport) -> Option<f64>) -> Option<Vec<f64>> {
        self.folds.iter().map(pick).collect()
    }

    /// Per-fold relative CRPS change, when a comparison recipe was run.
    pub fn rel_crps(&self) -> Option<Vec<f64>> {
        let a = self.column(|f| Some(f.a.crps))?;
        let b = self.column(|f| f.b.as_ref().map(|r| r.crps))?;
        relative_change(&a, &b).ok().map(|(v, _)| v)
    }

    pub fn rel_aqtl(&self) -> Option<Vec<f64>> {
        let a = self.column(|f| Some(f.a.aqtl))?;
        let b = self.column(|f| f.b.as_ref().map(|r| r.aqtl))?;
        relative_change(&a, &b).ok().map(|(v, _)| v)
    }

    /// `fold,n,crps,aqtl,coverage90`, plus the comparison columns when
    /// recipe B was run.
    pub fn write_folds_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let compare = self.aggregate.b.is_some();
        let mut header = vec!["fold", "n", "crps", "aqtl", "coverage90"];
        if compare {
            header.extend(["crps_b", "aqtl_b", "coverage90_b", "rel_crps", "rel_aqtl"]);
        }
        w.write_record(&header)?;
        let rel_c = self.rel_crps();
        let rel_a = self.rel_aqtl();
        for (i, f) in self.folds.iter().enumerate() {
            let mut rec = vec![
                f.fold.to_string(),
                f.a.n.to_string(),
                f.a.crps.to_string(),
                f.a.aqtl.to_string(),
                f.a.coverage90.to_string(),
            ];
            if let (Some(b), Some(rc), Some(ra)) = (&f.b, &rel_c, &rel_a) {
                rec.extend([
                    b.crps.to_string(),
                    b.aqtl.to_string(),
                    b.coverage90.to_string(),
                    rc[i].to_string(),
                    ra[i].to_string(),
                ]);
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Trains recipe A (and B, concurrently) on each growing window and scores
/// the following test span. Fold `f` trains with seed
/// `child_seed(recipe.train.seed, f)`.
pub fn rolling_eval(
    table: &Table,
    plan: &RollingPlan,
    recipe_a: &ModelRecipe,
    recipe_b: Option<&ModelRecipe>,
) -> Result<RollingReport> {
    plan.validate(table.data.len())?;
    if let Some(ts) = &table.timestamps {
        check_sorted(ts)?;
        if !leakage_free(plan, ts) {
            return Err(Error::InvalidParameter(
                "a fold's training window overlaps its test span in time".into(),
            ));
        }
    }
    let mut folds = Vec::with_capacity(plan.len());
    for (i, fold) in plan.folds().iter().enumerate() {
        let train = table.data.slice_rows(0, fold.train_end);
        let test = table.data.slice_rows(fold.train_end, fold.test_end);
        let run = |recipe: &ModelRecipe| -> Result<ScoreReport> {
            let mut recipe = recipe.clone();
            recipe.train.seed = child_seed(recipe.train.seed, i as u64);
            let fit = recipe.fit(&train, table.bounds)?;
            score_testset(&fit.estimator, &test)
        };
        let (a, b) = match recipe_b {
            Some(rb) => {
                let (a, b) = rayon::join(|| run(recipe_a), || run(rb));
                (a?, Some(b?))
            }
            None => (run(recipe_a)?, None),
        };
        folds.push(FoldReport {
            fold: i,
            train_rows: train.len(),
            test_rows: test.len(),
            test_start: table
                .timestamps
                .as_ref()
                .map(|t| t[fold.train_end].format("%Y-%m-%dT%H:%M:%S").to_string()),
            a,
            b,
        });
    }
    let mut report = RollingReport {
        aggregate: Aggregate {
            folds: folds.len(),
            a: MeanScores::of(folds.iter().map(|f| &f.a)),
            b: None,
            rel_crps: None,
            rel_aqtl: None,
        },
        folds,
    };
    if recipe_b.is_some() {
        report.aggregate.b = Some(MeanScores::of(report.folds.iter().filter_map(|f| f.b.as_ref())));
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        report.aggregate.rel_crps = report.rel_crps().map(mean);
        report.aggregate.rel_aqtl = report.rel_aqtl().map(mean);
    }
    Ok(report)
}

/// Synthetic solar-style series: per farm and time step, a bounded target
/// following an annual sinusoid plus a noisy covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub farms: Vec<String>,
    pub radiation: Vec<f64>,
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalOptions {
    pub start: NaiveDateTime,
    pub months: u32,
    pub step_hours: u32,
    pub farms: Vec<String>,
    pub noise_sd: f64,
}

impl Default for SeasonalOptions {
    fn default() -> Self {
        SeasonalOptions {
            start: NaiveDate::from_ymd_opt(2012, 4, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            months: 24,
            step_hours: 3,
            farms: vec!["A".into(), "B".into()],
            noise_sd: 0.05,
        }
    }
}

/// Rows are time-ordered, one per farm per step, with
/// `power = clamp(0.5 + 0.25 sin(2 pi d / 365.25) + 0.05 radiation + farm offset + noise, 0, 1)`.
pub fn synthetic_seasonal(opts: &SeasonalOptions, seed: u64) -> Result<SeasonalSeries> {
    if opts.step_hours == 0 || opts.farms.is_empty() || opts.months == 0 {
        return Err(Error::InvalidParameter("seasonal series needs steps, farms and months".into()));
    }
    let end = opts
        .start
        .checked_add_months(Months::new(opts.months))
        .ok_or_else(|| Error::InvalidParameter("end date out of range".into()))?;
    let step = chrono::Duration::hours(opts.step_hours as i64);
    let mut rng = rng_from_seed(seed);
    let mut out = SeasonalSeries {
        timestamps: Vec::new(),
        farms: Vec::new(),
        radiation: Vec::new(),
        power: Vec::new(),
    };
    let mut t = opts.start;
    while t < end {
        let season = (2.0 * PI * fractional_day_of_year(&t) / YEAR_DAYS).sin();
        for (j, farm) in opts.farms.iter().enumerate() {
            let offset = 0.05 * (j as f64 - (opts.farms.len() - 1) as f64 / 2.0);
            let radiation: f64 = rng.sample(StandardNormal);
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * opts.noise_sd;
            let power = (0.5 + 0.25 * season + 0.05 * radiation + offset + noise).clamp(0.0, 1.0);
            out.timestamps.push(t);
            out.farms.push(farm.clone());
            out.radiation.push(radiation);
            out.power.push(power);
        }
        t += step;
    }
    Ok(out)
}

impl SeasonalSeries {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Schema that loads the CSV written by [`SeasonalSeries::write_csv`].
    pub fn schema() -> TableSchema {
        TableSchema {
            target: "power".into(),
            features: vec!["radiation".into()],
            categorical: vec!["farm".into()],
            timestamp: Some("timestamp".into()),
            calendar: true,
            bounds: Some([0.0, 1.0]),
            drop_zero_target: false,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "farm", "radiation", "power"])?;
        for i in 0..self.len() {
            w.write_record([
                self.timestamps[i].format("%Y-%m-%dT%H:%M:%S").to_string(),
                self.farms[i].clone(),
                self.radiation[i].to_string(),
                self.power[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
