use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use distreg::dataio::{self, PlanSpec, Table, TableSchema};
use distreg::dataset::Dataset;
use distreg::estimator::{ConditionalModel, FittedModel, Predictive};
use distreg::experiments::{self, ConsistencySpec, ExperimentSpec};
use distreg::recipe::{ModelRecipe, PartitionKind};
use distreg::scoring::{self, COVERAGE_LEVEL};
use distreg::{simgen, Loss};

#[derive(Debug, Parser)]
#[command(name = "distreg", version, about = "Conditional density estimation by binned classification")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Primary output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress the stdout summary.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from one of the simulation models.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        model: u8,
        #[arg(long)]
        n: usize,
    },
    /// Fit an estimator or ensemble and write it as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        recipe: RecipeFlags,
    },
    /// Quantiles, interval and optional density grid per row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated quantile levels.
        #[arg(long)]
        taus: Option<String>,
        /// Interval level for the lo/hi columns.
        #[arg(long)]
        level: Option<f64>,
        /// Write a long-format density grid (row, y, density) here.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Score a fitted model on labelled data.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Rolling-origin evaluation of one recipe, or two for comparison.
    Rolling {
        #[arg(long)]
        data: PathBuf,
        /// Also write the aggregate JSON here.
        #[arg(long)]
        aggregate: Option<PathBuf>,
    },
    /// Run a simulation grid and/or consistency study.
    Experiment {
        /// Spec file; defaults to --config.
        spec: Option<PathBuf>,
        /// Where the ISE table goes when a grid is also run.
        #[arg(long)]
        consistency_out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RecipeFlags {
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub loss: Option<Loss>,
    /// Number of cut-points.
    #[arg(long)]
    pub m: Option<usize>,
    /// Ensemble size.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_partition)]
    pub partition: Option<PartitionKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Comma-separated hidden layer sizes; empty for logistic regression.
    #[arg(long)]
    pub hidden: Option<String>,
    /// Declared response range as `lower,upper`.
    #[arg(long)]
    pub bounds: Option<String>,
}

fn parse_partition(s: &str) -> std::result::Result<PartitionKind, String> {
    match s {
        "even" => Ok(PartitionKind::Even),
        "random" => Ok(PartitionKind::Random),
        other => Err(format!("unknown partition kind `{other}` (even|random)")),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSettings {
    pub taus: Option<Vec<f64>>,
    pub level: Option<f64>,
    pub grid_points: Option<usize>,
}

/// JSON configuration shared by all subcommands; each reads its section.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub schema: Option<TableSchema>,
    pub recipe: ModelRecipe,
    pub recipe_b: Option<ModelRecipe>,
    pub plan: Option<PlanSpec>,
    pub predict: PredictSettings,
    pub grid: Option<ExperimentSpec>,
    pub consistency: Option<ConsistencySpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = serde_json::from_str(&text).map_err(distreg::Error::from)?;
        Ok(cfg)
    }

    fn seed(&self, cli: Option<u64>) -> Option<u64> {
        cli.or(self.seed)
    }

    fn schema(&self) -> TableSchema {
        self.schema.clone().unwrap_or_else(|| TableSchema::new("y"))
    }
}

/// A fitted model plus the feature layout it was trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub features: Vec<String>,
    pub schema: TableSchema,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening model {}", path.display()))?;
        let m = serde_json::from_reader(std::io::BufReader::new(file)).map_err(distreg::Error::from)?;
        Ok(m)
    }

    /// Reorders `data`'s columns to the model's feature order. One-hot
    /// columns for levels absent from `data` are zero.
    fn align(&self, data: &Dataset) -> Result<Dataset> {
        if data.names() == self.features.as_slice() {
            return Ok(data.clone());
        }
        if self.schema.categorical.is_empty() && data.n_features() != self.features.len() {
            return Err(distreg::Error::DimensionMismatch {
                expected: self.features.len(),
                got: data.n_features(),
            }
            .into());
        }
        let mut cols = Vec::with_capacity(self.features.len());
        for name in &self.features {
            let pos = data.names().iter().position(|n| n == name);
            let one_hot = self
                .schema
                .categorical
                .iter()
                .any(|c| name.starts_with(&format!("{c}_")));
            match pos {
                Some(p) => cols.push(Some(p)),
                None if one_hot => cols.push(None),
                None => {
                    return Err(distreg::Error::DimensionMismatch {
                        expected: self.features.len(),
                        got: data.n_features(),
                    }
                    .into())
                }
            }
        }
        let mut x = Array2::zeros((data.len(), cols.len()));
        for (j, c) in cols.iter().enumerate() {
            if let Some(p) = c {
                x.column_mut(j).assign(&data.x().column(*p));
            }
        }
        Ok(Dataset::new(x, data.y().to_vec(), Some(self.features.clone()))?)
    }
}

pub struct Outcome {
    pub summary: Value,
    /// Failed cells or folds; nonzero makes the exit code nonzero.
    pub failed: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn require_out(out: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match out {
        Some(p) if !p.as_os_str().is_empty() => Ok(p.clone()),
        _ => bail!("--out is required for {what}"),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number `{t}`")))
        .collect()
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Simulate { model, n } => simulate(&cli, &cfg, *model, *n),
        Command::Fit { data, recipe } => fit(&cli, &cfg, data, recipe),
        Command::Predict {
            model,
            data,
            taus,
            level,
            density,
            grid_points,
        } => predict(&cli, &cfg, model, data, taus.as_deref(), *level, density.as_deref(), *grid_points),
        Command::Score { model, data } => score(&cli, model, data),
        Command::Rolling { data, aggregate } => rolling(&cli, &cfg, data, aggregate.as_deref()),
        Command::Experiment { spec, consistency_out } => experiment(&cli, cfg, spec.as_deref(), consistency_out.as_deref()),
    }
}

fn simulate(cli: &Cli, cfg: &RunConfig, model: u8, n: usize) -> Result<Outcome> {
    let out = require_out(&cli.out, "simulate")?;
    let seed = cfg.seed(cli.seed).unwrap_or(0);
    let (data, _) = simgen::generate(model, n, seed)?;
    data.write_csv(create(&out)?)?;
    Ok(Outcome {
        summary: json!({"rows": data.len(), "columns": 1 + data.n_features(), "path": out}),
        failed: 0,
    })
}

fn apply_flags(recipe: &mut ModelRecipe, f: &RecipeFlags) -> Result<()> {
    if let Some(l) = f.loss {
        recipe.train.loss = l;
    }
    if let Some(m) = f.m {
        recipe.m = m;
    }
    if let Some(k) = f.k {
        recipe.k = k;
    }
    if let Some(p) = f.partition {
        recipe.partition = p;
    }
    if let Some(e) = f.epochs {
        recipe.train.epochs = e;
    }
    if let Some(b) = f.batch_size {
        recipe.train.batch_size = b;
    }
    if let Some(lr) = f.learning_rate {
        recipe.train.learning_rate = lr;
    }
    if let Some(d) = f.dropout {
        recipe.network.dropout_rate = d;
    }
    if let Some(h) = &f.hidden {
        recipe.network.hidden_sizes = parse_list(h)?.into_iter().map(|v| v as usize).collect();
    }
    if let Some(b) = &f.bounds {
        match parse_list(b)?.as_slice() {
            [lo, hi] => recipe.bounds = Some([*lo, *hi]),
            _ => bail!("--bounds expects `lower,upper`"),
        }
    }
    Ok(())
}

fn fit(cli: &Cli, cfg: &RunConfig, data_path: &Path, flags: &RecipeFlags) -> Result<Outcome> {
    let out = require_out(&cli.out, "fit")?;
    let mut recipe = cfg.recipe.clone();
    apply_flags(&mut recipe, flags)?;
    if let Some(s) = cfg.seed(cli.seed) {
        recipe.train.seed = s;
    }
    recipe.validate()?;
    let mut schema = cfg.schema();
    if let Some(t) = &flags.target {
        schema.target = t.clone();
    }
    let table = dataio::load_csv(data_path, &schema)?;
    let fit = recipe.fit(&table.data, table.bounds)?;
    let file = ModelFile {
        features: table.data.names().to_vec(),
        schema,
        model: fit.estimator,
    };
    let mut w = create(&out)?;
    serde_json::to_writer(&mut w, &file)?;
    w.flush()?;
    let (lower, upper) = file.model.support();
    Ok(Outcome {
        summary: json!({
            "final_loss": fit.loss_trace.iter().filter_map(|t| t.last()).sum::<f64>() / fit.loss_trace.len().max(1) as f64,
            "members": file.model.n_members(),
            "rows": table.data.len(),
            "lower": lower,
            "upper": upper,
            "path": out,
        }),
        failed: 0,
    })
}

fn tau_column(tau: f64) -> String {
    let pct = tau * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("q{:02}", pct.round() as i64)
    } else {
        format!("q{pct}")
    }
}

fn load_for_model(model: &ModelFile, data_path: &Path, need_target: bool) -> Result<Table> {
    let table = if need_target {
        dataio::load_csv(data_path, &model.schema)?
    } else {
        dataio::load_features(data_path, &model.schema)?
    };
    let data = model.align(&table.data)?;
    Ok(Table { data, ..table })
}

#[allow(clippy::too_many_arguments)]
fn predict(
    cli: &Cli,
    cfg: &RunConfig,
    model_path: &Path,
    data_path: &Path,
    taus: Option<&str>,
    level: Option<f64>,
    density: Option<&Path>,
    grid_points: Option<usize>,
) -> Result<Outcome> {
    let out = require_out(&cli.out, "predict")?;
    let taus = match taus {
        Some(t) => parse_list(t)?,
        None => cfg.predict.taus.clone().unwrap_or_else(|| vec![0.05, 0.5, 0.95]),
    };
    let level = level.or(cfg.predict.level).unwrap_or(COVERAGE_LEVEL);
    let grid_points = grid_points.or(cfg.predict.grid_points).unwrap_or(100);
    if grid_points < 2 {
        bail!("--grid-points must be at least 2");
    }
    let model = ModelFile::load(model_path)?;
    let table = load_for_model(&model, data_path, false)?;
    let dists = model.model.predict_batch(table.data.x())?;

    let mut w = csv::Writer::from_writer(create(&out)?);
    let mut header = vec!["row".to_string()];
    header.extend(taus.iter().map(|&t| tau_column(t)));
    header.extend(["lo".to_string(), "hi".to_string()]);
    w.write_record(&header)?;
    for (i, d) in dists.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        for &t in &taus {
            rec.push(d.quantile(t)?.to_string());
        }
        let (lo, hi) = d.interval(level)?;
        rec.extend([lo.to_string(), hi.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;

    if let Some(path) = density {
        let (lower, upper) = model.model.support();
        let h = (upper - lower) / (grid_points - 1) as f64;
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["row", "y", "density"])?;
        for (i, d) in dists.iter().enumerate() {
            for g in 0..grid_points {
                let y = if g == grid_points - 1 { upper } else { lower + g as f64 * h };
                let dens = (d.cdf(y + h / 2.0) - d.cdf(y - h / 2.0)) / h;
                w.write_record([i.to_string(), y.to_string(), dens.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(Outcome {
        summary: json!({"rows": dists.len(), "taus": taus, "level": level, "path": out}),
        failed: 0,
    })
}

fn score(cli: &Cli, model_path: &Path, data_path: &Path) -> Result<Outcome> {
    let model = ModelFile::load(model_path)?;
    let table = load_for_model(&model, data_path, true)?;
    let report = scoring::score_testset(&model.model, &table.data)?;
    if let Some(out) = &cli.out {
        report.write_csv(create(out)?)?;
    }
    Ok(Outcome {
        summary: serde_json::to_value(&report)?,
        failed: 0,
    })
}

fn rolling(cli: &Cli, cfg: &RunConfig, data_path: &Path, aggregate: Option<&Path>) -> Result<Outcome> {
    let table = dataio::load_csv(data_path, &cfg.schema())?;
    let plan = cfg.plan.clone().unwrap_or_default().resolve(&table)?;
    let mut a = cfg.recipe.clone();
    let mut b = cfg.recipe_b.clone();
    if let Some(s) = cfg.seed(cli.seed) {
        a.train.seed = s;
        if let Some(b) = b.as_mut() {
            b.train.seed = s;
        }
    }
    let report = dataio::rolling_eval(&table, &plan, &a, b.as_ref())?;
    if let Some(out) = &cli.out {
        report.write_folds_csv(create(out)?)?;
    }
    let agg = serde_json::to_value(&report.aggregate)?;
    if let Some(path) = aggregate {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &agg)?;
        w.flush()?;
    }
    Ok(Outcome {
        summary: agg,
        failed: 0,
    })
}

fn experiment(cli: &Cli, mut cfg: RunConfig, spec: Option<&Path>, consistency_out: Option<&Path>) -> Result<Outcome> {
    if let Some(p) = spec {
        cfg = RunConfig::load(p)?;
    }
    if cfg.grid.is_none() && cfg.consistency.is_none() {
        bail!("the experiment spec has neither a `grid` nor a `consistency` section");
    }
    let seed = cfg.seed(cli.seed);
    let mut summary = serde_json::Map::new();
    let mut failed = 0;
    if let Some(mut grid) = cfg.grid.clone() {
        if let Some(s) = seed {
            grid.seed = s;
        }
        let rows = experiments::run_grid(&grid)?;
        failed += rows.iter().filter(|r| !r.is_ok()).count();
        if let Some(out) = &cli.out {
            experiments::write_grid_csv(&rows, create(out)?)?;
        }
        summary.insert("cells".into(), json!(rows.len()));
        summary.insert("failed".into(), json!(failed));
        summary.insert("summary".into(), serde_json::to_value(experiments::summarize(&rows))?);
        let errors: Vec<&str> = rows.iter().filter(|r| !r.is_ok()).map(|r| r.status.as_str()).collect();
        if !errors.is_empty() {
            summary.insert("errors".into(), json!(errors));
        }
    }
    if let Some(mut cons) = cfg.consistency.clone() {
        if let Some(s) = seed {
            cons.seed = s;
        }
        let report = experiments::run_consistency(&cons)?;
        let target = if cfg.grid.is_some() { consistency_out } else { cli.out.as_deref().or(consistency_out) };
        if let Some(path) = target {
            report.write_csv(create(path)?)?;
        }
        summary.insert("consistency".into(), serde_json::to_value(&report.medians)?);
        summary.insert("ise_decreasing".into(), json!(report.strictly_decreasing()));
    }
    Ok(Outcome {
        summary: Value::Object(summary),
        failed,
    })
}
