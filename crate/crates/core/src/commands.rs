//! The operations behind the `lmn` binary. Each returns data; writing to
//! stdout and choosing exit codes is left to the caller.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::{Checkpoint, ModelMeta};
use crate::config::RunConfig;
use crate::data::{self, Dataset, DatasetRecipe, LoadReport, TaskKind};
use crate::error::{Error, Result};
use crate::monotone::MonotoneModel;
use crate::network::{Network, NetworkShape};
use crate::optim::{self, LossKind};
use crate::tensor::Rng;
use crate::verify::{self, AuditReport, CertifyReport, SampleBox};

/// Fraction of the data range added on each side of sampling boxes and
/// curve grids.
pub const BOX_EXPANSION: f64 = 0.5;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "loss_history.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const CERTIFY_FILE: &str = "certify.txt";
pub const DATA_FILE: &str = "data.csv";

/// Ordered `name = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub entries: Vec<(String, String)>,
}

impl Metrics {
    fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn push_f(&mut self, key: &str, value: f64) {
        self.push(key, format!("{value:.16e}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k}={v}");
            s
        })
    }
}

pub fn resolve_recipe(name_or_path: &str) -> Result<DatasetRecipe> {
    if let Some(r) = data::builtin_recipe(name_or_path) {
        return Ok(r);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return DatasetRecipe::parse(&text);
    }
    Err(Error::Recipe(format!(
        "`{name_or_path}` is neither a built-in recipe nor a recipe file"
    )))
}

/// The raw dataset a run config describes.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, DatasetRecipe, LoadReport)> {
    let recipe = resolve_recipe(&cfg.recipe)?;
    let (ds, report) = match recipe.source.as_str() {
        "synthetic:toy" => (
            data::toy_dataset(cfg.realization, cfg.samples, cfg.train.seed)?,
            LoadReport::default(),
        ),
        "synthetic:memorization" => (
            data::memorization_dataset(cfg.samples, cfg.noise_features, cfg.critical, cfg.train.seed)?,
            LoadReport::default(),
        ),
        s if s.starts_with("synthetic:") => {
            return Err(Error::Recipe(format!("unknown synthetic generator `{s}`")))
        }
        _ => {
            let path = cfg
                .data
                .as_ref()
                .ok_or_else(|| Error::config(format!("recipe `{}` needs `data = <csv path>`", recipe.name)))?;
            data::load_csv(path, &recipe)?
        }
    };
    let ds = if cfg.monotone.is_empty() {
        ds
    } else {
        ds.with_monotone(&cfg.monotone)?
    };
    Ok((ds, recipe, report))
}

fn task_metrics(out: &mut Metrics, prefix: &str, model: &MonotoneModel, ds: &Dataset) -> Result<()> {
    let st = ds
        .standardization()
        .ok_or_else(|| Error::State("metrics need standardized data".into()))?;
    let pred = optim::predict_all(model, ds)?;
    match ds.task() {
        TaskKind::Regression => {
            let n = ds.len() as f64;
            let mse = pred
                .iter()
                .zip(ds.targets())
                .map(|(p, y)| {
                    let e = st.unstandardize_target(*p) - st.unstandardize_target(*y);
                    e * e
                })
                .sum::<f64>()
                / n;
            out.push_f(&format!("{prefix}_mse"), mse);
            out.push_f(&format!("{prefix}_rmse"), mse.sqrt());
        }
        TaskKind::Binary | TaskKind::Multiclass => {
            let correct = pred
                .iter()
                .zip(ds.targets())
                .filter(|(p, y)| (**p > 0.0) == (**y == 1.0))
                .count();
            out.push_f(&format!("{prefix}_accuracy"), correct as f64 / ds.len() as f64);
            let (bce, _) = optim::loss_and_grad(LossKind::BceWithLogits, &pred, ds.targets())?;
            out.push_f(&format!("{prefix}_bce"), bce);
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<f64>,
    pub metrics: Metrics,
    pub certify: CertifyReport,
    pub output: PathBuf,
}

/// Loads the data, trains, and writes the checkpoint, loss history, metrics,
/// certify report (and, for synthetic recipes, the generated data) into the
/// output directory.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (raw, recipe, report) = load_dataset(cfg)?;
    if raw.task() == TaskKind::Multiclass {
        return Err(Error::config("multiclass targets need a vector-valued model; only scalar outputs are supported"));
    }
    let seed = cfg.train.seed;
    let (train_raw, test_raw) = raw.split(cfg.train_fraction, seed)?;
    if train_raw.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let train = train_raw.standardize();
    let params = train.standardization().expect("standardized").clone();
    let test = test_raw.apply_standardization(&params);

    let shape = NetworkShape {
        input_dim: raw.width(),
        hidden: cfg.hidden.clone(),
        output_dim: 1,
        activation: cfg.activation,
    };
    let mut init_rng = Rng::new(seed).substream(1);
    let core = Network::init(&shape, cfg.scheme, cfg.mode, cfg.lambda, &mut init_rng)?;
    let model = MonotoneModel::new(core, raw.mask().clone())?;
    let (model, history) = optim::fit(model, &train, &cfg.train)?;

    let meta = ModelMeta {
        recipe: cfg.recipe.clone(),
        task: raw.task(),
        target: recipe.target.clone(),
        feature_names: raw.feature_names().to_vec(),
        standardization: params,
        medians: train_raw.medians(),
        ranges: train_raw.feature_box(0.0),
    };
    let checkpoint = Checkpoint::new(model, meta)?;
    let certify = verify::certify(checkpoint.model.core());

    let mut metrics = Metrics::default();
    metrics.push("recipe", &recipe.name);
    metrics.push("task", raw.task().as_str());
    metrics.push("seed", seed);
    metrics.push("epochs", cfg.train.epochs);
    metrics.push("parameters", checkpoint.model.core().parameter_count());
    metrics.push("rows_dropped", report.dropped_missing + report.dropped_malformed);
    metrics.push("train_rows", train.len());
    metrics.push("test_rows", test.len());
    metrics.push_f("lambda", cfg.lambda);
    metrics.push_f("certificate", certify.certificate);
    metrics.push_f("final_train_loss", *history.last().expect("epochs ≥ 1"));
    task_metrics(&mut metrics, "train", &checkpoint.model, &train)?;
    if !test.is_empty() {
        task_metrics(&mut metrics, "test", &checkpoint.model, &test)?;
    }

    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    checkpoint.save(out.join(CHECKPOINT_FILE))?;
    let mut hist = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(hist, "{},{l:.16e}", i + 1);
    }
    write(HISTORY_FILE, hist)?;
    write(METRICS_FILE, metrics.to_text())?;
    write(CERTIFY_FILE, certify.to_string())?;
    if recipe.is_synthetic() {
        write(DATA_FILE, raw.to_csv(&recipe.target))?;
    }
    Ok(TrainOutcome {
        checkpoint,
        history,
        metrics,
        certify,
        output: out.clone(),
    })
}

/// Loads `data` with the checkpoint's recipe (or `recipe`) and lines its
/// columns up with the checkpoint's features. One-hot levels absent from
/// the file become zero columns.
pub fn load_for_checkpoint(ckpt: &Checkpoint, data: &Path, recipe: Option<&str>) -> Result<Dataset> {
    let mut recipe = resolve_recipe(recipe.unwrap_or(&ckpt.meta.recipe))?;
    recipe.expected_rows = None;
    recipe.target_quantile = None;
    recipe.monotone.clear();
    let (ds, _) = data::load_csv(data, &recipe)?;
    let names = &ckpt.meta.feature_names;
    let mapping: Vec<usize> = ds
        .feature_names()
        .iter()
        .map(|f| {
            names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| Error::shape(format!("data column `{f}` is not a feature of the checkpoint")))
        })
        .collect::<Result<_>>()?;
    let rows = ds
        .rows()
        .map(|r| {
            let mut row = vec![0.0; names.len()];
            for (v, &j) in r.iter().zip(&mapping) {
                row[j] = *v;
            }
            row
        })
        .collect();
    let aligned = Dataset::new(
        names.clone(),
        rows,
        ds.targets().to_vec(),
        ckpt.meta.task,
        ckpt.model.mask().clone(),
    )?;
    Ok(aligned.apply_standardization(&ckpt.meta.standardization))
}

pub fn evaluate(ckpt: &Checkpoint, data: &Path, recipe: Option<&str>) -> Result<Metrics> {
    let ds = load_for_checkpoint(ckpt, data, recipe)?;
    if ds.is_empty() {
        return Err(Error::Data("no usable rows to evaluate".into()));
    }
    let mut m = Metrics::default();
    m.push("rows", ds.len());
    task_metrics(&mut m, "eval", &ckpt.model, &ds)?;
    Ok(m)
}

pub fn certify(ckpt: &Checkpoint) -> CertifyReport {
    verify::certify(ckpt.model.core())
}

fn expand(lo: f64, hi: f64) -> (f64, f64) {
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - BOX_EXPANSION * span, hi + BOX_EXPANSION * span)
}

/// Audit over the data range (from `data`, else the stored training range)
/// widened by [`BOX_EXPANSION`] on each side. The box is reported in the
/// model's standardized units.
pub fn audit(ckpt: &Checkpoint, data: Option<&Path>, recipe: Option<&str>, trials: usize, seed: u64) -> Result<AuditReport> {
    let raw_ranges = match data {
        Some(path) => {
            let ds = load_for_checkpoint(ckpt, path, recipe)?.unstandardized();
            if ds.is_empty() {
                return Err(Error::Data("no usable rows to derive the sampling box".into()));
            }
            ds.feature_box(0.0)
        }
        None => ckpt.meta.ranges.clone(),
    };
    let st = &ckpt.meta.standardization;
    let bounds = raw_ranges
        .iter()
        .enumerate()
        .map(|(i, (lo, hi))| {
            let (lo, hi) = expand(*lo, *hi);
            let (m, s) = (st.feature_mean[i], st.feature_scale[i]);
            ((lo - m) / s, (hi - m) / s)
        })
        .collect();
    verify::audit_monotonicity(&ckpt.model, &SampleBox::new(bounds)?, trials, seed)
}

/// `(x, f)` pairs sweeping raw feature `feature` over `[min, max]` with the
/// other features at their training medians. Missing bounds default to the
/// training range widened by [`BOX_EXPANSION`].
pub fn curve(ckpt: &Checkpoint, feature: usize, min: Option<f64>, max: Option<f64>, steps: usize) -> Result<Vec<(f64, f64)>> {
    let width = ckpt.meta.feature_names.len();
    if feature >= width {
        return Err(Error::Range(format!("feature index {feature} out of range (model has {width} features)")));
    }
    if steps == 0 {
        return Err(Error::Range("a curve needs at least one step".into()));
    }
    let (dlo, dhi) = expand(ckpt.meta.ranges[feature].0, ckpt.meta.ranges[feature].1);
    let (lo, hi) = (min.unwrap_or(dlo), max.unwrap_or(dhi));
    if !(lo.is_finite() && hi.is_finite()) || (steps > 1 && !(lo < hi)) {
        return Err(Error::Range(format!("curve bounds must satisfy min < max, got [{lo}, {hi}]")));
    }
    let mut row = ckpt.meta.medians.clone();
    Ok((0..steps)
        .map(|k| {
            let x = if steps == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (steps - 1) as f64
            };
            row[feature] = x;
            (x, ckpt.predict_raw(&row))
        })
        .collect())
}

pub fn curve_csv(feature_name: &str, points: &[(f64, f64)]) -> String {
    let mut out = format!("{feature_name},f\n");
    for (x, f) in points {
        let _ = writeln!(out, "{x:.16e},{f:.16e}");
    }
    out
}
