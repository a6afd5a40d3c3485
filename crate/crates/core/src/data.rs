//! Tabular data: CSV ingestion driven by recipes, standardization, splits,
//! and the synthetic generators.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::monotone::{Direction, MonotoneMask};
use crate::tensor::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Binary,
    Multiclass,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Regression => "regression",
            TaskKind::Binary => "binary",
            TaskKind::Multiclass => "multiclass",
        }
    }

    pub fn is_classification(self) -> bool {
        self != TaskKind::Regression
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(TaskKind::Regression),
            "binary" => Ok(TaskKind::Binary),
            "multiclass" => Ok(TaskKind::Multiclass),
            _ => Err(Error::config(format!("unknown task kind `{s}`"))),
        }
    }
}

/// Affine maps `x ↦ (x − mean) / scale` for features and (regression only)
/// the target. Scales are strictly positive, so orderings survive.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl Standardization {
    pub fn identity(features: usize) -> Self {
        Self {
            feature_mean: vec![0.0; features],
            feature_scale: vec![1.0; features],
            target_mean: 0.0,
            target_scale: 1.0,
        }
    }

    pub fn features(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn unstandardize_features(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_scale
    }

    pub fn unstandardize_target(&self, y: f64) -> f64 {
        y * self.target_scale + self.target_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    features: Vec<f64>,
    targets: Vec<f64>,
    task: TaskKind,
    mask: MonotoneMask,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        task: TaskKind,
        mask: MonotoneMask,
    ) -> Result<Self> {
        let width = feature_names.len();
        if width == 0 {
            return Err(Error::Data("dataset needs at least one feature".into()));
        }
        if mask.len() != width {
            return Err(Error::shape("monotone mask length differs from feature count"));
        }
        if rows.len() != targets.len() {
            return Err(Error::shape("row count differs from target count"));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::shape(format!("row {i} has the wrong width")));
        }
        let features = rows.concat();
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        if task.is_classification() && targets.iter().any(|y| *y < 0.0 || y.fract() != 0.0) {
            return Err(Error::Data("class labels must be non-negative integers".into()));
        }
        if task == TaskKind::Binary && targets.iter().any(|y| *y > 1.0) {
            return Err(Error::Data("binary targets must be 0 or 1".into()));
        }
        Ok(Self {
            feature_names,
            features,
            targets,
            task,
            mask,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.width())
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn mask(&self) -> &MonotoneMask {
        &self.mask
    }

    /// Replaces the monotone set; every named column must be a feature.
    pub fn with_monotone(mut self, monotone: &[(String, Direction)]) -> Result<Self> {
        let mut dirs = vec![Direction::Free; self.width()];
        for (name, dir) in monotone {
            let i = self
                .feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::Recipe(format!("monotone column `{name}` is not a feature")))?;
            dirs[i] = *dir;
        }
        self.mask = MonotoneMask::new(dirs);
        Ok(self)
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Fits standardization parameters on this dataset and applies them.
    /// Constant columns get scale 1. Regression targets are standardized too.
    pub fn standardize(&self) -> Dataset {
        let raw = self.unstandardized();
        raw.standardize_raw()
    }

    fn standardize_raw(&self) -> Dataset {
        let n = self.len().max(1) as f64;
        let w = self.width();
        let mut mean = vec![0.0; w];
        for row in self.rows() {
            mean.iter_mut().zip(row).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; w];
        for row in self.rows() {
            var.iter_mut()
                .zip(row.iter().zip(&mean))
                .for_each(|(v, (x, m))| *v += (x - m) * (x - m) / n);
        }
        let scale = var.into_iter().map(positive_scale).collect();
        let (target_mean, target_scale) = if self.task == TaskKind::Regression {
            let tm = self.targets.iter().sum::<f64>() / n;
            let tv = self.targets.iter().map(|y| (y - tm) * (y - tm)).sum::<f64>() / n;
            (tm, positive_scale(tv))
        } else {
            (0.0, 1.0)
        };
        self.apply_standardization(&Standardization {
            feature_mean: mean,
            feature_scale: scale,
            target_mean,
            target_scale,
        })
    }

    /// Applies previously fitted parameters (e.g. train-split ones to a test
    /// split). Replaces any standardization already applied.
    pub fn apply_standardization(&self, params: &Standardization) -> Dataset {
        let raw = self.unstandardized();
        let features = raw.rows().flat_map(|r| params.features(r)).collect();
        let targets = raw.targets.iter().map(|y| params.target(*y)).collect();
        Dataset {
            features,
            targets,
            standardization: Some(params.clone()),
            ..raw
        }
    }

    /// The dataset in original units.
    pub fn unstandardized(&self) -> Dataset {
        match &self.standardization {
            None => self.clone(),
            Some(p) => Dataset {
                features: self.rows().flat_map(|r| p.unstandardize_features(r)).collect(),
                targets: self.targets.iter().map(|y| p.unstandardize_target(*y)).collect(),
                standardization: None,
                ..self.clone()
            },
        }
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().flat_map(|&i| self.row(i).to_vec()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            ..self.clone()
        }
    }

    /// Shuffled split into `(train, test)` with `fraction` of the rows in
    /// train. Classification tasks are stratified by class.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Range(format!("split fraction {fraction} not in [0, 1]")));
        }
        let mut rng = Rng::new(seed);
        let groups: Vec<Vec<usize>> = if self.task.is_classification() {
            let mut by_class: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (i, y) in self.targets.iter().enumerate() {
                by_class.entry(*y as u64).or_default().push(i);
            }
            by_class.into_values().collect()
        } else {
            vec![(0..self.len()).collect()]
        };
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for mut g in groups {
            rng.shuffle(&mut g);
            let k = (fraction * g.len() as f64).round() as usize;
            train.extend_from_slice(&g[..k]);
            test.extend_from_slice(&g[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        rng.shuffle(&mut train);
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Per-feature `[min, max]` widened by `expand·(max − min)` on each side,
    /// in the dataset's current units.
    pub fn feature_box(&self, expand: f64) -> Vec<(f64, f64)> {
        (0..self.width())
            .map(|k| {
                let (lo, hi) = self
                    .rows()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[k]), hi.max(r[k])));
                let span = if hi > lo { hi - lo } else { 1.0 };
                (lo - expand * span, hi + expand * span)
            })
            .collect()
    }

    pub fn medians(&self) -> Vec<f64> {
        (0..self.width())
            .map(|k| {
                let mut col: Vec<f64> = self.rows().map(|r| r[k]).collect();
                col.sort_by(f64::total_cmp);
                match col.len() {
                    0 => 0.0,
                    n if n % 2 == 1 => col[n / 2],
                    n => 0.5 * (col[n / 2 - 1] + col[n / 2]),
                }
            })
            .collect()
    }

    /// Feature columns then the target, 17 significant digits.
    pub fn to_csv(&self, target_name: &str) -> String {
        let mut out = String::new();
        out.push_str(&self.feature_names.join(","));
        out.push(',');
        out.push_str(target_name);
        out.push('\n');
        for (row, y) in self.rows().zip(&self.targets) {
            for x in row {
                let _ = write!(out, "{x:.16e},");
            }
            let _ = writeln!(out, "{y:.16e}");
        }
        out
    }
}

fn positive_scale(var: f64) -> f64 {
    let s = var.sqrt();
    if s > 1e-12 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Where to find a dataset and how to turn its columns into features.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecipe {
    pub name: String,
    /// Expected file name, or `synthetic:<generator>`.
    pub source: String,
    pub expected_rows: Option<usize>,
    pub target: String,
    pub task: TaskKind,
    /// Target value mapped to class 1 for string-labelled binary targets.
    pub positive_label: Option<String>,
    /// Explicit feature list; when empty, every column except the target and
    /// `drop` is used.
    pub features: Vec<String>,
    pub drop: Vec<String>,
    pub categorical: Vec<String>,
    pub monotone: Vec<(String, Direction)>,
    pub missing: Vec<String>,
    /// Keep only rows whose target is at most this quantile.
    pub target_quantile: Option<f64>,
    pub notes: Vec<String>,
}

impl DatasetRecipe {
    pub fn new(name: &str, source: &str, target: &str, task: TaskKind) -> Self {
        Self {
            name: name.into(),
            source: source.into(),
            expected_rows: None,
            target: target.into(),
            task,
            positive_label: None,
            features: Vec::new(),
            drop: Vec::new(),
            categorical: Vec::new(),
            monotone: Vec::new(),
            missing: vec!["".into(), "?".into(), "NA".into()],
            target_quantile: None,
            notes: Vec::new(),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.source.starts_with("synthetic:")
    }

    /// Parses the flat `key = value` recipe format. Repeated `monotone`,
    /// `note` entries accumulate; list keys take comma-separated values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, (usize, String)> = BTreeMap::new();
        let mut monotone = Vec::new();
        let mut notes = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim().to_string());
            match key {
                "monotone" => {
                    let (col, dir) = value
                        .rsplit_once(':')
                        .ok_or_else(|| Error::parse(line_no, "monotone entries look like `column:+1`"))?;
                    let dir: Direction = dir
                        .trim()
                        .parse()
                        .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
                    if dir == Direction::Free {
                        return Err(Error::parse(line_no, "monotone direction must be +1 or -1"));
                    }
                    monotone.push((col.trim().to_string(), dir));
                }
                "note" => notes.push(value),
                "name" | "source" | "rows" | "target" | "task" | "positive_label" | "features"
                | "drop" | "categorical" | "missing" | "target_quantile" => {
                    if fields.insert(key, (line_no, value)).is_some() {
                        return Err(Error::parse(line_no, format!("duplicate key `{key}`")));
                    }
                }
                other => return Err(Error::parse(line_no, format!("unknown recipe key `{other}`"))),
            }
        }
        let take = |k: &str| fields.get(k).cloned();
        let required = |k: &str| {
            take(k).ok_or_else(|| Error::Recipe(format!("recipe is missing `{k}`")))
        };
        let (_, name) = required("name")?;
        let (_, source) = required("source")?;
        let (_, target) = required("target")?;
        let (task_line, task) = required("task")?;
        let task = task
            .parse()
            .map_err(|e: Error| Error::parse(task_line, e.to_string()))?;
        let mut recipe = DatasetRecipe::new(&name, &source, &target, task);
        if let Some((line, rows)) = take("rows") {
            recipe.expected_rows = Some(
                rows.parse()
                    .map_err(|_| Error::parse(line, format!("`rows` must be an integer, got `{rows}`")))?,
            );
        }
        if let Some((line, q)) = take("target_quantile") {
            let q: f64 = q
                .parse()
                .map_err(|_| Error::parse(line, "`target_quantile` must be a number"))?;
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::parse(line, "`target_quantile` must lie in (0, 1]"));
            }
            recipe.target_quantile = Some(q);
        }
        recipe.positive_label = take("positive_label").map(|(_, v)| v);
        let list = |k: &str| take(k).map(|(_, v)| split_list(&v));
        recipe.features = list("features").unwrap_or_default();
        recipe.drop = list("drop").unwrap_or_default();
        recipe.categorical = list("categorical").unwrap_or_default();
        if let Some(m) = take("missing") {
            recipe.missing = m.1.split(',').map(|s| s.trim().to_string()).collect();
        }
        recipe.monotone = monotone;
        recipe.notes = notes;
        Ok(recipe)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "source = {}", self.source);
        if let Some(r) = self.expected_rows {
            let _ = writeln!(out, "rows = {r}");
        }
        let _ = writeln!(out, "target = {}", self.target);
        let _ = writeln!(out, "task = {}", self.task.as_str());
        if let Some(p) = &self.positive_label {
            let _ = writeln!(out, "positive_label = {p}");
        }
        for (key, list) in [
            ("features", &self.features),
            ("drop", &self.drop),
            ("categorical", &self.categorical),
        ] {
            if !list.is_empty() {
                let _ = writeln!(out, "{key} = {}", list.join(","));
            }
        }
        let _ = writeln!(out, "missing = {}", self.missing.join(","));
        if let Some(q) = self.target_quantile {
            let _ = writeln!(out, "target_quantile = {q}");
        }
        for (col, dir) in &self.monotone {
            let _ = writeln!(out, "monotone = {col}:{dir}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note = {n}");
        }
        out
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Outcome counters of a CSV load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_missing: usize,
    pub dropped_malformed: usize,
    pub dropped_by_filter: usize,
    pub warnings: Vec<String>,
}

pub fn load_csv(path: impl AsRef<Path>, recipe: &DatasetRecipe) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, recipe)
}

enum Raw {
    Num(f64),
    Level(String),
}

enum Cell {
    Missing,
    Value(f64),
    Bad,
}

/// Parses CSV text (header row, comma-delimited) according to `recipe`.
pub fn parse_csv(reader: impl Read, recipe: &DatasetRecipe) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Recipe(format!("column `{name}` not found in header")))
    };
    let target_idx = col(&recipe.target)?;
    for (m, _) in &recipe.monotone {
        col(m)?;
    }
    for c in recipe.drop.iter().chain(&recipe.categorical) {
        col(c)?;
    }
    let feature_cols: Vec<usize> = if recipe.features.is_empty() {
        (0..header.len())
            .filter(|&i| i != target_idx && !recipe.drop.contains(&header[i]))
            .collect()
    } else {
        recipe.features.iter().map(|f| col(f)).collect::<Result<_>>()?
    };
    if feature_cols.is_empty() {
        return Err(Error::Recipe("recipe selects no feature columns".into()));
    }
    let mut seen = BTreeSet::new();
    if let Some(c) = feature_cols.iter().find(|c| !seen.insert(**c)) {
        return Err(Error::Recipe(format!("feature `{}` listed twice", header[*c])));
    }
    if let Some((m, _)) = recipe
        .monotone
        .iter()
        .find(|(m, _)| !feature_cols.iter().any(|&c| header[c] == *m))
    {
        return Err(Error::Recipe(format!("monotone column `{m}` is not a feature")));
    }
    if let Some((m, _)) = recipe.monotone.iter().find(|(m, _)| recipe.categorical.contains(m)) {
        return Err(Error::Recipe(format!("monotone column `{m}` cannot be categorical")));
    }
    let is_cat: Vec<bool> = feature_cols
        .iter()
        .map(|&c| recipe.categorical.contains(&header[c]))
        .collect();

    let mut report = LoadReport::default();
    let mut records: Vec<(Vec<Raw>, f64)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let line_no = line + 2;
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.dropped_malformed += 1;
                report.warnings.push(format!("line {line_no}: {e}"));
                continue;
            }
        };
        if rec.len() != header.len() {
            report.dropped_malformed += 1;
            report.warnings.push(format!(
                "line {line_no}: expected {} fields, found {}",
                header.len(),
                rec.len()
            ));
            continue;
        }
        let target = match parse_target(rec.get(target_idx).unwrap_or(""), recipe) {
            Cell::Value(v) => v,
            Cell::Missing => {
                report.dropped_missing += 1;
                continue;
            }
            Cell::Bad => {
                report.dropped_malformed += 1;
                report
                    .warnings
                    .push(format!("line {line_no}: unparseable target `{}`", &rec[target_idx]));
                continue;
            }
        };
        let mut cells = Vec::with_capacity(feature_cols.len());
        let mut outcome = Cell::Value(0.0);
        for (&c, &cat) in feature_cols.iter().zip(&is_cat) {
            let raw = rec[c].trim();
            if recipe.missing.iter().any(|m| m == raw) {
                outcome = Cell::Missing;
                break;
            }
            if cat {
                cells.push(Raw::Level(raw.to_string()));
            } else {
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => cells.push(Raw::Num(v)),
                    _ => {
                        report
                            .warnings
                            .push(format!("line {line_no}: unparseable value `{raw}` in `{}`", header[c]));
                        outcome = Cell::Bad;
                        break;
                    }
                }
            }
        }
        match outcome {
            Cell::Missing => report.dropped_missing += 1,
            Cell::Bad => report.dropped_malformed += 1,
            Cell::Value(_) => records.push((cells, target)),
        }
    }
    if let Some(expected) = recipe.expected_rows {
        if report.rows_read != expected {
            return Err(Error::Recipe(format!(
                "recipe `{}` expects {expected} data rows, file has {}",
                recipe.name, report.rows_read
            )));
        }
    }
    if let Some(q) = recipe.target_quantile {
        let mut ys: Vec<f64> = records.iter().map(|r| r.1).collect();
        ys.sort_by(f64::total_cmp);
        if let Some(&threshold) = ys.get(((q * ys.len() as f64).ceil() as usize).saturating_sub(1)) {
            let before = records.len();
            records.retain(|r| r.1 <= threshold);
            report.dropped_by_filter = before - records.len();
        }
    }

    // One-hot levels in sorted order for a deterministic layout.
    let levels: Vec<Vec<String>> = is_cat
        .iter()
        .enumerate()
        .map(|(j, &cat)| {
            if !cat {
                return Vec::new();
            }
            let set: BTreeSet<String> = records
                .iter()
                .filter_map(|(cells, _)| match &cells[j] {
                    Raw::Level(l) => Some(l.clone()),
                    Raw::Num(_) => None,
                })
                .collect();
            set.into_iter().collect()
        })
        .collect();
    let mut names = Vec::new();
    let mut directions = Vec::new();
    for (j, &c) in feature_cols.iter().enumerate() {
        if is_cat[j] {
            for level in &levels[j] {
                names.push(format!("{}={level}", header[c]));
                directions.push(Direction::Free);
            }
        } else {
            names.push(header[c].clone());
            let dir = recipe
                .monotone
                .iter()
                .find(|(m, _)| *m == header[c])
                .map_or(Direction::Free, |(_, d)| *d);
            directions.push(dir);
        }
    }
    let mut rows = Vec::with_capacity(records.len());
    let mut targets = Vec::with_capacity(records.len());
    for (cells, y) in records {
        let mut row = Vec::with_capacity(names.len());
        for (j, cell) in cells.into_iter().enumerate() {
            match cell {
                Raw::Num(v) => row.push(v),
                Raw::Level(level) => {
                    row.extend(levels[j].iter().map(|l| if *l == level { 1.0 } else { 0.0 }))
                }
            }
        }
        rows.push(row);
        targets.push(y);
    }
    if names.is_empty() {
        return Err(Error::Data("no feature columns survived encoding".into()));
    }
    let ds = Dataset::new(names, rows, targets, recipe.task, MonotoneMask::new(directions))?;
    Ok((ds, report))
}

fn parse_target(raw: &str, recipe: &DatasetRecipe) -> Cell {
    let raw = raw.trim();
    if recipe.missing.iter().any(|m| m == raw) {
        return Cell::Missing;
    }
    if let Some(pos) = &recipe.positive_label {
        return Cell::Value(if raw == pos { 1.0 } else { 0.0 });
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => match recipe.task {
            TaskKind::Regression => Cell::Value(v),
            TaskKind::Binary if v == 0.0 || v == 1.0 => Cell::Value(v),
            TaskKind::Multiclass if v >= 0.0 && v.fract() == 0.0 => Cell::Value(v),
            _ => Cell::Bad,
        },
        _ => Cell::Bad,
    }
}

/// Recipes for the bundled benchmark definitions and synthetic generators.
/// Monotone columns not named explicitly by the benchmark authors are
/// defaults that can be overridden with a recipe file.
pub fn builtin_recipes() -> Vec<DatasetRecipe> {
    let mut out = Vec::new();

    let mut r = DatasetRecipe::new("autompg", "auto-mpg.csv", "mpg", TaskKind::Regression);
    r.expected_rows = Some(398);
    r.drop = vec!["car_name".into()];
    r.monotone = vec![
        ("weight".into(), Direction::Decreasing),
        ("displacement".into(), Direction::Decreasing),
        ("horsepower".into(), Direction::Decreasing),
    ];
    r.notes = vec![
        "UCI Auto MPG: 7 numeric features, the car name is not used".into(),
        "6 rows with missing horsepower are dropped, leaving 392".into(),
    ];
    out.push(r);

    let mut r = DatasetRecipe::new("heart", "heart.csv", "target", TaskKind::Binary);
    r.expected_rows = Some(303);
    r.categorical = vec!["cp".into(), "restecg".into(), "slope".into(), "thal".into()];
    r.monotone = vec![
        ("trestbps".into(), Direction::Increasing),
        ("chol".into(), Direction::Increasing),
    ];
    r.notes = vec![
        "UCI Cleveland heart disease, 13 features; target is 1 when num > 0".into(),
        "default monotone set: resting blood pressure and cholesterol".into(),
    ];
    out.push(r);

    let mut r = DatasetRecipe::new("compas", "compas.csv", "two_year_recid", TaskKind::Binary);
    r.expected_rows = Some(6172);
    r.categorical = vec!["race".into()];
    r.monotone = vec![
        ("priors_count".into(), Direction::Increasing),
        ("juv_fel_count".into(), Direction::Increasing),
        ("juv_misd_count".into(), Direction::Increasing),
        ("juv_other_count".into(), Direction::Increasing),
    ];
    r.notes = vec![
        "ProPublica two-year recidivism, standard filtering to 6172 rows".into(),
        "13 features: age, sex, charge degree, race one-hot (6), 4 monotone counts".into(),
    ];
    out.push(r);

    let mut r = DatasetRecipe::new("loan", "loan.csv", "loan_status", TaskKind::Binary);
    r.positive_label = Some("Charged Off".into());
    r.monotone = vec![
        ("pub_rec_bankruptcies".into(), Direction::Increasing),
        ("dti".into(), Direction::Increasing),
        ("fico_score".into(), Direction::Decreasing),
        ("emp_length".into(), Direction::Decreasing),
        ("annual_inc".into(), Direction::Decreasing),
    ];
    r.notes = vec![
        "Lending Club loans, 28 numeric features; emp_length converted to years".into(),
        "the public Kaggle dump is a superset of the benchmark version".into(),
    ];
    out.push(r);

    let mut r = DatasetRecipe::new("blogfeedback", "blogfeedback.csv", "target", TaskKind::Regression);
    r.target_quantile = Some(0.9);
    r.monotone = ["f50", "f51", "f52", "f53", "f55", "f56", "f57", "f58"]
        .iter()
        .map(|c| (c.to_string(), Direction::Increasing))
        .collect();
    r.notes = vec![
        "UCI BlogFeedback training file with a header f0..f279,target prepended".into(),
        "only the 90% of rows with the smallest targets are kept".into(),
    ];
    out.push(r);

    let mut r = DatasetRecipe::new("toy", "synthetic:toy", "y", TaskKind::Regression);
    r.monotone = vec![("x".into(), Direction::Increasing)];
    r.notes = vec!["1-D monotone ground truth with heteroskedastic noise".into()];
    out.push(r);

    let mut r = DatasetRecipe::new("memorization", "synthetic:memorization", "label", TaskKind::Binary);
    r.monotone = vec![("goodness".into(), Direction::Decreasing)];
    r.notes = vec![
        "random features with random labels plus a goodness feature in [0, 1]".into(),
        "rows with goodness above the critical value are labelled 0".into(),
    ];
    out.push(r);

    out
}

pub fn builtin_recipe(name: &str) -> Option<DatasetRecipe> {
    builtin_recipes().into_iter().find(|r| r.name == name)
}

/// Monotone ground truth of the toy problem.
pub fn toy_truth(x: f64) -> f64 {
    x + 0.6 * (2.0 * x).tanh()
}

/// Noisy 1-D regression set on `[-1, 1]`. Realization 0 draws `x`
/// uniformly; realization 1 piles the data up near the middle and puts the
/// largest noise at the edges of the support.
pub fn toy_dataset(realization: u32, samples: usize, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed).substream(u64::from(realization));
    let mut rows = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (x, sigma) = match realization {
            0 => {
                let x = rng.uniform_in(-1.0, 1.0);
                (x, 0.05 + 0.25 * (x + 1.0))
            }
            1 => {
                let x = rng.uniform_in(-1.0, 1.0) * 0.5 + rng.uniform_in(-1.0, 1.0) * 0.5;
                (x, 0.1 + 0.4 * x.abs())
            }
            other => return Err(Error::config(format!("toy realization {other} is not 0 or 1"))),
        };
        rows.push(vec![x]);
        ys.push(toy_truth(x) + sigma * rng.normal());
    }
    Dataset::new(
        vec!["x".into()],
        rows,
        ys,
        TaskKind::Regression,
        MonotoneMask::new(vec![Direction::Increasing]),
    )
}

/// Random-label memorization set: `features` standard-normal columns with
/// fair-coin labels, plus a trailing `goodness` column uniform on `[0, 1]`.
/// Rows with goodness above `critical` are relabelled 0.
pub fn memorization_dataset(samples: usize, features: usize, critical: f64, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed);
    let mut rows = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut row: Vec<f64> = (0..features).map(|_| rng.normal()).collect();
        let label = if rng.uniform() < 0.5 { 0.0 } else { 1.0 };
        let goodness = rng.uniform();
        row.push(goodness);
        rows.push(row);
        labels.push(if goodness > critical { 0.0 } else { label });
    }
    let mut names: Vec<String> = (0..features).map(|i| format!("f{i}")).collect();
    names.push("goodness".into());
    let mut dirs = vec![Direction::Free; features];
    dirs.push(Direction::Decreasing);
    Dataset::new(names, rows, labels, TaskKind::Binary, MonotoneMask::new(dirs))
}
