//! Run configuration: flat `key = value` text, `#` comments.
//!
//! Relative paths are resolved against the directory holding the config
//! file. `LMN_SEED` in the environment overrides `seed`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::monotone::Direction;
use crate::network::ActivationKind;
use crate::norms::{ConstraintMode, NormScheme};
use crate::optim::{LossKind, TrainConfig};

pub const SEED_ENV: &str = "LMN_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Built-in recipe name or path to a recipe file.
    pub recipe: String,
    /// CSV file; unused by synthetic recipes.
    pub data: Option<PathBuf>,
    pub output: PathBuf,
    pub hidden: Vec<usize>,
    pub activation: ActivationKind,
    pub lambda: f64,
    pub scheme: NormScheme,
    pub mode: ConstraintMode,
    pub train: TrainConfig,
    pub train_fraction: f64,
    /// Replaces the recipe's monotone set when non-empty.
    pub monotone: Vec<(String, Direction)>,
    pub samples: usize,
    pub realization: u32,
    pub noise_features: usize,
    pub critical: f64,
}

impl RunConfig {
    pub fn new(recipe: &str, output: impl Into<PathBuf>) -> Self {
        Self {
            recipe: recipe.into(),
            data: None,
            output: output.into(),
            hidden: vec![16, 16],
            activation: ActivationKind::GroupSort(2),
            lambda: 1.0,
            scheme: NormScheme::OneNormColumnwise,
            mode: ConstraintMode::ForwardNormalize,
            train: TrainConfig::default(),
            train_fraction: 0.8,
            monotone: Vec::new(),
            samples: 200,
            realization: 0,
            noise_features: 20,
            critical: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.hidden.iter().any(|w| *w == 0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        if let ActivationKind::GroupSort(g) = self.activation {
            if g == 0 {
                return Err(Error::config("group size must be positive"));
            }
            if let Some(w) = self.hidden.iter().find(|w| *w % g != 0) {
                return Err(Error::config(format!("hidden width {w} is not divisible by group size {g}")));
            }
        }
        if !(0.0..=1.0).contains(&self.train_fraction) || self.train_fraction == 0.0 {
            return Err(Error::config("train_fraction must lie in (0, 1]"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples must be positive"));
        }
        self.train.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.train.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut cfg = RunConfig::new("", base.join("out"));
        let mut have_recipe = false;
        let mut group = 2usize;
        let mut activation = "groupsort".to_string();
        let mut activation_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let n = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key != "monotone" {
                if let Some(first) = seen.insert(key.to_string(), n) {
                    return Err(Error::parse(n, format!("`{key}` already set on line {first}")));
                }
            }
            let bad = |what: &str| Error::parse(n, format!("`{key}`: expected {what}, got `{value}`"));
            match key {
                "recipe" => {
                    cfg.recipe = value.to_string();
                    have_recipe = true;
                }
                "data" => cfg.data = Some(base.join(value)),
                "output" => cfg.output = base.join(value),
                "hidden" => {
                    cfg.hidden = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|w| w.trim().parse::<usize>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad("comma-separated widths"))?
                    }
                }
                "activation" => {
                    activation = value.to_string();
                    activation_line = n;
                }
                "group" => group = value.parse().map_err(|_| bad("an integer"))?,
                "lambda" => cfg.lambda = value.parse().map_err(|_| bad("a number"))?,
                "scheme" => cfg.scheme = value.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?,
                "mode" => cfg.mode = value.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?,
                "epochs" => cfg.train.epochs = value.parse().map_err(|_| bad("an integer"))?,
                "batch_size" => {
                    cfg.train.batch_size = match value {
                        "full" | "0" => None,
                        v => Some(v.parse().map_err(|_| bad("an integer or `full`"))?),
                    }
                }
                "lr" => cfg.train.lr = value.parse().map_err(|_| bad("a number"))?,
                "seed" => cfg.train.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                "loss" => cfg.train.loss = value.parse::<LossKind>().map_err(|e| Error::parse(n, e.to_string()))?,
                "shuffle" => cfg.train.shuffle = value.parse().map_err(|_| bad("true or false"))?,
                "train_fraction" => cfg.train_fraction = value.parse().map_err(|_| bad("a number"))?,
                "monotone" => {
                    let (col, dir) = value.rsplit_once(':').ok_or_else(|| bad("`column:+1` or `column:-1`"))?;
                    let dir: Direction = dir.trim().parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
                    cfg.monotone.push((col.trim().to_string(), dir));
                }
                "samples" => cfg.samples = value.parse().map_err(|_| bad("an integer"))?,
                "realization" => cfg.realization = value.parse().map_err(|_| bad("an integer"))?,
                "noise_features" => cfg.noise_features = value.parse().map_err(|_| bad("an integer"))?,
                "critical" => cfg.critical = value.parse().map_err(|_| bad("a number"))?,
                other => return Err(Error::parse(n, format!("unknown key `{other}`"))),
            }
        }
        if !have_recipe {
            return Err(Error::config("config is missing `recipe`"));
        }
        cfg.activation = match activation.as_str() {
            "groupsort" => ActivationKind::GroupSort(group),
            "householder" => ActivationKind::Householder,
            "relu" => ActivationKind::Relu,
            other => return Err(Error::parse(activation_line, format!("unknown activation `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut lines = vec![format!("recipe = {}", self.recipe)];
        if let Some(d) = &self.data {
            lines.push(format!("data = {}", d.display()));
        }
        lines.push(format!("output = {}", self.output.display()));
        let hidden: Vec<String> = self.hidden.iter().map(|w| w.to_string()).collect();
        lines.push(format!("hidden = {}", hidden.join(",")));
        match self.activation {
            ActivationKind::GroupSort(g) => {
                lines.push("activation = groupsort".into());
                lines.push(format!("group = {g}"));
            }
            ActivationKind::Householder => lines.push("activation = householder".into()),
            ActivationKind::Relu => lines.push("activation = relu".into()),
        }
        lines.push(format!("lambda = {}", self.lambda));
        lines.push(format!("scheme = {}", self.scheme));
        lines.push(format!("mode = {}", self.mode));
        lines.push(format!("epochs = {}", self.train.epochs));
        lines.push(format!(
            "batch_size = {}",
            self.train.batch_size.map_or("full".to_string(), |b| b.to_string())
        ));
        lines.push(format!("lr = {}", self.train.lr));
        lines.push(format!("seed = {}", self.train.seed));
        lines.push(format!("loss = {}", self.train.loss));
        lines.push(format!("shuffle = {}", self.train.shuffle));
        lines.push(format!("train_fraction = {}", self.train_fraction));
        for (c, d) in &self.monotone {
            lines.push(format!("monotone = {c}:{d}"));
        }
        lines.push(format!("samples = {}", self.samples));
        lines.push(format!("realization = {}", self.realization));
        lines.push(format!("noise_features = {}", self.noise_features));
        lines.push(format!("critical = {}", self.critical));
        lines.join("\n") + "\n"
    }
}
