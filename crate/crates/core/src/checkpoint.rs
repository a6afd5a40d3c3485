//! Plain-text checkpoints.
//!
//! ```text
//! LMN v1
//! lambda = 2.0000000000000000e0
//! scheme = one-norm-columnwise
//! mode = project-after-step
//! mask = +1,0
//! layers = 2
//! layer = 0
//! shape = 4,2
//! activation = groupsort:2
//! weights = <rows·cols values, row-major>
//! bias = <rows values>
//! ...
//! meta.recipe = toy
//! ...
//! end
//! ```
//!
//! Every float is written with 17 significant digits, which round-trips
//! doubles exactly. Names are percent-escaped (`%`, comma, whitespace) so lists
//! stay comma-separated and no name is changed by trimming.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::activations::ActivationSpec;
use crate::data::{Standardization, TaskKind};
use crate::error::{Error, Result};
use crate::monotone::{Direction, MonotoneMask, MonotoneModel};
use crate::network::{Layer, Network};
use crate::norms::ConstraintPolicy;
use crate::tensor::{Matrix, Vector};

pub const MAGIC: &str = "LMN v1";

/// Everything needed to apply a model to raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub recipe: String,
    pub task: TaskKind,
    pub target: String,
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
    /// Per-feature medians in raw units.
    pub medians: Vec<f64>,
    /// Per-feature `(min, max)` of the training data in raw units.
    pub ranges: Vec<(f64, f64)>,
}

impl ModelMeta {
    /// Metadata for a model used directly on its own input space.
    pub fn bare(input_dim: usize, task: TaskKind) -> Self {
        Self {
            recipe: "none".into(),
            task,
            target: "y".into(),
            feature_names: (0..input_dim).map(|i| format!("x{i}")).collect(),
            standardization: Standardization::identity(input_dim),
            medians: vec![0.0; input_dim],
            ranges: vec![(-1.0, 1.0); input_dim],
        }
    }

    fn width(&self) -> usize {
        self.feature_names.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MonotoneModel,
    pub meta: ModelMeta,
}

impl Checkpoint {
    /// Bakes forward-normalized weights so the stored raw weights certify
    /// on their own.
    pub fn new(mut model: MonotoneModel, meta: ModelMeta) -> Result<Self> {
        let w = meta.width();
        if w != model.input_dim()
            || meta.standardization.feature_mean.len() != w
            || meta.standardization.feature_scale.len() != w
            || meta.medians.len() != w
            || meta.ranges.len() != w
        {
            return Err(Error::shape("checkpoint metadata does not match the model width"));
        }
        if meta.standardization.feature_scale.iter().any(|s| !(*s > 0.0))
            || !(meta.standardization.target_scale > 0.0)
        {
            return Err(Error::Range("standardization scales must be positive".into()));
        }
        model.core_mut().bake();
        Ok(Self { model, meta })
    }

    /// Model output in raw target units for a raw feature row.
    pub fn predict_raw(&self, raw: &[f64]) -> f64 {
        let s = &self.meta.standardization;
        s.unstandardize_target(self.model.predictor().predict(&s.features(raw)))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let core = self.model.core();
        let policy = core.policy();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "lambda = {}", num(policy.lambda));
        let _ = writeln!(out, "scheme = {}", policy.scheme);
        let _ = writeln!(out, "mode = {}", policy.mode);
        let mask: Vec<String> = self.model.mask().directions().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "mask = {}", mask.join(","));
        let _ = writeln!(out, "layers = {}", core.depth());
        for (i, layer) in core.layers().iter().enumerate() {
            let _ = writeln!(out, "layer = {i}");
            let _ = writeln!(out, "shape = {},{}", layer.output_dim(), layer.input_dim());
            let act = match &layer.activation {
                ActivationSpec::Identity => "identity".to_string(),
                ActivationSpec::Relu => "relu".to_string(),
                ActivationSpec::GroupSort { group } => format!("groupsort:{group}"),
                ActivationSpec::Householder { v } => format!("householder:{}", nums(v)),
            };
            let _ = writeln!(out, "activation = {act}");
            let _ = writeln!(out, "weights = {}", nums(layer.weights.as_slice()));
            let _ = writeln!(out, "bias = {}", nums(&layer.bias));
        }
        let m = &self.meta;
        let _ = writeln!(out, "meta.recipe = {}", escape(&m.recipe));
        let _ = writeln!(out, "meta.task = {}", m.task.as_str());
        let _ = writeln!(out, "meta.target = {}", escape(&m.target));
        let names: Vec<String> = m.feature_names.iter().map(|n| escape(n)).collect();
        let _ = writeln!(out, "meta.features = {}", names.join(","));
        let s = &m.standardization;
        let _ = writeln!(out, "meta.feature_mean = {}", nums(&s.feature_mean));
        let _ = writeln!(out, "meta.feature_scale = {}", nums(&s.feature_scale));
        let _ = writeln!(out, "meta.target_mean = {}", num(s.target_mean));
        let _ = writeln!(out, "meta.target_scale = {}", num(s.target_scale));
        let _ = writeln!(out, "meta.median = {}", nums(&m.medians));
        let lo: Vec<f64> = m.ranges.iter().map(|r| r.0).collect();
        let hi: Vec<f64> = m.ranges.iter().map(|r| r.1).collect();
        let _ = writeln!(out, "meta.min = {}", nums(&lo));
        let _ = writeln!(out, "meta.max = {}", nums(&hi));
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        match lines.raw_next() {
            Some((_, MAGIC)) => {}
            Some((n, other)) => return Err(Error::parse(n, format!("expected `{MAGIC}`, found `{other}`"))),
            None => return Err(Error::parse(1, "empty checkpoint")),
        }
        let lambda = lines.number("lambda")?;
        let (n, scheme) = lines.expect("scheme")?;
        let scheme = scheme.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
        let (n, mode) = lines.expect("mode")?;
        let mode = mode.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
        let (n, mask) = lines.expect("mask")?;
        let mask = mask
            .split(',')
            .map(|d| d.trim().parse::<Direction>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::parse(n, e.to_string()))?;
        let (n, depth) = lines.expect("layers")?;
        let depth: usize = depth
            .parse()
            .map_err(|_| Error::parse(n, format!("bad layer count `{depth}`")))?;
        if depth == 0 {
            return Err(Error::parse(n, "a network needs at least one layer"));
        }
        let policy = ConstraintPolicy::new(scheme, mode, lambda, depth).map_err(|e| Error::parse(n, e.to_string()))?;
        let mut layers = Vec::new();
        for i in 0..depth {
            let (n, idx) = lines.expect("layer")?;
            if idx != i.to_string() {
                return Err(Error::parse(n, format!("expected layer {i}, found `{idx}`")));
            }
            let (n, shape) = lines.expect("shape")?;
            let dims = shape
                .split_once(',')
                .and_then(|(r, c)| Some((r.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| Error::parse(n, format!("bad shape `{shape}`")))?;
            let (n, act) = lines.expect("activation")?;
            let activation = parse_activation(act).map_err(|msg| Error::parse(n, msg))?;
            let (n, w) = lines.expect("weights")?;
            let w = parse_nums(w).map_err(|msg| Error::parse(n, msg))?;
            if dims.0.checked_mul(dims.1) != Some(w.len()) {
                return Err(Error::parse(n, format!("{} weights for shape {}x{}", w.len(), dims.0, dims.1)));
            }
            let weights = Matrix::new(dims.0, dims.1, w).map_err(|e| Error::parse(n, e.to_string()))?;
            let (n, b) = lines.expect("bias")?;
            let bias = Vector::new(parse_nums(b).map_err(|msg| Error::parse(n, msg))?)
                .map_err(|e| Error::parse(n, e.to_string()))?;
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
        }
        let structure_line = lines.line;
        let core = Network::new(layers, policy).map_err(|e| Error::parse(structure_line, e.to_string()))?;
        let model = MonotoneModel::new(core, MonotoneMask::new(mask))
            .map_err(|e| Error::parse(structure_line, e.to_string()))?;

        let recipe = unescape(lines.expect("meta.recipe")?.1);
        let (n, task) = lines.expect("meta.task")?;
        let task = task.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
        let target = unescape(lines.expect("meta.target")?.1);
        let feature_names: Vec<String> = lines.expect("meta.features")?.1.split(',').map(unescape).collect();
        let feature_mean = lines.numbers("meta.feature_mean")?;
        let feature_scale = lines.numbers("meta.feature_scale")?;
        let target_mean = lines.number("meta.target_mean")?;
        let target_scale = lines.number("meta.target_scale")?;
        let medians = lines.numbers("meta.median")?;
        let lo = lines.numbers("meta.min")?;
        let hi = lines.numbers("meta.max")?;
        if lo.len() != hi.len() {
            return Err(Error::parse(lines.line, "meta.min and meta.max differ in length"));
        }
        match lines.raw_next() {
            Some((_, "end")) => {}
            Some((n, other)) => return Err(Error::parse(n, format!("expected `end`, found `{other}`"))),
            None => return Err(Error::parse(lines.line + 1, "missing `end`")),
        }
        if let Some((n, extra)) = lines.raw_next() {
            return Err(Error::parse(n, format!("unexpected content after `end`: `{extra}`")));
        }
        let meta = ModelMeta {
            recipe,
            task,
            target,
            feature_names,
            standardization: Standardization {
                feature_mean,
                feature_scale,
                target_mean,
                target_scale,
            },
            medians,
            ranges: lo.into_iter().zip(hi).collect(),
        };
        let end_line = lines.line;
        Checkpoint::new(model, meta).map_err(|e| Error::parse(end_line, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn nums(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

fn parse_nums(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("bad number `{t}`")),
            }
        })
        .collect()
}

fn parse_activation(s: &str) -> std::result::Result<ActivationSpec, String> {
    match s.split_once(':') {
        None if s == "identity" => Ok(ActivationSpec::Identity),
        None if s == "relu" => Ok(ActivationSpec::Relu),
        Some(("groupsort", g)) => g
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|g| *g >= 1)
            .map(|group| ActivationSpec::GroupSort { group })
            .ok_or_else(|| format!("bad group size `{g}`")),
        Some(("householder", v)) => {
            let v = Vector::new(parse_nums(v)?).map_err(|e| e.to_string())?;
            ActivationSpec::householder(v).map_err(|e| e.to_string())
        }
        _ => Err(format!("unknown activation `{s}`")),
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            ',' => out.push_str("%2C"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest.get(pos + 1..pos + 3);
        let c = match code {
            Some("25") => Some('%'),
            Some("2C") => Some(','),
            Some("20") => Some(' '),
            Some("09") => Some('\t'),
            Some("0A") => Some('\n'),
            Some("0D") => Some('\r'),
            _ => None,
        };
        match c {
            Some(c) => {
                out.push(c);
                rest = &rest[pos + 3..];
            }
            None => {
                out.push('%');
                rest = &rest[pos + 1..];
            }
        }
    }
    out.push_str(rest);
    out
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            iter: text.lines(),
            line: 0,
        }
    }

    /// Next non-blank line, trimmed.
    fn raw_next(&mut self) -> Option<(usize, &'a str)> {
        for l in self.iter.by_ref() {
            self.line += 1;
            let t = l.trim();
            if !t.is_empty() {
                return Some((self.line, t));
            }
        }
        None
    }

    fn expect(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self
            .raw_next()
            .ok_or_else(|| Error::parse(self.line + 1, format!("unexpected end of file, expected `{key}`")))?;
        match line.split_once('=') {
            Some((k, v)) if k.trim() == key => Ok((n, v.trim())),
            _ => Err(Error::parse(n, format!("expected `{key} = ...`, found `{line}`"))),
        }
    }

    fn number(&mut self, key: &str) -> Result<f64> {
        let (n, v) = self.expect(key)?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::parse(n, format!("bad number `{v}` for `{key}`"))),
        }
    }

    fn numbers(&mut self, key: &str) -> Result<Vec<f64>> {
        let (n, v) = self.expect(key)?;
        parse_nums(v).map_err(|msg| Error::parse(n, msg))
    }
}
