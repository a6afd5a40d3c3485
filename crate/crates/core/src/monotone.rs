//! The monotone model `f(x) = g(x̃) + λ·Σ_{i∈S} x̃_i`.
//!
//! `x̃` flips the sign of decreasing features, so the core only ever sees the
//! increasing case. With `g` certified Lip¹ with constant `λ`, every
//! `∂g/∂x̃_i` lies in `[−λ, λ]`, hence `∂f/∂x̃_i ∈ [0, 2λ]` on `S`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{Evaluator, ForwardTape, GradAccumulator, Network};
use crate::tensor::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
    Free,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
            Direction::Free => 0.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increasing => "+1",
            Direction::Decreasing => "-1",
            Direction::Free => "0",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+1" | "1" => Ok(Direction::Increasing),
            "-1" => Ok(Direction::Decreasing),
            "0" => Ok(Direction::Free),
            _ => Err(Error::config(format!("monotone direction must be +1, -1 or 0, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotoneMask {
    directions: Vec<Direction>,
}

impl MonotoneMask {
    pub fn new(directions: Vec<Direction>) -> Self {
        Self { directions }
    }

    pub fn unconstrained(len: usize) -> Self {
        Self::new(vec![Direction::Free; len])
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn set(&mut self, index: usize, direction: Direction) {
        self.directions[index] = direction;
    }

    /// Indices of the monotone set `S`.
    pub fn monotone_indices(&self) -> Vec<usize> {
        self.directions
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != Direction::Free)
            .map(|(i, _)| i)
            .collect()
    }

    /// `x̃`: decreasing coordinates negated.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.directions)
            .map(|(v, d)| if *d == Direction::Decreasing { -v } else { *v })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneModel {
    core: Network,
    mask: MonotoneMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzSummary {
    /// Certified bound on the core: `λ`.
    pub core_bound: f64,
    /// Per-coordinate bound on `|∂f/∂x_i|`: `2λ` on `S`, `λ` elsewhere.
    pub per_coordinate: Vec<f64>,
    pub certificate: f64,
}

impl MonotoneModel {
    pub fn new(core: Network, mask: MonotoneMask) -> Result<Self> {
        if core.output_dim() != 1 {
            return Err(Error::shape(format!(
                "monotone models are scalar-valued, core has {} outputs",
                core.output_dim()
            )));
        }
        if mask.len() != core.input_dim() {
            return Err(Error::shape(format!(
                "mask covers {} features, core takes {}",
                mask.len(),
                core.input_dim()
            )));
        }
        Ok(Self { core, mask })
    }

    pub fn core(&self) -> &Network {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut Network {
        &mut self.core
    }

    pub fn mask(&self) -> &MonotoneMask {
        &self.mask
    }

    pub fn lambda(&self) -> f64 {
        self.core.policy().lambda
    }

    pub fn input_dim(&self) -> usize {
        self.mask.len()
    }

    pub fn predictor(&self) -> MonotonePredictor<'_> {
        MonotonePredictor {
            model: self,
            eval: self.core.evaluator(),
        }
    }

    pub fn forward(&self, x: &Vector) -> Result<f64> {
        self.check(x.len())?;
        Ok(self.predictor().predict(x))
    }

    /// `∇f(x)`: the core gradient (through the sign flip) plus `λ·direction`.
    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check(x.len())?;
        let p = self.predictor();
        let (_, tape) = p.run(x);
        let mut acc = self.core.accumulator();
        Vector::new(p.backprop(&tape, 1.0, &mut acc))
    }

    pub fn lipschitz_summary(&self) -> LipschitzSummary {
        let lambda = self.lambda();
        LipschitzSummary {
            core_bound: lambda,
            per_coordinate: self
                .mask
                .directions()
                .iter()
                .map(|d| if *d == Direction::Free { lambda } else { 2.0 * lambda })
                .collect(),
            certificate: self.core.certificate(),
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::shape(format!(
                "input has length {len}, model expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

/// A model with its effective core weights prepared for repeated use.
pub struct MonotonePredictor<'a> {
    model: &'a MonotoneModel,
    eval: Evaluator<'a>,
}

impl MonotonePredictor<'_> {
    pub fn model(&self) -> &MonotoneModel {
        self.model
    }

    fn residual(&self, xt: &[f64]) -> f64 {
        let s: f64 = self
            .model
            .mask
            .directions()
            .iter()
            .zip(xt)
            .filter(|(d, _)| **d != Direction::Free)
            .map(|(_, v)| v)
            .sum();
        self.model.lambda() * s
    }

    /// Panics if `x` has the wrong length.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.run(x).0
    }

    /// `g(x̃)` alone.
    pub fn core_value(&self, x: &[f64]) -> f64 {
        self.eval.predict(&self.model.mask.transform(x))[0]
    }

    pub fn run(&self, x: &[f64]) -> (f64, ForwardTape) {
        let xt = self.model.mask.transform(x);
        let tape = self.eval.run(&xt);
        (tape.output()[0] + self.residual(&xt), tape)
    }

    /// Accumulates `d·∂f/∂θ` into `acc` and returns `d·∇_x f`.
    pub fn backprop(&self, tape: &ForwardTape, d: f64, acc: &mut GradAccumulator) -> Vec<f64> {
        let gx = self.eval.backprop(tape, &[d], acc);
        let lambda = self.model.lambda();
        gx.iter()
            .zip(self.model.mask.directions())
            .map(|(g, dir)| match dir {
                Direction::Free => *g,
                Direction::Increasing => g + lambda * d,
                Direction::Decreasing => -(g + lambda * d),
            })
            .collect()
    }
}
