//! The constrained fully connected network.
//!
//! Layer `l` computes `a^l = σ_l(W^l a^{l-1} + b^l)` with `a^0 = x`, where
//! `W^l` is stored `(outputs × inputs)`; in the row-vector notation this is
//! `σ(z^{l-1}) W + b` with the transposed matrix. The last layer uses the
//! identity activation. In [`ConstraintMode::ForwardNormalize`] every forward
//! pass uses the normalized weights and [`Network::backward`] differentiates
//! through the normalization map.

use std::borrow::Cow;

use crate::activations::ActivationSpec;
use crate::error::{Error, Result};
use crate::norms::{self, ConstraintMode, ConstraintPolicy, NormScheme};
use crate::tensor::{dot, Matrix, Rng, Vector};

/// Relative slack allowed on the certificate for floating-point rounding.
pub const CERT_TOL: f64 = 1e-9;

/// Column (or row) norm used for freshly initialized layers, relative to the
/// per-layer budget.
const INIT_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: ActivationSpec,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    GroupSort(usize),
    Householder,
    Relu,
}

/// Topology used by [`Network::init`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: ActivationKind,
}

impl NetworkShape {
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    policy: ConstraintPolicy,
}

/// Per-call record of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardTape {
    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn pre_activation(&self, layer: usize) -> &[f64] {
        &self.pre[layer]
    }

    pub fn post_activation(&self, layer: usize) -> &[f64] {
        &self.post[layer]
    }

    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&self.input, Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Gradients with respect to the stored (raw) weights.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
    pub input: Vector,
}

impl Gradients {
    /// Parameter gradients in the same order as [`Network::parameters_mut`].
    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianBound {
    /// Certified bound on every `|∂g/∂x_i|`.
    pub bound: f64,
    pub certificate: f64,
}

/// Gradient sums over a batch, with respect to the effective weights.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl GradAccumulator {
    pub fn merge(&mut self, other: &GradAccumulator) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, policy: ConstraintPolicy) -> Result<Self> {
        policy.validate()?;
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        if policy.depth != layers.len() {
            return Err(Error::config(format!(
                "policy depth {} does not match {} layers",
                policy.depth,
                layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::shape(format!(
                    "layer {i}: bias length {} but {} outputs",
                    layer.bias.len(),
                    layer.output_dim()
                )));
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(Error::shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    layer.input_dim(),
                    i - 1,
                    layers[i - 1].output_dim()
                )));
            }
            layer
                .activation
                .validate(layer.output_dim())
                .map_err(|e| Error::shape(format!("layer {i}: {e}")))?;
        }
        Ok(Self { layers, policy })
    }

    /// Random feasible network: orthogonal directions, every constrained norm
    /// at 70% of the per-layer budget, zero biases.
    pub fn init(shape: &NetworkShape, scheme: NormScheme, mode: ConstraintMode, lambda: f64, rng: &mut Rng) -> Result<Self> {
        if shape.input_dim == 0 || shape.output_dim == 0 || shape.hidden.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let policy = ConstraintPolicy::new(scheme, mode, lambda, shape.depth())?;
        let target = INIT_FRACTION * policy.layer_budget();
        let mut dims = vec![shape.input_dim];
        dims.extend(&shape.hidden);
        dims.push(shape.output_dim);
        let mut layers = Vec::with_capacity(shape.depth());
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut w = orthogonal_like(fan_out, fan_in, rng);
            match scheme {
                NormScheme::InfNormScheme if l == 0 => {
                    let m = norms::max_abs(&w);
                    w.as_mut_slice().iter_mut().for_each(|x| *x *= target / m);
                }
                NormScheme::InfNormScheme => {
                    for (j, s) in w.row_abs_sums().into_iter().enumerate() {
                        for k in 0..fan_in {
                            let x = w.get(j, k);
                            w.set(j, k, x * target / s);
                        }
                    }
                }
                _ => {
                    for (k, s) in w.column_abs_sums().into_iter().enumerate() {
                        for j in 0..fan_out {
                            let x = w.get(j, k);
                            w.set(j, k, x * target / s);
                        }
                    }
                }
            }
            let last = l + 2 == dims.len();
            let activation = if last {
                ActivationSpec::Identity
            } else {
                match shape.activation {
                    ActivationKind::GroupSort(group) => ActivationSpec::GroupSort { group },
                    ActivationKind::Relu => ActivationSpec::Relu,
                    ActivationKind::Householder => {
                        let raw: Vec<f64> = (0..fan_out).map(|_| rng.normal()).collect();
                        let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
                        ActivationSpec::householder(Vector::from_raw(raw.iter().map(|x| x / n).collect()))?
                    }
                }
            };
            layers.push(Layer {
                weights: w,
                bias: Vector::zeros(fan_out),
                activation,
            });
        }
        Network::new(layers, policy)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn policy(&self) -> &ConstraintPolicy {
        &self.policy
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Mutable parameter buffers: weights then bias, layer by layer.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// All parameters flattened in [`Network::parameters_mut`] order.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("parameters must be finite".into()));
        }
        let mut rest = flat;
        for buf in self.parameters_mut() {
            let (head, tail) = rest.split_at(buf.len());
            buf.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Weights the forward pass actually multiplies by.
    pub fn effective_weights(&self) -> Cow<'_, [Matrix]> {
        match self.policy.mode {
            ConstraintMode::ProjectAfterStep => {
                Cow::Owned(self.layers.iter().map(|l| l.weights.clone()).collect())
            }
            ConstraintMode::ForwardNormalize => Cow::Owned(
                self.layers
                    .iter()
                    .enumerate()
                    .map(|(i, l)| norms::normalize_layer(&l.weights, &self.policy, i))
                    .collect(),
            ),
        }
    }

    /// Certificate of the function the network computes (effective weights).
    pub fn certificate(&self) -> f64 {
        norms::certificate(&self.effective_weights(), &self.policy)
    }

    /// Projects the stored weights onto the feasible set.
    pub fn project(&mut self) {
        let policy = self.policy;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.weights = norms::project_layer(&layer.weights, &policy, i);
        }
    }

    /// Replaces the stored weights with the effective ones and switches to
    /// [`ConstraintMode::ProjectAfterStep`], so the raw weights alone define
    /// (and certify) the same function.
    pub fn bake(&mut self) {
        if self.policy.mode == ConstraintMode::ForwardNormalize {
            let effective = self.effective_weights().into_owned();
            for (layer, w) in self.layers.iter_mut().zip(effective) {
                layer.weights = w;
            }
            self.policy.mode = ConstraintMode::ProjectAfterStep;
        }
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            net: self,
            weights: self.effective_weights(),
        }
    }

    pub fn forward(&self, x: &Vector) -> Result<(Vector, ForwardTape)> {
        self.check_input(x.len())?;
        let tape = self.evaluator().run(x);
        Ok((Vector::new(tape.output().to_vec())?, tape))
    }

    pub fn backward(&self, tape: &ForwardTape, grad_out: &Vector) -> Result<Gradients> {
        if tape.depth() != self.depth() || tape.input.len() != self.input_dim() {
            return Err(Error::State(format!(
                "tape has {} layers / {} inputs, network has {} / {}",
                tape.depth(),
                tape.input.len(),
                self.depth(),
                self.input_dim()
            )));
        }
        if tape
            .pre
            .iter()
            .zip(&self.layers)
            .any(|(z, l)| z.len() != l.output_dim())
        {
            return Err(Error::State("tape widths do not match the network".into()));
        }
        if grad_out.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "grad_out has length {}, network output is {}",
                grad_out.len(),
                self.output_dim()
            )));
        }
        let eval = self.evaluator();
        let mut acc = self.accumulator();
        let input = eval.backprop(tape, grad_out, &mut acc);
        Ok(self.finish_gradients(acc, Vector::new(input)?))
    }

    pub fn accumulator(&self) -> GradAccumulator {
        GradAccumulator {
            weights: self
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.as_slice().len()])
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Converts accumulated effective-weight gradients into raw-weight
    /// gradients.
    pub fn finish_gradients(&self, acc: GradAccumulator, input: Vector) -> Gradients {
        let weights = acc
            .weights
            .into_iter()
            .zip(&self.layers)
            .enumerate()
            .map(|(i, (g, layer))| {
                let g = Matrix::from_raw(layer.output_dim(), layer.input_dim(), g);
                match self.policy.mode {
                    ConstraintMode::ProjectAfterStep => g,
                    ConstraintMode::ForwardNormalize => {
                        norms::normalize_layer_vjp(&layer.weights, &self.policy, i, &g)
                    }
                }
            })
            .collect();
        Gradients {
            weights,
            biases: acc.biases.into_iter().map(Vector::from_raw).collect(),
            input,
        }
    }

    /// Returns the certified bound `λ` on each input partial derivative.
    pub fn input_jacobian_bound(&self) -> Result<JacobianBound> {
        if let Some(i) = self
            .layers
            .iter()
            .position(|l| !l.activation.preserves_l1_certificate())
        {
            return Err(Error::Certification(format!(
                "layer {i} uses an activation that is not 1-Lipschitz in L1"
            )));
        }
        let certificate = self.certificate();
        if certificate > self.policy.lambda * (1.0 + CERT_TOL) {
            return Err(Error::Certification(format!(
                "certificate {certificate} exceeds lambda {}",
                self.policy.lambda
            )));
        }
        Ok(JacobianBound {
            bound: self.policy.lambda,
            certificate,
        })
    }

    /// Smallest distance from a nondifferentiable point along the forward
    /// pass at `x`: the closest pair inside any GroupSort block, `|z·v|` for
    /// Householder, `|z|` for ReLU. Infinite for purely linear nets.
    pub fn kink_margin(&self, x: &[f64]) -> f64 {
        let tape = self.evaluator().run(x);
        let mut margin = f64::INFINITY;
        for (layer, z) in self.layers.iter().zip(&tape.pre) {
            match &layer.activation {
                ActivationSpec::GroupSort { group } => {
                    for block in z.chunks(*group) {
                        for a in 0..block.len() {
                            for b in a + 1..block.len() {
                                margin = margin.min((block[a] - block[b]).abs());
                            }
                        }
                    }
                }
                ActivationSpec::Householder { v } => margin = margin.min(dot(z, v).abs()),
                ActivationSpec::Relu => {
                    margin = z.iter().fold(margin, |m, x| m.min(x.abs()));
                }
                ActivationSpec::Identity => {}
            }
        }
        margin
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::shape(format!(
                "input has length {len}, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

/// A network paired with its effective weights, for repeated evaluation.
pub struct Evaluator<'a> {
    net: &'a Network,
    weights: Cow<'a, [Matrix]>,
}

impl Evaluator<'_> {
    pub fn network(&self) -> &Network {
        self.net
    }

    /// Forward pass. Panics if `x` has the wrong length.
    pub fn run(&self, x: &[f64]) -> ForwardTape {
        let depth = self.net.depth();
        let mut pre = Vec::with_capacity(depth);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(depth);
        for (l, (layer, w)) in self.net.layers.iter().zip(self.weights.iter()).enumerate() {
            let a = if l == 0 { x } else { post[l - 1].as_slice() };
            let mut z = w.apply(a);
            z.iter_mut().zip(layer.bias.iter()).for_each(|(z, b)| *z += b);
            post.push(layer.activation.forward(&z));
            pre.push(z);
        }
        ForwardTape {
            input: x.to_vec(),
            pre,
            post,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let tape = self.run(x);
        tape.output().to_vec()
    }

    /// Adds this sample's effective-weight gradients to `acc` and returns the
    /// input gradient.
    pub fn backprop(&self, tape: &ForwardTape, grad_out: &[f64], acc: &mut GradAccumulator) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for l in (0..self.net.depth()).rev() {
            let layer = &self.net.layers[l];
            let dz = layer.activation.backward(&tape.pre[l], &g);
            let a = if l == 0 { &tape.input } else { &tape.post[l - 1] };
            let cols = layer.input_dim();
            for (j, &d) in dz.iter().enumerate() {
                acc.biases[l][j] += d;
                if d != 0.0 {
                    let row = &mut acc.weights[l][j * cols..(j + 1) * cols];
                    row.iter_mut().zip(a).for_each(|(w, x)| *w += d * x);
                }
            }
            g = self.weights[l].apply_transpose(&dz);
        }
        g
    }
}

fn orthogonal_like(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    // Gram-Schmidt over the shorter dimension.
    let (n, m) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut w = Matrix::zeros(rows, cols);
    for (i, b) in basis.iter().enumerate() {
        for (k, &x) in b.iter().enumerate() {
            if rows >= cols {
                w.set(k, i, x);
            } else {
                w.set(i, k, x);
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rand_uniform;

    fn v(data: &[f64]) -> Vector {
        Vector::from_slice(data).unwrap()
    }

    fn policy(mode: ConstraintMode, lambda: f64, depth: usize) -> ConstraintPolicy {
        ConstraintPolicy::new(NormScheme::OneNormColumnwise, mode, lambda, depth).unwrap()
    }

    fn shape(input: usize, hidden: &[usize], act: ActivationKind) -> NetworkShape {
        NetworkShape {
            input_dim: input,
            hidden: hidden.to_vec(),
            output_dim: 1,
            activation: act,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer {
            weights: Matrix::identity(3),
            bias: Vector::zeros(3),
            activation: ActivationSpec::Identity,
        };
        let net = Network::new(vec![layer], policy(ConstraintMode::ProjectAfterStep, 1.0, 1)).unwrap();
        let (y, tape) = net.forward(&v(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, -2.0, 3.0]);
        assert_eq!(tape.depth(), 1);
    }

    #[test]
    fn forward_normalize_rescales_weights() {
        let layer = Layer {
            weights: Matrix::from_rows(&[vec![2.0]]).unwrap(),
            bias: Vector::zeros(1),
            activation: ActivationSpec::Identity,
        };
        let net = Network::new(vec![layer], policy(ConstraintMode::ForwardNormalize, 1.0, 1)).unwrap();
        let (y, _) = net.forward(&v(&[0.75])).unwrap();
        assert_eq!(y.as_slice(), &[0.75]);
    }

    #[test]
    fn two_layer_matches_manual_composition() {
        let mut rng = Rng::new(5);
        let net = Network::init(
            &shape(3, &[4], ActivationKind::GroupSort(2)),
            NormScheme::OneNormColumnwise,
            ConstraintMode::ProjectAfterStep,
            1.0,
            &mut rng,
        )
        .unwrap();
        let x = rand_uniform(&mut rng, 3, -1.0, 1.0).unwrap();
        let (y, _) = net.forward(&x).unwrap();

        let (w1, b1) = (&net.layers()[0].weights, &net.layers()[0].bias);
        let (w2, b2) = (&net.layers()[1].weights, &net.layers()[1].bias);
        let mut h = vec![0.0; 4];
        for j in 0..4 {
            h[j] = b1[j];
            for k in 0..3 {
                h[j] += w1.get(j, k) * x[k];
            }
        }
        for pair in h.chunks_mut(2) {
            if pair[1] < pair[0] {
                pair.swap(0, 1);
            }
        }
        let mut out = b2[0];
        for k in 0..4 {
            out += w2.get(0, k) * h[k];
        }
        assert!((y[0] - out).abs() < 1e-12);
    }

    #[test]
    fn linear_backward_is_outer_product() {
        let w = Matrix::from_rows(&[vec![0.2, -0.3], vec![0.1, 0.4], vec![-0.5, 0.2]]).unwrap();
        let layer = Layer {
            weights: w.clone(),
            bias: Vector::zeros(3),
            activation: ActivationSpec::Identity,
        };
        let net = Network::new(vec![layer], policy(ConstraintMode::ProjectAfterStep, 1.0, 1)).unwrap();
        let x = v(&[1.5, -2.0]);
        let g = v(&[1.0, 2.0, -1.0]);
        let (_, tape) = net.forward(&x).unwrap();
        let grads = net.backward(&tape, &g).unwrap();
        for j in 0..3 {
            for k in 0..2 {
                assert_eq!(grads.weights[0].get(j, k), g[j] * x[k]);
            }
        }
        assert_eq!(grads.biases[0], g);
        let expected = crate::tensor::matvec(&w, &g).unwrap();
        assert_eq!(grads.input, expected);

        let zero = net.backward(&tape, &Vector::zeros(3)).unwrap();
        assert!(zero.parameter_slices().iter().all(|s| s.iter().all(|x| *x == 0.0)));
        assert!(zero.input.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn backward_rejects_foreign_tape() {
        let mut rng = Rng::new(1);
        let a = Network::init(&shape(3, &[4], ActivationKind::GroupSort(2)), NormScheme::OneNormColumnwise, ConstraintMode::ProjectAfterStep, 1.0, &mut rng).unwrap();
        let b = Network::init(&shape(3, &[4, 4], ActivationKind::GroupSort(2)), NormScheme::OneNormColumnwise, ConstraintMode::ProjectAfterStep, 1.0, &mut rng).unwrap();
        let (_, tape) = a.forward(&v(&[0.1, 0.2, 0.3])).unwrap();
        assert!(matches!(b.backward(&tape, &v(&[1.0])), Err(Error::State(_))));
        assert!(matches!(a.forward(&v(&[0.1])), Err(Error::Shape(_))));
    }

    #[test]
    fn network_validation() {
        let p = policy(ConstraintMode::ProjectAfterStep, 1.0, 2);
        let l1 = Layer {
            weights: Matrix::zeros(3, 2),
            bias: Vector::zeros(3),
            activation: ActivationSpec::GroupSort { group: 2 },
        };
        let l2 = Layer {
            weights: Matrix::zeros(1, 3),
            bias: Vector::zeros(1),
            activation: ActivationSpec::Identity,
        };
        assert!(matches!(Network::new(vec![l1.clone(), l2.clone()], p), Err(Error::Shape(_))));
        let l1 = Layer {
            activation: ActivationSpec::Identity,
            ..l1
        };
        assert!(Network::new(vec![l1.clone(), l2.clone()], p).is_ok());
        assert!(matches!(
            Network::new(vec![l1], p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn init_is_feasible_and_deterministic() {
        for scheme in NormScheme::ALL {
            let a = Network::init(&shape(5, &[8, 8], ActivationKind::GroupSort(2)), scheme, ConstraintMode::ProjectAfterStep, 2.0, &mut Rng::new(3)).unwrap();
            let b = Network::init(&shape(5, &[8, 8], ActivationKind::GroupSort(2)), scheme, ConstraintMode::ProjectAfterStep, 2.0, &mut Rng::new(3)).unwrap();
            assert_eq!(a, b);
            let cert = a.certificate();
            let expected = 0.7f64.powi(3) * 2.0;
            assert!((cert - expected).abs() < 1e-12, "{scheme}: {cert}");
            // projection leaves a feasible init untouched
            let mut c = a.clone();
            c.project();
            assert_eq!(a, c);
        }
    }

    #[test]
    fn jacobian_bound() {
        let mut rng = Rng::new(8);
        let mut net = Network::init(&shape(4, &[6], ActivationKind::GroupSort(2)), NormScheme::OneNormColumnwise, ConstraintMode::ProjectAfterStep, 1.0, &mut rng).unwrap();
        let b = net.input_jacobian_bound().unwrap();
        assert_eq!(b.bound, 1.0);
        assert!(b.certificate <= 1.0);
        net.parameters_mut()[0].iter_mut().for_each(|w| *w *= 10.0);
        assert!(matches!(net.input_jacobian_bound(), Err(Error::Certification(_))));
        net.parameters_mut()[0].iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(net.input_jacobian_bound().unwrap().certificate, 0.0);
    }

    #[test]
    fn modes_agree_on_feasible_weights() {
        let mut rng = Rng::new(10);
        let a = Network::init(&shape(3, &[4, 4], ActivationKind::GroupSort(2)), NormScheme::OneNormFullB, ConstraintMode::ProjectAfterStep, 1.0, &mut rng).unwrap();
        let mut b = a.clone();
        b.policy.mode = ConstraintMode::ForwardNormalize;
        for _ in 0..20 {
            let x = rand_uniform(&mut rng, 3, -2.0, 2.0).unwrap();
            assert_eq!(a.forward(&x).unwrap().0, b.forward(&x).unwrap().0);
        }
    }

    #[test]
    fn bake_preserves_outputs() {
        let mut rng = Rng::new(12);
        let mut net = Network::init(&shape(3, &[4], ActivationKind::GroupSort(2)), NormScheme::OneNormColumnwise, ConstraintMode::ForwardNormalize, 1.0, &mut rng).unwrap();
        net.parameters_mut()[0].iter_mut().for_each(|w| *w *= 5.0);
        let x = v(&[0.3, -0.2, 0.9]);
        let before = net.forward(&x).unwrap().0;
        net.bake();
        assert_eq!(net.policy().mode, ConstraintMode::ProjectAfterStep);
        assert_eq!(net.forward(&x).unwrap().0, before);
        assert!(net.certificate() <= 1.0 + 1e-12);
    }
}
