//! Adam, the losses, and the training loop.
//!
//! Training is sequential over steps. Inside a batch the per-sample
//! gradients are computed in fixed chunks on the rayon pool and then summed
//! in chunk order, so results do not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::monotone::MonotoneModel;
use crate::network::{GradAccumulator, Network, CERT_TOL};
use crate::norms::ConstraintMode;
use crate::tensor::Rng;

const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// One moment buffer per parameter slice, with the given lengths.
    pub fn new(shapes: &[usize], lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and ≥ 0, got {lr}")));
        }
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn for_network(net: &Network, lr: f64) -> Result<Self> {
        let shapes: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect();
        Self::new(&shapes, lr)
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    let shapes_match = params.len() == state.m.len()
        && grads.len() == state.m.len()
        && params
            .iter()
            .zip(grads)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == m.len() && g.len() == m.len());
    if !shapes_match {
        return Err(Error::State("parameter/gradient shapes do not match the optimizer state".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Mse,
    BceWithLogits,
    /// Two-class cross-entropy on the logits `τ·[0, s]` of a scalar score `s`.
    ScaledCe { tau: f64 },
}

impl LossKind {
    fn needs_binary_targets(self) -> bool {
        !matches!(self, LossKind::Mse)
    }

    /// Loss and its derivative for a single prediction.
    pub fn pointwise(self, p: f64, y: f64) -> (f64, f64) {
        match self {
            LossKind::Mse => ((p - y) * (p - y), 2.0 * (p - y)),
            LossKind::BceWithLogits => (softplus(p) - y * p, sigmoid(p) - y),
            LossKind::ScaledCe { tau } => {
                let s = tau * p;
                (softplus(s) - y * s, tau * (sigmoid(s) - y))
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Mse => f.write_str("mse"),
            LossKind::BceWithLogits => f.write_str("bce"),
            LossKind::ScaledCe { tau } => write!(f, "scaled-ce:{tau}"),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "bce" => Ok(LossKind::BceWithLogits),
            _ => {
                let tau = s
                    .strip_prefix("scaled-ce:")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::config(format!("unknown loss `{s}` (mse, bce, scaled-ce:<tau>)")))?;
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::config(format!("scaled-ce needs τ > 0, got {tau}")));
                }
                Ok(LossKind::ScaledCe { tau })
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_targets(kind: LossKind, targets: &[f64]) -> Result<()> {
    if kind.needs_binary_targets() {
        if let Some(y) = targets.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::Data(format!("{kind} needs 0/1 targets, found {y}")));
        }
    }
    Ok(())
}

/// Mean loss over the batch and its gradient with respect to each prediction.
pub fn loss_and_grad(kind: LossKind, predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Data("loss of an empty batch".into()));
    }
    check_targets(kind, targets)?;
    let n = predictions.len() as f64;
    let mut total = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| {
            let (l, d) = kind.pointwise(*p, *y);
            total += l;
            d / n
        })
        .collect();
    Ok((total / n, grad))
}

/// Makes the stored weights feasible. A no-op in forward-normalize mode,
/// where the raw weights are unconstrained by design; use
/// [`Network::bake`] to obtain feasible raw weights there.
pub fn enforce_constraints(net: &mut Network) {
    if net.policy().mode == ConstraintMode::ProjectAfterStep {
        net.project();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: None,
            lr: 1e-3,
            seed: 0,
            loss: LossKind::Mse,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and ≥ 0, got {}", self.lr)));
        }
        if let LossKind::ScaledCe { tau } = self.loss {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::config(format!("scaled-ce needs τ > 0, got {tau}")));
            }
        }
        Ok(())
    }
}

/// Loss sum and parameter-gradient sums of `d loss / d f` over `rows`.
fn batch_gradient(model: &MonotoneModel, ds: &Dataset, rows: &[usize], loss: LossKind) -> (f64, GradAccumulator) {
    let predictor = model.predictor();
    let scale = 1.0 / rows.len() as f64;
    let partials: Vec<(f64, GradAccumulator)> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = model.core().accumulator();
            let mut total = 0.0;
            for &i in chunk {
                let (f, tape) = predictor.run(ds.row(i));
                let (l, d) = loss.pointwise(f, ds.targets()[i]);
                total += l;
                predictor.backprop(&tape, d * scale, &mut acc);
            }
            (total, acc)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut total, mut acc) = iter.next().expect("batch is non-empty");
    for (l, a) in iter {
        total += l;
        acc.merge(&a);
    }
    (total, acc)
}

/// Mean loss of `model` on `ds`.
pub fn dataset_loss(model: &MonotoneModel, ds: &Dataset, loss: LossKind) -> Result<f64> {
    let predictions = predict_all(model, ds)?;
    Ok(loss_and_grad(loss, &predictions, ds.targets())?.0)
}

pub fn predict_all(model: &MonotoneModel, ds: &Dataset) -> Result<Vec<f64>> {
    if ds.width() != model.input_dim() {
        return Err(Error::shape(format!(
            "dataset has {} features, model expects {}",
            ds.width(),
            model.input_dim()
        )));
    }
    let p = model.predictor();
    Ok(ds.rows().map(|r| p.predict(r)).collect())
}

/// Trains `model` on `ds` and returns it with the per-epoch mean training
/// loss (measured on the fly, before each batch's update).
pub fn fit(mut model: MonotoneModel, ds: &Dataset, config: &TrainConfig) -> Result<(MonotoneModel, Vec<f64>)> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if ds.width() != model.input_dim() {
        return Err(Error::shape(format!(
            "dataset has {} features, model expects {}",
            ds.width(),
            model.input_dim()
        )));
    }
    check_targets(config.loss, ds.targets())?;
    enforce_constraints(model.core_mut());
    let lambda = model.lambda();
    let mut adam = AdamState::for_network(model.core(), config.lr)?;
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let batch = config.batch_size.unwrap_or(ds.len()).min(ds.len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let mut epoch_total = 0.0;
        for rows in order.chunks(batch) {
            let (total, acc) = batch_gradient(&model, ds, rows, config.loss);
            if !total.is_finite() {
                return Err(Error::Diverged { epoch, loss: total });
            }
            epoch_total += total;
            let grads = model.core().finish_gradients(acc, Default::default());
            let slices = grads.parameter_slices();
            adam_step(&mut adam, &mut model.core_mut().parameters_mut(), &slices)?;
            enforce_constraints(model.core_mut());
            let cert = model.core().certificate();
            if !(cert <= lambda * (1.0 + CERT_TOL)) {
                return Err(Error::Certification(format!(
                    "certificate {cert} exceeds λ = {lambda} after a step in epoch {epoch}"
                )));
            }
        }
        history.push(epoch_total / ds.len() as f64);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy_dataset;
    use crate::monotone::{Direction, MonotoneMask};
    use crate::network::{ActivationKind, NetworkShape};
    use crate::norms::NormScheme;
    use crate::tensor::Matrix;

    #[test]
    fn adam_first_step_is_sign() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -7.0, 1e-3];
        let mut st = AdamState::new(&[3], 0.01).unwrap();
        adam_step(&mut st, &mut [&mut p[..]], &[&g[..]]).unwrap();
        let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = vec![0.25, -4.0];
        let mut st = AdamState::new(&[2], 0.1).unwrap();
        for _ in 0..50 {
            adam_step(&mut st, &mut [&mut p[..]], &[&[0.0, 0.0][..]]).unwrap();
        }
        assert_eq!(p, vec![0.25, -4.0]);
    }

    #[test]
    fn adam_matches_reference_on_quadratic() {
        // reference written out directly from the update rule
        let (lr, b1, b2, eps) = (0.05_f64, 0.9_f64, 0.999_f64, 1e-8_f64);
        let (mut x, mut m, mut v) = (3.0_f64, 0.0_f64, 0.0_f64);
        let mut p = vec![3.0];
        let mut st = AdamState::new(&[1], lr).unwrap();
        for t in 1..=10 {
            let g = 2.0 * (x - 1.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);

            let gp = [2.0 * (p[0] - 1.0)];
            adam_step(&mut st, &mut [&mut p[..]], &[&gp[..]]).unwrap();
            assert!((p[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut st = AdamState::new(&[2], 0.1).unwrap();
        let mut p = vec![0.0; 3];
        let err = adam_step(&mut st, &mut [&mut p[..]], &[&[0.0; 3][..]]).unwrap_err();
        assert!(matches!(err, Error::State(_)));
        assert!(AdamState::new(&[1], f64::NAN).is_err());
    }

    #[test]
    fn loss_examples() {
        let (l, g) = loss_and_grad(LossKind::Mse, &[1.0, -2.0], &[1.0, -2.0]).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
        let (l, g) = loss_and_grad(LossKind::BceWithLogits, &[0.0], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!(matches!(
            loss_and_grad(LossKind::BceWithLogits, &[0.0], &[0.5]),
            Err(Error::Data(_))
        ));
        assert!(matches!(loss_and_grad(LossKind::Mse, &[0.0], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn scaled_ce_with_unit_tau_is_cross_entropy() {
        // two-class softmax cross-entropy on logits [0, s], written out
        let ce = |s: f64, y: f64| {
            let z = 1.0 + s.exp();
            if y == 1.0 {
                -(s.exp() / z).ln()
            } else {
                -(1.0 / z).ln()
            }
        };
        for &s in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
            for &y in &[0.0, 1.0] {
                let (l, _) = loss_and_grad(LossKind::ScaledCe { tau: 1.0 }, &[s], &[y]).unwrap();
                let (b, _) = loss_and_grad(LossKind::BceWithLogits, &[s], &[y]).unwrap();
                assert!((l - ce(s, y)).abs() < 1e-12);
                assert!((l - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn losses_match_finite_differences() {
        let mut rng = Rng::new(11);
        for kind in [LossKind::Mse, LossKind::BceWithLogits, LossKind::ScaledCe { tau: 4.0 }] {
            for _ in 0..50 {
                let n = 1 + rng.below(6) as usize;
                let p: Vec<f64> = (0..n).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
                let y: Vec<f64> = (0..n)
                    .map(|_| match kind {
                        LossKind::Mse => rng.normal(),
                        _ => rng.below(2) as f64,
                    })
                    .collect();
                let (_, g) = loss_and_grad(kind, &p, &y).unwrap();
                for i in 0..n {
                    let h = 1e-5;
                    let mut up = p.clone();
                    up[i] += h;
                    let mut dn = p.clone();
                    dn[i] -= h;
                    let fd = (loss_and_grad(kind, &up, &y).unwrap().0 - loss_and_grad(kind, &dn, &y).unwrap().0) / (2.0 * h);
                    let rel = (fd - g[i]).abs() / g[i].abs().max(1e-3);
                    assert!(rel < 1e-6, "{kind}: fd {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn loss_names_round_trip() {
        for k in [LossKind::Mse, LossKind::BceWithLogits, LossKind::ScaledCe { tau: 256.0 }] {
            assert_eq!(k.to_string().parse::<LossKind>().unwrap(), k);
        }
        assert!("scaled-ce:0".parse::<LossKind>().is_err());
        assert!("hinge".parse::<LossKind>().is_err());
    }

    fn toy_model(mode: ConstraintMode, seed: u64) -> MonotoneModel {
        let shape = NetworkShape {
            input_dim: 1,
            hidden: vec![8, 8],
            output_dim: 1,
            activation: ActivationKind::GroupSort(2),
        };
        let core = Network::init(&shape, NormScheme::OneNormColumnwise, mode, 2.0, &mut Rng::new(seed)).unwrap();
        MonotoneModel::new(core, MonotoneMask::new(vec![Direction::Increasing])).unwrap()
    }

    #[test]
    fn enforce_is_identity_on_feasible_and_local() {
        let mut net = toy_model(ConstraintMode::ProjectAfterStep, 1).core().clone();
        let before = net.clone();
        enforce_constraints(&mut net);
        assert_eq!(net, before);
        // blow up a single column of the middle layer
        let cols = net.layers()[1].weights.cols();
        {
            let mut params = net.parameters_mut();
            for r in 0..8 {
                params[2][r * cols + 3] *= 10.0;
            }
        }
        let corrupted = net.clone();
        enforce_constraints(&mut net);
        let (a, b): (&Matrix, &Matrix) = (&net.layers()[1].weights, &corrupted.layers()[1].weights);
        for r in 0..8 {
            for c in 0..cols {
                if c == 3 {
                    assert!((a.get(r, c) - b.get(r, c) / b.column_abs_sums()[3] * net.policy().layer_budget()).abs() < 1e-12);
                } else {
                    assert_eq!(a.get(r, c), b.get(r, c));
                }
            }
        }
        assert!(net.certificate() <= 2.0 * (1.0 + CERT_TOL));
    }

    #[test]
    fn lr_zero_leaves_model_unchanged() {
        let ds = toy_dataset(0, 40, 2).unwrap();
        for mode in [ConstraintMode::ProjectAfterStep, ConstraintMode::ForwardNormalize] {
            let model = toy_model(mode, 3);
            let cfg = TrainConfig {
                epochs: 1,
                lr: 0.0,
                ..TrainConfig::default()
            };
            let (trained, hist) = fit(model.clone(), &ds, &cfg).unwrap();
            assert_eq!(trained, model);
            assert_eq!(hist.len(), 1);
        }
    }

    #[test]
    fn training_makes_progress_and_is_deterministic() {
        let ds = toy_dataset(0, 100, 5).unwrap().standardize();
        for mode in [ConstraintMode::ProjectAfterStep, ConstraintMode::ForwardNormalize] {
            let cfg = TrainConfig {
                epochs: 60,
                lr: 0.01,
                batch_size: Some(16),
                seed: 9,
                ..TrainConfig::default()
            };
            let model = toy_model(mode, 4);
            let initial = dataset_loss(&model, &ds, LossKind::Mse).unwrap();
            let (a, ha) = fit(model.clone(), &ds, &cfg).unwrap();
            let (b, hb) = fit(model, &ds, &cfg).unwrap();
            assert_eq!(ha, hb);
            assert_eq!(a, b);
            assert_eq!(ha.len(), 60);
            let fin = dataset_loss(&a, &ds, LossKind::Mse).unwrap();
            assert!(fin < initial, "{mode:?}: {fin} !< {initial}");
            assert!(a.core().certificate() <= 2.0 * (1.0 + CERT_TOL));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let ds = toy_dataset(0, 10, 2).unwrap();
        let mut model = toy_model(ConstraintMode::ProjectAfterStep, 3);
        // output bias so large that the squared error overflows
        model.core_mut().parameters_mut()[5][0] = 1e308;
        let err = fit(model, &ds, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, .. }), "{err}");
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let ds = toy_dataset(0, 10, 2).unwrap();
        let model = toy_model(ConstraintMode::ProjectAfterStep, 3);
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(model.clone(), &ds, &bad), Err(Error::Config(_))));
        let bce = TrainConfig {
            loss: LossKind::BceWithLogits,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(model, &ds, &bce), Err(Error::Data(_))));
    }
}
