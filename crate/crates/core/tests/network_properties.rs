use lmn::monotone::{Direction, MonotoneMask, MonotoneModel};
use lmn::network::{ActivationKind, Network, NetworkShape};
use lmn::norms::{ConstraintMode, NormScheme};
use lmn::tensor::{Rng, Vector};
use lmn::verify::{self, FD_STEP};
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;

#[derive(Debug, Clone)]
struct NetSpec {
    seed: u64,
    input_dim: usize,
    hidden: Vec<usize>,
    activation: ActivationKind,
    scheme: NormScheme,
    mode: ConstraintMode,
    lambda: f64,
    /// Standard deviation of the raw weights; large values push them far
    /// outside the feasible set.
    raw_scale: f64,
}

impl NetSpec {
    fn build(&self) -> Network {
        let shape = NetworkShape {
            input_dim: self.input_dim,
            hidden: self.hidden.clone(),
            output_dim: 1,
            activation: self.activation,
        };
        let mut rng = Rng::new(self.seed);
        let mut net = Network::init(&shape, self.scheme, self.mode, self.lambda, &mut rng).unwrap();
        let raw: Vec<f64> = (0..net.parameter_count()).map(|_| self.raw_scale * rng.normal()).collect();
        net.set_parameters(&raw).unwrap();
        if self.mode == ConstraintMode::ProjectAfterStep {
            net.project();
        }
        net
    }
}

fn spec_with(activations: Vec<ActivationKind>) -> impl Strategy<Value = NetSpec> {
    (
        any::<u64>(),
        1usize..5,
        prop::collection::vec(1usize..4, 1..3),
        prop::sample::select(activations),
        prop::sample::select(NormScheme::ALL.to_vec()),
        prop::sample::select(vec![ConstraintMode::ForwardNormalize, ConstraintMode::ProjectAfterStep]),
        -1.0f64..1.0,
        -1.0f64..1.0,
    )
        .prop_map(|(seed, input_dim, blocks, activation, scheme, mode, log_lambda, log_scale)| NetSpec {
            seed,
            input_dim,
            // even widths keep GroupSort-2 valid for every activation
            hidden: blocks.iter().map(|b| 2 * b).collect(),
            activation,
            scheme,
            mode,
            lambda: 10f64.powf(log_lambda),
            raw_scale: 10f64.powf(log_scale),
        })
}

fn certified_spec() -> impl Strategy<Value = NetSpec> {
    spec_with(vec![ActivationKind::GroupSort(2), ActivationKind::Relu])
}

fn any_spec() -> impl Strategy<Value = NetSpec> {
    spec_with(vec![ActivationKind::GroupSort(2), ActivationKind::Householder, ActivationKind::Relu])
}

fn point(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.uniform_in(-3.0, 3.0)).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 128,
        failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))),
        ..ProptestConfig::default()
    })]

    #[test]
    fn core_is_lipschitz_in_l1(spec in certified_spec(), pair_seed in any::<u64>()) {
        let net = spec.build();
        let eval = net.evaluator();
        let mut rng = Rng::new(pair_seed);
        for _ in 0..200 {
            let x = point(&mut rng, spec.input_dim);
            let y = point(&mut rng, spec.input_dim);
            let gap = (eval.predict(&x)[0] - eval.predict(&y)[0]).abs();
            prop_assert!(gap <= spec.lambda * l1(&x, &y) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn input_gradient_is_bounded(spec in certified_spec(), x_seed in any::<u64>()) {
        let net = spec.build();
        let x = point(&mut Rng::new(x_seed), spec.input_dim);
        prop_assume!(verify::smooth_at(&net, &x));
        let g = verify::finite_diff_grad(|z| net.evaluator().predict(z)[0], &x, FD_STEP).unwrap();
        for d in g.as_slice() {
            prop_assert!(d.abs() <= spec.lambda + 1e-6, "{d} vs lambda {}", spec.lambda);
        }
    }

    #[test]
    fn backward_matches_finite_differences(spec in any_spec(), x_seed in any::<u64>()) {
        let net = spec.build();
        let x = point(&mut Rng::new(x_seed), spec.input_dim);
        prop_assume!(verify::smooth_at(&net, &x));
        let (_, tape) = net.forward(&Vector::from_slice(&x).unwrap()).unwrap();
        let grads = net.backward(&tape, &Vector::from_slice(&[1.0]).unwrap()).unwrap();

        let fd_x = verify::finite_diff_grad(|z| net.evaluator().predict(z)[0], &x, FD_STEP).unwrap();
        for (a, b) in grads.input.as_slice().iter().zip(fd_x.as_slice()) {
            prop_assert!(verify::relative_error(*a, *b) < 1e-5, "input: {a} vs {b}");
        }
        let at_params = |p: &[f64]| {
            let mut probe = net.clone();
            probe.set_parameters(p).unwrap();
            probe.evaluator().predict(&x)[0]
        };
        let fd_p = verify::finite_diff_grad(at_params, &net.parameters(), FD_STEP).unwrap();
        let analytic = grads.parameter_slices().concat();
        prop_assert_eq!(analytic.len(), fd_p.len());
        for (i, (a, b)) in analytic.iter().zip(fd_p.as_slice()).enumerate() {
            prop_assert!(verify::relative_error(*a, *b) < 1e-5, "parameter {i}: {a} vs {b}");
        }
    }

    #[test]
    fn modes_agree_when_feasible(spec in certified_spec(), x_seed in any::<u64>()) {
        // variant A rescales feasible weights too, so it is swapped for B
        let scheme = match spec.scheme {
            NormScheme::OneNormFullA => NormScheme::OneNormFullB,
            s => s,
        };
        let shape = NetworkShape { input_dim: spec.input_dim, hidden: spec.hidden.clone(), output_dim: 1, activation: spec.activation };
        let forward = Network::init(&shape, scheme, ConstraintMode::ForwardNormalize, spec.lambda, &mut Rng::new(spec.seed)).unwrap();
        let projected = Network::init(&shape, scheme, ConstraintMode::ProjectAfterStep, spec.lambda, &mut Rng::new(spec.seed)).unwrap();
        prop_assert_eq!(forward.parameters(), projected.parameters());
        let mut rng = Rng::new(x_seed);
        for _ in 0..20 {
            let x = point(&mut rng, spec.input_dim);
            prop_assert_eq!(forward.evaluator().predict(&x), projected.evaluator().predict(&x));
        }
    }

    #[test]
    fn monotone_model_properties(
        spec in certified_spec(),
        directions in prop::collection::vec(prop::sample::select(vec![Direction::Increasing, Direction::Decreasing, Direction::Free]), 4),
        pair_seed in any::<u64>(),
    ) {
        let spec = NetSpec { input_dim: 4, ..spec };
        let mask = MonotoneMask::new(directions.clone());
        let model = MonotoneModel::new(spec.build(), mask).unwrap();
        let p = model.predictor();
        let lambda = spec.lambda;
        let mut rng = Rng::new(pair_seed);
        for _ in 0..200 {
            let x = point(&mut rng, 4);
            // residual is exactly λ·Σ x̃_i
            let residual: f64 = directions.iter().zip(&x).map(|(d, v)| d.sign() * v).sum::<f64>() * lambda;
            let f = p.predict(&x);
            prop_assert!((f - p.core_value(&x) - residual).abs() <= 1e-12 * (1.0 + f.abs() + residual.abs()));

            // moving monotone coordinates in their direction never lowers f
            let mut y = x.clone();
            for (i, d) in directions.iter().enumerate() {
                if *d != Direction::Free {
                    y[i] += d.sign() * rng.uniform_in(0.0, 3.0);
                }
            }
            prop_assert!(p.predict(&y) >= f - 1e-9 * (1.0 + f.abs()));

            // and the whole model is 2λ-Lipschitz
            let z = point(&mut rng, 4);
            prop_assert!((p.predict(&z) - f).abs() <= 2.0 * lambda * l1(&x, &z) * (1.0 + 1e-9));
        }
    }
}
