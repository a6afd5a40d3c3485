//! Independent oracles: central finite differences, empirical Lipschitz
//! estimates, the monotonicity audit, and the norm certificate report.
//!
//! Nothing here calls into the backward pass except the gradient-range
//! summary of the audit, which is informational only.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::monotone::{Direction, MonotoneModel};
use crate::network::{Network, CERT_TOL};
use crate::norms;
use crate::tensor::{Rng, Vector};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Points closer than this to a GroupSort tie are not used for
/// finite-difference comparisons.
pub const KINK_REJECT: f64 = 1e-4;

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Range(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle(format!("non-finite function value around coordinate {i}")));
        }
        out.push((up - down) / (2.0 * h));
    }
    Vector::new(out)
}

/// Relative error used when comparing gradients: `|a − b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Axis-aligned sampling region, one `[lo, hi]` per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub bounds: Vec<(f64, f64)>,
}

impl SampleBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::config("sampling box has no coordinates"));
        }
        if let Some(i) = bounds
            .iter()
            .position(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::config(format!(
                "sampling box coordinate {i} is empty or not finite: {:?}",
                bounds[i]
            )));
        }
        Ok(Self { bounds })
    }

    /// The same box on every one of `dim` coordinates.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| rng.uniform_in(*lo, *hi)).collect()
    }

    fn describe(&self) -> String {
        self.bounds
            .iter()
            .map(|(lo, hi)| format!("[{lo:.6e},{hi:.6e}]"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub certificate: f64,
    pub lambda: f64,
    /// Observed `(min, max)` of `∂f/∂xᵢ` at the sampled points.
    pub gradient_ranges: Vec<(f64, f64)>,
    pub trials: usize,
    pub violations: usize,
    /// Most negative direction-adjusted change `f(x+δ) − f(x)` seen; 0 or
    /// positive when nothing decreased.
    pub worst_margin: f64,
    pub sample_box: SampleBox,
    pub seed: u64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "certificate={:.16e}", self.certificate)?;
        writeln!(f, "lambda={:.16e}", self.lambda)?;
        writeln!(f, "trials={}", self.trials)?;
        writeln!(f, "violations={}", self.violations)?;
        writeln!(f, "worst_margin={:.16e}", self.worst_margin)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "box={}", self.sample_box.describe())?;
        for (i, (lo, hi)) in self.gradient_ranges.iter().enumerate() {
            writeln!(f, "grad_range_{i}={lo:.6e},{hi:.6e}")?;
        }
        writeln!(f, "result={}", if self.passed() { "pass" } else { "fail" })
    }
}

struct TrialOutcome {
    margin: f64,
    violated: bool,
    grad: Vec<f64>,
}

/// Samples `x` in the box, moves a random non-empty subset of the monotone
/// coordinates in their monotone direction by up to one box width, and
/// counts `f(x + δ) < f(x) − 1e-9·(1 + |f(x)|)` events (signs adjusted for
/// decreasing features). Trial `t` draws from substream `t` of `seed`.
pub fn audit_monotonicity(model: &MonotoneModel, sample_box: &SampleBox, trials: usize, seed: u64) -> Result<AuditReport> {
    if trials == 0 {
        return Err(Error::config("audit needs at least one trial"));
    }
    if sample_box.dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "sampling box has {} coordinates, model has {} inputs",
            sample_box.dim(),
            model.input_dim()
        )));
    }
    let monotone = model.mask().monotone_indices();
    if monotone.is_empty() {
        return Err(Error::config("model has no monotone features to audit"));
    }
    let predictor = model.predictor();
    let dirs = model.mask().directions();
    let root = Rng::new(seed);
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = root.substream(t as u64);
            let x = sample_box.sample(&mut rng);
            let mut moved = x.clone();
            let mut any = false;
            for (k, &i) in monotone.iter().enumerate() {
                let last_chance = k + 1 == monotone.len() && !any;
                if last_chance || rng.uniform() < 0.5 {
                    let (lo, hi) = sample_box.bounds[i];
                    moved[i] += dirs[i].sign() * rng.uniform() * (hi - lo);
                    any = true;
                }
            }
            let (f0, tape) = predictor.run(&x);
            let f1 = predictor.predict(&moved);
            let margin = f1 - f0;
            let mut acc = model.core().accumulator();
            let grad = predictor.backprop(&tape, 1.0, &mut acc);
            TrialOutcome {
                margin,
                violated: margin < -1e-9 * (1.0 + f0.abs()),
                grad,
            }
        })
        .collect();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); model.input_dim()];
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for o in &outcomes {
        violations += usize::from(o.violated);
        worst = worst.min(o.margin);
        for (r, g) in ranges.iter_mut().zip(&o.grad) {
            *r = (r.0.min(*g), r.1.max(*g));
        }
    }
    Ok(AuditReport {
        certificate: model.core().certificate(),
        lambda: model.lambda(),
        gradient_ranges: ranges,
        trials,
        violations,
        worst_margin: worst,
        sample_box: sample_box.clone(),
        seed,
    })
}

/// Largest `|f(x) − f(y)| / ‖x − y‖₁` over the given pairs. Identical pairs
/// are skipped; `None` when every pair was degenerate.
pub fn lipschitz_ratio_max<F>(f: F, pairs: &[(Vec<f64>, Vec<f64>)]) -> Option<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pairs
        .par_iter()
        .filter_map(|(x, y)| {
            let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
            (d > 0.0).then(|| (f(x) - f(y)).abs() / d)
        })
        .reduce_with(f64::max)
}

/// Empirical lower bound on the L¹ Lipschitz constant of `f` from `pairs`
/// random pairs in the box. Even-numbered pairs are independent points;
/// odd-numbered pairs differ in a single coordinate, which is where L¹
/// ratios are largest for piecewise-linear maps.
pub fn empirical_lipschitz<F>(f: F, sample_box: &SampleBox, pairs: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if pairs == 0 {
        return Err(Error::config("need at least one pair"));
    }
    let root = Rng::new(seed);
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|p| {
            let mut rng = root.substream(p as u64);
            let x = sample_box.sample(&mut rng);
            let y = if p % 2 == 0 {
                sample_box.sample(&mut rng)
            } else {
                let mut y = x.clone();
                let i = rng.below(x.len() as u64) as usize;
                let (lo, hi) = sample_box.bounds[i];
                y[i] = rng.uniform_in(lo, hi);
                y
            };
            (x, y)
        })
        .collect();
    Ok(lipschitz_ratio_max(f, &samples).unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub lambda: f64,
    pub certificate: f64,
    pub layer_norms: Vec<f64>,
    pub layer_budget: f64,
    /// First layer whose norm exceeds its budget.
    pub offending_layer: Option<usize>,
    pub reason: Option<String>,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.reason.is_none()
    }

    /// Bound on each monotone partial derivative of the residual model.
    pub fn monotone_bound(&self) -> f64 {
        2.0 * self.lambda
    }
}

impl fmt::Display for CertifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lambda={:.16e}", self.lambda)?;
        writeln!(f, "certificate={:.16e}", self.certificate)?;
        writeln!(f, "monotone_bound={:.16e}", self.monotone_bound())?;
        writeln!(f, "layer_budget={:.16e}", self.layer_budget)?;
        for (i, n) in self.layer_norms.iter().enumerate() {
            writeln!(f, "layer_norm_{i}={n:.16e}")?;
        }
        if let Some(i) = self.offending_layer {
            writeln!(f, "offending_layer={i}")?;
        }
        if let Some(r) = &self.reason {
            writeln!(f, "reason={r}")?;
        }
        writeln!(f, "result={}", if self.passed() { "pass" } else { "fail" })
    }
}

/// Recomputes every layer norm from the weights the network multiplies by
/// and checks `Π‖Wᵢ‖ ≤ λ·(1 + 1e-9)`.
pub fn certify(net: &Network) -> CertifyReport {
    let policy = net.policy();
    let weights = net.effective_weights();
    let layer_norms: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| norms::layer_norm(w, policy.scheme, i))
        .collect();
    let certificate: f64 = layer_norms.iter().product();
    let budget = policy.layer_budget();
    let offending_layer = layer_norms
        .iter()
        .position(|n| !(*n <= budget * (1.0 + CERT_TOL)));
    let lambda = policy.lambda;
    let reason = if let Some(i) = net
        .layers()
        .iter()
        .position(|l| !l.activation.preserves_l1_certificate())
    {
        Some(format!("layer {i} uses an activation that is not 1-Lipschitz in the 1-norm"))
    } else if !(certificate <= lambda * (1.0 + CERT_TOL)) {
        Some(format!("certificate {certificate:.6e} exceeds lambda {lambda:.6e}"))
    } else {
        None
    };
    CertifyReport {
        lambda,
        certificate,
        layer_norms,
        layer_budget: budget,
        offending_layer: if reason.is_some() { offending_layer } else { None },
        reason,
    }
}

/// Whether the network is farther than [`KINK_REJECT`] from every
/// nondifferentiable point at `x`.
pub fn smooth_at(net: &Network, x: &[f64]) -> bool {
    net.kink_margin(x) > KINK_REJECT
}

/// Sign-aware check used by curve sweeps: `values` must move in `direction`.
pub fn is_monotone_sequence(values: &[f64], direction: Direction) -> bool {
    values.windows(2).all(|w| {
        let tol = 1e-9 * (1.0 + w[0].abs());
        match direction {
            Direction::Increasing => w[1] >= w[0] - tol,
            Direction::Decreasing => w[1] <= w[0] + tol,
            Direction::Free => true,
        }
    })
}
