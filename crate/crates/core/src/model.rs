//! Dense classifier core: softmax regression (`hidden_dim == 0`) or a
//! one-hidden-layer MLP, softmax cross-entropy, and exact mean-over-batch
//! gradients.
//!
//! Parameters live in one flat vector, row-major:
//!
//! ```text
//! softmax: W[classes][input] | b[classes]
//! mlp:     W1[hidden][input] | b1[hidden] | W2[classes][hidden] | b2[classes]
//! ```
//!
//! Every reduction over batch rows runs in ascending row order, so results
//! are bitwise reproducible on a given platform.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Zero selects softmax regression.
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ModelSpec {
    pub const fn softmax(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            input_dim,
            hidden_dim: 0,
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub const fn mlp(
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        activation: Activation,
    ) -> Self {
        ModelSpec {
            input_dim,
            hidden_dim,
            num_classes,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec("num_classes must be at least 2".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        if self.hidden_dim == 0 {
            self.input_dim * self.num_classes + self.num_classes
        } else {
            self.input_dim * self.hidden_dim
                + self.hidden_dim
                + self.hidden_dim * self.num_classes
                + self.num_classes
        }
    }

    /// Width of the vector feeding the output layer.
    fn output_fan_in(&self) -> usize {
        if self.hidden_dim == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Model parameters stamped with the server's logical clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub values: Vec<f64>,
    pub spec: ModelSpec,
    pub clock: u64,
}

impl ModelParams {
    pub fn zeros(spec: ModelSpec) -> Self {
        ModelParams {
            values: vec![0.0; spec.param_count()],
            spec,
            clock: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// In-place form of [`apply_step`].
    pub fn step(&mut self, direction: &[f64], scale: f64) -> Result<()> {
        if direction.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                what: "step direction",
                expected: self.values.len(),
                found: direction.len(),
            });
        }
        if !scale.is_finite() {
            return Err(Error::NonFinite("step scale"));
        }
        for (v, d) in self.values.iter_mut().zip(direction) {
            *v -= scale * d;
        }
        self.clock += 1;
        Ok(())
    }

    fn view(&self) -> View<'_> {
        View::new(&self.spec, &self.values)
    }
}

/// A mini-batch: `n` rows of `dim` features plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl Batch {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument(
                "batch must hold at least one row".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "batch feature dimension must be positive".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                what: "batch features",
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch features"));
        }
        Ok(Batch {
            features,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label_counts(&self, num_classes: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_classes];
        for &y in &self.labels {
            if y < num_classes {
                counts[y] += 1;
            }
        }
        counts
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.dim != spec.input_dim {
            return Err(Error::DimensionMismatch {
                what: "batch feature dimension",
                expected: spec.input_dim,
                found: self.dim,
            });
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= spec.num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {})",
                spec.num_classes
            )));
        }
        Ok(())
    }
}

/// Borrowed slices of the flat parameter vector.
struct View<'a> {
    spec: &'a ModelSpec,
    w1: &'a [f64],
    b1: &'a [f64],
    w_out: &'a [f64],
    b_out: &'a [f64],
}

impl<'a> View<'a> {
    fn new(spec: &'a ModelSpec, values: &'a [f64]) -> Self {
        let (w1_len, b1_len) = (spec.input_dim * spec.hidden_dim, spec.hidden_dim);
        let (w1, rest) = values.split_at(w1_len);
        let (b1, rest) = rest.split_at(b1_len);
        let (w_out, b_out) = rest.split_at(spec.output_fan_in() * spec.num_classes);
        View {
            spec,
            w1,
            b1,
            w_out,
            b_out,
        }
    }
}

/// Per-sample scratch space, reused across rows.
struct Scratch {
    pre: Vec<f64>,
    act: Vec<f64>,
    logits: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ModelSpec) -> Self {
        Scratch {
            pre: vec![0.0; spec.hidden_dim],
            act: vec![0.0; spec.hidden_dim],
            logits: vec![0.0; spec.num_classes],
            delta_hidden: vec![0.0; spec.hidden_dim],
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Fills `s.logits` (and the hidden buffers for an MLP).
fn forward(view: &View<'_>, x: &[f64], s: &mut Scratch) {
    let spec = view.spec;
    let input: &[f64] = if spec.hidden_dim == 0 {
        x
    } else {
        for j in 0..spec.hidden_dim {
            let z = dot(&view.w1[j * spec.input_dim..(j + 1) * spec.input_dim], x) + view.b1[j];
            s.pre[j] = z;
            s.act[j] = spec.activation.apply(z);
        }
        &s.act
    };
    let fan_in = spec.output_fan_in();
    for c in 0..spec.num_classes {
        s.logits[c] = dot(&view.w_out[c * fan_in..(c + 1) * fan_in], input) + view.b_out[c];
    }
}

/// Turns logits into probabilities in place and returns log-sum-exp.
fn softmax_in_place(logits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
    max + sum.ln()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

fn check_params(params: &ModelParams) -> Result<()> {
    params.spec.validate()?;
    if params.values.len() != params.spec.param_count() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: params.spec.param_count(),
            found: params.values.len(),
        });
    }
    Ok(())
}

/// Zero-mean uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero
/// biases, clock 0.
pub fn init_params(spec: ModelSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "init_params");
    let mut params = ModelParams::zeros(spec);
    let mut fill = |w: &mut [f64], fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in w {
            *v = rng.random_range(-bound..bound);
        }
    };
    let w1_len = spec.input_dim * spec.hidden_dim;
    let out_offset = w1_len + spec.hidden_dim;
    let out_len = spec.output_fan_in() * spec.num_classes;
    if spec.hidden_dim > 0 {
        fill(&mut params.values[..w1_len], spec.input_dim);
    }
    fill(
        &mut params.values[out_offset..out_offset + out_len],
        spec.output_fan_in(),
    );
    Ok(params)
}

/// Mean softmax cross-entropy over the batch.
pub fn loss(params: &ModelParams, batch: &Batch) -> Result<f64> {
    check_params(params)?;
    batch.check(&params.spec)?;
    let view = params.view();
    let mut s = Scratch::new(&params.spec);
    let mut total = 0.0;
    for (i, &y) in batch.labels.iter().enumerate() {
        forward(&view, batch.row(i), &mut s);
        total += log_sum_exp(&s.logits) - s.logits[y];
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of [`loss`] with respect to every parameter.
pub fn gradient(params: &ModelParams, batch: &Batch) -> Result<Vec<f64>> {
    loss_and_gradient(params, batch).map(|(_, g)| g)
}

pub fn loss_and_gradient(params: &ModelParams, batch: &Batch) -> Result<(f64, Vec<f64>)> {
    check_params(params)?;
    batch.check(&params.spec)?;
    let spec = params.spec;
    let view = params.view();
    let mut grad = vec![0.0; params.values.len()];
    let mut s = Scratch::new(&spec);
    let mut total = 0.0;

    let w1_len = spec.input_dim * spec.hidden_dim;
    let fan_in = spec.output_fan_in();
    {
        let (g_w1, rest) = grad.split_at_mut(w1_len);
        let (g_b1, rest) = rest.split_at_mut(spec.hidden_dim);
        let (g_wout, g_bout) = rest.split_at_mut(fan_in * spec.num_classes);

        for (i, &y) in batch.labels.iter().enumerate() {
            let x = batch.row(i);
            forward(&view, x, &mut s);
            let logit_y = s.logits[y];
            total += softmax_in_place(&mut s.logits) - logit_y;
            // logits now hold dL/dlogits = p - onehot(y)
            s.logits[y] -= 1.0;

            let input: &[f64] = if spec.hidden_dim == 0 { x } else { &s.act };
            for c in 0..spec.num_classes {
                let d = s.logits[c];
                axpy(&mut g_wout[c * fan_in..(c + 1) * fan_in], d, input);
                g_bout[c] += d;
            }
            if spec.hidden_dim > 0 {
                s.delta_hidden.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..spec.num_classes {
                    axpy(
                        &mut s.delta_hidden,
                        s.logits[c],
                        &view.w_out[c * fan_in..(c + 1) * fan_in],
                    );
                }
                for j in 0..spec.hidden_dim {
                    let dz = s.delta_hidden[j] * spec.activation.derivative(s.pre[j], s.act[j]);
                    if dz != 0.0 {
                        axpy(
                            &mut g_w1[j * spec.input_dim..(j + 1) * spec.input_dim],
                            dz,
                            x,
                        );
                        g_b1[j] += dz;
                    }
                }
            }
        }
    }
    let inv_n = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok((total * inv_n, grad))
}

/// `values - scale * direction`, with the clock advanced by one.
pub fn apply_step(params: &ModelParams, direction: &[f64], scale: f64) -> Result<ModelParams> {
    let mut next = params.clone();
    next.step(direction, scale)?;
    Ok(next)
}

/// Smallest |numerical gradient| used as the relative-error denominator.
const FD_FLOOR: f64 = 1e-4;

/// Max over parameters of `|analytic - central_difference| / max(|central_difference|, 1e-4)`.
pub fn finite_diff_check(params: &ModelParams, batch: &Batch, step: f64) -> Result<f64> {
    finite_diff_check_with(params, batch, step, gradient)
}

/// [`finite_diff_check`] against an arbitrary analytic gradient routine.
pub fn finite_diff_check_with<F>(
    params: &ModelParams,
    batch: &Batch,
    step: f64,
    analytic: F,
) -> Result<f64>
where
    F: Fn(&ModelParams, &Batch) -> Result<Vec<f64>>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let g = analytic(params, batch)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (k, &gk) in g.iter().enumerate() {
        let orig = probe.values[k];
        probe.values[k] = orig + step;
        let plus = loss(&probe, batch)?;
        probe.values[k] = orig - step;
        let minus = loss(&probe, batch)?;
        probe.values[k] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (gk - numeric).abs() / numeric.abs().max(FD_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub fn predict(params: &ModelParams, x: &[f64]) -> usize {
    let mut s = Scratch::new(&params.spec);
    predict_with(&params.view(), x, &mut s)
}

fn predict_with(view: &View<'_>, x: &[f64], s: &mut Scratch) -> usize {
    forward(view, x, s);
    let mut best = 0;
    for c in 1..s.logits.len() {
        if s.logits[c] > s.logits[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Per-class recall; NaN for classes absent from the evaluation set.
    pub per_class_recall: Vec<f64>,
}

/// Accuracy and per-class recall over row-major `features`.
pub fn evaluate(params: &ModelParams, features: &[f64], labels: &[usize]) -> Result<Evaluation> {
    check_params(params)?;
    let spec = params.spec;
    if features.len() != labels.len() * spec.input_dim {
        return Err(Error::DimensionMismatch {
            what: "evaluation features",
            expected: labels.len() * spec.input_dim,
            found: features.len(),
        });
    }
    let view = params.view();
    let mut s = Scratch::new(&spec);
    let mut hits = vec![0u64; spec.num_classes];
    let mut totals = vec![0u64; spec.num_classes];
    for (i, &y) in labels.iter().enumerate() {
        let x = &features[i * spec.input_dim..(i + 1) * spec.input_dim];
        let p = predict_with(&view, x, &mut s);
        if y < spec.num_classes {
            totals[y] += 1;
            if p == y {
                hits[y] += 1;
            }
        }
    }
    let correct: u64 = hits.iter().sum();
    let accuracy = if labels.is_empty() {
        0.0
    } else {
        correct as f64 / labels.len() as f64
    };
    let per_class_recall = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| {
            if t == 0 {
                f64::NAN
            } else {
                h as f64 / t as f64
            }
        })
        .collect();
    Ok(Evaluation {
        accuracy,
        per_class_recall,
    })
}
