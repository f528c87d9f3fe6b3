//! Supervised temporal backpropagation through real-valued proxy weights.
//!
//! The forward pass runs on the binary synapses. Errors are measured between
//! actual and target output firing times, propagated backwards through the
//! proxies, and applied to the proxies with plain online SGD. The binary
//! weight gradient is handed to the proxy unchanged (straight-through).

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::encoding::{encode_image, SpikeTimes};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::network::{classify, network_forward, Decision, Layer, Mode, Network};

/// Lower bound kept on every layer's scaling factor during training.
pub const ALPHA_FLOOR: f32 = 1e-6;

/// Below this L1 norm a delta vector is left unnormalized.
pub const DELTA_NORM_EPS: f64 = 1e-12;

/// Initialization and neuron parameters of one non-input layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInit {
    pub weight_low: f32,
    pub weight_high: f32,
    pub alpha: f32,
    pub theta: f32,
}

impl LayerInit {
    pub fn new(weight_low: f32, weight_high: f32, alpha: f32, theta: f32) -> Self {
        Self { weight_low, weight_high, alpha, theta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub t_max: u32,
    /// Widths of the hidden layers; the output width comes from the dataset.
    pub hidden: Vec<usize>,
    /// One entry per non-input layer, the last one for the output layer.
    pub layers: Vec<LayerInit>,
    pub eta: f64,
    pub mu: f64,
    pub gamma: u32,
    pub lambda: f64,
    pub epochs: usize,
    pub decay_fraction: f64,
    pub decay_period: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Mnist,
    Fashion,
    FashionDeep,
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = |hidden: Vec<usize>, layers: Vec<LayerInit>| Self {
            t_max: 256,
            hidden,
            layers,
            eta: 0.1,
            mu: 0.01,
            gamma: 1,
            lambda: 1e-6,
            epochs: 100,
            decay_fraction: 0.3,
            decay_period: 10,
            seed: 0,
        };
        match preset {
            Preset::Mnist => base(
                vec![600],
                vec![LayerInit::new(0.0, 5.0, 5.0, 100.0), LayerInit::new(0.0, 50.0, 5.0, 100.0)],
            ),
            Preset::Fashion => base(
                vec![1000],
                vec![LayerInit::new(0.0, 1.0, 5.0, 700.0), LayerInit::new(0.0, 1.0, 10.0, 700.0)],
            ),
            Preset::FashionDeep => base(vec![600, 600], vec![LayerInit::new(-10.0, 10.0, 10.0, 500.0); 3]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.t_max == 0 {
            return fail("t_max must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return fail(format!("mu must be positive, got {}", self.mu));
        }
        if self.gamma < 1 {
            return fail("gamma must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.decay_fraction) {
            return fail(format!("decay fraction {} outside [0, 1)", self.decay_fraction));
        }
        if self.decay_period == 0 {
            return fail("decay period must be at least one epoch".into());
        }
        if self.layers.len() != self.hidden.len() + 1 {
            return fail(format!(
                "{} hidden layers need {} layer settings, got {}",
                self.hidden.len(),
                self.hidden.len() + 1,
                self.layers.len()
            ));
        }
        if self.hidden.contains(&0) {
            return fail("hidden layers must be non-empty".into());
        }
        for (l, init) in self.layers.iter().enumerate() {
            if !(init.weight_low.is_finite() && init.weight_high.is_finite()) || init.weight_low > init.weight_high {
                return fail(format!(
                    "layer {l}: bad weight range [{}, {}]",
                    init.weight_low, init.weight_high
                ));
            }
            if !(init.alpha > 0.0 && init.alpha.is_finite()) || !(init.theta > 0.0 && init.theta.is_finite()) {
                return fail(format!("layer {l}: alpha and theta must be positive"));
            }
        }
        Ok(())
    }

    /// Full layer widths for a given input and output size.
    pub fn architecture(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        std::iter::once(inputs).chain(self.hidden.iter().copied()).chain(std::iter::once(outputs)).collect()
    }

    /// Learning rates in effect during `epoch` (0-based).
    pub fn rates_at(&self, epoch: usize) -> Rates {
        let factor = (1.0 - self.decay_fraction).powi((epoch / self.decay_period) as i32);
        Rates { eta: self.eta * factor, mu: self.mu * factor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub eta: f64,
    pub mu: f64,
}

/// Draws every layer's weights uniformly from its configured range.
pub fn init_network(arch: &[usize], cfg: &TrainConfig) -> Result<Network> {
    if arch.len() < 2 {
        return Err(Error::Config("architecture needs an input and at least one neuron layer".into()));
    }
    if arch.len() != cfg.layers.len() + 1 {
        return Err(Error::Config(format!(
            "architecture has {} neuron layers but the configuration describes {}",
            arch.len() - 1,
            cfg.layers.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = Vec::with_capacity(cfg.layers.len());
    for (l, init) in cfg.layers.iter().enumerate() {
        if init.weight_low.partial_cmp(&init.weight_high).is_none_or(|o| o.is_gt()) {
            return Err(Error::Config(format!(
                "layer {l}: empty weight range [{}, {}]",
                init.weight_low, init.weight_high
            )));
        }
        let (inputs, outputs) = (arch[l], arch[l + 1]);
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(init.weight_low..=init.weight_high)).collect();
        layers.push(Layer::new(inputs, outputs, weights, init.alpha, init.theta)?);
    }
    Network::new(layers, cfg.t_max)
}

/// Target firing time of each output neuron.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetTimes(pub Vec<u32>);

/// Pushes the labelled neuron `gamma` steps ahead of the earliest output
/// spike and every other neuron at least `gamma` steps behind it. When the
/// whole output layer is silent the label is asked to fire at `t_max - gamma`.
pub fn compute_targets(output: &SpikeTimes, label: usize, gamma: u32) -> Result<TargetTimes> {
    if label >= output.len() {
        return Err(Error::InputDomain(format!("label {label} out of range for {} outputs", output.len())));
    }
    let t_max = output.t_max();
    if output.all_silent() {
        let mut targets = vec![t_max; output.len()];
        targets[label] = t_max.saturating_sub(gamma);
        return Ok(TargetTimes(targets));
    }
    let tau = output.times().iter().copied().min().unwrap_or(t_max);
    let late = (tau + gamma).min(t_max);
    let targets = output
        .times()
        .iter()
        .enumerate()
        .map(|(j, &t)| if j == label { tau.saturating_sub(gamma) } else { t.max(late) })
        .collect();
    Ok(TargetTimes(targets))
}

/// `e_j = (T_j - t_j) / t_max`.
pub fn compute_errors(actual: &SpikeTimes, targets: &TargetTimes) -> Result<Vec<f64>> {
    if actual.len() != targets.0.len() {
        return Err(Error::Structure(format!("{} outputs but {} targets", actual.len(), targets.0.len())));
    }
    let t_max = f64::from(actual.t_max());
    Ok(actual
        .times()
        .iter()
        .zip(&targets.0)
        .map(|(&t, &target)| (f64::from(target) - f64::from(t)) / t_max)
        .collect())
}

/// Half the squared error.
pub fn mse(errors: &[f64]) -> f64 {
    0.5 * errors.iter().map(|e| e * e).sum::<f64>()
}

/// Sum of squared proxy weights over the whole network.
pub fn squared_weight_norm(net: &Network) -> f64 {
    net.layers()
        .iter()
        .map(|l| l.weights().iter().map(|&w| f64::from(w) * f64::from(w)).sum::<f64>())
        .sum()
}

/// `L = 1/2 sum(e^2) + lambda * sum(W^2)`.
pub fn compute_loss(errors: &[f64], net: &Network, lambda: f64) -> f64 {
    let reg = if lambda == 0.0 { 0.0 } else { lambda * squared_weight_norm(net) };
    mse(errors) + reg
}

pub fn output_deltas(errors: &[f64], t_max: u32) -> Vec<f64> {
    let t_max = f64::from(t_max);
    errors.iter().map(|e| -e / t_max).collect()
}

/// Backpropagates deltas from layer `l + 1` to layer `l` through the real
/// proxies of `layer_next`, counting only causal pairs (`t_j <= t_k`).
pub fn hidden_deltas(
    delta_next: &[f64],
    layer_next: &Layer,
    times_l: &SpikeTimes,
    times_next: &SpikeTimes,
) -> Result<Vec<f64>> {
    if delta_next.len() != layer_next.outputs()
        || times_next.len() != layer_next.outputs()
        || times_l.len() != layer_next.inputs()
    {
        return Err(Error::Structure("delta, layer and spike time shapes disagree".into()));
    }
    let mut delta = vec![0f64; layer_next.inputs()];
    let pre = times_l.times();
    for (k, &dk) in delta_next.iter().enumerate() {
        if dk == 0.0 {
            continue;
        }
        let tk = times_next.times()[k];
        for ((d, &w), &tj) in delta.iter_mut().zip(layer_next.weight_row(k)).zip(pre) {
            if tj <= tk {
                *d += dk * f64::from(w);
            }
        }
    }
    Ok(delta)
}

/// Divides by the L1 norm, leaving near-zero vectors untouched.
pub fn normalize_deltas(delta: &mut [f64]) {
    let norm: f64 = delta.iter().map(|d| d.abs()).sum();
    if norm >= DELTA_NORM_EPS {
        for d in delta.iter_mut() {
            *d /= norm;
        }
    }
}

/// `dL/dW_ji = dL/dB_ji = -alpha * delta_j` for causal pairs, zero otherwise.
pub fn weight_gradients(delta: &[f64], alpha: f32, times_pre: &SpikeTimes, times_post: &SpikeTimes) -> Vec<f64> {
    let mut out = vec![0f64; delta.len() * times_pre.len()];
    weight_gradients_into(delta, alpha, times_pre, times_post, &mut out);
    out
}

fn weight_gradients_into(delta: &[f64], alpha: f32, times_pre: &SpikeTimes, times_post: &SpikeTimes, out: &mut [f64]) {
    let inputs = times_pre.len();
    let alpha = f64::from(alpha);
    for (j, row) in out.chunks_exact_mut(inputs).enumerate() {
        let g = -alpha * delta[j];
        if g == 0.0 {
            row.fill(0.0);
            continue;
        }
        let tj = times_post.times()[j];
        for (r, &ti) in row.iter_mut().zip(times_pre.times()) {
            *r = if ti <= tj { g } else { 0.0 };
        }
    }
}

/// `dL/dalpha = -sum_j delta_j * sum_i B_ji [t_i <= t_j]`.
pub fn alpha_gradient(delta: &[f64], layer: &Layer, times_pre: &SpikeTimes, times_post: &SpikeTimes) -> f64 {
    let mut total = 0f64;
    for (j, &dj) in delta.iter().enumerate() {
        if dj == 0.0 {
            continue;
        }
        let tj = times_post.times()[j];
        let causal: i64 = layer
            .sign_row(j)
            .iter()
            .zip(times_pre.times())
            .filter(|&(_, &ti)| ti <= tj)
            .map(|(&s, _)| i64::from(s))
            .sum();
        total += dj * causal as f64;
    }
    -total
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    /// Row-major `outputs x inputs`, same layout as the layer's weights.
    pub weights: Vec<f64>,
    pub alpha: f64,
    /// Normalized deltas used for this layer.
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerGradients {
                weights: vec![0.0; l.inputs() * l.outputs()],
                alpha: 0.0,
                deltas: vec![0.0; l.outputs()],
            })
            .collect();
        Self { layers }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.alpha.is_finite() && g.weights.iter().chain(&g.deltas).all(|v| v.is_finite()))
    }
}

/// Loss terms of one sample, measured before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss {
    pub mse: f64,
    pub total: f64,
}

/// Fills `grads` from a training-mode trace and returns the sample's loss.
pub fn compute_gradients_into(
    net: &Network,
    trace: &crate::network::ForwardTrace,
    label: usize,
    cfg: &TrainConfig,
    grads: &mut Gradients,
) -> Result<SampleLoss> {
    let output = &trace.output().spikes;
    let targets = compute_targets(output, label, cfg.gamma)?;
    let errors = compute_errors(output, &targets)?;
    let loss = SampleLoss { mse: mse(&errors), total: compute_loss(&errors, net, cfg.lambda) };

    let mut delta = output_deltas(&errors, net.t_max());
    normalize_deltas(&mut delta);
    for l in (0..net.layers().len()).rev() {
        let layer = &net.layers()[l];
        let pre = trace.layer_input(l);
        let post = &trace.layers[l].spikes;
        let g = &mut grads.layers[l];
        weight_gradients_into(&delta, layer.alpha(), pre, post, &mut g.weights);
        g.alpha = alpha_gradient(&delta, layer, pre, post);
        let mut next = if l > 0 { hidden_deltas(&delta, layer, pre, post)? } else { Vec::new() };
        if l > 0 {
            normalize_deltas(&mut next);
        }
        g.deltas = std::mem::replace(&mut delta, next);
    }
    Ok(loss)
}

pub fn compute_gradients(
    net: &Network,
    trace: &crate::network::ForwardTrace,
    label: usize,
    cfg: &TrainConfig,
) -> Result<(Gradients, SampleLoss)> {
    let mut grads = Gradients::zeros_like(net);
    let loss = compute_gradients_into(net, trace, label, cfg, &mut grads)?;
    Ok((grads, loss))
}

/// `W <- W - eta * (dL/dW + 2 lambda W)` and `alpha <- alpha - mu * dL/dalpha`.
///
/// Nothing is modified if any gradient or updated value is not finite.
pub fn apply_updates(net: &mut Network, grads: &Gradients, rates: Rates, lambda: f64) -> Result<()> {
    if grads.layers.len() != net.layers().len() {
        return Err(Error::Structure("gradient and network depth differ".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient; update skipped".into()));
    }
    let decay = 1.0 - 2.0 * rates.eta * lambda;
    let new_weight = |w: f32, g: f64| (f64::from(w) * decay - rates.eta * g) as f32;
    let mut alphas = Vec::with_capacity(grads.layers.len());
    for (l, (layer, g)) in net.layers().iter().zip(&grads.layers).enumerate() {
        if g.weights.len() != layer.weights().len() {
            return Err(Error::Structure(format!("layer {l}: gradient shape mismatch")));
        }
        if let Some(k) = layer.weights().iter().zip(&g.weights).position(|(&w, &gw)| !new_weight(w, gw).is_finite()) {
            return Err(Error::Numeric(format!("layer {l}: update of weight {k} is not finite")));
        }
        let alpha = (f64::from(layer.alpha()) - rates.mu * g.alpha) as f32;
        if !alpha.is_finite() {
            return Err(Error::Numeric(format!("layer {l}: scaling factor update is not finite")));
        }
        alphas.push(alpha.max(ALPHA_FLOOR));
    }
    for ((layer, g), alpha) in net.layers_mut().iter_mut().zip(&grads.layers).zip(alphas) {
        let inputs = layer.inputs();
        layer.modify_weights(|weights| {
            for (j, row) in weights.chunks_exact_mut(inputs).enumerate() {
                let grow = &g.weights[j * inputs..(j + 1) * inputs];
                if lambda == 0.0 && g.deltas.get(j) == Some(&0.0) {
                    continue;
                }
                for (w, &gw) in row.iter_mut().zip(grow) {
                    *w = new_weight(*w, gw);
                }
            }
        });
        layer.set_alpha(alpha)?;
    }
    Ok(())
}

/// What one training step observed before updating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: SampleLoss,
    pub decision: Decision,
}

/// Reusable gradient buffers for repeated training steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    grads: Gradients,
}

impl Trainer {
    pub fn new(net: &Network) -> Self {
        Self { grads: Gradients::zeros_like(net) }
    }

    pub fn gradients(&self) -> &Gradients {
        &self.grads
    }

    pub fn step(
        &mut self,
        net: &mut Network,
        input: &SpikeTimes,
        label: usize,
        cfg: &TrainConfig,
        rates: Rates,
    ) -> Result<StepReport> {
        let trace = network_forward(net, input, Mode::Training)?;
        let decision = classify(&trace);
        let loss = compute_gradients_into(net, &trace, label, cfg, &mut self.grads)?;
        apply_updates(net, &self.grads, rates, cfg.lambda)?;
        Ok(StepReport { loss, decision })
    }
}

/// One forward, backward and update on a single sample at the configured
/// initial learning rates. Returns the pre-update loss.
pub fn train_step(net: &mut Network, input: &SpikeTimes, label: usize, cfg: &TrainConfig) -> Result<StepReport> {
    Trainer::new(net).step(net, input, label, cfg, Rates { eta: cfg.eta, mu: cfg.mu })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub eta: f64,
    pub mu: f64,
    pub wall_seconds: f64,
    /// Samples whose update was dropped because it was not finite.
    pub aborted_samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,test_acc,eta,mu,wall_seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let test = r.test_acc.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.3}\n",
                r.epoch, r.train_loss, r.train_acc, test, r.eta, r.mu, r.wall_seconds
            ));
        }
        out
    }
}

/// Online SGD over shuffled epochs with step decay of both learning rates.
/// `on_epoch` runs after each epoch with the record and the current network.
pub fn fit(
    net: &mut Network,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Network),
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if train.input_size() != net.inputs() || train.num_classes() != net.outputs() {
        return Err(Error::Structure(format!(
            "dataset has {} inputs and {} classes, network expects {} and {}",
            train.input_size(),
            train.num_classes(),
            net.inputs(),
            net.outputs()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trainer = Trainer::new(net);
    let mut history = History::default();
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let rates = cfg.rates_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut aborted) = (0f64, 0usize, 0usize);
        for &k in &order {
            let input = encode_image(&train.images()[k], cfg.t_max)?;
            let label = train.labels()[k];
            match trainer.step(net, &input, label, cfg, rates) {
                Ok(report) => {
                    loss_sum += report.loss.mse;
                    correct += usize::from(report.decision.category == label);
                }
                Err(Error::Numeric(_)) => aborted += 1,
                Err(e) => return Err(e),
            }
        }
        let test_acc = match test {
            Some(ds) => Some(evaluation::accuracy(net, ds)?),
            None => None,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            test_acc,
            eta: rates.eta,
            mu: rates.mu,
            wall_seconds: start.elapsed().as_secs_f64(),
            aborted_samples: aborted,
        };
        on_epoch(&record, net);
        history.epochs.push(record);
    }
    Ok(history)
}
