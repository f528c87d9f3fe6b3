//! Layers of single-spike integrate-and-fire neurons with binary synapses.
//!
//! A neuron's membrane potential at step `t` is `alpha * c(t)` where `c(t)` is
//! the integer net count of excitatory minus inhibitory presynaptic spikes
//! delivered at or before `t`. The neuron fires once, at the first step where
//! the potential reaches `theta`. Both forward paths in this module compare
//! `alpha * c` against `theta` in the same way, so they agree bit for bit.

use crate::encoding::SpikeTimes;
use crate::error::{Error, Result};

/// Binary value of a proxy weight. Zero maps to `+1`.
#[inline]
pub fn sign_of(w: f32) -> i8 {
    if w >= 0.0 {
        1
    } else {
        -1
    }
}

/// Elementwise sign of a weight slice.
pub fn binarize(weights: &[f32]) -> Result<Vec<i8>> {
    weights
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            if w.is_finite() {
                Ok(sign_of(w))
            } else {
                Err(Error::Numeric(format!("weight {k} is not finite ({w})")))
            }
        })
        .collect()
}

/// A fully connected layer of IF neurons.
///
/// `weights` holds the real-valued proxies in row-major `outputs x inputs`
/// order. The binary synapses are re-derived every time the proxies change.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f32>,
    signs: Vec<i8>,
    alpha: f32,
    theta: f32,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f32>, alpha: f32, theta: f32) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Structure(format!("layer dimensions must be positive, got {inputs}x{outputs}")));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::Structure(format!(
                "{outputs}x{inputs} layer needs {} weights, got {}",
                inputs * outputs,
                weights.len()
            )));
        }
        check_alpha(alpha)?;
        check_theta(theta)?;
        let signs = binarize(&weights)?;
        Ok(Self { inputs, outputs, weights, signs, alpha, theta })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Proxy weights onto postsynaptic neuron `j`.
    pub fn weight_row(&self, j: usize) -> &[f32] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign_row(&self, j: usize) -> &[i8] {
        &self.signs[j * self.inputs..(j + 1) * self.inputs]
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    pub fn theta(&self) -> f32 {
        self.theta
    }

    pub fn set_alpha(&mut self, alpha: f32) -> Result<()> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(())
    }

    pub fn set_theta(&mut self, theta: f32) -> Result<()> {
        check_theta(theta)?;
        self.theta = theta;
        Ok(())
    }

    /// Replaces the proxy weights and re-derives the signs.
    pub fn set_weights(&mut self, weights: Vec<f32>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::Structure(format!(
                "expected {} weights, got {}",
                self.weights.len(),
                weights.len()
            )));
        }
        self.signs = binarize(&weights)?;
        self.weights = weights;
        Ok(())
    }

    /// Mutates the proxies in place. The caller must leave them finite.
    pub(crate) fn modify_weights(&mut self, f: impl FnOnce(&mut [f32])) {
        f(&mut self.weights);
        for (s, &w) in self.signs.iter_mut().zip(&self.weights) {
            *s = sign_of(w);
        }
        debug_assert!(self.weights.iter().all(|w| w.is_finite()));
    }

    /// Whether a net count of `count` puts the potential at or above threshold.
    #[inline]
    pub fn crosses(&self, count: i32) -> bool {
        f64::from(self.alpha) * f64::from(count) >= f64::from(self.theta)
    }
}

fn check_alpha(alpha: f32) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("scaling factor must be positive and finite, got {alpha}")))
    }
}

fn check_theta(theta: f32) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold must be positive and finite, got {theta}")))
    }
}

/// Firing times and final net counts of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerOutput {
    pub spikes: SpikeTimes,
    /// Net spike count per neuron at the end of the simulated window.
    pub counts: Vec<i32>,
}

/// Presynaptic spike indices grouped by delivery time.
struct SpikeBuckets {
    offsets: Vec<usize>,
    order: Vec<usize>,
}

impl SpikeBuckets {
    fn new(spikes: &SpikeTimes) -> Self {
        let t_max = spikes.t_max() as usize;
        let mut offsets = vec![0usize; t_max + 2];
        for (&t, &fired) in spikes.times().iter().zip(spikes.fired()) {
            if fired {
                offsets[t as usize + 1] += 1;
            }
        }
        for t in 0..=t_max {
            offsets[t + 1] += offsets[t];
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0usize; offsets[t_max + 1]];
        for (i, (&t, &fired)) in spikes.times().iter().zip(spikes.fired()).enumerate() {
            if fired {
                order[cursor[t as usize]] = i;
                cursor[t as usize] += 1;
            }
        }
        Self { offsets, order }
    }

    fn at(&self, t: u32) -> &[usize] {
        let t = t as usize;
        &self.order[self.offsets[t]..self.offsets[t + 1]]
    }

    fn nonempty_times(&self) -> Vec<u32> {
        (0..self.offsets.len() - 1)
            .filter(|&t| self.offsets[t + 1] > self.offsets[t])
            .map(|t| t as u32)
            .collect()
    }
}

fn check_input(input: &SpikeTimes, layer: &Layer) -> Result<()> {
    if input.len() != layer.inputs {
        return Err(Error::Structure(format!(
            "layer expects {} inputs, got {} spike times",
            layer.inputs,
            input.len()
        )));
    }
    Ok(())
}

/// Event-driven simulation of one layer over steps `0..=t_max`.
///
/// Input spikes are bucketed by time; each neuron then walks the buckets in
/// order, adding its binary synapses and recording the first step at which
/// its potential reaches threshold. Neurons that never cross get the `t_max`
/// sentinel and are flagged as not fired, which doubles as the fake spike
/// used by training.
pub fn layer_forward(input: &SpikeTimes, layer: &Layer) -> Result<LayerOutput> {
    check_input(input, layer)?;
    let t_max = input.t_max();
    let buckets = SpikeBuckets::new(input);
    let active = buckets.nonempty_times();
    let mut times = vec![t_max; layer.outputs];
    let mut fired = vec![false; layer.outputs];
    let mut counts = vec![0i32; layer.outputs];
    for j in 0..layer.outputs {
        let row = layer.sign_row(j);
        let mut c = 0i32;
        for &t in &active {
            for &i in buckets.at(t) {
                c += i32::from(row[i]);
            }
            if !fired[j] && layer.crosses(c) {
                fired[j] = true;
                times[j] = t;
            }
        }
        counts[j] = c;
    }
    Ok(LayerOutput { spikes: SpikeTimes::from_parts_unchecked(times, fired, t_max), counts })
}

/// Reference simulation that literally steps through every time step and
/// every synapse. Same contract as [`layer_forward`].
pub fn layer_forward_dense(input: &SpikeTimes, layer: &Layer) -> Result<LayerOutput> {
    check_input(input, layer)?;
    let t_max = input.t_max();
    let mut times = vec![t_max; layer.outputs];
    let mut fired = vec![false; layer.outputs];
    let mut counts = vec![0i32; layer.outputs];
    for t in 0..=t_max {
        for j in 0..layer.outputs {
            for i in 0..layer.inputs {
                if input.fired()[i] && input.times()[i] == t {
                    counts[j] += i32::from(layer.signs[j * layer.inputs + i]);
                }
            }
            if !fired[j] && layer.crosses(counts[j]) {
                fired[j] = true;
                times[j] = t;
            }
        }
    }
    Ok(LayerOutput { spikes: SpikeTimes::from_parts_unchecked(times, fired, t_max), counts })
}

/// A feed-forward stack of IF layers sharing one simulation window.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    t_max: u32,
    proxy_weights: bool,
}

impl Network {
    pub fn new(layers: Vec<Layer>, t_max: u32) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Structure("network needs at least one layer".into()));
        }
        if t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Structure(format!(
                    "layer {l} has {} outputs but layer {} expects {} inputs",
                    pair[0].outputs,
                    l + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers, t_max, proxy_weights: true })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    /// Number of output neurons, one per category.
    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Layer widths including the input layer, e.g. `[784, 600, 10]`.
    pub fn architecture(&self) -> Vec<usize> {
        std::iter::once(self.inputs()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    /// False when the weights are only the signs restored from a deployment file.
    pub fn has_proxy_weights(&self) -> bool {
        self.proxy_weights
    }

    pub(crate) fn set_proxy_weights(&mut self, present: bool) {
        self.proxy_weights = present;
    }

    /// Copy of the network with every layer's threshold replaced.
    pub fn with_threshold(&self, theta: f32) -> Result<Self> {
        let mut net = self.clone();
        for layer in &mut net.layers {
            layer.set_theta(theta)?;
        }
        Ok(net)
    }
}

/// How far [`network_forward`] simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every layer runs to `t_max`; silent neurons carry fake spikes at `t_max`.
    Training,
    /// All layers advance together one step at a time and stop at the first
    /// output spike. Neurons that had not fired by then hold the sentinel.
    Inference,
}

/// Everything a forward pass records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardTrace {
    pub input: SpikeTimes,
    /// One entry per non-input layer.
    pub layers: Vec<LayerOutput>,
    /// Step of the first real output spike, or `t_max` if none fired.
    pub decision_time: u32,
}

impl ForwardTrace {
    pub fn output(&self) -> &LayerOutput {
        &self.layers[self.layers.len() - 1]
    }

    /// Presynaptic spikes seen by layer `l`.
    pub fn layer_input(&self, l: usize) -> &SpikeTimes {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].spikes
        }
    }
}

pub fn network_forward(net: &Network, input: &SpikeTimes, mode: Mode) -> Result<ForwardTrace> {
    if input.t_max() != net.t_max {
        return Err(Error::Structure(format!(
            "input encoded with t_max {} but network uses {}",
            input.t_max(),
            net.t_max
        )));
    }
    check_input(input, &net.layers[0])?;
    match mode {
        Mode::Training => {
            let mut layers: Vec<LayerOutput> = Vec::with_capacity(net.layers.len());
            for layer in &net.layers {
                let prev = layers.last().map_or(input, |o| &o.spikes);
                let out = layer_forward(prev, layer)?;
                layers.push(out);
            }
            let output = &layers[layers.len() - 1].spikes;
            let decision_time = first_real_spike(output).unwrap_or(net.t_max);
            Ok(ForwardTrace { input: input.clone(), layers, decision_time })
        }
        Mode::Inference => Ok(forward_until_decision(net, input)),
    }
}

fn first_real_spike(spikes: &SpikeTimes) -> Option<u32> {
    spikes
        .times()
        .iter()
        .zip(spikes.fired())
        .filter(|(_, &f)| f)
        .map(|(&t, _)| t)
        .min()
}

/// Time-synchronous sweep across layers that halts at the first output spike.
fn forward_until_decision(net: &Network, input: &SpikeTimes) -> ForwardTrace {
    let t_max = net.t_max;
    let buckets = SpikeBuckets::new(input);
    let mut counts: Vec<Vec<i32>> = net.layers.iter().map(|l| vec![0; l.outputs]).collect();
    let mut times: Vec<Vec<u32>> = net.layers.iter().map(|l| vec![t_max; l.outputs]).collect();
    let mut fired: Vec<Vec<bool>> = net.layers.iter().map(|l| vec![false; l.outputs]).collect();
    let mut decision_time = t_max;
    let mut incoming: Vec<usize> = Vec::new();
    let mut emitted: Vec<usize> = Vec::new();
    'time: for t in 0..=t_max {
        incoming.clear();
        incoming.extend_from_slice(buckets.at(t));
        for (l, layer) in net.layers.iter().enumerate() {
            emitted.clear();
            if !incoming.is_empty() {
                let c = &mut counts[l];
                for &i in &incoming {
                    for (j, cj) in c.iter_mut().enumerate() {
                        *cj += i32::from(layer.signs[j * layer.inputs + i]);
                    }
                }
                for j in 0..layer.outputs {
                    if !fired[l][j] && layer.crosses(c[j]) {
                        fired[l][j] = true;
                        times[l][j] = t;
                        emitted.push(j);
                    }
                }
            }
            std::mem::swap(&mut incoming, &mut emitted);
        }
        if !incoming.is_empty() {
            decision_time = t;
            break 'time;
        }
    }
    let layers = counts
        .into_iter()
        .zip(times)
        .zip(fired)
        .map(|((counts, times), fired)| LayerOutput {
            spikes: SpikeTimes::from_parts_unchecked(times, fired, t_max),
            counts,
        })
        .collect();
    ForwardTrace { input: input.clone(), layers, decision_time }
}

/// Outcome of reading out a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub category: usize,
    pub decision_time: u32,
    /// True when no output neuron fired and the maximum potential decided.
    pub fallback: bool,
}

/// The earliest output spike wins; ties go to the lowest index. Without any
/// real output spike the neuron with the largest final net count wins.
pub fn classify(trace: &ForwardTrace) -> Decision {
    let out = trace.output();
    let t_max = out.spikes.t_max();
    let earliest = out
        .spikes
        .times()
        .iter()
        .zip(out.spikes.fired())
        .enumerate()
        .filter(|(_, (_, &f))| f)
        .min_by_key(|&(j, (&t, _))| (t, j));
    match earliest {
        Some((j, (&t, _))) => Decision { category: j, decision_time: t, fallback: false },
        None => Decision { category: argmax_first(&out.counts), decision_time: t_max, fallback: true },
    }
}

fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

/// Test-time inference on the binary network.
pub fn predict(net: &Network, input: &SpikeTimes) -> Result<Decision> {
    Ok(classify(&network_forward(net, input, Mode::Inference)?))
}

/// Inference where each synapse adds its real-valued proxy weight instead of
/// `alpha * sign`. Potentials are accumulated in floating point.
pub fn predict_with_proxies(net: &Network, input: &SpikeTimes) -> Result<Decision> {
    if !net.proxy_weights {
        return Err(Error::Unsupported(
            "model holds only binary weights; real-valued proxies are required".into(),
        ));
    }
    check_input(input, &net.layers[0])?;
    let t_max = net.t_max;
    let mut spikes = input.clone();
    let mut potentials = Vec::new();
    for layer in &net.layers {
        let buckets = SpikeBuckets::new(&spikes);
        let active = buckets.nonempty_times();
        let theta = f64::from(layer.theta);
        let mut times = vec![t_max; layer.outputs];
        let mut fired = vec![false; layer.outputs];
        potentials = vec![0f64; layer.outputs];
        for j in 0..layer.outputs {
            let row = layer.weight_row(j);
            let mut v = 0f64;
            for &t in &active {
                for &i in buckets.at(t) {
                    v += f64::from(row[i]);
                }
                if !fired[j] && v >= theta {
                    fired[j] = true;
                    times[j] = t;
                }
            }
            potentials[j] = v;
        }
        spikes = SpikeTimes::from_parts_unchecked(times, fired, t_max);
    }
    let earliest = (0..spikes.len()).filter(|&j| spikes.fired()[j]).min_by_key(|&j| (spikes.times()[j], j));
    Ok(match earliest {
        Some(j) => Decision { category: j, decision_time: spikes.times()[j], fallback: false },
        None => Decision { category: argmax_first(&potentials), decision_time: t_max, fallback: true },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(inputs: usize, outputs: usize, w: &[f32], alpha: f32, theta: f32) -> Layer {
        Layer::new(inputs, outputs, w.to_vec(), alpha, theta).unwrap()
    }

    fn both(input: &SpikeTimes, l: &Layer) -> LayerOutput {
        let fast = layer_forward(input, l).unwrap();
        let dense = layer_forward_dense(input, l).unwrap();
        assert_eq!(fast, dense);
        fast
    }

    #[test]
    fn sign_rules() {
        assert_eq!(sign_of(-0.3), -1);
        assert_eq!(sign_of(0.0), 1);
        assert_eq!(sign_of(-0.0), 1);
        assert_eq!(binarize(&[2.5, -0.1, 0.0, 7.0]).unwrap(), vec![1, -1, 1, 1]);
        assert!(matches!(binarize(&[1.0, f32::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn two_excitatory_inputs_fire_at_second_spike() {
        let l = layer(2, 1, &[1.0, 1.0], 1.0, 2.0);
        let input = SpikeTimes::new(vec![0, 3], 10).unwrap();
        let out = both(&input, &l);
        assert_eq!(out.spikes.times(), &[3]);
        assert!(out.spikes.fired()[0]);
        assert_eq!(out.counts, vec![2]);
    }

    #[test]
    fn cancelling_inputs_never_cross() {
        let l = layer(2, 1, &[1.0, -1.0], 1.0, 1.0);
        let input = SpikeTimes::new(vec![1, 1], 10).unwrap();
        let out = both(&input, &l);
        assert_eq!(out.spikes.times(), &[10]);
        assert!(!out.spikes.fired()[0]);
        assert_eq!(out.counts, vec![0]);
    }

    #[test]
    fn single_spike_reaches_threshold_immediately() {
        let l = layer(1, 1, &[0.4], 1.0, 1.0);
        let input = SpikeTimes::new(vec![7], 20).unwrap();
        assert_eq!(both(&input, &l).spikes.times(), &[7]);
    }

    #[test]
    fn no_input_spikes_means_all_sentinels() {
        let l = layer(3, 2, &[1.0; 6], 1.0, 10.0);
        let input = SpikeTimes::with_fired(vec![5; 3], vec![false; 3], 5).unwrap();
        let out = both(&input, &l);
        assert_eq!(out.spikes.times(), &[5, 5]);
        assert!(out.spikes.all_silent());
    }

    #[test]
    fn layer_rejects_wrong_width() {
        let l = layer(2, 1, &[1.0, 1.0], 1.0, 1.0);
        let input = SpikeTimes::new(vec![0, 0, 0], 4).unwrap();
        assert!(matches!(layer_forward(&input, &l), Err(Error::Structure(_))));
        assert!(matches!(layer_forward_dense(&input, &l), Err(Error::Structure(_))));
    }

    #[test]
    fn network_rejects_mismatched_layers() {
        let a = layer(2, 3, &[1.0; 6], 1.0, 1.0);
        let b = layer(2, 1, &[1.0; 2], 1.0, 1.0);
        assert!(matches!(Network::new(vec![a, b], 10), Err(Error::Structure(_))));
    }

    #[test]
    fn identity_scale_layer_copies_input_time() {
        // theta below one spike increment: every neuron fires with its first
        // excitatory input.
        let net = Network::new(vec![layer(1, 3, &[1.0, 1.0, 1.0], 1.0, 0.5)], 16).unwrap();
        let input = SpikeTimes::new(vec![9], 16).unwrap();
        let trace = network_forward(&net, &input, Mode::Training).unwrap();
        assert_eq!(trace.output().spikes.times(), &[9, 9, 9]);
        assert_eq!(trace.decision_time, 9);
    }

    #[test]
    fn training_mode_gives_every_neuron_a_time() {
        let l1 = layer(3, 4, &[1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 0.3, -2.0, 4.0], 1.0, 2.0);
        let l2 = layer(4, 2, &[1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0, -1.0], 1.0, 1.0);
        let net = Network::new(vec![l1, l2], 20).unwrap();
        let trace = network_forward(&net, &SpikeTimes::new(vec![0, 5, 20], 20).unwrap(), Mode::Training).unwrap();
        for out in &trace.layers {
            assert!(out.spikes.times().iter().all(|&t| t <= 20));
        }
        assert!(trace.decision_time <= 20);
    }

    fn decision_of(times: &[u32], fired: &[bool], counts: &[i32], t_max: u32) -> Decision {
        let out = LayerOutput {
            spikes: SpikeTimes::with_fired(times.to_vec(), fired.to_vec(), t_max).unwrap(),
            counts: counts.to_vec(),
        };
        let trace = ForwardTrace {
            input: SpikeTimes::new(vec![0], t_max).unwrap(),
            layers: vec![out],
            decision_time: 0,
        };
        classify(&trace)
    }

    #[test]
    fn classify_strict_argmin() {
        let d = decision_of(&[12, 9, 30], &[true; 3], &[0, 0, 0], 64);
        assert_eq!((d.category, d.decision_time, d.fallback), (1, 9, false));
    }

    #[test]
    fn classify_fallback_uses_counts_with_lowest_index_tie() {
        let d = decision_of(&[256; 3], &[false; 3], &[3, 5, 5], 256);
        assert_eq!((d.category, d.decision_time, d.fallback), (1, 256, true));
    }

    #[test]
    fn classify_time_ties_go_to_lowest_index_regardless_of_counts() {
        let a = decision_of(&[9, 9, 30], &[true; 3], &[7, 4, 1], 64);
        let b = decision_of(&[9, 9, 30], &[true; 3], &[4, 7, 1], 64);
        assert_eq!(a.category, 0);
        assert_eq!(b.category, 0);
    }

    #[test]
    fn real_spike_at_t_max_beats_fallback() {
        let d = decision_of(&[20, 20], &[false, true], &[9, 1], 20);
        assert_eq!((d.category, d.fallback), (1, false));
    }

    #[test]
    fn proxy_path_requires_proxies() {
        let mut net = Network::new(vec![layer(1, 1, &[1.0], 1.0, 1.0)], 4).unwrap();
        net.set_proxy_weights(false);
        let input = SpikeTimes::new(vec![0], 4).unwrap();
        assert!(matches!(predict_with_proxies(&net, &input), Err(Error::Unsupported(_))));
    }

    #[test]
    fn proxy_path_matches_binary_when_weights_are_scaled_signs() {
        let w = [2.0f32, -2.0, 2.0, 2.0, 2.0, -2.0];
        let net = Network::new(vec![layer(3, 2, &w, 2.0, 3.0)], 12).unwrap();
        for times in [[0u32, 1, 2], [5, 0, 3], [12, 12, 0], [4, 4, 4]] {
            let input = SpikeTimes::new(times.to_vec(), 12).unwrap();
            assert_eq!(predict(&net, &input).unwrap(), predict_with_proxies(&net, &input).unwrap());
        }
    }

    fn arb_layer_case() -> impl Strategy<Value = (Layer, SpikeTimes)> {
        (1usize..24, 1usize..8, 1u32..40).prop_flat_map(|(pre, post, t_max)| {
            (
                proptest::collection::vec(prop_oneof![Just(-1.0f32), Just(1.0f32)], pre * post),
                prop_oneof![Just(0.5f32), Just(1.0f32), Just(5.0f32)],
                0.1f32..12.0,
                proptest::collection::vec(0..=t_max, pre),
                proptest::collection::vec(proptest::bool::weighted(0.85), pre),
            )
                .prop_map(move |(w, alpha, theta, times, fired)| {
                    let times = times.iter().zip(&fired).map(|(&t, &f)| if f { t } else { t_max }).collect();
                    (
                        Layer::new(pre, post, w, alpha, theta).unwrap(),
                        SpikeTimes::with_fired(times, fired, t_max).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn event_and_dense_paths_agree((l, input) in arb_layer_case()) {
            prop_assert_eq!(layer_forward(&input, &l).unwrap(), layer_forward_dense(&input, &l).unwrap());
        }

        #[test]
        fn raising_threshold_never_speeds_up((l, input) in arb_layer_case(), bump in 0.0f32..10.0) {
            let base = layer_forward(&input, &l).unwrap();
            let mut higher = l.clone();
            higher.set_theta(l.theta() + bump).unwrap();
            let slow = layer_forward(&input, &higher).unwrap();
            for j in 0..l.outputs() {
                if slow.spikes.fired()[j] {
                    prop_assert!(base.spikes.fired()[j]);
                    prop_assert!(slow.spikes.times()[j] >= base.spikes.times()[j]);
                }
            }
        }

        #[test]
        fn scaling_alpha_and_theta_together_is_neutral((l, input) in arb_layer_case(), k in prop_oneof![Just(0.25f32), Just(2.0f32), Just(8.0f32)]) {
            let base = layer_forward(&input, &l).unwrap();
            let mut scaled = l.clone();
            scaled.set_alpha(l.alpha() * k).unwrap();
            scaled.set_theta(l.theta() * k).unwrap();
            prop_assert_eq!(base, layer_forward(&input, &scaled).unwrap());
        }

        #[test]
        fn later_spikes_cannot_change_earlier_firing((l, input) in arb_layer_case(), cut in 0u32..40) {
            // Drop every presynaptic spike after `cut`; neurons that fired at or
            // before `cut` must be unaffected.
            let t_max = input.t_max();
            let fired: Vec<bool> = input.times().iter().zip(input.fired()).map(|(&t, &f)| f && t <= cut).collect();
            let times = input.times().iter().zip(&fired).map(|(&t, &f)| if f { t } else { t_max }).collect();
            let truncated = SpikeTimes::with_fired(times, fired, t_max).unwrap();
            let full = layer_forward(&input, &l).unwrap();
            let part = layer_forward(&truncated, &l).unwrap();
            for j in 0..l.outputs() {
                if full.spikes.fired()[j] && full.spikes.times()[j] <= cut {
                    prop_assert!(part.spikes.fired()[j]);
                    prop_assert_eq!(part.spikes.times()[j], full.spikes.times()[j]);
                }
            }
        }

        #[test]
        fn inference_agrees_with_training_up_to_decision(
            seed_w in proptest::collection::vec(prop_oneof![Just(-1.0f32), Just(1.0f32)], 12 * 6 + 6 * 3),
            times in proptest::collection::vec(0u32..=30, 12),
            theta in 0.5f32..4.0,
        ) {
            let l1 = Layer::new(12, 6, seed_w[..72].to_vec(), 1.0, theta).unwrap();
            let l2 = Layer::new(6, 3, seed_w[72..].to_vec(), 1.0, theta).unwrap();
            let net = Network::new(vec![l1, l2], 30).unwrap();
            let input = SpikeTimes::new(times, 30).unwrap();
            let train = network_forward(&net, &input, Mode::Training).unwrap();
            let test = network_forward(&net, &input, Mode::Inference).unwrap();
            prop_assert_eq!(train.decision_time, test.decision_time);
            prop_assert_eq!(classify(&train), classify(&test));
            for (a, b) in train.layers.iter().zip(&test.layers) {
                for j in 0..a.spikes.len() {
                    if a.spikes.fired()[j] && a.spikes.times()[j] <= train.decision_time {
                        prop_assert!(b.spikes.fired()[j]);
                        prop_assert_eq!(a.spikes.times()[j], b.spikes.times()[j]);
                    }
                }
            }
        }
    }
}
