//! Accuracy, latency and spike-budget measurements on trained networks.
//!
//! Per-sample work runs in parallel; results are collected in sample order
//! and reduced sequentially so reports do not depend on the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::encoding::{add_jitter_noise, encode_image};
use crate::error::{Error, Result};
use crate::network::{classify, network_forward, predict, predict_with_proxies, Decision, Mode, Network};

/// Mean number of real spikes emitted up to the decision, for one class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpikeCounts {
    pub input: f64,
    pub hidden: f64,
    pub output: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    /// `confusion[true_class][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// `mean_firing_time[output_neuron][true_class]`, silent neurons counted at `t_max`.
    pub mean_firing_time: Vec<Vec<f64>>,
    pub mean_decision_time: f64,
    pub class_decision_time: Vec<f64>,
    pub spike_counts: Vec<SpikeCounts>,
    /// Samples decided by the maximum-potential fallback.
    pub fallback_decisions: usize,
}

struct SampleStats {
    label: usize,
    decision: Decision,
    output_times: Vec<u32>,
    input_spikes: usize,
    hidden_spikes: usize,
    output_spikes: usize,
}

fn sample_stats(net: &Network, ds: &LabeledDataset, k: usize) -> Result<SampleStats> {
    let input = encode_image(&ds.images()[k], net.t_max())?;
    // Full-window simulation so that every output neuron has a firing time;
    // its decision matches the early-stopping inference path.
    let trace = network_forward(net, &input, Mode::Training)?;
    let decision = classify(&trace);
    let d = decision.decision_time;
    let last = trace.layers.len() - 1;
    Ok(SampleStats {
        label: ds.labels()[k],
        decision,
        output_times: trace.output().spikes.times().to_vec(),
        input_spikes: trace.input.count_until(d),
        hidden_spikes: trace.layers[..last].iter().map(|l| l.spikes.count_until(d)).sum(),
        output_spikes: trace.output().spikes.count_until(d),
    })
}

fn check_dataset(net: &Network, ds: &LabeledDataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Config("evaluation dataset is empty".into()));
    }
    if ds.input_size() != net.inputs() {
        return Err(Error::Structure(format!(
            "dataset images have {} pixels, network expects {}",
            ds.input_size(),
            net.inputs()
        )));
    }
    if ds.num_classes() > net.outputs() {
        return Err(Error::Structure(format!(
            "{} classes but only {} output neurons",
            ds.num_classes(),
            net.outputs()
        )));
    }
    Ok(())
}

pub fn evaluate(net: &Network, ds: &LabeledDataset) -> Result<EvalReport> {
    check_dataset(net, ds)?;
    let stats: Vec<SampleStats> =
        (0..ds.len()).into_par_iter().map(|k| sample_stats(net, ds, k)).collect::<Result<_>>()?;
    let classes = ds.num_classes();
    let outputs = net.outputs();
    let mut confusion = vec![vec![0usize; outputs.max(classes)]; classes];
    let mut firing_sum = vec![vec![0f64; classes]; outputs];
    let mut per_class = vec![0usize; classes];
    let mut decision_sum = vec![0f64; classes];
    let mut counts = vec![SpikeCounts::default(); classes];
    let mut fallback = 0;
    for s in &stats {
        let c = s.label;
        per_class[c] += 1;
        confusion[c][s.decision.category] += 1;
        for (j, &t) in s.output_times.iter().enumerate() {
            firing_sum[j][c] += f64::from(t);
        }
        decision_sum[c] += f64::from(s.decision.decision_time);
        let sc = &mut counts[c];
        sc.input += s.input_spikes as f64;
        sc.hidden += s.hidden_spikes as f64;
        sc.output += s.output_spikes as f64;
        sc.total += (s.input_spikes + s.hidden_spikes + s.output_spikes) as f64;
        fallback += usize::from(s.decision.fallback);
    }
    let mean = |sum: f64, n: usize| if n == 0 { f64::NAN } else { sum / n as f64 };
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let mean_firing_time = firing_sum
        .iter()
        .map(|row| row.iter().zip(&per_class).map(|(&s, &n)| mean(s, n)).collect())
        .collect();
    for (sc, &n) in counts.iter_mut().zip(&per_class) {
        sc.input = mean(sc.input, n);
        sc.hidden = mean(sc.hidden, n);
        sc.output = mean(sc.output, n);
        sc.total = mean(sc.total, n);
    }
    Ok(EvalReport {
        samples: stats.len(),
        accuracy: correct as f64 / stats.len() as f64,
        confusion,
        mean_firing_time,
        mean_decision_time: mean(decision_sum.iter().sum(), stats.len()),
        class_decision_time: decision_sum.iter().zip(&per_class).map(|(&s, &n)| mean(s, n)).collect(),
        spike_counts: counts,
        fallback_decisions: fallback,
    })
}

impl EvalReport {
    pub fn summary_csv(&self) -> String {
        format!(
            "samples,accuracy,mean_decision_time,fallback_decisions\n{},{},{},{}\n",
            self.samples, self.accuracy, self.mean_decision_time, self.fallback_decisions
        )
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true_class");
        for p in 0..self.confusion.first().map_or(0, Vec::len) {
            let _ = write!(out, ",pred_{p}");
        }
        out.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{c}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn firing_times_csv(&self) -> String {
        let mut out = String::from("output_neuron");
        for c in 0..self.mean_firing_time.first().map_or(0, Vec::len) {
            let _ = write!(out, ",class_{c}");
        }
        out.push('\n');
        for (j, row) in self.mean_firing_time.iter().enumerate() {
            let _ = write!(out, "{j}");
            for v in row {
                let _ = write!(out, ",{v:.3}");
            }
            out.push('\n');
        }
        out
    }

    pub fn spike_counts_csv(&self) -> String {
        let mut out = String::from("class,mean_decision_time,input_spikes,hidden_spikes,output_spikes,total_spikes\n");
        for (c, (s, t)) in self.spike_counts.iter().zip(&self.class_decision_time).enumerate() {
            let _ = writeln!(out, "{c},{t:.3},{:.3},{:.3},{:.3},{:.3}", s.input, s.hidden, s.output, s.total);
        }
        out
    }

    /// Writes `summary.csv`, `confusion.csv`, `firing_times.csv` and
    /// `spike_counts.csv` into `dir`.
    pub fn write_csvs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("confusion.csv"), self.confusion_csv())?;
        fs::write(dir.join("firing_times.csv"), self.firing_times_csv())?;
        fs::write(dir.join("spike_counts.csv"), self.spike_counts_csv())?;
        Ok(())
    }
}

fn decisions(net: &Network, ds: &LabeledDataset) -> Result<Vec<Decision>> {
    check_dataset(net, ds)?;
    (0..ds.len())
        .into_par_iter()
        .map(|k| predict(net, &encode_image(&ds.images()[k], net.t_max())?))
        .collect()
}

fn accuracy_of(decisions: &[Decision], labels: &[usize]) -> f64 {
    let correct = decisions.iter().zip(labels).filter(|(d, &l)| d.category == l).count();
    correct as f64 / labels.len() as f64
}

/// Test accuracy using the early-stopping inference path.
pub fn accuracy(net: &Network, ds: &LabeledDataset) -> Result<f64> {
    Ok(accuracy_of(&decisions(net, ds)?, ds.labels()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePoint {
    pub level: f64,
    pub accuracy: f64,
}

/// Accuracy when every test image is perturbed once per jitter level. Sample
/// `k` at level index `n` draws from a generator seeded with `(seed + n, k)`.
pub fn noise_robustness(net: &Network, ds: &LabeledDataset, levels: &[f64], seed: u64) -> Result<Vec<NoisePoint>> {
    check_dataset(net, ds)?;
    if let Some(&bad) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("jitter level {bad} outside [0, 1]")));
    }
    levels
        .iter()
        .enumerate()
        .map(|(n, &level)| {
            let decisions: Vec<Decision> = (0..ds.len())
                .into_par_iter()
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64));
                    rng.set_stream(k as u64);
                    let noisy = add_jitter_noise(&ds.images()[k], level, &mut rng)?;
                    predict(net, &encode_image(&noisy, net.t_max())?)
                })
                .collect::<Result<_>>()?;
            Ok(NoisePoint { level, accuracy: accuracy_of(&decisions, ds.labels()) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub theta: f32,
    pub accuracy: f64,
    /// Mean step of the first output spike (`t_max` for fallback decisions).
    pub mean_response_time: f64,
}

/// Re-evaluates the network with every threshold overridden. A requested
/// threshold of exactly zero is taken as the limit from above, i.e. the
/// smallest positive `f32`, so any net positive input fires a neuron.
pub fn threshold_sweep(net: &Network, ds: &LabeledDataset, thetas: &[f32]) -> Result<Vec<SweepPoint>> {
    thetas
        .iter()
        .map(|&theta| {
            if theta < 0.0 || !theta.is_finite() {
                return Err(Error::Config(format!("threshold {theta} must be non-negative")));
            }
            let effective = if theta == 0.0 { f32::MIN_POSITIVE } else { theta };
            let swept = net.with_threshold(effective)?;
            let d = decisions(&swept, ds)?;
            let mean_time = d.iter().map(|x| f64::from(x.decision_time)).sum::<f64>() / d.len() as f64;
            Ok(SweepPoint { theta, accuracy: accuracy_of(&d, ds.labels()), mean_response_time: mean_time })
        })
        .collect()
}

/// Accuracy when each synapse contributes its real-valued proxy weight in
/// place of `alpha * sign`.
pub fn proxy_inference_check(net: &Network, ds: &LabeledDataset) -> Result<f64> {
    check_dataset(net, ds)?;
    if !net.has_proxy_weights() {
        return Err(Error::Unsupported("proxy inference needs a checkpoint with real-valued weights".into()));
    }
    let d: Vec<Decision> = (0..ds.len())
        .into_par_iter()
        .map(|k| predict_with_proxies(net, &encode_image(&ds.images()[k], net.t_max())?))
        .collect::<Result<_>>()?;
    Ok(accuracy_of(&d, ds.labels()))
}

/// Potential `alpha * c_j(t)` of every output neuron for `t = 0..=t_max`,
/// with all earlier layers simulated over the full window.
pub fn membrane_trace(net: &Network, input: &crate::encoding::SpikeTimes) -> Result<Vec<Vec<f64>>> {
    let trace = network_forward(net, input, Mode::Training)?;
    let last = net.layers().len() - 1;
    let layer = &net.layers()[last];
    let pre = trace.layer_input(last);
    let t_max = net.t_max() as usize;
    let alpha = f64::from(layer.alpha());
    let mut series = Vec::with_capacity(layer.outputs());
    for j in 0..layer.outputs() {
        let mut step = vec![0i64; t_max + 1];
        for (i, &s) in layer.sign_row(j).iter().enumerate() {
            if pre.fired()[i] {
                step[pre.times()[i] as usize] += i64::from(s);
            }
        }
        let mut c = 0i64;
        series.push(
            step.iter()
                .map(|&d| {
                    c += d;
                    alpha * c as f64
                })
                .collect(),
        );
    }
    Ok(series)
}

pub fn membrane_trace_csv(series: &[Vec<f64>]) -> String {
    let mut out = String::from("t");
    for j in 0..series.len() {
        let _ = write!(out, ",neuron_{j}");
    }
    out.push('\n');
    for t in 0..series.first().map_or(0, Vec::len) {
        let _ = write!(out, "{t}");
        for s in series {
            let _ = write!(out, ",{}", s[t]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStats {
    /// Fraction of non-negative proxies (binary `+1`) per layer.
    pub positive_fraction: Vec<f64>,
}

pub fn weight_stats(net: &Network) -> WeightStats {
    let positive_fraction = net
        .layers()
        .iter()
        .map(|l| l.signs().iter().filter(|&&s| s > 0).count() as f64 / l.signs().len() as f64)
        .collect();
    WeightStats { positive_fraction }
}

/// A first-layer neuron's incoming weights laid out as an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMap {
    pub neuron: usize,
    pub width: usize,
    pub height: usize,
    /// Proxies min-max scaled to `0..=255`.
    pub real: Vec<u8>,
    /// 255 for `+1`, 0 for `-1`.
    pub binary: Vec<u8>,
}

pub fn weight_maps(net: &Network, width: usize, height: usize, neurons: &[usize]) -> Result<Vec<WeightMap>> {
    let layer = &net.layers()[0];
    if width * height != layer.inputs() {
        return Err(Error::Structure(format!(
            "{width}x{height} map does not match {} inputs",
            layer.inputs()
        )));
    }
    neurons
        .iter()
        .map(|&j| {
            if j >= layer.outputs() {
                return Err(Error::InputDomain(format!("neuron {j} out of range")));
            }
            let row = layer.weight_row(j);
            let (lo, hi) = row.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
            let span = hi - lo;
            let real = row
                .iter()
                .map(|&w| if span > 0.0 { ((w - lo) / span * 255.0).round() as u8 } else { 128 })
                .collect();
            let binary = layer.sign_row(j).iter().map(|&s| if s > 0 { 255 } else { 0 }).collect();
            Ok(WeightMap { neuron: j, width, height, real, binary })
        })
        .collect()
}

/// Binary portable graymap (`P5`, maxval 255).
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if width * height != pixels.len() {
        return Err(Error::Structure("PGM pixel count does not match dimensions".into()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Writes `neuron_NNNN_real.pgm` / `neuron_NNNN_binary.pgm` per map and a
/// `first_layer_weights.csv` with one row of proxies per neuron.
pub fn write_weight_maps(net: &Network, maps: &[WeightMap], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for m in maps {
        fs::write(dir.join(format!("neuron_{:04}_real.pgm", m.neuron)), encode_pgm(m.width, m.height, &m.real)?)?;
        fs::write(dir.join(format!("neuron_{:04}_binary.pgm", m.neuron)), encode_pgm(m.width, m.height, &m.binary)?)?;
    }
    let layer = &net.layers()[0];
    let mut csv = String::from("neuron");
    for i in 0..layer.inputs() {
        let _ = write!(csv, ",w{i}");
    }
    csv.push('\n');
    for m in maps {
        let _ = write!(csv, "{}", m.neuron);
        for w in layer.weight_row(m.neuron) {
            let _ = write!(csv, ",{w}");
        }
        csv.push('\n');
    }
    fs::write(dir.join("first_layer_weights.csv"), csv)?;
    Ok(())
}
