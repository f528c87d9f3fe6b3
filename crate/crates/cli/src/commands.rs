use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use bs4nn::data::{self, FASHION_CLASSES, MNIST_CLASSES};
use bs4nn::evaluation::{self, membrane_trace_csv};
use bs4nn::learning::{self, LayerInit, TrainConfig};
use bs4nn::persistence::{self, model_size_report};
use bs4nn::{encode_image, LabeledDataset, Network, Preset};
use rand::seq::index::sample;
use rand::SeedableRng;
use serde::Serialize;

use crate::args::*;
use crate::exit;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(bs4nn::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Lib(bs4nn::Error::Config(_)) => exit::USAGE,
            CliError::Lib(bs4nn::Error::Numeric(_)) => exit::NUMERIC,
            CliError::Lib(_) => exit::DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Lib(e) => e.fmt(f),
        }
    }
}

impl From<bs4nn::Error> for CliError {
    fn from(e: bs4nn::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train(a) => cmd_train(*a),
        Command::Eval(a) => cmd_eval(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Encode(a) => cmd_encode(a),
    }
}

/// One value for every layer, or exactly one per layer.
fn per_layer<T: Clone>(values: &[T], layers: usize, flag: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); layers]),
        n if n == layers => Ok(values.to_vec()),
        n => usage(format!("--{flag} takes 1 or {layers} values, got {n}")),
    }
}

fn parse_range(s: &str) -> Result<(f32, f32)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("weight range `{s}` should look like low:high"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let low = parts[0].trim().parse().map_err(|_| bad())?;
    let high = parts[1].trim().parse().map_err(|_| bad())?;
    Ok((low, high))
}

/// Applies command-line overrides on top of a preset.
pub fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::preset(a.preset.into());
    if let Some(h) = &a.hidden {
        if h.len() != cfg.hidden.len() {
            // Depth changed: reuse the output settings and the first hidden settings.
            let hidden_init = cfg.layers[0].clone();
            let output_init = cfg.layers[cfg.layers.len() - 1].clone();
            cfg.layers = vec![hidden_init; h.len()];
            cfg.layers.push(output_init);
        }
        cfg.hidden = h.clone();
    }
    let n = cfg.layers.len();
    if let Some(v) = &a.theta {
        for (l, t) in cfg.layers.iter_mut().zip(per_layer(v, n, "theta")?) {
            l.theta = t;
        }
    }
    if let Some(v) = &a.alpha {
        for (l, x) in cfg.layers.iter_mut().zip(per_layer(v, n, "alpha")?) {
            l.alpha = x;
        }
    }
    if let Some(v) = &a.init {
        for (l, r) in cfg.layers.iter_mut().zip(per_layer(v, n, "init")?) {
            let (low, high) = parse_range(&r)?;
            *l = LayerInit { weight_low: low, weight_high: high, ..l.clone() };
        }
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { cfg.$field = v; } )* };
    }
    set!(epochs, seed, t_max, eta, mu, gamma, lambda, decay_fraction, decay_period);
    cfg.validate()?;
    Ok(cfg)
}

fn class_names(fashion: bool) -> &'static [&'static str] {
    if fashion {
        &FASHION_CLASSES
    } else {
        &MNIST_CLASSES
    }
}

fn load(images: &Path, labels: &Path, limit: Option<usize>, fashion: bool) -> Result<LabeledDataset> {
    let ds = data::load_dataset(images, labels, Some(class_names(fashion)))?;
    Ok(match limit {
        Some(n) => ds.take(n),
        None => ds,
    })
}

#[derive(Serialize)]
struct RunConfig<'a> {
    subcommand: &'a str,
    preset: Option<Preset>,
    train_images: Option<&'a Path>,
    train_labels: Option<&'a Path>,
    test_images: Option<&'a Path>,
    test_labels: Option<&'a Path>,
    limit_train: Option<usize>,
    limit_test: Option<usize>,
    holdout: Option<f64>,
    architecture: Vec<usize>,
    train: &'a TrainConfig,
    out: &'a Path,
    seed: u64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    let fashion = a.preset != PresetArg::Mnist;
    let d = &a.data;
    let mut train = load(&d.train_images, &d.train_labels, d.limit_train, fashion)?;
    let mut test = match (&d.test_images, &d.test_labels) {
        (Some(i), Some(l)) => Some(load(i, l, d.limit_test, fashion)?),
        _ => None,
    };
    if let Some(f) = d.holdout {
        let (rest, held) = train.split_holdout(f, cfg.seed)?;
        train = rest;
        if test.is_none() {
            test = Some(held);
        }
    }
    let arch = cfg.architecture(train.input_size(), train.num_classes());
    fs::create_dir_all(&a.out)?;
    let run = RunConfig {
        subcommand: "train",
        preset: Some(a.preset.into()),
        train_images: Some(&d.train_images),
        train_labels: Some(&d.train_labels),
        test_images: d.test_images.as_deref(),
        test_labels: d.test_labels.as_deref(),
        limit_train: d.limit_train,
        limit_test: d.limit_test,
        holdout: d.holdout,
        architecture: arch.clone(),
        train: &cfg,
        out: &a.out,
        seed: cfg.seed,
    };
    write_json(&a.out.join("run_config.json"), &run)?;

    let mut net = learning::init_network(&arch, &cfg)?;
    eprintln!("training {arch:?} on {} samples for {} epochs", train.len(), cfg.epochs);
    let history_path = a.out.join("history.csv");
    let history = learning::fit(&mut net, &train, test.as_ref(), &cfg, |r, _| {
        let test = r.test_acc.map_or("-".to_string(), |t| format!("{:.2}%", 100.0 * t));
        eprintln!(
            "epoch {:>3}  loss {:.5}  train {:.2}%  test {}  eta {:.4}  ({:.0}s)",
            r.epoch,
            r.train_loss,
            100.0 * r.train_acc,
            test,
            r.eta,
            r.wall_seconds
        );
    })?;
    fs::write(&history_path, history.to_csv())?;
    let ckpt = persistence::save_model(&net, a.out.join("checkpoint.bs4n"), true)?;
    let deploy = persistence::save_model(&net, a.out.join("model.bs4n"), false)?;
    eprintln!("wrote checkpoint ({ckpt} bytes) and deployment model ({deploy} bytes) to {}", a.out.display());
    Ok(())
}

fn load_net(m: &ModelArgs) -> Result<Network> {
    Ok(persistence::load_model(&m.model, m.t_max)?)
}

fn load_test(d: &TestData) -> Result<LabeledDataset> {
    load(&d.test_images, &d.test_labels, d.limit_test, d.fashion)
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let net = load_net(&a.model)?;
    let ds = load_test(&a.data)?;
    let report = evaluation::evaluate(&net, &ds)?;
    println!("accuracy {:.4} on {} samples", report.accuracy, report.samples);
    println!("mean decision time {:.2} steps", report.mean_decision_time);
    if report.fallback_decisions > 0 {
        println!("{} decisions by maximum potential", report.fallback_decisions);
    }
    let proxy = if a.proxy { Some(evaluation::proxy_inference_check(&net, &ds)?) } else { None };
    if let Some(p) = proxy {
        println!("proxy-weight accuracy {p:.4}");
    }
    if let Some(dir) = &a.out {
        report.write_csvs(dir)?;
        if let Some(p) = proxy {
            fs::write(dir.join("proxy.csv"), format!("proxy_accuracy\n{p}\n"))?;
        }
        if let Some(k) = a.trace_index {
            if k >= ds.len() {
                return usage(format!("--trace-index {k} beyond {} test samples", ds.len()));
            }
            let input = encode_image(&ds.images()[k], net.t_max())?;
            let series = evaluation::membrane_trace(&net, &input)?;
            fs::write(dir.join(format!("trace_{k}.csv")), membrane_trace_csv(&series))?;
        }
        write_json(
            &dir.join("run_config.json"),
            &serde_json::json!({
                "subcommand": "eval",
                "model": a.model.model,
                "t_max": a.model.t_max,
                "test_images": a.data.test_images,
                "test_labels": a.data.test_labels,
                "limit_test": a.data.limit_test,
                "proxy": a.proxy,
                "trace_index": a.trace_index,
            }),
        )?;
    }
    Ok(())
}

fn cmd_noise(a: NoiseArgs) -> Result<()> {
    let net = load_net(&a.model)?;
    let ds = load_test(&a.data)?;
    let points = evaluation::noise_robustness(&net, &ds, &a.levels, a.seed)?;
    let mut csv = String::from("level,accuracy,seed\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", p.level, p.accuracy, a.seed));
    }
    write_or_print(a.out.as_ref(), &csv)
}

/// `start:end:step` (inclusive) or `a,b,c`.
pub fn parse_thetas(spec: &str) -> Result<Vec<f32>> {
    let bad = || CliError::Usage(format!("cannot parse threshold list `{spec}`"));
    if spec.contains(':') {
        let parts: Vec<f64> = spec.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let [start, end, step] = parts[..] else { return Err(bad()) };
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(bad());
        }
        let n = ((end - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| (start + k as f64 * step) as f32).collect())
    } else {
        spec.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let net = load_net(&a.model)?;
    let ds = load_test(&a.data)?;
    let thetas = parse_thetas(&a.theta)?;
    let points = evaluation::threshold_sweep(&net, &ds, &thetas)?;
    let mut csv = String::from("theta,accuracy,mean_response_time\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", p.theta, p.accuracy, p.mean_response_time));
    }
    write_or_print(a.out.as_ref(), &csv)
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let net = load_net(&a.model)?;
    println!("architecture {:?}, proxies {}", net.architecture(), if net.has_proxy_weights() { "present" } else { "absent" });
    for (l, layer) in net.layers().iter().enumerate() {
        println!("layer {l}: alpha {}  theta {}", layer.alpha(), layer.theta());
    }
    print!("{}", model_size_report(&net).to_table());
    let stats = evaluation::weight_stats(&net);
    for (l, f) in stats.positive_fraction.iter().enumerate() {
        println!("layer {l}: {:.1}% positive synapses", 100.0 * f);
    }
    if let Some(dir) = &a.maps_out {
        let hidden = net.layers()[0].outputs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
        let mut neurons = sample(&mut rng, hidden, a.maps.min(hidden)).into_vec();
        neurons.sort_unstable();
        let maps = evaluation::weight_maps(&net, a.width, a.height, &neurons)?;
        evaluation::write_weight_maps(&net, &maps, dir)?;
        println!("wrote {} weight maps to {}", maps.len(), dir.display());
    }
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let images = data::load_idx_images(&a.images)?;
    let Some(img) = images.get(a.index) else {
        return usage(format!("--index {} beyond {} images", a.index, images.len()));
    };
    let spikes = encode_image(img, a.t_max)?;
    let mut csv = String::from("neuron,time\n");
    for (i, t) in spikes.times().iter().enumerate() {
        csv.push_str(&format!("{i},{t}\n"));
    }
    write_or_print(a.out.as_ref(), &csv)
}
