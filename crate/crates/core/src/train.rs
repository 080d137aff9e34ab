//! Losses, backpropagation through time for stochastic-excitation networks, SGD and the
//! training loop.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoding::{poisson_encode_with, PoissonOptions, SpikeTrain};
use crate::error::{domain, Result};
use crate::network::{argmax_count, forward, ForwardTrace, Mode, Network, Output};
use crate::neuron::excitation_probability_derivative;
use crate::selfconn::SelfConnection;

#[derive(Clone, Debug, PartialEq)]
pub enum LossSpec {
    /// Σ_t ½‖o(t) - ô(t)‖²; targets channel-major, channels x steps.
    LeastSquaresSequence { targets: Vec<f64> },
    /// ½ Σ_k (count_k - target_k)².
    SpikeCountTargets { targets: Vec<f64> },
    /// Cross-entropy of softmax(counts) against the label.
    Classification { label: usize },
}

impl LossSpec {
    /// Count targets with `true_count` on the label and `false_count` elsewhere.
    pub fn count_targets(label: usize, classes: usize, true_count: f64, false_count: f64) -> Self {
        Self::SpikeCountTargets {
            targets: (0..classes)
                .map(|k| if k == label { true_count } else { false_count })
                .collect(),
        }
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn check_shape(output: &Output, spec: &LossSpec) -> Result<()> {
    let ok = match spec {
        LossSpec::LeastSquaresSequence { targets } => targets.len() == output.values.len(),
        LossSpec::SpikeCountTargets { targets } => targets.len() == output.channels,
        LossSpec::Classification { label } => *label < output.channels,
    };
    if ok {
        Ok(())
    } else {
        domain("loss targets do not match the network output")
    }
}

pub fn loss(output: &Output, spec: &LossSpec) -> Result<f64> {
    check_shape(output, spec)?;
    Ok(match spec {
        LossSpec::LeastSquaresSequence { targets } => {
            0.5 * output.values.iter().zip(targets).map(|(o, y)| (o - y).powi(2)).sum::<f64>()
        }
        LossSpec::SpikeCountTargets { targets } => {
            0.5 * output.counts().iter().zip(targets).map(|(c, y)| (c - y).powi(2)).sum::<f64>()
        }
        LossSpec::Classification { label } => -softmax(&output.counts())[*label].ln(),
    })
}

/// dE/do(k, t), channel-major like `output.values`.
pub fn loss_grad(output: &Output, spec: &LossSpec) -> Result<Vec<f64>> {
    check_shape(output, spec)?;
    let steps = output.steps;
    Ok(match spec {
        LossSpec::LeastSquaresSequence { targets } => {
            output.values.iter().zip(targets).map(|(o, y)| o - y).collect()
        }
        LossSpec::SpikeCountTargets { targets } => {
            let counts = output.counts();
            (0..output.channels)
                .flat_map(|k| std::iter::repeat(counts[k] - targets[k]).take(steps))
                .collect()
        }
        LossSpec::Classification { label } => {
            let sm = softmax(&output.counts());
            (0..output.channels)
                .flat_map(|k| {
                    let g = sm[k] - if k == *label { 1.0 } else { 0.0 };
                    std::iter::repeat(g).take(steps)
                })
                .collect()
        }
    })
}

/// Per-layer gradients mirroring the network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub dw: Vec<DMatrix<f64>>,
    pub dv: Vec<Option<SelfConnection>>,
}

impl GradientSet {
    pub fn zeros(net: &Network) -> Self {
        Self {
            dw: net
                .layers
                .iter()
                .map(|l| DMatrix::zeros(l.fan_out(), l.fan_in()))
                .collect(),
            dv: net
                .layers
                .iter()
                .map(|l| l.self_conn.as_ref().map(SelfConnection::zeros_like))
                .collect(),
        }
    }

    /// self += scale * other.
    pub fn axpy(&mut self, scale: f64, other: &Self) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            *a += b * scale;
        }
        for (a, b) in self.dv.iter_mut().zip(&other.dv) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                a.axpy(scale, b);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let w = self.dw.iter().flat_map(|m| m.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        self.dv
            .iter()
            .flatten()
            .flat_map(|v| v.flat_params())
            .fold(w, |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BackwardOptions {
    /// Maximum number of steps a loss term at time t propagates back; None unrolls fully.
    pub truncation: Option<usize>,
}

/// Reverse-mode gradient of the loss through the recorded trace. Spike variables are
/// differentiated through the excitation probability, ∂s/∂u := p'(u), both where they are
/// transmitted and inside the reset u_post = (1 - s) u_pre + s u_reset.
pub fn backward(trace: &ForwardTrace, net: &Network, spec: &LossSpec) -> Result<GradientSet> {
    backward_with(trace, net, spec, BackwardOptions::default())
}

pub fn backward_with(
    trace: &ForwardTrace,
    net: &Network,
    spec: &LossSpec,
    opts: BackwardOptions,
) -> Result<GradientSet> {
    if trace.layers.iter().any(|l| l.p.is_none()) {
        return domain("backward needs a trace recorded with probabilities (stochastic or relaxed)");
    }
    if trace.layers.len() != net.layers.len() {
        return domain("trace does not belong to this network");
    }
    let out = trace.output();
    let g_out = loss_grad(&out, spec)?;
    let steps = trace.steps;
    let mut grads = GradientSet::zeros(net);
    match opts.truncation {
        Some(k) if k < steps => {
            for t0 in 0..steps {
                let lo = t0.saturating_sub(k);
                reverse_pass(trace, net, &g_out, lo, t0, Some(t0), &mut grads);
            }
        }
        _ => {
            if steps > 0 {
                reverse_pass(trace, net, &g_out, 0, steps - 1, None, &mut grads);
            }
        }
    }
    Ok(grads)
}

/// Reverse sweep over steps hi..=lo. Loss gradient is injected at every step, or only at
/// `only` when given.
fn reverse_pass(
    trace: &ForwardTrace,
    net: &Network,
    g_out: &[f64],
    lo: usize,
    hi: usize,
    only: Option<usize>,
    grads: &mut GradientSet,
) {
    let params = &net.params;
    let a = params.decay();
    let lin_w = (1.0 - a) * params.tau_r;
    let star_w = (1.0 - a) * params.tau_m;
    let n_layers = net.layers.len();
    let steps = trace.steps;
    let n_out = trace.layers[n_layers - 1].n;

    let mut g_post: Vec<Vec<f64>> = trace.layers.iter().map(|l| vec![0.0; l.n]).collect();
    let mut g_s_above: Vec<f64> = Vec::new();
    let mut g_upre: Vec<f64> = Vec::new();
    let mut zero_prev: Vec<f64> = Vec::new();

    for t in (lo..=hi).rev() {
        for l in (0..n_layers).rev() {
            let layer = &net.layers[l];
            let tr = &trace.layers[l];
            let n = tr.n;
            let base = t * n;
            let p_deriv = |u: f64| match &layer.stochastic {
                Some(cfg) => excitation_probability_derivative(u, params, cfg),
                None => 0.0,
            };
            g_upre.clear();
            for k in 0..n {
                let g_s_ext = if l == n_layers - 1 {
                    if only.map_or(true, |o| o == t) {
                        g_out[k * steps + t]
                    } else {
                        0.0
                    }
                } else {
                    g_s_above[k]
                };
                let u = tr.u_pre[base + k];
                let s = tr.s[base + k];
                let gp = g_post[l][k];
                let g_s = g_s_ext + gp * (params.u_reset - u);
                g_upre.push(gp * (1.0 - s) + g_s * p_deriv(u));
            }
            debug_assert!(l != n_layers - 1 || n == n_out);

            // weights: u_pre += lin_w * W x
            let dw = &mut grads.dw[l];
            let rows = dw.nrows();
            let dws = dw.as_mut_slice();
            if l == 0 {
                for j in 0..trace.input.channels() {
                    if trace.input.get(j, t) == 1 {
                        let col = &mut dws[j * rows..(j + 1) * rows];
                        for (c, g) in col.iter_mut().zip(&g_upre) {
                            *c += lin_w * g;
                        }
                    }
                }
            } else {
                let prev = &trace.layers[l - 1];
                for j in 0..prev.n {
                    let xj = prev.s[t * prev.n + j];
                    if xj != 0.0 {
                        let col = &mut dws[j * rows..(j + 1) * rows];
                        for (c, g) in col.iter_mut().zip(&g_upre) {
                            *c += lin_w * xj * g;
                        }
                    }
                }
            }

            // temporal chain through u_post(t-1)
            let u_prev: &[f64] = if t == 0 {
                zero_prev.clear();
                zero_prev.resize(n, 0.0);
                &zero_prev
            } else {
                &tr.u_post[(t - 1) * n..t * n]
            };
            for k in 0..n {
                g_post[l][k] = a * g_upre[k];
            }
            if let Some(sc) = &layer.self_conn {
                if let Some(dv) = grads.dv[l].as_mut() {
                    dv.accumulate_param_grad(&g_upre, u_prev, star_w);
                }
                let j = sc.jacobian(u_prev);
                for i in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += j[(k, i)] * g_upre[k];
                    }
                    g_post[l][i] += star_w * acc;
                }
            }

            // spatial chain to the layer below
            if l > 0 {
                let w = &layer.weights;
                let below = w.ncols();
                g_s_above.clear();
                g_s_above.resize(below, 0.0);
                let ws = w.as_slice();
                for (j, gs) in g_s_above.iter_mut().enumerate() {
                    let col = &ws[j * n..(j + 1) * n];
                    *gs = lin_w * col.iter().zip(&g_upre).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
}

/// Self-connection part of [`backward`].
pub fn grad_self_connection(
    trace: &ForwardTrace,
    net: &Network,
    spec: &LossSpec,
) -> Result<Vec<Option<SelfConnection>>> {
    Ok(backward(trace, net, spec)?.dv)
}

/// W <- W - lr dW, V <- V - lr dV.
pub fn sgd_step(net: &Network, grads: &GradientSet, lr: f64) -> Network {
    let mut next = net.clone();
    for (l, layer) in next.layers.iter_mut().enumerate() {
        layer.weights -= &grads.dw[l] * lr;
        if let (Some(sc), Some(dv)) = (layer.self_conn.as_mut(), grads.dv[l].as_ref()) {
            sc.axpy(-lr, dv);
        }
    }
    next
}

/// Evaluates (C_n)^L C_X (Π C_l) p_max^{(L+1)/2} / √n.
pub fn rademacher_bound_value(p_max: f64, layers: usize, c_n: f64, c_x: f64, c_l: &[f64], n: usize) -> Result<f64> {
    if layers == 0 || n == 0 {
        return domain("need at least one layer and one sample");
    }
    if !(0.0..=1.0).contains(&p_max) {
        return domain("p_max must lie in [0,1]");
    }
    let prod: f64 = c_l.iter().product();
    Ok(c_n.powi(layers as i32) * c_x * prod * p_max.powf((layers as f64 + 1.0) / 2.0) / (n as f64).sqrt())
}

/// max over layers of 1 - max(mean p, p_theta) for one trace; None without probabilities.
pub fn trace_p_max(trace: &ForwardTrace, net: &Network) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (tr, layer) in trace.layers.iter().zip(&net.layers) {
        let (Some(p), Some(cfg)) = (tr.p.as_ref(), layer.stochastic.as_ref()) else {
            continue;
        };
        if p.is_empty() {
            continue;
        }
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        let v = 1.0 - mean.max(cfg.p_theta);
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Intensities in [0,1].
    pub pixels: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    /// Squared error on counts against true/false targets.
    SpikeCount { true_count: f64, false_count: f64 },
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Encoding length T.
    pub steps: usize,
    pub loss: LossKind,
    pub train_mode: Mode,
    pub eval_mode: Mode,
    pub poisson: PoissonOptions,
    pub backward: BackwardOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 0.01,
            steps: 50,
            loss: LossKind::SpikeCount {
                true_count: 100.0 * 50.0 / 300.0,
                false_count: 10.0 * 50.0 / 300.0,
            },
            train_mode: Mode::Stochastic,
            eval_mode: Mode::Deterministic,
            poisson: PoissonOptions::default(),
            backward: BackwardOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch's forward passes.
    pub loss: f64,
    /// Accuracy of the training forward passes.
    pub train_accuracy: f64,
    /// Accuracy on the evaluation set, in the evaluation mode.
    pub eval_accuracy: Option<f64>,
    pub spikes_per_sample: f64,
    pub p_max: f64,
    pub bound_value: f64,
}

impl EpochMetrics {
    /// Evaluation accuracy when available, training accuracy otherwise.
    pub fn accuracy(&self) -> f64 {
        self.eval_accuracy.unwrap_or(self.train_accuracy)
    }
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,loss,accuracy,spikes_per_sample,p_max,bound_value\n");
    for m in metrics {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            m.epoch,
            m.loss,
            m.accuracy(),
            m.spikes_per_sample,
            m.p_max,
            m.bound_value
        );
    }
    s
}

/// SplitMix64 finalizer used to derive independent seeds from (seed, epoch, index).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut z: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn encode(sample: &Sample, cfg: &TrainConfig, seed: u64) -> Result<SpikeTrain> {
    poisson_encode_with(&sample.pixels, cfg.steps, seed, cfg.poisson)
}

fn sample_loss(label: usize, classes: usize, kind: LossKind) -> LossSpec {
    match kind {
        LossKind::SpikeCount { true_count, false_count } => {
            LossSpec::count_targets(label, classes, true_count, false_count)
        }
        LossKind::CrossEntropy => LossSpec::Classification { label },
    }
}

/// Classification accuracy with encodings seeded from `seed` and sample index.
pub fn evaluate(net: &Network, data: &[Sample], cfg: &TrainConfig, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let correct: Vec<bool> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let input = encode(s, cfg, mix_seed(&[seed, i as u64, 1]))?;
            let (out, _) = forward(net, &input, cfg.eval_mode, mix_seed(&[seed, i as u64, 2]))?;
            Ok(argmax_count(&out.counts()) == s.label)
        })
        .collect::<Result<_>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / data.len() as f64)
}

struct SampleResult {
    grads: GradientSet,
    loss: f64,
    correct: bool,
    spikes: f64,
    p_max: Option<f64>,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Mini-batch SGD over stochastic forward passes; per-sample gradients are computed in
/// parallel and summed in sample order, so results do not depend on the thread count.
pub fn train_loop(
    net: &Network,
    train: &[Sample],
    eval: Option<&[Sample]>,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<EpochMetrics>)> {
    if train.is_empty() {
        return domain("training set is empty");
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0) || cfg.steps == 0 {
        return domain("batch size and steps must be positive, lr non-negative");
    }
    let classes = net.output_size();
    let c_x = train
        .iter()
        .map(|s| s.pixels.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut net = net.clone();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, epoch as u64, 0]));
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut spikes) = (0.0, 0usize, 0.0);
        let mut p_max: f64 = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<SampleResult> = batch
                .par_iter()
                .map(|&i| {
                    let s = &train[i];
                    let input = encode(s, cfg, mix_seed(&[cfg.seed, epoch as u64, i as u64, 1]))?;
                    let (out, trace) =
                        forward(&net, &input, cfg.train_mode, mix_seed(&[cfg.seed, epoch as u64, i as u64, 2]))?;
                    let spec = sample_loss(s.label, classes, cfg.loss);
                    Ok(SampleResult {
                        loss: loss(&out, &spec)?,
                        correct: argmax_count(&out.counts()) == s.label,
                        spikes: trace.layers.iter().map(|l| l.s.iter().sum::<f64>()).sum(),
                        p_max: trace_p_max(&trace, &net),
                        grads: backward_with(&trace, &net, &spec, cfg.backward)?,
                    })
                })
                .collect::<Result<_>>()?;
            let mut total = GradientSet::zeros(&net);
            for r in &results {
                total.axpy(1.0 / batch.len() as f64, &r.grads);
                loss_sum += r.loss;
                correct += r.correct as usize;
                spikes += r.spikes;
                if let Some(p) = r.p_max {
                    p_max = p_max.max(p);
                }
            }
            net = sgd_step(&net, &total, cfg.lr);
        }
        let c_l: Vec<f64> = net.layers.iter().map(|l| spectral_norm(&l.weights)).collect();
        let eval_accuracy = match eval {
            Some(data) => Some(evaluate(&net, data, cfg, mix_seed(&[cfg.seed, epoch as u64, 7]))?),
            None => None,
        };
        let n = train.len() as f64;
        metrics.push(EpochMetrics {
            epoch: epoch + 1,
            loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            eval_accuracy,
            spikes_per_sample: spikes / n,
            p_max,
            bound_value: rademacher_bound_value(p_max, net.layers.len(), 1.0, c_x, &c_l, train.len())?,
        });
    }
    Ok((net, metrics))
}

/// Two-bit XOR patterns with each bit on a pair of complementary rate-coded channels and
/// a fifth always-on channel that stands in for a bias.
pub fn xor_samples(on: f64, repeats: usize) -> Vec<Sample> {
    let mut out = Vec::new();
    for _ in 0..repeats {
        for (x1, x2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let ch = |b: i32| if b == 1 { [on, 0.0] } else { [0.0, on] };
            let mut pixels = ch(x1).to_vec();
            pixels.extend(ch(x2));
            pixels.push(on);
            out.push(Sample {
                pixels,
                label: (x1 ^ x2) as usize,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::poisson_encode;
    use crate::network::LayerSpec;
    use crate::neuron::{excitation_probability, NeuronParams, ProbabilityVariant, StochasticConfig};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn out(values: Vec<f64>, channels: usize) -> Output {
        let steps = values.len() / channels;
        Output { channels, steps, values }
    }

    #[test]
    fn loss_examples() {
        let o = out(vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 2);
        let spec = LossSpec::SpikeCountTargets { targets: vec![100.0, 10.0] };
        assert_relative_eq!(loss(&o, &spec).unwrap(), 4562.5);
        let same = LossSpec::LeastSquaresSequence { targets: o.values.clone() };
        assert_eq!(loss(&o, &same).unwrap(), 0.0);
        assert!(loss(&o, &LossSpec::SpikeCountTargets { targets: vec![1.0] }).is_err());
        let swapped = out(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0], 2);
        let spec2 = LossSpec::SpikeCountTargets { targets: vec![10.0, 100.0] };
        assert_eq!(loss(&o, &spec).unwrap(), loss(&swapped, &spec2).unwrap());
        let ce = loss(&o, &LossSpec::Classification { label: 0 }).unwrap();
        assert_relative_eq!(ce, (1.0 + (-5.0f64).exp()).ln(), epsilon = 1e-12);
    }

    #[test]
    fn loss_grad_matches_difference() {
        let o = out(vec![0.2, 0.7, 0.1, 0.9, 0.4, 0.3], 2);
        for spec in [
            LossSpec::SpikeCountTargets { targets: vec![1.0, 0.5] },
            LossSpec::Classification { label: 1 },
            LossSpec::LeastSquaresSequence { targets: vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0] },
        ] {
            let g = loss_grad(&o, &spec).unwrap();
            for i in 0..o.values.len() {
                let h = 1e-6;
                let mut up = o.clone();
                up.values[i] += h;
                let mut dn = o.clone();
                dn.values[i] -= h;
                let fd = (loss(&up, &spec).unwrap() - loss(&dn, &spec).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6);
            }
        }
    }

    fn exp_params() -> (NeuronParams, StochasticConfig) {
        let p = NeuronParams::new(5.0, 5.0, 1.0, 0.0, 1.0).unwrap();
        let cfg = StochasticConfig::new(ProbabilityVariant::Exponential, 1.0, 1.0, 0.5, &p).unwrap();
        (p, cfg)
    }

    #[test]
    fn single_neuron_single_step() {
        let (p, cfg) = exp_params();
        let layer = LayerSpec {
            weights: DMatrix::from_element(1, 1, 2.0),
            self_conn: None,
            stochastic: Some(cfg),
        };
        let net = Network::new(p, vec![layer]).unwrap();
        let mut input = SpikeTrain::zeros(1, 1, 1.0);
        input.set(0, 0, true);
        let (o, trace) = forward(&net, &input, Mode::Relaxed, 0).unwrap();
        let spec = LossSpec::LeastSquaresSequence { targets: vec![1.0] };
        let g = backward(&trace, &net, &spec).unwrap();
        let a = p.decay();
        let u = (1.0 - a) * p.tau_r * 2.0;
        let pu = excitation_probability(u, &p, &cfg);
        assert_eq!(o.values[0], pu);
        let expect = (pu - 1.0) * excitation_probability_derivative(u, &p, &cfg) * (1.0 - a) * p.tau_r;
        assert_relative_eq!(g.dw[0][(0, 0)], expect, epsilon = 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let (p, cfg) = exp_params();
        let net = Network::random(&[5, 4, 3], p, 2.0, Some(cfg), 1).unwrap();
        let input = poisson_encode(&[0.5; 5], 8, 1).unwrap();
        let (o, trace) = forward(&net, &input, Mode::Relaxed, 0).unwrap();
        let spec = LossSpec::LeastSquaresSequence { targets: o.values.clone() };
        let g = backward(&trace, &net, &spec).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let (_, det) = forward(&net, &input, Mode::Deterministic, 0).unwrap();
        assert!(backward(&det, &net, &spec).is_err());
    }

    #[test]
    fn linear_self_connection_single_step_formula() {
        let (p, cfg) = exp_params();
        let sc = SelfConnection::linear(DMatrix::from_row_slice(2, 2, &[0.0, 0.3, -0.2, 0.0]));
        let layer = LayerSpec {
            weights: DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.2, 0.9]),
            self_conn: Some(sc),
            stochastic: Some(cfg),
        };
        let net = Network::new(p, vec![layer]).unwrap();
        let input = SpikeTrain::from_rows(&[vec![1, 1], vec![1, 0]], 1.0).unwrap();
        let (_, trace) = forward(&net, &input, Mode::Relaxed, 0).unwrap();
        // loss only at the second step on neuron 0
        let mut targets = vec![0.0; 4];
        targets[0] = trace.layers[0].s[0];
        targets[1] = trace.layers[0].s[2] - 1.0;
        targets[2] = trace.layers[0].s[1];
        targets[3] = trace.layers[0].s[3];
        let spec = LossSpec::LeastSquaresSequence { targets };
        let g = backward_with(&trace, &net, &spec, BackwardOptions { truncation: Some(0) }).unwrap();
        let dv = g.dv[0].as_ref().unwrap();
        let a = p.decay();
        let u = trace.layers[0].u_pre[2];
        let common = 1.0 * excitation_probability_derivative(u, &p, &cfg) * (1.0 - a) * p.tau_m;
        for i in 0..2 {
            assert_relative_eq!(dv.v1[(0, i)], common * trace.layers[0].u_post[i], epsilon = 1e-15);
        }
        assert_eq!(dv.v1[(1, 0)], 0.0);
    }

    fn flat(net: &Network) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &net.layers {
            v.extend(l.weights.iter());
            if let Some(sc) = &l.self_conn {
                v.extend(sc.flat_params());
            }
        }
        v
    }

    fn set_flat(net: &mut Network, v: &[f64]) {
        let mut off = 0;
        for l in net.layers.iter_mut() {
            let len = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&v[off..off + len]);
            off += len;
            if let Some(sc) = l.self_conn.as_mut() {
                let m = sc.flat_params().len();
                sc.set_flat_params(&v[off..off + m]);
                off += m;
            }
        }
    }

    fn flat_grads(g: &GradientSet) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, dv) in g.dw.iter().zip(&g.dv) {
            v.extend(w.iter());
            if let Some(sc) = dv {
                v.extend(sc.flat_params());
            }
        }
        v
    }

    #[test]
    fn relaxed_gradient_matches_finite_differences_with_quadratic_self_connection() {
        let (p, cfg) = exp_params();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Network::random(&[6, 5, 3], p, 1.5, Some(cfg), 9).unwrap();
        let mut sc = SelfConnection::full_polynomial(DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-0.1..0.1)), 2, 0.0);
        let keys: Vec<_> = sc.higher.keys().cloned().collect();
        for k in keys {
            sc.set_term(k, (0..5).map(|_| rng.gen_range(-0.05..0.05)).collect()).unwrap();
        }
        net.layers[0].self_conn = Some(sc);
        let input = poisson_encode(&[0.6; 6], 8, 3).unwrap();
        let spec = LossSpec::Classification { label: 2 };
        let (_, trace) = forward(&net, &input, Mode::Relaxed, 0).unwrap();
        let g = flat_grads(&backward(&trace, &net, &spec).unwrap());
        let base = flat(&net);
        let eval = |v: &[f64]| {
            let mut n = net.clone();
            set_flat(&mut n, v);
            loss(&forward(&n, &input, Mode::Relaxed, 0).unwrap().0, &spec).unwrap()
        };
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..base.len() {
            let h = 1e-5;
            let mut up = base.clone();
            up[i] += h;
            let mut dn = base.clone();
            dn[i] -= h;
            let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * scale, "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn truncated_window_covering_all_steps_is_exact() {
        let (p, cfg) = exp_params();
        let net = Network::random(&[4, 3, 2], p, 2.0, Some(cfg), 2).unwrap();
        let input = poisson_encode(&[0.7; 4], 6, 8).unwrap();
        let (_, trace) = forward(&net, &input, Mode::Relaxed, 0).unwrap();
        let spec = LossSpec::Classification { label: 0 };
        let full = backward(&trace, &net, &spec).unwrap();
        let win = backward_with(&trace, &net, &spec, BackwardOptions { truncation: Some(5) }).unwrap();
        let mut diff = full.clone();
        diff.axpy(-1.0, &win);
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn sgd_properties() {
        let (p, cfg) = exp_params();
        let net = Network::random(&[3, 2], p, 1.0, Some(cfg), 0).unwrap();
        let zero = GradientSet::zeros(&net);
        assert_eq!(sgd_step(&net, &zero, 0.1), net);
        let mut g1 = GradientSet::zeros(&net);
        g1.dw[0][(0, 1)] = 0.5;
        let mut g2 = GradientSet::zeros(&net);
        g2.dw[0][(1, 2)] = -0.25;
        assert_eq!(sgd_step(&net, &g1, 0.0), net);
        let mut sum = g1.clone();
        sum.axpy(1.0, &g2);
        let a = sgd_step(&net, &sum, 0.3);
        let b = sgd_step(&sgd_step(&net, &g1, 0.3), &g2, 0.3);
        for (x, y) in a.layers[0].weights.iter().zip(b.layers[0].weights.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn one_step_decreases_convex_toy() {
        let (p, cfg) = exp_params();
        let layer = LayerSpec {
            weights: DMatrix::from_element(1, 1, 1.0),
            self_conn: None,
            stochastic: Some(cfg),
        };
        let net = Network::new(p, vec![layer]).unwrap();
        let mut input = SpikeTrain::zeros(1, 1, 1.0);
        input.set(0, 0, true);
        let spec = LossSpec::LeastSquaresSequence { targets: vec![0.9] };
        let (o, trace) = forward(&net, &input, Mode::Relaxed, 0).unwrap();
        let before = loss(&o, &spec).unwrap();
        let g = backward(&trace, &net, &spec).unwrap();
        let next = sgd_step(&net, &g, 0.5);
        let after = loss(&forward(&next, &input, Mode::Relaxed, 0).unwrap().0, &spec).unwrap();
        assert!(after < before);
    }

    #[test]
    fn bound_values() {
        assert_eq!(rademacher_bound_value(0.0, 2, 1.0, 1.0, &[1.0, 1.0], 9).unwrap(), 0.0);
        assert_relative_eq!(rademacher_bound_value(0.25, 1, 1.0, 1.0, &[1.0], 4).unwrap(), 0.125);
        let mut prev = 0.0;
        for k in 0..=20 {
            let v = rademacher_bound_value(k as f64 / 20.0, 3, 1.2, 2.0, &[1.0, 0.5, 3.0], 10).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let p = NeuronParams::new(20.0, 20.0, 1.0, 0.0, 1.0).unwrap();
        let cfg = StochasticConfig::heaviside(0.5, &p).unwrap();
        let net = Network::random(&[5, 6, 2], p, 3.0, Some(cfg), 1).unwrap();
        let data = xor_samples(0.9, 2);
        let tc = TrainConfig {
            epochs: 0,
            steps: 10,
            batch_size: 4,
            loss: LossKind::SpikeCount { true_count: 5.0, false_count: 0.0 },
            ..TrainConfig::default()
        };
        let (n0, m0) = train_loop(&net, &data, None, &tc).unwrap();
        assert_eq!(n0, net);
        assert!(m0.is_empty());
        let tc = TrainConfig { epochs: 3, ..tc };
        let (n1, m1) = train_loop(&net, &data, Some(&data), &tc).unwrap();
        let (n2, m2) = train_loop(&net, &data, Some(&data), &tc).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(n1, n2);
        assert!(train_loop(&net, &[], None, &tc).is_err());
        assert_eq!(metrics_csv(&m1).lines().count(), 4);
    }
}
