//! Fully connected feed-forward spiking network with deterministic, stochastic and
//! relaxed excitation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::SpikeTrain;
use crate::error::{domain, Result};
use crate::neuron::{excitation_probability, NeuronParams, StochasticConfig};
use crate::selfconn::SelfConnection;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    /// fan_out x fan_in.
    pub weights: DMatrix<f64>,
    pub self_conn: Option<SelfConnection>,
    pub stochastic: Option<StochasticConfig>,
}

impl LayerSpec {
    pub fn new(weights: DMatrix<f64>) -> Self {
        Self {
            weights,
            self_conn: None,
            stochastic: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub params: NeuronParams,
    pub layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(params: NeuronParams, layers: Vec<LayerSpec>) -> Result<Self> {
        params.validate()?;
        if layers.is_empty() {
            return domain("network needs at least one layer");
        }
        for (l, w) in layers.windows(2).enumerate() {
            if w[1].fan_in() != w[0].fan_out() {
                return domain(format!(
                    "layer {} expects {} inputs but layer {l} has {} outputs",
                    l + 1,
                    w[1].fan_in(),
                    w[0].fan_out()
                ));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if let Some(sc) = &layer.self_conn {
                if sc.n_neurons() != layer.fan_out() {
                    return domain(format!("self-connection of layer {l} has the wrong size"));
                }
            }
        }
        Ok(Self { params, layers })
    }

    /// Uniform(-scale/sqrt(fan_in), scale/sqrt(fan_in)) weights for the given layer sizes.
    pub fn random(
        sizes: &[usize],
        params: NeuronParams,
        scale: f64,
        stochastic: Option<StochasticConfig>,
        seed: u64,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return domain("need at least input and output sizes");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let b = scale / (w[0] as f64).sqrt();
                LayerSpec {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.gen_range(-b..=b)),
                    self_conn: None,
                    stochastic,
                }
            })
            .collect();
        Self::new(params, layers)
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Threshold firing.
    Deterministic,
    /// Bernoulli(p(u)) firing below threshold.
    Stochastic,
    /// The probability itself is transmitted and used in the reset.
    Relaxed,
}

/// Time-major per-layer record (index `t * n + k`).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub n: usize,
    pub u_pre: Vec<f64>,
    pub u_post: Vec<f64>,
    pub s: Vec<f64>,
    /// Present in stochastic and relaxed modes.
    pub p: Option<Vec<f64>>,
    /// ⌊u_pre/u_firing⌋ above threshold, 0 otherwise.
    pub multi: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub steps: usize,
    pub input: SpikeTrain,
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    /// Output of the last layer as a channel-major matrix.
    pub fn output(&self) -> Output {
        let last = self.layers.last().expect("trace has layers");
        let mut values = vec![0.0; last.n * self.steps];
        for t in 0..self.steps {
            for k in 0..last.n {
                values[k * self.steps + t] = last.s[t * last.n + k];
            }
        }
        Output {
            channels: last.n,
            steps: self.steps,
            values,
        }
    }
}

/// Channel x time output values: spikes in {0,1}, or probabilities in relaxed mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub channels: usize,
    pub steps: usize,
    pub values: Vec<f64>,
}

impl Output {
    pub fn get(&self, channel: usize, step: usize) -> f64 {
        self.values[channel * self.steps + step]
    }

    pub fn counts(&self) -> Vec<f64> {
        self.values.chunks(self.steps.max(1)).map(|r| r.iter().sum()).collect()
    }

    /// Spike train view; relaxed values are thresholded at 0.5.
    pub fn to_spike_train(&self, dt_ms: f64) -> SpikeTrain {
        let mut t = SpikeTrain::zeros(self.channels, self.steps, dt_ms);
        for c in 0..self.channels {
            for k in 0..self.steps {
                t.set(c, k, self.get(c, k) >= 0.5);
            }
        }
        t
    }
}

/// RNG for one (sample seed, layer): stream = layer, drawing one value per neuron per step
/// in order, so draw (t, k) sits at word position (t * n + k) * 2.
fn layer_rng(seed: u64, layer: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(layer as u64);
    rng.set_word_pos(0);
    rng
}

/// Runs the network over the input train. Within a step, spikes are transmitted downstream
/// before the emitting neuron is reset.
pub fn forward(net: &Network, input: &SpikeTrain, mode: Mode, seed: u64) -> Result<(Output, ForwardTrace)> {
    if input.channels() != net.input_size() {
        return domain(format!(
            "input has {} channels, network expects {}",
            input.channels(),
            net.input_size()
        ));
    }
    let params = &net.params;
    let steps = input.steps();
    let a = params.decay();
    let lin_w = (1.0 - a) * params.tau_r;
    let star_w = (1.0 - a) * params.tau_m;

    let mut traces: Vec<LayerTrace> = net
        .layers
        .iter()
        .map(|l| {
            let n = l.fan_out();
            LayerTrace {
                n,
                u_pre: vec![0.0; n * steps],
                u_post: vec![0.0; n * steps],
                s: vec![0.0; n * steps],
                p: (mode != Mode::Deterministic).then(|| vec![0.0; n * steps]),
                multi: vec![0; n * steps],
            }
        })
        .collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..net.layers.len()).map(|l| layer_rng(seed, l)).collect();
    let mut prev_u: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.fan_out()]).collect();
    let mut star: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.fan_out()]).collect();
    let mut x: Vec<f64> = Vec::new();
    let mut drive: Vec<f64> = Vec::new();

    for t in 0..steps {
        x.clear();
        x.extend((0..input.channels()).map(|c| input.get(c, t) as f64));
        for (l, layer) in net.layers.iter().enumerate() {
            let n = layer.fan_out();
            drive.clear();
            drive.resize(n, 0.0);
            let w = layer.weights.as_slice();
            for (j, &xj) in x.iter().enumerate() {
                if xj != 0.0 {
                    let col = &w[j * n..(j + 1) * n];
                    for (d, wk) in drive.iter_mut().zip(col) {
                        *d += xj * wk;
                    }
                }
            }
            if let Some(sc) = &layer.self_conn {
                sc.promote_into(&prev_u[l], &mut star[l]);
            }
            let tr = &mut traces[l];
            let base = t * n;
            for k in 0..n {
                let mut u = a * prev_u[l][k] + lin_w * drive[k];
                if layer.self_conn.is_some() {
                    u += star_w * star[l][k];
                }
                let above = u >= params.u_firing;
                let p = match (&layer.stochastic, mode) {
                    (_, Mode::Deterministic) => None,
                    (Some(cfg), _) => Some(excitation_probability(u, params, cfg)),
                    (None, _) => Some(if above { 1.0 } else { 0.0 }),
                };
                let s = match mode {
                    Mode::Deterministic => above as u8 as f64,
                    Mode::Stochastic => {
                        let draw: f64 = rngs[l].gen();
                        (above || draw < p.unwrap_or(0.0)) as u8 as f64
                    }
                    Mode::Relaxed => p.unwrap_or(0.0),
                };
                tr.u_pre[base + k] = u;
                tr.s[base + k] = s;
                if let (Some(pv), Some(pp)) = (tr.p.as_mut(), p) {
                    pv[base + k] = pp;
                }
                if above {
                    tr.multi[base + k] = (u / params.u_firing).floor().max(1.0) as u32;
                }
                let post = (1.0 - s) * u + s * params.u_reset;
                tr.u_post[base + k] = post;
                prev_u[l][k] = post;
            }
            x.clear();
            x.extend_from_slice(&tr.s[base..base + n]);
        }
    }
    let trace = ForwardTrace {
        mode,
        steps,
        input: input.clone(),
        layers: traces,
    };
    Ok((trace.output(), trace))
}

/// Index of the largest count; ties go to the lowest index.
pub fn argmax_count(counts: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub fn decode_classification(output: &SpikeTrain) -> usize {
    let counts: Vec<f64> = output.counts().into_iter().map(|c| c as f64).collect();
    argmax_count(&counts)
}

/// sigmoid(Σ_t o(t) w_o(t)) per channel.
pub fn decode_regression(output: &SpikeTrain, w_o: &[f64]) -> Result<Vec<f64>> {
    if w_o.len() != output.steps() {
        return domain(format!(
            "weight vector has {} entries, output has {} steps",
            w_o.len(),
            output.steps()
        ));
    }
    Ok((0..output.channels())
        .map(|c| {
            let z: f64 = output.row(c).iter().zip(w_o).map(|(&s, w)| s as f64 * w).sum();
            1.0 / (1.0 + (-z).exp())
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpikeStats {
    pub per_layer: Vec<usize>,
    pub per_neuron: Vec<Vec<usize>>,
    /// Spikes whose pre-reset potential reached the threshold.
    pub deterministic: Vec<usize>,
    /// Spikes fired below the threshold by the Bernoulli draw.
    pub stochastic: Vec<usize>,
}

impl SpikeStats {
    pub fn total(&self) -> usize {
        self.per_layer.iter().sum()
    }
}

/// Spike counts; relaxed traces count entries equal to 1.
pub fn spike_stats(trace: &ForwardTrace) -> SpikeStats {
    let mut stats = SpikeStats {
        per_layer: Vec::new(),
        per_neuron: Vec::new(),
        deterministic: Vec::new(),
        stochastic: Vec::new(),
    };
    for tr in &trace.layers {
        let mut per = vec![0usize; tr.n];
        let (mut det, mut sto) = (0, 0);
        for t in 0..trace.steps {
            for k in 0..tr.n {
                let i = t * tr.n + k;
                if tr.s[i] == 1.0 {
                    per[k] += 1;
                    if tr.multi[i] > 0 || trace.mode == Mode::Deterministic {
                        det += 1;
                    } else {
                        sto += 1;
                    }
                }
            }
        }
        stats.per_layer.push(per.iter().sum());
        stats.per_neuron.push(per);
        stats.deterministic.push(det);
        stats.stochastic.push(sto);
    }
    stats
}
