//! XOR with a 5-16-2 stochastic network trained by spike-count regression.
//!
//! The false-class target is 2 spikes rather than 0: an output driven fully silent sits
//! where p'(u) = 0 and stops receiving gradient.

use spikedyn::network::{forward, Mode, Network};
use spikedyn::neuron::{NeuronParams, ProbabilityVariant, StochasticConfig};
use spikedyn::encoding::poisson_encode;
use spikedyn::train::{evaluate, train_loop, xor_samples, LossKind, TrainConfig};

fn main() -> spikedyn::Result<()> {
    let params = NeuronParams::new(20.0, 20.0, 1.0, 0.0, 1.0)?;
    let st = StochasticConfig::new(ProbabilityVariant::LinearCorrected, 1.0, 1.0, 0.6, &params)?;
    let net = Network::random(&[5, 16, 2], params, 2.0, Some(st), 0)?;
    let data = xor_samples(0.9, 8);
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 8,
        lr: 0.003,
        steps: 20,
        loss: LossKind::SpikeCount {
            true_count: 12.0,
            false_count: 2.0,
        },
        train_mode: Mode::Stochastic,
        eval_mode: Mode::Deterministic,
        seed: 1,
        ..TrainConfig::default()
    };
    let (trained, metrics) = train_loop(&net, &data, Some(&data), &cfg)?;
    for m in metrics.iter().step_by(15) {
        println!("epoch {:3}  loss {:7.3}  accuracy {:.2}", m.epoch, m.loss, m.accuracy());
    }
    for s in xor_samples(0.9, 1) {
        let (out, _) = forward(&trained, &poisson_encode(&s.pixels, cfg.steps, 5)?, Mode::Deterministic, 0)?;
        println!("{:?} label {} -> counts {:?}", &s.pixels[..4], s.label, out.counts());
    }
    let acc = evaluate(&trained, &xor_samples(0.9, 25), &cfg, 99)?;
    println!("fresh encodings: accuracy {acc:.2}");
    Ok(())
}
