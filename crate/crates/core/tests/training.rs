use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikedyn::encoding::SpikeTrain;
use spikedyn::network::{forward, LayerSpec, Mode, Network};
use spikedyn::neuron::{excitation_probability, stochastic_fire, NeuronParams, ProbabilityVariant, StochasticConfig};
use spikedyn::train::{evaluate, train_loop, xor_samples, LossKind, TrainConfig};

#[test]
fn xor_is_learned_within_200_epochs() {
    let params = NeuronParams::new(20.0, 20.0, 1.0, 0.0, 1.0).unwrap();
    let st = StochasticConfig::new(ProbabilityVariant::LinearCorrected, 1.0, 1.0, 0.6, &params).unwrap();
    let net = Network::random(&[5, 16, 2], params, 2.0, Some(st), 0).unwrap();
    let data = xor_samples(0.9, 8);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        lr: 0.003,
        steps: 20,
        loss: LossKind::SpikeCount { true_count: 12.0, false_count: 2.0 },
        seed: 1,
        ..TrainConfig::default()
    };
    let (trained, metrics) = train_loop(&net, &data, Some(&data), &cfg).unwrap();
    let first = metrics.iter().position(|m| m.accuracy() == 1.0);
    assert!(first.is_some(), "never reached 100%");
    assert_eq!(evaluate(&trained, &xor_samples(0.9, 25), &cfg, 1234).unwrap(), 1.0);
}

fn mc_mean(p: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws).map(|_| stochastic_fire(p, &mut rng) as f64).sum::<f64>() / draws as f64
}

#[test]
fn spike_draws_are_unbiased() {
    let params = NeuronParams::new(200.0, 200.0, 10.0, 0.0, 1.0).unwrap();
    let n = 100_000;
    for variant in [ProbabilityVariant::Exponential, ProbabilityVariant::HeavisideLike, ProbabilityVariant::LinearCorrected] {
        let cfg = StochasticConfig::new(variant, 1.0, 1.0, 0.5, &params).unwrap();
        for i in 0..=20 {
            let u = i as f64 * 0.5;
            let p = excitation_probability(u, &params, &cfg);
            let mean = mc_mean(p, n, i as u64);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((mean - p).abs() <= 3.0 * sigma + 1e-12, "{variant:?} u={u}: {mean} vs {p}");
        }
    }
}

#[test]
fn network_first_step_fires_with_probability_p() {
    // a single neuron driven by one input spike: u after step one is known exactly
    let params = NeuronParams::new(20.0, 20.0, 1.0, 0.0, 1.0).unwrap();
    let cfg = StochasticConfig::new(ProbabilityVariant::LinearCorrected, 1.0, 1.0, 0.5, &params).unwrap();
    let input = SpikeTrain::from_rows(&[vec![1]], 1.0).unwrap();
    for w in [4.0, 10.0, 16.0] {
        let layer = LayerSpec { stochastic: Some(cfg), ..LayerSpec::new(DMatrix::from_element(1, 1, w)) };
        let net = Network::new(params, vec![layer]).unwrap();
        let (_, trace) = forward(&net, &input, Mode::Relaxed, 0).unwrap();
        let p = trace.layers[0].p.as_ref().unwrap()[0];
        let n = 20_000;
        let fired: f64 = (0..n).map(|s| forward(&net, &input, Mode::Stochastic, s).unwrap().0.values[0]).sum();
        let mean = fired / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((mean - p).abs() <= 3.0 * sigma, "w={w}: {mean} vs {p}");
    }
}
