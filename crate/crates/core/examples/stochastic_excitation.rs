//! Firing probability curves and the extra spikes stochastic excitation produces.

use spikedyn::encoding::poisson_encode;
use spikedyn::network::{forward, spike_stats, Mode, Network};
use spikedyn::neuron::{excitation_probability, NeuronParams, ProbabilityVariant, StochasticConfig};

fn main() -> spikedyn::Result<()> {
    let params = NeuronParams::new(200.0, 200.0, 10.0, 0.0, 1.0)?;
    let variants = [
        ProbabilityVariant::Linear,
        ProbabilityVariant::LinearCorrected,
        ProbabilityVariant::Exponential,
        ProbabilityVariant::HeavisideLike,
    ];
    let cfgs: Vec<StochasticConfig> = variants
        .iter()
        .map(|&v| StochasticConfig::new(v, 1.0, 1.0, 0.5, &params))
        .collect::<spikedyn::Result<_>>()?;
    println!("u_theta for p_theta = 0.5: {:.4}", cfgs[3].u_theta);
    print!("{:>6}", "u");
    for v in &variants {
        print!("{:>18}", v.name());
    }
    println!();
    for i in 0..=10 {
        let u = i as f64;
        print!("{u:6.1}");
        for c in &cfgs {
            print!("{:18.4}", excitation_probability(u, &params, c));
        }
        println!();
    }

    let st = StochasticConfig::heaviside(0.6, &params)?;
    let net = Network::random(&[64, 32, 10], params, 8.0, Some(st), 7)?;
    let image: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 / 64.0).collect();
    let input = poisson_encode(&image, 50, 3)?;
    let det = spike_stats(&forward(&net, &input, Mode::Deterministic, 0)?.1).total();
    let stoch: Vec<usize> = (0..20)
        .map(|s| forward(&net, &input, Mode::Stochastic, s).map(|(_, tr)| spike_stats(&tr).total()))
        .collect::<spikedyn::Result<_>>()?;
    let mean = stoch.iter().sum::<usize>() as f64 / stoch.len() as f64;
    println!("deterministic spikes {det}, stochastic mean over 20 seeds {mean:.1}");
    Ok(())
}
