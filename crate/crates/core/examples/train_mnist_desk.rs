//! Desk-scale MNIST: 784-100-10 stochastic SNN on a 2000/1000 subset.
//!
//! Set `MNIST_DIR` to a directory with the four IDX files to use other data.

use std::time::Instant;

use spikedyn::app::{load_datasets, run_training, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::desk_scale();
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Some(e) = args.first() {
        cfg.epochs = e.parse()?;
    }
    if let Some(seed) = args.get(1) {
        cfg.seed = seed.parse()?;
    }
    let (train, test) = load_datasets(&cfg)?;
    println!("{} train / {} test samples, T = {}", train.len(), test.len(), cfg.encoding_length);
    let start = Instant::now();
    let (_, metrics) = run_training(&cfg, &train, &test)?;
    for m in &metrics {
        println!(
            "epoch {:2}  loss {:8.3}  train {:.3}  test {:.3}  spikes/sample {:7.1}",
            m.epoch,
            m.loss,
            m.train_accuracy,
            m.accuracy(),
            m.spikes_per_sample
        );
    }
    println!("{:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
