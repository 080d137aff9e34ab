//! Files, configuration and the command-line front end.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod idx;

use std::path::{Path, PathBuf};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{parse_config, parse_config_text, RunConfig};
pub use idx::{load_mnist_dir, load_mnist_idx, parse_idx_images, parse_idx_labels, shuffle, split, subset, write_idx};

use crate::error::Result;
use crate::network::Network;
use crate::train::{train_loop, EpochMetrics, Sample};

/// MNIST directory: `MNIST_DIR` if set, else the bundled desk subset.
pub fn default_mnist_dir() -> PathBuf {
    match std::env::var_os("MNIST_DIR") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-desk"),
    }
}

/// Train and test sets cut to the sizes in `cfg`.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let dir = cfg.data_dir.clone().unwrap_or_else(default_mnist_dir);
    let (train, test) = load_mnist_dir(&dir)?;
    let train = match cfg.train_samples {
        Some(n) if n < train.len() => subset(&train, n, cfg.seed),
        _ => train,
    };
    let test = match cfg.test_samples {
        Some(n) if n < test.len() => subset(&test, n, cfg.seed ^ 1),
        _ => test,
    };
    Ok((train, test))
}

/// `inputs - hidden... - classes` network with stochastic neurons everywhere.
pub fn build_network(cfg: &RunConfig, inputs: usize, classes: usize) -> Result<Network> {
    let mut sizes = vec![inputs];
    sizes.extend(&cfg.hidden);
    sizes.push(classes);
    Network::random(
        &sizes,
        cfg.neuron_params()?,
        cfg.init_scale,
        Some(cfg.stochastic()?),
        cfg.seed,
    )
}

pub fn run_training(
    cfg: &RunConfig,
    train: &[Sample],
    test: &[Sample],
) -> Result<(Network, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let inputs = train.first().map_or(784, |s| s.pixels.len());
    let net = build_network(cfg, inputs, 10)?;
    train_loop(&net, train, Some(test), &cfg.train_config())
}
