//! JSON checkpoints of trained networks.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LayerSpec, Network};
use crate::neuron::{NeuronParams, StochasticConfig};
use crate::selfconn::SelfConnection;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "spikedyn-checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct File {
    format: String,
    version: u32,
    seed: u64,
    epoch: usize,
    params: NeuronParams,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_out × fan_in`.
    weights: Vec<f64>,
    self_conn: Option<SelfConnFile>,
    stochastic: Option<StochasticConfig>,
}

#[derive(Serialize, Deserialize)]
struct SelfConnFile {
    n: usize,
    v1: Vec<f64>,
    include_diagonal: bool,
    higher: Vec<(Vec<u32>, Vec<f64>)>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Domain(format!(
            "{what}: expected {} values, found {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let layers = self
            .network
            .layers
            .iter()
            .map(|l| LayerFile {
                fan_in: l.fan_in(),
                fan_out: l.fan_out(),
                weights: row_major(&l.weights),
                self_conn: l.self_conn.as_ref().map(|sc| SelfConnFile {
                    n: sc.n_neurons(),
                    v1: row_major(&sc.v1),
                    include_diagonal: sc.include_diagonal,
                    higher: sc.higher.iter().map(|(a, c)| (a.clone(), c.clone())).collect(),
                }),
                stochastic: l.stochastic,
            })
            .collect();
        let file = File {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            epoch: self.epoch,
            params: self.network.params,
            layers,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: File = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::Domain(format!("not a checkpoint (format '{}')", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Unsupported(format!(
                "checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, l) in file.layers.into_iter().enumerate() {
            let weights = from_row_major(l.fan_out, l.fan_in, &l.weights, &format!("layer {i} weights"))?;
            let self_conn = match l.self_conn {
                None => None,
                Some(sc) => {
                    let v1 = from_row_major(sc.n, sc.n, &sc.v1, &format!("layer {i} self-connection"))?;
                    let mut s = SelfConnection::linear(v1);
                    s.include_diagonal = sc.include_diagonal;
                    for (alpha, coeffs) in sc.higher {
                        s.set_term(alpha, coeffs)?;
                    }
                    Some(s)
                }
            };
            layers.push(LayerSpec {
                weights,
                self_conn,
                stochastic: l.stochastic,
            });
        }
        Ok(Checkpoint {
            network: Network::new(file.params, layers)?,
            seed: file.seed,
            epoch: file.epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::StochasticConfig;

    fn sample_network() -> Network {
        let params = NeuronParams::new(20.0, 20.0, 1.0, 0.0, 1.0).unwrap();
        let st = StochasticConfig::heaviside(0.6, &params).unwrap();
        let mut net = Network::random(&[5, 4, 3], params, 1.3, Some(st), 11).unwrap();
        net.layers[0].self_conn = Some(
            SelfConnection::full_polynomial(DMatrix::from_fn(4, 4, |i, j| 0.01 * (i as f64 - j as f64)), 2, 1e-3)
                .excluding_diagonal(),
        );
        net
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = Checkpoint {
            network: sample_network(),
            seed: 5,
            epoch: 3,
        };
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_other_versions_and_bad_shapes() {
        let ck = Checkpoint {
            network: sample_network(),
            seed: 0,
            epoch: 0,
        };
        let text = ck.to_json().unwrap();
        let v2 = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(Checkpoint::from_json(&v2), Err(Error::Unsupported(_))));
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["layers"][1]["fan_in"] = 7.into();
        assert!(Checkpoint::from_json(&value.to_string()).is_err());
        assert!(Checkpoint::from_json("{}").is_err());
    }
}
