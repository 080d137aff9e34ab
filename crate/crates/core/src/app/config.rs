//! `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::encoding::PoissonOptions;
use crate::error::{parse_err, Error, Result};
use crate::network::Mode;
use crate::neuron::{NeuronParams, ProbabilityVariant, StochasticConfig};
use crate::train::{BackwardOptions, LossKind, TrainConfig};

/// Training run settings. Defaults are the MNIST column of the published
/// hyper-parameter table; [`RunConfig::desk_scale`] shrinks it for a laptop.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub batch_size: usize,
    /// Encoding length T in steps.
    pub encoding_length: usize,
    pub true_count: f64,
    pub false_count: f64,
    pub u_firing: f64,
    pub lr: f64,
    pub p_theta: f64,
    pub max_time_ms: f64,
    pub tau_m_ms: f64,
    pub tau_s_ms: f64,
    pub dt_ms: f64,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub variant: ProbabilityVariant,
    pub sigma: f64,
    pub q: f64,
    pub init_scale: f64,
    pub train_samples: Option<usize>,
    pub test_samples: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            batch_size: 32,
            encoding_length: 300,
            true_count: 100.0,
            false_count: 10.0,
            u_firing: 10.0,
            lr: 0.01,
            p_theta: 0.5,
            max_time_ms: 300.0,
            tau_m_ms: 200.0,
            tau_s_ms: 8.0,
            dt_ms: 1.0,
            epochs: 10,
            hidden: vec![500, 500],
            variant: ProbabilityVariant::HeavisideLike,
            sigma: 1.0,
            q: 1.0,
            init_scale: 1.0,
            train_samples: None,
            test_samples: None,
            data_dir: None,
            output_dir: None,
            seed: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "batch_size",
    "encoding_length",
    "true_count",
    "false_count",
    "u_firing",
    "lr",
    "p_theta",
    "max_time_ms",
    "tau_m_ms",
    "tau_s_ms",
    "dt_ms",
    "epochs",
    "hidden",
    "variant",
    "sigma",
    "q",
    "init_scale",
    "train_samples",
    "test_samples",
    "data_dir",
    "output_dir",
    "seed",
];

impl RunConfig {
    /// 784-100-10, T = 50, 2000/1000 samples, targets scaled with T.
    pub fn desk_scale() -> Self {
        let base = RunConfig::default();
        let t = 50;
        let ratio = t as f64 / base.encoding_length as f64;
        RunConfig {
            encoding_length: t,
            max_time_ms: t as f64 * base.dt_ms,
            true_count: base.true_count * ratio,
            false_count: base.false_count * ratio,
            hidden: vec![100],
            // Wider init keeps the outputs inside the band where p'(u) is nonzero.
            init_scale: 10.0,
            train_samples: Some(2000),
            test_samples: Some(1000),
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("u_firing", self.u_firing),
            ("max_time_ms", self.max_time_ms),
            ("tau_m_ms", self.tau_m_ms),
            ("tau_s_ms", self.tau_s_ms),
            ("dt_ms", self.dt_ms),
            ("sigma", self.sigma),
            ("q", self.q),
            ("init_scale", self.init_scale),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(range(k, "must be positive"));
            }
        }
        if self.batch_size == 0 {
            return Err(range("batch_size", "must be positive"));
        }
        if self.encoding_length == 0 {
            return Err(range("encoding_length", "must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(range("lr", "must be positive"));
        }
        if !(self.p_theta > 0.0 && self.p_theta <= 1.0) {
            return Err(range("p_theta", "must lie in (0, 1]"));
        }
        if !(self.true_count >= 0.0 && self.false_count >= 0.0) {
            return Err(range("true_count", "spike count targets must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(range("hidden", "layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn neuron_params(&self) -> Result<NeuronParams> {
        NeuronParams::new(self.tau_m_ms, self.tau_m_ms, self.u_firing, 0.0, self.dt_ms)
    }

    pub fn stochastic(&self) -> Result<StochasticConfig> {
        let params = self.neuron_params()?;
        StochasticConfig::new(self.variant, self.sigma, self.q, self.p_theta, &params)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            steps: self.encoding_length,
            loss: LossKind::SpikeCount {
                true_count: self.true_count,
                false_count: self.false_count,
            },
            train_mode: Mode::Stochastic,
            eval_mode: Mode::Deterministic,
            poisson: PoissonOptions {
                rate_scale: 1.0,
                dt_ms: self.dt_ms,
            },
            backward: BackwardOptions::default(),
            seed: self.seed,
        }
    }

    pub fn to_text(&self) -> String {
        let opt = |x: Option<usize>| x.map_or("none".to_string(), |v| v.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        let mut s = String::new();
        let rows: Vec<(&str, String)> = vec![
            ("batch_size", self.batch_size.to_string()),
            ("encoding_length", self.encoding_length.to_string()),
            ("true_count", self.true_count.to_string()),
            ("false_count", self.false_count.to_string()),
            ("u_firing", self.u_firing.to_string()),
            ("lr", self.lr.to_string()),
            ("p_theta", self.p_theta.to_string()),
            ("max_time_ms", self.max_time_ms.to_string()),
            ("tau_m_ms", self.tau_m_ms.to_string()),
            ("tau_s_ms", self.tau_s_ms.to_string()),
            ("dt_ms", self.dt_ms.to_string()),
            ("epochs", self.epochs.to_string()),
            ("hidden", hidden.join(",")),
            ("variant", self.variant.name().to_string()),
            ("sigma", self.sigma.to_string()),
            ("q", self.q.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("train_samples", opt(self.train_samples)),
            ("test_samples", opt(self.test_samples)),
            ("data_dir", path(&self.data_dir)),
            ("output_dir", path(&self.output_dir)),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn range(key: &str, msg: &str) -> Error {
    Error::Domain(format!("{key} {msg}"))
}

fn value<T: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(format!("line {line}"), format!("key '{key}': cannot parse '{raw}'")))
}

fn optional<T: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<Option<T>> {
    if raw == "none" {
        Ok(None)
    } else {
        value(key, raw, line).map(Some)
    }
}

/// Parse `key = value` lines; `#` starts a comment. Missing keys keep their
/// defaults, unknown keys are errors.
pub fn parse_config_text(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, val) = content
            .split_once('=')
            .ok_or_else(|| parse_err(format!("line {line}"), "expected 'key = value'"))?;
        let (key, val) = (key.trim(), val.trim());
        if !KEYS.contains(&key) {
            return Err(parse_err(format!("line {line}"), format!("unknown key '{key}'")));
        }
        match key {
            "batch_size" => cfg.batch_size = value(key, val, line)?,
            "encoding_length" => cfg.encoding_length = value(key, val, line)?,
            "true_count" => cfg.true_count = value(key, val, line)?,
            "false_count" => cfg.false_count = value(key, val, line)?,
            "u_firing" => cfg.u_firing = value(key, val, line)?,
            "lr" => cfg.lr = value(key, val, line)?,
            "p_theta" => cfg.p_theta = value(key, val, line)?,
            "max_time_ms" => cfg.max_time_ms = value(key, val, line)?,
            "tau_m_ms" => cfg.tau_m_ms = value(key, val, line)?,
            "tau_s_ms" => cfg.tau_s_ms = value(key, val, line)?,
            "dt_ms" => cfg.dt_ms = value(key, val, line)?,
            "epochs" => cfg.epochs = value(key, val, line)?,
            "hidden" => {
                cfg.hidden = if val.is_empty() {
                    Vec::new()
                } else {
                    val.split(',')
                        .map(|x| value(key, x.trim(), line))
                        .collect::<Result<_>>()?
                }
            }
            "variant" => cfg.variant = value(key, val, line)?,
            "sigma" => cfg.sigma = value(key, val, line)?,
            "q" => cfg.q = value(key, val, line)?,
            "init_scale" => cfg.init_scale = value(key, val, line)?,
            "train_samples" => cfg.train_samples = optional(key, val, line)?,
            "test_samples" => cfg.test_samples = optional(key, val, line)?,
            "data_dir" => cfg.data_dir = optional(key, val, line)?,
            "output_dir" => cfg.output_dir = optional(key, val, line)?,
            "seed" => cfg.seed = value(key, val, line)?,
            _ => unreachable!(),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_table_defaults() {
        let cfg = parse_config_text("").unwrap();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.encoding_length, 300);
        assert_eq!(cfg.true_count, 100.0);
        assert_eq!(cfg.false_count, 10.0);
        assert_eq!(cfg.u_firing, 10.0);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.p_theta, 0.5);
        assert_eq!(cfg.max_time_ms, 300.0);
        assert_eq!(cfg.tau_m_ms, 200.0);
        assert_eq!(cfg.tau_s_ms, 8.0);
        assert_eq!(cfg.dt_ms, 1.0);
    }

    #[test]
    fn p_theta_out_of_range() {
        let err = parse_config_text("p_theta = 1.5").unwrap_err();
        assert!(err.to_string().contains("p_theta"));
    }

    #[test]
    fn round_trip() {
        for cfg in [RunConfig::default(), RunConfig::desk_scale()] {
            assert_eq!(parse_config_text(&cfg.to_text()).unwrap(), cfg);
        }
        let mut odd = RunConfig::desk_scale();
        odd.data_dir = Some("some/dir".into());
        odd.variant = ProbabilityVariant::Exponential;
        odd.seed = 99;
        assert_eq!(parse_config_text(&odd.to_text()).unwrap(), odd);
    }

    #[test]
    fn errors_name_the_problem() {
        let err = parse_config_text("lr = fast").unwrap_err();
        assert!(err.to_string().contains("'lr'"));
        let err = parse_config_text("\n\nlearning = 1").unwrap_err();
        assert!(err.to_string().contains("line 3"));
        assert!(parse_config_text("batch_size 3").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config_text("# run\n\nseed = 7  # fixed\nhidden = 20, 30\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.hidden, vec![20, 30]);
    }

    #[test]
    fn desk_scale_targets_follow_encoding_length() {
        let d = RunConfig::desk_scale();
        assert_eq!(d.encoding_length, 50);
        assert!((d.true_count - 100.0 / 6.0).abs() < 1e-12);
        assert_eq!(d.hidden, vec![100]);
    }
}
