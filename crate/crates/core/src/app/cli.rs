//! Subcommands of the `spikedyn` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{load_datasets, parse_config, run_training, Checkpoint, RunConfig};
use crate::dynamics::{
    bifurcation_sweep, energy, energy_derivative, energy_rate, integrate, lyapunov, sweep_csv, ContinuousSystem,
    Firing, LyapunovOptions, Method, SweepOptions,
};
use crate::encoding::{format_spike_train, poisson_encode_with, read_spike_train, PoissonOptions};
use crate::error::{domain, Error, Result};
use crate::limitcycle::{
    averaging_components, lower_bound_h, limit_cycle_upper_bound, rat, to_normal_form, BetaId, BoundMode,
    BoundOptions, Branch, PatternSource, PerturbedPlanarSystem, Rational,
};
use crate::network::{forward, spike_stats, Mode};
use crate::train::{evaluate, metrics_csv, mix_seed};

#[derive(Debug, Parser)]
#[command(name = "spikedyn", version, about = "Spiking network dynamics, training and limit-cycle analysis")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Poisson-encode an image into a spike train.
    Encode(EncodeArgs),
    /// Train a stochastic network on MNIST IDX files.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on the test set.
    Eval(EvalArgs),
    /// Integrate the planar self-connection system.
    Simulate(PlanarArgs),
    /// Largest Lyapunov exponent of the planar system.
    Lyapunov(LyapunovArgs),
    /// Lyapunov exponents over a v12 sweep.
    Bifurcate(BifurcateArgs),
    /// Averaging-method bound on bifurcating limit cycles.
    LimitBound(LimitBoundArgs),
    /// Recursive lower bound H(n) for n = 2^k - 1.
    LowerBound(LowerBoundArgs),
    /// Energy and energy rate along a drive-free trajectory.
    Energy(PlanarArgs),
    /// Spike counts of a spike train, optionally pushed through a checkpoint.
    RasterStats(RasterArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Text file of intensities in [0,1], separated by commas or whitespace.
    #[arg(long, conflicts_with = "mnist_dir")]
    pub input: Option<PathBuf>,
    /// Encode a test image from this MNIST directory instead.
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub rate_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dt_ms: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the laptop-sized preset (784-100-10, T = 50, 2000/1000 samples).
    #[arg(long)]
    pub desk_scale: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long)]
    pub samples: Option<usize>,
    /// deterministic, stochastic or relaxed.
    #[arg(long, default_value = "deterministic")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct PlanarArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub v12: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub v21: f64,
    /// Initial state, e.g. `6,3`.
    #[arg(long, allow_hyphen_values = true, default_value = "1,0.5")]
    pub u0: String,
    #[arg(long, default_value_t = 2.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_m: f64,
    /// rk4 or exp_euler.
    #[arg(long, default_value = "rk4")]
    pub method: String,
    /// Threshold and reset, e.g. `1,0`.
    #[arg(long, allow_hyphen_values = true)]
    pub firing: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LyapunovArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub v12: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub v21: f64,
    #[arg(long, allow_hyphen_values = true, default_value = "1,0.5")]
    pub u0: String,
    #[arg(long, default_value_t = 1.0)]
    pub tau_m: f64,
    #[arg(long, default_value_t = 100.0)]
    pub t_transient: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub t_measure: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub firing: Option<String>,
}

#[derive(Debug, Args)]
pub struct BifurcateArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub v21: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = -1.0)]
    pub v12_min: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 4.0)]
    pub v12_max: f64,
    #[arg(long, default_value_t = 51)]
    pub resolution: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "1,0.5")]
    pub u0: String,
    #[arg(long, default_value_t = 1.0)]
    pub tau_m: f64,
    #[arg(long, default_value_t = 20.0)]
    pub t_transient: f64,
    #[arg(long, default_value_t = 200.0)]
    pub t_measure: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub firing: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitBoundArgs {
    /// Built-in system; only `cubic` is available.
    #[arg(long, default_value = "cubic")]
    pub example: String,
    /// Averaging order (1..=5).
    #[arg(long = "K", visible_alias = "order", default_value_t = 1)]
    pub k: usize,
    /// Maximal count over all β instead of a count for fixed β.
    #[arg(long)]
    pub structural: bool,
    /// In structural mode, read the pattern from the computed G_K.
    #[arg(long, requires = "structural")]
    pub computed: bool,
    /// f0-zero or f0-nonzero.
    #[arg(long, default_value = "f0-zero")]
    pub branch: String,
    /// JSON object of β values, e.g. {"b1_1_1": "1/2", "b2_1_2": -1}; missing β are 0.
    #[arg(long, conflicts_with = "random_beta")]
    pub beta: Option<PathBuf>,
    /// Draw every β at random from `--seed`.
    #[arg(long)]
    pub random_beta: bool,
    #[arg(long, default_value = "1")]
    pub tau_m: String,
    /// Radius range for the f0-nonzero branch.
    #[arg(long, default_value_t = 1.0)]
    pub z_max: f64,
    /// Write the averaged components as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LowerBoundArgs {
    #[arg(long)]
    pub n: u64,
}

#[derive(Debug, Args)]
pub struct RasterArgs {
    /// Spike train in the text format written by `encode`.
    #[arg(long)]
    pub spikes: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "stochastic")]
    pub mode: String,
}

fn parse_vec(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("cannot parse '{x}' as a number")))
        })
        .collect()
}

fn parse_firing(s: &Option<String>) -> Result<Option<Firing>> {
    match s {
        None => Ok(None),
        Some(s) => match parse_vec(s)?.as_slice() {
            [u_firing, u_reset] => Ok(Some(Firing {
                u_firing: *u_firing,
                u_reset: *u_reset,
            })),
            _ => domain("firing needs two values: threshold,reset"),
        },
    }
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "deterministic" => Ok(Mode::Deterministic),
        "stochastic" => Ok(Mode::Stochastic),
        "relaxed" => Ok(Mode::Relaxed),
        _ => domain(format!("unknown mode '{s}'")),
    }
}

fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| Error::Domain(format!("bad rational '{s}'")))?;
        let d: i64 = d.trim().parse().map_err(|_| Error::Domain(format!("bad rational '{s}'")))?;
        if d == 0 {
            return domain("zero denominator");
        }
        return Ok(rat(n, d));
    }
    if let Ok(n) = s.parse::<i64>() {
        return Ok(rat(n, 1));
    }
    s.parse::<f64>()
        .ok()
        .and_then(Rational::from_float)
        .ok_or_else(|| Error::Domain(format!("bad number '{s}'")))
}

fn parse_beta_name(name: &str) -> Result<BetaId> {
    let bad = || Error::Domain(format!("bad coefficient name '{name}', expected b<i>_<k>_<j>"));
    let rest = name.strip_prefix('b').ok_or_else(bad)?;
    let parts: Vec<u32> = rest
        .split('_')
        .map(|x| x.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [i @ 1..=2, k @ 1..=5, j @ 1..=9] => Ok(BetaId::new(*i, *k, *j)),
        _ => Err(bad()),
    }
}

fn out_or_stdout(path: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Encode(a) => encode_cmd(a, seed, out),
        Command::Train(a) => train_cmd(a, seed, out),
        Command::Eval(a) => eval_cmd(a, seed, out),
        Command::Simulate(a) => simulate_cmd(a, out),
        Command::Lyapunov(a) => lyapunov_cmd(a, out),
        Command::Bifurcate(a) => bifurcate_cmd(a, out),
        Command::LimitBound(a) => limit_bound_cmd(a, seed, out),
        Command::LowerBound(a) => {
            let h = lower_bound_h(a.n)?;
            writeln!(out, "{}", h.value)?;
            if h.disagrees_with_stated() {
                writeln!(
                    out,
                    "note: published table lists H({}) >= {}; the recursion gives {}",
                    a.n,
                    h.stated.unwrap_or_default(),
                    h.value
                )?;
            }
            Ok(())
        }
        Command::Energy(a) => energy_cmd(a, out),
        Command::RasterStats(a) => raster_cmd(a, seed, out),
    }
}

fn encode_cmd(a: EncodeArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let pixels = match (&a.input, &a.mnist_dir) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p)?;
            text.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| Error::Domain(format!("bad intensity '{s}'"))))
                .collect::<Result<Vec<_>>>()?
        }
        (None, Some(dir)) => {
            let (_, test) = super::load_mnist_dir(dir)?;
            test.get(a.index)
                .ok_or_else(|| Error::Domain(format!("index {} out of range", a.index)))?
                .pixels
                .clone()
        }
        (None, None) => return domain("give --input or --mnist-dir"),
    };
    let opts = PoissonOptions {
        rate_scale: a.rate_scale,
        dt_ms: a.dt_ms,
    };
    let train = poisson_encode_with(&pixels, a.steps, seed, opts)?;
    out_or_stdout(&a.output, &format_spike_train(&train), out)
}

fn train_cmd(a: TrainArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match (&a.config, a.desk_scale) {
        (Some(p), _) => parse_config(p)?,
        (None, true) => RunConfig::desk_scale(),
        (None, false) => RunConfig::default(),
    };
    if a.config.is_none() || seed != 0 {
        cfg.seed = seed;
    }
    if let Some(d) = a.data {
        cfg.data_dir = Some(d);
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let (train, test) = load_datasets(&cfg)?;
    let (net, metrics) = run_training(&cfg, &train, &test)?;
    let csv = metrics_csv(&metrics);
    match &a.metrics {
        Some(p) => std::fs::write(p, &csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    if let Some(p) = &a.checkpoint {
        Checkpoint {
            network: net,
            seed: cfg.seed,
            epoch: cfg.epochs,
        }
        .save(p)?;
    }
    if let Some(m) = metrics.last() {
        writeln!(out, "final accuracy {:.4}", m.accuracy())?;
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let dir = a.data.unwrap_or_else(super::default_mnist_dir);
    let (_, test) = super::load_mnist_dir(&dir)?;
    let test = match a.samples {
        Some(n) if n < test.len() => test[..n].to_vec(),
        _ => test,
    };
    let mut cfg = RunConfig::desk_scale().train_config();
    cfg.steps = a.steps;
    cfg.eval_mode = parse_mode(&a.mode)?;
    let acc = evaluate(&ck.network, &test, &cfg, seed)?;
    writeln!(out, "accuracy {acc:.4} on {} samples", test.len())?;
    Ok(())
}

fn planar_system(a: &PlanarArgs) -> Result<(ContinuousSystem, Vec<f64>)> {
    let mut sys = ContinuousSystem::planar(a.v12, a.v21, a.tau_m);
    sys.firing = parse_firing(&a.firing)?;
    let u0 = parse_vec(&a.u0)?;
    if u0.len() != 2 {
        return domain("u0 needs two values");
    }
    Ok((sys, u0))
}

fn simulate_cmd(a: PlanarArgs, out: &mut dyn Write) -> Result<()> {
    let (sys, u0) = planar_system(&a)?;
    let method: Method = a.method.parse()?;
    let traj = integrate(&sys, &u0, a.t, a.dt, method)?;
    out_or_stdout(&a.output, &traj.to_csv(), out)
}

fn energy_cmd(a: PlanarArgs, out: &mut dyn Write) -> Result<()> {
    let (sys, u0) = planar_system(&a)?;
    let method: Method = a.method.parse()?;
    let traj = integrate(&sys, &u0, a.t, a.dt, method)?;
    let h = energy(&traj, a.tau_m, a.tau_m, None)?;
    let v1 = sys.coupling.effective_v1();
    let mut s = String::from("t,u1,u2,H,dH_dt,half_uMu,two_uMu\n");
    let n = traj.times.len();
    for i in 0..n {
        let d = if n < 2 {
            0.0
        } else if i == 0 {
            (h[1] - h[0]) / (traj.times[1] - traj.times[0])
        } else if i == n - 1 {
            (h[i] - h[i - 1]) / (traj.times[i] - traj.times[i - 1])
        } else {
            (h[i + 1] - h[i - 1]) / (traj.times[i + 1] - traj.times[i - 1])
        };
        let u = &traj.states[i];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            traj.times[i],
            u[0],
            u[1],
            h[i],
            d,
            energy_rate(u, &v1, a.tau_m),
            energy_derivative(u, &v1, a.tau_m)
        );
    }
    out_or_stdout(&a.output, &s, out)
}

fn lyapunov_cmd(a: LyapunovArgs, out: &mut dyn Write) -> Result<()> {
    let mut sys = ContinuousSystem::planar(a.v12, a.v21, a.tau_m);
    sys.firing = parse_firing(&a.firing)?;
    let opts = LyapunovOptions {
        t_transient: a.t_transient,
        t_measure: a.t_measure,
        dt: a.dt,
        ..LyapunovOptions::default()
    };
    let r = lyapunov(&sys, &parse_vec(&a.u0)?, &opts)?;
    writeln!(out, "{}", r.exponent)?;
    writeln!(out, "reset samples {}", r.samples.len())?;
    Ok(())
}

fn bifurcate_cmd(a: BifurcateArgs, out: &mut dyn Write) -> Result<()> {
    let opts = SweepOptions {
        tau_m: a.tau_m,
        firing: parse_firing(&a.firing)?,
        u0: parse_vec(&a.u0)?,
        lyapunov: LyapunovOptions {
            t_transient: a.t_transient,
            t_measure: a.t_measure,
            dt: a.dt,
            ..LyapunovOptions::default()
        },
    };
    let rows = bifurcation_sweep(a.v21, (a.v12_min, a.v12_max), a.resolution, &opts)?;
    out_or_stdout(&a.output, &sweep_csv(&rows), out)
}

fn limit_bound_cmd(a: LimitBoundArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    if a.example != "cubic" {
        return domain(format!("unknown example '{}' (available: cubic)", a.example));
    }
    let tau_m = parse_rational(&a.tau_m)?;
    let sys = PerturbedPlanarSystem::cubic_example(a.k, tau_m)?;
    let branch: Branch = a.branch.parse()?;
    let sys = if a.structural {
        sys
    } else {
        let mut values: BTreeMap<BetaId, Rational> = BTreeMap::new();
        for k in 1..=a.k as u32 {
            for i in 1..=2 {
                for j in 1..=9 {
                    values.insert(BetaId::new(i, k, j), rat(0, 1));
                }
            }
        }
        if let Some(p) = &a.beta {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            let obj = v
                .as_object()
                .ok_or_else(|| Error::Domain("β file must hold a JSON object".into()))?;
            for (name, val) in obj {
                let id = parse_beta_name(name)?;
                let q = match val {
                    serde_json::Value::String(s) => parse_rational(s)?,
                    serde_json::Value::Number(n) => parse_rational(&n.to_string())?,
                    _ => return domain(format!("value of {name} must be a number or string")),
                };
                values.insert(id, q);
            }
        } else if a.random_beta {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x6265_7461]));
            for v in values.values_mut() {
                *v = rat(rng.gen_range(-6..=6), rng.gen_range(1..=4));
            }
        }
        sys.with_beta(&values)
    };
    let opts = BoundOptions {
        mode: if a.structural {
            BoundMode::Structural(if a.computed {
                PatternSource::Computed
            } else {
                PatternSource::Printed
            })
        } else {
            BoundMode::Numeric
        },
        branch,
        z_max: a.z_max,
        ..BoundOptions::default()
    };
    let ub = limit_cycle_upper_bound(&sys, a.k, &opts)?;
    match ub.bound {
        Some(b) => writeln!(out, "{b}")?,
        None => writeln!(out, "inconclusive")?,
    }
    match ub.first_nonzero {
        Some(k) => writeln!(out, "first non-vanishing component G{k}")?,
        None => writeln!(out, "every component vanishes up to order {}", a.k)?,
    }
    if !ub.support.is_empty() {
        let s: Vec<String> = ub.support.iter().map(|d| format!("r^{d}")).collect();
        writeln!(out, "radial support {}", s.join(" "))?;
    }
    if let Some(p) = &a.json {
        if branch != Branch::F0Zero {
            return domain("component JSON is only available on the f0-zero branch");
        }
        let res = averaging_components(&to_normal_form(&sys)?, a.k)?;
        std::fs::write(p, serde_json::to_string_pretty(&res.to_json())?)?;
    }
    Ok(())
}

fn raster_cmd(a: RasterArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let train = read_spike_train(&a.spikes)?;
    let mut s = String::from("layer,neurons,spikes,threshold_spikes,stochastic_spikes\n");
    let _ = writeln!(s, "input,{},{},{},0", train.channels(), train.total(), train.total());
    if let Some(p) = &a.checkpoint {
        let ck = Checkpoint::load(p)?;
        let (_, trace) = forward(&ck.network, &train, parse_mode(&a.mode)?, seed)?;
        let stats = spike_stats(&trace);
        for l in 0..stats.per_layer.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                l + 1,
                stats.per_neuron[l].len(),
                stats.per_layer[l],
                stats.deterministic[l],
                stats.stochastic[l]
            );
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}
