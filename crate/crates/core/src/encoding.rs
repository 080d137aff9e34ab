//! Spike trains, Poisson encoding, rate and timing codes.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, parse_err, Result};

/// Binary channel x time spike matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrain {
    channels: usize,
    steps: usize,
    dt_ms: f64,
    data: Vec<u8>,
}

impl SpikeTrain {
    pub fn zeros(channels: usize, steps: usize, dt_ms: f64) -> Self {
        Self {
            channels,
            steps,
            dt_ms,
            data: vec![0; channels * steps],
        }
    }

    /// Build from per-channel rows. Every row must have the same length and hold only 0/1.
    pub fn from_rows(rows: &[Vec<u8>], dt_ms: f64) -> Result<Self> {
        if !(dt_ms > 0.0) {
            return domain("dt_ms must be positive");
        }
        let steps = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * steps);
        for (c, row) in rows.iter().enumerate() {
            if row.len() != steps {
                return domain(format!("row {c} has {} steps, expected {steps}", row.len()));
            }
            if row.iter().any(|&v| v > 1) {
                return domain(format!("row {c} holds a value outside {{0,1}}"));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            channels: rows.len(),
            steps,
            dt_ms,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn get(&self, channel: usize, step: usize) -> u8 {
        self.data[channel * self.steps + step]
    }

    pub fn set(&mut self, channel: usize, step: usize, spike: bool) {
        self.data[channel * self.steps + step] = spike as u8;
    }

    pub fn row(&self, channel: usize) -> &[u8] {
        &self.data[channel * self.steps..(channel + 1) * self.steps]
    }

    pub fn count(&self, channel: usize) -> usize {
        self.row(channel).iter().map(|&v| v as usize).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.channels).map(|c| self.count(c)).collect()
    }

    pub fn total(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Channels that spike at `step`.
    pub fn active_at(&self, step: usize) -> Vec<usize> {
        (0..self.channels).filter(|&c| self.get(c, step) == 1).collect()
    }

    /// Spike times in ms, step k sitting at k * dt_ms.
    pub fn spike_times(&self) -> TimingSequence {
        let timings = (0..self.channels)
            .map(|c| {
                self.row(c)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(k, _)| k as f64 * self.dt_ms)
                    .collect()
            })
            .collect();
        TimingSequence { timings }
    }
}

/// Per-channel ordered spike times (ms).
#[derive(Clone, Debug, PartialEq)]
pub struct TimingSequence {
    pub timings: Vec<Vec<f64>>,
}

impl TimingSequence {
    pub fn channels(&self) -> usize {
        self.timings.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonOptions {
    /// Multiplier from intensity to per-step firing probability, clamped to 1.
    pub rate_scale: f64,
    pub dt_ms: f64,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            rate_scale: 1.0,
            dt_ms: 1.0,
        }
    }
}

/// Poisson (Bernoulli per step) encoding with intensity as the per-step probability.
pub fn poisson_encode(image: &[f64], steps: usize, seed: u64) -> Result<SpikeTrain> {
    poisson_encode_with(image, steps, seed, PoissonOptions::default())
}

pub fn poisson_encode_with(
    image: &[f64],
    steps: usize,
    seed: u64,
    opts: PoissonOptions,
) -> Result<SpikeTrain> {
    if steps == 0 {
        return domain("steps must be at least 1");
    }
    if let Some(v) = image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return domain(format!("intensity {v} outside [0,1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = SpikeTrain::zeros(image.len(), steps, opts.dt_ms);
    for (c, &x) in image.iter().enumerate() {
        let p = (x * opts.rate_scale).min(1.0);
        if p <= 0.0 {
            continue;
        }
        let row = &mut train.data[c * steps..(c + 1) * steps];
        for v in row.iter_mut() {
            *v = (rng.gen::<f64>() < p) as u8;
        }
    }
    Ok(train)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateVariant {
    /// Spikes per window divided by the window length.
    Count,
    /// Additionally divided by the number of repeated runs.
    Density,
    /// Additionally divided by the population size.
    Population,
}

/// Sliding-window rate in spikes per ms. Spikes of all channels are pooled per window.
///
/// Output has `steps - window_steps + 1` entries, entry t covering steps `[t, t + window)`.
pub fn rate_decode(
    train: &SpikeTrain,
    window_steps: usize,
    variant: RateVariant,
    n_runs: usize,
    n_neurons: usize,
) -> Result<Vec<f64>> {
    if window_steps == 0 {
        return domain("window must be at least one step");
    }
    if window_steps > train.steps {
        return domain(format!(
            "window of {window_steps} steps exceeds train length {}",
            train.steps
        ));
    }
    let divisor = match variant {
        RateVariant::Count => 1.0,
        RateVariant::Density if n_runs == 0 => return domain("n_runs must be at least 1"),
        RateVariant::Density => n_runs as f64,
        RateVariant::Population if n_neurons == 0 => {
            return domain("n_neurons must be at least 1")
        }
        RateVariant::Population => n_neurons as f64,
    };
    let per_step: Vec<usize> = (0..train.steps)
        .map(|k| (0..train.channels).map(|c| train.get(c, k) as usize).sum())
        .collect();
    let width = window_steps as f64 * train.dt_ms;
    let mut running: usize = per_step[..window_steps].iter().sum();
    let mut out = Vec::with_capacity(train.steps - window_steps + 1);
    out.push(running as f64 / (divisor * width));
    for t in 1..=train.steps - window_steps {
        running = running + per_step[t + window_steps - 1] - per_step[t - 1];
        out.push(running as f64 / (divisor * width));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimingVariant {
    /// Time since the first spike of the channel.
    Ttfs,
    /// Time since the previous spike; the first spike is measured from t = 0.
    Isi,
}

pub fn timing_encode(train: &SpikeTrain, variant: TimingVariant) -> TimingSequence {
    let times = train.spike_times();
    let timings = times
        .timings
        .into_iter()
        .map(|row| match variant {
            TimingVariant::Ttfs => {
                let first = row.first().copied().unwrap_or(0.0);
                row.iter().map(|t| t - first).collect()
            }
            TimingVariant::Isi => {
                let mut prev = 0.0;
                row.iter()
                    .map(|&t| {
                        let d = t - prev;
                        prev = t;
                        d
                    })
                    .collect()
            }
        })
        .collect();
    TimingSequence { timings }
}

/// Element-distinctness map: 1 on a repeated timing, 0 when all gaps reach `c * delta_t`,
/// `p_theta` otherwise.
pub fn edf(timings: &[Vec<f64>], c: f64, delta_t: f64, p_theta: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && delta_t > 0.0) {
        return domain("c and delta_t must be positive");
    }
    if !(p_theta > 0.0 && p_theta <= 1.0) {
        return domain("p_theta must lie in (0,1]");
    }
    let gap = c * delta_t;
    timings
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() < 2 {
                return domain(format!("row {i} has fewer than two timings"));
            }
            let mut sorted = row.clone();
            sorted.sort_by(f64::total_cmp);
            let diffs: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
            Ok(if diffs.iter().any(|&d| d == 0.0) {
                1.0
            } else if diffs.iter().all(|&d| d >= gap) {
                0.0
            } else {
                p_theta
            })
        })
        .collect()
}

/// Text format: `channels steps dt_ms` header, then one row of space-separated 0/1 per channel.
pub fn format_spike_train(train: &SpikeTrain) -> String {
    let mut s = String::with_capacity(train.data.len() * 2 + 32);
    let _ = writeln!(s, "{} {} {}", train.channels, train.steps, train.dt_ms);
    for c in 0..train.channels {
        let row: Vec<&str> = train
            .row(c)
            .iter()
            .map(|&v| if v == 1 { "1" } else { "0" })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_spike_train(text: &str) -> Result<SpikeTrain> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err("line 1", "empty spike-train file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err("line 1", "header must be `channels steps dt_ms`"));
    }
    let channels: usize = fields[0]
        .parse()
        .map_err(|_| parse_err("line 1", "bad channel count"))?;
    let steps: usize = fields[1]
        .parse()
        .map_err(|_| parse_err("line 1", "bad step count"))?;
    let dt_ms: f64 = fields[2]
        .parse()
        .map_err(|_| parse_err("line 1", "bad dt_ms"))?;
    if !(dt_ms > 0.0) {
        return Err(parse_err("line 1", "dt_ms must be positive"));
    }
    let mut rows = Vec::with_capacity(channels);
    for (idx, line) in lines {
        let loc = format!("line {}", idx + 1);
        if rows.len() == channels {
            return Err(parse_err(loc, format!("more rows than the {channels} declared")));
        }
        let row: Vec<u8> = line
            .split_whitespace()
            .map(|tok| match tok {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(parse_err(loc.clone(), format!("invalid spike value `{other}`"))),
            })
            .collect::<Result<_>>()?;
        if row.len() != steps {
            return Err(parse_err(
                loc,
                format!("row has {} values, expected {steps}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.len() != channels {
        return Err(parse_err(
            "end of file",
            format!("found {} rows, header declares {channels}", rows.len()),
        ));
    }
    let mut train = SpikeTrain::zeros(channels, steps, dt_ms);
    for (c, row) in rows.iter().enumerate() {
        train.data[c * steps..(c + 1) * steps].copy_from_slice(row);
    }
    Ok(train)
}

pub fn write_spike_train(path: &Path, train: &SpikeTrain) -> Result<()> {
    std::fs::write(path, format_spike_train(train))?;
    Ok(())
}

pub fn read_spike_train(path: &Path) -> Result<SpikeTrain> {
    parse_spike_train(&std::fs::read_to_string(path)?)
}
