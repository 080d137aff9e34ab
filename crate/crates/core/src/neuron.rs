//! Single-neuron kernels: LIF integration, firing-reset, SRM membrane,
//! stochastic excitation probabilities and the gate-function balance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Membrane time constant (ms).
    pub tau_m: f64,
    /// Resistance scale on the input drive.
    pub tau_r: f64,
    pub u_firing: f64,
    pub u_reset: f64,
    /// Integration step (ms).
    pub dt: f64,
}

impl NeuronParams {
    pub fn new(tau_m: f64, tau_r: f64, u_firing: f64, u_reset: f64, dt: f64) -> Result<Self> {
        let p = Self {
            tau_m,
            tau_r,
            u_firing,
            u_reset,
            dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) || !(self.tau_r > 0.0) || !(self.dt > 0.0) {
            return domain("tau_m, tau_r and dt must be positive");
        }
        if !(self.u_reset < self.u_firing) {
            return domain("u_reset must be below u_firing");
        }
        Ok(())
    }

    /// Per-step decay factor e^{-dt/tau_m}.
    pub fn decay(&self) -> f64 {
        (-self.dt / self.tau_m).exp()
    }
}

impl Default for NeuronParams {
    /// tau_m = tau_r = 1, u_reset = 0, u_firing = 10, dt = 1e-3.
    fn default() -> Self {
        Self {
            tau_m: 1.0,
            tau_r: 1.0,
            u_firing: 10.0,
            u_reset: 0.0,
            dt: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NeuronState {
    pub u: f64,
    pub t_last_fire: Option<f64>,
    /// Elapsed time (ms).
    pub t: f64,
}

impl NeuronState {
    pub fn at(u: f64) -> Self {
        Self {
            u,
            ..Self::default()
        }
    }
}

/// ⌊u / u_firing⌋.
pub fn excitation_fn(u: f64, u_firing: f64) -> i64 {
    (u / u_firing).floor() as i64
}

/// One exponential-Euler step with threshold and reset. Returns the new state and the
/// multi-spike count ⌊u/u_firing⌋ (0 below threshold).
pub fn lif_step(state: NeuronState, drive: f64, params: &NeuronParams) -> Result<(NeuronState, u32)> {
    if !drive.is_finite() {
        return Err(Error::Numeric(format!("non-finite drive {drive}")));
    }
    let a = params.decay();
    let u = a * state.u + (1.0 - a) * params.tau_r * drive;
    let t = state.t + params.dt;
    if u >= params.u_firing {
        let spikes = excitation_fn(u, params.u_firing).max(1) as u32;
        Ok((
            NeuronState {
                u: params.u_reset,
                t_last_fire: Some(t),
                t,
            },
            spikes,
        ))
    } else {
        Ok((
            NeuronState {
                u,
                t_last_fire: state.t_last_fire,
                t,
            },
            0,
        ))
    }
}

/// Membrane potential from the spike-response kernel, starting from a reset at `t_prime`
/// with u_reset = 0.
///
/// Each drive contributes e^{-(t-s) dt/tau_m} * (tau_r/tau_m) * drive(s) * w, where the
/// quadrature weight w = tau_m (1 - e^{-dt/tau_m}) is the exact integral of the kernel over
/// one step (w -> dt as dt -> 0). This makes the sum coincide with iterated [`lif_step`].
pub fn srm_membrane(drives: &[f64], t_prime: usize, t: usize, params: &NeuronParams) -> Result<f64> {
    if t < t_prime {
        return domain("t must not precede t_prime");
    }
    if t >= drives.len() {
        return domain(format!("step {t} outside the {} drives", drives.len()));
    }
    let a = params.decay();
    let w = params.tau_m * (1.0 - a);
    let mut u = 0.0;
    for s in t_prime..=t {
        let delta = params.tau_r / params.tau_m * drives[s];
        u += a.powi((t - s) as i32) * delta * w;
    }
    Ok(u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityVariant {
    /// (u_firing - u)/(u_firing - u_reset); decreasing in u.
    Linear,
    /// exp((u - u_firing)/(sigma (u - u_reset)^q)).
    Exponential,
    /// Exponential form above u_theta, zero below.
    HeavisideLike,
    /// (u - u_reset)/(u_firing - u_reset).
    LinearCorrected,
}

impl ProbabilityVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Exponential => "exponential",
            Self::HeavisideLike => "heaviside_like",
            Self::LinearCorrected => "linear_corrected",
        }
    }
}

impl std::str::FromStr for ProbabilityVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "exponential" => Ok(Self::Exponential),
            "heaviside_like" | "heaviside" => Ok(Self::HeavisideLike),
            "linear_corrected" => Ok(Self::LinearCorrected),
            other => domain(format!("unknown probability variant `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub variant: ProbabilityVariant,
    pub sigma: f64,
    pub q: f64,
    pub p_theta: f64,
    /// Derived from p_theta; below it the heaviside-like probability is 0.
    pub u_theta: f64,
}

impl StochasticConfig {
    pub fn new(
        variant: ProbabilityVariant,
        sigma: f64,
        q: f64,
        p_theta: f64,
        params: &NeuronParams,
    ) -> Result<Self> {
        if !(sigma > 0.0 && q > 0.0) {
            return domain("sigma and q must be positive");
        }
        let u_theta = u_theta_from_p_theta(p_theta, params, sigma, q)?;
        Ok(Self {
            variant,
            sigma,
            q,
            p_theta,
            u_theta,
        })
    }

    pub fn heaviside(p_theta: f64, params: &NeuronParams) -> Result<Self> {
        Self::new(ProbabilityVariant::HeavisideLike, 1.0, 1.0, p_theta, params)
    }
}

fn exp_form(u: f64, params: &NeuronParams, cfg: &StochasticConfig) -> f64 {
    let x = u - params.u_reset;
    if x <= 0.0 {
        return 0.0;
    }
    ((u - params.u_firing) / (cfg.sigma * x.powf(cfg.q))).exp()
}

/// Firing probability; 1 at or above threshold.
pub fn excitation_probability(u: f64, params: &NeuronParams, cfg: &StochasticConfig) -> f64 {
    if u >= params.u_firing {
        return 1.0;
    }
    let span = params.u_firing - params.u_reset;
    match cfg.variant {
        ProbabilityVariant::Linear => ((params.u_firing - u) / span).clamp(0.0, 1.0),
        ProbabilityVariant::LinearCorrected => ((u - params.u_reset) / span).clamp(0.0, 1.0),
        ProbabilityVariant::Exponential => exp_form(u, params, cfg),
        ProbabilityVariant::HeavisideLike => {
            if u < cfg.u_theta {
                0.0
            } else {
                exp_form(u, params, cfg)
            }
        }
    }
}

/// dp/du of [`excitation_probability`], taken as 0 on the flat pieces and at the jump.
pub fn excitation_probability_derivative(u: f64, params: &NeuronParams, cfg: &StochasticConfig) -> f64 {
    if u >= params.u_firing {
        return 0.0;
    }
    let span = params.u_firing - params.u_reset;
    let inside = u > params.u_reset;
    match cfg.variant {
        ProbabilityVariant::Linear => {
            if inside && u <= params.u_firing {
                -1.0 / span
            } else {
                0.0
            }
        }
        ProbabilityVariant::LinearCorrected => {
            if inside {
                1.0 / span
            } else {
                0.0
            }
        }
        ProbabilityVariant::Exponential | ProbabilityVariant::HeavisideLike => {
            if !inside || (cfg.variant == ProbabilityVariant::HeavisideLike && u < cfg.u_theta) {
                return 0.0;
            }
            let x = u - params.u_reset;
            let p = exp_form(u, params, cfg);
            let xq = x.powf(cfg.q);
            p * (1.0 / (cfg.sigma * xq) - cfg.q * (u - params.u_firing) / (cfg.sigma * xq * x))
        }
    }
}

/// Solves sigma ln p_theta = (u - u_firing)/(u - u_reset)^q on (u_reset, u_firing].
///
/// The right-hand side is strictly increasing on that interval, from -inf to 0, so the
/// root is unique and bisection converges to it.
pub fn u_theta_from_p_theta(p_theta: f64, params: &NeuronParams, sigma: f64, q: f64) -> Result<f64> {
    if !(p_theta > 0.0 && p_theta <= 1.0) {
        return domain(format!("p_theta {p_theta} outside (0,1]"));
    }
    if p_theta == 1.0 {
        return Ok(params.u_firing);
    }
    let target = sigma * p_theta.ln();
    let f = |u: f64| (u - params.u_firing) / (u - params.u_reset).powf(q) - target;
    let (mut lo, mut hi) = (params.u_reset, params.u_firing);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    if !f(u).is_finite() {
        return domain("no threshold root in [u_reset, u_firing]");
    }
    Ok(u)
}

/// Bernoulli(p) draw.
pub fn stochastic_fire<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u8 {
    (rng.gen::<f64>() < p) as u8
}

/// Integrates tau_m du/dt = -u + g dv/dt from u(t1) = u_reset with piecewise-constant
/// dv/dt and returns ∫g dv - ∫u dt - tau_m (u(t2) - u_reset). ∫u dt uses the trapezoid rule
/// on step samples, so the residual is the quadrature error.
pub fn gated_lif_balance(g_const: f64, drive: &[f64], t1: usize, t2: usize, params: &NeuronParams) -> Result<f64> {
    if !(g_const > 0.0) {
        return domain("gate constant must be positive");
    }
    if t1 >= t2 || t2 > drive.len() {
        return domain("need t1 < t2 <= drive length");
    }
    let a = params.decay();
    let mut u = params.u_reset;
    let mut gate_integral = 0.0;
    let mut u_integral = 0.0;
    for &d in &drive[t1..t2] {
        let next = a * u + (1.0 - a) * g_const * d;
        gate_integral += g_const * d * params.dt;
        u_integral += 0.5 * (u + next) * params.dt;
        u = next;
    }
    Ok(gate_integral - u_integral - params.tau_m * (u - params.u_reset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p10() -> NeuronParams {
        NeuronParams::new(1.0, 1.0, 10.0, 0.0, 1e-3).unwrap()
    }

    #[test]
    fn exact_decay() {
        let p = NeuronParams::new(2.0, 1.0, 10.0, 0.0, 2.0).unwrap();
        let (s, k) = lif_step(NeuronState::at(1.0), 0.0, &p).unwrap();
        assert_relative_eq!(s.u, (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(k, 0);
    }

    #[test]
    fn fixed_point_is_tau_r_drive() {
        let p = NeuronParams::new(5.0, 2.0, 100.0, 0.0, 0.1).unwrap();
        let mut s = NeuronState::default();
        for _ in 0..5000 {
            s = lif_step(s, 3.0, &p).unwrap().0;
        }
        assert_relative_eq!(s.u, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn multi_spike_and_reset() {
        let p = NeuronParams::new(1.0, 1.0, 10.0, -1.0, 1.0).unwrap();
        let a = p.decay();
        // drive chosen so the post-step potential is exactly 25
        let drive = 25.0 / (1.0 - a);
        let (s, k) = lif_step(NeuronState::default(), drive, &p).unwrap();
        assert_eq!(k, 2);
        assert_eq!(s.u, -1.0);
        assert_eq!(s.t_last_fire, Some(1.0));
        assert!(lif_step(s, f64::NAN, &p).is_err());
    }

    #[test]
    fn excitation_fn_floor() {
        assert_eq!(excitation_fn(10.0, 10.0), 1);
        assert_eq!(excitation_fn(9.99, 10.0), 0);
        assert_eq!(excitation_fn(25.0, 10.0), 2);
    }

    #[test]
    fn srm_matches_stepping() {
        let p = NeuronParams::new(1.0, 1.5, 1e9, 0.0, 1e-3).unwrap();
        let drives: Vec<f64> = (0..2000).map(|k| 1.0 + (k as f64 * 0.01).sin()).collect();
        let mut s = NeuronState::default();
        for &d in &drives {
            s = lif_step(s, d, &p).unwrap().0;
        }
        let u = srm_membrane(&drives, 0, drives.len() - 1, &p).unwrap();
        assert_relative_eq!(u, s.u, max_relative = 1e-6);
        assert_eq!(srm_membrane(&[0.0; 10], 2, 9, &p).unwrap(), 0.0);
        assert!(srm_membrane(&drives, 5, 4, &p).is_err());
    }

    #[test]
    fn srm_lag_zero_term() {
        let p = NeuronParams::new(1.0, 1.0, 10.0, 0.0, 1e-3).unwrap();
        let mut d = vec![0.0; 5];
        d[4] = 1.0;
        let u = srm_membrane(&d, 0, 4, &p).unwrap();
        assert_relative_eq!(u, p.tau_m * (1.0 - p.decay()), epsilon = 1e-18);
        assert_relative_eq!(u, p.dt, max_relative = 1e-3);
    }

    #[test]
    fn probability_examples() {
        let p = p10();
        let exp = StochasticConfig::new(ProbabilityVariant::Exponential, 1.0, 1.0, 0.5, &p).unwrap();
        assert_relative_eq!(excitation_probability(5.0, &p, &exp), (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(excitation_probability(0.0, &p, &exp), 0.0);
        let hv = StochasticConfig::heaviside(0.5, &p).unwrap();
        assert_relative_eq!(excitation_probability(10.0 - 1e-12, &p, &hv), 1.0, epsilon = 1e-9);
        assert_eq!(excitation_probability(hv.u_theta - 1e-9, &p, &hv), 0.0);
        assert_relative_eq!(excitation_probability(hv.u_theta, &p, &hv), 0.5, epsilon = 1e-9);
        let lin = StochasticConfig::new(ProbabilityVariant::Linear, 1.0, 1.0, 0.5, &p).unwrap();
        assert_relative_eq!(excitation_probability(2.0, &p, &lin), 0.8);
        let lc = StochasticConfig::new(ProbabilityVariant::LinearCorrected, 1.0, 1.0, 0.5, &p).unwrap();
        assert_relative_eq!(excitation_probability(2.0, &p, &lc), 0.2);
        assert_eq!(excitation_probability(12.0, &p, &lin), 1.0);
    }

    #[test]
    fn u_theta_closed_form_and_residual() {
        let p = p10();
        assert_eq!(u_theta_from_p_theta(1.0, &p, 1.0, 1.0).unwrap(), 10.0);
        let u = u_theta_from_p_theta((-1.0f64).exp(), &p, 1.0, 1.0).unwrap();
        assert_relative_eq!(u, 5.0, epsilon = 1e-12);
        let pr = NeuronParams::new(1.0, 1.0, 3.0, -2.0, 1e-3).unwrap();
        for &(pt, sigma) in &[(0.2, 0.7), (0.5, 1.3), (0.9, 2.0)] {
            let u = u_theta_from_p_theta(pt, &pr, sigma, 2.0).unwrap();
            let res = sigma * f64::ln(pt) - (u - 3.0) / (u + 2.0).powi(2);
            assert!(res.abs() < 1e-10, "residual {res}");
            assert!((-2.0..=3.0).contains(&u));
        }
        assert!(u_theta_from_p_theta(0.0, &p, 1.0, 1.0).is_err());
        assert!(u_theta_from_p_theta(1.5, &p, 1.0, 1.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = p10();
        for variant in [
            ProbabilityVariant::Exponential,
            ProbabilityVariant::HeavisideLike,
            ProbabilityVariant::Linear,
            ProbabilityVariant::LinearCorrected,
        ] {
            for &q in &[0.5, 1.0, 2.0] {
                let cfg = StochasticConfig::new(variant, 1.3, q, 0.3, &p).unwrap();
                for k in 1..40 {
                    let u = 0.25 * k as f64 + 0.01;
                    if (u - cfg.u_theta).abs() < 1e-3 {
                        continue;
                    }
                    let h = 1e-6;
                    let fd = (excitation_probability(u + h, &p, &cfg)
                        - excitation_probability(u - h, &p, &cfg))
                        / (2.0 * h);
                    let an = excitation_probability_derivative(u, &p, &cfg);
                    assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{variant:?} q={q} u={u}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn monotone_for_q_at_most_one() {
        let p = p10();
        for &q in &[0.3, 0.7, 1.0] {
            let cfg = StochasticConfig::new(ProbabilityVariant::HeavisideLike, 0.8, q, 0.2, &p).unwrap();
            let mut prev = 0.0;
            for k in 0..=10_000 {
                let u = cfg.u_theta + (10.0 - cfg.u_theta) * k as f64 / 10_001.0;
                let v = excitation_probability(u, &p, &cfg);
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn p_theta_one_is_deterministic() {
        let p = p10();
        let cfg = StochasticConfig::heaviside(1.0, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..=200 {
            let u = k as f64 * 0.1 - 5.0;
            let pr = excitation_probability(u, &p, &cfg);
            let s = stochastic_fire(pr, &mut rng);
            assert_eq!(s == 1, u >= 10.0, "u={u}");
        }
    }

    #[test]
    fn bernoulli_edges_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..1000).all(|_| stochastic_fire(0.0, &mut rng) == 0));
        assert!((0..1000).all(|_| stochastic_fire(1.0, &mut rng) == 1));
        let n = 100_000;
        let hits: usize = (0..n).map(|_| stochastic_fire(0.3, &mut rng) as usize).sum();
        let mean = hits as f64 / n as f64;
        assert!((mean - 0.3).abs() < 3.0 * (0.21f64 / n as f64).sqrt());
    }

    #[test]
    fn empirical_mean_tracks_probability_and_slope() {
        let p = p10();
        let cfg = StochasticConfig::new(ProbabilityVariant::Exponential, 1.0, 1.0, 0.5, &p).unwrap();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let grid: Vec<f64> = (0..8).map(|k| 3.0 + k as f64).collect();
        let mut means = Vec::new();
        for &u in &grid {
            let pr = excitation_probability(u, &p, &cfg);
            let hits: usize = (0..n).map(|_| stochastic_fire(pr, &mut rng) as usize).sum();
            let m = hits as f64 / n as f64;
            let sd = (pr * (1.0 - pr) / n as f64).sqrt();
            assert!((m - pr).abs() <= 3.0 * sd + 1e-12, "u={u}");
            means.push(m);
        }
        for w in 0..grid.len() - 2 {
            let fd = (means[w + 2] - means[w]) / 2.0;
            let exact = (excitation_probability(grid[w + 2], &p, &cfg)
                - excitation_probability(grid[w], &p, &cfg))
                / 2.0;
            assert!((fd - exact).abs() < 6.0 * (0.25f64 / n as f64).sqrt());
        }
    }

    #[test]
    fn gated_balance() {
        let p = NeuronParams::new(1.0, 1.0, 10.0, 0.0, 1e-3).unwrap();
        assert_eq!(gated_lif_balance(1.0, &[0.0; 100], 0, 100, &p).unwrap(), 0.0);
        let r1 = gated_lif_balance(2.0, &vec![3.0; 2000], 0, 2000, &p).unwrap();
        let scale = 2.0 * 3.0 * 2.0;
        assert!(r1.abs() < 1e-4 * scale, "{r1}");
        let half = NeuronParams { dt: 5e-4, ..p };
        let r2 = gated_lif_balance(2.0, &vec![3.0; 4000], 0, 4000, &half).unwrap();
        assert!(r2.abs() <= r1.abs() / 2.0, "{r1} {r2}");
    }

    proptest! {
        #[test]
        fn zero_drive_contracts(u in -100.0f64..100.0, tau in 0.1f64..10.0, dt in 1e-4f64..1.0) {
            let p = NeuronParams::new(tau, 1.0, 1e6, -1e6, dt).unwrap();
            let (s, _) = lif_step(NeuronState::at(u), 0.0, &p).unwrap();
            prop_assert!(s.u.abs() <= u.abs() * (-dt / tau).exp() * (1.0 + 1e-15));
        }

        #[test]
        fn probability_in_unit_interval(u in -20.0f64..20.0, pt in 0.01f64..1.0, q in 0.2f64..3.0) {
            let p = p10();
            for v in [ProbabilityVariant::Linear, ProbabilityVariant::Exponential,
                      ProbabilityVariant::HeavisideLike, ProbabilityVariant::LinearCorrected] {
                let cfg = StochasticConfig::new(v, 1.0, q, pt, &p).unwrap();
                let x = excitation_probability(u, &p, &cfg);
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }
}
