//! Continuous-time self-connection systems: integration, analytic references, energy,
//! Lyapunov exponents and bifurcation sweeps.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::selfconn::SelfConnection;

/// Threshold rule applied at step boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Firing {
    pub u_firing: f64,
    pub u_reset: f64,
}

/// du/dt = -u/tau_m + u*(u), optionally with hybrid reset.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSystem {
    pub tau_m: f64,
    pub coupling: SelfConnection,
    pub firing: Option<Firing>,
}

impl ContinuousSystem {
    pub fn linear(v1: DMatrix<f64>, tau_m: f64) -> Self {
        Self {
            tau_m,
            coupling: SelfConnection::linear(v1),
            firing: None,
        }
    }

    /// The planar trial system: V = [[0, v12], [v21, 0]].
    pub fn planar(v12: f64, v21: f64, tau_m: f64) -> Self {
        Self::linear(DMatrix::from_row_slice(2, 2, &[0.0, v12, v21, 0.0]), tau_m)
    }

    pub fn with_firing(mut self, u_firing: f64, u_reset: f64) -> Self {
        self.firing = Some(Firing { u_firing, u_reset });
        self
    }

    pub fn n(&self) -> usize {
        self.coupling.n_neurons()
    }

    pub fn field(&self, u: &[f64], out: &mut [f64]) {
        self.coupling.promote_into(u, out);
        for (o, x) in out.iter_mut().zip(u) {
            *o -= x / self.tau_m;
        }
    }

    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        self.coupling.jacobian(u) - DMatrix::identity(n, n) / self.tau_m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4,
    ExpEuler,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Self::Rk4),
            "exp_euler" | "exp-euler" => Ok(Self::ExpEuler),
            other => domain(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub reset_events: Vec<(f64, usize)>,
}

impl Trajectory {
    /// `t,u1,...,uN` rows.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut s = String::from("t");
        for k in 1..=n {
            let _ = write!(s, ",u{k}");
        }
        s.push('\n');
        for (t, u) in self.times.iter().zip(&self.states) {
            let _ = write!(s, "{t}");
            for x in u {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
        s
    }
}

const OVERFLOW_GUARD: f64 = 1e150;

fn rk4_step(sys: &ContinuousSystem, u: &[f64], dt: f64, scratch: &mut [Vec<f64>; 5]) -> Vec<f64> {
    let n = u.len();
    let [k1, k2, k3, k4, tmp] = scratch;
    sys.field(u, k1);
    for i in 0..n {
        tmp[i] = u[i] + 0.5 * dt * k1[i];
    }
    sys.field(tmp, k2);
    for i in 0..n {
        tmp[i] = u[i] + 0.5 * dt * k2[i];
    }
    sys.field(tmp, k3);
    for i in 0..n {
        tmp[i] = u[i] + dt * k3[i];
    }
    sys.field(tmp, k4);
    (0..n)
        .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn exp_euler_step(sys: &ContinuousSystem, u: &[f64], dt: f64, star: &mut [f64]) -> Vec<f64> {
    let a = (-dt / sys.tau_m).exp();
    sys.coupling.promote_into(u, star);
    u.iter()
        .zip(star.iter())
        .map(|(x, s)| a * x + (1.0 - a) * sys.tau_m * s)
        .collect()
}

/// Fixed-step integration over `[0, t_end]` recording every step.
pub fn integrate(sys: &ContinuousSystem, u0: &[f64], t_end: f64, dt: f64, method: Method) -> Result<Trajectory> {
    if !(dt > 0.0 && t_end > 0.0) {
        return domain("dt and t_end must be positive");
    }
    if u0.len() != sys.n() {
        return domain("initial state has the wrong dimension");
    }
    let steps = (t_end / dt).round() as usize;
    let n = sys.n();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        reset_events: Vec::new(),
    };
    traj.times.push(0.0);
    traj.states.push(u0.to_vec());
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut u = u0.to_vec();
    for step in 1..=steps {
        let t = step as f64 * dt;
        u = match method {
            Method::Rk4 => rk4_step(sys, &u, dt, &mut scratch),
            Method::ExpEuler => exp_euler_step(sys, &u, dt, &mut scratch[0]),
        };
        if u.iter().any(|x| !x.is_finite() || x.abs() > OVERFLOW_GUARD) {
            return Err(Error::Diverged {
                t,
                partial: Box::new(traj),
            });
        }
        if let Some(f) = sys.firing {
            for (k, x) in u.iter_mut().enumerate() {
                if *x >= f.u_firing {
                    *x = f.u_reset;
                    traj.reset_events.push((t, k));
                }
            }
        }
        traj.times.push(t);
        traj.states.push(u.clone());
    }
    Ok(traj)
}

/// Closed-form solutions of the planar trials with tau_m = 1, one per (v12, v21) cell and
/// initial point. Each component is Σ (c0 + c1 t) e^{λ t}.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSolution {
    terms: [Vec<(f64, f64, f64)>; 2],
}

impl AnalyticSolution {
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let f = |terms: &[(f64, f64, f64)]| terms.iter().map(|(c0, c1, l)| (c0 + c1 * t) * (l * t).exp()).sum();
        [f(&self.terms[0]), f(&self.terms[1])]
    }
}

pub const PLANAR_CELLS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (4.0, 1.0)];
pub const PLANAR_POINTS: [[f64; 2]; 3] = [[3.0, 6.0], [5.0, 6.0], [6.0, 3.0]];

pub fn analytic_reference(v12: f64, v21: f64, u0: [f64; 2]) -> Result<AnalyticSolution> {
    let point = PLANAR_POINTS
        .iter()
        .position(|p| *p == u0)
        .ok_or_else(|| Error::Domain(format!("initial point {u0:?} is not tabulated")))?;
    let e = |c: f64, l: f64| (c, 0.0, l);
    let terms = match ((v12, v21), point) {
        ((a, b), _) if a == 0.0 && b == 0.0 => [vec![e(u0[0], -1.0)], vec![e(u0[1], -1.0)]],
        ((a, b), _) if a == 0.0 && b == 1.0 => [vec![e(u0[0], -1.0)], vec![(u0[1], u0[0], -1.0)]],
        ((a, b), 0) if a == 1.0 && b == 1.0 => [
            vec![e(-1.5, -2.0), e(4.5, 0.0)],
            vec![e(1.5, -2.0), e(4.5, 0.0)],
        ],
        ((a, b), 1) if a == 1.0 && b == 1.0 => [
            vec![e(-0.5, -2.0), e(5.5, 0.0)],
            vec![e(0.5, -2.0), e(5.5, 0.0)],
        ],
        ((a, b), 2) if a == 1.0 && b == 1.0 => [
            vec![e(1.5, -2.0), e(4.5, 0.0)],
            vec![e(-1.5, -2.0), e(4.5, 0.0)],
        ],
        ((a, b), 0) if a == 4.0 && b == 1.0 => [
            vec![e(7.5, 1.0), e(-4.5, -3.0)],
            vec![e(3.75, 1.0), e(2.25, -3.0)],
        ],
        ((a, b), 1) if a == 4.0 && b == 1.0 => [
            vec![e(8.5, 1.0), e(-3.5, -3.0)],
            vec![e(4.25, 1.0), e(1.75, -3.0)],
        ],
        ((a, b), 2) if a == 4.0 && b == 1.0 => [vec![e(6.0, 1.0)], vec![e(3.0, 1.0)]],
        _ => return domain(format!("no tabulated solution for v12 = {v12}, v21 = {v21}")),
    };
    Ok(AnalyticSolution { terms })
}

/// H(t) = |u|^2 + (2 tau_r/tau_m) ∫<dv/dt, u> dt - θ with θ = H(0). The drive integral
/// uses the trapezoid rule; `drive` holds dv/dt at each trajectory sample.
pub fn energy(traj: &Trajectory, tau_m: f64, tau_r: f64, drive: Option<&[Vec<f64>]>) -> Result<Vec<f64>> {
    if let Some(d) = drive {
        if d.len() != traj.states.len() {
            return domain("drive history must have one entry per trajectory sample");
        }
    }
    let sq = |u: &[f64]| u.iter().map(|x| x * x).sum::<f64>();
    let Some(first) = traj.states.first() else {
        return Ok(Vec::new());
    };
    let h0 = sq(first);
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(traj.states.len());
    out.push(0.0);
    for i in 1..traj.states.len() {
        if let Some(d) = drive {
            let dot = |j: usize| d[j].iter().zip(&traj.states[j]).map(|(a, b)| a * b).sum::<f64>();
            integral += 0.5 * (dot(i - 1) + dot(i)) * (traj.times[i] - traj.times[i - 1]);
        }
        out.push(sq(&traj.states[i]) + 2.0 * tau_r / tau_m * integral - h0);
    }
    Ok(out)
}

/// ½ uᵀ M u with M = V1 - I/tau_m.
pub fn energy_rate(u: &[f64], v1: &DMatrix<f64>, tau_m: f64) -> f64 {
    0.5 * quadratic_form(u, v1, tau_m)
}

/// d|u|²/dt along the drive-free linear flow, 2 uᵀ M u.
pub fn energy_derivative(u: &[f64], v1: &DMatrix<f64>, tau_m: f64) -> f64 {
    2.0 * quadratic_form(u, v1, tau_m)
}

fn quadratic_form(u: &[f64], v1: &DMatrix<f64>, tau_m: f64) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc -= u[i] * u[i] / tau_m;
        for j in 0..n {
            acc += u[i] * v1[(i, j)] * u[j];
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovOptions {
    pub t_transient: f64,
    pub t_measure: f64,
    pub dt: f64,
    /// Time between tangent renormalizations.
    pub renorm_every: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            t_transient: 100.0,
            t_measure: 1000.0,
            dt: 1e-3,
            renorm_every: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovResult {
    pub exponent: f64,
    /// u1 just before each post-transient reset event.
    pub samples: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest Lyapunov exponent by Benettin's method. The tangent vector follows the
/// variational equation, is mapped through the saltation matrix at each reset, and is
/// renormalized every `renorm_every` time units.
pub fn lyapunov(sys: &ContinuousSystem, u0: &[f64], opts: &LyapunovOptions) -> Result<LyapunovResult> {
    let n = sys.n();
    if u0.len() != n {
        return domain("initial state has the wrong dimension");
    }
    if !(opts.dt > 0.0 && opts.t_measure > 0.0 && opts.t_transient >= 0.0 && opts.renorm_every > 0.0) {
        return domain("invalid Lyapunov options");
    }
    // A linear flow without resets has a state-independent tangent dynamics.
    let track_base = !(sys.coupling.is_linear() && sys.firing.is_none());
    let const_jac = sys.jacobian(u0);
    let per_block = ((opts.renorm_every / opts.dt).round() as usize).max(1);
    let transient_blocks = (opts.t_transient / (per_block as f64 * opts.dt)).round() as usize;
    let measure_blocks = ((opts.t_measure / (per_block as f64 * opts.dt)).round() as usize).max(1);

    let mut u = u0.to_vec();
    let mut d: Vec<f64> = vec![1.0 / (n as f64).sqrt(); n];
    let mut log_sum = 0.0;
    let mut samples = Vec::new();
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut f_pre = vec![0.0; n];
    let mut f_post = vec![0.0; n];
    let dt = opts.dt;

    let tangent_field = |jac: &DMatrix<f64>, v: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend((0..n).map(|i| (0..n).map(|j| jac[(i, j)] * v[j]).sum::<f64>()));
    };

    for block in 0..transient_blocks + measure_blocks {
        let measuring = block >= transient_blocks;
        for step in 0..per_block {
            // tangent RK4 with the Jacobian sampled along the RK4 stages of the base
            let (j1, j2, j4, next_u) = if track_base {
                let half = rk4_step(sys, &u, 0.5 * dt, &mut scratch);
                let next = rk4_step(sys, &u, dt, &mut scratch);
                (sys.jacobian(&u), sys.jacobian(&half), sys.jacobian(&next), next)
            } else {
                (const_jac.clone(), const_jac.clone(), const_jac.clone(), Vec::new())
            };
            let mut k1 = Vec::new();
            let mut k2 = Vec::new();
            let mut k3 = Vec::new();
            let mut k4 = Vec::new();
            tangent_field(&j1, &d, &mut k1);
            let tmp: Vec<f64> = (0..n).map(|i| d[i] + 0.5 * dt * k1[i]).collect();
            tangent_field(&j2, &tmp, &mut k2);
            let tmp: Vec<f64> = (0..n).map(|i| d[i] + 0.5 * dt * k2[i]).collect();
            tangent_field(&j2, &tmp, &mut k3);
            let tmp: Vec<f64> = (0..n).map(|i| d[i] + dt * k3[i]).collect();
            tangent_field(&j4, &tmp, &mut k4);
            for i in 0..n {
                d[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if track_base {
                u = next_u;
                if u.iter().any(|x| !x.is_finite() || x.abs() > OVERFLOW_GUARD) {
                    let t = (block * per_block + step + 1) as f64 * dt;
                    return Err(Error::Diverged {
                        t,
                        partial: Box::new(Trajectory {
                            times: vec![t],
                            states: vec![u],
                            reset_events: Vec::new(),
                        }),
                    });
                }
                if let Some(f) = sys.firing {
                    for k in 0..n {
                        if u[k] >= f.u_firing {
                            if measuring {
                                samples.push(u[0]);
                            }
                            sys.field(&u, &mut f_pre);
                            u[k] = f.u_reset;
                            sys.field(&u, &mut f_post);
                            if f_pre[k].abs() > 1e-12 {
                                let dk = d[k];
                                for i in 0..n {
                                    if i == k {
                                        d[i] = f_post[k] * dk / f_pre[k];
                                    } else {
                                        d[i] += (f_post[i] - f_pre[i]) * dk / f_pre[k];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let g = norm(&d);
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::Numeric("tangent vector degenerated".into()));
        }
        if measuring {
            log_sum += g.ln();
        }
        for x in d.iter_mut() {
            *x /= g;
        }
    }
    Ok(LyapunovResult {
        exponent: log_sum / (measure_blocks as f64 * per_block as f64 * dt),
        samples,
    })
}

pub fn lyapunov_exponent(sys: &ContinuousSystem, u0: &[f64], t_transient: f64, t_measure: f64, dt: f64) -> Result<f64> {
    let opts = LyapunovOptions {
        t_transient,
        t_measure,
        dt,
        ..LyapunovOptions::default()
    };
    Ok(lyapunov(sys, u0, &opts)?.exponent)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub tau_m: f64,
    pub firing: Option<Firing>,
    pub u0: Vec<f64>,
    pub lyapunov: LyapunovOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tau_m: 1.0,
            firing: None,
            u0: vec![1.0, 0.5],
            lyapunov: LyapunovOptions {
                dt: 1e-2,
                ..LyapunovOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub v12: f64,
    pub lyapunov: f64,
    pub samples: Vec<f64>,
}

/// Evenly spaced v12 grid (endpoints included) on the planar system with fixed v21.
pub fn bifurcation_sweep(v21: f64, v12_range: (f64, f64), resolution: usize, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if resolution < 2 {
        return domain("resolution must be at least 2");
    }
    let (lo, hi) = v12_range;
    (0..resolution)
        .into_par_iter()
        .map(|i| {
            let v12 = lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
            let mut sys = ContinuousSystem::planar(v12, v21, opts.tau_m);
            sys.firing = opts.firing;
            let r = lyapunov(&sys, &opts.u0, &opts.lyapunov)?;
            Ok(SweepRow {
                v12,
                lyapunov: r.exponent,
                samples: r.samples,
            })
        })
        .collect()
}

/// `v12,lyapunov,n_samples,samples...` rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("v12,lyapunov,n_samples,samples\n");
    for r in rows {
        let _ = write!(s, "{},{},{}", r.v12, r.lyapunov, r.samples.len());
        for x in &r.samples {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}
