//! ODE integration with dense output on a uniform grid.
//!
//! Two steppers are provided: classic fixed-step RK4 and an embedded
//! Dormand-Prince 5(4) pair with adaptive step control. Both advance one
//! policy interval at a time, so steps never straddle a control breakpoint,
//! and both stop exactly on output-grid times instead of interpolating.
//!
//! The step-size controller is deliberately scale-invariant: the initial
//! step depends only on the segment length and error weights are dominated
//! by the relative tolerance, so integrating a linearly rescaled system
//! reproduces the same step sequence.

use crate::model::{self, ControlTriple, EpiParams, FullState, NormState};
use crate::policy::{ControlPolicy, PolicyError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IntegratorError {
    #[error("non-finite state encountered at t = {t}")]
    Diverged { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("sample time {t} outside trajectory range [{t0}, {t1}]")]
    SampleOutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("invalid integrator config: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classic fourth-order Runge-Kutta with a fixed step (in days).
    Rk4Fixed { step: f64 },
    /// Dormand-Prince 5(4) with per-step error control.
    Adaptive { rel_tol: f64, abs_tol: f64 },
}

/// Integration settings: scheme plus the number of uniformly spaced output
/// samples over `[0, t_f]` (endpoints included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub output_points: usize,
}

/// Default output density: one sample per quarter day.
pub fn default_output_points(t_f: f64) -> usize {
    ((4.0 * t_f).round() as usize + 1).max(2)
}

impl IntegratorConfig {
    /// Adaptive integration at the default tolerances (`rel 1e-8`,
    /// `abs 1e-10`) sampled every quarter day.
    pub fn default_adaptive(t_f: f64) -> Self {
        IntegratorConfig {
            method: Method::Adaptive {
                rel_tol: 1e-8,
                abs_tol: 1e-10,
            },
            output_points: default_output_points(t_f),
        }
    }

    /// Fixed-step RK4. The step should divide the output spacing so that
    /// grid times are hit without truncated steps.
    pub fn default_rk4(t_f: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4Fixed { step: 0.05 },
            output_points: default_output_points(t_f),
        }
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        match self.method {
            Method::Rk4Fixed { step } => {
                if !step.is_finite() || step <= 0.0 {
                    return Err(IntegratorError::BadConfig("step must be positive"));
                }
            }
            Method::Adaptive { rel_tol, abs_tol } => {
                if !rel_tol.is_finite() || rel_tol <= 0.0 || !abs_tol.is_finite() || abs_tol <= 0.0
                {
                    return Err(IntegratorError::BadConfig("tolerances must be positive"));
                }
            }
        }
        if self.output_points < 2 {
            return Err(IntegratorError::BadConfig("output_points must be >= 2"));
        }
        Ok(())
    }
}

/// Which of the two model systems to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Normalized,
}

/// Dense solution samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub scale: Scale,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Linear interpolation between the bracketing grid points.
    pub fn sample_at(&self, t: f64) -> Result<Vec<f64>, IntegratorError> {
        let (t0, t1) = (self.times[0], self.t_end());
        if t.is_nan() || t < t0 || t > t1 {
            return Err(IntegratorError::SampleOutOfRange { t, t0, t1 });
        }
        let idx = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(j) => return Ok(self.states[j].clone()),
            Err(j) => j, // first grid point above t
        };
        let (ta, tb) = (self.times[idx - 1], self.times[idx]);
        let w = (t - ta) / (tb - ta);
        Ok(self.states[idx - 1]
            .iter()
            .zip(&self.states[idx])
            .map(|(a, b)| a + w * (b - a))
            .collect())
    }

    /// Maximum of one state component over the grid, with its time.
    pub fn peak(&self, component: usize) -> (f64, f64) {
        let mut best = (self.times[0], self.states[0][component]);
        for (t, x) in self.times.iter().zip(&self.states) {
            if x[component] > best.1 {
                best = (*t, x[component]);
            }
        }
        best
    }
}

/// Integrates an arbitrary right-hand side driven by a piecewise-constant
/// policy. `rhs(u, t, x, dx)` fills the derivative for control value `u`.
/// Sampling is on the uniform `[0, t_f]` grid from `cfg.output_points`.
pub fn integrate_policy<F>(
    x0: &[f64],
    policy: &ControlPolicy,
    t_f: f64,
    cfg: &IntegratorConfig,
    scale: Scale,
    rhs: F,
) -> Result<Trajectory, IntegratorError>
where
    F: Fn(&ControlTriple, f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if !t_f.is_finite() || t_f <= 0.0 {
        return Err(IntegratorError::BadConfig("t_f must be positive"));
    }
    policy.require_domain(t_f)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegratorError::Diverged { t: 0.0 });
    }

    let n_out = cfg.output_points;
    let grid: Vec<f64> = (0..n_out)
        .map(|j| t_f * j as f64 / (n_out - 1) as f64)
        .collect();

    let mut state = x0.to_vec();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n_out);
    out.push(state.clone());
    let mut next_sample = 1usize;

    for (j, u) in policy.values().iter().enumerate() {
        let seg_start = policy.breakpoints()[j];
        let seg_end = policy.breakpoints()[j + 1].min(t_f);
        if seg_start >= t_f {
            break;
        }
        let seg_rhs = |t: f64, x: &[f64], dx: &mut [f64]| rhs(u, t, x, dx);
        match cfg.method {
            Method::Rk4Fixed { step } => rk4_segment(
                &seg_rhs,
                seg_start,
                seg_end,
                step,
                &mut state,
                &grid,
                &mut next_sample,
                &mut out,
            )?,
            Method::Adaptive { rel_tol, abs_tol } => dopri5_segment(
                &seg_rhs,
                seg_start,
                seg_end,
                rel_tol,
                abs_tol,
                &mut state,
                &grid,
                &mut next_sample,
                &mut out,
            )?,
        }
        if seg_end >= t_f {
            break;
        }
    }

    // Snap any trailing sample (t_f itself when the last segment ended there).
    while next_sample < n_out {
        out.push(state.clone());
        next_sample += 1;
    }

    Ok(Trajectory {
        times: grid,
        states: out,
        scale,
    })
}

/// Integrates the full-scale model under `policy`. Emitted samples are
/// clamped at zero: components may undershoot by roughly the integrator
/// tolerance and counts are not meaningful below zero.
pub fn integrate_full(
    x0: &FullState,
    policy: &ControlPolicy,
    p: &EpiParams,
    cfg: &IntegratorConfig,
    t_f: f64,
) -> Result<Trajectory, IntegratorError> {
    p.validate()?;
    let mut traj = integrate_policy(
        &x0.to_array(),
        policy,
        t_f,
        cfg,
        Scale::Full,
        |u, _t, x, dx| model::rhs_full_into(x, u, p, dx),
    )?;
    clamp_nonnegative(&mut traj);
    Ok(traj)
}

/// Integrates the normalized model under `policy`, clamping emitted samples
/// at zero like [`integrate_full`].
pub fn integrate_norm(
    x0: &NormState,
    policy: &ControlPolicy,
    p: &EpiParams,
    cfg: &IntegratorConfig,
    t_f: f64,
) -> Result<Trajectory, IntegratorError> {
    p.validate()?;
    let mut traj = integrate_policy(
        &x0.to_array(),
        policy,
        t_f,
        cfg,
        Scale::Normalized,
        |u, _t, x, dx| model::rhs_norm_into(x, u, p, dx),
    )?;
    clamp_nonnegative(&mut traj);
    Ok(traj)
}

fn clamp_nonnegative(traj: &mut Trajectory) {
    for state in &mut traj.states {
        for v in state.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

const SNAP: f64 = 1e-9;

/// Emits samples for every grid time reached at the current step end.
fn emit_due_samples(
    t: f64,
    state: &[f64],
    grid: &[f64],
    next_sample: &mut usize,
    out: &mut Vec<Vec<f64>>,
) {
    while *next_sample < grid.len() && grid[*next_sample] <= t + SNAP {
        out.push(state.to_vec());
        *next_sample += 1;
    }
}

/// Advances to the earlier of the next grid time and the segment end; the
/// return value is the step actually allowed from `t`.
fn clip_step(h: f64, t: f64, seg_end: f64, grid: &[f64], next_sample: usize) -> (f64, bool) {
    let mut limit = seg_end;
    if next_sample < grid.len() && grid[next_sample] < limit {
        limit = grid[next_sample];
    }
    let room = limit - t;
    if h >= room - SNAP {
        (room, true)
    } else {
        (h, false)
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4_segment<F>(
    rhs: &F,
    t0: f64,
    t1: f64,
    step: f64,
    state: &mut [f64],
    grid: &[f64],
    next_sample: &mut usize,
    out: &mut Vec<Vec<f64>>,
) -> Result<(), IntegratorError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = state.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut work = vec![0.0; n];

    let mut t = t0;
    while t < t1 - SNAP {
        let (h, _clipped) = clip_step(step, t, t1, grid, *next_sample);
        if h <= 0.0 {
            break;
        }
        rhs(t, state, &mut k1);
        for i in 0..n {
            work[i] = state[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &work, &mut k2);
        for i in 0..n {
            work[i] = state[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &work, &mut k3);
        for i in 0..n {
            work[i] = state[i] + h * k3[i];
        }
        rhs(t + h, &work, &mut k4);
        for i in 0..n {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        // snap to grid/segment boundaries hit by the clipped step
        if (t - t1).abs() <= SNAP {
            t = t1;
        } else if *next_sample < grid.len() && (t - grid[*next_sample]).abs() <= SNAP {
            t = grid[*next_sample];
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(IntegratorError::Diverged { t });
        }
        emit_due_samples(t, state, grid, next_sample, out);
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// The 5th-order weights equal the last tableau row (FSAL), so the final
// stage input doubles as the solution.
// Difference between the 5th- and embedded 4th-order weights:
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

#[allow(clippy::too_many_arguments)]
fn dopri5_segment<F>(
    rhs: &F,
    t0: f64,
    t1: f64,
    rel_tol: f64,
    abs_tol: f64,
    state: &mut [f64],
    grid: &[f64],
    next_sample: &mut usize,
    out: &mut Vec<Vec<f64>>,
) -> Result<(), IntegratorError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = state.len();
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(());
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut y_new = vec![0.0; n];
    let mut work = vec![0.0; n];

    let mut t = t0;
    // Time-based initial guess; the controller adapts within a few steps.
    let mut h_nat = (0.1 * span).min(1.0);
    let mut fsal_valid = false;

    while t < t1 - SNAP {
        let (h, clipped) = clip_step(h_nat, t, t1, grid, *next_sample);
        if h < 1e-14 * span.max(t.abs()) {
            return Err(IntegratorError::StepUnderflow { t });
        }

        if !fsal_valid {
            rhs(t, state, &mut k[0]);
        }
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += DP_A[stage][j] * kj[i];
                }
                work[i] = state[i] + h * acc;
            }
            rhs(t + DP_C[stage] * h, &work, &mut k[stage]);
        }
        // stage 7 input equals the 5th-order solution
        y_new.copy_from_slice(&work);

        // weighted RMS error of the embedded difference
        let mut err_sq = 0.0;
        let mut err_ok = true;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += DP_E[j] * kj[i];
            }
            e *= h;
            let sk = abs_tol + rel_tol * state[i].abs().max(y_new[i].abs());
            if sk > 0.0 {
                err_sq += (e / sk) * (e / sk);
            } else if e != 0.0 {
                err_ok = false;
            }
        }
        let err = if err_ok {
            (err_sq / n as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if !err.is_finite() && y_new.iter().any(|v| !v.is_finite()) {
            return Err(IntegratorError::Diverged { t: t + h });
        }

        if err <= 1.0 {
            t += h;
            if (t - t1).abs() <= SNAP {
                t = t1;
            } else if *next_sample < grid.len() && (t - grid[*next_sample]).abs() <= SNAP {
                t = grid[*next_sample];
            }
            state.copy_from_slice(&y_new);
            if state.iter().any(|v| !v.is_finite()) {
                return Err(IntegratorError::Diverged { t });
            }
            // FSAL: last stage is the derivative at the accepted point
            k.swap(0, 6);
            fsal_valid = true;
            emit_due_samples(t, state, grid, next_sample, out);

            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            // A clipped step says nothing about accuracy headroom beyond fac.
            h_nat = if clipped { h_nat.max(h * fac) } else { h * fac };
        } else {
            let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h_nat = h * fac;
            fsal_valid = true; // k[0] still holds f(t, state)
        }
    }
    Ok(())
}
