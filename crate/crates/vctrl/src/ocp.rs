//! Box-constrained optimal intervention scheduling.
//!
//! The running cost is quadratic in the infected-human fraction and in each
//! control's effort; controls are piecewise constant on a uniform grid
//! (control vector parameterization), turning the problem into a
//! finite-dimensional box-constrained minimization solved by direct single
//! shooting: integrate the normalized dynamics with the cost as an
//! augmented state, differentiate by central finite differences, and
//! descend with a projected L-BFGS iteration.

use crate::integrator::{self, IntegratorConfig, IntegratorError, Scale, Trajectory};
use crate::model::{self, ControlTriple, EpiParams, ModelError, NormState};
use crate::policy::{ControlBounds, ControlPolicy, PolicyError};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OcpError {
    #[error("cost weights must be nonnegative with at least one positive")]
    BadWeights,
    #[error("problem definition invalid: {0}")]
    BadProblem(&'static str),
    #[error("initial policy does not match the problem grid of {expected} intervals")]
    InitMismatch { expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Weights of the four cost terms: disease burden (`gamma_d`, on the
/// squared infected fraction), adulticide (`gamma_s`), larvicide
/// (`gamma_l`) and mechanical control (`gamma_e`, on `(1 - alpha)^2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub gamma_d: f64,
    pub gamma_s: f64,
    pub gamma_l: f64,
    pub gamma_e: f64,
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), OcpError> {
        let ws = [self.gamma_d, self.gamma_s, self.gamma_l, self.gamma_e];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) || ws.iter().all(|w| *w == 0.0) {
            return Err(OcpError::BadWeights);
        }
        Ok(())
    }
}

/// Named weight scenarios for the bioeconomic comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightCase {
    /// Equal weights on all four terms.
    A,
    /// Disease burden dominates.
    B,
    /// Intervention costs dominate.
    C,
}

impl std::str::FromStr for WeightCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(WeightCase::A),
            "B" => Ok(WeightCase::B),
            "C" => Ok(WeightCase::C),
            other => Err(format!(
                "unknown weight case `{other}` (expected A, B or C)"
            )),
        }
    }
}

/// The three weight presets of the comparison study.
pub fn scenario_weights(case: WeightCase) -> CostWeights {
    match case {
        WeightCase::A => CostWeights {
            gamma_d: 0.25,
            gamma_s: 0.25,
            gamma_l: 0.25,
            gamma_e: 0.25,
        },
        WeightCase::B => CostWeights {
            gamma_d: 0.55,
            gamma_s: 0.15,
            gamma_l: 0.15,
            gamma_e: 0.15,
        },
        WeightCase::C => CostWeights {
            gamma_d: 0.10,
            gamma_s: 0.30,
            gamma_l: 0.30,
            gamma_e: 0.30,
        },
    }
}

/// Intervention channel selector for single-control studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Adulticide `c_m`.
    Adulticide,
    /// Larvicide `c_a`.
    Larvicide,
    /// Mechanical control `alpha`.
    Mechanical,
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adulticide" => Ok(Channel::Adulticide),
            "larvicide" => Ok(Channel::Larvicide),
            "mechanical" => Ok(Channel::Mechanical),
            other => Err(format!(
                "unknown channel `{other}` (expected adulticide, larvicide or mechanical)"
            )),
        }
    }
}

/// Full problem definition for one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpProblem {
    pub params: EpiParams,
    pub weights: CostWeights,
    pub t_f: f64,
    pub n_intervals: usize,
    pub integrator: IntegratorConfig,
    pub x0: NormState,
    pub bounds: ControlBounds,
}

impl OcpProblem {
    /// Problem over `[0, t_f]` with `n_intervals` uniform control pieces,
    /// reference initial state and a tight-tolerance adaptive integrator.
    ///
    /// Strong mechanical control makes the aquatic equation stiff (its
    /// relaxation rate grows like `1 / alpha`), so shooting needs adaptive
    /// steps; the tolerances sit well below the finite-difference step to
    /// keep gradient noise down.
    pub fn new(params: EpiParams, weights: CostWeights, t_f: f64, n_intervals: usize) -> Self {
        OcpProblem {
            params,
            weights,
            t_f,
            n_intervals,
            integrator: IntegratorConfig {
                method: crate::integrator::Method::Adaptive {
                    rel_tol: 1e-10,
                    abs_tol: 1e-12,
                },
                output_points: crate::integrator::default_output_points(t_f),
            },
            x0: model::normalized_initial_state(),
            bounds: ControlBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        self.params.validate()?;
        self.weights.validate()?;
        if !self.t_f.is_finite() || self.t_f <= 0.0 {
            return Err(OcpError::BadProblem("t_f must be positive"));
        }
        if self.n_intervals == 0 {
            return Err(OcpError::BadProblem("n_intervals must be >= 1"));
        }
        self.integrator.validate()?;
        Ok(())
    }

    /// Default initial guess: every channel at the midpoint of its box.
    pub fn mid_box_policy(&self) -> ControlPolicy {
        let u = ControlTriple {
            c_a: 0.5 * (self.bounds.c_a.0 + self.bounds.c_a.1),
            c_m: 0.5 * (self.bounds.c_m.0 + self.bounds.c_m.1),
            alpha: 0.5 * (self.bounds.alpha.0 + self.bounds.alpha.1),
        };
        ControlPolicy::uniform(u, self.t_f, self.n_intervals, self.bounds)
            .expect("mid-box policy is always feasible")
    }

    /// The no-intervention policy on the problem grid (feasible only when
    /// no channel box excludes its no-control value).
    pub fn no_control_policy(&self) -> Result<ControlPolicy, OcpError> {
        Ok(ControlPolicy::uniform(
            ControlTriple::NO_CONTROL,
            self.t_f,
            self.n_intervals,
            self.bounds,
        )?)
    }
}

/// Result of one optimization run.
#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub policy: ControlPolicy,
    pub objective: f64,
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub converged: bool,
}

/// Integrates the dynamics with the running cost as a seventh state and
/// returns the accumulated cost together with the (clamped, cost-free)
/// state trajectory.
pub fn evaluate_cost(
    policy: &ControlPolicy,
    prob: &OcpProblem,
) -> Result<(f64, Trajectory), OcpError> {
    let traj = integrate_augmented(policy, prob, prob.integrator.output_points)?;
    let objective = traj.final_state()[6];
    let states: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|s| s[..6].iter().map(|v| v.max(0.0)).collect())
        .collect();
    Ok((
        objective,
        Trajectory {
            times: traj.times,
            states,
            scale: Scale::Normalized,
        },
    ))
}

/// Objective only, sampled at the endpoints; the shooting path is identical
/// to [`evaluate_cost`] up to step rounding at sample times.
fn cost_only(policy: &ControlPolicy, prob: &OcpProblem) -> Result<f64, OcpError> {
    let traj = integrate_augmented(policy, prob, 2)?;
    Ok(traj.final_state()[6])
}

fn integrate_augmented(
    policy: &ControlPolicy,
    prob: &OcpProblem,
    output_points: usize,
) -> Result<Trajectory, OcpError> {
    prob.validate()?;
    policy.require_domain(prob.t_f)?;
    for (j, u) in policy.values().iter().enumerate() {
        u.validate()?;
        prob.bounds.check(u, j)?;
    }
    let w = prob.weights;
    let p = &prob.params;
    let x0n = prob.x0.to_array();
    let mut x0 = [0.0; 7];
    x0[..6].copy_from_slice(&x0n);
    let cfg = IntegratorConfig {
        method: prob.integrator.method,
        output_points,
    };
    let traj = integrator::integrate_policy(
        &x0,
        policy,
        prob.t_f,
        &cfg,
        Scale::Normalized,
        |u, _t, x, dx| {
            model::rhs_norm_into(x, u, p, dx);
            let one_minus_alpha = 1.0 - u.alpha;
            dx[6] = w.gamma_d * x[1] * x[1]
                + w.gamma_s * u.c_m * u.c_m
                + w.gamma_l * u.c_a * u.c_a
                + w.gamma_e * one_minus_alpha * one_minus_alpha;
        },
    )?;
    Ok(traj)
}

/// Which parameters a channel's box actually lets move.
fn channel_box(bounds: &ControlBounds, channel: usize) -> (f64, f64) {
    match channel {
        0 => bounds.c_a,
        1 => bounds.c_m,
        _ => bounds.alpha,
    }
}

fn get_channel(u: &ControlTriple, channel: usize) -> f64 {
    match channel {
        0 => u.c_a,
        1 => u.c_m,
        _ => u.alpha,
    }
}

fn set_channel(u: &mut ControlTriple, channel: usize, value: f64) {
    match channel {
        0 => u.c_a = value,
        1 => u.c_m = value,
        _ => u.alpha = value,
    }
}

/// Central finite-difference gradient of the cost with respect to every
/// interval value of every channel, laid out as
/// `[c_a_0..c_a_{n-1}, c_m_0.., alpha_0..]`.
///
/// The step is `1e-6 * max(1, |value|)`; at an active bound the difference
/// degrades to one-sided, and a channel whose box is a single point gets a
/// zero entry. Perturbed evaluations run in parallel.
pub fn fd_gradient(policy: &ControlPolicy, prob: &OcpProblem) -> Result<Vec<f64>, OcpError> {
    let n = policy.n_intervals();
    let bounds = *policy.bounds();
    let base_needed = (0..3 * n).any(|idx| {
        let (channel, j) = (idx / n, idx % n);
        let (lo, hi) = channel_box(&bounds, channel);
        let v = get_channel(&policy.values()[j], channel);
        let h = 1e-6 * v.abs().max(1.0);
        !(v + h <= hi && v - h >= lo) && hi > lo
    });
    let base_cost = if base_needed {
        Some(cost_only(policy, prob)?)
    } else {
        None
    };

    (0..3 * n)
        .into_par_iter()
        .map(|idx| {
            let (channel, j) = (idx / n, idx % n);
            let (lo, hi) = channel_box(&bounds, channel);
            if hi <= lo {
                return Ok(0.0); // frozen channel
            }
            let v = get_channel(&policy.values()[j], channel);
            let h = 1e-6 * v.abs().max(1.0);
            let eval_at = |value: f64| -> Result<f64, OcpError> {
                let mut perturbed = policy.clone();
                let mut u = perturbed.values()[j];
                set_channel(&mut u, channel, value);
                perturbed.set_value(j, u)?;
                cost_only(&perturbed, prob)
            };
            if v + h <= hi && v - h >= lo {
                Ok((eval_at(v + h)? - eval_at(v - h)?) / (2.0 * h))
            } else if v + h <= hi {
                Ok((eval_at(v + h)? - base_cost.unwrap()) / h)
            } else if v - h >= lo {
                Ok((base_cost.unwrap() - eval_at(v - h)?) / h)
            } else {
                Ok(0.0) // box narrower than the step
            }
        })
        .collect()
}

/// Termination and multistart settings for [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Hard iteration cap.
    pub max_iters: usize,
    /// Stop when the sup-norm of the projected gradient falls below this.
    pub pg_tol: f64,
    /// Stop when the best objective improves by no more than this ...
    pub stall_tol: f64,
    /// ... over this many accepted iterations.
    pub stall_window: usize,
    /// Extra uniformly drawn feasible starts beyond the provided one.
    pub n_starts: usize,
    /// Seed for the multistart draws.
    pub seed: u64,
    /// L-BFGS history length.
    pub lbfgs_memory: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 500,
            pg_tol: 1e-6,
            stall_tol: 1e-12,
            stall_window: 5,
            n_starts: 0,
            seed: 0,
            lbfgs_memory: 10,
        }
    }
}

/// Minimizes the cost over piecewise-constant policies on the problem grid
/// by projected L-BFGS descent with a backtracking line search on the
/// projected arc. Accepted iterates have strictly decreasing objective;
/// the best iterate is returned even on non-convergence.
pub fn solve(
    prob: &OcpProblem,
    init: &ControlPolicy,
    opts: &SolveOptions,
) -> Result<OcpSolution, OcpError> {
    prob.validate()?;
    let grid_tol = 1e-9 * prob.t_f.max(1.0);
    let on_problem_grid =
        init.n_intervals() == prob.n_intervals
            && init.breakpoints().iter().enumerate().all(|(j, b)| {
                (b - prob.t_f * j as f64 / prob.n_intervals as f64).abs() <= grid_tol
            });
    if !on_problem_grid {
        return Err(OcpError::InitMismatch {
            expected: prob.n_intervals,
        });
    }
    for u in init.values() {
        if !prob.bounds.contains(u) {
            return Err(OcpError::BadProblem("initial policy outside bounds"));
        }
    }

    let theta0 = pack(init);
    let mut starts = vec![theta0];
    if opts.n_starts > 0 {
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.n_starts {
            let mut theta = vec![0.0; 3 * prob.n_intervals];
            for (idx, slot) in theta.iter_mut().enumerate() {
                let (lo, hi) = channel_box(&prob.bounds, idx / prob.n_intervals);
                *slot = lo + (hi - lo) * rng.gen::<f64>();
            }
            starts.push(theta);
        }
    }

    let runs: Vec<Result<LocalRun, OcpError>> = if starts.len() > 1 {
        starts
            .par_iter()
            .map(|theta| local_solve(theta, prob, opts))
            .collect()
    } else {
        starts
            .iter()
            .map(|theta| local_solve(theta, prob, opts))
            .collect()
    };

    let mut best: Option<LocalRun> = None;
    for run in runs {
        let run = run?;
        let better = match &best {
            None => true,
            Some(b) => run.objective < b.objective,
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");

    let policy = unpack(&best.theta, prob)?;
    let (objective, trajectory) = evaluate_cost(&policy, prob)?;
    Ok(OcpSolution {
        policy,
        objective,
        trajectory,
        iterations: best.iterations,
        projected_gradient_norm: best.pg_norm,
        converged: best.converged,
    })
}

struct LocalRun {
    theta: Vec<f64>,
    objective: f64,
    iterations: usize,
    pg_norm: f64,
    converged: bool,
}

fn pack(policy: &ControlPolicy) -> Vec<f64> {
    let n = policy.n_intervals();
    let mut theta = vec![0.0; 3 * n];
    for channel in 0..3 {
        for (j, u) in policy.values().iter().enumerate() {
            theta[channel * n + j] = get_channel(u, channel);
        }
    }
    theta
}

fn unpack(theta: &[f64], prob: &OcpProblem) -> Result<ControlPolicy, OcpError> {
    let n = prob.n_intervals;
    let values: Vec<ControlTriple> = (0..n)
        .map(|j| ControlTriple {
            c_a: theta[j],
            c_m: theta[n + j],
            alpha: theta[2 * n + j],
        })
        .collect();
    let breakpoints = (0..=n).map(|j| prob.t_f * j as f64 / n as f64).collect();
    Ok(ControlPolicy::piecewise(breakpoints, values, prob.bounds)?)
}

fn project(theta: &mut [f64], bounds: &ControlBounds, n: usize) {
    for (idx, v) in theta.iter_mut().enumerate() {
        let (lo, hi) = channel_box(bounds, idx / n);
        *v = v.clamp(lo, hi);
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

fn local_solve(
    theta0: &[f64],
    prob: &OcpProblem,
    opts: &SolveOptions,
) -> Result<LocalRun, OcpError> {
    let n = prob.n_intervals;
    let mut theta = theta0.to_vec();
    project(&mut theta, &prob.bounds, n);

    let cost_at =
        |theta: &[f64]| -> Result<f64, OcpError> { cost_only(&unpack(theta, prob)?, prob) };
    let grad_at =
        |theta: &[f64]| -> Result<Vec<f64>, OcpError> { fd_gradient(&unpack(theta, prob)?, prob) };

    let mut objective = cost_at(&theta)?;
    let mut grad = grad_at(&theta)?;

    // (s, y) pairs for the limited-memory inverse Hessian
    let mut mem_s: Vec<Vec<f64>> = Vec::new();
    let mut mem_y: Vec<Vec<f64>> = Vec::new();

    let mut best_theta = theta.clone();
    let mut best_objective = objective;
    let mut recent: Vec<f64> = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    let mut pg_norm = projected_gradient_norm(&theta, &grad, &prob.bounds, n);

    'outer: while iterations < opts.max_iters {
        if pg_norm <= opts.pg_tol {
            converged = true;
            break;
        }

        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for attempt in 0..2 {
            let direction = if attempt == 0 {
                lbfgs_direction(&grad, &mem_s, &mem_y)
            } else {
                grad.iter().map(|g| -g).collect()
            };
            let mut step = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let mut candidate: Vec<f64> = theta
                    .iter()
                    .zip(&direction)
                    .map(|(t, d)| t + step * d)
                    .collect();
                project(&mut candidate, &prob.bounds, n);
                let displacement: Vec<f64> =
                    candidate.iter().zip(&theta).map(|(c, t)| c - t).collect();
                if sup_norm(&displacement) == 0.0 {
                    break;
                }
                let trial = cost_at(&candidate)?;
                let slope = dot(&grad, &displacement);
                if trial <= objective + ARMIJO_C1 * slope && trial < objective {
                    accepted = Some((candidate, trial));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((next_theta, next_objective)) = accepted else {
            // no descent direction survived the line search
            break 'outer;
        };

        let next_grad = grad_at(&next_theta)?;
        let s: Vec<f64> = next_theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            mem_s.push(s);
            mem_y.push(y);
            if mem_s.len() > opts.lbfgs_memory {
                mem_s.remove(0);
                mem_y.remove(0);
            }
        }

        theta = next_theta;
        objective = next_objective;
        grad = next_grad;
        iterations += 1;
        pg_norm = projected_gradient_norm(&theta, &grad, &prob.bounds, n);

        if objective < best_objective {
            best_objective = objective;
            best_theta = theta.clone();
        }
        recent.push(best_objective);
        if recent.len() > opts.stall_window + 1 {
            recent.remove(0);
            let decrease = recent[0] - best_objective;
            if decrease <= opts.stall_tol {
                converged = true;
                break;
            }
        }
    }

    if pg_norm <= opts.pg_tol {
        converged = true;
    }

    Ok(LocalRun {
        theta: best_theta,
        objective: best_objective,
        iterations,
        pg_norm,
        converged,
    })
}

fn projected_gradient_norm(theta: &[f64], grad: &[f64], bounds: &ControlBounds, n: usize) -> f64 {
    let mut moved: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - g).collect();
    project(&mut moved, bounds, n);
    moved
        .iter()
        .zip(theta)
        .fold(0.0, |acc, (m, t)| acc.max((m - t).abs()))
}

/// Two-loop recursion; with empty memory this is steepest descent.
fn lbfgs_direction(grad: &[f64], mem_s: &[Vec<f64>], mem_y: &[Vec<f64>]) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let m = mem_s.len();
    let mut alphas = vec![0.0; m];
    let mut rhos = vec![0.0; m];
    for i in (0..m).rev() {
        rhos[i] = 1.0 / dot(&mem_y[i], &mem_s[i]);
        alphas[i] = rhos[i] * dot(&mem_s[i], &q);
        for (qj, yj) in q.iter_mut().zip(&mem_y[i]) {
            *qj -= alphas[i] * yj;
        }
    }
    if m > 0 {
        let gamma = dot(&mem_s[m - 1], &mem_y[m - 1]) / dot(&mem_y[m - 1], &mem_y[m - 1]);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
    }
    for i in 0..m {
        let beta = rhos[i] * dot(&mem_y[i], &q);
        for (qj, sj) in q.iter_mut().zip(&mem_s[i]) {
            *qj += (alphas[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Restricts the study to one intervention: disease weight 0.5, the chosen
/// channel's effort weight 0.5, the other effort weights zero, and the
/// other channels' boxes collapsed to their no-control values.
pub fn single_control_problem(channel: Channel, prob: &OcpProblem) -> OcpProblem {
    let mut out = prob.clone();
    out.weights = CostWeights {
        gamma_d: 0.5,
        gamma_s: if channel == Channel::Adulticide {
            0.5
        } else {
            0.0
        },
        gamma_l: if channel == Channel::Larvicide {
            0.5
        } else {
            0.0
        },
        gamma_e: if channel == Channel::Mechanical {
            0.5
        } else {
            0.0
        },
    };
    out.bounds = ControlBounds {
        c_a: if channel == Channel::Larvicide {
            prob.bounds.c_a
        } else {
            (0.0, 0.0)
        },
        c_m: if channel == Channel::Adulticide {
            prob.bounds.c_m
        } else {
            (0.0, 0.0)
        },
        alpha: if channel == Channel::Mechanical {
            prob.bounds.alpha
        } else {
            (1.0, 1.0)
        },
    };
    out
}
