//! Named scenario runs and their CSV artifacts.
//!
//! A [`RunConfig`] comes from a plain `key = value` document (unknown keys
//! are rejected; anything omitted takes the documented default) plus
//! command-line overrides. [`run`] executes one scenario and writes a fixed
//! set of CSV files; [`emit_figure_data`] writes one file per plotted curve
//! for the standard result figures. All numeric output uses a fixed
//! 10-significant-digit format, so identical configurations produce
//! byte-identical files.

use crate::integrator::{default_output_points, IntegratorConfig, Method, Trajectory};
use crate::model::{default_params, ControlTriple, EpiParams};
use crate::ocp::{
    self, evaluate_cost, scenario_weights, Channel, CostWeights, OcpProblem, OcpSolution,
    SolveOptions, WeightCase,
};
use crate::policy::{ControlBounds, ControlPolicy, DEFAULT_ALPHA_MIN};
use crate::r0::{self, R0Grid, SweepPair};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse `{text}`: {msg}")]
    Parse {
        line: usize,
        text: String,
        msg: String,
    },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {msg}")]
    Validation { key: String, msg: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Ocp(#[from] crate::ocp::OcpError),
    #[error(transparent)]
    Integrator(#[from] crate::integrator::IntegratorError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
}

/// What a run should do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Integrate the normalized system under constant controls.
    Simulate,
    /// Reproduction number at one control setting.
    R0Point,
    /// Reproduction number over a 2-D control grid.
    R0Sweep,
    /// Optimize all three controls.
    Optimize,
    /// Optimize a single control channel, others frozen.
    OptimizeSingle,
    /// Optimize and also report the no-control baseline.
    Compare,
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "simulate" => Ok(Scenario::Simulate),
            "r0-point" => Ok(Scenario::R0Point),
            "r0-sweep" => Ok(Scenario::R0Sweep),
            "optimize" => Ok(Scenario::Optimize),
            "optimize-single" => Ok(Scenario::OptimizeSingle),
            "compare" => Ok(Scenario::Compare),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Sweep settings for `r0-sweep` and the reproduction-number figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub pair: SweepPair,
    pub resolution: usize,
    /// Fixed value of the third control; defaults to its no-control value.
    pub fixed: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            pair: SweepPair::CmCa,
            resolution: 101,
            fixed: None,
        }
    }
}

/// Fully resolved configuration of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub params: EpiParams,
    /// Constant controls for simulation/point scenarios.
    pub controls: ControlTriple,
    pub t_f: f64,
    pub n_intervals: usize,
    pub integrator: IntegratorConfig,
    pub weights: CostWeights,
    pub single: Option<Channel>,
    pub sweep: SweepSpec,
    pub alpha_min: f64,
    pub solver: SolveOptions,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t_f = 84.0;
        RunConfig {
            scenario: Scenario::Simulate,
            params: default_params(),
            controls: ControlTriple::NO_CONTROL,
            t_f,
            n_intervals: 84,
            integrator: IntegratorConfig::default_adaptive(t_f),
            weights: scenario_weights(WeightCase::A),
            single: None,
            sweep: SweepSpec::default(),
            alpha_min: DEFAULT_ALPHA_MIN,
            solver: SolveOptions::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn bounds(&self) -> ControlBounds {
        ControlBounds::with_alpha_min(self.alpha_min)
    }

    /// The shooting problem implied by this configuration.
    pub fn problem(&self) -> OcpProblem {
        let mut prob = OcpProblem::new(
            self.params.clone(),
            self.weights,
            self.t_f,
            self.n_intervals,
        );
        prob.bounds = self.bounds();
        prob.integrator = self.integrator;
        prob
    }
}

/// Tracks which keys were set so defaults can be resolved afterwards.
#[derive(Default)]
struct Draft {
    scenario: Option<Scenario>,
    params: Vec<(String, f64)>,
    controls_c_a: Option<f64>,
    controls_c_m: Option<f64>,
    controls_alpha: Option<f64>,
    t_f: Option<f64>,
    n_intervals: Option<usize>,
    method: Option<&'static str>,
    step: Option<f64>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    output_points: Option<usize>,
    weights_case: Option<WeightCase>,
    gammas: Vec<(usize, f64)>,
    single: Option<Channel>,
    sweep_pair: Option<SweepPair>,
    sweep_resolution: Option<usize>,
    sweep_fixed: Option<f64>,
    alpha_min: Option<f64>,
    max_iters: Option<usize>,
    pg_tol: Option<f64>,
    multistart: Option<usize>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
}

/// Parses a plain `key = value` document. Lines starting with `#` and blank
/// lines are ignored; keys are applied in order; unknown keys are rejected
/// with their line number.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut draft = Draft::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                line: line_no,
                text: raw.to_string(),
                msg: "expected `key = value`".into(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut draft, key, value, line_no)?;
    }

    finalize(draft)
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Parse {
        line,
        text: format!("{key} = {value}"),
        msg: e.to_string(),
    })
}

fn apply_key(draft: &mut Draft, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
    match key {
        "scenario" => draft.scenario = Some(parse_as::<Scenario>(key, value, line)?),
        "output_dir" => draft.output_dir = Some(PathBuf::from(value)),
        "seed" => draft.seed = Some(parse_as::<u64>(key, value, line)?),
        "t_f" => draft.t_f = Some(parse_as::<f64>(key, value, line)?),
        "n_intervals" => draft.n_intervals = Some(parse_as::<usize>(key, value, line)?),
        "controls.c_a" => draft.controls_c_a = Some(parse_as::<f64>(key, value, line)?),
        "controls.c_m" => draft.controls_c_m = Some(parse_as::<f64>(key, value, line)?),
        "controls.alpha" => draft.controls_alpha = Some(parse_as::<f64>(key, value, line)?),
        "weights.case" => draft.weights_case = Some(parse_as::<WeightCase>(key, value, line)?),
        "weights.gamma_d" => draft.gammas.push((0, parse_as::<f64>(key, value, line)?)),
        "weights.gamma_s" => draft.gammas.push((1, parse_as::<f64>(key, value, line)?)),
        "weights.gamma_l" => draft.gammas.push((2, parse_as::<f64>(key, value, line)?)),
        "weights.gamma_e" => draft.gammas.push((3, parse_as::<f64>(key, value, line)?)),
        "integrator.method" => match value {
            "adaptive" => draft.method = Some("adaptive"),
            "rk4-fixed" => draft.method = Some("rk4-fixed"),
            other => {
                return Err(ConfigError::Parse {
                    line,
                    text: format!("{key} = {other}"),
                    msg: "expected `adaptive` or `rk4-fixed`".into(),
                })
            }
        },
        "integrator.step" => draft.step = Some(parse_as::<f64>(key, value, line)?),
        "integrator.rel_tol" => draft.rel_tol = Some(parse_as::<f64>(key, value, line)?),
        "integrator.abs_tol" => draft.abs_tol = Some(parse_as::<f64>(key, value, line)?),
        "integrator.output_points" => {
            draft.output_points = Some(parse_as::<usize>(key, value, line)?)
        }
        "single.channel" => draft.single = Some(parse_as::<Channel>(key, value, line)?),
        "sweep.pair" => {
            draft.sweep_pair = Some(match value {
                "cm-ca" => SweepPair::CmCa,
                "cm-alpha" => SweepPair::CmAlpha,
                "ca-alpha" => SweepPair::CaAlpha,
                other => {
                    return Err(ConfigError::Parse {
                        line,
                        text: format!("{key} = {other}"),
                        msg: "expected `cm-ca`, `cm-alpha` or `ca-alpha`".into(),
                    })
                }
            })
        }
        "sweep.resolution" => draft.sweep_resolution = Some(parse_as::<usize>(key, value, line)?),
        "sweep.fixed" => draft.sweep_fixed = Some(parse_as::<f64>(key, value, line)?),
        "bounds.alpha_min" => draft.alpha_min = Some(parse_as::<f64>(key, value, line)?),
        "solver.max_iters" => draft.max_iters = Some(parse_as::<usize>(key, value, line)?),
        "solver.pg_tol" => draft.pg_tol = Some(parse_as::<f64>(key, value, line)?),
        "solver.multistart" => draft.multistart = Some(parse_as::<usize>(key, value, line)?),
        _ if key.starts_with("params.") => {
            let field = key.trim_start_matches("params.").to_string();
            if !matches!(
                field.as_str(),
                "n_h"
                    | "b"
                    | "beta_mh"
                    | "beta_hm"
                    | "mu_h"
                    | "eta_h"
                    | "mu_m"
                    | "phi"
                    | "mu_a"
                    | "eta_a"
                    | "m"
                    | "k"
            ) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            draft
                .params
                .push((field, parse_as::<f64>(key, value, line)?));
        }
        _ => {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

fn finalize(draft: Draft) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();

    if let Some(s) = draft.scenario {
        config.scenario = s;
    }
    for (field, value) in &draft.params {
        let p = &mut config.params;
        match field.as_str() {
            "n_h" => p.n_h = *value,
            "b" => p.b = *value,
            "beta_mh" => p.beta_mh = *value,
            "beta_hm" => p.beta_hm = *value,
            "mu_h" => p.mu_h = *value,
            "eta_h" => p.eta_h = *value,
            "mu_m" => p.mu_m = *value,
            "phi" => p.phi = *value,
            "mu_a" => p.mu_a = *value,
            "eta_a" => p.eta_a = *value,
            "m" => p.m = *value,
            _ => p.k = *value,
        }
    }
    config
        .params
        .validate()
        .map_err(|e| ConfigError::Validation {
            key: "params".into(),
            msg: e.to_string(),
        })?;

    if let Some(t_f) = draft.t_f {
        if !t_f.is_finite() || t_f <= 0.0 {
            return Err(ConfigError::Validation {
                key: "t_f".into(),
                msg: "must be positive".into(),
            });
        }
        config.t_f = t_f;
        config.n_intervals = t_f.round().max(1.0) as usize;
    }
    if let Some(n) = draft.n_intervals {
        if n == 0 {
            return Err(ConfigError::Validation {
                key: "n_intervals".into(),
                msg: "must be at least 1".into(),
            });
        }
        config.n_intervals = n;
    }

    if let Some(a) = draft.alpha_min {
        if !(a > 0.0 && a <= 1.0) {
            return Err(ConfigError::Validation {
                key: "bounds.alpha_min".into(),
                msg: "must lie in (0, 1]".into(),
            });
        }
        config.alpha_min = a;
    }

    if let Some(v) = draft.controls_c_a {
        config.controls.c_a = v;
    }
    if let Some(v) = draft.controls_c_m {
        config.controls.c_m = v;
    }
    if let Some(v) = draft.controls_alpha {
        config.controls.alpha = v;
    }
    let bounds = config.bounds();
    for (key, value, (lo, hi)) in [
        ("controls.c_a", config.controls.c_a, bounds.c_a),
        ("controls.c_m", config.controls.c_m, bounds.c_m),
        ("controls.alpha", config.controls.alpha, bounds.alpha),
    ] {
        if value.is_nan() || value < lo || value > hi {
            return Err(ConfigError::Validation {
                key: key.into(),
                msg: format!("{value} outside [{lo}, {hi}]"),
            });
        }
    }

    if let Some(case) = draft.weights_case {
        config.weights = scenario_weights(case);
    }
    for (slot, value) in &draft.gammas {
        if *value < 0.0 {
            return Err(ConfigError::Validation {
                key: "weights".into(),
                msg: "weights must be nonnegative".into(),
            });
        }
        match slot {
            0 => config.weights.gamma_d = *value,
            1 => config.weights.gamma_s = *value,
            2 => config.weights.gamma_l = *value,
            _ => config.weights.gamma_e = *value,
        }
    }

    // Shooting needs tighter tolerances than plain simulation: the cost is
    // finite-differenced, so integration noise must sit well below the
    // gradient step.
    let optimizing = matches!(
        config.scenario,
        Scenario::Optimize | Scenario::OptimizeSingle | Scenario::Compare
    );
    let (default_rel, default_abs) = if optimizing {
        (1e-10, 1e-12)
    } else {
        (1e-8, 1e-10)
    };
    let method = match draft.method {
        Some("rk4-fixed") => Method::Rk4Fixed {
            step: draft.step.unwrap_or(0.05),
        },
        _ => Method::Adaptive {
            rel_tol: draft.rel_tol.unwrap_or(default_rel),
            abs_tol: draft.abs_tol.unwrap_or(default_abs),
        },
    };
    config.integrator = IntegratorConfig {
        method,
        output_points: draft
            .output_points
            .unwrap_or_else(|| default_output_points(config.t_f)),
    };
    config
        .integrator
        .validate()
        .map_err(|e| ConfigError::Validation {
            key: "integrator".into(),
            msg: e.to_string(),
        })?;

    if let Some(ch) = draft.single {
        config.single = Some(ch);
    }
    if let Some(pair) = draft.sweep_pair {
        config.sweep.pair = pair;
    }
    if let Some(res) = draft.sweep_resolution {
        if res < 2 {
            return Err(ConfigError::Validation {
                key: "sweep.resolution".into(),
                msg: "must be at least 2".into(),
            });
        }
        config.sweep.resolution = res;
    }
    if let Some(fixed) = draft.sweep_fixed {
        let (lo, hi) = match config.sweep.pair.fixed_name() {
            "alpha" => bounds.alpha,
            "c_A" => bounds.c_a,
            _ => bounds.c_m,
        };
        if fixed.is_nan() || fixed < lo || fixed > hi {
            return Err(ConfigError::Validation {
                key: "sweep.fixed".into(),
                msg: format!("{fixed} outside [{lo}, {hi}]"),
            });
        }
    }
    config.sweep.fixed = draft.sweep_fixed;

    if let Some(n) = draft.max_iters {
        config.solver.max_iters = n;
    }
    if let Some(t) = draft.pg_tol {
        config.solver.pg_tol = t;
    }
    if let Some(n) = draft.multistart {
        config.solver.n_starts = n;
    }
    if let Some(dir) = draft.output_dir {
        config.output_dir = dir;
    }
    if let Some(seed) = draft.seed {
        config.seed = seed;
    }
    config.solver.seed = config.seed;

    if config.scenario == Scenario::OptimizeSingle && config.single.is_none() {
        return Err(ConfigError::Validation {
            key: "single.channel".into(),
            msg: "required for scenario `optimize-single`".into(),
        });
    }

    Ok(config)
}

/// Fixed 10-significant-digit decimal rendering; falls back to scientific
/// notation outside a sane exponent window. Total ordering of bytes for
/// equal inputs makes output files reproducible.
pub fn fmt_g10(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..10).contains(&e) {
        let prec = (9 - e).max(0) as usize;
        format!("{x:.prec$}")
    } else {
        format!("{x:.9e}")
    }
}

/// Outcome of a scenario run.
#[derive(Debug, Clone)]
pub struct RunReport {
    /// False when an optimization terminated without meeting its criteria.
    pub converged: bool,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default)]
struct Summary {
    objective: Option<f64>,
    peak_i_h: Option<f64>,
    peak_time: Option<f64>,
    r0_initial: Option<f64>,
    iterations: usize,
    converged: bool,
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<fs::File>, RunError> {
    let file = fs::File::create(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn write_all(path: &Path, content: &str) -> Result<(), RunError> {
    let mut w = create_file(path)?;
    w.write_all(content.as_bytes())
        .map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,s_h,i_h,r_h,a_m,s_m,i_m\n");
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let _ = write!(out, "{}", fmt_g10(*t));
        for v in state.iter().take(6) {
            let _ = write!(out, ",{}", fmt_g10(*v));
        }
        out.push('\n');
    }
    out
}

fn controls_csv(policy: &ControlPolicy, times: &[f64]) -> String {
    let mut out = String::from("t,c_A,c_m,alpha\n");
    for t in times {
        let u = policy.value_at(*t);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_g10(*t),
            fmt_g10(u.c_a),
            fmt_g10(u.c_m),
            fmt_g10(u.alpha)
        );
    }
    out
}

fn r0_grid_csv(grid: &R0Grid) -> String {
    let mut out = format!(
        "# x_name={},y_name={},fixed_name={},fixed_value={}\n",
        grid.x_name,
        grid.y_name,
        grid.fixed_name,
        fmt_g10(grid.fixed_value)
    );
    out.push_str("x,y,r0\n");
    for (iy, y) in grid.y.iter().enumerate() {
        for (ix, x) in grid.x.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_g10(*x),
                fmt_g10(*y),
                fmt_g10(grid.at(iy, ix))
            );
        }
    }
    out
}

fn threshold_csv(x_name: &str, y_name: &str, points: &[(f64, Option<f64>)]) -> String {
    let mut out = format!("{x_name},{y_name}\n");
    for (x, y) in points {
        match y {
            Some(y) => {
                let _ = writeln!(out, "{},{}", fmt_g10(*x), fmt_g10(*y));
            }
            None => {
                let _ = writeln!(out, "{},", fmt_g10(*x));
            }
        }
    }
    out
}

fn curve_csv(header: &str, points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut out = format!("t,{header}\n");
    for (t, v) in points {
        let _ = writeln!(out, "{},{}", fmt_g10(t), fmt_g10(v));
    }
    out
}

fn summary_csv(s: &Summary) -> String {
    let opt = |v: &Option<f64>| v.map(fmt_g10).unwrap_or_default();
    format!(
        "objective,peak_i_h,peak_time,r0_initial,iterations,converged\n{},{},{},{},{},{}\n",
        opt(&s.objective),
        opt(&s.peak_i_h),
        opt(&s.peak_time),
        opt(&s.r0_initial),
        s.iterations,
        s.converged
    )
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Executes the configured scenario and writes its artifacts into
/// `config.output_dir`. Non-convergence of an optimization is reported in
/// the [`RunReport`] rather than as an error so that files are still
/// written.
pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    ensure_dir(&config.output_dir)?;
    let dir = &config.output_dir;
    let mut files = Vec::new();
    let mut converged = true;

    match config.scenario {
        Scenario::Simulate => {
            let policy = ControlPolicy::constant(config.controls, config.t_f, config.bounds())?;
            let prob = config.problem();
            let (objective, traj) = evaluate_cost(&policy, &prob)?;
            let (peak_time, peak) = traj.peak(1);
            files.push(write_file(dir, "trajectory.csv", &trajectory_csv(&traj))?);
            files.push(write_file(
                dir,
                "controls.csv",
                &controls_csv(&policy, &traj.times),
            )?);
            let summary = Summary {
                objective: Some(objective),
                peak_i_h: Some(peak),
                peak_time: Some(peak_time),
                r0_initial: Some(r0::r0_closed_form(&config.controls, &config.params)),
                iterations: 0,
                converged: true,
            };
            files.push(write_file(dir, "summary.csv", &summary_csv(&summary))?);
        }
        Scenario::R0Point => {
            let summary = Summary {
                r0_initial: Some(r0::r0_closed_form(&config.controls, &config.params)),
                converged: true,
                ..Default::default()
            };
            files.push(write_file(dir, "summary.csv", &summary_csv(&summary))?);
        }
        Scenario::R0Sweep => {
            let sweep = config.sweep;
            let fixed = sweep.fixed.unwrap_or_else(|| sweep.pair.fixed_default());
            let grid = r0::sweep(
                sweep.pair,
                fixed,
                sweep.resolution,
                &config.params,
                &config.bounds(),
            );
            files.push(write_file(dir, "r0_grid.csv", &r0_grid_csv(&grid))?);
            let summary = Summary {
                r0_initial: Some(r0::r0_closed_form(&config.controls, &config.params)),
                converged: true,
                ..Default::default()
            };
            files.push(write_file(dir, "summary.csv", &summary_csv(&summary))?);
        }
        Scenario::Optimize | Scenario::OptimizeSingle | Scenario::Compare => {
            let base = config.problem();
            let prob = if config.scenario == Scenario::OptimizeSingle {
                let channel = config.single.ok_or_else(|| ConfigError::Validation {
                    key: "single.channel".into(),
                    msg: "required for scenario `optimize-single`".into(),
                })?;
                ocp::single_control_problem(channel, &base)
            } else {
                base
            };
            let solution = ocp::solve(&prob, &prob.mid_box_policy(), &config.solver)?;
            converged = solution.converged;
            files.extend(write_solution(dir, &solution, &config.params)?);

            if config.scenario == Scenario::Compare {
                let baseline_policy = prob.no_control_policy()?;
                let (j_base, traj_base) = evaluate_cost(&baseline_policy, &prob)?;
                let (peak_time, peak) = traj_base.peak(1);
                files.push(write_file(
                    dir,
                    "baseline_trajectory.csv",
                    &trajectory_csv(&traj_base),
                )?);
                let summary = Summary {
                    objective: Some(j_base),
                    peak_i_h: Some(peak),
                    peak_time: Some(peak_time),
                    r0_initial: Some(r0::r0_closed_form(
                        &ControlTriple::NO_CONTROL,
                        &config.params,
                    )),
                    iterations: 0,
                    converged: true,
                };
                files.push(write_file(
                    dir,
                    "baseline_summary.csv",
                    &summary_csv(&summary),
                )?);
            }
        }
    }

    Ok(RunReport { converged, files })
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, RunError> {
    let path = dir.join(name);
    write_all(&path, content)?;
    Ok(path)
}

fn write_solution(
    dir: &Path,
    solution: &OcpSolution,
    params: &EpiParams,
) -> Result<Vec<PathBuf>, RunError> {
    let mut files = Vec::new();
    files.push(write_file(
        dir,
        "trajectory.csv",
        &trajectory_csv(&solution.trajectory),
    )?);
    files.push(write_file(
        dir,
        "controls.csv",
        &controls_csv(&solution.policy, &solution.trajectory.times),
    )?);
    let (peak_time, peak) = solution.trajectory.peak(1);
    let summary = Summary {
        objective: Some(solution.objective),
        peak_i_h: Some(peak),
        peak_time: Some(peak_time),
        r0_initial: Some(r0::r0_closed_form(&solution.policy.value_at(0.0), params)),
        iterations: solution.iterations,
        converged: solution.converged,
    };
    files.push(write_file(dir, "summary.csv", &summary_csv(&summary))?);
    Ok(files)
}

/// The standard result figures, one data file per plotted curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Reproduction number over (c_m, c_A).
    Fig1A,
    /// Reproduction number over (c_m, alpha).
    Fig1B,
    /// Reproduction number over (c_A, alpha).
    Fig1C,
    /// Infected humans: optimal equal-weight policy vs no control.
    Fig2,
    /// The three optimal control functions, equal weights.
    Fig3,
    /// Infected humans across weight cases A, B, C.
    Fig4,
    /// Control usage across weight cases A, B, C.
    Fig5,
    /// Adulticide-only study vs all controls.
    Fig6,
    /// Larvicide-only study vs all controls.
    Fig7,
    /// Mechanical-only study vs all controls.
    Fig8,
}

impl std::str::FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fig1a" => Ok(Figure::Fig1A),
            "fig1b" => Ok(Figure::Fig1B),
            "fig1c" => Ok(Figure::Fig1C),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            "fig7" => Ok(Figure::Fig7),
            "fig8" => Ok(Figure::Fig8),
            other => Err(format!(
                "unknown figure `{other}` (fig1a..fig1c, fig2..fig8)"
            )),
        }
    }
}

impl Figure {
    fn prefix(self) -> &'static str {
        match self {
            Figure::Fig1A => "fig1a",
            Figure::Fig1B => "fig1b",
            Figure::Fig1C => "fig1c",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
        }
    }
}

fn solve_case(config: &RunConfig, case: WeightCase) -> Result<OcpSolution, RunError> {
    let mut prob = config.problem();
    prob.weights = scenario_weights(case);
    Ok(ocp::solve(&prob, &prob.mid_box_policy(), &config.solver)?)
}

fn solve_single(config: &RunConfig, channel: Channel) -> Result<OcpSolution, RunError> {
    let prob = ocp::single_control_problem(channel, &config.problem());
    Ok(ocp::solve(&prob, &prob.mid_box_policy(), &config.solver)?)
}

fn i_h_curve(traj: &Trajectory) -> impl Iterator<Item = (f64, f64)> + '_ {
    traj.times.iter().zip(&traj.states).map(|(t, s)| (*t, s[1]))
}

fn control_curve<'a>(
    policy: &'a ControlPolicy,
    times: &'a [f64],
    channel: Channel,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    times.iter().map(move |t| {
        let u = policy.value_at(*t);
        let v = match channel {
            Channel::Larvicide => u.c_a,
            Channel::Adulticide => u.c_m,
            Channel::Mechanical => u.alpha,
        };
        (*t, v)
    })
}

/// Writes the data behind one result figure. Optimization-based figures
/// solve the underlying problems on the configured grid.
pub fn emit_figure_data(figure: Figure, config: &RunConfig) -> Result<RunReport, RunError> {
    ensure_dir(&config.output_dir)?;
    let dir = &config.output_dir;
    let prefix = figure.prefix();
    let mut files = Vec::new();
    let mut converged = true;

    match figure {
        Figure::Fig1A | Figure::Fig1B | Figure::Fig1C => {
            let pair = match figure {
                Figure::Fig1A => SweepPair::CmCa,
                Figure::Fig1B => SweepPair::CmAlpha,
                _ => SweepPair::CaAlpha,
            };
            let fixed = config.sweep.fixed.unwrap_or_else(|| pair.fixed_default());
            let bounds = config.bounds();
            let grid = r0::sweep(
                pair,
                fixed,
                config.sweep.resolution,
                &config.params,
                &bounds,
            );
            files.push(write_file(
                dir,
                &format!("{prefix}_grid.csv"),
                &r0_grid_csv(&grid),
            )?);
            let curve = r0::threshold_curve(
                pair,
                fixed,
                config.sweep.resolution,
                &config.params,
                &bounds,
            );
            files.push(write_file(
                dir,
                &format!("{prefix}_threshold.csv"),
                &threshold_csv(pair.y_name(), pair.x_name(), &curve),
            )?);
        }
        Figure::Fig2 => {
            let solution = solve_case(config, WeightCase::A)?;
            converged &= solution.converged;
            files.push(write_file(
                dir,
                &format!("{prefix}_optimal.csv"),
                &curve_csv("i_h", i_h_curve(&solution.trajectory)),
            )?);
            let prob = config.problem();
            let (_, baseline) = evaluate_cost(&prob.no_control_policy()?, &prob)?;
            files.push(write_file(
                dir,
                &format!("{prefix}_no_control.csv"),
                &curve_csv("i_h", i_h_curve(&baseline)),
            )?);
        }
        Figure::Fig3 => {
            let solution = solve_case(config, WeightCase::A)?;
            converged &= solution.converged;
            let times = &solution.trajectory.times;
            for (name, channel) in [
                ("c_a", Channel::Larvicide),
                ("c_m", Channel::Adulticide),
                ("alpha", Channel::Mechanical),
            ] {
                files.push(write_file(
                    dir,
                    &format!("{prefix}_{name}.csv"),
                    &curve_csv(name, control_curve(&solution.policy, times, channel)),
                )?);
            }
        }
        Figure::Fig4 | Figure::Fig5 => {
            for (case, tag) in [
                (WeightCase::A, "case_a"),
                (WeightCase::B, "case_b"),
                (WeightCase::C, "case_c"),
            ] {
                let solution = solve_case(config, case)?;
                converged &= solution.converged;
                if figure == Figure::Fig4 {
                    files.push(write_file(
                        dir,
                        &format!("{prefix}_{tag}.csv"),
                        &curve_csv("i_h", i_h_curve(&solution.trajectory)),
                    )?);
                } else {
                    let times = &solution.trajectory.times;
                    for (name, channel) in [
                        ("adulticide", Channel::Adulticide),
                        ("larvicide", Channel::Larvicide),
                        ("mechanical", Channel::Mechanical),
                    ] {
                        files.push(write_file(
                            dir,
                            &format!("{prefix}_{name}_{tag}.csv"),
                            &curve_csv(name, control_curve(&solution.policy, times, channel)),
                        )?);
                    }
                }
            }
        }
        Figure::Fig6 | Figure::Fig7 | Figure::Fig8 => {
            let (channel, channel_name) = match figure {
                Figure::Fig6 => (Channel::Adulticide, "c_m"),
                Figure::Fig7 => (Channel::Larvicide, "c_a"),
                _ => (Channel::Mechanical, "alpha"),
            };
            let all = solve_case(config, WeightCase::A)?;
            let single = solve_single(config, channel)?;
            converged &= all.converged && single.converged;
            let times = &all.trajectory.times;
            files.push(write_file(
                dir,
                &format!("{prefix}_{channel_name}_all.csv"),
                &curve_csv(channel_name, control_curve(&all.policy, times, channel)),
            )?);
            files.push(write_file(
                dir,
                &format!("{prefix}_{channel_name}_single.csv"),
                &curve_csv(
                    channel_name,
                    control_curve(&single.policy, &single.trajectory.times, channel),
                ),
            )?);
            files.push(write_file(
                dir,
                &format!("{prefix}_i_h_all.csv"),
                &curve_csv("i_h", i_h_curve(&all.trajectory)),
            )?);
            files.push(write_file(
                dir,
                &format!("{prefix}_i_h_single.csv"),
                &curve_csv("i_h", i_h_curve(&single.trajectory)),
            )?);
        }
    }

    Ok(RunReport { converged, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_document_gives_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config.scenario, Scenario::Simulate);
        assert_eq!(config.params.n_h, 480_000.0);
        assert_eq!(config.t_f, 84.0);
        assert_eq!(config.n_intervals, 84);
        assert_eq!(config.weights, scenario_weights(WeightCase::A));
        assert_eq!(config.controls, ControlTriple::NO_CONTROL);
        assert_eq!(config.alpha_min, DEFAULT_ALPHA_MIN);
    }

    #[test]
    fn weight_case_key() {
        let config = parse_config("weights.case = B\n").unwrap();
        assert_eq!(config.weights.gamma_d, 0.55);
        assert_eq!(config.weights.gamma_s, 0.15);
    }

    #[test]
    fn alpha_zero_is_rejected_naming_the_key() {
        let err = parse_config("controls.alpha = 0\n").unwrap_err();
        match err {
            ConfigError::Validation { key, .. } => assert_eq!(key, "controls.alpha"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let err = parse_config("t_f = 30\nnot.a.key = 1\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "not.a.key");
            }
            other => panic!("expected unknown-key error, got {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_config("# comment\njust some words\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn t_f_sets_default_interval_count() {
        let config = parse_config("t_f = 30\n").unwrap();
        assert_eq!(config.n_intervals, 30);
        let config = parse_config("t_f = 30\nn_intervals = 10\n").unwrap();
        assert_eq!(config.n_intervals, 10);
    }

    #[test]
    fn optimize_scenarios_default_to_tight_tolerances() {
        let config = parse_config("scenario = optimize\n").unwrap();
        assert_eq!(
            config.integrator.method,
            Method::Adaptive {
                rel_tol: 1e-10,
                abs_tol: 1e-12
            }
        );
        let config = parse_config("scenario = simulate\n").unwrap();
        assert_eq!(
            config.integrator.method,
            Method::Adaptive {
                rel_tol: 1e-8,
                abs_tol: 1e-10
            }
        );
    }

    #[test]
    fn solver_and_seed_keys_reach_the_solve_options() {
        let config =
            parse_config("seed = 9\nsolver.multistart = 2\nsolver.max_iters = 77\n").unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.solver.seed, 9);
        assert_eq!(config.solver.n_starts, 2);
        assert_eq!(config.solver.max_iters, 77);
    }

    #[test]
    fn sweep_fixed_value_must_fit_the_third_box() {
        let err = parse_config("sweep.pair = cm-ca\nsweep.fixed = 0\n").unwrap_err();
        match err {
            ConfigError::Validation { key, .. } => assert_eq!(key, "sweep.fixed"),
            other => panic!("expected validation error, got {other}"),
        }
        assert!(parse_config("sweep.pair = cm-alpha\nsweep.fixed = 0.5\n").is_ok());
    }

    #[test]
    fn optimize_single_requires_channel() {
        assert!(parse_config("scenario = optimize-single\n").is_err());
        let config =
            parse_config("scenario = optimize-single\nsingle.channel = larvicide\n").unwrap();
        assert_eq!(config.single, Some(Channel::Larvicide));
    }

    #[test]
    fn g10_formatting() {
        assert_eq!(fmt_g10(0.0), "0");
        assert_eq!(fmt_g10(1.0), "1.000000000");
        assert_eq!(fmt_g10(0.25), "0.2500000000");
        assert_eq!(fmt_g10(-2.4563797565938494), "-2.456379757");
        assert_eq!(fmt_g10(480000.0), "480000.0000");
        assert_eq!(fmt_g10(1.5e-4), "0.0001500000000");
        assert_eq!(fmt_g10(3.858769052672197e-5), "3.858769053e-5");
        assert_eq!(fmt_g10(1e-12), "1.000000000e-12");
    }

    #[test]
    fn summary_round_trip_value() {
        let s = Summary {
            objective: Some(0.5),
            peak_i_h: None,
            peak_time: None,
            r0_initial: Some(2.4563797565938494),
            iterations: 3,
            converged: true,
        };
        let text = summary_csv(&s);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "objective,peak_i_h,peak_time,r0_initial,iterations,converged"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "0.5000000000");
        assert_eq!(row[1], "");
        let r0: f64 = row[3].parse().unwrap();
        assert_relative_eq!(r0, 2.4563797565938494, max_relative = 1e-9);
        assert_eq!(row[4], "3");
        assert_eq!(row[5], "true");
    }
}
