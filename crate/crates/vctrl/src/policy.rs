//! Time-dependent intervention schedules.
//!
//! A [`ControlPolicy`] is a piecewise-constant function of time: `n`
//! intervals between `n + 1` strictly increasing breakpoints, one
//! [`ControlTriple`] per interval. Each channel is confined to a closed box
//! ([`ControlBounds`]); collapsing a channel's box to a single value freezes
//! that channel, which is how single-control studies pin the unused
//! interventions.

use crate::model::{ControlTriple, ModelError};
use thiserror::Error;

/// Lower bound of the mechanical-control box. `alpha` must stay strictly
/// positive, so its admissible interval is closed off at a small floor
/// rather than at zero.
pub const DEFAULT_ALPHA_MIN: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("breakpoints must be strictly increasing and start at 0")]
    BadBreakpoints,
    #[error("expected {expected} interval values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("interval {interval}: control {name} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        interval: usize,
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("policy ends at t = {policy_end} but must cover t = {required}")]
    DomainTooShort { policy_end: f64, required: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-channel closed boxes for the three controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub c_a: (f64, f64),
    pub c_m: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for ControlBounds {
    fn default() -> Self {
        ControlBounds {
            c_a: (0.0, 1.0),
            c_m: (0.0, 1.0),
            alpha: (DEFAULT_ALPHA_MIN, 1.0),
        }
    }
}

impl ControlBounds {
    pub fn with_alpha_min(alpha_min: f64) -> Self {
        ControlBounds {
            alpha: (alpha_min, 1.0),
            ..Default::default()
        }
    }

    pub fn contains(&self, u: &ControlTriple) -> bool {
        self.check(u, 0).is_ok()
    }

    /// Errors with the offending channel when `u` lies outside the box;
    /// `interval` only labels the error message.
    pub fn check(&self, u: &ControlTriple, interval: usize) -> Result<(), PolicyError> {
        let channels = [
            ("c_a", u.c_a, self.c_a),
            ("c_m", u.c_m, self.c_m),
            ("alpha", u.alpha, self.alpha),
        ];
        for (name, value, (lo, hi)) in channels {
            if value.is_nan() || value < lo || value > hi {
                return Err(PolicyError::OutOfBounds {
                    interval,
                    name,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Clamps a triple into the box.
    pub fn project(&self, u: &ControlTriple) -> ControlTriple {
        ControlTriple {
            c_a: u.c_a.clamp(self.c_a.0, self.c_a.1),
            c_m: u.c_m.clamp(self.c_m.0, self.c_m.1),
            alpha: u.alpha.clamp(self.alpha.0, self.alpha.1),
        }
    }
}

/// Piecewise-constant schedule of [`ControlTriple`]s over `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPolicy {
    breakpoints: Vec<f64>,
    values: Vec<ControlTriple>,
    bounds: ControlBounds,
}

impl ControlPolicy {
    /// Builds a policy from explicit breakpoints (first must be 0, strictly
    /// increasing) and one value per interval, all inside `bounds`.
    pub fn piecewise(
        breakpoints: Vec<f64>,
        values: Vec<ControlTriple>,
        bounds: ControlBounds,
    ) -> Result<Self, PolicyError> {
        if breakpoints.len() < 2
            || breakpoints[0] != 0.0
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
            || breakpoints.iter().any(|t| !t.is_finite())
        {
            return Err(PolicyError::BadBreakpoints);
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(PolicyError::LengthMismatch {
                expected: breakpoints.len() - 1,
                got: values.len(),
            });
        }
        for (j, u) in values.iter().enumerate() {
            u.validate()?;
            bounds.check(u, j)?;
        }
        Ok(ControlPolicy {
            breakpoints,
            values,
            bounds,
        })
    }

    /// Single constant value over `[0, t_end]`.
    pub fn constant(
        u: ControlTriple,
        t_end: f64,
        bounds: ControlBounds,
    ) -> Result<Self, PolicyError> {
        Self::piecewise(vec![0.0, t_end], vec![u], bounds)
    }

    /// `n` equal-length intervals over `[0, t_end]`, all set to `u`.
    pub fn uniform(
        u: ControlTriple,
        t_end: f64,
        n: usize,
        bounds: ControlBounds,
    ) -> Result<Self, PolicyError> {
        if n == 0 || !t_end.is_finite() || t_end <= 0.0 {
            return Err(PolicyError::BadBreakpoints);
        }
        let breakpoints = (0..=n).map(|j| t_end * j as f64 / n as f64).collect();
        Self::piecewise(breakpoints, vec![u; n], bounds)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[ControlTriple] {
        &self.values
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn n_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn t_end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Index of the interval containing `t`; intervals are right-open except
    /// the last, which includes `t_end`.
    pub fn interval_index(&self, t: f64) -> usize {
        match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&t).unwrap())
        {
            Ok(j) => j.min(self.values.len() - 1),
            Err(j) => j.saturating_sub(1).min(self.values.len() - 1),
        }
    }

    /// Control active at time `t` (clamped to the policy domain).
    pub fn value_at(&self, t: f64) -> ControlTriple {
        self.values[self.interval_index(t)]
    }

    /// Replaces the value on one interval, keeping bounds checks.
    pub fn set_value(&mut self, interval: usize, u: ControlTriple) -> Result<(), PolicyError> {
        u.validate()?;
        self.bounds.check(&u, interval)?;
        self.values[interval] = u;
        Ok(())
    }

    /// Errors unless the policy covers `[0, t]`.
    pub fn require_domain(&self, t: f64) -> Result<(), PolicyError> {
        if self.t_end() + 1e-12 < t {
            return Err(PolicyError::DomainTooShort {
                policy_end: self.t_end(),
                required: t,
            });
        }
        Ok(())
    }
}
