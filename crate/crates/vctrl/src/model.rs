//! SIR+ASI compartmental model of dengue transmission.
//!
//! Humans move through susceptible/infected/recovered compartments; the
//! mosquito population is split into an aquatic phase (eggs, larvae, pupae)
//! and susceptible/infected adults. Three interventions act on the vector:
//! larvicide (`c_A`, kills the aquatic phase), adulticide (`c_m`, kills
//! adults) and mechanical control (`alpha`, scales the aquatic carrying
//! capacity through breeding-site removal).
//!
//! The dynamics exist in two equivalent forms: a full-scale system in
//! individual counts and a normalized system in population fractions.
//! [`normalize`]/[`denormalize`] are the exact scale maps between them.

use thiserror::Error;

/// Number of state components in either system.
pub const STATE_DIM: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("transmission probability `{name}` must lie in [0, 1], got {value}")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("control `{name}` = {value} outside its admissible range {range}")]
    ControlOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// Biological and demographic rates plus population sizes.
///
/// Rates are per day; `b` is bites per mosquito per day, `phi` eggs per
/// mosquito per day, `m` female mosquitoes per human, `k` larvae per human.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiParams {
    /// Total human population (constant over time).
    pub n_h: f64,
    /// Average daily biting rate.
    pub b: f64,
    /// Transmission probability mosquito -> human, per bite.
    pub beta_mh: f64,
    /// Transmission probability human -> mosquito, per bite.
    pub beta_hm: f64,
    /// Human mortality rate (1 / average lifespan in days).
    pub mu_h: f64,
    /// Human recovery rate (1 / mean viremic period in days).
    pub eta_h: f64,
    /// Adult mosquito mortality rate.
    pub mu_m: f64,
    /// Eggs deposited per mosquito per day.
    pub phi: f64,
    /// Natural mortality rate of the aquatic phase.
    pub mu_a: f64,
    /// Maturation rate from aquatic phase to adult.
    pub eta_a: f64,
    /// Female mosquitoes per human.
    pub m: f64,
    /// Larvae per human.
    pub k: f64,
}

impl EpiParams {
    /// Checks positivity of all rates/sizes and that both transmission
    /// probabilities lie in [0, 1].
    pub fn validate(&self) -> Result<(), ModelError> {
        let positives = [
            ("n_h", self.n_h),
            ("b", self.b),
            ("beta_mh", self.beta_mh),
            ("beta_hm", self.beta_hm),
            ("mu_h", self.mu_h),
            ("eta_h", self.eta_h),
            ("mu_m", self.mu_m),
            ("phi", self.phi),
            ("mu_a", self.mu_a),
            ("eta_a", self.eta_a),
            ("m", self.m),
            ("k", self.k),
        ];
        for (name, value) in positives {
            if !value.is_finite() || value <= 0.0 {
                return Err(ModelError::NonPositiveParam { name, value });
            }
        }
        for (name, value) in [("beta_mh", self.beta_mh), ("beta_hm", self.beta_hm)] {
            if value > 1.0 {
                return Err(ModelError::ProbabilityOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

impl Default for EpiParams {
    fn default() -> Self {
        default_params()
    }
}

/// Reference parameter set: a 480 000-person population during a single
/// dengue outbreak, with vector rates for *Aedes aegypti*.
pub fn default_params() -> EpiParams {
    EpiParams {
        n_h: 480_000.0,
        b: 0.8,
        beta_mh: 0.375,
        beta_hm: 0.375,
        mu_h: 1.0 / (71.0 * 365.0),
        eta_h: 1.0 / 3.0,
        mu_m: 1.0 / 10.0,
        phi: 6.0,
        mu_a: 1.0 / 4.0,
        eta_a: 0.08,
        m: 3.0,
        k: 3.0,
    }
}

/// One intervention setting: larvicide and adulticide coverages in [0, 1],
/// mechanical-control factor `alpha` in (0, 1] (`alpha = 1` means no
/// breeding-site removal; it divides the carrying capacity so it must stay
/// strictly positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTriple {
    pub c_a: f64,
    pub c_m: f64,
    pub alpha: f64,
}

impl ControlTriple {
    /// No intervention: zero insecticides, full carrying capacity.
    pub const NO_CONTROL: ControlTriple = ControlTriple {
        c_a: 0.0,
        c_m: 0.0,
        alpha: 1.0,
    };

    pub fn new(c_a: f64, c_m: f64, alpha: f64) -> Result<Self, ModelError> {
        let u = ControlTriple { c_a, c_m, alpha };
        u.validate()?;
        Ok(u)
    }

    /// Checks `0 <= c_a <= 1`, `0 <= c_m <= 1`, `0 < alpha <= 1`.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.c_a) || !self.c_a.is_finite() {
            return Err(ModelError::ControlOutOfRange {
                name: "c_a",
                value: self.c_a,
                range: "[0, 1]",
            });
        }
        if !(0.0..=1.0).contains(&self.c_m) || !self.c_m.is_finite() {
            return Err(ModelError::ControlOutOfRange {
                name: "c_m",
                value: self.c_m,
                range: "[0, 1]",
            });
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !self.alpha.is_finite() {
            return Err(ModelError::ControlOutOfRange {
                name: "alpha",
                value: self.alpha,
                range: "(0, 1]",
            });
        }
        Ok(())
    }
}

/// Full-scale state in individual counts: humans (`s_h + i_h + r_h = n_h`)
/// and mosquitoes/larvae.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub s_h: f64,
    pub i_h: f64,
    pub r_h: f64,
    pub a_m: f64,
    pub s_m: f64,
    pub i_m: f64,
}

/// Normalized state in fractions: humans relative to `n_h`, aquatic phase
/// relative to `k * n_h`, adult mosquitoes relative to `m * n_h`.
/// Satisfies `s_h + i_h + r_h = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormState {
    pub s_h: f64,
    pub i_h: f64,
    pub r_h: f64,
    pub a_m: f64,
    pub s_m: f64,
    pub i_m: f64,
}

macro_rules! impl_state_array {
    ($ty:ident) => {
        impl $ty {
            pub fn to_array(self) -> [f64; STATE_DIM] {
                [self.s_h, self.i_h, self.r_h, self.a_m, self.s_m, self.i_m]
            }

            pub fn from_array(x: [f64; STATE_DIM]) -> Self {
                Self {
                    s_h: x[0],
                    i_h: x[1],
                    r_h: x[2],
                    a_m: x[3],
                    s_m: x[4],
                    i_m: x[5],
                }
            }

            pub fn from_slice(x: &[f64]) -> Self {
                assert_eq!(x.len(), STATE_DIM);
                Self {
                    s_h: x[0],
                    i_h: x[1],
                    r_h: x[2],
                    a_m: x[3],
                    s_m: x[4],
                    i_m: x[5],
                }
            }
        }
    };
}

impl_state_array!(FullState);
impl_state_array!(NormState);

/// Normalized initial condition for the reference outbreak: one human in
/// ten thousand infected, vector at carrying capacity, no infected
/// mosquitoes.
pub fn normalized_initial_state() -> NormState {
    NormState {
        s_h: 0.9999,
        i_h: 0.0001,
        r_h: 0.0,
        a_m: 1.0,
        s_m: 1.0,
        i_m: 0.0,
    }
}

/// Time derivative of the full-scale system.
///
/// The aquatic phase grows logistically toward the capacity
/// `alpha * k * n_h`; larvicide, adulticide and natural mortality act as
/// linear removal terms. Transmission is driven by the biting rate and the
/// infective fractions `i_m / n_h` (to humans) and `i_h / n_h`
/// (to mosquitoes).
pub fn rhs_full(
    _t: f64,
    x: &FullState,
    u: &ControlTriple,
    p: &EpiParams,
) -> Result<FullState, ModelError> {
    guard_alpha(u)?;
    let mut dx = [0.0; STATE_DIM];
    rhs_full_into(&x.to_array(), u, p, &mut dx);
    Ok(FullState::from_array(dx))
}

/// Time derivative of the normalized system. Algebraically the image of
/// [`rhs_full`] under the scale maps, implemented directly in fractions.
pub fn rhs_norm(
    _t: f64,
    x: &NormState,
    u: &ControlTriple,
    p: &EpiParams,
) -> Result<NormState, ModelError> {
    guard_alpha(u)?;
    let mut dx = [0.0; STATE_DIM];
    rhs_norm_into(&x.to_array(), u, p, &mut dx);
    Ok(NormState::from_array(dx))
}

fn guard_alpha(u: &ControlTriple) -> Result<(), ModelError> {
    if u.alpha.is_nan() || u.alpha <= 0.0 {
        return Err(ModelError::ControlOutOfRange {
            name: "alpha",
            value: u.alpha,
            range: "(0, 1]",
        });
    }
    Ok(())
}

/// Unchecked slice form of [`rhs_full`] for integrator inner loops. The
/// caller must have validated `u.alpha > 0`.
pub(crate) fn rhs_full_into(x: &[f64], u: &ControlTriple, p: &EpiParams, dx: &mut [f64]) {
    debug_assert!(u.alpha > 0.0);
    let (s_h, i_h, r_h, a_m, s_m, i_m) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let force_h = p.b * p.beta_mh * i_m / p.n_h; // infection pressure on humans
    let force_m = p.b * p.beta_hm * i_h / p.n_h; // infection pressure on mosquitoes
    dx[0] = p.mu_h * p.n_h - (force_h + p.mu_h) * s_h;
    dx[1] = force_h * s_h - (p.eta_h + p.mu_h) * i_h;
    dx[2] = p.eta_h * i_h - p.mu_h * r_h;
    dx[3] = p.phi * (1.0 - a_m / (u.alpha * p.k * p.n_h)) * (s_m + i_m)
        - (p.eta_a + p.mu_a + u.c_a) * a_m;
    dx[4] = p.eta_a * a_m - (force_m + p.mu_m + u.c_m) * s_m;
    dx[5] = force_m * s_m - (p.mu_m + u.c_m) * i_m;
    let _ = r_h;
}

/// Unchecked slice form of [`rhs_norm`] for integrator inner loops.
pub(crate) fn rhs_norm_into(x: &[f64], u: &ControlTriple, p: &EpiParams, dx: &mut [f64]) {
    debug_assert!(u.alpha > 0.0);
    let (s_h, i_h, r_h, a_m, s_m, i_m) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let force_h = p.b * p.beta_mh * p.m * i_m;
    let force_m = p.b * p.beta_hm * i_h;
    dx[0] = p.mu_h - (force_h + p.mu_h) * s_h;
    dx[1] = force_h * s_h - (p.eta_h + p.mu_h) * i_h;
    dx[2] = p.eta_h * i_h - p.mu_h * r_h;
    dx[3] = p.phi * (p.m / p.k) * (1.0 - a_m / u.alpha) * (s_m + i_m)
        - (p.eta_a + p.mu_a + u.c_a) * a_m;
    dx[4] = p.eta_a * (p.k / p.m) * a_m - (force_m + p.mu_m + u.c_m) * s_m;
    dx[5] = force_m * s_m - (p.mu_m + u.c_m) * i_m;
}

/// Maps counts to fractions: humans by `1/n_h`, aquatic by `1/(k n_h)`,
/// adults by `1/(m n_h)`.
pub fn normalize(x: &FullState, p: &EpiParams) -> NormState {
    NormState {
        s_h: x.s_h / p.n_h,
        i_h: x.i_h / p.n_h,
        r_h: x.r_h / p.n_h,
        a_m: x.a_m / (p.k * p.n_h),
        s_m: x.s_m / (p.m * p.n_h),
        i_m: x.i_m / (p.m * p.n_h),
    }
}

/// Inverse of [`normalize`].
pub fn denormalize(x: &NormState, p: &EpiParams) -> FullState {
    FullState {
        s_h: x.s_h * p.n_h,
        i_h: x.i_h * p.n_h,
        r_h: x.r_h * p.n_h,
        a_m: x.a_m * (p.k * p.n_h),
        s_m: x.s_m * (p.m * p.n_h),
        i_m: x.i_m * (p.m * p.n_h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn default_params_match_reference_values() {
        let p = default_params();
        assert_eq!(p.n_h, 480_000.0);
        assert_eq!(p.b, 0.8);
        assert_eq!(p.beta_mh, 0.375);
        assert_eq!(p.beta_hm, 0.375);
        assert_eq!(p.eta_h, 1.0 / 3.0);
        assert_eq!(p.mu_m, 0.1);
        assert_eq!(p.phi, 6.0);
        assert_eq!(p.mu_a, 0.25);
        assert_eq!(p.eta_a, 0.08);
        assert_eq!(p.m, 3.0);
        assert_eq!(p.k, 3.0);
        // 71-year lifespan in days
        assert_relative_eq!(p.mu_h, 3.8588e-5, max_relative = 1e-4);
        assert_eq!(p.mu_h, 1.0 / 25_915.0);
        p.validate().unwrap();
    }

    #[test]
    fn disease_free_mosquito_free_point_is_stationary_for_humans() {
        let p = default_params();
        let x = FullState {
            s_h: p.n_h,
            i_h: 0.0,
            r_h: 0.0,
            a_m: 0.0,
            s_m: 0.0,
            i_m: 0.0,
        };
        let dx = rhs_full(0.0, &x, &ControlTriple::NO_CONTROL, &p).unwrap();
        assert_abs_diff_eq!(dx.s_h, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dx.i_h, 0.0);
        assert_abs_diff_eq!(dx.r_h, 0.0);
    }

    #[test]
    fn infection_inflow_hand_value() {
        // All humans susceptible, mosquitoes all infected at m per human:
        // new infections arrive at b * beta_mh * m * n_h per day.
        let p = default_params();
        let x = FullState {
            s_h: p.n_h,
            i_h: 0.0,
            r_h: 0.0,
            a_m: 0.0,
            s_m: 0.0,
            i_m: p.m * p.n_h,
        };
        let dx = rhs_full(0.0, &x, &ControlTriple::NO_CONTROL, &p).unwrap();
        assert_relative_eq!(dx.i_h, 432_000.0, max_relative = 1e-12);
    }

    #[test]
    fn norm_rhs_at_reference_initial_point() {
        let p = default_params();
        let x = normalized_initial_state();
        let dx = rhs_norm(0.0, &x, &ControlTriple::NO_CONTROL, &p).unwrap();
        // No infected mosquitoes yet, so infections only decay.
        assert_relative_eq!(dx.i_h, -(p.eta_h + p.mu_h) * 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn rhs_rejects_nonpositive_alpha() {
        let p = default_params();
        let u = ControlTriple {
            c_a: 0.0,
            c_m: 0.0,
            alpha: 0.0,
        };
        let x = normalized_initial_state();
        assert!(rhs_norm(0.0, &x, &u, &p).is_err());
        assert!(rhs_full(0.0, &denormalize(&x, &p), &u, &p).is_err());
    }

    #[test]
    fn normalize_unit_examples() {
        let p = default_params();
        let x = FullState {
            s_h: p.n_h,
            i_h: 0.0,
            r_h: 0.0,
            a_m: 0.0,
            s_m: 0.0,
            i_m: 0.0,
        };
        let n = normalize(&x, &p);
        assert_eq!(n.s_h, 1.0);
        assert_eq!(n.a_m, 0.0);

        let n = NormState {
            s_h: 0.0,
            i_h: 0.0,
            r_h: 0.0,
            a_m: 1.0,
            s_m: 0.0,
            i_m: 0.0,
        };
        let f = denormalize(&n, &p);
        assert_eq!(f.a_m, 1_440_000.0);
    }

    fn arb_control() -> impl Strategy<Value = ControlTriple> {
        (0.0..=1.0f64, 0.0..=1.0f64, 0.01..=1.0f64).prop_map(|(c_a, c_m, alpha)| ControlTriple {
            c_a,
            c_m,
            alpha,
        })
    }

    fn arb_full_state(n_h: f64) -> impl Strategy<Value = FullState> {
        // Human compartments summing to n_h, mosquito counts in plausible ranges.
        (
            0.0..=1.0f64,
            0.0..=1.0f64,
            0.0..=5.0f64,
            0.0..=5.0f64,
            0.0..=5.0f64,
        )
            .prop_map(move |(a, b, am, sm, im)| {
                let s_h = n_h * a;
                let i_h = (n_h - s_h) * b;
                let r_h = n_h - s_h - i_h;
                FullState {
                    s_h,
                    i_h,
                    r_h,
                    a_m: am * n_h,
                    s_m: sm * n_h,
                    i_m: im * n_h,
                }
            })
    }

    proptest! {
        #[test]
        fn human_population_is_conserved(x in arb_full_state(480_000.0), u in arb_control()) {
            let p = default_params();
            let dx = rhs_full(0.0, &x, &u, &p).unwrap();
            // cancellation of count-scale terms leaves ~eps * n_h roundoff
            prop_assert!((dx.s_h + dx.i_h + dx.r_h).abs() <= 1e-9 * p.n_h);
            let dn = rhs_norm(0.0, &normalize(&x, &p), &u, &p).unwrap();
            prop_assert!((dn.s_h + dn.i_h + dn.r_h).abs() <= 1e-14);
        }

        #[test]
        fn norm_rhs_is_scaled_full_rhs(x in arb_full_state(480_000.0), u in arb_control()) {
            // Differentiating the scale map commutes with the dynamics.
            let p = default_params();
            let dx_full = rhs_full(0.0, &x, &u, &p).unwrap();
            let dx_scaled = normalize(&dx_full, &p);
            let dx_norm = rhs_norm(0.0, &normalize(&x, &p), &u, &p).unwrap();
            let a = dx_scaled.to_array();
            let b = dx_norm.to_array();
            for i in 0..STATE_DIM {
                let tol = 1e-12 * (1.0 + a[i].abs().max(b[i].abs()));
                prop_assert!((a[i] - b[i]).abs() <= tol, "component {i}: {} vs {}", a[i], b[i]);
            }
        }

        #[test]
        fn round_trip_scale_maps(x in arb_full_state(480_000.0)) {
            let p = default_params();
            let back = denormalize(&normalize(&x, &p), &p);
            let a = x.to_array();
            let b = back.to_array();
            for i in 0..STATE_DIM {
                prop_assert!((a[i] - b[i]).abs() <= 1e-12 * (1.0 + a[i].abs()));
            }
        }

        #[test]
        fn vanishing_component_never_pushed_negative(
            x in arb_full_state(480_000.0),
            u in arb_control(),
            zeroed in 0usize..STATE_DIM,
        ) {
            // Forward invariance of the nonnegative orthant: on each boundary
            // face the flow points inward (or along it).
            let p = default_params();
            let mut arr = x.to_array();
            arr[zeroed] = 0.0;
            let dx = rhs_full(0.0, &FullState::from_array(arr), &u, &p).unwrap();
            prop_assert!(dx.to_array()[zeroed] >= 0.0);

            let mut narr = normalize(&x, &p).to_array();
            narr[zeroed] = 0.0;
            let dn = rhs_norm(0.0, &NormState::from_array(narr), &u, &p).unwrap();
            prop_assert!(dn.to_array()[zeroed] >= 0.0);
        }
    }
}
