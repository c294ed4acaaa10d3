//! Basic reproduction number under vector control.
//!
//! Two independent routes to the same quantity: a closed-form expression in
//! the model rates, and a numerically assembled next-generation matrix at
//! the disease-free equilibrium. Their agreement is a standing test of the
//! closed form. On top of the point evaluations sit 2-D control sweeps and
//! the curves where the reproduction number crosses one.

use crate::model::{ControlTriple, EpiParams, ModelError};
use crate::policy::ControlBounds;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum R0Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("transition matrix is singular (degenerate rates)")]
    SingularTransition,
}

/// Net viability factor of the vector population: recruitment into the
/// adult stage against aquatic and adult removal,
/// `eta_a * phi - (eta_a + mu_a + c_a) * (mu_m + c_m)`.
///
/// Nonpositive values mean the mosquito population collapses and no
/// disease transmission is possible.
pub fn mosquito_factor(u: &ControlTriple, p: &EpiParams) -> f64 {
    p.eta_a * p.phi - (p.eta_a + p.mu_a + u.c_a) * (p.mu_m + u.c_m)
}

/// Closed-form basic reproduction number.
///
/// With `M = mosquito_factor`:
/// `R0 = sqrt(alpha * k * b^2 * beta_hm * beta_mh * M
///            / (phi * (eta_h + mu_h) * (c_m + mu_m)^2))`
/// and `R0 = 0` when `M <= 0` (extinct vector population).
pub fn r0_closed_form(u: &ControlTriple, p: &EpiParams) -> f64 {
    let m_factor = mosquito_factor(u, p);
    if m_factor <= 0.0 {
        return 0.0;
    }
    let num = u.alpha * p.k * p.b * p.b * p.beta_hm * p.beta_mh * m_factor;
    let den = p.phi * (p.eta_h + p.mu_h) * (u.c_m + p.mu_m) * (u.c_m + p.mu_m);
    (num / den).sqrt()
}

/// Basic reproduction number via the next-generation matrix.
///
/// Computes the disease-free equilibrium of the normalized system, splits
/// the linearized infected subsystem `(i_h, i_m)` into new-infection matrix
/// `F` and transition matrix `V`, and returns the spectral radius of
/// `F * V^-1`. Serves as the independent oracle for [`r0_closed_form`].
pub fn r0_ngm(u: &ControlTriple, p: &EpiParams) -> Result<f64, R0Error> {
    p.validate()?;
    u.validate()?;

    // Disease-free equilibrium in normalized coordinates. The aquatic
    // fraction solves the logistic balance; at or below zero the vector
    // population is extinct.
    let removal = (p.eta_a + p.mu_a + u.c_a) * (p.mu_m + u.c_m) / (p.phi * p.eta_a);
    let a_m_star = (u.alpha * (1.0 - removal)).max(0.0);
    let s_m_star = (p.k / p.m) * p.eta_a * a_m_star / (p.mu_m + u.c_m);
    let s_h_star = 1.0;

    // New infections in (i_h, i_m).
    let f = [
        [0.0, p.b * p.beta_mh * p.m * s_h_star],
        [p.b * p.beta_hm * s_m_star, 0.0],
    ];
    // Outflow transitions (recovery/mortality, adult removal).
    let v = [[p.eta_h + p.mu_h, 0.0], [0.0, p.mu_m + u.c_m]];

    let det_v = v[0][0] * v[1][1] - v[0][1] * v[1][0];
    if det_v.abs() < f64::MIN_POSITIVE || !det_v.is_finite() {
        return Err(R0Error::SingularTransition);
    }
    let v_inv = [
        [v[1][1] / det_v, -v[0][1] / det_v],
        [-v[1][0] / det_v, v[0][0] / det_v],
    ];
    let k_mat = [
        [
            f[0][0] * v_inv[0][0] + f[0][1] * v_inv[1][0],
            f[0][0] * v_inv[0][1] + f[0][1] * v_inv[1][1],
        ],
        [
            f[1][0] * v_inv[0][0] + f[1][1] * v_inv[1][0],
            f[1][0] * v_inv[0][1] + f[1][1] * v_inv[1][1],
        ],
    ];
    Ok(spectral_radius_2x2(&k_mat))
}

fn spectral_radius_2x2(a: &[[f64; 2]; 2]) -> f64 {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        ((tr + root) / 2.0).abs().max(((tr - root) / 2.0).abs())
    } else {
        // complex pair with modulus sqrt(det)
        det.sqrt()
    }
}

/// Control pair spanned by a sweep; the third control is held fixed.
/// The first named control is the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPair {
    /// x = adulticide `c_m`, y = larvicide `c_a`.
    CmCa,
    /// x = adulticide `c_m`, y = mechanical `alpha`.
    CmAlpha,
    /// x = larvicide `c_a`, y = mechanical `alpha`.
    CaAlpha,
}

impl SweepPair {
    pub fn x_name(self) -> &'static str {
        match self {
            SweepPair::CmCa | SweepPair::CmAlpha => "c_m",
            SweepPair::CaAlpha => "c_A",
        }
    }

    pub fn y_name(self) -> &'static str {
        match self {
            SweepPair::CmCa => "c_A",
            SweepPair::CmAlpha | SweepPair::CaAlpha => "alpha",
        }
    }

    pub fn fixed_name(self) -> &'static str {
        match self {
            SweepPair::CmCa => "alpha",
            SweepPair::CmAlpha => "c_A",
            SweepPair::CaAlpha => "c_m",
        }
    }

    /// No-intervention value of the fixed third control.
    pub fn fixed_default(self) -> f64 {
        match self {
            SweepPair::CmCa => 1.0,
            SweepPair::CmAlpha | SweepPair::CaAlpha => 0.0,
        }
    }

    fn triple(self, x: f64, y: f64, fixed: f64) -> ControlTriple {
        match self {
            SweepPair::CmCa => ControlTriple {
                c_a: y,
                c_m: x,
                alpha: fixed,
            },
            SweepPair::CmAlpha => ControlTriple {
                c_a: fixed,
                c_m: x,
                alpha: y,
            },
            SweepPair::CaAlpha => ControlTriple {
                c_a: x,
                c_m: fixed,
                alpha: y,
            },
        }
    }

    fn axis(name: &'static str, bounds: &ControlBounds, resolution: usize) -> Vec<f64> {
        let (lo, hi) = match name {
            "c_m" => bounds.c_m,
            "c_A" => bounds.c_a,
            _ => bounds.alpha,
        };
        (0..resolution)
            .map(|j| lo + (hi - lo) * j as f64 / (resolution - 1) as f64)
            .collect()
    }
}

/// Reproduction-number values over a 2-D control grid, row-major in
/// `(y, x)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct R0Grid {
    pub x_name: &'static str,
    pub x: Vec<f64>,
    pub y_name: &'static str,
    pub y: Vec<f64>,
    pub fixed_name: &'static str,
    pub fixed_value: f64,
    pub values: Vec<f64>,
}

impl R0Grid {
    pub fn at(&self, iy: usize, ix: usize) -> f64 {
        self.values[iy * self.x.len() + ix]
    }
}

/// Evaluates [`r0_closed_form`] over a `resolution x resolution` grid of the
/// chosen control pair, third control fixed. Rows are computed in parallel;
/// output ordering is deterministic.
pub fn sweep(
    pair: SweepPair,
    fixed_value: f64,
    resolution: usize,
    p: &EpiParams,
    bounds: &ControlBounds,
) -> R0Grid {
    assert!(resolution >= 2, "sweep needs at least a 2x2 grid");
    let xs = SweepPair::axis(pair.x_name(), bounds, resolution);
    let ys = SweepPair::axis(pair.y_name(), bounds, resolution);
    let values: Vec<f64> = ys
        .par_iter()
        .flat_map_iter(|&y| {
            let xs = &xs;
            xs.iter()
                .map(move |&x| r0_closed_form(&pair.triple(x, y, fixed_value), p))
        })
        .collect();
    R0Grid {
        x_name: pair.x_name(),
        x: xs,
        y_name: pair.y_name(),
        y: ys,
        fixed_name: pair.fixed_name(),
        fixed_value,
        values,
    }
}

/// Locus where the reproduction number equals one, in the plane of a sweep
/// pair. Points are `(second control, required first control)`: for each
/// grid value of the pair's second control the first control is bisected
/// (to 1e-10) to the unit level set, `None` when no crossing exists inside
/// its box.
pub fn threshold_curve(
    pair: SweepPair,
    fixed_value: f64,
    resolution: usize,
    p: &EpiParams,
    bounds: &ControlBounds,
) -> Vec<(f64, Option<f64>)> {
    assert!(resolution >= 2);
    let xs = SweepPair::axis(pair.y_name(), bounds, resolution);
    let (y_lo, y_hi) = match pair.x_name() {
        "c_A" => bounds.c_a,
        "alpha" => bounds.alpha,
        _ => bounds.c_m,
    };
    xs.into_iter()
        .map(|x| {
            // `triple` takes the pair's first control first, which is the
            // solved variable here.
            let eval = |y: f64| r0_closed_form(&pair.triple(y, x, fixed_value), p) - 1.0;
            let (mut a, mut b) = (y_lo, y_hi);
            let (fa, fb) = (eval(a), eval(b));
            if fa == 0.0 {
                return (x, Some(a));
            }
            if fb == 0.0 {
                return (x, Some(b));
            }
            if fa.signum() == fb.signum() {
                return (x, None);
            }
            // bisection; interval halves 60 times -> width ~1e-18
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let fm = eval(mid);
                if fm == 0.0 {
                    return (x, Some(mid));
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
                if (b - a).abs() <= 1e-10 {
                    break;
                }
            }
            (x, Some(0.5 * (a + b)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_params;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mosquito_factor_reference_value() {
        let p = default_params();
        let m = mosquito_factor(&ControlTriple::NO_CONTROL, &p);
        assert_relative_eq!(m, 0.447, max_relative = 1e-12);
    }

    #[test]
    fn mosquito_factor_root_by_construction() {
        let p = default_params();
        // pick c_a so that removal exactly balances recruitment
        let c_a = p.eta_a * p.phi / p.mu_m - p.eta_a - p.mu_a;
        let u = ControlTriple {
            c_a,
            c_m: 0.0,
            alpha: 1.0,
        };
        assert_abs_diff_eq!(mosquito_factor(&u, &p), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mosquito_factor_decreases_in_both_insecticides() {
        let p = default_params();
        let base = mosquito_factor(&ControlTriple::NO_CONTROL, &p);
        for (c_a, c_m) in [(0.1, 0.0), (0.0, 0.1), (0.3, 0.3)] {
            let u = ControlTriple {
                c_a,
                c_m,
                alpha: 1.0,
            };
            assert!(mosquito_factor(&u, &p) < base);
        }
    }

    #[test]
    fn baseline_r0_both_routes() {
        let p = default_params();
        let closed = r0_closed_form(&ControlTriple::NO_CONTROL, &p);
        let ngm = r0_ngm(&ControlTriple::NO_CONTROL, &p).unwrap();
        assert_abs_diff_eq!(closed, 2.4564, epsilon = 5e-4);
        assert_relative_eq!(closed, ngm, max_relative = 1e-10);
    }

    #[test]
    fn extinct_vector_gives_zero() {
        let p = default_params();
        let u = ControlTriple {
            c_a: 1.0,
            c_m: 1.0,
            alpha: 1.0,
        };
        assert!(mosquito_factor(&u, &p) < 0.0);
        assert_eq!(r0_closed_form(&u, &p), 0.0);
        assert_abs_diff_eq!(r0_ngm(&u, &p).unwrap(), 0.0, epsilon = 1e-300);
    }

    #[test]
    fn continuous_at_vector_viability_boundary() {
        let p = default_params();
        // c_m such that the mosquito factor is exactly zero at c_a = 0
        let c_m_star = p.eta_a * p.phi / (p.eta_a + p.mu_a) - p.mu_m;
        for eps in [1e-6, 1e-9, 1e-12] {
            let u = ControlTriple {
                c_a: 0.0,
                c_m: c_m_star - eps,
                alpha: 1.0,
            };
            let r = r0_closed_form(&u, &p);
            assert!(r > 0.0 && r < 1e-2, "R0 = {r} near the boundary");
        }
    }

    #[test]
    fn sqrt_alpha_proportionality() {
        let p = default_params();
        let r_full = r0_closed_form(&ControlTriple::NO_CONTROL, &p);
        let u = ControlTriple {
            c_a: 0.0,
            c_m: 0.0,
            alpha: 0.25,
        };
        assert_relative_eq!(r0_closed_form(&u, &p) / r_full, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn adulticide_threshold_near_reference_root() {
        // with no larvicide, adulticide alone crosses the epidemic
        // threshold at roughly 13.3% coverage
        let p = default_params();
        let curve = threshold_curve(SweepPair::CmCa, 1.0, 11, &p, &ControlBounds::default());
        assert_eq!(curve[0].0, 0.0);
        let c_m_at_zero_larvicide = curve[0].1.expect("crossing must exist at c_A = 0");
        assert_abs_diff_eq!(c_m_at_zero_larvicide, 0.133, epsilon = 1e-3);
        // stronger larvicide lowers the required adulticide
        let mut prev = f64::INFINITY;
        for (_, y) in &curve {
            let y = y.expect("crossing exists across the whole c_A axis");
            assert!(y < prev);
            prev = y;
        }
    }

    #[test]
    fn threshold_curve_points_sit_on_unit_level_set() {
        let p = default_params();
        let bounds = ControlBounds::default();
        // points are (alpha, c_m solving r0 = 1) at fixed c_a = 0
        let curve = threshold_curve(SweepPair::CmAlpha, 0.0, 21, &p, &bounds);
        let mut crossings = 0;
        for (alpha, c_m) in curve {
            if let Some(c_m) = c_m {
                crossings += 1;
                let u = ControlTriple {
                    c_a: 0.0,
                    c_m,
                    alpha,
                };
                assert_abs_diff_eq!(r0_closed_form(&u, &p), 1.0, epsilon = 1e-8);
            }
        }
        assert!(crossings > 0, "expected at least one crossing");
    }

    #[test]
    fn sweep_grid_shape_and_monotonicity() {
        let p = default_params();
        let bounds = ControlBounds::default();
        let grid = sweep(SweepPair::CmCa, 1.0, 31, &p, &bounds);
        assert_eq!(grid.values.len(), 31 * 31);
        assert_relative_eq!(grid.at(0, 0), 2.45638, max_relative = 1e-4);
        for iy in 0..31 {
            for ix in 1..31 {
                assert!(grid.at(iy, ix) <= grid.at(iy, ix - 1) + 1e-14);
            }
        }
        for ix in 0..31 {
            for iy in 1..31 {
                assert!(grid.at(iy, ix) <= grid.at(iy - 1, ix) + 1e-14);
            }
        }
        assert!(grid.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn closed_form_matches_ngm_on_random_draws() {
        let p0 = default_params();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 200 {
            let mut p = p0.clone();
            let jitter = |rng: &mut ChaCha8Rng| 0.5 + 1.0 * rng.gen::<f64>();
            p.b *= jitter(&mut rng);
            p.phi *= jitter(&mut rng);
            p.mu_m *= jitter(&mut rng);
            p.mu_a *= jitter(&mut rng);
            p.eta_a *= jitter(&mut rng);
            p.eta_h *= jitter(&mut rng);
            p.beta_mh = rng.gen::<f64>();
            p.beta_hm = rng.gen::<f64>();
            let u = ControlTriple {
                c_a: rng.gen(),
                c_m: rng.gen(),
                alpha: 0.01 + 0.99 * rng.gen::<f64>(),
            };
            if p.beta_mh == 0.0 || p.beta_hm == 0.0 || mosquito_factor(&u, &p) <= 0.0 {
                continue;
            }
            checked += 1;
            let closed = r0_closed_form(&u, &p);
            let ngm = r0_ngm(&u, &p).unwrap();
            assert_relative_eq!(closed, ngm, max_relative = 1e-8);
        }
    }
}
