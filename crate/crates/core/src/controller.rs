//! Minimal-deviation safe control and the nominal navigation law.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::safety_index::{delta_rule, SafetyIndex};
use crate::scalar::Scalar;
use crate::sim::WorldState;
use crate::system::SystemError;

#[derive(Debug, Clone, PartialEq)]
pub struct SafeControlResult<T> {
    pub u: Vec<T>,
    /// `φ(x) ≥ 0`, so the derivative constraint was imposed.
    pub constraint_active: bool,
    pub phidot_achieved: T,
    /// Dual variable of the derivative constraint (0 when it does not bind).
    pub multiplier: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("no admissible control at state {state:?}: best achievable derivative {worst:.6e} > {bound:.6e}")]
    Infeasible {
        state: Vec<f64>,
        worst: f64,
        bound: f64,
    },
    #[error(transparent)]
    System(#[from] SystemError),
}

const MAX_BISECTIONS: usize = 200;

fn clip<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

fn point_at<T: Scalar>(mu: T, c: &[T], u_ref: &[T], lo: &[T], hi: &[T], out: &mut [T]) -> T {
    let mut dot = T::zero();
    for i in 0..c.len() {
        out[i] = clip(u_ref[i] - mu * c[i], lo[i], hi[i]);
        dot = dot + c[i] * out[i];
    }
    dot
}

/// Euclidean projection of `u_ref` onto `{lo ≤ u ≤ hi, c·u ≤ b}`.
///
/// Returns the projection and the multiplier of the linear constraint, or
/// `None` when the set is empty. The clipped point `clip(u_ref − μc)` has a
/// nonincreasing residual in `μ`; bisection brackets the root, then `μ` is
/// solved exactly with the saturation pattern fixed. The feasible bracket
/// end is kept if that solve lands outside by more than rounding.
pub fn project_halfspace_box<T: Scalar>(c: &[T], b: T, lo: &[T], hi: &[T], u_ref: &[T]) -> Option<(Vec<T>, T)> {
    let m = c.len();
    let mut u = vec![T::zero(); m];
    if point_at(T::zero(), c, u_ref, lo, hi, &mut u) <= b {
        return Some((u, T::zero()));
    }
    // beyond the last breakpoint every coordinate with c ≠ 0 is saturated
    let mut mu_hi = T::zero();
    for i in 0..m {
        if c[i] != T::zero() {
            let end = if c[i] > T::zero() { lo[i] } else { hi[i] };
            mu_hi = mu_hi.max((u_ref[i] - end) / c[i]);
        }
    }
    if point_at(mu_hi, c, u_ref, lo, hi, &mut u) > b {
        return None;
    }
    let tol = T::lit(1e-10) * mu_hi.max(T::one());
    let mut mu_lo = T::zero();
    for _ in 0..MAX_BISECTIONS {
        let mid = T::lit(0.5) * (mu_lo + mu_hi);
        if mu_hi - mu_lo <= tol || mid <= mu_lo || mid >= mu_hi {
            break;
        }
        if point_at(mid, c, u_ref, lo, hi, &mut u) > b {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
    }
    // exact root on the active set found at the bracket midpoint
    let mid = T::lit(0.5) * (mu_lo + mu_hi);
    let (mut num, mut den, mut scale) = (-b, T::zero(), b.abs());
    for i in 0..m {
        let x = u_ref[i] - mid * c[i];
        if x <= lo[i] {
            num = num + c[i] * lo[i];
        } else if x >= hi[i] {
            num = num + c[i] * hi[i];
        } else {
            num = num + c[i] * u_ref[i];
            den = den + c[i] * c[i];
        }
        scale = scale + (c[i] * u_ref[i]).abs() + (c[i] * lo[i]).abs().max((c[i] * hi[i]).abs());
    }
    let mut mu = mu_hi;
    if den > T::zero() {
        let exact = (num / den).max(mu_lo).min(mu_hi);
        if point_at(exact, c, u_ref, lo, hi, &mut u) - b <= T::epsilon() * T::lit(16.0) * scale {
            mu = exact;
        }
    }
    point_at(mu, c, u_ref, lo, hi, &mut u);
    Some((u, mu))
}

/// Safe control law: clamp `u_ref` to the box when `φ(x) < 0`, otherwise
/// project it onto the box intersected with `φ̇(x, u) ≤ −η`.
pub fn safe_control<T: Scalar>(
    idx: &SafetyIndex<T>,
    state: &[T],
    u_ref: &[T],
) -> Result<SafeControlResult<T>, ControlError> {
    let (lo, hi) = idx.system().control_box(state)?;
    let (lf, lg) = idx.lie(state);
    if idx.phi(state) < T::zero() {
        let u: Vec<T> = (0..lo.len()).map(|i| clip(u_ref[i], lo[i], hi[i])).collect();
        return Ok(SafeControlResult {
            phidot_achieved: idx.phidot(state, &u),
            u,
            constraint_active: false,
            multiplier: T::zero(),
        });
    }
    let eta = idx.params().eta();
    let b = -eta - lf;
    let infeasible = || {
        let (worst, _) = delta_rule(lf, &lg, &lo, &hi);
        ControlError::Infeasible {
            state: state.iter().map(|x| x.to_f64_lossy()).collect(),
            worst: worst.to_f64_lossy(),
            bound: (-eta).to_f64_lossy(),
        }
    };
    let (u, multiplier) = project_halfspace_box(&lg, b, &lo, &hi, u_ref).ok_or_else(infeasible)?;
    Ok(SafeControlResult {
        phidot_achieved: idx.phidot(state, &u),
        u,
        constraint_active: true,
        multiplier,
    })
}

/// Gains of the proportional navigation law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NominalGains {
    pub speed: f64,
    pub heading: f64,
    /// Cruise speed as a fraction of `v_max`.
    pub cruise_fraction: f64,
}

impl Default for NominalGains {
    fn default() -> Self {
        Self {
            speed: 1.0,
            heading: 2.0,
            cruise_fraction: 0.8,
        }
    }
}

pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let pi = T::lit(std::f64::consts::PI);
    let two_pi = pi + pi;
    let r = (a + pi) % two_pi;
    if r < T::zero() {
        r + two_pi - pi
    } else {
        r - pi
    }
}

/// Proportional law toward `goal`: `a` tracks a desired speed that falls off
/// with heading error and near the goal, `w` steers onto the goal bearing.
/// The output is clamped to `[lo, hi]` (control order `[a, w]`).
pub fn nominal_control<T: Scalar>(
    world: &WorldState<T>,
    goal: [T; 2],
    gains: &NominalGains,
    v_max: T,
    lo: &[T],
    hi: &[T],
) -> Vec<T> {
    let dx = goal[0] - world.position[0];
    let dy = goal[1] - world.position[1];
    let dist = dx.hypot(dy);
    let err = wrap_angle(dy.atan2(dx) - world.heading);
    let cruise = T::lit(gains.cruise_fraction) * v_max;
    let v_des = cruise * err.cos().max(T::zero()) * dist.min(T::one());
    let a = T::lit(gains.speed) * (v_des - world.speed);
    let w = T::lit(gains.heading) * err;
    vec![clip(a, lo[0], hi[0]), clip(w, lo[1], hi[1])]
}
