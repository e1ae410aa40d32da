//! Second-order unicycle relative to a static obstacle at the origin.
//!
//! Numeric state is `[d, v, α, β]` (distance, speed, relative heading,
//! azimuth) with control `[a, w]`, `a = v̇` and `w = α̇`. The symbolic model
//! used for synthesis replaces α by `sin_a`, `cos_a` tied by
//! `sin_a² + cos_a² - 1 = 0` and drops β, which no safety-index derivative
//! depends on. Symbolic state order: `[d, sin_a, cos_a, v]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ModelSpec, NumericDynamics, SymbolicSystem, SystemError};
use crate::polynomial::{parse_poly, Polynomial, Vars};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicycleParams {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub dt: f64,
    /// Obstacle clearance radius.
    pub d_min: f64,
}

impl Default for UnicycleParams {
    fn default() -> Self {
        Self {
            v_min: -1.0,
            v_max: 1.0,
            w_min: -1.0,
            w_max: 1.0,
            dt: 0.01,
            d_min: 1.0,
        }
    }
}

impl UnicycleParams {
    pub fn model_spec(&self) -> ModelSpec {
        let constants: BTreeMap<String, f64> = [
            ("v_min", self.v_min),
            ("v_max", self.v_max),
            ("w_min", self.w_min),
            ("w_max", self.w_max),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let s = |x: &str| x.to_string();
        ModelSpec {
            state_vars: vec![s("d"), s("sin_a"), s("cos_a"), s("v")],
            f: vec![s("-v*cos_a"), s("0"), s("0"), s("0")],
            g: vec![
                vec![s("0"), s("0")],
                vec![s("0"), s("cos_a")],
                vec![s("0"), s("-sin_a")],
                vec![s("1"), s("0")],
            ],
            u_lower: vec![s("v_min*dt^-1 - v*dt^-1"), s("w_min")],
            u_upper: vec![s("v_max*dt^-1 - v*dt^-1"), s("w_max")],
            h: vec![s("d"), s("-v^2 + v_min*v + v_max*v - v_min*v_max")],
            zeta: vec![s("sin_a^2 + cos_a^2 - 1")],
            dt: self.dt,
            constants,
        }
    }

    /// φ₀ = d_min - d as a literal.
    pub fn phi0_literal(&self) -> String {
        format!("{} - d", self.d_min)
    }
}

/// Builds the symbolic unicycle, registering `d, sin_a, cos_a, v` in `vars`.
pub fn symbolic<T: Scalar>(
    vars: &mut Vars,
    params: &UnicycleParams,
) -> Result<SymbolicSystem<T>, SystemError> {
    params.model_spec().build(vars)
}

/// φ₀ = d_min - d (requires the symbolic model's variables in `vars`).
pub fn phi0<T: Scalar>(vars: &Vars, params: &UnicycleParams) -> Result<Polynomial<T>, SystemError> {
    Ok(parse_poly(
        &params.phi0_literal(),
        vars,
        &Default::default(),
    )?)
}

/// `[d, v, α, β]` → `[d, sin α, cos α, v]`.
pub fn to_symbolic_state<T: Scalar>(rel: &[T]) -> [T; 4] {
    let (d, v, alpha) = (rel[0], rel[1], rel[2]);
    [d, alpha.sin(), alpha.cos(), v]
}

/// Pushes a relative-state derivative through the `(d, v, α)` → `(d, sin, cos, v)` map.
pub fn to_symbolic_rates<T: Scalar>(rel: &[T], rel_dot: &[T]) -> [T; 4] {
    let alpha = rel[2];
    [
        rel_dot[0],
        alpha.cos() * rel_dot[2],
        -alpha.sin() * rel_dot[2],
        rel_dot[1],
    ]
}

/// Numeric relative-coordinate unicycle over `[d, v, α, β]`.
#[derive(Debug, Clone, Copy)]
pub struct RelativeDynamics {
    pub params: UnicycleParams,
}

impl<T: Scalar> NumericDynamics<T> for RelativeDynamics {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn derivative(&self, rel: &[T], u: &[T]) -> Vec<T> {
        let (d, v, alpha) = (rel[0], rel[1], rel[2]);
        vec![-v * alpha.cos(), u[0], u[1], -v * alpha.sin() / d]
    }

    fn control_bounds(&self, rel: &[T]) -> (Vec<T>, Vec<T>) {
        let p = &self.params;
        let v = rel[1];
        let dt = T::lit(p.dt);
        (
            vec![(T::lit(p.v_min) - v) / dt, T::lit(p.w_min)],
            vec![(T::lit(p.v_max) - v) / dt, T::lit(p.w_max)],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symbolic_and_numeric_forms_agree() {
        let params = UnicycleParams::default();
        let mut vars = Vars::new();
        let sys: SymbolicSystem<f64> = symbolic(&mut vars, &params).unwrap();
        let num = RelativeDynamics { params };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let rel = [
                rng.gen_range(0.05..6.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                rng.gen_range(-3.0..3.0),
            ];
            let x = to_symbolic_state(&rel);
            assert!(sys.in_state_space(&x));
            let (lo, hi) = sys.control_box(&x).unwrap();
            let (nlo, nhi) = num.control_bounds(&rel);
            for i in 0..2 {
                assert!((lo[i] - nlo[i]).abs() <= 1e-9 && (hi[i] - nhi[i]).abs() <= 1e-9);
            }
            let u = [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])];
            let sym = sys.dynamics(&x, &u).unwrap();
            let numeric = to_symbolic_rates(&rel, &num.derivative(&rel, &u));
            for (a, b) in sym.iter().zip(numeric) {
                assert!((a - b).abs() <= 1e-9, "{sym:?} vs {numeric:?}");
            }
        }
    }

    #[test]
    fn bounds_never_invert_inside_state_space() {
        let params = UnicycleParams::default();
        let mut vars = Vars::new();
        let sys: SymbolicSystem<f64> = symbolic(&mut vars, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let alpha: f64 = rng.gen_range(-3.2..3.2);
            let x = [rng.gen_range(0.0..8.0), alpha.sin(), alpha.cos(), rng.gen_range(-1.0..=1.0)];
            assert!(sys.in_state_space(&x));
            sys.control_box(&x).unwrap();
        }
    }

    #[test]
    fn phi0_is_clearance_margin() {
        let params = UnicycleParams::default();
        let mut vars = Vars::new();
        let sys: SymbolicSystem<f64> = symbolic(&mut vars, &params).unwrap();
        let p = phi0::<f64>(&vars, &params).unwrap();
        assert_eq!(sys.eval(&p, &[3.0, 0.0, 1.0, 0.2]).unwrap(), -2.0);
    }
}
