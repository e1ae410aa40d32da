//! Control-affine systems `ẋ = f(x) + g(x)u` with state-dependent box limits
//! `u̲(x) ≤ u ≤ ū(x)`, state constraints `hᵢ(x) ≥ 0` and identities `ζₗ(x) = 0`.

mod model_json;
pub mod unicycle;

use thiserror::Error;

use crate::polynomial::{CompiledPoly, PolyError, Polynomial, VarId};
use crate::scalar::Scalar;

pub use model_json::ModelSpec;

/// Tolerance used for state-space membership.
pub const STATE_SPACE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} must be a polynomial in the state variables only")]
    NotStatePolynomial { what: String },
    #[error("inverted control bound in dimension {dim}: lower {lower} > upper {upper} at state {state:?}")]
    InvertedBound {
        dim: usize,
        lower: f64,
        upper: f64,
        state: Vec<f64>,
    },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("model: {0}")]
    Model(String),
}

/// Symbolic control-affine model used for synthesis.
#[derive(Debug, Clone)]
pub struct SymbolicSystem<T> {
    state_vars: Vec<VarId>,
    control_dims: usize,
    f: Vec<Polynomial<T>>,
    g: Vec<Vec<Polynomial<T>>>,
    lower: Vec<Polynomial<T>>,
    upper: Vec<Polynomial<T>>,
    h: Vec<Polynomial<T>>,
    zeta: Vec<Polynomial<T>>,
}

pub struct SystemParts<T> {
    pub state_vars: Vec<VarId>,
    pub f: Vec<Polynomial<T>>,
    pub g: Vec<Vec<Polynomial<T>>>,
    pub lower: Vec<Polynomial<T>>,
    pub upper: Vec<Polynomial<T>>,
    pub h: Vec<Polynomial<T>>,
    pub zeta: Vec<Polynomial<T>>,
}

impl<T: Scalar> SymbolicSystem<T> {
    pub fn new(parts: SystemParts<T>) -> Result<Self, SystemError> {
        let SystemParts {
            state_vars,
            f,
            g,
            lower,
            upper,
            h,
            zeta,
        } = parts;
        let n = state_vars.len();
        if state_vars.iter().any(|v| !v.is_state()) {
            return Err(SystemError::Dimension(
                "state_vars must all be state-class variables".into(),
            ));
        }
        if f.len() != n || g.len() != n {
            return Err(SystemError::Dimension(format!(
                "f has {} rows and g has {} rows for {n} state variables",
                f.len(),
                g.len()
            )));
        }
        let nu = lower.len();
        if upper.len() != nu || nu == 0 {
            return Err(SystemError::Dimension(format!(
                "{} lower and {} upper control bounds",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(row) = g.iter().position(|r| r.len() != nu) {
            return Err(SystemError::Dimension(format!(
                "g row {row} has {} columns, expected {nu}",
                g[row].len()
            )));
        }
        let check = |what: String, p: &Polynomial<T>| -> Result<(), SystemError> {
            if p.vars().iter().all(|v| state_vars.contains(v)) {
                Ok(())
            } else {
                Err(SystemError::NotStatePolynomial { what })
            }
        };
        for (i, p) in f.iter().enumerate() {
            check(format!("f[{i}]"), p)?;
        }
        for (i, row) in g.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                check(format!("g[{i}][{j}]"), p)?;
            }
        }
        for (i, p) in lower.iter().enumerate() {
            check(format!("u_lower[{i}]"), p)?;
        }
        for (i, p) in upper.iter().enumerate() {
            check(format!("u_upper[{i}]"), p)?;
        }
        for (i, p) in h.iter().enumerate() {
            check(format!("h[{i}]"), p)?;
        }
        for (i, p) in zeta.iter().enumerate() {
            check(format!("zeta[{i}]"), p)?;
        }
        Ok(Self {
            state_vars,
            control_dims: nu,
            f,
            g,
            lower,
            upper,
            h,
            zeta,
        })
    }

    pub fn state_vars(&self) -> &[VarId] {
        &self.state_vars
    }

    pub fn state_dim(&self) -> usize {
        self.state_vars.len()
    }

    pub fn control_dims(&self) -> usize {
        self.control_dims
    }

    pub fn f(&self) -> &[Polynomial<T>] {
        &self.f
    }

    pub fn g(&self) -> &[Vec<Polynomial<T>>] {
        &self.g
    }

    pub fn lower(&self) -> &[Polynomial<T>] {
        &self.lower
    }

    pub fn upper(&self) -> &[Polynomial<T>] {
        &self.upper
    }

    pub fn constraints(&self) -> &[Polynomial<T>] {
        &self.h
    }

    pub fn identities(&self) -> &[Polynomial<T>] {
        &self.zeta
    }

    /// Position of `v` in the state vector.
    pub fn slot(&self, v: VarId) -> Option<usize> {
        self.state_vars.iter().position(|&w| w == v)
    }

    /// Evaluates a state polynomial at a state vector.
    pub fn eval(&self, p: &Polynomial<T>, state: &[T]) -> Result<T, PolyError> {
        p.eval_with(|v| self.slot(v).map(|i| state[i]))
    }

    pub fn compile(&self, p: &Polynomial<T>) -> Result<CompiledPoly<T>, PolyError> {
        p.compile(|v| self.slot(v))
    }

    /// Per-dimension control limits at `state`.
    pub fn control_box(&self, state: &[T]) -> Result<(Vec<T>, Vec<T>), SystemError> {
        let lo = self
            .lower
            .iter()
            .map(|p| self.eval(p, state))
            .collect::<Result<Vec<_>, _>>()?;
        let hi = self
            .upper
            .iter()
            .map(|p| self.eval(p, state))
            .collect::<Result<Vec<_>, _>>()?;
        check_box(&lo, &hi, state)?;
        Ok((lo, hi))
    }

    /// `hᵢ(x) ≥ -1e-9` for all i and `|ζₗ(x)| ≤ 1e-9` for all l.
    pub fn in_state_space(&self, state: &[T]) -> bool {
        let tol = T::lit(STATE_SPACE_TOL);
        self.h
            .iter()
            .all(|p| self.eval(p, state).map(|v| v >= -tol).unwrap_or(false))
            && self
                .zeta
                .iter()
                .all(|p| self.eval(p, state).map(|v| v.abs() <= tol).unwrap_or(false))
    }

    /// `f(x) + g(x)u` evaluated symbolically.
    pub fn dynamics(&self, state: &[T], u: &[T]) -> Result<Vec<T>, PolyError> {
        (0..self.state_dim())
            .map(|i| {
                let mut acc = self.eval(&self.f[i], state)?;
                for (j, &uj) in u.iter().enumerate() {
                    acc = acc + self.eval(&self.g[i][j], state)? * uj;
                }
                Ok(acc)
            })
            .collect()
    }

    /// Lie derivatives `(L_f p, L_g p)` of a polynomial that may also contain
    /// decision variables.
    pub fn lie_derivatives(&self, p: &Polynomial<T>) -> (Polynomial<T>, Vec<Polynomial<T>>) {
        let mut lf = Polynomial::zero();
        let mut lg = vec![Polynomial::zero(); self.control_dims];
        for (i, &x) in self.state_vars.iter().enumerate() {
            let dp = p.partial(x);
            if dp.is_zero() {
                continue;
            }
            lf += &(&dp * &self.f[i]);
            for (j, lgj) in lg.iter_mut().enumerate() {
                *lgj += &(&dp * &self.g[i][j]);
            }
        }
        (lf, lg)
    }

    /// Compiled numeric view of the model.
    pub fn numeric(&self) -> Result<CompiledSystem<T>, PolyError> {
        let c = |p: &Polynomial<T>| self.compile(p);
        Ok(CompiledSystem {
            f: self.f.iter().map(c).collect::<Result<_, _>>()?,
            g: self
                .g
                .iter()
                .map(|row| row.iter().map(c).collect::<Result<_, _>>())
                .collect::<Result<_, _>>()?,
            lower: self.lower.iter().map(c).collect::<Result<_, _>>()?,
            upper: self.upper.iter().map(c).collect::<Result<_, _>>()?,
            h: self.h.iter().map(c).collect::<Result<_, _>>()?,
            zeta: self.zeta.iter().map(c).collect::<Result<_, _>>()?,
        })
    }
}

fn check_box<T: Scalar>(lo: &[T], hi: &[T], state: &[T]) -> Result<(), SystemError> {
    match lo.iter().zip(hi).position(|(l, h)| l > h) {
        Some(dim) => Err(SystemError::InvertedBound {
            dim,
            lower: lo[dim].to_f64_lossy(),
            upper: hi[dim].to_f64_lossy(),
            state: state.iter().map(|x| x.to_f64_lossy()).collect(),
        }),
        None => Ok(()),
    }
}

/// Numeric dynamics `ẋ = F(x, u)` with state-dependent control limits.
pub trait NumericDynamics<T> {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn derivative(&self, state: &[T], u: &[T]) -> Vec<T>;
    fn control_bounds(&self, state: &[T]) -> (Vec<T>, Vec<T>);
}

/// A [`SymbolicSystem`] lowered to compiled polynomials.
#[derive(Debug, Clone)]
pub struct CompiledSystem<T> {
    f: Vec<CompiledPoly<T>>,
    g: Vec<Vec<CompiledPoly<T>>>,
    lower: Vec<CompiledPoly<T>>,
    upper: Vec<CompiledPoly<T>>,
    h: Vec<CompiledPoly<T>>,
    zeta: Vec<CompiledPoly<T>>,
}

impl<T: Scalar> CompiledSystem<T> {
    pub fn control_box(&self, state: &[T]) -> Result<(Vec<T>, Vec<T>), SystemError> {
        let (lo, hi) = self.control_bounds(state);
        check_box(&lo, &hi, state)?;
        Ok((lo, hi))
    }

    pub fn in_state_space(&self, state: &[T]) -> bool {
        let tol = T::lit(STATE_SPACE_TOL);
        self.h.iter().all(|p| p.eval(state) >= -tol)
            && self.zeta.iter().all(|p| p.eval(state).abs() <= tol)
    }
}

impl<T: Scalar> NumericDynamics<T> for CompiledSystem<T> {
    fn state_dim(&self) -> usize {
        self.f.len()
    }

    fn control_dim(&self) -> usize {
        self.lower.len()
    }

    fn derivative(&self, state: &[T], u: &[T]) -> Vec<T> {
        self.f
            .iter()
            .zip(&self.g)
            .map(|(fi, gi)| {
                gi.iter()
                    .zip(u)
                    .fold(fi.eval(state), |acc, (gij, &uj)| acc + gij.eval(state) * uj)
            })
            .collect()
    }

    fn control_bounds(&self, state: &[T]) -> (Vec<T>, Vec<T>) {
        (
            self.lower.iter().map(|p| p.eval(state)).collect(),
            self.upper.iter().map(|p| p.eval(state)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::unicycle::UnicycleParams;
    use super::*;
    use crate::polynomial::Vars;

    fn unicycle() -> (Vars, SymbolicSystem<f64>) {
        let mut vars = Vars::new();
        let sys = unicycle::symbolic(&mut vars, &UnicycleParams::default()).unwrap();
        (vars, sys)
    }

    // state order: d, sin_a, cos_a, v
    fn state(d: f64, alpha: f64, v: f64) -> [f64; 4] {
        [d, alpha.sin(), alpha.cos(), v]
    }

    #[test]
    fn acceleration_bounds_depend_on_speed() {
        let (_, sys) = unicycle();
        let (lo, hi) = sys.control_box(&state(2.0, 0.3, 1.0)).unwrap();
        assert!((lo[0] + 200.0).abs() < 1e-9);
        assert!(hi[0].abs() < 1e-9);
        let (lo, hi) = sys.control_box(&state(2.0, 0.3, 0.0)).unwrap();
        assert!((lo[0] + 100.0).abs() < 1e-9 && (hi[0] - 100.0).abs() < 1e-9);
        for alpha in [-2.0, 0.0, 1.0] {
            let (lo, hi) = sys.control_box(&state(1.0, alpha, 0.4)).unwrap();
            assert_eq!((lo[1], hi[1]), (-1.0, 1.0));
        }
    }

    #[test]
    fn inverted_bound_names_dimension() {
        let mut vars = Vars::new();
        let x = vars.state("x").unwrap();
        let sys = SymbolicSystem::<f64>::new(SystemParts {
            state_vars: vec![x],
            f: vec![Polynomial::zero()],
            g: vec![vec![Polynomial::one()]],
            lower: vec![Polynomial::var(x)],
            upper: vec![Polynomial::constant(1.0)],
            h: vec![],
            zeta: vec![],
        })
        .unwrap();
        assert!(sys.control_box(&[0.5]).is_ok());
        let err = sys.control_box(&[2.0]).unwrap_err();
        assert!(matches!(err, SystemError::InvertedBound { dim: 0, .. }));
    }

    #[test]
    fn state_space_membership() {
        let (_, sys) = unicycle();
        assert!(sys.in_state_space(&state(2.0, 0.7, 0.5)));
        assert!(!sys.in_state_space(&state(2.0, 0.7, 1.5)));
        assert!(!sys.in_state_space(&[2.0, 0.6, 0.9, 0.5]));
    }

    #[test]
    fn lie_derivatives_of_distance_index() {
        let (vars, sys) = unicycle();
        let d = vars.get("d").unwrap();
        let phi0 = Polynomial::constant(1.0) - Polynomial::var(d);
        let (lf, lg) = sys.lie_derivatives(&phi0);
        // L_f(1 - d) = v cos α, control does not enter
        let x = state(3.0, 0.4, 0.7);
        assert!((sys.eval(&lf, &x).unwrap() - 0.7 * 0.4f64.cos()).abs() < 1e-12);
        assert!(lg.iter().all(Polynomial::is_zero));
    }

    #[test]
    fn compiled_matches_symbolic() {
        let (_, sys) = unicycle();
        let num = sys.numeric().unwrap();
        let x = state(1.7, -2.2, -0.3);
        let u = [12.0, -0.4];
        let a = sys.dynamics(&x, &u).unwrap();
        let b = num.derivative(&x, &u);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        assert_eq!(num.control_box(&x).unwrap(), sys.control_box(&x).unwrap());
        assert!(num.in_state_space(&x));
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let mut vars = Vars::new();
        let x = vars.state("x").unwrap();
        let err = SymbolicSystem::<f64>::new(SystemParts {
            state_vars: vec![x],
            f: vec![Polynomial::zero()],
            g: vec![vec![Polynomial::one(), Polynomial::one()]],
            lower: vec![Polynomial::constant(-1.0)],
            upper: vec![Polynomial::constant(1.0)],
            h: vec![],
            zeta: vec![],
        })
        .unwrap_err();
        assert!(matches!(err, SystemError::Dimension(_)));

        let k = vars.decision("k").unwrap();
        let err = SymbolicSystem::<f64>::new(SystemParts {
            state_vars: vec![x],
            f: vec![Polynomial::var(k)],
            g: vec![vec![Polynomial::one()]],
            lower: vec![Polynomial::constant(-1.0)],
            upper: vec![Polynomial::constant(1.0)],
            h: vec![],
            zeta: vec![],
        })
        .unwrap_err();
        assert!(matches!(err, SystemError::NotStatePolynomial { .. }));
    }
}
