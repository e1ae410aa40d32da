//! Parameterized safety indices `φₙ = φ₀ + Σᵢ kᵢ φ₀^(i)` and their numeric
//! instantiation.
//!
//! For `n ≥ 2` the gains are derived from roots `aᵢ > 0` as elementary
//! symmetric sums, so `φₙ = ∏(1 + aᵢ s) φ₀` and the intermediate indices are
//! `φⱼ = ∏_{i≤j}(1 + aᵢ s) φ₀`. For `n = 1`, `k₁ = a₁`.

use thiserror::Error;

use crate::polynomial::{CompiledPoly, PolyError, Polynomial, VarClass, VarId, Vars};
use crate::scalar::Scalar;
use crate::system::{CompiledSystem, SymbolicSystem, SystemError};

/// Smallest admissible gain / root.
pub const K_MIN: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("phi0 must be a polynomial in state variables only")]
    NotStatePolynomial,
    #[error("control enters the {0}-th derivative of phi0, before the index order")]
    ControlTooEarly(usize),
    #[error("control does not enter the {0}-th derivative of phi0")]
    ControlAbsent(usize),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("parameter {value} below the floor {K_MIN}")]
    BelowFloor { value: f64 },
    #[error("eta must be positive, got {0}")]
    Eta(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Symbolic index family over decision variables `θ = [k₁…kₙ]`.
#[derive(Debug, Clone)]
pub struct SafetyIndexFamily<T> {
    order: usize,
    theta: Vec<VarId>,
    /// `φ₀^(0) … φ₀^(n)`, state-only.
    derivs: Vec<Polynomial<T>>,
    phi: Polynomial<T>,
    lf: Polynomial<T>,
    lg: Vec<Polynomial<T>>,
}

impl<T: Scalar> SafetyIndexFamily<T> {
    /// Registers `k` (n = 1) or `k1…kn` as decision variables.
    pub fn build(
        vars: &mut Vars,
        phi0: Polynomial<T>,
        order: usize,
        sys: &SymbolicSystem<T>,
    ) -> Result<Self, IndexError> {
        if order == 0 {
            return Err(IndexError::ZeroOrder);
        }
        if phi0.vars().iter().any(|v| sys.slot(*v).is_none()) {
            return Err(IndexError::NotStatePolynomial);
        }
        let mut derivs = vec![phi0];
        for i in 0..order {
            let (lf, lg) = sys.lie_derivatives(&derivs[i]);
            if lg.iter().any(|p| !p.is_zero()) {
                return Err(IndexError::ControlTooEarly(i + 1));
            }
            derivs.push(lf);
        }
        let theta = if order == 1 {
            vec![vars.register("k", VarClass::Decision)?]
        } else {
            (1..=order)
                .map(|i| vars.register(&format!("k{i}"), VarClass::Decision))
                .collect::<Result<_, _>>()?
        };
        let mut phi = derivs[0].clone();
        for (i, &k) in theta.iter().enumerate() {
            phi += &(&Polynomial::var(k) * &derivs[i + 1]);
        }
        let (_, lg_top) = sys.lie_derivatives(&derivs[order]);
        if lg_top.iter().all(Polynomial::is_zero) {
            return Err(IndexError::ControlAbsent(order + 1));
        }
        let (lf, lg) = sys.lie_derivatives(&phi);
        Ok(Self {
            order,
            theta,
            derivs,
            phi,
            lf,
            lg,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn theta(&self) -> &[VarId] {
        &self.theta
    }

    pub fn phi0(&self) -> &Polynomial<T> {
        &self.derivs[0]
    }

    /// `φ₀^(i)` for `i = 0…n`.
    pub fn derivatives(&self) -> &[Polynomial<T>] {
        &self.derivs
    }

    /// `φₙ` with symbolic gains.
    pub fn phi(&self) -> &Polynomial<T> {
        &self.phi
    }

    pub fn lf(&self) -> &Polynomial<T> {
        &self.lf
    }

    pub fn lg(&self) -> &[Polynomial<T>] {
        &self.lg
    }

    /// `[φ₀, …, φₙ]` with the parameters substituted.
    pub fn chain(&self, params: &IndexParams<T>) -> Result<Vec<Polynomial<T>>, IndexError> {
        params.expect_len(self.order)?;
        Ok((0..=self.order)
            .map(|j| {
                let e = elementary_symmetric(&params.roots[..j]);
                let mut p = Polynomial::zero();
                for (i, d) in self.derivs.iter().take(j + 1).enumerate() {
                    p += &d.scale(e[i]);
                }
                p
            })
            .collect())
    }

    /// Substitutes `θ` into a polynomial in state and gain variables.
    pub fn substitute_gains(&self, p: &Polynomial<T>, k: &[T]) -> Polynomial<T> {
        p.substitute(|v| self.theta.iter().position(|&t| t == v).map(|i| k[i]))
    }

    pub fn instantiate(
        &self,
        params: &IndexParams<T>,
        sys: &SymbolicSystem<T>,
    ) -> Result<SafetyIndex<T>, IndexError> {
        let k = params.k();
        let compile = |p: &Polynomial<T>| sys.compile(&self.substitute_gains(p, &k));
        Ok(SafetyIndex {
            params: params.clone(),
            chain: self
                .chain(params)?
                .iter()
                .map(|p| sys.compile(p))
                .collect::<Result<_, _>>()?,
            lf: compile(&self.lf)?,
            lg: self.lg.iter().map(compile).collect::<Result<_, _>>()?,
            sys: sys.numeric()?,
        })
    }

    /// Minimum of `φ̇ₙ` over the control box at `state`.
    pub fn worst_case_phidot(
        &self,
        params: &IndexParams<T>,
        state: &[T],
        sys: &SymbolicSystem<T>,
    ) -> Result<T, IndexError> {
        Ok(self.instantiate(params, sys)?.worst_case_phidot(state)?)
    }

    pub fn principal_membership(
        &self,
        params: &IndexParams<T>,
        state: &[T],
        m: usize,
        sys: &SymbolicSystem<T>,
    ) -> Result<bool, IndexError> {
        Ok(self.instantiate(params, sys)?.principal_membership(state, m))
    }
}

/// Roots `a₁…aₙ` and margin `η`; gains are the elementary symmetric sums of the roots.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexParams<T> {
    roots: Vec<T>,
    eta: T,
}

impl<T: Scalar> IndexParams<T> {
    pub fn from_roots(roots: Vec<T>, eta: T) -> Result<Self, IndexError> {
        if !(eta > T::zero()) {
            return Err(IndexError::Eta(eta.to_f64_lossy()));
        }
        if let Some(&a) = roots.iter().find(|&&a| !(a >= T::lit(K_MIN))) {
            return Err(IndexError::BelowFloor {
                value: a.to_f64_lossy(),
            });
        }
        Ok(Self { roots, eta })
    }

    /// First-order index with gain `k`.
    pub fn first_order(k: T, eta: T) -> Result<Self, IndexError> {
        Self::from_roots(vec![k], eta)
    }

    /// Skips the floor and sign checks (used to probe degenerate gains such as `k = 0`).
    pub fn unchecked(roots: Vec<T>, eta: T) -> Self {
        Self { roots, eta }
    }

    pub fn roots(&self) -> &[T] {
        &self.roots
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn order(&self) -> usize {
        self.roots.len()
    }

    /// Gains `k₁…kₙ`.
    pub fn k(&self) -> Vec<T> {
        elementary_symmetric(&self.roots)[1..].to_vec()
    }

    fn expect_len(&self, n: usize) -> Result<(), IndexError> {
        if self.roots.len() == n {
            Ok(())
        } else {
            Err(IndexError::ParamCount {
                expected: n,
                got: self.roots.len(),
            })
        }
    }
}

/// `[e₀, e₁, …, eₙ]` of the given values, `e₀ = 1`.
pub fn elementary_symmetric<T: Scalar>(a: &[T]) -> Vec<T> {
    let mut e = vec![T::zero(); a.len() + 1];
    e[0] = T::one();
    for (j, &x) in a.iter().enumerate() {
        for i in (1..=j + 1).rev() {
            e[i] = e[i] + x * e[i - 1];
        }
    }
    e
}

/// `J[i][j] = ∂kᵢ₊₁/∂aⱼ`.
pub fn gain_jacobian<T: Scalar>(roots: &[T]) -> Vec<Vec<T>> {
    let n = roots.len();
    let mut jac = vec![vec![T::zero(); n]; n];
    for j in 0..n {
        let others: Vec<T> = roots
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != j)
            .map(|(_, &a)| a)
            .collect();
        let e = elementary_symmetric(&others);
        for (i, row) in jac.iter_mut().enumerate() {
            row[j] = e[i];
        }
    }
    jac
}

/// `L_fφ + Σᵢ L_gφ[i]·δ` with `δ` the lower bound when `L_gφ[i] ≥ 0` and the
/// upper bound otherwise. Returns the value and the minimizing control vertex.
pub fn delta_rule<T: Scalar>(lf: T, lg: &[T], lo: &[T], hi: &[T]) -> (T, Vec<T>) {
    let mut u = Vec::with_capacity(lg.len());
    let mut acc = lf;
    for i in 0..lg.len() {
        let b = if lg[i] >= T::zero() { lo[i] } else { hi[i] };
        acc = acc + lg[i] * b;
        u.push(b);
    }
    (acc, u)
}

/// A family member with fixed parameters, compiled for fast evaluation.
#[derive(Debug, Clone)]
pub struct SafetyIndex<T> {
    params: IndexParams<T>,
    chain: Vec<CompiledPoly<T>>,
    lf: CompiledPoly<T>,
    lg: Vec<CompiledPoly<T>>,
    sys: CompiledSystem<T>,
}

impl<T: Scalar> SafetyIndex<T> {
    pub fn params(&self) -> &IndexParams<T> {
        &self.params
    }

    pub fn order(&self) -> usize {
        self.chain.len() - 1
    }

    pub fn system(&self) -> &CompiledSystem<T> {
        &self.sys
    }

    /// `φₙ(x)`.
    pub fn phi(&self, state: &[T]) -> T {
        self.chain[self.order()].eval(state)
    }

    /// `φⱼ(x)`.
    pub fn phi_j(&self, j: usize, state: &[T]) -> T {
        self.chain[j].eval(state)
    }

    pub fn lie(&self, state: &[T]) -> (T, Vec<T>) {
        (
            self.lf.eval(state),
            self.lg.iter().map(|p| p.eval(state)).collect(),
        )
    }

    /// `φ̇ₙ(x, u)`.
    pub fn phidot(&self, state: &[T], u: &[T]) -> T {
        let (lf, lg) = self.lie(state);
        lg.iter().zip(u).fold(lf, |acc, (&g, &ui)| acc + g * ui)
    }

    pub fn worst_case_phidot(&self, state: &[T]) -> Result<T, SystemError> {
        Ok(self.worst_case(state)?.0)
    }

    /// Worst-case derivative and the control vertex attaining it.
    pub fn worst_case(&self, state: &[T]) -> Result<(T, Vec<T>), SystemError> {
        let (lo, hi) = self.sys.control_box(state)?;
        let (lf, lg) = self.lie(state);
        Ok(delta_rule(lf, &lg, &lo, &hi))
    }

    /// `φⱼ(x) ≤ 0` for `j = n−m … n`.
    pub fn principal_membership(&self, state: &[T], m: usize) -> bool {
        let n = self.order();
        (n.saturating_sub(m)..=n).all(|j| self.phi_j(j, state) <= T::zero())
    }

    pub fn in_safe_set(&self, state: &[T]) -> bool {
        self.principal_membership(state, self.order())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::unicycle::{self, RelativeDynamics, UnicycleParams};
    use crate::system::NumericDynamics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Vars, SymbolicSystem<f64>, SafetyIndexFamily<f64>) {
        let p = UnicycleParams::default();
        let mut vars = Vars::new();
        let sys = unicycle::symbolic(&mut vars, &p).unwrap();
        let phi0 = unicycle::phi0(&vars, &p).unwrap();
        let fam = SafetyIndexFamily::build(&mut vars, phi0, 1, &sys).unwrap();
        (vars, sys, fam)
    }

    fn x(d: f64, alpha: f64, v: f64) -> [f64; 4] {
        [d, alpha.sin(), alpha.cos(), v]
    }

    #[test]
    fn unicycle_first_order_index() {
        let (vars, _, fam) = setup();
        assert_eq!(fam.phi().display(&vars).to_string(), "cos_a*v*k - d + 1");
        let lg: Vec<String> = fam.lg().iter().map(|p| p.display(&vars).to_string()).collect();
        assert_eq!(lg, ["cos_a*k", "-sin_a*v*k"]);
    }

    #[test]
    fn relative_degree_errors() {
        let p = UnicycleParams::default();
        let mut vars = Vars::new();
        let sys: SymbolicSystem<f64> = unicycle::symbolic(&mut vars, &p).unwrap();
        let phi0 = unicycle::phi0(&vars, &p).unwrap();
        // control already enters the first derivative
        assert_eq!(
            SafetyIndexFamily::build(&mut vars, phi0.clone(), 2, &sys).unwrap_err(),
            IndexError::ControlTooEarly(2)
        );
        let v = vars.get("v").unwrap();
        assert_eq!(
            SafetyIndexFamily::build(&mut vars, Polynomial::var(v), 1, &sys).unwrap_err(),
            IndexError::ControlTooEarly(1)
        );
        assert!(matches!(
            IndexParams::first_order(0.0, 0.1),
            Err(IndexError::BelowFloor { .. })
        ));
        assert!(matches!(IndexParams::first_order(0.5, 0.0), Err(IndexError::Eta(_))));
    }

    #[test]
    fn zero_gain_removes_control() {
        let (_, sys, fam) = setup();
        let idx = fam
            .instantiate(&IndexParams::unchecked(vec![0.0], 0.1), &sys)
            .unwrap();
        let s = x(1.3, 0.4, 0.6);
        let (lf, lg) = idx.lie(&s);
        assert!(lg.iter().all(|g| *g == 0.0));
        assert_eq!(idx.worst_case_phidot(&s).unwrap(), lf);
    }

    #[test]
    fn worst_case_at_contact() {
        let (_, sys, fam) = setup();
        let params = IndexParams::first_order(0.0139, 0.1).unwrap();
        let w = fam.worst_case_phidot(&params, &x(1.0, 0.0, 1.0), &sys).unwrap();
        assert!((w - (1.0 - 0.0139 * 200.0)).abs() < 1e-12);
    }

    #[test]
    fn membership_examples() {
        let (_, sys, fam) = setup();
        let params = IndexParams::first_order(0.0139, 0.1).unwrap();
        let idx = fam.instantiate(&params, &sys).unwrap();
        let s = x(3.0, 0.0, 1.0);
        assert_eq!(idx.phi_j(0, &s), -2.0);
        assert!((idx.phi(&s) - (-2.0 + 0.0139)).abs() < 1e-12);
        assert!(idx.in_safe_set(&s));
        // φ₀ < 0 but φ₁ > 0
        let s = x(1.005, 0.0, 1.0);
        assert!(idx.phi_j(0, &s) < 0.0 && idx.phi(&s) > 0.0);
        assert!(!idx.principal_membership(&s, 0));
        assert!(!idx.principal_membership(&s, 1));
        // φ₀ > 0 but φ₁ ≤ 0
        let s = x(0.99, std::f64::consts::PI, 1.0);
        assert!(idx.principal_membership(&s, 0));
        assert!(!idx.principal_membership(&s, 1));
    }

    #[test]
    fn delta_rule_is_vertex_minimum() {
        let (_, sys, fam) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let params = IndexParams::first_order(rng.gen_range(K_MIN..2.0), 0.1).unwrap();
            let idx = fam.instantiate(&params, &sys).unwrap();
            let s = x(
                rng.gen_range(0.0..5.0),
                rng.gen_range(-3.2..3.2),
                rng.gen_range(-1.0..=1.0),
            );
            let (lo, hi) = sys.control_box(&s).unwrap();
            let worst = idx.worst_case_phidot(&s).unwrap();
            let mut vertex_min = f64::INFINITY;
            for mask in 0..4 {
                let u = [
                    if mask & 1 == 0 { lo[0] } else { hi[0] },
                    if mask & 2 == 0 { lo[1] } else { hi[1] },
                ];
                vertex_min = vertex_min.min(idx.phidot(&s, &u));
            }
            assert!((worst - vertex_min).abs() <= 1e-9);
            for _ in 0..20 {
                let u = [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])];
                assert!(idx.phidot(&s, &u) >= worst - 1e-9);
            }
        }
    }

    #[test]
    fn delta_rule_matches_control_grid() {
        let (_, sys, fam) = setup();
        let idx = fam
            .instantiate(&IndexParams::first_order(0.3, 0.1).unwrap(), &sys)
            .unwrap();
        let s = x(1.2, 2.1, -0.4);
        let (lo, hi) = sys.control_box(&s).unwrap();
        let mut grid_min = f64::INFINITY;
        for i in 0..50 {
            for j in 0..50 {
                let u = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / 49.0,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / 49.0,
                ];
                grid_min = grid_min.min(idx.phidot(&s, &u));
            }
        }
        assert!((grid_min - idx.worst_case_phidot(&s).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn chain_increment_tracks_trajectory_derivative() {
        let (_, sys, fam) = setup();
        let k = 0.7;
        let idx = fam
            .instantiate(&IndexParams::first_order(k, 0.1).unwrap(), &sys)
            .unwrap();
        let dyns = RelativeDynamics {
            params: UnicycleParams::default(),
        };
        let dt = 1e-4;
        let mut rel = [3.0, 0.5, 0.3, 0.0];
        for step in 0..200 {
            let u = [0.2 * (step as f64 * 0.05).sin(), 0.5];
            let s0 = unicycle::to_symbolic_state(&rel);
            let dr = dyns.derivative(&rel, &u);
            for i in 0..4 {
                rel[i] += dt * dr[i];
            }
            let s1 = unicycle::to_symbolic_state(&rel);
            let fd = (idx.phi_j(0, &s1) - idx.phi_j(0, &s0)) / dt;
            let inc = idx.phi(&s0) - idx.phi_j(0, &s0);
            assert!((inc - k * fd).abs() < 1e-3, "{inc} vs {}", k * fd);
        }
    }

    #[test]
    fn roots_give_factored_chain() {
        let e = elementary_symmetric(&[2.0, 3.0, 5.0]);
        assert_eq!(e, vec![1.0, 10.0, 31.0, 30.0]);
        let jac = gain_jacobian(&[2.0, 3.0]);
        // k1 = a1 + a2, k2 = a1 a2
        assert_eq!(jac, vec![vec![1.0, 1.0], vec![3.0, 2.0]]);
    }

    #[test]
    fn second_order_family_on_triple_integrator() {
        // ṗ = v, v̇ = a, ȧ = u: φ₀ = p has relative degree three.
        let mut vars = Vars::new();
        let p = vars.state("p").unwrap();
        let v = vars.state("v").unwrap();
        let a = vars.state("a").unwrap();
        let sys = SymbolicSystem::<f64>::new(crate::system::SystemParts {
            state_vars: vec![p, v, a],
            f: vec![Polynomial::var(v), Polynomial::var(a), Polynomial::zero()],
            g: vec![
                vec![Polynomial::zero()],
                vec![Polynomial::zero()],
                vec![Polynomial::one()],
            ],
            lower: vec![Polynomial::constant(-1.0)],
            upper: vec![Polynomial::constant(1.0)],
            h: vec![],
            zeta: vec![],
        })
        .unwrap();
        let fam = SafetyIndexFamily::build(&mut vars, Polynomial::var(p), 2, &sys).unwrap();
        assert_eq!(fam.phi().display(&vars).to_string(), "v*k1 + a*k2 + p");
        let params = IndexParams::from_roots(vec![2.0, 3.0], 0.1).unwrap();
        assert_eq!(params.k(), vec![5.0, 6.0]);
        let idx = fam.instantiate(&params, &sys).unwrap();
        let s = [0.5, -0.25, 0.1];
        // φ₁ = p + 2v, φ₂ = p + 5v + 6a
        assert!(idx.phi_j(1, &s).abs() < 1e-12);
        assert!((idx.phi(&s) + 0.15).abs() < 1e-12);
        let (lf, lg) = idx.lie(&s);
        assert!((lf - 0.25).abs() < 1e-12 && lg == vec![6.0]);
        assert!(idx.principal_membership(&s, 1));
        assert!(!idx.principal_membership(&s, 2));
        assert_eq!(
            SafetyIndexFamily::build(&mut vars, Polynomial::var(p), 3, &sys).unwrap_err(),
            IndexError::ControlTooEarly(3)
        );
    }
}
