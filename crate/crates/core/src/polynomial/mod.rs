//! Sparse multivariate polynomials over real coefficients.
//!
//! Variables are split into state and decision classes (see [`VarClass`]).
//! A polynomial is a map from [`Monomial`] to a nonzero coefficient; every
//! operation prunes coefficients below [`Scalar::prune_threshold`], so two
//! equal polynomials always have identical term maps.

mod compiled;
mod monomial;
mod parse;
mod vars;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::Scalar;

pub use compiled::CompiledPoly;
pub use monomial::{Monomial, MonomialDisplay};
pub use parse::{parse_poly, Constants};
pub use vars::{VarClass, VarId, Vars};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable `{name}` already registered as {existing:?}")]
    ClassConflict { name: String, existing: VarClass },
    #[error("`{0}` is not a valid variable name")]
    BadName(String),
    #[error("cannot differentiate with respect to decision variable {0}")]
    DecisionDerivative(VarId),
    #[error("unassigned variables: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    Unassigned(Vec<VarId>),
    #[error("parse error at byte {pos} in `{input}`: {msg}")]
    Parse {
        input: String,
        pos: usize,
        msg: String,
    },
}

/// Sparse polynomial with coefficients in `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T> {
    terms: BTreeMap<Monomial, T>,
}

impl<T: Scalar> Default for Polynomial<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Scalar> Polynomial<T> {
    pub fn zero() -> Self {
        Self {
            terms: BTreeMap::new(),
        }
    }

    pub fn one() -> Self {
        Self::constant(T::one())
    }

    pub fn constant(c: T) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn var(v: VarId) -> Self {
        Self::term(T::one(), Monomial::var(v))
    }

    pub fn term(c: T, m: Monomial) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, T)>>(it: I) -> Self {
        let mut p = Self::zero();
        for (m, c) in it {
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: T) {
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(slot) => {
                if c.abs() >= T::prune_threshold() {
                    slot.insert(c);
                }
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                let sum = *slot.get() + c;
                if sum.abs() < T::prune_threshold() {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `-1` for the zero polynomial.
    pub fn degree(&self) -> i32 {
        self.terms
            .keys()
            .map(|m| m.degree() as i32)
            .max()
            .unwrap_or(-1)
    }

    /// Degree counting only variables of `class`; `-1` for the zero polynomial.
    pub fn degree_in(&self, class: VarClass) -> i32 {
        self.terms
            .keys()
            .map(|m| m.degree_in(class) as i32)
            .max()
            .unwrap_or(-1)
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &T)> + ExactSizeIterator {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> T {
        self.terms.get(m).copied().unwrap_or_else(T::zero)
    }

    /// The constant term.
    pub fn constant_term(&self) -> T {
        self.coeff(&Monomial::one())
    }

    /// All variables occurring in the polynomial, in registration order.
    pub fn vars(&self) -> Vec<VarId> {
        let mut out: Vec<VarId> = self.terms.keys().flat_map(|m| m.vars()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.terms.keys().any(|m| m.exponent(v) > 0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|m| m.is_one())
    }

    /// True when no variable of `class` occurs.
    pub fn is_free_of(&self, class: VarClass) -> bool {
        self.terms.keys().all(|m| m.degree_in(class) == 0)
    }

    pub fn scale(&self, c: T) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, &a)| (m.clone(), a * c)))
    }

    pub fn mul_monomial(&self, c: T, mono: &Monomial) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, &a)| (m.mul(mono), a * c)))
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Partial derivative with respect to a state variable.
    pub fn differentiate(&self, v: VarId) -> Result<Self, PolyError> {
        if v.is_decision() {
            return Err(PolyError::DecisionDerivative(v));
        }
        Ok(self.partial(v))
    }

    /// Partial derivative with respect to any variable.
    pub(crate) fn partial(&self, v: VarId) -> Self {
        Self::from_terms(self.terms.iter().filter_map(|(m, &c)| {
            let (e, lowered) = m.lower(v);
            (e > 0).then(|| (lowered, c * T::lit(e as f64)))
        }))
    }

    /// Evaluates with values supplied by `lookup`; every variable must resolve.
    pub fn eval_with<F: Fn(VarId) -> Option<T>>(&self, lookup: F) -> Result<T, PolyError> {
        let mut missing = Vec::new();
        let mut acc = T::zero();
        for (m, &c) in &self.terms {
            let mut t = c;
            for &(v, e) in m.factors() {
                match lookup(v) {
                    Some(x) => t = t * x.powi(e as i32),
                    None => missing.push(v),
                }
            }
            acc = acc + t;
        }
        if missing.is_empty() {
            Ok(acc)
        } else {
            missing.sort();
            missing.dedup();
            Err(PolyError::Unassigned(missing))
        }
    }

    pub fn evaluate(&self, assignment: &HashMap<VarId, T>) -> Result<T, PolyError> {
        self.eval_with(|v| assignment.get(&v).copied())
    }

    /// Replaces every variable for which `lookup` yields a value; the rest stay symbolic.
    pub fn substitute<F: Fn(VarId) -> Option<T>>(&self, lookup: F) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, &c)| {
            let mut coef = c;
            let mut rest = Vec::new();
            for &(v, e) in m.factors() {
                match lookup(v) {
                    Some(x) => coef = coef * x.powi(e as i32),
                    None => rest.push((v, e)),
                }
            }
            (Monomial::from_factors(rest), coef)
        }))
    }

    /// Replaces variable `v` by polynomial `q`.
    pub fn compose(&self, v: VarId, q: &Polynomial<T>) -> Self {
        let mut out = Self::zero();
        for (m, &c) in &self.terms {
            let e = m.exponent(v);
            let rest = Monomial::from_factors(m.factors().iter().copied().filter(|&(w, _)| w != v));
            let head = Self::term(c, rest);
            out += &(&head * &q.pow(e));
        }
        out
    }

    /// Groups terms by their state monomial: each key is a state-only monomial and
    /// each value the decision-only polynomial multiplying it.
    pub fn collect_by_state(&self) -> BTreeMap<Monomial, Polynomial<T>> {
        let mut out: BTreeMap<Monomial, Polynomial<T>> = BTreeMap::new();
        for (m, &c) in &self.terms {
            let (state, decision) = m.split(VarClass::State);
            out.entry(state)
                .or_insert_with(Self::zero)
                .add_term(decision, c);
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    /// Inverse of [`Polynomial::collect_by_state`].
    pub fn from_collected(collected: &BTreeMap<Monomial, Polynomial<T>>) -> Self {
        let mut out = Self::zero();
        for (state, coef) in collected {
            out += &coef.mul_monomial(T::one(), state);
        }
        out
    }

    pub fn compile<F: Fn(VarId) -> Option<usize>>(&self, slot: F) -> Result<CompiledPoly<T>, PolyError> {
        CompiledPoly::new(self, slot)
    }

    /// Maps coefficients into another scalar type.
    pub fn cast<U: Scalar>(&self) -> Polynomial<U> {
        Polynomial::from_terms(
            self.terms
                .iter()
                .map(|(m, &c)| (m.clone(), U::lit(c.to_f64_lossy()))),
        )
    }

    /// Renders in the literal syntax accepted by [`parse_poly`].
    pub fn display<'a>(&'a self, vars: &'a Vars) -> PolyDisplay<'a, T> {
        PolyDisplay { poly: self, vars }
    }
}

pub struct PolyDisplay<'a, T> {
    poly: &'a Polynomial<T>,
    vars: &'a Vars,
}

impl<T: Scalar> fmt::Display for PolyDisplay<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        // highest-order terms first
        for (i, (m, &c)) in self.poly.terms.iter().rev().enumerate() {
            let (sign, mag) = if c < T::zero() { ("-", -c) } else { ("+", c) };
            if i == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag == T::one() {
                write!(f, "{}", m.display(self.vars))?;
            } else {
                write!(f, "{mag}*{}", m.display(self.vars))?;
            }
        }
        Ok(())
    }
}

impl<T: Scalar> AddAssign<&Polynomial<T>> for Polynomial<T> {
    fn add_assign(&mut self, rhs: &Polynomial<T>) {
        for (m, &c) in &rhs.terms {
            self.add_term(m.clone(), c);
        }
    }
}

impl<T: Scalar> Add for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl<T: Scalar> Add for Polynomial<T> {
    type Output = Polynomial<T>;
    fn add(mut self, rhs: Polynomial<T>) -> Polynomial<T> {
        self += &rhs;
        self
    }
}

impl<T: Scalar> Neg for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn neg(self) -> Polynomial<T> {
        Polynomial {
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), -c)).collect(),
        }
    }
}

impl<T: Scalar> Neg for Polynomial<T> {
    type Output = Polynomial<T>;
    fn neg(self) -> Polynomial<T> {
        -&self
    }
}

impl<T: Scalar> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl<T: Scalar> Sub for Polynomial<T> {
    type Output = Polynomial<T>;
    fn sub(self, rhs: Polynomial<T>) -> Polynomial<T> {
        &self - &rhs
    }
}

impl<T: Scalar> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: &Polynomial<T>) -> Polynomial<T> {
        let mut acc: BTreeMap<Monomial, T> = BTreeMap::new();
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &rhs.terms {
                let e = acc.entry(ma.mul(mb)).or_insert_with(T::zero);
                *e = *e + ca * cb;
            }
        }
        acc.retain(|_, c| c.abs() >= T::prune_threshold());
        Polynomial { terms: acc }
    }
}

impl<T: Scalar> Mul for Polynomial<T> {
    type Output = Polynomial<T>;
    fn mul(self, rhs: Polynomial<T>) -> Polynomial<T> {
        &self * &rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type P = Polynomial<f64>;

    struct Ctx {
        vars: Vars,
        x: VarId,
        y: VarId,
        k: VarId,
    }

    fn ctx() -> Ctx {
        let mut vars = Vars::new();
        let x = vars.state("x").unwrap();
        let y = vars.state("y").unwrap();
        let k = vars.decision("k").unwrap();
        Ctx { vars, x, y, k }
    }

    fn p(c: &Ctx, s: &str) -> P {
        parse_poly(s, &c.vars, &Constants::new()).unwrap()
    }

    fn random_points(c: &Ctx, n: usize) -> Vec<HashMap<VarId, f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..n)
            .map(|_| {
                [c.x, c.y, c.k]
                    .into_iter()
                    .map(|v| (v, rng.gen_range(-2.0..2.0)))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn add_examples() {
        let c = ctx();
        assert_eq!(p(&c, "x + 1") + p(&c, "-x"), P::one());
        let q = p(&c, "x^2 + 3*x*y - 2");
        assert_eq!(&q + &P::zero(), q);
        let lhs = p(&c, "x^2 + y") + p(&c, "y");
        let rhs = p(&c, "x^2 + 2*y");
        assert_eq!(lhs, rhs);
        for pt in random_points(&c, 5) {
            let a = p(&c, "x^2 + y").evaluate(&pt).unwrap() + p(&c, "y").evaluate(&pt).unwrap();
            assert!((lhs.evaluate(&pt).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn mul_examples() {
        let c = ctx();
        assert_eq!(p(&c, "x + y") * p(&c, "x - y"), p(&c, "x^2 - y^2"));
        let q = p(&c, "3*x*y^2 - k");
        assert_eq!(&q * &P::one(), q);
        let sq = p(&c, "x + 1") * p(&c, "x + 1");
        assert_eq!(sq, p(&c, "x^2 + 2*x + 1"));
        for pt in random_points(&c, 5) {
            let xv = pt[&c.x];
            assert!((sq.evaluate(&pt).unwrap() - (xv + 1.0) * (xv + 1.0)).abs() < 1e-12);
        }
        assert_eq!(sq.degree(), 2);
        assert_eq!(P::zero().degree(), -1);
    }

    #[test]
    fn differentiate_examples() {
        let c = ctx();
        assert_eq!(p(&c, "x^2*y").differentiate(c.x).unwrap(), p(&c, "2*x*y"));
        assert!(P::constant(4.0).differentiate(c.x).unwrap().is_zero());
        let q = p(&c, "x^2*y + y^3");
        let dq = q.differentiate(c.y).unwrap();
        assert_eq!(dq, p(&c, "x^2 + 3*y^2"));
        // central finite differences
        for pt in random_points(&c, 10) {
            let h = 1e-5;
            let mut hi = pt.clone();
            let mut lo = pt.clone();
            *hi.get_mut(&c.y).unwrap() += h;
            *lo.get_mut(&c.y).unwrap() -= h;
            let fd = (q.evaluate(&hi).unwrap() - q.evaluate(&lo).unwrap()) / (2.0 * h);
            assert!((fd - dq.evaluate(&pt).unwrap()).abs() < 1e-6);
        }
        assert_eq!(
            p(&c, "k*x").differentiate(c.k),
            Err(PolyError::DecisionDerivative(c.k))
        );
    }

    #[test]
    fn evaluate_examples() {
        let c = ctx();
        let pt: HashMap<_, _> = [(c.x, 2.0), (c.y, 3.0)].into_iter().collect();
        assert_eq!(p(&c, "x^2 + y").evaluate(&pt).unwrap(), 7.0);
        assert_eq!(P::zero().evaluate(&HashMap::new()).unwrap(), 0.0);
        let err = p(&c, "x*k + y").evaluate(&[(c.x, 1.0)].into_iter().collect());
        assert_eq!(err, Err(PolyError::Unassigned(vec![c.y, c.k])));
    }

    #[test]
    fn index_value_at_reported_gain() {
        let mut vars = Vars::new();
        let d = vars.state("d").unwrap();
        let v = vars.state("v").unwrap();
        let cos_a = vars.state("cos_a").unwrap();
        let k = vars.decision("k").unwrap();
        let phi: Polynomial<f64> = parse_poly("1 - d + k*v*cos_a", &vars, &Constants::new()).unwrap();
        let pt: HashMap<_, _> = [(d, 1.0), (v, 1.0), (cos_a, 1.0), (k, 0.0139)]
            .into_iter()
            .collect();
        assert!((phi.evaluate(&pt).unwrap() - 0.0139).abs() < 1e-15);
    }

    #[test]
    fn collect_by_state_examples() {
        let c = ctx();
        let coll = p(&c, "k*x + x").collect_by_state();
        assert_eq!(coll.len(), 1);
        assert_eq!(coll[&Monomial::var(c.x)], p(&c, "k + 1"));

        let mut vars = Vars::new();
        let y = vars.state("y").unwrap();
        let z = vars.state("z").unwrap();
        vars.decision("p1").unwrap();
        vars.decision("p2").unwrap();
        let q = parse_poly("p1*y*z + p2", &vars, &Constants::new()).unwrap();
        let coll = q.collect_by_state();
        assert_eq!(coll.len(), 2);
        assert_eq!(
            coll[&Monomial::from_factors([(y, 1), (z, 1)])],
            parse_poly("p1", &vars, &Constants::new()).unwrap()
        );
        assert_eq!(
            coll[&Monomial::one()],
            parse_poly("p2", &vars, &Constants::new()).unwrap()
        );
        assert_eq!(P::from_collected(&coll), q);
    }

    #[test]
    fn substitute_and_compose() {
        let c = ctx();
        let q = p(&c, "k*x*y + x - 2*k");
        let s = q.substitute(|v| (v == c.k).then_some(0.5));
        assert_eq!(s, p(&c, "0.5*x*y + x - 1"));
        let comp = p(&c, "x^2 + y").compose(c.x, &p(&c, "y + 1"));
        assert_eq!(comp, p(&c, "y^2 + 3*y + 1"));
    }

    #[test]
    fn display_round_trips() {
        let c = ctx();
        let q = p(&c, "-x^2*y + 0.25*k - 3 + y");
        let text = q.display(&c.vars).to_string();
        assert_eq!(text, "-x^2*y + y + 0.25*k - 3");
        assert_eq!(p(&c, &text), q);
        assert_eq!(P::zero().display(&c.vars).to_string(), "0");
    }

    #[test]
    fn f32_coefficients() {
        let c = ctx();
        let a: Polynomial<f32> = p(&c, "x + 2*y").cast();
        let b = &a * &a;
        let v = b
            .eval_with(|id| Some(if id == c.x { 1.0f32 } else { 0.5 }))
            .unwrap();
        assert_eq!(v, 4.0);
    }
}
