use super::{PolyError, Polynomial, VarId};
use crate::scalar::Scalar;

/// Polynomial lowered onto dense slot indices for repeated numeric evaluation.
#[derive(Debug, Clone)]
pub struct CompiledPoly<T> {
    terms: Vec<(T, Vec<(usize, i32)>)>,
}

impl<T: Scalar> CompiledPoly<T> {
    pub(super) fn new<F: Fn(VarId) -> Option<usize>>(
        poly: &Polynomial<T>,
        slot: F,
    ) -> Result<Self, PolyError> {
        let mut missing = Vec::new();
        let terms = poly
            .terms()
            .map(|(m, &c)| {
                let factors = m
                    .factors()
                    .iter()
                    .filter_map(|&(v, e)| match slot(v) {
                        Some(i) => Some((i, e as i32)),
                        None => {
                            missing.push(v);
                            None
                        }
                    })
                    .collect();
                (c, factors)
            })
            .collect();
        if missing.is_empty() {
            Ok(Self { terms })
        } else {
            missing.sort();
            missing.dedup();
            Err(PolyError::Unassigned(missing))
        }
    }

    pub fn constant(c: T) -> Self {
        Self {
            terms: vec![(c, Vec::new())],
        }
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(i, e) in factors {
                t = t * pow(x[i], e);
            }
            acc = acc + t;
        }
        acc
    }

    /// Adds `weight * ∂p/∂x` into `out`.
    pub fn accumulate_gradient(&self, x: &[T], weight: T, out: &mut [T]) {
        for (c, factors) in &self.terms {
            for (j, &(i, e)) in factors.iter().enumerate() {
                let mut t = *c * T::lit(e as f64) * pow(x[i], e - 1);
                for (l, &(i2, e2)) in factors.iter().enumerate() {
                    if l != j {
                        t = t * pow(x[i2], e2);
                    }
                }
                out[i] = out[i] + weight * t;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

#[inline]
fn pow<T: Scalar>(x: T, e: i32) -> T {
    match e {
        0 => T::one(),
        1 => x,
        2 => x * x,
        _ => x.powi(e),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_poly, Constants, Vars};
    use super::*;

    #[test]
    fn matches_symbolic_evaluation_and_gradient() {
        let mut vars = Vars::new();
        let x = vars.state("x").unwrap();
        let y = vars.state("y").unwrap();
        let k = vars.decision("k").unwrap();
        let p: Polynomial<f64> =
            parse_poly("3*x^2*y - k*y^3 + 2*k - 1", &vars, &Constants::new()).unwrap();
        let order = [x, y, k];
        let slot = |v: VarId| order.iter().position(|&w| w == v);
        let c = p.compile(slot).unwrap();
        let pt = [0.7, -1.3, 2.1];
        let symbolic = p.eval_with(|v| slot(v).map(|i| pt[i])).unwrap();
        assert!((c.eval(&pt) - symbolic).abs() < 1e-12);

        let mut g = [0.0; 3];
        c.accumulate_gradient(&pt, 1.0, &mut g);
        for (i, &v) in order.iter().enumerate() {
            let d = p.partial(v).eval_with(|w| slot(w).map(|j| pt[j])).unwrap();
            assert!((g[i] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_unmapped_variables() {
        let mut vars = Vars::new();
        let x = vars.state("x").unwrap();
        let y = vars.state("y").unwrap();
        let p: Polynomial<f64> = parse_poly("x*y", &vars, &Constants::new()).unwrap();
        let err = p.compile(|v| (v == x).then_some(0)).unwrap_err();
        assert_eq!(err, PolyError::Unassigned(vec![y]));
    }
}
