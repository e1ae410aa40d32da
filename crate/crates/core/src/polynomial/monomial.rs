use std::cmp::Ordering;

use super::{VarClass, VarId, Vars};

/// Product of variables raised to positive integer powers.
///
/// Stored sorted by variable with no zero exponents, so equal monomials
/// compare equal structurally. Ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    factors: Vec<(VarId, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        Self::power(v, 1)
    }

    pub fn power(v: VarId, exp: u32) -> Self {
        if exp == 0 {
            Self::one()
        } else {
            Self {
                factors: vec![(v, exp)],
            }
        }
    }

    /// Builds a monomial from arbitrary (possibly repeated, possibly zero) factors.
    pub fn from_factors<I: IntoIterator<Item = (VarId, u32)>>(it: I) -> Self {
        let mut factors: Vec<(VarId, u32)> = it.into_iter().filter(|&(_, e)| e > 0).collect();
        factors.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, u32)> = Vec::with_capacity(factors.len());
        for (v, e) in factors {
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc += e,
                _ => merged.push((v, e)),
            }
        }
        Self { factors: merged }
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|&(_, e)| e).sum()
    }

    pub fn degree_in(&self, class: VarClass) -> u32 {
        self.factors
            .iter()
            .filter(|(v, _)| v.class() == class)
            .map(|&(_, e)| e)
            .sum()
    }

    pub fn exponent(&self, v: VarId) -> u32 {
        self.factors
            .binary_search_by_key(&v, |&(w, _)| w)
            .map(|i| self.factors[i].1)
            .unwrap_or(0)
    }

    pub fn factors(&self) -> &[(VarId, u32)] {
        &self.factors
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.factors.iter().map(|&(v, _)| v)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.factors, &other.factors);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial { factors: out }
    }

    /// `self / other` if `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.factors.len());
        let mut j = 0;
        for &(v, e) in &self.factors {
            let mut e = e;
            if j < other.factors.len() && other.factors[j].0 == v {
                let d = other.factors[j].1;
                if d > e {
                    return None;
                }
                e -= d;
                j += 1;
            } else if j < other.factors.len() && other.factors[j].0 < v {
                return None;
            }
            if e > 0 {
                out.push((v, e));
            }
        }
        if j < other.factors.len() {
            return None;
        }
        Some(Monomial { factors: out })
    }

    /// Largest common divisor of two monomials.
    pub fn gcd(&self, other: &Monomial) -> Monomial {
        Monomial::from_factors(
            self.factors
                .iter()
                .filter_map(|&(v, e)| match other.exponent(v).min(e) {
                    0 => None,
                    m => Some((v, m)),
                }),
        )
    }

    /// Splits into the part over variables of `class` and the rest.
    pub fn split(&self, class: VarClass) -> (Monomial, Monomial) {
        let (a, b): (Vec<_>, Vec<_>) = self.factors.iter().partition(|(v, _)| v.class() == class);
        (Monomial { factors: a }, Monomial { factors: b })
    }

    /// Removes one power of `v`, returning the old exponent (0 if absent).
    pub(crate) fn lower(&self, v: VarId) -> (u32, Monomial) {
        let e = self.exponent(v);
        if e == 0 {
            return (0, self.clone());
        }
        let factors = self
            .factors
            .iter()
            .filter_map(|&(w, k)| {
                if w != v {
                    Some((w, k))
                } else if k > 1 {
                    Some((w, k - 1))
                } else {
                    None
                }
            })
            .collect();
        (e, Monomial { factors })
    }

    pub fn display<'a>(&'a self, vars: &'a Vars) -> MonomialDisplay<'a> {
        MonomialDisplay { mono: self, vars }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let (a, b) = (&self.factors, &other.factors);
            let (mut i, mut j) = (0, 0);
            loop {
                match (a.get(i), b.get(j)) {
                    (None, None) => return Ordering::Equal,
                    (Some(_), None) => return Ordering::Greater,
                    (None, Some(_)) => return Ordering::Less,
                    (Some(&(va, ea)), Some(&(vb, eb))) => match va.cmp(&vb) {
                        // `a` has a positive power of an earlier variable
                        Ordering::Less => return Ordering::Greater,
                        Ordering::Greater => return Ordering::Less,
                        Ordering::Equal => {
                            if ea != eb {
                                return ea.cmp(&eb);
                            }
                            i += 1;
                            j += 1;
                        }
                    },
                }
            }
        })
    }
}

pub struct MonomialDisplay<'a> {
    mono: &'a Monomial,
    vars: &'a Vars,
}

impl std::fmt::Display for MonomialDisplay<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.mono.is_one() {
            return write!(f, "1");
        }
        for (i, &(v, e)) in self.mono.factors.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "{}", self.vars.name(v))?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Vars, VarId, VarId, VarId) {
        let mut vars = Vars::new();
        let x = vars.state("x").unwrap();
        let y = vars.state("y").unwrap();
        let k = vars.decision("k").unwrap();
        (vars, x, y, k)
    }

    #[test]
    fn graded_lex_order() {
        let (_, x, y, _) = setup();
        let mut monos = vec![
            Monomial::power(y, 2),
            Monomial::var(x),
            Monomial::one(),
            Monomial::from_factors([(x, 1), (y, 1)]),
            Monomial::var(y),
            Monomial::power(x, 2),
        ];
        monos.sort();
        let expect = vec![
            Monomial::one(),
            Monomial::var(y),
            Monomial::var(x),
            Monomial::power(y, 2),
            Monomial::from_factors([(x, 1), (y, 1)]),
            Monomial::power(x, 2),
        ];
        assert_eq!(monos, expect);
    }

    #[test]
    fn mul_div_gcd() {
        let (_, x, y, k) = setup();
        let a = Monomial::from_factors([(x, 2), (k, 1)]);
        let b = Monomial::from_factors([(x, 1), (y, 3)]);
        let ab = a.mul(&b);
        assert_eq!(ab, Monomial::from_factors([(x, 3), (y, 3), (k, 1)]));
        assert_eq!(ab.div(&b).unwrap(), a);
        assert!(a.div(&b).is_none());
        assert_eq!(a.gcd(&b), Monomial::var(x));
        let (state, decision) = ab.split(VarClass::State);
        assert_eq!(state, Monomial::from_factors([(x, 3), (y, 3)]));
        assert_eq!(decision, Monomial::var(k));
        assert_eq!(ab.degree(), 7);
        assert_eq!(ab.degree_in(VarClass::Decision), 1);
    }

    #[test]
    fn from_factors_merges_and_drops_zeros() {
        let (_, x, y, _) = setup();
        let m = Monomial::from_factors([(y, 1), (x, 0), (y, 2), (x, 1)]);
        assert_eq!(m.factors(), &[(x, 1), (y, 3)]);
    }
}
