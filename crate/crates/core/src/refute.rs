//! Refute sets for the synthesis condition and their Positivstellensatz
//! certificates `p₀ = -1 - Σ p'ζ - Σ p_S ∏γ = 𝒙ᵀQ𝒙`.
//!
//! Each control dimension whose `L_gφ[i]` can change sign contributes a split
//! on the normalized sign polynomial of `L_gφ[i]` (decision-monomial factor
//! removed, leading coefficient made `+1`). User-declared auxiliary splits are
//! merged with identical control splits, and every pair of auxiliary splits
//! also contributes the product of its two sign constraints.
//!
//! State variables that enter every γ affinely with a constant coefficient and
//! never enter ζ are removed by Fourier–Motzkin elimination.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::polynomial::{Monomial, PolyError, Polynomial, VarClass, VarId, Vars};
use crate::safety_index::SafetyIndexFamily;
use crate::scalar::Scalar;
use crate::system::SymbolicSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefuteError {
    #[error("aux split `{0}` must be a nonzero polynomial in state variables only")]
    BadSplit(String),
    #[error("product order must be 1 or 2, got {0}")]
    ProductOrder(usize),
    #[error("p0 has state degree {degree}, more than twice the basis degree {basis_degree}")]
    DegreeOverflow { degree: u32, basis_degree: u32 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// A polynomial whose sign is branched on.
#[derive(Debug, Clone)]
pub struct Split<T> {
    pub name: String,
    pub poly: Polynomial<T>,
    /// Declared as an auxiliary split (possibly also a control split).
    pub aux: bool,
}

/// One indicator `±1` per split, in split order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignCase {
    pub indicators: Vec<(String, i8)>,
}

impl SignCase {
    pub fn label(&self) -> String {
        self.indicators
            .iter()
            .map(|(n, s)| format!("{}{}", if *s > 0 { '+' } else { '-' }, n))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Which end of the control box enters `γ₁` for a dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundChoice {
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct RefuteCase<T> {
    pub sign_case: SignCase,
    pub bounds: Vec<BoundChoice>,
    /// `γ₁` first; constraints produced by elimination of the manifold last.
    pub gammas: Vec<Polynomial<T>>,
    pub labels: Vec<String>,
    pub zetas: Vec<Polynomial<T>>,
}

#[derive(Debug, Clone)]
pub struct RefuteOptions {
    pub eliminate_affine: bool,
}

impl Default for RefuteOptions {
    fn default() -> Self {
        Self {
            eliminate_affine: true,
        }
    }
}

/// Splits on `lg[i]` per control dimension: `(split index, sign σ)` with
/// `lg[i] = σ·m(θ)·s` for a positive decision monomial `m`, or `None` when the
/// sign of `lg[i]` is fixed (`σ` alone decides the bound).
type ControlSplit = (Option<usize>, i8);

/// Removes the common decision monomial and scales so the leading term is `+1`.
/// Returns the normalized polynomial and the sign that was divided out.
pub fn normalize_sign<T: Scalar>(p: &Polynomial<T>) -> Option<(Polynomial<T>, i8)> {
    let mut terms = p.terms();
    let (first, _) = terms.next()?;
    let gcd = terms.fold(first.split(VarClass::Decision).0, |g, (m, _)| {
        g.gcd(&m.split(VarClass::Decision).0)
    });
    let divided = Polynomial::from_terms(p.terms().map(|(m, &c)| (m.div(&gcd).unwrap(), c)));
    let (_, &lead) = divided.terms().next_back()?;
    let sign = if lead < T::zero() { -1 } else { 1 };
    Some((divided.scale(T::one() / lead), sign))
}

/// Splits derived from `L_gφ` and `aux_splits`, plus the per-dimension map.
pub fn collect_splits<T: Scalar>(
    fam: &SafetyIndexFamily<T>,
    aux_splits: &[Polynomial<T>],
    vars: &Vars,
) -> Result<(Vec<Split<T>>, Vec<ControlSplit>), RefuteError> {
    let mut splits: Vec<Split<T>> = Vec::new();
    let mut control = Vec::new();
    for lg in fam.lg() {
        match normalize_sign(lg) {
            None => control.push((None, 1)),
            Some((s, sign)) if s.is_constant() => control.push((None, sign)),
            Some((s, sign)) => {
                let idx = match splits.iter().position(|sp| sp.poly == s) {
                    Some(i) => i,
                    None => {
                        splits.push(Split {
                            name: s.display(vars).to_string(),
                            poly: s,
                            aux: false,
                        });
                        splits.len() - 1
                    }
                };
                control.push((Some(idx), sign));
            }
        }
    }
    for aux in aux_splits {
        let name = aux.display(vars).to_string();
        if !aux.is_free_of(VarClass::Decision) {
            return Err(RefuteError::BadSplit(name));
        }
        let (s, _) = match normalize_sign(aux) {
            Some(n) if !n.0.is_constant() => n,
            _ => return Err(RefuteError::BadSplit(name)),
        };
        match splits.iter_mut().find(|sp| sp.poly == s) {
            Some(sp) => sp.aux = true,
            None => splits.push(Split {
                name: s.display(vars).to_string(),
                poly: s,
                aux: true,
            }),
        }
    }
    Ok((splits, control))
}

/// One refute case per indicator assignment over the collected splits.
pub fn enumerate_cases<T: Scalar>(
    fam: &SafetyIndexFamily<T>,
    sys: &SymbolicSystem<T>,
    aux_splits: &[Polynomial<T>],
    eta: T,
    vars: &Vars,
    opts: &RefuteOptions,
) -> Result<Vec<RefuteCase<T>>, RefuteError> {
    let (splits, control) = collect_splits(fam, aux_splits, vars)?;
    let aux: Vec<usize> = (0..splits.len()).filter(|&i| splits[i].aux).collect();
    let mut cases = Vec::with_capacity(1 << splits.len());
    for mask in 0..(1usize << splits.len()) {
        let ind: Vec<i8> = (0..splits.len())
            .map(|j| if mask >> j & 1 == 0 { 1 } else { -1 })
            .collect();
        let signed = |j: usize| splits[j].poly.scale(T::lit(ind[j] as f64));

        let bounds: Vec<BoundChoice> = control
            .iter()
            .map(|&(split, sigma)| {
                let s = split.map_or(1, |j| ind[j]) * sigma;
                if s > 0 {
                    BoundChoice::Lower
                } else {
                    BoundChoice::Upper
                }
            })
            .collect();
        let mut gamma1 = fam.lf() + &Polynomial::constant(eta);
        for (i, b) in bounds.iter().enumerate() {
            let bound = match b {
                BoundChoice::Lower => &sys.lower()[i],
                BoundChoice::Upper => &sys.upper()[i],
            };
            gamma1 += &(&fam.lg()[i] * bound);
        }

        let mut gammas = vec![(gamma1, "derivative".to_string())];
        for (j, sp) in splits.iter().enumerate() {
            gammas.push((signed(j), format!("sign {}", sp.name)));
        }
        for (a, &i) in aux.iter().enumerate() {
            for &j in &aux[a + 1..] {
                gammas.push((
                    &signed(i) * &signed(j),
                    format!("sign {}*{}", splits[i].name, splits[j].name),
                ));
            }
        }
        for (i, h) in sys.constraints().iter().enumerate() {
            gammas.push((h.clone(), format!("h[{i}]")));
        }
        gammas.push((fam.phi().clone(), "manifold".to_string()));

        if opts.eliminate_affine {
            gammas = eliminate_affine(gammas, sys, vars);
        }
        gammas.retain(|(g, _)| !(g.is_constant() && g.constant_term() >= T::zero()));
        let (gammas, labels) = gammas.into_iter().unzip();
        cases.push(RefuteCase {
            sign_case: SignCase {
                indicators: splits
                    .iter()
                    .zip(&ind)
                    .map(|(s, &i)| (s.name.clone(), i))
                    .collect(),
            },
            bounds,
            gammas,
            labels,
            zetas: sys.identities().to_vec(),
        });
    }
    Ok(cases)
}

/// `(c, rest)` with `g = c·x + rest` when `x` enters `g` at most affinely
/// with a numeric coefficient.
fn affine_in<T: Scalar>(g: &Polynomial<T>, x: VarId) -> Option<(T, Polynomial<T>)> {
    let lin = Monomial::var(x);
    let mut c = T::zero();
    let mut rest = Polynomial::zero();
    for (m, &k) in g.terms() {
        if *m == lin {
            c = k;
        } else if m.exponent(x) > 0 {
            return None;
        } else {
            rest += &Polynomial::term(k, m.clone());
        }
    }
    Some((c, rest))
}

fn eliminate_affine<T: Scalar>(
    mut gammas: Vec<(Polynomial<T>, String)>,
    sys: &SymbolicSystem<T>,
    vars: &Vars,
) -> Vec<(Polynomial<T>, String)> {
    for &x in sys.state_vars() {
        if sys.identities().iter().any(|z| z.contains(x)) {
            continue;
        }
        let involved: Vec<usize> = (0..gammas.len()).filter(|&i| gammas[i].0.contains(x)).collect();
        if involved.is_empty() {
            continue;
        }
        let Some(forms) = involved
            .iter()
            .map(|&i| affine_in(&gammas[i].0, x))
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let name = vars.name(x);
        let mut produced = Vec::new();
        for (a, (cl, rl)) in forms.iter().enumerate() {
            if *cl <= T::zero() {
                continue;
            }
            for (b, (cu, ru)) in forms.iter().enumerate() {
                if *cu >= T::zero() {
                    continue;
                }
                let combo = &rl.scale(-*cu) + &ru.scale(*cl);
                produced.push((
                    combo,
                    format!(
                        "{} + {} without {name}",
                        gammas[involved[a]].1, gammas[involved[b]].1
                    ),
                ));
            }
        }
        let mut kept: Vec<_> = gammas
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !involved.contains(i))
            .map(|(_, g)| g)
            .collect();
        kept.extend(produced);
        gammas = kept;
    }
    gammas
}

/// `p₀` with its multiplier variables.
#[derive(Debug, Clone)]
pub struct P0<T> {
    pub poly: Polynomial<T>,
    /// `p'ₗ` for each ζ, free.
    pub zeta_multipliers: Vec<VarId>,
    /// `(S, p_S)` for each γ product, nonnegative.
    pub gamma_multipliers: Vec<(Vec<usize>, VarId)>,
}

/// Registers multipliers named `{prefix}z{l}` and `{prefix}g{S}`.
pub fn build_p0<T: Scalar>(
    case: &RefuteCase<T>,
    product_order: usize,
    vars: &mut Vars,
    prefix: &str,
) -> Result<P0<T>, RefuteError> {
    if !(1..=2).contains(&product_order) {
        return Err(RefuteError::ProductOrder(product_order));
    }
    let mut poly = Polynomial::constant(-T::one());
    let mut zeta_multipliers = Vec::new();
    for (l, z) in case.zetas.iter().enumerate() {
        let p = vars.register(&format!("{prefix}z{}", l + 1), VarClass::Decision)?;
        poly = &poly - &(&Polynomial::var(p) * z);
        zeta_multipliers.push(p);
    }
    let n = case.gammas.len();
    let mut subsets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if product_order == 2 {
        for i in 0..n {
            for j in i + 1..n {
                subsets.push(vec![i, j]);
            }
        }
    }
    let mut gamma_multipliers = Vec::new();
    for s in subsets {
        let tag: String = s.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("_");
        let p = vars.register(&format!("{prefix}g{tag}"), VarClass::Decision)?;
        let prod = s
            .iter()
            .fold(Polynomial::one(), |acc, &i| &acc * &case.gammas[i]);
        poly = &poly - &(&Polynomial::var(p) * &prod);
        gamma_multipliers.push((s, p));
    }
    Ok(P0 {
        poly,
        zeta_multipliers,
        gamma_multipliers,
    })
}

/// `p₀ = 𝒙ᵀQ𝒙` with decision-only entries.
#[derive(Debug, Clone)]
pub struct GramSpec<T> {
    pub basis: Vec<Monomial>,
    pub q: Vec<Vec<Polynomial<T>>>,
    pub p0: Polynomial<T>,
}

impl<T: Scalar> GramSpec<T> {
    /// `Σᵢⱼ Qᵢⱼ 𝒙ᵢ𝒙ⱼ`.
    pub fn expand(&self) -> Polynomial<T> {
        let mut out = Polynomial::zero();
        for (i, bi) in self.basis.iter().enumerate() {
            for (j, bj) in self.basis.iter().enumerate() {
                out += &self.q[i][j].mul_monomial(T::one(), &bi.mul(bj));
            }
        }
        out
    }
}

/// All monomials in `vars` of degree `≤ degree`, by degree, then with
/// higher powers of earlier variables first.
pub fn monomial_basis(vars: &[VarId], degree: u32) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut layer = vec![Monomial::one()];
    for _ in 0..degree {
        let mut next: Vec<Monomial> = Vec::new();
        for m in &layer {
            for &v in vars {
                let p = m.mul(&Monomial::var(v));
                if !next.contains(&p) {
                    next.push(p);
                }
            }
        }
        next.sort_by(|a, b| b.cmp(a));
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Gram matrix over the monomials in the state variables of `p0` (ordered as
/// in `state_order`). Coefficients shared by several basis pairs are split
/// equally among them.
pub fn build_gram<T: Scalar>(
    p0: &Polynomial<T>,
    basis_degree: u32,
    state_order: &[VarId],
) -> Result<GramSpec<T>, RefuteError> {
    let present: Vec<VarId> = state_order
        .iter()
        .copied()
        .filter(|&v| p0.contains(v))
        .collect();
    let degree = p0.degree_in(VarClass::State).max(0) as u32;
    if degree > 2 * basis_degree {
        return Err(RefuteError::DegreeOverflow {
            degree,
            basis_degree,
        });
    }
    let basis = monomial_basis(&present, basis_degree);
    let nb = basis.len();
    let mut pairs: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..nb {
        for j in i..nb {
            pairs.entry(basis[i].mul(&basis[j])).or_default().push((i, j));
        }
    }
    let mut q = vec![vec![Polynomial::zero(); nb]; nb];
    for (mono, coef) in p0.collect_by_state() {
        let Some(ps) = pairs.get(&mono) else {
            // every monomial of degree ≤ 2·basis_degree is a product of two basis elements
            unreachable!("monomial outside the Gram span");
        };
        let share = T::one() / T::lit(ps.len() as f64);
        for &(i, j) in ps {
            if i == j {
                q[i][i] += &coef.scale(share);
            } else {
                let half = coef.scale(share / T::lit(2.0));
                q[i][j] += &half;
                q[j][i] += &half;
            }
        }
    }
    Ok(GramSpec {
        basis,
        q,
        p0: p0.clone(),
    })
}
