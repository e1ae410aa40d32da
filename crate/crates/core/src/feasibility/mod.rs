//! PSD feasibility of the per-case Gram matrices over `θ` and the multipliers.

pub mod eigen;
mod solver;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{CompiledPoly, Polynomial, VarClass, VarId, Vars};
use crate::refute::{build_gram, build_p0, enumerate_cases, GramSpec, RefuteCase, RefuteError, RefuteOptions, P0};
use crate::safety_index::{elementary_symmetric, SafetyIndexFamily, K_MIN};
use crate::scalar::Scalar;
use crate::system::SymbolicSystem;

pub use eigen::{min_eigenvalue, symmetric_eigen, Eigen, SymMatrix};
pub use solver::{solve, RestartSummary, SolverConfig, SolverFailure};

#[derive(Debug, Error)]
pub enum FeasibilityError {
    #[error(transparent)]
    Refute(#[from] RefuteError),
    #[error("decision vector has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions<T> {
    pub eta: T,
    pub aux_splits: Vec<Polynomial<T>>,
    pub product_order: usize,
    /// `None` picks the smallest degree that spans each case's `p₀`.
    pub basis_degree: Option<u32>,
    pub refute: RefuteOptions,
}

/// One refute case with its certificate polynomial and Gram form.
#[derive(Debug, Clone)]
pub struct CaseProblem<T> {
    pub refute: RefuteCase<T>,
    pub p0: P0<T>,
    pub gram: GramSpec<T>,
    /// Gram entries over local slots `[k₁…kₙ, ζ-multipliers, γ-multipliers]`.
    compiled: Vec<Vec<CompiledPoly<T>>>,
    /// Start of this case's multipliers in the flat decision vector.
    offset: usize,
}

impl<T> CaseProblem<T> {
    pub fn num_zeta(&self) -> usize {
        self.p0.zeta_multipliers.len()
    }

    pub fn num_gamma(&self) -> usize {
        self.p0.gamma_multipliers.len()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }
}

/// The full feasibility problem. Flat decision layout:
/// `[a₁…aₙ, case₀ ζ-mult, case₀ γ-mult, case₁ ζ-mult, …]` with roots `a`.
#[derive(Debug, Clone)]
pub struct SynthesisProblem<T> {
    theta: Vec<VarId>,
    cases: Vec<CaseProblem<T>>,
    dim: usize,
}

impl<T: Scalar> SynthesisProblem<T> {
    pub fn build(
        fam: &SafetyIndexFamily<T>,
        sys: &SymbolicSystem<T>,
        vars: &mut Vars,
        opts: &SynthesisOptions<T>,
    ) -> Result<Self, FeasibilityError> {
        let refute = enumerate_cases(fam, sys, &opts.aux_splits, opts.eta, vars, &opts.refute)?;
        Self::from_cases(fam, sys, vars, refute, opts)
    }

    pub fn from_cases(
        fam: &SafetyIndexFamily<T>,
        sys: &SymbolicSystem<T>,
        vars: &mut Vars,
        refute: Vec<RefuteCase<T>>,
        opts: &SynthesisOptions<T>,
    ) -> Result<Self, FeasibilityError> {
        let theta = fam.theta().to_vec();
        let mut offset = theta.len();
        let mut cases = Vec::with_capacity(refute.len());
        for (ci, case) in refute.into_iter().enumerate() {
            let p0 = build_p0(&case, opts.product_order, vars, &format!("c{ci}_"))?;
            let degree = p0.poly.degree_in(VarClass::State).max(0) as u32;
            let bd = opts.basis_degree.unwrap_or(degree.div_ceil(2).max(1));
            let gram = build_gram(&p0.poly, bd, sys.state_vars())?;
            let mut local: Vec<VarId> = theta.clone();
            local.extend(&p0.zeta_multipliers);
            local.extend(p0.gamma_multipliers.iter().map(|(_, v)| *v));
            let slot = |v: VarId| local.iter().position(|&w| w == v);
            let compiled = gram
                .q
                .iter()
                .map(|row| row.iter().map(|e| e.compile(slot)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(RefuteError::from)?;
            let width = p0.zeta_multipliers.len() + p0.gamma_multipliers.len();
            cases.push(CaseProblem {
                refute: case,
                p0,
                gram,
                compiled,
                offset,
            });
            offset += width;
        }
        Ok(Self {
            theta,
            cases,
            dim: offset,
        })
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[VarId] {
        &self.theta
    }

    pub fn cases(&self) -> &[CaseProblem<T>] {
        &self.cases
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lower bound per flat coordinate (`-∞` for ζ-multipliers).
    pub fn lower_bounds(&self) -> Vec<T> {
        let mut lo = vec![T::lit(K_MIN); self.order()];
        for c in &self.cases {
            lo.extend(std::iter::repeat(T::neg_infinity()).take(c.num_zeta()));
            lo.extend(std::iter::repeat(T::zero()).take(c.num_gamma()));
        }
        lo
    }

    /// Local slot values `[k, multipliers]` of case `ci` for a flat vector.
    pub(crate) fn local_values(&self, ci: usize, k: &[T], flat: &[T]) -> Vec<T> {
        let c = &self.cases[ci];
        let mut x = k.to_vec();
        x.extend_from_slice(&flat[c.offset..c.offset + c.num_zeta() + c.num_gamma()]);
        x
    }

    pub(crate) fn compiled(&self, ci: usize) -> &[Vec<CompiledPoly<T>>] {
        &self.cases[ci].compiled
    }

    /// Numeric Gram matrices at a decision vector.
    pub fn eval_grams(&self, d: &DecisionVector) -> Result<Vec<SymMatrix<T>>, FeasibilityError> {
        let flat = self.flatten(d)?;
        let k = gains(&flat[..self.order()]);
        Ok((0..self.cases.len())
            .map(|ci| {
                let x = self.local_values(ci, &k, &flat);
                eval_compiled(self.compiled(ci), &x)
            })
            .collect())
    }

    pub fn flatten(&self, d: &DecisionVector) -> Result<Vec<T>, FeasibilityError> {
        let nz: usize = self.cases.iter().map(CaseProblem::num_zeta).sum();
        let ng: usize = self.cases.iter().map(CaseProblem::num_gamma).sum();
        let got = d.theta.len() + d.zeta_multipliers.len() + d.gamma_multipliers.len();
        if d.theta.len() != self.order() || d.zeta_multipliers.len() != nz || d.gamma_multipliers.len() != ng {
            return Err(FeasibilityError::Dimension {
                expected: self.dim,
                got,
            });
        }
        let mut flat: Vec<T> = d.theta.iter().map(|&x| T::lit(x)).collect();
        let (mut zi, mut gi) = (0, 0);
        for c in &self.cases {
            for _ in 0..c.num_zeta() {
                flat.push(T::lit(d.zeta_multipliers[zi]));
                zi += 1;
            }
            for _ in 0..c.num_gamma() {
                flat.push(T::lit(d.gamma_multipliers[gi]));
                gi += 1;
            }
        }
        Ok(flat)
    }

    pub fn unflatten(&self, flat: &[T]) -> DecisionVector {
        let n = self.order();
        let mut d = DecisionVector {
            theta: flat[..n].iter().map(|x| x.to_f64_lossy()).collect(),
            zeta_multipliers: Vec::new(),
            gamma_multipliers: Vec::new(),
        };
        for c in &self.cases {
            let z = &flat[c.offset..c.offset + c.num_zeta()];
            let g = &flat[c.offset + c.num_zeta()..c.offset + c.num_zeta() + c.num_gamma()];
            d.zeta_multipliers.extend(z.iter().map(|x| x.to_f64_lossy()));
            d.gamma_multipliers.extend(g.iter().map(|x| x.to_f64_lossy()));
        }
        d
    }

    /// Assembles a certificate for a flat decision vector.
    pub fn certificate(&self, flat: &[T], tolerance: f64) -> Certificate {
        let decision = self.unflatten(flat);
        let grams = self
            .eval_grams(&decision)
            .expect("flat vector built from this problem");
        let min_eigenvalues: Vec<f64> = grams
            .iter()
            .map(|q| min_eigenvalue(q).0.to_f64_lossy())
            .collect();
        let margin = T::lit(solver::DEFAULT_MARGIN);
        let residual = solver::penalty_from_eigs(
            &min_eigenvalues.iter().map(|&x| T::lit(x)).collect::<Vec<_>>(),
            margin,
        )
        .to_f64_lossy();
        let valid = min_eigenvalues.iter().all(|&l| l >= -tolerance);
        Certificate {
            k: gains(&decision.theta),
            decision,
            case_labels: self.cases.iter().map(|c| c.refute.sign_case.label()).collect(),
            min_eigenvalues,
            tolerance,
            residual,
            valid,
            q: grams
                .iter()
                .map(|m| m.rows().iter().map(|r| r.iter().map(|x| x.to_f64_lossy()).collect()).collect())
                .collect(),
            seed: None,
            config_hash: None,
            restarts: Vec::new(),
        }
    }

    /// Basis monomials per case, rendered for audit output.
    pub fn basis_names(&self, vars: &Vars) -> Vec<Vec<String>> {
        self.cases
            .iter()
            .map(|c| c.gram.basis.iter().map(|m| m.display(vars).to_string()).collect())
            .collect()
    }
}

pub(crate) fn eval_compiled<T: Scalar>(q: &[Vec<CompiledPoly<T>>], x: &[T]) -> SymMatrix<T> {
    let n = q.len();
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = q[i][j].eval(x);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Gains `k` from roots `a`.
pub fn gains<T: Scalar>(roots: &[T]) -> Vec<T> {
    elementary_symmetric(roots)[1..].to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    /// Index roots `a₁…aₙ` (for `n = 1`, the gain `k` itself).
    pub theta: Vec<f64>,
    /// `p'` of every case, concatenated in case order.
    pub zeta_multipliers: Vec<f64>,
    /// `p_S` of every case, concatenated in case order.
    pub gamma_multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub decision: DecisionVector,
    /// Gains derived from `decision.theta`.
    pub k: Vec<f64>,
    pub case_labels: Vec<String>,
    pub min_eigenvalues: Vec<f64>,
    pub tolerance: f64,
    /// Penalty value at `decision`.
    pub residual: f64,
    pub valid: bool,
    /// Numeric Gram matrices per case.
    pub q: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restarts: Vec<RestartSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub valid: bool,
    pub min_eigenvalues: Vec<f64>,
    pub diagnostics: Vec<String>,
}

/// Re-derives every Gram matrix by symbolic substitution, checks the sign
/// constraints and `λ_min ≥ -tolerance` per case.
pub fn check_certificate<T: Scalar>(
    problem: &SynthesisProblem<T>,
    cert: &Certificate,
    vars: &Vars,
) -> CertificateCheck {
    let mut diagnostics = Vec::new();
    let d = &cert.decision;
    if problem.flatten(d).is_err() {
        return CertificateCheck {
            valid: false,
            min_eigenvalues: Vec::new(),
            diagnostics: vec![format!(
                "decision vector does not match the problem ({} entries expected)",
                problem.dim()
            )],
        };
    }
    for (i, &a) in d.theta.iter().enumerate() {
        if !(a >= K_MIN) {
            diagnostics.push(format!("theta[{i}] = {a} is below {K_MIN}"));
        }
    }
    let k = gains(&d.theta);
    let mut assignment: HashMap<VarId, T> = problem
        .theta
        .iter()
        .zip(&k)
        .map(|(&v, &x)| (v, T::lit(x)))
        .collect();
    let (mut zi, mut gi) = (0, 0);
    for (ci, c) in problem.cases.iter().enumerate() {
        for &v in &c.p0.zeta_multipliers {
            assignment.insert(v, T::lit(d.zeta_multipliers[zi]));
            zi += 1;
        }
        for (_, v) in &c.p0.gamma_multipliers {
            let x = d.gamma_multipliers[gi];
            if !(x >= 0.0) {
                diagnostics.push(format!(
                    "case {ci}: multiplier {} = {x} violates its sign constraint (must be >= 0)",
                    vars.name(*v)
                ));
            }
            assignment.insert(*v, T::lit(x));
            gi += 1;
        }
    }
    let mut min_eigenvalues = Vec::with_capacity(problem.cases.len());
    for (ci, c) in problem.cases.iter().enumerate() {
        let n = c.gram.basis.len();
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = c.gram.q[i][j]
                    .evaluate(&assignment)
                    .map(|x| x.to_f64_lossy())
                    .unwrap_or(f64::NAN);
                m.set(i, j, v);
            }
        }
        let lam = min_eigenvalue(&m).0;
        if !(lam >= -cert.tolerance) {
            diagnostics.push(format!(
                "case {ci} ({}): min eigenvalue {lam:.3e} is below -{:.1e} by {:.3e}",
                c.refute.sign_case.label(),
                cert.tolerance,
                -cert.tolerance - lam
            ));
        }
        min_eigenvalues.push(lam);
    }
    CertificateCheck {
        valid: diagnostics.is_empty(),
        min_eigenvalues,
        diagnostics,
    }
}
