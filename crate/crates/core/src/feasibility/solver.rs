//! Multi-start projected-gradient search on
//! `F(d) = Σ_cases max(0, ε - λ_min(Qᵢ(d)))²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{eval_compiled, gains, min_eigenvalue, Certificate, SynthesisProblem};
use crate::safety_index::{gain_jacobian, K_MIN};
use crate::scalar::Scalar;

pub(crate) const DEFAULT_MARGIN: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub restarts: usize,
    pub iterations: usize,
    /// Acceptance tolerance on `λ_min`.
    pub tolerance: f64,
    /// Target `λ_min ≥ margin` inside the penalty.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            iterations: 5000,
            tolerance: 1e-6,
            margin: DEFAULT_MARGIN,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub k: Vec<f64>,
    pub residual: f64,
    pub worst_eigenvalue: f64,
    pub valid: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Error)]
#[error("no feasible certificate found: best residual {residual:.3e}, worst min eigenvalue {worst:.3e}")]
pub struct SolverFailure {
    pub best: Certificate,
    pub residual: f64,
    pub worst: f64,
}

pub(crate) fn penalty_from_eigs<T: Scalar>(eigs: &[T], margin: T) -> T {
    eigs.iter()
        .map(|&l| {
            let g = (margin - l).max(T::zero());
            g * g
        })
        .sum()
}

struct Evaluation<T> {
    value: T,
    eigs: Vec<T>,
}

impl<T: Scalar> SynthesisProblem<T> {
    fn penalty(&self, flat: &[T], margin: T, grad: Option<&mut [T]>) -> Evaluation<T> {
        let n = self.order();
        let k = gains(&flat[..n]);
        let mut eigs = Vec::with_capacity(self.cases().len());
        let mut value = T::zero();
        let mut gk = vec![T::zero(); n];
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|x| *x = T::zero());
        }
        for ci in 0..self.cases().len() {
            let x = self.local_values(ci, &k, flat);
            let q = self.compiled(ci);
            let m = eval_compiled(q, &x);
            let (lam, v) = min_eigenvalue(&m);
            eigs.push(lam);
            let gap = margin - lam;
            if gap <= T::zero() {
                continue;
            }
            value = value + gap * gap;
            let Some(g) = grad.as_deref_mut() else { continue };
            // ∂λ/∂x = vᵀ(∂Q/∂x)v; F' = -2·gap·∂λ/∂x
            let mut local = vec![T::zero(); x.len()];
            let w = -T::lit(2.0) * gap;
            for a in 0..q.len() {
                for b in 0..q.len() {
                    q[a][b].accumulate_gradient(&x, w * v[a] * v[b], &mut local);
                }
            }
            for i in 0..n {
                gk[i] = gk[i] + local[i];
            }
            let off = self.cases()[ci].offset();
            for (j, &lj) in local[n..].iter().enumerate() {
                g[off + j] = g[off + j] + lj;
            }
        }
        if let Some(g) = grad {
            let jac = gain_jacobian(&flat[..n]);
            for j in 0..n {
                g[j] = (0..n).map(|i| gk[i] * jac[i][j]).sum();
            }
        }
        Evaluation { value, eigs }
    }
}

fn project<T: Scalar>(x: &mut [T], lo: &[T]) {
    for (xi, &l) in x.iter_mut().zip(lo) {
        if *xi < l {
            *xi = l;
        }
    }
}

struct RestartResult<T> {
    flat: Vec<T>,
    value: T,
    worst: T,
    iterations: usize,
}

fn initial_point<T: Scalar>(problem: &SynthesisProblem<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut x: Vec<T> = (0..problem.order())
        .map(|_| T::lit(rng.gen_range(K_MIN..1.0)))
        .collect();
    for c in problem.cases() {
        x.extend((0..c.num_zeta()).map(|_| T::lit(rng.gen_range(-1.0..1.0))));
        x.extend((0..c.num_gamma()).map(|_| T::lit(rng.gen_range(0.0..1.0))));
    }
    x
}

fn run_restart<T: Scalar>(problem: &SynthesisProblem<T>, cfg: &SolverConfig, index: usize) -> RestartResult<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let lo = problem.lower_bounds();
    let margin = T::lit(cfg.margin);
    let mut x = initial_point(problem, &mut rng);
    let mut grad = vec![T::zero(); x.len()];
    let mut cur = problem.penalty(&x, margin, Some(&mut grad));
    let mut step = T::one();
    let mut iterations = 0;
    let mut trial = vec![T::zero(); x.len()];
    while iterations < cfg.iterations && cur.value > T::zero() {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..x.len() {
                trial[i] = x[i] - step * grad[i];
            }
            project(&mut trial, &lo);
            let decrease: T = (0..x.len()).map(|i| grad[i] * (x[i] - trial[i])).sum();
            let next = problem.penalty(&trial, margin, None);
            if next.value <= cur.value - T::lit(1e-4) * decrease && next.value < cur.value {
                x.copy_from_slice(&trial);
                cur = problem.penalty(&x, margin, Some(&mut grad));
                step = (step * T::lit(2.0)).min(T::lit(1e6));
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    let worst = cur
        .eigs
        .iter()
        .copied()
        .fold(T::infinity(), |a, b| a.min(b));
    RestartResult {
        flat: x,
        value: cur.value,
        worst,
        iterations,
    }
}

/// Multi-start search; restarts run in parallel and are reduced by smallest
/// residual, ties to the lowest restart index.
pub fn solve<T: Scalar>(problem: &SynthesisProblem<T>, cfg: &SolverConfig) -> Result<Certificate, SolverFailure> {
    let results: Vec<RestartResult<T>> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|i| run_restart(problem, cfg, i))
        .collect();
    let summaries: Vec<RestartSummary> = results
        .iter()
        .enumerate()
        .map(|(index, r)| RestartSummary {
            index,
            k: gains(&r.flat[..problem.order()])
                .iter()
                .map(|x| x.to_f64_lossy())
                .collect(),
            residual: r.value.to_f64_lossy(),
            worst_eigenvalue: r.worst.to_f64_lossy(),
            valid: r.worst.to_f64_lossy() >= -cfg.tolerance,
            iterations: r.iterations,
        })
        .collect();
    let best = (0..results.len())
        .min_by(|&a, &b| {
            results[a]
                .value
                .partial_cmp(&results[b].value)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        })
        .expect("at least one restart");
    let mut cert = problem.certificate(&results[best].flat, cfg.tolerance);
    cert.seed = Some(cfg.seed);
    cert.restarts = summaries;
    if cert.valid {
        Ok(cert)
    } else {
        let worst = cert.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Err(SolverFailure {
            residual: cert.residual,
            worst,
            best: cert,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::double_integrator;
    use super::super::{check_certificate, SynthesisOptions, SynthesisProblem};
    use super::*;
    use crate::polynomial::Polynomial;
    use crate::refute::{RefuteCase, RefuteOptions, SignCase};

    fn quick(seed: u64) -> SolverConfig {
        SolverConfig {
            restarts: 4,
            iterations: 3000,
            seed,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn finds_feasible_gain_for_double_integrator() {
        let (vars, _, _, problem) = double_integrator(0.1);
        let cert = solve(&problem, &quick(7)).unwrap();
        assert!(cert.valid && cert.k[0] > 1.1, "{cert:?}");
        assert!(check_certificate(&problem, &cert, &vars).valid);
        assert_eq!(cert.restarts.len(), 4);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (_, _, _, problem) = double_integrator(0.1);
        let a = solve(&problem, &quick(3)).unwrap();
        let b = solve(&problem, &quick(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_minus_one_is_infeasible() {
        let (mut vars, sys, fam, _) = double_integrator(0.1);
        let empty = RefuteCase {
            sign_case: SignCase { indicators: vec![] },
            bounds: vec![],
            gammas: vec![],
            labels: vec![],
            zetas: vec![],
        };
        let opts = SynthesisOptions {
            eta: 0.1,
            aux_splits: Vec::<Polynomial<f64>>::new(),
            product_order: 1,
            basis_degree: Some(1),
            refute: RefuteOptions::default(),
        };
        let problem = SynthesisProblem::from_cases(&fam, &sys, &mut vars, vec![empty], &opts).unwrap();
        let err = solve(&problem, &quick(0)).unwrap_err();
        assert!(err.residual >= 1.0);
        assert!(!err.best.valid);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, _, _, problem) = double_integrator(0.1);
        let x = vec![0.4, 0.3, 0.2];
        let mut g = vec![0.0; 3];
        let f0 = problem.penalty(&x, 1e-5, Some(&mut g)).value;
        for j in 0..3 {
            let mut xp = x.clone();
            xp[j] += 1e-7;
            let fd = (problem.penalty(&xp, 1e-5, None).value - f0) / 1e-7;
            assert!((fd - g[j]).abs() < 1e-4, "{j}: {fd} vs {}", g[j]);
        }
    }
}
