//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Dense square matrix, row-major. Callers keep it symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Panics when `rows` is not square.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// Eigenvalues ascending; `vectors[i]` is the unit eigenvector of `values[i]`.
#[derive(Debug, Clone)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

const MAX_SWEEPS: usize = 100;

pub fn symmetric_eigen<T: Scalar>(m: &SymMatrix<T>) -> Eigen<T> {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = SymMatrix::identity(n);
    let scale = a.frobenius();
    let tol = T::epsilon() * scale;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a.get(p, q) * a.get(p, q);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (T::lit(2.0) * apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + theta.hypot(T::one()));
                let c = T::one() / t.hypot(T::one());
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap_or(std::cmp::Ordering::Equal));
    Eigen {
        values: order.iter().map(|&i| a.get(i, i)).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..n).map(|k| v.get(k, i)).collect())
            .collect(),
    }
}

/// Smallest eigenvalue with a unit eigenvector. The empty matrix yields `+∞`.
pub fn min_eigenvalue<T: Scalar>(m: &SymMatrix<T>) -> (T, Vec<T>) {
    if m.dim() == 0 {
        return (T::infinity(), Vec::new());
    }
    if m.dim() == 1 {
        return (m.get(0, 0), vec![T::one()]);
    }
    let e = symmetric_eigen(m);
    (e.values[0], e.vectors[0].clone())
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix<f64> {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let x = rng.gen_range(-3.0..3.0);
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        m
    }

    #[test]
    fn diagonal_and_swap() {
        let d = SymMatrix::<f64>::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]]);
        let (l, v) = min_eigenvalue(&d);
        assert_eq!(l, 1.0);
        assert_eq!(v.iter().map(|x: &f64| x.abs()).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        let s = SymMatrix::<f64>::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (l, v) = min_eigenvalue(&s);
        assert!((l + 1.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].abs() - r).abs() < 1e-15 && (v[0] + v[1]).abs() < 1e-15);
    }

    #[test]
    fn residual_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=12 {
            for _ in 0..20 {
                let m = random_sym(&mut rng, n);
                let e = symmetric_eigen(&m);
                assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
                let mut recon = SymMatrix::<f64>::zeros(n);
                for (lam, vec) in e.values.iter().zip(&e.vectors) {
                    for i in 0..n {
                        for j in 0..n {
                            recon.set(i, j, recon.get(i, j) + lam * vec[i] * vec[j]);
                        }
                    }
                }
                let mut diff = m.clone();
                for i in 0..n {
                    for j in 0..n {
                        diff.set(i, j, m.get(i, j) - recon.get(i, j));
                    }
                }
                assert!(diff.frobenius() <= 1e-8 * m.frobenius());
                let (l, v) = min_eigenvalue(&m);
                let mv = m.mul_vec(&v);
                let res: f64 = mv.iter().zip(&v).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>().sqrt();
                assert!(res <= 1e-9 * m.frobenius());
            }
        }
    }

    #[test]
    fn agrees_with_inertia_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let m = random_sym(&mut rng, 6);
            let got = symmetric_eigen(&m).values;
            let want = oracle::eigenvalues(&m.rows());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-8, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = SymMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = symmetric_eigen(&m);
        assert!((e.values[0] - 1.0).abs() < 1e-6 && (e.values[1] - 3.0).abs() < 1e-6);
    }
}
