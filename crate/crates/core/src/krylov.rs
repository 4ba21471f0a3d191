//! Lanczos time propagation, extremal eigenvalues and dense exponentials.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::{inner, norm, LinearOperator, SparseOperator, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOptions {
    /// Krylov subspace dimension.
    pub dim: usize,
    /// Local error tolerance per substep.
    pub tol: f64,
    /// Substep budget.
    pub max_steps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { dim: 30, tol: 1e-10, max_steps: 100_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KrylovStats {
    pub substeps: usize,
    pub matvecs: usize,
    /// Sum of local error estimates.
    pub error_estimate: f64,
}

struct LanczosBasis {
    vectors: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// `beta_m`, the residual coupling; 0 after a happy breakdown.
    residual: f64,
}

fn lanczos<O: LinearOperator + ?Sized>(op: &O, start: &[C64], m: usize) -> LanczosBasis {
    let n = op.dim();
    let b0 = norm(start);
    let mut v: Vec<C64> = start.iter().map(|x| x / b0).collect();
    let mut vectors = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    let mut w = vec![ZERO; n];
    let mut residual = 0.0;
    let m = m.min(n).max(1);
    for j in 0..m {
        op.apply_into(&v, &mut w);
        let a = inner(&v, &w).re;
        vectors.push(v);
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for q in &vectors {
                let c = inner(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = norm(&w);
        if j + 1 == m {
            residual = b;
            break;
        }
        if b < 1e-13 * (1.0 + a.abs()) {
            residual = 0.0;
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    LanczosBasis { vectors, alpha, beta, residual }
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    symmetric_eigen(&t)
}

/// `e^{-i H t} psi` for hermitian `H` by Lanczos with adaptive substeps.
pub fn expm_hermitian<O: LinearOperator + ?Sized>(
    op: &O,
    psi: &[C64],
    t: f64,
    opts: KrylovOptions,
) -> Result<(Vec<C64>, KrylovStats)> {
    let mut stats = KrylovStats::default();
    let mut v = psi.to_vec();
    if t == 0.0 || norm(psi) == 0.0 {
        return Ok((v, stats));
    }
    let total = t.abs();
    let sign = t.signum();
    let mut done = 0.0;
    let mut tau = total;
    while done < total {
        if stats.substeps >= opts.max_steps {
            return Err(Error::KrylovNonConvergence { achieved: f64::INFINITY, requested: opts.tol });
        }
        let b0 = norm(&v);
        let basis = lanczos(op, &v, opts.dim);
        stats.matvecs += basis.vectors.len();
        let (values, vectors) = tridiagonal_eigen(&basis.alpha, &basis.beta);
        let k = basis.alpha.len();
        tau = tau.min(total - done);
        let coeffs = loop {
            let phase: Vec<C64> =
                values.iter().map(|&l| C64::from_polar(1.0, -sign * l * tau)).collect();
            let mut y = DVector::<C64>::zeros(k);
            for i in 0..k {
                let mut acc = ZERO;
                for j in 0..k {
                    acc += vectors[(i, j)] * phase[j] * vectors[(0, j)];
                }
                y[i] = acc * b0;
            }
            let err = basis.residual * y[k - 1].norm();
            if err <= opts.tol || tau < 1e-15 * total {
                if err > opts.tol {
                    return Err(Error::KrylovNonConvergence { achieved: err, requested: opts.tol });
                }
                stats.error_estimate += err;
                break y;
            }
            tau *= 0.5;
        };
        let mut next = vec![ZERO; v.len()];
        for (c, q) in coeffs.iter().zip(&basis.vectors) {
            for (ni, qi) in next.iter_mut().zip(q) {
                *ni += c * qi;
            }
        }
        v = next;
        done += tau;
        stats.substeps += 1;
        if basis.residual == 0.0 {
            tau = total - done;
        } else {
            tau *= 1.5;
        }
        if total - done < 1e-14 * total {
            break;
        }
    }
    Ok((v, stats))
}

/// Extremal Ritz values `(min, max)` after `iters` Lanczos steps.
pub fn lanczos_extremes<O: LinearOperator + ?Sized>(op: &O, start: &[C64], iters: usize) -> (f64, f64) {
    let basis = lanczos(op, start, iters);
    let (values, _) = tridiagonal_eigen(&basis.alpha, &basis.beta);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest eigenvalue of a hermitian operator: exact for diagonal matrices,
/// dense for `dim <= dense_limit`, Lanczos (200 steps) otherwise.
pub fn max_eigenvalue(op: &SparseOperator, dense_limit: usize) -> f64 {
    let n = op.nrows();
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let diagonal = (0..n).all(|r| op.row(r).all(|(c, _)| c == r));
    if diagonal {
        return op.diagonal_real().into_iter().fold(f64::NEG_INFINITY, f64::max);
    }
    if n <= dense_limit {
        return HermitianEigen::new(&op.to_dense()).values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let start: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 5) as f64 * 0.05)).collect();
    lanczos_extremes(op, &start, 200).1
}

/// Dense `e^{A}` by scaling and squaring with a degree-18 Taylor polynomial.
pub fn dense_expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm1 = (0..n).map(|c| a.column(c).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a.map(|v| v / 2f64.powi(s));
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=18 {
        term = &term * &b / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Eigendecomposition of a hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub vectors: DMatrix<C64>,
    pub values: DVector<f64>,
}

impl HermitianEigen {
    pub fn new(h: &DMatrix<C64>) -> Self {
        let n = h.nrows();
        let m = faer::Mat::<C64>::from_fn(n, n, |r, c| h[(r, c)]);
        let e = m.self_adjoint_eigen(faer::Side::Lower).expect("hermitian eigendecomposition");
        let u = e.U();
        let s = e.S().column_vector();
        HermitianEigen {
            vectors: DMatrix::from_fn(n, n, |r, c| u[(r, c)]),
            values: DVector::from_fn(n, |i, _| s[i].re),
        }
    }

    /// `e^{-iHt} psi`.
    pub fn propagate(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let x = self.vectors.ad_mul(&DVector::from_column_slice(psi));
        let y = DVector::from_iterator(x.len(), x.iter().zip(self.values.iter()).map(|(a, &e)| a * C64::from_polar(1.0, -e * t)));
        (&self.vectors * y).iter().copied().collect()
    }

    /// Matrix of `e^{-iHt}`.
    pub fn propagator(&self, t: f64) -> DMatrix<C64> {
        let mut w = self.vectors.clone();
        for (mut col, &l) in w.column_iter_mut().zip(self.values.iter()) {
            col *= C64::from_polar(1.0, -l * t);
        }
        w * self.vectors.adjoint()
    }
}

/// Symmetric eigendecomposition `(values, vectors)`, values ascending.
fn symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let f = faer::Mat::<f64>::from_fn(n, n, |r, c| m[(r, c)]);
    let e = f.self_adjoint_eigen(faer::Side::Lower).expect("symmetric eigendecomposition");
    let u = e.U();
    let s = e.S().column_vector();
    (DVector::from_fn(n, |i, _| s[i]), DMatrix::from_fn(n, n, |r, c| u[(r, c)]))
}

/// Dense `e^{-i H t}` for hermitian `H`.
pub fn dense_propagator(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    HermitianEigen::new(h).propagator(t)
}

/// Matrix of `e^{B}` for anti-hermitian `B` via `B = i K`, `K` hermitian.
pub fn dense_unitary_exp(b: &DMatrix<C64>) -> DMatrix<C64> {
    let k = b.map(|v| v * C64::new(0.0, -1.0));
    dense_propagator(&k, -1.0)
}

pub fn identity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    (m - DMatrix::<C64>::identity(n, n)).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::StateVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> SparseOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<StateVector> = (0..n).map(|_| StateVector::random(n, &mut rng)).collect();
        let a = SparseOperator::from_rows(n, n, |r, buf| {
            for c in 0..n {
                if (r * 7 + c * 3) % 5 == 0 {
                    buf.push((c, cols[r][c]));
                }
            }
        });
        a.add(&a.adjoint()).scale_real(3.0)
    }

    #[test]
    fn krylov_matches_dense() {
        let h = random_hermitian(120, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = StateVector::random(120, &mut rng);
        let (k, _) = expm_hermitian(&h, &psi, 2.7, KrylovOptions::default()).unwrap();
        let d = dense_propagator(&h.to_dense(), 2.7) * DVector::from_vec(psi.0.clone());
        let diff: f64 = k.iter().zip(d.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-9, "{diff}");
        assert!((norm(&k) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn taylor_expm_matches_eigen_route() {
        let h = random_hermitian(40, 5).to_dense();
        let b = h.map(|v| v * C64::new(0.0, -0.8));
        let e1 = dense_expm(&b);
        let e2 = dense_propagator(&h, 0.8);
        assert!((e1 - e2).norm() < 1e-10);
    }
}
