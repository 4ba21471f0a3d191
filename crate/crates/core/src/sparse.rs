//! Compressed-row sparse complex matrices and state vectors.

use std::ops::{Deref, DerefMut};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default tolerance for hermiticity certificates.
pub const CERT_TOL: f64 = 1e-12;
/// Row count from which matrix-vector products run in parallel.
const PARALLEL_ROWS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Certificate {
    #[default]
    None,
    Hermitian,
    AntiHermitian,
}

/// Linear maps usable by the Krylov routines.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[C64], y: &mut [C64]);
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<C64>,
    cert: Certificate,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry") += v;
            } else {
                indices.push(c as u32);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        SparseOperator { nrows, ncols, indptr, indices, values, cert: Certificate::None }.pruned()
    }

    /// Row-wise construction: `row(r)` yields `(col, value)` entries.
    pub fn from_rows<F>(nrows: usize, ncols: usize, mut row: F) -> Self
    where
        F: FnMut(usize, &mut Vec<(usize, C64)>),
    {
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut buf = Vec::new();
        for r in 0..nrows {
            buf.clear();
            row(r, &mut buf);
            buf.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < buf.len() {
                let c = buf[i].0;
                let mut v = buf[i].1;
                i += 1;
                while i < buf.len() && buf[i].0 == c {
                    v += buf[i].1;
                    i += 1;
                }
                if v != ZERO {
                    indices.push(c as u32);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        SparseOperator { nrows, ncols, indptr, indices, values, cert: Certificate::None }
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|v| *v != ZERO) {
            return self;
        }
        let nrows = self.nrows;
        let ncols = self.ncols;
        let cert = self.cert;
        let mut out = Self::from_rows(nrows, ncols, |r, buf| {
            for (c, v) in self.row(r) {
                buf.push((c, v));
            }
        });
        out.cert = cert;
        out
    }

    pub fn zero(nrows: usize, ncols: usize) -> Self {
        SparseOperator {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
            cert: Certificate::None,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_rows(d.len(), d.len(), |r, buf| buf.push((r, C64::new(d[r], 0.0))))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }
    pub fn certificate(&self) -> Certificate {
        self.cert
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].iter().zip(&self.values[a..b]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|e| e.0 == c).map_or(ZERO, |e| e.1)
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn apply_state(&self, x: &StateVector) -> StateVector {
        StateVector(self.apply(x))
    }

    fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        let row = |r: usize| {
            let mut acc = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            acc
        };
        if self.nrows >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr = row(r));
        } else {
            y.iter_mut().enumerate().for_each(|(r, yr)| *yr = row(r));
        }
    }

    pub fn adjoint(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![ZERO; self.nnz()];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                indices[slot] = r as u32;
                values[slot] = v.conj();
                next[c] += 1;
            }
        }
        SparseOperator { nrows: self.ncols, ncols: self.nrows, indptr: counts, indices, values, cert: self.cert }
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out.cert = match (self.cert, s.im == 0.0, s.re == 0.0) {
            (Certificate::Hermitian, true, _) | (Certificate::AntiHermitian, _, true) => Certificate::Hermitian,
            (Certificate::AntiHermitian, true, _) | (Certificate::Hermitian, _, true) => Certificate::AntiHermitian,
            _ => Certificate::None,
        };
        if s == ZERO {
            return Self::zero(self.nrows, self.ncols);
        }
        out
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `a*self + b*other`.
    pub fn lincomb(&self, a: C64, other: &Self, b: C64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "lincomb shape");
        Self::from_rows(self.nrows, self.ncols, |r, buf| {
            buf.extend(self.row(r).map(|(c, v)| (c, a * v)));
            buf.extend(other.row(r).map(|(c, v)| (c, b * v)));
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lincomb(ONE, other, ONE)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.lincomb(ONE, other, -ONE)
    }

    /// Sum of many operators of equal shape.
    pub fn sum<'a>(nrows: usize, ncols: usize, ops: impl IntoIterator<Item = (C64, &'a SparseOperator)>) -> Self {
        let ops: Vec<(C64, &SparseOperator)> = ops.into_iter().collect();
        Self::from_rows(nrows, ncols, |r, buf| {
            for (s, op) in &ops {
                buf.extend(op.row(r).map(|(c, v)| (c, *s * v)));
            }
        })
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul shape");
        let mut acc = vec![ZERO; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut touched = Vec::new();
        Self::from_rows(self.nrows, other.ncols, |r, buf| {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = ZERO;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                buf.push((c, acc[c]));
            }
        })
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        self.matmul(other).add(&other.matmul(self))
    }

    /// Kronecker product `self (x) other` with `self` as the slow index.
    pub fn kron(&self, other: &Self) -> Self {
        let (n2r, n2c) = (other.nrows, other.ncols);
        Self::from_rows(self.nrows * n2r, self.ncols * n2c, |r, buf| {
            let (ra, rb) = (r / n2r, r % n2r);
            for (ca, va) in self.row(ra) {
                for (cb, vb) in other.row(rb) {
                    buf.push((ca * n2c + cb, va * vb));
                }
            }
        })
    }

    /// Largest entry modulus (0 for the empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    pub fn antihermiticity_defect(&self) -> f64 {
        self.add(&self.adjoint()).max_abs()
    }

    /// Verifies `max |A - A^dag| <= tol` and records the certificate.
    pub fn certify_hermitian(mut self, tol: f64) -> Result<Self> {
        let d = self.hermiticity_defect();
        if d > tol {
            return Err(Error::NotCertified { kind: "hermitian", defect: d });
        }
        self.cert = Certificate::Hermitian;
        Ok(self)
    }

    pub fn certify_antihermitian(mut self, tol: f64) -> Result<Self> {
        let d = self.antihermiticity_defect();
        if d > tol {
            return Err(Error::NotCertified { kind: "anti-hermitian", defect: d });
        }
        self.cert = Certificate::AntiHermitian;
        Ok(self)
    }

    /// `<x, A x>`.
    pub fn expectation(&self, x: &[C64]) -> C64 {
        inner(x, &self.apply(x))
    }

    /// Restriction to the index subset `keep` (rows and columns).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.ncols];
        for (i, &k) in keep.iter().enumerate() {
            pos[k] = i;
        }
        let mut out = Self::from_rows(keep.len(), keep.len(), |r, buf| {
            for (c, v) in self.row(keep[r]) {
                if pos[c] != usize::MAX {
                    buf.push((pos[c], v));
                }
            }
        });
        out.cert = self.cert;
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, ZERO);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>, drop_below: f64) -> Self {
        Self::from_rows(m.nrows(), m.ncols(), |r, buf| {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v.norm() > drop_below {
                    buf.push((c, v));
                }
            }
        })
    }

    /// Diagonal entries as reals (imaginary parts dropped).
    pub fn diagonal_real(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r).re).collect()
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.nrows
    }
    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        self.matvec_into(x, y)
    }
}

/// `i * A` for a hermitian `A` is anti-hermitian and `-i * B` for anti-hermitian
/// `B` is hermitian; this wrapper applies `scale * A` without materializing it.
pub struct ScaledOperator<'a> {
    pub op: &'a SparseOperator,
    pub scale: C64,
}

impl LinearOperator for ScaledOperator<'_> {
    fn dim(&self) -> usize {
        self.op.nrows
    }
    fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        self.op.matvec_into(x, y);
        for v in y.iter_mut() {
            *v *= self.scale;
        }
    }
}

/// Complex amplitudes over a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub Vec<C64>);

impl Deref for StateVector {
    type Target = Vec<C64>;
    fn deref(&self) -> &Vec<C64> {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut Vec<C64> {
        &mut self.0
    }
}

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![ZERO; dim])
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = ONE;
        v
    }

    /// Complex-Gaussian amplitudes, normalized.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut v = StateVector(
            (0..dim)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re, im)
                })
                .collect(),
        );
        v.normalize();
        v
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.0 {
                *v /= n;
            }
        }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        inner(&self.0, &other.0)
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        distance(&self.0, &other.0)
    }

    pub fn scaled(&self, s: C64) -> StateVector {
        StateVector(self.0.iter().map(|v| v * s).collect())
    }
}

/// `<x, y>`, antilinear in `x`.
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn distance(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseOperator {
        SparseOperator::from_triplets(
            3,
            3,
            vec![(0, 1, C64::new(1.0, 2.0)), (2, 0, C64::new(-1.0, 0.5)), (0, 1, ONE), (1, 1, ZERO)],
        )
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = sample();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), C64::new(2.0, 2.0));
    }

    #[test]
    fn adjoint_matches_dense() {
        let a = sample();
        assert_eq!(a.adjoint().to_dense(), a.to_dense().adjoint());
    }

    #[test]
    fn matmul_and_kron_match_dense() {
        let a = sample();
        let b = a.adjoint().add(&SparseOperator::identity(3));
        assert!((a.matmul(&b).to_dense() - a.to_dense() * b.to_dense()).norm() < 1e-14);
        let k = a.kron(&b).to_dense();
        let kd = a.to_dense().kronecker(&b.to_dense());
        assert!((k - kd).norm() < 1e-14);
    }

    #[test]
    fn certificates() {
        let a = sample();
        let h = a.add(&a.adjoint());
        assert!(h.clone().certify_hermitian(1e-12).is_ok());
        assert!(a.clone().certify_hermitian(1e-12).is_err());
        let ah = a.sub(&a.adjoint()).certify_antihermitian(1e-12).unwrap();
        assert_eq!(ah.scale(I).certificate(), Certificate::Hermitian);
    }
}
