//! Dense lower-triangular Cholesky on a flat row-major buffer.

use crate::error::{AloqError, Result};

/// Relative jitter ladder tried when a plain factorization fails. Each entry
/// is scaled by the mean diagonal of the matrix.
pub const JITTER_LADDER: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Symmetric matrix stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    fn mean_diagonal(&self) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        (0..self.n).map(|i| self.get(i, i)).sum::<f64>() / self.n as f64
    }
}

#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    /// Lower factor, row-major; entries above the diagonal are zero.
    l: Vec<f64>,
    /// Absolute jitter that was added to the diagonal to succeed.
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `a`, escalating through [`JITTER_LADDER`] on failure.
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        if let Some(l) = try_factor(a, 0.0) {
            return Ok(Cholesky { n: a.n, l, jitter: 0.0 });
        }
        let scale = a.mean_diagonal().abs().max(f64::MIN_POSITIVE);
        for rel in JITTER_LADDER {
            let jitter = rel * scale;
            if let Some(l) = try_factor(a, jitter) {
                return Ok(Cholesky { n: a.n, l, jitter });
            }
        }
        Err(AloqError::Factorization { ladder: JITTER_LADDER.iter().map(|r| r * scale).collect() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.l[i * self.n..i * self.n + i + 1]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `L^T x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let xi = b[i] / self.l[i * n + i];
            b[i] = xi;
            let row = &self.l[i * n..i * n + i];
            for (bk, lik) in b[..i].iter_mut().zip(row) {
                *bk -= lik * xi;
            }
        }
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Solves `L X = B` where `b` holds the columns of `B` back to back.
    pub fn solve_lower_columns(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len() % self.n.max(1), 0);
        if self.n == 0 {
            return;
        }
        for col in b.chunks_exact_mut(self.n) {
            self.solve_lower_in_place(col);
        }
    }
}

fn try_factor(a: &SymMatrix, jitter: f64) -> Option<Vec<f64>> {
    let n = a.n;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                let d = a.data[i * n + i] + jitter - s;
                if !d.is_finite() || d <= 0.0 {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a.data[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without reassociation
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> SymMatrix {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = (-(i as f64 - j as f64).powi(2) / 8.0).exp();
                m.set(i, j, v);
            }
        }
        m.add_diagonal(0.1);
        m
    }

    #[test]
    fn solve_recovers_rhs() {
        let a = spd(7);
        let chol = Cholesky::factor(&a).unwrap();
        assert_eq!(chol.jitter(), 0.0);
        let b: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let x = chol.solve(&b);
        for (i, bi) in b.iter().enumerate() {
            let ax: f64 = (0..7).map(|j| a.get(i, j) * x[j]).sum();
            assert!((ax - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn log_det_of_diagonal() {
        let mut a = SymMatrix::zeros(3);
        a.set(0, 0, 2.0);
        a.set(1, 1, 3.0);
        a.set(2, 2, 5.0);
        let chol = Cholesky::factor(&a).unwrap();
        assert!((chol.log_det() - 30f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_takes_jitter() {
        let mut a = SymMatrix::zeros(2);
        a.data = vec![1.0, 1.0, 1.0, 1.0];
        let chol = Cholesky::factor(&a).unwrap();
        assert!(chol.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_reports_ladder() {
        let mut a = SymMatrix::zeros(2);
        a.data = vec![1.0, 0.0, 0.0, -1.0];
        match Cholesky::factor(&a) {
            Err(AloqError::Factorization { ladder }) => assert_eq!(ladder.len(), JITTER_LADDER.len()),
            other => panic!("expected factorization error, got {other:?}"),
        }
    }
}
