//! Tridiagonal solves for the implicit radial operators.

use crate::scalar::Real;

/// Tridiagonal matrix stored by diagonals: row `i` is
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]` (`lower[0]` and `upper[n-1]` unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

/// Pivot underflow or a non-finite entry during elimination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub row: usize,
}

impl<T: Real> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal { lower: vec![T::zero(); n], diag: vec![T::zero(); n], upper: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s = s + self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s = s + self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Thomas algorithm. Stable without pivoting for the diagonally dominant M-matrices
    /// produced by the implicit steps.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>, SingularPivot> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        let mut c = vec![T::zero(); n];
        let mut d = vec![T::zero(); n];
        let mut pivot = self.diag[0];
        if pivot == T::zero() || !pivot.is_finite() {
            return Err(SingularPivot { row: 0 });
        }
        c[0] = if n > 1 { self.upper[0] / pivot } else { T::zero() };
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            if pivot == T::zero() || !pivot.is_finite() {
                return Err(SingularPivot { row: i });
            }
            c[i] = if i + 1 < n { self.upper[i] / pivot } else { T::zero() };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] = d[i] - c[i] * d[i + 1];
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(SingularPivot { row: n - 1 });
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_diagonally_dominant(
            n in 1usize..40,
            seed in proptest::collection::vec(-1.0f64..1.0, 160),
        ) {
            let mut m = Tridiagonal::zeros(n);
            for i in 0..n {
                m.lower[i] = if i > 0 { seed[i] } else { 0.0 };
                m.upper[i] = if i + 1 < n { seed[40 + i] } else { 0.0 };
                m.diag[i] = m.lower[i].abs() + m.upper[i].abs() + 0.5 + seed[80 + i].abs();
            }
            let x: Vec<f64> = (0..n).map(|i| seed[120 + i % 40]).collect();
            let b = m.apply(&x);
            let got = m.solve(&b).unwrap();
            for (g, e) in got.iter().zip(&x) {
                prop_assert!((g - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_detected() {
        let m = Tridiagonal { lower: vec![0.0, 1.0], diag: vec![1.0, 1.0], upper: vec![1.0, 0.0] };
        assert_eq!(m.solve(&[1.0, 2.0]), Err(SingularPivot { row: 1 }));
    }
}
