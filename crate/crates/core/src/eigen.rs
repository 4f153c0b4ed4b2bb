//! Cyclic Jacobi eigen-decomposition for the symmetric global covariance.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::covariance::GlobalCovariance;
use crate::matrix::DenseMatrix;

/// Off-diagonal Frobenius norm target, relative to the input's norm.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("off-diagonal norm {off_norm:e} still above threshold after {sweeps} sweeps")]
    NonConvergence { sweeps: usize, off_norm: f64 },
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("matrix has dimension zero")]
    Empty,
}

/// Eigenvalues in descending order; column `i` of `eigenvectors` pairs with
/// `eigenvalues[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
    pub sweeps: usize,
}

impl EigenDecomposition {
    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i).expect("eigenvector index in range")
    }
}

pub fn symmetric_eigen(a: &GlobalCovariance) -> Result<EigenDecomposition, EigenError> {
    jacobi_eigen(a.matrix())
}

/// Decomposes any exactly symmetric matrix.
///
/// Sweeps visit the strict upper triangle row by row. Stops once the
/// off-diagonal Frobenius norm falls to `CONVERGENCE_TOLERANCE * ||A||_F`.
/// Eigenvectors are normalised so that their largest-magnitude component is
/// positive (lowest index wins ties).
pub fn jacobi_eigen(a: &DenseMatrix) -> Result<EigenDecomposition, EigenError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(EigenError::NotSquare(a.rows(), a.cols()));
    }
    if n == 0 {
        return Err(EigenError::Empty);
    }
    for i in 0..n {
        for j in i + 1..n {
            if a.get(i, j).to_bits() != a.get(j, i).to_bits() {
                return Err(EigenError::NotSymmetric(i, j));
            }
        }
    }

    let mut w = a.values().to_vec();
    // Rows of `vt` are the eigenvectors, so each rotation touches two contiguous rows.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }

    let threshold = CONVERGENCE_TOLERANCE * a.frobenius_norm();
    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&w, n);
        if off <= threshold {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(EigenError::NonConvergence { sweeps, off_norm: off });
        }
        sweeps += 1;
        sweep(&mut w, &mut vt, n, sweeps);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[j * n + j].total_cmp(&w[i * n + i]).then(i.cmp(&j)));

    let eigenvalues = order.iter().map(|&i| w[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (k, &i) in order.iter().enumerate() {
        let v = &vt[i * n..(i + 1) * n];
        let mut lead = 0;
        for (r, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = r;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for (r, x) in v.iter().enumerate() {
            vectors[r * n + k] = sign * x;
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors: DenseMatrix::from_parts(n, n, vectors), sweeps })
}

fn off_diagonal_norm(w: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += 2.0 * w[i * n + j] * w[i * n + j];
        }
    }
    libm::sqrt(sum)
}

/// Cosine, sine and tangent of the angle that zeroes `apq`, using the
/// smaller of the two roots for stability.
fn rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64, f64) {
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let t = 1.0 / (theta.abs() + libm::sqrt(theta * theta + 1.0));
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / libm::sqrt(t * t + 1.0);
    (c, t * c, t)
}

/// One cyclic pass over the strict upper triangle.
///
/// A rotation in the plane (p, q) changes rows p and q and columns p and q.
/// Rows are rotated in place (contiguous); the column side is written back
/// only into rows below `p`, which are the only rows read again during the
/// sweep. Row `j` then always holds the current `a[j][i]` for `i < j`, and
/// the upper triangle is rebuilt from it when the sweep ends. Column `p`
/// itself is written back once per `p`: inside the loop over `q` its entries
/// only ever land in the 2x2 corner that is overwritten.
fn sweep(w: &mut [f64], vt: &mut [f64], n: usize, sweep_no: usize) {
    for p in 0..n {
        for q in p + 1..n {
            let apq = w[p * n + q];
            if apq == 0.0 {
                continue;
            }
            let app = w[p * n + p];
            let aqq = w[q * n + q];
            // Once a pair is negligible against both diagonals it is below
            // rounding and can be dropped outright.
            let g = 100.0 * apq.abs();
            if sweep_no > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                w[p * n + q] = 0.0;
                w[q * n + p] = 0.0;
                continue;
            }
            let (c, s, t) = rotation(app, aqq, apq);
            rotate(w, vt, n, p, q, c, s, t);
        }
        for r in p + 1..n {
            w[r * n + p] = w[p * n + r];
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            w[i * n + j] = w[j * n + i];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rotate(w: &mut [f64], vt: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let apq = w[p * n + q];
    let app = w[p * n + p] - t * apq;
    let aqq = w[q * n + q] + t * apq;

    // Rotate rows p and q in full, then overwrite the 2x2 corner.
    let (head, tail) = w.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
    row_p[p] = app;
    row_p[q] = 0.0;
    row_q[p] = 0.0;
    row_q[q] = aqq;
    for r in p + 1..n {
        if r != q {
            w[r * n + q] = w[q * n + r];
        }
    }

    let (head, tail) = vt.split_at_mut(q * n);
    let vp = &mut head[p * n..(p + 1) * n];
    let vq = &mut tail[..n];
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, v: &[f64]) -> DenseMatrix {
        DenseMatrix::new(n, n, v.to_vec(), None).unwrap()
    }

    #[test]
    fn multiple_of_identity() {
        let e = jacobi_eigen(&sym(2, &[2.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![2.0, 2.0]);
        assert_eq!(e.eigenvectors.values(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn already_diagonal_is_sorted() {
        let e = jacobi_eigen(&sym(2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![2.0, 1.0]);
        assert_eq!(e.eigenvector(0), vec![0.0, 1.0]);
        assert_eq!(e.eigenvector(1), vec![1.0, 0.0]);
    }

    #[test]
    fn two_by_two_hand_solution() {
        // Characteristic polynomial (2 - l)^2 - 1 = 0 -> l = 3, 1.
        let e = jacobi_eigen(&sym(2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.eigenvector(0);
        let v1 = e.eigenvector(1);
        assert!((v0[0] - h).abs() < 1e-14 && (v0[1] - h).abs() < 1e-14);
        // (1, -1)/sqrt2: components tie in magnitude, so index 0 is made positive.
        assert!((v1[0] - h).abs() < 1e-14 && (v1[1] + h).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            jacobi_eigen(&DenseMatrix::new(1, 2, vec![1.0, 2.0], None).unwrap()),
            Err(EigenError::NotSquare(1, 2))
        );
        assert_eq!(jacobi_eigen(&sym(2, &[1.0, 2.0, 2.5, 1.0])), Err(EigenError::NotSymmetric(0, 1)));
        assert_eq!(jacobi_eigen(&DenseMatrix::zeros(0, 0)), Err(EigenError::Empty));
    }

    #[test]
    fn one_by_one() {
        let e = jacobi_eigen(&sym(1, &[4.5])).unwrap();
        assert_eq!(e.eigenvalues, vec![4.5]);
        assert_eq!(e.eigenvectors.values(), &[1.0]);
    }

    #[test]
    fn sign_convention_with_negative_lead() {
        // Eigenvector for the top eigenvalue is dominated by its second component.
        let e = jacobi_eigen(&sym(3, &[1.0, 0.0, 0.0, 0.0, 5.0, -1.0, 0.0, -1.0, 1.0])).unwrap();
        for i in 0..3 {
            let v = e.eigenvector(i);
            let lead = v.iter().enumerate().fold(0, |best, (r, x)| if x.abs() > v[best].abs() { r } else { best });
            assert!(v[lead] > 0.0);
        }
    }
}
