//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Matrices here are small (the patch covariance is at most 64x64), so the
//! quadratically convergent Jacobi sweep is both accurate and fast enough.

use thiserror::Error;

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EigenError {
    #[error("matrix of order {order} needs {expected} entries, got {got}")]
    Shape {
        order: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:e}")]
    Asymmetric { i: usize, j: usize, diff: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error(
        "Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})"
    )]
    NoConvergence { sweeps: usize, residual: f64 },
}

/// Square symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Validates shape and symmetry (relative to the Frobenius norm).
    pub fn new(order: usize, entries: Vec<f64>) -> Result<Self, EigenError> {
        if order == 0 || entries.len() != order * order {
            return Err(EigenError::Shape {
                order,
                expected: order * order,
                got: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(EigenError::NonFinite);
        }
        let m = SymMatrix { order, entries };
        let tol = SYMMETRY_TOL * m.frobenius_norm();
        for i in 0..order {
            for j in i + 1..order {
                let diff = (m.get(i, j) - m.get(j, i)).abs();
                if diff > tol {
                    return Err(EigenError::Asymmetric { i, j, diff });
                }
            }
        }
        Ok(m)
    }

    /// Builds a symmetric matrix from its upper triangle `f(i, j)`, `i <= j`.
    pub fn from_upper(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; order * order];
        for i in 0..order {
            for j in i..order {
                let v = f(i, j);
                entries[i * order + j] = v;
                entries[j * order + i] = v;
            }
        }
        SymMatrix { order, entries }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Eigenvalues in ascending order; `eigenvectors[i]` pairs with `eigenvalues[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// Number of full Jacobi sweeps performed.
    pub sweeps: usize,
}

impl EigenDecomposition {
    /// `V diag(lambda) V^T` as a row-major matrix.
    pub fn reconstruct(&self) -> Vec<f64> {
        let d = self.eigenvalues.len();
        let mut out = vec![0.0; d * d];
        for (lambda, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += lambda * v[i] * v[j];
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[i * d + j] * a[i * d + j];
            }
        }
    }
    s.sqrt()
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Sweeps over all `(p, q)` pairs in row order, annihilating each
/// off-diagonal entry with a plane rotation, until the off-diagonal Frobenius
/// norm is at most `1e-12 * ||m||_F`. Eigenvectors are sign-normalized so
/// their largest-magnitude entry (first one on ties) is positive.
pub fn jacobi_eigen(m: &SymMatrix) -> Result<EigenDecomposition, EigenError> {
    let d = m.order;
    let mut a = m.entries.clone();
    // v is row-major with eigenvectors as columns
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let tol = OFF_DIAGONAL_TOL * m.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, d);
        if off <= tol {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(EigenError::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                // Rutishauser's stable rotation: t = tan(phi) is the smaller
                // root of t^2 + 2 theta t - 1 = 0.
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for r in 0..d {
                    if r != p && r != q {
                        let arp = a[r * d + p];
                        let arq = a[r * d + q];
                        let new_rp = arp - s * (arq + tau * arp);
                        let new_rq = arq + s * (arp - tau * arq);
                        a[r * d + p] = new_rp;
                        a[p * d + r] = new_rp;
                        a[r * d + q] = new_rq;
                        a[q * d + r] = new_rq;
                    }
                }
                for r in 0..d {
                    let vrp = v[r * d + p];
                    let vrq = v[r * d + q];
                    v[r * d + p] = vrp - s * (vrq + tau * vrp);
                    v[r * d + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..d).collect();
    // stable sort keeps index order for exactly equal eigenvalues
    order.sort_by(|&i, &j| a[i * d + i].total_cmp(&a[j * d + j]));

    let eigenvalues = order.iter().map(|&k| a[k * d + k]).collect();
    let eigenvectors = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..d).map(|r| v[r * d + k]).collect();
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            col.iter_mut().for_each(|x| *x /= norm);
            let mut lead = 0;
            for (i, x) in col.iter().enumerate() {
                if x.abs() > col[lead].abs() {
                    lead = i;
                }
            }
            if col[lead] < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();

    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}
