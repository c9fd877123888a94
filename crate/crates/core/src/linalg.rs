//! Dense helpers: column-pivoted Householder QR and truncated-SVD least squares.
//!
//! SVDs go through faer; nalgebra's SVD loses accuracy on exactly
//! rank-deficient input, which is the normal case for gravity regressors.

use nalgebra::{DMatrix, DVector};

/// Result of a column-pivoted QR factorisation `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Upper-trapezoidal factor, `min(m, n) x n`, columns in pivot order.
    pub r: DMatrix<f64>,
    /// `pivots[k]` is the original column placed at position `k`.
    pub pivots: Vec<usize>,
}

impl PivotedQr {
    /// Householder QR with greedy max-norm column pivoting (Businger-Golub).
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut work = a.clone();
        let mut pivots: Vec<usize> = (0..n).collect();
        let steps = m.min(n);

        for k in 0..steps {
            // Norms are recomputed rather than downdated; the matrices here are
            // narrow enough that accuracy matters more than the extra flops.
            let (best, _) = (k..n)
                .map(|j| (j, work.view((k, j), (m - k, 1)).norm_squared()))
                .fold(
                    (k, -1.0),
                    |acc, (j, v)| if v > acc.1 { (j, v) } else { acc },
                );
            if best != k {
                work.swap_columns(k, best);
                pivots.swap(k, best);
            }

            let x = work.view((k, k), (m - k, 1)).clone_owned();
            let norm = x.norm();
            if norm == 0.0 {
                continue;
            }
            let alpha = if x[0] > 0.0 { -norm } else { norm };
            let mut v = x;
            v[0] -= alpha;
            let vnorm = v.norm();
            if vnorm == 0.0 {
                continue;
            }
            v /= vnorm;

            let mut block = work.view_mut((k, k), (m - k, n - k));
            let proj = v.transpose() * &block;
            block -= (&v * proj) * 2.0;
            work[(k, k)] = alpha;
            for i in k + 1..m {
                work[(i, k)] = 0.0;
            }
        }

        let r = work.rows(0, steps).upper_triangle();
        Self { r, pivots }
    }

    /// Number of diagonal entries with `|r_kk| > tol * |r_00|`.
    pub fn rank(&self, tol: f64) -> usize {
        let steps = self.r.nrows().min(self.r.ncols());
        let diag: Vec<f64> = (0..steps).map(|k| self.r[(k, k)]).collect();
        let Some(&first) = diag.first() else {
            return 0;
        };
        let scale = first.abs();
        if scale == 0.0 {
            return 0;
        }
        diag.iter().take_while(|d| d.abs() > tol * scale).count()
    }
}

/// Minimum-norm least-squares solution of `A x = b` via truncated SVD.
#[derive(Debug, Clone)]
pub struct SvdSolution {
    pub x: DVector<f64>,
    pub rank: usize,
    /// Retained singular values, descending.
    pub singular_values: Vec<f64>,
}

impl SvdSolution {
    /// `sigma_max / sigma_min` over retained values; 1 when nothing is retained.
    pub fn condition_number(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(max), Some(min)) => max / min,
            _ => 1.0,
        }
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Singular values in descending order. Empty for an empty matrix.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return vec![];
    }
    let mut sv = to_faer(a)
        .singular_values()
        .expect("SVD of a finite matrix converges");
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Solves with singular values below `rel_tol * sigma_max` discarded.
pub fn svd_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> SvdSolution {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if a.nrows() == 0 || n == 0 {
        return SvdSolution {
            x,
            rank: 0,
            singular_values: vec![],
        };
    }
    let svd = to_faer(a)
        .thin_svd()
        .expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let sigma_max = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;

    let mut kept = Vec::new();
    for i in 0..s.nrows() {
        let sigma = s[i];
        if !(sigma > cutoff) {
            continue;
        }
        let coeff = (0..a.nrows()).map(|r| u[(r, i)] * b[r]).sum::<f64>() / sigma;
        for j in 0..n {
            x[j] += v[(j, i)] * coeff;
        }
        kept.push(sigma);
    }
    kept.sort_by(|p, q| q.total_cmp(p));
    SvdSolution {
        x,
        rank: kept.len(),
        singular_values: kept,
    }
}

/// Literal normal-equation solve `(A^T A)^{-1} A^T b`; `None` if `A^T A` is not SPD.
pub fn normal_equations(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    ata.cholesky().map(|c| c.solve(&atb))
}
