//! Dense linear algebra for small systems: one-sided Jacobi SVD, numerical
//! rank with an explicit threshold policy, null spaces, principal angles,
//! and Gauss-Jordan solves over both `f64` and jet entries.
//!
//! Everything here operates on matrices of at most a few hundred rows, which
//! is all the holonomy stacks, obstruction stacks and polynomial ansatz
//! systems ever produce.

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Mat {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend(row);
        }
        Mat {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Singular values (descending) and right singular vectors of `a`.
///
/// One-sided Jacobi: plane rotations orthogonalize column pairs of a working
/// copy while accumulating them into `V`; singular values are the final
/// column norms.  Returns `(sigma, v)` with `a * v = u * diag(sigma)`.
pub fn svd(a: &Mat) -> (Vec<f64>, Mat) {
    let m = a.rows;
    let n = a.cols;
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    let eps = 1e-15;
    let max_sweeps = 60;

    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let x = w.get(i, p);
                    let y = w.get(i, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                off = off.max(apq.abs() / (app * aqq).sqrt().max(1e-300));
                let theta = 0.5 * (2.0 * apq).atan2(app - aqq);
                let (s, c) = theta.sin_cos();
                for i in 0..m {
                    let x = w.get(i, p);
                    let y = w.get(i, q);
                    w.set(i, p, c * x + s * y);
                    w.set(i, q, -s * x + c * y);
                }
                for i in 0..n {
                    let x = v.get(i, p);
                    let y = v.get(i, q);
                    v.set(i, p, c * x + s * y);
                    v.set(i, q, -s * x + c * y);
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();

    // sort descending, permuting V's columns alongside
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let mut v_sorted = Mat::zeros(n, n);
    let mut s_sorted = vec![0.0; n];
    for (new_j, &old_j) in order.iter().enumerate() {
        s_sorted[new_j] = sigma[old_j];
        for i in 0..n {
            v_sorted.set(i, new_j, v.get(i, old_j));
        }
    }
    sigma = s_sorted;
    (sigma, v_sorted)
}

/// Numerical rank: singular values below `rel_threshold * sigma_max` count
/// as zero.  The flag reports values within a factor of 10 of the cut, i.e.
/// an ambiguous decision.
pub fn numerical_rank(sigma: &[f64], rel_threshold: f64) -> (usize, bool) {
    numerical_rank_scaled(sigma, rel_threshold, 0.0)
}

/// Numerical rank with a problem-scale floor: the cut is
/// `rel_threshold * max(sigma_max, scale)`, so an all-noise matrix whose
/// largest singular value sits below the meaningful scale has rank zero
/// instead of full rank.
pub fn numerical_rank_scaled(sigma: &[f64], rel_threshold: f64, scale: f64) -> (usize, bool) {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (0, false);
    }
    let cut = rel_threshold * smax.max(scale);
    let rank = sigma.iter().filter(|&&s| s > cut).count();
    let ambiguous = sigma
        .iter()
        .any(|&s| s > cut / 10.0 && s < cut * 10.0 && s != 0.0);
    (rank, ambiguous)
}

/// Orthonormal basis of the null space at the given relative threshold
/// (columns of the result).
pub fn null_space(a: &Mat, rel_threshold: f64) -> Mat {
    let (sigma, v) = svd(a);
    let (rank, _) = numerical_rank(&sigma, rel_threshold);
    let n = a.cols;
    let k = n - rank;
    let mut basis = Mat::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            basis.set(i, j, v.get(i, rank + j));
        }
    }
    basis
}

/// Modified Gram-Schmidt orthonormalization of the columns (drops linearly
/// dependent ones).
pub fn orthonormalize(a: &Mat) -> Mat {
    let m = a.rows;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..a.cols {
        let mut v = a.col(j);
        for u in &cols {
            let dot: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            cols.push(v);
        }
    }
    let mut out = Mat::zeros(m, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for i in 0..m {
            out.set(i, j, c[i]);
        }
    }
    out
}

/// Principal angles between the column spans of `a` and `b`, in radians,
/// ascending.
pub fn principal_angles(a: &Mat, b: &Mat) -> Vec<f64> {
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let m = qa.transpose().matmul(&qb);
    let (sigma, _) = svd(&m);
    let k = qa.cols.min(qb.cols);
    sigma
        .iter()
        .take(k)
        .map(|&s| s.clamp(-1.0, 1.0).acos())
        .collect()
}

/// Gauss-Jordan inverse of a small `f64` matrix.
pub fn invert(a: &Mat) -> Result<Mat> {
    if a.rows != a.cols {
        return Err(Error::LinearAlgebra("inverse of non-square matrix".into()));
    }
    let n = a.rows;
    let mut w = a.clone();
    let mut inv = Mat::identity(n);
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if w.get(r, col).abs() > w.get(pivot, col).abs() {
                pivot = r;
            }
        }
        let p = w.get(pivot, col);
        if p.abs() < 1e-300 {
            return Err(Error::LinearAlgebra("singular matrix".into()));
        }
        if pivot != col {
            for j in 0..n {
                let (x, y) = (w.get(col, j), w.get(pivot, j));
                w.set(col, j, y);
                w.set(pivot, j, x);
                let (x, y) = (inv.get(col, j), inv.get(pivot, j));
                inv.set(col, j, y);
                inv.set(pivot, j, x);
            }
        }
        let p = w.get(col, col);
        for j in 0..n {
            w.set(col, j, w.get(col, j) / p);
            inv.set(col, j, inv.get(col, j) / p);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = w.get(r, col);
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                w.set(r, j, w.get(r, j) - f * w.get(col, j));
                inv.set(r, j, inv.get(r, j) - f * inv.get(col, j));
            }
        }
    }
    Ok(inv)
}

/// Gauss-Jordan inverse over the jet ring.  A jet is invertible exactly when
/// its value is nonzero; pivoting is by value magnitude.
pub fn invert_jet_matrix(a: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>> {
    let n = a.len();
    if n == 0 || a.iter().any(|row| row.len() != n) {
        return Err(Error::LinearAlgebra("inverse of non-square matrix".into()));
    }
    let proto = &a[0][0];
    let one = Jet::constant(proto.dim(), proto.order(), 1.0);
    let zero = Jet::constant(proto.dim(), proto.order(), 0.0);
    let mut w: Vec<Vec<Jet>> = a.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { one.clone() } else { zero.clone() })
                .collect()
        })
        .collect();
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if w[r][col].value().abs() > w[pivot][col].value().abs() {
                pivot = r;
            }
        }
        if w[pivot][col].value().abs() < 1e-300 {
            return Err(Error::LinearAlgebra("singular jet matrix".into()));
        }
        w.swap(col, pivot);
        inv.swap(col, pivot);
        let p = w[col][col].clone();
        let pinv = p.recip().map_err(|_| {
            Error::LinearAlgebra("singular jet matrix (vanishing pivot value)".into())
        })?;
        for j in 0..n {
            w[col][j] = w[col][j].mul(&pinv).expect("shape");
            inv[col][j] = inv[col][j].mul(&pinv).expect("shape");
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = w[r][col].clone();
            if f.value() == 0.0 && f.coeffs().iter().all(|&c| c == 0.0) {
                continue;
            }
            for j in 0..n {
                w[r][j] = w[r][j]
                    .sub(&f.mul(&w[col][j]).expect("shape"))
                    .expect("shape");
                inv[r][j] = inv[r][j]
                    .sub(&f.mul(&inv[col][j]).expect("shape"))
                    .expect("shape");
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::jet_of;

    #[test]
    fn svd_recovers_known_rank() {
        // rank-2 3x3 matrix
        let a = Mat::from_rows(vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![1.0, 0.0, 1.0],
        ]);
        let (sigma, v) = svd(&a);
        let (rank, _) = numerical_rank(&sigma, 1e-10);
        assert_eq!(rank, 2);
        // A v3 ~ 0
        let v3 = v.col(2);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a.get(i, j) * v3[j]).sum();
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn svd_singular_values_of_diagonal() {
        let a = Mat::from_rows(vec![vec![3.0, 0.0], vec![0.0, -5.0], vec![0.0, 0.0]]);
        let (sigma, _) = svd(&a);
        assert!((sigma[0] - 5.0).abs() < 1e-12);
        assert!((sigma[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn null_space_dimension() {
        let a = Mat::from_rows(vec![vec![1.0, 1.0, 0.0]]);
        let ns = null_space(&a, 1e-10);
        assert_eq!(ns.cols, 2);
        for j in 0..2 {
            let c = ns.col(j);
            assert!((c[0] + c[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn principal_angles_same_and_orthogonal() {
        let a = Mat::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let b = Mat::from_rows(vec![vec![0.0], vec![1.0], vec![0.0]]);
        let angles = principal_angles(&a, &b);
        assert!(angles[0].abs() < 1e-10);
        let c = Mat::from_rows(vec![vec![0.0], vec![0.0], vec![1.0]]);
        let angles = principal_angles(&a, &c);
        assert!((angles[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn invert_matches_hand_inverse() {
        let a = Mat::from_rows(vec![vec![2.0, 1.0], vec![1.0, 1.0]]);
        let inv = invert(&a).unwrap();
        let id = a.matmul(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((id.get(i, j) - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn jet_matrix_inverse_is_pointwise_inverse() {
        // g = [[1+x^2, x y], [x y, 2+y^2]] near (0.3, -0.2)
        let base = [0.3, -0.2];
        let order = 3;
        let g00 = jet_of(
            |v| {
                v[0].mul(&v[0])?
                    .add(&crate::jet::Jet::constant(2, order, 1.0))
            },
            &base,
            order,
        )
        .unwrap();
        let g01 = jet_of(|v| v[0].mul(&v[1]), &base, order).unwrap();
        let g11 = jet_of(
            |v| {
                v[1].mul(&v[1])?
                    .add(&crate::jet::Jet::constant(2, order, 2.0))
            },
            &base,
            order,
        )
        .unwrap();
        let m = vec![
            vec![g00.clone(), g01.clone()],
            vec![g01.clone(), g11.clone()],
        ];
        let inv = invert_jet_matrix(&m).unwrap();
        // m * inv = identity as jets
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = Jet::constant(2, order, 0.0);
                for k in 0..2 {
                    acc = acc.add(&m[i][k].mul(&inv[k][j]).unwrap()).unwrap();
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc.value() - expect).abs() < 1e-13);
                for c in &acc.coeffs()[1..] {
                    assert!(c.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ambiguity_flagged_near_threshold() {
        let sigma = vec![1.0, 5e-8, 1e-12];
        let (rank, ambiguous) = numerical_rank(&sigma, 1e-8);
        assert_eq!(rank, 2);
        assert!(ambiguous);
        let sigma = vec![1.0, 1e-3, 1e-13];
        let (rank, ambiguous) = numerical_rank(&sigma, 1e-8);
        assert_eq!(rank, 2);
        assert!(!ambiguous);
    }
}
