//! Dense linear algebra over a generic [`Field`].

use crate::scalar::Field;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("matrix is singular (no pivot in column {column})")]
pub struct SingularMatrix {
    pub column: usize,
}

/// Row-major square matrix.
pub type Matrix<T> = Vec<Vec<T>>;

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting on
/// the approximate magnitude. Exact for exact fields.
pub fn solve<T: Field>(m: &Matrix<T>, rhs: &[T]) -> Result<Vec<T>, SingularMatrix> {
    let n = rhs.len();
    assert_eq!(m.len(), n, "matrix/rhs size mismatch");
    let mut a: Vec<Vec<T>> = m
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            assert_eq!(row.len(), n, "matrix must be square");
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();

    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[r][col].is_zero())
            .max_by(|&x, &y| {
                a[x][col]
                    .approx()
                    .abs()
                    .partial_cmp(&a[y][col].approx().abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or(SingularMatrix { column: col })?;
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for r in (col + 1)..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone() / p.clone();
            let (top, bottom) = a.split_at_mut(r);
            for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x = x.clone() - y.clone() * factor.clone();
            }
        }
    }

    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = a[row][n].clone();
        for c in (row + 1)..n {
            acc = acc - a[row][c].clone() * x[c].clone();
        }
        x[row] = acc / a[row][row].clone();
    }
    Ok(x)
}

/// Inverse by solving against unit vectors.
pub fn inverse<T: Field>(m: &Matrix<T>) -> Result<Matrix<T>, SingularMatrix> {
    let n = m.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        cols.push(solve(m, &e)?);
    }
    Ok((0..n)
        .map(|i| (0..n).map(|j| cols[j][i].clone()).collect())
        .collect())
}

pub fn mat_mul<T: Field>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner, "inner dimensions differ");
            (0..cols)
                .map(|j| {
                    row.iter()
                        .zip(b)
                        .fold(T::zero(), |acc, (x, brow)| acc + x.clone() * brow[j].clone())
                })
                .collect()
        })
        .collect()
}

pub fn mat_vec<T: Field>(a: &Matrix<T>, x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(x)
                .fold(T::zero(), |acc, (r, v)| acc + r.clone() * v.clone())
        })
        .collect()
}

pub fn transpose<T: Clone>(a: &Matrix<T>) -> Matrix<T> {
    let cols = a.first().map_or(0, |r| r.len());
    (0..cols)
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

/// Transposed Vandermonde matrix: entry `(m, i)` is `nodes[i]^m`.
pub fn vandermonde_transposed<T: Field>(nodes: &[T]) -> Matrix<T> {
    let n = nodes.len();
    let mut rows: Matrix<T> = Vec::with_capacity(n);
    let mut power: Vec<T> = vec![T::one(); n];
    for _ in 0..n {
        rows.push(power.clone());
        power = power
            .iter()
            .zip(nodes)
            .map(|(p, x)| p.clone() * x.clone())
            .collect();
    }
    rows
}

/// Lower-triangular matrix of ones.
pub fn lower_ones<T: Field>(n: usize) -> Matrix<T> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if j <= i { T::one() } else { T::zero() })
                .collect()
        })
        .collect()
}
