//! Small dense kernels: Gauss-Jordan inversion and a rank-revealing
//! least-squares solve. Matrices are row-major `Vec<T>` of side `n`.

use crate::scalar::Real;

/// Inverts an `n x n` matrix with partial pivoting. Returns `None` when a
/// pivot falls below `tol` relative to the largest entry.
pub fn invert<T: Real>(a: &[T], n: usize, tol: T) -> Option<Vec<T>> {
    assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    let mut m = a.to_vec();
    let mut inv = identity::<T>(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if m[pivot * n + col].abs() <= tol * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f == T::zero() {
                continue;
            }
            for k in 0..n {
                let mv = m[col * n + k];
                let iv = inv[col * n + k];
                m[row * n + k] -= f * mv;
                inv[row * n + k] -= f * iv;
            }
        }
    }
    Some(inv)
}

pub fn identity<T: Real>(n: usize) -> Vec<T> {
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = T::one();
    }
    m
}

/// `y = A x` for row-major `A` of shape `rows x cols`.
pub fn matvec<T: Real>(a: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    (0..rows)
        .map(|r| (0..cols).map(|c| a[r * cols + c] * x[c]).sum())
        .collect()
}

/// Solves the symmetric positive semidefinite system `H x = b` by full-pivot
/// elimination. Directions whose pivot is below `rel_tol * max|H|` are
/// treated as null and their components set to zero, which yields a
/// minimizer of `x'Hx/2 - b'x` whenever `b` lies in the range of `H`.
pub fn solve_psd<T: Real>(h: &[T], b: &[T], n: usize, rel_tol: T) -> Vec<T> {
    assert_eq!(h.len(), n * n);
    let scale = h.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut x = vec![T::zero(); n];
    if scale == T::zero() {
        return x;
    }
    let mut m = h.to_vec();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    for k in 0..n {
        // full pivot over the trailing block
        let mut best = (k, k);
        let mut best_val = T::zero();
        for i in k..n {
            for j in k..n {
                let v = m[i * n + j].abs();
                if v > best_val {
                    best_val = v;
                    best = (i, j);
                }
            }
        }
        if best_val <= rel_tol * scale {
            break;
        }
        let (pi, pj) = best;
        if pi != k {
            for c in 0..n {
                m.swap(pi * n + c, k * n + c);
            }
            rhs.swap(pi, k);
        }
        if pj != k {
            for r in 0..n {
                m.swap(r * n + pj, r * n + k);
            }
            perm.swap(pj, k);
        }
        let p = m[k * n + k];
        for i in (k + 1)..n {
            let f = m[i * n + k] / p;
            if f == T::zero() {
                continue;
            }
            for c in k..n {
                let v = m[k * n + c];
                m[i * n + c] -= f * v;
            }
            let r = rhs[k];
            rhs[i] -= f * r;
        }
        rank += 1;
    }
    let mut y = vec![T::zero(); n];
    for k in (0..rank).rev() {
        let mut acc = rhs[k];
        for c in (k + 1)..rank {
            acc -= m[k * n + c] * y[c];
        }
        y[k] = acc / m[k * n + k];
    }
    for k in 0..n {
        x[perm[k]] = y[k];
    }
    x
}
