//! Fixed-size dense linear algebra for the 2×2 … 4×4 matrices this crate needs.
//!
//! Matrices are row-major arrays `[[f64; C]; R]`. Symmetric eigenproblems are
//! solved with cyclic Jacobi rotations, linear systems with LU and partial
//! pivoting.

use crate::{Error, Result};

pub type Matrix<const R: usize, const C: usize = R> = [[f64; C]; R];
pub type Vector<const N: usize> = [f64; N];

/// Condition-number threshold beyond which a system is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative asymmetry tolerated by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-8;

const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

pub fn identity<const N: usize>() -> Matrix<N> {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn diagonal<const N: usize>(d: &Vector<N>) -> Matrix<N> {
    let mut m = [[0.0; N]; N];
    for i in 0..N {
        m[i][i] = d[i];
    }
    m
}

pub fn transpose<const R: usize, const C: usize>(a: &Matrix<R, C>) -> Matrix<C, R> {
    let mut t = [[0.0; R]; C];
    for i in 0..R {
        for j in 0..C {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn mat_mul<const R: usize, const K: usize, const C: usize>(
    a: &Matrix<R, K>,
    b: &Matrix<K, C>,
) -> Matrix<R, C> {
    let mut out = [[0.0; C]; R];
    for i in 0..R {
        for j in 0..C {
            let mut acc = 0.0;
            for k in 0..K {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn mat_vec<const R: usize, const C: usize>(a: &Matrix<R, C>, x: &Vector<C>) -> Vector<R> {
    let mut out = [0.0; R];
    for i in 0..R {
        out[i] = dot(&a[i], x);
    }
    out
}

pub fn dot<const N: usize>(x: &Vector<N>, y: &Vector<N>) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn add<const R: usize, const C: usize>(a: &Matrix<R, C>, b: &Matrix<R, C>) -> Matrix<R, C> {
    let mut out = *a;
    for i in 0..R {
        for j in 0..C {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn sub<const R: usize, const C: usize>(a: &Matrix<R, C>, b: &Matrix<R, C>) -> Matrix<R, C> {
    let mut out = *a;
    for i in 0..R {
        for j in 0..C {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn scale<const R: usize, const C: usize>(a: &Matrix<R, C>, s: f64) -> Matrix<R, C> {
    let mut out = *a;
    out.iter_mut().flatten().for_each(|x| *x *= s);
    out
}

pub fn trace<const N: usize>(a: &Matrix<N>) -> f64 {
    (0..N).map(|i| a[i][i]).sum()
}

pub fn frobenius<const R: usize, const C: usize>(a: &Matrix<R, C>) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs<const R: usize, const C: usize>(a: &Matrix<R, C>) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_norm<const N: usize>(x: &Vector<N>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `(A + Aᵀ) / 2`
pub fn symmetrize<const N: usize>(a: &Matrix<N>) -> Matrix<N> {
    let mut out = *a;
    for i in 0..N {
        for j in (i + 1)..N {
            let m = 0.5 * (a[i][j] + a[j][i]);
            out[i][j] = m;
            out[j][i] = m;
        }
    }
    out
}

/// Largest `|a_ij − a_ji|`.
pub fn asymmetry<const N: usize>(a: &Matrix<N>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..N {
        for j in (i + 1)..N {
            worst = worst.max((a[i][j] - a[j][i]).abs());
        }
    }
    worst
}

fn check_symmetric<const N: usize>(a: &Matrix<N>) -> Result<()> {
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * max_abs(a).max(1.0) || asym.is_nan() {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn one_norm<const N: usize>(a: &Matrix<N>) -> f64 {
    (0..N)
        .map(|j| (0..N).map(|i| a[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorisation with partial pivoting, stored compactly.
#[derive(Debug, Clone, Copy)]
pub struct Lu<const N: usize> {
    lu: Matrix<N>,
    perm: [usize; N],
    norm1: f64,
}

impl<const N: usize> Lu<N> {
    /// Factorises `a`; fails only on an exactly zero (or non-finite) pivot.
    pub fn new(a: &Matrix<N>) -> Result<Self> {
        let mut lu = *a;
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        for k in 0..N {
            let mut piv = k;
            for i in (k + 1)..N {
                if lu[i][k].abs() > lu[piv][k].abs() {
                    piv = i;
                }
            }
            if lu[piv][k] == 0.0 || !lu[piv][k].is_finite() {
                return Err(Error::Singular(f64::INFINITY));
            }
            lu.swap(k, piv);
            perm.swap(k, piv);
            for i in (k + 1)..N {
                let f = lu[i][k] / lu[k][k];
                lu[i][k] = f;
                for j in (k + 1)..N {
                    lu[i][j] -= f * lu[k][j];
                }
            }
        }
        Ok(Self { lu, perm, norm1: one_norm(a) })
    }

    pub fn solve(&self, b: &Vector<N>) -> Vector<N> {
        let mut x = [0.0; N];
        for i in 0..N {
            x[i] = b[self.perm[i]];
        }
        for i in 0..N {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..N).rev() {
            for j in (i + 1)..N {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }

    pub fn inverse(&self) -> Matrix<N> {
        let mut inv = [[0.0; N]; N];
        for j in 0..N {
            let mut e = [0.0; N];
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..N {
                inv[i][j] = col[i];
            }
        }
        inv
    }

    pub fn determinant(&self) -> f64 {
        let mut det = 1.0;
        for i in 0..N {
            det *= self.lu[i][i];
        }
        // parity of the permutation
        let mut seen = [false; N];
        for start in 0..N {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.perm[i];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }

    /// 1-norm condition number `‖A‖₁‖A⁻¹‖₁`.
    pub fn condition(&self) -> f64 {
        self.norm1 * one_norm(&self.inverse())
    }
}

/// LU factorisation that also rejects systems with condition estimate above
/// [`MAX_CONDITION`].
pub fn factor_checked<const N: usize>(a: &Matrix<N>) -> Result<Lu<N>> {
    let lu = Lu::new(a)?;
    let cond = lu.condition();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Singular(cond));
    }
    Ok(lu)
}

pub fn solve<const N: usize>(a: &Matrix<N>, b: &Vector<N>) -> Result<Vector<N>> {
    Ok(factor_checked(a)?.solve(b))
}

pub fn inverse<const N: usize>(a: &Matrix<N>) -> Result<Matrix<N>> {
    Ok(factor_checked(a)?.inverse())
}

pub fn determinant<const N: usize>(a: &Matrix<N>) -> f64 {
    Lu::new(a).map(|lu| lu.determinant()).unwrap_or(0.0)
}

/// Quadratic form `xᵀ A⁻¹ x` through a linear solve.
pub fn inverse_quadratic_form<const N: usize>(a: &Matrix<N>, x: &Vector<N>) -> Result<f64> {
    let y = solve(a, x)?;
    Ok(dot(x, &y))
}

/// Cholesky test for positive definiteness.
pub fn is_positive_definite<const N: usize>(a: &Matrix<N>) -> bool {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return false;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen<const N: usize> {
    /// Eigenvalues in descending order.
    pub values: Vector<N>,
    /// Orthonormal eigenvectors, stored as columns matching `values`.
    pub vectors: Matrix<N>,
}

impl<const N: usize> SymEigen<N> {
    /// `V diag(f(λ)) Vᵀ`
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Matrix<N> {
        let mut out = [[0.0; N]; N];
        for k in 0..N {
            let fk = f(self.values[k]);
            for i in 0..N {
                for j in 0..N {
                    out[i][j] += self.vectors[i][k] * fk * self.vectors[j][k];
                }
            }
        }
        out
    }

    pub fn smallest(&self) -> f64 {
        self.values[N - 1]
    }
}

/// Cyclic Jacobi eigen-solver for small symmetric matrices.
///
/// Sweeps over all `(p, q)` pairs until the off-diagonal Frobenius norm falls
/// below `1e-12`. Eigenvalues come back sorted in descending order.
pub fn sym_eigen<const N: usize>(a: &Matrix<N>) -> Result<SymEigen<N>> {
    check_symmetric(a)?;
    let mut a = symmetrize(a);
    let mut v = identity::<N>();

    let off = |a: &Matrix<N>| -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            for j in 0..N {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&a) >= JACOBI_OFF_TOL {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NotConverged(sweeps));
        }
        sweeps += 1;
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J for the rotation in the (p, q) plane
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for k in 0..N {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order = [0usize; N];
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let mut values = [0.0; N];
    let mut vectors = [[0.0; N]; N];
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[src][src];
        for i in 0..N {
            vectors[i][dst] = v[i][src];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues below this are clipped to zero before square roots.
pub const PSD_CLIP: f64 = 1e-10;

/// Smallest eigenvalue accepted on the inverse paths.
pub const MIN_INVERTIBLE_EIGENVALUE: f64 = 1e-12;

/// Square root, inverse and inverse square root of a symmetric PSD matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymRoots<const N: usize> {
    pub sqrt: Matrix<N>,
    /// `None` when the smallest eigenvalue is not above `1e-12`.
    pub inverse: Option<Matrix<N>>,
    pub inverse_sqrt: Option<Matrix<N>>,
}

pub fn sym_sqrt_and_inv<const N: usize>(a: &Matrix<N>) -> Result<SymRoots<N>> {
    let eig = sym_eigen(a)?;
    let smallest = eig.smallest();
    if smallest < -PSD_CLIP {
        return Err(Error::Singular(smallest));
    }
    let sqrt = eig.map_spectrum(|l| l.max(0.0).sqrt());
    let (inverse, inverse_sqrt) = if smallest > MIN_INVERTIBLE_EIGENVALUE {
        (Some(eig.map_spectrum(|l| 1.0 / l)), Some(eig.map_spectrum(|l| 1.0 / l.sqrt())))
    } else {
        (None, None)
    };
    Ok(SymRoots { sqrt, inverse, inverse_sqrt })
}
