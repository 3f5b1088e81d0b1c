//! Dense complex linear algebra shared by the physics modules.
//!
//! Thin wrappers over nalgebra's Hermitian eigensolver and complex Schur
//! decomposition, plus a Padé scaling-and-squaring matrix exponential (the
//! nalgebra one is only available with `std`).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest entrywise modulus of `A - A^H`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(dev);
        }
    }
    worst
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hermitian eigendecomposition with eigenvalues in ascending order and the
/// matching eigenvectors as columns.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000 * n)
        .ok_or(Error::EigenNonConvergence { dim: n, norm: one_norm(m) })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Eigenvalues and unit-norm right eigenvectors of a general complex matrix.
///
/// Computed from the complex Schur form `A = Q T Q^H` by back substitution on
/// `T`; near-equal diagonal entries are perturbed to a floor of `eps·‖T‖` so
/// defective or degenerate spectra still yield finite vectors.
pub fn eig(m: &CMatrix) -> Result<(Vec<Complex64>, CMatrix)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let norm = one_norm(m);
    if n == 1 {
        return Ok((alloc::vec![m[(0, 0)]], CMatrix::from_element(1, 1, ONE)));
    }
    let scaling = balance(m);
    let balanced = CMatrix::from_fn(n, n, |r, c| m[(r, c)] * (scaling[c] / scaling[r]));
    let bnorm = one_norm(&balanced);
    let schur = Schur::try_new(balanced.clone(), f64::EPSILON, 10_000 * n)
        .or_else(|| Schur::try_new(balanced, 16.0 * f64::EPSILON, 100_000 * n))
        .ok_or(Error::EigenNonConvergence { dim: n, norm })?;
    let (mut q, mut t) = schur.unpack();
    triangularize(&mut q, &mut t, bnorm);

    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let floor = f64::EPSILON * bnorm.max(f64::MIN_POSITIVE);
    let mut vectors = CMatrix::zeros(n, n);
    let mut y = CVector::zeros(n);
    for k in 0..n {
        y.fill(ZERO);
        y[k] = ONE;
        let lambda = values[k];
        for j in (0..k).rev() {
            let mut acc = ZERO;
            for l in (j + 1)..=k {
                acc += t[(j, l)] * y[l];
            }
            let mut den = t[(j, j)] - lambda;
            if den.norm() < floor {
                den = Complex64::new(floor, 0.0);
            }
            y[j] = -acc / den;
        }
        let mut x = &q * &y;
        for (r, s) in scaling.iter().enumerate() {
            x[r] *= *s;
        }
        let nrm = x.norm();
        vectors.set_column(k, &(x / Complex64::new(nrm, 0.0)));
    }
    Ok((values, vectors))
}

/// Diagonal scaling `D` (powers of two) such that `D^{-1} A D` has comparable
/// row and column norms.
fn balance(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut d = alloc::vec![1.0f64; n];
    let mut a = m.clone();
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for k in 0..n {
                if k != i {
                    c += a[(k, i)].norm();
                    r += a[(i, k)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let s = c + r;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / 2.0 {
                cc *= 2.0;
                rr /= 2.0;
                f *= 2.0;
            }
            while cc >= rr * 2.0 {
                cc /= 2.0;
                rr *= 2.0;
                f /= 2.0;
            }
            if (cc + rr) < 0.95 * s {
                converged = false;
                d[i] *= f;
                for k in 0..n {
                    a[(i, k)] /= f;
                    a[(k, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    d
}

// Removes any 2x2 bumps left on the subdiagonal by rotating them away.
fn triangularize(q: &mut CMatrix, t: &mut CMatrix, norm: f64) {
    let n = t.nrows();
    let tol = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
    for i in 0..n - 1 {
        let r = t[(i + 1, i)];
        if r.norm() <= tol {
            t[(i + 1, i)] = ZERO;
            continue;
        }
        let p = t[(i, i)];
        let qq = t[(i, i + 1)];
        let s = t[(i + 1, i + 1)];
        let half_tr = (p + s) * 0.5;
        let disc = ((p - s) * 0.5) * ((p - s) * 0.5) + qq * r;
        let lambda = half_tr + disc.sqrt();
        let v0 = lambda - s;
        let v1 = r;
        let nv = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        let (c0, c1) = (v0 / nv, v1 / nv);
        // G = [[c0, -conj(c1)], [c1, conj(c0)]]
        let g = [[c0, -c1.conj()], [c1, c0.conj()]];
        for col in 0..n {
            let a = t[(i, col)];
            let b = t[(i + 1, col)];
            t[(i, col)] = g[0][0].conj() * a + g[1][0].conj() * b;
            t[(i + 1, col)] = g[0][1].conj() * a + g[1][1].conj() * b;
        }
        for row in 0..n {
            let a = t[(row, i)];
            let b = t[(row, i + 1)];
            t[(row, i)] = a * g[0][0] + b * g[1][0];
            t[(row, i + 1)] = a * g[0][1] + b * g[1][1];
            let a = q[(row, i)];
            let b = q[(row, i + 1)];
            q[(row, i)] = a * g[0][0] + b * g[1][0];
            q[(row, i + 1)] = a * g[0][1] + b * g[1][1];
        }
        t[(i + 1, i)] = ZERO;
    }
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::InvalidArgument("matrix exponential of a non-finite matrix".into()));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings));
    let ident = CMatrix::identity(n, n);
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &scaled * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);
    let numer = &v + &u;
    let denom = &v - &u;
    let mut x = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Internal("singular Padé denominator in expm".into()))?;
    for _ in 0..squarings {
        x = &x * &x;
    }
    Ok(x)
}

/// Orthonormalizes the columns of `vectors` (modified Gram-Schmidt), dropping
/// columns that are numerically dependent on earlier ones.
pub fn orthonormal_basis(vectors: &[CVector]) -> Vec<CVector> {
    let mut basis: Vec<CVector> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for e in &basis {
                let proj = e.dotc(&w);
                w -= e * proj;
            }
        }
        let nrm = w.norm();
        if nrm > 1e-8 * v.norm().max(f64::MIN_POSITIVE) {
            basis.push(w / Complex64::new(nrm, 0.0));
        }
    }
    basis
}
