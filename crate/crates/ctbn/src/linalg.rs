//! Small dense-matrix numerics: the matrix exponential and master-
//! equation distribution propagation.
//!
//! The exponential uses scaling-and-squaring with a degree-13 Pade
//! approximant (Higham 2005). Nothing here assumes stochasticity: the
//! reduced matrices produced by the sampler are sub-stochastic
//! generators whose rows sum to <= 0.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix has a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("expected a square matrix, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("dimension mismatch: matrix is {n}x{n}, vector has length {len}")]
    DimensionMismatch { n: usize, len: usize },
    #[error("time must be nonnegative and finite, got {0}")]
    BadTime(f64),
}

// Pade-13 numerator coefficients (Higham 2005, Table 2.1).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|c| a.column(c).iter().map(|v| v.abs()).sum())
        .fold(0.0, f64::max)
}

/// exp(A) by scaling and squaring with the [13/13] Pade approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare(a.nrows(), a.ncols()));
    }
    for r in 0..n {
        for c in 0..n {
            if !a[(r, c)].is_finite() {
                return Err(LinalgError::NonFinite(r, c));
            }
        }
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = a / 2f64.powi(s as i32);

    let eye = DMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;
    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &eye;
    let u = &a * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &eye;

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut x = lhs
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| rhs.clone()); // singular only for pathological inputs
    for _ in 0..s {
        x = &x * &x;
    }
    Ok(x)
}

/// exp(tA) for t >= 0.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, LinalgError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(LinalgError::BadTime(t));
    }
    expm(&(a * t))
}

/// Solves the master equation: returns exp(tQ)^T p0, clamping roundoff
/// negatives to zero.
pub fn propagate_distribution(
    q: &DMatrix<f64>,
    p0: &[f64],
    t: f64,
) -> Result<Vec<f64>, LinalgError> {
    let n = q.nrows();
    if p0.len() != n {
        return Err(LinalgError::DimensionMismatch { n, len: p0.len() });
    }
    let pt = matrix_exponential(q, t)?;
    let mut out = vec![0.0; n];
    for b in 0..n {
        let mut acc = 0.0;
        for a in 0..n {
            acc += pt[(a, b)] * p0[a];
        }
        out[b] = acc.max(0.0);
    }
    Ok(out)
}
