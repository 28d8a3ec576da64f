//! Small dense symmetric linear algebra.
//!
//! [`GramState`] holds a regularised weighted Gram matrix
//! `λI + Σ w_i x_i x_iᵀ` together with its inverse and log-determinant.
//! Rank-1 updates use Sherman–Morrison for the inverse and the matrix
//! determinant lemma for the log-determinant. Roundoff in the cached inverse
//! is bounded by a periodic refresh from a Cholesky factorisation.

use crate::{Error, Result};

/// Number of rank-1 updates between forced refreshes of the cached inverse.
pub const REFRESH_INTERVAL: usize = 64;

/// Largest tolerated `max |A·A⁻¹ − I|` before the inverse is rebuilt.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Row-major `d×d` matrix times vector.
pub fn mat_vec(m: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], x)).collect()
}

/// `xᵀ M x` for a row-major `d×d` matrix.
pub fn quad_form(m: &[f64], d: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        acc += x[i] * dot(&m[i * d..(i + 1) * d], x);
    }
    acc
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(m: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = m[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut v = m[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / ljj;
        }
    }
    Some(l)
}

/// Inverse of `L Lᵀ` given its Cholesky factor.
fn cholesky_inverse(l: &[f64], d: usize) -> Vec<f64> {
    // Invert L column by column (forward substitution), then A⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = vec![0.0; d * d];
    for c in 0..d {
        for i in c..d {
            let mut v = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                v -= l[i * d + k] * linv[k * d + c];
            }
            linv[i * d + c] = v / l[i * d + i];
        }
    }
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut v = 0.0;
            for k in i..d {
                v += linv[k * d + i] * linv[k * d + j];
            }
            inv[i * d + j] = v;
            inv[j * d + i] = v;
        }
    }
    inv
}

/// Regularised weighted Gram matrix with cached inverse and log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct GramState {
    dim: usize,
    lambda: f64,
    matrix: Vec<f64>,
    inverse: Vec<f64>,
    log_det: f64,
    updates: usize,
    since_refresh: usize,
}

impl GramState {
    /// `λI` with inverse `I/λ` and log-determinant `d·log λ`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("Gram dimension must be at least 1"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        let mut matrix = vec![0.0; dim * dim];
        let mut inverse = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = lambda;
            inverse[i * dim + i] = 1.0 / lambda;
        }
        Ok(Self {
            dim,
            lambda,
            matrix,
            inverse,
            log_det: dim as f64 * lambda.ln(),
            updates: 0,
            since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Row-major matrix entries.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Row-major entries of the cached inverse.
    pub fn inverse(&self) -> &[f64] {
        &self.inverse
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Total number of rank-1 updates applied.
    pub fn updates(&self) -> usize {
        self.updates
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: expected {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// `matrix += w·x xᵀ`, returning the log-determinant increment
    /// `log(1 + w·xᵀ A⁻¹ x)`.
    pub fn rank1_update(&mut self, x: &[f64], w: f64) -> Result<f64> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("update vector has non-finite entries"));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::invalid(format!("update weight must be positive and finite, got {w}")));
        }
        let d = self.dim;
        let u = mat_vec(&self.inverse, d, x);
        let q = dot(x, &u).max(0.0);
        let denom = 1.0 + w * q;
        let scale = w / denom;
        for i in 0..d {
            for j in 0..d {
                self.matrix[i * d + j] += w * x[i] * x[j];
                self.inverse[i * d + j] -= scale * u[i] * u[j];
            }
        }
        let inc = denom.ln();
        self.log_det += inc;
        self.updates += 1;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL || self.identity_residual() > IDENTITY_TOLERANCE {
            self.refresh()?;
        }
        Ok(inc)
    }

    /// Rebuild the cached inverse from a Cholesky factorisation of the matrix.
    pub fn refresh(&mut self) -> Result<()> {
        let l = cholesky(&self.matrix, self.dim).ok_or_else(|| {
            Error::NumericFailure("Gram matrix lost positive definiteness".into())
        })?;
        self.inverse = cholesky_inverse(&l, self.dim);
        self.since_refresh = 0;
        Ok(())
    }

    /// `max |A·A⁻¹ − I|` over all entries.
    pub fn identity_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for k in 0..d {
                    v += self.matrix[i * d + k] * self.inverse[k * d + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    /// `‖x‖_{A⁻¹} = √(xᵀ A⁻¹ x)`.
    pub fn elliptical_potential(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.potential_unchecked(x))
    }

    /// Same as [`Self::elliptical_potential`] without the length check; used in
    /// inner loops where the caller guarantees the dimension.
    pub(crate) fn potential_unchecked(&self, x: &[f64]) -> f64 {
        quad_form(&self.inverse, self.dim, x).max(0.0).sqrt()
    }

    /// `A⁻¹ b` using the cached inverse.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(b)?;
        Ok(mat_vec(&self.inverse, self.dim, b))
    }
}
