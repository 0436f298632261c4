//! Dense linear-algebra kernels: Cholesky factorization for SPD systems and
//! matrix-free power iteration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factors a symmetric positive-definite matrix. Only the lower triangle is read.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "cholesky (square)",
                expected: n,
                actual: a.ncols(),
            });
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !diag.is_finite() || diag <= 0.0 {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `A x = b` by forward then backward substitution.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.l.nrows();
        crate::error::check_dim("cholesky solve rhs", n, b.len())?;
        let l = &self.l;
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }
}

/// Unit-norm start vector drawn from a seeded generator.
pub fn seeded_unit_vector(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    } else if dim > 0 {
        v[0] = 1.0;
    }
    v
}

/// Power iteration on a symmetric operator given only through `apply(x, out)`.
///
/// Returns the largest observed `‖A x_k‖` over unit iterates `x_k`. Every such
/// value is a lower bound on the spectral norm, and the sequence converges to
/// `max |λ|` even when the top eigenvalues come in a `±λ` pair, which is common
/// for Hessians of layered networks.
pub fn power_iteration<F>(start: &DVector<f64>, iterations: usize, mut apply: F) -> f64
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    let dim = start.len();
    if dim == 0 {
        return 0.0;
    }
    let mut x = start.clone();
    let n0 = x.norm();
    if n0 == 0.0 {
        return 0.0;
    }
    x /= n0;
    let mut ax = DVector::zeros(dim);
    let mut best = 0.0f64;
    for _ in 0..iterations.max(1) {
        apply(&x, &mut ax);
        let norm = ax.norm();
        if !norm.is_finite() {
            return f64::NAN;
        }
        best = best.max(norm);
        if norm == 0.0 {
            break;
        }
        x.copy_from(&ax);
        x /= norm;
    }
    best
}

/// Lanczos with full reorthogonalization on a symmetric operator given through
/// `apply(x, out)`, using `iterations` operator applications.
///
/// Returns the larger of the extreme Ritz magnitudes and the largest observed
/// `‖A q_k‖`; both are lower bounds on the spectral norm. The Krylov space holds
/// every power iterate, so this converges at least as fast as
/// [`power_iteration`] and is exact once the space is invariant.
pub fn lanczos_norm<F>(start: &DVector<f64>, iterations: usize, mut apply: F) -> f64
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    let dim = start.len();
    let n0 = start.norm();
    if dim == 0 || n0 == 0.0 {
        return 0.0;
    }
    let mut basis: Vec<DVector<f64>> = vec![start / n0];
    let mut diag = Vec::new();
    let mut off = Vec::new();
    let mut w = DVector::zeros(dim);
    let mut best = 0.0f64;
    for k in 0..iterations.max(1) {
        apply(&basis[k], &mut w);
        let norm = w.norm();
        if !norm.is_finite() {
            return f64::NAN;
        }
        best = best.max(norm);
        diag.push(basis[k].dot(&w));
        // two Gram-Schmidt sweeps against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let beta = w.norm();
        if k + 1 == iterations || basis.len() == dim || beta <= 1e-12 * norm.max(f64::MIN_POSITIVE) {
            break;
        }
        off.push(beta);
        basis.push(&w / beta);
    }
    let m = diag.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = diag[i];
        if i + 1 < m {
            t[(i, i + 1)] = off[i];
            t[(i + 1, i)] = off[i];
        }
    }
    best.max(t.symmetric_eigen().eigenvalues.amax())
}

/// Largest eigenvalue of a dense symmetric PSD matrix by power iteration.
pub fn sym_spectral_norm(a: &DMatrix<f64>, iterations: usize, seed: u64) -> f64 {
    let start = seeded_unit_vector(a.nrows(), seed);
    power_iteration(&start, iterations, |x, out| a.mul_to(x, out))
}

/// Spectral norm `‖M‖₂` of a rectangular matrix by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>, iterations: usize, seed: u64) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let start = seeded_unit_vector(m.ncols(), seed);
    let mut tmp = DVector::zeros(m.nrows());
    let lambda = power_iteration(&start, iterations, |x, out| {
        m.mul_to(x, &mut tmp);
        m.tr_mul_to(&tmp, out);
    });
    lambda.sqrt()
}
