//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

pub type CMatrix = DMatrix<Complex64>;

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Diagonal matrix from real entries.
pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(values[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Unitary DFT matrix of size `n`: entry (a, b) is e^(−j2πab/n)/√n.
pub fn unitary_dft(n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |a, b| {
        let phase = -2.0 * PI * ((a * b) % n) as f64 / n as f64;
        Complex64::from_polar(scale, phase)
    })
}

/// Block DFT F_X = F ⊗ I_X with F the unitary `n`-point DFT.
pub fn block_dft(n: usize, x: usize) -> CMatrix {
    unitary_dft(n).kronecker(&identity(x))
}

/// Frobenius norm.
pub fn fro(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖a − b‖_F / max(‖b‖_F, tiny).
pub fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    fro(&(a - b)) / fro(b).max(f64::MIN_POSITIVE)
}

/// Largest entry-wise modulus of M†M − I.
pub fn unitarity_error(m: &CMatrix) -> f64 {
    let g = m.adjoint() * m;
    let id = identity(g.nrows());
    (g - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
///
/// Returns `None` when the factorization breaks down.
pub fn hpd_inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Extends the orthonormal columns of `q` (n × r) to an n × n unitary
/// matrix. The added columns come first so that `q` occupies the right-most
/// block.
pub fn complete_unitary(q: &CMatrix) -> CMatrix {
    let n = q.nrows();
    let r = q.ncols();
    let mut extra: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n - r);
    let existing: Vec<_> = (0..r).map(|j| q.column(j).into_owned()).collect();
    // Gram-Schmidt against the standard basis, keeping the best-conditioned
    // candidates first.
    while extra.len() < n - r {
        let mut best: Option<(f64, nalgebra::DVector<Complex64>)> = None;
        for e in 0..n {
            let mut v = nalgebra::DVector::<Complex64>::zeros(n);
            v[e] = Complex64::new(1.0, 0.0);
            for _ in 0..2 {
                for b in existing.iter().chain(extra.iter()) {
                    let proj = b.dotc(&v);
                    v -= b * proj;
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("n > 0");
        extra.push(v / Complex64::new(norm, 0.0));
    }
    let mut out = CMatrix::zeros(n, n);
    for (j, v) in extra.iter().chain(existing.iter()).enumerate() {
        out.set_column(j, v);
    }
    out
}
