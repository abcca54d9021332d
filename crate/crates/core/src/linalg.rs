//! Dense linear-algebra helpers shared by the problem generator, the
//! spectral analysis and the verification suites.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// sign of `R`'s diagonal folded back into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn complex_singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Spectral (operator 2-) norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    sigma_max(m)
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigenvalues of a general real square matrix through the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Unit-norm vector spanning the (numerical) null space of `m`: the right
/// singular vector of the smallest singular value.
pub fn null_vector(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    // rows of V^H are conjugated right singular vectors
    DVector::from_fn(n, |i, _| v_t[(idx, i)].conj())
}

/// Orthonormal basis (as columns) of the numerical null space, taking the
/// `k` smallest right singular vectors.
pub fn null_basis(m: &DMatrix<Complex64>, k: usize) -> DMatrix<Complex64> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    DMatrix::from_fn(n, k, |i, j| v_t[(order[j], i)].conj())
}

/// Places `block` in the top-left corner of a `size`×`size` zero matrix.
pub fn embed_top_left(block: &DMatrix<f64>, size: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(size, size);
    out.view_mut((0, 0), (block.nrows(), block.ncols())).copy_from(block);
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..7 {
            let q = random_orthogonal(d, &mut rng);
            let err = max_abs(&(q.transpose() * &q - DMatrix::identity(d, d)));
            assert!(err < 1e-13, "d={d} err={err}");
        }
    }

    #[test]
    fn null_vector_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let v = null_vector(&to_complex(&m));
        let r = to_complex(&m) * &v;
        assert!(r.norm() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-14);
    }
}
