//! Dense complex matrices of small dimension (system size N times the
//! number of top-order multi-indices M). Everything here is sized for
//! d <= 10 or so; no BLAS, fully deterministic.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix {
            dim,
            data: vec![C_ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C_ONE;
        }
        m
    }

    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), dim);
            m.data[i * dim..(i + 1) * dim].copy_from_slice(r);
        }
        m
    }

    pub fn scaled_identity(dim: usize, c: Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = c;
        }
        m
    }

    pub fn conj_transpose(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    /// (A + A*)/2.
    pub fn hermitian_part(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)].conj());
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let aik = self[(i, k)];
                if aik == C_ZERO {
                    continue;
                }
                for j in 0..d {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim;
        for i in 0..d {
            let mut acc = C_ZERO;
            let row = &self.data[i * d..(i + 1) * d];
            for j in 0..d {
                acc += row[j] * x[j];
            }
            y[i] = acc;
        }
    }

    /// y = A* x without materializing the adjoint.
    pub fn mul_vec_adjoint(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim;
        for i in 0..d {
            let mut acc = C_ZERO;
            for j in 0..d {
                acc += self[(j, i)].conj() * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn max_entry_modulus(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// 1-norm (max column sum), used to pick the exp scaling.
    pub fn norm_one(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Eigenvalues of a Hermitian matrix by the cyclic complex Jacobi method.
/// Input is assumed Hermitian; only the Hermitian part of round-off
/// asymmetry is seen. Returns eigenvalues sorted ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let d = m.dim;
    if d == 1 {
        return vec![m[(0, 0)].re];
    }
    let mut a = m.clone();
    // off = sum of squared moduli of off-diagonal entries
    let off = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s
    };
    let scale: f64 = a.data.iter().map(|z| z.norm_sqr()).sum::<f64>().max(1e-300);
    for _sweep in 0..60 {
        if off(&a) <= 1e-30 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                if apq.norm_sqr() <= 1e-34 * scale {
                    continue;
                }
                // Unitary rotation (complex Givens) zeroing a[p][q].
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let abs = apq.norm();
                let phase = apq / abs;
                let tau = (aqq - app) / (2.0 * abs);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns/rows update: G acts on indices p, q.
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * phase.conj() * akq;
                    a[(k, q)] = s * phase * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * phase * aqk;
                    a[(q, k)] = s * phase.conj() * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| a[(i, i)].re).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(&m.hermitian_part())[0]
}

/// Solve A x = b by LU with partial pivoting; A is consumed as workspace.
pub fn lu_solve(mut a: CMatrix, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let d = a.dim;
    let mut x = b.to_vec();
    let mut piv: Vec<usize> = (0..d).collect();
    for k in 0..d {
        let (mut pmax, mut vmax) = (k, a[(k, k)].norm());
        for i in (k + 1)..d {
            let v = a[(i, k)].norm();
            if v > vmax {
                pmax = i;
                vmax = v;
            }
        }
        if vmax == 0.0 {
            return Err(Error::InvalidArgument("singular matrix in lu_solve".into()));
        }
        if pmax != k {
            for j in 0..d {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(pmax, j)];
                a[(pmax, j)] = tmp;
            }
            piv.swap(k, pmax);
            x.swap(k, pmax);
        }
        let inv = C_ONE / a[(k, k)];
        for i in (k + 1)..d {
            let f = a[(i, k)] * inv;
            a[(i, k)] = f;
            for j in (k + 1)..d {
                let akj = a[(k, j)];
                a[(i, j)] -= f * akj;
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for i in (0..d).rev() {
        let mut acc = x[i];
        for j in (i + 1)..d {
            acc -= a[(i, j)] * x[j];
        }
        x[i] = acc / a[(i, i)];
    }
    Ok(x)
}

/// Matrix exponential by scaling-and-squaring with the [6/6] Pade
/// approximant. Accurate to ~1e-13 for the well-scaled inputs we feed it
/// (symbols contracted to system size N).
pub fn matrix_exp(m: &CMatrix) -> Result<CMatrix> {
    let d = m.dim;
    if d == 1 {
        let mut out = CMatrix::zeros(1);
        out[(0, 0)] = m[(0, 0)].exp();
        return Ok(out);
    }
    let norm = m.norm_one();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale(Complex64::new(0.5f64.powi(s), 0.0));

    // Pade [6/6]: p(A) e^{-A} ~ q(A); coefficients of p with +A, q with -A.
    let coeff = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let mut p = CMatrix::scaled_identity(d, Complex64::new(coeff[0], 0.0));
    let mut q = p.clone();
    let mut apow = CMatrix::identity(d);
    for (k, &c) in coeff.iter().enumerate().skip(1) {
        apow = apow.matmul(&a);
        let term = apow.scale(Complex64::new(c, 0.0));
        p = p.add(&term);
        if k % 2 == 0 {
            q = q.add(&term);
        } else {
            q = q.sub(&term);
        }
    }
    // exp(a) = q^{-1} p, solved column by column.
    let mut e = CMatrix::zeros(d);
    for j in 0..d {
        let col: Vec<Complex64> = (0..d).map(|i| p[(i, j)]).collect();
        let x = lu_solve(q.clone(), &col)?;
        for i in 0..d {
            e[(i, j)] = x[i];
        }
    }
    for _ in 0..s {
        e = e.matmul(&e);
    }
    if !e.is_finite() {
        return Err(Error::NonFinite("matrix_exp".into()));
    }
    Ok(e)
}

/// Cholesky factorization of a real symmetric positive definite matrix
/// (row-major, dim x dim). Returns the lower factor.
pub fn cholesky_real(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "matrix not positive definite".into(),
                    ));
                }
                l[i * dim + i] = s.sqrt();
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    Ok(l)
}

/// Solve L L^T x = b for complex b given the real lower factor L.
pub fn cholesky_solve(l: &[f64], dim: usize, b: &[Complex64]) -> Vec<Complex64> {
    let mut y = b.to_vec();
    for i in 0..dim {
        let mut acc = y[i];
        for k in 0..i {
            acc -= l[i * dim + k] * y[k];
        }
        y[i] = acc / l[i * dim + i];
    }
    for i in (0..dim).rev() {
        let mut acc = y[i];
        for k in (i + 1)..dim {
            acc -= l[k * dim + i] * y[k];
        }
        y[i] = acc / l[i * dim + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hermitian_eig_2x2_closed_form() {
        // [[2, 1-i], [1+i, 3]]: eigenvalues (5 +- sqrt(9))/2 = {1, 4}.
        let m = CMatrix::from_rows(&[&[c(2.0, 0.0), c(1.0, -1.0)], &[c(1.0, 1.0), c(3.0, 0.0)]]);
        let e = hermitian_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-12, "{e:?}");
        assert!((e[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_eig_diag() {
        let mut m = CMatrix::zeros(3);
        m[(0, 0)] = c(3.0, 0.0);
        m[(1, 1)] = c(-1.0, 0.0);
        m[(2, 2)] = c(0.5, 0.0);
        let e = hermitian_eigenvalues(&m);
        assert_eq!(e, vec![-1.0, 0.5, 3.0]);
    }

    #[test]
    fn lu_solves_random_system() {
        let m = CMatrix::from_rows(&[
            &[c(4.0, 1.0), c(1.0, 0.0), c(0.0, -2.0)],
            &[c(0.5, 0.0), c(3.0, -1.0), c(1.0, 1.0)],
            &[c(0.0, 1.0), c(2.0, 0.0), c(5.0, 0.0)],
        ]);
        let xs = vec![c(1.0, 2.0), c(-0.5, 0.25), c(2.0, -1.0)];
        let mut b = vec![C_ZERO; 3];
        m.mul_vec(&xs, &mut b);
        let sol = lu_solve(m.clone(), &b).unwrap();
        for (a, b) in sol.iter().zip(&xs) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&CMatrix::zeros(3)).unwrap();
        assert_eq!(e, CMatrix::identity(3));
    }

    #[test]
    fn exp_matches_scalar() {
        let m = CMatrix::scaled_identity(2, c(-1.25, 0.5));
        let e = matrix_exp(&m).unwrap();
        let expect = c(-1.25, 0.5).exp();
        assert!((e[(0, 0)] - expect).norm() < 1e-13);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn exp_nilpotent_closed_form() {
        // exp([[0, a], [0, 0]]) = [[1, a], [0, 1]]
        let mut m = CMatrix::zeros(2);
        m[(0, 1)] = c(3.0, -2.0);
        let e = matrix_exp(&m).unwrap();
        assert!((e[(0, 0)] - C_ONE).norm() < 1e-14);
        assert!((e[(0, 1)] - c(3.0, -2.0)).norm() < 1e-13);
        assert!(e[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn exp_semigroup_property() {
        let m = CMatrix::from_rows(&[&[c(-2.0, 0.3), c(0.5, -0.1)], &[c(0.2, 0.0), c(-1.0, -0.4)]]);
        let e1 = matrix_exp(&m).unwrap();
        let e2 = matrix_exp(&m.scale(c(2.0, 0.0))).unwrap();
        let sq = e1.matmul(&e1);
        for (a, b) in sq.data.iter().zip(&e2.data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = vec![4.0, 2.0, 0.5, 2.0, 5.0, 1.0, 0.5, 1.0, 3.0];
        let l = cholesky_real(&a, 3).unwrap();
        let b = vec![c(1.0, -1.0), c(0.0, 2.0), c(3.0, 0.5)];
        let x = cholesky_solve(&l, 3, &b);
        // verify A x = b
        for i in 0..3 {
            let mut acc = C_ZERO;
            for j in 0..3 {
                acc += a[i * 3 + j] * x[j];
            }
            assert!((acc - b[i]).norm() < 1e-12);
        }
    }
}
