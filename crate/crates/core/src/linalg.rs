//! Small fixed-size complex matrices and a Hermitian eigensolver.
//!
//! Everything here is stack allocated: the largest operator in the crate is
//! the 9x9 electron-nuclear Hamiltonian, and the eigensolver runs thousands of
//! times per rotation, so heap traffic matters more than asymptotics.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::num::{cis, cr, Cplx, Real};

/// Dense `N x N` complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix<T, const N: usize>(pub [[Cplx<T>; N]; N]);

/// Complex column vector of length `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector<T, const N: usize>(pub [Cplx<T>; N]);

pub type Matrix2<T> = Matrix<T, 2>;
pub type Matrix3<T> = Matrix<T, 3>;
pub type Matrix9<T> = Matrix<T, 9>;

impl<T: Real, const N: usize> Matrix<T, N> {
    pub fn zeros() -> Self {
        Matrix([[Cplx::new(T::zero(), T::zero()); N]; N])
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { cr(T::one()) } else { cr(T::zero()) })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Cplx<T>) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn from_diagonal(d: &[T; N]) -> Self {
        Self::from_fn(|i, j| if i == j { cr(d[i]) } else { cr(T::zero()) })
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    pub fn scale_c(&self, s: Cplx<T>) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    pub fn trace(&self) -> Cplx<T> {
        (0..N).map(|i| self.0[i][i]).fold(cr(T::zero()), |a, b| a + b)
    }

    pub fn frobenius_norm(&self) -> T {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    /// Largest elementwise deviation from Hermiticity, `max |a_ij - conj(a_ji)|`.
    pub fn hermiticity_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..N {
            for j in 0..N {
                worst = worst.max((self.0[i][j] - self.0[j][i].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> T {
        self.0
            .iter()
            .flatten()
            .fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    pub fn apply(&self, v: &Vector<T, N>) -> Vector<T, N> {
        let mut out = Vector::zeros();
        for i in 0..N {
            let mut acc = cr(T::zero());
            for j in 0..N {
                acc = acc + self.0[i][j] * v.0[j];
            }
            out.0[i] = acc;
        }
        out
    }

    pub fn column(&self, j: usize) -> Vector<T, N> {
        let mut v = Vector::zeros();
        for i in 0..N {
            v.0[i] = self.0[i][j];
        }
        v
    }

    pub fn set_column(&mut self, j: usize, v: &Vector<T, N>) {
        for i in 0..N {
            self.0[i][j] = v.0[i];
        }
    }

    /// `<a| M |b>`.
    pub fn matrix_element(&self, a: &Vector<T, N>, b: &Vector<T, N>) -> Cplx<T> {
        a.dot(&self.apply(b))
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<T: Real, const N: usize> Index<(usize, usize)> for Matrix<T, N> {
    type Output = Cplx<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Cplx<T> {
        &self.0[i][j]
    }
}

impl<T: Real, const N: usize> IndexMut<(usize, usize)> for Matrix<T, N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cplx<T> {
        &mut self.0[i][j]
    }
}

impl<T: Real, const N: usize> Add for Matrix<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + rhs.0[i][j])
    }
}

impl<T: Real, const N: usize> Sub for Matrix<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] - rhs.0[i][j])
    }
}

impl<T: Real, const N: usize> Neg for Matrix<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_fn(|i, j| -self.0[i][j])
    }
}

impl<T: Real, const N: usize> Mul for Matrix<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for j in 0..N {
                    out.0[i][j] = out.0[i][j] + a * rhs.0[k][j];
                }
            }
        }
        out
    }
}

/// Kronecker product `a ⊗ b` of two 3x3 operators. Row index of the result is
/// `3 * i_a + i_b`.
pub fn kron3<T: Real>(a: &Matrix3<T>, b: &Matrix3<T>) -> Matrix9<T> {
    Matrix9::from_fn(|i, j| a.0[i / 3][j / 3] * b.0[i % 3][j % 3])
}

impl<T: Real, const N: usize> Vector<T, N> {
    pub fn zeros() -> Self {
        Vector([Cplx::new(T::zero(), T::zero()); N])
    }

    pub fn basis(k: usize) -> Self {
        let mut v = Self::zeros();
        v.0[k] = cr(T::one());
        v
    }

    /// `<self|other>` (conjugate-linear in `self`).
    pub fn dot(&self, other: &Self) -> Cplx<T> {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(cr(T::zero()), |acc, (a, b)| acc + a.conj() * *b)
    }

    pub fn norm_sqr(&self) -> T {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn scale_c(&self, s: Cplx<T>) -> Self {
        let mut v = *self;
        v.0.iter_mut().for_each(|z| *z = *z * s);
        v
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scale_c(cr(T::one() / n))
    }

    /// Populations `|v_k|^2`.
    pub fn populations(&self) -> [T; N] {
        let mut p = [T::zero(); N];
        for (pk, z) in p.iter_mut().zip(self.0.iter()) {
            *pk = z.norm_sqr();
        }
        p
    }
}

/// Eigen-decomposition of a Hermitian matrix: ascending real eigenvalues and
/// the unitary whose columns are the matching eigenvectors.
#[derive(Clone, Copy, Debug)]
pub struct HermitianEigen<T, const N: usize> {
    pub values: [T; N],
    pub vectors: Matrix<T, N>,
}

const MAX_SWEEPS: usize = 64;

/// Diagonalizes a Hermitian matrix with the cyclic complex Jacobi method.
///
/// Only the Hermitian part of `h` is meaningful; the strictly lower triangle is
/// taken as the conjugate of the upper one after every rotation.
pub fn eigh<T: Real, const N: usize>(h: &Matrix<T, N>) -> HermitianEigen<T, N> {
    let mut a = *h;
    let mut v = Matrix::<T, N>::identity();
    for i in 0..N {
        a.0[i][i] = cr(a.0[i][i].re);
    }
    let scale = a.frobenius_norm();
    let tol = T::solver_eps() * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..N {
            for q in (p + 1)..N {
                off += a.0[p][q].norm_sqr();
            }
        }
        if off.sqrt() <= tol || scale == T::zero() {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a.0[p][q];
                let r = apq.norm();
                if r <= tol * T::lit(1e-3) {
                    continue;
                }
                let phase = cis(apq.arg());
                let app = a.0[p][p].re;
                let aqq = a.0[q][q].re;
                let theta = (aqq - app) / (r + r);
                let t = {
                    let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
                    sgn / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = t * cs;
                // U = D R D^H with D = diag(.., e^{-i arg a_pq} at q, ..).
                let u_qp = -phase.conj() * sn;
                let u_pq = phase * sn;

                for k in 0..N {
                    let akp = a.0[k][p];
                    let akq = a.0[k][q];
                    a.0[k][p] = akp * cs + akq * u_qp;
                    a.0[k][q] = akp * u_pq + akq * cs;
                }
                for k in 0..N {
                    let apk = a.0[p][k];
                    let aqk = a.0[q][k];
                    a.0[p][k] = apk * cs + aqk * u_qp.conj();
                    a.0[q][k] = apk * u_pq.conj() + aqk * cs;
                }
                a.0[p][q] = cr(T::zero());
                a.0[q][p] = cr(T::zero());
                a.0[p][p] = cr(a.0[p][p].re);
                a.0[q][q] = cr(a.0[q][q].re);

                for k in 0..N {
                    let vkp = v.0[k][p];
                    let vkq = v.0[k][q];
                    v.0[k][p] = vkp * cs + vkq * u_qp;
                    v.0[k][q] = vkp * u_pq + vkq * cs;
                }
            }
        }
    }

    let mut order: [usize; N] = [0; N];
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    order.sort_by(|&i, &j| {
        a.0[i][i]
            .re
            .partial_cmp(&a.0[j][j].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = [T::zero(); N];
    let mut vectors = Matrix::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a.0[src][src].re;
        for k in 0..N {
            vectors.0[k][dst] = v.0[k][src];
        }
    }
    HermitianEigen { values, vectors }
}

impl<T: Real, const N: usize> HermitianEigen<T, N> {
    /// `exp(-i H t)` applied to `psi`, using the stored decomposition of `H`.
    pub fn evolve(&self, psi: &Vector<T, N>, t: T) -> Vector<T, N> {
        let mut coeffs = Vector::zeros();
        for k in 0..N {
            let vk = self.vectors.column(k);
            coeffs.0[k] = vk.dot(psi) * cis(-self.values[k] * t);
        }
        self.vectors.apply(&coeffs)
    }

    /// The unitary `exp(-i H t)`.
    pub fn propagator(&self, t: T) -> Matrix<T, N> {
        let mut phases = Matrix::zeros();
        for k in 0..N {
            phases.0[k][k] = cis(-self.values[k] * t);
        }
        self.vectors * phases * self.vectors.adjoint()
    }

    /// Largest column residual `|H v_k - E_k v_k|`.
    pub fn residual(&self, h: &Matrix<T, N>) -> T {
        (0..N)
            .map(|k| {
                let vk = self.vectors.column(k);
                let hv = h.apply(&vk);
                let mut r = T::zero();
                for i in 0..N {
                    r += (hv.0[i] - vk.0[i] * self.values[k]).norm_sqr();
                }
                r.sqrt()
            })
            .fold(T::zero(), T::max)
    }

    /// Largest deviation of `V^H V` from the identity.
    pub fn orthonormality_defect(&self) -> T {
        let g = self.vectors.adjoint() * self.vectors;
        (g - Matrix::identity()).max_abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::c;
    use proptest::prelude::*;

    fn hermitian_from(entries: &[f64], n: usize) -> Matrix9<f64> {
        let mut m = Matrix9::zeros();
        let mut it = entries.iter().copied();
        for i in 0..n {
            m.0[i][i] = cr(it.next().unwrap());
            for j in (i + 1)..n {
                let z = c(it.next().unwrap(), it.next().unwrap());
                m.0[i][j] = z;
                m.0[j][i] = z.conj();
            }
        }
        m
    }

    #[test]
    fn diagonal_matrix_is_sorted() {
        let m = Matrix::<f64, 3>::from_diagonal(&[3.0, -1.0, 2.0]);
        let e = eigh(&m);
        assert_eq!(e.values, [-1.0, 2.0, 3.0]);
        assert!(e.residual(&m) < 1e-14);
    }

    #[test]
    fn pauli_y_eigenpairs() {
        let m = Matrix::<f64, 2>(
            [[cr(0.0), c(0.0, -1.0)], [c(0.0, 1.0), cr(0.0)]],
        );
        let e = eigh(&m);
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
        assert!(e.residual(&m) < 1e-14);
    }

    #[test]
    fn degenerate_spectrum_still_orthonormal() {
        let m = Matrix9::<f64>::identity().scale(2.5);
        let e = eigh(&m);
        assert!(e.orthonormality_defect() < 1e-15);
        assert!(e.values.iter().all(|&x| (x - 2.5).abs() < 1e-15));
    }

    #[test]
    fn propagator_is_unitary() {
        let m = hermitian_from(&(0..81).map(|k| ((k * 37 % 11) as f64) - 5.0).collect::<Vec<_>>(), 9);
        let u = eigh(&m).propagator(0.37);
        let defect = (u.adjoint() * u - Matrix9::identity()).max_abs();
        assert!(defect < 1e-13, "defect {defect}");
    }

    #[test]
    fn f32_solver_converges() {
        let m = Matrix::<f32, 3>::from_fn(|i, j| {
            if i == j {
                cr(i as f32)
            } else if i < j {
                c(0.5, 0.25)
            } else {
                c(0.5, -0.25)
            }
        });
        let e = eigh(&m);
        assert!(e.residual(&m) < 1e-5);
        assert!(e.orthonormality_defect() < 1e-5);
    }

    proptest! {
        #[test]
        fn random_hermitian_decomposes(entries in proptest::collection::vec(-1e3f64..1e3, 81)) {
            let m = hermitian_from(&entries, 9);
            let e = eigh(&m);
            let scale = m.frobenius_norm().max(1.0);
            prop_assert!(e.residual(&m) <= scale * 1e-12);
            prop_assert!(e.orthonormality_defect() <= 1e-12);
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            let trace: f64 = e.values.iter().sum();
            prop_assert!((trace - m.trace().re).abs() <= scale * 1e-12);
        }
    }
}
