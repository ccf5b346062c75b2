//! Spin-1 operators, the electron ⊗ nuclear product space and the coupling
//! constants of the NV-14N ground state.
//!
//! Product basis ordering is fixed: `index = 3 * (1 - m_S) + (1 - m_I)`, so
//! `|+1,+1>` is index 0 and `|-1,-1>` is index 8.

use crate::error::{Error, Result};
use crate::linalg::{kron3, Matrix, Matrix3, Matrix9, Vector};
use crate::num::{c, cr, Cplx, Real};

pub type Operator3<T> = Matrix3<T>;
pub type Operator9<T> = Matrix9<T>;
pub type State9<T> = Vector<T, 9>;

/// Coupling constants in angular-frequency units (rad/s, or rad/s/G for the
/// gyromagnetic ratios).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants<T> {
    pub d_zfs: T,
    pub gamma_e: T,
    pub gamma_n: T,
    pub quadrupole_q: T,
    pub a_par: T,
    pub a_perp: T,
}

/// Defaults in ordinary frequency units (Hz, Hz/G).
pub mod defaults_hz {
    pub const D_ZFS: f64 = 2.870e9;
    pub const GAMMA_E: f64 = -2.8e6;
    /// 14N gyromagnetic ratio. The rounded 307 Hz/G is also accepted through
    /// configuration; the difference is below every tolerance we check.
    pub const GAMMA_N: f64 = 307.7;
    pub const Q: f64 = -4.9457e6;
    pub const A_PAR: f64 = -2.162e6;
    pub const A_PERP: f64 = -2.62e6;
}

impl<T: Real> Default for PhysicalConstants<T> {
    fn default() -> Self {
        use defaults_hz::*;
        Self::from_hz(D_ZFS, GAMMA_E, GAMMA_N, Q, A_PAR, A_PERP)
            .expect("default constants are valid")
    }
}

impl<T: Real> PhysicalConstants<T> {
    /// Builds the registry from ordinary frequencies (Hz and Hz/G).
    pub fn from_hz(
        d_zfs_hz: f64,
        gamma_e_hz_per_g: f64,
        gamma_n_hz_per_g: f64,
        q_hz: f64,
        a_par_hz: f64,
        a_perp_hz: f64,
    ) -> Result<Self> {
        let all = [d_zfs_hz, gamma_e_hz_per_g, gamma_n_hz_per_g, q_hz, a_par_hz, a_perp_hz];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "physical constant",
            });
        }
        if d_zfs_hz <= 0.0 {
            return Err(Error::invalid("spincore", "d_zfs_hz", "must be positive"));
        }
        let w = |hz: f64| T::lit(std::f64::consts::TAU * hz);
        Ok(Self {
            d_zfs: w(d_zfs_hz),
            gamma_e: w(gamma_e_hz_per_g),
            gamma_n: w(gamma_n_hz_per_g),
            quadrupole_q: w(q_hz),
            a_par: w(a_par_hz),
            a_perp: w(a_perp_hz),
        })
    }

    /// Same constants with the transverse hyperfine coupling removed.
    pub fn without_transverse_hyperfine(mut self) -> Self {
        self.a_perp = T::zero();
        self
    }
}

/// The three spin-1 matrices in the `{+1, 0, -1}` basis (ħ = 1).
#[derive(Clone, Copy, Debug)]
pub struct SpinOperators<T> {
    pub sx: Operator3<T>,
    pub sy: Operator3<T>,
    pub sz: Operator3<T>,
    pub identity3: Operator3<T>,
}

impl<T: Real> SpinOperators<T> {
    pub fn components(&self) -> [&Operator3<T>; 3] {
        [&self.sx, &self.sy, &self.sz]
    }

    /// `S · n` for a (not necessarily unit) 3-vector `n`.
    pub fn along(&self, n: [T; 3]) -> Operator3<T> {
        self.sx.scale(n[0]) + self.sy.scale(n[1]) + self.sz.scale(n[2])
    }
}

pub fn spin1_operators<T: Real>() -> SpinOperators<T> {
    let z = cr(T::zero());
    let h = T::FRAC_1_SQRT_2();
    let sx = Matrix([[z, cr(h), z], [cr(h), z, cr(h)], [z, cr(h), z]]);
    let sy = Matrix([
        [z, c(T::zero(), -h), z],
        [c(T::zero(), h), z, c(T::zero(), -h)],
        [z, c(T::zero(), h), z],
    ]);
    let sz = Matrix3::from_diagonal(&[T::one(), T::zero(), -T::one()]);
    SpinOperators {
        sx,
        sy,
        sz,
        identity3: Matrix3::identity(),
    }
}

impl<T: Real> Operator3<T> {
    /// Builds a 3x3 operator from dynamically sized rows.
    pub fn from_rows(rows: &[Vec<Cplx<T>>]) -> Result<Self> {
        let bad = rows.len() != 3 || rows.iter().any(|r| r.len() != 3);
        if bad {
            return Err(Error::DimensionMismatch {
                expected_rows: 3,
                expected_cols: 3,
                rows: rows.len(),
                cols: rows.iter().map(Vec::len).max().unwrap_or(0),
            });
        }
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

/// `op ⊗ 1`
pub fn embed_electron<T: Real>(op: &Operator3<T>) -> Operator9<T> {
    kron3(op, &Matrix3::identity())
}

/// `1 ⊗ op`
pub fn embed_nuclear<T: Real>(op: &Operator3<T>) -> Operator9<T> {
    kron3(&Matrix3::identity(), op)
}

/// `op_s ⊗ op_i`
pub fn embed_pair<T: Real>(op_s: &Operator3<T>, op_i: &Operator3<T>) -> Operator9<T> {
    kron3(op_s, op_i)
}

/// Product-basis index of `|m_S, m_I>`.
pub fn basis_index(m_s: i8, m_i: i8) -> usize {
    debug_assert!((-1..=1).contains(&m_s) && (-1..=1).contains(&m_i));
    (3 * (1 - m_s as i32) + (1 - m_i as i32)) as usize
}

/// Inverse of [`basis_index`].
pub fn basis_quantum_numbers(index: usize) -> (i8, i8) {
    (1 - (index / 3) as i8, 1 - (index % 3) as i8)
}

pub fn basis_label(index: usize) -> String {
    let (s, i) = basis_quantum_numbers(index);
    format!("|{s:+},{i:+}>")
}

pub fn basis_state<T: Real>(m_s: i8, m_i: i8) -> State9<T> {
    State9::basis(basis_index(m_s, m_i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sz_is_diagonal_in_basis_order() {
        let s = spin1_operators::<f64>();
        assert_eq!(s.sz.0[0][0].re, 1.0);
        assert_eq!(s.sz.0[1][1].re, 0.0);
        assert_eq!(s.sz.0[2][2].re, -1.0);
    }

    #[test]
    fn commutation_relations() {
        let s = spin1_operators::<f64>();
        let i = c(0.0, 1.0);
        assert!((s.sx.commutator(&s.sy) - s.sz.scale_c(i)).max_abs() < 1e-15);
        assert!((s.sy.commutator(&s.sz) - s.sx.scale_c(i)).max_abs() < 1e-15);
        assert!((s.sz.commutator(&s.sx) - s.sy.scale_c(i)).max_abs() < 1e-15);
    }

    #[test]
    fn spin1_normalization_and_spectrum() {
        let s = spin1_operators::<f64>();
        for op in s.components() {
            assert!(((*op * *op).trace().re - 2.0).abs() < 1e-15);
            assert!(op.trace().norm() < 1e-15);
            assert!(op.hermiticity_defect() < 1e-15);
            let e = crate::linalg::eigh(op);
            for (got, want) in e.values.iter().zip([-1.0, 0.0, 1.0]) {
                assert!((got - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn embeddings_act_on_the_right_factor() {
        let s = spin1_operators::<f64>();
        let ez = embed_electron(&s.sz);
        let psi = basis_state::<f64>(-1, 0);
        assert!((ez.matrix_element(&psi, &psi).re + 1.0).abs() < 1e-15);

        let zz = embed_pair(&s.sz, &s.sz);
        let up = basis_state::<f64>(1, 1);
        assert!((zz.matrix_element(&up, &up).re - 1.0).abs() < 1e-15);

        let nz = embed_nuclear(&s.sz);
        assert_eq!(ez.commutator(&nz).max_abs(), 0.0);
    }

    #[test]
    fn pair_is_product_of_embeddings() {
        let s = spin1_operators::<f64>();
        for a in s.components() {
            for b in s.components() {
                let lhs = embed_pair(a, b);
                let rhs = embed_electron(a) * embed_nuclear(b);
                assert_eq!((lhs - rhs).max_abs(), 0.0);
                assert!(lhs.hermiticity_defect() < 1e-14);
            }
        }
    }

    #[test]
    fn from_rows_rejects_wrong_shape() {
        let rows = vec![vec![cr(1.0f64); 3]; 2];
        assert!(matches!(
            Operator3::from_rows(&rows),
            Err(Error::DimensionMismatch { rows: 2, .. })
        ));
        let ok = vec![vec![cr(1.0f64); 3]; 3];
        assert!(Operator3::from_rows(&ok).is_ok());
    }

    #[test]
    fn basis_index_roundtrip() {
        assert_eq!(basis_index(1, 1), 0);
        assert_eq!(basis_index(-1, -1), 8);
        assert_eq!(basis_index(0, 1), 3);
        for k in 0..9 {
            let (s, i) = basis_quantum_numbers(k);
            assert_eq!(basis_index(s, i), k);
        }
    }

    #[test]
    fn default_constants_in_hz() {
        let c = PhysicalConstants::<f64>::default();
        let hz = |w: f64| w / std::f64::consts::TAU;
        assert!((hz(c.d_zfs) - 2.870e9).abs() < 1e-3);
        assert!((hz(c.gamma_e) + 2.8e6).abs() < 1e-6);
        assert!((hz(c.gamma_n) - 307.7).abs() < 1e-9);
        assert!((hz(c.quadrupole_q) + 4.9457e6).abs() < 1e-6);
        assert!((hz(c.a_par) + 2.162e6).abs() < 1e-6);
        assert!((hz(c.a_perp) + 2.62e6).abs() < 1e-6);
    }

    #[test]
    fn constants_validation() {
        assert!(PhysicalConstants::<f64>::from_hz(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(PhysicalConstants::<f64>::from_hz(1.0, f64::NAN, 0.0, 0.0, 0.0, 0.0).is_err());
    }
}
