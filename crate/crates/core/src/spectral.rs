//! Ground-state Hamiltonian of the NV-14N pair, its eigenstates tracked
//! adiabatically over one rotation, and the quantities derived from them:
//! nuclear transition frequency, bare-state projections and the hyperfine
//! augmentation of the rf coupling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{field_nv_angle, static_field_nv_frame, FieldGeometry, Vec3};
use crate::interp::PeriodicCurve;
use crate::linalg::{eigh, HermitianEigen};
use crate::num::{cis, Cplx, Real};
use crate::spincore::{
    basis_index, embed_electron, embed_nuclear, embed_pair, spin1_operators, Operator9,
    PhysicalConstants, State9,
};

pub type EigenDecomposition<T> = HermitianEigen<T, 9>;

pub const DEFAULT_TRACK_SAMPLES: usize = 4096;
pub const MIN_TRACK_SAMPLES: usize = 64;
/// Overlaps closer than this make a label assignment ambiguous.
pub const AMBIGUITY_GAP: f64 = 1e-3;
/// Minimum squared overlap accepted when following a state between samples.
pub const OVERLAP_FLOOR: f64 = 0.5;

/// `H(B) = H_static + Σ_i B_i Z_i`, with the field-independent part and the
/// three Zeeman operators precomputed.
#[derive(Clone, Debug)]
pub struct SpinHamiltonian<T> {
    static_part: Operator9<T>,
    zeeman: [Operator9<T>; 3],
}

impl<T: Real> SpinHamiltonian<T> {
    pub fn new(c: &PhysicalConstants<T>) -> Self {
        let s = spin1_operators::<T>();
        let sz2 = s.sz * s.sz;
        let static_part = embed_electron(&sz2).scale(c.d_zfs)
            + embed_nuclear(&sz2).scale(c.quadrupole_q)
            + embed_pair(&s.sz, &s.sz).scale(c.a_par)
            + (embed_pair(&s.sx, &s.sx) + embed_pair(&s.sy, &s.sy)).scale(c.a_perp);
        let zeeman = [0, 1, 2].map(|i| {
            let op = s.components()[i];
            embed_electron(op).scale(-c.gamma_e) + embed_nuclear(op).scale(-c.gamma_n)
        });
        Self { static_part, zeeman }
    }

    pub fn at(&self, b: &Vec3<T>) -> Operator9<T> {
        let mut h = self.static_part;
        for (bi, z) in b.iter().zip(self.zeeman.iter()) {
            if *bi != T::zero() {
                h = h + z.scale(*bi);
            }
        }
        h
    }
}

/// `H = D Sz² − γe S·B − γn I·B + Q Iz² + A∥ Sz Iz + A⊥ (Sx Ix + Sy Iy)`.
pub fn hamiltonian<T: Real>(b: &Vec3<T>, c: &PhysicalConstants<T>) -> Result<Operator9<T>> {
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "magnetic field" });
    }
    Ok(SpinHamiltonian::new(c).at(b))
}

/// Coupling operator per gauss of drive field: `γe S·a + γn I·a`.
pub fn rf_operator<T: Real>(axis: &Vec3<T>, c: &PhysicalConstants<T>) -> Result<Operator9<T>> {
    let n = crate::geometry::norm(axis);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::ZeroAxis);
    }
    let a = axis.map(|x| x / n);
    let s = spin1_operators::<T>();
    let sa = s.along(a);
    Ok(embed_electron(&sa).scale(c.gamma_e) + embed_nuclear(&sa).scale(c.gamma_n))
}

/// Which body-frame direction the rf drive couples along.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum RfAxis<T> {
    /// NV-frame x axis: the transverse projection of the coil axis, matching
    /// the `γe Sx + γn Ix` coupling form.
    #[default]
    NvX,
    /// The full coil axis, parallel to the rotation axis.
    RotationAxis,
    Custom(Vec3<T>),
}

impl<T: Real> RfAxis<T> {
    pub fn resolve(&self, geom: &FieldGeometry<T>) -> Vec3<T> {
        match self {
            RfAxis::NvX => [T::one(), T::zero(), T::zero()],
            RfAxis::RotationAxis => crate::geometry::rf_axis_nv_frame(geom),
            RfAxis::Custom(v) => *v,
        }
    }
}

/// Eigensystem at each sample of one rotation, with labels that follow each
/// state continuously from `phi = 0` and parallel-transport phases.
#[derive(Clone, Debug)]
pub struct AdiabaticTrack<T> {
    pub geometry: FieldGeometry<T>,
    pub constants: PhysicalConstants<T>,
    /// `2π j / (N - 1)`, `j = 0..N`.
    pub phi: Vec<T>,
    /// Labeled energies (rad/s); label order is ascending energy at `phi = 0`.
    pub energies: Vec<[T; 9]>,
    /// Labeled eigenvectors, one column per label.
    pub vectors: Vec<Operator9<T>>,
    /// Product-basis index that dominates each label at `phi = 0`.
    pub dominant_bare: [usize; 9],
    hamiltonian: SpinHamiltonian<T>,
}

fn solve_at<T: Real>(h: &SpinHamiltonian<T>, geom: &FieldGeometry<T>, phi: T) -> EigenDecomposition<T> {
    eigh(&h.at(&static_field_nv_frame(phi, geom)))
}

/// Result of matching one eigensystem onto the labels of a reference one.
fn match_labels<T: Real>(
    reference: &Operator9<T>,
    next: &EigenDecomposition<T>,
    sample: usize,
    phi: T,
) -> Result<([T; 9], Operator9<T>)> {
    let mut energies = [T::zero(); 9];
    let mut vectors = Operator9::zeros();
    let mut taken = [false; 9];
    let gap = T::lit(AMBIGUITY_GAP);
    for k in 0..9 {
        let prev = reference.column(k);
        let mut best = (0usize, T::neg_infinity());
        let mut second = T::neg_infinity();
        for m in 0..9 {
            let ov = prev.dot(&next.vectors.column(m)).norm_sqr();
            if ov > best.1 {
                second = best.1;
                best = (m, ov);
            } else if ov > second {
                second = ov;
            }
        }
        let (m, ov) = best;
        if ov < T::lit(OVERLAP_FLOOR) || ov - second < gap || taken[m] {
            return Err(Error::AmbiguousMatch {
                sample,
                phi: phi.as_f64(),
            });
        }
        taken[m] = true;
        let w = next.vectors.column(m);
        let phase = prev.dot(&w);
        let fixed = w.scale_c(cis(-phase.arg()));
        energies[k] = next.values[m];
        vectors.set_column(k, &fixed);
    }
    Ok((energies, vectors))
}

/// Tracks the eigenstates of `H(phi)` over `[0, 2π]` on `n_samples` points.
pub fn build_track<T: Real>(
    geom: &FieldGeometry<T>,
    c: &PhysicalConstants<T>,
    n_samples: usize,
) -> Result<AdiabaticTrack<T>> {
    geom.validate()?;
    if n_samples < MIN_TRACK_SAMPLES {
        return Err(Error::invalid(
            "spectral",
            "n_samples",
            format!("need at least {MIN_TRACK_SAMPLES}, got {n_samples}"),
        ));
    }
    let h = SpinHamiltonian::new(c);
    let step = T::two_pi() / T::lit((n_samples - 1) as f64);
    let phi: Vec<T> = (0..n_samples).map(|j| step * T::lit(j as f64)).collect();
    let raw: Vec<EigenDecomposition<T>> = phi.par_iter().map(|&p| solve_at(&h, geom, p)).collect();

    // Gauge at phi = 0: dominant component real and positive.
    let first = &raw[0];
    let mut dominant_bare = [0usize; 9];
    let mut v0 = first.vectors;
    for k in 0..9 {
        let col = first.vectors.column(k);
        let (idx, _) = col
            .0
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, z)| {
                if z.norm_sqr() > acc.1 {
                    (i, z.norm_sqr())
                } else {
                    acc
                }
            });
        dominant_bare[k] = idx;
        v0.set_column(k, &col.scale_c(cis(-col.0[idx].arg())));
    }

    let mut energies = Vec::with_capacity(n_samples);
    let mut vectors = Vec::with_capacity(n_samples);
    energies.push(first.values);
    vectors.push(v0);
    for (j, eig) in raw.iter().enumerate().skip(1) {
        let (e, v) = match_labels(&vectors[j - 1], eig, j, phi[j])?;
        energies.push(e);
        vectors.push(v);
    }

    Ok(AdiabaticTrack {
        geometry: *geom,
        constants: *c,
        phi,
        energies,
        vectors,
        dominant_bare,
        hamiltonian: h,
    })
}

impl<T: Real> AdiabaticTrack<T> {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Label whose `phi = 0` state is dominated by `|m_S, m_I>`.
    pub fn label_of(&self, m_s: i8, m_i: i8) -> usize {
        let idx = basis_index(m_s, m_i);
        self.dominant_bare
            .iter()
            .position(|&b| b == idx)
            .expect("every product state dominates exactly one label at alignment")
    }

    /// The state adiabatically connected to `|0,+1>`.
    pub fn eta(&self) -> usize {
        self.label_of(0, 1)
    }

    /// The state adiabatically connected to `|0,0>`.
    pub fn zeta(&self) -> usize {
        self.label_of(0, 0)
    }

    pub fn state(&self, sample: usize, label: usize) -> State9<T> {
        self.vectors[sample].column(label)
    }

    pub fn field_angle(&self, sample: usize) -> T {
        field_nv_angle(self.phi[sample], &self.geometry)
    }

    /// Eigensystem at an arbitrary phase, labeled consistently with the
    /// nearest sample.
    pub fn state_at(&self, phi: T) -> Result<([T; 9], Operator9<T>)> {
        let two_pi = T::two_pi();
        let wrapped = phi - (phi / two_pi).floor() * two_pi;
        let n = self.len() - 1;
        let j = (wrapped / two_pi * T::lit(n as f64))
            .round()
            .to_usize()
            .unwrap_or(0)
            .min(n);
        let eig = solve_at(&self.hamiltonian, &self.geometry, wrapped);
        match_labels(&self.vectors[j], &eig, j, wrapped)
    }

    /// `min_j min_k |<v_k(phi_j)|v_k(phi_j+1)>|²`.
    pub fn min_neighbor_overlap(&self) -> T {
        let mut worst = T::one();
        for w in self.vectors.windows(2) {
            for k in 0..9 {
                worst = worst.min(w[0].column(k).dot(&w[1].column(k)).norm_sqr());
            }
        }
        worst
    }

    pub fn hamiltonian_at(&self, phi: T) -> Operator9<T> {
        self.hamiltonian.at(&static_field_nv_frame(phi, &self.geometry))
    }
}

/// Populations of one tracked state in the aligned-field eigenbasis.
///
/// Column `k` of every row is the weight on the aligned eigenstate dominated
/// by product state `k` (see [`crate::spincore::basis_index`]).
pub fn bare_projections<T: Real>(track: &AdiabaticTrack<T>, label: usize) -> Vec<[T; 9]> {
    let aligned = &track.vectors[0];
    track
        .vectors
        .iter()
        .map(|v| {
            let state = v.column(label);
            let mut row = [T::zero(); 9];
            for k in 0..9 {
                row[track.dominant_bare[k]] = aligned.column(k).dot(&state).norm_sqr();
            }
            row
        })
        .collect()
}

/// `|E_b - E_a| / 2π` at every sample (Hz).
pub fn transition_frequency<T: Real>(track: &AdiabaticTrack<T>, pair: (usize, usize)) -> Vec<T> {
    track
        .energies
        .iter()
        .map(|e| (e[pair.1] - e[pair.0]).abs() / T::two_pi())
        .collect()
}

/// `<zeta| R |eta>` per gauss of drive (rad/s/G), gauge of the track.
pub fn coupling_elements<T: Real>(
    track: &AdiabaticTrack<T>,
    axis: &Vec3<T>,
    c: &PhysicalConstants<T>,
) -> Result<Vec<Cplx<T>>> {
    let r = rf_operator(axis, c)?;
    let (eta, zeta) = (track.eta(), track.zeta());
    Ok(track
        .vectors
        .iter()
        .map(|v| r.matrix_element(&v.column(zeta), &v.column(eta)))
        .collect())
}

/// Bare nuclear matrix element `|<0,0| I·a |0,+1>|` for unit axis `a`.
pub fn bare_nuclear_element<T: Real>(axis: &Vec3<T>) -> T {
    let n = crate::geometry::norm(axis);
    (axis[0] * axis[0] + axis[1] * axis[1]).sqrt() / n * T::FRAC_1_SQRT_2()
}

/// Augmentation factor `α'(phi)`: the dressed `eta -> zeta` coupling relative
/// to the bare 14N coupling along the same axis.
pub fn augmentation_factor<T: Real>(
    track: &AdiabaticTrack<T>,
    axis: &Vec3<T>,
    c: &PhysicalConstants<T>,
) -> Result<Vec<T>> {
    let bare = bare_nuclear_element(axis);
    if !(bare > T::zero()) {
        return Err(Error::invalid(
            "spectral",
            "rf_axis",
            "axis parallel to the NV axis has no transverse nuclear coupling",
        ));
    }
    let norm = c.gamma_n.abs() * bare;
    Ok(coupling_elements(track, axis, c)?
        .into_iter()
        .map(|m| m.norm() / norm)
        .collect())
}

/// Periodic interpolants of the quantities the dynamics needs from a track.
#[derive(Clone, Debug)]
pub struct TrackCurves<T> {
    /// η ↔ ζ splitting (rad/s).
    pub gap: PeriodicCurve<T>,
    /// `|<ζ|R|η>|` (rad/s/G).
    pub coupling: PeriodicCurve<T>,
}

impl<T: Real> TrackCurves<T> {
    pub fn new(track: &AdiabaticTrack<T>, axis: &Vec3<T>) -> Result<Self> {
        let (eta, zeta) = (track.eta(), track.zeta());
        let gap = track.energies.iter().map(|e| e[zeta] - e[eta]).collect();
        let coupling = coupling_elements(track, axis, &track.constants)?
            .into_iter()
            .map(|m| m.norm())
            .collect();
        Ok(Self {
            gap: PeriodicCurve::new(gap),
            coupling: PeriodicCurve::new(coupling),
        })
    }
}
