//! Track and coupling checks against closed-form oracles.

use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rotorspin_core::geometry::{static_field_nv_frame, FieldGeometry};
use rotorspin_core::spectral::*;
use rotorspin_core::spincore::{basis_index, PhysicalConstants};

/// Eigenvalues of a real symmetric 3x3 matrix, ascending (trigonometric form).
fn sym3_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = a;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let mut e = [e1, 3.0 * q - e1 - e3, e3];
    e.sort_by(f64::total_cmp);
    e
}

/// Aligned-field energies of the η and ζ branches from the blocks that
/// conserve `m_S + m_I`.
fn aligned_gap_oracle(c: &PhysicalConstants<f64>, b: f64) -> f64 {
    let diag = |ms: f64, mi: f64| {
        c.d_zfs * ms * ms - c.gamma_e * b * ms - c.gamma_n * b * mi + c.quadrupole_q * mi * mi + c.a_par * ms * mi
    };
    // {|0,+1>, |+1,0>}
    let (h11, h22, off) = (diag(0.0, 1.0), diag(1.0, 0.0), c.a_perp);
    let mean = 0.5 * (h11 + h22);
    let half = (0.25 * (h11 - h22).powi(2) + off * off).sqrt();
    let eta = if h11 < h22 { mean - half } else { mean + half };
    // {|0,0>, |+1,-1>, |-1,+1>}: the branch nearest the bare |0,0> level.
    let m = [
        [diag(0.0, 0.0), c.a_perp, c.a_perp],
        [c.a_perp, diag(1.0, -1.0), 0.0],
        [c.a_perp, 0.0, diag(-1.0, 1.0)],
    ];
    let zeta = sym3_eigenvalues(m)
        .into_iter()
        .min_by(|x, y| (x - m[0][0]).abs().total_cmp(&(y - m[0][0]).abs()))
        .unwrap();
    (zeta - eta).abs() / TAU
}

#[test]
fn aligned_gap_matches_block_oracle() {
    let c = PhysicalConstants::<f64>::default();
    let track = build_track(&FieldGeometry::<f64>::default(), &c, 256).unwrap();
    let f = transition_frequency(&track, (track.eta(), track.zeta()))[0];
    let oracle = aligned_gap_oracle(&c, 480.0);
    assert!((f - oracle).abs() < 1e-3, "{f} vs {oracle}");
    assert!((f / 5.1e6 - 1.0).abs() < 0.02);
}

#[test]
fn aligned_gap_oracle_over_field() {
    let c = PhysicalConstants::<f64>::default();
    for b in [0.0, 100.0, 300.0, 700.0] {
        let h = hamiltonian(&[0.0, 0.0, b], &c).unwrap();
        let e = rotorspin_core::linalg::eigh(&h);
        let eta = basis_index(0, 1);
        let zeta = basis_index(0, 0);
        // Pick the eigenvalues whose vectors are dominated by the bare states.
        let pick = |k: usize| {
            (0..9)
                .max_by(|&i, &j| {
                    e.vectors.column(i).0[k].norm_sqr().total_cmp(&e.vectors.column(j).0[k].norm_sqr())
                })
                .map(|i| e.values[i])
                .unwrap()
        };
        let f: f64 = (pick(zeta) - pick(eta)).abs() / TAU;
        assert!((f - aligned_gap_oracle(&c, b)).abs() < 1e-3, "B = {b}");
    }
}

#[test]
fn decoupled_augmentation_is_unity_everywhere() {
    let c = PhysicalConstants::<f64>::default().without_transverse_hyperfine();
    let geom = FieldGeometry::<f64>::default();
    let track = build_track(&geom, &c, 512).unwrap();
    let a = augmentation_factor(&track, &[1.0, 0.0, 0.0], &c).unwrap();
    assert!((a[0] - 1.0).abs() < 1e-3);
}

#[test]
fn augmentation_and_modulation_ranges() {
    let c = PhysicalConstants::<f64>::default();
    let track = build_track(&FieldGeometry::<f64>::default(), &c, DEFAULT_TRACK_SAMPLES).unwrap();
    let a = augmentation_factor(&track, &RfAxis::NvX.resolve(&track.geometry), &c).unwrap();
    assert!((14.0..=26.0).contains(&a[0]), "{}", a[0]);
    let (lo, hi) = a.iter().fold((f64::INFINITY, 0.0f64), |(l, h), x| (l.min(*x), h.max(*x)));
    assert!(hi / lo >= 5.0);

    let f = transition_frequency(&track, (track.eta(), track.zeta()));
    let (flo, fhi) = f.iter().fold((f64::INFINITY, 0.0f64), |(l, h), x| (l.min(*x), h.max(*x)));
    let depth = (fhi - flo) / (0.5 * (fhi + flo));
    assert!((0.15..=0.25).contains(&depth), "{depth}");
}

#[test]
fn half_turn_mixes_nuclear_states() {
    let track = build_track(&FieldGeometry::<f64>::default(), &PhysicalConstants::<f64>::default(), 1025).unwrap();
    let rows = bare_projections(&track, track.eta());
    let mid = &rows[512];
    let (up, down) = (mid[basis_index(0, 1)], mid[basis_index(0, -1)]);
    assert!((up - down).abs() <= 0.2 * up.max(down), "{up} {down}");
    assert!(up + down > 0.5);
}

#[test]
fn track_vectors_are_eigenvectors() {
    let geom = FieldGeometry::<f64>::default();
    let c = PhysicalConstants::<f64>::default();
    let track = build_track(&geom, &c, 1025).unwrap();
    for j in [0, 170, 512, 900] {
        let h = hamiltonian(&static_field_nv_frame(track.phi[j], &geom), &c).unwrap();
        for label in 0..9 {
            let v = track.state(j, label);
            let hv = h.apply(&v);
            let residual = (0..9)
                .map(|k| (hv.0[k] - v.0[k] * track.energies[j][label]).norm())
                .fold(0.0, f64::max);
            assert!(residual < 1e-6 * c.d_zfs, "sample {j} label {label}");
        }
    }
    // The m_S = ±1 manifolds have narrow avoided crossings; the qubit pair
    // must follow smoothly.
    for label in [track.eta(), track.zeta()] {
        for j in 0..track.len() - 1 {
            assert!(track.state(j, label).dot(&track.state(j + 1, label)).norm_sqr() > 0.999);
        }
    }
}

#[test]
fn f32_track_agrees_with_f64() {
    let g64 = FieldGeometry::<f64>::default();
    let g32 = FieldGeometry::<f32>::default();
    let t64 = build_track(&g64, &PhysicalConstants::<f64>::default(), 512).unwrap();
    let t32 = build_track(&g32, &PhysicalConstants::<f32>::default(), 512).unwrap();
    let f64_gap = transition_frequency(&t64, (t64.eta(), t64.zeta()));
    let f32_gap = transition_frequency(&t32, (t32.eta(), t32.zeta()));
    // Energies sit on a ~10 GHz scale, so single precision resolves the
    // MHz gap only to a few kHz.
    for (a, b) in f64_gap.iter().zip(&f32_gap) {
        assert!((a - *b as f64).abs() < 5e4, "{a} {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_hermitian(bx in -800.0f64..800.0, by in -800.0f64..800.0, bz in -800.0f64..800.0) {
        let h = hamiltonian(&[bx, by, bz], &PhysicalConstants::<f64>::default()).unwrap();
        prop_assert!(h.hermiticity_defect() < 1e-6);
    }

    #[test]
    fn projections_sum_to_one(label in 0usize..9) {
        let track = build_track(&FieldGeometry::<f64>::default(), &PhysicalConstants::<f64>::default(), 65).unwrap();
        for row in bare_projections(&track, label) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
