use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rotorspin_core::dynamics::*;
use rotorspin_core::feedforward::{fm_from_track, FMProfile, GateWindow};
use rotorspin_core::geometry::{FieldGeometry, RotationConfig};
use rotorspin_core::spectral::{build_track, transition_frequency, AdiabaticTrack};
use rotorspin_core::spincore::PhysicalConstants;
use std::sync::OnceLock;

fn track() -> &'static AdiabaticTrack<f64> {
    static TRACK: OnceLock<AdiabaticTrack<f64>> = OnceLock::new();
    TRACK.get_or_init(|| build_track(&FieldGeometry::default(), &PhysicalConstants::default(), 4096).unwrap())
}

fn feedforward_model() -> ReducedModel<f64> {
    let t = track();
    let axis = [1.0, 0.0, 0.0];
    let b = calibrate_rf_gauss(t, &axis, DEFAULT_PI_TIME_S).unwrap();
    reduce(t, &fm_from_track(t, &RotationConfig::default()).unwrap(), b, &axis).unwrap()
}

fn fixed_carrier_model(offset_hz: f64) -> ReducedModel<f64> {
    let t = track();
    let axis = [1.0, 0.0, 0.0];
    let b = calibrate_rf_gauss(t, &axis, DEFAULT_PI_TIME_S).unwrap();
    let f0 = transition_frequency(t, (t.eta(), t.zeta()))[0] + offset_hz;
    let profile = FMProfile::from_period_samples(vec![f0; 2], &RotationConfig::default()).unwrap();
    reduce(t, &profile, b, &axis).unwrap()
}

#[test]
fn detuned_rabi_matches_closed_form() {
    let delta_hz = 40e3;
    let model = fixed_carrier_model(delta_hz);
    let rotor = Rotor::Stationary { phi: 0.0 };
    let omega = model.rabi(0.0);
    // The carrier sits above the line, so Δ = ω − ω_carrier is negative.
    let delta = -TAU * delta_hz;
    for d in [1e-6, 4e-6, 9.5e-6, 20e-6] {
        let u = model.gate_unitary(&rotor, &GateWindow::new(0.0, d, 0.0)).unwrap();
        let p = State2::eta().apply(&u).zeta_population();
        let w = (omega * omega + delta * delta).sqrt();
        let expected = omega * omega / (w * w) * (w * d / 2.0).sin().powi(2);
        assert!((p - expected).abs() < 1e-6, "{d}: {p} vs {expected}");
    }
}

#[test]
fn gap_phase_matches_quadrature_on_jittered_rotor() {
    let model = feedforward_model();
    let nominal = RotationConfig::default();
    let rotor = Rotor::Piecewise {
        alignments: vec![0.0, 1.0004e-3, 1.9991e-3, 3.0002e-3],
        nominal,
    };
    let (ta, tb) = (0.3e-3, 2.7e-3);
    let n = 200_000;
    let h = (tb - ta) / n as f64;
    // Composite Simpson on ω(φ(t)); kinks land on grid points only by chance,
    // so allow the O(h) error they introduce.
    let f = |t: f64| model.omega(rotor.phase(t));
    let mut sum = f(ta) + f(tb);
    for i in 1..n {
        sum += f(ta + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let quad = sum * h / 3.0;
    let exact = model.gap_phase(&rotor, ta, tb);
    assert!((quad - exact).abs() < 1e-3, "{}", quad - exact);
}

#[test]
fn nominal_rotation_with_feedforward_has_no_free_phase() {
    let model = feedforward_model();
    let rotor = Rotor::Uniform(RotationConfig::default());
    for (a, b) in [(0.0, 1e-3), (0.1e-3, 0.75e-3), (0.4e-3, 3.3e-3)] {
        assert!(model.free_phase(&rotor, a, b).abs() < 1e-6, "{a} {b}");
    }
}

#[test]
fn undriven_nine_level_state_follows_the_track() {
    // 100 µs through the half turn, where the η state mixes most.
    let t = track();
    let rot = RotationConfig::default();
    let rotor = Rotor::Uniform(rot);
    let sched = LabFrameSchedule {
        constants: t.constants,
        geometry: t.geometry,
        rotor: rotor.clone(),
        t_start: 450e-6,
        duration: 100e-6,
        drive: None,
    };
    let (_, v0) = t.state_at(rotor.phase(sched.t_start)).unwrap();
    let psi0 = v0.column(t.eta());
    let mut worst: f64 = 1.0;
    full_propagate_observed(&psi0, &sched, FULL_UNDRIVEN_MAX_DT_S, 500, |time, psi| {
        let (_, v) = t.state_at(rotor.phase(time)).unwrap();
        worst = worst.min(v.column(t.eta()).dot(psi).norm_sqr());
    })
    .unwrap();
    assert!(worst > 0.999, "{worst}");
}

#[test]
fn driven_segment_respects_step_limit() {
    let t = track();
    let profile = fm_from_track(t, &RotationConfig::default()).unwrap();
    let sched = LabFrameSchedule {
        constants: t.constants,
        geometry: t.geometry,
        rotor: Rotor::Stationary { phi: 0.0 },
        t_start: 0.0,
        duration: 2e-6,
        drive: Some(LabDrive {
            rf_gauss: 10.0,
            axis: [1.0, 0.0, 0.0],
            profile: profile.clone(),
            gates: vec![GateWindow::new(0.0, 2e-6, 0.0)],
        }),
    };
    let limit = 1.0 / (STEPS_PER_CYCLE * profile.max_frequency());
    assert!((sched.max_dt() - limit).abs() < 1e-18);
    let psi = t.state(0, t.eta());
    assert!(full_propagate(&psi, &sched, 2.0 * limit).is_err());
    let out = full_propagate(&psi, &sched, limit).unwrap();
    assert!((out.norm() - 1.0).abs() < 1e-10);
}

#[test]
fn f32_reduced_pi_pulse() {
    let t = build_track(&FieldGeometry::<f32>::default(), &PhysicalConstants::<f32>::default(), 512).unwrap();
    let axis = [1.0f32, 0.0, 0.0];
    let b = calibrate_rf_gauss(&t, &axis, 7e-6).unwrap();
    let f0 = transition_frequency(&t, (t.eta(), t.zeta()))[0];
    let profile = FMProfile::from_period_samples(vec![f0; 2], &RotationConfig::default()).unwrap();
    let model = reduce(&t, &profile, b, &axis).unwrap();
    let u = model
        .gate_unitary(&Rotor::Stationary { phi: 0.0 }, &GateWindow::new(0.0, 7e-6, 0.0))
        .unwrap();
    assert!(State2::eta().apply(&u).zeta_population() > 0.999);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gate_unitaries_are_unitary(start in 0.0f64..2e-3, dur in 0.0f64..30e-6, phase in -PI..PI, scale in 0.0f64..2.0) {
        let model = feedforward_model();
        let rotor = Rotor::Uniform(RotationConfig::default());
        let gate = GateWindow { start, duration: dur, phase_offset: phase, amplitude_scale: scale };
        let u = model.gate_unitary(&rotor, &gate).unwrap();
        let defect = (u.adjoint() * u - rotorspin_core::linalg::Matrix2::identity()).max_abs();
        prop_assert!(defect < 1e-10);
    }

    #[test]
    fn free_phase_is_additive(a in 0.0f64..1e-3, b in 0.0f64..1e-3, c in 0.0f64..1e-3, jitter in -1e-6f64..1e-6) {
        let mut t = [a, a + b, a + b + c];
        t.sort_by(f64::total_cmp);
        let model = fixed_carrier_model(0.0);
        let rotor = Rotor::Piecewise {
            alignments: vec![0.0, 1e-3 + jitter, 2e-3 - jitter, 3e-3],
            nominal: RotationConfig::default(),
        };
        let whole = model.free_phase(&rotor, t[0], t[2]);
        let parts = model.free_phase(&rotor, t[0], t[1]) + model.free_phase(&rotor, t[1], t[2]);
        prop_assert!((whole - parts).abs() < 1e-6 * whole.abs().max(1.0));
    }
}

#[test]
fn full_rotation_maps_populations_back() {
    let t = track();
    let mut amps = [rotorspin_core::Cplx::new(0.0, 0.0); 9];
    amps[t.eta()] = rotorspin_core::Cplx::new(0.6, 0.0);
    amps[t.zeta()] = rotorspin_core::Cplx::new(0.0, 0.8);
    let r = adiabatic_following(t, &RotationConfig::default(), &amps, 100e-6, 5e-6).unwrap();
    assert!(r.min_overlap > 0.999, "{}", r.min_overlap);
    assert!(r.population_error < 1e-3, "{}", r.population_error);
    assert_eq!(r.times.len(), r.overlaps.len());
    assert!(adiabatic_following(t, &RotationConfig::default(), &amps, 200e-6, 5e-6).is_err());
}
