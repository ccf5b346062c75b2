//! Time evolution: an exponential stepper for the full nine-level system
//! in the lab frame, and the reduced η/ζ model in the frame of the
//! feedforward carrier.

use crate::error::{Error, Result};
use crate::feedforward::{FMProfile, GateWindow};
use crate::geometry::{static_field_nv_frame, FieldGeometry, RotationConfig, Vec3};
use crate::interp::{PeriodicCurve, UniformSeries};
use crate::linalg::{eigh, Matrix2, Vector};
use crate::num::{c, cis, cr, Cplx, Real};
use crate::spectral::{
    build_track, coupling_elements, rf_operator, AdiabaticTrack, SpinHamiltonian,
};
use crate::spincore::{Operator9, PhysicalConstants, State9};

/// Longest segment the nine-level stepper accepts.
pub const FULL_SEGMENT_LIMIT_S: f64 = 100e-6;
/// Longest segment [`validate_reduction`] accepts.
pub const VALIDATION_SEGMENT_LIMIT_S: f64 = 20e-6;
/// Largest undriven nine-level step.
pub const FULL_UNDRIVEN_MAX_DT_S: f64 = 10e-9;
/// Minimum steps per cycle of the fastest resolved frequency.
pub const STEPS_PER_CYCLE: f64 = 50.0;
/// Step density chosen by [`ReducedModel::schedule_auto`].
pub const AUTO_STEPS_PER_CYCLE: f64 = 1000.0;
pub const DEFAULT_PI_TIME_S: f64 = 7e-6;

/// How the rotation phase advances with time.
#[derive(Clone, Debug, PartialEq)]
pub enum Rotor<T> {
    /// Fixed phase (no rotation).
    Stationary { phi: T },
    Uniform(RotationConfig<T>),
    /// Uniform between consecutive alignment times: `phi = 2πk` at
    /// `alignments[k]`, extended with the nominal period on either side.
    Piecewise {
        alignments: Vec<T>,
        nominal: RotationConfig<T>,
    },
}

impl<T: Real> Rotor<T> {
    /// Unwrapped rotation phase.
    pub fn phase(&self, t: T) -> T {
        match self {
            Rotor::Stationary { phi } => *phi,
            Rotor::Uniform(rot) => crate::geometry::rotation_phase(t, rot),
            Rotor::Piecewise { alignments, nominal } => {
                let two_pi = T::two_pi();
                let first = alignments[0];
                if t < first {
                    return two_pi * (t - first) / nominal.period_s;
                }
                let k = alignments.partition_point(|&a| a <= t) - 1;
                if k + 1 >= alignments.len() {
                    let last = alignments[k];
                    return two_pi * (T::lit(k as f64) + (t - last) / nominal.period_s);
                }
                let (a, b) = (alignments[k], alignments[k + 1]);
                two_pi * (T::lit(k as f64) + (t - a) / (b - a))
            }
        }
    }

    /// Times strictly inside `(ta, tb)` where the phase rate changes.
    fn kinks(&self, ta: T, tb: T) -> Vec<T> {
        match self {
            Rotor::Piecewise { alignments, .. } => alignments
                .iter()
                .copied()
                .filter(|&a| a > ta && a < tb)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Time of the first alignment at or after `t`.
    pub fn next_alignment(&self, t: T) -> T {
        match self {
            Rotor::Stationary { .. } => t,
            Rotor::Uniform(rot) => {
                let k = ((t - rot.phase_origin_s) / rot.period_s).ceil();
                rot.phase_origin_s + k * rot.period_s
            }
            Rotor::Piecewise { alignments, nominal } => {
                if let Some(&a) = alignments.iter().find(|&&a| a >= t) {
                    return a;
                }
                let last = *alignments.last().expect("non-empty alignments");
                let k = ((t - last) / nominal.period_s).ceil();
                last + k * nominal.period_s
            }
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, Rotor::Stationary { .. })
    }
}

/// Coefficients on the tracked η and ζ states, in the carrier frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State2<T> {
    pub eta: Cplx<T>,
    pub zeta: Cplx<T>,
}

impl<T: Real> State2<T> {
    pub fn eta() -> Self {
        Self {
            eta: cr(T::one()),
            zeta: cr(T::zero()),
        }
    }

    pub fn norm_sqr(&self) -> T {
        self.eta.norm_sqr() + self.zeta.norm_sqr()
    }

    pub fn zeta_population(&self) -> T {
        self.zeta.norm_sqr()
    }

    pub fn apply(&self, u: &Matrix2<T>) -> Self {
        let v = u.apply(&Vector([self.eta, self.zeta]));
        Self {
            eta: v.0[0],
            zeta: v.0[1],
        }
    }
}

/// The η/ζ pair reduced from a track, driven by a feedforward carrier.
#[derive(Clone, Debug)]
pub struct ReducedModel<T> {
    /// ω(φ) on the track grid, linearly interpolated (rad/s).
    gap: UniformSeries<T>,
    gap_cum: UniformSeries<T>,
    /// `|<ζ|R|η>|` (rad/s/G).
    coupling: PeriodicCurve<T>,
    pub rf_gauss: T,
    pub profile: FMProfile<T>,
}

/// Reduces a track to the η/ζ pair driven at `rf_gauss` along `axis`, with
/// the carrier following `profile`. Leakage out of the pair is neglected.
pub fn reduce<T: Real>(
    track: &AdiabaticTrack<T>,
    profile: &FMProfile<T>,
    rf_gauss: T,
    axis: &Vec3<T>,
) -> Result<ReducedModel<T>> {
    if !(rf_gauss >= T::zero() && rf_gauss.is_finite()) {
        return Err(Error::invalid("dynamics", "rf_gauss", "must be finite and >= 0"));
    }
    let (eta, zeta) = (track.eta(), track.zeta());
    let cells = track.len() - 1;
    let gap = UniformSeries {
        t0: T::zero(),
        step: T::two_pi() / T::lit(cells as f64),
        values: track.energies.iter().map(|e| e[zeta] - e[eta]).collect(),
    };
    let gap_cum = gap.cumulative_integral();
    let coupling = PeriodicCurve::new(
        coupling_elements(track, axis, &track.constants)?
            .into_iter()
            .map(|m| m.norm())
            .collect(),
    );
    Ok(ReducedModel {
        gap,
        gap_cum,
        coupling,
        rf_gauss,
        profile: profile.clone(),
    })
}

/// Drive amplitude giving a resonant π-pulse of `t_pi` at alignment.
pub fn calibrate_rf_gauss<T: Real>(
    track: &AdiabaticTrack<T>,
    axis: &Vec3<T>,
    t_pi: T,
) -> Result<T> {
    if !(t_pi > T::zero() && t_pi.is_finite()) {
        return Err(Error::invalid("dynamics", "target_pi_time_s", "must be positive"));
    }
    let m0 = coupling_elements(track, axis, &track.constants)?[0].norm();
    Ok(T::PI() / (t_pi * m0))
}

impl<T: Real> ReducedModel<T> {
    fn wrap(&self, phi: T) -> (T, T) {
        let two_pi = T::two_pi();
        let k = (phi / two_pi).floor();
        (k, phi - k * two_pi)
    }

    /// η ↔ ζ splitting at rotation phase `phi` (rad/s).
    pub fn omega(&self, phi: T) -> T {
        let (_, local) = self.wrap(phi);
        self.gap.eval(local)
    }

    /// `∫_0^phi ω dφ'`, periodically extended.
    fn gap_integral(&self, phi: T) -> T {
        let (k, local) = self.wrap(phi);
        k * *self.gap_cum.values.last().expect("non-empty")
            + self.gap.integral_to(&self.gap_cum, local)
    }

    /// Post-RWA Rabi frequency at unit gate amplitude (rad/s).
    pub fn rabi(&self, phi: T) -> T {
        self.rf_gauss * self.coupling.eval(phi)
    }

    pub fn detuning(&self, rotor: &Rotor<T>, t: T) -> T {
        self.omega(rotor.phase(t)) - T::two_pi() * self.profile.frequency_at(t)
    }

    /// `∫ ω(φ(t)) dt` over `[ta, tb]`.
    pub fn gap_phase(&self, rotor: &Rotor<T>, ta: T, tb: T) -> T {
        if let Rotor::Stationary { phi } = rotor {
            return self.omega(*phi) * (tb - ta);
        }
        let mut edges = vec![ta];
        edges.extend(rotor.kinks(ta, tb));
        edges.push(tb);
        let mut total = T::zero();
        for w in edges.windows(2) {
            let (pa, pb) = (rotor.phase(w[0]), rotor.phase(w[1]));
            if w[1] > w[0] {
                let rate = (pb - pa) / (w[1] - w[0]);
                total += (self.gap_integral(pb) - self.gap_integral(pa)) / rate;
            }
        }
        total
    }

    /// Relative phase `∫ Δ dt` acquired without drive over `[ta, tb]`.
    pub fn free_phase(&self, rotor: &Rotor<T>, ta: T, tb: T) -> T {
        self.gap_phase(rotor, ta, tb) - (self.profile.phase_at(tb) - self.profile.phase_at(ta))
    }

    /// Free evolution of the pair over `[ta, tb]`.
    pub fn free_unitary(&self, rotor: &Rotor<T>, ta: T, tb: T) -> Matrix2<T> {
        let mut u = Matrix2::zeros();
        u.0[0][0] = cr(T::one());
        u.0[1][1] = cis(-self.free_phase(rotor, ta, tb));
        u
    }

    /// Samples the drive over one gate on a grid with `steps` steps.
    pub fn schedule(&self, rotor: &Rotor<T>, gate: &GateWindow<T>, steps: usize) -> TwoLevelSchedule<T> {
        let steps = steps.max(1);
        let dt = gate.duration / T::lit(steps as f64);
        let mut s = TwoLevelSchedule {
            t0: gate.start,
            dt,
            omega: Vec::with_capacity(steps + 1),
            rabi: Vec::with_capacity(steps + 1),
            drive_phase: Vec::with_capacity(steps + 1),
            detuning: Vec::with_capacity(steps + 1),
            gate_phase: gate.phase_offset,
        };
        for i in 0..=steps {
            let t = gate.start + dt * T::lit(i as f64);
            let phi = rotor.phase(t);
            let omega = self.omega(phi);
            s.omega.push(omega);
            s.rabi.push(gate.amplitude_scale * self.rabi(phi));
            s.drive_phase.push(self.profile.phase_at(t));
            s.detuning.push(omega - T::two_pi() * self.profile.frequency_at(t));
        }
        s
    }

    /// A schedule for `gate` fine enough for [`two_level_propagate`].
    pub fn schedule_auto(&self, rotor: &Rotor<T>, gate: &GateWindow<T>) -> TwoLevelSchedule<T> {
        let probe = self.schedule(rotor, gate, 16);
        let fastest = probe.fastest_rate();
        let mut steps = if fastest > T::zero() {
            let per_cycle = T::two_pi() / (T::lit(AUTO_STEPS_PER_CYCLE) * fastest);
            (gate.duration / per_cycle).ceil().to_usize().unwrap_or(1)
        } else {
            1
        }
        .max(8);
        loop {
            let s = self.schedule(rotor, gate, steps);
            if s.check_step().is_ok() {
                return s;
            }
            steps *= 2;
        }
    }

    /// Propagator of the pair over a gate.
    pub fn gate_unitary(&self, rotor: &Rotor<T>, gate: &GateWindow<T>) -> Result<Matrix2<T>> {
        if gate.duration == T::zero() {
            return Ok(Matrix2::identity());
        }
        two_level_unitary(&self.schedule_auto(rotor, gate))
    }
}

/// Drive parameters of the reduced model sampled on a uniform grid.
#[derive(Clone, Debug)]
pub struct TwoLevelSchedule<T> {
    pub t0: T,
    pub dt: T,
    /// ω (rad/s).
    pub omega: Vec<T>,
    /// Post-RWA Rabi frequency Ω (rad/s).
    pub rabi: Vec<T>,
    /// Carrier phase (rad).
    pub drive_phase: Vec<T>,
    /// Δ = ω − carrier frequency (rad/s).
    pub detuning: Vec<T>,
    /// Phase of the gate relative to the carrier.
    pub gate_phase: T,
}

impl<T: Real> TwoLevelSchedule<T> {
    pub fn steps(&self) -> usize {
        self.omega.len().saturating_sub(1)
    }

    pub fn end(&self) -> T {
        self.t0 + self.dt * T::lit(self.steps() as f64)
    }

    fn fastest_rate(&self) -> T {
        self.rabi
            .iter()
            .zip(self.detuning.iter())
            .map(|(r, d)| r.abs().max(d.abs()))
            .fold(T::zero(), T::max)
    }

    /// Requires at least [`STEPS_PER_CYCLE`] steps per cycle of `max(Ω, |Δ|)`.
    pub fn check_step(&self) -> Result<()> {
        let fastest = self.fastest_rate();
        if fastest == T::zero() {
            return Ok(());
        }
        let max_dt = T::two_pi() / (T::lit(STEPS_PER_CYCLE) * fastest);
        if self.dt > max_dt {
            return Err(Error::StepTooLarge {
                module: "dynamics",
                dt_s: self.dt.as_f64(),
                max_dt_s: max_dt.as_f64(),
            });
        }
        Ok(())
    }
}

/// `exp(-i H t)` for `H = [[0, w*], [w, Δ]]`, `w = (Ω/2) e^{iφ}`.
fn step_unitary<T: Real>(rabi: T, detuning: T, phase: T, t: T) -> Matrix2<T> {
    let half = T::lit(0.5);
    let w = cis(phase) * (rabi * half);
    let d = detuning * half;
    let lambda = (d * d + w.norm_sqr()).sqrt();
    let (s, co) = (lambda * t).sin_cos();
    let sinc = if lambda > T::zero() { s / lambda } else { t };
    let global = cis(-d * t);
    let minus_i = c(T::zero(), -T::one());
    let mut u = Matrix2::zeros();
    u.0[0][0] = global * (cr(co) - minus_i * cr(d * sinc));
    u.0[1][1] = global * (cr(co) + minus_i * cr(d * sinc));
    u.0[0][1] = global * minus_i * w.conj() * sinc;
    u.0[1][0] = global * minus_i * w * sinc;
    u
}

/// Product of midpoint exponentials over the schedule.
pub fn two_level_unitary<T: Real>(schedule: &TwoLevelSchedule<T>) -> Result<Matrix2<T>> {
    schedule.check_step()?;
    let half = T::lit(0.5);
    let mut u = Matrix2::identity();
    for i in 0..schedule.steps() {
        let rabi = (schedule.rabi[i] + schedule.rabi[i + 1]) * half;
        let det = (schedule.detuning[i] + schedule.detuning[i + 1]) * half;
        u = step_unitary(rabi, det, schedule.gate_phase, schedule.dt) * u;
    }
    Ok(u)
}

/// Evolves the pair through the schedule in the rotating-wave approximation.
pub fn two_level_propagate<T: Real>(state: &State2<T>, schedule: &TwoLevelSchedule<T>) -> Result<State2<T>> {
    Ok(state.apply(&two_level_unitary(schedule)?))
}

/// rf drive for the nine-level stepper: `B_rf · a · sin(φ_ff(t) + offset)`
/// inside each gate.
#[derive(Clone, Debug)]
pub struct LabDrive<T> {
    pub rf_gauss: T,
    pub axis: Vec3<T>,
    pub profile: FMProfile<T>,
    pub gates: Vec<GateWindow<T>>,
}

#[derive(Clone, Debug)]
pub struct LabFrameSchedule<T> {
    pub constants: PhysicalConstants<T>,
    pub geometry: FieldGeometry<T>,
    pub rotor: Rotor<T>,
    pub t_start: T,
    pub duration: T,
    pub drive: Option<LabDrive<T>>,
}

impl<T: Real> LabFrameSchedule<T> {
    /// Largest accepted step: [`STEPS_PER_CYCLE`] per cycle of the fastest
    /// carrier when driven, [`FULL_UNDRIVEN_MAX_DT_S`] otherwise.
    pub fn max_dt(&self) -> T {
        match &self.drive {
            Some(d) if !d.gates.is_empty() && d.rf_gauss > T::zero() => {
                T::one() / (T::lit(STEPS_PER_CYCLE) * d.profile.max_frequency())
            }
            _ => T::lit(FULL_UNDRIVEN_MAX_DT_S),
        }
    }
}

struct LabStepper<T> {
    h0: SpinHamiltonian<T>,
    rf: Option<(Operator9<T>, LabDrive<T>)>,
    cached: Option<(Operator9<T>, Operator9<T>)>,
}

impl<T: Real> LabStepper<T> {
    fn new(schedule: &LabFrameSchedule<T>) -> Result<Self> {
        let rf = match &schedule.drive {
            Some(d) => {
                crate::feedforward::check_gates(&d.gates)?;
                Some((rf_operator(&d.axis, &schedule.constants)?, d.clone()))
            }
            None => None,
        };
        Ok(Self {
            h0: SpinHamiltonian::new(&schedule.constants),
            rf,
            cached: None,
        })
    }

    fn hamiltonian(&self, schedule: &LabFrameSchedule<T>, t: T) -> Operator9<T> {
        let phi = schedule.rotor.phase(t);
        let mut h = self.h0.at(&static_field_nv_frame(phi, &schedule.geometry));
        if let Some((r, d)) = &self.rf {
            if let Some(g) = d.gates.iter().find(|g| g.contains(t)) {
                let s = g.amplitude_scale * (d.profile.phase_at(t) + g.phase_offset).sin();
                h = h + r.scale(d.rf_gauss * s);
            }
        }
        h
    }

    fn step(&mut self, schedule: &LabFrameSchedule<T>, psi: &State9<T>, t: T, dt: T) -> State9<T> {
        let h = self.hamiltonian(schedule, t + dt * T::lit(0.5));
        if let Some((hc, u)) = &self.cached {
            if *hc == h {
                return u.apply(psi);
            }
        }
        let u = eigh(&h).propagator(dt);
        let out = u.apply(psi);
        self.cached = Some((h, u));
        out
    }
}

/// Nine-level evolution with midpoint exponentials `exp(-i H(t + dt/2) dt)`.
pub fn full_propagate<T: Real>(state: &State9<T>, schedule: &LabFrameSchedule<T>, dt: T) -> Result<State9<T>> {
    full_propagate_observed(state, schedule, dt, 0, |_, _| {})
}

/// As [`full_propagate`], calling `observe(t, psi)` at the start and after
/// every `every` steps (never if `every == 0`).
pub fn full_propagate_observed<T: Real>(
    state: &State9<T>,
    schedule: &LabFrameSchedule<T>,
    dt: T,
    every: usize,
    mut observe: impl FnMut(T, &State9<T>),
) -> Result<State9<T>> {
    if schedule.duration > T::lit(FULL_SEGMENT_LIMIT_S) {
        return Err(Error::FullPropagatorCost {
            duration_s: schedule.duration.as_f64(),
            limit_s: FULL_SEGMENT_LIMIT_S,
        });
    }
    let max_dt = schedule.max_dt();
    if !(dt > T::zero()) || dt > max_dt * T::lit(1.0 + 1e-9) {
        return Err(Error::StepTooLarge {
            module: "dynamics",
            dt_s: dt.as_f64(),
            max_dt_s: max_dt.as_f64(),
        });
    }
    let steps = (schedule.duration / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let dt = if steps > 0 { schedule.duration / T::lit(steps as f64) } else { dt };
    let mut stepper = LabStepper::new(schedule)?;
    let mut psi = *state;
    if every > 0 {
        observe(schedule.t_start, &psi);
    }
    for i in 0..steps {
        let t = schedule.t_start + dt * T::lit(i as f64);
        psi = stepper.step(schedule, &psi, t, dt);
        if every > 0 && (i + 1) % every == 0 {
            observe(t + dt, &psi);
        }
    }
    Ok(psi)
}

/// A short segment run through both propagators.
#[derive(Clone, Debug)]
pub struct SegmentSpec<T> {
    pub constants: PhysicalConstants<T>,
    pub geometry: FieldGeometry<T>,
    pub rotor: Rotor<T>,
    pub t_start: T,
    pub duration: T,
    /// Drive amplitude (G); zero disables the drive.
    pub rf_gauss: T,
    pub axis: Vec3<T>,
    /// Carrier offset from the tracked transition (Hz).
    pub detuning_hz: T,
    pub track_samples: usize,
    /// Number of comparison points.
    pub checkpoints: usize,
    /// Full-propagator steps between checkpoints.
    pub substeps: usize,
}

impl<T: Real> SegmentSpec<T> {
    /// Aligned, stationary, resonant drive at `rf_gauss` for `duration`.
    pub fn aligned(rf_gauss: T, duration: T) -> Self {
        Self {
            constants: PhysicalConstants::default(),
            geometry: FieldGeometry::default(),
            rotor: Rotor::Stationary { phi: T::zero() },
            t_start: T::zero(),
            duration,
            rf_gauss,
            axis: [T::one(), T::zero(), T::zero()],
            detuning_hz: T::zero(),
            track_samples: 1024,
            checkpoints: 70,
            substeps: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReductionReport<T> {
    pub max_population_deviation: T,
    pub times: Vec<T>,
    pub full: Vec<T>,
    pub reduced: Vec<T>,
}

/// Runs the nine-level and reduced propagators on the same drive from η and
/// compares the ζ population at each checkpoint.
pub fn validate_reduction<T: Real>(spec: &SegmentSpec<T>) -> Result<ReductionReport<T>> {
    if !(spec.duration > T::zero()) || spec.duration > T::lit(VALIDATION_SEGMENT_LIMIT_S) {
        return Err(Error::invalid(
            "dynamics",
            "duration",
            format!("validation segments must lie in (0, {VALIDATION_SEGMENT_LIMIT_S}] s"),
        ));
    }
    let checkpoints = spec.checkpoints.max(1);
    let track = build_track(&spec.geometry, &spec.constants, spec.track_samples)?;
    let nominal = match &spec.rotor {
        Rotor::Uniform(rot) | Rotor::Piecewise { nominal: rot, .. } => *rot,
        Rotor::Stationary { .. } => RotationConfig::default(),
    };
    let profile = match &spec.rotor {
        Rotor::Stationary { phi } => {
            let (e, _) = track.state_at(*phi)?;
            let f = (e[track.zeta()] - e[track.eta()]) / T::two_pi() + spec.detuning_hz;
            FMProfile::from_period_samples(vec![f; 2], &nominal)?
        }
        _ => {
            let f: Vec<T> = crate::spectral::transition_frequency(&track, (track.eta(), track.zeta()))
                .into_iter()
                .map(|x| x + spec.detuning_hz)
                .collect();
            FMProfile::from_period_samples(f, &nominal)?
        }
    };
    let driven = spec.rf_gauss > T::zero();
    let model = reduce(&track, &profile, spec.rf_gauss, &spec.axis)?;

    let seg = spec.duration / T::lit(checkpoints as f64);
    let mut times = vec![spec.t_start];
    let mut reduced = vec![T::zero()];
    let mut state = State2::eta();
    for k in 0..checkpoints {
        let ta = spec.t_start + seg * T::lit(k as f64);
        let u = if driven {
            model.gate_unitary(&spec.rotor, &GateWindow::new(ta, seg, T::zero()))?
        } else {
            model.free_unitary(&spec.rotor, ta, ta + seg)
        };
        state = state.apply(&u);
        times.push(ta + seg);
        reduced.push(state.zeta_population());
    }

    let lab = LabFrameSchedule {
        constants: spec.constants,
        geometry: spec.geometry,
        rotor: spec.rotor.clone(),
        t_start: spec.t_start,
        duration: spec.duration,
        drive: driven.then(|| LabDrive {
            rf_gauss: spec.rf_gauss,
            axis: spec.axis,
            profile: profile.clone(),
            gates: vec![GateWindow::new(spec.t_start, spec.duration + seg, T::zero())],
        }),
    };
    let max_dt = lab.max_dt();
    let substeps = if spec.substeps > 0 {
        spec.substeps
    } else {
        (seg / max_dt).ceil().to_usize().unwrap_or(1).max(1)
    };
    let dt = seg / T::lit(substeps as f64);
    let (_, v0) = track.state_at(spec.rotor.phase(spec.t_start))?;
    let psi0 = v0.column(track.eta());
    let zeta = track.zeta();
    let mut full = Vec::with_capacity(checkpoints + 1);
    let mut failure = None;
    full_propagate_observed(&psi0, &lab, dt, substeps, |t, psi| {
        match track.state_at(spec.rotor.phase(t)) {
            Ok((_, v)) => full.push(v.column(zeta).dot(psi).norm_sqr()),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let max_population_deviation = full
        .iter()
        .zip(reduced.iter())
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max);
    Ok(ReductionReport {
        max_population_deviation,
        times,
        full,
        reduced,
    })
}

/// Undriven nine-level evolution over one nominal rotation, compared with
/// the adiabatic track.
#[derive(Clone, Debug)]
pub struct AdiabaticReport<T> {
    pub times: Vec<T>,
    /// Population left in the initially occupied tracked states.
    pub overlaps: Vec<T>,
    pub min_overlap: T,
    /// Largest change of any tracked-state population after one period.
    pub population_error: T,
}

/// Starts in `Σ_k amplitudes[k] |v_k(0)>` (track labels) at an alignment,
/// propagates one period in segments of at most `segment_s` and samples
/// the tracked-state populations every `observe_every_s`.
pub fn adiabatic_following<T: Real>(
    track: &AdiabaticTrack<T>,
    rot: &RotationConfig<T>,
    amplitudes: &[Cplx<T>; 9],
    segment_s: T,
    observe_every_s: T,
) -> Result<AdiabaticReport<T>> {
    rot.validate()?;
    if !(segment_s > T::zero() && segment_s <= T::lit(FULL_SEGMENT_LIMIT_S)) {
        return Err(Error::invalid(
            "dynamics",
            "segment_s",
            format!("must lie in (0, {FULL_SEGMENT_LIMIT_S}] s"),
        ));
    }
    let norm: T = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    if !(norm > T::zero()) {
        return Err(Error::invalid("dynamics", "amplitudes", "need a non-zero state"));
    }
    let p0: Vec<T> = amplitudes.iter().map(|a| a.norm_sqr() / norm).collect();
    let occupied: Vec<usize> = (0..9).filter(|&k| p0[k] > T::zero()).collect();
    let rotor = Rotor::Uniform(*rot);
    let t0 = rot.phase_origin_s;
    let v0 = &track.vectors[0];
    let mut psi = State9::<T>::zeros();
    for (k, a) in amplitudes.iter().enumerate() {
        let col = v0.column(k);
        for i in 0..9 {
            psi.0[i] = psi.0[i] + col.0[i] * *a / norm.sqrt();
        }
    }
    let dt = T::lit(FULL_UNDRIVEN_MAX_DT_S);
    let every = (observe_every_s / dt).round().to_usize().unwrap_or(1).max(1);
    let segments = (rot.period_s / segment_s).ceil().to_usize().unwrap_or(1).max(1);
    let seg = rot.period_s / T::lit(segments as f64);
    let mut times = Vec::new();
    let mut overlaps = Vec::new();
    let mut failure = None;
    let mut measure = |t: T, psi: &State9<T>| match track.state_at(rotor.phase(t)) {
        Ok((_, v)) => {
            times.push(t);
            overlaps.push(occupied.iter().map(|&k| v.column(k).dot(psi).norm_sqr()).sum());
        }
        Err(e) => failure = Some(e),
    };
    for s in 0..segments {
        let sched = LabFrameSchedule {
            constants: track.constants,
            geometry: track.geometry,
            rotor: rotor.clone(),
            t_start: t0 + seg * T::lit(s as f64),
            duration: seg,
            drive: None,
        };
        let first = s == 0;
        psi = full_propagate_observed(&psi, &sched, dt, every, |t, p| {
            if first || t > sched.t_start {
                measure(t, p);
            }
        })?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let v_end = &track.vectors[track.len() - 1];
    let population_error = (0..9)
        .map(|k| (v_end.column(k).dot(&psi).norm_sqr() - p0[k]).abs())
        .fold(T::zero(), T::max);
    let min_overlap = overlaps.iter().copied().fold(T::one(), T::min);
    Ok(AdiabaticReport {
        times,
        overlaps,
        min_overlap,
        population_error,
    })
}
