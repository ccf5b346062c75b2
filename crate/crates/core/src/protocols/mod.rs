//! Pulse sequences on the rotating spin, averaged over rotation jitter.
//!
//! Time zero is the nominal alignment that triggers a sequence. Pulses are
//! placed on the nominal clock; the spin sees the jittered rotation.

mod fit;
mod noise;

pub use fit::{fit_decay, fit_fringe, fit_sinusoid, DecayFit, Estimate, FringeFit, SinusoidFit};
pub use noise::{
    readout_window, JitterModel, ReadoutModel, DEFAULT_INDEPENDENT_SIGMA_S, DEFAULT_JITTER_SIGMA_S,
    DEFAULT_WINDOW_FWHM_S, ROTATING_CONTRAST, STATIONARY_CONTRAST,
};

use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dynamics::{calibrate_rf_gauss, reduce, ReducedModel, Rotor, DEFAULT_PI_TIME_S};
use crate::error::{Error, Result};
use crate::feedforward::{fm_from_track, FMProfile, GateWindow};
use crate::geometry::{FieldGeometry, RotationConfig};
use crate::linalg::Matrix2;
use crate::num::cis;
use crate::spectral::{build_track, transition_frequency, AdiabaticTrack, RfAxis, DEFAULT_TRACK_SAMPLES};
use crate::spincore::PhysicalConstants;

/// Phenomenological decay of the η/ζ coherence, applied before the last pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Envelopes {
    pub t2star_s: Option<f64>,
    pub t2_s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub constants: PhysicalConstants<f64>,
    pub geometry: FieldGeometry<f64>,
    pub rotation: RotationConfig<f64>,
    pub rf_axis: RfAxis<f64>,
    /// Drive amplitude (G); `None` calibrates it from `target_pi_time_s`.
    pub rf_gauss: Option<f64>,
    pub target_pi_time_s: f64,
    pub track_samples: usize,
    /// Hold the diamond at alignment instead of rotating it.
    pub stationary: bool,
    pub jitter: JitterModel,
    pub readout: ReadoutModel,
    pub envelopes: Envelopes,
    /// Detected photons per shot for optical shot noise; 0 disables it.
    pub photons_per_shot: f64,
    pub shots: usize,
    pub seed: u64,
    /// Stretch exponent for decay fits; `None` fits it.
    pub decay_exponent: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            geometry: FieldGeometry::default(),
            rotation: RotationConfig::default(),
            rf_axis: RfAxis::default(),
            rf_gauss: None,
            target_pi_time_s: DEFAULT_PI_TIME_S,
            track_samples: DEFAULT_TRACK_SAMPLES,
            stationary: false,
            jitter: JitterModel::default(),
            readout: ReadoutModel::rotating(),
            envelopes: Envelopes::default(),
            photons_per_shot: 0.0,
            shots: 500,
            seed: 0,
            decay_exponent: Some(1.0),
        }
    }
}

impl ExperimentConfig {
    /// Held at alignment: no jitter, stationary contrast.
    pub fn stationary() -> Self {
        Self {
            stationary: true,
            jitter: JitterModel::none(),
            readout: ReadoutModel::stationary(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.rotation.validate()?;
        self.jitter.validate()?;
        self.readout.validate()?;
        if let Some(b) = self.rf_gauss {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid("protocols", "rf_gauss", "must be positive and finite"));
            }
        }
        if !(self.target_pi_time_s > 0.0 && self.target_pi_time_s.is_finite()) {
            return Err(Error::invalid("protocols", "target_pi_time_s", "must be positive and finite"));
        }
        if self.shots == 0 {
            return Err(Error::invalid("protocols", "shots", "need at least one shot"));
        }
        if !(self.photons_per_shot >= 0.0 && self.photons_per_shot.is_finite()) {
            return Err(Error::invalid("protocols", "photons_per_shot", "must be finite and >= 0"));
        }
        for (name, v) in [
            ("intrinsic_t2star_s", self.envelopes.t2star_s),
            ("intrinsic_t2_s", self.envelopes.t2_s),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::invalid("protocols", name, "must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    Rabi,
    Ramsey,
    SpinEcho,
    MultiPeriodEcho,
    SpinLock,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Rabi => "rabi",
            Protocol::Ramsey => "ramsey",
            Protocol::SpinEcho => "echo",
            Protocol::MultiPeriodEcho => "echo-multiperiod",
            Protocol::SpinLock => "spinlock",
        }
    }
}

/// Which intrinsic envelope a sequence is subject to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dephasing {
    None,
    Free(f64),
    Refocused(f64),
}

/// Pulses on the nominal clock; with a phase sweep, the last pulse is swept.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub pulses: Vec<GateWindow<f64>>,
    pub readout_s: f64,
    pub dephasing: Dephasing,
}

/// Phase sweep of a final pulse at one value of the independent variable.
#[derive(Clone, Debug)]
pub struct Fringe {
    pub phases: Vec<f64>,
    pub signal: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fit: FringeFit,
}

#[derive(Clone, Debug)]
pub struct ProtocolResult {
    pub protocol: Protocol,
    /// Name of the independent variable (`duration_s`, `tau_s`, ...).
    pub x_name: &'static str,
    pub x: Vec<f64>,
    /// Rabi: mean signal. Fringe protocols: fitted fringe amplitude.
    pub signal: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fringes: Vec<Fringe>,
    pub rabi_fit: Option<SinusoidFit>,
    pub decay_fit: Option<DecayFit>,
    /// Signal of a fully bright spin.
    pub bright_signal: f64,
    pub shots: usize,
    pub seed: u64,
}

impl ProtocolResult {
    /// Fringe amplitude as a fraction of the full contrast.
    pub fn visibility(&self, i: usize) -> f64 {
        2.0 * self.signal[i] / self.bright_signal
    }
}

/// Mean and standard error per point, with per-shot values kept for
/// propagating shot-to-shot correlations.
#[derive(Clone, Debug)]
pub struct ShotAverage {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub per_shot: Vec<Vec<f64>>,
}

/// A configured experiment: track, feedforward and reduced model built once.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub track: AdiabaticTrack<f64>,
    pub profile: FMProfile<f64>,
    pub model: ReducedModel<f64>,
    pub rf_gauss: f64,
}

const FIXED_POINT_ITERS: usize = 30;
/// Quadrature step for pulse areas.
const AREA_STEP_S: f64 = 0.1e-6;
/// Pulses that would run longer than this (no drive) are reported as infinite.
const MAX_PULSE_S: f64 = 1.0;

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let track = build_track(&config.geometry, &config.constants, config.track_samples)?;
        let axis = config.rf_axis.resolve(&config.geometry);
        let rf_gauss = match config.rf_gauss {
            Some(b) => b,
            None => calibrate_rf_gauss(&track, &axis, config.target_pi_time_s)?,
        };
        let profile = if config.stationary {
            let f0 = transition_frequency(&track, (track.eta(), track.zeta()))[0];
            FMProfile::from_period_samples(vec![f0; 2], &config.rotation)?
        } else {
            fm_from_track(&track, &config.rotation)?
        };
        let model = reduce(&track, &profile, rf_gauss, &axis)?;
        Ok(Self {
            config,
            track,
            profile,
            model,
            rf_gauss,
        })
    }

    pub fn nominal_rotor(&self) -> Rotor<f64> {
        if self.config.stationary {
            Rotor::Stationary { phi: 0.0 }
        } else {
            Rotor::Uniform(self.config.rotation)
        }
    }

    pub fn bright_signal(&self) -> f64 {
        self.config.readout.scale(!self.config.stationary)
    }

    /// Rabi frequency expected on the nominal clock at time `t` (rad/s).
    pub fn rabi_at(&self, t: f64) -> f64 {
        self.model.rabi(self.nominal_rotor().phase(t))
    }

    /// Duration over which the nominal Rabi frequency from `start`
    /// integrates to `angle`.
    pub fn pulse_duration(&self, angle: f64, start: f64) -> f64 {
        let mut area = 0.0;
        let mut t = start;
        let mut prev = self.rabi_at(t);
        loop {
            let next = self.rabi_at(t + AREA_STEP_S);
            let step_area = 0.5 * (prev + next) * AREA_STEP_S;
            if area + step_area >= angle {
                // Linear rate within the step: solve the quadratic for the remainder.
                let need = angle - area;
                let slope = (next - prev) / AREA_STEP_S;
                let dt = if slope.abs() < 1e-30 * prev.max(1e-300) {
                    need / prev
                } else {
                    (-prev + (prev * prev + 2.0 * slope * need).max(0.0).sqrt()) / slope
                };
                return t - start + dt;
            }
            area += step_area;
            t += AREA_STEP_S;
            prev = next;
            if t - start > MAX_PULSE_S {
                return f64::INFINITY;
            }
        }
    }

    /// A rotation by `angle` starting at `start`.
    pub fn pulse_at(&self, angle: f64, start: f64, phase: f64) -> GateWindow<f64> {
        GateWindow::new(start, self.pulse_duration(angle, start), phase)
    }

    /// A rotation by `angle` centred on `center`.
    pub fn pulse_centered(&self, angle: f64, center: f64, phase: f64) -> GateWindow<f64> {
        let mut d = angle / self.rabi_at(center);
        for _ in 0..FIXED_POINT_ITERS {
            let next = self.pulse_duration(angle, center - 0.5 * d);
            if (next - d).abs() < 1e-15 {
                break;
            }
            d = next;
        }
        GateWindow::new(center - 0.5 * d, d, phase)
    }

    /// First nominal alignment at or after `t`; immediate when stationary.
    pub fn readout_after(&self, t: f64) -> f64 {
        if self.config.stationary {
            return t;
        }
        let rot = &self.config.rotation;
        let k = ((t - rot.phase_origin_s) / rot.period_s - 1e-12).ceil();
        rot.phase_origin_s + k * rot.period_s
    }

    fn shot_rotor(&self, rng: &mut ChaCha8Rng, horizon: f64) -> Rotor<f64> {
        if self.config.stationary {
            return Rotor::Stationary { phi: 0.0 };
        }
        let rot = &self.config.rotation;
        let periods = ((horizon - rot.phase_origin_s) / rot.period_s).ceil().max(0.0) as usize + 2;
        self.config.jitter.draw(rng, periods, rot)
    }

    fn is_deterministic(&self) -> bool {
        (self.config.stationary || self.config.jitter.is_zero()) && self.config.photons_per_shot == 0.0
    }

    /// Runs `simulate` once per shot on that shot's rotation and averages the
    /// bright-state populations it returns, converted to signal.
    pub fn monte_carlo<F>(&self, horizon: f64, simulate: F) -> Result<ShotAverage>
    where
        F: Fn(&Rotor<f64>) -> Result<Vec<f64>> + Sync,
    {
        let scale = self.bright_signal();
        let photons = self.config.photons_per_shot;
        let shots = if self.is_deterministic() { 1 } else { self.config.shots };
        let per_shot: Vec<Vec<f64>> = (0..shots)
            .into_par_iter()
            .map(|shot| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(shot as u64);
                let rotor = self.shot_rotor(&mut rng, horizon);
                let mut p = simulate(&rotor)?;
                let noise = (photons > 0.0).then(|| Normal::new(0.0, 1.0 / photons.sqrt()).expect("finite"));
                for v in p.iter_mut() {
                    *v *= scale;
                    if let Some(n) = &noise {
                        *v += n.sample(&mut rng);
                    }
                }
                Ok(p)
            })
            .collect::<Result<_>>()?;
        let n = per_shot.len() as f64;
        let points = per_shot[0].len();
        let mut mean = vec![0.0; points];
        for row in &per_shot {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut stderr = vec![0.0; points];
        if per_shot.len() > 1 {
            for row in &per_shot {
                for ((s, v), m) in stderr.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m).powi(2);
                }
            }
            stderr.iter_mut().for_each(|s| *s = (*s / (n - 1.0) / n).sqrt());
        }
        Ok(ShotAverage { mean, stderr, per_shot })
    }

    fn envelope(&self, dephasing: Dephasing) -> f64 {
        match dephasing {
            Dephasing::None => 1.0,
            Dephasing::Free(t) => self.config.envelopes.t2star_s.map_or(1.0, |t2| (-t / t2).exp()),
            Dephasing::Refocused(t) => self.config.envelopes.t2_s.map_or(1.0, |t2| (-t / t2).exp()),
        }
    }

    /// Bright-state population after `seq` on `rotor`, for each final-pulse
    /// phase (or once, unswept, when `phases` is empty).
    pub fn simulate(&self, seq: &Sequence, rotor: &Rotor<f64>, phases: &[f64]) -> Result<Vec<f64>> {
        let sweep = !phases.is_empty();
        let last = seq.pulses.len() - 1;
        let mut u = Matrix2::identity();
        let mut t = seq.pulses[0].start;
        for (i, g) in seq.pulses.iter().enumerate() {
            if g.start > t {
                u = self.model.free_unitary(rotor, t, g.start) * u;
            }
            if sweep && i == last {
                break;
            }
            u = self.model.gate_unitary(rotor, g)? * u;
            t = g.end();
        }
        // ρ = U |η><η| U†, then the coherence envelope.
        let (a, b) = (u.0[0][0], u.0[1][0]);
        let env = self.envelope(seq.dephasing);
        let rho = Matrix2::from_fn(|i, j| {
            let x = if i == 0 { a } else { b };
            let y = if j == 0 { a } else { b };
            let v = x * y.conj();
            if i == j {
                v
            } else {
                v * env
            }
        });
        if !sweep {
            return Ok(vec![rho.0[0][0].re]);
        }
        let g = GateWindow {
            phase_offset: 0.0,
            ..seq.pulses[last]
        };
        let u0 = self.model.gate_unitary(rotor, &g)?;
        Ok(phases
            .iter()
            .map(|&ph| {
                let z = cis(ph + seq.pulses[last].phase_offset);
                let mut uf = u0;
                uf.0[1][0] = u0.0[1][0] * z;
                uf.0[0][1] = u0.0[0][1] * z.conj();
                let out = uf * rho * uf.adjoint();
                out.0[0][0].re
            })
            .collect())
    }

    /// Rabi oscillation: one gated pulse from `t_d` of each duration.
    pub fn rabi(&self, t_d: f64, durations: &[f64]) -> Result<ProtocolResult> {
        if durations.is_empty() || durations.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::invalid("protocols", "durations", "need finite durations >= 0"));
        }
        let max_d = durations.iter().copied().fold(0.0, f64::max);
        let readout = if self.config.stationary {
            t_d + max_d
        } else {
            self.readout_after(t_d + 1e-12)
        };
        if t_d + max_d > readout + 1e-12 {
            return Err(Error::SequenceTooLong {
                end_s: t_d + max_d,
                readout_s: readout,
            });
        }
        let mut order: Vec<usize> = (0..durations.len()).collect();
        order.sort_by(|&i, &j| durations[i].total_cmp(&durations[j]));
        let avg = self.monte_carlo(readout, |rotor| {
            let mut out = vec![0.0; durations.len()];
            let mut u = Matrix2::identity();
            let mut done = 0.0;
            for &i in &order {
                let d = durations[i];
                if d > done {
                    u = self.model.gate_unitary(rotor, &GateWindow::new(t_d + done, d - done, 0.0))? * u;
                    done = d;
                }
                out[i] = u.0[0][0].norm_sqr();
            }
            Ok(out)
        })?;
        let rabi_fit = fit_sinusoid(durations, &avg.mean).ok();
        Ok(ProtocolResult {
            protocol: Protocol::Rabi,
            x_name: "duration_s",
            x: durations.to_vec(),
            signal: avg.mean,
            stderr: avg.stderr,
            fringes: Vec::new(),
            rabi_fit,
            decay_fit: None,
            bright_signal: self.bright_signal(),
            shots: avg.per_shot.len(),
            seed: self.config.seed,
        })
    }

    /// `points` durations from 0 covering `cycles` nominal Rabi cycles from
    /// `t_d`, cut short at the readout alignment.
    pub fn rabi_durations(&self, t_d: f64, cycles: f64, points: usize) -> Vec<f64> {
        let mut d_max = self.pulse_duration(2.0 * PI * cycles, t_d);
        if !self.config.stationary {
            d_max = d_max.min(self.readout_after(t_d + 1e-12) - t_d);
        }
        let n = points.max(2);
        (0..n).map(|k| d_max * k as f64 / (n - 1) as f64).collect()
    }

    /// Runs phase sweeps of several sequences and fits each fringe.
    pub fn fringe_sweep(
        &self,
        protocol: Protocol,
        x_name: &'static str,
        items: &[(f64, Sequence)],
        phases: &[f64],
    ) -> Result<ProtocolResult> {
        if items.is_empty() {
            return Err(Error::invalid("protocols", x_name, "need at least one value"));
        }
        // Validate the phase grid before simulating.
        fit_fringe(phases, &vec![0.0; phases.len()])?;
        let horizon = items.iter().map(|(_, s)| s.readout_s).fold(0.0, f64::max);
        let avg = self.monte_carlo(horizon, |rotor| {
            let mut out = Vec::with_capacity(items.len() * phases.len());
            for (_, seq) in items {
                out.extend(self.simulate(seq, rotor, phases)?);
            }
            Ok(out)
        })?;
        let np = phases.len();
        let projector = fit::fringe_projector(phases)?;
        let mut fringes = Vec::with_capacity(items.len());
        let mut amp = Vec::with_capacity(items.len());
        let mut amp_err = Vec::with_capacity(items.len());
        for k in 0..items.len() {
            let range = k * np..(k + 1) * np;
            let signal = avg.mean[range.clone()].to_vec();
            let mut fit = fit_fringe(phases, &signal)?;
            let mc = fit::amplitude_spread(&projector, avg.per_shot.iter().map(|row| &row[range.clone()]));
            fit.amplitude.stderr = fit.amplitude.stderr.max(mc);
            amp.push(fit.amplitude.value);
            amp_err.push(fit.amplitude.stderr);
            fringes.push(Fringe {
                phases: phases.to_vec(),
                signal,
                stderr: avg.stderr[range].to_vec(),
                fit,
            });
        }
        let x: Vec<f64> = items.iter().map(|(x, _)| *x).collect();
        let decay_fit = if x.len() >= 4 {
            fit_decay(&x, &amp, self.config.decay_exponent).ok()
        } else {
            None
        };
        Ok(ProtocolResult {
            protocol,
            x_name,
            x,
            signal: amp,
            stderr: amp_err,
            fringes,
            rabi_fit: None,
            decay_fit,
            bright_signal: self.bright_signal(),
            shots: avg.per_shot.len(),
            seed: self.config.seed,
        })
    }

    /// `π/2 – τ – π/2(φ)`, τ between pulse centres; τ below back-to-back
    /// is placed back-to-back.
    pub fn ramsey_sequence(&self, t_d: f64, tau: f64) -> (f64, Sequence) {
        let first = self.pulse_at(FRAC_PI_2, t_d, 0.0);
        let c1 = first.start + 0.5 * first.duration;
        let mut second = self.pulse_centered(FRAC_PI_2, c1 + tau, 0.0);
        if second.start < first.end() {
            second = self.pulse_at(FRAC_PI_2, first.end(), 0.0);
        }
        let tau_eff = second.start + 0.5 * second.duration - c1;
        let seq = Sequence {
            readout_s: self.readout_after(second.end()),
            pulses: vec![first, second],
            dephasing: Dephasing::Free(tau_eff),
        };
        (tau_eff, seq)
    }

    pub fn ramsey(&self, t_d: f64, taus: &[f64], phases: &[f64]) -> Result<ProtocolResult> {
        let items: Vec<_> = taus.iter().map(|&tau| self.ramsey_sequence(t_d, tau)).collect();
        self.fringe_sweep(Protocol::Ramsey, "tau_s", &items, phases)
    }

    /// `π/2 – τ/2 – π – τ/2 – π/2(φ)`, τ between outer pulse centres.
    pub fn echo_sequence(&self, t_d: f64, tau: f64) -> (f64, Sequence) {
        let first = self.pulse_at(FRAC_PI_2, t_d, 0.0);
        let c1 = first.start + 0.5 * first.duration;
        let mut mid = self.pulse_centered(PI, c1 + 0.5 * tau, 0.0);
        if mid.start < first.end() {
            mid = self.pulse_at(PI, first.end(), 0.0);
        }
        let c2 = mid.start + 0.5 * mid.duration;
        let mut last = self.pulse_centered(FRAC_PI_2, c2 + (c2 - c1), 0.0);
        if last.start < mid.end() {
            last = self.pulse_at(FRAC_PI_2, mid.end(), 0.0);
        }
        let tau_eff = last.start + 0.5 * last.duration - c1;
        let seq = Sequence {
            readout_s: self.readout_after(last.end()),
            pulses: vec![first, mid, last],
            dephasing: Dephasing::Refocused(tau_eff),
        };
        (tau_eff, seq)
    }

    pub fn spin_echo(&self, t_d: f64, taus: &[f64], phases: &[f64]) -> Result<ProtocolResult> {
        let items: Vec<_> = taus.iter().map(|&tau| self.echo_sequence(t_d, tau)).collect();
        self.fringe_sweep(Protocol::SpinEcho, "tau_s", &items, phases)
    }

    /// Echo with every pulse started at a nominal alignment: π/2 at 0, π
    /// after `n/2` periods, π/2 after `n`. `n = 0` runs them back-to-back.
    pub fn multi_period_sequence(&self, n: usize) -> Result<(f64, Sequence)> {
        if !n.is_multiple_of(2) {
            return Err(Error::OddPeriodCount(n));
        }
        let t0 = self.config.rotation.phase_origin_s;
        let period = self.config.rotation.period_s;
        let first = self.pulse_at(FRAC_PI_2, t0, 0.0);
        let (mid, last) = if n == 0 {
            let mid = self.pulse_at(PI, first.end(), 0.0);
            let last = self.pulse_at(FRAC_PI_2, mid.end(), 0.0);
            (mid, last)
        } else {
            (
                self.pulse_at(PI, t0 + period * (n / 2) as f64, 0.0),
                self.pulse_at(FRAC_PI_2, t0 + period * n as f64, 0.0),
            )
        };
        let tau = period * n as f64;
        let seq = Sequence {
            readout_s: self.readout_after(last.end()),
            pulses: vec![first, mid, last],
            dephasing: Dephasing::Refocused(tau),
        };
        Ok((tau, seq))
    }

    pub fn multi_period_echo(&self, periods: &[usize], phases: &[f64]) -> Result<ProtocolResult> {
        let items = periods
            .iter()
            .map(|&n| self.multi_period_sequence(n))
            .collect::<Result<Vec<_>>>()?;
        self.fringe_sweep(Protocol::MultiPeriodEcho, "tau_s", &items, phases)
    }

    /// `π/2 – lock(+90°, L) – π/2(φ)` from `t_d`, lock at `lock_amplitude`
    /// times the calibrated drive.
    pub fn spin_lock_sequence(&self, t_d: f64, lock: f64, lock_amplitude: f64) -> (f64, Sequence) {
        let first = self.pulse_at(FRAC_PI_2, t_d, 0.0);
        let mut pulses = vec![first];
        let mut t = first.end();
        if lock > 0.0 {
            pulses.push(GateWindow {
                start: t,
                duration: lock,
                phase_offset: FRAC_PI_2,
                amplitude_scale: lock_amplitude,
            });
            t += lock;
        }
        let last = self.pulse_at(FRAC_PI_2, t, 0.0);
        pulses.push(last);
        let span = last.start + 0.5 * last.duration - (first.start + 0.5 * first.duration);
        let seq = Sequence {
            readout_s: self.readout_after(last.end()),
            pulses,
            dephasing: Dephasing::Refocused(span),
        };
        (lock, seq)
    }

    pub fn spin_lock(&self, locks: &[f64], phases: &[f64], lock_amplitude: f64) -> Result<ProtocolResult> {
        if locks.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("protocols", "lock_durations", "must be >= 0"));
        }
        let items: Vec<_> = locks
            .iter()
            .map(|&l| self.spin_lock_sequence(0.0, l, lock_amplitude))
            .collect();
        self.fringe_sweep(Protocol::SpinLock, "lock_s", &items, phases)
    }

    /// Lock duration that starts the final pulse at the next alignment.
    pub fn full_period_lock(&self) -> f64 {
        let first = self.pulse_at(FRAC_PI_2, 0.0, 0.0);
        self.config.rotation.period_s - first.end()
    }
}

/// `n` phases evenly covering one turn.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}
