//! Frequency-modulated drive that follows the nuclear transition as the
//! diamond rotates, gated into pulses and sampled for replay.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::RotationConfig;
use crate::interp::UniformSeries;
use crate::num::Real;
use crate::spectral::{transition_frequency, AdiabaticTrack};

/// Ten samples per cycle of the fastest feedforward carrier (~5.9 MHz) need
/// more than 59 MS/s.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100e6;
/// Minimum ratio of sample rate to the highest carrier frequency.
pub const OVERSAMPLING: f64 = 10.0;

/// Instantaneous drive frequency and its accumulated phase over whole
/// rotation periods, starting at an alignment time.
#[derive(Clone, Debug)]
pub struct FMProfile<T> {
    pub period_s: T,
    pub periods: usize,
    /// Hz.
    pub frequency: UniformSeries<T>,
    /// `2π ∫ f dt` (rad), cumulative trapezoid on the same grid.
    pub phase: UniformSeries<T>,
    /// Samples per period (grid cells).
    cells: usize,
    /// `phase / 2π`, kept for exact interpolation.
    cycles: UniformSeries<T>,
}

/// Builds a one-period profile from the tracked η ↔ ζ transition.
pub fn fm_from_track<T: Real>(track: &AdiabaticTrack<T>, rot: &RotationConfig<T>) -> Result<FMProfile<T>> {
    rot.validate()?;
    let f = transition_frequency(track, (track.eta(), track.zeta()));
    FMProfile::from_period_samples(f, rot)
}

impl<T: Real> FMProfile<T> {
    /// `f[j]` is the frequency at `t0 + T j / (len - 1)`; the last sample
    /// closes the period.
    pub fn from_period_samples(f: Vec<T>, rot: &RotationConfig<T>) -> Result<Self> {
        if f.len() < 2 {
            return Err(Error::invalid("feedforward", "frequency", "need at least two samples"));
        }
        if f.iter().any(|x| !(*x > T::zero()) || !x.is_finite()) {
            return Err(Error::invalid("feedforward", "frequency", "must be positive and finite"));
        }
        let cells = f.len() - 1;
        let frequency = UniformSeries {
            t0: rot.phase_origin_s,
            step: rot.period_s / T::lit(cells as f64),
            values: f,
        };
        let mut profile = Self {
            period_s: rot.period_s,
            periods: 1,
            phase: frequency.clone(),
            cycles: frequency.clone(),
            frequency,
            cells,
        };
        profile.integrate();
        Ok(profile)
    }

    fn integrate(&mut self) {
        self.cycles = self.frequency.cumulative_integral();
        let mut phase = self.cycles.clone();
        for v in phase.values.iter_mut() {
            *v *= T::two_pi();
        }
        self.phase = phase;
    }

    /// The same profile repeated over `periods` rotations.
    pub fn with_periods(&self, periods: usize) -> Self {
        let periods = periods.max(1);
        let one = &self.frequency.values[..=self.cells];
        let mut values = Vec::with_capacity(self.cells * periods + 1);
        for _ in 0..periods {
            values.extend_from_slice(&one[..self.cells]);
        }
        values.push(one[self.cells]);
        let mut out = Self {
            period_s: self.period_s,
            periods,
            frequency: UniformSeries {
                t0: self.frequency.t0,
                step: self.frequency.step,
                values,
            },
            phase: self.phase.clone(),
            cycles: self.cycles.clone(),
            cells: self.cells,
        };
        out.integrate();
        out
    }

    pub fn start(&self) -> T {
        self.frequency.t0
    }

    pub fn duration(&self) -> T {
        self.period_s * T::lit(self.periods as f64)
    }

    pub fn max_frequency(&self) -> T {
        self.frequency.values.iter().copied().fold(T::zero(), T::max)
    }

    pub fn min_frequency(&self) -> T {
        self.frequency.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Accumulated phase over one period.
    pub fn phase_per_period(&self) -> T {
        self.phase.values[self.cells]
    }

    /// Splits `t` into whole periods since the start and the remainder.
    fn fold(&self, t: T) -> (T, T) {
        let x = (t - self.start()) / self.period_s;
        let k = x.floor();
        (k, t - k * self.period_s)
    }

    /// Frequency at any time, extended periodically (Hz).
    pub fn frequency_at(&self, t: T) -> T {
        let (_, local) = self.fold(t);
        self.frequency.eval(local)
    }

    /// Accumulated phase at any time, extended periodically: the exact
    /// integral of the linearly interpolated frequency.
    pub fn phase_at(&self, t: T) -> T {
        let (k, local) = self.fold(t);
        k * self.phase_per_period() + T::two_pi() * self.frequency.integral_to(&self.cycles, local)
    }

    /// Mean frequency over one period (Hz).
    pub fn mean_frequency(&self) -> T {
        self.phase_per_period() / (T::two_pi() * self.period_s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateWindow<T> {
    pub start: T,
    pub duration: T,
    pub phase_offset: T,
    pub amplitude_scale: T,
}

impl<T: Real> GateWindow<T> {
    pub fn new(start: T, duration: T, phase_offset: T) -> Self {
        Self {
            start,
            duration,
            phase_offset,
            amplitude_scale: T::one(),
        }
    }

    pub fn end(&self) -> T {
        self.start + self.duration
    }

    /// Half-open: `[start, start + duration)`.
    pub fn contains(&self, t: T) -> bool {
        t >= self.start && t < self.end()
    }
}

/// Sorts gates and rejects negative durations or overlaps.
pub fn check_gates<T: Real>(gates: &[GateWindow<T>]) -> Result<Vec<GateWindow<T>>> {
    let mut sorted = gates.to_vec();
    for g in &sorted {
        if !(g.duration >= T::zero()) || !g.start.is_finite() || !g.duration.is_finite() {
            return Err(Error::invalid("feedforward", "gate", "duration must be finite and >= 0"));
        }
    }
    sorted.sort_by(|a, b| a.start.partial_cmp(&b.start).expect("finite gate starts"));
    for w in sorted.windows(2) {
        if w[1].start < w[0].end() {
            return Err(Error::GateOverlap {
                at_s: w[1].start.as_f64(),
            });
        }
    }
    Ok(sorted)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate_hz: f64,
    /// Time of the first sample (s).
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Samples the gated carrier over the profile's duration.
///
/// The carrier phase runs continuously whether or not a gate is open.
pub fn synthesize<T: Real>(
    profile: &FMProfile<T>,
    gates: &[GateWindow<T>],
    sample_rate_hz: f64,
) -> Result<Waveform> {
    let required = OVERSAMPLING * profile.max_frequency().as_f64();
    if !(sample_rate_hz >= required) {
        return Err(Error::Undersampled {
            sample_rate_hz,
            required_hz: required,
        });
    }
    let gates = check_gates(gates)?;
    let t0 = profile.start().as_f64();
    let n = (profile.duration().as_f64() * sample_rate_hz).round() as usize;
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = T::lit(t0 + i as f64 / sample_rate_hz);
            match gates.iter().find(|g| g.contains(t)) {
                Some(g) => (g.amplitude_scale * (profile.phase_at(t) + g.phase_offset).sin()).as_f64(),
                None => 0.0,
            }
        })
        .collect();
    Ok(Waveform {
        sample_rate_hz,
        t0,
        samples,
    })
}

pub fn export_waveform(waveform: &Waveform, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "# sample_rate_hz={}", waveform.sample_rate_hz).map_err(io)?;
    for s in &waveform.samples {
        writeln!(w, "{s:.16e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn import_waveform(path: &Path) -> Result<Waveform> {
    let name = path.to_path_buf();
    let file = File::open(path).map_err(|source| Error::Io {
        path: name.clone(),
        source,
    })?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: name.clone(),
        line,
        reason,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|source| Error::Io {
            path: name.clone(),
            source,
        })?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let rate: f64 = header
        .strip_prefix("# sample_rate_hz=")
        .ok_or_else(|| parse_err(1, "expected '# sample_rate_hz=<value>'".into()))?
        .trim()
        .parse()
        .map_err(|e| parse_err(1, format!("{e}")))?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: name.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(
            line.trim()
                .parse()
                .map_err(|e| parse_err(i + 2, format!("{e}")))?,
        );
    }
    Ok(Waveform {
        sample_rate_hz: rate,
        t0: 0.0,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn constant_profile(f: f64, periods: usize) -> FMProfile<f64> {
        let rot = RotationConfig::default();
        FMProfile::from_period_samples(vec![f; 65], &rot)
            .unwrap()
            .with_periods(periods)
    }

    #[test]
    fn constant_frequency_phase_is_linear() {
        let p = constant_profile(5e6, 2);
        for t in [0.0, 1e-4, 7.3e-4, 1.5e-3, 3.2e-3] {
            assert!((p.phase_at(t) - TAU * 5e6 * t).abs() < 1e-6 * (1.0 + TAU * 5e6 * t));
        }
        assert!((p.mean_frequency() - 5e6).abs() < 1e-6);
    }

    #[test]
    fn rejects_nonpositive_frequency() {
        let rot = RotationConfig::default();
        assert!(FMProfile::from_period_samples(vec![1.0, 0.0, 1.0], &rot).is_err());
    }

    #[test]
    fn repeated_profile_is_periodic() {
        let rot = RotationConfig::default();
        let f: Vec<f64> = (0..=256)
            .map(|j| 5e6 + 4e5 * (TAU * j as f64 / 256.0).cos())
            .collect();
        let one = FMProfile::from_period_samples(f, &rot).unwrap();
        let three = one.with_periods(3);
        assert_eq!(three.frequency.values.len(), 3 * 256 + 1);
        let per = one.phase_per_period();
        assert!((three.phase.values[3 * 256] - 3.0 * per).abs() < 1e-6);
        assert!((one.phase_at(2.5e-3) - three.phase_at(2.5e-3)).abs() < 1e-6);
    }

    #[test]
    fn gates_overlap_and_order() {
        let g = [GateWindow::new(2e-6, 1e-6, 0.0), GateWindow::new(0.0, 2e-6, 0.0)];
        assert_eq!(check_gates(&g).unwrap()[0].start, 0.0);
        let bad = [GateWindow::new(0.0, 2e-6, 0.0), GateWindow::new(1e-6, 1e-6, 0.0)];
        assert!(matches!(check_gates(&bad), Err(Error::GateOverlap { .. })));
        let neg = [GateWindow::new(0.0, -1e-6, 0.0)];
        assert!(check_gates(&neg).is_err());
    }

    #[test]
    fn undersampling_is_an_error() {
        let p = constant_profile(5e6, 1);
        assert!(matches!(
            synthesize(&p, &[], 40e6),
            Err(Error::Undersampled { .. })
        ));
    }

    #[test]
    fn empty_gate_list_is_silent() {
        let p = constant_profile(1e6, 1);
        let w = synthesize(&p, &[], 10e6).unwrap();
        assert_eq!(w.len(), 10_000);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn adjacent_gates_join_smoothly() {
        let f = 1e6;
        let rate = 20e6;
        let p = constant_profile(f, 1);
        let gates = [
            GateWindow::new(0.0, 10e-6, 0.4),
            GateWindow::new(10e-6, 10e-6, 0.4),
        ];
        let w = synthesize(&p, &gates, rate).unwrap();
        let bound = TAU * f / rate + 1e-12;
        for i in 1..400 {
            assert!((w.samples[i] - w.samples[i - 1]).abs() <= bound);
        }
    }
}
