//! Run configuration: a flat JSON object, every key optional.

use std::path::Path;

use rotorspin_core::geometry::{FieldGeometry, RotationConfig};
use rotorspin_core::protocols::{
    Envelopes, ExperimentConfig, JitterModel, ReadoutModel, DEFAULT_INDEPENDENT_SIGMA_S, DEFAULT_JITTER_SIGMA_S,
    DEFAULT_WINDOW_FWHM_S, ROTATING_CONTRAST, STATIONARY_CONTRAST,
};
use rotorspin_core::spectral::{RfAxis, DEFAULT_TRACK_SAMPLES};
use rotorspin_core::spincore::{defaults_hz, PhysicalConstants};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    NvX,
    RotationAxis,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisConfig {
    Named(AxisName),
    Vector([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // Spin constants, ordinary frequency units.
    pub d_zfs_hz: f64,
    pub gamma_e_hz_per_g: f64,
    pub gamma_n_hz_per_g: f64,
    pub quadrupole_hz: f64,
    pub a_par_hz: f64,
    pub a_perp_hz: f64,

    // Field and rotation.
    pub b_gauss: f64,
    pub cone_angle_deg: f64,
    pub period_s: f64,
    pub phase_origin_s: f64,
    pub track_samples: usize,
    /// Hold the diamond at alignment.
    pub stationary: bool,

    // Drive. A null `rf_gauss` calibrates it from `target_pi_time_s`.
    pub rf_gauss: Option<f64>,
    pub target_pi_time_s: f64,
    pub rf_axis: AxisConfig,
    pub sample_rate_hz: f64,
    pub feedforward_periods: usize,

    // Rotation jitter.
    pub jitter_sigma_s: f64,
    pub jitter_independent_sigma_s: f64,
    pub trigger_lead_periods: f64,

    // Readout. A null `contrast_max` picks the stationary or rotating value.
    pub polarization_fraction: f64,
    pub contrast_max: Option<f64>,
    pub window_fwhm_s: f64,
    pub laser_on_offset_s: f64,
    pub photons_per_shot: f64,
    pub intrinsic_t2star_s: Option<f64>,
    pub intrinsic_t2_s: Option<f64>,

    // Monte Carlo and fitting. A null `decay_exponent` fits the exponent.
    pub shots: usize,
    pub seed: u64,
    pub decay_exponent: Option<f64>,
    pub phase_points: usize,

    // Sweeps.
    pub spectrum_points: usize,
    pub rabi_t_d_s: f64,
    pub rabi_cycles: f64,
    pub rabi_points: usize,
    pub ramsey_t_d_s: f64,
    pub ramsey_tau_max_s: f64,
    pub ramsey_points: usize,
    pub echo_t_d_s: f64,
    pub echo_tau_max_s: f64,
    pub echo_points: usize,
    pub multiperiod_max_periods: usize,
    /// Null runs the lock up to one full period.
    pub spinlock_max_s: Option<f64>,
    pub spinlock_points: usize,
    pub lock_amplitude: f64,
    pub fig4c_t_d_s: Vec<f64>,
    pub fig4c_cycles: f64,
    /// Intrinsic T2 applied to the enveloped multi-period series of fig5.
    pub fig5_intrinsic_t2_s: f64,

    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let readout = ReadoutModel::rotating();
        Self {
            d_zfs_hz: defaults_hz::D_ZFS,
            gamma_e_hz_per_g: defaults_hz::GAMMA_E,
            gamma_n_hz_per_g: defaults_hz::GAMMA_N,
            quadrupole_hz: defaults_hz::Q,
            a_par_hz: defaults_hz::A_PAR,
            a_perp_hz: defaults_hz::A_PERP,
            b_gauss: 480.0,
            cone_angle_deg: rotorspin_core::geometry::magic_cone_angle::<f64>().to_degrees(),
            period_s: 1e-3,
            phase_origin_s: 0.0,
            track_samples: DEFAULT_TRACK_SAMPLES,
            stationary: false,
            rf_gauss: None,
            target_pi_time_s: rotorspin_core::dynamics::DEFAULT_PI_TIME_S,
            rf_axis: AxisConfig::Named(AxisName::NvX),
            sample_rate_hz: rotorspin_core::feedforward::DEFAULT_SAMPLE_RATE_HZ,
            feedforward_periods: 1,
            jitter_sigma_s: DEFAULT_JITTER_SIGMA_S,
            jitter_independent_sigma_s: DEFAULT_INDEPENDENT_SIGMA_S,
            trigger_lead_periods: 1.0,
            polarization_fraction: readout.polarization_fraction,
            contrast_max: None,
            window_fwhm_s: DEFAULT_WINDOW_FWHM_S,
            laser_on_offset_s: 0.0,
            photons_per_shot: 0.0,
            intrinsic_t2star_s: None,
            intrinsic_t2_s: None,
            shots: 500,
            seed: 0,
            decay_exponent: Some(1.0),
            phase_points: 8,
            spectrum_points: 360,
            rabi_t_d_s: 0.0,
            rabi_cycles: 3.0,
            rabi_points: 61,
            ramsey_t_d_s: 0.0,
            ramsey_tau_max_s: 300e-6,
            ramsey_points: 16,
            echo_t_d_s: 0.0,
            echo_tau_max_s: 900e-6,
            echo_points: 19,
            multiperiod_max_periods: 8,
            spinlock_max_s: None,
            spinlock_points: 6,
            lock_amplitude: 1.0,
            fig4c_t_d_s: (0..=6).map(|k| k as f64 * 100e-6).collect(),
            fig4c_cycles: 1.5,
            fig5_intrinsic_t2_s: 6.5e-3,
            output_dir: None,
        }
    }
}

fn range(name: &str, ok: bool, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("invalid `{name}`: {reason}")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    range(name, v > 0.0 && v.is_finite(), "must be positive and finite")
}

fn non_negative(name: &str, v: f64) -> Result<(), CliError> {
    range(name, v >= 0.0 && v.is_finite(), "must be finite and >= 0")
}

fn at_least(name: &str, v: usize, min: usize) -> Result<(), CliError> {
    range(name, v >= min, &format!("must be at least {min}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("d_zfs_hz", self.d_zfs_hz)?;
        for (name, v) in [
            ("gamma_e_hz_per_g", self.gamma_e_hz_per_g),
            ("gamma_n_hz_per_g", self.gamma_n_hz_per_g),
            ("quadrupole_hz", self.quadrupole_hz),
            ("a_par_hz", self.a_par_hz),
            ("a_perp_hz", self.a_perp_hz),
            ("phase_origin_s", self.phase_origin_s),
            ("rabi_t_d_s", self.rabi_t_d_s),
            ("ramsey_t_d_s", self.ramsey_t_d_s),
            ("echo_t_d_s", self.echo_t_d_s),
        ] {
            range(name, v.is_finite(), "must be finite")?;
        }
        non_negative("b_gauss", self.b_gauss)?;
        range(
            "cone_angle_deg",
            (0.0..=90.0).contains(&self.cone_angle_deg),
            "must lie in [0, 90] degrees",
        )?;
        positive("period_s", self.period_s)?;
        at_least("track_samples", self.track_samples, rotorspin_core::spectral::MIN_TRACK_SAMPLES)?;
        if let Some(b) = self.rf_gauss {
            positive("rf_gauss", b)?;
        }
        positive("target_pi_time_s", self.target_pi_time_s)?;
        if let AxisConfig::Vector(v) = self.rf_axis {
            range("rf_axis", v.iter().all(|x| x.is_finite()) && v.iter().any(|x| *x != 0.0), "must be a non-zero vector")?;
        }
        positive("sample_rate_hz", self.sample_rate_hz)?;
        at_least("feedforward_periods", self.feedforward_periods, 1)?;
        non_negative("jitter_sigma_s", self.jitter_sigma_s)?;
        range(
            "jitter_independent_sigma_s",
            self.jitter_independent_sigma_s >= 0.0 && self.jitter_independent_sigma_s <= self.jitter_sigma_s,
            "must lie in [0, jitter_sigma_s]",
        )?;
        non_negative("trigger_lead_periods", self.trigger_lead_periods)?;
        range(
            "polarization_fraction",
            (0.0..=1.0).contains(&self.polarization_fraction),
            "must lie in [0, 1]",
        )?;
        if let Some(c) = self.contrast_max {
            range("contrast_max", (0.0..=1.0).contains(&c), "must lie in [0, 1]")?;
        }
        positive("window_fwhm_s", self.window_fwhm_s)?;
        range("laser_on_offset_s", self.laser_on_offset_s.is_finite(), "must be finite")?;
        non_negative("photons_per_shot", self.photons_per_shot)?;
        if let Some(t) = self.intrinsic_t2star_s {
            positive("intrinsic_t2star_s", t)?;
        }
        if let Some(t) = self.intrinsic_t2_s {
            positive("intrinsic_t2_s", t)?;
        }
        at_least("shots", self.shots, 1)?;
        if let Some(p) = self.decay_exponent {
            positive("decay_exponent", p)?;
        }
        at_least("phase_points", self.phase_points, 5)?;
        at_least("spectrum_points", self.spectrum_points, 1)?;
        positive("rabi_cycles", self.rabi_cycles)?;
        at_least("rabi_points", self.rabi_points, 5)?;
        non_negative("ramsey_tau_max_s", self.ramsey_tau_max_s)?;
        at_least("ramsey_points", self.ramsey_points, 1)?;
        non_negative("echo_tau_max_s", self.echo_tau_max_s)?;
        at_least("echo_points", self.echo_points, 1)?;
        range(
            "multiperiod_max_periods",
            self.multiperiod_max_periods.is_multiple_of(2),
            "must be even",
        )?;
        if let Some(l) = self.spinlock_max_s {
            non_negative("spinlock_max_s", l)?;
        }
        at_least("spinlock_points", self.spinlock_points, 1)?;
        non_negative("lock_amplitude", self.lock_amplitude)?;
        range(
            "fig4c_t_d_s",
            !self.fig4c_t_d_s.is_empty() && self.fig4c_t_d_s.iter().all(|t| *t >= 0.0 && t.is_finite()),
            "need at least one finite delay >= 0",
        )?;
        positive("fig4c_cycles", self.fig4c_cycles)?;
        positive("fig5_intrinsic_t2_s", self.fig5_intrinsic_t2_s)?;
        Ok(())
    }

    pub fn constants(&self) -> Result<PhysicalConstants<f64>, CliError> {
        Ok(PhysicalConstants::from_hz(
            self.d_zfs_hz,
            self.gamma_e_hz_per_g,
            self.gamma_n_hz_per_g,
            self.quadrupole_hz,
            self.a_par_hz,
            self.a_perp_hz,
        )?)
    }

    pub fn geometry(&self) -> FieldGeometry<f64> {
        FieldGeometry {
            b_magnitude_g: self.b_gauss,
            cone_angle_rad: self.cone_angle_deg.to_radians(),
            rf_amplitude_g: self.rf_gauss.unwrap_or(0.0),
        }
    }

    pub fn rotation(&self) -> RotationConfig<f64> {
        RotationConfig {
            period_s: self.period_s,
            phase_origin_s: self.phase_origin_s,
        }
    }

    pub fn rf_axis(&self) -> RfAxis<f64> {
        match self.rf_axis {
            AxisConfig::Named(AxisName::NvX) => RfAxis::NvX,
            AxisConfig::Named(AxisName::RotationAxis) => RfAxis::RotationAxis,
            AxisConfig::Vector(v) => RfAxis::Custom(v),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let default_contrast = if self.stationary {
            STATIONARY_CONTRAST
        } else {
            ROTATING_CONTRAST
        };
        let jitter = if self.stationary {
            JitterModel::none()
        } else {
            JitterModel {
                sigma_period_s: self.jitter_sigma_s,
                sigma_independent_s: self.jitter_independent_sigma_s,
                trigger_lead_periods: self.trigger_lead_periods,
            }
        };
        Ok(ExperimentConfig {
            constants: self.constants()?,
            geometry: self.geometry(),
            rotation: self.rotation(),
            rf_axis: self.rf_axis(),
            rf_gauss: self.rf_gauss,
            target_pi_time_s: self.target_pi_time_s,
            track_samples: self.track_samples,
            stationary: self.stationary,
            jitter,
            readout: ReadoutModel {
                polarization_fraction: self.polarization_fraction,
                contrast_max: self.contrast_max.unwrap_or(default_contrast),
                window_fwhm_s: self.window_fwhm_s,
                laser_on_offset_s: self.laser_on_offset_s,
            },
            envelopes: Envelopes {
                t2star_s: self.intrinsic_t2star_s,
                t2_s: self.intrinsic_t2_s,
            },
            photons_per_shot: self.photons_per_shot,
            shots: self.shots,
            seed: self.seed,
            decay_exponent: self.decay_exponent,
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.b_gauss, 480.0);
        assert!((cfg.cone_angle_deg - 54.7356).abs() < 1e-4);
        assert_eq!(cfg.jitter_sigma_s, 323e-9);
        assert_eq!(cfg.period_s, 1e-3);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = serde_json::from_str::<RunConfig>(r#"{"b_gaus": 3}"#).unwrap_err();
        assert!(err.to_string().contains("b_gaus"));
    }

    #[test]
    fn range_error_names_field() {
        let cfg: RunConfig = serde_json::from_str(r#"{"b_gauss": -1}"#).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("b_gauss"), "{msg}");
    }

    #[test]
    fn round_trip_is_stable() {
        let text = r#"{"seed": 9, "rf_axis": [1, 0, 0.5], "decay_exponent": null, "intrinsic_t2_s": 0.0065}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        let saved = serde_json::to_string(&cfg).unwrap();
        let again: RunConfig = serde_json::from_str(&saved).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(saved, serde_json::to_string(&again).unwrap());
        assert_eq!(again.decay_exponent, None);
        assert_eq!(again.rf_axis, AxisConfig::Vector([1.0, 0.0, 0.5]));
    }

    #[test]
    fn named_axis_parses() {
        let cfg: RunConfig = serde_json::from_str(r#"{"rf_axis": "rotation_axis"}"#).unwrap();
        assert_eq!(cfg.rf_axis(), RfAxis::RotationAxis);
    }
}
