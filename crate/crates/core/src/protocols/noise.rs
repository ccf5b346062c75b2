//! Rotation-period jitter and the optical readout model.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::Rotor;
use crate::error::{Error, Result};
use crate::geometry::RotationConfig;

pub const DEFAULT_JITTER_SIGMA_S: f64 = 323e-9;
/// Uncorrelated share of the period jitter (see [`JitterModel`]).
pub const DEFAULT_INDEPENDENT_SIGMA_S: f64 = 60e-9;

/// Gaussian period jitter: `T_k = T0 + ε_k`, `ε_k = c + η_k`, where `c` is
/// shared by all periods of one shot (slow motor drift) and `η_k` is drawn
/// per period. The total spread of each `ε_k` is `sigma_period_s`.
///
/// The sequence trigger is derived from the preceding rotation, so the first
/// physical alignment lands `trigger_lead_periods · ε_{-1}` after the nominal
/// one. Setting `sigma_independent_s = sigma_period_s` and
/// `trigger_lead_periods = 0` gives fully independent periods with an exact
/// trigger.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterModel {
    pub sigma_period_s: f64,
    pub sigma_independent_s: f64,
    pub trigger_lead_periods: f64,
}

impl Default for JitterModel {
    fn default() -> Self {
        Self {
            sigma_period_s: DEFAULT_JITTER_SIGMA_S,
            sigma_independent_s: DEFAULT_INDEPENDENT_SIGMA_S,
            trigger_lead_periods: 1.0,
        }
    }
}

impl JitterModel {
    pub fn none() -> Self {
        Self {
            sigma_period_s: 0.0,
            sigma_independent_s: 0.0,
            trigger_lead_periods: 0.0,
        }
    }

    /// Independent per-period draws with an exact trigger.
    pub fn independent(sigma: f64) -> Self {
        Self {
            sigma_period_s: sigma,
            sigma_independent_s: sigma,
            trigger_lead_periods: 0.0,
        }
    }

    /// Same correlation structure with the total spread scaled to `sigma`.
    pub fn scaled_to(&self, sigma: f64) -> Self {
        let ratio = if self.sigma_period_s > 0.0 {
            sigma / self.sigma_period_s
        } else {
            0.0
        };
        Self {
            sigma_period_s: sigma,
            sigma_independent_s: self.sigma_independent_s * ratio,
            trigger_lead_periods: self.trigger_lead_periods,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_period_s >= 0.0 && self.sigma_period_s.is_finite()) {
            return Err(Error::invalid("protocols", "jitter_sigma_s", "must be finite and >= 0"));
        }
        if !(self.sigma_independent_s >= 0.0 && self.sigma_independent_s <= self.sigma_period_s) {
            return Err(Error::invalid(
                "protocols",
                "jitter_independent_sigma_s",
                "must lie in [0, jitter_sigma_s]",
            ));
        }
        if !(self.trigger_lead_periods >= 0.0 && self.trigger_lead_periods.is_finite()) {
            return Err(Error::invalid("protocols", "trigger_lead_periods", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_period_s == 0.0
    }

    pub fn sigma_common_s(&self) -> f64 {
        (self.sigma_period_s.powi(2) - self.sigma_independent_s.powi(2)).max(0.0).sqrt()
    }

    /// Draws the physical rotation for one shot covering `periods` periods.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, periods: usize, nominal: &RotationConfig<f64>) -> Rotor<f64> {
        if self.is_zero() {
            return Rotor::Uniform(*nominal);
        }
        let common = Normal::new(0.0, self.sigma_common_s()).expect("finite sigma").sample(rng);
        let indep = Normal::new(0.0, self.sigma_independent_s).expect("finite sigma");
        let mut eps = || common + indep.sample(rng);
        let lead = eps();
        let mut alignments = Vec::with_capacity(periods + 1);
        let mut a = nominal.phase_origin_s + self.trigger_lead_periods * lead;
        alignments.push(a);
        for _ in 0..periods {
            a += nominal.period_s + eps();
            alignments.push(a);
        }
        Rotor::Piecewise {
            alignments,
            nominal: *nominal,
        }
    }
}

pub const DEFAULT_WINDOW_FWHM_S: f64 = 4e-6;
pub const STATIONARY_CONTRAST: f64 = 0.06;
pub const ROTATING_CONTRAST: f64 = 0.025;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutModel {
    pub polarization_fraction: f64,
    pub contrast_max: f64,
    pub window_fwhm_s: f64,
    /// Laser turn-on time relative to the peak of the alignment window.
    pub laser_on_offset_s: f64,
}

impl ReadoutModel {
    pub fn stationary() -> Self {
        Self {
            polarization_fraction: 1.0,
            contrast_max: STATIONARY_CONTRAST,
            window_fwhm_s: DEFAULT_WINDOW_FWHM_S,
            laser_on_offset_s: 0.0,
        }
    }

    pub fn rotating() -> Self {
        Self {
            contrast_max: ROTATING_CONTRAST,
            ..Self::stationary()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.polarization_fraction) {
            return Err(Error::invalid("protocols", "polarization_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.contrast_max) {
            return Err(Error::invalid("protocols", "contrast_max", "must lie in [0, 1]"));
        }
        if !(self.window_fwhm_s > 0.0 && self.window_fwhm_s.is_finite()) {
            return Err(Error::invalid("protocols", "window_fwhm_s", "must be positive"));
        }
        if !self.laser_on_offset_s.is_finite() {
            return Err(Error::invalid("protocols", "laser_on_offset_s", "must be finite"));
        }
        Ok(())
    }

    /// Signal per unit bright-state population. The alignment window only
    /// applies when the diamond rotates.
    pub fn scale(&self, rotating: bool) -> f64 {
        let window = if rotating {
            readout_window(self.laser_on_offset_s, self)
        } else {
            1.0
        };
        self.contrast_max * self.polarization_fraction * window
    }
}

/// Gaussian alignment window `exp(-4 ln2 offset² / FWHM²)`.
pub fn readout_window(laser_on_offset_s: f64, model: &ReadoutModel) -> f64 {
    (-4.0 * std::f64::consts::LN_2 * (laser_on_offset_s / model.window_fwhm_s).powi(2)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_values() {
        let m = ReadoutModel::rotating();
        assert_eq!(readout_window(0.0, &m), 1.0);
        assert!((readout_window(2e-6, &m) - 0.5).abs() < 1e-12);
        assert!((readout_window(-2e-6, &m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_jitter_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rot = RotationConfig::default();
        assert_eq!(JitterModel::none().draw(&mut rng, 5, &rot), Rotor::Uniform(rot));
    }

    #[test]
    fn period_spread_matches_sigma() {
        let rot = RotationConfig::default();
        let j = JitterModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut periods = Vec::new();
        let mut diffs = Vec::new();
        for _ in 0..4000 {
            if let Rotor::Piecewise { alignments, .. } = j.draw(&mut rng, 2, &rot) {
                let p0 = alignments[1] - alignments[0] - 1e-3;
                let p1 = alignments[2] - alignments[1] - 1e-3;
                periods.push(p0);
                diffs.push(p1 - p0);
            }
        }
        let sd = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        assert!((sd(&periods) / 323e-9 - 1.0).abs() < 0.05);
        // Period differences only see the independent part.
        assert!((sd(&diffs) / (60e-9 * 2f64.sqrt()) - 1.0).abs() < 0.05);
    }

    #[test]
    fn validation() {
        assert!(JitterModel::default().validate().is_ok());
        let bad = JitterModel {
            sigma_independent_s: 1e-6,
            ..JitterModel::default()
        };
        assert!(bad.validate().is_err());
        assert!(ReadoutModel {
            contrast_max: 2.0,
            ..ReadoutModel::rotating()
        }
        .validate()
        .is_err());
    }
}
