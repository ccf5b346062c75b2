//! Kinematics of the rotating diamond, expressed in the NV body frame.
//!
//! The rotation axis is fixed in the body frame at polar angle `alpha` from
//! the NV axis, in the x-z plane. The static field traces a cone of
//! half-angle `alpha` around it and is parallel to the NV axis at zero phase.

use crate::error::{Error, Result};
use crate::num::Real;

pub type Vec3<T> = [T; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationConfig<T> {
    /// Nominal period `T` (s).
    pub period_s: T,
    /// Time at which the field is parallel to the NV axis (s).
    pub phase_origin_s: T,
}

impl<T: Real> Default for RotationConfig<T> {
    fn default() -> Self {
        Self {
            period_s: T::lit(1e-3),
            phase_origin_s: T::zero(),
        }
    }
}

impl<T: Real> RotationConfig<T> {
    pub fn new(period_s: T, phase_origin_s: T) -> Result<Self> {
        let rot = Self {
            period_s,
            phase_origin_s,
        };
        rot.validate()?;
        Ok(rot)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period_s > T::zero() && self.period_s.is_finite()) {
            return Err(Error::invalid("geometry", "period_s", "must be positive and finite"));
        }
        if !self.phase_origin_s.is_finite() {
            return Err(Error::invalid("geometry", "phase_origin_s", "must be finite"));
        }
        Ok(())
    }

    pub fn frequency_hz(&self) -> T {
        T::one() / self.period_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldGeometry<T> {
    pub b_magnitude_g: T,
    /// Angle between rotation axis and NV axis (rad).
    pub cone_angle_rad: T,
    /// rf field amplitude `B_rf,0` (G).
    pub rf_amplitude_g: T,
}

/// `arccos(1/sqrt(3))`: a <111> NV axis seen from a (100)-cut face.
pub fn magic_cone_angle<T: Real>() -> T {
    (T::one() / T::lit(3.0).sqrt()).acos()
}

impl<T: Real> Default for FieldGeometry<T> {
    fn default() -> Self {
        Self {
            b_magnitude_g: T::lit(480.0),
            cone_angle_rad: magic_cone_angle(),
            rf_amplitude_g: T::zero(),
        }
    }
}

impl<T: Real> FieldGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_magnitude_g >= T::zero() && self.b_magnitude_g.is_finite()) {
            return Err(Error::invalid("geometry", "b_gauss", "must be finite and >= 0"));
        }
        if !(self.cone_angle_rad >= T::zero() && self.cone_angle_rad <= T::FRAC_PI_2()) {
            return Err(Error::invalid("geometry", "cone_angle_deg", "must lie in [0, 90] degrees"));
        }
        if !(self.rf_amplitude_g >= T::zero() && self.rf_amplitude_g.is_finite()) {
            return Err(Error::invalid("geometry", "rf_gauss", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Rotation-axis direction in the body frame.
    pub fn rotation_axis(&self) -> Vec3<T> {
        let (s, c) = self.cone_angle_rad.sin_cos();
        [s, T::zero(), c]
    }
}

/// Unwrapped rotation phase `2π (t - t0) / T`.
pub fn rotation_phase<T: Real>(t: T, rot: &RotationConfig<T>) -> T {
    T::two_pi() * (t - rot.phase_origin_s) / rot.period_s
}

/// Static field in the NV frame at rotation phase `phi` (Gauss).
pub fn static_field_nv_frame<T: Real>(phi: T, geom: &FieldGeometry<T>) -> Vec3<T> {
    let b0 = [T::zero(), T::zero(), geom.b_magnitude_g];
    rotate_about(&b0, &geom.rotation_axis(), phi)
}

/// Angle between the static field and the NV axis.
pub fn field_nv_angle<T: Real>(phi: T, geom: &FieldGeometry<T>) -> T {
    let (s, c) = geom.cone_angle_rad.sin_cos();
    let cos_theta = c * c + s * s * phi.cos();
    cos_theta.max(-T::one()).min(T::one()).acos()
}

/// rf coil axis in the NV frame. The coil field is parallel to the rotation
/// axis, which is invariant under the rotation.
pub fn rf_axis_nv_frame<T: Real>(geom: &FieldGeometry<T>) -> Vec3<T> {
    geom.rotation_axis()
}

/// Rodrigues rotation of `v` by `angle` about unit vector `k`.
pub fn rotate_about<T: Real>(v: &Vec3<T>, k: &Vec3<T>, angle: T) -> Vec3<T> {
    let (s, c) = angle.sin_cos();
    let kxv = cross(k, v);
    let kdv = dot(k, v);
    let mut out = [T::zero(); 3];
    for i in 0..3 {
        out[i] = v[i] * c + kxv[i] * s + k[i] * kdv * (T::one() - c);
    }
    out
}

pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm<T: Real>(a: &Vec3<T>) -> T {
    dot(a, a).sqrt()
}

/// Angle between `v` and the NV z axis, computed from the vector itself.
pub fn polar_angle<T: Real>(v: &Vec3<T>) -> T {
    let n = norm(v);
    if n == T::zero() {
        return T::zero();
    }
    (v[2] / n).max(-T::one()).min(T::one()).acos()
}
