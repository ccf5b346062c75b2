//! Interpolation over sampled curves.

use crate::num::Real;

/// A smooth 2π-periodic function sampled on `[0, 2π]` with both endpoints
/// stored. Evaluation uses Catmull-Rom cubics with periodic wrap-around.
#[derive(Clone, Debug)]
pub struct PeriodicCurve<T> {
    values: Vec<T>,
}

impl<T: Real> PeriodicCurve<T> {
    /// `values[j]` is the sample at `2π j / (len - 1)`; the last sample
    /// duplicates the first.
    pub fn new(values: Vec<T>) -> Self {
        assert!(values.len() >= 4, "periodic curve needs at least 4 samples");
        Self { values }
    }

    pub fn samples(&self) -> &[T] {
        &self.values
    }

    fn cells(&self) -> usize {
        self.values.len() - 1
    }

    fn at_index(&self, k: isize) -> T {
        let n = self.cells() as isize;
        self.values[k.rem_euclid(n) as usize]
    }

    pub fn eval(&self, phi: T) -> T {
        let n = self.cells();
        let x = (phi / T::two_pi()) * T::lit(n as f64);
        let cell = x.floor();
        let u = x - cell;
        let k = cell.to_i64().unwrap_or(0) as isize;
        let p0 = self.at_index(k - 1);
        let p1 = self.at_index(k);
        let p2 = self.at_index(k + 1);
        let p3 = self.at_index(k + 2);
        let half = T::lit(0.5);
        let a = (p2 - p0) * half;
        let b = (p3 - p1) * half;
        let u2 = u * u;
        let u3 = u2 * u;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        (two * u3 - three * u2 + T::one()) * p1
            + (u3 - two * u2 + u) * a
            + (-two * u3 + three * u2) * p2
            + (u3 - u2) * b
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Mean over one period (trapezoid on the periodic grid).
    pub fn mean(&self) -> T {
        let n = self.cells();
        self.values[..n].iter().copied().sum::<T>() / T::lit(n as f64)
    }
}

/// Samples on a uniform time grid `t0 + i * step`.
#[derive(Clone, Debug)]
pub struct UniformSeries<T> {
    pub t0: T,
    pub step: T,
    pub values: Vec<T>,
}

impl<T: Real> UniformSeries<T> {
    pub fn end(&self) -> T {
        self.t0 + self.step * T::lit((self.values.len().saturating_sub(1)) as f64)
    }

    fn locate(&self, t: T) -> (usize, T) {
        let last = self.values.len() - 1;
        let x = ((t - self.t0) / self.step).max(T::zero());
        let i = x.floor().to_usize().unwrap_or(last).min(last.saturating_sub(1));
        (i, (x - T::lit(i as f64)).min(T::one()))
    }

    /// Linear interpolation, clamped to the grid.
    pub fn eval(&self, t: T) -> T {
        if self.values.len() == 1 {
            return self.values[0];
        }
        let (i, u) = self.locate(t);
        self.values[i] + (self.values[i + 1] - self.values[i]) * u
    }

    /// Cumulative trapezoid integral, same grid.
    pub fn cumulative_integral(&self) -> UniformSeries<T> {
        let mut acc = T::zero();
        let mut out = Vec::with_capacity(self.values.len());
        out.push(acc);
        for w in self.values.windows(2) {
            acc += (w[0] + w[1]) * self.step * T::lit(0.5);
            out.push(acc);
        }
        UniformSeries {
            t0: self.t0,
            step: self.step,
            values: out,
        }
    }

    /// Integral of the linear interpolant from `t0` to `t`, given this
    /// series' cumulative integral `cum`.
    pub fn integral_to(&self, cum: &UniformSeries<T>, t: T) -> T {
        if self.values.len() == 1 {
            return self.values[0] * (t - self.t0);
        }
        let (i, u) = self.locate(t);
        let h = self.step * u;
        let slope = (self.values[i + 1] - self.values[i]) / self.step;
        cum.values[i] + self.values[i] * h + slope * h * h * T::lit(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn periodic_cubic_reproduces_smooth_function() {
        let n = 512;
        let f = |x: f64| (x).cos() + 0.3 * (2.0 * x).sin();
        let curve = PeriodicCurve::new((0..=n).map(|j| f(TAU * j as f64 / n as f64)).collect());
        for k in 0..97 {
            let x = -3.0 + 0.13 * k as f64;
            assert!((curve.eval(x) - f(x)).abs() < 1e-6, "x = {x}");
        }
        assert!((curve.mean()).abs() < 1e-12);
    }

    #[test]
    fn uniform_series_integrates_linear_exactly() {
        let s = UniformSeries {
            t0: 1.0,
            step: 0.5,
            values: (0..9).map(|i| 2.0 + 0.5 * i as f64).collect(),
        };
        let cum = s.cumulative_integral();
        // f(t) = 2 + (t - 1), integral from 1 to t = 2(t-1) + (t-1)^2/2
        for t in [1.0, 1.3, 2.0, 3.7, 5.0] {
            let exact = 2.0 * (t - 1.0) + (t - 1.0f64).powi(2) / 2.0;
            assert!((s.integral_to(&cum, t) - exact).abs() < 1e-12);
        }
        assert!((s.eval(1.25) - 2.25).abs() < 1e-15);
    }
}
