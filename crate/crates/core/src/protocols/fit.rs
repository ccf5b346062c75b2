//! Least-squares fits used to reduce simulated signals.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// A fitted value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn new(value: f64, variance: f64) -> Self {
        Self {
            value,
            stderr: variance.max(0.0).sqrt(),
        }
    }
}

/// `a + b cos(φ - φ0)` with `b >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeFit {
    pub amplitude: Estimate,
    pub phase: Estimate,
    pub offset: Estimate,
}

/// `A0 exp(-(τ/T2)^p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub amplitude0: Estimate,
    pub t2: Estimate,
    pub exponent: Estimate,
    /// No decay was resolved; `t2` is a lower bound.
    pub t2_lower_bound: bool,
}

/// `a + A cos(2π f t + φ)` with `A >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinusoidFit {
    pub frequency: Estimate,
    pub amplitude: Estimate,
    pub phase: Estimate,
    pub offset: Estimate,
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

fn normal_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows[0].len();
    let mut m = vec![vec![0.0; k]; k];
    for r in rows {
        for i in 0..k {
            for j in 0..k {
                m[i][j] += r[i] * r[j];
            }
        }
    }
    m
}

struct Linear {
    coef: Vec<f64>,
    cov: Vec<Vec<f64>>,
    rss: f64,
}

fn linear_lsq(rows: &[Vec<f64>], y: &[f64]) -> Option<Linear> {
    let k = rows[0].len();
    let ata = normal_matrix(rows);
    let aty: Vec<f64> = (0..k)
        .map(|i| rows.iter().zip(y).map(|(r, v)| r[i] * v).sum())
        .collect();
    let coef = solve(ata.clone(), aty)?;
    let rss: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, v)| {
            let m: f64 = r.iter().zip(&coef).map(|(a, c)| a * c).sum();
            (v - m).powi(2)
        })
        .sum();
    let dof = y.len().saturating_sub(k).max(1) as f64;
    let inv = invert(&ata)?;
    let cov = inv
        .into_iter()
        .map(|row| row.into_iter().map(|v| v * rss / dof).collect())
        .collect();
    Some(Linear { coef, cov, rss })
}

/// Fits `a + b cos(φ - φ0)` by linear least squares in `(a, b cos φ0, b sin φ0)`.
pub fn fit_fringe(phases: &[f64], signal: &[f64]) -> Result<FringeFit> {
    let fail = |reason: &str| Error::FitFailed {
        what: "fringe",
        reason: reason.into(),
    };
    if phases.len() != signal.len() {
        return Err(fail("phase and signal lengths differ"));
    }
    let n = phases.len();
    if n < 5 {
        return Err(fail("need at least 5 phase samples"));
    }
    if phases.iter().chain(signal).any(|v| !v.is_finite()) {
        return Err(fail("non-finite input"));
    }
    let lo = phases.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < TAU * (n - 1) as f64 / n as f64 - 1e-9 {
        return Err(fail("phases must span a full turn"));
    }
    let rows: Vec<Vec<f64>> = phases.iter().map(|p| vec![1.0, p.cos(), p.sin()]).collect();
    let lin = linear_lsq(&rows, signal).ok_or_else(|| fail("singular design matrix"))?;
    let (a, c1, c2) = (lin.coef[0], lin.coef[1], lin.coef[2]);
    let b = c1.hypot(c2);
    let cv = &lin.cov;
    let (var_b, var_phi) = if b > 0.0 {
        let (u1, u2) = (c1 / b, c2 / b);
        let vb = u1 * u1 * cv[1][1] + u2 * u2 * cv[2][2] + 2.0 * u1 * u2 * cv[1][2];
        let (w1, w2) = (-c2 / (b * b), c1 / (b * b));
        let vp = w1 * w1 * cv[1][1] + w2 * w2 * cv[2][2] + 2.0 * w1 * w2 * cv[1][2];
        (vb, vp)
    } else {
        (0.5 * (cv[1][1] + cv[2][2]), f64::INFINITY)
    };
    Ok(FringeFit {
        amplitude: Estimate::new(b, var_b),
        phase: Estimate::new(c2.atan2(c1), var_phi),
        offset: Estimate::new(a, cv[0][0]),
    })
}

/// Rows of the linear map from fringe samples to `(a, b cos φ0, b sin φ0)`.
pub(crate) fn fringe_projector(phases: &[f64]) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = phases.iter().map(|p| vec![1.0, p.cos(), p.sin()]).collect();
    let inv = invert(&normal_matrix(&rows)).ok_or_else(|| Error::FitFailed {
        what: "fringe",
        reason: "singular design matrix".into(),
    })?;
    Ok((0..3)
        .map(|i| {
            rows.iter()
                .map(|r| (0..3).map(|k| inv[i][k] * r[k]).sum())
                .collect()
        })
        .collect())
}

/// Standard error of the fringe amplitude of the shot-averaged signal,
/// from the spread of per-shot fringe coefficients.
pub(crate) fn amplitude_spread<'a>(projector: &[Vec<f64>], shots: impl Iterator<Item = &'a [f64]>) -> f64 {
    let coeffs: Vec<(f64, f64)> = shots
        .map(|row| {
            let dot = |p: &Vec<f64>| p.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            (dot(&projector[1]), dot(&projector[2]))
        })
        .collect();
    let n = coeffs.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let m1 = coeffs.iter().map(|c| c.0).sum::<f64>() / nf;
    let m2 = coeffs.iter().map(|c| c.1).sum::<f64>() / nf;
    let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
    for (c1, c2) in &coeffs {
        s11 += (c1 - m1).powi(2);
        s22 += (c2 - m2).powi(2);
        s12 += (c1 - m1) * (c2 - m2);
    }
    let norm = (nf - 1.0) * nf;
    let (s11, s22, s12) = (s11 / norm, s22 / norm, s12 / norm);
    let b = m1.hypot(m2);
    if b == 0.0 {
        return (0.5 * (s11 + s22)).sqrt();
    }
    let (u1, u2) = (m1 / b, m2 / b);
    (u1 * u1 * s11 + u2 * u2 * s22 + 2.0 * u1 * u2 * s12).max(0.0).sqrt()
}

struct LmResult {
    params: Vec<f64>,
    cov: Vec<Vec<f64>>,
    rss: f64,
}

/// Levenberg-Marquardt with a central-difference Jacobian.
fn levenberg_marquardt(
    x: &[f64],
    y: &[f64],
    p0: Vec<f64>,
    model: impl Fn(f64, &[f64]) -> f64,
    what: &'static str,
) -> Result<LmResult> {
    let k = p0.len();
    let rss_of = |p: &[f64]| -> f64 { x.iter().zip(y).map(|(xi, yi)| (yi - model(*xi, p)).powi(2)).sum() };
    let jacobian = |p: &[f64]| -> Vec<Vec<f64>> {
        x.iter()
            .map(|&xi| {
                (0..k)
                    .map(|j| {
                        let h = 1e-6 * p[j].abs().max(1e-6);
                        let mut hi = p.to_vec();
                        let mut lo = p.to_vec();
                        hi[j] += h;
                        lo[j] -= h;
                        (model(xi, &hi) - model(xi, &lo)) / (2.0 * h)
                    })
                    .collect()
            })
            .collect()
    };
    let mut p = p0;
    let mut rss = rss_of(&p);
    if !rss.is_finite() {
        return Err(Error::FitFailed {
            what,
            reason: "initial guess gives non-finite residual".into(),
        });
    }
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let j = jacobian(&p);
        let jtj = normal_matrix(&j);
        let jtr: Vec<f64> = (0..k)
            .map(|i| {
                j.iter()
                    .zip(x.iter().zip(y))
                    .map(|(row, (xi, yi))| row[i] * (yi - model(*xi, &p)))
                    .sum()
            })
            .collect();
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..k {
                a[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            if let Some(step) = solve(a, jtr.clone()) {
                let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
                let r = rss_of(&trial);
                if r.is_finite() && r <= rss {
                    let done = rss - r <= 1e-15 * rss.max(1e-300)
                        || step.iter().zip(&p).all(|(s, v)| s.abs() <= 1e-12 * v.abs().max(1e-12));
                    p = trial;
                    rss = r;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if done {
                        lambda = f64::INFINITY;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved || lambda.is_infinite() {
            break;
        }
    }
    let j = jacobian(&p);
    let dof = x.len().saturating_sub(k).max(1) as f64;
    let cov = invert(&normal_matrix(&j))
        .map(|inv| {
            inv.into_iter()
                .map(|row| row.into_iter().map(|v| v * rss / dof).collect())
                .collect()
        })
        .unwrap_or_else(|| vec![vec![f64::INFINITY; k]; k]);
    Ok(LmResult { params: p, cov, rss })
}

/// Fits `A0 exp(-(τ/T2)^p)`; `fixed_exponent` pins `p`.
pub fn fit_decay(taus: &[f64], amplitudes: &[f64], fixed_exponent: Option<f64>) -> Result<DecayFit> {
    let fail = |reason: &str| Error::FitFailed {
        what: "decay",
        reason: reason.into(),
    };
    if taus.len() != amplitudes.len() {
        return Err(fail("tau and amplitude lengths differ"));
    }
    if taus.len() < 4 {
        return Err(fail("need at least 4 points"));
    }
    if amplitudes.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) || taus.iter().any(|t| !t.is_finite()) {
        return Err(fail("amplitudes must be finite and >= 0"));
    }
    let a_max = amplitudes.iter().copied().fold(0.0, f64::max);
    if a_max == 0.0 {
        return Err(fail("all amplitudes are zero"));
    }
    let t_max = taus.iter().copied().fold(0.0, f64::max);
    if !(t_max > 0.0) {
        return Err(fail("need a positive delay"));
    }

    // Log-linear start from the resolved points.
    let pts: Vec<(f64, f64)> = taus
        .iter()
        .zip(amplitudes)
        .filter(|(_, a)| **a > 1e-3 * a_max)
        .map(|(t, a)| (*t, a.ln()))
        .collect();
    let (a0_guess, t2_guess) = {
        let rows: Vec<Vec<f64>> = pts.iter().map(|(t, _)| vec![1.0, *t]).collect();
        let ys: Vec<f64> = pts.iter().map(|(_, l)| *l).collect();
        match (pts.len() >= 2).then(|| linear_lsq(&rows, &ys)).flatten() {
            Some(l) if l.coef[1] < 0.0 => (l.coef[0].exp(), -1.0 / l.coef[1]),
            _ => (a_max, 1e3 * t_max),
        }
    };
    let log_t2_cap = (1e6 * t_max).ln();
    let p_fixed = fixed_exponent;
    let model = move |t: f64, q: &[f64]| -> f64 {
        let t2 = q[1].min(log_t2_cap).exp();
        let p = p_fixed.unwrap_or_else(|| q[2].clamp(0.1, 10.0));
        q[0] * (-(t.max(0.0) / t2).powf(p)).exp()
    };
    let mut p0 = vec![a0_guess, t2_guess.min(1e5 * t_max).ln()];
    if fixed_exponent.is_none() {
        p0.push(1.0);
    }
    let lm = levenberg_marquardt(taus, amplitudes, p0, model, "decay")?;
    let q = &lm.params;
    let t2 = q[1].min(log_t2_cap).exp();
    let exponent = match fixed_exponent {
        Some(p) => Estimate { value: p, stderr: 0.0 },
        None => Estimate::new(q[2].clamp(0.1, 10.0), lm.cov[2][2]),
    };
    let amplitude0 = Estimate::new(q[0], lm.cov[0][0]);
    // Decay over the sampled range smaller than the residual scatter, or
    // below 0.1% on clean data.
    let rms = (lm.rss / taus.len() as f64).sqrt();
    let resolved_drop = 1.0 - (-(t_max / t2).powf(exponent.value)).exp();
    let noise_drop = (2.0 * rms / amplitude0.value.abs().max(1e-300)).max(1e-3);
    if resolved_drop <= noise_drop {
        let bound = t_max / (-(1.0 - noise_drop.min(0.5)).ln()).powf(1.0 / exponent.value);
        return Ok(DecayFit {
            amplitude0,
            t2: Estimate {
                value: bound,
                stderr: f64::INFINITY,
            },
            exponent,
            t2_lower_bound: true,
        });
    }
    Ok(DecayFit {
        amplitude0,
        t2: Estimate::new(t2, t2 * t2 * lm.cov[1][1]),
        exponent,
        t2_lower_bound: false,
    })
}

/// Fits `a + A cos(2π f t + φ)`: frequency scan with the linear parameters
/// projected out, then a joint refinement.
pub fn fit_sinusoid(t: &[f64], y: &[f64]) -> Result<SinusoidFit> {
    let fail = |reason: &str| Error::FitFailed {
        what: "sinusoid",
        reason: reason.into(),
    };
    if t.len() != y.len() || t.len() < 5 {
        return Err(fail("need at least 5 paired samples"));
    }
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(fail("samples must span a positive interval"));
    }
    let mut sorted = t.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_dt = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let f_lo = 0.25 / span;
    let f_hi = 0.5 / min_dt;
    let design = |f: f64| -> Vec<Vec<f64>> {
        t.iter()
            .map(|ti| {
                let w = TAU * f * ti;
                vec![1.0, w.cos(), w.sin()]
            })
            .collect()
    };
    let n_grid = 4000;
    let mut best = (f64::INFINITY, f_lo);
    for i in 0..=n_grid {
        let f = f_lo + (f_hi - f_lo) * i as f64 / n_grid as f64;
        if let Some(l) = linear_lsq(&design(f), y) {
            if l.rss < best.0 {
                best = (l.rss, f);
            }
        }
    }
    let f0 = best.1;
    let lin = linear_lsq(&design(f0), y).ok_or_else(|| fail("singular design at best frequency"))?;
    let model = |ti: f64, q: &[f64]| -> f64 {
        let w = TAU * q[3] * ti;
        q[0] + q[1] * w.cos() + q[2] * w.sin()
    };
    let lm = levenberg_marquardt(t, y, vec![lin.coef[0], lin.coef[1], lin.coef[2], f0], model, "sinusoid")?;
    let q = &lm.params;
    let cv = &lm.cov;
    let amp = q[1].hypot(q[2]);
    let (var_a, var_phi) = if amp > 0.0 {
        let (u1, u2) = (q[1] / amp, q[2] / amp);
        let va = u1 * u1 * cv[1][1] + u2 * u2 * cv[2][2] + 2.0 * u1 * u2 * cv[1][2];
        let (w1, w2) = (q[2] / (amp * amp), -q[1] / (amp * amp));
        let vp = w1 * w1 * cv[1][1] + w2 * w2 * cv[2][2] + 2.0 * w1 * w2 * cv[1][2];
        (va, vp)
    } else {
        (0.5 * (cv[1][1] + cv[2][2]), f64::INFINITY)
    };
    Ok(SinusoidFit {
        frequency: Estimate::new(q[3].abs(), cv[3][3]),
        amplitude: Estimate::new(amp, var_a),
        phase: Estimate::new((-q[2]).atan2(q[1]), var_phi),
        offset: Estimate::new(q[0], cv[0][0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn phases(n: usize) -> Vec<f64> {
        (0..n).map(|k| TAU * k as f64 / n as f64).collect()
    }

    #[test]
    fn pure_cosine_fringe() {
        let ph = phases(12);
        let y: Vec<f64> = ph.iter().map(|p| 0.3 + (p - 0.7).cos()).collect();
        let f = fit_fringe(&ph, &y).unwrap();
        assert!((f.amplitude.value - 1.0).abs() < 1e-10);
        assert!((f.phase.value - 0.7).abs() < 1e-10);
        assert!((f.offset.value - 0.3).abs() < 1e-10);
    }

    #[test]
    fn constant_fringe_has_no_amplitude() {
        let ph = phases(8);
        let f = fit_fringe(&ph, &[0.5; 8]).unwrap();
        assert!(f.amplitude.value < 1e-12);
    }

    #[test]
    fn fringe_preconditions() {
        assert!(fit_fringe(&phases(4), &[0.0; 4]).is_err());
        let narrow: Vec<f64> = (0..8).map(|k| 0.1 * k as f64).collect();
        assert!(fit_fringe(&narrow, &[0.0; 8]).is_err());
    }

    #[test]
    fn noisy_fringe_within_two_sigma() {
        let ph = phases(24);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let mut hits = 0;
        for _ in 0..200 {
            let y: Vec<f64> = ph
                .iter()
                .map(|p| 0.01 + 0.025 * (p - 1.0).cos() + noise.sample(&mut rng))
                .collect();
            let f = fit_fringe(&ph, &y).unwrap();
            if (f.amplitude.value - 0.025).abs() <= 2.0 * f.amplitude.stderr {
                hits += 1;
            }
        }
        // Two-sigma coverage is about 95%.
        assert!(hits >= 180, "{hits}");
    }

    #[test]
    fn exponential_decay_recovered() {
        let taus: Vec<f64> = (0..8).map(|k| k as f64 * 1e-3).collect();
        let a: Vec<f64> = taus.iter().map(|t| 0.8 * (-t / 5e-3).exp()).collect();
        let f = fit_decay(&taus, &a, Some(1.0)).unwrap();
        assert!((f.t2.value / 5e-3 - 1.0).abs() < 0.05);
        assert!(!f.t2_lower_bound);
        let free = fit_decay(&taus, &a, None).unwrap();
        assert!((free.t2.value / 5e-3 - 1.0).abs() < 0.05);
        assert!((free.exponent.value - 1.0).abs() < 0.05);
    }

    #[test]
    fn gaussian_decay_exponent() {
        let taus: Vec<f64> = (0..15).map(|k| k as f64 * 20e-6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.003).unwrap();
        let a: Vec<f64> = taus
            .iter()
            .map(|t| ((-(t / 150e-6).powi(2)).exp() + noise.sample(&mut rng)).max(0.0))
            .collect();
        let f = fit_decay(&taus, &a, None).unwrap();
        assert!((f.exponent.value - 2.0).abs() < 0.2, "{}", f.exponent.value);
    }

    #[test]
    fn constant_amplitudes_give_lower_bound() {
        let taus = [0.0, 1e-3, 2e-3, 3e-3, 4e-3];
        let f = fit_decay(&taus, &[0.5; 5], Some(1.0)).unwrap();
        assert!(f.t2_lower_bound);
        assert!(f.t2.value > 4e-3);
    }

    #[test]
    fn decay_preconditions() {
        assert!(fit_decay(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4], None).is_err());
        assert!(fit_decay(&[0.0, 1.0, 2.0], &[1.0; 3], None).is_err());
        assert!(fit_decay(&[0.0, 1.0, 2.0, 3.0], &[1.0, -0.1, 0.5, 0.2], None).is_err());
    }

    #[test]
    fn sinusoid_frequency() {
        let t: Vec<f64> = (0..41).map(|k| k as f64 * 1e-6).collect();
        let y: Vec<f64> = t.iter().map(|x| 0.03 + 0.02 * (TAU * 71.4e3 * x + 0.4).cos()).collect();
        let f = fit_sinusoid(&t, &y).unwrap();
        assert!((f.frequency.value - 71.4e3).abs() < 1e-3, "{}", f.frequency.value);
        assert!((f.amplitude.value - 0.02).abs() < 1e-9);
        assert!((f.phase.value - 0.4).abs() < 1e-6);
    }
}
