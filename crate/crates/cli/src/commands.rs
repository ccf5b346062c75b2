use std::f64::consts::TAU;

use rotorspin_core::dynamics::{adiabatic_following, validate_reduction, Rotor, SegmentSpec};
use rotorspin_core::feedforward::{export_waveform, synthesize, GateWindow};
use rotorspin_core::geometry::field_nv_angle;
use rotorspin_core::linalg::Matrix9;
use rotorspin_core::protocols::{phase_grid, DecayFit, Experiment, JitterModel, ProtocolResult};
use rotorspin_core::spectral::{
    augmentation_factor, bare_nuclear_element, build_track, rf_operator, transition_frequency, AdiabaticTrack,
};
use rotorspin_core::spincore::{basis_index, basis_quantum_numbers};
use rotorspin_core::Cplx;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{svg, write_json, Series, Sink, Table};
use crate::{CliError, Command, Figure};

/// Adiabatic check thresholds.
const MIN_OVERLAP: f64 = 0.999;
const MAX_POPULATION_ERROR: f64 = 1e-3;
/// Full vs reduced agreement on a calibrated π-pulse. Leakage to the
/// neighbouring nuclear line keeps this a few percent.
const MAX_REDUCTION_DEVIATION: f64 = 3e-2;

pub struct Ctx {
    pub cfg: RunConfig,
    pub points: Option<usize>,
    pub sink: Sink,
    label: String,
    primary: String,
}

impl Ctx {
    pub fn new(cfg: RunConfig, points: Option<usize>, sink: Sink) -> Self {
        Self {
            cfg,
            points,
            sink,
            label: String::new(),
            primary: String::new(),
        }
    }

    fn comments(&self) -> Vec<String> {
        vec![
            format!("rotorspin {}", self.label),
            format!("config_sha256={}", self.cfg.hash()),
            format!("seed={}", self.cfg.seed),
        ]
    }

    fn table(&mut self, suffix: Option<&str>, table: &Table) -> Result<(), CliError> {
        let path = self.sink.path(&self.primary, suffix, "csv");
        let text = table.render(&self.comments());
        self.sink.emit(path, &text)
    }

    fn plot(&mut self, suffix: Option<&str>, title: &str, x: &str, y: &str, series: &[Series]) -> Result<(), CliError> {
        if !self.sink.svg {
            return Ok(());
        }
        let path = self.sink.path(&self.primary, suffix, "svg");
        let text = svg(title, x, y, series);
        self.sink.emit(path, &text)
    }

    fn summary(&mut self, results: Value) -> Result<(), CliError> {
        let path = self.sink.path(&self.primary, None, "json");
        let mut files: Vec<String> = self
            .sink
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        files.sort();
        let value = json!({
            "command": self.label,
            "seed": self.cfg.seed,
            "config_sha256": self.cfg.hash(),
            "config": self.cfg,
            "results": results,
            "files": files,
        });
        write_json(&path, &value)?;
        self.sink.written.push(path);
        Ok(())
    }

    fn experiment(&self) -> Result<Experiment, CliError> {
        Ok(Experiment::new(self.cfg.experiment()?)?)
    }

    fn points_or(&self, default: usize) -> usize {
        self.points.unwrap_or(default)
    }
}

pub fn run(ctx: &mut Ctx, command: &Command) -> Result<(), CliError> {
    let (label, primary) = match command {
        Command::Reproduce { figure } => (format!("reproduce {}", figure.name()), figure.name().to_string()),
        other => (other.name().to_string(), other.name().replace('-', "_")),
    };
    ctx.label = label;
    ctx.primary = primary;
    match command {
        Command::Spectrum => spectrum(ctx),
        Command::Projections => projections(ctx),
        Command::Feedforward { periods } => feedforward(ctx, *periods),
        Command::Rabi => rabi(ctx),
        Command::Ramsey => fringe_command(ctx, Fringes::Ramsey),
        Command::Echo => fringe_command(ctx, Fringes::Echo),
        Command::EchoMultiperiod => fringe_command(ctx, Fringes::MultiPeriod),
        Command::Spinlock => fringe_command(ctx, Fringes::SpinLock),
        Command::Validate => validate(ctx),
        Command::Reproduce { figure } => match figure {
            Figure::Fig3a => fig3a(ctx),
            Figure::Fig3c => fig3c(ctx),
            Figure::Fig4c => fig4c(ctx),
            Figure::Fig5 => fig5(ctx),
            Figure::Fig6 => fig6(ctx),
        },
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![b],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)))
}

/// Track, drive operator and bare-coupling normalisation for spectral output.
struct Spectral {
    track: AdiabaticTrack<f64>,
    rf: Matrix9<f64>,
    bare: f64,
}

impl Spectral {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let c = cfg.constants()?;
        let geom = cfg.geometry();
        geom.validate()?;
        let track = build_track(&geom, &c, cfg.track_samples)?;
        let axis = cfg.rf_axis().resolve(&geom);
        Ok(Self {
            rf: rf_operator(&axis, &c)?,
            bare: c.gamma_n.abs() * bare_nuclear_element(&axis),
            track,
        })
    }

    /// Energies (Hz, label order), η ↔ ζ frequency, α′ and the label
    /// eigenvectors at `phi`.
    fn at(&self, phi: f64) -> Result<([f64; 9], f64, f64, Matrix9<f64>), CliError> {
        let (e, v) = self.track.state_at(phi)?;
        let (eta, zeta) = (self.track.eta(), self.track.zeta());
        let hz = e.map(|x| x / TAU);
        let alpha = self.rf.matrix_element(&v.column(zeta), &v.column(eta)).norm() / self.bare;
        Ok((hz, hz[zeta] - hz[eta], alpha, v))
    }

    fn theta_deg(&self, phi: f64) -> f64 {
        field_nv_angle(phi, &self.track.geometry).to_degrees()
    }

    fn overview(&self, cfg: &RunConfig) -> Result<Value, CliError> {
        let t = &self.track;
        let f = transition_frequency(t, (t.eta(), t.zeta()));
        let (flo, fhi) = min_max(&f);
        let axis = cfg.rf_axis().resolve(&t.geometry);
        let alpha = augmentation_factor(t, &axis, &t.constants)?;
        let (alo, ahi) = min_max(&alpha);
        let max_theta = (0..t.len()).map(|j| t.field_angle(j)).fold(0.0, f64::max).to_degrees();
        Ok(json!({
            "f_transition_aligned_hz": f[0],
            "f_transition_min_hz": flo,
            "f_transition_max_hz": fhi,
            "fm_depth": (fhi - flo) / (0.5 * (fhi + flo)),
            "alpha_prime_aligned": alpha[0],
            "alpha_prime_min": alo,
            "alpha_prime_max": ahi,
            "alpha_prime_ratio": ahi / alo,
            "max_field_angle_deg": max_theta,
            "min_neighbor_overlap": t.min_neighbor_overlap(),
        }))
    }
}

fn spectrum(ctx: &mut Ctx) -> Result<(), CliError> {
    let sp = Spectral::new(&ctx.cfg)?;
    let n = ctx.points_or(ctx.cfg.spectrum_points);
    let mut cols = vec!["phi_rad".to_string(), "theta_deg".to_string()];
    cols.extend((1..=9).map(|k| format!("E_{k}")));
    cols.extend(["f_transition".to_string(), "alpha_prime".to_string()]);
    let mut table = Table::new(&cols);
    for j in 0..n {
        let phi = TAU * j as f64 / n as f64;
        let (e, f, alpha, _) = sp.at(phi)?;
        let mut row = vec![phi, sp.theta_deg(phi)];
        row.extend(e);
        row.extend([f, alpha]);
        table.push(row);
    }
    ctx.table(None, &table)?;
    let phi = table.column("phi_rad");
    ctx.plot(
        None,
        "eta-zeta transition",
        "rotation angle (rad)",
        "frequency (Hz)",
        &[Series {
            name: "f_transition",
            x: &phi,
            y: &table.column("f_transition"),
        }],
    )?;
    ctx.plot(
        Some("alpha"),
        "gyromagnetic augmentation",
        "rotation angle (rad)",
        "alpha'",
        &[Series {
            name: "alpha_prime",
            x: &phi,
            y: &table.column("alpha_prime"),
        }],
    )?;
    let overview = sp.overview(&ctx.cfg)?;
    ctx.summary(json!({ "rows": n, "track": overview }))
}

fn state_name(prefix: &str, k: usize) -> String {
    let (ms, mi) = basis_quantum_numbers(k);
    format!("{prefix}_ms{ms:+}_mi{mi:+}")
}

fn projection_table(sp: &Spectral, phis: &[f64], times: Option<&[f64]>, labels: &[(&str, usize)]) -> Result<Table, CliError> {
    let mut cols = Vec::new();
    if times.is_some() {
        cols.push("t_s".to_string());
    }
    cols.extend(["phi_rad".to_string(), "theta_deg".to_string()]);
    for (name, _) in labels {
        cols.extend((0..9).map(|k| state_name(name, k)));
    }
    let mut table = Table::new(&cols);
    for (j, &phi) in phis.iter().enumerate() {
        let (_, _, _, v) = sp.at(phi)?;
        let mut row = Vec::with_capacity(cols.len());
        if let Some(t) = times {
            row.push(t[j]);
        }
        row.extend([phi, sp.theta_deg(phi)]);
        for (_, label) in labels {
            let col = v.column(*label);
            row.extend(col.0.iter().map(|a| a.norm_sqr()));
        }
        table.push(row);
    }
    Ok(table)
}

fn projection_plot(ctx: &mut Ctx, table: &Table, x_col: &str, x_label: &str) -> Result<(), CliError> {
    let x = table.column(x_col);
    let names = [0, 1, -1].map(|mi| state_name("eta", basis_index(0, mi)));
    let ys: Vec<Vec<f64>> = names.iter().map(|n| table.column(n)).collect();
    let series: Vec<Series> = names
        .iter()
        .zip(&ys)
        .map(|(n, y)| Series { name: n, x: &x, y })
        .collect();
    ctx.plot(None, "bare-state weights of eta", x_label, "weight", &series)
}

fn projections(ctx: &mut Ctx) -> Result<(), CliError> {
    let sp = Spectral::new(&ctx.cfg)?;
    let n = ctx.points_or(ctx.cfg.spectrum_points);
    let phis: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
    let labels = [("eta", sp.track.eta()), ("zeta", sp.track.zeta())];
    let table = projection_table(&sp, &phis, None, &labels)?;
    ctx.table(None, &table)?;
    projection_plot(ctx, &table, "phi_rad", "rotation angle (rad)")?;
    let (_, _, _, v) = sp.at(std::f64::consts::PI)?;
    let eta = v.column(sp.track.eta());
    let w = |mi: i8| eta.0[basis_index(0, mi)].norm_sqr();
    ctx.summary(json!({
        "rows": n,
        "half_turn_eta": { "ms0_mi+1": w(1), "ms0_mi0": w(0), "ms0_mi-1": w(-1) },
    }))
}

fn feedforward(ctx: &mut Ctx, periods: Option<usize>) -> Result<(), CliError> {
    let ex = ctx.experiment()?;
    let periods = periods.unwrap_or(ctx.cfg.feedforward_periods);
    if periods == 0 {
        return Err(CliError::Config("invalid `periods`: must be at least 1".into()));
    }
    let profile = ex.profile.with_periods(periods);
    let gates = [GateWindow::new(profile.start(), profile.duration(), 0.0)];
    let wave = synthesize(&profile, &gates, ctx.cfg.sample_rate_hz)?;
    let path = ctx.sink.path(&ctx.primary, None, "csv");
    export_waveform(&wave, &path)?;
    ctx.sink.written.push(path);

    let n = ctx.points_or(1000) * periods;
    let mut table = Table::new(&["t_s", "frequency_hz", "phase_rad"]);
    for t in linspace(profile.start(), profile.start() + profile.duration(), n + 1) {
        table.push(vec![t, profile.frequency_at(t), profile.phase_at(t)]);
    }
    ctx.table(Some("profile"), &table)?;
    let t = table.column("t_s");
    ctx.plot(
        None,
        "feedforward carrier",
        "time (s)",
        "frequency (Hz)",
        &[Series {
            name: "frequency",
            x: &t,
            y: &table.column("frequency_hz"),
        }],
    )?;
    ctx.summary(json!({
        "periods": periods,
        "sample_rate_hz": wave.sample_rate_hz,
        "samples": wave.len(),
        "min_frequency_hz": profile.min_frequency(),
        "max_frequency_hz": profile.max_frequency(),
        "mean_frequency_hz": profile.mean_frequency(),
        "phase_per_period_rad": profile.phase_per_period(),
        "rf_gauss": ex.rf_gauss,
    }))
}

fn rabi(ctx: &mut Ctx) -> Result<(), CliError> {
    let ex = ctx.experiment()?;
    let t_d = ctx.cfg.rabi_t_d_s;
    let durations = ex.rabi_durations(t_d, ctx.cfg.rabi_cycles, ctx.points_or(ctx.cfg.rabi_points));
    let r = ex.rabi(t_d, &durations)?;
    let mut table = Table::new(&["duration_s", "signal", "stderr"]);
    for i in 0..r.x.len() {
        table.push(vec![r.x[i], r.signal[i], r.stderr[i]]);
    }
    ctx.table(None, &table)?;
    ctx.plot(
        None,
        "Rabi oscillation",
        "pulse duration (s)",
        "signal",
        &[Series {
            name: "signal",
            x: &r.x,
            y: &r.signal,
        }],
    )?;
    let fit = r.rabi_fit.map(|f| {
        json!({
            "frequency_hz": f.frequency.value,
            "frequency_stderr_hz": f.frequency.stderr,
            "pi_time_s": 0.5 / f.frequency.value,
            "amplitude": f.amplitude.value,
            "offset": f.offset.value,
        })
    });
    ctx.summary(json!({
        "t_d_s": t_d,
        "rf_gauss": ex.rf_gauss,
        "bright_signal": r.bright_signal,
        "shots": r.shots,
        "fit": fit,
    }))
}

fn decay_json(fit: &Option<DecayFit>) -> Value {
    match fit {
        None => Value::Null,
        Some(d) => json!({
            "amplitude0": d.amplitude0.value,
            "amplitude0_stderr": d.amplitude0.stderr,
            "t2_s": d.t2.value,
            "t2_stderr_s": d.t2.stderr,
            "exponent": d.exponent.value,
            "exponent_stderr": d.exponent.stderr,
            "t2_lower_bound": d.t2_lower_bound,
        }),
    }
}

/// Fringe amplitudes, plus a long-format table of every fringe point.
fn fringe_tables(r: &ProtocolResult, lead: &[(&str, Vec<f64>)]) -> (Table, Table) {
    let mut cols: Vec<&str> = lead.iter().map(|(n, _)| *n).collect();
    cols.extend([r.x_name, "amplitude", "stderr", "visibility", "fringe_phase_rad", "fringe_phase_stderr"]);
    let mut main = Table::new(&cols);
    let mut long_cols: Vec<&str> = lead.iter().map(|(n, _)| *n).collect();
    long_cols.extend([r.x_name, "phase_rad", "signal", "stderr"]);
    let mut long = Table::new(&long_cols);
    for (i, f) in r.fringes.iter().enumerate() {
        let lead_vals: Vec<f64> = lead.iter().map(|(_, v)| v[i]).collect();
        let mut row = lead_vals.clone();
        row.extend([
            r.x[i],
            r.signal[i],
            r.stderr[i],
            r.visibility(i),
            f.fit.phase.value,
            f.fit.phase.stderr,
        ]);
        main.push(row);
        for k in 0..f.phases.len() {
            let mut row = lead_vals.clone();
            row.extend([r.x[i], f.phases[k], f.signal[k], f.stderr[k]]);
            long.push(row);
        }
    }
    (main, long)
}

fn result_json(r: &ProtocolResult) -> Value {
    json!({
        "protocol": r.protocol.name(),
        "shots": r.shots,
        "bright_signal": r.bright_signal,
        "decay_fit": decay_json(&r.decay_fit),
    })
}

#[derive(Clone, Copy)]
enum Fringes {
    Ramsey,
    Echo,
    MultiPeriod,
    SpinLock,
}

fn fringe_command(ctx: &mut Ctx, kind: Fringes) -> Result<(), CliError> {
    let ex = ctx.experiment()?;
    let cfg = &ctx.cfg;
    let phases = phase_grid(cfg.phase_points);
    let mut lead = Vec::new();
    let mut extra = json!({});
    let r = match kind {
        Fringes::Ramsey => {
            let taus = linspace(0.0, cfg.ramsey_tau_max_s, ctx.points_or(cfg.ramsey_points));
            extra["t_d_s"] = json!(cfg.ramsey_t_d_s);
            ex.ramsey(cfg.ramsey_t_d_s, &taus, &phases)?
        }
        Fringes::Echo => {
            let taus = linspace(0.0, cfg.echo_tau_max_s, ctx.points_or(cfg.echo_points));
            extra["t_d_s"] = json!(cfg.echo_t_d_s);
            ex.spin_echo(cfg.echo_t_d_s, &taus, &phases)?
        }
        Fringes::MultiPeriod => {
            let periods: Vec<usize> = (0..=cfg.multiperiod_max_periods).step_by(2).collect();
            lead.push(("n_periods", periods.iter().map(|n| *n as f64).collect()));
            ex.multi_period_echo(&periods, &phases)?
        }
        Fringes::SpinLock => {
            let max = cfg.spinlock_max_s.unwrap_or_else(|| ex.full_period_lock());
            let locks = linspace(0.0, max, ctx.points_or(cfg.spinlock_points));
            extra["lock_amplitude"] = json!(cfg.lock_amplitude);
            ex.spin_lock(&locks, &phases, cfg.lock_amplitude)?
        }
    };
    let (main, long) = fringe_tables(&r, &lead);
    ctx.table(None, &main)?;
    ctx.table(Some("fringes"), &long)?;
    ctx.plot(
        None,
        r.protocol.name(),
        r.x_name,
        "fringe amplitude",
        &[Series {
            name: "amplitude",
            x: &r.x,
            y: &r.signal,
        }],
    )?;
    let mut results = result_json(&r);
    results["parameters"] = extra;
    ctx.summary(results)
}

fn validate(ctx: &mut Ctx) -> Result<(), CliError> {
    let ex = ctx.experiment()?;
    let cfg = &ctx.cfg;
    let axis = cfg.rf_axis().resolve(&cfg.geometry());
    let spec = SegmentSpec {
        constants: cfg.constants()?,
        geometry: cfg.geometry(),
        rotor: Rotor::Stationary { phi: 0.0 },
        t_start: 0.0,
        duration: ex.pulse_duration(std::f64::consts::PI, 0.0).min(20e-6),
        rf_gauss: ex.rf_gauss,
        axis,
        detuning_hz: 0.0,
        track_samples: 1024,
        checkpoints: 70,
        substeps: 0,
    };
    let red = validate_reduction(&spec)?;
    let mut table = Table::new(&["t_s", "p_zeta_full", "p_zeta_reduced"]);
    for i in 0..red.times.len() {
        table.push(vec![red.times[i], red.full[i], red.reduced[i]]);
    }
    ctx.table(Some("reduction"), &table)?;

    let track = &ex.track;
    let mut amps = [Cplx::new(0.0, 0.0); 9];
    amps[track.eta()] = Cplx::new(0.6, 0.0);
    amps[track.zeta()] = Cplx::new(0.0, 0.8);
    let adi = adiabatic_following(track, &ctx.cfg.rotation(), &amps, 100e-6, 5e-6)?;
    let mut table = Table::new(&["t_s", "overlap"]);
    for (t, o) in adi.times.iter().zip(&adi.overlaps) {
        table.push(vec![*t, *o]);
    }
    ctx.table(Some("adiabatic"), &table)?;
    ctx.plot(
        Some("adiabatic"),
        "undriven nine-level overlap with the track",
        "time (s)",
        "overlap",
        &[Series {
            name: "overlap",
            x: &adi.times,
            y: &adi.overlaps,
        }],
    )?;

    let reduction_ok = red.max_population_deviation <= MAX_REDUCTION_DEVIATION;
    let adiabatic_ok = adi.min_overlap > MIN_OVERLAP && adi.population_error < MAX_POPULATION_ERROR;
    ctx.summary(json!({
        "reduction": {
            "pulse_s": spec.duration,
            "max_population_deviation": red.max_population_deviation,
            "limit": MAX_REDUCTION_DEVIATION,
            "pass": reduction_ok,
        },
        "adiabatic": {
            "min_overlap": adi.min_overlap,
            "population_error": adi.population_error,
            "pass": adiabatic_ok,
        },
    }))?;
    if reduction_ok && adiabatic_ok {
        Ok(())
    } else {
        Err(CliError::Check {
            module: "dynamics",
            what: "validation thresholds not met; see the summary".into(),
        })
    }
}

/// Times over one period, both ends included.
fn period_grid(ctx: &Ctx, default: usize) -> (Vec<f64>, Vec<f64>) {
    let rot = ctx.cfg.rotation();
    let n = ctx.points_or(default).max(2);
    let times = linspace(0.0, rot.period_s, n);
    let phis = times.iter().map(|t| TAU * t / rot.period_s).collect();
    (times, phis)
}

fn fig3a(ctx: &mut Ctx) -> Result<(), CliError> {
    let sp = Spectral::new(&ctx.cfg)?;
    let (times, phis) = period_grid(ctx, 1001);
    let mut table = Table::new(&["t_s", "phi_rad", "theta_deg", "f_transition_hz", "alpha_prime"]);
    for (t, phi) in times.iter().zip(&phis) {
        let (_, f, alpha, _) = sp.at(*phi)?;
        table.push(vec![*t, *phi, sp.theta_deg(*phi), f, alpha]);
    }
    ctx.table(None, &table)?;
    ctx.plot(
        None,
        "transition frequency over one rotation",
        "time (s)",
        "frequency (Hz)",
        &[Series {
            name: "f_transition",
            x: &times,
            y: &table.column("f_transition_hz"),
        }],
    )?;
    ctx.plot(
        Some("alpha"),
        "augmentation over one rotation",
        "time (s)",
        "alpha'",
        &[Series {
            name: "alpha_prime",
            x: &times,
            y: &table.column("alpha_prime"),
        }],
    )?;
    let overview = sp.overview(&ctx.cfg)?;
    ctx.summary(json!({ "rows": times.len(), "track": overview }))
}

fn fig3c(ctx: &mut Ctx) -> Result<(), CliError> {
    let sp = Spectral::new(&ctx.cfg)?;
    let (times, phis) = period_grid(ctx, 1001);
    let table = projection_table(&sp, &phis, Some(&times), &[("eta", sp.track.eta())])?;
    ctx.table(None, &table)?;
    projection_plot(ctx, &table, "t_s", "time (s)")?;
    ctx.summary(json!({ "rows": times.len() }))
}

/// Mean nominal Rabi frequency (Hz) over `[t, t + d]`.
fn window_rabi_hz(ex: &Experiment, t: f64, d: f64) -> f64 {
    let n = 400;
    let h = d / n as f64;
    let sum: f64 = (0..=n)
        .map(|k| ex.rabi_at(t + k as f64 * h) * if k == 0 || k == n { 0.5 } else { 1.0 })
        .sum();
    sum * h / d / TAU
}

fn fig4c(ctx: &mut Ctx) -> Result<(), CliError> {
    let ex = ctx.experiment()?;
    let points = ctx.points_or(41);
    let delays = ctx.cfg.fig4c_t_d_s.clone();
    let mut traces = Table::new(&["t_d_s", "duration_s", "signal", "stderr"]);
    let mut fits = Vec::new();
    for &t_d in &delays {
        let durations = ex.rabi_durations(t_d, ctx.cfg.fig4c_cycles, points);
        let r = ex.rabi(t_d, &durations)?;
        for i in 0..r.x.len() {
            traces.push(vec![t_d, r.x[i], r.signal[i], r.stderr[i]]);
        }
        let fit = r.rabi_fit.ok_or_else(|| CliError::Check {
            module: "protocols",
            what: format!("no Rabi fit at t_D = {t_d} s"),
        })?;
        let d_max = durations.last().copied().unwrap_or(0.0);
        fits.push((t_d, fit.frequency, window_rabi_hz(&ex, t_d, d_max), ex.rabi_at(t_d) / TAU));
    }
    let (_, f0, w0, a0) = fits[0];
    let mut table = Table::new(&[
        "t_d_s",
        "rabi_hz",
        "rabi_stderr_hz",
        "ratio",
        "ratio_stderr",
        "window_ratio",
        "alpha_ratio",
    ]);
    for (t_d, f, w, a) in &fits {
        let ratio = f.value / f0.value;
        let rel = ((f.stderr / f.value).powi(2) + (f0.stderr / f0.value).powi(2)).sqrt();
        table.push(vec![*t_d, f.value, f.stderr, ratio, ratio * rel, w / w0, a / a0]);
    }
    ctx.table(None, &table)?;
    ctx.table(Some("traces"), &traces)?;
    ctx.plot(
        None,
        "Rabi frequency ratio against delay",
        "t_D (s)",
        "ratio to first delay",
        &[
            Series {
                name: "fitted",
                x: &delays,
                y: &table.column("ratio"),
            },
            Series {
                name: "window-averaged model",
                x: &delays,
                y: &table.column("window_ratio"),
            },
            Series {
                name: "instantaneous alpha'",
                x: &delays,
                y: &table.column("alpha_ratio"),
            },
        ],
    )?;
    ctx.summary(json!({
        "rf_gauss": ex.rf_gauss,
        "shots": ctx.cfg.shots,
        "reference_rabi_hz": f0.value,
        "reference_window_hz": w0,
    }))
}

fn fig5(ctx: &mut Ctx) -> Result<(), CliError> {
    let ex = ctx.experiment()?;
    let cfg = ctx.cfg.clone();
    let phases = phase_grid(cfg.phase_points);
    let delays = [0.0, 200e-6];
    let mut results = json!({});

    for (name, tau_max, points) in [
        ("ramsey", cfg.ramsey_tau_max_s, cfg.ramsey_points),
        ("echo", cfg.echo_tau_max_s, cfg.echo_points),
    ] {
        let taus = linspace(0.0, tau_max, ctx.points_or(points));
        let mut main: Option<Table> = None;
        let mut fits = Vec::new();
        for &t_d in &delays {
            let r = if name == "ramsey" {
                ex.ramsey(t_d, &taus, &phases)?
            } else {
                ex.spin_echo(t_d, &taus, &phases)?
            };
            let (t, _) = fringe_tables(&r, &[("t_d_s", vec![t_d; r.x.len()])]);
            match &mut main {
                None => main = Some(t),
                Some(m) => m.rows.extend(t.rows),
            }
            fits.push(json!({ "t_d_s": t_d, "decay_fit": decay_json(&r.decay_fit) }));
        }
        ctx.table(Some(name), main.as_ref().expect("two delays"))?;
        results[name] = Value::Array(fits);
    }

    let periods: Vec<usize> = (0..=cfg.multiperiod_max_periods).step_by(2).collect();
    let bare = ex.multi_period_echo(&periods, &phases)?;
    let mut enveloped_cfg = cfg.experiment()?;
    enveloped_cfg.envelopes.t2_s = Some(cfg.fig5_intrinsic_t2_s);
    let enveloped = Experiment::new(enveloped_cfg)?.multi_period_echo(&periods, &phases)?;
    let mut table = Table::new(&[
        "n_periods",
        "tau_s",
        "amplitude",
        "stderr",
        "visibility",
        "amplitude_enveloped",
        "stderr_enveloped",
        "visibility_enveloped",
    ]);
    for (i, n) in periods.iter().enumerate() {
        table.push(vec![
            *n as f64,
            bare.x[i],
            bare.signal[i],
            bare.stderr[i],
            bare.visibility(i),
            enveloped.signal[i],
            enveloped.stderr[i],
            enveloped.visibility(i),
        ]);
    }
    ctx.table(Some("multiperiod"), &table)?;
    ctx.plot(
        Some("multiperiod"),
        "multi-period echo",
        "tau (s)",
        "fringe amplitude",
        &[
            Series {
                name: "jitter only",
                x: &bare.x,
                y: &bare.signal,
            },
            Series {
                name: "with intrinsic T2",
                x: &enveloped.x,
                y: &enveloped.signal,
            },
        ],
    )?;
    results["multiperiod"] = json!({
        "decay_fit": decay_json(&bare.decay_fit),
        "intrinsic_t2_s": cfg.fig5_intrinsic_t2_s,
        "decay_fit_enveloped": decay_json(&enveloped.decay_fit),
    });
    results["shots"] = json!(cfg.shots);
    ctx.summary(results)
}

fn fig6(ctx: &mut Ctx) -> Result<(), CliError> {
    let ex = ctx.experiment()?;
    let cfg = ctx.cfg.clone();
    let phases = phase_grid(cfg.phase_points);
    let max = cfg.spinlock_max_s.unwrap_or_else(|| ex.full_period_lock());
    let locks = linspace(0.0, max, ctx.points_or(cfg.spinlock_points));
    let locked = ex.spin_lock(&locks, &phases, cfg.lock_amplitude)?;
    let unlocked = ex.spin_lock(&locks, &phases, 0.0)?;
    let mut clean_cfg = cfg.experiment()?;
    clean_cfg.jitter = JitterModel::none();
    let clean = Experiment::new(clean_cfg)?.spin_lock(&locks, &phases, cfg.lock_amplitude)?;
    let mut table = Table::new(&[
        "lock_s",
        "amplitude",
        "stderr",
        "amplitude_nojitter",
        "retention",
        "amplitude_unlocked",
        "stderr_unlocked",
    ]);
    for i in 0..locks.len() {
        table.push(vec![
            locked.x[i],
            locked.signal[i],
            locked.stderr[i],
            clean.signal[i],
            locked.signal[i] / clean.signal[i],
            unlocked.signal[i],
            unlocked.stderr[i],
        ]);
    }
    ctx.table(None, &table)?;
    ctx.plot(
        None,
        "spin-lock under rotation jitter",
        "lock duration (s)",
        "fringe amplitude",
        &[
            Series {
                name: "locked",
                x: &locked.x,
                y: &locked.signal,
            },
            Series {
                name: "locked, no jitter",
                x: &clean.x,
                y: &clean.signal,
            },
            Series {
                name: "unlocked",
                x: &unlocked.x,
                y: &unlocked.signal,
            },
        ],
    )?;
    let last = locks.len() - 1;
    ctx.summary(json!({
        "shots": cfg.shots,
        "lock_amplitude": cfg.lock_amplitude,
        "full_period_lock_s": ex.full_period_lock(),
        "final_retention": locked.signal[last] / clean.signal[last],
        "decay_fit_unlocked": decay_json(&unlocked.decay_fit),
    }))
}
