//! CSV, JSON and SVG writers. Everything is formatted by hand so the bytes
//! depend only on the values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::CliError;

/// Round-trip exact: 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let k = self.columns.iter().position(|c| c == name).expect("known column");
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn render(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            writeln!(s, "# {c}").unwrap();
        }
        writeln!(s, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| float(*x)).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    write(path, &text)
}

pub struct Series<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Polylines on a shared pair of axes.
pub fn svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let finite = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
    let xs: Vec<f64> = series.iter().flat_map(|s| finite(s.x)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| finite(s.y)).collect();
    let bounds = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= 0.0 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0).unwrap();
    writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    )
    .unwrap();
    for (v, x, anchor) in [(x0, m, "start"), (x1, w - m, "end")] {
        writeln!(s, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{v:.4e}</text>"#, h - m + 16.0).unwrap();
    }
    for (v, y) in [(y0, h - m), (y1, m)] {
        writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{v:.3e}</text>"#, m - 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, w / 2.0, h - 18.0).unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    )
    .unwrap();
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = ser
            .x
            .iter()
            .zip(ser.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            m + 8.0,
            m + 14.0 * (i as f64 + 1.0),
            ser.name
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Where a command writes: a directory, or an explicit `.csv` path whose
/// stem replaces the command's own.
pub struct Sink {
    pub dir: PathBuf,
    pub stem: Option<String>,
    pub svg: bool,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(out: Option<&Path>, fallback: Option<&str>, svg: bool) -> Self {
        let out = out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(fallback.unwrap_or("rotorspin-out")));
        let (dir, stem) = if out.extension().is_some_and(|e| e == "csv") {
            (
                out.parent().map(Path::to_path_buf).unwrap_or_default(),
                out.file_stem().map(|s| s.to_string_lossy().into_owned()),
            )
        } else {
            (out, None)
        };
        Self {
            dir,
            stem,
            svg,
            written: Vec::new(),
        }
    }

    /// `<stem>.<ext>` or `<stem>_<suffix>.<ext>`.
    pub fn path(&self, primary: &str, suffix: Option<&str>, ext: &str) -> PathBuf {
        let base = self.stem.as_deref().unwrap_or(primary);
        match suffix {
            Some(s) => self.dir.join(format!("{base}_{s}.{ext}")),
            None => self.dir.join(format!("{base}.{ext}")),
        }
    }

    pub fn emit(&mut self, path: PathBuf, text: &str) -> Result<(), CliError> {
        write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn table_renders_header_and_comments() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0, 2.0]);
        let text = t.render(&["hash abc".to_string()]);
        assert_eq!(text, "# hash abc\na,b\n1.0000000000000000e0,2.0000000000000000e0\n");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, f64::NAN, 3.0];
        let s = svg("t", "x", "y", &[Series { name: "a", x: &x, y: &y }, Series { name: "b", x: &x, y: &x }]);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn sink_paths() {
        let s = Sink::new(Some(Path::new("dir/wave.csv")), None, false);
        assert_eq!(s.path("feedforward", None, "csv"), Path::new("dir/wave.csv"));
        assert_eq!(s.path("feedforward", Some("profile"), "csv"), Path::new("dir/wave_profile.csv"));
        let s = Sink::new(None, Some("x"), false);
        assert_eq!(s.path("rabi", None, "json"), Path::new("x/rabi.json"));
    }
}
