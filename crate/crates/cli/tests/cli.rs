use std::path::Path;
use std::process::{Command, Output};

fn rotorspin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotorspin"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROTORSPIN_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn unknown_subcommand_is_misuse() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotorspin(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = rotorspin(dir.path(), &["spectrum", "--points", "many"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_rows_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotorspin(dir.path(), &["spectrum", "--points", "360", "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("s/spectrum.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "phi_rad,theta_deg,E_1,E_2,E_3,E_4,E_5,E_6,E_7,E_8,E_9,f_transition,alpha_prime"
    );
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 360);
    let first: Vec<f64> = rows[0].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first.len(), 13);
    assert!((first[11] / 5.1e6 - 1.0).abs() < 0.02);
}

#[test]
fn summary_echoes_defaults_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.json"), "{}").unwrap();
    let o = rotorspin(dir.path(), &["spectrum", "--config", "empty.json", "--seed", "11", "--points", "8", "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/spectrum.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["config"]["b_gauss"], 480.0);
    assert_eq!(v["config"]["period_s"], 1e-3);
    assert_eq!(v["config"]["jitter_sigma_s"], 323e-9);
    assert!((v["config"]["cone_angle_deg"].as_f64().unwrap() - 54.7356).abs() < 1e-4);
}

#[test]
fn saved_config_reloads_to_the_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"b_gauss": 470, "decay_exponent": null, "rf_axis": [1, 0.2, 0]}"#).unwrap();
    let o = rotorspin(dir.path(), &["spectrum", "--config", "c.json", "--points", "4", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/spectrum.json")).unwrap()).unwrap();
    std::fs::write(dir.path().join("saved.json"), first["config"].to_string()).unwrap();
    let o = rotorspin(dir.path(), &["spectrum", "--config", "saved.json", "--points", "4", "--out", "b"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b/spectrum.json")).unwrap()).unwrap();
    assert_eq!(first["config"], second["config"]);
    assert_eq!(first["config_sha256"], second["config_sha256"]);
    assert_eq!(second["config"]["decay_exponent"], serde_json::Value::Null);
}

#[test]
fn config_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"b_gauss": -1}"#, "b_gauss"),
        (r#"{"b_gaus": 3}"#, "b_gaus"),
        ("{\n  \"seed\": 1,\n  \"shots\": ,\n}", "line 3"),
        (r#"{"jitter_independent_sigma_s": 1e-6}"#, "jitter_independent_sigma_s"),
    ];
    for (text, needle) in cases {
        std::fs::write(dir.path().join("bad.json"), text).unwrap();
        let o = rotorspin(dir.path(), &["spectrum", "--config", "bad.json", "--points", "4"]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        let err = stderr(&o);
        assert!(err.contains("[config]") && err.contains(needle), "{err}");
    }
}

#[test]
fn runtime_errors_name_the_module() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("slow.json"), r#"{"sample_rate_hz": 1e6}"#).unwrap();
    let o = rotorspin(dir.path(), &["feedforward", "--config", "slow.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("[feedforward]"), "{}", stderr(&o));

    std::fs::write(dir.path().join("late.json"), r#"{"rabi_t_d_s": 0.0009, "rabi_cycles": 40}"#).unwrap();
    let o = rotorspin(dir.path(), &["rabi", "--config", "late.json", "--shots", "2"]);
    assert!(o.status.success(), "durations are cut at the readout: {}", stderr(&o));

    let o = rotorspin(dir.path(), &["spectrum", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("[cli]"));
}

#[test]
fn feedforward_writes_one_period_at_the_default_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotorspin(dir.path(), &["feedforward", "--out", "wave.csv", "--svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("wave.csv")).unwrap();
    assert!(text.starts_with("# sample_rate_hz="));
    assert_eq!(text.lines().count(), 100_001);
    assert!(dir.path().join("wave_profile.csv").exists());
    assert!(dir.path().join("wave.json").exists());
    assert!(dir.path().join("wave.svg").exists());
}

#[test]
fn reproduce_is_byte_identical_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = rotorspin(dir.path(), &["reproduce", "fig4c", "--seed", "7", "--shots", "60", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["fig4c.csv", "fig4c_traces.csv", "fig4c.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let text = std::fs::read_to_string(dir.path().join("a/fig4c.csv")).unwrap();
    assert!(text.lines().take(3).any(|l| l.starts_with("# config_sha256=")));
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_rotorspin"))
            .args(["spectrum", "--points", "4", "--out", "t"])
            .current_dir(dir.path())
            .env("ROTORSPIN_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    assert_eq!(run("0").status.code(), Some(2));
}
