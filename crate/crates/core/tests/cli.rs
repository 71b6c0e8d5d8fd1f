use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nestcell::io::{RunConfig, DEFAULT_CONFIG_TOML};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestcell")).args(args).output().unwrap()
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    run(&all)
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn write_config(dir: &Path, edit: impl Fn(&str) -> String) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, edit(DEFAULT_CONFIG_TOML)).unwrap();
    p.to_str().unwrap().to_string()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn trace_at_the_longest_delay() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["trace"]);
    ok(&o);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("reflections: 378\n"), "{summary}");
    assert!(summary.contains("exit_event: exit"), "{summary}");
    let delay: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("delay_ns: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((delay - 684.0).abs() < 1.0, "{delay}");
    let spots = fs::read_to_string(dir.path().join("spots.csv")).unwrap();
    assert!(spots.starts_with("# reproduces:"));
    assert_eq!(data_rows(&spots).len(), 378);
}

#[test]
fn trace_at_setting_three_draws_nine_exit_spots() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_in(dir.path(), &["--setting-i", "3", "trace"]));
    let svg = fs::read_to_string(dir.path().join("exit_mirror.svg")).unwrap();
    assert_eq!(svg.matches("class=\"spot\"").count(), 9);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("reflections: 18\n"));
}

#[test]
fn delay_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_in(dir.path(), &["delay-table"]));
    let text = fs::read_to_string(dir.path().join("delay_table.csv")).unwrap();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let spots = headers.iter().position(|h| h == "n_spots").unwrap();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 64);
    assert_eq!(&rows[63][spots], "378");
    assert_eq!(&rows[3][spots], "18");
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let step: f64 = rows[10][col("increment_ns")].parse().unwrap();
    assert!((step - 6.0 * 541.0 / 299.792458).abs() < 0.05, "{step}");
    assert!(text.contains("# geometric_step_ns: 10.8275\n"));

    let cfg = write_config(dir.path(), |t| t.replace("step_offset_ns = 0.0", "step_offset_ns = 1.8"));
    ok(&run_in(dir.path(), &["--config", &cfg, "delay-table"]));
    let text = fs::read_to_string(dir.path().join("delay_table.csv")).unwrap();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let last = reader.records().last().unwrap().unwrap();
    let geometric: f64 = last[col("delay_ns")].parse().unwrap();
    let calibrated: f64 = last[col("calibrated_delay_ns")].parse().unwrap();
    assert!((calibrated - geometric - 63.0 * 1.8).abs() < 1e-9);

    let cfg = write_config(dir.path(), |t| t.replace("i_max = 63", "i_max = 0").replace("setting_i = 63", "setting_i = 0"));
    ok(&run_in(dir.path(), &["--config", &cfg, "delay-table"]));
    let text = fs::read_to_string(dir.path().join("delay_table.csv")).unwrap();
    assert_eq!(data_rows(&text).len(), 1);
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(&run_in(d.path(), &["--setting-i", "7", "trace"]));
        ok(&run_in(d.path(), &["tomography", "qst"]));
        ok(&run_in(d.path(), &["histogram"]));
    }
    for f in ["spots.csv", "exit_mirror.svg", "qst_counts.csv", "qst.json", "histogram_overlay.csv", "histogram.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn noiseless_qst_reports_unit_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |t| {
        t.replace("model = \"poisson\"", "model = \"expected\"").replace("pair_rate = 10000.0", "pair_rate = 1e12")
    });
    ok(&run_in(dir.path(), &["--config", &cfg, "tomography", "qst"]));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("qst.json")).unwrap()).unwrap();
    assert_eq!(v["fidelity_text"], "1.000000", "{v}");
}

#[test]
fn histogram_overlay_has_one_column_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_in(dir.path(), &["histogram"]));
    let text = fs::read_to_string(dir.path().join("histogram_overlay.csv")).unwrap();
    let head = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(head, "bin_start_ns,count_i3,count_i32,count_i63");
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("histogram.json")).unwrap()).unwrap();
    assert_eq!(v["peaks"].as_array().unwrap().len(), 3);
}

#[test]
fn qpt_and_channel_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_in(dir.path(), &["tomography", "qpt"]));
    ok(&run_in(dir.path(), &["channel"]));
    ok(&run_in(dir.path(), &["tbp"]));
    ok(&run_in(dir.path(), &["efficiency"]));
    ok(&run_in(dir.path(), &["fiber-compare"]));
    for f in ["qpt.json", "qpt_counts.json", "channel.json", "tbp.json", "efficiency.json", "fiber_compare.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn calibration_output_reparses() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_in(dir.path(), &["calibrate-injection"]));
    let fragment = fs::read_to_string(dir.path().join("calibrated.toml")).unwrap();
    let base = RunConfig::reference();
    let mut text = fragment.clone();
    // append the non-geometry sections of the reference run
    let rest = DEFAULT_CONFIG_TOML.split("[beam]").nth(1).unwrap();
    text.push_str("\n[beam]");
    text.push_str(rest);
    let cfg = RunConfig::parse(&text, "calibrated").unwrap();
    assert!((cfg.injection.radial_slope - base.injection.radial_slope).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = run_in(dir.path(), &["--config", missing.to_str().unwrap(), "trace"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let cfg = write_config(dir.path(), |t| t.replace("separation = 541.0", "separation = \"x\""));
    let o = run_in(dir.path(), &["--config", &cfg, "trace"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.toml:9:"), "{}", String::from_utf8_lossy(&o.stderr));

    // exit pupil moved off the ring: the beam never leaves
    let cfg = write_config(dir.path(), |t| {
        t.replace("setting_i = 63\n", "exit_azimuth = 180.0\n").replace("i_max = 63", "i_max = 2")
    });
    let o = run_in(dir.path(), &["--config", &cfg, "trace"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["--out", "/proc/nonexistent/dir", "tbp"]);
    assert_eq!(o.status.code(), Some(2));
}
