use std::path::Path;
use std::process::{Command, Output};

fn occnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occnav")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn encode_prints_twelve_chips() {
    let o = occnav(&["encode", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    let levels: String = rows.iter().map(|r| r.rsplit(',').next().unwrap()).collect();
    assert_eq!(levels, "110000010001");
    assert!(String::from_utf8_lossy(&o.stderr).contains("codeword"));
}

#[test]
fn simulate_then_decode_then_range() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = occnav(&["--out-dir", d, "simulate-frame", "--pose", "25", "25", "--frames", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let frames: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(frames.len(), 20);
    let side = std::fs::read_to_string(dir.path().join("frame_000.json")).unwrap();
    let side: serde_json::Value = serde_json::from_str(&side).unwrap();
    let truth = side["ellipses"].as_array().unwrap().len();
    assert!(truth >= 4);

    let mut args = vec!["--out-dir", d, "decode"];
    args.extend(frames.iter().map(String::as_str));
    let o = occnav(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let decode = dir.path().join("decode.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&decode).unwrap()).unwrap();
    assert_eq!(v["leds"].as_array().unwrap().len(), truth);

    let o = occnav(&["--format", "json", "range", decode.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for r in rows.as_array().unwrap() {
        let g = r["geometric_distance_cm"].as_f64().unwrap();
        assert!((256.0..400.0).contains(&g), "{g}");
    }
}

#[test]
fn navigate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 3\ntarget = 30\n[start]\nx = 140.0\ny = 10.0\n");
    let out = dir.path().join("run");
    let o = occnav(&["--config", &cfg, "--out-dir", out.to_str().unwrap(), "navigate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "visits.jsonl", "report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["outcome"], "arrived");
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "target = 1\n[camera]\nfps = \"fast\"\n");
    let o = occnav(&["--config", &cfg, "navigate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("camera.fps"));
}

#[test]
fn ber_json_to_stdout() {
    let o = occnav(&["--format", "json", "ber", "--orders", "2,4", "--hi", "2"]);
    assert!(o.status.success());
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 6);
}

#[test]
fn table_reproduction_passes() {
    let o = occnav(&["reproduce-table1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 12);
}
