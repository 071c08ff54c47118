use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_aistrack");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn corpus(dir: &Path) {
    ok(dir, &["synth", "--corpus-tracks", "16", "--corpus-records", "560", "-o", "raw.csv", "--truth", "truth.json"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    assert_eq!(code(d, &["run", "-i", "raw.csv", "-o", "ok"]), 0);
    assert_eq!(code(d, &["run", "-i", "missing.csv", "-o", "io"]), 1);
    fs::write(d.join("bad.csv"), "XCoord,YCoord\n1,2\n").unwrap();
    assert_eq!(code(d, &["ingest", "-i", "bad.csv", "-o", "schema"]), 2);
    assert_eq!(code(d, &["run", "-i", "raw.csv", "-o", "cfg", "--min-run", "0"]), 3);
    assert!(!d.join("cfg").exists());
    fs::write(d.join("c.json"), r#"{"screen": {"min_rnu": 3}}"#).unwrap();
    assert_eq!(code(d, &["run", "-i", "raw.csv", "-o", "cfg", "--config", "c.json"]), 3);
    assert_eq!(code(d, &["run", "-i", "raw.csv", "-o", "cfg", "--config", "nothere.json"]), 1);
    assert_eq!(code(d, &["synth", "--kind", "zigzag"]), 3);
    assert_eq!(code(d, &["--help"]), 0);
}

#[test]
fn subcommands_compose_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(d, &["--jobs", "2", "run", "-i", "raw.csv", "-o", "all"]);
    ok(d, &["ingest", "-i", "raw.csv", "-o", "a"]);
    ok(d, &["screen", "-i", "a/database", "-o", "b"]);
    ok(d, &["clean", "-i", "b/database", "-o", "c"]);
    ok(d, &["stats", "-i", "c/database", "--clean-reports", "c/clean_reports.json", "-o", "s"]);
    assert_eq!(tree(&d.join("all/database")), tree(&d.join("c/database")));
    assert_eq!(tree(&d.join("all/stats")), tree(&d.join("s/stats")));
    for (a, b) in
        [("all/screen_reports.json", "b/screen_reports.json"), ("all/clean_reports.json", "c/clean_reports.json")]
    {
        assert_eq!(fs::read(d.join(a)).unwrap(), fs::read(d.join(b)).unwrap(), "{a}");
    }
}

#[test]
fn run_output_does_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(d, &["--jobs", "1", "run", "-i", "raw.csv", "-o", "one"]);
    ok(d, &["--jobs", "3", "run", "-i", "raw.csv", "-o", "three"]);
    assert_eq!(tree(&d.join("one")), tree(&d.join("three")));
}

#[test]
fn piped_synth_screens_to_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let mut child = Command::new(BIN)
        .current_dir(d)
        .args(["synth", "--corpus-tracks", "16", "--corpus-records", "560"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut piped = Vec::new();
    std::io::copy(child.stdout.as_mut().unwrap(), &mut piped).unwrap();
    assert!(child.wait().unwrap().success());
    assert_eq!(piped, fs::read(d.join("raw.csv")).unwrap());

    ok(d, &["screen", "-i", "raw.csv", "-o", "s"]);
    let truth: Vec<serde_json::Value> = serde_json::from_slice(&fs::read(d.join("truth.json")).unwrap()).unwrap();
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(d.join("s/screen_reports.json")).unwrap()).unwrap();
    assert_eq!(truth.len(), 16);
    for t in &truth {
        let r = reports.iter().find(|r| r["mmsi"] == t["mmsi"]).unwrap();
        assert_eq!(r["noise_class"], t["noise_class"], "{}", t["mmsi"]);
        assert_eq!(r["accepted"], t["accepted"]);
    }
}

#[test]
fn stats_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(d, &["stats", "-i", "raw.csv", "-o", "s1"]);
    ok(d, &["stats", "-i", "raw.csv", "-o", "s2"]);
    assert_eq!(tree(&d.join("s1")), tree(&d.join("s2")));
}

#[test]
fn clean_fills_a_missing_pair() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // a 4 minute hole in a steady 20 kn westward run
    let mut f = fs::File::create(d.join("track.csv")).unwrap();
    writeln!(f, "XCoord,YCoord,SOG,COG,ROT,BASEDATETIME,MMSI").unwrap();
    for m in [0, 1, 2, 6, 7] {
        let lon = -120.0 - 0.00803 * m as f64;
        writeln!(f, "{lon},34.24,20,270,0,2009020120{:02},235844000", 10 + m).unwrap();
    }
    drop(f);
    ok(d, &["clean", "-i", "track.csv", "-o", "c", "--annotated"]);
    let text = fs::read_to_string(d.join("c/database/235844000.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    let times: Vec<&str> = rows.iter().map(|r| r.split(',').nth(5).unwrap()).collect();
    assert_eq!(times, (10..18).map(|m| format!("2009020120{m}")).collect::<Vec<_>>());
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(d.join("c/clean_reports.json")).unwrap()).unwrap();
    assert_eq!(reports[0]["pairs_interpolated"], 1);
    assert_eq!(reports[0]["records_inserted"], 3);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    fs::write(d.join("c.json"), r#"{"screen": {"min_run": 600}, "seed": 3}"#).unwrap();
    ok(d, &["run", "-i", "raw.csv", "-o", "cfg", "--config", "c.json"]);
    ok(d, &["run", "-i", "raw.csv", "-o", "flag", "--config", "c.json", "--min-run", "500"]);
    let manifest = |p: &str| -> serde_json::Value {
        serde_json::from_slice(&fs::read(d.join(p).join("manifest.json")).unwrap()).unwrap()
    };
    let (a, b) = (manifest("cfg"), manifest("flag"));
    assert_eq!(a["config"]["screen"]["min_run"], 600);
    assert_eq!(b["config"]["screen"]["min_run"], 500);
    assert_eq!(b["config"]["seed"], 3);
    // 560-record tracks fail a 600 minimum
    assert_eq!(a["counts"]["accepted"], 0);
    assert!(b["counts"]["accepted"].as_u64().unwrap() > 0);
}

#[test]
fn synth_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("scn.json"),
        r#"{"kind": "linear", "length_minutes": 30, "speed_knots": 12, "spikes": [{"at": 5, "magnitude": 40}], "gaps": [{"start": 20, "minutes": 4}]}"#,
    )
    .unwrap();
    ok(d, &["synth", "--scenario", "scn.json", "-o", "t.csv"]);
    ok(d, &["clean", "-i", "t.csv", "-o", "c"]);
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(d.join("c/clean_reports.json")).unwrap()).unwrap();
    assert_eq!(reports[0]["corrected_indices"], serde_json::json!([5]));
    assert_eq!(reports[0]["records_inserted"], 3);
}

#[test]
fn predict_writes_per_vessel_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--kind", "arc", "--length-minutes", "300", "-o", "t.csv"]);
    ok(d, &["predict", "-i", "t.csv", "-o", "p", "--samples", "40", "--stride", "25"]);
    let files = tree(&d.join("p"));
    assert!(files.keys().any(|k| k.ends_with("predicted_track.csv")));
    assert!(files.contains_key(Path::new("manifest.json")));
    assert_eq!(code(d, &["predict", "-i", "t.csv", "-o", "q", "--samples", "400"]), 3);
}
