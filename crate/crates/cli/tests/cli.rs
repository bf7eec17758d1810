use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vrsverb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrsverb"))
        .args(args)
        .current_dir(dir)
        .env_remove("VRSVERB_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn layout_sphericity_and_face_balance() {
    let tmp = tempfile::tempdir().unwrap();
    for (n, lo, hi) in [(6, 0.845, 0.847), (96, 0.985, 1.0)] {
        let out = vrsverb(&["layout", &n.to_string(), "--out", "o"], tmp.path());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let rows = csv_rows(&tmp.path().join(format!("o/layout_{n}_summary.csv")));
        let s: f64 = rows[0][1].parse().unwrap();
        assert!(s > lo && s < hi, "{n}: {s}");
    }
    let out = vrsverb(&["layout", "24", "--out", "o"], tmp.path());
    assert_eq!(code(&out), 0);
    // every direction belongs to the face whose axis it is closest to
    let mut per_face = [0usize; 6];
    for r in csv_rows(&tmp.path().join("o/layout_24.csv")) {
        let v: Vec<f64> = r[3..6].iter().map(|x| x.parse().unwrap()).collect();
        let axis = (0..3).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
        per_face[2 * axis + usize::from(v[axis] < 0.0)] += 1;
        assert_eq!(r[6].split(' ').count(), 4);
    }
    assert_eq!(per_face, [4; 6]);
    assert!(tmp.path().join("o/manifest.json").exists());
}

#[test]
fn invalid_vrs_count_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vrsverb(&["layout", "10"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("{6, 12, 24, 48, 96}"), "{}", stderr(&out));

    let cfg = write_config(tmp.path(), "r.json", r#"{"schema_version": 1, "fixture": "Laboratory", "n_vrs": 10, "sample_rate": 44100}"#);
    let out = vrsverb(&["render", "--config", &cfg], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("{6, 12, 24, 48, 96}"));

    let cfg = write_config(tmp.path(), "bad.json", r#"{"schema_version": 1, "fixture": "Laboratory""#);
    assert_eq!(code(&vrsverb(&["render", "--config", &cfg], tmp.path())), 2);
    let cfg = write_config(tmp.path(), "v2.json", r#"{"schema_version": 2}"#);
    assert_eq!(code(&vrsverb(&["coherence", "--config", &cfg], tmp.path())), 2);
    assert_eq!(code(&vrsverb(&["coherence", "--duration", "0.5"], tmp.path())), 2);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&vrsverb(&["render", "--config", "nope.json"], tmp.path())), 4);
    fs::write(tmp.path().join("occupied"), "x").unwrap();
    assert_eq!(code(&vrsverb(&["layout", "6", "--out", "occupied"], tmp.path())), 4);
}

#[test]
fn laboratory_render() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "lab.json",
        r#"{"schema_version": 1, "fixture": "Laboratory", "n_vrs": 12, "sample_rate": 44100}"#,
    );
    let out = vrsverb(&["render", "--config", &cfg, "--out", "lab"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let reader = hound::WavReader::open(tmp.path().join("lab/mrir.wav")).unwrap();
    assert_eq!(reader.spec().channels, 86);
    assert_eq!(reader.spec().bits_per_sample, 32);
    assert_eq!(reader.spec().sample_format, hound::SampleFormat::Float);
    assert_eq!(reader.spec().sample_rate, 44100);

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("lab/mrir.json")).unwrap()).unwrap();
    assert_eq!(sidecar["n_reflections"], 63);
    assert_eq!(sidecar["vrs_gains"].as_array().unwrap().len(), 12);
    for band in sidecar["rt60"].as_array().unwrap() {
        let t = band["estimate_s"].as_f64().unwrap();
        assert!((t - 0.4).abs() < 0.06, "{band}");
    }
}

#[test]
fn corridor_end_wall_vrs_attenuated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"schema_version": 1, "fixture": "Corridor/A", "n_vrs": 6, "sample_rate": 16000, "duration": 1.5}"#,
    );
    let out = vrsverb(&["render", "--config", &cfg, "--out", "c"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("c/mrir.json")).unwrap()).unwrap();
    let mut gains: Vec<f64> = sidecar["vrs_gains"].as_array().unwrap().iter().map(|g| g.as_f64().unwrap()).collect();
    gains.sort_by(f64::total_cmp);
    assert!(gains[0] < 0.3 * gains[1], "{gains:?}");
}

#[test]
fn coherence_grid_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "coh.json",
        r#"{"schema_version": 1, "arrangements": ["DIR"], "n_vrs": [6], "spacings": [0.0156], "duration": 5}"#,
    );
    let out = vrsverb(&["coherence", "--config", &cfg, "--out", "a", "--seed", "3"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&tmp.path().join("a/summary.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..2], ["DIR".to_string(), "6".to_string()]);
    let limit: f64 = rows[0][6].parse().unwrap();
    assert!(limit >= 5000.0, "{limit}");
    assert_eq!(rows[0][5], "3");

    // same config and seed through VRSVERB_OUT gives identical bytes
    let out = Command::new(env!("CARGO_BIN_EXE_vrsverb"))
        .args(["coherence", "--config", &cfg, "--out", "ignored", "--seed", "3"])
        .current_dir(tmp.path())
        .env("VRSVERB_OUT", "b")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(!tmp.path().join("ignored").exists());
    for f in ["summary.csv", "coherence_dir_6_15p6mm_static.csv"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }

    // the manifest reproduces the run
    let out = vrsverb(&["rerun", "a/manifest.json", "--out", "c"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(tmp.path().join("a/summary.csv")).unwrap(), fs::read(tmp.path().join("c/summary.csv")).unwrap());

    // a manifest whose recorded hash no longer matches fails the check
    let path = tmp.path().join("a/manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    manifest["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let out = vrsverb(&["rerun", "a", "--out", "d"], tmp.path());
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
