use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn locop(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locop")).args(args).current_dir(dir).output().expect("binary runs")
}

fn locop_ok(args: &[&str], dir: &Path) {
    let out = locop(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"))
}

fn assert_valid(name: &str, instance: &Value) {
    let schema: Value = serde_json::from_str(&fs::read_to_string(schema_path(name)).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, v: &Value) {
    fs::write(dir.join(name), serde_json::to_string(v).unwrap()).unwrap();
}

fn error_json(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    assert_valid("error", &v);
    v
}

fn gen_toeplitz(dir: &Path, seq: &[f64], windows: &[usize]) {
    write(dir, "spec.json", &json!({"family": {"kind": "toeplitz", "sequence": seq}, "windows": windows}));
    locop_ok(&["gen", "--spec", "spec.json", "--out", "corpus"], dir);
}

#[test]
fn gen_toeplitz_entries_and_manifest() {
    let t = TempDir::new().unwrap();
    gen_toeplitz(t.path(), &[1.0, 3.0, 1.0], &[64, 128]);
    let m = read(&t.path().join("corpus/toeplitz_128.json"));
    assert_eq!(m["entries"].as_array().unwrap().len(), 3 * 128 - 2);
    let manifest = read(&t.path().join("corpus/manifest.json"));
    assert_valid("manifest", &manifest);
    for f in manifest["files"].as_array().unwrap() {
        let bytes = fs::read(t.path().join("corpus").join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
}

#[test]
fn banded_random_is_reproducible() {
    let t = TempDir::new().unwrap();
    let spec = json!({"family": {"kind": "banded_random", "band": 2, "scale": 1.0}, "windows": [16, 32], "seed": 7});
    write(t.path(), "spec.json", &spec);
    locop_ok(&["gen", "--spec", "spec.json", "--out", "a"], t.path());
    locop_ok(&["gen", "--spec", "spec.json", "--out", "b"], t.path());
    for name in ["banded_random_16.json", "banded_random_32.json", "manifest.json"] {
        assert_eq!(fs::read(t.path().join("a").join(name)).unwrap(), fs::read(t.path().join("b").join(name)).unwrap());
    }
}

#[test]
fn missing_seed_is_an_error() {
    let t = TempDir::new().unwrap();
    write(t.path(), "spec.json", &json!({"family": {"kind": "banded_random", "band": 2, "scale": 1.0}, "windows": [16]}));
    let out = locop(&["gen", "--spec", "spec.json", "--out", "c"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "invalid_input");
    assert!(!t.path().join("c/manifest.json").exists());

    let (rows, cols) = (30usize, 20usize);
    let set = |n: usize| json!({"dim": 1, "window": [[0.0, (n - 1) as f64]], "points": (0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()});
    let entries: Vec<Value> = (0..rows)
        .flat_map(|i| (0..cols).filter(move |j| (i + 2 * j) % 3 == 0).map(move |j| json!([i, j, 1.0 + ((i * j) % 5) as f64])))
        .collect();
    write(t.path(), "tall.json", &json!({"rows": set(rows), "cols": set(cols), "entries": entries}));
    let out = locop(&["stab", "--matrix", "tall.json", "--p", "1", "--out", "s.json"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("seed"));
    locop_ok(&["stab", "--matrix", "tall.json", "--p", "1", "--seed", "3", "--out", "s.json"], t.path());
    let r = read(&t.path().join("s.json"));
    assert_valid("stab", &r);
    assert_eq!(r["reports"][0]["entries"][0]["lower"]["method"], "multistart");
    assert_eq!(r["reports"][0]["entries"][0]["lower"]["certified"], false);
}

#[test]
fn slanted_unit_rule_has_unit_slant_norm() {
    let t = TempDir::new().unwrap();
    write(t.path(), "spec.json", &json!({"family": {"kind": "slanted", "alpha": 2.0, "rule": {"kind": "unit"}}, "windows": [32]}));
    locop_ok(&["gen", "--spec", "spec.json", "--out", "corpus"], t.path());
    locop_ok(&["norms", "--matrix", "corpus/slanted_32.json", "--slant", "2", "--tails", "0,1,100", "--out", "n.json"], t.path());
    let r = read(&t.path().join("n.json"));
    assert_valid("norms", &r);
    assert_eq!(r["slant"], 1.0);
}

#[test]
fn norms_profile_csv() {
    let t = TempDir::new().unwrap();
    gen_toeplitz(t.path(), &[1.0, 3.0, 1.0], &[16]);
    locop_ok(
        &["norms", "--matrix", "corpus/toeplitz_16.json", "--tails", "0,1,2", "--profile-csv", "p.csv", "--out", "n.json"],
        t.path(),
    );
    let r = read(&t.path().join("n.json"));
    assert_valid("norms", &r);
    assert_eq!(r["sjostrand"], 5.0);
    assert_eq!(r["tails"], json!([[0.0, 5.0], [1.0, 2.0], [2.0, 0.0]]));
    assert_eq!(fs::read_to_string(t.path().join("p.csv")).unwrap(), "k_1,sup_value\n-1,1.0\n0,3.0\n1,1.0\n");
}

#[test]
fn equiv_on_stable_toeplitz() {
    let t = TempDir::new().unwrap();
    gen_toeplitz(t.path(), &[1.0, 3.0, 1.0], &[128]);
    locop_ok(
        &["equiv", "--matrix", "corpus/toeplitz_128.json", "--windows", "32,64,128", "--seed", "7", "--out", "e.json", "--csv", "e.csv"],
        t.path(),
    );
    let r = read(&t.path().join("e.json"));
    assert_valid("equiv", &r);
    assert_eq!(r["all_stable"], true);
    for rep in r["reports"].as_array().unwrap() {
        for e in rep["entries"].as_array().unwrap() {
            assert!(e["lower"]["value"].as_f64().unwrap() >= 0.99);
        }
    }
    let csv = fs::read_to_string(t.path().join("e.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "window,p,lower,upper,certified");
    assert_eq!(lines.len(), 1 + 9);
    assert!(lines.iter().any(|l| l.starts_with("128,inf,")));
}

#[test]
fn conv_verdicts() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("a.csv"), "1,2,1\n").unwrap();
    fs::write(t.path().join("b.csv"), "1\n3\n1\n").unwrap();
    locop_ok(&["conv", "--seq", "a.csv", "--grid", "65536", "--out", "a.json"], t.path());
    locop_ok(&["conv", "--seq", "b.csv", "--out", "b.json"], t.path());
    let (a, b) = (read(&t.path().join("a.json")), read(&t.path().join("b.json")));
    assert_valid("conv", &a);
    assert_valid("conv", &b);
    assert_eq!(a["verdict"], "unstable");
    assert_eq!(b["verdict"], "stable");
    assert_eq!(b["offset"], -1);
}

#[test]
fn missing_input_file() {
    let t = TempDir::new().unwrap();
    let out = locop(&["stab", "--matrix", "absent.json", "--out", "r.json"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "io");
    assert!(!t.path().join("r.json").exists());
}

#[test]
fn malformed_input_is_rejected() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("bad.json"), r#"{"rows": 1}"#).unwrap();
    let out = locop(&["norms", "--matrix", "bad.json", "--out", "n.json"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "parse");
}

#[test]
fn singular_window_is_a_numerical_failure() {
    let t = TempDir::new().unwrap();
    let set = json!({"dim": 1, "window": [[0.0, 3.0]], "points": [[0.0], [1.0], [2.0], [3.0]]});
    write(
        t.path(),
        "m.json",
        &json!({"rows": set, "cols": set, "entries": [[0, 0, 1.0], [1, 1, 1.0], [2, 2, 1.0], [3, 2, 1.0]]}),
    );
    let out = locop(&["invdecay", "--matrix", "m.json", "--margin", "0", "--out", "d.json"], t.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "numerical");
}

#[test]
fn invdecay_rate_and_profile() {
    let t = TempDir::new().unwrap();
    gen_toeplitz(t.path(), &[1.0, 3.0, 1.0], &[101]);
    locop_ok(
        &["invdecay", "--matrix", "corpus/toeplitz_101.json", "--margin", "25", "--out", "d.json", "--csv", "d.csv"],
        t.path(),
    );
    let r = read(&t.path().join("d.json"));
    assert_valid("invdecay", &r);
    assert!((r["rate"].as_f64().unwrap() - (3.0 - 5f64.sqrt()) / 2.0).abs() < 0.01);
    assert!(fs::read_to_string(t.path().join("d.csv")).unwrap().starts_with("k_1,sup_value\n"));
}

#[test]
fn density_counts() {
    let t = TempDir::new().unwrap();
    let pts = |step: i64| (-20..=120).filter(|k| k % step == 0).map(|k| vec![k as f64]).collect::<Vec<_>>();
    write(t.path(), "even.json", &json!({"dim": 1, "window": [[-20.0, 120.0]], "points": pts(2)}));
    write(t.path(), "all.json", &json!({"dim": 1, "window": [[-20.0, 120.0]], "points": pts(1)}));
    write(t.path(), "boxes.json", &json!([[[10.0, 90.0]]]));
    locop_ok(&["density", "--rows", "even.json", "--cols", "all.json", "--r0", "3", "--boxes", "boxes.json", "--out", "d.json"], t.path());
    let r = read(&t.path().join("d.json"));
    assert_valid("density", &r);
    assert_eq!(r["pass"], false);
    assert_eq!(r["verdicts"][0]["rows_near"], 43);
    assert_eq!(r["verdicts"][0]["cols_inside"], 81);
}

fn hat_family(dir: &Path) {
    let n = 64;
    let family = json!({
        "index": {"dim": 1, "window": [[0.0, (n - 1) as f64]], "points": (0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()},
        "rule": {"kind": "shift", "profiles": [{"kind": "bspline", "order": 2}]},
        "envelope": {"kind": "pp", "breaks": [-1.0, 3.0], "coeffs": [[1.0]]},
        "modulus": {"form": "power", "C": 1.0, "alpha": 1.0}
    });
    write(dir, "hats.json", &family);
}

#[test]
fn synth_hat_constants() {
    let t = TempDir::new().unwrap();
    hat_family(t.path());
    locop_ok(&["synth", "--family", "hats.json", "--p", "2", "--n0", "3,4", "--window", "16,64", "--out", "s.json", "--csv", "s.csv"], t.path());
    let r = read(&t.path().join("s.json"));
    assert_valid("synth", &r);
    let last = &r["results"][0]["levels"][1]["report"]["entries"][1];
    assert!((last["lower"]["value"].as_f64().unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 0.02);
    let csv = fs::read_to_string(t.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n0,window,p,lower,upper,certified");
    assert_eq!(csv.lines().count(), 1 + 4);
}

fn gaussian_kernel_file(dir: &Path) {
    let g = json!({"kind": "gaussian", "amplitude": 0.1, "sigma": 1.0});
    write(dir, "k.json", &json!({"rule": {"kind": "convolution", "g": g}, "envelope": g, "alpha": 1.0, "D": 1.0}));
}

#[test]
fn kernel_curve_and_report() {
    let t = TempDir::new().unwrap();
    gaussian_kernel_file(t.path());
    locop_ok(
        &["kernel", "--kernel", "k.json", "--p", "2", "--n", "3..6", "--window", "8,16", "--tails", "0,2,8", "--out", "c.csv", "--report", "k.json.out"],
        t.path(),
    );
    let r = read(&t.path().join("k.json.out"));
    assert_valid("kernel", &r);
    let slope = r["curves"][0]["slope"].as_f64().unwrap();
    assert!((-1.2..=-0.8).contains(&slope));
    let csv = fs::read_to_string(t.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n,r,ratio,left_defect,right_defect");
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(r["tails"].as_array().unwrap().iter().all(|row| row["tail"].as_f64() <= row["bound"].as_f64()));
}

#[test]
fn kernel_with_bad_constant_fails_hypotheses() {
    let t = TempDir::new().unwrap();
    let g = json!({"kind": "gaussian", "sigma": 1.0});
    write(t.path(), "k.json", &json!({"rule": {"kind": "convolution", "g": g}, "envelope": g, "alpha": 1.0, "D": 1.0}));
    let out = locop(&["kernel", "--kernel", "k.json", "--n", "3..4", "--window", "8", "--out", "c.csv"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "precondition");
    assert!(!t.path().join("c.csv").exists());
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let t = TempDir::new().unwrap();
    let spec = json!({"family": {"kind": "banded_random", "band": 2, "scale": 0.5}, "windows": [40], "seed": 3});
    write(t.path(), "spec.json", &spec);
    locop_ok(&["gen", "--spec", "spec.json", "--out", "corpus"], t.path());
    let mut outputs = Vec::new();
    for threads in ["0", "1", "4"] {
        let out = Command::new(env!("CARGO_BIN_EXE_locop"))
            .args(["stab", "--matrix", "corpus/banded_random_40.json", "--windows", "10,20,40", "--seed", "5"])
            .args(["--out", &format!("r{threads}.json"), "--csv", &format!("r{threads}.csv")])
            .env("LOCOP_THREADS", threads)
            .current_dir(t.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        let json = fs::read(t.path().join(format!("r{threads}.json"))).unwrap();
        let csv = fs::read(t.path().join(format!("r{threads}.csv"))).unwrap();
        outputs.push((json, csv));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert_valid("stab", &serde_json::from_slice(&outputs[0].0).unwrap());
}

#[test]
fn invalid_thread_count() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("a.csv"), "1,3,1").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_locop"))
        .args(["conv", "--seq", "a.csv", "--out", "a.json"])
        .env("LOCOP_THREADS", "many")
        .current_dir(t.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "config");
}

#[test]
fn run_config_matches_direct_invocation() {
    let t = TempDir::new().unwrap();
    gen_toeplitz(t.path(), &[1.0, 3.0, 1.0], &[64]);
    locop_ok(&["stab", "--matrix", "corpus/toeplitz_64.json", "--windows", "16,32,64", "--out", "direct.json"], t.path());
    let sub = t.path().join("cfg");
    fs::create_dir(&sub).unwrap();
    write(
        &sub,
        "run.json",
        &json!({"analysis": "stab", "matrix": "../corpus/toeplitz_64.json", "windows": [16, 32, 64], "out": "via_run.json"}),
    );
    locop_ok(&["run", "--config", "cfg/run.json"], t.path());
    assert_eq!(fs::read(t.path().join("direct.json")).unwrap(), fs::read(sub.join("via_run.json")).unwrap());

    write(&sub, "conv.json", &json!({"analysis": "conv", "seq": "seq.csv", "out": "conv_out.json"}));
    fs::write(sub.join("seq.csv"), "1,2,1").unwrap();
    locop_ok(&["run", "--config", "cfg/conv.json"], t.path());
    assert_eq!(read(&sub.join("conv_out.json"))["verdict"], "unstable");

    write(&sub, "typo.json", &json!({"analysis": "conv", "seq": "seq.csv", "out": "x.json", "grid_size": 8}));
    let out = locop(&["run", "--config", "cfg/typo.json"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "parse");
}
