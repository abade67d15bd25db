use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn jetsym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jetsym")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = jetsym(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A small grid so every preset runs in well under a second.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.json");
    fs::write(&path, r#"{"grid": {"nx": 50, "nt": 40}, "n_ics": 1}"#).unwrap();
    path
}

#[test]
fn gen_defaults_shape_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["gen", "--pde", "burgers", "--seed", "3", "--out", p(&a)]);
    ok(&["gen", "--pde", "burgers", "--seed", "3", "--out", p(&b)]);
    let meta = read(&a.join("traj.json"));
    assert_eq!(meta["shape"], serde_json::json!([10, 1000, 100, 1]));
    assert_eq!(fs::read(a.join("traj.bin")).unwrap(), fs::read(b.join("traj.bin")).unwrap());
    assert_eq!(fs::read(a.join("traj.json")).unwrap(), fs::read(b.join("traj.json")).unwrap());
}

#[test]
fn unknown_pde_exits_2_with_options() {
    let tmp = tempfile::tempdir().unwrap();
    let out = jetsym(&["gen", "--pde", "navier", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["burgers", "heat", "kdv", "wave2d", "schrodinger2d", "rd2d"] {
        assert!(err.contains(name), "{err}");
    }
    let out = jetsym(&["jet", "--preset", "navier", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn jet_channels_and_order_limits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (traj, jets) = (tmp.path().join("traj"), tmp.path().join("jets"));
    ok(&["gen", "--pde", "burgers", "--config", p(&cfg), "--out", p(&traj)]);
    ok(&["jet", "--in", p(&traj), "--order", "2", "--out", p(&jets)]);
    let meta = read(&jets.join("jets.json"));
    let channels: Vec<&str> = meta["channels"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    for c in ["u_t", "u_x", "u_xx", "u_tx"] {
        assert!(channels.contains(&c), "{channels:?}");
    }
    assert_eq!(meta["outputs"], serde_json::json!(["u_t"]));
    let first = fs::read(jets.join("jets.bin")).unwrap();
    ok(&["jet", "--in", p(&traj), "--order", "2", "--out", p(&jets)]);
    assert_eq!(first, fs::read(jets.join("jets.bin")).unwrap());

    let wave = tmp.path().join("wave");
    ok(&["gen", "--pde", "wave2d", "--config", p(&cfg), "--out", p(&wave)]);
    let out = jetsym(&["jet", "--in", p(&wave), "--order", "3", "--out", p(&tmp.path().join("w3"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));
}

#[test]
fn analytic_burgers_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let jets = tmp.path().join("jets");
    ok(&["jet", "--preset", "burgers", "--out", p(&jets)]);
    let (res, res2) = (tmp.path().join("res.json"), tmp.path().join("res2.json"));
    let text = ok(&["discover", "--jets", p(&jets), "--analytic", "burgers", "--seed", "1", "--out", p(&res)]);
    assert!(text.contains("d = 6"), "{text}");
    assert_eq!(read(&res)["d"], 6);
    ok(&["discover", "--jets", p(&jets), "--analytic", "burgers", "--seed", "1", "--out", p(&res2)]);
    assert_eq!(fs::read(&res).unwrap(), fs::read(&res2).unwrap());

    let eval = ok(&["eval", "--in", p(&res), "--truth", "burgers"]);
    let dg: f64 = eval.lines().find_map(|l| l.strip_prefix("grassmann distance ")).unwrap().parse().unwrap();
    assert!(dg < 1e-3, "{eval}");

    let sparse = tmp.path().join("sparse.json");
    let text = ok(&["sparsify", "--in", p(&res), "--out", p(&sparse)]);
    assert!(text.contains("sparsified generators"), "{text}");
    let s = read(&sparse);
    assert_eq!(s["expressions_sparse"].as_array().unwrap().len(), 6);
    let report = ok(&["report", "--in", p(&sparse)]);
    assert!(report.contains("∂/∂t") && report.contains("dense basis"), "{report}");

    let out = jetsym(&["eval", "--in", p(&res), "--truth", "nothing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analytic_kdv_and_zero_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let jets = tmp.path().join("jets");
    ok(&["jet", "--preset", "kdv", "--out", p(&jets)]);
    let res = tmp.path().join("res.json");
    ok(&["discover", "--jets", p(&jets), "--analytic", "kdv", "--out", p(&res)]);
    assert_eq!(read(&res)["d"], 4);

    let zero = tmp.path().join("zero.json");
    ok(&["discover", "--jets", p(&jets), "--analytic", "kdv", "--threshold", "0", "--out", p(&zero)]);
    assert_eq!(read(&zero)["d"], 0);
    let report = ok(&["report", "--in", p(&zero)]);
    assert!(report.contains("no generators found"), "{report}");
}

#[test]
fn model_and_jets_must_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (bt, kt) = (tmp.path().join("bt"), tmp.path().join("kt"));
    ok(&["gen", "--pde", "burgers", "--config", p(&cfg), "--out", p(&bt)]);
    ok(&["gen", "--pde", "kdv", "--config", p(&cfg), "--out", p(&kt)]);
    let (bj, kj) = (tmp.path().join("bj"), tmp.path().join("kj"));
    ok(&["jet", "--in", p(&bt), "--out", p(&bj)]);
    ok(&["jet", "--in", p(&kt), "--out", p(&kj)]);
    let model = tmp.path().join("model");
    ok(&["train", "--in", p(&kj), "--hidden", "8", "--epochs", "1", "--out", p(&model)]);
    let out = jetsym(&["discover", "--jets", p(&bj), "--model", p(&model), "--out", p(&tmp.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing from the jets"));
    let out = jetsym(&["discover", "--jets", p(&bj), "--analytic", "kdv", "--out", p(&tmp.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn static_circle() {
    let tmp = tempfile::tempdir().unwrap();
    let res = tmp.path().join("circle.json");
    let text = ok(&["discover", "--static", "circle", "--samples", "50", "--out", p(&res)]);
    assert_eq!(read(&res)["d"], 1);
    assert!(text.contains("y ∂/∂x - x ∂/∂y") || text.contains("-y ∂/∂x + x ∂/∂y"), "{text}");
    let eval = ok(&["eval", "--in", p(&res), "--truth", "circle"]);
    assert!(eval.contains("grassmann distance"), "{eval}");
}

#[test]
fn pipeline_composes_on_every_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for pde in ["burgers", "heat", "kdv", "wave2d", "schrodinger2d", "rd2d"] {
        let dir = tmp.path().join(pde);
        let (traj, jets, model) = (dir.join("traj"), dir.join("jets"), dir.join("model"));
        let (res, sparse) = (dir.join("res.json"), dir.join("sparse.json"));
        ok(&["gen", "--pde", pde, "--config", p(&cfg), "--out", p(&traj)]);
        ok(&["jet", "--in", p(&traj), "--space-stride", "1", "--out", p(&jets)]);
        ok(&["train", "--in", p(&jets), "--hidden", "16", "--epochs", "2", "--seed", "1", "--out", p(&model)]);
        ok(&["discover", "--jets", p(&jets), "--model", p(&model), "--samples", "40", "--out", p(&res)]);
        ok(&["sparsify", "--in", p(&res), "--out", p(&sparse)]);
        ok(&["eval", "--in", p(&sparse), "--truth", pde]);
        ok(&["report", "--in", p(&sparse)]);
    }
}
