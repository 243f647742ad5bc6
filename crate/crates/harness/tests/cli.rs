mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn cdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdyn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> serde_json::Value {
    let out = cdyn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let last = stdout.lines().last().expect("summary line");
    serde_json::from_str(last).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn tree_hash(dir: &Path) -> String {
    let mut h = Sha256::new();
    for f in files(dir) {
        h.update(f.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    hex::encode(h.finalize())
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tiny.cfg"), common::TINY).unwrap();
        Self { dir }
    }

    fn p(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }
}

#[test]
fn eval_without_checkpoint_names_the_file() {
    let w = Work::new();
    let missing = w.p("nowhere/model.ckpt");
    let out = cdyn(&["eval", "--checkpoint", &missing, "--data", &w.p("data"), "--out", &w.p("eval")]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&missing), "{err}");
}

#[test]
fn bad_invocations_print_usage() {
    for args in [&["frobnicate"][..], &["gen-data", "--bogus"][..], &[][..]] {
        let out = cdyn(args);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    let w = Work::new();
    std::fs::write(w.p("bad.cfg"), "ae_steps = 10\nnot_a_key = 1\n").unwrap();
    let out = cdyn(&["--config", &w.p("bad.cfg"), "gen-data", "--out", &w.p("d")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn gen_data_is_reproducible() {
    let w = Work::new();
    let cfg = w.p("tiny.cfg");
    let mut hashes = Vec::new();
    for (name, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let s = ok(&["--config", &cfg, "--seed", seed, "gen-data", "--out", &w.p(name)]);
        assert_eq!(s["command"], "gen-data");
        assert_eq!(s["scenes"], 4);
        hashes.push(tree_hash(Path::new(&w.p(name))));
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_ne!(hashes[0], hashes[2]);
}

#[test]
fn end_to_end_runs_are_bit_reproducible() {
    let w = Work::new();
    let cfg = w.p("tiny.cfg");
    ok(&["--config", &cfg, "--seed", "3", "gen-data", "--out", &w.p("data")]);
    let mut digests = Vec::new();
    for run in ["r1", "r2"] {
        let ck = w.p(&format!("{run}/ae.ckpt"));
        let s = ok(&[
            "--config", &cfg, "--seed", "3", "--threads", "1", "train-ae", "--data", &w.p("data"), "--out", &ck,
            "--steps", "200",
        ]);
        assert_eq!(s["steps"], 200);
        let e = ok(&["--config", &cfg, "eval", "--checkpoint", &ck, "--data", &w.p("data"), "--out", &w.p(&format!("{run}/eval"))]);
        assert_eq!(e["modes"][0]["step0_mse"], e["modes"][1]["step0_mse"]);
        digests.push(tree_hash(Path::new(&w.p(run))));
    }
    assert_eq!(digests[0], digests[1]);
    let csv = std::fs::read_to_string(w.p("r1/eval/ours.csv")).unwrap();
    assert!(csv.starts_with("step,metric,mean,stderr\n"));
    assert!(csv.contains("\n0,relative_mse,0,0\n"), "{csv}");
    assert!(Path::new(&w.p("r1/eval/image_mse.png")).exists());
}

#[test]
fn pipeline_commands_produce_their_outputs() {
    let w = Work::new();
    let cfg = w.p("tiny.cfg");
    ok(&["--config", &cfg, "--seed", "1", "gen-data", "--out", &w.p("data"), "--scenes", "12"]);
    let data = cdyn_scene::load_dataset(Path::new(&w.p("data"))).unwrap();
    let long = data.iter().position(|t| t.displacements.len() >= 15).expect("a long enough trajectory");
    let scene = long.to_string();
    ok(&["--config", &cfg, "train-ae", "--data", &w.p("data"), "--out", &w.p("ae.ckpt"), "--steps", "10"]);
    let s = ok(&[
        "--config", &cfg, "train-ae", "--data", &w.p("data"), "--out", &w.p("ae.ckpt"), "--steps", "15", "--resume",
        &w.p("ae.ckpt"),
    ]);
    assert_eq!(s["steps"], 15);
    let loss_lines = std::fs::read_to_string(w.p("ae_loss.csv")).unwrap().lines().count();
    assert_eq!(loss_lines, 16);
    let g = ok(&[
        "--config", &cfg, "train-gnn", "--data", &w.p("data"), "--ae", &w.p("ae.ckpt"), "--out", &w.p("gnn.ckpt"),
        "--steps", "5",
    ]);
    assert_eq!(g["steps"], 5);

    let p = ok(&[
        "predict", "--checkpoint", &w.p("gnn.ckpt"), "--data", &w.p("data"), "--scene", &scene, "--steps", "15",
        "--views", "0,2", "--out", &w.p("pred"),
    ]);
    assert_eq!(p["images"], 30);
    let pngs = files(Path::new(&w.p("pred")));
    for v in [0, 2] {
        let n = pngs
            .iter()
            .filter(|f| f.to_string_lossy().ends_with(&format!("_view_{v}.png")))
            .count();
        assert_eq!(n, 15);
    }

    let r = ok(&["render", "--checkpoint", &w.p("gnn.ckpt"), "--data", &w.p("data"), "--out", &w.p("render")]);
    assert_eq!(r["views"], 3);
    assert!(Path::new(&w.p("render/view_2.png")).exists());

    let e = ok(&[
        "eval", "--checkpoint", &w.p("gnn.ckpt"), "--dense-checkpoint", &w.p("gnn.ckpt"), "--data", &w.p("data"),
        "--out", &w.p("eval"), "--horizon", "15",
    ]);
    assert_eq!(e["horizon"], 15);
    assert!(e["scenes"].as_u64().unwrap() >= 1);

    let goal = r#"{"regions": [{"min": [0.1, 0.1], "max": [0.18, 0.18], "color": [0.9, 0.2, 0.2]}]}"#;
    std::fs::write(w.p("goal.json"), goal).unwrap();
    let l = ok(&[
        "plan", "--mode", "learned", "--checkpoint", &w.p("gnn.ckpt"), "--data", &w.p("data"), "--goal",
        &w.p("goal.json"), "--budget", "20", "--out", &w.p("plan_l"),
    ]);
    assert!(l["frames"].as_u64().unwrap() >= 1);
    assert!(Path::new(&w.p("plan_l/plan.json")).exists());
}

#[test]
fn oracle_planning_solves_the_one_box_task() {
    let w = Work::new();
    let s = ok(&["--seed", "4", "plan", "--mode", "oracle", "--out", &w.p("plan")]);
    assert_eq!(s["solved"], true, "{s}");
    let steps = s["steps"].as_u64().unwrap() as usize;
    assert_eq!(s["frames"].as_u64().unwrap() as usize, steps + 1);
    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(w.p("plan/plan.json")).unwrap()).unwrap();
    assert_eq!(plan["actions"].as_array().unwrap().len(), steps);
}
