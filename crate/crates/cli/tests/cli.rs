use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnl")).args(args).env_remove("PNL_SEED").output().unwrap()
}

fn pnl_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnl")).args(args).env(key, value).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const NOISY: &str = "[grid]\ncells = 16\nboundary = \"periodic\"\n[model]\nname = \"identity\"\n\
                     [noise]\nkind = \"gradient\"\nsigma = 0.5\n[run]\nhorizon = 0.02\nsteps = 20\nseed = 11\n\
                     initial = { kind = \"sin-wave\", axis = 0, k = 1, phase = 0.0 }\n";

#[test]
fn thresholds_oracle() {
    let out = pnl(&["thresholds", "--n", "3", "--lambda0", "1", "--lambda1", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["dispersion_ok_parabolic"], Value::Bool(false));
    assert_eq!(rec["sigma_zero"].as_f64(), Some(1.0));
    assert!(rec["schedule"].is_object());
}

#[test]
fn schedule_command() {
    let out = pnl(&["schedule", "--n", "3", "--a", "6", "--nu", "0.95", "--kappa", "1"]);
    assert_eq!(code(&out), 0);
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["q_max"].as_f64(), Some(2.25));
    let q = rec["q_star"].as_f64().unwrap();
    assert!(q > 1.5 && q < 2.0, "{rec}");
}

#[test]
fn verify_lemmas_pass_and_negative_control() {
    let ok = pnl(&["verify-lemmas", "--draws", "300", "--seed", "4"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let again = pnl(&["verify-lemmas", "--draws", "300", "--seed", "4"]);
    assert_eq!(ok.stdout, again.stdout);
    let bad = pnl(&["verify-lemmas", "--draws", "300", "--force-wrong-mu"]);
    assert_eq!(code(&bad), 1);
    let text = String::from_utf8(bad.stdout).unwrap();
    assert!(text.contains("\"sample\""), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pnl(&["simulate"])), 2);
    let cfg = write_config(dir.path(), "bad.toml", "[grid]\ncels = 8\n");
    let out = pnl(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cells"));
    let cfg = write_config(
        dir.path(),
        "unstable.toml",
        "[grid]\ncells = 32\nboundary = \"periodic\"\n[model]\nname = \"zero\"\n[noise]\nkind = \"gradient\"\nsigma = 2.0\n[run]\nsteps = 10\n",
    );
    let out = pnl(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("use at least"));
    let out = pnl(&["analyze", dir.path().join("missing").to_str().unwrap(), "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ensemble_of_one_equals_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", NOISY);
    let sim = dir.path().join("sim");
    let ens = dir.path().join("ens");
    assert_eq!(code(&pnl(&["simulate", "-c", &cfg, "-o", sim.to_str().unwrap()])), 0);
    assert_eq!(code(&pnl(&["ensemble", "-c", &cfg, "-o", ens.to_str().unwrap(), "-m", "1"])), 0);
    for k in 0..=20 {
        let a = fs::read(sim.join(format!("frame_{k:05}.pnlf"))).unwrap();
        let b = fs::read(ens.join(format!("mean_{k:05}.pnlf"))).unwrap();
        assert_eq!(a, b, "frame {k}");
    }
}

#[test]
fn seed_env_and_manifest_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", NOISY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert_eq!(code(&pnl_env(&["simulate", "-c", &cfg, "-o", a.to_str().unwrap()], "PNL_SEED", "99")), 0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"].as_u64(), Some(99));
    let m = a.join("manifest.json");
    assert_eq!(code(&pnl(&["simulate", "-c", m.to_str().unwrap(), "-o", b.to_str().unwrap()])), 0);
    assert_eq!(code(&pnl(&["simulate", "-c", &cfg, "-o", c.to_str().unwrap()])), 0);
    let last = "frame_00020.pnlf";
    assert_eq!(fs::read(a.join(last)).unwrap(), fs::read(b.join(last)).unwrap());
    assert_ne!(fs::read(a.join(last)).unwrap(), fs::read(c.join(last)).unwrap());
}

#[test]
fn analyze_transport_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.toml",
        "[grid]\ncells = 16\nboundary = \"periodic\"\n[model]\nname = \"zero\"\n\
         [noise]\nkind = \"gradient\"\nsigma = 1.0\nscheme = \"stratonovich\"\n\
         [run]\nhorizon = 0.01\nsteps = 40\nrecord_every = 20\npaths = 200\nseed = 3\n\
         initial = { kind = \"smoothed-step\", axis = 0, eps = 0.0625 }\n",
    );
    let ens = dir.path().join("ens");
    let an = dir.path().join("an");
    assert_eq!(code(&pnl(&["ensemble", "-c", &cfg, "-o", ens.to_str().unwrap()])), 0);
    let out = pnl(&["analyze", ens.to_str().unwrap(), "-o", an.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(an.join("transport_table.csv")).unwrap();
    assert!(table.starts_with("run,time,node,x,mean"));
    assert_eq!(table.lines().count(), 1 + 2 * 3);
    let records = fs::read_to_string(an.join("analysis.ndjson")).unwrap();
    assert!(records.lines().any(|l| l.contains("\"record\":\"transport\"")));
    assert!(records.lines().any(|l| l.contains("\"record\":\"residual\"")));
}
