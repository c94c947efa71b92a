use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

const GRID: [&str; 4] = ["--L", "25", "--dx", "0.1"];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stochwave"));
    c.env_remove("STOCHWAVE_WORKERS");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Wave data on the test grid, computed once.
fn wave_dir() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = tempfile::tempdir().unwrap();
        let o = run(&["wave", "--model", "nagumo", "--a", "0.3", GRID[0], GRID[1], GRID[2], GRID[3]], d.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        d
    })
    .path()
}

/// Fresh output directory seeded with the wave data.
fn workspace() -> TempDir {
    let d = tempfile::tempdir().unwrap();
    for e in fs::read_dir(wave_dir()).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        if name.starts_with("wave-") {
            fs::copy(&p, d.path().join(name)).unwrap();
        }
    }
    d
}

fn with_grid<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(GRID);
    v
}

fn find(dir: &Path, prefix: &str, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let n = p.file_name().unwrap().to_str().unwrap();
            n.starts_with(prefix) && n.ends_with(ext)
        })
        .collect();
    v.sort();
    v
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn wave_writes_data_and_manifest() {
    let dir = wave_dir();
    let json = find(dir, "wave-", ".json");
    assert_eq!(json.len(), 1);
    let w = read_json(&json[0]);
    assert!((w["c0"].as_f64().unwrap() - 2f64.sqrt() * (0.3 - 0.5)).abs() < 1e-3);
    assert_eq!(w["phi0"].as_array().unwrap().len(), 501);
    assert_eq!(find(dir, "wave-", ".csv").len(), 1);
    let m = read_json(&dir.join("manifest.json"));
    let e = &m["entries"][0];
    assert_eq!(e["command"], "wave");
    assert_eq!(e["config_hash"].as_str().unwrap().len(), 64);
    assert!(e["versions"]["stochwave"].is_string());
}

#[test]
fn malformed_config_names_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "a = 0.3\nbogus_key = 1\n").unwrap();
    let o = run(&["wave", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));

    fs::write(&cfg, "dx = fine\n").unwrap();
    let o = run(&["wave", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`dx`"));

    let o = run(&["wave", "--set", "nope=1"], d.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn detuning_out_of_range_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&with_grid(&["wave", "--a", "1.5"]), d.path());
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(find(d.path(), "wave-", "").is_empty());
}

#[test]
fn missing_inputs_exit_3() {
    let d = tempfile::tempdir().unwrap();
    for cmd in ["modwave", "simulate", "ensemble", "speed", "experiment"] {
        let o = run(&with_grid(&[cmd]), d.path());
        assert_eq!(code(&o), 3, "{cmd}: {}", stderr(&o));
    }
    let o = run(&["wave", "--config", "/nonexistent/run.cfg"], d.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn ensemble_reruns_are_byte_identical() {
    let d = workspace();
    let args = with_grid(&["ensemble", "--paths", "100", "--seed", "42", "--T", "0.5", "--dt", "0.01"]);
    assert_eq!(code(&run(&args, d.path())), 0);
    let files = find(d.path(), "ensemble-", ".jsonl");
    assert_eq!(files.len(), 1);
    let first = fs::read(&files[0]).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 100);

    let o = bin().args(&args).arg("--out").arg(d.path()).env("STOCHWAVE_WORKERS", "1").output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&files[0]).unwrap(), first);
    assert!(String::from_utf8_lossy(&o.stdout).contains("unchanged"));
    let m = read_json(&d.path().join("manifest.json"));
    assert_eq!(m["entries"].as_array().unwrap().len(), 1);
    assert_eq!(m["entries"][0]["path_seeds"], serde_json::json!([42, 141]));

    let other = with_grid(&["ensemble", "--paths", "100", "--seed", "43", "--T", "0.5", "--dt", "0.01"]);
    assert_eq!(code(&run(&other, d.path())), 0);
    assert_eq!(find(d.path(), "ensemble-", ".jsonl").len(), 2);
    assert_eq!(fs::read(&files[0]).unwrap(), first);
    let m = read_json(&d.path().join("manifest.json"));
    assert_eq!(m["entries"].as_array().unwrap().len(), 2);

    let report = read_json(&find(d.path(), "ensemble-", ".json")[0]);
    for key in ["p_hat", "ci_95", "mean_speed", "var_phase", "n_paths"] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

#[test]
fn deterministic_simulation_stays_on_the_wave() {
    let d = workspace();
    let o = run(&with_grid(&["simulate", "--sigma", "0", "--u0", "wave", "--T", "2", "--dt", "0.01"]), d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(&find(d.path(), "simulate-", ".json")[0]);
    assert!(s["supN"].as_f64().unwrap() <= 1e-4, "{s}");
    assert!(s["exit_time"].is_null());
    let csv = fs::read_to_string(&find(d.path(), "simulate-", ".csv")[0]).unwrap();
    assert!(csv.starts_with("t,Gamma,N1,N2,tau_Phi,l2_V,h1_V"));
    assert_eq!(csv.lines().count(), 1 + 21);
}

#[test]
fn special_case_speed_equals_modified_speed() {
    let d = workspace();
    let o = run(&with_grid(&["speed", "--special-case", "--sigma", "0.1"]), d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(&find(d.path(), "speed-", ".json")[0]);
    assert_eq!(s["special_case"], true);
    assert_eq!(s["c_inf_2"], s["c_sigma"]);

    let o = run(&with_grid(&["speed", "--special-case", "--model", "fhn"]), d.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn modwave_and_steepening_experiment() {
    let d = workspace();
    let o = run(&with_grid(&["modwave", "--sigma", "0.2"]), d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(&find(d.path(), "modwave-", ".json")[0]);
    let alpha = m["alpha_sigma"].as_f64().unwrap();
    let c0 = m["c0"].as_f64().unwrap();
    assert!((m["c_sigma"].as_f64().unwrap() - c0 / alpha).abs() < 1e-8);

    let o = run(&with_grid(&["experiment", "--name", "steepening"]), d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(&find(d.path(), "experiment-steepening-", ".csv")[0]).unwrap();
    assert!(csv.starts_with("sigma,alpha,max_slope"));
    assert_eq!(csv.lines().count(), 8);
    let fit = read_json(&find(d.path(), "experiment-steepening-", ".json")[0]);
    assert!(fit["r2"].as_f64().unwrap() >= 0.999);
}

#[test]
fn stability_experiment_table() {
    let d = workspace();
    let args = with_grid(&[
        "experiment", "--name", "stability", "--noise", "quadratic", "--paths", "8", "--dt", "0.01",
        "--set", "sigmas=0.1", "--set", "etas=1e-4,1e-2", "--set", "Ts=0.5,1",
    ]);
    let o = run(&args, d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(&find(d.path(), "experiment-stability-", ".csv")[0]).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "sigma,amplitude,T,eta,n,p_hat,ci_lo,ci_hi,mean_supN,se_supN");
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn fhn_pulse_wave() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["wave", "--model", "fhn", "--a", "0.1", "--L", "60", "--dx", "0.2"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let w = read_json(&find(d.path(), "wave-", ".json")[0]);
    assert_eq!(w["n_components"], 2);
    assert!(w["c0"].as_f64().unwrap() > 0.3);
    let csv = fs::read_to_string(&find(d.path(), "wave-", ".csv")[0]).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "x,phi0_0,phi0_1,psi_0,psi_1");
}
