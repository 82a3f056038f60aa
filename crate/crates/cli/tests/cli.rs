use std::path::Path;
use std::process::{Command, Output};

fn partner(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partner")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn constants_json_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = partner(&["constants", "--r-plus", "4", "--r-minus", "1"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["lambda_c"].as_f64().unwrap() - 19.027).abs() < 1e-3);
    assert_eq!(v["lambda"], v["lambda_c"]);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 3);

    std::fs::write(dir.path().join("c.json"), &o.stdout).unwrap();
    let again = partner(&["constants", "--params-from", "c.json"], dir.path());
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = partner(&["constants", "--r-plus", "2", "--r-minus", "1"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda_c infinite"));
    assert_eq!(code(&partner(&["constants", "--r-plus=-1"], d)), 64);
    assert_eq!(code(&partner(&["constants", "--r-minus=0"], d)), 64);
    assert_eq!(code(&partner(&["simulate", "--bogus"], d)), 64);
    assert_eq!(code(&partner(&["collapse", "--lambda", "3", "--out", "x"], d)), 64);
    assert_eq!(code(&partner(&["simulate", "--n", "1000", "--init", "explicit:10,0,0,0,10", "--out", "bad"], d)), 65);
    assert_eq!(code(&partner(&["simulate", "--n", "400", "--init", "on-ray:1", "--out", "far"], d)), 65);
    let o = partner(&["extinction-scaling", "--ns", "10000,20000,40000", "--replicas", "5", "--t-max", "0.01", "--out", "cens"], d);
    assert_eq!(code(&o), 66);
    assert!(String::from_utf8_lossy(&o.stderr).contains("raise the horizon"));
}

#[test]
fn ensemble_is_independent_of_threads_and_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = ["ensemble", "--n", "10000", "--replicas", "8", "--seed", "1", "--t-max", "2"];
    for (out, threads) in [("a", "1"), ("b", "4")] {
        let mut args = base.to_vec();
        args.extend(["--out", out, "--threads", threads]);
        assert_eq!(code(&partner(&args, d)), 0);
    }
    for f in ["ensemble.csv", "replicas.csv"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f}");
    }
    let mut args = base.to_vec();
    args.extend(["--out", "a"]);
    assert_eq!(code(&partner(&args, d)), 73);

    std::fs::create_dir(d.join("empty")).unwrap();
    args.pop();
    args.push("empty");
    assert_eq!(code(&partner(&args, d)), 0);
}

#[test]
fn manifest_reruns_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = partner(&["simulate", "--n", "5000", "--seed", "9", "--t-max", "1", "--grid", "0.01", "--out", "first"], d);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&read(d.join("first/manifest.json"))).unwrap();
    assert_eq!(m["master_seed"], 9);
    assert_eq!(m["job"]["command"], "simulate");
    assert!(m["events"].as_u64().unwrap() > 0);
    assert_eq!(code(&partner(&["rerun", "first/manifest.json", "--out", "second"], d)), 0);
    assert_eq!(read(d.join("first/trajectory.csv")), read(d.join("second/trajectory.csv")));
    let text = String::from_utf8(read(d.join("first/trajectory.csv"))).unwrap();
    assert!(text.starts_with("schema,t_slow,S,I,J,K,L,y,z,i,j,k,h,U,V,W,Q\npartner-trajectory/1,0,"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "n = 3000\nseed = 4\nt_max = 0.5\nreplicas = 3\ntimes = [0.1, 0.2]\n").unwrap();
    assert_eq!(code(&partner(&["ensemble", "--config", "run.toml", "--replicas", "2", "--out", "o"], d)), 0);
    let m: serde_json::Value = serde_json::from_slice(&read(d.join("o/manifest.json"))).unwrap();
    assert_eq!(m["job"]["config"]["params"]["n"], 3000);
    assert_eq!(m["job"]["replicas"], 2);
    assert_eq!(m["job"]["times"], serde_json::json!([0.1, 0.2]));
    std::fs::write(d.join("bad.toml"), "nn = 3\n").unwrap();
    assert_eq!(code(&partner(&["ensemble", "--config", "bad.toml", "--out", "p"], d)), 64);
}

#[test]
fn verdict_commands_write_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let runs: [&[&str]; 4] = [
        &["collapse", "--n", "2500", "--replicas", "3", "--out", "c"],
        &["mfcp", "--n", "400", "--replicas", "50", "--paths", "50", "--out", "m"],
        &["diffusion-compare", "--n", "2500", "--replicas", "20", "--paths", "100", "--t-max", "5", "--out", "f"],
        &["ou-check", "--n", "2500", "--replicas", "2", "--lattice-n", "400", "--lattice-replicas", "50", "--out", "u"],
    ];
    for args in runs {
        let o = partner(args, d);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let out = d.join(args[args.len() - 1]);
        let raw = String::from_utf8(read(out.join("verdicts.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
        let verdicts = v.as_array().unwrap();
        assert!(!verdicts.is_empty());
        let at = |k: &str| raw.find(&format!("\"{k}\":")).unwrap();
        assert!(
            at("check") < at("inputs")
                && at("inputs") < at("statistic")
                && at("statistic") < at("threshold")
                && at("threshold") < at("pass")
        );
        assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), verdicts.len());
    }
}
