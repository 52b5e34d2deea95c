use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn omp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn rip_on_correlated_pair() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "phi.txt", "2 2\n1 0.6\n0 0.8\n");
    let o = omp(&["rip", "--matrix", &m, "--order", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("delta=0.6\n"), "{out}");
    assert!(out.contains("witness={1,2}\n"), "{out}");
    assert!(out.contains("subsets=1\n"), "{out}");
}

#[test]
fn counterexample_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = omp(&["counterexample", "--k", "3", "--m", "8", "--out-dir", d]);
    assert!(o.status.success());
    for f in ["phi.txt", "x.txt", "noise.txt", "y.txt", "manifest.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let o = omp(&["check", "--matrix", &p("phi.txt"), "--signal", &p("x.txt"), "--noise", &p("noise.txt")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("K=3\n"));
    assert!(out.contains("SNR=3\n"));
    assert!(out.contains("MAR=1\n"));
    assert!(out.contains("delta_4=0\n"));
    assert!(out.contains("THM2_NECESSARY=fail"));
    assert!(out.contains("REMARK_SNR_GT_K=fail"));

    let o = omp(&["run", "--matrix", &p("phi.txt"), "--vector", &p("y.txt"), "--k", "3", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["iterations"].as_array().unwrap().len(), 3);
    assert_eq!(v["iterations"][0]["tie_detected"], true);
}

#[test]
fn run_rules_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "phi.txt", "3 3\n1 0 0\n0 1 0\n0 0 1\n");
    let y = write(dir.path(), "y.txt", "3\n2 0 0.5\n");
    let o = omp(&["run", "--matrix", &m, "--vector", &y, "--residual", "0.6"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("# support {1}"), "{}", stdout(&o));

    let o = omp(&["run", "--matrix", &m, "--vector", &y]);
    assert_eq!(o.status.code(), Some(1));

    let bad = write(dir.path(), "bad.txt", "2 2\n1 2 3\n");
    let o = omp(&["rip", "--matrix", &bad, "--order", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt"));

    let o = omp(&["rip", "--matrix", &m, "--order", "2", "--cap", "2"]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(omp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(omp(&["--help"]).status.code(), Some(0));
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.cfg",
        "seed=3\ntrials=10\nm=8\nn=12\nk=1,2\nsnr=noise-free,10\nmatrix=gaussian\nexact_delta=true\n",
    );
    let mut csvs = Vec::new();
    for (name, serial) in [("a", true), ("b", false)] {
        let out = dir.path().join(name);
        let mut args = vec!["experiment", "--config", &cfg, "--diagnostics", "--out-dir", out.to_str().unwrap()];
        if serial {
            args.push("--serial");
        }
        let o = omp(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("manifest.json").exists());
        csvs.push((fs::read(out.join("trials.csv")).unwrap(), fs::read(out.join("cells.csv")).unwrap()));
    }
    assert_eq!(csvs[0], csvs[1]);
    let header = String::from_utf8_lossy(&csvs[0].0).lines().next().unwrap().to_string();
    assert!(header.starts_with("trial_id,"), "{header}");
}

#[test]
fn calibrate_reports_constant() {
    let o = omp(&["calibrate-c", "--trials", "10", "--k", "1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("C*="), "{out}");
    assert!(out.contains("points=60\n") && out.contains("skipped=0\n"), "{out}");
}
