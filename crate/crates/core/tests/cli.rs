use std::path::Path;
use std::process::{Command, Output};

fn reapsnap(out: &Path, args: &[&str]) -> Output {
    let cfg = out.join("small.conf");
    if !cfg.exists() {
        std::fs::write(&cfg, "num_pages = 8192\nprofiles = helloworld\n").unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_reapsnap"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("REAPSNAP_OUT")
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(reapsnap(out, &["--help"]).status.code(), Some(0));
    assert_eq!(reapsnap(out, &["bogus"]).status.code(), Some(1));
    assert_eq!(reapsnap(out, &["record", "--profile", "nope"]).status.code(), Some(1));
    assert_eq!(reapsnap(out, &["analyze"]).status.code(), Some(1));
    std::fs::write(out.join("bad.cal"), "not a calibration").unwrap();
    let cal = out.join("bad.cal");
    assert_eq!(reapsnap(out, &["--calibration", cal.to_str().unwrap(), "record", "--profile", "helloworld"]).status.code(), Some(1));
    let missing = out.join("missing.bin");
    assert_eq!(reapsnap(out, &["analyze", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn coldstart_csv_is_deterministic() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        ok(&reapsnap(out, &["snapshot", "create"]));
        let rec = ok(&reapsnap(out, &["record", "--profile", "helloworld"]));
        assert!(out.join("record/helloworld/trace.bin").exists());
        assert!(out.join("record/helloworld/ws.bin").exists());
        let stdout = ok(&reapsnap(out, &["coldstart", "--profile", "helloworld", "--mode", "prefetch", "--repeats", "2"]));
        let csv = std::fs::read(out.join("results.csv")).unwrap();
        (rec, stdout, csv)
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let header = String::from_utf8(a.2).unwrap();
    assert!(header.starts_with("function,mode,"), "{header}");
}

#[test]
fn out_env_sets_results_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_reapsnap"))
        .args(["snapshot", "create", "--pages", "4096"])
        .env("REAPSNAP_OUT", &out)
        .output()
        .unwrap();
    ok(&o);
    assert!(out.join("image").is_dir());

    let flag = dir.path().join("from-flag");
    let o = Command::new(env!("CARGO_BIN_EXE_reapsnap"))
        .args(["--out", flag.to_str().unwrap(), "snapshot", "create", "--pages", "4096"])
        .env("REAPSNAP_OUT", &out)
        .output()
        .unwrap();
    ok(&o);
    assert!(flag.join("image").is_dir());
}

#[test]
fn json_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&reapsnap(out, &["snapshot", "create"]));
    let json = ok(&reapsnap(out, &["--format", "json", "record", "--profile", "helloworld"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v.is_object());
    let t = out.join("record/helloworld/trace.bin");
    let csv = ok(&reapsnap(out, &["analyze", t.to_str().unwrap(), t.to_str().unwrap()]));
    assert!(csv.contains("1.0") || csv.contains(",1\n") || csv.contains(",1,"), "{csv}");
}
