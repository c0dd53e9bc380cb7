use std::path::Path;
use std::process::{Command, Output};

fn poromeso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poromeso")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, extra: &str) -> String {
    let out = dir.join(format!("{name}_out"));
    let text = format!(
        "mode = \"fine\"\nseed = 3\n{extra}\n[scenario]\nkind = \"pressurized_block\"\n[output]\ndir = {:?}\nwall_time = false\n",
        out.to_str().unwrap()
    );
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let cfg = write_config(dir.path(), name, "");
        let out = poromeso(&["run", &cfg]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |n: &str| std::fs::read(dir.path().join(format!("{n}_out/series.csv"))).unwrap();
    assert_eq!(read("a"), read("b"));
    assert!(dir.path().join("a_out/summary.json").exists());
}

#[test]
fn unknown_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad", "mystery_knob = 1");
    let out = poromeso(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_knob"));
}

#[test]
fn missing_config_exits_with_2() {
    let out = poromeso(&["run", "/nonexistent/poromeso.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn self_compare_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a", "");
    assert!(poromeso(&["run", &cfg]).status.success());
    let a = dir.path().join("a_out");
    let a = a.to_str().unwrap();
    let out = poromeso(&["compare", a, a]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("load deviation    0.0000e0"), "{text}");
    assert!(text.trim_end().ends_with("PASS"));
    assert_eq!(poromeso(&["compare", a, a, "--tol", "-1"]).status.code(), Some(2));
}

#[test]
fn short_seed_list_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "batch", "");
    let out = poromeso(&["batch", &cfg, "--n", "3", "--seeds", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_seeds_give_zero_band() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "batch", "");
    let out = Command::new(env!("CARGO_BIN_EXE_poromeso"))
        .args(["batch", &cfg, "--n", "2", "--seeds", "5,5"])
        .env("POROMESO_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("batch_out/batch.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "flux_std").unwrap();
    for rec in rd.records() {
        assert_eq!(rec.unwrap()[col].parse::<f64>().unwrap(), 0.0);
    }
    let meta = std::fs::read_to_string(dir.path().join("batch_out/batch_summary.json")).unwrap();
    assert!(meta.contains("\"completed\": 2"), "{meta}");
}
