use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pso")).args(args).output().unwrap()
}

fn fixture(descriptor: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    let w = |name: &str, text: &str| fs::write(dir.path().join(name), text).unwrap();
    w("universe.txt", "a1\na2\na3\na4\n");
    w("s1.txt", "a1\na2\n");
    w("s2.txt", "a2\na3\n");
    w("run.toml", descriptor);
    dir
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

const BASE: &str = "universe = \"universe.txt\"\nsets = [\"s1.txt\", \"s2.txt\"]\nkey_bits = 128\nseed = 9\n";

#[test]
fn verify_passes_with_exit_zero() {
    let dir = fixture(&format!("protocol = \"union\"\nmode = \"cardinality\"\n{BASE}"));
    let out = pso(&["verify", &path(&dir, "run.toml")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("pass: cardinality 3"));
}

#[test]
fn detection_exits_with_two() {
    let dir = fixture(&format!(
        "protocol = \"intersection\"\nhardened = true\n{BASE}[adversary]\nparty = 2\nstrategy = \"iv\"\nelement = \"a4\"\n"
    ));
    let out = pso(&["verify", &path(&dir, "run.toml")]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let out = pso(&["run", &path(&dir, "run.toml"), "--transport", "local"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infrastructure_failures_exit_with_three() {
    let dir = fixture("protocol = \"union\"\nuniverse = \"universe.txt\"\nsets = [\"s1.txt\"]\n");
    let out = pso(&["verify", &path(&dir, "run.toml")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("two parties"));
    let out = pso(&["run", &path(&dir, "missing.toml")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn seeded_records_are_byte_identical() {
    let dir = fixture(&format!("protocol = \"union\"\nmode = \"emptiness\"\n{BASE}"));
    let rec = |name: &str| {
        let out = pso(&["run", &path(&dir, "run.toml"), "--record", &path(&dir, name)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.path().join(name)).unwrap()
    };
    let a = rec("a.json");
    let b = rec("b.json");
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!(v.get("timings").is_none());
    assert_eq!(v["result"]["empty"], false);
}

#[test]
fn audit_log_prints_one_line_per_entry() {
    let dir = fixture(&format!("protocol = \"intersection\"\n{BASE}"));
    let out = pso(&["audit-log", &path(&dir, "run.toml")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > 0);
    assert!(text.lines().all(|l| l.split(',').count() == 5), "{text}");
    assert!(text.contains(",finalize,"));
}

#[test]
fn bench_writes_csv() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "sweep.csv");
    let out = pso(&[
        "bench", "--axis", "u", "--values", "4,8", "--key-bits", "128", "--csv", &csv, "--tagging", "1000",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(Path::new(&csv)).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("n,u,alpha,beta,key_bits,"));
    assert_eq!(lines.count(), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("tagging 1000 elements"));
}

#[test]
fn keygen_is_seeded() {
    let a = pso(&["keygen", "--bits", "128", "--seed", "5"]);
    let b = pso(&["keygen", "--bits", "128", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0));
    let ja: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let jb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(ja["public_key"], jb["public_key"]);
    assert_eq!(ja["bits"], 128);
}
