use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sensocom"));
    cmd.args(args).arg("--out").arg(out);
    match threads {
        Some(t) => cmd.env("SENSOCOM_THREADS", t),
        None => cmd.env_remove("SENSOCOM_THREADS"),
    };
    cmd.output().expect("run sensocom")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                map.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    map
}

fn assert_reproducible(args: &[&str]) -> BTreeMap<String, Vec<u8>> {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in [None, Some("1"), Some("3")].into_iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        let o = run(args, &dir, threads);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        outputs.push(files(&dir));
    }
    assert!(!outputs[0].is_empty());
    assert!(outputs[0].contains_key("manifest.json"));
    for other in &outputs[1..] {
        assert_eq!(&outputs[0], other, "{args:?} differs between runs");
    }
    outputs.swap_remove(0)
}

#[test]
fn scp_is_byte_identical_across_runs_and_threads() {
    let out = assert_reproducible(&["scp", "--env", "room4", "--n", "40", "--seed", "3"]);
    assert!(out.contains_key("scp.csv") && out.contains_key("scp.json") && out.contains_key("scp.svg"));
    let csv = String::from_utf8(out["scp.csv"].clone()).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn detect_and_objmap_are_reproducible() {
    assert_reproducible(&["detect", "--dof", "base_rotation", "--n", "12", "--seed", "1"]);
    assert_reproducible(&["objmap", "--dof", "1", "--cell", "1.0", "--m", "2", "--seq-len", "10"]);
}

#[test]
fn explore_and_baselines_are_reproducible() {
    let out = assert_reproducible(&[
        "explore", "--table-n", "30", "--seeds", "3", "--step-cap", "500", "--cem-iterations", "1", "--seed", "2",
    ]);
    assert!(out.contains_key("steps.csv") && out.contains_key("curves.csv"));
    assert_reproducible(&["baselines", "--n", "40", "--epochs", "1", "--scp-n", "20"]);
}

#[test]
fn few_seeds_warn_about_power() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["explore", "--table-n", "20", "--seeds", "5", "--step-cap", "200", "--no-cem"], tmp.path(), None);
    assert!(o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("low power"), "{err}");
    assert!(!err.contains("significance tests skipped"));
    let report = std::fs::read_to_string(tmp.path().join("report.json")).unwrap();
    assert!(report.contains("low power"));
}

#[test]
fn missing_fixture_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let o = run(&["scp", "--env", "no/such/scene.json", "--n", "10"], &dir, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    assert!(!dir.exists());
}

#[test]
fn invalid_thread_count_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["scp", "--n", "10"], tmp.path(), Some("many"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_flags_joint_limit_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["validate", "--trials", "100", "--residue-pairs", "20", "--oracle-n", "500"];
    let ok = run(&args, &tmp.path().join("ok"), None);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let mut faulty = args.to_vec();
    faulty.extend(["--agent", "joint_limit_fault"]);
    let bad = run(&faulty, &tmp.path().join("bad"), None);
    assert_eq!(bad.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL") && l.contains("permutation_invariance")), "{stdout}");
    assert!(tmp.path().join("bad/validate.json").exists());
}

#[test]
fn sweep_writes_one_table_per_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--n", "10"], tmp.path(), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tables = std::fs::read_dir(tmp.path().join("tables")).unwrap().count();
    assert_eq!(tables, 8);
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 8 * 8);
    assert!(tmp.path().join("sweep.svg").exists());
}
