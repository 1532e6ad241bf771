//! Acceptance criterion 12: repeated suite runs with a fixed seed produce
//! byte-identical CSV/JSON artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_translab")
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn collect_artifacts(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_12_suite_artifacts_are_deterministic() {
    let root = repo_root();
    let manifest = root.join("suite/regression.toml");
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("run_a");
    let out_b = tmp.path().join("run_b");
    for out in [&out_a, &out_b] {
        let status = Command::new(bin())
            .arg("suite")
            .arg(&manifest)
            .arg("--out")
            .arg(out)
            .current_dir(&root)
            .env_remove("TRANSLAB_OUT_DIR")
            .status()
            .unwrap();
        assert!(status.success(), "regression suite must pass on a correct build");
    }
    let a = collect_artifacts(&out_a);
    let b = collect_artifacts(&out_b);
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 3 * 25 + 1, "expected per-case artifacts plus the summary");
    let mut compared = 0;
    for (name, bytes) in &a {
        let other = b.get(name).unwrap_or_else(|| panic!("missing artifact {name}"));
        assert_eq!(bytes, other, "artifact {name} differs between runs");
        compared += 1;
    }
    eprintln!(
        "criterion 12 (determinism): PASS  {compared} artifacts byte-identical across suite runs"
    );
}
