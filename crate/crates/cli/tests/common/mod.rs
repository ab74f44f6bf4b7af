#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", self.stdout))
    }
}

pub fn mpcn(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mpcn").chain(args.iter().copied());
    let code = mpcn_cli::run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Runs and insists on exit code 0.
pub fn ok(args: &[&str]) -> Run {
    let r = mpcn(args);
    assert_eq!(r.code, 0, "mpcn {args:?} failed:\n{}", r.stderr);
    r
}

pub fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/tiny_corpus.jsonl")
}

pub fn schema(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../docs/schemas/{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap()
}

pub fn validate(name: &str, instance: &Value) -> Result<(), String> {
    let s = schema(name);
    let v = jsonschema::validator_for(&s).map_err(|e| format!("schema {name}: {e}"))?;
    let errors: Vec<String> = v.iter_errors(instance).map(|e| e.to_string()).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("{name}: {}", errors.join("; ")))
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Prepares the fixture corpus into `dir/snap.json`.
pub fn prepare_fixture(dir: &Path) -> PathBuf {
    let snap = dir.join("snap.json");
    let corpus = fixture();
    ok(&["prepare", "--corpus", s(&corpus), "--out", s(&snap), "--k-core", "3", "--min-count", "1"]);
    snap
}

/// Tiny MPCN trained on the fixture, in 64-bit.
pub fn train_tiny_mpcn(dir: &Path, snap: &Path, pointers: usize) -> PathBuf {
    let ck = dir.join(format!("mpcn{pointers}.json"));
    let p = pointers.to_string();
    ok(&[
        "--seed", "3", "train", "--snapshot", s(snap), "--model", "mpcn", "--out", s(&ck), "--pointers", &p,
        "--embed-dim", "6", "--epochs", "2", "--patience", "1", "--precision", "f64", "--quiet",
    ]);
    ck
}
