#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn mavit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mavit"))
        .args(args)
        .env_remove("MAVIT_SEED")
        .output()
        .expect("spawn mavit")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Runs a command that must succeed and returns its report text.
pub fn ok(args: &[&str]) -> String {
    let out = mavit(args);
    assert!(
        out.status.success(),
        "mavit {args:?} exited with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

/// Value of `key` in the given `[section]` of a text report; `None` selects
/// the top level.
pub fn field(report: &str, section: Option<&str>, key: &str) -> Option<String> {
    mavit::report::parse_text(report)
        .into_iter()
        .find(|(s, k, _)| s == section.unwrap_or("") && k == key)
        .map(|(_, _, v)| v)
}

pub fn sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of every file below `dir`, keyed by relative path.
pub fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, sha256(&fs::read(&path).unwrap()));
            }
        }
    }
    out
}

/// One digest over a whole tree.
pub fn tree_digest(dir: &Path) -> String {
    let mut all = String::new();
    for (k, v) in hash_tree(dir) {
        all.push_str(&k);
        all.push(' ');
        all.push_str(&v);
        all.push('\n');
    }
    sha256(all.as_bytes())
}
