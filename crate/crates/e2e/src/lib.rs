//! Helpers for driving the `sad-sim` command line in-process.

use std::collections::BTreeMap;
use std::path::Path;

use sad_sim_cli::{main_with, EXIT_OK};

/// Run `sad-sim args...` and return its standard output. Panics with the
/// error text on a non-zero exit.
pub fn sad_sim(args: &[&str]) -> String {
    let argv: Vec<String> = std::iter::once("sad-sim")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(&argv, &mut out, &mut err);
    assert_eq!(code, EXIT_OK, "{args:?}: {}", String::from_utf8_lossy(&err));
    String::from_utf8(out).expect("utf-8 output")
}

/// Every file under `dir`, keyed by relative path.
pub fn file_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in std::fs::read_dir(dir).expect("readable directory") {
        let e = e.expect("directory entry");
        let name = e.file_name().to_string_lossy().into_owned();
        if e.file_type().expect("file type").is_dir() {
            files.extend(
                file_tree(&e.path())
                    .into_iter()
                    .map(|(k, v)| (format!("{name}/{k}"), v)),
            );
        } else {
            files.insert(name, std::fs::read(e.path()).expect("readable file"));
        }
    }
    files
}
