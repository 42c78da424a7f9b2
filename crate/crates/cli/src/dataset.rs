//! On-disk dataset layout shared by `synth`, `decode` and `eval`:
//!
//! ```text
//! DIR/instances/<stem>.png
//! DIR/classes/<stem>.png
//! DIR/directions/<stem>.png   (synth only)
//! DIR/counts.csv              (optional for eval)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const INSTANCES: &str = "instances";
pub const CLASSES: &str = "classes";
pub const DIRECTIONS: &str = "directions";
pub const COUNTS: &str = "counts.csv";

pub fn png_name(stem: &str) -> String {
    format!("{stem}.png")
}

pub fn create_dirs(root: &Path, subdirs: &[&str]) -> Result<()> {
    for d in subdirs {
        let p = root.join(d);
        std::fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

/// Regular files in `dir`, keyed by file stem, skipping tensor headers.
pub fn files_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries =
        std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    for entry in entries {
        let path = entry
            .with_context(|| format!("reading directory {}", dir.display()))?
            .path();
        if !path.is_file() || path.extension().is_some_and(|e| e == "json") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            bail!("{}: file name is not valid UTF-8", path.display());
        };
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            bail!(
                "{} and {} share the stem `{stem}`",
                prev.display(),
                path.display()
            );
        }
    }
    Ok(out)
}

/// PNG files named on the command line, with directories expanded in name order.
pub fn expand_pngs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("reading directory {}", input.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "png"));
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

/// Pairs two stem maps; any stem present on only one side is an error.
pub fn pair_by_stem(
    left: BTreeMap<String, PathBuf>,
    right: &BTreeMap<String, PathBuf>,
    left_name: &str,
    right_name: &str,
) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let only_left: Vec<&str> = left
        .keys()
        .filter(|k| !right.contains_key(*k))
        .map(String::as_str)
        .collect();
    let only_right: Vec<&str> = right
        .keys()
        .filter(|k| !left.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !only_left.is_empty() || !only_right.is_empty() {
        let mut msg = String::from("unmatched files");
        if !only_left.is_empty() {
            msg += &format!("; only in {left_name}: {}", only_left.join(", "));
        }
        if !only_right.is_empty() {
            msg += &format!("; only in {right_name}: {}", only_right.join(", "));
        }
        bail!(msg);
    }
    Ok(left
        .into_iter()
        .map(|(stem, l)| {
            let r = right[&stem].clone();
            (stem, l, r)
        })
        .collect())
}
