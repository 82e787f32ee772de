use std::path::{Component, Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Absolute, lexically normalized path; existing prefixes are canonicalized
/// so symlinks and `..` resolve the same way for inputs and outputs.
pub fn normalize(p: &Path) -> PathBuf {
    let abs = if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().unwrap_or_default().join(p)
    };
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            Component::ParentDir => {
                out.pop();
            }
            Component::CurDir => {}
            other => out.push(other),
        }
    }
    // Canonicalize the longest existing ancestor.
    let mut tail = Vec::new();
    let mut head = out.clone();
    loop {
        if let Ok(real) = head.canonicalize() {
            let mut r = real;
            for part in tail.iter().rev() {
                r.push(part);
            }
            return r;
        }
        match (head.file_name().map(|s| s.to_os_string()), head.parent()) {
            (Some(name), Some(parent)) => {
                tail.push(name);
                head = parent.to_path_buf();
            }
            _ => return out,
        }
    }
}

pub fn require_exists(p: &Path, what: &str) -> CliResult<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", p.display())))
    }
}

/// Refuse outputs that equal, contain or sit inside an input or each other.
pub fn check_collisions(inputs: &[&Path], outputs: &[&Path]) -> CliResult<()> {
    let ins: Vec<PathBuf> = inputs.iter().map(|p| normalize(p)).collect();
    let outs: Vec<PathBuf> = outputs.iter().map(|p| normalize(p)).collect();
    for (o, raw) in outs.iter().zip(outputs) {
        for (i, input) in ins.iter().zip(inputs) {
            if o.starts_with(i) || i.starts_with(o) {
                return Err(CliError::usage(format!(
                    "output {} collides with input {}",
                    raw.display(),
                    input.display()
                )));
            }
        }
    }
    for (a, o) in outs.iter().enumerate() {
        for p in &outs[a + 1..] {
            if o.starts_with(p) || p.starts_with(o) {
                return Err(CliError::usage(format!("outputs {} and {} collide", o.display(), p.display())));
            }
        }
    }
    Ok(())
}

/// A directory output may replace an empty directory, or anything with `force`.
pub fn check_dir_output(p: &Path, force: bool) -> CliResult<()> {
    if force || !p.exists() {
        return Ok(());
    }
    if !p.is_dir() {
        return Err(CliError::usage(format!("{} exists and is not a directory", p.display())));
    }
    let empty = std::fs::read_dir(p)
        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        .next()
        .is_none();
    if empty {
        Ok(())
    } else {
        Err(CliError::usage(format!("{} is not empty; pass --force to replace it", p.display())))
    }
}
