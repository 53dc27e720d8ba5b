//! Source-file helpers: line ranges, existing doc comments, and safe
//! in-place rewrites.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Parses `A:B` (or a single `A`) into a 1-based inclusive range.
pub fn parse_lines(spec: &str) -> Result<(usize, usize), String> {
    let (a, b) = spec.split_once(':').unwrap_or((spec, spec));
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid line range {spec:?}; expected A:B"))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if a == 0 || b < a {
        return Err(format!("invalid line range {spec:?}; expected 1 <= A <= B"));
    }
    Ok((a, b))
}

/// The documentation comment directly above 1-based line `start`, if any:
/// a `/* ... */` block ending on the previous line, or a run of `//`, `///`
/// or `#` lines. Blank lines in between break the association.
pub fn comment_above(content: &str, start: usize) -> Option<String> {
    let lines: Vec<&str> = content.lines().collect();
    if start < 2 || start > lines.len() + 1 {
        return None;
    }
    let above = &lines[..start - 1];
    let last = above.last()?.trim();

    let first = if last.ends_with("*/") {
        above.iter().rposition(|l| l.trim_start().starts_with("/*"))?
    } else {
        let prefix = ["///", "//", "#"].into_iter().find(|p| last.starts_with(p))?;
        let run = above
            .iter()
            .rev()
            .take_while(|l| l.trim_start().starts_with(prefix))
            .count();
        above.len() - run
    };
    let block = above[first..].join("\n");
    Some(dedent(&block))
}

fn dedent(block: &str) -> String {
    let indent = block
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    block
        .lines()
        .map(|l| l.get(indent..).unwrap_or(l.trim_start()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn backup_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".bak");
    path.with_file_name(name)
}

/// Replaces `path` with `new_content`, keeping the previous bytes in
/// `path.bak`. Fails without touching `path` if its content is no longer
/// `expected`. The new file is written beside the old one and renamed over
/// it, so readers see either version in full.
pub fn rewrite_with_backup(path: &Path, expected: &str, new_content: &str) -> Result<PathBuf, String> {
    let current = fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    if current != expected.as_bytes() {
        return Err(format!("{} changed while the comment was generated; not rewriting", path.display()));
    }
    let backup = backup_path(path);
    fs::write(&backup, &current).map_err(|e| format!("cannot write {}: {e}", backup.display()))?;

    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| format!("cannot create temp file: {e}"))?;
    tmp.write_all(new_content.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| format!("cannot write temp file: {e}"))?;
    if let Ok(meta) = fs::metadata(path) {
        let _ = fs::set_permissions(tmp.path(), meta.permissions());
    }
    tmp.persist(path)
        .map_err(|e| format!("cannot replace {}: {}", path.display(), e.error))?;
    Ok(backup)
}
