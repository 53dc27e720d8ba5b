//! Inserting a generated comment into the source it documents.

use multimind_core::tasks::SelectionError;

/// Returns `content` with `comment` inserted immediately above line
/// `start_line` (1-based), indented like that line. Every original byte is
/// kept; the inserted lines use the file's line ending.
pub fn insert_comment(content: &str, start_line: usize, comment: &str) -> Result<String, SelectionError> {
    let lines = line_count(content);
    if start_line == 0 || start_line > lines {
        return Err(SelectionError::OutOfRange {
            start: start_line,
            end: start_line,
            lines,
        });
    }

    let offset = line_offset(content, start_line);
    let target = &content[offset..];
    let indent: &str = &target[..target.len() - target.trim_start_matches([' ', '\t']).len()];
    let eol = if line_ending_is_crlf(content, offset) { "\r\n" } else { "\n" };

    let mut block = String::new();
    for line in reindent(comment) {
        if !line.is_empty() {
            block.push_str(indent);
            block.push_str(&line);
        }
        block.push_str(eol);
    }

    let mut out = String::with_capacity(content.len() + block.len());
    out.push_str(&content[..offset]);
    out.push_str(&block);
    out.push_str(target);
    Ok(out)
}

/// Comment lines with their common leading indentation removed.
fn reindent(comment: &str) -> Vec<String> {
    let lines: Vec<&str> = comment.lines().map(|l| l.trim_end()).collect();
    let common = lines
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| l.len() - l.trim_start_matches([' ', '\t']).len())
        .min()
        .unwrap_or(0);
    lines
        .iter()
        .map(|l| if l.is_empty() { String::new() } else { l[common..].to_owned() })
        .collect()
}

fn line_count(content: &str) -> usize {
    content.lines().count()
}

/// Byte offset where 1-based line `line` starts.
fn line_offset(content: &str, line: usize) -> usize {
    if line == 1 {
        return 0;
    }
    content
        .match_indices('\n')
        .nth(line - 2)
        .map_or(content.len(), |(i, _)| i + 1)
}

/// Line ending of the line at `offset`, falling back to the file's first
/// line ending for a final line without one.
fn line_ending_is_crlf(content: &str, offset: usize) -> bool {
    let rest = &content[offset..];
    let probe = if rest.contains('\n') { rest } else { content };
    match probe.find('\n') {
        Some(i) => i > 0 && probe.as_bytes()[i - 1] == b'\r',
        None => false,
    }
}
