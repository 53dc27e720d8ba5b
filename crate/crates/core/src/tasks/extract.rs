//! Reply post-processing for defined tasks.

/// Inner text of the first fenced code block, or `None` without a closed fence.
pub fn fenced_block(content: &str) -> Option<String> {
    let mut lines = content.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let mut inner = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            return Some(inner.join("\n"));
        }
        inner.push(line);
    }
    None
}

/// Fence-stripped code reply; replies without fences pass through unchanged.
pub fn strip_code_fences(content: &str) -> String {
    fenced_block(content).unwrap_or_else(|| content.to_owned())
}

/// Reduces a comment reply to the comment itself.
///
/// Unwraps a fenced block if there is one, then deletes every verbatim echo
/// of the selected code. The result never contains `selection` as a
/// substring.
pub fn extract_comment(content: &str, selection: &str) -> String {
    let reply = fenced_block(content).unwrap_or_else(|| content.to_owned());
    let mut text = tidy(&reply);

    let tidied = tidy(selection);
    let needles: Vec<&str> = [selection.trim(), tidied.trim(), selection]
        .into_iter()
        .filter(|n| !n.is_empty())
        .collect();
    // removal can splice a new occurrence together, so repeat until none
    while let Some((at, len)) = needles
        .iter()
        .find_map(|n| text.find(n).map(|at| (at, n.len())))
    {
        text.replace_range(at..at + len, "");
    }

    // only cut from the ends so no new occurrence can form
    let first_content = text
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map_or(text.len(), |(i, _)| i);
    let line_start = text[..first_content].rfind('\n').map_or(0, |i| i + 1);
    text[line_start..].trim_end().to_owned()
}

/// Drops leading/trailing blank lines and trailing whitespace on each line.
fn tidy(text: &str) -> String {
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let start = lines.iter().position(|l| !l.is_empty()).unwrap_or(lines.len());
    let end = lines.iter().rposition(|l| !l.is_empty()).map_or(start, |i| i + 1);
    lines[start..end].join("\n")
}
