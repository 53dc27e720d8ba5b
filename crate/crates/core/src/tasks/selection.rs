use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionError {
    #[error("selection start line {start} is after end line {end}")]
    Inverted { start: usize, end: usize },
    #[error("line numbers are 1-based; got {0}")]
    ZeroLine(usize),
    #[error("selection text is empty")]
    EmptyText,
    #[error("selection lines {start}-{end} are outside the file ({lines} lines)")]
    OutOfRange { start: usize, end: usize, lines: usize },
    #[error("selection text does not match lines {start}-{end} of the file")]
    TextMismatch { start: usize, end: usize },
}

/// A range of source lines picked in the editor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSelection {
    pub file_path: PathBuf,
    pub language_id: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    /// 1-based, inclusive.
    pub end_line: usize,
    pub text: String,
}

impl CodeSelection {
    /// Cuts lines `start..=end` out of `content`.
    pub fn from_content(
        file_path: impl Into<PathBuf>,
        language_id: impl Into<String>,
        start_line: usize,
        end_line: usize,
        content: &str,
    ) -> Result<Self, SelectionError> {
        check_range(start_line, end_line, content)?;
        let text = content
            .lines()
            .skip(start_line - 1)
            .take(end_line - start_line + 1)
            .collect::<Vec<_>>()
            .join("\n");
        let selection = Self {
            file_path: file_path.into(),
            language_id: language_id.into(),
            start_line,
            end_line,
            text,
        };
        selection.validate()?;
        Ok(selection)
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.start_line == 0 {
            return Err(SelectionError::ZeroLine(self.start_line));
        }
        if self.start_line > self.end_line {
            return Err(SelectionError::Inverted {
                start: self.start_line,
                end: self.end_line,
            });
        }
        if self.text.trim().is_empty() {
            return Err(SelectionError::EmptyText);
        }
        Ok(())
    }

    /// Checks range and text against the file the selection came from.
    pub fn check_against(&self, content: &str) -> Result<(), SelectionError> {
        self.validate()?;
        check_range(self.start_line, self.end_line, content)?;
        let expected: Vec<&str> = content
            .lines()
            .skip(self.start_line - 1)
            .take(self.end_line - self.start_line + 1)
            .collect();
        let normalized = self.text.replace("\r\n", "\n");
        let actual: Vec<&str> = normalized.trim_end_matches('\n').split('\n').collect();
        if expected != actual {
            return Err(SelectionError::TextMismatch {
                start: self.start_line,
                end: self.end_line,
            });
        }
        Ok(())
    }
}

fn check_range(start: usize, end: usize, content: &str) -> Result<(), SelectionError> {
    if start == 0 {
        return Err(SelectionError::ZeroLine(start));
    }
    if start > end {
        return Err(SelectionError::Inverted { start, end });
    }
    let lines = content.lines().count();
    if end > lines {
        return Err(SelectionError::OutOfRange { start, end, lines });
    }
    Ok(())
}

/// Editor language id guessed from a file extension.
pub fn language_for_path(path: &Path) -> Option<&'static str> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    Some(match ext.as_str() {
        "java" => "java",
        "py" => "python",
        "rs" => "rust",
        "js" | "mjs" | "cjs" => "javascript",
        "ts" => "typescript",
        "go" => "go",
        "c" | "h" => "c",
        "cc" | "cpp" | "cxx" | "hpp" => "cpp",
        "cs" => "csharp",
        "kt" => "kotlin",
        "rb" => "ruby",
        "php" => "php",
        "swift" => "swift",
        "scala" => "scala",
        _ => return None,
    })
}
