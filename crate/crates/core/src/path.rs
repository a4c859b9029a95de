//! Repository-relative path normalization shared by the diff and SARIF readers.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path `{0}` escapes the repository root")]
    PathEscape(String),
    #[error("path `{0}` is empty after normalization")]
    Empty(String),
}

/// Normalize a repository-relative path: forward slashes, no leading `/` or
/// `./`, no empty or `.` segments. Any `..` segment is rejected.
pub fn normalize_repo_path(raw: &str) -> Result<String, PathError> {
    let unified = raw.replace('\\', "/");
    let mut parts: Vec<&str> = Vec::new();
    for segment in unified.split('/') {
        match segment {
            "" | "." => {}
            ".." => return Err(PathError::PathEscape(raw.to_owned())),
            s => parts.push(s),
        }
    }
    if parts.is_empty() {
        return Err(PathError::Empty(raw.to_owned()));
    }
    Ok(parts.join("/"))
}

/// Normalize a path taken from a diff header, dropping the `a/` or `b/`
/// prefix git adds.
pub fn normalize_path(raw: &str) -> Result<String, PathError> {
    let trimmed = unquote(raw.trim());
    let stripped = trimmed.strip_prefix("a/").or_else(|| trimmed.strip_prefix("b/")).unwrap_or(&trimmed);
    normalize_repo_path(stripped).map_err(|e| match e {
        PathError::PathEscape(_) => PathError::PathEscape(raw.to_owned()),
        PathError::Empty(_) => PathError::Empty(raw.to_owned()),
    })
}

/// Undo git's C-style quoting of unusual file names (`"a/f\303\266o"`).
fn unquote(raw: &str) -> String {
    let Some(inner) = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) else {
        return raw.to_owned();
    };
    let mut bytes = Vec::with_capacity(inner.len());
    let mut chars = inner.bytes().peekable();
    while let Some(b) = chars.next() {
        if b != b'\\' {
            bytes.push(b);
            continue;
        }
        match chars.next() {
            Some(b'n') => bytes.push(b'\n'),
            Some(b't') => bytes.push(b'\t'),
            Some(b'"') => bytes.push(b'"'),
            Some(b'\\') => bytes.push(b'\\'),
            Some(d @ b'0'..=b'7') => {
                let mut value = u32::from(d - b'0');
                for _ in 0..2 {
                    match chars.peek() {
                        Some(&o @ b'0'..=b'7') => {
                            value = value * 8 + u32::from(o - b'0');
                            chars.next();
                        }
                        _ => break,
                    }
                }
                bytes.push(value as u8);
            }
            Some(other) => bytes.push(other),
            None => bytes.push(b'\\'),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Path components, root excluded.
pub fn components(path: &str) -> impl Iterator<Item = &str> {
    path.split('/').filter(|s| !s.is_empty())
}
