//! Small text helpers shared across modules: identifier canonicalization,
//! a stable 64-bit hash, and tolerant JSON parsing for tool-call payloads.

/// Canonicalize an identifier to `lower_snake_case`.
///
/// Camel-case boundaries become underscores, every non-alphanumeric run
/// collapses to a single underscore, and the result is lowercased.
pub fn to_lower_snake(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 4);
    let mut prev_lower = false;
    let mut prev_underscore = true; // suppress a leading underscore
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            if ch.is_uppercase() && prev_lower && !prev_underscore {
                out.push('_');
            }
            for low in ch.to_lowercase() {
                out.push(low);
            }
            prev_lower = ch.is_lowercase() || ch.is_numeric();
            prev_underscore = false;
        } else {
            if !prev_underscore {
                out.push('_');
            }
            prev_lower = false;
            prev_underscore = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// FNV-1a 64-bit hash. Stable across platforms and releases, which matters
/// because fingerprints and seeds derived from it are persisted.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive a child seed from a root seed and a label, so every pipeline
/// stage and every sample gets an independent, reproducible RNG stream.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(label.len() + 16);
    buf.extend_from_slice(&root.to_le_bytes());
    buf.extend_from_slice(label.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    fnv1a64(&buf)
}

/// Parse JSON, falling back to Python-style payloads that use single-quoted
/// strings (the form tool-call fixtures use). The fallback rewrites
/// single-quoted string literals into double-quoted ones, escaping any
/// embedded double quotes.
pub fn parse_loose_json(text: &str) -> Result<serde_json::Value, String> {
    if let Ok(v) = serde_json::from_str(text.trim()) {
        return Ok(v);
    }
    let rewritten = rewrite_single_quotes(text.trim());
    serde_json::from_str(&rewritten).map_err(|e| e.to_string())
}

fn rewrite_single_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_double = false;
    while let Some(ch) = chars.next() {
        match ch {
            '"' if !in_double => {
                in_double = true;
                out.push(ch);
            }
            '"' if in_double => {
                in_double = false;
                out.push(ch);
            }
            '\\' if in_double => {
                out.push(ch);
                if let Some(next) = chars.next() {
                    out.push(next);
                }
            }
            '\'' if !in_double => {
                out.push('"');
                for inner in chars.by_ref() {
                    match inner {
                        '\'' => break,
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        other => out.push(other),
                    }
                }
                out.push('"');
            }
            other => out.push(other),
        }
    }
    out
}

/// Extract the first balanced `{ ... }` object embedded in a text blob.
/// Used to pull structured payloads out of prompts and generations.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, ch) in text[start..].char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match ch {
            '\\' if in_string => escaped = true,
            '"' => in_string = !in_string,
            '{' if !in_string => depth += 1,
            '}' if !in_string => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + ch.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}
