//! Small parsing helpers shared by the responder, strategy, and judge
//! parsers: tag-delimited sections, leading evidence indices, enumerated
//! lists.

/// Text following `tag`, cut at the next occurrence of any tag in `stops`,
/// trimmed. `None` when `tag` does not occur.
pub(crate) fn section_after<'a>(raw: &'a str, tag: &str, stops: &[&str]) -> Option<&'a str> {
    let start = raw.find(tag)? + tag.len();
    let rest = &raw[start..];
    let end = stops.iter().filter_map(|s| rest.find(s)).min().unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Leading decimal integer of a line — the stable key for evidence lookup.
pub(crate) fn leading_index(line: &str) -> Option<u32> {
    let trimmed = line.trim_start();
    let digits = &trimmed[..trimmed.chars().take_while(char::is_ascii_digit).count()];
    if digits.is_empty() {
        None
    } else {
        digits.parse().ok()
    }
}

/// Split a block into enumerated items: non-empty lines with any leading
/// list marker (`1.`, `2)`, `-`, `*`, `•`) stripped.
pub(crate) fn split_enumerated_items(block: &str) -> Vec<String> {
    static ITEM_PREFIX: std::sync::LazyLock<regex::Regex> = std::sync::LazyLock::new(|| {
        regex::Regex::new(r"^\s*(?:\d+\s*[.):]\s*|[-*•]\s*)").expect("static pattern compiles")
    });
    block
        .lines()
        .map(|line| ITEM_PREFIX.replace(line, "").trim().to_string())
        .filter(|item| !item.is_empty())
        .collect()
}
