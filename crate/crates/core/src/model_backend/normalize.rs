use unicode_normalization::UnicodeNormalization;

/// Canonical form of a list item: NFC, lowercase, single internal spaces, no
/// outer whitespace and no trailing periods.
pub fn normalize_item(s: &str) -> String {
    let lowered: String = s.to_lowercase().nfc().collect();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c == '.' || c.is_whitespace())
        .to_string()
}
