/// Lowercases `text` and splits it on every non-alphanumeric character.
///
/// Punctuation is dropped; digits stay attached to adjacent letters
/// (`"S&P500"` → `["s", "p500"]`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
