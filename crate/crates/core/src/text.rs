//! Small text utilities shared by the lexicon, mapper and evaluator.

/// Lowercases `s` one scalar value at a time.
///
/// `str::to_lowercase` applies context-sensitive rules (final sigma), which
/// would make the lowercase form of a substring depend on what surrounds it.
/// The matcher walks text a character at a time, so everything that has to
/// agree with it lowercases per character.
pub fn fold_case(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

/// Trims and collapses every internal whitespace run to a single space.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Quote characters recognized around extracted strings, including the
/// typographic variants models tend to emit.
pub const QUOTE_CHARS: [char; 8] = ['\'', '"', '`', '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{2032}'];

pub fn is_quote(c: char) -> bool {
    QUOTE_CHARS.contains(&c)
}

/// Matching key for extracted and gold strings: case-folded, trimmed,
/// whitespace collapsed, surrounding quotes stripped.
pub fn normalize_surface(s: &str) -> String {
    let mut cur = collapse_whitespace(&fold_case(s));
    loop {
        let stripped = cur.trim_matches(is_quote).trim();
        if stripped.len() == cur.len() {
            return cur;
        }
        cur = stripped.to_string();
    }
}

/// Alphanumeric test used for word boundaries.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Byte offset of every char boundary in `s`, including `s.len()` at the end.
///
/// `offsets[i]` is the byte position of the `i`-th character, so a character
/// span `[start, end)` maps to `&s[offsets[start]..offsets[end]]`.
pub fn char_boundaries(s: &str) -> Vec<usize> {
    let mut v: Vec<usize> = s.char_indices().map(|(i, _)| i).collect();
    v.push(s.len());
    v
}

/// Slices `s` by character offsets. Returns `None` when out of range.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut it = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let b_start = it.nth(start)?;
    let b_end = if end == start {
        b_start
    } else {
        it.nth(end - start - 1)?
    };
    Some(&s[b_start..b_end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_normalization() {
        assert_eq!(normalize_surface("  Plavix "), "plavix");
        assert_eq!(normalize_surface("81  mg"), "81 mg");
        assert_eq!(normalize_surface("'ASA'"), "asa");
        assert_eq!(normalize_surface("\u{2018} ASA' "), "asa");
        assert_eq!(normalize_surface("Crohn's"), "crohn's");
        for s in ["' 'x' '", "\"a\"", " ''  "] {
            let once = normalize_surface(s);
            assert_eq!(normalize_surface(&once), once);
        }
    }

    #[test]
    fn collapse() {
        assert_eq!(collapse_whitespace("  81 \t mg\n"), "81 mg");
        assert_eq!(collapse_whitespace(""), "");
    }

    #[test]
    fn fold_is_per_char() {
        // 'Σ' lowercases to 'σ' regardless of position.
        assert_eq!(fold_case("ΟΔΟΣ"), "οδοσ");
    }

    #[test]
    fn char_slicing() {
        let s = "né aspirin";
        assert_eq!(char_slice(s, 3, 10), Some("aspirin"));
        assert_eq!(char_slice(s, 0, 2), Some("né"));
        assert_eq!(char_slice(s, 10, 10), Some(""));
        assert_eq!(char_slice(s, 3, 11), None);
        let b = char_boundaries(s);
        assert_eq!(&s[b[3]..b[10]], "aspirin");
    }
}
