//! The 29-character substitution alphabet: `a`–`z`, space, full stop, comma.

pub const SIZE: usize = 29;

pub const ALPHABET: [char; SIZE] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r',
    's', 't', 'u', 'v', 'w', 'x', 'y', 'z', ' ', '.', ',',
];

/// Position of `c` in [`ALPHABET`]. Case-sensitive: callers lowercase first.
pub fn index(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        ' ' => Some(26),
        '.' => Some(27),
        ',' => Some(28),
        _ => None,
    }
}

pub fn contains(c: char) -> bool {
    index(c).is_some()
}

/// Characters that end a word.
pub fn is_terminator(c: char) -> bool {
    matches!(c, ' ' | '.' | ',' | '\n')
}

/// Name used for `c` in layout and matrix files.
pub fn token(c: char) -> String {
    match c {
        ' ' => "SPACE".to_string(),
        '.' => "PERIOD".to_string(),
        ',' => "COMMA".to_string(),
        other => other.to_string(),
    }
}

pub fn from_token(tok: &str) -> Option<char> {
    match tok {
        "SPACE" => Some(' '),
        "PERIOD" => Some('.'),
        "COMMA" => Some(','),
        _ => {
            let mut chars = tok.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Some(c),
                _ => None,
            }
        }
    }
}

/// Lowercase form used for model lookups, if the character has a single-char lowercase.
pub fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// Re-applies the case of `like` to `c`.
pub fn match_case(c: char, like: char) -> char {
    if like.is_uppercase() {
        let mut upper = c.to_uppercase();
        match (upper.next(), upper.next()) {
            (Some(u), None) => u,
            _ => c,
        }
    } else {
        c
    }
}
