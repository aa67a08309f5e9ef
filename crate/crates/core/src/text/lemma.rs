//! Deterministic suffix-rule lemmatizer.
//!
//! Handles plural -s/-es, progressive -ing and past -ed, with consonant
//! undoubling and silent-e restoration. Rules run on lowercase tokens and
//! are intentionally narrow; irregular forms pass through unchanged.

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn has_vowel(s: &[u8]) -> bool {
    s.iter().any(|&c| is_vowel(c))
}

/// Doubled final consonant from suffixation (stopp-, runn-), excluding
/// legitimate doubles like -ll/-ss/-zz.
fn ends_doubled_consonant(s: &[u8]) -> bool {
    if s.len() < 2 {
        return false;
    }
    let (a, b) = (s[s.len() - 2], s[s.len() - 1]);
    a == b && !is_vowel(a) && !matches!(a, b'l' | b's' | b'z')
}

/// Consonant-vowel-consonant ending where the final consonant is not w/x/y;
/// such stems usually lost a silent e (mak-, hop-).
fn ends_cvc(s: &[u8]) -> bool {
    if s.len() < 3 {
        return false;
    }
    let (a, b, c) = (s[s.len() - 3], s[s.len() - 2], s[s.len() - 1]);
    !is_vowel(a) && is_vowel(b) && !is_vowel(c) && !matches!(c, b'w' | b'x' | b'y')
}

fn strip_ing_ed(token: &str, suffix: &str) -> Option<String> {
    let stem = token.strip_suffix(suffix)?;
    // Keep short stems intact ("ring", "red").
    if stem.len() < 2 || !has_vowel(stem.as_bytes()) {
        return None;
    }
    let bytes = stem.as_bytes();
    if ends_doubled_consonant(bytes) {
        return Some(stem[..stem.len() - 1].to_string());
    }
    if ends_cvc(bytes) {
        return Some(format!("{stem}e"));
    }
    Some(stem.to_string())
}

/// Lemmatizes a single lowercase token.
pub fn lemmatize(token: &str) -> String {
    if token.len() <= 3 {
        return token.to_string();
    }

    if let Some(stem) = token.strip_suffix("ies") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = token.strip_suffix("ied") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    if let Some(out) = strip_ing_ed(token, "ing") {
        return out;
    }
    if let Some(out) = strip_ing_ed(token, "ed") {
        return out;
    }
    if let Some(stem) = token.strip_suffix("sses") {
        return format!("{stem}ss");
    }
    if let Some(stem) = token.strip_suffix("es") {
        // boxes -> box, dishes -> dish, but leave e-stem words (pages -> page).
        if stem.ends_with('x')
            || stem.ends_with('z')
            || stem.ends_with("ch")
            || stem.ends_with("sh")
            || stem.ends_with('s')
        {
            return stem.to_string();
        }
    }
    if let Some(stem) = token.strip_suffix('s') {
        if !stem.ends_with('s') && !stem.ends_with('u') && !stem.is_empty() {
            return stem.to_string();
        }
    }
    token.to_string()
}
