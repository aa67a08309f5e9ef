//! Bundled English stopword list, overridable from a file with one token per
//! line.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// 175 common English words, including bare contraction fragments left over
/// after punctuation stripping ("don", "t", "ve", ...).
pub const BUNDLED: [&str; 175] = [
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for",
    "with", "about", "against", "between", "into", "through", "during", "before", "after",
    "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
    "again", "further", "then", "once", "here", "there", "when", "where", "why", "how", "all",
    "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
    "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don",
    "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "couldn", "didn",
    "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn", "needn", "shan",
    "shouldn", "wasn", "weren", "won", "wouldn", "also", "would", "could", "might", "must",
    "shall", "may", "ought", "im", "ive", "id", "youre", "youve", "thats", "cant", "wont",
    "dont", "doesnt", "didnt", "isnt", "wasnt", "arent",
];

pub fn bundled() -> BTreeSet<String> {
    BUNDLED.iter().map(|s| s.to_string()).collect()
}

/// Loads a stopword file: one token per line, blank lines ignored, tokens
/// lowercased.
pub fn load(path: &Path) -> Result<BTreeSet<String>> {
    let contents =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(contents
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_list_has_175_unique_words() {
        let set = bundled();
        assert_eq!(BUNDLED.len(), 175);
        assert_eq!(set.len(), 175);
        assert!(set.contains("the"));
        assert!(set.contains("are"));
    }
}
