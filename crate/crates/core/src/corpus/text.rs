use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases, splits on whitespace and emits every ASCII punctuation
/// character as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
        } else if ch.is_ascii_punctuation() {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
            out.push(String::from(ch));
        } else {
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Lowercase, trim, collapse internal whitespace.
pub fn normalize_value(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for (i, w) in s.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(w.chars().flat_map(char::to_lowercase));
    }
    out
}

/// The classic 179-word English stop-word list.
pub const STOP_WORDS: [&str; 179] = [
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
    "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
    "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
    "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
    "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
    "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
    "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan",
    "shan't", "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't",
    "wouldn", "wouldn't",
];

pub fn stop_words() -> BTreeSet<&'static str> {
    STOP_WORDS.iter().copied().collect()
}

/// Non-stop-word tokens of `sentences`, punctuation dropped.
pub fn persona_keywords<S: AsRef<str>>(
    sentences: impl IntoIterator<Item = S>,
    stop: &BTreeSet<&str>,
) -> BTreeSet<String> {
    sentences
        .into_iter()
        .flat_map(|s| tokenize(s.as_ref()))
        .filter(|w| w.chars().any(char::is_alphanumeric) && !stop.contains(w.as_str()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tokenizer_splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Hello, World!  I'm  HERE."),
            vec!["hello", ",", "world", "!", "i", "'", "m", "here", "."]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn tokenizer_is_idempotent_on_joined_output() {
        let once = tokenize("A cheap-ish hotel, please?");
        assert_eq!(tokenize(&once.join(" ")), once);
    }

    #[test]
    fn stop_list_has_179_distinct_words() {
        assert_eq!(stop_words().len(), 179);
    }

    #[test]
    fn persona_keywords_with_custom_stop_set() {
        let stop: BTreeSet<&str> = ["i", "like"].into_iter().collect();
        let kw = persona_keywords(["i like red cars ."], &stop);
        assert_eq!(kw, ["cars", "red"].into_iter().map(String::from).collect());
    }

    #[test]
    fn persona_keywords_builtin_list() {
        let kw = persona_keywords(["I have two dogs and a cat ."], &stop_words());
        assert_eq!(kw, ["cat", "dogs", "two"].into_iter().map(String::from).collect());
    }

    #[test]
    fn value_normalization() {
        assert_eq!(normalize_value("  Cambridge   Town  "), "cambridge town");
    }
}
