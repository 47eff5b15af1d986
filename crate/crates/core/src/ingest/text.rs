//! Language-agnostic tokenisation, tagging and the characters-per-second metric.

use std::sync::LazyLock;

use regex::Regex;

use crate::datamodel::canonical::round_decimal;
use crate::datamodel::Tag;

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\p{P}$").unwrap());
static PUNCT_OR_SYMBOL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[\p{P}\p{S}]+$").unwrap());

fn is_punctuation(c: char) -> bool {
    let mut buf = [0u8; 4];
    PUNCTUATION.is_match(c.encode_utf8(&mut buf))
}

/// Splits on whitespace, then peels leading and trailing punctuation off each
/// chunk as one-character tokens. Inner punctuation (`c'hoarvezet`) stays.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in sentence.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let lead = chars.iter().take_while(|&&c| is_punctuation(c)).count();
        if lead == chars.len() {
            tokens.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trail = chars.iter().rev().take_while(|&&c| is_punctuation(c)).count();
        tokens.extend(chars[..lead].iter().map(|c| c.to_string()));
        tokens.push(chars[lead..chars.len() - trail].iter().collect());
        tokens.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
    }
    tokens
}

/// `PUNCT` for tokens made only of punctuation or symbols, `X` otherwise.
pub fn tag_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<Tag> {
    tokens
        .iter()
        .map(|t| {
            if PUNCT_OR_SYMBOL.is_match(t.as_ref()) {
                Tag::Punct
            } else {
                Tag::X
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("clip length must be positive, got {0}")]
pub struct NonPositiveLength(pub f64);

/// Unicode scalar values in `sentence` (spaces and punctuation included) per
/// second of audio, rounded half-even to four decimals.
pub fn chars_per_sec(sentence: &str, length: f64) -> Result<f64, NonPositiveLength> {
    if !(length.is_finite() && length > 0.0) {
        return Err(NonPositiveLength(length));
    }
    Ok(round_decimal(sentence.chars().count() as f64 / length))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn breton_question() {
        assert_eq!(toks("Gouzout a rit?"), ["Gouzout", "a", "rit", "?"]);
        assert_eq!(
            toks("Gouzout a rit ar pezh zo c'hoarvezet gantañ?"),
            ["Gouzout", "a", "rit", "ar", "pezh", "zo", "c'hoarvezet", "gantañ", "?"]
        );
    }

    #[test]
    fn edge_cases() {
        assert!(toks("").is_empty());
        assert!(toks("   \t ").is_empty());
        assert_eq!(toks("word"), ["word"]);
        assert_eq!(toks("«Bonjour», dit-il..."), ["«", "Bonjour", "»", ",", "dit-il", ".", ".", "."]);
        assert_eq!(toks("¿Qué?"), ["¿", "Qué", "?"]);
        assert_eq!(toks(" - "), ["-"]);
        assert_eq!(toks("5 $"), ["5", "$"]);
    }

    #[test]
    fn tags() {
        assert_eq!(tag_tokens(&["rit", "?"]), [Tag::X, Tag::Punct]);
        assert!(tag_tokens::<&str>(&[]).is_empty());
        assert_eq!(tag_tokens(&["c'hoarvezet"]), [Tag::X]);
        assert_eq!(tag_tokens(&["$", "...", "+", "3", "—"]), [Tag::Punct, Tag::Punct, Tag::Punct, Tag::X, Tag::Punct]);
    }

    #[test]
    fn metric() {
        let sentence: String = "abcdefghij".repeat(9) + "ab";
        assert_eq!(sentence.chars().count(), 92);
        assert_eq!(chars_per_sec(&sentence, 6.048).unwrap(), 15.2116);
        assert_eq!(chars_per_sec("", 3.0).unwrap(), 0.0);
        assert_eq!(chars_per_sec("ab", 1.0).unwrap(), 2.0);
        assert_eq!(chars_per_sec("jääb", 2.0).unwrap(), 2.0);
        assert!(chars_per_sec("ab", 0.0).is_err());
        assert!(chars_per_sec("ab", -1.0).is_err());
        assert!(chars_per_sec("ab", f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn tokens_keep_every_visible_char(s in "\\PC{0,40}") {
            let tokens = tokenize(&s);
            let joined: String = tokens.concat();
            let visible: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, visible);
            prop_assert!(tokens.iter().all(|t| !t.is_empty()));
            let tags = tag_tokens(&tokens);
            prop_assert_eq!(tags.len(), tokens.len());
            if s.chars().any(char::is_alphabetic) {
                prop_assert!(tags.contains(&Tag::X));
            }
        }
    }
}
