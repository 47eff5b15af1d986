//! The index hierarchy served to clients.
//!
//! ```text
//! RootIndex ── {lang} ─► LanguageEntry ─┬─ cids[i] ─► LanguageIndex ─► [ClipEntry]
//!                                       └─ meta ────► LanguageMeta  ─► models[] ─► ModelInfo
//! ClipEntry ─┬─ clip_cid ─────► MP3 bytes
//!            ├─ sentence_cid ─► Sentence
//!            └─ meta_cid ─────► SentenceMeta
//! ```
//!
//! `cids[i]` is difficulty bucket `i`, easiest first. Every object is encoded as
//! canonical JSON (see [`canonical`]) so equal values share a CID. Fields this
//! version does not know about are kept in `extra` and written back unchanged.

pub mod canonical;
mod merge;
mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cas::Cid;

pub use merge::merge_roots;
pub use tree::{store_tree, validate_tree, Issue, Staging, TreeError, ValidationReport};

/// Unrecognised fields, preserved across decode/encode.
pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed {kind}: {source}")]
    Json {
        kind: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid {kind}: {detail}")]
    Invariant { kind: &'static str, detail: String },
}

/// An object of the index hierarchy with a canonical byte encoding.
pub trait IndexObject: Serialize + DeserializeOwned {
    const KIND: &'static str;

    /// Checks the invariants that can be decided from the object alone.
    fn check(&self) -> Result<(), String>;
}

pub fn encode<T: IndexObject>(value: &T) -> Vec<u8> {
    let tree = serde_json::to_value(value).expect("index objects serialize");
    canonical::to_vec(&tree)
}

pub fn decode<T: IndexObject>(bytes: &[u8]) -> Result<T, DecodeError> {
    let value: T = serde_json::from_slice(bytes).map_err(|source| DecodeError::Json {
        kind: T::KIND,
        source,
    })?;
    value.check().map_err(|detail| DecodeError::Invariant {
        kind: T::KIND,
        detail,
    })?;
    Ok(value)
}

/// `[a-z]{2,3}(-[A-Za-z]{2,4})?`
pub fn is_language_code(code: &str) -> bool {
    let (base, region) = match code.split_once('-') {
        Some((b, r)) => (b, Some(r)),
        None => (code, None),
    };
    let base_ok = (2..=3).contains(&base.len()) && base.bytes().all(|b| b.is_ascii_lowercase());
    let region_ok = region.is_none_or(|r| {
        (2..=4).contains(&r.len()) && r.bytes().all(|b| b.is_ascii_alphabetic())
    });
    base_ok && region_ok
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RootIndex {
    pub entries: BTreeMap<String, LanguageEntry>,
}

impl RootIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, language: &str) -> Option<&LanguageEntry> {
        self.entries.get(language)
    }
}

impl IndexObject for RootIndex {
    const KIND: &'static str = "root index";

    fn check(&self) -> Result<(), String> {
        for (code, entry) in &self.entries {
            if !is_language_code(code) {
                return Err(format!("{code:?} is not an ISO-639 language code"));
            }
            if entry.cids.is_empty() {
                return Err(format!("language {code} lists no language indices"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageEntry {
    /// One language index per difficulty bucket, easiest first.
    pub cids: Vec<Cid>,
    pub meta: Cid,
    #[serde(flatten)]
    pub extra: Extra,
}

impl LanguageEntry {
    pub fn new(cids: Vec<Cid>, meta: Cid) -> Self {
        Self {
            cids,
            meta,
            extra: Extra::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LanguageMeta {
    /// Reverse keymap: a character and the strings a learner may type instead.
    #[serde(default)]
    pub alternatives: BTreeMap<char, Vec<String>>,
    pub display: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<Cid>>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl LanguageMeta {
    pub fn new(display: impl Into<String>) -> Self {
        Self {
            display: display.into(),
            ..Self::default()
        }
    }
}

impl IndexObject for LanguageMeta {
    const KIND: &'static str = "language metadata";

    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageIndex {
    pub clips: Vec<ClipEntry>,
}

impl IndexObject for LanguageIndex {
    const KIND: &'static str = "language index";

    fn check(&self) -> Result<(), String> {
        if self.clips.is_empty() {
            return Err("no clips".into());
        }
        self.clips.iter().try_for_each(ClipEntry::check)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    /// Characters of the transcript per second of audio.
    pub chars_sec: f64,
    pub clip_cid: Cid,
    /// Seconds.
    pub length: f64,
    pub sentence_cid: Cid,
    pub meta_cid: Cid,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ClipEntry {
    pub fn check(&self) -> Result<(), String> {
        if !(self.chars_sec.is_finite() && self.chars_sec >= 0.0) {
            return Err(format!("chars_sec {} must be ≥ 0", self.chars_sec));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(format!("length {} must be > 0", self.length));
        }
        Ok(())
    }

    /// `chars_sec × length` agrees with the transcript length up to rounding.
    pub fn consistent_with(&self, sentence: &Sentence) -> bool {
        let chars = sentence.content.chars().count() as f64;
        (self.chars_sec * self.length - chars).abs() < 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub content: String,
    /// SPDX licence identifier.
    pub copyright: String,
    pub language: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Sentence {
    pub fn new(
        content: impl Into<String>,
        copyright: impl Into<String>,
        language: impl Into<String>,
    ) -> Self {
        Self {
            content: content.into(),
            copyright: copyright.into(),
            language: language.into(),
            extra: Extra::new(),
        }
    }
}

impl IndexObject for Sentence {
    const KIND: &'static str = "sentence";

    fn check(&self) -> Result<(), String> {
        if self.content.trim().is_empty() {
            return Err("empty content".into());
        }
        if !is_language_code(&self.language) {
            return Err(format!("{:?} is not an ISO-639 language code", self.language));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    /// A word token; may be gapped.
    X,
    #[serde(rename = "PUNCT")]
    Punct,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::X => "X",
            Tag::Punct => "PUNCT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceMeta {
    pub sentence_cid: Cid,
    pub tags: Vec<Tag>,
    pub tokens: Vec<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl SentenceMeta {
    pub fn new(sentence_cid: Cid, tokens: Vec<String>, tags: Vec<Tag>) -> Self {
        Self {
            sentence_cid,
            tags,
            tokens,
            extra: Extra::new(),
        }
    }

    /// Tokens joined by single spaces, without a space before punctuation.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (token, tag)) in self.tokens.iter().zip(&self.tags).enumerate() {
            if i > 0 && *tag != Tag::Punct {
                out.push(' ');
            }
            out.push_str(token);
        }
        out
    }

    /// Whether the tokens reproduce `content` once whitespace is ignored.
    pub fn matches_content(&self, content: &str) -> bool {
        let joined: String = self.tokens.concat();
        joined
            .chars()
            .filter(|c| !c.is_whitespace())
            .eq(content.chars().filter(|c| !c.is_whitespace()))
    }
}

impl IndexObject for SentenceMeta {
    const KIND: &'static str = "sentence metadata";

    fn check(&self) -> Result<(), String> {
        if self.tokens.len() != self.tags.len() {
            return Err(format!(
                "{} tokens but {} tags",
                self.tokens.len(),
                self.tags.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    /// Toolkit the model was trained with, e.g. `coqui`.
    pub format: String,
    pub licence: String,
    pub model: Cid,
    pub src: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl IndexObject for ModelInfo {
    const KIND: &'static str = "model info";

    fn check(&self) -> Result<(), String> {
        if self.kind != "acoustic" {
            return Err(format!("unsupported model type {:?}", self.kind));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::compute_cid;
    use proptest::prelude::*;

    fn cid(s: &str) -> Cid {
        compute_cid(s.as_bytes())
    }

    #[test]
    fn estonian_sentence_round_trip() {
        let sentence = Sentence::new(
            "Tavaliselt ongi nii, et mesinik jääb oma surnud mesilastega ja mitte mingit lahendust ei tule.",
            "CC0-1.0",
            "et",
        );
        let bytes = encode(&sentence);
        assert_eq!(decode::<Sentence>(&bytes).unwrap(), sentence);
        assert!(String::from_utf8(bytes)
            .unwrap()
            .starts_with("{\"content\":\"Tavaliselt ongi nii,"));
    }

    #[test]
    fn wire_shapes() {
        let clip = ClipEntry {
            chars_sec: 15.2116,
            clip_cid: cid("mp3"),
            length: 6.048,
            sentence_cid: cid("s"),
            meta_cid: cid("m"),
            extra: Extra::new(),
        };
        let text = String::from_utf8(encode(&LanguageIndex { clips: vec![clip] })).unwrap();
        assert_eq!(
            text,
            format!(
                "[{{\"chars_sec\":15.2116,\"clip_cid\":\"{}\",\"length\":6.048,\"meta_cid\":\"{}\",\"sentence_cid\":\"{}\"}}]",
                cid("mp3"),
                cid("m"),
                cid("s")
            )
        );

        let mut meta = LanguageMeta::new("Türkçe");
        meta.alternatives.insert('İ', vec!["I".into()]);
        assert_eq!(
            String::from_utf8(encode(&meta)).unwrap(),
            "{\"alternatives\":{\"İ\":[\"I\"]},\"display\":\"Türkçe\"}"
        );

        let model = ModelInfo {
            format: "coqui".into(),
            licence: "AGPL-3.0".into(),
            model: cid("model"),
            src: "https://example.com/models/".into(),
            kind: "acoustic".into(),
            extra: Extra::new(),
        };
        let text = String::from_utf8(encode(&model)).unwrap();
        assert!(text.ends_with(",\"src\":\"https://example.com/models/\",\"type\":\"acoustic\"}"));
        assert_eq!(decode::<ModelInfo>(text.as_bytes()).unwrap(), model);
    }

    #[test]
    fn root_encoding_is_deterministic() {
        let mut a = RootIndex::new();
        a.entries
            .insert("pa-IN".into(), LanguageEntry::new(vec![cid("p")], cid("pm")));
        a.entries
            .insert("or".into(), LanguageEntry::new(vec![cid("o")], cid("om")));
        let mut b = RootIndex::new();
        b.entries
            .insert("or".into(), LanguageEntry::new(vec![cid("o")], cid("om")));
        b.entries
            .insert("pa-IN".into(), LanguageEntry::new(vec![cid("p")], cid("pm")));
        assert_eq!(encode(&a), encode(&a));
        assert_eq!(encode(&a), encode(&b));
    }

    #[test]
    fn rejects_tag_token_mismatch() {
        let json = format!(
            "{{\"sentence_cid\":\"{}\",\"tags\":[\"X\"],\"tokens\":[\"a\",\"b\"]}}",
            cid("s")
        );
        assert!(matches!(
            decode::<SentenceMeta>(json.as_bytes()),
            Err(DecodeError::Invariant { .. })
        ));
    }

    #[test]
    fn rejects_missing_and_mistyped_fields() {
        assert!(decode::<Sentence>(br#"{"content":"a","language":"et"}"#).is_err());
        assert!(decode::<Sentence>(br#"{"content":1,"copyright":"x","language":"et"}"#).is_err());
        assert!(decode::<Sentence>(br#"{"content":"","copyright":"x","language":"et"}"#).is_err());
        assert!(decode::<LanguageIndex>(b"[]").is_err());
        assert!(decode::<RootIndex>(br#"{"English":{"cids":[],"meta":"x"}}"#).is_err());
        let bad_alt = br#"{"alternatives":{"ab":["x"]},"display":"d"}"#;
        assert!(decode::<LanguageMeta>(bad_alt).is_err());
        let bad_tag = format!(
            "{{\"sentence_cid\":\"{}\",\"tags\":[\"NOUN\"],\"tokens\":[\"a\"]}}",
            cid("s")
        );
        assert!(decode::<SentenceMeta>(bad_tag.as_bytes()).is_err());
    }

    #[test]
    fn unknown_fields_survive() {
        let json = r#"{"content":"Demat","copyright":"CC0-1.0","language":"br","speaker":{"age":"twenties"}}"#;
        let sentence: Sentence = decode(json.as_bytes()).unwrap();
        assert_eq!(sentence.extra.len(), 1);
        assert_eq!(String::from_utf8(encode(&sentence)).unwrap(), json);
    }

    #[test]
    fn language_codes() {
        for ok in ["or", "pa-IN", "et", "cnh", "zh-Hant", "sr-latn"] {
            assert!(is_language_code(ok), "{ok}");
        }
        for bad in ["", "e", "english", "EN", "pa-", "pa-INDIA", "pa_IN", "pa-I1"] {
            assert!(!is_language_code(bad), "{bad}");
        }
    }

    #[test]
    fn render_sentence_meta() {
        let meta = SentenceMeta::new(
            cid("s"),
            vec!["Gouzout".into(), "a".into(), "rit".into(), "?".into()],
            vec![Tag::X, Tag::X, Tag::X, Tag::Punct],
        );
        assert_eq!(meta.render(), "Gouzout a rit?");
        assert!(meta.matches_content("Gouzout a rit ?"));
        assert!(!meta.matches_content("Gouzout a rit!"));
    }

    fn arb_cid() -> impl Strategy<Value = Cid> {
        any::<u32>().prop_map(|n| compute_cid(&n.to_le_bytes()))
    }

    fn arb_clip() -> impl Strategy<Value = ClipEntry> {
        (0u32..400_000, 1u32..200_000, arb_cid(), arb_cid(), arb_cid()).prop_map(
            |(cs, len, a, b, c)| ClipEntry {
                chars_sec: canonical::round_decimal(cs as f64 / 1e4),
                clip_cid: a,
                length: canonical::round_decimal(len as f64 / 1e3),
                sentence_cid: b,
                meta_cid: c,
                extra: Extra::new(),
            },
        )
    }

    proptest! {
        #[test]
        fn language_index_round_trip(clips in proptest::collection::vec(arb_clip(), 1..8)) {
            let index = LanguageIndex { clips };
            prop_assert_eq!(decode::<LanguageIndex>(&encode(&index)).unwrap(), index);
        }

        #[test]
        fn sentence_meta_round_trip(
            tokens in proptest::collection::vec("[a-zçñ'?.,]{1,6}", 0..10),
            punct in proptest::collection::vec(any::<bool>(), 10),
            s in arb_cid(),
        ) {
            let tags = tokens.iter().zip(&punct).map(|(_, p)| if *p { Tag::Punct } else { Tag::X }).collect();
            let meta = SentenceMeta::new(s, tokens, tags);
            prop_assert_eq!(decode::<SentenceMeta>(&encode(&meta)).unwrap(), meta);
        }

        #[test]
        fn meta_round_trip(
            display in "\\PC{1,12}",
            alts in proptest::collection::btree_map(any::<char>(), proptest::collection::vec("\\PC{0,3}", 0..3), 0..4),
            models in proptest::option::of(proptest::collection::vec(arb_cid(), 0..3)),
        ) {
            let meta = LanguageMeta { alternatives: alts, display, models, extra: Extra::new() };
            prop_assert_eq!(decode::<LanguageMeta>(&encode(&meta)).unwrap(), meta);
        }

        #[test]
        fn root_round_trip_and_order_independence(
            langs in proptest::collection::btree_map("[a-z]{2,3}(-[A-Z]{2})?", proptest::collection::vec(arb_cid(), 1..4), 0..6),
            meta in arb_cid(),
        ) {
            let pairs: Vec<_> = langs.into_iter().collect();
            let forward = RootIndex { entries: pairs.iter().cloned().map(|(k, v)| (k, LanguageEntry::new(v, meta.clone()))).collect() };
            let backward = RootIndex { entries: pairs.iter().rev().cloned().map(|(k, v)| (k, LanguageEntry::new(v, meta.clone()))).collect() };
            prop_assert_eq!(encode(&forward), encode(&backward));
            prop_assert_eq!(decode::<RootIndex>(&encode(&forward)).unwrap(), forward);
        }
    }
}
